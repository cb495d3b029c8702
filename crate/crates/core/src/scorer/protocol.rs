//! JSON bodies of the scoring wire protocol.
//!
//! ```text
//! POST /v1/tokenize  {"text"}                     -> {"tokens"}
//! POST /v1/score     {"prefix", "continuation"}   -> {"tokens", "token_logprobs"}
//! GET  /v1/info                                   -> {"model_id", "tokenizer_id"}
//! POST /v1/generate  {"prompt", "max_new_tokens"} -> {"text"}
//! ```

use serde::{Deserialize, Serialize};

pub const TOKENIZE_PATH: &str = "/v1/tokenize";
pub const SCORE_PATH: &str = "/v1/score";
pub const INFO_PATH: &str = "/v1/info";
pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeReply {
    pub tokens: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBody {
    pub prefix: String,
    pub continuation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReply {
    pub tokens: Vec<u32>,
    pub token_logprobs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfoReply {
    pub model_id: String,
    pub tokenizer_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateBody {
    pub prompt: String,
    pub max_new_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReply {
    pub text: String,
}
