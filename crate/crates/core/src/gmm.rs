//! Two-component 1-D Gaussian mixture fitted by EM, used to split
//! cleanliness scores into a clean and a noisy population.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{ScoredSample, Verdict};

pub const VARIANCE_FLOOR: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GmmError {
    #[error("need at least 4 scores, got {0}")]
    TooFewScores(usize),
    #[error("score at index {0} is not finite")]
    NonFinite(usize),
    #[error("all scores are identical; a two-component mixture is undefined")]
    DegenerateData,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub variance_floor: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self { max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL, variance_floor: VARIANCE_FLOOR }
    }
}

/// Fitted mixture. Serializes to
/// `{weights, means, variances, noisy_index, log_likelihood, iterations, converged}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variances: [f64; 2],
    /// Component with the lower mean score.
    pub noisy_index: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Params {
    weights: [f64; 2],
    means: [f64; 2],
    variances: [f64; 2],
}

fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (TAU * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

fn log_joint(p: &Params, x: f64) -> [f64; 2] {
    [
        p.weights[0].ln() + log_normal_pdf(x, p.means[0], p.variances[0]),
        p.weights[1].ln() + log_normal_pdf(x, p.means[1], p.variances[1]),
    ]
}

fn log_sum_exp(a: [f64; 2]) -> f64 {
    let m = a[0].max(a[1]);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a[0] - m).exp() + (a[1] - m).exp()).ln()
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl GmmModel {
    fn params(&self) -> Params {
        Params { weights: self.weights, means: self.means, variances: self.variances }
    }

    pub fn clean_index(&self) -> usize {
        1 - self.noisy_index
    }

    /// Responsibilities of both components at `score`; they sum to one.
    pub fn responsibilities(&self, score: f64) -> [f64; 2] {
        let a = log_joint(&self.params(), score);
        let lse = log_sum_exp(a);
        let r0 = (a[0] - lse).exp();
        [r0, 1.0 - r0]
    }

    pub fn log_likelihood_of(&self, scores: &[f64]) -> f64 {
        let p = self.params();
        scores.iter().map(|&x| log_sum_exp(log_joint(&p, x))).sum()
    }
}

/// Posterior probability that `score` came from the noisy component.
pub fn posterior_noisy(model: &GmmModel, score: f64) -> f64 {
    model.responsibilities(score)[model.noisy_index].clamp(0.0, 1.0)
}

/// Fits with default options. `seed` is accepted for interface stability;
/// the quantile initialization is deterministic and does not consume it.
pub fn fit_gmm(scores: &[f64], max_iter: usize, tol: f64, seed: u64) -> Result<GmmModel, GmmError> {
    let _ = seed;
    let opts = GmmOptions { max_iter, tol, ..GmmOptions::default() };
    fit_gmm_traced(scores, &opts).map(|(m, _)| m)
}

/// Fits the mixture and also returns the log-likelihood after every E-step.
pub fn fit_gmm_traced(scores: &[f64], opts: &GmmOptions) -> Result<(GmmModel, Vec<f64>), GmmError> {
    if scores.len() < 4 {
        return Err(GmmError::TooFewScores(scores.len()));
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(GmmError::NonFinite(i));
    }
    // sorting makes every accumulation order-independent of the input order
    let mut xs = scores.to_vec();
    xs.sort_by(f64::total_cmp);
    if xs[0] == xs[xs.len() - 1] {
        return Err(GmmError::DegenerateData);
    }

    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(opts.variance_floor);
    let (mut lo, mut hi) = (quantile(&xs, 0.25), quantile(&xs, 0.75));
    if lo == hi {
        lo = xs[0];
        hi = xs[xs.len() - 1];
    }
    let mut p = Params { weights: [0.5, 0.5], means: [lo, hi], variances: [var, var] };

    let mut trace: Vec<f64> = Vec::new();
    let mut resp = vec![[0.0f64; 2]; xs.len()];
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let mut ll: f64 = 0.0;
        for (x, r) in xs.iter().zip(resp.iter_mut()) {
            let a = log_joint(&p, *x);
            let lse = log_sum_exp(a);
            ll += lse;
            let r0 = (a[0] - lse).exp();
            *r = [r0, 1.0 - r0];
        }
        if let Some(&prev) = trace.last() {
            if (ll - prev).abs() < opts.tol {
                trace.push(ll);
                converged = true;
                break;
            }
        }
        trace.push(ll);
        if iterations >= opts.max_iter {
            break;
        }

        for k in 0..2 {
            let nk: f64 = resp.iter().map(|r| r[k]).sum();
            if nk <= f64::MIN_POSITIVE {
                // empty component: keep its location, give it the smallest legal weight
                p.weights[k] = f64::MIN_POSITIVE;
                continue;
            }
            let mk = xs.iter().zip(&resp).map(|(x, r)| r[k] * x).sum::<f64>() / nk;
            let vk = xs.iter().zip(&resp).map(|(x, r)| r[k] * (x - mk).powi(2)).sum::<f64>() / nk;
            p.weights[k] = nk / n;
            p.means[k] = mk;
            p.variances[k] = vk.max(opts.variance_floor);
        }
        let total = p.weights[0] + p.weights[1];
        p.weights = [p.weights[0] / total, 1.0 - p.weights[0] / total];
        iterations += 1;
    }

    let noisy_index = if p.means[1] < p.means[0] { 1 } else { 0 };
    let model = GmmModel {
        weights: p.weights,
        means: p.means,
        variances: p.variances,
        noisy_index,
        log_likelihood: *trace.last().expect("at least one E-step"),
        iterations,
        converged,
    };
    Ok((model, trace))
}

/// Indices of the clean and noisy parts, each in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub clean: Vec<usize>,
    pub noisy: Vec<usize>,
}

/// Fills `posterior_noisy` and `verdict` on every sample.
pub fn apply_model(model: &GmmModel, scored: &mut [ScoredSample], gamma: f64) {
    for s in scored.iter_mut() {
        s.posterior_noisy = posterior_noisy(model, s.cleanliness);
        s.verdict = if s.posterior_noisy > gamma { Verdict::Noisy } else { Verdict::Clean };
    }
}

/// A sample is noisy iff its posterior strictly exceeds `gamma`.
pub fn partition(scored: &[ScoredSample], gamma: f64) -> Partition {
    let mut out = Partition::default();
    for (i, s) in scored.iter().enumerate() {
        if s.posterior_noisy > gamma {
            out.noisy.push(i);
        } else {
            out.clean.push(i);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sample(n: usize, w0: f64, m: [f64; 2], sd: f64, seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = usize::from(rng.gen::<f64>() >= w0);
            xs.push(Normal::new(m[k], sd).unwrap().sample(&mut rng));
            labels.push(k);
        }
        (xs, labels)
    }

    #[test]
    fn recovers_balanced_mixture() {
        let (xs, labels) = sample(1000, 0.5, [1.0, 2.0], 0.05, 11);
        // oracle: statistics of the known assignment
        let oracle_mean = |k| {
            let v: Vec<f64> = xs.iter().zip(&labels).filter(|(_, &l)| l == k).map(|(x, _)| *x).collect();
            (v.iter().sum::<f64>() / v.len() as f64, v.len() as f64 / xs.len() as f64)
        };
        let m = fit_gmm(&xs, DEFAULT_MAX_ITER, DEFAULT_TOL, 0).unwrap();
        let (c, n) = (m.clean_index(), m.noisy_index);
        let (m0, w0) = oracle_mean(0);
        let (m1, w1) = oracle_mean(1);
        assert!((m.means[n] - m0).abs() < 0.02 && (m.means[n] - 1.0).abs() < 0.02);
        assert!((m.means[c] - m1).abs() < 0.02 && (m.means[c] - 2.0).abs() < 0.02);
        assert!((m.weights[n] - w0).abs() < 0.03 && (m.weights[c] - w1).abs() < 0.03);
        assert!((m.weights[n] - 0.5).abs() < 0.03);
        assert!(m.converged);
    }

    #[test]
    fn perfectly_separated_clusters() {
        let m = fit_gmm(&[0.0, 0.0, 0.0, 10.0, 10.0, 10.0], 200, 1e-8, 0).unwrap();
        let (n, c) = (m.noisy_index, m.clean_index());
        assert!(m.means[n].abs() < 1e-6);
        assert!((m.means[c] - 10.0).abs() < 1e-6);
        assert!((m.weights[0] - 0.5).abs() < 1e-9);
        assert_eq!(m.variances, [VARIANCE_FLOOR, VARIANCE_FLOOR]);
    }

    #[test]
    fn order_invariant() {
        let (mut xs, _) = sample(300, 0.3, [0.5, 1.5], 0.2, 4);
        let a = fit_gmm(&xs, 200, 1e-8, 0).unwrap();
        xs.reverse();
        xs.swap(3, 77);
        let b = fit_gmm(&xs, 200, 1e-8, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_validation() {
        assert_eq!(fit_gmm(&[1.0, 2.0, 3.0], 10, 1e-8, 0), Err(GmmError::TooFewScores(3)));
        assert_eq!(fit_gmm(&[2.0; 8], 10, 1e-8, 0), Err(GmmError::DegenerateData));
        assert_eq!(fit_gmm(&[1.0, f64::NAN, 2.0, 3.0], 10, 1e-8, 0), Err(GmmError::NonFinite(1)));
    }

    #[test]
    fn heavy_ties_still_split() {
        let m = fit_gmm(&[0.0, 0.0, 0.0, 0.0, 0.0, 10.0], 200, 1e-8, 0).unwrap();
        assert!((m.means[m.noisy_index]).abs() < 1e-6);
        assert!((m.means[m.clean_index()] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn unconverged_is_reported_not_error() {
        let (xs, _) = sample(200, 0.5, [1.0, 1.3], 0.2, 8);
        let m = fit_gmm(&xs, 1, 1e-300, 0).unwrap();
        assert!(!m.converged);
        assert_eq!(m.iterations, 1);
    }

    fn symmetric() -> GmmModel {
        GmmModel {
            weights: [0.5, 0.5],
            means: [1.0, 3.0],
            variances: [0.25, 0.25],
            noisy_index: 0,
            log_likelihood: 0.0,
            iterations: 0,
            converged: true,
        }
    }

    #[test]
    fn posterior_examples() {
        let m = symmetric();
        assert!((posterior_noisy(&m, 2.0) - 0.5).abs() < 1e-12);
        assert!(posterior_noisy(&m, 1.0) > 0.99);
        let mut prev = posterior_noisy(&m, 3.0);
        for step in 1..200 {
            let q = posterior_noisy(&m, 3.0 + step as f64 * 0.05);
            assert!(q <= prev);
            prev = q;
        }
        assert!(prev < 1e-12);
    }

    fn scored(q: &[f64]) -> Vec<ScoredSample> {
        q.iter()
            .enumerate()
            .map(|(i, &p)| {
                let mut s = ScoredSample::compute(format!("s{i}"), 1.0, 1.0, &[1.0]).unwrap();
                s.posterior_noisy = p;
                s
            })
            .collect()
    }

    #[test]
    fn partition_rules() {
        let s = scored(&[0.9, 0.1, 0.5]);
        assert_eq!(partition(&s, 0.5), Partition { clean: vec![1, 2], noisy: vec![0] });
        assert_eq!(partition(&s, 1.0).noisy, Vec::<usize>::new());
        let s = scored(&[0.0, 0.3, 1.0, 0.0]);
        assert_eq!(partition(&s, 0.0).noisy, vec![1, 2]);
    }

    #[test]
    fn model_json_shape() {
        let v = serde_json::to_value(symmetric()).unwrap();
        for key in ["weights", "means", "variances", "noisy_index", "log_likelihood", "iterations", "converged"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn log_likelihood_is_monotone(
            xs in proptest::collection::vec(-50.0f64..50.0, 4..120),
        ) {
            prop_assume!(xs.iter().any(|&x| x != xs[0]));
            let (_, trace) = fit_gmm_traced(&xs, &GmmOptions::default()).unwrap();
            for w in trace.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }

        #[test]
        fn responsibilities_sum_to_one(x in -100.0f64..100.0, m0 in -5.0f64..5.0, v in 0.01f64..4.0) {
            let mut m = symmetric();
            m.means[0] = m0;
            m.variances[1] = v;
            let r = m.responsibilities(x);
            prop_assert!((r[0] + r[1] - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn shift_scale_equivariance(a in 0.2f64..5.0, b in -10.0f64..10.0, seed in 0u64..1000) {
            let (xs, _) = sample(200, 0.4, [1.0, 2.0], 0.15, seed);
            let ys: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let m = fit_gmm(&xs, 200, 1e-8, 0).unwrap();
            let n = fit_gmm(&ys, 200, 1e-8, 0).unwrap();
            for k in 0..2 {
                prop_assert!((n.means[k] - (a * m.means[k] + b)).abs() < 1e-6 * (1.0 + n.means[k].abs()));
                prop_assert!((n.variances[k] - a * a * m.variances[k]).abs() < 1e-6 * (1.0 + n.variances[k]));
                prop_assert!((n.weights[k] - m.weights[k]).abs() < 1e-6);
            }
            for gamma in [0.1, 0.3, 0.5, 0.7, 0.9] {
                for (x, y) in xs.iter().zip(&ys) {
                    let (qx, qy) = (posterior_noisy(&m, *x), posterior_noisy(&n, *y));
                    if (qx - gamma).abs() > 1e-6 {
                        prop_assert_eq!(qx > gamma, qy > gamma);
                    }
                }
            }
        }
    }
}
