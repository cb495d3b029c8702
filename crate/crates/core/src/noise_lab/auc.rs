/// Tie-aware ROC AUC via the Mann-Whitney rank-sum, `O(n log n)`.
///
/// `positive[i]` marks the class that higher scores should indicate. Tied
/// scores receive their mid-rank, which credits each tied positive/negative
/// pair with one half. Returns `None` when either class is empty.
///
/// Ranks are accumulated doubled, as integers, so the result is the exact
/// ratio `U / (n_pos · n_neg)` rounded once.
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positive.len(), "scores and labels must align");
    let n_pos = positive.iter().filter(|&&p| p).count() as u128;
    let n_neg = positive.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }

    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // sum over positives of 2 * midrank, ranks 1-based
    let mut rank_sum2: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]].total_cmp(&scores[idx[start]]).is_eq() {
            end += 1;
        }
        // ranks start+1 ..= end, midrank doubled = start + 1 + end
        let mid2 = (start + 1 + end) as u128;
        let pos_in_group = idx[start..end].iter().filter(|&&i| positive[i]).count() as u128;
        rank_sum2 += mid2 * pos_in_group;
        start = end;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Some(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// `O(n_pos · n_neg)` pairwise definition, used as an oracle.
pub fn auc_pairwise(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| p).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(positive).filter(|(_, &p)| !p).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut wins2: u128 = 0;
    for p in &pos {
        for n in &neg {
            wins2 += match p.total_cmp(n) {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    Some(wins2 as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64)
}
