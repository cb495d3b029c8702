/// Diagonal regularization added before computing log-determinant gains.
pub const KERNEL_JITTER: f64 = 1e-9;

/// Result of a greedy MAP run.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySelection {
    /// Selected item indices in pick order.
    pub picks: Vec<usize>,
    /// `log det(L_S∪{j}) - log det(L_S)` at each pick.
    pub gains: Vec<f64>,
}

/// Greedy MAP inference for a DPP with kernel `kernel(i, j)` over `n` items.
///
/// Uses incremental Cholesky updates: `d2[i]` holds the Schur complement of
/// item `i` against the current selection, so the log-det gain of adding `i`
/// is `ln d2[i]`. `order` lists all items in tie-break priority; among equal
/// gains the item appearing first in `order` wins.
pub fn greedy_map<K>(n: usize, kernel: K, k: usize, order: &[usize]) -> GreedySelection
where
    K: Fn(usize, usize) -> f64,
{
    debug_assert_eq!(order.len(), n);
    let k = k.min(n);
    let mut d2: Vec<f64> = (0..n).map(|i| kernel(i, i) + KERNEL_JITTER).collect();
    let mut chol: Vec<Vec<f64>> = vec![Vec::with_capacity(k); n];
    let mut selected = vec![false; n];
    let mut picks = Vec::with_capacity(k);
    let mut gains = Vec::with_capacity(k);

    for _ in 0..k {
        let mut best: Option<usize> = None;
        for &i in order {
            if selected[i] {
                continue;
            }
            if best.map_or(true, |b| d2[i] > d2[b]) {
                best = Some(i);
            }
        }
        let Some(j) = best else { break };
        let dj = d2[j].max(f64::MIN_POSITIVE);
        picks.push(j);
        gains.push(dj.ln());
        selected[j] = true;

        let sqrt_dj = dj.sqrt();
        let cj = chol[j].clone();
        for i in 0..n {
            if selected[i] {
                continue;
            }
            let dot: f64 = cj.iter().zip(&chol[i]).map(|(a, b)| a * b).sum();
            let e = (kernel(j, i) - dot) / sqrt_dj;
            chol[i].push(e);
            d2[i] -= e * e;
        }
    }
    GreedySelection { picks, gains }
}
