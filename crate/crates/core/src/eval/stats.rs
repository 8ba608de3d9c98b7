use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Ranks `1..=n` with ties replaced by the mean of the ranks they span.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Benjamini-Hochberg step-up adjustment; output is in input order.
pub fn bh_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for (pos, &i) in order.iter().enumerate().rev() {
        let value = p[i] * m as f64 / (pos + 1) as f64;
        running = running.min(value);
        adjusted[i] = running.min(1.0);
    }
    adjusted
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnPair {
    pub a: usize,
    pub b: usize,
    pub z: f64,
    pub p_raw: f64,
    pub p_adj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DunnResult {
    pub rank_sums: Vec<f64>,
    pub mean_ranks: Vec<f64>,
    /// Pairs `(a, b)` with `a < b` in lexicographic order.
    pub pairs: Vec<DunnPair>,
}

/// Dunn's pairwise comparisons on pooled mid-ranks with tie correction,
/// followed by Benjamini-Hochberg adjustment across all pairs.
///
/// `z = (R_a - R_b) / sqrt((N(N+1)/12 - T/(12(N-1))) (1/n_a + 1/n_b))` where
/// `R` are mean ranks and `T = sum(t^3 - t)` over tie groups; p-values are
/// two-sided normal.
pub fn dunn_fdr(groups: &[Vec<f64>]) -> Result<DunnResult> {
    if groups.len() < 2 {
        return Err(Error::InvalidArgument("Dunn's test needs at least 2 groups".into()));
    }
    if let Some((k, g)) = groups.iter().enumerate().find(|(_, g)| g.len() < 2) {
        return Err(Error::InsufficientData(format!(
            "group {k} has {} samples, need at least 2",
            g.len()
        )));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("scores must be finite".into()));
    }
    let pooled: Vec<f64> = groups.iter().flatten().copied().collect();
    let ranks = midranks(&pooled);
    let n = pooled.len() as f64;

    let mut rank_sums = Vec::with_capacity(groups.len());
    let mut offset = 0;
    for g in groups {
        rank_sums.push(ranks[offset..offset + g.len()].iter().sum::<f64>());
        offset += g.len();
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().zip(groups).map(|(s, g)| s / g.len() as f64).collect();

    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut ties = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        ties += t * t * t - t;
        i = j;
    }
    let variance_unit = n * (n + 1.0) / 12.0 - ties / (12.0 * (n - 1.0));

    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut pairs = Vec::new();
    for a in 0..groups.len() {
        for b in a + 1..groups.len() {
            let se2 = variance_unit * (1.0 / groups[a].len() as f64 + 1.0 / groups[b].len() as f64);
            let diff = mean_ranks[a] - mean_ranks[b];
            let (z, p) = if se2 <= 0.0 {
                (0.0, 1.0)
            } else {
                let z = diff / se2.sqrt();
                (z, (2.0 * normal.cdf(-z.abs())).min(1.0))
            };
            pairs.push(DunnPair {
                a,
                b,
                z,
                p_raw: p,
                p_adj: 0.0,
            });
        }
    }
    let raw: Vec<f64> = pairs.iter().map(|p| p.p_raw).collect();
    for (pair, adj) in pairs.iter_mut().zip(bh_adjust(&raw)) {
        pair.p_adj = adj;
    }
    Ok(DunnResult {
        rank_sums,
        mean_ranks,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bh_hand_example() {
        let adj = bh_adjust(&[0.01, 0.02, 0.04]);
        let expect = [0.03, 0.03, 0.04];
        for (a, e) in adj.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15, "{adj:?}");
        }
        let shuffled = bh_adjust(&[0.04, 0.01, 0.02]);
        assert!((shuffled[0] - 0.04).abs() < 1e-15 && (shuffled[1] - 0.03).abs() < 1e-15);
    }

    #[test]
    fn midranks_with_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn identical_groups_give_unit_p() {
        let r = dunn_fdr(&[vec![0.2, 0.3, 0.4], vec![0.2, 0.3, 0.4]]).unwrap();
        assert_eq!(r.pairs[0].p_adj, 1.0);
        let flat = dunn_fdr(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]).unwrap();
        assert!(flat.pairs.iter().all(|p| p.p_raw == 1.0 && p.p_adj == 1.0));
    }

    #[test]
    fn separated_groups_rank_sums() {
        let r = dunn_fdr(&[
            vec![1.0, 2.0, 3.0],
            vec![101.0, 102.0, 103.0],
            vec![201.0, 202.0, 203.0],
        ])
        .unwrap();
        assert_eq!(r.rank_sums, vec![6.0, 15.0, 24.0]);
        let se = (9.0 * 10.0 / 12.0 * (2.0 / 3.0f64)).sqrt();
        assert!((r.pairs[0].z - (2.0 - 5.0) / se).abs() < 1e-12);
        assert!((r.pairs[1].z - (2.0 - 8.0) / se).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples() {
        assert!(dunn_fdr(&[vec![1.0, 2.0]]).is_err());
        assert!(dunn_fdr(&[vec![1.0], vec![2.0, 3.0]]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn bh_is_monotone_and_bounded(p in proptest::collection::vec(1e-6f64..1.0, 1..20)) {
            let adj = bh_adjust(&p);
            for i in 0..p.len() {
                proptest::prop_assert!(adj[i] > 0.0 && adj[i] <= 1.0);
                proptest::prop_assert!(adj[i] >= p[i] - 1e-15);
                for j in 0..p.len() {
                    if p[i] <= p[j] {
                        proptest::prop_assert!(adj[i] <= adj[j] + 1e-15);
                    }
                }
            }
        }
    }
}
