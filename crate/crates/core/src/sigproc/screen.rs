use super::labels::percentile;

/// Flags features whose target-subject spread is disjoint from the pooled
/// source spread.
///
/// For each feature the target's 10th-90th percentile interval is compared
/// against the sources' interval widened by `k_iqr` times its own width on
/// both sides; the feature is flagged when the two do not overlap. Rows of
/// both matrices must share the same width.
pub fn screen_outlier_features(target: &[Vec<f64>], pooled_sources: &[Vec<f64>], k_iqr: f64) -> Vec<usize> {
    let (Some(first), false) = (target.first(), pooled_sources.is_empty()) else {
        return Vec::new();
    };
    if k_iqr.is_infinite() {
        return Vec::new();
    }
    let d = first.len();
    let mut flagged = Vec::new();
    let mut column = Vec::new();
    for l in 0..d {
        column.clear();
        column.extend(pooled_sources.iter().map(|r| r[l]));
        let (s10, s90) = deciles(&column);
        column.clear();
        column.extend(target.iter().map(|r| r[l]));
        let (t10, t90) = deciles(&column);
        let width = s90 - s10;
        let lo = s10 - k_iqr * width;
        let hi = s90 + k_iqr * width;
        if t90 < lo || t10 > hi {
            flagged.push(l);
        }
    }
    flagged
}

fn deciles(values: &[f64]) -> (f64, f64) {
    // non-empty by construction
    (
        percentile(values, 10.0).expect("non-empty"),
        percentile(values, 90.0).expect("non-empty"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn same_distribution_rarely_flagged() {
        let clean = (0..100u64)
            .filter(|&seed| {
                let src = gaussian_rows(500, 60, 2 * seed);
                let tgt = gaussian_rows(100, 60, 2 * seed + 1);
                screen_outlier_features(&tgt, &src, 1.0).is_empty()
            })
            .count();
        assert!(clean >= 99, "{clean}/100 clean");
    }

    #[test]
    fn shifted_feature_flagged() {
        let src = gaussian_rows(500, 10, 1);
        let mut tgt = gaussian_rows(100, 10, 2);
        for row in &mut tgt {
            row[7] += 100.0;
        }
        assert_eq!(screen_outlier_features(&tgt, &src, 1.0), vec![7]);
        assert!(screen_outlier_features(&tgt, &src, f64::INFINITY).is_empty());
    }
}
