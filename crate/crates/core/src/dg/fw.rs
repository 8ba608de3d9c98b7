//! Softmax feature weighting: `x_hat = softmax(w) * x`, element-wise.

/// Numerically stable softmax (max subtracted before exponentiating).
pub fn softmax(w: &[f64]) -> Vec<f64> {
    let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = w.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn apply_fw(w: &[f64], x: &[f64]) -> Vec<f64> {
    assert_eq!(w.len(), x.len(), "feature-weight and input dimensions differ");
    weight_with(&softmax(w), x)
}

pub(crate) fn weight_with(soft: &[f64], x: &[f64]) -> Vec<f64> {
    soft.iter().zip(x).map(|(s, v)| s * v).collect()
}

/// Accumulates `dL/dw` into `grad_w` given `g = dL/dx_hat`:
/// `dL/dw_k = s_k (g_k x_k - sum_l s_l g_l x_l)`.
pub(crate) fn fw_backward(soft: &[f64], x: &[f64], g: &[f64], grad_w: &mut [f64]) {
    let mean: f64 = soft.iter().zip(x).zip(g).map(|((s, xv), gv)| s * gv * xv).sum();
    for (((gw, s), xv), gv) in grad_w.iter_mut().zip(soft).zip(x).zip(g) {
        *gw += s * (gv * xv - mean);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_weights_average() {
        let x: Vec<f64> = (0..60).map(|v| v as f64).collect();
        let out = apply_fw(&[0.0; 60], &x);
        for (o, v) in out.iter().zip(&x) {
            assert!((o - v / 60.0).abs() < 1e-15);
        }
    }

    #[test]
    fn two_feature_example() {
        let out = apply_fw(&[2f64.ln(), 0.0], &[3.0, 3.0]);
        assert!((out[0] - 2.0).abs() < 1e-14);
        assert!((out[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn saturated_weight_masks() {
        let mut w = vec![0.0; 5];
        w[2] = 1000.0;
        let out = apply_fw(&w, &[4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(out[2], 6.0);
        assert!(out.iter().enumerate().all(|(i, v)| i == 2 || *v == 0.0));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let w = [0.3, -1.2, 0.5, 2.0];
        let x = [1.5, -0.7, 3.0, 0.2];
        let g = [0.4, 1.1, -0.6, 2.5];
        let f = |w: &[f64]| -> f64 { apply_fw(w, &x).iter().zip(&g).map(|(a, b)| a * b).sum() };
        let mut grad = [0.0; 4];
        fw_backward(&softmax(&w), &x, &g, &mut grad);
        for k in 0..4 {
            let (mut wp, mut wm) = (w, w);
            wp[k] += 1e-6;
            wm[k] -= 1e-6;
            let fd = (f(&wp) - f(&wm)) / 2e-6;
            assert!((fd - grad[k]).abs() < 1e-8, "{k}: {fd} vs {}", grad[k]);
        }
    }

    proptest::proptest! {
        #[test]
        fn softmax_is_a_distribution(w in proptest::collection::vec(-50.0f64..50.0, 1..80)) {
            let s = softmax(&w);
            proptest::prop_assert!(s.iter().all(|&v| v > 0.0));
            proptest::prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
