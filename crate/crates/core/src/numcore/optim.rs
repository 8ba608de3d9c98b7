use crate::error::{Error, Result};

/// A model viewed as an ordered list of flat parameter tensors.
///
/// The `bool` returned alongside each tensor says whether weight decay
/// applies to it. A gradient for a model has the same type as the model.
pub trait Parameters {
    fn tensors(&self) -> Vec<(&[f64], bool)>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(t, _)| t.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(t, _)| t.iter().all(|v| v.is_finite()))
    }

    /// Bit patterns of every parameter, in tensor order.
    fn fingerprint(&self) -> Vec<u64> {
        self.tensors()
            .iter()
            .flat_map(|(t, _)| t.iter().map(|v| v.to_bits()))
            .collect()
    }
}

/// Momentum SGD hyper-parameters plus the velocity buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl OptState {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr >= 0.0 && lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be >= 0")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum {momentum} must lie in [0, 1)"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "weight decay {weight_decay} must be >= 0"
            )));
        }
        Ok(Self {
            lr,
            momentum,
            weight_decay,
            velocity: Vec::new(),
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn with_velocity(mut self, velocity: Vec<Vec<f64>>) -> Self {
        self.velocity = velocity;
        self
    }
}

/// One momentum step:
/// `v <- momentum * v + (g + decay * p)`, `p <- p - lr * v`.
///
/// Decay is skipped for tensors the model marks as undecayed. A non-finite
/// gradient aborts before anything is modified.
pub fn sgd_step<P: Parameters>(params: &mut P, grads: &P, state: &mut OptState) -> Result<()> {
    let grad_tensors = grads.tensors();
    for (k, (g, _)) in grad_tensors.iter().enumerate() {
        if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient in tensor {k} at element {pos}: {}",
                g[pos]
            )));
        }
    }
    let decay_flags: Vec<bool> = params.tensors().iter().map(|(_, d)| *d).collect();
    let mut param_tensors = params.tensors_mut();
    if param_tensors.len() != grad_tensors.len() {
        return Err(Error::Shape(format!(
            "{} parameter tensors but {} gradient tensors",
            param_tensors.len(),
            grad_tensors.len()
        )));
    }
    if state.velocity.is_empty() {
        state.velocity = grad_tensors.iter().map(|(g, _)| vec![0.0; g.len()]).collect();
    }
    for (k, ((p, (g, _)), v)) in param_tensors
        .iter_mut()
        .zip(&grad_tensors)
        .zip(&state.velocity)
        .enumerate()
    {
        if p.len() != g.len() || v.len() != g.len() {
            return Err(Error::Shape(format!("tensor {k} size mismatch")));
        }
    }

    let (lr, mu, wd) = (state.lr, state.momentum, state.weight_decay);
    for ((p, (g, _)), (v, decay)) in param_tensors
        .iter_mut()
        .zip(&grad_tensors)
        .zip(state.velocity.iter_mut().zip(decay_flags))
    {
        let wd = if decay { wd } else { 0.0 };
        for ((pi, &gi), vi) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *vi = mu * *vi + (gi + wd * *pi);
            *pi -= lr * *vi;
        }
    }
    Ok(())
}

/// Element-wise clamp to `[lo, hi]`.
pub fn clip_elems(grad: &mut [f64], lo: f64, hi: f64) {
    assert!(lo < hi, "clip range [{lo}, {hi}] is empty");
    for g in grad {
        *g = g.clamp(lo, hi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Debug, PartialEq)]
    struct Flat(Vec<f64>, bool);

    impl Parameters for Flat {
        fn tensors(&self) -> Vec<(&[f64], bool)> {
            vec![(&self.0, self.1)]
        }
        fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Flat(vec![1.0, -2.0], true);
        let mut st = OptState::new(0.1, 0.9, 0.0).unwrap();
        sgd_step(&mut p, &Flat(vec![0.0, 0.0], true), &mut st).unwrap();
        assert_eq!(p.0, vec![1.0, -2.0]);
    }

    #[test]
    fn plain_gradient_descent_without_momentum() {
        let mut p = Flat(vec![1.0, -2.0], true);
        let mut st = OptState::new(0.5, 0.0, 0.0).unwrap();
        sgd_step(&mut p, &Flat(vec![1.0, 4.0], true), &mut st).unwrap();
        assert_eq!(p.0, vec![0.5, -4.0]);
    }

    #[test]
    fn momentum_step_by_hand() {
        let mut p = Flat(vec![1.0], true);
        let mut st = OptState::new(0.1, 0.9, 0.0).unwrap().with_velocity(vec![vec![1.0]]);
        sgd_step(&mut p, &Flat(vec![1.0], true), &mut st).unwrap();
        assert!((st.velocity()[0][0] - 1.9).abs() < 1e-15);
        assert!((p.0[0] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn decay_respects_tensor_flag() {
        let mut decayed = Flat(vec![1.0], true);
        let mut plain = Flat(vec![1.0], false);
        let mut s1 = OptState::new(0.1, 0.0, 0.5).unwrap();
        let mut s2 = s1.clone();
        sgd_step(&mut decayed, &Flat(vec![0.0], true), &mut s1).unwrap();
        sgd_step(&mut plain, &Flat(vec![0.0], false), &mut s2).unwrap();
        assert!((decayed.0[0] - 0.95).abs() < 1e-15);
        assert_eq!(plain.0[0], 1.0);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = Flat(vec![0.3, 0.7], true);
        let mut st = OptState::new(0.0, 0.9, 1e-3).unwrap();
        for _ in 0..5 {
            sgd_step(&mut p, &Flat(vec![10.0, -3.0], true), &mut st).unwrap();
        }
        assert_eq!(p.0, vec![0.3, 0.7]);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut p = Flat(vec![1.0], true);
        let mut st = OptState::new(0.1, 0.9, 0.0).unwrap();
        let err = sgd_step(&mut p, &Flat(vec![f64::NAN], true), &mut st).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)));
        assert_eq!(p.0, vec![1.0]);
    }

    #[test]
    fn invalid_hyper_parameters() {
        assert!(OptState::new(-1.0, 0.9, 0.0).is_err());
        assert!(OptState::new(0.1, 1.0, 0.0).is_err());
        assert!(OptState::new(0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn clip_examples() {
        let mut g = vec![0.5, 1e6, -11.5, -10.0];
        clip_elems(&mut g, -10.0, 10.0);
        assert_eq!(g, vec![0.5, 10.0, -10.0, -10.0]);
    }

    proptest::proptest! {
        #[test]
        fn clip_is_idempotent_and_monotone(
            mut a in proptest::collection::vec(-1e3f64..1e3, 1..20),
            shift in 0.0f64..50.0,
        ) {
            let mut b: Vec<f64> = a.iter().map(|v| v + shift).collect();
            clip_elems(&mut a, -10.0, 10.0);
            let once = a.clone();
            clip_elems(&mut a, -10.0, 10.0);
            proptest::prop_assert_eq!(&once, &a);
            clip_elems(&mut b, -10.0, 10.0);
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!(x <= y);
            }
        }
    }
}
