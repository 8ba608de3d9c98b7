use super::fw::{fw_backward, softmax, weight_with};
use super::model::{DomainModel, SharedModel};
use super::{Regularizer, TrainConfig};
use crate::error::{Error, Result};
use crate::numcore::{clip_elems, Network, Parameters};
use crate::sigproc::TrialTable;

/// Mini-batch drawn from one source subject.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    /// Position of the source subject in the training set.
    pub domain: usize,
    pub x: Vec<&'a [f64]>,
    pub y: Vec<f64>,
}

impl<'a> Batch<'a> {
    pub fn new(domain: usize, x: Vec<&'a [f64]>, y: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::InsufficientData("empty batch".into()));
        }
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", x.len(), y.len())));
        }
        Ok(Self { domain, x, y })
    }

    pub fn from_indices(domain: usize, table: &'a TrialTable, indices: &[usize]) -> Self {
        Self {
            domain,
            x: indices.iter().map(|&i| table.features[i].as_slice()).collect(),
            y: indices.iter().map(|&i| table.labels[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Frozen partners for one shared update: the domain model of subject `j`
/// and, for the epir term, a random regressor.
#[derive(Debug, Clone, Copy)]
pub struct Episode<'a> {
    pub frozen: &'a DomainModel,
    pub random_psi: Option<&'a Network>,
}

/// Unweighted values of each term of the episodic loss.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub agg: f64,
    pub ft: f64,
    pub epic: f64,
    pub epir: f64,
}

#[derive(Debug, Clone)]
pub struct EtGradients {
    /// Weighted total loss.
    pub loss: f64,
    pub parts: LossParts,
    /// Gradient of the total loss with the clipped episodic parts applied.
    pub grads: SharedModel,
    /// Batch-mean gradient of the feature-transfer term w.r.t. the feature
    /// transform, after clipping and before scaling by lambda.
    pub ft_theta: Option<Network>,
    /// Same for the random-regressor term.
    pub epir_theta: Option<Network>,
}

fn check_batch(model: &SharedModel, batch: &Batch) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    if batch.x.len() != batch.y.len() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            batch.x.len(),
            batch.y.len()
        )));
    }
    for x in &batch.x {
        model.check_input(x)?;
    }
    Ok(())
}

fn check_pair(frozen: &DomainModel, batch: &Batch, model: &SharedModel) -> Result<()> {
    if frozen.domain == batch.domain {
        return Err(Error::InvalidPairing(batch.domain));
    }
    if frozen.model.theta.output_dim() != model.theta.output_dim() {
        return Err(Error::Shape(
            "domain model architecture differs from the shared model".into(),
        ));
    }
    Ok(())
}

fn mean_sq<F: Fn(&[f64]) -> f64>(batch: &Batch, predict: F) -> f64 {
    let total: f64 = batch
        .x
        .iter()
        .zip(&batch.y)
        .map(|(x, y)| {
            let r = predict(x) - y;
            r * r
        })
        .sum();
    total / batch.len() as f64
}

/// `mean (y - psi(theta(x_hat)))^2` on the batch.
pub fn loss_agg(model: &SharedModel, batch: &Batch) -> Result<f64> {
    check_batch(model, batch)?;
    Ok(mean_sq(batch, |x| {
        let h = model.theta.predict_unchecked(&model.weighted_input(x));
        model.psi.predict_unchecked(&h)[0]
    }))
}

/// Shared feature transform scored by the frozen regressor of another
/// subject.
pub fn loss_ft(shared: &SharedModel, frozen: &DomainModel, batch: &Batch) -> Result<f64> {
    check_batch(shared, batch)?;
    check_pair(frozen, batch, shared)?;
    Ok(mean_sq(batch, |x| {
        let h = shared.theta.predict_unchecked(&shared.weighted_input(x));
        frozen.model.psi.predict_unchecked(&h)[0]
    }))
}

/// Shared regressor applied to the frozen feature transform (and feature
/// weights) of another subject.
pub fn loss_epic(shared: &SharedModel, frozen: &DomainModel, batch: &Batch) -> Result<f64> {
    check_batch(shared, batch)?;
    check_pair(frozen, batch, shared)?;
    Ok(mean_sq(batch, |x| {
        let h = frozen.model.theta.predict_unchecked(&frozen.model.weighted_input(x));
        shared.psi.predict_unchecked(&h)[0]
    }))
}

/// Shared feature transform scored by a random, never-trained regressor.
pub fn loss_epir(shared: &SharedModel, random_psi: &Network, batch: &Batch) -> Result<f64> {
    check_batch(shared, batch)?;
    if random_psi.input_dim() != shared.theta.output_dim() || random_psi.output_dim() != 1 {
        return Err(Error::Shape(
            "random regressor does not fit the feature transform".into(),
        ));
    }
    Ok(mean_sq(batch, |x| {
        let h = shared.theta.predict_unchecked(&shared.weighted_input(x));
        random_psi.predict_unchecked(&h)[0]
    }))
}

/// Weighted episodic loss: `agg + lambda * ft` plus the enabled epic and
/// epir terms.
pub fn loss_et(shared: &SharedModel, episode: &Episode, batch: &Batch, cfg: &TrainConfig) -> Result<f64> {
    let (weights, random_psi) = term_weights(episode, cfg)?;
    let mut total = loss_agg(shared, batch)?;
    check_pair(episode.frozen, batch, shared)?;
    if weights.ft != 0.0 {
        total += weights.ft * loss_ft(shared, episode.frozen, batch)?;
    }
    if weights.epic != 0.0 {
        total += weights.epic * loss_epic(shared, episode.frozen, batch)?;
    }
    if weights.epir != 0.0 {
        total += weights.epir * loss_epir(shared, random_psi.expect("checked"), batch)?;
    }
    Ok(total)
}

fn term_weights<'a>(episode: &Episode<'a>, cfg: &TrainConfig) -> Result<(LossParts, Option<&'a Network>)> {
    let epic = if cfg.uses(Regularizer::Epic) {
        cfg.epic_weight
    } else {
        0.0
    };
    let epir = if cfg.uses(Regularizer::Epir) {
        cfg.epir_weight
    } else {
        0.0
    };
    if epir != 0.0 && episode.random_psi.is_none() {
        return Err(Error::Configuration(
            "epir is enabled but no random regressor was supplied".into(),
        ));
    }
    Ok((
        LossParts {
            agg: 1.0,
            ft: cfg.lambda,
            epic,
            epir,
        },
        episode.random_psi,
    ))
}

/// Accumulates all enabled terms in one pass over the batch.
struct Terms<'a> {
    ft: Option<(&'a Network, f64)>,
    epic: Option<(&'a SharedModel, f64)>,
    epir: Option<(&'a Network, f64)>,
    agg: bool,
}

struct Accumulated {
    parts: LossParts,
    grads: SharedModel,
    ft_theta: Option<Network>,
    epir_theta: Option<Network>,
}

fn accumulate(model: &SharedModel, batch: &Batch, terms: &Terms) -> Accumulated {
    let n = batch.len() as f64;
    let soft = model.w.as_deref().map(softmax);
    let need_dx = soft.is_some();
    let mut grads = model.zeros_like();
    let mut ft_theta = terms.ft.map(|_| model.theta.zeros_like());
    let mut epir_theta = terms.epir.map(|_| model.theta.zeros_like());
    let mut parts = LossParts::default();
    let epic_soft = terms.epic.and_then(|(frozen, _)| frozen.w.as_deref().map(softmax));

    for (x, &y) in batch.x.iter().zip(&batch.y) {
        let xh = match &soft {
            Some(s) => weight_with(s, x),
            None => x.to_vec(),
        };
        let theta_cache = model.theta.forward_unchecked(&xh);
        let h = theta_cache.output();
        let mut dx_total: Option<Vec<f64>> = None;
        let mut add_dx = |dx: Option<Vec<f64>>, scale: f64| {
            if let Some(dx) = dx {
                match &mut dx_total {
                    None => dx_total = Some(dx.into_iter().map(|v| scale * v).collect()),
                    Some(t) => {
                        for (a, b) in t.iter_mut().zip(dx) {
                            *a += scale * b;
                        }
                    }
                }
            }
        };

        if terms.agg {
            let psi_cache = model.psi.forward_unchecked(h);
            let r = psi_cache.output()[0] - y;
            parts.agg += r * r;
            let d = [2.0 * r / n];
            let dh = model
                .psi
                .backward(&psi_cache, &d, Some(&mut grads.psi), true)
                .expect("shapes checked")
                .expect("requested");
            let dx = model
                .theta
                .backward(&theta_cache, &dh, Some(&mut grads.theta), need_dx)
                .expect("shapes checked");
            add_dx(dx, 1.0);
        }
        if let Some((frozen_psi, weight)) = terms.ft {
            let cache = frozen_psi.forward_unchecked(h);
            let r = cache.output()[0] - y;
            parts.ft += r * r;
            let dh = frozen_psi
                .backward(&cache, &[2.0 * r / n], None, true)
                .expect("shapes checked")
                .expect("requested");
            let dx = model
                .theta
                .backward(&theta_cache, &dh, ft_theta.as_mut(), need_dx)
                .expect("shapes checked");
            add_dx(dx, weight);
        }
        if let Some((random_psi, weight)) = terms.epir {
            let cache = random_psi.forward_unchecked(h);
            let r = cache.output()[0] - y;
            parts.epir += r * r;
            let dh = random_psi
                .backward(&cache, &[2.0 * r / n], None, true)
                .expect("shapes checked")
                .expect("requested");
            let dx = model
                .theta
                .backward(&theta_cache, &dh, epir_theta.as_mut(), need_dx)
                .expect("shapes checked");
            add_dx(dx, weight);
        }
        if let Some((frozen, weight)) = terms.epic {
            let xj = match &epic_soft {
                Some(s) => weight_with(s, x),
                None => x.to_vec(),
            };
            let hj = frozen.theta.predict_unchecked(&xj);
            let cache = model.psi.forward_unchecked(&hj);
            let r = cache.output()[0] - y;
            parts.epic += r * r;
            model
                .psi
                .backward(&cache, &[weight * 2.0 * r / n], Some(&mut grads.psi), false)
                .expect("shapes checked");
        }
        if let (Some(s), Some(g), Some(gw)) = (&soft, &dx_total, grads.w.as_mut()) {
            fw_backward(s, x, g, gw);
        }
    }
    parts.agg /= n;
    parts.ft /= n;
    parts.epic /= n;
    parts.epir /= n;
    Accumulated {
        parts,
        grads,
        ft_theta,
        epir_theta,
    }
}

/// Loss and batch-mean gradient of the pooled squared loss. Also used for
/// the per-subject loss of a domain model.
pub fn agg_gradients(model: &SharedModel, batch: &Batch) -> Result<(f64, SharedModel)> {
    check_batch(model, batch)?;
    let acc = accumulate(
        model,
        batch,
        &Terms {
            ft: None,
            epic: None,
            epir: None,
            agg: true,
        },
    );
    Ok((acc.parts.agg, acc.grads))
}

/// Unclipped gradient of the feature-transfer loss. Only `w` and `theta`
/// are non-zero.
pub fn ft_gradients(shared: &SharedModel, frozen: &DomainModel, batch: &Batch) -> Result<(f64, SharedModel)> {
    check_batch(shared, batch)?;
    check_pair(frozen, batch, shared)?;
    let acc = accumulate(
        shared,
        batch,
        &Terms {
            ft: Some((&frozen.model.psi, 1.0)),
            epic: None,
            epir: None,
            agg: false,
        },
    );
    let mut grads = acc.grads;
    grads.theta = acc.ft_theta.expect("ft enabled");
    Ok((acc.parts.ft, grads))
}

/// Gradient of the epic loss; only `psi` is non-zero.
pub fn epic_gradients(shared: &SharedModel, frozen: &DomainModel, batch: &Batch) -> Result<(f64, SharedModel)> {
    check_batch(shared, batch)?;
    check_pair(frozen, batch, shared)?;
    let acc = accumulate(
        shared,
        batch,
        &Terms {
            ft: None,
            epic: Some((&frozen.model, 1.0)),
            epir: None,
            agg: false,
        },
    );
    Ok((acc.parts.epic, acc.grads))
}

/// Unclipped gradient of the epir loss. Only `w` and `theta` are non-zero.
pub fn epir_gradients(shared: &SharedModel, random_psi: &Network, batch: &Batch) -> Result<(f64, SharedModel)> {
    check_batch(shared, batch)?;
    if random_psi.input_dim() != shared.theta.output_dim() || random_psi.output_dim() != 1 {
        return Err(Error::Shape(
            "random regressor does not fit the feature transform".into(),
        ));
    }
    let acc = accumulate(
        shared,
        batch,
        &Terms {
            ft: None,
            epic: None,
            epir: Some((random_psi, 1.0)),
            agg: false,
        },
    );
    let mut grads = acc.grads;
    grads.theta = acc.epir_theta.expect("epir enabled");
    Ok((acc.parts.epir, grads))
}

/// Gradient of the weighted episodic loss for one `(s, j)` pair.
///
/// The feature-transform gradients of the feature-transfer and epir terms are
/// clipped element-wise to `cfg.clip_range` before being weighted and added;
/// the gradient into `w` and the pooled-loss path are left unclipped. Terms
/// with zero weight are skipped entirely.
pub fn et_gradients(shared: &SharedModel, episode: &Episode, batch: &Batch, cfg: &TrainConfig) -> Result<EtGradients> {
    check_batch(shared, batch)?;
    check_pair(episode.frozen, batch, shared)?;
    let (weights, random_psi) = term_weights(episode, cfg)?;
    let terms = Terms {
        ft: (weights.ft != 0.0).then_some((&episode.frozen.model.psi, weights.ft)),
        epic: (weights.epic != 0.0).then_some((&episode.frozen.model, weights.epic)),
        epir: (weights.epir != 0.0).then(|| (random_psi.expect("checked"), weights.epir)),
        agg: true,
    };
    if let Some((psi, _)) = terms.epir {
        if psi.input_dim() != shared.theta.output_dim() || psi.output_dim() != 1 {
            return Err(Error::Shape(
                "random regressor does not fit the feature transform".into(),
            ));
        }
    }
    let mut acc = accumulate(shared, batch, &terms);
    let (lo, hi) = cfg.clip_range;
    for (extra, weight) in [(&mut acc.ft_theta, weights.ft), (&mut acc.epir_theta, weights.epir)] {
        if let Some(g) = extra.as_mut() {
            for t in g.tensors_mut() {
                clip_elems(t, lo, hi);
            }
            let targets = acc.grads.theta.tensors_mut();
            for (dst, (src, _)) in targets.into_iter().zip(g.tensors()) {
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += weight * b;
                }
            }
        }
    }
    let p = acc.parts;
    let loss = p.agg + weights.ft * p.ft + weights.epic * p.epic + weights.epir * p.epir;
    Ok(EtGradients {
        loss,
        parts: p,
        grads: acc.grads,
        ft_theta: acc.ft_theta,
        epir_theta: acc.epir_theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::model::Architecture;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_arch() -> Architecture {
        Architecture {
            theta_hidden: vec![5],
            psi_hidden: vec![4],
        }
    }

    fn rows(n: usize, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let y = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        (x, y)
    }

    fn batch<'a>(domain: usize, x: &'a [Vec<f64>], y: &[f64]) -> Batch<'a> {
        Batch::new(domain, x.iter().map(|r| r.as_slice()).collect(), y.to_vec()).unwrap()
    }

    fn domain(d: usize, seed: u64, id: usize, fw: bool) -> DomainModel {
        DomainModel {
            domain: id,
            subject_id: format!("s{id}"),
            model: SharedModel::initialized(d, &small_arch(), fw, &mut ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    #[test]
    fn constant_zero_predictor() {
        let m = SharedModel::new(3, &small_arch(), false);
        let (x, _) = rows(4, 3, 1);
        let b = batch(0, &x, &[1.0; 4]);
        assert_eq!(loss_agg(&m, &b).unwrap(), 1.0);
    }

    #[test]
    fn ft_with_own_regressor_and_self_pair() {
        let shared = SharedModel::initialized(3, &small_arch(), true, &mut ChaCha8Rng::seed_from_u64(2));
        let (x, _) = rows(5, 3, 3);
        let y: Vec<f64> = x.iter().map(|r| shared.predict(r).unwrap()).collect();
        let b = batch(0, &x, &y);
        let frozen = DomainModel {
            domain: 1,
            subject_id: "s1".into(),
            model: shared.clone(),
        };
        assert!(loss_ft(&shared, &frozen, &b).unwrap() < 1e-28);
        let same = DomainModel { domain: 0, ..frozen };
        assert!(matches!(loss_ft(&shared, &same, &b), Err(Error::InvalidPairing(0))));
    }

    #[test]
    fn ft_ignores_shared_regressor() {
        let mut shared = SharedModel::initialized(3, &small_arch(), true, &mut ChaCha8Rng::seed_from_u64(5));
        let frozen = domain(3, 6, 1, true);
        let (x, y) = rows(6, 3, 7);
        let b = batch(0, &x, &y);
        let before = loss_ft(&shared, &frozen, &b).unwrap();
        shared.psi.fill(0.3);
        assert_eq!(loss_ft(&shared, &frozen, &b).unwrap(), before);
        let (_, g) = ft_gradients(&shared, &frozen, &b).unwrap();
        assert!(g.psi.tensors().iter().all(|(t, _)| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn epic_ignores_shared_transform() {
        let mut shared = SharedModel::initialized(3, &small_arch(), true, &mut ChaCha8Rng::seed_from_u64(8));
        let frozen = domain(3, 9, 2, true);
        let (x, y) = rows(6, 3, 10);
        let b = batch(0, &x, &y);
        let before = loss_epic(&shared, &frozen, &b).unwrap();
        shared.theta.fill(-0.1);
        shared.w.as_mut().unwrap()[0] = 4.0;
        assert_eq!(loss_epic(&shared, &frozen, &b).unwrap(), before);
        let (_, g) = epic_gradients(&shared, &frozen, &b).unwrap();
        assert!(g.w.unwrap().iter().all(|&v| v == 0.0));
        assert!(g.theta.tensors().iter().all(|(t, _)| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn epir_zero_regressor() {
        let shared = SharedModel::initialized(3, &small_arch(), false, &mut ChaCha8Rng::seed_from_u64(11));
        let zero = small_arch().psi();
        let (x, _) = rows(4, 3, 12);
        let b = batch(0, &x, &[0.0; 4]);
        assert_eq!(loss_epir(&shared, &zero, &b).unwrap(), 0.0);
    }

    #[test]
    fn et_composition() {
        let shared = SharedModel::initialized(4, &small_arch(), true, &mut ChaCha8Rng::seed_from_u64(13));
        let frozen = domain(4, 14, 1, true);
        let (x, y) = rows(8, 4, 15);
        let b = batch(0, &x, &y);
        let ep = Episode {
            frozen: &frozen,
            random_psi: None,
        };
        let a = loss_agg(&shared, &b).unwrap();
        let f = loss_ft(&shared, &frozen, &b).unwrap();
        let zero = TrainConfig {
            lambda: 0.0,
            ..TrainConfig::default()
        };
        assert_eq!(loss_et(&shared, &ep, &b, &zero).unwrap(), a);
        let one = TrainConfig {
            lambda: 1.0,
            ..TrainConfig::default()
        };
        assert!((loss_et(&shared, &ep, &b, &one).unwrap() - (a + f)).abs() < 1e-14);
        let g = et_gradients(&shared, &ep, &b, &TrainConfig::default()).unwrap();
        assert!((g.loss - (a + 0.1 * f)).abs() < 1e-14);
        assert!((0.5f64 + 0.1 * 0.2 - 0.52).abs() < 1e-15);
    }

    #[test]
    fn zero_lambda_matches_agg_bitwise() {
        let shared = SharedModel::initialized(4, &small_arch(), false, &mut ChaCha8Rng::seed_from_u64(16));
        let frozen = domain(4, 17, 1, false);
        let (x, y) = rows(8, 4, 18);
        let b = batch(0, &x, &y);
        let cfg = TrainConfig {
            lambda: 0.0,
            ..TrainConfig::default()
        };
        let ep = Episode {
            frozen: &frozen,
            random_psi: None,
        };
        let et = et_gradients(&shared, &ep, &b, &cfg).unwrap();
        let (loss, agg) = agg_gradients(&shared, &b).unwrap();
        assert_eq!(et.loss.to_bits(), loss.to_bits());
        assert_eq!(et.grads.fingerprint(), agg.fingerprint());
        assert!(et.ft_theta.is_none());
    }

    #[test]
    fn clipped_ft_gradient_stays_in_range() {
        let mut shared = SharedModel::initialized(4, &small_arch(), true, &mut ChaCha8Rng::seed_from_u64(19));
        shared.theta.fill(3.0);
        let mut frozen = domain(4, 20, 1, true);
        frozen.model.psi.fill(5.0);
        let (x, _) = rows(8, 4, 21);
        let b = batch(0, &x, &[-50.0; 8]);
        let ep = Episode {
            frozen: &frozen,
            random_psi: None,
        };
        let g = et_gradients(&shared, &ep, &b, &TrainConfig::default()).unwrap();
        let ft = g.ft_theta.unwrap();
        assert!(ft
            .tensors()
            .iter()
            .all(|(t, _)| t.iter().all(|v| (-10.0..=10.0).contains(v))));
        let (_, raw) = ft_gradients(&shared, &frozen, &b).unwrap();
        assert!(raw
            .theta
            .tensors()
            .iter()
            .any(|(t, _)| t.iter().any(|v| v.abs() > 10.0)));
    }

    #[test]
    fn epir_requires_random_regressor() {
        let shared = SharedModel::initialized(4, &small_arch(), false, &mut ChaCha8Rng::seed_from_u64(22));
        let frozen = domain(4, 23, 1, false);
        let (x, y) = rows(4, 4, 24);
        let b = batch(0, &x, &y);
        let cfg = TrainConfig {
            regularizers: vec![Regularizer::Epif, Regularizer::Epir],
            ..TrainConfig::default()
        };
        let ep = Episode {
            frozen: &frozen,
            random_psi: None,
        };
        assert!(matches!(
            et_gradients(&shared, &ep, &b, &cfg),
            Err(Error::Configuration(_))
        ));
    }
}
