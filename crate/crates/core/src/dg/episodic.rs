use rand_chacha::ChaCha8Rng;

use super::batching::{epoch_batches, BatchSampler};
use super::losses::{agg_gradients, et_gradients, Batch, Episode, EtGradients};
use super::model::{DomainModel, SharedModel};
use super::{Regularizer, TrainConfig};
use crate::error::{Error, Result};
use crate::numcore::{sgd_step, Network, OptState, Parameters};
use crate::seed::SeedTree;
use crate::sigproc::TrialTable;

/// State visible to an observer around one shared update.
#[derive(Debug, Clone, Copy)]
pub struct SharedStep<'a> {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Subject the batch was drawn from.
    pub source: usize,
    /// Subject whose domain model is frozen for this update.
    pub frozen: usize,
    pub batch_indices: &'a [usize],
    pub domains: &'a [DomainModel],
    pub shared: &'a SharedModel,
}

/// Hooks into the episodic training loop. All methods default to no-ops.
pub trait TrainObserver {
    fn before_shared_step(&mut self, _step: &SharedStep) {}
    fn after_shared_step(&mut self, _step: &SharedStep, _grads: &EtGradients) {}
    fn after_epoch(&mut self, _epoch: usize, _shared: &SharedModel) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

/// One SGD step on the pooled squared loss of `batch`. Returns the loss
/// before the step.
pub fn agg_step(model: &mut SharedModel, opt: &mut OptState, batch: &Batch) -> Result<f64> {
    let (loss, grads) = agg_gradients(model, batch)?;
    sgd_step(model, &grads, opt)?;
    Ok(loss)
}

fn divergence_check(model: &SharedModel, what: &str) -> Result<()> {
    if !model.all_finite() {
        return Err(Error::Divergence(format!("{what} holds non-finite parameters")));
    }
    Ok(())
}

/// Episodic trainer: a shared model plus one domain model per source
/// subject.
#[derive(Debug, Clone)]
pub struct Episodic<'d> {
    pub shared: SharedModel,
    pub domains: Vec<DomainModel>,
    data: &'d [TrialTable],
    cfg: TrainConfig,
    shared_opt: OptState,
    domain_opts: Vec<OptState>,
    samplers: Vec<BatchSampler>,
    batch_rng: ChaCha8Rng,
    epir_rng: ChaCha8Rng,
    random_psi: Option<Network>,
    epoch: usize,
}

impl<'d> Episodic<'d> {
    /// Initializes the shared model and every domain model. Random streams
    /// are children of `seeds`: `init/shared`, `init/domain-{s}`, `batches`
    /// and `epir`.
    pub fn new(data: &'d [TrialTable], cfg: &TrainConfig, fw: bool, seeds: &SeedTree) -> Result<Self> {
        cfg.validate()?;
        if data.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "episodic training needs at least 2 source subjects, got {}",
                data.len()
            )));
        }
        let d = data[0].dim();
        for t in data {
            if t.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "subject {} has no trials",
                    t.subject_id
                )));
            }
            if t.dim() != d {
                return Err(Error::Shape(format!(
                    "subject {} has {} features, expected {d}",
                    t.subject_id,
                    t.dim()
                )));
            }
        }
        let shared = SharedModel::initialized(d, &cfg.arch, fw, &mut seeds.child("init/shared").rng());
        let domains = data
            .iter()
            .enumerate()
            .map(|(s, t)| DomainModel {
                domain: s,
                subject_id: t.subject_id.clone(),
                model: SharedModel::initialized(d, &cfg.arch, fw, &mut seeds.child(format!("init/domain-{s}")).rng()),
            })
            .collect();
        let opt = cfg.optimizer()?;
        Ok(Self {
            shared,
            domains,
            data,
            cfg: cfg.clone(),
            shared_opt: opt.clone(),
            domain_opts: vec![opt; data.len()],
            samplers: data
                .iter()
                .map(|t| BatchSampler::new(t.len(), cfg.batch_size))
                .collect(),
            batch_rng: seeds.child("batches").rng(),
            epir_rng: seeds.child("epir").rng(),
            random_psi: None,
            epoch: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// The random regressor used by the epir term in the current epoch.
    pub fn random_psi(&self) -> Option<&Network> {
        self.random_psi.as_ref()
    }

    /// One pass of mini-batch steps for every domain model over its own
    /// subject's data.
    pub fn warmup(&mut self) -> Result<()> {
        for (s, table) in self.data.iter().enumerate() {
            for idx in epoch_batches(table.len(), self.cfg.batch_size, &mut self.batch_rng) {
                let batch = Batch::from_indices(s, table, &idx);
                agg_step(&mut self.domains[s].model, &mut self.domain_opts[s], &batch)?;
            }
            divergence_check(&self.domains[s].model, "domain model")?;
        }
        Ok(())
    }

    /// One training epoch: a step for each domain model, then a shared step
    /// for every ordered pair `(s, j)`, `j != s`, in lexicographic order.
    /// Returns the mean weighted loss over the shared steps.
    pub fn epoch(&mut self, observer: &mut dyn TrainObserver) -> Result<f64> {
        self.epoch += 1;
        let epoch = self.epoch;
        if self.cfg.uses(Regularizer::Epir) && self.cfg.epir_weight != 0.0 {
            let mut psi = self.cfg.arch.psi();
            psi.init_uniform(&mut self.epir_rng);
            self.random_psi = Some(psi);
        }
        for sampler in &mut self.samplers {
            sampler.reshuffle(&mut self.batch_rng);
        }

        for (s, table) in self.data.iter().enumerate() {
            let idx = self.samplers[s].next_batch(&mut self.batch_rng);
            let batch = Batch::from_indices(s, table, &idx);
            agg_step(&mut self.domains[s].model, &mut self.domain_opts[s], &batch)?;
        }

        let n = self.data.len();
        let mut total = 0.0;
        for s in 0..n {
            for j in (0..n).filter(|&j| j != s) {
                let idx = self.samplers[s].next_batch(&mut self.batch_rng);
                let batch = Batch::from_indices(s, &self.data[s], &idx);
                observer.before_shared_step(&SharedStep {
                    epoch,
                    source: s,
                    frozen: j,
                    batch_indices: &idx,
                    domains: &self.domains,
                    shared: &self.shared,
                });
                let episode = Episode {
                    frozen: &self.domains[j],
                    random_psi: self.random_psi.as_ref(),
                };
                let g = et_gradients(&self.shared, &episode, &batch, &self.cfg)?;
                sgd_step(&mut self.shared, &g.grads, &mut self.shared_opt)?;
                total += g.loss;
                let step = SharedStep {
                    epoch,
                    source: s,
                    frozen: j,
                    batch_indices: &idx,
                    domains: &self.domains,
                    shared: &self.shared,
                };
                observer.after_shared_step(&step, &g);
            }
        }
        divergence_check(&self.shared, "shared model")?;
        for dm in &self.domains {
            divergence_check(&dm.model, "domain model")?;
        }
        observer.after_epoch(epoch, &self.shared);
        Ok(total / (n * (n - 1)) as f64)
    }
}
