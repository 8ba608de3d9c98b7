use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fw::{softmax, weight_with};
use crate::error::{Error, Result};
use crate::numcore::{Activation, Network, Parameters};

/// Hidden widths of the feature transform and of the regressor.
///
/// The default is `d -> 40` (relu) for the transform and `40 -> 40 -> 1`
/// (relu, identity) for the regressor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub theta_hidden: Vec<usize>,
    pub psi_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            theta_hidden: vec![40],
            psi_hidden: vec![40],
        }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        if self.theta_hidden.is_empty() {
            return Err(Error::Configuration("the feature transform needs a layer".into()));
        }
        if self.theta_hidden.iter().chain(&self.psi_hidden).any(|&w| w == 0) {
            return Err(Error::Configuration("layer widths must be >= 1".into()));
        }
        Ok(())
    }

    pub fn theta(&self, input_dim: usize) -> Network {
        let mut dims = vec![input_dim];
        dims.extend(&self.theta_hidden);
        Network::mlp(&dims, Activation::Relu, Activation::Relu)
    }

    pub fn psi(&self) -> Network {
        let mut dims = vec![*self.theta_hidden.last().expect("validated")];
        dims.extend(&self.psi_hidden);
        dims.push(1);
        Network::mlp(&dims, Activation::Relu, Activation::Identity)
    }
}

/// Feature weights (when enabled), feature transform and regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedModel {
    pub w: Option<Vec<f64>>,
    pub theta: Network,
    pub psi: Network,
}

impl SharedModel {
    /// All-zero networks; `w` is the all-ones vector when feature weighting
    /// is on.
    pub fn new(input_dim: usize, arch: &Architecture, fw: bool) -> Self {
        Self {
            w: fw.then(|| vec![1.0; input_dim]),
            theta: arch.theta(input_dim),
            psi: arch.psi(),
        }
    }

    /// `w = 1`, network parameters drawn uniformly on `+-sqrt(1/fan_in)`.
    pub fn initialized<R: Rng + ?Sized>(input_dim: usize, arch: &Architecture, fw: bool, rng: &mut R) -> Self {
        let mut m = Self::new(input_dim, arch, fw);
        m.theta.init_uniform(rng);
        m.psi.init_uniform(rng);
        m
    }

    pub fn input_dim(&self) -> usize {
        self.theta.input_dim()
    }

    pub fn uses_fw(&self) -> bool {
        self.w.is_some()
    }

    /// `softmax(w)`, if feature weighting is on.
    pub fn feature_weights(&self) -> Option<Vec<f64>> {
        self.w.as_deref().map(softmax)
    }

    pub fn weighted_input(&self, x: &[f64]) -> Vec<f64> {
        match &self.w {
            Some(w) => weight_with(&softmax(w), x),
            None => x.to_vec(),
        }
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// `theta(softmax(w) * x)`.
    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.theta.predict_unchecked(&self.weighted_input(x)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let h = self.transform(x)?;
        Ok(self.psi.predict_unchecked(&h)[0])
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let soft = self.feature_weights();
        rows.iter()
            .map(|x| {
                self.check_input(x)?;
                let xh = match &soft {
                    Some(s) => weight_with(s, x),
                    None => x.clone(),
                };
                let h = self.theta.predict_unchecked(&xh);
                Ok(self.psi.predict_unchecked(&h)[0])
            })
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: self.w.as_ref().map(|w| vec![0.0; w.len()]),
            theta: self.theta.zeros_like(),
            psi: self.psi.zeros_like(),
        }
    }
}

impl Parameters for SharedModel {
    fn tensors(&self) -> Vec<(&[f64], bool)> {
        let mut out = Vec::new();
        if let Some(w) = &self.w {
            out.push((w.as_slice(), false));
        }
        out.extend(self.theta.tensors());
        out.extend(self.psi.tensors());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let Some(w) = &mut self.w {
            out.push(w.as_mut_slice());
        }
        out.extend(self.theta.tensors_mut());
        out.extend(self.psi.tensors_mut());
        out
    }
}

/// Subject-specific model used only while training episodically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainModel {
    /// Position of the subject in the training set.
    pub domain: usize,
    pub subject_id: String,
    pub model: SharedModel,
}
