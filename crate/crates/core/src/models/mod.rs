//! AE, VAE, TVAE and CTVAE: architectures, losses, training and extraction.

mod file;
mod loss;
mod network;
mod reparam;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use file::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use loss::{ae_loss, ctvae_loss, ctvae_terms, kl_std_normal, tvae_loss, tvae_terms, LossTerms};
pub use network::{ForwardOutputs, Model, ModelGrads};
pub use reparam::{class_noise, reparameterize_ctvae, reparameterize_vae};

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::nn::{AdamState, Matrix};
use crate::priors::ClassPriors;
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Ae,
    Vae,
    Tvae,
    Ctvae,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ae => "ae",
            ModelKind::Vae => "vae",
            ModelKind::Tvae => "tvae",
            ModelKind::Ctvae => "ctvae",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ModelKind::Ae => 0,
            ModelKind::Vae => 1,
            ModelKind::Tvae => 2,
            ModelKind::Ctvae => 3,
        }
    }

    pub(crate) fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => ModelKind::Ae,
            1 => ModelKind::Vae,
            2 => ModelKind::Tvae,
            3 => ModelKind::Ctvae,
            _ => return None,
        })
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(ModelKind::Ae),
            "vae" => Ok(ModelKind::Vae),
            "tvae" => Ok(ModelKind::Tvae),
            "ctvae" => Ok(ModelKind::Ctvae),
            other => Err(invalid(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Layer widths: `x(d_input) → h1 → z(d_z) → h2 → x̂(d_input) → h3 → ẑ(d_z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub d_input: usize,
    pub h1: usize,
    pub d_z: usize,
    pub h2: usize,
    pub h3: usize,
}

impl ArchSpec {
    /// `d_z = ⌊√d_input⌋` and hidden widths `⌈d_input / 2⌉`.
    pub fn auto(d_input: usize) -> Self {
        let d_z = ((d_input as f64).sqrt().floor() as usize).max(1);
        let h = d_input.div_ceil(2).max(1);
        Self {
            d_input,
            h1: h,
            d_z,
            h2: h,
            h3: h,
        }
    }

    /// 115 → 50 → 10 → 50 → 115 → 50 → 10.
    pub fn nbaiot() -> Self {
        Self {
            d_input: 115,
            h1: 50,
            d_z: 10,
            h2: 50,
            h3: 50,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.d_input, self.h1, self.d_z, self.h2, self.h3];
        if widths.contains(&0) {
            return Err(invalid(format!("all layer widths must be ≥ 1, got {self:?}")));
        }
        Ok(())
    }
}

/// Weights of the latent reconstruction, KL, latent pull and representation pull terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl Betas {
    pub const fn new(b1: f64, b2: f64, b3: f64, b4: f64) -> Self {
        Self { b1, b2, b3, b4 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.b1, self.b2, self.b3, self.b4];
        if all.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(invalid(format!("loss weights must be finite and ≥ 0, got {all:?}")));
        }
        Ok(())
    }
}

impl Default for Betas {
    fn default() -> Self {
        Self::new(1.0, 1.0, 1.0, 1.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Noise draws per input; the loss is averaged over them.
    pub mc_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 100,
            lr: 1e-4,
            seed: 0,
            mc_samples: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.mc_samples == 0 {
            return Err(invalid(format!(
                "epochs, batch size and mc samples must be ≥ 1, got {self:?}"
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepresentationSource {
    LatentZ,
    LatentMu,
    ReconstructionZhat,
}

impl RepresentationSource {
    pub fn name(self) -> &'static str {
        match self {
            RepresentationSource::LatentZ => "latent-z",
            RepresentationSource::LatentMu => "latent-mu",
            RepresentationSource::ReconstructionZhat => "reconstruction-zhat",
        }
    }
}

/// Extracted feature vectors, one row per input sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub matrix: Matrix,
    pub source: RepresentationSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub arch: ArchSpec,
    pub betas: Betas,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean loss per epoch.
    pub history: Vec<f64>,
}

/// Mini-batch Adam training. `data` must already be scaled.
///
/// Rows are reshuffled every epoch; the last partial batch is kept.
pub fn train(spec: &ModelSpec, data: &Dataset, priors: Option<ClassPriors>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(invalid("cannot train on an empty dataset"));
    }
    if data.dim() != spec.arch.d_input {
        return Err(invalid(format!(
            "architecture expects {} features, data has {}",
            spec.arch.d_input,
            data.dim()
        )));
    }
    let mut init_rng = seeded(derive_seed(cfg.seed, 1));
    let mut order_rng = seeded(derive_seed(cfg.seed, 2));
    let mut noise_rng = seeded(derive_seed(cfg.seed, 3));

    let mut model = Model::new(spec.kind, spec.arch, spec.betas, &mut init_rng)?;
    if spec.kind == ModelKind::Ctvae {
        let p = priors.ok_or_else(|| invalid("CTVAE training requires class priors"))?;
        if p.d_z() != spec.arch.d_z {
            return Err(invalid(format!(
                "priors have width {}, latent width is {}",
                p.d_z(),
                spec.arch.d_z
            )));
        }
        if p.n_classes() < data.n_classes() {
            return Err(invalid(format!(
                "priors cover {} classes, data has {}",
                p.n_classes(),
                data.n_classes()
            )));
        }
        model.priors = Some(p);
    } else {
        model.priors = priors;
    }

    let mut adam = AdamState::new(cfg.lr, &model.tensor_lens())?;
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let needs_labels = spec.kind == ModelKind::Ctvae;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let idx: Vec<usize> = if cfg.mc_samples == 1 {
                chunk.to_vec()
            } else {
                chunk.iter().flat_map(|&i| std::iter::repeat_n(i, cfg.mc_samples)).collect()
            };
            let x = data.features.select_rows(&idx);
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let eta = model.sample_noise(idx.len(), &mut noise_rng);
            let (loss, grads) = model.loss_and_grads(&x, needs_labels.then_some(labels.as_slice()), &eta)?;
            if !loss.is_finite() {
                return Err(invalid(format!("training diverged at epoch {epoch} (loss {loss})")));
            }
            total += loss * chunk.len() as f64;
            let g = grads.slices();
            adam.update(&mut model.params_mut(), &g)?;
        }
        let mean = total / n as f64;
        log::debug!("{} epoch {epoch}: loss {mean:.6}", spec.kind);
        history.push(mean);
    }
    Ok(TrainOutcome { model, history })
}

#[cfg(test)]
mod tests;
