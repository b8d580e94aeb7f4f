//! The four architectures share one parameter layout:
//!
//! ```text
//! x ─encoder─▶ h ─mu_head─▶ μ ──┐
//!              └─logvar_head─▶ log σ² ─▶ z = μ + σ ⊙ ε ─hermaphrodite─▶ x̂ ─decoder─▶ ẑ
//! ```
//!
//! AE has no log-variance head and uses `z = μ`; AE and VAE have no decoder.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::loss::{ae_loss, ctvae_terms, kl_std_normal, tvae_terms, LossTerms};
use super::reparam::class_noise;
use super::{ArchSpec, Betas, ModelKind, Representation, RepresentationSource};
use crate::data::NormStats;
use crate::error::{invalid, Result};
use crate::nn::{grad_slices, Activation, GradientTape, LayerGrad, Matrix, Mlp};
use crate::priors::ClassPriors;
use crate::rng::Rng;

/// Trainable parameters plus everything needed to reuse them on new data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub arch: ArchSpec,
    pub betas: Betas,
    /// `x → h1`
    pub encoder: Mlp,
    /// `h1 → μ` (the bottleneck for AE)
    pub mu_head: Mlp,
    /// `h1 → log σ²`; absent for AE
    pub logvar_head: Option<Mlp>,
    /// `z → h2 → x̂`; the plain decoder for AE and VAE
    pub hermaphrodite: Mlp,
    /// `x̂ → h3 → ẑ`; TVAE and CTVAE only
    pub decoder: Option<Mlp>,
    pub priors: Option<ClassPriors>,
    pub normalizer: Option<NormStats>,
}

/// Gradients laid out like [`Model::params_mut`].
#[derive(Clone, Debug)]
pub struct ModelGrads {
    pub encoder: Vec<LayerGrad>,
    pub mu_head: Vec<LayerGrad>,
    pub logvar_head: Option<Vec<LayerGrad>>,
    pub hermaphrodite: Vec<LayerGrad>,
    pub decoder: Option<Vec<LayerGrad>>,
}

impl ModelGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = grad_slices(&self.encoder);
        v.extend(grad_slices(&self.mu_head));
        if let Some(g) = &self.logvar_head {
            v.extend(grad_slices(g));
        }
        v.extend(grad_slices(&self.hermaphrodite));
        if let Some(g) = &self.decoder {
            v.extend(grad_slices(g));
        }
        v
    }
}

/// Everything computed by one training-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutputs {
    pub mu: Matrix,
    /// Zeros for AE.
    pub logvar: Matrix,
    /// Noise actually added (`ε`), zeros for AE.
    pub eps: Matrix,
    pub z: Matrix,
    pub x_hat: Matrix,
    /// Present for TVAE and CTVAE.
    pub z_hat: Option<Matrix>,
}

struct Tapes {
    encoder: GradientTape,
    mu_head: GradientTape,
    logvar_head: Option<GradientTape>,
    hermaphrodite: GradientTape,
    decoder: Option<GradientTape>,
}

impl Model {
    /// Glorot-initialised weights, zero biases; ReLU hidden layers and linear heads.
    pub fn new(kind: ModelKind, arch: ArchSpec, betas: Betas, rng: &mut Rng) -> Result<Self> {
        Self::with_activation(kind, arch, betas, Activation::Relu, rng)
    }

    pub fn with_activation(kind: ModelKind, arch: ArchSpec, betas: Betas, hidden: Activation, rng: &mut Rng) -> Result<Self> {
        arch.validate()?;
        betas.validate()?;
        let lin = Activation::Linear;
        let encoder = Mlp::glorot(&[arch.d_input, arch.h1], hidden, hidden, rng)?;
        let mu_head = Mlp::glorot(&[arch.h1, arch.d_z], lin, lin, rng)?;
        let logvar_head = match kind {
            ModelKind::Ae => None,
            _ => Some(Mlp::glorot(&[arch.h1, arch.d_z], lin, lin, rng)?),
        };
        let hermaphrodite = Mlp::glorot(&[arch.d_z, arch.h2, arch.d_input], hidden, lin, rng)?;
        let decoder = match kind {
            ModelKind::Tvae | ModelKind::Ctvae => {
                Some(Mlp::glorot(&[arch.d_input, arch.h3, arch.d_z], hidden, lin, rng)?)
            }
            _ => None,
        };
        Ok(Self {
            kind,
            arch,
            betas,
            encoder,
            mu_head,
            logvar_head,
            hermaphrodite,
            decoder,
            priors: None,
            normalizer: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count()
            + self.mu_head.param_count()
            + self.logvar_head.as_ref().map_or(0, Mlp::param_count)
            + self.hermaphrodite.param_count()
            + self.decoder.as_ref().map_or(0, Mlp::param_count)
    }

    /// Every parameter tensor, in a fixed order: encoder, μ head, log σ² head,
    /// hermaphrodite, decoder.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.params_mut();
        v.extend(self.mu_head.params_mut());
        if let Some(h) = &mut self.logvar_head {
            v.extend(h.params_mut());
        }
        v.extend(self.hermaphrodite.params_mut());
        if let Some(d) = &mut self.decoder {
            v.extend(d.params_mut());
        }
        v
    }

    pub fn tensor_lens(&mut self) -> Vec<usize> {
        self.params_mut().iter().map(|p| p.len()).collect()
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.arch.d_input {
            return Err(invalid(format!(
                "model expects {} features, data has {}",
                self.arch.d_input,
                x.cols()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, x: &Matrix, labels: Option<&[usize]>) -> Result<()> {
        if self.kind != ModelKind::Ctvae {
            return Ok(());
        }
        let priors = self
            .priors
            .as_ref()
            .ok_or_else(|| invalid("CTVAE requires class priors"))?;
        let labels = labels.ok_or_else(|| invalid("CTVAE requires labels during training"))?;
        if labels.len() != x.rows() {
            return Err(invalid(format!("{} labels for batch of {}", labels.len(), x.rows())));
        }
        if let Some(&c) = labels.iter().find(|&&c| c >= priors.n_classes()) {
            return Err(invalid(format!(
                "label {c} has no prior (priors cover {} classes)",
                priors.n_classes()
            )));
        }
        Ok(())
    }

    /// Standard-normal draws `η` for one batch (`rows × d_z`).
    pub fn sample_noise(&self, rows: usize, rng: &mut Rng) -> Matrix {
        let d = self.arch.d_z;
        let data = (0..rows * d).map(|_| StandardNormal.sample(rng)).collect();
        Matrix::from_vec(rows, d, data).expect("sized")
    }

    fn epsilon(&self, labels: Option<&[usize]>, eta: &Matrix) -> Result<Matrix> {
        match (self.kind, &self.priors) {
            (ModelKind::Ctvae, Some(priors)) => {
                let labels = labels.ok_or_else(|| invalid("CTVAE requires labels"))?;
                let mut eps = Matrix::zeros(eta.rows(), eta.cols());
                for (i, &c) in labels.iter().enumerate() {
                    let e = class_noise(priors, c, eta.row(i))?;
                    eps.row_mut(i).copy_from_slice(&e);
                }
                Ok(eps)
            }
            (ModelKind::Ctvae, None) => Err(invalid("CTVAE requires class priors")),
            _ => Ok(eta.clone()),
        }
    }

    fn forward_taped(&self, x: &Matrix, labels: Option<&[usize]>, eta: &Matrix) -> Result<(ForwardOutputs, Tapes)> {
        self.check_input(x)?;
        self.check_labels(x, labels)?;
        let (h, t_enc) = self.encoder.forward(x)?;
        let (mu, t_mu) = self.mu_head.forward(&h)?;
        let (logvar, t_lv, eps, z) = match &self.logvar_head {
            None => {
                let zeros = Matrix::zeros(mu.rows(), mu.cols());
                (zeros.clone(), None, zeros, mu.clone())
            }
            Some(head) => {
                if eta.shape() != mu.shape() {
                    return Err(invalid(format!(
                        "noise shape {:?} does not match latent shape {:?}",
                        eta.shape(),
                        mu.shape()
                    )));
                }
                let (lv, t) = head.forward(&h)?;
                let eps = self.epsilon(labels, eta)?;
                let mut z = mu.clone();
                for ((zv, &lvv), &e) in z.as_mut_slice().iter_mut().zip(lv.as_slice()).zip(eps.as_slice()) {
                    *zv += (0.5 * lvv).exp() * e;
                }
                (lv, Some(t), eps, z)
            }
        };
        let (x_hat, t_h) = self.hermaphrodite.forward(&z)?;
        let (z_hat, t_d) = match &self.decoder {
            Some(dec) => {
                let (zh, t) = dec.forward(&x_hat)?;
                (Some(zh), Some(t))
            }
            None => (None, None),
        };
        Ok((
            ForwardOutputs {
                mu,
                logvar,
                eps,
                z,
                x_hat,
                z_hat,
            },
            Tapes {
                encoder: t_enc,
                mu_head: t_mu,
                logvar_head: t_lv,
                hermaphrodite: t_h,
                decoder: t_d,
            },
        ))
    }

    /// Training-mode forward pass with caller-supplied standard-normal noise.
    pub fn forward(&self, x: &Matrix, labels: Option<&[usize]>, eta: &Matrix) -> Result<ForwardOutputs> {
        self.forward_taped(x, labels, eta).map(|(o, _)| o)
    }

    /// Unweighted loss components for a forward pass (zeros for unused terms).
    pub fn loss_terms(&self, x: &Matrix, labels: Option<&[usize]>, out: &ForwardOutputs) -> Result<LossTerms> {
        match self.kind {
            ModelKind::Ae => Ok(LossTerms {
                input_recon: ae_loss(x, &out.x_hat)?,
                ..LossTerms::default()
            }),
            ModelKind::Vae => {
                let n = x.rows().max(1) as f64;
                let kl = out
                    .mu
                    .iter_rows()
                    .zip(out.logvar.iter_rows())
                    .map(|(m, lv)| kl_std_normal(m, lv))
                    .sum::<f64>()
                    / n;
                Ok(LossTerms {
                    input_recon: ae_loss(x, &out.x_hat)?,
                    kl,
                    ..LossTerms::default()
                })
            }
            ModelKind::Tvae => {
                let z_hat = out.z_hat.as_ref().expect("TVAE has a decoder");
                tvae_terms(x, &out.x_hat, &out.z, z_hat, &out.mu, &out.logvar)
            }
            ModelKind::Ctvae => {
                let z_hat = out.z_hat.as_ref().expect("CTVAE has a decoder");
                let priors = self.priors.as_ref().ok_or_else(|| invalid("CTVAE requires class priors"))?;
                let labels = labels.ok_or_else(|| invalid("CTVAE requires labels"))?;
                ctvae_terms(x, &out.x_hat, &out.z, z_hat, &out.mu, &out.logvar, labels, priors)
            }
        }
    }

    /// Weighted batch loss for the given noise.
    pub fn batch_loss(&self, x: &Matrix, labels: Option<&[usize]>, eta: &Matrix) -> Result<f64> {
        let out = self.forward(x, labels, eta)?;
        Ok(self.loss_terms(x, labels, &out)?.weighted(&self.effective_betas()))
    }

    /// Betas with the terms a kind does not have switched off.
    pub fn effective_betas(&self) -> Betas {
        let b = self.betas;
        match self.kind {
            ModelKind::Ae => Betas::new(0.0, 0.0, 0.0, 0.0),
            ModelKind::Vae => Betas::new(0.0, b.b2, 0.0, 0.0),
            ModelKind::Tvae => Betas::new(b.b1, b.b2, 0.0, 0.0),
            ModelKind::Ctvae => b,
        }
    }

    /// Loss and exact gradients for one batch.
    pub fn loss_and_grads(&self, x: &Matrix, labels: Option<&[usize]>, eta: &Matrix) -> Result<(f64, ModelGrads)> {
        let (out, tapes) = self.forward_taped(x, labels, eta)?;
        let betas = self.effective_betas();
        let loss = self.loss_terms(x, labels, &out)?.weighted(&betas);

        let n = x.rows().max(1) as f64;
        let two_n = 2.0 / n;
        let targets = self.pull_targets(labels, out.z.rows())?;

        let mut g_xhat = out.x_hat.zip_map(x, |a, b| two_n * (a - b))?;
        let mut g_z = Matrix::zeros(out.z.rows(), out.z.cols());

        let decoder_grads = match (&self.decoder, tapes.decoder, &out.z_hat) {
            (Some(dec), Some(tape), Some(z_hat)) => {
                let mut g_zhat = z_hat.zip_map(&out.z, |zh, z| two_n * betas.b1 * (zh - z))?;
                if let Some(t) = &targets {
                    for (g, (zh, m)) in g_zhat.as_mut_slice().iter_mut().zip(z_hat.as_slice().iter().zip(t.as_slice())) {
                        *g += two_n * betas.b4 * (zh - m);
                    }
                }
                let (grads, g_in) = dec.backward(tape, &g_zhat)?;
                for (a, b) in g_xhat.as_mut_slice().iter_mut().zip(g_in.as_slice()) {
                    *a += b;
                }
                for (g, (z, zh)) in g_z.as_mut_slice().iter_mut().zip(out.z.as_slice().iter().zip(z_hat.as_slice())) {
                    *g += two_n * betas.b1 * (z - zh);
                }
                Some(grads)
            }
            _ => None,
        };
        if let Some(t) = &targets {
            for (g, (z, m)) in g_z.as_mut_slice().iter_mut().zip(out.z.as_slice().iter().zip(t.as_slice())) {
                *g += two_n * betas.b3 * (z - m);
            }
        }

        let (herm_grads, g_from_herm) = self.hermaphrodite.backward(tapes.hermaphrodite, &g_xhat)?;
        for (a, b) in g_z.as_mut_slice().iter_mut().zip(g_from_herm.as_slice()) {
            *a += b;
        }

        // z = μ + exp(½ lv) ⊙ ε
        let mut g_mu = g_z.clone();
        let (logvar_grads, g_h_lv) = match (&self.logvar_head, tapes.logvar_head) {
            (Some(head), Some(tape)) => {
                let mut g_lv = Matrix::zeros(out.logvar.rows(), out.logvar.cols());
                let kl_w = betas.b2 / n;
                for i in 0..g_lv.as_slice().len() {
                    let lv = out.logvar.as_slice()[i];
                    let sd = (0.5 * lv).exp();
                    g_lv.as_mut_slice()[i] =
                        g_z.as_slice()[i] * out.eps.as_slice()[i] * 0.5 * sd + 0.5 * kl_w * (lv.exp() - 1.0);
                    g_mu.as_mut_slice()[i] += kl_w * out.mu.as_slice()[i];
                }
                let (grads, g_h) = head.backward(tape, &g_lv)?;
                (Some(grads), Some(g_h))
            }
            _ => (None, None),
        };
        let (mu_grads, mut g_h) = self.mu_head.backward(tapes.mu_head, &g_mu)?;
        if let Some(extra) = g_h_lv {
            for (a, b) in g_h.as_mut_slice().iter_mut().zip(extra.as_slice()) {
                *a += b;
            }
        }
        let (enc_grads, _) = self.encoder.backward(tapes.encoder, &g_h)?;

        Ok((
            loss,
            ModelGrads {
                encoder: enc_grads,
                mu_head: mu_grads,
                logvar_head: logvar_grads,
                hermaphrodite: herm_grads,
                decoder: decoder_grads,
            },
        ))
    }

    /// Row-wise `μ̂⁽ᶜ⁾` of each sample's label, CTVAE only.
    fn pull_targets(&self, labels: Option<&[usize]>, rows: usize) -> Result<Option<Matrix>> {
        if self.kind != ModelKind::Ctvae {
            return Ok(None);
        }
        let priors = self.priors.as_ref().ok_or_else(|| invalid("CTVAE requires class priors"))?;
        let labels = labels.ok_or_else(|| invalid("CTVAE requires labels"))?;
        let mut t = Matrix::zeros(rows, priors.d_z());
        for (i, &c) in labels.iter().enumerate() {
            t.row_mut(i).copy_from_slice(priors.target(c)?);
        }
        Ok(Some(t))
    }

    /// Encoder means `μ` (the AE bottleneck).
    pub fn encode_mean(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        self.mu_head.predict(&self.encoder.predict(x)?)
    }

    /// Inference representation. Never sees labels.
    ///
    /// TVAE/CTVAE feed `x` straight into the decoder to get `ẑ`; VAE returns
    /// the μ head and AE its bottleneck.
    pub fn extract(&self, x: &Matrix) -> Result<Representation> {
        self.check_input(x)?;
        let (matrix, source) = match (self.kind, &self.decoder) {
            (ModelKind::Tvae | ModelKind::Ctvae, Some(dec)) => (dec.predict(x)?, RepresentationSource::ReconstructionZhat),
            (ModelKind::Vae, _) => (self.encode_mean(x)?, RepresentationSource::LatentMu),
            (ModelKind::Ae, _) => (self.encode_mean(x)?, RepresentationSource::LatentZ),
            _ => return Err(invalid("model has no decoder to extract from")),
        };
        Ok(Representation { matrix, source })
    }
}
