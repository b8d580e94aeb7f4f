use crate::error::{invalid, Result};

/// Adam with bias correction. One moment buffer per tracked tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta_m: f64,
    pub beta_v: f64,
    pub eps: f64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Conventional constants (0.9, 0.999, 1e-8) for tensors of the given lengths.
    pub fn new(lr: f64, tensor_lens: &[usize]) -> Result<Self> {
        Self::with_constants(lr, 0.9, 0.999, 1e-8, tensor_lens)
    }

    pub fn with_constants(lr: f64, beta_m: f64, beta_v: f64, eps: f64, tensor_lens: &[usize]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(invalid(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0 < beta_m && beta_m < 1.0 && 0.0 < beta_v && beta_v < 1.0) {
            return Err(invalid(format!(
                "Adam betas must lie in (0, 1), got {beta_m}, {beta_v}"
            )));
        }
        if !(eps > 0.0) {
            return Err(invalid(format!("Adam eps must be positive, got {eps}")));
        }
        Ok(Self {
            step: 0,
            lr,
            beta_m,
            beta_v,
            eps,
            first_moment: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: tensor_lens.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn tensor_count(&self) -> usize {
        self.first_moment.len()
    }

    /// Applies one update in place and increments `step`.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(invalid(format!(
                "Adam tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(invalid(format!(
                    "tensor {i}: moment length {}, param length {}, grad length {}",
                    self.first_moment[i].len(),
                    p.len(),
                    g.len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc_m = 1.0 - self.beta_m.powi(t);
        let bc_v = 1.0 - self.beta_v.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = self.beta_m * m[j] + (1.0 - self.beta_m) * gj;
                v[j] = self.beta_v * v[j] + (1.0 - self.beta_v) * gj * gj;
                let m_hat = m[j] / bc_m;
                let v_hat = v[j] / bc_v;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
