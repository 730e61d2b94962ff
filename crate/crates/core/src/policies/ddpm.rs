use rand::Rng;
use rand_distr::StandardNormal;

use super::PolicyError;

/// Linear beta schedule and its cumulative products.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// `betas[t - 1]` is beta_t for t in 1..=T.
    pub betas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

impl Schedule {
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Self {
        let betas: Vec<f64> = (0..steps)
            .map(|i| {
                if steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
        let mut acc = 1.0;
        let alpha_bars = betas
            .iter()
            .map(|b| {
                acc *= 1.0 - b;
                acc
            })
            .collect();
        Self { betas, alpha_bars }
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    fn check(&self, t: usize) -> Result<(), PolicyError> {
        if t < 1 || t > self.steps() {
            return Err(PolicyError::BadTimestep { t, steps: self.steps() });
        }
        Ok(())
    }

    /// Noised sample `sqrt(abar_t) x0 + sqrt(1 - abar_t) eps`.
    pub fn forward(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check(t)?;
        let a = self.alpha_bar(t);
        let (s, n) = (a.sqrt(), (1.0 - a).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| s * x + n * e).collect())
    }

    /// One ancestral step from `x_t` to `x_{t-1}` given the predicted noise;
    /// `z` is ignored at t = 1.
    pub fn reverse_step(&self, x: &[f64], t: usize, eps_hat: &[f64], z: &[f64]) -> Result<Vec<f64>, PolicyError> {
        self.check(t)?;
        let (b, a) = (self.beta(t), self.alpha_bar(t));
        let k = b / (1.0 - a).sqrt();
        let inv = 1.0 / (1.0 - b).sqrt();
        let sigma = if t > 1 { b.sqrt() } else { 0.0 };
        Ok(x.iter().zip(eps_hat).zip(z).map(|((x, e), z)| (x - k * e) * inv + sigma * z).collect())
    }
}

/// `x_t` for a chunk `x0` at step `t`; see [`Schedule::forward`].
pub fn ddpm_forward(x0: &[f64], t: usize, eps: &[f64], schedule: &Schedule) -> Result<Vec<f64>, PolicyError> {
    schedule.forward(x0, t, eps)
}

pub(crate) fn normal_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}
