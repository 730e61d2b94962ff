use serde::{Deserialize, Serialize};

use super::{Grads, Mlp, NeuroError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected adaptive-moment optimiser state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<(Vec<f64>, Vec<f64>)>,
    v: Vec<(Vec<f64>, Vec<f64>)>,
}

impl AdamState {
    pub fn new(net: &Mlp, config: AdamConfig) -> Self {
        let zeros = Grads::zeros_like(net).layers;
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update. Non-finite gradients are rejected before anything
    /// changes; a parameter that overflows during the update is reported as
    /// an error as well.
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<(), NeuroError> {
        if grads.layers.len() != net.layers.len() {
            return Err(NeuroError::ShapeMismatch { expected: net.layers.len(), got: grads.layers.len() });
        }
        for (k, (gw, gb)) in grads.layers.iter().enumerate() {
            if let Some(g) = gw.iter().chain(gb).find(|g| !g.is_finite()) {
                return Err(NeuroError::NonFinite(format!("layer {k}: gradient {g}")));
            }
        }
        let c = self.config;
        let t = (self.step + 1) as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (k, layer) in net.layers.iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[k];
            let (mw, mb) = &mut self.m[k];
            let (vw, vb) = &mut self.v[k];
            let params = layer.w.iter_mut().chain(layer.b.iter_mut());
            let g = gw.iter().chain(gb);
            let ms = mw.iter_mut().chain(mb.iter_mut());
            let vs = vw.iter_mut().chain(vb.iter_mut());
            for (((p, &g), mi), vi) in params.zip(g).zip(ms).zip(vs) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                let upd = c.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + c.eps);
                let next = (*p as f64 - upd) as f32;
                if !next.is_finite() {
                    return Err(NeuroError::NonFinite(format!("layer {k}: parameter {p} would become {next}")));
                }
                *p = next;
            }
        }
        self.step += 1;
        Ok(())
    }
}
