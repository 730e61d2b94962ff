use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::datastore::{ChannelStats, NormStats, ACTION_KEY};
use crate::env::{EnvSpec, Tensor};
use crate::neuro::{mse, Activation, Grads, Mlp, Tape};

use super::config::{ObsInput, PolicyConfig};
use super::PolicyError;

/// Standard deviations used for policy inputs and targets never fall below
/// this, so a channel that was nearly constant in the demonstrations cannot
/// blow up at test time.
pub const NORM_FLOOR: f64 = 1e-3;
/// Side of the grayscale image fed to the image branch.
pub const POOLED_SIDE: usize = 16;
pub const POINT_FEATURES: usize = 32;
pub const IMAGE_FEATURES: usize = 32;
pub const TASK_FEATURES: usize = 8;
pub const TASK_COUNT: usize = 3;

const PROPRIO_CHANNELS: [&str; 4] = ["joint_pos_abs", "ee_pose_abs", "gripper", "base_pose_abs"];
const POINT_CHANNEL: &str = "point_cloud";
const IMAGE_CHANNEL: &str = "image";
const TASK_CHANNEL: &str = "task_id";

/// Affine maps between raw and normalised observations and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub proprio_channels: Vec<String>,
    pub proprio_mean: Vec<f64>,
    pub proprio_std: Vec<f64>,
    /// Statistics pooled over all points, so the point branch stays
    /// permutation invariant.
    pub point_mean: [f64; 2],
    pub point_std: [f64; 2],
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
}

impl Normalizer {
    pub fn from_stats(spec: &EnvSpec, stats: &NormStats, cfg: &PolicyConfig) -> Result<Self, PolicyError> {
        let missing = |n: &str| PolicyError::MissingChannel(n.to_string());
        let mut proprio_channels = Vec::new();
        let (mut proprio_mean, mut proprio_std) = (Vec::new(), Vec::new());
        if cfg.uses(ObsInput::Proprio) {
            for name in PROPRIO_CHANNELS {
                if spec.channel(name).is_none() {
                    continue;
                }
                let s = stats.get(name).ok_or_else(|| missing(name))?;
                proprio_channels.push(name.to_string());
                proprio_mean.extend(&s.mean);
                proprio_std.extend(s.std.iter().map(|v| v.max(NORM_FLOOR)));
            }
            if proprio_channels.is_empty() {
                return Err(missing("joint_pos_abs"));
            }
        }
        let (mut point_mean, mut point_std) = ([0.0; 2], [1.0; 2]);
        if cfg.uses(ObsInput::PointCloud) {
            if spec.channel(POINT_CHANNEL).is_none() {
                return Err(missing(POINT_CHANNEL));
            }
            let s = stats.get(POINT_CHANNEL).ok_or_else(|| missing(POINT_CHANNEL))?;
            (point_mean, point_std) = pool_point_stats(s);
        }
        for (input, name) in [(ObsInput::Image, IMAGE_CHANNEL), (ObsInput::TaskId, TASK_CHANNEL)] {
            if cfg.uses(input) && spec.channel(name).is_none() {
                return Err(missing(name));
            }
        }
        let a = stats.get(ACTION_KEY).ok_or_else(|| missing(ACTION_KEY))?;
        Ok(Self {
            proprio_channels,
            proprio_mean,
            proprio_std,
            point_mean,
            point_std,
            action_mean: a.mean.clone(),
            action_std: a.std.iter().map(|v| v.max(NORM_FLOOR)).collect(),
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_mean.len()
    }

    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter().enumerate().map(|(i, v)| (v - self.action_mean[i % self.action_dim()]) / self.action_std[i % self.action_dim()]).collect()
    }

    pub fn denormalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter().enumerate().map(|(i, v)| v * self.action_std[i % self.action_dim()] + self.action_mean[i % self.action_dim()]).collect()
    }

    /// Builds the normalised network inputs from one step's channels.
    pub fn prepare(&self, cfg: &PolicyConfig, channels: &BTreeMap<String, Tensor>) -> Result<ObsRow, PolicyError> {
        let get = |n: &str| channels.get(n).ok_or_else(|| PolicyError::MissingChannel(n.to_string()));
        let mut row = ObsRow::default();
        if cfg.uses(ObsInput::Proprio) {
            for name in &self.proprio_channels {
                row.proprio.extend(get(name)?.to_f64_vec());
            }
            if row.proprio.len() != self.proprio_mean.len() {
                return Err(PolicyError::Incompatible(format!(
                    "proprio width {} but statistics cover {}",
                    row.proprio.len(),
                    self.proprio_mean.len()
                )));
            }
            for ((v, m), s) in row.proprio.iter_mut().zip(&self.proprio_mean).zip(&self.proprio_std) {
                *v = (*v - m) / s;
            }
        }
        if cfg.uses(ObsInput::PointCloud) {
            let t = get(POINT_CHANNEL)?;
            if t.shape.last() != Some(&2) {
                return Err(PolicyError::Incompatible(format!("point cloud shape {:?}", t.shape)));
            }
            row.points = t.to_f64_vec();
            for (i, v) in row.points.iter_mut().enumerate() {
                *v = (*v - self.point_mean[i % 2]) / self.point_std[i % 2];
            }
        }
        if cfg.uses(ObsInput::Image) {
            row.image = pool_image(get(IMAGE_CHANNEL)?)?;
        }
        if cfg.uses(ObsInput::TaskId) {
            let t = get(TASK_CHANNEL)?.to_f64_vec();
            row.task = t.first().map(|v| (*v as usize).min(TASK_COUNT - 1)).unwrap_or(0);
        }
        Ok(row)
    }
}

/// Pooled mean and standard deviation per coordinate from per-element
/// statistics laid out as `[m, 2]`.
fn pool_point_stats(s: &ChannelStats) -> ([f64; 2], [f64; 2]) {
    let m = (s.mean.len() / 2).max(1) as f64;
    let mut mean = [0.0; 2];
    let mut second = [0.0; 2];
    for (i, (mu, sd)) in s.mean.iter().zip(&s.std).enumerate() {
        mean[i % 2] += mu / m;
        second[i % 2] += (sd * sd + mu * mu) / m;
    }
    let std = [0, 1].map(|c| (second[c] - mean[c] * mean[c]).max(0.0).sqrt().max(NORM_FLOOR));
    (mean, std)
}

/// Average-pools an RGB u8 image to `POOLED_SIDE`² grayscale values in [0, 1].
pub fn pool_image(t: &Tensor) -> Result<Vec<f64>, PolicyError> {
    let (h, w) = match t.shape[..] {
        [h, w, 3] if h > 0 && w > 0 => (h, w),
        _ => return Err(PolicyError::Incompatible(format!("image shape {:?}", t.shape))),
    };
    let px = t.to_f64_vec();
    let mut sum = vec![0.0; POOLED_SIDE * POOLED_SIDE];
    let mut count = vec![0usize; POOLED_SIDE * POOLED_SIDE];
    for y in 0..h {
        let by = y * POOLED_SIDE / h;
        for x in 0..w {
            let bx = x * POOLED_SIDE / w;
            let p = &px[(y * w + x) * 3..(y * w + x) * 3 + 3];
            sum[by * POOLED_SIDE + bx] += (p[0] + p[1] + p[2]) / (3.0 * 255.0);
            count[by * POOLED_SIDE + bx] += 1;
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect())
}

/// Normalised inputs of one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObsRow {
    pub proprio: Vec<f64>,
    /// Row-major `[m, 2]`.
    pub points: Vec<f64>,
    pub image: Vec<f64>,
    pub task: usize,
}

/// The networks of a policy: optional encoder branches and the head.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNets {
    pub proprio_dim: usize,
    /// Per-point layer; features are the elementwise max over points.
    pub point: Option<Mlp>,
    pub image: Option<Mlp>,
    /// Linear map of a one-hot task index, i.e. a learned embedding table.
    pub task: Option<Mlp>,
    pub head: Mlp,
}

/// Per-network gradients in the same order as [`PolicyNets::nets`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyGrads {
    pub nets: Vec<Grads>,
}

impl PolicyGrads {
    pub fn flat(&self) -> Vec<f64> {
        self.nets.iter().flat_map(|g| g.flat()).collect()
    }
}

/// A training batch: observations, extra head inputs (noisy chunk and
/// timestep embedding for diffusion, otherwise empty) and regression targets.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub rows: Vec<&'a ObsRow>,
    pub extra: Vec<f64>,
    pub target: Vec<f64>,
}

struct EncodeTape {
    point: Option<(Tape, Vec<usize>, usize)>,
    image: Option<Tape>,
    task: Option<Tape>,
}

impl PolicyNets {
    /// Fresh networks; `extra_in` is the width of extra head inputs and
    /// `out` the head output width.
    pub fn new(cfg: &PolicyConfig, proprio_dim: usize, extra_in: usize, out: usize) -> Result<Self, PolicyError> {
        let seed = cfg.seed;
        let point = cfg
            .uses(ObsInput::PointCloud)
            .then(|| Mlp::new(&[2, POINT_FEATURES], Activation::Identity, seed ^ 0x11))
            .transpose()?;
        let image = cfg
            .uses(ObsInput::Image)
            .then(|| Mlp::new(&[POOLED_SIDE * POOLED_SIDE, 64, IMAGE_FEATURES], Activation::Relu, seed ^ 0x22))
            .transpose()?;
        let task = cfg
            .uses(ObsInput::TaskId)
            .then(|| Mlp::new(&[TASK_COUNT, TASK_FEATURES], Activation::Identity, seed ^ 0x33))
            .transpose()?;
        let proprio_dim = if cfg.uses(ObsInput::Proprio) { proprio_dim } else { 0 };
        let feat = proprio_dim
            + point.as_ref().map_or(0, |_| POINT_FEATURES)
            + image.as_ref().map_or(0, |_| IMAGE_FEATURES)
            + task.as_ref().map_or(0, |_| TASK_FEATURES);
        let mut widths = vec![feat + extra_in];
        widths.extend(&cfg.hidden);
        widths.push(out);
        let head = Mlp::new(&widths, Activation::Relu, seed ^ 0x44)?;
        Ok(Self { proprio_dim, point, image, task, head })
    }

    pub fn feature_dim(&self) -> usize {
        self.proprio_dim
            + self.point.as_ref().map_or(0, |n| n.output_dim())
            + self.image.as_ref().map_or(0, |n| n.output_dim())
            + self.task.as_ref().map_or(0, |n| n.output_dim())
    }

    /// Networks in parameter order: point, image, task (when present), head.
    pub fn nets(&self) -> Vec<&Mlp> {
        let mut v: Vec<&Mlp> = [&self.point, &self.image, &self.task].into_iter().flatten().collect();
        v.push(&self.head);
        v
    }

    pub fn nets_mut(&mut self) -> Vec<&mut Mlp> {
        let mut v: Vec<&mut Mlp> = [&mut self.point, &mut self.image, &mut self.task].into_iter().flatten().collect();
        v.push(&mut self.head);
        v
    }

    pub fn params(&self) -> Vec<f32> {
        self.nets().iter().flat_map(|n| n.params()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.nets().iter().map(|n| n.param_count()).sum()
    }

    pub fn set_params(&mut self, flat: &[f32]) -> Result<(), PolicyError> {
        if flat.len() != self.param_count() {
            return Err(PolicyError::BadModel(format!("expected {} parameters, got {}", self.param_count(), flat.len())));
        }
        let mut off = 0;
        for n in self.nets_mut() {
            let k = n.param_count();
            n.set_params(&flat[off..off + k])?;
            off += k;
        }
        Ok(())
    }

    fn encode(&self, rows: &[&ObsRow]) -> Result<(Vec<f64>, EncodeTape), PolicyError> {
        let b = rows.len();
        let fdim = self.feature_dim();
        let mut feats = vec![0.0; b * fdim];
        for (r, row) in rows.iter().enumerate() {
            if row.proprio.len() != self.proprio_dim {
                return Err(PolicyError::Incompatible(format!("proprio width {} != {}", row.proprio.len(), self.proprio_dim)));
            }
            feats[r * fdim..r * fdim + self.proprio_dim].copy_from_slice(&row.proprio);
        }
        let mut off = self.proprio_dim;
        let mut tape = EncodeTape { point: None, image: None, task: None };
        if let Some(net) = &self.point {
            let m = rows[0].points.len() / 2;
            if m == 0 || rows.iter().any(|r| r.points.len() != 2 * m) {
                return Err(PolicyError::MissingChannel(POINT_CHANNEL.into()));
            }
            let x: Vec<f64> = rows.iter().flat_map(|r| r.points.iter().copied()).collect();
            let t = net.forward_tape(&x, b * m)?;
            let k = net.output_dim();
            let out = t.output();
            let mut arg = vec![0usize; b * k];
            for r in 0..b {
                for f in 0..k {
                    let mut best = 0;
                    for p in 1..m {
                        if out[(r * m + p) * k + f] > out[(r * m + best) * k + f] {
                            best = p;
                        }
                    }
                    arg[r * k + f] = best;
                    feats[r * fdim + off + f] = out[(r * m + best) * k + f];
                }
            }
            off += k;
            tape.point = Some((t, arg, m));
        }
        if let Some(net) = &self.image {
            let d = net.input_dim();
            if rows.iter().any(|r| r.image.len() != d) {
                return Err(PolicyError::MissingChannel(IMAGE_CHANNEL.into()));
            }
            let x: Vec<f64> = rows.iter().flat_map(|r| r.image.iter().copied()).collect();
            let t = net.forward_tape(&x, b)?;
            let k = net.output_dim();
            for r in 0..b {
                feats[r * fdim + off..r * fdim + off + k].copy_from_slice(&t.output()[r * k..(r + 1) * k]);
            }
            off += k;
            tape.image = Some(t);
        }
        if let Some(net) = &self.task {
            let n = net.input_dim();
            let mut x = vec![0.0; b * n];
            for (r, row) in rows.iter().enumerate() {
                x[r * n + row.task.min(n - 1)] = 1.0;
            }
            let t = net.forward_tape(&x, b)?;
            let k = net.output_dim();
            for r in 0..b {
                feats[r * fdim + off..r * fdim + off + k].copy_from_slice(&t.output()[r * k..(r + 1) * k]);
            }
            tape.task = Some(t);
        }
        Ok((feats, tape))
    }

    fn head_input(&self, feats: &[f64], extra: &[f64], b: usize) -> Result<Vec<f64>, PolicyError> {
        let fdim = self.feature_dim();
        let e = self.head.input_dim() - fdim;
        if extra.len() != b * e {
            return Err(PolicyError::Incompatible(format!("extra head input {} != {}", extra.len(), b * e)));
        }
        if e == 0 {
            return Ok(feats.to_vec());
        }
        let mut x = Vec::with_capacity(b * (fdim + e));
        for r in 0..b {
            x.extend_from_slice(&feats[r * fdim..(r + 1) * fdim]);
            x.extend_from_slice(&extra[r * e..(r + 1) * e]);
        }
        Ok(x)
    }

    /// Head outputs for a batch of observations.
    pub fn forward(&self, rows: &[&ObsRow], extra: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let (feats, _) = self.encode(rows)?;
        let x = self.head_input(&feats, extra, rows.len())?;
        Ok(self.head.forward(&x, rows.len())?)
    }

    /// Encoder features only; used to run many head evaluations per
    /// observation without re-encoding.
    pub fn features(&self, row: &ObsRow) -> Result<Vec<f64>, PolicyError> {
        Ok(self.encode(&[row])?.0)
    }

    pub fn head_forward(&self, feats: &[f64], extra: &[f64], b: usize) -> Result<Vec<f64>, PolicyError> {
        let x = self.head_input(feats, extra, b)?;
        Ok(self.head.forward(&x, b)?)
    }

    /// Mean-squared error of the head output against `batch.target` and its
    /// gradient with respect to every parameter of every network.
    pub fn loss_grad(&self, batch: &Batch) -> Result<(f64, PolicyGrads), PolicyError> {
        let b = batch.rows.len();
        let (feats, tape) = self.encode(&batch.rows)?;
        let x = self.head_input(&feats, &batch.extra, b)?;
        let head_tape = self.head.forward_tape(&x, b)?;
        let (loss, dy) = mse(head_tape.output(), &batch.target)?;
        let mut head_g = Grads::zeros_like(&self.head);
        let need_input = self.point.is_some() || self.image.is_some() || self.task.is_some();
        let dx = self.head.backward(&head_tape, &dy, &mut head_g, need_input);
        let mut nets = Vec::new();
        if let Some(dx) = dx {
            let hin = self.head.input_dim();
            let mut off = self.proprio_dim;
            if let (Some(net), Some((t, arg, m))) = (&self.point, &tape.point) {
                let k = net.output_dim();
                let mut dout = vec![0.0; b * m * k];
                for r in 0..b {
                    for f in 0..k {
                        dout[(r * m + arg[r * k + f]) * k + f] = dx[r * hin + off + f];
                    }
                }
                let mut g = Grads::zeros_like(net);
                net.backward(t, &dout, &mut g, false);
                nets.push(g);
                off += k;
            }
            for (net, t) in [(&self.image, &tape.image), (&self.task, &tape.task)] {
                if let (Some(net), Some(t)) = (net, t) {
                    let k = net.output_dim();
                    let dout: Vec<f64> = (0..b).flat_map(|r| dx[r * hin + off..r * hin + off + k].iter().copied()).collect();
                    let mut g = Grads::zeros_like(net);
                    net.backward(t, &dout, &mut g, false);
                    nets.push(g);
                    off += k;
                }
            }
        }
        nets.push(head_g);
        Ok((loss, PolicyGrads { nets }))
    }
}
