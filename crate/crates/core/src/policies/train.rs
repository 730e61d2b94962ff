use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::datastore::{stats_of, Dataset, Episode, NormStats};
use crate::neuro::{timestep_embed, AdamConfig, AdamState};

use super::config::{PolicyConfig, PolicyKind};
use super::ddpm::normal_vec;
use super::encoder::{Batch, Normalizer, ObsRow};
use super::model::PolicyModel;
use super::PolicyError;

/// Training pairs: one observation and its normalised target (a single
/// action or a chunk padded by repeating the episode's last action).
#[derive(Debug, Clone)]
pub struct Samples {
    pub rows: Vec<ObsRow>,
    pub targets: Vec<Vec<f64>>,
}

pub fn build_samples(
    kind: PolicyKind,
    cfg: &PolicyConfig,
    norm: &Normalizer,
    episodes: &[Episode],
) -> Result<Samples, PolicyError> {
    let a = norm.action_dim();
    let h = if kind == PolicyKind::Bc { 1 } else { cfg.chunk };
    let mut out = Samples { rows: Vec::new(), targets: Vec::new() };
    for ep in episodes {
        let actions = norm.normalize_action(&ep.actions.to_f64_vec());
        let t_len = ep.len();
        for t in 0..t_len {
            let channels = ep.channels.iter().map(|(k, v)| (k.clone(), v.row(t))).collect();
            out.rows.push(norm.prepare(cfg, &channels)?);
            let mut target = Vec::with_capacity(h * a);
            for k in 0..h {
                let s = (t + k).min(t_len - 1);
                target.extend_from_slice(&actions[s * a..(s + 1) * a]);
            }
            out.targets.push(target);
        }
    }
    Ok(out)
}

/// Trains a policy on the successful episodes of `dataset`.
pub fn train(kind: PolicyKind, cfg: &PolicyConfig, dataset: &mut Dataset) -> Result<PolicyModel, PolicyError> {
    let indices: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.episodes[i].success).collect();
    if indices.is_empty() {
        return Err(PolicyError::NoSuccessfulEpisodes);
    }
    let episodes = indices.iter().map(|&i| dataset.load(i)).collect::<Result<Vec<_>, _>>()?;
    let stats = stats_of(&episodes)?;
    let mut model = train_episodes(kind, cfg, &dataset.env_spec, &stats, &episodes)?;
    if let serde_json::Value::Object(m) = &mut model.training {
        m.insert("dataset".into(), json!(dataset.root.display().to_string()));
    }
    Ok(model)
}

/// Trains on the given episodes (all of which are used) with `stats` as the
/// normalisation source.
pub fn train_episodes(
    kind: PolicyKind,
    cfg: &PolicyConfig,
    spec: &crate::env::EnvSpec,
    stats: &NormStats,
    episodes: &[Episode],
) -> Result<PolicyModel, PolicyError> {
    cfg.validate()?;
    if episodes.is_empty() {
        return Err(PolicyError::NoSuccessfulEpisodes);
    }
    let start = Instant::now();
    let norm = Normalizer::from_stats(spec, stats, cfg)?;
    let samples = build_samples(kind, cfg, &norm, episodes)?;
    let mut model = PolicyModel::init(kind, cfg.clone(), spec.clone(), norm)?;
    let schedule = model.schedule();
    let embeds = (1..=cfg.diffusion_steps)
        .map(|t| timestep_embed(t as u32, cfg.time_embed_dim))
        .collect::<Result<Vec<_>, _>>()?;
    let adam = AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() };
    let mut opts: Vec<AdamState> = model.nets.nets().iter().map(|n| AdamState::new(n, adam)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..samples.rows.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for idx in order.chunks(cfg.batch_size) {
            let rows: Vec<&ObsRow> = idx.iter().map(|&i| &samples.rows[i]).collect();
            let (extra, target) = match kind {
                PolicyKind::DiffusionLite => {
                    let (mut extra, mut target) = (Vec::new(), Vec::new());
                    for &i in idx {
                        let x0 = &samples.targets[i];
                        let t = rng.random_range(1..=cfg.diffusion_steps);
                        let eps = normal_vec(&mut rng, x0.len());
                        extra.extend(schedule.forward(x0, t, &eps)?);
                        extra.extend_from_slice(&embeds[t - 1]);
                        target.extend(eps);
                    }
                    (extra, target)
                }
                _ => (Vec::new(), idx.iter().flat_map(|&i| samples.targets[i].iter().copied()).collect()),
            };
            let (loss, grads) = model.nets.loss_grad(&Batch { rows, extra, target })?;
            for ((net, opt), g) in model.nets.nets_mut().into_iter().zip(&mut opts).zip(&grads.nets) {
                opt.step(net, g)?;
            }
            sum += loss * idx.len() as f64;
            count += idx.len();
        }
        losses.push(sum / count.max(1) as f64);
    }
    model.training = json!({
        "policy": kind.name(),
        "config": cfg,
        "episodes": episodes.len(),
        "samples": samples.rows.len(),
        "epoch_loss": losses,
        "seconds": start.elapsed().as_secs_f64(),
    });
    Ok(model)
}
