//! Boundary point sets of objects and rope.

use std::f64::consts::TAU;

use crate::env::rng::{hash3, streams};
use crate::env::{CounterRng, ObjectKind, State, Tensor};

pub const POINT_CLOUD_SIZE: usize = 32;

enum Curve {
    Circle { c: [f64; 2], r: f64 },
    Square { c: [f64; 2], h: f64 },
    Polyline(Vec<[f64; 2]>),
}

impl Curve {
    fn length(&self) -> f64 {
        match self {
            Curve::Circle { r, .. } => TAU * r,
            Curve::Square { h, .. } => 8.0 * h,
            Curve::Polyline(p) => p.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum(),
        }
    }

    /// Point at arc length `s` in `[0, length)`.
    fn at(&self, s: f64) -> [f64; 2] {
        match self {
            Curve::Circle { c, r } => {
                let a = s / r;
                [c[0] + r * a.cos(), c[1] + r * a.sin()]
            }
            Curve::Square { c, h } => {
                let side = 2.0 * h;
                let k = ((s / side).floor() as usize).min(3);
                let u = s - k as f64 * side - h;
                match k {
                    0 => [c[0] + u, c[1] - h],
                    1 => [c[0] + h, c[1] + u],
                    2 => [c[0] - u, c[1] + h],
                    _ => [c[0] - h, c[1] - u],
                }
            }
            Curve::Polyline(p) => {
                let mut rest = s;
                for w in p.windows(2) {
                    let len = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
                    if rest <= len && len > 0.0 {
                        let f = rest / len;
                        return [w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])];
                    }
                    rest -= len;
                }
                *p.last().unwrap_or(&[0.0, 0.0])
            }
        }
    }
}

fn curves(state: &State) -> Vec<Curve> {
    let mut out: Vec<Curve> = state
        .objects
        .iter()
        .map(|o| match o.kind {
            ObjectKind::Disc => Curve::Circle { c: o.position, r: o.half_extent },
            ObjectKind::Box => Curve::Square { c: o.position, h: o.half_extent },
        })
        .collect();
    if let Some(rope) = &state.rope {
        out.push(Curve::Polyline(rope.clone()));
    }
    out
}

/// `m` points on the boundaries of all objects and the rope.
///
/// The concatenated boundary is split into `m` equal strata and one point is
/// drawn uniformly inside each, so every shape receives a share of points
/// proportional to its perimeter (within one point). A scene with nothing to
/// sample yields zeros.
pub fn sample_point_cloud(state: &State, m: usize, seed: u64) -> Tensor {
    let m = m.max(1);
    let curves = curves(state);
    let lengths: Vec<f64> = curves.iter().map(Curve::length).collect();
    let total: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(2 * m);
    if !(total > 0.0) {
        return Tensor::f32(vec![m, 2], vec![0.0; 2 * m]);
    }
    let mut rng = CounterRng::new(hash3(seed, streams::POINT_CLOUD, state.t as u64), streams::POINT_CLOUD);
    for i in 0..m {
        let mut s = (i as f64 + rng.next_f64()) * total / m as f64;
        let mut k = 0;
        while k + 1 < curves.len() && s >= lengths[k] {
            s -= lengths[k];
            k += 1;
        }
        let p = curves[k].at(s.min(lengths[k]));
        out.push(p[0] as f32);
        out.push(p[1] as f32);
    }
    Tensor::f32(vec![m, 2], out)
}
