//! Top-down rasterisation of the workspace.

use crate::env::{ObjectKind, State, TaskId, Tensor};

use super::kinematics::KinematicChain;
use super::scene::WORKSPACE_HALF;

pub const IMAGE_SIZE: usize = 64;

pub const BACKGROUND: [u8; 3] = [0, 0, 0];
pub const LINK_COLOR: [u8; 3] = [200, 200, 200];
pub const OBJECT_COLOR: [u8; 3] = [220, 40, 40];
pub const GOAL_COLOR: [u8; 3] = [40, 200, 60];
pub const ROPE_COLOR: [u8; 3] = [50, 90, 230];

const LINK_HALF_WIDTH: f64 = 0.03;
const ROPE_HALF_WIDTH: f64 = 0.025;
const GOAL_RING_WIDTH: f64 = 0.03;

struct Canvas {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Canvas {
    /// World coordinates of the centre of pixel (row, col); row 0 is the top.
    fn world(&self, row: usize, col: usize) -> [f64; 2] {
        let span = 2.0 * WORKSPACE_HALF;
        [
            -WORKSPACE_HALF + (col as f64 + 0.5) * span / self.w as f64,
            WORKSPACE_HALF - (row as f64 + 0.5) * span / self.h as f64,
        ]
    }

    /// Pixel containing a world point, if it is inside the image.
    fn pixel(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let span = 2.0 * WORKSPACE_HALF;
        let col = ((p[0] + WORKSPACE_HALF) / span * self.w as f64).floor();
        let row = ((WORKSPACE_HALF - p[1]) / span * self.h as f64).floor();
        if col < 0.0 || row < 0.0 || col >= self.w as f64 || row >= self.h as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    fn put(&mut self, row: usize, col: usize, c: [u8; 3]) {
        let i = (row * self.w + col) * 3;
        self.px[i..i + 3].copy_from_slice(&c);
    }

    fn fill(&mut self, c: [u8; 3], inside: impl Fn([f64; 2]) -> bool) {
        for row in 0..self.h {
            for col in 0..self.w {
                if inside(self.world(row, col)) {
                    self.put(row, col, c);
                }
            }
        }
    }

    fn segment(&mut self, a: [f64; 2], b: [f64; 2], half_width: f64, c: [u8; 3]) {
        self.fill(c, |p| segment_distance(p, a, b) <= half_width);
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let s = if len2 > 0.0 { (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - s * ab[0]).hypot(p[1] - a[1] - s * ab[1])
}

/// Renders goals, rope, objects and arm links, in that order, onto a
/// `[height, width, 3]` image of the `[-2.5, 2.5]^2` workspace (y up).
pub fn render_image(state: &State, chains: &[KinematicChain], width: usize, height: usize) -> Tensor {
    let (width, height) = (width.max(8), height.max(8));
    let mut cv = Canvas { w: width, h: height, px: vec![0; width * height * 3] };

    for obj in &state.objects {
        let g = obj.goal_region;
        if state.task.leaf() == TaskId::Push {
            cv.fill(GOAL_COLOR, |p| (p[0] - g.center[0]).abs() <= 0.5 * GOAL_RING_WIDTH.max(2.5 / width as f64));
        } else {
            cv.fill(GOAL_COLOR, |p| ((p[0] - g.center[0]).hypot(p[1] - g.center[1]) - g.radius).abs() <= GOAL_RING_WIDTH);
        }
    }
    if let Some(g) = state.rope_goal {
        cv.fill(GOAL_COLOR, |p| ((p[0] - g.center[0]).hypot(p[1] - g.center[1]) - g.radius).abs() <= GOAL_RING_WIDTH);
    }
    if let Some(rope) = &state.rope {
        for w in rope.windows(2) {
            cv.segment(w[0], w[1], ROPE_HALF_WIDTH, ROPE_COLOR);
        }
    }
    for obj in &state.objects {
        let (c, r) = (obj.position, obj.half_extent);
        match obj.kind {
            ObjectKind::Box => cv.fill(OBJECT_COLOR, |p| (p[0] - c[0]).abs() <= r && (p[1] - c[1]).abs() <= r),
            ObjectKind::Disc => cv.fill(OBJECT_COLOR, |p| (p[0] - c[0]).hypot(p[1] - c[1]) <= r),
        }
        // small objects still cover the pixel holding their centre
        if let Some((row, col)) = cv.pixel(c) {
            cv.put(row, col, OBJECT_COLOR);
        }
    }
    let mut offset = 0;
    for chain in chains {
        let q = &state.joint_angles[offset..offset + chain.dof()];
        offset += chain.dof();
        let pts = chain.joint_positions(q).expect("state matches chains");
        for w in pts.windows(2) {
            cv.segment(w[0], w[1], LINK_HALF_WIDTH, LINK_COLOR);
        }
    }
    Tensor::u8(vec![height, width, 3], cv.px)
}
