//! Position-based rope: a chain of particles joined by distance constraints.

pub const ROPE_PARTICLES: usize = 12;
pub const ROPE_REST_LENGTH: f64 = 0.1;
pub const ROPE_ITERATIONS: usize = 10;
/// Largest distance the pinned tip may travel between two projection passes,
/// as a fraction of the rest length. Bigger tip moves are split.
const MAX_SUBSTEP_FRACTION: f64 = 0.02;

/// Gauss-Seidel projection of every consecutive-pair distance constraint.
///
/// A violated pair moves each endpoint half of the correction along the pair
/// axis; a pinned endpoint stays put and its partner takes the full
/// correction. Pairs are visited from the last particle towards the first.
pub fn project_distances(particles: &mut [[f64; 2]], rest: f64, pinned: &[bool], iterations: usize) {
    let n = particles.len();
    for _ in 0..iterations {
        for i in (0..n.saturating_sub(1)).rev() {
            let (a, b) = (particles[i], particles[i + 1]);
            let d = [b[0] - a[0], b[1] - a[1]];
            let len = d[0].hypot(d[1]);
            if len == 0.0 || len == rest {
                continue;
            }
            let k = (len - rest) / len;
            let corr = [d[0] * k, d[1] * k];
            match (pinned[i], pinned[i + 1]) {
                (false, false) => {
                    particles[i] = [a[0] + 0.5 * corr[0], a[1] + 0.5 * corr[1]];
                    particles[i + 1] = [b[0] - 0.5 * corr[0], b[1] - 0.5 * corr[1]];
                }
                (true, false) => particles[i + 1] = [b[0] - corr[0], b[1] - corr[1]],
                (false, true) => particles[i] = [a[0] + corr[0], a[1] + corr[1]],
                (true, true) => {}
            }
        }
    }
}

/// Drags the tip (last particle) to `tip` and relaxes the chain.
///
/// Large tip moves are split into substeps, each followed by a full
/// [`ROPE_ITERATIONS`] projection pass, so the chain never falls behind by
/// more than a small fraction of a rest length.
pub fn drag_tip(particles: &mut [[f64; 2]], tip: [f64; 2]) {
    let n = particles.len();
    if n == 0 {
        return;
    }
    let start = particles[n - 1];
    let dist = (tip[0] - start[0]).hypot(tip[1] - start[1]);
    let substeps = ((dist / (MAX_SUBSTEP_FRACTION * ROPE_REST_LENGTH)).ceil() as usize).max(1);
    let mut pinned = vec![false; n];
    pinned[n - 1] = true;
    for k in 1..=substeps {
        let f = k as f64 / substeps as f64;
        particles[n - 1] = [start[0] + (tip[0] - start[0]) * f, start[1] + (tip[1] - start[1]) * f];
        project_distances(particles, ROPE_REST_LENGTH, &pinned, ROPE_ITERATIONS);
    }
    particles[n - 1] = tip;
}

/// Free rope relaxation with nothing pinned.
pub fn relax(particles: &mut [[f64; 2]]) {
    let pinned = vec![false; particles.len()];
    project_distances(particles, ROPE_REST_LENGTH, &pinned, ROPE_ITERATIONS);
}

pub fn straight_rope(start: [f64; 2], direction: [f64; 2]) -> Vec<[f64; 2]> {
    let norm = direction[0].hypot(direction[1]);
    let u = [direction[0] / norm, direction[1] / norm];
    (0..ROPE_PARTICLES)
        .map(|i| {
            let s = i as f64 * ROPE_REST_LENGTH;
            [start[0] + u[0] * s, start[1] + u[1] * s]
        })
        .collect()
}

pub fn max_stretch(particles: &[[f64; 2]]) -> (f64, f64) {
    particles.windows(2).fold((f64::INFINITY, 0.0f64), |(lo, hi), w| {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) / ROPE_REST_LENGTH;
        (lo.min(d), hi.max(d))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_projection_of_two_free_particles() {
        let mut p = [[0.0, 0.0], [2.0, 0.0]];
        project_distances(&mut p, 1.0, &[false, false], 1);
        assert_eq!(p, [[0.5, 0.0], [1.5, 0.0]]);
    }

    #[test]
    fn pinned_endpoint_does_not_move() {
        let mut p = [[0.0, 0.0], [2.0, 0.0]];
        project_distances(&mut p, 1.0, &[true, false], 1);
        assert_eq!(p, [[0.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn dragging_keeps_segments_near_rest_length() {
        let mut rope = straight_rope([-0.5, 0.0], [1.0, 0.0]);
        let mut tip = rope[ROPE_PARTICLES - 1];
        // pull along the rope, sideways, back towards it, and one big jump
        let moves = [[0.05, 0.0]; 20]
            .into_iter()
            .chain([[0.0, 0.05]; 20])
            .chain([[-0.05, -0.02]; 30])
            .chain([[0.5, 0.3]]);
        for m in moves {
            tip = [tip[0] + m[0], tip[1] + m[1]];
            drag_tip(&mut rope, tip);
            let (lo, hi) = max_stretch(&rope);
            assert!(lo >= 0.95 && hi <= 1.05, "stretch range [{lo}, {hi}]");
        }
    }
}
