//! Planar serial-chain kinematics.

use serde::{Deserialize, Serialize};

/// Iteration cap of the inverse-kinematics solver.
pub const IK_MAX_ITERATIONS: usize = 100;
/// Initial damping of the least-squares step.
pub const IK_DAMPING: f64 = 0.1;
/// Position error at which the solver stops early.
pub const IK_TOLERANCE: f64 = 1e-8;
/// Largest residual accepted as a solution.
pub const IK_ACCEPT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KinematicsError {
    #[error("expected {expected} joint values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("link lengths must be positive")]
    BadLinkLength,
    #[error("target at distance {distance:.6} is outside the reachable annulus [{min_reach:.6}, {max_reach:.6}]")]
    Unreachable { distance: f64, min_reach: f64, max_reach: f64 },
    #[error("inverse kinematics did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64, best: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub link_lengths: Vec<f64>,
    pub base: Pose2,
}

impl KinematicChain {
    pub fn new(link_lengths: Vec<f64>, base: Pose2) -> Result<Self, KinematicsError> {
        if link_lengths.is_empty() || link_lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(KinematicsError::BadLinkLength);
        }
        Ok(Self { link_lengths, base })
    }

    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    pub fn max_reach(&self) -> f64 {
        self.link_lengths.iter().sum()
    }

    /// Radius of the unreachable disc around the base (zero unless one link is
    /// longer than all the others combined).
    pub fn min_reach(&self) -> f64 {
        let longest = self.link_lengths.iter().cloned().fold(0.0, f64::max);
        (2.0 * longest - self.max_reach()).max(0.0)
    }

    fn check(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.dof() {
            return Err(KinematicsError::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    pub fn fk(&self, q: &[f64]) -> Result<Pose2, KinematicsError> {
        self.check(q)?;
        let (mut x, mut y, mut phi) = (self.base.x, self.base.y, self.base.theta);
        for (l, qi) in self.link_lengths.iter().zip(q) {
            phi += qi;
            x += l * phi.cos();
            y += l * phi.sin();
        }
        Ok(Pose2 { x, y, theta: phi })
    }

    /// Base, every joint and the end-effector, in order.
    pub fn joint_positions(&self, q: &[f64]) -> Result<Vec<[f64; 2]>, KinematicsError> {
        self.check(q)?;
        let mut out = Vec::with_capacity(q.len() + 1);
        let (mut x, mut y, mut phi) = (self.base.x, self.base.y, self.base.theta);
        out.push([x, y]);
        for (l, qi) in self.link_lengths.iter().zip(q) {
            phi += qi;
            x += l * phi.cos();
            y += l * phi.sin();
            out.push([x, y]);
        }
        Ok(out)
    }

    /// Columns d(x, y)/dq_i of the position Jacobian.
    pub fn position_jacobian(&self, q: &[f64]) -> Result<Vec<[f64; 2]>, KinematicsError> {
        let pts = self.joint_positions(q)?;
        let ee = *pts.last().unwrap();
        // joint i rotates everything beyond point i about point i
        Ok(pts[..q.len()].iter().map(|p| [-(ee[1] - p[1]), ee[0] - p[0]]).collect())
    }

    /// Whether `target` lies in the reachable annulus.
    pub fn reachable(&self, target: [f64; 2]) -> bool {
        let d = (target[0] - self.base.x).hypot(target[1] - self.base.y);
        d <= self.max_reach() && d >= self.min_reach()
    }

    /// Moves `target` radially into the reachable annulus, `margin` inside its
    /// boundary. Reachable targets are returned unchanged.
    pub fn project_reachable(&self, target: [f64; 2], margin: f64) -> [f64; 2] {
        let (dx, dy) = (target[0] - self.base.x, target[1] - self.base.y);
        let d = dx.hypot(dy);
        let (lo, hi) = (self.min_reach(), self.max_reach());
        let r = if d > hi - margin {
            hi - margin
        } else if d < lo + margin {
            lo + margin
        } else {
            return target;
        };
        if d == 0.0 {
            return [self.base.x + r, self.base.y];
        }
        [self.base.x + dx * r / d, self.base.y + dy * r / d]
    }

    /// Damped least-squares inverse kinematics for the end-effector position.
    ///
    /// The damping starts at [`IK_DAMPING`] and is adapted Levenberg-Marquardt
    /// style: shrunk after an accepted step, grown after a rejected one. A
    /// fixed damping stalls near the fully extended configuration, where the
    /// Jacobian loses rank.
    pub fn ik(&self, target: [f64; 2], q_init: &[f64]) -> Result<Vec<f64>, KinematicsError> {
        self.check(q_init)?;
        let distance = (target[0] - self.base.x).hypot(target[1] - self.base.y);
        if !self.reachable(target) {
            return Err(KinematicsError::Unreachable {
                distance,
                min_reach: self.min_reach(),
                max_reach: self.max_reach(),
            });
        }
        let residual = |q: &[f64]| -> [f64; 2] {
            let p = self.fk(q).expect("dimension checked");
            [target[0] - p.x, target[1] - p.y]
        };
        let mut q = q_init.to_vec();
        let mut err = residual(&q);
        let mut norm = err[0].hypot(err[1]);
        let mut lambda = IK_DAMPING;
        for _ in 0..IK_MAX_ITERATIONS {
            if norm < IK_TOLERANCE {
                break;
            }
            let jac = self.position_jacobian(&q)?;
            // (J J^T + lambda^2 I) y = err, dq = J^T y
            let (mut a, mut b, mut d) = (lambda * lambda, 0.0, lambda * lambda);
            for c in &jac {
                a += c[0] * c[0];
                b += c[0] * c[1];
                d += c[1] * c[1];
            }
            let det = a * d - b * b;
            let y = [(d * err[0] - b * err[1]) / det, (a * err[1] - b * err[0]) / det];
            let trial: Vec<f64> = q.iter().zip(&jac).map(|(qi, c)| qi + c[0] * y[0] + c[1] * y[1]).collect();
            let trial_err = residual(&trial);
            let trial_norm = trial_err[0].hypot(trial_err[1]);
            if trial_norm < norm {
                q = trial;
                err = trial_err;
                norm = trial_norm;
                lambda = (lambda / 3.0).max(1e-12);
            } else {
                lambda *= 4.0;
            }
        }
        if norm < IK_ACCEPT {
            Ok(q)
        } else {
            Err(KinematicsError::NoConvergence { residual: norm, best: q })
        }
    }
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}
