//! Deterministic planar kinematic simulator.
//!
//! Arms are serial chains of revolute joints on a fixed or mobile base, objects
//! are boxes and discs that can be grasped or pushed, and the rope is a chain
//! of particles relaxed by distance-constraint projection.

pub mod kinematics;
pub mod physics;
mod planar;
pub mod pointcloud;
pub mod render;
pub mod rope;
pub mod scene;
pub mod tasks;

pub use kinematics::{wrap_angle, KinematicChain, KinematicsError, Pose2};
pub use physics::simulate_step;
pub use planar::{
    builtin_specs, default_channels, make_planar, make_spec, register_builtins, PlanarEnv, DEFAULT_CONTROL_HZ,
    DEFAULT_MAX_STEPS, DEFAULT_RANDOMIZATION_RADIUS,
};
pub use pointcloud::sample_point_cloud;
pub use render::render_image;
pub use tasks::success;
