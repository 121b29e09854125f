//! Geometric affordance-sample lifting and pointwise human-object primitive
//! distributions.
//!
//! The crate is organised bottom-up:
//!
//! * [`geom`] meshes, rigid transforms, surface sampling, masks and a
//!   silhouette rasterizer.
//! * [`camera`] weak-perspective cameras, rigs and two-view triangulation.
//! * [`maskgen`] and [`adamask`] image-space inpainting-mask proposal and the
//!   adaptive-mask denoising loop over abstract model interfaces.
//! * [`lifting`] inlier selection, depth initialisation/optimisation and
//!   sample filtering for single-view human placements.
//! * [`primitives`] and [`affordance`] the per point-pair distributions and the
//!   contact / orientation / spatial cues derived from them.
//! * [`metrics`], [`synth`], [`io`], [`config`] and [`pipeline`] evaluation,
//!   synthetic ground truth, persistence and the end-to-end commands.

pub mod adamask;
pub mod affordance;
pub mod camera;
pub mod config;
pub mod geom;
pub mod io;
pub mod lifting;
pub mod maskgen;
pub mod metrics;
pub mod pipeline;
pub mod primitives;
pub mod seed;
pub mod synth;

pub use nalgebra;

/// 3-vector used for positions, normals and directions (meters where spatial).
pub type Vec3 = nalgebra::Vector3<f64>;
/// 2-vector used for pixel coordinates.
pub type Vec2 = nalgebra::Vector2<f64>;
/// 3x3 matrix, used for rotations.
pub type Mat3 = nalgebra::Matrix3<f64>;
