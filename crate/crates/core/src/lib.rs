//! Gaussian-mixture kinematics for tendon-driven continuum robots.
//!
//! A mixture density network maps tendon displacements to a 3D Gaussian
//! mixture describing where the robot body is likely to be. The mixture is
//! then used to bound the probability of collision against triangle-mesh
//! obstacles, and that bound drives a roadmap planner plus a Bayesian
//! refinement of the planned waypoints.
//!
//! Module map:
//! - [`gmm`]: mixture representation, precision-Cholesky parameterization,
//!   density, likelihood and sampling.
//! - [`mdn`]: the network, its exact gradient, training and persistence.
//! - [`synth`]: a synthetic stochastic robot that produces point-cloud data.
//! - [`collision`]: meshes, whitening, convex carving and collision bounds.
//! - [`planner`]: roadmap planning and probability-of-improvement refinement.
//! - [`cli`]: the pipeline commands behind the `tdcr-mdn` binary.

pub mod cli;
pub mod collision;
pub mod config;
pub mod error;
pub mod gmm;
pub mod mdn;
pub mod planner;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
pub use gmm::{GaussianComponent, Gmm3, Point3, UMatrix};
pub use mdn::{MdnParams, TendonConfig};
