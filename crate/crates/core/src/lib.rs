//! Translucent isotropic-Gaussian scene model with a smooth visibility
//! function, analytic gradients and generative pose and shape estimation.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod calibration;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod fdcheck;
pub mod gradients;
pub mod imaging;
pub mod io;
pub mod mapping;
pub mod objective;
pub mod optimizer;
pub mod scene;
pub mod special;
pub mod visibility;

pub use calibration::{build_from_spheres, calibrate_sphere, CalibrationResult, SphereSpec};
pub use energy::{
    back_project_albedo, color_dissimilarity, d_mc, d_pc, data_term, prior, prior_with_grad,
    scene_energy, ColorSpace, DataTerm, EnergyConfig, PixelWeighting, View,
};
pub use error::{Error, Result};
pub use fdcheck::{fd_check, FdEntry, FdOptions, FdReport};
pub use gradients::{
    chain_ray_to_world, grad_gaussian_visibility, grad_radiance, grad_transmittance, GradBlock,
    GradVector, MagnitudeCoupling, RadianceGradient, RayParam, RayPartials,
};
pub use imaging::{render, render_ray, Camera, Image};
pub use mapping::{
    apply_mapping, mapping_jacobian, Mapping, MappingJacobian, PoseParams, RigidKind, RigidObject,
};
pub use objective::Objective;
pub use optimizer::{
    minimize, FnProblem, OptimConfig, OptimResult, OptimTrace, Preconditioner, Problem, Status,
};
pub use scene::{project_to_ray, Gaussian, Ray, RayGaussian, Scene, Vec3};
pub use visibility::{
    gaussian_visibility, optical_depth, point_visibility, radiance, transmittance, RayKernel,
    SampleScheme,
};
