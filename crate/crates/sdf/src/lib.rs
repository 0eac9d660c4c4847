//! Signed distance fields: analytic primitives, learnable polycubes with
//! Kreisselmeier-Steinhauser smoothing, sampled grids, network-backed fields
//! and deformation-composed fields, all under a "negative inside" convention.

pub mod descriptor;
pub mod error;
pub mod field;
pub mod grid;
pub mod polycube;
pub mod project;
pub mod scalar;
pub mod taped;
pub mod vec3;

pub use descriptor::{
    format_field_descriptor, parse_field_descriptor, read_domain_file, write_domain_file,
};
pub use error::SdfError;
pub use field::{ComposedField, MlpField, SdfField};
pub use grid::GridSdf;
pub use polycube::{
    box_sdf_gradient, eval_box_sdf, eval_polycube_exact, eval_polycube_ks, BoxParams,
    PolycubeParams, DEFAULT_KS_LAMBDA,
};
pub use project::{project_batch, project_to_surface, Projection, PROJECT_TOL};
pub use scalar::{Dual3, Scalar};
pub use vec3::{vec3, Vec3};
