//! Bi-directional deformation between a surface and its parametric domain:
//! forward/inverse displacement networks, the composed SDF, and the
//! smoothness, cycle, Laplacian and Eikonal losses.

pub mod losses;
pub mod model;
pub mod neighbors;
pub mod surface;
pub mod train;

use thiserror::Error;

pub use losses::{
    build_code_norm, build_cycle, build_eikonal, build_laplace, build_smooth, loss_code,
    loss_cycle, loss_eikonal, loss_laplace, loss_smooth, Lambdas, LaplaceBatch,
};
pub use model::{
    taped_encode, taped_forward, taped_forward_dual, taped_inverse, DeformConfig, DeformModel,
    DeformVars,
};
pub use neighbors::{
    laplacian_vector, laplacian_weights, sample_neighbors, sample_neighbors_batch, NeighborSet,
};
pub use surface::{sample_eikonal_points, sample_surface};
pub use train::{train_parameterization, write_report, EpochLosses, TrainConfig, TrainReport};

use surfmap_sdf::Vec3;

/// A point on (or near) the live surface with its rendering weight and unit
/// normal, tagged with the object it belongs to.
#[derive(Clone, Debug)]
pub struct SurfaceSample {
    pub p: Vec3,
    /// λ(p): the volume-rendering color weight, or 1 in geometry mode.
    pub weight: f64,
    pub normal: Vec3,
    pub object: String,
}

#[derive(Debug, Error)]
pub enum DeformError {
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("could not sample the target surface for {0:?}")]
    DegenerateTarget(String),
    #[error(transparent)]
    Sdf(#[from] surfmap_sdf::SdfError),
    #[error(transparent)]
    Nn(#[from] surfmap_nn::NnError),
}
