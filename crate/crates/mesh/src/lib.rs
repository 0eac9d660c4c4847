//! Mesh extraction, parameterization-quality metrics, texture atlas baking
//! and domain-swap editing.

pub mod atlas;
pub mod chamfer;
pub mod distortion;
pub mod map;
pub mod mc;
pub mod mesh;
pub mod mesh2sdf;
pub mod swap;
pub mod tables;
pub mod transfer;

use thiserror::Error;

pub use atlas::{
    bake_texture, chart_point, domain_uv, AtlasKind, DomainDescriptor, TextureAtlas,
    BAKE_SURFACE_TOL,
};
pub use chamfer::{chamfer_distance, BRUTE_FORCE_LIMIT};
pub use distortion::{
    angle_distortion, area_distortion, distortion_report, DistortionReport, HIST_BINS,
};
pub use map::map_mesh;
pub use mc::{marching_cubes, weld_and_clean, WELD_EPS};
pub use mesh::TriangleMesh;
pub use mesh2sdf::{mesh_to_grid, MAX_GRID_RESOLUTION};
pub use swap::{extract_surface, swap_domain};
pub use transfer::transfer_texture;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("mesh has no mapped positions")]
    MissingMappedPositions,
    #[error("bad OBJ: {0}")]
    BadObj(String),
    #[error("bad atlas: {0}")]
    BadAtlas(String),
    #[error("atlas domain does not match the bundle domain")]
    DomainMismatch,
    #[error("domain variant unsupported for atlases")]
    UnsupportedDomain,
    #[error("grid resolution {0} above offline-utility limit")]
    ResolutionTooHigh(u32),
    #[error("deformation: {0}")]
    Deform(String),
    #[error("render: {0}")]
    Render(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
