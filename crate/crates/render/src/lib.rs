//! SDF-based volume rendering with a material × exp(shading) radiance
//! decomposition, the two-phase training schedule, and synthetic multi-view
//! dataset generation.

pub mod appearance;
pub mod bundle;
pub mod camera;
pub mod dataset;
pub mod density;
pub mod integrate;
pub mod losses;
pub mod psnr;
pub mod render;
pub mod train;

use thiserror::Error;

pub use appearance::{taped_radiance, AppearanceConfig, AppearanceModel, AppearanceVars};
pub use bundle::{ParamModel, ResumeState};
pub use camera::{ray_scene_interval, read_cameras, write_cameras, Camera, Ray, SCENE_BOUND};
pub use dataset::{
    generate_synthetic_dataset, image_to_float, load_dataset, quantize, render_ground_truth,
    verify_checksums, view_cameras, Albedo, Dataset, DatasetConfig, DatasetMeta, DirLight,
    SceneSpec,
};
pub use density::{density_from_sdf, density_taped, DensityConfig};
pub use integrate::{compute_weights, integrate_ray, sample_ray, RaySampleSet};
pub use losses::{loss_code, loss_rgb, loss_shading};
pub use psnr::{psnr, psnr_rgb};
pub use render::{
    render_image, MaterialLookup, RenderOptions, RenderOutput, ShadingMode,
};
pub use train::{
    build_phase_c_losses, resume_phase_c, sample_pixel_batch, two_phase_train,
    write_pipeline_report, ImageEpochLosses, PhaseCLossVars, PipelineConfig, PipelineReport,
    PixelBatch,
};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("unknown object id {0:?}")]
    UnknownObject(String),
    #[error("bad camera: {0}")]
    BadCamera(String),
    #[error("bad dataset: {0}")]
    BadDataset(String),
    #[error("image: {0}")]
    Image(String),
    #[error("prediction/target length mismatch: {pred} vs {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("domain fit failed: {0}")]
    DomainFit(String),
    #[error(transparent)]
    Deform(#[from] surfmap_deform::DeformError),
    #[error(transparent)]
    Sdf(#[from] surfmap_sdf::SdfError),
    #[error(transparent)]
    Nn(#[from] surfmap_nn::NnError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
