//! Domain-swap geometry editing: replace the parametric domain SDF and infer
//! the deformed source geometry with no retraining.

use surfmap_render::ParamModel;
use surfmap_sdf::SdfField;

use crate::mc::marching_cubes;
use crate::mesh::TriangleMesh;
use crate::MeshError;

/// Swap in a new domain; everything else in the bundle is untouched.
pub fn swap_domain(model: &ParamModel, new_domain: SdfField) -> ParamModel {
    model.with_domain(new_domain)
}

/// Extract the zero set of the composed SDF for one object.
pub fn extract_surface(
    model: &ParamModel,
    object: &str,
    resolution: u32,
) -> Result<TriangleMesh, MeshError> {
    let field = model
        .deform
        .composed_field(object)
        .map_err(|e| MeshError::Deform(e.to_string()))?;
    Ok(marching_cubes(&field, resolution, 0.0))
}
