//! Texture transfer bookkeeping between co-parameterized objects.

use surfmap_render::ParamModel;

use crate::atlas::{DomainDescriptor, TextureAtlas};
use crate::MeshError;

/// Check a source atlas against a bundle's domain and hand it back as a
/// render-ready override for the target object. Materials come from the
/// source's atlas through the shared domain; shading stays the target's.
pub fn transfer_texture<'a>(
    source_atlas: &'a TextureAtlas,
    model: &ParamModel,
    target_object: &str,
) -> Result<&'a TextureAtlas, MeshError> {
    model
        .deform
        .code(target_object)
        .map_err(|e| MeshError::Deform(e.to_string()))?;
    let bundle_desc = DomainDescriptor::from_field(&model.deform.domain)?;
    if !bundle_desc.approx_eq(&source_atlas.descriptor) {
        return Err(MeshError::DomainMismatch);
    }
    Ok(source_atlas)
}
