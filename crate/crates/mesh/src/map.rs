//! Forward-mapping mesh vertices into the parametric domain.

use surfmap_deform::DeformModel;

use crate::mesh::TriangleMesh;
use crate::MeshError;

/// Attach mapped positions (the forward image of every vertex); connectivity
/// is untouched.
pub fn map_mesh(
    mesh: &TriangleMesh,
    model: &DeformModel,
    object: &str,
) -> Result<TriangleMesh, MeshError> {
    if mesh.is_empty() {
        return Err(MeshError::EmptyMesh);
    }
    let mapped = model
        .forward_map_batch(&mesh.vertices, object)
        .map_err(|e| MeshError::Deform(e.to_string()))?;
    Ok(TriangleMesh {
        vertices: mesh.vertices.clone(),
        triangles: mesh.triangles.clone(),
        mapped: Some(mapped),
        uvs: mesh.uvs.clone(),
        charts: mesh.charts.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use surfmap_deform::DeformConfig;
    use surfmap_nn::PosEncConfig;
    use surfmap_sdf::{SdfField, Vec3};

    #[test]
    fn identity_deformation_maps_to_itself() {
        let cfg = DeformConfig {
            posenc: PosEncConfig::new(4),
            latent_dim: 8,
            depth: 3,
            width: 16,
        };
        let model = DeformModel::new(
            &cfg,
            SdfField::sphere(Vec3::ZERO, 0.5),
            &["o".to_string()],
            3,
        );
        let mesh = crate::mc::marching_cubes(&SdfField::sphere(Vec3::ZERO, 0.5), 16, 0.0);
        let mapped = map_mesh(&mesh, &model, "o").unwrap();
        // Connectivity bit-identical, zero-init nets give identity positions.
        assert_eq!(mapped.triangles, mesh.triangles);
        for (a, b) in mapped.mapped.unwrap().iter().zip(&mesh.vertices) {
            assert_eq!(a, b);
        }
    }
}
