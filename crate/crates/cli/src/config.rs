//! The run configuration: structured text with scene / domain / train /
//! render / output sections. Unknown keys are rejected; coefficient defaults
//! follow the published values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CliError, ExitKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: SceneConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub render: RenderSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub objects: Vec<ObjectConfig>,
    /// Views generated per object by gen-data.
    #[serde(default = "default_views")]
    pub views: usize,
    #[serde(default = "default_camera_radius")]
    pub camera_radius: f64,
    /// Directional lights as [x, y, z, intensity].
    #[serde(default = "default_lights")]
    pub lights: Vec<[f64; 4]>,
    #[serde(default = "default_ambient")]
    pub ambient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectConfig {
    pub id: String,
    /// Analytic target (geometry supervision and gen-data).
    #[serde(default)]
    pub sdf: Option<String>,
    /// Multi-view dataset directory (image supervision).
    #[serde(default)]
    pub dataset: Option<String>,
    /// Albedo descriptor for gen-data.
    #[serde(default)]
    pub albedo: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default = "default_domain_kind")]
    pub kind: String,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_lambda_s")]
    pub lambda_s: f64,
    #[serde(default = "default_ks_lambda")]
    pub ks_lambda: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        DomainConfig {
            kind: default_domain_kind(),
            k: default_k(),
            lambda_s: default_lambda_s(),
            ks_lambda: default_ks_lambda(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_supervision")]
    pub supervision: String,
    #[serde(default = "default_phase_a")]
    pub phase_a_epochs: usize,
    #[serde(default = "default_phase_c")]
    pub phase_c_epochs: usize,
    #[serde(default = "default_geometry_epochs")]
    pub geometry_epochs: usize,
    #[serde(default = "default_pixel_batch")]
    pub pixel_batch: usize,
    #[serde(default = "default_geometry_batch")]
    pub geometry_batch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default = "default_lambda3")]
    pub lambda3: f64,
    #[serde(default = "default_lambda4")]
    pub lambda4: f64,
    #[serde(default = "default_lambda5")]
    pub lambda5: f64,
    #[serde(default = "default_lambda6")]
    pub lambda6: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_deform_depth")]
    pub deform_depth: usize,
    #[serde(default = "default_width")]
    pub deform_width: usize,
    #[serde(default = "default_app_depth")]
    pub app_depth: usize,
    #[serde(default = "default_width")]
    pub app_width: usize,
    #[serde(default = "default_latent_dim")]
    pub latent_dim: usize,
    #[serde(default = "default_posenc_pos")]
    pub posenc_pos: usize,
    #[serde(default = "default_posenc_view")]
    pub posenc_view: usize,
    #[serde(default = "default_eik_batch")]
    pub eik_batch: usize,
    #[serde(default = "default_cycle_batch")]
    pub cycle_batch: usize,
    #[serde(default = "default_lap_batch")]
    pub lap_batch: usize,
    #[serde(default = "default_neighbor_m")]
    pub neighbor_m: usize,
    #[serde(default = "default_neighbor_rho")]
    pub neighbor_rho: f64,
    #[serde(default = "default_weight_threshold")]
    pub weight_threshold: f64,
    #[serde(default)]
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        toml::from_str("").expect("all train fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    #[serde(default = "default_resolution")]
    pub resolution: u32,
    #[serde(default = "default_samples_per_ray")]
    pub samples_per_ray: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_background")]
    pub background: [f64; 3],
}

impl Default for RenderSection {
    fn default() -> Self {
        RenderSection {
            resolution: default_resolution(),
            samples_per_ray: default_samples_per_ray(),
            beta: default_beta(),
            background: default_background(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

fn default_views() -> usize {
    9
}
fn default_camera_radius() -> f64 {
    2.4
}
fn default_lights() -> Vec<[f64; 4]> {
    vec![[0.35, 0.6, 0.9, 0.6]]
}
fn default_ambient() -> f64 {
    0.4
}
fn default_domain_kind() -> String {
    "sphere".into()
}
fn default_k() -> usize {
    1
}
fn default_lambda_s() -> f64 {
    0.01
}
fn default_ks_lambda() -> f64 {
    100.0
}
fn default_supervision() -> String {
    "images".into()
}
fn default_phase_a() -> usize {
    20
}
fn default_phase_c() -> usize {
    200
}
fn default_geometry_epochs() -> usize {
    2000
}
fn default_pixel_batch() -> usize {
    512
}
fn default_geometry_batch() -> usize {
    256
}
fn default_lr() -> f64 {
    1e-3
}
fn default_lambda1() -> f64 {
    0.01
}
fn default_lambda2() -> f64 {
    0.01
}
fn default_lambda3() -> f64 {
    0.001
}
fn default_lambda4() -> f64 {
    0.001
}
fn default_lambda5() -> f64 {
    0.01
}
fn default_lambda6() -> f64 {
    0.01
}
fn default_seed() -> u64 {
    1
}
fn default_deform_depth() -> usize {
    4
}
fn default_width() -> usize {
    64
}
fn default_app_depth() -> usize {
    3
}
fn default_latent_dim() -> usize {
    16
}
fn default_posenc_pos() -> usize {
    6
}
fn default_posenc_view() -> usize {
    4
}
fn default_eik_batch() -> usize {
    128
}
fn default_cycle_batch() -> usize {
    128
}
fn default_lap_batch() -> usize {
    16
}
fn default_neighbor_m() -> usize {
    6
}
fn default_neighbor_rho() -> f64 {
    0.02
}
fn default_weight_threshold() -> f64 {
    1e-4
}
fn default_resolution() -> u32 {
    64
}
fn default_samples_per_ray() -> usize {
    64
}
fn default_beta() -> f64 {
    0.02
}
fn default_background() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new(ExitKind::Io, format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::new(ExitKind::Usage, format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn lambdas(&self) -> surfmap_deform::Lambdas {
        surfmap_deform::Lambdas {
            eikonal: self.train.lambda1,
            cycle: self.train.lambda2,
            smooth: self.train.lambda3,
            laplace: self.train.lambda4,
            shading: self.train.lambda5,
            code: self.train.lambda6,
        }
    }

    pub fn domain_kind(&self) -> Result<surfmap_domain::DomainKind, CliError> {
        match self.domain.kind.as_str() {
            "sphere" => Ok(surfmap_domain::DomainKind::Sphere),
            "polycube" => Ok(surfmap_domain::DomainKind::Polycube),
            other => Err(CliError::new(
                ExitKind::Usage,
                format!("domain.kind must be sphere or polycube, got {other:?}"),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[scene]
[[scene.objects]]
id = "sphere"
sdf = "sphere:0,0,0,0.5"

[output]
dir = "out"
"#;

    #[test]
    fn parse_minimal_with_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train.lambda1, 0.01);
        assert_eq!(cfg.train.lambda4, 0.001);
        assert_eq!(cfg.domain.ks_lambda, 100.0);
        assert_eq!(cfg.render.samples_per_ray, 64);
    }

    #[test]
    fn round_trip_identity() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        let text = cfg.to_toml();
        let cfg2 = RunConfig::parse(&text).unwrap();
        assert_eq!(cfg, cfg2);
        // And once more through the serializer.
        assert_eq!(text, cfg2.to_toml());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = format!("{MINIMAL}\n[extra]\nfoo = 1\n");
        assert!(RunConfig::parse(&bad).is_err());
        let bad2 = MINIMAL.replace("dir = \"out\"", "dir = \"out\"\nbogus = 3");
        assert!(RunConfig::parse(&bad2).is_err());
    }
}
