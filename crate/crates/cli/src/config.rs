//! Run configuration: TOML sections, validation and the frozen form whose
//! hash is stamped on every artifact.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use scatter_core::dataset::{DatasetOptions, PointCounts};
use scatter_core::net::ResNetPlan;
use scatter_core::physics::{LossWeights, RigidBcMode};
use scatter_core::training::{AdamConfig, TrainConfig};
use scatter_core::{PhysicsConfig, Vec2};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub geometry: GeometrySection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub oracle: OracleSection,
    pub io: IoSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigidBc {
    Projected,
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub frequency: f64,
    pub sound_speed: f64,
    pub amplitude: f64,
    pub direction: [f64; 2],
    pub rigid_bc: RigidBc,
    pub weight_pde: f64,
    pub weight_inner_bc: f64,
    pub weight_outer_bc: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        let p = PhysicsConfig::default();
        Self {
            frequency: p.frequency,
            sound_speed: p.sound_speed,
            amplitude: p.amplitude,
            direction: p.direction.to_array(),
            rigid_bc: RigidBc::Projected,
            weight_pde: p.weights.pde,
            weight_inner_bc: p.weights.inner_bc,
            weight_outer_bc: p.weights.outer_bc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    /// Radius range of the circle test set.
    pub circle_radius_min: f64,
    pub circle_radius_max: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        let o = DatasetOptions::default();
        Self { circle_radius_min: o.circle_radii.0, circle_radius_max: o.circle_radii.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkSection {
    pub width: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    /// Basis functions per component; both nets output twice this.
    pub basis: usize,
    pub branch_omega: f64,
    pub trunk_omega: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let b = ResNetPlan::standard_branch();
        let t = ResNetPlan::standard_trunk();
        Self {
            width: b.width,
            blocks: b.n_blocks,
            layers_per_block: b.layers_per_block,
            basis: b.output_dim / 2,
            branch_omega: b.first_omega,
            trunk_omega: t.first_omega,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub learning_rate: f64,
    pub epochs: u64,
    pub seed: u64,
    pub shapes_per_batch: usize,
    /// Points drawn once per shape.
    pub interior_points: usize,
    pub inner_boundary_points: usize,
    pub outer_boundary_points: usize,
    /// Points per shape in each step.
    pub batch_interior: usize,
    pub batch_inner_boundary: usize,
    pub batch_outer_boundary: usize,
    pub resample_points: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub checkpoint_every: u64,
    pub log_every: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        let p = PointCounts::default();
        Self {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            seed: t.seed,
            shapes_per_batch: t.shapes_per_batch,
            interior_points: p.interior,
            inner_boundary_points: p.inner_boundary,
            outer_boundary_points: p.outer_boundary,
            batch_interior: t.points_per_batch.interior,
            batch_inner_boundary: t.points_per_batch.inner_boundary,
            batch_outer_boundary: t.points_per_batch.outer_boundary,
            resample_points: t.resample_points,
            beta1: t.adam.beta1,
            beta2: t.adam.beta2,
            eps: t.adam.eps,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    /// FDFD nodes per side.
    pub grid: usize,
    pub cylinder_terms: usize,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self { grid: scatter_core::oracle::DEFAULT_GRID, cylinder_terms: scatter_core::oracle::DEFAULT_TERMS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoSection {
    /// Nodes per side of prediction and evaluation grids.
    pub grid: usize,
    pub images: bool,
}

impl Default for IoSection {
    fn default() -> Self {
        Self { grid: 100, images: false }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Core(scatter_core::Error::FileNotFound(path.to_path_buf())),
            _ => CliError::Io(e),
        })?;
        Self::parse(&text)
    }

    pub fn load_or_default(path: Option<&Path>) -> CliResult<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.physics().validate()?;
        self.branch_plan().validate()?;
        self.trunk_plan().validate()?;
        self.train_config().validate()?;
        let g = &self.geometry;
        if !(g.circle_radius_min > 0.0 && g.circle_radius_min <= g.circle_radius_max) {
            return Err(CliError::Config(format!(
                "circle radius range [{}, {}] is empty or non-positive",
                g.circle_radius_min, g.circle_radius_max
            )));
        }
        let t = &self.training;
        if t.interior_points == 0 || t.inner_boundary_points == 0 || t.outer_boundary_points == 0 {
            return Err(CliError::Config("point counts must be at least 1".into()));
        }
        if self.oracle.grid < scatter_core::oracle::MIN_GRID {
            return Err(CliError::Config(format!("oracle grid must be at least {}", scatter_core::oracle::MIN_GRID)));
        }
        if self.io.grid < 2 {
            return Err(CliError::Config("io grid must be at least 2".into()));
        }
        Ok(())
    }

    pub fn freeze(self) -> CliResult<FrozenConfig> {
        self.validate()?;
        let canonical = toml::to_string(&self).map_err(|e| CliError::Config(e.to_string()))?;
        let digest = Sha256::digest(canonical.as_bytes());
        let hash = hex::encode(&digest[..8]);
        Ok(FrozenConfig { config: self, canonical, hash })
    }

    pub fn physics(&self) -> PhysicsConfig {
        let p = &self.physics;
        PhysicsConfig {
            frequency: p.frequency,
            sound_speed: p.sound_speed,
            amplitude: p.amplitude,
            direction: Vec2::from(p.direction),
            weights: LossWeights { pde: p.weight_pde, inner_bc: p.weight_inner_bc, outer_bc: p.weight_outer_bc },
            rigid_bc: match p.rigid_bc {
                RigidBc::Projected => RigidBcMode::Projected,
                RigidBc::Literal => RigidBcMode::Literal,
            },
        }
    }

    pub fn dataset_options(&self) -> DatasetOptions {
        DatasetOptions { circle_radii: (self.geometry.circle_radius_min, self.geometry.circle_radius_max) }
    }

    fn plan(&self, input_dim: usize, omega: f64) -> ResNetPlan {
        let n = &self.network;
        ResNetPlan {
            input_dim,
            width: n.width,
            n_blocks: n.blocks,
            layers_per_block: n.layers_per_block,
            output_dim: 2 * n.basis,
            first_omega: omega,
        }
    }

    pub fn branch_plan(&self) -> ResNetPlan {
        self.plan(16, self.network.branch_omega)
    }

    pub fn trunk_plan(&self) -> ResNetPlan {
        self.plan(2, self.network.trunk_omega)
    }

    pub fn point_counts(&self) -> PointCounts {
        let t = &self.training;
        PointCounts {
            interior: t.interior_points,
            inner_boundary: t.inner_boundary_points,
            outer_boundary: t.outer_boundary_points,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            shapes_per_batch: t.shapes_per_batch,
            points_per_batch: PointCounts {
                interior: t.batch_interior,
                inner_boundary: t.batch_inner_boundary,
                outer_boundary: t.batch_outer_boundary,
            },
            adam: AdamConfig { beta1: t.beta1, beta2: t.beta2, eps: t.eps },
            seed: t.seed,
            checkpoint_every: t.checkpoint_every,
            log_every: t.log_every,
            resample_points: t.resample_points,
        }
    }
}

/// A validated configuration together with its canonical text and hash.
#[derive(Clone, Debug)]
pub struct FrozenConfig {
    pub config: RunConfig,
    pub canonical: String,
    /// First 16 hex digits of the SHA-256 of `canonical`.
    pub hash: String,
}

impl FrozenConfig {
    /// Header lines (without the `# ` prefix) naming the tool version,
    /// config hash and seed, followed by the config itself.
    pub fn header(&self, seed: u64) -> Vec<String> {
        let mut lines = vec![format!("scatter {} config={} seed={}", crate::VERSION, self.hash, seed)];
        lines.extend(self.canonical.lines().filter(|l| !l.trim().is_empty()).map(|l| format!("config {l}")));
        lines
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
        assert_eq!(RunConfig::parse("").unwrap(), cfg);
    }

    #[test]
    fn partial_sections_override_defaults() {
        let cfg = RunConfig::parse("[physics]\nfrequency = 250.0\n[training]\nepochs = 7\n").unwrap();
        assert_eq!(cfg.physics.frequency, 250.0);
        assert_eq!(cfg.training.epochs, 7);
        assert_eq!(cfg.network, NetworkSection::default());
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        assert!(matches!(RunConfig::parse("[physics]\nfrequncy = 1.0\n"), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::parse("[solver]\nx = 1\n"), Err(CliError::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse("[physics]\nfrequency = -1.0\n").is_err());
        assert!(RunConfig::parse("[training]\nlearning_rate = 0.0\n").is_err());
        assert!(RunConfig::parse("[oracle]\ngrid = 3\n").is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default().freeze().unwrap();
        let b = RunConfig::default().freeze().unwrap();
        assert_eq!(a.hash, b.hash);
        assert_eq!(a.hash.len(), 16);
        let mut c = RunConfig::default();
        c.training.seed = 1;
        assert_ne!(c.freeze().unwrap().hash, a.hash);
        let h = a.header(3);
        assert_eq!(h[0], format!("scatter {} config={} seed=3", crate::VERSION, a.hash));
        assert!(h.iter().any(|l| l == "config [physics]"));
    }
}
