//! Pipeline configuration: a versioned JSON document with every section optional.

use std::path::{Path, PathBuf};

use plasmo_core::forward::{contrast, DrudeModel, MeasureMode, RotationModel, ScanGrid};
use plasmo_core::shaperec::Descent;
use plasmo_core::StarShape;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: &str = "plasmo-config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema: String,
    #[serde(default)]
    pub geometry: Geometry,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub inversion: Inversion,
    #[serde(default)]
    pub reconstruction: Reconstruction,
    #[serde(default)]
    pub output: Output,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            schema: SCHEMA.into(),
            geometry: Geometry::default(),
            physics: Physics::default(),
            numerics: Numerics::default(),
            inversion: Inversion::default(),
            reconstruction: Reconstruction::default(),
            output: Output::default(),
        }
    }
}

/// Target outline; built-in shapes are scaled so that their largest radius equals `delta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSpec {
    Flower {
        petals: usize,
        amplitude: f64,
        #[serde(default)]
        rotation: f64,
    },
    Ellipse {
        /// Minor-to-major axis ratio.
        aspect: f64,
        #[serde(default)]
        rotation: f64,
    },
    Disk,
    /// Explicit radial series in physical units.
    Star {
        shape: StarShape,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub delta: f64,
    pub r2: f64,
    pub d_over_delta: f64,
    pub target: TargetSpec,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            delta: 1e-3,
            r2: 1.0,
            d_over_delta: 5.0,
            target: TargetSpec::Flower { petals: 5, amplitude: 0.3, rotation: 0.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrudeSpec {
    pub omega_p: f64,
    pub gamma: f64,
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub eps1: f64,
    pub eps_m: f64,
    pub im_lambda2: f64,
    pub drude: Option<DrudeSpec>,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { eps1: 3.0, eps_m: 1.0, im_lambda2: 3e-3, drude: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub nodes: usize,
    pub truncation: usize,
    /// Largest `m + n` matched during reconstruction.
    pub cgpt_order: usize,
    pub scan: ScanGrid,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics { nodes: 128, truncation: 8, cgpt_order: 5, scan: ScanGrid::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inversion {
    pub level: usize,
    pub angles: usize,
    pub noise: f64,
    pub seed: u64,
    pub mode: MeasureMode,
    pub rotation: RotationModel,
    pub starts: usize,
    pub max_iterations: usize,
}

impl Default for Inversion {
    fn default() -> Self {
        Inversion {
            level: 1,
            angles: 11,
            noise: 0.0,
            seed: 0,
            mode: MeasureMode::Eigenvalues,
            rotation: RotationModel::Physical,
            starts: 5,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Ellipse,
    Disk,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Reconstruction {
    pub iterations: usize,
    pub init: InitMode,
    pub shape_order: usize,
    pub descent: Descent,
    pub multi_resolution: bool,
}

impl Default for Reconstruction {
    fn default() -> Self {
        Reconstruction {
            iterations: 30,
            init: InitMode::Ellipse,
            shape_order: 8,
            descent: Descent::Gradient,
            multi_resolution: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub directory: PathBuf,
    /// JSON is always written; these formats are optional extras.
    pub formats: Vec<Format>,
}

impl Default for Output {
    fn default() -> Self {
        Output { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Svg] }
    }
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{path} must be positive, got {v}")))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), CliError> {
    if v >= min {
        Ok(())
    } else {
        Err(CliError::Usage(format!("{path} must be at least {min}, got {v}")))
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema != SCHEMA {
            return Err(CliError::Usage(format!("schema must be \"{SCHEMA}\", got \"{}\"", self.schema)));
        }
        let g = &self.geometry;
        positive("geometry.delta", g.delta)?;
        positive("geometry.r2", g.r2)?;
        positive("geometry.d_over_delta", g.d_over_delta)?;
        match &g.target {
            TargetSpec::Flower { petals, amplitude, .. } => {
                at_least("geometry.target.petals", *petals, 1)?;
                if !(amplitude.abs() < 1.0) {
                    return Err(CliError::Usage(format!("geometry.target.amplitude must lie in (-1, 1), got {amplitude}")));
                }
            }
            TargetSpec::Ellipse { aspect, .. } => {
                positive("geometry.target.aspect", *aspect)?;
                if *aspect > 1.0 {
                    return Err(CliError::Usage(format!("geometry.target.aspect must not exceed 1, got {aspect}")));
                }
            }
            TargetSpec::Disk => {}
            TargetSpec::Star { shape } => {
                shape.validate().map_err(|e| CliError::Usage(format!("geometry.target.shape: {e}")))?;
            }
        }
        let p = &self.physics;
        positive("physics.eps1", p.eps1)?;
        positive("physics.eps_m", p.eps_m)?;
        positive("physics.im_lambda2", p.im_lambda2)?;
        if (p.eps1 - p.eps_m).abs() < 1e-12 {
            return Err(CliError::Usage("physics.eps1 must differ from physics.eps_m".into()));
        }
        if let Some(d) = &p.drude {
            positive("physics.drude.omega_p", d.omega_p)?;
            if !(d.gamma >= 0.0) {
                return Err(CliError::Usage(format!("physics.drude.gamma must be non-negative, got {}", d.gamma)));
            }
            positive("physics.drude.omega_lo", d.omega_lo)?;
            if !(d.omega_hi > d.omega_lo) {
                return Err(CliError::Usage("physics.drude.omega_hi must exceed omega_lo".into()));
            }
            at_least("physics.drude.samples", d.samples, 2)?;
        }
        let n = &self.numerics;
        at_least("numerics.nodes", n.nodes, 16)?;
        if n.nodes % 2 != 0 {
            return Err(CliError::Usage(format!("numerics.nodes must be even, got {}", n.nodes)));
        }
        at_least("numerics.truncation", n.truncation, 1)?;
        at_least("numerics.cgpt_order", n.cgpt_order, 2)?;
        positive("numerics.scan.step", n.scan.step)?;
        if !(n.scan.hi > n.scan.lo) {
            return Err(CliError::Usage("numerics.scan.hi must exceed numerics.scan.lo".into()));
        }
        let i = &self.inversion;
        at_least("inversion.level", i.level, 1)?;
        at_least("inversion.angles", i.angles, 1)?;
        at_least("inversion.starts", i.starts, 1)?;
        if !(i.noise >= 0.0) {
            return Err(CliError::Usage(format!("inversion.noise must be non-negative, got {}", i.noise)));
        }
        let needed = 4 * i.level;
        if needed > n.truncation {
            return Err(CliError::Usage(format!(
                "inversion.level {} needs numerics.truncation >= {needed}, got {}",
                i.level, n.truncation
            )));
        }
        at_least("reconstruction.shape_order", self.reconstruction.shape_order, 1)?;
        if n.cgpt_order > 4 * i.level + 1 {
            return Err(CliError::Usage(format!(
                "numerics.cgpt_order {} exceeds the recovered bound {} of inversion.level {}",
                n.cgpt_order,
                4 * i.level + 1,
                i.level
            )));
        }
        Ok(())
    }

    pub fn d(&self) -> f64 {
        self.geometry.d_over_delta * self.geometry.delta
    }

    /// Contrast of the target, `(ε1 + ε_m)/(2(ε1 − ε_m))`.
    pub fn lambda1(&self) -> Result<f64, CliError> {
        Ok(contrast(self.physics.eps1.into(), self.physics.eps_m)?.re)
    }

    pub fn drude(&self) -> Result<Option<DrudeModel>, CliError> {
        match &self.physics.drude {
            None => Ok(None),
            Some(d) => Ok(Some(DrudeModel::new(d.omega_p, d.gamma, self.physics.eps_m)?)),
        }
    }

    /// Target outline centered at the origin.
    pub fn target(&self) -> Result<StarShape, CliError> {
        let delta = self.geometry.delta;
        let shape = match &self.geometry.target {
            TargetSpec::Flower { petals, amplitude, rotation } => {
                StarShape::flower([0.0, 0.0], delta / (1.0 + amplitude.abs()), *petals, *amplitude)?.rotate(*rotation)
            }
            TargetSpec::Ellipse { aspect, rotation } => {
                StarShape::ellipse([0.0, 0.0], delta, aspect * delta, *rotation, self.reconstruction.shape_order.max(16))?
            }
            TargetSpec::Disk => StarShape::circle([0.0, 0.0], delta)?,
            TargetSpec::Star { shape } => shape.clone(),
        };
        Ok(shape)
    }
}
