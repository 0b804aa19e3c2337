//! Experiment configuration: a single TOML file describing the model, the
//! initial moments, the time grid, and what to run. Field order inside the
//! structs keeps plain values ahead of tables so a parsed config
//! re-serializes cleanly.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bilinear_sde::linalg::Matrix;
use bilinear_sde::rectifier::{self, RectifierParams};
use bilinear_sde::sim::{Scheme, TimeGrid};
use bilinear_sde::{BilinearSde, Interpretation, MomentState, NoiseShape, Schedule};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelCfg,
    pub initial: InitialCfg,
    pub grid: GridCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccf: Option<CcfCfg>,
    #[serde(default, skip_serializing_if = "OutputCfg::is_default")]
    pub output: OutputCfg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCfg {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interpretation: Option<InterpretationCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<VecScheduleCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<MatScheduleCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseCfg>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<RectifierParamsCfg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Bilinear,
    Rectifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpretationCfg {
    Stratonovich,
    Ito,
}

impl From<InterpretationCfg> for Interpretation {
    fn from(v: InterpretationCfg) -> Self {
        match v {
            InterpretationCfg::Stratonovich => Interpretation::Stratonovich,
            InterpretationCfg::Ito => Interpretation::Ito,
        }
    }
}

/// Vector-valued coefficient: either one value or a knot grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum VecScheduleCfg {
    Constant {
        constant: Vec<f64>,
    },
    Grid {
        knots: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// Matrix-valued coefficient; matrices are written as arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatScheduleCfg {
    Constant {
        constant: Vec<Vec<f64>>,
    },
    Grid {
        knots: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainCfg {
    Constant { constant: f64 },
    Grid { knots: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseCfg {
    pub shape: NoiseShapeKind,
    pub b0: MatOrVecScheduleCfg,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<MatScheduleCfg>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gains: Vec<GainCfg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseShapeKind {
    Scalar,
    Vector,
}

/// b0 is a vector for the scalar shape and an n-by-m matrix for the vector
/// shape; both spellings parse and the shape field decides which is meant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatOrVecScheduleCfg {
    Vector(VecScheduleCfg),
    Matrix(MatScheduleCfg),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectifierParamsCfg {
    #[serde(rename = "R_i")]
    pub r_i: f64,
    #[serde(rename = "L_i")]
    pub l_i: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "R_L")]
    pub r_l: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub omega: f64,
    pub gamma: f64,
    #[serde(rename = "V_m")]
    pub v_m: f64,
    pub f_c: f64,
}

impl From<&RectifierParamsCfg> for RectifierParams {
    fn from(p: &RectifierParamsCfg) -> Self {
        RectifierParams {
            r_i: p.r_i,
            l_i: p.l_i,
            c: p.c,
            r_l: p.r_l,
            m: p.m,
            omega: p.omega,
            gamma: p.gamma,
            v_m: p.v_m,
            f_c: p.f_c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCfg {
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridCfg {
    #[serde(default)]
    pub t0: f64,
    pub dt: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleCfg {
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub scheme: SchemeCfg,
    #[serde(default)]
    pub retain_paths: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeCfg {
    #[default]
    EulerMaruyama,
    Heun,
}

impl From<SchemeCfg> for Scheme {
    fn from(v: SchemeCfg) -> Self {
        match v {
            SchemeCfg::EulerMaruyama => Scheme::EulerMaruyamaOnIto,
            SchemeCfg::Heun => Scheme::HeunStratonovich,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcfCfg {
    pub s: Vec<f64>,
    pub checkpoints: Vec<f64>,
    #[serde(default = "default_delta_steps")]
    pub delta_steps: usize,
}

fn default_delta_steps() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paths_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccf: Option<String>,
}

impl OutputCfg {
    fn is_default(&self) -> bool {
        *self == OutputCfg::default()
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// The built-in rectifier experiment behind `--preset`: switch-on from
    /// rest, 0.05 s horizon at 5 us steps, 2000-path ensemble, seed 42.
    pub fn preset_experiment(name: &str) -> Result<Self> {
        rectifier::preset(name).map_err(|e| anyhow!("{e}"))?;
        Ok(ExperimentConfig {
            model: ModelCfg {
                kind: ModelKind::Rectifier,
                n: None,
                interpretation: None,
                preset: Some(name.to_string()),
                a0: None,
                a: None,
                noise: None,
                params: None,
            },
            initial: InitialCfg {
                mean: vec![0.0; 3],
                covariance: None,
            },
            grid: GridCfg {
                t0: 0.0,
                dt: 5e-6,
                steps: 10_000,
            },
            ensemble: Some(EnsembleCfg {
                paths: 2000,
                seed: 42,
                scheme: SchemeCfg::EulerMaruyama,
                retain_paths: false,
            }),
            ccf: Some(CcfCfg {
                s: vec![1e-3; 3],
                // the residual window reaches one step past each checkpoint,
                // so the grid endpoint itself is not checkable
                checkpoints: vec![0.01, 0.02, 0.03, 0.04],
                delta_steps: 1,
            }),
            output: OutputCfg::default(),
        })
    }

    fn validate(&self) -> Result<()> {
        match self.model.kind {
            ModelKind::Bilinear => {
                if self.model.preset.is_some() || self.model.params.is_some() {
                    bail!("a bilinear model takes no preset or params block");
                }
                if self.model.n.is_none()
                    || self.model.a0.is_none()
                    || self.model.a.is_none()
                    || self.model.noise.is_none()
                {
                    bail!("a bilinear model needs n, a0, a, and noise");
                }
            }
            ModelKind::Rectifier => {
                if self.model.n.is_some()
                    || self.model.a0.is_some()
                    || self.model.a.is_some()
                    || self.model.noise.is_some()
                    || self.model.interpretation.is_some()
                {
                    bail!("a rectifier model takes only a preset name or a params block");
                }
                match (&self.model.preset, &self.model.params) {
                    (Some(_), Some(_)) => bail!("preset and params are mutually exclusive"),
                    (None, None) => bail!("a rectifier model needs a preset or a params block"),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Construct the system the config describes.
    pub fn build_system(&self) -> Result<BilinearSde> {
        match self.model.kind {
            ModelKind::Rectifier => {
                let params = match (&self.model.preset, &self.model.params) {
                    (Some(name), None) => rectifier::preset(name).map_err(|e| anyhow!("{e}"))?,
                    (None, Some(p)) => RectifierParams::from(p),
                    _ => unreachable!("checked in validate"),
                };
                rectifier::build_rectifier_sde(&params).map_err(|e| anyhow!("{e}"))
            }
            ModelKind::Bilinear => {
                let n = self.model.n.unwrap();
                let interpretation: Interpretation = self
                    .model
                    .interpretation
                    .unwrap_or(InterpretationCfg::Stratonovich)
                    .into();
                let a0 = build_vec_schedule(self.model.a0.as_ref().unwrap())?;
                let a = build_mat_schedule(self.model.a.as_ref().unwrap())?;
                let noise = build_noise(self.model.noise.as_ref().unwrap(), n)?;
                BilinearSde::new(n, interpretation, a0, a, noise).map_err(|e| anyhow!("{e}"))
            }
        }
    }

    /// Time grid shared by every command.
    pub fn build_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t0, self.grid.dt, self.grid.steps).map_err(|e| anyhow!("{e}"))
    }

    /// Initial mean and covariance (zero when omitted).
    pub fn build_initial(&self, n: usize) -> Result<MomentState> {
        let mean = self.initial.mean.clone();
        if mean.len() != n {
            bail!("initial mean has {} entries, model has {n}", mean.len());
        }
        let cov = match &self.initial.covariance {
            None => Matrix::zeros(n, n),
            Some(rows) => build_matrix(rows)?,
        };
        MomentState::new(self.grid.t0, mean, cov).map_err(|e| anyhow!("{e}"))
    }

    pub fn rectifier_params(&self) -> Result<RectifierParams> {
        if self.model.kind != ModelKind::Rectifier {
            bail!("this command needs a rectifier model");
        }
        match (&self.model.preset, &self.model.params) {
            (Some(name), None) => rectifier::preset(name).map_err(|e| anyhow!("{e}")),
            (None, Some(p)) => Ok(RectifierParams::from(p)),
            _ => unreachable!("checked in validate"),
        }
    }
}

fn build_matrix(rows: &[Vec<f64>]) -> Result<Matrix> {
    let borrowed: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    Matrix::from_rows(&borrowed).map_err(|e| anyhow!("{e}"))
}

fn build_vec_schedule(cfg: &VecScheduleCfg) -> Result<Schedule<Vec<f64>>> {
    match cfg {
        VecScheduleCfg::Constant { constant } => {
            Schedule::constant(constant.clone()).map_err(|e| anyhow!("{e}"))
        }
        VecScheduleCfg::Grid { knots, values } => {
            Schedule::grid(knots.clone(), values.clone()).map_err(|e| anyhow!("{e}"))
        }
    }
}

fn build_mat_schedule(cfg: &MatScheduleCfg) -> Result<Schedule<Matrix>> {
    match cfg {
        MatScheduleCfg::Constant { constant } => {
            Schedule::constant(build_matrix(constant)?).map_err(|e| anyhow!("{e}"))
        }
        MatScheduleCfg::Grid { knots, values } => {
            let mats: Result<Vec<Matrix>> = values.iter().map(|m| build_matrix(m)).collect();
            Schedule::grid(knots.clone(), mats?).map_err(|e| anyhow!("{e}"))
        }
    }
}

fn build_gain_schedule(cfg: &GainCfg) -> Result<Schedule<f64>> {
    match cfg {
        GainCfg::Constant { constant } => Schedule::constant(*constant).map_err(|e| anyhow!("{e}")),
        GainCfg::Grid { knots, values } => {
            Schedule::grid(knots.clone(), values.clone()).map_err(|e| anyhow!("{e}"))
        }
    }
}

fn build_noise(cfg: &NoiseCfg, n: usize) -> Result<NoiseShape> {
    match cfg.shape {
        NoiseShapeKind::Scalar => {
            if !cfg.gains.is_empty() {
                bail!("scalar noise takes b0 and b, not gains");
            }
            let b0 = match &cfg.b0 {
                MatOrVecScheduleCfg::Vector(v) => build_vec_schedule(v)?,
                MatOrVecScheduleCfg::Matrix(_) => {
                    bail!("scalar noise wants b0 as a plain vector")
                }
            };
            let b = cfg
                .b
                .as_ref()
                .ok_or_else(|| anyhow!("scalar noise needs a b matrix"))?;
            Ok(NoiseShape::ScalarInput {
                b0,
                b: build_mat_schedule(b)?,
            })
        }
        NoiseShapeKind::Vector => {
            if cfg.b.is_some() {
                bail!("vector noise takes b0 and gains, not b");
            }
            if cfg.gains.is_empty() {
                bail!("vector noise needs at least one gain");
            }
            let b0 = match &cfg.b0 {
                MatOrVecScheduleCfg::Matrix(m) => build_mat_schedule(m)?,
                MatOrVecScheduleCfg::Vector(v) => {
                    // accept an n-vector as the single-channel column
                    match v {
                        VecScheduleCfg::Constant { constant } => {
                            if constant.len() != n {
                                bail!("b0 column has {} entries, model has {n}", constant.len());
                            }
                            let col = Matrix::from_flat(constant.len(), 1, constant.clone())
                                .map_err(|e| anyhow!("{e}"))?;
                            Schedule::constant(col).map_err(|e| anyhow!("{e}"))?
                        }
                        VecScheduleCfg::Grid { knots, values } => {
                            let cols: Result<Vec<Matrix>> = values
                                .iter()
                                .map(|v| {
                                    Matrix::from_flat(v.len(), 1, v.clone())
                                        .map_err(|e| anyhow!("{e}"))
                                })
                                .collect();
                            Schedule::grid(knots.clone(), cols?).map_err(|e| anyhow!("{e}"))?
                        }
                    }
                }
            };
            let gains: Result<Vec<Schedule<f64>>> =
                cfg.gains.iter().map(build_gain_schedule).collect();
            Ok(NoiseShape::VectorInput { b0, gains: gains? })
        }
    }
}
