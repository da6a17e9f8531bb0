//! JSON run configuration.

use rto_core::benchmarks::{Benchmark, FieldSpec, ProblemSpec};
use rto_core::design::InterpolationParams;
use rto_core::fe::NewtonParams;
use rto_core::hyperelastic::MaterialParams;
use rto_core::mesh::SymmetryAxes;
use rto_core::mma::MmaParams;
use rto_core::optimize::{Continuation, Formulation, OptConfig, Ramp};
use rto_core::problem::Problem;
use rto_core::stochastic::Truncation;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Native,
    Reduced,
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scale::Native => "native",
            Scale::Reduced => "reduced",
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scale: Scale,
    pub mesh: MeshBlock,
    pub material: MaterialBlock,
    pub design: DesignBlock,
    #[serde(default)]
    pub uncertainty: UncertaintyBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub run: RunBlock,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkName {
    CompressionBlock,
    ClampedBeam,
    PinnedColumn,
    SimplySupportedBeam,
}

impl From<BenchmarkName> for Benchmark {
    fn from(b: BenchmarkName) -> Self {
        match b {
            BenchmarkName::CompressionBlock => Benchmark::CompressionBlock,
            BenchmarkName::ClampedBeam => Benchmark::ClampedBeam,
            BenchmarkName::PinnedColumn => Benchmark::PinnedColumn,
            BenchmarkName::SimplySupportedBeam => Benchmark::SimplySupportedBeam,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshBlock {
    pub benchmark: BenchmarkName,
    pub nx: usize,
    pub ny: usize,
    /// mm
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialBlock {
    pub e0: f64,
    pub nu: f64,
    /// defaults to `e0`
    pub el0: Option<f64>,
    /// defaults to `nu`
    pub nu_l: Option<f64>,
}

/// A constant or a stepwise ramp.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum RampSpec {
    Constant(f64),
    Ramp {
        start: f64,
        end: f64,
        step: f64,
        interval: usize,
    },
}

impl RampSpec {
    fn build(self) -> anyhow::Result<Ramp> {
        Ok(match self {
            RampSpec::Constant(v) => Ramp::constant(v),
            RampSpec::Ramp { start, end, step, interval } => Ramp::new(start, end, step, interval)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum FormulationName {
    Deterministic,
    Robust,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymmetryBlock {
    pub x: bool,
    pub y: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignBlock {
    pub filter_radius: f64,
    pub volume_fraction: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    pub formulation: FormulationName,
    pub p: RampSpec,
    pub p_l: RampSpec,
    pub beta: RampSpec,
    pub tail: usize,
    pub max_iterations: Option<usize>,
    pub move_limit: Option<f64>,
    /// overrides the benchmark's symmetry axes
    pub symmetry: Option<SymmetryBlock>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyBlock {
    pub load: LoadBlock,
    pub material: Option<MaterialFieldBlock>,
    pub geometry: Option<GeometryFieldBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadBlock {
    /// N
    pub mean: [f64; 2],
    /// isotropic standard deviation; absent means a deterministic load
    pub sigma: Option<f64>,
}

impl Default for LoadBlock {
    fn default() -> Self {
        Self { mean: [0.0, -1.0], sigma: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFieldBlock {
    pub mean: f64,
    pub variance: f64,
    pub lcx: Option<f64>,
    pub lcy: Option<f64>,
    /// fixed mode count instead of the coverage rule
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFieldBlock {
    pub min: f64,
    pub max: f64,
    pub lcx: Option<f64>,
    pub lcy: Option<f64>,
    pub modes: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    pub rtol: Option<f64>,
    pub max_iter: Option<usize>,
    pub min_step: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisParams {
    pub p: f64,
    pub p_l: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunBlock {
    #[serde(default)]
    pub seed: u64,
    /// write a design snapshot every this many iterations (0 = never)
    #[serde(default)]
    pub snapshot_interval: usize,
    #[serde(default = "default_mc")]
    pub mc_samples: usize,
    #[serde(default)]
    pub sigma_p_list: Vec<f64>,
    #[serde(default = "default_cdm")]
    pub cdm_step: f64,
    /// uniform design used by `uq-verify` and `grad-verify`
    #[serde(default = "half")]
    pub uniform_design: f64,
    /// interpolation parameters for the analysis-only subcommands; defaults
    /// to the end of the continuation schedule
    pub analysis: Option<AnalysisParams>,
}

fn default_mc() -> usize {
    10_000
}
fn default_cdm() -> f64 {
    1e-6
}
fn half() -> f64 {
    0.5
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            seed: 0,
            snapshot_interval: 0,
            mc_samples: default_mc(),
            sigma_p_list: Vec::new(),
            cdm_step: default_cdm(),
            uniform_design: half(),
            analysis: None,
        }
    }
}

/// Parse with line-anchored diagnostics.
pub fn parse(text: &str) -> anyhow::Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        let mut msg = e.to_string();
        if let Some(i) = msg.rfind(" at line ") {
            msg.truncate(i);
        }
        anyhow::anyhow!("line {}, column {}: {msg}", e.line(), e.column())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> anyhow::Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        anyhow::bail!("{name} must be positive, got {v}")
    }
}

fn length(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::INFINITY)
}

fn truncation(modes: Option<usize>) -> Truncation {
    modes.map(Truncation::Modes).unwrap_or_default()
}

impl RunConfig {
    fn validate(&self) -> anyhow::Result<()> {
        if self.mesh.nx < 2 || self.mesh.ny < 2 {
            anyhow::bail!("mesh needs at least 2×2 elements");
        }
        positive("mesh.lx", self.mesh.lx)?;
        positive("mesh.ly", self.mesh.ly)?;
        positive("material.e0", self.material.e0)?;
        positive("design.filter_radius", self.design.filter_radius)?;
        if !(self.design.volume_fraction > 0.0 && self.design.volume_fraction <= 1.0) {
            anyhow::bail!("design.volume_fraction must be in (0, 1]");
        }
        if self.design.alpha < 0.0 {
            anyhow::bail!("design.alpha must be non-negative");
        }
        if let Some(s) = self.uncertainty.load.sigma {
            positive("uncertainty.load.sigma", s)?;
        }
        if let Some(m) = &self.uncertainty.material {
            positive("uncertainty.material.mean", m.mean)?;
            positive("uncertainty.material.variance", m.variance)?;
        }
        for &s in &self.run.sigma_p_list {
            positive("run.sigma_p_list", s)?;
        }
        positive("run.cdm_step", self.run.cdm_step)?;
        if let Some(v) = self.design.move_limit {
            positive("design.move_limit", v)?;
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> anyhow::Result<ProblemSpec> {
        let m = &self.material;
        let u = &self.uncertainty;
        let mut newton = NewtonParams::default();
        if let Some(v) = self.solver.rtol {
            newton.rtol = v;
        }
        if let Some(v) = self.solver.max_iter {
            newton.max_iter = v;
        }
        if let Some(v) = self.solver.min_step {
            newton.min_step = v;
        }
        Ok(ProblemSpec {
            benchmark: self.mesh.benchmark.into(),
            nx: self.mesh.nx,
            ny: self.mesh.ny,
            lx: self.mesh.lx,
            ly: self.mesh.ly,
            material: MaterialParams::new(m.e0, m.nu, m.el0.unwrap_or(m.e0), m.nu_l.unwrap_or(m.nu))?,
            filter_radius: self.design.filter_radius,
            load_mean: u.load.mean,
            load_sigma: u.load.sigma,
            material_field: u.material.as_ref().map(|f| {
                (f.mean, f.variance, FieldSpec { lcx: length(f.lcx), lcy: length(f.lcy), truncation: truncation(f.modes) })
            }),
            geometry_field: u.geometry.as_ref().map(|f| {
                (f.min, f.max, FieldSpec { lcx: length(f.lcx), lcy: length(f.lcy), truncation: truncation(f.modes) })
            }),
            newton,
        })
    }

    pub fn build(&self) -> anyhow::Result<Problem> {
        self.build_spec(&self.problem_spec()?)
    }

    pub fn build_spec(&self, spec: &ProblemSpec) -> anyhow::Result<Problem> {
        let mut p = spec.build()?;
        if let Some(s) = self.design.symmetry {
            p.model.mesh.set_symmetry(SymmetryAxes { x: s.x, y: s.y });
        }
        Ok(p)
    }

    pub fn continuation(&self) -> anyhow::Result<Continuation> {
        Ok(Continuation {
            p: self.design.p.build()?,
            p_l: self.design.p_l.build()?,
            beta: self.design.beta.build()?,
            tail: self.design.tail,
        })
    }

    pub fn opt_config(&self) -> anyhow::Result<OptConfig> {
        let mut mma = MmaParams::default();
        if let Some(v) = self.design.move_limit {
            mma.move_limit = v;
        }
        Ok(OptConfig {
            formulation: match self.design.formulation {
                FormulationName::Deterministic => Formulation::Deterministic,
                FormulationName::Robust => Formulation::Robust,
            },
            alpha: self.design.alpha,
            volume_fraction: self.design.volume_fraction,
            continuation: self.continuation()?,
            max_iterations: self.design.max_iterations,
            mma,
        })
    }

    /// Interpolation parameters for analysis-only subcommands.
    pub fn analysis_params(&self) -> anyhow::Result<InterpolationParams> {
        Ok(match self.run.analysis {
            Some(a) => InterpolationParams::new(a.p, a.p_l, a.beta),
            None => {
                let c = self.continuation()?;
                InterpolationParams::new(c.p.end, c.p_l.end, c.beta.end)
            }
        })
    }
}
