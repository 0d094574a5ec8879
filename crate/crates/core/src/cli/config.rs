use std::f64::consts::LN_2;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{IntegrationSpec, ScaleGrid, SeriesOptions};
use crate::error::{Error, Result};
use crate::fields::PatchConfig;
use crate::harmonics::{HarmonicBasis, Projector, SphereQuadrature};
use crate::solver::SolverConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "BLOWUP_OUT_DIR";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Synth,
    Solve,
}

/// `steps` intervals on `[t_start, t_end]`; the spacing must divide `ln 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    #[serde(default)]
    pub t_start: f64,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_t_end() -> f64 {
    10.0 * LN_2
}
fn default_steps() -> usize {
    80
}
fn default_k_max() -> usize {
    8
}
fn default_integration() -> IntegrationSpec {
    IntegrationSpec::ClosedForm
}

impl Default for ScaleSpec {
    fn default() -> Self {
        ScaleSpec {
            t_start: 0.0,
            t_end: default_t_end(),
            steps: default_steps(),
        }
    }
}

impl ScaleSpec {
    pub fn grid(&self) -> Result<ScaleGrid> {
        if self.steps == 0 {
            return Err(Error::config("scales.steps must be positive"));
        }
        let dt = (self.t_end - self.t_start) / self.steps as f64;
        let ratio = LN_2 / dt;
        if !(dt > 0.0) || !dt.is_finite() || (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
            return Err(Error::config(format!(
                "scales: spacing (t_end − t_start)/steps = {dt} must divide ln 2 (got ln2/spacing = {ratio})"
            )));
        }
        let grid = ScaleGrid::uniform(self.t_start, self.t_end, self.steps + 1)?;
        debug_assert!(grid.steps_per_octave().is_some());
        Ok(grid)
    }
}

/// Sphere rule: circle nodes (n = 2), Gauss–Legendre polar nodes with twice
/// as many azimuths (n = 3), Monte Carlo nodes (n ≥ 4).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default)]
    pub sphere_order: Option<usize>,
}

impl QuadratureSpec {
    pub fn projector(&self, n: usize) -> Result<Projector> {
        let rule = match (self.sphere_order, n) {
            (None, _) => SphereQuadrature::default_for(n)?,
            (Some(k), 2) => SphereQuadrature::circle(k)?,
            (Some(k), 3) => SphereQuadrature::gauss_product(k, 2 * k)?,
            (Some(k), _) => SphereQuadrature::monte_carlo(n, k, 0x5EED_5F3E)?,
        };
        Projector::new(HarmonicBasis::new(n)?, rule)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_name")]
    pub name: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_name() -> String {
    "run".to_string()
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            dir: default_dir(),
            name: default_name(),
        }
    }
}

/// A complete run description, read from versioned JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<PatchConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub scales: ScaleSpec,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default = "default_integration")]
    pub integration: IntegrationSpec,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// `T` for tail suprema and the dissipation report; defaults to `t_start`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_start: Option<f64>,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub name: Option<String>,
    pub k_max: Option<usize>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub t_end: Option<f64>,
    pub steps: Option<usize>,
    pub cells: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("line {} column {}: {e}", e.line(), e.column())))?;
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config { message, patches } => Error::Config {
                message: format!("{}: {message}", path.display()),
                patches,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn dimension(&self) -> Result<usize> {
        match (self.mode, &self.synthetic, &self.solver) {
            (RunMode::Synth, Some(p), _) => Ok(p.dimension),
            (RunMode::Solve, _, Some(s)) => Ok(s.dimension),
            (RunMode::Synth, None, _) => Err(Error::config("mode \"synth\" needs a \"synthetic\" section")),
            (RunMode::Solve, _, None) => Err(Error::config("mode \"solve\" needs a \"solver\" section")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        match self.mode {
            RunMode::Synth if self.solver.is_some() => {
                return Err(Error::config("mode \"synth\" does not take a \"solver\" section"))
            }
            RunMode::Solve if self.synthetic.is_some() => {
                return Err(Error::config("mode \"solve\" does not take a \"synthetic\" section"))
            }
            _ => {}
        }
        self.dimension()?;
        if let Some(p) = &self.synthetic {
            p.validate()?;
        }
        if let Some(s) = &self.solver {
            s.validate()?;
        }
        self.scales.grid()?;
        if self.k_max > 30 {
            return Err(Error::config(format!("k_max = {} exceeds 30", self.k_max)));
        }
        if let IntegrationSpec::Sampled { samples_per_region, .. } = self.integration {
            if samples_per_region < 4 {
                return Err(Error::config("integration.samples_per_region must be at least 4"));
            }
        }
        if let Some(t) = self.report_start {
            if !(t >= self.scales.t_start && t < self.scales.t_end) {
                return Err(Error::config(format!("report_start {t} outside the scale range")));
            }
        }
        if self.output.name.is_empty() || self.output.name.contains(['/', '\\']) {
            return Err(Error::config("output.name must be a plain file stem"));
        }
        Ok(())
    }

    /// Applies overrides with precedence flags > environment > file; only the
    /// output directory reads the environment.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(dir) = o.out_dir.clone() {
            self.output.dir = dir;
        } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.output.dir = PathBuf::from(dir);
        }
        if let Some(name) = &o.name {
            self.output.name = name.clone();
        }
        if let Some(k) = o.k_max {
            self.k_max = k;
        }
        if let Some(t) = o.t_end {
            self.scales.t_end = t;
        }
        if let Some(s) = o.steps {
            self.scales.steps = s;
        }
        if let Some(cells) = o.cells {
            match &mut self.solver {
                Some(s) => s.cells = cells,
                None => return Err(Error::config("--cells applies to solve runs only")),
            }
        }
        if o.seed.is_some() || o.samples.is_some() {
            let (old_samples, old_seed) = match self.integration {
                IntegrationSpec::Sampled { samples_per_region, seed } => (Some(samples_per_region), Some(seed)),
                IntegrationSpec::ClosedForm => (None, None),
            };
            let seed = o
                .seed
                .or(old_seed)
                .ok_or_else(|| Error::config("--samples switches to sampled integration and needs --seed"))?;
            self.integration = IntegrationSpec::Sampled {
                samples_per_region: o.samples.or(old_samples).unwrap_or(crate::dynamics::DEFAULT_SAMPLES),
                seed,
            };
        }
        Ok(())
    }

    pub fn series_options(&self) -> Result<SeriesOptions> {
        let n = self.dimension()?;
        Ok(SeriesOptions {
            spec: self.integration.clone(),
            k_max: self.k_max,
            projector: Arc::new(self.quadrature.projector(n)?),
        })
    }
}
