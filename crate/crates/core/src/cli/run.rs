use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, RunMode};
use crate::dynamics::checks::{max_dissipation, tail_sup};
use crate::dynamics::{
    absorption_check, compute_b, compute_series, convergence_report, dyadic_check, lyapunov_residual,
    moment_identity_residual, ode_crosscheck_with, record_invariants, AbsorptionReport, DissipationReport, DyadicReport,
    IntegrationSpec, LyapunovInterval, MomentMethod, OdeInterval, RecordInvariants, ScaleSeries, SeriesOptions,
};
use crate::error::{Error, Result};
use crate::fields::{build_synthetic, rescale, FieldMode, SolutionField};
use crate::harmonics::{kappa, HarmonicBasis};
use crate::solver::{fixed_point_solve, write_snapshot, GridField, GridSolution, SolverMetrics};

/// Every anchor a run reports, in table order.
pub const RUN_ANCHORS: &[&str] = &[
    "center-ode",
    "moment-identity",
    "projection-coordinate",
    "trace-consistency",
    "derivative-bound",
    "dyadic-partition",
    "dyadic-F",
    "dyadic-I",
    "J-bound",
    "J-bound-integral",
    "lyapunov",
    "I0-absorb",
    "volterra",
    "I-global",
    "finite-dissipation",
    "dissipation-tail",
    "monotone-tails",
    "outer-small",
    "taylor-remainder",
    "scaling-covariance",
    "solver",
];

/// CSV schema tag written in the header comment.
pub const CSV_SCHEMA: &str = "blowup-series/1";

/// Lyapunov residual threshold at grid scale.
pub const LYAPUNOV_TOLERANCE: f64 = 5e-3;
/// ODE residual threshold with exact moment integrals.
pub const ODE_TOLERANCE: f64 = 1e-6;
/// Dyadic F-law threshold with closed forms.
pub const DYADIC_TOLERANCE: f64 = 1e-8;
/// Allowance in standard deviations for sampled comparisons inside a run.
pub const RUN_SIGMAS: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// Fails the run.
    Hard,
    /// Reported trend or diagnostic.
    Soft,
    /// Hypothesis not met for this field (e.g. consistency mode).
    NotApplicable,
}

/// One row of the check table: `passed` iff `value ≤ threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub anchor: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub note: String,
}

impl CheckRow {
    pub fn new(anchor: &str, kind: CheckKind, value: f64, threshold: f64, note: impl Into<String>) -> Self {
        CheckRow {
            anchor: anchor.to_string(),
            kind,
            passed: kind == CheckKind::NotApplicable || value <= threshold,
            value,
            threshold,
            note: note.into(),
        }
    }

    fn not_applicable(anchor: &str, note: impl Into<String>) -> Self {
        Self::new(anchor, CheckKind::NotApplicable, f64::NAN, f64::NAN, note)
    }

    pub fn fails_run(&self) -> bool {
        self.kind == CheckKind::Hard && !self.passed
    }
}

/// All cross-scale diagnostics of one series.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Analysis {
    pub checks: Vec<CheckRow>,
    pub ode: Vec<OdeInterval>,
    pub lyapunov: Option<Vec<LyapunovInterval>>,
    pub dyadic: DyadicReport,
    pub absorption: Option<AbsorptionReport>,
    pub dissipation: DissipationReport,
    pub invariants: RecordInvariants,
}

fn max_of(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(f64::NEG_INFINITY, f64::max)
}

/// Knobs of [`analyze_series`].
#[derive(Clone, Debug, Default)]
pub struct CheckSettings {
    /// Index of the first scale used for tail suprema and dissipation.
    pub report_start: usize,
    /// Replaces `κ_n` in the ODE cross-check; mutation tests only.
    pub ode_coefficient: Option<f64>,
}

/// Runs every check on a computed series. `solver` carries grid metrics in
/// solve runs.
pub fn analyze_series(
    field: &Arc<dyn SolutionField>,
    series: &ScaleSeries,
    options: &SeriesOptions,
    settings: &CheckSettings,
    solver: Option<&SolverMetrics>,
) -> Result<Analysis> {
    let report_start = settings.report_start;
    let n = series.dimension;
    let kap = kappa(n)?;
    let basis = options.projector.basis().elements().to_vec();
    let solution = series.mode == FieldMode::Solution;
    let exact = options.spec == IntegrationSpec::ClosedForm && field.inactive_balls().is_some();
    let clean = exact && series.records.iter().all(|r| r.method == MomentMethod::ClosedForm);
    let dt = series.grid.spacing().unwrap_or(f64::NAN);
    let mut checks = Vec::new();

    let ode = ode_crosscheck_with(field, series, options, settings.ode_coefficient.unwrap_or(kap))?;
    let ode_worst = max_of(ode.iter().map(|o| o.residual)).max(0.0);
    checks.push(if exact {
        CheckRow::new("center-ode", CheckKind::Hard, ode_worst, ODE_TOLERANCE, "exact moment integrals")
    } else {
        let sigma = max_of(series.records.iter().map(|r| r.f_sigma)).max(0.0);
        CheckRow::new(
            "center-ode",
            CheckKind::Soft,
            ode_worst,
            ODE_TOLERANCE + RUN_SIGMAS * kap * dt * sigma,
            "Simpson rule with sampled moments; grid fields add interpolation error",
        )
    });

    if series.len() >= 3 {
        let worst = moment_identity_residual(series, &basis)?;
        let rate = max_of(
            series
                .records
                .iter()
                .flat_map(|r| basis.iter().map(move |e| r.psi_moment(e).abs())),
        );
        let g = (n + 2) as f64;
        let bound = dt * dt * g * g / 3.0 * rate * (g * dt).exp() + 1e-10;
        checks.push(if clean {
            CheckRow::new("moment-identity", CheckKind::Hard, worst, bound, "centered differences, O(Δt²) bound")
        } else {
            CheckRow::new(
                "moment-identity",
                CheckKind::Soft,
                worst,
                bound,
                "centered differences; the O(Δt²) bound needs smooth a(t), which fails while a patch crosses the unit sphere and on grid fields",
            )
        });
    } else {
        checks.push(CheckRow::not_applicable("moment-identity", "fewer than 3 scales"));
    }

    let inv = record_invariants(series, &basis)?;
    let a_scale = max_of(series.records.iter().flat_map(|r| r.a.iter().map(|v| v.abs()))).max(0.0);
    let f_scale = max_of(series.records.iter().map(|r| r.f)).max(0.0);
    checks.push(CheckRow::new(
        "projection-coordinate",
        if n <= 3 { CheckKind::Hard } else { CheckKind::Soft },
        inv.coordinate_gap,
        1e-9 * (1.0 + a_scale),
        "a = c_n B:E_j with the exact c_n",
    ));
    checks.push(CheckRow::new(
        "trace-consistency",
        CheckKind::Hard,
        inv.trace_gap,
        1e-10 * (1.0 + f_scale),
        "",
    ));
    checks.push(CheckRow::new(
        "derivative-bound",
        CheckKind::Hard,
        inv.derivative_excess,
        1e-12 * (1.0 + kap * f_scale),
        "‖κ tf M‖_F − κF",
    ));
    checks.push(CheckRow::new(
        "dyadic-partition",
        CheckKind::Hard,
        inv.partition_low.max(inv.partition_high),
        0.0,
        format!("tolerance {:.3e} included", inv.partition_tolerance),
    ));

    let dyadic = dyadic_check(series)?;
    let partial = if dyadic.partial {
        format!("; {} (t, k) pairs beyond t_end skipped", dyadic.skipped)
    } else {
        String::new()
    };
    let f_excess = max_of(dyadic.records.iter().map(|d| d.f_residual() - RUN_SIGMAS * d.f_sigma));
    checks.push(CheckRow::new(
        "dyadic-F",
        CheckKind::Hard,
        f_excess,
        DYADIC_TOLERANCE,
        format!("residual minus {RUN_SIGMAS}σ{partial}"),
    ));
    let i_excess = max_of(dyadic.records.iter().map(|d| d.i_residual - RUN_SIGMAS * d.i_sigma));
    checks.push(CheckRow::new(
        "dyadic-I",
        CheckKind::Soft,
        i_excess,
        DYADIC_TOLERANCE,
        format!("residual minus {RUN_SIGMAS}σ; sampled on both sides{partial}"),
    ));
    let j_scale = max_of(dyadic.records.iter().map(|d| d.j_bound)).max(0.0);
    checks.push(CheckRow::new(
        "J-bound",
        CheckKind::Hard,
        max_of(dyadic.records.iter().map(|d| d.j_k.abs() - d.j_bound)),
        1e-12 * (1.0 + j_scale),
        "|J_k| ≤ ‖B(s) − B(t)‖_F F₀(s)",
    ));
    checks.push(CheckRow::new(
        "J-bound-integral",
        CheckKind::Soft,
        max_of(dyadic.records.iter().map(|d| d.j_k.abs() - d.j_soft_bound)),
        1e-12 * (1.0 + j_scale),
        "|J_k| ≤ κ (∫_t^s F) F₀(s), integral by trapezoid",
    ));

    let lyapunov = if solution && series.len() >= 2 {
        let ly = lyapunov_residual(series)?;
        checks.push(CheckRow::new(
            "lyapunov",
            CheckKind::Hard,
            max_of(ly.iter().map(|l| l.residual)),
            LYAPUNOV_TOLERANCE,
            "centered ½‖B‖² difference vs endpoint-averaged right side",
        ));
        Some(ly)
    } else {
        checks.push(CheckRow::not_applicable(
            "lyapunov",
            "consistency mode: ∇u ≠ 0 on the inactive set",
        ));
        None
    };

    let absorption = match absorption_check(series, report_start) {
        Ok(a) => Some(a),
        Err(Error::InsufficientSeries(_)) => None,
        Err(e) => return Err(e),
    };
    match &absorption {
        Some(a) => {
            if let Some(m) = a.i0_margin {
                checks.push(CheckRow::new("I0-absorb", CheckKind::Hard, -m, 1e-12, "|I₀| ≤ 2εF₀ at every scale"));
            } else {
                checks.push(CheckRow::not_applicable("I0-absorb", "consistency mode"));
            }
            checks.push(CheckRow::new(
                "volterra",
                CheckKind::Hard,
                a.volterra_lhs - a.volterra_rhs,
                1e-15,
                format!(
                    "∫V = {:.6e} ≤ {:.6e} on [{:.4}, {:.4}], {} dyadic terms",
                    a.volterra_lhs, a.volterra_rhs, a.t_start, a.t_stop, a.k_used
                ),
            ));
            if let Some(m) = a.i_global_margin {
                checks.push(CheckRow::new(
                    "I-global",
                    CheckKind::Soft,
                    -m,
                    1e-12,
                    "suprema over the computed window only; V truncated",
                ));
            } else {
                checks.push(CheckRow::not_applicable("I-global", "consistency mode"));
            }
        }
        None => {
            for anchor in ["I0-absorb", "volterra", "I-global"] {
                checks.push(CheckRow::not_applicable(anchor, "series shorter than one octave after T"));
            }
        }
    }

    let dissipation = convergence_report(field, series, options, report_start)?;
    let b_change = series.records[series.len() - 1]
        .b
        .sub(&series.records[report_start].b)
        .frobenius_norm();
    let span = dissipation.t_end - dissipation.t_start;
    let excess = (b_change - dissipation.total_variation_b).max(dissipation.integral_f - max_dissipation(n)? * span);
    checks.push(CheckRow::new(
        "finite-dissipation",
        CheckKind::Hard,
        if dissipation.integral_f.is_finite() && dissipation.total_variation_b.is_finite() {
            excess
        } else {
            f64::INFINITY
        },
        1e-12,
        format!(
            "∫F = {:.6e}, total variation {:.6e}{}",
            dissipation.integral_f,
            dissipation.total_variation_b,
            if dissipation.insufficient { "; fewer than 20 scales" } else { "" }
        ),
    ));
    let total = dissipation.integral_f + dissipation.tail_f;
    checks.push(CheckRow::new(
        "dissipation-tail",
        CheckKind::Soft,
        if total > 0.0 { dissipation.tail_f / total } else { 0.0 },
        0.01,
        match (dissipation.tail_rate, dissipation.tail_fit_r2) {
            (Some(rate), Some(r2)) => format!("exponential fit: rate {rate:.4}, R² {r2:.4}"),
            _ => "F vanishes at t_end".to_string(),
        },
    ));

    let recs = &series.records[report_start..];
    let eta = tail_sup(&recs.iter().map(|r| r.eps).collect::<Vec<_>>());
    let mu = tail_sup(&recs.iter().map(|r| r.f0()).collect::<Vec<_>>());
    let monotone = eta.windows(2).all(|w| w[1] <= w[0]) && mu.windows(2).all(|w| w[1] <= w[0]);
    checks.push(CheckRow::new(
        "monotone-tails",
        CheckKind::Hard,
        if monotone { 0.0 } else { 1.0 },
        0.0,
        "η_T and μ_T non-increasing in T",
    ));
    let eps_first = recs[0].eps.max(f64::MIN_POSITIVE);
    let eps_ratio = recs[recs.len() - 1].eps / eps_first;
    checks.push(CheckRow::new(
        "outer-small",
        CheckKind::Soft,
        eps_ratio,
        1.0,
        format!(
            "ε(t_end)/ε(T); F₀ from {:.3e} to {:.3e}; trend only",
            recs[0].f0(),
            recs[recs.len() - 1].f0()
        ),
    ));
    checks.push(CheckRow::new(
        "taylor-remainder",
        CheckKind::Soft,
        dissipation.taylor_sup,
        1e-2,
        "max over sphere nodes of |u_r − q_∞| at the finest scale",
    ));

    // B of the pre-scaled field at t equals B at t + Δt
    let mut covariance: f64 = 0.0;
    if series.len() >= 2 && dt.is_finite() {
        let shifted: Arc<dyn SolutionField> = Arc::new(rescale(field.clone(), dt)?);
        for (i, r) in series.records[..series.len() - 1].iter().enumerate() {
            let b = compute_b(&rescale(shifted.clone(), r.t)?, &options.projector)?.0;
            covariance = covariance.max(b.sub(&series.records[i + 1].b).frobenius_norm());
        }
    }
    let b_scale = max_of(series.records.iter().map(|r| r.b.frobenius_norm())).max(0.0);
    checks.push(CheckRow::new(
        "scaling-covariance",
        CheckKind::Hard,
        covariance,
        1e-9 * (1.0 + b_scale),
        "B of rescale(u, Δt) at t vs B(t + Δt)",
    ));

    checks.push(match solver {
        Some(m) => CheckRow::new(
            "solver",
            CheckKind::Soft,
            m.pending_flips as f64,
            0.0,
            format!(
                "converged {}, {} sweeps, {} inactive nodes, max |∇u| on mask {:.3e} (δ_h {:.3e})",
                m.converged, m.outer_iterations, m.inactive_nodes, m.max_gradient_on_mask, m.threshold
            ),
        ),
        None => CheckRow::not_applicable("solver", "no solver metrics (synthetic field or loaded snapshot)"),
    });

    Ok(Analysis {
        checks,
        ode,
        lyapunov,
        dyadic,
        absorption,
        dissipation,
        invariants: inv,
    })
}

/// Summary written as `<name>.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub csv: String,
    pub snapshot: Option<String>,
    pub solver: Option<SolverMetrics>,
    pub dissipation: DissipationReport,
    pub checks: Vec<CheckRow>,
    pub notices: Vec<String>,
    pub passed: bool,
    /// Wall-clock seconds per stage; kept out of the written report so that
    /// repeated runs produce identical files.
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    pub fn failures(&self) -> Vec<&CheckRow> {
        self.checks.iter().filter(|c| c.fails_run()).collect()
    }
}

/// Builds the field a config describes; solve runs also return the grid.
pub fn build_field(config: &RunConfig) -> Result<(Arc<dyn SolutionField>, Option<GridSolution>)> {
    config.validate()?;
    match config.mode {
        RunMode::Synth => {
            let p = config.synthetic.clone().expect("validated");
            Ok((Arc::new(build_synthetic(p)?), None))
        }
        RunMode::Solve => {
            let sol = fixed_point_solve(config.solver.as_ref().expect("validated"))?;
            Ok((Arc::new(sol.field().clone()), Some(sol)))
        }
    }
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:e}")
    }
}

/// One row per scale: `t, b_1..b_N, F, F_0..F_kmax, I, I0, eps,
/// lyapunov_residual, ode_residual`; interval residuals sit on the row that
/// ends the interval.
pub fn series_csv(series: &ScaleSeries, analysis: &Analysis, basis: &HarmonicBasis) -> String {
    let nb = series.records.first().map_or(0, |r| r.a.len());
    let mut out = String::new();
    writeln!(out, "# schema: {CSV_SCHEMA}").unwrap();
    let mut header = vec!["t".to_string()];
    header.extend((1..=nb).map(|j| format!("b_{j}")));
    header.push("F".into());
    header.extend((0..=series.k_max).map(|k| format!("F_{k}")));
    header.extend(["I", "I0", "eps", "lyapunov_residual", "ode_residual"].map(String::from));
    writeln!(out, "{}", header.join(",")).unwrap();
    for (i, r) in series.records.iter().enumerate() {
        let mut row: Vec<String> = vec![fmt_f(r.t)];
        row.extend(basis.coordinates(&r.b).into_iter().map(fmt_f));
        row.push(fmt_f(r.f));
        row.extend(r.f_k.iter().map(|v| fmt_f(*v)));
        row.extend([r.i, r.i0(), r.eps].map(fmt_f));
        let ly = match (&analysis.lyapunov, i) {
            (Some(l), i) if i > 0 => l[i - 1].residual,
            _ => f64::NAN,
        };
        let ode = if i > 0 { analysis.ode[i - 1].residual } else { f64::NAN };
        row.push(fmt_f(ly));
        row.push(fmt_f(ode));
        writeln!(out, "{}", row.join(",")).unwrap();
    }
    out
}

/// Renders the check table for terminals.
pub fn check_table(rows: &[CheckRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<24} {:<6} {:<5} {:>13} {:>13}  note", "anchor", "kind", "ok", "value", "threshold").unwrap();
    for r in rows {
        let kind = match r.kind {
            CheckKind::Hard => "hard",
            CheckKind::Soft => "soft",
            CheckKind::NotApplicable => "n/a",
        };
        let ok = match (r.kind, r.passed) {
            (CheckKind::NotApplicable, _) => "-",
            (_, true) => "pass",
            (CheckKind::Soft, false) => "warn",
            (_, false) => "FAIL",
        };
        writeln!(
            out,
            "{:<24} {:<6} {:<5} {:>13} {:>13}  {}",
            r.anchor,
            kind,
            ok,
            if r.value.is_nan() { "-".into() } else { format!("{:.4e}", r.value) },
            if r.threshold.is_nan() { "-".into() } else { format!("{:.4e}", r.threshold) },
            r.note
        )
        .unwrap();
    }
    out
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Runs the pipeline on an already built field and writes the outputs.
pub fn run_with_field(
    config: &RunConfig,
    field: Arc<dyn SolutionField>,
    grid: Option<&GridSolution>,
) -> Result<RunReport> {
    run_with_settings(config, field, grid, None)
}

/// [`run_with_field`] with an optional replacement for `κ_n` in the ODE
/// cross-check.
pub fn run_with_settings(
    config: &RunConfig,
    field: Arc<dyn SolutionField>,
    grid: Option<&GridSolution>,
    ode_coefficient: Option<f64>,
) -> Result<RunReport> {
    config.validate()?;
    let mut timings = Vec::new();
    let clock = Instant::now();
    let options = config.series_options()?;
    let scale_grid = config.scales.grid()?;
    let series = compute_series(field.clone(), &scale_grid, &options)?;
    timings.push(("series".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let start = config.report_start.map_or(0, |t| {
        series.times().iter().position(|s| *s >= t - 1e-12).unwrap_or(0)
    });
    let metrics = grid.map(|g| g.metrics.clone());
    let settings = CheckSettings {
        report_start: start,
        ode_coefficient,
    };
    let analysis = analyze_series(&field, &series, &options, &settings, metrics.as_ref())?;
    timings.push(("checks".to_string(), clock.elapsed().as_secs_f64()));

    let clock = Instant::now();
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let csv_path = dir.join(format!("{}.csv", config.output.name));
    write_file(&csv_path, series_csv(&series, &analysis, options.projector.basis()).as_bytes())?;
    let snapshot = match grid {
        Some(g) => {
            let base = dir.join(format!("{}-grid", config.output.name));
            let paths = write_snapshot(g, &base)?;
            Some(file_name(&paths[2]))
        }
        None => None,
    };
    let mut notices: Vec<String> = Vec::new();
    for r in &series.records {
        for n in &r.notices {
            if !notices.contains(n) {
                notices.push(n.clone());
            }
        }
    }
    if let Some(m) = &metrics {
        if !m.converged {
            notices.push(format!(
                "solver did not converge: {} pending flips after {} sweeps; best iterate used",
                m.pending_flips, m.outer_iterations
            ));
        }
    }
    let mut report = RunReport {
        config: config.clone(),
        csv: file_name(&csv_path),
        snapshot,
        solver: metrics,
        passed: analysis.checks.iter().all(|c| !c.fails_run()),
        dissipation: analysis.dissipation.clone(),
        checks: analysis.checks,
        notices,
        timings: Vec::new(),
    };
    let json_path = dir.join(format!("{}.json", config.output.name));
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_file(&json_path, text.as_bytes())?;
    timings.push(("write".to_string(), clock.elapsed().as_secs_f64()));
    report.timings = timings;
    Ok(report)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Build, sweep, check, write.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let clock = Instant::now();
    let (field, grid) = build_field(config)?;
    let build = clock.elapsed().as_secs_f64();
    let mut report = run_with_field(config, field, grid.as_ref())?;
    report.timings.insert(0, ("build".to_string(), build));
    Ok(report)
}

/// Rebuilds a grid field from `<base>.bin` and `<base>.mask.bin`.
pub fn load_grid_field(base: &Path) -> Result<GridField> {
    let with = |suffix: &str| {
        let mut s = base.as_os_str().to_owned();
        s.push(suffix);
        PathBuf::from(s)
    };
    let values = crate::solver::read_snapshot(&with(".bin"))?;
    let mask = crate::solver::read_snapshot(&with(".mask.bin"))?;
    if (values.dimension, values.cells) != (mask.dimension, mask.cells) {
        return Err(Error::Data("value and mask snapshots describe different grids".into()));
    }
    let grid = crate::solver::Grid::new(values.dimension, values.cells)?;
    GridField::new(grid, values.values, mask.values.iter().map(|v| *v > 0.5).collect())
}
