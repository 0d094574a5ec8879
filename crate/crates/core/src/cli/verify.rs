//! The bundled acceptance matrix behind `blowup verify`.

use std::f64::consts::{LN_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, ScaleSpec};
use super::run::{build_field, run_with_settings, CheckKind, CheckRow, RunReport};
use crate::error::{Error, Result};
use crate::fields::{Ball, PatchConfig};
use crate::harmonics::{gram_constant, kappa, Projector, TraceFreeSym};
use crate::solver::{poisson_solve, radial_rhs, radial_solution, BoundaryData, Grid, SolverConfig};

pub const SINGLE_BALL: &str = include_str!("../../examples/single-ball.json");
pub const THREE_BALL: &str = include_str!("../../examples/three-ball.json");
pub const HYPERPLANE: &str = include_str!("../../examples/hyperplane.json");
pub const RADIAL: &str = include_str!("../../examples/radial.json");

/// Anchors that only the verify matrix reports.
pub const VERIFY_ANCHORS: &[&str] = &[
    "sphere-moment",
    "projection-roundtrip",
    "lyapunov-order",
    "solver-hausdorff",
    "solver-order",
];

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Multiplies `κ_n` in the ODE cross-check; `-1` is the sign-flip mutation.
    pub kappa_sign: f64,
    /// Replaces `k_max` in every run.
    pub k_max: Option<usize>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            kappa_sign: 1.0,
            k_max: None,
        }
    }
}

/// One line of the verify table, aggregated over every run reporting the anchor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    pub anchor: String,
    pub kind: CheckKind,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub runs: usize,
    /// Run holding the worst value.
    pub worst: String,
    pub note: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub passed: bool,
    pub csv: String,
    pub failures: Vec<String>,
    pub notices: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyReport {
    pub rows: Vec<VerifyRow>,
    pub runs: Vec<RunSummary>,
    pub passed: bool,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl VerifyReport {
    pub fn row(&self, anchor: &str) -> Option<&VerifyRow> {
        self.rows.iter().find(|r| r.anchor == anchor)
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "{:<22} {:<5} {:<5} {:>11} {:>11} {:>4}  worst run",
            "anchor", "kind", "ok", "value", "threshold", "runs"
        )
        .unwrap();
        for r in &self.rows {
            let kind = match r.kind {
                CheckKind::Hard => "hard",
                CheckKind::Soft => "soft",
                CheckKind::NotApplicable => "n/a",
            };
            let ok = match (r.kind, r.passed) {
                (CheckKind::NotApplicable, _) => "-",
                (_, true) => "pass",
                (_, false) => "FAIL",
            };
            let num = |v: f64| if v.is_nan() { "-".to_string() } else { format!("{v:.3e}") };
            writeln!(
                out,
                "{:<22} {:<5} {:<5} {:>11} {:>11} {:>4}  {}",
                r.anchor,
                kind,
                ok,
                num(r.value),
                num(r.threshold),
                r.runs,
                r.worst
            )
            .unwrap();
        }
        writeln!(out, "{}", if self.passed { "all hard checks pass" } else { "HARD CHECK FAILURES" }).unwrap();
        out
    }
}

fn synth(name: &str, dimension: usize, seed: Vec<f64>, balls: Vec<Ball>, scales: ScaleSpec, k_max: usize) -> RunConfig {
    let mut cfg = RunConfig::from_json(SINGLE_BALL).expect("bundled config parses");
    cfg.synthetic = Some(PatchConfig {
        dimension,
        patches: balls,
        seed,
    });
    cfg.scales = scales;
    cfg.k_max = k_max;
    cfg.output.name = name.to_string();
    cfg
}

fn octaves(octaves: u32, steps_per_octave: usize) -> ScaleSpec {
    ScaleSpec {
        t_start: 0.0,
        t_end: octaves as f64 * LN_2,
        steps: octaves as usize * steps_per_octave,
    }
}

/// `(center, radius)` with `c_j = 0.7·2^{−j}(cos j, sin j)`, `ρ_j = 0.08·2^{−j}`.
pub fn dyadic_family() -> Vec<Ball> {
    (0..5)
        .map(|j| {
            let s = 0.5f64.powi(j);
            Ball {
                center: vec![0.7 * s * (j as f64).cos(), 0.7 * s * (j as f64).sin()],
                radius: 0.08 * s,
            }
        })
        .collect()
}

/// Eight balls `c_j = 2^{−j}e₁`, `ρ_j = 0.05·4^{−j}`.
pub fn shrinking_family() -> Vec<Ball> {
    (1..=8)
        .map(|j| Ball {
            center: vec![0.5f64.powi(j), 0.0],
            radius: 0.05 * 0.25f64.powi(j),
        })
        .collect()
}

/// Every run of the matrix, outputs named after the run.
pub fn verify_matrix() -> Vec<RunConfig> {
    let mut runs = Vec::new();
    runs.push(RunConfig::from_json(SINGLE_BALL).expect("bundled config parses"));
    runs.push(RunConfig::from_json(THREE_BALL).expect("bundled config parses"));
    runs.push(synth(
        "single-ball-3d",
        3,
        vec![0.05, 0.0, 0.02, -0.03, 0.0, -0.02],
        vec![Ball {
            center: vec![0.2, 0.1, 0.0],
            radius: 0.05,
        }],
        octaves(2, 8),
        4,
    ));
    runs.push(synth("dyadic-family", 2, vec![0.0; 3], dyadic_family(), octaves(6, 8), 4));
    let mut sampled = synth("dyadic-family-sampled", 2, vec![0.0; 3], dyadic_family(), octaves(6, 8), 4);
    sampled.integration = crate::dynamics::IntegrationSpec::Sampled {
        samples_per_region: 16384,
        seed: 11,
    };
    runs.push(sampled);
    runs.push(synth("shrinking-balls", 2, vec![0.0; 3], shrinking_family(), octaves(10, 8), 8));
    for (text, name) in [(RADIAL, "radial"), (HYPERPLANE, "hyperplane")] {
        for cells in [128, 256] {
            let mut cfg = RunConfig::from_json(text).expect("bundled config parses");
            cfg.solver.as_mut().expect("solve config").cells = cells;
            cfg.output.name = format!("{name}-{cells}");
            runs.push(cfg);
        }
    }
    runs
}

fn aggregate(anchor: &str, rows: &[(String, CheckRow)]) -> VerifyRow {
    let kind = if rows.iter().any(|(_, r)| r.kind == CheckKind::Hard) {
        CheckKind::Hard
    } else if rows.iter().any(|(_, r)| r.kind == CheckKind::Soft) {
        CheckKind::Soft
    } else {
        CheckKind::NotApplicable
    };
    let relevant: Vec<&(String, CheckRow)> = rows.iter().filter(|(_, r)| r.kind == kind).collect();
    let score = |r: &CheckRow| {
        let s = if r.threshold.abs() > 0.0 {
            r.value / r.threshold.abs()
        } else {
            r.value
        };
        (!r.passed, if s.is_nan() { f64::NEG_INFINITY } else { s })
    };
    let worst = relevant.iter().copied().max_by(|a, b| {
        let (fa, sa) = score(&a.1);
        let (fb, sb) = score(&b.1);
        fa.cmp(&fb).then(sa.total_cmp(&sb))
    });
    match worst {
        Some((run, row)) => VerifyRow {
            anchor: anchor.to_string(),
            kind,
            passed: relevant.iter().all(|(_, r)| r.passed),
            value: row.value,
            threshold: row.threshold,
            runs: rows.len(),
            worst: run.clone(),
            note: row.note.clone(),
        },
        None => VerifyRow {
            anchor: anchor.to_string(),
            kind: CheckKind::NotApplicable,
            passed: true,
            value: f64::NAN,
            threshold: f64::NAN,
            runs: 0,
            worst: String::new(),
            note: "no run reports this anchor".into(),
        },
    }
}

fn single(anchor: &str, kind: CheckKind, value: f64, threshold: f64, note: String) -> VerifyRow {
    let row = CheckRow::new(anchor, kind, value, threshold, note);
    VerifyRow {
        anchor: row.anchor,
        kind,
        passed: row.passed,
        value,
        threshold,
        runs: 1,
        worst: "verify".into(),
        note: row.note,
    }
}

/// Relative deviation of the quadrature Gram matrix from `c_n I`, worst over
/// `n = 2, 3`, together with the gap between `c_n` and its closed form.
pub fn sphere_moment_error() -> Result<(f64, f64)> {
    let mut worst: f64 = 0.0;
    for n in [2, 3] {
        let p = Projector::for_dimension(n)?;
        let c = gram_constant(n)?;
        let nb = p.basis().len();
        for i in 0..nb {
            for j in 0..nb {
                let want = if i == j { c } else { 0.0 };
                worst = worst.max((p.gram()[i * nb + j] - want).abs() / c);
            }
        }
    }
    let closed = (gram_constant(2)? - PI / 8.0).abs().max((gram_constant(3)? - 2.0 * PI / 15.0).abs());
    Ok((worst, closed))
}

/// A degree-4 harmonic polynomial.
fn harmonic4(x: &[f64]) -> f64 {
    match x.len() {
        2 => x[0].powi(4) - 6.0 * x[0] * x[0] * x[1] * x[1] + x[1].powi(4),
        _ => {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            x.iter().map(|v| v.powi(4)).sum::<f64>() - 0.6 * r2 * r2
        }
    }
}

/// Largest `‖Π(v) − B‖_F` over `count` random `B` with `‖B‖_F ≤ 1`, where
/// `v = p₀ + ψ_B` plus constant, linear and degree-4 harmonic terms.
pub fn projection_roundtrip_error(n: usize, count: usize, seed: u64) -> Result<f64> {
    let p = Projector::for_dimension(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper = n * (n + 1) / 2;
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let mut raw: Vec<f64> = (0..upper).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let diag: Vec<usize> = (0..n).map(|i| i * n - i * (i.saturating_sub(1)) / 2).collect();
        let mean = diag.iter().map(|&k| raw[k]).sum::<f64>() / n as f64;
        diag.iter().for_each(|&k| raw[k] -= mean);
        let b = TraceFreeSym::from_upper(n, &raw)?;
        let b = b.scaled(rng.gen_range(0.0..1.0) / b.frobenius_norm().max(1e-300));
        let c0: f64 = rng.gen_range(-1.0..1.0);
        let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c4: f64 = rng.gen_range(-1.0..1.0);
        let got = p.project_fn(|x| {
            crate::harmonics::p0(x)
                + crate::harmonics::psi(&b, x)
                + c0
                + lin.iter().zip(x).map(|(l, v)| l * v).sum::<f64>()
                + c4 * harmonic4(x)
        })?;
        worst = worst.max(got.sub(&b).frobenius_norm());
    }
    Ok(worst)
}

/// Symmetric Hausdorff distance between the masked nodes and `B_ρ` in 2-d.
pub fn mask_hausdorff(grid: &Grid, mask: &[bool], rho: f64) -> f64 {
    let nodes: Vec<Vec<f64>> = grid
        .unknowns()
        .iter()
        .filter(|&&u| mask[u])
        .map(|&u| grid.coords(u))
        .collect();
    if nodes.is_empty() {
        return f64::INFINITY;
    }
    let mut worst: f64 = 0.0;
    for x in &nodes {
        worst = worst.max((x[0].hypot(x[1]) - rho).max(0.0));
    }
    let step = 0.25 * grid.spacing();
    let rings = (rho / step).ceil() as usize;
    for i in 0..=rings {
        let r = rho * i as f64 / rings as f64;
        let count = ((2.0 * PI * r / step).ceil() as usize).max(1);
        for j in 0..count {
            let th = 2.0 * PI * j as f64 / count as f64;
            let (yx, yy) = (r * th.cos(), r * th.sin());
            let d = nodes
                .iter()
                .map(|x| (x[0] - yx).hypot(x[1] - yy))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    worst
}

/// Max-norm error of the discrete radial solution with the exact source.
pub fn radial_poisson_error(cells: usize, rho: f64) -> Result<f64> {
    let grid = Grid::new(2, cells)?;
    let rhs = radial_rhs(&grid, rho);
    let sol = poisson_solve(&grid, &rhs, &BoundaryData::Radial { radius: rho }, 1e-12, 100_000)?;
    Ok(grid
        .unknowns()
        .iter()
        .map(|&u| {
            let x = grid.coords(u);
            (sol.values[u] - radial_solution(2, rho, x[0].hypot(x[1]))).abs()
        })
        .fold(0.0, f64::max))
}

fn io(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

/// Runs the matrix, writes every run's outputs plus `verify.json` and
/// `verify.txt` into `out_dir`.
pub fn verify(out_dir: &Path, options: &VerifyOptions) -> Result<VerifyReport> {
    fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let mut timings = Vec::new();
    let mut reports: Vec<(String, RunReport)> = Vec::new();
    for mut cfg in verify_matrix() {
        cfg.output.dir = PathBuf::from(out_dir);
        if let Some(k) = options.k_max {
            cfg.k_max = k;
        }
        let clock = Instant::now();
        let n = cfg.dimension()?;
        let (field, grid) = build_field(&cfg)?;
        let coefficient = (options.kappa_sign != 1.0).then(|| options.kappa_sign * kappa(n).expect("n >= 2"));
        let report = run_with_settings(&cfg, field, grid.as_ref(), coefficient)?;
        timings.push((cfg.output.name.clone(), clock.elapsed().as_secs_f64()));
        reports.push((cfg.output.name.clone(), report));
    }

    let mut rows = Vec::new();
    for anchor in super::run::RUN_ANCHORS {
        let found: Vec<(String, CheckRow)> = reports
            .iter()
            .flat_map(|(name, rep)| {
                rep.checks
                    .iter()
                    .filter(|c| c.anchor == *anchor)
                    .map(move |c| (name.clone(), c.clone()))
            })
            .collect();
        rows.push(aggregate(anchor, &found));
    }

    let clock = Instant::now();
    let (gram, closed) = sphere_moment_error()?;
    rows.push(single(
        "sphere-moment",
        CheckKind::Hard,
        gram.max(closed),
        1e-10,
        format!("Gram vs c_n I relative {gram:.3e}; c_2, c_3 vs closed forms {closed:.3e}"),
    ));
    let e2 = projection_roundtrip_error(2, 100, 21)?;
    let e3 = projection_roundtrip_error(3, 100, 31)?;
    rows.push(single(
        "projection-roundtrip",
        CheckKind::Hard,
        (e2 / 1e-9).max(e3 / 1e-8),
        1.0,
        format!("error/tolerance; n = 2: {e2:.3e} (tol 1e-9), n = 3: {e3:.3e} (tol 1e-8)"),
    ));
    timings.push(("harmonics".into(), clock.elapsed().as_secs_f64()));

    let lyap = |name: &str| {
        reports
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, r)| r.checks.iter().find(|c| c.anchor == "lyapunov"))
            .map_or(f64::NAN, |c| c.value)
    };
    let mut orders = Vec::new();
    let mut worst_order = f64::INFINITY;
    for name in ["radial", "hyperplane"] {
        let (coarse, fine) = (lyap(&format!("{name}-128")), lyap(&format!("{name}-256")));
        let order = (coarse / fine).log2();
        worst_order = worst_order.min(if order.is_nan() { f64::NEG_INFINITY } else { order });
        orders.push(format!("{name} {coarse:.3e} -> {fine:.3e}, order {order:.3}"));
    }
    rows.push(single(
        "lyapunov-order",
        CheckKind::Hard,
        1.0 - worst_order,
        0.0,
        format!("1 − observed order; {}", orders.join("; ")),
    ));

    let clock = Instant::now();
    let rho = 0.4;
    let sol = crate::solver::fixed_point_solve(&SolverConfig::new(2, 128, BoundaryData::Radial { radius: rho }))?;
    let h = sol.grid().spacing();
    let d = mask_hausdorff(sol.grid(), sol.mask(), rho);
    rows.push(single(
        "solver-hausdorff",
        CheckKind::Hard,
        d / h,
        2.0,
        format!("radial ρ = {rho}, 129² nodes; distance in units of h"),
    ));
    let (c, f) = (radial_poisson_error(128, rho)?, radial_poisson_error(256, rho)?);
    let order = (c / f).log2();
    rows.push(single(
        "solver-order",
        CheckKind::Hard,
        1.5 - order,
        0.0,
        format!("1.5 − observed order; max error {c:.3e} -> {f:.3e}, order {order:.3}"),
    ));
    timings.push(("solver".into(), clock.elapsed().as_secs_f64()));

    let runs: Vec<RunSummary> = reports
        .iter()
        .map(|(name, r)| RunSummary {
            name: name.clone(),
            passed: r.passed,
            csv: r.csv.clone(),
            failures: r.failures().iter().map(|c| c.anchor.clone()).collect(),
            notices: r.notices.clone(),
        })
        .collect();
    let passed = rows.iter().all(|r| r.kind != CheckKind::Hard || r.passed) && runs.iter().all(|r| r.passed);
    let report = VerifyReport {
        rows,
        runs,
        passed,
        timings,
    };
    let json = out_dir.join("verify.json");
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(&json, text).map_err(|e| io(&json, e))?;
    let txt = out_dir.join("verify.txt");
    fs::write(&txt, report.table()).map_err(|e| io(&txt, e))?;
    Ok(report)
}

