//! Finite-difference active-set solver for `Δu = χ_{|∇u|>0}` in the unit
//! ball with Dirichlet data.

mod cg;
mod field;
mod grid;
mod snapshot;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use field::{field_of, GridField};
pub use grid::{radial_derivative, radial_rhs, radial_solution, BoundaryData, BoundaryFn, Grid};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

fn default_threshold() -> f64 {
    0.75
}
fn default_outer() -> usize {
    200
}
fn default_tolerance() -> f64 {
    1e-10
}
fn default_linear_iterations() -> usize {
    100_000
}
fn default_damping() -> f64 {
    0.3
}
fn default_entry() -> f64 {
    0.25
}

/// Parameters of [`fixed_point_solve`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub dimension: usize,
    /// Cells per axis of the `[−1,1]ⁿ` grid (even).
    pub cells: usize,
    pub boundary: BoundaryData,
    /// `c_δ` in the inactivity threshold `δ_h = c_δ·h`.
    #[serde(default = "default_threshold")]
    pub threshold_factor: f64,
    #[serde(default = "default_outer")]
    pub max_outer_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub linear_solver_tolerance: f64,
    #[serde(default = "default_linear_iterations")]
    pub max_linear_iterations: usize,
    /// Fraction of the pending mask flips applied per outer iteration.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// An active node joins the mask only once `|∇_h u| ≤ entry_factor·δ_h`;
    /// it leaves as soon as `|∇_h u| > δ_h`.
    #[serde(default = "default_entry")]
    pub entry_factor: f64,
    /// Lifts the 128-cell cap for `n = 3`.
    #[serde(default)]
    pub allow_large: bool,
}

impl SolverConfig {
    pub fn new(dimension: usize, cells: usize, boundary: BoundaryData) -> Self {
        SolverConfig {
            dimension,
            cells,
            boundary,
            threshold_factor: default_threshold(),
            max_outer_iterations: default_outer(),
            linear_solver_tolerance: default_tolerance(),
            max_linear_iterations: default_linear_iterations(),
            damping: default_damping(),
            entry_factor: default_entry(),
            allow_large: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dimension) {
            return Err(Error::config(format!(
                "grid solver supports dimension 2 or 3, got {}",
                self.dimension
            )));
        }
        if self.dimension == 3 && self.cells > 128 && !self.allow_large {
            return Err(Error::config(format!(
                "{} cells per axis exceeds the 3-d cap of 128 (set allow_large to override)",
                self.cells
            )));
        }
        if !(self.threshold_factor > 0.0) || !self.threshold_factor.is_finite() {
            return Err(Error::config("threshold_factor must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config("damping must lie in (0, 1]"));
        }
        if !(self.entry_factor > 0.0 && self.entry_factor <= 1.0) {
            return Err(Error::config("entry_factor must lie in (0, 1]"));
        }
        if !(self.linear_solver_tolerance > 0.0) {
            return Err(Error::config("linear_solver_tolerance must be positive"));
        }
        if self.max_linear_iterations == 0 {
            return Err(Error::config("max_linear_iterations must be positive"));
        }
        self.boundary.validate(self.dimension)
    }
}

/// Output of [`poisson_solve`].
#[derive(Clone, Debug)]
pub struct PoissonSolution {
    /// Nodal values on the whole cube; non-unknown nodes carry the boundary
    /// data (extended).
    pub values: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Boundary data evaluated at every node.
pub fn boundary_values(grid: &Grid, boundary: &BoundaryData) -> Result<Vec<f64>> {
    let g = boundary.evaluator(grid.dim())?;
    let values: Vec<f64> = (0..grid.node_count())
        .into_par_iter()
        .map(|node| g(&grid.coords(node)))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("boundary data produced non-finite values".into()));
    }
    Ok(values)
}

/// Solves `Δ_h u = rhs` at the unknowns with the boundary data imposed on
/// the exterior band.
pub fn poisson_solve(
    grid: &Grid,
    rhs: &[f64],
    boundary: &BoundaryData,
    tolerance: f64,
    max_iterations: usize,
) -> Result<PoissonSolution> {
    let mut values = boundary_values(grid, boundary)?;
    let out = poisson_solve_into(grid, rhs, &mut values, tolerance, max_iterations)?;
    Ok(PoissonSolution {
        values,
        iterations: out.iterations,
        relative_residual: out.relative_residual,
    })
}

/// `values` holds Dirichlet data off the unknowns and the initial guess on
/// them; the unknowns are overwritten with the solution.
fn poisson_solve_into(
    grid: &Grid,
    rhs: &[f64],
    values: &mut [f64],
    tolerance: f64,
    max_iterations: usize,
) -> Result<cg::CgOutcome> {
    if rhs.len() != grid.node_count() {
        return Err(Error::InvalidArgument(format!(
            "rhs has {} entries, grid has {} nodes",
            rhs.len(),
            grid.node_count()
        )));
    }
    let unknowns = grid.unknowns();
    if unknowns.iter().any(|&u| !rhs[u].is_finite()) {
        return Err(Error::Data("non-finite right-hand side".into()));
    }
    let h2 = grid.spacing() * grid.spacing();
    let n = grid.dim();
    let b: Vec<f64> = unknowns
        .par_iter()
        .map(|&node| {
            let mut acc = -h2 * rhs[node];
            for d in 0..n {
                for nb in [node - grid.stride(d), node + grid.stride(d)] {
                    if !grid.is_unknown(nb) {
                        acc += values[nb];
                    }
                }
            }
            acc
        })
        .collect();
    let mut x: Vec<f64> = unknowns.iter().map(|&u| values[u]).collect();
    let out = cg::solve(grid, &b, &mut x, tolerance, max_iterations)?;
    for (&node, v) in unknowns.iter().zip(&x) {
        values[node] = *v;
    }
    Ok(out)
}

/// Convergence and residual diagnostics of a fixed-point run.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SolverMetrics {
    pub converged: bool,
    pub outer_iterations: usize,
    pub linear_iterations: usize,
    pub final_relative_residual: f64,
    /// `δ_h = c_δ·h`.
    pub threshold: f64,
    pub inactive_nodes: usize,
    /// Nodes whose mask state disagrees with the extraction rule.
    pub pending_flips: usize,
    pub pending_history: Vec<usize>,
    pub max_gradient_on_mask: f64,
    /// `max |Δ_h u − (1 − mask)|` over the unknowns.
    pub max_equation_residual: f64,
    /// `|∇u(0)|` of the interpolated field; genuine free-boundary points
    /// have it near zero, and it is not subtracted.
    pub gradient_at_origin: f64,
}

/// Converged (or best) iterate of [`fixed_point_solve`].
#[derive(Clone, Debug)]
pub struct GridSolution {
    pub(crate) field: GridField,
    pub config: SolverConfig,
    pub metrics: SolverMetrics,
}

impl GridSolution {
    pub fn grid(&self) -> &Grid {
        self.field.grid()
    }

    pub fn values(&self) -> &[f64] {
        self.field.values()
    }

    pub fn mask(&self) -> &[bool] {
        self.field.mask()
    }

    pub fn field(&self) -> &GridField {
        &self.field
    }

    pub fn converged(&self) -> bool {
        self.metrics.converged
    }
}

fn gradient_norms(grid: &Grid, values: &[f64]) -> Vec<f64> {
    let n = grid.dim();
    grid.unknowns()
        .par_iter()
        .map(|&node| {
            let mut g = [0.0; 3];
            grid.gradient_at(values, node, &mut g[..n]);
            g[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect()
}

/// Nodes whose mask state should flip, with the size of the violation.
fn pending_flips(norms: &[f64], mask: &[bool], delta: f64, entry: f64) -> Vec<(usize, f64)> {
    norms
        .iter()
        .zip(mask)
        .enumerate()
        .filter_map(|(k, (&g, &m))| {
            if m && g > delta {
                Some((k, g - delta))
            } else if !m && g <= entry {
                Some((k, entry - g))
            } else {
                None
            }
        })
        .collect()
}

/// Fraction of each node's dual cell `x + [−h/2, h/2]ⁿ` covered by inactive
/// cells, a cell being inactive when all its corners are masked.
pub fn inactive_fraction(grid: &Grid, mask: &[bool]) -> Vec<f64> {
    let n = grid.dim();
    let m = grid.cells();
    let corners = 1usize << n;
    let cell_count = m.pow(n as u32);
    let cell_base = |c: usize| {
        let (mut rem, mut base) = (c, 0);
        for d in (0..n).rev() {
            base += (rem % m) * grid.stride(d);
            rem /= m;
        }
        base
    };
    let offset = |corner: usize| (0..n).filter(|d| corner >> d & 1 == 1).map(|d| grid.stride(d)).sum::<usize>();
    let offsets: Vec<usize> = (0..corners).map(offset).collect();
    let mut frac = vec![0.0; grid.node_count()];
    for c in 0..cell_count {
        let base = cell_base(c);
        if offsets.iter().all(|o| mask[base + o]) {
            for o in &offsets {
                frac[base + o] += 1.0 / corners as f64;
            }
        }
    }
    frac
}

/// Alternates Poisson solves with rhs `1 − χ̄` (see [`inactive_fraction`])
/// and mask extraction from
/// `|∇_h u|` against `δ_h` (with a lower entry threshold), flipping at most a
/// `damping` fraction of the pending nodes per sweep, largest violation
/// first. The initial mask is extracted from the boundary data's extension.
pub fn fixed_point_solve(config: &SolverConfig) -> Result<GridSolution> {
    config.validate()?;
    let grid = Grid::new(config.dimension, config.cells)?;
    let delta = config.threshold_factor * grid.spacing();
    let mut values = boundary_values(&grid, &config.boundary)?;
    let unknowns = grid.unknowns().to_vec();
    let entry = config.entry_factor * delta;
    let mut mask: Vec<bool> = gradient_norms(&grid, &values).iter().map(|g| *g <= delta).collect();

    let mut full_mask = vec![false; grid.node_count()];
    let mut linear_iterations = 0;
    let mut history = Vec::new();
    let mut best: Option<(usize, Vec<f64>, Vec<bool>, f64)> = None;
    let mut converged = false;
    let mut last_residual = 0.0;
    let mut outer = 0;

    while outer < config.max_outer_iterations {
        outer += 1;
        for (k, &node) in unknowns.iter().enumerate() {
            full_mask[node] = mask[k];
        }
        let rhs: Vec<f64> = inactive_fraction(&grid, &full_mask).iter().map(|f| 1.0 - f).collect();
        let out = poisson_solve_into(
            &grid,
            &rhs,
            &mut values,
            config.linear_solver_tolerance,
            config.max_linear_iterations,
        )?;
        linear_iterations += out.iterations;
        last_residual = out.relative_residual;

        let norms = gradient_norms(&grid, &values);
        let mut pending = pending_flips(&norms, &mask, delta, entry);
        history.push(pending.len());
        if best.as_ref().map_or(true, |b| pending.len() < b.0) {
            best = Some((pending.len(), values.clone(), mask.clone(), last_residual));
        }
        if pending.is_empty() {
            converged = true;
            break;
        }
        pending.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let take = ((config.damping * pending.len() as f64).ceil() as usize).max(1);
        for &(k, _) in pending.iter().take(take) {
            mask[k] = !mask[k];
        }
    }

    if !converged {
        if let Some((_, v, m, r)) = best.take() {
            values = v;
            mask = m;
            last_residual = r;
        }
    }

    for (k, &node) in unknowns.iter().enumerate() {
        full_mask[node] = mask[k];
    }
    let frac = inactive_fraction(&grid, &full_mask);
    let norms = gradient_norms(&grid, &values);
    let max_gradient_on_mask = norms
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(g, _)| *g)
        .fold(0.0, f64::max);
    let pending_flips = pending_flips(&norms, &mask, delta, entry).len();
    let max_equation_residual = unknowns
        .iter()
        .map(|&node| (grid.laplacian_at(&values, node) - (1.0 - frac[node])).abs())
        .fold(0.0, f64::max);
    let inactive_nodes = mask.iter().filter(|m| **m).count();

    let field = GridField::new(grid, values, full_mask)?;
    let gradient_at_origin = {
        let g = field.raw_gradient(&vec![0.0; config.dimension]);
        g.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    Ok(GridSolution {
        field,
        config: config.clone(),
        metrics: SolverMetrics {
            converged,
            outer_iterations: outer,
            linear_iterations,
            final_relative_residual: last_residual,
            threshold: delta,
            inactive_nodes,
            pending_flips,
            pending_history: history,
            max_gradient_on_mask,
            max_equation_residual,
            gradient_at_origin,
        },
    })
}
