use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{p0, psi, TraceFreeSym};

pub(crate) const NONE: u32 = u32::MAX;

/// Uniform node grid on `[−1,1]ⁿ` with the unit ball's interior nodes as
/// unknowns and the first exterior layer as Dirichlet band.
#[derive(Clone, Debug)]
pub struct Grid {
    n: usize,
    cells: usize,
    h: f64,
    stride: Vec<usize>,
    node_count: usize,
    unknowns: Vec<usize>,
    compact: Vec<u32>,
    /// `2n` compact neighbor indices per unknown (`NONE` for band nodes),
    /// ordered `(−e₀, +e₀, −e₁, +e₁, …)`.
    neighbors: Vec<u32>,
    band: Vec<usize>,
}

impl Grid {
    /// `cells` per axis; must be even so that the origin is a node.
    pub fn new(n: usize, cells: usize) -> Result<Self> {
        if !(2..=3).contains(&n) {
            return Err(Error::InvalidDimension(n));
        }
        if cells < 4 || cells % 2 != 0 {
            return Err(Error::InvalidArgument(format!("cells per axis must be even and >= 4, got {cells}")));
        }
        let side = cells + 1;
        let node_count = side.pow(n as u32);
        if node_count >= NONE as usize {
            return Err(Error::InvalidArgument(format!("grid with {node_count} nodes is too large")));
        }
        let mut stride = vec![1; n];
        for d in (0..n - 1).rev() {
            stride[d] = stride[d + 1] * side;
        }
        let h = 2.0 / cells as f64;
        let mut g = Grid {
            n,
            cells,
            h,
            stride,
            node_count,
            unknowns: Vec::new(),
            compact: vec![NONE; node_count],
            neighbors: Vec::new(),
            band: Vec::new(),
        };
        let mut x = vec![0.0; n];
        for node in 0..node_count {
            g.coords_into(node, &mut x);
            if x.iter().map(|v| v * v).sum::<f64>() < 1.0 {
                g.compact[node] = g.unknowns.len() as u32;
                g.unknowns.push(node);
            }
        }
        let mut is_band = vec![false; node_count];
        g.neighbors.reserve(2 * n * g.unknowns.len());
        for &node in &g.unknowns {
            for d in 0..n {
                for nb in [node - g.stride[d], node + g.stride[d]] {
                    let c = g.compact[nb];
                    if c == NONE {
                        is_band[nb] = true;
                    }
                    g.neighbors.push(c);
                }
            }
        }
        g.band = (0..node_count).filter(|&i| is_band[i]).collect();
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn side(&self) -> usize {
        self.cells + 1
    }

    pub fn stride(&self, d: usize) -> usize {
        self.stride[d]
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn band(&self) -> &[usize] {
        &self.band
    }

    pub fn is_unknown(&self, node: usize) -> bool {
        self.compact[node] != NONE
    }

    pub(crate) fn compact_neighbors(&self, k: usize) -> &[u32] {
        &self.neighbors[2 * self.n * k..2 * self.n * (k + 1)]
    }

    pub fn index(&self, node: usize, d: usize) -> usize {
        (node / self.stride[d]) % (self.cells + 1)
    }

    pub fn coords_into(&self, node: usize, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            *o = self.index(node, d) as f64 * self.h - 1.0;
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.coords_into(node, &mut x);
        x
    }

    pub fn origin_node(&self) -> usize {
        let half = self.cells / 2;
        self.stride.iter().map(|s| s * half).sum()
    }

    /// Central-difference gradient at `node` (one-sided on cube faces).
    pub fn gradient_at(&self, values: &[f64], node: usize, out: &mut [f64]) {
        for (d, o) in out.iter_mut().enumerate() {
            let i = self.index(node, d);
            let s = self.stride[d];
            *o = if i == 0 {
                (values[node + s] - values[node]) / self.h
            } else if i == self.cells {
                (values[node] - values[node - s]) / self.h
            } else {
                (values[node + s] - values[node - s]) / (2.0 * self.h)
            };
        }
    }

    /// Five/seven-point Laplacian at an unknown node.
    pub fn laplacian_at(&self, values: &[f64], node: usize) -> f64 {
        let mut acc = -2.0 * self.n as f64 * values[node];
        for d in 0..self.n {
            acc += values[node - self.stride[d]] + values[node + self.stride[d]];
        }
        acc / (self.h * self.h)
    }
}

/// User-supplied boundary function.
#[derive(Clone)]
pub struct BoundaryFn(pub Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>);

impl fmt::Debug for BoundaryFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("BoundaryFn(..)")
    }
}

/// Dirichlet data. Closed-form variants are evaluated at band nodes through
/// their natural extension off the sphere; `OnSphere` is evaluated at the
/// radial projection of each band node.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundaryData {
    /// `g = q_B = p₀ + ψ_B`; `seed` is the upper triangle of `B`.
    Quadratic { seed: Vec<f64> },
    /// The radial solution vanishing on `B_radius` (origin-centered).
    Radial { radius: f64 },
    /// `g = x₁²/2`.
    Hyperplane,
    #[serde(skip)]
    Extended(BoundaryFn),
    #[serde(skip)]
    OnSphere(BoundaryFn),
}

impl BoundaryData {
    pub fn validate(&self, n: usize) -> Result<()> {
        match self {
            BoundaryData::Quadratic { seed } => TraceFreeSym::from_upper(n, seed).map(|_| ()),
            BoundaryData::Radial { radius } => {
                if *radius > 0.0 && *radius < 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("radial boundary radius must lie in (0,1), got {radius}")))
                }
            }
            _ => Ok(()),
        }
    }

    /// An evaluator for the (extended) data.
    pub fn evaluator(&self, n: usize) -> Result<Box<dyn Fn(&[f64]) -> f64 + Send + Sync>> {
        self.validate(n)?;
        Ok(match self {
            BoundaryData::Quadratic { seed } => {
                let b = TraceFreeSym::from_upper(n, seed)?;
                Box::new(move |x: &[f64]| p0(x) + psi(&b, x))
            }
            BoundaryData::Radial { radius } => {
                let rho = *radius;
                Box::new(move |x: &[f64]| radial_solution(n, rho, x.iter().map(|v| v * v).sum::<f64>().sqrt()))
            }
            BoundaryData::Hyperplane => Box::new(|x: &[f64]| 0.5 * x[0] * x[0]),
            BoundaryData::Extended(f) => {
                let f = f.0.clone();
                Box::new(move |x: &[f64]| f(x))
            }
            BoundaryData::OnSphere(f) => {
                let f = f.0.clone();
                Box::new(move |x: &[f64]| {
                    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if r == 0.0 {
                        return f(x);
                    }
                    let y: Vec<f64> = x.iter().map(|v| v / r).collect();
                    f(&y)
                })
            }
        })
    }
}

/// Radial solution of `Δu = χ_{|x|>ρ}` with `u = 0` on `B_ρ`.
pub fn radial_solution(n: usize, rho: f64, r: f64) -> f64 {
    if r <= rho {
        return 0.0;
    }
    let nf = n as f64;
    if n == 2 {
        (r * r - rho * rho) / 4.0 - 0.5 * rho * rho * (r / rho).ln()
    } else {
        let k = nf * (nf - 2.0);
        (r * r - rho * rho) / (2.0 * nf) + rho.powi(n as i32) / k * (r.powi(2 - n as i32) - rho.powi(2 - n as i32))
    }
}

/// `u′(r)` for [`radial_solution`].
pub fn radial_derivative(n: usize, rho: f64, r: f64) -> f64 {
    if r <= rho {
        return 0.0;
    }
    r / n as f64 - rho.powi(n as i32) / (n as f64 * r.powi(n as i32 - 1))
}

/// Area of `B_ρ(0) ∩ [x0,x1]×[y0,y1]` in the plane.
fn disc_rectangle_area(rho: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (a, b) = (x0.max(-rho), x1.min(rho));
    if a >= b || y0 >= y1 {
        return 0.0;
    }
    let s = |x: f64| (rho * rho - x * x).max(0.0).sqrt();
    let big_s = |x: f64| 0.5 * (x * s(x) + rho * rho * (x / rho).clamp(-1.0, 1.0).asin());
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < rho {
            let c = s(y);
            cuts.extend([-c, c].into_iter().filter(|c| *c > a && *c < b));
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let mid = s(0.5 * (p + q));
        if y1.min(mid) <= y0.max(-mid) {
            continue;
        }
        let top = if y1 < mid { y1 * (q - p) } else { big_s(q) - big_s(p) };
        let bottom = if y0 > -mid { y0 * (q - p) } else { -(big_s(q) - big_s(p)) };
        area += top - bottom;
    }
    area
}

/// Cell-averaged `1 − χ_{B_ρ}` at every node (cells centered on nodes).
/// Averaging over cells rather than sampling at nodes keeps the discrete
/// source mass free of lattice-point counting noise.
pub fn radial_rhs(grid: &Grid, rho: f64) -> Vec<f64> {
    let h = grid.spacing();
    let n = grid.dim();
    let cell = h.powi(n as i32);
    let rule = crate::quad::GaussRule::new(16);
    (0..grid.node_count())
        .map(|node| {
            let x = grid.coords(node);
            let lo: Vec<f64> = x.iter().map(|v| v - 0.5 * h).collect();
            let hi: Vec<f64> = x.iter().map(|v| v + 0.5 * h).collect();
            let inside = if n == 2 {
                disc_rectangle_area(rho, lo[0], hi[0], lo[1], hi[1])
            } else {
                let (za, zb) = (lo[2].max(-rho), hi[2].min(rho));
                if za >= zb {
                    0.0
                } else {
                    let mut cuts = vec![za, zb];
                    let edges = [lo[0], hi[0], lo[1], hi[1]];
                    let mut radii: Vec<f64> = edges.iter().map(|e| e.abs()).collect();
                    for i in 0..2 {
                        for j in 2..4 {
                            radii.push(edges[i].hypot(edges[j]));
                        }
                    }
                    for c in radii {
                        if c < rho {
                            let z = (rho * rho - c * c).sqrt();
                            cuts.extend([-z, z].into_iter().filter(|z| *z > za && *z < zb));
                        }
                    }
                    cuts.sort_by(f64::total_cmp);
                    cuts.windows(2)
                        .map(|w| {
                            rule.integrate(w[0], w[1], |z| {
                                let r = (rho * rho - z * z).max(0.0).sqrt();
                                disc_rectangle_area(r, lo[0], hi[0], lo[1], hi[1])
                            })
                        })
                        .sum()
                }
            };
            1.0 - inside / cell
        })
        .collect()
}
