use rayon::prelude::*;

use super::grid::{Grid, NONE};
use crate::error::{Error, Result};

const CHUNK: usize = 4096;

/// Chunked dot product with a fixed reduction order, so results do not depend
/// on the thread count.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .collect();
    parts.iter().sum()
}

/// `y = (2n·I − adjacency) x` over the unknowns.
fn apply(grid: &Grid, x: &[f64], y: &mut [f64]) {
    let diag = 2.0 * grid.dim() as f64;
    y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
        let base = c * CHUNK;
        for (j, yk) in ys.iter_mut().enumerate() {
            let k = base + j;
            let mut acc = diag * x[k];
            for &nb in grid.compact_neighbors(k) {
                if nb != NONE {
                    acc -= x[nb as usize];
                }
            }
            *yk = acc;
        }
    });
}

pub(crate) struct CgOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients on the unknowns; `x` holds the
/// initial guess on entry.
pub(crate) fn solve(grid: &Grid, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<CgOutcome> {
    let m = b.len();
    let inv_diag = 1.0 / (2.0 * grid.dim() as f64);
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgOutcome {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; m];
    apply(grid, x, &mut r);
    r.par_iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    let mut z: Vec<f64> = r.iter().map(|v| v * inv_diag).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    let mut rel = dot(&r, &r).sqrt() / bnorm;
    let mut history = vec![rel];
    let mut it = 0;
    while rel > tol {
        if it >= max_iter {
            return Err(Error::SolverFailure {
                iterations: it,
                final_residual: rel,
                residual_history: history,
            });
        }
        apply(grid, &p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&ap).for_each(|(ri, api)| *ri -= alpha * api);
        z.par_iter_mut().zip(&r).for_each(|(zi, ri)| *zi = ri * inv_diag);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
        rel = dot(&r, &r).sqrt() / bnorm;
        history.push(rel);
        it += 1;
    }
    Ok(CgOutcome {
        iterations: it,
        relative_residual: rel,
    })
}
