use std::sync::Arc;

use super::grid::Grid;
use super::GridSolution;
use crate::error::{Error, Result};
use crate::fields::{FieldMode, SolutionField};

/// Multilinear interpolant of a nodal grid function, shifted so that
/// `value(0) = 0`.
#[derive(Clone, Debug)]
pub struct GridField {
    grid: Arc<Grid>,
    values: Arc<Vec<f64>>,
    gradients: Arc<Vec<f64>>,
    mask: Arc<Vec<bool>>,
    origin_value: f64,
}

/// Interpolated field of a grid solution.
pub fn field_of(solution: &GridSolution) -> GridField {
    solution.field.clone()
}

impl GridField {
    pub fn new(grid: Grid, values: Vec<f64>, mask: Vec<bool>) -> Result<Self> {
        if values.len() != grid.node_count() || mask.len() != grid.node_count() {
            return Err(Error::InvalidArgument("nodal array length mismatch".into()));
        }
        let n = grid.dim();
        let mut gradients = vec![0.0; n * grid.node_count()];
        for (node, g) in gradients.chunks_exact_mut(n).enumerate() {
            grid.gradient_at(&values, node, g);
        }
        let origin_value = values[grid.origin_node()];
        Ok(GridField {
            grid: Arc::new(grid),
            values: Arc::new(values),
            gradients: Arc::new(gradients),
            mask: Arc::new(mask),
            origin_value,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Lower cell corner and fractional offsets of `x`.
    fn locate(&self, x: &[f64]) -> (usize, [f64; 3]) {
        let g = &*self.grid;
        let m = g.cells();
        let mut base = 0;
        let mut frac = [0.0; 3];
        for d in 0..g.dim() {
            let s = (x[d] + 1.0) / g.spacing();
            let i = (s.floor().max(0.0) as usize).min(m - 1);
            frac[d] = (s - i as f64).clamp(0.0, 1.0);
            base += i * g.stride(d);
        }
        (base, frac)
    }

    fn interpolate(&self, x: &[f64], data: &[f64], width: usize, out: &mut [f64]) {
        let g = &*self.grid;
        let n = g.dim();
        let (base, frac) = self.locate(x);
        out.iter_mut().for_each(|o| *o = 0.0);
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut node = base;
            for (d, f) in frac.iter().enumerate().take(n) {
                if corner >> d & 1 == 1 {
                    w *= f;
                    node += g.stride(d);
                } else {
                    w *= 1.0 - f;
                }
            }
            if w != 0.0 {
                for (c, o) in out.iter_mut().enumerate() {
                    *o += w * data[node * width + c];
                }
            }
        }
    }

    /// Interpolated gradient without domain checks.
    pub(crate) fn raw_gradient(&self, x: &[f64]) -> Vec<f64> {
        let n = self.grid.dim();
        let mut out = vec![0.0; n];
        self.interpolate(x, &self.gradients, n, &mut out);
        out
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.grid.dim() {
            return Err(Error::InvalidArgument(format!(
                "point has {} coordinates, grid dimension is {}",
                x.len(),
                self.grid.dim()
            )));
        }
        if !self.in_domain(x) {
            return Err(Error::Domain(format!("{x:?}")));
        }
        Ok(())
    }
}

impl SolutionField for GridField {
    fn dimension(&self) -> usize {
        self.grid.dim()
    }

    fn mode(&self) -> FieldMode {
        FieldMode::Solution
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= 1.0 + 1e-12)
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let mut v = [0.0];
        self.interpolate(x, &self.values, 1, &mut v);
        Ok(v[0] - self.origin_value)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check(x)?;
        self.interpolate(x, &self.gradients, self.grid.dim(), out);
        Ok(())
    }

    /// Inactive means every corner of the containing cell is masked, so a
    /// masked node set of lower dimension carries no volume.
    fn inactive(&self, x: &[f64]) -> Result<bool> {
        self.check(x)?;
        let g = &*self.grid;
        let (base, _) = self.locate(x);
        Ok((0..(1usize << g.dim())).all(|corner| {
            let node = (0..g.dim())
                .filter(|d| corner >> d & 1 == 1)
                .fold(base, |acc, d| acc + g.stride(d));
            self.mask[node]
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::p0;

    fn p0_field(cells: usize) -> GridField {
        let grid = Grid::new(2, cells).unwrap();
        let values: Vec<f64> = (0..grid.node_count()).map(|i| p0(&grid.coords(i))).collect();
        let mask = vec![false; grid.node_count()];
        GridField::new(grid, values, mask).unwrap()
    }

    #[test]
    fn nodes_are_exact() {
        let f = p0_field(16);
        for node in [0, 17, 100, 288] {
            let x = f.grid().coords(node);
            assert_eq!(f.value(&x).unwrap(), p0(&x));
        }
    }

    #[test]
    fn cell_center_error_bound() {
        let f = p0_field(16);
        let h = f.grid().spacing();
        let mut worst: f64 = 0.0;
        for i in 0..16 {
            for j in 0..16 {
                let x = [-1.0 + (i as f64 + 0.5) * h, -1.0 + (j as f64 + 0.5) * h];
                worst = worst.max((f.value(&x).unwrap() - p0(&x)).abs());
            }
        }
        assert!(worst <= h * h / 4.0);
        assert!(worst > 0.0);
    }

    #[test]
    fn inactive_needs_whole_cell() {
        let grid = Grid::new(2, 8).unwrap();
        let values = vec![0.0; grid.node_count()];
        let mut mask = vec![false; grid.node_count()];
        // a single masked column has no area
        for j in 0..=8 {
            mask[4 * grid.stride(0) + j * grid.stride(1)] = true;
        }
        let f = GridField::new(grid.clone(), values.clone(), mask.clone()).unwrap();
        assert!(!f.inactive(&[0.01, 0.1]).unwrap());
        for j in 0..=8 {
            mask[5 * grid.stride(0) + j * grid.stride(1)] = true;
        }
        let f = GridField::new(grid, values, mask).unwrap();
        assert!(f.inactive(&[0.01, 0.1]).unwrap());
        assert!(!f.inactive(&[-0.01, 0.1]).unwrap());
    }

    #[test]
    fn outside_cube_is_domain_error() {
        let f = p0_field(8);
        assert!(matches!(f.value(&[1.1, 0.0]), Err(Error::Domain(_))));
    }
}
