//! Uniform grids and the second-order difference stencils shared by the
//! quadrature, the generator assembly and the Gram matrices.

use crate::error::{invalid, Result};
use crate::operator::{Scalar, TensionProfile};

/// `N + 1` uniform nodes on `[0, length]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
    length: f64,
}

impl Grid {
    /// Needs `n >= 3` so that the one-sided stencils fit.
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 3 {
            return Err(invalid(
                "grid.N",
                format!("need at least 3 intervals, got {n}"),
            ));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(
                "length",
                format!("must be finite and > 0, got {length}"),
            ));
        }
        Ok(Self { n, length })
    }

    /// Number of intervals.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.length
        } else {
            i as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }

    /// Composite trapezoid weights.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let dx = self.dx();
        let mut w = vec![dx; self.n + 1];
        w[0] = 0.5 * dx;
        w[self.n] = 0.5 * dx;
        w
    }

    pub fn integrate<T: Scalar>(&self, values: &[T]) -> T {
        let w = self.trapezoid_weights();
        values
            .iter()
            .zip(&w)
            .fold(T::default(), |acc, (v, wi)| acc + *v * *wi)
    }

    /// Running trapezoid integral from node 0.
    pub fn cumulative<T: Scalar>(&self, values: &[T]) -> Vec<T> {
        let half = 0.5 * self.dx();
        let mut out = Vec::with_capacity(values.len());
        let mut acc = T::default();
        out.push(acc);
        for k in 1..values.len() {
            acc += (values[k - 1] + values[k]) * half;
            out.push(acc);
        }
        out
    }
}

/// Sparse row: `(column, coefficient)` pairs.
pub(crate) type Row = Vec<(usize, f64)>;

pub(crate) fn apply<T: Scalar>(row: &[(usize, f64)], x: &[T]) -> T {
    row.iter().fold(T::default(), |acc, &(j, c)| acc + x[j] * c)
}

pub(crate) fn apply_all<T: Scalar>(rows: &[Row], x: &[T]) -> Vec<T> {
    rows.iter().map(|r| apply(r, x)).collect()
}

/// First derivative: central inside, one-sided second order at the ends.
pub(crate) fn d1_rows(grid: &Grid) -> Vec<Row> {
    let n = grid.n();
    let h = 1.0 / (2.0 * grid.dx());
    (0..=n)
        .map(|i| {
            if i == 0 {
                vec![(0, -3.0 * h), (1, 4.0 * h), (2, -h)]
            } else if i == n {
                vec![(n - 2, h), (n - 1, -4.0 * h), (n, 3.0 * h)]
            } else {
                vec![(i - 1, -h), (i + 1, h)]
            }
        })
        .collect()
}

/// Second derivative: three-point inside, four-point one-sided at the ends.
pub(crate) fn d2_rows(grid: &Grid) -> Vec<Row> {
    let n = grid.n();
    let h = 1.0 / (grid.dx() * grid.dx());
    (0..=n)
        .map(|i| {
            if i == 0 {
                vec![(0, 2.0 * h), (1, -5.0 * h), (2, 4.0 * h), (3, -h)]
            } else if i == n {
                vec![
                    (n - 3, -h),
                    (n - 2, 4.0 * h),
                    (n - 1, -5.0 * h),
                    (n, 2.0 * h),
                ]
            } else {
                vec![(i - 1, h), (i, -2.0 * h), (i + 1, h)]
            }
        })
        .collect()
}

/// `(P w')'`: half-node flux form inside, `P' D1 + P D2` at the ends.
pub(crate) fn flux_rows(grid: &Grid, tension: &TensionProfile) -> Vec<Row> {
    let n = grid.n();
    let dx = grid.dx();
    let h = 1.0 / (dx * dx);
    let d1 = d1_rows(grid);
    let d2 = d2_rows(grid);
    let end = |i: usize| -> Row {
        let x = grid.node(i);
        let (p, dp) = (tension.eval(x), tension.deriv(x));
        let mut row: Row = d2[i].iter().map(|&(j, c)| (j, p * c)).collect();
        for &(j, c) in &d1[i] {
            match row.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += dp * c,
                None => row.push((j, dp * c)),
            }
        }
        row
    };
    (0..=n)
        .map(|i| {
            if i == 0 || i == n {
                end(i)
            } else {
                let x = grid.node(i);
                let pm = tension.eval(x - 0.5 * dx);
                let pp = tension.eval(x + 0.5 * dx);
                vec![(i - 1, pm * h), (i, -(pm + pp) * h), (i + 1, pp * h)]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = Grid::new(10, 2.0).unwrap();
        let x = g.nodes();
        let f: Vec<f64> = x.iter().map(|t| 3.0 * t * t - t + 1.0).collect();
        let d1 = apply_all(&d1_rows(&g), &f);
        let d2 = apply_all(&d2_rows(&g), &f);
        for (i, t) in x.iter().enumerate() {
            assert!((d1[i] - (6.0 * t - 1.0)).abs() < 1e-11);
            assert!((d2[i] - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_tension_flux_is_standard_stencil() {
        let g = Grid::new(8, 1.0).unwrap();
        let p = TensionProfile::constant(1.0, 1.0).unwrap();
        let rows = flux_rows(&g, &p);
        let h = 1.0 / (g.dx() * g.dx());
        assert_eq!(rows[3], vec![(2, h), (3, -2.0 * h), (4, h)]);
    }

    #[test]
    fn trapezoid_on_quadratic() {
        let g = Grid::new(1, 1.0).err();
        assert!(g.is_some());
        let g = Grid::new(4, 1.0).unwrap();
        let f: Vec<f64> = g.nodes().iter().map(|x| x * x + 1.0).collect();
        // Trapezoid error for x^2 is h^2/6 over the unit interval.
        assert!((g.integrate(&f) - (4.0 / 3.0 + 1.0 / 96.0)).abs() < 1e-14);
        let c = g.cumulative(&f);
        assert!((c[4] - g.integrate(&f)).abs() < 1e-14);
    }
}
