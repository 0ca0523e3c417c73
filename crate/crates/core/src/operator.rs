//! Continuous-level objects: the tension profile, sampled functions and
//! states, the boundary functionals, the closed-form inverse of the
//! generator and the two inner products on the state space.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{self, Grid, Row};
use crate::model::{HWeights, RescaledModel};

/// Real or complex field element.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + Mul<f64, Output = Self>
    + AddAssign
    + 'static
{
    fn to_c64(self) -> Complex64;
    fn from_f64(x: f64) -> Self;
    fn abs(self) -> f64;
}

impl Scalar for f64 {
    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }
    fn from_f64(x: f64) -> Self {
        x
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
}

impl Scalar for Complex64 {
    fn to_c64(self) -> Complex64 {
        self
    }
    fn from_f64(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
}

/// Natural cubic spline through tabulated tension values.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedTension {
    xs: Vec<f64>,
    ps: Vec<f64>,
    m: Vec<f64>,
}

impl TabulatedTension {
    fn new(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        let n = xs.len();
        if n < 2 || ps.len() != n {
            return Err(invalid(
                "tension",
                "need at least two (x, P) pairs of equal length",
            ));
        }
        if xs[0] != 0.0 || xs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "tension.x",
                "abscissae must start at 0 and increase strictly",
            ));
        }
        // Tridiagonal solve for the second derivatives, natural end conditions.
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            let mut upper = vec![0.0; k];
            for j in 0..k {
                let i = j + 1;
                let (h0, h1) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
                diag[j] = 2.0 * (h0 + h1);
                upper[j] = h1;
                rhs[j] = 6.0 * ((ps[i + 1] - ps[i]) / h1 - (ps[i] - ps[i - 1]) / h0);
            }
            for j in 1..k {
                let lower = xs[j + 1] - xs[j];
                let f = lower / diag[j - 1];
                diag[j] -= f * upper[j - 1];
                rhs[j] -= f * rhs[j - 1];
            }
            let mut sol = vec![0.0; k];
            for j in (0..k).rev() {
                let next = if j + 1 < k {
                    upper[j] * sol[j + 1]
                } else {
                    0.0
                };
                sol[j] = (rhs[j] - next) / diag[j];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { xs, ps, m })
    }

    fn locate(&self, x: f64) -> usize {
        let n = self.xs.len();
        self.xs.partition_point(|&t| t <= x).clamp(1, n - 1) - 1
    }

    fn eval(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let (a, b) = ((self.xs[i + 1] - x) / h, (x - self.xs[i]) / h);
        a * self.ps[i]
            + b * self.ps[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn deriv(&self, x: f64) -> f64 {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let (a, b) = ((self.xs[i + 1] - x) / h, (x - self.xs[i]) / h);
        (self.ps[i + 1] - self.ps[i]) / h
            + ((1.0 - 3.0 * a * a) * self.m[i] + (3.0 * b * b - 1.0) * self.m[i + 1]) * h / 6.0
    }
}

/// Tension `P` on `[0, length]` in rescaled coordinates.
#[derive(Clone, Debug, PartialEq)]
pub enum TensionProfile {
    /// `P(x) = p0 + slope x`.
    Affine {
        p0: f64,
        slope: f64,
        length: f64,
    },
    Tabulated(TabulatedTension),
}

impl TensionProfile {
    pub fn affine(p0: f64, slope: f64, length: f64) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid("length", "must be finite and > 0"));
        }
        let p = Self::Affine { p0, slope, length };
        p.check_positive()?;
        Ok(p)
    }

    pub fn constant(p: f64, length: f64) -> Result<Self> {
        Self::affine(p, 0.0, length)
    }

    /// Natural cubic spline through `(xs, ps)`; `xs` must run from 0 to the
    /// domain length.
    pub fn tabulated(xs: Vec<f64>, ps: Vec<f64>) -> Result<Self> {
        let p = Self::Tabulated(TabulatedTension::new(xs, ps)?);
        p.check_positive()?;
        Ok(p)
    }

    fn check_positive(&self) -> Result<()> {
        let pmin = self.p_min();
        if !(pmin > 0.0 && pmin.is_finite()) {
            return Err(invalid(
                "tension",
                format!("P must stay positive, min = {pmin}"),
            ));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        match self {
            Self::Affine { length, .. } => *length,
            Self::Tabulated(t) => *t.xs.last().expect("non-empty table"),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Affine { p0, slope, .. } => p0 + slope * x,
            Self::Tabulated(t) => t.eval(x),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            Self::Affine { slope, .. } => *slope,
            Self::Tabulated(t) => t.deriv(x),
        }
    }

    /// Lower bound `P0`; sampled on 2001 points for tabulated profiles.
    pub fn p_min(&self) -> f64 {
        match self {
            Self::Affine { p0, slope, length } => p0.min(p0 + slope * length),
            Self::Tabulated(t) => {
                let l = self.length();
                (0..=2000)
                    .map(|k| t.eval(l * k as f64 / 2000.0))
                    .fold(f64::INFINITY, f64::min)
            }
        }
    }

    pub fn p_max(&self) -> f64 {
        match self {
            Self::Affine { p0, slope, length } => p0.max(p0 + slope * length),
            Self::Tabulated(t) => {
                let l = self.length();
                (0..=2000)
                    .map(|k| t.eval(l * k as f64 / 2000.0))
                    .fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// Function values on a uniform grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction<T: Scalar = f64> {
    grid: Grid,
    values: Vec<T>,
}

impl<T: Scalar> SampledFunction<T> {
    pub fn new(grid: Grid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl FnMut(f64) -> T) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![T::default(); grid.len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn first(&self) -> T {
        self.values[0]
    }

    pub fn last(&self) -> T {
        self.values[self.grid.n()]
    }

    /// Derivative of order 0, 1 or 2 by second-order differences.
    pub fn derivative(&self, order: usize) -> Result<Vec<T>> {
        match order {
            0 => Ok(self.values.clone()),
            1 => Ok(grid::apply_all(&grid::d1_rows(&self.grid), &self.values)),
            2 => Ok(grid::apply_all(&grid::d2_rows(&self.grid), &self.values)),
            _ => Err(invalid(
                "order",
                format!("supported orders are 0..=2, got {order}"),
            )),
        }
    }
}

/// State `z = (w, v, xi, psi)` with `xi = v(L)` and `psi = v(0)` read off
/// the samples of `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateZ<T: Scalar = f64> {
    pub w: SampledFunction<T>,
    pub v: SampledFunction<T>,
}

impl<T: Scalar> StateZ<T> {
    pub fn new(w: SampledFunction<T>, v: SampledFunction<T>) -> Result<Self> {
        if w.grid != v.grid {
            return Err(Error::GridMismatch(
                "w and v live on different grids".into(),
            ));
        }
        Ok(Self { w, v })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            w: SampledFunction::zeros(grid),
            v: SampledFunction::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.w.grid
    }

    pub fn xi(&self) -> T {
        self.v.last()
    }

    pub fn psi(&self) -> T {
        self.v.first()
    }

    /// Layout `(w_0..w_N, v_0..v_N)`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut out = self.w.values.clone();
        out.extend_from_slice(&self.v.values);
        out
    }

    pub fn from_vec(grid: Grid, z: &[T]) -> Result<Self> {
        let m = grid.len();
        if z.len() != 2 * m {
            return Err(Error::GridMismatch(format!(
                "state vector of length {} for {} nodes",
                z.len(),
                m
            )));
        }
        Ok(Self {
            w: SampledFunction::new(grid, z[..m].to_vec())?,
            v: SampledFunction::new(grid, z[m..].to_vec())?,
        })
    }
}

/// Pointwise data entering the inner products: values, derivatives and the
/// flux derivative `(P w')'`, all sampled on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Traces<T: Scalar> {
    pub grid: Grid,
    pub p: Vec<f64>,
    pub w: Vec<T>,
    pub dw: Vec<T>,
    pub d2w: Vec<T>,
    pub flux: Vec<T>,
    pub v: Vec<T>,
    pub dv: Vec<T>,
    pub xi: T,
    pub psi: T,
}

impl<T: Scalar> Traces<T> {
    /// Traces of a sampled state by the grid difference operators.
    pub fn from_state(z: &StateZ<T>, tension: &TensionProfile) -> Self {
        let grid = *z.grid();
        let d1 = grid::d1_rows(&grid);
        let w = z.w.values.clone();
        let v = z.v.values.clone();
        Self {
            grid,
            p: grid.nodes().into_iter().map(|x| tension.eval(x)).collect(),
            dw: grid::apply_all(&d1, &w),
            d2w: grid::apply_all(&grid::d2_rows(&grid), &w),
            flux: grid::apply_all(&grid::flux_rows(&grid, tension), &w),
            dv: grid::apply_all(&d1, &v),
            xi: z.xi(),
            psi: z.psi(),
            w,
            v,
        }
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "inner product of states on different grids".into(),
            ));
        }
        Ok(())
    }
}

fn dot<T: Scalar>(grid: &Grid, a: &[T], b: &[T], weight: impl Fn(usize) -> f64) -> Complex64 {
    let q = grid.trapezoid_weights();
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| x.to_c64() * y.to_c64().conj() * (q[i] * weight(i)))
        .sum()
}

/// `||w||^2_{H^2}` and `||v||^2_{H^1}` parts of the natural product.
pub fn sobolev_inner<T: Scalar>(t1: &Traces<T>, t2: &Traces<T>) -> Result<(Complex64, Complex64)> {
    t1.check(t2)?;
    let g = &t1.grid;
    let one = |_| 1.0;
    let hw =
        dot(g, &t1.w, &t2.w, one) + dot(g, &t1.dw, &t2.dw, one) + dot(g, &t1.d2w, &t2.d2w, one);
    let hv = dot(g, &t1.v, &t2.v, one) + dot(g, &t1.dv, &t2.dv, one);
    Ok((hw, hv))
}

/// Natural product from traces.
pub fn natural_inner_traces<T: Scalar>(t1: &Traces<T>, t2: &Traces<T>) -> Result<Complex64> {
    let (hw, hv) = sobolev_inner(t1, t2)?;
    Ok(hw + hv + t1.xi.to_c64() * t2.xi.to_c64().conj() + t1.psi.to_c64() * t2.psi.to_c64().conj())
}

/// Energy product from traces.
pub fn weighted_inner_traces<T: Scalar>(
    t1: &Traces<T>,
    t2: &Traces<T>,
    hw: &HWeights,
) -> Result<Complex64> {
    t1.check(t2)?;
    let g = &t1.grid;
    let n = g.n();
    let HWeights {
        alpha1: a1,
        alpha2: a2,
        gamma,
    } = *hw;
    let p = &t1.p;
    let (p0, pl) = (p[0], p[n]);
    let c = |x: T| x.to_c64();
    let cc = |x: T| x.to_c64().conj();
    let mut s = dot(g, &t1.flux, &t2.flux, |_| a1 * gamma) + dot(g, &t1.dw, &t2.dw, |i| a1 * p[i]);
    s += c(t1.dw[n]) * cc(t2.dw[n]) * (a1 * gamma * pl);
    s += c(t1.w[0]) * cc(t2.w[0]) * a2;
    s += dot(g, &t1.dv, &t2.dv, |i| a1 * gamma * p[i]) + dot(g, &t1.v, &t2.v, |_| a1);
    s += c(t1.xi) * cc(t2.xi) * (a1 * pl);
    s += c(t1.psi) * cc(t2.psi) * (a2 * gamma);
    let b1 = c(t1.psi) + c(boundary_functional_jb(t1.w[0], t1.dw[0], a1, a2, p0));
    let b2 = c(t2.psi) + c(boundary_functional_jb(t2.w[0], t2.dw[0], a1, a2, p0));
    s += b1 * b2.conj() * 0.5;
    Ok(s)
}

fn check_model_grid(grid: &Grid, m: &RescaledModel) -> Result<()> {
    if (grid.length() - m.l_tilde).abs() > 1e-12 * m.l_tilde {
        return Err(Error::GridMismatch(format!(
            "grid length {} differs from the model length {}",
            grid.length(),
            m.l_tilde
        )));
    }
    Ok(())
}

/// Natural inner product: `<w1,w2>_{H^2} + <v1,v2>_{H^1} + xi1 conj(xi2) + psi1 conj(psi2)`.
pub fn natural_inner<T: Scalar>(z1: &StateZ<T>, z2: &StateZ<T>) -> Result<Complex64> {
    if z1.grid() != z2.grid() {
        return Err(Error::GridMismatch(
            "inner product of states on different grids".into(),
        ));
    }
    // The natural product does not involve P; a unit profile keeps traces cheap.
    let unit = TensionProfile::constant(1.0, z1.grid().length())?;
    natural_inner_traces(
        &Traces::from_state(z1, &unit),
        &Traces::from_state(z2, &unit),
    )
}

/// Energy inner product with weights `(alpha1, alpha2, gamma)`.
pub fn weighted_inner<T: Scalar>(
    z1: &StateZ<T>,
    z2: &StateZ<T>,
    m: &RescaledModel,
    hw: &HWeights,
) -> Result<Complex64> {
    check_model_grid(z1.grid(), m)?;
    if !(hw.alpha1 > 0.0 && hw.alpha2 > 0.0 && hw.gamma > 0.0) {
        return Err(invalid(
            "weights",
            "alpha1, alpha2 and gamma must be positive",
        ));
    }
    weighted_inner_traces(
        &Traces::from_state(z1, &m.tension),
        &Traces::from_state(z2, &m.tension),
        hw,
    )
}

/// `J(w) = -2 alpha1 P(0) w'(0) + 2 alpha2 w(0)`.
pub fn boundary_functional_jb<T: Scalar>(w0: T, dw0: T, alpha1: f64, alpha2: f64, p0: f64) -> T {
    dw0 * (-2.0 * alpha1 * p0) + w0 * (2.0 * alpha2)
}

/// `F[w, v] = th1 v(0) + th2 v'(0) + th3 w(0) + th4 w'(0)`.
pub fn control_functional_f<T: Scalar>(z: &StateZ<T>, theta: &[f64; 4]) -> T {
    let row0 = &grid::d1_rows(z.grid())[0];
    let dv0 = grid::apply(row0, z.v.values());
    let dw0 = grid::apply(row0, z.w.values());
    z.psi() * theta[0] + dv0 * theta[1] + z.w.first() * theta[2] + dw0 * theta[3]
}

/// Closed-form inverse of the generator for data `(f, g, g(L), g(0))`.
pub fn invert_a<T: Scalar>(
    f: &SampledFunction<T>,
    g: &SampledFunction<T>,
    m: &RescaledModel,
) -> Result<StateZ<T>> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch(
            "f and g live on different grids".into(),
        ));
    }
    let grid = f.grid;
    check_model_grid(&grid, m)?;
    let [t1, t2, t3, t4] = m.theta;
    if t3 == 0.0 {
        return Err(Error::Singular(
            "theta3 = 0: the generator is not injective".into(),
        ));
    }
    let n = grid.n();
    let gi = grid.cumulative(&g.values);
    let pl = m.p_bottom();
    let dw: Vec<T> = grid
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| (g.values[n] * (-pl) + gi[i] - gi[n]) * (1.0 / m.tension.eval(x)))
        .collect();
    let df0 = grid::apply(&grid::d1_rows(&grid)[0], &f.values);
    let w0 = (g.values[0] - f.values[0] * t1 - df0 * t2 - dw[0] * t4) * (1.0 / t3);
    let w = grid.cumulative(&dw).into_iter().map(|s| s + w0).collect();
    StateZ::new(SampledFunction::new(grid, w)?, f.clone())
}

/// Quadratic form term `weight * |row . z|^2` over the layout `(w, v)`.
pub(crate) struct FormTerm {
    pub weight: f64,
    pub row: Row,
}

fn shifted(row: &Row, offset: usize) -> Row {
    row.iter().map(|&(j, c)| (j + offset, c)).collect()
}

/// Terms whose sum is the natural Gram matrix.
pub(crate) fn natural_terms(grid: &Grid) -> Vec<FormTerm> {
    let m = grid.len();
    let q = grid.trapezoid_weights();
    let d1 = grid::d1_rows(grid);
    let d2 = grid::d2_rows(grid);
    let mut terms = Vec::with_capacity(5 * m + 2);
    for i in 0..m {
        terms.push(FormTerm {
            weight: q[i],
            row: vec![(i, 1.0)],
        });
        terms.push(FormTerm {
            weight: q[i],
            row: d1[i].clone(),
        });
        terms.push(FormTerm {
            weight: q[i],
            row: d2[i].clone(),
        });
        terms.push(FormTerm {
            weight: q[i],
            row: vec![(m + i, 1.0)],
        });
        terms.push(FormTerm {
            weight: q[i],
            row: shifted(&d1[i], m),
        });
    }
    terms.push(FormTerm {
        weight: 1.0,
        row: vec![(2 * m - 1, 1.0)],
    });
    terms.push(FormTerm {
        weight: 1.0,
        row: vec![(m, 1.0)],
    });
    terms
}

/// Terms whose sum is the energy Gram matrix.
pub(crate) fn weighted_terms(
    grid: &Grid,
    tension: &TensionProfile,
    hw: &HWeights,
) -> Vec<FormTerm> {
    let m = grid.len();
    let n = grid.n();
    let q = grid.trapezoid_weights();
    let d1 = grid::d1_rows(grid);
    let flux = grid::flux_rows(grid, tension);
    let p: Vec<f64> = grid.nodes().into_iter().map(|x| tension.eval(x)).collect();
    let HWeights {
        alpha1: a1,
        alpha2: a2,
        gamma,
    } = *hw;
    let mut terms = Vec::with_capacity(4 * m + 5);
    for i in 0..m {
        terms.push(FormTerm {
            weight: a1 * gamma * q[i],
            row: flux[i].clone(),
        });
        terms.push(FormTerm {
            weight: a1 * p[i] * q[i],
            row: d1[i].clone(),
        });
        terms.push(FormTerm {
            weight: a1 * gamma * p[i] * q[i],
            row: shifted(&d1[i], m),
        });
        terms.push(FormTerm {
            weight: a1 * q[i],
            row: vec![(m + i, 1.0)],
        });
    }
    terms.push(FormTerm {
        weight: a1 * gamma * p[n],
        row: d1[n].clone(),
    });
    terms.push(FormTerm {
        weight: a2,
        row: vec![(0, 1.0)],
    });
    terms.push(FormTerm {
        weight: a1 * p[n],
        row: vec![(m + n, 1.0)],
    });
    terms.push(FormTerm {
        weight: a2 * gamma,
        row: vec![(m, 1.0)],
    });
    let mut rank_one: Row = d1[0]
        .iter()
        .map(|&(j, c)| (j, -2.0 * a1 * p[0] * c))
        .collect();
    rank_one[0].1 += 2.0 * a2;
    rank_one.push((m, 1.0));
    terms.push(FormTerm {
        weight: 0.5,
        row: rank_one,
    });
    terms
}
