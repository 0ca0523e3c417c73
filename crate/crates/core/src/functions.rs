//! Smooth test functions with analytic derivatives, and random states in the
//! generator domain built from them.

use std::f64::consts::PI;

use rand::Rng;

use crate::grid::{self, Grid};
use crate::model::{HWeights, RescaledModel};
use crate::operator::{SampledFunction, StateZ};

/// Real function with two analytic derivatives.
pub trait SmoothFn: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;

    fn sample(&self, grid: Grid) -> SampledFunction<f64> {
        SampledFunction::from_fn(grid, |x| self.value(x))
    }

    /// `||f||_{H^2}` by a fine trapezoid rule.
    fn h2_norm(&self, length: f64) -> f64 {
        sobolev_norm(self, length, 2)
    }

    /// `||f||_{H^1}`.
    fn h1_norm(&self, length: f64) -> f64 {
        sobolev_norm(self, length, 1)
    }
}

fn sobolev_norm<F: SmoothFn + ?Sized>(f: &F, length: f64, order: usize) -> f64 {
    let g = Grid::new(4000, length).expect("positive length");
    let vals: Vec<f64> = g
        .nodes()
        .iter()
        .map(|&x| {
            let mut s = f.value(x).powi(2) + f.d1(x).powi(2);
            if order >= 2 {
                s += f.d2(x).powi(2);
            }
            s
        })
        .collect();
    g.integrate(&vals).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constant(pub f64);

impl SmoothFn for Constant {
    fn value(&self, _: f64) -> f64 {
        self.0
    }
    fn d1(&self, _: f64) -> f64 {
        0.0
    }
    fn d2(&self, _: f64) -> f64 {
        0.0
    }
}

/// `sum_j c_j x^j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Polynomial {
    pub coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }

    fn add_assign(&mut self, other: &Polynomial) {
        if other.coeffs.len() > self.coeffs.len() {
            self.coeffs.resize(other.coeffs.len(), 0.0);
        }
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
    }

    /// Quintic on `[0, length]` with prescribed `(value, first, second)`
    /// derivatives at both ends.
    pub fn quintic_hermite(length: f64, left: [f64; 3], right: [f64; 3]) -> Self {
        const BASIS: [[f64; 6]; 6] = [
            [1.0, 0.0, 0.0, -10.0, 15.0, -6.0],
            [0.0, 1.0, 0.0, -6.0, 8.0, -3.0],
            [0.0, 0.0, 0.5, -1.5, 1.5, -0.5],
            [0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
            [0.0, 0.0, 0.0, -4.0, 7.0, -3.0],
            [0.0, 0.0, 0.0, 0.5, -1.0, 0.5],
        ];
        let l = length;
        let weights = [
            left[0],
            left[1] * l,
            left[2] * l * l,
            right[0],
            right[1] * l,
            right[2] * l * l,
        ];
        let mut coeffs = vec![0.0; 6];
        for (b, w) in BASIS.iter().zip(weights) {
            for j in 0..6 {
                coeffs[j] += w * b[j] / l.powi(j as i32);
            }
        }
        Self { coeffs }
    }
}

impl SmoothFn for Polynomial {
    fn value(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
    fn d1(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (j, c)| acc * x + j as f64 * c)
    }
    fn d2(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(2)
            .rev()
            .fold(0.0, |acc, (j, c)| acc * x + (j * (j - 1)) as f64 * c)
    }
}

/// `amp cos(k x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigTerm {
    pub amp: f64,
    pub k: f64,
    pub phase: f64,
}

/// Finite cosine series with phases.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrigSeries {
    pub terms: Vec<TrigTerm>,
}

impl TrigSeries {
    pub fn new(terms: Vec<TrigTerm>) -> Self {
        Self { terms }
    }

    /// `amp sin(k x)`.
    pub fn sine(amp: f64, k: f64) -> Self {
        Self::new(vec![TrigTerm {
            amp,
            k,
            phase: -PI / 2.0,
        }])
    }

    /// `amp cos(k x)`.
    pub fn cosine(amp: f64, k: f64) -> Self {
        Self::new(vec![TrigTerm { amp, k, phase: 0.0 }])
    }

    /// Modes `k pi / length` for `k = 0..=modes` with amplitudes decaying
    /// like `(1 + k)^-2`.
    pub fn random(rng: &mut impl Rng, length: f64, modes: usize) -> Self {
        let terms = (0..=modes)
            .map(|k| TrigTerm {
                amp: rng.random_range(-1.0..1.0) / ((1 + k) as f64).powi(2),
                k: k as f64 * PI / length,
                phase: rng.random_range(0.0..2.0 * PI),
            })
            .collect();
        Self { terms }
    }
}

impl SmoothFn for TrigSeries {
    fn value(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.amp * (t.k * x + t.phase).cos())
            .sum()
    }
    fn d1(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.k * (t.k * x + t.phase).sin())
            .sum()
    }
    fn d2(&self, x: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| -t.amp * t.k * t.k * (t.k * x + t.phase).cos())
            .sum()
    }
}

/// Trigonometric series plus polynomial correction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SmoothProfile {
    pub trig: TrigSeries,
    pub poly: Polynomial,
}

impl SmoothProfile {
    pub fn from_trig(trig: TrigSeries) -> Self {
        Self {
            trig,
            poly: Polynomial::default(),
        }
    }

    fn jet(&self, x: f64) -> [f64; 3] {
        [self.value(x), self.d1(x), self.d2(x)]
    }

    fn correct(&mut self, length: f64, left: [f64; 3], right: [f64; 3]) {
        self.poly
            .add_assign(&Polynomial::quintic_hermite(length, left, right));
    }
}

impl SmoothFn for SmoothProfile {
    fn value(&self, x: f64) -> f64 {
        self.trig.value(x) + self.poly.value(x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.trig.d1(x) + self.poly.d1(x)
    }
    fn d2(&self, x: f64) -> f64 {
        self.trig.d2(x) + self.poly.d2(x)
    }
}

/// Piecewise cubic Hermite interpolant with difference-quotient slopes.
impl SmoothFn for SampledFunction<f64> {
    fn value(&self, x: f64) -> f64 {
        hermite_eval(self, x).0
    }
    fn d1(&self, x: f64) -> f64 {
        hermite_eval(self, x).1
    }
    fn d2(&self, x: f64) -> f64 {
        hermite_eval(self, x).2
    }
}

fn hermite_eval(f: &SampledFunction<f64>, x: f64) -> (f64, f64, f64) {
    let g = f.grid();
    let h = g.dx();
    let i = ((x / h).floor().max(0.0) as usize).min(g.n() - 1);
    let t = (x - g.node(i)) / h;
    let y = f.values();
    let rows = grid::d1_rows(g);
    let (m0, m1) = (grid::apply(&rows[i], y), grid::apply(&rows[i + 1], y));
    let (y0, y1) = (y[i], y[i + 1]);
    let (t2, t3) = (t * t, t * t * t);
    let v = (2.0 * t3 - 3.0 * t2 + 1.0) * y0
        + (t3 - 2.0 * t2 + t) * h * m0
        + (-2.0 * t3 + 3.0 * t2) * y1
        + (t3 - t2) * h * m1;
    let d = ((6.0 * t2 - 6.0 * t) * y0 + (-6.0 * t2 + 6.0 * t) * y1) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m0
        + (3.0 * t2 - 2.0 * t) * m1;
    let dd = ((12.0 * t - 6.0) * (y0 - y1)) / (h * h)
        + ((6.0 * t - 4.0) * m0 + (6.0 * t - 2.0) * m1) / h;
    (v, d, dd)
}

/// Smooth pair `(w, v)` in the generator domain: both boundary identities
/// `(P w')'(L) = -w'(L)` and `(P w')'(0) = F[w, v]` hold exactly.
///
/// With `neutral`, additionally `v(0) = v'(0) = 0` and `J(w) = 0`, so the
/// continuous dissipation `Re <z, A z>_H` vanishes.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainState {
    pub w: SmoothProfile,
    pub v: SmoothProfile,
}

impl DomainState {
    pub fn random(
        rng: &mut impl Rng,
        m: &RescaledModel,
        hw: &HWeights,
        modes: usize,
        neutral: bool,
    ) -> Self {
        let l = m.l_tilde;
        let mut w = SmoothProfile::from_trig(TrigSeries::random(rng, l, modes));
        let mut v = SmoothProfile::from_trig(TrigSeries::random(rng, l, modes));
        let (p0, pl) = (m.p_top(), m.p_bottom());
        if neutral {
            let [v0, dv0, _] = v.jet(0.0);
            v.correct(l, [-v0, -dv0, 0.0], [0.0; 3]);
            let [w0, dw0, _] = w.jet(0.0);
            let target = hw.alpha2 * w0 / (hw.alpha1 * p0);
            w.correct(l, [0.0, target - dw0, 0.0], [0.0; 3]);
        }
        let [_, dwl, d2wl] = w.jet(l);
        let target_l = -(1.0 + m.tension.deriv(l)) * dwl / pl;
        let [w0, dw0, d2w0] = w.jet(0.0);
        let [t1, t2, t3, t4] = m.theta;
        let f0 = t1 * v.value(0.0) + t2 * v.d1(0.0) + t3 * w0 + t4 * dw0;
        let target_0 = (f0 - m.tension.deriv(0.0) * dw0) / p0;
        w.correct(l, [0.0, 0.0, target_0 - d2w0], [0.0, 0.0, target_l - d2wl]);
        Self { w, v }
    }

    pub fn sample(&self, grid: Grid) -> StateZ<f64> {
        StateZ {
            w: self.w.sample(grid),
            v: self.v.sample(grid),
        }
    }
}
