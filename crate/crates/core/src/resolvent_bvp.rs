//! Continuous resolvent problem `(A - i tau) z = (f, g, g(L), g(0))`.
//!
//! With `y~ = P w'` the problem reduces to `y~'' + (tau^2/P) y~ = g' + i tau f'`
//! with Robin-type rows at both ends. An affine lift `h` absorbs the
//! inhomogeneous boundary rows and the rest is solved by variation of
//! constants with the real fundamental pair of `y'' + (tau^2/P) y = 0`.

use std::f64::consts::PI;
use std::io::Write;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::prelude::*;
use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::GeneratorSystem;
use crate::error::{invalid, Error, Result};
use crate::functions::{SmoothFn, SmoothProfile, TrigSeries};
use crate::grid::Grid;
use crate::model::{check_admissibility, HWeights, RescaledModel};
use crate::ode::{integrate, OdeOptions};
use crate::operator::{
    invert_a, weighted_inner_traces, SampledFunction, StateZ, TensionProfile, Traces,
};
use crate::spectral::{resolve_discrete, ResolventSample, Source};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BvpOptions {
    /// Output samples and maximal integration step per local wavelength.
    pub points_per_wavelength: f64,
    pub tau_cap: f64,
    /// Admitted relative Wronskian drift.
    pub tol: f64,
    /// Output grids have a multiple of this many intervals.
    pub grid_multiple: usize,
    /// Below this frequency the shooting branch replaces the pipeline.
    pub small_tau: f64,
    /// `|N| / max(tau, 1)` below this is reported as near-resonant.
    pub resonance_floor: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        Self {
            points_per_wavelength: 20.0,
            tau_cap: 1e3,
            tol: 1e-8,
            grid_multiple: 400,
            small_tau: 0.1,
            resonance_floor: 1e-10,
        }
    }
}

impl BvpOptions {
    fn ode(&self, tau: f64, tension: &TensionProfile) -> OdeOptions {
        OdeOptions {
            rtol: 1e-4 * self.tol,
            atol: 1e-7 * self.tol,
            h_max: wavelength(tau, tension) / self.points_per_wavelength,
            ..OdeOptions::default()
        }
    }
}

/// Shortest local wavelength `2 pi sqrt(P_min) / tau`.
pub fn wavelength(tau: f64, tension: &TensionProfile) -> f64 {
    if tau == 0.0 {
        f64::INFINITY
    } else {
        2.0 * PI * tension.p_min().sqrt() / tau.abs()
    }
}

/// Uniform grid resolving the local wavelength, aligned to `grid_multiple`.
pub fn output_grid(tau: f64, tension: &TensionProfile, opts: &BvpOptions) -> Result<Grid> {
    if opts.grid_multiple < 3 {
        return Err(invalid("grid_multiple", "must be at least 3"));
    }
    let l = tension.length();
    let need = (opts.points_per_wavelength * l / wavelength(tau, tension))
        .ceil()
        .max(1.0) as usize;
    let blocks = need.div_ceil(opts.grid_multiple);
    Grid::new(blocks * opts.grid_multiple, l)
}

fn check_tau(tau: f64, opts: &BvpOptions) -> Result<()> {
    if !tau.is_finite() || tau < 0.0 {
        return Err(invalid("tau", "must be finite and non-negative"));
    }
    if tau > opts.tau_cap {
        return Err(Error::ResolutionCap {
            tau,
            cap: opts.tau_cap,
        });
    }
    Ok(())
}

/// Real solutions of `y'' + (tau^2/P) y = 0` with `phi1(0) = 0`,
/// `phi1'(0) = tau`, `phi2(0) = 1`, `phi2'(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalPair {
    pub tau: f64,
    pub grid: Grid,
    pub phi1: Vec<f64>,
    pub dphi1: Vec<f64>,
    pub phi2: Vec<f64>,
    pub dphi2: Vec<f64>,
    /// `phi1' phi2 - phi1 phi2'`, equal to `tau` at `x = 0`.
    pub wronskian: f64,
    /// `max |W(x) - tau| / tau` over the grid.
    pub wronskian_drift: f64,
    tension: TensionProfile,
    opts: BvpOptions,
}

impl FundamentalPair {
    pub fn phi1_sampled(&self) -> SampledFunction<f64> {
        SampledFunction::new(self.grid, self.phi1.clone()).expect("grid-sized")
    }

    pub fn phi2_sampled(&self) -> SampledFunction<f64> {
        SampledFunction::new(self.grid, self.phi2.clone()).expect("grid-sized")
    }

    pub fn sup_norms(&self) -> (f64, f64) {
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        (sup(&self.phi1), sup(&self.phi2))
    }
}

/// Pair together with the running integrals `int_0^x H phi_j`.
struct Kernel {
    pair: FundamentalPair,
    a1: Vec<Complex64>,
    a2: Vec<Complex64>,
}

fn run_kernel(
    tau: f64,
    tension: &TensionProfile,
    grid: Grid,
    opts: &BvpOptions,
    h: &dyn Fn(f64) -> Complex64,
) -> Result<Kernel> {
    let ode = opts.ode(tau, tension);
    let t2 = tau * tau;
    let rhs = |x: f64, y: &[f64; 8]| {
        let q = t2 / tension.eval(x);
        let hv = h(x);
        [
            y[1],
            -q * y[0],
            y[3],
            -q * y[2],
            hv.re * y[0],
            hv.im * y[0],
            hv.re * y[2],
            hv.im * y[2],
        ]
    };
    let ys = integrate(
        rhs,
        [0.0, tau, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        &grid.nodes(),
        &ode,
    )?;
    let col = |k: usize| ys.iter().map(|y| y[k]).collect::<Vec<f64>>();
    let (phi1, dphi1, phi2, dphi2) = (col(0), col(1), col(2), col(3));
    let drift = (0..ys.len())
        .map(|i| (dphi1[i] * phi2[i] - phi1[i] * dphi2[i] - tau).abs() / tau)
        .fold(0.0f64, f64::max);
    if !(drift <= opts.tol) {
        return Err(Error::Integration(format!(
            "Wronskian drift {drift:e} exceeds tolerance {:e} at tau = {tau}",
            opts.tol
        )));
    }
    let a1 = ys.iter().map(|y| Complex64::new(y[4], y[5])).collect();
    let a2 = ys.iter().map(|y| Complex64::new(y[6], y[7])).collect();
    Ok(Kernel {
        pair: FundamentalPair {
            tau,
            grid,
            phi1,
            dphi1,
            phi2,
            dphi2,
            wronskian: tau,
            wronskian_drift: drift,
            tension: tension.clone(),
            opts: *opts,
        },
        a1,
        a2,
    })
}

impl Kernel {
    /// `I0 = int f J` and `I1 = int f d_x J` from the running integrals.
    fn greens(&self) -> GreensIntegrals {
        let p = &self.pair;
        let n = p.grid.len();
        let (i0, i1) = (0..n)
            .map(|i| {
                let (a1, a2) = (self.a1[i], self.a2[i]);
                (
                    (a2 * p.phi1[i] - a1 * p.phi2[i]) / p.tau,
                    (a2 * p.dphi1[i] - a1 * p.dphi2[i]) / p.tau,
                )
            })
            .unzip();
        GreensIntegrals {
            grid: p.grid,
            i0,
            i1,
        }
    }
}

/// Fundamental pair on the wavelength-resolving output grid.
pub fn fundamental_pair(
    tau: f64,
    tension: &TensionProfile,
    opts: &BvpOptions,
) -> Result<FundamentalPair> {
    check_tau(tau, opts)?;
    if tau == 0.0 {
        return Err(invalid("tau", "the fundamental pair needs tau > 0"));
    }
    let grid = output_grid(tau, tension, opts)?;
    Ok(run_kernel(tau, tension, grid, opts, &|_| Complex64::new(0.0, 0.0))?.pair)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreensIntegrals {
    pub grid: Grid,
    pub i0: Vec<Complex64>,
    pub i1: Vec<Complex64>,
}

impl GreensIntegrals {
    pub fn sup_i0(&self) -> f64 {
        self.i0.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn sup_i1(&self) -> f64 {
        self.i1.iter().fold(0.0, |m, z| m.max(z.norm()))
    }
}

/// `I0(x) = int_0^x f(t) J(x,t) dt` and `I1(x) = int_0^x f(t) d_x J(x,t) dt`
/// with `J = [phi1(x) phi2(t) - phi2(x) phi1(t)] / W`.
///
/// The integrals `int f phi_j` are carried as extra components of the
/// pair's initial value problem, so `phi_j` is never interpolated.
pub fn greens_apply(f: &dyn SmoothFn, pair: &FundamentalPair) -> Result<GreensIntegrals> {
    let k = run_kernel(pair.tau, &pair.tension, pair.grid, &pair.opts, &|x| {
        Complex64::new(f.value(x), 0.0)
    })?;
    Ok(k.greens())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum InjectivityMethod {
    /// Shooting from `x = 0` with slope `c0`.
    Shooting,
    /// `tau = 0`: existence of the closed-form inverse.
    Inverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InjectivityMargin {
    pub tau: f64,
    pub c0: Option<Complex64>,
    /// `|w'(L) - tau^2 w(L)|` for the shooting solution; `|theta3|` for the
    /// inverse check.
    pub margin: f64,
    pub method: InjectivityMethod,
}

fn require_admissible(m: &RescaledModel) -> Result<()> {
    let rep = check_admissibility(m);
    if rep.admissible {
        Ok(())
    } else {
        Err(Error::NotAdmissible(rep.violations.join(", ")))
    }
}

/// `c0 = -(th3 + tau^2 + i tau th1) / (th4 + i tau th2)`.
pub fn c0(tau: f64, theta: &[f64; 4]) -> Complex64 {
    let [t1, t2, t3, t4] = *theta;
    -Complex64::new(t3 + tau * tau, tau * t1) / Complex64::new(t4, tau * t2)
}

/// Certifies that `i tau` is not an eigenvalue: the unique solution of
/// `(P w')' + tau^2 w = 0` meeting the cart row with `w(0) = 1` must miss the
/// payload row.
pub fn injectivity_check(tau: f64, m: &RescaledModel) -> Result<InjectivityMargin> {
    require_admissible(m)?;
    let t = tau.abs();
    if t == 0.0 {
        let grid = Grid::new(100, m.l_tilde)?;
        let ones = SampledFunction::from_fn(grid, |_| 1.0);
        invert_a(&SampledFunction::zeros(grid), &ones, m)?;
        return Ok(InjectivityMargin {
            tau,
            c0: None,
            margin: m.theta[2].abs(),
            method: InjectivityMethod::Inverse,
        });
    }
    let c = c0(tau, &m.theta);
    let opts = BvpOptions::default();
    let p = &m.tension;
    let t2 = tau * tau;
    let y0 = c * p.eval(0.0);
    let ode = opts.ode(t, p);
    let ys = integrate(
        |x, y: &[f64; 4]| {
            let q = 1.0 / p.eval(x);
            [q * y[2], q * y[3], -t2 * y[0], -t2 * y[1]]
        },
        [1.0, 0.0, y0.re, y0.im],
        &[0.0, m.l_tilde],
        &ode,
    )?;
    let y = ys[1];
    let w_l = Complex64::new(y[0], y[1]);
    let dw_l = Complex64::new(y[2], y[3]) / m.p_bottom();
    Ok(InjectivityMargin {
        tau,
        c0: Some(c),
        margin: (dw_l - w_l * t2).norm(),
        method: InjectivityMethod::Shooting,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Branch {
    Pipeline,
    Shooting,
}

/// Constants of the variation-of-constants construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PipelineCoefficients {
    pub gamma1: Complex64,
    pub gamma2: Complex64,
    pub r1: Complex64,
    pub a0: Complex64,
    pub a1: Complex64,
    pub c1: Complex64,
    pub c2: Complex64,
    pub denominator: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventSolution {
    pub tau: f64,
    pub grid: Grid,
    pub w: Vec<Complex64>,
    pub dw: Vec<Complex64>,
    pub d2w: Vec<Complex64>,
    /// `(P w')'`.
    pub flux: Vec<Complex64>,
    pub v: Vec<Complex64>,
    pub dv: Vec<Complex64>,
    pub branch: Branch,
    pub coefficients: Option<PipelineCoefficients>,
    /// `(||w||_{H^2}, ||v||_{H^1})`.
    pub norms: (f64, f64),
    /// `||f||_{H^2} + ||g||_{H^1}`.
    pub data_norm: f64,
    pub gain: f64,
    /// Largest defect of the four resolvent rows relative to `data_norm`.
    pub residual: f64,
}

impl ResolventSolution {
    pub fn state(&self) -> StateZ<Complex64> {
        StateZ {
            w: SampledFunction::new(self.grid, self.w.clone()).expect("grid-sized"),
            v: SampledFunction::new(self.grid, self.v.clone()).expect("grid-sized"),
        }
    }

    /// Nodal values on a coarser grid whose nodes are a subset of ours.
    pub fn restrict(&self, grid: &Grid) -> Result<StateZ<Complex64>> {
        if (grid.length() - self.grid.length()).abs() > 1e-12 * grid.length()
            || !self.grid.n().is_multiple_of(grid.n())
        {
            return Err(Error::GridMismatch(format!(
                "{} intervals do not refine {} intervals",
                self.grid.n(),
                grid.n()
            )));
        }
        let s = self.grid.n() / grid.n();
        let pick = |v: &[Complex64]| v.iter().step_by(s).copied().collect::<Vec<_>>();
        StateZ::new(
            SampledFunction::new(*grid, pick(&self.w))?,
            SampledFunction::new(*grid, pick(&self.v))?,
        )
    }

    /// Analytic traces for the energy product.
    pub fn traces(&self, tension: &TensionProfile) -> Traces<Complex64> {
        let n = self.grid.n();
        Traces {
            grid: self.grid,
            p: self
                .grid
                .nodes()
                .into_iter()
                .map(|x| tension.eval(x))
                .collect(),
            w: self.w.clone(),
            dw: self.dw.clone(),
            d2w: self.d2w.clone(),
            flux: self.flux.clone(),
            v: self.v.clone(),
            dv: self.dv.clone(),
            xi: self.v[n],
            psi: self.v[0],
        }
    }
}

/// Analytic traces of the datum `(f, g, g(L), g(0))`.
pub fn data_traces(
    f: &dyn SmoothFn,
    g: &dyn SmoothFn,
    grid: Grid,
    tension: &TensionProfile,
) -> Traces<Complex64> {
    let xs = grid.nodes();
    let c = |v: f64| Complex64::new(v, 0.0);
    let map = |h: &dyn Fn(f64) -> f64| xs.iter().map(|&x| c(h(x))).collect::<Vec<_>>();
    Traces {
        grid,
        p: xs.iter().map(|&x| tension.eval(x)).collect(),
        w: map(&|x| f.value(x)),
        dw: map(&|x| f.d1(x)),
        d2w: map(&|x| f.d2(x)),
        flux: map(&|x| tension.deriv(x) * f.d1(x) + tension.eval(x) * f.d2(x)),
        v: map(&|x| g.value(x)),
        dv: map(&|x| g.d1(x)),
        xi: c(g.value(grid.length())),
        psi: c(g.value(0.0)),
    }
}

/// Sampled datum as a discrete state.
pub fn sample_datum(f: &dyn SmoothFn, g: &dyn SmoothFn, grid: Grid) -> StateZ<Complex64> {
    StateZ {
        w: SampledFunction::from_fn(grid, |x| Complex64::new(f.value(x), 0.0)),
        v: SampledFunction::from_fn(grid, |x| Complex64::new(g.value(x), 0.0)),
    }
}

/// `(w, P w')` of `(P w')' + tau^2 w = g + i tau f` from given values at 0,
/// together with the two real homogeneous solutions `(1, 0)` and `(0, 1)`.
fn flux_ivp(
    tau: f64,
    f: &dyn SmoothFn,
    g: &dyn SmoothFn,
    tension: &TensionProfile,
    grid: &Grid,
    start: (Complex64, Complex64),
    opts: &BvpOptions,
) -> Result<Vec<[f64; 8]>> {
    let t2 = tau * tau;
    let rhs = |x: f64, y: &[f64; 8]| {
        let q = 1.0 / tension.eval(x);
        let (gr, fi) = (g.value(x), tau * f.value(x));
        [
            q * y[2],
            q * y[3],
            gr - t2 * y[0],
            fi - t2 * y[1],
            q * y[5],
            -t2 * y[4],
            q * y[7],
            -t2 * y[6],
        ]
    };
    let (w0, y0) = start;
    let mut ode = opts.ode(tau.max(opts.small_tau), tension);
    ode.h_max = ode.h_max.min(grid.dx());
    integrate(
        rhs,
        [w0.re, w0.im, y0.re, y0.im, 1.0, 0.0, 0.0, 1.0],
        &grid.nodes(),
        &ode,
    )
}

fn sobolev(grid: &Grid, parts: &[&[Complex64]]) -> f64 {
    let dens: Vec<f64> = (0..grid.len())
        .map(|i| parts.iter().map(|p| p[i].norm_sqr()).sum())
        .collect();
    grid.integrate(&dens).sqrt()
}

/// Solves `(A - i tau) z = (f, g, g(L), g(0))` for the continuous generator.
pub fn solve_resolvent_bvp(
    f: &dyn SmoothFn,
    g: &dyn SmoothFn,
    tau: f64,
    m: &RescaledModel,
    opts: &BvpOptions,
) -> Result<ResolventSolution> {
    require_admissible(m)?;
    check_tau(tau, opts)?;
    let p = &m.tension;
    let grid = output_grid(tau, p, opts)?;
    let xs = grid.nodes();
    let n = grid.n();
    let l = m.l_tilde;
    let (p0, pl) = (m.p_top(), m.p_bottom());
    let [t1, t2, t3, t4] = m.theta;
    let t_sq = tau * tau;
    let gamma1 = Complex64::new(t4, tau * t2);
    let gamma2 = Complex64::new(t3 + t_sq, tau * t1);

    let (w, flux_val, flux_der, branch, coefficients) = if tau >= opts.small_tau {
        let r1 = -Complex64::new(t3, tau * t1) * g.value(0.0) / t_sq
            - I * t3 * f.value(0.0) / tau
            - t2 * f.d1(0.0);
        let a1 = -r1 * (t_sq * p0) / (gamma1 * (t_sq * (l + pl)) + gamma2 * p0);
        let a0 = -a1 * (l + pl);
        let hfun =
            |x: f64| Complex64::new(g.d1(x), tau * f.d1(x)) - (a1 * x + a0) * (t_sq / p.eval(x));
        let k = run_kernel(tau, p, grid, opts, &hfun)?;
        let gi = k.greens();
        let pr = &k.pair;
        let den = pr.phi1[n]
            + pl * pr.dphi1[n]
            + gamma2 * p0 / (gamma1 * tau) * (pr.phi2[n] + pl * pr.dphi2[n]);
        if den.norm() / tau.max(1.0) < opts.resonance_floor {
            return Err(Error::NearResonance(den.norm()));
        }
        let c1 = -(gi.i0[n] + gi.i1[n] * pl) / den;
        let c2 = gamma2 * p0 * c1 / (gamma1 * tau);
        let yt: Vec<Complex64> = (0..=n)
            .map(|i| c1 * pr.phi1[i] + c2 * pr.phi2[i] + gi.i0[i] + a1 * xs[i] + a0)
            .collect();
        let dyt: Vec<Complex64> = (0..=n)
            .map(|i| c1 * pr.dphi1[i] + c2 * pr.dphi2[i] + gi.i1[i] + a1)
            .collect();
        let w = (0..=n)
            .map(|i| (Complex64::new(g.value(xs[i]), tau * f.value(xs[i])) - dyt[i]) / t_sq)
            .collect();
        let coef = PipelineCoefficients {
            gamma1,
            gamma2,
            r1,
            a0,
            a1,
            c1,
            c2,
            denominator: den,
        };
        (w, yt, dyt, Branch::Pipeline, Some(coef))
    } else {
        let ys = flux_ivp(tau, f, g, p, &grid, (0.0.into(), 0.0.into()), opts)?;
        let e = &ys[n];
        let (wp, yp) = (Complex64::new(e[0], e[1]), Complex64::new(e[2], e[3]));
        let (w1, y1, w2, y2) = (e[4], e[5], e[6], e[7]);
        // Rows in the unknowns (alpha, beta) = (w(0), P w'(0)).
        let m00 = -gamma2;
        let m01 = -gamma1 / p0;
        let r0 =
            t1 * f.value(0.0) + t2 * f.d1(0.0) - Complex64::new(g.value(0.0), tau * f.value(0.0));
        let m10 = Complex64::from(y1 - pl * t_sq * w1);
        let m11 = Complex64::from(y2 - pl * t_sq * w2);
        let rl = -(Complex64::new(g.value(l), tau * f.value(l)) * pl - pl * t_sq * wp + yp);
        let det = m00 * m11 - m01 * m10;
        if det.norm() < 1e-14 * (m00.norm() * m11.norm() + m01.norm() * m10.norm()) {
            return Err(Error::Singular(format!(
                "shooting system is singular at tau = {tau}"
            )));
        }
        let alpha = (r0 * m11 - m01 * rl) / det;
        let beta = (m00 * rl - m10 * r0) / det;
        let yt: Vec<Complex64> = ys
            .iter()
            .map(|y| Complex64::new(y[2], y[3]) + alpha * y[5] + beta * y[7])
            .collect();
        let w: Vec<Complex64> = ys
            .iter()
            .map(|y| Complex64::new(y[0], y[1]) + alpha * y[4] + beta * y[6])
            .collect();
        let dyt = (0..=n)
            .map(|i| Complex64::new(g.value(xs[i]), tau * f.value(xs[i])) - w[i] * t_sq)
            .collect();
        (w, yt, dyt, Branch::Shooting, None)
    };

    let dw: Vec<Complex64> = (0..=n).map(|i| flux_val[i] / p.eval(xs[i])).collect();
    let d2w: Vec<Complex64> = (0..=n)
        .map(|i| (flux_der[i] - p.deriv(xs[i]) * dw[i]) / p.eval(xs[i]))
        .collect();
    let v: Vec<Complex64> = (0..=n).map(|i| f.value(xs[i]) + I * tau * w[i]).collect();
    let dv: Vec<Complex64> = (0..=n).map(|i| f.d1(xs[i]) + I * tau * dw[i]).collect();

    let data_norm = f.h2_norm(l) + g.h1_norm(l);
    let norms = (sobolev(&grid, &[&w, &dw, &d2w]), sobolev(&grid, &[&v, &dv]));
    let gain = if data_norm > 0.0 {
        (norms.0 + norms.1) / data_norm
    } else {
        0.0
    };

    // Row residuals: interior rows through an independent IVP from x = 0,
    // boundary rows directly.
    let check = flux_ivp(tau, f, g, p, &grid, (w[0], flux_val[0]), opts)?;
    let mut interior = 0.0f64;
    for i in 0..=n {
        let c = &check[i];
        let dw_i = (Complex64::new(c[0], c[1]) - w[i]).norm();
        let dy_i = (Complex64::new(c[2], c[3]) - flux_val[i]).norm();
        interior = interior.max(dw_i + dy_i);
    }
    let row_a = (0..=n)
        .map(|i| (v[i] - I * tau * w[i] - f.value(xs[i])).norm())
        .fold(0.0, f64::max);
    let row_c = (-dw[n] - I * tau * v[n] - g.value(l)).norm();
    let row_d =
        (t1 * v[0] + t2 * dv[0] + t3 * w[0] + t4 * dw[0] - I * tau * v[0] - g.value(0.0)).norm();
    let defect = interior.max(row_a).max(row_c).max(row_d);
    let residual = if data_norm > 0.0 {
        defect / data_norm
    } else {
        defect
    };

    Ok(ResolventSolution {
        tau,
        grid,
        w,
        dw,
        d2w,
        flux: flux_der,
        v,
        dv,
        branch,
        coefficients,
        norms,
        data_norm,
        gain,
        residual,
    })
}

/// Fixed family of smooth data used for the continuous norm estimate:
/// `f` or `g` from `{1, cos(pi x/L), cos(2 pi x/L)}` with the other zero.
pub fn data_family(length: f64) -> Vec<(SmoothProfile, SmoothProfile)> {
    let modes = |k: f64| SmoothProfile::from_trig(TrigSeries::cosine(1.0, k * PI / length));
    let mut out = Vec::new();
    for k in 0..3 {
        out.push((modes(k as f64), SmoothProfile::default()));
    }
    for k in 0..3 {
        out.push((SmoothProfile::default(), modes(k as f64)));
    }
    out
}

/// Largest generalized eigenvalue of `(sol, dat)` Gram matrices, i.e.
/// `max_c ||sum c_k R z_k||^2 / ||sum c_k z_k||^2`.
fn max_gram_ratio(sol: &Mat<c64>, dat: &Mat<c64>) -> Result<f64> {
    let l = dat
        .llt(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("data family is not independent: {e:?}")))?;
    let l = l.L();
    let mut y = sol.clone();
    solve_lower_triangular_in_place(l, y.as_mut(), Par::Seq);
    let mut z = y.adjoint().to_owned();
    solve_lower_triangular_in_place(l, z.as_mut(), Par::Seq);
    let ev = z
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(ev.last().copied().unwrap_or(0.0).max(0.0))
}

/// Energy-norm gain of the continuous resolvent maximized over
/// [`data_family`]; a lower bound for `||(i tau - A)^-1||_H`.
pub fn continuous_gain(
    tau: f64,
    m: &RescaledModel,
    hw: &HWeights,
    opts: &BvpOptions,
) -> Result<ResolventSample> {
    let family = data_family(m.l_tilde);
    let mut sols = Vec::with_capacity(family.len());
    for (f, g) in &family {
        sols.push(solve_resolvent_bvp(f, g, tau, m, opts)?);
    }
    let grid = sols[0].grid;
    let st: Vec<Traces<Complex64>> = sols.iter().map(|s| s.traces(&m.tension)).collect();
    let dt: Vec<Traces<Complex64>> = family
        .iter()
        .map(|(f, g)| data_traces(f, g, grid, &m.tension))
        .collect();
    let k = family.len();
    let gram = |t: &[Traces<Complex64>]| -> Result<Mat<c64>> {
        let mut out = Mat::<c64>::zeros(k, k);
        for j in 0..k {
            for i in 0..k {
                let v = weighted_inner_traces(&t[i], &t[j], hw)?;
                out[(j, i)] = c64::new(v.re, v.im);
            }
        }
        Ok(out)
    };
    let ratio = max_gram_ratio(&gram(&st)?, &gram(&dt)?)?;
    Ok(ResolventSample {
        tau,
        norm: ratio.sqrt(),
        source: Source::Continuous,
    })
}

pub fn sweep_continuous(
    taus: &[f64],
    m: &RescaledModel,
    opts: &BvpOptions,
) -> Result<Vec<ResolventSample>> {
    let hw = HWeights::for_model(m)?;
    taus.iter()
        .map(|&t| continuous_gain(t, m, &hw, opts))
        .collect()
}

/// Same datum through both solvers on the discrete grid; the continuous
/// output grid is aligned to the discrete one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossCheck {
    pub tau: f64,
    /// `||z_cont - z_disc||_H / ||z_cont||_H` on the discrete grid.
    pub relative_h_error: f64,
    pub residual: f64,
}

pub fn compare_with_discrete(
    f: &dyn SmoothFn,
    g: &dyn SmoothFn,
    tau: f64,
    sys: &GeneratorSystem,
    opts: &BvpOptions,
) -> Result<CrossCheck> {
    let aligned = BvpOptions {
        grid_multiple: sys.grid.n(),
        ..*opts
    };
    let sol = solve_resolvent_bvp(f, g, tau, &sys.model, &aligned)?;
    let zc = sol.restrict(&sys.grid)?.to_vec();
    let datum = sample_datum(f, g, sys.grid).to_vec();
    let zd = resolve_discrete(sys, tau, &datum)?;
    let diff: Vec<Complex64> = zc.iter().zip(&zd).map(|(a, b)| a - b).collect();
    Ok(CrossCheck {
        tau,
        relative_h_error: sys.h_norm_c(&diff) / sys.h_norm_c(&zc),
        residual: sol.residual,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingStudy {
    pub taus: Vec<f64>,
    pub sup_i0: Vec<f64>,
    pub sup_i1: Vec<f64>,
    pub slope_i0: f64,
    pub slope_i1: f64,
    /// `max tau^2 ||I0|| / ||f||_{H^1}` and `max tau ||I1|| / ||f||_{H^1}`.
    pub bound_i0: f64,
    pub bound_i1: f64,
}

/// Decay of the Green's integrals in `tau`.
pub fn appendix_b_scaling_study(
    taus: &[f64],
    f: &dyn SmoothFn,
    tension: &TensionProfile,
    opts: &BvpOptions,
) -> Result<ScalingStudy> {
    if taus.len() < 2 || taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(
            "tau_grid",
            "needs at least two increasing frequencies",
        ));
    }
    let (lo, hi) = (taus[0], taus[taus.len() - 1]);
    if lo < 10.0 || hi < 100.0 * lo {
        return Err(invalid(
            "tau_grid",
            "must start at tau >= 10 and span at least two decades",
        ));
    }
    let fn1 = f.h1_norm(tension.length());
    if !(fn1 > 0.0) {
        return Err(Error::Degenerate("f vanishes identically".into()));
    }
    let (mut sup_i0, mut sup_i1) = (Vec::new(), Vec::new());
    for &t in taus {
        let gi = greens_apply(f, &fundamental_pair(t, tension, opts)?)?;
        sup_i0.push(gi.sup_i0());
        sup_i1.push(gi.sup_i1());
    }
    let bound = |s: &[f64], pow: i32| {
        taus.iter()
            .zip(s)
            .map(|(t, v)| t.powi(pow) * v / fn1)
            .fold(0.0, f64::max)
    };
    Ok(ScalingStudy {
        slope_i0: loglog_slope(taus, &sup_i0),
        slope_i1: loglog_slope(taus, &sup_i1),
        bound_i0: bound(&sup_i0, 2),
        bound_i1: bound(&sup_i1, 1),
        taus: taus.to_vec(),
        sup_i0,
        sup_i1,
    })
}

/// Columns `tau,gain,residual,c1_re,c1_im,c2_re,c2_im,a0,a1`; the lift
/// coefficients are written as moduli, shooting solves leave them `NaN`.
pub fn write_solutions_csv(
    sols: &[ResolventSolution],
    out: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(out, "tau,gain,residual,c1_re,c1_im,c2_re,c2_im,a0,a1")?;
    for s in sols {
        let nan = Complex64::new(f64::NAN, f64::NAN);
        let (c1, c2, a0, a1) = s
            .coefficients
            .map(|c| (c.c1, c.c2, c.a0, c.a1))
            .unwrap_or((nan, nan, nan, nan));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.tau,
            s.gain,
            s.residual,
            c1.re,
            c1.im,
            c2.re,
            c2.im,
            a0.norm(),
            a1.norm()
        )?;
    }
    Ok(())
}

/// Columns `x,w_re,w_im,v_re,v_im`.
pub fn write_solution_profile_csv(
    s: &ResolventSolution,
    out: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(out, "x,w_re,w_im,v_re,v_im")?;
    for (i, x) in s.grid.nodes().into_iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{}",
            x, s.w[i].re, s.w[i].im, s.v[i].re, s.v[i].im
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::assemble_generator;
    use crate::functions::Constant;

    fn unit(p: f64) -> TensionProfile {
        TensionProfile::constant(p, 9.81).unwrap()
    }

    #[test]
    fn constant_tension_pair_is_closed_form() {
        let pc = 4.0;
        let tau = 7.0;
        let pr = fundamental_pair(tau, &unit(pc), &BvpOptions::default()).unwrap();
        let k = tau / pc.sqrt();
        let err = pr
            .grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                (pr.phi1[i] - pc.sqrt() * (k * x).sin())
                    .abs()
                    .max((pr.phi2[i] - (k * x).cos()).abs())
            })
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(pr.wronskian_drift < 1e-8);
        assert_eq!(pr.dphi1[0] * pr.phi2[0] - pr.phi1[0] * pr.dphi2[0], tau);
        assert_eq!(pr.grid.n() % 400, 0);
    }

    #[test]
    fn reference_pair_is_uniformly_bounded() {
        let m = RescaledModel::reference();
        let mut sups = Vec::new();
        for tau in [1.0, 10.0, 100.0, 1000.0] {
            let pr = fundamental_pair(tau, &m.tension, &BvpOptions::default()).unwrap();
            let (a, b) = pr.sup_norms();
            sups.push(a.max(b));
        }
        let (lo, hi) = sups
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(l, h), &s| (l.min(s), h.max(s)));
        assert!(hi < 6.0 && hi / lo < 2.0, "{sups:?}");
    }

    #[test]
    fn resolution_cap_is_enforced() {
        let m = RescaledModel::reference();
        assert!(matches!(
            fundamental_pair(1001.0, &m.tension, &BvpOptions::default()),
            Err(Error::ResolutionCap { .. })
        ));
    }

    #[test]
    fn greens_closed_forms() {
        let tau = 12.0;
        let pr = fundamental_pair(tau, &unit(1.0), &BvpOptions::default()).unwrap();
        let gi = greens_apply(&Constant(1.0), &pr).unwrap();
        for (i, x) in pr.grid.nodes().into_iter().enumerate() {
            assert!((gi.i0[i].re - (1.0 - (tau * x).cos()) / (tau * tau)).abs() < 1e-10);
            assert!((gi.i1[i].re - (tau * x).sin() / tau).abs() < 1e-10);
        }
        let zero = greens_apply(&Constant(0.0), &pr).unwrap();
        assert!(zero.sup_i0() == 0.0 && zero.sup_i1() == 0.0);
    }

    #[test]
    fn c0_is_never_real_for_reference() {
        let m = RescaledModel::reference();
        let mut sign = None;
        for k in 0..500 {
            let tau = 0.1 + k as f64 * (100.0 - 0.1) / 499.0;
            let im = c0(tau, &m.theta).im;
            assert!(im != 0.0);
            assert!(*sign.get_or_insert(im > 0.0) == (im > 0.0));
        }
    }

    #[test]
    fn injectivity_examples() {
        let m = RescaledModel::reference();
        let r = injectivity_check(1.0, &m).unwrap();
        assert!(r.c0.unwrap().im != 0.0 && r.margin > 0.0);
        let z = injectivity_check(0.0, &m).unwrap();
        assert_eq!(z.method, InjectivityMethod::Inverse);
        let bad = RescaledModel::from_parts([1.0, 1.0, 1.0, 1.0], m.tension.clone());
        assert!(matches!(
            injectivity_check(1.0, &bad),
            Err(Error::NotAdmissible(_))
        ));
    }

    #[test]
    fn zero_datum_gives_zero_solution() {
        let m = RescaledModel::reference();
        let s = solve_resolvent_bvp(
            &Constant(0.0),
            &Constant(0.0),
            5.0,
            &m,
            &BvpOptions::default(),
        )
        .unwrap();
        assert_eq!(s.gain, 0.0);
        assert!(s.w.iter().chain(&s.v).all(|z| z.norm() == 0.0));
    }

    #[test]
    fn sine_datum_matches_discrete_resolve() {
        let m = RescaledModel::reference();
        let sys = assemble_generator(&m, &Grid::new(400, m.l_tilde).unwrap()).unwrap();
        let f = SmoothProfile::from_trig(TrigSeries::sine(1.0, PI / m.l_tilde));
        let cc =
            compare_with_discrete(&f, &Constant(0.0), 5.0, &sys, &BvpOptions::default()).unwrap();
        assert!(cc.residual < 1e-6, "{cc:?}");
        assert!(cc.relative_h_error < 0.05, "{cc:?}");
    }

    #[test]
    fn branches_agree_at_the_switch() {
        let m = RescaledModel::reference();
        let f = SmoothProfile::from_trig(TrigSeries::cosine(1.0, PI / m.l_tilde));
        let g = SmoothProfile::from_trig(TrigSeries::sine(0.5, 2.0 * PI / m.l_tilde));
        let base = BvpOptions::default();
        let a = solve_resolvent_bvp(&f, &g, 0.3, &m, &base).unwrap();
        let b = solve_resolvent_bvp(
            &f,
            &g,
            0.3,
            &m,
            &BvpOptions {
                small_tau: 0.5,
                ..base
            },
        )
        .unwrap();
        assert_eq!((a.branch, b.branch), (Branch::Pipeline, Branch::Shooting));
        let d =
            a.w.iter()
                .zip(&b.w)
                .map(|(x, y)| (x - y).norm())
                .fold(0.0, f64::max);
        let s = a.w.iter().map(|x| x.norm()).fold(0.0, f64::max);
        assert!(d < 1e-6 * s, "{d} vs {s}");
        assert!(a.residual < 1e-6 && b.residual < 1e-6);
    }

    #[test]
    fn shooting_at_zero_is_the_inverse() {
        let m = RescaledModel::reference();
        let f = SmoothProfile::from_trig(TrigSeries::cosine(1.0, PI / m.l_tilde));
        let g = Constant(1.0);
        let s = solve_resolvent_bvp(&f, &g, 0.0, &m, &BvpOptions::default()).unwrap();
        let grid = Grid::new(400, m.l_tilde).unwrap();
        // (A - 0) z = datum, and invert_a solves A z = (f, g).
        let inv = invert_a(&f.sample(grid), &g.sample(grid), &m).unwrap();
        let zc = s.restrict(&grid).unwrap();
        let d =
            zc.w.values()
                .iter()
                .zip(inv.w.values())
                .map(|(a, b)| (a.re - b).abs())
                .fold(0.0, f64::max);
        assert!(d < 1e-3, "{d}");
    }

    #[test]
    fn scaling_study_constant_tension() {
        let taus = crate::spectral::tau_grid(10.0, 1000.0, 5, true);
        let s = appendix_b_scaling_study(&taus, &Constant(1.0), &unit(1.0), &BvpOptions::default())
            .unwrap();
        assert!((s.slope_i0 + 2.0).abs() < 1e-3, "{}", s.slope_i0);
        assert!((s.slope_i1 + 1.0).abs() < 1e-3, "{}", s.slope_i1);
        assert!(matches!(
            appendix_b_scaling_study(&taus, &Constant(0.0), &unit(1.0), &BvpOptions::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(appendix_b_scaling_study(
            &[10.0, 20.0],
            &Constant(1.0),
            &unit(1.0),
            &BvpOptions::default()
        )
        .is_err());
    }

    #[test]
    fn gram_ratio_of_scaled_family() {
        let mut d = Mat::<c64>::zeros(2, 2);
        d[(0, 0)] = c64::new(2.0, 0.0);
        d[(1, 1)] = c64::new(1.0, 0.0);
        let s = Mat::<c64>::from_fn(2, 2, |i, j| {
            d[(i, j)] * c64::new(if i == 0 { 9.0 } else { 4.0 }, 0.0)
        });
        assert!((max_gram_ratio(&s, &d).unwrap() - 9.0).abs() < 1e-12);
    }
}
