//! Crank-Nicolson time stepping of the semi-discrete closed loop and the
//! Lyapunov bookkeeping in physical coordinates.

use std::io::Write;

use faer::prelude::*;
use faer::Mat;
use serde::Serialize;

use crate::discretization::{quadratic, GeneratorSystem, Grid};
use crate::error::{invalid, Error, Result};
use crate::grid as stencil;
use crate::model::{ControllerGains, PhysicalParams};
use crate::operator::StateZ;

/// Precomputed one-step map `(I - dt/2 A)^-1 (I + dt/2 A)`, stored row-major.
#[derive(Clone, Debug)]
pub struct CrankNicolson {
    dim: usize,
    dt: f64,
    rows: Vec<f64>,
}

impl CrankNicolson {
    /// Factors the implicit matrix once.
    pub fn new(a: &Mat<f64>, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(
                "time.dt",
                format!("must be finite and > 0, got {dt}"),
            ));
        }
        let n = a.nrows();
        let lhs = Mat::<f64>::from_fn(
            n,
            n,
            |i, j| if i == j { 1.0 } else { 0.0 } - 0.5 * dt * a[(i, j)],
        );
        let rhs = Mat::<f64>::from_fn(
            n,
            n,
            |i, j| if i == j { 1.0 } else { 0.0 } + 0.5 * dt * a[(i, j)],
        );
        let step = lhs.partial_piv_lu().solve(&rhs);
        let mut rows = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let v = step[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Singular("Crank-Nicolson step matrix".into()));
                }
                rows[i * n + j] = v;
            }
        }
        Ok(Self { dim: n, dt, rows })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, z: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.rows[i * self.dim..(i + 1) * self.dim];
            *o = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }
}

/// Recorded states of a run, in rescaled coordinates.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateZ<f64>>,
    /// Spacing of the recorded times.
    pub dt: f64,
    /// Integration step.
    pub step: f64,
    pub grid: Grid,
}

/// Default step `dx / sqrt(P_max)`.
pub fn default_dt(sys: &GeneratorSystem) -> f64 {
    sys.grid.dx() / sys.model.tension.p_max().sqrt()
}

/// Crank-Nicolson run recording every step.
pub fn simulate(
    z0: &StateZ<f64>,
    sys: &GeneratorSystem,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory> {
    simulate_strided(z0, sys, t_end, dt, 1)
}

/// Crank-Nicolson run recording every `record_every`-th step.
pub fn simulate_strided(
    z0: &StateZ<f64>,
    sys: &GeneratorSystem,
    t_end: f64,
    dt: f64,
    record_every: usize,
) -> Result<Trajectory> {
    if z0.grid() != &sys.grid {
        return Err(Error::GridMismatch(
            "initial state is not on the system grid".into(),
        ));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(invalid(
            "time.T",
            format!("must be finite and > 0, got {t_end}"),
        ));
    }
    if record_every == 0 {
        return Err(invalid("record_every", "must be >= 1"));
    }
    let cn = CrankNicolson::new(&sys.a_h, dt)?;
    let steps = (t_end / dt).round() as usize;
    let mut z = z0.to_vec();
    let mut next = vec![0.0; z.len()];
    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    for k in 1..=steps {
        cn.step(&z, &mut next);
        std::mem::swap(&mut z, &mut next);
        if k % record_every == 0 {
            times.push(k as f64 * dt);
            states.push(StateZ::from_vec(sys.grid, &z)?);
        }
    }
    Ok(Trajectory {
        times,
        states,
        dt: dt * record_every as f64,
        step: dt,
        grid: sys.grid,
    })
}

/// `||z(t)||_H` along a trajectory.
pub fn h_norms(tr: &Trajectory, m_h: &Mat<f64>) -> Vec<f64> {
    tr.states
        .iter()
        .map(|s| {
            let z = s.to_vec();
            quadratic(m_h, &z, &z).max(0.0).sqrt()
        })
        .collect()
}

/// Energies in physical units; `lhs` and `rhs` refer to the intervals
/// between consecutive recorded times.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyTrace {
    /// Physical times.
    pub times: Vec<f64>,
    pub hbar: Vec<f64>,
    pub vbar: Vec<f64>,
    pub v: Vec<f64>,
    pub norm_h: Vec<f64>,
    /// `(V(t_{n+1}) - V(t_n)) / dt`.
    pub lhs: Vec<f64>,
    /// `-v(0)^2 - chi3 (v(0) + chi2 w(0) - chi1 F_i)^2` at the midpoint state.
    pub rhs: Vec<f64>,
    /// Rescaled recorded step and grid spacing.
    pub dt: f64,
    pub dx: f64,
}

struct Physical {
    hbar: f64,
    vbar: f64,
    v: f64,
    rate: f64,
}

fn physical_energies(
    z: &[f64],
    sys: &GeneratorSystem,
    p: &PhysicalParams,
    k: &ControllerGains,
) -> Physical {
    let grid = &sys.grid;
    let m = grid.len();
    let (s_x, s_t) = (sys.model.s_x, sys.model.s_t);
    let (w, v) = z.split_at(m);
    let d1 = stencil::d1_rows(grid);
    let wx: Vec<f64> = d1.iter().map(|r| s_x * stencil::apply(r, w)).collect();
    let nodes = grid.nodes();
    let density: Vec<f64> = (0..m)
        .map(|i| sys.model.tension.eval(nodes[i]) * wx[i] * wx[i] + p.rho * (s_t * v[i]).powi(2))
        .collect();
    let hbar = 0.5 * grid.integrate(&density) / s_x + 0.5 * p.m_p * (s_t * v[m - 1]).powi(2);
    let w0 = w[0];
    let v0 = s_t * v[0];
    let vbar = k.chi1 * hbar + 0.5 * k.chi2 * w0 * w0;
    let fi = p.tension_top() * wx[0];
    let e = v0 + k.chi2 * w0 - k.chi1 * fi;
    Physical {
        hbar,
        vbar,
        v: vbar + 0.5 * e * e,
        rate: -v0 * v0 - k.chi3 * e * e,
    }
}

/// Physical energies and both sides of the Lyapunov identity.
pub fn energies(
    tr: &Trajectory,
    sys: &GeneratorSystem,
    p: &PhysicalParams,
    k: &ControllerGains,
) -> Result<EnergyTrace> {
    if tr.grid != sys.grid {
        return Err(Error::GridMismatch(
            "trajectory and system grids differ".into(),
        ));
    }
    let s_t = sys.model.s_t;
    let vecs: Vec<Vec<f64>> = tr.states.iter().map(|s| s.to_vec()).collect();
    let phys: Vec<Physical> = vecs
        .iter()
        .map(|z| physical_energies(z, sys, p, k))
        .collect();
    let dt_phys = tr.dt / s_t;
    let mut lhs = Vec::with_capacity(vecs.len().saturating_sub(1));
    let mut rhs = Vec::with_capacity(lhs.capacity());
    for n in 0..vecs.len().saturating_sub(1) {
        lhs.push((phys[n + 1].v - phys[n].v) / dt_phys);
        let mid: Vec<f64> = vecs[n]
            .iter()
            .zip(&vecs[n + 1])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        rhs.push(physical_energies(&mid, sys, p, k).rate);
    }
    Ok(EnergyTrace {
        times: tr.times.iter().map(|t| t / s_t).collect(),
        hbar: phys.iter().map(|e| e.hbar).collect(),
        vbar: phys.iter().map(|e| e.vbar).collect(),
        v: phys.iter().map(|e| e.v).collect(),
        norm_h: h_norms(tr, &sys.m_h),
        lhs,
        rhs,
        dt: tr.dt,
        dx: tr.grid.dx(),
    })
}

/// Default constant in the residual bound `C (dt^2 + dx^2) max V`, in
/// rescaled units.
pub const ENERGY_IDENTITY_C: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnergyIdentityReport {
    pub max_residual: f64,
    pub scale: f64,
    pub bound: f64,
    pub passed: bool,
    pub max_rhs: f64,
    pub rhs_nonpositive: bool,
    pub ordering_holds: bool,
}

/// Compares the differenced Lyapunov function with the dissipation rate.
pub fn verify_energy_identity(et: &EnergyTrace, c: f64) -> EnergyIdentityReport {
    let max_residual = et
        .lhs
        .iter()
        .zip(&et.rhs)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = et.v.iter().copied().fold(0.0, f64::max);
    let bound = c * (et.dt * et.dt + et.dx * et.dx) * scale;
    let max_rhs = et.rhs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ordering_holds = (0..et.v.len()).all(|i| {
        let tol = 1e-12 * (1.0 + et.v[i]);
        et.v[i] + tol >= et.vbar[i] && et.vbar[i] >= -tol && et.hbar[i] >= -tol
    });
    EnergyIdentityReport {
        max_residual,
        scale,
        bound,
        passed: max_residual <= bound,
        max_rhs,
        rhs_nonpositive: et.rhs.iter().all(|r| *r <= 0.0),
        ordering_holds,
    }
}

/// CSV with columns `t,Hbar,Vbar,V,dVdt_lhs,dVdt_rhs,norm_H`. The rate
/// columns of row `n` belong to the interval `[t_n, t_{n+1}]`; the last row
/// carries `NaN`.
pub fn write_energy_csv(et: &EnergyTrace, out: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    writeln!(out, "t,Hbar,Vbar,V,dVdt_lhs,dVdt_rhs,norm_H")?;
    for i in 0..et.times.len() {
        let (l, r) = match (et.lhs.get(i), et.rhs.get(i)) {
            (Some(l), Some(r)) => (*l, *r),
            _ => (f64::NAN, f64::NAN),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            et.times[i], et.hbar[i], et.vbar[i], et.v[i], l, r, et.norm_h[i]
        )?;
    }
    Ok(())
}

/// Exponential fit `||z(t)||_H <= M exp(-omega t) ||z(0)||_H`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub omega: f64,
    pub prefactor: f64,
    /// `||z(0)||_H / ||z(T)||_H`.
    pub drop: f64,
}

/// Least-squares slope of `log ||z(t)||_H` on the tail half.
pub fn decay_fit(tr: &Trajectory, m_h: &Mat<f64>) -> Result<DecayFit> {
    decay_fit_norms(&tr.times, &h_norms(tr, m_h))
}

/// [`decay_fit`] on precomputed norms.
pub fn decay_fit_norms(times: &[f64], norms: &[f64]) -> Result<DecayFit> {
    if norms.len() < 4 || times.len() != norms.len() {
        return Err(Error::Degenerate(
            "need at least four recorded norms".into(),
        ));
    }
    let n0 = norms[0];
    if !(n0 > 0.0) {
        return Err(Error::Degenerate("zero initial state".into()));
    }
    let last = *norms.last().expect("non-empty");
    if !(last > 0.0) {
        return Err(Error::Degenerate("state vanished exactly".into()));
    }
    let drop = n0 / last;
    if !(drop >= 10.0) {
        return Err(Error::Degenerate(format!(
            "norm dropped only by {drop:.3}x, need 10x"
        )));
    }
    let start = norms.len() / 2;
    let (ts, ys): (Vec<f64>, Vec<f64>) = times[start..]
        .iter()
        .zip(&norms[start..])
        .map(|(t, n)| (*t, n.ln()))
        .unzip();
    let k = ts.len() as f64;
    let tm = ts.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxy: f64 = ts.iter().zip(&ys).map(|(t, y)| (t - tm) * (y - ym)).sum();
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let omega = -sxy / sxx;
    if !(omega > 0.0) {
        return Err(Error::Degenerate(format!(
            "fitted rate {omega} is not positive"
        )));
    }
    let prefactor = times
        .iter()
        .zip(norms)
        .map(|(t, n)| n * (omega * t).exp() / n0)
        .fold(1.0, f64::max);
    Ok(DecayFit {
        omega,
        prefactor,
        drop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::assemble_generator;
    use crate::model::RescaledModel;
    use crate::operator::SampledFunction;

    fn reference(n: usize) -> GeneratorSystem {
        let m = RescaledModel::reference();
        assemble_generator(&m, &Grid::new(n, m.l_tilde).unwrap()).unwrap()
    }

    #[test]
    fn zero_state_stays_zero() {
        let sys = reference(20);
        let tr = simulate(&StateZ::zeros(sys.grid), &sys, 1.0, 0.1).unwrap();
        assert!(tr
            .states
            .iter()
            .all(|s| s.to_vec().iter().all(|x| *x == 0.0)));
        let p = PhysicalParams::reference();
        let k = ControllerGains::reference();
        let et = energies(&tr, &sys, &p, &k).unwrap();
        assert!(et
            .v
            .iter()
            .chain(&et.hbar)
            .chain(&et.vbar)
            .all(|x| *x == 0.0));
        assert_eq!(
            verify_energy_identity(&et, ENERGY_IDENTITY_C).max_residual,
            0.0
        );
        assert!(decay_fit(&tr, &sys.m_h).is_err());
    }

    #[test]
    fn constant_deflection_contracts() {
        let sys = reference(50);
        let z0 = StateZ::new(
            SampledFunction::from_fn(sys.grid, |_| 0.1),
            SampledFunction::zeros(sys.grid),
        )
        .unwrap();
        let tr = simulate(&z0, &sys, 20.0, default_dt(&sys)).unwrap();
        let norms = h_norms(&tr, &sys.m_h);
        for w in norms.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn linear_deflection_energy() {
        // w = 1 - x / L in physical coordinates, v = 0.
        let sys = reference(200);
        let l = sys.model.l_tilde;
        let z = StateZ::new(
            SampledFunction::from_fn(sys.grid, |x| 1.0 - x / l),
            SampledFunction::zeros(sys.grid),
        )
        .unwrap();
        let e = physical_energies(
            &z.to_vec(),
            &sys,
            &PhysicalParams::reference(),
            &ControllerGains::reference(),
        );
        assert!((e.hbar - 7.3575).abs() < 1e-10, "{}", e.hbar);
        assert!(e.v >= e.vbar && e.vbar >= e.hbar);
    }

    #[test]
    fn real_eigenmode_decays_at_its_rate() {
        let sys = reference(100);
        let eig = sys.a_h.as_ref().eigen().unwrap();
        let (s, u) = (eig.S(), eig.U());
        // Real eigenvalue of the physical slow branch.
        let k = (0..sys.dim())
            .filter(|&i| s[i].im.abs() < 1e-9 && s[i].re < -0.1 && s[i].re > -0.5)
            .max_by(|&a, &b| s[a].re.total_cmp(&s[b].re))
            .expect("real eigenvalue");
        let lambda = s[k].re;
        let z: Vec<f64> = (0..sys.dim()).map(|i| u[(i, k)].re).collect();
        let z0 = StateZ::from_vec(sys.grid, &z).unwrap();
        let t_end = 3.0 / lambda.abs();
        let tr = simulate(&z0, &sys, t_end, 0.01).unwrap();
        let norms = h_norms(&tr, &sys.m_h);
        for (t, n) in tr.times.iter().zip(&norms) {
            let expect = norms[0] * (lambda * t).exp();
            assert!((n / expect - 1.0).abs() < 0.02);
        }
        let fit = decay_fit(&tr, &sys.m_h).unwrap();
        assert!(
            (fit.omega / (-lambda) - 1.0).abs() < 0.05,
            "{fit:?} vs {lambda}"
        );
        assert!(fit.prefactor >= 1.0);
    }

    #[test]
    fn skew_generator_conserves_energy() {
        // Dirichlet wave on interior nodes: the energy v.v + w.K w is exactly
        // conserved by the implicit midpoint rule.
        let n = 30;
        let h = 1.0 / n as f64;
        let m = n - 1;
        let mut a = Mat::<f64>::zeros(2 * m, 2 * m);
        let mut kmat = Mat::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, m + i)] = 1.0;
            kmat[(i, i)] = 2.0 / (h * h);
            a[(m + i, i)] = -2.0 / (h * h);
            if i > 0 {
                a[(m + i, i - 1)] = 1.0 / (h * h);
                kmat[(i, i - 1)] = -1.0 / (h * h);
            }
            if i + 1 < m {
                a[(m + i, i + 1)] = 1.0 / (h * h);
                kmat[(i, i + 1)] = -1.0 / (h * h);
            }
        }
        let energy = |z: &[f64]| {
            let (w, v) = z.split_at(m);
            quadratic(&kmat, w, w) + v.iter().map(|x| x * x).sum::<f64>()
        };
        let cn = CrankNicolson::new(&a, 0.01).unwrap();
        let mut z: Vec<f64> = (0..2 * m)
            .map(|i| {
                if i < m {
                    ((i + 1) as f64 * h * 3.0).sin()
                } else {
                    0.0
                }
            })
            .collect();
        let mut next = vec![0.0; 2 * m];
        let e0 = energy(&z);
        for _ in 0..200 {
            let before = energy(&z);
            cn.step(&z, &mut next);
            std::mem::swap(&mut z, &mut next);
            assert!((energy(&z) - before).abs() <= 1e-10 * e0);
        }
    }

    #[test]
    fn csv_layout() {
        let et = EnergyTrace {
            times: vec![0.0, 0.5],
            hbar: vec![1.0, 0.9],
            vbar: vec![1.5, 1.4],
            v: vec![2.0, 1.8],
            norm_h: vec![1.0, 0.95],
            lhs: vec![-0.4],
            rhs: vec![-0.41],
            dt: 0.5,
            dx: 0.1,
        };
        let mut buf = Vec::new();
        write_energy_csv(&et, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "t,Hbar,Vbar,V,dVdt_lhs,dVdt_rhs,norm_H\n0,1,1.5,2,-0.4,-0.41,1\n0.5,0.9,1.4,1.8,NaN,NaN,0.95\n");
    }
}
