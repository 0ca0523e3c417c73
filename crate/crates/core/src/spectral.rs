//! Spectrum of the discrete generator and resolvent norms along the
//! imaginary axis in the energy norm.

use std::io::Write;

use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::prelude::*;
use faer::{Mat, Par, Side};
use num_complex::Complex64;
use serde::Serialize;

use crate::discretization::GeneratorSystem;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub abscissa: f64,
    /// Eigenvalues whose real part attains the abscissa.
    pub rightmost: Vec<Complex64>,
}

impl SpectrumReport {
    pub fn smallest_modulus(&self) -> f64 {
        self.eigenvalues
            .iter()
            .map(|l| l.norm())
            .fold(f64::INFINITY, f64::min)
    }
}

/// All eigenvalues of a real matrix.
pub fn spectrum_of(a: &Mat<f64>) -> Result<SpectrumReport> {
    let eigenvalues: Vec<Complex64> = a
        .as_ref()
        .eigenvalues()
        .map_err(|e| Error::Eigen(format!("{e:?}")))?
        .into_iter()
        .map(|l| Complex64::new(l.re, l.im))
        .collect();
    if eigenvalues
        .iter()
        .any(|l| !(l.re.is_finite() && l.im.is_finite()))
    {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    let abscissa = eigenvalues
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let scale = eigenvalues.iter().map(|l| l.norm()).fold(1.0, f64::max);
    let rightmost = eigenvalues
        .iter()
        .copied()
        .filter(|l| abscissa - l.re <= 1e-12 * scale)
        .collect();
    Ok(SpectrumReport {
        eigenvalues,
        abscissa,
        rightmost,
    })
}

pub fn spectrum(sys: &GeneratorSystem) -> Result<SpectrumReport> {
    spectrum_of(&sys.a_h)
}

/// One `re im` pair per line with a `re,im` header.
pub fn write_spectrum_csv(
    rep: &SpectrumReport,
    out: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(out, "re,im")?;
    for l in &rep.eigenvalues {
        writeln!(out, "{},{}", l.re, l.im)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Discrete,
    Continuous,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Discrete => "discrete",
            Source::Continuous => "continuous",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ResolventSample {
    pub tau: f64,
    pub norm: f64,
    pub source: Source,
}

/// `B = L^T A_h L^-T` with `M_H = L L^T`, so that the energy norm of any
/// function of `A_h` is the spectral norm of the same function of `B`.
#[derive(Clone, Debug)]
pub struct WeightedResolvent {
    b: Mat<f64>,
}

impl WeightedResolvent {
    pub fn new(sys: &GeneratorSystem) -> Result<Self> {
        let llt = sys
            .m_h
            .llt(Side::Lower)
            .map_err(|e| Error::Singular(format!("energy Gram is not positive definite: {e:?}")))?;
        let l = llt.L();
        let n = sys.dim();
        // Y = L^-1 A^T, hence A L^-T = Y^T.
        let mut y = sys.a_h.transpose().to_owned();
        solve_lower_triangular_in_place(l, y.as_mut(), Par::Seq);
        let b = l.transpose() * y.transpose();
        debug_assert_eq!(b.nrows(), n);
        Ok(Self { b })
    }

    /// `||(i tau - A_h)^-1||_H`.
    pub fn norm(&self, tau: f64) -> Result<f64> {
        let n = self.b.nrows();
        let m = Mat::<c64>::from_fn(n, n, |i, j| {
            let d = if i == j { tau } else { 0.0 };
            c64::new(-self.b[(i, j)], d)
        });
        let sv = m
            .singular_values()
            .map_err(|e| Error::Eigen(format!("singular values: {e:?}")))?;
        let (smax, smin) = (sv[0], *sv.last().expect("non-empty"));
        if !(smin > 1e-13 * smax) {
            return Err(Error::NearSingular {
                tau,
                sigma_min: smin,
            });
        }
        Ok(1.0 / smin)
    }
}

/// Energy-norm resolvent at a single frequency.
pub fn resolvent_norm_discrete(sys: &GeneratorSystem, tau: f64) -> Result<ResolventSample> {
    Ok(ResolventSample {
        tau,
        norm: WeightedResolvent::new(sys)?.norm(tau)?,
        source: Source::Discrete,
    })
}

/// Energy-norm resolvent over a frequency list, one factorization of the
/// Gram matrix shared by all samples.
pub fn sweep_discrete(sys: &GeneratorSystem, taus: &[f64]) -> Result<Vec<ResolventSample>> {
    let wr = WeightedResolvent::new(sys)?;
    taus.iter()
        .map(|&tau| {
            Ok(ResolventSample {
                tau,
                norm: wr.norm(tau)?,
                source: Source::Discrete,
            })
        })
        .collect()
}

/// Solves `(A_h - i tau) z = rhs`, the sign convention of the continuous
/// resolvent problem.
pub fn resolve_discrete(
    sys: &GeneratorSystem,
    tau: f64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    resolve_discrete_many(sys, tau, &[rhs.to_vec()]).map(|mut v| v.remove(0))
}

/// [`resolve_discrete`] for several right-hand sides with one factorization.
pub fn resolve_discrete_many(
    sys: &GeneratorSystem,
    tau: f64,
    rhs: &[Vec<Complex64>],
) -> Result<Vec<Vec<Complex64>>> {
    let n = sys.dim();
    if rhs.iter().any(|r| r.len() != n) {
        return Err(Error::GridMismatch(format!(
            "right-hand side length differs from {n}"
        )));
    }
    let m = Mat::<c64>::from_fn(n, n, |i, j| {
        let d = if i == j { -tau } else { 0.0 };
        c64::new(sys.a_h[(i, j)], d)
    });
    let lu = m.partial_piv_lu();
    let mut b = Mat::<c64>::from_fn(n, rhs.len(), |i, k| c64::new(rhs[k][i].re, rhs[k][i].im));
    lu.solve_in_place(b.as_mut());
    let out: Vec<Vec<Complex64>> = (0..rhs.len())
        .map(|k| {
            (0..n)
                .map(|i| Complex64::new(b[(i, k)].re, b[(i, k)].im))
                .collect()
        })
        .collect();
    if out
        .iter()
        .flatten()
        .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::NearSingular {
            tau,
            sigma_min: 0.0,
        });
    }
    Ok(out)
}

/// `n` points from `a` to `b`, geometric when `log`.
pub fn tau_grid(a: f64, b: f64, n: usize, log: bool) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|k| {
            let s = k as f64 / (n - 1) as f64;
            if k == 0 {
                a
            } else if k == n - 1 {
                b
            } else if log {
                (a.ln() + s * (b.ln() - a.ln())).exp()
            } else {
                a + s * (b - a)
            }
        })
        .collect()
}

/// Threshold on the log-log slope of the last decade regarded as flat.
pub const FLAT_SLOPE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HuangVerdict {
    /// "consistent-with-exponential-stability" or "inconclusive".
    pub verdict: String,
    pub consistent: bool,
    pub abscissa: f64,
    pub sup_norm: f64,
    pub sup_tau: f64,
    pub interior_max: bool,
    /// Least-squares slope of `log norm` against `log tau` over the last decade.
    pub tail_slope: f64,
    pub tail_flat: bool,
    pub reasons: Vec<String>,
}

/// Evidence for exponential stability from a finite sweep and the spectrum.
pub fn huang_verdict(samples: &[ResolventSample], report: &SpectrumReport) -> Result<HuangVerdict> {
    if samples.is_empty() {
        return Err(Error::Degenerate("empty resolvent sweep".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.tau.total_cmp(&b.tau));
    let (imax, best) = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm.total_cmp(&b.1.norm))
        .expect("non-empty");
    let interior_max = imax > 0 && imax + 1 < s.len();
    let tau_end = s.last().expect("non-empty").tau;
    let tail: Vec<(f64, f64)> = s
        .iter()
        .filter(|r| r.tau >= tau_end / 10.0 && r.tau > 0.0)
        .map(|r| (r.tau.ln(), r.norm.ln()))
        .collect();
    let tail_slope = if tail.len() >= 2 {
        let k = tail.len() as f64;
        let xm = tail.iter().map(|p| p.0).sum::<f64>() / k;
        let ym = tail.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = tail.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - xm).powi(2)).sum();
        sxy / sxx
    } else {
        f64::NAN
    };
    let tail_flat = tail_slope <= FLAT_SLOPE;
    let mut reasons = Vec::new();
    if !(report.abscissa < 0.0) {
        reasons.push(format!(
            "spectral abscissa {} is not negative",
            report.abscissa
        ));
    }
    if !interior_max {
        reasons.push(format!(
            "sampled maximum sits at the sweep end tau = {}",
            best.tau
        ));
    }
    if !tail_flat {
        reasons.push(format!(
            "last decade grows with log-log slope {tail_slope:.3}"
        ));
    }
    let consistent = reasons.is_empty();
    Ok(HuangVerdict {
        verdict: if consistent {
            "consistent-with-exponential-stability".into()
        } else {
            "inconclusive".into()
        },
        consistent,
        abscissa: report.abscissa,
        sup_norm: best.norm,
        sup_tau: best.tau,
        interior_max,
        tail_slope,
        tail_flat,
        reasons,
    })
}

/// CSV with columns `tau,norm,source`.
pub fn write_sweep_csv(
    samples: &[ResolventSample],
    out: &mut (impl Write + ?Sized),
) -> std::io::Result<()> {
    writeln!(out, "tau,norm,source")?;
    for s in samples {
        writeln!(out, "{},{},{}", s.tau, s.norm, s.source.as_str())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{assemble_generator, Grid};
    use crate::model::RescaledModel;

    fn reference(n: usize) -> GeneratorSystem {
        let m = RescaledModel::reference();
        assemble_generator(&m, &Grid::new(n, m.l_tilde).unwrap()).unwrap()
    }

    #[test]
    fn block_diagonal_sanity() {
        let mut a = Mat::<f64>::zeros(2, 2);
        a[(0, 0)] = -1.0;
        a[(1, 1)] = -2.0;
        let r = spectrum_of(&a).unwrap();
        let mut re: Vec<f64> = r.eigenvalues.iter().map(|l| l.re).collect();
        re.sort_by(f64::total_cmp);
        assert_eq!(re, vec![-2.0, -1.0]);
        assert_eq!(r.abscissa, -1.0);
        assert_eq!(r.rightmost.len(), 1);
    }

    #[test]
    fn reference_spectrum_is_stable_and_conjugate_closed() {
        let r = spectrum(&reference(100)).unwrap();
        assert_eq!(r.eigenvalues.len(), 202);
        assert!(r.eigenvalues.iter().all(|l| l.re < 0.0));
        for l in &r.eigenvalues {
            let partner = r
                .eigenvalues
                .iter()
                .map(|m| (m - l.conj()).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(partner < 1e-8 * (1.0 + l.norm()));
        }
        assert!(r.smallest_modulus() > 0.05);
    }

    #[test]
    fn resolvent_at_zero_is_inverse_norm() {
        let sys = reference(30);
        let wr = WeightedResolvent::new(&sys).unwrap();
        let n0 = wr.norm(0.0).unwrap();
        // ||A^-1||_H >= ||A^-1 z||_H / ||z||_H for any z.
        let z: Vec<Complex64> = (0..sys.dim())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), 0.0))
            .collect();
        let x = resolve_discrete(&sys, 0.0, &z).unwrap();
        assert!(sys.h_norm_c(&x) / sys.h_norm_c(&z) <= n0 * (1.0 + 1e-10));
        assert!(
            (wr.norm(3.0).unwrap() - wr.norm(-3.0).unwrap()).abs() < 1e-9 * wr.norm(3.0).unwrap()
        );
    }

    #[test]
    fn resolvent_dominates_near_rightmost_eigenvalue() {
        let sys = reference(60);
        let r = spectrum(&sys).unwrap();
        let l = r
            .rightmost
            .iter()
            .copied()
            .max_by(|a, b| a.im.total_cmp(&b.im))
            .unwrap();
        let n = WeightedResolvent::new(&sys).unwrap().norm(l.im).unwrap();
        assert!(n >= 0.5 / l.re.abs(), "{n} vs {}", 1.0 / l.re.abs());
    }

    #[test]
    fn verdicts() {
        let sys = reference(40);
        let r = spectrum(&sys).unwrap();
        let mk = |norms: &[f64]| -> Vec<ResolventSample> {
            let taus = tau_grid(0.1, 1000.0, norms.len(), true);
            taus.iter()
                .zip(norms)
                .map(|(&tau, &norm)| ResolventSample {
                    tau,
                    norm,
                    source: Source::Discrete,
                })
                .collect()
        };
        let hump = mk(&[1.0, 2.0, 5.0, 3.0, 1.0, 0.5, 0.4, 0.3]);
        assert!(huang_verdict(&hump, &r).unwrap().consistent);
        let growing = mk(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let v = huang_verdict(&growing, &r).unwrap();
        assert!(!v.consistent && v.verdict == "inconclusive");
        let shifted = SpectrumReport {
            abscissa: 0.01,
            ..r.clone()
        };
        assert!(!huang_verdict(&hump, &shifted).unwrap().consistent);
        assert!(huang_verdict(&[], &r).is_err());
    }

    #[test]
    fn shifted_generator_has_positive_abscissa() {
        let sys = reference(40);
        let r = spectrum(&sys).unwrap();
        let eps = 2.0 * r.abscissa.abs();
        let mut a = sys.a_h.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += eps;
        }
        assert!(spectrum_of(&a).unwrap().abscissa > 0.0);
    }

    #[test]
    fn tau_grid_endpoints() {
        let t = tau_grid(0.1, 1000.0, 200, true);
        assert_eq!((t[0], t[199]), (0.1, 1000.0));
        assert!(t.windows(2).all(|w| w[1] > w[0]));
    }
}
