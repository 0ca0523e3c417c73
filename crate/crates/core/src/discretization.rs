//! Finite-difference generator `A_h` and the Gram matrices of both inner
//! products on the state layout `(w_0..w_N, v_0..v_N)`.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub use crate::grid::Grid;

use crate::error::{invalid, Error, Result};
use crate::functions::DomainState;
use crate::grid::{self as stencil};
use crate::model::{check_admissibility, HWeights, RescaledModel};
use crate::operator::{self, FormTerm};

/// Smallest admissible resolution for the generator.
pub const MIN_INTERVALS: usize = 8;

/// Discrete generator with the matching Gram matrices.
#[derive(Clone, Debug)]
pub struct GeneratorSystem {
    pub a_h: Mat<f64>,
    pub m_nat: Mat<f64>,
    pub m_h: Mat<f64>,
    pub grid: Grid,
    pub model: RescaledModel,
    pub weights: HWeights,
}

impl GeneratorSystem {
    pub fn dim(&self) -> usize {
        self.a_h.nrows()
    }

    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        matvec(&self.a_h, z)
    }

    /// `||z||_H`.
    pub fn h_norm(&self, z: &[f64]) -> f64 {
        quadratic(&self.m_h, z, z).max(0.0).sqrt()
    }

    /// `||z||` in the natural norm.
    pub fn nat_norm(&self, z: &[f64]) -> f64 {
        quadratic(&self.m_nat, z, z).max(0.0).sqrt()
    }

    /// `||z||_H` of a complex state.
    pub fn h_norm_c(&self, z: &[Complex64]) -> f64 {
        hermitian(&self.m_h, z, z).re.max(0.0).sqrt()
    }
}

pub(crate) fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    let n = a.nrows();
    let mut y = vec![0.0; n];
    for (j, &xj) in x.iter().enumerate().take(a.ncols()) {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for i in 0..n {
            y[i] += col[i] * xj;
        }
    }
    y
}

fn matvec_c(a: &Mat<f64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = a.nrows();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (j, &xj) in x.iter().enumerate().take(a.ncols()) {
        let col = a.col(j);
        for i in 0..n {
            y[i] += xj * col[i];
        }
    }
    y
}

/// `x^T M y`.
pub(crate) fn quadratic(m: &Mat<f64>, x: &[f64], y: &[f64]) -> f64 {
    matvec(m, y).iter().zip(x).map(|(a, b)| a * b).sum()
}

/// `y^H M x`, linear in `x`.
pub(crate) fn hermitian(m: &Mat<f64>, x: &[Complex64], y: &[Complex64]) -> Complex64 {
    matvec_c(m, x)
        .iter()
        .zip(y)
        .map(|(a, b)| a * b.conj())
        .sum()
}

fn check_grid(m: &RescaledModel, grid: &Grid) -> Result<()> {
    if grid.n() < MIN_INTERVALS {
        return Err(invalid(
            "grid.N",
            format!("need N >= {MIN_INTERVALS}, got {}", grid.n()),
        ));
    }
    if (grid.length() - m.l_tilde).abs() > 1e-12 * m.l_tilde {
        return Err(Error::GridMismatch(format!(
            "grid length {} differs from the model length {}",
            grid.length(),
            m.l_tilde
        )));
    }
    Ok(())
}

/// `A_h` without the admissibility requirement.
pub fn assemble_generator_matrix(m: &RescaledModel, grid: &Grid) -> Result<Mat<f64>> {
    check_grid(m, grid)?;
    let n = grid.n();
    let s = grid.len();
    let mut a = Mat::<f64>::zeros(2 * s, 2 * s);
    for i in 0..s {
        a[(i, s + i)] = 1.0;
    }
    let flux = stencil::flux_rows(grid, &m.tension);
    for (i, row) in flux.iter().enumerate().take(n).skip(1) {
        for &(j, c) in row {
            a[(s + i, j)] += c;
        }
    }
    let d1 = stencil::d1_rows(grid);
    // Payload: v_N' = -w'(L).
    for &(j, c) in &d1[n] {
        a[(s + n, j)] -= c;
    }
    // Cart: v_0' = th1 v(0) + th2 v'(0) + th3 w(0) + th4 w'(0).
    let [t1, t2, t3, t4] = m.theta;
    a[(s, s)] += t1;
    a[(s, 0)] += t3;
    for &(j, c) in &d1[0] {
        a[(s, s + j)] += t2 * c;
        a[(s, j)] += t4 * c;
    }
    Ok(a)
}

fn gram_from_terms(dim: usize, terms: &[FormTerm]) -> Mat<f64> {
    let mut g = Mat::<f64>::zeros(dim, dim);
    for t in terms {
        for &(j, cj) in &t.row {
            for &(k, ck) in &t.row {
                g[(j, k)] += t.weight * cj * ck;
            }
        }
    }
    g
}

/// `(M_nat, M_H)` with `z^T M z` equal to the quadrature inner products.
pub fn assemble_gram(
    m: &RescaledModel,
    grid: &Grid,
    hw: &HWeights,
) -> Result<(Mat<f64>, Mat<f64>)> {
    if !(hw.alpha1 > 0.0 && hw.alpha2 > 0.0 && hw.gamma > 0.0) {
        return Err(invalid(
            "weights",
            "alpha1, alpha2 and gamma must be positive",
        ));
    }
    let dim = 2 * grid.len();
    Ok((
        gram_from_terms(dim, &operator::natural_terms(grid)),
        gram_from_terms(dim, &operator::weighted_terms(grid, &m.tension, hw)),
    ))
}

/// Generator and Grams for an admissible model, weights certified by the
/// parameter checks.
pub fn assemble_generator(m: &RescaledModel, grid: &Grid) -> Result<GeneratorSystem> {
    let rep = check_admissibility(m);
    if !rep.admissible {
        return Err(Error::NotAdmissible(rep.violations.join(", ")));
    }
    let weights = HWeights::for_model(m)?;
    let a_h = assemble_generator_matrix(m, grid)?;
    let (m_nat, m_h) = assemble_gram(m, grid, &weights)?;
    Ok(GeneratorSystem {
        a_h,
        m_nat,
        m_h,
        grid: *grid,
        model: m.clone(),
        weights,
    })
}

/// `Re(z^T M_H A_h z) / (z^T M_H z)`.
pub fn rayleigh_residual(sys: &GeneratorSystem, z: &[f64]) -> f64 {
    quadratic(&sys.m_h, z, &sys.apply(z)) / quadratic(&sys.m_h, z, z)
}

/// Complex version of [`rayleigh_residual`].
pub fn rayleigh_residual_c(sys: &GeneratorSystem, z: &[Complex64]) -> f64 {
    let az = matvec_c(&sys.a_h, z);
    hermitian(&sys.m_h, &az, z).re / hermitian(&sys.m_h, z, z).re
}

/// Outcome of a sampled dissipativity check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DissipativityReport {
    pub n: usize,
    pub dx: f64,
    pub samples: usize,
    /// Whether the parameter checks certify dissipativity at all.
    pub certified: bool,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub kappa: Option<f64>,
    /// `max_ratio <= kappa dx`, when `kappa` is given.
    pub passed: Option<bool>,
}

/// Modes used for random domain states.
pub const SAMPLE_MODES: usize = 6;

/// Smooth random domain states, alternating generic and boundary-neutral.
/// The same seed gives the same functions on every grid.
pub fn sample_domain_states(
    sys_model: &RescaledModel,
    hw: &HWeights,
    samples: usize,
    seed: u64,
) -> Vec<DomainState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples)
        .map(|k| DomainState::random(&mut rng, sys_model, hw, SAMPLE_MODES, k % 2 == 1))
        .collect()
}

/// Max of `r(z)` over `samples` random smooth domain states.
pub fn dissipativity_check(
    sys: &GeneratorSystem,
    samples: usize,
    seed: u64,
    kappa: Option<f64>,
) -> DissipativityReport {
    let states = sample_domain_states(&sys.model, &sys.weights, samples, seed);
    let mut max_ratio = f64::NEG_INFINITY;
    let mut min_ratio = f64::INFINITY;
    for s in &states {
        let z = s.sample(sys.grid).to_vec();
        let r = rayleigh_residual(sys, &z);
        max_ratio = max_ratio.max(r);
        min_ratio = min_ratio.min(r);
    }
    let dx = sys.grid.dx();
    DissipativityReport {
        n: sys.grid.n(),
        dx,
        samples,
        certified: true,
        max_ratio,
        min_ratio,
        kappa,
        passed: kappa.map(|k| max_ratio <= k * dx),
    }
}

/// Dissipativity check that reports "not certified" for parameters outside
/// the admissible set instead of failing.
pub fn certify_dissipativity(
    m: &RescaledModel,
    grid: &Grid,
    samples: usize,
    seed: u64,
    kappa: Option<f64>,
) -> Result<DissipativityReport> {
    match assemble_generator(m, grid) {
        Ok(sys) => Ok(dissipativity_check(&sys, samples, seed, kappa)),
        Err(Error::NotAdmissible(_)) => Ok(DissipativityReport {
            n: grid.n(),
            dx: grid.dx(),
            samples: 0,
            certified: false,
            max_ratio: f64::NAN,
            min_ratio: f64::NAN,
            kappa,
            passed: None,
        }),
        Err(e) => Err(e),
    }
}

/// Safety factor applied to the calibrated slope.
pub const KAPPA_SAFETY: f64 = 4.0;

/// `kappa = KAPPA_SAFETY * max(r, 0) / dx` measured at `N = 100`.
pub fn calibrate_kappa(m: &RescaledModel, samples: usize, seed: u64) -> Result<f64> {
    let grid = Grid::new(100, m.l_tilde)?;
    let sys = assemble_generator(m, &grid)?;
    let rep = dissipativity_check(&sys, samples, seed, None);
    Ok(KAPPA_SAFETY * rep.max_ratio.max(0.0) / grid.dx())
}

/// Dense row-major dump, one row per line, space separated.
pub fn write_matrix(mat: &Mat<f64>, out: &mut (impl Write + ?Sized)) -> std::io::Result<()> {
    for i in 0..mat.nrows() {
        let row: Vec<String> = (0..mat.ncols())
            .map(|j| format!("{}", mat[(i, j)]))
            .collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}
