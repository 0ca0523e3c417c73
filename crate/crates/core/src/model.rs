//! Physical constants, controller gains, the coefficient pipeline from the
//! physical control law to the rescaled boundary dynamics, and the parameter
//! checks that certify well-posedness and dissipativity.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operator::TensionProfile;

/// Crane constants in SI units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Mass per unit length of the chain.
    pub rho: f64,
    /// Chain length.
    #[serde(rename = "L")]
    pub length: f64,
    /// Payload mass.
    pub m_p: f64,
    /// Cart mass.
    pub m_c: f64,
    /// Gravitational acceleration.
    pub g: f64,
}

impl PhysicalParams {
    /// Unit chain, unit masses, g = 9.81.
    pub fn reference() -> Self {
        Self {
            rho: 1.0,
            length: 1.0,
            m_p: 1.0,
            m_c: 1.0,
            g: 9.81,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("rho", self.rho),
            ("L", self.length),
            ("m_p", self.m_p),
            ("m_c", self.m_c),
            ("g", self.g),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        Ok(())
    }

    /// Chain tension `P(x) = g (rho (L - x) + m_p)` in physical coordinates.
    pub fn tension(&self, x: f64) -> f64 {
        self.g * (self.rho * (self.length - x) + self.m_p)
    }

    /// `P(0)`, tension at the cart.
    pub fn tension_top(&self) -> f64 {
        self.tension(0.0)
    }

    /// `P(L)`, tension at the payload.
    pub fn tension_bottom(&self) -> f64 {
        self.tension(self.length)
    }

    /// `s_x = P(L) rho / m_p`.
    pub fn length_scale(&self) -> f64 {
        self.tension_bottom() * self.rho / self.m_p
    }

    /// `s_t = P(L) sqrt(rho) / m_p`.
    pub fn time_scale(&self) -> f64 {
        self.tension_bottom() * self.rho.sqrt() / self.m_p
    }

    /// Lower bound on `chi3` from the physical constants,
    /// `(m_p - P(L) sqrt(rho))^2 / (4 m_p P(L) sqrt(rho))`.
    pub fn chi3_threshold(&self) -> f64 {
        let q = self.tension_bottom() * self.rho.sqrt();
        (self.m_p - q).powi(2) / (4.0 * self.m_p * q)
    }
}

/// Backstepping tuning gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    pub chi1: f64,
    pub chi2: f64,
    pub chi3: f64,
}

impl ControllerGains {
    pub fn reference() -> Self {
        Self {
            chi1: 1.0,
            chi2: 1.0,
            chi3: 2.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("chi1", self.chi1),
            ("chi2", self.chi2),
            ("chi3", self.chi3),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(
                    name,
                    format!("must be finite and > 0, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

/// Coefficients of the physical control law
/// `u = v1 v(0) + v2 v_x(0) + v3 w(0) + v4 w_x(0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalThetas {
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub v4: f64,
}

/// Control-law coefficients produced by the backstepping design.
///
/// Gains are only required to be finite and non-negative so that the
/// zero-gain limit can be evaluated.
pub fn derive_physical_thetas(p: &PhysicalParams, k: &ControllerGains) -> Result<PhysicalThetas> {
    p.validate()?;
    for (name, value) in [("chi1", k.chi1), ("chi2", k.chi2), ("chi3", k.chi3)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(invalid(
                name,
                format!("must be finite and >= 0, got {value}"),
            ));
        }
    }
    let p0 = p.tension_top();
    let mc = p.m_c;
    Ok(PhysicalThetas {
        v1: -(k.chi3 + k.chi2 + 1.0) * mc,
        v2: k.chi1 * p0 * mc,
        v3: -k.chi3 * k.chi2 * mc,
        v4: (k.chi3 * k.chi1 * mc - 1.0) * p0,
    })
}

/// Closed loop in dimensionless coordinates: `w_tt = (P w_x)_x` on
/// `(0, L_tilde)`, `w_tt(L_tilde) = -w_x(L_tilde)` and
/// `w_tt(0) = th1 v(0) + th2 v_x(0) + th3 w(0) + th4 w_x(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RescaledModel {
    pub s_x: f64,
    pub s_t: f64,
    pub l_tilde: f64,
    pub theta: [f64; 4],
    pub tension: TensionProfile,
}

/// Rescale length and time so the payload equation has unit coefficient and
/// merge the cart tension term into `theta4`.
pub fn rescale(p: &PhysicalParams, v: &PhysicalThetas) -> Result<RescaledModel> {
    p.validate()?;
    let s_x = p.length_scale();
    let s_t = p.time_scale();
    let mc = p.m_c;
    let theta = [
        v.v1 / (mc * s_t),
        v.v2 * s_x / (mc * s_t),
        v.v3 / (mc * s_t * s_t),
        (v.v4 + p.tension_top()) * s_x / (mc * s_t * s_t),
    ];
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(invalid("thetas", "rescaled coefficients are not finite"));
    }
    let l_tilde = s_x * p.length;
    let tension = TensionProfile::affine(p.tension_top(), -p.g * p.rho / s_x, l_tilde)?;
    Ok(RescaledModel {
        s_x,
        s_t,
        l_tilde,
        theta,
        tension,
    })
}

impl RescaledModel {
    /// REF crane with REF gains.
    pub fn reference() -> Self {
        let p = PhysicalParams::reference();
        let k = ControllerGains::reference();
        rescale(
            &p,
            &derive_physical_thetas(&p, &k).expect("reference gains"),
        )
        .expect("reference parameters")
    }

    /// Model given directly in rescaled form (unit scale factors).
    pub fn from_parts(theta: [f64; 4], tension: TensionProfile) -> Self {
        Self {
            s_x: 1.0,
            s_t: 1.0,
            l_tilde: tension.length(),
            theta,
            tension,
        }
    }

    pub fn p_top(&self) -> f64 {
        self.tension.eval(0.0)
    }

    pub fn p_bottom(&self) -> f64 {
        self.tension.eval(self.l_tilde)
    }

    /// `(1 - s_t)^2 / (4 s_t)`; equals [`PhysicalParams::chi3_threshold`]
    /// because `s_t = P(L) sqrt(rho) / m_p`.
    pub fn chi3_threshold(&self) -> f64 {
        (1.0 - self.s_t).powi(2) / (4.0 * self.s_t)
    }
}

/// Outcome of the parameter checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    pub a: f64,
    pub b: f64,
    /// `4ab - (a + b - 1)^2`.
    pub parabola_margin: f64,
    pub chi3_threshold: f64,
    pub gamma_max: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub admissible: bool,
    /// Keys of violated conditions, empty when admissible.
    pub violations: Vec<String>,
}

/// `4ab - (a + b - 1)^2`.
pub fn parabola_margin(a: f64, b: f64) -> f64 {
    4.0 * a * b - (a + b - 1.0).powi(2)
}

pub fn check_admissibility(m: &RescaledModel) -> AdmissibilityReport {
    let [t1, t2, t3, t4] = m.theta;
    let mut violations = Vec::new();
    if t2 == 0.0 {
        violations.push("theta2_nonzero".to_string());
    }
    if t4 == 0.0 {
        violations.push("theta4_nonzero".to_string());
    }
    let (a, b) = if violations.is_empty() {
        let b = t4 / t2;
        (t3 / b - t1, b)
    } else {
        (f64::NAN, f64::NAN)
    };
    let margin = parabola_margin(a, b);
    for (key, ok) in [
        ("sign_theta1", t1 < 0.0),
        ("sign_theta2", t2 > 0.0),
        ("sign_theta3", t3 < 0.0),
        ("sign_theta4", t4 > 0.0),
        ("a_positive", a > 0.0),
        ("b_positive", b > 0.0),
        ("parabola", margin > 0.0),
    ] {
        if !ok {
            violations.push(key.to_string());
        }
    }
    let admissible = violations.is_empty();
    let (gamma_max, gamma, alpha1, alpha2) = if admissible {
        let gmax = gamma_max(a, b);
        (
            Some(gmax),
            Some(0.5 * gmax),
            Some(t2 / (2.0 * m.p_top())),
            Some(-t2 * t3 / (2.0 * t4)),
        )
    } else {
        (None, None, None, None)
    };
    AdmissibilityReport {
        a,
        b,
        parabola_margin: margin,
        chi3_threshold: m.chi3_threshold(),
        gamma_max,
        gamma,
        alpha1,
        alpha2,
        admissible,
        violations,
    }
}

/// `(alpha1, alpha2) = (th2 / (2 P(0)), -th2 th3 / (2 th4))`.
pub fn inner_product_weights(m: &RescaledModel) -> Result<(f64, f64)> {
    let [_, t2, t3, t4] = m.theta;
    if t3 == 0.0 {
        return Err(Error::Degenerate("theta3 = 0 gives alpha2 = 0".into()));
    }
    if t4 == 0.0 {
        return Err(Error::Degenerate("theta4 = 0".into()));
    }
    let alpha1 = t2 / (2.0 * m.p_top());
    let alpha2 = -t2 * t3 / (2.0 * t4);
    if !(alpha1 > 0.0 && alpha2 > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "weights must be positive, got alpha1 = {alpha1}, alpha2 = {alpha2}"
        )));
    }
    Ok((alpha1, alpha2))
}

fn gamma_max(a: f64, b: f64) -> f64 {
    let ratio = (a + b - 1.0).powi(2) / (4.0 * a * b);
    (4.0 / a.max(b)).min(4.0 * (1.0 - ratio))
}

/// Midpoint of the admissible interval `(0, gamma_max)`.
pub fn select_gamma(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "a = {a}, b = {b} must be positive"
        )));
    }
    let gmax = gamma_max(a, b);
    if !(gmax > 0.0) {
        return Err(Error::NotAdmissible(format!(
            "(a+b-1)^2 >= 4ab for a = {a}, b = {b}; no gamma exists"
        )));
    }
    Ok(0.5 * gmax)
}

/// Off-diagonal entries `(alpha, beta, delta)` of the unit-diagonal 3x3 form
/// arising in the dissipation estimate.
pub fn p3_coefficients(a: f64, b: f64, gamma: f64) -> (f64, f64, f64) {
    (
        (a + b - 1.0) / (2.0 * (a * b).sqrt()),
        (b * gamma).sqrt() / 2.0,
        (a * gamma).sqrt() / 2.0,
    )
}

/// Positive semi-definiteness of `[[1, a, b], [a, 1, d], [b, d, 1]]` via its
/// principal minors.
pub fn check_p3(alpha: f64, beta: f64, delta: f64) -> bool {
    let (a2, b2, d2) = (alpha * alpha, beta * beta, delta * delta);
    a2 <= 1.0 && b2 <= 1.0 && d2 <= 1.0 && a2 + b2 + d2 <= 1.0 + 2.0 * alpha * beta * delta
}

/// Constants `(c, d)` with `(a x1 + b x2)^2 + eps x1^2 >= c x1^2 + d x2^2`
/// for all `|a| <= a0`, `b >= b0`, `eps >= eps0`.
pub fn lem_a1_constants(a0: f64, b0: f64, eps0: f64) -> Result<(f64, f64)> {
    if !(a0 >= 0.0 && a0.is_finite()) {
        return Err(invalid("a0", "must be finite and >= 0"));
    }
    if !(b0 > 0.0 && b0.is_finite()) {
        return Err(invalid("b0", "must be finite and > 0"));
    }
    if !(eps0 > 0.0 && eps0.is_finite()) {
        return Err(invalid("eps0", "must be finite and > 0"));
    }
    if a0 == 0.0 {
        return Ok((eps0, b0 * b0));
    }
    let d = b0 * b0 * eps0 / (2.0 * (a0 * a0 + eps0));
    let c = eps0 - a0 * a0 * d / (b0 * b0 - d);
    Ok((c, d))
}

/// Weights of the energy inner product.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HWeights {
    pub alpha1: f64,
    pub alpha2: f64,
    pub gamma: f64,
}

impl HWeights {
    /// Weights certified for an admissible model.
    pub fn for_model(m: &RescaledModel) -> Result<Self> {
        let rep = check_admissibility(m);
        if !rep.admissible {
            return Err(Error::NotAdmissible(rep.violations.join(", ")));
        }
        let (alpha1, alpha2) = inner_product_weights(m)?;
        Ok(Self {
            alpha1,
            alpha2,
            gamma: select_gamma(rep.a, rep.b)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn reference_physical_thetas() {
        let p = PhysicalParams::reference();
        let v = derive_physical_thetas(&p, &ControllerGains::reference()).unwrap();
        assert!(close(p.tension_top(), 19.62, 1e-14));
        assert!(close(p.tension_bottom(), 9.81, 1e-14));
        assert!(close(v.v1, -4.5, 1e-14));
        assert!(close(v.v2, 19.62, 1e-14));
        assert!(close(v.v3, -2.5, 1e-14));
        assert!(close(v.v4, 29.43, 1e-14));
    }

    #[test]
    fn zero_gain_limit() {
        let p = PhysicalParams::reference();
        let z = ControllerGains {
            chi1: 0.0,
            chi2: 0.0,
            chi3: 0.0,
        };
        let v = derive_physical_thetas(&p, &z).unwrap();
        assert_eq!((v.v1, v.v2, v.v3, v.v4), (-1.0, 0.0, 0.0, -19.62));
    }

    #[test]
    fn theta4_root() {
        let p = PhysicalParams {
            m_c: 2.0,
            ..PhysicalParams::reference()
        };
        let k = ControllerGains {
            chi1: 0.25,
            chi2: 1.0,
            chi3: 2.0,
        };
        assert_eq!(derive_physical_thetas(&p, &k).unwrap().v4, 0.0);
    }

    #[test]
    fn reference_rescaling() {
        let m = RescaledModel::reference();
        assert!(close(m.s_x, 9.81, 1e-14) && close(m.s_t, 9.81, 1e-14));
        assert!(close(m.l_tilde, 9.81, 1e-14));
        assert!(close(m.theta[0], -0.458_715_596_330_275, 1e-12));
        assert!(close(m.theta[1], 19.62, 1e-12));
        assert!(close(m.theta[2], -0.025_977_777_569_956, 1e-12));
        assert!(close(m.theta[3], 5.0, 1e-12));
        assert!(close(m.p_top(), 19.62, 1e-12));
        assert!(close(m.p_bottom(), 9.81, 1e-12));
    }

    #[test]
    fn identity_scaling_keeps_merged_coefficients() {
        // P(L) = g m_p, so g = rho = 1 gives unit scale factors.
        let p = PhysicalParams {
            rho: 1.0,
            length: 2.0,
            m_p: 4.0,
            m_c: 3.0,
            g: 1.0,
        };
        assert!(close(p.length_scale(), 1.0, 1e-15) && close(p.time_scale(), 1.0, 1e-15));
        let v = PhysicalThetas {
            v1: -1.0,
            v2: 2.0,
            v3: -3.0,
            v4: 4.0,
        };
        let m = rescale(&p, &v).unwrap();
        let p0 = p.tension_top();
        let expect = [-1.0 / 3.0, 2.0 / 3.0, -1.0, (4.0 + p0) / 3.0];
        for (t, e) in m.theta.iter().zip(expect) {
            assert!(close(*t, e, 1e-13));
        }
    }

    /// Chain-rule oracle: a smooth trajectory evaluated in both coordinate
    /// systems satisfies both forms of the cart equation with the residual
    /// force carried by the physical control law.
    #[test]
    fn rescaling_chain_rule_oracle() {
        let p = PhysicalParams {
            rho: 1.7,
            length: 0.8,
            m_p: 2.3,
            m_c: 1.4,
            g: 9.81,
        };
        let k = ControllerGains {
            chi1: 0.7,
            chi2: 1.3,
            chi3: 2.1,
        };
        let v = derive_physical_thetas(&p, &k).unwrap();
        let m = rescale(&p, &v).unwrap();
        // w(x, t) = sin(1.3 t + 0.4) cos(2.1 x) + x t^2
        let w = |x: f64, t: f64| (1.3 * t + 0.4).sin() * (2.1 * x).cos() + x * t * t;
        let h = 1e-4;
        let (x0, t0) = (0.0, 0.37);
        let d_t = |x: f64, t: f64| (w(x, t + h) - w(x, t - h)) / (2.0 * h);
        let d_x = |x: f64, t: f64| (w(x + h, t) - w(x - h, t)) / (2.0 * h);
        let wtt = (w(x0, t0 + h) - 2.0 * w(x0, t0) + w(x0, t0 - h)) / (h * h);
        let vx = (d_t(x0 + h, t0) - d_t(x0 - h, t0)) / (2.0 * h);
        let force = v.v1 * d_t(x0, t0) + v.v2 * vx + v.v3 * w(x0, t0) + v.v4 * d_x(x0, t0);
        // Physical residual of m_c w_tt = u + P(0) w_x.
        let phys_res = p.m_c * wtt - force - p.tension_top() * d_x(x0, t0);
        // The same function in rescaled variables.
        let (sx, st) = (m.s_x, m.s_t);
        let wr = |xr: f64, tr: f64| w(xr / sx, tr / st);
        let (xr, tr) = (x0 * sx, t0 * st);
        let hr = 1e-3;
        let dt_r = |a: f64, b: f64| (wr(a, b + hr) - wr(a, b - hr)) / (2.0 * hr);
        let wtt_r = (wr(xr, tr + hr) - 2.0 * wr(xr, tr) + wr(xr, tr - hr)) / (hr * hr);
        let vx_r = (dt_r(xr + hr, tr) - dt_r(xr - hr, tr)) / (2.0 * hr);
        let wx_r = (wr(xr + hr, tr) - wr(xr - hr, tr)) / (2.0 * hr);
        let [t1, t2, t3, t4] = m.theta;
        let resc_res = wtt_r - (t1 * dt_r(xr, tr) + t2 * vx_r + t3 * wr(xr, tr) + t4 * wx_r);
        // Rescaled residual equals the physical one divided by m_c s_t^2.
        assert!((resc_res - phys_res / (p.m_c * st * st)).abs() < 1e-6 * (1.0 + phys_res.abs()));
    }

    #[test]
    fn reference_admissibility() {
        let r = check_admissibility(&RescaledModel::reference());
        assert!(r.admissible, "{:?}", r.violations);
        assert!(close(r.a, 0.356_778_797_145_77, 1e-10));
        assert!(close(r.b, 0.254_841_997_961_26, 1e-10));
        assert!(close((r.a + r.b - 1.0).powi(2), 0.150_87, 1e-4));
        assert!(close(4.0 * r.a * r.b, 0.363_70, 1e-4));
        assert!(close(r.chi3_threshold, 1.977_984_199_796_126, 1e-12));
        assert!(close(r.gamma_max.unwrap(), 2.341_017_142_857_143, 1e-12));
        assert!(close(r.gamma.unwrap(), 1.170_508_571_428_571, 1e-12));
    }

    #[test]
    fn chi3_threshold_forms_agree() {
        let p = PhysicalParams::reference();
        assert!(close(
            p.chi3_threshold(),
            RescaledModel::reference().chi3_threshold(),
            1e-14
        ));
    }

    #[test]
    fn parabola_examples() {
        assert!(parabola_margin(1.0, 1.0) > 0.0);
        assert!(close(parabola_margin(3.0, 0.1), 1.2 - 4.41, 1e-12));
    }

    #[test]
    fn vanishing_theta_is_reported() {
        let mut m = RescaledModel::reference();
        m.theta[1] = 0.0;
        let r = check_admissibility(&m);
        assert!(!r.admissible && r.violations.iter().any(|v| v == "theta2_nonzero"));
    }

    #[test]
    fn reference_weights() {
        let (a1, a2) = inner_product_weights(&RescaledModel::reference()).unwrap();
        assert!(close(a1, 0.5, 1e-14));
        assert!(close(a2, 0.050_968_399_592_253, 1e-12));
    }

    #[test]
    fn alpha1_unity() {
        let mut m = RescaledModel::reference();
        m.theta[1] = 2.0 * m.p_top();
        assert!(close(inner_product_weights(&m).unwrap().0, 1.0, 1e-15));
    }

    #[test]
    fn alpha2_degenerates_with_theta3() {
        let mut m = RescaledModel::reference();
        m.theta[2] = -1e-14;
        let (_, a2) = inner_product_weights(&m).unwrap();
        assert!(a2 > 0.0 && a2 < 1e-12);
        m.theta[2] = 0.0;
        assert!(inner_product_weights(&m).is_err());
    }

    #[test]
    fn gamma_examples() {
        assert!(close(select_gamma(1.0, 1.0).unwrap(), 1.5, 1e-15));
        // a = 1, b = 4: (a + b - 1)^2 = 16 = 4ab.
        assert!(select_gamma(1.0, 4.0).is_err());
        assert!(select_gamma(3.0, 0.1).is_err());
    }

    #[test]
    fn p3_examples() {
        assert!(check_p3(0.0, 0.0, 0.0));
        assert!(check_p3(1.0, 1.0, 1.0));
        assert!(!check_p3(0.9, 0.9, -0.9));
        let r = check_admissibility(&RescaledModel::reference());
        let (al, be, de) = p3_coefficients(r.a, r.b, r.gamma.unwrap());
        assert!(check_p3(al, be, de));
    }

    #[test]
    fn lem_a1_zero_branch() {
        assert_eq!(lem_a1_constants(0.0, 2.0, 0.5).unwrap(), (0.5, 4.0));
    }

    #[test]
    fn lem_a1_grid_oracle() {
        let (c, d) = lem_a1_constants(1.0, 1.0, 1.0).unwrap();
        assert!(c > 0.0 && d > 0.0);
        // Sylvester conditions.
        assert!(1.0 - d >= 0.0 && (1.0 - c) * (1.0 - d) >= d - 1e-15);
        for i in 0..100 {
            for j in 0..100 {
                let x1 = -1.0 + 2.0 * i as f64 / 99.0;
                let x2 = -1.0 + 2.0 * j as f64 / 99.0;
                for a in [-1.0, 1.0] {
                    let lhs = (a * x1 + x2).powi(2) + x1 * x1;
                    assert!(lhs >= c * x1 * x1 + d * x2 * x2 - 1e-14);
                }
            }
        }
    }
}
