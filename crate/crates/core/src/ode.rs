//! Dormand-Prince 5(4) integrator reporting the state at prescribed nodes.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step, e.g. a fraction of the local wavelength.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-13,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth-order weights are the last row of A; E = b5 - b4.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `y' = f(x, y)` from `nodes[0]` with `y(nodes[0]) = y0` and
/// returns the solution at every node. Nodes must be increasing.
pub fn integrate<const N: usize>(
    mut f: impl FnMut(f64, &[f64; N]) -> [f64; N],
    y0: [f64; N],
    nodes: &[f64],
    opts: &OdeOptions,
) -> Result<Vec<[f64; N]>> {
    if nodes.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Integration(
            "output nodes must be strictly increasing".into(),
        ));
    }
    let mut out = Vec::with_capacity(nodes.len());
    let Some(&x_start) = nodes.first() else {
        return Ok(out);
    };
    out.push(y0);
    let mut x = x_start;
    let mut y = y0;
    let mut k1 = f(x, &y);
    let span = nodes[nodes.len() - 1] - x_start;
    let mut h = (1e-3 * span).min(opts.h_max);
    let mut steps = 0usize;
    for &target in &nodes[1..] {
        while x < target {
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integration(format!(
                    "step limit {} reached at x = {x}",
                    opts.max_steps
                )));
            }
            let last = h >= target - x;
            let hs = if last { target - x } else { h };
            let mut k = [[0.0; N]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += hs * a * kj[i];
                        }
                    }
                }
                k[s] = f(x + C[s] * hs, &ys);
            }
            // FSAL: the seventh stage is evaluated at the fifth-order solution.
            let mut y_new = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                for i in 0..N {
                    y_new[i] += hs * A[6][j] * kj[i];
                }
            }
            let mut err = 0.0f64;
            for i in 0..N {
                let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * hs;
                let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                return Err(Error::Integration(format!("non-finite state near x = {x}")));
            }
            if err <= 1.0 {
                x = if last { target } else { x + hs };
                y = y_new;
                k1 = k[6];
            }
            let fac = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // Keep the proposed step when the accepted one was a node-clamped remnant.
            let base = if last && err <= 1.0 { h.max(hs) } else { hs };
            h = (base * fac).min(opts.h_max);
            if h < 1e-14 * span.max(1.0) {
                return Err(Error::Integration(format!(
                    "step size underflow at x = {x}"
                )));
            }
        }
        out.push(y);
    }
    Ok(out)
}
