//! Closed-form inverse of the generator checked against the finite-difference operator.
use std::f64::consts::PI;

use crane_lab::discretization::{assemble_generator, Grid};
use crane_lab::functions::{SmoothFn, TrigSeries};
use crane_lab::model::RescaledModel;
use crane_lab::operator::{invert_a, StateZ};

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let f = TrigSeries::sine(1.0, PI / m.l_tilde);
    let g = TrigSeries::cosine(0.5, 2.0 * PI / m.l_tilde);
    for n in [50, 100, 200, 400] {
        let sys = assemble_generator(&m, &Grid::new(n, m.l_tilde)?)?;
        let (fs, gs) = (f.sample(sys.grid), g.sample(sys.grid));
        let z = invert_a(&fs, &gs, &m)?;
        let target = StateZ::new(fs, gs)?.to_vec();
        let err = sys
            .apply(&z.to_vec())
            .iter()
            .zip(&target)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        println!("N = {n:3}: max |A_h z - (f, g)| = {err:.3e}");
    }
    Ok(())
}
