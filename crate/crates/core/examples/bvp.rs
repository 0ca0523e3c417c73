//! One continuous resolvent solve compared with the finite-difference solve.
use crane_lab::discretization::{assemble_generator, Grid};
use crane_lab::functions::{SmoothProfile, TrigSeries};
use crane_lab::model::RescaledModel;
use crane_lab::resolvent_bvp::{compare_with_discrete, solve_resolvent_bvp, BvpOptions};

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let f = SmoothProfile::from_trig(TrigSeries::cosine(1.0, 1.0));
    let g = SmoothProfile::from_trig(TrigSeries::sine(0.5, 2.0));
    let opts = BvpOptions::default();
    let sol = solve_resolvent_bvp(&f, &g, 5.0, &m, &opts)?;
    println!(
        "branch {:?}, gain {:.5}, residual {:.2e}",
        sol.branch, sol.gain, sol.residual
    );
    let sys = assemble_generator(&m, &Grid::new(400, m.l_tilde)?)?;
    for tau in [0.05, 1.0, 5.0] {
        let c = compare_with_discrete(&f, &g, tau, &sys, &opts)?;
        println!(
            "tau = {tau}: relative H difference to N = 400 {:.2e}",
            c.relative_h_error
        );
    }
    Ok(())
}
