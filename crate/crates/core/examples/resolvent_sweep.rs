//! Resolvent norm along the imaginary axis from both solvers.
use crane_lab::discretization::{assemble_generator, Grid};
use crane_lab::model::RescaledModel;
use crane_lab::resolvent_bvp::{sweep_continuous, BvpOptions};
use crane_lab::spectral::{huang_verdict, spectrum, sweep_discrete, tau_grid};

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let sys = assemble_generator(&m, &Grid::new(100, m.l_tilde)?)?;
    let taus = tau_grid(0.1, 100.0, 13, true);
    let disc = sweep_discrete(&sys, &taus)?;
    let cont = sweep_continuous(&taus, &m, &BvpOptions::default())?;
    for (d, c) in disc.iter().zip(&cont) {
        println!(
            "tau = {:8.3}  discrete {:8.4}  continuous {:8.4}",
            d.tau, d.norm, c.norm
        );
    }
    let rep = spectrum(&sys)?;
    println!("discrete: {}", huang_verdict(&disc, &rep)?.verdict);
    println!("continuous: {}", huang_verdict(&cont, &rep)?.verdict);
    Ok(())
}
