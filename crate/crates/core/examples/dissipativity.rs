//! Rayleigh residual of the discrete generator under refinement.
use crane_lab::discretization::{assemble_generator, calibrate_kappa, dissipativity_check, Grid};
use crane_lab::model::RescaledModel;

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let kappa = calibrate_kappa(&m, 200, 7)?;
    println!("kappa = {kappa:.4}");
    for n in [50, 100, 200] {
        let sys = assemble_generator(&m, &Grid::new(n, m.l_tilde)?)?;
        let r = dissipativity_check(&sys, 200, 7, Some(kappa));
        println!(
            "N = {n:3}: max r = {:+.3e}, min r = {:+.3e}, within kappa dx = {:?}",
            r.max_ratio, r.min_ratio, r.passed
        );
    }
    Ok(())
}
