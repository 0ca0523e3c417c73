//! Crank-Nicolson run from a bump with the energy identity residual.
use crane_lab::discretization::{assemble_generator, Grid};
use crane_lab::model::{ControllerGains, PhysicalParams, RescaledModel};
use crane_lab::operator::{SampledFunction, StateZ};
use crane_lab::simulation::{energies, h_norms, simulate, verify_energy_identity};

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let sys = assemble_generator(&m, &Grid::new(100, m.l_tilde)?)?;
    let l = m.l_tilde;
    let z0 = StateZ::new(
        SampledFunction::from_fn(sys.grid, |x| 0.1 * (4.0 * x / l * (1.0 - x / l)).powi(6)),
        SampledFunction::zeros(sys.grid),
    )?;
    let tr = simulate(&z0, &sys, 20.0, 0.02)?;
    let norms = h_norms(&tr, &sys.m_h);
    for (t, n) in tr.times.iter().zip(&norms).step_by(100) {
        println!("t = {t:6.2}  ||z||_H = {n:.6}");
    }
    let et = energies(
        &tr,
        &sys,
        &PhysicalParams::reference(),
        &ControllerGains::reference(),
    )?;
    let rep = verify_energy_identity(&et, 10.0);
    println!(
        "energy identity: max residual {:.3e}, right side nonpositive = {}",
        rep.max_residual, rep.rhs_nonpositive
    );
    Ok(())
}
