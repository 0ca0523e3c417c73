//! Low part of the discrete spectrum and the spectral abscissa.
use crane_lab::discretization::{assemble_generator, Grid};
use crane_lab::model::RescaledModel;
use crane_lab::spectral::spectrum;

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let sys = assemble_generator(&m, &Grid::new(200, m.l_tilde)?)?;
    let rep = spectrum(&sys)?;
    let mut low: Vec<_> = rep
        .eigenvalues
        .iter()
        .filter(|l| l.im >= 0.0)
        .copied()
        .collect();
    low.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    println!(
        "abscissa = {:.6}, rightmost = {:?}",
        rep.abscissa,
        rep.rightmost.first()
    );
    for l in low.iter().take(8) {
        println!("{:+.5} {:+.5}i", l.re, l.im);
    }
    Ok(())
}
