//! Decay of the Green's integrals I0 and I1 in the frequency.
use crane_lab::functions::TrigSeries;
use crane_lab::model::RescaledModel;
use crane_lab::resolvent_bvp::{appendix_b_scaling_study, BvpOptions};
use crane_lab::spectral::tau_grid;

fn main() -> crane_lab::Result<()> {
    let m = RescaledModel::reference();
    let taus = tau_grid(10.0, 1e3, 9, true);
    let st = appendix_b_scaling_study(
        &taus,
        &TrigSeries::cosine(1.0, 1.0),
        &m.tension,
        &BvpOptions::default(),
    )?;
    for ((t, a), b) in st.taus.iter().zip(&st.sup_i0).zip(&st.sup_i1) {
        println!("tau = {t:8.2}  sup|I0| = {a:.4e}  sup|I1| = {b:.4e}");
    }
    println!("slopes: I0 {:.3}, I1 {:.3}", st.slope_i0, st.slope_i1);
    Ok(())
}
