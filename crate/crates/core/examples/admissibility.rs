//! Admissibility of the reference crane and of a gain below the threshold.
use crane_lab::model::{
    check_admissibility, derive_physical_thetas, rescale, ControllerGains, PhysicalParams,
};

fn main() -> crane_lab::Result<()> {
    let p = PhysicalParams::reference();
    println!("chi3 threshold = {:.6}", p.chi3_threshold());
    for chi3 in [2.5, 1.5] {
        let k = ControllerGains {
            chi3,
            ..ControllerGains::reference()
        };
        let m = rescale(&p, &derive_physical_thetas(&p, &k)?)?;
        let r = check_admissibility(&m);
        println!(
            "chi3 = {chi3}: a = {:.6}, b = {:.6}, admissible = {}, gamma = {:?}, alpha = ({:?}, {:?}), violations = {:?}",
            r.a, r.b, r.admissible, r.gamma, r.alpha1, r.alpha2, r.violations
        );
    }
    Ok(())
}
