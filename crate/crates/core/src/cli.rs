//! Subcommand orchestration behind the `crane-lab` binary.
//!
//! Every run writes `report.json` (sorted keys, config echo, tool version)
//! plus tables in the requested format and two-column plot files.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{waves_to_series, Config, Controller, InitialKind};
use crate::discretization::{assemble_generator, GeneratorSystem, Grid, SAMPLE_MODES};
use crate::error::{Error, Result};
use crate::functions::{DomainState, SmoothProfile};
use crate::model::{
    check_admissibility, derive_physical_thetas, rescale, AdmissibilityReport, ControllerGains,
    HWeights, PhysicalThetas, RescaledModel,
};
use crate::operator::{SampledFunction, StateZ};
use crate::resolvent_bvp::{
    appendix_b_scaling_study, compare_with_discrete, solve_resolvent_bvp, sweep_continuous,
    write_solution_profile_csv, write_solutions_csv, BvpOptions,
};
use crate::simulation::{
    decay_fit_norms, default_dt, energies, h_norms, simulate_strided, verify_energy_identity,
    write_energy_csv, ENERGY_IDENTITY_C,
};
use crate::spectral::{
    huang_verdict, spectrum, sweep_discrete, tau_grid, write_spectrum_csv, write_sweep_csv,
};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Check,
    Simulate,
    Spectrum,
    Sweep,
    Bvp,
    Appb,
}

impl Subcommand {
    pub const ALL: [Subcommand; 6] = [
        Subcommand::Check,
        Subcommand::Simulate,
        Subcommand::Spectrum,
        Subcommand::Sweep,
        Subcommand::Bvp,
        Subcommand::Appb,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Check => "check",
            Subcommand::Simulate => "simulate",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Sweep => "sweep",
            Subcommand::Bvp => "bvp",
            Subcommand::Appb => "appb",
        }
    }
}

impl FromStr for Subcommand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| crate::error::invalid("subcommand", format!("unknown subcommand `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(crate::error::invalid(
                "format",
                format!("expected csv or json, got `{s}`"),
            )),
        }
    }
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_ADMISSIBLE: i32 = 2;

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub subcommand: Subcommand,
    pub config: Value,
    pub admissibility: AdmissibilityReport,
    pub results: Value,
    /// Verdict name to outcome, each produced by a module check.
    pub verdicts: BTreeMap<String, String>,
}

/// Plot-ready `(x, y)` series.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: RunReport,
    pub files: Vec<PathBuf>,
}

/// Writes each series to `<name>.dat`, one `x y` pair per line.
pub fn emit_plotdata(plots: &[PlotData], out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in plots {
        let path = out_dir.join(format!("{}.dat", p.name));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        for (x, y) in &p.points {
            writeln!(w, "{x} {y}")?;
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

struct Ctx {
    config: Config,
    model: RescaledModel,
    adm: AdmissibilityReport,
    gains: Option<ControllerGains>,
    out_dir: PathBuf,
    format: Format,
    files: Vec<PathBuf>,
    plots: Vec<PlotData>,
    verdicts: BTreeMap<String, String>,
}

impl Ctx {
    fn table(
        &mut self,
        stem: &str,
        csv: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
        json: impl FnOnce() -> Value,
    ) -> Result<()> {
        let path = match self.format {
            Format::Csv => {
                let path = self.out_dir.join(format!("{stem}.csv"));
                let mut w = BufWriter::new(fs::File::create(&path)?);
                csv(&mut w)?;
                w.flush()?;
                path
            }
            Format::Json => {
                let path = self.out_dir.join(format!("{stem}.json"));
                fs::write(&path, serde_json::to_string_pretty(&json())? + "\n")?;
                path
            }
        };
        self.files.push(path);
        Ok(())
    }

    fn verdict(&mut self, name: &str, ok: bool, yes: &str, no: &str) {
        self.verdicts
            .insert(name.into(), if ok { yes } else { no }.into());
    }

    fn system(&self) -> Result<GeneratorSystem> {
        assemble_generator(
            &self.model,
            &Grid::new(self.config.grid.n, self.model.l_tilde)?,
        )
    }

    fn taus(&self) -> Vec<f64> {
        let s = &self.config.sweep;
        tau_grid(s.tau_min, s.tau_max, s.points, s.log)
    }
}

fn thetas_of(config: &Config) -> Result<(PhysicalThetas, Option<ControllerGains>)> {
    match &config.controller {
        Controller::Gains(k) => Ok((derive_physical_thetas(&config.physical, k)?, Some(*k))),
        Controller::Thetas(t) => Ok((*t, None)),
    }
}

/// Runs one subcommand on a config file.
pub fn run(sub: Subcommand, config_path: &Path, out_dir: &Path, format: Format) -> Result<Outcome> {
    let text = fs::read_to_string(config_path)?;
    let config = Config::from_json_str(&text)?;
    run_config(sub, config, out_dir, format)
}

pub fn run_config(
    sub: Subcommand,
    config: Config,
    out_dir: &Path,
    format: Format,
) -> Result<Outcome> {
    fs::create_dir_all(out_dir)?;
    let (thetas, gains) = thetas_of(&config)?;
    let model = rescale(&config.physical, &thetas)?;
    let mut adm = check_admissibility(&model);
    if let Some(k) = gains {
        if !(k.chi3 > config.physical.chi3_threshold()) {
            adm.violations.insert(0, "chi3_threshold".into());
            adm.admissible = false;
        }
    }
    let mut ctx = Ctx {
        config,
        model,
        adm,
        gains,
        out_dir: out_dir.to_path_buf(),
        format,
        files: Vec::new(),
        plots: Vec::new(),
        verdicts: BTreeMap::new(),
    };
    ctx.verdict("admissible", ctx.adm.admissible, "true", "false");
    let results = if !ctx.adm.admissible {
        json!({ "skipped": format!("parameters are not admissible: {}", ctx.adm.violations.join(", ")) })
    } else {
        match sub {
            Subcommand::Check => run_check(&mut ctx)?,
            Subcommand::Simulate => run_simulate(&mut ctx)?,
            Subcommand::Spectrum => run_spectrum(&mut ctx)?,
            Subcommand::Sweep => run_sweep(&mut ctx)?,
            Subcommand::Bvp => run_bvp(&mut ctx)?,
            Subcommand::Appb => run_appb(&mut ctx)?,
        }
    };
    let mut files = std::mem::take(&mut ctx.files);
    files.extend(emit_plotdata(&ctx.plots, out_dir)?);
    let report = RunReport {
        tool: TOOL.into(),
        version: VERSION.into(),
        subcommand: sub,
        config: ctx.config.echo(),
        admissibility: ctx.adm.clone(),
        results,
        verdicts: ctx.verdicts,
    };
    let path = out_dir.join("report.json");
    // Round-trip through Value so every object is emitted with sorted keys.
    let value = serde_json::to_value(&report)?;
    fs::write(&path, serde_json::to_string_pretty(&value)? + "\n")?;
    files.push(path);
    Ok(Outcome {
        exit_code: if report.admissibility.admissible {
            EXIT_OK
        } else {
            EXIT_NOT_ADMISSIBLE
        },
        report,
        files,
    })
}

fn run_check(ctx: &mut Ctx) -> Result<Value> {
    let hw = HWeights::for_model(&ctx.model)?;
    let m = &ctx.model;
    Ok(json!({
        "chi3_threshold": ctx.config.physical.chi3_threshold(),
        "theta": m.theta,
        "s_x": m.s_x,
        "s_t": m.s_t,
        "L_tilde": m.l_tilde,
        "P_top": m.p_top(),
        "P_bottom": m.p_bottom(),
        "weights": hw,
    }))
}

fn initial_state(ctx: &Ctx, grid: Grid) -> Result<StateZ<f64>> {
    let l = ctx.model.l_tilde;
    let amp = ctx.config.initial.amplitude;
    match ctx.config.initial.kind {
        InitialKind::Bump => Ok(StateZ::new(
            SampledFunction::from_fn(grid, |x| {
                let t = x / l;
                amp * (4.0 * t * (1.0 - t)).powi(6)
            }),
            SampledFunction::zeros(grid),
        )?),
        InitialKind::Random => {
            let hw = HWeights::for_model(&ctx.model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
            let s =
                DomainState::random(&mut rng, &ctx.model, &hw, SAMPLE_MODES, false).sample(grid);
            let scale =
                |v: &SampledFunction<f64>| v.values().iter().map(|x| amp * x).collect::<Vec<_>>();
            StateZ::new(
                SampledFunction::new(grid, scale(&s.w))?,
                SampledFunction::new(grid, scale(&s.v))?,
            )
        }
    }
}

fn run_simulate(ctx: &mut Ctx) -> Result<Value> {
    let sys = ctx.system()?;
    let s_t = ctx.model.s_t;
    let t_end = ctx.config.time.t_end * s_t;
    let dt = ctx
        .config
        .time
        .dt
        .map(|d| d * s_t)
        .unwrap_or_else(|| default_dt(&sys));
    let z0 = initial_state(ctx, sys.grid)?;
    let tr = simulate_strided(&z0, &sys, t_end, dt, ctx.config.time.record_every)?;
    let norms = h_norms(&tr, &sys.m_h);
    let phys_t: Vec<f64> = tr.times.iter().map(|t| t / s_t).collect();
    ctx.table(
        "trajectory",
        |w| {
            writeln!(w, "t,norm_H")?;
            for (t, n) in phys_t.iter().zip(&norms) {
                writeln!(w, "{t},{n}")?;
            }
            Ok(())
        },
        || {
            json!(phys_t
                .iter()
                .zip(&norms)
                .map(|(t, n)| json!({"t": t, "norm_H": n}))
                .collect::<Vec<_>>())
        },
    )?;
    ctx.plots.push(PlotData {
        name: "decay".into(),
        points: phys_t
            .iter()
            .zip(&norms)
            .filter(|(_, n)| **n > 0.0)
            .map(|(t, n)| (*t, *n))
            .collect(),
    });
    let mut out = json!({
        "steps": tr.times.len() - 1,
        "dt_rescaled": dt,
        "T_rescaled": t_end,
        "norm_H_initial": norms[0],
        "norm_H_final": norms[norms.len() - 1],
    });
    // The discrete generator is dissipative only up to consistency error.
    out["max_relative_norm_increase"] = json!(norms
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max));
    match decay_fit_norms(&tr.times, &norms) {
        Ok(fit) => out["decay_fit"] = serde_json::to_value(fit)?,
        Err(e) => out["decay_fit"] = json!({ "unavailable": e.to_string() }),
    }
    if let Some(k) = ctx.gains {
        let et = energies(&tr, &sys, &ctx.config.physical, &k)?;
        let rep = verify_energy_identity(&et, ENERGY_IDENTITY_C);
        ctx.verdict(
            "energy_identity",
            rep.passed,
            "within-bound",
            "exceeds-bound",
        );
        out["energy_identity"] = serde_json::to_value(&rep)?;
        let v = &et;
        ctx.table(
            "energy",
            |w| write_energy_csv(v, w),
            || {
                json!((0..v.times.len())
                    .map(|i| json!({
                        "t": v.times[i],
                        "Hbar": v.hbar[i],
                        "Vbar": v.vbar[i],
                        "V": v.v[i],
                        "dVdt_lhs": v.lhs.get(i),
                        "dVdt_rhs": v.rhs.get(i),
                        "norm_H": v.norm_h[i],
                    }))
                    .collect::<Vec<_>>())
            },
        )?;
    } else {
        out["energy_identity"] =
            json!({ "unavailable": "the Lyapunov functional needs controller gains" });
    }
    Ok(out)
}

fn run_spectrum(ctx: &mut Ctx) -> Result<Value> {
    let sys = ctx.system()?;
    let rep = spectrum(&sys)?;
    ctx.table(
        "spectrum",
        |w| write_spectrum_csv(&rep, w),
        || {
            json!(rep
                .eigenvalues
                .iter()
                .map(|l| json!({"re": l.re, "im": l.im}))
                .collect::<Vec<_>>())
        },
    )?;
    ctx.plots.push(PlotData {
        name: "eigenvalues".into(),
        points: rep.eigenvalues.iter().map(|l| (l.re, l.im)).collect(),
    });
    ctx.verdict(
        "asymptotic_stability",
        rep.abscissa < 0.0,
        "all-eigenvalues-in-open-left-half-plane",
        "inconclusive",
    );
    Ok(json!({
        "N": sys.grid.n(),
        "dimension": rep.eigenvalues.len(),
        "abscissa": rep.abscissa,
        "rightmost": rep.rightmost,
        "smallest_modulus": rep.smallest_modulus(),
    }))
}

fn run_sweep(ctx: &mut Ctx) -> Result<Value> {
    let sys = ctx.system()?;
    let rep = spectrum(&sys)?;
    let taus = ctx.taus();
    let disc = sweep_discrete(&sys, &taus)?;
    let opts = BvpOptions::default();
    let cont_taus: Vec<f64> = taus
        .iter()
        .copied()
        .filter(|t| *t <= opts.tau_cap)
        .collect();
    let cont = sweep_continuous(&cont_taus, &ctx.model, &opts)?;
    let vd = huang_verdict(&disc, &rep)?;
    let vc = huang_verdict(&cont, &rep)?;
    for (name, samples) in [("sweep_discrete", &disc), ("sweep_continuous", &cont)] {
        ctx.table(
            name,
            |w| write_sweep_csv(samples, w),
            || serde_json::to_value(samples).expect("samples serialize"),
        )?;
        ctx.plots.push(PlotData {
            name: format!("resolvent_{}", &name[6..]),
            points: samples.iter().map(|s| (s.tau, s.norm)).collect(),
        });
    }
    ctx.verdicts
        .insert("huang_discrete".into(), vd.verdict.clone());
    ctx.verdicts
        .insert("huang_continuous".into(), vc.verdict.clone());
    Ok(json!({ "abscissa": rep.abscissa, "discrete": vd, "continuous": vc }))
}

fn series(ctx: &Ctx, waves: &[crate::config::Wave]) -> SmoothProfile {
    SmoothProfile::from_trig(waves_to_series(waves, ctx.model.l_tilde))
}

fn run_bvp(ctx: &mut Ctx) -> Result<Value> {
    let opts = BvpOptions::default();
    let f = series(ctx, &ctx.config.bvp.f);
    let g = series(ctx, &ctx.config.bvp.g);
    let tau = ctx.config.bvp.tau;
    let sol = solve_resolvent_bvp(&f, &g, tau, &ctx.model, &opts)?;
    let sys = ctx.system()?;
    let cross = compare_with_discrete(&f, &g, tau, &sys, &opts)?;
    let s = &sol;
    ctx.table(
        "bvp",
        |w| write_solutions_csv(std::slice::from_ref(s), w),
        || json!([{ "tau": s.tau, "gain": s.gain, "residual": s.residual, "coefficients": s.coefficients }]),
    )?;
    ctx.table(
        "bvp_profile",
        |w| write_solution_profile_csv(s, w),
        || {
            json!(s
                .grid
                .nodes()
                .iter()
                .enumerate()
                .map(|(i, x)| json!({"x": x, "w_re": s.w[i].re, "w_im": s.w[i].im, "v_re": s.v[i].re, "v_im": s.v[i].im}))
                .collect::<Vec<_>>())
        },
    )?;
    ctx.verdict(
        "residual",
        sol.residual <= 1e-6,
        "within-1e-6",
        "exceeds-1e-6",
    );
    ctx.verdict(
        "cross_check",
        cross.relative_h_error <= 0.05,
        "within-5%",
        "exceeds-5%",
    );
    Ok(json!({
        "tau": tau,
        "branch": sol.branch,
        "grid_intervals": sol.grid.n(),
        "norms": [sol.norms.0, sol.norms.1],
        "data_norm": sol.data_norm,
        "gain": sol.gain,
        "residual": sol.residual,
        "coefficients": sol.coefficients,
        "discrete_comparison": cross,
    }))
}

fn run_appb(ctx: &mut Ctx) -> Result<Value> {
    let a = ctx.config.appb.clone();
    let taus = tau_grid(a.tau_min, a.tau_max, a.points, true);
    let f = series(ctx, &a.f);
    let st = appendix_b_scaling_study(&taus, &f, &ctx.model.tension, &BvpOptions::default())?;
    let s = &st;
    ctx.table(
        "appb",
        |w| {
            writeln!(w, "tau,sup_I0,sup_I1")?;
            for i in 0..s.taus.len() {
                writeln!(w, "{},{},{}", s.taus[i], s.sup_i0[i], s.sup_i1[i])?;
            }
            Ok(())
        },
        || serde_json::to_value(s).expect("study serializes"),
    )?;
    for (name, ys) in [("appb_i0", &st.sup_i0), ("appb_i1", &st.sup_i1)] {
        ctx.plots.push(PlotData {
            name: name.into(),
            points: st
                .taus
                .iter()
                .zip(ys.iter())
                .map(|(t, y)| (t.log10(), y.log10()))
                .collect(),
        });
    }
    ctx.verdict(
        "slope_i0",
        (st.slope_i0 + 2.0).abs() <= 0.2,
        "within -2 +- 0.2",
        "outside -2 +- 0.2",
    );
    ctx.verdict(
        "slope_i1",
        (st.slope_i1 + 1.0).abs() <= 0.2,
        "within -1 +- 0.2",
        "outside -1 +- 0.2",
    );
    Ok(serde_json::to_value(&st)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: &str = r#"{
        "physical": {"rho": 1, "L": 1, "m_p": 1, "m_c": 1, "g": 9.81},
        "gains": {"chi1": 1, "chi2": 1, "chi3": 2.5},
        "grid": {"N": 40},
        "time": {"T": 2.0}
    }"#;

    fn tmp(tag: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("crane-lab-cli-{tag}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&d);
        d
    }

    #[test]
    fn check_reference() {
        let out = tmp("check");
        let o = run_config(
            Subcommand::Check,
            Config::from_json_str(REF).unwrap(),
            &out,
            Format::Csv,
        )
        .unwrap();
        assert_eq!(o.exit_code, EXIT_OK);
        let r: Value =
            serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_eq!(r["admissibility"]["admissible"], true);
        assert!((r["results"]["chi3_threshold"].as_f64().unwrap() - 1.978).abs() < 1e-3);
        assert_eq!(r["version"], VERSION);
        assert_eq!(
            Config::from_value(&r["config"]).unwrap(),
            Config::from_json_str(REF).unwrap()
        );
    }

    #[test]
    fn low_chi3_exits_two() {
        let out = tmp("lowchi");
        let c = Config::from_json_str(&REF.replace("2.5", "1.0")).unwrap();
        let o = run_config(Subcommand::Check, c, &out, Format::Json).unwrap();
        assert_eq!(o.exit_code, EXIT_NOT_ADMISSIBLE);
        assert!(o
            .report
            .admissibility
            .violations
            .contains(&"chi3_threshold".to_string()));
    }

    #[test]
    fn spectrum_and_simulate_artifacts() {
        let out = tmp("spectrum");
        let c = Config::from_json_str(REF).unwrap();
        run_config(Subcommand::Spectrum, c.clone(), &out, Format::Csv).unwrap();
        let csv = fs::read_to_string(out.join("spectrum.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("re,im"));
        assert_eq!(csv.lines().count(), 1 + 82);
        let dat = fs::read_to_string(out.join("eigenvalues.dat")).unwrap();
        assert!(dat.lines().all(|l| l.split(' ').count() == 2));
        run_config(Subcommand::Simulate, c, &out, Format::Csv).unwrap();
        let decay = fs::read_to_string(out.join("decay.dat")).unwrap();
        assert!(decay
            .lines()
            .all(|l| l.split(' ').nth(1).unwrap().parse::<f64>().unwrap() > 0.0));
        assert!(out.join("energy.csv").exists());
    }

    #[test]
    fn deterministic_outputs() {
        let (a, b) = (tmp("det-a"), tmp("det-b"));
        let c = Config::from_json_str(&REF.replace(
            "\"time\": {\"T\": 2.0}",
            "\"time\": {\"T\": 1.0}, \"initial\": {\"kind\": \"random\"}, \"seed\": 3",
        ))
        .unwrap();
        run_config(Subcommand::Simulate, c.clone(), &a, Format::Csv).unwrap();
        run_config(Subcommand::Simulate, c, &b, Format::Csv).unwrap();
        for f in ["trajectory.csv", "energy.csv", "report.json"] {
            assert_eq!(
                fs::read(a.join(f)).unwrap(),
                fs::read(b.join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("sweep".parse::<Subcommand>().unwrap(), Subcommand::Sweep);
        assert!("plot".parse::<Subcommand>().is_err());
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
    }
}
