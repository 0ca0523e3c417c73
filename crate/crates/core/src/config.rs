//! JSON run configuration. Errors name the offending key, e.g. `physical.rho`.

use serde::Serialize;
use serde_json::{Map, Value};

use crate::discretization::MIN_INTERVALS;
use crate::error::{Error, Result};
use crate::functions::{TrigSeries, TrigTerm};
use crate::model::{ControllerGains, PhysicalParams, PhysicalThetas};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Gains(ControllerGains),
    Thetas(PhysicalThetas),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridConfig {
    #[serde(rename = "N")]
    pub n: usize,
}

/// Times in physical seconds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub t_end: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub record_every: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub points: usize,
    pub log: bool,
}

/// Cosine term `amp cos(k x + phase)`; `mode` gives `k = mode pi / L~`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Wave {
    pub amp: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<f64>,
    pub phase: f64,
}

pub fn waves_to_series(waves: &[Wave], length: f64) -> TrigSeries {
    TrigSeries::new(
        waves
            .iter()
            .map(|w| TrigTerm {
                amp: w.amp,
                k: w.k
                    .unwrap_or_else(|| w.mode.unwrap_or(0.0) * std::f64::consts::PI / length),
                phase: w.phase,
            })
            .collect(),
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialKind {
    /// `w = amp (4 t (1 - t))^6`, `t = x / L~`, `v = 0`.
    Bump,
    /// Smooth random state in the generator domain.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BvpConfig {
    pub tau: f64,
    pub f: Vec<Wave>,
    pub g: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppbConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub points: usize,
    pub f: Vec<Wave>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Config {
    pub physical: PhysicalParams,
    #[serde(flatten)]
    pub controller: Controller,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub sweep: SweepConfig,
    pub seed: u64,
    pub initial: InitialConfig,
    pub bvp: BvpConfig,
    pub appb: AppbConfig,
}

fn err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Object cursor that tracks its path and rejects unknown keys.
struct Obj<'a> {
    path: String,
    map: &'a Map<String, Value>,
}

impl<'a> Obj<'a> {
    fn new(v: &'a Value, path: &str) -> Result<Self> {
        match v {
            Value::Object(map) => Ok(Self {
                path: path.to_string(),
                map,
            }),
            _ => Err(err(
                if path.is_empty() { "<root>" } else { path },
                "expected an object",
            )),
        }
    }

    fn key(&self, k: &str) -> String {
        join(&self.path, k)
    }

    fn child(&self, k: &str) -> Result<Option<Obj<'a>>> {
        self.map
            .get(k)
            .map(|v| Obj::new(v, &self.key(k)))
            .transpose()
    }

    fn f64_opt(&self, k: &str) -> Result<Option<f64>> {
        match self.map.get(k) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .map(Some)
                .ok_or_else(|| err(&self.key(k), "expected a finite number")),
        }
    }

    fn f64(&self, k: &str) -> Result<f64> {
        self.f64_opt(k)?.ok_or_else(|| err(&self.key(k), "missing"))
    }

    fn f64_or(&self, k: &str, d: f64) -> Result<f64> {
        Ok(self.f64_opt(k)?.unwrap_or(d))
    }

    fn usize_or(&self, k: &str, d: usize) -> Result<usize> {
        match self.map.get(k) {
            None => Ok(d),
            Some(v) => v
                .as_u64()
                .map(|x| x as usize)
                .ok_or_else(|| err(&self.key(k), "expected a non-negative integer")),
        }
    }

    fn bool_or(&self, k: &str, d: bool) -> Result<bool> {
        match self.map.get(k) {
            None => Ok(d),
            Some(v) => v
                .as_bool()
                .ok_or_else(|| err(&self.key(k), "expected true or false")),
        }
    }

    fn str_opt(&self, k: &str) -> Result<Option<&'a str>> {
        match self.map.get(k) {
            None => Ok(None),
            Some(v) => v
                .as_str()
                .map(Some)
                .ok_or_else(|| err(&self.key(k), "expected a string")),
        }
    }

    fn only(&self, allowed: &[&str]) -> Result<()> {
        match self.map.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(err(&self.key(k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn positive(key: String, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(err(&key, "must be positive"))
    }
}

fn waves(v: Option<&Value>, path: &str, default: Vec<Wave>) -> Result<Vec<Wave>> {
    let Some(v) = v else {
        return Ok(default);
    };
    let arr = v
        .as_array()
        .ok_or_else(|| err(path, "expected an array of terms"))?;
    arr.iter()
        .enumerate()
        .map(|(i, t)| {
            let o = Obj::new(t, &format!("{path}[{i}]"))?;
            o.only(&["amp", "k", "mode", "phase"])?;
            let (k, mode) = (o.f64_opt("k")?, o.f64_opt("mode")?);
            if k.is_some() == mode.is_some() {
                return Err(err(&o.path, "give exactly one of `k` and `mode`"));
            }
            Ok(Wave {
                amp: o.f64("amp")?,
                k,
                mode,
                phase: o.f64_or("phase", 0.0)?,
            })
        })
        .collect()
}

impl Config {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let v: Value =
            serde_json::from_str(s).map_err(|e| err("<root>", format!("invalid JSON: {e}")))?;
        Self::from_value(&v)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let root = Obj::new(v, "")?;
        root.only(&[
            "physical", "gains", "thetas", "grid", "time", "sweep", "seed", "initial", "bvp",
            "appb",
        ])?;

        let ph = root
            .child("physical")?
            .ok_or_else(|| err("physical", "missing"))?;
        ph.only(&["rho", "L", "m_p", "m_c", "g"])?;
        let physical = PhysicalParams {
            rho: positive(ph.key("rho"), ph.f64("rho")?)?,
            length: positive(ph.key("L"), ph.f64("L")?)?,
            m_p: positive(ph.key("m_p"), ph.f64("m_p")?)?,
            m_c: positive(ph.key("m_c"), ph.f64("m_c")?)?,
            g: positive(ph.key("g"), ph.f64("g")?)?,
        };

        let controller = match (root.child("gains")?, root.child("thetas")?) {
            (Some(k), None) => {
                k.only(&["chi1", "chi2", "chi3"])?;
                Controller::Gains(ControllerGains {
                    chi1: k.f64("chi1")?,
                    chi2: k.f64("chi2")?,
                    chi3: k.f64("chi3")?,
                })
            }
            (None, Some(t)) => {
                t.only(&["v1", "v2", "v3", "v4"])?;
                Controller::Thetas(PhysicalThetas {
                    v1: t.f64("v1")?,
                    v2: t.f64("v2")?,
                    v3: t.f64("v3")?,
                    v4: t.f64("v4")?,
                })
            }
            (Some(_), Some(_)) => {
                return Err(err(
                    "gains",
                    "give exactly one of `gains` and `thetas`, not both",
                ))
            }
            (None, None) => return Err(err("gains", "missing (or give `thetas`)")),
        };

        let grid = match root.child("grid")? {
            None => GridConfig { n: 200 },
            Some(o) => {
                o.only(&["N"])?;
                let n = o.usize_or("N", 200)?;
                if n < MIN_INTERVALS {
                    return Err(err(
                        &o.key("N"),
                        format!("must be at least {MIN_INTERVALS}"),
                    ));
                }
                GridConfig { n }
            }
        };

        let time = match root.child("time")? {
            None => TimeConfig {
                t_end: 10.0,
                dt: None,
                record_every: 1,
            },
            Some(o) => {
                o.only(&["T", "dt", "record_every"])?;
                let record_every = o.usize_or("record_every", 1)?;
                if record_every == 0 {
                    return Err(err(&o.key("record_every"), "must be at least 1"));
                }
                TimeConfig {
                    t_end: positive(o.key("T"), o.f64_or("T", 10.0)?)?,
                    dt: o
                        .f64_opt("dt")?
                        .map(|d| positive(o.key("dt"), d))
                        .transpose()?,
                    record_every,
                }
            }
        };

        let sweep = {
            let d = SweepConfig {
                tau_min: 0.1,
                tau_max: 1e3,
                points: 200,
                log: true,
            };
            match root.child("sweep")? {
                None => d,
                Some(o) => {
                    o.only(&["tau_min", "tau_max", "points", "log"])?;
                    let s = SweepConfig {
                        tau_min: o.f64_or("tau_min", d.tau_min)?,
                        tau_max: o.f64_or("tau_max", d.tau_max)?,
                        points: o.usize_or("points", d.points)?,
                        log: o.bool_or("log", d.log)?,
                    };
                    if s.tau_min < 0.0 || (s.log && s.tau_min <= 0.0) {
                        return Err(err(
                            &o.key("tau_min"),
                            "must be positive (non-negative for linear sweeps)",
                        ));
                    }
                    if !(s.tau_max > s.tau_min) {
                        return Err(err(&o.key("tau_max"), "must exceed tau_min"));
                    }
                    if s.points < 2 {
                        return Err(err(&o.key("points"), "must be at least 2"));
                    }
                    s
                }
            }
        };

        let seed = match root.map.get("seed") {
            None => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| err("seed", "expected a non-negative integer"))?,
        };

        let initial = match root.child("initial")? {
            None => InitialConfig {
                kind: InitialKind::Bump,
                amplitude: 0.1,
            },
            Some(o) => {
                o.only(&["kind", "amplitude"])?;
                let kind = match o.str_opt("kind")? {
                    None | Some("bump") => InitialKind::Bump,
                    Some("random") => InitialKind::Random,
                    Some(other) => {
                        return Err(err(&o.key("kind"), format!("unknown kind `{other}`")))
                    }
                };
                InitialConfig {
                    kind,
                    amplitude: o.f64_or("amplitude", 0.1)?,
                }
            }
        };

        let sine_mode = vec![Wave {
            amp: 1.0,
            k: None,
            mode: Some(1.0),
            phase: -std::f64::consts::FRAC_PI_2,
        }];
        let bvp = match root.child("bvp")? {
            None => BvpConfig {
                tau: 5.0,
                f: sine_mode,
                g: Vec::new(),
            },
            Some(o) => {
                o.only(&["tau", "f", "g"])?;
                let tau = o.f64_or("tau", 5.0)?;
                if tau < 0.0 {
                    return Err(err(&o.key("tau"), "must be non-negative"));
                }
                BvpConfig {
                    tau,
                    f: waves(o.map.get("f"), &o.key("f"), sine_mode)?,
                    g: waves(o.map.get("g"), &o.key("g"), Vec::new())?,
                }
            }
        };

        let cosine = vec![Wave {
            amp: 1.0,
            k: Some(1.0),
            mode: None,
            phase: 0.0,
        }];
        let appb = match root.child("appb")? {
            None => AppbConfig {
                tau_min: 10.0,
                tau_max: 1e3,
                points: 21,
                f: cosine,
            },
            Some(o) => {
                o.only(&["tau_min", "tau_max", "points", "f"])?;
                let a = AppbConfig {
                    tau_min: o.f64_or("tau_min", 10.0)?,
                    tau_max: o.f64_or("tau_max", 1e3)?,
                    points: o.usize_or("points", 21)?,
                    f: waves(o.map.get("f"), &o.key("f"), cosine)?,
                };
                if a.points < 2 {
                    return Err(err(&o.key("points"), "must be at least 2"));
                }
                a
            }
        };

        Ok(Self {
            physical,
            controller,
            grid,
            time,
            sweep,
            seed,
            initial,
            bvp,
            appb,
        })
    }

    /// Parsed configuration as JSON with sorted keys.
    pub fn echo(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: &str = r#"{
        "physical": {"rho": 1, "L": 1, "m_p": 1, "m_c": 1, "g": 9.81},
        "gains": {"chi1": 1, "chi2": 1, "chi3": 2.5}
    }"#;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn reference_with_defaults() {
        let c = Config::from_json_str(REF).unwrap();
        assert_eq!(c.physical, PhysicalParams::reference());
        assert_eq!(
            c.controller,
            Controller::Gains(ControllerGains::reference())
        );
        assert_eq!(c.grid.n, 200);
        assert_eq!(c.sweep.points, 200);
        assert!(c.sweep.log);
    }

    #[test]
    fn missing_rho_is_named() {
        let s = REF.replace("\"rho\": 1, ", "");
        let e = Config::from_json_str(&s).unwrap_err();
        assert!(e.to_string().contains("physical.rho"));
        assert_eq!(key_of(e), "physical.rho");
    }

    #[test]
    fn controller_exclusivity() {
        let both = REF.replace(
            "\"gains\"",
            "\"thetas\": {\"v1\": 0, \"v2\": 0, \"v3\": 0, \"v4\": 0}, \"gains\"",
        );
        assert_eq!(key_of(Config::from_json_str(&both).unwrap_err()), "gains");
        let none = r#"{"physical": {"rho": 1, "L": 1, "m_p": 1, "m_c": 1, "g": 9.81}}"#;
        assert_eq!(key_of(Config::from_json_str(none).unwrap_err()), "gains");
    }

    #[test]
    fn nested_errors_carry_paths() {
        let s = REF.replace("}\n    }", "}, \"sweep\": {\"points\": 1}\n    }");
        assert_eq!(
            key_of(Config::from_json_str(&s).unwrap_err()),
            "sweep.points"
        );
        let s = REF.replace("}\n    }", "}, \"bvp\": {\"f\": [{\"amp\": 1}]}\n    }");
        assert_eq!(key_of(Config::from_json_str(&s).unwrap_err()), "bvp.f[0]");
        let s = REF.replace("\"g\": 9.81", "\"g\": 9.81, \"mass\": 2");
        assert_eq!(
            key_of(Config::from_json_str(&s).unwrap_err()),
            "physical.mass"
        );
        let s = REF.replace("\"m_c\": 1", "\"m_c\": -1");
        assert_eq!(
            key_of(Config::from_json_str(&s).unwrap_err()),
            "physical.m_c"
        );
    }

    #[test]
    fn echo_round_trips() {
        let c = Config::from_json_str(REF).unwrap();
        let again = Config::from_value(&c.echo()).unwrap();
        assert_eq!(c, again);
        let text = serde_json::to_string(&c.echo()).unwrap();
        assert!(text.find("\"appb\"").unwrap() < text.find("\"physical\"").unwrap());
    }
}
