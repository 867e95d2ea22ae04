//! Experiment configuration: a TOML file with the sections `[grid]`, `[run]`,
//! `[arrival]`, `[service]`, `[estimate]`, `[bound]` and `[trace]`.
//!
//! Every key is optional and falls back to the default listed in
//! [`DEFAULT_CONFIG`]. Any key can be overridden from the environment as
//! `NSCURVE_<SECTION>_<KEY>`, e.g. `NSCURVE_RUN_N_PATHS=1000`; values are
//! parsed as TOML and fall back to plain strings. Range errors point at the
//! offending line of the file, or name the environment variable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::arrivals::CompoundPoissonModel;
use crate::bivariate::{BivariateFunction, TimeGrid};
use crate::error::{Error, Result};
use crate::minplus::latency_rate;
use crate::service::SleepServiceModel;

pub const ENV_PREFIX: &str = "NSCURVE_";

/// The defaults, as a configuration file.
pub const DEFAULT_CONFIG: &str = r#"[grid]
horizon = 400        # last slot index
slot_width = 1.0     # seconds per slot, used by traces and CBR rates

[run]
kind = "model"       # "model" or "trace"
n_paths = 10000
seed = 1
out = "out"
epsilon = 0.01       # quantile level 1 - epsilon of simulate and markov
write_paths = false  # simulate: also write paths.csv
write_distribution = false  # markov: also write distribution.csv

[arrival]
alpha = 0.09         # probability of a packet arrival per slot
beta = 0.3           # geometric packet size parameter

[service]
kind = "deterministic_sleep"  # random_sleep | deterministic_sleep | latency_rate
p = 0.1              # random_sleep: geometric wake-up parameter
q = 0.5              # random_sleep: probability of serving one unit per slot
rate = 1.0           # deterministic_sleep, latency_rate: units per slot
latency = 100        # deterministic_sleep, latency_rate: wake-up slot
stationary_latency = 0  # latency_rate: latency of every backlogged period
hops = 1             # systems in tandem
epsilon = 1e-6       # violation probability of the service curve
# rho = 1e-4         # service curve parameter; unset searches a grid

[estimate]
t = 200
epsilon = 0.01
xi = 0.001           # rate scanning: per-rate quantile level 1 - xi
rates = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5]
trigger = 0.0        # minimal probing: size of the packet sent in slot 0
# burst_cap = 1e5    # unset derives a cap from the peak service rate
validation_paths = 0 # extra paths to check the coverage of the estimate

[bound]
epsilon = 0.01       # violation probability of the arrival envelope
band = 0.05          # relative band around the steady state
delay = false        # also compute the delay bound

[trace]
# arrivals = "a.csv"
# departures = ["d.csv"]
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Model,
    Trace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceKind {
    RandomSleep,
    DeterministicSleep,
    /// Deterministic latency-rate function, not a sampled process.
    LatencyRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub horizon: usize,
    pub slot_width: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            horizon: 400,
            slot_width: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kind: ScenarioKind,
    pub n_paths: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub epsilon: f64,
    pub write_paths: bool,
    pub write_distribution: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Model,
            n_paths: 10_000,
            seed: 1,
            out: PathBuf::from("out"),
            epsilon: 0.01,
            write_paths: false,
            write_distribution: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        Self { alpha: 0.09, beta: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub kind: ServiceKind,
    pub p: f64,
    pub q: f64,
    pub rate: f64,
    pub latency: usize,
    pub stationary_latency: usize,
    pub hops: usize,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            kind: ServiceKind::DeterministicSleep,
            p: 0.1,
            q: 0.5,
            rate: 1.0,
            latency: 100,
            stationary_latency: 0,
            hops: 1,
            epsilon: 1e-6,
            rho: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateConfig {
    pub t: usize,
    pub epsilon: f64,
    pub xi: f64,
    pub rates: Vec<f64>,
    pub trigger: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burst_cap: Option<f64>,
    pub validation_paths: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            t: 200,
            epsilon: 0.01,
            xi: 1e-3,
            rates: vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5],
            trigger: 0.0,
            burst_cap: None,
            validation_paths: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundConfig {
    pub epsilon: f64,
    pub band: f64,
    pub delay: bool,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            band: 0.05,
            delay: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TraceConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<PathBuf>,
    /// One file per repetition; a single string is accepted too.
    #[serde(deserialize_with = "one_or_many")]
    pub departures: Vec<PathBuf>,
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<PathBuf>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PathBuf),
        Many(Vec<PathBuf>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub run: RunConfig,
    pub arrival: ArrivalConfig,
    pub service: ServiceConfig,
    pub estimate: EstimateConfig,
    pub bound: BoundConfig,
    pub trace: TraceConfig,
}

const SECTIONS: [&str; 7] = ["grid", "run", "arrival", "service", "estimate", "bound", "trace"];

struct Override {
    var: String,
    section: String,
    key: String,
    value: toml::Value,
}

/// A range violation, before it is attached to a file position.
struct Issue {
    section: &'static str,
    key: &'static str,
    message: String,
}

fn toml_error(path: &Path, text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| line_of(text, s.start));
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: e.message().trim().to_string(),
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, or of the section header when the key is absent.
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = "";
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

fn parse_override(var: &str, raw: &str) -> Result<Override> {
    let rest = var[ENV_PREFIX.len()..].to_ascii_lowercase();
    let (section, key) = rest
        .split_once('_')
        .filter(|(s, k)| SECTIONS.contains(s) && !k.is_empty())
        .ok_or_else(|| {
            Error::Config(format!(
                "{var}: expected {ENV_PREFIX}<SECTION>_<KEY> with SECTION one of {}",
                SECTIONS.join(", ")
            ))
        })?;
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok(Override {
        var: var.to_string(),
        section: section.to_string(),
        key: key.to_string(),
        value,
    })
}

impl ExperimentConfig {
    /// Parses `text`, applies the `NSCURVE_*` entries of `env` and validates.
    /// `origin` names the file in diagnostics and anchors relative trace paths.
    pub fn from_toml(text: &str, origin: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let path = origin.map_or_else(|| PathBuf::from("<config>"), Path::to_path_buf);
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| toml_error(&path, text, &e))?;
        let env: BTreeMap<String, String> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        let overrides = env
            .iter()
            .map(|(k, v)| parse_override(k, v))
            .collect::<Result<Vec<_>>>()?;
        if !overrides.is_empty() {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| toml_error(&path, text, &e))?;
            for o in &overrides {
                let section = table
                    .entry(o.section.clone())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
                let toml::Value::Table(section) = section else {
                    return Err(Error::Config(format!("{}: `{}` is not a section", o.var, o.section)));
                };
                section.insert(o.key.clone(), o.value.clone());
            }
            cfg = table.try_into().map_err(|e: toml::de::Error| {
                let names: Vec<&str> = overrides.iter().map(|o| o.var.as_str()).collect();
                Error::Config(format!("{} (environment overrides: {})", e.message().trim(), names.join(", ")))
            })?;
        }
        if let Some(dir) = origin.and_then(Path::parent) {
            let anchor = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            if let Some(a) = cfg.trace.arrivals.as_mut() {
                anchor(a);
            }
            cfg.trace.departures.iter_mut().for_each(anchor);
        }
        if let Err(issue) = cfg.check() {
            let message = format!("[{}] {}: {}", issue.section, issue.key, issue.message);
            if let Some(o) = overrides.iter().find(|o| o.section == issue.section && o.key == issue.key) {
                return Err(Error::Config(format!("{}: {message}", o.var)));
            }
            return Err(match locate(text, issue.section, issue.key) {
                Some(line) => Error::Parse { path, line, message },
                None => Error::Config(message),
            });
        }
        Ok(cfg)
    }

    /// Reads the file at `path` (defaults when `None`) with overrides from the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::from_toml(&text, path, std::env::vars())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is representable in TOML")
    }

    fn check(&self) -> std::result::Result<(), Issue> {
        fn req(ok: bool, section: &'static str, key: &'static str, message: impl FnOnce() -> String) -> std::result::Result<(), Issue> {
            if ok {
                Ok(())
            } else {
                Err(Issue {
                    section,
                    key,
                    message: message(),
                })
            }
        }
        let prob = |x: f64| x > 0.0 && x < 1.0;
        let h = self.grid.horizon;
        req(h >= 1, "grid", "horizon", || "must be at least 1".into())?;
        let w = self.grid.slot_width;
        req(w > 0.0 && w.is_finite(), "grid", "slot_width", || format!("must be positive, got {w}"))?;

        req(self.run.n_paths >= 1, "run", "n_paths", || "must be at least 1".into())?;
        let e = self.run.epsilon;
        req(prob(e), "run", "epsilon", || format!("must lie in (0, 1), got {e}"))?;

        let a = self.arrival.alpha;
        req((0.0..=1.0).contains(&a), "arrival", "alpha", || format!("must lie in [0, 1], got {a}"))?;
        let b = self.arrival.beta;
        req(b > 0.0 && b <= 1.0, "arrival", "beta", || format!("must lie in (0, 1], got {b}"))?;

        let s = &self.service;
        req(s.p > 0.0 && s.p <= 1.0, "service", "p", || format!("must lie in (0, 1], got {}", s.p))?;
        req((0.0..=1.0).contains(&s.q), "service", "q", || format!("must lie in [0, 1], got {}", s.q))?;
        req(s.rate > 0.0 && s.rate.is_finite(), "service", "rate", || format!("must be positive, got {}", s.rate))?;
        req(s.latency <= h, "service", "latency", || format!("{} exceeds the horizon {h}", s.latency))?;
        req(s.stationary_latency <= h, "service", "stationary_latency", || {
            format!("{} exceeds the horizon {h}", s.stationary_latency)
        })?;
        req(s.hops >= 1, "service", "hops", || "must be at least 1".into())?;
        req(
            s.hops == 1 || s.kind != ServiceKind::LatencyRate,
            "service",
            "hops",
            || "a latency_rate service is a single system".into(),
        )?;
        req(prob(s.epsilon), "service", "epsilon", || format!("must lie in (0, 1), got {}", s.epsilon))?;
        if let Some(rho) = s.rho {
            req(rho > 0.0 && rho <= 1.0 / s.epsilon, "service", "rho", || {
                format!("must lie in (0, 1/epsilon], got {rho}")
            })?;
        }

        let est = &self.estimate;
        req(est.t >= 1 && est.t <= h, "estimate", "t", || format!("must lie in [1, {h}], got {}", est.t))?;
        req(prob(est.epsilon), "estimate", "epsilon", || format!("must lie in (0, 1), got {}", est.epsilon))?;
        req(prob(est.xi), "estimate", "xi", || format!("must lie in (0, 1), got {}", est.xi))?;
        req(!est.rates.is_empty(), "estimate", "rates", || "needs at least one rate".into())?;
        req(est.rates.iter().all(|&r| r > 0.0 && r.is_finite()), "estimate", "rates", || {
            "rates must be positive".into()
        })?;
        req(est.trigger >= 0.0 && est.trigger.is_finite(), "estimate", "trigger", || {
            format!("must be non-negative, got {}", est.trigger)
        })?;
        if let Some(cap) = est.burst_cap {
            req(cap > 0.0 && cap.is_finite(), "estimate", "burst_cap", || format!("must be positive, got {cap}"))?;
        }

        let bd = &self.bound;
        req(prob(bd.epsilon), "bound", "epsilon", || format!("must lie in (0, 1), got {}", bd.epsilon))?;
        req(prob(bd.band), "bound", "band", || format!("must lie in (0, 1), got {}", bd.band))?;
        Ok(())
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.horizon, self.grid.slot_width).expect("validated")
    }

    pub fn arrival_model(&self) -> CompoundPoissonModel {
        CompoundPoissonModel::new(self.arrival.alpha, self.arrival.beta).expect("validated")
    }

    /// The sampled model of one hop, `None` for a latency-rate function.
    pub fn sleep_model(&self) -> Option<SleepServiceModel> {
        let s = &self.service;
        match s.kind {
            ServiceKind::RandomSleep => Some(SleepServiceModel::random_sleep(s.p, s.q).expect("validated")),
            ServiceKind::DeterministicSleep => {
                Some(SleepServiceModel::deterministic_sleep(s.rate, s.latency).expect("validated"))
            }
            ServiceKind::LatencyRate => None,
        }
    }

    /// Every hop of a sampled service.
    pub fn hop_models(&self) -> Option<Vec<SleepServiceModel>> {
        self.sleep_model().map(|m| vec![m; self.service.hops])
    }

    /// The service as a fixed function, for services without randomness.
    pub fn service_function(&self) -> Option<BivariateFunction> {
        let s = &self.service;
        let (transient, stationary) = match s.kind {
            ServiceKind::RandomSleep => return None,
            ServiceKind::DeterministicSleep if s.hops == 1 => (s.latency, 0),
            ServiceKind::DeterministicSleep => return None,
            ServiceKind::LatencyRate => (s.latency, s.stationary_latency),
        };
        Some(latency_rate(self.grid(), s.rate, transient, stationary).expect("validated"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, env: &[(&str, &str)]) -> Result<ExperimentConfig> {
        ExperimentConfig::from_toml(
            text,
            Some(Path::new("exp.toml")),
            env.iter().map(|(k, v)| (k.to_string(), v.to_string())),
        )
    }

    #[test]
    fn defaults_match_documentation() {
        assert_eq!(parse(DEFAULT_CONFIG, &[]).unwrap(), ExperimentConfig::default());
        assert_eq!(parse("", &[]).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn effective_config_round_trips() {
        let mut cfg = parse("[service]\nrho = 1e-4\n[trace]\narrivals = \"/a.csv\"\ndepartures = \"/d.csv\"\n", &[]).unwrap();
        assert_eq!(cfg.trace.departures, vec![PathBuf::from("/d.csv")]);
        cfg.estimate.burst_cap = Some(12.5);
        assert_eq!(parse(&cfg.to_toml(), &[]).unwrap(), cfg);
    }

    #[test]
    fn range_errors_name_the_line() {
        let text = "[grid]\nhorizon = 50\n\n[run]\nseed = 3\nn_paths = 0\n";
        match parse(text, &[]) {
            Err(Error::Parse { line, message, path }) => {
                assert_eq!(line, 6);
                assert_eq!(path, PathBuf::from("exp.toml"));
                assert!(message.contains("n_paths"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        match parse("[service]\nepsilon = 0.5\nrho = 3.0\n", &[]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        // t beyond a reduced horizon: the key is absent, the section header is reported
        match parse("[grid]\nhorizon = 100\n[estimate]\nxi = 0.01\n", &[]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_and_type_errors_name_the_line() {
        for (text, expected) in [
            ("[run]\nseed = 1\nn_paths = \"many\"\n", 3),
            ("[grid]\nhorizon = 10\n[arrival]\ngamma = 0.1\n", 4),
            ("[run]\nseed = \n", 2),
        ] {
            match parse(text, &[]) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn environment_overrides() {
        let cfg = parse(
            "[run]\nn_paths = 10\n",
            &[
                ("NSCURVE_RUN_N_PATHS", "250"),
                ("NSCURVE_SERVICE_KIND", "random_sleep"),
                ("NSCURVE_ESTIMATE_RATES", "[0.1, 0.2]"),
                ("UNRELATED", "x"),
            ],
        )
        .unwrap();
        assert_eq!(cfg.run.n_paths, 250);
        assert_eq!(cfg.service.kind, ServiceKind::RandomSleep);
        assert_eq!(cfg.estimate.rates, vec![0.1, 0.2]);
        match parse("", &[("NSCURVE_RUN_N_PATHS", "0")]) {
            Err(Error::Config(m)) => assert!(m.contains("NSCURVE_RUN_N_PATHS"), "{m}"),
            other => panic!("{other:?}"),
        }
        assert!(parse("", &[("NSCURVE_NOPE_X", "1")]).is_err());
        assert!(parse("", &[("NSCURVE_RUN_NOPE", "1")]).is_err());
    }

    #[test]
    fn relative_trace_paths_follow_the_config() {
        let cfg = ExperimentConfig::from_toml(
            "[trace]\narrivals = \"a.csv\"\ndepartures = [\"d1.csv\", \"/abs/d2.csv\"]\n",
            Some(Path::new("/data/exp.toml")),
            std::iter::empty(),
        )
        .unwrap();
        assert_eq!(cfg.trace.arrivals, Some(PathBuf::from("/data/a.csv")));
        assert_eq!(cfg.trace.departures, vec![PathBuf::from("/data/d1.csv"), PathBuf::from("/abs/d2.csv")]);
    }

    #[test]
    fn service_builders() {
        let cfg = parse("[service]\nkind = \"latency_rate\"\nlatency = 20\nstationary_latency = 10\n", &[]).unwrap();
        assert!(cfg.sleep_model().is_none());
        let f = cfg.service_function().unwrap();
        assert_eq!(f.get(0, 100), 70.0);
        assert_eq!(f.get(50, 100), 40.0);
        let cfg = parse("[service]\nkind = \"random_sleep\"\nhops = 3\n", &[]).unwrap();
        assert_eq!(cfg.hop_models().unwrap().len(), 3);
        assert!(cfg.service_function().is_none());
    }
}
