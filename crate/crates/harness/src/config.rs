//! Experiment configuration: a flat `key = value` text format with `[section]` headers.
//!
//! ```text
//! # comment
//! [model]
//! theta = 2
//! p = 2
//! mobility = constant(1)
//! ```
//!
//! Every key belongs to a known section; unknown sections or keys, duplicate keys and
//! unparsable values are rejected with the offending line number.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use pcahn_core::dynamics::{Cadence, MobilityModel, SolverConfig};
use pcahn_core::field::Grid;
use pcahn_core::metastability::{DetectionSet, FitModel, TransitionPattern};
use pcahn_core::potential::PotentialParams;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw sections as parsed, before typing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Document {
    sections: BTreeMap<String, (usize, BTreeMap<String, Entry>)>,
}

impl Document {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| HarnessError::config(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(HarnessError::config(line, format!("bad section name '{name}'")));
                }
                if doc.sections.contains_key(name) {
                    return Err(HarnessError::config(line, format!("duplicate section [{name}]")));
                }
                doc.sections.insert(name.to_string(), (line, BTreeMap::new()));
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| HarnessError::config(line, "expected 'key = value'"))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(HarnessError::config(line, "empty key"));
            }
            let section = current
                .as_ref()
                .ok_or_else(|| HarnessError::config(line, format!("key '{key}' outside any section")))?;
            let entries = &mut doc.sections.get_mut(section).expect("section exists").1;
            if entries.contains_key(key) {
                return Err(HarnessError::config(line, format!("duplicate key '{key}' in [{section}]")));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: value.to_string(),
                    line,
                },
            );
        }
        Ok(doc)
    }

    fn take(&mut self, section: &str, key: &str) -> Option<Entry> {
        self.sections.get_mut(section).and_then(|(_, s)| s.remove(key))
    }

    /// Errors on whatever was not consumed.
    fn finish(self) -> Result<()> {
        for (name, (line, entries)) in self.sections {
            if !KNOWN_SECTIONS.contains(&name.as_str()) {
                return Err(HarnessError::config(line, format!("unknown section [{name}]")));
            }
            if let Some((key, e)) = entries.into_iter().next() {
                return Err(HarnessError::config(e.line, format!("unknown key '{key}' in [{name}]")));
            }
        }
        Ok(())
    }
}

const KNOWN_SECTIONS: &[&str] = &[
    "model", "domain", "pattern", "sweep", "solver", "output", "steady", "pulse", "fit", "check",
    "simulate",
];

fn parse_f64(e: &Entry) -> Result<f64> {
    e.value
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| HarnessError::config(e.line, format!("expected a finite number, got '{}'", e.value)))
}

fn parse_usize(e: &Entry) -> Result<usize> {
    e.value
        .parse()
        .map_err(|_| HarnessError::config(e.line, format!("expected a non-negative integer, got '{}'", e.value)))
}

fn parse_bool(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        v => Err(HarnessError::config(e.line, format!("expected true or false, got '{v}'"))),
    }
}

fn parse_list(e: &Entry) -> Result<Vec<f64>> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::config(e.line, format!("bad list element '{s}'")))
        })
        .collect()
}

/// `lo..hi` intervals or single values, comma separated.
fn parse_detection(e: &Entry) -> Result<DetectionSet> {
    let bad = |m: String| HarnessError::config(e.line, m);
    let mut intervals = Vec::new();
    for item in e.value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (lo, hi) = match item.split_once("..") {
            Some((lo, hi)) => (lo.trim(), hi.trim()),
            None => (item, item),
        };
        let lo: f64 = lo.parse().map_err(|_| bad(format!("bad detection bound '{lo}'")))?;
        let hi: f64 = hi.parse().map_err(|_| bad(format!("bad detection bound '{hi}'")))?;
        intervals.push((lo, hi));
    }
    DetectionSet::new(intervals).map_err(|err| bad(err.to_string()))
}

/// Per-`ε` time budget of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TMaxRule {
    Constant { t_max: f64 },
    /// `m · exp(a p / (2 ε))`.
    Exponential { m: f64, a: f64 },
    /// `l · ε^(-k)`.
    Algebraic { l: f64, k: f64 },
}

impl TMaxRule {
    pub fn t_max(&self, epsilon: f64, p: f64) -> f64 {
        match *self {
            TMaxRule::Constant { t_max } => t_max,
            TMaxRule::Exponential { m, a } => m * (a * p / (2.0 * epsilon)).exp(),
            TMaxRule::Algebraic { l, k } => l * epsilon.powf(-k),
        }
    }

    fn parse(e: &Entry) -> Result<Self> {
        let bad = || {
            HarnessError::config(
                e.line,
                format!("t_max must be a number, exp(m, a) or power(l, k); got '{}'", e.value),
            )
        };
        let v = e.value.as_str();
        let args = |name: &str| -> Option<(f64, f64)> {
            let inner = v.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
            let (x, y) = inner.split_once(',')?;
            Some((x.trim().parse().ok()?, y.trim().parse().ok()?))
        };
        let rule = if let Some((m, a)) = args("exp") {
            TMaxRule::Exponential { m, a }
        } else if let Some((l, k)) = args("power") {
            TMaxRule::Algebraic { l, k }
        } else {
            TMaxRule::Constant {
                t_max: v.parse().map_err(|_| bad())?,
            }
        };
        let ok = match rule {
            TMaxRule::Constant { t_max } => t_max > 0.0 && t_max.is_finite(),
            TMaxRule::Exponential { m, a } => m > 0.0 && a.is_finite() && m.is_finite(),
            TMaxRule::Algebraic { l, k } => l > 0.0 && k.is_finite() && l.is_finite(),
        };
        if ok {
            Ok(rule)
        } else {
            Err(bad())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyKind {
    Heteroclinic,
    Pulse,
    Chain,
    Subcritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckScale {
    /// Everything except the metastable sweeps.
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub theta: f64,
    pub p: f64,
    pub epsilon: f64,
    pub beta: f64,
    pub mobility: MobilityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub t_max: TMaxRule,
    /// `None` means `r / 2`.
    pub delta: Option<f64>,
    pub detection: DetectionSet,
    pub seed_amplitude: f64,
    pub stop_at_exit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub grid: Grid,
    pub pattern: Option<TransitionPattern>,
    pub sweep: SweepConfig,
    pub solver: SolverConfig,
    pub output_dir: Option<PathBuf>,
    pub cadence: Cadence,
    pub svg: bool,
    pub steady_kind: SteadyKind,
    pub steady_layers: Vec<f64>,
    pub samples: usize,
    pub pulse_beta: Option<f64>,
    pub pulse_distance: Option<f64>,
    pub fit_table: Option<PathBuf>,
    pub fit_model: Option<FitModel>,
    pub check_scale: CheckScale,
    pub seed: u64,
    pub resume: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // Relative input paths are taken relative to the config file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.fit_table, &mut cfg.resume].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok((cfg, text))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = Document::parse(text)?;
        let num = |doc: &mut Document, s: &str, k: &str, default: Option<f64>| -> Result<f64> {
            match doc.take(s, k) {
                Some(e) => parse_f64(&e),
                None => default.ok_or_else(|| HarnessError::config(0, format!("missing required key '{k}' in [{s}]"))),
            }
        };
        let theta_line = doc.sections.get("model").map_or(0, |s| s.0);
        let theta = num(&mut doc, "model", "theta", None)?;
        let p = num(&mut doc, "model", "p", None)?;
        let epsilon = num(&mut doc, "model", "epsilon", Some(0.05))?;
        let beta = num(&mut doc, "model", "beta", Some(0.0))?;
        let mobility = match doc.take("model", "mobility") {
            Some(e) => e
                .value
                .parse::<MobilityModel>()
                .map_err(|err| HarnessError::config(e.line, err.to_string()))?,
            None => MobilityModel::Constant { value: 1.0 },
        };
        PotentialParams::new(theta, p, epsilon).map_err(|e| HarnessError::config(theta_line, e.to_string()))?;

        let a = num(&mut doc, "domain", "a", Some(0.0))?;
        let b = num(&mut doc, "domain", "b", Some(1.0))?;
        let n = match doc.take("domain", "n") {
            Some(e) => parse_usize(&e)?,
            None => 512,
        };
        let domain_line = doc.sections.get("domain").map_or(0, |s| s.0);
        let grid = Grid::new(a, b, n).map_err(|e| HarnessError::config(domain_line, e.to_string()))?;

        let pattern = match doc.take("pattern", "jumps") {
            None => None,
            Some(je) => {
                let jumps = parse_list(&je)?;
                let first_sign = match doc.take("pattern", "signs") {
                    None => -1.0,
                    Some(e) => {
                        let signs = parse_list(&e)?;
                        let alternating = signs.windows(2).all(|w| w[0] == -w[1]);
                        if !(signs.len() == 1 || (signs.len() == jumps.len() + 1 && alternating)) {
                            return Err(HarnessError::config(
                                e.line,
                                "signs must be the first plateau sign or one alternating sign per plateau",
                            ));
                        }
                        signs[0]
                    }
                };
                let r = match doc.take("pattern", "r") {
                    Some(e) => parse_f64(&e)?,
                    None => return Err(HarnessError::config(je.line, "[pattern] needs r")),
                };
                Some(
                    TransitionPattern::new(a, b, jumps, first_sign, r)
                        .map_err(|e| HarnessError::config(je.line, e.to_string()))?,
                )
            }
        };

        let epsilons = match doc.take("sweep", "epsilons") {
            Some(e) => {
                let list = parse_list(&e)?;
                if list.is_empty() || list.iter().any(|&x| x <= 0.0) {
                    return Err(HarnessError::config(e.line, "epsilons must be a nonempty list of positive values"));
                }
                list
            }
            None => vec![epsilon],
        };
        let t_max = match doc.take("sweep", "t_max") {
            Some(e) => TMaxRule::parse(&e)?,
            None => TMaxRule::Constant { t_max: 1.0 },
        };
        let delta = match doc.take("sweep", "delta") {
            Some(e) => {
                let d = parse_f64(&e)?;
                if let Some(pat) = &pattern {
                    if !(d > 0.0 && d < pat.r()) {
                        return Err(HarnessError::config(e.line, format!("delta must lie in (0, r = {})", pat.r())));
                    }
                }
                Some(d)
            }
            None => None,
        };
        let detection = match doc.take("sweep", "K") {
            Some(e) => parse_detection(&e)?,
            None => DetectionSet::default_set(),
        };
        let seed_amplitude = num(&mut doc, "sweep", "seed_amplitude", Some(1e-8))?;
        let stop_at_exit = match doc.take("sweep", "stop_at_exit") {
            Some(e) => parse_bool(&e)?,
            None => true,
        };

        let mut solver = SolverConfig::default();
        for (key, slot) in [
            ("dt_init", &mut solver.dt_init),
            ("dt_min", &mut solver.dt_min),
            ("dt_max", &mut solver.dt_max),
            ("newton_tol", &mut solver.newton_tol),
            ("energy_tol", &mut solver.energy_tol),
            ("grow", &mut solver.grow),
            ("shrink", &mut solver.shrink),
        ] {
            if let Some(e) = doc.take("solver", key) {
                *slot = parse_f64(&e)?;
            }
        }
        if let Some(e) = doc.take("solver", "newton_max_iter") {
            solver.newton_max_iter = parse_usize(&e)?;
        }
        if let Some(e) = doc.take("solver", "easy_iters") {
            solver.easy_iters = parse_usize(&e)?;
        }
        if let Some(e) = doc.take("solver", "max_steps") {
            solver.max_steps = Some(parse_usize(&e)? as u64);
        }
        if let Some(e) = doc.take("solver", "delta_reg") {
            solver.delta_reg = Some(parse_f64(&e)?);
        }
        if let Some(e) = doc.take("solver", "growth_tol") {
            solver.growth_tol = if e.value == "none" { None } else { Some(parse_f64(&e)?) };
        }
        solver.t_max = t_max.t_max(epsilon, p);
        let solver_line = doc.sections.get("solver").map_or(0, |s| s.0);
        solver.validate().map_err(|e| HarnessError::config(solver_line, e.to_string()))?;

        let output_dir = doc.take("output", "directory").map(|e| PathBuf::from(e.value));
        let mut cadence = Cadence::default();
        for (key, slot) in [
            ("cadence_dt", &mut cadence.linear_dt),
            ("cadence_until", &mut cadence.linear_until),
            ("cadence_ratio", &mut cadence.ratio),
        ] {
            if let Some(e) = doc.take("output", key) {
                *slot = parse_f64(&e)?;
            }
        }
        let output_line = doc.sections.get("output").map_or(0, |s| s.0);
        cadence.validate().map_err(|e| HarnessError::config(output_line, e.to_string()))?;
        let svg = match doc.take("output", "svg") {
            Some(e) => parse_bool(&e)?,
            None => false,
        };

        let steady_kind = match doc.take("steady", "kind") {
            None => SteadyKind::Heteroclinic,
            Some(e) => match e.value.as_str() {
                "heteroclinic" => SteadyKind::Heteroclinic,
                "pulse" => SteadyKind::Pulse,
                "chain" => SteadyKind::Chain,
                "subcritical" => SteadyKind::Subcritical,
                v => {
                    return Err(HarnessError::config(
                        e.line,
                        format!("unknown steady kind '{v}' (heteroclinic, pulse, chain, subcritical)"),
                    ))
                }
            },
        };
        let steady_layers = match doc.take("steady", "layers") {
            Some(e) => parse_list(&e)?,
            None => pattern.as_ref().map(|p| p.jumps().to_vec()).unwrap_or_default(),
        };
        let samples = match doc.take("steady", "samples") {
            Some(e) => parse_usize(&e)?,
            None => 2001,
        };
        let pulse_beta = doc.take("pulse", "beta").map(|e| parse_f64(&e)).transpose()?;
        let pulse_distance = doc.take("pulse", "distance").map(|e| parse_f64(&e)).transpose()?;

        let fit_table = doc.take("fit", "table").map(|e| PathBuf::from(e.value));
        let fit_model = match doc.take("fit", "model") {
            None => None,
            Some(e) if e.value == "both" => None,
            Some(e) => Some(e.value.parse::<FitModel>().map_err(|m| HarnessError::config(e.line, m))?),
        };

        let check_scale = match doc.take("check", "scale") {
            None => CheckScale::Quick,
            Some(e) => match e.value.as_str() {
                "quick" => CheckScale::Quick,
                "full" => CheckScale::Full,
                v => return Err(HarnessError::config(e.line, format!("scale must be quick or full, got '{v}'"))),
            },
        };
        let seed = match doc.take("check", "seed") {
            Some(e) => parse_usize(&e)? as u64,
            None => 20240601,
        };
        let resume = doc.take("simulate", "resume").map(|e| PathBuf::from(e.value));
        doc.finish()?;

        Ok(Self {
            model: ModelConfig {
                theta,
                p,
                epsilon,
                beta,
                mobility,
            },
            grid,
            pattern,
            sweep: SweepConfig {
                epsilons,
                t_max,
                delta,
                detection,
                seed_amplitude,
                stop_at_exit,
            },
            solver,
            output_dir,
            cadence,
            svg,
            steady_kind,
            steady_layers,
            samples,
            pulse_beta,
            pulse_distance,
            fit_table,
            fit_model,
            check_scale,
            seed,
            resume,
        })
    }

    /// Potential parameters at the model `ε`.
    pub fn params(&self) -> PotentialParams {
        self.params_at(self.model.epsilon).expect("validated at parse time")
    }

    pub fn params_at(&self, epsilon: f64) -> Result<PotentialParams> {
        PotentialParams::new(self.model.theta, self.model.p, epsilon).map_err(HarnessError::numerical)
    }

    pub fn require_pattern(&self) -> Result<&TransitionPattern> {
        self.pattern
            .as_ref()
            .ok_or_else(|| HarnessError::config(0, "this command needs a [pattern] section with jumps and r"))
    }
}
