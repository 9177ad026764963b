//! Flat INI-style run configuration: `[section]` headers and `key = value`
//! lines, nothing else. Unknown sections or keys are hard errors so typos
//! cannot silently change an experiment.

use std::collections::BTreeMap;

use crate::engine::{Construction, EngineConfig, RecordMode};
use crate::error::{PdmpError, Result};
use crate::samplers::{BpsSpec, BpsVariant, ZigZagSpec};
use crate::state_space::{Potential, VelocitySpace};

fn err(msg: impl Into<String>) -> PdmpError {
    PdmpError::Config(msg.into())
}

/// Raw parsed document: section -> key -> value.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig> {
        let mut out = RawConfig::default();
        let mut current: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                let name = name.trim().to_string();
                if out.sections.contains_key(&name) {
                    return Err(err(format!("line {}: duplicate section [{name}]", lineno + 1)));
                }
                out.sections.insert(name.clone(), BTreeMap::new());
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let section = current
                .as_ref()
                .ok_or_else(|| err(format!("line {}: key outside any section", lineno + 1)))?;
            let key = key.trim().to_string();
            let entries = out.sections.get_mut(section).unwrap();
            if entries.contains_key(&key) {
                return Err(err(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            entries.insert(key, value.trim().to_string());
        }
        Ok(out)
    }

    fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }
}

/// Typed view of one section with an allowlist of keys.
struct Section<'a> {
    name: &'a str,
    entries: BTreeMap<String, String>,
}

impl<'a> Section<'a> {
    fn new(raw: &RawConfig, name: &'a str, allowed: &[&str]) -> Result<Section<'a>> {
        let entries = raw.section(name).cloned().unwrap_or_default();
        for key in entries.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(err(format!("unknown key `{key}` in section [{name}]")));
            }
        }
        Ok(Section { name, entries })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|s| s.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| err(format!("missing key `{key}` in section [{}]", self.name)))
    }

    fn parse_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| err(format!("key `{key}`: `{v}` is not a number")))
            })
            .transpose()
    }

    fn parse_u64(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| err(format!("key `{key}`: `{v}` is not an integer")))
            })
            .transpose()
    }

    fn parse_bool(&self, key: &str) -> Result<Option<bool>> {
        self.get(key)
            .map(|v| match v {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(err(format!("key `{key}`: `{v}` is not a boolean"))),
            })
            .transpose()
    }

    fn parse_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|p| {
                        p.trim()
                            .parse::<f64>()
                            .map_err(|_| err(format!("key `{key}`: `{p}` is not a number")))
                    })
                    .collect()
            })
            .transpose()
    }
}

/// Which sampler the [sampler] section describes.
#[derive(Debug, Clone, PartialEq)]
pub enum SamplerConfig {
    Bps(BpsSpec),
    ZigZag(ZigZagSpec),
}

impl SamplerConfig {
    pub fn velocity_space(&self) -> VelocitySpace {
        match self {
            SamplerConfig::Bps(spec) => spec.velocity_space.clone(),
            SamplerConfig::ZigZag(spec) => VelocitySpace::SignedHypercube(spec.d),
        }
    }

    pub fn potential(&self) -> &Potential {
        match self {
            SamplerConfig::Bps(spec) => &spec.potential,
            SamplerConfig::ZigZag(spec) => &spec.potential,
        }
    }
}

/// Experiment-level knobs shared across subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_replicas: usize,
    pub n_runs: usize,
    pub t_grid: Vec<f64>,
    pub t_marginal: f64,
    pub candidate_sigma: f64,
    pub n_samples: usize,
    pub caps: Vec<f64>,
    pub eps: f64,
    /// Constant decoupling-intensity dominator for `couple`; defaults to 4·eps
    /// for the smoothed variant and is required otherwise.
    pub g_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sampler: SamplerConfig,
    pub engine: EngineConfig,
    pub experiment: ExperimentConfig,
}

const SAMPLER_KEYS: &[&str] = &[
    "sampler",
    "potential",
    "d",
    "a",
    "velocity_space",
    "lambda_c",
    "variant",
    "M",
    "eps",
    "lambda_star",
    "refresh_rate",
    "full_reversal",
];
const ENGINE_KEYS: &[&str] = &["t_end", "max_events", "seed", "construction", "grid_dt"];
const EXPERIMENT_KEYS: &[&str] = &[
    "n_replicas",
    "n_runs",
    "t_grid",
    "t_marginal",
    "candidate_sigma",
    "n_samples",
    "caps",
    "g_bound",
];

fn parse_potential(sec: &Section) -> Result<Potential> {
    let d = sec.parse_u64("d")?.unwrap_or(1) as usize;
    match sec.require("potential")? {
        "gaussian_iso" => Ok(Potential::GaussianIso { d }),
        "gaussian_aniso" => {
            let a = sec
                .parse_f64_list("a")?
                .ok_or_else(|| err("gaussian_aniso requires key `a` (row-major matrix)"))?;
            if a.len() != d * d {
                return Err(err(format!("key `a`: expected {} entries, got {}", d * d, a.len())));
            }
            Ok(Potential::GaussianAniso { d, a })
        }
        "double_well" => {
            if d != 1 {
                return Err(err("double_well potential is one-dimensional"));
            }
            Ok(Potential::DoubleWell1d)
        }
        other => Err(err(format!("unknown potential `{other}`"))),
    }
}

fn parse_velocity_space(sec: &Section, d: usize) -> Result<VelocitySpace> {
    match sec.get("velocity_space").unwrap_or("std_gaussian") {
        "std_gaussian" => Ok(VelocitySpace::StdGaussian(d)),
        "unit_sphere" => Ok(VelocitySpace::UnitSphere(d)),
        "signed_hypercube" => Ok(VelocitySpace::SignedHypercube(d)),
        other => Err(err(format!("unknown velocity space `{other}`"))),
    }
}

fn parse_sampler(raw: &RawConfig) -> Result<SamplerConfig> {
    let sec = Section::new(raw, "sampler", SAMPLER_KEYS)?;
    let potential = parse_potential(&sec)?;
    let d = potential.dim();
    match sec.require("sampler")? {
        "bps" => {
            let lambda_c = sec
                .parse_f64("lambda_c")?
                .ok_or_else(|| err("bps requires key `lambda_c`"))?;
            if lambda_c <= 0.0 {
                return Err(err("lambda_c must be positive"));
            }
            let variant = match sec.get("variant").unwrap_or("exact") {
                "exact" => BpsVariant::Exact,
                "truncated" => BpsVariant::Truncated(
                    sec.parse_f64("M")?
                        .ok_or_else(|| err("truncated variant requires key `M`"))?,
                ),
                "smoothed" => BpsVariant::Smoothed(
                    sec.parse_f64("eps")?
                        .ok_or_else(|| err("smoothed variant requires key `eps`"))?,
                ),
                other => return Err(err(format!("unknown variant `{other}`"))),
            };
            let mut spec = BpsSpec::new(potential, parse_velocity_space(&sec, d)?, lambda_c)
                .with_variant(variant);
            // `lambda_star` routes bounce event times through thinning with
            // this dominating rate instead of analytic/numeric inversion
            spec.bounce_bound = sec.parse_f64("lambda_star")?;
            if spec.bounce_bound.map_or(false, |b| b <= 0.0) {
                return Err(err("lambda_star must be positive"));
            }
            Ok(SamplerConfig::Bps(spec))
        }
        "zigzag" => {
            let mut spec = ZigZagSpec::new(potential);
            spec.refresh_rate = sec.parse_f64("refresh_rate")?;
            spec.full_reversal = sec.parse_bool("full_reversal")?.unwrap_or(false);
            Ok(SamplerConfig::ZigZag(spec))
        }
        other => Err(err(format!("unknown sampler `{other}`"))),
    }
}

fn parse_engine(raw: &RawConfig) -> Result<EngineConfig> {
    let sec = Section::new(raw, "engine", ENGINE_KEYS)?;
    let t_end = sec
        .parse_f64("t_end")?
        .ok_or_else(|| err("missing key `t_end` in section [engine]"))?;
    if t_end <= 0.0 {
        return Err(err("t_end must be positive"));
    }
    let seed = sec.parse_u64("seed")?.unwrap_or(0);
    let mut cfg = EngineConfig::new(t_end, seed);
    if let Some(m) = sec.parse_u64("max_events")? {
        if m == 0 {
            return Err(err("max_events must be at least 1"));
        }
        cfg = cfg.with_max_events(m as usize);
    }
    match sec.get("construction").unwrap_or("c1") {
        "c1" | "C1" => cfg.construction = Construction::C1,
        "c2" | "C2" => cfg.construction = Construction::C2,
        other => return Err(err(format!("unknown construction `{other}`"))),
    }
    if let Some(dt) = sec.parse_f64("grid_dt")? {
        if dt <= 0.0 {
            return Err(err("grid_dt must be positive"));
        }
        cfg.record = RecordMode::SkeletonPlusGrid(dt);
    }
    Ok(cfg)
}

fn parse_experiment(raw: &RawConfig, sampler: &SamplerConfig) -> Result<ExperimentConfig> {
    let sec = Section::new(raw, "experiment", EXPERIMENT_KEYS)?;
    let eps = match sampler {
        SamplerConfig::Bps(spec) => match spec.variant {
            BpsVariant::Smoothed(e) => e,
            _ => 0.0,
        },
        SamplerConfig::ZigZag(_) => 0.0,
    };
    Ok(ExperimentConfig {
        n_replicas: sec.parse_u64("n_replicas")?.unwrap_or(20) as usize,
        n_runs: sec.parse_u64("n_runs")?.unwrap_or(10_000) as usize,
        t_grid: sec.parse_f64_list("t_grid")?.unwrap_or_default(),
        t_marginal: sec.parse_f64("t_marginal")?.unwrap_or(1.0),
        candidate_sigma: sec.parse_f64("candidate_sigma")?.unwrap_or(1.0),
        n_samples: sec.parse_u64("n_samples")?.unwrap_or(100_000) as usize,
        caps: sec.parse_f64_list("caps")?.unwrap_or_default(),
        eps,
        g_bound: sec.parse_f64("g_bound")?,
    })
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let raw = RawConfig::parse(text)?;
        for name in raw.sections.keys() {
            if !["sampler", "engine", "experiment"].contains(&name.as_str()) {
                return Err(err(format!("unknown section [{name}]")));
            }
        }
        let sampler = parse_sampler(&raw)?;
        let engine = parse_engine(&raw)?;
        let experiment = parse_experiment(&raw, &sampler)?;
        Ok(RunConfig {
            sampler,
            engine,
            experiment,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "\
[sampler]
sampler = bps
potential = gaussian_iso
d = 1
lambda_c = 1.0

[engine]
t_end = 1.0
seed = 42
";

    #[test]
    fn parses_minimal_bps_config() {
        let cfg = RunConfig::parse(GOOD).unwrap();
        match cfg.sampler {
            SamplerConfig::Bps(spec) => {
                assert_eq!(spec.lambda_c, 1.0);
                assert_eq!(spec.variant, BpsVariant::Exact);
            }
            _ => panic!("expected bps"),
        }
        assert_eq!(cfg.engine.t_end, 1.0);
        assert_eq!(cfg.engine.seed, 42);
        assert_eq!(cfg.experiment.n_runs, 10_000);
    }

    #[test]
    fn rejects_unknown_keys_and_sections() {
        let bad_key = GOOD.replace("lambda_c = 1.0", "lambda_c = 1.0\nlambdac = 2");
        assert!(RunConfig::parse(&bad_key).is_err());

        let bad_section = format!("{GOOD}\n[extras]\nfoo = 1\n");
        assert!(RunConfig::parse(&bad_section).is_err());
    }

    #[test]
    fn rejects_missing_required_keys() {
        let no_rate = GOOD.replace("lambda_c = 1.0\n", "");
        assert!(RunConfig::parse(&no_rate).is_err());
        let no_t_end = GOOD.replace("t_end = 1.0\n", "");
        assert!(RunConfig::parse(&no_t_end).is_err());
    }

    #[test]
    fn parses_variants_and_lists() {
        let text = "\
[sampler]
sampler = bps
potential = gaussian_aniso
d = 2
a = 2.0, 0.5, 0.5, 1.0
lambda_c = 0.5
variant = smoothed
eps = 0.2

[engine]
t_end = 2.0

[experiment]
t_grid = 0.25, 0.5, 1, 2
n_runs = 500
";
        let cfg = RunConfig::parse(text).unwrap();
        match &cfg.sampler {
            SamplerConfig::Bps(spec) => {
                assert_eq!(spec.variant, BpsVariant::Smoothed(0.2));
                assert!(matches!(spec.potential, Potential::GaussianAniso { d: 2, .. }));
            }
            _ => panic!(),
        }
        assert_eq!(cfg.experiment.t_grid, vec![0.25, 0.5, 1.0, 2.0]);
        assert_eq!(cfg.experiment.eps, 0.2);
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = format!("# leading comment\n\n{GOOD}# trailing\n");
        assert!(RunConfig::parse(&text).is_ok());
    }

    #[test]
    fn zigzag_config() {
        let text = "\
[sampler]
sampler = zigzag
potential = gaussian_iso
d = 2
refresh_rate = 0.3

[engine]
t_end = 10
construction = c2
";
        let cfg = RunConfig::parse(text).unwrap();
        match cfg.sampler {
            SamplerConfig::ZigZag(spec) => {
                assert_eq!(spec.d, 2);
                assert_eq!(spec.refresh_rate, Some(0.3));
            }
            _ => panic!(),
        }
        assert_eq!(cfg.engine.construction, Construction::C2);
    }
}
