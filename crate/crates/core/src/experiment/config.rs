use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::Serialize;

use crate::error::{EosError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ExperimentKind {
    Oscillate1D,
    Balance2D,
    Neuron,
    NeuronEmpirical,
    MatfacSym,
    MatfacQuasi,
    ConditionCheck,
    OrbitPredict,
    SharpnessTrace,
}

pub const ALL_KINDS: [ExperimentKind; 9] = [
    ExperimentKind::Oscillate1D,
    ExperimentKind::Balance2D,
    ExperimentKind::Neuron,
    ExperimentKind::NeuronEmpirical,
    ExperimentKind::MatfacSym,
    ExperimentKind::MatfacQuasi,
    ExperimentKind::ConditionCheck,
    ExperimentKind::OrbitPredict,
    ExperimentKind::SharpnessTrace,
];

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Oscillate1D => "oscillate1d",
            ExperimentKind::Balance2D => "balance2d",
            ExperimentKind::Neuron => "neuron",
            ExperimentKind::NeuronEmpirical => "neuron_empirical",
            ExperimentKind::MatfacSym => "matfac_sym",
            ExperimentKind::MatfacQuasi => "matfac_quasi",
            ExperimentKind::ConditionCheck => "condition_check",
            ExperimentKind::OrbitPredict => "orbit_predict",
            ExperimentKind::SharpnessTrace => "sharpness_trace",
        }
    }

    /// Case-insensitive; `_` and `-` are ignored, so `MatfacSym`,
    /// `matfac_sym` and `matfac-sym` all match.
    pub fn from_name(s: &str) -> Option<Self> {
        let norm = |t: &str| {
            t.chars()
                .filter(|c| *c != '_' && *c != '-')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let wanted = norm(s.trim());
        ALL_KINDS.into_iter().find(|k| norm(k.name()) == wanted)
    }

    pub fn params(self) -> &'static [ParamSpec] {
        use ParamKind::*;
        use ParamDefault::*;
        const fn p(key: &'static str, kind: ParamKind, default: ParamDefault) -> ParamSpec {
            ParamSpec { key, kind, default }
        }
        const FUNCTIONS: &[&str] = &["quartic", "sine", "quadratic", "tanh_l2"];
        const MODELS: &[&str] = &["quartic", "factor2d", "neuron"];
        match self {
            ExperimentKind::Oscillate1D => {
                const S: &[ParamSpec] = &[
                    p("mu", Num, Value("1")),
                    p("eta", Num, Required),
                    p("x0", Num, Required),
                    p("steps", Int, Value("10000")),
                    p("max_period", Int, Value("16")),
                    p("period_tol", Num, Value("1e-9")),
                    p("tail_window", Int, Value("64")),
                ];
                S
            }
            ExperimentKind::Balance2D => {
                const S: &[ParamSpec] = &[
                    p("mu", Num, Value("1")),
                    p("k", Num, Required),
                    p("x0", Num, Required),
                    p("y0", Num, Required),
                    p("steps", Int, Value("10000")),
                    p("theorem_mode", Bool, Value("true")),
                    p("max_period", Int, Value("16")),
                    p("period_tol", Num, Value("1e-9")),
                    p("tail_window", Int, Value("64")),
                ];
                S
            }
            ExperimentKind::Neuron => {
                const S: &[ParamSpec] = &[
                    p("d", Int, Value("2")),
                    p("k", Num, Required),
                    p("eps", Num, Value("0.1")),
                    p("init_angle", Num, Value("1.5707963267948966")),
                    p("steps", Int, Value("2000")),
                    p("theorem_mode", Bool, Value("true")),
                    p("max_period", Int, Value("16")),
                    p("period_tol", Num, Value("1e-9")),
                    p("tail_window", Int, Value("64")),
                ];
                S
            }
            ExperimentKind::NeuronEmpirical => {
                const S: &[ParamSpec] = &[
                    p("n", Int, Required),
                    p("d", Int, Value("2")),
                    p("eta", Num, Required),
                    p("v0", Num, Required),
                    p("wx0", Num, Value("0")),
                    p("wy0", Num, Required),
                    p("steps", Int, Value("3000")),
                    p("gap_threshold", Num, Value("0.05")),
                    p("floor_factor", Num, Value("10")),
                    p("tail_fraction", Num, Value("0.1")),
                    p("max_period", Int, Value("16")),
                    p("period_tol", Num, Value("1e-9")),
                    p("tail_window", Int, Value("64")),
                ];
                S
            }
            ExperimentKind::MatfacSym => {
                const S: &[ParamSpec] = &[
                    p("n", Int, Value("8")),
                    p("gap_ratio", Num, Value("0.6")),
                    p("eta_factor", Num, Value("1.02")),
                    p("eps_fraction", Num, Value("0.001")),
                    p("steps", Int, Value("20000")),
                    p("theorem_mode", Bool, Value("true")),
                    p("sharpness_every", Int, Value("0")),
                ];
                S
            }
            ExperimentKind::MatfacQuasi => {
                const S: &[ParamSpec] = &[
                    p("n", Int, Value("8")),
                    p("alpha", Num, Value("0.8")),
                    p("gap_ratio", Num, Value("0.6")),
                    p("eta_factor", Num, Value("1.02")),
                    p("eps_fraction", Num, Value("0.001")),
                    p("steps", Int, Value("20000")),
                    p("theorem_mode", Bool, Value("true")),
                    p("sharpness_every", Int, Value("0")),
                ];
                S
            }
            ExperimentKind::ConditionCheck => {
                const S: &[ParamSpec] = &[
                    p("function", Choice(FUNCTIONS), Required),
                    p("mu", Num, Value("1")),
                    p("amplitude", Num, Value("1")),
                    p("lambda", Num, Value("1")),
                    p("target", Num, Value("0.5")),
                    p("x_bar", Num, Optional),
                    p("eps", Num, Value("0.01")),
                ];
                S
            }
            ExperimentKind::OrbitPredict => {
                const S: &[ParamSpec] = &[
                    p("mu", Num, Value("1")),
                    p("eta", Num, Required),
                    p("eta_end", Num, Optional),
                    p("points", Int, Value("1")),
                ];
                S
            }
            ExperimentKind::SharpnessTrace => {
                const S: &[ParamSpec] = &[
                    p("model", Choice(MODELS), Required),
                    p("eta", Num, Required),
                    p("mu", Num, Value("1")),
                    p("x0", Num, Value("1.5")),
                    p("y0", Num, Value("0.5")),
                    p("d", Int, Value("2")),
                    p("v0", Num, Value("0.1")),
                    p("wy0", Num, Value("0.1")),
                    p("steps", Int, Value("500")),
                    p("sharpness_every", Int, Optional),
                ];
                S
            }
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Num,
    /// Non-negative integer.
    Int,
    Bool,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamDefault {
    Required,
    Optional,
    Value(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: ParamDefault,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ParamValue {
    Num(f64),
    Bool(bool),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Every declared key that has a value, defaults included.
    pub params: BTreeMap<String, ParamValue>,
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

const RESERVED: [&str; 3] = ["experiment", "seed", "output_dir"];

impl ExperimentConfig {
    /// Minimal valid config for `kind` with the given overrides, as if parsed.
    pub fn build(kind: ExperimentKind, pairs: &[(&str, &str)], seed: u64) -> Result<Self> {
        let raw = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), (Raw::Text(v.to_string()), format!("key `{k}`"))))
            .collect();
        let mut cfg = finish(kind, raw, kind.name().to_string())?;
        cfg.seed = seed;
        Ok(cfg)
    }

    pub fn num(&self, key: &str) -> f64 {
        match self.params.get(key) {
            Some(ParamValue::Num(x)) => *x,
            other => panic!("parameter `{key}` is not numeric: {other:?}"),
        }
    }

    pub fn opt_num(&self, key: &str) -> Option<f64> {
        match self.params.get(key) {
            Some(ParamValue::Num(x)) => Some(*x),
            _ => None,
        }
    }

    pub fn int(&self, key: &str) -> usize {
        self.num(key) as usize
    }

    pub fn flag(&self, key: &str) -> bool {
        match self.params.get(key) {
            Some(ParamValue::Bool(b)) => *b,
            other => panic!("parameter `{key}` is not boolean: {other:?}"),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        match self.params.get(key) {
            Some(ParamValue::Text(s)) => s,
            other => panic!("parameter `{key}` is not text: {other:?}"),
        }
    }

    /// Resolved configuration as echoed next to the outputs.
    pub fn echo(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        map.insert("experiment".into(), self.experiment.name().into());
        map.insert("seed".into(), self.seed.into());
        let params = serde_json::to_value(&self.params).expect("params serialize");
        map.insert("params".into(), params);
        serde_json::Value::Object(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Cli,
    Env,
    Config,
}

/// Precedence: CLI flag, then the `EOSLAB_SEED` value, then the config.
pub fn resolve_seed(config_seed: u64, cli: Option<u64>, env: Option<&str>) -> Result<(u64, SeedSource)> {
    if let Some(s) = cli {
        return Ok((s, SeedSource::Cli));
    }
    if let Some(raw) = env {
        let seed = raw.trim().parse::<u64>().map_err(|_| EosError::Config {
            location: "EOSLAB_SEED".into(),
            message: format!("not a non-negative integer: `{raw}`"),
        })?;
        return Ok((seed, SeedSource::Env));
    }
    Ok((config_seed, SeedSource::Config))
}

#[derive(Debug, Clone)]
enum Raw {
    Text(String),
    Json(serde_json::Value),
}

fn config_err(location: impl Into<String>, message: impl Into<String>) -> EosError {
    EosError::Config {
        location: location.into(),
        message: message.into(),
    }
}

/// Parses either the line-oriented format
///
/// ```text
/// # comment
/// [oscillate1d]
/// eta = 1.05
/// x0 = 0.5
/// ```
///
/// or a single JSON object carrying the same keys plus `"experiment"`.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    if text.trim_start().starts_with('{') {
        parse_json(text)
    } else {
        parse_lines(text)
    }
}

fn parse_json(text: &str) -> Result<ExperimentConfig> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| config_err(format!("line {}", e.line()), format!("invalid JSON: {e}")))?;
    let serde_json::Value::Object(map) = value else {
        return Err(config_err("document", "expected a JSON object"));
    };
    let kind = match map.get("experiment") {
        Some(serde_json::Value::String(s)) => ExperimentKind::from_name(s)
            .ok_or_else(|| config_err("key `experiment`", format!("unknown experiment `{s}`")))?,
        Some(_) => return Err(config_err("key `experiment`", "expected a string")),
        None => return Err(config_err("document", "missing key `experiment`")),
    };
    let raw = map
        .into_iter()
        .filter(|(k, _)| k != "experiment")
        .map(|(k, v)| {
            let loc = format!("key `{k}`");
            (k, (Raw::Json(v), loc))
        })
        .collect();
    finish(kind, raw, "document".into())
}

fn parse_lines(text: &str) -> Result<ExperimentConfig> {
    let mut kind: Option<(ExperimentKind, usize)> = None;
    let mut raw: BTreeMap<String, (Raw, String)> = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let loc = format!("line {lineno}");
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| config_err(&loc, "unterminated section header"))?;
            set_kind(&mut kind, name, lineno)?;
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(&loc, format!("expected `key = value`, got `{content}`")))?;
        let key = key.trim();
        let value = value.trim().trim_matches('"');
        if key.is_empty() {
            return Err(config_err(&loc, "empty key"));
        }
        if key == "experiment" {
            set_kind(&mut kind, value, lineno)?;
            continue;
        }
        if raw.contains_key(key) {
            return Err(config_err(&loc, format!("duplicate key `{key}`")));
        }
        raw.insert(key.to_string(), (Raw::Text(value.to_string()), format!("{loc}, key `{key}`")));
    }
    let (kind, line) = kind.ok_or_else(|| {
        config_err("document", "no experiment given; start with a `[name]` section")
    })?;
    finish(kind, raw, format!("line {line}"))
}

fn set_kind(slot: &mut Option<(ExperimentKind, usize)>, name: &str, line: usize) -> Result<()> {
    let loc = format!("line {line}");
    if slot.is_some() {
        return Err(config_err(loc, "only one experiment per config"));
    }
    let kind = ExperimentKind::from_name(name)
        .ok_or_else(|| config_err(&loc, format!("unknown experiment `{}`", name.trim())))?;
    *slot = Some((kind, line));
    Ok(())
}

fn parse_number(raw: &Raw, loc: &str) -> Result<f64> {
    let x = match raw {
        Raw::Text(s) => s
            .parse::<f64>()
            .map_err(|_| config_err(loc, format!("expected a number, got `{s}`")))?,
        Raw::Json(v) => v
            .as_f64()
            .ok_or_else(|| config_err(loc, format!("expected a number, got {v}")))?,
    };
    if !x.is_finite() {
        return Err(config_err(loc, "number must be finite"));
    }
    Ok(x)
}

fn parse_value(kind: ParamKind, raw: &Raw, loc: &str) -> Result<ParamValue> {
    match kind {
        ParamKind::Num => parse_number(raw, loc).map(ParamValue::Num),
        ParamKind::Int => {
            let x = parse_number(raw, loc)?;
            if x < 0.0 || x.fract() != 0.0 || x > 9.0e15 {
                return Err(config_err(loc, format!("expected a non-negative integer, got {x}")));
            }
            Ok(ParamValue::Num(x))
        }
        ParamKind::Bool => match raw {
            Raw::Text(s) => match s.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" => Ok(ParamValue::Bool(true)),
                "false" | "no" | "0" => Ok(ParamValue::Bool(false)),
                _ => Err(config_err(loc, format!("expected true/false, got `{s}`"))),
            },
            Raw::Json(v) => v
                .as_bool()
                .map(ParamValue::Bool)
                .ok_or_else(|| config_err(loc, format!("expected true/false, got {v}"))),
        },
        ParamKind::Choice(options) => {
            let s = match raw {
                Raw::Text(s) => s.clone(),
                Raw::Json(serde_json::Value::String(s)) => s.clone(),
                Raw::Json(v) => return Err(config_err(loc, format!("expected a string, got {v}"))),
            };
            let s = s.to_ascii_lowercase().replace('-', "_");
            if options.contains(&s.as_str()) {
                Ok(ParamValue::Text(s))
            } else {
                Err(config_err(loc, format!("expected one of {options:?}, got `{s}`")))
            }
        }
    }
}

fn finish(
    kind: ExperimentKind,
    mut raw: BTreeMap<String, (Raw, String)>,
    section_loc: String,
) -> Result<ExperimentConfig> {
    let seed = match raw.remove("seed") {
        Some((r, loc)) => parse_value(ParamKind::Int, &r, &loc).map(|v| match v {
            ParamValue::Num(x) => x as u64,
            _ => unreachable!(),
        })?,
        None => 0,
    };
    let output_dir = match raw.remove("output_dir") {
        Some((Raw::Text(s), _)) | Some((Raw::Json(serde_json::Value::String(s)), _)) => {
            Some(PathBuf::from(s))
        }
        Some((_, loc)) => return Err(config_err(loc, "output_dir must be a string")),
        None => None,
    };

    let specs = kind.params();
    if let Some((key, (_, loc))) = raw
        .iter()
        .find(|(k, _)| !specs.iter().any(|s| s.key == k.as_str()) && !RESERVED.contains(&k.as_str()))
    {
        let known: Vec<&str> = specs.iter().map(|s| s.key).collect();
        return Err(config_err(
            loc.clone(),
            format!("unknown key `{key}` for {kind}; expected one of {known:?}"),
        ));
    }

    let mut params = BTreeMap::new();
    for spec in specs {
        let value = match (raw.get(spec.key), spec.default) {
            (Some((r, loc)), _) => Some(parse_value(spec.kind, r, loc)?),
            (None, ParamDefault::Value(d)) => {
                Some(parse_value(spec.kind, &Raw::Text(d.into()), "built-in default")?)
            }
            (None, ParamDefault::Optional) => None,
            (None, ParamDefault::Required) => {
                return Err(config_err(
                    section_loc,
                    format!("missing required key `{}` for {kind}", spec.key),
                ))
            }
        };
        if let Some(v) = value {
            params.insert(spec.key.to_string(), v);
        }
    }
    let cfg = ExperimentConfig {
        experiment: kind,
        params,
        output_dir,
        seed,
    };
    validate(&cfg, &raw)?;
    Ok(cfg)
}

fn key_loc(raw: &BTreeMap<String, (Raw, String)>, key: &str) -> String {
    raw.get(key)
        .map(|(_, loc)| loc.clone())
        .unwrap_or_else(|| format!("key `{key}`"))
}

fn validate(cfg: &ExperimentConfig, raw: &BTreeMap<String, (Raw, String)>) -> Result<()> {
    let positive = |key: &str| -> Result<()> {
        if cfg.params.contains_key(key) && !(cfg.num(key) > 0.0) {
            return Err(config_err(key_loc(raw, key), format!("`{key}` must be positive")));
        }
        Ok(())
    };
    for key in ["mu", "eta", "k", "eps", "n", "steps", "alpha", "eta_factor", "amplitude"] {
        positive(key)?;
    }
    match cfg.experiment {
        ExperimentKind::Balance2D if cfg.flag("theorem_mode") => {
            let k = cfg.num("k");
            if !(k > 1.0 && k < 1.5) {
                return Err(config_err(
                    key_loc(raw, "k"),
                    format!("theorem mode requires 1<K<1.5, got K={k}"),
                ));
            }
        }
        ExperimentKind::Neuron if cfg.flag("theorem_mode") => {
            let k = cfg.num("k");
            if !(k > 1.0 && k <= 1.1) {
                return Err(config_err(
                    key_loc(raw, "k"),
                    format!("theorem mode requires 1<K<=1.1, got K={k}"),
                ));
            }
            if cfg.num("eps") > 0.1 {
                return Err(config_err(key_loc(raw, "eps"), "theorem mode requires eps<=0.1"));
            }
        }
        ExperimentKind::Neuron | ExperimentKind::NeuronEmpirical => {}
        ExperimentKind::MatfacSym | ExperimentKind::MatfacQuasi => {
            let r = cfg.num("gap_ratio");
            if !(r > 0.0 && r < 1.0) {
                return Err(config_err(key_loc(raw, "gap_ratio"), "gap_ratio must lie in (0, 1)"));
            }
            if cfg.int("n") < 2 {
                return Err(config_err(key_loc(raw, "n"), "n must be at least 2"));
            }
        }
        _ => {}
    }
    if matches!(cfg.experiment, ExperimentKind::Neuron | ExperimentKind::NeuronEmpirical)
        && cfg.int("d") < 2
    {
        return Err(config_err(key_loc(raw, "d"), "d must be at least 2"));
    }
    Ok(())
}
