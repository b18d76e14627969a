//! Experiment spec files.
//!
//! ```text
//! seed = 7
//!
//! [fixed-point]
//! experiment = invariance
//! alpha = 1
//! mu = qsd(gamma=0; alpha=1)
//! t_grid = 1, 5, 10
//! method = quadrature
//! ```
//!
//! Keys before the first section are defaults for every section.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use qsdlab_core::{Conditioning, InitialMeasure, SimConfig, TailExtension};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Invariance,
    Yaglom,
    Subcritical,
    NuEvolution,
    SurvivalCurve,
    HeavyScaled,
    Classify,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Invariance,
        Self::Yaglom,
        Self::Subcritical,
        Self::NuEvolution,
        Self::SurvivalCurve,
        Self::HeavyScaled,
        Self::Classify,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Invariance => "invariance",
            Self::Yaglom => "yaglom",
            Self::Subcritical => "subcritical",
            Self::NuEvolution => "nu-evolution",
            Self::SurvivalCurve => "survival-curve",
            Self::HeavyScaled => "heavy-scaled",
            Self::Classify => "classify",
        }
    }

    fn needs_t_grid(self) -> bool {
        self != Self::Classify
    }

    fn has_mc(self) -> bool {
        !matches!(self, Self::NuEvolution | Self::Classify)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown experiment `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Quadrature,
    Mc,
    Both,
    /// Analytic joint-tail prediction; heavy-scaled only.
    Prediction,
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "quadrature" => Self::Quadrature,
            "mc" => Self::Mc,
            "both" => Self::Both,
            "prediction" => Self::Prediction,
            _ => return Err(format!("unknown method `{s}` (quadrature, mc, both, prediction)")),
        })
    }
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::Quadrature => "quadrature",
            Self::Mc => "mc",
            Self::Both => "both",
            Self::Prediction => "prediction",
        }
    }

    pub fn quadrature(self) -> bool {
        matches!(self, Self::Quadrature | Self::Both)
    }

    pub fn mc(self) -> bool {
        matches!(self, Self::Mc | Self::Both)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub alpha: f64,
    pub mus: Vec<InitialMeasure>,
    pub t_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub method: Method,
    /// Template for Monte Carlo runs; `t` is set per grid point.
    pub sim: SimConfig,
    pub tolerance: Option<f64>,
    /// Line of the section header.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub experiments: Vec<ExperimentSpec>,
    pub seed: u64,
}

/// Measures expanded from `mu = catalog`.
pub fn catalog(alpha: f64) -> Vec<InitialMeasure> {
    let m = |r: qsdlab_core::Result<InitialMeasure>| r.expect("catalog parameters are valid");
    vec![
        m(InitialMeasure::dirac(1.0)),
        m(InitialMeasure::exponential(0.25)),
        m(InitialMeasure::exponential(0.5)),
        m(InitialMeasure::exponential(1.0)),
        m(InitialMeasure::exponential(2.0)),
        m(InitialMeasure::half_normal(1.0)),
        m(InitialMeasure::weibull(1.0, 1.5)),
        m(InitialMeasure::weibull(1.0, 0.7)),
        m(InitialMeasure::weibull(1.0, 0.5)),
        m(InitialMeasure::weibull(1.0, 0.3)),
        m(InitialMeasure::pareto(1.0, 1.0)),
        m(InitialMeasure::pareto(1.0, 2.0)),
        m(InitialMeasure::half_cauchy(1.0)),
        InitialMeasure::log_tail_law(),
        m(InitialMeasure::qsd(0.0, alpha)),
        m(InitialMeasure::qsd(0.5 * alpha, alpha)),
    ]
}

/// Accepts plain floats and `exp(x)`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.strip_prefix("exp(").and_then(|r| r.strip_suffix(')')) {
        Some(inner) => inner.trim().parse::<f64>().map(f64::exp),
        None => s.parse::<f64>(),
    }
    .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

/// Comma list whose items are numbers or ranges `a..b` (unit step) and
/// `a..b:step`, both inclusive of `b` when it lies on the grid.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim) {
        if item.is_empty() {
            return Err("empty grid item".into());
        }
        let Some((a, rest)) = item.split_once("..") else {
            out.push(parse_number(item)?);
            continue;
        };
        let (b, step) = match rest.split_once(':') {
            Some((b, st)) => (b, parse_number(st)?),
            None => (rest, 1.0),
        };
        let (a, b) = (parse_number(a)?, parse_number(b)?);
        if !(step > 0.0) || b < a {
            return Err(format!("bad range `{item}`"));
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(format!("range `{item}` has too many points"));
        }
        out.extend((0..=n).map(|i| a + i as f64 * step));
    }
    Ok(out)
}

fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut depth, mut start) = (0i32, 0);
    for (i, ch) in s.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            c if c == sep && depth == 0 => {
                parts.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&s[start..]);
    parts
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split('/')
        .map(|p| {
            let (x, q) = p
                .split_once(':')
                .ok_or_else(|| format!("tabulated point `{p}` is not x:tail"))?;
            Ok((parse_number(x)?, parse_number(q)?))
        })
        .collect()
}

/// `family(key=value; ...)`, or a bare family name for parameter-free laws.
pub fn parse_measure(s: &str, alpha: f64) -> Result<InitialMeasure, String> {
    let s = s.trim();
    let (family, body) = match s.split_once('(') {
        Some((f, rest)) => (
            f.trim(),
            rest.strip_suffix(')')
                .ok_or_else(|| format!("unbalanced parentheses in `{s}`"))?,
        ),
        None => (s, ""),
    };
    let mut kv = BTreeMap::new();
    for part in body.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part
            .split_once('=')
            .ok_or_else(|| format!("parameter `{part}` is not key=value"))?;
        if kv.insert(k.trim(), v.trim()).is_some() {
            return Err(format!("parameter `{}` given twice", k.trim()));
        }
    }
    let mut take = |key: &str| -> Result<&str, String> {
        kv.remove(key)
            .ok_or_else(|| format!("{family} needs parameter `{key}`"))
    };
    let mu = match family {
        "dirac" => InitialMeasure::dirac(parse_number(take("x0")?)?),
        "exponential" => InitialMeasure::exponential(parse_number(take("rate")?)?),
        "half-normal" => InitialMeasure::half_normal(parse_number(take("sigma")?)?),
        "weibull" => InitialMeasure::weibull(parse_number(take("scale")?)?, parse_number(take("shape")?)?),
        "pareto" => InitialMeasure::pareto(parse_number(take("xm")?)?, parse_number(take("kappa")?)?),
        "half-cauchy" => InitialMeasure::half_cauchy(parse_number(take("scale")?)?),
        "log-tail" => Ok(InitialMeasure::log_tail_law()),
        "qsd" => {
            let gamma = parse_number(take("gamma")?)?;
            let a = match kv.remove("alpha") {
                Some(v) => parse_number(v)?,
                None => alpha,
            };
            InitialMeasure::qsd(gamma, a)
        }
        "tabulated" => {
            let points = parse_points(take("points")?)?;
            let ext = match (kv.remove("power"), kv.remove("stretched")) {
                (None, None) => None,
                (Some(p), None) => Some(TailExtension::PowerLaw {
                    index: parse_number(p)?,
                }),
                (None, Some(st)) => {
                    let (c, k) = st
                        .split_once(':')
                        .ok_or_else(|| "stretched extension is coeff:shape".to_string())?;
                    Some(TailExtension::Stretched {
                        coeff: parse_number(c)?,
                        shape: parse_number(k)?,
                    })
                }
                _ => return Err("give at most one of power= and stretched=".into()),
            };
            InitialMeasure::tabulated(&points, ext)
        }
        other => return Err(format!("unknown family `{other}`")),
    }
    .map_err(|e| e.to_string())?;
    if let Some(k) = kv.keys().next() {
        return Err(format!("{family} has no parameter `{k}`"));
    }
    Ok(mu)
}

pub fn parse_measures(s: &str, alpha: f64) -> Result<Vec<InitialMeasure>, String> {
    if s.trim() == "catalog" {
        return Ok(catalog(alpha));
    }
    split_top_level(s, ',')
        .into_iter()
        .map(|m| parse_measure(m, alpha))
        .collect()
}

#[derive(Debug, Default)]
struct Section {
    name: String,
    line: usize,
    /// key -> (value, line)
    entries: BTreeMap<String, (String, usize)>,
}

const KEYS: [&str; 14] = [
    "experiment",
    "alpha",
    "mu",
    "t_grid",
    "c_grid",
    "method",
    "seed",
    "stream_id",
    "tolerance",
    "sim.n",
    "sim.dt",
    "sim.conditioning",
    "sim.replicas",
    "sim.bridge_correction",
];

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

fn parse_sections(text: &str, path: &str) -> CliResult<(Section, Vec<Section>)> {
    let err = |line: usize, msg: String| CliError::Config {
        path: path.to_string(),
        line,
        msg,
    };
    let mut defaults = Section::default();
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "section header must end with `]`".into()))?
                .trim();
            if !is_identifier(name) {
                return Err(err(line, format!("section name `{name}` must be [A-Za-z0-9._-]+")));
            }
            if sections.iter().any(|s| s.name == name) {
                return Err(err(line, format!("duplicate section `{name}`")));
            }
            sections.push(Section {
                name: name.to_string(),
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| err(line, format!("expected `key = value`, got `{content}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(err(line, format!("unknown key `{k}`")));
        }
        if v.is_empty() {
            return Err(err(line, format!("`{k}` has an empty value")));
        }
        let target = sections.last_mut().unwrap_or(&mut defaults);
        if target.entries.insert(k.to_string(), (v.to_string(), line)).is_some() {
            return Err(err(line, format!("`{k}` given twice")));
        }
    }
    Ok((defaults, sections))
}

fn lookup<'a>(sec: &'a Section, defaults: &'a Section, key: &str) -> Option<&'a (String, usize)> {
    sec.entries.get(key).or_else(|| defaults.entries.get(key))
}

fn build(sec: &Section, defaults: &Section, path: &str) -> CliResult<ExperimentSpec> {
    let err = |line: usize, msg: String| CliError::Config {
        path: path.to_string(),
        line,
        msg,
    };
    let get = |key: &str| lookup(sec, defaults, key);
    let required = |key: &str| get(key).ok_or_else(|| err(sec.line, format!("[{}] needs `{key}`", sec.name)));
    let parse = |key: &str, f: &dyn Fn(&str) -> Result<f64, String>| -> CliResult<Option<f64>> {
        get(key).map(|(v, l)| f(v).map_err(|m| err(*l, m))).transpose()
    };
    let integer = |key: &str| -> CliResult<Option<u64>> {
        get(key)
            .map(|(v, l)| {
                v.parse::<u64>()
                    .map_err(|_| err(*l, format!("`{key}` must be a nonnegative integer")))
            })
            .transpose()
    };

    let (kind_s, kind_line) = required("experiment")?;
    let kind: ExperimentKind = kind_s.parse().map_err(|m| err(*kind_line, m))?;

    let alpha = parse("alpha", &parse_number)?.unwrap_or(1.0);
    if !(alpha > 0.0) {
        let line = get("alpha").map_or(sec.line, |p| p.1);
        return Err(err(line, format!("alpha must be positive, got {alpha}")));
    }

    let (mu_s, mu_line) = required("mu")?;
    let mus = parse_measures(mu_s, alpha).map_err(|m| err(*mu_line, m))?;
    if kind != ExperimentKind::Classify && mus.len() != 1 {
        return Err(err(
            *mu_line,
            format!("{kind} takes exactly one measure, got {}", mus.len()),
        ));
    }

    let t_grid = match get("t_grid") {
        Some((v, l)) => {
            let g = parse_grid(v).map_err(|m| err(*l, m))?;
            if g.iter().any(|&t| !(t > 0.0)) {
                return Err(err(*l, "t_grid values must be positive".into()));
            }
            if g.windows(2).any(|w| w[1] <= w[0]) {
                return Err(err(*l, "t_grid must be strictly increasing".into()));
            }
            g
        }
        None if kind.needs_t_grid() => return Err(err(sec.line, format!("[{}] needs `t_grid`", sec.name))),
        None => Vec::new(),
    };

    let c_grid = match get("c_grid") {
        Some((v, l)) => {
            let g = parse_grid(v).map_err(|m| err(*l, m))?;
            if g.iter().any(|&c| !(c > 0.0)) {
                return Err(err(*l, "c_grid values must be positive".into()));
            }
            g
        }
        None if kind == ExperimentKind::HeavyScaled => {
            return Err(err(sec.line, format!("[{}] needs `c_grid`", sec.name)))
        }
        None => Vec::new(),
    };

    let method = match get("method") {
        Some((v, l)) => {
            let m: Method = v.parse().map_err(|m| err(*l, m))?;
            if m.mc() && !kind.has_mc() {
                return Err(err(*l, format!("{kind} has no Monte Carlo form")));
            }
            if m == Method::Prediction && kind != ExperimentKind::HeavyScaled {
                return Err(err(*l, "method `prediction` applies to heavy-scaled only".into()));
            }
            m
        }
        None => Method::Quadrature,
    };

    let tolerance = parse("tolerance", &parse_number)?;
    if let Some(tol) = tolerance {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(err(get("tolerance").unwrap().1, "tolerance must lie in (0, 1)".into()));
        }
    }

    let conditioning = match get("sim.conditioning") {
        Some((v, l)) => match v.as_str() {
            "rejection" => Conditioning::Rejection,
            "resampling" => Conditioning::Resampling,
            other => {
                return Err(err(
                    *l,
                    format!("unknown conditioning `{other}` (rejection, resampling)"),
                ))
            }
        },
        None => Conditioning::Rejection,
    };
    let n = integer("sim.n")?.unwrap_or(100_000) as usize;
    let mut sim = SimConfig::new(t_grid.last().copied().unwrap_or(1.0), n, conditioning);
    sim.seed = integer("seed")?.unwrap_or(0);
    sim.stream_id = integer("stream_id")?.unwrap_or(0);
    if let Some(r) = integer("sim.replicas")? {
        sim.replicas = r as usize;
    }
    if let Some((v, l)) = get("sim.bridge_correction") {
        sim.bridge_correction = v
            .parse()
            .map_err(|_| err(*l, "sim.bridge_correction must be true or false".into()))?;
    }
    if let Some(dt) = parse("sim.dt", &parse_number)? {
        sim.dt = dt;
    }
    if method.mc() {
        let line = get("sim.n").map_or(sec.line, |p| p.1);
        sim.validate().map_err(|e| err(line, e.to_string()))?;
        if let Some(&t0) = t_grid.first() {
            if sim.dt > t0 {
                return Err(err(line, format!("sim.dt {} exceeds the first time {t0}", sim.dt)));
            }
        }
    }

    Ok(ExperimentSpec {
        name: sec.name.clone(),
        kind,
        alpha,
        mus,
        t_grid,
        c_grid,
        method,
        sim,
        tolerance,
        line: sec.line,
    })
}

pub fn parse_spec(text: &str, path: &str) -> CliResult<SpecFile> {
    let (defaults, sections) = parse_sections(text, path)?;
    if sections.is_empty() {
        return Err(CliError::Config {
            path: path.to_string(),
            line: text.lines().count().max(1),
            msg: "no [section] found".into(),
        });
    }
    let experiments = sections
        .iter()
        .map(|s| build(s, &defaults, path))
        .collect::<CliResult<Vec<_>>>()?;
    let seed = experiments.first().map_or(0, |e| e.sim.seed);
    Ok(SpecFile { experiments, seed })
}
