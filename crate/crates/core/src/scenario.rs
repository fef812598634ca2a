//! Scenario text format.
//!
//! A scenario is a line-oriented document. `#` starts a comment; blank lines
//! are ignored. An optional top-level `budget = R` line precedes the UE
//! sections. Each UE opens with `[ue]`, may set `beta = <weight>` (default 1)
//! and lists one application per line:
//!
//! ```text
//! budget = 105
//!
//! [ue]
//! beta = 1
//! app sigmoid a=5 b=5 alpha=0.1
//! app log k=15 rmax=100 alpha=0.9
//! ```
//!
//! Every parameter must be positive and the `alpha` values of a UE must sum
//! to 1 within `1e-6`; sums off by more than `1e-9` are renormalised.

use std::fmt::Write as _;
use std::path::Path;

use crate::allocator::{AppSpec, Scenario, UeSpec, ALPHA_SUM_TOLERANCE};
use crate::error::{Error, ParseError, Result};
use crate::utility::Utility;

/// Largest deviation of a UE's `alpha` sum from 1 the parser accepts.
pub const PARSE_ALPHA_TOLERANCE: f64 = 1e-6;

const TABLE1: &str = include_str!("../scenarios/table1.scenario");

/// Parsed scenario document. The budget is optional so that one file can
/// serve a whole sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub budget: Option<f64>,
    pub ues: Vec<UeSpec>,
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            budget: Some(s.budget()),
            ues: s.ues().to_vec(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        parse_scenario(&text)
    }

    /// Builds a scenario with `budget`, falling back to the document's own.
    pub fn to_scenario(&self, budget: Option<f64>) -> Result<Scenario> {
        let budget = budget
            .or(self.budget)
            .ok_or_else(|| Error::Domain("no budget given and the scenario does not set one".into()))?;
        Scenario::new(self.ues.clone(), budget)
    }
}

/// The bundled six-UE scenario: one sigmoidal and one logarithmic
/// application per UE, all `beta = 1`, no budget.
pub fn table1() -> ScenarioFile {
    parse_scenario(TABLE1).expect("bundled scenario parses")
}

fn err(line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Parse(ParseError {
        line,
        message: message.into(),
    })
}

struct PendingUe {
    line: usize,
    beta: Option<f64>,
    apps: Vec<AppSpec>,
}

impl PendingUe {
    fn finish(self) -> Result<UeSpec> {
        if self.apps.is_empty() {
            return Err(err(Some(self.line), "UE has no applications"));
        }
        let sum: f64 = self.apps.iter().map(AppSpec::alpha).sum();
        if (sum - 1.0).abs() > PARSE_ALPHA_TOLERANCE {
            return Err(err(Some(self.line), format!("alpha sum {sum} ≠ 1")));
        }
        let apps = if (sum - 1.0).abs() > ALPHA_SUM_TOLERANCE {
            self.apps
                .iter()
                .map(|a| AppSpec::new(*a.utility(), a.alpha() / sum))
                .collect::<Result<Vec<_>>>()?
        } else {
            self.apps
        };
        UeSpec::new(apps, self.beta.unwrap_or(1.0)).map_err(|e| err(Some(self.line), e.to_string()))
    }
}

fn parse_number(line: usize, field: &str, raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| err(Some(line), format!("field `{field}`: `{raw}` is not a number")))?;
    if !v.is_finite() || v <= 0.0 {
        return Err(err(Some(line), format!("field `{field}` must be positive, got {raw}")));
    }
    Ok(v)
}

fn parse_app(line: usize, rest: &str) -> Result<AppSpec> {
    let mut words = rest.split_whitespace();
    let kind = words.next().ok_or_else(|| err(Some(line), "app line needs a utility kind"))?;
    let fields: &[&str] = match kind {
        "sigmoid" => &["a", "b", "alpha"],
        "log" => &["k", "rmax", "alpha"],
        other => return Err(err(Some(line), format!("unknown utility kind `{other}`"))),
    };
    let mut values = [None; 3];
    for word in words {
        let (key, raw) = word
            .split_once('=')
            .ok_or_else(|| err(Some(line), format!("expected key=value, got `{word}`")))?;
        let slot = fields
            .iter()
            .position(|f| *f == key)
            .ok_or_else(|| err(Some(line), format!("unknown field `{key}` for {kind} utility")))?;
        if values[slot].is_some() {
            return Err(err(Some(line), format!("field `{key}` given twice")));
        }
        values[slot] = Some(parse_number(line, key, raw)?);
    }
    let mut get = |i: usize| values[i].take().ok_or_else(|| err(Some(line), format!("missing field `{}`", fields[i])));
    let (p, q, alpha) = (get(0)?, get(1)?, get(2)?);
    if alpha > 1.0 {
        return Err(err(Some(line), format!("field `alpha` must not exceed 1, got {alpha}")));
    }
    let utility = match kind {
        "sigmoid" => Utility::sigmoidal(p, q),
        _ => Utility::logarithmic(p, q),
    }
    .map_err(|e| err(Some(line), e.to_string()))?;
    AppSpec::new(utility, alpha).map_err(|e| err(Some(line), e.to_string()))
}

/// Parses a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let mut budget = None;
    let mut ues = Vec::new();
    let mut current: Option<PendingUe> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if content == "[ue]" {
            if let Some(ue) = current.take() {
                ues.push(ue.finish()?);
            }
            current = Some(PendingUe {
                line,
                beta: None,
                apps: Vec::new(),
            });
        } else if let Some(rest) = content.strip_prefix("app ").or_else(|| content.strip_prefix("app\t")) {
            let ue = current
                .as_mut()
                .ok_or_else(|| err(Some(line), "application declared outside a [ue] section"))?;
            ue.apps.push(parse_app(line, rest)?);
        } else if let Some((key, value)) = content.split_once('=') {
            match (key.trim(), current.as_mut()) {
                ("budget", None) => {
                    if budget.is_some() {
                        return Err(err(Some(line), "budget given twice"));
                    }
                    budget = Some(parse_number(line, "budget", value)?);
                }
                ("budget", Some(_)) => return Err(err(Some(line), "budget must precede the first [ue] section")),
                ("beta", Some(ue)) => {
                    if ue.beta.is_some() {
                        return Err(err(Some(line), "beta given twice"));
                    }
                    ue.beta = Some(parse_number(line, "beta", value)?);
                }
                ("beta", None) => return Err(err(Some(line), "beta outside a [ue] section")),
                (other, _) => return Err(err(Some(line), format!("unknown key `{other}`"))),
            }
        } else {
            return Err(err(Some(line), format!("unrecognised line `{content}`")));
        }
    }
    if let Some(ue) = current.take() {
        ues.push(ue.finish()?);
    }
    if ues.is_empty() {
        return Err(err(None, "no UEs"));
    }
    Ok(ScenarioFile { budget, ues })
}

/// Renders a scenario document that parses back to the same values.
pub fn serialize_scenario(file: &ScenarioFile) -> String {
    let mut out = String::new();
    if let Some(b) = file.budget {
        writeln!(out, "budget = {b}").unwrap();
    }
    for ue in &file.ues {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str("[ue]\n");
        writeln!(out, "beta = {}", ue.beta()).unwrap();
        for app in ue.apps() {
            match app.utility() {
                Utility::Sigmoidal(s) => writeln!(out, "app sigmoid a={} b={} alpha={}", s.a(), s.b(), app.alpha()),
                Utility::Logarithmic(l) => writeln!(out, "app log k={} rmax={} alpha={}", l.k(), l.r_max(), app.alpha()),
            }
            .unwrap();
        }
    }
    out
}
