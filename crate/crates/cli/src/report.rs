//! Check records, scenario reports and their renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// `value ≤ bound + tolerance`
    AtMost,
    /// `value ≥ bound − tolerance`
    AtLeast,
    /// `|value − bound| ≤ tolerance`
    Near,
    /// Recorded, never failed.
    Reported,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub relation: Relation,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn new(name: &str, value: f64, bound: f64, relation: Relation, tolerance: f64) -> Self {
        let mut c = Check { name: name.to_string(), value, bound, relation, tolerance, pass: false };
        c.pass = c.slack() >= 0.0;
        c
    }

    pub fn at_most(name: &str, value: f64, bound: f64, tolerance: f64) -> Self {
        Self::new(name, value, bound, Relation::AtMost, tolerance)
    }

    pub fn at_least(name: &str, value: f64, bound: f64, tolerance: f64) -> Self {
        Self::new(name, value, bound, Relation::AtLeast, tolerance)
    }

    pub fn near(name: &str, value: f64, target: f64, tolerance: f64) -> Self {
        Self::new(name, value, target, Relation::Near, tolerance)
    }

    pub fn reported(name: &str, value: f64) -> Self {
        Self::new(name, value, f64::NAN, Relation::Reported, 0.0)
    }

    /// Distance from failing; negative when the check fails. NaN values fail.
    pub fn slack(&self) -> f64 {
        let s = match self.relation {
            Relation::AtMost => self.bound + self.tolerance - self.value,
            Relation::AtLeast => self.value - (self.bound - self.tolerance),
            Relation::Near => self.tolerance - (self.value - self.bound).abs(),
            Relation::Reported => return 0.0,
        };
        if s.is_nan() {
            f64::NEG_INFINITY
        } else {
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub checks: Vec<Check>,
    /// Set when a subprotocol failed before every check could run.
    #[serde(default)]
    pub abort: Option<String>,
    pub wall_time_s: f64,
    pub version: String,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.abort.is_none() && self.checks.iter().all(|c| c.pass)
    }

    /// 0 pass, 1 check failure, 3 abort.
    pub fn exit_code(&self) -> i32 {
        if self.abort.is_some() {
            3
        } else if self.passed() {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Text,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "json" => Some(Format::Json),
            "text" => Some(Format::Text),
            _ => None,
        }
    }
}

/// Non-finite numbers become JSON strings so every report stays parseable.
#[derive(Serialize)]
struct JsonCheck<'a> {
    name: &'a str,
    value: serde_json::Value,
    bound: serde_json::Value,
    relation: Relation,
    tolerance: f64,
    pass: bool,
}

fn num(x: f64) -> serde_json::Value {
    serde_json::Number::from_f64(x).map_or_else(|| serde_json::Value::String(format!("{x}")), serde_json::Value::Number)
}

fn denum(v: &serde_json::Value) -> Option<f64> {
    match v {
        serde_json::Value::Number(n) => n.as_f64(),
        serde_json::Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

pub fn to_json(report: &ScenarioReport) -> String {
    let checks: Vec<JsonCheck> = report
        .checks
        .iter()
        .map(|c| JsonCheck {
            name: &c.name,
            value: num(c.value),
            bound: num(c.bound),
            relation: c.relation,
            tolerance: c.tolerance,
            pass: c.pass,
        })
        .collect();
    let doc = serde_json::json!({
        "scenario": report.scenario,
        "checks": checks,
        "abort": report.abort,
        "wall_time_s": report.wall_time_s,
        "version": report.version,
    });
    serde_json::to_string_pretty(&doc).expect("report values serialize")
}

pub fn from_json(text: &str) -> Result<ScenarioReport, String> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let scenario = serde_json::from_value(doc["scenario"].clone()).map_err(|e| e.to_string())?;
    let mut checks = Vec::new();
    for c in doc["checks"].as_array().ok_or("checks must be an array")? {
        checks.push(Check {
            name: c["name"].as_str().ok_or("check name")?.to_string(),
            value: denum(&c["value"]).ok_or("check value")?,
            bound: denum(&c["bound"]).ok_or("check bound")?,
            relation: serde_json::from_value(c["relation"].clone()).map_err(|e| e.to_string())?,
            tolerance: c["tolerance"].as_f64().ok_or("check tolerance")?,
            pass: c["pass"].as_bool().ok_or("check pass")?,
        });
    }
    Ok(ScenarioReport {
        scenario,
        checks,
        abort: doc["abort"].as_str().map(str::to_string),
        wall_time_s: doc["wall_time_s"].as_f64().ok_or("wall_time_s")?,
        version: doc["version"].as_str().ok_or("version")?.to_string(),
    })
}

fn relation_symbol(r: Relation) -> &'static str {
    match r {
        Relation::AtMost => "<=",
        Relation::AtLeast => ">=",
        Relation::Near => "~=",
        Relation::Reported => "",
    }
}

pub fn to_text(report: &ScenarioReport) -> String {
    let mut out = String::new();
    let verdict = match report.exit_code() {
        0 => "PASS",
        1 => "FAIL",
        _ => "ABORT",
    };
    let _ = writeln!(
        out,
        "{} seed={} checks={} {} ({:.3} s, v{})",
        report.scenario.kind,
        report.scenario.seed,
        report.checks.len(),
        verdict,
        report.wall_time_s,
        report.version
    );
    if let Some(a) = &report.abort {
        let _ = writeln!(out, "  aborted: {a}");
    }
    for c in &report.checks {
        let mark = if c.relation == Relation::Reported {
            "INFO"
        } else if c.pass {
            "PASS"
        } else {
            "FAIL"
        };
        if c.relation == Relation::Reported {
            let _ = writeln!(out, "  [{mark}] {}: {:.6e}", c.name, c.value);
        } else {
            let _ = writeln!(
                out,
                "  [{mark}] {}: measured {:.6e} {} {:.6e} (tol {:.1e}, slack {:.3e})",
                c.name,
                c.value,
                relation_symbol(c.relation),
                c.bound,
                c.tolerance,
                c.slack()
            );
        }
    }
    out
}

pub fn render(report: &ScenarioReport, format: Format) -> String {
    match format {
        Format::Json => to_json(report),
        Format::Text => to_text(report),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::Kind;

    #[test]
    fn slack_by_relation() {
        assert!((Check::at_most("a", 0.3, 0.5, 0.0).slack() - 0.2).abs() < 1e-15);
        assert!(!Check::at_most("a", 0.6, 0.5, 0.05).pass);
        assert!(Check::at_most("a", 0.54, 0.5, 0.05).pass);
        assert!(Check::at_least("b", 0.5, 0.5, 0.0).pass);
        assert!(!Check::at_least("b", 0.4, 0.5, 0.05).pass);
        assert!(Check::near("c", 0.59, 0.4, 0.2).pass);
        assert!(!Check::near("c", 0.61, 0.4, 0.2).pass);
        assert!(Check::reported("d", 7.0).pass);
    }

    #[test]
    fn nan_never_passes() {
        assert!(!Check::at_most("a", f64::NAN, 0.0, 1.0).pass);
        assert!(!Check::at_least("a", f64::NAN, 0.0, 1.0).pass);
        assert!(!Check::near("a", f64::NAN, 0.0, 1.0).pass);
    }

    #[test]
    fn exit_codes() {
        let mut r = ScenarioReport {
            scenario: Scenario::new(Kind::QmipRun, 0),
            checks: vec![Check::at_most("a", 0.0, 1.0, 0.0)],
            abort: None,
            wall_time_s: 0.0,
            version: "0".into(),
        };
        assert_eq!(r.exit_code(), 0);
        r.checks.push(Check::at_most("b", 2.0, 1.0, 0.0));
        assert_eq!(r.exit_code(), 1);
        r.abort = Some("boom".into());
        assert_eq!(r.exit_code(), 3);
    }
}
