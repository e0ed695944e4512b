//! Versioned report format shared by all commands, and report merging.

use super::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const SCHEMA_VERSION: &str = "ppa-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    /// `synthetic` (rendered in memory) or `dataset` (read from disk).
    pub source: String,
    /// Final path component of the dataset directory.
    pub dataset: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub views: usize,
    pub noise_aolp_deg: f64,
    pub blur_sigma: f64,
    pub dolp_threshold: f64,
    pub deviations: Vec<String>,
}

/// One row of a flat results table: `(model, metric) -> value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub metric: String,
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub provenance: Provenance,
    pub table: Vec<TableRow>,
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub section: String,
    pub passed: bool,
    pub value: Option<f64>,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value < threshold`.
    pub fn below(section: &str, name: &str, value: Option<f64>, threshold: f64) -> Self {
        Self {
            name: name.into(),
            section: section.into(),
            passed: value.is_some_and(|v| v < threshold),
            value,
            threshold,
            detail: format!("value < {threshold}"),
        }
    }

    /// Passes when `value > threshold`.
    pub fn above(section: &str, name: &str, value: Option<f64>, threshold: f64) -> Self {
        Self {
            passed: value.is_some_and(|v| v > threshold),
            detail: format!("value > {threshold}"),
            ..Self::below(section, name, value, threshold)
        }
    }

    /// Passes when `value <= threshold`.
    pub fn at_most(section: &str, name: &str, value: Option<f64>, threshold: f64) -> Self {
        Self {
            passed: value.is_some_and(|v| v <= threshold),
            detail: format!("value <= {threshold}"),
            ..Self::below(section, name, value, threshold)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema_version: String,
    pub sections: BTreeMap<String, Section>,
    pub checks: Vec<Check>,
}

impl ErrorReport {
    pub fn single(name: &str, section: Section, checks: Vec<Check>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.to_string(),
            sections: BTreeMap::from([(name.to_string(), section)]),
            checks,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| EvalError::InvalidConfig(format!("report is not JSON: {e}")))?;
        let found = value
            .get("schema_version")
            .and_then(|v| v.as_str())
            .unwrap_or("<missing>")
            .to_string();
        if found != SCHEMA_VERSION {
            return Err(EvalError::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found,
            });
        }
        serde_json::from_value(value).map_err(|e| EvalError::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: format!("{found} with invalid layout ({e})"),
        })
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Write {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Flat CSV of every section's table.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("section,model,metric,value\n");
        for (name, section) in &self.sections {
            for row in &section.table {
                let v = row.value.map_or(String::new(), |v| v.to_string());
                let _ = writeln!(out, "{name},{},{},{v}", row.model, row.metric);
            }
        }
        out
    }

    pub fn checks_csv(&self) -> String {
        let mut out = String::from("section,check,passed,value,threshold\n");
        for c in &self.checks {
            let v = c.value.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{v},{}",
                c.section, c.name, c.passed, c.threshold
            );
        }
        out
    }

    /// Writes `<stem>.json`, `<stem>_table.csv`, `<stem>_checks.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(), EvalError> {
        super::ensure_dir(dir)?;
        super::write_text(&dir.join(format!("{stem}.json")), &self.to_json())?;
        super::write_text(&dir.join(format!("{stem}_table.csv")), &self.table_csv())?;
        super::write_text(&dir.join(format!("{stem}_checks.csv")), &self.checks_csv())
    }
}

/// Union of the reports' sections (each keeps its provenance) and checks.
/// A single report is returned unchanged.
pub fn merge(reports: &[ErrorReport]) -> Result<ErrorReport, EvalError> {
    for r in reports {
        if r.schema_version != SCHEMA_VERSION {
            return Err(EvalError::SchemaMismatch {
                expected: SCHEMA_VERSION.into(),
                found: r.schema_version.clone(),
            });
        }
    }
    match reports {
        [] => Err(EvalError::InvalidConfig("no reports to merge".into())),
        [one] => Ok(one.clone()),
        _ => {
            let mut merged = ErrorReport {
                schema_version: SCHEMA_VERSION.into(),
                sections: BTreeMap::new(),
                checks: Vec::new(),
            };
            for r in reports {
                for (name, section) in &r.sections {
                    if merged
                        .sections
                        .insert(name.clone(), section.clone())
                        .is_some()
                    {
                        return Err(EvalError::DuplicateSection(name.clone()));
                    }
                }
                merged.checks.extend(r.checks.iter().cloned());
            }
            Ok(merged)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(cmd: &str) -> Section {
        Section {
            provenance: Provenance {
                command: cmd.into(),
                source: "synthetic".into(),
                dataset: None,
                config_hash: "abc".into(),
                seed: 1,
                views: 2,
                noise_aolp_deg: 0.0,
                blur_sigma: 0.0,
                dolp_threshold: 0.1,
                deviations: vec![],
            },
            table: vec![TableRow {
                model: "ppa".into(),
                metric: "rmse_deg".into(),
                value: Some(0.5),
            }],
            results: serde_json::json!({"k": 1}),
        }
    }

    #[test]
    fn merge_rules() {
        let a = ErrorReport::single(
            "a",
            section("a"),
            vec![Check::below("a", "x", Some(1.0), 2.0)],
        );
        let b = ErrorReport::single(
            "b",
            section("b"),
            vec![Check::above("b", "y", Some(1.0), 2.0)],
        );
        assert_eq!(merge(std::slice::from_ref(&a)).unwrap(), a);
        let m = merge(&[a.clone(), b]).unwrap();
        assert_eq!(m.sections.len(), 2);
        assert_eq!(m.sections["b"].provenance.command, "b");
        assert!(!m.all_passed());
        assert!(a.all_passed());
        assert!(matches!(
            merge(&[a.clone(), a.clone()]),
            Err(EvalError::DuplicateSection(_))
        ));
        let mut old = a.clone();
        old.schema_version = "ppa-report/0".into();
        assert!(matches!(
            merge(&[old]),
            Err(EvalError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn json_round_trip_and_schema_check() {
        let a = ErrorReport::single(
            "a",
            section("a"),
            vec![Check::at_most("a", "r", None, 0.25)],
        );
        assert!(!a.checks[0].passed);
        assert_eq!(ErrorReport::from_json(&a.to_json()).unwrap(), a);
        let bad = a.to_json().replace(SCHEMA_VERSION, "other/9");
        assert!(matches!(
            ErrorReport::from_json(&bad),
            Err(EvalError::SchemaMismatch { .. })
        ));
        assert_eq!(
            a.table_csv(),
            "section,model,metric,value\na,ppa,rmse_deg,0.5\n"
        );
    }
}
