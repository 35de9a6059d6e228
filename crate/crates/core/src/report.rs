//! Tabular reports rendered as CSV (floats at 6 significant digits) or JSON
//! (full binary64 precision).

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};

use crate::analysis::{CalibrationStudy, DisagreementTable, ErrorTable, LineRecord};
use crate::detect::{DetectionResult, ScoreKind, SeverityAggregate, SplitAggregate};
use crate::divergence::Notion;
use crate::estimate::EstimationReport;
use crate::grid::{CurvePoint, SimplexPoint};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Empty,
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(i) => i.to_string(),
            Cell::Float(f) => format_sig6(*f),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(i) => Value::from(*i),
            Cell::Float(f) => serde_json::Number::from_f64(*f).map_or(Value::Null, Value::Number),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Formats like C's `%.6g`.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A named table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }

    pub fn to_json_value(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let mut obj = Map::new();
                    for (c, v) in self.columns.iter().zip(row) {
                        obj.insert(c.clone(), v.json());
                    }
                    Value::Object(obj)
                })
                .collect(),
        )
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("json");
        s.push('\n');
        s
    }
}

pub fn disagreement_report(dis: &DisagreementTable, splits: &[String], notions: &[Notion]) -> Table {
    let mut t = Table::new("disagreement", &["model_a", "model_b", "split", "notion", "value"]);
    for r in dis.records(splits, notions) {
        t.push(vec![
            r.pair.first.into(),
            r.pair.second.into(),
            r.split_id.into(),
            r.notion.name().into(),
            r.value.into(),
        ]);
    }
    t
}

pub fn error_report(errs: &ErrorTable, splits: &[String], notions: &[Notion]) -> Table {
    let mut t = Table::new("error", &["model", "split", "notion", "value"]);
    for r in errs.records(splits, notions) {
        t.push(vec![
            r.model_id.into(),
            r.split_id.into(),
            r.notion.name().into(),
            r.value.into(),
        ]);
    }
    t
}

pub fn line_report(lines: &[LineRecord]) -> Table {
    let mut t = Table::new(
        "lines",
        &[
            "line",
            "split",
            "notion",
            "slope",
            "intercept",
            "r2",
            "transform",
            "n_points",
            "transform_downgraded",
        ],
    );
    for l in lines {
        t.push(vec![
            l.kind.name().into(),
            l.split_id.clone().into(),
            l.fit.notion.name().into(),
            l.fit.slope.into(),
            l.fit.intercept.into(),
            l.fit.r2.into(),
            l.fit.transform.name().into(),
            l.fit.n_points.into(),
            l.fit.transform_downgraded.into(),
        ]);
    }
    t
}

pub fn estimate_reports(reports: &[EstimationReport]) -> (Table, Table) {
    let mut est = Table::new(
        "estimates",
        &["split", "notion", "method", "model", "estimate", "truth", "clamped"],
    );
    let mut summary = Table::new(
        "estimate_summary",
        &[
            "split",
            "notion",
            "method",
            "mape",
            "passes_r2_gate",
            "slope",
            "intercept",
            "r2",
            "transform",
            "n_points",
        ],
    );
    for r in reports {
        for e in &r.estimates {
            est.push(vec![
                r.split_id.clone().into(),
                r.notion.name().into(),
                r.method.name().into(),
                e.model_id.clone().into(),
                e.estimate.into(),
                e.truth.into(),
                e.clamped.into(),
            ]);
        }
        summary.push(vec![
            r.split_id.clone().into(),
            r.notion.name().into(),
            r.method.name().into(),
            r.mape.into(),
            r.passes_r2_gate.into(),
            r.fit.slope.into(),
            r.fit.intercept.into(),
            r.fit.r2.into(),
            r.fit.transform.name().into(),
            r.fit.n_points.into(),
        ]);
    }
    (est, summary)
}

/// MAPE table: one row per admitted split, one column per notion.
pub fn table1(reports: &[EstimationReport], admitted: &[String], notions: &[Notion]) -> Table {
    let mut columns = vec!["ood_split"];
    columns.extend(notions.iter().map(|n| n.name()));
    let mut t = Table::new("table1", &columns);
    let mape: BTreeMap<(&str, Notion), Option<f64>> = reports
        .iter()
        .map(|r| ((r.split_id.as_str(), r.notion), r.mape))
        .collect();
    let mut seen = BTreeSet::new();
    for r in reports {
        let split = r.split_id.as_str();
        if !admitted.iter().any(|a| a == split) || !seen.insert(split) {
            continue;
        }
        let mut row: Vec<Cell> = vec![split.into()];
        row.extend(
            notions
                .iter()
                .map(|&n| Cell::from(mape.get(&(split, n)).copied().flatten())),
        );
        t.push(row);
    }
    t
}

pub fn detection_report(results: &[DetectionResult]) -> Table {
    let mut t = Table::new(
        "detection",
        &[
            "kind",
            "subject",
            "id_split",
            "ood_split",
            "severity",
            "auc",
            "n_id",
            "n_ood",
        ],
    );
    for r in results {
        t.push(vec![
            r.kind.name().into(),
            r.subject.clone().into(),
            r.id_split.clone().into(),
            r.ood_split.clone().into(),
            r.severity.map(|s| s as usize).into(),
            r.auc.into(),
            r.n_id.into(),
            r.n_ood.into(),
        ]);
    }
    t
}

pub fn detection_aggregates(splits: &[SplitAggregate], severities: &[SeverityAggregate]) -> (Table, Table) {
    let mut a = Table::new(
        "detection_by_split",
        &["kind", "ood_split", "severity", "auc", "n_subjects"],
    );
    for s in splits {
        a.push(vec![
            s.kind.name().into(),
            s.ood_split.clone().into(),
            s.severity.map(|v| v as usize).into(),
            s.auc.into(),
            s.n_subjects.into(),
        ]);
    }
    let mut b = Table::new("detection_by_severity", &["kind", "severity", "auc", "n_splits"]);
    for s in severities {
        b.push(vec![
            s.kind.name().into(),
            s.severity.map(|v| v as usize).into(),
            s.auc.into(),
            s.n_splits.into(),
        ]);
    }
    (a, b)
}

/// AUC table: one row per severity, one column per score kind (AUC in percent).
pub fn table2(severities: &[SeverityAggregate], kinds: &[ScoreKind]) -> Table {
    let names: Vec<String> = kinds.iter().map(|k| k.name()).collect();
    let mut columns = vec!["severity"];
    columns.extend(names.iter().map(String::as_str));
    let mut t = Table::new("table2", &columns);
    let levels: BTreeSet<Option<u32>> = severities.iter().map(|s| s.severity).collect();
    for level in levels {
        let mut row: Vec<Cell> = vec![level.map_or(Cell::Text("none".into()), |v| Cell::Int(v as i64))];
        for k in kinds {
            let auc = severities
                .iter()
                .find(|s| s.severity == level && s.kind == *k)
                .map(|s| 100.0 * s.auc);
            row.push(auc.into());
        }
        t.push(row);
    }
    t
}

pub fn calibration_reports(study: &CalibrationStudy) -> (Table, Table) {
    let mut rows = Table::new(
        "calibration",
        &["split", "notion", "ensemble_cace", "agreement_r2", "accuracy_r2"],
    );
    for r in &study.rows {
        rows.push(vec![
            r.split_id.clone().into(),
            r.notion.name().into(),
            r.ensemble_cace.into(),
            r.agreement_r2.into(),
            r.accuracy_r2.into(),
        ]);
    }
    let mut trends = Table::new("calibration_trend", &["notion", "line", "c0", "c1", "c2", "c3"]);
    for tr in &study.trends {
        let c = tr.cubic.coefficients();
        trends.push(vec![
            tr.notion.name().into(),
            tr.kind.name().into(),
            c[0].into(),
            c[1].into(),
            c[2].into(),
            c[3].into(),
        ]);
    }
    (rows, trends)
}

pub fn simplex_report(points: &[SimplexPoint]) -> Table {
    let mut t = Table::new("grid", &["p1", "p2", "value"]);
    for p in points {
        t.push(vec![p.p1.into(), p.p2.into(), p.value.into()]);
    }
    t
}

pub fn curve_report(points: &[CurvePoint]) -> Table {
    let mut t = Table::new("curve", &["t", "value"]);
    for p in points {
        t.push(vec![p.t.into(), p.value.into()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5411961001, "0.541196"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (std::f64::consts::LN_2, "0.693147"),
            (27.631021115928547, "27.631"),
            (1e-12, "1e-12"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn csv_and_json_rendering() {
        let mut t = Table::new("t", &["name", "value", "flag", "missing"]);
        t.push(vec!["a,b".into(), 0.1.into(), true.into(), Cell::Empty]);
        assert_eq!(t.to_csv(), "name,value,flag,missing\n\"a,b\",0.1,true,\n");
        let json = t.to_json_value();
        assert_eq!(json[0]["value"], Value::from(0.1));
        assert_eq!(json[0]["missing"], Value::Null);
    }
}
