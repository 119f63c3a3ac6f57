//! Verification metrics (FAR, FRR, EER, thresholds at a target FAR), attack
//! success rate, and report export.
//!
//! Scores are dissimilarities: a comparison is accepted iff its score is
//! strictly below the threshold. FAR counts impostor scores `< t`, FRR counts
//! genuine scores `>= t`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackTrace;
use crate::error::{Error, Result};
use crate::image::write_atomic;
use crate::transforms::Scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub scenario: Scenario,
    pub dataset_tag: String,
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(scenario: Scenario, dataset_tag: impl Into<String>, genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self {
            scenario,
            dataset_tag: dataset_tag.into(),
            genuine,
            impostor,
        }
    }

    fn check(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientData(format!(
                "scenario {} needs genuine and impostor scores (have {} and {})",
                self.scenario,
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        if self.genuine.iter().chain(&self.impostor).any(|s| !s.is_finite()) {
            return Err(Error::InvalidParameter("non-finite score".into()));
        }
        Ok(())
    }

    /// `kind,score` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,score\n");
        for s in &self.genuine {
            out.push_str(&format!("genuine,{s}\n"));
        }
        for s in &self.impostor {
            out.push_str(&format!("impostor,{s}\n"));
        }
        out
    }

    pub fn from_csv(text: &str, scenario: Scenario, dataset_tag: &str, path: &Path) -> Result<Self> {
        let mut set = ScoreSet::new(scenario, dataset_tag, Vec::new(), Vec::new());
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                if i == 0 && line.trim() != "kind,score" {
                    return Err(parse_err(path, 1, "expected header `kind,score`"));
                }
                continue;
            }
            let (kind, value) = line
                .split_once(',')
                .ok_or_else(|| parse_err(path, i + 1, "expected `kind,score`"))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| parse_err(path, i + 1, &format!("bad score {value:?}")))?;
            match kind {
                "genuine" => set.genuine.push(v),
                "impostor" => set.impostor.push(v),
                other => return Err(parse_err(path, i + 1, &format!("unknown kind {other:?}"))),
            }
        }
        Ok(set)
    }
}

fn parse_err(path: &Path, line: usize, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Counts on pre-sorted lists.
fn rates_sorted(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let false_accepts = impostor.partition_point(|&s| s < t);
    let false_rejects = genuine.len() - genuine.partition_point(|&s| s < t);
    (
        false_accepts as f64 / impostor.len() as f64,
        false_rejects as f64 / genuine.len() as f64,
    )
}

pub fn compute_far_frr(scores: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    scores.check()?;
    Ok(rates_sorted(&sorted(&scores.genuine), &sorted(&scores.impostor), threshold))
}

/// Candidate thresholds: every distinct observed score plus the midpoints
/// between consecutive distinct scores, ascending.
fn candidate_thresholds(scores: &ScoreSet) -> Vec<f64> {
    let mut all = sorted(&[scores.genuine.as_slice(), scores.impostor.as_slice()].concat());
    all.dedup();
    let mut out = Vec::with_capacity(all.len() * 2);
    for (i, &s) in all.iter().enumerate() {
        if i > 0 {
            out.push(all[i - 1] + (s - all[i - 1]) / 2.0);
        }
        out.push(s);
    }
    out
}

/// Returns `(eer, threshold)`: the candidate threshold minimising
/// `|FAR - FRR|` (lowest on ties) and the mean of FAR and FRR there.
pub fn compute_eer(scores: &ScoreSet) -> Result<(f64, f64)> {
    scores.check()?;
    let (g, i) = (sorted(&scores.genuine), sorted(&scores.impostor));
    let mut best: Option<(f64, f64, f64)> = None;
    for t in candidate_thresholds(scores) {
        let (far, frr) = rates_sorted(&g, &i, t);
        let gap = (far - frr).abs();
        if best.is_none_or(|(b, _, _)| gap < b) {
            best = Some((gap, (far + frr) / 2.0, t));
        }
    }
    let (_, eer, t) = best.expect("non-empty score set");
    Ok((eer, t))
}

/// Name of an operating point: the EER threshold or a target FAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OperatingPointName {
    Eer,
    /// Target FAR in parts per million.
    Far(u32),
}

impl OperatingPointName {
    pub fn far(target: f64) -> Result<Self> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::Config(format!("target FAR {target} outside (0, 1]")));
        }
        Ok(OperatingPointName::Far((target * 1e6).round() as u32))
    }

    pub fn target_far(self) -> Option<f64> {
        match self {
            OperatingPointName::Eer => None,
            OperatingPointName::Far(ppm) => Some(ppm as f64 / 1e6),
        }
    }

    /// EER, FAR=0.1, FAR=0.01, FAR=0.001.
    pub fn standard() -> Vec<Self> {
        vec![
            OperatingPointName::Eer,
            OperatingPointName::Far(100_000),
            OperatingPointName::Far(10_000),
            OperatingPointName::Far(1_000),
        ]
    }
}

impl fmt::Display for OperatingPointName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target_far() {
            None => f.write_str("EER"),
            Some(t) => write!(f, "FAR={t}"),
        }
    }
}

impl FromStr for OperatingPointName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "EER" {
            return Ok(OperatingPointName::Eer);
        }
        let v = s
            .strip_prefix("FAR=")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Config(format!("unknown operating point {s:?} (expected EER or FAR=<rate>)")))?;
        OperatingPointName::far(v)
    }
}

impl Serialize for OperatingPointName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for OperatingPointName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub name: OperatingPointName,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    /// Set when the impostor list is too short to resolve the target FAR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Largest threshold whose measured FAR does not exceed `target_far`.
///
/// With `n` impostor scores sorted ascending and `k` the largest count with
/// `k / n <= target_far`, that threshold is the `(k+1)`-th smallest impostor
/// score. When every impostor may be admitted it is the next float above the
/// largest impostor score.
pub fn threshold_at_far(scores: &ScoreSet, target_far: f64) -> Result<OperatingPoint> {
    scores.check()?;
    let name = OperatingPointName::far(target_far)?;
    let (g, i) = (sorted(&scores.genuine), sorted(&scores.impostor));
    let n = i.len();
    let mut k = ((target_far * n as f64).floor() as usize).min(n);
    while k < n && (k + 1) as f64 / n as f64 <= target_far {
        k += 1;
    }
    while k > 0 && k as f64 / n as f64 > target_far {
        k -= 1;
    }
    let threshold = if k < n { i[k] } else { i[n - 1].next_up() };
    let (far, frr) = rates_sorted(&g, &i, threshold);
    let warning = ((n as f64) * target_far < 1.0).then(|| {
        format!("only {n} impostor scores; FAR {target_far} is not resolvable")
    });
    Ok(OperatingPoint {
        name,
        threshold,
        far,
        frr,
        warning,
    })
}

pub fn eer_point(scores: &ScoreSet) -> Result<OperatingPoint> {
    let (_, threshold) = compute_eer(scores)?;
    let (far, frr) = compute_far_frr(scores, threshold)?;
    Ok(OperatingPoint {
        name: OperatingPointName::Eer,
        threshold,
        far,
        frr,
        warning: None,
    })
}

pub fn operating_point(scores: &ScoreSet, name: OperatingPointName) -> Result<OperatingPoint> {
    match name.target_far() {
        None => eer_point(scores),
        Some(t) => threshold_at_far(scores, t),
    }
}

/// Fraction of traces whose best-so-far score drops strictly below
/// `threshold` at any iteration.
pub fn compute_asr(traces: &[AttackTrace], threshold: f64) -> Result<f64> {
    if traces.is_empty() {
        return Err(Error::InsufficientData("no attack traces".into()));
    }
    let hits = traces
        .iter()
        .filter(|t| t.points.iter().any(|p| p.best_score < threshold))
        .count();
    Ok(hits as f64 / traces.len() as f64)
}

pub const FLAG_NOT_MEASURED: &str = "not-measured";
pub const FLAG_NO_ANCHOR: &str = "no-reference-anchor";
pub const FLAG_FEW_IMPOSTORS: &str = "few-impostors";

/// One `scenario,metric,operating_point,value,flag` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: Scenario,
    pub metric: String,
    pub operating_point: OperatingPointName,
    pub value: Option<f64>,
    pub flag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
}

/// Inputs available for one scenario.
#[derive(Debug, Clone, Default)]
pub struct ScenarioInputs<'a> {
    pub scores: Option<&'a ScoreSet>,
    pub traces: Option<&'a [AttackTrace]>,
}

impl EvalReport {
    /// Evaluates every scenario at every operating point; cells whose inputs
    /// are missing are kept with a `not-measured` flag.
    pub fn build(
        inputs: &BTreeMap<Scenario, ScenarioInputs<'_>>,
        points: &[OperatingPointName],
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::InsufficientData("no scenarios to report".into()));
        }
        let mut rows = Vec::new();
        for (&scenario, inp) in inputs {
            let mut row = |metric: &str, op: OperatingPointName, value: Option<f64>, flag: &str| {
                rows.push(ReportRow {
                    scenario,
                    metric: metric.to_string(),
                    operating_point: op,
                    value,
                    flag: if value.is_none() { FLAG_NOT_MEASURED.to_string() } else { flag.to_string() },
                });
            };
            let eer = inp.scores.map(compute_eer).transpose()?;
            row("eer", OperatingPointName::Eer, eer.map(|e| e.0), "");
            for &op in points {
                let point = inp.scores.map(|s| operating_point(s, op)).transpose()?;
                let flag = match point.as_ref().and_then(|p| p.warning.as_ref()) {
                    Some(_) => FLAG_FEW_IMPOSTORS,
                    None => "",
                };
                row("threshold", op, point.as_ref().map(|p| p.threshold), flag);
                row("far", op, point.as_ref().map(|p| p.far), flag);
                row("frr", op, point.as_ref().map(|p| p.frr), flag);
                let asr = match (point.as_ref(), inp.traces) {
                    (Some(p), Some(t)) if !t.is_empty() => Some(compute_asr(t, p.threshold)?),
                    _ => None,
                };
                let anchor = if scenario == Scenario::OtbMorph && op == OperatingPointName::Far(100_000) {
                    FLAG_NO_ANCHOR
                } else {
                    ""
                };
                row("asr", op, asr, anchor);
            }
        }
        Ok(Self { metadata, rows })
    }

    pub fn value(&self, scenario: Scenario, metric: &str, op: OperatingPointName) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.metric == metric && r.operating_point == op)
            .and_then(|r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,metric,operating_point,value,flag\n");
        for r in &self.rows {
            let value = r.value.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scenario, r.metric, r.operating_point, value, r.flag
            ));
        }
        out
    }

    /// Parses rows written by [`EvalReport::to_csv`]; metadata is not part of
    /// the CSV.
    pub fn rows_from_csv(text: &str, path: &Path) -> Result<Vec<ReportRow>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, "scenario,metric,operating_point,value,flag")) => {}
            _ => return Err(parse_err(path, 1, "missing report header")),
        }
        lines
            .filter(|(_, l)| !l.is_empty())
            .map(|(i, line)| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(parse_err(path, i + 1, "expected 5 fields"));
                }
                let value = if f[3].is_empty() {
                    None
                } else {
                    Some(f[3].parse().map_err(|_| parse_err(path, i + 1, "bad value"))?)
                };
                Ok(ReportRow {
                    scenario: f[0].parse().map_err(|e: Error| parse_err(path, i + 1, &e.to_string()))?,
                    metric: f[1].to_string(),
                    operating_point: f[2].parse().map_err(|e: Error| parse_err(path, i + 1, &e.to_string()))?,
                    value,
                    flag: f[4].to_string(),
                })
            })
            .collect()
    }

    /// Wide layout: one row per scenario, EER and ASR at the EER threshold,
    /// then FRR and ASR for each target FAR.
    pub fn to_table_csv(&self, points: &[OperatingPointName]) -> String {
        let mut scenarios: Vec<Scenario> = self.rows.iter().map(|r| r.scenario).collect();
        scenarios.dedup();
        let mut cols: Vec<(String, &str, OperatingPointName)> = Vec::new();
        for &op in points {
            if op == OperatingPointName::Eer {
                cols.push(("EER".into(), "eer", op));
            } else {
                cols.push((format!("FRR@{op}"), "frr", op));
            }
            cols.push((format!("ASR@{op}"), "asr", op));
        }
        let mut out = String::from("scenario");
        for (name, _, _) in &cols {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",notes\n");
        for sc in scenarios {
            out.push_str(sc.label());
            let mut notes = Vec::new();
            for (name, metric, op) in &cols {
                let row = self
                    .rows
                    .iter()
                    .find(|r| r.scenario == sc && r.metric == *metric && r.operating_point == *op);
                out.push(',');
                match row.and_then(|r| r.value) {
                    Some(v) => out.push_str(&v.to_string()),
                    None => out.push_str(FLAG_NOT_MEASURED),
                }
                if let Some(r) = row {
                    if !r.flag.is_empty() && r.flag != FLAG_NOT_MEASURED {
                        notes.push(format!("{name}:{}", r.flag));
                    }
                }
            }
            out.push(',');
            out.push_str(&notes.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Counts per bin over `[0, 2]`, the range of distances between unit vectors.
/// Scores at or beyond 2 land in the last bin.
pub fn histogram(scores: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let width = 2.0 / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in scores {
        let b = ((s / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b as f64 * width, (b + 1) as f64 * width, c))
        .collect()
}

pub fn histogram_csv(sets: &[&ScoreSet], bins: usize) -> String {
    let mut out = String::from("scenario,kind,bin_left,bin_right,count\n");
    for set in sets {
        for (kind, scores) in [("genuine", &set.genuine), ("impostor", &set.impostor)] {
            for (l, r, c) in histogram(scores, bins) {
                out.push_str(&format!("{},{kind},{l},{r},{c}\n", set.scenario));
            }
        }
    }
    out
}

/// Writes `report.csv`, `table.csv`, `report.json` and `histograms.csv`
/// under `dir`.
pub fn export_report(
    report: &EvalReport,
    points: &[OperatingPointName],
    score_sets: &[&ScoreSet],
    bins: usize,
    dir: &Path,
) -> Result<()> {
    if report.rows.is_empty() {
        return Err(Error::InsufficientData("empty report".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_atomic(&dir.join("report.csv"), report.to_csv().as_bytes())?;
    write_atomic(&dir.join("table.csv"), report.to_table_csv(points).as_bytes())?;
    write_atomic(&dir.join("report.json"), report.to_json().as_bytes())?;
    write_atomic(&dir.join("histograms.csv"), histogram_csv(score_sets, bins).as_bytes())?;
    Ok(())
}
