//! Verification and identification accuracy metrics.
//!
//! Operating points are conservative: at a target false accept rate `far`
//! with `n` impostor scores, at most `floor(far · n)` impostors may be
//! accepted, and a genuine score is accepted only if it is strictly above the
//! `(floor(far · n) + 1)`-th highest impostor score. Ties at the threshold
//! are therefore rejected on both sides.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{FddError, Result};

/// Genuine and impostor comparison scores.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Result<Self> {
        if genuine.iter().chain(&impostor).any(|s| !s.is_finite()) {
            return Err(FddError::Input("scores must be finite".into()));
        }
        Ok(Self { genuine, impostor })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            genuine: self.genuine.iter().map(|&s| f(s)).collect(),
            impostor: self.impostor.iter().map(|&s| f(s)).collect(),
        }
    }
}

fn check_far(far: f64) -> Result<()> {
    if !(far > 0.0 && far < 1.0) {
        return Err(FddError::param(format!("FAR must lie in (0, 1), got {far}")));
    }
    Ok(())
}

/// Impostor score a genuine score must strictly exceed at `far`.
pub fn threshold_at_far(s: &ScoreSet, far: f64) -> Result<f64> {
    check_far(far)?;
    if s.impostor.is_empty() {
        return Err(FddError::param("TAR@FAR needs at least one impostor score"));
    }
    let allowed = (far * s.impostor.len() as f64).floor() as usize;
    let mut imp = s.impostor.clone();
    imp.sort_by(|a, b| b.total_cmp(a));
    Ok(imp[allowed])
}

/// Fraction of genuine scores accepted at the conservative `far` threshold.
pub fn tar_at_far(s: &ScoreSet, far: f64) -> Result<f64> {
    let t = threshold_at_far(s, far)?;
    if s.genuine.is_empty() {
        return Ok(0.0);
    }
    Ok(s.genuine.iter().filter(|&&g| g > t).count() as f64 / s.genuine.len() as f64)
}

/// `(far, 1 − TAR)` pairs.
pub fn det_points(s: &ScoreSet, fars: &[f64]) -> Result<Vec<(f64, f64)>> {
    fars.iter().map(|&f| Ok((f, 1.0 - tar_at_far(s, f)?))).collect()
}

/// One identification attempt: the probe's true identity and the returned
/// candidate ids, best first.
#[derive(Clone, Debug, PartialEq)]
pub struct RankedResult {
    pub true_id: String,
    pub candidates: Vec<String>,
}

/// 1-based rank of the mate, if present.
fn mate_rank(r: &RankedResult) -> Option<usize> {
    r.candidates.iter().position(|c| *c == r.true_id).map(|p| p + 1)
}

/// Fraction of probes whose mate is within the top `k`.
pub fn rank_k_rate(results: &[RankedResult], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(FddError::param("rank k must be at least 1"));
    }
    if results.is_empty() {
        return Ok(0.0);
    }
    let hits = results.iter().filter(|r| mate_rank(r).is_some_and(|m| m <= k)).count();
    Ok(hits as f64 / results.len() as f64)
}

/// `(k, rank-k rate)` for `k = 1..=k_max`.
pub fn cmc_curve(results: &[RankedResult], k_max: usize) -> Result<Vec<(usize, f64)>> {
    if k_max == 0 {
        return Err(FddError::param("k_max must be at least 1"));
    }
    let mut counts = vec![0usize; k_max + 1];
    for r in results {
        if let Some(m) = mate_rank(r).filter(|&m| m <= k_max) {
            counts[m] += 1;
        }
    }
    let total = results.len().max(1) as f64;
    let mut acc = 0;
    Ok((1..=k_max)
        .map(|k| {
            acc += counts[k];
            (k, acc as f64 / total)
        })
        .collect())
}

/// One row of a score file.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub probe_id: String,
    pub gallery_id: String,
    pub score: f64,
    pub genuine: bool,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "genuine" => Some(true),
        "impostor" => Some(false),
        _ => None,
    }
}

/// Parses `probe_id,gallery_id,score,label` lines. A leading header line is
/// skipped when its score column is not numeric.
pub fn read_score_records(input: impl Read) -> Result<Vec<ScoreRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| FddError::format(format!("score file: {e}")))?;
        if rec.len() != 4 {
            return Err(FddError::format(format!(
                "score file record {}: expected 4 fields, got {}",
                line + 1,
                rec.len()
            )));
        }
        let score = match rec[2].parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            Err(_) if line == 0 && out.is_empty() => continue,
            _ => {
                return Err(FddError::format(format!(
                    "score file record {}: bad score {:?}",
                    line + 1,
                    &rec[2]
                )))
            }
        };
        let genuine = parse_label(&rec[3]).ok_or_else(|| {
            FddError::format(format!(
                "score file record {}: label must be genuine or impostor, got {:?}",
                line + 1,
                &rec[3]
            ))
        })?;
        out.push(ScoreRecord {
            probe_id: rec[0].to_string(),
            gallery_id: rec[1].to_string(),
            score,
            genuine,
        });
    }
    Ok(out)
}

pub fn load_score_records(path: &Path) -> Result<Vec<ScoreRecord>> {
    read_score_records(std::fs::File::open(path)?)
}

pub fn write_score_records(records: &[ScoreRecord]) -> String {
    let mut out = String::from("probe_id,gallery_id,score,label\n");
    for r in records {
        let label = if r.genuine { "genuine" } else { "impostor" };
        let _ = writeln!(out, "{},{},{},{}", r.probe_id, r.gallery_id, r.score, label);
    }
    out
}

pub fn score_set(records: &[ScoreRecord]) -> ScoreSet {
    let (g, i): (Vec<&ScoreRecord>, Vec<&ScoreRecord>) = records.iter().partition(|r| r.genuine);
    ScoreSet {
        genuine: g.iter().map(|r| r.score).collect(),
        impostor: i.iter().map(|r| r.score).collect(),
    }
}

/// Ranks each probe's comparisons by score, ties broken by file order. The
/// probe's true id is the gallery id of its genuine row. Probes without a
/// genuine row have no enrolled mate and are left out.
pub fn ranked_results(records: &[ScoreRecord]) -> Vec<RankedResult> {
    let mut by_probe: BTreeMap<&str, Vec<(usize, &ScoreRecord)>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_probe.entry(&r.probe_id).or_default().push((i, r));
    }
    by_probe
        .into_values()
        .filter_map(|mut rows| {
            let true_id = rows.iter().find(|(_, r)| r.genuine)?.1.gallery_id.clone();
            rows.sort_by(|a, b| b.1.score.total_cmp(&a.1.score).then(a.0.cmp(&b.0)));
            Some(RankedResult {
                true_id,
                candidates: rows.into_iter().map(|(_, r)| r.gallery_id.clone()).collect(),
            })
        })
        .collect()
}

/// Metrics computed by [`evaluate`].
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub genuine_count: usize,
    pub impostor_count: usize,
    pub probe_count: usize,
    /// `(far, tar)`; absent when there are no impostor scores.
    pub tar_at_far: Vec<(f64, f64)>,
    pub cmc: Vec<(usize, f64)>,
}

pub const DEFAULT_FARS: [f64; 3] = [0.001, 0.01, 0.1];

pub fn evaluate(records: &[ScoreRecord], fars: &[f64], k_max: usize) -> Result<EvalReport> {
    let set = score_set(records);
    let tar = if set.impostor.is_empty() {
        Vec::new()
    } else {
        fars.iter()
            .map(|&f| Ok((f, tar_at_far(&set, f)?)))
            .collect::<Result<_>>()?
    };
    let ranked = ranked_results(records);
    Ok(EvalReport {
        genuine_count: set.genuine.len(),
        impostor_count: set.impostor.len(),
        probe_count: ranked.len(),
        tar_at_far: tar,
        cmc: cmc_curve(&ranked, k_max)?,
    })
}

impl EvalReport {
    /// `metric,param,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,param,value\n");
        for (far, tar) in &self.tar_at_far {
            let _ = writeln!(out, "tar_at_far,{far},{tar}");
        }
        for (k, rate) in &self.cmc {
            let _ = writeln!(out, "rank_k,{k},{rate}");
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "genuine scores:  {}\nimpostor scores: {}\nprobes:          {}\n",
            self.genuine_count, self.impostor_count, self.probe_count
        );
        for (far, tar) in &self.tar_at_far {
            let _ = writeln!(out, "TAR@FAR={}%: {:.4}", far * 100.0, tar);
        }
        for (k, rate) in self.cmc.iter().filter(|(k, _)| [1, 5, 10].contains(k)) {
            let _ = writeln!(out, "Rank-{k}: {rate:.4}");
        }
        out
    }
}
