//! Error rates, disparity scores and significance tests over score records.
//!
//! Acceptance rule everywhere: a trial is accepted iff `similarity >= threshold`.
//! FAR = accepted impostors / impostors, FRR = rejected genuines / genuines.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use thiserror::Error;

use crate::group::{AgeBucket, Gender, GroupKey};
use crate::scoring::{ScoreFile, ScoreRecord};
use crate::trials::Label;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("slice {slice} has no {missing} trials")]
    MissingClass {
        slice: String,
        missing: &'static str,
    },
    #[error("score for pair {0} is not finite")]
    NonFiniteScore(u64),
    #[error("paired samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("paired t-test needs at least 2 pairs, got {0}")]
    TooFewSamples(usize),
    #[error("epoch {0} appears in more than one score file")]
    DuplicateEpoch(u32),
    #[error("score file {0} is not tagged with a single epoch")]
    UntaggedEpoch(usize),
    #[error("no score files given")]
    NoFiles,
}

fn class_name(label: Label) -> &'static str {
    match label {
        Label::Genuine => "genuine",
        Label::Impostor => "impostor",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    pub far_at_t: f64,
    pub frr_at_t: f64,
}

/// Genuine and impostor similarities, each sorted ascending.
struct SortedScores {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl SortedScores {
    fn from_records<'a>(
        records: impl IntoIterator<Item = &'a ScoreRecord>,
        slice: &str,
    ) -> Result<Self, MetricsError> {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for r in records {
            if !r.similarity.is_finite() {
                return Err(MetricsError::NonFiniteScore(r.pair_id));
            }
            match r.label {
                Label::Genuine => genuine.push(r.similarity),
                Label::Impostor => impostor.push(r.similarity),
            }
        }
        for (class, label) in [(&genuine, Label::Genuine), (&impostor, Label::Impostor)] {
            if class.is_empty() {
                return Err(MetricsError::MissingClass {
                    slice: slice.to_string(),
                    missing: class_name(label),
                });
            }
        }
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        Ok(SortedScores { genuine, impostor })
    }

    fn far(&self, threshold: f64) -> f64 {
        let rejected = self.impostor.partition_point(|&s| s < threshold);
        rate(self.impostor.len() - rejected, self.impostor.len())
    }

    fn frr(&self, threshold: f64) -> f64 {
        let rejected = self.genuine.partition_point(|&s| s < threshold);
        rate(rejected, self.genuine.len())
    }

    /// Every distinct score ascending, then one sentinel above the maximum.
    fn roc(&self) -> Vec<RocPoint> {
        let (g, i) = (&self.genuine, &self.impostor);
        let mut points = Vec::with_capacity(g.len() + i.len() + 1);
        let (mut gi, mut ii) = (0usize, 0usize);
        while gi < g.len() || ii < i.len() {
            let t = match (g.get(gi), i.get(ii)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            // gi genuines and ii impostors lie strictly below t
            points.push(RocPoint {
                threshold: t,
                far: rate(i.len() - ii, i.len()),
                frr: rate(gi, g.len()),
            });
            while gi < g.len() && g[gi] == t {
                gi += 1;
            }
            while ii < i.len() && i[ii] == t {
                ii += 1;
            }
        }
        let max = points.last().map_or(0.0, |p| p.threshold);
        points.push(RocPoint {
            threshold: sentinel_above(max),
            far: 0.0,
            frr: 1.0,
        });
        points
    }
}

fn rate(count: usize, total: usize) -> f64 {
    count as f64 / total as f64
}

/// Threshold strictly above every score.
pub fn sentinel_above(max: f64) -> f64 {
    let s = max + 1.0;
    if s > max {
        s
    } else {
        max.next_up()
    }
}

/// ROC points at every candidate threshold, ascending.
pub fn sweep_roc(records: &[ScoreRecord]) -> Result<Vec<RocPoint>, MetricsError> {
    Ok(SortedScores::from_records(records, "all")?.roc())
}

fn eer_of(scores: &SortedScores) -> EerResult {
    let mut best: Option<RocPoint> = None;
    for p in scores.roc() {
        let gap = (p.far - p.frr).abs();
        match best {
            Some(b) if (b.far - b.frr).abs() <= gap => {}
            _ => best = Some(p),
        }
    }
    let p = best.expect("roc has at least the sentinel point");
    EerResult {
        eer: (p.far + p.frr) / 2.0,
        threshold: p.threshold,
        far_at_t: p.far,
        frr_at_t: p.frr,
    }
}

/// EER at the candidate threshold minimising |FAR - FRR| (ties to the lower threshold).
pub fn compute_eer(records: &[ScoreRecord]) -> Result<EerResult, MetricsError> {
    Ok(eer_of(&SortedScores::from_records(records, "all")?))
}

fn class_rate(
    records: &[ScoreRecord],
    label: Label,
    count: impl Fn(f64) -> bool,
) -> Result<f64, MetricsError> {
    let mut total = 0usize;
    let mut hits = 0usize;
    for r in records.iter().filter(|r| r.label == label) {
        total += 1;
        if count(r.similarity) {
            hits += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::MissingClass {
            slice: "all".into(),
            missing: class_name(label),
        });
    }
    Ok(rate(hits, total))
}

/// Fraction of impostor trials accepted at `threshold`.
pub fn far_at(records: &[ScoreRecord], threshold: f64) -> Result<f64, MetricsError> {
    class_rate(records, Label::Impostor, |s| s >= threshold)
}

/// Fraction of genuine trials rejected at `threshold`.
pub fn frr_at(records: &[ScoreRecord], threshold: f64) -> Result<f64, MetricsError> {
    class_rate(records, Label::Genuine, |s| s < threshold)
}

/// Disparity score: |EER_a - EER_b|.
pub fn disparity(eer_a: f64, eer_b: f64) -> f64 {
    (eer_a - eer_b).abs()
}

/// The overall population and the four one-attribute marginals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Slice {
    Overall,
    Old,
    Young,
    Female,
    Male,
}

impl Slice {
    pub const ALL: [Slice; 5] = [
        Slice::Overall,
        Slice::Old,
        Slice::Young,
        Slice::Female,
        Slice::Male,
    ];

    pub fn contains(self, group: &GroupKey) -> bool {
        match self {
            Slice::Overall => true,
            Slice::Old => group.age_bucket == AgeBucket::Old,
            Slice::Young => group.age_bucket == AgeBucket::Young,
            Slice::Female => group.gender == Gender::Female,
            Slice::Male => group.gender == Gender::Male,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Slice::Overall => "overall",
            Slice::Old => "old",
            Slice::Young => "young",
            Slice::Female => "female",
            Slice::Male => "male",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Slice::ALL.into_iter().find(|x| x.as_str() == s.trim())
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// EER of a slice plus its FAR/FRR at the shared operating threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceMetrics {
    pub eer: EerResult,
    pub far: f64,
    pub frr: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl SliceMetrics {
    fn of(scores: &SortedScores, threshold: f64) -> Self {
        SliceMetrics {
            eer: eer_of(scores),
            far: scores.far(threshold),
            frr: scores.frr(threshold),
            n_genuine: scores.genuine.len(),
            n_impostor: scores.impostor.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupMetrics {
    /// Overall EER threshold, used as the operating point of every slice.
    pub threshold: f64,
    pub slices: BTreeMap<Slice, SliceMetrics>,
    pub cells: BTreeMap<GroupKey, SliceMetrics>,
}

impl GroupMetrics {
    pub fn eer(&self, slice: Slice) -> f64 {
        self.slices[&slice].eer.eer
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityReport {
    pub ds_young_old: f64,
    pub ds_male_female: f64,
    /// DS for every pair of (language, gender, age) cells, in key order.
    pub pairwise: Vec<(GroupKey, GroupKey, f64)>,
}

/// Overall, marginal and per-cell metrics of one score file, with disparities.
/// Slice membership follows the enrollment speaker's group.
pub fn evaluate(scorefile: &ScoreFile) -> Result<(GroupMetrics, DisparityReport), MetricsError> {
    let records = &scorefile.records;
    let overall = SortedScores::from_records(records, "overall")?;
    let threshold = eer_of(&overall).threshold;

    let mut slices = BTreeMap::new();
    slices.insert(Slice::Overall, SliceMetrics::of(&overall, threshold));
    for slice in &Slice::ALL[1..] {
        let scores = SortedScores::from_records(
            records.iter().filter(|r| slice.contains(&r.group)),
            slice.as_str(),
        )?;
        slices.insert(*slice, SliceMetrics::of(&scores, threshold));
    }

    let keys: BTreeSet<&GroupKey> = records.iter().map(|r| &r.group).collect();
    let mut cells = BTreeMap::new();
    for key in keys {
        let scores = SortedScores::from_records(
            records.iter().filter(|r| &r.group == key),
            &key.to_string(),
        )?;
        cells.insert(key.clone(), SliceMetrics::of(&scores, threshold));
    }

    let mut pairwise = Vec::new();
    let cell_list: Vec<(&GroupKey, &SliceMetrics)> = cells.iter().collect();
    for (i, (a, ma)) in cell_list.iter().enumerate() {
        for (b, mb) in &cell_list[i + 1..] {
            pairwise.push((
                (*a).clone(),
                (*b).clone(),
                disparity(ma.eer.eer, mb.eer.eer),
            ));
        }
    }

    let metrics = GroupMetrics {
        threshold,
        slices,
        cells,
    };
    let report = DisparityReport {
        ds_young_old: disparity(metrics.eer(Slice::Young), metrics.eer(Slice::Old)),
        ds_male_female: disparity(metrics.eer(Slice::Male), metrics.eer(Slice::Female)),
        pairwise,
    };
    Ok((metrics, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub degrees_of_freedom: u32,
    pub p_value: f64,
    pub significant_at_05: bool,
}

/// P(|T| < t) for Student's t with integer `df`, by the closed-form
/// trigonometric series in θ = atan(t / √df).
pub fn student_t_central(t: f64, df: u32) -> f64 {
    assert!(df > 0, "degrees of freedom must be positive");
    if t.is_infinite() {
        return 1.0;
    }
    let t = t.abs();
    let theta = libm::atan(t / libm::sqrt(df as f64));
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let c2 = c * c;
    let a = if df % 2 == 1 {
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            for k in 1..=(df - 3) / 2 {
                term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
            }
        }
        2.0 / PI * (theta + s * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=(df - 2) / 2 {
            term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
        }
        s * sum
    };
    a.clamp(0.0, 1.0)
}

/// Two-tailed paired Student t-test on `xs - ys`.
///
/// Degenerate cases: all differences zero gives p = 1; zero variance with a
/// nonzero mean gives p = 0.
pub fn paired_ttest(xs: &[f64], ys: &[f64]) -> Result<TTestResult, MetricsError> {
    if xs.len() != ys.len() {
        return Err(MetricsError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(MetricsError::TooFewSamples(n));
    }
    let d: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    let df = (n - 1) as u32;
    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / libm::sqrt(var / n as f64);
        (t, 1.0 - student_t_central(t, df))
    };
    Ok(TTestResult {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        significant_at_05: p < 0.05,
    })
}

/// EER per slice per epoch, each series sorted by epoch.
pub type EpochSeries = BTreeMap<Slice, Vec<(u32, f64)>>;

fn file_epoch(i: usize, file: &ScoreFile) -> Result<u32, MetricsError> {
    let first = file
        .records
        .first()
        .and_then(|r| r.epoch)
        .ok_or(MetricsError::UntaggedEpoch(i))?;
    if file.records.iter().all(|r| r.epoch == Some(first)) {
        Ok(first)
    } else {
        Err(MetricsError::UntaggedEpoch(i))
    }
}

/// Evaluates epoch-tagged score files into per-slice EER series.
pub fn epoch_series(files: &[ScoreFile]) -> Result<EpochSeries, MetricsError> {
    if files.is_empty() {
        return Err(MetricsError::NoFiles);
    }
    let mut by_epoch = BTreeMap::new();
    for (i, file) in files.iter().enumerate() {
        let epoch = file_epoch(i, file)?;
        if by_epoch.insert(epoch, file).is_some() {
            return Err(MetricsError::DuplicateEpoch(epoch));
        }
    }
    let mut series: EpochSeries = BTreeMap::new();
    for (epoch, file) in by_epoch {
        let (metrics, _) = evaluate(file)?;
        for slice in Slice::ALL {
            series
                .entry(slice)
                .or_default()
                .push((epoch, metrics.eer(slice)));
        }
    }
    Ok(series)
}
