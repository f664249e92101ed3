//! Censoring-aware evaluation: time-dependent concordance (plain and
//! inverse-censoring-weighted), horizon AUROC/AUPRC with censored-as-
//! negative labels, per-patient bootstraps, population survival bands,
//! and subgroup breakdowns.
//!
//! Metrics that cannot be computed (no comparable pairs, single-class
//! labels) return a typed [`MetricError::Undefined`] instead of NaN so
//! aggregation can count and skip them. All functions are pure; the
//! O(n^2) pair loop runs chunk-parallel with a fixed reduction order, so
//! results are bit-identical at any thread count.

use crate::data::horizon_label;
use crate::exec::{self, Mode};
use crate::survival::{censoring_km, SurvivalCurve, TimeGrid};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Predicted risk, either as survival curves on a shared grid or as a
/// constant-in-time score (higher score = higher risk).
#[derive(Debug, Clone, Copy)]
pub enum RiskScores<'a> {
    Curves {
        grid: &'a TimeGrid,
        curves: &'a [SurvivalCurve],
    },
    /// Treated as curves ordered inversely to the score.
    Constant(&'a [f64]),
}

impl<'a> RiskScores<'a> {
    fn len(&self) -> usize {
        match self {
            RiskScores::Curves { curves, .. } => curves.len(),
            RiskScores::Constant(v) => v.len(),
        }
    }

    /// Predicted survival of subject `i` read at time `t` (nearest grid
    /// point for curves; minus the score for constant risks).
    fn survival_at(&self, i: usize, t: f64) -> f64 {
        match self {
            RiskScores::Curves { grid, curves } => curves[i].at_nearest(grid, t),
            RiskScores::Constant(v) => -v[i],
        }
    }
}

/// Pair weighting for [`concordance_td`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    None,
    /// Inverse squared censoring survival G(T-)^-2, with G floored at
    /// 0.05 before inversion.
    Km,
}

const KM_WEIGHT_FLOOR: f64 = 0.05;

/// Time-dependent concordance.
///
/// Pair (i, j) is comparable when i has an observed event and either
/// `T_i < T_j`, or `T_i == T_j` with j censored. A pair scores 1 when
/// subject i's predicted survival at `T_i` is below subject j's, 0.5 on
/// a tie, 0 otherwise.
pub fn concordance_td(
    scores: &RiskScores,
    times: &[f64],
    events: &[bool],
    weighting: Weighting,
) -> Result<f64, MetricError> {
    concordance_td_with(scores, times, events, weighting, Mode::default())
}

/// [`concordance_td`] with an explicit execution mode (exposed for the
/// benchmark suite; results are identical across modes).
pub fn concordance_td_with(
    scores: &RiskScores,
    times: &[f64],
    events: &[bool],
    weighting: Weighting,
    mode: Mode,
) -> Result<f64, MetricError> {
    let n = times.len();
    if scores.len() != n || events.len() != n {
        return Err(MetricError::Invalid(format!(
            "{} scores, {} times, {} events",
            scores.len(),
            n,
            events.len()
        )));
    }
    let pair_weight: Vec<f64> = match weighting {
        Weighting::None => vec![1.0; n],
        Weighting::Km => {
            let g = censoring_km(times, events)
                .map_err(|e| MetricError::Invalid(format!("censoring estimate failed: {e}")))?;
            times
                .iter()
                .map(|&t| {
                    let gv = g.eval_left(t).max(KM_WEIGHT_FLOOR);
                    1.0 / (gv * gv)
                })
                .collect()
        }
    };

    let (num, den) = exec::map_reduce(
        n,
        mode,
        |range| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in range {
                if !events[i] {
                    continue;
                }
                let w = pair_weight[i];
                let s_i = scores.survival_at(i, times[i]);
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let comparable = times[i] < times[j] || (times[i] == times[j] && !events[j]);
                    if !comparable {
                        continue;
                    }
                    let s_j = scores.survival_at(j, times[i]);
                    let score = if s_i < s_j {
                        1.0
                    } else if s_i == s_j {
                        0.5
                    } else {
                        0.0
                    };
                    num += w * score;
                    den += w;
                }
            }
            (num, den)
        },
        (0.0, 0.0),
        |(a, b), (c, d)| (a + c, b + d),
    );

    if den == 0.0 {
        return Err(MetricError::Undefined("no comparable pairs".into()));
    }
    Ok(num / den)
}

/// Concordance after administratively censoring every subject at
/// `horizon_days`: `(T, D) -> (min(T, h), D && T <= h)`.
pub fn concordance_censored_at(
    scores: &RiskScores,
    times: &[f64],
    events: &[bool],
    horizon_days: f64,
    weighting: Weighting,
) -> Result<f64, MetricError> {
    if horizon_days <= 0.0 {
        return Err(MetricError::Invalid(format!(
            "horizon must be positive, got {horizon_days}"
        )));
    }
    let capped_times: Vec<f64> = times.iter().map(|&t| t.min(horizon_days)).collect();
    let capped_events: Vec<bool> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| e && t <= horizon_days)
        .collect();
    concordance_td(scores, &capped_times, &capped_events, weighting)
}

/// AUROC and AUPRC of the cumulative-hazard score `1 - S(t*)` against
/// horizon labels (censored records count as negatives). `t*` is the
/// grid point temporally closest to the horizon.
pub fn horizon_roc_prc(
    grid: &TimeGrid,
    curves: &[SurvivalCurve],
    times: &[f64],
    events: &[bool],
    horizon_days: f64,
) -> Result<(f64, f64), MetricError> {
    if curves.len() != times.len() || times.len() != events.len() {
        return Err(MetricError::Invalid("length mismatch".into()));
    }
    if horizon_days <= 0.0 || horizon_days > grid.max_time() {
        return Err(MetricError::Invalid(format!(
            "horizon {horizon_days} outside grid span (0, {}]",
            grid.max_time()
        )));
    }
    let idx = grid.nearest_index(horizon_days);
    let risk_scores: Vec<f64> = curves.iter().map(|c| 1.0 - c.values()[idx]).collect();
    let labels: Vec<bool> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| horizon_label(t, e, horizon_days))
        .collect();
    binary_roc_prc(&risk_scores, &labels)
}

/// AUROC (trapezoidal over the exact ROC step curve) and AUPRC (average
/// precision) for arbitrary scores and binary labels. Tied scores are
/// handled as single threshold groups.
pub fn binary_roc_prc(scores: &[f64], labels: &[bool]) -> Result<(f64, f64), MetricError> {
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricError::Undefined(format!(
            "single-class labels ({positives} positive, {negatives} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut auroc = 0.0;
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        auroc += (fp - prev_fp) as f64 * (tp + prev_tp) as f64 / 2.0;
        if tp > prev_tp {
            let precision = tp as f64 / (tp + fp) as f64;
            ap += (tp - prev_tp) as f64 * precision;
        }
    }
    Ok((
        auroc / (positives as f64 * negatives as f64),
        ap / positives as f64,
    ))
}

/// Bootstrap summary: the per-replicate outcomes plus median and IQR of
/// the defined values.
#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub values: Vec<Result<f64, MetricError>>,
    pub median: Option<f64>,
    pub q25: Option<f64>,
    pub q75: Option<f64>,
}

/// Default replicate count for the per-patient bootstrap.
pub const BOOTSTRAP_REPS: usize = 20;

/// Evaluate `metric` on `reps` resamples that keep exactly one uniformly
/// chosen record per patient. `patient_records` groups record indices by
/// patient; the metric closure receives the selected record indices.
pub fn bootstrap_per_patient<F>(
    patient_records: &[Vec<usize>],
    reps: usize,
    seed: u64,
    metric: F,
) -> BootstrapSummary
where
    F: Fn(&[usize]) -> Result<f64, MetricError>,
{
    let mut values = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = crate::rng::Pcg::new(seed, rep as u64 + 1);
        let chosen: Vec<usize> = patient_records
            .iter()
            .filter(|group| !group.is_empty())
            .map(|group| group[rng.below(group.len())])
            .collect();
        values.push(metric(&chosen).map_err(|e| match e {
            MetricError::Undefined(msg) => MetricError::Undefined(format!("rep {rep}: {msg}")),
            MetricError::Invalid(msg) => MetricError::Invalid(format!("rep {rep}: {msg}")),
        }));
    }
    let mut defined: Vec<f64> = values.iter().filter_map(|v| v.as_ref().ok().copied()).collect();
    defined.sort_by(|a, b| a.partial_cmp(b).unwrap());
    BootstrapSummary {
        median: quantile_sorted(&defined, 0.5),
        q25: quantile_sorted(&defined, 0.25),
        q75: quantile_sorted(&defined, 0.75),
        values,
    }
}

/// Linear-interpolation quantile of an ascending-sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if sorted[lo] == sorted[hi] {
        return Some(sorted[lo]);
    }
    let frac = pos - lo as f64;
    Some(sorted[lo] * (1.0 - frac) + sorted[hi] * frac)
}

/// Population survival overlay data: bootstrap band of the mean curve,
/// plus the Kaplan-Meier estimate and at-risk counts of the same records.
#[derive(Debug, Clone)]
pub struct PopulationSurvival {
    /// Per grid point: (median, 2.5th, 97.5th percentile) of the
    /// bootstrap means.
    pub band: Vec<(f64, f64, f64)>,
    /// Kaplan-Meier survival evaluated at each grid point (when events
    /// exist; identically 1 otherwise).
    pub km: Vec<f64>,
    /// Subjects still under observation at each grid point.
    pub at_risk: Vec<usize>,
}

/// Default bootstrap replicate count for [`population_survival`].
pub const POPULATION_REPS: usize = 100;

pub fn population_survival(
    grid: &TimeGrid,
    curves: &[SurvivalCurve],
    times: &[f64],
    events: &[bool],
    reps: usize,
    seed: u64,
) -> Result<PopulationSurvival, MetricError> {
    let n = curves.len();
    if n == 0 {
        return Err(MetricError::Invalid("population_survival needs at least one curve".into()));
    }
    if times.len() != n || events.len() != n {
        return Err(MetricError::Invalid("length mismatch".into()));
    }
    let g = grid.len();
    let mut rep_means = vec![vec![0.0; g]; reps.max(1)];
    for (rep, means) in rep_means.iter_mut().enumerate() {
        let mut rng = crate::rng::Pcg::new(seed, rep as u64 + 1);
        for _ in 0..n {
            let pick = rng.below(n);
            for (k, m) in means.iter_mut().enumerate() {
                *m += curves[pick].values()[k];
            }
        }
        for m in means.iter_mut() {
            *m /= n as f64;
        }
    }
    let mut band = Vec::with_capacity(g);
    for k in 0..g {
        let mut col: Vec<f64> = rep_means.iter().map(|m| m[k]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        band.push((
            quantile_sorted(&col, 0.5).unwrap(),
            quantile_sorted(&col, 0.025).unwrap(),
            quantile_sorted(&col, 0.975).unwrap(),
        ));
    }
    let km_est = crate::survival::kaplan_meier(times, events)
        .map_err(|e| MetricError::Invalid(format!("km failed: {e}")))?;
    let km = grid.points().iter().map(|&t| km_est.eval(t)).collect();
    let at_risk = grid
        .points()
        .iter()
        .map(|&t| times.iter().filter(|&&x| x >= t).count())
        .collect();
    Ok(PopulationSurvival { band, km, at_risk })
}

/// Age bins used for subgroup breakdowns: [0,20), [20,40), [40,60), 60+.
pub const AGE_BINS: [(f64, f64); 4] = [(0.0, 20.0), (20.0, 40.0), (40.0, 60.0), (60.0, f64::INFINITY)];

/// One subgroup cell of the concordance table.
#[derive(Debug, Clone)]
pub struct SubgroupCell {
    pub age_lo: f64,
    pub age_hi: f64,
    /// 0 = female coding, 1 = male coding; mirrors the sex covariate.
    pub sex: u8,
    pub n: usize,
    pub concordance: Result<f64, MetricError>,
}

/// Concordance within each (age bin x sex) cell. Cells with fewer than
/// two comparable pairs are reported as undefined rather than dropped.
pub fn subgroup_concordance(
    scores: &RiskScores,
    times: &[f64],
    events: &[bool],
    ages: &[f64],
    sexes: &[f64],
    weighting: Weighting,
) -> Result<Vec<SubgroupCell>, MetricError> {
    let n = times.len();
    if scores.len() != n || events.len() != n || ages.len() != n || sexes.len() != n {
        return Err(MetricError::Invalid("length mismatch".into()));
    }
    let mut cells = Vec::new();
    for &(lo, hi) in &AGE_BINS {
        for sex in [0u8, 1u8] {
            let idx: Vec<usize> = (0..n)
                .filter(|&i| ages[i] >= lo && ages[i] < hi && sexes[i] == sex as f64)
                .collect();
            let cell_times: Vec<f64> = idx.iter().map(|&i| times[i]).collect();
            let cell_events: Vec<bool> = idx.iter().map(|&i| events[i]).collect();
            let comparable = count_comparable_pairs(&cell_times, &cell_events);
            let concordance = if comparable < 2 {
                Err(MetricError::Undefined(format!(
                    "{comparable} comparable pairs in cell"
                )))
            } else {
                match scores {
                    RiskScores::Curves { grid, curves } => {
                        let cell_curves: Vec<SurvivalCurve> =
                            idx.iter().map(|&i| curves[i].clone()).collect();
                        concordance_td(
                            &RiskScores::Curves { grid, curves: &cell_curves },
                            &cell_times,
                            &cell_events,
                            weighting,
                        )
                    }
                    RiskScores::Constant(v) => {
                        let cell_scores: Vec<f64> = idx.iter().map(|&i| v[i]).collect();
                        concordance_td(
                            &RiskScores::Constant(&cell_scores),
                            &cell_times,
                            &cell_events,
                            weighting,
                        )
                    }
                }
            };
            cells.push(SubgroupCell {
                age_lo: lo,
                age_hi: hi,
                sex,
                n: idx.len(),
                concordance,
            });
        }
    }
    Ok(cells)
}

fn count_comparable_pairs(times: &[f64], events: &[bool]) -> usize {
    let n = times.len();
    let mut count = 0;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if j != i && (times[i] < times[j] || (times[i] == times[j] && !events[j])) {
                count += 1;
            }
        }
    }
    count
}
