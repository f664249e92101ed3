//! Statistical comparison toolkit: Wilcoxon signed-rank and
//! Mann-Whitney U tests (exact at small sizes, tie-corrected normal
//! approximation otherwise), Pearson correlation, Benjamini-Hochberg
//! correction, and event/non-event cohort summary tables.
//!
//! All p-values are two-sided; exact discrete tests double the one-sided
//! tail and cap at 1.

pub mod special;

use crate::data::Cohort;
use special::{chi_square_cdf, normal_cdf, student_t_cdf};
use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum StatsError {
    #[error("undefined test: {0}")]
    UndefinedTest(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Largest sample size enumerated exactly by the Wilcoxon test.
const WILCOXON_EXACT_MAX: usize = 12;
/// Largest pooled size enumerated exactly by the Mann-Whitney test.
const MANN_WHITNEY_EXACT_MAX: usize = 14;

/// Average ranks of `values`, scaled by 2 so ties stay integral.
fn double_ranks(values: &[f64]) -> Vec<i64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
    let mut out = vec![0i64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // average rank of positions i..j (1-based), doubled: (i+1 + j)
        let doubled = (i + 1 + j) as i64;
        for &idx in &order[i..j] {
            out[idx] = doubled;
        }
        i = j;
    }
    out
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

fn two_sided_from_counts(le: f64, ge: f64, total: f64) -> f64 {
    (2.0 * (le.min(ge)) / total).min(1.0)
}

fn two_sided_normal(stat: f64, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return 1.0;
    }
    let centered = stat - mean;
    if centered == 0.0 {
        return 1.0;
    }
    // continuity correction toward the mean
    let z = (centered.abs() - 0.5).max(0.0) / sd;
    (2.0 * (1.0 - normal_cdf(z))).min(1.0)
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped (Wilcoxon's original rule). Exact null
/// enumeration for up to 12 remaining pairs, tie-corrected normal
/// approximation with continuity correction beyond that.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Invalid(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(StatsError::Invalid("need at least one pair".into()));
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(x, y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::UndefinedTest(
            "all paired differences are zero".into(),
        ));
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks2 = double_ranks(&abs);
    let w_plus2: i64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, &r)| r)
        .sum();

    if n <= WILCOXON_EXACT_MAX {
        // enumerate all sign assignments of the observed ranks
        let mut le = 0u64;
        let mut ge = 0u64;
        let total = 1u64 << n;
        for mask in 0..total {
            let mut w2 = 0i64;
            for (bit, &r) in ranks2.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    w2 += r;
                }
            }
            if w2 <= w_plus2 {
                le += 1;
            }
            if w2 >= w_plus2 {
                ge += 1;
            }
        }
        Ok(two_sided_from_counts(le as f64, ge as f64, total as f64))
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        for t in tie_groups(&abs) {
            let t = t as f64;
            var -= (t * t * t - t) / 48.0;
        }
        Ok(two_sided_normal(w_plus2 as f64 / 2.0, mean, var.sqrt()))
    }
}

/// Two-sided Mann-Whitney U test on independent samples.
///
/// Exact enumeration when the pooled size is at most 14, tie-corrected
/// normal approximation with continuity correction otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    if a.is_empty() || b.is_empty() {
        return Err(StatsError::Invalid("both samples must be nonempty".into()));
    }
    let m = a.len();
    let n = b.len();
    let pooled: Vec<f64> = a.iter().chain(b).cloned().collect();
    let ranks2 = double_ranks(&pooled);
    let r_a2: i64 = ranks2[..m].iter().sum();
    // U statistic doubled to stay integral under ties
    let u2 = r_a2 - (m * (m + 1)) as i64;

    if m + n <= MANN_WHITNEY_EXACT_MAX {
        let total_positions = m + n;
        let mut le = 0u64;
        let mut ge = 0u64;
        let mut count = 0u64;
        // every m-subset of pooled positions is equally likely under the null
        for mask in 0u32..(1 << total_positions) {
            if mask.count_ones() as usize != m {
                continue;
            }
            count += 1;
            let mut r2 = 0i64;
            for (bit, &r) in ranks2.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    r2 += r;
                }
            }
            let u2_perm = r2 - (m * (m + 1)) as i64;
            if u2_perm <= u2 {
                le += 1;
            }
            if u2_perm >= u2 {
                ge += 1;
            }
        }
        Ok(two_sided_from_counts(le as f64, ge as f64, count as f64))
    } else {
        let mf = m as f64;
        let nf = n as f64;
        let big = mf + nf;
        let mean = mf * nf / 2.0;
        let mut tie_term = 0.0;
        for t in tie_groups(&pooled) {
            let t = t as f64;
            tie_term += t * t * t - t;
        }
        let var = mf * nf / 12.0 * ((big + 1.0) - tie_term / (big * (big - 1.0)));
        Ok(two_sided_normal(u2 as f64 / 2.0, mean, var.sqrt()))
    }
}

/// Pearson correlation with the t-transform two-sided p-value.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::Invalid("length mismatch".into()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::Invalid("need at least 3 points".into()));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::UndefinedTest("zero variance".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        2.0 * (1.0 - student_t_cdf(t.abs(), df))
    };
    Ok((r, p.min(1.0)))
}

/// Benjamini-Hochberg step-up correction at false-discovery rate `q`.
/// Returns per-input rejection flags and monotone adjusted p-values,
/// both in input order.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> (Vec<bool>, Vec<f64>) {
    let m = p_values.len();
    if m == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());

    // adjusted p: backward cumulative minimum of m * p_(k) / k
    let mut adjusted_sorted = vec![0.0; m];
    let mut running = 1.0f64;
    for k in (0..m).rev() {
        let raw = p_values[order[k]] * m as f64 / (k + 1) as f64;
        running = running.min(raw);
        adjusted_sorted[k] = running.min(1.0);
    }
    // step-up: largest k with p_(k) <= q k / m; reject 1..k
    let mut reject_upto = 0;
    for k in (0..m).rev() {
        if p_values[order[k]] <= q * (k + 1) as f64 / m as f64 {
            reject_upto = k + 1;
            break;
        }
    }
    let mut rejected = vec![false; m];
    let mut adjusted = vec![0.0; m];
    for (k, &idx) in order.iter().enumerate() {
        rejected[idx] = k < reject_upto;
        adjusted[idx] = adjusted_sorted[k];
    }
    (rejected, adjusted)
}

/// How one variable is summarized in the cohort table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariableKind {
    /// All observed values in {0, 1}; compared with a 2x2 chi-square
    /// (no continuity correction).
    Categorical,
    /// Compared with Welch's t test.
    Numeric,
}

/// One row of the event/non-event cohort summary.
#[derive(Debug, Clone)]
pub struct CohortTableRow {
    pub name: String,
    pub kind: VariableKind,
    /// Categorical: (count of 1s, group size). Numeric: (mean, std).
    pub event_summary: (f64, f64),
    pub non_event_summary: (f64, f64),
    pub p_value: Result<f64, StatsError>,
}

/// Summarize every covariate (plus follow-up time) by event status:
/// counts and chi-square p for binary variables, mean (std) and Welch's
/// t p for numeric ones.
pub fn cohort_table(cohort: &Cohort) -> Vec<CohortTableRow> {
    let mut names = cohort.covariate_names();
    names.push("follow_up_days".to_string());
    let value_of = |name: &str, rec: &crate::data::EcgRecord| -> f64 {
        if name == "follow_up_days" {
            rec.time_to_event
        } else {
            rec.covariate(name).unwrap_or(f64::NAN)
        }
    };
    names
        .iter()
        .map(|name| {
            let event_vals: Vec<f64> = cohort
                .records
                .iter()
                .filter(|r| r.event)
                .map(|r| value_of(name, r))
                .collect();
            let non_event_vals: Vec<f64> = cohort
                .records
                .iter()
                .filter(|r| !r.event)
                .map(|r| value_of(name, r))
                .collect();
            let binary = cohort
                .records
                .iter()
                .all(|r| matches!(value_of(name, r), v if v == 0.0 || v == 1.0));
            if binary {
                let ones = |v: &[f64]| v.iter().filter(|&&x| x == 1.0).count() as f64;
                let table = [
                    [event_vals.len() as f64 - ones(&event_vals), ones(&event_vals)],
                    [
                        non_event_vals.len() as f64 - ones(&non_event_vals),
                        ones(&non_event_vals),
                    ],
                ];
                CohortTableRow {
                    name: name.clone(),
                    kind: VariableKind::Categorical,
                    event_summary: (ones(&event_vals), event_vals.len() as f64),
                    non_event_summary: (ones(&non_event_vals), non_event_vals.len() as f64),
                    p_value: chi_square_2x2(&table).map(|(_, p)| p),
                }
            } else {
                let summarize = |v: &[f64]| {
                    let n = v.len() as f64;
                    if n == 0.0 {
                        return (f64::NAN, f64::NAN);
                    }
                    let mean = v.iter().sum::<f64>() / n;
                    let var = if n > 1.0 {
                        v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
                    } else {
                        0.0
                    };
                    (mean, var.sqrt())
                };
                CohortTableRow {
                    name: name.clone(),
                    kind: VariableKind::Numeric,
                    event_summary: summarize(&event_vals),
                    non_event_summary: summarize(&non_event_vals),
                    p_value: welch_t(&event_vals, &non_event_vals).map(|(_, p)| p),
                }
            }
        })
        .collect()
}

/// Pearson chi-square statistic and p-value for a 2x2 table, without
/// continuity correction.
pub fn chi_square_2x2(observed: &[[f64; 2]; 2]) -> Result<(f64, f64), StatsError> {
    let row: Vec<f64> = observed.iter().map(|r| r[0] + r[1]).collect();
    let col = [
        observed[0][0] + observed[1][0],
        observed[0][1] + observed[1][1],
    ];
    let total = row[0] + row[1];
    if total == 0.0 || row.iter().any(|&v| v == 0.0) || col.iter().any(|&v| v == 0.0) {
        return Err(StatsError::UndefinedTest("degenerate 2x2 margin".into()));
    }
    let mut stat = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let expected = row[i] * col[j] / total;
            let d = observed[i][j] - expected;
            stat += d * d / expected;
        }
    }
    Ok((stat, 1.0 - chi_square_cdf(stat, 1.0)))
}

/// Welch's unequal-variances t statistic and two-sided p-value.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<(f64, f64), StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::UndefinedTest("each group needs >= 2 values".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| {
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
    };
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (var(a, ma), var(b, mb));
    let sa = va / a.len() as f64;
    let sb = vb / b.len() as f64;
    if sa + sb == 0.0 {
        if ma == mb {
            return Ok((0.0, 1.0));
        }
        return Err(StatsError::UndefinedTest("zero variance in both groups".into()));
    }
    let t = (ma - mb) / (sa + sb).sqrt();
    let df = (sa + sb) * (sa + sb)
        / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let p = 2.0 * (1.0 - student_t_cdf(t.abs(), df));
    Ok((t, p.min(1.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Pcg;

    #[test]
    fn wilcoxon_all_positive_five_pairs() {
        let a = [2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0, 1.5, 2.0, 2.5, 3.0];
        let p = wilcoxon_signed_rank(&a, &b).unwrap();
        assert!((p - 1.0 / 16.0).abs() < 1e-15, "p {p}");
    }

    #[test]
    fn wilcoxon_antisymmetric_pairs_give_one() {
        let a = [1.0, -1.0, 2.0, -2.0];
        let b = [0.0, 0.0, 0.0, 0.0];
        assert_eq!(wilcoxon_signed_rank(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn wilcoxon_all_zero_differences_is_undefined() {
        let a = [1.0, 2.0, 3.0];
        assert!(matches!(
            wilcoxon_signed_rank(&a, &a),
            Err(StatsError::UndefinedTest(_))
        ));
    }

    #[test]
    fn wilcoxon_exact_and_approximate_agree_at_boundary() {
        let mut rng = Pcg::seeded(8);
        for _ in 0..30 {
            let n = 12;
            let diffs: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
            let zeros = vec![0.0; n];
            let exact = wilcoxon_signed_rank(&diffs, &zeros).unwrap();
            // force the approximate path by recomputing with the internals
            let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
            let ranks2 = double_ranks(&abs);
            let w2: i64 = diffs
                .iter()
                .zip(&ranks2)
                .filter(|(d, _)| **d > 0.0)
                .map(|(_, &r)| r)
                .sum();
            let nf = n as f64;
            let mean = nf * (nf + 1.0) / 4.0;
            let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
            for t in tie_groups(&abs) {
                let t = t as f64;
                var -= (t * t * t - t) / 48.0;
            }
            let approx = two_sided_normal(w2 as f64 / 2.0, mean, var.sqrt());
            assert!((exact - approx).abs() < 0.02, "exact {exact} approx {approx}");
        }
    }

    #[test]
    fn mann_whitney_separated_three_vs_three() {
        let a = [1.0, 2.0, 3.0];
        let b = [10.0, 11.0, 12.0];
        let p = mann_whitney_u(&a, &b).unwrap();
        assert!((p - 0.1).abs() < 1e-15, "p {p}");
        // symmetric in the arguments
        assert_eq!(mann_whitney_u(&b, &a).unwrap(), p);
    }

    #[test]
    fn mann_whitney_identical_multisets_give_one() {
        let a = [3.0, 5.0, 7.0, 7.0];
        assert_eq!(mann_whitney_u(&a, &a).unwrap(), 1.0);
        let big: Vec<f64> = (0..40).map(|i| i as f64).collect();
        assert_eq!(mann_whitney_u(&big, &big).unwrap(), 1.0);
    }

    #[test]
    fn mann_whitney_exact_and_approximate_agree_at_boundary() {
        let mut rng = Pcg::seeded(9);
        for _ in 0..30 {
            let a: Vec<f64> = (0..7).map(|_| rng.normal()).collect();
            let b: Vec<f64> = (0..7).map(|_| rng.normal() + 0.3).collect();
            let exact = mann_whitney_u(&a, &b).unwrap();
            let pooled: Vec<f64> = a.iter().chain(&b).cloned().collect();
            let ranks2 = double_ranks(&pooled);
            let r_a2: i64 = ranks2[..7].iter().sum();
            let u = (r_a2 - (7 * 8) as i64) as f64 / 2.0;
            let mean = 49.0 / 2.0;
            let mut tie_term = 0.0;
            for t in tie_groups(&pooled) {
                let t = t as f64;
                tie_term += t * t * t - t;
            }
            let var = 49.0 / 12.0 * (15.0 - tie_term / (14.0 * 13.0));
            let approx = two_sided_normal(u, mean, var.sqrt());
            assert!((exact - approx).abs() < 0.02, "exact {exact} approx {approx}");
        }
    }

    #[test]
    fn pearson_exact_lines() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let (r, p) = pearson_r(&x, &y).unwrap();
        assert_eq!(r, 1.0);
        assert_eq!(p, 0.0);
        let y_neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let (r, _) = pearson_r(&x, &y_neg).unwrap();
        assert_eq!(r, -1.0);
        assert!(matches!(
            pearson_r(&x, &[1.0, 1.0, 1.0, 1.0]),
            Err(StatsError::UndefinedTest(_))
        ));
    }

    #[test]
    fn pearson_matches_direct_formula() {
        let mut rng = Pcg::seeded(10);
        let x: Vec<f64> = (0..10).map(|_| rng.normal()).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.4 * v + rng.normal()).collect();
        let (r, _) = pearson_r(&x, &y).unwrap();
        let n = 10.0;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let sxx: f64 = x.iter().map(|a| a * a).sum();
        let syy: f64 = y.iter().map(|a| a * a).sum();
        let expect = (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt());
        assert!((r - expect).abs() < 1e-12);
    }

    #[test]
    fn benjamini_hochberg_worked_cases() {
        // single p reduces to the raw threshold
        let (rej, adj) = benjamini_hochberg(&[0.04], 0.05);
        assert_eq!(rej, vec![true]);
        assert!((adj[0] - 0.04).abs() < 1e-15);
        // step-up from k = 3 rejects everything
        let (rej, adj) = benjamini_hochberg(&[0.01, 0.04, 0.03], 0.05);
        assert_eq!(rej, vec![true, true, true]);
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert!((adj[1] - 0.04).abs() < 1e-15);
        assert!((adj[2] - 0.04).abs() < 1e-15);
        // all ones reject nothing
        let (rej, adj) = benjamini_hochberg(&[1.0, 1.0, 1.0], 0.05);
        assert!(rej.iter().all(|r| !r));
        assert!(adj.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn benjamini_hochberg_monotone_in_q() {
        let mut rng = Pcg::seeded(11);
        let p: Vec<f64> = (0..20).map(|_| rng.f64()).collect();
        let (r1, _) = benjamini_hochberg(&p, 0.01);
        let (r2, _) = benjamini_hochberg(&p, 0.10);
        for (a, b) in r1.iter().zip(&r2) {
            assert!(!a | b, "rejections at q=0.01 must be a subset of q=0.10");
        }
    }

    #[test]
    fn chi_square_hand_cases() {
        let (stat, p) = chi_square_2x2(&[[10.0, 10.0], [10.0, 10.0]]).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
        let (stat, _) = chi_square_2x2(&[[20.0, 10.0], [10.0, 20.0]]).unwrap();
        assert!((stat - 20.0 / 3.0).abs() < 1e-9, "stat {stat}");
        assert!(matches!(
            chi_square_2x2(&[[0.0, 0.0], [5.0, 5.0]]),
            Err(StatsError::UndefinedTest(_))
        ));
    }

    #[test]
    fn welch_identical_groups_give_p_one() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let (t, p) = welch_t(&a, &a).unwrap();
        assert_eq!(t, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn cohort_table_summaries() {
        let mut records = Vec::new();
        for i in 0..40 {
            let event = i < 20;
            let sex = if i % 2 == 0 { 1.0 } else { 0.0 };
            let age = if event { 70.0 + (i % 5) as f64 } else { 40.0 + (i % 5) as f64 };
            let mut r = crate::data::test_record(
                &format!("p{i}"),
                &format!("e{i}"),
                100.0 + i as f64,
                event,
                age,
                sex,
            );
            r.covariates.insert("age".into(), age);
            records.push(r);
        }
        let cohort = Cohort::new(records);
        let table = cohort_table(&cohort);
        let age_row = table.iter().find(|r| r.name == "age").unwrap();
        assert_eq!(age_row.kind, VariableKind::Numeric);
        assert!(age_row.event_summary.0 > age_row.non_event_summary.0);
        assert!(*age_row.p_value.as_ref().unwrap() < 1e-6);
        let sex_row = table.iter().find(|r| r.name == "sex").unwrap();
        assert_eq!(sex_row.kind, VariableKind::Categorical);
        assert!(*sex_row.p_value.as_ref().unwrap() > 0.5);
    }
}
