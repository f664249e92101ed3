//! Cox proportional-hazards fitting with a Breslow baseline.

use super::{SurvivalCurve, SurvivalError, TimeGrid};

const MAX_ITERATIONS: usize = 100;
const LOGPL_TOLERANCE: f64 = 1e-9;
const BETA_DIVERGENCE_LIMIT: f64 = 50.0;
const CONSTANT_COLUMN_STD: f64 = 1e-12;

/// Fitted proportional-hazards model: coefficients plus the Breslow
/// baseline cumulative hazard step function.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CoxModel {
    /// One log-hazard-ratio per covariate column. Columns that were
    /// constant in the fitting data get 0.
    pub beta: Vec<f64>,
    pub baseline: BreslowBaseline,
    pub iterations: usize,
    pub log_partial_likelihood: f64,
}

impl CoxModel {
    pub fn linear_predictor(&self, covariates: &[f64]) -> Result<f64, SurvivalError> {
        if covariates.len() != self.beta.len() {
            return Err(SurvivalError::Shape(format!(
                "covariate width {} does not match model width {}",
                covariates.len(),
                self.beta.len()
            )));
        }
        Ok(self.beta.iter().zip(covariates).map(|(b, x)| b * x).sum())
    }
}

/// Baseline cumulative hazard stored in shifted form: increments are
/// computed with risk scores offset by `shift`, which keeps every
/// intermediate finite even for extreme scores. `H0(t)` and `S(t | r)`
/// are recovered on evaluation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BreslowBaseline {
    shift: f64,
    /// Distinct event times, ascending.
    knots: Vec<f64>,
    /// Cumulative shifted hazard at each knot; non-decreasing.
    cumulative: Vec<f64>,
}

impl BreslowBaseline {
    /// Breslow estimate from observed data and per-subject log-risks.
    pub fn fit(times: &[f64], events: &[bool], log_risks: &[f64]) -> Result<Self, SurvivalError> {
        if times.is_empty() {
            return Err(SurvivalError::EmptyInput("baseline needs data".into()));
        }
        if times.len() != events.len() || times.len() != log_risks.len() {
            return Err(SurvivalError::Shape(format!(
                "{} times, {} events, {} risks",
                times.len(),
                events.len(),
                log_risks.len()
            )));
        }
        if !events.iter().any(|&e| e) {
            return Err(SurvivalError::NoEvents("baseline needs at least one event".into()));
        }
        let shift = log_risks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

        // Walk descending so the running sum is exactly the risk set.
        let mut denominators = Vec::new(); // (time, d, sum exp(r - shift))
        let mut running = 0.0;
        let mut i = order.len();
        while i > 0 {
            let mut j = i;
            let t = times[order[i - 1]];
            let mut d = 0usize;
            while j > 0 && times[order[j - 1]] == t {
                running += (log_risks[order[j - 1]] - shift).exp();
                if events[order[j - 1]] {
                    d += 1;
                }
                j -= 1;
            }
            if d > 0 {
                denominators.push((t, d, running));
            }
            i = j;
        }
        denominators.reverse();

        let mut knots = Vec::with_capacity(denominators.len());
        let mut cumulative = Vec::with_capacity(denominators.len());
        let mut h = 0.0;
        for (t, d, denom) in denominators {
            h += d as f64 / denom;
            knots.push(t);
            cumulative.push(h);
        }
        Ok(BreslowBaseline { shift, knots, cumulative })
    }

    fn shifted_cumulative(&self, t: f64) -> f64 {
        let idx = self.knots.partition_point(|&x| x <= t);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// H0(t): right-continuous, 0 before the first event time, held
    /// constant beyond the last.
    pub fn cumulative_hazard(&self, t: f64) -> f64 {
        self.shifted_cumulative(t) * self.shift.exp()
    }

    /// S(t | log_risk) = exp(-H0(t) exp(log_risk)), evaluated in shifted
    /// form so arbitrary scores never overflow.
    pub fn survival(&self, t: f64, log_risk: f64) -> f64 {
        (-(self.shifted_cumulative(t) * (log_risk - self.shift).exp())).exp()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

/// Maximize the Breslow-ties log partial likelihood by Newton-Raphson
/// with step halving.
///
/// `covariates` is one row per subject. Constant columns are detected and
/// assigned a coefficient of 0 rather than rejected, since degenerate
/// biomarkers are expected input for the classifier second stage.
pub fn fit_cox(
    covariates: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
) -> Result<CoxModel, SurvivalError> {
    let n = times.len();
    if n == 0 {
        return Err(SurvivalError::EmptyInput("fit_cox needs data".into()));
    }
    if covariates.len() != n || events.len() != n {
        return Err(SurvivalError::Shape(format!(
            "{} rows, {} times, {} events",
            covariates.len(),
            n,
            events.len()
        )));
    }
    if !events.iter().any(|&e| e) {
        return Err(SurvivalError::NoEvents("fit_cox needs at least one event".into()));
    }
    let width = covariates[0].len();
    for (i, row) in covariates.iter().enumerate() {
        if row.len() != width {
            return Err(SurvivalError::Shape(format!(
                "row {i} has width {}, expected {width}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SurvivalError::Invalid(format!("row {i} has a non-finite covariate")));
        }
    }

    // Standardize internally for conditioning; constant columns drop out.
    let mut means = vec![0.0; width];
    let mut stds = vec![0.0; width];
    for j in 0..width {
        let mean = covariates.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = covariates.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        means[j] = mean;
        stds[j] = var.sqrt();
    }
    let active: Vec<usize> = (0..width).filter(|&j| stds[j] > CONSTANT_COLUMN_STD).collect();
    let p = active.len();

    let x_std: Vec<Vec<f64>> = covariates
        .iter()
        .map(|row| active.iter().map(|&j| (row[j] - means[j]) / stds[j]).collect())
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let mut beta = vec![0.0; p];
    let mut iterations = 0;
    let mut logpl = partial_likelihood_stats(&x_std, times, events, &order, &beta).0;

    if p > 0 {
        for iter in 1..=MAX_ITERATIONS {
            iterations = iter;
            let (_, grad, info) = partial_likelihood_stats(&x_std, times, events, &order, &beta);
            let delta = solve_spd(info, &grad).ok_or_else(|| {
                SurvivalError::NoConvergence("information matrix is singular".into())
            })?;

            let mut step = 1.0;
            let mut improved = false;
            let mut candidate_logpl = logpl;
            let mut candidate = beta.clone();
            for _ in 0..40 {
                let trial: Vec<f64> = beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
                let trial_logpl = partial_likelihood_stats(&x_std, times, events, &order, &trial).0;
                if trial_logpl.is_finite() && trial_logpl >= logpl {
                    candidate = trial;
                    candidate_logpl = trial_logpl;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break; // cannot improve further; treat as converged
            }
            beta = candidate;
            if beta.iter().any(|b| b.abs() > BETA_DIVERGENCE_LIMIT) {
                return Err(SurvivalError::MonotoneLikelihood(format!(
                    "coefficients diverged beyond |{BETA_DIVERGENCE_LIMIT}| after {iter} iterations (standardized beta {beta:?})"
                )));
            }
            let change = candidate_logpl - logpl;
            logpl = candidate_logpl;
            if change.abs() < LOGPL_TOLERANCE {
                break;
            }
        }
    }

    // Back to raw covariate scale.
    let mut beta_raw = vec![0.0; width];
    for (k, &j) in active.iter().enumerate() {
        beta_raw[j] = beta[k] / stds[j];
    }
    let log_risks: Vec<f64> = covariates
        .iter()
        .map(|row| beta_raw.iter().zip(row).map(|(b, x)| b * x).sum())
        .collect();
    let baseline = BreslowBaseline::fit(times, events, &log_risks)?;

    Ok(CoxModel {
        beta: beta_raw,
        baseline,
        iterations,
        log_partial_likelihood: logpl,
    })
}

/// Breslow-ties log partial likelihood with gradient and information
/// matrix (upper triangle packed into a dense p x p Vec).
fn partial_likelihood_stats(
    x: &[Vec<f64>],
    times: &[f64],
    events: &[bool],
    ascending: &[usize],
    beta: &[f64],
) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let n = ascending.len();
    let p = beta.len();
    let lps: Vec<f64> = x
        .iter()
        .map(|row| beta.iter().zip(row).map(|(b, v)| b * v).sum())
        .collect();
    let shift = lps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut logpl = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![vec![0.0; p]; p];

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![vec![0.0; p]; p];

    let mut i = n;
    while i > 0 {
        let t = times[ascending[i - 1]];
        let mut j = i;
        let mut d = 0usize;
        let mut event_lp_sum = 0.0;
        let mut event_x_sum = vec![0.0; p];
        while j > 0 && times[ascending[j - 1]] == t {
            let idx = ascending[j - 1];
            let w = (lps[idx] - shift).exp();
            s0 += w;
            for k in 0..p {
                s1[k] += w * x[idx][k];
                for l in k..p {
                    s2[k][l] += w * x[idx][k] * x[idx][l];
                }
            }
            if events[idx] {
                d += 1;
                event_lp_sum += lps[idx];
                for k in 0..p {
                    event_x_sum[k] += x[idx][k];
                }
            }
            j -= 1;
        }
        if d > 0 {
            let df = d as f64;
            logpl += event_lp_sum - df * (shift + s0.ln());
            for k in 0..p {
                let mk = s1[k] / s0;
                grad[k] += event_x_sum[k] - df * mk;
                for l in k..p {
                    info[k][l] += df * (s2[k][l] / s0 - mk * (s1[l] / s0));
                }
            }
        }
        i = j;
    }
    for k in 0..p {
        for l in 0..k {
            info[k][l] = info[l][k];
        }
    }
    (logpl, grad, info)
}

/// Solve `A x = b` for symmetric positive-definite `A` by Cholesky,
/// retrying with a small ridge if the factorization stalls.
fn solve_spd(mut a: Vec<Vec<f64>>, b: &[f64]) -> Option<Vec<f64>> {
    let p = b.len();
    if p == 0 {
        return Some(Vec::new());
    }
    let scale = (0..p).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(1e-300);
    for attempt in 0..4 {
        if attempt > 0 {
            let ridge = scale * 1e-10 * 10f64.powi(attempt);
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += ridge;
            }
        }
        if let Some(chol) = cholesky(&a) {
            return Some(cholesky_solve(&chol, b));
        }
    }
    None
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let mut sum = a[i][j];
            for k in 0..j {
                sum -= l[i][k] * l[j][k];
            }
            if i == j {
                if sum <= 0.0 || !sum.is_finite() {
                    return None;
                }
                l[i][j] = sum.sqrt();
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = b.len();
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i][k] * y[k];
        }
        y[i] = sum / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut sum = y[i];
        for k in i + 1..p {
            sum -= l[k][i] * x[k];
        }
        x[i] = sum / l[i][i];
    }
    x
}

/// Sample `S(t) = exp(-H0(t) exp(beta' x))` on the grid for each row.
pub fn predict_survival(
    model: &CoxModel,
    covariates: &[Vec<f64>],
    grid: &TimeGrid,
) -> Result<Vec<SurvivalCurve>, SurvivalError> {
    covariates
        .iter()
        .map(|row| {
            let lp = model.linear_predictor(row)?;
            let values: Vec<f64> = grid
                .points()
                .iter()
                .map(|&t| model.baseline.survival(t, lp).clamp(0.0, 1.0))
                .collect();
            SurvivalCurve::new(values, grid)
        })
        .collect()
}

/// Second stage of the classifier pipeline: treat the classifier output
/// as a generic biomarker and fit a single-covariate Cox regression on
/// full `[time-to-event, event]` validation labels.
pub fn fit_classifier_cox(
    biomarker: &[f64],
    times: &[f64],
    events: &[bool],
) -> Result<CoxModel, SurvivalError> {
    let rows: Vec<Vec<f64>> = biomarker.iter().map(|&b| vec![b]).collect();
    fit_cox(&rows, times, events)
}
