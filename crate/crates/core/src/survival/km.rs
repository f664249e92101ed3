//! Kaplan-Meier product-limit estimation.

use super::SurvivalError;

/// Product-limit estimate over the distinct event times of a sample.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KaplanMeier {
    /// Distinct event times, ascending.
    pub times: Vec<f64>,
    /// S(t) immediately after each event time.
    pub survival: Vec<f64>,
    /// Subjects at risk just before each event time.
    pub at_risk: Vec<usize>,
    /// Events at each event time.
    pub events: Vec<usize>,
}

impl KaplanMeier {
    /// S(t): right-continuous step function, 1 before the first event time.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }

    /// Left limit S(t-): the product over event times strictly before `t`.
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            1.0
        } else {
            self.survival[idx - 1]
        }
    }
}

/// Kaplan-Meier estimator of the survival function S(t).
pub fn kaplan_meier(times: &[f64], events: &[bool]) -> Result<KaplanMeier, SurvivalError> {
    if times.is_empty() {
        return Err(SurvivalError::EmptyInput("kaplan_meier needs data".into()));
    }
    if times.len() != events.len() {
        return Err(SurvivalError::Shape(format!(
            "{} times vs {} event flags",
            times.len(),
            events.len()
        )));
    }
    if times.iter().any(|&t| !t.is_finite() || t <= 0.0) {
        return Err(SurvivalError::Invalid("times must be finite and positive".into()));
    }

    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].partial_cmp(&times[b]).unwrap());

    let n = times.len();
    let mut out = KaplanMeier {
        times: Vec::new(),
        survival: Vec::new(),
        at_risk: Vec::new(),
        events: Vec::new(),
    };
    let mut surv = 1.0;
    let mut i = 0;
    let mut removed = 0usize;
    while i < n {
        let t = times[order[i]];
        let mut j = i;
        let mut d = 0usize;
        while j < n && times[order[j]] == t {
            if events[order[j]] {
                d += 1;
            }
            j += 1;
        }
        let at_risk = n - removed;
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            out.times.push(t);
            out.survival.push(surv);
            out.at_risk.push(at_risk);
            out.events.push(d);
        }
        removed += j - i;
        i = j;
    }
    Ok(out)
}

/// Kaplan-Meier estimate of the censoring survival function G(t):
/// the product-limit estimator with event flags inverted.
pub fn censoring_km(times: &[f64], events: &[bool]) -> Result<KaplanMeier, SurvivalError> {
    let inverted: Vec<bool> = events.iter().map(|&e| !e).collect();
    kaplan_meier(times, &inverted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_events_means_survival_one() {
        let km = kaplan_meier(&[1.0, 2.0, 3.0], &[false, false, false]).unwrap();
        assert!(km.times.is_empty());
        assert_eq!(km.eval(10.0), 1.0);
    }

    #[test]
    fn two_subjects_death_then_censor() {
        let km = kaplan_meier(&[1.0, 2.0], &[true, false]).unwrap();
        assert_eq!(km.eval(1.0), 0.5);
        assert_eq!(km.eval(0.99), 1.0);
        assert_eq!(km.eval(5.0), 0.5);
    }

    #[test]
    fn three_subjects_product_limit_hand_case() {
        // deaths at 1 and 2, censored at 1.5
        let km = kaplan_meier(&[1.0, 1.5, 2.0], &[true, false, true]).unwrap();
        assert!((km.eval(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(km.eval(2.0), 0.0);
        assert_eq!(km.at_risk, vec![3, 1]);
    }

    #[test]
    fn censoring_km_hand_cases() {
        // all events -> no censoring observed -> G = 1
        let g = censoring_km(&[1.0, 2.0, 3.0], &[true, true, true]).unwrap();
        assert_eq!(g.eval(10.0), 1.0);
        // both censored at t=1 among n=2 -> G(1) = 0
        let g = censoring_km(&[1.0, 1.0], &[false, false]).unwrap();
        assert_eq!(g.eval(1.0), 0.0);
        assert_eq!(g.eval_left(1.0), 1.0);
    }

    #[test]
    fn censoring_km_equals_km_on_flipped_flags() {
        let times = [3.0, 1.0, 4.0, 1.0, 5.0, 2.0];
        let events = [true, false, true, true, false, false];
        let flipped: Vec<bool> = events.iter().map(|&e| !e).collect();
        assert_eq!(censoring_km(&times, &events).unwrap(), kaplan_meier(&times, &flipped).unwrap());
    }

    #[test]
    fn km_without_censoring_equals_empirical_survival() {
        let mut rng = crate::rng::Pcg::seeded(17);
        for _ in 0..100 {
            let n = 2 + rng.below(40);
            let times: Vec<f64> = (0..n).map(|_| (rng.below(15) + 1) as f64).collect();
            let events = vec![true; n];
            let km = kaplan_meier(&times, &events).unwrap();
            for probe in [0.5, 1.0, 3.0, 7.5, 15.0, 20.0] {
                let empirical = times.iter().filter(|&&t| t > probe).count() as f64 / n as f64;
                assert!(
                    (km.eval(probe) - empirical).abs() < 1e-12,
                    "probe {probe}: km {} vs empirical {empirical}",
                    km.eval(probe)
                );
            }
        }
    }

    #[test]
    fn survival_is_monotone_and_bounded() {
        let mut rng = crate::rng::Pcg::seeded(23);
        let n = 200;
        let times: Vec<f64> = (0..n).map(|_| rng.range(0.1, 100.0)).collect();
        let events: Vec<bool> = (0..n).map(|_| rng.bernoulli(0.6)).collect();
        let km = kaplan_meier(&times, &events).unwrap();
        let mut prev = 1.0;
        for &s in &km.survival {
            assert!((0.0..=1.0).contains(&s));
            assert!(s <= prev);
            prev = s;
        }
    }

    #[test]
    fn empty_input_is_error() {
        assert!(matches!(
            kaplan_meier(&[], &[]),
            Err(SurvivalError::EmptyInput(_))
        ));
    }
}
