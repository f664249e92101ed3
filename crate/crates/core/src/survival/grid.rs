//! The shared evaluation time grid and curves sampled on it.

use super::SurvivalError;

/// Number of grid points every survival curve is sampled on.
pub const GRID_POINTS: usize = 100;

/// 100 uniformly spaced time points from 0 to the maximum observed time
/// of the fitting (validation) set.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(max_time: f64) -> Result<Self, SurvivalError> {
        if !max_time.is_finite() || max_time <= 0.0 {
            return Err(SurvivalError::Invalid(format!(
                "grid needs a positive maximum time, got {max_time}"
            )));
        }
        let step = max_time / (GRID_POINTS - 1) as f64;
        let mut points: Vec<f64> = (0..GRID_POINTS).map(|i| i as f64 * step).collect();
        points[GRID_POINTS - 1] = max_time;
        Ok(TimeGrid { points })
    }

    /// Grid spanning the maximum observed time in `times`.
    pub fn from_times(times: &[f64]) -> Result<Self, SurvivalError> {
        let max = times.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Self::uniform(max)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.points[1] - self.points[0]
    }

    pub fn max_time(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Index of the temporally closest grid point; an exact midpoint
    /// resolves to the earlier point.
    pub fn nearest_index(&self, t: f64) -> usize {
        let n = self.points.len();
        let hi = self.points.partition_point(|&p| p < t);
        if hi == 0 {
            return 0;
        }
        if hi >= n {
            return n - 1;
        }
        let lo = hi - 1;
        if (self.points[hi] - t) < (t - self.points[lo]) {
            hi
        } else {
            lo
        }
    }

    /// Largest index k with `points[k] <= t`, clamped to the grid.
    pub fn bin_index(&self, t: f64) -> usize {
        let hi = self.points.partition_point(|&p| p <= t);
        hi.saturating_sub(1)
    }
}

/// Survival probabilities sampled at the grid points of one [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SurvivalCurve {
    values: Vec<f64>,
}

impl SurvivalCurve {
    /// Values must lie in [0, 1], be non-increasing, and match the grid
    /// length.
    pub fn new(values: Vec<f64>, grid: &TimeGrid) -> Result<Self, SurvivalError> {
        if values.len() != grid.len() {
            return Err(SurvivalError::Shape(format!(
                "curve has {} values, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        let mut prev = f64::INFINITY;
        for (i, &v) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SurvivalError::Invalid(format!(
                    "curve value {v} at index {i} outside [0, 1]"
                )));
            }
            if v > prev {
                return Err(SurvivalError::Invalid(format!(
                    "curve increases at index {i}: {prev} -> {v}"
                )));
            }
            prev = v;
        }
        Ok(SurvivalCurve { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Survival read at the grid point temporally closest to `t`.
    pub fn at_nearest(&self, grid: &TimeGrid, t: f64) -> f64 {
        self.values[grid.nearest_index(t)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_100_points_from_zero_to_max() {
        let grid = TimeGrid::uniform(990.0).unwrap();
        assert_eq!(grid.len(), GRID_POINTS);
        assert_eq!(grid.points()[0], 0.0);
        assert_eq!(grid.max_time(), 990.0);
        assert!((grid.step() - 10.0).abs() < 1e-12);
        let mut prev = -1.0;
        for &p in grid.points() {
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn nearest_index_midpoint_resolves_earlier() {
        let grid = TimeGrid::uniform(99.0).unwrap(); // step 1
        assert_eq!(grid.nearest_index(3.49), 3);
        assert_eq!(grid.nearest_index(3.5), 3);
        assert_eq!(grid.nearest_index(3.51), 4);
        assert_eq!(grid.nearest_index(-5.0), 0);
        assert_eq!(grid.nearest_index(1e9), GRID_POINTS - 1);
    }

    #[test]
    fn bin_index_is_largest_point_at_or_below() {
        let grid = TimeGrid::uniform(99.0).unwrap();
        assert_eq!(grid.bin_index(0.0), 0);
        assert_eq!(grid.bin_index(0.99), 0);
        assert_eq!(grid.bin_index(1.0), 1);
        assert_eq!(grid.bin_index(98.3), 98);
        assert_eq!(grid.bin_index(1e9), GRID_POINTS - 1);
    }

    #[test]
    fn invalid_grid_and_curves_are_rejected() {
        assert!(TimeGrid::uniform(0.0).is_err());
        let grid = TimeGrid::uniform(10.0).unwrap();
        assert!(SurvivalCurve::new(vec![1.0; 99], &grid).is_err());
        let mut up = vec![0.5; GRID_POINTS];
        up[50] = 0.6;
        assert!(SurvivalCurve::new(up, &grid).is_err());
        let mut big = vec![0.5; GRID_POINTS];
        big[0] = 1.5;
        assert!(SurvivalCurve::new(big, &grid).is_err());
        assert!(SurvivalCurve::new(vec![0.5; GRID_POINTS], &grid).is_ok());
    }
}
