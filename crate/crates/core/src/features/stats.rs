use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

pub const DIFF_LAGS: [usize; 3] = [1, 3, 6];
pub const MEAN_WINDOWS: [usize; 4] = [3, 6, 12, 24];
pub const STD_WINDOWS: [usize; 2] = [6, 24];
/// Length of the statistical feature vector.
pub const GAMMA: usize = DIFF_LAGS.len() + MEAN_WINDOWS.len() + STD_WINDOWS.len();

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_WEEK: usize = 7;

/// Differences, rolling means and rolling population standard deviations of
/// `series` ending at index `t`. Indices before 0 repeat `series[0]`.
pub fn statistical_features(series: &[f64], t: usize) -> [f64; GAMMA] {
    assert!(
        t < series.len(),
        "statistical_features: t={t} beyond series of {}",
        series.len()
    );
    let at = |i: isize| series[i.max(0) as usize];
    let t = t as isize;
    let mut out = [0.0; GAMMA];
    let mut k = 0;
    for lag in DIFF_LAGS {
        out[k] = at(t) - at(t - lag as isize);
        k += 1;
    }
    for w in MEAN_WINDOWS {
        out[k] = (0..w as isize).map(|i| at(t - i)).sum::<f64>() / w as f64;
        k += 1;
    }
    for w in STD_WINDOWS {
        let mean = (0..w as isize).map(|i| at(t - i)).sum::<f64>() / w as f64;
        let var = (0..w as isize)
            .map(|i| (at(t - i) - mean).powi(2))
            .sum::<f64>()
            / w as f64;
        out[k] = var.sqrt();
        k += 1;
    }
    out
}

/// Calendar ids of one hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeIds {
    /// Hour of day in `[0, 24)`.
    pub hour: usize,
    /// Day of week in `[0, 7)`, Monday = 0.
    pub weekday: usize,
}

impl TimeIds {
    pub fn of(t: NaiveDateTime) -> Self {
        Self {
            hour: t.hour() as usize,
            weekday: t.weekday().num_days_from_monday() as usize,
        }
    }
}

/// Ids of the `horizon` hours starting at `start`.
pub fn time_features(start: NaiveDateTime, horizon: usize) -> Vec<TimeIds> {
    (0..horizon)
        .map(|h| TimeIds::of(start + chrono::Duration::hours(h as i64)))
        .collect()
}

/// Linearly fills interior runs of at most `max_gap` missing values. Longer
/// runs and leading or trailing gaps stay missing.
pub fn fill_short_gaps(series: &[Option<f64>], max_gap: usize) -> Vec<Option<f64>> {
    let mut out = series.to_vec();
    let mut last: Option<usize> = None;
    for i in 0..series.len() {
        if let Some(v) = series[i] {
            if let Some(j) = last {
                let gap = i - j - 1;
                if gap > 0 && gap <= max_gap {
                    let a = series[j].unwrap();
                    for (k, slot) in out.iter_mut().enumerate().take(i).skip(j + 1) {
                        let w = (k - j) as f64 / (i - j) as f64;
                        *slot = Some(a + (v - a) * w);
                    }
                }
            }
            last = Some(i);
        }
    }
    out
}
