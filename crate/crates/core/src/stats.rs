//! Streaming moments and least-squares fits shared by the estimators.

use serde::{Deserialize, Serialize};

/// Welford accumulator; merges with Chan's formula so batch results can be
/// folded in a fixed order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunningStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &RunningStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.count == 0 {
            return f64::INFINITY;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for RunningStats {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = RunningStats::default();
        iter.into_iter().for_each(|x| s.push(x));
        s
    }
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Some(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
        points: n,
    })
}

/// Slope of `log y` against `log x`, skipping non-positive entries.
pub fn log_log_fit(xs: &[f64], ys: &[f64]) -> Option<LinearFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .unzip();
    linear_fit(&lx, &ly)
}

/// Standard error of a binomial proportion. With no hits or only hits the
/// proportion is taken half a sample from the edge, so the error stays
/// positive.
pub fn binomial_std_error(p: f64, samples: usize) -> f64 {
    if samples == 0 {
        return f64::INFINITY;
    }
    let nf = samples as f64;
    let p = p.clamp(0.5 / nf, 1.0 - 0.5 / nf);
    (p * (1.0 - p) / nf).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn merge_matches_single_pass() {
        let data: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole: RunningStats = data.iter().copied().collect();
        let mut merged: RunningStats = data[..313].iter().copied().collect();
        merged.merge(&data[313..].iter().copied().collect());
        assert_eq!(whole.count, merged.count);
        assert_relative_eq!(whole.mean, merged.mean, epsilon = 1e-12);
        assert_relative_eq!(whole.variance(), merged.variance(), epsilon = 1e-10);
    }

    #[test]
    fn fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, 2.0);
        assert_relative_eq!(f.intercept, 1.0);
        assert_relative_eq!(f.r_squared, 1.0);
    }

    #[test]
    fn log_log_power_law() {
        let xs: Vec<f64> = (1..8).map(|k| 2f64.powi(-k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(-0.5)).collect();
        let f = log_log_fit(&xs, &ys).unwrap();
        assert_relative_eq!(f.slope, -0.5, epsilon = 1e-12);
    }
}
