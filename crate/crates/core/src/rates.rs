//! Log–log least-squares rate fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Error model used for a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateModel {
    /// `e ≈ C h^p`.
    Power,
    /// `e ≈ C h^p ln(2 + 1/h)`.
    PowerLog,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    /// Half width of the 95% confidence band on the slope.
    pub ci95: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn lower(&self) -> f64 {
        self.slope - self.ci95
    }

    pub fn upper(&self) -> f64 {
        self.slope + self.ci95
    }
}

/// `ln(2 + 1/h)`.
pub fn log_factor(h: f64) -> f64 {
    (2.0 + 1.0 / h).ln()
}

/// Fits `log e` against `log h`, skipping non-finite or non-positive rows.
/// Returns `None` with fewer than two usable rows.
pub fn fit_slope(hs: &[f64], values: &[f64], model: RateModel) -> Option<SlopeFit> {
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(values)
        .filter(|(h, v)| h.is_finite() && **h > 0.0 && v.is_finite() && **v > 0.0)
        .map(|(&h, &v)| {
            let v = match model {
                RateModel::Power => v,
                RateModel::PowerLog => v / log_factor(h),
            };
            (h.ln(), v.ln())
        })
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ci95 = if n > 2 {
        let rss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
        let se = (rss / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0).expect("positive degrees of freedom").inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    Some(SlopeFit { model, slope, intercept, ci95, points: n })
}

/// Of the two fits, the one whose slope is closer to `expected`.
pub fn closest_fit(fits: &[SlopeFit], expected: f64) -> Option<&SlopeFit> {
    fits.iter().min_by(|a, b| (a.slope - expected).abs().total_cmp(&(b.slope - expected).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let hs = [0.2, 0.1, 0.05, 0.025];
        let v: Vec<f64> = hs.iter().map(|h| 3.0 * h * h * h).collect();
        let fit = fit_slope(&hs, &v, RateModel::Power).unwrap();
        assert!((fit.slope - 3.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.ci95 < 1e-6);
    }

    #[test]
    fn log_model_removes_log_factor() {
        let hs = [0.2, 0.1, 0.05, 0.025];
        let v: Vec<f64> = hs.iter().map(|&h| h * h * log_factor(h)).collect();
        let plain = fit_slope(&hs, &v, RateModel::Power).unwrap();
        let log = fit_slope(&hs, &v, RateModel::PowerLog).unwrap();
        assert!(plain.slope < 1.9);
        assert!((log.slope - 2.0).abs() < 1e-12);
        let fits = [plain, log.clone()];
        assert_eq!(closest_fit(&fits, 2.0), Some(&log));
    }

    #[test]
    fn t_quantile_band() {
        // residuals ±0.1 around slope 2: se = sqrt(rss / (n-2) / sxx)
        let hs = [1.0, std::f64::consts::E.recip(), std::f64::consts::E.powi(-2)];
        let v = [1.0f64, (-2.0f64 + 0.1).exp(), (-4.0f64).exp()];
        let fit = fit_slope(&hs, &v, RateModel::Power).unwrap();
        let t = 12.706204736174707;
        let resid: f64 = {
            let (a, b) = (fit.intercept, fit.slope);
            [(0.0, 0.0), (-1.0, -1.9), (-2.0, -4.0)].iter().map(|(x, y): &(f64, f64)| (y - a - b * x).powi(2)).sum()
        };
        let expect = t * (resid / 1.0 / 2.0).sqrt();
        assert!((fit.ci95 - expect).abs() < 1e-9);
    }

    #[test]
    fn skips_unusable_rows() {
        assert!(fit_slope(&[0.1, 0.05], &[0.0, f64::NAN], RateModel::Power).is_none());
    }
}
