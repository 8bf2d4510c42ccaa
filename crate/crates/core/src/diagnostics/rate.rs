use serde::{Deserialize, Serialize};

use super::DiagnosticsFrame;

/// Loss-rate fit over the last two decades of flow time.
///
/// `r(t) = L~ t (log t)^{2 - 2/L}` should stay in a bounded band, `log ||v||`
/// should grow like `(1/L) log log t`, and
/// `||dL~|| t (log t)^{1 - 1/L}` should stay bounded as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub conclusive: bool,
    pub reason: Option<String>,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub window_start: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub window_end: f64,
    pub samples: usize,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub r_min: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub r_max: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub r_ratio: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub norm_slope: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub expected_norm_slope: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub grad_band_min: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub grad_band_max: f64,
    #[serde(with = "crate::fmt::lenient_f64")]
    pub grad_band_ratio: f64,
}

/// Everything is evaluated in log space: `log r = -log(1/L~) + log t +
/// (2 - 2/L) log log t`, so losses far below the `f64` range still work.
pub fn rate_check(frames: &[DiagnosticsFrame], degree: u32, t1: Option<usize>) -> RateReport {
    let l = degree as f64;
    let t_end = frames.last().map_or(0.0, |f| f.t);
    let start = t_end / 100.0;
    let mut report = RateReport {
        conclusive: false,
        reason: None,
        window_start: start,
        window_end: t_end,
        samples: 0,
        r_min: f64::NAN,
        r_max: f64::NAN,
        r_ratio: f64::NAN,
        norm_slope: f64::NAN,
        expected_norm_slope: 1.0 / l,
        grad_band_min: f64::NAN,
        grad_band_max: f64::NAN,
        grad_band_ratio: f64::NAN,
    };
    let window: Vec<&DiagnosticsFrame> = frames.iter().filter(|f| f.t >= start && f.t > 1.0).collect();
    report.samples = window.len();
    if window.len() < 3 {
        report.reason = Some(format!("only {} checkpoints in the last two decades", window.len()));
        return report;
    }

    let log_r: Vec<f64> = window
        .iter()
        .map(|f| -f.log_inv_loss + f.t.ln() + (2.0 - 2.0 / l) * f.t.ln().ln())
        .collect();
    let log_band: Vec<f64> = window
        .iter()
        .map(|f| f.log_grad_norm + f.t.ln() + (1.0 - 1.0 / l) * f.t.ln().ln())
        .collect();
    let (r_lo, r_hi) = min_max(&log_r);
    let (b_lo, b_hi) = min_max(&log_band);
    report.r_min = r_lo.exp();
    report.r_max = r_hi.exp();
    report.r_ratio = (r_hi - r_lo).exp();
    report.grad_band_min = b_lo.exp();
    report.grad_band_max = b_hi.exp();
    report.grad_band_ratio = (b_hi - b_lo).exp();

    let xs: Vec<f64> = window.iter().map(|f| f.t.ln().ln()).collect();
    let ys: Vec<f64> = window.iter().map(|f| f.norm_v.ln()).collect();
    report.norm_slope = slope(&xs, &ys);

    match t1.map(|i| frames[i].t) {
        None => report.reason = Some("t1 not reached".into()),
        Some(t) if t > start => report.reason = Some(format!("t1 = {t} is inside the fit window")),
        Some(_) if start <= 1.0 => report.reason = Some("window starts before t = 1".into()),
        Some(_) => report.conclusive = true,
    }
    report
}

fn min_max(a: &[f64]) -> (f64, f64) {
    a.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Least-squares slope of `ys` against `xs`.
fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
