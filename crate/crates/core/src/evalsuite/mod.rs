//! Scoring a trained model the way switching experiments are scored:
//! switching-probability curves, MAE and R², predicted densities against
//! histograms, and Kolmogorov–Smirnov statistics.

mod report;

pub use report::{
    score_switching, write_curves_csv, write_distribution_csv, BiasScore, EvalSummary,
    SwitchingTable, CURVES_HEADER, DISTRIBUTION_HEADER,
};

use serde::{Deserialize, Serialize};

use crate::device::{gate_grid, iv_model_predict, DeviceState, GroundTruthConfig, IvRecord};
use crate::error::{Error, Result};
use crate::mixture::{cdf, pdf};
use crate::network::MdnNetwork;

/// Gate grid for switching curves: 0 to 3 µA in 0.05 µA steps.
pub fn default_grid() -> Vec<f64> {
    gate_grid(3.0, 61)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveSource {
    Model,
    Empirical,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingCurve {
    pub i_b: f64,
    pub grid: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub source: CurveSource,
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::validation("switching grid must be nonempty and strictly increasing"));
    }
    Ok(())
}

/// Mass of the superconducting-state prediction above `v_mid`.
pub fn model_switching_probability(net: &MdnNetwork, i_g: f64, i_b: f64, v_mid: f64) -> Result<f64> {
    let p = iv_model_predict(net, i_g, i_b, DeviceState::Superconducting)?;
    Ok((1.0 - cdf(&p.params, v_mid)).clamp(0.0, 1.0))
}

pub fn model_switching_curve(
    net: &MdnNetwork,
    grid: &[f64],
    i_b: f64,
    v_mid: f64,
) -> Result<SwitchingCurve> {
    check_grid(grid)?;
    let probabilities = grid
        .iter()
        .map(|&g| model_switching_probability(net, g, i_b, v_mid))
        .collect::<Result<_>>()?;
    Ok(SwitchingCurve {
        i_b,
        grid: grid.to_vec(),
        probabilities,
        source: CurveSource::Model,
    })
}

/// The oracle's switching law: probability that the critical current lies
/// below `i_g`.
pub fn ground_truth_switching_curve(
    cfg: &GroundTruthConfig,
    grid: &[f64],
    i_b: f64,
) -> Result<SwitchingCurve> {
    check_grid(grid)?;
    Ok(SwitchingCurve {
        i_b,
        grid: grid.to_vec(),
        probabilities: grid.iter().map(|&g| cfg.critical.cdf(i_b, g)).collect(),
        source: CurveSource::GroundTruth,
    })
}

/// Rising ramps that started superconducting: maximal runs of consecutive
/// records at one bias with superconducting state and strictly increasing
/// gate current. Records must be in acquisition order.
pub fn ramp_up_sweeps(records: &[IvRecord], i_b: f64) -> Vec<&[IvRecord]> {
    let mut sweeps = Vec::new();
    let mut start = 0;
    for k in 1..=records.len() {
        let continues = k < records.len() && {
            let (a, b) = (&records[k - 1], &records[k]);
            a.i_b == b.i_b && a.state == b.state && b.i_g > a.i_g
        };
        if !continues {
            let run = &records[start..k];
            if run.len() >= 2 && run[0].i_b == i_b && run[0].state == DeviceState::Superconducting {
                sweeps.push(run);
            }
            start = k;
        }
    }
    sweeps
}

fn on_grid(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + b.abs())
}

/// Per grid point, the fraction of ramp-up sweeps at `i_b` whose load
/// voltage there exceeds `v_mid`.
pub fn empirical_switching_probability(
    records: &[IvRecord],
    grid: &[f64],
    i_b: f64,
    v_mid: f64,
) -> Result<SwitchingCurve> {
    check_grid(grid)?;
    let sweeps = ramp_up_sweeps(records, i_b);
    if sweeps.is_empty() {
        return Err(Error::validation(format!("no ramp-up sweeps recorded at bias {i_b} uA")));
    }
    let mut probabilities = Vec::with_capacity(grid.len());
    for &g in grid {
        let (mut hits, mut total) = (0usize, 0usize);
        for sweep in &sweeps {
            if let Some(r) = sweep.iter().find(|r| on_grid(r.i_g, g)) {
                total += 1;
                hits += usize::from(r.v_l > v_mid);
            }
        }
        if total == 0 {
            return Err(Error::validation(format!(
                "no records at gate current {g} uA, bias {i_b} uA"
            )));
        }
        probabilities.push(hits as f64 / total as f64);
    }
    Ok(SwitchingCurve {
        i_b,
        grid: grid.to_vec(),
        probabilities,
        source: CurveSource::Empirical,
    })
}

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::validation(format!(
            "length mismatch: {} predictions, {} actual values",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("cannot score empty vectors"));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let sum: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum();
    Ok(sum / pred.len() as f64)
}

/// Coefficient of determination of `pred` against `actual`.
pub fn r_squared(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|a| (a - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::validation("R^2 is undefined for constant actual values"));
    }
    let ss_res: f64 = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// One-sample Kolmogorov–Smirnov statistic `sup |F_n(x) - F(x)|`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::validation("KS statistic needs at least one sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::validation("KS statistic needs nonempty samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// One-sample critical value at α = 0.01, `1.63 / sqrt(n)`.
pub fn ks_critical_01(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Asymptotic two-sample critical value at α = 0.01.
pub fn ks_two_sample_critical_01(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.628 * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub center: f64,
    /// Count divided by `n * bin_width`.
    pub density: f64,
    /// Model density at `center`.
    pub pdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DistributionPoint {
    pub i_g: f64,
    pub i_b: f64,
    pub n_samples: usize,
    pub bin_width: f64,
    pub bins: Vec<HistogramBin>,
    pub warning: Option<String>,
}

/// Fewer empirical samples than this at a point raises a warning.
pub const MIN_HISTOGRAM_SAMPLES: usize = 30;
const MAX_BINS: usize = 10_000;

/// Interpolated quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Freedman–Diaconis bin width `2 IQR n^(-1/3)`, falling back to the range
/// (then to 1) when the spread vanishes.
pub fn freedman_diaconis_width(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    let spread = if iqr > 0.0 {
        iqr
    } else {
        sorted[sorted.len() - 1] - sorted[0]
    };
    if spread > 0.0 {
        2.0 * spread * n.powf(-1.0 / 3.0)
    } else {
        1.0
    }
}

/// Density-normalized histogram of ramp-up load voltages at each requested
/// gate current, next to the model density at the bin centres.
pub fn distribution_report(
    net: &MdnNetwork,
    records: &[IvRecord],
    i_g_values: &[f64],
    i_b: f64,
) -> Result<Vec<DistributionPoint>> {
    let sweeps = ramp_up_sweeps(records, i_b);
    let mut out = Vec::with_capacity(i_g_values.len());
    for &g in i_g_values {
        let mut v: Vec<f64> = sweeps
            .iter()
            .filter_map(|s| s.iter().find(|r| on_grid(r.i_g, g)).map(|r| r.v_l))
            .collect();
        v.sort_by(f64::total_cmp);
        let params = iv_model_predict(net, g, i_b, DeviceState::Superconducting)?.params;
        let warning = (v.len() < MIN_HISTOGRAM_SAMPLES).then(|| {
            format!(
                "only {} empirical samples at i_g={g} uA, i_b={i_b} uA",
                v.len()
            )
        });
        if v.is_empty() {
            out.push(DistributionPoint {
                i_g: g,
                i_b,
                n_samples: 0,
                bin_width: 0.0,
                bins: Vec::new(),
                warning,
            });
            continue;
        }
        let lo = v[0];
        let range = v[v.len() - 1] - lo;
        let mut width = freedman_diaconis_width(&v);
        let mut nbins = ((range / width).ceil() as usize).max(1);
        if nbins > MAX_BINS {
            nbins = MAX_BINS;
            width = range / nbins as f64;
        }
        let mut counts = vec![0usize; nbins];
        for &x in &v {
            let idx = (((x - lo) / width) as usize).min(nbins - 1);
            counts[idx] += 1;
        }
        let n = v.len() as f64;
        let bins = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let center = lo + (i as f64 + 0.5) * width;
                HistogramBin {
                    center,
                    density: c as f64 / (n * width),
                    pdf: pdf(&params, center),
                }
            })
            .collect();
        out.push(DistributionPoint {
            i_g: g,
            i_b,
            n_samples: v.len(),
            bin_width: width,
            bins,
            warning,
        });
    }
    Ok(out)
}
