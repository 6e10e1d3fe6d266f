use std::io::Write;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;

use super::{
    empirical_switching_probability, ground_truth_switching_curve, mae, model_switching_curve,
    r_squared, DistributionPoint, SwitchingCurve,
};
use crate::device::{GroundTruthConfig, IvRecord, VMidRule};
use crate::error::Result;
use crate::network::MdnNetwork;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BiasScore {
    /// Mean absolute error in percentage points.
    pub mae_pct: f64,
    pub r2: f64,
}

/// Per-bias switching scores, one entry per bias level in configured order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub per_bias: Vec<(f64, BiasScore)>,
    pub mean_mae_pct: f64,
    pub mean_r2: f64,
}

struct PerBias<'a>(&'a [(f64, BiasScore)]);

impl Serialize for PerBias<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (b, score) in self.0 {
            map.serialize_entry(&b.to_string(), score)?;
        }
        map.end()
    }
}

impl Serialize for EvalSummary {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("per_bias", &PerBias(&self.per_bias))?;
        map.serialize_entry("mean_mae_pct", &self.mean_mae_pct)?;
        map.serialize_entry("mean_r2", &self.mean_r2)?;
        map.end()
    }
}

impl EvalSummary {
    fn from_scores(per_bias: Vec<(f64, BiasScore)>) -> Self {
        let n = per_bias.len().max(1) as f64;
        Self {
            mean_mae_pct: per_bias.iter().map(|(_, s)| s.mae_pct).sum::<f64>() / n,
            mean_r2: per_bias.iter().map(|(_, s)| s.r2).sum::<f64>() / n,
            per_bias,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)
            .map_err(|e| crate::Error::validation(format!("serializing summary: {e}")))?;
        out.push(b'\n');
        Ok(out)
    }
}

/// Model, empirical and ground-truth switching curves at one bias.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasCurves {
    pub i_b: f64,
    pub v_mid: f64,
    pub model: SwitchingCurve,
    pub empirical: SwitchingCurve,
    pub truth: SwitchingCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingTable {
    pub rows: Vec<BiasCurves>,
}

fn score(pred: &SwitchingCurve, actual: &SwitchingCurve) -> Result<BiasScore> {
    Ok(BiasScore {
        mae_pct: 100.0 * mae(&pred.probabilities, &actual.probabilities)?,
        r2: r_squared(&pred.probabilities, &actual.probabilities)?,
    })
}

impl SwitchingTable {
    /// Model curves scored against the measured (empirical) curves.
    pub fn summary_vs_empirical(&self) -> Result<EvalSummary> {
        let scores = self
            .rows
            .iter()
            .map(|r| Ok((r.i_b, score(&r.model, &r.empirical)?)))
            .collect::<Result<_>>()?;
        Ok(EvalSummary::from_scores(scores))
    }

    /// Model curves scored against the oracle's switching law.
    pub fn summary_vs_truth(&self) -> Result<EvalSummary> {
        let scores = self
            .rows
            .iter()
            .map(|r| Ok((r.i_b, score(&r.model, &r.truth)?)))
            .collect::<Result<_>>()?;
        Ok(EvalSummary::from_scores(scores))
    }
}

/// Builds the three switching curves at every bias level.
pub fn score_switching(
    net: &MdnNetwork,
    records: &[IvRecord],
    truth: &GroundTruthConfig,
    rule: &VMidRule,
    bias_levels: &[f64],
    grid: &[f64],
) -> Result<SwitchingTable> {
    let rows = bias_levels
        .iter()
        .map(|&i_b| {
            let v_mid = rule.at(i_b);
            Ok(BiasCurves {
                i_b,
                v_mid,
                model: model_switching_curve(net, grid, i_b, v_mid)?,
                empirical: empirical_switching_probability(records, grid, i_b, v_mid)?,
                truth: ground_truth_switching_curve(truth, grid, i_b)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SwitchingTable { rows })
}

pub const CURVES_HEADER: [&str; 6] = ["i_b_uA", "i_g_uA", "v_mid_V", "p_model", "p_empirical", "p_truth"];
pub const DISTRIBUTION_HEADER: [&str; 8] = [
    "i_g_uA",
    "i_b_uA",
    "n_samples",
    "bin_width_V",
    "bin_center_V",
    "hist_density",
    "model_pdf",
    "warning",
];

fn to_csv_err(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        other => crate::Error::validation(format!("writing CSV: {other:?}")),
    }
}

pub fn write_curves_csv<W: Write>(w: W, table: &SwitchingTable) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CURVES_HEADER).map_err(to_csv_err)?;
    for r in &table.rows {
        for (k, g) in r.model.grid.iter().enumerate() {
            out.write_record([
                r.i_b.to_string(),
                g.to_string(),
                r.v_mid.to_string(),
                r.model.probabilities[k].to_string(),
                r.empirical.probabilities[k].to_string(),
                r.truth.probabilities[k].to_string(),
            ])
            .map_err(to_csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_distribution_csv<W: Write>(w: W, points: &[DistributionPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(DISTRIBUTION_HEADER).map_err(to_csv_err)?;
    for p in points {
        let warning = p.warning.clone().unwrap_or_default();
        for b in &p.bins {
            out.write_record([
                p.i_g.to_string(),
                p.i_b.to_string(),
                p.n_samples.to_string(),
                p.bin_width.to_string(),
                b.center.to_string(),
                b.density.to_string(),
                b.pdf.to_string(),
                warning.clone(),
            ])
            .map_err(to_csv_err)?;
        }
        if p.bins.is_empty() {
            out.write_record([
                p.i_g.to_string(),
                p.i_b.to_string(),
                "0".into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                warning,
            ])
            .map_err(to_csv_err)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_json_shape() {
        let s = EvalSummary::from_scores(vec![
            (16.5, BiasScore { mae_pct: 1.0, r2: 0.99 }),
            (9.0, BiasScore { mae_pct: 3.0, r2: 0.97 }),
        ]);
        assert_eq!(s.mean_mae_pct, 2.0);
        let v: serde_json::Value = serde_json::from_slice(&s.to_json().unwrap()).unwrap();
        assert_eq!(v["per_bias"]["16.5"]["mae_pct"], 1.0);
        assert_eq!(v["per_bias"]["9"]["r2"], 0.97);
        assert!((v["mean_r2"].as_f64().unwrap() - 0.98).abs() < 1e-15);
        let text = String::from_utf8(s.to_json().unwrap()).unwrap();
        assert!(text.find("16.5").unwrap() < text.find("\"9\"").unwrap());
    }
}
