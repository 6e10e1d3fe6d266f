use serde::{Deserialize, Serialize};

use super::{DeviceState, IvRecord};
use crate::error::{Error, Result};
use crate::mixture::MixtureParams;
use crate::network::MdnNetwork;

/// Inputs may leave the training range by this fraction of the range
/// before a prediction carries a warning.
pub const DEFAULT_EXTRAPOLATION_MARGIN: f64 = 0.1;

/// A predicted distribution in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub params: MixtureParams,
    /// Set when an input lies outside the training range by more than the
    /// margin. The prediction is still returned.
    pub warning: Option<String>,
}

fn predict_checked(net: &MdnNetwork, raw: &[f64], margin: f64) -> Result<Prediction> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation(format!("non-finite model input {raw:?}")));
    }
    let excursion = net.normalization().extrapolation(raw);
    let warning = (excursion > margin).then(|| {
        format!(
            "input {raw:?} lies {:.1}% of the training range outside it",
            100.0 * excursion
        )
    });
    Ok(Prediction {
        params: net.predict(raw)?,
        warning,
    })
}

fn require_dim(net: &MdnNetwork, dim: usize, what: &str) -> Result<()> {
    if net.input_dim() != dim {
        return Err(Error::validation(format!(
            "{what} model needs input_dim {dim}, network has {}",
            net.input_dim()
        )));
    }
    Ok(())
}

/// Load-voltage distribution (V) at gate `i_g`, bias `i_b` (µA) and `state`.
pub fn iv_model_predict(
    net: &MdnNetwork,
    i_g: f64,
    i_b: f64,
    state: DeviceState,
) -> Result<Prediction> {
    iv_model_predict_with_margin(net, i_g, i_b, state, DEFAULT_EXTRAPOLATION_MARGIN)
}

pub fn iv_model_predict_with_margin(
    net: &MdnNetwork,
    i_g: f64,
    i_b: f64,
    state: DeviceState,
    margin: f64,
) -> Result<Prediction> {
    require_dim(net, 3, "I-V")?;
    predict_checked(net, &[i_g, i_b, state.as_feature()], margin)
}

/// Switching-current distribution (µA): critical current when `state` is
/// superconducting, retrapping current when resistive.
pub fn switching_model_predict(
    net: &MdnNetwork,
    i_b: f64,
    state: DeviceState,
) -> Result<Prediction> {
    require_dim(net, 2, "switching")?;
    predict_checked(net, &[i_b, state.as_feature()], DEFAULT_EXTRAPOLATION_MARGIN)
}

/// Threshold voltage separating the two states, per bias level, linearly
/// interpolated between levels and held constant beyond the end levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VMidRule {
    pub bias_levels: Vec<f64>,
    pub v_mid: Vec<f64>,
}

impl VMidRule {
    pub fn new(bias_levels: Vec<f64>, v_mid: Vec<f64>) -> Result<Self> {
        let rule = Self { bias_levels, v_mid };
        rule.validate()?;
        Ok(rule)
    }

    pub fn constant(v_mid: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![v_mid])
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias_levels.is_empty() || self.bias_levels.len() != self.v_mid.len() {
            return Err(Error::validation(
                "v_mid rule needs one threshold per bias level and at least one level",
            ));
        }
        if self.bias_levels.iter().chain(&self.v_mid).any(|v| !v.is_finite()) {
            return Err(Error::validation("v_mid rule values must be finite"));
        }
        if self.bias_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("v_mid rule bias levels must be strictly increasing"));
        }
        Ok(())
    }

    /// Per bias level, the midpoint between the median superconducting and
    /// median resistive load voltage. Voltages are split into the two
    /// states by iterating the midpoint-of-medians threshold to a fixed
    /// point, starting from the middle of the voltage range.
    pub fn from_records(records: &[IvRecord]) -> Result<Self> {
        let mut by_bias: Vec<(f64, Vec<f64>)> = Vec::new();
        for r in records {
            match by_bias.iter_mut().find(|(b, _)| *b == r.i_b) {
                Some((_, v)) => v.push(r.v_l),
                None => by_bias.push((r.i_b, vec![r.v_l])),
            }
        }
        if by_bias.is_empty() {
            return Err(Error::validation("cannot fit v_mid to an empty dataset"));
        }
        by_bias.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut levels = Vec::with_capacity(by_bias.len());
        let mut mids = Vec::with_capacity(by_bias.len());
        for (i_b, mut v) in by_bias {
            v.sort_by(f64::total_cmp);
            levels.push(i_b);
            mids.push(split_midpoint(&v).ok_or_else(|| {
                Error::validation(format!(
                    "load voltages at bias {i_b} uA do not separate into two states"
                ))
            })?);
        }
        Self::new(levels, mids)
    }

    pub fn at(&self, i_b: f64) -> f64 {
        let (b, v) = (&self.bias_levels, &self.v_mid);
        let n = b.len();
        if i_b <= b[0] {
            return v[0];
        }
        if i_b >= b[n - 1] {
            return v[n - 1];
        }
        let hi = b.partition_point(|&x| x <= i_b);
        let t = (i_b - b[hi - 1]) / (b[hi] - b[hi - 1]);
        v[hi - 1] + t * (v[hi] - v[hi - 1])
    }

    /// State implied by a load voltage; `previous` when exactly at the threshold.
    pub fn classify(&self, v_l: f64, i_b: f64, previous: DeviceState) -> DeviceState {
        let mid = self.at(i_b);
        if v_l > mid {
            DeviceState::Resistive
        } else if v_l < mid {
            DeviceState::Superconducting
        } else {
            previous
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn split_midpoint(sorted: &[f64]) -> Option<f64> {
    let (lo, hi) = (sorted[0], *sorted.last()?);
    if !(hi > lo) {
        return None;
    }
    let mut threshold = 0.5 * (lo + hi);
    for _ in 0..100 {
        let cut = sorted.partition_point(|&x| x <= threshold);
        if cut == 0 || cut == sorted.len() {
            return None;
        }
        let next = 0.5 * (median(&sorted[..cut]) + median(&sorted[cut..]));
        if next == threshold {
            break;
        }
        threshold = next;
    }
    Some(threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::{generate_dataset, GroundTruthConfig, SweepProtocol};
    use crate::network::{NetworkShape, Normalization};

    #[test]
    fn interpolation_and_clamping() {
        let rule = VMidRule::new(vec![10.0, 20.0], vec![5e-3, 10e-3]).unwrap();
        assert_eq!(rule.at(5.0), 5e-3);
        assert_eq!(rule.at(25.0), 10e-3);
        assert!((rule.at(15.0) - 7.5e-3).abs() < 1e-15);
        assert_eq!(rule.at(20.0), 10e-3);
        assert!(VMidRule::new(vec![2.0, 1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn fitted_thresholds_sit_between_levels() {
        let cfg = GroundTruthConfig::default();
        let protocol = SweepProtocol {
            repeats: 30,
            ..SweepProtocol::default()
        };
        let data = generate_dataset(&cfg, &protocol, 3).unwrap();
        let rule = VMidRule::from_records(&data.iv).unwrap();
        assert_eq!(rule.bias_levels, protocol.bias_levels);
        for (&b, &m) in rule.bias_levels.iter().zip(&rule.v_mid) {
            let expected = 0.5 * cfg.v_res(b);
            // medians of the two clusters are within a few noise widths of 0 and v_res
            assert!((m - expected).abs() < 0.2e-3, "bias {b}: {m} vs {expected}");
        }
    }

    #[test]
    fn single_state_data_rejected() {
        let recs: Vec<IvRecord> = (0..10)
            .map(|i| IvRecord {
                i_g: 0.0,
                i_b: 20.0,
                state: DeviceState::Superconducting,
                v_l: 1e-6 * i as f64,
            })
            .collect();
        // ten evenly spread values still split, a constant cannot
        assert!(VMidRule::from_records(&recs).is_ok());
        let flat: Vec<IvRecord> = recs.iter().map(|r| IvRecord { v_l: 0.0, ..*r }).collect();
        assert!(VMidRule::from_records(&flat).is_err());
    }

    #[test]
    fn predictions_flag_extrapolation() {
        let norm = Normalization {
            min: vec![0.0, 14.0, 0.0],
            max: vec![3.0, 33.0, 1.0],
            target_offset: 0.0,
            target_scale: 1e-3,
        };
        let net = MdnNetwork::zeros(NetworkShape::new(3, vec![4], 2), norm).unwrap();
        let inside = iv_model_predict(&net, 1.5, 20.0, DeviceState::Superconducting).unwrap();
        assert!(inside.warning.is_none());
        let outside = iv_model_predict(&net, 6.0, 20.0, DeviceState::Superconducting).unwrap();
        assert!(outside.warning.is_some());
        assert!(switching_model_predict(&net, 20.0, DeviceState::Resistive).is_err());
        assert!(iv_model_predict(&net, f64::NAN, 20.0, DeviceState::Resistive).is_err());
    }
}
