//! Heater-cryotron domain logic.
//!
//! A phenomenological ground-truth device stands in for measurements: for
//! each gate sweep at fixed channel bias it draws a critical current and a
//! retrapping current from bias-dependent normal laws, switches the channel
//! between superconducting and resistive accordingly, and reports a noisy
//! load voltage. The characterization protocol ramps the gate from zero to
//! its maximum (and optionally back) many times per bias level.
//!
//! Currents are in microamps, voltages in volts.

mod csv_io;
mod model;
mod transient;

pub use csv_io::{
    read_iv_csv, read_switching_csv, read_waveform_csv, write_iv_csv, write_switching_csv,
    write_trace_csv, write_waveform_csv, IV_HEADER, SWITCHING_HEADER, TRACE_HEADER,
    WAVEFORM_HEADER,
};
pub use model::{
    iv_model_predict, iv_model_predict_with_margin, switching_model_predict, Prediction, VMidRule,
    DEFAULT_EXTRAPOLATION_MARGIN,
};
pub use transient::{
    sign_change_indices, transient_simulate, triangular_drive, DesignatedInput, DriveWaveform,
    TransientTrace,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::TrainingSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceState {
    Superconducting,
    Resistive,
}

impl DeviceState {
    /// Model feature encoding: 0 superconducting, 1 resistive.
    pub fn as_feature(self) -> f64 {
        match self {
            DeviceState::Superconducting => 0.0,
            DeviceState::Resistive => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        self.as_feature() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DeviceState::Superconducting),
            1 => Some(DeviceState::Resistive),
            _ => None,
        }
    }
}

/// Normal law whose mean falls and spread grows linearly with bias:
/// `mean = mean0 - mean_slope * i_b`, `sd = sd0 + sd_slope * i_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchingLaw {
    pub mean0: f64,
    pub mean_slope: f64,
    pub sd0: f64,
    pub sd_slope: f64,
}

impl SwitchingLaw {
    pub fn mean(&self, i_b: f64) -> f64 {
        self.mean0 - self.mean_slope * i_b
    }

    pub fn sd(&self, i_b: f64) -> f64 {
        self.sd0 + self.sd_slope * i_b
    }

    /// Probability that a draw is below `i_g`.
    pub fn cdf(&self, i_b: f64, i_g: f64) -> f64 {
        let z = (i_g - self.mean(i_b)) / (self.sd(i_b) * std::f64::consts::SQRT_2);
        0.5 * crate::mixture::erfc(-z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundTruthConfig {
    /// Gate current at which the channel leaves the superconducting state.
    pub critical: SwitchingLaw,
    /// Gate current below which a resistive channel recovers.
    pub retrapping: SwitchingLaw,
    /// Load-voltage noise while superconducting (V).
    pub v_sc_sd: f64,
    /// Load-voltage noise while resistive (V).
    pub v_res_sd: f64,
    pub load_resistance_ohm: f64,
    /// Fraction of the bias current diverted into the load when resistive.
    pub resistive_fraction: f64,
    /// Bias range over which the laws must stay well-formed.
    pub bias_range: [f64; 2],
}

impl Default for GroundTruthConfig {
    fn default() -> Self {
        Self {
            critical: SwitchingLaw {
                mean0: 3.0,
                mean_slope: 0.066,
                sd0: 0.03,
                sd_slope: 0.001,
            },
            retrapping: SwitchingLaw {
                mean0: 1.2,
                mean_slope: 0.0264,
                sd0: 0.012,
                sd_slope: 0.0004,
            },
            v_sc_sd: 0.2e-3,
            v_res_sd: 0.5e-3,
            load_resistance_ohm: 1000.0,
            resistive_fraction: 1.0,
            bias_range: [14.0, 33.0],
        }
    }
}

impl GroundTruthConfig {
    /// Mean resistive-state load voltage at bias `i_b` (V).
    pub fn v_res(&self, i_b: f64) -> f64 {
        self.resistive_fraction * i_b * 1e-6 * self.load_resistance_ohm
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.bias_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(Error::validation("ground_truth.bias_range must be finite and ordered"));
        }
        for (name, law) in [("critical", &self.critical), ("retrapping", &self.retrapping)] {
            let vals = [law.mean0, law.mean_slope, law.sd0, law.sd_slope];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("ground_truth.{name} must be finite")));
            }
            // linear laws: checking the range ends covers the interior
            if law.sd(lo) <= 0.0 || law.sd(hi) <= 0.0 {
                return Err(Error::validation(format!(
                    "ground_truth.{name}: standard deviation must be positive over the bias range"
                )));
            }
        }
        for b in [lo, hi] {
            if self.retrapping.mean(b) >= self.critical.mean(b) {
                return Err(Error::validation(format!(
                    "ground_truth: retrapping mean must stay below critical mean (violated at {b} uA)"
                )));
            }
            if self.v_res(b) <= 0.0 {
                return Err(Error::validation("ground_truth: resistive load voltage must be positive"));
            }
        }
        if !(self.v_sc_sd > 0.0 && self.v_res_sd > 0.0) {
            return Err(Error::validation("ground_truth: voltage noise must be positive"));
        }
        if !(self.load_resistance_ohm > 0.0 && self.resistive_fraction > 0.0) {
            return Err(Error::validation(
                "ground_truth: load_resistance_ohm and resistive_fraction must be positive",
            ));
        }
        Ok(())
    }

    pub fn check_bias(&self, i_b: f64) -> Result<()> {
        let [lo, hi] = self.bias_range;
        if !(i_b >= lo && i_b <= hi) {
            return Err(Error::validation(format!(
                "bias {i_b} uA outside configured range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepProtocol {
    #[serde(default = "default_gate_max")]
    pub gate_max: f64,
    /// Points per ramp segment, both ends included.
    #[serde(default = "default_gate_points")]
    pub gate_points: usize,
    pub bias_levels: Vec<f64>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_ramp_down")]
    pub ramp_down: bool,
}

fn default_gate_max() -> f64 {
    3.0
}
fn default_gate_points() -> usize {
    61
}
fn default_repeats() -> usize {
    1000
}
fn default_ramp_down() -> bool {
    true
}

impl Default for SweepProtocol {
    fn default() -> Self {
        Self {
            gate_max: default_gate_max(),
            gate_points: default_gate_points(),
            bias_levels: vec![14.0, 16.5, 23.5, 28.0, 33.0],
            repeats: default_repeats(),
            ramp_down: default_ramp_down(),
        }
    }
}

impl SweepProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.bias_levels.is_empty() {
            return Err(Error::validation("protocol.bias_levels must not be empty"));
        }
        if self.bias_levels.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::validation("protocol.bias_levels must be finite and non-negative"));
        }
        if !(self.gate_max > 0.0 && self.gate_max.is_finite()) {
            return Err(Error::validation("protocol.gate_max must be positive"));
        }
        if self.gate_points < 2 {
            return Err(Error::validation("protocol.gate_points must be at least 2"));
        }
        if self.repeats == 0 {
            return Err(Error::validation("protocol.repeats must be at least 1"));
        }
        Ok(())
    }

    pub fn gate_grid(&self) -> Vec<f64> {
        gate_grid(self.gate_max, self.gate_points)
    }

    pub fn steps_per_sweep(&self) -> usize {
        self.gate_points * if self.ramp_down { 2 } else { 1 }
    }

    pub fn iv_record_count(&self) -> usize {
        self.bias_levels.len() * self.repeats * self.steps_per_sweep()
    }
}

/// `points` evenly spaced values on `[0, max]`, computed as `i * max / (points - 1)`
/// so every user of a grid sees bit-identical abscissae.
pub fn gate_grid(max: f64, points: usize) -> Vec<f64> {
    let n = (points.max(2) - 1) as f64;
    (0..points).map(|i| i as f64 * max / n).collect()
}

/// One row of the I-V dataset.
///
/// `state` is the device state at the start of the ramp segment the row
/// belongs to (superconducting on the way up, whatever the top of the ramp
/// left on the way down); `v_l` is the load voltage after the switching
/// decision at `i_g`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IvRecord {
    pub i_g: f64,
    pub i_b: f64,
    pub state: DeviceState,
    pub v_l: f64,
}

/// One realized switching current: critical when `state` is
/// superconducting, retrapping when resistive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchRecord {
    pub i_b: f64,
    pub state: DeviceState,
    pub i_switch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub i_g: f64,
    /// Device state after the switching decision at this point.
    pub state: DeviceState,
    pub v_l: f64,
}

/// Outcome of one ground-truth gate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRealization {
    pub i_b: f64,
    pub critical: f64,
    pub retrapping: f64,
    pub up: Vec<SweepPoint>,
    pub down: Vec<SweepPoint>,
}

impl SweepRealization {
    /// First ramp-up gate current at which the channel was resistive.
    pub fn switch_up_at(&self) -> Option<f64> {
        self.up
            .iter()
            .find(|p| p.state == DeviceState::Resistive)
            .map(|p| p.i_g)
    }

    /// First ramp-down gate current at which the channel had recovered.
    pub fn switch_down_at(&self) -> Option<f64> {
        if self.down.first().map(|p| p.state) == Some(DeviceState::Superconducting)
            && self.switch_up_at().is_none()
        {
            return None;
        }
        self.down
            .iter()
            .find(|p| p.state == DeviceState::Superconducting)
            .map(|p| p.i_g)
    }

    pub fn ramp_down_start_state(&self) -> DeviceState {
        self.up
            .last()
            .map_or(DeviceState::Superconducting, |p| p.state)
    }
}

/// Runs one sweep of the characterization protocol at bias `i_b`.
///
/// The critical and retrapping currents are drawn once per sweep; the
/// channel turns resistive once the ramping gate exceeds the critical
/// current and recovers once the falling gate drops below the retrapping
/// current.
pub fn ground_truth_sweep<R: Rng + ?Sized>(
    cfg: &GroundTruthConfig,
    protocol: &SweepProtocol,
    i_b: f64,
    rng: &mut R,
) -> Result<SweepRealization> {
    cfg.validate()?;
    cfg.check_bias(i_b)?;
    let grid = protocol.gate_grid();
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let critical = cfg.critical.mean(i_b) + cfg.critical.sd(i_b) * normal();
    let retrapping = cfg.retrapping.mean(i_b) + cfg.retrapping.sd(i_b) * normal();
    let v_res = cfg.v_res(i_b);
    let mut load_voltage = |state: DeviceState| match state {
        DeviceState::Superconducting => cfg.v_sc_sd * normal(),
        DeviceState::Resistive => v_res + cfg.v_res_sd * normal(),
    };

    let mut state = DeviceState::Superconducting;
    let mut up = Vec::with_capacity(grid.len());
    for &i_g in &grid {
        if state == DeviceState::Superconducting && i_g > critical {
            state = DeviceState::Resistive;
        }
        up.push(SweepPoint {
            i_g,
            state,
            v_l: load_voltage(state),
        });
    }
    let mut down = Vec::new();
    if protocol.ramp_down {
        down.reserve(grid.len());
        for &i_g in grid.iter().rev() {
            if state == DeviceState::Resistive && i_g < retrapping {
                state = DeviceState::Superconducting;
            }
            down.push(SweepPoint {
                i_g,
                state,
                v_l: load_voltage(state),
            });
        }
    }
    Ok(SweepRealization {
        i_b,
        critical,
        retrapping,
        up,
        down,
    })
}

/// Both datasets produced by one protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub iv: Vec<IvRecord>,
    pub switching: Vec<SwitchRecord>,
}

/// RNG for sweep `index` of a run: one ChaCha stream per (bias, repeat)
/// pair, so sweeps are independent of evaluation order.
pub fn sweep_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs the full protocol. Rows are ordered by bias level, then repeat,
/// then ramp position.
pub fn generate_dataset(
    cfg: &GroundTruthConfig,
    protocol: &SweepProtocol,
    seed: u64,
) -> Result<GeneratedData> {
    cfg.validate()?;
    protocol.validate()?;
    let mut iv = Vec::with_capacity(protocol.iv_record_count());
    let mut switching = Vec::with_capacity(2 * protocol.bias_levels.len() * protocol.repeats);
    for (bi, &i_b) in protocol.bias_levels.iter().enumerate() {
        for rep in 0..protocol.repeats {
            let mut rng = sweep_rng(seed, (bi * protocol.repeats + rep) as u64);
            let sweep = ground_truth_sweep(cfg, protocol, i_b, &mut rng)?;
            let down_state = sweep.ramp_down_start_state();
            iv.extend(sweep.up.iter().map(|p| IvRecord {
                i_g: p.i_g,
                i_b,
                state: DeviceState::Superconducting,
                v_l: p.v_l,
            }));
            iv.extend(sweep.down.iter().map(|p| IvRecord {
                i_g: p.i_g,
                i_b,
                state: down_state,
                v_l: p.v_l,
            }));
            switching.push(SwitchRecord {
                i_b,
                state: DeviceState::Superconducting,
                i_switch: sweep.critical,
            });
            if protocol.ramp_down && down_state == DeviceState::Resistive {
                switching.push(SwitchRecord {
                    i_b,
                    state: DeviceState::Resistive,
                    i_switch: sweep.retrapping,
                });
            }
        }
    }
    Ok(GeneratedData { iv, switching })
}

/// Features `(i_g, i_b, state)` and load-voltage targets.
pub fn iv_training_set(records: &[IvRecord]) -> TrainingSet {
    let mut set = TrainingSet::new(3);
    for r in records {
        set.push(&[r.i_g, r.i_b, r.state.as_feature()], r.v_l);
    }
    set
}

/// Features `(i_b, state)` and switching-current targets.
pub fn switching_training_set(records: &[SwitchRecord]) -> TrainingSet {
    let mut set = TrainingSet::new(2);
    for r in records {
        set.push(&[r.i_b, r.state.as_feature()], r.i_switch);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_protocol() -> SweepProtocol {
        SweepProtocol {
            bias_levels: vec![14.0, 23.5],
            repeats: 20,
            ..SweepProtocol::default()
        }
    }

    #[test]
    fn default_law_switches_near_one_point_four_five() {
        let cfg = GroundTruthConfig::default();
        assert!((cfg.critical.mean(23.5) - 1.449).abs() < 1e-12);
        cfg.validate().unwrap();
        // curves shift left with increasing bias
        let means: Vec<f64> = [14.0, 16.5, 23.5, 28.0, 33.0]
            .iter()
            .map(|&b| cfg.critical.mean(b))
            .collect();
        assert!(means.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn invalid_config_rejected() {
        let mut cfg = GroundTruthConfig::default();
        cfg.retrapping.mean0 = 5.0;
        assert!(cfg.validate().is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(ground_truth_sweep(&cfg, &small_protocol(), 20.0, &mut rng).is_err());
        let cfg = GroundTruthConfig::default();
        assert!(ground_truth_sweep(&cfg, &small_protocol(), 50.0, &mut rng).is_err());
    }

    #[test]
    fn deterministic_limit_switches_at_mean() {
        let mut cfg = GroundTruthConfig::default();
        cfg.critical.sd0 = 1e-12;
        cfg.critical.sd_slope = 0.0;
        let protocol = SweepProtocol::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = ground_truth_sweep(&cfg, &protocol, 23.5, &mut rng).unwrap();
        let mu = cfg.critical.mean(23.5);
        assert!((s.critical - mu).abs() < 1e-10);
        let first = s.switch_up_at().unwrap();
        let grid = protocol.gate_grid();
        let expected = *grid.iter().find(|&&g| g > mu).unwrap();
        assert_eq!(first, expected);
    }

    #[test]
    fn hysteresis_in_every_sweep() {
        let cfg = GroundTruthConfig::default();
        let protocol = small_protocol();
        for seed in 0..50u64 {
            let mut rng = sweep_rng(seed, 0);
            let s = ground_truth_sweep(&cfg, &protocol, 23.5, &mut rng).unwrap();
            assert!(s.switch_down_at().unwrap() < s.switch_up_at().unwrap());
        }
    }

    #[test]
    fn record_counts_follow_protocol() {
        let cfg = GroundTruthConfig::default();
        let protocol = small_protocol();
        let data = generate_dataset(&cfg, &protocol, 1).unwrap();
        assert_eq!(data.iv.len(), 2 * 20 * 61 * 2);
        assert_eq!(data.iv.len(), protocol.iv_record_count());
        let crit = data
            .switching
            .iter()
            .filter(|r| r.state == DeviceState::Superconducting)
            .count();
        assert_eq!(crit, 2 * 20);
        let no_down = SweepProtocol {
            ramp_down: false,
            ..protocol
        };
        let data = generate_dataset(&cfg, &no_down, 1).unwrap();
        assert_eq!(data.iv.len(), 2 * 20 * 61);
        assert_eq!(data.switching.len(), 2 * 20);
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = GroundTruthConfig::default();
        let a = generate_dataset(&cfg, &small_protocol(), 77).unwrap();
        let b = generate_dataset(&cfg, &small_protocol(), 77).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&cfg, &small_protocol(), 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empty_bias_list_rejected() {
        let p = SweepProtocol {
            bias_levels: vec![],
            ..SweepProtocol::default()
        };
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("bias_levels"), "{err}");
    }
}
