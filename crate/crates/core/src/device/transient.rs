use serde::{Deserialize, Serialize};

use super::{iv_model_predict, DeviceState, VMidRule};
use crate::error::{Error, Result};
use crate::network::MdnNetwork;
use crate::sampling::{QuantileEvent, QuantileMode, QuantilePolicy, SampleContext};

/// Which drive input's time derivative marks a sweep boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignatedInput {
    #[default]
    Gate,
    Bias,
    Either,
}

/// Time series of the two drive currents (µA) on a time grid (s).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveWaveform {
    pub t: Vec<f64>,
    pub i_g: Vec<f64>,
    pub i_b: Vec<f64>,
}

impl DriveWaveform {
    pub fn new(t: Vec<f64>, i_g: Vec<f64>, i_b: Vec<f64>) -> Result<Self> {
        let w = Self { t, i_g, i_b };
        w.validate()?;
        Ok(w)
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.t.is_empty() {
            return Err(Error::validation("drive waveform is empty"));
        }
        if self.i_g.len() != self.t.len() || self.i_b.len() != self.t.len() {
            return Err(Error::validation("drive series must have equal length"));
        }
        if self.t.iter().chain(&self.i_g).chain(&self.i_b).any(|v| !v.is_finite()) {
            return Err(Error::validation("drive series must be finite"));
        }
        if self.t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::validation("drive time grid must be strictly increasing"));
        }
        Ok(())
    }

    fn boundaries(&self, input: DesignatedInput) -> Vec<usize> {
        match input {
            DesignatedInput::Gate => sign_change_indices(&self.i_g),
            DesignatedInput::Bias => sign_change_indices(&self.i_b),
            DesignatedInput::Either => {
                let mut idx = sign_change_indices(&self.i_g);
                idx.extend(sign_change_indices(&self.i_b));
                idx.sort_unstable();
                idx.dedup();
                idx
            }
        }
    }
}

/// Triangular gate drive at constant bias: `periods` ramps from 0 up to
/// `i_g_max` and back, `points_per_ramp` samples per ramp, spaced `dt`.
pub fn triangular_drive(
    i_g_max: f64,
    i_b: f64,
    periods: usize,
    points_per_ramp: usize,
    dt: f64,
) -> Result<DriveWaveform> {
    if periods == 0 || points_per_ramp < 2 || !(dt > 0.0) {
        return Err(Error::validation(
            "triangular drive needs periods >= 1, points_per_ramp >= 2 and dt > 0",
        ));
    }
    let step = i_g_max / (points_per_ramp - 1) as f64;
    let mut i_g = vec![0.0];
    for _ in 0..periods {
        i_g.extend((1..points_per_ramp).map(|i| i as f64 * step));
        i_g.extend((0..points_per_ramp - 1).rev().map(|i| i as f64 * step));
    }
    let n = i_g.len();
    DriveWaveform::new(
        (0..n).map(|i| i as f64 * dt).collect(),
        i_g,
        vec![i_b; n],
    )
}

/// Indices `k` at which the sign of `x[k] - x[k-1]` differs from the last
/// nonzero difference before it. Flat stretches do not count as a change.
pub fn sign_change_indices(x: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut last = 0.0f64;
    for k in 1..x.len() {
        let d = x[k] - x[k - 1];
        if d == 0.0 {
            continue;
        }
        if last != 0.0 && d.signum() != last.signum() {
            out.push(k);
        }
        last = d;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransientTrace {
    pub t: Vec<f64>,
    pub i_g: Vec<f64>,
    pub i_b: Vec<f64>,
    /// State after the decision at each step.
    pub state: Vec<DeviceState>,
    pub v_l: Vec<f64>,
    /// Quantile used at each step.
    pub q: Vec<f64>,
    /// Steps at which `q` was regenerated.
    pub q_events: Vec<usize>,
    /// Extrapolation warnings, one per affected step.
    pub warnings: Vec<(usize, String)>,
}

impl TransientTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Steps whose state differs from the previous step's.
    pub fn transitions(&self) -> Vec<usize> {
        (1..self.state.len())
            .filter(|&k| self.state[k] != self.state[k - 1])
            .collect()
    }
}

/// Steps the device through `drive`.
///
/// At every step the I-V model is evaluated with the state carried over
/// from the previous step, a load voltage is drawn at the current quantile,
/// and the state is updated by comparing that voltage with `v_mid`. The
/// quantile is regenerated when the designated input's derivative changes
/// sign (held mode) or at every step (fresh mode). The device starts in
/// `initial_state`.
pub fn transient_simulate(
    net: &MdnNetwork,
    drive: &DriveWaveform,
    policy: &QuantilePolicy,
    v_mid_rule: &VMidRule,
    designated: DesignatedInput,
    initial_state: DeviceState,
    seed: u64,
) -> Result<TransientTrace> {
    drive.validate()?;
    v_mid_rule.validate()?;
    let mut ctx = SampleContext::new(policy.clone(), seed)?;
    let boundaries = drive.boundaries(designated);
    let n = drive.len();
    let mut trace = TransientTrace {
        t: drive.t.clone(),
        i_g: drive.i_g.clone(),
        i_b: drive.i_b.clone(),
        state: Vec::with_capacity(n),
        v_l: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        q_events: Vec::new(),
        warnings: Vec::new(),
    };
    let mut state = initial_state;
    let mut next_boundary = boundaries.iter().peekable();
    for k in 0..n {
        if next_boundary.peek() == Some(&&k) {
            next_boundary.next();
            if ctx.next_quantile(QuantileEvent::SweepBoundary) {
                trace.q_events.push(k);
            }
        } else if k > 0 && policy.mode == QuantileMode::FreshPerCall {
            // the draw happened when step k-1 advanced the context
            trace.q_events.push(k);
        }
        let (i_g, i_b) = (drive.i_g[k], drive.i_b[k]);
        let pred = iv_model_predict(net, i_g, i_b, state)?;
        if let Some(w) = pred.warning {
            trace.warnings.push((k, w));
        }
        trace.q.push(ctx.current_q());
        let v = ctx.sample(&pred.params)?;
        state = v_mid_rule.classify(v, i_b, state);
        trace.v_l.push(v);
        trace.state.push(state);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkShape, Normalization};

    fn flat_net() -> MdnNetwork {
        let norm = Normalization {
            min: vec![0.0, 14.0, 0.0],
            max: vec![3.0, 33.0, 1.0],
            target_offset: 0.0,
            target_scale: 1e-3,
        };
        MdnNetwork::zeros(NetworkShape::new(3, vec![4], 2), norm).unwrap()
    }

    #[test]
    fn sign_changes_counted_once_per_turn() {
        assert_eq!(sign_change_indices(&[0.0, 1.0, 2.0, 1.0, 0.0, 1.0]), vec![3, 5]);
        // plateaus at the turning point do not add events
        assert_eq!(sign_change_indices(&[0.0, 1.0, 1.0, 1.0, 0.0]), vec![4]);
        assert!(sign_change_indices(&[2.0, 2.0, 2.0]).is_empty());
    }

    #[test]
    fn triangular_drive_has_two_events_per_period() {
        let drive = triangular_drive(3.0, 23.5, 4, 31, 1e-9).unwrap();
        let trace = transient_simulate(
            &flat_net(),
            &drive,
            &QuantilePolicy::default(),
            &VMidRule::constant(0.01).unwrap(),
            DesignatedInput::Gate,
            DeviceState::Superconducting,
            1,
        )
        .unwrap();
        // four peaks and three interior troughs; the last trough needs a following rise
        assert_eq!(trace.q_events.len(), 2 * 4 - 1);
        let mut extended = drive.clone();
        extended.t.push(extended.t.last().unwrap() + 1e-9);
        extended.i_g.push(0.1);
        extended.i_b.push(23.5);
        let trace = transient_simulate(
            &flat_net(),
            &extended,
            &QuantilePolicy::default(),
            &VMidRule::constant(0.01).unwrap(),
            DesignatedInput::Gate,
            DeviceState::Superconducting,
            1,
        )
        .unwrap();
        assert_eq!(trace.q_events.len(), 2 * 4);
    }

    #[test]
    fn fixed_median_with_constant_drive_is_constant() {
        let n = 50;
        let drive = DriveWaveform::new(
            (0..n).map(|i| i as f64).collect(),
            vec![1.0; n],
            vec![20.0; n],
        )
        .unwrap();
        let trace = transient_simulate(
            &flat_net(),
            &drive,
            &QuantilePolicy::fixed(0.5),
            &VMidRule::constant(0.01).unwrap(),
            DesignatedInput::Gate,
            DeviceState::Superconducting,
            9,
        )
        .unwrap();
        assert!(trace.v_l.iter().all(|&v| v == trace.v_l[0]));
        assert!(trace.q_events.is_empty());
    }

    #[test]
    fn fresh_mode_regenerates_every_step() {
        let drive = triangular_drive(1.0, 20.0, 1, 5, 1.0).unwrap();
        let trace = transient_simulate(
            &flat_net(),
            &drive,
            &QuantilePolicy::fresh(0.05, 0.95),
            &VMidRule::constant(0.01).unwrap(),
            DesignatedInput::Gate,
            DeviceState::Superconducting,
            2,
        )
        .unwrap();
        assert_eq!(trace.q_events, (1..drive.len()).collect::<Vec<_>>());
    }

    #[test]
    fn state_follows_threshold() {
        // zero net predicts a narrow distribution around 0 V
        let drive = triangular_drive(1.0, 20.0, 1, 5, 1.0).unwrap();
        let trace = transient_simulate(
            &flat_net(),
            &drive,
            &QuantilePolicy::fixed(0.5),
            &VMidRule::constant(-1.0).unwrap(),
            DesignatedInput::Gate,
            DeviceState::Superconducting,
            0,
        )
        .unwrap();
        assert!(trace.state.iter().all(|&s| s == DeviceState::Resistive));
        assert_eq!(trace.transitions(), Vec::<usize>::new());
    }

    #[test]
    fn bad_drive_rejected() {
        assert!(DriveWaveform::new(vec![0.0, 0.0], vec![0.0; 2], vec![0.0; 2]).is_err());
        assert!(DriveWaveform::new(vec![0.0], vec![f64::NAN], vec![0.0]).is_err());
    }
}
