//! Drawing values from a [`MixtureParams`].
//!
//! Two samplers are provided. [`standard_sample`] picks a component by its
//! mixing weight and draws from that Gaussian, so consecutive calls jump
//! around the distribution. [`inverse_cdf`] maps a quantile `q` through the
//! inverse of the mixture CDF; holding `q` fixed over a sweep makes the
//! output a smooth function of the inputs while different sweeps still see
//! different quantiles. [`SampleContext`] owns `q` and decides when it is
//! redrawn.

mod brent;

pub use brent::{brent_root, MAX_ITERATIONS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{cdf, MixtureParams};

/// Initial bracket half-width in component standard deviations.
pub const BRACKET_SIGMAS: f64 = 10.0;
/// Number of times the bracket half-width is doubled before giving up.
pub const BRACKET_EXPANSIONS: usize = 10;
/// Brent tolerance on the abscissa.
pub const X_TOLERANCE: f64 = 1e-13;
/// Accepted `|cdf(x) - q|` at the returned root.
pub const Q_TOLERANCE: f64 = 1e-10;

/// Draws from the mixture by component selection: a uniform `q` picks the
/// first component whose cumulative weight reaches it, then a normal
/// deviate is drawn from that component.
pub fn standard_sample<R: Rng + ?Sized>(params: &MixtureParams, rng: &mut R) -> f64 {
    let q: f64 = rng.random();
    let mut sum = 0.0;
    let mut chosen = params.k() - 1;
    for (k, a) in params.alphas().iter().enumerate() {
        sum += a;
        if sum >= q {
            chosen = k;
            break;
        }
    }
    // sigma > 0 is a MixtureParams invariant
    let normal = Normal::new(params.means()[chosen], params.sigmas()[chosen])
        .expect("valid component");
    normal.sample(rng)
}

/// The `q`-quantile of the mixture, found with Brent's method.
///
/// The search starts on `[min(mu - 10 sigma), max(mu + 10 sigma)]` and the
/// half-width is doubled up to ten times if that does not bracket `q`.
/// The x tolerance is [`X_TOLERANCE`] in units of the narrowest component
/// (capped at one), so mixtures in physical units keep the same accuracy in
/// `q`.
pub fn inverse_cdf(params: &MixtureParams, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::validation(format!("quantile must lie in (0, 1), got {q}")));
    }
    let (lo0, hi0) = params.support_bracket(BRACKET_SIGMAS);
    let centre = 0.5 * (lo0 + hi0);
    let mut half = 0.5 * (hi0 - lo0);
    let f = |x: f64| cdf(params, x) - q;
    let mut bracket = None;
    for _ in 0..=BRACKET_EXPANSIONS {
        let (lo, hi) = (centre - half, centre + half);
        if f(lo) <= 0.0 && f(hi) >= 0.0 {
            bracket = Some((lo, hi));
            break;
        }
        half *= 2.0;
    }
    let (lo, hi) = bracket.ok_or_else(|| {
        Error::numerical(format!(
            "quantile {q} not bracketed after {BRACKET_EXPANSIONS} expansions"
        ))
    })?;
    let narrowest = params.sigmas().iter().cloned().fold(1.0, f64::min);
    let x = brent_root(f, lo, hi, X_TOLERANCE * narrowest)?;
    let resid = f(x).abs();
    if resid > Q_TOLERANCE {
        return Err(Error::numerical(format!(
            "inverse cdf residual {resid:e} at q = {q} exceeds {Q_TOLERANCE:e}"
        )));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    /// A new quantile for every sample.
    FreshPerCall,
    /// One quantile per sweep, redrawn at sweep boundaries.
    HeldPerSweep,
    /// A single configured quantile.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantilePolicy {
    pub mode: QuantileMode,
    pub clip_low: f64,
    pub clip_high: f64,
    pub fixed_q: Option<f64>,
}

impl Default for QuantilePolicy {
    fn default() -> Self {
        Self {
            mode: QuantileMode::HeldPerSweep,
            clip_low: 0.05,
            clip_high: 0.95,
            fixed_q: None,
        }
    }
}

impl QuantilePolicy {
    pub fn fixed(q: f64) -> Self {
        Self {
            mode: QuantileMode::Fixed,
            clip_low: 0.0,
            clip_high: 1.0,
            fixed_q: Some(q),
        }
    }

    pub fn held(clip_low: f64, clip_high: f64) -> Self {
        Self {
            mode: QuantileMode::HeldPerSweep,
            clip_low,
            clip_high,
            fixed_q: None,
        }
    }

    pub fn fresh(clip_low: f64, clip_high: f64) -> Self {
        Self {
            mode: QuantileMode::FreshPerCall,
            clip_low,
            clip_high,
            fixed_q: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.clip_low && self.clip_low < self.clip_high && self.clip_high <= 1.0) {
            return Err(Error::validation(format!(
                "clip bounds must satisfy 0 <= clip_low < clip_high <= 1, got ({}, {})",
                self.clip_low, self.clip_high
            )));
        }
        match (self.mode, self.fixed_q) {
            (QuantileMode::Fixed, None) => {
                Err(Error::validation("fixed quantile mode requires fixed_q"))
            }
            (QuantileMode::Fixed, Some(q)) if !(q > 0.0 && q < 1.0) => Err(Error::validation(
                format!("fixed_q must lie in (0, 1), got {q}"),
            )),
            (QuantileMode::Fixed, Some(q)) if q < self.clip_low || q > self.clip_high => {
                Err(Error::validation(format!(
                    "fixed_q {q} lies outside the clip bounds"
                )))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuantileEvent {
    Step,
    SweepBoundary,
}

/// Quantile state for one simulation. Not shared between threads.
#[derive(Debug, Clone)]
pub struct SampleContext {
    policy: QuantilePolicy,
    current_q: f64,
    rng: ChaCha8Rng,
}

impl SampleContext {
    pub fn new(policy: QuantilePolicy, seed: u64) -> Result<Self> {
        policy.validate()?;
        let mut ctx = Self {
            current_q: policy.fixed_q.unwrap_or(0.5),
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if ctx.policy.mode != QuantileMode::Fixed {
            ctx.current_q = ctx.draw();
        }
        Ok(ctx)
    }

    pub fn policy(&self) -> &QuantilePolicy {
        &self.policy
    }

    pub fn current_q(&self) -> f64 {
        self.current_q
    }

    /// Uniform on `[clip_low, clip_high)`, never exactly 0 or 1.
    fn draw(&mut self) -> f64 {
        let (lo, hi) = (self.policy.clip_low, self.policy.clip_high);
        loop {
            let u: f64 = self.rng.random();
            let q = lo + (hi - lo) * u;
            if q > 0.0 && q < 1.0 {
                return q;
            }
        }
    }

    /// Advances the quantile according to the policy. Returns whether `q`
    /// was redrawn.
    pub fn next_quantile(&mut self, event: QuantileEvent) -> bool {
        let redraw = match (self.policy.mode, event) {
            (QuantileMode::FreshPerCall, _) => true,
            (QuantileMode::HeldPerSweep, QuantileEvent::SweepBoundary) => true,
            _ => false,
        };
        if redraw {
            self.current_q = self.draw();
        }
        redraw
    }

    /// The current quantile of `params`; then advances one step.
    pub fn sample(&mut self, params: &MixtureParams) -> Result<f64> {
        let x = inverse_cdf(params, self.current_q)?;
        self.next_quantile(QuantileEvent::Step);
        Ok(x)
    }
}

/// Free-function form of [`SampleContext::sample`].
pub fn sample_with_policy(params: &MixtureParams, ctx: &mut SampleContext) -> Result<f64> {
    ctx.sample(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_cdf_standard_normal() {
        let p = MixtureParams::single(0.0, 1.0).unwrap();
        assert!(inverse_cdf(&p, 0.5).unwrap().abs() < 1e-10);
        // 1.9599639845400542355 from a 40-digit erfinv
        assert!((inverse_cdf(&p, 0.975).unwrap() - 1.959964).abs() < 1e-5);
        assert!((inverse_cdf(&p, 0.975).unwrap() - 1.9599639845400542).abs() < 1e-12);
        assert!(inverse_cdf(&p, 0.0).is_err());
        assert!(inverse_cdf(&p, 1.0).is_err());
    }

    #[test]
    fn inverse_cdf_extreme_quantile_expands_bracket() {
        // q far below Phi(-10) forces the bracket to grow
        let p = MixtureParams::single(0.0, 1.0).unwrap();
        let x = inverse_cdf(&p, 1e-30).unwrap();
        assert!(x < -10.0);
        assert!((cdf(&p, x) - 1e-30).abs() <= Q_TOLERANCE);
    }

    #[test]
    fn standard_sample_degenerate_weights_use_first_component() {
        let p = MixtureParams::normalized(vec![0.0, 100.0], vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert!(standard_sample(&p, &mut rng) < 50.0);
        }
    }

    #[test]
    fn standard_sample_reproducible_and_unbiased() {
        let p = MixtureParams::single(2.0, 0.5).unwrap();
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..100_000).map(|_| standard_sample(&p, &mut a)).collect();
        let ys: Vec<f64> = (0..100_000).map(|_| standard_sample(&p, &mut b)).collect();
        assert_eq!(xs, ys);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 4.0 * 0.5 / (1e5f64).sqrt());
    }

    #[test]
    fn held_quantile_survives_steps() {
        let mut ctx = SampleContext::new(QuantilePolicy::held(0.05, 0.95), 3).unwrap();
        let q0 = ctx.current_q();
        for _ in 0..100 {
            assert!(!ctx.next_quantile(QuantileEvent::Step));
        }
        assert_eq!(ctx.current_q(), q0);
        assert!(ctx.next_quantile(QuantileEvent::SweepBoundary));
        assert_ne!(ctx.current_q(), q0);
    }

    #[test]
    fn fixed_quantile_never_moves() {
        let mut ctx = SampleContext::new(QuantilePolicy::fixed(0.5), 3).unwrap();
        let p = MixtureParams::single(1.25, 0.3).unwrap();
        for i in 0..50 {
            let event = if i % 7 == 0 {
                QuantileEvent::SweepBoundary
            } else {
                QuantileEvent::Step
            };
            ctx.next_quantile(event);
            assert_eq!(ctx.current_q(), 0.5);
            assert!((sample_with_policy(&p, &mut ctx).unwrap() - 1.25).abs() < 1e-10);
        }
    }

    #[test]
    fn policy_validation() {
        assert!(QuantilePolicy::held(0.6, 0.4).validate().is_err());
        assert!(QuantilePolicy::held(-0.1, 0.4).validate().is_err());
        let mut p = QuantilePolicy::fixed(0.5);
        p.fixed_q = None;
        assert!(p.validate().is_err());
        let mut p = QuantilePolicy::fixed(0.02);
        p.clip_low = 0.05;
        assert!(p.validate().is_err());
    }

    #[test]
    fn quantiles_are_ordered() {
        let p = MixtureParams::new(vec![-1.0, 2.0], vec![0.4, 0.7], vec![0.3, 0.7]).unwrap();
        let lo = inverse_cdf(&p, 0.05).unwrap();
        let mid = inverse_cdf(&p, 0.5).unwrap();
        let hi = inverse_cdf(&p, 0.95).unwrap();
        assert!(lo <= mid && mid <= hi);
    }
}
