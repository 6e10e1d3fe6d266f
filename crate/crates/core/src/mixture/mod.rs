//! Gaussian mixture distributions over a scalar quantity.
//!
//! Density, cumulative distribution, and the Gaussian negative
//! log-likelihood (GNLL) with its analytic gradients. All functions are pure.

pub(crate) mod erf;

pub use erf::{erf, erfc};

use crate::error::{Error, Result};

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const ALPHA_SUM_TOL: f64 = 1e-12;

/// Parameters `(mu_k, sigma_k, alpha_k)` of a `K`-component Gaussian mixture.
///
/// Mixing weights may be exactly zero (a softmax can underflow) but must sum
/// to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureParams {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    alphas: Vec<f64>,
}

impl MixtureParams {
    pub fn new(means: Vec<f64>, sigmas: Vec<f64>, alphas: Vec<f64>) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::validation("mixture needs at least one component"));
        }
        if sigmas.len() != k || alphas.len() != k {
            return Err(Error::validation(format!(
                "component lists differ in length: {} means, {} sigmas, {} alphas",
                k,
                sigmas.len(),
                alphas.len()
            )));
        }
        if let Some(m) = means.iter().find(|m| !m.is_finite()) {
            return Err(Error::validation(format!("non-finite mean {m}")));
        }
        if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::validation(format!("sigma must be positive, got {s}")));
        }
        if let Some(a) = alphas.iter().find(|a| !(**a >= 0.0 && **a <= 1.0)) {
            return Err(Error::validation(format!("alpha out of [0, 1]: {a}")));
        }
        let total: f64 = alphas.iter().sum();
        if (total - 1.0).abs() > ALPHA_SUM_TOL {
            return Err(Error::validation(format!(
                "alphas sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            means,
            sigmas,
            alphas,
        })
    }

    /// Builds a mixture from unnormalized non-negative weights.
    pub fn normalized(means: Vec<f64>, sigmas: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::validation(format!(
                "mixing weights must have a positive finite sum, got {total}"
            )));
        }
        let alphas = weights.iter().map(|w| w / total).collect();
        Self::new(means, sigmas, alphas)
    }

    pub fn single(mean: f64, sigma: f64) -> Result<Self> {
        Self::new(vec![mean], vec![sigma], vec![1.0])
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.means
            .iter()
            .zip(&self.sigmas)
            .zip(&self.alphas)
            .map(|((&m, &s), &a)| (m, s, a))
    }

    /// Mean of the mixture, `sum alpha_k mu_k`.
    pub fn mean(&self) -> f64 {
        self.components().map(|(m, _, a)| a * m).sum()
    }

    /// Standard deviation of the mixture (law of total variance).
    pub fn std_dev(&self) -> f64 {
        let mean = self.mean();
        let second: f64 = self
            .components()
            .map(|(m, s, a)| a * (s * s + (m - mean) * (m - mean)))
            .sum();
        second.max(0.0).sqrt()
    }

    /// Applies `x -> offset + scale * x` to the random variable.
    pub fn affine(&self, offset: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::validation(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            means: self.means.iter().map(|m| offset + scale * m).collect(),
            sigmas: self.sigmas.iter().map(|s| scale * s).collect(),
            alphas: self.alphas.clone(),
        })
    }

    /// `[min_k (mu_k - w sigma_k), max_k (mu_k + w sigma_k)]`.
    pub fn support_bracket(&self, width: f64) -> (f64, f64) {
        self.components().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), (m, s, _)| (lo.min(m - width * s), hi.max(m + width * s)),
        )
    }
}

/// Log density of one Gaussian component.
#[inline]
fn component_log_density(mean: f64, sigma: f64, x: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
}

/// Mixture density at `x`.
pub fn pdf(params: &MixtureParams, x: f64) -> f64 {
    params
        .components()
        .map(|(m, s, a)| {
            let z = (x - m) / s;
            a * (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
        })
        .sum()
}

/// Log of the mixture density via log-sum-exp over components.
pub fn log_pdf(params: &MixtureParams, x: f64) -> f64 {
    let mut terms = [0.0f64; 16];
    let mut heap = Vec::new();
    let buf: &mut [f64] = if params.k() <= terms.len() {
        &mut terms[..params.k()]
    } else {
        heap.resize(params.k(), 0.0);
        &mut heap
    };
    for (slot, (m, s, a)) in buf.iter_mut().zip(params.components()) {
        *slot = a.ln() + component_log_density(m, s, x);
    }
    log_sum_exp(buf)
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + sum.ln()
}

/// Mixture cumulative distribution, `sum alpha_k/2 [1 + erf((x - mu_k)/(sigma_k sqrt 2))]`.
///
/// Each component is evaluated through `erfc` so the lower tail keeps
/// relative precision; the result is clamped into `[0, 1]`.
pub fn cdf(params: &MixtureParams, x: f64) -> f64 {
    let total: f64 = params
        .components()
        .map(|(m, s, a)| 0.5 * a * erfc(-(x - m) / (s * std::f64::consts::SQRT_2)))
        .sum();
    total.clamp(0.0, 1.0)
}

/// Negative log-likelihood of a single observation.
pub fn gnll_point(params: &MixtureParams, x: f64) -> f64 {
    -log_pdf(params, x)
}

/// Mean GNLL over paired parameters and observations.
pub fn gnll_batch(params: &[MixtureParams], targets: &[f64]) -> Result<f64> {
    if params.is_empty() {
        return Err(Error::validation("empty batch"));
    }
    if params.len() != targets.len() {
        return Err(Error::validation(format!(
            "batch has {} parameter sets but {} targets",
            params.len(),
            targets.len()
        )));
    }
    let sum: f64 = params
        .iter()
        .zip(targets)
        .map(|(p, &t)| gnll_point(p, t))
        .sum();
    Ok(sum / params.len() as f64)
}

/// Partial derivatives of [`gnll_point`] with respect to each component's
/// mean, standard deviation and (already normalized) mixing weight.
#[derive(Debug, Clone, PartialEq)]
pub struct GnllGradients {
    pub d_means: Vec<f64>,
    pub d_sigmas: Vec<f64>,
    pub d_alphas: Vec<f64>,
    /// Posterior component responsibilities `gamma_k = alpha_k N_k / p`.
    pub responsibilities: Vec<f64>,
    pub loss: f64,
}

pub fn gnll_gradients(params: &MixtureParams, x: f64) -> GnllGradients {
    let k = params.k();
    let log_dens: Vec<f64> = params
        .components()
        .map(|(m, s, _)| component_log_density(m, s, x))
        .collect();
    let weighted: Vec<f64> = log_dens
        .iter()
        .zip(params.alphas())
        .map(|(ld, a)| a.ln() + ld)
        .collect();
    let log_p = log_sum_exp(&weighted);

    let mut out = GnllGradients {
        d_means: Vec::with_capacity(k),
        d_sigmas: Vec::with_capacity(k),
        d_alphas: Vec::with_capacity(k),
        responsibilities: Vec::with_capacity(k),
        loss: -log_p,
    };
    for (((m, s, _), ld), w) in params.components().zip(&log_dens).zip(&weighted) {
        let gamma = (w - log_p).exp();
        let r = (x - m) / s;
        out.d_means.push(-gamma * r / s);
        out.d_sigmas.push(gamma * (1.0 - r * r) / s);
        // -N_k / p, computed in the log domain so a zero weight stays finite
        out.d_alphas.push(-(ld - log_p).exp());
        out.responsibilities.push(gamma);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(m: [f64; 2], s: [f64; 2], a: [f64; 2]) -> MixtureParams {
        MixtureParams::new(m.to_vec(), s.to_vec(), a.to_vec()).unwrap()
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(MixtureParams::new(vec![], vec![], vec![]).is_err());
        assert!(MixtureParams::new(vec![0.0], vec![0.0], vec![1.0]).is_err());
        assert!(MixtureParams::new(vec![0.0], vec![-1.0], vec![1.0]).is_err());
        assert!(MixtureParams::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(MixtureParams::new(vec![0.0, 1.0], vec![1.0], vec![0.5, 0.5]).is_err());
        assert!(MixtureParams::new(vec![f64::NAN], vec![1.0], vec![1.0]).is_err());
        // zero weight is allowed as long as the sum is one
        assert!(MixtureParams::new(vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]).is_ok());
    }

    #[test]
    fn pdf_examples() {
        let std = MixtureParams::single(0.0, 1.0).unwrap();
        assert!((pdf(&std, 0.0) - 0.398942280).abs() < 1e-9);
        let sym = two([-1.0, 1.0], [1.0, 1.0], [0.5, 0.5]);
        assert!((pdf(&sym, 0.0) - 0.241970725).abs() < 1e-9);
        let far = pdf(&std, 100.0);
        assert!(far < 1e-300 && !far.is_nan());
    }

    #[test]
    fn cdf_examples() {
        let std = MixtureParams::single(0.0, 1.0).unwrap();
        assert!((cdf(&std, 0.0) - 0.5).abs() < 1e-12);
        let p = two([-1.0, 2.0], [0.3, 0.5], [0.4, 0.6]);
        assert!(cdf(&p, 2.0 + 12.0 * 0.5) >= 1.0 - 1e-12);
        assert_eq!(cdf(&p, -1e6), 0.0);
    }

    #[test]
    fn gnll_examples() {
        let at_mode = MixtureParams::single(0.7, 1.0).unwrap();
        assert!((gnll_point(&at_mode, 0.7) - 0.918938533).abs() < 1e-9);
        let std = MixtureParams::single(0.0, 1.0).unwrap();
        let want = 0.5 * 50.0 * 50.0 + 0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((gnll_point(&std, 50.0) - want).abs() < 1e-9);
        // far beyond exp underflow the log-domain path stays finite
        assert!(gnll_point(&std, 1e3).is_finite());
        let g = gnll_gradients(&std, 1e3);
        assert!(g.d_means.iter().chain(&g.d_sigmas).chain(&g.d_alphas).all(|v| v.is_finite()));
    }

    #[test]
    fn gnll_batch_means_points() {
        let p = two([-1.0, 1.0], [0.5, 2.0], [0.3, 0.7]);
        let single = gnll_batch(&[p.clone()], &[0.4]).unwrap();
        assert_eq!(single, gnll_point(&p, 0.4));
        let dup = gnll_batch(&[p.clone(), p.clone()], &[0.4, 0.4]).unwrap();
        assert!((dup - single).abs() < 1e-15);
        assert!(gnll_batch(&[], &[]).is_err());
        assert!(gnll_batch(&[p], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gradient_at_mode_and_symmetry() {
        let p = MixtureParams::single(1.5, 0.8).unwrap();
        assert_eq!(gnll_gradients(&p, 1.5).d_means[0], 0.0);
        let sym = two([-1.0, 1.0], [0.7, 0.7], [0.5, 0.5]);
        let g = gnll_gradients(&sym, 0.0);
        assert!((g.d_means[0] + g.d_means[1]).abs() < 1e-15);
    }

    #[test]
    fn zero_weight_component_has_finite_gradient() {
        let p = two([0.0, 5.0], [1.0, 1.0], [1.0, 0.0]);
        let g = gnll_gradients(&p, 4.0);
        assert!(g.d_alphas.iter().all(|v| v.is_finite()));
        assert_eq!(g.responsibilities[1], 0.0);
    }

    #[test]
    fn mixture_moments() {
        let p = two([-1.0, 1.0], [1.0, 1.0], [0.5, 0.5]);
        assert_eq!(p.mean(), 0.0);
        assert!((p.std_dev() - 2f64.sqrt()).abs() < 1e-15);
        let scaled = p.affine(3.0, 2.0).unwrap();
        assert_eq!(scaled.means(), &[1.0, 5.0]);
        assert_eq!(scaled.sigmas(), &[2.0, 2.0]);
    }
}
