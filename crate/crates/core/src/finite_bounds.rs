//! Sum-capacity bounds for a finite spreading gain `m` and `n` users.
//!
//! The lower bounds average the mutual information under uniform inputs over
//! a random ±1 signature matrix, so they bound the best matrix from below.
//! All binomial-weighted sums are accumulated in natural-log space and turned
//! into bits only when a [`BoundValue`] is built.

use std::f64::consts::{LN_2, LOG2_E};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::noise::{diff_entropy_nats, ln_g_gamma, ln_g_gamma_quadrature, mixture_entropy, NoiseModel};
use crate::numerics::{golden_max, log_binomial, log_space, lse_slice, QuadratureConfig};

/// Spreading gain `m` (chips per symbol) and number of users `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemSize {
    pub m: u64,
    pub n: u64,
}

impl SystemSize {
    pub fn new(m: u64, n: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::domain(format!("system size needs m, n >= 1 (got m={m}, n={n})")));
        }
        Ok(Self { m, n })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    ConjecturedUpper,
    TrueUpper,
    Exact,
    Estimate,
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BoundKind::Lower => "lower",
            BoundKind::ConjecturedUpper => "conjectured_upper",
            BoundKind::TrueUpper => "true_upper",
            BoundKind::Exact => "exact",
            BoundKind::Estimate => "estimate",
        };
        f.write_str(s)
    }
}

/// How the uniform-noise overlap ψ is scaled in the γ-free uniform bound.
///
/// `Derived` uses ψ((4j−2k)/(2a√m)), which is what evaluating g_γ for
/// Uniform[−a, a] produces. `Printed` uses ψ((4j−2k)/(a√m)).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eq6Mode {
    Printed,
    #[default]
    Derived,
}

impl FromStr for Eq6Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "printed" | "as-printed" => Ok(Eq6Mode::Printed),
            "derived" => Ok(Eq6Mode::Derived),
            other => Err(Error::parse(format!("eq6 mode must be `printed` or `derived`, got `{other}`"))),
        }
    }
}

/// Parameters a bound was computed with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundMeta {
    pub m: u64,
    pub n: u64,
    pub noise: NoiseModel,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eq6_mode: Option<Eq6Mode>,
    /// Value before clamping to `[0, n]`.
    pub raw_bits_total: f64,
}

/// A computed sum-capacity bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub kind: BoundKind,
    pub bits_total: f64,
    pub bits_per_user: f64,
    pub meta: BoundMeta,
}

impl BoundValue {
    /// Clamps the raw value into `[0, n]`; the raw value stays in `meta`.
    fn build(kind: BoundKind, size: SystemSize, noise: NoiseModel, raw_bits_total: f64) -> Self {
        let n = size.n as f64;
        let bits_total = raw_bits_total.clamp(0.0, n);
        Self {
            kind,
            bits_total,
            bits_per_user: bits_total / n,
            meta: BoundMeta {
                m: size.m,
                n: size.n,
                noise,
                gamma: None,
                eq6_mode: None,
                raw_bits_total,
            },
        }
    }

    fn with_gamma(mut self, gamma: f64) -> Self {
        self.meta.gamma = Some(gamma);
        self
    }

    fn with_eq6_mode(mut self, mode: Eq6Mode) -> Self {
        self.meta.eq6_mode = Some(mode);
        self
    }
}

/// γ grid and golden refinement budget for the envelope search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSearch {
    pub grid: Vec<f64>,
    pub refine_iters: usize,
}

impl Default for GammaSearch {
    fn default() -> Self {
        Self {
            grid: log_space(1e-4, 1e3, 64),
            refine_iters: 40,
        }
    }
}

impl GammaSearch {
    pub fn log_grid(lo: f64, hi: f64, points: usize, refine_iters: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && points >= 1) {
            return Err(Error::domain("gamma grid needs 0 < lo < hi and at least one point"));
        }
        Ok(Self {
            grid: log_space(lo, hi, points),
            refine_iters,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::domain("gamma grid is empty"));
        }
        if self.grid.iter().any(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::domain("gamma grid must be strictly positive"));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("gamma grid must be strictly increasing"));
        }
        Ok(())
    }
}

/// Rows of ln(C(k, j) / 2^k) for k = 0..=n.
struct HalfPascal {
    rows: Vec<Vec<f64>>,
    ln_binom_n: Vec<f64>,
}

impl HalfPascal {
    fn new(n: u64) -> Self {
        let rows = (0..=n)
            .map(|k| {
                (0..=k)
                    .map(|j| log_binomial(k, j).expect("j <= k").ln() - k as f64 * LN_2)
                    .collect()
            })
            .collect();
        let ln_binom_n = (0..=n).map(|k| log_binomial(n, k).expect("k <= n").ln()).collect();
        Self { rows, ln_binom_n }
    }

    /// ln Σ_k C(n,k) · (Σ_j C(k,j)/2^k · w(2j − k))^m, where `ln_w(d)` is the
    /// log of the per-offset factor and `ln_scale` multiplies every inner sum.
    fn ln_family_sum<W: FnMut(i64) -> f64>(&self, m: u64, ln_scale: f64, mut ln_w: W) -> f64 {
        let mf = m as f64;
        let mut inner = Vec::new();
        let outer: Vec<f64> = self
            .rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                inner.clear();
                inner.extend(row.iter().enumerate().map(|(j, &lc)| lc + ln_w(2 * j as i64 - k as i64)));
                let ln_inner = lse_slice(&inner) + ln_scale;
                if ln_inner == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    self.ln_binom_n[k] + mf * ln_inner
                }
            })
            .collect();
        lse_slice(&outer)
    }
}

/// n − log₂ Σ_j C(n,2j) (C(2j,j)/2^{2j})^m.
pub fn noiseless_lower(size: SystemSize) -> BoundValue {
    let SystemSize { m, n } = size;
    let terms: Vec<f64> = (0..=n / 2)
        .map(|j| {
            let central = log_binomial(2 * j, j).expect("j <= 2j").ln() - 2.0 * j as f64 * LN_2;
            log_binomial(n, 2 * j).expect("2j <= n").ln() + m as f64 * central
        })
        .collect();
    let raw = n as f64 - lse_slice(&terms) / LN_2;
    BoundValue::build(BoundKind::Lower, size, NoiseModel::Noiseless, raw)
}

fn check_noisy(model: &NoiseModel, gamma: f64) -> Result<()> {
    if model.is_noiseless() {
        return Err(Error::Unsupported {
            model: model.to_string(),
            operation: "noisy lower bound (use noiseless_lower)",
        });
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn gaussian_family_bits(pascal: &HalfPascal, size: SystemSize, sigma2: f64, gamma: f64) -> f64 {
    let SystemSize { m, n } = size;
    let c = 2.0 * gamma / (sigma2 * m as f64 * (1.0 + gamma));
    let ln_sum = pascal.ln_family_sum(m, -0.5 * gamma.ln_1p(), |d| -c * (d * d) as f64);
    n as f64 - m as f64 * gamma * LOG2_E / 2.0 - ln_sum / LN_2
}

fn uniform_family_bits(pascal: &HalfPascal, size: SystemSize, a: f64, mode: Eq6Mode) -> f64 {
    let SystemSize { m, n } = size;
    let width = match mode {
        Eq6Mode::Derived => 2.0 * a,
        Eq6Mode::Printed => a,
    } * (m as f64).sqrt();
    let ln_sum = pascal.ln_family_sum(m, 0.0, |d| {
        let u = (2 * d) as f64 / width;
        let psi = 1.0 - u.abs();
        if psi > 0.0 {
            psi.ln()
        } else {
            f64::NEG_INFINITY
        }
    });
    n as f64 - ln_sum / LN_2
}

/// One member of the γ-family of noisy lower bounds, using the closed form
/// for the noise family. Uniform noise uses [`Eq6Mode::Derived`].
pub fn noisy_lower_gamma(size: SystemSize, model: &NoiseModel, gamma: f64) -> Result<BoundValue> {
    noisy_lower_gamma_with(size, model, gamma, Eq6Mode::default())
}

pub fn noisy_lower_gamma_with(size: SystemSize, model: &NoiseModel, gamma: f64, mode: Eq6Mode) -> Result<BoundValue> {
    check_noisy(model, gamma)?;
    let pascal = HalfPascal::new(size.n);
    let bound = match *model {
        NoiseModel::Gaussian { sigma2 } => {
            let raw = gaussian_family_bits(&pascal, size, sigma2, gamma);
            BoundValue::build(BoundKind::Lower, size, *model, raw)
        }
        NoiseModel::Uniform { a } => {
            let raw = uniform_family_bits(&pascal, size, a, mode);
            BoundValue::build(BoundKind::Lower, size, *model, raw).with_eq6_mode(mode)
        }
        NoiseModel::Noiseless => unreachable!("rejected by check_noisy"),
    };
    Ok(bound.with_gamma(gamma))
}

/// The general γ-family member assembled from the differential entropy and
/// g_γ evaluated by quadrature of its defining integral. Works for any
/// supported noise model and serves as the cross-check of the closed forms.
pub fn noisy_lower_generic(size: SystemSize, model: &NoiseModel, gamma: f64, cfg: &QuadratureConfig) -> Result<BoundValue> {
    check_noisy(model, gamma)?;
    let SystemSize { m, n } = size;
    let scale = (m as f64).sqrt();
    let offsets = n as i64;
    // g_γ is needed at t = 2d/√m for d = 2j − k ∈ [−n, n]
    let ln_g: Vec<f64> = (-offsets..=offsets)
        .map(|d| ln_g_gamma_quadrature(model, 2.0 * d as f64 / scale, gamma, cfg))
        .collect::<Result<_>>()?;
    let pascal = HalfPascal::new(n);
    let ln_sum = pascal.ln_family_sum(m, 0.0, |d| ln_g[(d + offsets) as usize]);
    let h = diff_entropy_nats(model)?;
    let raw = n as f64 - (m as f64 * gamma * h + ln_sum) / LN_2;
    Ok(BoundValue::build(BoundKind::Lower, size, *model, raw).with_gamma(gamma))
}

/// Closed-form g_γ route through the same assembly as
/// [`noisy_lower_generic`]. Used to confirm the assembly itself.
pub fn noisy_lower_assembled(size: SystemSize, model: &NoiseModel, gamma: f64) -> Result<BoundValue> {
    check_noisy(model, gamma)?;
    let SystemSize { m, n } = size;
    let scale = (m as f64).sqrt();
    let pascal = HalfPascal::new(n);
    let mut err = None;
    let ln_sum = pascal.ln_family_sum(m, 0.0, |d| match ln_g_gamma(model, 2.0 * d as f64 / scale, gamma) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            f64::NAN
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let h = diff_entropy_nats(model)?;
    let raw = n as f64 - (m as f64 * gamma * h + ln_sum) / LN_2;
    Ok(BoundValue::build(BoundKind::Lower, size, *model, raw).with_gamma(gamma))
}

/// Supremum of the γ-family: grid maximum, then golden refinement in ln γ
/// between the neighbours of the grid argmax.
pub fn noisy_lower_envelope(size: SystemSize, model: &NoiseModel, search: &GammaSearch) -> Result<BoundValue> {
    noisy_lower_envelope_with(size, model, search, Eq6Mode::default())
}

pub fn noisy_lower_envelope_with(
    size: SystemSize,
    model: &NoiseModel,
    search: &GammaSearch,
    mode: Eq6Mode,
) -> Result<BoundValue> {
    search.validate()?;
    match *model {
        NoiseModel::Noiseless => Err(Error::Unsupported {
            model: model.to_string(),
            operation: "noisy lower envelope (use noiseless_lower)",
        }),
        // γ cancels out of the uniform family
        NoiseModel::Uniform { .. } => noisy_lower_gamma_with(size, model, 1.0, mode),
        NoiseModel::Gaussian { sigma2 } => {
            let pascal = HalfPascal::new(size.n);
            let objective = |ln_gamma: f64| gaussian_family_bits(&pascal, size, sigma2, ln_gamma.exp());
            let ln_grid: Vec<f64> = search.grid.iter().map(|g| g.ln()).collect();
            let values: Vec<f64> = ln_grid.iter().map(|&lg| objective(lg)).collect();
            let (best_i, _) = values
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            let mut best = (ln_grid[best_i], values[best_i]);
            let lo = ln_grid[best_i.saturating_sub(1)];
            let hi = ln_grid[(best_i + 1).min(ln_grid.len() - 1)];
            if hi > lo {
                let refined = golden_max(objective, lo, hi, search.refine_iters);
                if refined.1 > best.1 {
                    best = refined;
                }
            }
            let gamma = best.0.exp();
            Ok(BoundValue::build(BoundKind::Lower, size, *model, best.1).with_gamma(gamma))
        }
    }
}

/// min(n, m (h(f̃) − h(f))); for the noiseless channel min(n, m H(f̃)),
/// which is a proven bound rather than a conjectured one.
pub fn conjectured_upper(size: SystemSize, model: &NoiseModel, cfg: &QuadratureConfig) -> Result<BoundValue> {
    let SystemSize { m, n } = size;
    let mix = mixture_entropy(model, m, n, cfg)?;
    let (kind, per_chip) = match model {
        NoiseModel::Noiseless => (BoundKind::TrueUpper, mix),
        _ => (BoundKind::ConjecturedUpper, mix - diff_entropy_nats(model)? / LN_2),
    };
    let raw = (m as f64 * per_chip).min(n as f64);
    Ok(BoundValue::build(kind, size, *model, raw))
}
