//! Noise families and the functionals the bounds consume: density,
//! differential entropy, the correlation functional g_γ(t) = ∫ f(t+x) f(x)^γ dx
//! and the entropy of the per-chip output mixture.

use std::f64::consts::{E, LN_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{adaptive_quad, adaptive_quad_pieces, log_binomial, QuadratureConfig};

/// Effective half-width of a Gaussian, in standard deviations, for windows
/// over which a density factor is integrated.
const GAUSS_WINDOW_SIGMAS: f64 = 12.0;

/// Additive i.i.d. chip noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum NoiseModel {
    Noiseless,
    /// Zero-mean Gaussian with variance `sigma2`.
    Gaussian { sigma2: f64 },
    /// Uniform on `[-a, a]`.
    Uniform { a: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::domain(format!("Gaussian variance must be positive, got {sigma2}")));
        }
        Ok(NoiseModel::Gaussian { sigma2 })
    }

    pub fn uniform(a: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::domain(format!("uniform half-width must be positive, got {a}")));
        }
        Ok(NoiseModel::Uniform { a })
    }

    pub fn from_ebn0(ebn0: EbN0) -> Self {
        NoiseModel::Gaussian { sigma2: ebn0.sigma2() }
    }

    pub fn is_noiseless(&self) -> bool {
        matches!(self, NoiseModel::Noiseless)
    }

    fn unsupported(&self, operation: &'static str) -> Error {
        Error::Unsupported {
            model: self.to_string(),
            operation,
        }
    }

    /// Natural log of the density; `-inf` outside the support.
    pub fn ln_density(&self, x: f64) -> Result<f64> {
        match *self {
            NoiseModel::Noiseless => Err(self.unsupported("density")),
            NoiseModel::Gaussian { sigma2 } => Ok(-0.5 * (2.0 * PI * sigma2).ln() - x * x / (2.0 * sigma2)),
            NoiseModel::Uniform { a } => Ok(if x.abs() <= a { -(2.0 * a).ln() } else { f64::NEG_INFINITY }),
        }
    }

    /// Interval outside which the density vanishes (infinite for Gaussian).
    fn support(&self) -> (f64, f64) {
        match *self {
            NoiseModel::Uniform { a } => (-a, a),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Half-width beyond which the density is negligible.
    fn effective_half_width(&self) -> f64 {
        match *self {
            NoiseModel::Noiseless => 0.0,
            NoiseModel::Gaussian { sigma2 } => GAUSS_WINDOW_SIGMAS * sigma2.sqrt(),
            NoiseModel::Uniform { a } => a,
        }
    }
}

impl fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseModel::Noiseless => write!(f, "none"),
            NoiseModel::Gaussian { sigma2 } => write!(f, "gaussian:{sigma2}"),
            NoiseModel::Uniform { a } => write!(f, "uniform:{a}"),
        }
    }
}

impl FromStr for NoiseModel {
    type Err = Error;

    /// `none`, `gaussian:<sigma2>` or `uniform:<a>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("noiseless") {
            return Ok(NoiseModel::Noiseless);
        }
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::parse(format!("noise spec `{s}`: expected none, gaussian:<sigma2> or uniform:<a>")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::parse(format!("noise spec `{s}`: `{value}` is not a number")))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "gaussian" => NoiseModel::gaussian(value),
            "uniform" => NoiseModel::uniform(value),
            other => Err(Error::parse(format!("unknown noise family `{other}`"))),
        }
    }
}

/// Per-bit SNR in dB. For this channel normalization Eb/N0 = 1/(2σ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EbN0 {
    pub db: f64,
}

impl EbN0 {
    pub fn new(db: f64) -> Self {
        Self { db }
    }

    pub fn sigma2(self) -> f64 {
        1.0 / (2.0 * 10f64.powf(self.db / 10.0))
    }

    pub fn from_sigma2(sigma2: f64) -> Self {
        Self {
            db: 10.0 * (1.0 / (2.0 * sigma2)).log10(),
        }
    }
}

pub fn density(model: &NoiseModel, x: f64) -> Result<f64> {
    Ok(model.ln_density(x)?.exp())
}

/// Differential entropy in nats.
pub(crate) fn diff_entropy_nats(model: &NoiseModel) -> Result<f64> {
    match *model {
        NoiseModel::Noiseless => Err(model.unsupported("differential entropy")),
        NoiseModel::Gaussian { sigma2 } => Ok(0.5 * (2.0 * PI * E * sigma2).ln()),
        NoiseModel::Uniform { a } => Ok((2.0 * a).ln()),
    }
}

/// Differential entropy in bits (closed form).
pub fn diff_entropy(model: &NoiseModel) -> Result<f64> {
    Ok(diff_entropy_nats(model)? / LN_2)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::domain(format!("gamma must be a finite nonnegative number, got {gamma}")));
    }
    Ok(())
}

/// ln g_γ(t) from the closed forms; `-inf` where the overlap vanishes.
pub fn ln_g_gamma(model: &NoiseModel, t: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    match *model {
        NoiseModel::Noiseless => Err(model.unsupported("g_gamma")),
        NoiseModel::Gaussian { sigma2 } => Ok(-0.5 * gamma * (2.0 * PI * sigma2).ln()
            - 0.5 * gamma.ln_1p()
            - gamma * t * t / (2.0 * sigma2 * (1.0 + gamma))),
        NoiseModel::Uniform { a } => {
            if gamma == 0.0 {
                return Ok(0.0);
            }
            let overlap = 1.0 - t.abs() / (2.0 * a);
            Ok(if overlap > 0.0 {
                -gamma * (2.0 * a).ln() + overlap.ln()
            } else {
                f64::NEG_INFINITY
            })
        }
    }
}

/// g_γ(t) = ∫ f(t+x) f(x)^γ dx, closed form.
pub fn g_gamma(model: &NoiseModel, t: f64, gamma: f64) -> Result<f64> {
    Ok(ln_g_gamma(model, t, gamma)?.exp())
}

/// ln g_γ(t) by direct adaptive quadrature of the defining integral.
///
/// The density power is normalized by its peak value f(0)^γ so the integrand
/// stays O(1); the factor is restored in log space.
pub fn ln_g_gamma_quadrature(model: &NoiseModel, t: f64, gamma: f64, cfg: &QuadratureConfig) -> Result<f64> {
    check_gamma(gamma)?;
    if model.is_noiseless() {
        return Err(model.unsupported("g_gamma"));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let ln_peak = model.ln_density(0.0)?;
    let (s_lo, s_hi) = model.support();
    let hw = model.effective_half_width();
    let lo = (-t - hw).max(s_lo);
    let hi = (-t + hw).min(s_hi);
    if !(hi > lo) {
        return Ok(f64::NEG_INFINITY);
    }
    let integrand = |x: f64| {
        let a = model.ln_density(t + x).unwrap_or(f64::NEG_INFINITY);
        let b = model.ln_density(x).unwrap_or(f64::NEG_INFINITY);
        (a + gamma * (b - ln_peak)).exp()
    };
    const PANELS: usize = 32;
    let breaks: Vec<f64> = (0..=PANELS)
        .map(|i| lo + (hi - lo) * i as f64 / PANELS as f64)
        .collect();
    let integral = adaptive_quad_pieces(integrand, &breaks, cfg)?;
    Ok(gamma * ln_peak + integral.ln())
}

/// g_γ(t) by quadrature; cross-check path for [`g_gamma`].
pub fn g_gamma_quadrature(model: &NoiseModel, t: f64, gamma: f64, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(ln_g_gamma_quadrature(model, t, gamma, cfg)?.exp())
}

/// Component offsets (2j − n)/√m and log-weights ln(C(n,j)/2^n) of the
/// per-chip noiseless output.
pub(crate) fn binomial_lattice(m: u64, n: u64) -> (Vec<f64>, Vec<f64>) {
    let scale = (m as f64).sqrt();
    let means = (0..=n).map(|j| (2.0 * j as f64 - n as f64) / scale).collect();
    let ln_w = (0..=n)
        .map(|j| log_binomial(n, j).expect("j <= n").ln() - n as f64 * LN_2)
        .collect();
    (means, ln_w)
}

fn check_size(m: u64, n: u64) -> Result<()> {
    if m == 0 || n == 0 {
        return Err(Error::domain(format!("m and n must be positive, got m={m}, n={n}")));
    }
    Ok(())
}

/// Entropy of the mixture f̃(x) = Σ_j C(n,j)/2^n f(x − (2j−n)/√m), in bits.
///
/// Noiseless: Shannon entropy of Binomial(n, ½). Gaussian: adaptive
/// quadrature, split at the component means so narrow peaks are resolved.
/// Uniform: exact, since f̃ is piecewise constant.
pub fn mixture_entropy(model: &NoiseModel, m: u64, n: u64, cfg: &QuadratureConfig) -> Result<f64> {
    check_size(m, n)?;
    let (means, ln_w) = binomial_lattice(m, n);
    let nats = match *model {
        NoiseModel::Noiseless => -ln_w.iter().map(|&lw| lw.exp() * lw).sum::<f64>(),
        NoiseModel::Gaussian { sigma2 } => gaussian_mixture_entropy_nats(sigma2, &means, &ln_w, cfg)?,
        NoiseModel::Uniform { a } => uniform_mixture_entropy_nats(a, &means, &ln_w),
    };
    Ok(nats / LN_2)
}

fn gaussian_mixture_entropy_nats(sigma2: f64, means: &[f64], ln_w: &[f64], cfg: &QuadratureConfig) -> Result<f64> {
    let sigma = sigma2.sqrt();
    let ln_norm = -0.5 * (2.0 * PI * sigma2).ln();
    let spacing = if means.len() > 1 { means[1] - means[0] } else { 1.0 };
    // components farther than this contribute below e^{-800}
    let reach = 40.0 * sigma;
    let first = means[0];
    let last_idx = means.len() - 1;
    let ln_mix = |x: f64| {
        let lo = (((x - reach - first) / spacing).ceil().max(0.0) as usize).min(last_idx);
        let hi = (((x + reach - first) / spacing).floor().max(0.0) as usize).min(last_idx);
        let term = |j: usize| {
            let d = x - means[j];
            ln_w[j] - d * d / (2.0 * sigma2)
        };
        let max = (lo..=hi).map(term).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        let sum: f64 = (lo..=hi).map(|j| (term(j) - max).exp()).sum();
        max + sum.ln() + ln_norm
    };
    let integrand = |x: f64| {
        let l = ln_mix(x);
        if l == f64::NEG_INFINITY {
            0.0
        } else {
            -l.exp() * l
        }
    };

    const OFFSETS: [f64; 9] = [-10.0, -6.0, -3.0, -1.5, 0.0, 1.5, 3.0, 6.0, 10.0];
    let mut breaks: Vec<f64> = means
        .iter()
        .flat_map(|&mu| OFFSETS.iter().map(move |&k| mu + k * sigma))
        .collect();
    breaks.sort_by(f64::total_cmp);
    let mut merged = Vec::with_capacity(breaks.len());
    for b in breaks {
        match merged.last() {
            Some(&prev) if b - prev < 0.25 * sigma => {}
            _ => merged.push(b),
        }
    }
    let window_hi = means[last_idx] + 10.0 * sigma;
    if *merged.last().expect("nonempty") < window_hi {
        merged.push(window_hi);
    }
    adaptive_quad_pieces(integrand, &merged, cfg)
}

fn uniform_breakpoints(a: f64, means: &[f64]) -> Vec<f64> {
    let mut breaks: Vec<f64> = means.iter().flat_map(|&mu| [mu - a, mu + a]).collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * y.abs().max(1.0));
    breaks
}

fn uniform_mixture_density(a: f64, means: &[f64], ln_w: &[f64], x: f64) -> f64 {
    means
        .iter()
        .zip(ln_w)
        .filter(|(&mu, _)| (x - mu).abs() <= a)
        .map(|(_, &lw)| lw.exp())
        .sum::<f64>()
        / (2.0 * a)
}

fn uniform_mixture_entropy_nats(a: f64, means: &[f64], ln_w: &[f64]) -> f64 {
    let breaks = uniform_breakpoints(a, means);
    breaks
        .windows(2)
        .map(|seg| {
            let p = uniform_mixture_density(a, means, ln_w, 0.5 * (seg[0] + seg[1]));
            if p > 0.0 {
                -p * (seg[1] - seg[0]) * p.ln()
            } else {
                0.0
            }
        })
        .sum()
}

/// Mixture entropy in bits by adaptive quadrature of −f̃ log f̃, for both
/// Gaussian and Uniform noise. The Uniform integrand is discontinuous, so
/// integration runs piecewise between its jump points with the pieces shrunk
/// by a relative 1e-13 to keep Simpson's endpoint samples off the jumps.
pub fn mixture_entropy_quadrature(model: &NoiseModel, m: u64, n: u64, cfg: &QuadratureConfig) -> Result<f64> {
    check_size(m, n)?;
    let (means, ln_w) = binomial_lattice(m, n);
    let nats = match *model {
        NoiseModel::Noiseless => return Err(model.unsupported("mixture entropy quadrature")),
        NoiseModel::Gaussian { sigma2 } => gaussian_mixture_entropy_nats(sigma2, &means, &ln_w, cfg)?,
        NoiseModel::Uniform { a } => {
            let integrand = |x: f64| {
                let p = means
                    .iter()
                    .zip(&ln_w)
                    .map(|(&mu, &lw)| density(model, x - mu).unwrap_or(0.0) * lw.exp())
                    .sum::<f64>();
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            };
            let breaks = uniform_breakpoints(a, &means);
            let mut total = 0.0;
            for seg in breaks.windows(2) {
                let shrink = 1e-13 * seg[0].abs().max(seg[1].abs()).max(1.0);
                let (lo, hi) = (seg[0] + shrink, seg[1] - shrink);
                if hi > lo {
                    total += adaptive_quad(integrand, lo, hi, cfg)?;
                }
            }
            total
        }
    };
    Ok(nats / LN_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg() -> QuadratureConfig {
        QuadratureConfig::default()
    }

    #[test]
    fn parse_and_display_round_trip() {
        for s in ["none", "gaussian:0.5", "uniform:1"] {
            let m: NoiseModel = s.parse().unwrap();
            assert_eq!(m.to_string(), s);
        }
        assert!("gaussian:-1".parse::<NoiseModel>().is_err());
        assert!("uniform:0".parse::<NoiseModel>().is_err());
        assert!("laplace:1".parse::<NoiseModel>().is_err());
        assert!("gaussian".parse::<NoiseModel>().is_err());
    }

    #[test]
    fn ebn0_conversion() {
        assert_relative_eq!(EbN0::new(0.0).sigma2(), 0.5);
        assert_relative_eq!(EbN0::new(10.0).sigma2(), 0.05, max_relative = 1e-15);
        assert_relative_eq!(EbN0::from_sigma2(EbN0::new(7.3).sigma2()).db, 7.3, max_relative = 1e-14);
    }

    #[test]
    fn density_examples() {
        let g = NoiseModel::gaussian(1.0).unwrap();
        let u = NoiseModel::uniform(1.0).unwrap();
        assert_relative_eq!(density(&g, 0.0).unwrap(), 0.398_942_280_401_432_7, max_relative = 1e-15);
        assert_eq!(density(&u, 0.5).unwrap(), 0.5);
        assert_eq!(density(&u, 2.0).unwrap(), 0.0);
        assert!(matches!(density(&NoiseModel::Noiseless, 0.0), Err(Error::Unsupported { .. })));
    }

    #[test]
    fn diff_entropy_examples() {
        assert_relative_eq!(
            diff_entropy(&NoiseModel::gaussian(1.0).unwrap()).unwrap(),
            2.047_095_585_180_641,
            max_relative = 1e-15
        );
        assert_eq!(diff_entropy(&NoiseModel::uniform(0.5).unwrap()).unwrap(), 0.0);
        assert_eq!(diff_entropy(&NoiseModel::uniform(1.0).unwrap()).unwrap(), 1.0);
        assert!(diff_entropy(&NoiseModel::Noiseless).is_err());
    }

    #[test]
    fn g_gamma_examples() {
        let g = NoiseModel::gaussian(1.0).unwrap();
        let u = NoiseModel::uniform(1.0).unwrap();
        for t in [-3.0, 0.0, 0.7, 5.0] {
            assert_relative_eq!(g_gamma(&g, t, 0.0).unwrap(), 1.0, max_relative = 1e-15);
            assert_eq!(g_gamma(&u, t, 0.0).unwrap(), 1.0);
        }
        assert_relative_eq!(g_gamma(&g, 0.0, 1.0).unwrap(), 0.282_094_791_773_878_14, max_relative = 1e-15);
        assert_eq!(g_gamma(&u, 2.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(g_gamma(&u, 1.0, 1.0).unwrap(), 0.25, max_relative = 1e-15);
        assert!(g_gamma(&g, 0.0, -1.0).is_err());
        assert!(g_gamma(&NoiseModel::Noiseless, 0.0, 1.0).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let c = cfg();
        for s2 in [0.01, 0.3, 2.0, 17.0] {
            let m = NoiseModel::gaussian(s2).unwrap();
            let w = 12.0 * s2.sqrt();
            let total = adaptive_quad(|x| density(&m, x).unwrap(), -w, w, &c).unwrap();
            assert!((total - 1.0).abs() < 1e-9, "sigma2={s2}: {total}");
        }
        for a in [0.1, 1.0, 3.3] {
            let m = NoiseModel::uniform(a).unwrap();
            let eps = 1e-13;
            let total = adaptive_quad(|x| density(&m, x).unwrap(), -a + eps, a - eps, &c).unwrap();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn g_gamma_quadrature_matches_closed_form() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let c = cfg();
        for i in 0..100 {
            let model = if i % 2 == 0 {
                NoiseModel::gaussian(rng.gen_range(0.05..4.0)).unwrap()
            } else {
                NoiseModel::uniform(rng.gen_range(0.1..3.0)).unwrap()
            };
            let t = rng.gen_range(-3.0..3.0);
            let gamma = rng.gen_range(0.0..5.0);
            let exact = g_gamma(&model, t, gamma).unwrap();
            let quad = g_gamma_quadrature(&model, t, gamma, &c).unwrap();
            assert!((exact - quad).abs() < 1e-8, "{model} t={t} gamma={gamma}: {exact} vs {quad}");
        }
    }

    #[test]
    fn noiseless_mixture_entropy() {
        let c = cfg();
        assert_relative_eq!(mixture_entropy(&NoiseModel::Noiseless, 7, 1, &c).unwrap(), 1.0, max_relative = 1e-15);
        assert_relative_eq!(mixture_entropy(&NoiseModel::Noiseless, 3, 2, &c).unwrap(), 1.5, max_relative = 1e-15);
        for n in [1, 5, 40] {
            let a = mixture_entropy(&NoiseModel::Noiseless, 1, n, &c).unwrap();
            let b = mixture_entropy(&NoiseModel::Noiseless, 64, n, &c).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn gaussian_mixture_entropy_reference() {
        // mpmath quadrature, 40 digits
        let c = cfg();
        let h = mixture_entropy(&NoiseModel::gaussian(0.5).unwrap(), 2, 3, &c).unwrap();
        assert_relative_eq!(h, 2.539_621_554_861_280_9, epsilon = 1e-9);
        let g1 = NoiseModel::gaussian(1.0).unwrap();
        let i = mixture_entropy(&g1, 1, 1, &c).unwrap() - diff_entropy(&g1).unwrap();
        assert_relative_eq!(i, 0.485_944_154_132_935_3, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_mixture_entropy_limits() {
        let c = cfg();
        let wide = NoiseModel::gaussian(1e6).unwrap();
        let gap = mixture_entropy(&wide, 4, 6, &c).unwrap() - diff_entropy(&wide).unwrap();
        assert!(gap.abs() < 1e-3, "{gap}");
        // separated components: entropy splits into H(weights) + h(f)
        let narrow = NoiseModel::gaussian(1e-6).unwrap();
        let h = mixture_entropy(&narrow, 4, 6, &c).unwrap();
        let expected = mixture_entropy(&NoiseModel::Noiseless, 4, 6, &c).unwrap() + diff_entropy(&narrow).unwrap();
        assert!((h - expected).abs() < 1e-8, "{h} vs {expected}");
    }

    #[test]
    fn uniform_exact_matches_quadrature() {
        let c = cfg();
        for (m, n, a) in [(1, 1, 1.0), (4, 6, 0.3), (9, 5, 2.5), (16, 12, 0.1)] {
            let model = NoiseModel::uniform(a).unwrap();
            let exact = mixture_entropy(&model, m, n, &c).unwrap();
            let quad = mixture_entropy_quadrature(&model, m, n, &c).unwrap();
            assert!((exact - quad).abs() < 1e-6, "m={m} n={n} a={a}: {exact} vs {quad}");
        }
        // m = n = 1, a = 1: f̃ = 1/4 on [-2, 2], entropy log2 4 = 2
        let h = mixture_entropy(&NoiseModel::uniform(1.0).unwrap(), 1, 1, &c).unwrap();
        assert_relative_eq!(h, 2.0, max_relative = 1e-15);
    }
}
