//! Large-system limits, `n, m → ∞`.
//!
//! Noisy limits hold the load `β = n/m` fixed. The noiseless limit uses the
//! faster scaling `n / (m log₂ n) → ζ`. Everything is computed in nats and
//! reported in bits per user.

use std::f64::consts::LOG2_E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_bounds::GammaSearch;
use crate::noise::{diff_entropy_nats, NoiseModel};
use crate::numerics::{
    adaptive_quad_pieces, binary_entropy_nats, golden_min, grid_then_golden_max, ln_cosh, q_function, GaussHermite,
    QuadratureConfig,
};

/// Operating point of a large-system limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadPoint {
    /// Users per chip, `n / m`.
    Beta(f64),
    /// `n / (m log₂ n)`, the noiseless scaling.
    Zeta(f64),
}

impl LoadPoint {
    pub fn beta(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain(format!("beta must be positive, got {beta}")));
        }
        Ok(LoadPoint::Beta(beta))
    }

    pub fn zeta(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta.is_finite()) {
            return Err(Error::domain(format!("zeta must be positive, got {zeta}")));
        }
        Ok(LoadPoint::Zeta(zeta))
    }

    fn require_beta(self) -> Result<f64> {
        match self {
            LoadPoint::Beta(b) if b > 0.0 && b.is_finite() => Ok(b),
            LoadPoint::Beta(b) => Err(Error::domain(format!("beta must be positive, got {b}"))),
            LoadPoint::Zeta(_) => Err(Error::domain("this limit is parameterized by beta, not zeta")),
        }
    }
}

/// Grids for the inf over γ / sup over t saddle problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaddleSearch {
    pub t_grid_size: usize,
    pub gamma: GammaSearch,
    pub refine_iters: usize,
}

impl Default for SaddleSearch {
    fn default() -> Self {
        Self {
            t_grid_size: 2049,
            gamma: GammaSearch::default(),
            refine_iters: 40,
        }
    }
}

impl SaddleSearch {
    pub fn validate(&self) -> Result<()> {
        if self.t_grid_size < 3 {
            return Err(Error::domain("t grid needs at least 3 points"));
        }
        self.gamma.validate()
    }

    /// Uniform grid on [0, 1] with both endpoints.
    fn t_grid(&self) -> Vec<f64> {
        let last = (self.t_grid_size - 1) as f64;
        (0..self.t_grid_size).map(|i| i as f64 / last).collect()
    }
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(())
}

/// Per-user noiseless limit min(1, 1/(2ζ)); the lower and upper limits agree.
pub fn noiseless_limit(zeta: f64) -> Result<f64> {
    if !(zeta > 0.0) {
        return Err(Error::domain(format!("zeta must be positive, got {zeta}")));
    }
    Ok((1.0 / (2.0 * zeta)).min(1.0))
}

/// Bracket of the Gaussian asymptotic lower bound, in bits:
/// H(t) + (1/2β)(γ log e − log(1 + (γ/σ²)(σ² + 4tβ))).
pub fn gaussian_saddle_bracket(t: f64, gamma: f64, beta: f64, sigma2: f64) -> f64 {
    let nats = binary_entropy_nats(t) + (gamma - (gamma * (sigma2 + 4.0 * t * beta) / sigma2).ln_1p()) / (2.0 * beta);
    nats * LOG2_E
}

/// Result of the inf–sup search behind [`asympt_lower_gaussian`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaddlePoint {
    pub bits_per_user: f64,
    /// 1 − inf sup, before clamping.
    pub raw: f64,
    pub gamma: f64,
    pub t: f64,
}

fn sup_over_t<F: Fn(f64) -> f64>(bracket: F, grid: &[f64], iters: usize) -> (f64, f64) {
    grid_then_golden_max(bracket, grid, iters)
}

/// 1 − inf_γ sup_t of [`gaussian_saddle_bracket`], clamped to [0, 1].
pub fn asympt_lower_gaussian(load: LoadPoint, sigma2: f64, search: &SaddleSearch) -> Result<f64> {
    Ok(asympt_lower_gaussian_saddle(load, sigma2, search)?.bits_per_user)
}

pub fn asympt_lower_gaussian_saddle(load: LoadPoint, sigma2: f64, search: &SaddleSearch) -> Result<SaddlePoint> {
    let beta = load.require_beta()?;
    check_sigma2(sigma2)?;
    search.validate()?;
    let t_grid = search.t_grid();
    let sup_at = |ln_gamma: f64| {
        let gamma = ln_gamma.exp();
        sup_over_t(|t| gaussian_saddle_bracket(t, gamma, beta, sigma2), &t_grid, search.refine_iters)
    };

    let ln_grid: Vec<f64> = search.gamma.grid.iter().map(|g| g.ln()).collect();
    let sups: Vec<f64> = ln_grid.iter().map(|&lg| sup_at(lg).1).collect();
    let best_i = (0..sups.len()).fold(0, |b, i| if sups[i] < sups[b] { i } else { b });
    let mut best_ln_gamma = ln_grid[best_i];
    let mut best_val = sups[best_i];
    let lo = ln_grid[best_i.saturating_sub(1)];
    let hi = ln_grid[(best_i + 1).min(ln_grid.len() - 1)];
    if hi > lo {
        let (lg, v) = golden_min(|lg| sup_at(lg).1, lo, hi, search.gamma.refine_iters);
        if v < best_val {
            best_ln_gamma = lg;
            best_val = v;
        }
    }
    let (t, _) = sup_at(best_ln_gamma);
    let raw = 1.0 - best_val;
    Ok(SaddlePoint {
        bits_per_user: raw.clamp(0.0, 1.0),
        raw,
        gamma: best_ln_gamma.exp(),
        t,
    })
}

/// Bracket of the single-sup approximation, in bits:
/// H(t) + (log e / 2β)(4tβ/(σ²+4tβ) − ln(1 + 4tβ/σ²)).
pub fn d1_bracket(t: f64, beta: f64, sigma2: f64) -> f64 {
    let x = 4.0 * t * beta;
    let nats = binary_entropy_nats(t) + (x / (sigma2 + x) - (x / sigma2).ln_1p()) / (2.0 * beta);
    nats * LOG2_E
}

/// 1 − sup_t [`d1_bracket`], clamped to [0, 1]. Never below
/// [`asympt_lower_gaussian`], since it swaps the inf and the sup.
pub fn d1_approx(load: LoadPoint, sigma2: f64, search: &SaddleSearch) -> Result<f64> {
    let beta = load.require_beta()?;
    check_sigma2(sigma2)?;
    search.validate()?;
    let (_, sup) = sup_over_t(|t| d1_bracket(t, beta, sigma2), &search.t_grid(), search.refine_iters);
    Ok((1.0 - sup).clamp(0.0, 1.0))
}

/// Unclamped asymptotic upper bound (1/β)(h(N + √β Z) − h(N)) in bits.
pub fn asympt_upper_raw(load: LoadPoint, model: &NoiseModel, cfg: &QuadratureConfig) -> Result<f64> {
    let beta = load.require_beta()?;
    match *model {
        NoiseModel::Noiseless => Err(Error::Unsupported {
            model: model.to_string(),
            operation: "asymptotic upper bound",
        }),
        NoiseModel::Gaussian { sigma2 } => Ok((beta / sigma2).ln_1p() / (2.0 * beta) * LOG2_E),
        NoiseModel::Uniform { a } => {
            let h_sum = uniform_plus_gaussian_entropy_nats(a, beta.sqrt(), cfg)?;
            Ok((h_sum - diff_entropy_nats(model)?) / beta * LOG2_E)
        }
    }
}

/// min(1, (1/β)(h(N + √β Z) − h(N))) bits per user.
pub fn asympt_upper(load: LoadPoint, model: &NoiseModel, cfg: &QuadratureConfig) -> Result<f64> {
    Ok(asympt_upper_raw(load, model, cfg)?.min(1.0))
}

/// Differential entropy of Uniform[−a, a] + N(0, s²), in nats.
fn uniform_plus_gaussian_entropy_nats(a: f64, s: f64, cfg: &QuadratureConfig) -> Result<f64> {
    // density (Φ((x+a)/s) − Φ((x−a)/s)) / 2a, written with upper tails for |x|
    let p = |x: f64| {
        let ax = x.abs();
        (q_function((ax - a) / s) - q_function((ax + a) / s)) / (2.0 * a)
    };
    let integrand = |x: f64| {
        let v = p(x);
        if v > 0.0 {
            -v * v.ln()
        } else {
            0.0
        }
    };
    let mut breaks = vec![0.0];
    for k in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 12.0] {
        let b = a + k * s;
        if b > 0.0 {
            breaks.push(b);
        }
    }
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    // symmetric density: integrate the right half
    Ok(2.0 * adaptive_quad_pieces(integrand, &breaks, cfg)?)
}

/// One converged (or abandoned) run of the replica fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TanakaBranch {
    pub lambda: f64,
    pub m_rep: f64,
    pub c_per_user: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Replica-symmetric large-system capacity for Gaussian noise.
///
/// `m_rep` is the replica overlap (not the spreading gain). When the two
/// starting points settle on different fixed points the headline is the one
/// with the smaller capacity and the other is kept in `second_branch`.
/// Only the headline capacity is clamped to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanakaSolution {
    pub lambda: f64,
    pub m_rep: f64,
    pub c_per_user: f64,
    pub iterations: usize,
    pub converged: bool,
    pub second_branch: Option<TanakaBranch>,
}

const TANAKA_DAMPING: f64 = 0.5;
const TANAKA_TOL: f64 = 1e-12;
const TANAKA_MAX_ITERS: usize = 10_000;
const TANAKA_HIGH_START: f64 = 1.0 - 1e-6;
const BRANCH_SEPARATION: f64 = 1e-6;

struct ReplicaSystem<'a> {
    beta: f64,
    sigma2: f64,
    rule: &'a GaussHermite,
}

impl ReplicaSystem<'_> {
    fn lambda(&self, m_rep: f64) -> f64 {
        1.0 / (self.sigma2 + self.beta * (1.0 - m_rep))
    }

    /// E tanh(√λ Z + λ)
    fn overlap(&self, lambda: f64) -> f64 {
        let s = lambda.sqrt();
        self.rule.expectation(|z| (s * z + lambda).tanh())
    }

    /// Per-user capacity in bits at overlap `m_rep`.
    fn capacity_bits(&self, m_rep: f64) -> f64 {
        let lambda = self.lambda(m_rep);
        let s = lambda.sqrt();
        let g = 0.5 * lambda * (1.0 + m_rep) - self.rule.expectation(|z| ln_cosh(s * z + lambda));
        let shannon_like = (self.beta * (1.0 - m_rep) / self.sigma2).ln_1p() / (2.0 * self.beta);
        (shannon_like + g) * LOG2_E
    }

    fn iterate(&self, start: f64) -> TanakaBranch {
        let mut m_rep = start;
        let mut converged = false;
        let mut iterations = 0;
        for k in 1..=TANAKA_MAX_ITERS {
            let next = (1.0 - TANAKA_DAMPING) * m_rep + TANAKA_DAMPING * self.overlap(self.lambda(m_rep));
            let delta = (next - m_rep).abs();
            m_rep = next;
            iterations = k;
            if delta < TANAKA_TOL {
                converged = true;
                break;
            }
        }
        TanakaBranch {
            lambda: self.lambda(m_rep),
            m_rep,
            c_per_user: self.capacity_bits(m_rep),
            iterations,
            converged,
        }
    }
}

/// Solves m = E tanh(√λ Z + λ), λ = 1/(σ² + β(1 − m)) by damped iteration
/// from m = 0 and m = 1 − 10⁻⁶, then evaluates the capacity at the fixed point.
pub fn tanaka_capacity(load: LoadPoint, sigma2: f64, cfg: &QuadratureConfig) -> Result<TanakaSolution> {
    let beta = load.require_beta()?;
    check_sigma2(sigma2)?;
    cfg.validate()?;
    let rule = GaussHermite::new(cfg.hermite_order)?;
    let system = ReplicaSystem {
        beta,
        sigma2,
        rule: &rule,
    };
    let low = system.iterate(0.0);
    let high = system.iterate(TANAKA_HIGH_START);
    // among several stable fixed points the thermodynamically relevant one
    // has the smaller free energy, which is the smaller capacity
    let (head, other) = match (low.converged, high.converged) {
        (true, true) if high.c_per_user < low.c_per_user => (high, Some(low)),
        (true, true) => (low, Some(high)),
        (true, false) => (low, None),
        (false, true) => (high, None),
        (false, false) => {
            return Err(Error::Convergence(format!(
                "replica fixed point for beta={beta}, sigma2={sigma2}: |dm| >= {TANAKA_TOL} after {TANAKA_MAX_ITERS} \
                 iterations from both starts (m = {} and {})",
                low.m_rep, high.m_rep
            )))
        }
    };
    let second_branch = other.filter(|b| (b.m_rep - head.m_rep).abs() > BRANCH_SEPARATION);
    Ok(TanakaSolution {
        lambda: head.lambda,
        m_rep: head.m_rep,
        c_per_user: head.c_per_user.clamp(0.0, 1.0),
        iterations: head.iterations,
        converged: head.converged,
        second_branch,
    })
}

/// Eb/N0 in dB at which the unclamped Gaussian upper limit at load `beta`
/// equals one bit per user.
pub fn upper_unit_crossing_db(beta: f64) -> Result<f64> {
    let cfg = QuadratureConfig::default();
    let load = LoadPoint::beta(beta)?;
    let excess = |db: f64| -> Result<f64> {
        let model = NoiseModel::from_ebn0(crate::noise::EbN0::new(db));
        Ok(asympt_upper_raw(load, &model, &cfg)? - 1.0)
    };
    let (mut lo, mut hi) = (-20.0, 40.0);
    if excess(lo)? > 0.0 || excess(hi)? < 0.0 {
        return Err(Error::domain("no unit crossing in [-20, 40] dB"));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::EbN0;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn beta(b: f64) -> LoadPoint {
        LoadPoint::beta(b).unwrap()
    }

    #[test]
    fn noiseless_limit_examples() {
        assert_eq!(noiseless_limit(0.25).unwrap(), 1.0);
        assert_eq!(noiseless_limit(0.5).unwrap(), 1.0);
        assert_eq!(noiseless_limit(1.0).unwrap(), 0.5);
        assert!(noiseless_limit(0.0).is_err());
        assert!(noiseless_limit(-2.0).is_err());
    }

    #[test]
    fn vanishing_gamma_bracket_gives_zero() {
        for (b, s2) in [(0.5, 0.1), (2.0, 1.0), (8.0, 0.02)] {
            let grid: Vec<f64> = (0..=2048).map(|i| i as f64 / 2048.0).collect();
            let (_, sup) = sup_over_t(|t| gaussian_saddle_bracket(t, 1e-12, b, s2), &grid, 40);
            assert!((sup - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saddle_lower_below_d1() {
        let search = SaddleSearch::default();
        for b in [0.5, 1.0, 2.0, 4.0, 8.0] {
            for s2 in [0.1, 0.5, 2.0] {
                let lower = asympt_lower_gaussian(beta(b), s2, &search).unwrap();
                let d1 = d1_approx(beta(b), s2, &search).unwrap();
                assert!(lower <= d1 + 1e-6, "beta={b} s2={s2}: {lower} > {d1}");
                assert!((0.0..=1.0).contains(&lower));
            }
        }
        let lower = asympt_lower_gaussian(beta(2.0), 0.25, &search).unwrap();
        assert!(d1_approx(beta(2.0), 0.25, &search).unwrap() >= lower);
    }

    #[test]
    fn d1_limits() {
        let search = SaddleSearch::default();
        assert!(d1_approx(beta(2.0), 1e9, &search).unwrap() < 1e-6);
        assert!(d1_approx(beta(1e9), 1.0, &search).unwrap() < 1e-6);
        assert!(d1_approx(LoadPoint::Zeta(1.0), 1.0, &search).is_err());
    }

    #[test]
    fn d1_close_at_high_snr() {
        let search = SaddleSearch::default();
        let s2 = EbN0::new(16.0).sigma2();
        let lower = asympt_lower_gaussian(beta(2.0), s2, &search).unwrap();
        let d1 = d1_approx(beta(2.0), s2, &search).unwrap();
        assert!((d1 - lower).abs() < 0.05);
    }

    #[test]
    fn asympt_upper_examples() {
        let cfg = QuadratureConfig::default();
        let g = |s2| NoiseModel::gaussian(s2).unwrap();
        assert_relative_eq!(asympt_upper(beta(1.0), &g(0.5), &cfg).unwrap(), 0.792_481_250_360_578_1, max_relative = 1e-14);
        assert_eq!(asympt_upper(beta(0.1), &g(0.05), &cfg).unwrap(), 1.0);
        let tiny = asympt_upper(beta(1e-6), &g(1.0), &cfg).unwrap();
        assert!((tiny - LOG2_E / 2.0).abs() < 1e-5);
        assert!(asympt_upper(beta(1.0), &NoiseModel::Noiseless, &cfg).is_err());
    }

    #[test]
    fn uniform_asympt_upper_behaves() {
        let cfg = QuadratureConfig::default();
        // a Gaussian of equal variance has the largest entropy
        let u = NoiseModel::uniform(3.0).unwrap();
        for b in [0.01, 0.5, 4.0] {
            let v = asympt_upper_raw(beta(b), &u, &cfg).unwrap();
            let cap = (0.5 * (2.0 * PI * std::f64::consts::E * (3.0 + b)).ln() - 6f64.ln()) / b * LOG2_E;
            assert!(v > 0.0 && v <= cap, "beta={b}: {v} vs {cap}");
        }
        // upper limit decreases with load
        let a = asympt_upper_raw(beta(0.5), &u, &cfg).unwrap();
        let b = asympt_upper_raw(beta(4.0), &u, &cfg).unwrap();
        assert!(a > b && b > 0.0);
    }

    #[test]
    fn tanaka_matches_reference_values() {
        // independent mpmath solution of the same fixed point
        let cfg = QuadratureConfig::default();
        let s = tanaka_capacity(beta(1.0), 0.5, &cfg).unwrap();
        assert!(s.converged);
        assert_relative_eq!(s.m_rep, 0.575_316_352_435_920_4, epsilon = 1e-8);
        assert_relative_eq!(s.lambda, 1.081_450_940_150_535_2, epsilon = 1e-8);
        assert_relative_eq!(s.c_per_user, 0.623_839_138_410_072_7, epsilon = 1e-8);
        let s = tanaka_capacity(beta(2.0), 0.1, &cfg).unwrap();
        assert_relative_eq!(s.c_per_user, 0.991_819_477_385_876_8, epsilon = 1e-8);
        assert!((s.lambda - 1.0 / (0.1 + 2.0 * (1.0 - s.m_rep))).abs() < 1e-10);
    }

    #[test]
    fn tanaka_first_iterate_and_low_snr_limit() {
        let cfg = QuadratureConfig::default();
        let rule = GaussHermite::new(cfg.hermite_order).unwrap();
        let sys = ReplicaSystem {
            beta: 3.0,
            sigma2: 0.7,
            rule: &rule,
        };
        assert_eq!(sys.lambda(0.0), 1.0 / (0.7 + 3.0));

        let s = tanaka_capacity(beta(1.0), 1e6, &cfg).unwrap();
        assert!(s.m_rep < 1e-3);
        let shannon = (1.0f64 / 1e6).ln_1p() / 2.0 * LOG2_E;
        assert!((s.c_per_user - shannon).abs() < 1e-6);
        assert!(s.m_rep >= 0.0 && s.m_rep < 1.0);
    }

    #[test]
    fn tanaka_coexisting_branches_keep_smaller_capacity() {
        let cfg = QuadratureConfig::default();
        for (b, db) in [(2.0, 8.0), (4.0, 16.0), (8.0, 8.0)] {
            let s = tanaka_capacity(beta(b), EbN0::new(db).sigma2(), &cfg).unwrap();
            let other = s.second_branch.expect("two stable fixed points");
            assert!((other.m_rep - s.m_rep).abs() > 1e-6);
            assert!(s.c_per_user <= other.c_per_user);
            assert!(s.c_per_user <= 1.0);
        }
        let s = tanaka_capacity(beta(2.0), EbN0::new(8.0).sigma2(), &cfg).unwrap();
        assert!(s.m_rep > 0.99);
        assert!(tanaka_capacity(beta(2.0), EbN0::new(4.0).sigma2(), &cfg).unwrap().second_branch.is_none());
    }

    #[test]
    fn tanaka_approaches_upper_with_load() {
        let cfg = QuadratureConfig::default();
        let model = NoiseModel::gaussian(0.25).unwrap();
        let mut prev_gap = f64::INFINITY;
        for b in [8.0, 32.0, 128.0] {
            let t = tanaka_capacity(beta(b), 0.25, &cfg).unwrap().c_per_user;
            let u = asympt_upper(beta(b), &model, &cfg).unwrap();
            let gap = (t / u - 1.0).abs();
            assert!(gap < prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap < 0.05);
    }

    #[test]
    fn unit_crossing_near_low_load_limit() {
        let db = upper_unit_crossing_db(1e-6).unwrap();
        assert!((db - (-1.593)).abs() < 0.01, "{db}");
    }

    #[test]
    fn search_validation() {
        let mut s = SaddleSearch::default();
        s.t_grid_size = 2;
        assert!(s.validate().is_err());
        assert!(LoadPoint::beta(0.0).is_err());
        assert!(LoadPoint::zeta(-1.0).is_err());
    }
}
