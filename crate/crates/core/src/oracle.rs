//! Brute-force and Monte Carlo ground truth for small systems.
//!
//! Independent of the bound formulas: the exhaustive oracle enumerates
//! signature matrices and inputs, the Monte Carlo oracle samples the channel.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finite_bounds::SystemSize;
use crate::noise::NoiseModel;
use crate::numerics::{binary_entropy, lse_slice, q_function};

/// Largest `n` accepted by [`output_entropy`].
pub const MAX_ENTROPY_USERS: usize = 24;
/// Largest `n` accepted by [`mc_mutual_information`].
pub const MAX_MC_USERS: usize = 16;
/// Largest `m·n` accepted by exhaustive enumeration.
pub const MAX_EXHAUSTIVE_ENTRIES: u64 = 20;
/// Default Monte Carlo sample budget.
pub const DEFAULT_MC_SAMPLES: u64 = 200_000;

/// An m×n matrix with ±1 entries, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignatureMatrix {
    m: usize,
    n: usize,
    entries: Vec<i8>,
}

impl SignatureMatrix {
    pub fn new(m: usize, n: usize, entries: Vec<i8>) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::domain("signature matrix needs m, n >= 1"));
        }
        if entries.len() != m * n {
            return Err(Error::domain(format!("expected {} entries, got {}", m * n, entries.len())));
        }
        if let Some(bad) = entries.iter().find(|&&e| e != 1 && e != -1) {
            return Err(Error::domain(format!("signature entries must be +1 or -1, got {bad}")));
        }
        Ok(Self { m, n, entries })
    }

    pub fn from_rows(rows: &[Vec<i8>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("ragged signature rows"));
        }
        Self::new(m, n, rows.concat())
    }

    /// Sylvester–Hadamard (Walsh) matrix of the given power-of-two order.
    pub fn walsh(order: usize) -> Result<Self> {
        if order == 0 || !order.is_power_of_two() {
            return Err(Error::domain(format!("Walsh order must be a power of two, got {order}")));
        }
        let entries = (0..order * order)
            .map(|k| {
                let (r, c) = (k / order, k % order);
                if (r & c).count_ones() % 2 == 0 {
                    1
                } else {
                    -1
                }
            })
            .collect();
        Self::new(order, order, entries)
    }

    /// Matrix whose entries are read from the low `m·n` bits of `bits`
    /// (bit set means −1), row-major.
    fn from_bits(m: usize, n: usize, bits: u64) -> Self {
        let entries = (0..m * n).map(|k| if bits >> k & 1 == 1 { -1 } else { 1 }).collect();
        Self { m, n, entries }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> i8 {
        self.entries[row * self.n + col]
    }

    pub fn row(&self, row: usize) -> &[i8] {
        &self.entries[row * self.n..(row + 1) * self.n]
    }

    /// Integer product `A x` for x given as a bitmask (bit set means +1).
    fn apply_mask(&self, mask: u64) -> Vec<i32> {
        (0..self.m)
            .map(|r| {
                self.row(r)
                    .iter()
                    .enumerate()
                    .map(|(c, &a)| if mask >> c & 1 == 1 { a as i32 } else { -(a as i32) })
                    .sum()
            })
            .collect()
    }
}

impl fmt::Display for SignatureMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} {}", self.m, self.n)?;
        for r in 0..self.m {
            let line: Vec<&str> = self.row(r).iter().map(|&e| if e == 1 { "+1" } else { "-1" }).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for SignatureMatrix {
    type Err = Error;

    /// Text format: a header line `m n`, then `m` lines of `n` entries,
    /// each one of `+1`, `-1`, `1`, `+`, `-`. Blank lines are skipped.
    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse("empty matrix file"))?;
        let dims: Vec<&str> = header.split_whitespace().collect();
        let parse_dim = |t: &str| t.parse::<usize>().map_err(|_| Error::parse(format!("bad dimension '{t}' in header")));
        let (m, n) = match dims.as_slice() {
            [m, n] => (parse_dim(m)?, parse_dim(n)?),
            _ => return Err(Error::parse("header must be 'm n'")),
        };
        let mut entries = Vec::with_capacity(m * n);
        let mut rows = 0;
        for (idx, line) in lines {
            let before = entries.len();
            for tok in line.split_whitespace() {
                entries.push(match tok {
                    "+1" | "1" | "+" => 1,
                    "-1" | "-" => -1,
                    other => return Err(Error::parse(format!("line {}: bad entry '{other}'", idx + 1))),
                });
            }
            if entries.len() - before != n {
                return Err(Error::parse(format!(
                    "line {}: expected {n} entries, got {}",
                    idx + 1,
                    entries.len() - before
                )));
            }
            rows += 1;
        }
        if rows != m {
            return Err(Error::parse(format!("expected {m} rows, got {rows}")));
        }
        Self::new(m, n, entries)
    }
}

/// Entropy in bits of a multiset given by its sorted keys.
fn entropy_of_sorted<K: PartialEq>(keys: &[K]) -> f64 {
    let total = keys.len() as f64;
    let mut acc = 0.0;
    let mut start = 0;
    for i in 1..=keys.len() {
        if i == keys.len() || keys[i] != keys[start] {
            let c = (i - start) as f64;
            acc += c * c.log2();
            start = i;
        }
    }
    total.log2() - acc / total
}

/// Noiseless output entropy H(AX) in bits for uniform ±1 inputs.
///
/// All 2^n inputs are visited in Gray-code order so each step updates the
/// integer output by one column.
pub fn output_entropy(a: &SignatureMatrix) -> Result<f64> {
    let (m, n) = (a.m, a.n);
    if n > MAX_ENTROPY_USERS {
        return Err(Error::Resource(format!("output entropy enumerates 2^n inputs; n = {n} exceeds {MAX_ENTROPY_USERS}")));
    }
    let radix = (2 * n + 1) as u128;
    let packable = (m as f64) * (radix as f64).log2() < 127.0;

    let mut y: Vec<i32> = a.apply_mask(0);
    let mut mask = 0u64;
    let step = |k: u64, y: &mut Vec<i32>, mask: &mut u64| {
        let j = k.trailing_zeros() as usize;
        *mask ^= 1 << j;
        let sign = if *mask >> j & 1 == 1 { 2 } else { -2 };
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += sign * a.get(r, j) as i32;
        }
    };
    let count = 1u64 << n;
    if packable {
        let pack = |y: &[i32]| y.iter().rev().fold(0u128, |acc, &v| acc * radix + (v + n as i32) as u128);
        let mut keys = Vec::with_capacity(count as usize);
        keys.push(pack(&y));
        for k in 1..count {
            step(k, &mut y, &mut mask);
            keys.push(pack(&y));
        }
        keys.sort_unstable();
        Ok(entropy_of_sorted(&keys))
    } else {
        let mut keys = Vec::with_capacity(count as usize);
        keys.push(y.clone());
        for k in 1..count {
            step(k, &mut y, &mut mask);
            keys.push(y.clone());
        }
        keys.sort_unstable();
        Ok(entropy_of_sorted(&keys))
    }
}

/// How [`exact_noiseless_capacity`] visits matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactMode {
    /// Every matrix with first row fixed to +1.
    Exhaustive,
    /// Every matrix, no symmetry reduction. Used to validate the reduction.
    Unreduced,
    /// `count` matrices drawn uniformly from a seeded stream.
    Sample { count: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiselessCapacity {
    /// Best output entropy found, bits.
    pub max: f64,
    /// Average output entropy over the visited matrices, bits.
    pub mean: f64,
    pub matrices: u64,
    /// A matrix attaining `max`; the first one in visiting order.
    pub argmax: SignatureMatrix,
    pub mode: ExactMode,
}

/// Max and mean of [`output_entropy`] over signature matrices of the given size.
///
/// Negating a column relabels the corresponding input, so exhaustive mode
/// fixes the first row to +1 and visits 2^((m−1)n) matrices.
pub fn exact_noiseless_capacity(size: SystemSize, mode: ExactMode) -> Result<NoiselessCapacity> {
    let (m, n) = (size.m as usize, size.n as usize);
    if n > MAX_ENTROPY_USERS {
        return Err(Error::Resource(format!("n = {n} exceeds {MAX_ENTROPY_USERS}")));
    }
    let entropies: Vec<(SignatureMatrix, f64)> = match mode {
        ExactMode::Exhaustive | ExactMode::Unreduced => {
            if size.m * size.n > MAX_EXHAUSTIVE_ENTRIES {
                return Err(Error::Resource(format!(
                    "exhaustive enumeration needs m*n <= {MAX_EXHAUSTIVE_ENTRIES}, got {}",
                    size.m * size.n
                )));
            }
            let (free_bits, offset) = match mode {
                ExactMode::Exhaustive => ((m - 1) * n, n),
                _ => (m * n, 0),
            };
            (0..1u64 << free_bits)
                .into_par_iter()
                .map(|bits| {
                    let a = SignatureMatrix::from_bits(m, n, bits << offset);
                    output_entropy(&a).map(|h| (a, h))
                })
                .collect::<Result<_>>()?
        }
        ExactMode::Sample { count, seed } => {
            if count == 0 {
                return Err(Error::domain("sample mode needs at least one matrix"));
            }
            (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut rng = stream_rng(seed, i);
                    let entries = (0..m * n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
                    let a = SignatureMatrix { m, n, entries };
                    output_entropy(&a).map(|h| (a, h))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut best = 0;
    let mut sum = 0.0;
    for (i, (_, h)) in entropies.iter().enumerate() {
        sum += h;
        if *h > entropies[best].1 {
            best = i;
        }
    }
    let matrices = entropies.len() as u64;
    let (argmax, max) = entropies.into_iter().nth(best).expect("at least one matrix");
    Ok(NoiselessCapacity {
        max,
        mean: sum / matrices as f64,
        matrices,
        argmax,
        mode,
    })
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl McEstimate {
    fn from_values(values: &[f64], seed: u64) -> Self {
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        Self {
            mean,
            std_error: (var / k).sqrt(),
            samples: values.len() as u64,
            seed,
        }
    }
}

/// Independent generator for draw `index` under `seed`: one ChaCha stream per draw.
fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Monte Carlo estimate of I(X; Y) in bits (total, not per user) for
/// `Y = A X / √m + N` with uniform ±1 inputs.
///
/// Each draw evaluates log₂ Σ_u f_N(A(X−u)/√m + N) / f_N(N) over all 2^n
/// hypotheses; the estimate is n minus the sample mean.
pub fn mc_mutual_information(a: &SignatureMatrix, model: &NoiseModel, samples: u64, seed: u64) -> Result<McEstimate> {
    let (m, n) = (a.m, a.n);
    if n > MAX_MC_USERS {
        return Err(Error::Resource(format!("Monte Carlo sums over 2^n hypotheses; n = {n} exceeds {MAX_MC_USERS}")));
    }
    if samples < 2 {
        return Err(Error::domain("Monte Carlo needs at least 2 samples"));
    }
    let draw_noise: Box<dyn Fn(&mut ChaCha8Rng) -> f64 + Sync> = match *model {
        NoiseModel::Gaussian { sigma2 } => {
            let sigma = sigma2.sqrt();
            Box::new(move |rng| sigma * rng.sample::<f64, _>(StandardNormal))
        }
        NoiseModel::Uniform { a: half } => Box::new(move |rng| rng.gen_range(-half..=half)),
        NoiseModel::Noiseless => {
            return Err(Error::Unsupported {
                model: model.to_string(),
                operation: "Monte Carlo mutual information",
            })
        }
    };

    let hypotheses = 1usize << n;
    let outputs: Vec<i32> = (0..hypotheses as u64).flat_map(|u| a.apply_mask(u)).collect();
    let scale = 1.0 / (m as f64).sqrt();

    let values: Vec<f64> = (0..samples)
        .into_par_iter()
        .map_init(
            || (vec![0.0; m], vec![0.0; hypotheses]),
            |(noise, terms), i| {
                let mut rng = stream_rng(seed, i);
                let x = (rng.gen::<u64>() & (hypotheses as u64 - 1)) as usize;
                for v in noise.iter_mut() {
                    *v = draw_noise(&mut rng);
                }
                let ax = &outputs[x * m..(x + 1) * m];
                match *model {
                    NoiseModel::Gaussian { sigma2 } => {
                        for (u, t) in terms.iter_mut().enumerate() {
                            let au = &outputs[u * m..(u + 1) * m];
                            let mut q = 0.0;
                            for r in 0..m {
                                let d = (ax[r] - au[r]) as f64 * scale;
                                q += d * (d + 2.0 * noise[r]);
                            }
                            *t = -q / (2.0 * sigma2);
                        }
                        lse_slice(terms) / std::f64::consts::LN_2
                    }
                    NoiseModel::Uniform { a: half } => {
                        let inside = (0..hypotheses)
                            .filter(|&u| {
                                let au = &outputs[u * m..(u + 1) * m];
                                (0..m).all(|r| ((ax[r] - au[r]) as f64 * scale + noise[r]).abs() <= half)
                            })
                            .count();
                        (inside as f64).log2()
                    }
                    NoiseModel::Noiseless => unreachable!("rejected above"),
                }
            },
        )
        .collect();

    let est = McEstimate::from_values(&values, seed);
    Ok(McEstimate {
        mean: n as f64 - est.mean,
        ..est
    })
}

/// Hard-decision single-user capacity 1 − H(Q(1/σ)) in bits per user.
pub fn bpsk_reference(sigma2: f64) -> Result<f64> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::domain(format!("sigma2 must be positive, got {sigma2}")));
    }
    Ok(1.0 - binary_entropy(q_function(1.0 / sigma2.sqrt()))?)
}
