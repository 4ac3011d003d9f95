//! Conditional null laws of the resampled sign statistic `sum_k w_k * delta_k`,
//! where the multipliers `delta_k` are +1 with probability `p` and -1
//! otherwise, independently of the data.
//!
//! A law can be materialised ([`NullLaw`]) or, on the inversion hot path,
//! queried only for its two tails at an observed sign pattern through a
//! [`NullEngine`]. Engines are selected by name from [`engine_names`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, Discrete};

use crate::error::MethodError;

/// Absolute tolerance used when comparing statistic values.
pub const TIE_TOL: f64 = 1e-12;

/// Largest K for which the exact engine is used by default.
pub const DEFAULT_EXACT_THRESHOLD: usize = 20;

pub const DEFAULT_RESAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NullKind {
    ExactEnumeration,
    BinomialLattice,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NullLaw {
    support: Vec<f64>,
    probs: Vec<f64>,
    kind: NullKind,
    n_resamples: Option<usize>,
    seed: Option<u64>,
}

impl NullLaw {
    /// Build a law from unsorted `(value, probability)` atoms, merging values
    /// that agree within [`TIE_TOL`].
    fn from_atoms(mut atoms: Vec<(f64, f64)>, kind: NullKind) -> NullLaw {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        let mut anchor = f64::NEG_INFINITY;
        for (v, pr) in atoms {
            if !support.is_empty() && v - anchor <= TIE_TOL {
                *probs.last_mut().unwrap() += pr;
            } else {
                anchor = v;
                support.push(v);
                probs.push(pr);
            }
        }
        NullLaw {
            support,
            probs,
            kind,
            n_resamples: None,
            seed: None,
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn kind(&self) -> NullKind {
        self.kind
    }

    pub fn n_resamples(&self) -> Option<usize> {
        self.n_resamples
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Probability of the atom closest to `t` (within tolerance), zero otherwise.
    pub fn prob_at(&self, t: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .filter(|(v, _)| (**v - t).abs() <= TIE_TOL)
            .map(|(_, p)| p)
            .sum()
    }

    /// Total-variation distance, atoms matched within [`TIE_TOL`].
    pub fn total_variation(&self, other: &NullLaw) -> f64 {
        let mut atoms: Vec<(f64, f64)> = self.support.iter().copied().zip(self.probs.iter().copied()).collect();
        atoms.extend(other.support.iter().copied().zip(other.probs.iter().map(|p| -p)));
        let merged = NullLaw::from_atoms(atoms, self.kind);
        0.5 * merged.probs.iter().map(|p| p.abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Le,
    Ge,
}

/// `Pr(T* <= t)` or `Pr(T* >= t)`, support compared at tolerance [`TIE_TOL`].
pub fn tail_prob(law: &NullLaw, t: f64, side: Side) -> f64 {
    let total: f64 = match side {
        Side::Le => law
            .support
            .iter()
            .zip(&law.probs)
            .filter(|(v, _)| **v <= t + TIE_TOL)
            .map(|(_, p)| p)
            .sum(),
        Side::Ge => law
            .support
            .iter()
            .zip(&law.probs)
            .filter(|(v, _)| **v >= t - TIE_TOL)
            .map(|(_, p)| p)
            .sum(),
    };
    total.min(1.0)
}

fn check_p(p: f64) -> Result<(), MethodError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(MethodError::InvalidArgument(format!("multiplier probability {p} outside [0, 1]")))
    }
}

/// Probabilities of `pop` positive signs out of `n`, indexed by `pop`.
fn pattern_probs(n: usize, p: f64) -> Vec<f64> {
    (0..=n)
        .map(|pop| p.powi(pop as i32) * (1.0 - p).powi((n - pop) as i32))
        .collect()
}

/// Signed sum over the low `n` bits of `mask`, summed in index order.
fn masked_sum(weights: &[f64], mask: u64) -> f64 {
    let mut s = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if mask >> j & 1 == 1 {
            s += w;
        } else {
            s -= w;
        }
    }
    s
}

/// Exact law by enumerating all `2^K` multiplier vectors.
pub fn null_exact(weights: &[f64], p: f64, threshold: usize) -> Result<NullLaw, MethodError> {
    let k = weights.len();
    if k > threshold || k > 30 {
        return Err(MethodError::ExactTooLarge { k, threshold });
    }
    check_p(p)?;
    let probs = pattern_probs(k, p);
    let atoms = (0..1u64 << k)
        .map(|mask| (masked_sum(weights, mask), probs[mask.count_ones() as usize]))
        .filter(|&(_, pr)| pr > 0.0)
        .collect();
    Ok(NullLaw::from_atoms(atoms, NullKind::ExactEnumeration))
}

/// Law of `2N - K` with `N ~ Binomial(K, p)`: the unit-weight lattice.
pub fn null_binomial(k: usize, p: f64) -> Result<NullLaw, MethodError> {
    if k == 0 {
        return Err(MethodError::InvalidArgument("K must be at least 1".into()));
    }
    check_p(p)?;
    let bin = Binomial::new(p, k as u64).map_err(|e| MethodError::InvalidArgument(e.to_string()))?;
    let atoms = (0..=k as u64)
        .map(|n| (2.0 * n as f64 - k as f64, bin.pmf(n)))
        .filter(|&(_, pr)| pr > 0.0)
        .collect();
    Ok(NullLaw::from_atoms(atoms, NullKind::BinomialLattice))
}

/// Matrix of +-1 multipliers, stored as packed bits (1 = +1).
///
/// Entries are generated row by row, column by column within a row, each
/// from one `f64` uniform of a single ChaCha8 stream seeded with `seed`:
/// the entry is +1 iff the uniform is below `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    p_bits: u64,
    seed: u64,
}

pub fn make_sign_matrix(cols: usize, p: f64, rows: usize, seed: u64) -> Result<SignMatrix, MethodError> {
    if rows == 0 {
        return Err(MethodError::InvalidArgument("n_resamples must be at least 1".into()));
    }
    check_p(p)?;
    let words_per_row = cols.div_ceil(64).max(1);
    let mut bits = vec![0u64; rows * words_per_row];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for r in 0..rows {
        let row = &mut bits[r * words_per_row..(r + 1) * words_per_row];
        for c in 0..cols {
            let u: f64 = rng.random();
            if u < p {
                row[c / 64] |= 1u64 << (c % 64);
            }
        }
    }
    Ok(SignMatrix {
        rows,
        cols,
        words_per_row,
        bits,
        p_bits: p.to_bits(),
        seed,
    })
}

impl SignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn p(&self) -> f64 {
        f64::from_bits(self.p_bits)
    }

    pub fn entry(&self, row: usize, col: usize) -> i8 {
        assert!(row < self.rows && col < self.cols);
        if self.bits[row * self.words_per_row + col / 64] >> (col % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    fn byte(row: &[u64], chunk: usize) -> usize {
        (row[chunk / 8] >> (8 * (chunk % 8)) & 0xff) as usize
    }
}

/// Per-byte lookup tables: entry `256 * c + b` is the signed weight sum over
/// columns `8c..8c+8` for bit pattern `b`.
struct ChunkTables {
    flat: Vec<f64>,
    n_chunks: usize,
}

impl ChunkTables {
    fn new(weights: &[f64]) -> Self {
        let mut flat = Vec::with_capacity(weights.len().div_ceil(8) * 256);
        for w in weights.chunks(8) {
            flat.extend((0..256u64).map(|b| masked_sum(w, b)));
        }
        ChunkTables {
            n_chunks: weights.len().div_ceil(8),
            flat,
        }
    }

    fn eval(&self, row: &[u64]) -> f64 {
        let mut s = 0.0;
        for c in 0..self.n_chunks {
            s += self.flat[256 * c + SignMatrix::byte(row, c)];
        }
        s
    }

    /// Same sum as [`eval`](Self::eval) for rows that fit in one word.
    #[inline]
    fn eval_word(&self, mut word: u64) -> f64 {
        let mut s = 0.0;
        for t in self.flat.chunks_exact(256) {
            s += t[(word & 0xff) as usize];
            word >>= 8;
        }
        s
    }
}

/// Encode an observed sign pattern as multiplier bits; ties (sign 0,
/// weight 0) are encoded as +1.
fn pattern_words(signs: &[i8]) -> Vec<u64> {
    let mut words = vec![0u64; signs.len().div_ceil(64).max(1)];
    for (k, &s) in signs.iter().enumerate() {
        if s >= 0 {
            words[k / 64] |= 1u64 << (k % 64);
        }
    }
    words
}

/// Empirical law of the row-wise weighted sums of `signs`.
pub fn null_mc(weights: &[f64], signs: &SignMatrix) -> Result<NullLaw, MethodError> {
    if weights.len() != signs.cols {
        return Err(MethodError::DimensionMismatch {
            weights: weights.len(),
            cols: signs.cols,
        });
    }
    let tables = ChunkTables::new(weights);
    let mass = 1.0 / signs.rows as f64;
    let atoms = signs
        .bits
        .chunks(signs.words_per_row)
        .map(|row| (tables.eval(row), mass))
        .collect();
    let mut law = NullLaw::from_atoms(atoms, NullKind::MonteCarlo);
    law.n_resamples = Some(signs.rows);
    law.seed = Some(signs.seed);
    Ok(law)
}

/// The two tails of a null law at an observed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tails {
    pub le: f64,
    pub ge: f64,
}

impl Tails {
    /// Equal-tail two-sided p-value: doubled smaller tail, capped at 1.
    pub fn two_sided(&self) -> f64 {
        (2.0 * self.le.min(self.ge)).min(1.0)
    }
}

/// A way of evaluating the conditional null of the weighted sign statistic.
pub trait NullEngine: Send + Sync {
    fn name(&self) -> &'static str;

    fn kind(&self) -> NullKind;

    /// Tails of `sum_k weights[k] * delta_k` at the observed value
    /// `sum_k weights[k] * signs[k]`.
    fn tails(&self, weights: &[f64], signs: &[i8]) -> Result<Tails, MethodError>;

    /// The full law for the given weights.
    fn law(&self, weights: &[f64]) -> Result<NullLaw, MethodError>;
}

/// Exact enumeration. Tail queries use a meet-in-the-middle split so that a
/// query costs `O(2^(K/2) * K)` instead of `O(2^K)`.
#[derive(Debug, Clone)]
pub struct ExactEngine {
    p: f64,
    threshold: usize,
}

impl ExactEngine {
    pub fn new(p: f64, threshold: usize) -> Result<Self, MethodError> {
        check_p(p)?;
        Ok(ExactEngine { p, threshold })
    }
}

struct HalfLaw {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl HalfLaw {
    fn enumerate(weights: &[f64], p: f64) -> HalfLaw {
        let n = weights.len();
        let pp = pattern_probs(n, p);
        let (values, probs) = (0..1u64 << n)
            .map(|m| (masked_sum(weights, m), pp[m.count_ones() as usize]))
            .unzip();
        HalfLaw { values, probs }
    }

    fn sorted(mut self) -> HalfLaw {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]));
        self.values = idx.iter().map(|&i| self.values[i]).collect();
        // cumulative from the left
        let mut acc = 0.0;
        self.probs = idx
            .iter()
            .map(|&i| {
                acc += self.probs[i];
                acc
            })
            .collect();
        self
    }
}

impl NullEngine for ExactEngine {
    fn name(&self) -> &'static str {
        "exact"
    }

    fn kind(&self) -> NullKind {
        NullKind::ExactEnumeration
    }

    fn tails(&self, weights: &[f64], signs: &[i8]) -> Result<Tails, MethodError> {
        let k = weights.len();
        if k != signs.len() {
            return Err(MethodError::DimensionMismatch {
                weights: k,
                cols: signs.len(),
            });
        }
        if k > self.threshold || k > 40 {
            return Err(MethodError::ExactTooLarge {
                k,
                threshold: self.threshold,
            });
        }
        let h = k / 2;
        let (wa, wb) = weights.split_at(h);
        let pat = pattern_words(signs)[0];
        let a_obs = masked_sum(wa, pat & ((1u64 << h) - 1));
        let b_obs = masked_sum(wb, pat >> h);
        let t = a_obs + b_obs;

        let a = HalfLaw::enumerate(wa, self.p);
        let b = HalfLaw::enumerate(wb, self.p).sorted();
        let total_b = *b.probs.last().unwrap();
        let mut le = 0.0;
        let mut ge = 0.0;
        for (&av, &ap) in a.values.iter().zip(&a.probs) {
            if ap == 0.0 {
                continue;
            }
            let hi = b.values.partition_point(|&bv| bv <= t - av + TIE_TOL);
            if hi > 0 {
                le += ap * b.probs[hi - 1];
            }
            let lo = b.values.partition_point(|&bv| bv < t - av - TIE_TOL);
            let below = if lo > 0 { b.probs[lo - 1] } else { 0.0 };
            ge += ap * (total_b - below);
        }
        Ok(Tails {
            le: le.min(1.0),
            ge: ge.min(1.0),
        })
    }

    fn law(&self, weights: &[f64]) -> Result<NullLaw, MethodError> {
        null_exact(weights, self.p, self.threshold)
    }
}

/// Monte Carlo evaluation against a fixed multiplier matrix. The same
/// matrix is reused for every query (common random numbers).
#[derive(Debug, Clone)]
pub struct MonteCarloEngine {
    matrix: SignMatrix,
}

impl MonteCarloEngine {
    pub fn new(matrix: SignMatrix) -> Self {
        MonteCarloEngine { matrix }
    }

    pub fn matrix(&self) -> &SignMatrix {
        &self.matrix
    }
}

impl NullEngine for MonteCarloEngine {
    fn name(&self) -> &'static str {
        "mc"
    }

    fn kind(&self) -> NullKind {
        NullKind::MonteCarlo
    }

    fn tails(&self, weights: &[f64], signs: &[i8]) -> Result<Tails, MethodError> {
        let m = &self.matrix;
        if weights.len() != m.cols || signs.len() != m.cols {
            return Err(MethodError::DimensionMismatch {
                weights: weights.len(),
                cols: m.cols,
            });
        }
        let tables = ChunkTables::new(weights);
        let t = tables.eval(&pattern_words(signs));
        let (mut le, mut ge) = (0usize, 0usize);
        let (lo, hi) = (t - TIE_TOL, t + TIE_TOL);
        if m.words_per_row == 1 {
            for &word in &m.bits {
                let v = tables.eval_word(word);
                le += usize::from(v <= hi);
                ge += usize::from(v >= lo);
            }
        } else {
            for row in m.bits.chunks(m.words_per_row) {
                let v = tables.eval(row);
                le += usize::from(v <= hi);
                ge += usize::from(v >= lo);
            }
        }
        let n = m.rows as f64;
        Ok(Tails {
            le: le as f64 / n,
            ge: ge as f64 / n,
        })
    }

    fn law(&self, weights: &[f64]) -> Result<NullLaw, MethodError> {
        null_mc(weights, &self.matrix)
    }
}

/// Settings for choosing and building a null engine.
#[derive(Debug, Clone, PartialEq)]
pub struct NullConfig {
    /// `auto`, `exact` or `mc`.
    pub engine: String,
    pub exact_threshold: usize,
    pub n_resamples: usize,
    pub seed: u64,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            engine: "auto".into(),
            exact_threshold: DEFAULT_EXACT_THRESHOLD,
            n_resamples: DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

type EngineFactory = fn(usize, f64, &NullConfig) -> Result<Box<dyn NullEngine>, MethodError>;

fn build_exact(_k: usize, p: f64, cfg: &NullConfig) -> Result<Box<dyn NullEngine>, MethodError> {
    Ok(Box::new(ExactEngine::new(p, cfg.exact_threshold)?))
}

fn build_mc(k: usize, p: f64, cfg: &NullConfig) -> Result<Box<dyn NullEngine>, MethodError> {
    Ok(Box::new(MonteCarloEngine::new(make_sign_matrix(
        k,
        p,
        cfg.n_resamples,
        cfg.seed,
    )?)))
}

fn build_auto(k: usize, p: f64, cfg: &NullConfig) -> Result<Box<dyn NullEngine>, MethodError> {
    if k <= cfg.exact_threshold {
        build_exact(k, p, cfg)
    } else {
        build_mc(k, p, cfg)
    }
}

const ENGINES: &[(&str, EngineFactory)] = &[("auto", build_auto), ("exact", build_exact), ("mc", build_mc)];

pub fn engine_names() -> impl Iterator<Item = &'static str> {
    ENGINES.iter().map(|(n, _)| *n)
}

/// Build the engine registered under `cfg.engine` for `k` studies and
/// multiplier probability `p`.
pub fn build_engine(k: usize, p: f64, cfg: &NullConfig) -> Result<Box<dyn NullEngine>, MethodError> {
    let (_, factory) = ENGINES
        .iter()
        .find(|(n, _)| *n == cfg.engine)
        .ok_or_else(|| MethodError::InvalidArgument(format!("unknown null engine `{}`", cfg.engine)))?;
    factory(k, p, cfg)
}
