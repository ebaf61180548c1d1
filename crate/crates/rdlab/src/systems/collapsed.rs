//! Collapsed-codebook sampling for blocklengths where floor(2^{nR})
//! codewords cannot be materialized.
//!
//! Everything the likelihood encoder and the ML decoder do depends on a
//! codeword only through its conditional type relative to a cell partition
//! of the time indices (cells = source-symbol values for the encoder,
//! observation values for the decoder). Codewords are i.i.d., so the number
//! of codewords with conditional type T is Binomial(N, p_T), which we
//! Poissonize: counts with mean above `DETERMINISTIC_LAMBDA` are replaced
//! by their mean, tiny means below `SKIP_LAMBDA` are dropped, the rest are
//! sampled. The encoder then picks a type with probability proportional to
//! count x weight, and within a cell the arrangement of symbols is
//! exchangeable, so refinements to finer cell structures are exact
//! hypergeometric splits.
//!
//! The approximations (Poissonization, deterministic large counts, dropped
//! 1e-18 tails) are far below every statistical tolerance used here; note
//! that a fresh codebook is implicitly drawn per trial, so reported
//! statistics are codebook-averaged.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric, Poisson};

use crate::error::{Budget, RdError, Result};
use crate::prob::Pmf;

/// Above this expected count a type's occupancy is treated as deterministic.
const DETERMINISTIC_LAMBDA: f64 = 1e6;
/// Below this expected count a type is treated as unoccupied.
const SKIP_LAMBDA: f64 = 1e-18;
/// Score ties in the decode competition are resolved within this tolerance.
const TIE_TOL: f64 = 1e-9;

/// ln Gamma via Stirling's series with shift (accurate to ~1e-13 here).
fn ln_gamma(x: f64) -> f64 {
    // shift x up by 7 for the asymptotic series, then divide back down
    let mut x = x;
    let mut shift = 0.0;
    while x < 7.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv / 12.0 - inv * inv2 / 360.0 + inv * inv2 * inv2 / 1260.0
        - inv * inv2 * inv2 * inv2 / 1680.0;
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

/// log2 of the multinomial coefficient (sum c)! / prod c!.
fn log2_multinomial(counts: &[u32]) -> f64 {
    let total: u32 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let mut v = ln_gamma(total as f64 + 1.0);
    for &c in counts {
        if c > 0 {
            v -= ln_gamma(c as f64 + 1.0);
        }
    }
    v / std::f64::consts::LN_2
}

/// Multinomial counts by sequential binomial thinning.
pub fn multinomial_counts<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let k = probs.len();
    let mut out = vec![0u64; k];
    let mut remaining = n;
    let mut mass_left = 1.0;
    for i in 0..k {
        if remaining == 0 {
            break;
        }
        if i == k - 1 {
            out[i] = remaining;
            break;
        }
        let p = (probs[i] / mass_left).clamp(0.0, 1.0);
        let draw = if p >= 1.0 {
            remaining
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining, p).expect("valid binomial").sample(rng)
        };
        out[i] = draw;
        remaining -= draw;
        mass_left -= probs[i];
        if mass_left <= 0.0 {
            break;
        }
    }
    out
}

/// One composition of a cell's size over the codeword alphabet, with its
/// log2 probability under the i.i.d. marginal and its log2 encoder weight.
#[derive(Debug, Clone)]
struct Comp {
    counts: Vec<u32>,
    log2_p: f64,
    log2_w: f64,
}

fn enumerate_comps(size: u64, log2_marginal: &[f64], log2_weight: &[f64]) -> Vec<Comp> {
    let k = log2_marginal.len();
    let mut out = Vec::new();
    let mut counts = vec![0u32; k];
    fn rec(
        b: usize,
        left: u64,
        counts: &mut Vec<u32>,
        k: usize,
        out: &mut Vec<Vec<u32>>,
    ) {
        if b == k - 1 {
            counts[b] = left as u32;
            out.push(counts.clone());
            return;
        }
        for c in 0..=left {
            counts[b] = c as u32;
            rec(b + 1, left - c, counts, k, out);
        }
    }
    let mut raw = Vec::new();
    rec(0, size, &mut counts, k, &mut raw);
    for counts in raw {
        let mut log2_p = log2_multinomial(&counts);
        let mut log2_w = 0.0;
        for b in 0..k {
            if counts[b] > 0 {
                if log2_marginal[b] == f64::NEG_INFINITY {
                    log2_p = f64::NEG_INFINITY;
                } else {
                    log2_p += counts[b] as f64 * log2_marginal[b];
                }
                if log2_weight[b] == f64::NEG_INFINITY {
                    log2_w = f64::NEG_INFINITY;
                } else {
                    log2_w += counts[b] as f64 * log2_weight[b];
                }
            }
        }
        out.push(Comp { counts, log2_p, log2_w });
    }
    out
}

/// Per-cell composition tables for a cell partition.
struct TypeTable {
    comps: Vec<Vec<Comp>>,
}

impl TypeTable {
    fn build(
        cell_sizes: &[u64],
        log2_marginal: &[f64],
        log2_weight: &[Vec<f64>],
        budget: &Budget,
    ) -> Result<Self> {
        let mut comps = Vec::with_capacity(cell_sizes.len());
        let mut total: u64 = 1;
        for (i, &size) in cell_sizes.iter().enumerate() {
            let cell = enumerate_comps(size, log2_marginal, &log2_weight[i]);
            total = total.saturating_mul(cell.len() as u64);
            if total > budget.type_classes {
                return Err(RdError::Budget(format!(
                    "conditional type enumeration needs more than {} classes",
                    budget.type_classes
                )));
            }
            comps.push(cell);
        }
        Ok(TypeTable { comps })
    }

    /// Decode a flat type index into per-cell composition indices.
    fn unflatten(&self, mut flat: u64) -> Vec<usize> {
        let mut idx = vec![0usize; self.comps.len()];
        for i in (0..self.comps.len()).rev() {
            let len = self.comps[i].len() as u64;
            idx[i] = (flat % len) as usize;
            flat /= len;
        }
        idx
    }

    fn counts_of(&self, idx: &[usize]) -> Vec<Vec<u32>> {
        idx.iter()
            .enumerate()
            .map(|(i, &j)| self.comps[i][j].counts.clone())
            .collect()
    }

    /// Visit every type as (flat index, log2 p, log2 w).
    fn for_each(&self, mut f: impl FnMut(u64, f64, f64)) {
        let cells = self.comps.len();
        let mut idx = vec![0usize; cells];
        let mut flat = 0u64;
        loop {
            let mut log2_p = 0.0;
            let mut log2_w = 0.0;
            for (i, &j) in idx.iter().enumerate() {
                log2_p += self.comps[i][j].log2_p;
                log2_w += self.comps[i][j].log2_w;
            }
            f(flat, log2_p, log2_w);
            flat += 1;
            // odometer increment, last cell fastest
            let mut i = cells;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                idx[i] += 1;
                if idx[i] < self.comps[i].len() {
                    break;
                }
                idx[i] = 0;
            }
        }
    }
}

fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

/// Categorical draw by exact log-sum-exp normalization over (key, log2
/// weight) entries; entries must be non-empty.
fn log_categorical<R: Rng + ?Sized>(entries: &[(u64, f64)], rng: &mut R) -> u64 {
    let max = entries
        .iter()
        .map(|&(_, w)| w)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = entries.iter().map(|&(_, w)| (w - max).exp2()).sum();
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    for &(key, w) in entries {
        acc += (w - max).exp2();
        if u < acc {
            return key;
        }
    }
    entries.last().unwrap().0
}

/// Select the conditional type of the codeword the likelihood encoder picks
/// from an implicit codebook of 2^{log2_words} i.i.d. words.
///
/// Cells partition the time indices (sizes given); `log2_weight[cell][b]` is
/// the per-occurrence log2 encoder weight of codeword symbol b in that cell.
/// Returns per-cell symbol counts plus a degeneracy flag (true when no
/// occupied type had positive weight and the index fell back to uniform).
pub fn select_type<R: Rng + ?Sized>(
    cell_sizes: &[u64],
    marginal: &Pmf,
    log2_weight: &[Vec<f64>],
    log2_words: f64,
    budget: &Budget,
    rng: &mut R,
) -> Result<(Vec<Vec<u32>>, bool)> {
    let log2_marginal: Vec<f64> = marginal.as_slice().iter().map(|p| p.log2()).collect();
    let table = TypeTable::build(cell_sizes, &log2_marginal, log2_weight, budget)?;
    let mut occupied: Vec<(u64, f64)> = Vec::new();
    let mut feasible: Vec<(u64, f64)> = Vec::new();
    table.for_each(|flat, log2_p, log2_w| {
        if log2_p == f64::NEG_INFINITY {
            return;
        }
        let log2_lambda = log2_words + log2_p;
        feasible.push((flat, log2_lambda));
        let log2_count = if log2_lambda >= DETERMINISTIC_LAMBDA.log2() {
            log2_lambda
        } else {
            let lambda = log2_lambda.exp2();
            if lambda < SKIP_LAMBDA {
                return;
            }
            let m = sample_poisson(lambda, rng);
            if m == 0 {
                return;
            }
            (m as f64).log2()
        };
        if log2_w > f64::NEG_INFINITY {
            occupied.push((flat, log2_count + log2_w));
        }
    });
    if !occupied.is_empty() {
        let flat = log_categorical(&occupied, rng);
        return Ok((table.counts_of(&table.unflatten(flat)), false));
    }
    // every occupied type had zero weight: the encoder falls back to a
    // uniform index, i.e. a type drawn proportional to its expected count
    if feasible.is_empty() {
        return Err(RdError::InvalidDistribution(
            "no feasible codeword type".into(),
        ));
    }
    let flat = log_categorical(&feasible, rng);
    Ok((table.counts_of(&table.unflatten(flat)), true))
}

/// Multivariate hypergeometric draw of `sample` items from `counts`.
fn mv_hypergeometric<R: Rng + ?Sized>(
    counts: &[u32],
    total: u64,
    sample: u64,
    rng: &mut R,
) -> Vec<u32> {
    let k = counts.len();
    let mut out = vec![0u32; k];
    let mut pool = total;
    let mut left = sample;
    for b in 0..k {
        if left == 0 {
            break;
        }
        let kb = counts[b] as u64;
        let take = if b == k - 1 || pool == kb {
            left.min(kb)
        } else if kb == 0 {
            0
        } else {
            Hypergeometric::new(pool, kb, left)
                .expect("valid hypergeometric")
                .sample(rng)
        };
        out[b] = take as u32;
        left -= take;
        pool -= kb;
    }
    out
}

/// Split one cell's symbol counts over subcells of the given sizes. The
/// arrangement of symbols within the cell is exchangeable, so the split is
/// multivariate hypergeometric.
pub fn split_composition<R: Rng + ?Sized>(
    comp: &[u32],
    subcell_sizes: &[u64],
    rng: &mut R,
) -> Result<Vec<Vec<u32>>> {
    let total: u64 = comp.iter().map(|&c| c as u64).sum();
    if subcell_sizes.iter().sum::<u64>() != total {
        return Err(RdError::Dimension(format!(
            "split_composition: subcell sizes sum {} vs cell size {total}",
            subcell_sizes.iter().sum::<u64>()
        )));
    }
    let mut remaining: Vec<u32> = comp.to_vec();
    let mut pool = total;
    let mut out = Vec::with_capacity(subcell_sizes.len());
    for (i, &s) in subcell_sizes.iter().enumerate() {
        if i == subcell_sizes.len() - 1 {
            out.push(remaining.clone());
            break;
        }
        let draw = mv_hypergeometric(&remaining, pool, s, rng);
        for (r, d) in remaining.iter_mut().zip(&draw) {
            *r -= d;
        }
        pool -= s;
        out.push(draw);
    }
    Ok(out)
}

/// Outcome of the ML decode competition against the implicit sub-codebook.
pub enum DecodeOutcome {
    Correct,
    /// The decoder picked a competitor; its conditional type over the
    /// observation cells is returned.
    Wrong(Vec<Vec<u32>>),
}

/// Score of a conditional type under per-(cell, symbol) log2 scores.
fn type_score(counts: &[Vec<u32>], log2_score: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (cell, comp) in counts.iter().enumerate() {
        for (b, &c) in comp.iter().enumerate() {
            if c > 0 {
                if log2_score[cell][b] == f64::NEG_INFINITY {
                    return f64::NEG_INFINITY;
                }
                s += c as f64 * log2_score[cell][b];
            }
        }
    }
    s
}

/// Run the ML decode competition: the true codeword (conditional type
/// `true_type` over the observation cells) against 2^{log2_competitors}
/// i.i.d. codewords. Ties break uniformly by index position, which is
/// exchangeable here.
pub fn decode_competition<R: Rng + ?Sized>(
    obs_cell_sizes: &[u64],
    marginal: &Pmf,
    log2_score: &[Vec<f64>],
    true_type: &[Vec<u32>],
    log2_competitors: Option<f64>,
    budget: &Budget,
    rng: &mut R,
) -> Result<DecodeOutcome> {
    let log2_comp = match log2_competitors {
        None => return Ok(DecodeOutcome::Correct),
        Some(v) => v,
    };
    let sigma_star = type_score(true_type, log2_score);
    let log2_marginal: Vec<f64> = marginal.as_slice().iter().map(|p| p.log2()).collect();
    // per-cell weight table is the score table here (only used to carry the
    // per-composition score through the shared enumeration)
    let table = TypeTable::build(obs_cell_sizes, &log2_marginal, log2_score, budget)?;
    let mut above: Vec<(u64, f64, f64)> = Vec::new(); // (flat, log2_q, score)
    let mut ties: Vec<(u64, f64)> = Vec::new();
    let mut log2_q_above = f64::NEG_INFINITY;
    let mut log2_q_tie = f64::NEG_INFINITY;
    table.for_each(|flat, log2_q, score| {
        if log2_q == f64::NEG_INFINITY {
            return;
        }
        if score > sigma_star + TIE_TOL {
            above.push((flat, log2_q, score));
            log2_q_above = log2_add(log2_q_above, log2_q);
        } else if sigma_star.is_finite() && (score - sigma_star).abs() <= TIE_TOL {
            ties.push((flat, log2_q));
            log2_q_tie = log2_add(log2_q_tie, log2_q);
        }
    });

    let k_above = sample_count(log2_comp + log2_q_above, rng);
    if k_above > 0.0 {
        // the decoded word is the best of k_above i.i.d. draws over `above`
        above.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
        let flat = sample_max_type(&above, log2_q_above, k_above, rng);
        return Ok(DecodeOutcome::Wrong(table.counts_of(&table.unflatten(flat))));
    }
    let k_tie = sample_count(log2_comp + log2_q_tie, rng);
    if k_tie > 0.0 {
        // true codeword survives a (k+1)-way uniform tie with prob 1/(k+1)
        if rng.gen::<f64>() < 1.0 / (1.0 + k_tie) {
            return Ok(DecodeOutcome::Correct);
        }
        let flat = log_categorical(&ties, rng);
        return Ok(DecodeOutcome::Wrong(table.counts_of(&table.unflatten(flat))));
    }
    Ok(DecodeOutcome::Correct)
}

fn log2_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp2() + (b - m).exp2()).log2()
}

/// Number of competitors in a score class with total log2 mean `log2_lambda`:
/// Poisson below the deterministic threshold, the mean itself above it.
fn sample_count<R: Rng + ?Sized>(log2_lambda: f64, rng: &mut R) -> f64 {
    if log2_lambda == f64::NEG_INFINITY || log2_lambda < SKIP_LAMBDA.log2() {
        return 0.0;
    }
    if log2_lambda >= DETERMINISTIC_LAMBDA.log2() {
        return log2_lambda.exp2();
    }
    sample_poisson(log2_lambda.exp2(), rng) as f64
}

/// Sample the type of the maximum-score draw among `k` i.i.d. draws over the
/// descending-sorted `(flat, log2_q, score)` entries.
fn sample_max_type<R: Rng + ?Sized>(
    sorted: &[(u64, f64, f64)],
    log2_q_total: f64,
    k: f64,
    rng: &mut R,
) -> u64 {
    // group entries into score levels; P(max within first i levels) =
    // 1 - (1 - c_i)^k where c_i is the cumulative q-fraction
    let u: f64 = rng.gen();
    let mut i = 0;
    let mut log2_c = f64::NEG_INFINITY;
    while i < sorted.len() {
        let level_score = sorted[i].2;
        let start = i;
        let mut log2_level = f64::NEG_INFINITY;
        while i < sorted.len() && (sorted[i].2 - level_score).abs() <= TIE_TOL {
            log2_level = log2_add(log2_level, sorted[i].1);
            i += 1;
        }
        log2_c = log2_add(log2_c, log2_level);
        let frac = (log2_c - log2_q_total).exp2().min(1.0);
        let p_within = 1.0 - (k * (1.0 - frac).max(0.0).ln()).exp();
        if u < p_within || i == sorted.len() {
            let level: Vec<(u64, f64)> =
                sorted[start..i].iter().map(|&(f, q, _)| (f, q)).collect();
            return log_categorical(&level, rng);
        }
    }
    sorted.last().unwrap().0
}
