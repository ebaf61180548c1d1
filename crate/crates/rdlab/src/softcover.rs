//! Exact soft-covering diagnostics at small blocklength.
//!
//! For a codebook of N codewords and a back channel K, the induced source
//! distribution is P(x^n) = (1/N) sum_m prod_t K(x_t | y_t(m)). At small n
//! this is enumerable exactly, which turns the soft-covering phase
//! transition (TV to the i.i.d. product vanishes iff the codebook rate
//! exceeds the mutual information) into a computable observable.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::codebook::Codebook;
use crate::encoder::{Encoder, EncoderMode};
use crate::error::{Budget, RdError, Result};
use crate::prob::{reverse_channel, total_variation, Channel, JointPmf, Pmf, Symbol};
use crate::stream::derive_stream;

/// |X|^n as u64, with a budget check that reports the largest feasible n.
fn enum_states(alphabet: usize, n: usize, budget: &Budget) -> Result<u64> {
    let mut states: u64 = 1;
    for _ in 0..n {
        states = states.checked_mul(alphabet as u64).unwrap_or(u64::MAX);
    }
    if states > budget.enum_states {
        let max_n = (budget.enum_states as f64).log(alphabet as f64).floor() as u64;
        return Err(RdError::Budget(format!(
            "enumerating {alphabet}^{n} source sequences exceeds the budget of {} states; \
             max feasible n for this alphabet is {max_n}",
            budget.enum_states
        )));
    }
    Ok(states)
}

/// n-fold product of a codeword's back-channel rows, row-major in x^n
/// (first symbol most significant).
fn word_product(word: &[Symbol], back: &Channel, alphabet: usize) -> Result<Vec<f64>> {
    let mut v = vec![1.0];
    for &y in word {
        let row = back.row(y as usize)?;
        let mut next = Vec::with_capacity(v.len() * alphabet);
        for &a in &v {
            for b in 0..alphabet {
                next.push(a * row.prob(b));
            }
        }
        v = next;
    }
    Ok(v)
}

/// n-fold i.i.d. product of a pmf, same enumeration order.
pub fn iid_product(p: &Pmf, n: usize, budget: &Budget) -> Result<Vec<f64>> {
    enum_states(p.len(), n, budget)?;
    let mut v = vec![1.0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(v.len() * p.len());
        for &a in &v {
            for b in 0..p.len() {
                next.push(a * p.prob(b));
            }
        }
        v = next;
    }
    Ok(v)
}

/// Exact distribution over X^n induced by a uniform codeword index pushed
/// through the memoryless back channel. Row-major in x^n.
pub fn induced_marginal(cb: &Codebook, back: &Channel, budget: &Budget) -> Result<Vec<f64>> {
    let alphabet = back.output_len();
    if back.input_len() != cb.marginal.len() {
        return Err(RdError::Dimension(format!(
            "back channel input alphabet {} vs codebook alphabet {}",
            back.input_len(),
            cb.marginal.len()
        )));
    }
    let states = enum_states(alphabet, cb.n, budget)? as usize;
    let num_words = cb.num_words();
    // partial sums per codeword chunk, combined in chunk order so the
    // result does not depend on thread scheduling
    let chunk = ((num_words as usize + 63) / 64).max(1);
    let flats: Vec<u64> = (0..num_words).collect();
    let partials: Vec<Result<Vec<f64>>> = flats
        .par_chunks(chunk)
        .map(|ms| {
            let mut acc = vec![0.0; states];
            for &m in ms {
                let v = word_product(cb.lookup_flat(m)?, back, alphabet)?;
                for (a, b) in acc.iter_mut().zip(&v) {
                    *a += b;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut out = vec![0.0; states];
    for p in partials {
        for (a, b) in out.iter_mut().zip(&p?) {
            *a += b;
        }
    }
    let scale = 1.0 / num_words as f64;
    for v in &mut out {
        *v *= scale;
    }
    let sum: f64 = out.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(RdError::InvalidDistribution(format!(
            "induced marginal sums to {sum}"
        )));
    }
    Ok(out)
}

/// TV between the induced marginal and the n-fold product of `target`.
pub fn tv_to_iid(cb: &Codebook, back: &Channel, target: &Pmf, budget: &Budget) -> Result<f64> {
    let induced = induced_marginal(cb, back, budget)?;
    let product = iid_product(target, cb.n, budget)?;
    total_variation(&induced, &product)
}

#[derive(Debug, Clone)]
pub struct TvCell {
    pub n: usize,
    pub rate: f64,
    pub tvs: Vec<f64>,
}

impl TvCell {
    pub fn mean(&self) -> f64 {
        self.tvs.iter().sum::<f64>() / self.tvs.len() as f64
    }
    pub fn min(&self) -> f64 {
        self.tvs.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    pub fn max(&self) -> f64 {
        self.tvs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-(n, R) exact TV statistics over independently drawn codebooks.
#[derive(Debug, Clone)]
pub struct TvSweepReport {
    pub cells: Vec<TvCell>,
    pub codebooks_per_cell: usize,
    pub seed: u64,
}

/// For each (R, n) pair, draw `codebooks_per_cell` codebooks from the Y
/// marginal of `joint` and compute the exact TV to the i.i.d. X product.
pub fn sweep(
    joint: &JointPmf,
    r_list: &[f64],
    n_list: &[usize],
    codebooks_per_cell: usize,
    seed: u64,
    budget: &Budget,
) -> Result<TvSweepReport> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension("sweep expects a two-variable joint".into()));
    }
    if codebooks_per_cell == 0 {
        return Err(RdError::Config("codebooks_per_cell must be >= 1".into()));
    }
    let target = joint.marginal_pmf(0)?;
    let y_marginal = joint.marginal_pmf(1)?;
    let back = reverse_channel(joint)?;
    let mut cells = Vec::new();
    for (cell_id, (&rate, &n)) in r_list
        .iter()
        .flat_map(|r| n_list.iter().map(move |n| (r, n)))
        .enumerate()
    {
        enum_states(target.len(), n, budget)?;
        let tvs: Vec<f64> = (0..codebooks_per_cell)
            .map(|i| {
                let mut rng = derive_stream(
                    seed,
                    "sweep-cb",
                    (cell_id * codebooks_per_cell + i) as u64,
                );
                let cb_seed = rng.gen::<u64>();
                let cb = Codebook::generate(&y_marginal, n, rate, None, cb_seed, budget)?;
                tv_to_iid(&cb, &back, &target, budget)
            })
            .collect::<Result<_>>()?;
        cells.push(TvCell { n, rate, tvs });
    }
    Ok(TvSweepReport {
        cells,
        codebooks_per_cell,
        seed,
    })
}

impl TvSweepReport {
    /// Per-codebook CSV: `n,R,codebook_id,tv`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,R,codebook_id,tv")?;
        for cell in &self.cells {
            for (i, tv) in cell.tvs.iter().enumerate() {
                writeln!(w, "{},{},{},{}", cell.n, cell.rate, i, tv)?;
            }
        }
        Ok(())
    }

    /// Aggregate CSV: `n,R,mean_tv,min_tv,max_tv`.
    pub fn write_aggregate_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n,R,mean_tv,min_tv,max_tv")?;
        for cell in &self.cells {
            writeln!(
                w,
                "{},{},{},{},{}",
                cell.n,
                cell.rate,
                cell.mean(),
                cell.min(),
                cell.max()
            )?;
        }
        Ok(())
    }
}

/// Exact TV between the joint law of (X^n, M) under the real system (source
/// times stochastic encoder) and under the idealized system (uniform index
/// times memoryless back channel). The decoder is a deterministic lookup in
/// both, so including Y^n changes nothing.
pub fn tv_induced_vs_idealized(
    cb: &Codebook,
    back: &Channel,
    source: &Pmf,
    budget: &Budget,
) -> Result<f64> {
    let alphabet = back.output_len();
    if source.len() != alphabet {
        return Err(RdError::Dimension(format!(
            "source alphabet {} vs back channel output alphabet {}",
            source.len(),
            alphabet
        )));
    }
    let states = enum_states(alphabet, cb.n, budget)? as usize;
    let num_words = cb.num_words();
    states
        .checked_mul(num_words as usize)
        .filter(|&s| s as u64 <= budget.enum_states)
        .ok_or_else(|| {
            RdError::Budget(format!(
                "enumerating {states} sequences x {num_words} indices exceeds the budget"
            ))
        })?;
    let source_product = iid_product(source, cb.n, budget)?;
    let enc = Encoder::new(cb, back, EncoderMode::Stochastic)?;
    let inv_words = 1.0 / num_words as f64;
    let mut dist = 0.0;
    let mut x_seq = vec![0 as Symbol; cb.n];
    for (xi, &px) in source_product.iter().enumerate() {
        // decode the row-major index back into symbols
        let mut rem = xi;
        for t in (0..cb.n).rev() {
            x_seq[t] = (rem % alphabet) as Symbol;
            rem /= alphabet;
        }
        let law = enc.conditional_law(&x_seq)?;
        for (m, &pm) in law.iter().enumerate() {
            let p = px * pm;
            let q = inv_words
                * word_product(cb.lookup_flat(m as u64)?, back, alphabet)?[xi];
            dist += (p - q).abs();
        }
    }
    Ok(0.5 * dist)
}
