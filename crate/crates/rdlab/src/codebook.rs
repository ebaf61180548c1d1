//! Random codebook generation and lookup.
//!
//! Codewords are drawn i.i.d. from a marginal and materialized up to a
//! memory budget; generation above the budget fails loudly. Symbols come
//! from per-codeword counter streams so regeneration from (seed, n, rates,
//! marginal) is bit-identical and parallelizable.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Budget, RdError, Result};
use crate::prob::{Pmf, Symbol};
use crate::stream::derive_stream;

/// floor(2^{nR}), clamped below at 1; errors when the count overflows u64.
pub fn index_count(n: usize, rate: f64) -> Result<u64> {
    let bits = n as f64 * rate;
    if bits >= 62.0 {
        return Err(RdError::SizeOverflow {
            requested: bits,
            max_feasible: 62,
        });
    }
    // allow tiny fp slack so e.g. 10 * 0.5 lands on exactly 32 words
    let count = (bits.exp2() * (1.0 + 1e-12)).floor() as u64;
    Ok(count.max(1))
}

/// Indexed list of n-length codewords drawn i.i.d. from a marginal.
///
/// Double-indexed codebooks carry `num_secondary > 1`; the flat index of
/// codeword (m, a) is `m * num_secondary + a`.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub n: usize,
    pub rate: f64,
    pub rate2: Option<f64>,
    pub num_primary: u64,
    pub num_secondary: u64,
    pub marginal: Pmf,
    pub seed: u64,
    words: Vec<Symbol>,
}

impl Codebook {
    /// Generate floor(2^{nR}) (times floor(2^{nR'}) when `rate2` is given)
    /// codewords, each symbol drawn i.i.d. from `marginal`.
    pub fn generate(
        marginal: &Pmf,
        n: usize,
        rate: f64,
        rate2: Option<f64>,
        seed: u64,
        budget: &Budget,
    ) -> Result<Self> {
        if n == 0 {
            return Err(RdError::Dimension("codebook blocklength must be >= 1".into()));
        }
        if rate < 0.0 || rate2.map_or(false, |r| r < 0.0) {
            return Err(RdError::Config("codebook rates must be >= 0".into()));
        }
        let num_primary = index_count(n, rate)?;
        let num_secondary = match rate2 {
            Some(r2) => index_count(n, r2)?,
            None => 1,
        };
        let total = num_primary
            .checked_mul(num_secondary)
            .ok_or(RdError::SizeOverflow {
                requested: n as f64 * (rate + rate2.unwrap_or(0.0)),
                max_feasible: 62,
            })?;
        let symbols = total.checked_mul(n as u64).ok_or_else(|| {
            RdError::Budget(format!("codebook of {total} words x {n} symbols overflows"))
        })?;
        if symbols > budget.codebook_symbols {
            return Err(RdError::Budget(format!(
                "codebook needs {symbols} symbols, budget is {}",
                budget.codebook_symbols
            )));
        }
        let mut words = vec![0 as Symbol; symbols as usize];
        words
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(m, chunk)| {
                let mut rng = derive_stream(seed, "codebook", m as u64);
                for s in chunk.iter_mut() {
                    *s = marginal.sample(&mut rng) as Symbol;
                }
            });
        Ok(Codebook {
            n,
            rate,
            rate2,
            num_primary,
            num_secondary,
            marginal: marginal.clone(),
            seed,
            words,
        })
    }

    pub fn num_words(&self) -> u64 {
        self.num_primary * self.num_secondary
    }

    fn word(&self, flat: u64) -> &[Symbol] {
        let start = flat as usize * self.n;
        &self.words[start..start + self.n]
    }

    /// Codeword for a single index (single-indexed codebooks only).
    pub fn lookup(&self, m: u64) -> Result<&[Symbol]> {
        if self.num_secondary != 1 {
            return Err(RdError::IndexOutOfRange(
                "single-index lookup on a double-indexed codebook".into(),
            ));
        }
        if m >= self.num_primary {
            return Err(RdError::IndexOutOfRange(format!(
                "index {m} out of {}",
                self.num_primary
            )));
        }
        Ok(self.word(m))
    }

    /// Codeword for a flat index (valid for both variants).
    pub fn lookup_flat(&self, flat: u64) -> Result<&[Symbol]> {
        if flat >= self.num_words() {
            return Err(RdError::IndexOutOfRange(format!(
                "flat index {flat} out of {}",
                self.num_words()
            )));
        }
        Ok(self.word(flat))
    }

    /// Codeword for a double index (m, a).
    pub fn lookup2(&self, m: u64, a: u64) -> Result<&[Symbol]> {
        if m >= self.num_primary || a >= self.num_secondary {
            return Err(RdError::IndexOutOfRange(format!(
                "index ({m},{a}) out of ({},{})",
                self.num_primary, self.num_secondary
            )));
        }
        Ok(self.word(m * self.num_secondary + a))
    }

    /// View over the codewords {(m, a)}_a sharing first index m.
    pub fn sub_codebook(&self, m: u64) -> Result<SubCodebook<'_>> {
        if m >= self.num_primary {
            return Err(RdError::IndexOutOfRange(format!(
                "sub-codebook index {m} out of {}",
                self.num_primary
            )));
        }
        Ok(SubCodebook { cb: self, m })
    }

    /// Debug/reproducibility dump: header `n,R[,R'],seed,alphabet` then one
    /// codeword per line as comma-separated symbol indices.
    pub fn dump<W: Write>(&self, mut w: W) -> Result<()> {
        match self.rate2 {
            Some(r2) => writeln!(
                w,
                "{},{},{},{},{}",
                self.n,
                self.rate,
                r2,
                self.seed,
                self.marginal.len()
            )?,
            None => writeln!(
                w,
                "{},{},{},{}",
                self.n,
                self.rate,
                self.seed,
                self.marginal.len()
            )?,
        }
        for flat in 0..self.num_words() {
            let line: Vec<String> = self.word(flat).iter().map(|s| s.to_string()).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Non-owning view over the codewords of a fixed first index.
#[derive(Debug, Clone, Copy)]
pub struct SubCodebook<'a> {
    cb: &'a Codebook,
    m: u64,
}

impl<'a> SubCodebook<'a> {
    pub fn len(&self) -> u64 {
        self.cb.num_secondary
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn word(&self, a: u64) -> &'a [Symbol] {
        self.cb.word(self.m * self.cb.num_secondary + a)
    }

    pub fn iter(&self) -> impl Iterator<Item = &'a [Symbol]> + '_ {
        (0..self.len()).map(move |a| self.word(a))
    }
}
