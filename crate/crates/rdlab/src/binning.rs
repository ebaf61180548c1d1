//! Random-binning comparison system: the proportional-probability encoder
//! (PPE) with a max-probability reconstruction decoder, plus the exact
//! binning TV diagnostic.
//!
//! The codebook is an explicit table over all |Y|^n sequences: membership
//! in C with probability 2^{-nR'}, and a uniform bin index in
//! {0, ..., floor(2^{nR}) - 1}. Full enumeration keeps every weight exact,
//! which caps n near 20 for binary alphabets; that is the operating
//! envelope of this module.

use std::io::Write;

use rand::Rng;

use crate::codebook::index_count;
use crate::distortion::{DistortionMeasure, SourceModel};
use crate::encoder::log_sum_exp2;
use crate::error::{Budget, RdError, Result};
use crate::prob::{compose, conditional_entropy, Channel, JointPmf, Pmf, Symbol};
use crate::stream::derive_stream;
use crate::systems::{CodebookMode, SystemReport};

fn binning_states(alphabet: usize, n: usize, budget: &Budget) -> Result<usize> {
    let mut states: u64 = 1;
    for _ in 0..n {
        states = states.checked_mul(alphabet as u64).unwrap_or(u64::MAX);
    }
    if states > budget.binning_states {
        return Err(RdError::Budget(format!(
            "enumerating {alphabet}^{n} sequences exceeds the binning budget of {}",
            budget.binning_states
        )));
    }
    Ok(states as usize)
}

fn unrank(mut idx: usize, alphabet: usize, n: usize, out: &mut [Symbol]) {
    for t in (0..n).rev() {
        out[t] = (idx % alphabet) as Symbol;
        idx /= alphabet;
    }
}

/// Membership and bin tables over all |Y|^n sequences.
#[derive(Debug, Clone)]
pub struct BinningCodebook {
    pub n: usize,
    pub rate: f64,
    pub rate2: f64,
    pub alphabet: usize,
    pub num_bins: u64,
    pub seed: u64,
    member: Vec<bool>,
    bins: Vec<u64>,
}

impl BinningCodebook {
    pub fn generate(
        alphabet: usize,
        n: usize,
        rate: f64,
        rate2: f64,
        seed: u64,
        budget: &Budget,
    ) -> Result<Self> {
        if n == 0 || alphabet < 2 {
            return Err(RdError::Dimension("need n >= 1 and |Y| >= 2".into()));
        }
        if rate < 0.0 || rate2 < 0.0 {
            return Err(RdError::Config("binning rates must be >= 0".into()));
        }
        let states = binning_states(alphabet, n, budget)?;
        let num_bins = index_count(n, rate)?;
        let p_member = (-(n as f64) * rate2).exp2().min(1.0);
        let mut rng = derive_stream(seed, "binning", 0);
        let mut member = Vec::with_capacity(states);
        let mut bins = Vec::with_capacity(states);
        for _ in 0..states {
            member.push(rng.gen::<f64>() < p_member);
            bins.push(rng.gen_range(0..num_bins));
        }
        Ok(BinningCodebook {
            n,
            rate,
            rate2,
            alphabet,
            num_bins,
            seed,
            member,
            bins,
        })
    }

    pub fn is_member(&self, idx: usize) -> bool {
        self.member[idx]
    }

    pub fn bin(&self, idx: usize) -> u64 {
        self.bins[idx]
    }

    pub fn num_states(&self) -> usize {
        self.member.len()
    }
}

/// Per-bin log2 weights G(m | x^n): the forward-channel mass of the member
/// sequences carrying bin index m. The flag is set when C is empty.
pub fn ppe_weights(
    bcb: &BinningCodebook,
    fwd: &Channel,
    x_seq: &[Symbol],
) -> Result<(Vec<f64>, bool)> {
    if x_seq.len() != bcb.n {
        return Err(RdError::Dimension(format!(
            "ppe_weights: sequence length {} vs n = {}",
            x_seq.len(),
            bcb.n
        )));
    }
    if fwd.output_len() != bcb.alphabet {
        return Err(RdError::Dimension(
            "channel output alphabet does not match the binning alphabet".into(),
        ));
    }
    let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); bcb.num_bins as usize];
    let mut any_member = false;
    let mut y = vec![0 as Symbol; bcb.n];
    for idx in 0..bcb.num_states() {
        if !bcb.member[idx] {
            continue;
        }
        any_member = true;
        unrank(idx, bcb.alphabet, bcb.n, &mut y);
        let mut ll = 0.0;
        for (&xs, &ys) in x_seq.iter().zip(&y) {
            let p = fwd.prob(xs as usize, ys as usize)?;
            if p == 0.0 {
                ll = f64::NEG_INFINITY;
                break;
            }
            ll += p.log2();
        }
        if ll > f64::NEG_INFINITY {
            per_bin[bcb.bins[idx] as usize].push(ll);
        }
    }
    let weights = per_bin.iter().map(|v| log_sum_exp2(v)).collect();
    Ok((weights, !any_member))
}

/// Sample a bin index with probability proportional to G(m | x^n); uniform
/// fallback (flagged) when every bin has zero weight.
pub fn ppe_encode<R: Rng + ?Sized>(
    bcb: &BinningCodebook,
    fwd: &Channel,
    x_seq: &[Symbol],
    rng: &mut R,
) -> Result<(u64, bool)> {
    let (weights, _) = ppe_weights(bcb, fwd, x_seq)?;
    let norm = log_sum_exp2(&weights);
    if norm == f64::NEG_INFINITY {
        return Ok((rng.gen_range(0..bcb.num_bins), true));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (m, &w) in weights.iter().enumerate() {
        acc += (w - norm).exp2();
        if u < acc {
            return Ok((m as u64, false));
        }
    }
    Ok((bcb.num_bins - 1, false))
}

/// Reconstruct from a bin index: the most probable member sequence of that
/// bin under the i.i.d. prior, ties to the lexicographically smaller one.
/// An empty candidate set returns the all-zero sequence, flagged.
pub fn sw_decode(bcb: &BinningCodebook, prior: &Pmf, m: u64) -> Result<(Vec<Symbol>, bool)> {
    if prior.len() != bcb.alphabet {
        return Err(RdError::Dimension(
            "prior alphabet does not match the binning alphabet".into(),
        ));
    }
    let mut best: Option<(f64, usize)> = None;
    let mut y = vec![0 as Symbol; bcb.n];
    for idx in 0..bcb.num_states() {
        if !bcb.member[idx] || bcb.bins[idx] != m {
            continue;
        }
        unrank(idx, bcb.alphabet, bcb.n, &mut y);
        let mut ll = 0.0;
        for &ys in &y {
            let p = prior.prob(ys as usize);
            if p == 0.0 {
                ll = f64::NEG_INFINITY;
                break;
            }
            ll += p.log2();
        }
        // strict comparison keeps the first (lexicographically smallest)
        if best.map_or(true, |(b, _)| ll > b) {
            best = Some((ll, idx));
        }
    }
    match best {
        Some((_, idx)) => {
            unrank(idx, bcb.alphabet, bcb.n, &mut y);
            Ok((y, false))
        }
        None => Ok((vec![0; bcb.n], true)),
    }
}

/// End-to-end PPE system run, directly comparable to the likelihood-encoder
/// point-to-point report at matched resources.
#[allow(clippy::too_many_arguments)]
pub fn run_ppe(
    source: &Pmf,
    test_channel: &Channel,
    d: &DistortionMeasure,
    rate: f64,
    rate2: f64,
    n: usize,
    d_limit: f64,
    trials: usize,
    seed: u64,
    budget: &Budget,
) -> Result<SystemReport> {
    if trials == 0 {
        return Err(RdError::Config("trials must be >= 1".into()));
    }
    if d.source_len() != source.len() || d.recon_len() != test_channel.output_len() {
        return Err(RdError::Dimension(
            "distortion matrix does not match the system alphabets".into(),
        ));
    }
    let joint = compose(source, test_channel)?;
    let h_y = joint.marginal_pmf(1)?.entropy();
    let h_y_given_x = conditional_entropy(&joint)?;
    let mut warnings = Vec::new();
    if rate2 >= h_y_given_x {
        warnings.push(format!(
            "R' = {rate2:.4} is not below H(Y|X) = {h_y_given_x:.4}"
        ));
    }
    if rate + rate2 <= h_y {
        warnings.push(format!(
            "R + R' = {:.4} is not above H(Y) = {h_y:.4}; decoding will be ambiguous",
            rate + rate2
        ));
    }
    let prior = joint.marginal_pmf(1)?;
    let bcb = BinningCodebook::generate(test_channel.output_len(), n, rate, rate2, seed, budget)?;
    let model = SourceModel::single(source, n)?;
    let mut mean = 0.0;
    let mut excess = 0usize;
    let mut fails = 0usize;
    let mut fallbacks = 0u64;
    for i in 0..trials {
        let mut rng = derive_stream(seed, "trial", i as u64);
        let x = &model.sample_iid(&mut rng)[0];
        let (m, degen) = ppe_encode(&bcb, test_channel, x, &mut rng)?;
        let (y, failed) = sw_decode(&bcb, &prior, m)?;
        let mut dist = 0.0;
        for (&xs, &ys) in x.iter().zip(&y) {
            dist += d.per_letter(xs as usize, ys as usize);
        }
        dist /= n as f64;
        mean += dist;
        excess += (dist > d_limit) as usize;
        fails += failed as usize;
        fallbacks += degen as u64;
    }
    Ok(SystemReport {
        system: "ppe".to_string(),
        n,
        trials,
        rates: vec![rate, rate2],
        distortion_limits: vec![d_limit],
        mean_distortion: vec![mean / trials as f64],
        excess_freq: excess as f64 / trials as f64,
        decode_error_rate: Some(fails as f64 / trials as f64),
        fallback_count: fallbacks,
        codebook_mode: CodebookMode::Explicit,
        seed,
        warnings,
    })
}

/// Exact TV between the joint of (X^n, F) — F a uniform random binning of
/// Y^n at rate `rate_b` — and P_{X^n} x uniform, for one binning seed.
/// Averaged over seeds this decays in n when rate_b < H(Y|X).
pub fn binning_tv(
    joint: &JointPmf,
    n: usize,
    rate_b: f64,
    seed: u64,
    budget: &Budget,
) -> Result<f64> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension("binning_tv expects a pair joint".into()));
    }
    let (kx, ky) = (joint.dims()[0], joint.dims()[1]);
    let y_states = binning_states(ky, n, budget)?;
    let x_states = binning_states(kx, n, budget)?;
    let num_idx = index_count(n, rate_b)?;
    let mut rng = derive_stream(seed, "binning", 0);
    let mut q = vec![vec![0.0f64; num_idx as usize]; x_states];
    let mut y = vec![0 as Symbol; n];
    for idx in 0..y_states {
        let f = rng.gen_range(0..num_idx) as usize;
        unrank(idx, ky, n, &mut y);
        // Kronecker product of the per-letter joint columns at y_t
        let mut v = vec![1.0];
        for &ys in &y {
            let mut next = Vec::with_capacity(v.len() * kx);
            for &a in &v {
                for x in 0..kx {
                    next.push(a * joint.prob(&[x, ys as usize]));
                }
            }
            v = next;
        }
        for (row, &p) in q.iter_mut().zip(&v) {
            row[f] += p;
        }
    }
    let px = joint.marginal_pmf(0)?;
    let mut prod = vec![1.0];
    for _ in 0..n {
        let mut next = Vec::with_capacity(prod.len() * kx);
        for &a in &prod {
            for x in 0..kx {
                next.push(a * px.prob(x));
            }
        }
        prod = next;
    }
    let uniform = 1.0 / num_idx as f64;
    let mut tv = 0.0;
    for (row, &p) in q.iter().zip(&prod) {
        for &v in row {
            tv += (v - p * uniform).abs();
        }
    }
    Ok(0.5 * tv)
}

/// Side-by-side CSV rows for the likelihood-encoder and PPE reports:
/// `encoder,n,R,Rprime,mean_distortion,excess_freq,decode_fail_rate`.
pub fn write_compare_csv<W: Write>(
    lik: &SystemReport,
    ppe: &SystemReport,
    mut w: W,
) -> Result<()> {
    writeln!(
        w,
        "encoder,n,R,Rprime,mean_distortion,excess_freq,decode_fail_rate"
    )?;
    writeln!(
        w,
        "lik,{},{},{},{},{},{}",
        lik.n,
        lik.rates[0],
        lik.rates.get(1).copied().unwrap_or(0.0),
        lik.mean_distortion[0],
        lik.excess_freq,
        lik.decode_error_rate.unwrap_or(0.0)
    )?;
    writeln!(
        w,
        "ppe,{},{},{},{},{},{}",
        ppe.n,
        ppe.rates[0],
        ppe.rates.get(1).copied().unwrap_or(0.0),
        ppe.mean_distortion[0],
        ppe.excess_freq,
        ppe.decode_error_rate.unwrap_or(0.0)
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_identical() {
        let b = Budget::default();
        let a1 = BinningCodebook::generate(2, 8, 0.5, 0.3, 9, &b).unwrap();
        let a2 = BinningCodebook::generate(2, 8, 0.5, 0.3, 9, &b).unwrap();
        assert_eq!(a1.member, a2.member);
        assert_eq!(a1.bins, a2.bins);
    }

    #[test]
    fn weights_total_probability_of_c() {
        // linear-domain sum of G over bins equals the channel mass of C
        let b = Budget::default();
        let bcb = BinningCodebook::generate(2, 6, 0.4, 0.25, 3, &b).unwrap();
        let fwd = Channel::bsc(0.1).unwrap();
        let x = [0, 1, 1, 0, 0, 1];
        let (weights, empty) = ppe_weights(&bcb, &fwd, &x).unwrap();
        assert!(!empty);
        let total: f64 = weights
            .iter()
            .filter(|w| w.is_finite())
            .map(|w| w.exp2())
            .sum();
        let mut direct = 0.0;
        let mut y = vec![0 as Symbol; 6];
        for idx in 0..bcb.num_states() {
            if bcb.is_member(idx) {
                unrank(idx, 2, 6, &mut y);
                let p: f64 = x
                    .iter()
                    .zip(&y)
                    .map(|(&xs, &ys)| fwd.prob(xs as usize, ys as usize).unwrap())
                    .product();
                direct += p;
            }
        }
        assert!((total - direct).abs() < 1e-12);
    }

    #[test]
    fn single_bin_full_membership_is_total_probability() {
        // R = 0, C = everything: G(0 | x) = 1
        let b = Budget::default();
        let bcb = BinningCodebook::generate(2, 5, 0.0, 0.0, 1, &b).unwrap();
        assert_eq!(bcb.num_bins, 1);
        assert!((0..bcb.num_states()).all(|i| bcb.is_member(i)));
        let (weights, empty) = ppe_weights(&bcb, &Channel::bsc(0.2).unwrap(), &[0, 1, 0, 1, 0])
            .unwrap();
        assert!(!empty);
        assert!(weights[0].abs() < 1e-12);
    }

    #[test]
    fn n1_hand_weights_and_encode_frequency() {
        // n=1, binary, everything in C, one bin per sequence, BSC(0.1), x=0:
        // weights are (0.9, 0.1) up to the random bin assignment
        let b = Budget::default();
        // rate2 = 0 -> all member; rate = 1 -> 2 bins
        let bcb = BinningCodebook::generate(2, 1, 1.0, 0.0, 5, &b).unwrap();
        assert_eq!(bcb.num_bins, 2);
        let fwd = Channel::bsc(0.1).unwrap();
        let (weights, _) = ppe_weights(&bcb, &fwd, &[0]).unwrap();
        // whichever bin holds y=0 must carry weight 0.9
        let bin0 = bcb.bin(0) as usize;
        if bcb.bin(1) != bcb.bin(0) {
            assert!((weights[bin0].exp2() - 0.9).abs() < 1e-12);
            // empirical law over 10^5 draws
            let mut hits = 0u64;
            let trials = 100_000;
            let mut rng = derive_stream(7, "enc", 0);
            for _ in 0..trials {
                let (m, _) = ppe_encode(&bcb, &fwd, &[0], &mut rng).unwrap();
                hits += (m as usize == bin0) as u64;
            }
            let freq = hits as f64 / trials as f64;
            let sigma = (0.9f64 * 0.1 / trials as f64).sqrt();
            assert!((freq - 0.9).abs() < 4.0 * sigma, "freq {freq}");
        } else {
            assert!((weights[bin0].exp2() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_prefers_probable_and_flags_empty() {
        let b = Budget::default();
        let bcb = BinningCodebook::generate(2, 4, 0.5, 0.2, 11, &b).unwrap();
        let prior = Pmf::bernoulli(0.2).unwrap(); // zeros are likely
        for m in 0..bcb.num_bins {
            let (y, failed) = sw_decode(&bcb, &prior, m).unwrap();
            if failed {
                assert_eq!(y, vec![0, 0, 0, 0]);
                continue;
            }
            // verify it is the max-probability member of the bin
            let score = |seq: &[Symbol]| -> f64 {
                seq.iter().map(|&s| prior.prob(s as usize).log2()).sum()
            };
            let mut yy = vec![0 as Symbol; 4];
            for idx in 0..bcb.num_states() {
                if bcb.is_member(idx) && bcb.bin(idx) == m {
                    unrank(idx, 2, 4, &mut yy);
                    assert!(score(&yy) <= score(&y) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn ppe_sparse_membership_moderate_distortion() {
        // R' = 0.3 < h(0.1), R + R' = 1.2 > H(Y) = 1: bins rarely hold two
        // member sequences, so the decoder usually recovers the sequence
        // the encoder weighted, and distortion sits near the test channel's
        // crossover without collapsing to the blind 0.25 level.
        let b = Budget::default();
        let rep = run_ppe(
            &Pmf::uniform(2),
            &Channel::bsc(0.1).unwrap(),
            &DistortionMeasure::hamming(2),
            0.9,
            0.3,
            10,
            0.3,
            400,
            13,
            &b,
        )
        .unwrap();
        assert!(rep.warnings.is_empty(), "{:?}", rep.warnings);
        assert!(
            rep.mean_distortion[0] > 0.02 && rep.mean_distortion[0] < 0.22,
            "{}",
            rep.mean_distortion[0]
        );
        assert_eq!(rep.decode_error_rate, Some(0.0));
    }

    #[test]
    fn binning_tv_decays_when_rate_below_conditional_entropy() {
        let b = Budget::default();
        let joint = compose(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        // H(Y|X) = h(0.1) = 0.469; R_b = 0.25 is below it
        let seeds = 40;
        let mean_at = |n: usize| -> f64 {
            (0..seeds)
                .map(|s| binning_tv(&joint, n, 0.25, 100 + s, &b).unwrap())
                .sum::<f64>()
                / seeds as f64
        };
        let tv4 = mean_at(4);
        let tv8 = mean_at(8);
        assert!(tv8 < tv4, "tv4 {tv4} vs tv8 {tv8}");
    }

    #[test]
    fn compare_csv_shape() {
        let b = Budget::default();
        let rep = run_ppe(
            &Pmf::uniform(2),
            &Channel::bsc(0.1).unwrap(),
            &DistortionMeasure::hamming(2),
            0.75,
            0.35,
            6,
            0.2,
            20,
            1,
            &b,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_compare_csv(&rep, &rep, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "encoder,n,R,Rprime,mean_distortion,excess_freq,decode_fail_rate\n"
        ));
        assert_eq!(text.lines().count(), 3);
    }
}
