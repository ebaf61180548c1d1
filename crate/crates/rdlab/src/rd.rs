//! Rate-distortion numerics: R(D) via Blahut-Arimoto, the excess-distortion
//! Chernoff exponent, the soft-covering decay exponent built from Renyi
//! information quantities, and the resulting non-asymptotic bound on the
//! excess-distortion probability.
//!
//! All rates, informations, and exponents are base 2: the bound reads
//! 2.5 * 2^(-n * min(eta, gamma)).

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::distortion::{expected_distortion, DistortionMeasure};
use crate::error::{RdError, Result};
use crate::prob::{compose, mutual_information, Channel, JointPmf, Pmf};

/// A point on the rate-distortion curve with its optimizing test channel.
#[derive(Debug, Clone)]
pub struct RdPoint {
    pub distortion: f64,
    pub rate: f64,
    pub channel: Channel,
    pub slope: f64,
}

/// Blahut-Arimoto fixed point at Lagrange slope `beta`: returns (D, R) and
/// the channel q(y|x) proportional to r(y) 2^{-beta d(x,y)}.
fn ba_at_slope(
    source: &Pmf,
    d: &DistortionMeasure,
    beta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, f64, Channel)> {
    let (kx, ky) = (d.source_len(), d.recon_len());
    let mut r = vec![1.0 / ky as f64; ky];
    let mut q = vec![vec![0.0; ky]; kx];
    let mut last = f64::INFINITY;
    for _ in 0..max_iter {
        for x in 0..kx {
            let mut norm = 0.0;
            for y in 0..ky {
                q[x][y] = r[y] * (-beta * d.per_letter(x, y)).exp2();
                norm += q[x][y];
            }
            for v in q[x].iter_mut() {
                *v /= norm;
            }
        }
        let mut new_r = vec![0.0; ky];
        for x in 0..kx {
            for y in 0..ky {
                new_r[y] += source.prob(x) * q[x][y];
            }
        }
        let delta: f64 = r
            .iter()
            .zip(&new_r)
            .map(|(a, b)| (a - b).abs())
            .sum();
        r = new_r;
        if delta < tol * 1e-3 && (delta - last).abs() < tol * 1e-3 {
            break;
        }
        last = delta;
    }
    let mut dist = 0.0;
    let mut rate = 0.0;
    for x in 0..kx {
        for y in 0..ky {
            let p = source.prob(x) * q[x][y];
            if p > 0.0 {
                dist += p * d.per_letter(x, y);
                rate += p * (q[x][y] / r[y]).log2();
            }
        }
    }
    let rows: Vec<Vec<f64>> = q
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|v| v / s).collect()
        })
        .collect();
    Ok((dist, rate.max(0.0), Channel::new(rows)?))
}

/// R(D) for a finite source by alternating minimization, bisecting the
/// Lagrange slope until the distortion of the fixed point hits `target_d`.
pub fn blahut_arimoto(
    source: &Pmf,
    d: &DistortionMeasure,
    target_d: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RdPoint> {
    if tol <= 0.0 {
        return Err(RdError::Config("tolerance must be positive".into()));
    }
    if d.source_len() != source.len() {
        return Err(RdError::Dimension(
            "distortion rows do not match the source alphabet".into(),
        ));
    }
    let ky = d.recon_len();
    let d_min: f64 = (0..source.len())
        .map(|x| {
            source.prob(x)
                * (0..ky)
                    .map(|y| d.per_letter(x, y))
                    .fold(f64::INFINITY, f64::min)
        })
        .sum();
    if target_d < d_min - 1e-12 {
        return Err(RdError::Infeasible(format!(
            "distortion target {target_d} is below the minimum achievable {d_min}"
        )));
    }
    // R = 0 when some constant reconstruction already meets the target
    let (best_y, d_zero_rate) = (0..ky)
        .map(|y| {
            (
                y,
                (0..source.len())
                    .map(|x| source.prob(x) * d.per_letter(x, y))
                    .sum::<f64>(),
            )
        })
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    if d_zero_rate <= target_d {
        return Ok(RdPoint {
            distortion: d_zero_rate,
            rate: 0.0,
            channel: Channel::constant(source.len(), Pmf::point_mass(ky, best_y)),
            slope: 0.0,
        });
    }
    // bisect the slope: fixed-point distortion decreases in beta
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    loop {
        let (dist, _, _) = ba_at_slope(source, d, hi, tol, max_iter)?;
        if dist <= target_d || hi > 300.0 {
            break;
        }
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (dist, _, _) = ba_at_slope(source, d, mid, tol, max_iter)?;
        if dist > target_d {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 * hi.max(1.0) {
            break;
        }
    }
    let (dist, rate, channel) = ba_at_slope(source, d, hi, tol, max_iter)?;
    Ok(RdPoint {
        distortion: dist,
        rate,
        channel,
        slope: hi,
    })
}

/// log2 E[2^{beta (d - D)}] over the support of the joint.
fn chernoff_objective(joint: &JointPmf, d: &DistortionMeasure, target_d: f64, beta: f64) -> f64 {
    let mut terms: Vec<f64> = Vec::new();
    for (idx, p) in joint.iter() {
        if p > 0.0 {
            terms.push(p.log2() + beta * (d.per_letter(idx[0], idx[1]) - target_d));
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp2()).sum::<f64>().log2()
}

/// Chernoff exponent of the i.i.d. excess-distortion event:
/// eta = -log2 inf_{beta > 0} E[2^{beta (d - D)}]. Returns (eta, beta*);
/// beta* is 0 in the Jensen-degenerate case and +inf when the distortion is
/// strictly below D on the whole support.
pub fn exponent_eta(
    joint: &JointPmf,
    d: &DistortionMeasure,
    target_d: f64,
) -> Result<(f64, f64)> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension("exponent_eta expects a pair joint".into()));
    }
    let mean = expected_distortion(joint, d)?;
    if mean >= target_d {
        // objective is nondecreasing at beta = 0+, infimum -> 1
        return Ok((0.0, 0.0));
    }
    let mut mass_above = 0.0;
    let mut mass_at = 0.0;
    for (idx, p) in joint.iter() {
        let v = d.per_letter(idx[0], idx[1]);
        if v > target_d {
            mass_above += p;
        } else if v == target_d {
            mass_at += p;
        }
    }
    if mass_above == 0.0 {
        // objective decreases to P[d = D] as beta -> inf
        if mass_at == 0.0 {
            return Ok((f64::INFINITY, f64::INFINITY));
        }
        return Ok((-mass_at.log2(), f64::INFINITY));
    }
    // interior minimum: bracket then golden-section on the convex objective
    let g = |beta: f64| chernoff_objective(joint, d, target_d, beta);
    let mut hi = 1.0f64;
    while g(hi * 2.0) < g(hi) {
        hi *= 2.0;
        if hi > 1e9 {
            break;
        }
    }
    let (mut a, mut b) = (0.0f64, hi * 2.0);
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut e = a + phi * (b - a);
    let (mut fc, mut fe) = (g(c), g(e));
    for _ in 0..300 {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + phi * (b - a);
            fe = g(e);
        }
        if b - a < 1e-13 * b.max(1.0) {
            break;
        }
    }
    let beta_star = 0.5 * (a + b);
    Ok(((-g(beta_star)).max(0.0), beta_star))
}

/// Renyi mutual-information-like quantity
/// I_check_alpha = (1/(alpha-1)) log2 E_{P_XY}[(P_XY / (P_X P_Y))^{alpha-1}],
/// with the alpha -> 1 limit I(X;Y).
pub fn renyi_check(joint: &JointPmf, alpha: f64) -> Result<f64> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension("renyi_check expects a pair joint".into()));
    }
    if (alpha - 1.0).abs() < 1e-6 {
        return mutual_information(joint);
    }
    let px = joint.marginal_pmf(0)?;
    let py = joint.marginal_pmf(1)?;
    let mut terms = Vec::new();
    for (idx, p) in joint.iter() {
        if p > 0.0 {
            let denom = px.prob(idx[0]) * py.prob(idx[1]);
            if denom <= 0.0 {
                return Err(RdError::Config(
                    "joint mass on a zero-probability marginal cell".into(),
                ));
            }
            terms.push(p.log2() + (alpha - 1.0) * (p / denom).log2());
        }
    }
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + terms.iter().map(|t| (t - max).exp2()).sum::<f64>().log2();
    Ok(lse / (alpha - 1.0))
}

/// Companion quantity
/// I_bar_alpha' = (1/(alpha'-1)) log2 (E_{P_X}[Gamma(X)])^2 with
/// Gamma(x) = sqrt(E_{P_{Y|X=x}}[(P_XY/(P_X P_Y))^{alpha'-1}]),
/// with the alpha' -> 1 limit I(X;Y).
pub fn renyi_bar(joint: &JointPmf, alpha_prime: f64) -> Result<f64> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension("renyi_bar expects a pair joint".into()));
    }
    if (alpha_prime - 1.0).abs() < 1e-6 {
        return mutual_information(joint);
    }
    let px = joint.marginal_pmf(0)?;
    let py = joint.marginal_pmf(1)?;
    let (kx, ky) = (joint.dims()[0], joint.dims()[1]);
    let mut outer = 0.0;
    for x in 0..kx {
        if px.prob(x) <= 0.0 {
            continue;
        }
        let mut inner = 0.0;
        for y in 0..ky {
            let p = joint.prob(&[x, y]);
            if p > 0.0 {
                let cond = p / px.prob(x);
                let denom = px.prob(x) * py.prob(y);
                if denom <= 0.0 {
                    return Err(RdError::Config(
                        "joint mass on a zero-probability marginal cell".into(),
                    ));
                }
                inner += cond * (p / denom).powf(alpha_prime - 1.0);
            }
        }
        outer += px.prob(x) * inner.sqrt();
    }
    Ok((outer * outer).log2() / (alpha_prime - 1.0))
}

/// Grid used for the soft-covering exponent optimization.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GammaGrid {
    pub alpha_max: f64,
    pub alpha_points: usize,
    pub alpha_prime_min: f64,
    pub alpha_prime_points: usize,
}

impl Default for GammaGrid {
    fn default() -> Self {
        GammaGrid {
            alpha_max: 64.0,
            alpha_points: 200,
            alpha_prime_min: -8.0,
            alpha_prime_points: 200,
        }
    }
}

impl GammaGrid {
    pub fn refine(&self, factor: usize) -> Self {
        GammaGrid {
            alpha_points: self.alpha_points * factor,
            alpha_prime_points: self.alpha_prime_points * factor,
            ..*self
        }
    }

    fn alphas(&self) -> Vec<f64> {
        // log-spaced in [1, alpha_max], first point exactly 1
        let k = self.alpha_points;
        (0..k)
            .map(|i| self.alpha_max.powf(i as f64 / (k - 1) as f64))
            .collect()
    }

    fn alpha_primes(&self) -> Vec<f64> {
        let k = self.alpha_prime_points;
        (0..k)
            .map(|i| {
                self.alpha_prime_min
                    + (2.0 - self.alpha_prime_min) * i as f64 / (k - 1) as f64
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaResult {
    pub gamma: f64,
    pub alpha_star: f64,
    pub alpha_prime_star: f64,
    pub i_check_at_alpha_star: f64,
    pub i_bar_at_alpha_prime_star: f64,
    /// Set when the maximum sits on the grid boundary, i.e. the supremum is
    /// likely not attained inside the searched box.
    pub boundary_warning: bool,
}

/// Soft-covering decay exponent: maximize
/// ((alpha-1)/(2 alpha - alpha')) (R - I_check + (alpha'-1)(I_check - I_bar))
/// over the grid. The alpha = 1 row makes gamma >= 0 always.
pub fn exponent_gamma(joint: &JointPmf, rate: f64, grid: &GammaGrid) -> Result<GammaResult> {
    if rate < 0.0 {
        return Err(RdError::Config("rate must be >= 0".into()));
    }
    let alphas = grid.alphas();
    let alpha_primes = grid.alpha_primes();
    let i_checks: Vec<f64> = alphas
        .iter()
        .map(|&a| renyi_check(joint, a))
        .collect::<Result<_>>()?;
    let i_bars: Vec<f64> = alpha_primes
        .iter()
        .map(|&a| renyi_bar(joint, a))
        .collect::<Result<_>>()?;
    let mut best = (0.0f64, 0usize, 0usize); // alpha = 1 row value
    for (i, &alpha) in alphas.iter().enumerate() {
        for (j, &ap) in alpha_primes.iter().enumerate() {
            let denom = 2.0 * alpha - ap;
            if denom <= 0.0 {
                continue;
            }
            let v = (alpha - 1.0) / denom
                * (rate - i_checks[i] + (ap - 1.0) * (i_checks[i] - i_bars[j]));
            if v > best.0 {
                best = (v, i, j);
            }
        }
    }
    let (gamma, i, j) = best;
    let boundary = i == alphas.len() - 1 || j == 0 || j == alpha_primes.len() - 1;
    Ok(GammaResult {
        gamma,
        alpha_star: alphas[i],
        alpha_prime_star: alpha_primes[j],
        i_check_at_alpha_star: i_checks[i],
        i_bar_at_alpha_prime_star: i_bars[j],
        boundary_warning: gamma > 0.0 && boundary,
    })
}

/// Everything Theorem-1-style bounds need for one test channel.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentReport {
    pub eta: f64,
    pub beta_star: f64,
    pub gamma: f64,
    pub alpha_star: f64,
    pub alpha_prime_star: f64,
    pub i_check_at_alpha_star: f64,
    pub i_bar_at_alpha_prime_star: f64,
    pub theorem1_exponent: f64,
    pub boundary_warning: bool,
    pub grid: GammaGrid,
}

pub fn exponent_report(
    joint: &JointPmf,
    d: &DistortionMeasure,
    target_d: f64,
    rate: f64,
    grid: &GammaGrid,
) -> Result<ExponentReport> {
    let (eta, beta_star) = exponent_eta(joint, d, target_d)?;
    let g = exponent_gamma(joint, rate, grid)?;
    Ok(ExponentReport {
        eta,
        beta_star,
        gamma: g.gamma,
        alpha_star: g.alpha_star,
        alpha_prime_star: g.alpha_prime_star,
        i_check_at_alpha_star: g.i_check_at_alpha_star,
        i_bar_at_alpha_prime_star: g.i_bar_at_alpha_prime_star,
        theorem1_exponent: eta.min(g.gamma),
        boundary_warning: g.boundary_warning,
        grid: *grid,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub channel_id: usize,
    pub report: ExponentReport,
    /// (n, 2.5 * 2^{-n min(eta, gamma)}) per requested blocklength.
    pub bounds: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundTable {
    pub rows: Vec<BoundRow>,
    /// (channel_id, reason) for candidates that failed the E[d] < D or
    /// I(X;Y) < R preconditions.
    pub skipped: Vec<(usize, String)>,
    /// channel_id with the largest exponent.
    pub best: usize,
}

/// Evaluate the excess-distortion bound for each candidate test channel
/// satisfying E[d] < D and I(X;Y) < R.
pub fn theorem1_bound(
    source: &Pmf,
    candidates: &[Channel],
    d: &DistortionMeasure,
    target_d: f64,
    rate: f64,
    n_list: &[usize],
    grid: &GammaGrid,
) -> Result<BoundTable> {
    let mut skipped = Vec::new();
    let mut valid = Vec::new();
    for (id, ch) in candidates.iter().enumerate() {
        let joint = compose(source, ch)?;
        let mean = expected_distortion(&joint, d)?;
        if mean >= target_d {
            skipped.push((id, format!("E[d] = {mean:.4} is not below D = {target_d}")));
            continue;
        }
        let info = mutual_information(&joint)?;
        if info >= rate {
            skipped.push((id, format!("I(X;Y) = {info:.4} is not below R = {rate}")));
            continue;
        }
        valid.push((id, joint));
    }
    if valid.is_empty() {
        return Err(RdError::Infeasible(
            "no candidate channel satisfies E[d] < D and I(X;Y) < R".into(),
        ));
    }
    let rows: Vec<BoundRow> = valid
        .par_iter()
        .map(|(id, joint)| {
            let report = exponent_report(joint, d, target_d, rate, grid)?;
            let bounds = n_list
                .iter()
                .map(|&n| (n, 2.5 * (-(n as f64) * report.theorem1_exponent).exp2()))
                .collect();
            Ok(BoundRow {
                channel_id: *id,
                report,
                bounds,
            })
        })
        .collect::<Result<_>>()?;
    let best = rows
        .iter()
        .max_by(|a, b| {
            a.report
                .theorem1_exponent
                .partial_cmp(&b.report.theorem1_exponent)
                .unwrap()
        })
        .unwrap()
        .channel_id;
    Ok(BoundTable { rows, skipped, best })
}

impl BoundTable {
    /// CSV: `channel_id,eta,beta_star,gamma,alpha_star,alpha_prime_star,n,bound`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "channel_id,eta,beta_star,gamma,alpha_star,alpha_prime_star,n,bound"
        )?;
        for row in &self.rows {
            for &(n, bound) in &row.bounds {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    row.channel_id,
                    row.report.eta,
                    row.report.beta_star,
                    row.report.gamma,
                    row.report.alpha_star,
                    row.report.alpha_prime_star,
                    n,
                    bound
                )?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binary_entropy(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    fn hamming() -> DistortionMeasure {
        DistortionMeasure::hamming(2)
    }

    #[test]
    fn ba_binary_hamming_matches_analytic() {
        let p = Pmf::uniform(2);
        let pt = blahut_arimoto(&p, &hamming(), 0.1, 1e-9, 5000).unwrap();
        assert!((pt.rate - (1.0 - binary_entropy(0.1))).abs() < 1e-4, "{}", pt.rate);
        assert!((pt.distortion - 0.1).abs() < 1e-6);
        // the optimizing channel is a BSC(0.1)
        for x in 0..2 {
            assert!((pt.channel.prob(x, 1 - x).unwrap() - 0.1).abs() < 1e-4);
        }
    }

    #[test]
    fn ba_edge_cases() {
        let p = Pmf::uniform(2);
        let pt = blahut_arimoto(&p, &hamming(), 0.5, 1e-9, 2000).unwrap();
        assert_eq!(pt.rate, 0.0);
        let pt = blahut_arimoto(&p, &hamming(), 0.0, 1e-9, 5000).unwrap();
        assert!((pt.rate - 1.0).abs() < 1e-4, "{}", pt.rate);
        assert!(matches!(
            blahut_arimoto(&p, &hamming(), -0.01, 1e-9, 100),
            Err(RdError::Infeasible(_))
        ));
        // skewed source: lossless rate is H(X)
        let p = Pmf::bernoulli(0.2).unwrap();
        let pt = blahut_arimoto(&p, &hamming(), 0.0, 1e-9, 5000).unwrap();
        assert!((pt.rate - binary_entropy(0.2)).abs() < 1e-4);
    }

    #[test]
    fn ba_curve_monotone_and_convex() {
        let p = Pmf::uniform(2);
        let ds: Vec<f64> = (1..=9).map(|i| i as f64 * 0.05).collect();
        let rs: Vec<f64> = ds
            .iter()
            .map(|&dd| blahut_arimoto(&p, &hamming(), dd, 1e-9, 5000).unwrap().rate)
            .collect();
        for w in rs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9);
        }
        for i in 1..rs.len() - 1 {
            assert!(rs[i] <= 0.5 * (rs[i - 1] + rs[i + 1]) + 1e-6);
        }
    }

    #[test]
    fn eta_degenerate_cases() {
        let joint = compose(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        // E[d] = 0.1 >= D = 0.05 -> 0
        let (eta, beta) = exponent_eta(&joint, &hamming(), 0.05).unwrap();
        assert_eq!((eta, beta), (0.0, 0.0));
        // deterministic under-distortion -> +inf
        let diag = JointPmf::from_matrix(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        let (eta, beta) = exponent_eta(&diag, &hamming(), 0.2).unwrap();
        assert!(eta.is_infinite() && beta.is_infinite());
    }

    #[test]
    fn eta_matches_grid_oracle() {
        let joint = compose(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        let (eta, beta) = exponent_eta(&joint, &hamming(), 0.15).unwrap();
        assert!(beta > 0.0 && beta.is_finite());
        let oracle = (1..=100_000)
            .map(|i| chernoff_objective(&joint, &hamming(), 0.15, i as f64 * 50.0 / 1e5))
            .fold(f64::INFINITY, f64::min);
        assert!((eta - (-oracle)).abs() < 1e-6, "{eta} vs {}", -oracle);
    }

    #[test]
    fn renyi_quantities() {
        // independent joint: ratio == 1 everywhere
        let indep = compose(&Pmf::uniform(2), &Channel::constant(2, Pmf::bernoulli(0.3).unwrap()))
            .unwrap();
        for a in [0.5, 2.0, 5.0, -3.0] {
            assert!(renyi_check(&indep, a).unwrap().abs() < 1e-12);
            assert!(renyi_bar(&indep, a).unwrap().abs() < 1e-12);
        }
        // alpha -> 1 limits
        let joint = compose(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        let mi = mutual_information(&joint).unwrap();
        for a in [1.0 - 1e-4, 1.0 + 1e-4] {
            assert!((renyi_check(&joint, a).unwrap() - mi).abs() < 1e-3);
            assert!((renyi_bar(&joint, a).unwrap() - mi).abs() < 1e-3);
        }
        // alpha = 2: I_check_2 = log2 E[ratio], by the 4-cell hand sum
        let px = [0.5f64, 0.5];
        let k = [[0.9f64, 0.1], [0.1, 0.9]];
        let mut hand = 0.0f64;
        for x in 0..2 {
            for y in 0..2 {
                let p = px[x] * k[x][y];
                let ratio = p / (px[x] * 0.5);
                hand += p * ratio;
            }
        }
        assert!((renyi_check(&joint, 2.0).unwrap() - hand.log2()).abs() < 1e-12);
    }

    #[test]
    fn gamma_independent_joint_hits_half() {
        let indep =
            compose(&Pmf::uniform(2), &Channel::constant(2, Pmf::uniform(2))).unwrap();
        let g = exponent_gamma(&indep, 1.0, &GammaGrid::default()).unwrap();
        // with I_check = I_bar = 0 the maximand is (alpha-1)/(2 alpha - alpha') R,
        // equal to 1/2 on the alpha' = 2 boundary
        assert!((g.gamma - 0.5).abs() < 1e-9, "{}", g.gamma);
        assert!(g.boundary_warning);
    }

    #[test]
    fn gamma_nonnegative_and_monotone_in_rate() {
        let joint = compose(&Pmf::uniform(2), &Channel::bsc(0.1).unwrap()).unwrap();
        let grid = GammaGrid::default();
        let mut last = -1.0;
        for r in [0.0, 0.6, 0.8, 1.2] {
            let g = exponent_gamma(&joint, r, &grid).unwrap();
            assert!(g.gamma >= 0.0);
            assert!(g.gamma >= last - 1e-12);
            last = g.gamma;
        }
    }

    #[test]
    fn permutation_invariance() {
        let joint = JointPmf::from_matrix(&[vec![0.4, 0.1], vec![0.2, 0.3]]).unwrap();
        let permuted = JointPmf::from_matrix(&[vec![0.3, 0.2], vec![0.1, 0.4]]).unwrap();
        let d = hamming();
        // swapping both labels maps hamming to itself
        let (e1, _) = exponent_eta(&joint, &d, 0.35).unwrap();
        let (e2, _) = exponent_eta(&permuted, &d, 0.35).unwrap();
        assert!((e1 - e2).abs() < 1e-12);
        let g1 = exponent_gamma(&joint, 0.5, &GammaGrid::default()).unwrap();
        let g2 = exponent_gamma(&permuted, 0.5, &GammaGrid::default()).unwrap();
        assert!((g1.gamma - g2.gamma).abs() < 1e-12);
    }

    #[test]
    fn bound_table_filters_and_ranks() {
        let source = Pmf::uniform(2);
        let candidates: Vec<Channel> = [0.05, 0.1, 0.2]
            .iter()
            .map(|&q| Channel::bsc(q).unwrap())
            .collect();
        let grid = GammaGrid::default();
        let table =
            theorem1_bound(&source, &candidates, &hamming(), 0.15, 0.8, &[50, 100], &grid)
                .unwrap();
        // BSC(0.2) has E[d] = 0.2 >= 0.15 and is skipped
        assert_eq!(table.skipped.len(), 1);
        assert_eq!(table.skipped[0].0, 2);
        assert_eq!(table.rows.len(), 2);
        for row in &table.rows {
            assert!(
                (row.report.theorem1_exponent
                    - row.report.eta.min(row.report.gamma))
                .abs()
                    < 1e-15
            );
            for &(n, bound) in &row.bounds {
                assert!((bound - 2.5 * (-(n as f64) * row.report.theorem1_exponent).exp2()).abs() < 1e-15);
            }
        }
        // brute-force best over the same candidates
        let brute = table
            .rows
            .iter()
            .max_by(|a, b| {
                a.report
                    .theorem1_exponent
                    .partial_cmp(&b.report.theorem1_exponent)
                    .unwrap()
            })
            .unwrap()
            .channel_id;
        assert_eq!(table.best, brute);
        // all candidates infeasible -> error
        assert!(matches!(
            theorem1_bound(&source, &candidates, &hamming(), 0.01, 0.8, &[50], &grid),
            Err(RdError::Infeasible(_))
        ));
        let mut csv = Vec::new();
        table.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert!(csv.starts_with("channel_id,eta,beta_star,gamma,alpha_star,alpha_prime_star,n,bound\n"));
        assert_eq!(csv.lines().count(), 5);
    }
}
