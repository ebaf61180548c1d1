//! Exact finite-alphabet probability calculus: PMFs, conditional kernels,
//! information measures, and total variation distance.
//!
//! Everything here works in the linear domain with base-2 logarithms; the
//! log-domain arithmetic needed for n-fold products lives in the encoder
//! module where it is actually required.

use rand::Rng;

use crate::error::{RdError, Result};

/// Sequence symbol. Alphabets stay small (a few dozen at most).
pub type Symbol = u8;

/// Absolute slack accepted on an input's probability sum before rejection.
pub const SUM_TOLERANCE: f64 = 1e-9;

fn check_weights(probs: &[f64], what: &str) -> Result<f64> {
    if probs.is_empty() {
        return Err(RdError::InvalidDistribution(format!(
            "{what}: alphabet must have at least one symbol"
        )));
    }
    let mut sum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < 0.0 {
            return Err(RdError::InvalidDistribution(format!(
                "{what}: entry {i} is {p}, expected a finite nonnegative value"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(RdError::InvalidDistribution(format!(
            "{what}: entries sum to {sum}, more than {SUM_TOLERANCE} away from 1"
        )));
    }
    Ok(sum)
}

/// Probability mass function on a finite alphabet.
///
/// Entries are nonnegative and renormalized at construction so they sum to 1
/// within 1e-12; inputs whose sum is further than 1e-9 from 1 are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum = check_weights(&probs, "pmf")?;
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Ok(Pmf { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Pmf {
            probs: vec![1.0 / k as f64; k.max(1)],
        }
    }

    pub fn point_mass(k: usize, at: usize) -> Self {
        let mut probs = vec![0.0; k.max(1)];
        probs[at] = 1.0;
        Pmf { probs }
    }

    /// Two-symbol pmf with `P[1] = p`.
    pub fn bernoulli(p: f64) -> Result<Self> {
        Pmf::new(vec![1.0 - p, p])
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }

    /// Inverse-CDF draw of a symbol index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// Entropy in bits of an arbitrary weight vector, with the 0 log 0 = 0
/// convention.
fn entropy_of(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

/// Joint distribution over up to four finite variables, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    dims: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(dims: Vec<usize>, probs: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.len() > 4 {
            return Err(RdError::Dimension(format!(
                "joint pmf supports 1 to 4 variables, got {}",
                dims.len()
            )));
        }
        let expected: usize = dims.iter().product();
        if expected != probs.len() || dims.iter().any(|&d| d == 0) {
            return Err(RdError::Dimension(format!(
                "joint pmf table has {} entries, dims {:?} require {}",
                probs.len(),
                dims,
                expected
            )));
        }
        let sum = check_weights(&probs, "joint pmf")?;
        let probs = probs.into_iter().map(|p| p / sum).collect();
        Ok(JointPmf { dims, probs })
    }

    /// Two-variable joint from a matrix of rows (first index = variable 0).
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(RdError::Dimension("empty joint matrix".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(RdError::Dimension("ragged joint matrix".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        JointPmf::new(vec![rows.len(), cols], flat)
    }

    pub fn num_vars(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.probs[self.flat_index(idx)]
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (i, &d) in self.dims.iter().enumerate() {
            debug_assert!(idx[i] < d);
            flat = flat * d + idx[i];
        }
        flat
    }

    fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dims.len()];
        for i in (0..self.dims.len()).rev() {
            idx[i] = flat % self.dims[i];
            flat /= self.dims[i];
        }
        idx
    }

    /// Iterate over (multi-index, probability) pairs.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(flat, &p)| (self.unflatten(flat), p))
    }

    /// Sum out every variable not listed in `keep`. `keep` must be a
    /// nonempty, strictly ascending subset of the variable indices; the kept
    /// variables retain their relative order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        if keep.is_empty() {
            return Err(RdError::Dimension(
                "marginalize: keep set must be nonempty".into(),
            ));
        }
        if keep.windows(2).any(|w| w[1] <= w[0]) || *keep.last().unwrap() >= self.dims.len() {
            return Err(RdError::Dimension(format!(
                "marginalize: keep {:?} is not an ascending subset of 0..{}",
                keep,
                self.dims.len()
            )));
        }
        let out_dims: Vec<usize> = keep.iter().map(|&v| self.dims[v]).collect();
        let mut out = vec![0.0; out_dims.iter().product()];
        for (flat, &p) in self.probs.iter().enumerate() {
            let idx = self.unflatten(flat);
            let mut o = 0;
            for (k, &v) in keep.iter().enumerate() {
                o = o * out_dims[k] + idx[v];
            }
            out[o] += p;
        }
        JointPmf::new(out_dims, out)
    }

    /// Marginal of a single variable as a plain pmf.
    pub fn marginal_pmf(&self, var: usize) -> Result<Pmf> {
        let m = self.marginalize(&[var])?;
        Pmf::new(m.probs)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (flat, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return self.unflatten(flat);
            }
        }
        self.unflatten(self.probs.len() - 1)
    }

    /// Joint Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.probs)
    }
}

/// Conditional kernel: one pmf row per input symbol.
///
/// Rows produced by Bayes inversion of a joint with zero-mass output symbols
/// are marked undefined; reading such a row is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    rows: Vec<Pmf>,
    undefined: Vec<bool>,
}

impl Channel {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(RdError::Dimension("channel needs at least one row".into()));
        }
        let cols = rows[0].len();
        let rows = rows
            .into_iter()
            .map(|r| {
                if r.len() != cols {
                    Err(RdError::Dimension("ragged channel matrix".into()))
                } else {
                    Pmf::new(r)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let undefined = vec![false; rows.len()];
        Ok(Channel { rows, undefined })
    }

    /// Binary symmetric channel with crossover probability `p`.
    pub fn bsc(p: f64) -> Result<Self> {
        Channel::new(vec![vec![1.0 - p, p], vec![p, 1.0 - p]])
    }

    pub fn identity(k: usize) -> Self {
        let rows = (0..k).map(|i| Pmf::point_mass(k, i)).collect();
        Channel {
            rows,
            undefined: vec![false; k],
        }
    }

    /// Channel whose every row equals `row` (output independent of input).
    pub fn constant(inputs: usize, row: Pmf) -> Self {
        Channel {
            rows: vec![row; inputs.max(1)],
            undefined: vec![false; inputs.max(1)],
        }
    }

    pub fn input_len(&self) -> usize {
        self.rows.len()
    }

    pub fn output_len(&self) -> usize {
        self.rows[0].len()
    }

    pub fn is_defined(&self, input: usize) -> bool {
        !self.undefined[input]
    }

    pub fn row(&self, input: usize) -> Result<&Pmf> {
        if input >= self.rows.len() {
            return Err(RdError::IndexOutOfRange(format!(
                "channel input {input} out of {}",
                self.rows.len()
            )));
        }
        if self.undefined[input] {
            return Err(RdError::UndefinedRow(input));
        }
        Ok(&self.rows[input])
    }

    pub fn prob(&self, input: usize, output: usize) -> Result<f64> {
        Ok(self.row(input)?.prob(output))
    }
}

/// Product of an input pmf with a kernel: joint[x][y] = input[x] * kernel[x][y].
pub fn compose(input: &Pmf, kernel: &Channel) -> Result<JointPmf> {
    if input.len() != kernel.input_len() {
        return Err(RdError::Dimension(format!(
            "compose: input alphabet {} vs kernel input alphabet {}",
            input.len(),
            kernel.input_len()
        )));
    }
    let cols = kernel.output_len();
    let mut probs = Vec::with_capacity(input.len() * cols);
    for x in 0..input.len() {
        let row = kernel.row(x)?;
        for y in 0..cols {
            probs.push(input.prob(x) * row.prob(y));
        }
    }
    JointPmf::new(vec![input.len(), cols], probs)
}

/// Extend a joint with a new last variable drawn from `kernel` applied to
/// variable `on_var` of the joint (e.g. P_{XZ} * P_{V|X} -> P_{XZV}).
pub fn compose_joint(joint: &JointPmf, kernel: &Channel, on_var: usize) -> Result<JointPmf> {
    if on_var >= joint.num_vars() {
        return Err(RdError::Dimension(format!(
            "compose_joint: variable {on_var} out of {}",
            joint.num_vars()
        )));
    }
    if joint.dims()[on_var] != kernel.input_len() {
        return Err(RdError::Dimension(format!(
            "compose_joint: variable alphabet {} vs kernel input alphabet {}",
            joint.dims()[on_var],
            kernel.input_len()
        )));
    }
    let new_dim = kernel.output_len();
    let mut dims = joint.dims().to_vec();
    dims.push(new_dim);
    let mut probs = Vec::with_capacity(joint.as_slice().len() * new_dim);
    for (idx, p) in joint.iter() {
        let row = kernel.row(idx[on_var])?;
        for v in 0..new_dim {
            probs.push(p * row.prob(v));
        }
    }
    JointPmf::new(dims, probs)
}

/// Bayes inversion of a two-variable joint: rev[y][x] = joint[x][y] / P_Y(y).
///
/// Zero-mass output symbols produce undefined rows rather than an immediate
/// error; callers that can reach such a row must check up front.
pub fn reverse_channel(joint: &JointPmf) -> Result<Channel> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension(
            "reverse_channel expects a two-variable joint".into(),
        ));
    }
    let (nx, ny) = (joint.dims()[0], joint.dims()[1]);
    let mut rows = Vec::with_capacity(ny);
    let mut undefined = vec![false; ny];
    for y in 0..ny {
        let mass: f64 = (0..nx).map(|x| joint.prob(&[x, y])).sum();
        if mass <= 0.0 {
            rows.push(Pmf::uniform(nx));
            undefined[y] = true;
        } else {
            let row: Vec<f64> = (0..nx).map(|x| joint.prob(&[x, y]) / mass).collect();
            rows.push(Pmf {
                probs: row.iter().map(|p| p / row.iter().sum::<f64>()).collect(),
            });
        }
    }
    Ok(Channel { rows, undefined })
}

/// Mutual information I(X;Y) in bits of a two-variable joint.
pub fn mutual_information(joint: &JointPmf) -> Result<f64> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension(
            "mutual_information expects a two-variable joint".into(),
        ));
    }
    let px = joint.marginal_pmf(0)?;
    let py = joint.marginal_pmf(1)?;
    let mut info = 0.0;
    for (idx, p) in joint.iter() {
        if p > 0.0 {
            info += p * (p / (px.prob(idx[0]) * py.prob(idx[1]))).log2();
        }
    }
    Ok(info.max(0.0))
}

/// Conditional mutual information I(A;B|C) in bits, where `a`, `b`, `c` name
/// variable positions of a joint with at least three variables. Computed as a
/// P_C-weighted sum of per-slice mutual informations.
pub fn conditional_mutual_information(
    joint: &JointPmf,
    a: usize,
    b: usize,
    c: usize,
) -> Result<f64> {
    let sub = joint.marginalize(&sorted3(a, b, c))?;
    // positions of a, b, c within the sorted keep set
    let order = sorted3(a, b, c);
    let pa = order.iter().position(|&v| v == a).unwrap();
    let pb = order.iter().position(|&v| v == b).unwrap();
    let pc = order.iter().position(|&v| v == c).unwrap();
    let (da, db, dc) = (sub.dims()[pa], sub.dims()[pb], sub.dims()[pc]);
    let mut total = 0.0;
    for cv in 0..dc {
        let mut slice = vec![vec![0.0; db]; da];
        let mut mass = 0.0;
        for (idx, p) in sub.iter() {
            if idx[pc] == cv {
                slice[idx[pa]][idx[pb]] += p;
                mass += p;
            }
        }
        if mass <= 0.0 {
            continue;
        }
        for row in &mut slice {
            for v in row.iter_mut() {
                *v /= mass;
            }
        }
        total += mass * mutual_information(&JointPmf::from_matrix(&slice)?)?;
    }
    Ok(total.max(0.0))
}

fn sorted3(a: usize, b: usize, c: usize) -> Vec<usize> {
    let mut v = vec![a, b, c];
    v.sort_unstable();
    v.dedup();
    v
}

/// Conditional entropy H(B|A) in bits of a two-variable joint (variable 0
/// conditioning, variable 1 conditioned): H(A,B) - H(A).
pub fn conditional_entropy(joint: &JointPmf) -> Result<f64> {
    if joint.num_vars() != 2 {
        return Err(RdError::Dimension(
            "conditional_entropy expects a two-variable joint".into(),
        ));
    }
    Ok((joint.entropy() - joint.marginal_pmf(0)?.entropy()).max(0.0))
}

/// Total variation distance between two distributions on the same index
/// space: half the L1 distance.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(RdError::Dimension(format!(
            "total_variation: lengths {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}
