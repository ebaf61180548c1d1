//! Distortion measures and i.i.d. source models.

use rand::Rng;

use crate::error::{RdError, Result};
use crate::prob::{JointPmf, Pmf, Symbol};

/// Per-letter distortion matrix d[x][y] with its maximum.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMeasure {
    d: Vec<Vec<f64>>,
    d_max: f64,
}

impl DistortionMeasure {
    pub fn new(d: Vec<Vec<f64>>) -> Result<Self> {
        if d.is_empty() || d[0].is_empty() {
            return Err(RdError::Dimension("empty distortion matrix".into()));
        }
        let cols = d[0].len();
        let mut d_max = 0.0_f64;
        for row in &d {
            if row.len() != cols {
                return Err(RdError::Dimension("ragged distortion matrix".into()));
            }
            for &v in row {
                if !v.is_finite() || v < 0.0 {
                    return Err(RdError::InvalidDistribution(format!(
                        "distortion entries must be finite and nonnegative, got {v}"
                    )));
                }
                d_max = d_max.max(v);
            }
        }
        Ok(DistortionMeasure { d, d_max })
    }

    /// Hamming distortion on a k-symbol alphabet.
    pub fn hamming(k: usize) -> Self {
        let d = (0..k)
            .map(|x| (0..k).map(|y| if x == y { 0.0 } else { 1.0 }).collect())
            .collect();
        DistortionMeasure { d, d_max: 1.0 }
    }

    pub fn per_letter(&self, x: usize, y: usize) -> f64 {
        self.d[x][y]
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn source_len(&self) -> usize {
        self.d.len()
    }

    pub fn recon_len(&self) -> usize {
        self.d[0].len()
    }
}

/// i.i.d. source over one or two variables at blocklength n.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub joint: JointPmf,
    pub n: usize,
}

impl SourceModel {
    pub fn new(joint: JointPmf, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(RdError::Dimension("blocklength must be >= 1".into()));
        }
        if joint.num_vars() > 2 {
            return Err(RdError::Dimension(
                "source model supports 1 or 2 variables".into(),
            ));
        }
        Ok(SourceModel { joint, n })
    }

    pub fn single(pmf: &Pmf, n: usize) -> Result<Self> {
        let joint = JointPmf::new(vec![pmf.len()], pmf.as_slice().to_vec())?;
        SourceModel::new(joint, n)
    }

    /// Draw n i.i.d. symbols (or symbol pairs) from the model.
    pub fn sample_iid<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Vec<Symbol>> {
        let vars = self.joint.num_vars();
        let mut seqs = vec![Vec::with_capacity(self.n); vars];
        for _ in 0..self.n {
            let idx = self.joint.sample(rng);
            for (v, &s) in idx.iter().enumerate() {
                seqs[v].push(s as Symbol);
            }
        }
        seqs
    }
}

/// Per-letter average distortion between two equal-length sequences.
pub fn sequence_distortion(
    x_seq: &[Symbol],
    y_seq: &[Symbol],
    d: &DistortionMeasure,
) -> Result<f64> {
    if x_seq.len() != y_seq.len() || x_seq.is_empty() {
        return Err(RdError::Dimension(format!(
            "sequence_distortion: lengths {} vs {}",
            x_seq.len(),
            y_seq.len()
        )));
    }
    let sum: f64 = x_seq
        .iter()
        .zip(y_seq)
        .map(|(&x, &y)| d.per_letter(x as usize, y as usize))
        .sum();
    Ok(sum / x_seq.len() as f64)
}

/// Expected per-letter distortion of a two-variable joint.
pub fn expected_distortion(joint: &JointPmf, d: &DistortionMeasure) -> Result<f64> {
    if joint.num_vars() != 2
        || joint.dims()[0] != d.source_len()
        || joint.dims()[1] != d.recon_len()
    {
        return Err(RdError::Dimension(format!(
            "expected_distortion: joint dims {:?} vs distortion {}x{}",
            joint.dims(),
            d.source_len(),
            d.recon_len()
        )));
    }
    Ok(joint
        .iter()
        .map(|(idx, p)| p * d.per_letter(idx[0], idx[1]))
        .sum())
}
