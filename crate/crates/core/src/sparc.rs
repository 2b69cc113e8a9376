//! Inner SPARC code: outer codeword bits <-> one-hot section supports, and
//! the power-normalized transmit signal `s = sqrt(alpha) A c`.
//!
//! Bits inside a section chunk are read big-endian: bit `j` of section `l`
//! is bit `m - 1 - j` of the section index.

use ndarray::Array2;

use crate::dictionary::Dictionary;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{ComplexMatrix, ComplexVector};

/// One user's support: one active index per section.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportVector {
    sections: Vec<usize>,
    section_size: usize,
}

impl SupportVector {
    pub fn new(sections: Vec<usize>, section_size: usize) -> Result<Self> {
        if let Some(&bad) = sections.iter().find(|&&s| s >= section_size) {
            return Err(dim_err(format!("section index {bad} outside [0, {section_size})")));
        }
        Ok(Self { sections, section_size })
    }

    pub fn sections(&self) -> &[usize] {
        &self.sections
    }

    pub fn section_size(&self) -> usize {
        self.section_size
    }

    pub fn len(&self) -> usize {
        self.sections.len() * self.section_size
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    /// Positions of the ones in the length-N vector.
    pub fn active_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.sections
            .iter()
            .enumerate()
            .map(move |(l, &q)| l * self.section_size + q)
    }

    pub fn to_dense(&self) -> Vec<u8> {
        let mut v = vec![0u8; self.len()];
        for n in self.active_indices() {
            v[n] = 1;
        }
        v
    }

    /// Inverse of [`to_dense`](Self::to_dense); rejects anything that is not
    /// exactly one-hot per section.
    pub fn from_dense(dense: &[u8], section_size: usize) -> Result<Self> {
        if section_size == 0 || !dense.len().is_multiple_of(section_size) {
            return Err(dim_err("dense length is not a multiple of Q"));
        }
        let mut sections = Vec::with_capacity(dense.len() / section_size);
        for chunk in dense.chunks(section_size) {
            let ones: Vec<usize> = chunk.iter().enumerate().filter(|(_, &b)| b != 0).map(|(i, _)| i).collect();
            match ones.as_slice() {
                [q] if chunk[*q] == 1 => sections.push(*q),
                _ => return Err(dim_err("section is not one-hot")),
            }
        }
        Ok(Self { sections, section_size })
    }
}

/// The N x K support matrix C, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportMatrix {
    pub columns: Vec<SupportVector>,
}

impl SupportMatrix {
    pub fn users(&self) -> usize {
        self.columns.len()
    }

    pub fn to_dense(&self, n: usize) -> Array2<f64> {
        let mut c = Array2::zeros((n, self.columns.len()));
        for (k, col) in self.columns.iter().enumerate() {
            for idx in col.active_indices() {
                c[[idx, k]] = 1.0;
            }
        }
        c
    }
}

/// Per-user probability table over the Q candidates of each of the L sections.
#[derive(Debug, Clone, PartialEq)]
pub struct SectionPosterior {
    /// L x Q, rows sum to one.
    pub probs: Array2<f64>,
}

impl SectionPosterior {
    pub fn uniform(sections: usize, section_size: usize) -> Self {
        Self { probs: Array2::from_elem((sections, section_size), 1.0 / section_size as f64) }
    }

    pub fn sections(&self) -> usize {
        self.probs.nrows()
    }

    pub fn section_size(&self) -> usize {
        self.probs.ncols()
    }

    /// Largest |row sum - 1| over all sections.
    pub fn max_mass_error(&self) -> f64 {
        self.probs
            .rows()
            .into_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Maps `L*m` codeword bits onto the section indices.
pub fn encode_sections(bits: &[u8], sections: usize, bits_per_section: usize) -> Result<SupportVector> {
    let expected = sections * bits_per_section;
    if bits.len() != expected {
        return Err(Error::Length { expected, actual: bits.len() });
    }
    let idx = bits
        .chunks(bits_per_section.max(1))
        .take(sections)
        .map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize))
        .collect();
    SupportVector::new(idx, 1 << bits_per_section)
}

/// Exact inverse of [`encode_sections`].
pub fn decode_sections(v: &SupportVector) -> Vec<u8> {
    let m = v.section_size().trailing_zeros() as usize;
    let mut bits = Vec::with_capacity(v.sections().len() * m);
    for &q in v.sections() {
        for j in (0..m).rev() {
            bits.push(((q >> j) & 1) as u8);
        }
    }
    bits
}

/// `A c` without the power normalization.
pub fn superpose(a: &Dictionary, v: &SupportVector) -> Result<ComplexVector> {
    if v.len() != a.cols() {
        return Err(dim_err(format!("support length {} != dictionary width {}", v.len(), a.cols())));
    }
    let mut s = ComplexVector::zeros(a.rows());
    for n in v.active_indices() {
        s += &a.matrix.column(n);
    }
    Ok(s)
}

/// `s = sqrt(alpha) A c` with `alpha = P / ||A c||^2`, so `||s||^2 = P`.
pub fn modulate(a: &Dictionary, v: &SupportVector, power: f64) -> Result<ComplexVector> {
    let s = superpose(a, v)?;
    if power == 0.0 {
        return Ok(ComplexVector::zeros(a.rows()));
    }
    let energy: f64 = s.iter().map(|x| x.norm_sqr()).sum();
    if energy <= 0.0 || !energy.is_finite() {
        return Err(Error::Degenerate("||A c|| = 0".into()));
    }
    let scale = (power / energy).sqrt();
    Ok(s.mapv(|x| x * scale))
}

/// Same as [`modulate`] but returned as a T x 1 matrix.
pub fn modulate_matrix(a: &Dictionary, v: &SupportVector, power: f64) -> Result<ComplexMatrix> {
    let s = modulate(a, v, power)?;
    let t = s.len();
    Ok(s.into_shape_with_order((t, 1)).expect("contiguous vector"))
}

/// Per-section argmax; ties resolve to the smallest index.
pub fn hard_decision(post: &SectionPosterior) -> SupportVector {
    let sections = post
        .probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (q, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = q;
                }
            }
            best
        })
        .collect();
    SupportVector { sections, section_size: post.section_size() }
}
