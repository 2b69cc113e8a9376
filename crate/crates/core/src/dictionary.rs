//! The shared T x N dictionary and its forward / adjoint applications.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{cn, ComplexMatrix, RngStream, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DictionaryKind {
    /// i.i.d. complex Gaussian entries, columns normalized.
    Gaussian,
    /// T rows of the N-point DFT drawn uniformly without replacement.
    SubsampledDft,
}

impl fmt::Display for DictionaryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DictionaryKind::Gaussian => f.write_str("gaussian"),
            DictionaryKind::SubsampledDft => f.write_str("subsampled_dft"),
        }
    }
}

impl FromStr for DictionaryKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(DictionaryKind::Gaussian),
            "subsampled_dft" | "dft" => Ok(DictionaryKind::SubsampledDft),
            other => Err(Error::Parse(format!("unknown dictionary kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    pub kind: DictionaryKind,
    /// T x N, unit-norm columns.
    pub matrix: ComplexMatrix,
    pub column_norms: Vec<f64>,
    /// Elementwise |a_tn|^2, reused by every variance recursion.
    pub abs2: Array2<f64>,
    pub seed: u64,
    pub stream_id: u64,
}

impl Dictionary {
    /// Builds a dictionary deterministically from `(kind, T, N, stream)`.
    pub fn build(kind: DictionaryKind, t: usize, n: usize, stream: RngStream) -> Result<Self> {
        if t == 0 || n == 0 {
            return Err(dim_err("dictionary needs T, N >= 1"));
        }
        let mut rng = stream.rng();
        let matrix = match kind {
            DictionaryKind::Gaussian => {
                let mut a = ComplexMatrix::zeros((t, n));
                for v in a.iter_mut() {
                    *v = cn(&mut rng, 1.0);
                }
                a
            }
            DictionaryKind::SubsampledDft => {
                if t > n {
                    return Err(dim_err(format!(
                        "subsampled DFT needs T <= N, got T = {t}, N = {n}"
                    )));
                }
                let mut rows = index::sample(&mut rng, n, t).into_vec();
                rows.sort_unstable();
                let mut a = ComplexMatrix::zeros((t, n));
                for (ti, &r) in rows.iter().enumerate() {
                    for col in 0..n {
                        // (r * col) mod n keeps the phase argument small and exact
                        let k = ((r as u128 * col as u128) % n as u128) as f64;
                        a[[ti, col]] = C64::from_polar(1.0, -2.0 * std::f64::consts::PI * k / n as f64);
                    }
                }
                a
            }
        };
        Ok(Self::from_matrix(kind, matrix, stream.seed, stream.stream_id))
    }

    /// Wraps an arbitrary matrix, normalizing its columns. Zero columns are left as is.
    pub fn from_matrix(kind: DictionaryKind, mut matrix: ComplexMatrix, seed: u64, stream_id: u64) -> Self {
        for mut col in matrix.columns_mut() {
            let norm = col.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                col.mapv_inplace(|v| v / norm);
            }
        }
        let column_norms = matrix
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        let abs2 = matrix.mapv(|v| v.norm_sqr());
        Self { kind, matrix, column_norms, abs2, seed, stream_id }
    }

    /// Same kind and seed, different matrix; columns are kept as given.
    pub fn with_matrix(&self, matrix: ComplexMatrix) -> Self {
        let column_norms = matrix
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        let abs2 = matrix.mapv(|v| v.norm_sqr());
        Self { kind: self.kind, matrix, column_norms, abs2, seed: self.seed, stream_id: self.stream_id }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `A X` for an N x M input.
    pub fn forward(&self, x: &ComplexMatrix) -> Result<ComplexMatrix> {
        if x.nrows() != self.cols() {
            return Err(dim_err(format!("forward: A is {}x{}, X has {} rows", self.rows(), self.cols(), x.nrows())));
        }
        Ok(self.matrix.dot(x))
    }

    /// `A^H Y` for a T x M input.
    pub fn adjoint(&self, y: &ComplexMatrix) -> Result<ComplexMatrix> {
        if y.nrows() != self.rows() {
            return Err(dim_err(format!("adjoint: A is {}x{}, Y has {} rows", self.rows(), self.cols(), y.nrows())));
        }
        let ah = self.matrix.t().mapv(|v| v.conj());
        Ok(ah.dot(y))
    }

    const MAGIC: &'static [u8; 4] = b"BSPD";

    /// Binary dump: magic, kind byte, T, N, seed, stream (u64 LE), then the
    /// row-major entries as interleaved little-endian (re, im) doubles.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        let kind = match self.kind {
            DictionaryKind::Gaussian => 0u8,
            DictionaryKind::SubsampledDft => 1u8,
        };
        w.write_all(&[kind])?;
        for v in [self.rows() as u64, self.cols() as u64, self.seed, self.stream_id] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in self.matrix.iter() {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Parse("not a dictionary dump".into()));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        let kind = match kind[0] {
            0 => DictionaryKind::Gaussian,
            1 => DictionaryKind::SubsampledDft,
            k => return Err(Error::Parse(format!("unknown dictionary kind tag {k}"))),
        };
        let mut word = [0u8; 8];
        let mut next_u64 = |r: &mut R| -> Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let t = next_u64(&mut r)? as usize;
        let n = next_u64(&mut r)? as usize;
        let seed = next_u64(&mut r)?;
        let stream_id = next_u64(&mut r)?;
        let mut matrix = ComplexMatrix::zeros((t, n));
        let mut buf = [0u8; 16];
        for v in matrix.iter_mut() {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            *v = C64::new(re, im);
        }
        let column_norms = matrix
            .columns()
            .into_iter()
            .map(|c| c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt())
            .collect();
        let abs2 = matrix.mapv(|v| v.norm_sqr());
        Ok(Self { kind, matrix, column_norms, abs2, seed, stream_id })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{cn_matrix, hermitian, inner};

    fn stream(id: u64) -> RngStream {
        RngStream::new(9, id)
    }

    #[test]
    fn gaussian_is_deterministic() {
        let a = Dictionary::build(DictionaryKind::Gaussian, 4, 8, stream(0)).unwrap();
        let b = Dictionary::build(DictionaryKind::Gaussian, 4, 8, stream(0)).unwrap();
        assert_eq!(a.matrix, b.matrix);
        let c = Dictionary::build(DictionaryKind::Gaussian, 4, 8, stream(1)).unwrap();
        assert_ne!(a.matrix, c.matrix);
    }

    #[test]
    fn columns_have_unit_norm() {
        for kind in [DictionaryKind::Gaussian, DictionaryKind::SubsampledDft] {
            let d = Dictionary::build(kind, 2, 4, stream(3)).unwrap();
            for norm in &d.column_norms {
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_dft_is_unitary() {
        let d = Dictionary::build(DictionaryKind::SubsampledDft, 4, 4, stream(0)).unwrap();
        let gram = hermitian(&d.matrix).dot(&d.matrix);
        for ((i, j), v) in gram.indexed_iter() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - C64::new(expect, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn dft_rejects_tall() {
        assert!(Dictionary::build(DictionaryKind::SubsampledDft, 5, 4, stream(0)).is_err());
        assert!(Dictionary::build(DictionaryKind::Gaussian, 0, 4, stream(0)).is_err());
    }

    #[test]
    fn forward_selects_columns_and_is_linear() {
        let d = Dictionary::build(DictionaryKind::Gaussian, 4, 8, stream(5)).unwrap();
        let zero = ComplexMatrix::zeros((8, 3));
        assert!(d.forward(&zero).unwrap().iter().all(|v| v.norm() == 0.0));
        let mut x = ComplexMatrix::zeros((8, 1));
        x[[6, 0]] = C64::new(1.0, 0.0);
        let y = d.forward(&x).unwrap();
        for t in 0..4 {
            assert_eq!(y[[t, 0]], d.matrix[[t, 6]]);
        }
        assert!(d.forward(&ComplexMatrix::zeros((7, 1))).is_err());
        assert!(d.adjoint(&ComplexMatrix::zeros((5, 1))).is_err());
    }

    #[test]
    fn identity_dictionary_forward() {
        let eye = ComplexMatrix::from_shape_fn((3, 3), |(i, j)| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let d = Dictionary::from_matrix(DictionaryKind::Gaussian, eye, 0, 0);
        let mut rng = stream(1).rng();
        let x = cn_matrix(&mut rng, 3, 2, 1.0);
        assert_eq!(d.forward(&x).unwrap(), x);
    }

    #[test]
    fn adjoint_inverts_unitary_forward() {
        let d = Dictionary::build(DictionaryKind::SubsampledDft, 8, 8, stream(2)).unwrap();
        let mut rng = stream(3).rng();
        let x = cn_matrix(&mut rng, 8, 3, 1.0);
        let back = d.adjoint(&d.forward(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
        assert!(d.adjoint(&ComplexMatrix::zeros((8, 2))).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn adjoint_identity_random() {
        for i in 0..100 {
            let kind = if i % 2 == 0 { DictionaryKind::Gaussian } else { DictionaryKind::SubsampledDft };
            let d = Dictionary::build(kind, 6, 10, stream(100 + i)).unwrap();
            let mut rng = stream(1000 + i).rng();
            let x = cn_matrix(&mut rng, 10, 3, 1.0);
            let y = cn_matrix(&mut rng, 6, 3, 1.0);
            let lhs = inner(&d.forward(&x).unwrap(), &y);
            let rhs = inner(&x, &d.adjoint(&y).unwrap());
            assert!((lhs - rhs).norm() <= 1e-9 * lhs.norm().max(1.0));
        }
    }

    #[test]
    fn dump_round_trip() {
        let d = Dictionary::build(DictionaryKind::SubsampledDft, 3, 8, stream(4)).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 4 + 1 + 32 + 16 * 24);
        let back = Dictionary::read_from(&buf[..]).unwrap();
        assert_eq!(back, d);
        for norm in &back.column_norms {
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!(Dictionary::read_from(&b"XXXX"[..]).is_err());
    }
}
