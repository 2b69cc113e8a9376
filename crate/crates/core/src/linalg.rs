//! Complex matrix aliases, seeded random streams and small numeric helpers
//! shared by every other module.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;

/// Dense complex matrix, row-major. Entries are expected to stay finite.
pub type ComplexMatrix = Array2<C64>;
pub type ComplexVector = Array1<C64>;

/// A deterministic random stream identified by `(seed, stream_id)`.
///
/// Two streams with equal identifiers produce identical draw sequences on
/// every platform and regardless of thread scheduling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Materialize the generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Circularly-symmetric complex Gaussian draw with the given variance.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re * s, im * s)
}

/// `rows x cols` matrix of i.i.d. CN(0, variance) entries, drawn row-major.
pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, variance: f64) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros((rows, cols));
    for v in out.iter_mut() {
        *v = cn(rng, variance);
    }
    out
}

pub fn frobenius_sq(m: &ComplexMatrix) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum()
}

pub fn all_finite(m: &ComplexMatrix) -> bool {
    m.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// Frobenius inner product `<a, b> = sum conj(a) * b`.
pub fn inner(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Conjugate transpose.
pub fn hermitian(m: &ComplexMatrix) -> ComplexMatrix {
    m.t().mapv(|v| v.conj())
}

/// Numerically stable `ln(sum(exp(v)))`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
