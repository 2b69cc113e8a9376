//! Quasi-static Rayleigh block-fading multiple access channel.

use std::collections::HashSet;

use rand::Rng;

use crate::dictionary::Dictionary;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{cn, cn_matrix, ComplexMatrix};
use crate::sparc::{modulate, SupportMatrix};

/// A B-bit message, one bit per byte.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Message(pub Vec<u8>);

/// User channels stored K x M (row k is h_k^T).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(pub ComplexMatrix);

impl ChannelMatrix {
    pub fn users(&self) -> usize {
        self.0.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.0.ncols()
    }
}

/// Received block and the ground truth that produced it.
#[derive(Debug, Clone)]
pub struct Observation {
    /// T x M.
    pub y: ComplexMatrix,
    pub supports: SupportMatrix,
    pub channels: ChannelMatrix,
    pub messages: Vec<Message>,
}

/// i.i.d. CN(0, 1) channel coefficients.
pub fn draw_channels<R: Rng + ?Sized>(k: usize, m: usize, rng: &mut R) -> ChannelMatrix {
    ChannelMatrix(cn_matrix(rng, k, m, 1.0))
}

/// K uniformly drawn B-bit messages; distinct unless `allow_collisions`.
pub fn draw_messages<R: Rng + ?Sized>(k: usize, bits: usize, allow_collisions: bool, rng: &mut R) -> Vec<Message> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(k);
    while out.len() < k {
        let msg = Message((0..bits).map(|_| rng.random_range(0..2u8)).collect());
        if allow_collisions || bits >= 64 || seen.insert(msg.clone()) {
            out.push(msg);
        } else if seen.len() as u128 >= 1u128 << bits {
            // message space exhausted; collisions are unavoidable
            out.push(msg);
        }
    }
    out
}

/// `Y = sum_k s_k h_k^T + W` with `s_k` from [`modulate`] and `W ~ CN(0, sigma2)`.
pub fn synthesize<R: Rng + ?Sized>(
    a: &Dictionary,
    supports: &SupportMatrix,
    channels: &ChannelMatrix,
    messages: Vec<Message>,
    sigma2: f64,
    power: f64,
    rng: &mut R,
) -> Result<Observation> {
    if supports.users() != channels.users() {
        return Err(dim_err(format!(
            "{} supports but {} channel rows",
            supports.users(),
            channels.users()
        )));
    }
    let (t, m) = (a.rows(), channels.antennas());
    let mut y = ComplexMatrix::zeros((t, m));
    for (k, support) in supports.columns.iter().enumerate() {
        let s = modulate(a, support, power)?;
        let h = channels.0.row(k);
        for ti in 0..t {
            for mi in 0..m {
                y[[ti, mi]] += s[ti] * h[mi];
            }
        }
    }
    if sigma2 > 0.0 {
        for v in y.iter_mut() {
            *v += cn(rng, sigma2);
        }
    }
    Ok(Observation { y, supports: supports.clone(), channels: channels.clone(), messages })
}

/// Fraction of transmitted messages missing from the decoded list.
pub fn pupe(truth: &[Message], decoded: &[Message]) -> Result<f64> {
    let truth: HashSet<&Message> = truth.iter().collect();
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    let decoded: HashSet<&Message> = decoded.iter().collect();
    let missed = truth.iter().filter(|m| !decoded.contains(*m)).count();
    Ok(missed as f64 / truth.len() as f64)
}

/// Decoded messages that were never transmitted.
pub fn false_alarms(truth: &[Message], decoded: &[Message]) -> usize {
    let truth: HashSet<&Message> = truth.iter().collect();
    let decoded: HashSet<&Message> = decoded.iter().collect();
    decoded.iter().filter(|m| !truth.contains(*m)).count()
}
