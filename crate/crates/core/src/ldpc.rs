//! Outer binary LDPC code with sum-product SISO decoding, plus the bridges
//! between Q-ary section probabilities and per-bit LLRs.
//!
//! LLR sign convention: positive means bit 0 is more likely.

use std::collections::HashSet;
use std::fmt::Write as _;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, RngStream};
use crate::sparc::SectionPosterior;

/// Magnitude bound on every emitted LLR.
pub const LLR_CLAMP: f64 = 40.0;
/// Probabilities are floored here before taking logs.
pub const PROB_FLOOR: f64 = 1e-30;

/// Per-bit soft information, clamped to `[-LLR_CLAMP, LLR_CLAMP]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BitBeliefs {
    pub llrs: Vec<f64>,
}

impl BitBeliefs {
    pub fn new(llrs: Vec<f64>) -> Self {
        Self { llrs: llrs.into_iter().map(clamp_llr).collect() }
    }

    pub fn zeros(n: usize) -> Self {
        Self { llrs: vec![0.0; n] }
    }

    /// Certain beliefs for a known word.
    pub fn from_bits(bits: &[u8]) -> Self {
        Self { llrs: bits.iter().map(|&b| if b == 0 { LLR_CLAMP } else { -LLR_CLAMP }).collect() }
    }

    pub fn len(&self) -> usize {
        self.llrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.llrs.is_empty()
    }
}

fn clamp_llr(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(-LLR_CLAMP, LLR_CLAMP)
    }
}

/// Result of one SISO decode.
#[derive(Debug, Clone, PartialEq)]
pub struct SisoOutput {
    pub posterior: BitBeliefs,
    /// `posterior - prior`.
    pub extrinsic: BitBeliefs,
    pub hard: Vec<u8>,
    /// Syndrome is zero and no bit was left undecided (LLR exactly 0).
    pub valid: bool,
    pub iterations: usize,
}

/// Binary LDPC code described by a sparse parity-check matrix and a
/// systematic encoder derived from it by Gaussian elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    /// check -> variable adjacency.
    checks: Vec<Vec<usize>>,
    /// variable -> check adjacency.
    vars: Vec<Vec<usize>>,
    info_positions: Vec<usize>,
    parity_positions: Vec<usize>,
    /// `parity_eq[i]` lists the message bits XORed into `parity_positions[i]`.
    parity_eq: Vec<Vec<usize>>,
    pub max_bp_iters: usize,
}

impl LdpcCode {
    /// Random regular-column construction: every column has weight 3 (or
    /// `n - k` when fewer checks exist), row weights are as equal as the
    /// edge count allows, and 4-cycles are avoided whenever the greedy
    /// placement can. For `n = 2k` this is a (3,6)-regular code. The
    /// construction retries until the parity-check matrix has full rank, and
    /// permutes columns so the message occupies the first `k` positions.
    pub fn random_regular(n: usize, k: usize, stream: RngStream, max_bp_iters: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::Code(format!("need 0 < k <= n, got n = {n}, k = {k}")));
        }
        let m = n - k;
        if m == 0 {
            return Ok(Self::from_checks(n, Vec::new(), max_bp_iters)?.systematic_first());
        }
        let wc = m.min(3);
        let mut rng = stream.rng();
        for _ in 0..500 {
            if let Some(checks) = place_edges(n, m, wc, &mut rng) {
                let code = Self::from_checks(n, checks, max_bp_iters)?;
                if code.k == k {
                    return Ok(code.systematic_first());
                }
            }
        }
        Err(Error::Code(format!("no full-rank ({n},{k}) construction found")))
    }

    /// Build from check adjacency lists; the dimension follows from the rank.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>, max_bp_iters: usize) -> Result<Self> {
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            for &v in row {
                if v >= n {
                    return Err(Error::Code(format!("check {c} references variable {v} >= n = {n}")));
                }
                vars[v].push(c);
            }
        }
        let (pivots, rref) = rref(n, &checks);
        let pivot_set: HashSet<usize> = pivots.iter().copied().collect();
        let info_positions: Vec<usize> = (0..n).filter(|v| !pivot_set.contains(v)).collect();
        let msg_index: Vec<Option<usize>> = {
            let mut idx = vec![None; n];
            for (i, &p) in info_positions.iter().enumerate() {
                idx[p] = Some(i);
            }
            idx
        };
        let parity_eq = pivots
            .iter()
            .enumerate()
            .map(|(row, _)| {
                (0..n)
                    .filter(|&j| rref[row][j] == 1 && !pivot_set.contains(&j))
                    .map(|j| msg_index[j].expect("non-pivot column"))
                    .collect()
            })
            .collect();
        Ok(Self {
            n,
            k: info_positions.len(),
            checks,
            vars,
            info_positions,
            parity_positions: pivots,
            parity_eq,
            max_bp_iters,
        })
    }

    /// Relabel columns so message bits come first and parity bits last.
    fn systematic_first(self) -> Self {
        let mut new_pos = vec![0usize; self.n];
        for (i, &p) in self.info_positions.iter().enumerate() {
            new_pos[p] = i;
        }
        for (i, &p) in self.parity_positions.iter().enumerate() {
            new_pos[p] = self.k + i;
        }
        let checks: Vec<Vec<usize>> = self
            .checks
            .iter()
            .map(|row| {
                let mut r: Vec<usize> = row.iter().map(|&v| new_pos[v]).collect();
                r.sort_unstable();
                r
            })
            .collect();
        let mut vars = vec![Vec::new(); self.n];
        for (c, row) in checks.iter().enumerate() {
            for &v in row {
                vars[v].push(c);
            }
        }
        Self {
            n: self.n,
            k: self.k,
            checks,
            vars,
            info_positions: (0..self.k).collect(),
            parity_positions: (self.k..self.n).collect(),
            parity_eq: self.parity_eq,
            max_bp_iters: self.max_bp_iters,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// Number of length-4 cycles, i.e. pairs of columns sharing two or more checks.
    pub fn four_cycles(&self) -> usize {
        let mut seen = HashSet::new();
        let mut count = 0;
        for row in &self.checks {
            for (i, &a) in row.iter().enumerate() {
                for &b in &row[i + 1..] {
                    if !seen.insert((a.min(b), a.max(b))) {
                        count += 1;
                    }
                }
            }
        }
        count
    }

    /// Systematic codeword of length n.
    pub fn codeword(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k {
            return Err(Error::Length { expected: self.k, actual: message.len() });
        }
        let mut cw = vec![0u8; self.n];
        for (i, &p) in self.info_positions.iter().enumerate() {
            cw[p] = message[i] & 1;
        }
        for (eq, &p) in self.parity_eq.iter().zip(&self.parity_positions) {
            cw[p] = eq.iter().fold(0u8, |acc, &i| acc ^ (message[i] & 1));
        }
        Ok(cw)
    }

    /// Codeword zero-padded at the tail to `padded_len` bits.
    pub fn encode(&self, message: &[u8], padded_len: usize) -> Result<Vec<u8>> {
        if padded_len < self.n {
            return Err(Error::Length { expected: self.n, actual: padded_len });
        }
        let mut cw = self.codeword(message)?;
        cw.resize(padded_len, 0);
        Ok(cw)
    }

    /// Message bits read back from the systematic positions.
    pub fn message_of(&self, word: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| word[p]).collect()
    }

    pub fn syndrome_weight(&self, word: &[u8]) -> usize {
        self.checks
            .iter()
            .filter(|row| row.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)) != 0)
            .count()
    }

    /// Zero syndrome on the first n bits; anything beyond is padding and ignored.
    pub fn check_validity(&self, hard: &[u8]) -> bool {
        hard.len() >= self.n && self.syndrome_weight(hard) == 0
    }

    /// Flooding-schedule sum-product decoding. Only the first n LLRs are used.
    pub fn siso_decode(&self, prior: &BitBeliefs) -> Result<SisoOutput> {
        if prior.len() < self.n {
            return Err(Error::Length { expected: self.n, actual: prior.len() });
        }
        let prior: Vec<f64> = prior.llrs[..self.n].iter().copied().map(clamp_llr).collect();
        // edges laid out check-major
        let mut offsets = Vec::with_capacity(self.checks.len() + 1);
        offsets.push(0);
        for row in &self.checks {
            offsets.push(offsets.last().unwrap() + row.len());
        }
        let edge_var: Vec<usize> = self.checks.iter().flatten().copied().collect();
        let mut v2c: Vec<f64> = edge_var.iter().map(|&v| prior[v]).collect();
        let mut c2v = vec![0.0; edge_var.len()];
        let mut total = prior.clone();
        let mut hard = hard_bits(&total);
        let mut iterations = 0;
        let mut scratch = Vec::new();

        while iterations < self.max_bp_iters {
            iterations += 1;
            for c in 0..self.checks.len() {
                let (lo, hi) = (offsets[c], offsets[c + 1]);
                scratch.clear();
                scratch.extend(v2c[lo..hi].iter().map(|&l| (0.5 * l).tanh()));
                // exclusive products via prefix/suffix sweeps
                let deg = hi - lo;
                let mut prefix = 1.0;
                for i in 0..deg {
                    c2v[lo + i] = prefix;
                    prefix *= scratch[i];
                }
                let mut suffix = 1.0;
                for i in (0..deg).rev() {
                    let p = (c2v[lo + i] * suffix).clamp(-1.0 + 1e-15, 1.0 - 1e-15);
                    c2v[lo + i] = clamp_llr(2.0 * p.atanh());
                    suffix *= scratch[i];
                }
            }
            total.copy_from_slice(&prior);
            for (e, &v) in edge_var.iter().enumerate() {
                total[v] += c2v[e];
            }
            for (e, &v) in edge_var.iter().enumerate() {
                v2c[e] = clamp_llr(total[v] - c2v[e]);
            }
            hard = hard_bits(&total);
            if self.syndrome_weight(&hard) == 0 {
                break;
            }
        }
        let undecided = total.contains(&0.0);
        let valid = !undecided && self.syndrome_weight(&hard) == 0;
        let posterior = BitBeliefs::new(total);
        let extrinsic = BitBeliefs::new(posterior.llrs.iter().zip(&prior).map(|(p, q)| p - q).collect());
        Ok(SisoOutput { posterior, extrinsic, hard, valid, iterations })
    }

    /// MacKay alist text.
    pub fn to_alist(&self) -> String {
        let m = self.checks.len();
        let max_col = self.vars.iter().map(Vec::len).max().unwrap_or(0);
        let max_row = self.checks.iter().map(Vec::len).max().unwrap_or(0);
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.n, m);
        let _ = writeln!(s, "{max_col} {max_row}");
        let join = |v: Vec<String>| v.join(" ");
        let _ = writeln!(s, "{}", join(self.vars.iter().map(|c| c.len().to_string()).collect()));
        let _ = writeln!(s, "{}", join(self.checks.iter().map(|r| r.len().to_string()).collect()));
        for col in &self.vars {
            let mut entries: Vec<String> = col.iter().map(|c| (c + 1).to_string()).collect();
            entries.resize(max_col, "0".into());
            let _ = writeln!(s, "{}", join(entries));
        }
        for row in &self.checks {
            let mut entries: Vec<String> = row.iter().map(|v| (v + 1).to_string()).collect();
            entries.resize(max_row, "0".into());
            let _ = writeln!(s, "{}", join(entries));
        }
        s
    }

    /// Parse MacKay alist text. The encoder is rebuilt by elimination, so
    /// message positions follow the pivot structure of the loaded matrix.
    pub fn from_alist(text: &str, max_bp_iters: usize) -> Result<Self> {
        let mut nums = text.split_whitespace().map(|w| {
            w.parse::<usize>()
                .map_err(|_| Error::Parse(format!("alist: bad integer {w:?}")))
        });
        let mut next = || nums.next().unwrap_or_else(|| Err(Error::Parse("alist: truncated".into())));
        let n = next()?;
        let m = next()?;
        let max_col = next()?;
        let max_row = next()?;
        let col_deg: Vec<usize> = (0..n).map(|_| next()).collect::<Result<_>>()?;
        let row_deg: Vec<usize> = (0..m).map(|_| next()).collect::<Result<_>>()?;
        for _ in 0..n * max_col {
            next()?;
        }
        let mut checks = Vec::with_capacity(m);
        for &deg in &row_deg {
            let mut row = Vec::with_capacity(deg);
            for j in 0..max_row {
                let v = next()?;
                if j < deg {
                    if v == 0 || v > n {
                        return Err(Error::Parse(format!("alist: variable index {v} out of range")));
                    }
                    row.push(v - 1);
                }
            }
            checks.push(row);
        }
        let code = Self::from_checks(n, checks, max_bp_iters)?;
        if code.vars.iter().map(Vec::len).ne(col_deg.iter().copied()) {
            return Err(Error::Parse("alist: column degrees disagree with row lists".into()));
        }
        Ok(code)
    }
}

fn hard_bits(llrs: &[f64]) -> Vec<u8> {
    llrs.iter().map(|&l| u8::from(l < 0.0)).collect()
}

/// Greedy randomized edge placement; `None` when it paints itself into a corner.
fn place_edges<R: Rng>(n: usize, m: usize, wc: usize, rng: &mut R) -> Option<Vec<Vec<usize>>> {
    let edges = n * wc;
    let mut capacity = vec![edges / m; m];
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    for &c in order.iter().take(edges % m) {
        capacity[c] += 1;
    }
    let mut used_pairs = vec![false; m * m];
    let mut checks = vec![Vec::new(); m];
    let mut columns: Vec<usize> = (0..n).collect();
    columns.shuffle(rng);
    for v in columns {
        let mut chosen: Vec<usize> = Vec::with_capacity(wc);
        for _ in 0..wc {
            let mut best: Option<(usize, std::cmp::Reverse<usize>, u32, usize)> = None;
            for c in 0..m {
                if capacity[c] == 0 || chosen.contains(&c) {
                    continue;
                }
                let cycles = chosen.iter().filter(|&&o| used_pairs[o * m + c]).count();
                let key = (cycles, std::cmp::Reverse(capacity[c]), rng.random::<u32>(), c);
                if best.is_none_or(|b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
            let (_, _, _, c) = best?;
            chosen.push(c);
        }
        for (i, &a) in chosen.iter().enumerate() {
            for &b in &chosen[i + 1..] {
                used_pairs[a * m + b] = true;
                used_pairs[b * m + a] = true;
            }
            capacity[a] -= 1;
            checks[a].push(v);
        }
    }
    for row in &mut checks {
        row.sort_unstable();
    }
    Some(checks)
}

/// Reduced row echelon form over GF(2). Returns pivot columns (one per
/// independent row) and the reduced dense rows, pivot rows first.
fn rref(n: usize, checks: &[Vec<usize>]) -> (Vec<usize>, Vec<Vec<u8>>) {
    let mut rows: Vec<Vec<u8>> = checks
        .iter()
        .map(|r| {
            let mut d = vec![0u8; n];
            for &v in r {
                d[v] ^= 1;
            }
            d
        })
        .collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..n {
        if rank == rows.len() {
            break;
        }
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][col] == 1) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot_row = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[col] == 1 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x ^= y;
                }
            }
        }
        pivots.push(col);
        rank += 1;
    }
    rows.truncate(rank);
    (pivots, rows)
}

/// Bit index `j` of section value `q` with `m` bits, big-endian.
fn bit_of(q: usize, j: usize, m: usize) -> usize {
    (q >> (m - 1 - j)) & 1
}

/// Marginalize each section's Q-ary distribution onto its m bits.
pub fn sections_to_bit_llrs(post: &SectionPosterior) -> BitBeliefs {
    let q_size = post.section_size();
    let m = q_size.trailing_zeros() as usize;
    let mut llrs = Vec::with_capacity(post.sections() * m);
    for row in post.probs.rows() {
        for j in 0..m {
            let (mut p0, mut p1) = (0.0, 0.0);
            for (q, &p) in row.iter().enumerate() {
                if bit_of(q, j, m) == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
            llrs.push(p0.max(PROB_FLOOR).ln() - p1.max(PROB_FLOOR).ln());
        }
    }
    BitBeliefs::new(llrs)
}

/// Product-form section prior from bit LLRs: `p(q) ∝ prod_j Pr(bit_j = bit_j(q))`.
/// `bb` must hold `L * log2(section_size)` LLRs.
pub fn bit_llrs_to_section_priors(bb: &BitBeliefs, section_size: usize) -> SectionPosterior {
    let m = section_size.trailing_zeros() as usize;
    let sections = bb.len() / m.max(1);
    let mut probs = Array2::zeros((sections, section_size));
    let mut logits = vec![0.0; section_size];
    for l in 0..sections {
        let chunk = &bb.llrs[l * m..(l + 1) * m];
        // ln Pr(bit = 0) = -ln(1 + e^{-L}), ln Pr(bit = 1) = -ln(1 + e^{L})
        let ln0: Vec<f64> = chunk.iter().map(|&x| -softplus(-x)).collect();
        let ln1: Vec<f64> = chunk.iter().map(|&x| -softplus(x)).collect();
        for (q, lg) in logits.iter_mut().enumerate() {
            *lg = (0..m).map(|j| if bit_of(q, j, m) == 0 { ln0[j] } else { ln1[j] }).sum();
        }
        let norm = log_sum_exp(&logits);
        for (q, lg) in logits.iter().enumerate() {
            probs[[l, q]] = (lg - norm).exp();
        }
    }
    SectionPosterior { probs }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;

    fn code(n: usize, k: usize) -> LdpcCode {
        LdpcCode::random_regular(n, k, RngStream::new(11, 0), 50).unwrap()
    }

    fn random_bits<R: Rng>(rng: &mut R, n: usize) -> Vec<u8> {
        (0..n).map(|_| rng.random_range(0..2u8)).collect()
    }

    #[test]
    fn regular_construction_shape() {
        let c = code(128, 64);
        assert_eq!((c.n(), c.k()), (128, 64));
        assert!(c.vars.iter().all(|v| v.len() == 3));
        assert!(c.checks.iter().all(|r| r.len() == 6));
        assert_eq!(c.info_positions(), (0..64).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn full_scale_construction() {
        let c = LdpcCode::random_regular(110, 100, RngStream::new(2, 0), 50).unwrap();
        assert_eq!((c.n(), c.k()), (110, 100));
        assert!(c.vars.iter().all(|v| v.len() == 3));
    }

    #[test]
    fn desk_code_is_four_cycle_free() {
        let c = code(128, 64);
        assert_eq!(c.four_cycles(), 0);
    }

    #[test]
    fn zero_message_encodes_to_zero() {
        let c = code(32, 16);
        assert_eq!(c.encode(&[0; 16], 36).unwrap(), vec![0; 36]);
    }

    #[test]
    fn encoded_words_satisfy_checks_and_pad() {
        let c = code(32, 16);
        let mut rng = RngStream::new(5, 5).rng();
        for _ in 0..200 {
            let msg = random_bits(&mut rng, 16);
            let cw = c.encode(&msg, 40).unwrap();
            assert_eq!(cw.len(), 40);
            assert!(cw[32..].iter().all(|&b| b == 0));
            assert_eq!(c.syndrome_weight(&cw), 0);
            assert_eq!(c.message_of(&cw), msg);
        }
        assert!(c.encode(&[0; 15], 40).is_err());
        assert!(c.encode(&[0; 16], 31).is_err());
    }

    #[test]
    fn single_flip_breaks_validity() {
        let c = code(32, 16);
        let mut rng = RngStream::new(6, 0).rng();
        let cw = c.codeword(&random_bits(&mut rng, 16)).unwrap();
        assert!(c.check_validity(&cw));
        for i in 0..32 {
            let mut w = cw.clone();
            w[i] ^= 1;
            assert!(!c.check_validity(&w));
        }
        // padding is ignored
        let mut padded = cw.clone();
        padded.extend([1, 1]);
        assert!(c.check_validity(&padded));
    }

    #[test]
    fn noiseless_decode_takes_one_iteration() {
        let c = code(64, 32);
        let mut rng = RngStream::new(7, 0).rng();
        let cw = c.codeword(&random_bits(&mut rng, 32)).unwrap();
        let out = c.siso_decode(&BitBeliefs::from_bits(&cw)).unwrap();
        assert!(out.valid);
        assert_eq!(out.hard, cw);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_llrs_are_never_valid() {
        let c = code(32, 16);
        let out = c.siso_decode(&BitBeliefs::zeros(32)).unwrap();
        assert!(!out.valid);
        assert!(out.posterior.llrs.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn extrinsic_is_posterior_minus_prior() {
        let c = code(32, 16);
        let mut rng = RngStream::new(8, 0).rng();
        let prior = BitBeliefs::new((0..32).map(|_| rng.random_range(-3.0..3.0)).collect());
        let out = c.siso_decode(&prior).unwrap();
        for i in 0..32 {
            let d = out.posterior.llrs[i] - prior.llrs[i];
            assert!((out.extrinsic.llrs[i] - d.clamp(-LLR_CLAMP, LLR_CLAMP)).abs() < 1e-12);
            assert!(out.posterior.llrs[i].abs() <= LLR_CLAMP);
        }
    }

    #[test]
    fn alist_round_trip() {
        let c = code(32, 16);
        let text = c.to_alist();
        let back = LdpcCode::from_alist(&text, 50).unwrap();
        assert_eq!(back.checks(), c.checks());
        assert_eq!(back.k(), 16);
        let mut rng = RngStream::new(9, 0).rng();
        let cw = back.codeword(&random_bits(&mut rng, 16)).unwrap();
        assert!(c.check_validity(&cw));
        assert!(LdpcCode::from_alist("3 1\n1 3\n1 1", 10).is_err());
    }

    #[test]
    fn bridge_examples() {
        let p = SectionPosterior { probs: array![[0.5, 0.5]] };
        assert_eq!(sections_to_bit_llrs(&p).llrs, vec![0.0]);
        let p = SectionPosterior { probs: array![[0.0, 0.0, 0.0, 1.0]] };
        assert_eq!(sections_to_bit_llrs(&p).llrs, vec![-LLR_CLAMP, -LLR_CLAMP]);
        let p = SectionPosterior::uniform(1, 4);
        assert_eq!(sections_to_bit_llrs(&p).llrs, vec![0.0, 0.0]);

        let u = bit_llrs_to_section_priors(&BitBeliefs::zeros(6), 8);
        assert!(u.probs.iter().all(|&p| (p - 0.125).abs() < 1e-15));
        let d = bit_llrs_to_section_priors(&BitBeliefs::new(vec![LLR_CLAMP; 4]), 4);
        assert!((d.probs[[0, 0]] - 1.0).abs() < 1e-12 && (d.probs[[1, 0]] - 1.0).abs() < 1e-12);
    }
}
