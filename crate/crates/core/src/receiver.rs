//! Iterative receiver: BiGAMP detection, per-slot SISO decoding of the outer
//! code with extrinsic feedback, and successive interference cancellation.

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::channel::Message;
use crate::config::ValidatedConfig;
use crate::detector::{self, ExtrinsicPriors};
use crate::dictionary::Dictionary;
use crate::error::{dim_err, Error, Result};
use crate::ldpc::{bit_llrs_to_section_priors, sections_to_bit_llrs, BitBeliefs, LdpcCode, LLR_CLAMP};
use crate::linalg::{ComplexMatrix, ComplexVector, C64};
use crate::sparc::{encode_sections, modulate, superpose, SectionPosterior, SupportVector};

/// One validated decode: the message, its re-encoded support and the
/// physical channel estimate used for cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedEntry {
    pub message: Message,
    pub support: SupportVector,
    pub channel: ComplexVector,
    /// Detector slots whose decode produced this message.
    pub slots: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedSet {
    pub entries: Vec<DecodedEntry>,
    pub round: usize,
}

impl DecodedSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn messages(&self) -> impl Iterator<Item = &Message> {
        self.entries.iter().map(|e| &e.message)
    }
}

/// Output of one detection/decoding round.
#[derive(Debug, Clone)]
pub struct TurboOutcome {
    pub valid: DecodedSet,
    /// Section beliefs of the last detector pass, one table per slot.
    pub posteriors: Vec<SectionPosterior>,
    /// Physical channel estimates of the last pass, slots x M.
    pub channels: ComplexMatrix,
    pub detector_iterations: usize,
    pub passes: usize,
    pub restarts: usize,
    pub invariants: detector::InvariantMonitor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub round: usize,
    pub decoded: usize,
    pub residual_energy: f64,
}

#[derive(Debug, Clone)]
pub struct ReceiverResult {
    pub decoded: Vec<Message>,
    pub sets: Vec<DecodedSet>,
    pub rounds: usize,
    /// Residual energy before the first round and after every SIC step.
    pub residual_energies: Vec<f64>,
    pub trace: Vec<RoundTrace>,
    pub detector_iterations: usize,
    pub invariants: detector::InvariantMonitor,
    pub abort: Option<String>,
}

impl ReceiverResult {
    pub fn per_round_counts(&self) -> Vec<usize> {
        self.sets.iter().map(DecodedSet::len).collect()
    }
}

/// Receiver-side view of a scenario: dictionary, outer code and the
/// validated configuration.
#[derive(Debug, Clone, Copy)]
pub struct ReceiverContext<'a> {
    pub config: &'a ValidatedConfig,
    pub dictionary: &'a Dictionary,
    pub code: &'a LdpcCode,
}

impl ReceiverContext<'_> {
    fn padded_len(&self) -> usize {
        self.config.sections * self.config.bits_per_section
    }

    /// Re-encode a message into its SPARC support.
    pub fn support_of(&self, message: &Message) -> Result<SupportVector> {
        let word = self.code.encode(&message.0, self.padded_len())?;
        encode_sections(&word, self.config.sections, self.config.bits_per_section)
    }
}

/// Consecutive empty rounds retried from a fresh detector start before the
/// receiver gives up.
pub const EMPTY_ROUND_RETRIES: usize = 2;

pub fn slot_count(slot_factor: f64, k_current: usize) -> usize {
    (slot_factor * k_current as f64).ceil() as usize
}

/// Section prior for the detector from decoder extrinsic LLRs; padding bits
/// are known zeros.
fn priors_from_extrinsic(ctx: &ReceiverContext<'_>, extrinsic: &BitBeliefs) -> SectionPosterior {
    let mut llrs = extrinsic.llrs.clone();
    llrs.resize(ctx.padded_len(), LLR_CLAMP);
    bit_llrs_to_section_priors(&BitBeliefs::new(llrs), ctx.config.section_size)
}

/// Detector ↔ decoder passes on the current residual. Returns at the first
/// pass that yields valid new messages, or after `turbo_inner` passes.
pub fn turbo_round<R: Rng + ?Sized>(
    ctx: &ReceiverContext<'_>,
    y_res: &ComplexMatrix,
    k_current: usize,
    listed: &HashSet<Message>,
    rng: &mut R,
) -> Result<TurboOutcome> {
    if k_current == 0 {
        return Err(dim_err("turbo round needs K_current >= 1"));
    }
    let cfg = ctx.config;
    let slots = slot_count(cfg.slot_factor, k_current);
    let mut priors = ExtrinsicPriors::uniform(slots, cfg.sections, cfg.section_size);
    let mut iterations = 0;
    let mut restarts = 0;
    let mut invariants = detector::InvariantMonitor::default();
    let passes = cfg.turbo_inner.max(1);
    let mut last = None;
    for pass in 1..=passes {
        let out = detector::run(y_res, ctx.dictionary, cfg, &priors, rng)?;
        iterations += out.iterations;
        restarts += out.restarts;
        invariants.merge(&out.invariants);

        let decodes: Vec<Result<crate::ldpc::SisoOutput>> = out
            .posteriors
            .par_iter()
            .map(|post| ctx.code.siso_decode(&sections_to_bit_llrs(post)))
            .collect();

        let channels = physical_channels(ctx, &out);
        let mut found: Vec<DecodedEntry> = Vec::new();
        for (slot, dec) in decodes.into_iter().enumerate() {
            // a failed slot yields no message
            let Ok(dec) = dec else { continue };
            if dec.valid {
                let message = Message(ctx.code.message_of(&dec.hard));
                if listed.contains(&message) {
                    continue;
                }
                let support = ctx.support_of(&message)?;
                let h = slot_channel(ctx, &out, slot, &support)?;
                match found.iter_mut().find(|e| e.message == message) {
                    Some(e) => {
                        // slots sharing a support split one user's channel
                        e.channel += &h;
                        e.slots.push(slot);
                    }
                    None => found.push(DecodedEntry { message, support, channel: h, slots: vec![slot] }),
                }
            } else {
                priors.0[slot] = priors_from_extrinsic(ctx, &dec.extrinsic);
            }
        }
        let done = !found.is_empty() || pass == passes;
        last = Some(TurboOutcome {
            valid: DecodedSet { entries: found, round: 0 },
            posteriors: out.posteriors,
            channels,
            detector_iterations: iterations,
            passes: pass,
            restarts,
            invariants,
        });
        if done {
            break;
        }
    }
    Ok(last.expect("at least one pass"))
}

/// `sqrt(alpha_k)` of a support: `sqrt(P) / ||A c||`.
fn amplitude(ctx: &ReceiverContext<'_>, support: &SupportVector) -> Result<f64> {
    let ac = superpose(ctx.dictionary, support)?;
    let norm: f64 = ac.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("||A c|| = 0".into()));
    }
    Ok(ctx.config.power.sqrt() / norm)
}

/// Physical channel of one slot given the support it decoded to:
/// `Y ≈ g A c mu_h^T = sqrt(alpha) A c h^T`.
fn slot_channel(
    ctx: &ReceiverContext<'_>,
    out: &detector::DetectorOutput,
    slot: usize,
    support: &SupportVector,
) -> Result<ComplexVector> {
    let scale = out.gain / amplitude(ctx, support)?;
    Ok(out.mu_h.row(slot).mapv(|v| v * scale))
}

/// Channel estimates of every slot in physical units, taking each slot's
/// amplitude at the unit-norm-column value `sqrt(P / L)`.
fn physical_channels(ctx: &ReceiverContext<'_>, out: &detector::DetectorOutput) -> ComplexMatrix {
    let nominal = (ctx.config.power / ctx.config.sections as f64).sqrt();
    out.mu_h.mapv(|v| v * (out.gain / nominal))
}

pub fn energy(y: &ComplexMatrix) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum()
}

/// `Y - sum_k s_k h_k^T` over the decoded entries.
pub fn sic_subtract(y_res: &ComplexMatrix, a: &Dictionary, decoded: &DecodedSet, power: f64) -> Result<ComplexMatrix> {
    let mut y = y_res.clone();
    for e in &decoded.entries {
        if e.channel.len() != y.ncols() {
            return Err(dim_err(format!("channel of length {} for M = {}", e.channel.len(), y.ncols())));
        }
        let s = modulate(a, &e.support, power)?;
        if s.len() != y.nrows() {
            return Err(dim_err(format!("codeword of length {} for T = {}", s.len(), y.nrows())));
        }
        for (t, &st) in s.iter().enumerate() {
            for (m, &h) in e.channel.iter().enumerate() {
                y[[t, m]] -= st * h;
            }
        }
    }
    Ok(y)
}

/// Joint least-squares channels for the decoded entries, fitted to a
/// residual that still contains their contributions.
pub fn joint_ls_channels(y_res: &ComplexMatrix, a: &Dictionary, decoded: &mut DecodedSet, power: f64) -> Result<()> {
    if decoded.entries.is_empty() {
        return Ok(());
    }
    let h = Projector::new(a, decoded.entries.iter().map(|e| &e.support), power)?.coefficients(y_res)?;
    for (j, e) in decoded.entries.iter_mut().enumerate() {
        e.channel = h.row(j).to_owned();
    }
    Ok(())
}

/// Orthogonal projection onto the complement of a set of codeword signals.
pub struct Projector {
    signals: ComplexMatrix,
    signals_h: ComplexMatrix,
    gram: ComplexMatrix,
}

impl Projector {
    pub fn new<'s>(a: &Dictionary, supports: impl Iterator<Item = &'s SupportVector>, power: f64) -> Result<Self> {
        let cols: Vec<ComplexVector> = supports.map(|s| modulate(a, s, power)).collect::<Result<_>>()?;
        let signals = ComplexMatrix::from_shape_fn((a.rows(), cols.len()), |(i, j)| cols[j][i]);
        let signals_h = signals.t().mapv(|v| v.conj());
        let gram = signals_h.dot(&signals);
        Ok(Self { signals, signals_h, gram })
    }

    /// Least-squares coefficients of `m` on the signals, one row per signal.
    pub fn coefficients(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        solve(self.gram.clone(), self.signals_h.dot(m))
    }

    pub fn apply(&self, m: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(m - &self.signals.dot(&self.coefficients(m)?))
    }
}

/// Gaussian elimination with partial pivoting for a small dense system.
fn solve(mut a: ComplexMatrix, mut b: ComplexMatrix) -> Result<ComplexMatrix> {
    let n = a.nrows();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[[i, col]].norm().total_cmp(&a[[j, col]].norm()))
            .expect("non-empty range");
        if a[[piv, col]].norm() < 1e-12 {
            return Err(Error::Degenerate("singular least-squares system".into()));
        }
        if piv != col {
            for j in 0..n {
                a.swap([piv, j], [col, j]);
            }
            for j in 0..b.ncols() {
                b.swap([piv, j], [col, j]);
            }
        }
        let d = a[[col, col]];
        for row in col + 1..n {
            let f = a[[row, col]] / d;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = a[[col, j]];
                a[[row, j]] -= f * v;
            }
            for j in 0..b.ncols() {
                let v = b[[col, j]];
                b[[row, j]] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        for j in 0..b.ncols() {
            let mut v = b[[col, j]];
            for k in col + 1..n {
                v -= a[[col, k]] * b[[k, j]];
            }
            b[[col, j]] = v / a[[col, col]];
        }
    }
    Ok(b)
}

/// Rounds of detection, decoding and SIC until a round decodes nothing,
/// every user is accounted for, or `t_max_turbo` rounds have run.
pub fn run_receiver<R: Rng + ?Sized>(ctx: &ReceiverContext<'_>, y: &ComplexMatrix, rng: &mut R) -> ReceiverResult {
    let cfg = ctx.config;
    let mut result = ReceiverResult {
        decoded: Vec::new(),
        sets: Vec::new(),
        rounds: 0,
        residual_energies: vec![energy(y)],
        trace: Vec::new(),
        detector_iterations: 0,
        invariants: detector::InvariantMonitor::default(),
        abort: None,
    };
    let mut listed: HashSet<Message> = HashSet::new();
    let mut y_res = y.clone();
    let mut k_current = cfg.k_active;
    let mut projected: Option<Dictionary> = None;
    let mut empty_rounds = 0;
    while result.rounds < cfg.t_max_turbo && k_current > 0 {
        result.rounds += 1;
        let round_ctx = ReceiverContext { dictionary: projected.as_ref().unwrap_or(ctx.dictionary), ..*ctx };
        let outcome = match turbo_round(&round_ctx, &y_res, k_current, &listed, rng) {
            Ok(o) => o,
            Err(e) => {
                result.abort = Some(e.to_string());
                break;
            }
        };
        result.detector_iterations += outcome.detector_iterations;
        result.invariants.merge(&outcome.invariants);
        let mut set = outcome.valid;
        set.round = result.rounds;
        let cancelled = if set.is_empty() {
            Ok(None)
        } else if cfg.ls_refine {
            project_decoded(ctx, y, &mut result.sets, &mut set).map(|o| o.map(|(n, d)| (n, Some(d))))
        } else {
            cancel(ctx, &y_res, &mut set).map(|next| Some((next, None)))
        };
        match cancelled {
            Ok(Some((next, dict))) => {
                y_res = next;
                projected = dict.or(projected);
            }
            Ok(None) => {
                empty_rounds += 1;
                if empty_rounds > EMPTY_ROUND_RETRIES {
                    break;
                }
                continue;
            }
            Err(e) => {
                result.abort = Some(e.to_string());
                break;
            }
        }
        empty_rounds = 0;
        let e = energy(&y_res);
        result.residual_energies.push(e);
        result.trace.push(RoundTrace { round: result.rounds, decoded: set.len(), residual_energy: e });
        for m in set.messages() {
            listed.insert(m.clone());
            result.decoded.push(m.clone());
        }
        k_current = k_current.saturating_sub(set.len());
        result.sets.push(set);
    }
    result
}

/// Upper tail point of the energy a random unit-power codeword captures
/// from white residual, relative to its mean: Gamma(M, 1/M) at about 1e-4,
/// via the Wilson-Hilferty cube approximation.
pub fn captured_energy_threshold(antennas: usize) -> f64 {
    const Z: f64 = 3.719;
    let nu = 2.0 * antennas as f64;
    let c = 2.0 / (9.0 * nu);
    (1.0 - c + Z * c.sqrt()).powi(3)
}

/// Refits every user decoded so far jointly against the original
/// observation, dropping new entries whose fitted energy is no more than a
/// random codeword would capture. Returns the projected residual and the
/// dictionary seen through the same projection, or `None` when nothing new
/// survives.
fn project_decoded(
    ctx: &ReceiverContext<'_>,
    y: &ComplexMatrix,
    earlier: &mut [DecodedSet],
    set: &mut DecodedSet,
) -> Result<Option<(ComplexMatrix, Dictionary)>> {
    let n0: usize = earlier.iter().map(|s| s.entries.len()).sum();
    let threshold = captured_energy_threshold(y.ncols());
    loop {
        if set.is_empty() {
            return Ok(None);
        }
        let supports = earlier.iter().flat_map(|s| &s.entries).chain(&set.entries).map(|e| &e.support);
        let proj = Projector::new(ctx.dictionary, supports, ctx.config.power)?;
        let h = proj.coefficients(y)?;
        let next = y - &proj.signals.dot(&h);
        let base = energy(&next) / (y.nrows() as f64 * ctx.config.power);
        let captured = |j: usize| h.row(j).iter().map(|v| v.norm_sqr()).sum::<f64>();
        let before = set.len();
        let mut j = n0;
        set.entries.retain(|_| {
            j += 1;
            captured(j - 1) > threshold * base
        });
        if set.len() < before {
            continue;
        }
        for (j, e) in earlier.iter_mut().flat_map(|s| s.entries.iter_mut()).chain(set.entries.iter_mut()).enumerate() {
            e.channel = h.row(j).to_owned();
        }
        let dict = ctx.dictionary.with_matrix(proj.apply(&ctx.dictionary.matrix)?);
        return Ok(Some((next, dict)));
    }
}

/// SIC with the detector's channel estimates; falls back to joint least
/// squares on the decoded set when the subtraction would raise the residual
/// energy.
fn cancel(ctx: &ReceiverContext<'_>, y_res: &ComplexMatrix, set: &mut DecodedSet) -> Result<ComplexMatrix> {
    let power = ctx.config.power;
    let next = sic_subtract(y_res, ctx.dictionary, set, power)?;
    if energy(&next) <= energy(y_res) {
        return Ok(next);
    }
    let mut refit = set.clone();
    joint_ls_channels(y_res, ctx.dictionary, &mut refit, power)?;
    let alt = sic_subtract(y_res, ctx.dictionary, &refit, power)?;
    *set = refit;
    Ok(alt)
}
