//! Quick invariant suite behind the `selftest` subcommand.

use rand::Rng;

use crate::channel::{draw_channels, draw_messages};
use crate::config::SystemConfig;
use crate::detector::{mmse_channel, section_softmax};
use crate::dictionary::{Dictionary, DictionaryKind};
use crate::error::Result;
use crate::harness::{run_trial, Scenario};
use crate::ldpc::LdpcCode;
use crate::linalg::{cn, frobenius_sq, log_sum_exp, RngStream, C64};
use crate::receiver::{sic_subtract, DecodedEntry, DecodedSet};
use crate::sparc::{decode_sections, encode_sections, modulate, SupportMatrix, SupportVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

pub fn run_all(seed: u64) -> Result<Vec<CheckResult>> {
    Ok(vec![
        codec_bijection()?,
        power_invariant(seed)?,
        channel_oracle(seed),
        support_oracle(seed),
        genie_sic(seed)?,
        syndrome_false_accepts(seed)?,
        trial_determinism(seed)?,
    ])
}

fn codec_bijection() -> Result<CheckResult> {
    let (sections, m) = (3, 4);
    let bits = sections * m;
    let mut bad = 0;
    for word in 0..1u32 << bits {
        let b: Vec<u8> = (0..bits).map(|j| ((word >> (bits - 1 - j)) & 1) as u8).collect();
        let v = encode_sections(&b, sections, m)?;
        if decode_sections(&v) != b {
            bad += 1;
        }
    }
    Ok(CheckResult::new("codec_bijection", bad == 0, format!("{bad} of {} words", 1u32 << bits)))
}

fn power_invariant(seed: u64) -> Result<CheckResult> {
    let d = Dictionary::build(DictionaryKind::Gaussian, 64, 64, RngStream::new(seed, 1))?;
    let mut rng = RngStream::new(seed, 2).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = rng.random_range(0.1..10.0);
        let v = SupportVector::new((0..4).map(|_| rng.random_range(0..16)).collect(), 16)?;
        let s = modulate(&d, &v, p)?;
        let e: f64 = s.iter().map(|x| x.norm_sqr()).sum();
        worst = worst.max((e - p).abs() / p);
    }
    Ok(CheckResult::new("power_invariant", worst < 1e-10, format!("max relative error {worst:.2e}")))
}

fn channel_oracle(seed: u64) -> CheckResult {
    let mut rng = RngStream::new(seed, 3).rng();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mu_r = cn(&mut rng, 4.0);
        let nu_r: f64 = rng.random_range(1e-3..1e3);
        // product of CN(0, 1) and CN(mu_r, nu_r)
        let prec = 1.0 + 1.0 / nu_r;
        let (m, v) = mmse_channel(mu_r, nu_r);
        worst = worst.max((m - (mu_r / nu_r) / prec).norm()).max((v - 1.0 / prec).abs());
    }
    CheckResult::new("mmse_channel_oracle", worst < 1e-12, format!("max error {worst:.2e}"))
}

fn support_oracle(seed: u64) -> CheckResult {
    let mut rng = RngStream::new(seed, 4).rng();
    let mut worst: f64 = 0.0;
    for q in [2usize, 4, 8] {
        for _ in 0..100 {
            let mu: Vec<C64> = (0..q).map(|_| cn(&mut rng, 1.0)).collect();
            let nu: Vec<f64> = (0..q).map(|_| rng.random_range(0.05..2.0)).collect();
            let prior: Vec<f64> = {
                let w: Vec<f64> = (0..q).map(|_| rng.random_range(0.1..1.0)).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            };
            // enumerate one-hot candidates under Gaussian pseudo-likelihoods
            let logs: Vec<f64> = (0..q)
                .map(|j| {
                    let ll: f64 = (0..q)
                        .map(|i| {
                            let c = if i == j { 1.0 } else { 0.0 };
                            -(mu[i] - c).norm_sqr() / nu[i]
                        })
                        .sum();
                    prior[j].ln() + ll
                })
                .collect();
            let norm = log_sum_exp(&logs);
            let mut out = vec![0.0; q];
            section_softmax(&mu, &nu, &prior, &mut out);
            for j in 0..q {
                worst = worst.max((out[j] - (logs[j] - norm).exp()).abs());
            }
        }
    }
    CheckResult::new("mmse_support_oracle", worst < 1e-10, format!("max error {worst:.2e}"))
}

fn genie_sic(seed: u64) -> Result<CheckResult> {
    let (t, m, sections, q, k) = (64, 4, 4, 16, 3);
    let d = Dictionary::build(DictionaryKind::Gaussian, t, sections * q, RngStream::new(seed, 5))?;
    let mut rng = RngStream::new(seed, 6).rng();
    let messages = draw_messages(k, sections * 4, false, &mut rng);
    let columns: Vec<SupportVector> =
        messages.iter().map(|msg| encode_sections(&msg.0, sections, 4)).collect::<Result<_>>()?;
    let h = draw_channels(k, m, &mut rng);
    let obs = crate::channel::synthesize(
        &d,
        &SupportMatrix { columns: columns.clone() },
        &h,
        messages.clone(),
        0.0,
        1.0,
        &mut rng,
    )?;
    let entries = messages
        .into_iter()
        .zip(columns)
        .enumerate()
        .map(|(i, (message, support))| DecodedEntry { message, support, channel: h.0.row(i).to_owned(), slots: vec![i] })
        .collect();
    let res = sic_subtract(&obs.y, &d, &DecodedSet { entries, round: 1 }, 1.0)?;
    let norm = frobenius_sq(&res).sqrt();
    Ok(CheckResult::new("genie_sic_noiseless", norm < 1e-9, format!("residual norm {norm:.2e}")))
}

fn syndrome_false_accepts(seed: u64) -> Result<CheckResult> {
    let code = LdpcCode::random_regular(128, 64, RngStream::new(seed, 7), 50)?;
    let mut rng = RngStream::new(seed, 8).rng();
    let draws = 10_000;
    let accepted = (0..draws)
        .filter(|_| {
            let w: Vec<u8> = (0..code.n()).map(|_| rng.random_range(0..2u8)).collect();
            code.check_validity(&w)
        })
        .count();
    let bound = 2.0 * draws as f64 * 2f64.powi(-(code.n() as i32 - code.k() as i32));
    Ok(CheckResult::new(
        "syndrome_false_accept",
        accepted as f64 <= bound,
        format!("{accepted} of {draws} accepted, bound {bound:.2}"),
    ))
}

fn trial_determinism(seed: u64) -> Result<CheckResult> {
    let cfg = SystemConfig { k_active: 2, antennas: 4, blocklength: 64, seed, ..SystemConfig::default() };
    let scenario = Scenario::build(&cfg)?;
    let a = run_trial(&scenario, 3)?;
    let b = run_trial(&scenario, 3)?;
    Ok(CheckResult::new("trial_determinism", a == b, format!("pupe {}", a.pupe)))
}
