//! Scenario configuration and dimension bookkeeping.
//!
//! All powers and variances are linear. Decibels only appear in
//! [`eb_n0_db`] and [`sigma2_for_eb_n0_db`].

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::dictionary::DictionaryKind;
use crate::error::{dim_err, Error, Result};

/// Upper bound placed on any variance that is the inverse of a vanishing sum.
pub const VAR_CAP: f64 = 1e6;
/// Lower bound on every variance array.
pub const VAR_FLOOR: f64 = 1e-12;

/// Every knob of a scenario. Field names follow the usual URA symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Active users K.
    pub k_active: usize,
    /// Receive antennas M.
    pub antennas: usize,
    /// Coherence blocklength T.
    pub blocklength: usize,
    /// Message bits B (equals the outer code dimension).
    pub message_bits: usize,
    /// SPARC sections L.
    pub sections: usize,
    /// Section size Q, a power of two.
    pub section_size: usize,
    /// Outer codeword length; `sections * log2(section_size)` must cover it.
    pub n_out: usize,
    /// Per-user power budget P (energy of each transmitted codeword).
    pub power: f64,
    /// Noise variance per complex sample.
    pub sigma2: f64,
    pub t_max_bigamp: usize,
    /// Cap on detection/decoding/SIC rounds.
    pub t_max_turbo: usize,
    /// Detector ↔ decoder passes within one round before giving up on it.
    pub turbo_inner: usize,
    pub damping: f64,
    /// Relative change in the latent mean below which the detector stops.
    pub tol_stop: f64,
    /// Weight in [0, 1] of the seeded random draw mixed into the initial
    /// detector state; 0 gives the deterministic prior-mean start.
    pub init_perturbation: f64,
    /// Detector user slots = ceil(slot_factor * K_current).
    pub slot_factor: f64,
    pub bp_iters: usize,
    pub dictionary: DictionaryKind,
    /// Joint least-squares refit of every decoded user against Y; later
    /// rounds see the residual and dictionary projected off their signals.
    pub ls_refine: bool,
    /// Permit two users to pick the same message.
    pub allow_collisions: bool,
    pub seed: u64,
    pub trials: usize,
}

impl Default for SystemConfig {
    /// The DS-1 desk scenario at an Eb/N0 of 24 dB.
    fn default() -> Self {
        let mut cfg = Self {
            k_active: 8,
            antennas: 8,
            blocklength: 256,
            message_bits: 16,
            sections: 8,
            section_size: 16,
            n_out: 32,
            power: 1.0,
            sigma2: 1.0,
            t_max_bigamp: 50,
            t_max_turbo: 10,
            turbo_inner: 2,
            damping: 0.7,
            tol_stop: 1e-6,
            init_perturbation: 1.0,
            slot_factor: 1.0,
            bp_iters: 50,
            dictionary: DictionaryKind::Gaussian,
            ls_refine: true,
            allow_collisions: false,
            seed: 1,
            trials: 100,
        };
        cfg.sigma2 = sigma2_for_eb_n0_db(&cfg, 24.0);
        cfg
    }
}

/// A configuration that passed [`validate`], with derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SystemConfig,
    /// Bits per section, log2(Q).
    pub bits_per_section: usize,
    /// Support length N = L * Q.
    pub support_len: usize,
    /// P*T/(B*sigma2), the linear Eb/N0.
    pub eb_n0_linear: f64,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    pub fn into_config(self) -> SystemConfig {
        self.config
    }

    /// Bits carried by the sections, L * m.
    pub fn section_bits(&self) -> usize {
        self.config.sections * self.bits_per_section
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = SystemConfig;
    fn deref(&self) -> &SystemConfig {
        &self.config
    }
}

/// Checks the scenario invariants and fills in the derived fields.
pub fn validate(config: &SystemConfig) -> Result<ValidatedConfig> {
    let c = config;
    if c.sections == 0 {
        return Err(dim_err("L must be at least 1"));
    }
    if c.section_size < 2 || !c.section_size.is_power_of_two() {
        return Err(dim_err(format!("Q = {} is not a power of two >= 2", c.section_size)));
    }
    let m = c.section_size.trailing_zeros() as usize;
    if c.antennas == 0 || c.blocklength == 0 {
        return Err(dim_err("M and T must be at least 1"));
    }
    if c.message_bits == 0 || c.message_bits > c.n_out {
        return Err(dim_err(format!(
            "need 1 <= B <= n_out, got B = {}, n_out = {}",
            c.message_bits, c.n_out
        )));
    }
    if c.sections * m < c.n_out {
        return Err(dim_err(format!(
            "L*m = {} cannot carry an outer codeword of {} bits",
            c.sections * m,
            c.n_out
        )));
    }
    if !(c.power > 0.0 && c.power.is_finite()) {
        return Err(dim_err("P must be positive"));
    }
    if !(c.sigma2 > 0.0 && c.sigma2.is_finite()) {
        return Err(dim_err("sigma2 must be positive"));
    }
    if !(c.damping > 0.0 && c.damping <= 1.0) {
        return Err(dim_err("damping must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&c.init_perturbation) {
        return Err(dim_err("init_perturbation must lie in [0, 1]"));
    }
    if !(c.slot_factor >= 1.0 && c.slot_factor.is_finite()) {
        return Err(dim_err("slot_factor must be >= 1"));
    }
    if c.trials == 0 {
        return Err(dim_err("trials must be at least 1"));
    }
    let eb_n0_linear = c.power * c.blocklength as f64 / (c.message_bits as f64 * c.sigma2);
    Ok(ValidatedConfig {
        config: c.clone(),
        bits_per_section: m,
        support_len: c.sections * c.section_size,
        eb_n0_linear,
    })
}

/// 10*log10(P*T / (B*sigma2)).
pub fn eb_n0_db(config: &SystemConfig) -> f64 {
    10.0 * (config.power * config.blocklength as f64 / (config.message_bits as f64 * config.sigma2)).log10()
}

/// Noise variance that places `config` at the requested Eb/N0.
pub fn sigma2_for_eb_n0_db(config: &SystemConfig, eb_n0_db: f64) -> f64 {
    config.power * config.blocklength as f64 / (config.message_bits as f64 * 10f64.powf(eb_n0_db / 10.0))
}

fn parse_field<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Parse(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl SystemConfig {
    /// Set one field from its textual key. `eb_n0_db` is accepted as a
    /// convenience and resolves to `sigma2` using the current P, T and B.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "K" | "K_active" => self.k_active = parse_field(key, v)?,
            "M" => self.antennas = parse_field(key, v)?,
            "T" => self.blocklength = parse_field(key, v)?,
            "B" => self.message_bits = parse_field(key, v)?,
            "L" => self.sections = parse_field(key, v)?,
            "Q" => self.section_size = parse_field(key, v)?,
            "n_out" => self.n_out = parse_field(key, v)?,
            "P" => self.power = parse_field(key, v)?,
            "sigma2" => self.sigma2 = parse_field(key, v)?,
            "eb_n0_db" => {
                let db: f64 = parse_field(key, v)?;
                self.sigma2 = sigma2_for_eb_n0_db(self, db);
            }
            "t_max_bigamp" => self.t_max_bigamp = parse_field(key, v)?,
            "t_max_turbo" => self.t_max_turbo = parse_field(key, v)?,
            "turbo_inner" => self.turbo_inner = parse_field(key, v)?,
            "damping" => self.damping = parse_field(key, v)?,
            "tol_stop" => self.tol_stop = parse_field(key, v)?,
            "init_perturbation" => self.init_perturbation = parse_field(key, v)?,
            "slot_factor" => self.slot_factor = parse_field(key, v)?,
            "bp_iters" => self.bp_iters = parse_field(key, v)?,
            "dictionary" => self.dictionary = v.parse()?,
            "ls_refine" => self.ls_refine = parse_bool(key, v)?,
            "allow_collisions" => self.allow_collisions = parse_bool(key, v)?,
            "seed" => self.seed = parse_field(key, v)?,
            "trials" => self.trials = parse_field(key, v)?,
            other => return Err(Error::Parse(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Parse `key = value` lines on top of the defaults. `#` starts a comment.
    /// Keys are applied in file order, so `eb_n0_db` should follow P, T and B.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key, value)
                .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Serialize to the `key = value` format; `from_text(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "K_active = {}", self.k_active);
        let _ = writeln!(s, "M = {}", self.antennas);
        let _ = writeln!(s, "T = {}", self.blocklength);
        let _ = writeln!(s, "B = {}", self.message_bits);
        let _ = writeln!(s, "L = {}", self.sections);
        let _ = writeln!(s, "Q = {}", self.section_size);
        let _ = writeln!(s, "n_out = {}", self.n_out);
        let _ = writeln!(s, "P = {:?}", self.power);
        let _ = writeln!(s, "sigma2 = {:?}", self.sigma2);
        let _ = writeln!(s, "t_max_bigamp = {}", self.t_max_bigamp);
        let _ = writeln!(s, "t_max_turbo = {}", self.t_max_turbo);
        let _ = writeln!(s, "turbo_inner = {}", self.turbo_inner);
        let _ = writeln!(s, "damping = {:?}", self.damping);
        let _ = writeln!(s, "tol_stop = {:?}", self.tol_stop);
        let _ = writeln!(s, "init_perturbation = {:?}", self.init_perturbation);
        let _ = writeln!(s, "slot_factor = {:?}", self.slot_factor);
        let _ = writeln!(s, "bp_iters = {}", self.bp_iters);
        let _ = writeln!(s, "dictionary = {}", self.dictionary);
        let _ = writeln!(s, "ls_refine = {}", self.ls_refine);
        let _ = writeln!(s, "allow_collisions = {}", self.allow_collisions);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "trials = {}", self.trials);
        s
    }
}
