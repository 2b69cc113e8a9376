//! BiGAMP joint detection of SPARC supports and channels.
//!
//! The model is `Y = A X + W` with the latent `X = C H`, where `C` (N x K)
//! holds one-hot sections and `H` (K x M) is CN(0, 1). One iteration runs
//!
//! 1. [`plug_in_step`]: moments of `p = c_n^T h_m` from the current C, H beliefs,
//! 2. [`affine_half_step`]: AMP over the dictionary, producing the pseudo
//!    observation `theta` of X and the Onsager-corrected residual,
//! 3. [`bilinear_half_step`]: scaled residual `alpha` and the Gaussian
//!    pseudo-likelihoods `r` (channels) and `q` (supports),
//! 4. [`mmse_channel_step`] and [`mmse_support_step`]: posterior moments
//!    under the CN(0, 1) and one-hot-per-section priors.
//!
//! The detector works on `Y / g` with `g = sqrt(P / L)`, which puts the
//! support entries on a {0, 1} scale; channel estimates are reported in that
//! normalized domain together with `g`.

use ndarray::{Array2, Zip};
use rand::Rng;
use rand_distr::weighted::WeightedIndex;

use crate::config::{ValidatedConfig, VAR_CAP, VAR_FLOOR};
use crate::dictionary::Dictionary;
use crate::error::{dim_err, Error, Result};
use crate::linalg::{cn_matrix, log_sum_exp, ComplexMatrix, C64};
use crate::sparc::SectionPosterior;

/// Per-user section priors fed back from the outer decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtrinsicPriors(pub Vec<SectionPosterior>);

impl ExtrinsicPriors {
    pub fn uniform(users: usize, sections: usize, section_size: usize) -> Self {
        Self(vec![SectionPosterior::uniform(sections, section_size); users])
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }
}

/// Every mean/variance array of the message-passing schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState {
    pub sections: usize,
    pub section_size: usize,
    /// Latent X = C H, N x M.
    pub mu_x: ComplexMatrix,
    pub nu_x: Array2<f64>,
    /// Onsager-corrected residual and its variance, T x M.
    pub mu_z: ComplexMatrix,
    pub nu_z: Array2<f64>,
    /// Pseudo-observation of X from the affine layer, N x M.
    pub theta: ComplexMatrix,
    pub nu_theta: Array2<f64>,
    /// Plug-in estimate of c_n^T h_m, N x M.
    pub mu_p: ComplexMatrix,
    pub nu_p: Array2<f64>,
    /// Scaled residual of the bilinear layer, N x M.
    pub mu_alpha: ComplexMatrix,
    pub nu_alpha: Array2<f64>,
    /// Channel pseudo-likelihood, K x M.
    pub mu_r: ComplexMatrix,
    pub nu_r: Array2<f64>,
    /// Support pseudo-likelihood, N x K.
    pub mu_q: ComplexMatrix,
    pub nu_q: Array2<f64>,
    /// Channel posterior, K x M.
    pub mu_h: ComplexMatrix,
    pub nu_h: Array2<f64>,
    /// Support posterior, N x K.
    pub mu_c: Array2<f64>,
    pub nu_c: Array2<f64>,
    pub iter: usize,
}

/// Dictionary and normalized observation, with the transposes the
/// recursions need precomputed.
pub struct Problem<'a> {
    pub dictionary: &'a Dictionary,
    a_h: ComplexMatrix,
    abs2_t: Array2<f64>,
    /// T x M observation (already normalized).
    pub y: ComplexMatrix,
    pub sigma2: f64,
    /// Mean observation power per entry, where the noise schedule starts.
    pub start_noise: f64,
}

impl<'a> Problem<'a> {
    pub fn new(dictionary: &'a Dictionary, y: ComplexMatrix, sigma2: f64) -> Result<Self> {
        if y.nrows() != dictionary.rows() {
            return Err(dim_err(format!("Y has {} rows, dictionary has {}", y.nrows(), dictionary.rows())));
        }
        let start_noise = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / y.len().max(1) as f64;
        Ok(Self {
            dictionary,
            a_h: dictionary.matrix.t().mapv(|v| v.conj()),
            abs2_t: dictionary.abs2.t().to_owned(),
            y,
            sigma2,
            start_noise,
        })
    }

    /// Noise variance used at iteration `iter`: decays geometrically from
    /// the observation power towards `sigma2`.
    pub fn annealed_noise(&self, iter: usize) -> f64 {
        let excess = (self.start_noise - self.sigma2).max(0.0);
        self.sigma2 + excess * NOISE_ANNEAL.powi(iter.min(i32::MAX as usize) as i32)
    }

    pub fn antennas(&self) -> usize {
        self.y.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub damping: f64,
    pub t_max: usize,
    pub tol_stop: f64,
    pub init_perturbation: f64,
}

impl DetectorParams {
    pub fn from_config(cfg: &ValidatedConfig) -> Self {
        Self {
            damping: cfg.damping,
            t_max: cfg.t_max_bigamp,
            tol_stop: cfg.tol_stop,
            init_perturbation: cfg.init_perturbation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationDiagnostics {
    pub iter: usize,
    pub residual_norm: f64,
    pub mean_nu_x: f64,
    pub mean_nu_h: f64,
    /// Largest per-section mass error of the support posterior.
    pub max_section_mass_error: f64,
}

/// Extremes observed across every step of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantMonitor {
    pub min_variance: f64,
    pub max_variance: f64,
    pub max_mass_error: f64,
}

impl Default for InvariantMonitor {
    fn default() -> Self {
        Self { min_variance: f64::INFINITY, max_variance: 0.0, max_mass_error: 0.0 }
    }
}

impl InvariantMonitor {
    pub fn merge(&mut self, other: &InvariantMonitor) {
        self.min_variance = self.min_variance.min(other.min_variance);
        self.max_variance = self.max_variance.max(other.max_variance);
        self.max_mass_error = self.max_mass_error.max(other.max_mass_error);
    }

    pub fn holds(&self) -> bool {
        self.min_variance >= VAR_FLOOR && self.max_variance <= VAR_CAP && self.max_mass_error <= 1e-9
    }

    fn observe(&mut self, state: &DetectorState) {
        for arr in state.variances() {
            for &v in arr.iter() {
                self.min_variance = self.min_variance.min(v);
                self.max_variance = self.max_variance.max(v);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetectorOutput {
    /// Per-slot section beliefs from the detector's likelihood alone
    /// (uniform prior), the extrinsic message handed to the outer decoder.
    pub posteriors: Vec<SectionPosterior>,
    /// Per-slot support posterior means including the priors.
    pub support_means: Vec<SectionPosterior>,
    /// Channel posterior moments in the normalized domain, K x M.
    pub mu_h: ComplexMatrix,
    pub nu_h: Array2<f64>,
    /// Normalization gain g: `Y ≈ g A C H_normalized`.
    pub gain: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Re-initializations after diverged attempts.
    pub restarts: usize,
    pub diagnostics: Vec<IterationDiagnostics>,
    pub invariants: InvariantMonitor,
}

fn floor_cap(v: f64) -> f64 {
    if v.is_nan() {
        v
    } else {
        v.clamp(VAR_FLOOR, VAR_CAP)
    }
}

fn inv_capped(v: f64) -> f64 {
    floor_cap(1.0 / v.max(1.0 / VAR_CAP))
}

impl DetectorState {
    pub fn users(&self) -> usize {
        self.mu_c.ncols()
    }

    fn variances(&self) -> [&Array2<f64>; 10] {
        [
            &self.nu_x,
            &self.nu_z,
            &self.nu_theta,
            &self.nu_p,
            &self.nu_alpha,
            &self.nu_r,
            &self.nu_q,
            &self.nu_h,
            &self.nu_c,
            &self.nu_c,
        ]
    }

    /// Largest |sum - 1| of `mu_c` over every (user, section).
    pub fn max_section_mass_error(&self) -> f64 {
        let q = self.section_size;
        let mut worst: f64 = 0.0;
        for k in 0..self.users() {
            let col = self.mu_c.column(k);
            for l in 0..self.sections {
                let s: f64 = col.slice(ndarray::s![l * q..(l + 1) * q]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }

    fn check_finite(&self, what: &str) -> Result<()> {
        let complex = [
            ("mu_x", &self.mu_x),
            ("mu_z", &self.mu_z),
            ("theta", &self.theta),
            ("mu_p", &self.mu_p),
            ("mu_alpha", &self.mu_alpha),
            ("mu_r", &self.mu_r),
            ("mu_q", &self.mu_q),
            ("mu_h", &self.mu_h),
        ];
        for (name, m) in complex {
            if !m.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
                return Err(self.non_finite(name, what));
            }
        }
        let real = [
            ("nu_x", &self.nu_x),
            ("nu_z", &self.nu_z),
            ("nu_theta", &self.nu_theta),
            ("nu_p", &self.nu_p),
            ("nu_alpha", &self.nu_alpha),
            ("nu_r", &self.nu_r),
            ("nu_q", &self.nu_q),
            ("nu_h", &self.nu_h),
            ("mu_c", &self.mu_c),
            ("nu_c", &self.nu_c),
        ];
        for (name, m) in real {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(self.non_finite(name, what));
            }
        }
        Ok(())
    }

    fn non_finite(&self, name: &str, what: &str) -> Error {
        Error::Numerical { iter: self.iter, what: format!("non-finite {name} after {what}") }
    }
}

/// Variance of the random channel means drawn at initialization when the
/// perturbation weight is 1.
pub const INIT_CHANNEL_VAR: f64 = 0.5;
/// A normalized channel mean beyond this magnitude marks a diverged run.
pub const DIVERGENCE_LIMIT: f64 = 1e3;
/// Fresh initializations tried after a diverged run.
pub const MAX_RESTARTS: usize = 3;
/// Per-iteration decay of the excess noise variance.
pub const NOISE_ANNEAL: f64 = 0.85;

/// Initial state. Each section of each slot starts at
/// `(1 - w) * prior + w * onehot`, the one-hot position drawn from the prior
/// table, and the channel means start at CN(0, w * INIT_CHANNEL_VAR) with the
/// remaining prior variance in `nu_h`. With `w = 0` this is the deterministic
/// mean initialization (`mu_c = prior`, `mu_h = 0`, `nu_h = 1`). The residual
/// starts at Y.
pub fn init<R: Rng + ?Sized>(
    problem: &Problem<'_>,
    priors: &ExtrinsicPriors,
    perturbation: f64,
    rng: &mut R,
) -> Result<DetectorState> {
    let users = priors.users();
    if users == 0 {
        return Err(dim_err("detector needs at least one user slot"));
    }
    let (sections, q) = (priors.0[0].sections(), priors.0[0].section_size());
    let n = sections * q;
    if n != problem.dictionary.cols() {
        return Err(dim_err(format!("priors imply N = {n}, dictionary has {}", problem.dictionary.cols())));
    }
    let w = perturbation.clamp(0.0, 1.0);
    let (t, m) = (problem.y.nrows(), problem.antennas());
    let mut mu_c = Array2::zeros((n, users));
    for (k, prior) in priors.0.iter().enumerate() {
        for l in 0..sections {
            let row = prior.probs.row(l);
            let pick = if w > 0.0 {
                WeightedIndex::new(row.iter().copied()).map(|d| rng.sample(d)).ok()
            } else {
                None
            };
            for i in 0..q {
                let hit = if pick == Some(i) { w } else { 0.0 };
                mu_c[[l * q + i, k]] = (1.0 - w) * row[i] + hit;
            }
        }
    }
    let nu_c = mu_c.mapv(|c: f64| floor_cap(c * (1.0 - c)));
    let channel_var = w * INIT_CHANNEL_VAR;
    let mu_h = if channel_var > 0.0 { cn_matrix(rng, users, m, channel_var) } else { ComplexMatrix::zeros((users, m)) };
    let zeros_nm = ComplexMatrix::zeros((n, m));
    let mut state = DetectorState {
        sections,
        section_size: q,
        mu_x: zeros_nm.clone(),
        nu_x: Array2::from_elem((n, m), 1.0),
        mu_z: problem.y.clone(),
        nu_z: Array2::from_elem((t, m), 1.0),
        theta: zeros_nm.clone(),
        nu_theta: Array2::from_elem((n, m), 1.0),
        mu_p: zeros_nm.clone(),
        nu_p: Array2::from_elem((n, m), 1.0),
        mu_alpha: zeros_nm,
        nu_alpha: Array2::from_elem((n, m), 1.0),
        mu_r: ComplexMatrix::zeros((users, m)),
        nu_r: Array2::from_elem((users, m), 1.0),
        mu_q: ComplexMatrix::zeros((n, users)),
        nu_q: Array2::from_elem((n, users), 1.0),
        mu_h,
        nu_h: Array2::from_elem((users, m), 1.0 - channel_var),
        mu_c,
        nu_c,
        iter: 0,
    };
    plug_in_step(&mut state);
    state.nu_x = state.nu_p.clone();
    state.nu_z = problem.dictionary.abs2.dot(&state.nu_x).mapv(|v| floor_cap(v + problem.annealed_noise(0)));
    Ok(state)
}

/// Plug-in moments of `p_nm = sum_k c_nk h_km` with the Onsager-style
/// correction carried by the previous scaled residual `mu_alpha`.
pub fn plug_in_step(state: &mut DetectorState) {
    let c2 = state.mu_c.mapv(|c| c * c);
    let h2 = state.mu_h.mapv(|h| h.norm_sqr());
    let vbar = c2.dot(&state.nu_h);
    let nu_p = &vbar + &state.nu_c.dot(&h2) + state.nu_c.dot(&state.nu_h);
    let mu_c = state.mu_c.mapv(|c| C64::new(c, 0.0));
    let mut mu_p = mu_c.dot(&state.mu_h);
    Zip::from(&mut mu_p).and(&state.mu_alpha).and(&vbar).for_each(|p, &a, &v| *p -= a * v);
    state.mu_p = mu_p;
    state.nu_p = nu_p.mapv(floor_cap);
}

/// AMP pass over the dictionary: pseudo-observation `theta`, latent
/// posterior combining it with the plug-in prior, then the residual with
/// its Onsager correction.
pub fn affine_half_step(state: &mut DetectorState, problem: &Problem<'_>, damping: f64) -> Result<()> {
    affine_half_step_with_noise(state, problem, problem.sigma2, damping)
}

/// [`affine_half_step`] with an explicit noise variance.
pub fn affine_half_step_with_noise(
    state: &mut DetectorState,
    problem: &Problem<'_>,
    noise: f64,
    damping: f64,
) -> Result<()> {
    let a = problem.dictionary;
    let s_old: ComplexMatrix = Zip::from(&state.mu_z).and(&state.nu_z).map_collect(|&z, &v| z / v);
    let inv_nu_z = state.nu_z.mapv(|v| 1.0 / v);
    let precision = problem.abs2_t.dot(&inv_nu_z);
    state.nu_theta = precision.mapv(inv_capped);
    let back = problem.a_h.dot(&s_old);
    state.theta = Zip::from(&state.mu_x)
        .and(&state.nu_theta)
        .and(&back)
        .map_collect(|&x, &v, &b| x + b * v);

    let nu_x_new = Zip::from(&state.nu_theta).and(&state.nu_p).map_collect(|&vt, &vp| floor_cap(vt * vp / (vt + vp)));
    let mu_x_new = Zip::from(&state.theta)
        .and(&state.nu_theta)
        .and(&state.mu_p)
        .and(&state.nu_p)
        .map_collect(|&th, &vt, &p, &vp| (th * vp + p * vt) / (vt + vp));
    Zip::from(&mut state.mu_x).and(&mu_x_new).for_each(|x, &new| *x = damping * new + (1.0 - damping) * *x);
    state.nu_x = nu_x_new;

    let nu_u = a.abs2.dot(&state.nu_x);
    let ax = a.matrix.dot(&state.mu_x);
    let z_new = Zip::from(&problem.y)
        .and(&ax)
        .and(&nu_u)
        .and(&s_old)
        .map_collect(|&y, &ax, &vu, &s| y - ax + s * vu);
    Zip::from(&mut state.mu_z).and(&z_new).for_each(|z, &new| *z = damping * new + (1.0 - damping) * *z);
    state.nu_z = nu_u.mapv(|v| floor_cap(v + noise));
    state.check_finite("affine half-step")
}

/// Scaled residual of the bilinear layer and the Gaussian pseudo-likelihoods
/// of every channel coefficient (`r`) and support entry (`q`).
pub fn bilinear_half_step(state: &mut DetectorState, damping: f64) -> Result<()> {
    state.nu_alpha = Zip::from(&state.nu_p).and(&state.nu_theta).map_collect(|&p, &t| floor_cap(1.0 / (p + t)));
    state.mu_alpha = Zip::from(&state.theta)
        .and(&state.mu_p)
        .and(&state.nu_p)
        .and(&state.nu_theta)
        .map_collect(|&th, &p, &vp, &vt| (th - p) / (vp + vt));

    let mu_c_t = state.mu_c.t();
    let c2_t = mu_c_t.mapv(|c| c * c);
    let mu_c_cplx_t = mu_c_t.mapv(|c| C64::new(c, 0.0));

    // channels
    let prec_r = c2_t.dot(&state.nu_alpha);
    let s1_r = state.nu_c.t().dot(&state.nu_alpha);
    let s2_r = mu_c_cplx_t.dot(&state.mu_alpha);
    let nu_r = prec_r.mapv(inv_capped);
    let mu_r_new = Zip::from(&state.mu_h)
        .and(&nu_r)
        .and(&s1_r)
        .and(&s2_r)
        .map_collect(|&h, &v, &s1, &s2| h * (1.0 - v * s1) + s2 * v);

    // supports
    let h2_t = state.mu_h.mapv(|h| h.norm_sqr()).reversed_axes();
    let prec_q = state.nu_alpha.dot(&h2_t);
    let s1_q = state.nu_alpha.dot(&state.nu_h.t());
    let h_conj_t = state.mu_h.mapv(|h| h.conj()).reversed_axes();
    let s2_q = state.mu_alpha.dot(&h_conj_t);
    let nu_q = prec_q.mapv(inv_capped);
    let mu_q_new = Zip::from(&state.mu_c)
        .and(&nu_q)
        .and(&s1_q)
        .and(&s2_q)
        .map_collect(|&c, &v, &s1, &s2| C64::new(c * (1.0 - v * s1), 0.0) + s2 * v);

    damp_precision_weighted(&mut state.mu_r, &state.nu_r, &mu_r_new, &nu_r, damping);
    damp_precision_weighted(&mut state.mu_q, &state.nu_q, &mu_q_new, &nu_q, damping);
    state.nu_r = nu_r;
    state.nu_q = nu_q;
    state.check_finite("bilinear half-step")
}

/// Damps `mu / nu` rather than `mu`, so a message whose variance moves by
/// orders of magnitude between iterations does not leak a stale mean.
fn damp_precision_weighted(mu: &mut ComplexMatrix, nu_old: &Array2<f64>, mu_new: &ComplexMatrix, nu_new: &Array2<f64>, damping: f64) {
    Zip::from(mu).and(nu_old).and(mu_new).and(nu_new).for_each(|m, &vo, &mn, &vn| {
        let b = (mn / vn) * damping + (*m / vo) * (1.0 - damping);
        *m = b * vn;
    });
}

/// Gaussian posterior of a CN(0, 1) channel under the CN(mu_r, nu_r) likelihood.
pub fn mmse_channel(mu_r: C64, nu_r: f64) -> (C64, f64) {
    (mu_r / (nu_r + 1.0), nu_r / (nu_r + 1.0))
}

pub fn mmse_channel_step(state: &mut DetectorState) {
    Zip::from(&mut state.mu_h)
        .and(&mut state.nu_h)
        .and(&state.mu_r)
        .and(&state.nu_r)
        .for_each(|h, vh, &r, &vr| {
            let (m, v) = mmse_channel(r, vr);
            *h = m;
            *vh = floor_cap(v);
        });
}

/// Log-likelihood ratio of `c = 1` against `c = 0` under CN(c; mu_q, nu_q).
pub fn support_logit(mu_q: C64, nu_q: f64) -> f64 {
    (2.0 * mu_q.re - 1.0) / nu_q
}

/// Posterior over the Q one-hot candidates of one section:
/// softmax of `ln prior + (2 Re mu_q - 1) / nu_q`.
pub fn section_softmax(mu_q: &[C64], nu_q: &[f64], prior: &[f64], out: &mut [f64]) {
    let logits: Vec<f64> = mu_q
        .iter()
        .zip(nu_q)
        .zip(prior)
        .map(|((&m, &v), &p)| p.max(f64::MIN_POSITIVE).ln() + support_logit(m, v))
        .collect();
    let norm = log_sum_exp(&logits);
    for (o, l) in out.iter_mut().zip(&logits) {
        *o = (l - norm).exp();
    }
}

/// Section-wise posterior of the supports under the one-hot prior weighted
/// by the extrinsic priors.
pub fn mmse_support_step(state: &mut DetectorState, priors: &ExtrinsicPriors) -> Result<()> {
    let q = state.section_size;
    if priors.users() != state.users() {
        return Err(dim_err(format!("{} prior tables for {} slots", priors.users(), state.users())));
    }
    let mut mu = vec![C64::new(0.0, 0.0); q];
    let mut nu = vec![0.0; q];
    let mut out = vec![0.0; q];
    for (k, prior) in priors.0.iter().enumerate() {
        for l in 0..state.sections {
            for i in 0..q {
                mu[i] = state.mu_q[[l * q + i, k]];
                nu[i] = state.nu_q[[l * q + i, k]];
            }
            let row = prior.probs.row(l);
            section_softmax(&mu, &nu, row.as_slice().expect("contiguous prior row"), &mut out);
            for i in 0..q {
                let c = out[i];
                state.mu_c[[l * q + i, k]] = c;
                state.nu_c[[l * q + i, k]] = floor_cap(c * (1.0 - c));
            }
        }
    }
    Ok(())
}

/// Section beliefs from the pseudo-likelihoods alone, one table per slot.
pub fn likelihood_posteriors(state: &DetectorState) -> Vec<SectionPosterior> {
    let q = state.section_size;
    let uniform = vec![1.0 / q as f64; q];
    let mut mu = vec![C64::new(0.0, 0.0); q];
    let mut nu = vec![0.0; q];
    (0..state.users())
        .map(|k| {
            let mut probs = Array2::zeros((state.sections, q));
            for l in 0..state.sections {
                for i in 0..q {
                    mu[i] = state.mu_q[[l * q + i, k]];
                    nu[i] = state.nu_q[[l * q + i, k]];
                }
                let mut row = vec![0.0; q];
                section_softmax(&mu, &nu, &uniform, &mut row);
                for (i, v) in row.into_iter().enumerate() {
                    probs[[l, i]] = v;
                }
            }
            SectionPosterior { probs }
        })
        .collect()
}

fn support_means(state: &DetectorState) -> Vec<SectionPosterior> {
    let q = state.section_size;
    (0..state.users())
        .map(|k| SectionPosterior {
            probs: Array2::from_shape_fn((state.sections, q), |(l, i)| state.mu_c[[l * q + i, k]]),
        })
        .collect()
}

/// One full iteration of the schedule.
pub fn iterate(
    state: &mut DetectorState,
    problem: &Problem<'_>,
    priors: &ExtrinsicPriors,
    damping: f64,
    monitor: &mut InvariantMonitor,
) -> Result<()> {
    state.iter += 1;
    plug_in_step(state);
    affine_half_step_with_noise(state, problem, problem.annealed_noise(state.iter), damping)?;
    bilinear_half_step(state, damping)?;
    mmse_channel_step(state);
    mmse_support_step(state, priors)?;
    state.check_finite("MMSE step")?;
    monitor.observe(state);
    monitor.max_mass_error = monitor.max_mass_error.max(state.max_section_mass_error());
    Ok(())
}

/// Iterate from a given state until `t_max` or the relative change of the
/// latent mean drops below `tol_stop`.
pub fn run_from_state(
    mut state: DetectorState,
    problem: &Problem<'_>,
    priors: &ExtrinsicPriors,
    params: &DetectorParams,
    gain: f64,
) -> Result<DetectorOutput> {
    let mut diagnostics = Vec::with_capacity(params.t_max);
    let mut monitor = InvariantMonitor::default();
    let mut converged = false;
    for _ in 0..params.t_max {
        let before = state.mu_x.clone();
        iterate(&mut state, problem, priors, params.damping, &mut monitor)?;
        if state.mu_h.iter().any(|h| h.norm() > DIVERGENCE_LIMIT) {
            return Err(Error::Numerical { iter: state.iter, what: "channel estimate diverged".into() });
        }
        let diff: f64 = Zip::from(&state.mu_x).and(&before).fold(0.0, |acc, a, b| acc + (a - b).norm_sqr());
        let norm: f64 = state.mu_x.iter().map(|v| v.norm_sqr()).sum();
        diagnostics.push(IterationDiagnostics {
            iter: state.iter,
            residual_norm: state.mu_z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
            mean_nu_x: state.nu_x.mean().unwrap_or(0.0),
            mean_nu_h: state.nu_h.mean().unwrap_or(0.0),
            max_section_mass_error: state.max_section_mass_error(),
        });
        if norm > 0.0 && diff.sqrt() <= params.tol_stop * norm.sqrt() {
            converged = true;
            break;
        }
    }
    Ok(DetectorOutput {
        posteriors: likelihood_posteriors(&state),
        support_means: support_means(&state),
        mu_h: state.mu_h.clone(),
        nu_h: state.nu_h.clone(),
        gain,
        iterations: state.iter,
        converged,
        restarts: 0,
        diagnostics,
        invariants: monitor,
    })
}

/// Normalization gain `sqrt(P / L)` applied to the observation.
pub fn observation_gain(cfg: &ValidatedConfig) -> f64 {
    (cfg.power / cfg.sections as f64).sqrt()
}

/// Full detection on a raw observation `y` with one slot per prior table.
pub fn run<R: Rng + ?Sized>(
    y: &ComplexMatrix,
    dictionary: &Dictionary,
    cfg: &ValidatedConfig,
    priors: &ExtrinsicPriors,
    rng: &mut R,
) -> Result<DetectorOutput> {
    if dictionary.cols() != cfg.support_len {
        return Err(dim_err(format!("dictionary has {} columns, N = {}", dictionary.cols(), cfg.support_len)));
    }
    let gain = observation_gain(cfg);
    let problem = Problem::new(dictionary, y.mapv(|v| v / gain), cfg.sigma2 / (gain * gain))?;
    let params = DetectorParams::from_config(cfg);
    let mut attempt = 0;
    loop {
        let state = init(&problem, priors, params.init_perturbation, rng)?;
        match run_from_state(state, &problem, priors, &params, gain) {
            Ok(mut out) => {
                out.restarts = attempt;
                return Ok(out);
            }
            Err(Error::Numerical { .. }) if attempt < MAX_RESTARTS => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Per-iteration diagnostics as CSV.
pub fn diagnostics_csv(diag: &[IterationDiagnostics]) -> String {
    let mut s = String::from("iter,residual_norm,mean_nu_x,mean_nu_h,max_section_mass_error\n");
    for d in diag {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            d.iter, d.residual_norm, d.mean_nu_x, d.mean_nu_h, d.max_section_mass_error
        ));
    }
    s
}

