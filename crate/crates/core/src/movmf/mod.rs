//! Mixtures of von Mises-Fisher distributions on the unit hypersphere,
//! fitted by expectation-maximization, and the direction dictionaries
//! extracted from them.
//!
//! The density is rho(x; mu, kappa) = C_d(kappa) exp(kappa mu'x) for unit
//! vectors x, mu in R^d. All likelihood work happens in log space; the
//! normalizer C_d goes through `bessel` so it stays finite at d in the
//! thousands and kappa up to the clamp ceiling.

mod bessel;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::distributions::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::StftParams;

#[derive(Debug, Error)]
pub enum MovmfError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("input column {index} has norm {norm}, expected unit")]
    NonUnitInput { index: usize, norm: f64 },
    #[error("{n} points cannot support {z} components")]
    TooFewPoints { n: usize, z: usize },
    #[error("component {component} has vanishing resultant")]
    DegenerateComponent { component: usize },
    #[error("every component degenerated; data does not support a fit")]
    AllDegenerate,
    #[error("keep must be in 1..={available}, got {keep}")]
    KeepOutOfRange { keep: usize, available: usize },
}

/// Tolerance on ||x|| - 1 for inputs that must lie on the sphere.
const UNIT_TOL: f64 = 1e-6;

/// Resultant norms below this cannot define a mean direction.
const RESULTANT_FLOOR: f64 = 1e-12;

/// Log surface area of the unit sphere S^(dim-1) embedded in R^dim:
/// ln 2 + (dim/2) ln pi - ln Gamma(dim/2).
pub fn log_surface_area(dim: usize) -> f64 {
    assert!(dim >= 1, "sphere dimension must be positive");
    let half = dim as f64 / 2.0;
    std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - libm::lgamma(half)
}

/// Log normalization constant of the vMF density on S^(dim-1):
///
/// ln C_dim(kappa) = (dim/2 - 1) ln kappa - (dim/2) ln(2 pi)
///                   - ln I_(dim/2-1)(kappa),
///
/// with the kappa = 0 limit handled exactly as the uniform density,
/// -log_surface_area(dim).
pub fn log_norm_const(dim: usize, kappa: f64) -> f64 {
    assert!(dim >= 2, "vMF needs dim >= 2");
    assert!(kappa >= 0.0 && kappa.is_finite(), "kappa must be finite and >= 0");
    if kappa == 0.0 {
        return -log_surface_area(dim);
    }
    let nu = dim as f64 / 2.0 - 1.0;
    nu * kappa.ln()
        - (nu + 1.0) * (2.0 * std::f64::consts::PI).ln()
        - bessel::log_bessel_i(nu, kappa)
}

/// Log density of a unit vector under vMF(mean, kappa). Both vectors must
/// be unit length; only checked in debug builds here (the EM entry points
/// validate their inputs).
pub fn log_density(x: ArrayView1<f64>, mean: ArrayView1<f64>, kappa: f64) -> f64 {
    debug_assert_eq!(x.len(), mean.len());
    debug_assert!((x.dot(&x).sqrt() - 1.0).abs() < UNIT_TOL);
    debug_assert!((mean.dot(&mean).sqrt() - 1.0).abs() < UNIT_TOL);
    log_norm_const(x.len(), kappa) + kappa * mean.dot(&x)
}

/// Mixture of vMF components. `means` holds one unit row per component.
#[derive(Debug, Clone)]
pub struct VmfMixture {
    pub means: Array2<f64>,
    pub kappas: Vec<f64>,
    pub weights: Vec<f64>,
}

impl VmfMixture {
    pub fn n_components(&self) -> usize {
        self.means.nrows()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }
}

/// EM settings. `min_resp_mass` is the expected-count floor below which a
/// component is considered dead and re-seeded.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EmConfig {
    pub num_components: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub seed: u64,
    pub kappa_max: f64,
    pub min_resp_mass: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            num_components: 15,
            max_iters: 100,
            rel_tol: 1e-6,
            seed: crate::DEFAULT_SEED,
            kappa_max: 1e5,
            min_resp_mass: 1.0,
        }
    }
}

/// Posterior component responsibilities, one row per data point; rows are
/// non-negative and sum to 1.
#[derive(Debug, Clone)]
pub struct Responsibilities {
    pub gamma: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub mixture: VmfMixture,
    /// Mixture log-likelihood at the parameters of each iteration.
    pub loglik_trace: Vec<f64>,
    pub responsibilities: Responsibilities,
    /// True when the relative improvement fell below `rel_tol` before
    /// `max_iters` was exhausted.
    pub converged: bool,
    /// Number of component re-seed events across all iterations.
    pub reseeds: usize,
}

fn validate_unit_columns(data: ArrayView2<f64>) -> Result<(), MovmfError> {
    for (index, col) in data.columns().into_iter().enumerate() {
        let norm = col.dot(&col).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(MovmfError::NonUnitInput { index, norm });
        }
    }
    Ok(())
}

/// Per-point log joint matrix L[z, i] = ln w_z + ln rho(x_i; mu_z, k_z),
/// plus the per-column log-sum-exp (the per-point log-likelihoods).
fn log_joint(data: ArrayView2<f64>, mix: &VmfMixture) -> (Array2<f64>, Vec<f64>) {
    let n = data.ncols();
    let mut l = mix.means.dot(&data); // (z, n) of mu'x
    for (zi, mut row) in l.rows_mut().into_iter().enumerate() {
        let base = mix.weights[zi].ln() + log_norm_const(mix.dim(), mix.kappas[zi]);
        let kappa = mix.kappas[zi];
        row.mapv_inplace(|dot| base + kappa * dot);
    }
    let mut per_point = vec![0.0; n];
    for i in 0..n {
        let col = l.column(i);
        let m = col.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let sum: f64 = col.iter().map(|&v| (v - m).exp()).sum();
        per_point[i] = m + sum.ln();
    }
    (l, per_point)
}

/// E-step: responsibilities and total log-likelihood at the current
/// parameters. Data is one unit column per point.
pub fn e_step(
    data: ArrayView2<f64>,
    mix: &VmfMixture,
) -> Result<(Responsibilities, f64), MovmfError> {
    let (resp, ll, _) = e_step_internal(data, mix)?;
    Ok((resp, ll))
}

fn e_step_internal(
    data: ArrayView2<f64>,
    mix: &VmfMixture,
) -> Result<(Responsibilities, f64, Vec<f64>), MovmfError> {
    if data.nrows() != mix.dim() {
        return Err(MovmfError::DimensionMismatch(format!(
            "data dim {} vs mixture dim {}",
            data.nrows(),
            mix.dim()
        )));
    }
    let n = data.ncols();
    let z = mix.n_components();
    if n == 0 {
        return Err(MovmfError::TooFewPoints { n, z });
    }
    validate_unit_columns(data)?;

    let (l, per_point) = log_joint(data, mix);
    let mut gamma = Array2::<f64>::zeros((n, z));
    for i in 0..n {
        let lse = per_point[i];
        for zi in 0..z {
            gamma[(i, zi)] = (l[(zi, i)] - lse).exp();
        }
    }
    let ll = per_point.iter().sum();
    Ok((Responsibilities { gamma }, ll, per_point))
}

/// Concentration estimate from mean resultant length:
/// kappa = rbar (dim - rbar^2) / (1 - rbar^2), clamped to [0, kappa_max].
fn concentration_from_rbar(rbar: f64, dim: usize, kappa_max: f64) -> f64 {
    if rbar <= 0.0 {
        return 0.0;
    }
    if rbar >= 1.0 {
        return kappa_max;
    }
    let d = dim as f64;
    let kappa = rbar * (d - rbar * rbar) / (1.0 - rbar * rbar);
    kappa.clamp(0.0, kappa_max)
}

enum DegeneracyPolicy {
    Error,
    Reseed,
}

struct MStepOutcome {
    mixture: VmfMixture,
    reseeded: Vec<usize>,
}

/// Component z's share of the expected complete log-likelihood, as a
/// function of its concentration (mean already set to r/||r||):
/// mass_z ln C(kappa) + kappa ||r_z||.
fn expected_complete_ll_in_kappa(mass: f64, r_norm: f64, dim: usize, kappa: f64) -> f64 {
    mass * log_norm_const(dim, kappa) + kappa * r_norm
}

fn m_step_impl(
    data: ArrayView2<f64>,
    resp: &Responsibilities,
    cfg: &EmConfig,
    per_point_ll: Option<&[f64]>,
    prev_kappas: Option<&[f64]>,
    policy: DegeneracyPolicy,
) -> Result<MStepOutcome, MovmfError> {
    let n = data.ncols();
    let dim = data.nrows();
    let z = resp.gamma.ncols();
    if resp.gamma.nrows() != n {
        return Err(MovmfError::DimensionMismatch(format!(
            "{} responsibility rows for {} points",
            resp.gamma.nrows(),
            n
        )));
    }

    let resultants = data.dot(&resp.gamma); // (dim, z)
    let masses: Vec<f64> = (0..z).map(|zi| resp.gamma.column(zi).sum()).collect();

    let mut means = Array2::<f64>::zeros((z, dim));
    let mut kappas = vec![0.0; z];
    let mut weights = vec![0.0; z];
    let mut reseeded = Vec::new();

    for zi in 0..z {
        let r = resultants.column(zi);
        let r_norm = r.dot(&r).sqrt();
        let dead = r_norm < RESULTANT_FLOOR || masses[zi] < cfg.min_resp_mass;
        if dead {
            match policy {
                DegeneracyPolicy::Error => {
                    return Err(MovmfError::DegenerateComponent { component: zi })
                }
                DegeneracyPolicy::Reseed => {
                    // Plant the component on the point the current model
                    // explains worst, with a loose concentration.
                    let worst = per_point_ll
                        .map(|ll| {
                            ll.iter()
                                .enumerate()
                                .min_by(|a, b| a.1.total_cmp(b.1))
                                .map(|(i, _)| i)
                                .unwrap_or(0)
                        })
                        .unwrap_or(0);
                    means.row_mut(zi).assign(&data.column(worst));
                    kappas[zi] = 1.0;
                    weights[zi] = cfg.min_resp_mass.max(1.0) / n as f64;
                    reseeded.push(zi);
                    continue;
                }
            }
        }
        means.row_mut(zi).assign(&r.mapv(|v| v / r_norm));
        let rbar = (r_norm / masses[zi]).min(1.0);
        kappas[zi] = concentration_from_rbar(rbar, dim, cfg.kappa_max);
        // The closed-form concentration estimate is not an exact
        // maximizer; inside the EM loop, fall back to the previous value
        // whenever the estimate would lower this component's share of the
        // objective. That keeps every full EM step an ascent step.
        if let Some(prev) = prev_kappas {
            let keep = expected_complete_ll_in_kappa(masses[zi], r_norm, dim, prev[zi]);
            let take = expected_complete_ll_in_kappa(masses[zi], r_norm, dim, kappas[zi]);
            if keep > take {
                kappas[zi] = prev[zi];
            }
        }
        weights[zi] = masses[zi] / n as f64;
    }

    if reseeded.len() == z {
        return Err(MovmfError::AllDegenerate);
    }
    let wsum: f64 = weights.iter().sum();
    if wsum <= 0.0 {
        return Err(MovmfError::AllDegenerate);
    }
    for w in &mut weights {
        *w /= wsum;
    }

    Ok(MStepOutcome {
        mixture: VmfMixture {
            means,
            kappas,
            weights,
        },
        reseeded,
    })
}

/// M-step: maximizing parameters for the given responsibilities. A
/// component whose resultant vanishes (or whose expected count falls below
/// `min_resp_mass`) is reported as degenerate; `fit` re-seeds such
/// components instead of failing.
pub fn m_step(
    data: ArrayView2<f64>,
    resp: &Responsibilities,
    cfg: &EmConfig,
) -> Result<VmfMixture, MovmfError> {
    validate_unit_columns(data)?;
    m_step_impl(data, resp, cfg, None, None, DegeneracyPolicy::Error).map(|o| o.mixture)
}

/// Spherical k-means++ seeding: the first mean is a uniformly drawn data
/// point, each further mean is drawn with probability proportional to the
/// cosine distance to the nearest already-chosen mean.
fn seed_means(data: ArrayView2<f64>, z: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.ncols();
    let dim = data.nrows();
    let mut means = Array2::<f64>::zeros((z, dim));
    let first = rng.gen_range(0..n);
    means.row_mut(0).assign(&data.column(first));

    let mut best_cos: Vec<f64> = (0..n)
        .map(|i| data.column(i).dot(&means.row(0)))
        .collect();
    for zi in 1..z {
        let weights: Vec<f64> = best_cos.iter().map(|&c| (1.0 - c).max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &w) in weights.iter().enumerate() {
                if u < w {
                    chosen = i;
                    break;
                }
                u -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        means.row_mut(zi).assign(&data.column(pick));
        for (i, bc) in best_cos.iter_mut().enumerate() {
            *bc = bc.max(data.column(i).dot(&means.row(zi)));
        }
    }
    means
}

/// Fits a `cfg.num_components`-component mixture by EM. Initialization is
/// spherical k-means++ with concentration 1 and uniform weights; the loop
/// stops when the relative log-likelihood improvement drops below
/// `rel_tol` or after `max_iters` iterations.
///
/// The trace holds the log-likelihood of the parameters at each iteration;
/// its last entry is the likelihood of the returned mixture.
pub fn fit(data: ArrayView2<f64>, cfg: &EmConfig) -> Result<FitResult, MovmfError> {
    let n = data.ncols();
    let z = cfg.num_components;
    if z == 0 {
        return Err(MovmfError::TooFewPoints { n, z });
    }
    if n < z {
        return Err(MovmfError::TooFewPoints { n, z });
    }
    if data.nrows() < 2 {
        return Err(MovmfError::DimensionMismatch(format!(
            "points live in R^{}, need dim >= 2",
            data.nrows()
        )));
    }
    validate_unit_columns(data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mix = VmfMixture {
        means: seed_means(data, z, &mut rng),
        kappas: vec![1.0; z],
        weights: vec![1.0 / z as f64; z],
    };

    let mut trace = Vec::with_capacity(cfg.max_iters + 1);
    let mut converged = false;
    let mut reseeds = 0;
    let mut resp;
    loop {
        let (r, ll, per_point) = e_step_internal(data, &mix)?;
        resp = r;
        if let Some(&prev) = trace.last() {
            let improvement: f64 = ll - prev;
            trace.push(ll);
            if improvement.abs() <= cfg.rel_tol * prev.abs().max(f64::MIN_POSITIVE) {
                converged = true;
                break;
            }
        } else {
            trace.push(ll);
        }
        if trace.len() > cfg.max_iters {
            break;
        }
        let outcome = m_step_impl(
            data,
            &resp,
            cfg,
            Some(&per_point),
            Some(&mix.kappas),
            DegeneracyPolicy::Reseed,
        )?;
        if !outcome.reseeded.is_empty() {
            log::warn!(
                "re-seeded {} dead component(s) at iteration {}",
                outcome.reseeded.len(),
                trace.len()
            );
            reseeds += outcome.reseeded.len();
        }
        mix = outcome.mixture;
    }

    Ok(FitResult {
        mixture: mix,
        loglik_trace: trace,
        responsibilities: resp,
        converged,
        reseeds,
    })
}

/// STFT provenance a dictionary carries so segmentation can verify it is
/// applied to compatible features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictProvenance {
    pub stft: StftParams,
    pub w: usize,
    pub d: usize,
    pub sample_rate: u32,
}

/// Directions kept from a fitted mixture, one unit column per atom, in
/// descending concentration order.
#[derive(Debug, Clone)]
pub struct DirectionDictionary {
    pub atoms: Array2<f64>,
    pub kappas: Vec<f64>,
    pub weights: Vec<f64>,
    pub provenance: DictProvenance,
}

impl DirectionDictionary {
    pub fn wd(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.ncols()
    }
}

/// Keeps the `keep` most concentrated components as dictionary atoms.
/// Ties in kappa preserve component order.
pub fn build_dictionary(
    mix: &VmfMixture,
    keep: usize,
    provenance: DictProvenance,
) -> Result<DirectionDictionary, MovmfError> {
    let z = mix.n_components();
    if keep == 0 || keep > z {
        return Err(MovmfError::KeepOutOfRange { keep, available: z });
    }
    if provenance.w * provenance.d != mix.dim() {
        return Err(MovmfError::DimensionMismatch(format!(
            "provenance w*d = {} but mixture dim = {}",
            provenance.w * provenance.d,
            mix.dim()
        )));
    }
    let mut order: Vec<usize> = (0..z).collect();
    order.sort_by(|&a, &b| mix.kappas[b].total_cmp(&mix.kappas[a]).then(a.cmp(&b)));
    order.truncate(keep);

    let mut atoms = Array2::<f64>::zeros((mix.dim(), keep));
    let mut kappas = Vec::with_capacity(keep);
    let mut weights = Vec::with_capacity(keep);
    for (j, &zi) in order.iter().enumerate() {
        atoms.column_mut(j).assign(&mix.means.row(zi));
        kappas.push(mix.kappas[zi]);
        weights.push(mix.weights[zi]);
    }
    Ok(DirectionDictionary {
        atoms,
        kappas,
        weights,
        provenance,
    })
}

/// Draws `n` unit vectors from vMF(mean, kappa) with Wood's rejection
/// sampler, deterministically from `seed`. Columns are the samples.
pub fn sample_vmf(mean: ArrayView1<f64>, kappa: f64, n: usize, seed: u64) -> Array2<f64> {
    let dim = mean.len();
    assert!(dim >= 2, "sampling needs dim >= 2");
    assert!(kappa >= 0.0 && kappa.is_finite());
    let norm = mean.dot(&mean).sqrt();
    assert!((norm - 1.0).abs() < UNIT_TOL, "mean must be unit length");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Array2::<f64>::zeros((dim, n));

    if kappa == 0.0 {
        for mut col in out.columns_mut() {
            let v = random_unit(dim, &mut rng);
            col.assign(&Array1::from(v));
        }
        return out;
    }

    let p = dim as f64;
    let b = (-2.0 * kappa + (4.0 * kappa * kappa + (p - 1.0) * (p - 1.0)).sqrt()) / (p - 1.0);
    let x0 = (1.0 - b) / (1.0 + b);
    let c = kappa * x0 + (p - 1.0) * (1.0 - x0 * x0).ln();
    let beta = rand_distr::Beta::new((p - 1.0) / 2.0, (p - 1.0) / 2.0).expect("valid shape");

    for mut col in out.columns_mut() {
        let w = loop {
            let zb: f64 = beta.sample(&mut rng);
            let u: f64 = rng.gen::<f64>();
            let w = (1.0 - (1.0 + b) * zb) / (1.0 - (1.0 - b) * zb);
            if kappa * w + (p - 1.0) * (1.0 - x0 * w).ln() - c >= u.ln() {
                break w;
            }
        };
        // Tangent direction uniform on the equator, then tilt to w.
        let v = random_unit_orthogonal(mean, &mut rng);
        let s = (1.0 - w * w).max(0.0).sqrt();
        for (i, cv) in col.iter_mut().enumerate() {
            *cv = w * mean[i] + s * v[i];
        }
        let n2 = col.dot(&col).sqrt();
        col.mapv_inplace(|x| x / n2);
    }
    out
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform unit vector in the hyperplane orthogonal to `mean`.
fn random_unit_orthogonal(mean: ArrayView1<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v = random_unit(mean.len(), rng);
        let proj: f64 = v.iter().zip(mean.iter()).map(|(a, b)| a * b).sum();
        for (vi, mi) in v.iter_mut().zip(mean.iter()) {
            *vi -= proj * mi;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            for vi in &mut v {
                *vi /= norm;
            }
            return v;
        }
    }
}
