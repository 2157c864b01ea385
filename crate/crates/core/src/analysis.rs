//! Empirical checks of the structural inequalities: NTK assembly, the NTK
//! lower bound by the last-hidden Gram, the PL-type gradient bound, and the
//! two layerwise bounds (gradient norm and feature Lipschitz).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::certificate::NORM_TOL;
use crate::error::{Error, Result};
use crate::init::Dataset;
use crate::linalg::{self, Matrix};
use crate::network::{self, Architecture, Params};
use crate::rng;
use crate::trainer;

/// Largest `N·n_L` for which the kernel is materialized.
pub const NTK_MAX_ROWS: usize = 4096;
/// Relative slack for the NTK and PL comparisons.
pub const NTK_SLACK: f64 = 1e-8;
/// Relative slack for the layerwise bounds.
pub const LEMMA_SLACK: f64 = 1e-9;

/// `K = Σ_l B_l B_lᵀ` with `B_l = ∂vec(F_L)/∂vec(W_l)`.
pub fn assemble_ntk(arch: &Architecture, params: &Params, dataset: &Dataset) -> Result<Matrix> {
    let rows = dataset.samples() * arch.output_dim();
    if rows > NTK_MAX_ROWS {
        return Err(Error::InvalidInput(format!(
            "kernel would have {rows} rows (limit {NTK_MAX_ROWS}); reduce N or n_L"
        )));
    }
    let cache = network::forward(arch, params, &dataset.x)?;
    let (k, _) = ntk_blocks(arch, params, &cache)?;
    Ok(k)
}

fn ntk_blocks(
    arch: &Architecture,
    params: &Params,
    cache: &network::FeatureCache,
) -> Result<(Matrix, Vec<f64>)> {
    let rows = cache.samples() * arch.output_dim();
    let mut k = Matrix::zeros(rows, rows);
    let mut traces = Vec::with_capacity(arch.depth());
    for l in 1..=arch.depth() {
        let b = network::jacobian_block(arch, params, cache, l)?;
        let bb = linalg::gram_rows(&b);
        traces.push((0..rows).map(|i| bb.get(i, i)).sum());
        k = k.add(&bb)?;
    }
    Ok((k, traces))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NtkReport {
    pub samples: usize,
    pub widths: Vec<usize>,
    /// `n_{L-1} ≥ N`, the regime where the Gram bound can be positive.
    pub wide: bool,
    pub k_min_eig: f64,
    pub gram_min_eig: f64,
    /// `tr(B_l B_lᵀ)` per layer.
    pub block_traces: Vec<f64>,
    /// `Σ_l ‖∇_{W_l}Φ‖_F²`.
    pub pl_lhs: f64,
    /// `2 λ_min(K) Φ`.
    pub pl_rhs: f64,
    pub psd_ok: bool,
    pub gram_bound_ok: bool,
    pub pl_ok: bool,
}

impl NtkReport {
    pub fn holds(&self) -> bool {
        self.psd_ok && self.gram_bound_ok && self.pl_ok
    }
}

pub fn check_ntk_bound(arch: &Architecture, params: &Params, dataset: &Dataset) -> Result<NtkReport> {
    let rows = dataset.samples() * arch.output_dim();
    if rows > NTK_MAX_ROWS {
        return Err(Error::InvalidInput(format!(
            "kernel would have {rows} rows (limit {NTK_MAX_ROWS}); reduce N or n_L"
        )));
    }
    let cache = network::forward(arch, params, &dataset.x)?;
    let (k, block_traces) = ntk_blocks(arch, params, &cache)?;
    let k_min_eig = linalg::sym_eig_min(&k)?;
    let gram_min_eig = linalg::sym_eig_min(&linalg::gram_rows(cache.last_hidden()))?;
    let phi = network::loss(&cache, &dataset.y)?;
    let grads = network::gradients(arch, params, &cache, &dataset.y)?;
    let pl_lhs = grads.squared_norm();
    let pl_rhs = 2.0 * k_min_eig * phi;
    let k_norm = linalg::frobenius_norm(&k);
    Ok(NtkReport {
        samples: dataset.samples(),
        widths: arch.widths().to_vec(),
        wide: arch.last_hidden_width() >= dataset.samples(),
        k_min_eig,
        gram_min_eig,
        block_traces,
        pl_lhs,
        pl_rhs,
        psd_ok: k_min_eig >= -NTK_SLACK * k_norm,
        gram_bound_ok: k_min_eig >= gram_min_eig - NTK_SLACK * (1.0 + k_min_eig.abs()),
        pl_ok: pl_lhs >= pl_rhs - NTK_SLACK * (1.0 + pl_lhs),
    })
}

/// Ranges for random trials.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDims {
    pub depths: Vec<usize>,
    pub max_samples: usize,
    /// Bound on input and hidden widths.
    pub max_width: usize,
    pub max_output: usize,
}

impl Default for TrialDims {
    fn default() -> Self {
        Self {
            depths: vec![1, 2, 3, 4],
            max_samples: 16,
            max_width: 64,
            max_output: 64,
        }
    }
}

impl TrialDims {
    /// Smaller outputs so the kernel stays at most a few hundred rows.
    pub fn ntk() -> Self {
        Self {
            max_output: 4,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.depths.is_empty() || self.depths.contains(&0) {
            return Err(Error::InvalidInput("depths must be a non-empty list of positive values".into()));
        }
        if self.max_samples == 0 || self.max_width == 0 || self.max_output == 0 {
            return Err(Error::InvalidInput("trial dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// One random trial: the inputs summary and one inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCheck {
    pub trial: usize,
    pub seed: u64,
    pub samples: usize,
    pub widths: Vec<usize>,
    pub layer: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

impl LemmaCheck {
    fn new(trial: usize, seed: u64, samples: usize, widths: &[usize], layer: usize, lhs: f64, rhs: f64) -> Self {
        let margin = rhs - lhs;
        Self {
            trial,
            seed,
            samples,
            widths: widths.to_vec(),
            layer,
            lhs,
            rhs,
            margin,
            holds: margin >= -LEMMA_SLACK * (1.0 + rhs.abs()),
        }
    }
}

struct Draw {
    arch: Architecture,
    params: Params,
    dataset: Dataset,
}

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(rows, cols, data).expect("finite draws")
}

fn random_params(rng: &mut ChaCha8Rng, arch: &Architecture) -> Params {
    let weights = (1..=arch.depth())
        .map(|l| {
            let (r, c) = arch.layer_shape(l);
            let scale = rng.random_range(0.25..4.0) / (r as f64).sqrt();
            gaussian(rng, r, c, scale)
        })
        .collect();
    Params::new(arch, weights).expect("shapes follow the architecture")
}

fn random_draw(rng: &mut ChaCha8Rng, dims: &TrialDims, seed: u64) -> Draw {
    let depth = dims.depths[rng.random_range(0..dims.depths.len())];
    let samples = rng.random_range(1..=dims.max_samples);
    let mut widths = Vec::with_capacity(depth + 1);
    for _ in 0..depth {
        widths.push(rng.random_range(1..=dims.max_width));
    }
    widths.push(rng.random_range(1..=dims.max_output));
    let arch = Architecture::new(widths).expect("positive widths");
    let params = random_params(rng, &arch);
    let x = gaussian(rng, samples, arch.input_dim(), 1.0);
    let y = gaussian(rng, samples, arch.output_dim(), 1.0);
    Draw {
        arch,
        params,
        dataset: Dataset::new(x, y, seed).expect("matching rows"),
    }
}

fn trial_rng(seed: u64, trial: usize) -> (u64, ChaCha8Rng) {
    let s = rng::derive_seed(seed, &[trial as u64]);
    (s, rng::stream(s, 0))
}

fn spectral(w: &Matrix) -> Result<f64> {
    Ok(linalg::spectral_norm(w, NORM_TOL, linalg::DEFAULT_SPECTRAL_MAX_ITER)?)
}

/// `‖∇_{W_l}Φ‖_F ≤ ‖X‖_F Π_{p≠l} ‖W_p‖₂ ‖F_L − Y‖_F` for one network.
pub fn lemma1_gradient_checks(
    arch: &Architecture,
    params: &Params,
    dataset: &Dataset,
) -> Result<Vec<(f64, f64)>> {
    let cache = network::forward(arch, params, &dataset.x)?;
    let grads = network::gradients(arch, params, &cache, &dataset.y)?;
    let norms = params.weights().iter().map(spectral).collect::<Result<Vec<_>>>()?;
    let x_norm = linalg::frobenius_norm(&dataset.x);
    let r_norm = linalg::frobenius_norm(&network::residual(&cache, &dataset.y)?);
    Ok((1..=arch.depth())
        .map(|l| {
            let others: f64 = norms
                .iter()
                .enumerate()
                .filter(|&(p, _)| p + 1 != l)
                .map(|(_, n)| n)
                .product();
            let lhs = linalg::frobenius_norm(grads.layer(l));
            (lhs, x_norm * others * r_norm)
        })
        .collect())
}

/// `‖F_l(θ_a) − F_l(θ_b)‖_F ≤ ‖X‖_F Σ_{p≤l} ‖W_p^a − W_p^b‖₂ Π_{q≤l, q≠p} λ̄_q`
/// with `λ̄_q = max(‖W_q^a‖₂, ‖W_q^b‖₂)`, for every `l`.
///
/// The product form avoids dividing by `λ̄_p`; it equals `(Π_{q≤l} λ̄_q) Σ_p λ̄_p^{-1}‖ΔW_p‖₂`.
pub fn lemma1_lipschitz_checks(
    arch: &Architecture,
    a: &Params,
    b: &Params,
    x: &Matrix,
) -> Result<Vec<(f64, f64)>> {
    let ca = network::forward(arch, a, x)?;
    let cb = network::forward(arch, b, x)?;
    let depth = arch.depth();
    let mut lambda = Vec::with_capacity(depth);
    let mut delta = Vec::with_capacity(depth);
    for l in 1..=depth {
        lambda.push(spectral(a.layer(l))?.max(spectral(b.layer(l))?));
        delta.push(spectral(&a.layer(l).sub(b.layer(l))?)?);
    }
    let x_norm = linalg::frobenius_norm(x);
    let mut out = Vec::with_capacity(depth);
    for l in 1..=depth {
        let lhs = linalg::frobenius_norm(&ca.feature(l).sub(cb.feature(l))?);
        let sum: f64 = (0..l)
            .map(|p| {
                let prod: f64 = (0..l).filter(|&q| q != p).map(|q| lambda[q]).product();
                delta[p] * prod
            })
            .sum();
        out.push((lhs, x_norm * sum));
    }
    Ok(out)
}

fn require_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    Ok(())
}

/// Gradient-norm bound on `trials` random networks; one check per layer.
pub fn check_lemma1_gradient(trials: usize, dims: &TrialDims, seed: u64) -> Result<Vec<LemmaCheck>> {
    require_trials(trials)?;
    dims.validate()?;
    let mut out = Vec::new();
    for t in 0..trials {
        let (s, mut g) = trial_rng(seed, t);
        let d = random_draw(&mut g, dims, s);
        let n = d.dataset.samples();
        for (l, (lhs, rhs)) in lemma1_gradient_checks(&d.arch, &d.params, &d.dataset)?
            .into_iter()
            .enumerate()
        {
            out.push(LemmaCheck::new(t, s, n, d.arch.widths(), l + 1, lhs, rhs));
        }
    }
    Ok(out)
}

/// Feature Lipschitz bound on `trials` random parameter pairs; one check per layer.
pub fn check_lemma1_lipschitz(trials: usize, dims: &TrialDims, seed: u64) -> Result<Vec<LemmaCheck>> {
    require_trials(trials)?;
    dims.validate()?;
    let mut out = Vec::new();
    for t in 0..trials {
        let (s, mut g) = trial_rng(seed, t);
        let d = random_draw(&mut g, dims, s);
        // Alternate between independent pairs and nearby pairs.
        let b = if t % 2 == 0 {
            random_params(&mut g, &d.arch)
        } else {
            let eps = 10f64.powf(g.random_range(-6.0..0.0));
            let weights = d
                .params
                .weights()
                .iter()
                .map(|w| {
                    let noise = gaussian(&mut g, w.rows(), w.cols(), eps / (w.rows() as f64).sqrt());
                    w.add(&noise).expect("same shape")
                })
                .collect();
            Params::new(&d.arch, weights)?
        };
        let n = d.dataset.samples();
        for (l, (lhs, rhs)) in lemma1_lipschitz_checks(&d.arch, &d.params, &b, &d.dataset.x)?
            .into_iter()
            .enumerate()
        {
            out.push(LemmaCheck::new(t, s, n, d.arch.widths(), l + 1, lhs, rhs));
        }
    }
    Ok(out)
}

/// NTK reports on `trials` random networks.
pub fn check_ntk_suite(trials: usize, dims: &TrialDims, seed: u64) -> Result<Vec<(u64, NtkReport)>> {
    require_trials(trials)?;
    dims.validate()?;
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let (s, mut g) = trial_rng(seed, t);
        let d = random_draw(&mut g, dims, s);
        out.push((s, check_ntk_bound(&d.arch, &d.params, &d.dataset)?));
    }
    Ok(out)
}

/// One random gradient step per trial; the check is the loss-change identity
/// (`lhs` = residual, `rhs` = its roundoff tolerance).
pub fn check_descent_identity(trials: usize, dims: &TrialDims, seed: u64) -> Result<Vec<LemmaCheck>> {
    require_trials(trials)?;
    dims.validate()?;
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let (s, mut g) = trial_rng(seed, t);
        let d = random_draw(&mut g, dims, s);
        let inputs = crate::certificate::CertificateInputs::measure(
            &d.arch,
            &d.params,
            &d.dataset,
            &vec![1.0; d.arch.depth()],
        )?;
        let eta = 10f64.powf(g.random_range(-5.0..-1.0));
        let cert = inputs.evaluate(eta);
        let (next, _) = trainer::gd_step(&d.arch, &d.params, &d.dataset, eta)?;
        let audit = trainer::descent_audit(&d.arch, &d.params, &next, &d.dataset, &cert)?;
        let mut c = LemmaCheck::new(
            t,
            s,
            d.dataset.samples(),
            d.arch.widths(),
            0,
            audit.identity_residual,
            audit.identity_tolerance,
        );
        c.holds = audit.identity_holds;
        out.push(c);
    }
    Ok(out)
}
