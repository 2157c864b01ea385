//! Synthetic sphere-uniform data and the initialization schemes.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::network::{self, Architecture, Params};
use crate::rng;

/// Training data: `x` is `N × n_0`, `y` is `N × n_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub seed: u64,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix, seed: u64) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!(
                "x has {} rows, y has {}",
                x.rows(),
                y.rows()
            )));
        }
        Ok(Self { x, y, seed })
    }

    pub fn samples(&self) -> usize {
        self.x.rows()
    }
}

/// Which initialization to draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitScheme {
    /// Hidden layers `β·W_l⁰` with LeCun base draws, output layer zero.
    BetaScaled { beta: f64 },
    /// `(W_l)_{ij} ~ N(0, 1/n_{l-1})` for every layer.
    LeCunTwoLayer,
    /// LeCun hidden layers, output variance `n_{L-1}^{-exponent}`.
    LeCunDeep { output_variance_exponent: f64 },
}

/// Output-layer variance exponent of the deep LeCun scheme.
pub const DEEP_OUTPUT_EXPONENT: f64 = 4.0 / 3.0;

impl InitScheme {
    pub fn lecun_deep() -> Self {
        InitScheme::LeCunDeep {
            output_variance_exponent: DEEP_OUTPUT_EXPONENT,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::BetaScaled { beta } if !(beta > 0.0 && beta.is_finite()) => {
                Err(Error::InvalidInput(format!("beta must be positive, got {beta}")))
            }
            InitScheme::LeCunDeep {
                output_variance_exponent: e,
            } if !(e > 1.0) => Err(Error::InvalidInput(format!(
                "output variance exponent must exceed 1, got {e}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn draw(&self, arch: &Architecture, seed: u64) -> Result<Params> {
        self.validate()?;
        match *self {
            InitScheme::BetaScaled { beta } => init_beta_scaled(arch, seed, beta),
            InitScheme::LeCunTwoLayer => Ok(init_lecun(arch, seed)),
            InitScheme::LeCunDeep {
                output_variance_exponent,
            } => init_lecun_deep_with_exponent(arch, seed, output_variance_exponent),
        }
    }
}

fn gaussian_row<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|&x| x != 0.0) {
            return v;
        }
    }
}

fn sphere_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize, radius: f64) -> Matrix {
    let mut data = Vec::with_capacity(rows * dim);
    for _ in 0..rows {
        let v = gaussian_row(rng, dim);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| x / norm * radius));
    }
    Matrix::new(rows, dim, data).expect("finite sphere samples")
}

/// `N` rows uniform on the sphere of radius `√n_0`, labels uniform on the unit sphere of `ℝ^{n_L}`.
pub fn generate_sphere_data(n: usize, n0: usize, nl: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || n0 == 0 || nl == 0 {
        return Err(Error::InvalidInput(format!(
            "dataset dimensions must be positive, got N={n}, n0={n0}, nL={nl}"
        )));
    }
    let x = sphere_rows(&mut rng::stream(seed, rng::DATA_X), n, n0, (n0 as f64).sqrt());
    let y = sphere_rows(&mut rng::stream(seed, rng::DATA_Y), n, nl, 1.0);
    Dataset::new(x, y, seed)
}

fn gaussian_layer(arch: &Architecture, seed: u64, l: usize, std: f64) -> Matrix {
    let (r, c) = arch.layer_shape(l);
    let mut g = rng::layer_stream(seed, l);
    let data = (0..r * c)
        .map(|_| std * g.sample::<f64, _>(StandardNormal))
        .collect();
    Matrix::new(r, c, data).expect("finite gaussian draws")
}

/// LeCun initialization: `(W_l)_{ij} ~ N(0, 1/n_{l-1})` independently for every layer.
pub fn init_lecun(arch: &Architecture, seed: u64) -> Params {
    let weights = (1..=arch.depth())
        .map(|l| gaussian_layer(arch, seed, l, 1.0 / (arch.width(l - 1) as f64).sqrt()))
        .collect();
    Params::new(arch, weights).expect("shapes follow the architecture")
}

/// LeCun hidden layers with output-layer variance `n_{L-1}^{-4/3}`.
pub fn init_lecun_deep(arch: &Architecture, seed: u64) -> Result<Params> {
    init_lecun_deep_with_exponent(arch, seed, DEEP_OUTPUT_EXPONENT)
}

pub fn init_lecun_deep_with_exponent(
    arch: &Architecture,
    seed: u64,
    exponent: f64,
) -> Result<Params> {
    if arch.depth() < 2 {
        return Err(Error::InvalidInput(
            "deep LeCun initialization needs L >= 2".into(),
        ));
    }
    let depth = arch.depth();
    let mut weights: Vec<Matrix> = (1..depth)
        .map(|l| gaussian_layer(arch, seed, l, 1.0 / (arch.width(l - 1) as f64).sqrt()))
        .collect();
    let std = (arch.last_hidden_width() as f64).powf(-exponent / 2.0);
    weights.push(gaussian_layer(arch, seed, depth, std));
    Params::new(arch, weights)
}

/// `(β W_1⁰, …, β W_{L-1}⁰, 0)` with LeCun base draws.
pub fn init_beta_scaled(arch: &Architecture, seed: u64, beta: f64) -> Result<Params> {
    let base = init_lecun(arch, seed);
    scale_hidden(arch, &base, beta)
}

/// Scales hidden layers of `base` by `beta` and zeroes the output layer.
pub fn scale_hidden(arch: &Architecture, base: &Params, beta: f64) -> Result<Params> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be positive, got {beta}")));
    }
    let depth = arch.depth();
    let weights = base
        .weights()
        .iter()
        .enumerate()
        .map(|(i, w)| {
            if i + 1 < depth {
                w.scale(beta)
            } else {
                Matrix::zeros(w.rows(), w.cols())
            }
        })
        .collect();
    Params::new(arch, weights)
}

/// `σ_min(F_{L-1})` of the forward pass on `x`.
pub fn alpha0(arch: &Architecture, params: &Params, x: &Matrix) -> Result<f64> {
    let cache = network::forward(arch, params, x)?;
    Ok(linalg::smallest_singular_value(cache.last_hidden())?)
}

/// A β-scaled base draw with `α₀ > 0`.
#[derive(Debug, Clone)]
pub struct BetaBase {
    /// Base parameters (unscaled hidden layers, zero output layer).
    pub params: Params,
    /// Seed that produced `params`.
    pub seed: u64,
    /// Seeds rejected because their draw had `α₀ = 0`.
    pub rejected: Vec<u64>,
    pub alpha0: f64,
}

/// Draws the base of the β-scaled scheme, re-drawing with derived seeds while `α₀ = 0`.
pub fn draw_beta_base(
    arch: &Architecture,
    dataset: &Dataset,
    seed: u64,
    max_attempts: usize,
) -> Result<BetaBase> {
    let mut rejected = Vec::new();
    for attempt in 0..max_attempts.max(1) {
        let s = if attempt == 0 {
            seed
        } else {
            rng::derive_seed(seed, &[attempt as u64])
        };
        let params = init_beta_scaled(arch, s, 1.0)?;
        let a0 = alpha0(arch, &params, &dataset.x)?;
        if a0 > 0.0 {
            return Ok(BetaBase {
                params,
                seed: s,
                rejected,
                alpha0: a0,
            });
        }
        rejected.push(s);
    }
    Err(Error::SearchFailed(format!(
        "no base draw with alpha0 > 0 after {} attempts",
        max_attempts.max(1)
    )))
}
