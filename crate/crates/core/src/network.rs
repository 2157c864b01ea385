//! Bias-free deep ReLU network in standard parameterization.
//!
//! `F_0 = X`, `F_l = σ(F_{l-1} W_l)` for hidden layers and `F_L = F_{L-1} W_L`
//! (linear output). Samples are rows. The loss is `Φ = ½‖F_L − Y‖_F²`.
//!
//! The ReLU derivative uses `σ'(0) = 0`.
//!
//! Vectorization convention for Jacobians: `vec` stacks columns, so for an
//! `N × n_L` output the row index of `∂vec(F_L)/∂vec(W_l)` is `j·N + i`
//! (output unit `j`, sample `i`) and the column index is `b·n_{l-1} + a` for
//! the weight `W_l[a, b]`.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Layer widths `(n_0, …, n_L)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    widths: Vec<usize>,
}

impl Architecture {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least two widths (n_0, n_1), got {widths:?}"
            )));
        }
        if widths.contains(&0) {
            return Err(Error::InvalidInput(format!("zero width in {widths:?}")));
        }
        Ok(Self { widths })
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    /// `n_l` for `0 ≤ l ≤ L`.
    pub fn width(&self, l: usize) -> usize {
        self.widths[l]
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("non-empty")
    }

    /// `n_{L-1}`, the width the certificate needs to be at least `N`.
    pub fn last_hidden_width(&self) -> usize {
        self.widths[self.depth() - 1]
    }

    /// Shape of `W_l` (1-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l - 1], self.widths[l])
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Weights `θ = (W_1, …, W_L)`; `W_l` is `n_{l-1} × n_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    weights: Vec<Matrix>,
}

impl Params {
    pub fn new(arch: &Architecture, weights: Vec<Matrix>) -> Result<Self> {
        let p = Self { weights };
        p.check(arch)?;
        if let Some(l) = p.weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(format!("W_{}", l + 1)));
        }
        Ok(p)
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Self {
            weights: (1..=arch.depth())
                .map(|l| {
                    let (r, c) = arch.layer_shape(l);
                    Matrix::zeros(r, c)
                })
                .collect(),
        }
    }

    /// Verifies that the shapes chain against `arch`.
    pub fn check(&self, arch: &Architecture) -> Result<()> {
        if self.weights.len() != arch.depth() {
            return Err(Error::Shape(format!(
                "{} weight matrices for depth {}",
                self.weights.len(),
                arch.depth()
            )));
        }
        for (i, w) in self.weights.iter().enumerate() {
            let want = arch.layer_shape(i + 1);
            if w.shape() != want {
                return Err(Error::Shape(format!(
                    "W_{} is {:?}, expected {:?}",
                    i + 1,
                    w.shape(),
                    want
                )));
            }
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// `W_l`, 1-based.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.weights[l - 1]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut Matrix {
        &mut self.weights[l - 1]
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<Matrix> {
        self.weights
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
    }
}

/// Per-layer outputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCache {
    /// `F_0 = X, F_1, …, F_L`.
    features: Vec<Matrix>,
    /// `F_{l-1} W_l` for hidden layers `l = 1, …, L-1`.
    preactivations: Vec<Matrix>,
}

impl FeatureCache {
    /// `F_l`, `0 ≤ l ≤ L`.
    pub fn feature(&self, l: usize) -> &Matrix {
        &self.features[l]
    }

    pub fn features(&self) -> &[Matrix] {
        &self.features
    }

    /// Hidden preactivation `F_{l-1} W_l`, `1 ≤ l ≤ L-1`.
    pub fn preactivation(&self, l: usize) -> &Matrix {
        &self.preactivations[l - 1]
    }

    pub fn preactivations(&self) -> &[Matrix] {
        &self.preactivations
    }

    pub fn input(&self) -> &Matrix {
        &self.features[0]
    }

    pub fn output(&self) -> &Matrix {
        self.features.last().expect("non-empty")
    }

    /// `F_{L-1}`.
    pub fn last_hidden(&self) -> &Matrix {
        &self.features[self.features.len() - 2]
    }

    pub fn depth(&self) -> usize {
        self.features.len() - 1
    }

    pub fn samples(&self) -> usize {
        self.features[0].rows()
    }

    /// Smallest `|preactivation|` over all hidden units and samples (∞ for `L = 1`).
    pub fn kink_margin(&self) -> f64 {
        self.preactivations
            .iter()
            .flat_map(|z| z.data().iter())
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        if self.features.len() != arch.depth() + 1 {
            return Err(Error::Shape(format!(
                "cache has {} feature matrices for depth {}",
                self.features.len(),
                arch.depth()
            )));
        }
        let n = self.samples();
        for (l, f) in self.features.iter().enumerate() {
            if f.shape() != (n, arch.width(l)) {
                return Err(Error::Shape(format!(
                    "stale cache: F_{l} is {:?}, expected ({n}, {})",
                    f.shape(),
                    arch.width(l)
                )));
            }
        }
        Ok(())
    }
}

/// Gradients `∇_{W_l} Φ`, shaped like the weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    grads: Vec<Matrix>,
}

impl GradientSet {
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.grads[l - 1]
    }

    pub fn grads(&self) -> &[Matrix] {
        &self.grads
    }

    pub fn frobenius_norms(&self) -> Vec<f64> {
        self.grads.iter().map(linalg::frobenius_norm).collect()
    }

    /// Squared Euclidean norm of the full vectorized gradient.
    pub fn squared_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(Matrix::is_finite)
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

#[inline]
fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

pub fn forward(arch: &Architecture, params: &Params, x: &Matrix) -> Result<FeatureCache> {
    params.check(arch)?;
    if x.cols() != arch.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, architecture expects n_0 = {}",
            x.cols(),
            arch.input_dim()
        )));
    }
    let depth = arch.depth();
    let mut features = Vec::with_capacity(depth + 1);
    let mut preactivations = Vec::with_capacity(depth - 1);
    features.push(x.clone());
    for l in 1..=depth {
        let z = linalg::matmul(&features[l - 1], params.layer(l))?;
        if l < depth {
            features.push(z.map(relu));
            preactivations.push(z);
        } else {
            features.push(z);
        }
    }
    Ok(FeatureCache {
        features,
        preactivations,
    })
}

/// `F_L − Y`.
pub fn residual(cache: &FeatureCache, y: &Matrix) -> Result<Matrix> {
    if cache.output().shape() != y.shape() {
        return Err(Error::Shape(format!(
            "labels are {:?}, output is {:?}",
            y.shape(),
            cache.output().shape()
        )));
    }
    Ok(cache.output().sub(y)?)
}

/// `Φ = ½‖F_L − Y‖_F²`.
pub fn loss(cache: &FeatureCache, y: &Matrix) -> Result<f64> {
    let r = residual(cache, y)?;
    let n = linalg::frobenius_norm(&r);
    Ok(0.5 * n * n)
}

/// Exact backprop gradients of `Φ`; in particular `∇_{W_L}Φ = F_{L-1}ᵀ(F_L − Y)`.
pub fn gradients(
    arch: &Architecture,
    params: &Params,
    cache: &FeatureCache,
    y: &Matrix,
) -> Result<GradientSet> {
    params.check(arch)?;
    cache.check(arch)?;
    let depth = arch.depth();
    let mut delta = residual(cache, y)?;
    let mut grads = vec![Matrix::zeros(0, 0); depth];
    for l in (1..=depth).rev() {
        grads[l - 1] = linalg::t_matmul(cache.feature(l - 1), &delta)?;
        if l > 1 {
            let back = linalg::matmul_t(&delta, params.layer(l))?;
            delta = back.hadamard(&cache.preactivation(l - 1).map(relu_grad))?;
        }
    }
    Ok(GradientSet { grads })
}

/// `∂F_L[:, j] / ∂Z_l` for every output unit `j`, where `Z_l = F_{l-1} W_l`.
///
/// Row `i` of entry `j` holds the sensitivity of `F_L[i, j]` to the
/// preactivation row `Z_l[i, :]`; samples do not interact.
fn output_sensitivities(
    arch: &Architecture,
    params: &Params,
    cache: &FeatureCache,
    l: usize,
) -> Result<Vec<Matrix>> {
    let depth = arch.depth();
    let n = cache.samples();
    let mut out = Vec::with_capacity(arch.output_dim());
    for j in 0..arch.output_dim() {
        let mut d = Matrix::from_fn(n, arch.output_dim(), |_, c| if c == j { 1.0 } else { 0.0 });
        for m in (l..depth).rev() {
            let back = linalg::matmul_t(&d, params.layer(m + 1))?;
            d = back.hadamard(&cache.preactivation(m).map(relu_grad))?;
        }
        out.push(d);
    }
    Ok(out)
}

/// Dense `∂vec(F_L)/∂vec(W_l)` of shape `(N·n_L) × (n_{l-1}·n_l)`.
pub fn jacobian_block(
    arch: &Architecture,
    params: &Params,
    cache: &FeatureCache,
    l: usize,
) -> Result<Matrix> {
    if l == 0 || l > arch.depth() {
        return Err(Error::InvalidInput(format!(
            "layer index {l} outside 1..={}",
            arch.depth()
        )));
    }
    params.check(arch)?;
    cache.check(arch)?;
    let n = cache.samples();
    let (fan_in, fan_out) = arch.layer_shape(l);
    let prev = cache.feature(l - 1);
    let sens = output_sensitivities(arch, params, cache, l)?;
    let cols = fan_in * fan_out;
    let mut block = Matrix::zeros(n * arch.output_dim(), cols);
    for (j, d) in sens.iter().enumerate() {
        for i in 0..n {
            let row = j * n + i;
            let f = prev.row(i);
            for b in 0..fan_out {
                let dib = d.get(i, b);
                if dib == 0.0 {
                    continue;
                }
                for (a, &fa) in f.iter().enumerate() {
                    block.set(row, b * fan_in + a, fa * dib);
                }
            }
        }
    }
    Ok(block)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> (Architecture, Params, Matrix) {
        let arch = Architecture::new(vec![2, 2, 1]).unwrap();
        let params = Params::new(
            &arch,
            vec![
                Matrix::from_rows(&[&[1.0, 0.0], &[0.0, -1.0]]),
                Matrix::from_rows(&[&[1.0], &[1.0]]),
            ],
        )
        .unwrap();
        (arch, params, Matrix::from_rows(&[&[1.0, 2.0]]))
    }

    #[test]
    fn forward_hand_example() {
        let (arch, params, x) = toy();
        let cache = forward(&arch, &params, &x).unwrap();
        assert_eq!(cache.feature(1), &Matrix::from_rows(&[&[1.0, 0.0]]));
        assert_eq!(cache.output(), &Matrix::from_rows(&[&[1.0]]));
        assert_eq!(cache.preactivation(1), &Matrix::from_rows(&[&[1.0, -2.0]]));
        assert_eq!(cache.input(), &x);
    }

    #[test]
    fn zero_weights_give_zero_features() {
        let arch = Architecture::new(vec![3, 4, 5, 2]).unwrap();
        let x = Matrix::from_fn(6, 3, |i, j| (i + j) as f64 - 2.5);
        let cache = forward(&arch, &Params::zeros(&arch), &x).unwrap();
        for l in 1..=3 {
            assert!(cache.feature(l).is_zero());
        }
    }

    #[test]
    fn shape_errors() {
        let (arch, params, _) = toy();
        assert!(matches!(
            forward(&arch, &params, &Matrix::zeros(1, 3)),
            Err(Error::Shape(_))
        ));
        assert!(Architecture::new(vec![3]).is_err());
        assert!(Architecture::new(vec![3, 0, 1]).is_err());
        let other = Architecture::new(vec![2, 3, 1]).unwrap();
        assert!(Params::new(&other, params.weights().to_vec()).is_err());
        let cache = forward(&arch, &params, &Matrix::from_rows(&[&[1.0, 2.0]])).unwrap();
        assert!(matches!(loss(&cache, &Matrix::zeros(2, 1)), Err(Error::Shape(_))));
        assert!(gradients(&other, &Params::zeros(&other), &cache, &Matrix::zeros(1, 1)).is_err());
        assert!(jacobian_block(&arch, &params, &cache, 0).is_err());
        assert!(jacobian_block(&arch, &params, &cache, 3).is_err());
    }

    #[test]
    fn loss_cases() {
        let (arch, params, x) = toy();
        let cache = forward(&arch, &params, &x).unwrap();
        assert_eq!(loss(&cache, &Matrix::from_rows(&[&[1.0]])).unwrap(), 0.0);
        let lin = Architecture::new(vec![1, 1]).unwrap();
        let p = Params::new(&lin, vec![Matrix::from_rows(&[&[1.0]])]).unwrap();
        let c = forward(&lin, &p, &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert_eq!(loss(&c, &Matrix::from_rows(&[&[0.0]])).unwrap(), 0.5);
    }

    #[test]
    fn linear_gradient_hand_example() {
        let lin = Architecture::new(vec![1, 1]).unwrap();
        let p = Params::new(&lin, vec![Matrix::from_rows(&[&[2.0]])]).unwrap();
        let x = Matrix::from_rows(&[&[1.0]]);
        let c = forward(&lin, &p, &x).unwrap();
        let g = gradients(&lin, &p, &c, &Matrix::from_rows(&[&[1.0]])).unwrap();
        assert_eq!(g.layer(1), &Matrix::from_rows(&[&[1.0]]));
    }

    #[test]
    fn gradients_vanish_at_global_minimum() {
        let (arch, params, x) = toy();
        let cache = forward(&arch, &params, &x).unwrap();
        let y = cache.output().clone();
        let g = gradients(&arch, &params, &cache, &y).unwrap();
        assert!(g.grads().iter().all(Matrix::is_zero));
    }

    #[test]
    fn output_layer_gradient_is_exact_formula() {
        let (arch, params, x) = toy();
        let cache = forward(&arch, &params, &x).unwrap();
        let y = Matrix::from_rows(&[&[-0.5]]);
        let g = gradients(&arch, &params, &cache, &y).unwrap();
        let want = linalg::matmul(&cache.last_hidden().transpose(), &residual(&cache, &y).unwrap())
            .unwrap();
        assert_eq!(g.layer(2), &want);
    }

    #[test]
    fn relu_kink_uses_zero_derivative() {
        // Hidden unit sits exactly at 0: no gradient flows into W_1's second column.
        let arch = Architecture::new(vec![1, 2, 1]).unwrap();
        let params = Params::new(
            &arch,
            vec![
                Matrix::from_rows(&[&[1.0, 0.0]]),
                Matrix::from_rows(&[&[1.0], &[1.0]]),
            ],
        )
        .unwrap();
        let x = Matrix::from_rows(&[&[1.0]]);
        let cache = forward(&arch, &params, &x).unwrap();
        let g = gradients(&arch, &params, &cache, &Matrix::from_rows(&[&[0.0]])).unwrap();
        assert_eq!(g.layer(1).get(0, 1), 0.0);
        assert_eq!(g.layer(1).get(0, 0), 1.0);
    }

    #[test]
    fn last_layer_block_is_kronecker_of_features() {
        let arch = Architecture::new(vec![2, 3, 2]).unwrap();
        let params = Params::new(
            &arch,
            vec![
                Matrix::from_rows(&[&[1.0, -0.5, 0.3], &[0.2, 0.7, -1.1]]),
                Matrix::from_rows(&[&[0.4, -0.2], &[1.5, 0.1], &[-0.3, 0.9]]),
            ],
        )
        .unwrap();
        let x = Matrix::from_rows(&[&[1.0, 0.5], &[-0.3, 2.0], &[0.8, -1.0]]);
        let cache = forward(&arch, &params, &x).unwrap();
        let b = jacobian_block(&arch, &params, &cache, 2).unwrap();
        let gram = linalg::gram_rows(&b);
        let ff = linalg::gram_rows(cache.last_hidden());
        let n = 3;
        for j in 0..2 {
            for jj in 0..2 {
                for i in 0..n {
                    for ii in 0..n {
                        let want = if j == jj { ff.get(i, ii) } else { 0.0 };
                        assert!((gram.get(j * n + i, jj * n + ii) - want).abs() < 1e-14);
                    }
                }
            }
        }
    }
}
