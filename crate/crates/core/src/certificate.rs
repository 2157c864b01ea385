//! Convergence certificate evaluated at initialization.
//!
//! Given `α₀ = σ_min(F_{L-1}⁰)`, allowances `C_l > 0` and
//! `λ̄_l = ‖W_l⁰‖₂ + C_l`, gradient descent with step `η` is guaranteed to
//! satisfy `Φ(θ_k) ≤ (1 − ηα₀²/8)^k Φ(θ_0)` provided `n_{L-1} ≥ N` and
//!
//! ```text
//! (W)  α₀² ≥ 16‖X‖_F · max_l λ̄_{1→L}/(λ̄_l C_l) · √(2Φ₀)
//! (F)  α₀³ ≥ 32‖X‖_F² · λ̄_L · Σ_{l<L} λ̄_{1→L-1}²/λ̄_l² · √(2Φ₀)
//! (S)  α₀² ≥ 16‖X‖_F² · λ̄_L² · Σ_{l<L} λ̄_{1→L-1}²/λ̄_l²
//!  η < min(8/α₀², ‖X‖_F⁻² λ̄_{1→L}⁻² [Σ_{l<L} λ̄_l⁻²] [Σ_{l≤L} λ̄_l⁻²]⁻²)
//! ```
//!
//! Both sides of every inequality are kept so a failed certificate shows which
//! condition failed and by how much.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::init::Dataset;
use crate::linalg::{self, Matrix};
use crate::network::{self, Architecture, Params};
use crate::rng;

/// Relative tolerance used for every spectral norm entering a certificate.
pub const NORM_TOL: f64 = 1e-12;
/// Default safety factor applied to `eta_max` by [`suggest_eta`].
pub const DEFAULT_ETA_SAFETY: f64 = 0.9;
/// Relative resolution of [`beta_search`].
pub const BETA_REL_TOL: f64 = 0.01;
/// Default number of Monte-Carlo draws for [`estimate_lambda_star`].
pub const DEFAULT_LAMBDA_STAR_SAMPLES: usize = 2000;

/// One inequality `lhs ≥ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Condition {
    fn at_least(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs >= rhs,
        }
    }

    /// `lhs / rhs`; ≥ 1 exactly when the condition holds (for positive `rhs`).
    pub fn ratio(&self) -> f64 {
        self.lhs / self.rhs
    }
}

/// Measured quantities the certificate is a function of.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertificateInputs {
    pub alpha0: f64,
    /// `‖W_l⁰‖₂`, `l = 1..=L`.
    pub weight_norms: Vec<f64>,
    pub c: Vec<f64>,
    /// `‖X‖_F`.
    pub x_norm: f64,
    /// `Φ(θ_0)`.
    pub initial_loss: f64,
    pub samples: usize,
    pub last_hidden_width: usize,
}

impl CertificateInputs {
    /// Runs the forward pass and measures every input of the certificate.
    pub fn measure(
        arch: &Architecture,
        params0: &Params,
        dataset: &Dataset,
        c: &[f64],
    ) -> Result<Self> {
        check_c(arch, c)?;
        let cache = network::forward(arch, params0, &dataset.x)?;
        let initial_loss = network::loss(&cache, &dataset.y)?;
        let samples = dataset.samples();
        let alpha0 = if samples <= arch.last_hidden_width() {
            linalg::smallest_singular_value(cache.last_hidden())?
        } else {
            // σ_min of a tall matrix is outside the certificate's regime; recorded as 0.
            0.0
        };
        let weight_norms = params0
            .weights()
            .iter()
            .map(|w| {
                linalg::spectral_norm(w, NORM_TOL, linalg::DEFAULT_SPECTRAL_MAX_ITER)
                    .map_err(Error::from)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            alpha0,
            weight_norms,
            c: c.to_vec(),
            x_norm: linalg::frobenius_norm(&dataset.x),
            initial_loss,
            samples,
            last_hidden_width: arch.last_hidden_width(),
        })
    }

    pub fn depth(&self) -> usize {
        self.weight_norms.len()
    }

    pub fn lambda_bar(&self) -> Vec<f64> {
        self.weight_norms
            .iter()
            .zip(&self.c)
            .map(|(w, c)| w + c)
            .collect()
    }

    /// The learning-rate bound (both branches, then their minimum).
    pub fn eta_bounds(&self) -> (f64, f64) {
        let lb = self.lambda_bar();
        let depth = lb.len();
        let first = 8.0 / (self.alpha0 * self.alpha0);
        let inv2 = |l: usize| 1.0 / (lb[l - 1] * lb[l - 1]);
        // Empty sums start at +0.0 (`Sum` for f64 starts at -0.0).
        let hidden: f64 = (1..depth).map(inv2).fold(0.0, |a, b| a + b);
        let all: f64 = (1..=depth).map(inv2).sum();
        let p = prod(&lb, 1, depth);
        let second = hidden / (self.x_norm * self.x_norm * p * p * all * all);
        (first, second)
    }

    pub fn eta_max(&self) -> f64 {
        let (a, b) = self.eta_bounds();
        a.min(b)
    }

    /// Evaluates every condition at step size `eta`.
    pub fn evaluate(&self, eta: f64) -> Certificate {
        let lb = self.lambda_bar();
        let depth = lb.len();
        let a = self.alpha0;
        let xf = self.x_norm;
        let sqrt2phi = (2.0 * self.initial_loss).sqrt();
        let full = prod(&lb, 1, depth);
        let hidden = prod(&lb, 1, depth - 1);
        let lam_l = lb[depth - 1];

        let w_max = (1..=depth)
            .map(|l| full / (lb[l - 1] * self.c[l - 1]))
            .fold(f64::NEG_INFINITY, f64::max);
        let hidden_sum: f64 = (1..depth)
            .map(|l| hidden * hidden / (lb[l - 1] * lb[l - 1]))
            .fold(0.0, |a, b| a + b);

        let cond_w = Condition::at_least(a * a, 16.0 * xf * w_max * sqrt2phi);
        let cond_f = Condition::at_least(a * a * a, 32.0 * xf * xf * lam_l * hidden_sum * sqrt2phi);
        let cond_s = Condition::at_least(a * a, 16.0 * xf * xf * lam_l * lam_l * hidden_sum);

        let (eta_first, eta_second) = self.eta_bounds();
        let eta_max = eta_first.min(eta_second);
        let width_ok = self.last_hidden_width >= self.samples;
        let eta_ok = eta > 0.0 && eta < eta_max;

        let mut reasons = Vec::new();
        if !width_ok {
            reasons.push(format!(
                "last hidden width {} < N = {}",
                self.last_hidden_width, self.samples
            ));
        }
        if !(a > 0.0) {
            reasons.push("alpha0 = 0".to_string());
        }
        for (name, c) in [("W", cond_w), ("F", cond_f), ("S", cond_s)] {
            if !c.holds {
                reasons.push(format!(
                    "condition {name} fails: lhs {:e} < rhs {:e} (ratio {:.6})",
                    c.lhs,
                    c.rhs,
                    c.ratio()
                ));
            }
        }
        if !eta_ok {
            reasons.push(format!("eta {eta:e} not in (0, eta_max = {eta_max:e})"));
        }
        let certified = width_ok && a > 0.0 && cond_w.holds && cond_f.holds && cond_s.holds && eta_ok;

        Certificate {
            alpha0: a,
            c: self.c.clone(),
            weight_norms: self.weight_norms.clone(),
            lambda_bar: lb,
            x_norm: xf,
            initial_loss: self.initial_loss,
            samples: self.samples,
            last_hidden_width: self.last_hidden_width,
            cond_w,
            cond_f,
            cond_s,
            eta_bound_alpha: eta_first,
            eta_bound_lambda: eta_second,
            eta_max,
            eta,
            decay_factor: 1.0 - eta * a * a / 8.0,
            certified,
            reasons,
        }
    }

    fn conditions_hold(&self) -> bool {
        let c = self.evaluate(f64::MIN_POSITIVE);
        c.cond_w.holds && c.cond_f.holds && c.cond_s.holds
    }
}

/// `Π_{l=i}^{j} λ̄_l` (1-based, empty product is 1).
fn prod(lb: &[f64], i: usize, j: usize) -> f64 {
    if i > j {
        return 1.0;
    }
    lb[i - 1..j].iter().product()
}

fn check_c(arch: &Architecture, c: &[f64]) -> Result<()> {
    if c.len() != arch.depth() {
        return Err(Error::InvalidInput(format!(
            "need {} allowances C_l, got {}",
            arch.depth(),
            c.len()
        )));
    }
    if let Some(bad) = c.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("C_l must be positive, got {bad}")));
    }
    Ok(())
}

/// Everything the certificate computes, with both sides of each condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub alpha0: f64,
    pub c: Vec<f64>,
    pub weight_norms: Vec<f64>,
    pub lambda_bar: Vec<f64>,
    pub x_norm: f64,
    pub initial_loss: f64,
    pub samples: usize,
    pub last_hidden_width: usize,
    pub cond_w: Condition,
    pub cond_f: Condition,
    pub cond_s: Condition,
    /// `8/α₀²`.
    pub eta_bound_alpha: f64,
    /// The λ̄-dependent branch of the learning-rate bound.
    pub eta_bound_lambda: f64,
    pub eta_max: f64,
    pub eta: f64,
    /// `1 − ηα₀²/8`.
    pub decay_factor: f64,
    pub certified: bool,
    pub reasons: Vec<String>,
}

impl Certificate {
    pub fn depth(&self) -> usize {
        self.lambda_bar.len()
    }

    /// `λ̄_{i→j} = Π_{l=i}^{j} λ̄_l`.
    pub fn lambda_bar_prod(&self, i: usize, j: usize) -> f64 {
        prod(&self.lambda_bar, i, j)
    }

    /// `Q₁ = ‖X‖_F² λ̄_{1→L}² Σ_{l≤L} λ̄_l⁻²`.
    pub fn q1(&self) -> f64 {
        let depth = self.depth();
        let p = self.lambda_bar_prod(1, depth);
        let s: f64 = self.lambda_bar.iter().map(|l| 1.0 / (l * l)).sum();
        self.x_norm * self.x_norm * p * p * s
    }

    /// `Q₂ = ‖X‖_F² λ̄_{1→L-1}² λ̄_L² Σ_{l<L} λ̄_l⁻²`.
    pub fn q2(&self) -> f64 {
        let depth = self.depth();
        let p = self.lambda_bar_prod(1, depth - 1);
        let last = self.lambda_bar[depth - 1];
        let s: f64 = self.lambda_bar[..depth - 1]
            .iter()
            .map(|l| 1.0 / (l * l))
            .fold(0.0, |a, b| a + b);
        self.x_norm * self.x_norm * p * p * last * last * s
    }

    pub fn conditions_hold(&self) -> bool {
        self.cond_w.holds && self.cond_f.holds && self.cond_s.holds
    }

    /// Flat `key = value` report, one entry per line, stable order.
    pub fn report(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("certified", self.certified.to_string());
        kv("samples", self.samples.to_string());
        kv("last_hidden_width", self.last_hidden_width.to_string());
        kv("alpha0", format!("{:?}", self.alpha0));
        kv("x_norm", format!("{:?}", self.x_norm));
        kv("initial_loss", format!("{:?}", self.initial_loss));
        kv("c", list(&self.c));
        kv("weight_norms", list(&self.weight_norms));
        kv("lambda_bar", list(&self.lambda_bar));
        for (name, c) in [("cond_w", self.cond_w), ("cond_f", self.cond_f), ("cond_s", self.cond_s)] {
            kv(&format!("{name}.holds"), c.holds.to_string());
            kv(&format!("{name}.lhs"), format!("{:?}", c.lhs));
            kv(&format!("{name}.rhs"), format!("{:?}", c.rhs));
        }
        kv("eta_bound_alpha", format!("{:?}", self.eta_bound_alpha));
        kv("eta_bound_lambda", format!("{:?}", self.eta_bound_lambda));
        kv("eta_max", format!("{:?}", self.eta_max));
        kv("eta", format!("{:?}", self.eta));
        kv("decay_factor", format!("{:?}", self.decay_factor));
        kv("q1", format!("{:?}", self.q1()));
        kv("q2", format!("{:?}", self.q2()));
        kv("reasons", self.reasons.join("; "));
        out
    }
}

/// Measures and evaluates the certificate at step size `eta`.
pub fn compute_certificate(
    arch: &Architecture,
    params0: &Params,
    dataset: &Dataset,
    c: &[f64],
    eta: f64,
) -> Result<Certificate> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    Ok(CertificateInputs::measure(arch, params0, dataset, c)?.evaluate(eta))
}

/// `safety · eta_max`, strictly inside the learning-rate bound.
pub fn suggest_eta(cert: &Certificate, safety: f64) -> Result<f64> {
    suggest_eta_from(cert.eta_max, safety)
}

pub fn suggest_eta_from(eta_max: f64, safety: f64) -> Result<f64> {
    if !(safety > 0.0 && safety < 1.0) {
        return Err(Error::InvalidInput(format!(
            "safety must lie in (0, 1), got {safety}"
        )));
    }
    if !(eta_max > 0.0 && eta_max.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eta_max must be finite and positive, got {eta_max}"
        )));
    }
    Ok(safety * eta_max)
}

/// Smallest `β ≥ 1` (to 1% relative) for which the β-scaled parameters satisfy (W), (F), (S).
///
/// Uses exact homogeneity instead of re-running the network: `α₀(β) = β^{L-1} α₀`,
/// `‖βW_l⁰‖₂ = β‖W_l⁰‖₂` for hidden layers, `W_L = 0` and `Φ₀ = ½‖Y‖_F²`.
pub fn beta_search(
    arch: &Architecture,
    base_params: &Params,
    dataset: &Dataset,
    c: &[f64],
    beta_hi_cap: f64,
) -> Result<f64> {
    let base = CertificateInputs::measure(arch, base_params, dataset, c)?;
    if !(base.alpha0 > 0.0) {
        return Err(Error::InvalidInput(
            "beta search needs a base draw with alpha0 > 0".into(),
        ));
    }
    let depth = arch.depth();
    let y_norm = linalg::frobenius_norm(&dataset.y);
    let probe = |beta: f64| -> bool {
        let mut inputs = base.clone();
        inputs.alpha0 = base.alpha0 * beta.powi(depth as i32 - 1);
        for (l, n) in inputs.weight_norms.iter_mut().enumerate() {
            *n = if l + 1 < depth {
                beta * base.weight_norms[l]
            } else {
                0.0
            };
        }
        inputs.initial_loss = 0.5 * y_norm * y_norm;
        inputs.conditions_hold()
    };
    if probe(1.0) {
        return Ok(1.0);
    }
    let mut lo = 1.0;
    let mut hi = 2.0;
    while !probe(hi) {
        if hi > beta_hi_cap {
            return Err(Error::SearchFailed(format!(
                "conditions still fail at beta = {hi} (cap {beta_hi_cap})"
            )));
        }
        lo = hi;
        hi *= 2.0;
    }
    while hi / lo > 1.0 + BETA_REL_TOL {
        let mid = (lo * hi).sqrt();
        if probe(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Monte-Carlo estimate of `λ_* = λ_min(E_w[σ(Xw)σ(Xw)ᵀ])`, `w ~ N(0, I/n_0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaStarEstimate {
    pub value: f64,
    pub samples: usize,
    pub confidence_note: String,
}

pub fn estimate_lambda_star(
    dataset: &Dataset,
    n0: usize,
    samples: usize,
    seed: u64,
) -> Result<LambdaStarEstimate> {
    if samples == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    if dataset.x.cols() != n0 {
        return Err(Error::Shape(format!(
            "dataset has n_0 = {}, caller passed {n0}",
            dataset.x.cols()
        )));
    }
    let n = dataset.samples();
    let std = 1.0 / (n0 as f64).sqrt();
    let mut g = rng::stream(seed, rng::LAMBDA_STAR);
    let mut acc = Matrix::zeros(n, n);
    let mut w = Matrix::zeros(n0, 1);
    for _ in 0..samples {
        for v in w.data_mut() {
            *v = std * g.sample::<f64, _>(StandardNormal);
        }
        let s = linalg::matmul(&dataset.x, &w)?.map(|z| z.max(0.0));
        let sd = s.data();
        for i in 0..n {
            for j in 0..n {
                let v = acc.get(i, j) + sd[i] * sd[j];
                acc.set(i, j, v);
            }
        }
    }
    let mean = acc.scale(1.0 / samples as f64);
    let value = linalg::sym_eig_min(&mean)?.max(0.0);
    Ok(LambdaStarEstimate {
        value,
        samples,
        confidence_note: format!(
            "minimum eigenvalue of a {samples}-draw Monte-Carlo mean; sampling error shrinks like 1/sqrt({samples})"
        ),
    })
}

/// `C_l ≡ 1`.
pub fn c_ones(arch: &Architecture) -> Vec<f64> {
    vec![1.0; arch.depth()]
}

/// Allowances for the two-layer LeCun analysis: `C_1 = C_2 = 1`.
pub fn two_layer_config() -> Vec<f64> {
    vec![1.0, 1.0]
}

/// Allowances for the deep LeCun analysis: `C_l = 1` (`l ≤ L-2`),
/// `C_{L-1} = n_{L-1}^{1/2}`, `C_L = n_{L-1}^{-1/6}`.
pub fn lecun_deep_config(arch: &Architecture) -> Result<Vec<f64>> {
    let depth = arch.depth();
    if depth < 2 {
        return Err(Error::InvalidInput("deep schedule needs L >= 2".into()));
    }
    let n = arch.last_hidden_width() as f64;
    let mut c = vec![1.0; depth - 2];
    c.push(n.powf(0.5));
    c.push(n.powf(-1.0 / 6.0));
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init;

    fn toy_inputs() -> CertificateInputs {
        CertificateInputs {
            alpha0: 3.0,
            weight_norms: vec![0.5, 2.0],
            c: vec![1.0, 1.0],
            x_norm: 2.0,
            initial_loss: 0.5,
            samples: 4,
            last_hidden_width: 8,
        }
    }

    #[test]
    fn lambda_bar_products() {
        let cert = toy_inputs().evaluate(0.01);
        assert_eq!(cert.lambda_bar, vec![1.5, 3.0]);
        assert_eq!(cert.lambda_bar_prod(1, 2), 4.5);
        assert_eq!(cert.lambda_bar_prod(2, 2), 3.0);
        assert_eq!(cert.lambda_bar_prod(2, 1), 1.0);
    }

    #[test]
    fn zero_alpha_never_certifies() {
        let mut inputs = toy_inputs();
        inputs.alpha0 = 0.0;
        let cert = inputs.evaluate(1e-6);
        assert!(!cert.cond_w.holds && !cert.cond_f.holds && !cert.cond_s.holds);
        assert!(!cert.certified);
    }

    #[test]
    fn unit_lambdas_reduce_condition_s() {
        let inputs = CertificateInputs {
            alpha0: 5.0,
            weight_norms: vec![0.0, 0.0],
            c: vec![1.0, 1.0],
            x_norm: 1.25,
            initial_loss: 0.0,
            samples: 2,
            last_hidden_width: 3,
        };
        let cert = inputs.evaluate(0.01);
        assert_eq!(cert.cond_s.lhs, 25.0);
        assert_eq!(cert.cond_s.rhs, 16.0 * 1.25 * 1.25);
        assert!(cert.cond_s.holds);
    }

    #[test]
    fn narrow_last_layer_is_rejected_with_reason() {
        let mut inputs = toy_inputs();
        inputs.last_hidden_width = 3;
        let cert = inputs.evaluate(1e-9);
        assert!(!cert.certified);
        assert!(cert.reasons[0].contains("last hidden width"));
    }

    #[test]
    fn suggest_eta_cases() {
        assert_eq!(suggest_eta_from(1.0, 0.9).unwrap(), 0.9);
        assert!(suggest_eta_from(1.0, 1.0).is_err());
        assert!(suggest_eta_from(0.0, 0.5).is_err());
        assert!(suggest_eta_from(f64::INFINITY, 0.5).is_err());
        let mut inputs = toy_inputs();
        inputs.alpha0 = 2.0;
        let cert = inputs.evaluate(4.0 / 4.0);
        assert_eq!(cert.decay_factor, 0.5);
    }

    #[test]
    fn eta_bound_is_q2_over_q1_squared() {
        let cert = toy_inputs().evaluate(1e-3);
        let ratio = cert.q2() / (cert.q1() * cert.q1());
        assert!((cert.eta_bound_lambda - ratio).abs() <= 1e-14 * ratio);
    }

    #[test]
    fn deep_schedule() {
        let arch = Architecture::new(vec![5, 7, 64, 1]).unwrap();
        assert_eq!(lecun_deep_config(&arch).unwrap(), vec![1.0, 8.0, 64f64.powf(-1.0 / 6.0)]);
        let two = Architecture::new(vec![5, 64, 1]).unwrap();
        assert_eq!(lecun_deep_config(&two).unwrap(), vec![8.0, 64f64.powf(-1.0 / 6.0)]);
        assert!(lecun_deep_config(&Architecture::new(vec![5, 1]).unwrap()).is_err());
        assert_eq!(two_layer_config(), vec![1.0, 1.0]);
    }

    #[test]
    fn invalid_inputs() {
        let arch = Architecture::new(vec![3, 4, 1]).unwrap();
        let data = init::generate_sphere_data(3, 3, 1, 0).unwrap();
        let p = init::init_lecun(&arch, 0);
        assert!(compute_certificate(&arch, &p, &data, &[1.0], 0.1).is_err());
        assert!(compute_certificate(&arch, &p, &data, &[1.0, 0.0], 0.1).is_err());
        assert!(compute_certificate(&arch, &p, &data, &[1.0, 1.0], 0.0).is_err());
        assert!(estimate_lambda_star(&data, 3, 0, 0).is_err());
        assert!(estimate_lambda_star(&data, 4, 10, 0).is_err());
    }

    #[test]
    fn beta_search_returns_one_when_already_satisfied() {
        // Orthogonal inputs on a wide first layer with tiny labels: conditions hold at β = 1.
        let arch = Architecture::new(vec![2, 2, 1]).unwrap();
        let x = Matrix::from_rows(&[&[10.0, 0.0], &[0.0, 10.0]]);
        let y = Matrix::column(&[1e-3, -1e-3]);
        let data = Dataset::new(x, y, 0).unwrap();
        let base = Params::new(&arch, vec![Matrix::identity(2).scale(10.0), Matrix::zeros(2, 1)]).unwrap();
        let beta = beta_search(&arch, &base, &data, &[1.0, 1.0], 1e6).unwrap();
        assert_eq!(beta, 1.0);
    }
}
