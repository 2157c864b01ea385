//! Full-batch gradient descent with a per-iteration audit of the convergence proof.
//!
//! Audited invariants at every iterate `k` (against a certificate built at θ₀):
//! 1. `‖W_l^k‖₂ ≤ λ̄_l` for every layer,
//! 2. `σ_min(F_{L-1}^k) ≥ α₀/2`,
//! 3. `Φ(θ_k) ≤ (1 − ηα₀²/8)^k Φ(θ₀)`,
//!
//! plus the displacement bound `‖W_l^k − W_l⁰‖_F ≤ C_l`, the per-step
//! contraction `Φ(θ_{k+1}) ≤ (1 − ηα₀²/8) Φ(θ_k)` and, per step, the split of
//! `2Φ(θ_{k+1}) − 2Φ(θ_k)` through the transition matrix `G = F_{L-1}^k W_L^{k+1}`.
//!
//! Violations are recorded rather than fatal. Under a valid certificate any
//! violation is a falsification event.

use serde::Serialize;

use crate::certificate::{Certificate, NORM_TOL};
use crate::error::{Error, Result};
use crate::init::Dataset;
use crate::linalg::{self, Matrix};
use crate::network::{self, Architecture, FeatureCache, GradientSet, Params};

/// Relative slack on every audited comparison (roundoff only).
pub const AUDIT_SLACK: f64 = 1e-9;
/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 10_000;
/// Default stopping threshold as a fraction of `Φ(θ₀)`.
pub const DEFAULT_TARGET_REL: f64 = 1e-10;

/// `a ≤ b` up to [`AUDIT_SLACK`] relative to the larger magnitude.
pub fn le_slack(a: f64, b: f64) -> bool {
    a <= b + AUDIT_SLACK * a.abs().max(b.abs())
}

/// One audited inequality `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Bound {
    fn le(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: le_slack(lhs, rhs),
        }
    }
}

/// The one-step loss decomposition and the three proof bounds on its terms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescentAudit {
    pub q1: f64,
    pub q2: f64,
    /// `‖F_L^{k+1} − F_L^k‖_F²`.
    pub term_move: f64,
    /// `2 tr((F_L^{k+1} − G)(F_L^k − Y)ᵀ)`.
    pub term_cross: f64,
    /// `2 tr((G − F_L^k)(F_L^k − Y)ᵀ)`.
    pub term_descent: f64,
    /// `|2Φ_{k+1} − 2Φ_k − term_move − term_cross − term_descent|`.
    pub identity_residual: f64,
    pub identity_tolerance: f64,
    pub identity_holds: bool,
    /// `‖F_L^{k+1} − F_L^k‖_F ≤ η Q₁ ‖F_L^k − Y‖_F`.
    pub bound_move: Bound,
    /// `tr((F_L^{k+1} − G)(F_L^k − Y)ᵀ) ≤ η Q₂ ‖F_L^k − Y‖_F²`.
    pub bound_cross: Bound,
    /// `tr((G − F_L^k)(F_L^k − Y)ᵀ) ≤ −η α₀²/4 ‖F_L^k − Y‖_F²`; only checked while
    /// `σ_min(F_{L-1}^k) ≥ α₀/2`.
    pub bound_descent: Option<Bound>,
}

impl DescentAudit {
    pub fn bounds_hold(&self) -> bool {
        self.bound_move.holds
            && self.bound_cross.holds
            && self.bound_descent.is_none_or(|b| b.holds)
    }
}

/// One gradient step from `params`; every layer moves using gradients at the same iterate.
pub fn gd_step(
    arch: &Architecture,
    params: &Params,
    dataset: &Dataset,
    eta: f64,
) -> Result<(Params, GradientSet)> {
    let cache = network::forward(arch, params, &dataset.x)?;
    let grads = network::gradients(arch, params, &cache, &dataset.y)?;
    let next = apply_step(arch, params, &grads, eta)?;
    Ok((next, grads))
}

fn apply_step(arch: &Architecture, params: &Params, grads: &GradientSet, eta: f64) -> Result<Params> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients".into()));
    }
    let weights = params
        .weights()
        .iter()
        .zip(grads.grads())
        .map(|(w, g)| w.sub_scaled(eta, g).map_err(Error::from))
        .collect::<Result<Vec<_>>>()?;
    let next = Params::new(arch, weights)
        .map_err(|_| Error::NonFinite("parameters after step".into()))?;
    Ok(next)
}

/// Audits the step `θ_k → θ_{k+1}` against `cert` (η is `cert.eta`).
pub fn descent_audit(
    arch: &Architecture,
    params_k: &Params,
    params_k1: &Params,
    dataset: &Dataset,
    cert: &Certificate,
) -> Result<DescentAudit> {
    let cache_k = network::forward(arch, params_k, &dataset.x)?;
    let cache_k1 = network::forward(arch, params_k1, &dataset.x)?;
    let sigma_k = sigma_min_if_fat(&cache_k)?;
    audit_cached(&cache_k, &cache_k1, params_k, params_k1, &dataset.y, cert, sigma_k)
}

fn sigma_min_if_fat(cache: &FeatureCache) -> Result<Option<f64>> {
    let f = cache.last_hidden();
    if f.rows() <= f.cols() {
        Ok(Some(linalg::smallest_singular_value(f)?))
    } else {
        Ok(None)
    }
}

fn audit_cached(
    cache_k: &FeatureCache,
    cache_k1: &FeatureCache,
    params_k: &Params,
    params_k1: &Params,
    y: &Matrix,
    cert: &Certificate,
    sigma_k: Option<f64>,
) -> Result<DescentAudit> {
    let eta = cert.eta;
    let depth = params_k1.depth();
    let f_k = cache_k.output();
    let f_k1 = cache_k1.output();
    let r = f_k.sub(y)?;
    let r_k1 = f_k1.sub(y)?;
    // Both halves of the G-split in factored form, so small steps do not cancel.
    let d_feat = cache_k1.last_hidden().sub(cache_k.last_hidden())?;
    let upper = linalg::matmul(&d_feat, params_k1.layer(depth))?;
    let d_out = params_k1.layer(depth).sub(params_k.layer(depth))?;
    let lower = linalg::matmul(cache_k.last_hidden(), &d_out)?;

    let moved = f_k1.sub(f_k)?;
    let move_norm = linalg::frobenius_norm(&moved);
    let term_move = move_norm * move_norm;
    let cross = upper.frobenius_dot(&r)?;
    let desc = lower.frobenius_dot(&r)?;
    let term_cross = 2.0 * cross;
    let term_descent = 2.0 * desc;

    let rn = linalg::frobenius_norm(&r);
    let rn1 = linalg::frobenius_norm(&r_k1);
    let two_phi_k = rn * rn;
    let two_phi_k1 = rn1 * rn1;
    let identity_residual = (two_phi_k1 - two_phi_k - term_move - term_cross - term_descent).abs();
    // Roundoff scale of the summed quantities; Φ_{k+1} dominates on a diverging step.
    let identity_tolerance = AUDIT_SLACK
        * (1.0 + two_phi_k + two_phi_k1 + term_move + term_cross.abs() + term_descent.abs());
    let identity_holds = identity_residual <= identity_tolerance;

    let q1 = cert.q1();
    let q2 = cert.q2();
    let a = cert.alpha0;
    let bound_descent = match sigma_k {
        Some(s) if s >= 0.5 * a => Some(Bound::le(desc, -eta * a * a / 4.0 * rn * rn)),
        _ => None,
    };
    Ok(DescentAudit {
        q1,
        q2,
        term_move,
        term_cross,
        term_descent,
        identity_residual,
        identity_tolerance,
        identity_holds,
        bound_move: Bound::le(move_norm, eta * q1 * rn),
        bound_cross: Bound::le(cross, eta * q2 * rn * rn),
        bound_descent,
    })
}

/// Audit switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuditOptions {
    pub enabled: bool,
    /// Audit every `stride`-th iterate (the final iterate is always audited).
    pub stride: usize,
    /// Also run [`descent_audit`] on audited steps.
    pub descent: bool,
}

impl Default for AuditOptions {
    fn default() -> Self {
        Self {
            enabled: true,
            stride: 1,
            descent: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainOptions {
    pub max_iters: usize,
    /// Absolute loss threshold; the run stops once `Φ(θ_k) ≤ target_loss`.
    pub target_loss: f64,
    pub audit: AuditOptions,
}

impl TrainOptions {
    /// Defaults with the target expressed relative to the initial loss.
    pub fn relative(initial_loss: f64) -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            target_loss: DEFAULT_TARGET_REL * initial_loss,
            audit: AuditOptions::default(),
        }
    }
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterRecord {
    pub k: usize,
    pub loss: f64,
    /// `(1 − ηα₀²/8)^k Φ(θ₀)`.
    pub envelope: f64,
    pub audited: bool,
    /// `σ_min(F_{L-1}^k)`; absent when not audited or when `N > n_{L-1}`.
    pub sigma_min: Option<f64>,
    pub weight_norms: Vec<f64>,
    /// `‖W_l^k − W_l⁰‖_F`.
    pub displacement: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub inv_weight_norms: Option<bool>,
    pub inv_sigma_min: Option<bool>,
    pub inv_loss: bool,
    pub displacement_ok: Option<bool>,
    /// `Φ(θ_k) ≤ (1 − ηα₀²/8) Φ(θ_{k-1})`, for `k ≥ 1`.
    pub step_contraction: Option<bool>,
    /// Audit of the step `k → k+1`.
    pub descent: Option<DescentAudit>,
}

/// A recorded violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub k: usize,
    pub kind: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainTrace {
    pub records: Vec<IterRecord>,
    pub certified: bool,
    pub eta: f64,
    pub alpha0: f64,
    pub decay_factor: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Number of gradient steps taken.
    pub steps: usize,
    pub target_loss: f64,
    pub target_reached: bool,
    /// Every audited comparison that failed (meaningful as falsification only when certified).
    pub violations: Vec<Violation>,
    /// Exact-identity failures (descent decomposition), a bug regardless of certification.
    pub identity_failures: Vec<Violation>,
    /// Set when the run stopped on non-finite values.
    pub aborted: Option<String>,
    #[serde(skip)]
    pub final_params: Option<Params>,
}

impl TrainTrace {
    /// Violations that contradict a valid certificate.
    pub fn falsifications(&self) -> Vec<&Violation> {
        let mut out: Vec<&Violation> = self.identity_failures.iter().collect();
        if self.certified {
            out.extend(self.violations.iter());
        }
        out
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

/// Runs gradient descent from `params0` with step `cert.eta`, auditing against `cert`.
pub fn train(
    arch: &Architecture,
    params0: &Params,
    dataset: &Dataset,
    cert: &Certificate,
    opts: &TrainOptions,
) -> Result<TrainTrace> {
    let eta = cert.eta;
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    if cert.depth() != arch.depth() {
        return Err(Error::Shape("certificate depth differs from architecture".into()));
    }
    let depth = arch.depth();
    let stride = opts.audit.stride.max(1);
    let decay = cert.decay_factor;
    let mut params = params0.clone();
    let mut cache = network::forward(arch, &params, &dataset.x)?;
    let phi0 = network::loss(&cache, &dataset.y)?;

    let mut trace = TrainTrace {
        records: Vec::new(),
        certified: cert.certified,
        eta,
        alpha0: cert.alpha0,
        decay_factor: decay,
        initial_loss: phi0,
        final_loss: phi0,
        steps: 0,
        target_loss: opts.target_loss,
        target_reached: false,
        violations: Vec::new(),
        identity_failures: Vec::new(),
        aborted: None,
        final_params: None,
    };

    let mut prev_loss: Option<f64> = None;
    let mut k = 0usize;
    loop {
        let loss = network::loss(&cache, &dataset.y)?;
        let grads = network::gradients(arch, &params, &cache, &dataset.y)?;
        let stop = loss <= opts.target_loss || k >= opts.max_iters;
        let audited = opts.audit.enabled && (k.is_multiple_of(stride) || stop);
        let envelope = decay.powi(k as i32) * phi0;

        let mut rec = IterRecord {
            k,
            loss,
            envelope,
            audited,
            sigma_min: None,
            weight_norms: Vec::new(),
            displacement: Vec::new(),
            grad_norms: grads.frobenius_norms(),
            inv_weight_norms: None,
            inv_sigma_min: None,
            inv_loss: le_slack(loss, envelope),
            displacement_ok: None,
            step_contraction: prev_loss.map(|p| le_slack(loss, decay * p)),
            descent: None,
        };
        if !rec.inv_loss {
            trace.violations.push(Violation {
                k,
                kind: "loss_envelope".into(),
                lhs: loss,
                rhs: envelope,
            });
        }
        if let (Some(false), Some(p)) = (rec.step_contraction, prev_loss) {
            trace.violations.push(Violation {
                k,
                kind: "step_contraction".into(),
                lhs: loss,
                rhs: decay * p,
            });
        }

        let mut sigma_k = None;
        if audited {
            sigma_k = sigma_min_if_fat(&cache)?;
            rec.sigma_min = sigma_k;
            if let Some(s) = sigma_k {
                let ok = le_slack(0.5 * cert.alpha0, s);
                rec.inv_sigma_min = Some(ok);
                if !ok {
                    trace.violations.push(Violation {
                        k,
                        kind: "sigma_min_floor".into(),
                        lhs: s,
                        rhs: 0.5 * cert.alpha0,
                    });
                }
            }
            let mut norms_ok = true;
            let mut disp_ok = true;
            for l in 1..=depth {
                let w = params.layer(l);
                let norm = linalg::spectral_norm(w, NORM_TOL, linalg::DEFAULT_SPECTRAL_MAX_ITER)?;
                let disp = linalg::frobenius_norm(&w.sub(params0.layer(l))?);
                rec.weight_norms.push(norm);
                rec.displacement.push(disp);
                if !le_slack(norm, cert.lambda_bar[l - 1]) {
                    norms_ok = false;
                    trace.violations.push(Violation {
                        k,
                        kind: format!("weight_norm[{l}]"),
                        lhs: norm,
                        rhs: cert.lambda_bar[l - 1],
                    });
                }
                if !le_slack(disp, cert.c[l - 1]) {
                    disp_ok = false;
                    trace.violations.push(Violation {
                        k,
                        kind: format!("displacement[{l}]"),
                        lhs: disp,
                        rhs: cert.c[l - 1],
                    });
                }
            }
            rec.inv_weight_norms = Some(norms_ok);
            rec.displacement_ok = Some(disp_ok);
        }

        if stop {
            trace.target_reached = loss <= opts.target_loss;
            trace.final_loss = loss;
            trace.records.push(rec);
            break;
        }

        let next = match apply_step(arch, &params, &grads, eta) {
            Ok(p) => p,
            Err(e) => {
                trace.aborted = Some(format!("step {k}: {e}"));
                trace.final_loss = loss;
                trace.records.push(rec);
                break;
            }
        };
        let next_cache = network::forward(arch, &next, &dataset.x)?;
        if !next_cache.output().is_finite() {
            trace.aborted = Some(format!("step {k}: non-finite network output"));
            trace.final_loss = loss;
            trace.records.push(rec);
            break;
        }
        if audited && opts.audit.descent {
            let audit = audit_cached(&cache, &next_cache, &params, &next, &dataset.y, cert, sigma_k)?;
            if !audit.identity_tolerance.is_finite() {
                trace.aborted = Some(format!("step {k}: overflow in descent audit"));
                trace.final_loss = loss;
                trace.records.push(rec);
                break;
            }
            if !audit.identity_holds {
                trace.identity_failures.push(Violation {
                    k,
                    kind: "descent_identity".into(),
                    lhs: audit.identity_residual,
                    rhs: audit.identity_tolerance,
                });
            }
            let named = [
                ("bound_move", Some(audit.bound_move)),
                ("bound_cross", Some(audit.bound_cross)),
                ("bound_descent", audit.bound_descent),
            ];
            for (kind, b) in named {
                if let Some(b) = b {
                    if !b.holds {
                        trace.violations.push(Violation {
                            k,
                            kind: kind.into(),
                            lhs: b.lhs,
                            rhs: b.rhs,
                        });
                    }
                }
            }
            rec.descent = Some(audit);
        }
        trace.records.push(rec);
        prev_loss = Some(loss);
        params = next;
        cache = next_cache;
        k += 1;
        trace.steps = k;
    }
    trace.final_params = Some(params);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::CertificateInputs;

    #[test]
    fn scalar_quadratic_step() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let p = Params::new(&arch, vec![Matrix::from_rows(&[&[1.0]])]).unwrap();
        let data = Dataset::new(Matrix::from_rows(&[&[1.0]]), Matrix::from_rows(&[&[0.0]]), 0).unwrap();
        let (next, g) = gd_step(&arch, &p, &data, 0.5).unwrap();
        assert_eq!(g.layer(1), &Matrix::from_rows(&[&[1.0]]));
        assert_eq!(next.layer(1), &Matrix::from_rows(&[&[0.5]]));
        let c = network::forward(&arch, &next, &data.x).unwrap();
        assert_eq!(network::loss(&c, &data.y).unwrap(), 0.125);
    }

    #[test]
    fn zero_gradient_point_is_fixed() {
        let arch = Architecture::new(vec![2, 3, 1]).unwrap();
        let p = crate::init::init_lecun(&arch, 3);
        let x = Matrix::from_rows(&[&[1.0, 0.5], &[-0.2, 0.9]]);
        let y = network::forward(&arch, &p, &x).unwrap().output().clone();
        let data = Dataset::new(x, y, 0).unwrap();
        let (next, _) = gd_step(&arch, &p, &data, 0.1).unwrap();
        assert_eq!(next, p);
    }

    #[test]
    fn non_finite_gradients_abort() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let p = Params::new(&arch, vec![Matrix::from_rows(&[&[1e300]])]).unwrap();
        let data = Dataset::new(Matrix::from_rows(&[&[1e10]]), Matrix::from_rows(&[&[0.0]]), 0).unwrap();
        assert!(matches!(gd_step(&arch, &p, &data, 1.0), Err(Error::NonFinite(_))));
        assert!(gd_step(&arch, &p, &data, 0.0).is_err());
    }

    #[test]
    fn divergent_run_is_recorded_not_fatal() {
        let arch = Architecture::new(vec![1, 1]).unwrap();
        let p = Params::new(&arch, vec![Matrix::from_rows(&[&[1.0]])]).unwrap();
        let data = Dataset::new(Matrix::from_rows(&[&[1.0]]), Matrix::from_rows(&[&[0.0]]), 0).unwrap();
        let inputs = CertificateInputs::measure(&arch, &p, &data, &[1.0]).unwrap();
        let cert = inputs.evaluate(3.0);
        let opts = TrainOptions {
            max_iters: 20,
            target_loss: 0.0,
            audit: AuditOptions::default(),
        };
        let trace = train(&arch, &p, &data, &cert, &opts).unwrap();
        let losses = trace.losses();
        assert!(losses[1] > losses[0]);
        assert!(!trace.certified);
        assert!(trace.falsifications().is_empty());
        assert_eq!(trace.records.len(), 21);
    }

    #[test]
    fn slack_comparison() {
        assert!(le_slack(1.0, 1.0));
        assert!(le_slack(1.0 + 1e-12, 1.0));
        assert!(!le_slack(1.0 + 1e-6, 1.0));
        assert!(le_slack(-2.0, -2.0 + 1e-12));
        assert!(le_slack(0.0, 0.0));
    }
}
