use nalgebra::DMatrix;

use gdcert::certificate::{self, CertificateInputs};
use gdcert::init::{self, Dataset};
use gdcert::linalg::Matrix;
use gdcert::network::{self, Architecture, Params};
use gdcert::trainer::{self, AuditOptions, TrainOptions};

fn dm(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.data())
}

fn relu_mask(h: &DMatrix<f64>) -> DMatrix<f64> {
    h.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

/// Plain three-layer gradient descent written directly against nalgebra.
fn reference_run(x: &DMatrix<f64>, y: &DMatrix<f64>, mut w: [DMatrix<f64>; 3], eta: f64, steps: usize) -> (Vec<f64>, [DMatrix<f64>; 3]) {
    let mut losses = Vec::new();
    for k in 0..=steps {
        let h1 = x * &w[0];
        let f1 = h1.map(|v| v.max(0.0));
        let h2 = &f1 * &w[1];
        let f2 = h2.map(|v| v.max(0.0));
        let r = &f2 * &w[2] - y;
        losses.push(0.5 * r.norm_squared());
        if k == steps {
            break;
        }
        let g3 = f2.transpose() * &r;
        let d2 = (&r * w[2].transpose()).component_mul(&relu_mask(&h2));
        let g2 = f1.transpose() * &d2;
        let d1 = (&d2 * w[1].transpose()).component_mul(&relu_mask(&h1));
        let g1 = x.transpose() * &d1;
        w[0] -= eta * g1;
        w[1] -= eta * g2;
        w[2] -= eta * g3;
    }
    (losses, w)
}

fn fixed_eta_cert(arch: &Architecture, p: &Params, d: &Dataset, eta: f64) -> certificate::Certificate {
    CertificateInputs::measure(arch, p, d, &certificate::c_ones(arch)).unwrap().evaluate(eta)
}

#[test]
fn matches_reference_loop() {
    let arch = Architecture::new(vec![3, 6, 5, 2]).unwrap();
    let d = init::generate_sphere_data(4, 3, 2, 31).unwrap();
    let p = init::init_lecun(&arch, 31);
    let eta = 0.05;
    let cert = fixed_eta_cert(&arch, &p, &d, eta);
    let opts = TrainOptions {
        max_iters: 10,
        target_loss: 0.0,
        audit: AuditOptions::default(),
    };
    let trace = trainer::train(&arch, &p, &d, &cert, &opts).unwrap();
    let w0 = [dm(p.layer(1)), dm(p.layer(2)), dm(p.layer(3))];
    let (losses, w) = reference_run(&dm(&d.x), &dm(&d.y), w0, eta, 10);
    assert_eq!(trace.steps, 10);
    assert_eq!(trace.losses().len(), 11);
    for (a, b) in trace.losses().iter().zip(&losses) {
        assert!((a - b).abs() <= 1e-10 * b.max(1e-300), "{a} vs {b}");
    }
    let fin = trace.final_params.as_ref().unwrap();
    for (l, wl) in w.iter().enumerate() {
        let diff = (dm(fin.layer(l + 1)) - wl).norm();
        assert!(diff <= 1e-10 * wl.norm());
    }
    assert!(trace.identity_failures.is_empty());
}

#[test]
fn step_direction_is_the_gradient() {
    let arch = Architecture::new(vec![4, 7, 3]).unwrap();
    let d = init::generate_sphere_data(5, 4, 3, 2).unwrap();
    let p = init::init_lecun(&arch, 2);
    let eta = 1e-3;
    let (next, _) = trainer::gd_step(&arch, &p, &d, eta).unwrap();
    let loss = |q: &Params| network::loss(&network::forward(&arch, q, &d.x).unwrap(), &d.y).unwrap();
    let h = 1e-6;
    for l in 1..=2 {
        let w = p.layer(l);
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                let step = (w.get(i, j) - next.layer(l).get(i, j)) / eta;
                let mut plus = p.clone();
                plus.layer_mut(l).set(i, j, w.get(i, j) + h);
                let mut minus = p.clone();
                minus.layer_mut(l).set(i, j, w.get(i, j) - h);
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                assert!((step - fd).abs() <= 1e-4 * step.abs().max(fd.abs()).max(1e-3), "({l},{i},{j}) {step} vs {fd}");
            }
        }
    }
}

#[test]
fn global_minimum_is_a_fixed_point() {
    let arch = Architecture::new(vec![3, 8, 2]).unwrap();
    let d0 = init::generate_sphere_data(4, 3, 2, 5).unwrap();
    let p = init::init_lecun(&arch, 5);
    // Labels equal to the network output: zero residual.
    let y = network::forward(&arch, &p, &d0.x).unwrap().output().clone();
    let d = Dataset::new(d0.x, y, 5).unwrap();
    let cert = fixed_eta_cert(&arch, &p, &d, 1e-3);
    let (next, grads) = trainer::gd_step(&arch, &p, &d, cert.eta).unwrap();
    assert_eq!(grads.squared_norm(), 0.0);
    assert_eq!(next, p);
    let audit = trainer::descent_audit(&arch, &p, &next, &d, &cert).unwrap();
    assert_eq!(audit.term_move, 0.0);
    assert_eq!(audit.term_cross, 0.0);
    assert_eq!(audit.term_descent, 0.0);
    assert!(audit.identity_holds && audit.bounds_hold());
}

#[test]
fn certified_run_respects_every_bound() {
    let arch = Architecture::new(vec![10, 12, 32, 1]).unwrap();
    let d = init::generate_sphere_data(20, 10, 1, 1).unwrap();
    let base = init::draw_beta_base(&arch, &d, 1, 16).unwrap();
    let c = certificate::c_ones(&arch);
    let beta = certificate::beta_search(&arch, &base.params, &d, &c, 1e12).unwrap();
    let p = init::scale_hidden(&arch, &base.params, beta).unwrap();
    let inputs = CertificateInputs::measure(&arch, &p, &d, &c).unwrap();
    let cert = inputs.evaluate(certificate::suggest_eta_from(inputs.eta_max(), 0.9).unwrap());
    assert!(cert.certified, "{:?}", cert.reasons);
    let opts = TrainOptions {
        max_iters: 40,
        target_loss: 0.0,
        audit: AuditOptions::default(),
    };
    let trace = trainer::train(&arch, &p, &d, &cert, &opts).unwrap();
    assert!(trace.violations.is_empty(), "{:?}", trace.violations);
    assert!(trace.falsifications().is_empty());
    for r in &trace.records {
        assert!(r.inv_loss && r.loss <= r.envelope * (1.0 + 1e-12));
        assert_eq!(r.inv_weight_norms, Some(true));
        assert_eq!(r.inv_sigma_min, Some(true));
        if r.k > 0 {
            assert_eq!(r.step_contraction, Some(true));
        }
        if let Some(a) = &r.descent {
            assert!(a.identity_holds && a.bounds_hold());
        }
    }
    let losses = trace.losses();
    assert!(losses.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn uncertified_violations_are_not_falsifications() {
    // A step far above the bound on a narrow net.
    let arch = Architecture::new(vec![3, 4, 1]).unwrap();
    let d = init::generate_sphere_data(6, 3, 1, 0).unwrap();
    let p = init::init_lecun(&arch, 0);
    let cert = fixed_eta_cert(&arch, &p, &d, 0.5);
    assert!(!cert.certified);
    let opts = TrainOptions {
        max_iters: 20,
        target_loss: 0.0,
        audit: AuditOptions::default(),
    };
    let trace = trainer::train(&arch, &p, &d, &cert, &opts).unwrap();
    assert!(!trace.violations.is_empty());
    assert!(trace.falsifications().is_empty(), "{:?}", trace.identity_failures);
    assert!(trace.aborted.is_some());
}

#[test]
fn step_bounds_hold_while_weights_stay_in_their_balls() {
    // Uncertified runs with moving hidden layers: the move and cross bounds only
    // need ‖W_l^k‖₂ ≤ λ̄_l, so they must hold on every step where that invariant does.
    let mut nonzero_cross = 0;
    let mut checked = 0;
    for seed in 0..20 {
        let arch = Architecture::new(vec![4, 24, 24, 2]).unwrap();
        let d = init::generate_sphere_data(6, 4, 2, seed).unwrap();
        let p = init::init_lecun(&arch, seed);
        let cert = fixed_eta_cert(&arch, &p, &d, 2e-3);
        let opts = TrainOptions {
            max_iters: 30,
            target_loss: 0.0,
            audit: AuditOptions::default(),
        };
        let trace = trainer::train(&arch, &p, &d, &cert, &opts).unwrap();
        for w in trace.records.windows(2) {
            let (now, next) = (&w[0], &w[1]);
            let Some(a) = &now.descent else { continue };
            if now.inv_weight_norms == Some(true) && next.inv_weight_norms == Some(true) {
                assert!(a.bound_move.holds && a.bound_cross.holds, "seed {seed} k {}: {a:?}", now.k);
                checked += 1;
                if a.term_cross != 0.0 {
                    nonzero_cross += 1;
                }
            }
        }
    }
    assert!(checked > 100 && nonzero_cross > 100, "{checked} {nonzero_cross}");
}
