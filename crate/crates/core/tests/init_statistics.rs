use gdcert::init;
use gdcert::linalg::{self, Matrix};
use gdcert::network::Architecture;

fn sample_variance(m: &Matrix) -> f64 {
    let n = m.len() as f64;
    let mean = m.data().iter().sum::<f64>() / n;
    m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

fn spectral(m: &Matrix) -> f64 {
    linalg::spectral_norm(m, 1e-12, linalg::DEFAULT_SPECTRAL_MAX_ITER).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn lecun_entry_variance() {
    // 400 × 300 = 1.2e5 entries of variance 1/400.
    let arch = Architecture::new(vec![400, 300, 1]).unwrap();
    let p = init::init_lecun(&arch, 17);
    let v = sample_variance(p.layer(1));
    assert!((v * 400.0 - 1.0).abs() < 0.05, "variance {v}");
    // Output layer 300 × 1 has variance 1/300; loose check only (300 draws).
    let v2 = sample_variance(p.layer(2));
    assert!((v2 * 300.0 - 1.0).abs() < 0.3);
}

#[test]
fn deep_output_variance() {
    // W_L is 1024 × 128: 131072 entries of variance 1024^{-4/3}.
    let arch = Architecture::new(vec![4, 32, 1024, 128]).unwrap();
    let p = init::init_lecun_deep(&arch, 23).unwrap();
    let want = 1024f64.powf(-4.0 / 3.0);
    let v = sample_variance(p.layer(3));
    assert!((v / want - 1.0).abs() < 0.05, "variance {v} vs {want}");
    let h = sample_variance(p.layer(2));
    assert!((h * 32.0 - 1.0).abs() < 0.05);
}

#[test]
fn square_lecun_spectral_norm_bounded() {
    // ‖W‖₂ concentrates near 2 for square LeCun matrices.
    let arch = Architecture::new(vec![256, 256, 256]).unwrap();
    for seed in 0..100 {
        let p = init::init_lecun(&arch, seed);
        let s = spectral(p.layer(2));
        assert!(s <= 3.0, "seed {seed}: {s}");
        assert!(s > 1.5, "seed {seed}: {s}");
    }
}

#[test]
fn deep_output_norm_shrinks_with_width() {
    let medians: Vec<f64> = [64usize, 128, 256]
        .iter()
        .map(|&n| {
            let arch = Architecture::new(vec![4, n, n, 1]).unwrap();
            median((0..50).map(|s| spectral(init::init_lecun_deep(&arch, s).unwrap().layer(3))).collect())
        })
        .collect();
    assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    // ‖W_L‖₂ ≈ √n · n^{-2/3} = n^{-1/6}.
    for (m, n) in medians.iter().zip([64.0f64, 128.0, 256.0]) {
        assert!((m / n.powf(-1.0 / 6.0) - 1.0).abs() < 0.2, "{m} at n = {n}");
    }
}

#[test]
fn alpha0_positive_for_wide_last_layer() {
    let arch = Architecture::new(vec![10, 64, 64, 1]).unwrap();
    let positive = (0..100u64)
        .filter(|&s| {
            let d = init::generate_sphere_data(20, 10, 1, s).unwrap();
            let p = init::init_lecun(&arch, s);
            init::alpha0(&arch, &p, &d.x).unwrap() > 0.0
        })
        .count();
    assert!(positive >= 95, "{positive}/100");
}

#[test]
fn alpha0_is_homogeneous_in_beta() {
    let arch = Architecture::new(vec![6, 24, 20, 1]).unwrap();
    let d = init::generate_sphere_data(10, 6, 1, 4).unwrap();
    let base = init::alpha0(&arch, &init::init_beta_scaled(&arch, 4, 1.0).unwrap(), &d.x).unwrap();
    assert!(base > 0.0);
    for beta in [0.3, 1.7, 12.0, 250.0] {
        let a = init::alpha0(&arch, &init::init_beta_scaled(&arch, 4, beta).unwrap(), &d.x).unwrap();
        let want = beta.powi(2) * base;
        assert!((a - want).abs() <= 1e-10 * want, "beta {beta}: {a} vs {want}");
    }
}

#[test]
fn beta_base_skips_dead_draws() {
    // A single input row of zeros gives F_{L-1} = 0 for every draw.
    let arch = Architecture::new(vec![2, 4, 1]).unwrap();
    let d = init::Dataset::new(Matrix::zeros(1, 2), Matrix::column(&[1.0]), 0).unwrap();
    assert!(init::draw_beta_base(&arch, &d, 0, 3).is_err());
    let ok = init::generate_sphere_data(3, 2, 1, 1).unwrap();
    let arch = Architecture::new(vec![2, 32, 1]).unwrap();
    let b = init::draw_beta_base(&arch, &ok, 5, 16).unwrap();
    assert!(b.alpha0 > 0.0);
    assert!(b.params.layer(2).is_zero());
}
