use proptest::prelude::*;

use gdcert_cli::config::{CSchedule, EtaChoice, ExperimentConfig, InitChoice, SweepGrid};

fn positive() -> impl Strategy<Value = f64> {
    (1e-12f64..1e6).prop_filter("finite", |v| v.is_finite())
}

fn config() -> impl Strategy<Value = ExperimentConfig> {
    (
        any::<u64>(),
        prop::collection::vec(1usize..200, 3..6),
        1usize..100,
        0usize..3,
        prop::option::of(positive()),
        prop::option::of(positive()),
        (0.01f64..0.99, 0usize..100_000, 0.0f64..1.0, 1usize..50),
        prop::option::of("[a-z]{1,8}(/[a-z0-9_]{1,8}){0,2}"),
        prop::option::of((prop::collection::vec(1usize..64, 1..4), prop::collection::vec(1usize..512, 1..4), 1usize..20)),
        prop::bool::ANY,
    )
        .prop_flat_map(|(seed, widths, n, init, beta, eta, nums, out, sweep, explicit_c)| {
            let depth = widths.len() - 1;
            prop::collection::vec(positive(), depth).prop_map(move |cvals| {
                let mut c = ExperimentConfig::new(widths.clone(), n);
                c.seed = seed;
                c.init = match init {
                    0 => InitChoice::Beta(beta),
                    1 => InitChoice::Lecun,
                    _ => InitChoice::LecunDeep,
                };
                c.c_schedule = if explicit_c {
                    CSchedule::Explicit(cvals)
                } else if init == 2 {
                    CSchedule::LecunDeep
                } else {
                    CSchedule::Ones
                };
                c.eta = eta.map_or(EtaChoice::Auto, EtaChoice::Fixed);
                (c.eta_safety, c.max_iters, c.target_rel, c.audit_stride) = nums;
                c.out = out.clone().map(Into::into);
                c.sweep = sweep.clone().map(|(samples, widths, seeds)| SweepGrid { samples, widths, seeds });
                c
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn serialize_then_parse_is_identity(c in config()) {
        prop_assert!(c.validate().is_ok());
        let text = c.serialize();
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap(), c.clone());
        // Canonical form is a fixed point.
        prop_assert_eq!(ExperimentConfig::parse(&text).unwrap().serialize(), text);
    }
}

#[test]
fn shipped_configs_parse() {
    for name in ["beta_deep.conf", "width_trend.conf"] {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
        let text = std::fs::read_to_string(&path).unwrap();
        let c = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }
}

#[test]
fn errors_carry_line_numbers() {
    let err = |t: &str| ExperimentConfig::parse(t).unwrap_err().to_string();
    assert!(err("widths = 3, 4, 1\nn = 2\nbogus = 1\n").contains('3'));
    assert!(err("widths = 3, 4, 1\nn = 2\nn = 3\n").contains("duplicate"));
    assert!(err("n = 2\n").contains("widths"));
    assert!(err("widths = 3, 4, 1\nn = 2\ninit = lecun\nbeta = 2\n").contains("beta"));
    assert!(ExperimentConfig::parse("widths = 3, 4, 1\nn = 2\nc_schedule = two_layer\n").is_ok());
    assert!(ExperimentConfig::parse("widths = 3, 4, 4, 1\nn = 2\nc_schedule = two_layer\n").is_err());
    assert!(ExperimentConfig::parse("widths = 3, 4, 1\nn = 2\nsweep_n = 4\n").is_err());
}
