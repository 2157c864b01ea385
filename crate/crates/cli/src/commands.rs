//! The four workflows behind the `gdcert` subcommands.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use gdcert::analysis::{self, LemmaCheck, TrialDims};
use gdcert::certificate::{self, Certificate, CertificateInputs};
use gdcert::error::{Error, Result};
use gdcert::init::{self, Dataset};
use gdcert::io;
use gdcert::network::{Architecture, Params};
use gdcert::rng;
use gdcert::trainer::{self, AuditOptions, TrainOptions, TrainTrace};

use crate::config::{EtaChoice, ExperimentConfig, InitChoice};
use crate::trace;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "GDCERT_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "gdcert-out";
/// Upper limit on β during the search.
pub const BETA_CAP: f64 = 1e12;
/// Re-draws allowed when a β base draw has `α₀ = 0`.
pub const BASE_ATTEMPTS: usize = 16;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Usage = 1,
    Uncertified = 2,
    Falsified = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub status: Status,
    /// Human-readable report printed to stdout.
    pub report: String,
}

/// `--out`, then the environment override, then the config, then the default.
pub fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.and_then(|c| c.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Data, initialization and certificate inputs for one configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub arch: Architecture,
    pub dataset: Dataset,
    pub params0: Params,
    pub c: Vec<f64>,
    pub inputs: CertificateInputs,
    pub beta: Option<f64>,
    /// Seed of the weight draw (differs from the config seed after a β re-draw).
    pub init_seed: u64,
}

impl Prepared {
    /// The configured step size, or `None` when `eta = auto` and no admissible step exists.
    pub fn eta(&self, cfg: &ExperimentConfig) -> Result<Option<f64>> {
        match cfg.eta {
            EtaChoice::Fixed(e) => Ok(Some(e)),
            EtaChoice::Auto => {
                let m = self.inputs.eta_max();
                if m > 0.0 && m.is_finite() {
                    Ok(Some(certificate::suggest_eta_from(m, cfg.eta_safety)?))
                } else {
                    Ok(None)
                }
            }
        }
    }

    /// Certificate at the configured step size (`η = 0` when none is admissible).
    pub fn certificate(&self, cfg: &ExperimentConfig) -> Result<Certificate> {
        Ok(self.inputs.evaluate(self.eta(cfg)?.unwrap_or(0.0)))
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let arch = cfg.architecture()?;
    let dataset = init::generate_sphere_data(cfg.n, cfg.n0(), cfg.nl(), cfg.seed)?;
    let c = cfg.c_schedule.resolve(&arch)?;
    let mut init_seed = cfg.seed;
    let mut beta = None;
    let params0 = match cfg.init {
        InitChoice::Lecun => init::init_lecun(&arch, cfg.seed),
        InitChoice::LecunDeep => init::init_lecun_deep(&arch, cfg.seed)?,
        InitChoice::Beta(Some(b)) => {
            beta = Some(b);
            init::init_beta_scaled(&arch, cfg.seed, b)?
        }
        InitChoice::Beta(None) => {
            if arch.depth() < 2 || cfg.n > arch.last_hidden_width() {
                // No base draw can have α₀ > 0; fall back to β = 1 and let the certificate say why.
                beta = Some(1.0);
                init::init_beta_scaled(&arch, cfg.seed, 1.0)?
            } else {
                match init::draw_beta_base(&arch, &dataset, cfg.seed, BASE_ATTEMPTS) {
                    Ok(base) => {
                        init_seed = base.seed;
                        let b = certificate::beta_search(&arch, &base.params, &dataset, &c, BETA_CAP)?;
                        beta = Some(b);
                        init::scale_hidden(&arch, &base.params, b)?
                    }
                    Err(Error::SearchFailed(_)) => {
                        beta = Some(1.0);
                        init::init_beta_scaled(&arch, cfg.seed, 1.0)?
                    }
                    Err(e) => return Err(e),
                }
            }
        }
    };
    let inputs = CertificateInputs::measure(&arch, &params0, &dataset, &c)?;
    Ok(Prepared {
        arch,
        dataset,
        params0,
        c,
        inputs,
        beta,
        init_seed,
    })
}

fn certificate_text(cfg: &ExperimentConfig, prep: &Prepared, cert: &Certificate) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed = {}", cfg.seed);
    let _ = writeln!(s, "init_seed = {}", prep.init_seed);
    if let Some(b) = prep.beta {
        let _ = writeln!(s, "beta = {b:?}");
    }
    s.push_str(&cert.report());
    s
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io(format!("cannot create {}: {e}", out.display())))
}

pub fn cmd_certify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let prep = prepare(cfg)?;
    let cert = prep.certificate(cfg)?;
    let report = certificate_text(cfg, &prep, &cert);
    create_dir(out)?;
    fs::write(out.join("certificate.txt"), &report)?;
    let status = if cert.certified {
        Status::Success
    } else {
        Status::Uncertified
    };
    Ok(Outcome { status, report })
}

/// Result of one `train` invocation.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub prepared: Prepared,
    pub certificate: Certificate,
    /// `None` when no admissible step size exists.
    pub trace: Option<TrainTrace>,
}

/// Prepares and trains without writing anything.
pub fn run_train(cfg: &ExperimentConfig) -> Result<TrainRun> {
    let prep = prepare(cfg)?;
    let cert = prep.certificate(cfg)?;
    if !(cert.eta > 0.0) {
        return Ok(TrainRun {
            prepared: prep,
            certificate: cert,
            trace: None,
        });
    }
    let opts = TrainOptions {
        max_iters: cfg.max_iters,
        target_loss: cfg.target_rel * cert.initial_loss,
        audit: AuditOptions {
            enabled: true,
            stride: cfg.audit_stride,
            descent: true,
        },
    };
    let trace = trainer::train(&prep.arch, &prep.params0, &prep.dataset, &cert, &opts)?;
    Ok(TrainRun {
        prepared: prep,
        certificate: cert,
        trace: Some(trace),
    })
}

pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let run = run_train(cfg)?;
    create_dir(out)?;
    let cert_text = certificate_text(cfg, &run.prepared, &run.certificate);
    fs::write(out.join("certificate.txt"), &cert_text)?;
    fs::write(out.join("config.txt"), cfg.serialize())?;
    io::write_dataset(&out.join("dataset.txt"), &run.prepared.dataset)?;
    io::write_params(&out.join("params_init.txt"), &run.prepared.params0)?;

    let Some(tr) = &run.trace else {
        return Ok(Outcome {
            status: Status::Uncertified,
            report: format!(
                "{cert_text}status = uncertified\nnote = no admissible step size (eta_max = {:?}); set eta explicitly to train\n",
                run.certificate.eta_max
            ),
        });
    };
    let mut w = BufWriter::new(File::create(out.join("trace.jsonl"))?);
    trace::write_trace(&mut w, tr, &run.certificate)?;
    std::io::Write::flush(&mut w)?;
    if let Some(p) = &tr.final_params {
        io::write_params(&out.join("params_final.txt"), p)?;
    }

    let falsified = tr.falsifications();
    let status = if !falsified.is_empty() {
        Status::Falsified
    } else if !tr.certified {
        Status::Uncertified
    } else {
        Status::Success
    };
    let mut report = String::new();
    let _ = writeln!(report, "status = {}", trace::run_status(tr));
    let _ = writeln!(report, "certified = {}", tr.certified);
    let _ = writeln!(report, "eta = {:?}", tr.eta);
    let _ = writeln!(report, "steps = {}", tr.steps);
    let _ = writeln!(report, "initial_loss = {:?}", tr.initial_loss);
    let _ = writeln!(report, "final_loss = {:?}", tr.final_loss);
    let _ = writeln!(report, "target_loss = {:?}", tr.target_loss);
    let _ = writeln!(report, "target_reached = {}", tr.target_reached);
    let _ = writeln!(report, "violations = {}", tr.violations.len());
    for v in falsified.iter().take(10) {
        let _ = writeln!(report, "falsification = k={} {} lhs={:?} rhs={:?}", v.k, v.kind, v.lhs, v.rhs);
    }
    if let Some(a) = &tr.aborted {
        let _ = writeln!(report, "aborted = {a}");
    }
    if tr.certified && falsified.is_empty() && !tr.target_reached {
        let steps_needed = (tr.target_loss / tr.initial_loss).ln() / tr.decay_factor.ln();
        let _ = writeln!(
            report,
            "note = target not reached within max_iters; the guaranteed envelope needs about {steps_needed:.3e} steps"
        );
    }
    Ok(Outcome { status, report })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Ntk,
    Lemma1,
    Descent,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Ntk => "ntk",
            Suite::Lemma1 => "lemma1",
            Suite::Descent => "descent",
        }
    }
}

/// One row of a verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub check: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub samples: usize,
    pub widths: Vec<usize>,
    pub layer: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl VerifyRow {
    fn from_lemma(check: &'static str, c: &LemmaCheck) -> Self {
        Self {
            check,
            trial: c.trial,
            seed: c.seed,
            samples: c.samples,
            widths: c.widths.clone(),
            layer: c.layer,
            lhs: c.lhs,
            rhs: c.rhs,
            holds: c.holds,
        }
    }
}

pub fn run_verify(suite: Suite, trials: usize, seed: u64) -> Result<Vec<VerifyRow>> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be at least 1".into()));
    }
    let rows = match suite {
        Suite::Lemma1 => {
            let dims = TrialDims::default();
            let mut rows: Vec<VerifyRow> = analysis::check_lemma1_gradient(trials, &dims, seed)?
                .iter()
                .map(|c| VerifyRow::from_lemma("gradient", c))
                .collect();
            rows.extend(
                analysis::check_lemma1_lipschitz(trials, &dims, seed)?
                    .iter()
                    .map(|c| VerifyRow::from_lemma("lipschitz", c)),
            );
            rows
        }
        Suite::Descent => analysis::check_descent_identity(trials, &TrialDims::ntk(), seed)?
            .iter()
            .map(|c| VerifyRow::from_lemma("descent_identity", c))
            .collect(),
        Suite::Ntk => {
            let mut rows = Vec::new();
            for (t, (s, r)) in analysis::check_ntk_suite(trials, &TrialDims::ntk(), seed)?
                .into_iter()
                .enumerate()
            {
                let base = |check, lhs, rhs, holds| VerifyRow {
                    check,
                    trial: t,
                    seed: s,
                    samples: r.samples,
                    widths: r.widths.clone(),
                    layer: 0,
                    lhs,
                    rhs,
                    holds,
                };
                // Each inequality as `lhs ≤ rhs`.
                rows.push(base("gram_bound", r.gram_min_eig, r.k_min_eig, r.gram_bound_ok));
                rows.push(base("pl", r.pl_rhs, r.pl_lhs, r.pl_ok));
                rows.push(base("psd", 0.0, r.k_min_eig, r.psd_ok));
            }
            rows
        }
    };
    Ok(rows)
}

pub fn cmd_verify(suite: Suite, trials: usize, seed: u64, out: &Path) -> Result<Outcome> {
    let rows = run_verify(suite, trials, seed)?;
    create_dir(out)?;
    let mut tsv = String::from("check\ttrial\tseed\tsamples\twidths\tlayer\tlhs\trhs\tholds\n");
    for r in &rows {
        let widths = r.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",");
        let _ = writeln!(
            tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{:?}\t{}",
            r.check, r.trial, r.seed, r.samples, widths, r.layer, r.lhs, r.rhs, r.holds
        );
    }
    fs::write(out.join(format!("verify_{}.tsv", suite.name())), tsv)?;
    let bad: Vec<&VerifyRow> = rows.iter().filter(|r| !r.holds).collect();
    let mut report = String::new();
    let _ = writeln!(report, "suite = {}", suite.name());
    let _ = writeln!(report, "trials = {trials}");
    let _ = writeln!(report, "checks = {}", rows.len());
    let _ = writeln!(report, "violations = {}", bad.len());
    for r in bad.iter().take(10) {
        let _ = writeln!(
            report,
            "violation = {} trial={} seed={} N={} widths={:?} layer={} lhs={:?} rhs={:?}",
            r.check, r.trial, r.seed, r.samples, r.widths, r.layer, r.lhs, r.rhs
        );
    }
    let status = if bad.is_empty() {
        Status::Success
    } else {
        Status::Falsified
    };
    Ok(Outcome { status, report })
}

/// The configuration of one sweep draw: `N`, last hidden width and a seed hashed
/// from the master seed and the cell coordinates.
pub fn cell_config(cfg: &ExperimentConfig, n: usize, width: usize, draw: usize) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.sweep = None;
    c.n = n;
    let l = c.widths.len() - 2;
    c.widths[l] = width;
    c.seed = rng::derive_seed(cfg.seed, &[n as u64, width as u64, draw as u64]);
    c
}

/// One draw of a sweep cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub n: usize,
    pub width: usize,
    pub draw: usize,
    pub seed: u64,
    pub alpha0: f64,
    pub ratio_w: f64,
    pub ratio_f: f64,
    pub ratio_s: f64,
    pub conditions: bool,
    pub certified: bool,
    /// Trained only when certified.
    pub trained: bool,
    pub converged: bool,
    pub falsified: bool,
    pub final_rel_loss: f64,
    pub steps: usize,
}

impl SweepRun {
    /// Smallest `lhs/rhs` of the three conditions.
    pub fn min_ratio(&self) -> f64 {
        self.ratio_w.min(self.ratio_f).min(self.ratio_s)
    }
}

/// Aggregate of one `(N, n_{L-1})` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub n: usize,
    pub width: usize,
    pub draws: usize,
    pub certified: usize,
    pub converged: usize,
    pub falsified: usize,
    pub median_min_ratio: f64,
}

impl SweepCell {
    pub fn certified_frac(&self) -> f64 {
        self.certified as f64 / self.draws as f64
    }

    pub fn converged_frac(&self) -> f64 {
        self.converged as f64 / self.draws as f64
    }
}

pub fn sweep_one(cfg: &ExperimentConfig, n: usize, width: usize, draw: usize) -> Result<SweepRun> {
    let c = cell_config(cfg, n, width, draw);
    let prep = prepare(&c)?;
    let cert = prep.certificate(&c)?;
    let mut run = SweepRun {
        n,
        width,
        draw,
        seed: c.seed,
        alpha0: cert.alpha0,
        ratio_w: cert.cond_w.ratio(),
        ratio_f: cert.cond_f.ratio(),
        ratio_s: cert.cond_s.ratio(),
        conditions: cert.conditions_hold(),
        certified: cert.certified,
        trained: false,
        converged: false,
        falsified: false,
        final_rel_loss: 1.0,
        steps: 0,
    };
    if cert.certified {
        let opts = TrainOptions {
            max_iters: c.max_iters,
            target_loss: c.target_rel * cert.initial_loss,
            audit: AuditOptions {
                enabled: true,
                stride: c.audit_stride,
                descent: true,
            },
        };
        let tr = trainer::train(&prep.arch, &prep.params0, &prep.dataset, &cert, &opts)?;
        run.trained = true;
        run.converged = tr.target_reached;
        run.falsified = !tr.falsifications().is_empty();
        run.final_rel_loss = tr.final_loss / tr.initial_loss;
        run.steps = tr.steps;
    }
    Ok(run)
}

/// All draws of the grid, in parallel, sorted by `(N, width, draw)`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<(Vec<SweepCell>, Vec<SweepRun>)> {
    cfg.validate()?;
    let grid = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("config has no sweep grid (sweep_n, sweep_width, sweep_seeds)".into()))?;
    let mut jobs = Vec::new();
    for &n in &grid.samples {
        for &w in &grid.widths {
            for d in 0..grid.seeds {
                jobs.push((n, w, d));
            }
        }
    }
    jobs.sort_unstable();
    jobs.dedup();
    let mut runs = jobs
        .par_iter()
        .map(|&(n, w, d)| sweep_one(cfg, n, w, d))
        .collect::<Result<Vec<_>>>()?;
    runs.sort_by_key(|r| (r.n, r.width, r.draw));

    let mut cells: Vec<SweepCell> = Vec::new();
    for chunk in runs.chunk_by(|a, b| (a.n, a.width) == (b.n, b.width)) {
        let mut ratios: Vec<f64> = chunk.iter().map(SweepRun::min_ratio).collect();
        ratios.sort_by(f64::total_cmp);
        cells.push(SweepCell {
            n: chunk[0].n,
            width: chunk[0].width,
            draws: chunk.len(),
            certified: chunk.iter().filter(|r| r.certified).count(),
            converged: chunk.iter().filter(|r| r.converged).count(),
            falsified: chunk.iter().filter(|r| r.falsified).count(),
            median_min_ratio: median_sorted(&ratios),
        });
    }
    Ok((cells, runs))
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn sweep_tables(cells: &[SweepCell], runs: &[SweepRun]) -> (String, String) {
    let mut table = String::from(
        "n\twidth\tdraws\tcertified\tcertified_frac\tconverged\tconverged_frac\tfalsified\tmedian_min_ratio\n",
    );
    for c in cells {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{:?}\t{}\t{:?}\t{}\t{:?}",
            c.n,
            c.width,
            c.draws,
            c.certified,
            c.certified_frac(),
            c.converged,
            c.converged_frac(),
            c.falsified,
            c.median_min_ratio
        );
    }
    let mut detail = String::from(
        "n\twidth\tdraw\tseed\talpha0\tratio_w\tratio_f\tratio_s\tconditions\tcertified\ttrained\tconverged\tfalsified\tfinal_rel_loss\tsteps\n",
    );
    for r in runs {
        let _ = writeln!(
            detail,
            "{}\t{}\t{}\t{}\t{:?}\t{:?}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{:?}\t{}",
            r.n,
            r.width,
            r.draw,
            r.seed,
            r.alpha0,
            r.ratio_w,
            r.ratio_f,
            r.ratio_s,
            r.conditions,
            r.certified,
            r.trained,
            r.converged,
            r.falsified,
            r.final_rel_loss,
            r.steps
        );
    }
    (table, detail)
}

pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let (cells, runs) = run_sweep(cfg)?;
    let (table, detail) = sweep_tables(&cells, &runs);
    create_dir(out)?;
    fs::write(out.join("sweep.tsv"), &table)?;
    fs::write(out.join("sweep_runs.tsv"), &detail)?;
    let status = if cells.iter().any(|c| c.falsified > 0) {
        Status::Falsified
    } else {
        Status::Success
    };
    Ok(Outcome {
        status,
        report: table,
    })
}
