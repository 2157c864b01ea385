//! Line-delimited JSON trace: a header, one `iter` record per iterate, one `summary`.

use std::io::Write;

use serde::Serialize;

use gdcert::certificate::Certificate;
use gdcert::error::Result;
use gdcert::trainer::{IterRecord, TrainTrace, Violation};

pub const TRACE_FORMAT: &str = "gdcert-trace";
pub const TRACE_VERSION: u32 = 1;

/// Field names of every `iter` record, in emission order.
pub const ITER_FIELDS: &[&str] = &[
    "k",
    "loss",
    "envelope",
    "audited",
    "sigma_min",
    "weight_norms",
    "displacement",
    "grad_norms",
    "inv_weight_norms",
    "inv_sigma_min",
    "inv_loss",
    "displacement_ok",
    "step_contraction",
    "descent",
];

#[derive(Serialize)]
struct Header<'a> {
    record: &'static str,
    format: &'static str,
    version: u32,
    fields: &'a [&'a str],
}

#[derive(Serialize)]
struct IterLine<'a> {
    record: &'static str,
    #[serde(flatten)]
    rec: &'a IterRecord,
}

#[derive(Serialize)]
struct Summary<'a> {
    record: &'static str,
    status: &'a str,
    certified: bool,
    eta: f64,
    eta_max: f64,
    alpha0: f64,
    decay_factor: f64,
    initial_loss: f64,
    final_loss: f64,
    steps: usize,
    target_loss: f64,
    target_reached: bool,
    violations: usize,
    falsifications: Vec<&'a Violation>,
    aborted: Option<&'a str>,
}

pub fn run_status(trace: &TrainTrace) -> &'static str {
    if !trace.falsifications().is_empty() {
        "falsified"
    } else if !trace.certified {
        "uncertified"
    } else if trace.aborted.is_some() {
        "aborted"
    } else if trace.target_reached {
        "converged"
    } else {
        "max_iters"
    }
}

pub fn write_trace<W: Write>(w: &mut W, trace: &TrainTrace, cert: &Certificate) -> Result<()> {
    let json = |e: serde_json::Error| gdcert::Error::Io(e.to_string());
    serde_json::to_writer(
        &mut *w,
        &Header {
            record: "header",
            format: TRACE_FORMAT,
            version: TRACE_VERSION,
            fields: ITER_FIELDS,
        },
    )
    .map_err(json)?;
    w.write_all(b"\n")?;
    for rec in &trace.records {
        serde_json::to_writer(&mut *w, &IterLine { record: "iter", rec }).map_err(json)?;
        w.write_all(b"\n")?;
    }
    let summary = Summary {
        record: "summary",
        status: run_status(trace),
        certified: trace.certified,
        eta: trace.eta,
        eta_max: cert.eta_max,
        alpha0: trace.alpha0,
        decay_factor: trace.decay_factor,
        initial_loss: trace.initial_loss,
        final_loss: trace.final_loss,
        steps: trace.steps,
        target_loss: trace.target_loss,
        target_reached: trace.target_reached,
        violations: trace.violations.len(),
        falsifications: trace.falsifications(),
        aborted: trace.aborted.as_deref(),
    };
    serde_json::to_writer(&mut *w, &summary).map_err(json)?;
    w.write_all(b"\n")?;
    Ok(())
}
