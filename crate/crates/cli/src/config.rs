//! Flat `key = value` experiment configuration.
//!
//! One entry per line; `#` starts a comment; keys are unique. Lists are
//! comma-separated. See the README for the full grammar.

use std::fmt::Write as _;
use std::path::PathBuf;

use gdcert::certificate;
use gdcert::error::{Error, Result};
use gdcert::network::Architecture;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitChoice {
    /// β-scaled hidden layers and zero output layer; `None` searches for β.
    Beta(Option<f64>),
    Lecun,
    LecunDeep,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CSchedule {
    Ones,
    TwoLayer,
    LecunDeep,
    Explicit(Vec<f64>),
}

impl CSchedule {
    pub fn resolve(&self, arch: &Architecture) -> Result<Vec<f64>> {
        match self {
            CSchedule::Ones => Ok(certificate::c_ones(arch)),
            CSchedule::TwoLayer => {
                if arch.depth() != 2 {
                    return Err(Error::InvalidInput(format!(
                        "c_schedule = two_layer needs L = 2, got L = {}",
                        arch.depth()
                    )));
                }
                Ok(certificate::two_layer_config())
            }
            CSchedule::LecunDeep => certificate::lecun_deep_config(arch),
            CSchedule::Explicit(v) => {
                if v.len() != arch.depth() {
                    return Err(Error::InvalidInput(format!(
                        "c_schedule lists {} values for L = {}",
                        v.len(),
                        arch.depth()
                    )));
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaChoice {
    Auto,
    Fixed(f64),
}

/// Grid for `sweep`: every `(N, n_{L-1})` pair, `seeds` draws per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub samples: Vec<usize>,
    pub widths: Vec<usize>,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub widths: Vec<usize>,
    pub n: usize,
    pub init: InitChoice,
    pub c_schedule: CSchedule,
    pub eta: EtaChoice,
    pub eta_safety: f64,
    pub max_iters: usize,
    /// Stopping threshold relative to `Φ(θ₀)`.
    pub target_rel: f64,
    pub audit_stride: usize,
    pub out: Option<PathBuf>,
    pub sweep: Option<SweepGrid>,
}

impl ExperimentConfig {
    pub fn new(widths: Vec<usize>, n: usize) -> Self {
        Self {
            seed: 0,
            widths,
            n,
            init: InitChoice::Beta(None),
            c_schedule: CSchedule::Ones,
            eta: EtaChoice::Auto,
            eta_safety: certificate::DEFAULT_ETA_SAFETY,
            max_iters: gdcert::trainer::DEFAULT_MAX_ITERS,
            target_rel: gdcert::trainer::DEFAULT_TARGET_REL,
            audit_stride: 1,
            out: None,
            sweep: None,
        }
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::new(self.widths.clone())
    }

    pub fn n0(&self) -> usize {
        self.widths[0]
    }

    pub fn nl(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn validate(&self) -> Result<()> {
        let arch = self.architecture()?;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if !(self.eta_safety > 0.0 && self.eta_safety < 1.0) {
            return bad(format!("eta_safety must lie in (0, 1), got {}", self.eta_safety));
        }
        if let EtaChoice::Fixed(e) = self.eta {
            if !(e > 0.0 && e.is_finite()) {
                return bad(format!("eta must be positive, got {e}"));
            }
        }
        if let InitChoice::Beta(Some(b)) = self.init {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("beta must be positive, got {b}"));
            }
        }
        if self.init == InitChoice::LecunDeep && arch.depth() < 2 {
            return bad("init = lecun_deep needs at least one hidden layer".into());
        }
        if !(self.target_rel >= 0.0 && self.target_rel.is_finite()) {
            return bad(format!("target_rel must be finite and non-negative, got {}", self.target_rel));
        }
        if self.audit_stride == 0 {
            return bad("audit_stride must be at least 1".into());
        }
        if let CSchedule::Explicit(v) = &self.c_schedule {
            if v.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
                return bad("c_schedule values must be positive".into());
            }
        }
        self.c_schedule.resolve(&arch)?;
        if let Some(g) = &self.sweep {
            if arch.depth() < 2 {
                return bad("sweep needs at least one hidden layer".into());
            }
            if g.samples.is_empty() || g.widths.is_empty() || g.seeds == 0 {
                return bad("sweep grid needs sweep_n, sweep_width and sweep_seeds > 0".into());
            }
            if g.samples.contains(&0) || g.widths.contains(&0) {
                return bad("sweep grid values must be positive".into());
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: Vec<(&str, usize)> = Vec::new();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `key = value`, found {line:?}"),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if let Some((_, first)) = seen.iter().find(|(s, _)| *s == k) {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("duplicate key {k:?} (first on line {first})"),
                });
            }
            seen.push((k, line_no));
            entries.push((line_no, k, v));
        }

        let find = |key: &str| entries.iter().find(|(_, k, _)| *k == key).map(|&(l, _, v)| (l, v));
        let perr = |line: usize, msg: String| Error::Parse { line, msg };

        let (wl, wv) = find("widths").ok_or_else(|| perr(0, "missing required key `widths`".into()))?;
        let widths = parse_list::<usize>(wv).map_err(|m| perr(wl, format!("widths: {m}")))?;
        let (nl_, nv) = find("n").ok_or_else(|| perr(0, "missing required key `n`".into()))?;
        let n = parse_num::<usize>(nv).map_err(|m| perr(nl_, format!("n: {m}")))?;
        if widths.len() < 2 {
            return Err(perr(wl, "widths needs at least input and output width".into()));
        }
        let mut cfg = ExperimentConfig::new(widths, n);
        let mut beta: Option<(usize, &str)> = None;
        let mut init_line = None;
        let mut sweep_n = None;
        let mut sweep_w = None;
        let mut sweep_s = None;

        for &(line, key, v) in &entries {
            let ctx = |m: String| perr(line, format!("{key}: {m}"));
            match key {
                "widths" | "n" => {}
                "seed" => cfg.seed = parse_num(v).map_err(ctx)?,
                "n0" => {
                    let n0: usize = parse_num(v).map_err(ctx)?;
                    if n0 != cfg.widths[0] {
                        return Err(perr(line, format!("n0 = {n0} disagrees with widths[0] = {}", cfg.widths[0])));
                    }
                }
                "nl" => {
                    let nl: usize = parse_num(v).map_err(ctx)?;
                    if nl != cfg.nl() {
                        return Err(perr(line, format!("nl = {nl} disagrees with the last width {}", cfg.nl())));
                    }
                }
                "init" => {
                    init_line = Some(line);
                    cfg.init = match v {
                        "beta" => InitChoice::Beta(None),
                        "lecun" => InitChoice::Lecun,
                        "lecun_deep" => InitChoice::LecunDeep,
                        _ => return Err(ctx(format!("expected beta, lecun or lecun_deep, found {v:?}"))),
                    }
                }
                "beta" => beta = Some((line, v)),
                "c_schedule" => {
                    cfg.c_schedule = match v {
                        "ones" => CSchedule::Ones,
                        "two_layer" => CSchedule::TwoLayer,
                        "lecun_deep" => CSchedule::LecunDeep,
                        _ => CSchedule::Explicit(parse_list(v).map_err(ctx)?),
                    }
                }
                "eta" => {
                    cfg.eta = if v == "auto" {
                        EtaChoice::Auto
                    } else {
                        EtaChoice::Fixed(parse_num(v).map_err(ctx)?)
                    }
                }
                "eta_safety" => cfg.eta_safety = parse_num(v).map_err(ctx)?,
                "max_iters" => cfg.max_iters = parse_num(v).map_err(ctx)?,
                "target_rel" => cfg.target_rel = parse_num(v).map_err(ctx)?,
                "audit_stride" => cfg.audit_stride = parse_num(v).map_err(ctx)?,
                "out" => {
                    if v.is_empty() {
                        return Err(ctx("empty path".into()));
                    }
                    cfg.out = Some(PathBuf::from(v));
                }
                "sweep_n" => sweep_n = Some(parse_list(v).map_err(ctx)?),
                "sweep_width" => sweep_w = Some(parse_list(v).map_err(ctx)?),
                "sweep_seeds" => sweep_s = Some(parse_num(v).map_err(ctx)?),
                _ => return Err(perr(line, format!("unknown key {key:?}"))),
            }
        }

        if let Some((line, v)) = beta {
            match cfg.init {
                InitChoice::Beta(_) => {
                    cfg.init = InitChoice::Beta(if v == "auto" {
                        None
                    } else {
                        Some(parse_num(v).map_err(|m| perr(line, format!("beta: {m}")))?)
                    });
                }
                _ => {
                    return Err(perr(
                        line,
                        format!(
                            "beta is only valid with init = beta (init set on line {})",
                            init_line.unwrap_or(0)
                        ),
                    ))
                }
            }
        }
        match (sweep_n, sweep_w, sweep_s) {
            (None, None, None) => {}
            (Some(samples), Some(widths), Some(seeds)) => {
                cfg.sweep = Some(SweepGrid { samples, widths, seeds })
            }
            _ => {
                return Err(perr(
                    0,
                    "sweep_n, sweep_width and sweep_seeds must be given together".into(),
                ))
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text; `parse(serialize(c)) == c`.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "widths = {}", join(&self.widths));
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "n0 = {}", self.n0());
        let _ = writeln!(s, "nl = {}", self.nl());
        match self.init {
            InitChoice::Beta(b) => {
                let _ = writeln!(s, "init = beta");
                match b {
                    None => {
                        let _ = writeln!(s, "beta = auto");
                    }
                    Some(b) => {
                        let _ = writeln!(s, "beta = {b:?}");
                    }
                }
            }
            InitChoice::Lecun => {
                let _ = writeln!(s, "init = lecun");
            }
            InitChoice::LecunDeep => {
                let _ = writeln!(s, "init = lecun_deep");
            }
        }
        let c = match &self.c_schedule {
            CSchedule::Ones => "ones".to_string(),
            CSchedule::TwoLayer => "two_layer".to_string(),
            CSchedule::LecunDeep => "lecun_deep".to_string(),
            CSchedule::Explicit(v) => v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "),
        };
        let _ = writeln!(s, "c_schedule = {c}");
        match self.eta {
            EtaChoice::Auto => {
                let _ = writeln!(s, "eta = auto");
            }
            EtaChoice::Fixed(e) => {
                let _ = writeln!(s, "eta = {e:?}");
            }
        }
        let _ = writeln!(s, "eta_safety = {:?}", self.eta_safety);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "target_rel = {:?}", self.target_rel);
        let _ = writeln!(s, "audit_stride = {}", self.audit_stride);
        if let Some(o) = &self.out {
            let _ = writeln!(s, "out = {}", o.display());
        }
        if let Some(g) = &self.sweep {
            let _ = writeln!(s, "sweep_n = {}", join(&g.samples));
            let _ = writeln!(s, "sweep_width = {}", join(&g.widths));
            let _ = writeln!(s, "sweep_seeds = {}", g.seeds);
        }
        s
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse {v:?}: {e}"))
}

fn parse_list<T: std::str::FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    if v.is_empty() {
        return Err("empty list".into());
    }
    v.split(',').map(|t| parse_num(t.trim())).collect()
}
