use anyhow::{Context, Result};
use clap::Args;
use ksol_core::orbit::{OrbitClass, OrbitKind};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{csv_writer, open_output, params, write_json, Analysis};
use crate::config::{
    load_file, pick, pick_list, positive_alpha, required, usage, Format, IoArgs, ParamArgs, Tolerances,
};

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub io: IoArgs,
    /// Comma-separated rho values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "ratios")]
    pub rhos: Vec<f64>,
    /// Comma-separated rho/theta values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub ratios: Vec<f64>,
    /// Comma-separated alpha values (default: --alpha or 1)
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, env = "KSOL_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepConfig {
    pub command: &'static str,
    pub n: u32,
    pub k: u32,
    pub theta: f64,
    pub rhos: Vec<f64>,
    pub alphas: Vec<f64>,
    #[serde(flatten)]
    pub tol: Tolerances,
    pub jobs: usize,
    pub format: Format,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub n: u32,
    pub k: u32,
    pub rho: f64,
    pub theta: f64,
    pub alpha: f64,
    pub kind: String,
    pub type_a: u8,
    pub type_b: u8,
    pub x_inf: Option<f64>,
    pub d: Option<f64>,
    pub s_exit: Option<f64>,
    pub tail_exponent: Option<f64>,
    pub expected_exponent: Option<f64>,
    pub error: String,
}

fn row(cfg: &SweepConfig, index: usize, rho: f64, alpha: f64) -> SweepRow {
    let mut out = SweepRow {
        index,
        n: cfg.n,
        k: cfg.k,
        rho,
        theta: cfg.theta,
        alpha,
        kind: String::new(),
        type_a: 0,
        type_b: 0,
        x_inf: None,
        d: None,
        s_exit: None,
        tail_exponent: None,
        expected_exponent: None,
        error: String::new(),
    };
    let an = params(cfg.n, cfg.k, rho, cfg.theta)
        .and_then(|p| Analysis::run(p, alpha, &cfg.tol.integrate_config()));
    let an = match an {
        Ok(an) => an,
        Err(e) => {
            out.error = format!("{e:#}");
            return out;
        }
    };
    let kind = an.class.kind();
    out.kind = kind.to_string();
    out.type_a = u8::from(matches!(kind, OrbitKind::TypeA | OrbitKind::GeneralizedA));
    out.type_b = u8::from(matches!(kind, OrbitKind::TypeB | OrbitKind::GeneralizedB));
    out.x_inf = an.class.x_inf();
    match an.class {
        OrbitClass::GeneralizedA { d, .. } => out.d = Some(d),
        OrbitClass::NonAdmissible { s_exit } => out.s_exit = Some(s_exit),
        _ => {}
    }
    let tail = an.tail();
    out.tail_exponent = an.measured_exponent(&tail);
    out.expected_exponent = tail.expected.map(|e| e.exponent);
    out
}

pub fn resolve(args: &SweepArgs) -> Result<(SweepConfig, Option<std::path::PathBuf>)> {
    let file = load_file(&args.io)?;
    let theta = required(pick(args.params.theta, &file, "theta")?, "theta")?;
    let rhos = if !args.rhos.is_empty() {
        args.rhos.clone()
    } else if !args.ratios.is_empty() {
        args.ratios.iter().map(|r| r * theta).collect()
    } else {
        match (file.list("rhos")?, file.list("ratios")?) {
            (Some(_), Some(_)) => return Err(usage("config gives both rhos and ratios")),
            (Some(r), None) => r,
            (None, Some(r)) => r.iter().map(|r| r * theta).collect(),
            (None, None) => match pick(args.params.rho, &file, "rho")? {
                Some(r) => vec![r],
                None => return Err(usage("missing --rhos, --ratios or --rho")),
            },
        }
    };
    let alphas = match pick_list(&args.alphas, &file, "alphas")? {
        Some(a) => a,
        None => vec![pick(args.params.alpha, &file, "alpha")?.unwrap_or(1.0)],
    };
    for a in &alphas {
        positive_alpha(*a)?;
    }
    if rhos.is_empty() || alphas.is_empty() {
        return Err(usage("empty sweep grid"));
    }
    let jobs = match pick(args.jobs, &file, "jobs")? {
        Some(0) => return Err(usage("jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let cfg = SweepConfig {
        command: "sweep",
        n: required(pick(args.params.n, &file, "n")?, "n")?,
        k: required(pick(args.params.k, &file, "k")?, "k")?,
        theta,
        rhos,
        alphas,
        tol: Tolerances::resolve(&args.params, &file)?,
        jobs,
        format: pick(args.io.format, &file, "format")?.unwrap_or(Format::Csv),
    };
    // reject bad grids before spending time on any row
    for rho in &cfg.rhos {
        params(cfg.n, cfg.k, *rho, cfg.theta)?;
    }
    Ok((cfg, pick(args.io.output.clone(), &file, "output")?))
}

pub fn compute(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    let grid: Vec<(usize, f64, f64)> = cfg
        .rhos
        .iter()
        .flat_map(|rho| cfg.alphas.iter().map(move |alpha| (*rho, *alpha)))
        .enumerate()
        .map(|(i, (rho, alpha))| (i, rho, alpha))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("cannot start worker pool")?;
    // collect keeps grid order whatever the scheduling
    Ok(pool.install(|| grid.par_iter().map(|&(i, rho, alpha)| row(cfg, i, rho, alpha)).collect()))
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a SweepConfig,
    rows: &'a [SweepRow],
}

pub fn run(args: &SweepArgs) -> Result<()> {
    let (cfg, output) = resolve(args)?;
    let rows = compute(&cfg)?;
    match cfg.format {
        Format::Json => write_json(output.as_deref(), &Report { config: &cfg, rows: &rows }),
        Format::Csv => {
            let mut w = csv_writer(open_output(output.as_deref())?);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(())
        }
    }
}
