use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use ksol_core::orbit::OrbitClass;
use ksol_core::profile::{origin_expansion_check, OriginCheck, ProfileRow};
use ksol_core::sigma::{radial_sigma_l, RadialEigenPair};
use ksol_core::SolitonParams;
use serde::Serialize;

use crate::analysis::{
    csv_writer, open_output, params, sigma_scaled, write_json, Analysis, Residuals, SIGMA_RESOLUTION,
};
use crate::config::{Format, IoArgs, ParamArgs, RunConfig};

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Line {
    pub r: f64,
    pub u: f64,
    pub u_r: f64,
    pub u_rr: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma_k: f64,
}

pub enum Skip {
    /// Raw values left the normal double range; the scaled quantities stay
    /// accurate there but the raw columns do not.
    Underflow,
    /// |sigma_k| below the resolution of the profile.
    Unresolved,
}

pub fn line(row: &ProfileRow, p: &SolitonParams) -> Result<Line, Skip> {
    let (l1, l2) = row.scaled_eigen(p);
    let r2 = row.r * row.r;
    let pair = RadialEigenPair {
        lambda1: l1 / r2,
        lambda2: l2 / r2,
        n: p.n,
        k: p.k,
    };
    let sigma_k = radial_sigma_l(&pair, p.k).map_err(|_| Skip::Underflow)?;
    let normal = |v: f64| v == 0.0 || v.is_normal();
    let raw_ok = row.u.is_normal() && normal(row.u_r) && normal(row.u_rr);
    let eig_ok = normal(pair.lambda1) && pair.lambda2.is_normal() && (sigma_k.is_normal() || sigma_k <= 0.0);
    if !(raw_ok && eig_ok) {
        return Err(Skip::Underflow);
    }
    let (v, size) = sigma_scaled(row, p);
    if v.abs() <= SIGMA_RESOLUTION * size {
        return Err(Skip::Unresolved);
    }
    Ok(Line {
        r: row.r,
        u: row.u,
        u_r: row.u_r,
        u_rr: row.u_rr,
        lambda1: pair.lambda1,
        lambda2: pair.lambda2,
        sigma_k,
    })
}

#[derive(Serialize)]
struct Sidecar<'a> {
    config: &'a RunConfig,
    class: &'a OrbitClass,
    rows_written: usize,
    rows_dropped_underflow: usize,
    rows_dropped_unresolved_sigma_k: usize,
    r_max_written: Option<f64>,
    residuals: Residuals,
    origin: Option<OriginCheck>,
}

#[derive(Serialize)]
struct JsonProfile<'a> {
    #[serde(flatten)]
    summary: Sidecar<'a>,
    rows: &'a [Line],
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    if output.extension().is_some_and(|e| e == "json") {
        let mut s = output.as_os_str().to_owned();
        s.push(".summary.json");
        PathBuf::from(s)
    } else {
        output.with_extension("json")
    }
}

pub fn run(args: &ProfileArgs) -> Result<()> {
    let (cfg, _) = RunConfig::resolve("profile", &args.params, &args.io, Format::Csv)?;
    let p = params(cfg.n, cfg.k, cfg.rho, cfg.theta)?;
    let an = Analysis::run(p, cfg.alpha, &cfg.tol.integrate_config())?;
    let (mut lines, mut underflow, mut unresolved) = (Vec::new(), 0, 0);
    for row in &an.table.rows {
        match line(row, &p) {
            Ok(l) => lines.push(l),
            Err(Skip::Underflow) => underflow += 1,
            Err(Skip::Unresolved) => unresolved += 1,
        }
    }
    let summary = Sidecar {
        config: &cfg,
        class: &an.class,
        rows_written: lines.len(),
        rows_dropped_underflow: underflow,
        rows_dropped_unresolved_sigma_k: unresolved,
        r_max_written: lines.last().map(|l| l.r),
        residuals: an.residuals(),
        origin: origin_expansion_check(&an.table, &p).ok(),
    };
    match cfg.format {
        Format::Json => write_json(cfg.output.as_deref(), &JsonProfile { summary, rows: &lines }),
        Format::Csv => {
            let mut w = csv_writer(open_output(cfg.output.as_deref())?);
            for l in &lines {
                w.serialize(l)?;
            }
            w.flush()?;
            drop(w);
            match &cfg.output {
                Some(out) => write_json(Some(&sidecar_path(out)), &summary),
                None => {
                    eprintln!(
                        "{} rows, {} dropped (underflow), {} dropped (sigma_k unresolved), elliptic residual {:.3e}",
                        summary.rows_written,
                        underflow,
                        unresolved,
                        summary.residuals.elliptic.max_rel
                    );
                    Ok(())
                }
            }
        }
    }
}
