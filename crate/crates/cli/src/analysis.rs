use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ksol_core::orbit::{
    classify_orbit, log_z_identity_error, monotonicity_monitor, run_orbit, self_intersections,
    IntegrateConfig, OrbitClass, OrbitKind, OrbitTrace, Violation,
};
use ksol_core::phase::{make_params, SolitonParams};
use ksol_core::profile::{
    elliptic_residual, expected_rate, potential_phi, reconstruct_u, tail_rate, z_exponent,
    z_root_affine, ExpectedRate, ResidualReport, TailFit,
};
use ksol_core::sigma::{radial_sigma_l, RadialEigenPair};
use ksol_core::{Error, LocalSolution, ProfileRow, ProfileTable};
use serde::Serialize;

use crate::config::usage;

pub fn params(n: u32, k: u32, rho: f64, theta: f64) -> Result<SolitonParams> {
    make_params(n, k, rho, theta).map_err(|e| usage(e.to_string()))
}

pub struct Analysis {
    pub p: SolitonParams,
    pub local: LocalSolution,
    pub trace: OrbitTrace,
    pub class: OrbitClass,
    pub table: ProfileTable,
}

impl Analysis {
    pub fn run(p: SolitonParams, alpha: f64, cfg: &IntegrateConfig) -> Result<Self> {
        let (local, trace) = run_orbit(&p, alpha, cfg).map_err(|e| match e {
            Error::Param { .. } => usage(e.to_string()),
            e => anyhow::Error::new(e).context("orbit integration failed"),
        })?;
        let class = classify_orbit(&trace, &p);
        let mut table = reconstruct_u(&trace, &p).context("profile reconstruction failed")?;
        table.u0 = local.u0;
        Ok(Self {
            p,
            local,
            trace,
            class,
            table,
        })
    }

    pub fn admissible(&self) -> bool {
        !matches!(self.class.kind(), OrbitKind::NonAdmissible | OrbitKind::Undetermined)
    }

    pub fn tail(&self) -> TailSummary {
        let expected = expected_rate(&self.p, &self.class).ok();
        let fit = tail_rate(&self.table);
        let z_slope = if self.class.kind() == OrbitKind::TypeGamma && self.p.rho < 0.0 {
            z_exponent(&self.trace, 5.0).ok().map(|(s, _)| s)
        } else {
            None
        };
        let z_root_r2 = if self.class.kind() == OrbitKind::TypeGamma && self.p.rho == 0.0 {
            z_root_affine(&self.trace, &self.p, 0.5).ok().map(|(_, _, r2)| r2)
        } else {
            None
        };
        let (fit, note) = match fit {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        TailSummary {
            expected,
            fit,
            z_slope,
            z_root_r2,
            note,
        }
    }

    /// Measured u exponent comparable with `expected.exponent`: the log-corrected
    /// fit when the expected rate carries a log power.
    pub fn measured_exponent(&self, tail: &TailSummary) -> Option<f64> {
        let fit = tail.fit.as_ref()?;
        match tail.expected {
            Some(ExpectedRate { log_power: Some(_), .. }) => fit.with_log.map(|l| l.exponent),
            _ => Some(fit.exponent),
        }
    }

    pub fn residuals(&self) -> Residuals {
        let phi = potential_phi(&self.table, &self.p);
        let interior = if phi.len() > 2 { &phi[1..phi.len() - 1] } else { &phi[..0] };
        let potential_identity = interior.iter().map(|s| s.identity_residual).fold(0.0, nan_max);
        Residuals {
            elliptic: elliptic_residual(&self.table, &self.p),
            potential_identity,
            log_z_identity: log_z_identity_error(&self.trace, &self.p),
            sigma_k_nonpositive: self.sigma_k_nonpositive(),
        }
    }

    fn sigma_k_nonpositive(&self) -> usize {
        self.table
            .rows
            .iter()
            .filter(|row| {
                let (v, size) = sigma_scaled(row, &self.p);
                v.is_nan() || v <= -SIGMA_RESOLUTION * size
            })
            .count()
    }

    pub fn monitors(&self) -> Monitors {
        monitors(&self.trace, &self.p, self.admissible())
    }
}

/// Relative accuracy of sigma_k along a profile: the eigenvalues inherit the
/// integrator tolerance, and on tails where sigma_k cancels its sign is only
/// known to this fraction of the size of its terms.
pub const SIGMA_RESOLUTION: f64 = 1e-8;

/// sigma_k(r^2 lambda) and sigma_k(r^2 |lambda|).
pub fn sigma_scaled(row: &ProfileRow, p: &SolitonParams) -> (f64, f64) {
    let (l1, l2) = row.scaled_eigen(p);
    let at = |lambda1: f64, lambda2: f64| {
        radial_sigma_l(&RadialEigenPair { lambda1, lambda2, n: p.n, k: p.k }, p.k).unwrap_or(f64::NAN)
    };
    (at(l1, l2), at(l1.abs(), l2.abs()))
}

pub fn monitors(trace: &OrbitTrace, p: &SolitonParams, admissible: bool) -> Monitors {
    // past the exit of a non-admissible orbit X is free to turn back
    let violations = if admissible { monotonicity_monitor(trace, p) } else { Vec::new() };
    Monitors {
        violations: violations.len(),
        first_violations: violations.into_iter().take(10).collect(),
        self_intersections: self_intersections(trace, 1.0),
    }
}

fn nan_max(acc: f64, v: f64) -> f64 {
    if v.is_nan() || acc.is_nan() {
        f64::NAN
    } else {
        acc.max(v)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TailSummary {
    pub expected: Option<ExpectedRate>,
    pub fit: Option<TailFit>,
    /// Slope of ln Z on the expanding tail.
    pub z_slope: Option<f64>,
    /// R^2 of the affine fit of Z^{1/k} on the steady tail.
    pub z_root_r2: Option<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub elliptic: ResidualReport,
    pub potential_identity: f64,
    pub log_z_identity: f64,
    /// Rows with sigma_k below -SIGMA_RESOLUTION times the size of its terms.
    pub sigma_k_nonpositive: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Monitors {
    pub violations: usize,
    pub first_violations: Vec<Violation>,
    pub self_intersections: usize,
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = open_output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn csv_writer(out: Box<dyn Write>) -> csv::Writer<Box<dyn Write>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}
