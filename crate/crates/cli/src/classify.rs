use anyhow::Result;
use clap::Args;
use ksol_core::orbit::rk::StepStats;
use ksol_core::orbit::{OrbitClass, OrbitEvent};
use ksol_core::phase::{critical_points, CriticalPoint, DimRegime, SolitonParams};
use serde::Serialize;

use crate::analysis::{csv_writer, open_output, params, write_json, Analysis, Monitors, Residuals, TailSummary};
use crate::config::{Format, IoArgs, ParamArgs, RunConfig};

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub io: IoArgs,
}

#[derive(Serialize)]
struct Derived {
    regime: DimRegime,
    gamma_k: f64,
    x_exit: f64,
    f0: f64,
    h0: f64,
    z_decay_rate: f64,
    critical_points: Vec<CriticalPoint>,
}

#[derive(Serialize)]
struct LocalSummary {
    u0: Option<f64>,
    limit_x: f64,
    limit_z: f64,
    contraction_rate: f64,
    sup_residual: f64,
    iterations: usize,
    s0: f64,
    s_min: f64,
}

#[derive(Serialize)]
struct Integration {
    samples: usize,
    s_start: f64,
    s_end: f64,
    stats: StepStats,
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a RunConfig,
    params: SolitonParams,
    derived: Derived,
    local: LocalSummary,
    class: &'a OrbitClass,
    events: &'a [OrbitEvent],
    integration: Integration,
    tail: TailSummary,
    residuals: Residuals,
    monitors: Monitors,
}

#[derive(Serialize)]
struct Row {
    n: u32,
    k: u32,
    rho: f64,
    theta: f64,
    alpha: f64,
    kind: String,
    x_inf: Option<f64>,
    d: Option<f64>,
    s_exit: Option<f64>,
    tail_exponent: Option<f64>,
    expected_exponent: Option<f64>,
    elliptic_residual: f64,
    violations: usize,
}

pub fn run(args: &ClassifyArgs) -> Result<()> {
    let (cfg, _) = RunConfig::resolve("classify", &args.params, &args.io, Format::Json)?;
    let p = params(cfg.n, cfg.k, cfg.rho, cfg.theta)?;
    let an = Analysis::run(p, cfg.alpha, &cfg.tol.integrate_config())?;
    let tail = an.tail();
    let residuals = an.residuals();
    let monitors = an.monitors();
    match cfg.format {
        Format::Json => {
            let l = &an.local;
            let report = Report {
                config: &cfg,
                params: p,
                derived: Derived {
                    regime: p.regime(),
                    gamma_k: p.gamma_k(),
                    x_exit: p.x_exit(),
                    f0: p.f0(),
                    h0: p.h0(),
                    z_decay_rate: p.z_decay_rate(),
                    critical_points: critical_points(&p),
                },
                local: LocalSummary {
                    u0: l.u0,
                    limit_x: l.limit_x,
                    limit_z: l.limit_z,
                    contraction_rate: l.contraction_rate,
                    sup_residual: l.sup_residual,
                    iterations: l.iterations,
                    s0: l.s0,
                    s_min: l.s_min,
                },
                class: &an.class,
                events: &an.trace.events,
                integration: Integration {
                    samples: an.trace.samples.len(),
                    s_start: an.trace.samples[0].s,
                    s_end: an.trace.last().s,
                    stats: an.trace.stats,
                },
                tail,
                residuals,
                monitors,
            };
            write_json(cfg.output.as_deref(), &report)
        }
        Format::Csv => {
            let (d, s_exit) = match an.class {
                OrbitClass::GeneralizedA { d, .. } => (Some(d), None),
                OrbitClass::NonAdmissible { s_exit } => (None, Some(s_exit)),
                _ => (None, None),
            };
            let row = Row {
                n: p.n,
                k: p.k,
                rho: p.rho,
                theta: p.theta,
                alpha: cfg.alpha,
                kind: an.class.kind().to_string(),
                x_inf: an.class.x_inf(),
                d,
                s_exit,
                tail_exponent: an.measured_exponent(&tail),
                expected_exponent: tail.expected.map(|e| e.exponent),
                elliptic_residual: residuals.elliptic.max_rel,
                violations: monitors.violations,
            };
            let mut w = csv_writer(open_output(cfg.output.as_deref())?);
            w.serialize(row)?;
            w.flush()?;
            Ok(())
        }
    }
}
