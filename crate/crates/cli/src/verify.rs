use anyhow::Result;
use clap::Args;
use ksol_core::orbit::{OrbitClass, OrbitKind};
use ksol_core::phase::{jacobian_b, DimRegime, SolitonParams};
use ksol_core::profile::{origin_expansion_check, weighted_lsq};
use ksol_core::PicardConfig;
use serde::Serialize;

use crate::analysis::{csv_writer, monitors, open_output, params, write_json, Analysis};
use crate::config::{Format, IoArgs, ParamArgs, RunConfig};

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub io: IoArgs,
    /// Dent the orbit before the invariant monitors run
    #[arg(long, hide = true)]
    pub inject_perturbation: bool,
}

/// Passes when value <= limit; slack = limit - value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: f64,
    pub limit: f64,
    pub slack: f64,
    pub pass: bool,
}

fn check(name: &'static str, value: f64, limit: f64) -> Check {
    Check {
        name,
        value,
        limit,
        slack: limit - value,
        pass: value <= limit,
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

pub fn expected_kinds(p: &SolitonParams) -> &'static [OrbitKind] {
    use OrbitKind::*;
    let two_theta = 2.0 * p.theta;
    match p.regime() {
        DimRegime::Above if p.rho <= 0.0 => &[TypeGamma],
        DimRegime::Above if p.rho <= two_theta => &[TypeB, GeneralizedB],
        DimRegime::Above => &[TypeA, GeneralizedA, TypeB, GeneralizedB],
        DimRegime::Critical if p.rho <= 0.0 => &[TypeGamma],
        DimRegime::Critical => &[GeneralizedA],
        DimRegime::Below if p.rho < two_theta => &[NonAdmissible],
        DimRegime::Below => &[TypeA],
    }
}

pub fn checks(an: &Analysis, perturb: bool) -> Vec<Check> {
    let p = &an.p;
    let l = &an.local;
    let mut out = Vec::new();

    out.push(check("picard_contraction_rate", l.contraction_rate, 0.9));
    out.push(check("picard_residual", l.sup_residual, 1e-10));
    let c = l.alpha.powf((1.0 - p.m) * p.kf());
    out.push(check("picard_limit_x", rel(l.limit_x, c), 1e-8));
    out.push(check("picard_limit_z", rel(l.limit_z, p.nf() * c / p.f0()), 1e-8));
    out.push(check("picard_derivative_mismatch", l.derivative_mismatch(), 10.0 * PicardConfig::default().tol));

    let expected = expected_kinds(p).contains(&an.class.kind());
    out.push(check("classification", if expected { 0.0 } else { 1.0 }, 0.0));

    let mut trace = an.trace.clone();
    if perturb {
        let target = 0.25 * p.x_b.min(p.gamma_k());
        if let Some(i) = trace.samples.iter().position(|s| s.x > target) {
            trace.samples[i].x *= 0.5;
        }
    }
    let mon = monitors(&trace, p, an.admissible());
    out.push(check("monotonicity_violations", mon.violations as f64, 0.0));
    out.push(check("self_intersections", mon.self_intersections as f64, 0.0));

    let res = an.residuals();
    out.push(check("log_z_identity", res.log_z_identity, 1e-8));
    out.push(check("elliptic_residual", res.elliptic.max_rel, 1e-6));
    if an.admissible() {
        out.push(check("potential_identity", res.potential_identity, 1e-6));
        out.push(check("sigma_k_nonpositive_rows", res.sigma_k_nonpositive as f64, 0.0));
    }

    if let Ok(o) = origin_expansion_check(&an.table, p) {
        out.push(check("origin_expansion", o.rel_err, 1e-2));
        // u(0) by quadratic extrapolation in r^2 over the innermost rows
        let inner = &an.table.rows[..16.min(an.table.rows.len())];
        let r2: Vec<f64> = inner.iter().map(|row| row.r * row.r).collect();
        let r4: Vec<f64> = r2.iter().map(|v| v * v).collect();
        let u: Vec<f64> = inner.iter().map(|row| row.u).collect();
        let ones = vec![1.0; inner.len()];
        let (coef, _) = weighted_lsq(&[ones.clone(), r2, r4], &u, &ones);
        out.push(check("u0_recovery", rel(coef[0], o.u0), 1e-6));
    }

    let tail = an.tail();
    if let Some(exp) = tail.expected {
        match an.measured_exponent(&tail) {
            Some(m) => out.push(check("tail_exponent", rel(m, exp.exponent), 2e-2)),
            None => out.push(check("tail_exponent", f64::INFINITY, 2e-2)),
        }
        // the ln ln r power is resolvable for n > 2k only
        if let (Some(lp), Some(fit), DimRegime::Above) = (exp.log_power, tail.fit.and_then(|f| f.with_log), p.regime()) {
            out.push(check("tail_log_power", rel(fit.log_power, lp), 2e-2));
        }
    }
    if let Some(slope) = tail.z_slope {
        out.push(check("expander_z_rate", rel(slope, p.z_decay_rate()), 1e-2));
    }
    if let (Some(r2), DimRegime::Above) = (tail.z_root_r2, p.regime()) {
        out.push(check("steady_z_root_affine", 1.0 - r2, 1e-3));
    }

    if p.regime() == DimRegime::Above && p.rho > 0.0 {
        if let Ok(b) = jacobian_b(p) {
            out.push(check("b_rhs_norm", b.rhs_norm, 1e-10));
            out.push(check("b_determinant", rel(b.det, b.closed_form_det), 1e-10));
            out.push(check("b_attractor", if b.attractor { 0.0 } else { 1.0 }, 0.0));
        }
    }
    if let OrbitClass::GeneralizedA { d, .. } = an.class {
        let hi = (p.rho / (2.0 * p.theta)).min(1.0);
        let outside = if d > 0.0 && d <= hi { 0.0 } else { 1.0 };
        out.push(check("n2k_exponent_range", outside, 0.0));
    }
    out
}

#[derive(Serialize)]
struct Report<'a> {
    config: &'a RunConfig,
    class: &'a OrbitClass,
    pass: bool,
    failed: Vec<&'static str>,
    checks: &'a [Check],
}

/// Ok(true) when every check passes.
pub fn run(args: &VerifyArgs) -> Result<bool> {
    let (cfg, _) = RunConfig::resolve("verify", &args.params, &args.io, Format::Json)?;
    let p = params(cfg.n, cfg.k, cfg.rho, cfg.theta)?;
    let an = Analysis::run(p, cfg.alpha, &cfg.tol.integrate_config())?;
    let list = checks(&an, args.inject_perturbation);
    let failed: Vec<&'static str> = list.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    let pass = failed.is_empty();
    match cfg.format {
        Format::Json => write_json(
            cfg.output.as_deref(),
            &Report {
                config: &cfg,
                class: &an.class,
                pass,
                failed,
                checks: &list,
            },
        )?,
        Format::Csv => {
            let mut w = csv_writer(open_output(cfg.output.as_deref())?);
            for c in &list {
                w.serialize(c)?;
            }
            w.flush()?;
        }
    }
    for c in list.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {}: {:.3e} > {:.3e}", c.name, c.value, c.limit);
    }
    Ok(pass)
}
