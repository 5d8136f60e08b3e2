use anyhow::Result;
use clap::Args;
use ksol_core::field::VectorField;
use ksol_core::orbit::{integrate_from, run_orbit, OrbitTrace};
use ksol_core::phase::{critical_points, kth_root, DimRegime, SolitonParams};
use ksol_core::Chart;
use serde::Serialize;

use crate::analysis::{csv_writer, open_output, params};
use crate::config::{pick, usage, Format, IoArgs, ParamArgs, RunConfig};

#[derive(Debug, Args)]
pub struct PortraitArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub io: IoArgs,
    /// Vector-field grid points per axis (default 21)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Seeded orbits besides the one leaving the origin (default 4)
    #[arg(long)]
    pub orbits: Option<usize>,
    /// Top of the plotted Z range
    #[arg(long)]
    pub z_max: Option<f64>,
}

/// kind: field | nullcline_x | nullcline_z | critical | orbit.
/// field rows carry (u, v) = (X_s, Z_s); critical rows carry the type and
/// interior/boundary/exterior in `note`.
#[derive(Serialize)]
struct Row<'a> {
    kind: &'a str,
    id: usize,
    label: &'a str,
    x: f64,
    z: f64,
    u: Option<f64>,
    v: Option<f64>,
    note: &'a str,
}

fn point<'a>(kind: &'a str, id: usize, label: &'a str, x: f64, z: f64) -> Row<'a> {
    Row {
        kind,
        id,
        label,
        x,
        z,
        u: None,
        v: None,
        note: "",
    }
}

fn default_z_max(p: &SolitonParams) -> f64 {
    let slope = p.nf() * p.x_exit() / p.f0();
    match p.z_b {
        Some(zb) if zb > 0.0 => slope.max(1.5 * zb),
        _ => slope,
    }
}

pub fn run(args: &PortraitArgs) -> Result<()> {
    let (cfg, file) = RunConfig::resolve("portrait", &args.params, &args.io, Format::Csv)?;
    if cfg.format != Format::Csv {
        return Err(usage("portrait writes csv only"));
    }
    let grid = pick(args.grid, &file, "grid")?.unwrap_or(21);
    let orbits = pick(args.orbits, &file, "orbits")?.unwrap_or(4);
    if grid < 2 {
        return Err(usage("grid must be at least 2"));
    }
    let p = params(cfg.n, cfg.k, cfg.rho, cfg.theta)?;
    let z_max = pick(args.z_max, &file, "z_max")?.unwrap_or_else(|| default_z_max(&p));
    if !(z_max > 0.0 && z_max.is_finite()) {
        return Err(usage(format!("z_max = {z_max} must be positive")));
    }
    let x_max = p.x_exit();
    let field = p.field_xz();

    let mut w = csv_writer(open_output(cfg.output.as_deref())?);
    let last = (grid - 1) as f64;
    for i in 0..grid {
        for j in 0..grid {
            let (x, z) = (x_max * i as f64 / last, z_max * j as f64 / last);
            let f = field.eval([x, z]);
            w.serialize(Row {
                u: Some(f[0]),
                v: Some(f[1]),
                ..point("field", i * grid + j, "", x, z)
            })?;
        }
    }

    // X_s = 0: Z = (n-2k)(1 - a X^{1/k}) X / f(X^{1/k})
    let f = p.f();
    let samples = 200;
    for i in 0..=samples {
        let x = x_max * i as f64 / samples as f64;
        let r = kth_root(x, p.k)?;
        let z = p.excess() * (1.0 - p.a * r) * x / f.eval(r);
        if z.is_finite() && (0.0..=z_max).contains(&z) {
            w.serialize(point("nullcline_x", 0, "X_s=0", x, z))?;
        }
    }
    if p.regime() == DimRegime::Critical {
        let xg = p.gamma_k();
        w.serialize(point("nullcline_x", 1, "X=gamma^k", xg, 0.0))?;
        w.serialize(point("nullcline_x", 1, "X=gamma^k", xg, z_max))?;
    }
    w.serialize(point("nullcline_z", 0, "Z=0", 0.0, 0.0))?;
    w.serialize(point("nullcline_z", 0, "Z=0", x_max.max(p.x_b), 0.0))?;
    w.serialize(point("nullcline_z", 1, "X=X_B", p.x_b, 0.0))?;
    w.serialize(point("nullcline_z", 1, "X=X_B", p.x_b, z_max))?;

    for (id, c) in critical_points(&p).iter().enumerate() {
        let region = if c.in_admissible_region && c.z > 0.0 {
            "interior"
        } else if c.z == 0.0 {
            "boundary"
        } else {
            "exterior"
        };
        let note = format!("{:?} {region}", c.kind);
        w.serialize(Row {
            note: &note,
            ..point("critical", id, &c.label, c.x, c.z)
        })?;
        if let Some(end) = c.line_end {
            w.serialize(Row {
                note: &note,
                ..point("critical", id, &c.label, end, c.z)
            })?;
        }
    }

    let icfg = cfg.tol.integrate_config();
    let mut traces: Vec<(String, OrbitTrace)> = Vec::new();
    let (_, from_origin) = run_orbit(&p, cfg.alpha, &icfg)?;
    traces.push((format!("O alpha={}", cfg.alpha), from_origin));
    let short = ksol_core::orbit::IntegrateConfig {
        s_max: icfg.s_max.min(60.0),
        ..icfg
    };
    for i in 1..=orbits {
        let seed = [x_max * i as f64 / (orbits + 1) as f64, 0.5 * z_max];
        let trace = integrate_from(0.0, seed, Chart::XZ, &p, &short);
        traces.push((format!("seed x={} z={}", seed[0], seed[1]), trace));
    }
    for (id, (label, trace)) in traces.iter().enumerate() {
        let inside = |x: f64, z: f64| x >= 0.0 && x <= 1.05 * x_max && z >= 0.0 && z <= 1.05 * z_max;
        for smp in trace.samples.iter().take_while(|s| inside(s.x, s.z)) {
            w.serialize(point("orbit", id, label, smp.x, smp.z))?;
        }
    }
    w.flush()?;
    Ok(())
}
