//! Integration of the local solution forward in s, event detection,
//! classification of the resulting orbit and invariant monitors.

pub mod rk;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::local::{picard_solve, picard_solve_at_a, Anchor, LocalSolution, PicardConfig};
use crate::phase::{root_unchecked, w_from_x, x_from_w, Chart, DimRegime, SolitonParams};
use rk::{bisect_event, Step, StepControl, StepStats, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrateConfig {
    pub step: StepControl,
    pub s_max: f64,
    pub z_blowup: f64,
    /// Asymptote event when gamma - X^{1/k} drops below this.
    pub asymptote_band: f64,
    pub event_tol: f64,
    pub conv_dist: f64,
    pub conv_rhs: f64,
    pub conv_span: f64,
    /// Stop at the first upward crossing of X_B.
    pub stop_at_x_b: bool,
}

impl Default for IntegrateConfig {
    fn default() -> Self {
        Self {
            step: StepControl::default(),
            s_max: 400.0,
            z_blowup: 1e9,
            asymptote_band: 1e-3,
            event_tol: 1e-10,
            conv_dist: 1e-7,
            conv_rhs: 1e-9,
            conv_span: 2.0,
            stop_at_x_b: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    B,
    A,
    Line,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    CrossedXB { upward: bool },
    ReachedAsymptote,
    ExitedRegion,
    ConvergedCritical { target: Target, x: f64, z: f64 },
    BlowUpZ,
    StepFloor,
    SMax,
}

impl EventKind {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, EventKind::CrossedXB { .. } | EventKind::ReachedAsymptote)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitEvent {
    pub s: f64,
    pub x: f64,
    pub z: f64,
    pub event: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub s: f64,
    pub x: f64,
    pub z: f64,
    /// (X_A^{1/k} - X^{1/k})^k when the sample was produced in the (W, V) chart.
    pub w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub params: SolitonParams,
    pub samples: Vec<OrbitSample>,
    pub events: Vec<OrbitEvent>,
    /// Number of leading samples taken from the local solution.
    pub local_prefix: usize,
    pub chart: Chart,
    pub stats: StepStats,
}

impl OrbitTrace {
    pub fn termination(&self) -> Option<&OrbitEvent> {
        self.events.iter().rev().find(|e| e.event.is_terminal())
    }

    pub fn last(&self) -> &OrbitSample {
        self.samples.last().expect("trace has samples")
    }

    pub fn first_crossing_x_b(&self) -> Option<f64> {
        self.events.iter().find_map(|e| match e.event {
            EventKind::CrossedXB { upward: true } => Some(e.s),
            _ => None,
        })
    }

    /// (X_s, Z_s) at a sample, evaluated in the chart that is regular there.
    pub fn rhs(&self, i: usize) -> [f64; 2] {
        let smp = &self.samples[i];
        xz_rhs(smp, &self.params)
    }

    pub fn span(&self) -> f64 {
        self.last().s - self.samples[0].s
    }
}

fn xz_rhs(smp: &OrbitSample, p: &SolitonParams) -> [f64; 2] {
    match smp.w {
        Some(w) if p.k > 1 => {
            // X_s = -(x / w)^{k-1} W_s
            let v = p.field_wv().eval([w, smp.z]);
            let x = root_unchecked(smp.x, p.k);
            let wr = root_unchecked(w, p.k);
            [-(x / wr).powi(p.k as i32 - 1) * v[0], v[1]]
        }
        _ => p.field_xz().eval([smp.x, smp.z]),
    }
}

struct ChartState {
    chart: Chart,
}

impl ChartState {
    fn to_xz(&self, y: [f64; 2], p: &SolitonParams) -> (f64, f64, Option<f64>) {
        match self.chart {
            Chart::XZ => (y[0], y[1], None),
            Chart::WV => (x_from_w(y[0].max(0.0), p), y[1], Some(y[0])),
        }
    }

    fn field(&self, p: &SolitonParams) -> crate::phase::PlaneField {
        match self.chart {
            Chart::XZ => p.field_xz(),
            Chart::WV => p.field_wv(),
        }
    }
}

#[derive(Clone, Copy)]
enum Ev {
    XB,
    Asymptote,
    Exit,
    Blowup,
}

fn event_value(ev: Ev, chart: Chart, y: [f64; 2], p: &SolitonParams, cfg: &IntegrateConfig) -> f64 {
    let x_big = match chart {
        Chart::XZ => y[0],
        Chart::WV => x_from_w(y[0].max(0.0), p),
    };
    match ev {
        Ev::XB => x_big - p.x_b,
        Ev::Asymptote => p.gamma - root_unchecked(x_big, p.k) - cfg.asymptote_band,
        Ev::Exit => match chart {
            Chart::XZ => p.x_exit() - y[0],
            Chart::WV => {
                let w_exit = (p.x_a_root() - p.gamma.min(p.x_a_root())).powi(p.k as i32);
                y[0] - w_exit
            }
        },
        Ev::Blowup => cfg.z_blowup - y[1],
    }
}

struct Convergence {
    since: Option<f64>,
}

fn convergence_probe(
    chart: Chart,
    y: [f64; 2],
    p: &SolitonParams,
    cfg: &IntegrateConfig,
) -> Option<(Target, f64, f64)> {
    let norm = |v: [f64; 2]| v[0].hypot(v[1]);
    match chart {
        Chart::XZ => {
            let rhs = norm(p.field_xz().eval(y));
            if rhs >= cfg.conv_rhs {
                return None;
            }
            if let Some(zb) = p.z_b.filter(|_| p.rho > 0.0) {
                if (y[0] - p.x_b).hypot(y[1] - zb) < cfg.conv_dist {
                    return Some((Target::B, p.x_b, zb));
                }
            }
            if p.regime() == DimRegime::Critical && y[0] > p.x_b && y[1] < cfg.conv_dist {
                return Some((Target::Line, y[0], 0.0));
            }
            if (p.x_a - y[0]).hypot(y[1]) < cfg.conv_dist {
                return Some((Target::A, p.x_a, 0.0));
            }
            None
        }
        Chart::WV => {
            let rhs = norm(p.field_wv().eval(y));
            if rhs >= cfg.conv_rhs {
                return None;
            }
            if p.regime() == DimRegime::Critical && y[1] < cfg.conv_dist {
                return Some((Target::Line, x_from_w(y[0].max(0.0), p), 0.0));
            }
            if y[0].hypot(y[1]) < cfg.conv_dist {
                return Some((Target::A, p.x_a, 0.0));
            }
            None
        }
    }
}

/// Integrate from an arbitrary state in the given chart.
pub fn integrate_from(
    s0: f64,
    state: [f64; 2],
    chart: Chart,
    p: &SolitonParams,
    cfg: &IntegrateConfig,
) -> OrbitTrace {
    let mut cs = ChartState { chart };
    let mut samples = Vec::new();
    let mut events = Vec::new();
    let (x, z, w) = cs.to_xz(state, p);
    samples.push(OrbitSample { s: s0, x, z, w });
    let asymptote_live = p.gamma <= p.x_a_root();
    let mut asymptote_seen = false;
    let mut conv = Convergence { since: None };
    let field0 = cs.field(p);
    let mut st = Stepper::new(&field0, s0, state, cfg.step);

    let push_event = |events: &mut Vec<OrbitEvent>, s: f64, y: [f64; 2], cs: &ChartState, ev: EventKind| {
        let (x, z, _) = cs.to_xz(y, p);
        events.push(OrbitEvent { s, x, z, event: ev });
    };

    loop {
        if st.s >= cfg.s_max {
            let y = st.y;
            push_event(&mut events, st.s, y, &cs, EventKind::SMax);
            break;
        }
        let field = cs.field(p);
        let (xb, _, _) = cs.to_xz(st.y, p);
        // resolve the approach to the asymptote on its own relaxation scale
        let mut h_cap = f64::INFINITY;
        if asymptote_live && !asymptote_seen && cs.chart == Chart::XZ {
            let gap = p.gamma_k() - xb;
            let xs = field.eval(st.y)[0];
            if gap > 0.0 && xs > 0.0 && p.gamma - root_unchecked(xb, p.k) < 10.0 * cfg.asymptote_band {
                h_cap = (gap / xs).max(cfg.step.h_min * 10.0);
            }
        }
        let step = match st.advance(&field, cfg.s_max, h_cap) {
            Ok(step) => step,
            Err(_) => {
                let y = st.y;
                push_event(&mut events, st.s, y, &cs, EventKind::StepFloor);
                break;
            }
        };

        let mut candidates: Vec<(f64, Ev)> = Vec::new();
        let checks: &[Ev] = &[Ev::XB, Ev::Asymptote, Ev::Exit, Ev::Blowup];
        for &ev in checks {
            if matches!(ev, Ev::Asymptote) && (!asymptote_live || asymptote_seen) {
                continue;
            }
            let g0 = event_value(ev, cs.chart, step.y0, p, cfg);
            let g1 = event_value(ev, cs.chart, step.y1, p, cfg);
            let crossed = match ev {
                Ev::XB => (g0 < 0.0) != (g1 < 0.0),
                _ => g0 > 0.0 && g1 <= 0.0,
            };
            if crossed {
                let chart = cs.chart;
                let g = move |y: [f64; 2]| event_value(ev, chart, y, p, cfg);
                let s_ev = bisect_event(&step, &g, cfg.event_tol);
                candidates.push((s_ev, ev));
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut terminal: Option<(f64, EventKind)> = None;
        for (s_ev, ev) in candidates {
            let y = step.eval(s_ev);
            let kind = match ev {
                Ev::XB => {
                    let upward = event_value(Ev::XB, cs.chart, step.y1, p, cfg) >= 0.0;
                    EventKind::CrossedXB { upward }
                }
                Ev::Asymptote => {
                    asymptote_seen = true;
                    EventKind::ReachedAsymptote
                }
                Ev::Exit => EventKind::ExitedRegion,
                Ev::Blowup => EventKind::BlowUpZ,
            };
            let stop_here = kind.is_terminal()
                || (cfg.stop_at_x_b && matches!(kind, EventKind::CrossedXB { upward: true }));
            push_event(&mut events, s_ev, y, &cs, kind);
            if stop_here {
                terminal = Some((s_ev, kind));
                break;
            }
        }
        if let Some((s_ev, _)) = terminal {
            let y = step.eval(s_ev);
            let (x, z, w) = cs.to_xz(y, p);
            if s_ev > samples.last().map_or(f64::NEG_INFINITY, |s: &OrbitSample| s.s) {
                samples.push(OrbitSample { s: s_ev, x, z, w });
            }
            break;
        }

        let (x, z, w) = cs.to_xz(step.y1, p);
        samples.push(OrbitSample { s: step.s1, x, z, w });

        match convergence_probe(cs.chart, step.y1, p, cfg) {
            Some((target, tx, tz)) => {
                let since = *conv.since.get_or_insert(step.s1);
                if step.s1 - since >= cfg.conv_span {
                    push_event(
                        &mut events,
                        step.s1,
                        step.y1,
                        &cs,
                        EventKind::ConvergedCritical { target, x: tx, z: tz },
                    );
                    break;
                }
            }
            None => conv.since = None,
        }

        // chart switching with hysteresis
        let xr = root_unchecked(x, p.k);
        let next = match cs.chart {
            Chart::XZ if xr > 0.75 * p.x_a_root() && xr < p.x_a_root() => Some(Chart::WV),
            Chart::WV if xr < 0.6 * p.x_a_root() => Some(Chart::XZ),
            _ => None,
        };
        if let Some(next) = next {
            let y = match next {
                Chart::WV => [w_from_x(x, p), z],
                Chart::XZ => [x, z],
            };
            cs.chart = next;
            let f = cs.field(p);
            st.reset(&f, y);
        }
    }
    OrbitTrace {
        params: *p,
        samples,
        events,
        local_prefix: 0,
        chart: cs.chart,
        stats: st.stats,
    }
}

/// Continue a local solution at O forward in s.
pub fn integrate(local: &LocalSolution, p: &SolitonParams, cfg: &IntegrateConfig) -> Result<OrbitTrace> {
    if local.anchor != Anchor::Origin {
        return Err(Error::Precondition("integrate expects a local solution at O".into()));
    }
    let (s0, y0) = local.handoff();
    let mut trace = integrate_from(s0, y0, Chart::XZ, p, cfg);
    let mut prefix: Vec<OrbitSample> = local
        .samples()
        .into_iter()
        .filter(|(s, _, _)| *s < s0)
        .map(|(s, x, z)| OrbitSample { s, x, z, w: None })
        .collect();
    let count = prefix.len();
    prefix.append(&mut trace.samples);
    trace.samples = prefix;
    trace.local_prefix = count;
    Ok(trace)
}

/// Integrate a field forward until `g` becomes non-negative or `s_end` is reached.
/// Returns the accepted steps' end points (s, y), with the crossing as the last one.
pub fn integrate_until(
    field: &dyn VectorField,
    s0: f64,
    y0: [f64; 2],
    s_end: f64,
    ctl: StepControl,
    g: &dyn Fn([f64; 2]) -> f64,
    event_tol: f64,
) -> (Vec<(f64, [f64; 2])>, bool) {
    let mut st = Stepper::new(field, s0, y0, ctl);
    let mut out = vec![(s0, y0)];
    while st.s < s_end {
        let step: Step = match st.advance(field, s_end, f64::INFINITY) {
            Ok(step) => step,
            Err(_) => return (out, false),
        };
        if g(step.y0) < 0.0 && g(step.y1) >= 0.0 {
            let neg = |y: [f64; 2]| -g(y);
            let s_ev = bisect_event(&step, &neg, event_tol);
            out.push((s_ev, step.eval(s_ev)));
            return (out, true);
        }
        out.push((step.s1, step.y1));
    }
    (out, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OrbitClass {
    TypeGamma,
    TypeB,
    GeneralizedB,
    TypeA { x_inf: f64 },
    GeneralizedA { x_inf: f64, d: f64 },
    NonAdmissible { s_exit: f64 },
    Undetermined { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitKind {
    TypeGamma,
    TypeB,
    GeneralizedB,
    TypeA,
    GeneralizedA,
    NonAdmissible,
    Undetermined,
}

impl OrbitClass {
    pub fn kind(&self) -> OrbitKind {
        match self {
            OrbitClass::TypeGamma => OrbitKind::TypeGamma,
            OrbitClass::TypeB => OrbitKind::TypeB,
            OrbitClass::GeneralizedB => OrbitKind::GeneralizedB,
            OrbitClass::TypeA { .. } => OrbitKind::TypeA,
            OrbitClass::GeneralizedA { .. } => OrbitKind::GeneralizedA,
            OrbitClass::NonAdmissible { .. } => OrbitKind::NonAdmissible,
            OrbitClass::Undetermined { .. } => OrbitKind::Undetermined,
        }
    }

    pub fn x_inf(&self) -> Option<f64> {
        match self {
            OrbitClass::TypeA { x_inf } | OrbitClass::GeneralizedA { x_inf, .. } => Some(*x_inf),
            _ => None,
        }
    }
}

impl std::fmt::Display for OrbitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OrbitKind::TypeGamma => "TypeGamma",
            OrbitKind::TypeB => "TypeB",
            OrbitKind::GeneralizedB => "GeneralizedB",
            OrbitKind::TypeA => "TypeA",
            OrbitKind::GeneralizedA => "GeneralizedA",
            OrbitKind::NonAdmissible => "NonAdmissible",
            OrbitKind::Undetermined => "Undetermined",
        };
        f.write_str(s)
    }
}

/// Exponent d of the n = 2k generalized-A tail, u ~ |x|^{-2(1+d)}.
pub fn generalized_a_exponent(x_inf: f64, k: u32) -> f64 {
    0.5 * root_unchecked(x_inf, k) - 1.0
}

fn tail_indices(trace: &OrbitTrace, fraction: f64) -> std::ops::Range<usize> {
    let s_end = trace.last().s;
    let s_start = trace.samples[trace.local_prefix.min(trace.samples.len() - 1)].s;
    let cut = s_end - fraction * (s_end - s_start);
    let first = trace.samples.partition_point(|smp| smp.s < cut);
    first..trace.samples.len()
}

fn looks_like_gamma(trace: &OrbitTrace, p: &SolitonParams) -> std::result::Result<(), String> {
    let idx = tail_indices(trace, 0.25);
    let tail = &trace.samples[idx];
    if tail.len() < 8 {
        return Err("tail too short".into());
    }
    let increasing = tail.windows(2).all(|w| w[1].z >= w[0].z && w[1].x >= w[0].x * (1.0 - 1e-12));
    if !increasing {
        return Err("X or Z not increasing along the tail".into());
    }
    if p.regime() == DimRegime::Critical {
        // no linear X term: the gap to the asymptote only has to keep closing
        let gaps: Vec<f64> = tail.iter().map(|smp| p.gamma - root_unchecked(smp.x, p.k)).collect();
        let closing = gaps.iter().all(|g| *g >= 0.0) && gaps.windows(2).all(|w| w[1] <= w[0]);
        if !closing {
            return Err("gap to the asymptote not closing".into());
        }
        return Ok(());
    }
    let kf = p.kf();
    let prod: Vec<f64> = tail
        .iter()
        .map(|smp| smp.z * (p.gamma - root_unchecked(smp.x, p.k)).powf(kf))
        .collect();
    let (lo, hi) = prod
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(lo > 0.0) || hi / lo > 1.05 {
        return Err(format!("Z (gamma - x)^k not settled (range {lo:.4e}..{hi:.4e})"));
    }
    Ok(())
}

pub fn classify_orbit(trace: &OrbitTrace, p: &SolitonParams) -> OrbitClass {
    let Some(term) = trace.termination() else {
        return OrbitClass::Undetermined {
            reason: "trace has no terminal event".into(),
        };
    };
    match term.event {
        EventKind::ExitedRegion => OrbitClass::NonAdmissible { s_exit: term.s },
        EventKind::ConvergedCritical { target, x, .. } => match target {
            Target::B => OrbitClass::TypeB,
            Target::A => OrbitClass::TypeA { x_inf: x },
            Target::Line => OrbitClass::GeneralizedA {
                x_inf: x,
                d: generalized_a_exponent(x, p.k),
            },
        },
        EventKind::BlowUpZ => match looks_like_gamma(trace, p) {
            Ok(()) => OrbitClass::TypeGamma,
            Err(reason) => OrbitClass::Undetermined { reason },
        },
        EventKind::SMax => {
            if let Ok(()) = looks_like_gamma(trace, p) {
                return OrbitClass::TypeGamma;
            }
            if p.regime() == DimRegime::Above && p.rho > 0.0 {
                let idx = tail_indices(trace, 0.5);
                let tail = &trace.samples[idx];
                let zmin = tail.iter().map(|s| s.z).fold(f64::INFINITY, f64::min);
                let zmax = tail.iter().map(|s| s.z).fold(0.0, f64::max);
                let xmax = tail.iter().map(|s| s.x).fold(0.0, f64::max);
                if zmin > 0.0 && zmax.is_finite() && xmax < p.x_exit() {
                    return OrbitClass::GeneralizedB;
                }
            }
            OrbitClass::Undetermined {
                reason: "s_max reached without a recognised tail".into(),
            }
        }
        EventKind::StepFloor => OrbitClass::Undetermined {
            reason: "step size fell below the floor".into(),
        },
        EventKind::CrossedXB { .. } => OrbitClass::Undetermined {
            reason: "integration stopped at X_B".into(),
        },
        EventKind::ReachedAsymptote => OrbitClass::Undetermined {
            reason: "integration stopped at the asymptote".into(),
        },
    }
}

/// Local solution at O plus integration with default controls.
pub fn run_orbit(p: &SolitonParams, alpha: f64, cfg: &IntegrateConfig) -> Result<(LocalSolution, OrbitTrace)> {
    let local = picard_solve(alpha, p, &PicardConfig::default())?;
    let trace = integrate(&local, p, cfg)?;
    Ok((local, trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    XDecreasingBelowXB,
    ZBelowLowerBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub s: f64,
    pub value: f64,
}

// Noise level of X_s = -(n-2k)(1 - a x) X + Z f(x): a relative state error
// at the integration tolerance is amplified by Z f'(x) on the stiff tail.
fn x_rhs_roundoff(smp: &OrbitSample, p: &SolitonParams) -> f64 {
    let x = root_unchecked(smp.x, p.k);
    if !(x < 1.0 / p.a) {
        return 0.0;
    }
    let f = p.f();
    let size = p.excess().abs() * smp.x + smp.z * (f.eval(x).abs() + f.deriv(x).abs() * x);
    (64.0 * f64::EPSILON + StepControl::default().rtol) * size
}

/// X non-decreasing while X <= X_B up to the first crossing of X_B, and
/// Z(s) >= Z(s_a) e^{-k rho (s - s_a)/theta} (1 - 1e-6) from the first sample.
pub fn monotonicity_monitor(trace: &OrbitTrace, p: &SolitonParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let cutoff = trace.first_crossing_x_b().unwrap_or(f64::INFINITY);
    for (i, smp) in trace.samples.iter().enumerate() {
        if smp.s > cutoff || smp.x > p.x_b {
            continue;
        }
        let xs = trace.rhs(i)[0];
        let tol = 1e-12 * (1.0 + smp.x.abs()) + x_rhs_roundoff(smp, p);
        if xs < -tol {
            out.push(Violation {
                kind: ViolationKind::XDecreasingBelowXB,
                s: smp.s,
                value: xs,
            });
        }
    }
    // the same check on the sampled values, catching perturbed traces
    for w in trace.samples.windows(2) {
        if w[1].s <= cutoff && w[1].x <= p.x_b && w[1].x < w[0].x * (1.0 - 1e-9) - 1e-300 {
            out.push(Violation {
                kind: ViolationKind::XDecreasingBelowXB,
                s: w[1].s,
                value: w[1].x - w[0].x,
            });
        }
    }
    let first = trace.samples[0];
    let rate = p.z_decay_rate();
    for smp in &trace.samples {
        if root_unchecked(smp.x, p.k) > p.gamma {
            break;
        }
        let bound = first.z * (rate * (smp.s - first.s)).exp() * (1.0 - 1e-6);
        if smp.z < bound {
            out.push(Violation {
                kind: ViolationKind::ZBelowLowerBound,
                s: smp.s,
                value: smp.z / bound,
            });
        }
    }
    out
}

/// Largest error of ln Z(s_{i+1}) - ln Z(s_i) against a fourth-order
/// quadrature of 2k(1 - 2a X^{1/k}) between consecutive samples.
pub fn log_z_identity_error(trace: &OrbitTrace, p: &SolitonParams) -> f64 {
    let kf = p.kf();
    let g = |x: f64| 2.0 * kf * (1.0 - 2.0 * p.a * root_unchecked(x, p.k));
    // dg/ds = -4 k a x_s, with x_s = x X_s / (k X)
    let gs = |i: usize| {
        let smp = &trace.samples[i];
        let xs = trace.rhs(i)[0];
        let x = root_unchecked(smp.x, p.k);
        -4.0 * kf * p.a * x * xs / (kf * smp.x)
    };
    let mut worst = 0.0f64;
    for i in trace.local_prefix..trace.samples.len().saturating_sub(1) {
        let (a, b) = (&trace.samples[i], &trace.samples[i + 1]);
        let h = b.s - a.s;
        if h <= 0.0 {
            continue;
        }
        let quad = 0.5 * h * (g(a.x) + g(b.x)) + h * h / 12.0 * (gs(i) - gs(i + 1));
        let diff = b.z.ln() - a.z.ln();
        worst = worst.max((diff - quad).abs());
    }
    worst
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Number of proper crossings between non-adjacent chords of the sampled curve.
/// Samples closer than `settle` to the final point are ignored.
pub fn self_intersections(trace: &OrbitTrace, settle: f64) -> usize {
    let last = trace.last();
    let pts: Vec<(f64, f64)> = trace
        .samples
        .iter()
        .take_while(|s| (s.x - last.x).hypot(s.z - last.z) > settle)
        .map(|s| (s.x, s.z))
        .collect();
    let n = pts.len();
    let mut count = 0;
    for i in 0..n.saturating_sub(1) {
        let (a, b) = (pts[i], pts[i + 1]);
        let (bx0, bx1) = (a.0.min(b.0), a.0.max(b.0));
        let (by0, by1) = (a.1.min(b.1), a.1.max(b.1));
        for j in i + 2..n.saturating_sub(1) {
            let (c, d) = (pts[j], pts[j + 1]);
            if c.0.max(d.0) < bx0 || c.0.min(d.0) > bx1 || c.1.max(d.1) < by0 || c.1.min(d.1) > by1 {
                continue;
            }
            let scale = 1e-12 * (1.0 + a.0.abs() + a.1.abs() + c.0.abs() + c.1.abs()).powi(2);
            let o1 = orient(a, b, c);
            let o2 = orient(a, b, d);
            let o3 = orient(c, d, a);
            let o4 = orient(c, d, b);
            if o1 * o2 < -scale * scale && o3 * o4 < -scale * scale {
                count += 1;
            }
        }
    }
    count
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierPoint {
    pub x: f64,
    pub z_origin: f64,
    pub v_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub points: Vec<BarrierPoint>,
    pub ordered: bool,
    pub min_gap: f64,
    pub slope_origin: f64,
    pub slope_a: f64,
    pub slopes_ordered: bool,
    /// f > h on (0, X_B^{1/k}), checked on a uniform scan.
    pub f_above_h: bool,
}

/// Monotone piecewise-cubic Hermite interpolation of y(x) with slopes dy/dx.
fn hermite_at(xs: &[f64], ys: &[f64], ds: &[f64], x: f64) -> Option<f64> {
    if xs.len() < 2 || x < xs[0] || x > xs[xs.len() - 1] {
        return None;
    }
    let i = xs.partition_point(|v| *v <= x).clamp(1, xs.len() - 1) - 1;
    let h = xs[i + 1] - xs[i];
    if h <= 0.0 {
        return Some(ys[i]);
    }
    let t = (x - xs[i]) / h;
    let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
    let h10 = t * (1.0 - t) * (1.0 - t);
    let h01 = t * t * (3.0 - 2.0 * t);
    let h11 = t * t * (t - 1.0);
    Some(h00 * ys[i] + h10 * h * ds[i] + h01 * ys[i + 1] + h11 * h * ds[i + 1])
}

/// Compare the orbit from O with the orbit into A on [x_lo, X_B]: the latter
/// is an upper barrier, Z(X) <= V_-(X).
pub fn barrier_compare(
    p: &SolitonParams,
    alpha: f64,
    alpha_bar: f64,
    x_lo: f64,
    samples: usize,
) -> Result<BarrierReport> {
    if p.regime() != DimRegime::Above {
        return Err(Error::NotApplicable("barrier comparison needs n > 2k".into()));
    }
    let cfg = PicardConfig::default();
    let origin = picard_solve(alpha, p, &cfg)?;
    let at_a = picard_solve_at_a(alpha_bar, p, &cfg)?;
    let ctl = StepControl::default();

    // origin orbit as Z(X) up to X_B
    let (s0, y0) = origin.handoff();
    let fxz = p.field_xz();
    let (pts, hit) = integrate_until(&fxz, s0, y0, s0 + 200.0, ctl, &|y| y[0] - p.x_b, 1e-12);
    if !hit {
        return Err(Error::Precondition("orbit from O did not reach X_B".into()));
    }
    let mut curve_o: Vec<(f64, f64)> = origin
        .samples()
        .into_iter()
        .filter(|(s, _, _)| *s < s0)
        .map(|(_, x, z)| (x, z))
        .collect();
    curve_o.extend(pts.iter().map(|(_, y)| (y[0], y[1])));

    // orbit into A, followed backwards in s as W grows to X_B
    let (t0, w0) = at_a.handoff();
    let frev = p.field_wv_reversed();
    let (pts_a, hit_a) = integrate_until(&frev, -t0, w0, -t0 + 200.0, ctl, &|y| y[0] - p.x_b, 1e-12);
    if !hit_a {
        return Err(Error::Precondition("orbit into A did not reach W = X_B".into()));
    }
    let mut curve_a: Vec<(f64, f64)> = at_a
        .samples()
        .into_iter()
        .rev()
        .filter(|(s, _, _)| *s > t0)
        .map(|(_, w, v)| (w, v))
        .collect();
    curve_a.extend(pts_a.iter().map(|(_, y)| (y[0], y[1])));

    let build = |curve: &[(f64, f64)], slope: &dyn Fn(f64, f64) -> f64| {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut ds = Vec::new();
        for &(x, z) in curve {
            if xs.last().is_some_and(|prev| x <= *prev) {
                continue;
            }
            xs.push(x);
            ys.push(z);
            ds.push(slope(x, z));
        }
        (xs, ys, ds)
    };
    let so = |x: f64, z: f64| {
        let v = fxz.eval([x, z]);
        v[1] / v[0]
    };
    let sa = |w: f64, v: f64| {
        let r = frev.eval([w, v]);
        r[1] / r[0]
    };
    let (ox, oy, od) = build(&curve_o, &so);
    let (ax, ay, ad) = build(&curve_a, &sa);

    let mut points = Vec::with_capacity(samples);
    let mut min_gap = f64::INFINITY;
    for i in 0..samples {
        let x = x_lo + (p.x_b - x_lo) * i as f64 / (samples - 1) as f64;
        let (Some(zo), Some(va)) = (hermite_at(&ox, &oy, &od, x), hermite_at(&ax, &ay, &ad, x)) else {
            return Err(Error::Precondition(format!("X = {x} not covered by both orbits")));
        };
        min_gap = min_gap.min(va - zo);
        points.push(BarrierPoint { x, z_origin: zo, v_a: va });
    }
    let slope_origin = p.nf() / p.f0();
    let slope_a = p.nf() / p.h0();
    let (f, h) = (p.f(), p.h());
    let xr = p.x_b_root();
    let f_above_h = (1..1000).all(|i| {
        let x = xr * i as f64 / 1000.0;
        f.eval(x) > h.eval(x)
    });
    Ok(BarrierReport {
        ordered: min_gap >= 0.0,
        points,
        min_gap,
        slope_origin,
        slope_a,
        slopes_ordered: slope_origin <= slope_a,
        f_above_h,
    })
}
