//! Parameters, the planar autonomous system in (X, Z) and its (W, V) chart
//! near A, Jacobians and critical points.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Error, Result};
use crate::field::{Mat2, VectorField};
use crate::sigma::{binomial_f64, MAX_BINOMIAL_N};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub n: u32,
    pub k: u32,
    pub rho: f64,
    pub theta: f64,
    pub m: f64,
    pub beta: f64,
    pub gamma: f64,
    pub c_nk: f64,
    /// k / (n + 2k)
    pub a: f64,
    pub x_a: f64,
    pub x_b: f64,
    pub z_b: Option<f64>,
    pub nu: f64,
}

pub fn make_params(n: u32, k: u32, rho: f64, theta: f64) -> Result<SolitonParams> {
    if n < 3 {
        return Err(param("n", format!("n = {n} must be at least 3")));
    }
    if n > MAX_BINOMIAL_N {
        return Err(param("n", format!("n = {n} exceeds {MAX_BINOMIAL_N}")));
    }
    if k == 0 || k > n {
        return Err(param("k", format!("k = {k} must lie in 1..={n}")));
    }
    if !rho.is_finite() {
        return Err(param("rho", "must be finite"));
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(param("theta", format!("theta = {theta} must be positive")));
    }
    if !(2.0 * theta + rho > 0.0) {
        return Err(param("rho", format!("2*theta + rho = {} must be positive", 2.0 * theta + rho)));
    }
    let (nf, kf) = (f64::from(n), f64::from(k));
    let m = (nf - 2.0 * kf) / (nf + 2.0 * kf);
    let beta = (1.0 - m) * theta;
    let gamma = ((nf + 2.0 * kf) / kf) * (2.0 * theta + rho) / (4.0 * theta);
    let a = kf / (nf + 2.0 * kf);
    let c_nk = (nf + 2.0 * kf) / (2f64.powi(k as i32) * binomial_f64(n - 1, k - 1))
        * a.powf(1.0 - kf);
    let x_a = (1.0 / a).powi(k as i32);
    let x_b = (0.5 / a).powi(k as i32);
    let z_b = if n > 2 * k && rho != 0.0 {
        Some((nf - 2.0 * kf) * binomial_f64(n - 1, k - 1) / (kf * (2.0 * rho).powi(k as i32)))
    } else {
        None
    };
    let nu = gamma - 1.0 / a;
    Ok(SolitonParams {
        n,
        k,
        rho,
        theta,
        m,
        beta,
        gamma,
        c_nk,
        a,
        x_a,
        x_b,
        z_b,
        nu,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DimRegime {
    /// n > 2k
    Above,
    /// n = 2k
    Critical,
    /// n < 2k
    Below,
}

impl SolitonParams {
    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    pub fn kf(&self) -> f64 {
        f64::from(self.k)
    }

    pub fn regime(&self) -> DimRegime {
        match self.n.cmp(&(2 * self.k)) {
            std::cmp::Ordering::Greater => DimRegime::Above,
            std::cmp::Ordering::Equal => DimRegime::Critical,
            std::cmp::Ordering::Less => DimRegime::Below,
        }
    }

    /// n - 2k as a float.
    pub fn excess(&self) -> f64 {
        self.nf() - 2.0 * self.kf()
    }

    pub fn gamma_k(&self) -> f64 {
        self.gamma.powi(self.k as i32)
    }

    pub fn x_a_root(&self) -> f64 {
        1.0 / self.a
    }

    pub fn x_b_root(&self) -> f64 {
        0.5 / self.a
    }

    /// Upper X bound of the admissible region, min(gamma^k, X_A).
    pub fn x_exit(&self) -> f64 {
        self.gamma_k().min(self.x_a)
    }

    pub fn f(&self) -> Profile {
        Profile {
            scale: self.c_nk * self.beta.powi(self.k as i32),
            a: self.a,
            base: self.gamma,
            dir: -1.0,
            k: self.k,
        }
    }

    pub fn h(&self) -> Profile {
        Profile {
            scale: self.c_nk * self.beta.powi(self.k as i32),
            a: self.a,
            base: self.nu,
            dir: 1.0,
            k: self.k,
        }
    }

    pub fn f0(&self) -> f64 {
        self.f().at_zero()
    }

    pub fn h0(&self) -> f64 {
        self.h().at_zero()
    }

    /// Exponent of Z along the expanding tail, Z ~ exp(-k rho s / theta).
    pub fn z_decay_rate(&self) -> f64 {
        -self.kf() * self.rho / self.theta
    }

    pub fn field_xz(&self) -> PlaneField {
        PlaneField::new(self, self.f(), 1.0)
    }

    pub fn field_wv(&self) -> PlaneField {
        PlaneField::new(self, self.h(), -1.0)
    }

    /// The (W, V) system with s reversed; same form as the (X, Z) system with f replaced by h.
    pub fn field_wv_reversed(&self) -> PlaneField {
        PlaneField::new(self, self.h(), 1.0)
    }
}

/// scale * (1 - a x) * ((base + dir x) / (1 - a x))^k. With (base, dir) = (gamma, -1)
/// this is f, with (nu, +1) it is h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub scale: f64,
    pub a: f64,
    pub base: f64,
    pub dir: f64,
    pub k: u32,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        let d = 1.0 - self.a * x;
        let num = (self.base + self.dir * x).powi(self.k as i32);
        if self.k == 1 {
            self.scale * num
        } else {
            self.scale * num * d.powi(1 - self.k as i32)
        }
    }

    pub fn at_zero(&self) -> f64 {
        self.scale * self.base.powi(self.k as i32)
    }

    /// d/dx = scale q^{k-1} [(k-1) a q + k dir].
    pub fn deriv(&self, x: f64) -> f64 {
        if self.k == 1 {
            return self.scale * self.dir;
        }
        let d = 1.0 - self.a * x;
        let q = (self.base + self.dir * x) / d;
        let kf = f64::from(self.k);
        self.scale * q.powi(self.k as i32 - 1) * ((kf - 1.0) * self.a * q + kf * self.dir)
    }

    /// P(x) - P(0) without cancellation for small x.
    pub fn excess(&self, x: f64) -> f64 {
        let t = self.dir * x / self.base;
        if self.base > 0.0 && t > -1.0 && self.a * x < 1.0 {
            let kf = f64::from(self.k);
            let l = (1.0 - kf) * (-self.a * x).ln_1p() + kf * t.ln_1p();
            self.at_zero() * l.exp_m1()
        } else {
            self.eval(x) - self.at_zero()
        }
    }
}

fn check_root_domain(x: f64, p: &SolitonParams, what: &str) -> Result<()> {
    if !(x >= 0.0) || !(x < p.x_a_root()) {
        return Err(domain(format!(
            "{what} argument {x} outside [0, {})",
            p.x_a_root()
        )));
    }
    Ok(())
}

pub fn f_profile(x: f64, p: &SolitonParams) -> Result<f64> {
    check_root_domain(x, p, "f")?;
    Ok(p.f().eval(x))
}

pub fn h_profile(w: f64, p: &SolitonParams) -> Result<f64> {
    check_root_domain(w, p, "h")?;
    Ok(p.h().eval(w))
}

/// X^{1/k} as exp(ln X / k), zero at zero.
pub fn kth_root(x: f64, k: u32) -> Result<f64> {
    if x < 0.0 || x.is_nan() {
        return Err(domain(format!("k-th root of negative value {x}")));
    }
    Ok(root_unchecked(x, k))
}

pub(crate) fn root_unchecked(x: f64, k: u32) -> f64 {
    if k == 1 {
        x
    } else if x == 0.0 {
        0.0
    } else if x > 0.0 {
        (x.ln() / f64::from(k)).exp()
    } else {
        // odd extension; only reached by trial stages that overshoot a boundary
        -((-x).ln() / f64::from(k)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub z: f64,
}

impl PhaseState {
    pub fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }
}

/// sign * ( -(n-2k)(1 - a y^{1/k}) Y + Z P(y^{1/k}),  2k Z (1 - 2a y^{1/k}) ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneField {
    pub k: u32,
    pub excess: f64,
    pub a: f64,
    pub m: f64,
    pub profile: Profile,
    pub sign: f64,
}

impl PlaneField {
    fn new(p: &SolitonParams, profile: Profile, sign: f64) -> Self {
        Self {
            k: p.k,
            excess: p.excess(),
            a: p.a,
            m: p.m,
            profile,
            sign,
        }
    }
}

impl VectorField for PlaneField {
    fn eval(&self, y: [f64; 2]) -> [f64; 2] {
        let r = root_unchecked(y[0], self.k);
        let kf = f64::from(self.k);
        let fx = -self.excess * (1.0 - self.a * r) * y[0] + y[1] * self.profile.eval(r);
        let fz = 2.0 * kf * y[1] * (1.0 - 2.0 * self.a * r);
        [self.sign * fx, self.sign * fz]
    }

    fn jacobian(&self, y: [f64; 2]) -> Mat2 {
        let k = self.k;
        let kf = f64::from(k);
        let r = root_unchecked(y[0], k);
        // dr/dY = r^{1-k} / k
        let dr = if k == 1 { 1.0 } else { r.powi(1 - k as i32) / kf };
        let fxx = -self.excess + self.m * (kf + 1.0) * r + y[1] * self.profile.deriv(r) * dr;
        let fxz = self.profile.eval(r);
        let fzx = -(1.0 - self.m) * y[1] * kf * dr;
        let fzz = 2.0 * kf - (1.0 - self.m) * kf * r;
        let s = self.sign;
        [[s * fxx, s * fxz], [s * fzx, s * fzz]]
    }
}

pub fn system_rhs(state: PhaseState, p: &SolitonParams) -> Result<(f64, f64)> {
    if state.x < 0.0 || state.x.is_nan() {
        return Err(domain(format!("X = {} is negative", state.x)));
    }
    let v = p.field_xz().eval([state.x, state.z]);
    Ok((v[0], v[1]))
}

pub fn system_rhs_a(w: f64, v: f64, p: &SolitonParams) -> Result<(f64, f64)> {
    if w < 0.0 || w.is_nan() {
        return Err(domain(format!("W = {w} is negative")));
    }
    let r = p.field_wv().eval([w, v]);
    Ok((r[0], r[1]))
}

pub fn jacobian(state: PhaseState, p: &SolitonParams) -> Result<Mat2> {
    if !(state.x > 0.0 && state.x < p.x_a) {
        return Err(domain(format!(
            "Jacobian needs 0 < X < X_A = {}, got {}",
            p.x_a, state.x
        )));
    }
    Ok(p.field_xz().jacobian([state.x, state.z]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigen2 {
    pub values: [Complex64; 2],
    /// Real eigenvectors, normalised to first component 1 when possible.
    pub vectors: Option<[[f64; 2]; 2]>,
}

impl Eigen2 {
    pub fn real_values(&self) -> Option<[f64; 2]> {
        if self.values.iter().all(|v| v.im == 0.0) {
            Some([self.values[0].re, self.values[1].re])
        } else {
            None
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        self.values[0].norm().max(self.values[1].norm())
    }
}

pub fn trace_det(m: &Mat2) -> (f64, f64) {
    (m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[1][0])
}

/// Closed-form eigen-decomposition from trace and determinant.
pub fn eigen2(m: &Mat2) -> Eigen2 {
    let (t, d) = trace_det(m);
    let disc = 0.25 * t * t - d;
    if disc < 0.0 {
        let im = (-disc).sqrt();
        return Eigen2 {
            values: [Complex64::new(0.5 * t, im), Complex64::new(0.5 * t, -im)],
            vectors: None,
        };
    }
    let sq = disc.sqrt();
    // larger eigenvalue first; the smaller one via d / l1 to avoid cancellation
    let l1 = 0.5 * t + if t >= 0.0 { sq } else { -sq };
    let l2 = if l1 != 0.0 { d / l1 } else { 0.5 * t - sq };
    let (l1, l2) = if l1 >= l2 { (l1, l2) } else { (l2, l1) };
    let vec_for = |l: f64| -> [f64; 2] {
        let scale = m.iter().flatten().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
        let tiny = 1e-14 * scale;
        if m[0][1].abs() > tiny {
            [1.0, (l - m[0][0]) / m[0][1]]
        } else if m[1][0].abs() > tiny {
            let v = [l - m[1][1], m[1][0]];
            if v[0].abs() > tiny {
                [1.0, v[1] / v[0]]
            } else {
                [0.0, 1.0]
            }
        } else if (l - m[0][0]).abs() <= (l - m[1][1]).abs() {
            [1.0, 0.0]
        } else {
            [0.0, 1.0]
        }
    };
    Eigen2 {
        values: [Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)],
        vectors: Some([vec_for(l1), vec_for(l2)]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CriticalKind {
    Saddle,
    Source,
    Attractor,
    Degenerate,
    DegenerateLine,
}

fn kind_from(e: &Eigen2) -> CriticalKind {
    let re = [e.values[0].re, e.values[1].re];
    if re.contains(&0.0) {
        CriticalKind::Degenerate
    } else if re.iter().all(|&v| v < 0.0) {
        CriticalKind::Attractor
    } else if re.iter().all(|&v| v > 0.0) {
        CriticalKind::Source
    } else {
        CriticalKind::Saddle
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Chart {
    XZ,
    WV,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linearization {
    pub matrix: Mat2,
    pub eigen: Eigen2,
    pub kind: CriticalKind,
}

pub fn restricted_jacobian_origin(p: &SolitonParams) -> Linearization {
    let kf = p.kf();
    let matrix = [[-p.excess(), p.f0()], [0.0, 2.0 * kf]];
    let eigen = eigen2(&matrix);
    Linearization {
        matrix,
        eigen,
        kind: kind_from(&eigen),
    }
}

/// Restricted Jacobian at A = (X_A, 0) in the (W, V) chart.
pub fn restricted_jacobian_a(p: &SolitonParams) -> Linearization {
    let kf = p.kf();
    let matrix = [[p.excess(), -p.h0()], [0.0, -2.0 * kf]];
    let eigen = eigen2(&matrix);
    Linearization {
        matrix,
        eigen,
        kind: kind_from(&eigen),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BLinearization {
    pub x: f64,
    pub z: f64,
    pub rhs_norm: f64,
    pub matrix: Mat2,
    pub trace: f64,
    pub det: f64,
    pub eigen: Eigen2,
    pub attractor: bool,
    /// Closed-form trace -((n-2k)/2) [((n+2k)/(2k))^k - (k-1)/k]; differs from `trace`.
    pub closed_form_trace: f64,
    /// n - 2k
    pub closed_form_det: f64,
}

pub fn jacobian_b(p: &SolitonParams) -> Result<BLinearization> {
    if p.regime() != DimRegime::Above {
        return Err(Error::NotApplicable(format!(
            "B exists only for n > 2k (n = {}, k = {})",
            p.n, p.k
        )));
    }
    let Some(z) = p.z_b else {
        return Err(Error::NotApplicable("B is absent for rho = 0".into()));
    };
    let x = p.x_b;
    let field = p.field_xz();
    let rhs = field.eval([x, z]);
    let matrix = field.jacobian([x, z]);
    let (trace, det) = trace_det(&matrix);
    let eigen = eigen2(&matrix);
    let kf = p.kf();
    let closed_form_trace = -0.5
        * p.excess()
        * (((p.nf() + 2.0 * kf) / (2.0 * kf)).powi(p.k as i32) - (kf - 1.0) / kf);
    Ok(BLinearization {
        x,
        z,
        rhs_norm: rhs[0].hypot(rhs[1]),
        matrix,
        trace,
        det,
        eigen,
        attractor: trace < 0.0 && det > 0.0,
        closed_form_trace,
        closed_form_det: p.excess(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub label: String,
    pub chart: Chart,
    pub x: f64,
    pub z: f64,
    pub kind: CriticalKind,
    pub eigen: Option<Eigen2>,
    pub in_admissible_region: bool,
    /// For the n = 2k line of critical points, the right end of the segment on Z = 0.
    pub line_end: Option<f64>,
}

pub fn critical_points(p: &SolitonParams) -> Vec<CriticalPoint> {
    let mut out = Vec::new();
    if p.regime() == DimRegime::Critical {
        out.push(CriticalPoint {
            label: "line".into(),
            chart: Chart::XZ,
            x: 0.0,
            z: 0.0,
            kind: CriticalKind::DegenerateLine,
            eigen: None,
            in_admissible_region: false,
            line_end: Some(p.x_exit()),
        });
        return out;
    }
    let o = restricted_jacobian_origin(p);
    out.push(CriticalPoint {
        label: "O".into(),
        chart: Chart::XZ,
        x: 0.0,
        z: 0.0,
        kind: o.kind,
        eigen: Some(o.eigen),
        in_admissible_region: false,
        line_end: None,
    });
    let a = restricted_jacobian_a(p);
    out.push(CriticalPoint {
        label: "A".into(),
        chart: Chart::XZ,
        x: p.x_a,
        z: 0.0,
        kind: a.kind,
        eigen: Some(a.eigen),
        in_admissible_region: (2.0 * p.theta + p.rho) / (4.0 * p.theta) > 1.0,
        line_end: None,
    });
    if let Ok(b) = jacobian_b(p) {
        out.push(CriticalPoint {
            label: "B".into(),
            chart: Chart::XZ,
            x: b.x,
            z: b.z,
            kind: kind_from(&b.eigen),
            eigen: Some(b.eigen),
            in_admissible_region: p.rho > 0.0,
            line_end: None,
        });
    }
    out
}

pub fn in_admissible_region(state: PhaseState, p: &SolitonParams) -> bool {
    state.z > 0.0 && state.x > 0.0 && state.x < p.x_exit()
}

/// X from the (W, V) chart coordinate W.
pub fn x_from_w(w: f64, p: &SolitonParams) -> f64 {
    (p.x_a_root() - root_unchecked(w, p.k)).powi(p.k as i32)
}

pub fn w_from_x(x: f64, p: &SolitonParams) -> f64 {
    (p.x_a_root() - root_unchecked(x, p.k)).powi(p.k as i32)
}
