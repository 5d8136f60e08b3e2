//! Local solutions emanating from O (and, mirrored, converging to A) as
//! fixed points of a Picard operator on the weighted variables
//! x̂ = e^{-2ks} X, ẑ = e^{-2ks} Z.
//!
//! In weighted form the system reads
//!   x̂_s = -n x̂ + P(0) ẑ + ĥ_1,   ẑ_s = ĝ,
//! and the operator is
//!   x̂ = c + ∫_{-∞}^s e^{-n(s-t)} ĥ dt + (P(0)/n) ∫_{-∞}^s ĝ dt,
//!   ẑ = n c / P(0) + ∫_{-∞}^s ĝ dt,
//! with ĥ = ĥ_1 - (P(0)/n) ĝ. Near A the (W, V) system with s reversed has
//! the same form with f replaced by h.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{root_unchecked, Profile, SolitonParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    Origin,
    PointA,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardConfig {
    pub grid_points: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub max_retries: usize,
    pub rate_limit: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            grid_points: 512,
            tol: 1e-10,
            max_iterations: 200,
            max_retries: 8,
            rate_limit: 0.9,
        }
    }
}

/// The fixed-point problem: dimensions, the profile P (f or h), the seed
/// amplitude c and the X-bound used for the first threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub anchor: Anchor,
    pub n: f64,
    pub k: u32,
    pub m: f64,
    pub profile: Profile,
    pub p0: f64,
    pub amp: f64,
    pub bound: f64,
}

impl Kernel {
    pub fn origin(p: &SolitonParams, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Param {
                name: "alpha",
                reason: format!("alpha = {alpha} must be positive"),
            });
        }
        let amp = alpha.powf((1.0 - p.m) * p.kf());
        Ok(Self {
            anchor: Anchor::Origin,
            n: p.nf(),
            k: p.k,
            m: p.m,
            profile: p.f(),
            p0: p.f0(),
            amp,
            bound: p.gamma_k().min(p.x_b),
        })
    }

    pub fn at_a(p: &SolitonParams, alpha_bar: f64) -> Result<Self> {
        let two_theta = 2.0 * p.theta;
        if p.rho == two_theta {
            return Err(Error::Degenerate("rho = 2 theta gives h(0) = 0".into()));
        }
        if p.rho < two_theta {
            return Err(Error::NotApplicable(
                "solutions converging to A need rho > 2 theta".into(),
            ));
        }
        if !(alpha_bar > 0.0) || !alpha_bar.is_finite() {
            return Err(Error::Param {
                name: "alpha",
                reason: format!("alpha_bar = {alpha_bar} must be positive"),
            });
        }
        Ok(Self {
            anchor: Anchor::PointA,
            n: p.nf(),
            k: p.k,
            m: p.m,
            profile: p.h(),
            p0: p.h0(),
            amp: alpha_bar,
            bound: p.x_b,
        })
    }

    pub fn kf(&self) -> f64 {
        f64::from(self.k)
    }

    /// Limit of the weighted second component.
    pub fn z_amp(&self) -> f64 {
        self.n * self.amp / self.p0
    }

    /// (ĥ, ĝ) at a grid point.
    fn forcing(&self, s: f64, xw: f64, zw: f64) -> (f64, f64) {
        let kf = self.kf();
        let r = (2.0 * s).exp() * root_unchecked(xw, self.k);
        let g = -kf * (1.0 - self.m) * zw * r;
        let h1 = kf * self.m * xw * r + zw * self.profile.excess(r);
        (h1 - (self.p0 / self.n) * g, g)
    }

    fn sup_deriv(&self) -> f64 {
        let r_max = root_unchecked(self.bound, self.k);
        let samples = 2000;
        let mut best = 0.0f64;
        for i in 0..=samples {
            let r = r_max * i as f64 / samples as f64;
            best = best.max(self.profile.deriv(r).abs());
        }
        1.05 * best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s0: f64,
    /// Lipschitz constant C with rate bound C e^{2 s}.
    pub lipschitz: f64,
}

impl Thresholds {
    pub fn certified_rate(&self, s0: f64) -> f64 {
        self.lipschitz * (2.0 * s0).exp()
    }
}

pub fn thresholds(kernel: &Kernel) -> Thresholds {
    let kf = kernel.kf();
    let n = kernel.n;
    let m = kernel.m;
    let amp = kernel.amp;
    let b = kernel.z_amp();
    let ratio = kernel.p0 / n;
    let q0 = (2.0 * amp).powf(1.0 / kf);
    let pm = (0.5 * amp).powf(1.0 / kf - 1.0);
    let big_m = kernel.sup_deriv();

    let s1 = (kernel.bound / (2.0 * amp)).ln() / (2.0 * kf);

    let ch = kf * m.abs() * 2.0 * amp * q0 + 2.0 * b * big_m * q0 + ratio * kf * (1.0 - m) * 2.0 * b * q0;
    let cg = kf * (1.0 - m) * 2.0 * b * q0;
    let rx = ch / (n + 2.0) + ratio * cg / 2.0;
    let s2 = 0.5 * (0.5 * amp / rx).min(b / cg).ln();

    let lh = m.abs() * (kf + 1.0) * q0
        + big_m * q0
        + 2.0 * b * big_m * pm / kf
        + ratio * kf * (1.0 - m) * q0
        + ratio * (1.0 - m) * 2.0 * b * pm;
    let lg = kf * (1.0 - m) * q0 + (1.0 - m) * 2.0 * b * pm;
    let lipschitz = (lh / (n + 2.0) + ratio * lg / 2.0).max(lg / 2.0);
    let s3 = 0.5 * (0.5 / lipschitz).ln();

    Thresholds {
        s1,
        s2,
        s3,
        s0: s1.min(s2).min(s3),
        lipschitz,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTail {
    pub grid: Vec<f64>,
    pub xw: Vec<f64>,
    pub zw: Vec<f64>,
}

impl WeightedTail {
    pub fn uniform(s_min: f64, s0: f64, points: usize) -> Vec<f64> {
        let h = (s0 - s_min) / (points - 1) as f64;
        (0..points)
            .map(|i| if i + 1 == points { s0 } else { s_min + h * i as f64 })
            .collect()
    }

    pub fn seed(kernel: &Kernel, grid: Vec<f64>) -> Self {
        let len = grid.len();
        Self {
            grid,
            xw: vec![kernel.amp; len],
            zw: vec![kernel.z_amp(); len],
        }
    }

    pub fn step(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// max over both components of sup |difference| relative to the seed scale.
    pub fn distance(&self, other: &Self, kernel: &Kernel) -> f64 {
        let dx = self
            .xw
            .iter()
            .zip(&other.xw)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let dz = self
            .zw
            .iter()
            .zip(&other.zw)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        (dx / kernel.amp).max(dz / kernel.z_amp())
    }
}

const STENCIL: usize = 6;

fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let nf = order as f64;
    for i in 0..order {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=order {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            let dp = nf * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (mut q0, mut q1) = (1.0, x);
                for j in 2..=order {
                    let jf = j as f64;
                    let q2 = ((2.0 * jf - 1.0) * x * q1 - (jf - 1.0) * q0) / jf;
                    q0 = q1;
                    q1 = q2;
                }
                let dq = nf * (x * q1 - q0) / (x * x - 1.0);
                weights[i] = 2.0 / ((1.0 - x * x) * dq * dq);
                break;
            }
        }
        nodes[i] = x;
    }
    (nodes, weights)
}

/// Product-integration weights on a uniform grid for one step [s_i, s_{i+1}]
/// against 1 and against e^{-n(s_{i+1}-t)}, using the degree-5 interpolant
/// through six neighbouring nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelQuadrature {
    pub h: f64,
    pub decay: f64,
    plain: [[f64; STENCIL]; STENCIL - 1],
    kernel: [[f64; STENCIL]; STENCIL - 1],
}

impl KernelQuadrature {
    pub fn new(h: f64, n: f64) -> Self {
        let (gx, gw) = gauss_legendre(10);
        let mut plain = [[0.0; STENCIL]; STENCIL - 1];
        let mut kernel = [[0.0; STENCIL]; STENCIL - 1];
        for pos in 0..STENCIL - 1 {
            for (x, w) in gx.iter().zip(&gw) {
                // map [-1,1] -> [pos, pos+1] in units of h
                let xi = pos as f64 + 0.5 * (x + 1.0);
                let wt = 0.5 * w * h;
                let ker = (-n * h * (pos as f64 + 1.0 - xi)).exp();
                for j in 0..STENCIL {
                    let mut l = 1.0;
                    for i in 0..STENCIL {
                        if i != j {
                            l *= (xi - i as f64) / (j as f64 - i as f64);
                        }
                    }
                    plain[pos][j] += wt * l;
                    kernel[pos][j] += wt * ker * l;
                }
            }
        }
        Self {
            h,
            decay: (-n * h).exp(),
            plain,
            kernel,
        }
    }

    fn stencil(len: usize, i: usize) -> (usize, usize) {
        let start = i.saturating_sub(2).min(len - STENCIL);
        (start, i - start)
    }

    /// Running integrals from the first node: (∫ e^{-n(s_i - t)} h dt, ∫ g dt) at each node,
    /// starting from the given values at node 0.
    pub fn accumulate(&self, h_vals: &[f64], g_vals: &[f64], h_init: f64, g_init: f64) -> (Vec<f64>, Vec<f64>) {
        let len = h_vals.len();
        let mut yh = Vec::with_capacity(len);
        let mut yg = Vec::with_capacity(len);
        yh.push(h_init);
        yg.push(g_init);
        for i in 0..len - 1 {
            let (start, pos) = Self::stencil(len, i);
            let mut ih = 0.0;
            let mut ig = 0.0;
            for j in 0..STENCIL {
                ih += self.kernel[pos][j] * h_vals[start + j];
                ig += self.plain[pos][j] * g_vals[start + j];
            }
            yh.push(self.decay * yh[i] + ih);
            yg.push(yg[i] + ig);
        }
        (yh, yg)
    }
}

/// Integrals over (-inf, s_min] assuming the integrand is c1 q + c2 q^2 + c3 q^3
/// with q = e^{2(t - s_min)}, fitted at three early grid nodes.
fn tail_integrals(vals: &[f64], grid: &[f64], n: f64) -> (f64, f64) {
    let idx = [0usize, (grid.len() / 32).max(1), (grid.len() / 16).max(2)];
    let mut mat = [[0.0; 3]; 3];
    let mut rhs = [0.0; 3];
    for (row, &j) in idx.iter().enumerate() {
        let q = (2.0 * (grid[j] - grid[0])).exp();
        mat[row] = [q, q * q, q * q * q];
        rhs[row] = vals[j];
    }
    let c = solve3(mat, rhs);
    let kernel = c[0] / (n + 2.0) + c[1] / (n + 4.0) + c[2] / (n + 6.0);
    let plain = c[0] / 2.0 + c[1] / 4.0 + c[2] / 6.0;
    (kernel, plain)
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let piv = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for c in col..3 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for c in row + 1..3 {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub ok: bool,
    /// Smallest relative distance to the boundary of the ball, negative when outside.
    pub x_slack: f64,
    pub z_slack: f64,
    pub bound_slack: f64,
}

/// Checks the pair against amp/2 <= x̂ <= 2 amp, z_amp/2 <= ẑ <= 2 z_amp and X <= bound.
pub fn verify_membership(tail: &WeightedTail, kernel: &Kernel) -> Membership {
    let (c, b) = (kernel.amp, kernel.z_amp());
    let mut x_slack = f64::INFINITY;
    let mut z_slack = f64::INFINITY;
    let mut bound_slack = f64::INFINITY;
    for ((s, xw), zw) in tail.grid.iter().zip(&tail.xw).zip(&tail.zw) {
        x_slack = x_slack.min((xw - 0.5 * c) / c).min((2.0 * c - xw) / c);
        z_slack = z_slack.min((zw - 0.5 * b) / b).min((2.0 * b - zw) / b);
        let big_x = (2.0 * kernel.kf() * s).exp() * xw;
        bound_slack = bound_slack.min((kernel.bound - big_x) / kernel.bound);
    }
    Membership {
        ok: x_slack >= 0.0 && z_slack >= 0.0 && bound_slack >= 0.0,
        x_slack,
        z_slack,
        bound_slack,
    }
}

pub fn apply_e(tail: &WeightedTail, kernel: &Kernel) -> Result<WeightedTail> {
    let mem = verify_membership(tail, kernel);
    if !mem.ok {
        return Err(Error::Precondition(format!(
            "pair outside the invariant ball (slacks x {:.3e}, z {:.3e}, bound {:.3e})",
            mem.x_slack, mem.z_slack, mem.bound_slack
        )));
    }
    let quad = KernelQuadrature::new(tail.step(), kernel.n);
    Ok(apply_with(tail, kernel, &quad))
}

fn apply_with(tail: &WeightedTail, kernel: &Kernel, quad: &KernelQuadrature) -> WeightedTail {
    let len = tail.grid.len();
    let mut hv = Vec::with_capacity(len);
    let mut gv = Vec::with_capacity(len);
    for i in 0..len {
        let (h, g) = kernel.forcing(tail.grid[i], tail.xw[i], tail.zw[i]);
        hv.push(h);
        gv.push(g);
    }
    let (th, _) = tail_integrals(&hv, &tail.grid, kernel.n);
    let (_, tg) = tail_integrals(&gv, &tail.grid, kernel.n);
    let (yh, yg) = quad.accumulate(&hv, &gv, th, tg);
    let ratio = kernel.p0 / kernel.n;
    let xw = yh
        .iter()
        .zip(&yg)
        .map(|(a, b)| kernel.amp + a + ratio * b)
        .collect();
    let zw = yg.iter().map(|b| kernel.z_amp() + b).collect();
    WeightedTail {
        grid: tail.grid.clone(),
        xw,
        zw,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolution {
    pub anchor: Anchor,
    pub params: SolitonParams,
    pub kernel: Kernel,
    /// Operator parameter: alpha with seed alpha^{(1-m)k} at O, alpha_bar at A.
    pub alpha: f64,
    /// u(0) implied by the weighted Z limit (origin solutions only).
    pub u0: Option<f64>,
    pub s0: f64,
    pub s_min: f64,
    pub thresholds: Thresholds,
    /// Grid in the construction variable: s at O, -s at A.
    pub tail: WeightedTail,
    pub contraction_rate: f64,
    pub certified_rate: f64,
    pub iterations: usize,
    pub retries: usize,
    pub sup_residual: f64,
    pub step_norms: Vec<f64>,
    pub limit_x: f64,
    pub limit_z: f64,
}

impl LocalSolution {
    fn orient(&self, t: f64) -> f64 {
        match self.anchor {
            Anchor::Origin => t,
            Anchor::PointA => -t,
        }
    }

    /// Unweighted samples (s, first, second) in increasing s; (X, Z) at O, (W, V) at A.
    pub fn samples(&self) -> Vec<(f64, f64, f64)> {
        let kf = self.kernel.kf();
        let mut out: Vec<(f64, f64, f64)> = self
            .tail
            .grid
            .iter()
            .zip(&self.tail.xw)
            .zip(&self.tail.zw)
            .map(|((t, x), z)| {
                let e = (2.0 * kf * t).exp();
                (self.orient(*t), e * x, e * z)
            })
            .collect();
        if self.anchor == Anchor::PointA {
            out.reverse();
        }
        out
    }

    /// State at the handoff point s0 (O) or -s0 (A), in true s.
    pub fn handoff(&self) -> (f64, [f64; 2]) {
        let last = self.tail.grid.len() - 1;
        let t = self.tail.grid[last];
        let e = (2.0 * self.kernel.kf() * t).exp();
        (self.orient(t), [e * self.tail.xw[last], e * self.tail.zw[last]])
    }

    /// Largest mismatch between a high-order difference quotient of the weighted
    /// pair and the weighted vector field, relative to the seed scale.
    pub fn derivative_mismatch(&self) -> f64 {
        let k = &self.kernel;
        let t = &self.tail;
        let h = t.step();
        let c = [4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
        let mut worst = 0.0f64;
        for i in 4..t.grid.len() - 4 {
            let d = |v: &[f64]| {
                (0..4).map(|j| c[j] * (v[i + j + 1] - v[i - j - 1])).sum::<f64>() / h
            };
            let (hh, g) = k.forcing(t.grid[i], t.xw[i], t.zw[i]);
            let ratio = k.p0 / k.n;
            // x̂_s = -n x̂ + P(0) ẑ + ĥ + (P(0)/n) ĝ
            let fx = -k.n * t.xw[i] + k.p0 * t.zw[i] + hh + ratio * g;
            worst = worst
                .max((d(&t.xw) - fx).abs() / k.amp)
                .max((d(&t.zw) - g).abs() / k.z_amp());
        }
        worst
    }

    /// Ratio Z/X extrapolated to s -> -inf (O) or W/V limit at A.
    pub fn limit_ratio(&self) -> f64 {
        let ratios: Vec<f64> = self
            .tail
            .xw
            .iter()
            .zip(&self.tail.zw)
            .map(|(x, z)| z / x)
            .collect();
        extrapolate_limit(&self.tail.grid, &ratios)
    }
}

/// Least-squares cubic in q = e^{2s} over the first quarter of the grid,
/// evaluated at q = 0. q is normalised to 1 at the last node used.
pub fn extrapolate_limit(grid: &[f64], vals: &[f64]) -> f64 {
    let count = (grid.len() / 4).max(24).min(grid.len());
    let s_top = grid[count - 1];
    let mut ata = [[0.0; 4]; 4];
    let mut atb = [0.0; 4];
    for i in 0..count {
        let q = (2.0 * (grid[i] - s_top)).exp();
        let row = [1.0, q, q * q, q * q * q];
        for a in 0..4 {
            atb[a] += row[a] * vals[i];
            for b in 0..4 {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    solve_n(ata, atb)[0]
}

fn solve_n<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> [f64; N] {
    for col in 0..N {
        let piv = (col..N)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        if a[col][col] == 0.0 {
            continue;
        }
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for c in col..N {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for c in row + 1..N {
            acc -= a[row][c] * x[c];
        }
        x[row] = if a[row][row] == 0.0 { 0.0 } else { acc / a[row][row] };
    }
    x
}

fn solve_kernel(p: &SolitonParams, kernel: Kernel, alpha: f64, cfg: &PicardConfig) -> Result<LocalSolution> {
    if cfg.grid_points < 2 * STENCIL {
        return Err(Error::Param {
            name: "grid_points",
            reason: format!("need at least {} grid points", 2 * STENCIL),
        });
    }
    let th = thresholds(&kernel);
    let window = 12.0 / (2.0 * kernel.kf());
    let mut s0 = th.s0;
    let mut last_rate = f64::NAN;
    for retry in 0..=cfg.max_retries {
        let s_min = s0 - window;
        let grid = WeightedTail::uniform(s_min, s0, cfg.grid_points);
        let quad = KernelQuadrature::new(grid[1] - grid[0], kernel.n);
        let mut cur = WeightedTail::seed(&kernel, grid);
        let mut steps = Vec::new();
        let mut outside = false;
        let mut converged = false;
        for _ in 0..cfg.max_iterations {
            if !verify_membership(&cur, &kernel).ok {
                outside = true;
                break;
            }
            let next = apply_with(&cur, &kernel, &quad);
            let d = next.distance(&cur, &kernel);
            steps.push(d);
            cur = next;
            if d < cfg.tol {
                converged = true;
                break;
            }
        }
        let rate = empirical_rate(&steps);
        last_rate = rate;
        if outside || rate > cfg.rate_limit {
            s0 -= 0.5 * std::f64::consts::LN_2;
            continue;
        }
        if !converged {
            return Err(Error::NoConvergence {
                iterations: steps.len(),
                last_step: steps.last().copied().unwrap_or(f64::NAN),
            });
        }
        let residual = apply_with(&cur, &kernel, &quad).distance(&cur, &kernel);
        let limit_x = extrapolate_limit(&cur.grid, &cur.xw);
        let limit_z = extrapolate_limit(&cur.grid, &cur.zw);
        let u0 = match kernel.anchor {
            Anchor::Origin => Some(limit_z.powf(1.0 / ((1.0 - p.m) * p.kf()))),
            Anchor::PointA => None,
        };
        return Ok(LocalSolution {
            anchor: kernel.anchor,
            params: *p,
            kernel,
            alpha,
            u0,
            s0,
            s_min,
            thresholds: th,
            tail: cur,
            contraction_rate: rate,
            certified_rate: th.certified_rate(s0),
            iterations: steps.len(),
            retries: retry,
            sup_residual: residual,
            step_norms: steps,
            limit_x,
            limit_z,
        });
    }
    Err(Error::NoContraction {
        rate: last_rate,
        retries: cfg.max_retries,
    })
}

/// Largest ratio of consecutive step norms, ignoring steps already at round-off level.
fn empirical_rate(steps: &[f64]) -> f64 {
    let mut rate = 0.0f64;
    for w in steps.windows(2) {
        if w[0] > 1e-13 && w[1] > 1e-14 {
            rate = rate.max(w[1] / w[0]);
        }
    }
    rate
}

pub fn picard_solve(alpha: f64, p: &SolitonParams, cfg: &PicardConfig) -> Result<LocalSolution> {
    let kernel = Kernel::origin(p, alpha)?;
    solve_kernel(p, kernel, alpha, cfg)
}

pub fn picard_solve_at_a(alpha_bar: f64, p: &SolitonParams, cfg: &PicardConfig) -> Result<LocalSolution> {
    let kernel = Kernel::at_a(p, alpha_bar)?;
    solve_kernel(p, kernel, alpha_bar, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::make_params;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        for deg in 0..20 {
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((approx - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn quadrature_manufactured_oracle() {
        // h(t) = e^{bt} cos(ct) against the kernel, g(t) = e^{bt} sin(ct)
        let (n, b, c) = (4.0, 2.0, 3.0);
        let grid = WeightedTail::uniform(-6.0, 0.0, 512);
        let hv: Vec<f64> = grid.iter().map(|t| (b * t).exp() * (c * t).cos()).collect();
        let gv: Vec<f64> = grid.iter().map(|t| (b * t).exp() * (c * t).sin()).collect();
        let quad = KernelQuadrature::new(grid[1] - grid[0], n);
        let (yh, yg) = quad.accumulate(&hv, &gv, 0.0, 0.0);
        let z = num_complex::Complex64::new(n + b, c);
        let zg = num_complex::Complex64::new(b, c);
        for (i, s) in grid.iter().enumerate() {
            let s0 = grid[0];
            let exact_h = ((z * *s).exp() - (z * s0).exp()) / z * (-n * s).exp();
            let exact_g = ((zg * *s).exp() - (zg * s0).exp()) / zg;
            assert!((yh[i] - exact_h.re).abs() < 1e-10, "kernel at {s}");
            assert!((yg[i] - exact_g.im).abs() < 1e-10, "plain at {s}");
        }
    }

    #[test]
    fn tail_model_exact_for_power_series() {
        let grid = WeightedTail::uniform(-5.0, 0.0, 512);
        let n = 5.0;
        let vals: Vec<f64> = grid
            .iter()
            .map(|t| {
                let q = (2.0 * (t - grid[0])).exp();
                0.3 * q - 0.1 * q * q + 0.05 * q * q * q
            })
            .collect();
        let (k, p) = tail_integrals(&vals, &grid, n);
        assert!((k - (0.3 / 7.0 - 0.1 / 9.0 + 0.05 / 11.0)).abs() < 1e-13);
        assert!((p - (0.15 - 0.025 + 0.05 / 6.0)).abs() < 1e-13);
    }

    #[test]
    fn first_threshold_example() {
        let p = make_params(4, 1, 0.0, 1.0).unwrap();
        let th = thresholds(&Kernel::origin(&p, 1.0).unwrap());
        assert!((th.s1 - 0.5 * 1.5f64.ln()).abs() < 1e-14);
        assert!(th.s0 <= th.s1 && th.s0 <= th.s2 && th.s0 <= th.s3);
        assert!(th.certified_rate(th.s0) <= 0.5 + 1e-12);
    }

    #[test]
    fn mirrored_preconditions() {
        let cfg = PicardConfig::default();
        let p = make_params(4, 1, 2.0, 1.0).unwrap();
        assert!(matches!(picard_solve_at_a(1.0, &p, &cfg), Err(Error::Degenerate(_))));
        let p = make_params(4, 1, 1.0, 1.0).unwrap();
        assert!(matches!(picard_solve_at_a(1.0, &p, &cfg), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn membership_detects_scaled_tail() {
        let p = make_params(4, 1, 0.0, 1.0).unwrap();
        let kernel = Kernel::origin(&p, 1.0).unwrap();
        let th = thresholds(&kernel);
        let grid = WeightedTail::uniform(th.s0 - 6.0, th.s0, 64);
        let seed = WeightedTail::seed(&kernel, grid);
        assert!(verify_membership(&seed, &kernel).ok);
        let mut bad = seed.clone();
        bad.xw.iter_mut().for_each(|v| *v *= 3.0);
        assert!(!verify_membership(&bad, &kernel).ok);
        assert!(apply_e(&bad, &kernel).is_err());
    }
}
