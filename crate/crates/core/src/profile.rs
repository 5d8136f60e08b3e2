//! Profile u(r) reconstructed from an orbit, its asymptotics, the residual
//! of the radial elliptic equation, the soliton potential and the
//! self-similar flow built from the profile.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orbit::{OrbitClass, OrbitTrace};
use crate::phase::{root_unchecked, DimRegime, SolitonParams};
use crate::sigma::{binomial_f64, radial_schouten_eigenvalues, radial_sigma_l, RadialEigenPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub s: f64,
    pub r: f64,
    pub u: f64,
    pub u_r: f64,
    pub u_rr: f64,
    pub ln_u: f64,
    /// r u_r / u
    pub q: f64,
    /// r^2 u_rr / u
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub params: SolitonParams,
    pub rows: Vec<ProfileRow>,
    /// u(0) from the local solution, when known.
    pub u0: Option<f64>,
}

impl ProfileRow {
    pub fn eigen(&self, p: &SolitonParams) -> Result<RadialEigenPair> {
        radial_schouten_eigenvalues(self.u, self.u_r, self.u_rr, self.r, p.n, p.k)
    }

    /// r^2 lambda1, r^2 lambda2 from the dimensionless ratios r u_r/u, r^2 u_rr/u.
    pub fn scaled_eigen(&self, p: &SolitonParams) -> (f64, f64) {
        let (q, kappa) = (self.q, self.kappa);
        let m = p.m;
        let l1 = -0.5 * (1.0 - m) * (kappa - 0.25 * (5.0 - m) * q * q);
        let l2 = -0.5 * (1.0 - m) * q * (1.0 + 0.25 * (1.0 - m) * q);
        (l1, l2)
    }

    /// r^2 u^{1-m} = Z^{1/k}, computed in log space.
    pub fn w(&self, p: &SolitonParams) -> f64 {
        (2.0 * self.s + (1.0 - p.m) * self.ln_u).exp()
    }

    /// (X, Z) recomputed from the row.
    pub fn phase_state(&self, p: &SolitonParams) -> (f64, f64) {
        let kf = p.k as i32;
        ((-self.q).powi(kf), self.w(p).powi(kf))
    }
}

pub fn reconstruct_u(trace: &OrbitTrace, p: &SolitonParams) -> Result<ProfileTable> {
    let kf = p.kf();
    let mut rows = Vec::with_capacity(trace.samples.len());
    for (i, smp) in trace.samples.iter().enumerate() {
        if !(smp.x > 0.0 && smp.z > 0.0) {
            continue;
        }
        let s = smp.s;
        let r = s.exp();
        let ln_u = (smp.z.ln() / kf - 2.0 * s) / (1.0 - p.m);
        let u = ln_u.exp();
        let x = root_unchecked(smp.x, p.k);
        let xs_big = trace.rhs(i)[0];
        let x_s = x * xs_big / (kf * smp.x);
        let kappa = -(x_s - x - x * x);
        rows.push(ProfileRow {
            s,
            r,
            u,
            u_r: -u * x / r,
            u_rr: u * kappa / (r * r),
            ln_u,
            q: -x,
            kappa,
        });
    }
    if rows.is_empty() {
        return Err(Error::Precondition("trace has no admissible samples".into()));
    }
    Ok(ProfileTable {
        params: *p,
        rows,
        u0: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OriginCheck {
    pub u0: f64,
    /// Coefficient c in u^{m-1} = u0^{m-1} + c r^2 + o(r^2).
    pub predicted: f64,
    pub fitted: f64,
    pub rel_err: f64,
    /// Z/X at the smallest radius against n/f(0).
    pub ratio: f64,
    pub ratio_expected: f64,
}

pub fn origin_expansion_check(table: &ProfileTable, p: &SolitonParams) -> Result<OriginCheck> {
    let u0 = table
        .u0
        .ok_or_else(|| Error::Precondition("table carries no u(0)".into()))?;
    let kf = p.kf();
    let predicted = 0.5 * (1.0 - p.m) * (p.f0() / p.nf()).powf(1.0 / kf);
    let base = u0.powf(p.m - 1.0);
    let count = 16.min(table.rows.len());
    let (mut num, mut den) = (0.0, 0.0);
    for row in &table.rows[..count] {
        let r2 = row.r * row.r;
        num += r2 * (row.u.powf(p.m - 1.0) - base);
        den += r2 * r2;
    }
    let fitted = num / den;
    let (x, z) = table.rows[0].phase_state(p);
    Ok(OriginCheck {
        u0,
        predicted,
        fitted,
        rel_err: ((fitted - predicted) / predicted).abs(),
        ratio: z / x,
        ratio_expected: p.nf() / p.f0(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogFit {
    pub exponent: f64,
    pub log_power: f64,
    pub r2: f64,
    pub s_from: f64,
    pub s_to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    /// Slope of ln u against ln r over the final decade in r, weights ∝ r.
    pub exponent: f64,
    pub r2: f64,
    pub r_from: f64,
    pub r_to: f64,
    /// ln u = c + p ln r + q ln ln r over the final half of the s-span.
    pub with_log: Option<LogFit>,
}

/// Weighted least squares with design rows `cols`; returns coefficients and R^2.
pub fn weighted_lsq(cols: &[Vec<f64>], y: &[f64], w: &[f64]) -> (Vec<f64>, f64) {
    let p = cols.len();
    let n = y.len();
    let mut ata = vec![vec![0.0; p]; p];
    let mut atb = vec![0.0; p];
    for i in 0..n {
        for a in 0..p {
            atb[a] += w[i] * cols[a][i] * y[i];
            for b in 0..p {
                ata[a][b] += w[i] * cols[a][i] * cols[b][i];
            }
        }
    }
    // Gaussian elimination with partial pivoting
    let mut aug: Vec<Vec<f64>> = ata
        .into_iter()
        .zip(atb)
        .map(|(mut row, b)| {
            row.push(b);
            row
        })
        .collect();
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, piv);
        for row in col + 1..p {
            let f = aug[row][col] / aug[col][col];
            for c in col..=p {
                aug[row][c] -= f * aug[col][c];
            }
        }
    }
    let mut coef = vec![0.0; p];
    for row in (0..p).rev() {
        let mut acc = aug[row][p];
        for c in row + 1..p {
            acc -= aug[row][c] * coef[c];
        }
        coef[row] = acc / aug[row][row];
    }
    let wsum: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let pred: f64 = (0..p).map(|a| coef[a] * cols[a][i]).sum();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (coef, r2)
}

pub fn tail_rate(table: &ProfileTable) -> Result<TailFit> {
    let rows = &table.rows;
    let s_end = rows.last().map(|r| r.s).unwrap_or(0.0);
    let s_cut = s_end - std::f64::consts::LN_10;
    if rows.first().is_none_or(|r| r.s > s_cut) {
        return Err(Error::InsufficientTail(format!(
            "profile spans less than a decade in r (s up to {s_end})"
        )));
    }
    let tail: Vec<&ProfileRow> = rows.iter().filter(|r| r.s >= s_cut).collect();
    if tail.len() < 5 {
        return Err(Error::InsufficientTail(format!(
            "only {} samples in the final decade",
            tail.len()
        )));
    }
    let ones = vec![1.0; tail.len()];
    let lnr: Vec<f64> = tail.iter().map(|r| r.s).collect();
    let lnu: Vec<f64> = tail.iter().map(|r| r.ln_u).collect();
    // weights ∝ r, normalised at the end of the window to stay finite
    let w: Vec<f64> = tail.iter().map(|r| (r.s - s_end).exp()).collect();
    let (coef, r2) = weighted_lsq(&[ones, lnr], &lnu, &w);

    let s_start = rows[0].s;
    let s_half = s_end - 0.5 * (s_end - s_start);
    let log_rows: Vec<&ProfileRow> = rows.iter().filter(|r| r.s >= s_half.max(1.5)).collect();
    let with_log = if log_rows.len() >= 8 && s_end - s_half.max(1.5) > 5.0 {
        let ones = vec![1.0; log_rows.len()];
        let s: Vec<f64> = log_rows.iter().map(|r| r.s).collect();
        let lns: Vec<f64> = s.iter().map(|v| v.ln()).collect();
        let y: Vec<f64> = log_rows.iter().map(|r| r.ln_u).collect();
        let w = vec![1.0; log_rows.len()];
        let (c, r2) = weighted_lsq(&[ones, s.clone(), lns], &y, &w);
        Some(LogFit {
            exponent: c[1],
            log_power: c[2],
            r2,
            s_from: s[0],
            s_to: s_end,
        })
    } else {
        None
    };
    Ok(TailFit {
        exponent: coef[1],
        r2,
        r_from: s_cut.exp(),
        r_to: s_end.exp(),
        with_log,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedRate {
    /// u ~ r^{exponent} (ln r)^{log_power}
    pub exponent: f64,
    pub log_power: Option<f64>,
}

pub fn expected_rate(p: &SolitonParams, class: &OrbitClass) -> Result<ExpectedRate> {
    let one_m = 1.0 - p.m;
    let plain = |e: f64| {
        Ok(ExpectedRate {
            exponent: e,
            log_power: None,
        })
    };
    match class {
        OrbitClass::TypeGamma => {
            if p.rho != 0.0 {
                plain(-(2.0 + p.rho / p.theta) / one_m)
            } else {
                match p.regime() {
                    DimRegime::Above => Ok(ExpectedRate {
                        exponent: -2.0 / one_m,
                        log_power: Some(1.0 / one_m),
                    }),
                    DimRegime::Critical => Ok(ExpectedRate {
                        exponent: -2.0,
                        log_power: Some((p.kf() - 1.0) / p.kf()),
                    }),
                    DimRegime::Below => Err(Error::NotApplicable(
                        "no steady type-gamma rate for n < 2k".into(),
                    )),
                }
            }
        }
        OrbitClass::TypeB | OrbitClass::GeneralizedB => plain(-2.0 / one_m),
        OrbitClass::TypeA { .. } => plain(-4.0 / one_m),
        OrbitClass::GeneralizedA { d, .. } => plain(-2.0 * (1.0 + d)),
        OrbitClass::NonAdmissible { .. } | OrbitClass::Undetermined { .. } => Err(
            Error::NotApplicable("no asymptotic rate for this class".into()),
        ),
    }
}

/// Slope of ln Z against s over the final `span` units of s.
pub fn z_exponent(trace: &OrbitTrace, span: f64) -> Result<(f64, f64)> {
    let s_end = trace.last().s;
    let tail: Vec<_> = trace.samples.iter().filter(|s| s.s >= s_end - span).collect();
    if tail.len() < 5 {
        return Err(Error::InsufficientTail("too few samples for a Z fit".into()));
    }
    let ones = vec![1.0; tail.len()];
    let s: Vec<f64> = tail.iter().map(|v| v.s).collect();
    let y: Vec<f64> = tail.iter().map(|v| v.z.ln()).collect();
    let (c, r2) = weighted_lsq(&[ones, s], &y, &vec![1.0; tail.len()]);
    Ok((c[1], r2))
}

/// Affine fit of Z^{1/k} against s over the final `fraction` of the span.
pub fn z_root_affine(trace: &OrbitTrace, p: &SolitonParams, fraction: f64) -> Result<(f64, f64, f64)> {
    let s_end = trace.last().s;
    let s0 = trace.samples[trace.local_prefix].s;
    let cut = s_end - fraction * (s_end - s0);
    let tail: Vec<_> = trace.samples.iter().filter(|s| s.s >= cut).collect();
    if tail.len() < 5 {
        return Err(Error::InsufficientTail("too few samples for an affine fit".into()));
    }
    let ones = vec![1.0; tail.len()];
    let s: Vec<f64> = tail.iter().map(|v| v.s).collect();
    let y: Vec<f64> = tail.iter().map(|v| root_unchecked(v.z, p.k)).collect();
    let (c, r2) = weighted_lsq(&[ones, s], &y, &vec![1.0; tail.len()]);
    Ok((c[1], c[0], r2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_rel: f64,
    pub rows_checked: usize,
    pub rejected: usize,
    pub worst_r: f64,
}

/// Residual of lambda1 + ((n-k)/k) lambda2 = C(n-1,k-1)^{-1} lambda2^{1-k}
/// u^{4k^2/(n+2k)} (2 theta + rho + (1-m) theta r u_r/u)^k, after multiplying
/// through by r^2 and normalising by the size of the terms. Rows with
/// lambda2 <= 0 (outside the admissible cone for k >= 2) are rejected.
pub fn elliptic_residual(table: &ProfileTable, p: &SolitonParams) -> ResidualReport {
    let kf = p.kf();
    let c = binomial_f64(p.n - 1, p.k - 1);
    let ratio = (p.nf() - kf) / kf;
    let mut report = ResidualReport {
        max_rel: 0.0,
        rows_checked: 0,
        rejected: 0,
        worst_r: f64::NAN,
    };
    for row in &table.rows {
        let (l1, l2) = row.scaled_eigen(p);
        if p.k > 1 && !(l2 > 0.0) {
            report.rejected += 1;
            continue;
        }
        let q = row.q;
        let lhs = l1 + ratio * l2;
        let bracket = 2.0 * p.theta + p.rho + (1.0 - p.m) * p.theta * q;
        let rhs = l2.powi(1 - p.k as i32) * row.w(p).powi(p.k as i32) * bracket.powi(p.k as i32) / c;
        let scale = l1.abs() + ratio * l2.abs() + rhs.abs();
        let rel = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
        report.rows_checked += 1;
        if rel > report.max_rel || rel.is_nan() {
            report.max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
            report.worst_r = row.r;
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiSample {
    pub s: f64,
    pub phi: f64,
    pub phi_s: f64,
    pub phi_ss: f64,
    /// Residual of phi_ss - w_s phi_s / (2w) = (sigma_k^{1/k}(g) - rho) w, raised to
    /// the k-th power and relative to the size of the terms of sigma_k.
    pub identity_residual: f64,
}

/// Potential with phi_s = 2 theta w, w = r^2 u^{4k/(n+2k)}, phi = 0 at the first row.
pub fn potential_phi(table: &ProfileTable, p: &SolitonParams) -> Vec<PhiSample> {
    let mut out: Vec<PhiSample> = Vec::with_capacity(table.rows.len());
    let mut phi = 0.0;
    let mut prev: Option<(f64, f64, f64)> = None;
    for row in &table.rows {
        let w = row.w(p);
        let q = row.q;
        // w_s / w = 2 + (1-m) r u_r / u
        let ws = w * (2.0 + (1.0 - p.m) * q);
        let phi_s = 2.0 * p.theta * w;
        let phi_ss = 2.0 * p.theta * ws;
        if let Some((s_prev, fs_prev, fss_prev)) = prev {
            let h = row.s - s_prev;
            phi += 0.5 * h * (fs_prev + phi_s) + h * h / 12.0 * (fss_prev - phi_ss);
        }
        prev = Some((row.s, phi_s, phi_ss));
        let (l1, l2) = row.scaled_eigen(p);
        let pair = RadialEigenPair {
            lambda1: l1,
            lambda2: l2,
            n: p.n,
            k: p.k,
        };
        let sk = radial_sigma_l(&pair, p.k).unwrap_or(f64::NAN);
        let abs_pair = RadialEigenPair {
            lambda1: l1.abs(),
            lambda2: l2.abs(),
            ..pair
        };
        let size = radial_sigma_l(&abs_pair, p.k).unwrap_or(f64::NAN);
        // compared as sigma_k = v^k: the k-th root of a cancelling sigma_k loses
        // all digits once the terms are much larger than the sum
        let lhs = phi_ss - ws * phi_s / (2.0 * w);
        let v = lhs + p.rho * w;
        let vk = v.signum() * v.abs().powi(p.k as i32);
        let scale = size + v.abs().powi(p.k as i32);
        out.push(PhiSample {
            s: row.s,
            phi,
            phi_s,
            phi_ss,
            identity_residual: (sk - vk).abs() / scale,
        });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlowKind {
    Shrinker { blowup_time: f64 },
    Expander,
    Steady,
}

/// The self-similar solution of the k-Yamabe flow generated by a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub params: SolitonParams,
    pub kind: FlowKind,
    lnr: Vec<f64>,
    lnu: Vec<f64>,
    slope: Vec<f64>,
    u0: Option<f64>,
}

pub fn flow_solution(table: &ProfileTable, p: &SolitonParams, blowup_time: f64) -> FlowSolution {
    let kind = if p.rho > 0.0 {
        FlowKind::Shrinker { blowup_time }
    } else if p.rho < 0.0 {
        FlowKind::Expander
    } else {
        FlowKind::Steady
    };
    FlowSolution {
        params: *p,
        kind,
        lnr: table.rows.iter().map(|r| r.s).collect(),
        lnu: table.rows.iter().map(|r| r.ln_u).collect(),
        slope: table.rows.iter().map(|r| r.q).collect(),
        u0: table.u0,
    }
}

impl FlowSolution {
    /// beta * gamma~ = 2 theta + rho
    pub fn time_exponent(&self) -> f64 {
        2.0 * self.params.theta + self.params.rho
    }

    pub fn profile(&self, eta: f64) -> Result<f64> {
        if eta < 0.0 {
            return Err(Error::Domain(format!("radius {eta} is negative")));
        }
        let first = self.lnr[0];
        let last = *self.lnr.last().unwrap();
        let le = if eta > 0.0 { eta.ln() } else { f64::NEG_INFINITY };
        if le < first {
            let u0 = self
                .u0
                .ok_or_else(|| Error::Domain("radius below the table without u(0)".into()))?;
            let p = &self.params;
            let c = 0.5 * (1.0 - p.m) * (p.f0() / p.nf()).powf(1.0 / p.kf());
            return Ok((u0.powf(p.m - 1.0) + c * eta * eta).powf(1.0 / (p.m - 1.0)));
        }
        if le > last {
            return Err(Error::Domain(format!("radius {eta} beyond the computed profile")));
        }
        let i = self.lnr.partition_point(|v| *v <= le).clamp(1, self.lnr.len() - 1) - 1;
        let h = self.lnr[i + 1] - self.lnr[i];
        let t = (le - self.lnr[i]) / h;
        let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
        let h10 = t * (1.0 - t) * (1.0 - t);
        let h01 = t * t * (3.0 - 2.0 * t);
        let h11 = t * t * (t - 1.0);
        let v = h00 * self.lnu[i] + h10 * h * self.slope[i] + h01 * self.lnu[i + 1] + h11 * h * self.slope[i + 1];
        Ok(v.exp())
    }

    /// ū(|x|, t).
    pub fn eval(&self, radius: f64, t: f64) -> Result<f64> {
        let beta = self.params.beta;
        let e = self.time_exponent();
        match self.kind {
            FlowKind::Shrinker { blowup_time } => {
                let tau = blowup_time - t;
                if !(tau > 0.0) {
                    return Err(Error::Domain(format!("t = {t} is past the blow-up time")));
                }
                Ok(tau.powf(e) * self.profile(radius * tau.powf(beta))?)
            }
            FlowKind::Expander => {
                if !(t > 0.0) {
                    return Err(Error::Domain(format!("expanders need t > 0, got {t}")));
                }
                Ok(t.powf(-e) * self.profile(radius * t.powf(-beta))?)
            }
            FlowKind::Steady => Ok((-e * t).exp() * self.profile(radius * (-beta * t).exp())?),
        }
    }
}

/// Build a table row directly from (r, u, u_r, u_rr); used by callers that
/// carry their own profiles.
pub fn row(r: f64, u: f64, u_r: f64, u_rr: f64) -> ProfileRow {
    ProfileRow {
        s: r.ln(),
        r,
        u,
        u_r,
        u_rr,
        ln_u: u.ln(),
        q: r * u_r / u,
        kappa: r * r * u_rr / u,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::make_params;

    #[test]
    fn lsq_recovers_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (c, r2) = weighted_lsq(&[vec![1.0; 20], x], &y, &[1.0; 20]);
        assert!((c[0] - 2.0).abs() < 1e-12 && (c[1] + 0.5).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_profile_is_not_a_solution() {
        let p = make_params(4, 1, 0.0, 1.0).unwrap();
        let table = ProfileTable {
            params: p,
            rows: (1..20).map(|i| row(0.1 * i as f64, 1.0, 0.0, 0.0)).collect(),
            u0: Some(1.0),
        };
        let rep = elliptic_residual(&table, &p);
        assert!(rep.max_rel > 0.5);
    }

    #[test]
    fn expected_rates() {
        let p = make_params(4, 1, -1.0, 1.0).unwrap();
        let e = expected_rate(&p, &OrbitClass::TypeGamma).unwrap();
        assert!((e.exponent + 1.5).abs() < 1e-14);
        let p = make_params(4, 1, 0.0, 1.0).unwrap();
        let e = expected_rate(&p, &OrbitClass::TypeGamma).unwrap();
        assert!((e.exponent + 3.0).abs() < 1e-14 && (e.log_power.unwrap() - 1.5).abs() < 1e-14);
        let p = make_params(4, 1, 1.0, 1.0).unwrap();
        assert!((expected_rate(&p, &OrbitClass::TypeB).unwrap().exponent + 3.0).abs() < 1e-14);
        let p = make_params(3, 2, 3.0, 1.0).unwrap();
        let e = expected_rate(&p, &OrbitClass::TypeA { x_inf: p.x_a }).unwrap();
        assert!((e.exponent + 3.5).abs() < 1e-14);
    }
}
