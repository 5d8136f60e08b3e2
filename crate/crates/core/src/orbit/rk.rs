//! Adaptive integrator for planar autonomous systems: Dormand-Prince 5(4)
//! with PI step control and its native quartic dense output, switching to
//! an L-stable Rosenbrock 2(3) step (Shampine's ode23s scheme) whenever the
//! step is limited by explicit stability rather than accuracy.

use serde::{Deserialize, Serialize};

use crate::field::{Mat2, VectorField};
use crate::phase::eigen2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    /// Absolute tolerance per component; 0 gives pure relative control.
    pub atol: [f64; 2],
    pub h_init: f64,
    pub h_max: f64,
    pub h_min: f64,
    /// Switch to the implicit step when h * spectral radius exceeds this.
    pub stiff_limit: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            // Z = 0 is invariant and Z stays positive, so it is controlled relatively
            atol: [1e-14, 0.0],
            h_init: 1e-3,
            h_max: 0.1,
            h_min: 1e-13,
            stiff_limit: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Explicit,
    Rosenbrock,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dense {
    Dopri([[f64; 2]; 5]),
    Hermite,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub s0: f64,
    pub s1: f64,
    pub y0: [f64; 2],
    pub y1: [f64; 2],
    pub f0: [f64; 2],
    pub f1: [f64; 2],
    pub method: Method,
    dense: Dense,
}

impl Step {
    pub fn h(&self) -> f64 {
        self.s1 - self.s0
    }

    pub fn eval(&self, s: f64) -> [f64; 2] {
        let h = self.h();
        let t = ((s - self.s0) / h).clamp(0.0, 1.0);
        match self.dense {
            Dense::Dopri(r) => {
                let t1 = 1.0 - t;
                std::array::from_fn(|i| {
                    r[0][i] + t * (r[1][i] + t1 * (r[2][i] + t * (r[3][i] + t1 * r[4][i])))
                })
            }
            Dense::Hermite => {
                let h00 = (1.0 + 2.0 * t) * (1.0 - t) * (1.0 - t);
                let h10 = t * (1.0 - t) * (1.0 - t);
                let h01 = t * t * (3.0 - 2.0 * t);
                let h11 = t * t * (t - 1.0);
                std::array::from_fn(|i| {
                    let (m0, m1) = limited_slopes(self.y0[i], self.y1[i], h * self.f0[i], h * self.f1[i]);
                    h00 * self.y0[i] + h10 * m0 + h01 * self.y1[i] + h11 * m1
                })
            }
        }
    }
}

// Fritsch-Carlson limiter: keeps the cubic monotone on monotone data, so a
// noisy stiff derivative cannot push the interpolant outside [y0, y1].
fn limited_slopes(y0: f64, y1: f64, m0: f64, m1: f64) -> (f64, f64) {
    let d = y1 - y0;
    if d == 0.0 {
        return (0.0, 0.0);
    }
    let a = m0 / d;
    let b = m1 / d;
    if a < 0.0 || b < 0.0 {
        return (a.max(0.0) * d, b.max(0.0) * d);
    }
    let r = a.hypot(b);
    if r > 3.0 {
        let t = 3.0 / r;
        return (t * m0, t * m1);
    }
    (m0, m1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub explicit: usize,
    pub rosenbrock: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepFailure {
    StepFloor,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn axpy(y: [f64; 2], h: f64, terms: &[(f64, [f64; 2])]) -> [f64; 2] {
    std::array::from_fn(|i| y[i] + h * terms.iter().map(|(c, k)| c * k[i]).sum::<f64>())
}

fn finite(v: [f64; 2]) -> bool {
    v[0].is_finite() && v[1].is_finite()
}

fn solve2(m: &Mat2, b: [f64; 2]) -> [f64; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        (m[1][1] * b[0] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - m[1][0] * b[0]) / det,
    ]
}

pub struct Stepper {
    pub s: f64,
    pub y: [f64; 2],
    f: [f64; 2],
    h: f64,
    err_prev: f64,
    pub ctl: StepControl,
    pub stats: StepStats,
}

impl Stepper {
    pub fn new(field: &dyn VectorField, s: f64, y: [f64; 2], ctl: StepControl) -> Self {
        Self {
            s,
            y,
            f: field.eval(y),
            h: ctl.h_init,
            err_prev: 1e-4,
            ctl,
            stats: StepStats {
                evaluations: 1,
                ..StepStats::default()
            },
        }
    }

    /// Replace the state, e.g. after a change of chart.
    pub fn reset(&mut self, field: &dyn VectorField, y: [f64; 2]) {
        self.y = y;
        self.f = field.eval(y);
        self.stats.evaluations += 1;
        self.err_prev = 1e-4;
    }

    pub fn next_h(&self) -> f64 {
        self.h
    }

    fn err_norm(&self, y0: [f64; 2], y1: [f64; 2], err: [f64; 2]) -> f64 {
        let mut acc = 0.0;
        for i in 0..2 {
            let sc = self.ctl.atol[i] + self.ctl.rtol * y0[i].abs().max(y1[i].abs());
            acc += (err[i] / sc).powi(2);
        }
        (acc / 2.0).sqrt()
    }

    fn try_dopri(&mut self, field: &dyn VectorField, h: f64) -> (f64, [f64; 2], [f64; 2], Dense) {
        let y = self.y;
        let k1 = self.f;
        let k2 = field.eval(axpy(y, h, &[(A21, k1)]));
        let k3 = field.eval(axpy(y, h, &[(A31, k1), (A32, k2)]));
        let k4 = field.eval(axpy(y, h, &[(A41, k1), (A42, k2), (A43, k3)]));
        let k5 = field.eval(axpy(y, h, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
        let k6 = field.eval(axpy(y, h, &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)]));
        let y1 = axpy(y, h, &[(A71, k1), (A73, k3), (A74, k4), (A75, k5), (A76, k6)]);
        let k7 = field.eval(y1);
        self.stats.evaluations += 6;
        let err: [f64; 2] = std::array::from_fn(|i| {
            h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
        });
        let en = if finite(y1) && finite(k7) && finite(err) {
            self.err_norm(y, y1, err)
        } else {
            f64::INFINITY
        };
        let r1: [f64; 2] = std::array::from_fn(|i| y1[i] - y[i]);
        let r2: [f64; 2] = std::array::from_fn(|i| h * k1[i] - r1[i]);
        let r3: [f64; 2] = std::array::from_fn(|i| r1[i] - h * k7[i] - r2[i]);
        let r4: [f64; 2] = std::array::from_fn(|i| {
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
        });
        (en, y1, k7, Dense::Dopri([y, r1, r2, r3, r4]))
    }

    fn try_rosenbrock(&mut self, field: &dyn VectorField, h: f64, jac: &Mat2) -> (f64, [f64; 2], [f64; 2]) {
        let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
        let e32 = 6.0 + std::f64::consts::SQRT_2;
        let w = [
            [1.0 - h * d * jac[0][0], -h * d * jac[0][1]],
            [-h * d * jac[1][0], 1.0 - h * d * jac[1][1]],
        ];
        let y = self.y;
        let f0 = self.f;
        let k1 = solve2(&w, f0);
        let f1 = field.eval(axpy(y, 0.5 * h, &[(1.0, k1)]));
        let t = solve2(&w, [f1[0] - k1[0], f1[1] - k1[1]]);
        let k2 = [t[0] + k1[0], t[1] + k1[1]];
        let y1 = axpy(y, h, &[(1.0, k2)]);
        let f2 = field.eval(y1);
        let rhs: [f64; 2] =
            std::array::from_fn(|i| f2[i] - e32 * (k2[i] - f1[i]) - 2.0 * (k1[i] - f0[i]));
        let k3 = solve2(&w, rhs);
        self.stats.evaluations += 2;
        let err: [f64; 2] = std::array::from_fn(|i| h / 6.0 * (k1[i] - 2.0 * k2[i] + k3[i]));
        let en = if finite(y1) && finite(f2) && finite(err) {
            self.err_norm(y, y1, err)
        } else {
            f64::INFINITY
        };
        (en, y1, f2)
    }

    /// Take one accepted step, never beyond `s_end`.
    pub fn advance(&mut self, field: &dyn VectorField, s_end: f64, h_cap: f64) -> Result<Step, StepFailure> {
        loop {
            let remaining = s_end - self.s;
            let mut h = self.h.min(self.ctl.h_max).min(h_cap);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            if h < self.ctl.h_min && !last {
                return Err(StepFailure::StepFloor);
            }
            let jac = field.jacobian(self.y);
            let radius = eigen2(&jac).spectral_radius();
            let stiff = radius.is_finite() && h * radius > self.ctl.stiff_limit;
            let (en, y1, f1, dense, method) = if stiff {
                let (en, y1, f1) = self.try_rosenbrock(field, h, &jac);
                (en, y1, f1, Dense::Hermite, Method::Rosenbrock)
            } else {
                let (en, y1, f1, dense) = self.try_dopri(field, h);
                (en, y1, f1, dense, Method::Explicit)
            };
            if en <= 1.0 {
                let step = Step {
                    s0: self.s,
                    s1: if last { s_end } else { self.s + h },
                    y0: self.y,
                    y1,
                    f0: self.f,
                    f1,
                    method,
                    dense,
                };
                let fac = match method {
                    Method::Explicit => {
                        0.9 * en.max(1e-10).powf(-0.17) * self.err_prev.max(1e-10).powf(0.04)
                    }
                    Method::Rosenbrock => 0.9 * en.max(1e-10).powf(-1.0 / 3.0),
                };
                self.err_prev = en.max(1e-4);
                let grown = h * fac.clamp(0.2, 5.0);
                // do not let the final short step shrink the controller's proposal
                self.h = if last { self.h.max(grown) } else { grown };
                self.s = step.s1;
                self.y = y1;
                self.f = f1;
                self.stats.accepted += 1;
                match method {
                    Method::Explicit => self.stats.explicit += 1,
                    Method::Rosenbrock => self.stats.rosenbrock += 1,
                }
                return Ok(step);
            }
            self.stats.rejected += 1;
            let shrink = if en.is_finite() {
                let order = if stiff { 3.0 } else { 5.0 };
                (0.9 * en.powf(-1.0 / order)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            self.h = h * shrink;
            if self.h < self.ctl.h_min {
                return Err(StepFailure::StepFloor);
            }
        }
    }
}

/// Locate a sign change of g along a step by bisection on the dense output.
pub fn bisect_event(step: &Step, g: &dyn Fn([f64; 2]) -> f64, tol: f64) -> f64 {
    let (mut lo, mut hi) = (step.s0, step.s1);
    let glo = g(step.y0);
    let positive_lo = glo > 0.0;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let gm = g(step.eval(mid));
        if (gm > 0.0) == positive_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::LinearField;

    #[test]
    fn dense_output_matches_endpoints_and_exact_solution() {
        // rotation: y = (cos s, sin s)
        let field = LinearField {
            matrix: [[0.0, -1.0], [1.0, 0.0]],
            center: [0.0, 0.0],
        };
        let mut st = Stepper::new(&field, 0.0, [1.0, 0.0], StepControl::default());
        let mut worst = 0.0f64;
        while st.s < 3.0 {
            let step = st.advance(&field, 3.0, f64::INFINITY).unwrap();
            assert_eq!(step.eval(step.s0), step.y0);
            let e = step.eval(step.s1);
            assert!((e[0] - step.y1[0]).abs() < 1e-15 && (e[1] - step.y1[1]).abs() < 1e-15);
            for j in 1..4 {
                let s = step.s0 + step.h() * j as f64 / 4.0;
                let v = step.eval(s);
                worst = worst.max((v[0] - s.cos()).abs()).max((v[1] - s.sin()).abs());
            }
        }
        assert!(worst < 1e-9, "dense output error {worst}");
        assert!((st.y[0] - 3f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn stiff_decay_uses_implicit_steps() {
        let field = LinearField {
            matrix: [[-1e6, 0.0], [0.0, -1.0]],
            center: [1.0, 0.0],
        };
        let ctl = StepControl {
            rtol: 1e-8,
            atol: [1e-12; 2],
            h_max: 1.0,
            ..StepControl::default()
        };
        let mut st = Stepper::new(&field, 0.0, [0.0, 1.0], ctl);
        while st.s < 5.0 {
            st.advance(&field, 5.0, f64::INFINITY).unwrap();
        }
        assert!(st.stats.rosenbrock > 0);
        assert!(st.stats.accepted < 20_000, "{:?}", st.stats);
        assert!((st.y[0] - 1.0).abs() < 1e-7);
        assert!((st.y[1] - (-5.0f64).exp()).abs() < 1e-6);
    }
}
