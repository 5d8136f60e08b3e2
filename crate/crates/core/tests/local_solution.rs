use ksol_core::local::{apply_e, thresholds, verify_membership, Anchor, Kernel, WeightedTail};
use ksol_core::phase::{make_params, SolitonParams};
use ksol_core::sigma::binomial_f64;
use ksol_core::{picard_solve, picard_solve_at_a, Error, PicardConfig};

fn f_literal(x: f64, p: &SolitonParams) -> f64 {
    let (n, k) = (f64::from(p.n), f64::from(p.k));
    let c = (n + 2.0 * k) / (2f64.powf(k) * binomial_f64(p.n - 1, p.k - 1)) * (k / (n + 2.0 * k)).powf(1.0 - k);
    let d = 1.0 - k * x / (n + 2.0 * k);
    c * p.beta.powf(k) * d * ((p.gamma - x) / d).powi(p.k as i32)
}

fn rhs_literal(y: [f64; 2], p: &SolitonParams) -> [f64; 2] {
    let (n, k) = (f64::from(p.n), f64::from(p.k));
    let x = y[0].powf(1.0 / k);
    [
        -(n - 2.0 * k) * (1.0 - k * x / (n + 2.0 * k)) * y[0] + y[1] * f_literal(x, p),
        2.0 * k * y[1] * (1.0 - 2.0 * k * x / (n + 2.0 * k)),
    ]
}

fn rk4(y: [f64; 2], h: f64, p: &SolitonParams) -> [f64; 2] {
    let add = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * b[0], a[1] + t * b[1]];
    let k1 = rhs_literal(y, p);
    let k2 = rhs_literal(add(y, k1, 0.5 * h), p);
    let k3 = rhs_literal(add(y, k2, 0.5 * h), p);
    let k4 = rhs_literal(add(y, k3, h), p);
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

fn cases() -> Vec<(u32, u32, f64)> {
    let mut out = Vec::new();
    for (n, k) in [(4, 1), (5, 2), (4, 2), (3, 2), (3, 1), (6, 3)] {
        for rho in [-1.0, 0.0, 1.0] {
            out.push((n, k, rho));
        }
    }
    out
}

#[test]
fn converged_solutions_meet_tolerances() {
    let cfg = PicardConfig::default();
    for (n, k, rho) in cases() {
        let p = make_params(n, k, rho, 1.0).unwrap();
        for alpha in [0.5, 1.0, 2.0] {
            let sol = picard_solve(alpha, &p, &cfg).unwrap();
            let tag = format!("({n},{k}) rho={rho} alpha={alpha}");
            assert!(sol.contraction_rate < 0.9, "{tag}: rate {}", sol.contraction_rate);
            assert!(sol.sup_residual < 1e-10, "{tag}: residual {}", sol.sup_residual);
            assert!(sol.derivative_mismatch() < 10.0 * cfg.tol, "{tag}: mismatch {}", sol.derivative_mismatch());
            let c = alpha.powf((1.0 - p.m) * p.kf());
            assert!((sol.limit_x - c).abs() < 1e-8 * c, "{tag}: x limit {}", sol.limit_x);
            let zc = p.nf() * c / p.f0();
            assert!((sol.limit_z - zc).abs() < 1e-8 * zc, "{tag}: z limit {}", sol.limit_z);
            let ratio = p.nf() / p.f0();
            assert!((sol.limit_ratio() - ratio).abs() < 1e-6 * ratio, "{tag}: ratio {}", sol.limit_ratio());
            assert!(verify_membership(&sol.tail, &sol.kernel).ok, "{tag}");
            let u0 = sol.u0.unwrap();
            assert!((u0.powf((1.0 - p.m) * p.kf()) - zc).abs() < 1e-8 * zc);
        }
    }
}

#[test]
fn geometric_a_priori_bound() {
    let p = make_params(4, 1, 1.0, 1.0).unwrap();
    let sol = picard_solve(1.0, &p, &PicardConfig::default()).unwrap();
    let c = sol.contraction_rate;
    let steps = &sol.step_norms;
    for j in 0..steps.len() {
        let remaining: f64 = steps[j..].iter().sum();
        let bound = c.powi(j as i32) / (1.0 - c) * steps[0];
        assert!(remaining <= bound * (1.0 + 1e-9) + 1e-13, "iterate {j}: {remaining} > {bound}");
    }
}

#[test]
fn agrees_with_direct_integration() {
    for (n, k, rho) in cases() {
        let p = make_params(n, k, rho, 1.0).unwrap();
        let sol = picard_solve(1.0, &p, &PicardConfig::default()).unwrap();
        let c = sol.limit_x;
        let kf = p.kf();
        let grid = &sol.tail.grid;
        let hg = grid[1] - grid[0];
        let lead = (10.0 / hg).ceil() as usize;
        let s_start = grid[0] - lead as f64 * hg;
        let e = (2.0 * kf * s_start).exp();
        let mut y = [c * e, p.nf() * c / p.f0() * e];
        let sub = 8;
        for _ in 0..lead * sub {
            y = rk4(y, hg / sub as f64, &p);
        }
        let samples = sol.samples();
        let mut worst = 0.0f64;
        for (i, (_, x, z)) in samples.iter().enumerate() {
            if i > 0 {
                for _ in 0..sub {
                    y = rk4(y, hg / sub as f64, &p);
                }
            }
            worst = worst.max((x - y[0]).abs() / x.abs()).max((z - y[1]).abs() / z.abs());
        }
        assert!(worst < 1e-8, "({n},{k}) rho={rho}: relative gap {worst}");
    }
}

#[test]
fn membership_examples() {
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    let kernel = Kernel::origin(&p, 1.0).unwrap();
    let th = thresholds(&kernel);
    let grid = WeightedTail::uniform(th.s0 - 12.0, th.s0, 256);
    let seed = WeightedTail::seed(&kernel, grid);
    assert!(verify_membership(&seed, &kernel).ok);
    let mut tripled = seed.clone();
    tripled.xw.iter_mut().for_each(|v| *v *= 3.0);
    tripled.zw.iter_mut().for_each(|v| *v *= 3.0);
    assert!(!verify_membership(&tripled, &kernel).ok);
    assert!(matches!(apply_e(&tripled, &kernel), Err(Error::Precondition(_))));
    let image = apply_e(&seed, &kernel).unwrap();
    assert!(verify_membership(&image, &kernel).ok);
    // the image keeps the affine part as its limit
    assert!((image.xw[0] - kernel.amp).abs() < 1e-9 * kernel.amp);
    assert!((image.zw[0] - kernel.z_amp()).abs() < 1e-9 * kernel.z_amp());
}

#[test]
fn first_threshold_example_and_monotonicity() {
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    let th = thresholds(&Kernel::origin(&p, 1.0).unwrap());
    assert!((th.s1 - 0.2027325540540822).abs() < 1e-12);
    let mut prev = f64::INFINITY;
    for alpha in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let s1 = thresholds(&Kernel::origin(&p, alpha).unwrap()).s1;
        assert!(s1 < prev);
        prev = s1;
    }
}

#[test]
fn solutions_converging_to_a() {
    let cfg = PicardConfig::default();
    for (n, k, rho) in [(4, 1, 3.0), (4, 1, 5.0), (5, 2, 3.0), (4, 2, 4.0), (3, 2, 5.0)] {
        let p = make_params(n, k, rho, 1.0).unwrap();
        for abar in [0.5, 1.0] {
            let sol = picard_solve_at_a(abar, &p, &cfg).unwrap();
            let tag = format!("({n},{k}) rho={rho} abar={abar}");
            assert_eq!(sol.anchor, Anchor::PointA);
            assert!(sol.contraction_rate < 0.9 && sol.sup_residual < 1e-10, "{tag}");
            assert!((sol.limit_x - abar).abs() < 1e-8 * abar, "{tag}: {}", sol.limit_x);
            let vz = p.nf() * abar / p.h0();
            assert!((sol.limit_z - vz).abs() < 1e-8 * vz, "{tag}: {}", sol.limit_z);
            let samples = sol.samples();
            for w in samples.windows(2) {
                assert!(w[0].0 < w[1].0);
                assert!(w[1].1 > 0.0 && w[1].2 > 0.0, "{tag}");
                assert!(w[1].1 < w[0].1 && w[1].2 < w[0].2, "{tag}: not decreasing at s={}", w[1].0);
            }
            assert!(samples.iter().all(|(_, w, _)| *w <= p.x_b));
        }
    }
}

#[test]
fn mirrored_construction_preconditions() {
    let cfg = PicardConfig::default();
    let p = make_params(4, 1, 2.0, 1.0).unwrap();
    assert!(matches!(picard_solve_at_a(1.0, &p, &cfg), Err(Error::Degenerate(_))));
    let p = make_params(4, 1, 0.5, 1.0).unwrap();
    assert!(matches!(picard_solve_at_a(1.0, &p, &cfg), Err(Error::NotApplicable(_))));
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!(matches!(picard_solve(0.0, &p, &cfg), Err(Error::Param { .. })));
    assert!(matches!(picard_solve(f64::NAN, &p, &cfg), Err(Error::Param { .. })));
}
