use ksol_core::field::VectorField;
use ksol_core::phase::*;
use ksol_core::sigma::binomial_f64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// literal transcription of the profile and the system, used as an oracle
fn f_oracle(x: f64, p: &SolitonParams) -> f64 {
    let (n, k) = (f64::from(p.n), f64::from(p.k));
    let c = (n + 2.0 * k) / (2f64.powf(k) * binomial_f64(p.n - 1, p.k - 1)) * (k / (n + 2.0 * k)).powf(1.0 - k);
    let d = 1.0 - k * x / (n + 2.0 * k);
    c * p.beta.powf(k) * d * ((p.gamma - x) / d).powi(p.k as i32)
}

fn rhs_oracle(x_big: f64, z: f64, p: &SolitonParams) -> (f64, f64) {
    let (n, k) = (f64::from(p.n), f64::from(p.k));
    let x = x_big.powf(1.0 / k);
    let xs = -(n - 2.0 * k) * (1.0 - k * x / (n + 2.0 * k)) * x_big + z * f_oracle(x, p);
    let zs = 2.0 * k * z * (1.0 - 2.0 * k * x / (n + 2.0 * k));
    (xs, zs)
}

fn param_grid() -> Vec<SolitonParams> {
    let mut out = Vec::new();
    for (n, k) in [(3, 1), (4, 1), (6, 1), (5, 2), (4, 2), (3, 2), (7, 3), (6, 3), (5, 3)] {
        for rho in [-1.0, 0.0, 0.5, 1.0, 3.0] {
            out.push(make_params(n, k, rho, 1.0).unwrap());
        }
    }
    out
}

#[test]
fn parameter_examples() {
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!((p.m - 1.0 / 3.0).abs() < 1e-15);
    assert!((p.beta - 2.0 / 3.0).abs() < 1e-15);
    assert!((p.gamma - 3.0).abs() < 1e-15);
    assert!((p.x_a - 6.0).abs() < 1e-14 && (p.x_b - 3.0).abs() < 1e-14);
    assert!((p.c_nk - 3.0).abs() < 1e-14);
    assert!(p.z_b.is_none());
    let p = make_params(4, 1, 1.0, 1.0).unwrap();
    assert!((p.gamma - 4.5).abs() < 1e-15 && (p.z_b.unwrap() - 1.0).abs() < 1e-15);
    assert!(make_params(4, 1, -3.0, 1.0).is_err());
    assert!(make_params(4, 1, 0.0, 0.0).is_err());
    assert!(make_params(2, 1, 0.0, 1.0).is_err());
    assert!(make_params(4, 5, 0.0, 1.0).is_err());
}

#[test]
fn profile_examples() {
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!((f_profile(0.0, &p).unwrap() - 6.0).abs() < 1e-13);
    assert!((f_profile(1.0, &p).unwrap() - 4.0).abs() < 1e-13);
    assert!(f_profile(p.gamma, &p).unwrap().abs() < 1e-13);
    assert!(f_profile(6.0, &p).is_err());
    let p = make_params(4, 1, 5.0, 1.0).unwrap();
    assert!((p.nu - 4.5).abs() < 1e-14);
    assert!((h_profile(0.0, &p).unwrap() - 9.0).abs() < 1e-13);
    let p = make_params(4, 1, 2.0, 1.0).unwrap();
    assert!(h_profile(0.0, &p).unwrap().abs() < 1e-13);
}

#[test]
fn field_matches_literal_system() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for p in param_grid() {
        for _ in 0..200 {
            let x = rng.gen_range(0.0..p.x_a);
            let z = rng.gen_range(0.0..5.0);
            let (a, b) = system_rhs(PhaseState::new(x, z), &p).unwrap();
            let (oa, ob) = rhs_oracle(x, z, &p);
            let scale = 1.0 + oa.abs() + z * f_oracle(x.powf(1.0 / p.kf()), &p).abs() + x;
            assert!((a - oa).abs() < 1e-11 * scale, "{p:?} X={x} Z={z}: {a} vs {oa}");
            assert!((b - ob).abs() < 1e-11 * (1.0 + ob.abs()));
        }
    }
}

#[test]
fn rhs_examples() {
    let p = make_params(4, 1, 1.0, 1.0).unwrap();
    let (a, b) = system_rhs(PhaseState::new(3.0, 1.0), &p).unwrap();
    assert!(a.abs() < 1e-14 && b.abs() < 1e-14);
    let (a, b) = system_rhs(PhaseState::new(0.0, 0.0), &p).unwrap();
    assert_eq!((a, b), (0.0, 0.0));
    assert!(system_rhs(PhaseState::new(-1.0, 1.0), &p).is_err());
    let p = make_params(4, 1, 5.0, 1.0).unwrap();
    let (ws, vs) = system_rhs_a(1.0, 0.0, &p).unwrap();
    assert!((ws - 5.0 / 3.0).abs() < 1e-14 && vs == 0.0);
    assert!(system_rhs_a(-0.5, 0.0, &p).is_err());
}

#[test]
fn jacobian_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut checked = 0;
    for p in param_grid() {
        let field = p.field_xz();
        for _ in 0..100 {
            let x = rng.gen_range(0.05..0.95) * p.x_a;
            let z = rng.gen_range(0.0..4.0);
            let j = jacobian(PhaseState::new(x, z), &p).unwrap();
            for col in 0..2 {
                let h = 1e-6 * [x, z.max(1.0)][col];
                let mut up = [x, z];
                let mut dn = [x, z];
                up[col] += h;
                dn[col] -= h;
                let (fu, fd) = (field.eval(up), field.eval(dn));
                for row in 0..2 {
                    let fdq = (fu[row] - fd[row]) / (2.0 * h);
                    let exact = j[row][col];
                    let scale = 1.0 + exact.abs() + j[row][0].abs() + j[row][1].abs();
                    assert!((fdq - exact).abs() < 1e-6 * scale, "{p:?} ({x},{z}) [{row}][{col}] {fdq} vs {exact}");
                }
            }
            // F is linear in Z with coefficient f, and dG/dZ vanishes on X = X_B
            let fx = f_profile(x.powf(1.0 / p.kf()), &p).unwrap();
            assert!((j[0][1] - fx).abs() <= 1e-13 * (1.0 + fx.abs()));
            checked += 1;
        }
        let jb = p.field_xz().jacobian([p.x_b, 1.0]);
        assert!(jb[1][1].abs() < 1e-12);
    }
    assert!(checked >= 1000);
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!(jacobian(PhaseState::new(0.0, 1.0), &p).is_err());
    assert!(jacobian(PhaseState::new(p.x_a, 1.0), &p).is_err());
}

#[test]
fn critical_points_are_zeros() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for p in param_grid() {
        for cp in critical_points(&p) {
            // A is examined in its own chart, where the field is smooth for every k
            let v = match (cp.label.as_str(), cp.chart) {
                ("A", _) => p.field_wv().eval([0.0, 0.0]),
                (_, Chart::XZ) => p.field_xz().eval([cp.x, cp.z]),
                (_, Chart::WV) => p.field_wv().eval([cp.x, cp.z]),
            };
            assert!(v[0].hypot(v[1]) < 1e-12, "{} for {p:?}: {v:?}", cp.label);
        }
        if p.regime() == DimRegime::Critical {
            for i in 0..20 {
                let x = p.x_exit() * i as f64 / 20.0;
                assert_eq!(p.field_xz().eval([x, 0.0]), [0.0, 0.0]);
            }
        }
        // away from the critical set the field does not vanish
        for _ in 0..100 {
            let x = rng.gen_range(0.01..0.99) * p.x_exit();
            let z = rng.gen_range(0.01..3.0);
            if let Some(zb) = p.z_b {
                if (x - p.x_b).hypot(z - zb) < 1e-3 {
                    continue;
                }
            }
            let v = p.field_xz().eval([x, z]);
            assert!(v[0].hypot(v[1]) > 0.0);
        }
    }
}

#[test]
fn critical_point_examples() {
    let p = make_params(4, 1, 1.0, 1.0).unwrap();
    let cps = critical_points(&p);
    let b = cps.iter().find(|c| c.label == "B").unwrap();
    assert!((b.x - 3.0).abs() < 1e-14 && (b.z - 1.0).abs() < 1e-14 && b.in_admissible_region);
    let a = cps.iter().find(|c| c.label == "A").unwrap();
    assert!((a.x - 6.0).abs() < 1e-13 && !a.in_admissible_region);
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!(critical_points(&p).iter().all(|c| c.label != "B"));
    let o = restricted_jacobian_origin(&p);
    let ev = o.eigen.real_values().unwrap();
    assert!(ev.contains(&2.0) && ev.contains(&-2.0));
    assert_eq!(o.kind, CriticalKind::Saddle);
    let p = make_params(4, 2, 1.0, 1.0).unwrap();
    let cps = critical_points(&p);
    assert_eq!(cps.len(), 1);
    assert_eq!(cps[0].kind, CriticalKind::DegenerateLine);
    let p = make_params(3, 2, 1.0, 1.0).unwrap();
    assert_eq!(restricted_jacobian_origin(&p).kind, CriticalKind::Source);
    assert!(jacobian_b(&make_params(4, 2, 1.0, 1.0).unwrap()).is_err());
}

#[test]
fn chart_pullback_consistency() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for p in param_grid() {
        let (fxz, fwv, frev) = (p.field_xz(), p.field_wv(), p.field_wv_reversed());
        let xr_a = p.x_a_root();
        let kf = p.kf();
        for _ in 0..100 {
            let x = rng.gen_range(0.05..0.95) * xr_a;
            let z = rng.gen_range(0.0..3.0);
            let big_x = x.powi(p.k as i32);
            let big_w = w_from_x(big_x, &p);
            let w = big_w.powf(1.0 / kf);
            let a = fxz.eval([big_x, z]);
            let b = fwv.eval([big_w, z]);
            // X = (x_A - W^{1/k})^k  =>  X_s = -(x / w)^{k-1} W_s
            let pulled = -(x / w).powf(kf - 1.0) * b[0];
            let scale = 1.0 + a[0].abs() + z * f_oracle(x, &p).abs() + big_x;
            assert!((pulled - a[0]).abs() < 1e-10 * scale, "{p:?} x={x}: {pulled} vs {}", a[0]);
            assert!((b[1] - a[1]).abs() < 1e-12 * (1.0 + a[1].abs()));
            let r = frev.eval([big_w, z]);
            assert_eq!(r, [-b[0], -b[1]]);
            assert!((x_from_w(big_w, &p) - big_x).abs() < 1e-12 * (1.0 + big_x));
        }
    }
}

#[test]
fn asymptote_repels_and_sign_structure() {
    for p in param_grid() {
        if p.regime() != DimRegime::Below && p.rho <= 2.0 * p.theta && p.gamma < p.x_a_root() {
            for z in [0.1, 1.0, 10.0] {
                let v = p.field_xz().eval([p.gamma_k(), z]);
                if p.regime() == DimRegime::Above {
                    assert!(v[0] < 0.0, "{p:?}");
                } else {
                    assert!(v[0] <= 1e-14 * p.gamma_k(), "{p:?}");
                }
            }
        }
        let field = p.field_xz();
        for i in 1..50 {
            let x = p.x_exit() * i as f64 / 50.0;
            let zs = field.eval([x, 1.0])[1];
            assert_eq!(zs > 0.0, x < p.x_b, "{p:?} X={x}");
        }
        assert_eq!(field.eval([p.x_b, 1.0])[1], 0.0);
    }
}

#[test]
fn f_decreasing_for_k1_and_vanishing_at_gamma() {
    for p in param_grid() {
        if p.gamma < p.x_a_root() {
            assert!(f_profile(p.gamma, &p).unwrap().abs() < 1e-12);
        }
        if p.k == 1 {
            let top = p.gamma.min(p.x_a_root() * 0.999);
            let vals: Vec<f64> = (0..=200).map(|i| f_profile(top * i as f64 / 200.0, &p).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] < w[0]), "{p:?}");
        }
        let hmax = p.x_a_root() * 0.999;
        if p.nu >= 0.0 {
            assert!((0..=100).all(|i| h_profile(hmax * i as f64 / 100.0, &p).unwrap() >= 0.0));
        }
    }
}

#[test]
fn region_membership() {
    let p = make_params(4, 1, 0.0, 1.0).unwrap();
    assert!(in_admissible_region(PhaseState::new(p.gamma_k() / 2.0, 1.0), &p));
    assert!(!in_admissible_region(PhaseState::new(1.0, 0.0), &p));
    let p = make_params(4, 1, 5.0, 1.0).unwrap();
    assert!(!in_admissible_region(PhaseState::new(7.0, 1.0), &p));
}
