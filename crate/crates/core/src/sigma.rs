//! Elementary symmetric functions, Newton tensors and the radial Schouten
//! eigenvalue pair of a conformally flat metric `u^a |dx|^2`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const MIN_DIM: usize = 3;
pub const MAX_BINOMIAL_N: u32 = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenList {
    values: Vec<f64>,
}

impl EigenList {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_DIM {
            return Err(domain(format!(
                "eigenvalue list has length {}, need at least {MIN_DIM}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(domain(format!("non-finite eigenvalue {v}")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }
}

/// Exact binomial coefficient. Fits in u128 for every n <= 64.
pub fn binomial(n: u32, k: u32) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc * u128::from(n - i) / u128::from(i + 1);
    }
    acc
}

pub fn binomial_f64(n: u32, k: u32) -> f64 {
    binomial(n, k) as f64
}

/// All elementary symmetric functions e_0..=e_kmax of a slice, by multiplying
/// out prod (1 + lambda_i t) one factor at a time.
pub fn elementary_all(values: &[f64], kmax: usize) -> Vec<f64> {
    let mut e = vec![0.0; kmax + 1];
    e[0] = 1.0;
    for (i, &lam) in values.iter().enumerate() {
        let top = (i + 1).min(kmax);
        for j in (1..=top).rev() {
            e[j] += lam * e[j - 1];
        }
    }
    e
}

/// sigma_k of an arbitrary slice; sigma_0 = 1 and sigma_k = 0 for k > len.
pub fn elementary(values: &[f64], k: usize) -> f64 {
    if k > values.len() {
        return 0.0;
    }
    elementary_all(values, k)[k]
}

pub fn sigma_k(lam: &EigenList, k: usize) -> Result<f64> {
    if k == 0 || k > lam.n() {
        return Err(domain(format!("k = {k} outside 1..={}", lam.n())));
    }
    Ok(elementary(lam.values(), k))
}

/// Brute-force subset enumeration. Reference implementation for small n.
pub fn sigma_k_enumerate(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    assert!(n <= 20, "subset enumeration is exponential in n");
    if k > n {
        return 0.0;
    }
    let mut total = 0.0;
    for mask in 0u32..(1u32 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut prod = 1.0;
        for (i, v) in values.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod *= v;
            }
        }
        total += prod;
    }
    total
}

/// Diagonal of T_k = sum_j (-1)^j sigma_{k-j} A^j at A = diag(lam).
pub fn newton_tensor_diag(lam: &EigenList, k: usize) -> Result<EigenList> {
    let n = lam.n();
    if k >= n {
        return Err(domain(format!("Newton tensor order k = {k} needs k <= n-1 = {}", n - 1)));
    }
    let e = elementary_all(lam.values(), k);
    let diag = lam
        .values()
        .iter()
        .map(|&li| {
            // Horner in li: sum_j (-1)^j e_{k-j} li^j
            let mut acc = 0.0;
            for j in (0..=k).rev() {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                acc = acc * li + sign * e[k - j];
            }
            acc
        })
        .collect();
    EigenList::new(diag)
}

/// sigma_k of the list with entry `skip` removed.
pub fn sigma_k_deleted(values: &[f64], k: usize, skip: usize) -> f64 {
    let rest: Vec<f64> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != skip)
        .map(|(_, v)| *v)
        .collect();
    elementary(&rest, k)
}

pub fn in_positive_cone(lam: &EigenList, k: usize) -> Result<bool> {
    if k == 0 || k > lam.n() {
        return Err(domain(format!("k = {k} outside 1..={}", lam.n())));
    }
    let e = elementary_all(lam.values(), k);
    Ok(e[1..].iter().all(|&v| v > 0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialEigenPair {
    pub lambda1: f64,
    pub lambda2: f64,
    pub n: u32,
    pub k: u32,
}

fn check_nk(n: u32, k: u32) -> Result<()> {
    if (n as usize) < MIN_DIM || n > MAX_BINOMIAL_N {
        return Err(domain(format!("n = {n} outside {MIN_DIM}..={MAX_BINOMIAL_N}")));
    }
    if k == 0 || k > n {
        return Err(domain(format!("k = {k} outside 1..={n}")));
    }
    Ok(())
}

impl RadialEigenPair {
    pub fn new(lambda1: f64, lambda2: f64, n: u32, k: u32) -> Result<Self> {
        check_nk(n, k)?;
        Ok(Self {
            lambda1,
            lambda2,
            n,
            k,
        })
    }

    /// lambda1 once, lambda2 repeated n-1 times.
    pub fn expand(&self) -> EigenList {
        let mut v = vec![self.lambda2; self.n as usize];
        v[0] = self.lambda1;
        EigenList { values: v }
    }
}

pub fn radial_schouten_eigenvalues(
    u: f64,
    u_r: f64,
    u_rr: f64,
    r: f64,
    n: u32,
    k: u32,
) -> Result<RadialEigenPair> {
    check_nk(n, k)?;
    if !(r > 0.0) || !r.is_finite() {
        return Err(domain(format!("radius r = {r} must be positive")));
    }
    if !(u > 0.0) || !u.is_finite() {
        return Err(domain(format!("u = {u} must be positive")));
    }
    let m = conformal_m(n, k);
    let q = u_r / u;
    let lambda1 = -0.5 * (1.0 - m) * (u_rr / u - 0.25 * (5.0 - m) * q * q);
    let lambda2 = -0.5 * (1.0 - m) * q * (1.0 / r + 0.25 * (1.0 - m) * q);
    Ok(RadialEigenPair {
        lambda1,
        lambda2,
        n,
        k,
    })
}

pub fn conformal_m(n: u32, k: u32) -> f64 {
    (f64::from(n) - 2.0 * f64::from(k)) / (f64::from(n) + 2.0 * f64::from(k))
}

/// sigma_l(lambda1, lambda2, ..., lambda2) = lambda2^{l-1} [C(n-1,l-1) lambda1 + C(n-1,l) lambda2].
pub fn radial_sigma_l(pair: &RadialEigenPair, l: u32) -> Result<f64> {
    if l == 0 || l > pair.n {
        return Err(domain(format!("l = {l} outside 1..={}", pair.n)));
    }
    let n1 = pair.n - 1;
    let lead = binomial_f64(n1, l - 1) * pair.lambda1 + binomial_f64(n1, l) * pair.lambda2;
    Ok(pair.lambda2.powi(l as i32 - 1) * lead)
}

/// For k >= 2 the radial list lies in Gamma_k^+ exactly when lambda2 > 0 and
/// sigma_k > 0. For k = 1 the cone is the half space sigma_1 > 0.
pub fn is_admissible_radial(pair: &RadialEigenPair) -> bool {
    let Ok(sk) = radial_sigma_l(pair, pair.k) else {
        return false;
    };
    if pair.k == 1 {
        sk > 0.0
    } else {
        pair.lambda2 > 0.0 && sk > 0.0
    }
}

impl From<RadialEigenPair> for EigenList {
    fn from(p: RadialEigenPair) -> Self {
        p.expand()
    }
}

impl TryFrom<Vec<f64>> for EigenList {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        EigenList::new(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn list(v: &[f64]) -> EigenList {
        EigenList::new(v.to_vec()).unwrap()
    }

    #[test]
    fn small_sigma_values() {
        assert_eq!(sigma_k(&list(&[1.0, 1.0, 1.0]), 2).unwrap(), 3.0);
        assert_eq!(sigma_k(&list(&[1.0, 2.0, 3.0]), 2).unwrap(), 11.0);
        assert_eq!(sigma_k(&list(&[1.0, 2.0, 3.0]), 3).unwrap(), 6.0);
        let l = list(&[2.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(sigma_k(&l, 1).unwrap(), 2.0);
        for k in 2..=5 {
            assert_eq!(sigma_k(&l, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn sigma_rejects_bad_k() {
        let l = list(&[1.0, 2.0, 3.0]);
        assert!(sigma_k(&l, 0).is_err());
        assert!(sigma_k(&l, 4).is_err());
        assert!(EigenList::new(vec![1.0, 2.0]).is_err());
        assert!(EigenList::new(vec![1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn newton_small_cases() {
        let l = list(&[1.0, 2.0, 3.0]);
        assert_eq!(newton_tensor_diag(&l, 1).unwrap().values(), &[5.0, 4.0, 3.0]);
        assert_eq!(newton_tensor_diag(&l, 0).unwrap().values(), &[1.0, 1.0, 1.0]);
        assert!(newton_tensor_diag(&l, 3).is_err());
    }

    #[test]
    fn cone_examples() {
        assert!(in_positive_cone(&list(&[3.0, 1.0, -0.5]), 2).unwrap());
        assert!(!in_positive_cone(&list(&[1.0, 1.0, -0.9]), 3).unwrap());
    }

    #[test]
    fn binomials_exact() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
        assert_eq!(binomial(3, 4), 0);
        for n in 1..=64u32 {
            for k in 1..n {
                assert_eq!(binomial(n, k), binomial(n - 1, k - 1) + binomial(n - 1, k));
            }
        }
    }

    #[test]
    fn radial_pair_example() {
        let p = radial_schouten_eigenvalues(1.0, -1.0, 0.0, 1.0, 4, 1).unwrap();
        assert!((p.lambda1 - 7.0 / 18.0).abs() < 1e-15);
        // (-1/3)(-1)(1 - 1/6)
        assert!((p.lambda2 - 5.0 / 18.0).abs() < 1e-15);
        assert!(radial_schouten_eigenvalues(1.0, -1.0, 0.0, 0.0, 4, 1).is_err());
    }

    #[test]
    fn radial_sigma_matches_expansion() {
        let pair = RadialEigenPair::new(0.3, -1.7, 6, 3).unwrap();
        let l = pair.expand();
        for j in 1..=6 {
            let a = radial_sigma_l(&pair, j).unwrap();
            let b = sigma_k_enumerate(l.values(), j as usize);
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "l={j}: {a} vs {b}");
        }
    }
}
