//! Closed-form concurrent-composition bounds.
//!
//! The optimal-composition threshold
//! `(1/Π(1+u_i)) Σ_S max(Π_S u_i − u_g Π_{S̄} u_i, 0) ≤ δ_g`
//! is the hockey-stick divergence between the product laws of randomized
//! response on the two inputs, so it is solved exactly with
//! [`least_scale`] over the `2^k` outcome pairs (or the `k+1` binomial
//! classes in the homogeneous case).

use std::fmt;

use crate::error::{Error, Result};
use crate::prob::least_scale;
use crate::scalar::Scalar;

/// Largest `k` accepted by the heterogeneous `2^k` subset evaluation.
pub const MAX_SUBSET_K: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Theorem {
    BasicPure,
    Hybrid,
    OptimalPure,
    OptimalApproxNoninteractive,
}

impl Theorem {
    pub fn tag(self) -> &'static str {
        match self {
            Theorem::BasicPure => "basic-pure",
            Theorem::Hybrid => "hybrid",
            Theorem::OptimalPure => "optimal-pure",
            Theorem::OptimalApproxNoninteractive => "optimal-approx-noninteractive",
        }
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundResult {
    pub eps_g: f64,
    pub delta_g: f64,
    pub theorem: Theorem,
    /// Ordering of the components that attains `delta_g` (hybrid bound).
    pub permutation: Option<Vec<usize>>,
    /// `k · e^{Σε} · max δ_i`, the convenience relaxation of the hybrid bound.
    pub delta_upper: Option<f64>,
}

fn check_eps(eps: &[f64]) -> Result<()> {
    if let Some(e) = eps.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "eps values must be finite and nonnegative, got {e}"
        )));
    }
    Ok(())
}

fn check_prob(name: &str, p: f64, below_one: bool) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || (below_one && p >= 1.0) {
        let range = if below_one { "[0, 1)" } else { "[0, 1]" };
        return Err(Error::InvalidParameter(format!(
            "{name} must lie in {range}, got {p}"
        )));
    }
    Ok(())
}

/// `ε_g = Σ ε_i`, `δ_g = 0` for pure mechanisms.
pub fn basic_pure(eps: &[f64]) -> Result<BoundResult> {
    check_eps(eps)?;
    Ok(BoundResult {
        eps_g: eps.iter().sum(),
        delta_g: 0.0,
        theorem: Theorem::BasicPure,
        permutation: None,
        delta_upper: None,
    })
}

/// `δ_{σ(0)} + Σ_{i≥1} (Π_{j<i} u_{σ(j)}) δ_{σ(i)}` for a given order.
pub fn hybrid_delta_for_order<S: Scalar>(scales: &[S], deltas: &[S], order: &[usize]) -> S {
    let mut prefix = S::one();
    let mut total = S::zero();
    for &i in order {
        total = total + prefix.clone() * deltas[i].clone();
        prefix = prefix * scales[i].clone();
    }
    total
}

/// Ordering minimizing the hybrid `δ_g`: `i` before `j` when
/// `δ_i (u_j − 1) ≥ δ_j (u_i − 1)`. Components with `u = 1` and `δ = 0`
/// contribute nothing and go last, which keeps the comparator transitive.
pub fn hybrid_order<S: Scalar>(scales: &[S], deltas: &[S]) -> Vec<usize> {
    let neutral = |i: usize| scales[i] == S::one() && deltas[i].is_zero();
    let mut order: Vec<usize> = (0..scales.len()).collect();
    order.sort_by(|&i, &j| match (neutral(i), neutral(j)) {
        (true, true) => std::cmp::Ordering::Equal,
        (true, false) => std::cmp::Ordering::Greater,
        (false, true) => std::cmp::Ordering::Less,
        (false, false) => {
            let i_first = deltas[i].clone() * (scales[j].clone() - S::one());
            let j_first = deltas[j].clone() * (scales[i].clone() - S::one());
            j_first.partial_cmp(&i_first).expect("comparable products")
        }
    });
    order
}

/// Exact hybrid bound: `(min_σ δ_g, σ)`.
pub fn hybrid_delta_exact<S: Scalar>(scales: &[S], deltas: &[S]) -> (S, Vec<usize>) {
    let order = hybrid_order(scales, deltas);
    (hybrid_delta_for_order(scales, deltas, &order), order)
}

/// Hybrid bound from `(ε_i, δ_i)` pairs.
pub fn hybrid_delta(params: &[(f64, f64)]) -> Result<BoundResult> {
    let eps: Vec<f64> = params.iter().map(|p| p.0).collect();
    check_eps(&eps)?;
    for (_, d) in params {
        check_prob("delta", *d, false)?;
    }
    let scales: Vec<f64> = eps.iter().map(|e| e.exp()).collect();
    let deltas: Vec<f64> = params.iter().map(|p| p.1).collect();
    let (delta_g, order) = hybrid_delta_exact(&scales, &deltas);
    let eps_g: f64 = eps.iter().sum();
    let max_delta = deltas.iter().cloned().fold(0.0, f64::max);
    Ok(BoundResult {
        eps_g,
        delta_g,
        theorem: Theorem::Hybrid,
        permutation: Some(order),
        delta_upper: Some(params.len() as f64 * eps_g.exp() * max_delta),
    })
}

/// Outcome pairs of the randomized-response product law: for every subset
/// `S`, `(Π_{i∈S} u_i/(1+u_i) Π_{i∉S} 1/(1+u_i), same with S swapped)`.
pub fn rr_product_pairs<S: Scalar>(scales: &[S]) -> Vec<(S, S)> {
    let mut pairs = vec![(S::one(), S::one())];
    for u in scales {
        let keep = u.clone() / (S::one() + u.clone());
        let flip = S::one() / (S::one() + u.clone());
        pairs = pairs
            .into_iter()
            .flat_map(|(p, q)| {
                [
                    (p.clone() * keep.clone(), q.clone() * flip.clone()),
                    (p * flip.clone(), q * keep.clone()),
                ]
            })
            .collect();
    }
    pairs
}

/// Left-hand side of the optimal-composition condition at scale `u_g`.
pub fn optimal_lhs<S: Scalar>(scales: &[S], scale_g: &S) -> S {
    rr_product_pairs(scales)
        .into_iter()
        .fold(S::zero(), |acc, (p, q)| {
            acc + (p - scale_g.clone() * q).positive_part()
        })
}

/// Same as [`optimal_lhs`] for `k` copies of scale `u`, via binomial classes.
pub fn optimal_lhs_homogeneous<S: Scalar>(scale: &S, k: usize, scale_g: &S) -> S {
    homogeneous_pairs(scale, k)
        .into_iter()
        .fold(S::zero(), |acc, (p, q)| {
            acc + (p - scale_g.clone() * q).positive_part()
        })
}

fn homogeneous_pairs<S: Scalar>(scale: &S, k: usize) -> Vec<(S, S)> {
    let keep = scale.clone() / (S::one() + scale.clone());
    let flip = S::one() / (S::one() + scale.clone());
    let mut binom = S::one();
    (0..=k)
        .map(|i| {
            if i > 0 {
                binom = binom.clone() * S::from_usize(k + 1 - i).expect("usize")
                    / S::from_usize(i).expect("usize");
            }
            let p = binom.clone() * pow(&keep, i) * pow(&flip, k - i);
            let q = binom.clone() * pow(&flip, i) * pow(&keep, k - i);
            (p, q)
        })
        .collect()
}

fn pow<S: Scalar>(x: &S, n: usize) -> S {
    num_traits::pow(x.clone(), n)
}

fn check_delta_g<S: Scalar>(delta_g: &S) -> Result<()> {
    if delta_g.is_negative_tol() || !(delta_g.clone() < S::one()) {
        return Err(Error::InvalidParameter(format!(
            "delta_g must lie in [0, 1), got {delta_g:?}"
        )));
    }
    Ok(())
}

/// Least `u_g ≥ 1` satisfying the optimal-composition condition with
/// right-hand side `rhs`.
pub fn optimal_scale<S: Scalar>(scales: &[S], rhs: &S) -> Result<S> {
    if scales.len() > MAX_SUBSET_K {
        return Err(Error::LimitExceeded(format!(
            "subset evaluation supports k ≤ {MAX_SUBSET_K}, got {}",
            scales.len()
        )));
    }
    check_delta_g(rhs)?;
    least_scale(rr_product_pairs(scales), rhs)
}

pub fn optimal_scale_homogeneous<S: Scalar>(scale: &S, k: usize, rhs: &S) -> Result<S> {
    check_delta_g(rhs)?;
    least_scale(homogeneous_pairs(scale, k), rhs)
}

/// `1 − (1 − δ_g)/Π(1 − δ_i)`; `NoSolution` when negative.
pub fn noninteractive_rhs<S: Scalar>(deltas: &[S], delta_g: &S) -> Result<S> {
    let mut survive = S::one();
    for d in deltas {
        if !(d.clone() < S::one()) || d.is_negative_tol() {
            return Err(Error::InvalidParameter(format!(
                "component delta must lie in [0, 1), got {d:?}"
            )));
        }
        survive = survive * (S::one() - d.clone());
    }
    let rhs = S::one() - (S::one() - delta_g.clone()) / survive;
    if rhs.is_negative_tol() {
        return Err(Error::NoSolution(format!(
            "delta_g {delta_g:?} is below 1 − Π(1 − δ_i); no eps_g satisfies the condition"
        )));
    }
    Ok(S::max_of(rhs, S::zero()))
}

/// Least `ε_g` for `k` pure mechanisms at target `δ_g`.
pub fn optimal_eps_pure(eps: &[f64], delta_g: f64) -> Result<BoundResult> {
    check_eps(eps)?;
    check_prob("delta_g", delta_g, true)?;
    let eps_g = if delta_g == 0.0 {
        // only u_g = Π u_i zeroes the full-subset term
        eps.iter().sum()
    } else {
        let scales: Vec<f64> = eps.iter().map(|e| e.exp()).collect();
        optimal_scale(&scales, &delta_g)?.ln()
    };
    Ok(BoundResult {
        eps_g,
        delta_g,
        theorem: Theorem::OptimalPure,
        permutation: None,
        delta_upper: None,
    })
}

/// Noninteractive optimal composition for `(ε_i, δ_i)` mechanisms. Valid
/// for concurrent composition of interactive mechanisms only when every
/// `δ_i = 0`.
pub fn optimal_eps_approx_noninteractive(
    params: &[(f64, f64)],
    delta_g: f64,
) -> Result<BoundResult> {
    let eps: Vec<f64> = params.iter().map(|p| p.0).collect();
    check_eps(&eps)?;
    check_prob("delta_g", delta_g, true)?;
    let deltas: Vec<f64> = params.iter().map(|p| p.1).collect();
    if deltas.iter().all(|d| *d == 0.0) {
        let mut pure = optimal_eps_pure(&eps, delta_g)?;
        pure.theorem = Theorem::OptimalApproxNoninteractive;
        return Ok(pure);
    }
    let rhs = noninteractive_rhs(&deltas, &delta_g)?;
    let scales: Vec<f64> = eps.iter().map(|e| e.exp()).collect();
    let eps_g = optimal_scale(&scales, &rhs)?.ln();
    Ok(BoundResult {
        eps_g,
        delta_g,
        theorem: Theorem::OptimalApproxNoninteractive,
        permutation: None,
        delta_upper: None,
    })
}

/// `ln C(k, i)` for all `i`, by a running sum of logs.
fn ln_binomials(k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    let mut acc = 0.0f64;
    out.push(0.0);
    for i in 1..=k {
        acc += ((k + 1 - i) as f64).ln() - (i as f64).ln();
        out.push(acc);
    }
    out
}

/// Homogeneous outcome pairs in floating point, formed in log space so
/// that large `k` neither overflows nor underflows prematurely.
fn homogeneous_pairs_f64(eps: f64, k: usize) -> Vec<(f64, f64)> {
    let ln_norm = k as f64 * eps.exp().ln_1p();
    ln_binomials(k)
        .into_iter()
        .enumerate()
        .map(|(i, lc)| {
            let p = (lc + i as f64 * eps - ln_norm).exp();
            let q = (lc + (k - i) as f64 * eps - ln_norm).exp();
            (p, q)
        })
        .collect()
}

/// Optimal `ε_g` for `k` copies of an `ε`-DP mechanism; exact piecewise
/// solve over the `k+1` binomial classes.
pub fn optimal_eps_homogeneous(eps: f64, k: usize, delta_g: f64) -> Result<f64> {
    check_eps(&[eps])?;
    check_prob("delta_g", delta_g, true)?;
    if k == 0 {
        return Ok(0.0);
    }
    if delta_g == 0.0 {
        return Ok(k as f64 * eps);
    }
    Ok(least_scale(homogeneous_pairs_f64(eps, k), &delta_g)?.ln())
}

/// Bisection on `ε_g ∈ [0, kε]` to within `tol`, for cross-checking.
pub fn optimal_eps_homogeneous_bisect(eps: f64, k: usize, delta_g: f64, tol: f64) -> Result<f64> {
    check_eps(&[eps])?;
    check_prob("delta_g", delta_g, true)?;
    let pairs = homogeneous_pairs_f64(eps, k);
    let lhs = |eg: f64| {
        let u = eg.exp();
        pairs.iter().map(|(p, q)| (p - u * q).max(0.0)).sum::<f64>()
    };
    let (mut lo, mut hi) = (0.0f64, k as f64 * eps);
    if lhs(lo) <= delta_g {
        return Ok(0.0);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if lhs(mid) <= delta_g {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub k: usize,
    pub eps_basic: f64,
    pub delta_hybrid: f64,
    pub eps_optimal: f64,
    pub delta_g: f64,
}

/// Per-`k` bounds for `k` copies of an `(ε, 0)`-DP mechanism.
pub fn compare_curves(eps: f64, k_max: usize, delta_g: f64) -> Result<Vec<CurveRow>> {
    check_eps(&[eps])?;
    check_prob("delta_g", delta_g, true)?;
    (1..=k_max)
        .map(|k| {
            Ok(CurveRow {
                k,
                eps_basic: k as f64 * eps,
                // pure components: the hybrid delta term vanishes
                delta_hybrid: 0.0,
                eps_optimal: optimal_eps_homogeneous(eps, k, delta_g)?,
                delta_g,
            })
        })
        .collect()
}

/// Decimal with 12 significant digits, trailing zeros trimmed.
pub fn sig12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{:.*e}", 11, x);
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, x);
        if fixed.contains('.') {
            fixed
                .trim_end_matches('0')
                .trim_end_matches('.')
                .to_string()
        } else {
            fixed
        }
    } else {
        let m = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

/// CSV with header `k,eps_basic,delta_hybrid,eps_optimal,delta_g`; with
/// `advanced_slot` an empty `eps_advanced` column is appended.
pub fn curves_to_csv(rows: &[CurveRow], advanced_slot: bool) -> String {
    let mut out = String::from("k,eps_basic,delta_hybrid,eps_optimal,delta_g");
    if advanced_slot {
        out.push_str(",eps_advanced");
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}",
            r.k,
            sig12(r.eps_basic),
            sig12(r.delta_hybrid),
            sig12(r.eps_optimal),
            sig12(r.delta_g)
        ));
        if advanced_slot {
            out.push(',');
        }
        out.push('\n');
    }
    out
}
