//! Finite distributions, hockey-stick divergence and (ε, δ)-indistinguishability.
//!
//! Privacy levels are carried as the *scale* `u = e^ε` so that exact scalar
//! types never meet a transcendental function; `ε = ln u` is derived only
//! for display.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{ln_of, Scalar};

/// Outcome label.
pub type Label = String;

/// A probability: a scalar in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct Prob<S>(S);

impl<S: Scalar> Prob<S> {
    pub fn new(value: S) -> Result<Self> {
        if value.is_negative_tol() || (value.clone() - S::one()).is_positive_tol() {
            return Err(Error::InvalidProbability {
                value: format!("{value:?}"),
                reason: "outside [0, 1]".into(),
            });
        }
        Ok(Prob(value))
    }

    pub fn zero() -> Self {
        Prob(S::zero())
    }

    pub fn one() -> Self {
        Prob(S::one())
    }

    pub fn value(&self) -> &S {
        &self.0
    }

    pub fn into_inner(self) -> S {
        self.0
    }
}

/// `(e^ε, δ)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PrivacyParams<S> {
    scale: S,
    delta: Prob<S>,
}

impl<S: Scalar> PrivacyParams<S> {
    pub fn new(scale: S, delta: Prob<S>) -> Result<Self> {
        check_scale(&scale)?;
        Ok(Self { scale, delta })
    }

    pub fn scale(&self) -> &S {
        &self.scale
    }

    pub fn delta(&self) -> &Prob<S> {
        &self.delta
    }

    pub fn eps(&self) -> f64 {
        ln_of(&self.scale)
    }
}

impl PrivacyParams<f64> {
    pub fn from_eps(eps: f64, delta: f64) -> Result<Self> {
        if !(eps >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "eps must be nonnegative, got {eps}"
            )));
        }
        Self::new(eps.exp(), Prob::new(delta)?)
    }
}

pub(crate) fn check_scale<S: Scalar>(u: &S) -> Result<()> {
    if *u < S::one() {
        return Err(Error::InvalidScale(format!("{u:?}")));
    }
    Ok(())
}

/// A normalized distribution over an ordered, duplicate-free list of labels.
/// Zero-mass outcomes stay in the support.
#[derive(Clone, Debug)]
pub struct FiniteDist<S> {
    support: Arc<[Label]>,
    mass: Vec<S>,
}

impl<S: Scalar> FiniteDist<S> {
    pub fn new(support: impl Into<Arc<[Label]>>, mass: Vec<S>) -> Result<Self> {
        let support = support.into();
        Self::validate(&support, &mass, "distribution")?;
        Ok(Self { support, mass })
    }

    pub fn from_pairs<L: Into<Label>>(pairs: impl IntoIterator<Item = (L, S)>) -> Result<Self> {
        let (labels, mass): (Vec<Label>, Vec<S>) =
            pairs.into_iter().map(|(l, p)| (l.into(), p)).unzip();
        Self::new(labels, mass)
    }

    /// Point mass on `label` within `support`.
    pub fn point(support: impl Into<Arc<[Label]>>, label: &str) -> Result<Self> {
        let support = support.into();
        let mass = support
            .iter()
            .map(|l| if l == label { S::one() } else { S::zero() })
            .collect();
        Self::new(support, mass)
    }

    pub fn uniform(support: impl Into<Arc<[Label]>>) -> Result<Self> {
        let support = support.into();
        let n = S::from_usize(support.len()).expect("usize conversion");
        let mass = vec![S::one() / n; support.len()];
        Self::new(support, mass)
    }

    pub(crate) fn validate(support: &[Label], mass: &[S], context: &str) -> Result<()> {
        if support.len() != mass.len() {
            return Err(Error::Malformed(format!(
                "{context}: {} labels but {} masses",
                support.len(),
                mass.len()
            )));
        }
        if support.is_empty() {
            return Err(Error::Malformed(format!("{context}: empty support")));
        }
        let mut seen = std::collections::HashSet::with_capacity(support.len());
        for label in support {
            if !seen.insert(label.as_str()) {
                return Err(Error::Malformed(format!(
                    "{context}: duplicate outcome {label:?}"
                )));
            }
        }
        let mut sum = S::zero();
        for (label, p) in support.iter().zip(mass) {
            if p.is_negative_tol() || (p.clone() - S::one()).is_positive_tol() {
                return Err(Error::InvalidProbability {
                    value: format!("{p:?}"),
                    reason: format!("mass of {label:?} at {context} is outside [0, 1]"),
                });
            }
            sum = sum + p.clone();
        }
        if !sum.approx_eq(&S::one()) {
            return Err(Error::NotNormalized {
                context: context.to_string(),
                sum: format!("{sum:?}"),
            });
        }
        Ok(())
    }

    pub fn support(&self) -> &[Label] {
        &self.support
    }

    pub fn masses(&self) -> &[S] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Label, &S)> {
        self.support.iter().zip(&self.mass)
    }

    pub fn mass_of(&self, label: &str) -> Option<&S> {
        self.support
            .iter()
            .position(|l| l == label)
            .map(|i| &self.mass[i])
    }

    /// Pushforward through a relabeling; merged labels add their mass.
    pub fn pushforward(&self, mut f: impl FnMut(&str) -> Label) -> FiniteDist<S> {
        let mut labels: Vec<Label> = Vec::new();
        let mut index: BTreeMap<Label, usize> = BTreeMap::new();
        let mut mass: Vec<S> = Vec::new();
        for (label, p) in self.iter() {
            let image = f(label);
            match index.get(&image) {
                Some(&i) => mass[i] = mass[i].clone() + p.clone(),
                None => {
                    index.insert(image.clone(), labels.len());
                    labels.push(image);
                    mass.push(p.clone());
                }
            }
        }
        FiniteDist {
            support: labels.into(),
            mass,
        }
    }

    /// Same measure, ignoring support order and zero-mass outcomes.
    pub fn same_law(&self, other: &FiniteDist<S>) -> bool {
        let positive = |d: &FiniteDist<S>| -> BTreeMap<Label, S> {
            d.iter()
                .filter(|(_, p)| !p.is_zero_tol())
                .map(|(l, p)| (l.clone(), p.clone()))
                .collect()
        };
        let (a, b) = (positive(self), positive(other));
        a.len() == b.len()
            && a.iter()
                .zip(&b)
                .all(|((la, pa), (lb, pb))| la == lb && pa.approx_eq(pb))
    }

    /// `weight * self + (1 - weight) * other` over the union of supports.
    pub fn mix(&self, weight: &S, other: &FiniteDist<S>) -> FiniteDist<S> {
        let mut labels: Vec<Label> = self.support.to_vec();
        let mut mass: Vec<S> = self
            .mass
            .iter()
            .map(|p| weight.clone() * p.clone())
            .collect();
        let rest = S::one() - weight.clone();
        for (label, p) in other.iter() {
            let add = rest.clone() * p.clone();
            match labels.iter().position(|l| l == label) {
                Some(i) => mass[i] = mass[i].clone() + add,
                None => {
                    labels.push(label.clone());
                    mass.push(add);
                }
            }
        }
        FiniteDist {
            support: labels.into(),
            mass,
        }
    }

    pub fn total_variation(&self, other: &FiniteDist<S>) -> Result<S> {
        hockey_stick(self, other, &S::one())
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FiniteDist<T> {
        FiniteDist {
            support: self.support.clone(),
            mass: self.mass.iter().map(f).collect(),
        }
    }

    /// Exact total mass; used by invariant checks.
    pub fn total(&self) -> S {
        self.mass.iter().cloned().fold(S::zero(), |a, b| a + b)
    }
}

impl<S: Scalar> PartialEq for FiniteDist<S> {
    fn eq(&self, other: &Self) -> bool {
        self.support == other.support
            && self
                .mass
                .iter()
                .zip(&other.mass)
                .all(|(a, b)| a.approx_eq(b))
    }
}

impl<S: Scalar + fmt::Display> fmt::Display for FiniteDist<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (l, p)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{l}: {p}")?;
        }
        write!(f, "}}")
    }
}

/// Pairs masses of `p` and `q` outcome by outcome.
fn aligned<'a, S: Scalar>(
    p: &'a FiniteDist<S>,
    q: &'a FiniteDist<S>,
) -> Result<Vec<(&'a S, &'a S)>> {
    if Arc::ptr_eq(&p.support, &q.support) || p.support == q.support {
        return Ok(p.mass.iter().zip(&q.mass).collect());
    }
    if p.len() != q.len() {
        return Err(Error::SupportMismatch);
    }
    let index: BTreeMap<&str, usize> = q
        .support
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i))
        .collect();
    p.iter()
        .map(|(l, pm)| {
            index
                .get(l.as_str())
                .map(|&j| (pm, &q.mass[j]))
                .ok_or(Error::SupportMismatch)
        })
        .collect()
}

/// `Σ_y max(p(y) − u·q(y), 0)`: the least δ with `p(T) ≤ u·q(T) + δ` for every event `T`.
pub fn hockey_stick<S: Scalar>(p: &FiniteDist<S>, q: &FiniteDist<S>, scale: &S) -> Result<S> {
    check_scale(scale)?;
    Ok(aligned(p, q)?
        .into_iter()
        .map(|(a, b)| (a.clone() - scale.clone() * b.clone()).positive_part())
        .fold(S::zero(), |acc, x| acc + x))
}

/// `(ε, δ)`-indistinguishability in both directions.
pub fn indistinguishable<S: Scalar>(
    p: &FiniteDist<S>,
    q: &FiniteDist<S>,
    params: &PrivacyParams<S>,
) -> Result<bool> {
    let delta = params.delta().value();
    let forward = hockey_stick(p, q, params.scale())?;
    let backward = hockey_stick(q, p, params.scale())?;
    Ok(!(forward - delta.clone()).is_positive_tol()
        && !(backward - delta.clone()).is_positive_tol())
}

/// Least `u ≥ 1` with `Σ max(p − u·q, 0) ≤ δ` over the given mass pairs.
///
/// The left-hand side is convex, piecewise linear and nonincreasing in `u`
/// with breakpoints at the likelihood ratios `p/q`. Ratios are visited in
/// decreasing order; the first breakpoint where the value exceeds `δ` pins
/// the active piece, which is solved in closed form.
pub fn least_scale<S: Scalar>(pairs: impl IntoIterator<Item = (S, S)>, delta: &S) -> Result<S> {
    let mut null_mass = S::zero();
    let mut points: Vec<(S, S, S)> = Vec::new();
    for (p, q) in pairs {
        if p.is_zero() {
            continue;
        }
        if q.is_zero() {
            null_mass = null_mass + p;
        } else {
            let ratio = p.clone() / q.clone();
            if ratio > S::one() {
                points.push((ratio, p, q));
            }
        }
    }
    if (null_mass.clone() - delta.clone()).is_positive_tol() {
        return Err(Error::UnboundedEpsilon(format!(
            "mass {null_mass:?} on outcomes impossible under the other input exceeds delta {delta:?}"
        )));
    }
    points.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("ratios are comparable"));
    let mut offset = null_mass;
    let mut slope = S::zero();
    for (ratio, p, q) in points {
        let value = offset.clone() - ratio * slope.clone();
        // raw comparison: a tolerance here can select a neighboring piece
        if value > *delta {
            return Ok(S::max_of((offset - delta.clone()) / slope, S::one()));
        }
        offset = offset + p;
        slope = slope + q;
    }
    if offset.clone() - slope.clone() > *delta {
        return Ok(S::max_of((offset - delta.clone()) / slope, S::one()));
    }
    Ok(S::one())
}

/// Least scale `u = e^ε ≥ 1` making `p` and `q` `(ε, δ)`-indistinguishable in both directions.
pub fn min_eps_for_delta<S: Scalar>(
    p: &FiniteDist<S>,
    q: &FiniteDist<S>,
    delta: &Prob<S>,
) -> Result<S> {
    let pairs = aligned(p, q)?;
    let delta = delta.value();
    if !(delta.clone() < S::one()) {
        return Err(Error::InvalidParameter("delta must be below 1".into()));
    }
    let forward = least_scale(
        pairs.iter().map(|(a, b)| ((*a).clone(), (*b).clone())),
        delta,
    )?;
    let backward = least_scale(
        pairs.iter().map(|(a, b)| ((*b).clone(), (*a).clone())),
        delta,
    )?;
    Ok(S::max_of(forward, backward))
}
