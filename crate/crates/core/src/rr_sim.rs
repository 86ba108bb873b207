//! Simulating a pure-DP interactive mechanism by interactive
//! post-processing of one randomized-response bit.
//!
//! For a mechanism `M` that is `(ln u, 0)`-DP on the input pair, the
//! simulator `T` has cumulative transcript laws
//! `T⃗(0) = (u·M⃗(x0) − M⃗(x1))/(u − 1)` and
//! `T⃗(1) = (u·M⃗(x1) − M⃗(x0))/(u − 1)`, so that running `T` on the output
//! of `RR_u(b)` reproduces `M(x_b)` against every adversary:
//! `u/(1+u)·T⃗(b) + 1/(1+u)·T⃗(1−b) = M⃗(x_b)`.

use serde_json::{json, Value};

use crate::adversary::{for_each_plan, plan_views, priv_loss, PathLaw};
use crate::bounds::rr_product_pairs;
use crate::composition::concomp;
use crate::error::{Error, Result};
use crate::format::mechanism_to_json;
use crate::mechanism::{FiniteMechanism, Limits, NodeId};
use crate::prob::{least_scale, Prob};
use crate::scalar::{ln_of, Scalar};
use crate::Rational;

/// Input keys of a serialized simulator.
pub const SIMULATOR_KEYS: [&str; 2] = ["rr0", "rr1"];

/// The simulator's branch tables, laid out on the base mechanism's tree:
/// input slot `c` holds `T(c, ·)` for the randomized-response bit `c`.
#[derive(Clone, Debug)]
pub struct SimulatorTree<S> {
    tree: FiniteMechanism<S>,
    scale: S,
}

impl<S: Scalar> SimulatorTree<S> {
    /// Wraps precomputed tables; used to audit externally supplied simulators.
    pub fn from_parts(tree: FiniteMechanism<S>, scale: S) -> Self {
        Self { tree, scale }
    }

    pub fn tree(&self) -> &FiniteMechanism<S> {
        &self.tree
    }

    pub fn scale(&self) -> &S {
        &self.scale
    }

    /// The mechanism `b ↦ T(RR_u(b))`: input `b` runs `T(b)` with
    /// probability `u/(1+u)` and `T(1−b)` otherwise.
    pub fn induced_mechanism(&self) -> Result<FiniteMechanism<S>> {
        let u = self.scale.clone();
        let keep = u.clone() / (S::one() + u.clone());
        let flip = S::one() / (S::one() + u);
        let law = PathLaw::new(&self.tree);
        let mixed = |b: usize, node: NodeId| {
            keep.clone() * law.reach(b, node).clone()
                + flip.clone() * law.reach(1 - b, node).clone()
        };
        let tree = &self.tree;
        tree.with_dists(|node, mv| {
            let mo = &tree.node(node).moves()[mv];
            std::array::from_fn(|b| {
                let before = mixed(b, node);
                let width = mo.probs(b).len();
                if before.is_zero_tol() {
                    return uniform_over_live(tree, node, mv, width);
                }
                (0..width)
                    .map(|a| {
                        let joint =
                            keep.clone() * law.reach(b, node).clone() * mo.probs(b)[a].clone()
                                + flip.clone()
                                    * law.reach(1 - b, node).clone()
                                    * mo.probs(1 - b)[a].clone();
                        joint / before.clone()
                    })
                    .collect()
            })
        })
    }
}

impl SimulatorTree<Rational> {
    /// Mechanism file layout with inputs keyed `rr0`/`rr1`.
    pub fn to_json(&self) -> Value {
        mechanism_to_json(&self.tree, SIMULATOR_KEYS)
    }
}

fn uniform_over_live<S: Scalar>(
    m: &FiniteMechanism<S>,
    node: NodeId,
    mv: usize,
    width: usize,
) -> Vec<S> {
    let mo = &m.node(node).moves()[mv];
    let live: Vec<usize> = mo.live_answers().collect();
    let share = S::one() / S::from_usize(live.len()).expect("usize");
    (0..width)
        .map(|a| {
            if live.contains(&a) {
                share.clone()
            } else {
                S::zero()
            }
        })
        .collect()
}

/// Builds the simulator at scale `u = e^ε`.
///
/// At `u = 1` the formulas divide by zero; an input-independent mechanism
/// is then simulated by itself on both bits. Conditionals below
/// zero-probability prefixes are uniform over the answers present in the
/// tree; they are never reached.
pub fn build_simulator<S: Scalar>(m: &FiniteMechanism<S>, scale: S) -> Result<SimulatorTree<S>> {
    crate::prob::check_scale(&scale)?;
    let law = PathLaw::new(m);
    if scale == S::one() {
        if let Some(transcript) = first_dependence(m) {
            return Err(Error::NotDpAtScale {
                eps_scale: scale.render(),
                transcript,
            });
        }
        let tree = m.with_dists(|node, mv| {
            let p = m.node(node).moves()[mv].probs(0).to_vec();
            [p.clone(), p]
        })?;
        return Ok(SimulatorTree { tree, scale });
    }
    let denom = scale.clone() - S::one();
    let cumulative = |c: usize, p_c: &S, p_other: &S| -> S {
        let _ = c;
        (scale.clone() * p_c.clone() - p_other.clone()) / denom.clone()
    };
    // nonnegativity of every cumulative entry is exactly the DP precondition
    for node in 0..m.nodes().len() {
        for (mv, mo) in m.node(node).moves().iter().enumerate() {
            for a in 0..mo.probs(0).len() {
                let joint: [S; 2] =
                    std::array::from_fn(|b| law.reach(b, node).clone() * mo.probs(b)[a].clone());
                for c in 0..2 {
                    if cumulative(c, &joint[c], &joint[1 - c]).is_negative_tol() {
                        return Err(Error::NotDpAtScale {
                            eps_scale: scale.render(),
                            transcript: format!(
                                "{}->{}",
                                m.branch_key(node, mv),
                                m.answer_alphabet(m.node(node).depth())[a]
                            ),
                        });
                    }
                }
            }
        }
    }
    let tree = m.with_dists(|node, mv| {
        let mo = &m.node(node).moves()[mv];
        let width = mo.probs(0).len();
        std::array::from_fn(|c| {
            let before = cumulative(c, law.reach(c, node), law.reach(1 - c, node));
            if before.is_zero_tol() {
                return uniform_over_live(m, node, mv, width);
            }
            (0..width)
                .map(|a| {
                    let pc = law.reach(c, node).clone() * mo.probs(c)[a].clone();
                    let po = law.reach(1 - c, node).clone() * mo.probs(1 - c)[a].clone();
                    S::max_of(cumulative(c, &pc, &po), S::zero()) / before.clone()
                })
                .collect()
        })
    })?;
    Ok(SimulatorTree { tree, scale })
}

fn first_dependence<S: Scalar>(m: &FiniteMechanism<S>) -> Option<String> {
    for node in 0..m.nodes().len() {
        for (mv, mo) in m.node(node).moves().iter().enumerate() {
            if let Some(a) =
                (0..mo.probs(0).len()).find(|&a| !mo.probs(0)[a].approx_eq(&mo.probs(1)[a]))
            {
                return Some(format!(
                    "{}->{}",
                    m.branch_key(node, mv),
                    m.answer_alphabet(m.node(node).depth())[a]
                ));
            }
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub adversary: Value,
    pub input: usize,
    pub transcript: String,
    pub expected: String,
    pub actual: String,
    pub discrepancy: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    pub adversaries_checked: u64,
    pub violations: Vec<Violation>,
}

impl SimulationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> Value {
        let mut out = json!({
            "status": if self.passed() { "pass" } else { "fail" },
            "adversaries_checked": self.adversaries_checked,
        });
        if self.passed() {
            return out;
        }
        out["violations"] = Value::Array(
            self.violations
                .iter()
                .map(|v| {
                    json!({
                        "adversary": v.adversary,
                        "input": v.input,
                        "transcript": v.transcript,
                        "expected": v.expected,
                        "actual": v.actual,
                        "discrepancy": v.discrepancy,
                    })
                })
                .collect(),
        );
        out
    }
}

fn same_shape<S: Scalar>(a: &FiniteMechanism<S>, b: &FiniteMechanism<S>) -> bool {
    a.rounds() == b.rounds()
        && a.nodes().len() == b.nodes().len()
        && (0..a.rounds()).all(|r| {
            a.query_alphabet(r) == b.query_alphabet(r)
                && a.answer_alphabet(r) == b.answer_alphabet(r)
        })
        && a.nodes().iter().zip(b.nodes()).all(|(x, y)| {
            x.moves().len() == y.moves().len()
                && x.moves().iter().zip(y.moves()).all(|(p, q)| {
                    p.query() == q.query()
                        && (0..p.probs(0).len()).all(|i| p.child(i) == q.child(i))
                })
        })
}

/// Checks the mixture identity for every deterministic adversary and both
/// inputs, with exact equality for exact scalars.
pub fn verify_simulation<S: Scalar>(
    m: &FiniteMechanism<S>,
    sim: &SimulatorTree<S>,
    limits: &Limits,
) -> Result<SimulationReport> {
    if !same_shape(m, &sim.tree) {
        return Err(Error::Malformed(
            "simulator tree does not match the mechanism's tree".into(),
        ));
    }
    let u = sim.scale.clone();
    let keep = u.clone() / (S::one() + u.clone());
    let flip = S::one() / (S::one() + u);
    let m_law = PathLaw::new(m);
    let t_law = PathLaw::new(&sim.tree);
    let mut report = SimulationReport {
        adversaries_checked: 0,
        violations: Vec::new(),
    };
    for_each_plan(m, limits, |plan| {
        report.adversaries_checked += 1;
        let target = plan_views(m, &m_law, plan);
        let sims = plan_views(&sim.tree, &t_law, plan);
        for b in 0..2 {
            for (i, label) in target[b].support().iter().enumerate() {
                let expected = target[b].masses()[i].clone();
                let actual = keep.clone() * sims[b].masses()[i].clone()
                    + flip.clone() * sims[1 - b].masses()[i].clone();
                if !actual.approx_eq(&expected) {
                    report.violations.push(Violation {
                        adversary: plan.to_strategy(m).to_json(),
                        input: b,
                        transcript: label.clone(),
                        expected: expected.render(),
                        actual: actual.render(),
                        discrepancy: (actual - expected).render(),
                    });
                }
            }
        }
    })?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquivalenceReport<S> {
    /// `PrivLoss(ConComp(ms), δ_g)` as a scale.
    pub concurrent_scale: S,
    /// `PrivLoss(ms[i], 0)` as scales.
    pub component_scales: Vec<S>,
    /// `PrivLoss` of the composed randomized responses at `δ_g`.
    pub rr_scale: S,
}

impl<S: Scalar> EquivalenceReport<S> {
    /// The concurrent composition never loses more than the RR composition.
    pub fn holds(&self) -> bool {
        !(self.concurrent_scale.clone() - self.rr_scale.clone()).is_positive_tol()
    }

    pub fn is_tight(&self) -> bool {
        self.concurrent_scale.approx_eq(&self.rr_scale)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "holds": self.holds(),
            "equal": self.is_tight(),
            "concurrent": {"u": self.concurrent_scale.render(), "eps": ln_of(&self.concurrent_scale)},
            "rr_composition": {"u": self.rr_scale.render(), "eps": ln_of(&self.rr_scale)},
            "components": self.component_scales.iter().map(|u| json!({"u": u.render(), "eps": ln_of(u)})).collect::<Vec<_>>(),
        })
    }
}

/// Compares the privacy loss of the concurrent composition of pure
/// mechanisms against that of composing randomized responses with the
/// same parameters.
pub fn priv_loss_equivalence_check<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    delta_g: &Prob<S>,
    limits: &Limits,
) -> Result<EquivalenceReport<S>> {
    let component_scales = ms
        .iter()
        .map(|m| priv_loss(m, &Prob::zero(), limits).map(|l| l.scale))
        .collect::<Result<Vec<_>>>()?;
    let composed = concomp(ms, limits)?;
    let concurrent_scale = priv_loss(&composed, delta_g, limits)?.scale;
    let pairs = rr_product_pairs(&component_scales);
    let forward = least_scale(pairs.iter().cloned(), delta_g.value())?;
    let backward = least_scale(pairs.into_iter().map(|(p, q)| (q, p)), delta_g.value())?;
    Ok(EquivalenceReport {
        concurrent_scale,
        component_scales,
        rr_scale: S::max_of(forward, backward),
    })
}
