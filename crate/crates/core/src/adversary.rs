//! Deterministic adversaries, exact view distributions and true privacy loss.
//!
//! Randomized adversaries are mixtures of deterministic ones and their
//! hockey-stick divergence is bounded by the worst component, so every
//! routine here ranges over deterministic query policies only.

use std::collections::BTreeMap;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mechanism::{FiniteMechanism, Limits, NodeId};
use crate::prob::{least_scale, FiniteDist, Label, Prob};
use crate::scalar::{ln_of, Scalar};

/// Policy value meaning "stop querying"; the view ends at that history.
pub const HALT: &str = "halt";

/// Distribution over answer transcripts `a0,a1,…`.
pub type ViewDist<S> = FiniteDist<S>;

/// Deterministic query policy: answer history (answers joined by `,`,
/// empty for the first round) to the next query label or [`HALT`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AdversaryStrategy {
    policy: Vec<(String, String)>,
}

impl AdversaryStrategy {
    pub fn from_pairs<K: Into<String>, V: Into<String>>(
        pairs: impl IntoIterator<Item = (K, V)>,
    ) -> Self {
        Self {
            policy: pairs
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        }
    }

    /// Next query after `answers`, if the policy covers that history.
    pub fn query_after(&self, answers: &str) -> Option<&str> {
        self.policy
            .iter()
            .find(|(k, _)| k == answers)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.policy.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.policy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policy.is_empty()
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.policy
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect::<Map<_, _>>(),
        )
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::Parse("strategy must be a JSON object".into()))?;
        obj.iter()
            .map(|(k, v)| {
                v.as_str()
                    .map(|q| (k.clone(), q.to_string()))
                    .ok_or_else(|| Error::ParseAt {
                        location: format!("strategy[{k:?}]"),
                        message: "query must be a string".into(),
                    })
            })
            .collect::<Result<Vec<_>>>()
            .map(|policy| Self { policy })
    }

    /// Resolves the policy against a mechanism's tree.
    pub fn compile<S: Scalar>(&self, m: &FiniteMechanism<S>) -> Result<Plan> {
        let lookup: BTreeMap<&str, &str> = self.iter().collect();
        let mut choice = vec![None; m.nodes().len()];
        let mut stack = vec![m.root()];
        while let Some(node) = stack.pop() {
            let key = answer_key(m, node);
            let query = lookup.get(key.as_str()).ok_or_else(|| {
                Error::IncompatibleStrategy(format!("no query for answer history {key:?}"))
            })?;
            if *query == HALT {
                continue;
            }
            let mv = m.find_move(node, query).ok_or_else(|| {
                Error::IncompatibleStrategy(format!(
                    "query {query:?} is not valid after answer history {key:?}"
                ))
            })?;
            choice[node] = Some(mv);
            stack.extend(
                m.node(node).moves()[mv]
                    .live_answers()
                    .filter_map(|a| m.node(node).moves()[mv].child(a)),
            );
        }
        Ok(Plan { choice })
    }
}

/// A strategy resolved to one move (or a halt) per tree node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Plan {
    choice: Vec<Option<usize>>,
}

impl Plan {
    pub(crate) fn from_choices(choice: Vec<Option<usize>>) -> Self {
        Self { choice }
    }

    pub fn choice(&self, node: NodeId) -> Option<usize> {
        self.choice[node]
    }

    pub fn to_strategy<S: Scalar>(&self, m: &FiniteMechanism<S>) -> AdversaryStrategy {
        let mut policy = Vec::new();
        let mut queue = std::collections::VecDeque::from([m.root()]);
        while let Some(node) = queue.pop_front() {
            match self.choice[node] {
                None => policy.push((answer_key(m, node), HALT.to_string())),
                Some(mv) => {
                    policy.push((answer_key(m, node), m.query_label(node, mv).to_string()));
                    let mo = &m.node(node).moves()[mv];
                    queue.extend(mo.live_answers().filter_map(|a| mo.child(a)));
                }
            }
        }
        AdversaryStrategy { policy }
    }
}

fn answer_key<S: Scalar>(m: &FiniteMechanism<S>, node: NodeId) -> String {
    m.history(node)
        .into_iter()
        .map(|(_, a)| a)
        .collect::<Vec<_>>()
        .join(",")
}

/// Number of deterministic full-depth strategies:
/// `N(node) = Σ_moves Π_children N(child)`.
pub fn count_adversaries<S: Scalar>(m: &FiniteMechanism<S>) -> u128 {
    let mut count = vec![0u128; m.nodes().len()];
    for id in (0..m.nodes().len()).rev() {
        count[id] = m
            .node(id)
            .moves()
            .iter()
            .map(|mo| {
                mo.live_answers()
                    .filter_map(|a| mo.child(a))
                    .fold(1u128, |acc, c| acc.saturating_mul(count[c]))
            })
            .fold(0u128, |acc, n| acc.saturating_add(n));
    }
    count[m.root()]
}

fn check_enumerable<S: Scalar>(m: &FiniteMechanism<S>, limits: &Limits) -> Result<()> {
    m.check_limits(limits)?;
    let count = count_adversaries(m);
    if count > limits.max_strategies {
        return Err(Error::LimitExceeded(format!(
            "{count} deterministic adversaries exceed the limit of {}",
            limits.max_strategies
        )));
    }
    Ok(())
}

/// Calls `visit` on every deterministic full-depth strategy, in a fixed order.
pub fn for_each_plan<S: Scalar>(
    m: &FiniteMechanism<S>,
    limits: &Limits,
    mut visit: impl FnMut(&Plan),
) -> Result<()> {
    check_enumerable(m, limits)?;
    let mut plan = Plan {
        choice: vec![None; m.nodes().len()],
    };
    let mut pending = vec![m.root()];
    fn go<S: Scalar>(
        m: &FiniteMechanism<S>,
        pending: &mut Vec<NodeId>,
        plan: &mut Plan,
        visit: &mut dyn FnMut(&Plan),
    ) {
        let Some(node) = pending.pop() else {
            visit(plan);
            return;
        };
        for (mv, mo) in m.node(node).moves().iter().enumerate() {
            plan.choice[node] = Some(mv);
            let before = pending.len();
            pending.extend(mo.live_answers().filter_map(|a| mo.child(a)));
            go(m, pending, plan, visit);
            pending.truncate(before);
        }
        plan.choice[node] = None;
        pending.push(node);
    }
    go(m, &mut pending, &mut plan, &mut visit);
    Ok(())
}

pub fn enumerate_adversaries<S: Scalar>(
    m: &FiniteMechanism<S>,
    limits: &Limits,
) -> Result<Vec<AdversaryStrategy>> {
    let mut out = Vec::new();
    for_each_plan(m, limits, |plan| out.push(plan.to_strategy(m)))?;
    Ok(out)
}

/// Probability of reaching each node's history under each input, given
/// that the adversary asked the queries on the path.
#[derive(Clone, Debug)]
pub struct PathLaw<S> {
    reach: [Vec<S>; 2],
}

impl<S: Scalar> PathLaw<S> {
    pub fn new(m: &FiniteMechanism<S>) -> Self {
        let n = m.nodes().len();
        let mut reach = [vec![S::zero(); n], vec![S::zero(); n]];
        for r in &mut reach {
            r[m.root()] = S::one();
        }
        for id in 0..n {
            for mo in m.node(id).moves() {
                for a in 0..mo.probs(0).len() {
                    if let Some(child) = mo.child(a) {
                        for (b, r) in reach.iter_mut().enumerate() {
                            r[child] = r[id].clone() * mo.probs(b)[a].clone();
                        }
                    }
                }
            }
        }
        Self { reach }
    }

    pub fn reach(&self, input: usize, node: NodeId) -> &S {
        &self.reach[input][node]
    }
}

/// Views of one plan under both inputs, over a shared transcript support.
pub fn plan_views<S: Scalar>(
    m: &FiniteMechanism<S>,
    law: &PathLaw<S>,
    plan: &Plan,
) -> [ViewDist<S>; 2] {
    let mut labels: Vec<Label> = Vec::new();
    let mut mass = [Vec::new(), Vec::new()];
    let mut stack: Vec<(NodeId, String)> = vec![(m.root(), String::new())];
    while let Some((node, prefix)) = stack.pop() {
        let Some(mv) = plan.choice[node] else {
            labels.push(prefix);
            for (b, ms) in mass.iter_mut().enumerate() {
                ms.push(law.reach[b][node].clone());
            }
            continue;
        };
        let mo = &m.node(node).moves()[mv];
        let alphabet = m.answer_alphabet(m.node(node).depth());
        // reverse so that the stack pops answers in alphabet order
        for a in mo.live_answers().collect::<Vec<_>>().into_iter().rev() {
            let label = if prefix.is_empty() {
                alphabet[a].clone()
            } else {
                format!("{prefix},{}", alphabet[a])
            };
            match mo.child(a) {
                Some(child) => stack.push((child, label)),
                None => {
                    labels.push(label);
                    for (b, ms) in mass.iter_mut().enumerate() {
                        ms.push(law.reach[b][node].clone() * mo.probs(b)[a].clone());
                    }
                }
            }
        }
    }
    let support: std::sync::Arc<[Label]> = labels.into();
    let [m0, m1] = mass;
    [
        FiniteDist::new(support.clone(), m0)
            .expect("views of a validated mechanism are normalized"),
        FiniteDist::new(support, m1).expect("views of a validated mechanism are normalized"),
    ]
}

pub fn view_pair<S: Scalar>(
    m: &FiniteMechanism<S>,
    strategy: &AdversaryStrategy,
) -> Result<[ViewDist<S>; 2]> {
    let plan = strategy.compile(m)?;
    Ok(plan_views(m, &PathLaw::new(m), &plan))
}

/// Exact distribution of answer transcripts for `strategy` against `m` on input `input`.
pub fn view_dist<S: Scalar>(
    m: &FiniteMechanism<S>,
    strategy: &AdversaryStrategy,
    input: usize,
) -> Result<ViewDist<S>> {
    if input > 1 {
        return Err(Error::InvalidParameter(format!(
            "input index must be 0 or 1, got {input}"
        )));
    }
    let [v0, v1] = view_pair(m, strategy)?;
    Ok(if input == 0 { v0 } else { v1 })
}

/// Adversary maximizing `Σ max(P − u·Q, 0)` over transcripts, with `P` the
/// view on input `input` and `Q` the view on the other input.
pub fn best_response<S: Scalar>(
    m: &FiniteMechanism<S>,
    law: &PathLaw<S>,
    scale: &S,
    input: usize,
) -> (S, Plan) {
    let n = m.nodes().len();
    let other = 1 - input;
    let mut value = vec![S::zero(); n];
    let mut choice = vec![None; n];
    for id in (0..n).rev() {
        let p = &law.reach[input][id];
        let q = &law.reach[other][id];
        let mut best: Option<(S, usize)> = None;
        for (mv, mo) in m.node(id).moves().iter().enumerate() {
            let total = mo.live_answers().fold(S::zero(), |acc, a| {
                acc + match mo.child(a) {
                    Some(c) => value[c].clone(),
                    None => (p.clone() * mo.probs(input)[a].clone()
                        - scale.clone() * q.clone() * mo.probs(other)[a].clone())
                    .positive_part(),
                }
            });
            if best.as_ref().is_none_or(|(v, _)| total > *v) {
                best = Some((total, mv));
            }
        }
        if let Some((v, mv)) = best {
            value[id] = v;
            choice[id] = Some(mv);
        }
    }
    (value[m.root()].clone(), Plan { choice })
}

/// `PrivLoss(M, δ)` as a scale `u = e^ε`, with a witnessing adversary.
#[derive(Clone, Debug)]
pub struct PrivLoss<S> {
    pub scale: S,
    pub witness: AdversaryStrategy,
    /// Input whose view is the larger side of the witnessing hockey-stick.
    pub direction: usize,
}

impl<S: Scalar> PrivLoss<S> {
    pub fn eps(&self) -> f64 {
        ln_of(&self.scale)
    }
}

fn check_delta<S: Scalar>(delta: &Prob<S>) -> Result<()> {
    if !(delta.value().clone() < S::one()) {
        return Err(Error::InvalidParameter("delta must be below 1".into()));
    }
    Ok(())
}

/// Least scale `u` such that every deterministic adversary's views are
/// `(ln u, δ)`-indistinguishable in both directions.
///
/// Computed by best-response iteration: at the current `u`, dynamic
/// programming over the tree finds the adversary with the largest
/// hockey-stick; if it exceeds `δ`, `u` jumps to that adversary's exact
/// least scale. Each jump strictly increases `u` and the set of adversaries
/// is finite, so the loop terminates at the exact maximum.
pub fn priv_loss<S: Scalar>(
    m: &FiniteMechanism<S>,
    delta: &Prob<S>,
    limits: &Limits,
) -> Result<PrivLoss<S>> {
    m.check_limits(limits)?;
    check_delta(delta)?;
    let delta = delta.value();
    let law = PathLaw::new(m);
    let mut scale = S::one();
    let mut witness: Option<(Plan, usize)> = None;
    loop {
        let violated = (0..2).find_map(|b| {
            let (value, plan) = best_response(m, &law, &scale, b);
            (value - delta.clone())
                .is_positive_tol()
                .then_some((plan, b))
        });
        let Some((plan, b)) = violated else { break };
        let views = plan_views(m, &law, &plan);
        let next = least_scale(
            views[b]
                .masses()
                .iter()
                .cloned()
                .zip(views[1 - b].masses().iter().cloned()),
            delta,
        )
        .map_err(|e| match e {
            Error::UnboundedEpsilon(msg) => Error::UnboundedEpsilon(format!(
                "adversary {} separates the inputs: {msg}",
                plan.to_strategy(m).to_json()
            )),
            other => other,
        })?;
        if !(next > scale) {
            // float rounding can stall the iteration at a breakpoint
            break;
        }
        scale = next;
        witness = Some((plan, b));
    }
    let (plan, direction) = witness.unwrap_or_else(|| (best_response(m, &law, &scale, 0).1, 0));
    Ok(PrivLoss {
        scale,
        witness: plan.to_strategy(m),
        direction,
    })
}

/// Reference implementation of [`priv_loss`] by explicit enumeration.
pub fn priv_loss_by_enumeration<S: Scalar>(
    m: &FiniteMechanism<S>,
    delta: &Prob<S>,
    limits: &Limits,
) -> Result<PrivLoss<S>> {
    check_delta(delta)?;
    let law = PathLaw::new(m);
    let mut best: Option<(S, Plan, usize)> = None;
    let mut failure = None;
    for_each_plan(m, limits, |plan| {
        if failure.is_some() {
            return;
        }
        let views = plan_views(m, &law, plan);
        for b in 0..2 {
            let pairs = views[b]
                .masses()
                .iter()
                .cloned()
                .zip(views[1 - b].masses().iter().cloned());
            match least_scale(pairs, delta.value()) {
                Ok(u) => {
                    if best.as_ref().is_none_or(|(v, _, _)| u > *v) {
                        best = Some((u, plan.clone(), b));
                    }
                }
                Err(e) => failure = Some(e),
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let (scale, plan, direction) = best.expect("every mechanism has at least one adversary");
    Ok(PrivLoss {
        scale,
        witness: plan.to_strategy(m),
        direction,
    })
}
