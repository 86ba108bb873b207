//! Concurrent composition: free-order (tagged queries), ordered
//! round-robin, and the translation between them through null-query
//! extensions.

use crate::adversary::{for_each_plan, PathLaw, Plan};
use crate::error::{Error, Result};
use crate::mechanism::{
    null_extension, AnswerSpec, FiniteMechanism, Limits, MoveSpec, NodeId, TreeBuilder, BOTTOM,
    NULL_QUERY, PAD_QUERY,
};
use crate::scalar::Scalar;

/// Query routed to component `index`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaggedQuery {
    pub index: usize,
    pub query: String,
}

impl TaggedQuery {
    /// Renders as `j:q`.
    pub fn label(&self) -> String {
        format!("{}:{}", self.index, self.query)
    }

    pub fn parse(label: &str) -> Result<Self> {
        let (index, query) = label
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("tagged query {label:?} lacks an index")))?;
        let index = index
            .parse()
            .map_err(|_| Error::Parse(format!("bad component index in {label:?}")))?;
        Ok(Self {
            index,
            query: query.to_string(),
        })
    }
}

fn default_inputs(k: usize) -> Vec<[usize; 2]> {
    vec![[0, 1]; k]
}

fn check_inputs<S: Scalar>(ms: &[FiniteMechanism<S>], inputs: &[[usize; 2]]) -> Result<()> {
    if ms.is_empty() {
        return Err(Error::InvalidParameter(
            "composition needs at least one mechanism".into(),
        ));
    }
    if inputs.len() != ms.len() {
        return Err(Error::InvalidParameter(format!(
            "{} input maps for {} mechanisms",
            inputs.len(),
            ms.len()
        )));
    }
    if inputs.iter().flatten().any(|&b| b > 1) {
        return Err(Error::InvalidParameter(
            "component input indices must be 0 or 1".into(),
        ));
    }
    Ok(())
}

fn component_answers<S: Scalar, St>(
    m: &FiniteMechanism<S>,
    node: NodeId,
    mv: usize,
    inputs: [usize; 2],
    mut next: impl FnMut(Option<NodeId>) -> St,
) -> Vec<AnswerSpec<S, St>> {
    let mo = &m.node(node).moves()[mv];
    let alphabet = m.answer_alphabet(m.node(node).depth());
    (0..alphabet.len())
        .map(|a| AnswerSpec {
            label: alphabet[a].clone(),
            mass: [
                mo.probs(inputs[0])[a].clone(),
                mo.probs(inputs[1])[a].clone(),
            ],
            next: Some(next(mo.child(a))),
        })
        .collect()
}

/// Free-order concurrent composition: each round the adversary picks a
/// component by tagging its query `j:q`; components use independent coins.
pub fn concomp<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    limits: &Limits,
) -> Result<FiniteMechanism<S>> {
    concomp_with_inputs(ms, &default_inputs(ms.len()), limits)
}

/// [`concomp`] where component `j` sees input `inputs[j][b]` when the
/// composition runs on input `b`.
pub fn concomp_with_inputs<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    inputs: &[[usize; 2]],
    limits: &Limits,
) -> Result<FiniteMechanism<S>> {
    check_inputs(ms, inputs)?;
    let rounds: usize = ms.iter().map(|m| m.rounds()).sum();
    check_rounds(rounds, limits)?;
    let root: Vec<Option<NodeId>> = ms.iter().map(|m| Some(m.root())).collect();
    let composed = TreeBuilder::new(rounds).build(root, |state: &Vec<Option<NodeId>>, _| {
        let mut specs = Vec::new();
        for (j, m) in ms.iter().enumerate() {
            let Some(node) = state[j] else { continue };
            for mv in 0..m.node(node).moves().len() {
                let answers = component_answers(m, node, mv, inputs[j], |child| {
                    let mut next = state.clone();
                    next[j] = child;
                    next
                });
                specs.push(MoveSpec {
                    query: TaggedQuery {
                        index: j,
                        query: m.query_label(node, mv).into(),
                    }
                    .label(),
                    answers,
                });
            }
        }
        Ok(specs)
    })?;
    composed.check_limits(limits)?;
    Ok(composed)
}

/// Ordered concurrent composition: round `i` goes to component `i mod k`.
/// Components shorter than the longest one are padded with the query `⊥`,
/// answered `⊥`.
pub fn ordered_concomp<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    limits: &Limits,
) -> Result<FiniteMechanism<S>> {
    ordered_concomp_with_inputs(ms, &default_inputs(ms.len()), limits)
}

pub fn ordered_concomp_with_inputs<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    inputs: &[[usize; 2]],
    limits: &Limits,
) -> Result<FiniteMechanism<S>> {
    check_inputs(ms, inputs)?;
    let k = ms.len();
    let longest = ms.iter().map(|m| m.rounds()).max().unwrap_or(0);
    check_rounds(k * longest, limits)?;
    let root: Vec<Option<NodeId>> = ms.iter().map(|m| Some(m.root())).collect();
    let composed =
        TreeBuilder::new(k * longest).build(root, |state: &Vec<Option<NodeId>>, depth| {
            let j = depth % k;
            let m = &ms[j];
            Ok(match state[j] {
                None => vec![MoveSpec {
                    query: PAD_QUERY.into(),
                    answers: vec![AnswerSpec {
                        label: BOTTOM.into(),
                        mass: [S::one(), S::one()],
                        next: Some(state.clone()),
                    }],
                }],
                Some(node) => (0..m.node(node).moves().len())
                    .map(|mv| MoveSpec {
                        query: m.query_label(node, mv).into(),
                        answers: component_answers(m, node, mv, inputs[j], |child| {
                            let mut next = state.clone();
                            next[j] = child;
                            next
                        }),
                    })
                    .collect(),
            })
        })?;
    composed.check_limits(limits)?;
    Ok(composed)
}

fn check_rounds(rounds: usize, limits: &Limits) -> Result<()> {
    if rounds > limits.max_rounds {
        return Err(Error::LimitExceeded(format!(
            "composition has {rounds} rounds, limit is {}",
            limits.max_rounds
        )));
    }
    Ok(())
}

/// Ordered composition of null-query extensions that can replay any
/// free-order schedule of `ms`: each component gets one outer round per
/// free-order round.
pub fn ordered_null_normal_form<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    limits: &Limits,
) -> Result<FiniteMechanism<S>> {
    let total: usize = ms.iter().map(|m| m.rounds()).sum();
    let extended = ms
        .iter()
        .map(|m| null_extension(m, total))
        .collect::<Result<Vec<_>>>()?;
    ordered_concomp(&extended, limits)
}

/// One free-order round replayed as a block of `k` ordered positions.
struct Block {
    /// Ordered `(node, move)` choices made inside the block.
    choices: Vec<(NodeId, usize)>,
    /// Per live free answer `a`: the last ordered node of the block, the
    /// move taken there and the ordered answer index carrying `a`.
    exits: Vec<(usize, NodeId, usize, usize)>,
}

/// Replays free move `mv` at free node `f` from ordered node `o`: query
/// `j:q` becomes `1q` at position `j` and the null query elsewhere.
fn replay_block<S: Scalar>(
    free: &FiniteMechanism<S>,
    ordered: &FiniteMechanism<S>,
    k: usize,
    f: NodeId,
    mv: usize,
    o: NodeId,
) -> Result<Block> {
    let tagged = TaggedQuery::parse(free.query_label(f, mv))?;
    let mo = &free.node(f).moves()[mv];
    let free_alphabet = free.answer_alphabet(free.node(f).depth());
    let mut block = Block {
        choices: Vec::new(),
        exits: Vec::new(),
    };
    // the free answer rides along once the real query has been answered
    let mut frontier: Vec<(NodeId, Option<usize>)> = vec![(o, None)];
    for position in 0..k {
        let last = position + 1 == k;
        let mut next = Vec::new();
        for (node, answer) in frontier {
            let label = if position == tagged.index {
                format!("1{}", tagged.query)
            } else {
                NULL_QUERY.to_string()
            };
            let omv = ordered.find_move(node, &label).ok_or_else(|| {
                Error::IncompatibleStrategy(format!(
                    "ordered form has no query {label:?} at this history"
                ))
            })?;
            block.choices.push((node, omv));
            let omo = &ordered.node(node).moves()[omv];
            let oalpha = ordered.answer_alphabet(ordered.node(node).depth());
            let mut step = |oa: usize, a: Option<usize>| -> Result<()> {
                if last {
                    block.exits.push((
                        a.expect("the block contains the real query"),
                        node,
                        omv,
                        oa,
                    ));
                    return Ok(());
                }
                let child = omo
                    .child(oa)
                    .ok_or_else(|| Error::Malformed("ordered form ends inside a block".into()))?;
                next.push((child, a));
                Ok(())
            };
            if position == tagged.index {
                for a in mo.live_answers() {
                    let oa = oalpha
                        .iter()
                        .position(|l| *l == free_alphabet[a])
                        .ok_or_else(|| {
                            Error::Malformed(format!(
                                "answer {:?} missing from the ordered form",
                                free_alphabet[a]
                            ))
                        })?;
                    step(oa, Some(a))?;
                }
            } else {
                let bottom = oalpha
                    .iter()
                    .position(|l| l == BOTTOM)
                    .expect("null queries answer ⊥");
                step(bottom, answer)?;
            }
        }
        frontier = next;
    }
    Ok(block)
}

/// Translates a free-order plan into the ordered null-extended form: the
/// free round `t` query `j:q` becomes block `t`, with `1q` sent to
/// component `j` and the null query to every other component.
pub fn translate_plan<S: Scalar>(
    free: &FiniteMechanism<S>,
    ordered: &FiniteMechanism<S>,
    k: usize,
    plan: &Plan,
) -> Result<Plan> {
    let mut choice = vec![None; ordered.nodes().len()];
    let mut stack = vec![(free.root(), ordered.root())];
    while let Some((f, o)) = stack.pop() {
        let Some(mv) = plan.choice(f) else { continue };
        let block = replay_block(free, ordered, k, f, mv, o)?;
        for (node, omv) in block.choices {
            choice[node] = Some(omv);
        }
        let mo = &free.node(f).moves()[mv];
        for (a, node, omv, oa) in block.exits {
            if let (Some(fc), Some(oc)) = (mo.child(a), ordered.node(node).moves()[omv].child(oa)) {
                stack.push((fc, oc));
            }
        }
    }
    Ok(Plan::from_choices(choice))
}

/// Outcome of [`normal_form_check`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NormalFormReport {
    pub adversaries_checked: u64,
    pub mismatches: Vec<String>,
}

const MAX_REPORTED: usize = 100;

/// A free step `(answer, child)` with the free and ordered masses of the
/// transcript it ends.
type Exit<S> = (usize, Option<NodeId>, [S; 2], [S; 2]);

/// For every deterministic adversary against `concomp(ms)`, checks that its
/// translation against [`ordered_null_normal_form`] yields the same view
/// once the `⊥` answers of null queries are deleted.
///
/// The translation is local to each free `(node, move)`, so the blocks are
/// replayed once up front; each adversary then compares its free transcript
/// masses with those of the matching ordered transcripts. Both views are
/// normalized and stripping is injective on matched transcripts, so
/// pointwise equality is equality of the views.
pub fn normal_form_check<S: Scalar>(
    ms: &[FiniteMechanism<S>],
    limits: &Limits,
) -> Result<NormalFormReport> {
    let free = concomp(ms, limits)?;
    let ordered = ordered_null_normal_form(ms, limits)?;
    let free_law = PathLaw::new(&free);
    let ordered_law = PathLaw::new(&ordered);
    let n = free.nodes().len();
    // ordered block-start node of each free node; children have larger ids
    let mut start = vec![None; n];
    start[free.root()] = Some(ordered.root());
    let mut exits: Vec<Vec<Vec<Exit<S>>>> = Vec::with_capacity(n);
    for f in 0..n {
        let o = start[f]
            .ok_or_else(|| Error::Malformed("free node without an ordered counterpart".into()))?;
        let mut per_move = Vec::new();
        for (mv, mo) in free.node(f).moves().iter().enumerate() {
            let block = replay_block(&free, &ordered, ms.len(), f, mv, o)?;
            let mut out = Vec::new();
            for (a, node, omv, oa) in block.exits {
                let omo = &ordered.node(node).moves()[omv];
                let fc = mo.child(a);
                if let Some(fc) = fc {
                    let oc = omo.child(oa).ok_or_else(|| {
                        Error::Malformed("ordered form is shorter than the free form".into())
                    })?;
                    start[fc] = Some(oc);
                }
                let own =
                    std::array::from_fn(|b| free_law.reach(b, f).clone() * mo.probs(b)[a].clone());
                let mass = std::array::from_fn(|b| {
                    ordered_law.reach(b, node).clone() * omo.probs(b)[oa].clone()
                });
                out.push((a, fc, own, mass));
            }
            per_move.push(out);
        }
        exits.push(per_move);
    }
    let transcript = |f: NodeId, last: Option<usize>| {
        let mut labels: Vec<String> = free.history(f).into_iter().map(|(_, a)| a).collect();
        labels.extend(last.map(|a| free.answer_alphabet(free.node(f).depth())[a].clone()));
        labels.join(",")
    };
    let mut report = NormalFormReport::default();
    for_each_plan(&free, limits, |plan| {
        report.adversaries_checked += 1;
        let mut stack = vec![free.root()];
        while let Some(f) = stack.pop() {
            let mut compare = |expected: [&S; 2], actual: [&S; 2], last: Option<usize>| {
                for b in 0..2 {
                    if !expected[b].approx_eq(actual[b]) && report.mismatches.len() < MAX_REPORTED {
                        report.mismatches.push(format!(
                            "adversary {} on input {b}: transcript {:?} has free mass {:?} but ordered mass {:?}",
                            plan.to_strategy(&free).to_json(),
                            transcript(f, last),
                            expected[b],
                            actual[b]
                        ));
                    }
                }
            };
            let Some(mv) = plan.choice(f) else {
                let o = start[f].expect("every free node has a block start");
                compare(
                    [free_law.reach(0, f), free_law.reach(1, f)],
                    [ordered_law.reach(0, o), ordered_law.reach(1, o)],
                    None,
                );
                continue;
            };
            for (a, fc, own, mass) in &exits[f][mv] {
                match fc {
                    Some(child) => stack.push(*child),
                    None => compare([&own[0], &own[1]], [&mass[0], &mass[1]], Some(*a)),
                }
            }
        }
    })?;
    Ok(report)
}

/// Deletes `⊥` answers from a transcript label.
pub fn strip_nulls(transcript: &str) -> String {
    transcript
        .split(',')
        .filter(|a| *a != BOTTOM)
        .collect::<Vec<_>>()
        .join(",")
}
