//! Finite interactive mechanisms as transcript trees.
//!
//! A mechanism is a tree shared by both inputs `x0`/`x1`. A node is a
//! history of `(query, answer)` pairs; each of its moves is a query that is
//! valid at that history together with the answer distribution under each
//! input. Children exist for every answer with positive mass under either
//! input, so the tree covers exactly the reachable histories. All leaves sit
//! at depth `rounds`.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::prob::{check_scale, FiniteDist, Label, Prob};
use crate::scalar::Scalar;

/// Query of a round whose query is ignored.
pub const DUMMY_QUERY: &str = "_";
/// Answer to null queries and to queries sent to a finished mechanism.
pub const BOTTOM: &str = "⊥";
/// Null query of a null-query extension; real queries are prefixed with `1`.
pub const NULL_QUERY: &str = "0";
/// Query sent to an exhausted component of an ordered composition.
pub const PAD_QUERY: &str = "⊥";

pub type NodeId = usize;

/// Size limits guarding the doubly exponential adversary enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Limits {
    pub max_rounds: usize,
    pub max_alphabet: usize,
    pub max_strategies: u128,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_rounds: 4,
            max_alphabet: 4,
            max_strategies: 1_000_000,
        }
    }
}

impl Limits {
    /// Preset sized for compositions of two 2-round mechanisms and their
    /// ordered null-query normal form.
    pub fn wide() -> Self {
        Self {
            max_rounds: 8,
            max_alphabet: 8,
            max_strategies: 1 << 22,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Move<S> {
    query: usize,
    dist: [Vec<S>; 2],
    children: Vec<Option<NodeId>>,
}

impl<S: Scalar> Move<S> {
    /// Index of the query in its round's query alphabet.
    pub fn query(&self) -> usize {
        self.query
    }

    /// Answer masses under `input`, aligned with the round's answer alphabet.
    pub fn probs(&self, input: usize) -> &[S] {
        &self.dist[input]
    }

    pub fn child(&self, answer: usize) -> Option<NodeId> {
        self.children[answer]
    }

    /// Answers that carry mass under at least one input.
    pub fn live_answers(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.children.len())
            .filter(|&a| !self.dist[0][a].is_zero_tol() || !self.dist[1][a].is_zero_tol())
    }
}

#[derive(Clone, Debug)]
pub struct Node<S> {
    depth: usize,
    parent: Option<(NodeId, usize, usize)>,
    moves: Vec<Move<S>>,
}

impl<S> Node<S> {
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn moves(&self) -> &[Move<S>] {
        &self.moves
    }

    /// `(parent node, move index, answer index)`.
    pub fn parent(&self) -> Option<(NodeId, usize, usize)> {
        self.parent
    }
}

#[derive(Clone, Debug)]
pub struct FiniteMechanism<S> {
    query_alphabet: Vec<Vec<Label>>,
    answer_alphabet: Vec<Arc<[Label]>>,
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> FiniteMechanism<S> {
    pub fn rounds(&self) -> usize {
        self.query_alphabet.len()
    }

    pub fn query_alphabet(&self, round: usize) -> &[Label] {
        &self.query_alphabet[round]
    }

    pub fn answer_alphabet(&self, round: usize) -> &[Label] {
        &self.answer_alphabet[round]
    }

    pub fn root(&self) -> NodeId {
        0
    }

    pub fn node(&self, id: NodeId) -> &Node<S> {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn query_label(&self, node: NodeId, mv: usize) -> &str {
        let n = &self.nodes[node];
        &self.query_alphabet[n.depth][n.moves[mv].query]
    }

    pub fn find_move(&self, node: NodeId, query: &str) -> Option<usize> {
        let n = &self.nodes[node];
        n.moves
            .iter()
            .position(|m| self.query_alphabet[n.depth][m.query] == query)
    }

    /// Answer distribution of a move under `input`.
    pub fn dist(&self, node: NodeId, mv: usize, input: usize) -> FiniteDist<S> {
        let n = &self.nodes[node];
        FiniteDist::new(
            self.answer_alphabet[n.depth].clone(),
            n.moves[mv].dist[input].clone(),
        )
        .expect("branch distributions are validated at construction")
    }

    /// `(query, answer)` labels from the root to `node`.
    pub fn history(&self, node: NodeId) -> Vec<(Label, Label)> {
        let mut pairs = Vec::with_capacity(self.nodes[node].depth);
        let mut cur = node;
        while let Some((parent, mv, answer)) = self.nodes[cur].parent {
            let depth = self.nodes[parent].depth;
            let m = &self.nodes[parent].moves[mv];
            pairs.push((
                self.query_alphabet[depth][m.query].clone(),
                self.answer_alphabet[depth][answer].clone(),
            ));
            cur = parent;
        }
        pairs.reverse();
        pairs
    }

    /// Node reached by a labeled history, if it is in the tree.
    pub fn locate(&self, history: &[(Label, Label)]) -> Option<NodeId> {
        let mut node = self.root();
        for (query, answer) in history {
            let depth = self.nodes[node].depth;
            let mv = self.find_move(node, query)?;
            let a = self.answer_alphabet[depth]
                .iter()
                .position(|l| l == answer)?;
            node = self.nodes[node].moves[mv].children[a]?;
        }
        Some(node)
    }

    /// Conditional answer distribution for `input` after `history` on `query`.
    pub fn branch(
        &self,
        input: usize,
        history: &[(Label, Label)],
        query: &str,
    ) -> Option<FiniteDist<S>> {
        let node = self.locate(history)?;
        let mv = self.find_move(node, query)?;
        Some(self.dist(node, mv, input))
    }

    pub fn check_limits(&self, limits: &Limits) -> Result<()> {
        if self.rounds() > limits.max_rounds {
            return Err(Error::LimitExceeded(format!(
                "{} rounds exceeds the limit of {}",
                self.rounds(),
                limits.max_rounds
            )));
        }
        for round in 0..self.rounds() {
            let widest = self.query_alphabet[round]
                .len()
                .max(self.answer_alphabet[round].len());
            if widest > limits.max_alphabet {
                return Err(Error::LimitExceeded(format!(
                    "round {round} alphabet of size {widest} exceeds the limit of {}",
                    limits.max_alphabet
                )));
            }
        }
        Ok(())
    }

    /// True when both inputs induce identical branch distributions everywhere.
    pub fn is_input_independent(&self) -> bool {
        self.nodes.iter().flat_map(|n| &n.moves).all(|m| {
            m.dist[0]
                .iter()
                .zip(&m.dist[1])
                .all(|(a, b)| a.approx_eq(b))
        })
    }

    /// Same tree with inputs exchanged.
    pub fn swap_inputs(&self) -> Self {
        let mut out = self.clone();
        for node in &mut out.nodes {
            for m in &mut node.moves {
                m.dist.swap(0, 1);
            }
        }
        out
    }

    pub fn map_scalar<T: Scalar>(&self, f: impl Fn(&S) -> T) -> FiniteMechanism<T> {
        FiniteMechanism {
            query_alphabet: self.query_alphabet.clone(),
            answer_alphabet: self.answer_alphabet.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| Node {
                    depth: n.depth,
                    parent: n.parent,
                    moves: n
                        .moves
                        .iter()
                        .map(|m| Move {
                            query: m.query,
                            dist: [
                                m.dist[0].iter().map(&f).collect(),
                                m.dist[1].iter().map(&f).collect(),
                            ],
                            children: m.children.clone(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    /// Replaces every branch distribution; the tree shape is kept.
    pub(crate) fn with_dists(
        &self,
        mut f: impl FnMut(NodeId, usize) -> [Vec<S>; 2],
    ) -> Result<Self> {
        let mut out = self.clone();
        for (id, node) in out.nodes.iter_mut().enumerate() {
            for (mv, m) in node.moves.iter_mut().enumerate() {
                m.dist = f(id, mv);
            }
        }
        out.validate()?;
        Ok(out)
    }

    /// Canonical key `q0,a0,q1,a1|q` of a node's move.
    pub fn branch_key(&self, node: NodeId, mv: usize) -> String {
        format!(
            "{}|{}",
            history_key(&self.history(node)),
            self.query_label(node, mv)
        )
    }

    /// Checks normalization and tree well-formedness.
    pub fn validate(&self) -> Result<()> {
        for (id, node) in self.nodes.iter().enumerate() {
            let depth = node.depth;
            if node.moves.is_empty() {
                return Err(Error::Malformed(format!(
                    "history {:?} has no valid query before the final round",
                    history_key(&self.history(id))
                )));
            }
            for (mv, m) in node.moves.iter().enumerate() {
                for input in 0..2 {
                    FiniteDist::validate(
                        &self.answer_alphabet[depth],
                        &m.dist[input],
                        &format!("x{input} {}", self.branch_key(id, mv)),
                    )?;
                }
                for a in 0..m.children.len() {
                    let live = !m.dist[0][a].is_zero_tol() || !m.dist[1][a].is_zero_tol();
                    if live && depth + 1 < self.rounds() && m.children[a].is_none() {
                        return Err(Error::Malformed(format!(
                            "reachable history {}|{} has no subtree",
                            self.branch_key(id, mv),
                            self.answer_alphabet[depth][a]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Canonical key of a labeled history.
pub fn history_key(history: &[(Label, Label)]) -> String {
    let mut parts = Vec::with_capacity(history.len() * 2);
    for (q, a) in history {
        parts.push(q.as_str());
        parts.push(a.as_str());
    }
    parts.join(",")
}

pub(crate) fn check_label(label: &str) -> Result<()> {
    if label.is_empty() || label.contains([',', '|']) {
        return Err(Error::Malformed(format!(
            "label {label:?} is empty or contains ',' or '|'"
        )));
    }
    Ok(())
}

/// One answer of a move being built: label, masses under both inputs, and
/// the state to expand below it.
pub(crate) struct AnswerSpec<S, St> {
    pub label: Label,
    pub mass: [S; 2],
    pub next: Option<St>,
}

pub(crate) struct MoveSpec<S, St> {
    pub query: Label,
    pub answers: Vec<AnswerSpec<S, St>>,
}

/// Breadth-first tree construction from an expansion function over states.
pub(crate) struct TreeBuilder {
    queries: Vec<Vec<Label>>,
    answers: Vec<Vec<Label>>,
    query_index: Vec<HashMap<Label, usize>>,
    answer_index: Vec<HashMap<Label, usize>>,
}

impl TreeBuilder {
    pub fn new(rounds: usize) -> Self {
        Self {
            queries: vec![Vec::new(); rounds],
            answers: vec![Vec::new(); rounds],
            query_index: vec![HashMap::new(); rounds],
            answer_index: vec![HashMap::new(); rounds],
        }
    }

    /// Fixes the label order of a round up front.
    pub fn declare(mut self, round: usize, queries: &[&str], answers: &[&str]) -> Self {
        for q in queries {
            Self::intern(&mut self.queries[round], &mut self.query_index[round], q);
        }
        for a in answers {
            Self::intern(&mut self.answers[round], &mut self.answer_index[round], a);
        }
        self
    }

    fn intern(labels: &mut Vec<Label>, index: &mut HashMap<Label, usize>, label: &str) -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        labels.push(label.to_string());
        index.insert(label.to_string(), labels.len() - 1);
        labels.len() - 1
    }

    pub fn build<S: Scalar, St>(
        mut self,
        root: St,
        mut expand: impl FnMut(&St, usize) -> Result<Vec<MoveSpec<S, St>>>,
    ) -> Result<FiniteMechanism<S>> {
        let rounds = self.queries.len();
        if rounds == 0 {
            return Err(Error::InvalidParameter(
                "a mechanism needs at least one round".into(),
            ));
        }
        struct Draft<S> {
            depth: usize,
            parent: Option<(NodeId, usize, usize)>,
            moves: Vec<(usize, Vec<(usize, [S; 2], Option<NodeId>)>)>,
        }
        let mut drafts: Vec<Draft<S>> = vec![Draft {
            depth: 0,
            parent: None,
            moves: Vec::new(),
        }];
        let mut queue = VecDeque::from([(0usize, root)]);
        while let Some((id, state)) = queue.pop_front() {
            let depth = drafts[id].depth;
            let specs = expand(&state, depth)?;
            if specs.is_empty() {
                return Err(Error::Malformed(format!("no valid query at depth {depth}")));
            }
            let mut moves = Vec::with_capacity(specs.len());
            for (mv, spec) in specs.into_iter().enumerate() {
                check_label(&spec.query)?;
                let q = Self::intern(
                    &mut self.queries[depth],
                    &mut self.query_index[depth],
                    &spec.query,
                );
                if moves.iter().any(|(other, _)| *other == q) {
                    return Err(Error::Malformed(format!(
                        "duplicate query {:?} at depth {depth}",
                        spec.query
                    )));
                }
                let mut answers = Vec::with_capacity(spec.answers.len());
                for ans in spec.answers {
                    check_label(&ans.label)?;
                    let a = Self::intern(
                        &mut self.answers[depth],
                        &mut self.answer_index[depth],
                        &ans.label,
                    );
                    let live = !ans.mass[0].is_zero_tol() || !ans.mass[1].is_zero_tol();
                    let child = if live && depth + 1 < rounds {
                        let next = ans.next.ok_or_else(|| {
                            Error::Malformed(format!(
                                "reachable answer {:?} at depth {depth} has no continuation",
                                ans.label
                            ))
                        })?;
                        let child = drafts.len();
                        drafts.push(Draft {
                            depth: depth + 1,
                            parent: Some((id, mv, a)),
                            moves: Vec::new(),
                        });
                        queue.push_back((child, next));
                        Some(child)
                    } else {
                        None
                    };
                    answers.push((a, ans.mass, child));
                }
                moves.push((q, answers));
            }
            drafts[id].moves = moves;
        }
        let answer_alphabet: Vec<Arc<[Label]>> =
            self.answers.iter().map(|a| Arc::from(a.clone())).collect();
        let nodes = drafts
            .into_iter()
            .map(|d| {
                let width = answer_alphabet[d.depth].len();
                Node {
                    depth: d.depth,
                    parent: d.parent,
                    moves: d
                        .moves
                        .into_iter()
                        .map(|(query, answers)| {
                            let mut dist = [vec![S::zero(); width], vec![S::zero(); width]];
                            let mut children = vec![None; width];
                            for (a, [p0, p1], child) in answers {
                                dist[0][a] = dist[0][a].clone() + p0;
                                dist[1][a] = dist[1][a].clone() + p1;
                                children[a] = children[a].or(child);
                            }
                            Move {
                                query,
                                dist,
                                children,
                            }
                        })
                        .collect(),
                }
            })
            .collect();
        let mechanism = FiniteMechanism {
            query_alphabet: self.queries,
            answer_alphabet,
            nodes,
        };
        mechanism.validate()?;
        Ok(mechanism)
    }
}

/// Output symbols of approximate randomized response.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RRSymbol {
    Zero,
    One,
    Iam0,
    Iam1,
}

impl RRSymbol {
    pub const ALL: [RRSymbol; 4] = [
        RRSymbol::Zero,
        RRSymbol::One,
        RRSymbol::Iam0,
        RRSymbol::Iam1,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RRSymbol::Zero => "0",
            RRSymbol::One => "1",
            RRSymbol::Iam0 => "Iam0",
            RRSymbol::Iam1 => "Iam1",
        }
    }

    /// Probability of this output under input bit `b` for `RR_(ε,δ)` at scale `u`.
    pub fn prob<S: Scalar>(self, b: usize, scale: &S, delta: &S) -> S {
        let keep = (S::one() - delta.clone()) * scale.clone() / (S::one() + scale.clone());
        let flip = (S::one() - delta.clone()) / (S::one() + scale.clone());
        match (self, b) {
            (RRSymbol::Zero, 0) | (RRSymbol::One, 1) => keep,
            (RRSymbol::Zero, _) | (RRSymbol::One, _) => flip,
            (RRSymbol::Iam0, 0) | (RRSymbol::Iam1, 1) => delta.clone(),
            _ => S::zero(),
        }
    }
}

/// Pure randomized response at scale `u = e^ε`: reports `b` w.p. `u/(1+u)`.
pub fn rr_pure<S: Scalar>(scale: S) -> Result<FiniteMechanism<S>> {
    check_scale(&scale)?;
    let stay = scale.clone() / (S::one() + scale.clone());
    let flip = S::one() / (S::one() + scale);
    TreeBuilder::new(1)
        .declare(0, &[DUMMY_QUERY], &["0", "1"])
        .build((), |_, _| {
            Ok(vec![MoveSpec {
                query: DUMMY_QUERY.into(),
                answers: vec![
                    AnswerSpec {
                        label: "0".into(),
                        mass: [stay.clone(), flip.clone()],
                        next: None,
                    },
                    AnswerSpec {
                        label: "1".into(),
                        mass: [flip.clone(), stay.clone()],
                        next: None,
                    },
                ],
            }])
        })
}

/// Approximate randomized response over `{0, 1, Iam0, Iam1}`.
pub fn rr_approx<S: Scalar>(scale: S, delta: &Prob<S>) -> Result<FiniteMechanism<S>> {
    check_scale(&scale)?;
    let delta = delta.value().clone();
    if !(delta < S::one()) {
        return Err(Error::InvalidParameter("delta must be below 1".into()));
    }
    let labels: Vec<&str> = RRSymbol::ALL.iter().map(|s| s.label()).collect();
    TreeBuilder::new(1)
        .declare(0, &[DUMMY_QUERY], &labels)
        .build((), |_, _| {
            Ok(vec![MoveSpec {
                query: DUMMY_QUERY.into(),
                answers: RRSymbol::ALL
                    .iter()
                    .map(|s| AnswerSpec {
                        label: s.label().into(),
                        mass: [s.prob(0, &scale, &delta), s.prob(1, &scale, &delta)],
                        next: None,
                    })
                    .collect(),
            }])
        })
}

/// Parameters of the binary 2-round mechanism: first-round bias and
/// second-round conditionals for each input.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoRoundParams<S> {
    /// `first[b] = Pr[a0 = 0 | x_b]`.
    pub first: [S; 2],
    /// `second[b][a0][q] = Pr[a1 = 0 | x_b, a0, q]`.
    pub second: [[[S; 2]; 2]; 2],
}

impl<S: Scalar> TwoRoundParams<S> {
    /// From `(p0, p00, p01, p10, p11, p0', p00', p01', p10', p11')`.
    pub fn from_array(p: [S; 10]) -> Result<Self> {
        for v in &p {
            Prob::new(v.clone())?;
        }
        let [p0, p00, p01, p10, p11, q0, q00, q01, q10, q11] = p;
        Ok(Self {
            first: [p0, q0],
            second: [[[p00, p01], [p10, p11]], [[q00, q01], [q10, q11]]],
        })
    }

    pub fn to_array(&self) -> [S; 10] {
        let [[[p00, p01], [p10, p11]], [[q00, q01], [q10, q11]]] = self.second.clone();
        let [p0, q0] = self.first.clone();
        [p0, p00, p01, p10, p11, q0, q00, q01, q10, q11]
    }

    pub const NAMES: [&'static str; 10] = [
        "p0", "p00", "p01", "p10", "p11", "p0'", "p00'", "p01'", "p10'", "p11'",
    ];
}

/// The 2-round binary mechanism: a first bit regardless of the (dummy)
/// query, then a second bit depending on the first bit and a query bit.
pub fn two_round<S: Scalar>(params: &TwoRoundParams<S>) -> Result<FiniteMechanism<S>> {
    #[derive(Clone, Copy)]
    enum St {
        Start,
        After(usize),
    }
    let bit = |p0: S, p1: S| -> [S; 2] { [p0, p1] };
    TreeBuilder::new(2)
        .declare(0, &[DUMMY_QUERY], &["0", "1"])
        .declare(1, &["0", "1"], &["0", "1"])
        .build(St::Start, |state, _| {
            Ok(match *state {
                St::Start => {
                    let zero = bit(params.first[0].clone(), params.first[1].clone());
                    let one = bit(
                        S::one() - params.first[0].clone(),
                        S::one() - params.first[1].clone(),
                    );
                    vec![MoveSpec {
                        query: DUMMY_QUERY.into(),
                        answers: vec![
                            AnswerSpec {
                                label: "0".into(),
                                mass: zero,
                                next: Some(St::After(0)),
                            },
                            AnswerSpec {
                                label: "1".into(),
                                mass: one,
                                next: Some(St::After(1)),
                            },
                        ],
                    }]
                }
                St::After(a0) => (0..2)
                    .map(|q| {
                        let z = bit(
                            params.second[0][a0][q].clone(),
                            params.second[1][a0][q].clone(),
                        );
                        let o = bit(
                            S::one() - params.second[0][a0][q].clone(),
                            S::one() - params.second[1][a0][q].clone(),
                        );
                        MoveSpec {
                            query: q.to_string(),
                            answers: vec![
                                AnswerSpec {
                                    label: "0".into(),
                                    mass: z,
                                    next: None,
                                },
                                AnswerSpec {
                                    label: "1".into(),
                                    mass: o,
                                    next: None,
                                },
                            ],
                        }
                    })
                    .collect(),
            })
        })
}

/// Null-query extension run for `rounds` outer rounds. The null query is
/// answered with `⊥` and leaves the inner history untouched; a real query
/// `q` is sent as `1q`.
pub fn null_extension<S: Scalar>(
    m: &FiniteMechanism<S>,
    rounds: usize,
) -> Result<FiniteMechanism<S>> {
    if rounds < m.rounds() {
        return Err(Error::InvalidParameter(format!(
            "null extension needs at least {} rounds, got {rounds}",
            m.rounds()
        )));
    }
    // state: inner node, or None once the inner mechanism has finished
    TreeBuilder::new(rounds).build(Some(m.root()), |state: &Option<NodeId>, _| {
        let mut specs = vec![MoveSpec {
            query: NULL_QUERY.into(),
            answers: vec![AnswerSpec {
                label: BOTTOM.into(),
                mass: [S::one(), S::one()],
                next: Some(*state),
            }],
        }];
        if let Some(inner) = *state {
            let node = m.node(inner);
            for (mv, mo) in node.moves().iter().enumerate() {
                specs.push(MoveSpec {
                    query: format!("1{}", m.query_label(inner, mv)),
                    answers: (0..mo.children.len())
                        .map(|a| AnswerSpec {
                            label: m.answer_alphabet(node.depth())[a].clone(),
                            mass: [mo.dist[0][a].clone(), mo.dist[1][a].clone()],
                            next: Some(mo.children[a]),
                        })
                        .collect(),
                });
            }
        }
        Ok(specs)
    })
}
