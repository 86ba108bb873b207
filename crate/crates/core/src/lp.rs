//! Exact feasibility of simulating a binary 2-round mechanism by
//! interactive post-processing of approximate randomized response.
//!
//! The unknowns are `Pr[T⃗(c, q) = (a0, a1)]` for the RR output symbol `c`,
//! the second-round query `q` and the two answers. The system is solved by
//! a Phase-1 simplex over rationals with Bland's rule, so degenerate
//! instances sitting exactly on a facet are decided without tolerances.

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::mechanism::{FiniteMechanism, RRSymbol, DUMMY_QUERY};
use crate::prob::{check_scale, Prob};
use crate::scalar::format_rational;
use crate::Rational;
use num_traits::{One, Signed, Zero};

pub const NUM_VARS: usize = 32;

/// Column of `Pr[T⃗(c, q) = (a0, a1)]`, with `c` indexing [`RRSymbol::ALL`].
pub fn var_index(c: usize, q: usize, a0: usize, a1: usize) -> usize {
    c * 8 + q * 4 + a0 * 2 + a1
}

fn var_label(j: usize) -> String {
    let (c, q, a0, a1) = (j / 8, (j / 4) % 2, (j / 2) % 2, j % 2);
    format!("T({},{q})=({a0},{a1})", RRSymbol::ALL[c].label())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowFamily {
    Mixture,
    Normalization,
    Consistency,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub family: RowFamily,
    pub label: String,
    pub coeffs: Vec<Rational>,
    pub rhs: Rational,
}

/// Equality system `A x = b` over nonnegative `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LpSystem {
    variables: Vec<String>,
    rows: Vec<LpRow>,
}

impl LpSystem {
    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    /// Exact substitution check: `x ≥ 0` and every row holds with equality.
    pub fn satisfied_by(&self, x: &[Rational]) -> bool {
        x.len() == self.variables.len()
            && x.iter().all(|v| !v.is_negative())
            && self.rows.iter().all(|r| dot(&r.coeffs, x) == r.rhs)
    }

    /// Checks a Farkas ray: `Aᵀy ≥ 0` componentwise and `bᵀy < 0`.
    pub fn certifies_infeasible(&self, y: &[Rational]) -> bool {
        if y.len() != self.rows.len() {
            return false;
        }
        let by: Rational = self.rows.iter().zip(y).map(|(r, w)| &r.rhs * w).sum();
        by.is_negative()
            && (0..self.variables.len()).all(|j| {
                let col: Rational = self.rows.iter().zip(y).map(|(r, w)| &r.coeffs[j] * w).sum();
                !col.is_negative()
            })
    }

    /// One row per line as `coeff*var + … = rhs`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let terms: Vec<String> = row
                .coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| !c.is_zero())
                .map(|(j, c)| format!("{}*{}", format_rational(c), self.variables[j]))
                .collect();
            let lhs = if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" + ")
            };
            out.push_str(&format!("{lhs} = {}\n", format_rational(&row.rhs)));
        }
        out
    }
}

fn dot(a: &[Rational], x: &[Rational]) -> Rational {
    a.iter()
        .zip(x)
        .filter(|(c, _)| !c.is_zero())
        .map(|(c, v)| c * v)
        .sum()
}

/// `M⃗(b, q) = (a0, a1)` indexed `[b][q][a0][a1]`, for a mechanism with one
/// dummy first query and binary queries and answers in round two.
fn cumulative_table(m: &FiniteMechanism<Rational>) -> Result<[[[[Rational; 2]; 2]; 2]; 2]> {
    let shape = || {
        Error::InvalidParameter("the feasibility system needs a binary 2-round mechanism".into())
    };
    let binary = |labels: &[String]| labels == ["0", "1"];
    if m.rounds() != 2
        || m.query_alphabet(0) != [DUMMY_QUERY]
        || !binary(m.answer_alphabet(0))
        || !binary(m.query_alphabet(1))
        || !binary(m.answer_alphabet(1))
    {
        return Err(shape());
    }
    let root = m.node(m.root());
    let first = root.moves().first().ok_or_else(shape)?;
    let mut table: [[[[Rational; 2]; 2]; 2]; 2] = Default::default();
    for a0 in 0..2 {
        let Some(child) = first.child(a0) else {
            continue;
        };
        for q in 0..2 {
            let mv = m.find_move(child, &q.to_string()).ok_or_else(shape)?;
            let second = &m.node(child).moves()[mv];
            for (b, slot) in table.iter_mut().enumerate() {
                for a1 in 0..2 {
                    slot[q][a0][a1] = &first.probs(b)[a0] * &second.probs(b)[a1];
                }
            }
        }
    }
    Ok(table)
}

/// The feasibility system for simulating `m` from `RR` at scale `u` and `δ`.
///
/// Rows, in order: 16 mixture rows (input, query, transcript), 16
/// normalization rows (symbol, adversary `(A(0), A(1))`) and 8 first-round
/// consistency rows (symbol, first answer).
pub fn build_system(
    m: &FiniteMechanism<Rational>,
    scale: &Rational,
    delta: &Prob<Rational>,
) -> Result<LpSystem> {
    check_scale(scale)?;
    let table = cumulative_table(m)?;
    let delta = delta.value();
    let one = Rational::one();
    let keep = (&one - delta) * scale / (&one + scale);
    let flip = (&one - delta) / (&one + scale);
    // weights[b][c]: probability RR(b) emits symbol c
    let weights = [
        [keep.clone(), flip.clone(), delta.clone(), Rational::zero()],
        [flip, keep, Rational::zero(), delta.clone()],
    ];
    let blank = || vec![Rational::zero(); NUM_VARS];
    let mut rows = Vec::with_capacity(40);
    for (b, w) in weights.iter().enumerate() {
        for q in 0..2 {
            for a0 in 0..2 {
                for a1 in 0..2 {
                    let mut coeffs = blank();
                    for (c, wc) in w.iter().enumerate() {
                        coeffs[var_index(c, q, a0, a1)] = wc.clone();
                    }
                    rows.push(LpRow {
                        family: RowFamily::Mixture,
                        label: format!("mixture x{b} q={q} ({a0},{a1})"),
                        coeffs,
                        rhs: table[b][q][a0][a1].clone(),
                    });
                }
            }
        }
    }
    for (c, sym) in RRSymbol::ALL.iter().enumerate() {
        for adv in 0..4 {
            let on = [adv >> 1, adv & 1];
            let mut coeffs = blank();
            for a0 in 0..2 {
                for a1 in 0..2 {
                    coeffs[var_index(c, on[a0], a0, a1)] = one.clone();
                }
            }
            rows.push(LpRow {
                family: RowFamily::Normalization,
                label: format!("normalize {} A=({},{})", sym.label(), on[0], on[1]),
                coeffs,
                rhs: one.clone(),
            });
        }
    }
    for (c, sym) in RRSymbol::ALL.iter().enumerate() {
        for a0 in 0..2 {
            let mut coeffs = blank();
            for a1 in 0..2 {
                coeffs[var_index(c, 0, a0, a1)] = one.clone();
                coeffs[var_index(c, 1, a0, a1)] = -one.clone();
            }
            rows.push(LpRow {
                family: RowFamily::Consistency,
                label: format!("first-round {} a0={a0}", sym.label()),
                coeffs,
                rhs: Rational::zero(),
            });
        }
    }
    Ok(LpSystem {
        variables: (0..NUM_VARS).map(var_label).collect(),
        rows,
    })
}

/// Outcome of dropping linearly dependent rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    /// Indices of a maximal independent subset of rows, in order.
    pub independent: Vec<usize>,
    /// Set when some combination of rows reads `0 = nonzero`; the weights
    /// form a Farkas ray with `Aᵀy = 0`.
    pub inconsistency: Option<Vec<Rational>>,
}

impl Reduction {
    pub fn rank(&self) -> usize {
        self.independent.len()
    }
}

/// Exact Gaussian elimination over the augmented rows.
pub fn reduce_rows(sys: &LpSystem) -> Reduction {
    let n = sys.variables.len();
    let total = sys.rows.len();
    // (pivot column, augmented row, combination of original rows)
    let mut basis: Vec<(usize, Vec<Rational>, Vec<Rational>)> = Vec::new();
    let mut independent = Vec::new();
    for (i, row) in sys.rows.iter().enumerate() {
        let mut v: Vec<Rational> = row
            .coeffs
            .iter()
            .cloned()
            .chain(std::iter::once(row.rhs.clone()))
            .collect();
        let mut combo = vec![Rational::zero(); total];
        combo[i] = Rational::one();
        for (p, bv, bc) in &basis {
            if v[*p].is_zero() {
                continue;
            }
            let f = v[*p].clone() / &bv[*p];
            for (x, y) in v.iter_mut().zip(bv) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
            for (x, y) in combo.iter_mut().zip(bc) {
                if !y.is_zero() {
                    *x -= &f * y;
                }
            }
        }
        match v[..n].iter().position(|x| !x.is_zero()) {
            Some(p) => {
                independent.push(i);
                basis.push((p, v, combo));
            }
            None if v[n].is_zero() => {}
            None => {
                if v[n].is_positive() {
                    combo.iter_mut().for_each(|x| *x = -x.clone());
                }
                return Reduction {
                    independent,
                    inconsistency: Some(combo),
                };
            }
        }
    }
    Reduction {
        independent,
        inconsistency: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Feasible,
    Infeasible,
}

impl LpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LpStatus::Feasible => "feasible",
            LpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub status: LpStatus,
    /// Nonnegative solution, one entry per variable.
    pub witness: Option<Vec<Rational>>,
    /// Farkas ray, one weight per row of the full system.
    pub certificate: Option<Vec<Rational>>,
    pub rank: usize,
    pub pivots: usize,
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        self.status == LpStatus::Feasible
    }

    pub fn to_json(&self, sys: &LpSystem) -> Value {
        let named = |names: &mut dyn Iterator<Item = String>, vals: &[Rational]| -> Value {
            let mut map = Map::new();
            for (k, v) in names.zip(vals) {
                map.insert(k, Value::String(format_rational(v)));
            }
            Value::Object(map)
        };
        json!({
            "status": self.status.as_str(),
            "rows": sys.rows.len(),
            "rank": self.rank,
            "pivots": self.pivots,
            "witness": self.witness.as_ref().map(|w| named(&mut sys.variables.iter().cloned(), w)),
            "certificate": self.certificate.as_ref().map(|y| named(&mut sys.rows.iter().map(|r| r.label.clone()), y)),
        })
    }
}

/// Phase-1 simplex with Bland's rule. Feasible iff the artificial optimum is
/// exactly zero; otherwise the optimal duals give the certificate.
pub fn solve_feasibility(sys: &LpSystem) -> Feasibility {
    let reduction = reduce_rows(sys);
    let rank = reduction.rank();
    if let Some(y) = reduction.inconsistency {
        return Feasibility {
            status: LpStatus::Infeasible,
            witness: None,
            certificate: Some(y),
            rank,
            pivots: 0,
        };
    }
    let n = sys.variables.len();
    let rows: Vec<usize> = reduction.independent;
    let m = rows.len();
    let width = n + m + 1;
    let signs: Vec<bool> = rows
        .iter()
        .map(|&i| sys.rows[i].rhs.is_negative())
        .collect();
    let mut tab: Vec<Vec<Rational>> = rows
        .iter()
        .zip(&signs)
        .enumerate()
        .map(|(k, (&i, &neg))| {
            let flip = |x: &Rational| if neg { -x.clone() } else { x.clone() };
            let mut t: Vec<Rational> = sys.rows[i].coeffs.iter().map(flip).collect();
            t.extend((0..m).map(|a| {
                if a == k {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }));
            t.push(flip(&sys.rows[i].rhs));
            t
        })
        .collect();
    // reduced costs; the last entry is minus the artificial total
    let mut cost = vec![Rational::zero(); width];
    for t in &tab {
        for j in (0..n).chain(std::iter::once(n + m)) {
            if !t[j].is_zero() {
                cost[j] -= &t[j];
            }
        }
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut pivots = 0;
    while let Some(e) = (0..n).find(|&j| cost[j].is_negative()) {
        let mut leave: Option<(usize, Rational)> = None;
        for (r, t) in tab.iter().enumerate() {
            if !t[e].is_positive() {
                continue;
            }
            let ratio = &t[width - 1] / &t[e];
            let better = match &leave {
                None => true,
                Some((l, best)) => ratio < *best || (ratio == *best && basis[r] < basis[*l]),
            };
            if better {
                leave = Some((r, ratio));
            }
        }
        // the artificial objective is bounded below, so some row limits e
        let (r, _) = leave.expect("phase-1 objective is bounded");
        pivot(&mut tab, &mut cost, r, e);
        basis[r] = e;
        pivots += 1;
    }
    if cost[width - 1].is_zero() {
        let mut x = vec![Rational::zero(); n];
        for (r, &j) in basis.iter().enumerate() {
            if j < n {
                x[j] = tab[r][width - 1].clone();
            }
        }
        return Feasibility {
            status: LpStatus::Feasible,
            witness: Some(x),
            certificate: None,
            rank,
            pivots,
        };
    }
    // artificial column k has reduced cost 1 − y_k; the ray is −y on the
    // sign-normalized rows
    let mut y = vec![Rational::zero(); sys.rows.len()];
    for (k, &i) in rows.iter().enumerate() {
        let yk = Rational::one() - &cost[n + k];
        y[i] = if signs[k] { yk } else { -yk };
    }
    Feasibility {
        status: LpStatus::Infeasible,
        witness: None,
        certificate: Some(y),
        rank,
        pivots,
    }
}

fn pivot(tab: &mut [Vec<Rational>], cost: &mut [Rational], r: usize, e: usize) {
    let p = tab[r][e].clone();
    for x in tab[r].iter_mut() {
        if !x.is_zero() {
            *x /= &p;
        }
    }
    let prow = tab[r].clone();
    let nz: Vec<usize> = (0..prow.len()).filter(|&j| !prow[j].is_zero()).collect();
    let eliminate = |row: &mut Vec<Rational>| {
        let f = row[e].clone();
        if f.is_zero() {
            return;
        }
        for &j in &nz {
            row[j] -= &f * &prow[j];
        }
    };
    for (i, row) in tab.iter_mut().enumerate() {
        if i != r {
            eliminate(row);
        }
    }
    let mut c = cost.to_vec();
    eliminate(&mut c);
    cost.clone_from_slice(&c);
}

/// System plus verdict for one mechanism, with the witness or certificate
/// re-checked by substitution.
#[derive(Clone, Debug)]
pub struct LpCheck {
    pub system: LpSystem,
    pub result: Feasibility,
}

impl LpCheck {
    pub fn to_json(&self) -> Value {
        self.result.to_json(&self.system)
    }
}

pub fn check_mechanism(
    m: &FiniteMechanism<Rational>,
    scale: &Rational,
    delta: &Prob<Rational>,
) -> Result<LpCheck> {
    let system = build_system(m, scale, delta)?;
    let result = solve_feasibility(&system);
    let audited = match (&result.witness, &result.certificate) {
        (Some(x), _) => system.satisfied_by(x),
        (_, Some(y)) => system.certifies_infeasible(y),
        _ => false,
    };
    if !audited {
        return Err(Error::Malformed(format!(
            "{} result failed exact re-validation",
            result.status.as_str()
        )));
    }
    Ok(LpCheck { system, result })
}
