//! Seeded harnesses: the randomized-response simulation feasibility study
//! over random 2-round mechanisms, and the bound-comparison curves.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::adversary::priv_loss;
use crate::bounds::{compare_curves, curves_to_csv, sig12};
use crate::error::{Error, Result};
use crate::lp::check_mechanism;
use crate::mechanism::{two_round, Limits, TwoRoundParams};
use crate::prob::Prob;
use crate::scalar::{format_rational, ln_of};
use crate::Rational;

/// Parameters are drawn uniformly from `{j / 2^16 : 0 ≤ j ≤ 2^16}`.
pub const DYADIC_BITS: u32 = 16;

pub const DEFAULT_TRIALS: usize = 2000;

/// The `index`-th parameter vector of the stream seeded by `seed`.
pub fn sample_mechanism(seed: u64, index: u64) -> TwoRoundParams<Rational> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let den = Rational::from_integer((1u64 << DYADIC_BITS).into());
    let p: [Rational; 10] = std::array::from_fn(|_| {
        let j: u64 = rng.random_range(0..=(1u64 << DYADIC_BITS));
        Rational::from_integer(j.into()) / den.clone()
    });
    TwoRoundParams::from_array(p).expect("dyadic draws lie in [0, 1]")
}

/// Which scale the LP is built at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleMode {
    /// The mechanism's own privacy loss `u`.
    AtLoss,
    /// `(1 + u)/2`, strictly below the loss whenever `u > 1`.
    Midpoint,
}

impl ScaleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScaleMode::AtLoss => "at-loss",
            ScaleMode::Midpoint => "midpoint",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrialStatus {
    Feasible,
    Infeasible,
    /// No finite ε at this δ; excluded from the feasibility denominator.
    UnboundedEps,
    /// Midpoint mode with `u = 1`: there is no smaller scale to test.
    Ineligible,
    Failed(String),
}

impl TrialStatus {
    pub fn as_str(&self) -> &str {
        match self {
            TrialStatus::Feasible => "feasible",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::UnboundedEps => "unbounded_eps",
            TrialStatus::Ineligible => "ineligible",
            TrialStatus::Failed(_) => "error",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub index: u64,
    pub params: TwoRoundParams<Rational>,
    pub delta: Rational,
    /// Privacy loss at `delta`, as a scale.
    pub eps_scale: Option<Rational>,
    pub lp_status: TrialStatus,
    pub runtime_ms: u128,
}

#[derive(Clone, Debug)]
pub struct FeasibilityConfig {
    pub trials: usize,
    pub delta: Prob<Rational>,
    pub seed: u64,
    pub mode: ScaleMode,
}

impl Default for FeasibilityConfig {
    fn default() -> Self {
        Self {
            trials: DEFAULT_TRIALS,
            delta: Prob::new(Rational::new(1.into(), 20.into())).expect("1/20"),
            seed: 1,
            mode: ScaleMode::AtLoss,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilitySummary {
    pub trials: usize,
    pub feasible: usize,
    pub infeasible: usize,
    pub unbounded_eps: usize,
    pub ineligible: usize,
    pub errors: usize,
    pub delta: Rational,
    pub seed: u64,
    pub mode: ScaleMode,
}

impl FeasibilitySummary {
    /// Feasible share among trials that reached the LP.
    pub fn feasible_fraction(&self) -> Option<f64> {
        let decided = self.feasible + self.infeasible;
        (decided > 0).then(|| self.feasible as f64 / decided as f64)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "trials": self.trials,
            "feasible": self.feasible,
            "infeasible": self.infeasible,
            "unbounded_eps": self.unbounded_eps,
            "ineligible": self.ineligible,
            "errors": self.errors,
            "delta": format_rational(&self.delta),
            "seed": self.seed,
            "scale_mode": self.mode.as_str(),
        })
    }
}

fn run_trial(config: &FeasibilityConfig, index: u64) -> TrialRecord {
    let start = Instant::now();
    let params = sample_mechanism(config.seed, index);
    let mut record = TrialRecord {
        index,
        params: params.clone(),
        delta: config.delta.value().clone(),
        eps_scale: None,
        lp_status: TrialStatus::Ineligible,
        runtime_ms: 0,
    };
    let outcome = (|| -> Result<TrialStatus> {
        let m = two_round(&params)?;
        let loss = match priv_loss(&m, &config.delta, &Limits::default()) {
            Ok(l) => l.scale,
            Err(Error::UnboundedEpsilon(_)) => return Ok(TrialStatus::UnboundedEps),
            Err(e) => return Err(e),
        };
        record.eps_scale = Some(loss.clone());
        let one = Rational::from_integer(1.into());
        let scale = match config.mode {
            ScaleMode::AtLoss => loss,
            ScaleMode::Midpoint if loss > one => (&one + loss) / Rational::from_integer(2.into()),
            ScaleMode::Midpoint => return Ok(TrialStatus::Ineligible),
        };
        // check_mechanism re-validates the witness or ray by substitution
        let check = check_mechanism(&m, &scale, &config.delta)?;
        Ok(if check.result.is_feasible() {
            TrialStatus::Feasible
        } else {
            TrialStatus::Infeasible
        })
    })();
    record.lp_status = outcome.unwrap_or_else(|e| TrialStatus::Failed(e.to_string()));
    record.runtime_ms = start.elapsed().as_millis();
    record
}

/// Runs `trials` independent trials; records come back in index order
/// regardless of scheduling.
pub fn run_rr_feasibility(config: &FeasibilityConfig) -> (Vec<TrialRecord>, FeasibilitySummary) {
    let records: Vec<TrialRecord> = (0..config.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect();
    let count = |f: fn(&TrialStatus) -> bool| records.iter().filter(|r| f(&r.lp_status)).count();
    let summary = FeasibilitySummary {
        trials: config.trials,
        feasible: count(|s| *s == TrialStatus::Feasible),
        infeasible: count(|s| *s == TrialStatus::Infeasible),
        unbounded_eps: count(|s| *s == TrialStatus::UnboundedEps),
        ineligible: count(|s| *s == TrialStatus::Ineligible),
        errors: count(|s| matches!(s, TrialStatus::Failed(_))),
        delta: config.delta.value().clone(),
        seed: config.seed,
        mode: config.mode,
    };
    (records, summary)
}

/// Trial table; with `blank_runtime` the timing column is left empty so the
/// output is byte-stable across runs.
pub fn trials_to_csv(records: &[TrialRecord], blank_runtime: bool) -> String {
    let mut out = String::from("index,");
    out.push_str(&TwoRoundParams::<Rational>::NAMES.join(","));
    out.push_str(",delta,u,eps,lp_status,runtime_ms\n");
    for r in records {
        let mut cells: Vec<String> = vec![r.index.to_string()];
        cells.extend(r.params.to_array().iter().map(format_rational));
        cells.push(format_rational(&r.delta));
        cells.push(
            r.eps_scale
                .as_ref()
                .map(format_rational)
                .unwrap_or_default(),
        );
        cells.push(
            r.eps_scale
                .as_ref()
                .map(|u| sig12(ln_of(u)))
                .unwrap_or_default(),
        );
        cells.push(r.lp_status.as_str().to_string());
        cells.push(if blank_runtime {
            String::new()
        } else {
            r.runtime_ms.to_string()
        });
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Bound curves for `k` copies of an `(ε, 0)` mechanism, `k = 1..=k_max`,
/// with an empty `eps_advanced` column. Fails if the optimal bound ever
/// exceeds the basic one.
pub fn run_bound_comparison(eps: f64, k_max: usize, delta_g: f64) -> Result<String> {
    let rows = compare_curves(eps, k_max, delta_g)?;
    if let Some(r) = rows
        .iter()
        .find(|r| r.eps_optimal > r.eps_basic * (1.0 + 1e-12))
    {
        return Err(Error::Malformed(format!(
            "optimal bound {} exceeds basic bound {} at k={}",
            r.eps_optimal, r.eps_basic, r.k
        )));
    }
    Ok(curves_to_csv(&rows, true))
}
