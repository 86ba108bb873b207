mod args;

use std::io::{Read, Write};
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use concomp_core::adversary::priv_loss;
use concomp_core::bounds::{self, compare_curves, curves_to_csv, BoundResult};
use concomp_core::composition::{concomp, ordered_concomp};
use concomp_core::experiments::{
    run_bound_comparison, run_rr_feasibility, trials_to_csv, FeasibilityConfig, ScaleMode,
};
use concomp_core::format::{mechanism_from_str, mechanism_to_string};
use concomp_core::lp::check_mechanism;
use concomp_core::rr_sim::{build_simulator, verify_simulation};
use concomp_core::scalar::{
    format_rational, ln_of, nearest_rational, parse_number, rational_from_f64,
};
use concomp_core::{Error, ErrorClass, ExactMechanism, Limits, Prob, Rational};
use serde_json::{json, Value};

use args::{BoundCommand, Cli, Command, ExperimentCommand, Format, LimitArgs, ScaleArgs};

/// Largest denominator used when turning a decimal ε into an exact scale.
const MAX_SCALE_DEN: u64 = 1_000_000;

enum Failure {
    Core(Error),
    /// A check ran to completion and found a violation.
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 1,
                ErrorClass::Computation => 2,
                ErrorClass::Invariant => 3,
            })
        }
        Err(Failure::Invariant(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bound(cmd) => bound(cli, cmd),
        Command::Privloss(a) => {
            let limits = limits(&a.limits);
            let m = read_mechanism(&a.mechanism, &limits)?;
            let delta = parse_prob("delta", &a.delta)?;
            let loss = priv_loss(&m, &delta, &limits)?;
            emit_json(
                cli,
                &json!({
                    "u": format_rational(&loss.scale),
                    "eps": ln_of(&loss.scale),
                    "delta": format_rational(delta.value()),
                    "direction": loss.direction,
                    "witness": loss.witness.to_json(),
                }),
            )
        }
        Command::Concomp(a) => {
            let limits = limits(&a.limits);
            let ms = a
                .mechanisms
                .iter()
                .map(|p| read_mechanism(p, &limits))
                .collect::<Result<Vec<_>, _>>()?;
            let composed = if a.ordered {
                ordered_concomp(&ms, &limits)?
            } else {
                concomp(&ms, &limits)?
            };
            std::fs::write(&a.out, mechanism_to_string(&composed)).map_err(Error::from)?;
            emit_json(
                cli,
                &json!({
                    "out": a.out.display().to_string(),
                    "components": ms.len(),
                    "ordered": a.ordered,
                    "rounds": composed.rounds(),
                    "nodes": composed.nodes().len(),
                    "adversaries": concomp_core::adversary::count_adversaries(&composed).to_string(),
                }),
            )
        }
        Command::SimulateRr(a) => {
            let limits = limits(&a.limits);
            let m = read_mechanism(&a.mechanism, &limits)?;
            let scale = match resolve_scale(&a.scale)? {
                Some(u) => u,
                None => priv_loss(&m, &Prob::zero(), &limits)?.scale,
            };
            let sim = build_simulator(&m, scale)?;
            let sim_text = format!(
                "{}\n",
                serde_json::to_string_pretty(&sim.to_json()).expect("json")
            );
            if let Some(out) = &a.out {
                std::fs::write(out, &sim_text).map_err(Error::from)?;
            }
            if !a.verify {
                if a.out.is_none() {
                    return emit(cli, &sim_text);
                }
                return emit_json(
                    cli,
                    &json!({"u": format_rational(sim.scale()), "out": a.out.as_ref().map(|p| p.display().to_string())}),
                );
            }
            let report = verify_simulation(&m, &sim, &limits)?;
            emit_json(cli, &report.to_json())?;
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Invariant(format!(
                    "simulation failed for {} transcript(s)",
                    report.violations.len()
                )))
            }
        }
        Command::LpCheck(a) => {
            let m = read_mechanism(&a.mechanism, &Limits::default())?;
            let delta = parse_prob("delta", &a.delta)?;
            let scale = match resolve_scale(&a.scale)? {
                Some(u) => u,
                None => priv_loss(&m, &delta, &Limits::default())?.scale,
            };
            let check = check_mechanism(&m, &scale, &delta)?;
            if let Some(path) = &a.system_out {
                std::fs::write(path, check.system.to_text()).map_err(Error::from)?;
            }
            let mut out = check.to_json();
            out["u"] = Value::String(format_rational(&scale));
            out["eps"] = json!(ln_of(&scale));
            out["delta"] = Value::String(format_rational(delta.value()));
            emit_json(cli, &out)
        }
        Command::Experiment(cmd) => experiment(cli, cmd),
    }
}

fn bound(cli: &Cli, cmd: &BoundCommand) -> Outcome {
    let result = match cmd {
        BoundCommand::Basic { eps } => bounds::basic_pure(eps)?,
        BoundCommand::Hybrid { params } => {
            let pairs = params
                .iter()
                .map(|p| parse_pair(p))
                .collect::<Result<Vec<_>, _>>()?;
            bounds::hybrid_delta(&pairs)?
        }
        BoundCommand::Optimal {
            eps,
            delta_g,
            noninteractive_delta,
        } => match noninteractive_delta {
            None => bounds::optimal_eps_pure(eps, *delta_g)?,
            Some(deltas) => {
                if deltas.len() != eps.len() {
                    return Err(Error::InvalidParameter(format!(
                        "{} eps values but {} deltas",
                        eps.len(),
                        deltas.len()
                    ))
                    .into());
                }
                eprintln!(
                    "note: with per-component δ this bound holds for noninteractive mechanisms"
                );
                let pairs: Vec<(f64, f64)> =
                    eps.iter().copied().zip(deltas.iter().copied()).collect();
                bounds::optimal_eps_approx_noninteractive(&pairs, *delta_g)?
            }
        },
        BoundCommand::Compare {
            eps,
            k_max,
            delta_g,
        } => {
            let rows = compare_curves(*eps, *k_max, *delta_g)?;
            return match cli.format.unwrap_or(Format::Json) {
                Format::Csv => emit(cli, &curves_to_csv(&rows, false)),
                Format::Json => emit_json(
                    cli,
                    &Value::Array(
                        rows.iter()
                            .map(|r| {
                                json!({
                                    "k": r.k,
                                    "eps_basic": num(r.eps_basic),
                                    "delta_hybrid": num(r.delta_hybrid),
                                    "eps_optimal": num(r.eps_optimal),
                                    "delta_g": num(r.delta_g),
                                })
                            })
                            .collect(),
                    ),
                ),
            };
        }
    };
    emit_json(cli, &bound_json(&result))
}

fn bound_json(r: &BoundResult) -> Value {
    let mut v =
        json!({"eps_g": num(r.eps_g), "delta_g": num(r.delta_g), "theorem": r.theorem.tag()});
    if let Some(p) = &r.permutation {
        v["permutation"] = json!(p);
    }
    if let Some(d) = r.delta_upper {
        v["delta_upper"] = num(d);
    }
    v
}

fn experiment(cli: &Cli, cmd: &ExperimentCommand) -> Outcome {
    match cmd {
        ExperimentCommand::RrFeasibility {
            trials,
            delta,
            full,
            midpoint,
            no_runtime,
            trials_out,
        } => {
            let config = FeasibilityConfig {
                trials: if *full { 10_000 } else { *trials },
                delta: parse_prob("delta", delta)?,
                seed: cli.seed,
                mode: if *midpoint {
                    ScaleMode::Midpoint
                } else {
                    ScaleMode::AtLoss
                },
            };
            let (records, summary) = run_rr_feasibility(&config);
            let csv = trials_to_csv(&records, *no_runtime);
            if let Some(path) = trials_out {
                std::fs::write(path, &csv).map_err(Error::from)?;
            }
            match cli.format.unwrap_or(Format::Json) {
                Format::Csv => emit(cli, &csv),
                Format::Json => emit_json(cli, &summary.to_json()),
            }
        }
        ExperimentCommand::CompareBounds {
            eps,
            k_max,
            delta_g,
        } => match cli.format.unwrap_or(Format::Csv) {
            Format::Csv => emit(cli, &run_bound_comparison(*eps, *k_max, *delta_g)?),
            Format::Json => {
                // same dominance check as the CSV path
                run_bound_comparison(*eps, *k_max, *delta_g)?;
                let rows = compare_curves(*eps, *k_max, *delta_g)?;
                emit_json(
                    cli,
                    &Value::Array(
                        rows.iter()
                            .map(|r| {
                                json!({"k": r.k, "eps_basic": num(r.eps_basic), "eps_optimal": num(r.eps_optimal), "eps_advanced": null})
                            })
                            .collect(),
                    ),
                )
            }
        },
    }
}

fn limits(a: &LimitArgs) -> Limits {
    let base = if a.wide {
        Limits::wide()
    } else {
        Limits::default()
    };
    Limits {
        max_rounds: a.max_rounds.unwrap_or(base.max_rounds),
        max_alphabet: a.max_alphabet.unwrap_or(base.max_alphabet),
        max_strategies: a.max_strategies.unwrap_or(base.max_strategies),
    }
}

fn read_mechanism(path: &str, limits: &Limits) -> Result<ExactMechanism, Error> {
    let text = if path == "-" {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s)?;
        s
    } else {
        std::fs::read_to_string(Path::new(path))
            .map_err(|e| Error::Parse(format!("cannot read mechanism file {path:?}: {e}")))?
    };
    mechanism_from_str(&text, limits)
}

fn parse_prob(name: &str, s: &str) -> Result<Prob<Rational>, Error> {
    let v = parse_number(s).map_err(|e| Error::InvalidParameter(format!("{name}: {e}")))?;
    Prob::new(v).map_err(|e| Error::InvalidParameter(format!("{name}: {e}")))
}

fn parse_pair(s: &str) -> Result<(f64, f64), Error> {
    let bad = || Error::Parse(format!("expected ε:δ, got {s:?}"));
    let (e, d) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        e.trim().parse().map_err(|_| bad())?,
        d.trim().parse().map_err(|_| bad())?,
    ))
}

/// Exact scale from `--scale` or `--eps`; decimal ε is converted through
/// e^ε to the nearest fraction with a bounded denominator.
fn resolve_scale(a: &ScaleArgs) -> Result<Option<Rational>, Error> {
    if let Some(s) = &a.scale {
        return parse_number(s)
            .map(Some)
            .map_err(|e| Error::InvalidScale(format!("{s}: {e}")));
    }
    let Some(eps) = a.eps else { return Ok(None) };
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "eps must be finite and nonnegative, got {eps}"
        )));
    }
    let u = nearest_rational(&rational_from_f64(eps.exp())?, MAX_SCALE_DEN);
    eprintln!(
        "note: eps {eps} taken as scale u = {} (ln u = {})",
        format_rational(&u),
        ln_of(&u)
    );
    Ok(Some(u))
}

/// Integral values print without a fractional part.
fn num(x: f64) -> Value {
    if x.is_finite() && x.fract() == 0.0 && x.abs() < 9e15 {
        json!(x as i64)
    } else {
        json!(x)
    }
}

fn emit_json(cli: &Cli, v: &Value) -> Outcome {
    emit(
        cli,
        &format!("{}\n", serde_json::to_string(v).expect("json")),
    )
}

fn emit(cli: &Cli, text: &str) -> Outcome {
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(Error::from)?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(Error::from)?;
        }
    }
    Ok(())
}
