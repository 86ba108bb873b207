use std::path::PathBuf;

use concomp_core::adversary::priv_loss;
use concomp_core::bounds::optimal_scale;
use concomp_core::composition::concomp;
use concomp_core::experiments::sample_mechanism;
use concomp_core::format::{load_mechanism, save_mechanism};
use concomp_core::lp::check_mechanism;
use concomp_core::mechanism::{rr_pure, two_round};
use concomp_core::rr_sim::{build_simulator, priv_loss_equivalence_check, verify_simulation};
use concomp_core::{Limits, Prob, Rational, TwoRoundParams};
use num_traits::{One, Zero};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n.into(), d.into())
}

fn fixture(name: &str) -> PathBuf {
    [env!("CARGO_MANIFEST_DIR"), "..", "..", "mechanisms", name]
        .iter()
        .collect()
}

/// Pure loss straight from the parameters: the largest likelihood ratio of
/// any full transcript under any of the four adaptive second queries.
fn pure_loss_oracle(p: &TwoRoundParams<Rational>) -> Option<Rational> {
    let bit = |x: &Rational, a: usize| {
        if a == 0 {
            x.clone()
        } else {
            Rational::one() - x
        }
    };
    let mut worst = Rational::one();
    for q0 in 0..2 {
        for q1 in 0..2 {
            let on = [q0, q1];
            for a0 in 0..2 {
                for a1 in 0..2 {
                    let mass: Vec<Rational> = (0..2)
                        .map(|b| bit(&p.first[b], a0) * bit(&p.second[b][a0][on[a0]], a1))
                        .collect();
                    for (num, den) in [(&mass[0], &mass[1]), (&mass[1], &mass[0])] {
                        if num.is_zero() {
                            continue;
                        }
                        if den.is_zero() {
                            return None;
                        }
                        worst = worst.max(num / den);
                    }
                }
            }
        }
    }
    Some(worst)
}

#[test]
fn fixture_file_runs_through_every_stage() {
    let m = load_mechanism(fixture("two_round.json"), &Limits::default()).unwrap();
    let u = priv_loss(&m, &Prob::zero(), &Limits::default())
        .unwrap()
        .scale;
    let params = TwoRoundParams::from_array(
        [
            "3/5", "1/3", "1/2", "2/3", "1/4", "2/5", "1/2", "1/3", "1/2", "1/5",
        ]
        .map(|s| concomp_core::scalar::parse_rational(s).unwrap()),
    )
    .unwrap();
    assert_eq!(two_round(&params).unwrap().nodes().len(), m.nodes().len());
    assert_eq!(Some(u.clone()), pure_loss_oracle(&params));
    let sim = build_simulator(&m, u.clone()).unwrap();
    assert!(verify_simulation(&m, &sim, &Limits::default())
        .unwrap()
        .passed());
    let delta = Prob::new(q(1, 20)).unwrap();
    let u_delta = priv_loss(&m, &delta, &Limits::default()).unwrap().scale;
    assert!(u_delta <= u);
    assert!(check_mechanism(&m, &u_delta, &delta)
        .unwrap()
        .result
        .is_feasible());
}

#[test]
fn pure_loss_matches_the_ratio_oracle_on_samples() {
    let mut seen = 0;
    for i in 0..60 {
        let p = sample_mechanism(21, i);
        let m = two_round(&p).unwrap();
        match (
            priv_loss(&m, &Prob::zero(), &Limits::default()),
            pure_loss_oracle(&p),
        ) {
            (Ok(loss), Some(oracle)) => {
                assert_eq!(loss.scale, oracle);
                seen += 1;
            }
            (Err(_), None) => {}
            (got, oracle) => panic!("sample {i}: {got:?} vs {oracle:?}"),
        }
    }
    assert!(seen > 50);
}

#[test]
fn save_and_reload_preserve_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    let m = two_round(&sample_mechanism(4, 2)).unwrap();
    save_mechanism(&m, &path).unwrap();
    let back = load_mechanism(&path, &Limits::default()).unwrap();
    let d = Prob::new(q(1, 50)).unwrap();
    assert_eq!(
        priv_loss(&m, &d, &Limits::default()).unwrap().scale,
        priv_loss(&back, &d, &Limits::default()).unwrap().scale
    );
}

#[test]
fn concurrent_rr_composition_meets_the_optimal_bound_exactly() {
    let ms = [
        rr_pure(q(2, 1)).unwrap(),
        rr_pure(q(3, 1)).unwrap(),
        rr_pure(q(5, 4)).unwrap(),
    ];
    for d in [q(0, 1), q(1, 100), q(1, 10)] {
        let delta = Prob::new(d.clone()).unwrap();
        let report = priv_loss_equivalence_check(&ms, &delta, &Limits::wide()).unwrap();
        assert!(report.is_tight());
        let bound = optimal_scale(&[q(2, 1), q(3, 1), q(5, 4)], &d).unwrap();
        assert_eq!(report.concurrent_scale, bound);
    }
}

#[test]
fn concurrent_loss_of_two_round_pairs_stays_below_the_rr_composition() {
    for i in 0..5 {
        let ms = [
            two_round(&sample_mechanism(8, 2 * i)).unwrap(),
            two_round(&sample_mechanism(8, 2 * i + 1)).unwrap(),
        ];
        let Ok(report) =
            priv_loss_equivalence_check(&ms, &Prob::new(q(1, 100)).unwrap(), &Limits::wide())
        else {
            continue;
        };
        assert!(report.holds(), "pair {i}");
        let composed = concomp(&ms, &Limits::wide()).unwrap();
        assert_eq!(
            priv_loss(&composed, &Prob::new(q(1, 100)).unwrap(), &Limits::wide())
                .unwrap()
                .scale,
            report.concurrent_scale
        );
    }
}
