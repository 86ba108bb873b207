use concomp_core::experiments::sample_mechanism;
use concomp_core::mechanism::TwoRoundParams;
use concomp_core::scalar::parse_rational;
use serde_json::Value;

#[test]
fn seed_42_index_0_matches_the_frozen_vector() {
    let golden: Value =
        serde_json::from_str(include_str!("golden/sample_seed42_index0.json")).unwrap();
    let params = sample_mechanism(
        golden["seed"].as_u64().unwrap(),
        golden["index"].as_u64().unwrap(),
    );
    for (name, value) in TwoRoundParams::<concomp_core::Rational>::NAMES
        .iter()
        .zip(params.to_array())
    {
        let expected = parse_rational(golden["params"][name].as_str().unwrap()).unwrap();
        assert_eq!(value, expected, "{name}");
    }
}

#[test]
fn streams_do_not_depend_on_draw_order() {
    let forward: Vec<_> = (0..20).map(|i| sample_mechanism(9, i)).collect();
    let backward: Vec<_> = (0..20).rev().map(|i| sample_mechanism(9, i)).collect();
    assert!(forward.iter().eq(backward.iter().rev()));
}
