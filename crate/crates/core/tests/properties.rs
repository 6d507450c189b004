mod support;

use proptest::prelude::*;
use spinlab::model::ModelSpec;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parisi_functional_is_convex(mu in measure(), nu in measure(), beta in 0.2..1.5f64) {
        parisi_convexity(&mu, &nu, beta)?;
    }

    #[test]
    fn parisi_slope_is_bounded(mu in measure(), beta in 0.2..2.0f64) {
        slope_bound(&mu, beta)?;
    }

    #[test]
    fn martingales_are_coherent(params in prop::collection::vec(-1.5..1.5f64, 7)) {
        martingale_coherence(&params)?;
    }

    #[test]
    fn scalar_scheme_is_monotone(bump in 0.0..0.5f64, centre in 0.0..1.5f64, t in prop::sample::select(vec![0.05, 0.1, 0.2])) {
        scalar_comparison(bump, centre, t)?;
    }

    #[test]
    fn bipartite_scheme_is_monotone(bump in 0.0..0.5f64, c1 in 0.0..1.0f64, c2 in 0.0..1.0f64, t in prop::sample::select(vec![0.05, 0.1])) {
        bipartite_comparison(bump, (c1, c2), t)?;
    }

    #[test]
    fn psi1_is_midpoint_concave(mu in measure_to_one(), nu in measure_to_one()) {
        psi1_midpoint_concavity(&mu, &nu)?;
    }

    #[test]
    fn path_measure_round_trip_holds(mu in measure()) {
        path_measure_round_trip(&mu)?;
    }

    #[test]
    fn convention_dictionary_per_sample(seed in 0u64..1000, n in 2usize..10, t in 0.0..1.0f64) {
        dictionary_identity(&ModelSpec::sk(), n, seed, t)?;
        dictionary_identity(&ModelSpec::bipartite(0.5, 0.5).unwrap(), n.max(2), seed, t)?;
        dictionary_identity(&ModelSpec::mixed("mixed", &[(2, 0.5), (4, 0.5)]).unwrap(), n, seed, t)?;
    }

    #[test]
    fn xi_star_satisfies_fenchel_young(r in 0.0..1.0f64, s in 0.0..3.0f64) {
        fenchel_young(&ModelSpec::sk(), r, s)?;
        fenchel_young(&ModelSpec::mixed("mixed", &[(2, 0.5), (4, 0.5)]).unwrap(), r, s)?;
    }
}

/// Empirical check, not a theorem: at `q = 0` the Hopf-Lax value does not
/// decrease in `t` on the SK test grid.
#[test]
fn hopf_lax_value_is_nondecreasing_in_time() {
    use spinlab::hj::{hopf_lax, HopfLaxOptions, StepPath};

    let q = StepPath::constant(0.0).unwrap();
    let opts = HopfLaxOptions::default();
    let values: Vec<f64> = [0.045, 0.125, 0.25]
        .iter()
        .map(|&t| hopf_lax(&ModelSpec::sk(), t, &q, &opts).unwrap().value)
        .collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "{values:?}");
    }
}
