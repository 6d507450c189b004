//! Property checks shared by the proptest suite and the acceptance run.

#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use spinlab::hj::{path_measure_map, psi1_path, solve_bipartite_from, solve_scalar_from, xi_star, HJGrid, StepPath};
use spinlab::mc::free_energy::convention_dictionary_gap;
use spinlab::model::{DisorderSample, ModelSpec};
use spinlab::parisi::{parisi_functional_with, solve_parisi_pde, DiscreteMeasure, GridConfig};
use spinlab::uninverted::{MartingaleFamily, MartingaleGrid};

pub type Check = Result<(), TestCaseError>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Up to four atoms on `[0, 1]` with positive weights.
pub fn measure() -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec((0.0..=1.0f64, 0.05..1.0f64), 1..=4).prop_map(|pairs| {
        let (atoms, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        DiscreteMeasure::normalized(&atoms, &weights).unwrap()
    })
}

/// Measures carrying an atom at 1.
pub fn measure_to_one() -> impl Strategy<Value = DiscreteMeasure> {
    (measure(), 0.05..0.5f64).prop_map(|(m, w)| {
        let mut atoms = m.atoms().to_vec();
        let mut weights: Vec<f64> = m.weights().iter().map(|x| x * (1.0 - w)).collect();
        atoms.push(1.0);
        weights.push(w);
        DiscreteMeasure::normalized(&atoms, &weights).unwrap()
    })
}

pub fn parisi_convexity(mu: &DiscreteMeasure, nu: &DiscreteMeasure, beta: f64) -> Check {
    let grid = GridConfig::default();
    let a = parisi_functional_with(mu, beta, &grid).unwrap();
    let b = parisi_functional_with(nu, beta, &grid).unwrap();
    let m = parisi_functional_with(&mu.midpoint(nu), beta, &grid).unwrap();
    ensure(m <= 0.5 * (a + b) + 1e-8, || format!("P(mid) = {m} > ({a} + {b}) / 2"))
}

pub fn slope_bound(mu: &DiscreteMeasure, beta: f64) -> Check {
    let s = solve_parisi_pde(mu, beta, &GridConfig::coarse()).unwrap().max_abs_slope();
    ensure(s <= 1.0 + 1e-9, || format!("|∂ₓΦ| reaches {s}"))
}

pub fn martingale_coherence(params: &[f64]) -> Check {
    let family = MartingaleFamily::new(MartingaleGrid::coarse(), 4);
    let m = family.build(params).unwrap();
    let c = m.consistency_defect();
    ensure(c < 1e-8, || format!("consistency defect {c}"))?;
    let d = m.monotonicity_defect();
    ensure(d <= 1e-12, || format!("second moments decrease by {d}"))
}

/// `u₀ ≤ v₀` stays ordered on the region the far boundary has not reached.
pub fn scalar_comparison(bump: f64, centre: f64, t: f64) -> Check {
    let grid = HJGrid {
        h_max: 2.0,
        dh: 0.02,
        record_every: 0.05,
        ..Default::default()
    };
    let hs: Vec<f64> = (0..grid.points()).map(|i| i as f64 * grid.dh).collect();
    let u0: Vec<f64> = hs.iter().map(|h| 0.5 * h - (1.0 + h).ln()).collect();
    let v0: Vec<f64> = u0.iter().zip(&hs).map(|(u, h)| u + bump * (-(h - centre).powi(2)).exp()).collect();
    let xi = |p: f64| p * p;
    let speed = |lo: f64, hi: f64| 2.0 * lo.abs().max(hi.abs());
    let u = solve_scalar_from(u0, xi, speed, t, &grid).unwrap();
    let v = solve_scalar_from(v0, xi, speed, t, &grid).unwrap();
    let k = u.slice_index(t).unwrap();
    let reach = u.trusted_extent(t).min(v.trusted_extent(t));
    for (i, h) in hs.iter().enumerate().filter(|(_, h)| **h <= reach) {
        let (a, b) = (u.values[k][i], v.values[k][i]);
        ensure(a <= b + 1e-12, || format!("u = {a} > v = {b} at h = {h}"))?;
    }
    Ok(())
}

pub fn bipartite_comparison(bump: f64, centre: (f64, f64), t: f64) -> Check {
    let grid = HJGrid {
        h_max: 1.5,
        dh: 0.05,
        record_every: 0.05,
        ..Default::default()
    };
    let m = grid.points();
    let h = |i: usize| i as f64 * grid.dh;
    let mut u0 = vec![0.0; m * m];
    let mut v0 = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            u0[i * m + j] = 0.25 * (h(i) + h(j)) - 0.5 * ((1.0 + h(i)).ln() + (1.0 + h(j)).ln());
            let r2 = (h(i) - centre.0).powi(2) + (h(j) - centre.1).powi(2);
            v0[i * m + j] = u0[i * m + j] + bump * (-r2).exp();
        }
    }
    let u = solve_bipartite_from(u0, t, &grid).unwrap();
    let v = solve_bipartite_from(v0, t, &grid).unwrap();
    let k = u.slice_index(t).unwrap();
    let reach = u.trusted_extent(t).min(v.trusted_extent(t));
    for i in (0..m).filter(|&i| h(i) <= reach) {
        for j in (0..m).filter(|&j| h(j) <= reach) {
            let (a, b) = (u.values[k][i * m + j], v.values[k][i * m + j]);
            ensure(a <= b + 1e-12, || format!("u = {a} > v = {b} at ({}, {})", h(i), h(j)))?;
        }
    }
    Ok(())
}

/// On measures sharing the top atom 1, `μ ↦ ψ₁(quantile path of μ)` is concave.
pub fn psi1_midpoint_concavity(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Check {
    let f = |m: &DiscreteMeasure| psi1_path(&StepPath::from_measure(m)).unwrap();
    let (a, b, c) = (f(mu), f(nu), f(&mu.midpoint(nu)));
    ensure(c >= 0.5 * (a + b) - 1e-6, || format!("ψ(mid) = {c} < ({a} + {b}) / 2"))
}

pub fn path_measure_round_trip(mu: &DiscreteMeasure) -> Check {
    let back = path_measure_map(&StepPath::from_measure(mu)).unwrap();
    ensure(back.len() == mu.len(), || format!("{back:?} vs {mu:?}"))?;
    for (x, y) in back.atoms().iter().zip(mu.atoms()).chain(back.weights().iter().zip(mu.weights())) {
        ensure((x - y).abs() < 1e-12, || format!("{back:?} vs {mu:?}"))?;
    }
    Ok(())
}

pub fn dictionary_identity(model: &ModelSpec, n: usize, seed: u64, t: f64) -> Check {
    let sample = DisorderSample::draw(model, n, seed, 0).unwrap();
    let gap = convention_dictionary_gap(&sample, t).unwrap();
    ensure(gap.abs() < 1e-10, || format!("dictionary gap {gap}"))
}

/// `ξ(r) + ξ*(s) ≥ r s`, with equality at `s = ξ'(r)`.
pub fn fenchel_young(model: &ModelSpec, r: f64, s: f64) -> Check {
    let xi = model.mixture();
    let dual = xi_star(model, s).unwrap();
    ensure(xi.eval1(r) + dual >= r * s - 1e-9, || format!("Fenchel-Young fails at r = {r}, s = {s}"))?;
    let tight = xi.eval1(r) + xi_star(model, xi.deriv1(r)).unwrap() - r * xi.deriv1(r);
    ensure(tight.abs() < 1e-7, || format!("equality gap {tight} at r = {r}"))
}
