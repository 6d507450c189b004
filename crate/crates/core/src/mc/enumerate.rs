//! Exhaustive Gray-code enumeration of the hypercube.

use crate::error::{Error, Result};
use crate::model::MultilinearForm;
use crate::quadrature::LogSumExp;

/// Default enumeration cap (2^24 ≈ 16.7M states).
pub const DEFAULT_ENUMERATION_CAP: usize = 24;

/// Caps beyond this would overflow the bitmask encoding.
pub const HARD_ENUMERATION_CAP: usize = 40;

pub fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap.min(HARD_ENUMERATION_CAP) {
        Err(Error::EnumerationCap { n, cap })
    } else {
        Ok(())
    }
}

/// Visits every configuration once in Gray-code order, passing its bit
/// encoding (bit `i` set ⇔ `σ_i = +1`) and its energy under `form`.
/// Energies are updated incrementally through local fields.
pub fn for_each_state<F: FnMut(u64, f64)>(form: &MultilinearForm, mut visit: F) {
    let n = form.n;
    let mut spins = vec![-1i8; n];
    let mut energy = form.eval(&spins);
    // pair fields f_i = Σ_j J_ij σ_j
    let mut fields: Vec<f64> = (0..n)
        .map(|i| {
            form.pair[i * n..(i + 1) * n]
                .iter()
                .zip(&spins)
                .map(|(j, &s)| j * s as f64)
                .sum()
        })
        .collect();
    let mut bits = 0u64;
    visit(bits, energy);
    let total = 1u64 << n;
    for k in 1..total {
        let i = k.trailing_zeros() as usize;
        let si = spins[i] as f64;
        let mut local = form.linear[i] + fields[i];
        if form.has_higher() {
            for &id in &form.by_site[i] {
                let (set, c) = &form.higher[id];
                let mut prod = *c;
                for &j in set {
                    if j != i {
                        prod *= spins[j] as f64;
                    }
                }
                local += prod;
            }
        }
        energy -= 2.0 * si * local;
        let delta = -2.0 * si;
        let row = &form.pair[i * n..(i + 1) * n];
        for (f, j) in fields.iter_mut().zip(row) {
            *f += j * delta;
        }
        spins[i] = -spins[i];
        bits ^= 1 << i;
        visit(bits, energy);
    }
}

/// `log Σ_σ exp(scale · E(σ))` streamed over all states.
pub fn log_sum_exp_states(form: &MultilinearForm, scale: f64) -> f64 {
    let mut acc = LogSumExp::default();
    for_each_state(form, |_, e| acc.push(scale * e));
    acc.value()
}

/// Energies of all `2^n` states indexed by bit encoding.
pub fn energy_table(form: &MultilinearForm) -> Vec<f64> {
    let mut table = vec![0.0; 1usize << form.n];
    for_each_state(form, |bits, e| table[bits as usize] = e);
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_disorder, ModelSpec, SpinConfiguration};
    use approx::assert_abs_diff_eq;

    #[test]
    fn gray_code_energies_match_direct() {
        for model in [
            ModelSpec::sk(),
            ModelSpec::bipartite(0.5, 0.5).unwrap(),
            ModelSpec::mixed("m", &[(1, 0.2), (2, 1.0), (3, 0.7)]).unwrap(),
        ] {
            let s = sample_disorder(&model, 7, 21).unwrap();
            let form = s.multilinear();
            let mut seen = 0;
            for_each_state(&form, |bits, e| {
                let sigma = SpinConfiguration::from_bits(bits, 7);
                assert_abs_diff_eq!(e, s.hamiltonian(&sigma).unwrap(), epsilon = 1e-10);
                seen += 1;
            });
            assert_eq!(seen, 128);
        }
    }

    #[test]
    fn cap_is_enforced() {
        assert!(check_cap(24, 24).is_ok());
        assert!(matches!(check_cap(25, 24), Err(Error::EnumerationCap { .. })));
    }
}
