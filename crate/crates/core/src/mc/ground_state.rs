//! Exact maximization of the Hamiltonian over the hypercube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::enumerate::{check_cap, for_each_state, DEFAULT_ENUMERATION_CAP, HARD_ENUMERATION_CAP};
use crate::mc::free_energy::{extrapolate_inverse_n, mean_and_error, per_sample};
use crate::model::{DisorderSample, ModelSpec, MultilinearForm, SpinConfiguration};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MaxMethod {
    #[default]
    Exhaustive,
    BranchAndBound,
}

/// Maximizer of `H_N` and its energy (extensive units).
pub fn max_energy(sample: &DisorderSample, method: MaxMethod) -> Result<(SpinConfiguration, f64)> {
    let form = sample.multilinear();
    match method {
        MaxMethod::Exhaustive => {
            check_cap(sample.n(), DEFAULT_ENUMERATION_CAP)?;
            Ok(exhaustive_max(&form))
        }
        MaxMethod::BranchAndBound => branch_and_bound_max(&form),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxEnergyPoint {
    pub n: usize,
    /// disorder mean of `max H_N / N`
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxEnergySweep {
    pub points: Vec<MaxEnergyPoint>,
    /// intercept of the weighted `a + b/N` fit
    pub extrapolated: f64,
    pub std_error: f64,
}

/// `max H_N / N` over disorder samples at each size, extrapolated in `1/N`.
pub fn max_energy_sweep(
    model: &ModelSpec,
    sizes: &[usize],
    n_samples: usize,
    seed: u64,
    method: MaxMethod,
) -> Result<MaxEnergySweep> {
    let points = sizes
        .iter()
        .map(|&n| {
            let per = per_sample(model, n, n_samples, seed, |s| max_energy(s, method).map(|(_, e)| e / n as f64))?;
            let (mean, std_error) = mean_and_error(&per);
            Ok(MaxEnergyPoint { n, mean, std_error })
        })
        .collect::<Result<Vec<_>>>()?;
    let fit: Vec<(usize, f64, f64)> = points.iter().map(|p| (p.n, p.mean, p.std_error)).collect();
    let (extrapolated, std_error) = extrapolate_inverse_n(&fit)?;
    Ok(MaxEnergySweep {
        points,
        extrapolated,
        std_error,
    })
}

pub fn exhaustive_max(form: &MultilinearForm) -> (SpinConfiguration, f64) {
    let mut best = (0u64, f64::NEG_INFINITY);
    for_each_state(form, |bits, e| {
        if e > best.1 {
            best = (bits, e);
        }
    });
    (SpinConfiguration::from_bits(best.0, form.n), best.1)
}

/// Depth-first search fixing spins in index order, pruned by
/// `E_fixed + Σ_free |g_i| + Σ_{free pairs} |J_ij|`.
pub fn branch_and_bound_max(form: &MultilinearForm) -> Result<(SpinConfiguration, f64)> {
    let n = form.n;
    if form.has_higher() {
        return Err(Error::InvalidParameter(
            "branch-and-bound supports forms of degree at most two".into(),
        ));
    }
    if n > HARD_ENUMERATION_CAP {
        return Err(Error::EnumerationCap { n, cap: HARD_ENUMERATION_CAP });
    }
    // tail[k] = Σ_{k ≤ i < j} |J_ij|
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        let row: f64 = ((k + 1)..n).map(|j| form.pair_coupling(k, j).abs()).sum();
        tail[k] = tail[k + 1] + row;
    }
    let (mut best_spins, mut best) = local_search(form);
    let mut spins = vec![0i8; n];
    let mut fields = form.linear.clone();
    search(form, 0, form.constant, &mut spins, &mut fields, &tail, &mut best, &mut best_spins);
    Ok((SpinConfiguration::new(best_spins)?, best))
}

#[allow(clippy::too_many_arguments)]
fn search(
    form: &MultilinearForm,
    k: usize,
    energy: f64,
    spins: &mut [i8],
    fields: &mut [f64],
    tail: &[f64],
    best: &mut f64,
    best_spins: &mut Vec<i8>,
) {
    let n = form.n;
    if k == n {
        if energy > *best {
            *best = energy;
            best_spins.copy_from_slice(spins);
        }
        return;
    }
    let bound = energy + fields[k..].iter().map(|g| g.abs()).sum::<f64>() + tail[k];
    if bound <= *best {
        return;
    }
    let first: i8 = if fields[k] >= 0.0 { 1 } else { -1 };
    for s in [first, -first] {
        spins[k] = s;
        let sf = s as f64;
        let e = energy + sf * fields[k];
        for j in (k + 1)..n {
            fields[j] += form.pair_coupling(k, j) * sf;
        }
        search(form, k + 1, e, spins, fields, tail, best, best_spins);
        for j in (k + 1)..n {
            fields[j] -= form.pair_coupling(k, j) * sf;
        }
    }
    spins[k] = 0;
}

/// Greedy single-flip ascent from all-up; seeds the incumbent.
fn local_search(form: &MultilinearForm) -> (Vec<i8>, f64) {
    let n = form.n;
    let mut s = vec![1i8; n];
    loop {
        let mut improved = false;
        for i in 0..n {
            let local: f64 = form.linear[i]
                + (0..n).map(|j| form.pair_coupling(i, j) * s[j] as f64).sum::<f64>();
            if (s[i] as f64) * local < -1e-12 {
                s[i] = -s[i];
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    let e = form.eval(&s);
    (s, e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_disorder;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_couplings() {
        let model = ModelSpec::sk();
        let s = DisorderSample::from_couplings(&model, 5, vec![vec![0.0; 25]]).unwrap();
        assert_eq!(max_energy(&s, MaxMethod::Exhaustive).unwrap().1, 0.0);
    }

    #[test]
    fn branch_and_bound_agrees() {
        for seed in 0..5 {
            let s = sample_disorder(&ModelSpec::sk(), 14, seed).unwrap();
            let (_, a) = max_energy(&s, MaxMethod::Exhaustive).unwrap();
            let (sig, b) = max_energy(&s, MaxMethod::BranchAndBound).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            assert_abs_diff_eq!(s.hamiltonian(&sig).unwrap(), b, epsilon = 1e-9);
        }
    }

    #[test]
    fn welfare_maximizer_coincides() {
        // Σ W_ij 1{σ_i = σ_j} = ΣW/2 + √N H/2
        let n = 10;
        let s = sample_disorder(&ModelSpec::sk(), n, 8).unwrap();
        let w = s.couplings(0);
        let welfare = |bits: u64| {
            let sig = SpinConfiguration::from_bits(bits, n);
            let x = sig.as_slice();
            let mut acc = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if x[i] == x[j] {
                        acc += w[i * n + j];
                    }
                }
            }
            acc
        };
        let total: f64 = w.iter().sum();
        let mut best = (0u64, f64::NEG_INFINITY);
        for b in 0..1u64 << n {
            let v = welfare(b);
            assert_abs_diff_eq!(
                v,
                total / 2.0
                    + (n as f64).sqrt() / 2.0 * s.hamiltonian(&SpinConfiguration::from_bits(b, n)).unwrap(),
                epsilon = 1e-9
            );
            if v > best.1 {
                best = (b, v);
            }
        }
        let (_, e) = max_energy(&s, MaxMethod::Exhaustive).unwrap();
        assert_abs_diff_eq!(best.1, total / 2.0 + (n as f64).sqrt() / 2.0 * e, epsilon = 1e-9);
    }
}
