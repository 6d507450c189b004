//! Exact per-sample free energies and their disorder averages.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::enumerate::{check_cap, log_sum_exp_states, DEFAULT_ENUMERATION_CAP};
use crate::mc::gibbs::{gibbs_average, GibbsObservable, Observable};
use crate::model::{external_field, DisorderSample, ModelSpec, MultilinearForm};

/// Which free energy a number refers to.
///
/// * `Thermal`: `(1/N) log(2^{-N} Σ exp(β H))`, no sign flip.
/// * `Enriched`: `-(1/N) log(2^{-N} Σ exp(√(2t) H - N t ξ(self) + Σ_d √(2h_d) z_d·σ_d - N_d h_d))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    Thermal,
    Enriched,
}

impl fmt::Display for Convention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Convention::Thermal => f.write_str("thermal"),
            Convention::Enriched => f.write_str("enriched"),
        }
    }
}

/// Parameters of a Gibbs measure, tagged by convention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GibbsParameters {
    Thermal { beta: f64 },
    Enriched { t: f64, h: Vec<f64> },
}

impl GibbsParameters {
    pub fn convention(&self) -> Convention {
        match self {
            GibbsParameters::Thermal { .. } => Convention::Thermal,
            GibbsParameters::Enriched { .. } => Convention::Enriched,
        }
    }

    fn echo(&self) -> Vec<(String, f64)> {
        match self {
            GibbsParameters::Thermal { beta } => vec![("beta".into(), *beta)],
            GibbsParameters::Enriched { t, h } => {
                let mut v = vec![("t".into(), *t)];
                v.extend(h.iter().enumerate().map(|(d, x)| (format!("h{d}"), *x)));
                v
            }
        }
    }

    /// Energy form of the Gibbs weights `log w(σ)` up to a σ-independent shift.
    pub fn form(&self, sample: &DisorderSample) -> Result<MultilinearForm> {
        match self {
            GibbsParameters::Thermal { beta } => {
                check_nonnegative("beta", *beta)?;
                let mut form = sample.multilinear();
                form.scale(*beta);
                Ok(form)
            }
            GibbsParameters::Enriched { t, h } => Ok(enriched_form(sample, *t, h)?.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergyEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_disorder_samples: usize,
    pub n: usize,
    pub convention: Convention,
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} = {v} must be finite and nonnegative")))
    }
}

/// `(1/N) log(2^{-N} Σ_σ exp(β H(σ)))` by exhaustive enumeration.
pub fn exact_log_partition(sample: &DisorderSample, beta: f64) -> Result<f64> {
    exact_log_partition_capped(sample, beta, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_log_partition_capped(sample: &DisorderSample, beta: f64, cap: usize) -> Result<f64> {
    check_nonnegative("beta", beta)?;
    let n = sample.n();
    check_cap(n, cap)?;
    let form = sample.multilinear();
    let lse = log_sum_exp_states(&form, beta);
    Ok((lse - n as f64 * std::f64::consts::LN_2) / n as f64)
}

/// Enriched energy form and the compensator `N t ξ(self) + Σ_d N_d h_d`.
pub fn enriched_form(sample: &DisorderSample, t: f64, h: &[f64]) -> Result<(MultilinearForm, f64)> {
    check_nonnegative("t", t)?;
    let model = sample.model();
    if h.len() != model.species() {
        return Err(Error::DimensionMismatch {
            expected: model.species(),
            got: h.len(),
        });
    }
    for &v in h {
        check_nonnegative("h", v)?;
    }
    let n = sample.n();
    let mut form = sample.multilinear();
    form.scale((2.0 * t).sqrt());
    let z = external_field(n, sample.seed(), sample.index());
    let mut field = vec![0.0; n];
    let mut compensator = n as f64 * t * model.mixture().eval(&model.self_overlap(n)?);
    for (block, &hd) in sample.blocks().iter().zip(h) {
        let amp = (2.0 * hd).sqrt();
        for i in block.clone() {
            field[i] = amp * z[i];
        }
        compensator += block.len() as f64 * hd;
    }
    form.add_linear(&field);
    Ok((form, compensator))
}

/// Per-sample enriched free energy (leading minus sign included).
pub fn enriched_log_partition(sample: &DisorderSample, t: f64, h: &[f64]) -> Result<f64> {
    let n = sample.n();
    check_cap(n, DEFAULT_ENUMERATION_CAP)?;
    let (form, compensator) = enriched_form(sample, t, h)?;
    let lse = log_sum_exp_states(&form, 1.0);
    Ok(-(lse - n as f64 * std::f64::consts::LN_2 - compensator) / n as f64)
}

/// Sample mean and standard error.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let m = values.len();
    if m == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
    (mean, (var / m as f64).sqrt())
}

/// Evaluates `f` on disorder samples `0..n_samples` in parallel; the output
/// order follows the sample index.
pub fn per_sample<T, F>(model: &ModelSpec, n: usize, n_samples: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&DisorderSample) -> Result<T> + Sync,
{
    if n_samples == 0 {
        return Err(Error::InvalidParameter("at least one disorder sample is required".into()));
    }
    model.block_sizes(n)?;
    (0..n_samples as u64)
        .into_par_iter()
        .map(|k| f(&DisorderSample::draw(model, n, seed, k)?))
        .collect()
}

pub fn quenched_free_energy(
    model: &ModelSpec,
    n: usize,
    beta: f64,
    n_samples: usize,
    seed: u64,
) -> Result<FreeEnergyEstimate> {
    check_cap(n, DEFAULT_ENUMERATION_CAP)?;
    let values = per_sample(model, n, n_samples, seed, |s| exact_log_partition(s, beta))?;
    let (mean, std_error) = mean_and_error(&values);
    Ok(FreeEnergyEstimate {
        mean,
        std_error,
        n_disorder_samples: n_samples,
        n,
        convention: Convention::Thermal,
    })
}

pub fn enriched_free_energy(
    model: &ModelSpec,
    n: usize,
    t: f64,
    h: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<FreeEnergyEstimate> {
    check_cap(n, DEFAULT_ENUMERATION_CAP)?;
    let values = per_sample(model, n, n_samples, seed, |s| enriched_log_partition(s, t, h))?;
    let (mean, std_error) = mean_and_error(&values);
    Ok(FreeEnergyEstimate {
        mean,
        std_error,
        n_disorder_samples: n_samples,
        n,
        convention: Convention::Enriched,
    })
}

/// `F_enriched(t, 0) + F_thermal(√(2t)) - t ξ(self)` for one sample; zero up
/// to rounding.
pub fn convention_dictionary_gap(sample: &DisorderSample, t: f64) -> Result<f64> {
    let model = sample.model();
    let zero = vec![0.0; model.species()];
    let xi_self = model.mixture().eval(&model.self_overlap(sample.n())?);
    let enriched = enriched_log_partition(sample, t, &zero)?;
    let thermal = exact_log_partition(sample, (2.0 * t).sqrt())?;
    Ok(enriched + thermal - t * xi_self)
}

/// Exact `⟨f(R)⟩` for one sample.
pub fn gibbs_expectation(
    sample: &DisorderSample,
    params: &GibbsParameters,
    observable: &Observable,
) -> Result<GibbsObservable> {
    let form = params.form(sample)?;
    let value = gibbs_average(&form, sample.blocks(), observable)?;
    Ok(GibbsObservable {
        label: observable.label(),
        value,
        std_error: 0.0,
        parameters: params.echo(),
    })
}

/// Disorder average of `⟨f(R)⟩`.
pub fn averaged_gibbs_expectation(
    model: &ModelSpec,
    n: usize,
    params: &GibbsParameters,
    observable: &Observable,
    n_samples: usize,
    seed: u64,
) -> Result<GibbsObservable> {
    let values = per_sample(model, n, n_samples, seed, |s| {
        gibbs_expectation(s, params, observable).map(|g| g.value)
    })?;
    let (value, std_error) = mean_and_error(&values);
    Ok(GibbsObservable {
        label: observable.label(),
        value,
        std_error,
        parameters: params.echo(),
    })
}

/// Weighted least-squares fit `a + b/N`; returns the intercept and its
/// standard error.
pub fn extrapolate_inverse_n(points: &[(usize, f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InvalidParameter("extrapolation needs at least two sizes".into()));
    }
    let (mut s, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(n, y, e) in points {
        let w = 1.0 / e.max(1e-12).powi(2);
        let x = 1.0 / n as f64;
        s += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * y;
        sxy += w * x * y;
    }
    let det = s * sxx - sx * sx;
    if det.abs() < 1e-300 {
        return Err(Error::Numerical("degenerate 1/N fit".into()));
    }
    let intercept = (sxx * sy - sx * sxy) / det;
    Ok((intercept, (sxx / det).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_disorder, SpinConfiguration};
    use crate::quadrature::expected_log_cosh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_beta_is_zero() {
        let s = sample_disorder(&ModelSpec::sk(), 6, 1).unwrap();
        assert_abs_diff_eq!(exact_log_partition(&s, 0.0).unwrap(), 0.0, epsilon = 1e-14);
        let est = quenched_free_energy(&ModelSpec::bipartite(0.5, 0.5).unwrap(), 12, 0.0, 5, 3).unwrap();
        assert_abs_diff_eq!(est.mean, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(est.std_error, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn single_spin_partition_is_coupling() {
        let s = sample_disorder(&ModelSpec::sk(), 1, 5).unwrap();
        let w = s.couplings(0)[0];
        assert_abs_diff_eq!(exact_log_partition(&s, 0.8).unwrap(), 0.8 * w, epsilon = 1e-12);
    }

    #[test]
    fn matches_direct_sum() {
        let s = sample_disorder(&ModelSpec::sk(), 3, 11).unwrap();
        let beta = 0.7;
        let z: f64 = (0..8u64)
            .map(|b| (beta * s.hamiltonian(&SpinConfiguration::from_bits(b, 3)).unwrap()).exp())
            .sum::<f64>()
            / 8.0;
        assert_abs_diff_eq!(exact_log_partition(&s, beta).unwrap(), z.ln() / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn enriched_field_only_matches_single_spin() {
        // with t = 0 the sites decouple, so the disorder average is ψ₁(h)
        let h = 0.5;
        let est = enriched_free_energy(&ModelSpec::sk(), 10, 0.0, &[h], 400, 2).unwrap();
        let psi = h - expected_log_cosh((2.0 * h).sqrt(), 80);
        assert!((est.mean - psi).abs() < 3.0 * est.std_error + 1e-12, "{est:?} vs {psi}");
        let zero = enriched_free_energy(&ModelSpec::sk(), 6, 0.0, &[0.0], 3, 2).unwrap();
        assert_abs_diff_eq!(zero.mean, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dictionary_holds_per_sample() {
        for model in [ModelSpec::sk(), ModelSpec::bipartite(0.5, 0.5).unwrap()] {
            for k in 0..5 {
                let s = DisorderSample::draw(&model, 8, 4, k).unwrap();
                assert_abs_diff_eq!(convention_dictionary_gap(&s, 0.3).unwrap(), 0.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn negative_parameters_rejected() {
        let s = sample_disorder(&ModelSpec::sk(), 4, 1).unwrap();
        assert!(enriched_log_partition(&s, -0.1, &[0.0]).is_err());
        assert!(enriched_log_partition(&s, 0.1, &[-0.1]).is_err());
        assert!(enriched_log_partition(&s, 0.1, &[0.1, 0.1]).is_err());
    }

    #[test]
    fn inverse_n_fit_recovers_line() {
        let pts: Vec<_> = [8, 12, 16].iter().map(|&n| (n, 0.5 - 2.0 / n as f64, 0.01)).collect();
        let (a, e) = extrapolate_inverse_n(&pts).unwrap();
        assert_abs_diff_eq!(a, 0.5, epsilon = 1e-12);
        assert!(e > 0.0);
    }
}
