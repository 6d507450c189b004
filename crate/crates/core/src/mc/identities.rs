//! Numerical checks of the Gaussian integration-by-parts identities and of
//! the Gibbs variational principle.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mc::enumerate::check_cap;
use crate::mc::free_energy::{enriched_form, enriched_log_partition, mean_and_error, per_sample};
use crate::mc::gibbs::OverlapDistribution;
use crate::model::{DisorderSample, ModelSpec};

/// One derivative compared against its Gibbs expression.
#[derive(Debug, Clone, Serialize)]
pub struct DerivativeComparison {
    pub label: String,
    pub finite_difference: f64,
    pub gibbs: f64,
    /// standard error of the per-sample difference
    pub std_error: f64,
    /// |central difference - Richardson extrapolation|
    pub discretization: f64,
}

impl DerivativeComparison {
    pub fn gap(&self) -> f64 {
        (self.finite_difference - self.gibbs).abs()
    }

    pub fn passes(&self, sigmas: f64, allowance: f64) -> bool {
        self.gap() <= sigmas * self.std_error + allowance
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub n: usize,
    pub t: f64,
    pub h: Vec<f64>,
    pub n_samples: usize,
    pub step: f64,
    /// `∂_t F` against `E⟨ξ(R)⟩`
    pub time: DerivativeComparison,
    /// `∂_{h_d} F` against `E⟨R_d⟩`
    pub fields: Vec<DerivativeComparison>,
    /// `∂_t F - ξ(∂_h F)` against `E⟨ξ(R)⟩ - ξ(E⟨R⟩)`
    pub residual: DerivativeComparison,
}

impl DerivativeReport {
    pub fn passes(&self, sigmas: f64, allowance: f64) -> bool {
        self.time.passes(sigmas, allowance)
            && self.fields.iter().all(|c| c.passes(sigmas, allowance))
            && self.residual.passes(sigmas, allowance)
    }
}

struct SampleDerivatives {
    dt: f64,
    dt_coarse: f64,
    dh: Vec<f64>,
    dh_coarse: Vec<f64>,
    gibbs_xi: f64,
    gibbs_r: Vec<f64>,
}

fn central<F: Fn(f64) -> Result<f64>>(f: F, x: f64, step: f64) -> Result<f64> {
    Ok((f(x + step)? - f(x - step)?) / (2.0 * step))
}

fn sample_derivatives(s: &DisorderSample, t: f64, h: &[f64], step: f64) -> Result<SampleDerivatives> {
    let f_t = |x: f64| enriched_log_partition(s, x, h);
    let dt = central(f_t, t, step)?;
    let dt_coarse = central(f_t, t, 2.0 * step)?;
    let mut dh = Vec::with_capacity(h.len());
    let mut dh_coarse = Vec::with_capacity(h.len());
    for d in 0..h.len() {
        let f_h = |x: f64| {
            let mut hh = h.to_vec();
            hh[d] = x;
            enriched_log_partition(s, t, &hh)
        };
        dh.push(central(f_h, h[d], step)?);
        dh_coarse.push(central(f_h, h[d], 2.0 * step)?);
    }
    let (form, _) = enriched_form(s, t, h)?;
    let dist = OverlapDistribution::from_form(&form, s.blocks())?;
    let xi = s.model().mixture();
    let gibbs_xi = dist.expect(|r| xi.eval(r));
    let gibbs_r = (0..h.len()).map(|d| dist.expect(|r| r[d])).collect();
    Ok(SampleDerivatives {
        dt,
        dt_coarse,
        dh,
        dh_coarse,
        gibbs_xi,
        gibbs_r,
    })
}

fn compare(label: &str, fd: &[f64], coarse: &[f64], gibbs: &[f64]) -> DerivativeComparison {
    let diff: Vec<f64> = fd.iter().zip(gibbs).map(|(a, b)| a - b).collect();
    let (_, std_error) = mean_and_error(&diff);
    let (fd_mean, _) = mean_and_error(fd);
    let (coarse_mean, _) = mean_and_error(coarse);
    let richardson = (4.0 * fd_mean - coarse_mean) / 3.0;
    DerivativeComparison {
        label: label.into(),
        finite_difference: fd_mean,
        gibbs: mean_and_error(gibbs).0,
        std_error,
        discretization: (fd_mean - richardson).abs(),
    }
}

/// Compares central differences of the enriched free energy (step
/// `1e-3·max(1, t)`) with the Gibbs-overlap expressions of its derivatives.
pub fn derivative_identity_check(
    model: &ModelSpec,
    n: usize,
    t: f64,
    h: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<DerivativeReport> {
    if t <= 0.0 {
        return Err(Error::InvalidParameter("derivative check needs t > 0".into()));
    }
    check_cap(n, crate::mc::gibbs::GIBBS_CAP)?;
    let step = 1e-3 * t.max(1.0);
    if t <= 2.0 * step || h.iter().any(|&x| x != 0.0 && x <= 2.0 * step) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step {step} underflows the parameter range"
        )));
    }
    if h.iter().any(|&x| x == 0.0) {
        return Err(Error::InvalidParameter(
            "field derivatives need h > 0 (the field enters through √h)".into(),
        ));
    }
    let rows = per_sample(model, n, n_samples, seed, |s| sample_derivatives(s, t, h, step))?;
    let col = |f: &dyn Fn(&SampleDerivatives) -> f64| rows.iter().map(f).collect::<Vec<f64>>();

    let time = compare("d/dt", &col(&|r| r.dt), &col(&|r| r.dt_coarse), &col(&|r| r.gibbs_xi));
    let fields: Vec<_> = (0..h.len())
        .map(|d| {
            compare(
                &format!("d/dh{d}"),
                &col(&|r| r.dh[d]),
                &col(&|r| r.dh_coarse[d]),
                &col(&|r| r.gibbs_r[d]),
            )
        })
        .collect();

    // residual: linearize ξ(mean ∂_h F) - ξ(mean ⟨R⟩) around the Gibbs mean
    let xi = model.mixture();
    let mean_r: Vec<f64> = fields.iter().map(|c| c.gibbs).collect();
    let mean_dh: Vec<f64> = fields.iter().map(|c| c.finite_difference).collect();
    let grad = xi.gradient(&mean_r);
    let lin: Vec<f64> = rows
        .iter()
        .map(|r| {
            let dot: f64 = (0..h.len()).map(|d| grad[d] * (r.dh[d] - r.gibbs_r[d])).sum();
            r.dt - r.gibbs_xi - dot
        })
        .collect();
    let (_, res_error) = mean_and_error(&lin);
    let fd_res = time.finite_difference - xi.eval(&mean_dh);
    let gibbs_res = time.gibbs - xi.eval(&mean_r);
    let residual = DerivativeComparison {
        label: "residual".into(),
        finite_difference: fd_res,
        gibbs: gibbs_res,
        std_error: res_error,
        discretization: time.discretization
            + fields
                .iter()
                .zip(&grad)
                .map(|(c, g)| g.abs() * c.discretization)
                .sum::<f64>(),
    };
    Ok(DerivativeReport {
        n,
        t,
        h: h.to_vec(),
        n_samples,
        step,
        time,
        fields,
        residual,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VariationalReport {
    /// `log Σ μ e^g`
    pub log_moment: f64,
    /// `∫ g dν* - H(ν* | μ)` at the Gibbs measure
    pub at_gibbs: f64,
    /// largest value over the perturbed measures
    pub best_perturbed: f64,
    pub perturbations: usize,
}

impl VariationalReport {
    pub fn equality_gap(&self) -> f64 {
        (self.log_moment - self.at_gibbs).abs()
    }

    pub fn max_exceedance(&self) -> f64 {
        self.best_perturbed - self.log_moment
    }
}

/// `∫ g dν - H(ν | μ)`, with `0 log 0 = 0`.
pub fn variational_value(mu: &[f64], nu: &[f64], g: &[f64]) -> f64 {
    mu.iter()
        .zip(nu)
        .zip(g)
        .filter(|((_, &v), _)| v > 0.0)
        .map(|((&m, &v), &gv)| v * gv - v * (v / m).ln())
        .sum()
}

/// Checks that the Gibbs measure `ν* ∝ e^g μ` attains `log ∫ e^g dμ` and
/// that random perturbations of it do not exceed it.
pub fn gibbs_variational_check(
    weights: &[f64],
    g: &[f64],
    perturbations: usize,
    seed: u64,
) -> Result<VariationalReport> {
    use rand::Rng;

    if weights.len() != g.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            got: g.len(),
        });
    }
    if weights.is_empty() || weights.len() > 1 << 16 {
        return Err(Error::InvalidParameter("support size must be in 1..=65536".into()));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(
            "weights must be positive and sum to one".into(),
        ));
    }
    let max = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let tilted: Vec<f64> = weights.iter().zip(g).map(|(m, v)| m * (v - max).exp()).collect();
    let z: f64 = tilted.iter().sum();
    let log_moment = max + z.ln();
    let gibbs: Vec<f64> = tilted.iter().map(|v| v / z).collect();
    let at_gibbs = variational_value(weights, &gibbs, g);

    let mut rng = crate::rng::stream_rng(seed, 0);
    let mut best = f64::NEG_INFINITY;
    for k in 0..perturbations {
        let scale = 0.5 * (k + 1) as f64 / perturbations as f64;
        let mut nu: Vec<f64> = gibbs
            .iter()
            .map(|p| p * (scale * (2.0 * rng.random::<f64>() - 1.0)).exp())
            .collect();
        let s: f64 = nu.iter().sum();
        nu.iter_mut().for_each(|v| *v /= s);
        best = best.max(variational_value(weights, &nu, g));
    }
    Ok(VariationalReport {
        log_moment,
        at_gibbs,
        best_perturbed: best,
        perturbations,
    })
}
