//! Exact two-replica Gibbs averages.
//!
//! The law of the overlap vector under `⟨·⟩^{⊗2}` is obtained from the XOR
//! autocorrelation of the Gibbs weights, `c(x) = Σ_a w_a w_{a⊕x}`, computed
//! with a Walsh-Hadamard transform in `O(N 2^N)`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mc::enumerate::energy_table;
use crate::model::{MixtureFunction, MultilinearForm};

/// Largest `N` for which weight tables are materialized.
pub const GIBBS_CAP: usize = 22;

/// Law of the species-overlap vector of two independent replicas.
#[derive(Debug, Clone)]
pub struct OverlapDistribution {
    n: usize,
    block_sizes: Vec<usize>,
    /// probability of each disagreement-count tuple, mixed radix over species
    probs: Vec<f64>,
}

impl OverlapDistribution {
    pub fn from_form(form: &MultilinearForm, blocks: &[Range<usize>]) -> Result<Self> {
        let n = form.n;
        if n > GIBBS_CAP {
            return Err(Error::EnumerationCap { n, cap: GIBBS_CAP });
        }
        let mut w = energy_table(form);
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in &mut w {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in &mut w {
            *v /= total;
        }
        walsh_hadamard(&mut w);
        for v in &mut w {
            *v *= *v;
        }
        walsh_hadamard(&mut w);
        let scale = 1.0 / (1u64 << n) as f64;

        let block_sizes: Vec<usize> = blocks.iter().map(|b| b.len()).collect();
        let masks: Vec<u64> = blocks
            .iter()
            .map(|b| b.clone().fold(0u64, |m, i| m | 1 << i))
            .collect();
        let radix: Vec<usize> = block_sizes.iter().map(|s| s + 1).collect();
        let cells: usize = radix.iter().product();
        let mut probs = vec![0.0; cells];
        for (x, &c) in w.iter().enumerate() {
            let mut cell = 0;
            for (d, &mask) in masks.iter().enumerate() {
                cell = cell * radix[d] + ((x as u64) & mask).count_ones() as usize;
            }
            probs[cell] += c * scale;
        }
        Ok(Self {
            n,
            block_sizes,
            probs,
        })
    }

    /// `⟨f(R_1, …, R_D)⟩` with `R_d = σ_d·σ'_d / N`.
    pub fn expect<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        let d = self.block_sizes.len();
        let mut counts = vec![0usize; d];
        let mut r = vec![0.0; d];
        let mut acc = 0.0;
        for &p in &self.probs {
            if p != 0.0 {
                for k in 0..d {
                    r[k] = (self.block_sizes[k] as f64 - 2.0 * counts[k] as f64) / self.n as f64;
                }
                acc += p * f(&r);
            }
            for k in (0..d).rev() {
                counts[k] += 1;
                if counts[k] <= self.block_sizes[k] {
                    break;
                }
                counts[k] = 0;
            }
        }
        acc
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

fn walsh_hadamard(a: &mut [f64]) {
    let mut h = 1;
    while h < a.len() {
        for chunk in a.chunks_mut(2 * h) {
            let (lo, hi) = chunk.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*x, *y);
                *x = u + v;
                *y = u - v;
            }
        }
        h *= 2;
    }
}

/// Function of the overlap vector averaged under the two-replica Gibbs law.
#[derive(Clone)]
pub enum Observable {
    /// total overlap `σ·σ'/N`
    Overlap,
    OverlapSquared,
    SpeciesOverlap(usize),
    /// `ξ(R_1, …, R_D)`
    Xi(MixtureFunction),
    Custom(String, Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.label())
    }
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Observable::Overlap => "overlap".into(),
            Observable::OverlapSquared => "overlap2".into(),
            Observable::SpeciesOverlap(d) => format!("species-overlap:{d}"),
            Observable::Xi(_) => "xi".into(),
            Observable::Custom(name, _) => name.clone(),
        }
    }

    pub fn eval(&self, r: &[f64]) -> f64 {
        match self {
            Observable::Overlap => r.iter().sum(),
            Observable::OverlapSquared => r.iter().sum::<f64>().powi(2),
            Observable::SpeciesOverlap(d) => r[*d],
            Observable::Xi(m) => m.eval(r),
            Observable::Custom(_, f) => f(r),
        }
    }

    fn check(&self, species: usize) -> Result<()> {
        match self {
            Observable::SpeciesOverlap(d) if *d >= species => Err(Error::UnknownObservable(self.label())),
            Observable::Xi(m) if m.species() != species => Err(Error::DimensionMismatch {
                expected: species,
                got: m.species(),
            }),
            _ => Ok(()),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    /// Parses `overlap`, `overlap2`, or `species-overlap:<d>`. `xi` needs a
    /// model and is resolved by the caller.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(Observable::Overlap),
            "overlap2" | "overlap^2" => Ok(Observable::OverlapSquared),
            _ => {
                if let Some(d) = s.strip_prefix("species-overlap:") {
                    d.parse()
                        .map(Observable::SpeciesOverlap)
                        .map_err(|_| Error::UnknownObservable(s.into()))
                } else {
                    Err(Error::UnknownObservable(s.into()))
                }
            }
        }
    }
}

/// Exact Gibbs average for one disorder sample.
#[derive(Debug, Clone, Serialize)]
pub struct GibbsObservable {
    pub label: String,
    pub value: f64,
    pub std_error: f64,
    pub parameters: Vec<(String, f64)>,
}

pub fn gibbs_average(
    form: &MultilinearForm,
    blocks: &[Range<usize>],
    observable: &Observable,
) -> Result<f64> {
    observable.check(blocks.len())?;
    let dist = OverlapDistribution::from_form(form, blocks)?;
    Ok(dist.expect(|r| observable.eval(r)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_disorder, ModelSpec, SpinConfiguration};
    use approx::assert_abs_diff_eq;

    /// Direct double enumeration over all replica pairs.
    fn brute_force(form: &MultilinearForm, blocks: &[Range<usize>], f: impl Fn(&[f64]) -> f64) -> f64 {
        let n = form.n;
        let states: Vec<SpinConfiguration> = (0..1u64 << n).map(|b| SpinConfiguration::from_bits(b, n)).collect();
        let e: Vec<f64> = states.iter().map(|s| form.eval(s.as_slice())).collect();
        let max = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = e.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = w.iter().sum();
        let mut acc = 0.0;
        for (a, sa) in states.iter().enumerate() {
            for (b, sb) in states.iter().enumerate() {
                acc += w[a] * w[b] * f(&sa.overlaps(sb, blocks));
            }
        }
        acc / (z * z)
    }

    #[test]
    fn matches_pair_enumeration() {
        let model = ModelSpec::sk();
        let s = sample_disorder(&model, 4, 2).unwrap();
        let form = s.multilinear();
        let v = gibbs_average(&form, s.blocks(), &Observable::Overlap).unwrap();
        assert_abs_diff_eq!(v, brute_force(&form, s.blocks(), |r| r[0]), epsilon = 1e-12);

        let bip = ModelSpec::bipartite(0.5, 0.5).unwrap();
        let s = sample_disorder(&bip, 6, 4).unwrap();
        let mut form = s.multilinear();
        form.scale(1.3);
        let xi = Observable::Xi(bip.mixture().clone());
        let v = gibbs_average(&form, s.blocks(), &xi).unwrap();
        assert_abs_diff_eq!(v, brute_force(&form, s.blocks(), |r| r[0] * r[1]), epsilon = 1e-12);
    }

    #[test]
    fn infinite_temperature_moments() {
        let model = ModelSpec::sk();
        let s = sample_disorder(&model, 9, 2).unwrap();
        let mut form = s.multilinear();
        form.scale(0.0);
        let d = OverlapDistribution::from_form(&form, s.blocks()).unwrap();
        assert_abs_diff_eq!(d.total_mass(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.expect(|r| r[0]), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.expect(|r| r[0] * r[0]), 1.0 / 9.0, epsilon = 1e-12);
    }

    #[test]
    fn observable_names() {
        assert!(matches!("overlap".parse::<Observable>(), Ok(Observable::Overlap)));
        assert!(matches!(
            "species-overlap:1".parse::<Observable>(),
            Ok(Observable::SpeciesOverlap(1))
        ));
        assert!(matches!(
            "magnetization".parse::<Observable>(),
            Err(Error::UnknownObservable(_))
        ));
    }
}
