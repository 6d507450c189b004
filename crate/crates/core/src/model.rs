//! Spin-glass models defined by their covariance function, disorder
//! sampling, and Hamiltonian evaluation.
//!
//! Overlap convention, used everywhere in the crate: for two configurations
//! `σ, τ` the species-`d` overlap is `σ_d · τ_d / N` with `N` the *total*
//! number of spins. A model with mixture `ξ` then satisfies
//! `E[H(σ) H(τ)] = N ξ(R_1, …, R_D)`; at `σ = τ` the overlap vector is the
//! vector of species fractions `N_d / N`.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, GaussianStream};

/// Couplings of degree above this are regenerated from their stream on
/// every evaluation instead of being stored.
pub const DENSE_DEGREE_LIMIT: u32 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub exponents: Vec<u32>,
    pub weight: f64,
}

impl MixtureTerm {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

/// Covariance function `ξ(x) = Σ_p c_p Π_d x_d^{p_d}` with `c_p ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFunction {
    species: usize,
    terms: Vec<MixtureTerm>,
}

impl MixtureFunction {
    pub fn new(species: usize, terms: Vec<MixtureTerm>) -> Result<Self> {
        if species == 0 {
            return Err(Error::InvalidModel("species count must be positive".into()));
        }
        if terms.len() > rng::MAX_TERMS {
            return Err(Error::InvalidModel(format!(
                "at most {} mixture terms are supported",
                rng::MAX_TERMS
            )));
        }
        for t in &terms {
            if t.exponents.len() != species {
                return Err(Error::InvalidModel(format!(
                    "term {:?} has {} exponents for {} species",
                    t.exponents,
                    t.exponents.len(),
                    species
                )));
            }
            if !(t.weight >= 0.0 && t.weight.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "mixture weight {} must be finite and nonnegative",
                    t.weight
                )));
            }
        }
        Ok(Self { species, terms })
    }

    /// `ξ(r) = Σ_p weights[p] r^p` for one species.
    pub fn single(coefficients: &[(u32, f64)]) -> Result<Self> {
        Self::new(
            1,
            coefficients
                .iter()
                .map(|&(p, c)| MixtureTerm {
                    exponents: vec![p],
                    weight: c,
                })
                .collect(),
        )
    }

    pub fn species(&self) -> usize {
        self.species
    }

    pub fn terms(&self) -> &[MixtureTerm] {
        &self.terms
    }

    pub fn max_degree(&self) -> u32 {
        self.terms.iter().map(MixtureTerm::degree).max().unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.species);
        self.terms
            .iter()
            .map(|t| {
                t.weight
                    * t.exponents
                        .iter()
                        .zip(x)
                        .map(|(&p, &v)| v.powi(p as i32))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.species];
        for t in &self.terms {
            for d in 0..self.species {
                let pd = t.exponents[d];
                if pd == 0 {
                    continue;
                }
                let mut v = t.weight * pd as f64;
                for (e, (&p, &xe)) in t.exponents.iter().zip(x).enumerate() {
                    let p = if e == d { p - 1 } else { p };
                    v *= xe.powi(p as i32);
                }
                g[d] += v;
            }
        }
        g
    }

    /// Scalar evaluation for single-species mixtures.
    pub fn eval1(&self, r: f64) -> f64 {
        self.eval(&[r])
    }

    pub fn deriv1(&self, r: f64) -> f64 {
        self.gradient(&[r])[0]
    }

    pub fn second_deriv1(&self, r: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = t.exponents[0] as f64;
                if p < 2.0 {
                    0.0
                } else {
                    t.weight * p * (p - 1.0) * r.powi(t.exponents[0] as i32 - 2)
                }
            })
            .sum()
    }

    /// `Some((c, p))` when `ξ(r) = c r^p` is a single pure power.
    pub fn as_pure_power(&self) -> Option<(f64, u32)> {
        let nonzero: Vec<&MixtureTerm> = self.terms.iter().filter(|t| t.weight > 0.0).collect();
        if self.species == 1 && nonzero.len() == 1 {
            Some((nonzero[0].weight, nonzero[0].exponents[0]))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    mixture: MixtureFunction,
    lambda: Vec<f64>,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>, mixture: MixtureFunction, lambda: Vec<f64>) -> Result<Self> {
        if lambda.len() != mixture.species() {
            return Err(Error::DimensionMismatch {
                expected: mixture.species(),
                got: lambda.len(),
            });
        }
        if lambda.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidModel("species fractions must be positive".into()));
        }
        let total: f64 = lambda.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!(
                "species fractions must sum to 1 (got {total})"
            )));
        }
        Ok(Self {
            name: name.into(),
            mixture,
            lambda,
        })
    }

    /// Sherrington-Kirkpatrick: `ξ(r) = r²`.
    pub fn sk() -> Self {
        Self::new("sk", MixtureFunction::single(&[(2, 1.0)]).unwrap(), vec![1.0]).unwrap()
    }

    /// Single-species mixed `p`-spin model.
    pub fn mixed(name: &str, coefficients: &[(u32, f64)]) -> Result<Self> {
        Self::new(name, MixtureFunction::single(coefficients)?, vec![1.0])
    }

    /// Bipartite model: `ξ(x₁, x₂) = x₁ x₂`.
    pub fn bipartite(lambda1: f64, lambda2: f64) -> Result<Self> {
        let mixture = MixtureFunction::new(
            2,
            vec![MixtureTerm {
                exponents: vec![1, 1],
                weight: 1.0,
            }],
        )?;
        Self::new("bipartite", mixture, vec![lambda1, lambda2])
    }

    pub fn renamed(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn mixture(&self) -> &MixtureFunction {
        &self.mixture
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn species(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_single_species(&self) -> bool {
        self.species() == 1
    }

    /// `ξ(overlaps)`; each overlap must lie in `[-1, 1]`.
    pub fn covariance(&self, overlaps: &[f64]) -> Result<f64> {
        if overlaps.len() != self.species() {
            return Err(Error::DimensionMismatch {
                expected: self.species(),
                got: overlaps.len(),
            });
        }
        if overlaps.iter().any(|r| !(-1.0..=1.0).contains(r)) {
            return Err(Error::InvalidParameter(format!(
                "overlaps {overlaps:?} must lie in [-1, 1]"
            )));
        }
        Ok(self.mixture.eval(overlaps))
    }

    /// Species block sizes by largest-remainder rounding of `λ_d N`; ties go
    /// to the lower species index.
    pub fn block_sizes(&self, n: usize) -> Result<Vec<usize>> {
        let exact: Vec<f64> = self.lambda.iter().map(|l| l * n as f64).collect();
        let mut sizes: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
        let assigned: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..sizes.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for &d in order.iter().take(n.saturating_sub(assigned)) {
            sizes[d] += 1;
        }
        if let Some(d) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::SystemTooSmall { n, species: d });
        }
        Ok(sizes)
    }

    /// Self-overlap vector `(N_d / N)_d` at size `n`.
    pub fn self_overlap(&self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .block_sizes(n)?
            .into_iter()
            .map(|s| s as f64 / n as f64)
            .collect())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ModelFile = toml::from_str(text)?;
        file.into_spec()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        let file = ModelFile {
            name: self.name.clone(),
            species: self.species(),
            lambda: self.lambda.clone(),
            mixture: self.mixture.terms.clone(),
        };
        toml::to_string(&file).expect("model serializes")
    }
}

/// On-disk model definition.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    species: usize,
    lambda: Vec<f64>,
    mixture: Vec<MixtureTerm>,
}

impl ModelFile {
    fn into_spec(self) -> Result<ModelSpec> {
        let mixture = MixtureFunction::new(self.species, self.mixture)?;
        ModelSpec::new(self.name, mixture, self.lambda)
    }
}

#[derive(Debug, Clone)]
enum Couplings {
    Dense(Vec<f64>),
    Streamed,
}

fn layout(model: &ModelSpec, n: usize) -> Result<(Vec<usize>, Vec<Range<usize>>)> {
    if n == 0 {
        return Err(Error::SystemTooSmall { n, species: 0 });
    }
    let sizes = model.block_sizes(n)?;
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for s in &sizes {
        blocks.push(start..start + s);
        start += s;
    }
    Ok((sizes, blocks))
}

/// Tensor couplings of one mixture term.
#[derive(Debug, Clone)]
struct TermCouplings {
    exponents: Vec<u32>,
    /// `√c_p · N^{-(|p|-1)/2}`
    scale: f64,
    len: usize,
    stream: u64,
    data: Couplings,
}

/// One realization of the Gaussian couplings.
#[derive(Debug, Clone)]
pub struct DisorderSample {
    model: ModelSpec,
    n: usize,
    blocks: Vec<Range<usize>>,
    seed: u64,
    index: u64,
    terms: Vec<TermCouplings>,
}

impl DisorderSample {
    /// Draws sample number `index` of the disorder stream keyed by `seed`.
    pub fn draw(model: &ModelSpec, n: usize, seed: u64, index: u64) -> Result<Self> {
        let (sizes, blocks) = layout(model, n)?;
        let terms = model
            .mixture()
            .terms()
            .iter()
            .enumerate()
            .map(|(k, term)| {
                let degree = term.degree();
                let len = term
                    .exponents
                    .iter()
                    .zip(&sizes)
                    .map(|(&p, &s)| s.pow(p))
                    .product::<usize>();
                let stream = rng::stream_id(index, k as u64);
                let scale = term.weight.sqrt() * (n as f64).powf(-(degree as f64 - 1.0) / 2.0);
                let data = if degree <= DENSE_DEGREE_LIMIT {
                    let mut v = vec![0.0; len];
                    GaussianStream::new(seed, stream).fill(&mut v);
                    Couplings::Dense(v)
                } else {
                    Couplings::Streamed
                };
                TermCouplings {
                    exponents: term.exponents.clone(),
                    scale,
                    len,
                    stream,
                    data,
                }
            })
            .collect();
        Ok(Self {
            model: model.clone(),
            n,
            blocks,
            seed,
            index,
            terms,
        })
    }

    /// Builds a sample from explicit coupling tensors, one per mixture term,
    /// laid out row-major over the term's index tuple.
    pub fn from_couplings(model: &ModelSpec, n: usize, tensors: Vec<Vec<f64>>) -> Result<Self> {
        let (_, blocks) = layout(model, n)?;
        let mut s = Self {
            model: model.clone(),
            n,
            blocks,
            seed: 0,
            index: 0,
            terms: Vec::new(),
        };
        let sizes: Vec<usize> = s.blocks.iter().map(|b| b.len()).collect();
        s.terms = model
            .mixture()
            .terms()
            .iter()
            .zip(tensors)
            .map(|(term, data)| {
                let len = term
                    .exponents
                    .iter()
                    .zip(&sizes)
                    .map(|(&p, &sz)| sz.pow(p))
                    .product::<usize>();
                if data.len() != len {
                    return Err(Error::DimensionMismatch {
                        expected: len,
                        got: data.len(),
                    });
                }
                Ok(TermCouplings {
                    exponents: term.exponents.clone(),
                    scale: term.weight.sqrt()
                        * (n as f64).powf(-(term.degree() as f64 - 1.0) / 2.0),
                    len,
                    stream: 0,
                    data: Couplings::Dense(data),
                })
            })
            .collect::<Result<_>>()?;
        Ok(s)
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn blocks(&self) -> &[Range<usize>] {
        &self.blocks
    }

    pub fn block_sizes(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len()).collect()
    }

    /// Raw coupling tensor of term `k` (regenerated for streamed terms).
    pub fn couplings(&self, k: usize) -> Vec<f64> {
        let t = &self.terms[k];
        match &t.data {
            Couplings::Dense(v) => v.clone(),
            Couplings::Streamed => {
                let mut v = vec![0.0; t.len];
                GaussianStream::new(self.seed, t.stream).fill(&mut v);
                v
            }
        }
    }

    pub fn is_streamed(&self, k: usize) -> bool {
        matches!(self.terms[k].data, Couplings::Streamed)
    }

    /// Index positions (global spin indices) of a term's tensor axes.
    fn axes(&self, exponents: &[u32]) -> Vec<Range<usize>> {
        exponents
            .iter()
            .zip(&self.blocks)
            .flat_map(|(&p, b)| std::iter::repeat_n(b.clone(), p as usize))
            .collect()
    }

    /// Visits every tensor entry of term `k` in storage order with the list
    /// of global spin indices it couples.
    fn for_each_entry<F: FnMut(f64, &[usize])>(&self, k: usize, mut f: F) {
        let t = &self.terms[k];
        let axes = self.axes(&t.exponents);
        let mut idx: Vec<usize> = axes.iter().map(|a| a.start).collect();
        let mut stream = match &t.data {
            Couplings::Dense(_) => None,
            Couplings::Streamed => Some(GaussianStream::new(self.seed, t.stream)),
        };
        for e in 0..t.len {
            let w = match (&t.data, stream.as_mut()) {
                (Couplings::Dense(v), _) => v[e],
                (_, Some(s)) => s.next_gaussian(),
                _ => unreachable!(),
            };
            f(w, &idx);
            // odometer, last axis fastest
            for a in (0..axes.len()).rev() {
                idx[a] += 1;
                if idx[a] < axes[a].end {
                    break;
                }
                idx[a] = axes[a].start;
            }
        }
    }

    /// `H_N(σ)` by the defining tensor sums.
    pub fn hamiltonian(&self, sigma: &SpinConfiguration) -> Result<f64> {
        if sigma.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: sigma.len(),
            });
        }
        let s = sigma.as_slice();
        let mut total = 0.0;
        for k in 0..self.terms.len() {
            let mut acc = 0.0;
            self.for_each_entry(k, |w, idx| {
                let mut prod = w;
                for &i in idx {
                    prod *= s[i] as f64;
                }
                acc += prod;
            });
            total += self.terms[k].scale * acc;
        }
        Ok(total)
    }

    /// Reduces the Hamiltonian on the cube to its multilinear form
    /// (using `σ_i² = 1`).
    pub fn multilinear(&self) -> MultilinearForm {
        let n = self.n;
        let mut form = MultilinearForm {
            n,
            constant: 0.0,
            linear: vec![0.0; n],
            pair: vec![0.0; n * n],
            higher: Vec::new(),
            by_site: vec![Vec::new(); n],
        };
        let mut higher: HashMap<Vec<u16>, f64> = HashMap::new();
        let mut odd: Vec<usize> = Vec::new();
        for k in 0..self.terms.len() {
            let scale = self.terms[k].scale;
            self.for_each_entry(k, |w, idx| {
                odd.clear();
                for &i in idx {
                    if let Some(p) = odd.iter().position(|&j| j == i) {
                        odd.swap_remove(p);
                    } else {
                        odd.push(i);
                    }
                }
                let c = scale * w;
                match odd.len() {
                    0 => form.constant += c,
                    1 => form.linear[odd[0]] += c,
                    2 => {
                        let (i, j) = (odd[0], odd[1]);
                        form.pair[i * n + j] += c;
                        form.pair[j * n + i] += c;
                    }
                    _ => {
                        let mut key: Vec<u16> = odd.iter().map(|&i| i as u16).collect();
                        key.sort_unstable();
                        *higher.entry(key).or_insert(0.0) += c;
                    }
                }
            });
        }
        let mut keys: Vec<_> = higher.into_iter().collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0));
        for (key, c) in keys {
            let id = form.higher.len();
            for &i in &key {
                form.by_site[i as usize].push(id);
            }
            form.higher.push((key.into_iter().map(|i| i as usize).collect(), c));
        }
        form
    }
}

/// `H(σ) = c + Σ_i h_i σ_i + Σ_{i<j} J_ij σ_i σ_j + Σ_S J_S Π_{i∈S} σ_i`.
#[derive(Debug, Clone)]
pub struct MultilinearForm {
    pub n: usize,
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Symmetric `n×n`, zero diagonal; each unordered pair stored twice.
    pub pair: Vec<f64>,
    pub higher: Vec<(Vec<usize>, f64)>,
    pub by_site: Vec<Vec<usize>>,
}

impl MultilinearForm {
    pub fn eval(&self, s: &[i8]) -> f64 {
        let n = self.n;
        let mut e = self.constant;
        for i in 0..n {
            let si = s[i] as f64;
            e += self.linear[i] * si;
            let row = &self.pair[i * n..(i + 1) * n];
            let mut f = 0.0;
            for j in (i + 1)..n {
                f += row[j] * s[j] as f64;
            }
            e += si * f;
        }
        for (set, c) in &self.higher {
            e += c * set.iter().map(|&i| s[i] as f64).product::<f64>();
        }
        e
    }

    pub fn pair_coupling(&self, i: usize, j: usize) -> f64 {
        self.pair[i * self.n + j]
    }

    /// Adds `Σ_i field_i σ_i`.
    pub fn add_linear(&mut self, field: &[f64]) {
        for (l, f) in self.linear.iter_mut().zip(field) {
            *l += f;
        }
    }

    pub fn scale(&mut self, a: f64) {
        self.constant *= a;
        self.linear.iter_mut().for_each(|v| *v *= a);
        self.pair.iter_mut().for_each(|v| *v *= a);
        self.higher.iter_mut().for_each(|(_, c)| *c *= a);
    }

    pub fn has_higher(&self) -> bool {
        !self.higher.is_empty()
    }
}

/// A point of the hypercube `{-1, +1}^N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfiguration(Vec<i8>);

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter("spins must be ±1".into()));
        }
        Ok(Self(spins))
    }

    pub fn all_up(n: usize) -> Self {
        Self(vec![1; n])
    }

    /// Bit `i` of `bits` set means spin `i` is `+1`.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Self((0..n).map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == 1)
            .fold(0u64, |acc, (i, _)| acc | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    /// Species overlaps `σ_d · τ_d / N`.
    pub fn overlaps(&self, other: &Self, blocks: &[Range<usize>]) -> Vec<f64> {
        let n = self.len() as f64;
        blocks
            .iter()
            .map(|b| {
                b.clone()
                    .map(|i| (self.0[i] * other.0[i]) as f64)
                    .sum::<f64>()
                    / n
            })
            .collect()
    }
}

pub fn covariance(model: &ModelSpec, overlaps: &[f64]) -> Result<f64> {
    model.covariance(overlaps)
}

pub fn sample_disorder(model: &ModelSpec, n: usize, seed: u64) -> Result<DisorderSample> {
    DisorderSample::draw(model, n, seed, 0)
}

pub fn hamiltonian(sample: &DisorderSample, sigma: &SpinConfiguration) -> Result<f64> {
    sample.hamiltonian(sigma)
}

/// External-field vector `z` for sample `index`, one block per species.
pub fn external_field(n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut z = vec![0.0; n];
    GaussianStream::new(seed, rng::stream_id(index, rng::FIELD_PURPOSE)).fill(&mut z);
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn covariance_examples() {
        let sk = ModelSpec::sk();
        assert_abs_diff_eq!(sk.covariance(&[1.0]).unwrap(), 1.0);
        assert_abs_diff_eq!(sk.covariance(&[0.3]).unwrap(), 0.09, epsilon = 1e-15);
        let bip = ModelSpec::bipartite(0.5, 0.5).unwrap();
        assert_abs_diff_eq!(bip.covariance(&[0.5, 0.5]).unwrap(), 0.25);
        assert!(matches!(
            sk.covariance(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(sk.covariance(&[1.5]).is_err());
    }

    #[test]
    fn block_sizes_largest_remainder() {
        let m = ModelSpec::new(
            "three",
            MixtureFunction::new(3, vec![]).unwrap(),
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        assert_eq!(m.block_sizes(10).unwrap(), vec![4, 3, 3]);
        assert_eq!(m.block_sizes(11).unwrap(), vec![4, 4, 3]);
        assert!(matches!(
            m.block_sizes(2),
            Err(Error::SystemTooSmall { .. })
        ));
        let b = ModelSpec::bipartite(0.3, 0.7).unwrap();
        assert_eq!(b.block_sizes(10).unwrap(), vec![3, 7]);
    }

    #[test]
    fn lambda_must_sum_to_one() {
        assert!(ModelSpec::bipartite(0.5, 0.6).is_err());
        assert!(ModelSpec::new("x", MixtureFunction::single(&[(2, 1.0)]).unwrap(), vec![-1.0]).is_err());
        assert!(MixtureFunction::single(&[(2, -0.1)]).is_err());
    }

    #[test]
    fn sk_single_spin_is_diagonal_coupling() {
        let sk = ModelSpec::sk();
        let s = sample_disorder(&sk, 1, 5).unwrap();
        let w = s.couplings(0)[0];
        for spin in [1, -1] {
            let sigma = SpinConfiguration::new(vec![spin]).unwrap();
            assert_abs_diff_eq!(s.hamiltonian(&sigma).unwrap(), w, epsilon = 1e-15);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let sk = ModelSpec::sk();
        let a = sample_disorder(&sk, 2, 7).unwrap().couplings(0);
        let b = sample_disorder(&sk, 2, 7).unwrap().couplings(0);
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let c = sample_disorder(&sk, 2, 8).unwrap().couplings(0);
        assert_ne!(a, c);
    }

    #[test]
    fn bipartite_zero_couplings() {
        let m = ModelSpec::bipartite(0.5, 0.5).unwrap();
        let s = DisorderSample::from_couplings(&m, 4, vec![vec![0.0; 4]]).unwrap();
        for bits in 0..16 {
            let sigma = SpinConfiguration::from_bits(bits, 4);
            assert_eq!(s.hamiltonian(&sigma).unwrap(), 0.0);
        }
    }

    #[test]
    fn multilinear_matches_direct() {
        let m = ModelSpec::mixed("mix", &[(1, 0.3), (2, 1.0), (3, 0.5), (4, 0.2)]).unwrap();
        let s = sample_disorder(&m, 5, 3).unwrap();
        assert!(s.is_streamed(3));
        let form = s.multilinear();
        for bits in 0..32 {
            let sigma = SpinConfiguration::from_bits(bits, 5);
            assert_abs_diff_eq!(
                form.eval(sigma.as_slice()),
                s.hamiltonian(&sigma).unwrap(),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn model_file_roundtrip() {
        let text = r#"
name = "bip"
species = 2
lambda = [0.5, 0.5]

[[mixture]]
exponents = [1, 1]
weight = 1.0
"#;
        let m = ModelSpec::from_toml_str(text).unwrap();
        assert_eq!(m, ModelSpec::bipartite(0.5, 0.5).unwrap().renamed("bip"));
        let again = ModelSpec::from_toml_str(&m.to_toml_string()).unwrap();
        assert_eq!(again, m);
        assert!(ModelSpec::from_toml_str("name='x'\nspecies=1\nlambda=[1.0]\nmixture=[]\nbogus=1").is_err());
    }

    #[test]
    fn mixture_gradient() {
        let m = MixtureFunction::new(
            2,
            vec![
                MixtureTerm { exponents: vec![1, 1], weight: 1.0 },
                MixtureTerm { exponents: vec![2, 0], weight: 0.5 },
            ],
        )
        .unwrap();
        let g = m.gradient(&[0.3, 0.4]);
        assert_abs_diff_eq!(g[0], 0.4 + 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.3, epsilon = 1e-15);
    }
}
