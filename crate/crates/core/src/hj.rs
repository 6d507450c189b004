//! Limit Hamilton-Jacobi equations for the enriched free energy.
//!
//! The scalar equation `∂_t f = ξ(∂_h f)` and the bipartite equation
//! `∂_t f = ∂_{h₁} f ∂_{h₂} f` are solved on `h ∈ [0, h_max]` by monotone
//! Lax-Friedrichs schemes. For paths `q` the solution is computed from the
//! Hopf-Lax formula
//! `f(t, q) = sup_{q' ≥ 0} ψ₁(q + q') - t ∫ ξ*(q'(u) / t) du`,
//! where `ψ₁` on step paths is evaluated through the cascade recursion.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::golden_section_max;
use crate::parisi::{solve_parisi_pde, DiscreteMeasure, GridConfig};
use crate::quadrature::{log_cosh, GaussHermite, MAX_NODES};

/// Right-continuous step path: `q(u) = values[k]` on `[mesh[k], mesh[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepPath {
    mesh: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PathFile {
    mesh: Vec<f64>,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for StepPath {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = PathFile::deserialize(d)?;
        StepPath::new(f.mesh, f.values).map_err(serde::de::Error::custom)
    }
}

impl StepPath {
    pub fn new(mesh: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if mesh.len() != values.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: values.len() + 1,
                got: mesh.len(),
            });
        }
        if values.is_empty() {
            return Err(Error::InvalidPath("a path needs at least one step".into()));
        }
        if mesh[0] != 0.0 || *mesh.last().unwrap() != 1.0 {
            return Err(Error::InvalidPath("mesh must run from 0 to 1".into()));
        }
        if mesh.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPath("mesh must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidPath(format!("values {values:?} must be finite and nonnegative")));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidPath("values must be nondecreasing".into()));
        }
        Ok(Self { mesh, values })
    }

    pub fn constant(h: f64) -> Result<Self> {
        Self::new(vec![0.0, 1.0], vec![h])
    }

    /// Uniform mesh with `k` steps.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let k = values.len();
        let mesh = (0..=k).map(|j| j as f64 / k as f64).collect();
        Self::new(mesh, values)
    }

    /// Quantile function of `μ`: the inverse of [`path_measure_map`].
    pub fn from_measure(measure: &DiscreteMeasure) -> Self {
        let mut mesh = vec![0.0];
        let mut acc = 0.0;
        for w in measure.weights() {
            acc += w;
            mesh.push(acc);
        }
        *mesh.last_mut().unwrap() = 1.0;
        Self {
            mesh,
            values: measure.atoms().to_vec(),
        }
    }

    pub fn mesh(&self) -> &[f64] {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn eval(&self, u: f64) -> f64 {
        let k = self.mesh[1..].partition_point(|&m| m <= u);
        self.values[k.min(self.values.len() - 1)]
    }

    pub fn top(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// Same path on the union of its mesh and `other`.
    pub fn refined(&self, other: &[f64]) -> Self {
        let mut mesh: Vec<f64> = self.mesh.iter().chain(other).copied().filter(|u| (0.0..=1.0).contains(u)).collect();
        mesh.sort_by(f64::total_cmp);
        mesh.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        let values = mesh.windows(2).map(|w| self.eval(0.5 * (w[0] + w[1]))).collect();
        Self { mesh, values }
    }

    /// Adjacent steps with equal values merged.
    pub fn compressed(&self) -> Self {
        let mut mesh = vec![0.0];
        let mut values: Vec<f64> = Vec::new();
        for (k, &v) in self.values.iter().enumerate() {
            if values.last() == Some(&v) {
                *mesh.last_mut().unwrap() = self.mesh[k + 1];
            } else {
                values.push(v);
                mesh.push(self.mesh[k + 1]);
            }
        }
        Self { mesh, values }
    }
}

/// `ψ₁(h) = h - E log cosh(√(2h) Z)`.
pub fn psi1_scalar(h: f64) -> f64 {
    psi1_with(&GaussHermite::new(MAX_NODES), h)
}

fn psi1_with(gh: &GaussHermite, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let c = (2.0 * h).sqrt();
    h - gh.expect(|z| log_cosh(c * z))
}

/// Law of `q(U)` for `U` uniform on `[0, 1]`.
pub fn path_measure_map(q: &StepPath) -> Result<DiscreteMeasure> {
    let c = q.compressed();
    let weights: Vec<f64> = c.mesh.windows(2).map(|w| w[1] - w[0]).collect();
    DiscreteMeasure::normalized(&c.values, &weights)
        .ok()
        .filter(|_| c.values.iter().all(|v| (0.0..=1.0).contains(v)))
        .ok_or_else(|| Error::InvalidPath(format!("values {:?} must lie in [0, 1] for a measure on [0, 1]", c.values)))
}

/// Evaluates `ψ₁` on step paths and memoizes the results.
#[derive(Debug, Default)]
pub struct PathFunctional {
    grid: GridConfig,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl PathFunctional {
    pub fn new(grid: GridConfig) -> Self {
        Self {
            grid,
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// `ψ₁(q) = q(1⁻) - X₀`, where `X₀` runs the cascade recursion from
    /// `log cosh`: the level entering at mesh point `u_{k-1}` has variance
    /// `2(q_k - q_{k-1})` and exponent `u_{k-1}`. This is `Φ_μ(0, 0)` for the
    /// rescaled law of `q(U) / q(1⁻)` at `β² = q(1⁻)`.
    pub fn eval(&self, q: &StepPath) -> Result<f64> {
        let q = q.compressed();
        let key: Vec<u64> = q.mesh.iter().chain(&q.values).map(|v| v.to_bits()).collect();
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let top = q.top();
        let value = if top <= 0.0 {
            0.0
        } else {
            let atoms: Vec<f64> = q.values.iter().map(|v| (v / top).min(1.0)).collect();
            let weights: Vec<f64> = q.mesh.windows(2).map(|w| w[1] - w[0]).collect();
            let measure = DiscreteMeasure::normalized(&atoms, &weights)?;
            let x0 = solve_parisi_pde(&measure, top.sqrt(), &self.grid)?.value_at_origin();
            top - x0
        };
        if !value.is_finite() {
            return Err(Error::Numerical(format!("cascade recursion overflowed on {q:?}")));
        }
        self.cache.lock().unwrap().insert(key, value);
        Ok(value)
    }

    pub fn cached(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

pub fn psi1_path(q: &StepPath) -> Result<f64> {
    PathFunctional::new(GridConfig::default()).eval(q)
}

fn single_species(model: &ModelSpec) -> Result<()> {
    if model.is_single_species() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!(
            "`{}` has {} species; this solver needs one",
            model.name,
            model.species()
        )))
    }
}

/// Convex dual `ξ*(s) = sup_{r ≥ 0} (r s - ξ(r))`.
pub fn xi_star(model: &ModelSpec, s: f64) -> Result<f64> {
    single_species(model)?;
    let xi = model.mixture();
    if let Some((c, p)) = xi.as_pure_power() {
        if p >= 2 && s > 0.0 {
            let pf = p as f64;
            let r = (s / (c * pf)).powf(1.0 / (pf - 1.0));
            return Ok(r * s - c * r.powf(pf));
        }
    }
    // ξ' is nondecreasing on r ≥ 0, so the maximizer solves ξ'(r) = s
    if s <= xi.deriv1(0.0) {
        return Ok(0.0);
    }
    if xi.max_degree() < 2 {
        return Ok(f64::INFINITY);
    }
    let mut hi = 1.0;
    while xi.deriv1(hi) < s {
        hi *= 2.0;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi.deriv1(mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Ok((r * s - xi.eval1(r)).max(0.0))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HopfLaxOptions {
    /// uniform mesh merged into the mesh of `q`
    pub mesh: usize,
    pub restarts: usize,
    pub max_sweeps: usize,
    /// stop sweeping when a sweep gains less than this
    pub tolerance: f64,
    pub seed: u64,
    /// grid for the search; the optimum is re-evaluated on `GridConfig::default`
    pub search_grid: GridConfig,
}

impl Default for HopfLaxOptions {
    fn default() -> Self {
        Self {
            mesh: 32,
            restarts: 8,
            max_sweeps: 6,
            tolerance: 1e-6,
            seed: 0,
            search_grid: GridConfig {
                x_max: Some(10.0),
                dx: 0.1,
                nodes: 16,
                max_step: 0.5,
            },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HopfLaxResult {
    pub t: f64,
    pub value: f64,
    /// the optimal increment `q'`
    pub increment: StepPath,
    pub evaluations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Hopf-Lax value at `(t, q)`, maximized over nondecreasing increments on
/// the refined mesh by coordinate-wise golden-section sweeps.
pub fn hopf_lax(model: &ModelSpec, t: f64, q: &StepPath, opts: &HopfLaxOptions) -> Result<HopfLaxResult> {
    single_species(model)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::InvalidParameter(format!("t = {t} must be positive")));
    }
    if opts.mesh == 0 || opts.restarts == 0 {
        return Err(Error::InvalidParameter("mesh and restarts must be positive".into()));
    }
    let uniform: Vec<f64> = (0..=opts.mesh).map(|j| j as f64 / opts.mesh as f64).collect();
    let base = q.refined(&uniform);
    let k = base.steps();
    let du: Vec<f64> = base.mesh.windows(2).map(|w| w[1] - w[0]).collect();
    // ∂ψ₁ has density at most one, so optimal increments satisfy r*(q'/t) ≤ 1
    let reach = t * model.mixture().deriv1(1.0).max(1e-3) * 1.05;

    let search = PathFunctional::new(opts.search_grid);
    let mut evaluations = 0usize;
    let mut objective = |steps: &[f64], functional: &PathFunctional| -> Result<f64> {
        let mut acc = 0.0;
        let mut penalty = 0.0;
        let mut values = Vec::with_capacity(k);
        for (j, d) in steps.iter().enumerate() {
            acc += d;
            values.push(base.values[j] + acc);
            penalty += xi_star(model, acc / t)? * du[j];
        }
        evaluations += 1;
        let path = StepPath {
            mesh: base.mesh.clone(),
            values,
        };
        Ok(functional.eval(&path)? - t * penalty)
    };

    let mut rng = crate::rng::stream_rng(opts.seed, crate::rng::ALGORITHM_PURPOSE);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut converged = false;
    for restart in 0..opts.restarts {
        let mut steps = vec![0.0; k];
        if restart > 0 {
            // random nondecreasing start below the reach
            let scale = reach * rng.random::<f64>();
            for s in steps.iter_mut() {
                *s = scale * rng.random::<f64>() / k as f64;
            }
        }
        let mut value = objective(&steps, &search)?;
        let mut restart_converged = false;
        for _ in 0..opts.max_sweeps {
            let before = value;
            for j in 0..k {
                let used: f64 = steps.iter().sum::<f64>() - steps[j];
                let hi = (reach - used).max(0.0);
                let mut err = None;
                let (x, v) = golden_section_max(
                    |x| {
                        let mut trial = steps.clone();
                        trial[j] = x;
                        objective(&trial, &search).unwrap_or_else(|e| {
                            err = Some(e);
                            f64::NEG_INFINITY
                        })
                    },
                    0.0,
                    hi,
                    1e-3 * reach,
                );
                if let Some(e) = err {
                    return Err(e);
                }
                if v > value {
                    steps[j] = x;
                    value = v;
                }
            }
            if value - before < opts.tolerance {
                restart_converged = true;
                break;
            }
        }
        converged |= restart_converged;
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            best = Some((steps, value));
        }
    }
    let (steps, _) = best.unwrap();
    let fine = PathFunctional::new(GridConfig::default());
    let value = objective(&steps, &fine)?;
    let mut acc = 0.0;
    let increment = StepPath {
        mesh: base.mesh.clone(),
        values: steps
            .iter()
            .map(|d| {
                acc += d;
                acc
            })
            .collect(),
    };
    let mut warnings = Vec::new();
    if !converged {
        warnings.push(format!("Hopf-Lax sweeps did not settle within {} sweeps", opts.max_sweeps));
    }
    Ok(HopfLaxResult {
        t,
        value,
        increment,
        evaluations,
        converged,
        warnings,
    })
}

/// Spatial and temporal discretization of the HJ schemes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct HJGrid {
    pub h_max: f64,
    pub dh: f64,
    /// Courant number of the monotone scheme, at most one
    pub cfl: f64,
    /// spacing of the recorded time slices
    pub record_every: f64,
    /// the field is reported on `[0, report_h]`; a warning is issued if the
    /// far boundary can reach it
    pub report_h: f64,
}

impl Default for HJGrid {
    fn default() -> Self {
        Self {
            h_max: 4.0,
            dh: 0.01,
            cfl: 0.9,
            record_every: 0.025,
            report_h: 1.0,
        }
    }
}

impl HJGrid {
    pub fn refined(&self) -> Self {
        Self { dh: self.dh / 2.0, ..*self }
    }

    pub fn points(&self) -> usize {
        (self.h_max / self.dh).round() as usize + 1
    }

    fn validate(&self) -> Result<()> {
        if !(self.dh > 0.0) || !(self.h_max >= 4.0 * self.dh) || !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::InvalidParameter(format!("invalid HJ grid {self:?}")));
        }
        if !(self.record_every > 0.0) {
            return Err(Error::InvalidParameter("record_every must be positive".into()));
        }
        Ok(())
    }

    fn record_times(&self, t_max: f64) -> Vec<f64> {
        let n = (t_max / self.record_every - 1e-9).ceil().max(1.0) as usize;
        let mut times: Vec<f64> = (0..=n).map(|j| (j as f64 * self.record_every).min(t_max)).collect();
        *times.last_mut().unwrap() = t_max;
        times.dedup();
        times
    }
}

/// Recorded time slices of a scheme solution on `[0, h_max]^dimension`.
#[derive(Debug, Clone, Serialize)]
pub struct HJField {
    pub dimension: usize,
    pub dh: f64,
    /// grid points per axis
    pub points: usize,
    pub times: Vec<f64>,
    /// `values[j]` is the slice at `times[j]`, row-major in `(h₁, h₂)`
    pub values: Vec<Vec<f64>>,
    pub steps: usize,
    /// largest characteristic speed met; the far boundary influences
    /// `h > h_max - max_speed t`
    pub max_speed: f64,
    pub warnings: Vec<String>,
}

impl HJField {
    pub fn h_max(&self) -> f64 {
        (self.points - 1) as f64 * self.dh
    }

    pub fn h_grid(&self) -> Vec<f64> {
        (0..self.points).map(|i| i as f64 * self.dh).collect()
    }

    pub fn slice_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|s| (s - t).abs() < 1e-9)
            .ok_or_else(|| Error::InvalidParameter(format!("t = {t} is not a recorded time")))
    }

    /// Region unaffected by the far boundary at time `t`.
    pub fn trusted_extent(&self, t: f64) -> f64 {
        self.h_max() - self.max_speed * t
    }

    /// Linear (bilinear in 2D) interpolation of a recorded slice.
    pub fn value(&self, t: f64, h: &[f64]) -> Result<f64> {
        if h.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: h.len(),
            });
        }
        if h.iter().any(|&x| !(0.0..=self.h_max()).contains(&x)) {
            return Err(Error::InvalidParameter(format!("h = {h:?} is outside the grid")));
        }
        let slice = &self.values[self.slice_index(t)?];
        let locate = |x: f64| {
            let i = ((x / self.dh).floor() as usize).min(self.points - 2);
            (i, x / self.dh - i as f64)
        };
        Ok(match self.dimension {
            1 => {
                let (i, w) = locate(h[0]);
                (1.0 - w) * slice[i] + w * slice[i + 1]
            }
            _ => {
                let (i, a) = locate(h[0]);
                let (j, b) = locate(h[1]);
                let at = |i: usize, j: usize| slice[i * self.points + j];
                (1.0 - a) * ((1.0 - b) * at(i, j) + b * at(i, j + 1))
                    + a * ((1.0 - b) * at(i + 1, j) + b * at(i + 1, j + 1))
            }
        })
    }

    /// Centered differences of a slice (one-sided at the edges), one vector
    /// per axis.
    pub fn gradient(&self, slice: usize) -> Vec<Vec<f64>> {
        let v = &self.values[slice];
        let m = self.points;
        let diff = |get: &dyn Fn(usize) -> f64, i: usize| {
            if i == 0 {
                (get(1) - get(0)) / self.dh
            } else if i == m - 1 {
                (get(m - 1) - get(m - 2)) / self.dh
            } else {
                (get(i + 1) - get(i - 1)) / (2.0 * self.dh)
            }
        };
        match self.dimension {
            1 => vec![(0..m).map(|i| diff(&|k| v[k], i)).collect()],
            _ => {
                let d1 = (0..m * m).map(|idx| diff(&|k| v[k * m + idx % m], idx / m)).collect();
                let d2 = (0..m * m).map(|idx| diff(&|k| v[(idx / m) * m + k], idx % m)).collect();
                vec![d1, d2]
            }
        }
    }
}

fn check_horizon(t_max: f64) -> Result<()> {
    if !(t_max >= 0.0) || !t_max.is_finite() {
        return Err(Error::InvalidParameter(format!("t_max = {t_max} must be nonnegative")));
    }
    Ok(())
}

/// Local Lax-Friedrichs scheme for `∂_t f = H(∂_h f)` from arbitrary
/// initial data on the grid; `speed(lo, hi)` bounds `|H'|` on `[lo, hi]` and
/// sets both the viscosity of each cell and the global time step.
pub fn solve_scalar_from<H, S>(initial: Vec<f64>, hamiltonian: H, speed: S, t_max: f64, grid: &HJGrid) -> Result<HJField>
where
    H: Fn(f64) -> f64 + Sync,
    S: Fn(f64, f64) -> f64 + Sync,
{
    grid.validate()?;
    check_horizon(t_max)?;
    let m = grid.points();
    if initial.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: initial.len(),
        });
    }
    let dh = grid.dh;
    let times = grid.record_times(t_max);
    let mut values = vec![initial.clone()];
    let mut cur = initial;
    let mut next = vec![0.0; m];
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_speed: f64 = 0.0;
    for &target in &times[1..] {
        while t < target - 1e-14 {
            let (lo, hi) = cur.windows(2).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), w| {
                let p = (w[1] - w[0]) / dh;
                (lo.min(p), hi.max(p))
            });
            let alpha = speed(lo, hi).max(1e-12);
            max_speed = max_speed.max(alpha);
            let dt = (grid.cfl * dh / alpha).min(target - t);
            next[0] = cur[0] + dt * hamiltonian((cur[1] - cur[0]) / dh);
            next[1..].par_iter_mut().enumerate().for_each(|(k, out)| {
                let i = k + 1;
                let right = if i + 1 < m { cur[i + 1] } else { 2.0 * cur[i] - cur[i - 1] };
                let pm = (cur[i] - cur[i - 1]) / dh;
                let pp = (right - cur[i]) / dh;
                let local = speed(pm.min(pp), pm.max(pp));
                *out = cur[i] + dt * (hamiltonian(0.5 * (pm + pp)) + 0.5 * local * (pp - pm));
            });
            std::mem::swap(&mut cur, &mut next);
            t += dt;
            steps += 1;
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("HJ scheme diverged at t = {t}")));
            }
        }
        t = target;
        values.push(cur.clone());
    }
    let mut warnings = Vec::new();
    let front = grid.h_max - max_speed * t_max;
    if front < grid.report_h {
        warnings.push(format!(
            "far boundary influences h > {front:.3}, inside the reported region [0, {}]",
            grid.report_h
        ));
    }
    Ok(HJField {
        dimension: 1,
        dh,
        points: m,
        times,
        values,
        steps,
        max_speed,
        warnings,
    })
}

/// `∂_t f = ξ(∂_h f)` with `f(0, h) = ψ₁(h)`.
pub fn solve_hj_scalar(model: &ModelSpec, t_max: f64, grid: &HJGrid) -> Result<HJField> {
    single_species(model)?;
    grid.validate()?;
    let gh = GaussHermite::new(MAX_NODES);
    let initial: Vec<f64> = (0..grid.points()).map(|i| psi1_with(&gh, i as f64 * grid.dh)).collect();
    let xi = model.mixture();
    solve_scalar_from(
        initial,
        |p| xi.eval1(p),
        |lo, hi| {
            // ξ' is monotone where the mixture is convex; sample the interval
            (0..=4)
                .map(|j| xi.deriv1(lo + (hi - lo) * j as f64 / 4.0).abs())
                .fold(0.0, f64::max)
        },
        t_max,
        grid,
    )
}

/// Lax-Friedrichs scheme for `∂_t f = ∂_{h₁} f ∂_{h₂} f` with artificial
/// viscosities `max|p₂|` and `max|p₁|`; `initial` is row-major in `(h₁, h₂)`.
pub fn solve_bipartite_from(initial: Vec<f64>, t_max: f64, grid: &HJGrid) -> Result<HJField> {
    grid.validate()?;
    check_horizon(t_max)?;
    let m = grid.points();
    if initial.len() != m * m {
        return Err(Error::DimensionMismatch {
            expected: m * m,
            got: initial.len(),
        });
    }
    let dh = grid.dh;
    let times = grid.record_times(t_max);
    let mut values = vec![initial.clone()];
    let mut cur = initial;
    let mut next = vec![0.0; m * m];
    let mut t = 0.0;
    let mut steps = 0;
    let mut max_speed: f64 = 0.0;
    for &target in &times[1..] {
        while t < target - 1e-14 {
            let (a1, a2) = (0..m).into_par_iter().map(|i| {
                let mut p1: f64 = 0.0;
                let mut p2: f64 = 0.0;
                for j in 0..m {
                    let idx = i * m + j;
                    if i + 1 < m {
                        p1 = p1.max(((cur[idx + m] - cur[idx]) / dh).abs());
                    }
                    if j + 1 < m {
                        p2 = p2.max(((cur[idx + 1] - cur[idx]) / dh).abs());
                    }
                }
                (p2, p1)
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
            // α₁ = max|∂H/∂p₁| = max|p₂|, α₂ = max|p₁|
            let total = (a1 + a2).max(1e-12);
            max_speed = max_speed.max(a1.max(a2));
            let dt = (grid.cfl * dh / total).min(target - t);
            let at = |i: usize, j: usize| -> f64 {
                // far edges extrapolate linearly
                match (i == m, j == m) {
                    (false, false) => cur[i * m + j],
                    (true, false) => 2.0 * cur[(m - 1) * m + j] - cur[(m - 2) * m + j],
                    (false, true) => 2.0 * cur[i * m + m - 1] - cur[i * m + m - 2],
                    (true, true) => unreachable!(),
                }
            };
            next.par_chunks_mut(m).enumerate().for_each(|(i, row)| {
                for (j, out) in row.iter_mut().enumerate() {
                    let f = cur[i * m + j];
                    let p1p = (at(i + 1, j) - f) / dh;
                    let p2p = (at(i, j + 1) - f) / dh;
                    let (p1, visc1) = if i == 0 {
                        (p1p, 0.0)
                    } else {
                        let p1m = (f - cur[(i - 1) * m + j]) / dh;
                        (0.5 * (p1m + p1p), 0.5 * a1 * (p1p - p1m))
                    };
                    let (p2, visc2) = if j == 0 {
                        (p2p, 0.0)
                    } else {
                        let p2m = (f - cur[i * m + j - 1]) / dh;
                        (0.5 * (p2m + p2p), 0.5 * a2 * (p2p - p2m))
                    };
                    *out = f + dt * (p1 * p2 + visc1 + visc2);
                }
            });
            std::mem::swap(&mut cur, &mut next);
            t += dt;
            steps += 1;
            if cur.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("HJ scheme diverged at t = {t}")));
            }
        }
        t = target;
        values.push(cur.clone());
    }
    let mut warnings = Vec::new();
    let front = grid.h_max - max_speed * t_max;
    if front < grid.report_h {
        warnings.push(format!(
            "far boundary influences h > {front:.3}, inside the reported region [0, {}]²",
            grid.report_h
        ));
    }
    Ok(HJField {
        dimension: 2,
        dh,
        points: m,
        times,
        values,
        steps,
        max_speed,
        warnings,
    })
}

/// `ψ₂(h) = λ₁ ψ₁(h₁) + λ₂ ψ₁(h₂)`: each species contributes its share of
/// single-spin terms `h_d - log cosh(√(2h_d) z)`.
pub fn bipartite_initial(lambda1: f64, lambda2: f64, grid: &HJGrid) -> Vec<f64> {
    let gh = GaussHermite::new(MAX_NODES);
    let m = grid.points();
    let psi: Vec<f64> = (0..m).map(|i| psi1_with(&gh, i as f64 * grid.dh)).collect();
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            out[i * m + j] = lambda1 * psi[i] + lambda2 * psi[j];
        }
    }
    out
}

pub fn solve_hj_bipartite(lambda1: f64, lambda2: f64, t_max: f64, grid: &HJGrid) -> Result<HJField> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) || (lambda1 + lambda2 - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "species fractions ({lambda1}, {lambda2}) must be positive and sum to one"
        )));
    }
    grid.validate()?;
    solve_bipartite_from(bipartite_initial(lambda1, lambda2, grid), t_max, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psi1_scalar_bounds() {
        assert_eq!(psi1_scalar(0.0), 0.0);
        for h in [0.01, 0.3, 1.0, 3.7] {
            let v = psi1_scalar(h);
            assert!((0.0..=h).contains(&v), "{h} {v}");
        }
    }

    #[test]
    fn constant_path_anchor() {
        let f = PathFunctional::default();
        assert_eq!(f.eval(&StepPath::constant(0.0).unwrap()).unwrap(), 0.0);
        for h in [0.1, 0.5, 1.3] {
            let v = f.eval(&StepPath::constant(h).unwrap()).unwrap();
            assert_abs_diff_eq!(v, psi1_scalar(h), epsilon = 1e-6);
            // splitting the mesh changes nothing
            let split = StepPath::new(vec![0.0, 0.3, 1.0], vec![h, h]).unwrap();
            assert_abs_diff_eq!(f.eval(&split).unwrap(), v, epsilon = 1e-12);
        }
    }

    #[test]
    fn xi_star_closed_forms() {
        let sk = ModelSpec::sk();
        assert_eq!(xi_star(&sk, -1.0).unwrap(), 0.0);
        assert_eq!(xi_star(&sk, 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(xi_star(&sk, 2.0).unwrap(), 1.0, epsilon = 1e-14);
        // mixed model by bisection agrees with a dense scan
        let m = ModelSpec::mixed("m", &[(2, 0.5), (4, 0.5)]).unwrap();
        let s = 1.3;
        let scan = (0..200_000)
            .map(|i| {
                let r = i as f64 * 1e-5;
                r * s - m.mixture().eval1(r)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(xi_star(&m, s).unwrap(), scan, epsilon = 1e-8);
    }

    #[test]
    fn measure_map_examples() {
        let m = path_measure_map(&StepPath::constant(0.4).unwrap()).unwrap();
        assert_eq!(m.atoms(), &[0.4]);
        let two = StepPath::new(vec![0.0, 0.5, 1.0], vec![0.2, 0.7]).unwrap();
        let m = path_measure_map(&two).unwrap();
        assert_eq!(m.atoms(), &[0.2, 0.7]);
        assert_abs_diff_eq!(m.weights()[0], 0.5, epsilon = 1e-15);
        assert!(path_measure_map(&StepPath::constant(1.5).unwrap()).is_err());
    }

    #[test]
    fn scalar_scheme_starts_from_psi1() {
        let grid = HJGrid::default();
        let field = solve_hj_scalar(&ModelSpec::sk(), 0.05, &grid).unwrap();
        for (i, h) in field.h_grid().iter().enumerate().step_by(37) {
            assert_eq!(field.values[0][i], psi1_scalar(*h));
        }
        assert!(field.warnings.is_empty());
    }

    #[test]
    fn linear_data_is_exact() {
        // f = a + b h solves ∂_t f = ξ(b) exactly
        let grid = HJGrid::default();
        let init: Vec<f64> = (0..grid.points()).map(|i| 0.2 + 0.6 * i as f64 * grid.dh).collect();
        let f = solve_scalar_from(init, |p| p * p, |lo, hi| 2.0 * lo.abs().max(hi.abs()), 0.3, &grid).unwrap();
        let last = f.values.last().unwrap();
        for (i, v) in last.iter().enumerate() {
            assert_abs_diff_eq!(*v, 0.2 + 0.6 * i as f64 * grid.dh + 0.3 * 0.36, epsilon = 1e-10);
        }
    }

    #[test]
    fn bipartite_slices() {
        let grid = HJGrid {
            h_max: 2.0,
            dh: 0.02,
            ..Default::default()
        };
        let f = solve_hj_bipartite(0.5, 0.5, 0.05, &grid).unwrap();
        assert_eq!(f.values[0], bipartite_initial(0.5, 0.5, &grid));
        assert_eq!(*f.times.last().unwrap(), 0.05);
        let v = f.value(0.0, &[0.3, 0.5]).unwrap();
        let exact = 0.5 * psi1_scalar(0.3) + 0.5 * psi1_scalar(0.5);
        assert_abs_diff_eq!(v, exact, epsilon = 1e-12);
        assert!(solve_hj_bipartite(0.5, 0.6, 0.1, &grid).is_err());
    }

    #[test]
    fn psi1_scalar_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let h: f64 = 0.5;
        let mut rng = crate::rng::stream_rng(11, 0);
        let n = 10_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = -(-h + log_cosh((2.0 * h).sqrt() * z));
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let sd = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((psi1_scalar(h) - mean).abs() < 3.0 * sd, "{} vs {mean} ± {sd}", psi1_scalar(h));
    }

    #[test]
    fn two_level_path_matches_cascade_simulation() {
        use rand_distr::{Distribution, Exp1, StandardNormal};
        // q = 0.2 on [0, 0.3), 0.7 on [0.3, 1): the second level carries
        // Poisson-Dirichlet weights with parameter 0.3
        let (u, q1, q2) = (0.3, 0.2, 0.7);
        let path = StepPath::new(vec![0.0, u, 1.0], vec![q1, q2]).unwrap();
        let exact = psi1_path(&path).unwrap();

        let mut rng = crate::rng::stream_rng(12, 0);
        let (a, b) = ((2.0f64 * q1).sqrt(), (2.0f64 * (q2 - q1)).sqrt());
        let samples = 100_000;
        let points = 400;
        let mut vals = Vec::with_capacity(samples);
        let mut logw = vec![0.0; points];
        let mut x = vec![0.0; points];
        for _ in 0..samples {
            let z1: f64 = StandardNormal.sample(&mut rng);
            let mut arrival = 0.0;
            for k in 0..points {
                let e: f64 = Exp1.sample(&mut rng);
                arrival += e;
                logw[k] = -arrival.ln() / u;
                let z2: f64 = StandardNormal.sample(&mut rng);
                x[k] = log_cosh(a * z1 + b * z2);
            }
            let ones = vec![0.0; points];
            // E log Σ v e^X - E log Σ v = (1/u) log E e^{uX}; the common
            // truncation largely cancels
            let with = lse(&logw, &x);
            let without = lse(&logw, &ones);
            vals.push(q2 - (with - without));
        }
        let (mean, err) = crate::mc::free_energy::mean_and_error(&vals);
        assert!((exact - mean).abs() < 3.0 * err + 2e-4, "{exact} vs {mean} ± {err}");
    }

    fn lse(logw: &[f64], x: &[f64]) -> f64 {
        let m = logw.iter().zip(x).map(|(w, v)| w + v).fold(f64::NEG_INFINITY, f64::max);
        m + logw.iter().zip(x).map(|(w, v)| (w + v - m).exp()).sum::<f64>().ln()
    }

    #[test]
    fn bipartite_small_time_taylor() {
        let grid = HJGrid {
            record_every: 0.01,
            ..Default::default()
        };
        let f = solve_hj_bipartite(0.5, 0.5, 0.01, &grid).unwrap();
        let dpsi = |h: f64| (psi1_scalar(h + 1e-5) - psi1_scalar(h - 1e-5)) / 2e-5;
        for (h1, h2) in [(0.3, 0.3), (0.5, 1.0), (1.2, 0.2)] {
            let taylor = 0.5 * psi1_scalar(h1) + 0.5 * psi1_scalar(h2) + 0.01 * 0.25 * dpsi(h1) * dpsi(h2);
            let v = f.value(0.01, &[h1, h2]).unwrap();
            assert!((v - taylor).abs() < 1e-3, "{h1} {h2}: {v} vs {taylor}");
        }
    }

    #[test]
    fn hopf_lax_dominates_zero_increment() {
        let q = StepPath::new(vec![0.0, 0.5, 1.0], vec![0.1, 0.4]).unwrap();
        let opts = HopfLaxOptions {
            mesh: 8,
            restarts: 2,
            ..Default::default()
        };
        let psi = psi1_path(&q).unwrap();
        let r = hopf_lax(&ModelSpec::sk(), 0.2, &q, &opts).unwrap();
        assert!(r.value >= psi - 1e-9);
        // small t pins the increment at zero
        let r = hopf_lax(&ModelSpec::sk(), 1e-4, &q, &opts).unwrap();
        assert_abs_diff_eq!(r.value, psi, epsilon = 1e-5);
    }
}
