//! The Parisi variational problem over finitely-atomic order parameters.
//!
//! For a measure `μ` on `[0, 1]` with cdf `ζ`, `Φ` solves
//! `-∂_t Φ = β² (∂_x² Φ + ζ(t) (∂_x Φ)²)` with `Φ(1, x) = log cosh x`, and
//! the functional is `Φ(0, 0) - β² ∫_0^1 t ζ(t) dt`. On each interval where
//! `ζ` is constant the equation is solved exactly by the Cole-Hopf transform.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::quadrature::{log_cosh, GaussHermite, UniformSpline};

/// Atoms closer than this are merged.
pub const MERGE_TOLERANCE: f64 = 1e-9;

/// Finitely-atomic probability measure on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MeasureFile {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl<'de> Deserialize<'de> for DiscreteMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = MeasureFile::deserialize(d)?;
        DiscreteMeasure::new(f.atoms, f.weights).map_err(serde::de::Error::custom)
    }
}

impl DiscreteMeasure {
    /// Validates, sorts, and merges near-coincident atoms.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: atoms.len(),
                got: weights.len(),
            });
        }
        if atoms.is_empty() {
            return Err(Error::InvalidMeasure("a measure needs at least one atom".into()));
        }
        if atoms.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(Error::InvalidMeasure(format!("atoms {atoms:?} must lie in [0, 1]")));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        Ok(Self::assemble(atoms, weights))
    }

    /// Like [`DiscreteMeasure::new`] but clamps atoms into `[0, 1]` and
    /// rescales the weights to unit mass.
    pub fn normalized(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidMeasure("weights must be nonnegative with positive mass".into()));
        }
        let (a, w): (Vec<f64>, Vec<f64>) = atoms
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&q, &w)| (q.clamp(0.0, 1.0), w / total))
            .unzip();
        if a.is_empty() {
            return Err(Error::InvalidMeasure("no atom carries mass".into()));
        }
        Ok(Self::assemble(a, w))
    }

    fn assemble(atoms: Vec<f64>, weights: Vec<f64>) -> Self {
        let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out_a: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut out_w: Vec<f64> = Vec::with_capacity(pairs.len());
        for (q, w) in pairs {
            match out_a.last() {
                Some(&last) if q - last < MERGE_TOLERANCE => *out_w.last_mut().unwrap() += w,
                _ => {
                    out_a.push(q);
                    out_w.push(w);
                }
            }
        }
        Self {
            atoms: out_a,
            weights: out_w,
        }
    }

    pub fn dirac(q: f64) -> Result<Self> {
        Self::new(vec![q], vec![1.0])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `ζ(t) = μ([0, t])`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .filter(|(&q, _)| q <= t)
            .map(|(_, w)| w)
            .sum::<f64>()
            .min(1.0)
    }

    /// `∫_0^1 t ζ(t) dt = Σ_k m_k (1 - q_k²) / 2`.
    pub fn correction_integral(&self) -> f64 {
        self.atoms
            .iter()
            .zip(&self.weights)
            .map(|(q, m)| m * (1.0 - q * q) / 2.0)
            .sum()
    }

    /// Equal-weight mixture `(self + other) / 2`.
    pub fn midpoint(&self, other: &Self) -> Self {
        let atoms = [self.atoms.clone(), other.atoms.clone()].concat();
        let weights: Vec<f64> = self.weights.iter().chain(&other.weights).map(|w| w / 2.0).collect();
        Self::assemble(atoms, weights)
    }

    /// Breakpoints `0 = s_0 < … < s_L = 1` and the value of `ζ` on each
    /// interval `[s_j, s_{j+1})`.
    pub fn intervals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut points = vec![0.0];
        for &q in &self.atoms {
            if q > *points.last().unwrap() && q < 1.0 {
                points.push(q);
            }
        }
        points.push(1.0);
        let levels = points.windows(2).map(|w| self.cdf(w[0])).collect();
        (points, levels)
    }
}

/// Discretization of the `x` variable and of the Gaussian expectations.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct GridConfig {
    /// half-width; `None` selects `12 + 6β²`
    pub x_max: Option<f64>,
    pub dx: f64,
    pub nodes: usize,
    /// largest Gaussian displacement scale per recursion step
    pub max_step: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_max: None,
            dx: 0.01,
            nodes: 40,
            max_step: 0.5,
        }
    }
}

impl GridConfig {
    /// Cheaper grid used inside optimizers.
    pub fn coarse() -> Self {
        Self {
            x_max: None,
            dx: 0.05,
            nodes: 24,
            max_step: 0.5,
        }
    }

    pub fn refined(&self) -> Self {
        Self {
            dx: self.dx / 2.0,
            nodes: (self.nodes * 2).min(crate::quadrature::MAX_NODES),
            ..*self
        }
    }

    fn half_width(&self, beta: f64) -> f64 {
        self.x_max.unwrap_or(12.0 + 6.0 * beta * beta)
    }

    fn validate(&self) -> Result<()> {
        if !(self.dx > 0.0) || !(2..=crate::quadrature::MAX_NODES).contains(&self.nodes) || !(self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid grid {self:?}")));
        }
        if let Some(x) = self.x_max {
            if !(x > 2.0) {
                return Err(Error::InvalidParameter(format!("x_max = {x} is too small")));
            }
        }
        Ok(())
    }
}

/// `Φ` at each breakpoint on the symmetric grid `x_i = -x_max + i dx`.
#[derive(Debug, Clone, Serialize)]
pub struct ParisiSolution {
    pub beta: f64,
    pub measure: DiscreteMeasure,
    pub x_min: f64,
    pub dx: f64,
    pub breakpoints: Vec<f64>,
    /// `values[j][i] = Φ(breakpoints[j], x_i)`
    pub values: Vec<Vec<f64>>,
    pub slopes: Vec<Vec<f64>>,
    /// largest `|∂_x² Φ|` at the right edge; the linear extension assumes it
    /// is negligible
    pub tail_defect: f64,
}

impl ParisiSolution {
    pub fn grid(&self) -> Vec<f64> {
        (0..self.values[0].len()).map(|i| self.x_min + i as f64 * self.dx).collect()
    }

    /// `Φ(0, 0)`.
    pub fn value_at_origin(&self) -> f64 {
        let mid = self.values[0].len() / 2;
        self.values[0][mid]
    }

    /// `Φ(breakpoints[j], ·)` as an interpolant with linear extension.
    pub fn slice(&self, j: usize) -> Slice {
        Slice::new(self.x_min, self.dx, self.values[j].clone())
    }

    pub fn functional(&self) -> f64 {
        self.value_at_origin() - self.beta * self.beta * self.measure.correction_integral()
    }

    pub fn max_abs_slope(&self) -> f64 {
        self.slopes
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Even function known on a symmetric grid, extended linearly outside it.
#[derive(Debug, Clone)]
pub struct Slice {
    spline: UniformSpline,
    edge_value: f64,
    edge_slope: f64,
}

impl Slice {
    pub fn new(x_min: f64, dx: f64, values: Vec<f64>) -> Self {
        let spline = UniformSpline::new(x_min, dx, values);
        let n = spline.values().len();
        let edge_value = spline.values()[n - 1];
        // one-sided second-order difference at the edge
        let v = spline.values();
        let edge_slope = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * dx);
        Self {
            spline,
            edge_value,
            edge_slope,
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let a = x.abs();
        let edge = self.spline.x_max();
        if a <= edge {
            self.spline.eval(x)
        } else {
            self.edge_value + self.edge_slope * (a - edge)
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        let edge = self.spline.x_max();
        if x.abs() <= edge {
            self.spline.deriv(x)
        } else {
            self.edge_slope * x.signum()
        }
    }

    pub fn x_max(&self) -> f64 {
        self.spline.x_max()
    }
}

/// One exact backward step of size `variance = 2β²Δ` at level `zeta`.
fn cole_hopf_step<F: Fn(f64) -> f64 + Sync>(
    f: F,
    grid: &[f64],
    variance: f64,
    zeta: f64,
    gh: &GaussHermite,
) -> Vec<f64> {
    let c = variance.sqrt();
    let half = grid.len() / 2;
    let mut out = vec![0.0; grid.len()];
    let mut buf = vec![0.0; gh.len()];
    // grid is symmetric and the data even: compute x ≥ 0 and mirror
    for i in half..grid.len() {
        let x = grid[i];
        let v = if zeta == 0.0 {
            gh.expect(|z| f(x + c * z))
        } else {
            let mut m = f64::NEG_INFINITY;
            for (b, z) in buf.iter_mut().zip(&gh.nodes) {
                *b = zeta * f(x + c * z);
                m = m.max(*b);
            }
            let s: f64 = buf.iter().zip(&gh.weights).map(|(b, w)| w * (b - m).exp()).sum();
            (m + s.ln()) / zeta
        };
        out[i] = v;
        out[grid.len() - 1 - i] = v;
    }
    out
}

/// Backward solve from `Φ(1, ·) = log cosh`.
pub fn solve_parisi_pde(measure: &DiscreteMeasure, beta: f64, grid: &GridConfig) -> Result<ParisiSolution> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    grid.validate()?;
    let x_max = grid.half_width(beta);
    let half = (x_max / grid.dx).ceil() as usize;
    let x_min = -(half as f64) * grid.dx;
    let xs: Vec<f64> = (0..=2 * half).map(|i| x_min + i as f64 * grid.dx).collect();
    let gh = GaussHermite::new(grid.nodes).pruned(1e-18);

    let (points, levels) = measure.intervals();
    let terminal: Vec<f64> = xs.iter().map(|&x| log_cosh(x)).collect();
    let mut values = vec![terminal];
    let mut analytic = true;
    let mut tail_defect: f64 = 0.0;
    for j in (0..levels.len()).rev() {
        let total = 2.0 * beta * beta * (points[j + 1] - points[j]);
        let steps = ((total.sqrt() / grid.max_step).ceil() as usize).max(1);
        let mut cur = values.last().unwrap().clone();
        if total > 0.0 {
            for _ in 0..steps {
                cur = if analytic {
                    analytic = false;
                    cole_hopf_step(log_cosh, &xs, total / steps as f64, levels[j], &gh)
                } else {
                    let slice = Slice::new(x_min, grid.dx, cur);
                    cole_hopf_step(|x| slice.eval(x), &xs, total / steps as f64, levels[j], &gh)
                };
            }
        }
        // asymptotically Φ(s, x) ≈ |x| + const; measure the departure
        let n = cur.len();
        let curvature = (cur[n - 1] - 2.0 * cur[n - 2] + cur[n - 3]).abs() / (grid.dx * grid.dx);
        tail_defect = tail_defect.max(curvature);
        values.push(cur);
    }
    values.reverse();
    let slopes = values
        .iter()
        .map(|v| {
            let s = Slice::new(x_min, grid.dx, v.clone());
            xs.iter().map(|&x| s.deriv(x)).collect()
        })
        .collect();
    Ok(ParisiSolution {
        beta,
        measure: measure.clone(),
        x_min,
        dx: grid.dx,
        breakpoints: points,
        values,
        slopes,
        tail_defect,
    })
}

/// `Φ_μ(0, 0) - β² ∫_0^1 t ζ(t) dt`.
pub fn parisi_functional(measure: &DiscreteMeasure, beta: f64) -> Result<f64> {
    parisi_functional_with(measure, beta, &GridConfig::default())
}

pub fn parisi_functional_with(measure: &DiscreteMeasure, beta: f64, grid: &GridConfig) -> Result<f64> {
    if beta == 0.0 {
        return Ok(0.0);
    }
    Ok(solve_parisi_pde(measure, beta, grid)?.functional())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParisiOptions {
    pub restarts: usize,
    pub search_grid: GridConfig,
    pub final_grid: GridConfig,
    pub max_evaluations: usize,
}

impl Default for ParisiOptions {
    fn default() -> Self {
        Self {
            restarts: 8,
            search_grid: GridConfig::coarse(),
            final_grid: GridConfig::default(),
            max_evaluations: 3000,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParisiOptimum {
    pub beta: f64,
    pub measure: DiscreteMeasure,
    pub value: f64,
    pub evaluations: usize,
    /// false when the best run stopped on its evaluation budget
    pub converged: bool,
}

/// Search coordinates: `K` raw atoms (clamped to `[0,1]`) followed by
/// `K - 1` weight logits.
fn decode(params: &[f64], k: usize) -> DiscreteMeasure {
    let atoms: Vec<f64> = params[..k].iter().map(|q| q.clamp(0.0, 1.0)).collect();
    let mut logits = params[k..].to_vec();
    logits.push(0.0);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    DiscreteMeasure::normalized(&atoms, &w).expect("softmax weights are positive")
}

fn encode(measure: &DiscreteMeasure, k: usize) -> Vec<f64> {
    let mut atoms = measure.atoms().to_vec();
    let mut weights = measure.weights().to_vec();
    // pad by splitting the heaviest atom
    while atoms.len() < k {
        let i = (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
        weights[i] /= 2.0;
        atoms.insert(i + 1, atoms[i]);
        weights.insert(i + 1, weights[i]);
    }
    let last = weights[k - 1].ln();
    let mut p = atoms;
    p.extend(weights[..k - 1].iter().map(|w| w.ln() - last));
    p
}

fn search_penalty(params: &[f64], k: usize) -> f64 {
    let excess: f64 = params[..k].iter().map(|q| (q - q.clamp(0.0, 1.0)).powi(2)).sum();
    excess + params[k..].iter().map(|l| (l.abs() - 30.0).max(0.0).powi(2)).sum::<f64>()
}

fn minimize_from(beta: f64, k: usize, start: Vec<f64>, opts: &ParisiOptions) -> (DiscreteMeasure, f64, usize, bool) {
    let objective = |p: &[f64]| {
        let mu = decode(p, k);
        parisi_functional_with(&mu, beta, &opts.search_grid).unwrap_or(f64::INFINITY) + search_penalty(p, k)
    };
    let nm = NelderMeadOptions {
        max_evaluations: opts.max_evaluations,
        f_tol: 1e-11,
        x_tol: 1e-7,
        initial_step: 0.1,
    };
    let m = nelder_mead(objective, &start, &nm);
    (decode(&m.x, k), m.value, m.evaluations, m.converged)
}

/// Multi-start minimization over `K`-atomic measures. Every `K` run also
/// starts from the embedded one-atom optimum, so the result never exceeds
/// the `K = 1` value.
pub fn optimize_parisi(beta: f64, k: usize, seed: u64, opts: &ParisiOptions) -> Result<ParisiOptimum> {
    use rand::Rng;

    if k == 0 {
        return Err(Error::InvalidParameter("K must be at least 1".into()));
    }
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    if beta == 0.0 {
        return Ok(ParisiOptimum {
            beta,
            measure: DiscreteMeasure::dirac(0.0)?,
            value: 0.0,
            evaluations: 0,
            converged: true,
        });
    }
    // one-atom problem first
    let single: Vec<(DiscreteMeasure, f64, usize, bool)> = [0.0, 0.5, 0.9]
        .par_iter()
        .map(|&q| minimize_from(beta, 1, vec![q], opts))
        .collect();
    let mut evaluations: usize = single.iter().map(|r| r.2).sum();
    let rs = single
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();

    let mut starts = vec![encode(&rs.0, k)];
    let mut rng = crate::rng::stream_rng(seed, 0);
    for _ in 1..opts.restarts.max(1) {
        let mut atoms: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        atoms.sort_by(f64::total_cmp);
        let logits: Vec<f64> = (0..k - 1).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        starts.push([atoms, logits].concat());
    }
    let runs: Vec<_> = if k == 1 {
        vec![rs]
    } else {
        starts.into_par_iter().map(|s| minimize_from(beta, k, s, opts)).collect()
    };
    evaluations += runs.iter().map(|r| r.2).sum::<usize>();

    // polish candidates on the final grid; tie-break on the atom vector
    let mut best: Option<(DiscreteMeasure, f64, bool)> = None;
    for (mu, _, _, conv) in runs {
        let v = parisi_functional_with(&mu, beta, &opts.final_grid)?;
        let better = match &best {
            None => true,
            Some((bm, bv, _)) => {
                v < *bv - 1e-12 || ((v - bv).abs() <= 1e-12 && mu.atoms().partial_cmp(bm.atoms()) == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some((mu, v, conv));
        }
    }
    let (measure, value, converged) = best.unwrap();
    Ok(ParisiOptimum {
        beta,
        measure,
        value,
        evaluations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::expected_log_cosh;
    use approx::assert_abs_diff_eq;

    #[test]
    fn measure_validation_and_merge() {
        let m = DiscreteMeasure::new(vec![0.5, 0.2, 0.2 + 1e-12], vec![0.5, 0.25, 0.25]).unwrap();
        assert_eq!(m.atoms(), &[0.2, 0.5]);
        assert_abs_diff_eq!(m.weights()[0], 0.5);
        assert!(DiscreteMeasure::new(vec![1.2], vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(vec![0.3], vec![0.9]).is_err());
        assert_abs_diff_eq!(m.cdf(0.3), 0.5);
        assert_abs_diff_eq!(m.cdf(1.0), 1.0);
        let json: DiscreteMeasure = serde_json::from_str(r#"{"atoms":[0.1],"weights":[1.0]}"#).unwrap();
        assert_eq!(json.atoms(), &[0.1]);
    }

    #[test]
    fn zero_beta_leaves_terminal_condition() {
        let sol = solve_parisi_pde(&DiscreteMeasure::dirac(0.3).unwrap(), 0.0, &GridConfig::default()).unwrap();
        for (x, v) in sol.grid().iter().zip(&sol.values[0]) {
            assert_abs_diff_eq!(*v, log_cosh(*x), epsilon = 1e-14);
        }
    }

    #[test]
    fn replica_symmetric_anchor() {
        for beta in [0.3, 0.7, 1.5] {
            let v = parisi_functional(&DiscreteMeasure::dirac(0.0).unwrap(), beta).unwrap();
            assert_abs_diff_eq!(v, beta * beta / 2.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn heat_anchor() {
        for beta in [0.4, 1.2] {
            let v = parisi_functional(&DiscreteMeasure::dirac(1.0).unwrap(), beta).unwrap();
            assert_abs_diff_eq!(v, expected_log_cosh(2f64.sqrt() * beta, 150), epsilon = 1e-8);
        }
    }

    #[test]
    fn slopes_bounded_and_even() {
        let mu = DiscreteMeasure::new(vec![0.2, 0.6, 0.9], vec![0.3, 0.3, 0.4]).unwrap();
        let sol = solve_parisi_pde(&mu, 1.3, &GridConfig::default()).unwrap();
        assert!(sol.max_abs_slope() <= 1.0 + 1e-8, "{}", sol.max_abs_slope());
        let v = &sol.values[0];
        for i in 0..v.len() {
            assert_abs_diff_eq!(v[i], v[v.len() - 1 - i], epsilon = 1e-13);
        }
    }

    #[test]
    fn high_temperature_optimum() {
        let opts = ParisiOptions {
            restarts: 2,
            ..Default::default()
        };
        let r = optimize_parisi(0.3, 2, 1, &opts).unwrap();
        assert_abs_diff_eq!(r.value, 0.045, epsilon = 1e-4);
    }
}
