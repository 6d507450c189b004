//! The un-inverted variational formula over bounded Brownian martingales.
//!
//! Martingales are taken from a Markov family `α_t = m(t, Y_t)` where
//! `dY_t = c(t) m(t, Y_t) dt + dB_t`, `Y_0 = 0`, and `m(1, ·) = a` is an odd
//! terminal function with `|a| ≤ 1`. Writing `m = ∂_y Ψ`, each time step is a
//! Cole-Hopf smoothing of `exp(c Ψ)`, so the regression functions form an
//! exact martingale. With `c ≡ 0` the family reduces to `α_t = E[a(B_1) | B_t]`.
//!
//! Everything is discretized as a Markov chain on a uniform symmetric
//! `y`-grid: the transition from `y0` over a step of length `Δ` has weights
//! proportional to `exp(-(y - y0)²/(2Δ) + c Ψ(t_{k+1}, y))`, normalized over `y`.
//! Backward regression and forward laws use the same kernel.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::optim::{nelder_mead, Minimum, NelderMeadOptions};
use crate::parisi::DiscreteMeasure;

/// Convex dual of `log cosh`; `+∞` outside `[-1, 1]`.
pub fn phi_star(x: f64) -> f64 {
    if !(-1.0..=1.0).contains(&x) {
        return f64::INFINITY;
    }
    let xlogx = |u: f64| if u == 0.0 { 0.0 } else { u * u.ln() };
    0.5 * (xlogx(1.0 + x) + xlogx(1.0 - x))
}

/// Discretization of a Markov martingale.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct MartingaleGrid {
    /// number of uniform time steps `M`
    pub steps: usize,
    pub dy: f64,
    /// half-width beyond the largest possible drift displacement
    pub margin: f64,
    /// kernel support in standard deviations
    pub band: f64,
}

impl Default for MartingaleGrid {
    fn default() -> Self {
        Self {
            steps: 40,
            dy: 0.04,
            margin: 8.0,
            band: 8.5,
        }
    }
}

impl MartingaleGrid {
    /// Cheap grid used for the search phase of the optimizers.
    pub fn coarse() -> Self {
        Self {
            steps: 20,
            dy: 0.08,
            margin: 7.0,
            band: 8.0,
        }
    }

    pub fn with_steps(steps: usize) -> Self {
        Self {
            steps,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.steps == 0 || !(self.dy > 0.0) || !(self.margin > 0.0) || !(self.band > 0.0) {
            return Err(Error::InvalidParameter(format!("invalid martingale grid {self:?}")));
        }
        Ok(())
    }
}

/// A bounded martingale `α_t = m(t_k, Y_{t_k})` on a time grid.
#[derive(Debug, Clone, Serialize)]
pub struct MarkovMartingale {
    /// clock times `t_k`
    times: Vec<f64>,
    /// Brownian variance `V_k` driving `Y` over step `k`; equals
    /// `t_{k+1} - t_k` unless the martingale has been time-changed
    variances: Vec<f64>,
    /// drift coefficient on step `k`, per unit of driving variance
    drift: Vec<f64>,
    /// grid is `y_i = (i - half) dy`
    half: usize,
    dy: f64,
    band: f64,
    terminal: Vec<f64>,
    #[serde(skip)]
    potential: Vec<Vec<f64>>,
    #[serde(skip)]
    regression: Vec<Vec<f64>>,
    #[serde(skip)]
    laws: Vec<Vec<f64>>,
    second_moment: Vec<f64>,
    /// `E[α_1 ξ_k]` with `ξ_k` the standardized step-`k` innovation of `Y`
    noise_cross: Vec<f64>,
}

/// Serialized form: the terminal samples plus both grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleFile {
    pub times: Vec<f64>,
    pub drift: Vec<f64>,
    pub dy: f64,
    /// `a(y_i)` on `y_i = (i - (len - 1)/2) dy`
    pub terminal: Vec<f64>,
    /// driving variance per step; defaults to the clock increments
    #[serde(default)]
    pub variances: Option<Vec<f64>>,
    #[serde(default)]
    pub band: Option<f64>,
}

impl MarkovMartingale {
    /// Builds the martingale with terminal `a` and per-step drift `drift`
    /// (`drift.len() == grid.steps`).
    pub fn new<F: Fn(f64) -> f64>(terminal: F, drift: &[f64], grid: &MartingaleGrid) -> Result<Self> {
        grid.validate()?;
        if drift.len() != grid.steps {
            return Err(Error::DimensionMismatch {
                expected: grid.steps,
                got: drift.len(),
            });
        }
        let times: Vec<f64> = (0..=grid.steps).map(|k| k as f64 / grid.steps as f64).collect();
        let push: f64 = drift.iter().map(|c| c.abs()).sum::<f64>() / grid.steps as f64;
        let half = ((grid.margin + push) / grid.dy).ceil() as usize;
        let samples: Vec<f64> = (0..=2 * half)
            .map(|i| terminal((i as f64 - half as f64) * grid.dy))
            .collect();
        Self::from_parts(times, None, drift.to_vec(), grid.dy, grid.band, samples)
    }

    /// Like [`MarkovMartingale::new`] on the non-uniform grid whose steps
    /// have driving variances `variances` (summing to 1).
    pub fn with_schedule<F: Fn(f64) -> f64>(
        terminal: F,
        variances: &[f64],
        drift: &[f64],
        grid: &MartingaleGrid,
    ) -> Result<Self> {
        grid.validate()?;
        let total: f64 = variances.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("step variances sum to {total}, not 1")));
        }
        let mut times = vec![0.0];
        let mut acc = 0.0;
        for v in variances {
            acc += v;
            times.push(acc);
        }
        *times.last_mut().unwrap() = 1.0;
        let push: f64 = drift.iter().zip(variances).map(|(c, v)| c.abs() * v).sum();
        let half = ((grid.margin + push) / grid.dy).ceil() as usize;
        let samples: Vec<f64> = (0..=2 * half)
            .map(|i| terminal((i as f64 - half as f64) * grid.dy))
            .collect();
        Self::from_parts(times, Some(variances.to_vec()), drift.to_vec(), grid.dy, grid.band, samples)
    }

    /// Builds the martingale with drift profile `drift(u)` in intrinsic time,
    /// re-grids intrinsic time so that `E[α²]` grows by about `1/M` per step,
    /// and returns the time-changed result (see [`MarkovMartingale::time_changed`]).
    pub fn on_variance_clock<F, D>(terminal: F, drift: D, grid: &MartingaleGrid) -> Result<Self>
    where
        F: Fn(f64) -> f64,
        D: Fn(f64) -> f64,
    {
        let m = grid.steps;
        let fine = MartingaleGrid {
            steps: 2 * m,
            ..*grid
        };
        let mid = |a: f64, b: f64| drift(0.5 * (a + b));
        let first: Vec<f64> = (0..fine.steps)
            .map(|k| mid(k as f64 / fine.steps as f64, (k + 1) as f64 / fine.steps as f64))
            .collect();
        let pilot = Self::new(&terminal, &first, &fine)?;
        let s = pilot.second_moments();
        let top = s[fine.steps];
        if !(top > 0.0) {
            return Err(Error::Numerical("the martingale is identically zero".into()));
        }
        // invert the piecewise-linear map u ↦ s(u) at levels top * j / m
        let mut knots = vec![0.0];
        let mut seg = 0;
        for j in 1..m {
            let level = top * j as f64 / m as f64;
            while seg + 1 < fine.steps && s[seg + 1] < level {
                seg += 1;
            }
            let (s0, s1) = (s[seg], s[seg + 1]);
            let frac = if s1 > s0 { ((level - s0) / (s1 - s0)).clamp(0.0, 1.0) } else { 0.0 };
            let u = (seg as f64 + frac) / fine.steps as f64;
            let last = *knots.last().unwrap();
            knots.push(u.max(last + 1e-9));
        }
        knots.push(1.0);
        let variances: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Numerical("degenerate intrinsic time grid".into()));
        }
        let drift_steps: Vec<f64> = knots.windows(2).map(|w| mid(w[0], w[1])).collect();
        Self::with_schedule(terminal, &variances, &drift_steps, grid)?.time_changed()
    }

    pub fn from_file(file: MartingaleFile) -> Result<Self> {
        let band = file.band.unwrap_or(MartingaleGrid::default().band);
        Self::from_parts(file.times, file.variances, file.drift, file.dy, band, file.terminal)
    }

    pub fn to_file(&self) -> MartingaleFile {
        MartingaleFile {
            times: self.times.clone(),
            drift: self.drift.clone(),
            dy: self.dy,
            terminal: self.terminal.clone(),
            variances: Some(self.variances.clone()),
            band: Some(self.band),
        }
    }

    fn from_parts(
        times: Vec<f64>,
        variances: Option<Vec<f64>>,
        drift: Vec<f64>,
        dy: f64,
        band: f64,
        terminal: Vec<f64>,
    ) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || (times[times.len() - 1] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter("time grid must run from 0 to 1".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("time grid must be increasing".into()));
        }
        if drift.len() + 1 != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len() - 1,
                got: drift.len(),
            });
        }
        if drift.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidParameter("drift coefficients must be finite and nonnegative".into()));
        }
        let variances = variances.unwrap_or_else(|| times.windows(2).map(|w| w[1] - w[0]).collect());
        if variances.len() != drift.len() || variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("one positive variance per time step is required".into()));
        }
        if terminal.len() % 2 == 0 || terminal.len() < 3 {
            return Err(Error::InvalidParameter("terminal samples must sit on an odd-length symmetric grid".into()));
        }
        if !(dy > 0.0) {
            return Err(Error::InvalidParameter("dy must be positive".into()));
        }
        if terminal.iter().any(|a| !(a.abs() <= 1.0)) {
            return Err(Error::InvalidParameter("terminal values must lie in [-1, 1]".into()));
        }
        let half = terminal.len() / 2;
        // enforce exact oddness
        let mut terminal = terminal;
        terminal[half] = 0.0;
        for i in 1..=half {
            let v = 0.5 * (terminal[half + i] - terminal[half - i]);
            terminal[half + i] = v;
            terminal[half - i] = -v;
        }
        let mut out = Self {
            times,
            variances,
            drift,
            half,
            dy,
            band,
            terminal,
            potential: Vec::new(),
            regression: Vec::new(),
            laws: Vec::new(),
            second_moment: Vec::new(),
            noise_cross: Vec::new(),
        };
        out.solve();
        Ok(out)
    }

    fn grid_len(&self) -> usize {
        2 * self.half + 1
    }

    pub fn y(&self, i: usize) -> f64 {
        (i as f64 - self.half as f64) * self.dy
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn y_grid(&self) -> Vec<f64> {
        (0..self.grid_len()).map(|i| self.y(i)).collect()
    }

    fn width(&self, k: usize) -> usize {
        let delta = self.variances[k];
        let reach = self.band * delta.sqrt() + self.drift[k] * delta;
        ((reach / self.dy).ceil() as usize).max(1)
    }

    /// Log-weights of the step-`k` transition out of `y0` (unnormalized), over
    /// target indices `lo..=hi`.
    fn log_weights(&self, k: usize, j: usize, out: &mut Vec<f64>) -> (usize, usize) {
        let n = self.grid_len();
        let w = self.width(k);
        let lo = j.saturating_sub(w);
        let hi = (j + w).min(n - 1);
        let delta = self.variances[k];
        let c = self.drift[k];
        let psi = &self.potential[k + 1];
        out.clear();
        let inv = self.dy * self.dy / (2.0 * delta);
        for i in lo..=hi {
            let d = i as f64 - j as f64;
            out.push(-d * d * inv + c * (psi[i] - psi[j]));
        }
        (lo, hi)
    }

    fn solve(&mut self) {
        let n = self.grid_len();
        let m_steps = self.times.len() - 1;
        let h = self.half;
        // terminal potential Ψ(1, y) = ∫_0^y a by the trapezoid rule
        let mut psi_t = vec![0.0; n];
        for i in h + 1..n {
            psi_t[i] = psi_t[i - 1] + 0.5 * self.dy * (self.terminal[i] + self.terminal[i - 1]);
            psi_t[2 * h - i] = psi_t[i];
        }
        self.potential = vec![Vec::new(); m_steps + 1];
        self.regression = vec![Vec::new(); m_steps + 1];
        self.potential[m_steps] = psi_t;
        self.regression[m_steps] = self.terminal.clone();
        let mut log_norm = vec![vec![0.0; n]; m_steps];
        // Cov(m_{k+1}, Y_{k+1} | Y_k = y) / sd(Y_{k+1} | Y_k = y)
        let mut step_cov = vec![vec![0.0; n]; m_steps];

        let mut buf = Vec::new();
        for k in (0..m_steps).rev() {
            let c = self.drift[k];
            let mut psi = vec![0.0; n];
            let mut reg = vec![0.0; n];
            let next_m = &self.regression[k + 1];
            let next_psi = &self.potential[k + 1];
            // base Gaussian mass of an interior column
            let width = self.width(k);
            let delta = self.variances[k];
            let base: f64 = (-(width as isize)..=width as isize)
                .map(|d| (-(d as f64 * self.dy).powi(2) / (2.0 * delta)).exp())
                .sum();
            for j in h..n {
                let (lo, _) = self.log_weights(k, j, &mut buf);
                let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                let mut acc_m = 0.0;
                let mut acc_psi = 0.0;
                let (mut acc_y, mut acc_yy, mut acc_my) = (0.0, 0.0, 0.0);
                for (off, lw) in buf.iter().enumerate() {
                    let w = (lw - max).exp();
                    // displacement in grid units
                    let d = (lo + off) as f64 - j as f64;
                    z += w;
                    acc_m += w * next_m[lo + off];
                    acc_psi += w * next_psi[lo + off];
                    acc_y += w * d;
                    acc_yy += w * d * d;
                    acc_my += w * d * next_m[lo + off];
                }
                let mean_d = acc_y / z;
                let var_d = (acc_yy / z - mean_d * mean_d).max(1e-300);
                let cov = (acc_my / z - mean_d * acc_m / z) / var_d.sqrt();
                step_cov[k][j] = cov;
                step_cov[k][2 * h - j] = cov;
                let lz = max + z.ln();
                log_norm[k][j] = lz;
                log_norm[k][2 * h - j] = lz;
                reg[j] = acc_m / z;
                psi[j] = if c > 0.0 {
                    next_psi[j] + (lz - base.ln()) / c
                } else {
                    acc_psi / z
                };
                reg[2 * h - j] = -reg[j];
                psi[2 * h - j] = psi[j];
            }
            reg[h] = 0.0;
            self.potential[k] = psi;
            self.regression[k] = reg;
        }

        // forward laws as probability vectors on the grid
        let mut laws = vec![vec![0.0; n]; m_steps + 1];
        laws[0][h] = 1.0;
        let mut scatter = vec![0.0; n];
        for k in 0..m_steps {
            scatter.iter_mut().for_each(|v| *v = 0.0);
            let prev = &laws[k];
            for j in 0..n {
                let p = prev[j];
                if p < 1e-300 {
                    continue;
                }
                let jj = if j < h { 2 * h - j } else { j };
                let (lo, _) = self.log_weights(k, jj, &mut buf);
                let lz = log_norm[k][jj];
                for (off, lw) in buf.iter().enumerate() {
                    let i = lo + off;
                    let target = if j < h { 2 * h - i } else { i };
                    scatter[target] += p * (lw - lz).exp();
                }
            }
            // symmetrize to remove rounding asymmetry
            for i in 0..h {
                let v = 0.5 * (scatter[i] + scatter[2 * h - i]);
                scatter[i] = v;
                scatter[2 * h - i] = v;
            }
            laws[k + 1] = scatter.clone();
        }
        self.second_moment = (0..=m_steps)
            .map(|k| laws[k].iter().zip(&self.regression[k]).map(|(p, m)| p * m * m).sum())
            .collect();
        self.noise_cross = (0..m_steps)
            .map(|k| laws[k].iter().zip(&step_cov[k]).map(|(p, c)| p * c).sum())
            .collect();
        self.laws = laws;
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    /// `m(t_k, ·)` on the grid.
    pub fn regression(&self, k: usize) -> &[f64] {
        &self.regression[k]
    }

    /// Law of `Y_{t_k}` as grid masses.
    pub fn law(&self, k: usize) -> &[f64] {
        &self.laws[k]
    }

    /// `s_k = E[α_{t_k}²]`.
    pub fn second_moments(&self) -> &[f64] {
        &self.second_moment
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `E[α_1 B_1]`, where the clock increment `B_{t_{k+1}} - B_{t_k}` is
    /// `√Δt_k` times the innovation of `Y` over step `k`, standardized by its
    /// conditional standard deviation.
    pub fn cross_moment(&self) -> f64 {
        (0..self.drift.len())
            .map(|k| (self.times[k + 1] - self.times[k]).sqrt() * self.noise_cross[k])
            .sum()
    }

    /// Re-times the martingale onto the clock `t = E[α_u²]`: the driving
    /// Brownian motion is run at the deterministic speed `dV/dt`, so the
    /// constraint `E[α_t²] = t` holds at every interior grid time. The last
    /// time stays at 1 and absorbs `1 - E[α_1²]`.
    pub fn time_changed(&self) -> Result<Self> {
        let m = self.times.len() - 1;
        let mut times: Vec<f64> = self.second_moment.clone();
        times[0] = 0.0;
        times[m] = 1.0;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Numerical(
                "second moments are not strictly increasing below 1; no time change exists".into(),
            ));
        }
        let mut out = self.clone();
        out.times = times;
        Ok(out)
    }

    /// `E[φ*(α_1)]`.
    pub fn entropy(&self) -> f64 {
        let m = self.laws.len() - 1;
        self.laws[m]
            .iter()
            .zip(&self.terminal)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, a)| p * phi_star(*a))
            .sum()
    }

    /// Largest `|m(t_j, y) - E[m(t_k, Y_{t_k}) | Y_{t_j} = y]|` over
    /// consecutive steps and grid points carrying mass.
    pub fn consistency_defect(&self) -> f64 {
        let mut buf = Vec::new();
        let mut worst: f64 = 0.0;
        let n = self.grid_len();
        for k in 0..self.times.len() - 1 {
            for j in 0..n {
                if self.laws[k][j] < 1e-14 {
                    continue;
                }
                let (lo, _) = self.log_weights(k, j, &mut buf);
                let max = buf.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (mut z, mut acc) = (0.0, 0.0);
                for (off, lw) in buf.iter().enumerate() {
                    let w = (lw - max).exp();
                    z += w;
                    acc += w * self.regression[k + 1][lo + off];
                }
                worst = worst.max((acc / z - self.regression[k][j]).abs());
            }
        }
        worst
    }

    /// Largest decrease `s_k - s_{k+1}` (nonpositive for a martingale).
    pub fn monotonicity_defect(&self) -> f64 {
        self.second_moment
            .windows(2)
            .map(|w| w[0] - w[1])
            .fold(0.0f64, f64::max)
    }

    /// Total mass near the grid edge at the final time; should be negligible.
    pub fn edge_mass(&self) -> f64 {
        let m = self.laws.len() - 1;
        let n = self.grid_len();
        let cut = n / 20;
        self.laws[m][..cut].iter().chain(&self.laws[m][n - cut..]).sum()
    }

    /// `max_k |s_k - t_k|`.
    pub fn constraint_residual(&self) -> f64 {
        self.second_moment
            .iter()
            .zip(&self.times)
            .map(|(s, t)| (s - t).abs())
            .fold(0.0, f64::max)
    }
}

/// The terms of the un-inverted functional at inverse temperature `β`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct UninvertedValue {
    pub beta: f64,
    /// `β √2 E[α_1 B_1]`
    pub linear: f64,
    /// `E[φ*(α_1)]`
    pub entropy: f64,
    /// `β² sup_t ∫_t^1 (s - E[α_s²]) ds`
    pub correction: f64,
    pub total: f64,
}

/// `sup_k ∫_{t_k}^1 (s - E α_s²) ds` with trapezoid integrals (zero at `t = 1`).
pub fn correction_sup(times: &[f64], second_moment: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut best: f64 = 0.0;
    for k in (0..times.len() - 1).rev() {
        let g0 = times[k] - second_moment[k];
        let g1 = times[k + 1] - second_moment[k + 1];
        acc += 0.5 * (times[k + 1] - times[k]) * (g0 + g1);
        best = best.max(acc);
    }
    best
}

pub fn evaluate_uninverted(alpha: &MarkovMartingale, beta: f64) -> Result<UninvertedValue> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    let linear = beta * 2f64.sqrt() * alpha.cross_moment();
    let entropy = alpha.entropy();
    let correction = beta * beta * correction_sup(alpha.times(), alpha.second_moments());
    Ok(UninvertedValue {
        beta,
        linear,
        entropy,
        correction,
        total: linear - entropy - correction,
    })
}

/// Parameterized sub-family searched by the optimizers:
/// `a(y) = tanh(θ_0² y + Σ_j θ_j² ℓ_j tanh(y / ℓ_j))` and a drift that is
/// `θ²` on each of `segments` equal time blocks. Squares keep every
/// coefficient nonnegative and let the search reach zero exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MartingaleFamily {
    pub grid: MartingaleGrid,
    pub scales: Vec<f64>,
    pub segments: usize,
}

impl MartingaleFamily {
    pub fn new(grid: MartingaleGrid, segments: usize) -> Self {
        Self {
            grid,
            scales: vec![0.5, 2.0],
            segments: segments.clamp(1, grid.steps.max(1)),
        }
    }

    pub fn dimension(&self) -> usize {
        1 + self.scales.len() + self.segments
    }

    pub fn terminal_params(&self) -> usize {
        1 + self.scales.len()
    }

    pub fn segment_of(&self, k: usize) -> usize {
        k * self.segments / self.grid.steps
    }

    pub fn build(&self, params: &[f64]) -> Result<MarkovMartingale> {
        if params.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: params.len(),
            });
        }
        let t = self.terminal_params();
        let slope = params[0] * params[0];
        let bends: Vec<(f64, f64)> = self
            .scales
            .iter()
            .zip(&params[1..t])
            .map(|(l, p)| (*l, p * p))
            .collect();
        let terminal = |y: f64| {
            let g = slope * y + bends.iter().map(|(l, w)| w * l * (y / l).tanh()).sum::<f64>();
            g.tanh()
        };
        let drift: Vec<f64> = (0..self.grid.steps)
            .map(|k| params[t + self.segment_of(k)].powi(2))
            .collect();
        MarkovMartingale::new(terminal, &drift, &self.grid)
    }

    /// Coordinates of `a = tanh(κ y)` with piecewise-constant drift.
    pub fn encode(&self, slope: f64, drift: &[f64]) -> Vec<f64> {
        let mut p = vec![slope.max(0.0).sqrt()];
        p.extend(std::iter::repeat_n(0.0, self.scales.len()));
        for s in 0..self.segments {
            let ks: Vec<usize> = (0..self.grid.steps).filter(|&k| self.segment_of(k) == s).collect();
            let mean = ks.iter().map(|&k| drift[k]).sum::<f64>() / ks.len().max(1) as f64;
            p.push(mean.max(0.0).sqrt());
        }
        p
    }
}

/// Candidate built from a Parisi measure: `a(y) = tanh(√2 β y)` and drift
/// `√2 β ζ(t)`, the image of `∂_x Φ` under `x = √2 β y`. When `μ = δ_0` this is
/// the exact optimizer.
pub fn martingale_from_measure(
    measure: &DiscreteMeasure,
    beta: f64,
    grid: &MartingaleGrid,
) -> Result<MarkovMartingale> {
    let k = 2f64.sqrt() * beta;
    let drift = measure_drift(measure, beta, grid.steps);
    MarkovMartingale::new(|y| (k * y).tanh(), &drift, grid)
}

/// `√2 β` times the average of `ζ` over each time step.
fn measure_drift(measure: &DiscreteMeasure, beta: f64, steps: usize) -> Vec<f64> {
    let k = 2f64.sqrt() * beta;
    (0..steps)
        .map(|j| {
            let (a, b) = (j as f64 / steps as f64, (j + 1) as f64 / steps as f64);
            // ∫_a^b ζ = Σ_q m_q (b - max(a, q))_+
            let integral: f64 = measure
                .atoms()
                .iter()
                .zip(measure.weights())
                .map(|(q, w)| w * (b - a.max(*q)).max(0.0))
                .sum();
            k * integral / (b - a)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UninvertedOptions {
    pub segments: usize,
    pub restarts: usize,
    /// per start, on `search_grid`
    pub max_evaluations: usize,
    /// final polish of the best start on the requested grid
    pub polish_evaluations: usize,
    pub search_grid: MartingaleGrid,
}

impl Default for UninvertedOptions {
    fn default() -> Self {
        Self {
            segments: 8,
            restarts: 4,
            max_evaluations: 2000,
            polish_evaluations: 300,
            search_grid: MartingaleGrid::coarse(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UninvertedOptimum {
    pub martingale: MarkovMartingale,
    pub value: UninvertedValue,
    pub params: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

fn run_search<F>(objective: F, starts: Vec<Vec<f64>>, max_evaluations: usize) -> Vec<Minimum>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let opts = NelderMeadOptions {
        max_evaluations,
        f_tol: 1e-12,
        x_tol: 1e-7,
        initial_step: 0.15,
    };
    starts
        .into_par_iter()
        .map(|s| nelder_mead(&objective, &s, &opts))
        .collect()
}

/// Maximizes the un-inverted functional over [`MartingaleFamily`], starting
/// from `starts` (family coordinates) plus seeded random points.
pub fn optimize_uninverted_from(
    beta: f64,
    grid: &MartingaleGrid,
    starts: Vec<Vec<f64>>,
    seed: u64,
    opts: &UninvertedOptions,
) -> Result<UninvertedOptimum> {
    use rand::Rng;

    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be nonnegative")));
    }
    let family = MartingaleFamily::new(*grid, opts.segments);
    let dim = family.dimension();
    if beta == 0.0 {
        let p = vec![0.0; dim];
        let martingale = family.build(&p)?;
        let value = evaluate_uninverted(&martingale, 0.0)?;
        return Ok(UninvertedOptimum {
            martingale,
            value,
            params: p,
            evaluations: 1,
            converged: true,
        });
    }
    let mut all = starts;
    let mut rng = crate::rng::stream_rng(seed, 1);
    while all.len() < opts.restarts.max(1) {
        all.push((0..dim).map(|_| 1.5 * rng.random::<f64>()).collect());
    }
    for s in &all {
        if s.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: s.len(),
            });
        }
    }
    let objective = |family: &MartingaleFamily, p: &[f64]| match family.build(p).and_then(|a| evaluate_uninverted(&a, beta)) {
        Ok(v) if v.total.is_finite() => -v.total,
        _ => f64::INFINITY,
    };
    let coarse = MartingaleFamily::new(opts.search_grid, opts.segments);
    let runs = run_search(|p: &[f64]| objective(&coarse, p), all, opts.max_evaluations);
    let mut evaluations: usize = runs.iter().map(|r| r.evaluations).sum();
    let found = runs
        .into_iter()
        .min_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start");
    let polished = run_search(|p: &[f64]| objective(&family, p), vec![found.x], opts.polish_evaluations.max(1));
    evaluations += polished[0].evaluations;
    let best = Minimum {
        converged: found.converged,
        ..polished.into_iter().next().expect("one start")
    };
    let martingale = family.build(&best.x)?;
    let value = evaluate_uninverted(&martingale, beta)?;
    Ok(UninvertedOptimum {
        martingale,
        value,
        params: best.x,
        evaluations,
        converged: best.converged,
    })
}

/// Cold start plus the replica-symmetric candidate `tanh(√2 β y)`, drift `√2 β`.
pub fn optimize_uninverted(beta: f64, grid: &MartingaleGrid, seed: u64, opts: &UninvertedOptions) -> Result<UninvertedOptimum> {
    let family = MartingaleFamily::new(*grid, opts.segments);
    let k = 2f64.sqrt() * beta;
    let rs = family.encode(k, &vec![k; grid.steps]);
    optimize_uninverted_from(beta, grid, vec![rs], seed, opts)
}

/// Search family for the algorithmic threshold: the terminal function of
/// [`MartingaleFamily`] with drift profile `c(u) = θ_c² + θ_s² / (1 - u)` in
/// intrinsic time, placed on the variance clock by
/// [`MarkovMartingale::on_variance_clock`]. Only `1 - E[α_1²]` is left to
/// the penalty.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AlgFamily {
    pub grid: MartingaleGrid,
    pub scales: Vec<f64>,
}

impl AlgFamily {
    pub fn new(grid: MartingaleGrid) -> Self {
        Self {
            grid,
            scales: vec![0.5, 2.0],
        }
    }

    pub fn dimension(&self) -> usize {
        3 + self.scales.len()
    }

    pub fn build(&self, params: &[f64]) -> Result<MarkovMartingale> {
        if params.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                got: params.len(),
            });
        }
        let t = 1 + self.scales.len();
        let slope = params[0] * params[0];
        let bends: Vec<(f64, f64)> = self
            .scales
            .iter()
            .zip(&params[1..t])
            .map(|(l, p)| (*l, p * p))
            .collect();
        let terminal = |y: f64| {
            let g = slope * y + bends.iter().map(|(l, w)| w * l * (y / l).tanh()).sum::<f64>();
            g.tanh()
        };
        let (flat, singular) = (params[t] * params[t], params[t + 1] * params[t + 1]);
        MarkovMartingale::on_variance_clock(terminal, |u| flat + singular / (1.0 - u), &self.grid)
    }

    /// `a = tanh(κ y)`, `c(u) = 1 / (1 - u)`.
    pub fn initial(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.dimension()];
        p[0] = 8f64.sqrt();
        p[self.dimension() - 1] = 1.0;
        p
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AlgOptions {
    pub restarts: usize,
    pub rounds: usize,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    /// per outer round and start
    pub max_evaluations: usize,
    pub tolerance: f64,
}

impl Default for AlgOptions {
    fn default() -> Self {
        Self {
            restarts: 2,
            rounds: 5,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_evaluations: 300,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AlgThreshold {
    /// `√2 E[α_1 B_1]` at the returned martingale
    pub value: f64,
    /// `max_k |E α_{t_k}² - t_k|`
    pub residual: f64,
    /// true when the residual exceeds the tolerance
    pub flagged: bool,
    pub martingale: MarkovMartingale,
    pub params: Vec<f64>,
    pub evaluations: usize,
}

/// `sup √2 E[α_1 B_1]` subject to `E α_t² = t`, by a quadratic penalty whose
/// weight grows geometrically over `rounds` outer iterations.
pub fn alg_threshold(model: &ModelSpec, grid: &MartingaleGrid, seed: u64, opts: &AlgOptions) -> Result<AlgThreshold> {
    use rand::Rng;

    if !model.is_single_species() {
        return Err(Error::InvalidModel("the algorithmic threshold needs a single-species model".into()));
    }
    // for a general mixture the constraint lives on the ξ' clock; only the
    // quadratic case maps onto the family directly
    if model.mixture().as_pure_power() != Some((1.0, 2)) {
        return Err(Error::InvalidModel(
            "the algorithmic threshold is implemented for ξ(r) = r²".into(),
        ));
    }
    let family = AlgFamily::new(*grid);
    let penalized = |p: &[f64], weight: f64| -> f64 {
        match family.build(p) {
            Ok(a) => -2f64.sqrt() * a.cross_moment() + weight * a.constraint_residual().powi(2),
            Err(_) => f64::INFINITY,
        }
    };

    let mut rng = crate::rng::stream_rng(seed, 2);
    let mut starts = vec![family.initial()];
    while starts.len() < opts.restarts.max(1) {
        let mut p = family.initial();
        p.iter_mut().for_each(|v| *v = *v * (0.5 + rng.random::<f64>()) + 0.3 * rng.random::<f64>());
        starts.push(p);
    }
    let mut weight = opts.initial_penalty;
    let mut best = starts[0].clone();
    let mut evaluations = 0;
    for _ in 0..opts.rounds.max(1) {
        let w = weight;
        let runs = run_search(|p: &[f64]| penalized(p, w), starts, opts.max_evaluations);
        evaluations += runs.iter().map(|r| r.evaluations).sum::<usize>();
        let top = runs
            .into_iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one start");
        best = top.x;
        // once the constraint is met far inside tolerance, heavier penalties
        // leave the optimum unchanged
        if family.build(&best).is_ok_and(|a| a.constraint_residual() < 1e-2 * opts.tolerance) {
            break;
        }
        starts = vec![best.clone()];
        weight *= opts.penalty_growth;
    }
    let martingale = family.build(&best)?;
    let residual = martingale.constraint_residual();
    Ok(AlgThreshold {
        value: 2f64.sqrt() * martingale.cross_moment(),
        residual,
        flagged: residual > opts.tolerance,
        martingale,
        params: best,
        evaluations,
    })
}
