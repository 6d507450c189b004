//! Incremental message-passing optimization driven by a Markov martingale.
//!
//! The iterate follows `f ← f + u(t, y) ⊙ Δz`, where `Δz` are increments of
//! Onsager-corrected local fields `A f` (`A` the symmetrized coupling matrix
//! scaled to unit semicircle variance) and `y` accumulates the fields under
//! the martingale's drift. With `u = ∂_y m · √(dV/dt)`, rescaled each step
//! to unit empirical second moment, the empirical law of the coordinates of
//! `f` tracks the law of `α_t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DisorderSample, SpinConfiguration};
use crate::uninverted::MarkovMartingale;

#[derive(Debug, Clone, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    /// `(1/N) Σ f_i²`
    pub empirical_second_moment: f64,
    /// `E[α_t²]` from the martingale
    pub target_second_moment: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementalResult {
    #[serde(skip)]
    pub configuration: SpinConfiguration,
    /// `H_N(sign f) / N`
    pub energy: f64,
    /// `H_N(f) / N` before rounding
    pub iterate_energy: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Piecewise-linear lookup of a function sampled on the martingale's grid,
/// extended by constants beyond the ends.
struct GridFn<'a> {
    values: &'a [f64],
    y0: f64,
    dy: f64,
}

impl GridFn<'_> {
    fn eval(&self, y: f64) -> f64 {
        let n = self.values.len();
        let x = (y - self.y0) / self.dy;
        if x <= 0.0 {
            return self.values[0];
        }
        if x >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let i = x.floor() as usize;
        let w = x - i as f64;
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }
}

fn centered_slope(values: &[f64], dy: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (values[b] - values[a]) / ((b - a) as f64 * dy)
        })
        .collect()
}

/// Row-major symmetric matrix `(W + Wᵀ) / √(2N)`, so `H_N(σ) = σᵀAσ / √2`.
/// Stored in single precision: the iteration is bandwidth-bound and the
/// reported energy is recomputed from the couplings.
fn symmetric_couplings(sample: &DisorderSample) -> Vec<f32> {
    let n = sample.n();
    let w = sample.couplings(0);
    let scale = 1.0 / (2.0 * n as f64).sqrt();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = ((w[i * n + j] + w[j * n + i]) * scale) as f32;
        }
    }
    a
}

fn mat_vec(a: &[f32], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (row, o) in a.chunks_exact(n).zip(out.iter_mut()) {
        *o = dot(row, x);
    }
}

/// Dot product with independent lane accumulators so it vectorizes.
fn dot(a: &[f32], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let mut acc = [0.0; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(p, q)| *p as f64 * q).sum();
    for (p, q) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += p[l] as f64 * q[l];
        }
    }
    acc.iter().sum::<f64>() + tail
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn quadratic_energy(a: &[f32], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; x.len()];
    mat_vec(a, x, &mut ax);
    let q: f64 = ax.iter().zip(x).map(|(p, q)| p * q).sum();
    q / (2f64.sqrt() * x.len() as f64)
}

/// Runs `steps` uniform clock steps on `[0, 1]` for a pair-interaction model.
pub fn incremental_optimize(
    sample: &DisorderSample,
    martingale: &MarkovMartingale,
    steps: usize,
) -> Result<IncrementalResult> {
    let model = sample.model();
    if !model.is_single_species() || model.mixture().as_pure_power() != Some((1.0, 2)) {
        return Err(Error::InvalidModel(
            "the incremental algorithm is implemented for ξ(r) = r²".into(),
        ));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be positive".into()));
    }
    if martingale.terminal().iter().any(|a| a.abs() > 1.0) {
        return Err(Error::InvalidParameter("the martingale must satisfy |α_1| ≤ 1".into()));
    }
    let n = sample.n();
    let a = symmetric_couplings(sample);
    let times = martingale.times();
    let segments = times.len() - 1;
    let dy = martingale.dy();
    let y0 = martingale.y(0);
    let slopes: Vec<Vec<f64>> = (0..=segments)
        .map(|k| centered_slope(martingale.regression(k), dy))
        .collect();
    let speed: Vec<f64> = (0..segments)
        .map(|k| martingale.variances()[k] / (times[k + 1] - times[k]))
        .collect();
    let delta = 1.0 / steps as f64;

    // f^0 = √δ·1 seeds the iteration; z^0 = 0
    let mut f = vec![delta.sqrt(); n];
    let mut f_prev = vec![0.0; n];
    let mut f_prev2 = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut z_next = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut correction = vec![0.0; n];
    // e_j = mean(u_j); the Onsager term needs the last two
    let (mut e1, mut e2) = (0.0f64, 0.0f64);
    let mut checkpoints = vec![Checkpoint {
        t: 0.0,
        empirical_second_moment: mean(&f.iter().map(|v| v * v).collect::<Vec<_>>()),
        target_second_moment: martingale.second_moments()[0],
    }];
    let mut next_checkpoint = 1;
    let mut seg = 0;

    for k in 0..steps {
        let t = k as f64 * delta;
        while seg + 1 < segments && times[seg + 1] <= t {
            seg += 1;
        }
        let w = ((t - times[seg]) / (times[seg + 1] - times[seg])).clamp(0.0, 1.0);
        let (lo_m, hi_m) = (martingale.regression(seg), martingale.regression(seg + 1));
        let m_lo = GridFn { values: lo_m, y0, dy };
        let m_hi = GridFn { values: hi_m, y0, dy };
        let s_lo = GridFn { values: &slopes[seg], y0, dy };
        let s_hi = GridFn { values: &slopes[seg + 1], y0, dy };
        let rate = speed[seg].sqrt();
        let push = martingale.drift()[seg] * speed[seg];

        // z^{k+1} = A f^k - e_{k-1} f^{k-1} - S_k
        if k >= 2 {
            for i in 0..n {
                correction[i] += (e2 - e1) * f_prev2[i];
            }
        }
        mat_vec(&a, &f, &mut z_next);
        for i in 0..n {
            z_next[i] -= e1 * f_prev[i] + correction[i];
        }
        // In the large-N limit the field increment is orthogonal to f^k and
        // has mean square δ. At finite N with many small steps the deviations
        // compound, so both properties are re-imposed.
        let (mut along, mut norm_f) = (0.0, 0.0);
        for i in 0..n {
            along += (z_next[i] - z[i]) * f[i];
            norm_f += f[i] * f[i];
        }
        let proj = along / norm_f;
        let mut sq = 0.0;
        for i in 0..n {
            let dz = z_next[i] - z[i] - proj * f[i];
            z_next[i] = dz;
            sq += dz * dz;
        }
        let scale = if sq > 0.0 { (delta * n as f64 / sq).sqrt() } else { 0.0 };
        for i in 0..n {
            z_next[i] = z[i] + scale * z_next[i];
        }
        for i in 0..n {
            let yi = y[i];
            u[i] = rate * ((1.0 - w) * s_lo.eval(yi) + w * s_hi.eval(yi));
            let m = (1.0 - w) * m_lo.eval(yi) + w * m_hi.eval(yi);
            let dz = z_next[i] - z[i];
            y[i] += push * m * delta + rate * dz;
        }
        // on the variance clock E[u²] = 1; enforcing it empirically keeps
        // the field increments at variance δ instead of compounding errors
        let norm = mean(&u.iter().map(|v| v * v).collect::<Vec<_>>()).sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        std::mem::swap(&mut f_prev2, &mut f_prev);
        f_prev.copy_from_slice(&f);
        for i in 0..n {
            f[i] += u[i] * (z_next[i] - z[i]);
        }
        std::mem::swap(&mut z, &mut z_next);
        e2 = e1;
        e1 = mean(&u);

        let second = f.iter().map(|v| v * v).sum::<f64>() / n as f64;
        if !second.is_finite() || second > 10.0 {
            return Err(Error::Numerical(format!("incremental iterate diverged at step {k}")));
        }
        let t_next = (k + 1) as f64 * delta;
        while next_checkpoint <= segments && times[next_checkpoint] <= t_next + 1e-12 {
            checkpoints.push(Checkpoint {
                t: times[next_checkpoint],
                empirical_second_moment: second,
                target_second_moment: martingale.second_moments()[next_checkpoint],
            });
            next_checkpoint += 1;
        }
    }

    let iterate_energy = quadratic_energy(&a, &f);
    let spins: Vec<i8> = f.iter().map(|v| if *v >= 0.0 { 1 } else { -1 }).collect();
    let configuration = SpinConfiguration::new(spins)?;
    let energy = sample.hamiltonian(&configuration)? / n as f64;
    Ok(IncrementalResult {
        configuration,
        energy,
        iterate_energy,
        checkpoints,
    })
}
