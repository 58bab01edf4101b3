//! Hidden Markov model with diagonal-Gaussian emissions.
//!
//! Observation rows are `(normalized price, volume feature)` by default, but
//! every routine works for any fixed observation width. Forward/backward
//! passes are scaled per step, with emission log-densities shifted by their
//! per-step maximum, so long sequences do not underflow.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_STATES: usize = 4;
pub const DEFAULT_ITERATIONS: usize = 10;
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum HmmError {
    #[error("insufficient data: {observations} observations for {states} states")]
    InsufficientData { observations: usize, states: usize },
    #[error("state labelling requires 4 states, model has {0}")]
    WrongStateCount(usize),
    #[error("observation width {found} does not match model width {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

/// `T × D` observation rows.
pub type ObservationSequence = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianHmm {
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
}

impl GaussianHmm {
    pub fn n_states(&self) -> usize {
        self.initial.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        let k = self.n_states();
        let bad = |m: String| Err(HmmError::InvalidModel(m));
        if k == 0 {
            return bad("no states".into());
        }
        if self.transition.len() != k || self.means.len() != k || self.variances.len() != k {
            return bad("state count mismatch".into());
        }
        let check_dist = |p: &[f64], what: &str| -> Result<(), HmmError> {
            if p.len() != k || p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-10 {
                return Err(HmmError::InvalidModel(format!("{what} is not a distribution")));
            }
            Ok(())
        };
        check_dist(&self.initial, "initial")?;
        for row in &self.transition {
            check_dist(row, "transition row")?;
        }
        let d = self.dim();
        for (m, v) in self.means.iter().zip(&self.variances) {
            if m.len() != d || v.len() != d {
                return bad("emission width mismatch".into());
            }
            if m.iter().any(|x| !x.is_finite()) || v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return bad("emission parameters must be finite with positive variance".into());
            }
        }
        Ok(())
    }

    /// Diagonal-Gaussian log-density of `obs` under `state`.
    pub fn emission_log_density(&self, state: usize, obs: &[f64]) -> f64 {
        self.means[state]
            .iter()
            .zip(&self.variances[state])
            .zip(obs)
            .map(|((m, v), x)| -0.5 * ((2.0 * PI * v).ln() + (x - m) * (x - m) / v))
            .sum()
    }

    fn check_obs(&self, obs: &[Vec<f64>]) -> Result<(), HmmError> {
        let d = self.dim();
        if let Some(row) = obs.iter().find(|r| r.len() != d) {
            return Err(HmmError::DimensionMismatch {
                expected: d,
                found: row.len(),
            });
        }
        Ok(())
    }
}

/// Scaled forward/backward quantities for one sequence.
struct Posterior {
    log_likelihood: f64,
    /// `gamma[t][k] = P(s_t = k | obs)`.
    gamma: Vec<Vec<f64>>,
    /// `xi_sum[i][j] = Σ_t P(s_t = i, s_{t+1} = j | obs)`.
    xi_sum: Vec<Vec<f64>>,
}

/// Emission likelihoods shifted by the per-step max, plus the shifts.
fn scaled_emissions(obs: &[Vec<f64>], model: &GaussianHmm) -> (Vec<Vec<f64>>, Vec<f64>) {
    let k = model.n_states();
    let mut b = Vec::with_capacity(obs.len());
    let mut shifts = Vec::with_capacity(obs.len());
    for row in obs {
        let logs: Vec<f64> = (0..k).map(|s| model.emission_log_density(s, row)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        b.push(logs.iter().map(|l| (l - max).exp()).collect());
        shifts.push(max);
    }
    (b, shifts)
}

/// Scaled forward pass. Returns normalized alphas, per-step scales and the
/// log-likelihood.
fn forward_pass(b: &[Vec<f64>], shifts: &[f64], model: &GaussianHmm) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let k = model.n_states();
    let mut alpha = Vec::with_capacity(b.len());
    let mut scales = Vec::with_capacity(b.len());
    let mut log_likelihood = 0.0;
    for (t, bt) in b.iter().enumerate() {
        let mut a: Vec<f64> = if t == 0 {
            (0..k).map(|s| model.initial[s] * bt[s]).collect()
        } else {
            let prev: &Vec<f64> = &alpha[t - 1];
            (0..k)
                .map(|j| (0..k).map(|i| prev[i] * model.transition[i][j]).sum::<f64>() * bt[j])
                .collect()
        };
        let c: f64 = a.iter().sum();
        if c > 0.0 {
            a.iter_mut().for_each(|x| *x /= c);
        }
        log_likelihood += c.ln() + shifts[t];
        scales.push(c);
        alpha.push(a);
    }
    (alpha, scales, log_likelihood)
}

fn posterior(obs: &[Vec<f64>], model: &GaussianHmm) -> Posterior {
    let k = model.n_states();
    let (b, shifts) = scaled_emissions(obs, model);
    let (alpha, scales, log_likelihood) = forward_pass(&b, &shifts, model);
    let n = obs.len();
    let mut beta = vec![vec![1.0; k]; n];
    for t in (0..n.saturating_sub(1)).rev() {
        for i in 0..k {
            let s: f64 = (0..k).map(|j| model.transition[i][j] * b[t + 1][j] * beta[t + 1][j]).sum();
            beta[t][i] = if scales[t + 1] > 0.0 { s / scales[t + 1] } else { 0.0 };
        }
    }
    let gamma: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let g: Vec<f64> = (0..k).map(|s| alpha[t][s] * beta[t][s]).collect();
            let z: f64 = g.iter().sum();
            if z > 0.0 {
                g.iter().map(|x| x / z).collect()
            } else {
                vec![1.0 / k as f64; k]
            }
        })
        .collect();
    let mut xi_sum = vec![vec![0.0; k]; k];
    for t in 0..n.saturating_sub(1) {
        let mut xi = vec![vec![0.0; k]; k];
        let mut z = 0.0;
        for i in 0..k {
            for j in 0..k {
                let v = alpha[t][i] * model.transition[i][j] * b[t + 1][j] * beta[t + 1][j];
                xi[i][j] = v;
                z += v;
            }
        }
        if z > 0.0 {
            for i in 0..k {
                for j in 0..k {
                    xi_sum[i][j] += xi[i][j] / z;
                }
            }
        }
    }
    Posterior {
        log_likelihood,
        gamma,
        xi_sum,
    }
}

/// `log p(obs | model)`.
pub fn forward_log_likelihood(obs: &[Vec<f64>], model: &GaussianHmm) -> Result<f64, HmmError> {
    model.check_obs(obs)?;
    if obs.is_empty() {
        return Ok(0.0);
    }
    let (b, shifts) = scaled_emissions(obs, model);
    Ok(forward_pass(&b, &shifts, model).2)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Deterministic starting model.
///
/// When `K = q^D` for an integer `q`, state means sit on the grid of
/// per-dimension quantiles `(j + ½)/q`; otherwise state `k` takes quantile
/// `(k + ½)/K` in every dimension. Variances start at the pooled sample
/// variance, the initial distribution is uniform, and transitions are
/// uniform with a 1e-3 shift toward self-transition.
pub fn initial_model(observations: &[Vec<f64>], states: usize) -> GaussianHmm {
    let d = observations[0].len();
    let n = observations.len() as f64;
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut c: Vec<f64> = observations.iter().map(|r| r[j]).collect();
            c.sort_by(f64::total_cmp);
            c
        })
        .collect();
    let mean: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let var: Vec<f64> = columns
        .iter()
        .zip(&mean)
        .map(|(c, m)| (c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).max(VARIANCE_FLOOR))
        .collect();
    let per_dim = (states as f64).powf(1.0 / d as f64).round() as usize;
    let grid = per_dim >= 2 && per_dim.pow(d as u32) == states;
    let means = (0..states)
        .map(|s| {
            (0..d)
                .map(|j| {
                    let level = if grid {
                        let digit = (s / per_dim.pow(j as u32)) % per_dim;
                        (digit as f64 + 0.5) / per_dim as f64
                    } else {
                        (s as f64 + 0.5) / states as f64
                    };
                    quantile(&columns[j], level)
                })
                .collect()
        })
        .collect();
    let uniform = 1.0 / states as f64;
    let transition = (0..states)
        .map(|i| {
            (0..states)
                .map(|j| {
                    if states == 1 {
                        1.0
                    } else if i == j {
                        uniform + 1e-3
                    } else {
                        uniform - 1e-3 / (states - 1) as f64
                    }
                })
                .collect()
        })
        .collect();
    GaussianHmm {
        initial: vec![uniform; states],
        transition,
        means,
        variances: vec![var; states],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaumWelchFit {
    pub model: GaussianHmm,
    /// Total log-likelihood of the starting model and after each iteration.
    pub log_likelihoods: Vec<f64>,
}

/// Expectation-maximization over one or more sequences.
pub fn baum_welch(sequences: &[ObservationSequence], states: usize, iterations: usize) -> Result<BaumWelchFit, HmmError> {
    let all: Vec<Vec<f64>> = sequences.iter().flatten().cloned().collect();
    if states == 0 || iterations == 0 || all.len() < states {
        return Err(HmmError::InsufficientData {
            observations: all.len(),
            states,
        });
    }
    let d = all[0].len();
    if let Some(row) = all.iter().find(|r| r.len() != d || r.iter().any(|x| !x.is_finite())) {
        return Err(HmmError::DimensionMismatch {
            expected: d,
            found: row.len(),
        });
    }
    let mut model = initial_model(&all, states);
    let mut log_likelihoods = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let (next, ll) = reestimate(sequences, &model);
        log_likelihoods.push(ll);
        model = next;
    }
    let final_ll = sequences
        .iter()
        .map(|s| forward_log_likelihood(s, &model))
        .sum::<Result<f64, _>>()?;
    log_likelihoods.push(final_ll);
    Ok(BaumWelchFit { model, log_likelihoods })
}

/// One EM step; returns the updated model and the log-likelihood of `model`.
fn reestimate(sequences: &[ObservationSequence], model: &GaussianHmm) -> (GaussianHmm, f64) {
    let k = model.n_states();
    let d = model.dim();
    let mut initial = vec![0.0; k];
    let mut trans = vec![vec![0.0; k]; k];
    let mut weight = vec![0.0; k];
    let mut sum = vec![vec![0.0; d]; k];
    let mut sum_sq = vec![vec![0.0; d]; k];
    let mut total_ll = 0.0;
    let mut used = 0usize;
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        let post = posterior(seq, model);
        total_ll += post.log_likelihood;
        used += 1;
        for s in 0..k {
            initial[s] += post.gamma[0][s];
        }
        for i in 0..k {
            for j in 0..k {
                trans[i][j] += post.xi_sum[i][j];
            }
        }
        for (row, g) in seq.iter().zip(&post.gamma) {
            for s in 0..k {
                weight[s] += g[s];
                for j in 0..d {
                    sum[s][j] += g[s] * row[j];
                    sum_sq[s][j] += g[s] * row[j] * row[j];
                }
            }
        }
    }
    let initial: Vec<f64> = initial.iter().map(|x| x / used as f64).collect();
    let transition = trans
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let z: f64 = row.iter().sum();
            if z > 0.0 {
                row.iter().map(|x| x / z).collect()
            } else {
                model.transition[i].clone()
            }
        })
        .collect();
    let mut means = model.means.clone();
    let mut variances = model.variances.clone();
    for s in 0..k {
        if weight[s] <= 1e-300 {
            continue;
        }
        for j in 0..d {
            let m = sum[s][j] / weight[s];
            means[s][j] = m;
            let v = sum_sq[s][j] / weight[s] - m * m;
            variances[s][j] = v.max(VARIANCE_FLOOR);
        }
    }
    // The second-moment form loses precision for tightly clustered states;
    // recompute the variance around the new mean.
    let mut centered = vec![vec![0.0; d]; k];
    for seq in sequences.iter().filter(|s| !s.is_empty()) {
        let post = posterior(seq, model);
        for (row, g) in seq.iter().zip(&post.gamma) {
            for s in 0..k {
                for j in 0..d {
                    let dx = row[j] - means[s][j];
                    centered[s][j] += g[s] * dx * dx;
                }
            }
        }
    }
    for s in 0..k {
        if weight[s] > 1e-300 {
            for j in 0..d {
                variances[s][j] = (centered[s][j] / weight[s]).max(VARIANCE_FLOOR);
            }
        }
    }
    (
        GaussianHmm {
            initial,
            transition,
            means,
            variances,
        },
        total_ll,
    )
}

/// Most probable state path; ties resolve toward the lower state index.
pub fn viterbi(obs: &[Vec<f64>], model: &GaussianHmm) -> Result<Vec<usize>, HmmError> {
    model.check_obs(obs)?;
    let k = model.n_states();
    let n = obs.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let log_a: Vec<Vec<f64>> = model
        .transition
        .iter()
        .map(|row| row.iter().map(|p| p.ln()).collect())
        .collect();
    let mut delta: Vec<f64> = (0..k)
        .map(|s| model.initial[s].ln() + model.emission_log_density(s, &obs[0]))
        .collect();
    let mut back = vec![vec![0usize; k]; n];
    for t in 1..n {
        let mut next = vec![f64::NEG_INFINITY; k];
        for j in 0..k {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for i in 0..k {
                let v = delta[i] + log_a[i][j];
                if v > best {
                    best = v;
                    arg = i;
                }
            }
            back[t][j] = arg;
            next[j] = best + model.emission_log_density(j, &obs[t]);
        }
        delta = next;
    }
    let mut state = 0;
    for s in 1..k {
        if delta[s] > delta[state] {
            state = s;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = state;
    for t in (1..n).rev() {
        state = back[t][state];
        path[t - 1] = state;
    }
    Ok(path)
}

/// Log joint probability of a given path and the observations.
pub fn path_log_probability(obs: &[Vec<f64>], path: &[usize], model: &GaussianHmm) -> f64 {
    let mut lp = model.initial[path[0]].ln() + model.emission_log_density(path[0], &obs[0]);
    for t in 1..obs.len() {
        lp += model.transition[path[t - 1]][path[t]].ln() + model.emission_log_density(path[t], &obs[t]);
    }
    lp
}

/// Volume/price regime of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeLabel {
    HighVolumeHighPrice,
    HighVolumeLowPrice,
    LowVolumeHighPrice,
    LowVolumeLowPrice,
}

impl RegimeLabel {
    pub const ALL: [RegimeLabel; 4] = [
        RegimeLabel::HighVolumeHighPrice,
        RegimeLabel::HighVolumeLowPrice,
        RegimeLabel::LowVolumeHighPrice,
        RegimeLabel::LowVolumeLowPrice,
    ];

    pub fn from_levels(high_volume: bool, high_price: bool) -> Self {
        match (high_volume, high_price) {
            (true, true) => Self::HighVolumeHighPrice,
            (true, false) => Self::HighVolumeLowPrice,
            (false, true) => Self::LowVolumeHighPrice,
            (false, false) => Self::LowVolumeLowPrice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateLabels {
    pub labels: Vec<RegimeLabel>,
    /// Set when all state means coincide and labels fell back to index order.
    pub degenerate: bool,
}

/// Name each of four states by comparing its mean against the across-state
/// median in each dimension. Observation rows are `(price, volume)`.
pub fn state_labels(model: &GaussianHmm) -> Result<StateLabels, HmmError> {
    if model.n_states() != 4 {
        return Err(HmmError::WrongStateCount(model.n_states()));
    }
    if model.dim() < 2 {
        return Err(HmmError::DimensionMismatch {
            expected: 2,
            found: model.dim(),
        });
    }
    let first = &model.means[0];
    if model.means.iter().all(|m| m[0] == first[0] && m[1] == first[1]) {
        log::warn!("StateDegenerate: all state means coincide; labelling by index");
        return Ok(StateLabels {
            labels: RegimeLabel::ALL.to_vec(),
            degenerate: true,
        });
    }
    let median = |j: usize| {
        let mut v: Vec<f64> = model.means.iter().map(|m| m[j]).collect();
        v.sort_by(f64::total_cmp);
        0.5 * (v[1] + v[2])
    };
    let (price_median, volume_median) = (median(0), median(1));
    let labels = model
        .means
        .iter()
        .map(|m| RegimeLabel::from_levels(m[1] > volume_median, m[0] > price_median))
        .collect();
    Ok(StateLabels {
        labels,
        degenerate: false,
    })
}
