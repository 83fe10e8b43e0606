//! Online rating updates: the classical Elo rule and its hyperbolic variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{fit_elo, hyperbolic_elo, phi_beta, sigmoid};
use crate::error::{Error, Result};
use crate::game::PayoffMatrix;
use crate::generators::rng;

/// Shape of `g` in the hyperbolic target `f(x) = 1/2 + g(x) + delta_ij`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GMode {
    /// `g(x) = phi_beta(1) (x - 1/2)`, keeping the correction small.
    Scaled,
    /// `g(x) = x`.
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum OnlineRule {
    Elo,
    Hyperbolic { beta: f64, g: GMode },
}

/// Ratings plus the per-pair outcome history needed by the hyperbolic rule.
#[derive(Clone, Debug, PartialEq)]
pub struct OnlineState {
    pub ratings: Vec<f64>,
    pub steps: u64,
    /// Updates whose correction term was built from a single observed game.
    pub first_meetings: u64,
    score: Vec<f64>,
    games: Vec<u32>,
}

impl OnlineState {
    pub fn new(n: usize) -> Self {
        Self { ratings: vec![0.0; n], steps: 0, first_meetings: 0, score: vec![0.0; n * n], games: vec![0; n * n] }
    }

    pub fn n(&self) -> usize {
        self.ratings.len()
    }

    /// Empirical probability that `i` beats `j`, if they have met.
    pub fn empirical(&self, i: usize, j: usize) -> Option<f64> {
        let k = i * self.n() + j;
        (self.games[k] > 0).then(|| self.score[k] / self.games[k] as f64)
    }

    fn record(&mut self, i: usize, j: usize, x: f64) {
        let n = self.n();
        self.score[i * n + j] += x;
        self.score[j * n + i] += 1.0 - x;
        self.games[i * n + j] += 1;
        self.games[j * n + i] += 1;
    }

    fn check(&self, i: usize, j: usize, x: f64, eta: f64) -> Result<()> {
        let n = self.n();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::IndexOutOfRange { index: idx, n });
            }
        }
        if i == j {
            return Err(Error::InvalidParameter("a player cannot play itself".into()));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(Error::InvalidParameter(format!("outcome {x} outside [0, 1]")));
        }
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::InvalidParameter(format!("step size {eta}")));
        }
        Ok(())
    }

    /// One update after `i` scored `x` against `j`. The update of `j` is the exact
    /// negative of that of `i`, so the rating sum is conserved.
    pub fn step(mut self, rule: OnlineRule, i: usize, j: usize, x: f64, eta: f64) -> Result<Self> {
        self.check(i, j, x, eta)?;
        self.record(i, j, x);
        let target = match rule {
            OnlineRule::Elo => x,
            OnlineRule::Hyperbolic { beta, g } => {
                if !(beta > 0.0) {
                    return Err(Error::NonPositiveBeta(beta));
                }
                if self.games[i * self.n() + j] == 1 {
                    self.first_meetings += 1;
                }
                let q = self.empirical(i, j).expect("just recorded");
                hyperbolic_target(x, q, beta, g)
            }
        };
        let delta = eta * (target - sigmoid(self.ratings[i] - self.ratings[j]));
        self.ratings[i] += delta;
        self.ratings[j] -= delta;
        self.steps += 1;
        Ok(self)
    }
}

fn g_of(x: f64, beta: f64, g: GMode) -> f64 {
    match g {
        GMode::Scaled => phi_beta(1.0, beta) * (x - 0.5),
        GMode::Identity => x,
    }
}

/// `f(x) = 1/2 + g(x) + delta` with `delta = phi_beta(2q - 1) / 2 - g(q)`, so that
/// `f` averages to `(1 + phi_beta(2q - 1)) / 2` when outcomes have mean `q`.
pub fn hyperbolic_target(x: f64, q: f64, beta: f64, g: GMode) -> f64 {
    let delta = 0.5 * phi_beta(2.0 * q - 1.0, beta) - g_of(q, beta, g);
    0.5 + g_of(x, beta, g) + delta
}

pub fn online_step_elo(state: OnlineState, i: usize, j: usize, x: f64, eta: f64) -> Result<OnlineState> {
    state.step(OnlineRule::Elo, i, j, x, eta)
}

pub fn online_step_hyperbolic(
    state: OnlineState,
    i: usize,
    j: usize,
    x: f64,
    eta: f64,
    beta: f64,
    g: GMode,
) -> Result<OnlineState> {
    state.step(OnlineRule::Hyperbolic { beta, g }, i, j, x, eta)
}

/// `eta_t = scale / t^power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub scale: f64,
    pub power: f64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self { scale: 32.0, power: 0.8 }
    }
}

impl StepSchedule {
    pub fn eta(&self, t: u64) -> f64 {
        self.scale / (t as f64).powf(self.power)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub steps: usize,
    pub simulations: usize,
    pub rule: OnlineRule,
    pub schedule: StepSchedule,
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationResult {
    /// `trajectory[t][i]`: rating of player `i` after step `t + 1`, averaged over runs.
    pub trajectory: Vec<Vec<f64>>,
    pub final_mean: Vec<f64>,
    /// Offline ratings the online rule should approach.
    pub offline: Vec<f64>,
}

/// Repeated online runs with uniformly random pairings and outcomes drawn from
/// `(P + 1) / 2`. A draw (`x = 1/2`) only happens when that probability is exactly 1/2.
pub fn simulate_online(p: &PayoffMatrix, cfg: &SimulationConfig) -> Result<SimulationResult> {
    let n = p.n();
    if n < 2 || cfg.steps == 0 || cfg.simulations == 0 {
        return Err(Error::InvalidParameter("need n >= 2, steps >= 1 and simulations >= 1".into()));
    }
    let offline = match cfg.rule {
        OnlineRule::Elo => fit_elo(p, None)?.ratings,
        OnlineRule::Hyperbolic { beta, .. } => hyperbolic_elo(p, beta, None)?.ratings,
    };
    let mut r = rng(cfg.seed);
    let mut trajectory = vec![vec![0.0; n]; cfg.steps];
    for _ in 0..cfg.simulations {
        let mut s = OnlineState::new(n);
        for (t, row) in trajectory.iter_mut().enumerate() {
            let i = r.random_range(0..n);
            let mut j = r.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let q = p.prob(i, j);
            let x = if q == 0.5 {
                0.5
            } else if r.random::<f64>() < q {
                1.0
            } else {
                0.0
            };
            s = s.step(cfg.rule, i, j, x, cfg.schedule.eta(t as u64 + 1))?;
            for (acc, v) in row.iter_mut().zip(&s.ratings) {
                *acc += v;
            }
        }
    }
    let k = cfg.simulations as f64;
    for row in trajectory.iter_mut() {
        for v in row.iter_mut() {
            *v /= k;
        }
    }
    let final_mean = trajectory.last().cloned().unwrap_or_default();
    Ok(SimulationResult { trajectory, final_mean, offline })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elo_step_matches_rule() {
        let s = OnlineState::new(3);
        let s = online_step_elo(s, 0, 2, 1.0, 0.1).unwrap();
        assert!((s.ratings[0] - 0.05).abs() < 1e-15);
        assert!((s.ratings[2] + 0.05).abs() < 1e-15);
        assert_eq!(s.ratings[1], 0.0);
        assert_eq!(s.empirical(0, 2), Some(1.0));
        assert_eq!(s.empirical(2, 0), Some(0.0));
    }

    #[test]
    fn mirrored_update_matches_formula_for_j() {
        let mut s = OnlineState::new(2);
        s.ratings = vec![0.3, -0.7];
        for rule in [OnlineRule::Elo, OnlineRule::Hyperbolic { beta: 3.0, g: GMode::Scaled }, OnlineRule::Hyperbolic { beta: 3.0, g: GMode::Identity }] {
            let before = s.clone();
            let after = before.clone().step(rule, 0, 1, 1.0, 0.2).unwrap();
            let q = after.empirical(1, 0).unwrap();
            let target_j = match rule {
                OnlineRule::Elo => 0.0,
                OnlineRule::Hyperbolic { beta, g } => hyperbolic_target(0.0, q, beta, g),
            };
            let direct = 0.2 * (target_j - sigmoid(before.ratings[1] - before.ratings[0]));
            assert!((after.ratings[1] - before.ratings[1] - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn small_beta_recovers_elo() {
        let mut a = OnlineState::new(4);
        let mut b = OnlineState::new(4);
        let plays = [(0, 1, 1.0), (2, 3, 0.0), (0, 1, 0.0), (1, 3, 1.0), (2, 0, 1.0)];
        for &(i, j, x) in &plays {
            a = online_step_elo(a, i, j, x, 0.3).unwrap();
            b = online_step_hyperbolic(b, i, j, x, 0.3, 1e-6, GMode::Scaled).unwrap();
        }
        for (x, y) in a.ratings.iter().zip(&b.ratings) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_inputs() {
        let s = OnlineState::new(2);
        assert!(s.clone().step(OnlineRule::Elo, 0, 0, 1.0, 0.1).is_err());
        assert!(s.clone().step(OnlineRule::Elo, 0, 5, 1.0, 0.1).is_err());
        assert!(s.step(OnlineRule::Elo, 0, 1, 1.5, 0.1).is_err());
    }
}
