//! Offline Elo (Bradley-Terry) ratings fitted by maximum likelihood.
//!
//! The objective is the binary cross-entropy between `(P + 1) / 2` and
//! `sigmoid(e_i - e_j)` summed over observed ordered pairs. Ratings are only
//! defined up to a shift per connected component of the observation graph; each
//! component is centred to mean zero.

mod hyperbolic;
mod online;

pub use hyperbolic::*;
pub use online::*;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::game::{Mask, PayoffMatrix};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Clone, Debug)]
pub struct EloOptions {
    /// Stop once the stationarity residual's max-norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for EloOptions {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 500 }
    }
}

#[derive(Clone, Debug)]
pub struct EloFit {
    pub ratings: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the stationarity residual at the returned ratings.
    pub residual: f64,
    pub loss: f64,
    /// Players without any observed pair; their rating is fixed at zero.
    pub unobserved_players: Vec<usize>,
}

pub fn fit_elo(p: &PayoffMatrix, mask: Option<&Mask>) -> Result<EloFit> {
    fit_elo_with(p, mask, &EloOptions::default())
}

fn check_mask(p: &PayoffMatrix, mask: Option<&Mask>) -> Result<Mask> {
    match mask {
        Some(m) if m.n() != p.n() => Err(Error::SizeMismatch { expected: p.n(), found: m.n() }),
        Some(m) => Ok(m.clone()),
        None => Ok(Mask::full(p.n())),
    }
}

fn elo_loss(p: &PayoffMatrix, mask: &Mask, e: &[f64]) -> f64 {
    let mut loss = 0.0;
    for (i, j) in mask.pairs() {
        let d = e[i] - e[j];
        let q = p.prob(i, j);
        // Both orderings contribute the same amount.
        loss += 2.0 * (softplus(d) - q * d);
    }
    loss
}

/// Stationarity residual restricted to observed pairs.
fn masked_residual(p: &PayoffMatrix, mask: &Mask, e: &[f64]) -> Vec<f64> {
    let mut r = vec![0.0; p.n()];
    for (i, j) in mask.pairs() {
        let g = sigmoid(e[i] - e[j]) - p.prob(i, j);
        r[i] += g;
        r[j] -= g;
    }
    r
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

/// Damped Newton with backtracking on the cross-entropy.
pub fn fit_elo_with(p: &PayoffMatrix, mask: Option<&Mask>, opts: &EloOptions) -> Result<EloFit> {
    let n = p.n();
    let mask = check_mask(p, mask)?;
    let comps = mask.components();
    let unobserved: Vec<usize> =
        comps.iter().filter(|c| c.len() == 1).map(|c| c[0]).collect();
    if !unobserved.is_empty() {
        log::warn!("players {unobserved:?} have no observed pairs; rating fixed at 0");
    }
    let mut e = vec![0.0; n];
    let mut loss = elo_loss(p, &mask, &e);
    let mut iterations = 0;
    loop {
        let r = masked_residual(p, &mask, &e);
        let res = max_abs(&r);
        if res <= opts.tolerance {
            center(&mut e, &comps);
            return Ok(EloFit { ratings: e, iterations, residual: res, loss, unobserved_players: unobserved });
        }
        if iterations >= opts.max_iterations || !res.is_finite() {
            return Err(Error::DidNotConverge { iterations, residual: res });
        }
        iterations += 1;
        // Hessian of the loss is twice the weighted Laplacian; the gradient is 2 r.
        let mut h = DMatrix::<f64>::zeros(n, n);
        for (i, j) in mask.pairs() {
            let s = sigmoid(e[i] - e[j]);
            let w = 2.0 * s * (1.0 - s);
            h[(i, i)] += w;
            h[(j, j)] += w;
            h[(i, j)] -= w;
            h[(j, i)] -= w;
        }
        for c in &comps {
            let w = 1.0 / c.len() as f64;
            for &a in c {
                for &b in c {
                    h[(a, b)] += w;
                }
            }
        }
        let g = DVector::from_iterator(n, r.iter().map(|x| -2.0 * x));
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&g),
            None => h.lu().solve(&g).ok_or(Error::DidNotConverge { iterations, residual: res })?,
        };
        let slope: f64 = -g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = e.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            let l = elo_loss(p, &mask, &cand);
            if l <= loss + 1e-4 * t * slope || (l - loss).abs() <= 1e-15 * loss.abs().max(1.0) {
                e = cand;
                loss = l;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The loss is flat to rounding; a full step still reduces the residual.
            for (a, d) in e.iter_mut().zip(step.iter()) {
                *a += d;
            }
            loss = elo_loss(p, &mask, &e);
        }
    }
}

fn center(e: &mut [f64], comps: &[Vec<usize>]) {
    for c in comps {
        let mean = c.iter().map(|&i| e[i]).sum::<f64>() / c.len() as f64;
        for &i in c {
            e[i] -= mean;
        }
    }
}

/// `2 sigmoid(e_i - e_j) - 1`, computed as `tanh((e_i - e_j) / 2)`.
pub fn elo_game(ratings: &[f64]) -> DMatrix<f64> {
    let n = ratings.len();
    DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (0.5 * (ratings[i] - ratings[j])).tanh() })
}

/// `sum_k sigmoid(e_i - e_k) - sum_k (P_ik + 1) / 2` over all `k`.
pub fn check_stationarity(p: &PayoffMatrix, ratings: &[f64]) -> Result<Vec<f64>> {
    let n = p.n();
    if ratings.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: ratings.len() });
    }
    Ok((0..n)
        .map(|i| (0..n).map(|k| sigmoid(ratings[i] - ratings[k]) - p.prob(i, k)).sum())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::four_player_game;

    #[test]
    fn two_player_closed_form() {
        let p = PayoffMatrix::from_upper(2, |_, _| 0.5).unwrap();
        let fit = fit_elo(&p, None).unwrap();
        let half_logit = 0.5 * (0.75f64 / 0.25).ln();
        assert!((fit.ratings[0] - half_logit).abs() < 1e-9);
        assert!((fit.ratings[1] + half_logit).abs() < 1e-9);
    }

    #[test]
    fn zero_game_has_zero_ratings() {
        let fit = fit_elo(&PayoffMatrix::zeros(5), None).unwrap();
        assert!(fit.ratings.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn four_player_ratings() {
        let fit = fit_elo(&four_player_game(), None).unwrap();
        let expected = [0.87, -0.42, 0.19, -0.64];
        for (a, b) in fit.ratings.iter().zip(expected) {
            assert!((a - b).abs() < 5e-3, "{a} vs {b}");
        }
        let r = check_stationarity(&four_player_game(), &fit.ratings).unwrap();
        assert!(max_abs(&r) <= 1e-8);
    }

    #[test]
    fn disconnected_mask_centres_each_component() {
        let p = four_player_game();
        let mut m = Mask::empty(4);
        m.set(0, 1, true);
        m.set(2, 3, true);
        let fit = fit_elo(&p, Some(&m)).unwrap();
        assert!((fit.ratings[0] + fit.ratings[1]).abs() < 1e-12);
        assert!((fit.ratings[2] + fit.ratings[3]).abs() < 1e-12);
    }

    #[test]
    fn certain_wins_stop_at_the_tolerance() {
        // No finite minimizer: the solver walks out until the residual is tiny.
        let p = PayoffMatrix::from_upper(2, |_, _| 1.0).unwrap();
        let fit = fit_elo(&p, None).unwrap();
        assert!(fit.ratings[0] - fit.ratings[1] > 20.0);
        let tight = EloOptions { tolerance: 1e-10, max_iterations: 3 };
        assert!(matches!(fit_elo_with(&p, None, &tight), Err(Error::DidNotConverge { .. })));
    }
}
