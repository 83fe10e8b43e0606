//! Elo on a hyperbolically compressed game.
//!
//! Passing a transitive game through `phi_beta(x) = tanh(beta x) / beta` for a
//! large enough `beta` makes its Elo ratings order the players exactly; mapping
//! the Elo game back through the inverse recovers a game with the original
//! sign pattern.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{elo_game, fit_elo};
use crate::error::{Error, Result};
use crate::game::{apply_basis, first_tie, is_regular, transitivity_witness, Mask, PayoffMatrix};

const CLAMP: f64 = 1e-15;

pub fn phi_beta(x: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        x
    } else {
        (beta * x).tanh() / beta
    }
}

/// Inverse of [`phi_beta`] on `(-phi_beta(1), phi_beta(1))`, saturating to `+-1` outside.
pub fn phi_beta_inv(x: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return x.clamp(-1.0, 1.0);
    }
    let lim = phi_beta(1.0, beta);
    if x >= lim {
        1.0
    } else if x <= -lim {
        -1.0
    } else {
        (beta * x).clamp(-1.0 + CLAMP, 1.0 - CLAMP).atanh() / beta
    }
}

fn require_regular_transitive(p: &PayoffMatrix) -> Result<()> {
    if let Some((i, j, k)) = transitivity_witness(p) {
        return Err(Error::NotTransitive { i, j, k });
    }
    if let Some((i, j)) = first_tie(p) {
        return Err(Error::NotRegular { i, j });
    }
    Ok(())
}

fn min_positive(p: &PayoffMatrix) -> Option<f64> {
    p.matrix().iter().copied().filter(|&x| x > 0.0).fold(None, |a, x| Some(a.map_or(x, |a: f64| a.min(x))))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplicitBound {
    pub beta: f64,
    pub alpha: f64,
    pub x_alpha: f64,
    pub beta_alpha: f64,
}

/// Default `alpha = 1 / (n (n - 1))`, half of the admissible upper limit.
pub fn default_alpha(n: usize) -> f64 {
    1.0 / (n * (n - 1)) as f64
}

/// Root of `2 atanh(x)^3 - 3 alpha x` on `(0, 1)`, by bisection.
pub fn x_alpha(alpha: f64) -> f64 {
    let f = |x: f64| 2.0 * x.atanh().powi(3) - 3.0 * alpha * x;
    let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-16);
    // f < 0 just above 0 and f -> +inf at 1.
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Closed-form sufficient `beta` for sign preservation on a regular transitive game.
pub fn beta_bound_explicit(p: &PayoffMatrix, alpha: Option<f64>) -> Result<ExplicitBound> {
    require_regular_transitive(p)?;
    let n = p.n();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two players".into()));
    }
    let max_alpha = 2.0 / (n * (n - 1)) as f64;
    let alpha = alpha.unwrap_or_else(|| default_alpha(n));
    if !(alpha > 0.0 && alpha < max_alpha) {
        return Err(Error::InvalidAlpha { alpha, max: max_alpha });
    }
    let p_min = min_positive(p).expect("regular game with n >= 2 has a positive entry");
    let xa = x_alpha(alpha);
    let beta_alpha = ((n - 2) as f64 / n as f64 + (n - 1) as f64 * alpha).atanh() / p_min;
    let beta = ((n - 1) as f64 / xa).max(beta_alpha);
    Ok(ExplicitBound { beta, alpha, x_alpha: xa, beta_alpha })
}

/// Quantities of the row-sum sign-preservation test at a given `beta`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TightPredicate {
    pub beta: f64,
    /// Largest row sum of `phi_beta(P)`; must be below 1.
    pub p_star: f64,
    /// Worst row-sum margin minus the cubic remainder; must be positive.
    pub p_star_star: f64,
    pub holds: bool,
}

pub fn tight_predicate(p: &PayoffMatrix, beta: f64) -> TightPredicate {
    let n = p.n();
    let q = DMatrix::from_fn(n, n, |i, j| phi_beta(p.get(i, j), beta));
    let rows: Vec<f64> = (0..n).map(|i| q.row(i).sum()).collect();
    let p_star = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut margin = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if p.get(i, j) > 0.0 {
                margin = margin.min(rows[i] - rows[j]);
            }
        }
    }
    let remainder = if p_star < 1.0 { (2.0 * n as f64 / 3.0) * p_star.atanh().powi(3) } else { f64::INFINITY };
    let p_star_star = margin - remainder;
    TightPredicate { beta, p_star, p_star_star, holds: p_star < 1.0 && p_star_star > 0.0 }
}

/// Smallest `beta` (to relative width 1e-6) at which [`tight_predicate`] holds,
/// found by a geometric scan up from `beta_explicit / 64` followed by bisection.
pub fn beta_bound_tight(p: &PayoffMatrix) -> Result<f64> {
    require_regular_transitive(p)?;
    let start = beta_bound_explicit(p, None)?.beta / 64.0;
    tight_search(p, start)
}

fn tight_search(p: &PayoffMatrix, start: f64) -> Result<f64> {
    let max_beta = start * 64.0 * 1e4;
    let mut lo = 0.0;
    let mut hi = start;
    while !tight_predicate(p, hi).holds {
        lo = hi;
        hi *= 1.25;
        if hi > max_beta {
            return Err(Error::PredicateNeverSatisfied { max_beta });
        }
    }
    if lo == 0.0 {
        return Ok(hi);
    }
    while (hi - lo) > 1e-6 * hi {
        let mid = 0.5 * (lo + hi);
        if tight_predicate(p, mid).holds {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Clone, Debug)]
pub struct HyperbolicElo {
    pub beta: f64,
    /// Elo ratings of `phi_beta(P)`.
    pub ratings: Vec<f64>,
    /// `phi_beta^{-1}(elo(ratings))`.
    pub reconstruction: DMatrix<f64>,
}

pub fn hyperbolic_elo(p: &PayoffMatrix, beta: f64, mask: Option<&Mask>) -> Result<HyperbolicElo> {
    if !(beta > 0.0) {
        return Err(Error::NonPositiveBeta(beta));
    }
    let q = PayoffMatrix::new(apply_basis(p, |x| phi_beta(x, beta))?)?;
    let ratings = fit_elo(&q, mask)?.ratings;
    let reconstruction = elo_game(&ratings).map(|x| phi_beta_inv(x, beta));
    Ok(HyperbolicElo { beta, ratings, reconstruction })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialCheck {
    /// `P_ij > 0 <=> Phi_i > Phi_j` for all pairs.
    pub holds_iff: bool,
    /// `P_ij > 0 => Phi_i > Phi_j` for all pairs.
    pub holds_implies: bool,
    /// First pair violating the stronger property.
    pub witness: Option<(usize, usize)>,
}

pub fn verify_weak_potential(p: &PayoffMatrix, phi: &[f64]) -> Result<PotentialCheck> {
    let n = p.n();
    if phi.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: phi.len() });
    }
    let mut holds_implies = true;
    let mut witness = None;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let wins = p.get(i, j) > 0.0;
            let above = phi[i] - phi[j] > 0.0;
            if wins && !above {
                holds_implies = false;
            }
            if wins != above && witness.is_none() {
                witness = Some((i, j));
            }
        }
    }
    Ok(PotentialCheck { holds_iff: witness.is_none(), holds_implies, witness })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PotentialWitness {
    /// `i > j > k` but not `i > k`: no potential can exist.
    Intransitive { i: usize, j: usize, k: usize },
    /// The extracted potential misorders this pair.
    Pair { i: usize, j: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialResult {
    pub phi: Vec<f64>,
    pub beta: f64,
    pub certified: bool,
    pub implies_holds: bool,
    pub witness: Option<PotentialWitness>,
}

/// Potential from hyperbolic Elo at the tight `beta`. Intransitive games get a
/// best-effort potential and a falsifying triple.
pub fn extract_potential(p: &PayoffMatrix) -> Result<PotentialResult> {
    let n = p.n();
    if n < 2 {
        return Ok(PotentialResult { phi: vec![0.0; n], beta: 0.0, certified: true, implies_holds: true, witness: None });
    }
    let intransitive = transitivity_witness(p);
    let beta = if intransitive.is_none() && is_regular(p) {
        beta_bound_tight(p)?
    } else {
        // Same construction without the regular-transitive guarantee.
        let p_min = min_positive(p).unwrap_or(1.0);
        let alpha = default_alpha(n);
        let guess = ((n - 1) as f64 / x_alpha(alpha))
            .max(((n - 2) as f64 / n as f64 + (n - 1) as f64 * alpha).atanh() / p_min);
        tight_search(p, guess / 64.0).unwrap_or(guess)
    };
    let phi = hyperbolic_elo(p, beta, None)?.ratings;
    let check = verify_weak_potential(p, &phi)?;
    let witness = match intransitive {
        Some((i, j, k)) => Some(PotentialWitness::Intransitive { i, j, k }),
        None => check.witness.map(|(i, j)| PotentialWitness::Pair { i, j }),
    };
    Ok(PotentialResult { phi, beta, certified: check.holds_iff, implies_holds: check.holds_implies, witness })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::same_sign;
    use crate::generators::four_player_game;

    #[test]
    fn phi_inverse_round_trips() {
        for &b in &[0.5, 3.0, 7.0] {
            for k in -9..=9 {
                let x = k as f64 / 10.0;
                assert!((phi_beta_inv(phi_beta(x, b), b) - x).abs() < 1e-9);
            }
            assert_eq!(phi_beta_inv(phi_beta(1.0, b) * 1.01, b), 1.0);
            assert_eq!(phi_beta_inv(-phi_beta(1.0, b) * 1.01, b), -1.0);
        }
    }

    #[test]
    fn four_player_at_beta_seven() {
        let h = hyperbolic_elo(&four_player_game(), 7.0, None).unwrap();
        let expected = [0.21, -0.01, -0.02, -0.17];
        for (a, b) in h.ratings.iter().zip(expected) {
            assert!((a - b).abs() < 5e-3, "{a} vs {b}");
        }
        let rec = [[0.0, 0.148, 0.155, 1.0], [0.0, 0.0, 0.003, 0.088], [0.0, 0.0, 0.0, 0.084]];
        for i in 0..3 {
            for j in (i + 1)..4 {
                assert!((h.reconstruction[(i, j)] - rec[i][j]).abs() < 5e-3);
            }
        }
        assert!(same_sign(four_player_game().matrix(), &h.reconstruction).unwrap());
    }

    #[test]
    fn tight_predicate_fails_near_zero_beta() {
        assert!(!tight_predicate(&four_player_game(), 1e-3).holds);
        let b = beta_bound_tight(&four_player_game()).unwrap();
        assert!(tight_predicate(&four_player_game(), b).holds);
        assert!(b <= beta_bound_explicit(&four_player_game(), None).unwrap().beta * 1.0001);
    }

    #[test]
    fn alpha_out_of_range() {
        let p = four_player_game();
        assert!(matches!(beta_bound_explicit(&p, Some(0.2)), Err(Error::InvalidAlpha { .. })));
        assert!(matches!(beta_bound_explicit(&p, Some(0.0)), Err(Error::InvalidAlpha { .. })));
    }

    #[test]
    fn x_alpha_is_a_root() {
        for &a in &[0.01, 0.05, 0.1] {
            let x = x_alpha(a);
            assert!((2.0 * x.atanh().powi(3) - 3.0 * a * x).abs() < 1e-9);
        }
    }
}
