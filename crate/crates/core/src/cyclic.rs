//! Decomposition of regular cyclic games into cyclic disks that all admit a
//! Hamiltonian win cycle.
//!
//! Players are relabeled along the cycle `0 -> 1 -> ... -> n-1 -> 0`. Stage `p`
//! (target `x = n-1-p`, from `n-1` down to `2`) fixes the signs between `x` and
//! the players below it with one or two disks at scale `s^(n-3-p)`, so each
//! stage dominates every earlier one. Players above the target are already
//! explained and are shrunk in later stages. Cycle edges are positive in every
//! disk, so they need no stage.
//!
//! Within a disk, `i` beats `j` iff `j` lies less than half a turn
//! counterclockwise of `i`. Points are laid out by walking the cycle
//! counterclockwise from the target and
//! moving to the next half-turn whenever the required outcome against the
//! target changes.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::decomposition::{classify_disk, Disk, DiskClass};
use crate::error::{Error, Result};
use crate::game::{find_hamiltonian_win_cycle, first_tie, is_win_cycle, PayoffMatrix};

pub const DEFAULT_SHRINK: f64 = 1e-3;
pub const MAX_SHRINK_ROUNDS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    /// The target beats this player.
    Lose,
    /// This player beats the target.
    Beat,
    /// Outcome against the target is irrelevant in this disk.
    Free,
}

/// How one stage explains the target's games against unexplained players.
/// Indices are positions along the cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stage: usize,
    pub target: usize,
    /// Players the target beats.
    pub lose_group: Vec<usize>,
    /// Players that beat the target.
    pub beat_group: Vec<usize>,
    pub single_disk: bool,
    /// Angles as multiples of pi, one vector per disk, indexed by cycle position.
    pub theta: Vec<Vec<Rational64>>,
    /// Radii before the stage scale, one vector per disk.
    pub rho: Vec<Vec<f64>>,
    /// Multiplies every entry of the stage's disks.
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    /// `gamma[a]` is the player at cycle position `a`.
    pub gamma: Vec<usize>,
    /// Disks in the original labels.
    pub disks: Vec<Disk>,
    pub classes: Vec<DiskClass>,
    /// `sign_agreement[i][j]`: the sum of disks has the sign of `P[i][j]`.
    pub sign_agreement: Vec<Vec<bool>>,
    pub k: usize,
    /// Players whose opponents, minus cycle neighbours, split into one run of
    /// wins and one run of losses along the cycle.
    pub n_star: usize,
    /// `2(n-3) - n_star + 1` for `n >= 5`, else 1.
    pub bound: i64,
    /// Non-final stages explained by a single disk.
    pub single_disk_stages: usize,
    /// `2(n-3) - single_disk_stages + 1` for `n >= 5`, else 1. Always `>= k`.
    pub stage_bound: i64,
    pub shrink: f64,
    pub shrink_rounds: usize,
    pub stages: Vec<StagePlan>,
}

/// Splits a win/loss sequence into at most two runs.
fn has_split(wins: &[bool]) -> bool {
    wins.windows(2).filter(|w| w[0] != w[1]).count() <= 1
}

/// Counts players `i` whose results against everyone but `i-1` and `i+1`,
/// read along the cycle from `i+2` to `i-2`, form a run of wins followed by a
/// run of losses or the reverse.
pub fn count_single_disk_stages(p: &PayoffMatrix, gamma: &[usize]) -> Result<usize> {
    if !is_win_cycle(p, gamma) {
        return Err(Error::NotACycle);
    }
    let n = p.n();
    let count = (0..n)
        .filter(|&i| {
            let wins: Vec<bool> = (2..n - 1).map(|d| p.beats(gamma[i], gamma[(i + d) % n])).collect();
            has_split(&wins)
        })
        .count();
    Ok(count)
}

fn bound_for(n: usize, count: usize) -> i64 {
    if n <= 4 {
        1
    } else {
        2 * (n as i64 - 3) - count as i64 + 1
    }
}

/// Positions (multiples of pi, counterclockwise from the target) for roles
/// visited along the cycle starting at the target's successor, and the
/// target's own position at the end of the walk.
fn zone_walk(roles: &[Role]) -> (Vec<Rational64>, Rational64) {
    let m = roles.len() as i64;
    // Zone of each role: even zones lose to the target, odd zones beat it.
    let mut zone = Vec::with_capacity(roles.len());
    let mut k = 0i64;
    for &r in roles {
        let want = match r {
            Role::Lose => Some(0),
            Role::Beat => Some(1),
            Role::Free => None,
        };
        if let Some(parity) = want {
            if k.rem_euclid(2) != parity {
                k += 1;
            }
        }
        zone.push(k);
    }
    if k % 2 == 0 {
        k += 1;
        *zone.last_mut().expect("non-empty") = k;
    }
    let zones = k + 1;
    let a = |k: i64| Rational64::new(1, 8) * (Rational64::from_integer(1) + Rational64::new(k, 2 * zones));
    let sigma = Rational64::new(1, 2 * m.max(1));
    let mut pos = Vec::with_capacity(roles.len());
    for (idx, &z) in zone.iter().enumerate() {
        let after = zone[idx + 1..].iter().take_while(|&&w| w == z).count() as i64;
        pos.push(Rational64::from_integer(z + 1) - a(z) - sigma * after);
    }
    (pos, Rational64::from_integer(zones))
}

fn wrap(t: Rational64) -> Rational64 {
    let two = Rational64::from_integer(2);
    t - (t / two).floor() * two
}

/// `theta / pi` in `[0, 2)` for position `d` with the target at `pi / 2`.
fn angle(d: Rational64) -> Rational64 {
    wrap(Rational64::new(1, 2) + d)
}

fn eval(theta: Rational64) -> f64 {
    std::f64::consts::PI * (*theta.numer() as f64) / (*theta.denom() as f64)
}

/// Angles for one disk of the stage with target `x`: the target sits at `pi/2`.
fn stage_angles(n: usize, x: usize, role_of: impl Fn(usize) -> Role) -> Vec<Rational64> {
    let players: Vec<usize> = (1..n).map(|r| (x + r) % n).collect();
    let roles: Vec<Role> = players.iter().map(|&j| role_of(j)).collect();
    let (pos, _) = zone_walk(&roles);
    let mut theta = vec![Rational64::new(1, 2); n];
    for (&j, &d) in players.iter().zip(&pos) {
        theta[j] = angle(d);
    }
    theta
}

/// Relabeled game along `gamma`.
fn relabel<'a>(p: &'a PayoffMatrix, gamma: &'a [usize]) -> impl Fn(usize, usize) -> bool + 'a {
    move |a, b| p.beats(gamma[a], gamma[b])
}

fn small_layouts(n: usize, wins: &dyn Fn(usize, usize) -> bool) -> Option<Vec<Rational64>> {
    if n == 3 {
        return Some((0..3).map(|a| angle(Rational64::new(2 * a as i64, 3))).collect());
    }
    // n = 4: search angles on a grid of eighths of a turn.
    let eighth = |k: i64| Rational64::new(k, 8);
    let margin = (std::f64::consts::PI / 8.0).sin() - 1e-12;
    for k1 in 0..16 {
        for k2 in 0..16 {
            for k3 in 0..16 {
                let theta = [eighth(4), eighth(4 + k1), eighth(4 + k2), eighth(4 + k3)];
                let ok = (0..4).all(|a| {
                    (0..4).filter(|&b| b != a).all(|b| {
                        let s = (eval(theta[b]) - eval(theta[a])).sin();
                        if wins(a, b) {
                            s > margin
                        } else {
                            s < -margin
                        }
                    })
                });
                if ok {
                    return Some(theta.iter().map(|&t| wrap(t)).collect());
                }
            }
        }
    }
    None
}

fn plan_stages(n: usize, wins: &dyn Fn(usize, usize) -> bool, s: f64) -> Vec<StagePlan> {
    let last = n - 3;
    let mut stages = Vec::new();
    for stage in 0..=last {
        let x = n - 1 - stage;
        let succ = (x + 1) % n;
        let pred = x - 1;
        let unexplained: Vec<usize> = (0..x).filter(|&j| j != pred && j != succ).collect();
        let (lose_group, beat_group): (Vec<usize>, Vec<usize>) = unexplained.iter().partition(|&&j| wins(x, j));
        let seq: Vec<bool> = unexplained.iter().map(|&j| wins(x, j)).collect();
        let single_disk = stage == last || has_split(&seq);
        // Players above the target were explained `stage - p_y` stages ago.
        let explained_rho = |j: usize| -> f64 {
            if j > x && !(x == n - 1 && j == 0) {
                let p_y = n - 1 - j;
                s.powi(2 * (stage - p_y) as i32)
            } else {
                1.0
            }
        };
        let explained = |j: usize| j > x;
        let base_role = |j: usize| -> Role {
            if j == succ {
                Role::Lose
            } else if j == pred {
                Role::Beat
            } else if explained(j) {
                Role::Free
            } else if wins(x, j) {
                Role::Lose
            } else {
                Role::Beat
            }
        };
        let mut theta = Vec::new();
        let mut rho = Vec::new();
        if single_disk {
            theta.push(stage_angles(n, x, base_role));
            rho.push((0..n).map(explained_rho).collect());
        } else {
            for keep in [Role::Lose, Role::Beat] {
                let in_group = |j: usize| unexplained.contains(&j) && base_role(j) == keep;
                theta.push(stage_angles(n, x, |j| {
                    if unexplained.contains(&j) && !in_group(j) {
                        Role::Free
                    } else {
                        base_role(j)
                    }
                }));
                rho.push(
                    (0..n)
                        .map(|j| if unexplained.contains(&j) && !in_group(j) { s } else { explained_rho(j) })
                        .collect(),
                );
            }
        }
        stages.push(StagePlan {
            stage,
            target: x,
            lose_group,
            beat_group,
            single_disk,
            theta,
            rho,
            scale: s.powi((last - stage) as i32),
        });
    }
    stages
}

fn assemble(stages: &[StagePlan], gamma: &[usize]) -> Vec<Disk> {
    let n = gamma.len();
    let mut disks = Vec::new();
    for st in stages {
        let r = st.scale.sqrt();
        for (theta, rho) in st.theta.iter().zip(&st.rho) {
            let mut u = vec![0.0; n];
            let mut v = vec![0.0; n];
            for a in 0..n {
                let t = eval(theta[a]);
                u[gamma[a]] = r * rho[a] * t.cos();
                v[gamma[a]] = r * rho[a] * t.sin();
            }
            disks.push(Disk { u, v });
        }
    }
    disks
}

fn sign_agreement(p: &PayoffMatrix, disks: &[Disk]) -> Vec<Vec<bool>> {
    let n = p.n();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let c: f64 = disks.iter().map(|d| d.entry(i, j)).sum();
                    i == j || (c > 0.0 && p.beats(i, j)) || (c < 0.0 && p.beats(j, i))
                })
                .collect()
        })
        .collect()
}

/// Builds the decomposition with the default shrink factor.
pub fn construct_cyclic_disks(p: &PayoffMatrix) -> Result<ConstructionReport> {
    construct_cyclic_disks_with(p, DEFAULT_SHRINK)
}

pub fn construct_cyclic_disks_with(p: &PayoffMatrix, shrink: f64) -> Result<ConstructionReport> {
    if !(shrink > 0.0 && shrink < 1.0) {
        return Err(Error::InvalidParameter(format!("shrink factor {shrink} must lie in (0, 1)")));
    }
    if let Some((i, j)) = first_tie(p) {
        return Err(Error::NotRegular { i, j });
    }
    let n = p.n();
    let gamma = find_hamiltonian_win_cycle(p)?.ok_or(Error::NotCyclic)?;
    let cycle = gamma.clone();
    let wins = relabel(p, &cycle);
    let n_star = count_single_disk_stages(p, &gamma)?;
    for round in 0..MAX_SHRINK_ROUNDS {
        let s = shrink.powi(round as i32 + 1);
        let stages = if n <= 4 {
            let theta = small_layouts(n, &wins).ok_or_else(|| Error::ConstructionFailed("no layout for n <= 4".into()))?;
            vec![StagePlan {
                stage: 0,
                target: n - 1,
                lose_group: Vec::new(),
                beat_group: Vec::new(),
                single_disk: true,
                theta: vec![theta],
                rho: vec![vec![1.0; n]],
                scale: 1.0,
            }]
        } else {
            plan_stages(n, &wins, s)
        };
        let disks = assemble(&stages, &gamma);
        let agreement = sign_agreement(p, &disks);
        if agreement.iter().flatten().all(|&b| b) {
            let single_disk_stages = stages.iter().filter(|st| st.single_disk && st.stage + 3 < n).count();
            let classes = disks.iter().map(classify_disk).collect();
            let report = ConstructionReport {
                gamma,
                k: disks.len(),
                classes,
                disks,
                sign_agreement: agreement,
                n_star,
                bound: bound_for(n, n_star),
                single_disk_stages,
                stage_bound: bound_for(n, single_disk_stages),
                shrink: s,
                shrink_rounds: round,
                stages,
            };
            return Ok(report);
        }
        log::debug!("signs disagree at shrink {s:e}; shrinking again");
    }
    Err(Error::ShrinkExhausted { rounds: MAX_SHRINK_ROUNDS })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    SizeMismatch,
    NotACycle,
    NotCyclic { disk: usize },
    CycleNotAdmitted { disk: usize, from: usize, to: usize },
    SignMismatch { i: usize, j: usize },
}

/// Re-derives every guarantee of a report from its disks alone.
pub fn verify_construction(p: &PayoffMatrix, report: &ConstructionReport) -> (bool, Vec<Violation>) {
    let n = p.n();
    let mut out = Vec::new();
    if report.disks.iter().any(|d| d.n() != n) || report.gamma.len() != n {
        return (false, vec![Violation::SizeMismatch]);
    }
    if !is_win_cycle(p, &report.gamma) {
        out.push(Violation::NotACycle);
    }
    for (k, d) in report.disks.iter().enumerate() {
        if classify_disk(d) != DiskClass::Cyclic {
            out.push(Violation::NotCyclic { disk: k });
        }
        for a in 0..n {
            let (from, to) = (report.gamma[a], report.gamma[(a + 1) % n]);
            if !(d.entry(from, to) > 0.0) {
                out.push(Violation::CycleNotAdmitted { disk: k, from, to });
            }
        }
    }
    for (i, row) in sign_agreement(p, &report.disks).iter().enumerate() {
        for (j, &ok) in row.iter().enumerate() {
            if !ok && i < j {
                out.push(Violation::SignMismatch { i, j });
            }
        }
    }
    (out.is_empty(), out)
}
