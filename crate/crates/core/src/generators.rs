//! Fixture games and seeded random game families.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{find_hamiltonian_win_cycle, is_regular, is_transitive, PayoffMatrix};

/// Divisor applied to the order-two polynomial game.
pub const ORDER2_DIVISOR: f64 = 2.7;
/// Scale of the order-two cyclic fixture.
pub const CYCLIC_FIXTURE_SCALE: f64 = 0.72;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Four-player transitive game that is not an Elo game.
pub fn four_player_game() -> PayoffMatrix {
    PayoffMatrix::from_rows(&[
        vec![0.0, 0.88, 0.2, 0.46],
        vec![-0.88, 0.0, 0.06, 0.06],
        vec![-0.2, -0.06, 0.0, 0.62],
        vec![-0.46, -0.06, -0.62, 0.0],
    ])
    .expect("fixture is valid")
}

/// Five-player game that splits into two cyclic disks.
pub fn five_player_game() -> PayoffMatrix {
    PayoffMatrix::from_rows(&[
        vec![0.0, 0.01, 0.99, 0.01, 0.01],
        vec![-0.01, 0.0, 0.01, 0.01, 0.99],
        vec![-0.99, -0.01, 0.0, 0.43, 0.01],
        vec![-0.01, -0.01, -0.43, 0.0, 0.99],
        vec![-0.01, -0.99, -0.01, -0.99, 0.0],
    ])
    .expect("fixture is valid")
}

/// Evenly spaced potential from `1` (player 0) down to `-1` (player n-1).
pub fn potential_grid(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n).map(|k| 1.0 - 2.0 * k as f64 / (n - 1) as f64).collect()
}

fn signed_pow(x: f64, e: f64) -> f64 {
    x.signum() * x.abs().powf(e)
}

/// `P[i][j] = lambda * sign(d) |d|^m` with `d = Phi_i - Phi_j` on the potential grid.
pub fn gen_polynomial_transitive(n: usize, m: f64, lambda: f64) -> Result<PayoffMatrix> {
    if n < 2 || !(m > 0.0) || !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("n = {n}, m = {m}, lambda = {lambda}")));
    }
    let phi = potential_grid(n);
    let max = lambda * (phi[0] - phi[n - 1]).powf(m);
    if max > 1.0 + 1e-12 {
        return Err(Error::LambdaTooLarge { max });
    }
    PayoffMatrix::from_upper(n, |i, j| (lambda * signed_pow(phi[i] - phi[j], m)).clamp(-1.0, 1.0))
}

/// Divisor used by [`gen_order2_polynomial`]: 2.7, or the largest raw entry if
/// that would push an entry outside `[-1, 1]` (only possible for odd `n`).
pub fn order2_divisor(n: usize) -> f64 {
    let phi = potential_grid(n);
    let mut max = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max = max.max(order2_raw(&phi, i, j).abs());
        }
    }
    ORDER2_DIVISOR.max(max)
}

fn order2_raw(phi: &[f64], i: usize, j: usize) -> f64 {
    let e = if (i + j) % 2 == 0 { 1.5 } else { 0.3 };
    signed_pow(phi[i] - phi[j], e)
}

/// Transitive game of sign order two: exponent 1.5 on pairs with even index sum,
/// 0.3 on odd ones, divided by [`order2_divisor`].
pub fn gen_order2_polynomial(n: usize) -> Result<PayoffMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}")));
    }
    let phi = potential_grid(n);
    let div = order2_divisor(n);
    PayoffMatrix::from_upper(n, |i, j| order2_raw(&phi, i, j) / div)
}

/// Ten-player cyclic game: a single disk passed through sqrt or square
/// depending on the parity of the index sum.
pub fn gen_cyclic_order2_fixture() -> PayoffMatrix {
    let u = [0.16, -0.73, 0.53, 0.22, 0.26, 0.46, 0.35, 0.54, -0.53, -0.05];
    let v = [-0.39, 0.4, -0.43, -0.92, 0.31, -0.48, -0.12, 0.38, 0.6, 0.67];
    PayoffMatrix::from_upper(10, |i, j| {
        let d = u[i] * v[j] - v[i] * u[j];
        let e = if (i + j) % 2 == 1 { 0.5 } else { 2.0 };
        CYCLIC_FIXTURE_SCALE * signed_pow(d, e)
    })
    .expect("fixture is valid")
}

/// The disk vectors underlying [`gen_cyclic_order2_fixture`].
pub fn cyclic_fixture_vectors() -> (Vec<f64>, Vec<f64>) {
    (
        vec![0.16, -0.73, 0.53, 0.22, 0.26, 0.46, 0.35, 0.54, -0.53, -0.05],
        vec![-0.39, 0.4, -0.43, -0.92, 0.31, -0.48, -0.12, 0.38, 0.6, 0.67],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GameKind {
    /// Random strict order with random margins in `[0.01, 1)`.
    Transitive,
    /// Random disk mixtures, rejected until a Hamiltonian win cycle exists.
    Cyclic,
    /// Levels of cyclic or single players, each level beating all lower ones.
    Hybrid,
    /// `k` random Gaussian disks, optionally plus a transitive disk, rescaled into range.
    DiskMixture { k: usize, transitive: bool },
    /// Players cut into `levels` ordered levels of near-equal size; `k`
    /// Gaussian disks decide games within a level and a transitive disk on
    /// the level index, weighted to dominate them, decides the rest.
    HybridDiskMixture { k: usize, levels: usize },
}

/// Level count used for the synthetic hybrid benchmark games.
pub const HYBRID_LEVELS: usize = 3;

pub fn gen_random(kind: GameKind, n: usize, seed: u64) -> Result<PayoffMatrix> {
    let mut r = rng(seed);
    match kind {
        GameKind::Transitive => {
            if n < 2 {
                return Err(Error::InvalidParameter("transitive game needs n >= 2".into()));
            }
            let order = shuffled(n, &mut r);
            let mut rank = vec![0; n];
            for (pos, &p) in order.iter().enumerate() {
                rank[p] = pos;
            }
            PayoffMatrix::from_upper(n, |i, j| {
                let m: f64 = r.random_range(0.01..1.0);
                if rank[i] < rank[j] {
                    m
                } else {
                    -m
                }
            })
        }
        GameKind::Cyclic => {
            if n < 3 {
                return Err(Error::InvalidParameter("cyclic game needs n >= 3".into()));
            }
            for _ in 0..10_000 {
                let k = r.random_range(1..=(n / 2).max(1));
                let g = disk_mixture(n, k, false, &mut r)?;
                if is_regular(&g) && find_hamiltonian_win_cycle(&g)?.is_some() {
                    return Ok(g);
                }
            }
            Err(Error::InvalidParameter("could not sample a cyclic game".into()))
        }
        GameKind::Hybrid => hybrid(n, &mut r),
        GameKind::DiskMixture { k, transitive } => disk_mixture(n, k, transitive, &mut r),
        GameKind::HybridDiskMixture { k, levels } => {
            if k == 0 || levels < 2 || n < 3 * levels {
                return Err(Error::InvalidParameter("hybrid mixture needs k >= 1, levels >= 2 and n >= 3 levels".into()));
            }
            for _ in 0..10_000 {
                let g = layered_mixture(n, k, levels, &mut r)?;
                if !is_transitive(&g) {
                    return Ok(g);
                }
            }
            Err(Error::InvalidParameter("could not sample a hybrid game".into()))
        }
    }
}

fn shuffled(n: usize, r: &mut ChaCha8Rng) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = r.random_range(0..=i);
        v.swap(i, j);
    }
    v
}

fn gaussian(n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

fn add_disks(m: &mut DMatrix<f64>, k: usize, r: &mut ChaCha8Rng) {
    let n = m.nrows();
    for _ in 0..k {
        let (u, v) = (gaussian(n, r), gaussian(n, r));
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += u[i] * v[j] - v[i] * u[j];
            }
        }
    }
}

fn add_transitive(m: &mut DMatrix<f64>, s: &[f64]) {
    for i in 0..s.len() {
        for j in 0..s.len() {
            m[(i, j)] += s[i] - s[j];
        }
    }
}

fn into_range(mut m: DMatrix<f64>) -> Result<PayoffMatrix> {
    let max = m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if max > 1.0 {
        m /= max;
    }
    PayoffMatrix::new(m)
}

fn disk_mixture(n: usize, k: usize, transitive: bool, r: &mut ChaCha8Rng) -> Result<PayoffMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("disk mixture needs n >= 2".into()));
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    if transitive {
        add_transitive(&mut m, &gaussian(n, r));
    }
    add_disks(&mut m, k, r);
    into_range(m)
}

fn layered_mixture(n: usize, k: usize, levels: usize, r: &mut ChaCha8Rng) -> Result<PayoffMatrix> {
    let order = shuffled(n, r);
    let mut level = vec![0.0; n];
    for (pos, &p) in order.iter().enumerate() {
        level[p] = (pos * levels / n) as f64;
    }
    let mut m = DMatrix::<f64>::zeros(n, n);
    add_disks(&mut m, k, r);
    // Adjacent levels differ by one, so this weight makes every cross-level
    // game follow the levels.
    let w = 1.5 * m.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let s: Vec<f64> = level.iter().map(|&l| w * l).collect();
    add_transitive(&mut m, &s);
    into_range(m)
}

fn hybrid(n: usize, r: &mut ChaCha8Rng) -> Result<PayoffMatrix> {
    if n < 2 {
        return Err(Error::InvalidParameter("hybrid game needs n >= 2".into()));
    }
    // Cut the shuffled players into levels of size 1 or >= 3.
    let order = shuffled(n, r);
    let mut sizes = Vec::new();
    let mut left = n;
    while left > 0 {
        let s = if left >= 3 && r.random_bool(0.6) { r.random_range(3..=left.min(5)) } else { 1 };
        sizes.push(s);
        left -= s;
    }
    let mut level = vec![0usize; n];
    let mut start = 0;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (l, &s) in sizes.iter().enumerate() {
        let members = &order[start..start + s];
        for &p in members {
            level[p] = l;
        }
        if s >= 3 {
            let sub = gen_random(GameKind::Cyclic, s, r.random())?;
            for a in 0..s {
                for b in 0..s {
                    m[(members[a], members[b])] = sub.get(a, b);
                }
            }
        }
        start += s;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if level[i] != level[j] {
                let x: f64 = r.random_range(0.01..1.0);
                let x = if level[i] < level[j] { x } else { -x };
                m[(i, j)] = x;
                m[(j, i)] = -x;
            }
        }
    }
    PayoffMatrix::new(m)
}
