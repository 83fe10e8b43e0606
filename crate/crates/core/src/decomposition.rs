//! Disk games and decompositions of antisymmetric matrices into sums of disks.
//!
//! `Disk(u, v) = u v^T - v u^T` is the elementary rank-two antisymmetric matrix.
//! Writing `u_i = rho_i cos(theta_i)`, `v_i = rho_i sin(theta_i)` gives entries
//! `rho_i rho_j sin(theta_j - theta_i)`, so a disk game is a set of points in
//! the plane, and `i` beats `j` iff `j` lies less than half a turn
//! counterclockwise of `i`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::elo::{sigmoid, softplus};
use crate::error::{Error, Result};
use crate::game::{Mask, PayoffMatrix};

/// Eigenvalues at or below this are dropped by [`schur_decompose`].
pub const SCHUR_DROP: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disk {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarForm {
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiskClass {
    Transitive,
    Cyclic,
    Zero,
}

impl Disk {
    pub fn new(u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::SizeMismatch { expected: u.len(), found: v.len() });
        }
        Ok(Self { u, v })
    }

    /// `Disk(x, 1)`: the additive game `x_i - x_j`.
    pub fn additive(x: Vec<f64>) -> Self {
        let n = x.len();
        Self { u: x, v: vec![1.0; n] }
    }

    pub fn n(&self) -> usize {
        self.u.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.u[i] * self.v[j] - self.v[i] * self.u[j]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { self.entry(i, j) })
    }

    pub fn to_polar(&self) -> PolarForm {
        let rho = self.u.iter().zip(&self.v).map(|(a, b)| a.hypot(*b)).collect();
        let theta = self.u.iter().zip(&self.v).map(|(a, b)| b.atan2(*a).rem_euclid(2.0 * PI)).collect();
        PolarForm { rho, theta }
    }

    pub fn from_polar(p: &PolarForm) -> Result<Self> {
        if p.rho.len() != p.theta.len() {
            return Err(Error::SizeMismatch { expected: p.rho.len(), found: p.theta.len() });
        }
        let u = p.rho.iter().zip(&p.theta).map(|(r, t)| r * t.cos()).collect();
        let v = p.rho.iter().zip(&p.theta).map(|(r, t)| r * t.sin()).collect();
        Ok(Self { u, v })
    }

    pub fn scaled(&self, s: f64) -> Self {
        let r = s.sqrt();
        Self { u: self.u.iter().map(|x| x * r).collect(), v: self.v.iter().map(|x| x * r).collect() }
    }
}

/// Transitive iff the points with `rho > 0` fit in an open half-plane through the
/// origin, i.e. some circular gap between consecutive angles exceeds `pi`.
/// It is zero when its entries vanish relative to its largest squared radius.
pub fn classify_disk(d: &Disk) -> DiskClass {
    let polar = d.to_polar();
    let r2 = polar.rho.iter().fold(0.0f64, |a, r| a.max(r * r));
    if r2 == 0.0 || d.matrix().iter().all(|x| x.abs() <= 1e-12 * r2) {
        return DiskClass::Zero;
    }
    let mut angles: Vec<f64> =
        polar.rho.iter().zip(&polar.theta).filter(|(r, _)| **r > 0.0).map(|(_, t)| *t).collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let k = angles.len();
    let mut max_gap = angles[0] + 2.0 * PI - angles[k - 1];
    for w in angles.windows(2) {
        max_gap = max_gap.max(w[1] - w[0]);
    }
    if max_gap > PI {
        DiskClass::Transitive
    } else {
        DiskClass::Cyclic
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Schur,
    Melo,
    NormalBce,
    Constructed,
    Neural,
}

/// An optional transitive disk plus a list of further disks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub n: usize,
    pub provenance: Provenance,
    pub transitive: Option<Disk>,
    pub cyclic: Vec<Disk>,
}

impl Decomposition {
    pub fn k(&self) -> usize {
        self.cyclic.len()
    }

    /// Sum of all disks.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for d in self.transitive.iter().chain(&self.cyclic) {
            m += d.matrix();
        }
        m
    }

    pub fn cyclic_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut m = DMatrix::zeros(n, n);
        for d in &self.cyclic {
            m += d.matrix();
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `2 sigmoid(x) - 1`.
    Sigmoid,
}

pub fn reconstruct(dec: &Decomposition, t: Transform) -> DMatrix<f64> {
    let m = dec.matrix();
    match t {
        Transform::Identity => m,
        Transform::Sigmoid => m.map(|x| (0.5 * x).tanh()),
    }
}

/// Real Schur form of an antisymmetric matrix as orthogonal disks, ordered by
/// decreasing magnitude, each with `u` and `v` of equal norm.
pub fn schur_decompose(p: &DMatrix<f64>) -> Result<Decomposition> {
    let (r, c) = p.shape();
    if r != c {
        return Err(Error::NotSquare { rows: r, cols: c });
    }
    let n = r;
    let mut cyclic = Vec::new();
    if n >= 2 {
        let s = p.transpose() * p;
        let eig = SymmetricEigen::new(s);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut blocks: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
        for &k in &order {
            let mut q = eig.eigenvectors.column(k).into_owned();
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&q);
                    q.axpy(-c, b, 1.0);
                }
            }
            let norm = q.norm();
            if norm < 0.5 {
                continue;
            }
            q /= norm;
            let pq = p * &q;
            let lam = pq.norm();
            if lam <= SCHUR_DROP {
                continue;
            }
            let mut q2 = -pq / lam;
            for b in &basis {
                let c = b.dot(&q2);
                q2.axpy(-c, b, 1.0);
            }
            q2 -= q.dot(&q2) * &q;
            q2 /= q2.norm();
            basis.push(q.clone());
            basis.push(q2.clone());
            blocks.push((lam, q, q2));
        }
        blocks.sort_by(|a, b| b.0.total_cmp(&a.0));
        for (lam, q1, q2) in blocks {
            let s = lam.sqrt();
            let mut u: Vec<f64> = q1.iter().map(|x| x * s).collect();
            let mut v: Vec<f64> = q2.iter().map(|x| x * s).collect();
            canonical_sign(&mut u, &mut v);
            cyclic.push(Disk { u, v });
        }
    }
    Ok(Decomposition { n, provenance: Provenance::Schur, transitive: None, cyclic })
}

/// Flips `(u, v)` so the first entry of `u` with magnitude above 1e-9 is positive.
fn canonical_sign(u: &mut [f64], v: &mut [f64]) {
    if let Some(&x) = u.iter().find(|x| x.abs() > 1e-9) {
        if x < 0.0 {
            u.iter_mut().for_each(|a| *a = -*a);
            v.iter_mut().for_each(|a| *a = -*a);
        }
    }
}

/// Keeps the first `k` disks.
pub fn truncate(dec: &Decomposition, k: usize) -> Result<Decomposition> {
    if k > dec.cyclic.len() {
        return Err(Error::KTooLarge { requested: k, available: dec.cyclic.len() });
    }
    Ok(Decomposition { cyclic: dec.cyclic[..k].to_vec(), ..dec.clone() })
}

/// Optimizer settings shared by the masked low-rank fits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when the relative loss change over one accepted step falls below this.
    pub rel_tolerance: f64,
    pub seed: u64,
    /// Use gradient descent even when an exact solution is available.
    pub force_gradient: bool,
    /// Start from small random factors instead of a spectral guess.
    pub random_init: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 50_000, rel_tolerance: 1e-12, seed: 0, force_gradient: false, random_init: false }
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub decomposition: Decomposition,
    pub loss: f64,
    pub iterations: usize,
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k > n / 2 {
        return Err(Error::KTooLarge { requested: k, available: n / 2 });
    }
    Ok(())
}

fn check_mask(p: &PayoffMatrix, mask: Option<&Mask>) -> Result<Mask> {
    match mask {
        Some(m) if m.n() != p.n() => Err(Error::SizeMismatch { expected: p.n(), found: m.n() }),
        Some(m) => Ok(m.clone()),
        None => Ok(Mask::full(p.n())),
    }
}

/// Transitive part `Disk(P 1 / n, 1)` plus `k` disks fitted to the residual in
/// least squares over the observed pairs. Unobserved entries count as zero in
/// the row averages.
pub fn melo_decompose(p: &PayoffMatrix, k: usize, mask: Option<&Mask>, opts: &FitOptions) -> Result<FitReport> {
    let n = p.n();
    check_k(n, k)?;
    let mask = check_mask(p, mask)?;
    let ut: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| mask.observed(i, j)).map(|j| p.get(i, j)).sum::<f64>() / n as f64)
        .collect();
    let t = Disk::additive(ut);
    let tm = t.matrix();
    let resid = DMatrix::from_fn(n, n, |i, j| if mask.observed(i, j) { p.get(i, j) - tm[(i, j)] } else { 0.0 });
    let mut report = if mask.is_full() && !opts.force_gradient {
        let full = schur_decompose(&resid)?;
        let dec = truncate(&full, k.min(full.k()))?;
        let loss = masked_l2(&resid, &dec.matrix(), &mask);
        FitReport { decomposition: dec, loss, iterations: 0 }
    } else {
        fit_low_rank(&resid, k, &mask, opts, Loss::L2)?
    };
    report.decomposition.provenance = Provenance::Melo;
    report.decomposition.transitive = Some(t);
    Ok(report)
}

fn masked_l2(target: &DMatrix<f64>, c: &DMatrix<f64>, mask: &Mask) -> f64 {
    let mut l = 0.0;
    for (i, j) in mask.pairs() {
        l += (target[(i, j)] - c[(i, j)]).powi(2);
    }
    l
}

/// `k` disks `C` minimizing the cross-entropy between `(P + 1) / 2` and
/// `sigmoid(C)` over observed ordered pairs.
pub fn fit_normal_bce(p: &PayoffMatrix, k: usize, mask: Option<&Mask>, opts: &FitOptions) -> Result<FitReport> {
    let n = p.n();
    check_k(n, k)?;
    let mask = check_mask(p, mask)?;
    let target = DMatrix::from_fn(n, n, |i, j| p.prob(i, j));
    let mut r = fit_low_rank(&target, k, &mask, opts, Loss::Bce)?;
    r.decomposition.provenance = Provenance::NormalBce;
    Ok(r)
}

#[derive(Clone, Copy)]
enum Loss {
    /// Target is the matrix to approximate.
    L2,
    /// Target is the win probability.
    Bce,
}

impl Loss {
    /// Loss of one unordered pair (both orderings) and its derivative in `C_ij`.
    fn pair(self, target: f64, c: f64) -> (f64, f64) {
        match self {
            Loss::L2 => ((target - c).powi(2), 2.0 * (c - target)),
            // bce(q, s(c)) + bce(1 - q, s(-c)) = 2 (softplus(c) - q c)
            Loss::Bce => (2.0 * (softplus(c) - target * c), 2.0 * (sigmoid(c) - target)),
        }
    }
}

fn disks_matrix(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    u * v.transpose() - v * u.transpose()
}

fn total_loss(target: &DMatrix<f64>, c: &DMatrix<f64>, mask: &Mask, loss: Loss) -> f64 {
    mask.pairs().iter().map(|&(i, j)| loss.pair(target[(i, j)], c[(i, j)]).0).sum()
}

/// Quasi-Newton descent on `n x k` factors. The result is re-expressed as the
/// Schur form of the fitted matrix, which orthogonalizes the disks without
/// changing their sum.
fn fit_low_rank(target: &DMatrix<f64>, k: usize, mask: &Mask, opts: &FitOptions, loss: Loss) -> Result<FitReport> {
    let n = target.nrows();
    let (u, v) = if opts.random_init {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let mut draw = || DMatrix::from_fn(n, k, |_, _| 0.1 * Distribution::<f64>::sample(&StandardNormal, &mut rng));
        (draw(), draw())
    } else {
        let start = match loss {
            Loss::L2 => DMatrix::from_fn(n, n, |i, j| if mask.observed(i, j) { target[(i, j)] } else { 0.0 }),
            Loss::Bce => DMatrix::from_fn(n, n, |i, j| {
                if mask.observed(i, j) {
                    let q: f64 = target[(i, j)].clamp(1e-6, 1.0 - 1e-6);
                    (q / (1.0 - q)).ln()
                } else {
                    0.0
                }
            }),
        };
        factors(&schur_decompose(&start)?, n, k)
    };
    let pairs = mask.pairs();
    let nk = n * k;
    let split = |x: &DVector<f64>| -> (DMatrix<f64>, DMatrix<f64>) {
        (DMatrix::from_column_slice(n, k, &x.as_slice()[..nk]), DMatrix::from_column_slice(n, k, &x.as_slice()[nk..]))
    };
    let eval = |x: &DVector<f64>| -> (f64, DVector<f64>) {
        let (u, v) = split(x);
        let c = disks_matrix(&u, &v);
        let mut l = 0.0;
        let mut g = DMatrix::<f64>::zeros(n, n);
        for &(i, j) in &pairs {
            let (li, d) = loss.pair(target[(i, j)], c[(i, j)]);
            l += li;
            g[(i, j)] = d;
            g[(j, i)] = -d;
        }
        // dL/du = G v, dL/dv = -G u for antisymmetric G.
        let gu = &g * &v;
        let gv = -(&g * &u);
        (l, DVector::from_iterator(2 * nk, gu.iter().chain(gv.iter()).copied()))
    };
    let mut x = DVector::from_iterator(2 * nk, u.iter().chain(v.iter()).copied());
    let (mut l, mut g) = eval(&x);
    let mut iterations = 0;
    // L-BFGS with memory 10 and Armijo backtracking.
    let mut hist: std::collections::VecDeque<(DVector<f64>, DVector<f64>, f64)> = Default::default();
    while k > 0 && iterations < opts.max_iterations && g.norm_squared() > 0.0 {
        iterations += 1;
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * s.dot(&q);
            q.axpy(-a, y, 1.0);
            alphas.push(a);
        }
        let gamma = hist.back().map_or(1.0 / (n as f64 * g.norm().max(1.0)), |(s, y, _)| s.dot(y) / y.dot(y));
        q *= gamma;
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * y.dot(&q);
            q.axpy(a - b, s, 1.0);
        }
        let mut dir = -q;
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            hist.clear();
            dir = -&g;
            slope = -g.norm_squared();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let x2 = &x + t * &dir;
            let (l2, g2) = eval(&x2);
            if l2 <= l + 1e-4 * t * slope {
                accepted = Some((x2, l2, g2));
                break;
            }
            t *= 0.5;
        }
        let Some((x2, l2, g2)) = accepted else { break };
        let rel = (l - l2).abs() / l.abs().max(1e-300);
        let s = &x2 - &x;
        let y = &g2 - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            if hist.len() == 10 {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        x = x2;
        l = l2;
        g = g2;
        if rel < opts.rel_tolerance {
            break;
        }
    }
    let (u, v) = split(&x);
    let dec = schur_decompose(&disks_matrix(&u, &v))?;
    let kk = dec.k().min(k);
    let mut dec = truncate(&dec, kk)?;
    dec.transitive = None;
    let l = total_loss(target, &dec.matrix(), mask, loss);
    Ok(FitReport { decomposition: dec, loss: l, iterations })
}

fn factors(dec: &Decomposition, n: usize, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut u = DMatrix::zeros(n, k);
    let mut v = DMatrix::zeros(n, k);
    for (c, d) in dec.cyclic.iter().take(k).enumerate() {
        for i in 0..n {
            u[(i, c)] = d.u[i];
            v[(i, c)] = d.v[i];
        }
    }
    (u, v)
}

/// Writes a transitive disk as `Disk(s * c, c)` with `c > 0` where possible:
/// among the equivalent representations, the one whose first vector sums to
/// zero. Returns `(strength, consistency)`.
pub fn strength_consistency(d: &Disk) -> (Vec<f64>, Vec<f64>) {
    let n = d.n();
    let dec = schur_decompose(&d.matrix()).expect("square");
    let Some(top) = dec.cyclic.first() else {
        return (vec![0.0; n], vec![1.0; n]);
    };
    let (s1, s2): (f64, f64) = (top.u.iter().sum(), top.v.iter().sum());
    let rotate = |phi: f64| -> (Vec<f64>, Vec<f64>) {
        let (s, c) = phi.sin_cos();
        let a = (0..n).map(|i| c * top.u[i] + s * top.v[i]).collect();
        let b = (0..n).map(|i| -s * top.u[i] + c * top.v[i]).collect();
        (a, b)
    };
    let phi = (-s1).atan2(s2);
    let (mut a, mut c) = rotate(phi);
    if c.iter().sum::<f64>() < 0.0 {
        (a, c) = rotate(phi + PI);
    }
    let strength = a.iter().zip(&c).map(|(x, y)| if *y != 0.0 { x / y } else { 0.0 }).collect();
    (strength, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{five_player_game, four_player_game};

    #[test]
    fn polar_round_trip() {
        let d = Disk::new(vec![0.3, -1.2, 0.0, 2.0], vec![0.5, 0.1, -0.7, 0.0]).unwrap();
        let back = Disk::from_polar(&d.to_polar()).unwrap();
        assert!((back.matrix() - d.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn classification_examples() {
        let rps = Disk::from_polar(&PolarForm { rho: vec![1.0; 3], theta: vec![0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0] }).unwrap();
        assert_eq!(classify_disk(&rps), DiskClass::Cyclic);
        assert_eq!(classify_disk(&Disk::additive(vec![1.0, 0.5, -2.0])), DiskClass::Transitive);
        assert_eq!(classify_disk(&Disk::new(vec![0.0; 3], vec![1.0; 3]).unwrap()), DiskClass::Zero);
    }

    #[test]
    fn five_player_schur_components() {
        let dec = schur_decompose(five_player_game().matrix()).unwrap();
        assert_eq!(dec.k(), 2);
        let p1 = [[0.0, 0.03, 0.15, 0.03, -0.34], [0.0, 0.0, -0.35, 0.02, 0.84], [0.0, 0.0, 0.0, 0.42, 0.04], [0.0, 0.0, 0.0, 0.0, 0.994]];
        let m = dec.cyclic[0].matrix();
        for i in 0..4 {
            for j in (i + 1)..5 {
                assert!((m[(i, j)] - p1[i][j]).abs() < 2e-2);
            }
        }
        assert!((dec.matrix() - five_player_game().matrix()).abs().max() < 1e-10);
        for d in &dec.cyclic {
            assert_eq!(classify_disk(d), DiskClass::Cyclic);
        }
    }

    #[test]
    fn melo_on_four_player_game() {
        let r = melo_decompose(&four_player_game(), 0, None, &FitOptions::default()).unwrap();
        let m = r.decomposition.matrix();
        let expected = [[0.0, 0.57, 0.29, 0.67], [0.0, 0.0, -0.28, 0.1], [0.0, 0.0, 0.0, 0.38]];
        for i in 0..3 {
            for j in (i + 1)..4 {
                assert!((m[(i, j)] - expected[i][j]).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn normal_fit_on_four_player_game() {
        let r = fit_normal_bce(&four_player_game(), 1, None, &FitOptions::default()).unwrap();
        let m = reconstruct(&r.decomposition, Transform::Sigmoid);
        let expected = [[0.0, 0.82, 0.27, 0.54], [0.0, 0.0, -0.19, 0.18], [0.0, 0.0, 0.0, 0.14]];
        for i in 0..3 {
            for j in (i + 1)..4 {
                assert!((m[(i, j)] - expected[i][j]).abs() < 2e-2, "{i}{j}: {}", m[(i, j)]);
            }
        }
        let (s, c) = strength_consistency(&r.decomposition.cyclic[0]);
        assert!(c.iter().all(|&x| x > 0.0));
        let lo = s.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let norm: Vec<f64> = s.iter().map(|x| (x - lo) / (hi - lo)).collect();
        for (a, b) in norm.iter().zip([1.0, 0.22, 0.48, 0.0]) {
            assert!((a - b).abs() < 2e-2, "{norm:?}");
        }
    }

    #[test]
    fn gradient_melo_agrees_with_exact_on_full_mask() {
        let p = crate::generators::gen_random(crate::generators::GameKind::DiskMixture { k: 2, transitive: true }, 7, 3).unwrap();
        for k in 1..=3 {
            let exact = melo_decompose(&p, k, None, &FitOptions::default()).unwrap();
            let opts = FitOptions { force_gradient: true, random_init: true, seed: 11, ..Default::default() };
            let gd = melo_decompose(&p, k, None, &opts).unwrap();
            let diff = (exact.decomposition.matrix() - gd.decomposition.matrix()).abs().max();
            assert!(diff < 1e-6, "k = {k}: {diff} after {} ({})", gd.iterations, gd.loss);
        }
    }

    #[test]
    fn truncate_checks_k() {
        let dec = schur_decompose(five_player_game().matrix()).unwrap();
        assert_eq!(truncate(&dec, 1).unwrap().k(), 1);
        assert!(matches!(truncate(&dec, 3), Err(Error::KTooLarge { .. })));
    }
}
