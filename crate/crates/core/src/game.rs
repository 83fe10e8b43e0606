//! Antisymmetric payoff matrices and their combinatorial structure.
//!
//! A game on `n` players is a matrix `P` with `P[i][j] = -P[j][i]` and entries in
//! `[-1, 1]`. `P[i][j] > 0` means that `i` beats `j`; `(P + 1) / 2` is the
//! probability of that event. Entries with `|P[i][j]| <= TIE_THRESHOLD` are ties
//! and are stored as exact zeros.

use nalgebra::DMatrix;
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

/// Entries at or below this magnitude are treated as ties.
pub const TIE_THRESHOLD: f64 = 1e-12;
/// Default tolerance on antisymmetry and range when validating raw input.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Default cap on `n` for the exhaustive Hamiltonian-cycle search.
pub const DEFAULT_EXHAUSTIVE_CAP: usize = 15;

/// A validated antisymmetric payoff matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PayoffMatrix {
    m: DMatrix<f64>,
}

impl PayoffMatrix {
    /// Validates `raw` with the default tolerance.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        validate_game(&raw, DEFAULT_TOLERANCE)
    }

    /// Builds a game from the strict upper triangle given by `f(i, j)` for `i < j`.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let x = f(i, j);
                m[(i, j)] = x;
                m[(j, i)] = -x;
            }
        }
        Self::new(m)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        for r in rows {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len() });
            }
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// The zero game on `n` players.
    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    /// Win probability `(P + 1) / 2`.
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        0.5 * (self.m[(i, j)] + 1.0)
    }

    /// `true` iff `i` strictly beats `j`.
    pub fn beats(&self, i: usize, j: usize) -> bool {
        self.m[(i, j)] > 0.0
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n())
            .map(|i| (0..self.n()).map(|j| self.m[(i, j)]).collect())
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
    }
}

/// Checks squareness, antisymmetry and range, then symmetrizes and snaps ties to zero.
pub fn validate_game(raw: &DMatrix<f64>, tol: f64) -> Result<PayoffMatrix> {
    let (rows, cols) = raw.shape();
    if rows != cols {
        return Err(Error::NotSquare { rows, cols });
    }
    let n = rows;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (raw[(i, j)], raw[(j, i)]);
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::OutOfRange { i, j, value: if a.is_finite() { b } else { a } });
            }
            let deviation = (a + b).abs();
            if deviation > tol {
                return Err(Error::NotAntisymmetric { i, j, deviation });
            }
            let mut x = 0.5 * (a - b);
            if x.abs() > 1.0 + tol {
                return Err(Error::OutOfRange { i, j, value: x });
            }
            if x.abs() <= TIE_THRESHOLD {
                x = 0.0;
            }
            let x = x.clamp(-1.0, 1.0);
            m[(i, j)] = x;
            m[(j, i)] = -x;
        }
    }
    Ok(PayoffMatrix { m })
}

/// Symmetric set of observed (training) pairs. The diagonal is never observed.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Mask {
    n: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn full(n: usize) -> Self {
        let mut observed = vec![true; n * n];
        for i in 0..n {
            observed[i * n + i] = false;
        }
        Self { n, observed }
    }

    pub fn empty(n: usize) -> Self {
        Self { n, observed: vec![false; n * n] }
    }

    /// Mask that observes every off-diagonal pair except the given unordered pairs.
    pub fn without_pairs(n: usize, held_out: &[(usize, usize)]) -> Self {
        let mut m = Self::full(n);
        for &(i, j) in held_out {
            m.set(i, j, false);
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        if i != j {
            self.observed[i * self.n + j] = value;
            self.observed[j * self.n + i] = value;
        }
    }

    pub fn observed(&self, i: usize, j: usize) -> bool {
        self.observed[i * self.n + j]
    }

    pub fn is_full(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| i == j || self.observed(i, j)))
    }

    /// Observed unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if self.observed(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Unobserved unordered off-diagonal pairs.
    pub fn held_out_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                if !self.observed(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Connected components of the observation graph.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut label = vec![usize::MAX; self.n];
        let mut comps = Vec::new();
        for s in 0..self.n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = comps.len();
            let mut stack = vec![s];
            let mut members = Vec::new();
            label[s] = id;
            while let Some(v) = stack.pop() {
                members.push(v);
                for w in 0..self.n {
                    if label[w] == usize::MAX && self.observed(v, w) {
                        label[w] = id;
                        stack.push(w);
                    }
                }
            }
            members.sort_unstable();
            comps.push(members);
        }
        comps
    }
}

/// `true` iff no off-diagonal entry is a tie.
pub fn is_regular(p: &PayoffMatrix) -> bool {
    first_tie(p).is_none()
}

pub(crate) fn first_tie(p: &PayoffMatrix) -> Option<(usize, usize)> {
    let n = p.n();
    for i in 0..n {
        for j in (i + 1)..n {
            if p.get(i, j) == 0.0 {
                return Some((i, j));
            }
        }
    }
    None
}

/// A triple `(i, j, k)` with `i > j`, `j > k` but not `i > k`, if one exists.
pub fn transitivity_witness(p: &PayoffMatrix) -> Option<(usize, usize, usize)> {
    let n = p.n();
    for i in 0..n {
        for j in 0..n {
            if !p.beats(i, j) {
                continue;
            }
            for k in 0..n {
                if p.beats(j, k) && !p.beats(i, k) {
                    return Some((i, j, k));
                }
            }
        }
    }
    None
}

pub fn is_transitive(p: &PayoffMatrix) -> bool {
    transitivity_witness(p).is_none()
}

/// `true` iff `cycle` visits every player once and each player beats the next.
pub fn is_win_cycle(p: &PayoffMatrix, cycle: &[usize]) -> bool {
    let n = p.n();
    if cycle.len() != n || n < 3 {
        return false;
    }
    let mut seen = vec![false; n];
    for &c in cycle {
        if c >= n || seen[c] {
            return false;
        }
        seen[c] = true;
    }
    (0..n).all(|k| p.beats(cycle[k], cycle[(k + 1) % n]))
}

/// Finds a Hamiltonian cycle of the strict-win digraph, with the default cap.
pub fn find_hamiltonian_win_cycle(p: &PayoffMatrix) -> Result<Option<Vec<usize>>> {
    find_hamiltonian_win_cycle_capped(p, DEFAULT_EXHAUSTIVE_CAP)
}

/// Tournaments are handled in polynomial time; games with ties fall back to an
/// exhaustive search limited to `cap` players.
pub fn find_hamiltonian_win_cycle_capped(
    p: &PayoffMatrix,
    cap: usize,
) -> Result<Option<Vec<usize>>> {
    let n = p.n();
    if n < 3 {
        return Ok(None);
    }
    if scc_levels(p).len() != 1 {
        return Ok(None);
    }
    if is_regular(p) {
        return Ok(Some(tournament_cycle(p)));
    }
    if n > cap {
        return Err(Error::TooLargeForExhaustive { n, cap });
    }
    let mut path = vec![0usize];
    let mut used = vec![false; n];
    used[0] = true;
    if extend_path(p, &mut path, &mut used) {
        Ok(Some(path))
    } else {
        Ok(None)
    }
}

fn extend_path(p: &PayoffMatrix, path: &mut Vec<usize>, used: &mut [bool]) -> bool {
    let n = p.n();
    let last = *path.last().unwrap();
    if path.len() == n {
        return p.beats(last, path[0]);
    }
    for next in 0..n {
        if !used[next] && p.beats(last, next) {
            used[next] = true;
            path.push(next);
            if extend_path(p, path, used) {
                return true;
            }
            path.pop();
            used[next] = false;
        }
    }
    false
}

// Strongly connected tournament: grow a cycle from a 3-cycle by insertion, or by
// swapping one cycle vertex for an edge b -> a between a dominated and a
// dominating outside vertex.
fn tournament_cycle(p: &PayoffMatrix) -> Vec<usize> {
    let n = p.n();
    let mut cycle = three_cycle(p).expect("strong tournament has a 3-cycle");
    let mut on = vec![false; n];
    for &c in &cycle {
        on[c] = true;
    }
    while cycle.len() < n {
        let k = cycle.len();
        let mut inserted = false;
        for v in (0..n).filter(|&v| !on[v]) {
            if let Some(pos) = (0..k).find(|&i| p.beats(cycle[i], v) && p.beats(v, cycle[(i + 1) % k])) {
                cycle.insert(pos + 1, v);
                on[v] = true;
                inserted = true;
                break;
            }
        }
        if inserted {
            continue;
        }
        let outside: Vec<usize> = (0..n).filter(|&v| !on[v]).collect();
        let dominated: Vec<usize> = outside.iter().copied().filter(|&v| p.beats(cycle[0], v)).collect();
        let dominating: Vec<usize> = outside.iter().copied().filter(|&v| p.beats(v, cycle[0])).collect();
        let (b, a) = dominated
            .iter()
            .flat_map(|&b| dominating.iter().map(move |&a| (b, a)))
            .find(|&(b, a)| p.beats(b, a))
            .expect("strong connectivity gives an edge from dominated to dominating");
        let removed = cycle[1];
        on[removed] = false;
        cycle[1] = b;
        cycle.insert(2, a);
        on[a] = true;
        on[b] = true;
    }
    cycle
}

fn three_cycle(p: &PayoffMatrix) -> Option<Vec<usize>> {
    let n = p.n();
    for i in 0..n {
        for j in 0..n {
            if !p.beats(i, j) {
                continue;
            }
            for k in 0..n {
                if p.beats(j, k) && p.beats(k, i) {
                    return Some(vec![i, j, k]);
                }
            }
        }
    }
    None
}

/// Strongly connected components of the strict-win digraph, dominant level first.
pub fn scc_levels(p: &PayoffMatrix) -> Vec<Vec<usize>> {
    let n = p.n();
    let mut g = DiGraph::<(), ()>::with_capacity(n, n * n / 2);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..n {
            if p.beats(i, j) {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut levels: Vec<Vec<usize>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<usize> = c.into_iter().map(|x| x.index()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    levels.reverse();
    levels
}

/// Applies an odd function entrywise. Oddness is spot-checked on a grid.
pub fn apply_basis(p: &PayoffMatrix, phi: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    for k in 1..=20 {
        let x = k as f64 / 20.0;
        let (a, b) = (phi(x), phi(-x));
        if (a + b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::NotOdd { x });
        }
    }
    let n = p.n();
    Ok(DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { phi(p.get(i, j)) }))
}

/// `true` iff `P[i][j] > 0 <=> Q[i][j] > 0` for all `i != j`.
pub fn same_sign(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<bool> {
    if p.shape() != q.shape() {
        return Err(Error::SizeMismatch { expected: p.nrows(), found: q.nrows() });
    }
    let n = p.nrows();
    Ok((0..n).all(|i| (0..n).all(|j| i == j || (p[(i, j)] > 0.0) == (q[(i, j)] > 0.0))))
}

/// Appends a copy of player `i`; the copy ties with the original.
pub fn duplicate_player(p: &PayoffMatrix, i: usize) -> Result<PayoffMatrix> {
    let n = p.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    let src = |k: usize| if k == n { i } else { k };
    let m = DMatrix::from_fn(n + 1, n + 1, |a, b| {
        let (sa, sb) = (src(a), src(b));
        if sa == sb {
            0.0
        } else {
            p.get(sa, sb)
        }
    });
    Ok(PayoffMatrix { m })
}

/// Removes player `i`, shifting later players down.
pub fn remove_player(p: &PayoffMatrix, i: usize) -> Result<PayoffMatrix> {
    let n = p.n();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    Ok(PayoffMatrix { m: p.matrix().clone().remove_row(i).remove_column(i) })
}

/// Relabels players: entry `(a, b)` of the result is `P[perm[a]][perm[b]]`.
pub fn permute(p: &PayoffMatrix, perm: &[usize]) -> Result<PayoffMatrix> {
    let n = p.n();
    if perm.len() != n {
        return Err(Error::SizeMismatch { expected: n, found: perm.len() });
    }
    Ok(PayoffMatrix { m: DMatrix::from_fn(n, n, |a, b| p.get(perm[a], perm[b])) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rps() -> PayoffMatrix {
        PayoffMatrix::from_rows(&[vec![0., 1., -1.], vec![-1., 0., 1.], vec![1., -1., 0.]]).unwrap()
    }

    #[test]
    fn validation_errors() {
        let raw = DMatrix::from_row_slice(2, 3, &[0., 0., 0., 0., 0., 0.]);
        assert!(matches!(validate_game(&raw, 1e-9), Err(Error::NotSquare { .. })));
        let raw = DMatrix::from_row_slice(2, 2, &[0., 0.5, 0.4, 0.]);
        assert!(matches!(validate_game(&raw, 1e-9), Err(Error::NotAntisymmetric { .. })));
        let raw = DMatrix::from_row_slice(2, 2, &[0., 1.5, -1.5, 0.]);
        assert!(matches!(validate_game(&raw, 1e-9), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn ties_are_snapped() {
        let p = PayoffMatrix::from_upper(3, |i, j| if (i, j) == (0, 1) { 1e-13 } else { 0.5 }).unwrap();
        assert_eq!(p.get(0, 1), 0.0);
        assert!(!is_regular(&p));
    }

    #[test]
    fn rps_is_cyclic_not_transitive() {
        let p = rps();
        assert!(is_regular(&p));
        assert!(!is_transitive(&p));
        let c = find_hamiltonian_win_cycle(&p).unwrap().unwrap();
        assert!(is_win_cycle(&p, &c));
        assert_eq!(scc_levels(&p), vec![vec![0, 1, 2]]);
    }

    #[test]
    fn transitive_levels_are_singletons() {
        let p = PayoffMatrix::from_upper(4, |_, _| 0.3).unwrap();
        assert!(is_transitive(&p));
        assert_eq!(scc_levels(&p), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert_eq!(find_hamiltonian_win_cycle(&p).unwrap(), None);
    }

    #[test]
    fn duplicate_then_remove_round_trips() {
        let p = PayoffMatrix::from_upper(2, |_, _| 0.4).unwrap();
        let d = duplicate_player(&p, 0).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.get(2, 0), 0.0);
        assert_eq!(d.get(2, 1), d.get(0, 1));
        assert_eq!(remove_player(&d, 2).unwrap(), p);
    }

    #[test]
    fn apply_basis_rejects_even_functions() {
        let p = rps();
        assert!(matches!(apply_basis(&p, |x| x * x), Err(Error::NotOdd { .. })));
        let q = apply_basis(&p, |x| 0.5 * x).unwrap();
        assert!(same_sign(p.matrix(), &q).unwrap());
    }

    #[test]
    fn mask_components() {
        let mut m = Mask::empty(4);
        m.set(0, 1, true);
        m.set(2, 3, true);
        assert_eq!(m.components(), vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(m.pairs(), vec![(0, 1), (2, 3)]);
    }
}
