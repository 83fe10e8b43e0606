//! Differentiable path from disk-network outputs to the training loss.

use serde::{Deserialize, Serialize};

use super::mlp::{Float, Mlp};
use super::tape::{Tape, Var};
use super::{LearnConfig, VtMode};
use crate::error::{Error, Result};

/// Floor applied to the sign and basis normalizers.
pub const NORMALIZER_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub proba: f64,
    pub basis: f64,
    pub sign_t: f64,
    pub sign_c: f64,
    /// Residual non-orthogonality of a positive `v^T`; zero unless that mode is on.
    pub gs: f64,
    pub total: f64,
}

/// Post-orthogonalization per-player vectors, as tape variables.
pub(crate) struct Vectors {
    pub ut: Option<Vec<Var>>,
    pub vt: Option<Vec<Var>>,
    pub cyclic: Vec<(Vec<Var>, Vec<Var>)>,
}

pub(crate) struct DiskGraph {
    pub t: Option<Vec<Var>>,
    pub c: Vec<Var>,
    pub d: Vec<Var>,
    pub gs_penalty: Option<Var>,
    pub vectors: Vectors,
}

fn orthogonalize(tape: &mut Tape, mut v: Vec<Var>, against: &[Vec<Var>], delta: f64) -> Vec<Var> {
    for b in against {
        let bb = tape.dot(b, b);
        let den = tape.max_const(bb, delta);
        let bv = tape.dot(b, &v);
        let c = tape.div(bv, den);
        v = v.iter().zip(b).map(|(&vi, &bi)| tape.axpy(vi, c, bi)).collect();
    }
    v
}

fn disk_entry(tape: &mut Tape, u: &[Var], v: &[Var], i: usize, j: usize) -> [(Var, f64); 4] {
    let (ui, uj, vi, vj) = (tape.value(u[i]), tape.value(u[j]), tape.value(v[i]), tape.value(v[j]));
    [(u[i], vj), (v[j], ui), (v[i], -uj), (u[j], -vi)]
}

fn entry_value(tape: &Tape, partials: &[(Var, f64)]) -> f64 {
    // Each disk entry is bilinear: half the sum of input * partial.
    0.5 * partials.iter().map(|&(v, d)| tape.value(v) * d).sum::<f64>()
}

/// Records the disk-network outputs (`n` rows of width `2K + 2`) as the first
/// `n (2K + 2)` leaves and builds `T`, `C` and `D` for the given pairs.
pub(crate) fn disk_graph(
    tape: &mut Tape,
    out: &[f64],
    n: usize,
    cfg: &LearnConfig,
    learn_t: bool,
    pairs: &[(usize, usize)],
) -> DiskGraph {
    assert!(tape.is_empty());
    let w = 2 * cfg.k + 2;
    assert_eq!(out.len(), n * w);
    for &x in out {
        tape.leaf(x);
    }
    let col = |c: usize| -> Vec<Var> { (0..n).map(|i| Var::from_index(i * w + c)).collect() };
    let delta = cfg.gs_delta;
    let mut basis: Vec<Vec<Var>> = Vec::new();
    let mut gs_penalty = None;
    let (ut, vt) = if learn_t {
        let ut = col(0);
        match cfg.vt_mode {
            VtMode::FixedOnes => {
                let ones: Vec<Var> = (0..n).map(|_| tape.leaf(1.0)).collect();
                basis.push(ones.clone());
                (Some(ut), Some(ones))
            }
            VtMode::LearntPositive => {
                let raw = orthogonalize(tape, col(1), std::slice::from_ref(&ut), delta);
                let vt: Vec<Var> = raw.iter().map(|&x| tape.softplus(x)).collect();
                let uv = tape.dot(&ut, &vt);
                let uu = tape.dot(&ut, &ut);
                let vv = tape.dot(&vt, &vt);
                let uv2 = tape.mul(uv, uv);
                let norms = tape.mul(uu, vv);
                let den = tape.max_const(norms, delta);
                gs_penalty = Some(tape.div(uv2, den));
                basis.push(ut.clone());
                basis.push(vt.clone());
                (Some(ut), Some(vt))
            }
        }
    } else {
        (None, None)
    };
    let mut cyclic = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let u = orthogonalize(tape, col(2 + 2 * k), &basis, delta);
        basis.push(u.clone());
        let v = orthogonalize(tape, col(3 + 2 * k), &basis, delta);
        basis.push(v.clone());
        cyclic.push((u, v));
    }
    let mut t_vars = learn_t.then(|| Vec::with_capacity(pairs.len()));
    let mut c_vars = Vec::with_capacity(pairs.len());
    let mut d_vars = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let t = match (&ut, &vt) {
            (Some(u), Some(v)) => {
                let e = disk_entry(tape, u, v, i, j);
                let val = entry_value(tape, &e);
                Some(tape.push(val, e))
            }
            _ => None,
        };
        let mut partials = Vec::with_capacity(4 * cfg.k);
        for (u, v) in &cyclic {
            partials.extend(disk_entry(tape, u, v, i, j));
        }
        let val = entry_value(tape, &partials);
        let c = tape.push(val, partials);
        let d = match t {
            Some(t) => tape.add(t, c),
            None => tape.push(val, [(c, 1.0)]),
        };
        if let (Some(tv), Some(t)) = (t_vars.as_mut(), t) {
            tv.push(t);
        }
        c_vars.push(c);
        d_vars.push(d);
    }
    DiskGraph { t: t_vars, c: c_vars, d: d_vars, gs_penalty, vectors: Vectors { ut, vt, cyclic } }
}

/// Index of the basis function closest to `p`, lowest index on ties.
pub(crate) fn assign(phi: &[f64], p: f64) -> usize {
    let mut best = 0;
    for m in 1..phi.len() {
        if (phi[m] - p).abs() < (phi[best] - p).abs() {
            best = m;
        }
    }
    best
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Hinge on `-x p` plus squares on zero-payoff pairs, over the normalizer.
fn sign_term(tape: &mut Tape, xs: &[Var], p: &[f64], norm: Var) -> Var {
    let mut val = 0.0;
    let mut partials = Vec::new();
    for (&x, &pj) in xs.iter().zip(p) {
        let xv = tape.value(x);
        if pj == 0.0 {
            val += xv * xv;
            partials.push((x, 2.0 * xv));
        } else if -xv * pj > 0.0 {
            val += -xv * pj;
            partials.push((x, -pj));
        }
    }
    let num = tape.push(val, partials);
    tape.div(num, norm)
}

pub(crate) struct LossNodes {
    pub total: Var,
    pub breakdown: LossBreakdown,
    pub assignments: Vec<usize>,
    /// `phi[j * M + m]` leaves.
    pub phi: Vec<Var>,
}

/// Adds the loss on top of a disk graph. `phi` holds `M` basis values per pair
/// and `rho` permutes pair indices for the monotonicity term.
pub(crate) fn loss_graph(
    tape: &mut Tape,
    g: &DiskGraph,
    phi_values: &[f64],
    p: &[f64],
    rho: &[usize],
    cfg: &LearnConfig,
) -> Result<LossNodes> {
    let jn = g.d.len();
    if jn == 0 {
        return Err(Error::EmptyTrainSet);
    }
    let m = cfg.m;
    assert_eq!(phi_values.len(), jn * m);
    assert_eq!(rho.len(), jn);
    let phi: Vec<Var> = phi_values.iter().map(|&x| tape.leaf(x)).collect();
    let jf = jn as f64;

    let assignments: Vec<usize> = (0..jn).map(|j| assign(&phi_values[j * m..(j + 1) * m], p[j])).collect();
    let mut val = 0.0;
    let mut partials = Vec::with_capacity(jn);
    for j in 0..jn {
        let r = phi_values[j * m + assignments[j]] - p[j];
        val += r * r / (4.0 * jf);
        partials.push((phi[j * m + assignments[j]], 2.0 * r / (4.0 * jf)));
    }
    let proba = tape.push(val, partials);

    let dv: Vec<f64> = g.d.iter().map(|&d| tape.value(d)).collect();
    let (mut num, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut pn, mut p1, mut p2) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..jn {
        let r = rho[j];
        let dd = dv[j] - dv[r];
        s1 += dd.abs();
        let sd = sgn(dd);
        p1.push((g.d[j], sd));
        p1.push((g.d[r], -sd));
        for k in 0..m {
            let dp = phi_values[j * m + k] - phi_values[r * m + k];
            s2 += dp.abs();
            let sp = sgn(dp);
            p2.push((phi[j * m + k], sp));
            p2.push((phi[r * m + k], -sp));
            if -dd * dp > 0.0 {
                num += -dd * dp;
                pn.push((g.d[j], -dp));
                pn.push((g.d[r], dp));
                pn.push((phi[j * m + k], -dd));
                pn.push((phi[r * m + k], dd));
            }
        }
    }
    let num = tape.push(num, pn);
    let s1 = tape.push(s1, p1);
    let s2 = tape.push(s2, p2);
    let (v1, v2) = (tape.value(s1), tape.value(s2));
    let nb = tape.push(v1 * v2 / (4.0 * jf), [(s1, v2 / (4.0 * jf)), (s2, v1 / (4.0 * jf))]);
    let nb = tape.max_const(nb, NORMALIZER_FLOOR);
    let basis = tape.div(num, nb);

    let abs_p: f64 = p.iter().map(|x| x.abs()).sum();
    let mean_d: f64 = dv.iter().map(|x| x.abs()).sum::<f64>() / jf;
    let ns = tape.push(mean_d * abs_p, g.d.iter().zip(&dv).map(|(&d, &x)| (d, sgn(x) * abs_p / jf)).collect::<Vec<_>>());
    let ns = tape.max_const(ns, NORMALIZER_FLOOR);
    let sign_t = g.t.as_ref().map(|t| sign_term(tape, t, p, ns));
    let sign_c = sign_term(tape, &g.c, p, ns);

    let mut terms = vec![(proba, 1.0), (basis, cfg.omega_basis), (sign_c, cfg.omega_c)];
    if let Some(t) = sign_t {
        terms.push((t, cfg.omega_t));
    }
    if let Some(gs) = g.gs_penalty {
        terms.push((gs, cfg.omega_gs));
    }
    let total_val: f64 = terms.iter().map(|&(v, w)| w * tape.value(v)).sum();
    let total = tape.push(total_val, terms);
    let breakdown = LossBreakdown {
        proba: tape.value(proba),
        basis: tape.value(basis),
        sign_t: sign_t.map_or(0.0, |t| tape.value(t)),
        sign_c: tape.value(sign_c),
        gs: g.gs_penalty.map_or(0.0, |v| tape.value(v)),
        total: total_val,
    };
    Ok(LossNodes { total, breakdown, assignments, phi })
}

/// Inputs to one loss evaluation.
pub(crate) struct Problem<'a> {
    pub n: usize,
    /// Masked rows of `P`, fed to the disk network.
    pub input: &'a [f64],
    pub pairs: &'a [(usize, usize)],
    pub p: &'a [f64],
    pub learn_t: bool,
    pub cfg: &'a LearnConfig,
}

pub(crate) struct Evaluation {
    pub breakdown: LossBreakdown,
    pub assignments: Vec<usize>,
    pub d: Vec<f64>,
}

/// `phi_m(x) = (g_m(x) - g_m(-x)) / 2` for a batch of `x`.
pub(crate) fn basis_values<F: Float>(basis: &Mlp<F>, xs: &[f64]) -> (Vec<F>, super::mlp::Cache<F>) {
    let jn = xs.len();
    let m = basis.output_dim();
    let input: Vec<F> = xs.iter().map(|&x| F::of(x)).chain(xs.iter().map(|&x| F::of(-x))).collect();
    let cache = basis.forward(&input, 2 * jn);
    let half = F::of(0.5);
    let phi = (0..jn * m).map(|idx| (cache.out[idx] - cache.out[jn * m + idx]) * half).collect();
    (phi, cache)
}

/// Flips every basis output that decreases across `[-1, 1]`. The monotonicity
/// loss is scale invariant and cannot turn a decreasing function around.
pub(crate) fn orient_basis<F: Float>(basis: &mut Mlp<F>) {
    let (phi, _) = basis_values(basis, &[1.0]);
    for (m, v) in phi.iter().enumerate() {
        if v.get() < 0.0 {
            basis.negate_output(m);
        }
    }
}

/// Loss at the current parameters; fills gradients when asked.
pub(crate) fn evaluate<F: Float>(
    disk: &Mlp<F>,
    basis: &Mlp<F>,
    prob: &Problem,
    rho: &[usize],
    grads: Option<(&mut [F], &mut [F])>,
) -> Result<Evaluation> {
    let n = prob.n;
    let input: Vec<F> = prob.input.iter().map(|&x| F::of(x)).collect();
    let disk_cache = disk.forward(&input, n);
    let out: Vec<f64> = disk_cache.out.iter().map(|x| x.get()).collect();
    let mut tape = Tape::new();
    let g = disk_graph(&mut tape, &out, n, prob.cfg, prob.learn_t, prob.pairs);
    let d: Vec<f64> = g.d.iter().map(|&v| tape.value(v)).collect();
    let (phi, basis_cache) = basis_values(basis, &d);
    let phi64: Vec<f64> = phi.iter().map(|x| x.get()).collect();
    let phi_start = tape.len();
    let nodes = loss_graph(&mut tape, &g, &phi64, prob.p, rho, prob.cfg)?;
    if let Some((gd, gb)) = grads {
        let m = prob.cfg.m;
        let jn = d.len();
        let mut adj = vec![0.0; tape.len()];
        adj[nodes.total.index()] = 1.0;
        tape.backward_range(&mut adj, tape.len(), phi_start);
        let mut d_out = vec![F::zero(); 2 * jn * m];
        for (idx, v) in nodes.phi.iter().enumerate() {
            let a = 0.5 * adj[v.index()];
            d_out[idx] = F::of(a);
            d_out[jn * m + idx] = F::of(-a);
        }
        let dx = basis.backward(&basis_cache, &d_out, gb, true).expect("input gradient");
        for (j, dv) in g.d.iter().enumerate() {
            adj[dv.index()] += dx[j].get() - dx[jn + j].get();
        }
        tape.backward_range(&mut adj, phi_start, 0);
        let d_disk: Vec<F> = adj[..out.len()].iter().map(|&x| F::of(x)).collect();
        disk.backward(&disk_cache, &d_disk, gd, false);
    }
    Ok(Evaluation { breakdown: nodes.breakdown, assignments: nodes.assignments, d })
}
