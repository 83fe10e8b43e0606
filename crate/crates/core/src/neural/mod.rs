//! Learnt sign-exact decompositions: a disk network maps each player's row of
//! `P` to disk coordinates, Gram-Schmidt makes them orthogonal, and a basis
//! network learns odd maps `phi_m` so that `phi_m(D_ij)` reconstructs `P_ij`.

mod graph;
pub mod mlp;
pub mod tape;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use graph::{LossBreakdown, NORMALIZER_FLOOR};
use graph::{basis_values, disk_graph, evaluate, orient_basis, Problem};
pub use mlp::{Adam, AdamConfig, Float, Head, Mlp};
use tape::Tape;

use crate::error::{Error, Result};
use crate::game::{find_hamiltonian_win_cycle, scc_levels, Mask, PayoffMatrix};
use crate::generators::rng;

pub const CHECKPOINT_FORMAT: &str = "skewgame-model/1";
/// Magnitudes at or below this count as zero when comparing signs.
pub const SIGN_TIE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VtMode {
    /// `v^T = 1`, so `T_ij = Phi_i - Phi_j`.
    FixedOnes,
    /// `v^T` is learnt, orthogonalized against `u^T`, then made positive by a
    /// softplus; the lost orthogonality is penalized instead.
    LearntPositive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_lr: f64,
    pub warmup_iterations: usize,
    pub lr: f64,
}

impl LrSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        if iteration < self.warmup_iterations {
            self.warmup_lr
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnConfig {
    /// Cyclic disks.
    pub k: usize,
    /// Basis functions.
    pub m: usize,
    /// Learn the transitive component; switched off for games whose win graph
    /// has a cycle through every player.
    pub learn_transitive: bool,
    pub vt_mode: VtMode,
    pub omega_t: f64,
    pub omega_c: f64,
    pub omega_basis: f64,
    /// Weight of the orthogonality penalty in [`VtMode::LearntPositive`].
    pub omega_gs: f64,
    pub iterations: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub adam: AdamConfig,
    pub gs_delta: f64,
    pub hidden: usize,
    pub depth: usize,
    pub precision: Precision,
    /// Neighbours used to weight basis functions at prediction time.
    pub k_nn: usize,
    pub history_every: usize,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k: 3,
            m: 1,
            learn_transitive: true,
            vt_mode: VtMode::FixedOnes,
            omega_t: 1000.0,
            omega_c: 10.0,
            omega_basis: 1000.0,
            omega_gs: 1.0,
            iterations: 60_000,
            schedule: LrSchedule { warmup_lr: 1e-4, warmup_iterations: 2000, lr: 5e-6 },
            seed: 0,
            adam: AdamConfig::default(),
            gs_delta: 1e-14,
            hidden: 200,
            depth: 3,
            precision: Precision::F32,
            k_nn: 1,
            history_every: 100,
        }
    }
}

impl LearnConfig {
    /// The default schedule cut to 10k iterations, for tests and quick runs.
    pub fn fast() -> Self {
        Self { iterations: 10_000, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidParameter("need at least one basis function".into()));
        }
        if self.hidden == 0 || self.k_nn == 0 || self.history_every == 0 {
            return Err(Error::InvalidParameter("hidden, k_nn and history_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub loss: LossBreakdown,
}

/// Disk-space quantities for every unordered pair `i < j`, row-major over pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiskForward {
    pub d: Vec<Vec<f64>>,
    pub t: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    /// `u^T` (the potential in [`VtMode::FixedOnes`]).
    pub ut: Option<Vec<f64>>,
    pub vt: Option<Vec<f64>>,
    pub cyclic: Vec<(Vec<f64>, Vec<f64>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format: String,
    pub config: LearnConfig,
    pub n: usize,
    /// Whether the transitive component was actually learnt.
    pub learn_transitive: bool,
    pub disk: Mlp<f64>,
    pub basis: Mlp<f64>,
    /// Masked rows of `P` fed to the disk network.
    pub input: Vec<f64>,
    pub mask: Mask,
    pub forward: DiskForward,
    pub train_pairs: Vec<(usize, usize)>,
    pub train_d: Vec<f64>,
    /// Basis function chosen for each training pair.
    pub assignments: Vec<usize>,
    pub history: Vec<HistoryEntry>,
    pub initial_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
}

fn spans_cycle(p: &PayoffMatrix) -> bool {
    match find_hamiltonian_win_cycle(p) {
        Ok(c) => c.is_some(),
        // Too large for the exhaustive search: strong connectivity is the
        // necessary condition we can still check.
        Err(_) => scc_levels(p).len() == 1,
    }
}

fn masked_game(p: &PayoffMatrix, mask: &Mask) -> Result<PayoffMatrix> {
    let n = p.n();
    PayoffMatrix::from_upper(n, |i, j| if mask.observed(i, j) { p.get(i, j) } else { 0.0 })
}

/// Trains on the observed pairs of `mask` (all pairs if `None`).
pub fn train(p: &PayoffMatrix, mask: Option<&Mask>, cfg: &LearnConfig) -> Result<TrainedModel> {
    match cfg.precision {
        Precision::F32 => train_with::<f32>(p, mask, cfg),
        Precision::F64 => train_with::<f64>(p, mask, cfg),
    }
}

/// Everything fixed before the first step of training.
struct Setup<F> {
    n: usize,
    mask: Mask,
    pairs: Vec<(usize, usize)>,
    pv: Vec<f64>,
    input: Vec<f64>,
    learn_t: bool,
    disk: Mlp<F>,
    basis: Mlp<F>,
}

fn setup<F: Float>(p: &PayoffMatrix, mask: Option<&Mask>, cfg: &LearnConfig) -> Result<Setup<F>> {
    cfg.validate()?;
    let n = p.n();
    if n < 2 {
        return Err(Error::InvalidParameter("need at least two players".into()));
    }
    let mask = match mask {
        Some(m) if m.n() != n => return Err(Error::SizeMismatch { expected: n, found: m.n() }),
        Some(m) => m.clone(),
        None => Mask::full(n),
    };
    let pairs = mask.pairs();
    if pairs.is_empty() {
        return Err(Error::EmptyTrainSet);
    }
    let observed = masked_game(p, &mask)?;
    let learn_t = cfg.learn_transitive && !spans_cycle(&observed);
    if cfg.learn_transitive && !learn_t {
        log::info!("win graph has a cycle through all players; transitive component disabled");
    }
    let input: Vec<f64> = observed.matrix().transpose().iter().copied().collect();
    let pv: Vec<f64> = pairs.iter().map(|&(i, j)| p.get(i, j)).collect();
    let mut r = rng(cfg.seed);
    let hidden = vec![cfg.hidden; cfg.depth];
    let disk_sizes: Vec<usize> = [vec![n], hidden.clone(), vec![2 * cfg.k + 2]].concat();
    let basis_sizes: Vec<usize> = [vec![1], hidden, vec![cfg.m]].concat();
    let mut disk = Mlp::<F>::new(&disk_sizes, Head::Linear, &mut r);
    if learn_t {
        orient_potential(&mut disk, n, &input, &pairs, &pv);
    }
    let mut basis = Mlp::<F>::new(&basis_sizes, Head::ScaledTanh, &mut r);
    orient_basis(&mut basis);
    Ok(Setup { n, mask, pairs, pv, input, learn_t, disk, basis })
}

/// Starts `u^T` on the side of the sign symmetry that agrees with `P`.
fn orient_potential<F: Float>(disk: &mut Mlp<F>, n: usize, input: &[f64], pairs: &[(usize, usize)], pv: &[f64]) {
    let x: Vec<F> = input.iter().map(|&v| F::of(v)).collect();
    let out = disk.forward(&x, n).out;
    let w = disk.output_dim();
    let u = |i: usize| out[i * w].get();
    let agreement: f64 = pairs.iter().zip(pv).map(|(&(i, j), &p)| (u(i) - u(j)) * p).sum();
    if agreement < 0.0 {
        disk.negate_output(0);
    }
}

fn permutation_rng(cfg: &LearnConfig) -> rand_chacha::ChaCha8Rng {
    rng(cfg.seed ^ 0x5eed_0f_9e37_79b9)
}

fn train_with<F: Float>(p: &PayoffMatrix, mask: Option<&Mask>, cfg: &LearnConfig) -> Result<TrainedModel> {
    let Setup { n, mask, pairs, pv, input, learn_t, mut disk, mut basis } = setup::<F>(p, mask, cfg)?;
    let mut perm_rng = permutation_rng(cfg);
    let mut opt_d = Adam::new(disk.n_params(), cfg.adam);
    let mut opt_b = Adam::new(basis.n_params(), cfg.adam);
    let mut gd = vec![F::zero(); disk.n_params()];
    let mut gb = vec![F::zero(); basis.n_params()];
    let prob = Problem { n, input: &input, pairs: &pairs, p: &pv, learn_t, cfg };
    let mut rho: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::new();
    let mut initial = None;
    for it in 0..cfg.iterations {
        rho.shuffle(&mut perm_rng);
        let ev = evaluate(&disk, &basis, &prob, &rho, Some((&mut gd, &mut gb)))?;
        if !ev.breakdown.total.is_finite() {
            log::error!("non-finite loss at iteration {it}: {:?}", ev.breakdown);
            return Err(Error::NonFiniteLoss { iteration: it });
        }
        initial.get_or_insert(ev.breakdown);
        if it % cfg.history_every == 0 {
            history.push(HistoryEntry { iteration: it, loss: ev.breakdown });
        }
        let lr = cfg.schedule.at(it);
        opt_d.step(&mut disk.params, &gd, lr);
        opt_b.step(&mut basis.params, &gb, lr);
    }
    let disk = disk.cast::<f64>();
    let basis = basis.cast::<f64>();
    rho.shuffle(&mut perm_rng);
    let fin = evaluate(&disk, &basis, &prob, &rho, None)?;
    if !fin.breakdown.total.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: cfg.iterations });
    }
    history.push(HistoryEntry { iteration: cfg.iterations, loss: fin.breakdown });
    let forward = forward_nets(&disk, n, &input, cfg, learn_t);
    Ok(TrainedModel {
        format: CHECKPOINT_FORMAT.into(),
        config: cfg.clone(),
        n,
        learn_transitive: learn_t,
        disk,
        basis,
        input,
        mask,
        forward,
        train_pairs: pairs,
        train_d: fin.d,
        assignments: fin.assignments,
        history,
        initial_loss: initial.unwrap_or(fin.breakdown),
        final_loss: fin.breakdown,
    })
}

/// The training loss as a function of all network parameters, at the
/// initialization and pair permutation of the first training step. Parameters
/// are the disk network's followed by the basis network's.
#[derive(Clone, Debug)]
pub struct Objective {
    pub config: LearnConfig,
    pub n: usize,
    pub learn_transitive: bool,
    pub disk: Mlp<f64>,
    pub basis: Mlp<f64>,
    /// Masked rows of `P`, row-major.
    pub input: Vec<f64>,
    pub pairs: Vec<(usize, usize)>,
    /// `P` on `pairs`.
    pub targets: Vec<f64>,
    /// Partner of each pair in the monotonicity term.
    pub rho: Vec<usize>,
}

impl Objective {
    pub fn new(p: &PayoffMatrix, mask: Option<&Mask>, cfg: &LearnConfig) -> Result<Self> {
        let s = setup::<f64>(p, mask, cfg)?;
        let mut rho: Vec<usize> = (0..s.pairs.len()).collect();
        rho.shuffle(&mut permutation_rng(cfg));
        Ok(Self {
            config: cfg.clone(),
            n: s.n,
            learn_transitive: s.learn_t,
            disk: s.disk,
            basis: s.basis,
            input: s.input,
            pairs: s.pairs,
            targets: s.pv,
            rho,
        })
    }

    pub fn params(&self) -> Vec<f64> {
        [self.disk.params.as_slice(), &self.basis.params].concat()
    }

    fn nets(&self, theta: &[f64]) -> Result<(Mlp<f64>, Mlp<f64>)> {
        let nd = self.disk.n_params();
        if theta.len() != nd + self.basis.n_params() {
            return Err(Error::SizeMismatch { expected: nd + self.basis.n_params(), found: theta.len() });
        }
        let mut disk = self.disk.clone();
        let mut basis = self.basis.clone();
        disk.params.copy_from_slice(&theta[..nd]);
        basis.params.copy_from_slice(&theta[nd..]);
        Ok((disk, basis))
    }

    fn problem(&self) -> Problem<'_> {
        Problem {
            n: self.n,
            input: &self.input,
            pairs: &self.pairs,
            p: &self.targets,
            learn_t: self.learn_transitive,
            cfg: &self.config,
        }
    }

    pub fn value(&self, theta: &[f64]) -> Result<LossBreakdown> {
        let (disk, basis) = self.nets(theta)?;
        Ok(evaluate(&disk, &basis, &self.problem(), &self.rho, None)?.breakdown)
    }

    /// Loss and its gradient by reverse mode.
    pub fn gradient(&self, theta: &[f64]) -> Result<(LossBreakdown, Vec<f64>)> {
        let (disk, basis) = self.nets(theta)?;
        let mut gd = vec![0.0; disk.n_params()];
        let mut gb = vec![0.0; basis.n_params()];
        let ev = evaluate(&disk, &basis, &self.problem(), &self.rho, Some((&mut gd, &mut gb)))?;
        gd.extend_from_slice(&gb);
        Ok((ev.breakdown, gd))
    }
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect()
}

fn forward_nets(disk: &Mlp<f64>, n: usize, input: &[f64], cfg: &LearnConfig, learn_t: bool) -> DiskForward {
    let out = disk.forward(input, n).out;
    let pairs = upper_pairs(n);
    let mut tape = Tape::new();
    let g = disk_graph(&mut tape, &out, n, cfg, learn_t, &pairs);
    let mut d = vec![vec![0.0; n]; n];
    let mut t = vec![vec![0.0; n]; n];
    let mut c = vec![vec![0.0; n]; n];
    for (idx, &(i, j)) in pairs.iter().enumerate() {
        let dv = tape.value(g.d[idx]);
        let cv = tape.value(g.c[idx]);
        let tv = g.t.as_ref().map_or(0.0, |tt| tape.value(tt[idx]));
        d[i][j] = dv;
        d[j][i] = -dv;
        c[i][j] = cv;
        c[j][i] = -cv;
        t[i][j] = tv;
        t[j][i] = -tv;
    }
    let vals = |v: &Vec<tape::Var>| v.iter().map(|&x| tape.value(x)).collect::<Vec<f64>>();
    DiskForward {
        d,
        t,
        c,
        ut: g.vectors.ut.as_ref().map(vals),
        vt: g.vectors.vt.as_ref().map(vals),
        cyclic: g.vectors.cyclic.iter().map(|(u, v)| (vals(u), vals(v))).collect(),
    }
}

/// Recomputes `T`, `C` and `D` from the stored networks.
pub fn forward_disks(model: &TrainedModel) -> DiskForward {
    forward_nets(&model.disk, model.n, &model.input, &model.config, model.learn_transitive)
}

/// The `M` basis values at `x`.
pub fn forward_basis(model: &TrainedModel, x: f64) -> Vec<f64> {
    basis_values(&model.basis, &[x]).0
}

impl TrainedModel {
    /// Learnt potential `Phi = u^T`, if a transitive component was learnt.
    pub fn potential(&self) -> Option<&[f64]> {
        self.forward.ut.as_deref()
    }

    pub fn d_matrix(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.n, self.n, |i, j| self.forward.d[i][j])
    }

    /// Basis weights at `x` from the `k_nn` nearest training points.
    fn weights(&self, x: f64) -> Vec<f64> {
        let m = self.config.m;
        let mut idx: Vec<usize> = (0..self.train_d.len()).collect();
        let k = self.config.k_nn.min(idx.len());
        idx.sort_by(|&a, &b| (self.train_d[a] - x).abs().total_cmp(&(self.train_d[b] - x).abs()).then(a.cmp(&b)));
        let mut w = vec![0.0; m];
        for &i in &idx[..k] {
            w[self.assignments[i]] += 1.0 / k as f64;
        }
        w
    }

    /// Predicted payoff for every pair, antisymmetric and clamped to `[-1, 1]`.
    pub fn predict_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n;
        let pairs = upper_pairs(n);
        let xs: Vec<f64> = pairs.iter().map(|&(i, j)| self.forward.d[i][j]).collect();
        let (phi, _) = basis_values(&self.basis, &xs);
        let m = self.config.m;
        let mut out = nalgebra::DMatrix::zeros(n, n);
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            let w = self.weights(xs[idx]);
            let v: f64 = (0..m).map(|k| w[k] * phi[idx * m + k]).sum::<f64>().clamp(-1.0, 1.0);
            out[(i, j)] = v;
            out[(j, i)] = -v;
        }
        out
    }

    /// Predictions for the given pairs.
    pub fn predict(&self, pairs: &[(usize, usize)]) -> Result<Vec<f64>> {
        let full = self.predict_matrix();
        pairs
            .iter()
            .map(|&(i, j)| {
                if i >= self.n || j >= self.n {
                    Err(Error::IndexOutOfRange { index: i.max(j), n: self.n })
                } else {
                    Ok(full[(i, j)])
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(CHECKPOINT_FORMAT) => Ok(serde_json::from_value(v)?),
            other => Err(Error::CheckpointMismatch(format!("expected {CHECKPOINT_FORMAT}, found {other:?}"))),
        }
    }

    /// `(i, j, D_ij, P_ij, m(i,j), phi_m(D_ij))` for every training pair.
    pub fn plot_rows(&self, p: &PayoffMatrix) -> Vec<PlotRow> {
        let (phi, _) = basis_values(&self.basis, &self.train_d);
        let m = self.config.m;
        self.train_pairs
            .iter()
            .enumerate()
            .map(|(idx, &(i, j))| {
                let a = self.assignments[idx];
                PlotRow { i, j, d: self.train_d[idx], p: p.get(i, j), basis: a, phi: phi[idx * m + a] }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub i: usize,
    pub j: usize,
    pub d: f64,
    pub p: f64,
    pub basis: usize,
    pub phi: f64,
}

fn sign_of(x: f64) -> i8 {
    if x > SIGN_TIE {
        1
    } else if x < -SIGN_TIE {
        -1
    } else {
        0
    }
}

/// `(mistakes, tie_violations)`: pairs with nonzero `P` whose sign differs in
/// `D`, and pairs with zero `P` where `|D|` exceeds the tie threshold.
pub fn sign_mistakes(d: &nalgebra::DMatrix<f64>, p: &PayoffMatrix) -> Result<(usize, usize)> {
    let n = p.n();
    if d.shape() != (n, n) {
        return Err(Error::SizeMismatch { expected: n, found: d.nrows() });
    }
    let (mut wrong, mut ties) = (0, 0);
    for i in 0..n {
        for j in (i + 1)..n {
            let pv = p.get(i, j);
            if pv == 0.0 {
                if d[(i, j)].abs() > SIGN_TIE {
                    ties += 1;
                }
            } else if sign_of(d[(i, j)]) != sign_of(pv) {
                wrong += 1;
            }
        }
    }
    Ok((wrong, ties))
}

/// Smallest `M` in `1..=m_max` whose trained reconstruction error is at most
/// `order_tol`; `m_max + 1` if none is.
pub fn estimate_sign_order(
    p: &PayoffMatrix,
    mask: Option<&Mask>,
    m_max: usize,
    order_tol: f64,
    cfg: &LearnConfig,
) -> Result<usize> {
    if m_max == 0 {
        return Err(Error::InvalidParameter("m_max must be at least 1".into()));
    }
    for m in 1..=m_max {
        let model = train(p, mask, &LearnConfig { m, ..cfg.clone() })?;
        log::info!("M = {m}: reconstruction loss {:e}", model.final_loss.proba);
        if model.final_loss.proba <= order_tol {
            return Ok(m);
        }
    }
    Ok(m_max + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::four_player_game;

    fn tiny() -> LearnConfig {
        LearnConfig { k: 1, m: 2, hidden: 8, iterations: 20, ..LearnConfig::default() }
    }

    #[test]
    fn deterministic_in_seed() {
        let p = four_player_game();
        let a = train(&p, None, &tiny()).unwrap();
        let b = train(&p, None, &tiny()).unwrap();
        assert_eq!(a, b);
        let c = train(&p, None, &LearnConfig { seed: 1, ..tiny() }).unwrap();
        assert_ne!(a.history, c.history);
    }

    #[test]
    fn stored_forward_matches_fresh_pass() {
        let model = train(&four_player_game(), None, &tiny()).unwrap();
        let fresh = forward_disks(&model);
        for (a, b) in fresh.d.iter().flatten().zip(model.forward.d.iter().flatten()) {
            assert!((a - b).abs() <= 1e-12);
        }
        let d = model.d_matrix();
        assert_eq!(d.clone() + d.transpose(), nalgebra::DMatrix::zeros(4, 4));
    }

    #[test]
    fn basis_is_odd() {
        let model = train(&four_player_game(), None, &tiny()).unwrap();
        assert!(forward_basis(&model, 0.0).iter().all(|&v| v == 0.0));
        for x in [0.1, 0.7, 2.5] {
            let (a, b) = (forward_basis(&model, x), forward_basis(&model, -x));
            for (u, v) in a.iter().zip(&b) {
                assert!((u + v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_vectors_are_orthogonal() {
        let model = train(&four_player_game(), None, &LearnConfig { k: 2, learn_transitive: false, ..tiny() }).unwrap();
        let vs: Vec<&Vec<f64>> = model.forward.cyclic.iter().flat_map(|(u, v)| [u, v]).collect();
        let dot = |a: &Vec<f64>, b: &Vec<f64>| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        for a in 0..vs.len() {
            for b in (a + 1)..vs.len() {
                let scale = dot(vs[a], vs[a]).sqrt() * dot(vs[b], vs[b]).sqrt();
                assert!(dot(vs[a], vs[b]).abs() <= 1e-8 * scale.max(1e-300));
            }
        }
    }

    #[test]
    fn fixed_ones_gives_potential_differences() {
        let model = train(&four_player_game(), None, &LearnConfig { k: 0, m: 1, ..tiny() }).unwrap();
        let phi = model.potential().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((model.forward.d[i][j] - (phi[i] - phi[j])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = train(&four_player_game(), None, &tiny()).unwrap();
        let back = TrainedModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let bad = model.to_json().unwrap().replace(CHECKPOINT_FORMAT, "other/9");
        assert!(matches!(TrainedModel::from_json(&bad), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn sign_mistake_counts() {
        let p = four_player_game();
        assert_eq!(sign_mistakes(p.matrix(), &p).unwrap(), (0, 0));
        assert_eq!(sign_mistakes(&-p.matrix(), &p).unwrap(), (6, 0));
    }
}
