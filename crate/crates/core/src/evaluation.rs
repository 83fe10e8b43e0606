//! Train/test splits, sign accuracy and MAE, multi-method comparison tables and
//! the redundant-player stability study.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::decomposition::{fit_normal_bce, melo_decompose, reconstruct, strength_consistency, FitOptions, Transform};
use crate::elo::{elo_game, fit_elo};
use crate::error::{Error, Result};
use crate::game::{duplicate_player, Mask, PayoffMatrix};
use crate::generators::rng;
use crate::neural::{self, LearnConfig};

/// Holds out `round(fraction * n(n-1)/2)` unordered pairs (halves round down).
pub fn split_train_test(n: usize, fraction: f64, seed: u64) -> Result<Mask> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("mask fraction {fraction} must lie in [0, 1)")));
    }
    let total = n * n.saturating_sub(1) / 2;
    let exact = fraction * total as f64;
    let mut count = exact.floor() as usize;
    if exact - count as f64 > 0.5 {
        count += 1;
    }
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let held: Vec<(usize, usize)> = sample(&mut rng(seed), total, count).into_iter().map(|k| pairs[k]).collect();
    Ok(Mask::without_pairs(n, &held))
}

/// Percentages or errors over all pairs, the training pairs and the held-out
/// pairs. `None` when the subset is empty.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub overall: Option<f64>,
    pub train: Option<f64>,
    pub test: Option<f64>,
}

fn check_sizes(pred: &DMatrix<f64>, p: &PayoffMatrix, mask: &Mask) -> Result<()> {
    let n = p.n();
    if pred.shape() != (n, n) {
        return Err(Error::SizeMismatch { expected: n, found: pred.nrows() });
    }
    if mask.n() != n {
        return Err(Error::SizeMismatch { expected: n, found: mask.n() });
    }
    Ok(())
}

fn split_mean(p: &PayoffMatrix, mask: &Mask, f: impl Fn(usize, usize) -> Option<f64>) -> Split {
    let mut acc = [(0.0, 0usize); 3];
    for i in 0..p.n() {
        for j in (i + 1)..p.n() {
            if let Some(v) = f(i, j) {
                let subset = if mask.observed(i, j) { 1 } else { 2 };
                for s in [0, subset] {
                    acc[s].0 += v;
                    acc[s].1 += 1;
                }
            }
        }
    }
    let mean = |(s, c): (f64, usize)| (c > 0).then(|| s / c as f64);
    Split { overall: mean(acc[0]), train: mean(acc[1]), test: mean(acc[2]) }
}

/// Share of nonzero-payoff pairs whose predicted sign is right, in percent.
pub fn sign_accuracy(pred: &DMatrix<f64>, p: &PayoffMatrix, mask: &Mask) -> Result<Split> {
    check_sizes(pred, p, mask)?;
    Ok(split_mean(p, mask, |i, j| {
        let pv = p.get(i, j);
        (pv != 0.0).then(|| if sign(pred[(i, j)]) == sign(pv) { 100.0 } else { 0.0 })
    }))
}

/// Mean absolute error over unordered off-diagonal pairs.
pub fn mae(pred: &DMatrix<f64>, p: &PayoffMatrix, mask: &Mask) -> Result<Split> {
    check_sizes(pred, p, mask)?;
    Ok(split_mean(p, mask, |i, j| Some((pred[(i, j)] - p.get(i, j)).abs())))
}

fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Elo,
    Melo,
    NormalFitted,
    Ours,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Elo, Method::Melo, Method::NormalFitted, Method::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Method::Elo => "elo",
            Method::Melo => "melo",
            Method::NormalFitted => "normal_fitted",
            Method::Ours => "ours",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    /// Row-major reconstruction; empty if the method failed.
    pub reconstruction: Vec<Vec<f64>>,
    pub sign_accuracy: Split,
    pub mae: Split,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub k: usize,
    pub seeds: Vec<u64>,
    pub mask_fraction: f64,
    pub methods: Vec<Method>,
    pub learn: LearnConfig,
    pub fit: FitOptions,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            seeds: vec![0, 1, 2],
            mask_fraction: 0.1,
            methods: Method::ALL.to_vec(),
            learn: LearnConfig::default(),
            fit: FitOptions::default(),
        }
    }
}

/// Runs one method on one mask.
pub fn run_method(p: &PayoffMatrix, method: Method, k: usize, mask: &Mask, seed: u64, cfg: &EvalConfig) -> MethodResult {
    let start = Instant::now();
    let fit = FitOptions { seed, ..cfg.fit.clone() };
    let rec: Result<DMatrix<f64>> = match method {
        Method::Elo => fit_elo(p, Some(mask)).map(|f| elo_game(&f.ratings)),
        // The residual fit is unconstrained on held-out pairs; clip to the payoff range.
        Method::Melo => melo_decompose(p, k, Some(mask), &fit)
            .map(|r| reconstruct(&r.decomposition, Transform::Identity).map(|x| x.clamp(-1.0, 1.0))),
        Method::NormalFitted => {
            fit_normal_bce(p, k, Some(mask), &fit).map(|r| reconstruct(&r.decomposition, Transform::Sigmoid))
        }
        Method::Ours => neural::train(p, Some(mask), &LearnConfig { k, seed, ..cfg.learn.clone() }).map(|m| m.predict_matrix()),
    };
    let runtime_seconds = start.elapsed().as_secs_f64();
    let mut out = MethodResult {
        method,
        seed,
        n: p.n(),
        reconstruction: Vec::new(),
        sign_accuracy: Split::default(),
        mae: Split::default(),
        runtime_seconds,
        error: None,
    };
    match rec.and_then(|m| Ok((sign_accuracy(&m, p, mask)?, mae(&m, p, mask)?, m))) {
        Ok((acc, err, m)) => {
            out.reconstruction = m.row_iter().map(|r| r.iter().copied().collect()).collect();
            out.sign_accuracy = acc;
            out.mae = err;
        }
        Err(e) => {
            log::warn!("{} failed for seed {seed}: {e}", method.name());
            out.error = Some(e.to_string());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    /// Mean and population standard deviation of the defined values.
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
        Some(Stat { mean, std: var.sqrt(), count: v.len() })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitStat {
    pub overall: Option<Stat>,
    pub train: Option<Stat>,
    pub test: Option<Stat>,
}

impl SplitStat {
    fn of<'a>(rows: impl Iterator<Item = &'a Split> + Clone) -> SplitStat {
        SplitStat {
            overall: Stat::of(rows.clone().map(|s| s.overall)),
            train: Stat::of(rows.clone().map(|s| s.train)),
            test: Stat::of(rows.map(|s| s.test)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub sign_accuracy: SplitStat,
    pub mae: SplitStat,
    pub runtime_seconds: Option<Stat>,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub k: usize,
    pub results: Vec<MethodResult>,
    pub summary: Vec<MethodSummary>,
}

/// Every method on the same mask per seed. Failures are recorded in their
/// row and never abort the table.
pub fn compare_methods(p: &PayoffMatrix, cfg: &EvalConfig) -> Result<Comparison> {
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let mask = split_train_test(p.n(), cfg.mask_fraction, seed)?;
        for &method in &cfg.methods {
            results.push(run_method(p, method, cfg.k, &mask, seed, cfg));
        }
    }
    let summary = cfg
        .methods
        .iter()
        .map(|&method| {
            let ok: Vec<&MethodResult> = results.iter().filter(|r| r.method == method && r.error.is_none()).collect();
            MethodSummary {
                method,
                sign_accuracy: SplitStat::of(ok.iter().map(|r| &r.sign_accuracy)),
                mae: SplitStat::of(ok.iter().map(|r| &r.mae)),
                runtime_seconds: Stat::of(ok.iter().map(|r| Some(r.runtime_seconds))),
                failures: results.iter().filter(|r| r.method == method && r.error.is_some()).count(),
            }
        })
        .collect();
    Ok(Comparison { k: cfg.k, results, summary })
}

/// `x` with four significant digits.
pub fn sig4(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let digits = (3 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

fn cell(s: &Option<Stat>) -> String {
    s.map_or("n/a".into(), |s| format!("{}±{}", sig4(s.mean), sig4(s.std)))
}

fn triple(s: &SplitStat) -> String {
    format!("{} ({}, {})", cell(&s.overall), cell(&s.train), cell(&s.test))
}

impl Comparison {
    /// Aligned text: `overall (train, test)` as mean±std per method. MAE is
    /// scaled by 100.
    pub fn table(&self) -> String {
        let scaled = |s: &SplitStat| {
            let f = |o: &Option<Stat>| o.map(|s| Stat { mean: 100.0 * s.mean, std: 100.0 * s.std, count: s.count });
            SplitStat { overall: f(&s.overall), train: f(&s.train), test: f(&s.test) }
        };
        let rows: Vec<[String; 4]> = self
            .summary
            .iter()
            .map(|s| {
                [s.method.name().to_string(), triple(&s.sign_accuracy), triple(&scaled(&s.mae)), s.failures.to_string()]
            })
            .collect();
        let header = ["method".to_string(), "sign accuracy %".into(), "MAE x100".into(), "failed".into()];
        let mut widths = [0; 4];
        for r in std::iter::once(&header).chain(&rows) {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(&rows) {
            let line: Vec<String> = r.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }

    /// One row per (method, seed) cell.
    pub fn csv(&self) -> String {
        let mut out = String::from(
            "method,seed,n,sign_overall,sign_train,sign_test,mae_overall,mae_train,mae_test,runtime_seconds,error\n",
        );
        let f = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:.17e}"));
        for r in &self.results {
            let a = &r.sign_accuracy;
            let m = &r.mae;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.17e},{}",
                r.method.name(),
                r.seed,
                r.n,
                f(a.overall),
                f(a.train),
                f(a.test),
                f(m.overall),
                f(m.train),
                f(m.test),
                r.runtime_seconds,
                r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
            );
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMethod {
    Elo,
    /// Strength of the leading fitted normal disk.
    Normal,
    /// Learnt potential.
    Ours,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub method: StabilityMethod,
    pub duplicated: usize,
    /// Ratings of the original game, mapped affinely onto `[0, 1]`.
    pub before: Vec<f64>,
    /// Ratings with the copy appended, mapped the same way.
    pub after: Vec<f64>,
    /// `|after - before|` per original player.
    pub drift: Vec<f64>,
    pub max_drift: f64,
}

/// Maps the minimum to 0 and the maximum to 1; constant vectors go to 0.
pub fn normalize_unit(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

fn ratings(p: &PayoffMatrix, method: StabilityMethod, learn: &LearnConfig, fit: &FitOptions) -> Result<Vec<f64>> {
    match method {
        StabilityMethod::Elo => Ok(fit_elo(p, None)?.ratings),
        StabilityMethod::Normal => {
            let r = fit_normal_bce(p, 1, None, fit)?;
            Ok(strength_consistency(&r.decomposition.cyclic[0]).0)
        }
        StabilityMethod::Ours => {
            let model = neural::train(p, None, &LearnConfig { learn_transitive: true, ..learn.clone() })?;
            model
                .potential()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::InvalidParameter("game admits no potential component".into()))
        }
    }
}

pub fn stability_report(
    p: &PayoffMatrix,
    method: StabilityMethod,
    player: usize,
    learn: &LearnConfig,
    fit: &FitOptions,
) -> Result<StabilityReport> {
    let q = duplicate_player(p, player)?;
    let before = normalize_unit(&ratings(p, method, learn, fit)?);
    let after = normalize_unit(&ratings(&q, method, learn, fit)?);
    let drift: Vec<f64> = before.iter().zip(&after).map(|(a, b)| (b - a).abs()).collect();
    let max_drift = drift.iter().copied().fold(0.0, f64::max);
    Ok(StabilityReport { method, duplicated: player, before, after, drift, max_drift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::four_player_game;

    #[test]
    fn split_counts_round_to_nearest() {
        assert_eq!(split_train_test(10, 0.1, 3).unwrap().held_out_pairs().len(), 4);
        assert_eq!(split_train_test(10, 0.0, 3).unwrap().held_out_pairs().len(), 0);
        // 0.5 of 45 pairs is 22.5, which rounds down.
        assert_eq!(split_train_test(10, 0.5, 1).unwrap().held_out_pairs().len(), 22);
        assert_eq!(split_train_test(10, 0.51, 1).unwrap().held_out_pairs().len(), 23);
        assert_eq!(split_train_test(10, 0.1, 7).unwrap(), split_train_test(10, 0.1, 7).unwrap());
        assert!(split_train_test(10, 1.0, 0).is_err());
    }

    #[test]
    fn accuracy_of_elo_on_four_player_game() {
        let p = four_player_game();
        let full = Mask::full(4);
        let e = elo_game(&fit_elo(&p, None).unwrap().ratings);
        let acc = sign_accuracy(&e, &p, &full).unwrap();
        assert!((acc.overall.unwrap() - 500.0 / 6.0).abs() < 1e-9);
        assert_eq!(acc.test, None);
        let zero = DMatrix::zeros(4, 4);
        assert_eq!(sign_accuracy(&zero, &p, &full).unwrap().overall, Some(0.0));
        let err = mae(&zero, &p, &full).unwrap().overall.unwrap();
        assert!((err - (0.88 + 0.2 + 0.46 + 0.06 + 0.06 + 0.62) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn all_ties_is_not_applicable() {
        let p = PayoffMatrix::from_upper(3, |_, _| 0.0).unwrap();
        let acc = sign_accuracy(&DMatrix::zeros(3, 3), &p, &Mask::full(3)).unwrap();
        assert_eq!(acc, Split::default());
    }

    #[test]
    fn significant_digits() {
        assert_eq!(sig4(83.333333), "83.33");
        assert_eq!(sig4(0.012345), "0.01235");
        assert_eq!(sig4(1234.4), "1234");
    }
}
