use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde_json::json;
use skewgame::cyclic::{construct_cyclic_disks, verify_construction};
use skewgame::decomposition::{
    fit_normal_bce, melo_decompose, reconstruct, schur_decompose, truncate, Decomposition, FitOptions, Provenance,
    Transform,
};
use skewgame::elo::{
    beta_bound_explicit, beta_bound_tight, elo_game, extract_potential, fit_elo, hyperbolic_elo, simulate_online,
    GMode, OnlineRule, SimulationConfig, StepSchedule,
};
use skewgame::evaluation::{compare_methods, sig4, sign_accuracy, split_train_test, EvalConfig, Method};
use skewgame::game::{is_transitive, same_sign};
use skewgame::generators::{self, GameKind, HYBRID_LEVELS};
use skewgame::io::{self, fmt17, Format, RatingsReport};
use skewgame::neural::{self, LearnConfig, Precision};
use skewgame::{Error, ErrorClass, Mask, PayoffMatrix, Result};

mod config;

use config::{Beta, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "skewgame", version, about = "Ratings and disk decompositions of antisymmetric payoff matrices")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving all outputs (created if missing).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Format of matrix and table outputs.
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// JSON file with defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a fixture or random game.
    Generate(GenerateArgs),
    /// Fit ratings and write the reconstructed game.
    Rate(RateArgs),
    /// Split a game into disks.
    Decompose(DecomposeArgs),
    /// Train the neural decomposition.
    Learn(LearnArgs),
    /// Compare methods on held-out pairs.
    Eval(EvalArgs),
    /// Run the online rating rules on sampled matches.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Kind {
    FourPlayer,
    FivePlayer,
    Polynomial,
    Order2,
    CyclicFixture,
    Transitive,
    Cyclic,
    Hybrid,
    DiskMixture,
    HybridDiskMixture,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Option<Kind>,
    /// Number of players.
    #[arg(long)]
    n: Option<usize>,
    /// Exponent of the polynomial game.
    #[arg(long)]
    power: Option<f64>,
    /// Scale of the polynomial game.
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of random disks in mixtures.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Add a transitive disk to a disk mixture.
    #[arg(long)]
    transitive: Option<bool>,
    /// Number of ordered levels in a hybrid mixture.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RateMethod {
    Elo,
    Hyperbolic,
    Potential,
}

#[derive(Args, Debug)]
struct RateArgs {
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<RateMethod>,
    /// A positive number or `auto`.
    #[arg(long)]
    beta: Option<Beta>,
    /// Used when `auto` cannot be computed.
    #[arg(long)]
    fallback_beta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum DecomposeMethod {
    Schur,
    Melo,
    NormalBce,
    ConstructCyclic,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<DecomposeMethod>,
    /// Number of cyclic components; all of them for `schur` when omitted.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// Number of cyclic disks.
    #[arg(long = "K", alias = "k")]
    k: Option<usize>,
    /// Number of basis functions.
    #[arg(long = "M", alias = "m")]
    m: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Learn the transitive disk (`false` for purely cyclic games).
    #[arg(long)]
    learn_transitive: Option<bool>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args, Debug)]
struct LearnArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
    /// Fraction of pairs held out; 0 trains on the full game.
    #[arg(long)]
    mask_fraction: Option<f64>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    input: Option<PathBuf>,
    #[command(flatten)]
    train: TrainArgs,
    #[arg(long)]
    mask_fraction: Option<f64>,
    /// Comma-separated subset of elo, melo, normal_fitted, ours.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// Comma-separated seeds, one mask per seed.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Variant {
    Elo,
    Hyperbolic,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    variant: Option<Variant>,
    #[arg(long)]
    steps: Option<usize>,
    /// Number of independent runs averaged into the trajectory.
    #[arg(long)]
    sims: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, value_enum)]
    g: Option<GArg>,
    #[arg(long)]
    eta_scale: Option<f64>,
    #[arg(long)]
    eta_power: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GArg {
    Scaled,
    Identity,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s).map_err(|e| e.to_string())
}

fn parse_enum<T: ValueEnum>(s: &str) -> Result<T> {
    T::from_str(s, true).map_err(|e| Error::Parse(format!("config: {e}")))
}

/// Collects outputs under the output directory.
struct Out {
    dir: PathBuf,
    format: Format,
    written: Vec<PathBuf>,
}

impl Out {
    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        log::info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn write_matrix(&mut self, stem: &str, m: &DMatrix<f64>) -> Result<()> {
        let name = format!("{stem}.{}", self.format.extension());
        self.write(&name, &io::matrix_to_string(m, self.format))
    }
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: Out,
}

impl Ctx {
    fn input(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.cfg.input.clone())
            .ok_or_else(|| Error::InvalidParameter("no input matrix given".into()))
    }

    fn game(&self, flag: Option<PathBuf>) -> Result<PayoffMatrix> {
        let path = self.input(flag)?;
        io::read_game(&path).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn learn_config(&self, a: &TrainArgs) -> LearnConfig {
        let c = &self.cfg;
        let mut l = c.learn.clone().unwrap_or_default();
        l.seed = self.seed;
        if let Some(k) = a.k.or(c.k) {
            l.k = k;
        }
        if let Some(m) = a.m.or(c.m) {
            l.m = m;
        }
        if let Some(it) = a.iterations.or(c.iterations) {
            l.iterations = it;
        }
        let precision = a.precision.map(|p| match p {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        });
        if let Some(p) = precision.or(c.precision) {
            l.precision = p;
        }
        if let Some(t) = a.learn_transitive.or(c.learn_transitive) {
            l.learn_transitive = t;
        }
        l
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}

/// 2 is left to argument errors.
fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Parse => 3,
        ErrorClass::Validation => 4,
        ErrorClass::Convergence => 5,
        ErrorClass::Invariant => 6,
        ErrorClass::Io => 7,
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let format = match cli.format {
        Some(FormatArg::Csv) => Format::Csv,
        Some(FormatArg::Json) => Format::Json,
        None => cfg.format.unwrap_or(Format::Csv),
    };
    let dir = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    let mut ctx = Ctx { cfg, seed, out: Out { dir, format, written: Vec::new() } };
    match cli.command {
        Command::Generate(a) => generate(&mut ctx, a)?,
        Command::Rate(a) => rate(&mut ctx, a)?,
        Command::Decompose(a) => decompose(&mut ctx, a)?,
        Command::Learn(a) => learn(&mut ctx, a)?,
        Command::Eval(a) => eval(&mut ctx, a)?,
        Command::Simulate(a) => simulate(&mut ctx, a)?,
    }
    Ok(ctx.out.written)
}

fn generate(ctx: &mut Ctx, a: GenerateArgs) -> Result<()> {
    let c = &ctx.cfg;
    let kind = match (a.kind, &c.kind) {
        (Some(k), _) => k,
        (None, Some(s)) => parse_enum(s)?,
        (None, None) => return Err(Error::InvalidParameter("--kind is required".into())),
    };
    let n = a.n.or(c.n);
    let need_n = || n.ok_or_else(|| Error::InvalidParameter("--n is required for this kind".into()));
    let k = a.k.or(c.k).unwrap_or(3);
    let p = match kind {
        Kind::FourPlayer => generators::four_player_game(),
        Kind::FivePlayer => generators::five_player_game(),
        Kind::Polynomial => generators::gen_polynomial_transitive(
            need_n()?,
            a.power.or(c.power).unwrap_or(1.0),
            a.lambda.or(c.lambda).unwrap_or(0.5),
        )?,
        Kind::Order2 => generators::gen_order2_polynomial(need_n()?)?,
        Kind::CyclicFixture => generators::gen_cyclic_order2_fixture(),
        Kind::Transitive => generators::gen_random(GameKind::Transitive, need_n()?, ctx.seed)?,
        Kind::Cyclic => generators::gen_random(GameKind::Cyclic, need_n()?, ctx.seed)?,
        Kind::Hybrid => generators::gen_random(GameKind::Hybrid, need_n()?, ctx.seed)?,
        Kind::DiskMixture => {
            let transitive = a.transitive.or(c.transitive).unwrap_or(false);
            generators::gen_random(GameKind::DiskMixture { k, transitive }, need_n()?, ctx.seed)?
        }
        Kind::HybridDiskMixture => {
            let levels = a.levels.or(c.levels).unwrap_or(HYBRID_LEVELS);
            generators::gen_random(GameKind::HybridDiskMixture { k, levels }, need_n()?, ctx.seed)?
        }
    };
    ctx.out.write_matrix("game", p.matrix())
}

fn resolve_beta(p: &PayoffMatrix, beta: Beta, fallback: Option<f64>) -> Result<(f64, serde_json::Value)> {
    match beta {
        Beta::Value(b) => Ok((b, json!({ "beta_source": "user" }))),
        Beta::Auto => match beta_bound_tight(p) {
            Ok(b) => Ok((b, json!({ "beta_source": "tight" }))),
            Err(e @ (Error::NotTransitive { .. } | Error::NotRegular { .. })) => {
                let b = fallback
                    .ok_or_else(|| Error::InvalidParameter(format!("auto beta unavailable ({e}); pass --fallback-beta")))?;
                log::warn!("auto beta unavailable ({e}); using {b}");
                Ok((b, json!({ "beta_source": "fallback", "reason": e.to_string() })))
            }
            Err(e) => {
                let b = beta_bound_explicit(p, None)?.beta;
                log::warn!("tight beta search failed ({e}); using explicit bound {b}");
                Ok((b, json!({ "beta_source": "explicit", "reason": e.to_string() })))
            }
        },
    }
}

fn rate(ctx: &mut Ctx, a: RateArgs) -> Result<()> {
    let p = ctx.game(a.input)?;
    let c = &ctx.cfg;
    let method = match (a.method, &c.method) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_enum(s)?,
        (None, None) => RateMethod::Elo,
    };
    let fallback = a.fallback_beta.or(c.fallback_beta);
    let (report, rec) = match method {
        RateMethod::Elo => {
            let fit = fit_elo(&p, None)?;
            let rec = elo_game(&fit.ratings);
            let diagnostics = json!({
                "iterations": fit.iterations,
                "stationarity_residual": fit.residual,
                "loss": fit.loss,
                "transitive": is_transitive(&p),
            });
            let certified = same_sign(p.matrix(), &rec)?;
            (RatingsReport { method: "elo".into(), beta: None, ratings: fit.ratings, certified, diagnostics }, rec)
        }
        RateMethod::Hyperbolic => {
            let beta = a.beta.or(c.beta).unwrap_or(Beta::Auto);
            let (beta, mut diagnostics) = resolve_beta(&p, beta, fallback)?;
            let h = hyperbolic_elo(&p, beta, None)?;
            let certified = same_sign(p.matrix(), &h.reconstruction)?;
            diagnostics["transitive"] = json!(is_transitive(&p));
            let report =
                RatingsReport { method: "hyperbolic".into(), beta: Some(beta), ratings: h.ratings, certified, diagnostics };
            (report, h.reconstruction)
        }
        RateMethod::Potential => {
            let r = extract_potential(&p)?;
            let rec = if r.beta > 0.0 { hyperbolic_elo(&p, r.beta, None)?.reconstruction } else { elo_game(&r.phi) };
            let diagnostics = json!({ "implies_holds": r.implies_holds, "witness": r.witness });
            let report =
                RatingsReport { method: "potential".into(), beta: Some(r.beta), ratings: r.phi, certified: r.certified, diagnostics };
            (report, rec)
        }
    };
    println!("{}", ratings_table(&report));
    ctx.out.write_json("ratings.json", &report)?;
    ctx.out.write_matrix("reconstruction", &rec)
}

fn ratings_table(r: &RatingsReport) -> String {
    let mut s = format!("method {}", r.method);
    if let Some(b) = r.beta {
        s += &format!("  beta {}", sig4(b));
    }
    s += &format!("  certified {}\nplayer  rating\n", r.certified);
    for (i, x) in r.ratings.iter().enumerate() {
        s += &format!("{i:>6}  {}\n", sig4(*x));
    }
    s
}

fn decompose(ctx: &mut Ctx, a: DecomposeArgs) -> Result<()> {
    let p = ctx.game(a.input)?;
    let c = &ctx.cfg;
    let method = match (a.method, &c.method) {
        (Some(m), _) => m,
        (None, Some(s)) => parse_enum(s)?,
        (None, None) => DecomposeMethod::Schur,
    };
    let k = a.k.or(c.k);
    let opts = FitOptions { seed: ctx.seed, ..FitOptions::default() };
    let (dec, transform, extra) = match method {
        DecomposeMethod::Schur => {
            let full = schur_decompose(p.matrix())?;
            let dec = match k {
                Some(k) => truncate(&full, k)?,
                None => full,
            };
            (dec, Transform::Identity, json!({}))
        }
        DecomposeMethod::Melo => {
            let r = melo_decompose(&p, k.unwrap_or(3), None, &opts)?;
            let extra = json!({ "loss": r.loss, "iterations": r.iterations });
            (r.decomposition, Transform::Identity, extra)
        }
        DecomposeMethod::NormalBce => {
            let r = fit_normal_bce(&p, k.unwrap_or(3), None, &opts)?;
            let extra = json!({ "loss": r.loss, "iterations": r.iterations });
            (r.decomposition, Transform::Sigmoid, extra)
        }
        DecomposeMethod::ConstructCyclic => {
            let report = construct_cyclic_disks(&p)?;
            let (ok, violations) = verify_construction(&p, &report);
            if !ok {
                return Err(Error::ConstructionFailed(format!("{} violations", violations.len())));
            }
            ctx.out.write_json("construction.json", &report)?;
            let dec = Decomposition {
                n: p.n(),
                provenance: Provenance::Constructed,
                transitive: None,
                cyclic: report.disks.clone(),
            };
            (dec, Transform::Identity, json!({ "k": report.k, "bound": report.bound }))
        }
    };
    let rec = reconstruct(&dec, transform);
    println!("{} components: {}{}", method_name(method), dec.cyclic.len(), if dec.transitive.is_some() { " + transitive" } else { "" });
    ctx.out.write_json("decomposition.json", &dec)?;
    if let Some(t) = &dec.transitive {
        ctx.out.write_matrix("transitive", &t.matrix())?;
    }
    for (i, d) in dec.cyclic.iter().enumerate() {
        ctx.out.write_matrix(&format!("cyclic_{}", i + 1), &d.matrix())?;
    }
    ctx.out.write_matrix("reconstruction", &rec)?;
    let residual = (&rec - p.matrix()).norm();
    let metrics = json!({
        "method": method_name(method),
        "k": dec.cyclic.len(),
        "has_transitive": dec.transitive.is_some(),
        "frobenius_residual": residual,
        "sign_exact": same_sign(p.matrix(), &rec)?,
        "fit": extra,
    });
    ctx.out.write_json("metrics.json", &metrics)
}

fn method_name(m: DecomposeMethod) -> &'static str {
    match m {
        DecomposeMethod::Schur => "schur",
        DecomposeMethod::Melo => "melo",
        DecomposeMethod::NormalBce => "normal_bce",
        DecomposeMethod::ConstructCyclic => "construct_cyclic",
    }
}

fn learn(ctx: &mut Ctx, a: LearnArgs) -> Result<()> {
    let p = ctx.game(a.input)?;
    let cfg = ctx.learn_config(&a.train);
    let fraction = a.mask_fraction.or(ctx.cfg.mask_fraction).unwrap_or(0.0);
    let mask =
        if fraction > 0.0 { split_train_test(p.n(), fraction, ctx.seed)? } else { Mask::full(p.n()) };
    let start = Instant::now();
    let model = neural::train(&p, Some(&mask), &cfg)?;
    let runtime = start.elapsed().as_secs_f64();
    let pred = model.predict_matrix();
    let acc = sign_accuracy(&pred, &p, &mask)?;
    let (mistakes, tie_violations) = neural::sign_mistakes(&model.d_matrix(), &p)?;
    let metrics = json!({
        "n": p.n(),
        "k": cfg.k,
        "m": cfg.m,
        "iterations": cfg.iterations,
        "learn_transitive": model.learn_transitive,
        "sign_accuracy": acc,
        "sign_mistakes": mistakes,
        "tie_violations": tie_violations,
        "initial_loss": model.initial_loss,
        "final_loss": model.final_loss,
        "potential": model.potential(),
        "runtime_seconds": runtime,
    });
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), sig4);
    println!(
        "sign accuracy {} (train {}), sign mistakes {mistakes}, loss {} -> {}",
        pct(acc.overall),
        pct(acc.train),
        sig4(model.initial_loss.total),
        sig4(model.final_loss.total),
    );
    ctx.out.write("model.json", &model.to_json()?)?;
    ctx.out.write_json("metrics.json", &metrics)?;
    let mut plot = String::from("i,j,d,p,basis,phi\n");
    for r in model.plot_rows(&p) {
        plot += &format!("{},{},{},{},{},{}\n", r.i, r.j, fmt17(r.d), fmt17(r.p), r.basis, fmt17(r.phi));
    }
    ctx.out.write("plot.csv", &plot)?;
    let mut hist = String::from("iteration,total,proba,basis,sign_t,sign_c,gs\n");
    for h in &model.history {
        let l = &h.loss;
        hist += &format!(
            "{},{},{},{},{},{},{}\n",
            h.iteration,
            fmt17(l.total),
            fmt17(l.proba),
            fmt17(l.basis),
            fmt17(l.sign_t),
            fmt17(l.sign_c),
            fmt17(l.gs)
        );
    }
    ctx.out.write("history.csv", &hist)
}

fn eval(ctx: &mut Ctx, a: EvalArgs) -> Result<()> {
    let p = ctx.game(a.input)?;
    let c = &ctx.cfg;
    let defaults = EvalConfig::default();
    let learn = ctx.learn_config(&a.train);
    let cfg = EvalConfig {
        k: a.train.k.or(c.k).unwrap_or(defaults.k),
        seeds: a.seeds.or_else(|| c.seeds.clone()).unwrap_or(defaults.seeds),
        mask_fraction: a.mask_fraction.or(c.mask_fraction).unwrap_or(defaults.mask_fraction),
        methods: a.methods.or_else(|| c.methods.clone()).unwrap_or(defaults.methods),
        learn,
        fit: FitOptions { seed: ctx.seed, ..FitOptions::default() },
    };
    let cmp = compare_methods(&p, &cfg)?;
    let table = cmp.table();
    println!("{table}");
    ctx.out.write("comparison.txt", &table)?;
    match ctx.out.format {
        Format::Csv => ctx.out.write("comparison.csv", &cmp.csv()),
        Format::Json => ctx.out.write_json("comparison.json", &cmp),
    }
}

fn simulate(ctx: &mut Ctx, a: SimulateArgs) -> Result<()> {
    let p = ctx.game(a.input)?;
    let c = &ctx.cfg;
    let variant = match (a.variant, &c.method) {
        (Some(v), _) => v,
        (None, Some(s)) => parse_enum(s)?,
        (None, None) => Variant::Hyperbolic,
    };
    let g = match a.g {
        Some(GArg::Scaled) => GMode::Scaled,
        Some(GArg::Identity) => GMode::Identity,
        None => c.g.unwrap_or(GMode::Scaled),
    };
    let rule = match variant {
        Variant::Elo => OnlineRule::Elo,
        Variant::Hyperbolic => {
            let beta = match (a.beta, c.beta) {
                (Some(b), _) | (None, Some(Beta::Value(b))) => b,
                (None, Some(Beta::Auto)) | (None, None) => 5.0,
            };
            OnlineRule::Hyperbolic { beta, g }
        }
    };
    let defaults = StepSchedule::default();
    let sim_cfg = SimulationConfig {
        steps: a.steps.or(c.steps).unwrap_or(3000),
        simulations: a.sims.or(c.simulations).unwrap_or(200),
        rule,
        schedule: StepSchedule {
            scale: a.eta_scale.or(c.eta_scale).unwrap_or(defaults.scale),
            power: a.eta_power.or(c.eta_power).unwrap_or(defaults.power),
        },
        seed: ctx.seed,
    };
    let sim = simulate_online(&p, &sim_cfg)?;
    let gap = sim.final_mean.iter().zip(&sim.offline).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.n() as f64;
    println!("mean absolute gap to offline ratings {}", sig4(gap));
    ctx.out.write("trajectory.csv", &io::trajectory_csv(&sim))?;
    let summary = json!({
        "config": sim_cfg,
        "final_mean": sim.final_mean,
        "offline": sim.offline,
        "mean_abs_gap": gap,
    });
    ctx.out.write_json("summary.json", &summary)
}
