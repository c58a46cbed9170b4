//! Command-line experiments: each subcommand reads an [`ExperimentConfig`],
//! runs one computation and writes CSV data, `report.json` and a
//! `*.manifest.json` beside every file.

pub mod config;

use std::path::{Path, PathBuf};

use angelesco::acceptance;
use angelesco::energy::weighted_energy;
use angelesco::ensemble::{
    delta_q, gibbs_sample, log_sector_factor, log_z_quadrature, z_fekete_bounds, SamplerOptions,
    DEFAULT_REFINE, MAX_QUADRATURE_N,
};
use angelesco::equilibrium::{solve_equilibrium, EquilibriumSolution, SolverOptions};
use angelesco::fekete::{fekete_points, FeketeOptions};
use angelesco::io::{configuration_csv, csv, equilibrium_csv, samples_csv, Cell};
use angelesco::ldp::{
    bm_constant, q_shift_identity_check, rate_function, w_functional_quantile_probe,
};
use angelesco::measure::{counting_measure, weak_star_distance, Discretization, Normalization};
use angelesco::mop::{expectation_identity_check, orthogonality_residual, solve_mop};
use angelesco::system::Configuration;
use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use config::{ConfigError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "angelesco", version, about = "Angelesco ensemble experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides the configured grid size.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Equilibrium measure and energy.
    Eqm,
    /// Fekete configurations along the sequence.
    Fekete,
    /// Gibbs samples at one sequence index.
    Sample,
    /// Multiple orthogonal polynomial and the expectation identity.
    Mop,
    /// Normalizing constants and Fekete bounds.
    Zconst,
    /// Rate function, quantile probe and field-shift check.
    Ldp,
    /// Bernstein-Markov constants.
    Bm,
    /// Acceptance suite.
    Verify {
        /// Criteria to run, e.g. `1,2,7`; all when omitted.
        #[arg(long, value_delimiter = ',')]
        criteria: Vec<usize>,
    },
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(angelesco::Error),
    Acceptance(Vec<usize>),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Acceptance(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(e) => write!(f, "numerical failure ({}): {e}", e.name()),
            Failure::Acceptance(ids) => write!(f, "acceptance criteria failed: {ids:?}"),
        }
    }
}

impl From<angelesco::Error> for Failure {
    fn from(e: angelesco::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.0)
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

/// Writes artifacts and their manifests into one directory.
struct Output {
    dir: PathBuf,
    command: &'static str,
    config: Option<ExperimentConfig>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Output {
    fn new(dir: &Path, command: &'static str, config: Option<ExperimentConfig>) -> Outcome<Self> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Failure::Config(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            command,
            config,
        })
    }

    fn write(&self, name: &str, content: &str, extra: Value) -> Outcome<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, content)
            .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        let mut manifest = json!({
            "program": "angelesco",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "artifact": name,
            "artifact_sha256": sha256_hex(content.as_bytes()),
        });
        if let Some(cfg) = &self.config {
            manifest["config_sha256"] = json!(sha256_hex(cfg.canonical().as_bytes()));
            manifest["seed"] = json!(cfg.seed);
            manifest["config"] = serde_json::to_value(cfg).expect("config serializes");
        }
        if let Value::Object(extra) = extra {
            manifest.as_object_mut().unwrap().extend(extra);
        }
        let stem = name.rsplit_once('.').map_or(name, |(s, _)| s);
        let mpath = self.dir.join(format!("{stem}.manifest.json"));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        std::fs::write(&mpath, text)
            .map_err(|e| Failure::Config(format!("{}: {e}", mpath.display())))
    }

    fn report(&self, report: Value) -> Outcome<()> {
        let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        self.write("report.json", &text, Value::Null)
    }
}

/// Loads the config named by `cli` and applies the flag overrides.
pub fn effective_config(cli: &Cli) -> Outcome<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config is required for this command".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(grid) = cli.grid {
        cfg.grid = grid;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Outcome<()> {
    if let Some(n) = cli.threads {
        // Fails only if a pool already exists, which then stays in use.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global();
    }
    if let Command::Verify { criteria } = &cli.command {
        return verify(cli, criteria);
    }
    let cfg = effective_config(cli)?;
    match cli.command {
        Command::Eqm => eqm(cli, cfg),
        Command::Fekete => fekete(cli, cfg),
        Command::Sample => sample(cli, cfg),
        Command::Mop => mop(cli, cfg),
        Command::Zconst => zconst(cli, cfg),
        Command::Ldp => ldp(cli, cfg),
        Command::Bm => bm(cli, cfg),
        Command::Verify { .. } => unreachable!(),
    }
}

fn solve(cfg: &ExperimentConfig) -> Outcome<EquilibriumSolution> {
    let opts = SolverOptions {
        cells: cfg.grid,
        tol: cfg.eqm.tol,
        max_iter: cfg.eqm.max_iter,
        initial: None,
    };
    Ok(solve_equilibrium(&cfg.system()?, &cfg.field()?, &opts)?)
}

fn fekete_options(cfg: &ExperimentConfig) -> FeketeOptions {
    FeketeOptions {
        n_starts: cfg.fekete.n_starts,
        tol: cfg.fekete.tol,
        seed: cfg.seed,
        ..FeketeOptions::default()
    }
}

fn eqm(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let sol = solve(&cfg)?;
    let out = Output::new(&cli.out, "eqm", Some(cfg))?;
    out.write(
        "equilibrium.csv",
        &equilibrium_csv(&sol.measure),
        Value::Null,
    )?;
    out.report(json!({
        "equilibrium": sol.summary(),
        "delta_q": delta_q(&sol),
    }))
}

fn fekete(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let sys = cfg.system()?;
    let field = cfg.field()?;
    let seq = cfg.sequence();
    let eq = solve(&cfg)?;
    let disc = Discretization::new(&sys, cfg.grid)?;
    let opts = fekete_options(&cfg);
    let out = Output::new(&cli.out, "fekete", Some(cfg.clone()))?;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for d in 1..=cfg.fekete.d_max {
        let m = seq.get(d)?;
        let res = fekete_points(&sys, &field, &m, &opts)?;
        let mu = counting_measure(&res.config, &disc, Normalization::Global)?;
        let distance = weak_star_distance(&mu, &eq.measure)?;
        out.write(
            &format!("fekete_d{d}.csv"),
            &configuration_csv(&res.config),
            json!({ "d": d }),
        )?;
        rows.push(vec![
            d.into(),
            m.total().into(),
            res.log_a.into(),
            res.normalized.into(),
            distance.into(),
        ]);
        summaries.push(res.summary());
    }
    out.write(
        "fekete_asymptotics.csv",
        &csv(&["d", "n", "log_a", "normalized", "distance"], rows),
        Value::Null,
    )?;
    out.report(json!({
        "target": -eq.energy.total,
        "configurations": summaries,
    }))
}

fn sample(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let spec = cfg.spec()?;
    let p = &cfg.sample;
    let opts = SamplerOptions {
        n_samples: p.n_samples,
        burn_in: p.burn_in,
        thin: p.thin,
        seed: cfg.seed,
        refine: DEFAULT_REFINE,
        chains: p.chains,
    };
    let batch = gibbs_sample(&spec, p.d, &opts)?;
    let m = spec.multi_index(p.d)?;
    let out = Output::new(&cli.out, "sample", Some(cfg.clone()))?;
    let params = json!({
        "d": p.d,
        "burn_in": batch.burn_in,
        "thin": batch.sweeps_per_sample,
        "chains": batch.chains,
    });
    out.write("samples.csv", &samples_csv(&batch), params)?;
    out.report(json!({
        "d": p.d,
        "multi_index": m.counts(),
        "n_samples": batch.configs.len(),
        "burn_in": batch.burn_in,
        "thin": batch.sweeps_per_sample,
        "chains": batch.chains,
    }))
}

fn mop(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let spec = cfg.spec()?;
    let d = cfg.mop.d;
    let m = spec.multi_index(d)?;
    let poly = solve_mop(&spec, &m)?;
    let residual = orthogonality_residual(&spec, &m, &poly);
    let roots: Vec<Vec<f64>> = cfg
        .system()?
        .intervals()
        .iter()
        .map(|iv| poly.roots_in(iv.a, iv.b, 4096))
        .collect();
    let mode = cfg.mop_mode(m.total());
    let rows = expectation_identity_check(&spec, d, &cfg.mop.z_points, mode)?;
    let out = Output::new(&cli.out, "mop", Some(cfg))?;
    let poly_json = json!({
        "multi_index": m.counts(),
        "degree": poly.degree(),
        "coefficients_ascending": poly.coefficients(),
        "roots": roots,
    });
    out.write(
        "polynomial.json",
        &(serde_json::to_string_pretty(&poly_json).expect("serializes") + "\n"),
        Value::Null,
    )?;
    let table = rows.iter().map(|r| {
        vec![
            r.z.into(),
            r.polynomial.into(),
            r.expectation.into(),
            r.std_error.into(),
        ]
    });
    out.write(
        "identity.csv",
        &csv(&["z", "polynomial", "expectation", "std_error"], table),
        json!({ "mode": mode }),
    )?;
    let worst = rows
        .iter()
        .map(|r| (r.polynomial - r.expectation).abs())
        .fold(0.0, f64::max);
    out.report(json!({
        "multi_index": m.counts(),
        "orthogonality_residual": residual,
        "identity_max_abs_error": worst,
        "mode": mode,
    }))
}

fn zconst(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let spec = cfg.spec()?;
    let opts = fekete_options(&cfg);
    let mut rows = Vec::new();
    for &d in &cfg.zconst.d_list {
        let m = spec.multi_index(d)?;
        let log_z = if m.total() <= MAX_QUADRATURE_N {
            Some(log_z_quadrature(&spec, d, cfg.zconst.rule)?)
        } else {
            None
        };
        let f = fekete_points(spec.system(), spec.field(), &m, &opts)?;
        let b = z_fekete_bounds(&spec, d, &f, cfg.zconst.epsilon)?;
        rows.push(vec![
            d.into(),
            m.total().into(),
            log_z.into(),
            b.lower.into(),
            b.upper.into(),
            log_sector_factor(&m).into(),
            b.c_mass.into(),
            b.c_bm.into(),
        ]);
    }
    let out = Output::new(&cli.out, "zconst", Some(cfg.clone()))?;
    let convention = "log Z over the full product of intervals; subtract log_sector_factor = log prod n_i! for the ordered sector";
    out.write(
        "zconst.csv",
        &csv(
            &["d", "n", "log_z", "log_z_lower", "log_z_upper", "log_sector_factor", "c_mass", "c_bm"],
            rows,
        ),
        json!({ "z_convention": convention, "rule": cfg.zconst.rule, "epsilon": cfg.zconst.epsilon }),
    )?;
    out.report(json!({ "z_convention": convention, "d_list": cfg.zconst.d_list }))
}

fn ldp(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let sys = cfg.system()?;
    let field = cfg.field()?;
    let eq = solve(&cfg)?;
    let uniform = Discretization::new(&sys, cfg.grid)?.uniform_measure();
    let rate_uniform = rate_function(&uniform, &field, &eq)?.summary();
    let rate_eq = rate_function(&eq.measure, &field, &eq)?.summary();
    let probe = w_functional_quantile_probe(&eq.measure, &field, &cfg.ldp.n_list)?;
    let target = -eq.energy.total;

    let m = cfg.sequence().get(1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut shifts = Vec::new();
    let mut worst: f64 = 0.0;
    for trial in 0..cfg.ldp.q_shift_trials {
        let blocks = (0..sys.p())
            .map(|i| {
                let iv = sys.interval(i);
                (0..m.count(i))
                    .map(|_| iv.a + iv.len() * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let x = Configuration::new(blocks, &sys)?;
        let (lhs, rhs) = q_shift_identity_check(&x, &field);
        let err = (lhs - rhs).abs() / rhs.abs().max(1.0);
        worst = worst.max(err);
        shifts.push(vec![(trial + 1).into(), lhs.into(), rhs.into(), err.into()]);
    }

    let out = Output::new(&cli.out, "ldp", Some(cfg))?;
    let probe_rows = probe
        .iter()
        .map(|r| vec![r.n.into(), r.normalized.into(), target.into()]);
    out.write(
        "quantile_probe.csv",
        &csv(&["n", "normalized_log_a", "log_delta_q"], probe_rows),
        Value::Null,
    )?;
    out.write(
        "q_shift.csv",
        &csv(&["trial", "lhs", "rhs", "relative_error"], shifts),
        Value::Null,
    )?;
    out.report(json!({
        "energy_eq": eq.energy.total,
        "uniform_energy": weighted_energy(&uniform, &field)?.total,
        "rate_uniform": rate_uniform,
        "rate_equilibrium": rate_eq,
        "q_shift_max_relative_error": worst,
    }))
}

fn bm(cli: &Cli, cfg: ExperimentConfig) -> Outcome<()> {
    let spec = cfg.spec()?;
    let mut rows: Vec<Vec<Cell>> = Vec::new();
    for (i, tau) in spec.bases().iter().enumerate() {
        for &deg in &cfg.bm.degrees {
            let weight = cfg
                .bm
                .weighted
                .then(|| (spec.field().component(i), deg as f64));
            let e = bm_constant(tau, deg, weight)?;
            rows.push(vec![
                (i + 1).into(),
                deg.into(),
                e.beta.into(),
                e.root.into(),
            ]);
        }
    }
    let out = Output::new(&cli.out, "bm", Some(cfg.clone()))?;
    out.write(
        "bm.csv",
        &csv(&["interval_index", "degree", "beta", "root"], rows),
        json!({ "weighted": cfg.bm.weighted }),
    )?;
    out.report(json!({ "degrees": cfg.bm.degrees, "weighted": cfg.bm.weighted }))
}

fn verify(cli: &Cli, criteria: &[usize]) -> Outcome<()> {
    let cfg = match &cli.config {
        Some(_) => Some(effective_config(cli)?),
        None => None,
    };
    let mut ids = criteria.to_vec();
    if ids.is_empty() {
        ids = cfg
            .as_ref()
            .map(|c| c.verify.criteria.clone())
            .unwrap_or_default();
    }
    if ids.is_empty() {
        ids = (1..=acceptance::NAMES.len()).collect();
    }
    if let Some(bad) = ids
        .iter()
        .find(|&&id| id == 0 || id > acceptance::NAMES.len())
    {
        return Err(Failure::Config(format!("no acceptance criterion {bad}")));
    }
    let outcomes: Vec<_> = ids
        .iter()
        .map(|&id| {
            let o = acceptance::run(id);
            println!("{}", o.line());
            o
        })
        .collect();
    let out = Output::new(&cli.out, "verify", cfg)?;
    out.report(json!({ "outcomes": outcomes }))?;
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.ok()).map(|o| o.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Acceptance(failed))
    }
}
