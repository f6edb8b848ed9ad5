//! `ddopt` command-line front end.
//!
//! Units: angular frequencies (J, beta) in rad/ns, times (tau_d, tau_p,
//! tau_c) in ns. Every command writes its outputs plus a
//! `<command>.manifest.json` that `ddopt replay` can re-run.

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddopt::ga::{run_ga, write_history_csv, GaConfig, GaError};
use ddopt::linalg::sup_norm;
use ddopt::metrics::{effective_error_hamiltonian, evaluate, fit_scaling, MetricsError};
use ddopt::model::{BathSpec, ModelError, PulseModel, SystemModel};
use ddopt::propagator::cycle_propagator;
use ddopt::sequence::{cyclic_ok, parse_family_spec, Sequence, SequenceError};
use ddopt::sweep::{compare, landscape_2d, sweep_1d, write_csv, ModelKind, Params, SweepError, SweepPlan};
use serde::{Deserialize, Serialize};
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const OUT_DIR_ENV: &str = "DDOPT_OUT_DIR";

#[derive(Parser)]
#[command(name = "ddopt", version, about = "Dynamical-decoupling sequence simulation and search (rad/ns, ns)")]
struct Cli {
    /// Worker threads for sweeps and GA fitness evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output directory. Defaults to $DDOPT_OUT_DIR, then `ddopt-out`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distance of one sequence cycle from the identity.
    Simulate(SimArgs),
    /// Genetic search configured by a JSON document.
    Optimize {
        config: PathBuf,
        /// Append the best sequence to this ledger file.
        #[arg(long)]
        ledger: Option<PathBuf>,
    },
    /// One-parameter sweep from a JSON plan.
    Sweep { plan: PathBuf },
    /// Two-parameter optimal-sequence landscape from a JSON plan.
    Landscape { plan: PathBuf },
    /// Rank sequences at fixed parameters.
    Compare(CompareArgs),
    /// Effective Hamiltonian channel norms of one cycle.
    Heff(SimArgs),
    /// Log-log fit of a CSV column pair.
    Fit(FitArgs),
    /// Re-run the command recorded in a manifest.
    Replay { manifest: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum ModelArg {
    Ideal,
    FiniteWidth,
    FlipAngle,
    FiniteWidthFlipAngle,
}

impl ModelArg {
    fn kind(self) -> ModelKind {
        match self {
            ModelArg::Ideal => ModelKind::Ideal,
            ModelArg::FiniteWidth => ModelKind::FiniteWidth,
            ModelArg::FlipAngle => ModelKind::FlipAngle,
            ModelArg::FiniteWidthFlipAngle => ModelKind::FiniteWidthFlipAngle,
        }
    }
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct SimArgs {
    /// Named family, e.g. `xy4`, `ga8a:X,Y`, `cdd3`, `qdd3,3`.
    #[arg(long, conflicts_with = "seq_file", required_unless_present = "seq_file")]
    seq: Option<String>,
    /// File in the `interval_ns:LABEL` text format.
    #[arg(long)]
    #[serde(skip)]
    seq_file: Option<PathBuf>,
    /// Contents of `seq_file`, kept for replay.
    #[arg(skip)]
    seq_text: Option<String>,
    #[arg(long, value_enum, default_value = "ideal")]
    model: ModelArg,
    #[arg(long = "J")]
    j: f64,
    #[arg(long)]
    beta: f64,
    /// Pulse interval. Required for named families; rescales a sequence file.
    #[arg(long)]
    tau_d: Option<f64>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Bath realization seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    n_spins: usize,
}

#[derive(Args, Clone, Debug)]
struct CompareArgs {
    /// JSON plan without axes. Overrides the other flags.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Sequence family spec; repeat for each sequence.
    #[arg(long = "seq")]
    seqs: Vec<String>,
    #[arg(long, value_enum, default_value = "ideal")]
    model: ModelArg,
    #[arg(long = "J")]
    j: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau_d: Option<f64>,
    /// Fix the cycle time instead of the pulse interval.
    #[arg(long)]
    tau_c: Option<f64>,
    #[arg(long)]
    tau_p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, default_value_t = 10)]
    n_seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    n_spins: usize,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
struct FitArgs {
    /// CSV file, e.g. the output of `sweep`.
    #[arg(long)]
    csv: PathBuf,
    /// Keep only rows whose `sequence` column equals this.
    #[arg(long)]
    sequence: Option<String>,
    #[arg(long, default_value = "x")]
    x: String,
    #[arg(long, default_value = "D_mean")]
    y: String,
}

/// Fully resolved command, as stored in a manifest.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
enum Job {
    Simulate(SimArgs),
    Optimize { ga: GaConfig, ledger: Option<PathBuf> },
    Sweep(SweepPlan),
    Landscape(SweepPlan),
    Compare(SweepPlan),
    Heff(SimArgs),
    Fit(FitArgs),
}

impl Job {
    fn name(&self) -> &'static str {
        match self {
            Job::Simulate(_) => "simulate",
            Job::Optimize { .. } => "optimize",
            Job::Sweep(_) => "sweep",
            Job::Landscape(_) => "landscape",
            Job::Compare(_) => "compare",
            Job::Heff(_) => "heff",
            Job::Fit(_) => "fit",
        }
    }

    fn seed(&self) -> Option<u64> {
        match self {
            Job::Simulate(a) | Job::Heff(a) => Some(a.seed),
            Job::Optimize { ga, .. } => Some(ga.seed),
            Job::Sweep(p) | Job::Landscape(p) | Job::Compare(p) => Some(p.seed),
            Job::Fit(_) => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    #[serde(flatten)]
    job: Job,
    version: String,
    seed: Option<u64>,
    out_dir: PathBuf,
    outputs: Vec<PathBuf>,
    wall_clock_s: f64,
}

/// Error with its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn usage(m: impl Display) -> Failure {
    Failure {
        code: 2,
        message: m.to_string(),
    }
}

fn numeric(m: impl Display) -> Failure {
    Failure {
        code: 3,
        message: m.to_string(),
    }
}

impl From<SequenceError> for Failure {
    fn from(e: SequenceError) -> Self {
        usage(e)
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Linalg(_) => numeric(e),
            _ => usage(e),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Linalg(_) => numeric(e),
            _ => usage(e),
        }
    }
}

impl From<GaError> for Failure {
    fn from(e: GaError) -> Self {
        match e {
            GaError::Model(m) => m.into(),
            _ => usage(e),
        }
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Model(m) => m.into(),
            _ => usage(e),
        }
    }
}

fn io_err(path: &Path, e: impl Display) -> Failure {
    usage(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read_text(path)?).map_err(|e| io_err(path, e))
}

fn pulse_model(kind: ModelKind, tau_p: Option<f64>, epsilon: Option<f64>) -> Result<PulseModel, Failure> {
    let need = |v: Option<f64>, what: &str| v.ok_or_else(|| usage(format!("--{what} is required by this pulse model")));
    let m = match kind {
        ModelKind::Ideal => PulseModel::Ideal,
        ModelKind::FiniteWidth => PulseModel::FiniteWidth {
            tau_p: need(tau_p, "tau-p")?,
        },
        ModelKind::FlipAngle => PulseModel::FlipAngle {
            epsilon: need(epsilon, "epsilon")?,
        },
        ModelKind::FiniteWidthFlipAngle => PulseModel::FiniteWidthFlipAngle {
            tau_p: need(tau_p, "tau-p")?,
            epsilon: need(epsilon, "epsilon")?,
        },
    };
    m.validate()?;
    Ok(m)
}

fn resolve_sim(mut a: SimArgs) -> Result<SimArgs, Failure> {
    if let Some(path) = &a.seq_file {
        a.seq_text = Some(read_text(path)?);
    }
    Ok(a)
}

fn build_sim(a: &SimArgs) -> Result<(Sequence, SystemModel, PulseModel), Failure> {
    let model = pulse_model(a.model.kind(), a.tau_p, a.epsilon)?;
    let seq = match (&a.seq, &a.seq_text) {
        (Some(spec), _) => {
            let tau_d = a.tau_d.ok_or_else(|| usage("--tau-d is required with --seq"))?;
            parse_family_spec(spec, tau_d)?.renamed(spec.clone())
        }
        (None, Some(text)) => {
            let s = Sequence::parse_text("file", text)?;
            if !cyclic_ok(&s) {
                return Err(SequenceError::NotCyclic(s.name).into());
            }
            match a.tau_d {
                Some(t) => s.with_tau_d(t),
                None => s,
            }
        }
        (None, None) => return Err(usage("one of --seq or --seq-file is required")),
    };
    let spec = BathSpec::new(a.n_spins, a.seed, a.j, a.beta)?;
    let sys = SystemModel::random(&spec)?;
    Ok((seq, sys, model))
}

fn compare_plan(a: CompareArgs) -> Result<SweepPlan, Failure> {
    if let Some(p) = &a.plan {
        return read_json(p);
    }
    Ok(SweepPlan {
        axes: Vec::new(),
        fixed: Params {
            tau_d: a.tau_d,
            tau_c: a.tau_c,
            j: a.j,
            beta: a.beta,
            tau_p: a.tau_p,
            epsilon: a.epsilon,
            ..Default::default()
        },
        sequences: a.seqs,
        pulse_model: a.model.kind(),
        n_spins: a.n_spins,
        n_seeds: a.n_seeds,
        seed: a.seed,
    })
}

/// Output writer that records every file it creates.
struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<fs::File, Failure> {
        let path = self.dir.join(name);
        let f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
        self.written.push(path);
        Ok(f)
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) -> Result<(), Failure> {
        let mut f = self.create(name)?;
        let text = serde_json::to_string_pretty(v).map_err(usage)?;
        writeln!(f, "{text}").map_err(|e| io_err(&self.dir.join(name), e))
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<(), Failure> {
        let f = self.create(name)?;
        write_csv(rows, f).map_err(|e| io_err(&self.dir.join(name), e))
    }
}

fn run_simulate(a: &SimArgs, out: &mut Outputs) -> Result<(), Failure> {
    let (seq, sys, model) = build_sim(a)?;
    let rep = evaluate(&seq, &sys, &model)?;
    let x = (a.j + a.beta) * rep.tau_c;
    println!("sequence        {}", seq.name);
    println!("pulses          {}", seq.executed_pulse_count(&model));
    println!("D               {:.5e}", rep.d);
    println!("q               {:.6}", rep.fitness);
    println!("tau_c (ns)      {:.6}", rep.tau_c);
    println!("(J+beta)*tau_c  {:.5e}", x);
    let doc = serde_json::json!({
        "sequence": seq.name,
        "text": seq.to_text(),
        "pulse_model": model,
        "D": rep.d,
        "q": rep.fitness,
        "tau_c": rep.tau_c,
        "J_plus_beta_tau_c": x,
        "J_tau_d": a.j * seq.tau_d,
        "beta_tau_d": a.beta * seq.tau_d,
    });
    out.json("simulate.json", &doc)
}

fn run_heff(a: &SimArgs, out: &mut Outputs) -> Result<(), Failure> {
    let (seq, sys, model) = build_sim(a)?;
    let p = cycle_propagator(&seq, &sys, &model)?;
    let rep = effective_error_hamiltonian(&p.to_cmatrix(), p.tau_c, sys.d_s, sys.d_b)?;
    let bare: Vec<f64> = sys.channels.iter().map(sup_norm).collect();
    println!("sequence           {}", seq.name);
    for (i, ax) in ["x", "y", "z"].iter().enumerate() {
        println!("|B_{ax}| effective   {:.5e}   bare {:.5e}", rep.channel_norms[i], bare[i]);
    }
    println!("|H_B| effective    {:.5e}", rep.bath_norm);
    println!("|H_err| effective  {:.5e}", rep.err_norm);
    let doc = serde_json::json!({
        "sequence": seq.name,
        "pulse_model": model,
        "tau_c": p.tau_c,
        "effective": rep,
        "bare_channel_norms": bare,
    });
    out.json("heff.json", &doc)
}

fn run_fit(a: &FitArgs, out: &mut Outputs) -> Result<(), Failure> {
    let mut rdr = csv::Reader::from_path(&a.csv).map_err(|e| io_err(&a.csv, e))?;
    let headers = rdr.headers().map_err(|e| io_err(&a.csv, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| usage(format!("{}: no column '{name}'", a.csv.display())))
    };
    let (xi, yi) = (col(&a.x)?, col(&a.y)?);
    let si = match &a.sequence {
        Some(_) => Some(col("sequence")?),
        None => None,
    };
    let mut pts = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| io_err(&a.csv, e))?;
        if let (Some(i), Some(want)) = (si, &a.sequence) {
            if rec.get(i) != Some(want.as_str()) {
                continue;
            }
        }
        let num = |i: usize| rec.get(i).and_then(|s| s.parse::<f64>().ok());
        if let (Some(x), Some(y)) = (num(xi), num(yi)) {
            if x > 0.0 && y > 0.0 {
                pts.push((x, y));
            }
        }
    }
    let fit = fit_scaling(&pts)?;
    println!("slope      {:.6}", fit.slope);
    println!("intercept  {:.6}", fit.intercept);
    println!("r^2        {:.6}", fit.r_squared);
    println!("points     {}", fit.n_points);
    out.json(
        "fit.json",
        &serde_json::json!({
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "n_points": fit.n_points,
            "order_if_x_is_tau": fit.slope - 1.0,
        }),
    )
}

fn execute(job: &Job, out: &mut Outputs) -> Result<(), Failure> {
    match job {
        Job::Simulate(a) => run_simulate(a, out),
        Job::Heff(a) => run_heff(a, out),
        Job::Fit(a) => run_fit(a, out),
        Job::Optimize { ga, ledger } => {
            let res = run_ga(ga.clone())?;
            let text = res.best.to_text();
            println!("best  {text}");
            println!("q     {:.6}", res.best_q);
            for lb in &res.level_bests {
                println!("level {} ({} groups): q={:.4}  {}", lb.level, lb.groups, lb.q, lb.sequence);
            }
            let f = out.create("ga_history.csv")?;
            write_history_csv(&res.history, f).map_err(usage)?;
            out.json(
                "ga_result.json",
                &serde_json::json!({
                    "best": text,
                    "q": res.best_q,
                    "level_bests": res.level_bests,
                }),
            )?;
            let entry = format!(
                "# K={} model={} tau_d={} J={} beta={} seed={} q={}\n{text}\n",
                ga.k, ga.pulse_model, ga.tau_d, ga.j, ga.beta, ga.seed, res.best_q
            );
            let mut f = out.create("ga_best.seq")?;
            f.write_all(entry.as_bytes()).map_err(usage)?;
            if let Some(path) = ledger {
                let mut f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| io_err(path, e))?;
                f.write_all(entry.as_bytes()).map_err(|e| io_err(path, e))?;
            }
            Ok(())
        }
        Job::Sweep(plan) => {
            let rows = sweep_1d(plan, &plan.templates()?)?;
            println!("{} rows", rows.len());
            out.csv("sweep.csv", &rows)
        }
        Job::Landscape(plan) => {
            let (cells, rows) = landscape_2d(plan, &plan.templates()?)?;
            for c in &cells {
                println!("x={:.4e} y={:.4e} winner={}", c.x, c.y, c.winner);
            }
            out.csv("landscape.csv", &cells)?;
            out.csv("landscape_rows.csv", &rows)
        }
        Job::Compare(plan) => {
            if plan.sequences.is_empty() {
                return Err(usage("compare needs at least one sequence"));
            }
            let rows = compare(plan, &plan.templates()?)?;
            for r in &rows {
                let d = r.d.map(|d| format!("{d:.5e}")).unwrap_or_else(|| format!("- ({})", r.reason));
                println!("{:>3}  {:<20} pulses={:<5} D={d}", r.rank, r.sequence, r.pulses);
            }
            out.csv("compare.csv", &rows)
        }
    }
}

fn resolve(cmd: Command) -> Result<Result<Job, RunManifest>, Failure> {
    Ok(Ok(match cmd {
        Command::Simulate(a) => Job::Simulate(resolve_sim(a)?),
        Command::Heff(a) => Job::Heff(resolve_sim(a)?),
        Command::Optimize { config, ledger } => Job::Optimize {
            ga: read_json(&config)?,
            ledger,
        },
        Command::Sweep { plan } => Job::Sweep(read_json(&plan)?),
        Command::Landscape { plan } => Job::Landscape(read_json(&plan)?),
        Command::Compare(a) => Job::Compare(compare_plan(a)?),
        Command::Fit(a) => Job::Fit(a),
        Command::Replay { manifest } => return Ok(Err(read_json(&manifest)?)),
    }))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.jobs)
            .build_global()
            .map_err(usage)?;
    }
    let explicit_dir = cli
        .out_dir
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
    let (job, dir) = match resolve(cli.command)? {
        Ok(job) => (job, explicit_dir.unwrap_or_else(|| PathBuf::from("ddopt-out"))),
        Err(m) => (m.job, explicit_dir.unwrap_or(m.out_dir)),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut out = Outputs {
        dir: dir.clone(),
        written: Vec::new(),
    };
    let start = Instant::now();
    execute(&job, &mut out)?;
    let manifest = RunManifest {
        seed: job.seed(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        out_dir: dir,
        outputs: out.written.clone(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        job,
    };
    let name = format!("{}.manifest.json", manifest.job.name());
    out.json(&name, &manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
