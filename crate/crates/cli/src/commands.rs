use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use uqd::equivalence::{self, EquivalenceReport, MatchingOptions};
use uqd::format;
use uqd::gauge::{self, BlockIsometry, BlockIsometryDocument};
use uqd::linalg::{CVector, C64};
use uqd::models::{self, QutritBParams, QutritParams};
use uqd::sjed;
use uqd::trajectory::{self, Ensemble};
use uqd::verify::{self, CompareOptions, EnsembleComparison, EnsembleInput, Level, Observable};
use uqd::{Error, PureState, Representation, Tolerance};

use crate::{
    CheckArgs, CheckLevel, Cli, Command, CompareArgs, EnsembleLevel, ExampleArgs, ExampleName, Fig1Args, GaugeCommand,
    QutritAArgs, RateScanArgs, SimulateArgs,
};

#[derive(Debug)]
pub enum Failure {
    /// Bad arguments or unreadable files.
    Usage(String),
    /// Input that parses but fails validation, or a numerical failure.
    Invalid(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Invalid(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) | Self::Invalid(m) => f.write_str(m),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

type Outcome = Result<bool, Failure>;

struct Ctx {
    tol: Tolerance,
    seed: u64,
    out: Option<PathBuf>,
    quiet: bool,
    pretty: bool,
}

impl Ctx {
    fn to_json<T: Serialize>(&self, value: &T) -> Result<String, Failure> {
        let s = if self.pretty {
            serde_json::to_string_pretty(value)
        } else {
            serde_json::to_string(value)
        };
        s.map(|s| s + "\n")
            .map_err(|e| Failure::Invalid(format!("cannot serialize report: {e}")))
    }

    /// Write the report to `--out` if given, otherwise to stdout.
    fn emit<T: Serialize>(&self, value: &T) -> Result<(), Failure> {
        let text = self.to_json(value)?;
        match &self.out {
            Some(path) => write_file(path, text.as_bytes()),
            None => print_stdout(&text),
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn summary(&self, msg: impl AsRef<str>) {
        if self.pretty {
            self.log(msg);
        }
    }
}

fn print_stdout(text: &str) -> Result<(), Failure> {
    let mut out = io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Failure::Usage(format!("cannot write to stdout: {e}")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn with_path(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Invalid(format!("{}: {e}", path.display()))
}

fn load_rep(path: &Path) -> Result<Representation, Failure> {
    let rep = Representation::from_json(&read_text(path)?).map_err(with_path(path))?;
    rep.ensure_valid().map_err(with_path(path))?;
    Ok(rep)
}

fn load_pair(a: &Path, b: &Path) -> Result<(Representation, Representation), Failure> {
    let (ra, rb) = (load_rep(a)?, load_rep(b)?);
    if ra.dim() != rb.dim() {
        return Err(Failure::Invalid(format!(
            "representations act on different spaces (dimension {} vs {})",
            ra.dim(),
            rb.dim()
        )));
    }
    Ok((ra, rb))
}

/// A 0-based basis index, or a JSON file holding `[re, im]` amplitudes.
fn load_state(arg: &str, dim: usize) -> Result<PureState, Failure> {
    if let Ok(k) = arg.parse::<usize>() {
        return Ok(PureState::basis(dim, k)?);
    }
    let path = Path::new(arg);
    let psi: PureState = format::from_json_str(&read_text(path)?).map_err(with_path(path))?;
    if psi.dim() != dim {
        return Err(Failure::Invalid(format!(
            "{}: state has dimension {}, representation {dim}",
            path.display(),
            psi.dim()
        )));
    }
    Ok(psi)
}

pub fn run(cli: &Cli) -> Outcome {
    let ctx = Ctx {
        tol: Tolerance::new(cli.atol, cli.rtol).map_err(|e| Failure::Usage(e.to_string()))?,
        seed: cli.seed,
        out: cli.out.clone(),
        quiet: cli.quiet,
        pretty: cli.pretty,
    };
    match &cli.command {
        Command::Check(args) => check(&ctx, args),
        Command::Sjed { rep } => sjed_report(&ctx, rep),
        Command::Minimize { rep } => minimize(&ctx, rep),
        Command::Gauge(cmd) => gauge_cmd(&ctx, cmd),
        Command::Simulate(args) => simulate(&ctx, args),
        Command::CompareEnsembles(args) => compare_ensembles(&ctx, args),
        Command::RateScan(args) => rate_scan(&ctx, args),
        Command::Example(args) => example(&ctx, args),
        Command::Fig1(args) => fig1(&ctx, args),
    }
}

fn check(ctx: &Ctx, args: &CheckArgs) -> Outcome {
    let (a, b) = load_pair(&args.rep_a, &args.rep_b)?;
    let opts = MatchingOptions {
        enumerate_all: args.all_perms,
        ..MatchingOptions::default()
    };
    let perm = args.perm_c.as_ref().map(|p| p.0.as_slice());
    let report = equivalence::compare(&a, &b, &ctx.tol, perm, &opts)?;
    let (holds, diagnostics) = level_verdict(&report, args.level);
    ctx.emit(&report)?;
    if !holds {
        diagnostics.iter().for_each(|d| ctx.log(d));
    }
    ctx.summary(format!(
        "{} vs {} at level {:?}: {}",
        report.label_a,
        report.label_b,
        args.level,
        if holds { "holds" } else { "fails" }
    ));
    Ok(holds)
}

fn level_verdict(report: &EquivalenceReport, level: CheckLevel) -> (bool, &[String]) {
    match level {
        CheckLevel::Qme => (report.same_qme, &report.diagnostics),
        CheckLevel::T1 => (report.theorem1.holds, &report.theorem1.diagnostics),
        CheckLevel::T2 => (report.theorem2.holds, &report.theorem2.diagnostics),
        CheckLevel::T3 => (report.theorem3.holds, &report.theorem3.diagnostics),
    }
}

fn sjed_report(ctx: &Ctx, path: &Path) -> Outcome {
    let rep = load_rep(path)?;
    let part = sjed::partition(&rep, &ctx.tol)?;
    let report = part.report(&ctx.tol);
    ctx.emit(&report)?;
    ctx.summary(format!("{} jumps in {} SJEDs", report.d, report.d_c));
    Ok(true)
}

fn minimize(ctx: &Ctx, path: &Path) -> Outcome {
    let rep = load_rep(path)?;
    let min = sjed::minimize_representation(&rep, &ctx.tol)?;
    ctx.emit(&min.to_document())?;
    ctx.summary(format!("{} jumps reduced to {}", rep.num_jumps(), min.num_jumps()));
    Ok(true)
}

fn gauge_cmd(ctx: &Ctx, cmd: &GaugeCommand) -> Outcome {
    match cmd {
        GaugeCommand::Apply {
            rep_min,
            isometry,
            shift,
        } => {
            let rep_min = load_rep(rep_min)?;
            let doc: BlockIsometryDocument =
                format::from_json_str(&read_text(isometry)?).map_err(with_path(isometry))?;
            let iso = BlockIsometry::from_document(&doc, &ctx.tol).map_err(with_path(isometry))?;
            let rep = gauge::apply_gauge(&rep_min, &iso, *shift, &ctx.tol)?;
            ctx.emit(&rep.to_document())?;
            ctx.summary(format!(
                "{} jumps from {} minimal ones",
                rep.num_jumps(),
                rep_min.num_jumps()
            ));
            Ok(true)
        }
        GaugeCommand::Extract { rep_min, rep } => {
            let rep_min = load_rep(rep_min)?;
            let rep = load_rep(rep)?;
            match gauge::extract_isometry(&rep_min, &rep, &ctx.tol) {
                Ok(iso) => {
                    ctx.emit(&iso.to_document())?;
                    Ok(true)
                }
                Err(Error::NotEquivalent(reason)) => {
                    ctx.log(format!("not trajectory-equivalent: {reason}"));
                    Ok(false)
                }
                Err(e) => Err(e.into()),
            }
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    label: &'a str,
    dim: usize,
    num_channels: usize,
    initial_state: &'a PureState,
    t_max: f64,
    n_trajectories: usize,
    master_seed: u64,
    /// How per-trajectory seeds follow from the master seed.
    seed_derivation: &'static str,
    representation_file: &'static str,
    trajectories_file: &'static str,
    total_jumps: usize,
    jumps_per_channel: Vec<usize>,
}

fn simulate(ctx: &Ctx, args: &SimulateArgs) -> Outcome {
    let dir = ctx
        .out
        .as_ref()
        .ok_or_else(|| Failure::Usage("simulate needs --out <dir>".into()))?;
    let rep = load_rep(&args.rep)?;
    let psi0 = load_state(&args.psi0, rep.dim())?;
    let ens = trajectory::simulate_ensemble(&rep, &psi0, args.tmax, args.ntraj, ctx.seed)?;
    fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
    write_file(&dir.join("representation.json"), rep.to_json().as_bytes())?;
    write_trajectories(&dir.join("trajectories.jsonl"), &ens)?;

    let mut per_channel = vec![0; rep.num_jumps()];
    for t in &ens.trajectories {
        t.events.iter().for_each(|e| per_channel[e.channel] += 1);
    }
    let manifest = Manifest {
        label: rep.label(),
        dim: rep.dim(),
        num_channels: rep.num_jumps(),
        initial_state: &psi0,
        t_max: args.tmax,
        n_trajectories: ens.len(),
        master_seed: ens.master_seed,
        seed_derivation: "splitmix64 of master_seed and the 0-based trajectory index",
        representation_file: "representation.json",
        trajectories_file: "trajectories.jsonl",
        total_jumps: per_channel.iter().sum(),
        jumps_per_channel: per_channel,
    };
    let text = ctx.to_json(&manifest)?;
    write_file(&dir.join("manifest.json"), text.as_bytes())?;
    print_stdout(&text)?;
    ctx.summary(format!(
        "{} trajectories, {} jumps, written to {}",
        manifest.n_trajectories,
        manifest.total_jumps,
        dir.display()
    ));
    Ok(true)
}

fn write_trajectories(path: &Path, ens: &Ensemble) -> Result<(), Failure> {
    let file = fs::File::create(path).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    for t in &ens.trajectories {
        writeln!(w, "{}", trajectory::to_json_line(t))
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
    }
    w.flush()
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

#[derive(Serialize)]
struct CompareReport {
    /// Exact verdict; the statistics only cross-check it.
    algebraic: EquivalenceReport,
    seed_a: u64,
    seed_b: u64,
    statistical: EnsembleComparison,
}

fn compare_ensembles(ctx: &Ctx, args: &CompareArgs) -> Outcome {
    let (a, b) = load_pair(&args.rep_a, &args.rep_b)?;
    let d = a.dim();
    let psi0 = match &args.psi0 {
        Some(arg) => load_state(arg, d)?,
        None => PureState::new(CVector::from_element(d, C64::from(1.0)))?,
    };
    let observables = match &args.observables {
        Some(path) => {
            let obs: Vec<Observable> = format::from_json_str(&read_text(path)?).map_err(with_path(path))?;
            if let Some(o) = obs.iter().find(|o| o.matrix.nrows() != d || o.matrix.ncols() != d) {
                return Err(Failure::Invalid(format!(
                    "{}: observable {} is not {d}×{d}",
                    path.display(),
                    o.name
                )));
            }
            obs
        }
        None => (0..d).map(|k| Observable::projector(d, k)).collect(),
    };
    let times = args
        .times
        .clone()
        .unwrap_or_else(|| vec![args.tmax / 4.0, args.tmax / 2.0, args.tmax]);

    let algebraic = equivalence::compare(&a, &b, &ctx.tol, None, &MatchingOptions::default())?;
    let (level, check_level) = match args.level {
        EnsembleLevel::T1 => (Level::T1, CheckLevel::T1),
        EnsembleLevel::T2 => (Level::T2, CheckLevel::T2),
        EnsembleLevel::T3 => (Level::T3, CheckLevel::T3),
    };
    let perm = match (&args.perm, level) {
        (Some(p), _) => Some(p.0.clone()),
        (None, Level::T2) => algebraic.theorem2.matchings.first().map(|m| m.perm.clone()),
        (None, Level::T3) => algebraic.theorem1.perm_c.clone(),
        (None, Level::T1) => None,
    };
    let seed_a = args.seed_a.unwrap_or(ctx.seed);
    let seed_b = args.seed_b.unwrap_or(ctx.seed.wrapping_add(1));
    let ens_a = trajectory::simulate_ensemble(&a, &psi0, args.tmax, args.ntraj, seed_a)?;
    let ens_b = trajectory::simulate_ensemble(&b, &psi0, args.tmax, args.ntraj, seed_b)?;
    let opts = CompareOptions {
        level,
        observables,
        times,
        perm,
        alpha: args.alpha,
    };
    let statistical = verify::compare_ensembles(
        EnsembleInput {
            rep: &a,
            ensemble: &ens_a,
        },
        EnsembleInput {
            rep: &b,
            ensemble: &ens_b,
        },
        &opts,
        &ctx.tol,
    )?;
    let (exact, _) = level_verdict(&algebraic, check_level);
    let verdict = statistical.verdict;
    statistical.diagnostics.iter().for_each(|d| ctx.log(d));
    if exact != verdict {
        ctx.log(format!(
            "statistical verdict ({verdict}) disagrees with the algebraic one ({exact})"
        ));
    }
    ctx.summary(format!(
        "{:?}: algebraic {}, statistical {} ({} tests at α = {})",
        level,
        exact,
        verdict,
        statistical.ks_tests.len() + statistical.count_tests.len(),
        statistical.alpha
    ));
    ctx.emit(&CompareReport {
        algebraic,
        seed_a,
        seed_b,
        statistical,
    })?;
    Ok(verdict)
}

fn rate_scan(ctx: &Ctx, args: &RateScanArgs) -> Outcome {
    let (a, b) = load_pair(&args.rep_a, &args.rep_b)?;
    let perm = args.perm_c.as_ref().map(|p| p.0.as_slice());
    let report = verify::rate_field_scan(&a, &b, perm, args.n, ctx.seed, &ctx.tol)?;
    ctx.emit(&report)?;
    ctx.summary(format!(
        "{} states: max block action deviation {:.3e}",
        report.n_states, report.max_block_action_dev
    ));
    Ok(true)
}

fn qutrit_params(a: &QutritAArgs) -> QutritParams {
    QutritParams {
        theta: a.theta.unwrap_or(QutritParams::default().theta),
        gamma: a.gamma,
        vartheta: a.vartheta,
        phi: a.phi,
        lambda: a.lambda,
    }
}

fn example(ctx: &Ctx, args: &ExampleArgs) -> Outcome {
    let rep = match args.name {
        ExampleName::QutritA => {
            if args.tilde {
                return Err(Failure::Usage("--tilde applies to qutrit-b only".into()));
            }
            let p = qutrit_params(&args.a);
            if args.minimal {
                models::qutrit_a_minimal(&p)
            } else {
                models::qutrit_a(&p)
            }
        }
        ExampleName::QutritB => {
            if args.minimal {
                return Err(Failure::Usage("--minimal applies to qutrit-a only".into()));
            }
            let p = QutritBParams {
                theta: args.a.theta.unwrap_or(QutritBParams::default().theta),
                gamma1: args.gamma1,
                gamma2: args.gamma2,
                gamma3: args.gamma3,
                gamma1_tilde: args.gamma1_tilde,
            };
            if args.tilde {
                models::qutrit_b_tilde(&p)
            } else {
                models::qutrit_b(&p)
            }
        }
    };
    rep.ensure_valid()?;
    ctx.emit(&rep.to_document())?;
    Ok(true)
}

/// Real state `cos β |0⟩ + sin β cos α |1⟩ + sin β sin α |2⟩`.
fn sphere_state(polar: f64, azimuth: f64) -> [f64; 3] {
    [polar.cos(), polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin()]
}

fn block_totals(rates: &[f64], part: &sjed::SjedPartition) -> Vec<f64> {
    part.block_indices()
        .iter()
        .map(|block| block.iter().map(|&k| rates[k]).sum())
        .collect()
}

fn fig1(ctx: &Ctx, args: &Fig1Args) -> Outcome {
    if args.n_polar < 2 || args.n_azimuth < 1 {
        return Err(Failure::Usage("need --n-polar ≥ 2 and --n-azimuth ≥ 1".into()));
    }
    let p = qutrit_params(&args.a);
    let full = models::qutrit_a(&p);
    let min = models::qutrit_a_minimal(&p);
    let part_full = sjed::partition(&full, &ctx.tol)?;
    let part_min = sjed::partition(&min, &ctx.tol)?;

    let sink: Box<dyn Write> = match &ctx.out {
        Some(path) => Box::new(
            fs::File::create(path).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?,
        ),
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Failure::Usage(format!("cannot write CSV: {e}"));

    let mut header: Vec<String> = ["polar", "azimuth", "c0", "c1", "c2"].map(String::from).to_vec();
    header.extend((1..=full.num_jumps()).map(|k| format!("r{k}")));
    header.extend((1..=min.num_jumps()).map(|k| format!("r{k}_prime")));
    header.extend((1..=part_full.d_c()).map(|a| format!("block{a}_total")));
    header.extend((1..=part_min.d_c()).map(|a| format!("block{a}_total_prime")));
    w.write_record(&header).map_err(csv_err)?;

    for i in 0..args.n_polar {
        let polar = PI * i as f64 / (args.n_polar - 1) as f64;
        for j in 0..args.n_azimuth {
            let azimuth = 2.0 * PI * j as f64 / args.n_azimuth as f64;
            let c = sphere_state(polar, azimuth);
            let psi = PureState::from_slice(&c.map(C64::from))?;
            let r = full.jump_rates(&psi);
            let rp = min.jump_rates(&psi);
            let row: Vec<f64> = [polar, azimuth]
                .into_iter()
                .chain(c)
                .chain(r.iter().copied())
                .chain(rp.iter().copied())
                .chain(block_totals(&r, &part_full))
                .chain(block_totals(&rp, &part_min))
                .collect();
            w.serialize(row).map_err(csv_err)?;
        }
    }
    w.flush()
        .map_err(|e| Failure::Usage(format!("cannot write CSV: {e}")))?;
    ctx.summary(format!("{} rows", args.n_polar * args.n_azimuth));
    Ok(true)
}
