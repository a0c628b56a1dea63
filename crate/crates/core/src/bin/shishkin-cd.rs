use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use shishkin_cd::analysis::{solve_on, stability_bound};
use shishkin_cd::verify::{self, VerifyPlan};
use shishkin_cd::{run_sweep, validate, BuiltinProblem, DoubleMeshMode, Error, RunConfig, SweepOptions, TensorMesh, Variant};

#[derive(Parser)]
#[command(name = "shishkin-cd", version, about = "Convection-diffusion with a discontinuous source on a fitted Shishkin mesh")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one (epsilon, N) case and write the grid dump and run metadata.
    Solve(RunArgs),
    /// Double-mesh convergence sweep over epsilon and N.
    Sweep(RunArgs),
    /// Run the property suites and print one line per property.
    Verify(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<BuiltinProblem>,
    /// Diffusion parameter; repeat for several values.
    #[arg(long = "epsilon", short = 'e')]
    epsilons: Vec<f64>,
    /// Intervals per axis, divisible by 8; repeat for several values.
    #[arg(long = "N", short = 'n')]
    ns: Vec<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long = "double-mesh")]
    double_mesh: Option<DoubleMeshMode>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
    /// Cap N at 256.
    #[arg(long)]
    desk: bool,
}

impl RunArgs {
    fn load(&self) -> anyhow::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                RunConfig::from_toml_str(&text)?
            }
            None => RunConfig::default(),
        };
        if let Some(p) = self.problem {
            config.problem = p;
        }
        if !self.epsilons.is_empty() {
            config.epsilons = self.epsilons.clone();
        }
        if !self.ns.is_empty() {
            config.ns = self.ns.clone();
        }
        if let Some(v) = self.variant {
            config.variant = v;
        }
        if let Some(m) = self.double_mesh {
            config.double_mesh = m;
        }
        if let Some(w) = self.workers {
            config.workers = w;
        }
        if let Some(d) = &self.out_dir {
            config.out_dir = d.clone();
        }
        if self.desk {
            config = config.desk();
        }
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Sweep(args) => cmd_sweep(&args),
        Command::Verify(args) => cmd_verify(&args),
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    body(&mut out)?;
    out.flush()?;
    Ok(())
}

fn cmd_solve(args: &RunArgs) -> ExitCode {
    let mut config = match args.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    if args.config.is_none() && args.epsilons.is_empty() {
        config.epsilons = vec![1e-2];
    }
    if args.config.is_none() && args.ns.is_empty() {
        config.ns = vec![128];
    }
    if let Err(e) = config.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    if config.epsilons.len() != 1 || config.ns.len() != 1 {
        eprintln!("error: solve needs exactly one epsilon and one N");
        return ExitCode::from(2);
    }
    let spec = config.problem_spec();
    let n = config.ns[0];
    let report = match validate(&spec, n) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.passed() {
        for v in &report.violations {
            eprintln!("error: {v}");
        }
        return ExitCode::from(2);
    }

    let start = Instant::now();
    let solved = TensorMesh::shishkin(&spec, n).and_then(|mesh| solve_on(&spec, &mesh, config.variant).map(|s| (mesh, s)));
    let (mesh, (u, residual)) = match solved {
        Ok(s) => s,
        Err(e @ (Error::BadN(_) | Error::GeometryError(_))) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let seconds = start.elapsed().as_secs_f64();

    let stem = format!("{}_eps{:.0e}_N{n}", config.problem, spec.epsilon);
    let grid_path = config.out_dir.join(format!("{stem}.dat"));
    let meta_path = config.out_dir.join(format!("{stem}.json"));
    let meta = json!({
        "problem": config.problem,
        "epsilon": spec.epsilon,
        "n": n,
        "variant": config.variant,
        "sigma_x": mesh.params.sigma_x,
        "sigma_y": mesh.params.sigma_y,
        "residual": residual,
        "u_max": u.max_abs(),
        "stability_bound": stability_bound(&spec, &mesh),
        "warnings": report.warnings,
        "seconds": seconds,
    });
    let written = fs::create_dir_all(&config.out_dir)
        .map_err(anyhow::Error::from)
        .and_then(|_| write_file(&grid_path, |w| u.write_dump(w)))
        .and_then(|_| write_file(&meta_path, |w| writeln!(w, "{}", serde_json::to_string_pretty(&meta).unwrap())));
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    println!("wrote {} and {}", grid_path.display(), meta_path.display());
    println!("sigma_x = {:.4e}, sigma_y = {:.4e}, residual = {residual:.2e}, {seconds:.2} s", mesh.params.sigma_x, mesh.params.sigma_y);
    ExitCode::SUCCESS
}

fn cmd_sweep(args: &RunArgs) -> ExitCode {
    let config = match args.load().and_then(|c| c.validate().map(|_| c).map_err(Into::into)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let spec = config.problem_spec();
    let opts = SweepOptions { variant: config.variant, mode: config.double_mesh, workers: Some(config.workers) };
    let report = match run_sweep(&spec, &config.epsilons, &config.ns, opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    for cell in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell eps={:.0e} N={} failed: {}", cell.epsilon, cell.n, cell.error.as_deref().unwrap_or(""));
    }
    let csv = report.table.to_csv();
    let stem = format!("{}_{}_{}", config.problem, config.variant, config.double_mesh);
    let csv_path = config.out_dir.join(format!("{stem}.csv"));
    let json_path = config.out_dir.join(format!("{stem}.json"));
    let written = fs::create_dir_all(&config.out_dir)
        .map_err(anyhow::Error::from)
        .and_then(|_| write_file(&csv_path, |w| w.write_all(csv.as_bytes())))
        .and_then(|_| write_file(&json_path, |w| writeln!(w, "{}", report.to_json())));
    if let Err(e) = written {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    print!("{csv}");
    eprintln!("wrote {} and {}", csv_path.display(), json_path.display());
    if report.table.missing_cells() > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn cmd_verify(args: &RunArgs) -> ExitCode {
    let config = match args.load() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let mut plan = VerifyPlan { variant: config.variant, ..Default::default() };
    if args.problem.is_some() {
        plan.problems = vec![config.problem];
    }
    if !args.ns.is_empty() {
        plan.m_matrix_ns = args.ns.clone();
        plan.equivalence_ns = args.ns.clone();
    }
    if !args.epsilons.is_empty() {
        plan.m_matrix_epsilons = args.epsilons.clone();
        plan.equivalence_epsilons = args.epsilons.clone();
    }
    let results = match verify::run_all(&plan) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let mut failed = 0;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    println!("{} of {} properties passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
