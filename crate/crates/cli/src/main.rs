use std::path::PathBuf;
use std::process::{Child, Command, ExitCode};

use clap::{Args, Parser, Subcommand, ValueEnum};
use schrod3d::bench;
use schrod3d::driver;
use schrod3d::export;
use schrod3d::multires;
use schrod3d::{Axis, Error, LatticeSpec, RunConfig, TransportChoice};

#[derive(Parser)]
#[command(name = "schrod3d", version, about = "Imaginary-time 3d Schrödinger solver")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// key = value configuration file
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key (repeatable), e.g. --set N=128
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        base.with_overrides(self.overrides.iter().map(String::as_str))
    }

    fn forward(&self) -> Vec<String> {
        let mut args = Vec::new();
        if let Some(c) = &self.config {
            args.push("--config".to_string());
            args.push(c.display().to_string());
        }
        for o in &self.overrides {
            args.push("--set".to_string());
            args.push(o.clone());
        }
        args
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    X,
    Y,
    Z,
}

impl From<AxisArg> for Axis {
    fn from(a: AxisArg) -> Self {
        match a {
            AxisArg::X => Axis::X,
            AxisArg::Y => Axis::Y,
            AxisArg::Z => Axis::Z,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Evolve to convergence and write observables, wavefunctions and a summary
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (overrides output_dir)
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// With transport = tcp, start ranks 1.. as local worker processes
        #[arg(long)]
        spawn_local: bool,
    },
    /// Time iterations for several worker counts and fit the scaling exponent
    Benchmark {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated worker counts
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        workers: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        repetitions: usize,
        #[arg(long, default_value_t = 20)]
        iterations: u64,
    },
    /// Write one lattice plane of a wavefunction file as CSV
    Export {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value = "z")]
        axis: AxisArg,
        /// Plane index 1..=N (default: middle plane)
        #[arg(long)]
        index: Option<usize>,
        /// Write psi^2 instead of psi
        #[arg(long)]
        density: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Resample a wavefunction file to N sites per axis at the same box length
    Resample {
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short)]
        n: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Serve one rank (>= 1) of a TCP run
    LaunchWorker {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        rank: usize,
    },
}

fn spawn_workers(args: &ConfigArgs, workers: usize) -> Result<Vec<Child>, Error> {
    let exe = std::env::current_exe()?;
    (1..workers)
        .map(|rank| {
            Command::new(&exe)
                .arg("launch-worker")
                .arg("--rank")
                .arg(rank.to_string())
                .args(args.forward())
                .spawn()
                .map_err(Error::from)
        })
        .collect()
}

fn run(args: &ConfigArgs, output: Option<PathBuf>, spawn_local: bool) -> Result<ExitCode, Error> {
    let mut config = args.load()?;
    if output.is_some() {
        config.output_dir = output;
    }
    config.validate()?;
    let mut children = Vec::new();
    if spawn_local {
        if config.transport != TransportChoice::Tcp {
            return Err(Error::Config("--spawn-local needs transport = tcp".into()));
        }
        children = spawn_workers(args, config.workers)?;
    }
    let result = driver::solve::<f64>(&config);
    for mut c in children {
        if result.is_err() {
            let _ = c.kill();
        }
        let _ = c.wait();
    }
    let report = result?;
    if let Some(dir) = &config.output_dir {
        driver::write_outputs(&report, dir)?;
    }
    print!("{}", driver::summary_text(&report));
    if report.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("not converged within max_steps = {}", config.max_steps);
        Ok(ExitCode::from(3))
    }
}

fn benchmark(args: &ConfigArgs, workers: &[usize], repetitions: usize, iterations: u64) -> Result<ExitCode, Error> {
    let config = args.load()?;
    config.validate()?;
    let r = bench::benchmark(&config, workers, repetitions, iterations)?;
    println!("N = {}, iterations = {}, repetitions = {repetitions}", r.n, r.iterations);
    println!("workers,mean_s_per_iteration,std_err,runs");
    for e in &r.entries {
        println!("{},{:e},{:e},{}", e.workers, e.iteration.mean, e.iteration.std_err, e.iteration.runs);
    }
    if let Some((slope, err)) = r.slope {
        println!("slope = {slope:.4} +- {err:.4}");
    }
    println!("dtau_u = {:e} s/site", r.dtu);
    println!("dtau_c = {:e} s/site (host-specific)", r.dtc);
    println!("max_nodes_1d = {}", r.estimate.max_nodes_1d);
    println!("max_nodes_3d = {}", r.estimate.max_nodes_3d);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Cmd::Run { config, output, spawn_local } => run(&config, output, spawn_local),
        Cmd::Benchmark { config, workers, repetitions, iterations } => {
            benchmark(&config, &workers, repetitions, iterations)
        }
        Cmd::Export { input, axis, index, density, output } => (|| {
            let loaded = multires::load_wavefunction::<f64>(&input)?;
            let index = index.unwrap_or(loaded.spec.n() / 2);
            export::export_slice(&loaded.field, axis.into(), index, density, &output)?;
            Ok(ExitCode::SUCCESS)
        })(),
        Cmd::Resample { input, n, output } => (|| {
            let loaded = multires::load_wavefunction::<f64>(&input)?;
            let length = loaded.spec.length();
            let spec = LatticeSpec::with_default_dtau(n, length / n as f64, loaded.spec.mass())?;
            let fine = multires::resample(&loaded.field, spec)?;
            multires::save_wavefunction(&fine, 0, &output)?;
            Ok(ExitCode::SUCCESS)
        })(),
        Cmd::LaunchWorker { config, rank } => (|| {
            let config = config.load()?;
            driver::serve_rank(&config, rank)?;
            Ok(ExitCode::SUCCESS)
        })(),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_status() as u8)
        }
    }
}
