//! Iteration timing with standard errors, per-site cost measurement and the
//! power-law fit of time against worker count.

use std::time::{Duration, Instant};

use crate::config::RunConfig;
use crate::driver::potential_window;
use crate::error::{Error, Result};
use crate::lattice::Slab;
use crate::parallel::{self, scaling_estimate, Direction, MessageKind, ScalingEstimate, SlabPartition, Worker};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation (`n - 1` denominator).
    pub std_dev: f64,
    /// `std_dev / sqrt(runs)`.
    pub std_err: f64,
}

pub fn timing_stats(samples: &[f64]) -> Result<TimingStats> {
    let r = samples.len();
    if r < 2 {
        return Err(Error::Config(format!("need at least 2 repetitions, got {r}")));
    }
    let mean = samples.iter().sum::<f64>() / r as f64;
    let var = samples.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (r - 1) as f64;
    let std_dev = var.sqrt();
    Ok(TimingStats { runs: r, mean, std_dev, std_err: std_dev / (r as f64).sqrt() })
}

/// Least-squares slope of `ln y` against `ln x` and its standard error
/// (zero when only two points are given).
pub fn fit_power_law(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config("power-law fit needs at least two points".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("power-law fit needs distinct abscissae".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let err = if lx.len() > 2 {
        let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((slope, err))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchEntry {
    pub workers: usize,
    /// Seconds per iteration.
    pub iteration: TimingStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub n: usize,
    pub iterations: u64,
    pub entries: Vec<BenchEntry>,
    /// Serial update time per site.
    pub dtu: f64,
    /// One-way transfer time per site of a halo plane.
    pub dtc: f64,
    pub slope: Option<(f64, f64)>,
    pub estimate: ScalingEstimate,
}

/// Seconds per iteration of `iterations` steps on `workers` in-process ranks.
pub fn time_iterations(config: &RunConfig, workers: usize, iterations: u64) -> Result<f64> {
    let spec = config.spec()?;
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    let times = parallel::run_inproc(workers, timeout, |mut comm| {
        let partition = SlabPartition::new(spec.n(), comm.size())?;
        let e = partition.extent(comm.rank());
        let grid = potential_window(&config.potential, spec, e.first, e.width)?;
        let mut slab = Slab::allocate(spec, e.first, e.width)?;
        slab.fill_random_gaussian(config.seed);
        let mut worker = Worker::new(&mut comm, &grid, slab)?;
        worker.normalize()?;
        worker.comm().barrier()?;
        let t0 = Instant::now();
        for _ in 0..iterations {
            worker.advance()?;
        }
        worker.comm().barrier()?;
        Ok(t0.elapsed().as_secs_f64())
    })?;
    Ok(times[0] / iterations as f64)
}

/// One-way time per site for a plane of `(N + 2)^2` values, from in-process
/// ping-pong between two ranks.
pub fn measure_transfer(n: usize, round_trips: usize) -> Result<f64> {
    let plane = vec![0.5f64; (n + 2) * (n + 2)];
    let times = parallel::run_inproc(2, Duration::from_secs(60), |mut comm| {
        let peer = 1 - comm.rank();
        let mut buf = plane.clone();
        let t0 = Instant::now();
        for i in 0..round_trips as u32 {
            if comm.rank() == 0 {
                comm.send(peer, MessageKind::Halo, i, Direction::Right, &buf)?;
                comm.recv_into(peer, MessageKind::Halo, i, &mut buf)?;
            } else {
                comm.recv_into(peer, MessageKind::Halo, i, &mut buf)?;
                comm.send(peer, MessageKind::Halo, i, Direction::Left, &buf)?;
            }
        }
        Ok(t0.elapsed().as_secs_f64())
    })?;
    Ok(times[0] / round_trips as f64 / 2.0 / (n * n) as f64)
}

/// Times `iterations` steps `repetitions` times for each worker count with a
/// fixed seed, measures per-site update and transfer costs and fits the
/// scaling exponent.
pub fn benchmark(config: &RunConfig, workers: &[usize], repetitions: usize, iterations: u64) -> Result<BenchmarkReport> {
    if workers.is_empty() {
        return Err(Error::Config("no worker counts to benchmark".into()));
    }
    let n = config.n;
    let mut entries = Vec::new();
    for &m in workers {
        SlabPartition::new(n, m)?;
        let samples = (0..repetitions)
            .map(|_| time_iterations(config, m, iterations))
            .collect::<Result<Vec<_>>>()?;
        let iteration = timing_stats(&samples)?;
        log::info!("M={m}: {:.6e} s/iteration (+- {:.1e})", iteration.mean, iteration.std_err);
        entries.push(BenchEntry { workers: m, iteration });
    }
    let serial = match entries.iter().find(|e| e.workers == 1) {
        Some(e) => e.iteration.mean,
        None => time_iterations(config, 1, iterations)?,
    };
    let dtu = serial / (n * n * n) as f64;
    let dtc = measure_transfer(n, 200)?;
    let slope = if entries.len() >= 2 {
        let ms: Vec<f64> = entries.iter().map(|e| e.workers as f64).collect();
        let ts: Vec<f64> = entries.iter().map(|e| e.iteration.mean).collect();
        Some(fit_power_law(&ms, &ts)?)
    } else {
        None
    };
    let m_max = workers.iter().copied().max().unwrap_or(1);
    Ok(BenchmarkReport {
        n,
        iterations,
        entries,
        dtu,
        dtc,
        slope,
        estimate: scaling_estimate(dtu, dtc, n, m_max),
    })
}
