//! Whole runs: bootstrap stages, evolution, excited-state extraction and
//! output files.
//!
//! [`solve_rank`] is the body every rank executes; rank 0 additionally
//! gathers fields and assembles the report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::config::{PotentialChoice, RunConfig, TransportChoice};
use crate::error::{Error, Result};
use crate::evolve::{self, EnergyRecord};
use crate::lattice::{Field3D, LatticeSpec, Slab};
use crate::multires;
use crate::observables::Observables;
use crate::parallel::{self, gather_slab, scatter_field, slab_from_planes, Comm, MessageStats, SlabPartition, Worker};
use crate::potential::{Potential, PotentialGrid};
use crate::scalar::Real;
use crate::states;
use crate::stencil;

#[derive(Debug, Clone, PartialEq)]
pub struct StageReport {
    pub n: usize,
    pub a: f64,
    pub dtau: f64,
    pub steps: u64,
    pub converged: bool,
    pub energy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct StateReport<T> {
    pub psi: Field3D<T>,
    pub observables: Observables<T>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub stages: Vec<StageReport>,
    pub ground: StateReport<T>,
    pub excited: Vec<StateReport<T>>,
    /// Observables at every check of the final stage.
    pub history: Vec<EnergyRecord>,
    pub converged: bool,
    /// Frames sent by rank 0.
    pub messages: MessageStats,
    pub seconds: f64,
}

impl<T> SolveReport<T> {
    pub fn total_steps(&self) -> u64 {
        self.stages.iter().map(|s| s.steps).sum()
    }

    /// Steps of the last stage.
    pub fn final_steps(&self) -> u64 {
        self.stages.last().map_or(0, |s| s.steps)
    }
}

fn cast_spec<T: Real>(s: &LatticeSpec<f64>) -> Result<LatticeSpec<T>> {
    LatticeSpec::new(s.n(), T::lit(s.spacing()), T::lit(s.mass()), T::lit(s.dtau()))
}

/// Potential for global planes `first..first + planes` of `spec`.
pub fn potential_window<T: Real>(
    choice: &PotentialChoice,
    spec: LatticeSpec<T>,
    first: usize,
    planes: usize,
) -> Result<PotentialGrid<T>> {
    let analytic = match choice {
        PotentialChoice::File(path) => return PotentialGrid::from_file(path, spec)?.window(first, planes),
        PotentialChoice::Free => Potential::Free,
        PotentialChoice::Coulomb => Potential::Coulomb,
        PotentialChoice::Harmonic => Potential::Harmonic,
        PotentialChoice::Dodecahedron { depth } => Potential::Dodecahedron { depth: T::lit(*depth) },
    };
    analytic.grid_window(spec, first, planes)
}

/// Initial field from a wavefunction file, resampled when its lattice differs.
fn initial_from_file<T: Real>(path: &Path, spec: LatticeSpec<T>) -> Result<Field3D<T>> {
    let loaded = multires::load_wavefunction::<T>(path)?;
    let same = loaded.spec.n() == spec.n() && loaded.spec.spacing() == spec.spacing();
    if same {
        let mut f = loaded.field;
        f.set_spec(spec)?;
        Ok(f)
    } else {
        multires::resample(&loaded.field, spec)
    }
}

/// The run body of one rank. Rank 0 returns the report, other ranks `None`.
pub fn solve_rank<T: Real>(config: &RunConfig, comm: &mut Comm) -> Result<Option<SolveReport<T>>> {
    let started = Instant::now();
    let specs = config.stage_specs()?;
    let params = config.evolve_params().cast::<T>();
    let mut carried: Option<Field3D<T>> = None;
    let mut stages = Vec::new();
    for (idx, spec64) in specs.iter().enumerate() {
        let t0 = Instant::now();
        let spec = cast_spec::<T>(spec64)?;
        let n = spec.n();
        let last = idx + 1 == specs.len();
        let partition = SlabPartition::new(n, comm.size())?;
        let extent = partition.extent(comm.rank());
        let grid = potential_window(&config.potential, spec, extent.first, extent.width)?;

        let slab = if idx == 0 && config.initial.is_none() {
            let mut s = Slab::allocate(spec, extent.first, extent.width)?;
            s.fill_random_gaussian(config.seed);
            s
        } else {
            if comm.is_root() {
                carried = Some(match (idx, carried.take(), &config.initial) {
                    (0, _, Some(path)) => initial_from_file(path, spec)?,
                    (_, Some(prev), _) => multires::resample(&prev, spec)?,
                    _ => unreachable!("later stages always carry a field"),
                });
            }
            let source = carried.take();
            let planes = scatter_field(comm, source.as_ref(), n)?;
            slab_from_planes(spec, extent, &planes)?
        };

        let mut worker = Worker::new(comm, &grid, slab)?;
        let outcome = evolve::evolve_with(&mut worker, &params)?;
        log::info!(
            "stage N={n}: {} steps, E = {:.10e}, converged = {}",
            outcome.step_count,
            outcome.observables.energy,
            outcome.converged
        );
        let wanted = if last { config.excited_count } else { config.carry.len() - 1 };
        let ground = worker.snapshot();
        let excited = if wanted > 0 && outcome.converged {
            states::extract_excited_with(&mut worker, &outcome.snapshots, vec![ground.clone()], wanted, &params)?
        } else {
            Vec::new()
        };
        drop(worker);
        stages.push(StageReport {
            n,
            a: spec64.spacing(),
            dtau: spec64.dtau(),
            steps: outcome.step_count,
            converged: outcome.converged,
            energy: outcome.observables.energy.as_f64(),
            seconds: t0.elapsed().as_secs_f64(),
        });

        if last || !outcome.converged {
            let ground_field = gather_slab(comm, &ground)?;
            let mut excited_fields = Vec::new();
            for e in &excited {
                excited_fields.push((gather_slab(comm, &e.psi)?, e.observables));
            }
            let Some(ground_field) = ground_field else {
                return Ok(None);
            };
            return Ok(Some(SolveReport {
                stages,
                ground: StateReport { psi: ground_field, observables: outcome.observables },
                excited: excited_fields
                    .into_iter()
                    .map(|(f, o)| StateReport { psi: f.expect("rank 0 holds gathered fields"), observables: o })
                    .collect(),
                history: outcome.history,
                converged: outcome.converged && last,
                messages: comm.stats(),
                seconds: started.elapsed().as_secs_f64(),
            }));
        }

        let mut combo = ground;
        let p = combo.plane_len();
        let w = combo.width();
        let c0 = T::lit(config.carry[0]);
        for v in &mut combo.values_mut()[p..(w + 1) * p] {
            *v = *v * c0;
        }
        for (c, e) in config.carry[1..].iter().zip(&excited) {
            stencil::axpy_interior(combo.values_mut(), -T::lit(*c), e.psi.values(), n, w);
        }
        carried = gather_slab(comm, &combo)?;
    }
    unreachable!("the final stage returns")
}

/// Runs `config` with in-process workers, or as rank 0 of a TCP group whose
/// other ranks run [`solve_rank`] in their own processes.
pub fn solve<T: Real>(config: &RunConfig) -> Result<SolveReport<T>> {
    config.validate()?;
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    match config.transport {
        TransportChoice::InProc => {
            let mut reports = parallel::run_inproc(config.workers, timeout, |mut comm| solve_rank::<T>(config, &mut comm))?;
            Ok(reports.swap_remove(0).expect("rank 0 returns the report"))
        }
        TransportChoice::Tcp => {
            let transport = parallel::TcpTransport::connect(0, &config.endpoints, timeout)?;
            let mut comm = Comm::new(Box::new(transport), timeout);
            Ok(solve_rank::<T>(config, &mut comm)?.expect("rank 0 returns the report"))
        }
    }
}

/// Body of a TCP worker process with rank `rank > 0`.
pub fn serve_rank(config: &RunConfig, rank: usize) -> Result<()> {
    config.validate()?;
    if rank == 0 || rank >= config.endpoints.len() {
        return Err(Error::Config(format!("worker rank must be in 1..{}", config.endpoints.len())));
    }
    let timeout = Duration::from_secs_f64(config.timeout_secs);
    let transport = parallel::TcpTransport::connect(rank, &config.endpoints, timeout)?;
    let mut comm = Comm::new(Box::new(transport), timeout);
    solve_rank::<f64>(config, &mut comm).map(|_| ())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:e}"))
}

/// Observables log with header `step,tau,E,E_binding,norm,r_rms`; the binding
/// column is empty for unbounded potentials.
pub fn observables_csv(history: &[EnergyRecord]) -> String {
    let mut s = String::from("step,tau,E,E_binding,norm,r_rms\n");
    for r in history {
        let _ = writeln!(
            s,
            "{},{:e},{:e},{},{:e},{:e}",
            r.step,
            r.tau,
            r.energy,
            fmt_opt(r.binding),
            r.norm,
            r.r_rms
        );
    }
    s
}

pub fn summary_text<T: Real>(report: &SolveReport<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "converged = {}", report.converged);
    let _ = writeln!(s, "steps = {}", report.total_steps());
    let _ = writeln!(s, "wall_seconds = {:.3}", report.seconds);
    let mut state = |k: usize, o: &Observables<T>| {
        let _ = writeln!(s, "E{k} = {:e}", o.energy.as_f64());
        let _ = writeln!(s, "E{k}_binding = {}", fmt_opt(o.binding.map(Real::as_f64)));
        let _ = writeln!(s, "r_rms{k} = {:e}", o.r_rms.as_f64());
    };
    state(0, &report.ground.observables);
    for (k, e) in report.excited.iter().enumerate() {
        state(k + 1, &e.observables);
    }
    for (i, st) in report.stages.iter().enumerate() {
        let _ = writeln!(
            s,
            "stage{i} = N={} a={:e} dtau={:e} steps={} converged={} E={:e} seconds={:.3}",
            st.n, st.a, st.dtau, st.steps, st.converged, st.energy, st.seconds
        );
    }
    s
}

/// Writes `observables.csv`, `ground.qwf`, `excited_<k>.qwf` and `summary.txt`.
pub fn write_outputs<T: Real>(report: &SolveReport<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("observables.csv"), observables_csv(&report.history))?;
    let steps = report.final_steps();
    multires::save_wavefunction(&report.ground.psi, steps, dir.join("ground.qwf"))?;
    for (k, e) in report.excited.iter().enumerate() {
        multires::save_wavefunction(&e.psi, steps, dir.join(format!("excited_{}.qwf", k + 1)))?;
    }
    fs::write(dir.join("summary.txt"), summary_text(report))?;
    Ok(())
}
