//! Imaginary-time stepping: the stencil update, its stability bound,
//! renormalization, snapshots and the convergence loop.
//!
//! The update for one step is
//! `psi' = A psi + B dtau/(2m) (sum of six neighbors - 6 psi) / a^2`,
//! which damps every eigencomponent by roughly `exp(-E_n dtau)`.

use crate::error::{Error, Result};
use crate::lattice::{Field3D, LatticeSpec, Slab};
use crate::observables::{self, Observables};
use crate::parallel::{Comm, Worker};
use crate::potential::PotentialGrid;
use crate::scalar::Real;
use crate::states::SymmetryConstraint;
use crate::stencil;

/// Ok when `dtau < a^2 / 3`.
pub fn check_stability<T: Real>(spec: &LatticeSpec<T>) -> Result<()> {
    let a = spec.spacing();
    let limit = a * a / T::lit(3.0);
    if spec.dtau() < limit {
        Ok(())
    } else {
        Err(Error::Unstable { dtau: spec.dtau().as_f64(), limit: limit.as_f64() })
    }
}

fn check_grid<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<()> {
    let n = grid.spec().n();
    if psi.spec().n() != n {
        return Err(Error::DimensionMismatch { expected: n, found: psi.spec().n() });
    }
    if grid.first_plane() != 1 || grid.planes() != n {
        return Err(Error::OutOfRange("potential grid does not cover the lattice".into()));
    }
    Ok(())
}

/// One update of every interior site; padding is carried over unchanged.
pub fn step<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<Field3D<T>> {
    check_grid(psi, grid)?;
    let spec = grid.spec();
    let n = spec.n();
    let a = spec.spacing();
    let kin = spec.dtau() / (T::lit(2.0) * spec.mass() * a * a);
    let mut out = psi.clone();
    for l in 1..=n {
        stencil::update_plane(psi.values(), out.values_mut(), l, l, grid, kin, T::one());
    }
    if !out.is_finite() {
        return Err(Error::Divergence { step: 1, reason: "non-finite value after update".into() });
    }
    Ok(out)
}

/// Scales `psi` to `sum psi^2 a^3 = 1`; returns the norm before scaling.
pub fn renormalize<T: Real>(psi: &mut Field3D<T>) -> Result<T> {
    let n2 = observables::norm2(psi);
    if n2 == T::zero() {
        return Err(Error::ZeroNorm);
    }
    let norm = n2.sqrt();
    if !norm.is_finite() {
        return Err(Error::NonFinite("wavefunction norm".into()));
    }
    psi.scale_interior(norm.recip());
    Ok(norm)
}

/// Schedules and tolerances of the convergence loop.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveParams<T> {
    /// Relative change of the convergence metric between checks.
    pub tol: T,
    pub check_freq: u64,
    /// Snapshot interval in steps; 0 disables snapshots.
    pub snap_freq: u64,
    /// Snapshots kept; older ones are dropped first.
    pub max_snapshots: usize,
    pub max_steps: u64,
    /// Re-imposed on the initial field and at every check.
    pub constraints: Vec<SymmetryConstraint>,
    /// Further steps given to each extracted excited state.
    pub polish_steps: u64,
    /// Checks before this step skip the sign-alternation test.
    pub divergence_grace: u64,
}

impl<T: Real> Default for EvolveParams<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            check_freq: 100,
            snap_freq: 1000,
            max_snapshots: 4,
            max_steps: 1_000_000,
            constraints: Vec::new(),
            polish_steps: 1000,
            divergence_grace: 32,
        }
    }
}

impl EvolveParams<f64> {
    pub fn cast<U: Real>(&self) -> EvolveParams<U> {
        EvolveParams {
            tol: U::lit(self.tol),
            check_freq: self.check_freq,
            snap_freq: self.snap_freq,
            max_snapshots: self.max_snapshots,
            max_steps: self.max_steps,
            constraints: self.constraints.clone(),
            polish_steps: self.polish_steps,
            divergence_grace: self.divergence_grace,
        }
    }
}

impl<T: Real> EvolveParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > T::zero()) {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.check_freq == 0 {
            return Err(Error::Config("check_freq must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the observables log, taken at every check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub step: u64,
    pub tau: f64,
    pub energy: f64,
    pub binding: Option<f64>,
    /// Norm of the field produced by the latest step, before rescaling.
    pub norm: f64,
    pub r_rms: f64,
}

#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub step: u64,
    pub tau: T,
    pub psi: Slab<T>,
}

/// Result of a convergence loop on one rank; the final field stays in the worker.
#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub step_count: u64,
    pub tau: T,
    pub snapshots: Vec<Snapshot<T>>,
    pub history: Vec<EnergyRecord>,
    pub converged: bool,
    pub observables: Observables<T>,
}

fn record<T: Real>(step: u64, dtau: T, obs: &Observables<T>, norm: T) -> EnergyRecord {
    EnergyRecord {
        step,
        tau: step as f64 * dtau.as_f64(),
        energy: obs.energy.as_f64(),
        binding: obs.binding.map(Real::as_f64),
        norm: norm.as_f64(),
        r_rms: obs.r_rms.as_f64(),
    }
}

/// Evolves the worker's field until the convergence metric (binding energy,
/// or total energy for unbounded potentials) changes by at most `tol`
/// relative between consecutive checks.
///
/// Reaching `max_steps` is not an error; the outcome is flagged unconverged.
/// A non-finite norm is reported as divergence, as is, once past the grace
/// period, a field whose overlap with its predecessor one step earlier is
/// negative at a check: the signature of the sign-alternating mode that
/// grows when `dtau` exceeds the stability bound.
pub fn evolve_with<T: Real>(worker: &mut Worker<'_, T>, params: &EvolveParams<T>) -> Result<RunOutcome<T>> {
    params.validate()?;
    let dtau = worker.grid().spec().dtau();
    for &c in &params.constraints {
        worker.impose(c)?;
    }
    worker.normalize()?;
    let mut obs = worker.measure()?;
    let mut history = vec![record(0, dtau, &obs, T::one())];
    let mut snapshots: Vec<Snapshot<T>> = Vec::new();
    let mut converged = false;
    let mut steps = 0u64;
    let mut norm = T::one();
    let mut measured_at = 0u64;
    let mut previous: Option<Slab<T>> = None;
    while steps < params.max_steps {
        if (steps + 1).is_multiple_of(params.check_freq) && steps + 1 >= params.divergence_grace {
            previous = Some(worker.snapshot());
        }
        norm = worker.advance()?;
        steps += 1;
        let tau = T::from_u64(steps).unwrap() * dtau;
        if params.snap_freq > 0 && steps.is_multiple_of(params.snap_freq) && params.max_snapshots > 0 {
            if snapshots.len() == params.max_snapshots {
                snapshots.remove(0);
            }
            snapshots.push(Snapshot { step: steps, tau, psi: worker.snapshot() });
        }
        if !steps.is_multiple_of(params.check_freq) {
            continue;
        }
        for &c in &params.constraints {
            worker.impose(c)?;
        }
        if let Some(prev) = previous.take() {
            let current = worker.snapshot();
            let overlap = worker.dot(&prev, &current)?;
            if overlap < T::zero() {
                return Err(Error::Divergence {
                    step: steps,
                    reason: "field changes sign every step (unstable mode dominates)".into(),
                });
            }
        }
        let now = worker.measure()?;
        measured_at = steps;
        history.push(record(steps, dtau, &now, norm));
        let (m_now, m_prev) = (now.convergence_metric(), obs.convergence_metric());
        obs = now;
        log::debug!("step {steps}: E = {:.10e}", obs.energy);
        if (m_now - m_prev).abs() <= params.tol * m_now.abs() {
            converged = true;
            break;
        }
    }
    if measured_at != steps {
        obs = worker.measure()?;
        history.push(record(steps, dtau, &obs, norm));
    }
    Ok(RunOutcome {
        step_count: steps,
        tau: T::from_u64(steps).unwrap() * dtau,
        snapshots,
        history,
        converged,
        observables: obs,
    })
}

/// Further evolution of an excited state: every `check_freq` steps and at the
/// end, lower states are projected out, constraints re-imposed and the field
/// renormalized.
pub fn polish<T: Real>(worker: &mut Worker<'_, T>, basis: &[Slab<T>], params: &EvolveParams<T>) -> Result<()> {
    let every = params.check_freq.max(1);
    for s in 1..=params.polish_steps {
        worker.advance()?;
        if s % every == 0 || s == params.polish_steps {
            worker.project_out(basis)?;
            for &c in &params.constraints {
                worker.impose(c)?;
            }
            worker.normalize()?;
        }
    }
    Ok(())
}

/// Whole-field evolution state.
#[derive(Debug, Clone)]
pub struct EvolutionState<T> {
    pub psi: Field3D<T>,
    pub tau: T,
    pub step_count: u64,
    /// `(step, tau, field)`, oldest first.
    pub snapshots: Vec<(u64, T, Field3D<T>)>,
    pub energy_history: Vec<EnergyRecord>,
    pub converged: bool,
    pub observables: Observables<T>,
}

/// Serial convergence loop from `initial`.
pub fn evolve_to_convergence<T: Real>(
    initial: Field3D<T>,
    grid: &PotentialGrid<T>,
    params: &EvolveParams<T>,
) -> Result<EvolutionState<T>> {
    check_grid(&initial, grid)?;
    let n = grid.spec().n();
    let mut comm = Comm::solo();
    let mut worker = Worker::new(&mut comm, grid, Slab::from_field(&initial, 1, n)?)?;
    let outcome = evolve_with(&mut worker, params)?;
    let psi = worker.into_psi().into_field()?;
    let snapshots = outcome
        .snapshots
        .into_iter()
        .map(|s| Ok((s.step, s.tau, s.psi.into_field()?)))
        .collect::<Result<_>>()?;
    Ok(EvolutionState {
        psi,
        tau: outcome.tau,
        step_count: outcome.step_count,
        snapshots,
        energy_history: outcome.history,
        converged: outcome.converged,
        observables: outcome.observables,
    })
}
