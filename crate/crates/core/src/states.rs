//! Reflection symmetry constraints and excited-state extraction by
//! projecting lower states out of evolution snapshots.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evolve::{self, EvolveParams, Snapshot};
use crate::lattice::{Field3D, Slab};
use crate::observables::Observables;
use crate::parallel::{Comm, Worker};
use crate::potential::PotentialGrid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Symmetric,
    Antisymmetric,
}

/// Reflection about the lattice mid-plane normal to `axis`
/// (padded index `i -> N + 1 - i`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SymmetryConstraint {
    pub axis: Axis,
    pub parity: Parity,
}

impl SymmetryConstraint {
    pub fn symmetric(axis: Axis) -> Self {
        Self { axis, parity: Parity::Symmetric }
    }

    pub fn antisymmetric(axis: Axis) -> Self {
        Self { axis, parity: Parity::Antisymmetric }
    }

    fn sign<T: Real>(&self) -> T {
        match self.parity {
            Parity::Symmetric => T::one(),
            Parity::Antisymmetric => -T::one(),
        }
    }
}

/// `Sx`, `Ay`, ... : parity letter followed by axis letter.
impl FromStr for SymmetryConstraint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        let parity = match chars.next().map(|c| c.to_ascii_uppercase()) {
            Some('S') => Parity::Symmetric,
            Some('A') => Parity::Antisymmetric,
            _ => return Err(Error::Config(format!("bad symmetry {s:?}: expected S or A followed by an axis"))),
        };
        let axis = match chars.next().map(|c| c.to_ascii_lowercase()) {
            Some('x') => Axis::X,
            Some('y') => Axis::Y,
            Some('z') => Axis::Z,
            _ => return Err(Error::Config(format!("bad symmetry {s:?}: axis must be x, y or z"))),
        };
        if chars.next().is_some() {
            return Err(Error::Config(format!("bad symmetry {s:?}")));
        }
        Ok(Self { axis, parity })
    }
}

impl fmt::Display for SymmetryConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = match self.parity {
            Parity::Symmetric => 'S',
            Parity::Antisymmetric => 'A',
        };
        let a = match self.axis {
            Axis::X => 'x',
            Axis::Y => 'y',
            Axis::Z => 'z',
        };
        write!(f, "{p}{a}")
    }
}

/// Reflects one padded x-plane about the y or z mid-line by copying the lower
/// half onto the upper half.
pub(crate) fn impose_in_plane<T: Real>(plane: &mut [T], n: usize, c: SymmetryConstraint) {
    let e = n + 2;
    let s: T = c.sign();
    let odd_center = (n % 2 == 1).then_some(n.div_ceil(2));
    match c.axis {
        Axis::X => unreachable!("x reflection pairs planes"),
        Axis::Y => {
            for j in n / 2 + 1..=n {
                let src = n + 1 - j;
                if src == j {
                    continue;
                }
                for k in 1..=n {
                    plane[j * e + k] = s * plane[src * e + k];
                }
            }
            if let (Some(j), Parity::Antisymmetric) = (odd_center, c.parity) {
                plane[j * e + 1..j * e + 1 + n].fill(T::zero());
            }
        }
        Axis::Z => {
            for j in 1..=n {
                let row = &mut plane[j * e..(j + 1) * e];
                for k in n / 2 + 1..=n {
                    let src = n + 1 - k;
                    if src != k {
                        row[k] = s * row[src];
                    }
                }
                if let (Some(k), Parity::Antisymmetric) = (odd_center, c.parity) {
                    row[k] = T::zero();
                }
            }
        }
    }
}

/// Copies the interior of `src` onto `dst` (both padded x-planes) times `sign`.
pub(crate) fn copy_plane<T: Real>(dst: &mut [T], src: &[T], n: usize, sign: T) {
    let e = n + 2;
    for j in 1..=n {
        let r = j * e + 1..j * e + 1 + n;
        for (d, s) in dst[r.clone()].iter_mut().zip(&src[r]) {
            *d = sign * *s;
        }
    }
}

pub(crate) fn zero_plane<T: Real>(plane: &mut [T], n: usize) {
    let e = n + 2;
    for j in 1..=n {
        plane[j * e + 1..j * e + 1 + n].fill(T::zero());
    }
}

/// Imposes `c` by reflection copy: the lower half along `c.axis` is copied
/// onto the upper half, sign-flipped for antisymmetric parity; for odd `N`
/// the central plane is zeroed under antisymmetric parity.
pub fn impose<T: Real>(field: &mut Field3D<T>, c: SymmetryConstraint) {
    let n = field.spec().n();
    let p = field.spec().extent().pow(2);
    let values = field.values_mut();
    match c.axis {
        Axis::X => {
            for t in n / 2 + 1..=n {
                let s = n + 1 - t;
                if s == t {
                    if c.parity == Parity::Antisymmetric {
                        zero_plane(&mut values[t * p..(t + 1) * p], n);
                    }
                    continue;
                }
                let (lo, hi) = values.split_at_mut(t * p);
                copy_plane(&mut hi[..p], &lo[s * p..(s + 1) * p], n, c.sign());
            }
        }
        _ => {
            for i in 1..=n {
                impose_in_plane(&mut values[i * p..(i + 1) * p], n, c);
            }
        }
    }
}

/// Orthogonal parity projector `(psi + s R psi) / 2`, with `R` the reflection
/// and `s = +1` or `-1`. Unlike [`impose`], the projectors for opposite
/// parities annihilate each other.
pub fn project_parity<T: Real>(field: &Field3D<T>, c: SymmetryConstraint) -> Field3D<T> {
    let n = field.spec().n();
    let s: T = c.sign();
    let half = T::lit(0.5);
    let mut out = field.clone();
    for (i, j, k, v) in field.interior() {
        let (ri, rj, rk) = match c.axis {
            Axis::X => (n + 1 - i, j, k),
            Axis::Y => (i, n + 1 - j, k),
            Axis::Z => (i, j, n + 1 - k),
        };
        out.set(i, j, k, half * (v + s * field.get(ri, rj, rk)));
    }
    out
}

/// Largest `|psi(x) - s psi(R x)|` over the interior.
pub fn asymmetry<T: Real>(field: &Field3D<T>, c: SymmetryConstraint) -> T {
    let n = field.spec().n();
    let s: T = c.sign();
    field.interior().fold(T::zero(), |m, (i, j, k, v)| {
        let r = match c.axis {
            Axis::X => field.get(n + 1 - i, j, k),
            Axis::Y => field.get(i, n + 1 - j, k),
            Axis::Z => field.get(i, j, n + 1 - k),
        };
        m.max((v - s * r).abs())
    })
}

fn inner<T: Real>(x: &Field3D<T>, y: &Field3D<T>) -> T {
    x.interior().zip(y.interior()).fold(T::zero(), |acc, (a, b)| acc + a.3 * b.3)
}

/// Removes from `snap` its components along each basis state in turn
/// (sequential Gram-Schmidt).
///
/// Fails with [`Error::DegenerateSnapshot`] when the residual norm drops
/// below `1e-12` of the snapshot's norm.
pub fn project_out<T: Real>(snap: &Field3D<T>, basis: &[Field3D<T>]) -> Result<Field3D<T>> {
    let mut r = snap.clone();
    let snap2 = inner(snap, snap);
    for b in basis {
        if b.spec().n() != snap.spec().n() {
            return Err(Error::DimensionMismatch { expected: snap.spec().n(), found: b.spec().n() });
        }
        let bb = inner(b, b);
        if bb == T::zero() {
            return Err(Error::ZeroNorm);
        }
        let c = inner(&r, b) / bb;
        for (v, w) in r.values_mut().iter_mut().zip(b.values()) {
            *v = *v - c * *w;
        }
    }
    let ratio = if snap2 == T::zero() { 0.0 } else { (inner(&r, &r) / snap2).sqrt().as_f64() };
    if ratio < 1e-12 {
        return Err(Error::DegenerateSnapshot { ratio });
    }
    Ok(r)
}

/// A state obtained from a snapshot.
#[derive(Debug, Clone)]
pub struct ExcitedState<T> {
    pub psi: Slab<T>,
    pub observables: Observables<T>,
    /// Step at which the source snapshot was taken.
    pub snapshot_step: u64,
}

/// Extracts up to `count` excited states from the worker's snapshots.
///
/// `basis` starts with the converged ground state. For each state the earliest
/// unused snapshot has all previously found states projected out, is
/// normalized, then evolved `polish_steps` further with re-projection and
/// constraint re-imposition every `check_freq` steps. Degenerate snapshots are
/// skipped. On return the worker holds the last extracted state.
pub fn extract_excited_with<T: Real>(
    worker: &mut Worker<'_, T>,
    snapshots: &[Snapshot<T>],
    mut basis: Vec<Slab<T>>,
    count: usize,
    params: &EvolveParams<T>,
) -> Result<Vec<ExcitedState<T>>> {
    let mut found = Vec::new();
    let mut next = 0;
    while found.len() < count {
        let Some(snap) = snapshots.get(next) else {
            return Err(Error::InsufficientSnapshots { needed: count, available: found.len() });
        };
        next += 1;
        worker.set_psi(snap.psi.clone())?;
        match worker.project_out(&basis) {
            Ok(()) => {}
            Err(Error::DegenerateSnapshot { ratio }) => {
                log::warn!("snapshot at step {} is degenerate (residual {ratio:e}); skipping", snap.step);
                continue;
            }
            Err(e) => return Err(e),
        }
        for &c in &params.constraints {
            worker.impose(c)?;
        }
        worker.normalize()?;
        evolve::polish(worker, &basis, params)?;
        let observables = worker.measure()?;
        log::info!(
            "excited state {}: E = {:.8e} (snapshot step {})",
            found.len() + 1,
            observables.energy,
            snap.step
        );
        let psi = worker.snapshot();
        basis.push(psi.clone());
        found.push(ExcitedState { psi, observables, snapshot_step: snap.step });
    }
    Ok(found)
}

/// Serial extraction over whole fields. Returns `(psi_k, E_k)` pairs.
pub fn extract_excited<T: Real>(
    state: &evolve::EvolutionState<T>,
    grid: &PotentialGrid<T>,
    count: usize,
    params: &EvolveParams<T>,
) -> Result<Vec<(Field3D<T>, T)>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let n = grid.spec().n();
    let mut comm = Comm::solo();
    let mut worker = Worker::new(&mut comm, grid, Slab::from_field(&state.psi, 1, n)?)?;
    let snapshots: Vec<Snapshot<T>> = state
        .snapshots
        .iter()
        .map(|(step, tau, f)| Ok(Snapshot { step: *step, tau: *tau, psi: Slab::from_field(f, 1, n)? }))
        .collect::<Result<_>>()?;
    let ground = Slab::from_field(&state.psi, 1, n)?;
    extract_excited_with(&mut worker, &snapshots, vec![ground], count, params)?
        .into_iter()
        .map(|s| Ok((s.psi.into_field()?, s.observables.energy)))
        .collect()
}

/// Lowest state in the symmetry sector selected by `constraints`, evolved
/// serially from `initial`.
pub fn symmetry_excited_run<T: Real>(
    initial: Field3D<T>,
    grid: &PotentialGrid<T>,
    params: &EvolveParams<T>,
) -> Result<(Field3D<T>, T)> {
    let state = evolve::evolve_to_convergence(initial, grid, params)?;
    Ok((state.psi, state.observables.energy))
}
