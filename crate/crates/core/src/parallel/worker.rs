//! Per-rank propagation engine over one slab.

use crate::error::{Error, Result};
use crate::lattice::{Field3D, Slab};
use crate::observables::Observables;
use crate::parallel::comm::Comm;
use crate::parallel::partition::{SlabExtent, SlabPartition};
use crate::parallel::transport::{Direction, MessageKind};
use crate::potential::PotentialGrid;
use crate::scalar::Real;
use crate::states::{self, Axis, Parity, SymmetryConstraint};
use crate::stencil;

/// One rank's share of the evolution: its slab of `psi`, the potential
/// window covering it, and the communicator linking it to the other ranks.
///
/// Every rank runs the same sequence of calls. With a solo communicator the
/// engine is the serial solver; no code path depends on the worker count, so
/// results are bitwise independent of it.
///
/// Renormalization is deferred: [`Worker::advance`] computes the norm of the
/// updated field and folds the rescaling into the next sweep. Operations that
/// read the field apply any pending factor first.
pub struct Worker<'a, T: Real> {
    comm: &'a mut Comm,
    grid: &'a PotentialGrid<T>,
    partition: SlabPartition,
    extent: SlabExtent,
    psi: Slab<T>,
    next: Vec<T>,
    scale: T,
    step: u64,
    kin: T,
}

impl<'a, T: Real> Worker<'a, T> {
    pub fn new(comm: &'a mut Comm, grid: &'a PotentialGrid<T>, psi: Slab<T>) -> Result<Self> {
        let spec = *grid.spec();
        let n = spec.n();
        if psi.spec().n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: psi.spec().n() });
        }
        let partition = SlabPartition::new(n, comm.size())?;
        let extent = partition.extent(comm.rank());
        if psi.first() != extent.first || psi.width() != extent.width {
            return Err(Error::OutOfRange(format!(
                "rank {} slab {}+{} does not match partition {}+{}",
                comm.rank(),
                psi.first(),
                psi.width(),
                extent.first,
                extent.width
            )));
        }
        if grid.first_plane() > extent.first || grid.first_plane() + grid.planes() <= extent.last() {
            return Err(Error::OutOfRange(format!("potential window does not cover planes {}..={}", extent.first, extent.last())));
        }
        let a = spec.spacing();
        let kin = spec.dtau() / (T::lit(2.0) * spec.mass() * a * a);
        let next = psi.values().to_vec();
        Ok(Self { comm, grid, partition, extent, psi, next, scale: T::one(), step: 0, kin })
    }

    pub fn comm(&mut self) -> &mut Comm {
        self.comm
    }

    pub fn grid(&self) -> &PotentialGrid<T> {
        self.grid
    }

    pub fn extent(&self) -> SlabExtent {
        self.extent
    }

    pub fn partition(&self) -> SlabPartition {
        self.partition
    }

    /// Steps taken since construction.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// The current slab with any pending normalization applied.
    pub fn psi(&mut self) -> &Slab<T> {
        self.materialize();
        &self.psi
    }

    pub fn snapshot(&mut self) -> Slab<T> {
        self.psi().clone()
    }

    pub fn into_psi(mut self) -> Slab<T> {
        self.materialize();
        self.psi
    }

    pub fn set_psi(&mut self, psi: Slab<T>) -> Result<()> {
        if psi.first() != self.extent.first || psi.width() != self.extent.width || psi.spec().n() != self.partition.n() {
            return Err(Error::OutOfRange("replacement slab does not match this rank's extent".into()));
        }
        self.psi = psi;
        self.scale = T::one();
        Ok(())
    }

    fn materialize(&mut self) {
        if self.scale != T::one() {
            self.psi.scale_interior(self.scale);
            self.scale = T::one();
        }
    }

    fn send_halos(&mut self, tag: u32) -> Result<()> {
        let w = self.extent.width;
        if let Some(l) = self.extent.left {
            self.comm.send(l, MessageKind::Halo, tag, Direction::Left, self.psi.plane(1))?;
        }
        if let Some(r) = self.extent.right {
            self.comm.send(r, MessageKind::Halo, tag, Direction::Right, self.psi.plane(w))?;
        }
        Ok(())
    }

    fn recv_halos(&mut self, tag: u32) -> Result<()> {
        let w = self.extent.width;
        if let Some(l) = self.extent.left {
            self.comm.recv_into(l, MessageKind::Halo, tag, self.psi.plane_mut(0))?;
        }
        if let Some(r) = self.extent.right {
            self.comm.recv_into(r, MessageKind::Halo, tag, self.psi.plane_mut(w + 1))?;
        }
        Ok(())
    }

    /// Refreshes the padding planes shared with neighbors.
    pub fn exchange_halos(&mut self) -> Result<()> {
        let tag = self.step as u32;
        self.send_halos(tag)?;
        self.recv_halos(tag)
    }

    fn sweep(&mut self, scale: T) -> Result<Vec<T>> {
        let tag = self.step as u32;
        let w = self.extent.width;
        let first = self.extent.first;
        let mut sums = vec![T::zero(); w];
        // Inside-out: boundary planes leave first, the interior is updated
        // while they travel, and the boundary planes are updated last.
        self.send_halos(tag)?;
        for l in 2..w {
            sums[l - 1] =
                stencil::update_plane(self.psi.values(), &mut self.next, l, first + l - 1, self.grid, self.kin, scale);
        }
        self.recv_halos(tag)?;
        let edges: &[usize] = if w == 1 { &[1] } else { &[1, w] };
        for &l in edges {
            sums[l - 1] =
                stencil::update_plane(self.psi.values(), &mut self.next, l, first + l - 1, self.grid, self.kin, scale);
        }
        std::mem::swap(self.psi.buffer_mut(), &mut self.next);
        self.step += 1;
        Ok(sums)
    }

    /// One update of the whole lattice, without renormalization.
    pub fn halo_step(&mut self) -> Result<()> {
        let scale = self.scale;
        self.scale = T::one();
        self.sweep(scale).map(|_| ())
    }

    /// One update followed by (deferred) renormalization. Returns the norm
    /// `sqrt(sum psi^2 a^3)` of the updated field before rescaling.
    pub fn advance(&mut self) -> Result<T> {
        let scale = self.scale;
        let sums = self.sweep(scale)?;
        let a = self.grid.spec().spacing();
        let norm2 = self.comm.allreduce_planes(&sums, 1)?[0] * a * a * a;
        if !norm2.is_finite() {
            return Err(Error::Divergence { step: self.step, reason: "norm is no longer finite".into() });
        }
        if norm2 == T::zero() {
            return Err(Error::Divergence { step: self.step, reason: "wavefunction vanished".into() });
        }
        let norm = norm2.sqrt();
        self.scale = norm.recip();
        Ok(norm)
    }

    /// Energy, binding energy, norm and RMS radius of the current field.
    pub fn measure(&mut self) -> Result<Observables<T>> {
        self.materialize();
        self.exchange_halos()?;
        let w = self.extent.width;
        let mut sums = vec![T::zero(); 3 * w];
        {
            let (num, rest) = sums.split_at_mut(w);
            let (den, r2) = rest.split_at_mut(w);
            stencil::hamiltonian_partials(self.psi.values(), w, self.extent.first, self.grid, num, den, r2);
        }
        let t = self.comm.allreduce_planes(&sums, 3)?;
        Observables::from_sums(t[0], t[1], t[2], self.grid)
    }

    /// `sum x y` over the global interior (no lattice measure).
    pub fn dot(&mut self, x: &Slab<T>, y: &Slab<T>) -> Result<T> {
        let n = self.partition.n();
        let mut partial = vec![T::zero(); self.extent.width];
        stencil::dot_partials(x.values(), y.values(), n, self.extent.width, &mut partial);
        Ok(self.comm.allreduce_planes(&partial, 1)?[0])
    }

    /// Rescales to `sum psi^2 a^3 = 1` and returns the previous norm.
    pub fn normalize(&mut self) -> Result<T> {
        self.materialize();
        let s2 = self.dot_self()?;
        if s2 == T::zero() {
            return Err(Error::ZeroNorm);
        }
        let a = self.grid.spec().spacing();
        let norm = (s2 * a * a * a).sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite("wavefunction norm".into()));
        }
        self.psi.scale_interior(norm.recip());
        Ok(norm)
    }

    fn dot_self(&mut self) -> Result<T> {
        let n = self.partition.n();
        let mut partial = vec![T::zero(); self.extent.width];
        stencil::dot_partials(self.psi.values(), self.psi.values(), n, self.extent.width, &mut partial);
        Ok(self.comm.allreduce_planes(&partial, 1)?[0])
    }

    /// Sequential Gram-Schmidt against `basis` (slabs of this rank).
    pub fn project_out(&mut self, basis: &[Slab<T>]) -> Result<()> {
        self.materialize();
        let n = self.partition.n();
        let w = self.extent.width;
        let start = self.dot_self()?;
        for b in basis {
            let bb = {
                let mut partial = vec![T::zero(); w];
                stencil::dot_partials(b.values(), b.values(), n, w, &mut partial);
                self.comm.allreduce_planes(&partial, 1)?[0]
            };
            if bb == T::zero() {
                return Err(Error::ZeroNorm);
            }
            let mut partial = vec![T::zero(); w];
            stencil::dot_partials(self.psi.values(), b.values(), n, w, &mut partial);
            let c = self.comm.allreduce_planes(&partial, 1)?[0] / bb;
            stencil::axpy_interior(self.psi.values_mut(), c, b.values(), n, w);
        }
        let end = self.dot_self()?;
        let ratio = if start == T::zero() { 0.0 } else { (end / start).sqrt().as_f64() };
        if ratio < 1e-12 {
            return Err(Error::DegenerateSnapshot { ratio });
        }
        Ok(())
    }

    /// Reflection-copy imposition of `c`; x reflections exchange mirrored
    /// planes between the ranks owning them.
    pub fn impose(&mut self, c: SymmetryConstraint) -> Result<()> {
        self.materialize();
        let n = self.partition.n();
        let w = self.extent.width;
        if c.axis != Axis::X {
            for l in 1..=w {
                states::impose_in_plane(self.psi.plane_mut(l), n, c);
            }
            return Ok(());
        }
        self.mirrored_plane_exchange(c)
    }

    fn mirrored_plane_exchange(&mut self, c: SymmetryConstraint) -> Result<()> {
        let n = self.partition.n();
        let me = self.comm.rank();
        let sign = if c.parity == Parity::Symmetric { T::one() } else { -T::one() };
        let sources = 1..=n / 2;
        let local = |g: usize, e: &SlabExtent| g - e.first + 1;
        for s in sources.clone() {
            let t = n + 1 - s;
            let (so, to) = (self.partition.owner(s), self.partition.owner(t));
            if so == me && to != me {
                let l = local(s, &self.extent);
                self.comm.send(to, MessageKind::Mirror, s as u32, Direction::None, self.psi.plane(l))?;
            }
        }
        let p = self.psi.plane_len();
        let mut buf = vec![T::zero(); p];
        for s in sources {
            let t = n + 1 - s;
            let (so, to) = (self.partition.owner(s), self.partition.owner(t));
            if to != me {
                continue;
            }
            if so == me {
                buf.copy_from_slice(self.psi.plane(local(s, &self.extent)));
            } else {
                self.comm.recv_into(so, MessageKind::Mirror, s as u32, &mut buf)?;
            }
            let lt = local(t, &self.extent);
            states::copy_plane(self.psi.plane_mut(lt), &buf, n, sign);
        }
        if n % 2 == 1 && c.parity == Parity::Antisymmetric {
            let mid = n.div_ceil(2);
            if self.extent.owns(mid) {
                let l = local(mid, &self.extent);
                states::zero_plane(self.psi.plane_mut(l), n);
            }
        }
        Ok(())
    }

    /// Assembles the global field at rank 0 (`None` elsewhere).
    pub fn gather_field(&mut self) -> Result<Option<Field3D<T>>> {
        self.materialize();
        gather_slab(self.comm, &self.psi)
    }
}

/// Assembles a global field at rank 0 from every rank's slab.
pub fn gather_slab<T: Real>(comm: &mut Comm, slab: &Slab<T>) -> Result<Option<Field3D<T>>> {
    let p = slab.plane_len();
    let w = slab.width();
    let interior = &slab.values()[p..(w + 1) * p];
    let Some(parts) = comm.gather(interior)? else {
        return Ok(None);
    };
    let spec = *slab.spec();
    let mut field = Field3D::allocate(spec)?;
    let mut offset = p;
    for part in parts {
        let end = offset + part.len();
        if end > field.values().len() - p {
            return Err(Error::Transport("gathered planes overflow the lattice".into()));
        }
        field.values_mut()[offset..end].copy_from_slice(&part);
        offset = end;
    }
    if offset != field.values().len() - p {
        return Err(Error::Transport("gathered planes do not cover the lattice".into()));
    }
    Ok(Some(field))
}

/// Distributes rank 0's global field; every rank receives its own slab.
pub fn scatter_field<T: Real>(comm: &mut Comm, field: Option<&Field3D<T>>, spec_n: usize) -> Result<Vec<T>> {
    let partition = SlabPartition::new(spec_n, comm.size())?;
    let parts = match field {
        Some(f) if comm.is_root() => {
            let p = f.spec().extent().pow(2);
            Some(
                partition
                    .extents()
                    .map(|e| f.values()[e.first * p..(e.last() + 1) * p].to_vec())
                    .collect(),
            )
        }
        _ => None,
    };
    comm.scatter(parts)
}

/// Builds this rank's slab from the planes delivered by [`scatter_field`].
pub fn slab_from_planes<T: Real>(
    spec: crate::lattice::LatticeSpec<T>,
    extent: SlabExtent,
    planes: &[T],
) -> Result<Slab<T>> {
    let mut slab = Slab::allocate(spec, extent.first, extent.width)?;
    let p = slab.plane_len();
    if planes.len() != extent.width * p {
        return Err(Error::Transport(format!("received {} values for {} planes", planes.len(), extent.width)));
    }
    slab.values_mut()[p..(extent.width + 1) * p].copy_from_slice(planes);
    Ok(slab)
}
