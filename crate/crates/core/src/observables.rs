//! Energy functional, binding energy, norm and RMS radius.
//!
//! The energy is the Rayleigh quotient of the discrete Hamiltonian,
//! `E = sum psi (-(1/2m) lap psi / a^2 + V psi) / sum psi^2`, with sums in
//! canonical order.

use crate::error::{Error, Result};
use crate::lattice::Field3D;
use crate::potential::PotentialGrid;
use crate::scalar::Real;
use crate::stencil;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables<T> {
    pub energy: T,
    /// `E - V_inf`; `None` for potentials unbounded at infinity.
    pub binding: Option<T>,
    /// `sum psi^2 a^3`.
    pub norm2: T,
    pub r_rms: T,
}

impl<T: Real> Observables<T> {
    /// Assembles observables from global sums of `psi H psi`, `psi^2` and `r^2 psi^2`.
    pub(crate) fn from_sums(num: T, den: T, r2: T, grid: &PotentialGrid<T>) -> Result<Self> {
        if den == T::zero() {
            return Err(Error::ZeroNorm);
        }
        let a = grid.spec().spacing();
        let energy = num / den;
        let obs = Self {
            energy,
            binding: grid.v_inf().map(|v| energy - v),
            norm2: den * a * a * a,
            r_rms: (r2 / den).sqrt(),
        };
        if !(obs.energy.is_finite() && obs.norm2.is_finite() && obs.r_rms.is_finite()) {
            return Err(Error::NonFinite("observables".into()));
        }
        Ok(obs)
    }

    /// Binding energy when defined, total energy otherwise.
    pub fn convergence_metric(&self) -> T {
        self.binding.unwrap_or(self.energy)
    }
}

fn check_compatible<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<()> {
    let n = psi.spec().n();
    if grid.spec().n() != n {
        return Err(Error::DimensionMismatch { expected: grid.spec().n(), found: n });
    }
    if grid.first_plane() != 1 || grid.planes() != n {
        return Err(Error::OutOfRange("potential grid does not cover the lattice".into()));
    }
    Ok(())
}

/// All observables of `psi` in one pass.
pub fn measure<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<Observables<T>> {
    check_compatible(psi, grid)?;
    let n = psi.spec().n();
    let (mut num, mut den, mut r2) = (vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]);
    stencil::hamiltonian_partials(psi.values(), n, 1, grid, &mut num, &mut den, &mut r2);
    let total = |xs: &[T]| xs.iter().fold(T::zero(), |acc, &v| acc + v);
    Observables::from_sums(total(&num), total(&den), total(&r2), grid)
}

pub fn energy<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<T> {
    measure(psi, grid).map(|o| o.energy)
}

pub fn binding_energy<T: Real>(psi: &Field3D<T>, grid: &PotentialGrid<T>) -> Result<Option<T>> {
    measure(psi, grid).map(|o| o.binding)
}

/// `sum psi^2 a^3` over the interior, in canonical order.
pub fn norm2<T: Real>(psi: &Field3D<T>) -> T {
    let n = psi.spec().n();
    let mut planes = vec![T::zero(); n];
    stencil::dot_partials(psi.values(), psi.values(), n, n, &mut planes);
    let a = psi.spec().spacing();
    planes.iter().fold(T::zero(), |acc, &v| acc + v) * a * a * a
}

/// `sqrt(sum r^2 psi^2 / sum psi^2)` with `r` measured from the lattice center.
pub fn rms_radius<T: Real>(psi: &Field3D<T>) -> Result<T> {
    let spec = psi.spec();
    let (mut num, mut den) = (T::zero(), T::zero());
    for (i, j, k, v) in psi.interior() {
        let (x, y, z) = (spec.coordinate(i), spec.coordinate(j), spec.coordinate(k));
        let v2 = v * v;
        num = num + (x * x + y * y + z * z) * v2;
        den = den + v2;
    }
    if den == T::zero() {
        return Err(Error::ZeroNorm);
    }
    Ok((num / den).sqrt())
}
