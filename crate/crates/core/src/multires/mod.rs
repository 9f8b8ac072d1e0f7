//! Wavefunction files and coarse-to-fine resampling at fixed box length.

pub mod io;

use std::path::Path;

use crate::config::RunConfig;
use crate::driver::{self, SolveReport};
use crate::error::{Error, Result};
use crate::evolve;
use crate::lattice::{Field3D, LatticeSpec};
use crate::scalar::Real;

use self::io::FileKind;

/// Writes `field` with the wavefunction kind tag.
pub fn save_wavefunction<T: Real>(field: &Field3D<T>, step_count: u64, path: impl AsRef<Path>) -> Result<()> {
    if !field.is_finite() {
        return Err(Error::NonFinite("wavefunction to save".into()));
    }
    io::write_file(path.as_ref(), FileKind::Wavefunction, field, 0.0, step_count)
}

/// A loaded wavefunction with the step count recorded in its header.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedWavefunction<T> {
    pub field: Field3D<T>,
    pub spec: LatticeSpec<T>,
    pub step_count: u64,
}

/// Reads a wavefunction file. The file carries no timestep, so the returned
/// spec uses `dtau = a^2 / 4`; padding is reset to zero.
pub fn load_wavefunction<T: Real>(path: impl AsRef<Path>) -> Result<LoadedWavefunction<T>> {
    let file = io::read_file(path.as_ref())?;
    if file.header.kind != FileKind::Wavefunction {
        return Err(Error::Format("file holds a potential, not a wavefunction".into()));
    }
    let h = file.header;
    let spec = LatticeSpec::with_default_dtau(h.n, T::lit(h.a), T::lit(h.m))?;
    let mut field = Field3D::from_values(spec, file.payload.into_iter().map(T::lit).collect())?;
    field.apply_dirichlet_boundary(T::zero());
    Ok(LoadedWavefunction { field, spec, step_count: h.step_count })
}

fn check_volume<T: Real>(coarse: &LatticeSpec<T>, fine: &LatticeSpec<T>) -> Result<()> {
    let (lc, lf) = (coarse.length().as_f64(), fine.length().as_f64());
    if (lc - lf).abs() > 1e-12 * lc.abs().max(lf.abs()) {
        return Err(Error::VolumeMismatch { coarse: lc, fine: lf });
    }
    Ok(())
}

/// Interpolation position along one axis: lower coarse index and weight of
/// the upper neighbor. Positions beyond the outermost coarse sites clamp to
/// the nearest face.
fn bracket<T: Real>(coarse: &LatticeSpec<T>, x: T) -> (usize, T) {
    let nc = coarse.n();
    let u = x / coarse.spacing() + T::from_count(nc + 1) / T::lit(2.0);
    let u = u.max(T::one()).min(T::from_count(nc));
    let lo = u.floor().to_usize().unwrap_or(1).clamp(1, nc - 1);
    (lo, u - T::from_count(lo))
}

/// Trilinear interpolation of `coarse` at the sites of `fine_spec`, without
/// renormalization.
pub fn interpolate<T: Real>(coarse: &Field3D<T>, fine_spec: LatticeSpec<T>) -> Result<Field3D<T>> {
    let cspec = *coarse.spec();
    check_volume(&cspec, &fine_spec)?;
    let nf = fine_spec.n();
    let brackets: Vec<(usize, T)> = (1..=nf).map(|n| bracket(&cspec, fine_spec.coordinate(n))).collect();
    let mut fine = Field3D::allocate(fine_spec)?;
    let one = T::one();
    for i in 1..=nf {
        let (i0, tx) = brackets[i - 1];
        for j in 1..=nf {
            let (j0, ty) = brackets[j - 1];
            for k in 1..=nf {
                let (k0, tz) = brackets[k - 1];
                let c = |di: usize, dj: usize, dk: usize| coarse.get(i0 + di, j0 + dj, k0 + dk);
                let lerp = |a: T, b: T, t: T| a * (one - t) + b * t;
                let y0 = lerp(lerp(c(0, 0, 0), c(0, 0, 1), tz), lerp(c(0, 1, 0), c(0, 1, 1), tz), ty);
                let y1 = lerp(lerp(c(1, 0, 0), c(1, 0, 1), tz), lerp(c(1, 1, 0), c(1, 1, 1), tz), ty);
                fine.set(i, j, k, lerp(y0, y1, tx));
            }
        }
    }
    Ok(fine)
}

/// [`interpolate`] followed by renormalization on the fine lattice.
pub fn resample<T: Real>(coarse: &Field3D<T>, fine_spec: LatticeSpec<T>) -> Result<Field3D<T>> {
    let mut fine = interpolate(coarse, fine_spec)?;
    evolve::renormalize(&mut fine)?;
    Ok(fine)
}

/// Runs `config` with the bootstrap lattice sizes replaced by `schedule`
/// (coarse stages before the configured final `N`). An empty schedule is a
/// plain single-lattice run.
pub fn bootstrap_run(schedule: &[usize], config: &RunConfig) -> Result<SolveReport<f64>> {
    let mut config = config.clone();
    config.bootstrap = schedule.to_vec();
    driver::solve::<f64>(&config)
}
