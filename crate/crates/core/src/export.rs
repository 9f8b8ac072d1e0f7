//! CSV export of a lattice plane.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::Field3D;
use crate::scalar::Real;
use crate::states::Axis;

/// Writes the plane normal to `axis` at padded index `index` (1..=N) as CSV
/// with the two in-plane coordinates and `psi`, or `psi2` when `density`.
pub fn write_slice<T: Real>(field: &Field3D<T>, axis: Axis, index: usize, density: bool, out: &mut impl Write) -> Result<()> {
    let spec = field.spec();
    let n = spec.n();
    if !(1..=n).contains(&index) {
        return Err(Error::OutOfRange(format!("plane {index} outside 1..={n}")));
    }
    let (u, v) = match axis {
        Axis::X => ("y", "z"),
        Axis::Y => ("x", "z"),
        Axis::Z => ("x", "y"),
    };
    writeln!(out, "{u},{v},{}", if density { "psi2" } else { "psi" })?;
    for p in 1..=n {
        for q in 1..=n {
            let value = match axis {
                Axis::X => field.get(index, p, q),
                Axis::Y => field.get(p, index, q),
                Axis::Z => field.get(p, q, index),
            };
            let value = if density { value * value } else { value };
            writeln!(out, "{:e},{:e},{:e}", spec.coordinate(p).as_f64(), spec.coordinate(q).as_f64(), value.as_f64())?;
        }
    }
    Ok(())
}

pub fn export_slice<T: Real>(field: &Field3D<T>, axis: Axis, index: usize, density: bool, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_slice(field, axis, index, density, &mut out)?;
    out.flush()?;
    Ok(())
}
