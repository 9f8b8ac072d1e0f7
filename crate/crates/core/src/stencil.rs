//! Per-plane kernels over plane-major buffers.
//!
//! A buffer holds local x-planes `0..=w + 1` of `(N + 2)^2` values each; local
//! plane `l` corresponds to global plane `first + l - 1`. Every kernel returns
//! or fills one partial sum per plane, accumulated in canonical (j, k) order,
//! so that totals combined in plane order do not depend on how the lattice is
//! split between workers.

use crate::lattice::LatticeSpec;
use crate::potential::PotentialGrid;
use crate::scalar::Real;

/// Updates local plane `local` of `dst` from `src` and returns the plane's
/// sum of squared outputs.
///
/// `out = (A psi + B kin lap) * scale`, with `lap` the six-neighbor sum minus
/// six times the center and `kin = dtau / (2 m a^2)`.
#[inline]
pub(crate) fn update_plane<T: Real>(
    src: &[T],
    dst: &mut [T],
    local: usize,
    global: usize,
    grid: &PotentialGrid<T>,
    kin: T,
    scale: T,
) -> T {
    let n = grid.spec().n();
    let e = n + 2;
    let p = e * e;
    let six = T::lit(6.0);
    let (ca, cb) = (grid.a_slice(), grid.b_slice());
    let mut acc = T::zero();
    for j in 1..=n {
        let base = local * p + j * e;
        let row = &src[base..base + e];
        let xm = &src[base - p + 1..base - p + 1 + n];
        let xp = &src[base + p + 1..base + p + 1 + n];
        let ym = &src[base - e + 1..base - e + 1 + n];
        let yp = &src[base + e + 1..base + e + 1 + n];
        let off = grid.row(global, j);
        let a = &ca[off..off + n];
        let b = &cb[off..off + n];
        let out = &mut dst[base + 1..base + 1 + n];
        for k in 0..n {
            let c = row[k + 1];
            let lap = xm[k] + xp[k] + ym[k] + yp[k] + row[k] + row[k + 2] - six * c;
            let v = (a[k] * c + b[k] * kin * lap) * scale;
            out[k] = v;
            acc = acc + v * v;
        }
    }
    acc
}

/// Per-plane sums needed for the energy functional and RMS radius:
/// `psi (H psi)`, `psi^2` and `r^2 psi^2`, written to `num`, `den` and `r2`.
pub(crate) fn hamiltonian_partials<T: Real>(
    src: &[T],
    width: usize,
    first: usize,
    grid: &PotentialGrid<T>,
    num: &mut [T],
    den: &mut [T],
    r2: &mut [T],
) {
    let spec: &LatticeSpec<T> = grid.spec();
    let n = spec.n();
    let e = n + 2;
    let p = e * e;
    let six = T::lit(6.0);
    let a = spec.spacing();
    let kinetic = (T::lit(2.0) * spec.mass() * a * a).recip();
    let coords: Vec<T> = (0..e).map(|c| spec.coordinate(c)).collect();
    let v_all = grid.v_slice();
    for l in 1..=width {
        let g = first + l - 1;
        let x2 = coords[g] * coords[g];
        let (mut sn, mut sd, mut sr) = (T::zero(), T::zero(), T::zero());
        for j in 1..=n {
            let base = l * p + j * e;
            let row = &src[base..base + e];
            let xm = &src[base - p + 1..base - p + 1 + n];
            let xp = &src[base + p + 1..base + p + 1 + n];
            let ym = &src[base - e + 1..base - e + 1 + n];
            let yp = &src[base + e + 1..base + e + 1 + n];
            let off = grid.row(g, j);
            let v = &v_all[off..off + n];
            let xy2 = x2 + coords[j] * coords[j];
            for k in 0..n {
                let c = row[k + 1];
                let lap = xm[k] + xp[k] + ym[k] + yp[k] + row[k] + row[k + 2] - six * c;
                let h = v[k] * c - kinetic * lap;
                let c2 = c * c;
                sn = sn + c * h;
                sd = sd + c2;
                let z = coords[k + 1];
                sr = sr + (xy2 + z * z) * c2;
            }
        }
        num[l - 1] = sn;
        den[l - 1] = sd;
        r2[l - 1] = sr;
    }
}

/// Per-plane sums of `x * y` over interior sites of local planes `1..=width`.
pub(crate) fn dot_partials<T: Real>(x: &[T], y: &[T], n: usize, width: usize, out: &mut [T]) {
    let e = n + 2;
    let p = e * e;
    for l in 1..=width {
        let mut acc = T::zero();
        for j in 1..=n {
            let base = l * p + j * e + 1;
            for (a, b) in x[base..base + n].iter().zip(&y[base..base + n]) {
                acc = acc + *a * *b;
            }
        }
        out[l - 1] = acc;
    }
}

/// `x -= c * y` over interior sites of local planes `1..=width`.
pub(crate) fn axpy_interior<T: Real>(x: &mut [T], c: T, y: &[T], n: usize, width: usize) {
    let e = n + 2;
    let p = e * e;
    for l in 1..=width {
        for j in 1..=n {
            let base = l * p + j * e + 1;
            for (a, b) in x[base..base + n].iter_mut().zip(&y[base..base + n]) {
                *a = *a - c * *b;
            }
        }
    }
}
