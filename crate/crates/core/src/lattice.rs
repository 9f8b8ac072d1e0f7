//! Padded cubic lattice storage.
//!
//! A lattice with `N` sites per axis is stored with one padding layer on every
//! face, so each axis has extent `N + 2`. Interior sites use padded indices
//! `1..=N`; indices `0` and `N + 1` hold the boundary value (or halo data while
//! a slab exchange is in flight). Storage is x-major:
//! `index = ((i * (N + 2)) + j) * (N + 2) + k`, which is also the canonical
//! order for files and reductions.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lattice geometry and the physical parameters of the evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeSpec<T> {
    n: usize,
    a: T,
    m: T,
    dtau: T,
}

impl<T: Real> LatticeSpec<T> {
    pub fn new(n: usize, a: T, m: T, dtau: T) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidSpec(format!("N must be at least 4, got {n}")));
        }
        for (name, v) in [("a", a), ("m", m), ("dtau", dtau)] {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::InvalidSpec(format!("{name} must be finite and positive, got {v}")));
            }
        }
        Ok(Self { n, a, m, dtau })
    }

    /// Spec with the customary timestep `dtau = a^2 / 4`.
    pub fn with_default_dtau(n: usize, a: T, m: T) -> Result<Self> {
        Self::new(n, a, m, a * a / T::lit(4.0))
    }

    pub fn with_dtau(&self, dtau: T) -> Result<Self> {
        Self::new(self.n, self.a, self.m, dtau)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> T {
        self.a
    }

    pub fn mass(&self) -> T {
        self.m
    }

    pub fn dtau(&self) -> T {
        self.dtau
    }

    /// Box length `L = N a`.
    pub fn length(&self) -> T {
        T::from_count(self.n) * self.a
    }

    /// Storage extent per axis, `N + 2`.
    pub fn extent(&self) -> usize {
        self.n + 2
    }

    pub fn total_sites(&self) -> usize {
        self.extent().pow(3)
    }

    /// Physical coordinate of padded index `idx` along any axis. The lattice
    /// center sits at padded coordinate `(N + 1) / 2`, between two sites when
    /// `N` is even.
    #[inline]
    pub fn coordinate(&self, idx: usize) -> T {
        (T::from_count(2 * idx) - T::from_count(self.n + 1)) * self.a / T::lit(2.0)
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        linear_index(self.n, i, j, k)
    }
}

/// Canonical x-major index of padded coordinates `(i, j, k)` on an `N`-site lattice.
///
/// Panics when any coordinate exceeds `N + 1`.
#[inline]
pub fn linear_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    let e = n + 2;
    assert!(i < e && j < e && k < e, "padded index ({i}, {j}, {k}) outside 0..={}", n + 1);
    (i * e + j) * e + k
}

/// Inverse of [`linear_index`].
pub fn delinearize(n: usize, index: usize) -> (usize, usize, usize) {
    let e = n + 2;
    assert!(index < e * e * e, "linear index {index} outside lattice");
    (index / (e * e), (index / e) % e, index % e)
}

/// Padded real scalar field over the whole lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3D<T> {
    spec: LatticeSpec<T>,
    values: Vec<T>,
}

impl<T: Real> Field3D<T> {
    /// Zero-filled field.
    pub fn allocate(spec: LatticeSpec<T>) -> Result<Self> {
        let values = zeroed(spec.total_sites())?;
        Ok(Self { spec, values })
    }

    /// Wraps canonical-order values (length `(N + 2)^3`).
    pub fn from_values(spec: LatticeSpec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != spec.total_sites() {
            return Err(Error::Format(format!(
                "expected {} values for N={}, got {}",
                spec.total_sites(),
                spec.n(),
                values.len()
            )));
        }
        Ok(Self { spec, values })
    }

    /// Field whose interior is `f(x, y, z)` in physical coordinates.
    pub fn from_fn(spec: LatticeSpec<T>, f: impl Fn(T, T, T) -> T) -> Result<Self> {
        let mut field = Self::allocate(spec)?;
        let n = spec.n();
        for i in 1..=n {
            let x = spec.coordinate(i);
            for j in 1..=n {
                let y = spec.coordinate(j);
                for k in 1..=n {
                    let idx = spec.linear_index(i, j, k);
                    field.values[idx] = f(x, y, spec.coordinate(k));
                }
            }
        }
        Ok(field)
    }

    pub fn spec(&self) -> &LatticeSpec<T> {
        &self.spec
    }

    /// Replaces the physical parameters while keeping the data; `N` must agree.
    pub fn set_spec(&mut self, spec: LatticeSpec<T>) -> Result<()> {
        if spec.n() != self.spec.n() {
            return Err(Error::DimensionMismatch { expected: self.spec.n(), found: spec.n() });
        }
        self.spec = spec;
        Ok(())
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> T {
        self.values[self.spec.linear_index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: T) {
        let idx = self.spec.linear_index(i, j, k);
        self.values[idx] = v;
    }

    /// Fills every interior site with an independent standard normal draw.
    ///
    /// The generator is ChaCha20 seeded through `seed_from_u64(seed)`. Each
    /// interior site consumes exactly two 64-bit outputs (Box–Muller, cosine
    /// branch) at stream position `4 * s` 32-bit words, where `s` is the site's
    /// interior x-major rank. Any sub-block of the lattice can therefore be
    /// generated independently and bit-identically. Padding is left untouched.
    pub fn fill_random_gaussian(&mut self, seed: u64) {
        let n = self.spec.n();
        fill_gaussian_planes(&mut self.values, n, 1, n, seed);
    }

    /// Sets every padding site to `value`; the interior is not modified.
    pub fn apply_dirichlet_boundary(&mut self, value: T) {
        let e = self.spec.extent();
        let n = self.spec.n();
        for i in 0..e {
            for j in 0..e {
                let row = (i * e + j) * e;
                if i == 0 || i == n + 1 || j == 0 || j == n + 1 {
                    self.values[row..row + e].fill(value);
                } else {
                    self.values[row] = value;
                    self.values[row + e - 1] = value;
                }
            }
        }
    }

    /// Iterates `(i, j, k, value)` over interior sites in canonical order.
    pub fn interior(&self) -> impl Iterator<Item = (usize, usize, usize, T)> + '_ {
        let n = self.spec.n();
        (1..=n).flat_map(move |i| {
            (1..=n).flat_map(move |j| (1..=n).map(move |k| (i, j, k, self.get(i, j, k))))
        })
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Multiplies the interior by `factor`.
    pub fn scale_interior(&mut self, factor: T) {
        let n = self.spec.n();
        let e = self.spec.extent();
        for i in 1..=n {
            for j in 1..=n {
                let row = (i * e + j) * e;
                for v in &mut self.values[row + 1..row + 1 + n] {
                    *v = *v * factor;
                }
            }
        }
    }

    /// Field with every value converted to another scalar type.
    pub fn cast<U: Real>(&self) -> Result<Field3D<U>> {
        let s = &self.spec;
        let spec = LatticeSpec::new(s.n(), U::lit(s.spacing().as_f64()), U::lit(s.mass().as_f64()), U::lit(s.dtau().as_f64()))?;
        Field3D::from_values(spec, self.values.iter().map(|v| U::lit(v.as_f64())).collect())
    }
}

/// Contiguous x-range window of a padded field owned by one worker.
///
/// Holds local planes `0..=width + 1`; local plane `l` in `1..=width` is global
/// plane `first + l - 1`. Local planes `0` and `width + 1` are padding, holding
/// either the Dirichlet value or the neighbor's halo plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Slab<T> {
    spec: LatticeSpec<T>,
    first: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Real> Slab<T> {
    pub fn allocate(spec: LatticeSpec<T>, first: usize, width: usize) -> Result<Self> {
        if width == 0 || first == 0 || first + width - 1 > spec.n() {
            return Err(Error::OutOfRange(format!(
                "slab planes {first}..{} outside 1..={}",
                first + width,
                spec.n()
            )));
        }
        let values = zeroed((width + 2) * spec.extent() * spec.extent())?;
        Ok(Self { spec, first, width, values })
    }

    /// Copies planes `first..first + width` of a global field; padding planes
    /// facing another slab are zeroed until the first halo exchange.
    pub fn from_field(field: &Field3D<T>, first: usize, width: usize) -> Result<Self> {
        let mut slab = Self::allocate(*field.spec(), first, width)?;
        let p = slab.plane_len();
        let src = &field.values()[first * p..(first + width) * p];
        slab.values[p..(width + 1) * p].copy_from_slice(src);
        Ok(slab)
    }

    /// Reassembles a global field from a slab covering the whole lattice.
    pub fn into_field(self) -> Result<Field3D<T>> {
        if self.first != 1 || self.width != self.spec.n() {
            return Err(Error::OutOfRange("slab does not cover the whole lattice".into()));
        }
        let mut values = self.values;
        let p = self.spec.extent() * self.spec.extent();
        values[..p].fill(T::zero());
        let last = values.len() - p;
        values[last..].fill(T::zero());
        Field3D::from_values(self.spec, values)
    }

    pub fn spec(&self) -> &LatticeSpec<T> {
        &self.spec
    }

    /// Global index of local plane 1.
    pub fn first(&self) -> usize {
        self.first
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of values in one x-plane, `(N + 2)^2`.
    pub fn plane_len(&self) -> usize {
        self.spec.extent() * self.spec.extent()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub(crate) fn buffer_mut(&mut self) -> &mut Vec<T> {
        &mut self.values
    }

    pub fn plane(&self, local: usize) -> &[T] {
        let p = self.plane_len();
        &self.values[local * p..(local + 1) * p]
    }

    pub fn plane_mut(&mut self, local: usize) -> &mut [T] {
        let p = self.plane_len();
        &mut self.values[local * p..(local + 1) * p]
    }

    pub fn fill_random_gaussian(&mut self, seed: u64) {
        let n = self.spec.n();
        let p = self.plane_len();
        let (first, width) = (self.first, self.width);
        fill_gaussian_planes(&mut self.values[..(width + 2) * p], n, first, width, seed);
    }

    /// Multiplies the interior by `factor`.
    pub fn scale_interior(&mut self, factor: T) {
        let n = self.spec.n();
        let e = self.spec.extent();
        for l in 1..=self.width {
            for j in 1..=n {
                let row = (l * e + j) * e;
                for v in &mut self.values[row + 1..row + 1 + n] {
                    *v = *v * factor;
                }
            }
        }
    }
}

fn zeroed<T: Real>(len: usize) -> Result<Vec<T>> {
    let mut values = Vec::new();
    values.try_reserve_exact(len).map_err(|_| Error::Allocation { sites: len })?;
    values.resize(len, T::zero());
    Ok(values)
}

/// Fills interior sites of local planes `1..=width` of a plane-major buffer
/// whose local plane 1 is global plane `first`.
fn fill_gaussian_planes<T: Real>(values: &mut [T], n: usize, first: usize, width: usize, seed: u64) {
    let e = n + 2;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for l in 1..=width {
        let global = first + l - 1;
        let site = ((global - 1) * n * n) as u128;
        rng.set_word_pos(site * 4);
        for j in 1..=n {
            let row = (l * e + j) * e;
            for v in &mut values[row + 1..row + 1 + n] {
                *v = T::lit(box_muller(&mut rng));
            }
        }
    }
}

#[inline]
fn box_muller(rng: &mut ChaCha20Rng) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * SCALE;
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE;
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
