//! Potential grids and the per-site update coefficients
//! `A = (1 - dtau V / 2) / (1 + dtau V / 2)` and `B = 1 / (1 + dtau V / 2)`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{Field3D, LatticeSpec};
use crate::multires::io::{self, FileKind};
use crate::scalar::Real;

/// Analytic potentials known to the solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential<T> {
    /// `V = 0`: a pure Dirichlet box.
    Free,
    /// `V = 0` for `r < a`, `-1/r + 1/a` otherwise; `V_inf = 1/a`.
    Coulomb,
    /// `V = r^2 / 2`; unbounded at infinity.
    Harmonic,
    /// `V = depth` inside a regular dodecahedron spanning the lattice, 0 outside.
    Dodecahedron { depth: T },
}

impl<T: Real> Potential<T> {
    pub fn grid(&self, spec: LatticeSpec<T>) -> Result<PotentialGrid<T>> {
        self.grid_window(spec, 1, spec.n())
    }

    /// Grid restricted to global x-planes `first..first + planes`.
    pub fn grid_window(&self, spec: LatticeSpec<T>, first: usize, planes: usize) -> Result<PotentialGrid<T>> {
        let a = spec.spacing();
        match *self {
            Potential::Free => PotentialGrid::from_fn_window(spec, first, planes, Some(T::zero()), |_, _, _| T::zero()),
            Potential::Coulomb => {
                let inv_a = a.recip();
                PotentialGrid::from_fn_window(spec, first, planes, Some(inv_a), move |x, y, z| {
                    let r = (x * x + y * y + z * z).sqrt();
                    if r < a {
                        T::zero()
                    } else {
                        -r.recip() + inv_a
                    }
                })
            }
            Potential::Harmonic => PotentialGrid::from_fn_window(spec, first, planes, None, |x, y, z| {
                (x * x + y * y + z * z) / T::lit(2.0)
            }),
            Potential::Dodecahedron { depth } => {
                let shape = Dodecahedron::new();
                let n = spec.n();
                // Site n = 1 maps to -1 and n = N to +1 along every axis.
                let unit = T::lit(2.0) / (T::from_count(n - 1) * a);
                let mut grid = PotentialGrid::allocate_window(spec, first, planes, Some(T::zero()))?;
                let to_unit = |idx: usize| (T::from_count(idx) - T::one()) * unit * a - T::one();
                for g in first..first + planes {
                    let x = to_unit(g).as_f64();
                    for j in 1..=n {
                        let y = to_unit(j).as_f64();
                        for k in 1..=n {
                            if shape.contains([x, y, to_unit(k).as_f64()]) {
                                let idx = grid.index(g, j, k);
                                grid.v[idx] = depth;
                            }
                        }
                    }
                }
                grid.precompute_coefficients(spec.dtau())?;
                Ok(grid)
            }
        }
    }
}

pub fn coulomb<T: Real>(spec: LatticeSpec<T>) -> Result<PotentialGrid<T>> {
    Potential::Coulomb.grid(spec)
}

pub fn harmonic<T: Real>(spec: LatticeSpec<T>) -> Result<PotentialGrid<T>> {
    Potential::Harmonic.grid(spec)
}

pub fn dodecahedron<T: Real>(spec: LatticeSpec<T>, depth: T) -> Result<PotentialGrid<T>> {
    Potential::Dodecahedron { depth }.grid(spec)
}

pub fn free<T: Real>(spec: LatticeSpec<T>) -> Result<PotentialGrid<T>> {
    Potential::Free.grid(spec)
}

/// Per-site potential and update coefficients over a window of x-planes.
///
/// Arrays cover interior sites only, in x-major order, for global planes
/// `first..first + planes`. `v_inf` is `None` for potentials unbounded at
/// infinity, for which no binding energy is defined.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGrid<T> {
    spec: LatticeSpec<T>,
    first: usize,
    planes: usize,
    v: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
    v_inf: Option<T>,
}

impl<T: Real> PotentialGrid<T> {
    fn allocate_window(spec: LatticeSpec<T>, first: usize, planes: usize, v_inf: Option<T>) -> Result<Self> {
        let n = spec.n();
        if planes == 0 || first == 0 || first + planes - 1 > n {
            return Err(Error::OutOfRange(format!("potential window {first}+{planes} outside 1..={n}")));
        }
        let len = planes * n * n;
        let mut v = Vec::new();
        v.try_reserve_exact(len).map_err(|_| Error::Allocation { sites: len })?;
        v.resize(len, T::zero());
        Ok(Self { spec, first, planes, v, a: Vec::new(), b: Vec::new(), v_inf })
    }

    /// Grid from an analytic function of physical coordinates.
    pub fn from_fn(spec: LatticeSpec<T>, v_inf: Option<T>, f: impl Fn(T, T, T) -> T) -> Result<Self> {
        Self::from_fn_window(spec, 1, spec.n(), v_inf, f)
    }

    pub fn from_fn_window(
        spec: LatticeSpec<T>,
        first: usize,
        planes: usize,
        v_inf: Option<T>,
        f: impl Fn(T, T, T) -> T,
    ) -> Result<Self> {
        let mut grid = Self::allocate_window(spec, first, planes, v_inf)?;
        let n = spec.n();
        let mut idx = 0;
        for g in first..first + planes {
            let x = spec.coordinate(g);
            for j in 1..=n {
                let y = spec.coordinate(j);
                for k in 1..=n {
                    grid.v[idx] = f(x, y, spec.coordinate(k));
                    idx += 1;
                }
            }
        }
        grid.check_finite()?;
        grid.precompute_coefficients(spec.dtau())?;
        Ok(grid)
    }

    /// Grid from interior values in canonical order (`N^3` entries).
    pub fn from_interior(spec: LatticeSpec<T>, v: Vec<T>, v_inf: Option<T>) -> Result<Self> {
        let n = spec.n();
        if v.len() != n * n * n {
            return Err(Error::Format(format!("expected {} potential values, got {}", n * n * n, v.len())));
        }
        let mut grid = Self { spec, first: 1, planes: n, v, a: Vec::new(), b: Vec::new(), v_inf };
        grid.check_finite()?;
        grid.precompute_coefficients(spec.dtau())?;
        Ok(grid)
    }

    /// Reads a potential file written by [`PotentialGrid::save`].
    ///
    /// The header must match `spec` in `N` and lattice spacing; `V_inf` comes
    /// from the header (`+inf` marks an unbounded potential).
    pub fn from_file(path: impl AsRef<Path>, spec: LatticeSpec<T>) -> Result<Self> {
        let file = io::read_file(path.as_ref())?;
        if file.header.kind != FileKind::Potential {
            return Err(Error::Format("file holds a wavefunction, not a potential".into()));
        }
        if file.header.n != spec.n() {
            return Err(Error::DimensionMismatch { expected: spec.n(), found: file.header.n });
        }
        let a = spec.spacing().as_f64();
        if (file.header.a - a).abs() > 1e-12 * a {
            return Err(Error::Format(format!("file spacing {} differs from lattice spacing {a}", file.header.a)));
        }
        let n = spec.n();
        let e = n + 2;
        let mut v = Vec::with_capacity(n * n * n);
        for i in 1..=n {
            for j in 1..=n {
                let row = (i * e + j) * e;
                v.extend(file.payload[row + 1..row + 1 + n].iter().map(|&x| T::lit(x)));
            }
        }
        let v_inf = if file.header.v_inf.is_infinite() { None } else { Some(T::lit(file.header.v_inf)) };
        Self::from_interior(spec, v, v_inf)
    }

    /// Writes the grid in the lattice file format with the potential kind tag.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let field = self.to_field()?;
        let v_inf = self.v_inf.map_or(f64::INFINITY, |v| v.as_f64());
        io::write_file(path.as_ref(), FileKind::Potential, &field, v_inf, 0)
    }

    /// The potential as a padded field (padding zero). Requires a full grid.
    pub fn to_field(&self) -> Result<Field3D<T>> {
        if self.first != 1 || self.planes != self.spec.n() {
            return Err(Error::OutOfRange("potential window does not cover the lattice".into()));
        }
        let mut field = Field3D::allocate(self.spec)?;
        let n = self.spec.n();
        for i in 1..=n {
            for j in 1..=n {
                let src = self.row(i, j);
                let dst = self.spec.linear_index(i, j, 1);
                field.values_mut()[dst..dst + n].copy_from_slice(&self.v[src..src + n]);
            }
        }
        Ok(field)
    }

    /// Sub-window of planes `first..first + planes`.
    pub fn window(&self, first: usize, planes: usize) -> Result<Self> {
        if first < self.first || first + planes > self.first + self.planes || planes == 0 {
            return Err(Error::OutOfRange(format!("window {first}+{planes} not inside stored planes")));
        }
        let nn = self.spec.n() * self.spec.n();
        let lo = (first - self.first) * nn;
        let hi = lo + planes * nn;
        let cut = |xs: &Vec<T>| if xs.is_empty() { Vec::new() } else { xs[lo..hi].to_vec() };
        Ok(Self {
            spec: self.spec,
            first,
            planes,
            v: self.v[lo..hi].to_vec(),
            a: cut(&self.a),
            b: cut(&self.b),
            v_inf: self.v_inf,
        })
    }

    /// Populates `A` and `B` for timestep `dtau`, which also becomes the spec's timestep.
    pub fn precompute_coefficients(&mut self, dtau: T) -> Result<()> {
        self.spec = self.spec.with_dtau(dtau)?;
        let half = dtau / T::lit(2.0);
        let n = self.spec.n();
        let mut a = Vec::with_capacity(self.v.len());
        let mut b = Vec::with_capacity(self.v.len());
        for (idx, &v) in self.v.iter().enumerate() {
            let denom = T::one() + half * v;
            let (ai, bi) = ((T::one() - half * v) / denom, denom.recip());
            if denom == T::zero() || !ai.is_finite() || !bi.is_finite() {
                let (pl, rest) = (idx / (n * n), idx % (n * n));
                return Err(Error::CoefficientSingularity { i: self.first + pl, j: rest / n + 1, k: rest % n + 1 });
            }
            a.push(ai);
            b.push(bi);
        }
        self.a = a;
        self.b = b;
        Ok(())
    }

    fn check_finite(&self) -> Result<()> {
        if self.v.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("potential values".into()))
        }
    }

    pub fn spec(&self) -> &LatticeSpec<T> {
        &self.spec
    }

    pub fn first_plane(&self) -> usize {
        self.first
    }

    pub fn planes(&self) -> usize {
        self.planes
    }

    pub fn v_inf(&self) -> Option<T> {
        self.v_inf
    }

    pub fn is_bounded(&self) -> bool {
        self.v_inf.is_some()
    }

    /// Offset of interior row `(g, j)` (global plane, padded row index).
    #[inline]
    pub(crate) fn row(&self, g: usize, j: usize) -> usize {
        let n = self.spec.n();
        ((g - self.first) * n + (j - 1)) * n
    }

    #[inline]
    fn index(&self, g: usize, j: usize, k: usize) -> usize {
        self.row(g, j) + k - 1
    }

    pub(crate) fn v_slice(&self) -> &[T] {
        &self.v
    }

    pub(crate) fn a_slice(&self) -> &[T] {
        &self.a
    }

    pub(crate) fn b_slice(&self) -> &[T] {
        &self.b
    }

    /// Potential at padded global coordinates of an interior site.
    pub fn v(&self, i: usize, j: usize, k: usize) -> T {
        self.v[self.index(i, j, k)]
    }

    pub fn coef_a(&self, i: usize, j: usize, k: usize) -> T {
        self.a[self.index(i, j, k)]
    }

    pub fn coef_b(&self, i: usize, j: usize, k: usize) -> T {
        self.b[self.index(i, j, k)]
    }

    /// Interior potential values in canonical order.
    pub fn values(&self) -> &[T] {
        &self.v
    }
}

/// Regular dodecahedron with vertices `(±1/φ, ±1/φ, ±1/φ)`, `(0, ±1/φ², ±1)` and
/// their cyclic permutations. Its twelve face normals are the cyclic
/// permutations of `(0, ±φ, ±1)`.
struct Dodecahedron {
    normals: Vec<[f64; 3]>,
    offset: f64,
}

impl Dodecahedron {
    const TOLERANCE: f64 = 1e-12;

    fn new() -> Self {
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let len = (1.0 + phi * phi).sqrt();
        let mut normals = Vec::with_capacity(12);
        for shift in 0..3 {
            for s1 in [1.0, -1.0] {
                for s2 in [1.0, -1.0] {
                    let base = [0.0, s1 * phi / len, s2 / len];
                    normals.push([base[(3 - shift) % 3], base[(4 - shift) % 3], base[(5 - shift) % 3]]);
                }
            }
        }
        let offset = Self::vertices(phi)
            .iter()
            .map(|v| dot(v, &normals[0]))
            .fold(f64::NEG_INFINITY, f64::max);
        Self { normals, offset }
    }

    fn vertices(phi: f64) -> Vec<[f64; 3]> {
        let (c, s) = (1.0 / phi, 1.0 / (phi * phi));
        let mut out = Vec::with_capacity(20);
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    out.push([sx * c, sy * c, sz * c]);
                }
                out.push([0.0, sx * s, sy]);
                out.push([sx * s, sy, 0.0]);
                out.push([sy, 0.0, sx * s]);
            }
        }
        out
    }

    /// Boundary points count as inside.
    fn contains(&self, p: [f64; 3]) -> bool {
        self.normals.iter().all(|n| dot(&p, n) <= self.offset + Self::TOLERANCE)
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
