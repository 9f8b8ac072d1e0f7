//! Dense lattice operators shared by the oracle tests and the acceptance suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use schrod3d::evolve::{self, EvolutionState};
use schrod3d::{states, Field, Grid, Params, Spec};

pub fn interior_index(n: usize, i: usize, j: usize, k: usize) -> usize {
    ((i - 1) * n + (j - 1)) * n + (k - 1)
}

pub fn neighbours(n: usize, i: usize, j: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let c = [i, j, k];
    for axis in 0..3 {
        for d in [-1i64, 1] {
            let mut p = c;
            let v = p[axis] as i64 + d;
            if v < 1 || v > n as i64 {
                continue;
            }
            p[axis] = v as usize;
            out.push(interior_index(n, p[0], p[1], p[2]));
        }
    }
    out
}

pub fn sites(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (1..=n).flat_map(move |i| (1..=n).flat_map(move |j| (1..=n).map(move |k| (i, j, k))))
}

/// Dense `H = -lap / (2 m a^2) + V` with zero values outside the lattice.
pub fn hamiltonian(grid: &Grid) -> DMatrix<f64> {
    let spec = grid.spec();
    let n = spec.n();
    let t = 1.0 / (2.0 * spec.mass() * spec.spacing() * spec.spacing());
    let mut h = DMatrix::zeros(n * n * n, n * n * n);
    for (i, j, k) in sites(n) {
        let r = interior_index(n, i, j, k);
        h[(r, r)] = 6.0 * t + grid.v(i, j, k);
        for c in neighbours(n, i, j, k) {
            h[(r, c)] = -t;
        }
    }
    h
}

pub fn to_vector(f: &Field) -> DVector<f64> {
    let n = f.spec().n();
    DVector::from_iterator(n * n * n, sites(n).map(|(i, j, k)| f.get(i, j, k)))
}

pub fn from_vector(spec: Spec, v: &DVector<f64>) -> Field {
    let n = spec.n();
    let mut f = Field::allocate(spec).unwrap();
    for (i, j, k) in sites(n) {
        f.set(i, j, k, v[interior_index(n, i, j, k)]);
    }
    f
}

pub fn random_potential(spec: Spec, seed: u64) -> Grid {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = spec.n();
    let v = (0..n * n * n).map(|_| (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 4.0 - 2.0).collect();
    Grid::from_interior(spec, v, Some(0.0)).unwrap()
}

pub fn lowest_eigenpairs(grid: &Grid) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(hamiltonian(grid));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(&order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>());
    (values, vectors)
}

/// Largest per-site deviation of one update from the dense update operator,
/// relative to the sum of absolute term magnitudes at that site.
pub fn step_deviation(psi: &Field, grid: &Grid) -> f64 {
    let spec = grid.spec();
    let n = spec.n();
    let a = spec.spacing();
    let kin = spec.dtau() / (2.0 * spec.mass() * a * a);
    let x = to_vector(psi);
    let out = to_vector(&evolve::step(psi, grid).unwrap());
    let mut worst = 0.0f64;
    for (i, j, k) in sites(n) {
        let r = interior_index(n, i, j, k);
        let hv = spec.dtau() * grid.v(i, j, k) / 2.0;
        let (ca, cb) = ((1.0 - hv) / (1.0 + hv), 1.0 / (1.0 + hv));
        let nb = neighbours(n, i, j, k);
        let lap: f64 = nb.iter().map(|&c| x[c]).sum::<f64>() - 6.0 * x[r];
        let expected = ca * x[r] + cb * kin * lap;
        let scale = (ca * x[r]).abs() + cb * kin * (nb.iter().map(|&c| x[c].abs()).sum::<f64>() + 6.0 * x[r].abs());
        if scale > 0.0 {
            worst = worst.max((out[r] - expected).abs() / scale);
        }
    }
    worst
}

/// Oracle-lattice parameters: `dtau` small enough that the update's fixed
/// point agrees with the Hamiltonian eigenvector far below the tolerance.
pub fn oracle_params() -> Params {
    Params { tol: 1e-13, check_freq: 100, snap_freq: 0, polish_steps: 0, ..Params::default() }
}

/// Converged ground energy and the first excited energy extracted from an
/// early snapshot.
pub fn ground_and_first(grid: &Grid, seed: u64) -> (f64, f64) {
    let spec = *grid.spec();
    let mut psi = Field::allocate(spec).unwrap();
    psi.fill_random_gaussian(seed);
    // Early evolution keeps a sizable first-excited component for extraction.
    let early = Params { max_steps: 400, snap_freq: 400, max_snapshots: 1, tol: 1e-300, ..oracle_params() };
    let head = evolve::evolve_to_convergence(psi, grid, &early).unwrap();
    let ground = evolve::evolve_to_convergence(head.psi.clone(), grid, &oracle_params()).unwrap();
    assert!(ground.converged);
    let state = EvolutionState { snapshots: head.snapshots, ..ground.clone() };
    let polish = Params { polish_steps: 60_000, ..oracle_params() };
    let excited = states::extract_excited(&state, grid, 1, &polish).unwrap();
    (ground.observables.energy, excited[0].1)
}

/// Oracle lattices: an isotropic and an anisotropic well and a random potential.
pub fn oracle_cases() -> Vec<(&'static str, Grid)> {
    vec![
        ("harmonic 6^3", schrod3d::Potential::Harmonic.grid(Spec::new(6, 0.6, 1.0, 1e-3).unwrap()).unwrap()),
        (
            "anisotropic 8^3",
            Grid::from_fn(Spec::new(8, 0.5, 1.0, 1e-3).unwrap(), None, |x, y, z| {
                0.5 * x * x + 0.8 * y * y + 1.3 * z * z + 0.2 * x
            })
            .unwrap(),
        ),
        ("random 8^3", random_potential(Spec::new(8, 0.5, 1.0, 1e-3).unwrap(), 9)),
    ]
}
