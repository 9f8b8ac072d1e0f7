use std::fs;

use schrod3d::driver::{self, observables_csv};
use schrod3d::multires::{self, load_wavefunction};
use schrod3d::parallel::{Comm, Worker};
use schrod3d::{evolve, Error, Field, Params, Potential, PotentialChoice, RunConfig, Slab, Spec};

fn small(n: usize) -> RunConfig {
    RunConfig {
        n,
        a: 8.0 / n as f64,
        potential: PotentialChoice::Harmonic,
        tol: 1e-8,
        check_freq: 50,
        ..RunConfig::default()
    }
}

#[test]
fn config_file_run_writes_all_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(
        &cfg_path,
        "# small harmonic run\nN = 16\na = 0.5\npotential = harmonic\ntol = 1e-8\ncheck_freq = 50\nsnap_freq = 100\nexcited_count = 1\n",
    )
    .unwrap();
    let mut config = RunConfig::from_file(&cfg_path).unwrap();
    config.output_dir = Some(dir.path().join("out"));
    let report = driver::solve::<f64>(&config).unwrap();
    assert!(report.converged);
    driver::write_outputs(&report, config.output_dir.as_ref().unwrap()).unwrap();

    let out = dir.path().join("out");
    let csv = fs::read_to_string(out.join("observables.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,tau,E,E_binding,norm,r_rms"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), report.history.len());
    assert!(rows.iter().all(|r| r.len() == 6 && r[3].is_empty()));
    let last_e: f64 = rows.last().unwrap()[2].parse().unwrap();
    assert_eq!(last_e, report.ground.observables.energy);

    let ground = load_wavefunction::<f64>(out.join("ground.qwf")).unwrap();
    assert_eq!(ground.field.values(), report.ground.psi.values());
    assert_eq!(ground.step_count, report.final_steps());
    assert!(out.join("excited_1.qwf").exists());
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("converged = true"));
    assert!(summary.contains("E1 = "));
}

#[test]
fn binding_energy_column_for_bounded_potentials() {
    let config = RunConfig { potential: PotentialChoice::Coulomb, n: 16, a: 1.0, tol: 1e-5, ..small(16) };
    let report = driver::solve::<f64>(&config).unwrap();
    let csv = observables_csv(&report.history);
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert!(!row[3].is_empty());
    // V = 1/a - 1/r outside the core, so V_inf = 1/a
    assert_eq!(report.ground.observables.binding, Some(report.ground.observables.energy - 1.0));
}

#[test]
fn step_budget_exhaustion_is_flagged() {
    let config = RunConfig { max_steps: 120, tol: 1e-14, ..small(16) };
    let report = driver::solve::<f64>(&config).unwrap();
    assert!(!report.converged);
    assert_eq!(report.total_steps(), 120);
    // a check at the end of the budget even off the check grid
    assert_eq!(report.history.last().unwrap().step, 120);
}

#[test]
fn bootstrap_needs_fewer_fine_iterations() {
    let cold = driver::solve::<f64>(&small(32)).unwrap();
    let warm = multires::bootstrap_run(&[16], &small(32)).unwrap();
    assert!(cold.converged && warm.converged);
    assert_eq!(warm.stages.len(), 2);
    assert_eq!(warm.stages[0].n, 16);
    assert!((warm.stages[0].a - 0.5).abs() < 1e-15);
    assert!((warm.stages[0].dtau - 0.0625).abs() < 1e-15);
    assert!(warm.final_steps() < cold.final_steps(), "{} vs {}", warm.final_steps(), cold.final_steps());
    let de = (warm.ground.observables.energy - cold.ground.observables.energy).abs();
    assert!(de < 1e-6, "energies differ by {de:e}");
}

#[test]
fn bootstrap_can_carry_an_excited_admixture() {
    let config = RunConfig { carry: vec![1.0, 0.3], snap_freq: Some(100), bootstrap: vec![16], ..small(32) };
    let report = driver::solve::<f64>(&config).unwrap();
    assert!(report.converged);
    assert!((report.ground.observables.energy - 1.49).abs() < 0.02);
}

#[test]
fn initial_wavefunction_file_is_resampled() {
    let dir = tempfile::tempdir().unwrap();
    let coarse = driver::solve::<f64>(&small(16)).unwrap();
    let path = dir.path().join("coarse.qwf");
    multires::save_wavefunction(&coarse.ground.psi, 0, &path).unwrap();
    let config = RunConfig { initial: Some(path), ..small(32) };
    let warm = driver::solve::<f64>(&config).unwrap();
    let cold = driver::solve::<f64>(&small(32)).unwrap();
    assert!(warm.final_steps() < cold.final_steps());
}

#[test]
fn unstable_timestep_diverges_and_is_rejected_by_config() {
    let spec = Spec::new(16, 1.0, 1.0, 1.05 / 3.0).unwrap();
    assert!(matches!(evolve::check_stability(&spec), Err(Error::Unstable { .. })));
    let grid = Potential::Free.grid(spec).unwrap();
    let mut psi = Field::allocate(spec).unwrap();
    psi.fill_random_gaussian(1);
    let err = evolve::evolve_to_convergence(psi, &grid, &Params::default()).unwrap_err();
    match err {
        Error::Divergence { step, .. } => assert!(step <= 500),
        other => panic!("expected divergence, got {other:?}"),
    }
    assert_eq!(Error::Divergence { step: 0, reason: String::new() }.exit_status(), 2);

    let config = RunConfig { n: 16, a: 1.0, dtau: Some(1.05 / 3.0), ..RunConfig::default() };
    let err = config.validate().unwrap_err();
    assert!(err.to_string().contains("a^2/3 = 3.333"), "{err}");
    assert_eq!(err.exit_status(), 1);
}

#[test]
fn unstable_modes_grow_the_raw_norm() {
    let spec = Spec::new(16, 1.0, 1.0, 1.05 / 3.0).unwrap();
    let grid = Potential::Free.grid(spec).unwrap();
    let mut comm = Comm::solo();
    let mut slab = Slab::allocate(spec, 1, 16).unwrap();
    slab.fill_random_gaussian(2);
    let mut w = Worker::new(&mut comm, &grid, slab).unwrap();
    let norms: Vec<f64> = (0..500).map(|_| w.advance().unwrap()).collect();
    assert!(norms[400..].windows(2).all(|p| p[1] > p[0]));
    assert!(norms[499] > 1.0);
}
