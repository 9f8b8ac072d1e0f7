use std::net::{SocketAddr, TcpListener};
use std::thread;
use std::time::Duration;

use schrod3d::driver::{self, potential_window};
use schrod3d::evolve;
use schrod3d::parallel::{self, gather_slab, Comm, Direction, MessageKind, SlabPartition, TcpTransport, Worker};
use schrod3d::{states, Error, Field, Potential, PotentialChoice, RunConfig, Slab, Spec, SymmetryConstraint};

const TIMEOUT: Duration = Duration::from_secs(30);

fn random_field(spec: Spec, seed: u64) -> Field {
    let mut f = Field::allocate(spec).unwrap();
    f.fill_random_gaussian(seed);
    f
}

/// Runs `steps` raw updates on `m` in-process ranks and gathers the result.
fn parallel_steps(psi: &Field, steps: usize, m: usize) -> (Field, u64) {
    let spec = *psi.spec();
    let out = parallel::run_inproc(m, TIMEOUT, |mut comm| {
        let e = SlabPartition::new(spec.n(), comm.size())?.extent(comm.rank());
        let grid = Potential::Harmonic.grid_window(spec, e.first, e.width)?;
        let mut w = Worker::new(&mut comm, &grid, Slab::from_field(psi, e.first, e.width)?)?;
        for _ in 0..steps {
            w.halo_step()?;
        }
        let slab = w.into_psi();
        let halos = comm.stats().halo;
        Ok((gather_slab(&mut comm, &slab)?, halos))
    })
    .unwrap();
    let halos = out.iter().map(|(_, h)| h).sum();
    (out.into_iter().next().unwrap().0.unwrap(), halos)
}

#[test]
fn slab_updates_match_whole_lattice_updates_bitwise() {
    let spec = Spec::with_default_dtau(16, 0.3, 1.0).unwrap();
    let grid = Potential::Harmonic.grid(spec).unwrap();
    let psi = random_field(spec, 4);
    let mut serial = psi.clone();
    for _ in 0..5 {
        serial = evolve::step(&serial, &grid).unwrap();
    }
    for m in [1, 2, 4, 8] {
        let (field, _) = parallel_steps(&psi, 5, m);
        assert_eq!(field.values(), serial.values(), "M = {m}");
    }
}

#[test]
fn halo_messages_per_sweep() {
    let spec = Spec::with_default_dtau(16, 0.3, 1.0).unwrap();
    let psi = random_field(spec, 5);
    for m in [1, 2, 4, 8] {
        let (_, halos) = parallel_steps(&psi, 7, m);
        assert_eq!(halos, 7 * 2 * (m as u64 - 1), "M = {m}");
        assert_eq!(SlabPartition::new(16, m).unwrap().messages_per_sweep(), 2 * (m - 1));
    }
}

#[test]
fn mirrored_symmetrization_across_slabs() {
    let spec = Spec::with_default_dtau(12, 0.3, 1.0).unwrap();
    let psi = random_field(spec, 6);
    for c in ["Ax", "Sx", "Ay", "Sz"] {
        let c: SymmetryConstraint = c.parse().unwrap();
        let mut serial = psi.clone();
        states::impose(&mut serial, c);
        for m in [2, 3, 4] {
            let out = parallel::run_inproc(m, TIMEOUT, |mut comm| {
                let e = SlabPartition::new(12, comm.size())?.extent(comm.rank());
                let grid = Potential::Free.grid_window(spec, e.first, e.width)?;
                let mut w = Worker::new(&mut comm, &grid, Slab::from_field(&psi, e.first, e.width)?)?;
                w.impose(c)?;
                w.gather_field()
            })
            .unwrap();
            let field = out.into_iter().next().unwrap().unwrap();
            assert_eq!(field.values(), serial.values(), "{c} with M = {m}");
        }
    }
}

fn config(n: usize, workers: usize) -> RunConfig {
    RunConfig {
        n,
        a: 0.25,
        potential: PotentialChoice::Harmonic,
        tol: 1e-7,
        check_freq: 50,
        snap_freq: Some(200),
        excited_count: 1,
        workers,
        seed: 11,
        ..RunConfig::default()
    }
}

#[test]
fn solve_is_independent_of_worker_count() {
    let reference = driver::solve::<f64>(&config(16, 1)).unwrap();
    assert!(reference.converged);
    for m in [2, 4] {
        let r = driver::solve::<f64>(&config(16, m)).unwrap();
        assert_eq!(r.ground.observables, reference.ground.observables, "M = {m}");
        assert_eq!(r.ground.psi.values(), reference.ground.psi.values());
        assert_eq!(r.excited[0].observables, reference.excited[0].observables);
        assert_eq!(r.history, reference.history);
    }
}

#[test]
fn tag_mismatch_is_a_protocol_error() {
    let out = parallel::run_inproc(2, TIMEOUT, |mut comm| {
        if comm.rank() == 0 {
            comm.send(1, MessageKind::Halo, 5, Direction::Right, &[1.0f64, 2.0])?;
            Ok(None)
        } else {
            let mut buf = [0.0f64; 2];
            Ok(Some(comm.recv_into(0, MessageKind::Halo, 6, &mut buf)))
        }
    })
    .unwrap();
    match &out[1] {
        Some(Err(Error::Protocol { peer: 0, expected: 6, found: 5 })) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn payload_length_mismatch_is_rejected() {
    let out = parallel::run_inproc(2, TIMEOUT, |mut comm| {
        if comm.rank() == 0 {
            comm.send(1, MessageKind::Halo, 0, Direction::Right, &[1.0f64; 3])?;
            Ok(true)
        } else {
            let mut buf = [0.0f64; 2];
            Ok(comm.recv_into(0, MessageKind::Halo, 0, &mut buf).is_err())
        }
    })
    .unwrap();
    assert!(out[1]);
}

#[test]
fn missing_peer_times_out_as_transport_error() {
    let err = parallel::run_inproc(2, Duration::from_millis(200), |mut comm| {
        if comm.rank() == 1 {
            let mut buf = [0.0f64; 1];
            comm.recv_into(0, MessageKind::Halo, 0, &mut buf)?;
        }
        Ok(())
    })
    .unwrap_err();
    assert!(matches!(err, Error::Transport(_)), "{err:?}");
    assert_eq!(err.exit_status(), 4);
}

fn local_endpoints(m: usize) -> (Vec<SocketAddr>, Vec<TcpListener>) {
    let listeners: Vec<TcpListener> = (0..m).map(|_| TcpListener::bind("127.0.0.1:0").unwrap()).collect();
    (listeners.iter().map(|l| l.local_addr().unwrap()).collect(), listeners)
}

#[test]
fn tcp_ranks_reproduce_in_process_results() {
    let m = 4;
    let (endpoints, listeners) = local_endpoints(m);
    let cfg = config(16, m);
    let reference = driver::solve::<f64>(&cfg).unwrap();
    let handles: Vec<_> = listeners
        .into_iter()
        .enumerate()
        .map(|(rank, listener)| {
            let endpoints = endpoints.clone();
            let cfg = cfg.clone();
            thread::spawn(move || {
                let t = TcpTransport::establish(rank, &endpoints, listener, TIMEOUT)?;
                let mut comm = Comm::new(Box::new(t), TIMEOUT);
                driver::solve_rank::<f64>(&cfg, &mut comm)
            })
        })
        .collect();
    let mut results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
    assert!(results[1..].iter().all(Option::is_none));
    let report = results.swap_remove(0).unwrap();
    assert_eq!(report.ground.observables, reference.ground.observables);
    assert_eq!(report.ground.psi.values(), reference.ground.psi.values());
    assert_eq!(report.excited[0].observables, reference.excited[0].observables);
}

#[test]
fn tcp_halo_exchange_with_float32() {
    let m = 2;
    let (endpoints, listeners) = local_endpoints(m);
    let spec = schrod3d::LatticeSpec::<f32>::with_default_dtau(8, 0.3, 1.0).unwrap();
    let mut psi = schrod3d::Field3D::<f32>::allocate(spec).unwrap();
    psi.fill_random_gaussian(3);
    let grid = Potential::Harmonic.grid(spec).unwrap();
    let serial = evolve::step(&evolve::step(&psi, &grid).unwrap(), &grid).unwrap();
    let handles: Vec<_> = listeners
        .into_iter()
        .enumerate()
        .map(|(rank, listener)| {
            let endpoints = endpoints.clone();
            let psi = psi.clone();
            thread::spawn(move || -> schrod3d::Result<_> {
                let t = TcpTransport::establish(rank, &endpoints, listener, TIMEOUT)?;
                let mut comm = Comm::new(Box::new(t), TIMEOUT);
                let e = SlabPartition::new(8, 2)?.extent(rank);
                let grid = potential_window(&PotentialChoice::Harmonic, spec, e.first, e.width)?;
                let mut w = Worker::new(&mut comm, &grid, schrod3d::lattice::Slab::<f32>::from_field(&psi, e.first, e.width)?)?;
                w.halo_step()?;
                w.halo_step()?;
                w.gather_field()
            })
        })
        .collect();
    let fields: Vec<_> = handles.into_iter().map(|h| h.join().unwrap().unwrap()).collect();
    assert_eq!(fields[0].as_ref().unwrap().values(), serial.values());
}
