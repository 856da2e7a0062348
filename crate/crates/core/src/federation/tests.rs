use super::*;
use crate::dataset::synthetic_quadratic;

fn quad(d: usize, n: usize, seed: u64) -> GlobalObjective {
    GlobalObjective::from_quadratic(&synthetic_quadratic(d, 0.5, 4.0, n, seed).unwrap()).unwrap()
}

fn cfg(m: usize) -> FlecsConfig {
    FlecsConfig {
        m,
        max_iterations: 20,
        record_wall_time: false,
        ..FlecsConfig::default()
    }
}

#[test]
fn zero_gradient_converges_immediately() {
    let q = synthetic_quadratic(4, 1.0, 2.0, 2, 1).unwrap();
    let f = GlobalObjective::from_quadratic(&q).unwrap();
    let mut sim = Simulation::new(&f, FlecsConfig { tol: 1e-20, ..cfg(2) }, q.minimizer.clone()).unwrap();
    let rows = sim.run().unwrap();
    assert!(sim.state().converged);
    assert!(rows.len() <= 2, "{rows:?}");
}

#[test]
fn row_count_is_iterations_plus_one() {
    let f = quad(6, 2, 3);
    let config = FlecsConfig { tol: 0.0, max_iterations: 4, init: InitialHessian::Zero, ..cfg(1) };
    let rows = run(&f, config, Vector::from_element(6, 1.0)).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.iter).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
}

#[test]
fn costs_follow_formulas() {
    let (d, n, m) = (6usize, 3usize, 2usize);
    let f = quad(d, n, 4);
    let config = FlecsConfig { tol: 0.0, max_iterations: 3, ..cfg(m) };
    let rows = run(&f, config, Vector::zeros(d)).unwrap();
    for (k, r) in rows.iter().enumerate() {
        let rounds = (k + 1) as u64;
        assert_eq!(r.hvp_cum, rounds * (n * m) as u64);
        assert_eq!(r.downlink_bits_cum, rounds * n as u64 * downlink_bits(d, m));
        assert_eq!(r.uplink_bits_cum, rounds * n as u64 * uplink_bits(d, m, 64 * (d * m) as u64));
    }
}

#[test]
fn parallel_and_sequential_agree() {
    let f = quad(8, 4, 5);
    let config = FlecsConfig {
        compressor: CompressorSpec::RandK { k: 5 },
        tol: 0.0,
        max_iterations: 8,
        ..cfg(3)
    };
    let a = run(&f, config.clone(), Vector::zeros(8)).unwrap();
    let b = run(&f, FlecsConfig { parallel: true, ..config }, Vector::zeros(8)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dense_storage_cap_enforced() {
    let f = quad(6, 2, 1);
    let err = Simulation::new(&f, FlecsConfig { server_memory_cap: 100, ..cfg(2) }, Vector::zeros(6)).err().unwrap();
    assert!(matches!(err, FlecsError::TooLarge { .. }), "{err}");
    let factored = FlecsConfig {
        server_memory_cap: 100,
        hessian: HessianRule::Direct { beta: 1.0 },
        direction: DirectionRule::FedSonia { rho: 0.1 },
        init: InitialHessian::Zero,
        ..cfg(2)
    };
    assert!(Simulation::new(&f, factored, Vector::zeros(6)).is_ok());
}

#[test]
fn factored_matches_dense_direct_update() {
    let f = quad(7, 2, 9);
    let base = FlecsConfig {
        hessian: HessianRule::Direct { beta: 1.0 },
        direction: DirectionRule::FedSonia { rho: 0.2 },
        init: InitialHessian::Zero,
        tol: 0.0,
        max_iterations: 5,
        ..cfg(3)
    };
    let mut factored = Simulation::new(&f, base.clone(), Vector::zeros(7)).unwrap();
    let mut dense = Simulation::new(&f, base, Vector::zeros(7)).unwrap();
    dense.state.hessians = ServerHessians::Dense(vec![WorkerHessianState::zeros(0, 7), WorkerHessianState::zeros(1, 7)]);
    for _ in 0..5 {
        let a = factored.step().unwrap();
        let b = dense.step().unwrap();
        assert!((a.row.loss - b.row.loss).abs() < 1e-10 * (1.0 + a.row.loss.abs()));
    }
    for i in 0..2 {
        assert!((factored.hessian(i) - dense.hessian(i)).amax() < 1e-8);
    }
}

#[test]
fn invalid_configs_rejected() {
    let f = quad(5, 1, 2);
    for bad in [
        FlecsConfig { m: 0, ..cfg(1) },
        FlecsConfig { m: 6, ..cfg(1) },
        FlecsConfig { omega: 2.0, big_omega: 1.0, ..cfg(1) },
        FlecsConfig { alpha: -1.0, ..cfg(1) },
        FlecsConfig { hessian: HessianRule::Direct { beta: 1.5 }, ..cfg(1) },
        FlecsConfig { compressor: CompressorSpec::TopK { k: 0 }, ..cfg(1) },
    ] {
        assert!(matches!(Simulation::new(&f, bad, Vector::zeros(5)), Err(FlecsError::Config { .. })));
    }
}

#[test]
fn finished_simulation_refuses_to_step() {
    let f = quad(4, 1, 2);
    let mut sim = Simulation::new(&f, FlecsConfig { max_iterations: 1, tol: 0.0, ..cfg(1) }, Vector::zeros(4)).unwrap();
    sim.run().unwrap();
    assert!(sim.step().is_err());
}
