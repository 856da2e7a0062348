#![allow(dead_code, clippy::needless_range_loop)]

use flecs::compress::{decompress, CompressorSpec};
use flecs::dataset::{census_like, read_libsvm_file, SparseDataset, SparseRow};
use flecs::direction::DirectionRule;
use flecs::federation::{FlecsConfig, InitialHessian, Simulation};
use flecs::hessian::HessianRule;
use flecs::objective::{GlobalObjective, LocalObjective};
use flecs::sketch::shared_sketch;
use flecs::Vector;

/// Row count of the census benchmark.
pub const CENSUS_ROWS: usize = 32_561;

/// Real census file when `FLECS_A9A` names one, otherwise the seeded stand-in.
pub fn census_rows(rows: usize) -> (SparseDataset, &'static str) {
    if let Some(path) = std::env::var_os("FLECS_A9A") {
        let ds = read_libsvm_file(std::path::Path::new(&path), Some(123)).expect("FLECS_A9A is not a readable LIBSVM file");
        return (ds.head(rows).unwrap(), "a9a");
    }
    (census_like(rows.min(CENSUS_ROWS), 0).unwrap(), "census-like stand-in")
}

pub fn row(label: f64, x: [f64; 3]) -> SparseRow {
    let (indices, values) = x.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j as u32, *v)).unzip();
    SparseRow { label, indices, values }
}

// ---------------------------------------------------------------------------
// Straight-line reference for d = 3, m = 1. Written independently of the
// library: fixed-size arrays, explicit loops, Jacobi eigenvalues.

pub type V3 = [f64; 3];
pub type M3 = [[f64; 3]; 3];

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn dot(a: &V3, b: &V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn matvec(a: &M3, x: &V3) -> V3 {
    [dot(&a[0], x), dot(&a[1], x), dot(&a[2], x)]
}

pub fn naive_grad(rows: &[(f64, V3)], mu: f64, w: &V3) -> V3 {
    let mut g = [2.0 * mu * w[0], 2.0 * mu * w[1], 2.0 * mu * w[2]];
    for (b, a) in rows {
        let c = -b * sigmoid(-b * dot(a, w)) / rows.len() as f64;
        for j in 0..3 {
            g[j] += c * a[j];
        }
    }
    g
}

pub fn naive_hessian(rows: &[(f64, V3)], mu: f64, w: &V3) -> M3 {
    let mut h = [[0.0; 3]; 3];
    for (i, hr) in h.iter_mut().enumerate() {
        hr[i] = 2.0 * mu;
    }
    for (_, a) in rows {
        let z = dot(a, w);
        let c = sigmoid(z) * sigmoid(-z) / rows.len() as f64;
        for i in 0..3 {
            for j in 0..3 {
                h[i][j] += c * a[i] * a[j];
            }
        }
    }
    h
}

/// Keeps the `k` largest magnitudes, earlier index first on ties.
fn top_k(x: &V3, k: usize) -> V3 {
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| x[b].abs().partial_cmp(&x[a].abs()).unwrap().then(a.cmp(&b)));
    let mut out = [0.0; 3];
    for &j in order.iter().take(k) {
        out[j] = x[j];
    }
    out
}

/// Cyclic Jacobi; returns eigenvalues and eigenvectors as columns.
pub fn jacobi(a: &M3) -> (V3, M3) {
    let mut a = *a;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-40 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (akp, akq) = (a[k][p], a[k][q]);
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let (apk, aqk) = (a[p][k], a[q][k]);
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let (vkp, vkq) = (row[p], row[q]);
                row[p] = c * vkp - s * vkq;
                row[q] = s * vkp + c * vkq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

#[derive(Clone, Copy, Debug)]
pub enum NaiveRule {
    /// Truncated L-SR1 + truncated inverse.
    Sr1TruncInv,
    /// Direct(beta) + FedSONIA(rho).
    DirectSonia { beta: f64, rho: f64 },
}

#[derive(Clone, Debug, Default)]
pub struct NaiveRound {
    pub w: V3,
    pub grads: Vec<V3>,
    pub ms: Vec<f64>,
    pub cs: Vec<V3>,
    pub b_after: Vec<M3>,
    pub w_next: V3,
}

pub struct NaiveSetup<'a> {
    pub workers: &'a [Vec<(f64, V3)>],
    pub mu: f64,
    pub w0: V3,
    pub k_keep: usize,
    pub omega: f64,
    pub big_omega: f64,
    pub alpha: f64,
    pub rule: NaiveRule,
}

/// Runs `sketches.len()` rounds; `sketches[k]` is `S_k`.
pub fn naive_run(setup: &NaiveSetup<'_>, sketches: &[V3]) -> Vec<NaiveRound> {
    let n = setup.workers.len();
    let (om, big) = (setup.omega, setup.big_omega);
    let clamp = |x: f64| x.abs().max(om).min(big);
    let mut w = setup.w0;
    let mut b: Vec<M3> = setup.workers.iter().map(|rows| naive_hessian(rows, setup.mu, &w)).collect();
    let mut out = Vec::new();
    for s in sketches {
        let mut round = NaiveRound { w, ..NaiveRound::default() };
        let mut y_tilde = Vec::new();
        for (i, rows) in setup.workers.iter().enumerate() {
            let h = naive_hessian(rows, setup.mu, &w);
            let y = matvec(&h, s);
            let bs = matvec(&b[i], s);
            let resid = [y[0] - bs[0], y[1] - bs[1], y[2] - bs[2]];
            let c = top_k(&resid, setup.k_keep);
            round.grads.push(naive_grad(rows, setup.mu, &w));
            round.ms.push(dot(s, &y));
            round.cs.push(c);
            y_tilde.push([c[0] + bs[0], c[1] + bs[1], c[2] + bs[2]]);
        }
        for i in 0..n {
            let m = round.ms[i];
            let yt = y_tilde[i];
            match setup.rule {
                NaiveRule::Sr1TruncInv => {
                    let bs = matvec(&b[i], s);
                    let r = [yt[0] - bs[0], yt[1] - bs[1], yt[2] - bs[2]];
                    let l = m - dot(s, &bs);
                    let inv = if l == 0.0 || (1.0 / l).abs() <= om { 0.0 } else { 1.0 / l };
                    for p in 0..3 {
                        for q in 0..3 {
                            b[i][p][q] += inv * r[p] * r[q];
                        }
                    }
                }
                NaiveRule::DirectSonia { beta, .. } => {
                    let inv = if m == 0.0 { 0.0 } else { 1.0 / m };
                    for p in 0..3 {
                        for q in 0..3 {
                            b[i][p][q] = (1.0 - beta) * b[i][p][q] + beta * inv * yt[p] * yt[q];
                        }
                    }
                }
            }
        }
        round.b_after = b.clone();
        let mut g = [0.0; 3];
        for gi in &round.grads {
            for j in 0..3 {
                g[j] += gi[j] / n as f64;
            }
        }
        let p = match setup.rule {
            NaiveRule::Sr1TruncInv => {
                let mut bavg = [[0.0; 3]; 3];
                for bi in &b {
                    for pp in 0..3 {
                        for q in 0..3 {
                            bavg[pp][q] += bi[pp][q] / n as f64;
                        }
                    }
                }
                let (lam, v) = jacobi(&bavg);
                let mut p = [0.0; 3];
                for j in 0..3 {
                    let vj = [v[0][j], v[1][j], v[2][j]];
                    let coef = dot(&vj, &g) / clamp(lam[j]);
                    for t in 0..3 {
                        p[t] -= coef * vj[t];
                    }
                }
                p
            }
            NaiveRule::DirectSonia { rho, .. } => {
                let mut ybar = [0.0; 3];
                let mut mbar = 0.0;
                for i in 0..n {
                    for j in 0..3 {
                        ybar[j] += y_tilde[i][j] / n as f64;
                    }
                    mbar += round.ms[i] / n as f64;
                }
                let norm = dot(&ybar, &ybar).sqrt();
                let q = [ybar[0] / norm, ybar[1] / norm, ybar[2] / norm];
                let lam = if mbar == 0.0 { 0.0 } else { norm * norm / mbar };
                let inv = 1.0 / clamp(lam);
                let upper = (1.0 / inv).min(1.0 / om).max(1.0 / big);
                let rho = rho.clamp(1.0 / big, upper);
                let qg = dot(&q, &g);
                [0, 1, 2].map(|t| -q[t] * inv * qg - rho * (g[t] - q[t] * qg))
            }
        };
        for j in 0..3 {
            w[j] += setup.alpha * p[j];
        }
        round.w_next = w;
        out.push(round);
    }
    out
}

pub fn tiny_workers() -> Vec<Vec<(f64, V3)>> {
    vec![
        vec![(1.0, [1.0, 0.5, 0.0]), (-1.0, [0.2, 1.0, -0.3]), (1.0, [0.0, -0.4, 1.2])],
        vec![(-1.0, [0.7, 0.0, 0.3]), (1.0, [-0.5, 0.9, 0.1])],
    ]
}

pub fn tiny_objective(workers: &[Vec<(f64, V3)>], mu: f64) -> GlobalObjective {
    let locals = workers
        .iter()
        .map(|rows| LocalObjective::logistic(rows.iter().map(|(b, a)| row(*b, *a)).collect(), 3, mu, false).unwrap())
        .collect();
    GlobalObjective::new(locals).unwrap()
}

/// Steps the simulator for three rounds on a two-worker, three-feature
/// problem and returns the largest relative deviation from [`naive_run`]
/// over iterates, uplink payloads and every `B_i`. Bit costs must match
/// exactly.
pub fn transcript_deviation(rule: NaiveRule) -> f64 {
    let workers = tiny_workers();
    let mu = 0.05;
    let w0 = [0.1, -0.2, 0.3];
    let f = tiny_objective(&workers, mu);
    let (hessian, direction) = match rule {
        NaiveRule::Sr1TruncInv => (HessianRule::Lsr1, DirectionRule::TruncatedInverse),
        NaiveRule::DirectSonia { beta, rho } => (HessianRule::Direct { beta }, DirectionRule::FedSonia { rho }),
    };
    let cfg = FlecsConfig {
        m: 1,
        seed: 11,
        compressor: CompressorSpec::TopK { k: 2 },
        hessian,
        direction,
        omega: 1e-2,
        big_omega: 50.0,
        alpha: 0.7,
        init: InitialHessian::LocalHessian,
        tol: 0.0,
        max_iterations: 10,
        record_wall_time: false,
        ..FlecsConfig::default()
    };
    let sketches: Vec<V3> = (0..3)
        .map(|k| {
            let s = shared_sketch(&cfg.sketch_spec(), k, 3).unwrap();
            [s[(0, 0)], s[(1, 0)], s[(2, 0)]]
        })
        .collect();
    let setup = NaiveSetup {
        workers: &workers,
        mu,
        w0,
        k_keep: 2,
        omega: cfg.omega,
        big_omega: cfg.big_omega,
        alpha: cfg.alpha,
        rule,
    };
    let reference = naive_run(&setup, &sketches);

    let mut sim = Simulation::new(&f, cfg, Vector::from_row_slice(&w0)).unwrap();
    let mut worst = 0.0f64;
    let mut close = |a: f64, b: f64, _what: &str| worst = worst.max((a - b).abs() / (1.0 + b.abs()));
    // gradient + packed M + two sparse entries with ceil(log2 3) = 2 index bits
    let bits = 64 * 3 + 64 + 2 * (64 + 2);
    for (k, expect) in reference.iter().enumerate() {
        for j in 0..3 {
            close(sim.state().w[j], expect.w[j], &format!("w_{k}[{j}]"));
        }
        let report = sim.step().unwrap();
        for (i, up) in report.uplinks.iter().enumerate() {
            let c = decompress(&up.c).unwrap();
            for j in 0..3 {
                close(up.grad[j], expect.grads[i][j], &format!("grad k={k} i={i}"));
                close(c[(j, 0)], expect.cs[i][j], &format!("C k={k} i={i}"));
            }
            close(up.m[(0, 0)], expect.ms[i], &format!("M k={k} i={i}"));
            assert_eq!(up.bit_cost, bits);
            let b = sim.hessian(i);
            for p in 0..3 {
                for q in 0..3 {
                    close(b[(p, q)], expect.b_after[i][p][q], &format!("B k={k} i={i}"));
                }
            }
        }
        for j in 0..3 {
            close(sim.state().w[j], expect.w_next[j], &format!("w_{} [{j}]", k + 1));
        }
    }
    worst
}
