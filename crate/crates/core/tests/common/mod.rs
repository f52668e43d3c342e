#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use dwig::config::load_scenario;
use dwig::experiment::ScenarioSpec;
use dwig::machine::{MachineInputs, MachineParams};
use dwig::sysid::ArxModel;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario_path(name: &str) -> PathBuf {
    repo_root().join("configs/scenarios").join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> ScenarioSpec {
    load_scenario(&scenario_path(name)).unwrap()
}

pub fn nominal_inputs() -> MachineInputs {
    MachineInputs { u_d2: 0.0, u_q2: 1.0, tm: 0.1, r_load: 1.0, u_dr: 0.0, u_qr: 0.0 }
}

/// Gaussian elimination with partial pivoting on a dense row-major copy.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs())).unwrap();
        m.swap(col, piv);
        assert!(m[col][col].abs() > 1e-300, "singular system");
        for r in col + 1..n {
            let f = m[r][col] / m[col][col];
            for c in col..=n {
                m[r][c] -= f * m[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}

/// Flux-current matrix written out row by row from the winding equations,
/// independent of the library's builder. Columns: d1 q1 d2 q2 dr qr.
pub fn literal_inductance(p: &MachineParams) -> Vec<Vec<f64>> {
    vec![
        vec![p.l1, 0.0, 0.0, p.m_d12, p.m_d1r, 0.0],
        vec![0.0, p.l1, p.m_q12, 0.0, 0.0, p.m_q1r],
        vec![0.0, p.m_q12, p.l2, 0.0, 0.0, p.m_q2r],
        vec![p.m_d12, 0.0, 0.0, p.l2, p.m_d2r, 0.0],
        vec![p.m_d1r, 0.0, 0.0, -p.m_d2r, p.l3, 0.0],
        vec![0.0, p.m_q1r, -p.m_q2r, 0.0, 0.0, p.l3],
    ]
}

/// Steady electrical currents at fixed speed from the zero-derivative voltage
/// equations, assembled and solved here rather than through the library.
pub fn oracle_steady_currents(p: &MachineParams, u: &MachineInputs, omega: f64) -> Vec<f64> {
    let l = literal_inductance(p);
    let slip = p.omega1 - omega;
    let r = [p.r1 + u.r_load, p.r1 + u.r_load, p.r2, p.r2, p.r3, p.r3];
    // Row k: r_k i_k - (rotation term)_k = u_k, with the rotation term the
    // speed voltage on the paired axis flux.
    let pair = [(1, p.omega1), (0, -p.omega1), (3, p.omega1), (2, -p.omega1), (5, slip), (4, -slip)];
    let mut a = vec![vec![0.0; 6]; 6];
    for k in 0..6 {
        a[k][k] += r[k];
        let (j, w) = pair[k];
        for c in 0..6 {
            a[k][c] -= w * l[j][c];
        }
    }
    let rhs = [0.0, 0.0, u.u_d2, u.u_q2, u.u_dr, u.u_qr];
    gauss_solve(&a, &rhs)
}

pub fn oracle_terminal_voltage(p: &MachineParams, u: &MachineInputs, omega: f64) -> f64 {
    let i = oracle_steady_currents(p, u, omega);
    u.r_load * i[0].hypot(i[1])
}

/// Stable, minimum-phase fifth-order test plant. Poles have magnitudes
/// 0.80, 0.75 and 0.70 (pair); zeros 0.80 (pair) and 0.75 (pair), interleaved
/// in angle so the regression stays well conditioned.
pub fn truth_model() -> ArxModel {
    ArxModel::new(vec![-0.01, -0.11, -0.05, -0.29], vec![1.0, -0.01, -0.03, 0.08, 0.36]).unwrap()
}

/// Maximal-length 16-bit Fibonacci LFSR mapped to +/-1.
pub fn prbs(n: usize, seed: u16) -> Vec<f64> {
    let mut s: u16 = if seed == 0 { 0xACE1 } else { seed };
    (0..n)
        .map(|_| {
            let bit = (s ^ (s >> 2) ^ (s >> 3) ^ (s >> 5)) & 1;
            s = (s >> 1) | (bit << 15);
            if s & 1 == 1 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

pub fn gaussian(n: usize, variance: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            variance.sqrt() * z
        })
        .collect()
}

/// Batch least squares over the same regressors the estimator sees
/// (samples `t >= order`), via the normal equations.
pub fn batch_least_squares(u: &[f64], y: &[f64], order: usize) -> Vec<f64> {
    let np = 2 * order - 1;
    let mut ata = vec![vec![0.0; np]; np];
    let mut aty = vec![0.0; np];
    for t in order..y.len() {
        let mut phi = Vec::with_capacity(np);
        phi.extend((1..order).map(|i| -y[t - i]));
        phi.extend((0..order).map(|j| u[t - 1 - j]));
        for r in 0..np {
            aty[r] += phi[r] * y[t];
            for c in 0..np {
                ata[r][c] += phi[r] * phi[c];
            }
        }
    }
    gauss_solve(&ata, &aty)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
