#![allow(dead_code)]

use std::f64::consts::PI;

use hypou::norms::fractional_kernel_constant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact rank by fraction-free (Bareiss) elimination.
pub fn bareiss_rank(mut m: Vec<Vec<i128>>) -> usize {
    let rows = m.len();
    if rows == 0 {
        return 0;
    }
    let cols = m[0].len();
    let mut rank = 0;
    let mut prev: i128 = 1;
    for c in 0..cols {
        let Some(p) = (rank..rows).find(|&r| m[r][c] != 0) else { continue };
        m.swap(rank, p);
        for r in rank + 1..rows {
            for j in c + 1..cols {
                m[r][j] = (m[rank][c] * m[r][j] - m[r][c] * m[rank][j]) / prev;
            }
            m[r][c] = 0;
        }
        prev = m[rank][c];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

fn mul(a: &[Vec<i128>], b: &[Vec<i128>]) -> Vec<Vec<i128>> {
    let n = a.len();
    (0..n).map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect()).collect()
}

/// Exact ranks of [B], [B, AB], ..., [B, ..., A^{k_max} B].
pub fn exact_kalman_sequence(a: &[Vec<i128>], b: &[Vec<i128>], k_max: usize) -> Vec<usize> {
    let n = a.len();
    let mut krylov: Vec<Vec<i128>> = b.to_vec();
    let mut block = b.to_vec();
    let mut seq = vec![bareiss_rank(krylov.clone())];
    for _ in 0..k_max {
        block = mul(a, &block);
        for i in 0..n {
            krylov[i].extend_from_slice(&block[i]);
        }
        seq.push(bareiss_rank(krylov.clone()));
    }
    seq
}

/// Random integer system with entries in {-1, 0, 1}, N in 2..=5 and B = blockdiag(I_d0, 0).
pub fn random_integer_system(rng: &mut ChaCha8Rng) -> (usize, usize, Vec<Vec<i128>>) {
    let n = rng.random_range(2..=5);
    let d0 = rng.random_range(1..n);
    let density: f64 = rng.random_range(0.15..0.6);
    let a = (0..n)
        .map(|_| (0..n).map(|_| if rng.random_bool(density) { if rng.random_bool(0.5) { 1 } else { -1 } } else { 0 }).collect())
        .collect();
    (n, d0, a)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn b_matrix(n: usize, d0: usize) -> Vec<Vec<i128>> {
    (0..n).map(|i| (0..n).map(|j| i128::from(i == j && i < d0)).collect()).collect()
}

pub fn to_f64(m: &[Vec<i128>]) -> Vec<Vec<f64>> {
    m.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

/// Closed-form Kolmogorov covariance 2 int_0^t e^{rA} B e^{rA*} dr with A = [[0,0],[1,0]], B = diag(1,0).
pub fn kolmogorov_covariance(t: f64) -> [[f64; 2]; 2] {
    [[2.0 * t, t * t], [t * t, 2.0 * t * t * t / 3.0]]
}

/// Composite Simpson on [a, b] with an even number of panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// p.v. int_R [phi(y+w) - phi(y)] |w|^{-1-2b} dw for phi = e^{-y^2/2}: Taylor series on [0, d],
/// dense Simpson on [d, 60], exact tail.
pub fn dense_oracle(y: f64, b: f64) -> f64 {
    let phi = |s: f64| (-s * s / 2.0).exp();
    let g = |w: f64| phi(y + w) + phi(y - w) - 2.0 * phi(y);
    let d: f64 = 1e-2;
    // even derivatives of the Gaussian: He_n(y) phi(y) with sign (-1)^n
    let d2 = (y * y - 1.0) * phi(y);
    let d4 = (y.powi(4) - 6.0 * y * y + 3.0) * phi(y);
    let d6 = (y.powi(6) - 15.0 * y.powi(4) + 45.0 * y * y - 15.0) * phi(y);
    let e = 1.0 - 2.0 * b;
    let inner = d2 * d.powf(e + 1.0) / (e + 1.0) + d4 / 12.0 * d.powf(e + 3.0) / (e + 3.0) + d6 / 360.0 * d.powf(e + 5.0) / (e + 5.0);
    let outer = simpson(|w| g(w) * w.powf(-1.0 - 2.0 * b), d, 60.0, 600_000);
    inner + outer - 2.0 * phi(y) * 60f64.powf(-2.0 * b) / (2.0 * b)
}

/// Same operator through its Fourier multiplier -C |k|^{2b}.
pub fn spectral_oracle(y: f64, b: f64) -> f64 {
    let c = fractional_kernel_constant(1, b);
    let root = (2.0 * PI).sqrt();
    -c / PI * simpson(|k| k.powf(2.0 * b) * root * (-k * k / 2.0).exp() * (k * y).cos(), 0.0, 40.0, 400_000)
}
