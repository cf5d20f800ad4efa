mod common;

use common::*;
use hypou::gaussian::*;
use hypou::linalg::{expm, from_rows, Matrix};
use hypou::structure::OUSystem;
use proptest::prelude::*;
use rand::Rng;

fn rel_frob(a: &Matrix, b: &[[f64; 2]; 2]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            num += (a[(i, j)] - b[i][j]).powi(2);
            den += b[i][j].powi(2);
        }
    }
    (num / den).sqrt()
}

#[test]
fn kolmogorov_covariance_closed_form() {
    let sys = OUSystem::kolmogorov();
    for t in [1e-3, 0.1, 0.5, 1.0, 3.0] {
        let c = ou_covariance(&sys, 0.0, t).unwrap().covariance;
        assert!(rel_frob(&c, &kolmogorov_covariance(t)) < 1e-10, "t = {t}");
    }
    let c = ou_covariance(&sys, 0.2, 1.2).unwrap().covariance;
    assert!(rel_frob(&c, &kolmogorov_covariance(1.0)) < 1e-10);
}

#[test]
fn covariance_flow_identity() {
    // C(s, u) = C(t, u) + e^{(u-t)A} C(s, t) e^{(u-t)A*}
    let mut r = rng(5);
    for sys in [OUSystem::kolmogorov(), OUSystem::chain(3)] {
        for _ in 0..20 {
            let mut v = [r.random_range(0.0..2.0), r.random_range(0.0..2.0), r.random_range(0.0..2.0)];
            v.sort_by(f64::total_cmp);
            let [s, t, u] = v;
            let e = expm(sys.a(), u - t);
            let lhs = ou_covariance(&sys, s, u).unwrap().covariance;
            let rhs = ou_covariance(&sys, t, u).unwrap().covariance + &e * ou_covariance(&sys, s, t).unwrap().covariance * e.transpose();
            assert!((&lhs - &rhs).norm() <= 1e-9 * lhs.norm().max(1e-300), "{s} {t} {u}");
        }
    }
}

#[test]
fn increment_covariance_of_time_varying_path() {
    // Q(t) = diag(t, 0) on [0, 1]: 2 int_0^1 r dr = 1
    let q = TimePSDPath::piecewise_linear(vec![0.0, 1.0], vec![Matrix::zeros(2, 2), from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap()]).unwrap();
    let c = increment_covariance(&q, 0.0, 1.0, 1e-12).unwrap().covariance;
    assert!((c[(0, 0)] - 1.0).abs() < 1e-12 && c[(1, 1)].abs() < 1e-14);
}

#[test]
fn chapman_kolmogorov_for_the_density() {
    let sys = OUSystem::kolmogorov();
    let half = OuDensity::new(&sys, 0.5).unwrap();
    let quarter = OuDensity::new(&sys, 0.25).unwrap();
    let z = [0.3, -0.2];
    // integrate over w = m + L xi, xi ~ N(0, I), with a trapezoid rule in xi
    let law = ou_covariance(&sys, 0.0, 0.25).unwrap();
    let m = expm(sys.a(), 0.25) * hypou::linalg::Vector::from_column_slice(&z);
    let compose = |zp: &[f64], hx: f64| {
        let n = (7.0 / hx).round() as i64;
        let mut acc = 0.0;
        for i in -n..=n {
            for j in -n..=n {
                let xi = [i as f64 * hx, j as f64 * hx];
                let w = &m + &law.factor * hypou::linalg::Vector::from_column_slice(&xi);
                let g = (-0.5 * (xi[0] * xi[0] + xi[1] * xi[1])).exp() / (2.0 * std::f64::consts::PI);
                acc += g * quarter.eval(w.as_slice(), zp);
            }
        }
        acc * hx * hx
    };
    let mean = expm(sys.a(), 0.5) * hypou::linalg::Vector::from_column_slice(&z);
    let (hx, hy) = (0.1, 0.03);
    let (nx, ny) = (60i64, 60i64);
    let mut l1 = 0.0;
    let mut mass = 0.0;
    let mut l1_coarse = 0.0;
    for i in -nx..=nx {
        for j in -ny..=ny {
            let zp = [mean[0] + i as f64 * hx, mean[1] + j as f64 * hy];
            let p = half.eval(&z, &zp);
            mass += p * hx * hy;
            l1 += (compose(&zp, 0.25) - p).abs() * hx * hy;
            if i % 4 == 0 && j % 4 == 0 {
                l1_coarse += (compose(&zp, 0.5) - p).abs() * 16.0 * hx * hy;
            }
        }
    }
    assert!((mass - 1.0).abs() < 1e-4, "{mass}");
    assert!(l1 < 1e-3, "{l1}");
    assert!(l1_coarse < 1e-3, "{l1_coarse}");
}

fn gaussian_source(dim: usize, sigma: f64) -> FnSource<impl Fn(f64, &[f64]) -> f64 + Send + Sync> {
    FnSource {
        dim,
        f: move |_t: f64, z: &[f64]| (-z.iter().map(|x| x * x).sum::<f64>() / (2.0 * sigma * sigma)).exp(),
        radius: 8.0 * sigma,
        sup: 1.0,
        breakpoints: vec![],
    }
}

#[test]
fn heat_solution_matches_kernel_formula() {
    let sigma = 0.5;
    let f = gaussian_source(1, sigma);
    let grid = SpaceTimeGrid::new(0.5, 5, vec![-8.0], vec![8.0], vec![321]).unwrap();
    let q = TimePSDPath::constant(Matrix::identity(1, 1)).unwrap();
    let v = solve_driftless(&q, &f, &grid, &SolverConfig::default(), 0).unwrap();
    let exact = |t: f64, x: f64| simpson(|r| sigma / (sigma * sigma + 2.0 * r).sqrt() * (-x * x / (2.0 * (sigma * sigma + 2.0 * r))).exp(), 0.0, t, 400);
    let mut worst: f64 = 0.0;
    for n in 1..=grid.nt {
        for (i, val) in v.slice(n).iter().enumerate() {
            worst = worst.max((val - exact(grid.time(n), grid.coord(0, i))).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
}

/// u(t, z) = int_0^t E f(e^{rA} z + N(0, C(r))) dr for f = exp(-|z|^2 / 2).
fn kolmogorov_oracle(t: f64, z: &[f64]) -> f64 {
    simpson(
        |r| {
            let m = [z[0], z[1] + r * z[0]];
            let c = kolmogorov_covariance(r);
            let s = [[1.0 + c[0][0], c[0][1]], [c[1][0], 1.0 + c[1][1]]];
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let q = (s[1][1] * m[0] * m[0] - 2.0 * s[0][1] * m[0] * m[1] + s[0][0] * m[1] * m[1]) / det;
            (-0.5 * q).exp() / det.sqrt()
        },
        0.0,
        t,
        400,
    )
}

#[test]
fn ou_pipeline_matches_gaussian_oracle() {
    let sys = OUSystem::kolmogorov();
    let f = gaussian_source(2, 1.0);
    let grid = SpaceTimeGrid::aligned(0.5, 4, &[-2.0, -2.0], &[2.0, 2.0], &[0.1, 0.1]).unwrap();
    let u = solve_ou_pipeline(&sys, None, &f, &grid, &SolverConfig::default(), 0).unwrap();
    let mut z = [0.0; 2];
    let mut worst: f64 = 0.0;
    for n in 1..=grid.nt {
        for (p, val) in u.slice(n).iter().enumerate() {
            grid.point(p, &mut z);
            worst = worst.max((val - kolmogorov_oracle(grid.time(n), &z)).abs());
        }
    }
    assert!(worst < 1e-4, "{worst}");
    assert!(u.slice(0).iter().all(|&x| x == 0.0));
}

#[test]
fn diffusive_perturbation_equals_rescaled_system() {
    // S = diag(s, 0) adds s to B0
    let s = 0.5;
    let sys = OUSystem::kolmogorov();
    let scaled = OUSystem::new(sys.a().clone(), Matrix::identity(1, 1) * (1.0 + s), 0.5).unwrap();
    let f = SourceSpec::bump(vec![0.0, 0.0], 1.0, 1.0, TimeProfile::Sine { freq: 1.0, phase: 0.3 });
    let grid = SpaceTimeGrid::aligned(0.5, 4, &[-2.0, -2.0], &[2.0, 2.0], &[0.1, 0.1]).unwrap();
    let pert = TimePSDPath::constant(from_rows(&[vec![s, 0.0], vec![0.0, 0.0]]).unwrap()).unwrap();
    let cfg = SolverConfig::default();
    let a = solve_ou_pipeline(&sys, Some(&pert), &f, &grid, &cfg, 0).unwrap();
    let b = solve_ou_pipeline(&scaled, None, &f, &grid, &cfg, 0).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-10 * b.sup_abs().max(1.0), "{}", a.max_abs_diff(&b));
}

/// Driftless Kolmogorov, Q(t) = [[1, t], [t, t^2]], f = exp(-|z|^2 / 2).
fn driftless_oracle(t: f64, z: &[f64]) -> f64 {
    simpson(
        |r| {
            let c = [[2.0 * (t - r), t * t - r * r], [t * t - r * r, 2.0 * (t * t * t - r * r * r) / 3.0]];
            let s = [[1.0 + c[0][0], c[0][1]], [c[1][0], 1.0 + c[1][1]]];
            let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
            let q = (s[1][1] * z[0] * z[0] - 2.0 * s[0][1] * z[0] * z[1] + s[0][0] * z[1] * z[1]) / det;
            (-0.5 * q).exp() / det.sqrt()
        },
        0.0,
        t,
        400,
    )
}

#[test]
fn averaging_methods_match_oracle() {
    let q = driftless_diffusion(&OUSystem::kolmogorov(), None).unwrap();
    let f = gaussian_source(2, 1.0);
    let grid = SpaceTimeGrid::aligned(0.5, 2, &[-13.0, -13.0], &[13.0, 13.0], &[0.2, 0.2]).unwrap();
    let err = |v: &Field| {
        let mut z = [0.0; 2];
        let mut worst: f64 = 0.0;
        for n in 1..=grid.nt {
            for (p, val) in v.slice(n).iter().enumerate() {
                grid.point(p, &mut z);
                worst = worst.max((val - driftless_oracle(grid.time(n), &z)).abs());
            }
        }
        worst
    };
    let spectral = solve_driftless(&q, &f, &grid, &SolverConfig::default(), 0).unwrap();
    assert!(err(&spectral) < 1e-6, "spectral {}", err(&spectral));
    let coarse = solve_driftless(&q, &f, &grid, &SolverConfig::with_averaging(Averaging::GaussHermite { nodes: 12 }), 0).unwrap();
    let cfg = SolverConfig { max_step: Some(1.0 / 32.0), ..SolverConfig::with_averaging(Averaging::GaussHermite { nodes: 12 }) };
    let fine = solve_driftless(&q, &f, &grid, &cfg, 0).unwrap();
    // trapezoid in time: error drops by about (8)^2 from dt = 1/4 to 1/32
    assert!(err(&fine) < err(&coarse) / 30.0, "gauss-hermite {} -> {}", err(&coarse), err(&fine));
    assert!(err(&fine) < 1e-4, "gauss-hermite {}", err(&fine));
    let coarse_grid = SpaceTimeGrid::aligned(0.5, 2, &[-13.0, -13.0], &[13.0, 13.0], &[0.5, 0.5]).unwrap();
    let cfg = SolverConfig { max_step: Some(1.0 / 32.0), ..SolverConfig::with_averaging(Averaging::MonteCarlo { n_paths: 4000 }) };
    let mc = solve_driftless(&q, &f, &coarse_grid, &cfg, 3).unwrap();
    let se = mc.std_err.as_ref().unwrap();
    let ns = coarse_grid.n_space();
    let mut z = [0.0; 2];
    let mut worst: f64 = 0.0;
    for i in ns..mc.values.len() {
        coarse_grid.point(i % ns, &mut z);
        if se[i] > 1e-4 {
            worst = worst.max((mc.values[i] - driftless_oracle(coarse_grid.time(i / ns), &z)).abs() / se[i]);
        }
    }
    assert!(worst < 5.0, "{worst}");
}

#[test]
fn push_and_pull_are_inverse_inside() {
    let sys = OUSystem::kolmogorov();
    let grid = SpaceTimeGrid::aligned(0.5, 2, &[-3.0, -3.0], &[3.0, 3.0], &[0.05, 0.05]).unwrap();
    let v = Field::from_fn(grid.clone(), "test", |t, z| (z[0] - 0.3 * t).sin() * (0.5 * z[1]).cos());
    let interp = Interpolator::new(6).unwrap();
    let mid = SpaceTimeGrid::aligned(0.5, 2, &[-2.0, -2.0], &[2.0, 2.0], &[0.05, 0.05]).unwrap();
    let inner = SpaceTimeGrid::aligned(0.5, 2, &[-1.0, -1.0], &[1.0, 1.0], &[0.05, 0.05]).unwrap();
    let u = push_to_ou(&v, sys.a(), &mid, interp).unwrap();
    let back = pull_to_driftless(&u, sys.a(), &inner, interp).unwrap();
    let direct = Field::from_fn(inner, "test", |t, z| (z[0] - 0.3 * t).sin() * (0.5 * z[1]).cos());
    assert!(back.max_abs_diff(&direct) < 1e-7, "{}", back.max_abs_diff(&direct));
}

#[test]
fn field_csv_round_trip() {
    let grid = SpaceTimeGrid::aligned(0.5, 2, &[-1.0, -1.0], &[1.0, 1.0], &[0.5, 0.5]).unwrap();
    let v = Field::from_fn(grid.clone(), "test", |t, z| t * z[0] + z[1].exp() / 3.0);
    let mut buf = vec![];
    v.write_csv(&mut buf).unwrap();
    let back = Field::read_csv(std::str::from_utf8(&buf).unwrap(), grid, "test").unwrap();
    assert_eq!(back.values, v.values);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn maximum_principle_for_random_inputs(
        cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.6f64..1.5, amp in -2.0f64..2.0,
        s00 in 0.0f64..1.0, s11 in 0.0f64..1.0, rho in -1.0f64..1.0, jump in any::<bool>(),
    ) {
        let sys = OUSystem::kolmogorov();
        let profile = if jump { TimeProfile::Step { at: 0.2, before: 1.0, after: -0.7 } } else { TimeProfile::Constant };
        let f = SourceSpec::bump(vec![cx, cy], r, amp, profile);
        let off = rho * (s00 * s11).sqrt();
        let s = TimePSDPath::constant(from_rows(&[vec![s00, off], vec![off, s11]]).unwrap()).unwrap();
        let grid = SpaceTimeGrid::aligned(0.4, 4, &[-2.5, -2.5], &[2.5, 2.5], &[0.1, 0.1]).unwrap();
        let u = solve_ou_pipeline(&sys, Some(&s), &f, &grid, &SolverConfig::default(), 0).unwrap();
        prop_assert!(u.is_finite());
        prop_assert!(u.sup_abs() <= 0.4 * f.sup_abs() + 1e-8, "{} > {}", u.sup_abs(), 0.4 * f.sup_abs());
    }

    #[test]
    fn solution_is_linear_in_the_source(a in -3.0f64..3.0) {
        let sys = OUSystem::kolmogorov();
        let f = SourceSpec::bump(vec![0.0, 0.0], 1.0, 1.0, TimeProfile::Constant);
        let grid = SpaceTimeGrid::aligned(0.3, 2, &[-2.0, -2.0], &[2.0, 2.0], &[0.2, 0.2]).unwrap();
        let cfg = SolverConfig::default();
        let u = solve_ou_pipeline(&sys, None, &f, &grid, &cfg, 0).unwrap();
        let ua = solve_ou_pipeline(&sys, None, &f.scaled(a), &grid, &cfg, 0).unwrap();
        prop_assert!(ua.max_abs_diff(&u.scaled(a)) <= 1e-12 * (1.0 + a.abs()));
    }
}
