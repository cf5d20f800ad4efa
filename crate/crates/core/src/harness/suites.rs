//! Default source and perturbation suites, and the inflated evaluation box.

use crate::error::Result;
use crate::gaussian::covariance::ou_covariance_tol;
use crate::gaussian::path::PathSpec;
use crate::gaussian::source::{Source, SourceSpec, TimeProfile};
use crate::gaussian::grid::SpaceTimeGrid;
use crate::linalg;
use crate::structure::OUSystem;

/// Ten bumps in the plane with varied centres, radii and time profiles. Two have jumps in time.
pub fn default_f_suite() -> Vec<SourceSpec> {
    let b = |c: [f64; 2], r: f64, profile: TimeProfile| SourceSpec::bump(c.to_vec(), r, 1.0, profile);
    vec![
        b([0.0, 0.0], 1.0, TimeProfile::Constant),
        b([0.5, -0.5], 0.75, TimeProfile::Constant),
        b([-0.5, 0.5], 1.25, TimeProfile::Ramp { t0: 0.0, t1: 0.5 }),
        b([0.0, 0.5], 0.8, TimeProfile::Sine { freq: 1.0, phase: 0.0 }),
        b([0.5, 0.0], 1.0, TimeProfile::Sine { freq: 2.0, phase: 0.5 }),
        b([-0.5, -0.5], 0.9, TimeProfile::Step { at: 0.5, before: 1.0, after: -0.5 }),
        b([0.0, -0.5], 1.1, TimeProfile::Window { start: 0.25, end: 0.75 }),
        b([0.3, 0.2], 0.6, TimeProfile::Constant),
        b([-0.3, 0.0], 1.5, TimeProfile::Ramp { t0: 0.25, t1: 1.0 }),
        b([0.0, 0.0], 0.7, TimeProfile::Sine { freq: 0.5, phase: 1.0 }),
    ]
}

/// S = 0, sigma^2 Id, a constant rank-one matrix, a rank-one path vanishing on half of
/// each period, a rotating PSD matrix, and a path that is zero on [0, 0.3] before ramping up.
pub fn default_s_suite() -> Vec<PathSpec> {
    vec![
        PathSpec::Constant { matrix: vec![vec![0.0, 0.0], vec![0.0, 0.0]] },
        PathSpec::Constant { matrix: vec![vec![0.5, 0.0], vec![0.0, 0.5]] },
        PathSpec::Constant { matrix: vec![vec![0.25, 0.5], vec![0.5, 1.0]] },
        PathSpec::Rank1Vanishing { v: vec![0.6, 0.8], period: 1.0, phase: 0.0 },
        PathSpec::SinusoidalPsd { eigenvalues: vec![0.8, 0.0], omega: 2.0 * std::f64::consts::PI, phase: 0.0, plane: [0, 1] },
        PathSpec::PiecewiseLinear {
            times: vec![0.0, 0.3, 0.6, 1.0],
            matrices: vec![
                vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                vec![vec![0.0, 0.0], vec![0.0, 0.0]],
                vec![vec![0.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.5, 0.0], vec![0.0, 0.0]],
            ],
        },
    ]
}

/// Grid with spacing `h` over the union of the source supports, each axis inflated by 4 marginal
/// standard deviations of the OU covariance over [0, horizon], transported backwards by e^{-tA}.
pub fn inflated_grid(sys: &OUSystem, sources: &[SourceSpec], horizon: f64, nt: usize, h: f64) -> Result<SpaceTimeGrid> {
    let d = sys.n();
    let cov = ou_covariance_tol(sys, 0.0, horizon, 1e-12)?.covariance;
    let delta: Vec<f64> = (0..d).map(|j| 4.0 * cov[(j, j)].max(0.0).sqrt()).collect();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    let mut corner = vec![0.0; d];
    let mut img = vec![0.0; d];
    let steps = 16;
    for f in sources {
        let (slo, shi) = match f.support_box(horizon) {
            Some(b) => b,
            None => (vec![-1.0; d], vec![1.0; d]),
        };
        for s in 0..=steps {
            let m = linalg::expm(sys.a(), -horizon * s as f64 / steps as f64);
            for mask in 0..(1usize << d) {
                for j in 0..d {
                    corner[j] = if mask >> j & 1 == 1 { shi[j] + delta[j] } else { slo[j] - delta[j] };
                }
                linalg::mat_vec(&m, &corner, &mut img);
                for j in 0..d {
                    lo[j] = lo[j].min(img[j]);
                    hi[j] = hi[j].max(img[j]);
                }
            }
        }
    }
    SpaceTimeGrid::aligned(horizon, nt, &lo, &hi, &vec![h; d])
}
