//! The operator pair (A, B): Kalman condition, canonical block structure and intrinsic scales.

use serde::{Deserialize, Serialize};

use crate::error::{HypouError, Result};
use crate::linalg::{self, Matrix};

/// JSON form of a system: `{"N":2,"d0":1,"A":[[0,0],[1,0]],"B0":[[1.0]],"nu":1.0}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDescriptor {
    #[serde(rename = "N")]
    pub n: usize,
    pub d0: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B0")]
    pub b0: Vec<Vec<f64>>,
    pub nu: f64,
}

impl SystemDescriptor {
    pub fn kolmogorov() -> Self {
        SystemDescriptor { n: 2, d0: 1, a: vec![vec![0.0, 0.0], vec![1.0, 0.0]], b0: vec![vec![1.0]], nu: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct OUSystem {
    n: usize,
    d0: usize,
    a: Matrix,
    b0: Matrix,
    nu: f64,
    hypoelliptic: bool,
}

impl OUSystem {
    /// Validates the pair and rejects systems that fail the Kalman condition.
    pub fn new(a: Matrix, b0: Matrix, nu: f64) -> Result<Self> {
        let sys = Self::new_permissive(a, b0, nu)?;
        if !sys.hypoelliptic {
            let r = kalman_rank(&sys.a, &sys.diffusion(), sys.n)?;
            return Err(HypouError::NotHypoelliptic { rank: r.rank, n: sys.n });
        }
        Ok(sys)
    }

    /// Validates shapes, symmetry and ellipticity but accepts a failing Kalman condition.
    pub fn new_permissive(a: Matrix, b0: Matrix, nu: f64) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || !a.is_square() {
            return Err(HypouError::DimensionMismatch(format!("A must be square and non-empty, got {}x{}", a.nrows(), a.ncols())));
        }
        let d0 = b0.nrows();
        if d0 == 0 || !b0.is_square() || d0 > n {
            return Err(HypouError::DimensionMismatch(format!("B0 must be square with 1 <= d0 <= N, got {}x{}", b0.nrows(), b0.ncols())));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(HypouError::InvalidSystem(format!("nu must lie in (0, 1], got {nu}")));
        }
        if a.iter().chain(b0.iter()).any(|v| !v.is_finite()) {
            return Err(HypouError::InvalidSystem("non-finite matrix entry".into()));
        }
        if !linalg::is_symmetric(&b0, 1e-12) {
            return Err(HypouError::InvalidSystem("B0 is not symmetric".into()));
        }
        let (vals, _) = linalg::sym_eigen(&b0);
        let slack = 1e-12;
        if vals.iter().any(|&v| v < nu * (1.0 - slack) || v > (1.0 / nu) * (1.0 + slack)) {
            return Err(HypouError::InvalidSystem(format!("eigenvalues of B0 {vals:?} leave [nu, 1/nu] with nu = {nu}")));
        }
        let b = linalg::block_diag(&b0, n);
        let r = kalman_rank(&a, &b, n)?;
        Ok(OUSystem { n, d0, a, b0, nu, hypoelliptic: r.rank == n })
    }

    pub fn from_descriptor(d: &SystemDescriptor, permissive: bool) -> Result<Self> {
        let a = linalg::from_rows(&d.a).ok_or_else(|| HypouError::DimensionMismatch("ragged A".into()))?;
        let b0 = linalg::from_rows(&d.b0).ok_or_else(|| HypouError::DimensionMismatch("ragged B0".into()))?;
        if a.nrows() != d.n || a.ncols() != d.n {
            return Err(HypouError::DimensionMismatch(format!("A is {}x{}, N = {}", a.nrows(), a.ncols(), d.n)));
        }
        if b0.nrows() != d.d0 || b0.ncols() != d.d0 {
            return Err(HypouError::DimensionMismatch(format!("B0 is {}x{}, d0 = {}", b0.nrows(), b0.ncols(), d.d0)));
        }
        if permissive {
            Self::new_permissive(a, b0, d.nu)
        } else {
            Self::new(a, b0, d.nu)
        }
    }

    pub fn descriptor(&self) -> SystemDescriptor {
        SystemDescriptor { n: self.n, d0: self.d0, a: linalg::to_rows(&self.a), b0: linalg::to_rows(&self.b0), nu: self.nu }
    }

    /// Kolmogorov example: dx-diffusion, transport y' = x.
    pub fn kolmogorov() -> Self {
        Self::from_descriptor(&SystemDescriptor::kolmogorov(), false).expect("Kolmogorov system is valid")
    }

    /// Chain of length n with d0 = 1 and ones on the subdiagonal.
    pub fn chain(n: usize) -> Self {
        let a = Matrix::from_fn(n, n, |i, j| if i == j + 1 { 1.0 } else { 0.0 });
        Self::new(a, Matrix::identity(1, 1), 1.0).expect("chain system is valid")
    }

    /// Non-degenerate heat operator in dimension n.
    pub fn heat(n: usize) -> Self {
        Self::new(Matrix::zeros(n, n), Matrix::identity(n, n), 1.0).expect("heat system is valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d0(&self) -> usize {
        self.d0
    }
    pub fn d1(&self) -> usize {
        self.n - self.d0
    }
    pub fn a(&self) -> &Matrix {
        &self.a
    }
    pub fn b0(&self) -> &Matrix {
        &self.b0
    }
    pub fn nu(&self) -> f64 {
        self.nu
    }
    pub fn is_hypoelliptic(&self) -> bool {
        self.hypoelliptic
    }

    /// B = blockdiag(B0, 0).
    pub fn diffusion(&self) -> Matrix {
        linalg::block_diag(&self.b0, self.n)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KalmanRank {
    pub rank: usize,
    pub minimal_k: Option<usize>,
}

/// Ranks of [B], [B, AB], ..., [B, ..., A^{k_max} B].
pub fn kalman_rank_sequence(a: &Matrix, b: &Matrix, k_max: usize) -> Result<Vec<usize>> {
    let n = a.nrows();
    if !a.is_square() || !b.is_square() || b.nrows() != n {
        return Err(HypouError::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let mut krylov = b.clone();
    let mut block = b.clone();
    let mut seq = vec![linalg::numerical_rank(&krylov)];
    for _ in 0..k_max {
        block = a * block;
        let cols = krylov.ncols();
        krylov = krylov.resize_horizontally(cols + n, 0.0);
        krylov.view_mut((0, cols), (n, n)).copy_from(&block);
        seq.push(linalg::numerical_rank(&krylov));
    }
    Ok(seq)
}

pub fn kalman_rank(a: &Matrix, b: &Matrix, k_max: usize) -> Result<KalmanRank> {
    let seq = kalman_rank_sequence(a, b, k_max)?;
    let n = a.nrows();
    Ok(KalmanRank { rank: *seq.last().unwrap(), minimal_k: seq.iter().position(|&r| r == n) })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure {
    pub n: usize,
    pub d0: usize,
    pub k: usize,
    /// Degenerate block sizes [d_1, ..., d_k].
    pub block_sizes: Vec<usize>,
    /// Column-selection matrices E_0, ..., E_k (N x d_i).
    pub embeddings: Vec<Matrix>,
    /// alpha_i = 1/(1+2i) for i = 1..k.
    pub alphas: Vec<f64>,
}

impl BlockStructure {
    /// Size of block i, with block 0 the non-degenerate one.
    pub fn size(&self, i: usize) -> usize {
        if i == 0 {
            self.d0
        } else {
            self.block_sizes[i - 1]
        }
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        let start: usize = (0..i).map(|j| self.size(j)).sum();
        start..start + self.size(i)
    }

    pub fn n_blocks(&self) -> usize {
        self.k + 1
    }

    /// Block index of coordinate j.
    pub fn block_of(&self, j: usize) -> usize {
        (0..=self.k).find(|&i| self.range(i).contains(&j)).expect("coordinate in range")
    }

    /// Trivial structure for a non-degenerate problem (k = 0).
    pub fn heat(n: usize) -> Self {
        BlockStructure { n, d0: n, k: 0, block_sizes: vec![], embeddings: vec![Matrix::identity(n, n)], alphas: vec![] }
    }
}

/// Derives the block structure from the Kalman rank sequence and checks that A is in the
/// canonical coordinate form (full-rank subdiagonal blocks, zeros below them).
pub fn extract_block_structure(sys: &OUSystem) -> Result<BlockStructure> {
    let n = sys.n;
    let seq = kalman_rank_sequence(&sys.a, &sys.diffusion(), n)?;
    let k = seq.iter().position(|&r| r == n).ok_or(HypouError::NotHypoelliptic { rank: seq[n], n })?;
    if seq[0] != sys.d0 {
        return Err(HypouError::Structure { block: 0, msg: format!("rank of B is {}, expected d0 = {}", seq[0], sys.d0) });
    }
    let block_sizes: Vec<usize> = (1..=k).map(|i| seq[i] - seq[i - 1]).collect();
    let sizes: Vec<usize> = std::iter::once(sys.d0).chain(block_sizes.iter().copied()).collect();
    let offs: Vec<usize> = sizes.iter().scan(0, |acc, &s| { let o = *acc; *acc += s; Some(o) }).collect();

    for i in 1..=k {
        let sub = sys.a.view((offs[i], offs[i - 1]), (sizes[i], sizes[i - 1])).clone_owned();
        if linalg::numerical_rank(&sub) != sizes[i] {
            return Err(HypouError::Structure {
                block: i,
                msg: format!("subdiagonal block {}x{} does not have full rank {}", sizes[i], sizes[i - 1], sizes[i]),
            });
        }
    }
    // Below the subdiagonal: rows of block j against columns of block c with j > c + 1.
    for c in 0..=k {
        for j in (c + 2)..=k {
            let blk = sys.a.view((offs[j], offs[c]), (sizes[j], sizes[c]));
            if blk.amax() > 0.0 {
                return Err(HypouError::Structure { block: j, msg: format!("nonzero entries below the subdiagonal (column block {c})") });
            }
        }
    }

    let embeddings = (0..=k)
        .map(|i| Matrix::from_fn(n, sizes[i], |r, c| if r == offs[i] + c { 1.0 } else { 0.0 }))
        .collect();
    let alphas = (1..=k).map(|i| 1.0 / (1.0 + 2.0 * i as f64)).collect();
    Ok(BlockStructure { n, d0: sys.d0, k, block_sizes, embeddings, alphas })
}

/// diag(v I_{d0}, v^2 I_{d1}, ..., v^{k+1} I_{dk}).
pub fn scale_matrix(v: f64, bs: &BlockStructure) -> Matrix {
    let mut m = Matrix::zeros(bs.n, bs.n);
    for i in 0..=bs.k {
        let s = v.powi(i as i32 + 1);
        for j in bs.range(i) {
            m[(j, j)] = s;
        }
    }
    m
}

/// |x - x'| + sum_i |y_i - y_i'|^{1/(1+2i)}.
pub fn anisotropic_distance(z: &[f64], zp: &[f64], bs: &BlockStructure) -> f64 {
    (0..=bs.k)
        .map(|i| {
            let r = bs.range(i);
            let d = z[r.clone()].iter().zip(&zp[r]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if i == 0 {
                d
            } else {
                d.powf(1.0 / (1.0 + 2.0 * i as f64))
            }
        })
        .sum()
}

/// Diagonal and strictly upper blocks of A vanish.
pub fn is_homogeneous_class(sys: &OUSystem, bs: &BlockStructure) -> bool {
    for i in 0..=bs.k {
        for j in i..=bs.k {
            let (ri, rj) = (bs.range(i), bs.range(j));
            let blk = sys.a.view((ri.start, rj.start), (ri.len(), rj.len()));
            if blk.amax() > 0.0 {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub hypoelliptic: bool,
    pub k: Option<usize>,
    pub blocks: Vec<usize>,
    pub alphas: Vec<f64>,
}

pub fn structure_report(sys: &OUSystem) -> Result<StructureReport> {
    if !sys.is_hypoelliptic() {
        return Ok(StructureReport { hypoelliptic: false, k: None, blocks: vec![], alphas: vec![] });
    }
    let bs = extract_block_structure(sys)?;
    let alphas = bs.alphas.iter().map(|a| (a * 1e10).round() / 1e10).collect();
    Ok(StructureReport { hypoelliptic: true, k: Some(bs.k), blocks: bs.block_sizes, alphas })
}
