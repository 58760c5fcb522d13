//! Compressed sparse row operators and the linear solver behind every diffusion and
//! Laplace system in the crate.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::mesh::Vec3;

/// Relative residual every accepted solve must reach.
pub const SOLVE_TOLERANCE: f64 = 1e-10;

const MAX_REFINEMENTS: usize = 8;

/// Real sparse matrix in CSR form with sorted, deduplicated column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    /// Assemble from `(row, col, value)` triplets; repeated positions are summed
    /// in input order so assembly is deterministic.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            counts[r + 1] += 1;
        }
        for r in 0..rows {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut bucket = vec![(0usize, 0.0f64); triplets.len()];
        for &(r, c, v) in triplets {
            bucket[fill[r]] = (c, v);
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        for r in 0..rows {
            let row = &mut bucket[counts[r]..counts[r + 1]];
            // Stable sort keeps the summation order of duplicates fixed.
            row.sort_by_key(|&(c, _)| c);
            for &(c, v) in row.iter() {
                if col_idx.len() > row_ptr[r] && *col_idx.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        SparseOperator {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn diagonal(d: &[f64]) -> Self {
        SparseOperator {
            rows: d.len(),
            cols: d.len(),
            row_ptr: (0..=d.len()).collect(),
            col_idx: (0..d.len()).collect(),
            values: d.to_vec(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn diagonal_values(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn mul_vec3(&self, x: &[Vec3]) -> Vec<Vec3> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| self.row(r).fold(Vec3::zeros(), |acc, (c, v)| acc + x[c] * v))
            .collect()
    }

    /// `self + scale · other`.
    pub fn add_scaled(&self, other: &SparseOperator, scale: f64) -> Self {
        assert_eq!(self.shape(), other.shape());
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, scale * v)));
        Self::from_triplets(self.rows, self.cols, &t)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| self.row(r).all(|(c, v)| (v - self.get(c, r)).abs() <= tol))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.rows, self.cols, &t)
            .map_err(|e| Error::SingularSystem(format!("cannot assemble operator: {e:?}")))
    }
}

enum Factor {
    Cholesky(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl Factor {
    fn solve(&self, b: &Mat<f64>) -> Mat<f64> {
        match self {
            Factor::Cholesky(f) => f.solve(b),
            Factor::Lu(f) => f.solve(b),
        }
    }
}

/// A factorized square operator that can be solved against many right-hand sides.
pub struct Factorization {
    op: SparseOperator,
    factor: Factor,
}

impl Factorization {
    /// Sparse Cholesky when the operator is symmetric positive definite, LU otherwise.
    pub fn new(op: &SparseOperator) -> Result<Self> {
        let (n, m) = op.shape();
        if n != m {
            return Err(Error::InvalidInput(format!("operator is {n}x{m}, not square")));
        }
        if !op.is_finite() {
            return Err(Error::SingularSystem("operator has non-finite entries".into()));
        }
        let mat = op.to_faer()?;
        let factor = if op.is_symmetric(0.0) {
            match mat.sp_cholesky(Side::Lower) {
                Ok(llt) => Factor::Cholesky(llt),
                Err(_) => Factor::Lu(
                    mat.sp_lu()
                        .map_err(|e| Error::SingularSystem(format!("{e:?}")))?,
                ),
            }
        } else {
            Factor::Lu(mat.sp_lu().map_err(|e| Error::SingularSystem(format!("{e:?}")))?)
        };
        Ok(Factorization {
            op: op.clone(),
            factor,
        })
    }

    /// Solve for each column of `rhs`, refining iteratively until the relative
    /// residual is at most [`SOLVE_TOLERANCE`].
    pub fn solve(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.op.rows;
        if rhs.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(col) = rhs.iter().find(|c| c.len() != n) {
            return Err(Error::InvalidInput(format!(
                "right-hand side has length {}, expected {n}",
                col.len()
            )));
        }
        let b = Mat::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
        let mut x = self.factor.solve(&b);
        let mut worst = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENTS {
            let mut residual = Mat::<f64>::zeros(n, rhs.len());
            worst = 0.0;
            for j in 0..rhs.len() {
                let xj: Vec<f64> = (0..n).map(|i| x[(i, j)]).collect();
                if xj.iter().any(|v| !v.is_finite()) {
                    return Err(Error::SingularSystem("solution is not finite".into()));
                }
                let ax = self.op.mul_vec(&xj);
                let bn = norm(&rhs[j]);
                let mut rn = 0.0;
                for i in 0..n {
                    let r = rhs[j][i] - ax[i];
                    residual[(i, j)] = r;
                    rn += r * r;
                }
                let rel = if bn > 0.0 { rn.sqrt() / bn } else { rn.sqrt() };
                worst = worst.max(rel);
            }
            if worst <= SOLVE_TOLERANCE {
                return Ok((0..rhs.len())
                    .map(|j| (0..n).map(|i| x[(i, j)]).collect())
                    .collect());
            }
            let dx = self.factor.solve(&residual);
            x += &dx;
        }
        Err(Error::NonConvergence { residual: worst })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solve `op · X = rhs` column by column.
pub fn solve_linear(op: &SparseOperator, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    Factorization::new(op)?.solve(rhs)
}

/// Solve `op · x = rhs` with `x[fixed[k]] = values[col][k]` pinned.
///
/// Rows of pinned unknowns are dropped and their known contributions moved to
/// the right-hand side, which keeps a symmetric operator symmetric.
pub fn solve_with_fixed(
    op: &SparseOperator,
    rhs: &[Vec<f64>],
    fixed: &[usize],
    values: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = op.rows;
    if fixed.is_empty() {
        return Err(Error::SingularSystem("no fixed vertices".into()));
    }
    if values.len() != rhs.len() || values.iter().any(|v| v.len() != fixed.len()) {
        return Err(Error::InvalidInput("fixed values do not match right-hand sides".into()));
    }
    let mut slot = vec![usize::MAX; n];
    let mut pinned = vec![None; n];
    for (k, &v) in fixed.iter().enumerate() {
        if v >= n {
            return Err(Error::InvalidInput(format!("fixed index {v} out of range")));
        }
        pinned[v] = Some(k);
    }
    let free: Vec<usize> = (0..n).filter(|&v| pinned[v].is_none()).collect();
    for (k, &v) in free.iter().enumerate() {
        slot[v] = k;
    }
    let mut out: Vec<Vec<f64>> = (0..rhs.len())
        .map(|j| {
            let mut x = vec![0.0; n];
            for (k, &v) in fixed.iter().enumerate() {
                x[v] = values[j][k];
            }
            x
        })
        .collect();
    if free.is_empty() {
        return Ok(out);
    }
    let mut t = Vec::with_capacity(op.nnz());
    let mut reduced_rhs: Vec<Vec<f64>> = rhs
        .iter()
        .map(|b| free.iter().map(|&v| b[v]).collect())
        .collect();
    for (k, &r) in free.iter().enumerate() {
        for (c, v) in op.row(r) {
            match pinned[c] {
                None => t.push((k, slot[c], v)),
                Some(p) => {
                    for j in 0..rhs.len() {
                        reduced_rhs[j][k] -= v * values[j][p];
                    }
                }
            }
        }
    }
    let reduced = SparseOperator::from_triplets(free.len(), free.len(), &t);
    let x = solve_linear(&reduced, &reduced_rhs)?;
    for j in 0..rhs.len() {
        for (k, &v) in free.iter().enumerate() {
            out[j][v] = x[j][k];
        }
    }
    Ok(out)
}
