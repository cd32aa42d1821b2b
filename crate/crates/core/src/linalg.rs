//! Sparse symmetric matrices and SPD solvers.
//!
//! The direct path is an envelope (profile) Cholesky factorization after reverse
//! Cuthill-McKee reordering. Systems that are too large, or whose envelope would be too
//! large, fall back to Jacobi-preconditioned conjugate gradients.

use std::collections::VecDeque;
use std::io::Write;

use crate::error::{invalid, numeric, Error, Result};

/// Largest system solved by the direct factorization.
pub const DIRECT_MAX_DIM: usize = 200_000;
/// Largest envelope (stored entries of the factor) accepted by the direct factorization.
pub const DIRECT_MAX_ENVELOPE: usize = 40_000_000;
/// Relative residual targeted by the iterative fallback.
pub const PCG_TOLERANCE: f64 = 1e-13;

/// Square matrix in compressed sparse row form with sorted column indices.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds a matrix from per-row sorted patterns; values start at zero.
    pub fn from_pattern(n: usize, rows: Vec<Vec<usize>>, symmetric: bool) -> Self {
        assert_eq!(rows.len(), n);
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let nnz = cols.len();
        SparseMatrix { n, row_ptr, cols, values: vec![0.0; nnz], symmetric }
    }

    /// Builds a matrix from `(row, col, value)` triplets, summing duplicates in input order.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)], symmetric: bool) -> Self {
        let mut rows = vec![Vec::new(); n];
        for &(r, c, _) in triplets {
            rows[r].push(c);
        }
        let mut m = Self::from_pattern(n, rows, symmetric);
        for &(r, c, v) in triplets {
            m.add(r, c, v);
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>(), true)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.values[a..b])
    }

    fn position(&self, r: usize, c: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.cols[a..b].binary_search(&c).ok().map(|k| a + k)
    }

    /// Adds `v` to entry `(r, c)`, which must be in the pattern.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self.position(r, c).expect("entry outside the sparsity pattern");
        self.values[k] += v;
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.position(r, c).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&c, v)| v * x[c]).sum();
        }
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.mul_vec(x))
    }

    /// `max |A_ij - A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense copy, for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        d
    }

    /// Writes the matrix in MatrixMarket coordinate format (general, 1-based).
    pub fn write_matrix_market<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }

    /// Combines two matrices with identical patterns: `a * self + b * other`.
    pub fn linear_combination(&self, a: f64, other: &SparseMatrix, b: f64) -> Result<SparseMatrix> {
        if self.row_ptr != other.row_ptr || self.cols != other.cols {
            return Err(invalid("matrices have different sparsity patterns"));
        }
        let mut out = self.clone();
        for (v, w) in out.values.iter_mut().zip(&other.values) {
            *v = a * *v + b * w;
        }
        Ok(out)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reverse Cuthill-McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &SparseMatrix) -> Vec<usize> {
    let n = a.dim();
    let degree: Vec<usize> = (0..n).map(|i| a.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut nbrs = Vec::new();
    while order.len() < n {
        // start each component from a minimum-degree vertex, refined by one pseudo-peripheral sweep
        let start = (0..n).filter(|&i| !visited[i]).min_by_key(|&i| (degree[i], i)).expect("unvisited vertex");
        let start = last_level_min_degree(a, start, &degree, &visited);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            nbrs.clear();
            nbrs.extend(a.row(v).0.iter().copied().filter(|&u| !visited[u]));
            nbrs.sort_by_key(|&u| (degree[u], u));
            for &u in &nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Minimum-degree vertex of the last BFS level from `root`, within the unvisited component.
fn last_level_min_degree(a: &SparseMatrix, root: usize, degree: &[usize], visited: &[bool]) -> usize {
    let mut level = vec![usize::MAX; a.dim()];
    let mut queue = VecDeque::from([root]);
    level[root] = 0;
    let mut best = (0, degree[root], root);
    while let Some(v) = queue.pop_front() {
        if level[v] > best.0 || (level[v] == best.0 && (degree[v], v) < (best.1, best.2)) {
            best = (level[v], degree[v], v);
        }
        for &u in a.row(v).0 {
            if !visited[u] && level[u] == usize::MAX {
                level[u] = level[v] + 1;
                queue.push_back(u);
            }
        }
    }
    best.2
}

/// Envelope Cholesky factor `P A P^T = L L^T`, stored row-wise from each row's first nonzero.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Envelope size of `a` under the RCM ordering, without factorizing.
    pub fn envelope_size(a: &SparseMatrix, perm: &[usize]) -> usize {
        let first = Self::first_columns(a, perm);
        first.iter().enumerate().map(|(i, &f)| i - f + 1).sum()
    }

    fn first_columns(a: &SparseMatrix, perm: &[usize]) -> Vec<usize> {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        (0..n)
            .map(|i| a.row(perm[i]).0.iter().map(|&c| inv[c]).filter(|&c| c <= i).min().unwrap_or(i))
            .collect()
    }

    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with(a, perm)
    }

    pub fn factor_with(a: &SparseMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.dim();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let first = Self::first_columns(a, &perm);
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            let (cols, vals) = a.row(perm[i]);
            for (&c, &v) in cols.iter().zip(vals) {
                let j = inv[c];
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let ri = start[i];
            for j in fi..i {
                let fj = first[j];
                let rj = start[j];
                let k0 = fi.max(fj);
                let s: f64 = (k0..j).map(|k| data[ri + k - fi] * data[rj + k - fj]).sum();
                let ljj = data[rj + j - fj];
                data[ri + j - fi] = (data[ri + j - fi] - s) / ljj;
            }
            let s: f64 = (fi..i).map(|k| data[ri + k - fi].powi(2)).sum();
            let d = data[ri + i - fi] - s;
            if !(d > 0.0) || !d.is_finite() {
                return Err(numeric(None, format!("matrix is not positive definite (pivot {d:e} at row {i})")));
            }
            data[ri + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { perm, first, start, data })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.perm.len();
        let mut y: Vec<f64> = self.perm.iter().map(|&old| rhs[old]).collect();
        // forward: L y = b
        for i in 0..n {
            let fi = self.first[i];
            let ri = self.start[i];
            let s: f64 = (fi..i).map(|k| self.data[ri + k - fi] * y[k]).sum();
            y[i] = (y[i] - s) / self.data[ri + i - fi];
        }
        // backward: L^T x = y, column-oriented over the rows of L
        for i in (0..n).rev() {
            let fi = self.first[i];
            let ri = self.start[i];
            y[i] /= self.data[ri + i - fi];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.data[ri + k - fi] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }

    pub fn envelope(&self) -> usize {
        self.data.len()
    }
}

/// Result of a conjugate gradient solve.
#[derive(Clone, Debug)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(a: &SparseMatrix, rhs: &[f64], tol: f64, max_iterations: usize) -> Result<PcgOutcome> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let bnorm = norm2(rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome { x, iterations: 0, relative_residual: 0.0 });
    }
    let mut r = rhs.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iterations {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(numeric(None, "conjugate gradients broke down: matrix is not positive definite"));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm2(&r) / bnorm;
        if rel <= tol {
            return Ok(PcgOutcome { x, iterations: it, relative_residual: rel });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm2(&r) / bnorm;
    Err(Error::Solver { iterations: max_iterations, residual: rel })
}

/// A reusable solver for a fixed SPD matrix.
#[derive(Clone, Debug)]
pub enum SpdSolver {
    Direct(EnvelopeCholesky),
    Iterative,
}

impl SpdSolver {
    /// Factorizes `a` when it is small enough, otherwise prepares the iterative path.
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        if a.dim() > DIRECT_MAX_DIM {
            return Ok(SpdSolver::Iterative);
        }
        let perm = reverse_cuthill_mckee(a);
        if EnvelopeCholesky::envelope_size(a, &perm) > DIRECT_MAX_ENVELOPE {
            log::debug!("envelope too large for {}x{} system, using PCG", a.dim(), a.dim());
            return Ok(SpdSolver::Iterative);
        }
        Ok(SpdSolver::Direct(EnvelopeCholesky::factor_with(a, perm)?))
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, SpdSolver::Direct(_))
    }

    /// Solves `a x = rhs` with `||a x - rhs|| <= tol ||rhs||`. The iterative path never
    /// targets less than [`PCG_TOLERANCE`].
    pub fn solve(&self, a: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        if rhs.len() != a.dim() {
            return Err(invalid("right-hand side length does not match matrix dimension"));
        }
        match self {
            SpdSolver::Direct(chol) => {
                let mut x = chol.solve(rhs);
                let bnorm = norm2(rhs);
                // a few steps of iterative refinement recover accuracy lost to rounding
                for _ in 0..3 {
                    let ax = a.mul_vec(&x);
                    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, y)| b - y).collect();
                    if norm2(&r) <= tol * bnorm {
                        break;
                    }
                    let dx = chol.solve(&r);
                    for (xi, d) in x.iter_mut().zip(dx) {
                        *xi += d;
                    }
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(numeric(None, "direct solve produced non-finite values"));
                }
                Ok(x)
            }
            SpdSolver::Iterative => {
                let max_it = (10 * a.dim()).max(1000);
                Ok(pcg(a, rhs, tol.max(PCG_TOLERANCE), max_it)?.x)
            }
        }
    }
}

/// One-shot SPD solve; see [`SpdSolver`] for the method choice.
pub fn solve_spd(a: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    SpdSolver::new(a)?.solve(a, rhs, tol)
}
