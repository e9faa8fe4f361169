//! Sparse linear algebra: triplet assembly, CSR conversion, Dirichlet
//! elimination and a direct LU solve.
//!
//! Factorization is delegated to a fill-reducing sparse LU; solves are run
//! single-threaded so identical inputs give identical bits.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

/// Triplet (scatter) form of a sparse matrix; duplicates accumulate.
#[derive(Debug, Clone)]
pub struct CooMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        CooMatrix { n_rows, n_cols, triplets: Vec::new() }
    }

    pub fn with_capacity(n_rows: usize, n_cols: usize, cap: usize) -> Self {
        CooMatrix { n_rows, n_cols, triplets: Vec::with_capacity(cap) }
    }

    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        debug_assert!(row < self.n_rows && col < self.n_cols);
        if val != 0.0 {
            self.triplets.push((row, col, val));
        }
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn to_csr(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.n_rows, self.n_cols, &self.triplets)
    }
}

/// Compressed-row matrix with sorted column indices and summed duplicates.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // Stable sort: duplicates merge in insertion order, so symmetric
        // scatter patterns stay bit-exactly symmetric.
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (r, c, v) = triplets[k];
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n_rows, n_cols, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
        y
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                triplets.push((self.col_idx[k], r, self.values[k]));
            }
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &triplets)
    }

    /// Maximum absolute entrywise difference `|self - other|`.
    pub fn max_abs_diff(&self, other: &CsrMatrix) -> f64 {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols));
        let mut max = 0.0f64;
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                max = max.max((self.values[k] - other.get(r, self.col_idx[k])).abs());
            }
            for k in other.row_ptr[r]..other.row_ptr[r + 1] {
                max = max.max((other.values[k] - self.get(r, other.col_idx[k])).abs());
            }
        }
        max
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A square linear system with pending Dirichlet constraints.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub matrix: CooMatrix,
    pub rhs: Vec<f64>,
    /// Constrained dof -> prescribed value.
    pub constraints: Vec<(usize, f64)>,
    pub dirichlet_applied: bool,
}

impl SparseSystem {
    pub fn new(n: usize) -> Self {
        SparseSystem {
            matrix: CooMatrix::new(n, n),
            rhs: vec![0.0; n],
            constraints: Vec::new(),
            dirichlet_applied: false,
        }
    }

    pub fn n(&self) -> usize {
        self.rhs.len()
    }
}

/// Symmetric Dirichlet elimination.
///
/// Constrained rows and columns are removed, lifted contributions move to
/// the right-hand side, and each constrained dof gets the identity row with
/// its prescribed value. Symmetry of symmetric inputs is preserved exactly.
pub fn apply_dirichlet(sys: SparseSystem) -> Result<SparseSystem> {
    let n = sys.n();
    let mut prescribed: Vec<Option<f64>> = vec![None; n];
    for &(dof, value) in &sys.constraints {
        if dof >= n {
            return Err(Error::Assembly(format!("constrained dof {dof} out of range")));
        }
        match prescribed[dof] {
            Some(existing) if existing != value => {
                return Err(Error::Assembly(format!(
                    "conflicting prescribed values at dof {dof}: {existing} vs {value}"
                )));
            }
            _ => prescribed[dof] = Some(value),
        }
    }

    let mut matrix = CooMatrix::with_capacity(n, n, sys.matrix.triplets().len() + sys.constraints.len());
    let mut rhs = sys.rhs.clone();
    for &(r, c, v) in sys.matrix.triplets() {
        if prescribed[r].is_some() {
            continue;
        }
        if let Some(value) = prescribed[c] {
            rhs[r] -= v * value;
        } else {
            matrix.push(r, c, v);
        }
    }
    let mut constraints = Vec::with_capacity(sys.constraints.len());
    for (dof, p) in prescribed.iter().enumerate() {
        if let Some(value) = p {
            matrix.push(dof, dof, 1.0);
            rhs[dof] = *value;
            constraints.push((dof, *value));
        }
    }
    Ok(SparseSystem { matrix, rhs, constraints, dirichlet_applied: true })
}

fn seq_parallelism() {
    use std::sync::Once;
    static ONCE: Once = Once::new();
    ONCE.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

// The fill-reducing analysis depends only on the sparsity pattern, which is
// fixed across Newton iterations and mesh deformations (the topology never
// changes), so it is memoized by a pattern hash.
fn symbolic_for(
    a: &SparseColMat<usize, f64>,
) -> Result<faer::sparse::linalg::solvers::SymbolicLu<usize>> {
    use faer::sparse::linalg::solvers::SymbolicLu;
    use std::collections::HashMap;
    use std::sync::Mutex;

    static CACHE: Mutex<Option<HashMap<u64, SymbolicLu<usize>>>> = Mutex::new(None);

    let sym = a.symbolic();
    let mut hash: u64 = 0xcbf29ce484222325;
    let mut eat = |v: usize| {
        hash ^= v as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    };
    eat(sym.nrows());
    for &p in sym.col_ptr() {
        eat(p);
    }
    for &i in sym.row_idx() {
        eat(i);
    }

    let mut guard = CACHE.lock().unwrap();
    let map = guard.get_or_insert_with(HashMap::new);
    if let Some(cached) = map.get(&hash) {
        return Ok(cached.clone());
    }
    let symbolic = SymbolicLu::try_new(sym)
        .map_err(|e| Error::LinearSolve(format!("symbolic factorization failed: {e:?}")))?;
    if map.len() >= 16 {
        map.clear();
    }
    map.insert(hash, symbolic.clone());
    Ok(symbolic)
}

/// Direct sparse LU solve of an already-constrained system.
pub fn solve_linear(sys: &SparseSystem) -> Result<Vec<f64>> {
    debug_assert!(sys.dirichlet_applied || sys.constraints.is_empty());
    seq_parallelism();
    let n = sys.n();
    let triplets: Vec<Triplet<usize, usize, f64>> = sys
        .matrix
        .triplets()
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::LinearSolve(format!("matrix build failed: {e:?}")))?;
    let symbolic = symbolic_for(&a)?;
    let lu = faer::sparse::linalg::solvers::Lu::try_new_with_symbolic(symbolic, a.as_ref())
        .map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::ZeroPivot { dof: index }
            }
            other => Error::LinearSolve(format!("{other:?}")),
        })?;
    let mut b = Mat::<f64>::zeros(n, 1);
    for (i, v) in sys.rhs.iter().enumerate() {
        b[(i, 0)] = *v;
    }
    let x = lu.solve(&b);
    let solution: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("solution contains non-finite entries".into()));
    }
    Ok(solution)
}
