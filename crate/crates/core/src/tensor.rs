//! Symmetric tensor fields and the small dense kernels used per node.
//!
//! A symmetric `n x n` tensor is stored as its upper triangle in row-major
//! order, `n (n + 1) / 2` numbers per node; symmetry is therefore exact.

use thiserror::Error;

use crate::grid::{GridSpec, ScalarField};
use crate::scalar::Real;

/// Default positive-definiteness floor for metric eigenvalues.
pub const EPS_PD: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("metric is degenerate at node {node} (smallest eigenvalue or pivot {value:e})")]
    Degenerate { node: usize, value: f64 },
    #[error("field has {got} values, grid expects {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },
}

/// Index bookkeeping for packed symmetric storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymLayout {
    n: usize,
    table: Vec<usize>,
    pairs: Vec<(usize, usize)>,
}

impl SymLayout {
    pub fn new(n: usize) -> Self {
        let mut table = vec![0; n * n];
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                table[i * n + j] = pairs.len();
                table[j * n + i] = pairs.len();
                pairs.push((i, j));
            }
        }
        Self { n, table, pairs }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn ncomp(&self) -> usize {
        self.pairs.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        self.table[i * self.n + j]
    }

    #[inline]
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Expands a packed tensor into a full row-major `n x n` matrix.
    #[inline]
    pub fn unpack<T: Real>(&self, packed: &[T], full: &mut [T]) {
        for i in 0..self.n {
            for j in 0..self.n {
                full[i * self.n + j] = packed[self.index(i, j)];
            }
        }
    }
}

/// Symmetric two-tensor per node.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensorField<T> {
    layout: SymLayout,
    pub data: Vec<T>,
}

impl<T: Real> SymTensorField<T> {
    pub fn zeros(grid: &GridSpec<T>) -> Self {
        let layout = SymLayout::new(grid.dim());
        let data = vec![T::zero(); grid.nodes() * layout.ncomp()];
        Self { layout, data }
    }

    pub fn from_data(dim: usize, data: Vec<T>) -> Self {
        let layout = SymLayout::new(dim);
        debug_assert_eq!(data.len() % layout.ncomp(), 0);
        Self { layout, data }
    }

    /// Fills each node's packed components with `f(x, out)`.
    pub fn from_fn(grid: &GridSpec<T>, mut f: impl FnMut(&[T], &mut [T])) -> Self {
        let mut t = Self::zeros(grid);
        let nc = t.layout.ncomp();
        let mut x = vec![T::zero(); grid.dim()];
        for (k, chunk) in t.data.chunks_mut(nc).enumerate() {
            grid.coords_into(k, &mut x);
            f(&x, chunk);
        }
        t
    }

    pub fn layout(&self) -> &SymLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn nodes(&self) -> usize {
        self.data.len() / self.layout.ncomp()
    }

    #[inline]
    pub fn node(&self, k: usize) -> &[T] {
        let nc = self.layout.ncomp();
        &self.data[k * nc..(k + 1) * nc]
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> T {
        self.data[k * self.layout.ncomp() + self.layout.index(i, j)]
    }

    /// Component `(i, j)` as a scalar field.
    pub fn component(&self, i: usize, j: usize) -> ScalarField<T> {
        let nc = self.layout.ncomp();
        let c = self.layout.index(i, j);
        ScalarField::new((0..self.nodes()).map(|k| self.data[k * nc + c]).collect())
    }

    /// `self + s * other`, node-wise.
    pub fn axpy(&self, s: T, other: &Self) -> Self {
        Self {
            layout: self.layout.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + s * b)
                .collect(),
        }
    }

    /// Multiplies node `k` by `w[k]`.
    pub fn scale_nodes(&self, w: &ScalarField<T>) -> Self {
        let nc = self.layout.ncomp();
        let mut out = self.clone();
        for (k, chunk) in out.data.chunks_mut(nc).enumerate() {
            for v in chunk {
                *v *= w.values[k];
            }
        }
        out
    }

    pub fn sup_norm(&self) -> T {
        crate::scalar::sup_norm(&self.data)
    }
}

/// Riemannian metric: a positive-definite [`SymTensorField`] on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField<T> {
    grid: GridSpec<T>,
    tensor: SymTensorField<T>,
}

impl<T: Real> MetricField<T> {
    /// Validates shape, finiteness and positive-definiteness (smallest
    /// eigenvalue above [`EPS_PD`]) at every node.
    pub fn new(grid: GridSpec<T>, tensor: SymTensorField<T>) -> Result<Self, GeometryError> {
        let expected = grid.nodes() * SymLayout::new(grid.dim()).ncomp();
        if tensor.dim() != grid.dim() || tensor.data.len() != expected {
            return Err(GeometryError::ShapeMismatch {
                expected,
                got: tensor.data.len(),
            });
        }
        let m = Self { grid, tensor };
        m.check_positive_definite(T::lit(EPS_PD))?;
        Ok(m)
    }

    pub fn flat(grid: &GridSpec<T>) -> Self {
        Self::constant_multiple(grid, T::one())
    }

    /// `c * δ` for a constant `c > 0`.
    pub fn constant_multiple(grid: &GridSpec<T>, c: T) -> Self {
        let t = SymTensorField::from_fn(grid, |_, out| {
            let n = grid.dim();
            let l = SymLayout::new(n);
            for (idx, &(i, j)) in l.pairs().iter().enumerate() {
                out[idx] = if i == j { c } else { T::zero() };
            }
        });
        Self::new(grid.clone(), t).expect("positive constant multiple of identity")
    }

    /// Conformally flat metric `e^{2 phi} δ`.
    pub fn conformally_flat(grid: &GridSpec<T>, phi: &ScalarField<T>) -> Result<Self, GeometryError> {
        let l = SymLayout::new(grid.dim());
        let mut t = SymTensorField::zeros(grid);
        let nc = l.ncomp();
        for k in 0..grid.nodes() {
            let e = (phi.values[k] + phi.values[k]).exp();
            for (idx, &(i, j)) in l.pairs().iter().enumerate() {
                t.data[k * nc + idx] = if i == j { e } else { T::zero() };
            }
        }
        Self::new(grid.clone(), t)
    }

    pub fn from_fn(
        grid: &GridSpec<T>,
        f: impl FnMut(&[T], &mut [T]),
    ) -> Result<Self, GeometryError> {
        Self::new(grid.clone(), SymTensorField::from_fn(grid, f))
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn tensor(&self) -> &SymTensorField<T> {
        &self.tensor
    }

    pub fn into_tensor(self) -> SymTensorField<T> {
        self.tensor
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Pointwise conformal rescaling `w(x) g(x)`.
    pub fn conformal(&self, w: &ScalarField<T>) -> Result<Self, GeometryError> {
        Self::new(self.grid.clone(), self.tensor.scale_nodes(w))
    }

    /// Cholesky attempt at every node; fails on the first pivot at or below
    /// `floor` or any non-finite component.
    pub fn check_cholesky(&self, floor: T) -> Result<(), GeometryError> {
        let n = self.dim();
        let l = self.tensor.layout().clone();
        let mut full = vec![T::zero(); n * n];
        let mut chol = vec![T::zero(); n * n];
        for k in 0..self.grid.nodes() {
            let node = self.tensor.node(k);
            if node.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite { node: k });
            }
            l.unpack(node, &mut full);
            if let Err(p) = cholesky(n, &full, &mut chol, floor) {
                return Err(GeometryError::Degenerate {
                    node: k,
                    value: p.as_f64(),
                });
            }
        }
        Ok(())
    }

    /// Cholesky attempt followed by an eigenvalue check against `eps`.
    pub fn check_positive_definite(&self, eps: T) -> Result<(), GeometryError> {
        self.check_cholesky(eps)?;
        let (node, value) = self.min_eigenvalue_at();
        if value <= eps {
            return Err(GeometryError::Degenerate {
                node,
                value: value.as_f64(),
            });
        }
        Ok(())
    }

    /// Smallest metric eigenvalue over the grid, with the node attaining it.
    pub fn min_eigenvalue_at(&self) -> (usize, T) {
        let n = self.dim();
        let l = self.tensor.layout();
        let mut full = vec![T::zero(); n * n];
        let mut best = (0, T::infinity());
        for k in 0..self.grid.nodes() {
            l.unpack(self.tensor.node(k), &mut full);
            let ev = symmetric_eigenvalues(n, &mut full);
            let m = ev.into_iter().fold(T::infinity(), T::min);
            if m < best.1 {
                best = (k, m);
            }
        }
        best
    }

    pub fn min_eigenvalue(&self) -> T {
        self.min_eigenvalue_at().1
    }
}

/// Lower Cholesky factor of a full SPD matrix. On failure returns the
/// offending pivot value.
pub fn cholesky<T: Real>(n: usize, a: &[T], l: &mut [T], floor: T) -> Result<(), T> {
    for v in l.iter_mut() {
        *v = T::zero();
    }
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > floor) {
            return Err(d);
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(())
}

/// Inverse of a lower-triangular matrix (result lower-triangular).
pub fn invert_lower<T: Real>(n: usize, l: &[T], out: &mut [T]) {
    for v in out.iter_mut() {
        *v = T::zero();
    }
    for j in 0..n {
        out[j * n + j] = T::one() / l[j * n + j];
        for i in (j + 1)..n {
            let mut s = T::zero();
            for k in j..i {
                s += l[i * n + k] * out[k * n + j];
            }
            out[i * n + j] = -s / l[i * n + i];
        }
    }
}

/// Eigenvalues of a small symmetric matrix by cyclic Jacobi rotations.
/// The input is overwritten.
pub fn symmetric_eigenvalues<T: Real>(n: usize, a: &mut [T]) -> Vec<T> {
    let eps = T::epsilon();
    for _sweep in 0..64 {
        let mut off = T::zero();
        let mut diag = T::zero();
        for i in 0..n {
            diag += a[i * n + i] * a[i * n + i];
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        if off <= eps * eps * diag || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
