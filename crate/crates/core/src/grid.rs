//! Periodic structured grids and the finite-difference stencils on them.
//!
//! Node layout is row-major: the last axis varies fastest. Multi-component
//! fields are stored node-major, component-minor, i.e. component `c` of node
//! `k` lives at `k * ncomp + c`.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be at least 1, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: resolution {res} is below the minimum of 8")]
    Resolution { axis: usize, res: usize },
    #[error("axis {axis}: period must be positive and finite")]
    Period { axis: usize },
    #[error("expected {expected} axes, got {got}")]
    AxisCount { expected: usize, got: usize },
}

/// Uniform periodic grid on a torus `T^n = R^n / (L_1 Z x ... x L_n Z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec<T> {
    dim: usize,
    res: Vec<usize>,
    period: Vec<T>,
    strides: Vec<usize>,
}

pub const MIN_RESOLUTION: usize = 8;

impl<T: Real> GridSpec<T> {
    pub fn new(res: Vec<usize>, period: Vec<T>) -> Result<Self, GridError> {
        let dim = res.len();
        if dim == 0 {
            return Err(GridError::Dimension(dim));
        }
        if period.len() != dim {
            return Err(GridError::AxisCount {
                expected: dim,
                got: period.len(),
            });
        }
        for (axis, &r) in res.iter().enumerate() {
            if r < MIN_RESOLUTION {
                return Err(GridError::Resolution { axis, res: r });
            }
        }
        for (axis, &l) in period.iter().enumerate() {
            if !(l > T::zero() && l.is_finite()) {
                return Err(GridError::Period { axis });
            }
        }
        let mut strides = vec![1; dim];
        for a in (0..dim.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * res[a + 1];
        }
        Ok(Self {
            dim,
            res,
            period,
            strides,
        })
    }

    /// Same resolution and period on every axis.
    pub fn cubic(dim: usize, res: usize, period: T) -> Result<Self, GridError> {
        Self::new(vec![res; dim], vec![period; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res
    }

    pub fn period(&self) -> &[T] {
        &self.period
    }

    pub fn nodes(&self) -> usize {
        self.res.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> T {
        self.period[axis] / T::from_usize_lossy(self.res[axis])
    }

    /// Smallest grid spacing over all axes.
    pub fn min_spacing(&self) -> T {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(T::infinity(), T::min)
    }

    /// Coordinate volume of one cell.
    pub fn cell_volume(&self) -> T {
        (0..self.dim).fold(T::one(), |v, a| v * self.spacing(a))
    }

    /// Same grid with every resolution multiplied by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self::new(
            self.res.iter().map(|r| r * factor).collect(),
            self.period.clone(),
        )
        .expect("refinement keeps a valid grid")
    }

    /// Axis index of `node` along `axis`.
    #[inline]
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.res[axis]
    }

    /// Neighbour of `node` displaced by `shift` cells along `axis`, wrapping
    /// periodically.
    #[inline]
    pub fn shifted(&self, node: usize, axis: usize, shift: isize) -> usize {
        let n = self.res[axis] as isize;
        let i = self.axis_index(node, axis) as isize;
        let j = (i + shift).rem_euclid(n);
        (node as isize + (j - i) * self.strides[axis] as isize) as usize
    }

    /// Coordinates of `node` written into `out`.
    pub fn coords_into(&self, node: usize, out: &mut [T]) {
        for (a, x) in out.iter_mut().enumerate().take(self.dim) {
            *x = T::from_usize_lossy(self.axis_index(node, a)) * self.spacing(a);
        }
    }

    pub fn coords(&self, node: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.dim];
        self.coords_into(node, &mut x);
        x
    }

    /// Fourth-order centred first derivative along `axis` of every component.
    pub fn diff1(&self, data: &[T], ncomp: usize, axis: usize) -> Vec<T> {
        let mut out = vec![T::zero(); data.len()];
        self.diff1_into(data, ncomp, axis, &mut out);
        out
    }

    pub fn diff1_into(&self, data: &[T], ncomp: usize, axis: usize, out: &mut [T]) {
        debug_assert_eq!(data.len(), self.nodes() * ncomp);
        let inv = T::one() / (T::lit(12.0) * self.spacing(axis));
        let eight = T::lit(8.0);
        for node in 0..self.nodes() {
            let m2 = self.shifted(node, axis, -2) * ncomp;
            let m1 = self.shifted(node, axis, -1) * ncomp;
            let p1 = self.shifted(node, axis, 1) * ncomp;
            let p2 = self.shifted(node, axis, 2) * ncomp;
            let base = node * ncomp;
            for c in 0..ncomp {
                out[base + c] = (data[m2 + c] - eight * data[m1 + c] + eight * data[p1 + c]
                    - data[p2 + c])
                    * inv;
            }
        }
    }

    /// Fourth-order compact (five-point) second derivative along `axis`.
    pub fn diff2(&self, data: &[T], ncomp: usize, axis: usize) -> Vec<T> {
        debug_assert_eq!(data.len(), self.nodes() * ncomp);
        let h = self.spacing(axis);
        let inv = T::one() / (T::lit(12.0) * h * h);
        let (c16, c30) = (T::lit(16.0), T::lit(30.0));
        let mut out = vec![T::zero(); data.len()];
        for node in 0..self.nodes() {
            let m2 = self.shifted(node, axis, -2) * ncomp;
            let m1 = self.shifted(node, axis, -1) * ncomp;
            let p1 = self.shifted(node, axis, 1) * ncomp;
            let p2 = self.shifted(node, axis, 2) * ncomp;
            let base = node * ncomp;
            for c in 0..ncomp {
                out[base + c] = (-data[m2 + c] + c16 * data[m1 + c] - c30 * data[base + c]
                    + c16 * data[p1 + c]
                    - data[p2 + c])
                    * inv;
            }
        }
        out
    }

    /// Second derivative `∂_a ∂_b`: compact stencil when `a == b`, product of
    /// first-derivative stencils otherwise.
    pub fn diff_ab(&self, data: &[T], ncomp: usize, a: usize, b: usize) -> Vec<T> {
        if a == b {
            self.diff2(data, ncomp, a)
        } else {
            let da = self.diff1(data, ncomp, a);
            self.diff1(&da, ncomp, b)
        }
    }

    /// Gradient (coordinate components) of a scalar array: `dim` values per node.
    pub fn gradient(&self, f: &[T]) -> Vec<T> {
        let n = self.dim;
        let mut out = vec![T::zero(); f.len() * n];
        let mut tmp = vec![T::zero(); f.len()];
        for a in 0..n {
            self.diff1_into(f, 1, a, &mut tmp);
            for (k, v) in tmp.iter().enumerate() {
                out[k * n + a] = *v;
            }
        }
        out
    }
}

/// Scalar quantity sampled at every grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn constant(grid: &GridSpec<T>, value: T) -> Self {
        Self {
            values: vec![value; grid.nodes()],
        }
    }

    pub fn zeros(grid: &GridSpec<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f(x)` at every node coordinate.
    pub fn from_fn(grid: &GridSpec<T>, mut f: impl FnMut(&[T]) -> T) -> Self {
        let mut x = vec![T::zero(); grid.dim()];
        let values = (0..grid.nodes())
            .map(|k| {
                grid.coords_into(k, &mut x);
                f(&x)
            })
            .collect();
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sup_norm(&self) -> T {
        crate::scalar::sup_norm(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
