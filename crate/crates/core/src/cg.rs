//! Preconditioned conjugate gradients for the weighted elliptic operators
//! `A u = √g (−α Δ_g u + σ u)` arising from the pressure and conformal-factor
//! equations. Multiplying through by `√g` makes `A` symmetric in the plain
//! nodal inner product.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::geometry::Geometry;
use crate::grid::GridSpec;
use crate::scalar::{l2_norm, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgError {
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },
    #[error("CG breakdown: operator not positive definite along a search direction")]
    Indefinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PreconditionerKind {
    /// Diagonal of the assembled operator.
    Jacobi,
    /// Exact inverse of the grid-averaged constant-coefficient operator.
    #[default]
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Stop once `‖Au − b‖ / ‖b‖` (measured in the unweighted equation) drops below this.
    pub rel_tol: f64,
    /// Right-hand sides with norm below this are treated as zero; the solve
    /// then only needs an absolute residual below the same value.
    pub abs_tol: f64,
    pub max_iters: usize,
    pub preconditioner: PreconditionerKind,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_iters: 5000,
            preconditioner: PreconditionerKind::Spectral,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// Final residual of the unweighted equation, relative to `‖rhs‖`
    /// (absolute when the right-hand side is numerically zero).
    pub residual: T,
}

/// `A u = √g (−α Δ_g u + σ(x) u)`.
pub struct WeightedElliptic<'a, T> {
    geo: &'a Geometry<T>,
    alpha: T,
    potential: Vec<T>,
    compact: bool,
}

/// Forward third and fourth differences. The gap between the repeated
/// first-derivative stencil and the compact second-derivative stencil has
/// symbol `(16 / 9h²) s⁶ (2 + s²)` with `s = sin(θ/2)`, which equals
/// `(16 / 9h²) (|Δ₊³|² / 32 + |Δ₊⁴|² / 256)`.
const FWD3: [f64; 4] = [-1.0, 3.0, -3.0, 1.0];
const FWD4: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
const GAP_WEIGHTS: [f64; 2] = [16.0 / (9.0 * 32.0), 16.0 / (9.0 * 256.0)];

/// Symbol of the gap at angle `theta`, without the `1/h²` factor.
fn gap_symbol<T: Real>(theta: T) -> T {
    let s2 = (theta * T::lit(0.5)).sin().powi(2);
    T::lit(16.0 / 9.0) * s2 * s2 * s2 * (T::lit(2.0) + s2)
}

impl<'a, T: Real> WeightedElliptic<'a, T> {
    pub fn new(geo: &'a Geometry<T>, alpha: T, potential: Vec<T>) -> Self {
        debug_assert_eq!(potential.len(), geo.grid().nodes());
        Self {
            geo,
            alpha,
            potential,
            compact: false,
        }
    }

    /// Adds `α Σ_i (16 / 9h²) (Δ₊³ᵀ c_ii Δ₊³ / 32 + Δ₊⁴ᵀ c_ii Δ₊⁴ / 256)`
    /// with `c = √g g^{-1}`. For constant coefficients this turns the
    /// repeated first-derivative stencil on the diagonal into the compact
    /// second-derivative stencil used by the curvature, so odd-even modes get
    /// the same stiffness there. The term is symmetric, positive
    /// semidefinite, sums to zero over the grid and is `O(h⁴)` on smooth
    /// fields.
    pub fn with_compact_correction(mut self) -> Self {
        self.compact = true;
        self
    }

    pub fn geometry(&self) -> &Geometry<T> {
        self.geo
    }

    pub fn apply(&self, x: &[T], y: &mut [T]) {
        let grid = self.geo.grid();
        let n = grid.dim();
        let nodes = grid.nodes();
        let sq = self.geo.sqrt_det();
        let dx = grid.gradient(x);
        for v in y.iter_mut() {
            *v = T::zero();
        }
        let mut flux = vec![T::zero(); nodes];
        let mut d = vec![T::zero(); nodes];
        for i in 0..n {
            for k in 0..nodes {
                let gi = self.geo.ginv(k);
                let l = self.geo.layout();
                let mut s = T::zero();
                for j in 0..n {
                    s += gi[l.index(i, j)] * dx[k * n + j];
                }
                flux[k] = sq[k] * s;
            }
            grid.diff1_into(&flux, 1, i, &mut d);
            for k in 0..nodes {
                y[k] -= self.alpha * d[k];
            }
        }
        for k in 0..nodes {
            y[k] += sq[k] * self.potential[k] * x[k];
        }
        if self.compact {
            let l = self.geo.layout();
            let mut fwd = vec![T::zero(); nodes];
            for i in 0..n {
                let inv = self.alpha / (grid.spacing(i) * grid.spacing(i));
                for (stencil, &w) in [&FWD3[..], &FWD4[..]].iter().zip(&GAP_WEIGHTS) {
                    for (k, f) in fwd.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (r, &c) in stencil.iter().enumerate() {
                            acc += T::lit(c) * x[grid.shifted(k, i, r as isize)];
                        }
                        *f = acc * sq[k] * self.geo.ginv(k)[l.index(i, i)];
                    }
                    for (k, yk) in y.iter_mut().enumerate() {
                        let mut acc = T::zero();
                        for (r, &c) in stencil.iter().enumerate() {
                            acc += T::lit(c) * fwd[grid.shifted(k, i, -(r as isize))];
                        }
                        *yk += inv * T::lit(w) * acc;
                    }
                }
            }
        }
    }

    /// Diagonal of the operator (Jacobi preconditioner).
    pub fn diagonal(&self) -> Vec<T> {
        let grid = self.geo.grid();
        let n = grid.dim();
        let l = self.geo.layout();
        let sq = self.geo.sqrt_det();
        let w2 = [T::lit(1.0 / 144.0), T::lit(64.0 / 144.0)];
        (0..grid.nodes())
            .map(|k| {
                let mut s = sq[k] * self.potential[k];
                for i in 0..n {
                    let h = grid.spacing(i);
                    let c = |node: usize| sq[node] * self.geo.ginv(node)[l.index(i, i)];
                    let acc = w2[0] * c(grid.shifted(k, i, -2))
                        + w2[1] * c(grid.shifted(k, i, -1))
                        + w2[1] * c(grid.shifted(k, i, 1))
                        + w2[0] * c(grid.shifted(k, i, 2));
                    s += self.alpha * acc / (h * h);
                    if self.compact {
                        for (stencil, &w) in [&FWD3[..], &FWD4[..]].iter().zip(&GAP_WEIGHTS) {
                            for (r, &cf) in stencil.iter().enumerate() {
                                let at = grid.shifted(k, i, -(r as isize));
                                s += self.alpha * T::lit(w * cf * cf) * c(at) / (h * h);
                            }
                        }
                    }
                }
                s
            })
            .collect()
    }

    fn preconditioner(&self, kind: PreconditionerKind) -> Box<dyn Preconditioner<T>> {
        match kind {
            PreconditionerKind::Jacobi => Box::new(Jacobi {
                inv_diag: self.diagonal().into_iter().map(|d| T::one() / d).collect(),
            }),
            PreconditionerKind::Spectral => Box::new(SpectralInverse::for_operator(self)),
        }
    }
}

trait Preconditioner<T> {
    fn apply(&self, r: &[T], z: &mut [T]);
}

struct Jacobi<T> {
    inv_diag: Vec<T>,
}

impl<T: Real> Preconditioner<T> for Jacobi<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        for ((zi, &ri), &d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

/// Inverse of `−α ∂_i (c̄^{ij} ∂_j ·) + d̄` using the discrete symbol of the
/// fourth-order first-derivative stencil, applied by FFT.
struct SpectralInverse<T: Real> {
    fft: FftNd<T>,
    inv_symbol: Vec<T>,
}

impl<T: Real> SpectralInverse<T> {
    fn for_operator(op: &WeightedElliptic<'_, T>) -> Self {
        let geo = op.geometry();
        let grid = geo.grid();
        let n = grid.dim();
        let nodes = grid.nodes();
        let l = geo.layout();
        let sq = geo.sqrt_det();
        let inv_nodes = T::one() / T::from_usize_lossy(nodes);
        let mut cbar = vec![T::zero(); l.ncomp()];
        let mut dbar = T::zero();
        for k in 0..nodes {
            for (c, v) in cbar.iter_mut().zip(geo.ginv(k)) {
                *c += sq[k] * *v * inv_nodes;
            }
            dbar += sq[k] * op.potential[k] * inv_nodes;
        }
        let symbols: Vec<Vec<T>> = (0..n)
            .map(|a| {
                let res = grid.resolution()[a];
                let h = grid.spacing(a);
                (0..res)
                    .map(|m| {
                        let theta = T::lit(2.0) * T::PI() * T::from_usize_lossy(m)
                            / T::from_usize_lossy(res);
                        (T::lit(8.0) * theta.sin() - (theta + theta).sin()) / (T::lit(6.0) * h)
                    })
                    .collect()
            })
            .collect();
        let gaps: Vec<Vec<T>> = (0..n)
            .map(|a| {
                let res = grid.resolution()[a];
                let h = grid.spacing(a);
                (0..res)
                    .map(|m| {
                        let theta = T::lit(2.0) * T::PI() * T::from_usize_lossy(m)
                            / T::from_usize_lossy(res);
                        gap_symbol(theta) / (h * h)
                    })
                    .collect()
            })
            .collect();
        let floor = dbar.max(T::epsilon());
        let inv_symbol = (0..nodes)
            .map(|k| {
                let mut s = T::zero();
                for (idx, &(i, j)) in l.pairs().iter().enumerate() {
                    let w = if i == j { T::one() } else { T::lit(2.0) };
                    s += w
                        * cbar[idx]
                        * symbols[i][grid.axis_index(k, i)]
                        * symbols[j][grid.axis_index(k, j)];
                }
                if op.compact {
                    for i in 0..n {
                        s += cbar[l.index(i, i)] * gaps[i][grid.axis_index(k, i)];
                    }
                }
                T::one() / (op.alpha * s + floor)
            })
            .collect();
        Self {
            fft: FftNd::new(grid),
            inv_symbol,
        }
    }
}

impl<T: Real> Preconditioner<T> for SpectralInverse<T> {
    fn apply(&self, r: &[T], z: &mut [T]) {
        let mut buf: Vec<Complex<T>> = r.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.forward(&mut buf);
        for (b, &s) in buf.iter_mut().zip(&self.inv_symbol) {
            *b *= s;
        }
        self.fft.inverse(&mut buf);
        let scale = T::one() / T::from_usize_lossy(r.len());
        for (zi, b) in z.iter_mut().zip(&buf) {
            *zi = b.re * scale;
        }
    }
}

/// Unnormalized multi-dimensional FFT over a row-major periodic grid.
pub struct FftNd<T: Real> {
    res: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<T>>>,
    inverse: Vec<Arc<dyn Fft<T>>>,
}

impl<T: Real> FftNd<T> {
    pub fn new(grid: &GridSpec<T>) -> Self {
        let mut planner = FftPlanner::new();
        let res = grid.resolution().to_vec();
        let mut strides = vec![1; res.len()];
        for a in (0..res.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * res[a + 1];
        }
        Self {
            forward: res.iter().map(|&r| planner.plan_fft_forward(r)).collect(),
            inverse: res.iter().map(|&r| planner.plan_fft_inverse(r)).collect(),
            res,
            strides,
        }
    }

    fn run(&self, data: &mut [Complex<T>], plans: &[Arc<dyn Fft<T>>]) {
        let total = data.len();
        for (a, plan) in plans.iter().enumerate() {
            let n = self.res[a];
            let stride = self.strides[a];
            let mut line = vec![Complex::new(T::zero(), T::zero()); n];
            for base in 0..total {
                if !(base / stride).is_multiple_of(n) {
                    continue;
                }
                for (i, v) in line.iter_mut().enumerate() {
                    *v = data[base + i * stride];
                }
                plan.process(&mut line);
                for (i, v) in line.iter().enumerate() {
                    data[base + i * stride] = *v;
                }
            }
        }
    }

    pub fn forward(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.forward);
    }

    pub fn inverse(&self, data: &mut [Complex<T>]) {
        self.run(data, &self.inverse);
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

/// Solves `op(x) = √g · rhs` by PCG, starting from `guess` when given.
pub fn solve<T: Real>(
    op: &WeightedElliptic<'_, T>,
    rhs: &[T],
    guess: Option<&[T]>,
    opts: &CgOptions,
) -> Result<CgOutcome<T>, CgError> {
    let nodes = rhs.len();
    let sq = op.geometry().sqrt_det();
    let b: Vec<T> = rhs.iter().zip(sq).map(|(&r, &w)| r * w).collect();
    let rhs_norm = l2_norm(rhs);
    let abs_tol = T::lit(opts.abs_tol);
    let zero_rhs = rhs_norm <= abs_tol;
    let scale = if zero_rhs { T::one() } else { rhs_norm };
    let target = if zero_rhs { abs_tol } else { T::lit(opts.rel_tol) * rhs_norm };
    let true_res = |r: &[T]| -> T {
        r.iter()
            .zip(sq)
            .fold(T::zero(), |s, (&v, &w)| s + (v / w) * (v / w))
            .sqrt()
    };

    let mut x = guess.map_or_else(|| vec![T::zero(); nodes], <[T]>::to_vec);
    let mut ax = vec![T::zero(); nodes];
    op.apply(&x, &mut ax);
    let mut r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    let mut res = true_res(&r);
    if res <= target {
        return Ok(CgOutcome {
            solution: x,
            iterations: 0,
            residual: res / scale,
        });
    }
    let pre = op.preconditioner(opts.preconditioner);
    let mut z = vec![T::zero(); nodes];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = Vec::new();
    for it in 1..=opts.max_iters {
        op.apply(&p, &mut ax);
        let pap = dot(&p, &ax);
        if !(pap > T::zero()) {
            return Err(CgError::Indefinite);
        }
        let alpha = rz / pap;
        for i in 0..nodes {
            x[i] += alpha * p[i];
            r[i] -= alpha * ax[i];
        }
        res = true_res(&r);
        history.push((res / scale).as_f64());
        if res <= target {
            // Confirm against an explicitly recomputed residual.
            op.apply(&x, &mut ax);
            let rr: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
            let explicit = true_res(&rr);
            if explicit <= target {
                return Ok(CgOutcome {
                    solution: x,
                    iterations: it,
                    residual: explicit / scale,
                });
            }
            r = rr;
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..nodes {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(CgError::NotConverged {
        iterations: opts.max_iters,
        residual: (res / scale).as_f64(),
        history,
    })
}
