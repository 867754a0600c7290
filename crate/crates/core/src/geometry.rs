//! Discrete Riemannian calculus on a periodic grid.
//!
//! [`Geometry`] caches the per-node quantities derived from a metric
//! (inverse, volume density, Cholesky factor, first derivatives) so that the
//! curvature and differential operators can be evaluated repeatedly.
//!
//! All first derivatives use the fourth-order centred stencil; second
//! derivatives `∂_a ∂_a` use the compact five-point stencil and mixed ones the
//! product of first-derivative stencils. The Laplace–Beltrami operator is in
//! divergence form built only from the (skew-adjoint) first-derivative
//! stencil, so on the periodic grid
//! `Σ √g Δf = 0` and `Σ √g a Δb = -Σ √g <da, db>` hold to round-off.

use crate::grid::{GridSpec, ScalarField};
use crate::scalar::Real;
use crate::tensor::{
    cholesky, invert_lower, GeometryError, MetricField, SymLayout, SymTensorField, EPS_PD,
};

/// Contravariant vector field, `dim` components per node.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Real> VectorField<T> {
    pub fn scale_nodes(&self, w: &ScalarField<T>) -> Self {
        let mut out = self.clone();
        for (k, chunk) in out.data.chunks_mut(self.dim).enumerate() {
            for v in chunk {
                *v *= w.values[k];
            }
        }
        out
    }
}

/// Christoffel symbols `Γ^k_{ij}`, stored per node as `k`-major blocks of
/// packed `(i, j)` pairs so that symmetry in the lower pair is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel<T> {
    layout: SymLayout,
    pub data: Vec<T>,
}

impl<T: Real> Christoffel<T> {
    #[inline]
    pub fn get(&self, node: usize, k: usize, i: usize, j: usize) -> T {
        let n = self.layout.dim();
        let nc = self.layout.ncomp();
        self.data[node * n * nc + k * nc + self.layout.index(i, j)]
    }

    pub fn sup_norm(&self) -> T {
        crate::scalar::sup_norm(&self.data)
    }
}

/// Metric-derived data shared by every operator.
#[derive(Debug, Clone)]
pub struct Geometry<T> {
    grid: GridSpec<T>,
    layout: SymLayout,
    metric: MetricField<T>,
    ginv: Vec<T>,
    sqrt_det: Vec<T>,
    linv: Vec<T>,
    dg: Vec<Vec<T>>,
}

impl<T: Real> Geometry<T> {
    pub fn new(metric: &MetricField<T>) -> Result<Self, GeometryError> {
        let grid = metric.grid().clone();
        let n = grid.dim();
        let layout = SymLayout::new(n);
        let nc = layout.ncomp();
        let nodes = grid.nodes();
        let mut ginv = vec![T::zero(); nodes * nc];
        let mut sqrt_det = vec![T::zero(); nodes];
        let mut linv = vec![T::zero(); nodes * n * n];
        let mut full = vec![T::zero(); n * n];
        let mut chol = vec![T::zero(); n * n];
        let mut li = vec![T::zero(); n * n];
        let floor = T::lit(EPS_PD);
        for k in 0..nodes {
            let node = metric.tensor().node(k);
            if node.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::NonFinite { node: k });
            }
            layout.unpack(node, &mut full);
            cholesky(n, &full, &mut chol, floor).map_err(|p| GeometryError::Degenerate {
                node: k,
                value: p.as_f64(),
            })?;
            invert_lower(n, &chol, &mut li);
            sqrt_det[k] = (0..n).fold(T::one(), |d, i| d * chol[i * n + i]);
            // g^{-1} = L^{-T} L^{-1}
            for (idx, &(i, j)) in layout.pairs().iter().enumerate() {
                let mut s = T::zero();
                for m in i.max(j)..n {
                    s += li[m * n + i] * li[m * n + j];
                }
                ginv[k * nc + idx] = s;
            }
            linv[k * n * n..(k + 1) * n * n].copy_from_slice(&li);
        }
        let dg = (0..n)
            .map(|a| grid.diff1(&metric.tensor().data, nc, a))
            .collect();
        Ok(Self {
            grid,
            layout,
            metric: metric.clone(),
            ginv,
            sqrt_det,
            linv,
            dg,
        })
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn metric(&self) -> &MetricField<T> {
        &self.metric
    }

    pub fn layout(&self) -> &SymLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// `sqrt(det g)` per node.
    pub fn sqrt_det(&self) -> &[T] {
        &self.sqrt_det
    }

    /// Packed inverse metric of node `k`.
    #[inline]
    pub fn ginv(&self, k: usize) -> &[T] {
        let nc = self.layout.ncomp();
        &self.ginv[k * nc..(k + 1) * nc]
    }

    #[inline]
    fn ginv_ij(&self, k: usize, i: usize, j: usize) -> T {
        self.ginv[k * self.layout.ncomp() + self.layout.index(i, j)]
    }

    #[inline]
    fn dg_abc(&self, k: usize, a: usize, i: usize, j: usize) -> T {
        self.dg[a][k * self.layout.ncomp() + self.layout.index(i, j)]
    }

    /// Lowered Christoffel symbols `Γ_{l,ij}` of node `k` into `out[l*nc + (ij)]`.
    fn christoffel_lower_node(&self, k: usize, out: &mut [T]) {
        let n = self.dim();
        let nc = self.layout.ncomp();
        let half = T::lit(0.5);
        for l in 0..n {
            for (idx, &(i, j)) in self.layout.pairs().iter().enumerate() {
                out[l * nc + idx] = half
                    * (self.dg_abc(k, i, j, l) + self.dg_abc(k, j, i, l) - self.dg_abc(k, l, i, j));
            }
        }
    }

    fn raise_node(&self, k: usize, lower: &[T], out: &mut [T]) {
        let n = self.dim();
        let nc = self.layout.ncomp();
        for m in 0..n {
            for idx in 0..nc {
                let mut s = T::zero();
                for l in 0..n {
                    s += self.ginv_ij(k, m, l) * lower[l * nc + idx];
                }
                out[m * nc + idx] = s;
            }
        }
    }

    /// Levi-Civita connection `Γ^k_{ij}`.
    pub fn christoffel(&self) -> Christoffel<T> {
        let n = self.dim();
        let nc = self.layout.ncomp();
        let nodes = self.grid.nodes();
        let mut data = vec![T::zero(); nodes * n * nc];
        let mut lower = vec![T::zero(); n * nc];
        for k in 0..nodes {
            self.christoffel_lower_node(k, &mut lower);
            self.raise_node(k, &lower, &mut data[k * n * nc..(k + 1) * n * nc]);
        }
        Christoffel {
            layout: self.layout.clone(),
            data,
        }
    }

    /// Ricci tensor
    /// `R_ij = ∂_k Γ^k_ij − ∂_j Γ^k_ki + Γ^k_kp Γ^p_ij − Γ^k_jp Γ^p_ki`,
    /// with the derivatives of `Γ` expanded through `∂g` and `∂∂g`.
    pub fn ricci(&self) -> SymTensorField<T> {
        let n = self.dim();
        let nc = self.layout.ncomp();
        let nodes = self.grid.nodes();
        let gdata = &self.metric.tensor().data;
        // ddg[(a,b)] = ∂_a ∂_b g (all packed components), a <= b
        let ddg: Vec<Vec<T>> = self
            .layout
            .pairs()
            .iter()
            .map(|&(a, b)| self.grid.diff_ab(gdata, nc, a, b))
            .collect();
        let l = &self.layout;
        let d2 = |k: usize, a: usize, b: usize, i: usize, j: usize| -> T {
            ddg[l.index(a, b)][k * nc + l.index(i, j)]
        };
        let half = T::lit(0.5);
        let mut out = SymTensorField::zeros(&self.grid);
        let mut lower = vec![T::zero(); n * nc];
        let mut upper = vec![T::zero(); n * nc];
        // dginv[a][(kl)] = ∂_a g^{kl}
        let mut dginv = vec![T::zero(); n * nc];
        let mut contracted = vec![T::zero(); n]; // Γ^k_{kp}
        for node in 0..nodes {
            self.christoffel_lower_node(node, &mut lower);
            self.raise_node(node, &lower, &mut upper);
            for a in 0..n {
                for (idx, &(p, q)) in l.pairs().iter().enumerate() {
                    let mut s = T::zero();
                    for r in 0..n {
                        let gpr = self.ginv_ij(node, p, r);
                        for t in 0..n {
                            s += gpr * self.ginv_ij(node, q, t) * self.dg_abc(node, a, r, t);
                        }
                    }
                    dginv[a * nc + idx] = -s;
                }
            }
            for p in 0..n {
                let mut s = T::zero();
                for k in 0..n {
                    s += upper[k * nc + l.index(k, p)];
                }
                contracted[p] = s;
            }
            let gam = |k: usize, i: usize, j: usize| upper[k * nc + l.index(i, j)];
            let gam_low = |m: usize, i: usize, j: usize| lower[m * nc + l.index(i, j)];
            let dgam_low = |c: usize, m: usize, i: usize, j: usize| -> T {
                half * (d2(node, c, i, j, m) + d2(node, c, j, i, m) - d2(node, c, m, i, j))
            };
            for (idx, &(i, j)) in l.pairs().iter().enumerate() {
                let mut r = T::zero();
                for k in 0..n {
                    for m in 0..n {
                        // ∂_k Γ^k_ij
                        r += dginv[k * nc + l.index(k, m)] * gam_low(m, i, j)
                            + self.ginv_ij(node, k, m) * dgam_low(k, m, i, j);
                        // − ∂_j Γ^k_ki
                        r -= dginv[j * nc + l.index(k, m)] * gam_low(m, k, i)
                            + self.ginv_ij(node, k, m) * dgam_low(j, m, k, i);
                    }
                }
                for p in 0..n {
                    r += contracted[p] * gam(p, i, j);
                    for k in 0..n {
                        r -= gam(k, j, p) * gam(p, k, i);
                    }
                }
                out.data[node * nc + idx] = r;
            }
        }
        out
    }

    /// Full contraction `g^{ij} T_ij`.
    pub fn trace(&self, t: &SymTensorField<T>) -> ScalarField<T> {
        let nc = self.layout.ncomp();
        let values = (0..self.grid.nodes())
            .map(|k| {
                let gi = self.ginv(k);
                let tk = t.node(k);
                self.layout
                    .pairs()
                    .iter()
                    .enumerate()
                    .map(|(idx, &(i, j))| {
                        let w = if i == j { T::one() } else { T::lit(2.0) };
                        w * gi[idx] * tk[idx]
                    })
                    .fold(T::zero(), |a, b| a + b)
            })
            .collect::<Vec<_>>();
        debug_assert_eq!(values.len() * nc, t.data.len());
        ScalarField::new(values)
    }

    pub fn scalar_curvature(&self) -> ScalarField<T> {
        self.trace(&self.ricci())
    }

    /// `g^{ij} T_ij`-style norm `g^{ik} g^{jl} T_ij T_kl`, evaluated as the
    /// Frobenius norm of `L^{-1} T L^{-T}` so it is never negative.
    pub fn tensor_norm_sq(&self, t: &SymTensorField<T>) -> ScalarField<T> {
        let n = self.dim();
        let mut full = vec![T::zero(); n * n];
        let mut tmp = vec![T::zero(); n * n];
        let values = (0..self.grid.nodes())
            .map(|k| {
                let li = &self.linv[k * n * n..(k + 1) * n * n];
                self.layout.unpack(t.node(k), &mut full);
                // tmp = L^{-1} T
                for i in 0..n {
                    for j in 0..n {
                        let mut s = T::zero();
                        for m in 0..=i {
                            s += li[i * n + m] * full[m * n + j];
                        }
                        tmp[i * n + j] = s;
                    }
                }
                // B = tmp L^{-T}; accumulate Σ B_ij^2
                let mut acc = T::zero();
                for i in 0..n {
                    for j in 0..n {
                        let mut s = T::zero();
                        for m in 0..=j {
                            s += tmp[i * n + m] * li[j * n + m];
                        }
                        acc += s * s;
                    }
                }
                acc
            })
            .collect();
        ScalarField::new(values)
    }

    /// `g^{ij} ∂_i a ∂_j b`.
    pub fn grad_dot(&self, a: &ScalarField<T>, b: &ScalarField<T>) -> ScalarField<T> {
        let n = self.dim();
        let da = self.grid.gradient(&a.values);
        let db = self.grid.gradient(&b.values);
        ScalarField::new(
            (0..self.grid.nodes())
                .map(|k| self.contract_vectors(k, &da[k * n..(k + 1) * n], &db[k * n..(k + 1) * n]))
                .collect(),
        )
    }

    #[inline]
    fn contract_vectors(&self, k: usize, x: &[T], y: &[T]) -> T {
        let n = self.dim();
        let mut s = T::zero();
        for i in 0..n {
            for j in 0..n {
                s += self.ginv_ij(k, i, j) * x[i] * y[j];
            }
        }
        s
    }

    /// `|∇f|^2_g`.
    pub fn gradient_sq(&self, f: &ScalarField<T>) -> ScalarField<T> {
        let n = self.dim();
        let df = self.grid.gradient(&f.values);
        ScalarField::new(
            (0..self.grid.nodes())
                .map(|k| {
                    let d = &df[k * n..(k + 1) * n];
                    self.contract_vectors(k, d, d).max(T::zero())
                })
                .collect(),
        )
    }

    /// Raised gradient `g^{ij} ∂_j f`.
    pub fn gradient_vector(&self, f: &ScalarField<T>) -> VectorField<T> {
        let n = self.dim();
        let df = self.grid.gradient(&f.values);
        let mut data = vec![T::zero(); df.len()];
        for k in 0..self.grid.nodes() {
            for i in 0..n {
                let mut s = T::zero();
                for j in 0..n {
                    s += self.ginv_ij(k, i, j) * df[k * n + j];
                }
                data[k * n + i] = s;
            }
        }
        VectorField { dim: n, data }
    }

    /// `(1/√g) ∂_i (√g X^i)`.
    pub fn divergence_vec(&self, x: &VectorField<T>) -> ScalarField<T> {
        let n = self.dim();
        let nodes = self.grid.nodes();
        let mut acc = vec![T::zero(); nodes];
        let mut comp = vec![T::zero(); nodes];
        let mut d = vec![T::zero(); nodes];
        for i in 0..n {
            for k in 0..nodes {
                comp[k] = self.sqrt_det[k] * x.data[k * n + i];
            }
            self.grid.diff1_into(&comp, 1, i, &mut d);
            for k in 0..nodes {
                acc[k] += d[k];
            }
        }
        for k in 0..nodes {
            acc[k] /= self.sqrt_det[k];
        }
        ScalarField::new(acc)
    }

    /// Laplace–Beltrami operator in divergence form
    /// `(1/√g) ∂_i (√g g^{ij} ∂_j f)`.
    pub fn laplace_beltrami(&self, f: &ScalarField<T>) -> ScalarField<T> {
        self.divergence_vec(&self.gradient_vector(f))
    }

    /// Covariant Hessian `∂_i ∂_j f − Γ^k_ij ∂_k f`.
    pub fn hessian(&self, f: &ScalarField<T>) -> SymTensorField<T> {
        self.hessian_with(f, &self.christoffel())
    }

    pub fn hessian_with(&self, f: &ScalarField<T>, gamma: &Christoffel<T>) -> SymTensorField<T> {
        let n = self.dim();
        let nc = self.layout.ncomp();
        let df = self.grid.gradient(&f.values);
        let second: Vec<Vec<T>> = self
            .layout
            .pairs()
            .iter()
            .map(|&(a, b)| self.grid.diff_ab(&f.values, 1, a, b))
            .collect();
        let mut out = SymTensorField::zeros(&self.grid);
        for k in 0..self.grid.nodes() {
            for (idx, &(i, j)) in self.layout.pairs().iter().enumerate() {
                let mut s = second[idx][k];
                for m in 0..n {
                    s -= gamma.get(k, m, i, j) * df[k * n + m];
                }
                out.data[k * nc + idx] = s;
            }
        }
        out
    }

    /// Riemann sum `Σ f √g h_1 ... h_n` (exact trapezoidal rule on the torus).
    pub fn integrate(&self, f: &ScalarField<T>) -> T {
        let s = f
            .values
            .iter()
            .zip(&self.sqrt_det)
            .fold(T::zero(), |a, (&v, &w)| a + v * w);
        s * self.grid.cell_volume()
    }

    pub fn volume(&self) -> T {
        self.sqrt_det.iter().fold(T::zero(), |a, &w| a + w) * self.grid.cell_volume()
    }
}

/// Convenience wrappers taking a metric directly.
pub fn christoffel<T: Real>(g: &MetricField<T>) -> Result<Christoffel<T>, GeometryError> {
    Ok(Geometry::new(g)?.christoffel())
}

pub fn ricci<T: Real>(g: &MetricField<T>) -> Result<SymTensorField<T>, GeometryError> {
    Ok(Geometry::new(g)?.ricci())
}

pub fn scalar_curvature<T: Real>(g: &MetricField<T>) -> Result<ScalarField<T>, GeometryError> {
    Ok(Geometry::new(g)?.scalar_curvature())
}

pub fn laplace_beltrami<T: Real>(
    g: &MetricField<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>, GeometryError> {
    Ok(Geometry::new(g)?.laplace_beltrami(f))
}

pub fn hessian<T: Real>(
    g: &MetricField<T>,
    f: &ScalarField<T>,
) -> Result<SymTensorField<T>, GeometryError> {
    Ok(Geometry::new(g)?.hessian(f))
}

pub fn gradient_sq<T: Real>(
    g: &MetricField<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>, GeometryError> {
    Ok(Geometry::new(g)?.gradient_sq(f))
}

pub fn tensor_norm_sq<T: Real>(
    g: &MetricField<T>,
    t: &SymTensorField<T>,
) -> Result<ScalarField<T>, GeometryError> {
    Ok(Geometry::new(g)?.tensor_norm_sq(t))
}

pub fn divergence_vec<T: Real>(
    g: &MetricField<T>,
    x: &VectorField<T>,
) -> Result<ScalarField<T>, GeometryError> {
    Ok(Geometry::new(g)?.divergence_vec(x))
}

pub fn integrate<T: Real>(g: &MetricField<T>, f: &ScalarField<T>) -> Result<T, GeometryError> {
    Ok(Geometry::new(g)?.integrate(f))
}
