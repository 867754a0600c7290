//! The flow restricted to `g = c(t) g_hyp` on a closed hyperbolic space form
//! with `Rc(g_hyp) = −m g_hyp`, with a spatially constant conjugate heat
//! density.
//!
//! `Rc(c g_hyp) = −(m/c) g`, so `Rc + m g = m(1 − 1/c) g`,
//! `|Rc + m g|² = m²(m + 1)(1 − 1/c)²` and the pressure equation is
//! algebraic: `p = m(1 − 1/c)²`. Matching coefficients of `g_hyp` in the
//! flow gives `dc/dt = 2m(1 − c) − 2pc`, and `du/dt = (m + 1) p u`.
//!
//! Only `c = 1` satisfies `R = −m(m + 1)`; other states are off the
//! constraint the monotonicity formulas assume.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceFormError {
    #[error("conformal scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("m must be at least 1")]
    Dimension,
    #[error("step must be positive and at most the final time (dt = {dt}, T = {t})")]
    Step { dt: f64, t: f64 },
    #[error("scale left the positive axis at step {0}")]
    Collapsed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceFormState<T> {
    pub c: T,
    pub m: usize,
    /// Volume of the unit space form.
    pub vol_hyp: T,
    pub u: T,
}

fn check_scale<T: Real>(c: T) -> Result<(), SpaceFormError> {
    if c > T::zero() {
        Ok(())
    } else {
        Err(SpaceFormError::NonPositiveScale(c.as_f64()))
    }
}

/// `p = m (1 − 1/c)²`.
pub fn pressure_scalar<T: Real>(c: T, m: usize) -> Result<T, SpaceFormError> {
    check_scale(c)?;
    let d = T::one() - c.recip();
    Ok(T::from_usize_lossy(m) * d * d)
}

/// `dc/dt = 2m(1 − c) − 2 p c`.
pub fn crf_ode_rhs<T: Real>(c: T, m: usize) -> Result<T, SpaceFormError> {
    let p = pressure_scalar(c, m)?;
    let two = T::lit(2.0);
    Ok(two * T::from_usize_lossy(m) * (T::one() - c) - two * p * c)
}

/// `|R + m(m + 1)| = m(m + 1) |1/c − 1|`.
pub fn constraint_violation<T: Real>(c: T, m: usize) -> T {
    T::from_usize_lossy(m * (m + 1)) * (c.recip() - T::one()).abs()
}

pub fn volume<T: Real>(c: T, m: usize, vol_hyp: T) -> T {
    c.powf(T::from_usize_lossy(m + 1) * T::lit(0.5)) * vol_hyp
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceFormRow<T> {
    pub t: T,
    pub c: T,
    pub p: T,
    pub u: T,
    pub volume: T,
    /// `u ln u · vol`.
    pub e: T,
    /// `2(m + 1) ln u · u · vol`.
    pub w: T,
    /// `(m + 1) p u vol`; the gradient term vanishes for constant `u`.
    pub de_analytic: T,
    /// `(2/m) |Rc + m g|² u vol`, the only surviving term of the `W` rate.
    pub dw_analytic: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpaceFormSeries<T> {
    pub m: usize,
    pub dt: T,
    pub rows: Vec<SpaceFormRow<T>>,
}

impl<T: Real> SpaceFormSeries<T> {
    pub fn max_scale_deviation(&self, from: T) -> T {
        self.rows
            .iter()
            .map(|r| (r.c - from).abs())
            .fold(T::zero(), T::max)
    }

    pub fn w(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.w).collect()
    }
}

/// Integrates `c` forward and `u` backward from `u(T) = 1 / vol(c(T))`.
///
/// `u` is recovered from `ln u(t) = ln u(T) − ∫_t^T (m + 1) p ds`, with the
/// integral carried as an extra RK4 component alongside `c`, so both use
/// the same stages and time grid.
pub fn run_ode<T: Real>(
    c0: T,
    m: usize,
    vol_hyp: T,
    final_time: T,
    dt: T,
) -> Result<SpaceFormSeries<T>, SpaceFormError> {
    check_scale(c0)?;
    if m == 0 {
        return Err(SpaceFormError::Dimension);
    }
    if !(dt > T::zero()) || !(final_time >= dt) {
        return Err(SpaceFormError::Step {
            dt: dt.as_f64(),
            t: final_time.as_f64(),
        });
    }
    let steps = (final_time / dt).round().to_usize().unwrap_or(0).max(1);
    let dt = final_time / T::from_usize_lossy(steps);
    let mc = T::from_usize_lossy(m + 1);
    let rate = |c: T| -> Result<(T, T), SpaceFormError> {
        Ok((crf_ode_rhs(c, m)?, mc * pressure_scalar(c, m)?))
    };

    let mut cs = Vec::with_capacity(steps + 1);
    let mut logs = Vec::with_capacity(steps + 1);
    let (mut c, mut l) = (c0, T::zero());
    cs.push(c);
    logs.push(l);
    let half = dt * T::lit(0.5);
    for step in 0..steps {
        let guard = |r: Result<(T, T), SpaceFormError>| r.map_err(|_| SpaceFormError::Collapsed(step));
        let k1 = guard(rate(c))?;
        let k2 = guard(rate(c + half * k1.0))?;
        let k3 = guard(rate(c + half * k2.0))?;
        let k4 = guard(rate(c + dt * k3.0))?;
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        c += sixth * (k1.0 + two * k2.0 + two * k3.0 + k4.0);
        l += sixth * (k1.1 + two * k2.1 + two * k3.1 + k4.1);
        if !(c > T::zero()) {
            return Err(SpaceFormError::Collapsed(step));
        }
        cs.push(c);
        logs.push(l);
    }

    let u_final = volume(c, m, vol_hyp).recip();
    let l_final = l;
    let two = T::lit(2.0);
    let mt = T::from_usize_lossy(m);
    let rows = cs
        .iter()
        .zip(&logs)
        .enumerate()
        .map(|(k, (&c, &l))| {
            let p = pressure_scalar(c, m)?;
            let u = u_final * (l - l_final).exp();
            if !(u > T::zero()) {
                return Err(SpaceFormError::NonPositiveDensity(u.as_f64()));
            }
            let vol = volume(c, m, vol_hyp);
            let mass = u * vol;
            let d = T::one() - c.recip();
            let shifted_sq = mt * mt * mc * d * d;
            Ok(SpaceFormRow {
                t: dt * T::from_usize_lossy(k),
                c,
                p,
                u,
                volume: vol,
                e: mass * u.ln(),
                w: two * mc * u.ln() * mass,
                de_analytic: mc * p * mass,
                dw_analytic: two / mt * shifted_sq * mass,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SpaceFormSeries { m, dt, rows })
}
