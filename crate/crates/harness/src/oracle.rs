//! Closed-form curvature of the conformally flat metric `g = e^{2φ} δ` with
//! `φ = 0.1 sin(kx) cos(ky) + 0.05 sin(kz)`, `k = 2π/L`.

use std::f64::consts::PI;

pub struct ConformalWave {
    pub period: f64,
}

impl ConformalWave {
    fn k(&self) -> f64 {
        2.0 * PI / self.period
    }

    /// `φ`, `∇φ` and `∇∇φ` (flat derivatives) at `x`.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
        let k = self.k();
        let (sx, cx) = (k * x[0]).sin_cos();
        let (sy, cy) = (k * x[1]).sin_cos();
        let (sz, cz) = (k * x[2]).sin_cos();
        let v = 0.1 * sx * cy + 0.05 * sz;
        let d = [0.1 * k * cx * cy, -0.1 * k * sx * sy, 0.05 * k * cz];
        let kk = k * k;
        let mut h = [[0.0; 3]; 3];
        h[0][0] = -0.1 * kk * sx * cy;
        h[1][1] = -0.1 * kk * sx * cy;
        h[0][1] = -0.1 * kk * cx * sy;
        h[1][0] = h[0][1];
        h[2][2] = -0.05 * kk * sz;
        (v, d, h)
    }

    /// `Rc_ij = −(n − 2)(φ_ij − φ_i φ_j) − (Δφ + (n − 2)|∇φ|²) δ_ij` for `n = 3`.
    pub fn ricci(&self, x: &[f64]) -> [[f64; 3]; 3] {
        let (_, d, h) = self.eval(x);
        let lap = h[0][0] + h[1][1] + h[2][2];
        let grad2: f64 = d.iter().map(|v| v * v).sum();
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = -(h[i][j] - d[i] * d[j]);
                if i == j {
                    r[i][j] -= lap + grad2;
                }
            }
        }
        r
    }

    /// `R = e^{−2φ} tr Rc`.
    pub fn scalar(&self, x: &[f64]) -> f64 {
        let (v, _, _) = self.eval(x);
        let r = self.ricci(x);
        (-2.0 * v).exp() * (r[0][0] + r[1][1] + r[2][2])
    }
}
