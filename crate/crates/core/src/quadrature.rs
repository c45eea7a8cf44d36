//! Composite Gauss-Legendre quadrature.

use crate::scalar::Real;

#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    /// `n`-point rule on `[-1, 1]`. Nodes are found by Newton iteration on
    /// the Legendre polynomial in `f64` and then converted.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature needs at least one node");
        let mut nodes = vec![0.0_f64; n];
        let mut weights = vec![0.0_f64; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                if n == 1 {
                    p0 = 1.0;
                }
                dp = nf * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            weights[i] = w;
            nodes[n - 1 - i] = x;
            weights[n - 1 - i] = w;
        }
        Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        }
    }

    /// Integrates `f` over `[a, b]` split into `panels` equal pieces.
    pub fn integrate(&self, a: T, b: T, panels: usize, f: impl Fn(T) -> T) -> T {
        if b <= a {
            return T::zero();
        }
        let panels = panels.max(1);
        let width = (b - a) / T::from_usize(panels).unwrap();
        let half = width / T::lit(2.0);
        let mut total = T::zero();
        for k in 0..panels {
            let mid = a + half + width * T::from_usize(k).unwrap();
            let mut s = T::zero();
            for (&x, &w) in self.nodes.iter().zip(&self.weights) {
                s = s + w * f(mid + half * x);
            }
            total = total + s * half;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        let rule = GaussLegendre::<f64>::new(8);
        // degree 15 is exact for 8 nodes
        let v = rule.integrate(0.0, 2.0, 1, |x| x.powi(15));
        assert!((v - 2.0_f64.powi(16) / 16.0).abs() < 1e-9);
        let w = GaussLegendre::<f64>::new(1).integrate(0.0, 1.0, 1, |x| 3.0 * x);
        assert!((w - 1.5).abs() < 1e-15);
    }

    #[test]
    fn integrates_smooth_functions() {
        let rule = GaussLegendre::<f64>::new(16);
        let v = rule.integrate(0.0, std::f64::consts::PI, 4, f64::sin);
        assert!((v - 2.0).abs() < 1e-13);
        let g = rule.integrate(0.0, 6.0, 8, |x| 2.0 * x * (-x * x).exp());
        assert!((g - (1.0 - (-36.0_f64).exp())).abs() < 1e-13);
    }

    #[test]
    fn empty_interval_is_zero() {
        let rule = GaussLegendre::<f32>::new(4);
        assert_eq!(rule.integrate(1.0, 1.0, 3, |x| x), 0.0);
    }
}
