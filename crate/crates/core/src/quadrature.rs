//! Gauss–Legendre rules on the unit interval.

use crate::scalar::Scalar;

/// Default order for black-box convex functions.
pub const DEFAULT_ORDER: usize = 16;

/// Nodes and weights of an `order`-point Gauss–Legendre rule mapped to [0, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Scalar> GaussLegendre<T> {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be positive");
        let (x, w) = legendre_nodes(order);
        let nodes = x.iter().map(|&x| T::lit(0.5 * (x + 1.0))).collect();
        let weights = w.iter().map(|&w| T::lit(0.5 * w)).collect();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// ∫₀¹ f(t) dt.
    pub fn integrate_unit<F: Fn(T) -> T>(&self, f: F) -> T {
        self.nodes.iter().zip(&self.weights).fold(T::zero(), |acc, (&t, &w)| acc + w * f(t))
    }

    /// ∫ₐᵇ f(t) dt.
    pub fn integrate<F: Fn(T) -> T>(&self, a: T, b: T, f: F) -> T {
        let h = b - a;
        h * self.integrate_unit(|t| f(a + h * t))
    }
}

/// Nodes and weights on [-1, 1], computed in f64 by Newton iteration on the
/// three-term Legendre recurrence.
fn legendre_nodes(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, z);
                dp = d;
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        for order in [1, 2, 5, 16, 64] {
            let q = GaussLegendre::<f64>::new(order);
            let s: f64 = q.weights().iter().sum();
            assert!((s - 1.0).abs() < 1e-14, "order {order}: {s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let q = GaussLegendre::<f64>::new(16);
        for deg in 0..32 {
            let got = q.integrate_unit(|t| t.powi(deg));
            let want = 1.0 / (deg as f64 + 1.0);
            assert!((got - want).abs() < 1e-14, "degree {deg}: {got} vs {want}");
        }
    }

    #[test]
    fn nodes_are_symmetric_and_inside() {
        let q = GaussLegendre::<f64>::new(7);
        let xs = q.nodes();
        for i in 0..7 {
            assert!(xs[i] > 0.0 && xs[i] < 1.0);
            assert!((xs[i] + xs[6 - i] - 1.0).abs() < 1e-15);
        }
        assert!((xs[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn integrates_exponential() {
        let q = GaussLegendre::<f64>::new(16);
        let got = q.integrate(0.0, 2.0, f64::exp);
        assert!((got - (2f64.exp() - 1.0)).abs() < 1e-13);
        let q32 = GaussLegendre::<f32>::new(16);
        let got32 = q32.integrate(0.0f32, 1.0, |t| t * t);
        assert!((got32 - 1.0 / 3.0).abs() < 1e-6);
    }
}
