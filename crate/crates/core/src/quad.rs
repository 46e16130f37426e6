//! One-dimensional Gauss-Legendre quadrature, fixed and adaptive.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(z) and P_{n-1}(z)
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// A fixed Gauss-Legendre rule that can be reused over many intervals.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }

    /// Nodes mapped onto [a, b] with their scaled weights.
    pub fn points(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, w * half))
    }
}

/// Globally adaptive Gauss-Legendre quadrature. The interval with the largest
/// error estimate (15-point rule on the whole vs on its halves) is bisected
/// until the summed estimate falls below `tol` or a small multiple of machine
/// precision relative to the integral.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    thread_local! {
        static RULE: GaussLegendre = GaussLegendre::new(15);
    }
    const MAX_INTERVALS: usize = 4000;
    RULE.with(|rule| {
        let mut heap = BinaryHeap::new();
        let mut total = 0.0;
        let mut err = 0.0;
        let push = |heap: &mut BinaryHeap<Piece>, a: f64, b: f64, f: &mut F| {
            let mid = 0.5 * (a + b);
            let whole = rule.integrate(&mut *f, a, b);
            let left = rule.integrate(&mut *f, a, mid);
            let right = rule.integrate(&mut *f, mid, b);
            let value = left + right;
            let piece = Piece {
                a,
                b,
                value,
                err: (value - whole).abs(),
            };
            heap.push(piece);
            (value, piece.err)
        };
        let (v, e) = push(&mut heap, a, b, &mut f);
        total += v;
        err += e;
        while heap.len() < MAX_INTERVALS {
            if err <= tol.max(64.0 * f64::EPSILON * total.abs()) {
                break;
            }
            let worst = heap.pop().expect("heap is non-empty");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                heap.push(worst);
                break;
            }
            total -= worst.value;
            err -= worst.err;
            for (lo, hi) in [(worst.a, mid), (mid, worst.b)] {
                let (v, e) = push(&mut heap, lo, hi, &mut f);
                total += v;
                err += e;
            }
        }
        // re-sum to shed accumulated cancellation in the running total
        heap.iter().map(|p| p.value).sum()
    })
}

#[derive(Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_nodes_are_symmetric() {
        for n in [1, 2, 5, 15, 20, 64] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let rule = GaussLegendre::new(5);
        let v = rule.integrate(|x| x.powi(9) + 3.0 * x.powi(8), 0.0, 1.0);
        assert!((v - (0.1 + 3.0 / 9.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        // integral of 1/sqrt(x) over (0,1] is 2
        let v = adaptive(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((v - 2.0).abs() < 1e-6, "{v}");
        let g = adaptive(|x| (-x * x).exp(), -8.0, 8.0, 1e-14);
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }
}
