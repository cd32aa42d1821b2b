//! Quadrature rules on the reference triangle, the reference square and the unit interval.
//!
//! The reference triangle has vertices (0,0), (1,0), (0,1); the reference square is
//! `[0,1]^2`. Weights sum to the reference measure (1/2 and 1 respectively).

use crate::mesh::{ElementKind, Point};

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    /// Polynomial degree integrated exactly.
    pub degree: usize,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Rule on the reference cell of `kind` exact for polynomials of degree `degree`.
    pub fn for_kind(kind: ElementKind, degree: usize) -> Self {
        match kind {
            ElementKind::Triangle => Self::triangle(degree),
            ElementKind::Quad => Self::square(degree),
        }
    }

    /// Symmetric Dunavant rules up to degree 5, collapsed Gauss products above that.
    pub fn triangle(degree: usize) -> Self {
        match degree {
            0 | 1 => Self::from_orbits(1, &[(1.0, Orbit::Centroid)]),
            2 => Self::from_orbits(2, &[(1.0 / 3.0, Orbit::Edge(2.0 / 3.0, 1.0 / 6.0))]),
            3 | 4 => Self::from_orbits(
                4,
                &[
                    (0.223381589678011, Orbit::Edge(0.108103018168070, 0.445948490915965)),
                    (0.109951743655322, Orbit::Edge(0.816847572980459, 0.091576213509771)),
                ],
            ),
            5 => Self::from_orbits(
                5,
                &[
                    (0.225, Orbit::Centroid),
                    (0.132394152788506, Orbit::Edge(0.059715871789770, 0.470142064105115)),
                    (0.125939180544827, Orbit::Edge(0.797426985353087, 0.101286507323456)),
                ],
            ),
            _ => Self::collapsed(degree),
        }
    }

    /// Tensor Gauss-Legendre rule on the unit square.
    pub fn square(degree: usize) -> Self {
        let (x, w) = gauss_legendre(degree / 2 + 1);
        let mut points = Vec::with_capacity(x.len() * x.len());
        let mut weights = Vec::with_capacity(x.len() * x.len());
        for j in 0..x.len() {
            for i in 0..x.len() {
                points.push([x[i], x[j]]);
                weights.push(w[i] * w[j]);
            }
        }
        QuadratureRule { points, weights, degree: 2 * x.len() - 1 }
    }

    /// Gauss-Legendre rule on `[0,1]`, stored with the coordinate in `points[q][0]`.
    pub fn interval(degree: usize) -> Self {
        let (x, w) = gauss_legendre(degree / 2 + 1);
        QuadratureRule {
            points: x.iter().map(|&t| [t, 0.0]).collect(),
            degree: 2 * x.len() - 1,
            weights: w,
        }
    }

    /// Duffy-collapsed product rule: `(u, v) -> (u, v (1 - u))` with Jacobian `1 - u`.
    fn collapsed(degree: usize) -> Self {
        let n = degree / 2 + 1;
        let (xu, wu) = gauss_legendre(n + 1);
        let (xv, wv) = gauss_legendre(n);
        let mut points = Vec::with_capacity(xu.len() * xv.len());
        let mut weights = Vec::with_capacity(xu.len() * xv.len());
        for i in 0..xu.len() {
            for j in 0..xv.len() {
                points.push([xu[i], xv[j] * (1.0 - xu[i])]);
                weights.push(wu[i] * wv[j] * (1.0 - xu[i]));
            }
        }
        QuadratureRule { points, weights, degree: 2 * n - 1 }
    }

    fn from_orbits(degree: usize, orbits: &[(f64, Orbit)]) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, orbit) in orbits {
            match orbit {
                Orbit::Centroid => {
                    points.push([1.0 / 3.0, 1.0 / 3.0]);
                    weights.push(0.5 * w);
                }
                Orbit::Edge(a, b) => {
                    // barycentric (a, b, b) and its distinct permutations; x = l2, y = l3
                    for bary in [[a, b, b], [b, a, b], [b, b, a]] {
                        points.push([bary[1], bary[2]]);
                        weights.push(0.5 * w);
                    }
                }
            }
        }
        QuadratureRule { points, weights, degree }
    }
}

#[derive(Clone, Copy)]
enum Orbit {
    Centroid,
    Edge(f64, f64),
}

/// Gauss-Legendre nodes and weights on `[0,1]` with `n` points.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let dp = legendre_with_derivative(n, z).1;
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        // map from [-1,1] to [0,1], ascending order
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * weight;
        w[n - 1 - i] = 0.5 * weight;
    }
    (x, w)
}

/// Gauss-Lobatto nodes on `[0,1]` with `n >= 2` points, endpoints included, ascending.
pub fn gauss_lobatto(n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let deg = n - 1;
    let mut x = vec![0.0; n];
    x[n - 1] = 1.0;
    for i in 1..n - 1 {
        // interior nodes are roots of P'_deg; start from Chebyshev-Gauss-Lobatto points
        let mut z = -(std::f64::consts::PI * i as f64 / deg as f64).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_with_derivative(deg, z);
            // P''(z) from the Legendre equation (1 - z^2) P'' = 2 z P' - deg (deg + 1) P
            let d2p = (2.0 * z * dp - (deg * (deg + 1)) as f64 * p) / (1.0 - z * z);
            let dz = dp / d2p;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = 0.5 * (1.0 + z);
    }
    x
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let p2 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p0) / (k + 1) as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = if (1.0 - z * z).abs() < 1e-300 {
        let s = if z > 0.0 || n % 2 == 1 { 1.0 } else { -1.0 };
        s * (n * (n + 1)) as f64 / 2.0
    } else {
        n as f64 * (z * p1 - p0) / (z * z - 1.0)
    };
    (p1, dp)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Exact integral of x^a y^b over the reference triangle: a! b! / (a + b + 2)!.
    fn tri_monomial(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    fn integrate(rule: &QuadratureRule, f: impl Fn(Point) -> f64) -> f64 {
        rule.points.iter().zip(&rule.weights).map(|(p, w)| w * f(*p)).sum()
    }

    #[test]
    fn triangle_rules_are_exact() {
        for degree in 0..=18 {
            let rule = QuadratureRule::triangle(degree);
            assert!(rule.degree >= degree);
            assert!((rule.weights.iter().sum::<f64>() - 0.5).abs() < 1e-14);
            for a in 0..=degree {
                for b in 0..=degree - a {
                    let q = integrate(&rule, |p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    let exact = tri_monomial(a, b);
                    assert!(
                        (q - exact).abs() <= 1e-13 * exact.max(1e-3),
                        "degree {degree}, x^{a} y^{b}: {q} vs {exact}"
                    );
                }
            }
            for p in &rule.points {
                assert!(p[0] >= 0.0 && p[1] >= 0.0 && p[0] + p[1] <= 1.0);
            }
        }
    }

    #[test]
    fn square_rules_are_exact() {
        for degree in 0..=20 {
            let rule = QuadratureRule::square(degree);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for a in 0..=degree {
                for b in 0..=degree {
                    let q = integrate(&rule, |p| p[0].powi(a as i32) * p[1].powi(b as i32));
                    let exact = 1.0 / ((a + 1) * (b + 1)) as f64;
                    assert!((q - exact).abs() <= 1e-13 * exact, "{degree} {a} {b}");
                }
            }
        }
    }

    #[test]
    fn lobatto_nodes() {
        assert_eq!(gauss_lobatto(2), vec![0.0, 1.0]);
        let x = gauss_lobatto(3);
        assert!((x[1] - 0.5).abs() < 1e-15);
        // 4-point nodes on [-1,1] are +-1, +-1/sqrt(5)
        let x = gauss_lobatto(4);
        assert!((x[1] - 0.5 * (1.0 - 1.0 / 5f64.sqrt())).abs() < 1e-15);
        for n in 2..12 {
            let x = gauss_lobatto(n);
            for i in 0..n {
                assert!((x[i] + x[n - 1 - i] - 1.0).abs() < 1e-14);
                if i > 0 {
                    assert!(x[i] > x[i - 1]);
                }
            }
        }
    }
}
