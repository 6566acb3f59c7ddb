//! Gauss-Legendre rules, breakpoint-aware panel splitting and the
//! series-guarded hyperbolic helpers used throughout the kernels.

/// Gauss-Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, found by Newton iteration from the
    /// Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(x, w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if a == b {
            return 0.0;
        }
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Splits `[a, b]` at every knot strictly inside it and further so that no
/// panel is wider than `max_width`.
pub fn panels(a: f64, b: f64, knots: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    let mut cuts = vec![a];
    cuts.extend(knots.iter().copied().filter(|&k| k > a && k < b));
    cuts.push(b);
    let mut out = Vec::with_capacity(cuts.len());
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let h = (hi - lo) / pieces as f64;
        for i in 0..pieces {
            let p_lo = lo + i as f64 * h;
            let p_hi = if i + 1 == pieces {
                hi
            } else {
                lo + (i + 1) as f64 * h
            };
            out.push((p_lo, p_hi));
        }
    }
    out
}

/// `sinh(γx)/γ`, switching to its Taylor series below `floor`.
pub fn sinh_over(gamma: f64, x: f64, floor: f64) -> f64 {
    if gamma.abs() < floor {
        let g2x2 = gamma * gamma * x * x;
        x * (1.0 + g2x2 / 6.0 * (1.0 + g2x2 / 20.0))
    } else {
        (gamma * x).sinh() / gamma
    }
}

/// `cosh(γx) - 1` without cancellation.
pub fn cosh_minus_one(gamma: f64, x: f64, floor: f64) -> f64 {
    if gamma.abs() < floor {
        let g2x2 = gamma * gamma * x * x;
        0.5 * g2x2 * (1.0 + g2x2 / 12.0)
    } else {
        let s = (0.5 * gamma * x).sinh();
        2.0 * s * s
    }
}

/// `(1 - exp(-2αh)) / (2α)`, the OU variance factor, stable as `α -> 0`.
pub fn ou_variance_factor(alpha: f64, h: f64) -> f64 {
    let x = 2.0 * alpha * h;
    if x.abs() < 1e-8 {
        h * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / (2.0 * alpha)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_polynomials_exactly() {
        for n in [4, 7, 20, 64] {
            let gl = GaussLegendre::new(n);
            let wsum: f64 = gl.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14, "n={n} weight sum {wsum}");
            let deg = 2 * n - 1;
            let got = gl.integrate(0.0, 2.0, |x| x.powi(deg as i32));
            let exact = 2f64.powi(deg as i32 + 1) / (deg as f64 + 1.0);
            assert!(((got - exact) / exact).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn integrates_exponential() {
        let gl = GaussLegendre::new(20);
        let got = gl.integrate(0.0, 3.0, f64::exp);
        assert!((got - (3f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn panels_respect_knots_and_width() {
        let p = panels(0.2, 2.0, &[0.0, 1.0, 1.1, 3.0], 0.5);
        assert_eq!(p.first().unwrap().0, 0.2);
        assert_eq!(p.last().unwrap().1, 2.0);
        assert!(p.iter().any(|&(_, b)| b == 1.0));
        assert!(p.iter().any(|&(a, _)| a == 1.1));
        assert!(p.iter().all(|&(a, b)| b > a && b - a <= 0.5 + 1e-15));
        assert!(p.windows(2).all(|w| w[0].1 == w[1].0));
    }

    #[test]
    fn hyperbolic_guards_are_continuous_at_floor() {
        let floor = 1e-6;
        for x in [-0.05, 0.002, 0.3] {
            let below = sinh_over(floor * (1.0 - 1e-12), x, floor);
            let above = sinh_over(floor, x, floor);
            assert!((below - above).abs() < 1e-12 * x.abs().max(1e-3));
            let below = cosh_minus_one(floor * (1.0 - 1e-12), x, floor);
            let above = cosh_minus_one(floor, x, floor);
            assert!((below - above).abs() < 1e-24);
        }
        assert_eq!(sinh_over(0.0, 0.7, 1e-8), 0.7);
        assert_eq!(cosh_minus_one(0.0, 0.7, 1e-8), 0.0);
    }
}
