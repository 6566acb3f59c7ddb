//! Perturbative Green's function `G₀ + G₁` and payoff convolution.
//!
//! `G₀` is the Hull-White Gaussian in `(η, ζ)` with mean
//! `(φ_r(t,v) y, z + μ*(y,t,v))` and covariance `Σ(t,v)`. The first-order
//! term applies the shift operators and `𝒬` to `∂_z G₀` in closed form:
//! with `w = x - mean`, `u = Σ⁻¹w`,
//!
//! ```text
//! G₁ = G₀ · { Σ_j W_j ψ_j e^{-½γ_j² dᵀΣ⁻¹d} [u₂ sinh(γ_j(c_j + dᵀu))/γ_j - (Σ⁻¹d)₂ cosh(γ_j(c_j + dᵀu))]
//!             + (∫R*₁ - μ*) u₂ - Σ_rz (u₁u₂ - P₁₂) - Σ_zz (u₂² - P₂₂) }
//! ```
//!
//! where `j` runs over quadrature nodes `t₁ ∈ [t, v]`, `c = φ_r(t,t₁)y + y*(t₁)`
//! and `d` is the `(η, ζ)` image of the shift `(Δy, Δz)`. Convolutions run
//! in Cholesky-whitened coordinates on a Gauss-Legendre tensor grid.

use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::error::{check_order, Error, Result};
use crate::kernels::KernelSet;
use crate::quadrature::{cosh_minus_one, sinh_over, GaussLegendre};

/// Bivariate normal distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian2D {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
    l11: f64,
    l21: f64,
    l22: f64,
}

impl Gaussian2D {
    pub fn new(mean: [f64; 2], cov: [[f64; 2]; 2]) -> Result<Self> {
        let l11 = cov[0][0].sqrt();
        let l21 = cov[1][0] / l11;
        let l22 = (cov[1][1] - l21 * l21).sqrt();
        if !(l11 > 0.0 && l22 > 0.0) || (cov[0][1] - cov[1][0]).abs() > 1e-15 * cov[0][1].abs() {
            return Err(Error::InvalidParam(format!(
                "covariance {cov:?} is not symmetric positive definite"
            )));
        }
        Ok(Self {
            mean,
            cov,
            l11,
            l21,
            l22,
        })
    }

    /// `s = L⁻¹(x - mean)` with `LLᵀ = cov`.
    pub fn whiten(&self, x: [f64; 2]) -> [f64; 2] {
        let s1 = (x[0] - self.mean[0]) / self.l11;
        [s1, (x[1] - self.mean[1] - self.l21 * s1) / self.l22]
    }

    /// `x = mean + L s`.
    pub fn color(&self, s: [f64; 2]) -> [f64; 2] {
        [
            self.mean[0] + self.l11 * s[0],
            self.mean[1] + self.l21 * s[0] + self.l22 * s[1],
        ]
    }

    pub fn density(&self, x: [f64; 2]) -> f64 {
        let s = self.whiten(x);
        (-0.5 * (s[0] * s[0] + s[1] * s[1])).exp() / (2.0 * std::f64::consts::PI * self.l11 * self.l22)
    }

    /// `L⁻¹ d`.
    fn solve(&self, d: [f64; 2]) -> [f64; 2] {
        let e1 = d[0] / self.l11;
        [e1, (d[1] - self.l21 * e1) / self.l22]
    }
}

/// Tensor Gauss-Legendre grid over `[-box_sd, box_sd]²` in whitened
/// coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffGrid {
    pub box_sd: f64,
    pub nodes: usize,
}

impl Default for PayoffGrid {
    fn default() -> Self {
        Self {
            box_sd: 10.0,
            nodes: 200,
        }
    }
}

impl PayoffGrid {
    pub fn validate(&self) -> Result<()> {
        if self.box_sd < 8.0 {
            return Err(Error::InvalidParam(format!(
                "payoff box must cover at least 8 standard deviations, got {}",
                self.box_sd
            )));
        }
        if self.nodes < 8 {
            return Err(Error::InvalidParam("payoff grid needs at least 8 nodes".into()));
        }
        Ok(())
    }

    fn rule(&self) -> Vec<(f64, f64)> {
        GaussLegendre::new(self.nodes)
            .mapped(-self.box_sd, self.box_sd)
            .map(|(s, w)| (s, w * (-0.5 * s * s).exp() / (2.0 * std::f64::consts::PI).sqrt()))
            .collect()
    }
}

/// A payoff in `(η, ζ)`. `growth` is the exponential rate of the payoff in
/// each coordinate, used to check that the box captures the tilted mass.
pub struct Payoff<'a> {
    f: Box<dyn Fn(f64, f64) -> f64 + Sync + 'a>,
    growth: [f64; 2],
}

impl<'a> Payoff<'a> {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Sync + 'a) -> Self {
        Self {
            f: Box::new(f),
            growth: [0.0, 0.0],
        }
    }

    pub fn with_growth(mut self, growth: [f64; 2]) -> Self {
        self.growth = growth;
        self
    }

    pub fn eval(&self, eta: f64, zeta: f64) -> f64 {
        (self.f)(eta, zeta)
    }

    /// 3M SOFR futures payoff `e^{ζ - z}/D - 1` on the period increment.
    pub fn sofr_3m(discount: f64) -> Payoff<'static> {
        Payoff::new(move |_, zeta| zeta.exp() / discount - 1.0).with_growth([0.0, 1.0])
    }

    /// 1M SOFR futures payoff `ζ - z - log D` on the period increment;
    /// `forward` is `-log D = ∫r̄`.
    pub fn sofr_1m(forward: f64) -> Payoff<'static> {
        Payoff::new(move |_, zeta| zeta + forward)
    }
}

/// The two orders of a convolution `∬(G₀ + G₁) P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convolution {
    pub zeroth: f64,
    pub first: f64,
}

impl Convolution {
    pub fn total(&self) -> f64 {
        self.zeroth + self.first
    }
}

#[derive(Debug, Clone, Copy)]
struct SkewTerm {
    amplitude: f64,
    gamma: f64,
    c: f64,
    e: [f64; 2],
}

#[derive(Debug, Clone)]
struct Correction {
    terms: Vec<SkewTerm>,
    linear: f64,
    srz: f64,
    szz: f64,
    floor: f64,
}

/// `G₀ + G₁` from the state `(y, z)` at `t` to `(η, ζ)` at `v`.
#[derive(Debug, Clone)]
pub struct GreenFunction {
    t: f64,
    v: f64,
    /// `None` when `σ ≡ 0` on `[t, v]`: the kernel is a point mass.
    gauss: Option<Gaussian2D>,
    correction: Option<Correction>,
    /// Point-mass location in the deterministic limit.
    path_end: [f64; 2],
}

impl GreenFunction {
    pub fn new(k: &KernelSet, y: f64, z: f64, t: f64, v: f64) -> Result<Self> {
        check_order("green_function", 0.0, t)?;
        if t >= v {
            return Err(Error::ArgumentOrder {
                op: "green_function",
                detail: format!("t={t} must be < v={v}"),
            });
        }
        let drift = k.integrate(t, v, |u| {
            k.sinh_over(k.gamma(u), k.phi(t, u) * y + k.y_star(u)) + k.rstar(u)
        });
        let path_end = [k.phi(t, v) * y, z + drift];
        let srr = k.srr(t, v);
        if srr <= 0.0 {
            return Ok(Self {
                t,
                v,
                gauss: None,
                correction: None,
                path_end,
            });
        }
        let mu = k.mu(y, t, v);
        let cov = k.covariance(t, v)?;
        let gauss = Gaussian2D::new([k.phi(t, v) * y, z + mu], cov)
            .map_err(|_| Error::DegenerateCovariance { t, v })?;

        let phi_tv = k.phi(t, v);
        let b_tv = k.bstar(t, v);
        let mut r_star = 0.0;
        let terms = k
            .nodes(t, v)
            .into_iter()
            .map(|(u, w)| {
                r_star += w * k.rstar(u);
                let gamma = k.gamma(u);
                let s = k.srr(t, u) / k.phi(t, u);
                let d = [phi_tv * s, b_tv * s + k.srz(t, u) - k.bstar(t, u) * s];
                let e = gauss.solve(d);
                SkewTerm {
                    amplitude: w * k.psi(t, u) * (-0.5 * gamma * gamma * (e[0] * e[0] + e[1] * e[1])).exp(),
                    gamma,
                    c: k.phi(t, u) * y + k.y_star(u),
                    e,
                }
            })
            .collect();
        Ok(Self {
            t,
            v,
            gauss: Some(gauss),
            correction: Some(Correction {
                terms,
                linear: r_star - mu,
                srz: cov[0][1],
                szz: cov[1][1],
                floor: k.gamma_floor(),
            }),
            path_end,
        })
    }

    pub fn gaussian(&self) -> Option<&Gaussian2D> {
        self.gauss.as_ref()
    }

    fn require(&self) -> Result<(&Gaussian2D, &Correction)> {
        match (&self.gauss, &self.correction) {
            (Some(g), Some(c)) => Ok((g, c)),
            _ => Err(Error::DegenerateCovariance { t: self.t, v: self.v }),
        }
    }

    pub fn g0(&self, eta: f64, zeta: f64) -> Result<f64> {
        let (g, _) = self.require()?;
        Ok(g.density([eta, zeta]))
    }

    pub fn g1(&self, eta: f64, zeta: f64) -> Result<f64> {
        let (g, c) = self.require()?;
        let x = [eta, zeta];
        Ok(g.density(x) * c.ratio(g, g.whiten(x)))
    }

    /// `∬ G₀ P` and `∬ G₁ P`; a point mass in the deterministic limit.
    pub fn convolve(&self, payoff: &Payoff, grid: &PayoffGrid) -> Result<Convolution> {
        let Some(gauss) = &self.gauss else {
            return Ok(Convolution {
                zeroth: payoff.eval(self.path_end[0], self.path_end[1]),
                first: 0.0,
            });
        };
        self.check_box(gauss, payoff.growth, grid)?;
        Ok(self.integrate(grid, |_, x| payoff.eval(x[0], x[1])))
    }

    fn check_box(&self, gauss: &Gaussian2D, growth: [f64; 2], grid: &PayoffGrid) -> Result<()> {
        grid.validate()?;
        // Mean of the exponentially tilted measure in whitened coordinates.
        let shift = [
            gauss.l11 * growth[0] + gauss.l21 * growth[1],
            gauss.l22 * growth[1],
        ];
        let inside: f64 = shift
            .iter()
            .map(|m| {
                let b = grid.box_sd;
                1.0 - 0.5 * erfc((b - m) / std::f64::consts::SQRT_2)
                    - 0.5 * erfc((b + m) / std::f64::consts::SQRT_2)
            })
            .product();
        let mass = 1.0 - inside;
        let limit = if growth == [0.0, 0.0] { 1e-10 } else { 1e-8 };
        if mass > limit {
            return Err(Error::BoxTooNarrow {
                box_sd: grid.box_sd,
                mass,
            });
        }
        Ok(())
    }

    /// Tensor-grid integral of `f` against `G₀` and `G₁`. `f` receives the
    /// index of the `η` node, which depends on the first whitened
    /// coordinate only.
    fn integrate<F: Fn(usize, [f64; 2]) -> f64 + Sync>(&self, grid: &PayoffGrid, f: F) -> Convolution {
        let (gauss, corr) = self.require().expect("non-degenerate kernel");
        let rule = grid.rule();
        let (zeroth, first) = rule
            .par_iter()
            .enumerate()
            .map(|(i, &(s1, w1))| {
                let mut a = 0.0;
                let mut b = 0.0;
                for &(s2, w2) in &rule {
                    let s = [s1, s2];
                    let p = w1 * w2 * f(i, gauss.color(s));
                    a += p;
                    b += p * corr.ratio(gauss, s);
                }
                (a, b)
            })
            .reduce(|| (0.0, 0.0), |x, y| (x.0 + y.0, x.1 + y.1));
        Convolution { zeroth, first }
    }

    /// `η` coordinates of the grid nodes, in the order passed to `integrate`.
    fn eta_nodes(&self, grid: &PayoffGrid) -> Vec<f64> {
        let gauss = self.gauss.as_ref().expect("non-degenerate kernel");
        grid.rule()
            .iter()
            .map(|&(s1, _)| gauss.color([s1, 0.0])[0])
            .collect()
    }
}

impl Correction {
    /// `G₁ / G₀` at whitened point `s`.
    fn ratio(&self, g: &Gaussian2D, s: [f64; 2]) -> f64 {
        let u2 = s[1] / g.l22;
        let u1 = (s[0] - g.l21 * u2) / g.l11;
        let p12 = -g.l21 / (g.l11 * g.l22 * g.l22);
        let p22 = 1.0 / (g.l22 * g.l22);
        let skew: f64 = self
            .terms
            .iter()
            .map(|t| {
                let x = t.c + t.e[0] * s[0] + t.e[1] * s[1];
                let k2 = t.e[1] / g.l22;
                let cosh = 1.0 + cosh_minus_one(t.gamma, x, self.floor);
                t.amplitude * (u2 * sinh_over(t.gamma, x, self.floor) - k2 * cosh)
            })
            .sum();
        skew + self.linear * u2 - self.srz * (u1 * u2 - p12) - self.szz * (u2 * u2 - p22)
    }
}

/// `∬ (G₀ + G₁) P` from `(y, z)` at `t` to `v`.
pub fn convolve_price(
    k: &KernelSet,
    payoff: &Payoff,
    y: f64,
    z: f64,
    t: f64,
    v: f64,
    grid: &PayoffGrid,
) -> Result<f64> {
    Ok(GreenFunction::new(k, y, z, t, v)?.convolve(payoff, grid)?.total())
}

/// Two-stage value of a payoff on the accrual increment `z_{T₂} - z_{T₁}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StagedPrice {
    pub value: f64,
    /// Contribution of the outer `G₁` against the `ζ`-independent inner
    /// value; it should vanish.
    pub outer_first_order: f64,
}

/// Prices in two stages: the inner convolution over `[T₁, T₂]` gives the
/// value at `T₁` as a function of `y_{T₁}`, which is then convolved over
/// `[t, T₁]`. `payoff` receives `(η, ζ)` at `T₂` with `ζ` measured from
/// `z_{T₁}`.
pub fn staged_price(
    k: &KernelSet,
    payoff: &Payoff,
    y: f64,
    t: f64,
    t1: f64,
    t2: f64,
    grid: &PayoffGrid,
) -> Result<StagedPrice> {
    check_order("staged_price", t, t1)?;
    let inner = |eta: f64| -> Result<f64> {
        GreenFunction::new(k, eta, 0.0, t1, t2)?
            .convolve(payoff, grid)
            .map(|c| c.total())
    };
    if t == t1 {
        return Ok(StagedPrice {
            value: inner(y)?,
            outer_first_order: 0.0,
        });
    }
    let outer = GreenFunction::new(k, y, 0.0, t, t1)?;
    let Some(gauss) = outer.gaussian() else {
        return Ok(StagedPrice {
            value: inner(outer.path_end[0])?,
            outer_first_order: 0.0,
        });
    };
    // The inner value grows like e^{B*(T₁,T₂)η} for exponential payoffs.
    outer.check_box(gauss, [payoff.growth[1] * k.bstar(t1, t2), 0.0], grid)?;
    let values: Vec<f64> = outer
        .eta_nodes(grid)
        .par_iter()
        .map(|&eta| inner(eta))
        .collect::<Result<_>>()?;
    let conv = outer.integrate(grid, |i, _| values[i]);
    Ok(StagedPrice {
        value: conv.total(),
        outer_first_order: conv.first,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termstructure::ModelParams;

    fn desk() -> KernelSet {
        KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 5.0)).unwrap()
    }

    fn grid() -> PayoffGrid {
        PayoffGrid {
            box_sd: 10.0,
            nodes: 96,
        }
    }

    #[test]
    fn gaussian_whitening_round_trips() {
        let g = Gaussian2D::new([0.1, -0.2], [[2.0, 0.6], [0.6, 0.5]]).unwrap();
        let x = [0.7, 0.05];
        let back = g.color(g.whiten(x));
        assert!((back[0] - x[0]).abs() < 1e-15 && (back[1] - x[1]).abs() < 1e-15);
        assert!(Gaussian2D::new([0.0, 0.0], [[1.0, 1.0], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn moments_of_g0() {
        let k = desk();
        let (y, t, v) = (0.004, 0.25, 1.0);
        let gf = GreenFunction::new(&k, y, 0.0, t, v).unwrap();
        let g = grid();
        let mass = gf.integrate(&g, |_, _| 1.0);
        assert!((mass.zeroth - 1.0).abs() < 1e-10);
        assert!(mass.first.abs() < 1e-8);
        let eta = gf.integrate(&g, |_, x| x[0]).zeroth;
        assert!((eta - k.phi_r(t, v).unwrap() * y).abs() < 1e-8);
        let cov = k.covariance(t, v).unwrap();
        let mean = gf.gaussian().unwrap().mean;
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let m = gf
                .integrate(&g, |_, x| (x[i] - mean[i]) * (x[j] - mean[j]))
                .zeroth;
            assert!(
                (m - cov[i][j]).abs() < 1e-8 * cov[i][i].max(cov[j][j]),
                "({i},{j})"
            );
        }
    }

    #[test]
    fn pointwise_densities_are_consistent() {
        let k = desk();
        let gf = GreenFunction::new(&k, 0.0, 0.0, 0.5, 0.75).unwrap();
        let g = gf.gaussian().unwrap();
        let x = g.color([0.3, -1.1]);
        let g0 = gf.g0(x[0], x[1]).unwrap();
        assert!((g0 - g.density(x)).abs() < 1e-12 * g0);
        let g1 = gf.g1(x[0], x[1]).unwrap();
        assert!(g1.is_finite() && g1.abs() < g0);
    }

    #[test]
    fn hull_white_limit_shifts_the_mean_by_half_szz() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 0.0, 0.0, 0.02, 5.0)).unwrap();
        let (y, t, v) = (0.003, 0.2, 1.2);
        let mean = convolve_price(&k, &Payoff::new(|_, z| z), y, 0.0, t, v, &grid()).unwrap();
        let exact = k.mu_star(y, t, v).unwrap() + 0.5 * k.sigma_zz(t, v).unwrap();
        assert!((mean - exact).abs() < 1e-12, "{mean} vs {exact}");
    }

    #[test]
    fn deterministic_limit_is_a_point_mass() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.0, 20.0, -0.002, 0.02, 5.0)).unwrap();
        let gf = GreenFunction::new(&k, 0.01, 0.0, 0.0, 1.0).unwrap();
        assert!(matches!(gf.g0(0.0, 0.0), Err(Error::DegenerateCovariance { .. })));
        let d = k.params().discount(0.5, 0.75).unwrap();
        let p = staged_price(&k, &Payoff::sofr_3m(d), 0.0, 0.0, 0.5, 0.75, &grid()).unwrap();
        assert!((p.value - (1.0 / d - 1.0)).abs() < 1e-15);
    }

    #[test]
    fn narrow_box_is_rejected() {
        let k = desk();
        let gf = GreenFunction::new(&k, 0.0, 0.0, 0.0, 1.0).unwrap();
        let narrow = PayoffGrid {
            box_sd: 5.0,
            nodes: 40,
        };
        assert!(gf.convolve(&Payoff::new(|_, _| 1.0), &narrow).is_err());
        let steep = Payoff::new(|_, z| (z * 2000.0).exp()).with_growth([0.0, 2000.0]);
        assert!(matches!(
            gf.convolve(&steep, &grid()),
            Err(Error::BoxTooNarrow { .. })
        ));
    }

    #[test]
    fn outer_first_order_vanishes_for_eta_only_values() {
        let k = desk();
        let gf = GreenFunction::new(&k, 0.002, 0.0, 0.0, 0.5).unwrap();
        let c = gf.integrate(&grid(), |_, x| (3.0 * x[0]).exp() + x[0] * x[0]);
        assert!(c.first.abs() < 1e-8 * c.zeroth.abs(), "{c:?}");
    }

    #[test]
    fn one_stage_convolution_matches_closed_forms() {
        use crate::pricing::{price_sofr_1m, price_sofr_3m};
        let k = desk();
        let (t1, t2, y) = (0.5, 0.75, 0.001);
        let d = k.params().discount(t1, t2).unwrap();
        let fwd = k.params().forward_integral(t1, t2).unwrap();
        let eps = k.epsilon_until(t2).epsilon;
        let c3 = convolve_price(&k, &Payoff::sofr_3m(d), y, 0.0, t1, t2, &grid()).unwrap();
        let a3 = price_sofr_3m(&k, y, t1, t1, t2).unwrap().total;
        assert!(
            (c3 - a3).abs() <= 2.0 * eps * eps * a3.abs() + 1e-6,
            "{c3} vs {a3}"
        );
        let c1 = convolve_price(&k, &Payoff::sofr_1m(fwd), y, 0.0, t1, t2, &grid()).unwrap();
        let a1 = price_sofr_1m(&k, y, t1, t1, t2).unwrap().total;
        assert!((c1 - a1).abs() < 1e-12, "{c1} vs {a1}");
    }
}
