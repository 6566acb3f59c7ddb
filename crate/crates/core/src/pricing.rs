//! Closed-form first-order prices: backward-looking 1M and 3M SOFR futures,
//! zero-coupon bonds and forwards, forward-looking (Eurodollar) futures and
//! the Hull-White baselines.

use crate::error::{check_order, Error, Result};
use crate::kernels::KernelSet;
use crate::quadrature::sinh_over;
use crate::termstructure::{ContractKind, ContractSpec};

/// Exponents above this are rejected as unrealistic parameter sets.
pub const OVERFLOW_EXPONENT: f64 = 50.0;

/// A price split into its zeroth- and first-order parts, together with the
/// value the convexity is measured against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceBreakdown {
    pub v0: f64,
    pub v1: f64,
    pub total: f64,
    pub reference: f64,
    pub convexity: f64,
}

impl PriceBreakdown {
    fn new(v0: f64, v1: f64, reference: f64) -> Self {
        let total = v0 + v1;
        Self {
            v0,
            v1,
            total,
            reference,
            convexity: total - reference,
        }
    }
}

fn check_horizon(k: &KernelSet, t: f64) -> Result<()> {
    let horizon = k.params().horizon;
    if t > horizon * (1.0 + 1e-12) {
        Err(Error::BeyondHorizon { t, horizon })
    } else {
        Ok(())
    }
}

fn check_period(op: &'static str, k: &KernelSet, t: f64, t1: f64, t2: f64) -> Result<()> {
    check_order(op, 0.0, t)?;
    check_order(op, t, t1)?;
    if t1 >= t2 {
        return Err(Error::ArgumentOrder {
            op,
            detail: format!("T1={t1} must be < T2={t2}"),
        });
    }
    check_horizon(k, t2)
}

fn guarded_exp(exponent: f64) -> Result<f64> {
    if exponent > OVERFLOW_EXPONENT || !exponent.is_finite() {
        Err(Error::Overflow { exponent })
    } else {
        Ok(exponent.exp())
    }
}

/// `∫_a^b [ψ_r(t,t₁) sinh(γ(t₁) x(t₁))/γ(t₁) + R*₁(t₁)] dt₁`.
fn skew_integral<F: Fn(f64) -> f64>(k: &KernelSet, t: f64, a: f64, b: f64, arg: F) -> f64 {
    k.integrate(a, b, |t1| {
        k.psi(t, t1) * k.sinh_over(k.gamma(t1), arg(t1)) + k.rstar(t1)
    })
}

/// 3M (compounded) SOFR futures, `V = E[e^{z_{T₂}-z_{T₁}}]/D(T₁,T₂) - 1`.
pub fn price_sofr_3m(k: &KernelSet, y: f64, t: f64, t1: f64, t2: f64) -> Result<PriceBreakdown> {
    check_period("price_sofr_3m", k, t, t1, t2)?;
    let d = k.params().discount(t1, t2)?;
    let y_t1 = k.phi(t, t1) * y;
    let b = k.bstar(t1, t2);
    let srr = k.srr(t, t1);
    let mu = k.mu(y_t1, t1, t2);
    let vc = b * b * srr + k.szz(t1, t2);
    let growth = guarded_exp(mu + 0.5 * vc)? / d;

    let integral = skew_integral(k, t, t1, t2, |u| {
        k.phi(t, u) * y + k.y_star(u) + b * k.phi(t1, u) * srr + k.srz(t1, u)
    });
    let phi = integral - mu - vc;

    Ok(PriceBreakdown::new(growth - 1.0, phi * growth, 1.0 / d - 1.0))
}

/// 1M (averaged) SOFR futures, `V = E[z_{T₂}-z_{T₁}] - log D(T₁,T₂)`.
pub fn price_sofr_1m(k: &KernelSet, y: f64, t: f64, t1: f64, t2: f64) -> Result<PriceBreakdown> {
    check_period("price_sofr_1m", k, t, t1, t2)?;
    let log_d = -k.params().forward_integral(t1, t2)?;
    let mu = k.mu(k.phi(t, t1) * y, t1, t2);
    let integral = skew_integral(k, t, t1, t2, |u| k.phi(t, u) * y + k.y_star(u));
    Ok(PriceBreakdown::new(-log_d + mu, integral - mu, -log_d))
}

/// Zero-coupon bond maturing at `T` as a function of the driver state at
/// `t`, with every `y`-independent quantity precomputed.
#[derive(Debug, Clone)]
pub struct BondCurve {
    discount: f64,
    b_star: f64,
    mu_offset: f64,
    half_szz: f64,
    drift: f64,
    nodes: Vec<BondNode>,
    floor: f64,
}

#[derive(Debug, Clone, Copy)]
struct BondNode {
    weight_psi: f64,
    phi: f64,
    gamma: f64,
    shift: f64,
}

impl BondCurve {
    pub fn new(k: &KernelSet, t: f64, maturity: f64) -> Result<Self> {
        check_order("bond_price", 0.0, t)?;
        check_order("bond_price", t, maturity)?;
        check_horizon(k, maturity)?;
        let b = k.bstar(t, maturity);
        let mut drift = 0.0;
        let nodes = k
            .nodes(t, maturity)
            .into_iter()
            .map(|(u, w)| {
                drift += w * k.rstar(u);
                BondNode {
                    weight_psi: w * k.psi(t, u),
                    phi: k.phi(t, u),
                    gamma: k.gamma(u),
                    shift: k.y_star(u) - k.bplus(t, u, maturity) * k.srr(t, u) - k.srz(t, u),
                }
            })
            .collect();
        Ok(Self {
            discount: k.params().discount(t, maturity)?,
            b_star: b,
            mu_offset: 0.5 * b * b * k.srr(0.0, t) + b * k.srz(0.0, t),
            half_szz: 0.5 * k.szz(t, maturity),
            drift,
            nodes,
            floor: k.gamma_floor(),
        })
    }

    /// `μ*(y,t,T)`.
    pub fn mu_star(&self, y: f64) -> f64 {
        self.b_star * y + self.mu_offset
    }

    /// First-order correction `ℱ₁(y,t,T)`.
    pub fn f_one(&self, y: f64) -> f64 {
        let skew: f64 = self
            .nodes
            .iter()
            .map(|n| n.weight_psi * sinh_over(n.gamma, n.phi * y + n.shift, self.floor))
            .sum();
        skew + self.drift - self.mu_star(y) + self.half_szz
    }

    /// `F^T(y,t) = D(t,T) e^{-μ*(y,t,T)} (1 - ℱ₁(y,t,T))`.
    pub fn price(&self, y: f64) -> f64 {
        self.discount * (-self.mu_star(y)).exp() * (1.0 - self.f_one(y))
    }
}

pub fn bond_price(k: &KernelSet, y: f64, t: f64, maturity: f64) -> Result<f64> {
    Ok(BondCurve::new(k, t, maturity)?.price(y))
}

pub fn f_one(k: &KernelSet, y: f64, t: f64, maturity: f64) -> Result<f64> {
    Ok(BondCurve::new(k, t, maturity)?.f_one(y))
}

/// Fair forward premium `F^{T₁}/F^{T₂} - 1`, expanded to first order.
pub fn price_forward(k: &KernelSet, y: f64, t: f64, t1: f64, t2: f64) -> Result<f64> {
    check_period("price_forward", k, t, t1, t2)?;
    let near = BondCurve::new(k, t, t1)?;
    let far = BondCurve::new(k, t, t2)?;
    let d = k.params().discount(t1, t2)?;
    let growth = guarded_exp(-near.mu_star(y) + far.mu_star(y))? / d;
    Ok(growth * (1.0 - near.f_one(y) + far.f_one(y)) - 1.0)
}

/// Forward-looking (Eurodollar) futures on the term rate fixed at `T₁`,
/// `V = E[1/F^{T₂}(y_{T₁},T₁)] - 1`. The reference is the forward premium.
pub fn price_eurodollar(k: &KernelSet, y: f64, t: f64, t1: f64, t2: f64) -> Result<PriceBreakdown> {
    check_period("price_eurodollar", k, t, t1, t2)?;
    let d = k.params().discount(t1, t2)?;
    let y_t1 = k.phi(t, t1) * y;
    let b = k.bstar(t1, t2);
    let srr = k.srr(t, t1);
    let mu = k.mu(y_t1, t1, t2);
    let vct = b * b * srr;
    let growth = guarded_exp(mu + 0.5 * vct)? / d;

    let integral = skew_integral(k, t, t1, t2, |u| {
        k.phi(t, u) * y + k.y_star(u) + b * k.phi(t1, u) * srr
            - k.bplus(t1, u, t2) * k.srr(t1, u)
            - k.srz(t1, u)
    });
    let bracket = integral - mu - vct + 0.5 * k.szz(t1, t2);

    let reference = price_forward(k, y, t, t1, t2)?;
    Ok(PriceBreakdown::new(growth - 1.0, bracket * growth, reference))
}

/// Dispatches on the contract kind. Forwards have no first-order split, so
/// their breakdown carries the whole value in `v0`.
pub fn price_contract(k: &KernelSet, spec: &ContractSpec, y: f64, t: f64) -> Result<PriceBreakdown> {
    spec.validate(k.params().horizon)?;
    match spec.kind {
        ContractKind::Sofr3m => price_sofr_3m(k, y, t, spec.t1, spec.t2),
        ContractKind::Sofr1m => price_sofr_1m(k, y, t, spec.t1, spec.t2),
        ContractKind::Eurodollar => price_eurodollar(k, y, t, spec.t1, spec.t2),
        ContractKind::Forward => {
            let v = price_forward(k, y, t, spec.t1, spec.t2)?;
            let d = k.params().discount(spec.t1, spec.t2)?;
            Ok(PriceBreakdown::new(v, 0.0, 1.0 / d - 1.0))
        }
    }
}

/// Convexity at `y = 0`, `t = 0`: futures value minus its forward (3M,
/// Eurodollar) or log-discount (1M) counterpart.
pub fn convexity(k: &KernelSet, spec: &ContractSpec) -> Result<PriceBreakdown> {
    if spec.kind == ContractKind::Forward {
        return Err(Error::UnsupportedKind("forward"));
    }
    price_contract(k, spec, 0.0, 0.0)
}

/// Hull-White zeroth-order value. `hw` should carry zero smile and skew;
/// only its mean reversion, volatility and forward curve are used.
pub fn price_hw(hw: &KernelSet, y: f64, t: f64, t1: f64, t2: f64, kind: ContractKind) -> Result<f64> {
    check_period("price_hw", hw, t, t1, t2)?;
    let mu = hw.mu(hw.phi(t, t1) * y, t1, t2);
    let vct = {
        let b = hw.bstar(t1, t2);
        b * b * hw.srr(t, t1)
    };
    match kind {
        ContractKind::Sofr1m => Ok(hw.params().forward_integral(t1, t2)? + mu),
        ContractKind::Sofr3m => {
            let d = hw.params().discount(t1, t2)?;
            Ok(guarded_exp(mu + 0.5 * (vct + hw.szz(t1, t2)))? / d - 1.0)
        }
        ContractKind::Eurodollar => {
            let d = hw.params().discount(t1, t2)?;
            Ok(guarded_exp(mu + 0.5 * vct)? / d - 1.0)
        }
        ContractKind::Forward => Err(Error::UnsupportedKind("forward")),
    }
}

/// Hull-White convexity at `y = 0`, `t = 0`.
pub fn convexity_hw(hw: &KernelSet, spec: &ContractSpec) -> Result<f64> {
    spec.validate(hw.params().horizon)?;
    let value = price_hw(hw, 0.0, 0.0, spec.t1, spec.t2, spec.kind)?;
    let reference = match spec.kind {
        ContractKind::Sofr1m => hw.params().forward_integral(spec.t1, spec.t2)?,
        _ => 1.0 / hw.params().discount(spec.t1, spec.t2)? - 1.0,
    };
    Ok(value - reference)
}
