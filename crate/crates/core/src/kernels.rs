//! Deterministic integral functions of the extended Hull-White model.
//!
//! Every quantity here is a functional of the parameter curves only:
//!
//! ```text
//! φ_r(t,v)  = exp(-∫_t^v α)
//! Σ_rr(t,v) = ∫_t^v φ_r²(u,v) σ²(u) du
//! ψ_r(t,v)  = exp(½ γ²(v) Σ_rr(t,v))
//! Σ_rz(t,v) = ∫_t^v ψ_r(t,u) φ_r(u,v) Σ_rr(t,u) du
//! Σ_zz(t,v) = 2 ∫_t^v ψ_r(t,u) Σ_rz(t,u) du
//! B*(t,v)   = ∫_t^v ψ_r(t,u) φ_r(t,u) du
//! B⁺(t,t₁,v) = ∫_{t₁}^v ψ_r(t,u) φ_r(t₁,u) du
//! ```
//!
//! `φ_r` and `Σ_rr` are exact per piecewise-constant segment. The remaining
//! kernels are cumulative integrals in their second argument once the first
//! argument (the anchor) is fixed, so each anchor gets a table of running
//! integrals at panel boundaries; any other point costs one partial panel.
//! Tables and first-order drift values are memoized on time arguments
//! rounded to 1e-12.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use crate::error::{check_order, Result};
use crate::quadrature::{cosh_minus_one, ou_variance_factor, panels, sinh_over, GaussLegendre};
use crate::termstructure::ModelParams;

/// Widest panel used by the composite rules, in years.
pub const MAX_PANEL: f64 = 0.5;

const EPSILON_GRID: usize = 64;

fn memo_key(t: f64) -> i64 {
    (t * 1e12).round() as i64
}

/// Diagnostic size of the smile perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonReport {
    /// Sup over the grid of `γ²(v) Σ_rr(0,v)`.
    pub epsilon: f64,
    /// Sup over the grid of `|γ(v) y*(v)|`.
    pub skew_scale: f64,
}

/// Running integrals from a fixed anchor `t0`:
/// `I(v) = ∫ ψ e^{a} Σ_rr`, `J(v) = ∫ ψ e^{-a}`, `K(v) = 2∫ ψ e^{-a} I`,
/// with `a(u) = ∫_{t0}^u α`.
#[derive(Debug)]
struct AnchorTable {
    t0: f64,
    bounds: Vec<f64>,
    i_cum: Vec<f64>,
    j_cum: Vec<f64>,
    k_cum: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Running {
    i: f64,
    j: f64,
    k: f64,
}

/// Evaluator for all kernels over one parameter set.
#[derive(Debug)]
pub struct KernelSet {
    params: ModelParams,
    gl: GaussLegendre,
    knots: Vec<f64>,
    anchors: RwLock<HashMap<i64, Arc<AnchorTable>>>,
    r_star: RwLock<HashMap<i64, f64>>,
}

impl KernelSet {
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let gl = GaussLegendre::new(params.quadrature.nodes_per_segment);
        let knots = params.knots();
        Ok(Self {
            params,
            gl,
            knots,
            anchors: RwLock::new(HashMap::new()),
            r_star: RwLock::new(HashMap::new()),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn gamma_floor(&self) -> f64 {
        self.params.quadrature.gamma_floor
    }

    pub fn gamma(&self, t: f64) -> f64 {
        self.params.gamma.eval(t)
    }

    pub fn y_star(&self, t: f64) -> f64 {
        self.params.y_star.eval(t)
    }

    /// `sinh(γx)/γ` with the configured small-γ guard.
    pub fn sinh_over(&self, gamma: f64, x: f64) -> f64 {
        sinh_over(gamma, x, self.gamma_floor())
    }

    pub fn cosh_minus_one(&self, gamma: f64, x: f64) -> f64 {
        cosh_minus_one(gamma, x, self.gamma_floor())
    }

    /// Composite Gauss-Legendre over `[a, b]`, split at parameter knots.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        if a >= b {
            return 0.0;
        }
        panels(a, b, &self.knots, MAX_PANEL)
            .into_iter()
            .map(|(lo, hi)| self.gl.integrate(lo, hi, &mut f))
            .sum()
    }

    /// Nodes and weights of the composite rule used by [`Self::integrate`].
    pub fn nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        if a >= b {
            return Vec::new();
        }
        panels(a, b, &self.knots, MAX_PANEL)
            .into_iter()
            .flat_map(|(lo, hi)| self.gl.mapped(lo, hi).collect::<Vec<_>>())
            .collect()
    }

    // Unchecked kernels; callers guarantee t <= v.

    pub(crate) fn phi(&self, t: f64, v: f64) -> f64 {
        (-self.params.alpha.integral(t, v)).exp()
    }

    pub(crate) fn srr(&self, t: f64, v: f64) -> f64 {
        if v <= t {
            return 0.0;
        }
        let lo = self.knots.partition_point(|k| *k <= t);
        let hi = self.knots.partition_point(|k| *k < v);
        let mut right = v;
        let mut factor = 1.0;
        let mut total = 0.0;
        for idx in (lo..=hi).rev() {
            let left = if idx == lo { t } else { self.knots[idx - 1] };
            let h = right - left;
            if h > 0.0 {
                let mid = 0.5 * (left + right);
                let a = self.params.alpha.eval(mid);
                let s = self.params.sigma.eval(mid);
                total += factor * factor * s * s * ou_variance_factor(a, h);
                factor *= (-a * h).exp();
            }
            right = left;
        }
        total
    }

    pub(crate) fn psi(&self, t: f64, v: f64) -> f64 {
        let g = self.gamma(v);
        (0.5 * g * g * self.srr(t, v)).exp()
    }

    fn anchor(&self, t0: f64) -> Arc<AnchorTable> {
        let key = memo_key(t0);
        if let Some(tab) = self.anchors.read().expect("anchor cache poisoned").get(&key) {
            return Arc::clone(tab);
        }
        let tab = Arc::new(self.build_anchor(t0));
        self.anchors
            .write()
            .expect("anchor cache poisoned")
            .entry(key)
            .or_insert(tab)
            .clone()
    }

    fn build_anchor(&self, t0: f64) -> AnchorTable {
        let end = self.params.horizon.max(t0);
        let mut bounds = vec![t0];
        let mut i_cum = vec![0.0];
        let mut j_cum = vec![0.0];
        let mut k_cum = vec![0.0];
        let mut run = Running {
            i: 0.0,
            j: 0.0,
            k: 0.0,
        };
        for (lo, hi) in panels(t0, end, &self.knots, MAX_PANEL) {
            run = self.advance(t0, lo, hi, run, true);
            bounds.push(hi);
            i_cum.push(run.i);
            j_cum.push(run.j);
            k_cum.push(run.k);
        }
        AnchorTable {
            t0,
            bounds,
            i_cum,
            j_cum,
            k_cum,
        }
    }

    fn i_integrand(&self, t0: f64, u: f64) -> f64 {
        let srr = self.srr(t0, u);
        let g = self.gamma(u);
        let psi = (0.5 * g * g * srr).exp();
        psi * self.params.alpha.integral(t0, u).exp() * srr
    }

    fn j_integrand(&self, t0: f64, u: f64) -> f64 {
        self.psi(t0, u) * (-self.params.alpha.integral(t0, u)).exp()
    }

    /// Carries the running integrals across `[lo, hi]`, which must not
    /// straddle a knot.
    fn advance(&self, t0: f64, lo: f64, hi: f64, start: Running, with_k: bool) -> Running {
        if hi <= lo {
            return start;
        }
        let mut di = 0.0;
        let mut dj = 0.0;
        let mut dk = 0.0;
        for (u, w) in self.gl.mapped(lo, hi) {
            di += w * self.i_integrand(t0, u);
            dj += w * self.j_integrand(t0, u);
            if with_k {
                let i_u = start.i + self.gl.integrate(lo, u, |s| self.i_integrand(t0, s));
                dk += w * 2.0 * self.j_integrand(t0, u) * i_u;
            }
        }
        Running {
            i: start.i + di,
            j: start.j + dj,
            k: start.k + dk,
        }
    }

    /// Running integrals at `v`; `K` is only carried through the partial
    /// panel when `with_k` is set.
    fn running(&self, t0: f64, v: f64, with_k: bool) -> Running {
        if v <= t0 {
            return Running {
                i: 0.0,
                j: 0.0,
                k: 0.0,
            };
        }
        let tab = self.anchor(t0);
        let idx = tab.bounds.partition_point(|b| *b <= v) - 1;
        let start = Running {
            i: tab.i_cum[idx],
            j: tab.j_cum[idx],
            k: tab.k_cum[idx],
        };
        let from = tab.bounds[idx];
        if from == v {
            return start;
        }
        panels(from, v, &self.knots, MAX_PANEL)
            .into_iter()
            .fold(start, |run, (lo, hi)| self.advance(tab.t0, lo, hi, run, with_k))
    }

    pub(crate) fn srz(&self, t: f64, v: f64) -> f64 {
        if v <= t {
            return 0.0;
        }
        self.running(t, v, false).i * (-self.params.alpha.integral(t, v)).exp()
    }

    pub(crate) fn szz(&self, t: f64, v: f64) -> f64 {
        if v <= t {
            return 0.0;
        }
        self.running(t, v, true).k
    }

    pub(crate) fn bstar(&self, t: f64, v: f64) -> f64 {
        if v <= t {
            return 0.0;
        }
        self.running(t, v, false).j
    }

    /// `B⁺(t,t₁,v)` through the anchor-`t` running integral,
    /// `(J(v) - J(t₁)) / φ_r(t,t₁)`.
    pub(crate) fn bplus(&self, t: f64, t1: f64, v: f64) -> f64 {
        if v <= t1 {
            return 0.0;
        }
        (self.bstar(t, v) - self.bstar(t, t1)) / self.phi(t, t1)
    }

    pub(crate) fn mu(&self, y: f64, t: f64, v: f64) -> f64 {
        let b = self.bstar(t, v);
        b * (y + self.srz(0.0, t)) + 0.5 * b * b * self.srr(0.0, t)
    }

    // Checked public surface.

    pub fn phi_r(&self, t: f64, v: f64) -> Result<f64> {
        check_order("phi_r", t, v)?;
        Ok(self.phi(t, v))
    }

    pub fn sigma_rr(&self, t: f64, v: f64) -> Result<f64> {
        check_order("sigma_rr", t, v)?;
        Ok(self.srr(t, v))
    }

    /// Note the smile factor is taken at the outer time `v`.
    pub fn psi_r(&self, t: f64, v: f64) -> Result<f64> {
        check_order("psi_r", t, v)?;
        Ok(self.psi(t, v))
    }

    pub fn sigma_rz(&self, t: f64, v: f64) -> Result<f64> {
        check_order("sigma_rz", t, v)?;
        Ok(self.srz(t, v))
    }

    pub fn sigma_zz(&self, t: f64, v: f64) -> Result<f64> {
        check_order("sigma_zz", t, v)?;
        Ok(self.szz(t, v))
    }

    /// Covariance of `(y_v, z_v - z_t)` under the leading-order kernel.
    pub fn covariance(&self, t: f64, v: f64) -> Result<[[f64; 2]; 2]> {
        check_order("covariance", t, v)?;
        let rz = self.srz(t, v);
        Ok([[self.srr(t, v), rz], [rz, self.szz(t, v)]])
    }

    pub fn b_star(&self, t: f64, v: f64) -> Result<f64> {
        check_order("b_star", t, v)?;
        Ok(self.bstar(t, v))
    }

    /// Integral form of `B⁺`, integrated directly over `[t₁, v]`.
    pub fn b_plus(&self, t: f64, t1: f64, v: f64) -> Result<f64> {
        check_order("b_plus", t, t1)?;
        check_order("b_plus", t1, v)?;
        Ok(self.integrate(t1, v, |u| self.psi(t, u) * self.phi(t1, u)))
    }

    /// Quotient form `(B*(t,v) - B*(t,t₁)) / φ_r(t,t₁)`.
    pub fn b_plus_quotient(&self, t: f64, t1: f64, v: f64) -> Result<f64> {
        check_order("b_plus", t, t1)?;
        check_order("b_plus", t1, v)?;
        Ok(self.bplus(t, t1, v))
    }

    /// `μ*(y,t,v) = B*(t,v)(y + Σ_rz(0,t)) + ½B*²(t,v)Σ_rr(0,t)`.
    pub fn mu_star(&self, y: f64, t: f64, v: f64) -> Result<f64> {
        check_order("mu_star", 0.0, t)?;
        check_order("mu_star", t, v)?;
        Ok(self.mu(y, t, v))
    }

    /// `V_C(t,u,v) = B*²(u,v)Σ_rr(t,u) + Σ_zz(u,v)`.
    pub fn v_c(&self, t: f64, u: f64, v: f64) -> Result<f64> {
        check_order("v_c", t, u)?;
        check_order("v_c", u, v)?;
        Ok(self.v_c_tilde_unchecked(t, u, v) + self.szz(u, v))
    }

    /// `Ṽ_C(t,T₁,T₂) = B*²(T₁,T₂)Σ_rr(t,T₁)`.
    pub fn v_c_tilde(&self, t: f64, t1: f64, t2: f64) -> Result<f64> {
        check_order("v_c_tilde", t, t1)?;
        check_order("v_c_tilde", t1, t2)?;
        Ok(self.v_c_tilde_unchecked(t, t1, t2))
    }

    fn v_c_tilde_unchecked(&self, t: f64, t1: f64, t2: f64) -> f64 {
        let b = self.bstar(t1, t2);
        b * b * self.srr(t, t1)
    }

    /// Shift sizes `(Δy, Δz)` of the first-order shift operators.
    pub fn delta_shifts(&self, t: f64, u: f64) -> Result<(f64, f64)> {
        check_order("delta_shifts", t, u)?;
        Ok(self.shifts(t, u))
    }

    pub(crate) fn shifts(&self, t: f64, u: f64) -> (f64, f64) {
        let g = self.gamma(u);
        let dy = g * self.srr(t, u) / self.phi(t, u);
        let dz = g * self.srz(t, u) - self.bstar(t, u) * dy;
        (dy, dz)
    }

    fn skew_argument(&self, t1: f64, t: f64) -> f64 {
        let srr = self.srr(0.0, t1);
        self.y_star(t1) - self.bplus(0.0, t1, t) * srr - self.srz(0.0, t1)
    }

    /// `Y*(t₁,t) = γ(t₁)(y*(t₁) - B⁺(0,t₁,t)Σ_rr(0,t₁) - Σ_rz(0,t₁))`.
    pub fn y_star_cap(&self, t1: f64, t: f64) -> Result<f64> {
        check_order("y_star_cap", 0.0, t1)?;
        check_order("y_star_cap", t1, t)?;
        Ok(self.gamma(t1) * self.skew_argument(t1, t))
    }

    /// First-order drift correction enforcing the no-arbitrage condition,
    ///
    /// ```text
    /// R*₁(t) = -ψ_r(0,t) [ sinh Y*(t,t) / γ(t)
    ///                      - ∫_0^t ψ_r(0,t₁) φ_r(t₁,t) Σ_rr(0,t₁) (cosh Y*(t₁,t) - 1) dt₁ ]
    /// ```
    ///
    /// The sign of the cosh integral is the one that makes the bond formula
    /// reproduce `D(0,T)` for every `T`; see `pricing::tests::drift_sign_is_fixed_by_calibration`.
    pub fn r_star_1(&self, t: f64) -> Result<f64> {
        check_order("r_star_1", 0.0, t)?;
        Ok(self.rstar(t))
    }

    pub(crate) fn rstar(&self, t: f64) -> f64 {
        let key = memo_key(t);
        if let Some(v) = self.r_star.read().expect("drift cache poisoned").get(&key) {
            return *v;
        }
        let v = self.r_star_1_with(t, self.gamma(t), self.y_star(t));
        self.r_star.write().expect("drift cache poisoned").insert(key, v);
        v
    }

    /// `R*₁(t)` with the outer smile and skew values supplied explicitly, so
    /// callers can take left limits at parameter breakpoints.
    pub fn r_star_1_with(&self, t: f64, gamma_t: f64, y_star_t: f64) -> f64 {
        if t <= 0.0 {
            return -self.sinh_over(gamma_t, y_star_t);
        }
        let srr_t = self.srr(0.0, t);
        let psi_t = (0.5 * gamma_t * gamma_t * srr_t).exp();
        let lead = self.sinh_over(gamma_t, y_star_t - self.srz(0.0, t));
        let tail = self.integrate(0.0, t, |t1| {
            let srr = self.srr(0.0, t1);
            self.psi(0.0, t1)
                * self.phi(t1, t)
                * srr
                * self.cosh_minus_one(self.gamma(t1), self.skew_argument(t1, t))
        });
        -psi_t * (lead - tail)
    }

    /// Perturbation size over the whole calibrated horizon.
    pub fn epsilon_report(&self) -> EpsilonReport {
        self.epsilon_until(self.params.horizon)
    }

    /// Perturbation size measured on a 64-point grid over `[0, t]`.
    pub fn epsilon_until(&self, t: f64) -> EpsilonReport {
        let mut eps: f64 = 0.0;
        let mut skew: f64 = 0.0;
        for i in 0..EPSILON_GRID {
            let v = t * i as f64 / (EPSILON_GRID - 1) as f64;
            let g = self.gamma(v);
            eps = eps.max(g * g * self.srr(0.0, v));
            skew = skew.max((g * self.y_star(v)).abs());
        }
        EpsilonReport {
            epsilon: eps,
            skew_scale: skew,
        }
    }
}
