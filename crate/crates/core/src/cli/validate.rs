use crate::greens::{convolve_price, staged_price, GreenFunction, Payoff, PayoffGrid};
use crate::kernels::KernelSet;
use crate::mc::{mc_no_arbitrage, mc_price, SimConfig};
use crate::pricing::{bond_price, price_contract, price_hw, price_sofr_1m, price_sofr_3m, PriceBreakdown};
use crate::termstructure::{Config, ContractKind, ContractSpec, ModelParams};
use crate::Result;

use super::report::Report;

/// Futures contracts from the config, or a 3M and a 1M contract settling
/// at 0.5 when none are listed.
fn targets(cfg: &Config) -> Vec<ContractSpec> {
    let listed: Vec<ContractSpec> = cfg
        .contracts
        .iter()
        .copied()
        .filter(|c| c.kind != ContractKind::Forward)
        .collect();
    if !listed.is_empty() {
        return listed;
    }
    [
        ContractSpec::new(ContractKind::Sofr3m, 0.5, 0.75),
        ContractSpec::new(ContractKind::Sofr1m, 0.5, 0.5 + 1.0 / 12.0),
    ]
    .into_iter()
    .filter(|c| c.t2 <= cfg.params.horizon)
    .collect()
}

type ClosedForm = fn(&KernelSet, f64, f64, f64, f64) -> Result<PriceBreakdown>;

fn label(c: &ContractSpec) -> String {
    format!("{}[{},{}]", c.kind, c.t1, c.t2)
}

pub fn mc_suite(cfg: &Config, sim: &SimConfig, scale: f64) -> Result<Report> {
    let k = KernelSet::new(cfg.params.clone())?;
    let mut report = Report::default();

    let times: Vec<f64> = [1.0, 2.0]
        .into_iter()
        .filter(|&t| t <= cfg.params.horizon)
        .collect();
    if !times.is_empty() {
        for (t, est, d) in mc_no_arbitrage(&k, &times, sim)? {
            let eps = k.epsilon_until(t).epsilon;
            report.push(
                format!("no-arbitrage t={t}"),
                (est.mean - d) / d,
                scale * (3.0 * est.std_error / d + 2.0 * eps * eps),
            );
        }
    }
    for c in targets(cfg) {
        let closed = price_contract(&k, &c, 0.0, 0.0)?.total;
        let est = mc_price(&k, &c, sim)?;
        let eps = k.epsilon_until(c.t2).epsilon;
        report.push(
            format!("futures price {}", label(&c)),
            closed - est.mean,
            scale * (3.0 * est.std_error).max(2.0 * eps * eps * closed.abs()),
        );
    }
    Ok(report)
}

pub fn greens_suite(cfg: &Config, grid: &PayoffGrid, scale: f64) -> Result<Report> {
    grid.validate()?;
    let k = KernelSet::new(cfg.params.clone())?;
    let mut report = Report::default();

    let v = cfg.params.horizon.min(1.0);
    let mass = GreenFunction::new(&k, 0.0, 0.0, 0.0, v)?.convolve(&Payoff::new(|_, _| 1.0), grid)?;
    report.push(format!("mass of G0 on [0,{v}]"), mass.zeroth - 1.0, scale * 1e-6);
    report.push(format!("mass of G1 on [0,{v}]"), mass.first, scale * 1e-6);

    for c in targets(cfg) {
        let (payoff, closed): (Payoff, ClosedForm) = match c.kind {
            ContractKind::Sofr3m => (Payoff::sofr_3m(cfg.params.discount(c.t1, c.t2)?), price_sofr_3m),
            ContractKind::Sofr1m => (
                Payoff::sofr_1m(cfg.params.forward_integral(c.t1, c.t2)?),
                price_sofr_1m,
            ),
            _ => {
                report.skip(
                    label(&c),
                    "payoff depends on a bond price, not on the accrual increment",
                );
                continue;
            }
        };
        let eps = k.epsilon_until(c.t2).epsilon;
        let tol = |p: f64| scale * (2.0 * eps * eps * p.abs() + 1e-6);

        let single = convolve_price(&k, &payoff, 0.0, 0.0, c.t1, c.t2, grid)?;
        let at_t1 = closed(&k, 0.0, c.t1, c.t1, c.t2)?.total;
        report.push(format!("one-stage {}", label(&c)), single - at_t1, tol(at_t1));

        let staged = staged_price(&k, &payoff, 0.0, 0.0, c.t1, c.t2, grid)?;
        let at_0 = closed(&k, 0.0, 0.0, c.t1, c.t2)?.total;
        report.push(format!("staged {}", label(&c)), staged.value - at_0, tol(at_0));
        report.push(
            format!("outer first order {}", label(&c)),
            staged.outer_first_order,
            scale * 1e-12,
        );
    }
    Ok(report)
}

fn constant(p: &ModelParams) -> Option<[f64; 3]> {
    let single = |v: &[f64]| v.iter().all(|&x| x == v[0]).then_some(v[0]);
    Some([
        single(p.alpha.values())?,
        single(p.sigma.values())?,
        single(p.gamma.values())?,
    ])
}

/// `(B*, Σ_rz, Σ_zz)` on `[0, v]` for constant coefficients by the
/// composite trapezoid rule on `n` panels, with `Σ_rr` in closed form.
pub(crate) fn trapezoid_kernels(alpha: f64, sigma: f64, gamma: f64, v: f64, n: usize) -> [f64; 3] {
    let srr = |u: f64| {
        if alpha == 0.0 {
            sigma * sigma * u
        } else {
            sigma * sigma * (-(-2.0 * alpha * u).exp_m1()) / (2.0 * alpha)
        }
    };
    let psi = |u: f64| (0.5 * gamma * gamma * srr(u)).exp();
    // Integrands of B*, of e^{αv}Σ_rz(0,v), and of Σ_zz/2.
    let h = v / n as f64;
    let (mut b, mut c, mut zz) = (0.0, 0.0, 0.0);
    let (mut fb, mut fc, mut fz) = (1.0, 0.0, 0.0);
    for i in 1..=n {
        let u = i as f64 * h;
        let p = psi(u);
        let gb = p * (-alpha * u).exp();
        let gc = p * (alpha * u).exp() * srr(u);
        b += 0.5 * h * (fb + gb);
        c += 0.5 * h * (fc + gc);
        let gz = p * (-alpha * u).exp() * c;
        zz += h * (fz + gz);
        (fb, fc, fz) = (gb, gc, gz);
    }
    [b, (-alpha * v).exp() * c, zz]
}

pub fn closedform_suite(cfg: &Config, scale: f64) -> Result<Report> {
    let p = &cfg.params;
    let k = KernelSet::new(p.clone())?;
    let mut report = Report::default();
    let v = p.horizon.min(1.0);

    match constant(p) {
        Some([a, s, g]) => {
            let rel = |x: f64, y: f64| (x - y) / y;
            let phi = (-a * v).exp();
            let srr = if a == 0.0 {
                s * s * v
            } else {
                s * s * (-(-2.0 * a * v).exp_m1()) / (2.0 * a)
            };
            report.push(format!("phi_r(0,{v})"), rel(k.phi_r(0.0, v)?, phi), scale * 1e-12);
            if s > 0.0 {
                report.push(
                    format!("sigma_rr(0,{v})"),
                    rel(k.sigma_rr(0.0, v)?, srr),
                    scale * 1e-12,
                );
                // Richardson on two trapezoid resolutions.
                let coarse = trapezoid_kernels(a, s, g, v, 10_000);
                let fine = trapezoid_kernels(a, s, g, v, 20_000);
                let oracle: Vec<f64> = (0..3).map(|i| (4.0 * fine[i] - coarse[i]) / 3.0).collect();
                report.push(
                    format!("b_star(0,{v})"),
                    rel(k.b_star(0.0, v)?, oracle[0]),
                    scale * 1e-9,
                );
                report.push(
                    format!("sigma_rz(0,{v})"),
                    rel(k.sigma_rz(0.0, v)?, oracle[1]),
                    scale * 1e-9,
                );
                report.push(
                    format!("sigma_zz(0,{v})"),
                    rel(k.sigma_zz(0.0, v)?, oracle[2]),
                    scale * 1e-9,
                );
            } else {
                report.skip("covariance kernels", "zero volatility");
            }
        }
        None => report.skip("kernel closed forms", "curves are not constant"),
    }

    for t in [0.25, 0.5, 1.0, 2.0, 5.0].into_iter().filter(|&t| t <= p.horizon) {
        let d = p.discount(0.0, t)?;
        report.push(
            format!("bond_price(0,0,{t}) = D"),
            bond_price(&k, 0.0, 0.0, t)? / d - 1.0,
            scale * 1e-7,
        );
    }

    let ext = KernelSet::new(p.hull_white_limit(1e-6))?;
    let hw = KernelSet::new(p.hull_white_limit(0.0))?;
    let mut periods: Vec<ContractSpec> = Vec::new();
    for c in targets(cfg) {
        if periods.iter().any(|q| (q.t1, q.t2) == (c.t1, c.t2)) {
            continue;
        }
        periods.push(c);
    }
    for c in periods {
        for kind in [ContractKind::Sofr3m, ContractKind::Eurodollar] {
            let spec = ContractSpec { kind, ..c };
            let extended = price_contract(&ext, &spec, 0.0, 0.0)?.total;
            let baseline = price_hw(&hw, 0.0, 0.0, c.t1, c.t2, kind)?;
            report.push(
                format!("hull-white reduction {}", label(&spec)),
                (extended - baseline) / baseline,
                scale * 1e-9,
            );
        }
        report.skip(
            format!(
                "hull-white reduction {}",
                label(&ContractSpec {
                    kind: ContractKind::Sofr1m,
                    ..c
                })
            ),
            "the Hull-White 1M baseline omits the ½Σ_zz term of the exact Gaussian mean",
        );
    }
    Ok(report)
}
