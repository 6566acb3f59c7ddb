//! Monte Carlo oracle.
//!
//! The driver `y` moves by its exact Ornstein-Uhlenbeck transition, so the
//! only discretization error sits in the trapezoid accumulation of
//! `z = ∫(r - r̄)`. The drift uses the first-order correction `R*₁`, which
//! makes the simulation consistent with the closed forms to first order.
//!
//! Every path (or antithetic pair) draws from its own ChaCha stream indexed
//! by its position, and statistics are merged over fixed-size blocks in
//! order, so results do not depend on the thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::KernelSet;
use crate::pricing::BondCurve;
use crate::quadrature::sinh_over;
use crate::termstructure::{ContractKind, ContractSpec};

const BLOCK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    /// Largest time step in years.
    pub step: f64,
    pub seed: u64,
    /// Simulate pairs driven by `±ξ` and average each pair.
    pub antithetic: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            step: 1.0 / 365.0,
            seed: 42,
            antithetic: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidSimConfig("n_paths must be positive".into()));
        }
        if !(self.step > 0.0 && self.step <= 1.0 / 52.0) {
            return Err(Error::InvalidSimConfig(format!(
                "step must lie in (0, 1/52], got {}",
                self.step
            )));
        }
        if self.antithetic && !self.n_paths.is_multiple_of(2) {
            return Err(Error::InvalidSimConfig(
                "antithetic runs need an even n_paths".into(),
            ));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        if self.antithetic {
            self.n_paths / 2
        } else {
            self.n_paths
        }
    }
}

/// Sample mean with its standard error. Under antithetics the error is
/// computed over pair averages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

/// State of one path at an observation time. `z` and `int_r` are measured
/// from the simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathState {
    pub y: f64,
    pub z: f64,
    pub int_r: f64,
}

#[derive(Debug, Clone)]
pub struct PathEnsemble {
    pub times: Vec<f64>,
    /// `paths[i][j]` is path `i` at `times[j]`. Antithetic partners sit at
    /// indices `2k` and `2k + 1`.
    pub paths: Vec<Vec<PathState>>,
}

#[derive(Debug, Clone, Copy)]
struct Step {
    h: f64,
    phi: f64,
    sd: f64,
    gamma: f64,
    y_star: f64,
    drift_left: f64,
    drift_right: f64,
    forward: f64,
    reuse_left: bool,
}

#[derive(Debug)]
struct Plan {
    y0: f64,
    steps: Vec<Step>,
    /// `(completed steps, observation index)` in step order; observation
    /// times may come unsorted or repeated.
    records: Vec<(usize, usize)>,
    floor: f64,
}

fn time_grid(start: f64, end: f64, knots: &[f64], obs: &[f64], step: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = std::iter::once(start)
        .chain(knots.iter().copied().filter(|&k| k > start && k < end))
        .chain(obs.iter().copied())
        .chain(std::iter::once(end))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut grid = vec![start];
    for w in cuts.windows(2) {
        let n = ((w[1] - w[0]) / step).ceil().max(1.0) as usize;
        let h = (w[1] - w[0]) / n as f64;
        grid.extend((1..n).map(|i| w[0] + i as f64 * h));
        grid.push(w[1]);
    }
    grid
}

impl Plan {
    fn new(k: &KernelSet, start: f64, y0: f64, obs: &[f64], cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let horizon = k.params().horizon;
        if obs.is_empty() {
            return Err(Error::InvalidSimConfig("no observation times".into()));
        }
        for &t in obs {
            if t < start {
                return Err(Error::InvalidSimConfig(format!(
                    "observation {t} precedes start {start}"
                )));
            }
            if t > horizon * (1.0 + 1e-12) {
                return Err(Error::BeyondHorizon { t, horizon });
            }
        }
        let end = obs.iter().copied().fold(start, f64::max);
        let grid = time_grid(start, end, &k.params().knots(), obs, cfg.step);
        let steps: Vec<Step> = grid
            .par_windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                let mid = 0.5 * (a + b);
                let gamma = k.gamma(mid);
                let y_star = k.y_star(mid);
                Step {
                    h: b - a,
                    phi: k.phi(a, b),
                    sd: k.srr(a, b).sqrt(),
                    gamma,
                    y_star,
                    drift_left: k.r_star_1_with(a, gamma, y_star),
                    drift_right: k.r_star_1_with(b, gamma, y_star),
                    forward: k.params().rbar.integral(a, b),
                    reuse_left: false,
                }
            })
            .collect();
        let mut steps = steps;
        for i in 1..steps.len() {
            let (prev, cur) = (steps[i - 1], steps[i]);
            steps[i].reuse_left =
                prev.gamma == cur.gamma && prev.y_star == cur.y_star && prev.drift_right == cur.drift_left;
        }
        let mut records: Vec<(usize, usize)> = obs
            .iter()
            .enumerate()
            .map(|(j, t)| (grid.iter().position(|g| g == t).expect("observation on grid"), j))
            .collect();
        records.sort_unstable();
        Ok(Self {
            y0,
            steps,
            records,
            floor: k.gamma_floor(),
        })
    }

    /// Runs one path with normals `sign · ξ_i`, recording at observations.
    fn run(&self, normals: &[f64], sign: f64, out: &mut [PathState]) {
        let mut y = self.y0;
        let mut z = 0.0;
        let mut fwd = 0.0;
        let mut next = 0;
        let mut carried = f64::NAN;
        while next < self.records.len() && self.records[next].0 == 0 {
            out[self.records[next].1] = PathState { y, z, int_r: 0.0 };
            next += 1;
        }
        for (i, (s, xi)) in self.steps.iter().zip(normals).enumerate() {
            let left = if s.reuse_left {
                carried
            } else {
                s.drift_left + sinh_over(s.gamma, y + s.y_star, self.floor)
            };
            y = s.phi * y + s.sd * sign * xi;
            let right = s.drift_right + sinh_over(s.gamma, y + s.y_star, self.floor);
            z += 0.5 * s.h * (left + right);
            fwd += s.forward;
            carried = right;
            while next < self.records.len() && self.records[next].0 == i + 1 {
                out[self.records[next].1] = PathState { y, z, int_r: fwd + z };
                next += 1;
            }
        }
    }

    fn normals(&self, cfg: &SimConfig, index: usize, buf: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        for x in buf.iter_mut() {
            *x = rng.sample(StandardNormal);
        }
    }
}

#[derive(Debug, Clone)]
struct Welford {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    fn merge(mut self, other: &Self) -> Self {
        if other.n == 0 {
            return self;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * nb / n;
            self.m2[i] += other.m2[i] + d * d * na * nb / n;
        }
        self.n += other.n;
        self
    }
}

/// Simulates from `(start, y0)` and averages a vector-valued payoff of the
/// states at `obs`. `payoff` writes `dim` values per path.
pub fn simulate_payoffs<F>(
    k: &KernelSet,
    start: f64,
    y0: f64,
    obs: &[f64],
    cfg: &SimConfig,
    dim: usize,
    payoff: F,
) -> Result<Vec<McEstimate>>
where
    F: Fn(&[PathState], &mut [f64]) + Sync,
{
    let plan = Plan::new(k, start, y0, obs, cfg)?;
    let samples = cfg.samples();
    let blocks = samples.div_ceil(BLOCK);
    let partial: Vec<Welford> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = Welford::new(dim);
            let mut xi = vec![0.0; plan.steps.len()];
            let mut states = vec![PathState::default(); obs.len()];
            let mut value = vec![0.0; dim];
            let mut twin = vec![0.0; dim];
            for idx in b * BLOCK..((b + 1) * BLOCK).min(samples) {
                plan.normals(cfg, idx, &mut xi);
                plan.run(&xi, 1.0, &mut states);
                payoff(&states, &mut value);
                if cfg.antithetic {
                    plan.run(&xi, -1.0, &mut states);
                    payoff(&states, &mut twin);
                    for (v, w) in value.iter_mut().zip(&twin) {
                        *v = 0.5 * (*v + w);
                    }
                }
                acc.push(&value);
            }
            acc
        })
        .collect();
    let total = partial.iter().fold(Welford::new(dim), |acc, blk| acc.merge(blk));
    let n = total.n as f64;
    Ok((0..dim)
        .map(|i| McEstimate {
            mean: total.mean[i],
            std_error: if total.n > 1 {
                (total.m2[i] / (n - 1.0) / n).sqrt()
            } else {
                0.0
            },
            n_paths: cfg.n_paths,
        })
        .collect())
}

/// Full path states from `t = 0`, `y = 0` at the observation times.
pub fn simulate_paths(k: &KernelSet, obs: &[f64], cfg: &SimConfig) -> Result<PathEnsemble> {
    let plan = Plan::new(k, 0.0, 0.0, obs, cfg)?;
    let mut xi = vec![0.0; plan.steps.len()];
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for idx in 0..cfg.samples() {
        plan.normals(cfg, idx, &mut xi);
        let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
        for &sign in signs {
            let mut states = vec![PathState::default(); obs.len()];
            plan.run(&xi, sign, &mut states);
            paths.push(states);
        }
    }
    Ok(PathEnsemble {
        times: obs.to_vec(),
        paths,
    })
}

/// Per-path payoff of a futures contract observed from `t = 0`.
struct ContractPayoff {
    kind: ContractKind,
    log_d: f64,
    inv_d: f64,
    bond: Option<BondCurve>,
}

impl ContractPayoff {
    fn new(k: &KernelSet, spec: &ContractSpec) -> Result<Self> {
        spec.validate(k.params().horizon)?;
        let log_d = k.params().forward_integral(spec.t1, spec.t2)?;
        let bond = match spec.kind {
            ContractKind::Eurodollar => Some(BondCurve::new(k, spec.t1, spec.t2)?),
            ContractKind::Forward => return Err(Error::UnsupportedKind("forward")),
            _ => None,
        };
        Ok(Self {
            kind: spec.kind,
            log_d,
            inv_d: log_d.exp(),
            bond,
        })
    }

    fn value(&self, at_t1: &PathState, at_t2: &PathState) -> f64 {
        match self.kind {
            ContractKind::Sofr1m => at_t2.z - at_t1.z + self.log_d,
            ContractKind::Sofr3m => (at_t2.z - at_t1.z).exp() * self.inv_d - 1.0,
            ContractKind::Eurodollar => 1.0 / self.bond.as_ref().expect("bond curve").price(at_t1.y) - 1.0,
            ContractKind::Forward => unreachable!("rejected in constructor"),
        }
    }
}

/// Futures price as the undiscounted expectation of its payoff.
pub fn mc_price(k: &KernelSet, spec: &ContractSpec, cfg: &SimConfig) -> Result<McEstimate> {
    let payoff = ContractPayoff::new(k, spec)?;
    let est = simulate_payoffs(k, 0.0, 0.0, &[spec.t1, spec.t2], cfg, 1, |s, out| {
        out[0] = payoff.value(&s[0], &s[1]);
    })?;
    Ok(est[0])
}

/// Prices two contracts on common paths and returns `[a, b, a - b]`; the
/// difference has a much smaller error than the two estimates combined.
pub fn mc_compare(
    k: &KernelSet,
    a: &ContractSpec,
    b: &ContractSpec,
    cfg: &SimConfig,
) -> Result<[McEstimate; 3]> {
    let pa = ContractPayoff::new(k, a)?;
    let pb = ContractPayoff::new(k, b)?;
    let obs = [a.t1, a.t2, b.t1, b.t2];
    let est = simulate_payoffs(k, 0.0, 0.0, &obs, cfg, 3, |s, out| {
        out[0] = pa.value(&s[0], &s[1]);
        out[1] = pb.value(&s[2], &s[3]);
        out[2] = out[0] - out[1];
    })?;
    Ok([est[0], est[1], est[2]])
}

/// Zero-coupon bond `E[e^{-∫_t^T r} | y_t = y]` by simulation from `(t, y)`.
pub fn mc_bond(k: &KernelSet, y: f64, t: f64, maturity: f64, cfg: &SimConfig) -> Result<McEstimate> {
    let est = simulate_payoffs(k, t, y, &[maturity], cfg, 1, |s, out| {
        out[0] = (-s[0].int_r).exp();
    })?;
    Ok(est[0])
}

/// `E[e^{-∫_0^t r}]` against `D(0,t)` on a grid of times.
pub fn mc_no_arbitrage(
    k: &KernelSet,
    t_grid: &[f64],
    cfg: &SimConfig,
) -> Result<Vec<(f64, McEstimate, f64)>> {
    if t_grid.iter().any(|&t| t <= 0.0) {
        return Err(Error::InvalidSimConfig(
            "no-arbitrage grid must be positive".into(),
        ));
    }
    let est = simulate_payoffs(k, 0.0, 0.0, t_grid, cfg, t_grid.len(), |s, out| {
        for (o, st) in out.iter_mut().zip(s) {
            *o = (-st.int_r).exp();
        }
    })?;
    t_grid
        .iter()
        .zip(est)
        .map(|(&t, e)| Ok((t, e, k.params().discount(0.0, t)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termstructure::ModelParams;

    fn cfg(n: usize) -> SimConfig {
        SimConfig {
            n_paths: n,
            step: 1.0 / 365.0,
            seed: 7,
            antithetic: false,
        }
    }

    #[test]
    fn grid_contains_knots_and_observations() {
        let g = time_grid(0.0, 1.0, &[0.3, 1.5], &[0.5, 1.0], 0.1);
        for t in [0.0, 0.3, 0.5, 1.0] {
            assert!(g.contains(&t));
        }
        assert!(g.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-15));
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig { n_paths: 0, ..cfg(1) }.validate().is_err());
        assert!(SimConfig { step: 0.1, ..cfg(10) }.validate().is_err());
        assert!(SimConfig {
            antithetic: true,
            ..cfg(11)
        }
        .validate()
        .is_err());
        assert!(cfg(10).validate().is_ok());
    }

    #[test]
    fn deterministic_limit() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.0, 20.0, 0.0, 0.02, 2.0)).unwrap();
        let e = simulate_paths(&k, &[1.0], &cfg(4)).unwrap();
        for p in &e.paths {
            assert_eq!(p[0].y, 0.0);
            assert_eq!(p[0].z, 0.0);
            assert!((p[0].int_r - 0.02).abs() < 1e-15);
        }
        let d = k.params().discount(0.5, 0.75).unwrap();
        let spec = ContractSpec::new(ContractKind::Sofr3m, 0.5, 0.75);
        let m = mc_price(&k, &spec, &cfg(8)).unwrap();
        assert!((m.mean - (1.0 / d - 1.0)).abs() < 1e-15 && m.std_error == 0.0);
        let spec = ContractSpec::new(ContractKind::Sofr1m, 0.5, 0.75);
        let m = mc_price(&k, &spec, &cfg(8)).unwrap();
        assert!((m.mean + d.ln()).abs() < 1e-15);
    }

    #[test]
    fn skewed_deterministic_limit_keeps_z_flat() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.0, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let e = simulate_paths(&k, &[1.5], &cfg(2)).unwrap();
        assert!(e.paths[0][0].z.abs() < 1e-17);
    }

    #[test]
    fn seed_determinism_and_block_independence() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let spec = ContractSpec::new(ContractKind::Sofr3m, 0.25, 0.5);
        let c = cfg(3000);
        let a = mc_price(&k, &spec, &c).unwrap();
        let b = mc_price(&k, &spec, &c).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c3 = pool.install(|| mc_price(&k, &spec, &c).unwrap());
        assert_eq!(a, c3);
        let other = mc_price(&k, &spec, &SimConfig { seed: 8, ..c }).unwrap();
        assert_ne!(a.mean, other.mean);
    }

    #[test]
    fn terminal_variance_matches_kernel() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let n = 20_000;
        let e = simulate_paths(
            &k,
            &[1.0],
            &SimConfig {
                step: 1.0 / 52.0,
                ..cfg(n)
            },
        )
        .unwrap();
        let ys: Vec<f64> = e.paths.iter().map(|p| p[0].y).collect();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = k.sigma_rr(0.0, 1.0).unwrap();
        // Var of the sample variance for Gaussian data is 2σ⁴/(n-1).
        let se = target * (2.0 / (n - 1) as f64).sqrt();
        assert!((var - target).abs() < 4.0 * se, "{var} vs {target}");
    }

    #[test]
    fn repeated_and_unsorted_observations() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let e = simulate_paths(&k, &[1.0, 0.5, 1.0, 0.0], &cfg(3)).unwrap();
        for p in &e.paths {
            assert_eq!(p[0], p[2]);
            assert_ne!(p[0], p[1]);
            assert_eq!(p[3], PathState::default());
        }
        let a = ContractSpec::new(ContractKind::Sofr3m, 0.5, 0.75);
        let b = ContractSpec::new(ContractKind::Sofr1m, 0.5, 0.75);
        let [ea, eb, diff] = mc_compare(&k, &a, &b, &cfg(2000)).unwrap();
        assert_eq!(ea, mc_price(&k, &a, &cfg(2000)).unwrap());
        assert_eq!(eb, mc_price(&k, &b, &cfg(2000)).unwrap());
        assert!((diff.mean - (ea.mean - eb.mean)).abs() < 1e-15);
    }

    #[test]
    fn antithetic_pairs_reflect() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let e = simulate_paths(
            &k,
            &[0.5, 1.0],
            &SimConfig {
                antithetic: true,
                ..cfg(6)
            },
        )
        .unwrap();
        for pair in e.paths.chunks(2) {
            for (up, down) in pair[0].iter().zip(&pair[1]) {
                assert_eq!(up.y, -down.y);
            }
        }
    }

    #[test]
    fn antithetic_shrinks_one_month_error() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, -0.002, 0.02, 2.0)).unwrap();
        let spec = ContractSpec::new(ContractKind::Sofr1m, 0.5, 0.5 + 1.0 / 12.0);
        let plain = mc_price(&k, &spec, &cfg(4000)).unwrap();
        let anti = mc_price(
            &k,
            &spec,
            &SimConfig {
                antithetic: true,
                ..cfg(4000)
            },
        )
        .unwrap();
        assert!(anti.std_error <= plain.std_error);
    }

    #[test]
    fn rejects_forward_and_beyond_horizon() {
        let k = KernelSet::new(ModelParams::constant(0.03, 0.01, 20.0, 0.0, 0.02, 1.0)).unwrap();
        let fwd = ContractSpec::new(ContractKind::Forward, 0.25, 0.5);
        assert!(matches!(
            mc_price(&k, &fwd, &cfg(10)),
            Err(Error::UnsupportedKind(_))
        ));
        assert!(mc_no_arbitrage(&k, &[2.0], &cfg(10)).is_err());
        assert!(mc_no_arbitrage(&k, &[0.0], &cfg(10)).is_err());
    }
}
