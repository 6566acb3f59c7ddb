//! Time-dependent model inputs: piecewise-constant parameter curves, the
//! instantaneous forward curve and the JSON configuration that carries them.
//!
//! All times are year fractions measured from the as-of date `t = 0`.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_order, Error, Result};

/// Right-continuous piecewise-constant function of time with flat
/// extrapolation on both sides.
///
/// `values[i]` applies on `[breakpoints[i], breakpoints[i + 1])`; times before
/// the first breakpoint take `values[0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveRaw", into = "CurveRaw")]
pub struct PiecewiseCurve {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRaw {
    #[serde(default)]
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<CurveRaw> for PiecewiseCurve {
    type Error = String;

    fn try_from(raw: CurveRaw) -> std::result::Result<Self, String> {
        PiecewiseCurve::new(raw.breakpoints, raw.values).map_err(|e| match e {
            Error::InvalidCurve { reason, .. } => reason,
            other => other.to_string(),
        })
    }
}

impl From<PiecewiseCurve> for CurveRaw {
    fn from(c: PiecewiseCurve) -> Self {
        CurveRaw {
            breakpoints: c.breakpoints,
            values: c.values,
        }
    }
}

impl PiecewiseCurve {
    /// Builds a curve, rejecting unsorted breakpoints and non-finite values.
    /// An empty breakpoint list with a single value is a constant curve.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let invalid = |reason: String| Error::InvalidCurve {
            curve: String::new(),
            reason,
        };
        if values.is_empty() {
            return Err(invalid("at least one value is required".into()));
        }
        let breakpoints = if breakpoints.is_empty() && values.len() == 1 {
            vec![0.0]
        } else {
            breakpoints
        };
        if breakpoints.len() != values.len() {
            return Err(invalid(format!(
                "{} breakpoints but {} values",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(invalid("breakpoints must be finite".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("breakpoints must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("values must be finite".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Self {
        Self {
            breakpoints: vec![0.0],
            values: vec![value],
        }
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segment(&self, t: f64) -> usize {
        self.breakpoints.partition_point(|b| *b <= t).saturating_sub(1)
    }

    /// Flat-extrapolated, right-continuous value at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        self.values[self.segment(t)]
    }

    /// Exact integral over `[a, b]`, summed segment by segment. Returns the
    /// negated integral when `a > b`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        if a > b {
            return -self.integral(b, a);
        }
        let mut total = 0.0;
        let mut lo = a;
        let mut i = self.segment(a);
        while lo < b {
            let hi = self
                .breakpoints
                .get(i + 1)
                .copied()
                .filter(|&x| x < b)
                .unwrap_or(b);
            total += self.values[i] * (hi - lo);
            lo = hi;
            i += 1;
        }
        total
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multiplies every segment value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// Quadrature settings shared by every kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Gauss-Legendre order used on each panel.
    pub nodes_per_segment: usize,
    /// Node count per dimension for nested or two-dimensional tabulations.
    pub inner_grid_points: usize,
    /// Below this smile factor `sinh(γx)/γ` and `cosh(γx) - 1` switch to series.
    pub gamma_floor: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            nodes_per_segment: 20,
            inner_grid_points: 64,
            gamma_floor: 1e-8,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_segment < 4 {
            return Err(Error::InvalidParam(
                "quadrature.nodes_per_segment must be at least 4".into(),
            ));
        }
        if self.inner_grid_points == 0 {
            return Err(Error::InvalidParam(
                "quadrature.inner_grid_points must be positive".into(),
            ));
        }
        if !(self.gamma_floor > 0.0 && self.gamma_floor <= 1e-4) {
            return Err(Error::InvalidParam(
                "quadrature.gamma_floor must lie in (0, 1e-4]".into(),
            ));
        }
        Ok(())
    }
}

/// Full model state: OU mean reversion `alpha`, volatility `sigma`, smile
/// factor `gamma`, skew function `y_star` and instantaneous forward curve
/// `rbar`, calibrated up to `horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: PiecewiseCurve,
    pub sigma: PiecewiseCurve,
    pub gamma: PiecewiseCurve,
    pub y_star: PiecewiseCurve,
    pub rbar: PiecewiseCurve,
    pub horizon: f64,
    pub quadrature: QuadConfig,
}

impl ModelParams {
    /// Constant-coefficient parameter set with default quadrature.
    pub fn constant(alpha: f64, sigma: f64, gamma: f64, y_star: f64, rbar: f64, horizon: f64) -> Self {
        Self {
            alpha: PiecewiseCurve::constant(alpha),
            sigma: PiecewiseCurve::constant(sigma),
            gamma: PiecewiseCurve::constant(gamma),
            y_star: PiecewiseCurve::constant(y_star),
            rbar: PiecewiseCurve::constant(rbar),
            horizon,
            quadrature: QuadConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParam("horizon must be positive".into()));
        }
        for (name, curve) in [
            ("alpha", &self.alpha),
            ("sigma", &self.sigma),
            ("gamma", &self.gamma),
        ] {
            if curve.min_value() < 0.0 {
                return Err(Error::InvalidParam(format!("{name} must be non-negative")));
            }
        }
        self.quadrature.validate()
    }

    /// Sorted union of all curve breakpoints inside `(0, horizon)`.
    pub fn knots(&self) -> Vec<f64> {
        let mut k: Vec<f64> = [&self.alpha, &self.sigma, &self.gamma, &self.y_star, &self.rbar]
            .iter()
            .flat_map(|c| c.breakpoints().iter().copied())
            .filter(|&b| b > 0.0 && b < self.horizon)
            .collect();
        k.sort_by(f64::total_cmp);
        k.dedup();
        k
    }

    /// `-log D(t1, t2)`, the integral of the forward curve.
    pub fn forward_integral(&self, t1: f64, t2: f64) -> Result<f64> {
        check_order("discount", t1, t2)?;
        Ok(self.rbar.integral(t1, t2))
    }

    /// `t1`-forward price of the `t2`-maturity zero coupon bond.
    pub fn discount(&self, t1: f64, t2: f64) -> Result<f64> {
        Ok((-self.forward_integral(t1, t2)?).exp())
    }

    /// Same parameters with a constant smile factor and no skew; the
    /// extended model collapses onto Hull-White as `gamma -> 0`.
    pub fn hull_white_limit(&self, gamma: f64) -> Self {
        Self {
            gamma: PiecewiseCurve::constant(gamma),
            y_star: PiecewiseCurve::constant(0.0),
            ..self.clone()
        }
    }

    pub fn with_sigma(&self, sigma: PiecewiseCurve) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContractKind {
    Sofr1m,
    Sofr3m,
    Eurodollar,
    Forward,
}

impl ContractKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ContractKind::Sofr1m => "sofr1m",
            ContractKind::Sofr3m => "sofr3m",
            ContractKind::Eurodollar => "eurodollar",
            ContractKind::Forward => "forward",
        }
    }
}

impl fmt::Display for ContractKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ContractKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "sofr1m" => Ok(ContractKind::Sofr1m),
            "sofr3m" => Ok(ContractKind::Sofr3m),
            "eurodollar" => Ok(ContractKind::Eurodollar),
            "forward" => Ok(ContractKind::Forward),
            other => Err(format!("unknown contract kind `{other}`")),
        }
    }
}

/// A futures (or forward) contract on the accrual period `[t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractSpec {
    pub kind: ContractKind,
    pub t1: f64,
    pub t2: f64,
    pub delta: f64,
}

impl ContractSpec {
    pub fn new(kind: ContractKind, t1: f64, t2: f64) -> Self {
        Self {
            kind,
            t1,
            t2,
            delta: t2 - t1,
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<()> {
        if !(self.t1 >= 0.0 && self.t1 < self.t2) {
            return Err(Error::InvalidParam(format!(
                "contract requires 0 <= t1 < t2, got t1={} t2={}",
                self.t1, self.t2
            )));
        }
        if self.t2 > horizon {
            return Err(Error::InvalidParam(format!(
                "contract t2={} exceeds horizon {horizon}",
                self.t2
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParam("contract delta must be positive".into()));
        }
        Ok(())
    }
}

/// Optional Hull-White comparison curves (e.g. volatility recalibrated to
/// at-the-money caplets). Missing curves fall back to the main model's.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HullWhiteCurves {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<PiecewiseCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<PiecewiseCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveSet {
    alpha: CurveRaw,
    sigma: CurveRaw,
    gamma: CurveRaw,
    y_star: CurveRaw,
    rbar: CurveRaw,
}

fn named_curve(name: &str, raw: CurveRaw) -> Result<PiecewiseCurve> {
    PiecewiseCurve::new(raw.breakpoints, raw.values).map_err(|e| match e {
        Error::InvalidCurve { reason, .. } => Error::InvalidCurve {
            curve: name.to_string(),
            reason,
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigFile {
    horizon: f64,
    curves: CurveSet,
    #[serde(default)]
    quadrature: QuadConfig,
    #[serde(default)]
    contracts: Vec<ContractSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hw: Option<HullWhiteCurves>,
}

/// Validated contents of a configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub params: ModelParams,
    pub contracts: Vec<ContractSpec>,
    pub hw: HullWhiteCurves,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(text);
        let file: ConfigFile = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::ConfigField {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        de.end()?;
        let ConfigFile {
            horizon,
            curves,
            quadrature,
            contracts,
            hw,
        } = file;
        let params = ModelParams {
            alpha: named_curve("alpha", curves.alpha)?,
            sigma: named_curve("sigma", curves.sigma)?,
            gamma: named_curve("gamma", curves.gamma)?,
            y_star: named_curve("y_star", curves.y_star)?,
            rbar: named_curve("rbar", curves.rbar)?,
            horizon,
            quadrature,
        };
        params.validate()?;
        for (i, c) in contracts.iter().enumerate() {
            c.validate(horizon).map_err(|e| match e {
                Error::InvalidParam(msg) => Error::InvalidParam(format!("contracts[{i}]: {msg}")),
                other => other,
            })?;
        }
        let hw = hw.unwrap_or_default();
        if let Some(s) = &hw.sigma {
            if s.min_value() < 0.0 {
                return Err(Error::InvalidParam("hw.sigma must be non-negative".into()));
            }
        }
        if let Some(a) = &hw.alpha {
            if a.min_value() < 0.0 {
                return Err(Error::InvalidParam("hw.alpha must be non-negative".into()));
            }
        }
        Ok(Self {
            params,
            contracts,
            hw,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let file = ConfigFile {
            horizon: p.horizon,
            curves: CurveSet {
                alpha: p.alpha.clone().into(),
                sigma: p.sigma.clone().into(),
                gamma: p.gamma.clone().into(),
                y_star: p.y_star.clone().into(),
                rbar: p.rbar.clone().into(),
            },
            quadrature: p.quadrature,
            contracts: self.contracts.clone(),
            hw: if self.hw == HullWhiteCurves::default() {
                None
            } else {
                Some(self.hw.clone())
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Hull-White comparison model: zero smile, zero skew, optionally
    /// replaced mean reversion and volatility.
    pub fn hull_white_params(&self) -> ModelParams {
        let mut p = self.params.hull_white_limit(0.0);
        if let Some(a) = &self.hw.alpha {
            p.alpha = a.clone();
        }
        if let Some(s) = &self.hw.sigma {
            p.sigma = s.clone();
        }
        p
    }
}

/// Reads and validates a JSON configuration file.
pub fn load_config(path: impl AsRef<Path>) -> Result<Config> {
    let text = std::fs::read_to_string(path)?;
    Config::from_json(&text)
}
