use std::io::Write;

use crate::kernels::KernelSet;
use crate::pricing::{convexity, convexity_hw, price_contract, PriceBreakdown};
use crate::termstructure::{Config, ContractKind, ContractSpec};
use crate::{Error, Result};

/// Fixed 17-significant-digit scientific form, exact on round trip.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceRow {
    pub spec: ContractSpec,
    pub breakdown: PriceBreakdown,
    pub epsilon: f64,
}

/// Prices every configured contract (or just `index`) at `y = 0`, `t = 0`.
pub fn price_rows(cfg: &Config, index: Option<usize>) -> Result<Vec<PriceRow>> {
    let specs: Vec<ContractSpec> = match index {
        Some(i) => vec![*cfg.contracts.get(i).ok_or_else(|| {
            Error::InvalidParam(format!(
                "contract index {i} out of range ({} contracts configured)",
                cfg.contracts.len()
            ))
        })?],
        None => cfg.contracts.clone(),
    };
    if specs.is_empty() {
        return Err(Error::InvalidParam("config lists no contracts".into()));
    }
    let k = KernelSet::new(cfg.params.clone())?;
    specs
        .into_iter()
        .map(|spec| {
            let breakdown = match spec.kind {
                ContractKind::Forward => price_contract(&k, &spec, 0.0, 0.0)?,
                _ => convexity(&k, &spec)?,
            };
            Ok(PriceRow {
                spec,
                breakdown,
                epsilon: k.epsilon_until(spec.t2).epsilon,
            })
        })
        .collect()
}

pub fn write_price_csv<W: Write>(out: W, rows: &[PriceRow]) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "kind",
        "T1",
        "T2",
        "v0",
        "v1",
        "total",
        "reference",
        "convexity",
        "epsilon",
    ])?;
    for r in rows {
        let b = &r.breakdown;
        w.write_record([
            r.spec.kind.as_str().to_string(),
            num(r.spec.t1),
            num(r.spec.t2),
            num(b.v0),
            num(b.v1),
            num(b.total),
            num(b.reference),
            num(b.convexity),
            num(r.epsilon),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Settlement dates `t1_start, t1_start + t1_step, ...` up to `t1_end`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub kind: ContractKind,
    pub t1_start: f64,
    pub t1_end: f64,
    pub t1_step: f64,
    pub tenor: f64,
}

impl SweepSpec {
    pub fn dates(&self, horizon: f64) -> Result<Vec<f64>> {
        if !(self.t1_step > 0.0) {
            return Err(Error::InvalidParam(format!(
                "t1-step must be positive, got {}",
                self.t1_step
            )));
        }
        if !(self.t1_start >= 0.0 && self.t1_end >= self.t1_start) {
            return Err(Error::InvalidParam(format!(
                "t1-end ({}) must not precede t1-start ({}) and both must be non-negative",
                self.t1_end, self.t1_start
            )));
        }
        if !(self.tenor > 0.0) {
            return Err(Error::InvalidParam(format!(
                "tenor must be positive, got {}",
                self.tenor
            )));
        }
        if self.kind == ContractKind::Forward {
            return Err(Error::InvalidParam(
                "kind: forwards carry no convexity to sweep".into(),
            ));
        }
        // Index-based so the grid does not drift; the slack admits an end
        // point that is a multiple of the step up to rounding.
        let n = ((self.t1_end - self.t1_start) / self.t1_step + 1e-9).floor() as usize;
        let dates: Vec<f64> = (0..=n).map(|i| self.t1_start + i as f64 * self.t1_step).collect();
        let last = dates[n];
        if last + self.tenor > horizon {
            return Err(Error::InvalidParam(format!(
                "t1-end: last period ends at {} beyond the horizon {horizon}",
                last + self.tenor
            )));
        }
        Ok(dates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub t1: f64,
    pub convexity_full: f64,
    pub convexity_hw: f64,
    /// `convexity_hw - convexity_full`.
    pub difference: f64,
    /// `difference / convexity_full`, zero when the difference is exactly zero.
    pub ratio: f64,
    /// For 3M SOFR: Eurodollar convexity minus SOFR convexity, and that over
    /// the SOFR convexity.
    pub eurodollar_minus_sofr: Option<(f64, f64)>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn sweep_rows(cfg: &Config, spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let dates = spec.dates(cfg.params.horizon)?;
    let k = KernelSet::new(cfg.params.clone())?;
    let hw = KernelSet::new(cfg.hull_white_params())?;
    dates
        .into_iter()
        .map(|t1| {
            let contract = ContractSpec::new(spec.kind, t1, t1 + spec.tenor);
            let full = convexity(&k, &contract)?.convexity;
            let base = convexity_hw(&hw, &contract)?;
            let difference = base - full;
            let eurodollar_minus_sofr = if spec.kind == ContractKind::Sofr3m {
                let ed = ContractSpec {
                    kind: ContractKind::Eurodollar,
                    ..contract
                };
                let d = convexity(&k, &ed)?.convexity - full;
                Some((d, ratio(d, full)))
            } else {
                None
            };
            Ok(SweepRow {
                t1,
                convexity_full: full,
                convexity_hw: base,
                difference,
                ratio: ratio(difference, full),
                eurodollar_minus_sofr,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(
    out: W,
    kind: ContractKind,
    rows: &[SweepRow],
) -> std::result::Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["T1", "convexity_full", "convexity_hw", "difference", "ratio"];
    if kind == ContractKind::Sofr3m {
        header.extend(["eurodollar_minus_sofr", "eurodollar_minus_sofr_ratio"]);
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            num(r.t1),
            num(r.convexity_full),
            num(r.convexity_hw),
            num(r.difference),
            num(r.ratio),
        ];
        if let Some((d, q)) = r.eurodollar_minus_sofr {
            rec.extend([num(d), num(q)]);
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::termstructure::ModelParams;

    fn config(sigma: f64) -> Config {
        Config {
            params: ModelParams::constant(0.03, sigma, 20.0, -0.002, 0.02, 3.0),
            contracts: vec![
                ContractSpec::new(ContractKind::Sofr3m, 0.5, 0.75),
                ContractSpec::new(ContractKind::Sofr1m, 0.5, 0.5 + 1.0 / 12.0),
                ContractSpec::new(ContractKind::Eurodollar, 1.0, 1.25),
                ContractSpec::new(ContractKind::Forward, 1.0, 1.25),
            ],
            hw: Default::default(),
        }
    }

    #[test]
    fn zero_volatility_prices_have_zero_convexity() {
        let rows = price_rows(&config(0.0), None).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.breakdown.convexity == 0.0), "{rows:?}");
    }

    #[test]
    fn rows_equal_library_calls() {
        let cfg = config(0.01);
        let k = KernelSet::new(cfg.params.clone()).unwrap();
        let row = price_rows(&cfg, Some(0)).unwrap()[0];
        assert_eq!(row.breakdown, convexity(&k, &cfg.contracts[0]).unwrap());
        assert!(price_rows(&cfg, Some(9)).is_err());

        let mut buf = Vec::new();
        write_price_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(!text.contains('\r'));
        let fields: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(fields[5].parse::<f64>().unwrap(), row.breakdown.total);
        assert_eq!(fields[7].parse::<f64>().unwrap(), row.breakdown.convexity);
    }

    #[test]
    fn sweep_grid_is_ascending_and_bounded() {
        let s = SweepSpec {
            kind: ContractKind::Sofr3m,
            t1_start: 0.25,
            t1_end: 2.0,
            t1_step: 0.25,
            tenor: 0.25,
        };
        let d = s.dates(3.0).unwrap();
        assert_eq!(d.len(), 8);
        assert_eq!(*d.last().unwrap(), 2.0);
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        assert!(s.dates(2.1).unwrap_err().to_string().contains("t1-end"));
        assert!(SweepSpec { t1_step: 0.0, ..s }.dates(3.0).is_err());
        assert!(SweepSpec { t1_end: 0.1, ..s }.dates(3.0).is_err());
    }

    #[test]
    fn sweep_columns_are_exact_subtractions() {
        let cfg = config(0.01);
        let s = SweepSpec {
            kind: ContractKind::Sofr3m,
            t1_start: 0.5,
            t1_end: 1.5,
            t1_step: 0.5,
            tenor: 0.25,
        };
        let k = KernelSet::new(cfg.params.clone()).unwrap();
        for r in sweep_rows(&cfg, &s).unwrap() {
            let c = ContractSpec::new(ContractKind::Sofr3m, r.t1, r.t1 + 0.25);
            let ed = ContractSpec::new(ContractKind::Eurodollar, r.t1, r.t1 + 0.25);
            let full = convexity(&k, &c).unwrap().convexity;
            assert_eq!(r.convexity_full, full);
            assert_eq!(r.difference, r.convexity_hw - full);
            assert_eq!(r.ratio, r.difference / full);
            let (d, q) = r.eurodollar_minus_sofr.unwrap();
            assert_eq!(d, convexity(&k, &ed).unwrap().convexity - full);
            assert_eq!(q, d / full);
        }
    }

    #[test]
    fn zero_volatility_sweep_is_flat_zero() {
        let s = SweepSpec {
            kind: ContractKind::Sofr1m,
            t1_start: 0.0,
            t1_end: 2.0,
            t1_step: 0.5,
            tenor: 1.0 / 12.0,
        };
        for r in sweep_rows(&config(0.0), &s).unwrap() {
            assert_eq!(
                (r.convexity_full, r.convexity_hw, r.difference, r.ratio),
                (0.0, 0.0, 0.0, 0.0)
            );
            assert!(r.eurodollar_minus_sofr.is_none());
        }
    }
}
