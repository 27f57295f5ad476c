use crate::error::{Error, Result};
use crate::io::{read_to_string, write_atomic};
use crate::ssl::TrainConfig;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// Swept hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Delta,
    /// Shift range `[v, v + 20]` pixels.
    Shift,
    Temperature,
    /// Proposals kept per image; the runner recomputes proposals itself.
    NMax,
    ScaleLo,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Delta => "delta",
            SweepParam::Shift => "shift",
            SweepParam::Temperature => "temperature",
            SweepParam::NMax => "n_max",
            SweepParam::ScaleLo => "scale_lo",
        }
    }

    /// Write `value` into `cfg`. `NMax` leaves it untouched.
    pub fn apply(self, cfg: &mut TrainConfig, value: f64) {
        match self {
            SweepParam::Delta => cfg.crop.delta = value,
            SweepParam::Shift => {
                cfg.crop.shift_lo = value;
                cfg.crop.shift_hi = value + 20.0;
            }
            SweepParam::Temperature => cfg.temperature = value,
            SweepParam::NMax => {}
            SweepParam::ScaleLo => cfg.crop.scale_lo = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self, base: &TrainConfig) -> Result<()> {
        if self.values.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep needs at least one value and one seed".into()));
        }
        for &v in &self.values {
            if self.param == SweepParam::NMax {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::InvalidConfig(format!("n_max value {v} is not a positive integer")));
                }
                continue;
            }
            let mut cfg = base.clone();
            self.param.apply(&mut cfg, v);
            cfg.validate()
                .map_err(|e| Error::InvalidConfig(format!("{} = {v}: {e}", self.param.name())))?;
        }
        Ok(())
    }
}

/// What one pretrain + probe run reports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOutcome {
    pub map: f64,
    pub pos_sim: f64,
    pub neg_sim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub outcome: SweepOutcome,
}

pub const SWEEP_HEADER: &str = "param,value,seed,map,pos_sim,neg_sim";

fn render(param: SweepParam, rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let neg = r.outcome.neg_sim.map_or("nan".to_string(), |v| v.to_string());
        writeln!(
            s,
            "{},{},{},{},{},{neg}",
            param.name(),
            r.value,
            r.seed,
            r.outcome.map,
            r.outcome.pos_sim
        )
        .unwrap();
    }
    s
}

fn parse(text: &str, param: SweepParam) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SWEEP_HEADER => {}
        _ => {
            return Err(Error::Malformed {
                line: 1,
                msg: format!("expected header {SWEEP_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let bad = |msg: &str| Error::Malformed {
            line: i + 1,
            msg: msg.into(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        if f[0] != param.name() {
            return Err(bad(&format!("row is for {:?}, sweep is over {:?}", f[0], param.name())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("not a number: {s:?}")));
        let neg = num(f[5])?;
        rows.push(SweepRow {
            value: num(f[1])?,
            seed: f[2].parse().map_err(|_| bad("seed is not an integer"))?,
            outcome: SweepOutcome {
                map: num(f[3])?,
                pos_sim: num(f[4])?,
                neg_sim: (!neg.is_nan()).then_some(neg),
            },
        });
    }
    Ok(rows)
}

/// Run every `(value, seed)` point in grid order, rewriting `csv` after
/// each one. Points already present in `csv` are reused, so an interrupted
/// sweep resumes where it stopped.
pub fn sweep<F>(spec: &SweepSpec, base: &TrainConfig, csv: &Path, mut run: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(f64, &TrainConfig) -> Result<SweepOutcome>,
{
    spec.validate(base)?;
    let done = if csv.exists() {
        parse(&read_to_string(csv)?, spec.param)?
    } else {
        Vec::new()
    };
    let mut rows = Vec::new();
    for &value in &spec.values {
        for &seed in &spec.seeds {
            let prev = done.iter().find(|r| r.value == value && r.seed == seed);
            let row = match prev {
                Some(r) => r.clone(),
                None => {
                    let mut cfg = base.clone();
                    cfg.seed = seed;
                    spec.param.apply(&mut cfg, value);
                    log::info!("sweep {} = {value}, seed {seed}", spec.param.name());
                    let outcome = run(value, &cfg)?;
                    SweepRow { value, seed, outcome }
                }
            };
            rows.push(row);
            if prev.is_none() {
                write_atomic(csv, render(spec.param, &rows).as_bytes())?;
            }
        }
    }
    if rows.len() < done.len() {
        return Err(Error::InvalidConfig(format!(
            "{} holds rows outside this sweep's grid",
            csv.display()
        )));
    }
    write_atomic(csv, render(spec.param, &rows).as_bytes())?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(value: f64, cfg: &TrainConfig) -> Result<SweepOutcome> {
        Ok(SweepOutcome {
            map: value * 0.5 + cfg.seed as f64 * 0.01,
            pos_sim: cfg.crop.delta,
            neg_sim: (cfg.seed > 0).then_some(0.125),
        })
    }

    fn delta_spec() -> SweepSpec {
        SweepSpec {
            param: SweepParam::Delta,
            values: vec![0.0, 0.1, 0.2, 0.3],
            seeds: vec![0, 1],
        }
    }

    #[test]
    fn delta_grid_has_one_row_per_point() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("sweep.csv");
        let rows = sweep(&delta_spec(), &TrainConfig::default(), &csv, fake).unwrap();
        assert_eq!(rows.len(), 8);
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 9);
        assert!(text.starts_with("param,value,seed,map,pos_sim,neg_sim\ndelta,0,0,0,0,nan\n"));
        // the value reached the config
        assert_eq!(rows[7].outcome.pos_sim, 0.3);
    }

    #[test]
    fn resumed_sweep_matches_uninterrupted() {
        let dir = tempfile::tempdir().unwrap();
        let full = dir.path().join("full.csv");
        sweep(&delta_spec(), &TrainConfig::default(), &full, fake).unwrap();

        let part = dir.path().join("part.csv");
        let mut calls = 0;
        let crash = sweep(&delta_spec(), &TrainConfig::default(), &part, |v, c| {
            calls += 1;
            if calls == 4 {
                return Err(Error::InvalidConfig("interrupted".into()));
            }
            fake(v, c)
        });
        assert!(crash.is_err());
        assert_eq!(std::fs::read_to_string(&part).unwrap().lines().count(), 4);
        let mut rerun = 0;
        sweep(&delta_spec(), &TrainConfig::default(), &part, |v, c| {
            rerun += 1;
            fake(v, c)
        })
        .unwrap();
        assert_eq!(rerun, 5);
        assert_eq!(std::fs::read(&part).unwrap(), std::fs::read(&full).unwrap());
    }

    #[test]
    fn single_point_equals_direct_run() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SweepSpec {
            param: SweepParam::Temperature,
            values: vec![0.07],
            seeds: vec![3],
        };
        let rows = sweep(&spec, &TrainConfig::default(), &dir.path().join("t.csv"), |_, c| {
            Ok(SweepOutcome {
                map: c.temperature,
                pos_sim: c.seed as f64,
                neg_sim: None,
            })
        })
        .unwrap();
        assert_eq!(rows[0].outcome.map, 0.07);
        assert_eq!(rows[0].outcome.pos_sim, 3.0);
    }

    #[test]
    fn invalid_specs_rejected() {
        let base = TrainConfig::default();
        let mut s = delta_spec();
        s.seeds.clear();
        assert!(s.validate(&base).is_err());
        let s = SweepSpec {
            param: SweepParam::Temperature,
            values: vec![0.0],
            seeds: vec![0],
        };
        assert!(s.validate(&base).is_err());
        let s = SweepSpec {
            param: SweepParam::NMax,
            values: vec![2.5],
            seeds: vec![0],
        };
        assert!(s.validate(&base).is_err());
    }
}
