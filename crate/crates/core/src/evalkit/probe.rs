use super::ap::{average_precision, mean_defined};
use crate::error::{Error, Result};
use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub lr: f64,
    pub epochs: usize,
    pub l2: f64,
    /// The backbone is never updated; kept so configs state it explicitly.
    pub frozen: bool,
    /// Side of the centre view fed to the frozen encoder; `None` picks the
    /// model's natural input (see `extract_features`).
    pub view_side: Option<u32>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 0.5,
            epochs: 300,
            l2: 1e-4,
            frozen: true,
            view_side: None,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.frozen {
            return Err(Error::InvalidConfig("probe.frozen must be true".into()));
        }
        if !(self.lr > 0.0 && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig("probe lr must be > 0 and l2 >= 0".into()));
        }
        Ok(())
    }
}

/// One-vs-all logistic regression on standardized features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    /// `features × classes`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl LinearProbe {
    /// Full-batch gradient descent on mean cross-entropy plus `l2/2 ‖w‖²`,
    /// starting from zero weights.
    pub fn fit(x: &Array2<f64>, y: &Array2<f64>, cfg: &ProbeConfig) -> Result<Self> {
        cfg.validate()?;
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {} label rows",
                x.nrows(),
                y.nrows()
            )));
        }
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset("no probe training rows".into()));
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-8 { s } else { 1.0 });
        let mut probe = LinearProbe {
            w: Array2::zeros((x.ncols(), y.ncols())),
            b: Array1::zeros(y.ncols()),
            mean,
            std,
        };
        let xs = probe.standardize(x);
        let n = x.nrows() as f64;
        for _ in 0..cfg.epochs {
            let mut g = probe.scores_standardized(&xs);
            g -= y;
            g /= n;
            let mut dw = xs.t().dot(&g);
            dw.scaled_add(cfg.l2, &probe.w);
            probe.w.scaled_add(-cfg.lr, &dw);
            probe.b.scaled_add(-cfg.lr, &g.sum_axis(Axis(0)));
        }
        Ok(probe)
    }

    fn standardize(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }

    fn scores_standardized(&self, xs: &Array2<f64>) -> Array2<f64> {
        let mut z = xs.dot(&self.w) + &self.b;
        z.mapv_inplace(|v| 1.0 / (1.0 + (-v).exp()));
        z
    }

    /// Class probabilities, `rows × classes`.
    pub fn scores(&self, x: &Array2<f64>) -> Array2<f64> {
        self.scores_standardized(&self.standardize(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// AP per class; `None` for classes without validation positives.
    pub per_class: Vec<Option<f64>>,
    pub n_val_pos: Vec<usize>,
    pub map: f64,
}

impl ProbeReport {
    /// `class,ap,n_pos`; skipped classes have an empty AP field.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,ap,n_pos\n");
        for (c, (ap, n)) in self.per_class.iter().zip(&self.n_val_pos).enumerate() {
            let ap = ap.map(|v| v.to_string()).unwrap_or_default();
            writeln!(s, "{c},{ap},{n}").unwrap();
        }
        s
    }
}

/// Per-class AP and mAP of `scores` against multi-hot `labels`.
pub fn score_report(scores: &Array2<f64>, labels: &Array2<f64>) -> Result<ProbeReport> {
    if scores.dim() != labels.dim() {
        return Err(Error::ShapeMismatch(format!(
            "scores {:?} vs labels {:?}",
            scores.dim(),
            labels.dim()
        )));
    }
    let mut per_class = Vec::with_capacity(labels.ncols());
    let mut n_val_pos = Vec::with_capacity(labels.ncols());
    for c in 0..labels.ncols() {
        let s = scores.column(c).to_vec();
        let l: Vec<bool> = labels.column(c).iter().map(|&v| v > 0.5).collect();
        n_val_pos.push(l.iter().filter(|&&v| v).count());
        let ap = average_precision(&s, &l);
        if ap.is_none() {
            log::warn!("class {c} has no validation positives; skipped");
        }
        per_class.push(ap);
    }
    let map = mean_defined(&per_class).ok_or_else(|| Error::EmptyDataset("no class has validation positives".into()))?;
    Ok(ProbeReport {
        per_class,
        n_val_pos,
        map,
    })
}

/// Fit on the training split and report AP on the validation split.
pub fn linear_probe(
    train_x: &Array2<f64>,
    train_y: &Array2<f64>,
    val_x: &Array2<f64>,
    val_y: &Array2<f64>,
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    if train_x.ncols() != val_x.ncols() || train_y.ncols() != val_y.ncols() {
        return Err(Error::ShapeMismatch("train and validation widths differ".into()));
    }
    let probe = LinearProbe::fit(train_x, train_y, cfg)?;
    score_report(&probe.scores(val_x), val_y)
}
