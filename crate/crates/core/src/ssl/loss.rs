use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

fn check_unit(v: ArrayView1<f64>) -> Result<()> {
    let n = v.dot(&v).sqrt();
    if !(n > 0.0) {
        return Err(Error::ZeroNorm);
    }
    if (n - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidConfig(format!("expected a unit vector, norm is {n}")));
    }
    Ok(())
}

/// `-log( e^{q·k/τ} / (e^{q·k/τ} + Σ_j e^{q·n_j/τ}) )` and its gradient with
/// respect to `q`. Keys and negatives are constants. `negatives` holds one
/// unit vector per row and may be empty.
pub fn info_nce(
    q: ArrayView1<f64>,
    k_pos: ArrayView1<f64>,
    negatives: ArrayView2<f64>,
    tau: f64,
) -> Result<(f64, Array1<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig("temperature must be positive".into()));
    }
    check_unit(q)?;
    check_unit(k_pos)?;
    for n in negatives.rows() {
        check_unit(n)?;
    }
    let mut logits = Vec::with_capacity(negatives.nrows() + 1);
    logits.push(q.dot(&k_pos) / tau);
    logits.extend(negatives.rows().into_iter().map(|n| q.dot(&n) / tau));
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let loss = max + z.ln() - logits[0];
    // dL/dq = (Σ_i p_i v_i - k) / τ with v_0 = k
    let mut grad = k_pos.to_owned() * ((logits[0] - max).exp() / z - 1.0);
    for (n, l) in negatives.rows().into_iter().zip(&logits[1..]) {
        grad.scaled_add((l - max).exp() / z, &n);
    }
    grad /= tau;
    Ok((loss, grad))
}

/// Batch statistics of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NceStats {
    pub loss: f64,
    pub pos_sim: f64,
    /// Mean cosine to the negatives; `None` when there are none.
    pub neg_sim: Option<f64>,
}

/// Mean of [`info_nce`] over the rows of `q` (each paired with the same row
/// of `k`) against shared `negatives`. Returns the gradient with respect to
/// `q`, already divided by the batch size. Inputs are assumed unit-norm.
pub fn info_nce_batch(
    q: &Array2<f64>,
    k: &Array2<f64>,
    negatives: ArrayView2<f64>,
    tau: f64,
) -> (NceStats, Array2<f64>) {
    let b = q.nrows();
    let pos: Array1<f64> = (q * k).sum_axis(Axis(1));
    let neg = q.dot(&negatives.t());
    let mut grad = Array2::zeros(q.raw_dim());
    // weights for the negatives, filled row by row
    let mut w_neg = Array2::zeros(neg.raw_dim());
    let mut loss = 0.0;
    for i in 0..b {
        let l0 = pos[i] / tau;
        let row = neg.row(i);
        let max = row.iter().map(|s| s / tau).fold(l0, f64::max);
        let e0 = (l0 - max).exp();
        let mut z = e0;
        for (w, &s) in w_neg.row_mut(i).iter_mut().zip(row) {
            *w = (s / tau - max).exp();
            z += *w;
        }
        loss += max + z.ln() - l0;
        w_neg.row_mut(i).mapv_inplace(|w| w / (z * tau * b as f64));
        grad.row_mut(i)
            .scaled_add((e0 / z - 1.0) / (tau * b as f64), &k.row(i));
    }
    grad += &w_neg.dot(&negatives);
    let stats = NceStats {
        loss: loss / b as f64,
        pos_sim: pos.mean().unwrap_or(0.0),
        neg_sim: (!neg.is_empty()).then(|| neg.mean().unwrap_or(0.0)),
    };
    (stats, grad)
}
