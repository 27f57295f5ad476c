use crate::error::{Error, Result};
use ndarray::{Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Layer widths. The input is a flattened `side`×`side`×3 view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Arch {
    /// Filters of the optional 5×5 convolution + global max-pool front end;
    /// 0 feeds flattened pixels straight to the encoder.
    pub conv_filters: usize,
    pub hidden: usize,
    pub feature: usize,
    pub head_hidden: usize,
    pub embed: usize,
}

impl Default for Arch {
    fn default() -> Self {
        Arch {
            conv_filters: 64,
            hidden: 512,
            feature: 256,
            head_hidden: 256,
            embed: 64,
        }
    }
}

impl Arch {
    pub fn validate(&self) -> Result<()> {
        if [self.hidden, self.feature, self.head_hidden, self.embed].contains(&0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        Ok(())
    }
}

/// Fully connected layer `y = x w + b`, `w` is `in × out`, `b` is `1 × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array2<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            w: Array2::zeros((n_in, n_out)),
            b: Array2::zeros((1, n_out)),
        }
    }

    /// He-normal weights, zero bias.
    pub fn init(n_in: usize, n_out: usize, rng: &mut crate::imgcore::Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / n_in as f64).sqrt()).expect("positive std");
        Dense {
            w: Array2::from_shape_simple_fn((n_in, n_out), || normal.sample(rng)),
            b: Array2::zeros((1, n_out)),
        }
    }

    fn apply(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.w) + &self.b
    }
}

/// `dense → ReLU → dense`; used for both the encoder and the heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub l1: Dense,
    pub l2: Dense,
}

impl Mlp {
    pub fn zeros(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        Mlp {
            l1: Dense::zeros(n_in, n_hidden),
            l2: Dense::zeros(n_hidden, n_out),
        }
    }

    pub fn init(n_in: usize, n_hidden: usize, n_out: usize, rng: &mut crate::imgcore::Rng) -> Self {
        Mlp {
            l1: Dense::init(n_in, n_hidden, rng),
            l2: Dense::init(n_hidden, n_out, rng),
        }
    }

    pub fn n_in(&self) -> usize {
        self.l1.w.nrows()
    }

    /// Output and the post-ReLU hidden activations.
    pub fn forward(&self, x: &ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut a = self.l1.apply(x);
        a.mapv_inplace(|v| v.max(0.0));
        let y = self.l2.apply(&a.view());
        (y, a)
    }

    /// Parameter gradients (same layout as `self`) and, if asked, the
    /// gradient with respect to `x`.
    pub fn backward(
        &self,
        x: &ArrayView2<f64>,
        a: &Array2<f64>,
        dy: &Array2<f64>,
        need_dx: bool,
    ) -> (Mlp, Option<Array2<f64>>) {
        let g2 = Dense {
            w: a.t().dot(dy),
            b: dy.sum_axis(Axis(0)).insert_axis(Axis(0)),
        };
        let mut dh = dy.dot(&self.l2.w.t());
        Zip::from(&mut dh).and(a).for_each(|d, &act| {
            if act <= 0.0 {
                *d = 0.0;
            }
        });
        let g1 = Dense {
            w: x.t().dot(&dh),
            b: dh.sum_axis(Axis(0)).insert_axis(Axis(0)),
        };
        let dx = need_dx.then(|| dh.dot(&self.l1.w.t()));
        (Mlp { l1: g1, l2: g2 }, dx)
    }

    pub fn tensors(&self) -> [(&'static str, &Array2<f64>); 4] {
        [
            ("l1.w", &self.l1.w),
            ("l1.b", &self.l1.b),
            ("l2.w", &self.l2.w),
            ("l2.b", &self.l2.b),
        ]
    }

    pub fn tensors_mut(&mut self) -> [(&'static str, &mut Array2<f64>); 4] {
        [
            ("l1.w", &mut self.l1.w),
            ("l1.b", &mut self.l1.b),
            ("l2.w", &mut self.l2.w),
            ("l2.b", &mut self.l2.b),
        ]
    }
}

/// Side of the square convolution kernel.
pub const KERNEL: usize = 5;
const PATCH: usize = KERNEL * KERNEL * 3;

/// `KERNEL`×`KERNEL` valid convolution over HWC images, ReLU, then a global
/// max over positions. `k` is `75 × filters`, rows ordered (ky, kx, c).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvFront {
    pub k: Array2<f64>,
    pub b: Array2<f64>,
}

/// Square side of a flattened HWC row of `n` values, if there is one.
pub fn square_side(n: usize) -> Option<usize> {
    let side = ((n / 3) as f64).sqrt().round() as usize;
    (side * side * 3 == n).then_some(side)
}

fn patches(row: ArrayView1<f64>, side: usize) -> Array2<f64> {
    let out = side - KERNEL + 1;
    let mut p = Array2::zeros((out * out, PATCH));
    for oy in 0..out {
        for ox in 0..out {
            let mut dst = p.row_mut(oy * out + ox);
            for ky in 0..KERNEL {
                let src = ((oy + ky) * side + ox) * 3;
                for (j, &v) in row.slice(ndarray::s![src..src + KERNEL * 3]).iter().enumerate() {
                    dst[ky * KERNEL * 3 + j] = v;
                }
            }
        }
    }
    p
}

/// Marks a pooled unit whose maximum was not positive (no gradient).
const DEAD: usize = usize::MAX;

impl ConvFront {
    pub fn zeros(filters: usize) -> Self {
        ConvFront {
            k: Array2::zeros((PATCH, filters)),
            b: Array2::zeros((1, filters)),
        }
    }

    pub fn init(filters: usize, rng: &mut crate::imgcore::Rng) -> Self {
        let d = Dense::init(PATCH, filters, rng);
        ConvFront { k: d.w, b: d.b }
    }

    pub fn filters(&self) -> usize {
        self.k.ncols()
    }

    /// Pooled activations (`rows × filters`) and, per unit, the winning
    /// position.
    pub fn forward(&self, x: &ArrayView2<f64>, side: usize) -> (Array2<f64>, Vec<usize>) {
        let c = self.filters();
        let mut pooled = Array2::zeros((x.nrows(), c));
        let mut arg = vec![DEAD; x.nrows() * c];
        for (i, row) in x.rows().into_iter().enumerate() {
            let z = patches(row, side).dot(&self.k) + &self.b;
            for (f, col) in z.columns().into_iter().enumerate() {
                let (mut best, mut at) = (0.0, DEAD);
                for (p, &v) in col.iter().enumerate() {
                    if v > best {
                        best = v;
                        at = p;
                    }
                }
                pooled[[i, f]] = best;
                arg[i * c + f] = at;
            }
        }
        (pooled, arg)
    }

    /// Parameter gradients given the gradient of the pooled output. Only
    /// the winning patch of each unit contributes.
    pub fn backward(&self, x: &ArrayView2<f64>, side: usize, arg: &[usize], d_pooled: &Array2<f64>) -> ConvFront {
        let c = self.filters();
        let out = side - KERNEL + 1;
        let mut g = ConvFront::zeros(c);
        for (i, row) in x.rows().into_iter().enumerate() {
            for f in 0..c {
                let p = arg[i * c + f];
                let d = d_pooled[[i, f]];
                if p == DEAD || d == 0.0 {
                    continue;
                }
                let (oy, ox) = (p / out, p % out);
                for ky in 0..KERNEL {
                    let src = ((oy + ky) * side + ox) * 3;
                    for j in 0..KERNEL * 3 {
                        g.k[[ky * KERNEL * 3 + j, f]] += d * row[src + j];
                    }
                }
                g.b[[0, f]] += d;
            }
        }
        g
    }
}

/// Which projection head a batch goes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HeadKind {
    Obj,
    Ctx,
}

/// Encoder plus both projection heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub front: Option<ConvFront>,
    pub encoder: Mlp,
    pub head_obj: Mlp,
    pub head_ctx: Mlp,
}

/// Intermediate values kept for the backward pass.
pub struct Tape {
    /// Encoder input: the pooled front-end output, when there is a front end.
    pub pooled: Option<Array2<f64>>,
    pub pool_arg: Vec<usize>,
    pub enc_hidden: Array2<f64>,
    pub head_hidden: Array2<f64>,
    pub features: Array2<f64>,
    pub norms: Vec<f64>,
}

/// Gradients for the encoder and the head that was used.
pub struct NetGrads {
    pub front: Option<ConvFront>,
    pub encoder: Mlp,
    pub head: Mlp,
    pub head_kind: HeadKind,
}

impl Network {
    /// `n_in` is the flattened input width; it is ignored when the arch
    /// has a convolutional front end, which accepts any square input.
    pub fn init(n_in: usize, arch: &Arch, rng: &mut crate::imgcore::Rng) -> Self {
        let front = (arch.conv_filters > 0).then(|| ConvFront::init(arch.conv_filters, rng));
        let n_in = front.as_ref().map_or(n_in, |f| f.filters());
        Network {
            front,
            encoder: Mlp::init(n_in, arch.hidden, arch.feature, rng),
            head_obj: Mlp::init(arch.feature, arch.head_hidden, arch.embed, rng),
            head_ctx: Mlp::init(arch.feature, arch.head_hidden, arch.embed, rng),
        }
    }

    pub fn zeros(n_in: usize, arch: &Arch) -> Self {
        let front = (arch.conv_filters > 0).then(|| ConvFront::zeros(arch.conv_filters));
        let n_in = front.as_ref().map_or(n_in, |f| f.filters());
        Network {
            front,
            encoder: Mlp::zeros(n_in, arch.hidden, arch.feature),
            head_obj: Mlp::zeros(arch.feature, arch.head_hidden, arch.embed),
            head_ctx: Mlp::zeros(arch.feature, arch.head_hidden, arch.embed),
        }
    }

    pub fn head(&self, kind: HeadKind) -> &Mlp {
        match kind {
            HeadKind::Obj => &self.head_obj,
            HeadKind::Ctx => &self.head_ctx,
        }
    }

    pub fn head_mut(&mut self, kind: HeadKind) -> &mut Mlp {
        match kind {
            HeadKind::Obj => &mut self.head_obj,
            HeadKind::Ctx => &mut self.head_ctx,
        }
    }

    /// Image side for the front end, or `None` without one.
    fn check_input(&self, x: &ArrayView2<f64>) -> Result<Option<usize>> {
        if self.front.is_some() {
            return match square_side(x.ncols()) {
                Some(side) if side >= KERNEL => Ok(Some(side)),
                _ => Err(Error::ShapeMismatch(format!(
                    "{} columns is not a square RGB image of side >= {KERNEL}",
                    x.ncols()
                ))),
            };
        }
        if x.ncols() != self.encoder.n_in() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, encoder expects {}",
                x.ncols(),
                self.encoder.n_in()
            )));
        }
        Ok(None)
    }

    fn front_forward(&self, x: &ArrayView2<f64>, side: Option<usize>) -> (Option<Array2<f64>>, Vec<usize>) {
        match (&self.front, side) {
            (Some(f), Some(side)) => {
                let (p, arg) = f.forward(x, side);
                (Some(p), arg)
            }
            _ => (None, Vec::new()),
        }
    }

    /// Backbone features only.
    pub fn features(&self, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let side = self.check_input(x)?;
        let (pooled, _) = self.front_forward(x, side);
        Ok(self.encoder.forward(&pooled.as_ref().map_or(*x, |p| p.view())).0)
    }

    /// Unit-norm embeddings through the chosen head, with the tape needed by
    /// [`Network::backward`].
    pub fn forward(&self, x: &ArrayView2<f64>, head: HeadKind) -> Result<(Array2<f64>, Tape)> {
        let side = self.check_input(x)?;
        let (pooled, pool_arg) = self.front_forward(x, side);
        let (features, enc_hidden) = self.encoder.forward(&pooled.as_ref().map_or(*x, |p| p.view()));
        let (z, head_hidden) = self.head(head).forward(&features.view());
        let (emb, norms) = normalize_rows(&z)?;
        Ok((
            emb,
            Tape {
                pooled,
                pool_arg,
                enc_hidden,
                head_hidden,
                features,
                norms,
            },
        ))
    }

    /// Gradients of a scalar loss given its gradient `d_emb` with respect to
    /// the unit-norm embeddings returned by `forward`.
    pub fn backward(&self, x: &ArrayView2<f64>, tape: &Tape, emb: &Array2<f64>, d_emb: &Array2<f64>, head: HeadKind) -> NetGrads {
        // d(z/|z|) = (I - e eᵀ) / |z|
        let mut dz = d_emb.clone();
        for ((mut row, e), &n) in dz.rows_mut().into_iter().zip(emb.rows()).zip(&tape.norms) {
            let proj = row.dot(&e);
            row.zip_mut_with(&e, |d, &ei| *d = (*d - proj * ei) / n);
        }
        let (g_head, d_feat) = self
            .head(head)
            .backward(&tape.features.view(), &tape.head_hidden, &dz, true);
        let enc_in = tape.pooled.as_ref().map_or(*x, |p| p.view());
        let (g_enc, d_pooled) = self.encoder.backward(
            &enc_in,
            &tape.enc_hidden,
            &d_feat.expect("requested"),
            self.front.is_some(),
        );
        let front = self.front.as_ref().zip(d_pooled).map(|(f, d)| {
            let side = square_side(x.ncols()).expect("checked in forward");
            f.backward(x, side, &tape.pool_arg, &d)
        });
        NetGrads {
            front,
            encoder: g_enc,
            head: g_head,
            head_kind: head,
        }
    }

    /// Every tensor under a stable name, e.g. `encoder.l1.w`.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = Vec::with_capacity(14);
        if let Some(f) = &self.front {
            out.push(("front.k".to_string(), &f.k));
            out.push(("front.b".to_string(), &f.b));
        }
        for (prefix, m) in [("encoder", &self.encoder), ("head_obj", &self.head_obj), ("head_ctx", &self.head_ctx)] {
            for (n, t) in m.tensors() {
                out.push((format!("{prefix}.{n}"), t));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = Vec::with_capacity(14);
        if let Some(f) = &mut self.front {
            out.push(("front.k".to_string(), &mut f.k));
            out.push(("front.b".to_string(), &mut f.b));
        }
        for (prefix, m) in [
            ("encoder", &mut self.encoder),
            ("head_obj", &mut self.head_obj),
            ("head_ctx", &mut self.head_ctx),
        ] {
            for (n, t) in m.tensors_mut() {
                out.push((format!("{prefix}.{n}"), t));
            }
        }
        out
    }
}

/// Divide each row by its L2 norm. A zero row is an error.
pub fn normalize_rows(z: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let mut out = z.clone();
    let mut norms = Vec::with_capacity(z.nrows());
    for mut row in out.rows_mut() {
        let n = row.dot(&row).sqrt();
        if !(n > 0.0) {
            return Err(Error::ZeroNorm);
        }
        row /= n;
        norms.push(n);
    }
    Ok((out, norms))
}
