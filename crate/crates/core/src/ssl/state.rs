use super::net::{Arch, HeadKind, Network};
use crate::cropper::Role;
use crate::error::{Error, Result};
use crate::imgcore::{ImageRgb, Rng};
use ndarray::{Array2, ArrayView2};

/// FIFO ring of key embeddings used as negatives. Each row carries a tag
/// (the global sample counter) so ordering can be checked.
#[derive(Debug, Clone, PartialEq)]
pub struct Queue {
    pub rows: Array2<f64>,
    pub tags: Vec<u64>,
    pub ptr: usize,
    pub len: usize,
}

impl Queue {
    pub fn new(capacity: usize, dim: usize) -> Self {
        Queue {
            rows: Array2::zeros((capacity, dim)),
            tags: vec![0; capacity],
            ptr: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.rows.nrows()
    }

    /// Filled rows. Order within the view is storage order, which does not
    /// matter to the loss.
    pub fn negatives(&self) -> ArrayView2<'_, f64> {
        self.rows.slice(ndarray::s![..self.len, ..])
    }

    /// Overwrite the oldest rows with `keys`, tagging them `first_tag..`.
    pub fn push(&mut self, keys: &Array2<f64>, first_tag: u64) {
        let cap = self.capacity();
        for (i, k) in keys.rows().into_iter().enumerate() {
            self.rows.row_mut(self.ptr).assign(&k);
            self.tags[self.ptr] = first_tag + i as u64;
            self.ptr = (self.ptr + 1) % cap;
        }
        self.len = (self.len + keys.nrows()).min(cap);
    }
}

/// Everything the trainer checkpoints besides optimizer buffers: query and
/// key networks, the negative queue, input normalization and the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: Arch,
    pub input_side: u32,
    /// Per-channel mean and std of `[0, 1]` pixel values, `1 × 3` each.
    pub input_mean: Array2<f64>,
    pub input_std: Array2<f64>,
    pub query: Network,
    pub key: Network,
    pub queue: Queue,
    pub step: u64,
}

impl ModelState {
    /// Fresh state: query initialized from `rng`, key a copy of the query,
    /// empty queue.
    pub fn init(arch: Arch, input_side: u32, queue_size: usize, rng: &mut Rng) -> Self {
        let n_in = (input_side * input_side * 3) as usize;
        let query = Network::init(n_in, &arch, rng);
        ModelState {
            arch,
            input_side,
            input_mean: Array2::zeros((1, 3)),
            input_std: Array2::ones((1, 3)),
            key: query.clone(),
            query,
            queue: Queue::new(queue_size, arch.embed),
            step: 0,
        }
    }

    pub fn n_inputs(&self) -> usize {
        (self.input_side * self.input_side * 3) as usize
    }

    /// Set the input normalization from the pixels of `images`.
    pub fn fit_input_stats<'a>(&mut self, images: impl IntoIterator<Item = &'a ImageRgb>) {
        let mut sum = [0f64; 3];
        let mut sq = [0f64; 3];
        let mut n = 0u64;
        for img in images {
            for p in img.data().chunks_exact(3) {
                for c in 0..3 {
                    let v = p[c] as f64 / 255.0;
                    sum[c] += v;
                    sq[c] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return;
        }
        for c in 0..3 {
            let m = sum[c] / n as f64;
            let var = (sq[c] / n as f64 - m * m).max(0.0);
            self.input_mean[[0, c]] = m;
            self.input_std[[0, c]] = var.sqrt().max(1e-3);
        }
    }

    /// Standardized, flattened (row-major, channel-last) rows for `views`.
    /// Views must be `input_side` square, or, with a convolutional front
    /// end, any common square size.
    pub fn input_rows(&self, views: &[&ImageRgb]) -> Result<Array2<f64>> {
        let side = match (self.query.front.is_some(), views.first()) {
            (true, Some(v)) => v.width(),
            _ => self.input_side,
        };
        let d = (side * side * 3) as usize;
        let mut x = Array2::zeros((views.len(), d));
        let (mean, std) = (self.input_mean.row(0), self.input_std.row(0));
        for (mut row, v) in x.rows_mut().into_iter().zip(views) {
            if v.width() != side || v.height() != side {
                return Err(Error::ShapeMismatch(format!(
                    "view is {}x{}, model expects {side}x{side}",
                    v.width(),
                    v.height(),
                )));
            }
            for (j, (dst, &px)) in row.iter_mut().zip(v.data()).enumerate() {
                let c = j % 3;
                *dst = (px as f64 / 255.0 - mean[c]) / std[c];
            }
        }
        Ok(x)
    }

    /// Backbone features of the query encoder.
    pub fn features(&self, views: &[&ImageRgb]) -> Result<Array2<f64>> {
        self.query.features(&self.input_rows(views)?.view())
    }

    /// Every tensor under its checkpoint name.
    pub fn tensors(&self) -> Vec<(String, &Array2<f64>)> {
        let mut out = vec![
            ("input_mean".to_string(), &self.input_mean),
            ("input_std".to_string(), &self.input_std),
        ];
        for (suffix, net) in [("q", &self.query), ("k", &self.key)] {
            for (name, t) in net.tensors() {
                let (module, param) = name.split_once('.').expect("dotted name");
                out.push((format!("{module}_{suffix}.{param}"), t));
            }
        }
        out.push(("queue".to_string(), &self.queue.rows));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<f64>)> {
        let mut out = vec![
            ("input_mean".to_string(), &mut self.input_mean),
            ("input_std".to_string(), &mut self.input_std),
        ];
        for (suffix, net) in [("q", &mut self.query), ("k", &mut self.key)] {
            for (name, t) in net.tensors_mut() {
                let (module, param) = name.split_once('.').expect("dotted name");
                out.push((format!("{module}_{suffix}.{param}"), t));
            }
        }
        out.push(("queue".to_string(), &mut self.queue.rows));
        out
    }
}

/// Head used for each view given the pair's roles: mixed roles use their
/// own heads, equal roles share the object head.
pub fn route_heads(role_a: Role, role_b: Role) -> (HeadKind, HeadKind) {
    let kind = |r| match r {
        Role::Object => HeadKind::Obj,
        Role::Context => HeadKind::Ctx,
    };
    if role_a == role_b {
        (HeadKind::Obj, HeadKind::Obj)
    } else {
        (kind(role_a), kind(role_b))
    }
}

/// `θ_k ← m θ_k + (1 − m) θ_q` for every tensor pair.
pub fn momentum_update(key: &mut Network, query: &Network, m: f64) -> Result<()> {
    let q = query.tensors();
    let mut k = key.tensors_mut();
    if q.len() != k.len() {
        return Err(Error::ShapeMismatch("networks have different layouts".into()));
    }
    for ((name, kt), (_, qt)) in k.iter().zip(&q) {
        if kt.shape() != qt.shape() {
            return Err(Error::ShapeMismatch(format!(
                "{name}: key {:?} vs query {:?}",
                kt.shape(),
                qt.shape()
            )));
        }
    }
    // written as k + (1 - m)(q - k) so that k == q stays exactly fixed
    for ((_, kt), (_, qt)) in k.iter_mut().zip(&q) {
        if m == 0.0 {
            kt.assign(qt);
        } else {
            kt.zip_mut_with(qt, |a, &b| *a += (1.0 - m) * (b - *a));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Arch {
        Arch {
            conv_filters: 0,
            hidden: 5,
            feature: 4,
            head_hidden: 3,
            embed: 2,
        }
    }

    #[test]
    fn momentum_examples() {
        let mut rng = Rng::new(0);
        let q = Network::init(6, &tiny(), &mut rng);
        let k0 = Network::init(6, &tiny(), &mut rng);

        let mut k = k0.clone();
        momentum_update(&mut k, &q, 1.0).unwrap();
        assert_eq!(k, k0);
        momentum_update(&mut k, &q, 0.0).unwrap();
        assert_eq!(k, q);

        let mut zero = Network::zeros(6, &tiny());
        let mut two = Network::zeros(6, &tiny());
        for (_, t) in two.tensors_mut() {
            t.fill(2.0);
        }
        momentum_update(&mut zero, &two, 0.5).unwrap();
        assert!(zero.tensors().iter().all(|(_, t)| t.iter().all(|&v| v == 1.0)));

        let mut other = Network::zeros(7, &tiny());
        assert!(matches!(momentum_update(&mut other, &q, 0.5), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn key_stays_between_old_key_and_query() {
        let mut rng = Rng::new(1);
        let q = Network::init(6, &tiny(), &mut rng);
        let k0 = Network::init(6, &tiny(), &mut rng);
        let mut k = k0.clone();
        momentum_update(&mut k, &q, 0.9).unwrap();
        for (((_, a), (_, b)), (_, c)) in k0.tensors().iter().zip(k.tensors()).zip(q.tensors()) {
            for ((&old, &new), &target) in a.iter().zip(b.iter()).zip(c.iter()) {
                assert!(new >= old.min(target) && new <= old.max(target));
            }
        }
    }

    #[test]
    fn queue_is_fifo() {
        let mut q = Queue::new(4, 2);
        q.push(&array![[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]], 0);
        assert_eq!(q.len, 3);
        q.push(&array![[0.0, 1.0], [1.0, 0.0]], 3);
        assert_eq!(q.len, 4);
        // oldest (tag 0) was overwritten by tag 4
        assert_eq!(q.tags, vec![4, 1, 2, 3]);
        assert_eq!(q.ptr, 1);
        assert_eq!(q.negatives().nrows(), 4);
    }

    #[test]
    fn routing_rule() {
        use Role::*;
        assert_eq!(route_heads(Context, Context), (HeadKind::Obj, HeadKind::Obj));
        assert_eq!(route_heads(Object, Object), (HeadKind::Obj, HeadKind::Obj));
        assert_eq!(route_heads(Object, Context), (HeadKind::Obj, HeadKind::Ctx));
        assert_eq!(route_heads(Context, Object), (HeadKind::Ctx, HeadKind::Obj));
    }

    #[test]
    fn input_rows_standardize_channels() {
        let mut rng = Rng::new(2);
        let mut st = ModelState::init(tiny(), 2, 4, &mut rng);
        let img = ImageRgb::from_raw(2, 2, vec![0, 255, 51, 255, 255, 51, 0, 255, 51, 255, 255, 51]).unwrap();
        st.fit_input_stats([&img]);
        let x = st.input_rows(&[&img]).unwrap();
        // red alternates 0/1: mean 0.5, std 0.5; green and blue are constant
        assert_eq!(x.row(0).to_vec()[..3], [-1.0, 0.0, 0.0]);
        assert_eq!(x[[0, 3]], 1.0);
        let wrong = ImageRgb::new(3, 2).unwrap();
        assert!(st.input_rows(&[&wrong]).is_err());
    }
}
