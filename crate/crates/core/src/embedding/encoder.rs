//! Speaking-style encoder: input projection, two residual multi-head
//! self-attention layers, attentive statistics pooling, linear projection to 256-D.
//!
//! There is no positional encoding. Frames are put in a canonical (lexicographic)
//! order before encoding, which makes the output bit-identical under any frame
//! permutation rather than merely equal up to rounding.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SpeakerEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};
use crate::spectral::{MelSpectrogram, N_MELS};

pub const N_LAYERS: usize = 2;
pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const CHECKPOINT_VERSION: u32 = 1;

/// Fixed affine standardization of log-mel input: `(x - MEL_CENTER) / MEL_SPREAD`.
const MEL_CENTER: f64 = -4.0;
const MEL_SPREAD: f64 = 4.0;
/// Added to the pooled variance before the square root.
const VAR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub d_model: usize,
    pub n_heads: usize,
    pub dropout: f64,
    pub seed: u64,
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub layers: Vec<LayerParams>,
    pub pool_w: Array2<f64>,
    pub pool_b: Array1<f64>,
    pub pool_v: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..bound))
}

impl EncoderParams {
    /// Glorot-uniform weights, zero biases, seeded.
    pub fn init(d_model: usize, n_heads: usize, seed: u64) -> Self {
        assert!(n_heads > 0 && d_model % n_heads == 0, "heads must divide d_model");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_in = uniform_matrix(&mut rng, N_MELS, d_model);
        let layers = (0..N_LAYERS)
            .map(|_| LayerParams {
                wq: uniform_matrix(&mut rng, d_model, d_model),
                wk: uniform_matrix(&mut rng, d_model, d_model),
                wv: uniform_matrix(&mut rng, d_model, d_model),
                wo: uniform_matrix(&mut rng, d_model, d_model),
            })
            .collect();
        let pool_w = uniform_matrix(&mut rng, d_model, d_model);
        let pool_v = uniform_matrix(&mut rng, d_model, 1).column(0).to_owned();
        let w_out = uniform_matrix(&mut rng, 2 * d_model, EMBEDDING_DIM);
        EncoderParams {
            d_model,
            n_heads,
            dropout: DEFAULT_DROPOUT,
            seed,
            w_in,
            b_in: Array1::zeros(d_model),
            layers,
            pool_w,
            pool_b: Array1::zeros(d_model),
            pool_v,
            w_out,
            b_out: Array1::zeros(EMBEDDING_DIM),
        }
    }

    /// Same shapes, all zeros. Used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.visit_mut(|_, t| t.iter_mut().for_each(|v| *v = 0.0));
        z
    }

    fn tensor_names() -> Vec<String> {
        let mut names = vec!["w_in".to_string(), "b_in".to_string()];
        for l in 0..N_LAYERS {
            for m in ["wq", "wk", "wv", "wo"] {
                names.push(format!("layers.{l}.{m}"));
            }
        }
        names.extend(["pool_w", "pool_b", "pool_v", "w_out", "b_out"].map(String::from));
        names
    }

    fn tensors(&self) -> Vec<(Vec<usize>, &[f64])> {
        fn m(a: &Array2<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        fn v(a: &Array1<f64>) -> (Vec<usize>, &[f64]) {
            (a.shape().to_vec(), a.as_slice().expect("standard layout"))
        }
        let mut out = vec![m(&self.w_in), v(&self.b_in)];
        for l in &self.layers {
            out.extend([m(&l.wq), m(&l.wk), m(&l.wv), m(&l.wo)]);
        }
        out.extend([m(&self.pool_w), v(&self.pool_b), v(&self.pool_v), m(&self.w_out), v(&self.b_out)]);
        out
    }

    /// Calls `f(name, values)` for every parameter tensor in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(&str, &[f64])) {
        for (name, (_, data)) in Self::tensor_names().iter().zip(self.tensors()) {
            f(name, data);
        }
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        let names = Self::tensor_names();
        let mut slices: Vec<&mut [f64]> = vec![
            self.w_in.as_slice_mut().expect("standard layout"),
            self.b_in.as_slice_mut().expect("standard layout"),
        ];
        for l in &mut self.layers {
            for t in [&mut l.wq, &mut l.wk, &mut l.wv, &mut l.wo] {
                slices.push(t.as_slice_mut().expect("standard layout"));
            }
        }
        slices.push(self.pool_w.as_slice_mut().expect("standard layout"));
        slices.push(self.pool_b.as_slice_mut().expect("standard layout"));
        slices.push(self.pool_v.as_slice_mut().expect("standard layout"));
        slices.push(self.w_out.as_slice_mut().expect("standard layout"));
        slices.push(self.b_out.as_slice_mut().expect("standard layout"));
        for (name, slice) in names.iter().zip(slices) {
            f(name, slice);
        }
    }

    /// All parameters concatenated in visit order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.parameter_count());
        self.visit(|_, t| out.extend_from_slice(t));
        out
    }

    /// Inverse of [`EncoderParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count(), "flat parameter length");
        let mut offset = 0;
        self.visit_mut(|_, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|(_, d)| d.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_model;
        if d == 0 || self.n_heads == 0 || d % self.n_heads != 0 {
            return Err(Error::InvalidParameter(format!(
                "{} heads do not divide d_model {}",
                self.n_heads, d
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        let expect = |name: &str, got: &[usize], want: &[usize]| -> Result<()> {
            if got != want {
                return Err(Error::dims(format!("{name} {want:?}"), format!("{got:?}")));
            }
            Ok(())
        };
        if self.layers.len() != N_LAYERS {
            return Err(Error::dims(format!("{N_LAYERS} layers"), self.layers.len()));
        }
        expect("w_in", self.w_in.shape(), &[N_MELS, d])?;
        expect("b_in", self.b_in.shape(), &[d])?;
        for l in &self.layers {
            for t in [&l.wq, &l.wk, &l.wv, &l.wo] {
                expect("attention weight", t.shape(), &[d, d])?;
            }
        }
        expect("pool_w", self.pool_w.shape(), &[d, d])?;
        expect("pool_b", self.pool_b.shape(), &[d])?;
        expect("pool_v", self.pool_v.shape(), &[d])?;
        expect("w_out", self.w_out.shape(), &[2 * d, EMBEDDING_DIM])?;
        expect("b_out", self.b_out.shape(), &[EMBEDDING_DIM])?;
        let mut finite = true;
        self.visit(|_, t| finite &= t.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("non-finite encoder parameter".into()));
        }
        Ok(())
    }

    /// Writes a versioned JSON checkpoint with explicit tensor shapes.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let names = Self::tensor_names();
        let tensors = names
            .into_iter()
            .zip(self.tensors())
            .map(|(name, (shape, data))| CheckpointTensor {
                name,
                shape,
                data: data.to_vec(),
            })
            .collect();
        let ckpt = Checkpoint {
            format_version: CHECKPOINT_VERSION,
            d_model: self.d_model,
            n_heads: self.n_heads,
            dropout: self.dropout,
            seed: self.seed,
            tensors,
        };
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, &ckpt)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let ckpt: Checkpoint =
            serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
        if ckpt.format_version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {} (expected {CHECKPOINT_VERSION})",
                ckpt.format_version
            )));
        }
        if ckpt.n_heads == 0 || ckpt.d_model % ckpt.n_heads != 0 {
            return Err(Error::Checkpoint("n_heads must divide d_model".into()));
        }
        let mut params = EncoderParams::init(ckpt.d_model, ckpt.n_heads, ckpt.seed);
        params.dropout = ckpt.dropout;
        let expected: Vec<(String, Vec<usize>)> = Self::tensor_names()
            .into_iter()
            .zip(params.tensors().into_iter().map(|(s, _)| s))
            .collect();
        if expected.len() != ckpt.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                ckpt.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&ckpt.tensors) {
            if &t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?} ({} values), expected {name} {shape:?}",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        let mut i = 0;
        params.visit_mut(|_, dst| {
            dst.copy_from_slice(&ckpt.tensors[i].data);
            i += 1;
        });
        params.validate()?;
        Ok(params)
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    d_model: usize,
    n_heads: usize,
    dropout: f64,
    seed: u64,
    tensors: Vec<CheckpointTensor>,
}

struct LayerCache {
    h_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Attention weights per head, T × T.
    attn: Vec<Array2<f64>>,
    concat: Array2<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    x: Array2<f64>,
    layers: Vec<LayerCache>,
    h: Array2<f64>,
    u: Array2<f64>,
    alpha: Array1<f64>,
    mu: Array1<f64>,
    sigma: Array1<f64>,
    /// Pooled vector after dropout (what the output projection saw).
    z: Array1<f64>,
    /// Inverted-dropout multipliers, when training.
    mask: Option<Array1<f64>>,
}

fn softmax_in_place(mut row: ndarray::ArrayViewMut1<'_, f64>) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    row.mapv_inplace(|v| (v - max).exp());
    let sum = row.sum();
    row.mapv_inplace(|v| v / sum);
}

/// Standardized frames in canonical lexicographic order.
fn canonical_input(m: &MelSpectrogram) -> Array2<f64> {
    let mut rows: Vec<ArrayView1<'_, f64>> = m.values.rows().into_iter().collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut x = Array2::zeros((rows.len(), m.n_bands()));
    for (mut dst, src) in x.rows_mut().into_iter().zip(rows) {
        dst.assign(&src.mapv(|v| (v - MEL_CENTER) / MEL_SPREAD));
    }
    x
}

impl EncoderParams {
    fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Forward pass. `dropout_rng` enables training-mode dropout on the pooled vector.
    pub fn forward(
        &self,
        m: &MelSpectrogram,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Array1<f64>, ForwardCache)> {
        if m.n_frames() == 0 {
            return Err(Error::EmptyInput("mel-spectrogram has no frames"));
        }
        if m.n_bands() != self.w_in.nrows() {
            return Err(Error::dims(format!("{} mel bands", self.w_in.nrows()), m.n_bands()));
        }
        let x = canonical_input(m);
        let t = x.nrows();
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        let mut h = x.dot(&self.w_in) + &self.b_in;
        let mut layers = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let q = h.dot(&lp.wq);
            let k = h.dot(&lp.wk);
            let v = h.dot(&lp.wv);
            let mut concat = Array2::zeros((t, self.d_model));
            let mut attn = Vec::with_capacity(self.n_heads);
            for head in 0..self.n_heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let mut scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
                for row in scores.rows_mut() {
                    softmax_in_place(row);
                }
                concat.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
                attn.push(scores);
            }
            let next = &h + &concat.dot(&lp.wo);
            layers.push(LayerCache {
                h_in: h,
                q,
                k,
                v,
                attn,
                concat,
            });
            h = next;
        }

        // attentive statistics pooling
        let u = (h.dot(&self.pool_w) + &self.pool_b).mapv(f64::tanh);
        let mut alpha = u.dot(&self.pool_v);
        softmax_in_place(alpha.view_mut());
        let mu = alpha.dot(&h);
        let centered = &h - &mu;
        let var = alpha.dot(&centered.mapv(|c| c * c));
        let sigma = var.mapv(|v| (v + VAR_EPS).sqrt());

        let mut z = ndarray::concatenate![Axis(0), mu, sigma];
        let mask = dropout_rng.filter(|_| self.dropout > 0.0).map(|rng| {
            let keep = 1.0 - self.dropout;
            Array1::from_shape_simple_fn(z.len(), || {
                if rng.gen::<f64>() < self.dropout {
                    0.0
                } else {
                    1.0 / keep
                }
            })
        });
        if let Some(mask) = &mask {
            z = &z * mask;
        }
        let out = z.dot(&self.w_out) + &self.b_out;
        Ok((
            out,
            ForwardCache {
                x,
                layers,
                h,
                u,
                alpha,
                mu,
                sigma,
                z,
                mask,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` given dL/d(output).
    pub fn backward(&self, cache: &ForwardCache, g_out: ArrayView1<'_, f64>, grads: &mut EncoderParams) {
        let d = self.d_model;
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();

        // output projection
        grads.w_out += &outer(cache.z.view(), g_out);
        grads.b_out += &g_out;
        let mut g_z = self.w_out.dot(&g_out);
        if let Some(mask) = &cache.mask {
            g_z = &g_z * mask;
        }
        let g_mu = g_z.slice(s![..d]).to_owned();
        let g_var = &g_z.slice(s![d..]) / &(2.0 * &cache.sigma);

        // pooling: mu = Σ α_t h_t, var = Σ α_t (h_t - mu)^2
        let h = &cache.h;
        let centered = h - &cache.mu;
        let mut g_h = Array2::zeros(h.raw_dim());
        for (t, mut row) in g_h.rows_mut().into_iter().enumerate() {
            let a = cache.alpha[t];
            row.assign(&(a * &g_mu + 2.0 * a * &(&centered.row(t) * &g_var)));
        }
        let g_alpha = h.dot(&g_mu) + centered.mapv(|c| c * c).dot(&g_var);
        let weighted = cache.alpha.dot(&g_alpha);
        let g_e = &cache.alpha * &(g_alpha - weighted);
        grads.pool_v += &cache.u.t().dot(&g_e);
        let g_u = outer(g_e.view(), self.pool_v.view());
        let g_pre = g_u * cache.u.mapv(|u| 1.0 - u * u);
        grads.pool_w += &h.t().dot(&g_pre);
        grads.pool_b += &g_pre.sum_axis(Axis(0));
        g_h += &g_pre.dot(&self.pool_w.t());

        // attention layers, last first
        for (l, (lp, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let lg = &mut grads.layers[l];
            lg.wo += &lc.concat.t().dot(&g_h);
            let g_concat = g_h.dot(&lp.wo.t());
            let mut g_q = Array2::zeros(lc.q.raw_dim());
            let mut g_k = Array2::zeros(lc.k.raw_dim());
            let mut g_v = Array2::zeros(lc.v.raw_dim());
            for (head, a) in lc.attn.iter().enumerate() {
                let cols = s![.., head * dh..(head + 1) * dh];
                let g_o = g_concat.slice(cols);
                let g_a = g_o.dot(&lc.v.slice(cols).t());
                g_v.slice_mut(cols).assign(&a.t().dot(&g_o));
                // row-wise softmax backward
                let row_dot = (&g_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
                let g_s = a * &(&g_a - &row_dot) * scale;
                g_q.slice_mut(cols).assign(&g_s.dot(&lc.k.slice(cols)));
                g_k.slice_mut(cols).assign(&g_s.t().dot(&lc.q.slice(cols)));
            }
            lg.wq += &lc.h_in.t().dot(&g_q);
            lg.wk += &lc.h_in.t().dot(&g_k);
            lg.wv += &lc.h_in.t().dot(&g_v);
            // residual path plus the three projections
            g_h = g_h + g_q.dot(&lp.wq.t()) + g_k.dot(&lp.wk.t()) + g_v.dot(&lp.wv.t());
        }

        grads.w_in += &cache.x.t().dot(&g_h);
        grads.b_in += &g_h.sum_axis(Axis(0));
    }
}

fn outer(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> Array2<f64> {
    let col = a.insert_axis(Axis(1));
    let row = b.insert_axis(Axis(0));
    col.dot(&row)
}

/// Inference-mode encoding (dropout disabled).
pub fn attention_encode(m: &MelSpectrogram, p: &EncoderParams) -> Result<SpeakerEmbedding> {
    p.validate()?;
    let (out, _) = p.forward(m, None)?;
    SpeakerEmbedding::new(out.to_vec(), "", false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_mel(t: usize, seed: u64) -> MelSpectrogram {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MelSpectrogram {
            values: Array2::from_shape_simple_fn((t, N_MELS), || rng.gen_range(-10.0..4.0)),
            sample_rate: 16000,
        }
    }

    #[test]
    fn output_is_256_for_any_length() {
        let p = EncoderParams::init(8, 2, 1);
        for t in [1, 2, 7, 40] {
            let e = attention_encode(&random_mel(t, t as u64), &p).unwrap();
            assert_eq!(e.dim(), EMBEDDING_DIM);
            assert!(e.values.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn identical_frames_match_single_frame() {
        let p = EncoderParams::init(16, 4, 2);
        let one = random_mel(1, 9);
        let mut values = Array2::zeros((6, N_MELS));
        for mut row in values.rows_mut() {
            row.assign(&one.values.row(0));
        }
        let many = MelSpectrogram {
            values,
            sample_rate: 16000,
        };
        let a = attention_encode(&one, &p).unwrap();
        let b = attention_encode(&many, &p).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
        }
    }

    #[test]
    fn frame_shuffle_is_bit_exact() {
        let p = EncoderParams::init(8, 2, 3);
        let m = random_mel(9, 4);
        let base = attention_encode(&m, &p).unwrap();
        let order = [4, 0, 8, 2, 7, 1, 3, 6, 5];
        let shuffled = MelSpectrogram {
            values: m.values.select(Axis(0), &order),
            sample_rate: 16000,
        };
        assert_eq!(attention_encode(&shuffled, &p).unwrap().values, base.values);
    }

    #[test]
    fn shape_errors() {
        let p = EncoderParams::init(8, 2, 3);
        let bad = MelSpectrogram {
            values: Array2::zeros((3, 40)),
            sample_rate: 16000,
        };
        assert!(attention_encode(&bad, &p).is_err());
        let empty = MelSpectrogram {
            values: Array2::zeros((0, 80)),
            sample_rate: 16000,
        };
        assert!(attention_encode(&empty, &p).is_err());
        let mut broken = p.clone();
        broken.w_out = Array2::zeros((3, 3));
        assert!(attention_encode(&random_mel(2, 1), &broken).is_err());
        let mut heads = p.clone();
        heads.n_heads = 3;
        assert!(heads.validate().is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("enc.json");
        let p = EncoderParams::init(8, 2, 11);
        p.save(&path).unwrap();
        assert_eq!(EncoderParams::load(&path).unwrap(), p);

        let mut json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(json["format_version"], 1);
        json["format_version"] = 99.into();
        std::fs::write(&path, json.to_string()).unwrap();
        assert!(matches!(EncoderParams::load(&path), Err(Error::Checkpoint(_))));

        json["format_version"] = 1.into();
        json["tensors"][0]["shape"] = serde_json::json!([80, 9]);
        std::fs::write(&path, json.to_string()).unwrap();
        assert!(matches!(EncoderParams::load(&path), Err(Error::Checkpoint(_))));
        assert!(matches!(
            EncoderParams::load(dir.path().join("missing.json")),
            Err(Error::MissingFile(_))
        ));
    }

    #[test]
    fn parameter_visit_order_is_stable() {
        let p = EncoderParams::init(4, 2, 0);
        let mut names = vec![];
        p.visit(|n, _| names.push(n.to_string()));
        assert_eq!(names.len(), 2 + 4 * N_LAYERS + 5);
        assert_eq!(names[0], "w_in");
        assert_eq!(names.last().unwrap(), "b_out");
        assert_eq!(
            p.parameter_count(),
            80 * 4 + 4 + N_LAYERS * 4 * 16 + 16 + 4 + 4 + 8 * 256 + 256
        );
    }

    #[test]
    fn dropout_only_in_training() {
        let p = EncoderParams::init(8, 2, 5);
        let m = random_mel(4, 2);
        let (a, _) = p.forward(&m, None).unwrap();
        let (b, _) = p.forward(&m, None).unwrap();
        assert_eq!(a, b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (c, cache) = p.forward(&m, Some(&mut rng)).unwrap();
        assert!(cache.mask.is_some());
        assert_ne!(a, c);
    }
}
