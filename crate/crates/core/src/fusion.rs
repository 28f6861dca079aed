//! Fusion of forward and time-reversed speaker embeddings.
//!
//! The weighted form is `alpha * s + beta * s_rev`. The cross-attention form adds a
//! single-head attention residual (forward tokens attend to reversed tokens) on top
//! of the weighted result.

use ndarray::{Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{SpeakerEmbedding, EMBEDDING_DIM};
use crate::error::{Error, Result};

/// Token grid for the cross-attention variant: 8 tokens of 32 dims = 256.
pub const FUSION_TOKENS: usize = 8;
pub const FUSION_TOKEN_DIM: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    #[default]
    Weighted,
    CrossAttention,
}

/// Query/key/value/output projections over `token_dim`-wide tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossAttentionParams {
    pub tokens: usize,
    pub token_dim: usize,
    pub wq: Array2<f64>,
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub wo: Array2<f64>,
}

impl CrossAttentionParams {
    pub fn zeros(tokens: usize, token_dim: usize) -> Self {
        let z = Array2::zeros((token_dim, token_dim));
        CrossAttentionParams {
            tokens,
            token_dim,
            wq: z.clone(),
            wk: z.clone(),
            wv: z.clone(),
            wo: z,
        }
    }

    /// Uniform weights in `±scale / sqrt(token_dim)`, seeded.
    pub fn init(tokens: usize, token_dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = scale / (token_dim as f64).sqrt();
        let mut mat = || {
            Array2::from_shape_simple_fn((token_dim, token_dim), || rng.gen_range(-bound..bound))
        };
        CrossAttentionParams {
            tokens,
            token_dim,
            wq: mat(),
            wk: mat(),
            wv: mat(),
            wo: mat(),
        }
    }

    /// Default 8 × 32 grid.
    pub fn seeded(seed: u64) -> Self {
        CrossAttentionParams::init(FUSION_TOKENS, FUSION_TOKEN_DIM, 1.0, seed)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let td = self.token_dim;
        if self.tokens * td != dim {
            return Err(Error::dims(
                format!("{} x {} token grid", self.tokens, td),
                format!("{dim}-D vectors"),
            ));
        }
        for w in [&self.wq, &self.wk, &self.wv, &self.wo] {
            if w.dim() != (td, td) {
                return Err(Error::dims(format!("{td}x{td} projection"), format!("{:?}", w.dim())));
            }
        }
        Ok(())
    }

    fn grid<'a>(&self, v: &'a [f64]) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((self.tokens, self.token_dim), v).expect("validated length")
    }

    /// Attention residual for query vector `s` and key/value vector `r`, flattened.
    pub fn residual(&self, s: &[f64], r: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(s, r)?.0.into_raw_vec_and_offset().0)
    }

    fn forward(&self, s: &[f64], r: &[f64]) -> Result<(Array2<f64>, CrossCache)> {
        self.validate(s.len())?;
        if r.len() != s.len() {
            return Err(Error::dims(s.len(), r.len()));
        }
        let (sq, rk) = (self.grid(s), self.grid(r));
        let q = sq.dot(&self.wq);
        let k = rk.dot(&self.wk);
        let v = rk.dot(&self.wv);
        let scale = 1.0 / (self.token_dim as f64).sqrt();
        let mut attn = q.dot(&k.t()) * scale;
        for mut row in attn.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        let mixed = attn.dot(&v);
        let out = mixed.dot(&self.wo);
        Ok((
            out,
            CrossCache {
                s: sq.to_owned(),
                r: rk.to_owned(),
                q,
                k,
                v,
                attn,
                mixed,
            },
        ))
    }

    /// Gradients of `sum(g_out * residual(s, r))` with respect to the four projections.
    pub fn residual_grads(&self, s: &[f64], r: &[f64], g_out: &[f64]) -> Result<CrossAttentionParams> {
        let (_, c) = self.forward(s, r)?;
        if g_out.len() != s.len() {
            return Err(Error::dims(s.len(), g_out.len()));
        }
        let g = self.grid(g_out);
        let scale = 1.0 / (self.token_dim as f64).sqrt();
        let wo = c.mixed.t().dot(&g);
        let g_mixed = g.dot(&self.wo.t());
        let g_attn = g_mixed.dot(&c.v.t());
        let wv = c.r.t().dot(&c.attn.t().dot(&g_mixed));
        let row_dot = (&g_attn * &c.attn).sum_axis(Axis(1)).insert_axis(Axis(1));
        let g_scores = &c.attn * &(&g_attn - &row_dot) * scale;
        let wq = c.s.t().dot(&g_scores.dot(&c.k));
        let wk = c.r.t().dot(&g_scores.t().dot(&c.q));
        Ok(CrossAttentionParams {
            tokens: self.tokens,
            token_dim: self.token_dim,
            wq,
            wk,
            wv,
            wo,
        })
    }
}

struct CrossCache {
    s: Array2<f64>,
    r: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Array2<f64>,
    mixed: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub mode: FusionMode,
    pub cross: Option<CrossAttentionParams>,
}

impl Default for FusionConfig {
    /// Equal weighting, 0.5 / 0.5.
    fn default() -> Self {
        FusionConfig {
            alpha: 0.5,
            beta: 0.5,
            mode: FusionMode::Weighted,
            cross: None,
        }
    }
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidParameter(format!("{name} = {w} not in [0, 1]")));
    }
    Ok(())
}

/// `alpha * s + beta * s_rev`. The weights need not sum to one.
pub fn fuse_weighted(
    s: &SpeakerEmbedding,
    s_rev: &SpeakerEmbedding,
    alpha: f64,
    beta: f64,
) -> Result<SpeakerEmbedding> {
    if s.reversed {
        return Err(Error::FlagMismatch("forward embedding is flagged reversed"));
    }
    if !s_rev.reversed {
        return Err(Error::FlagMismatch("reversed embedding is not flagged reversed"));
    }
    if s.dim() != EMBEDDING_DIM || s_rev.dim() != EMBEDDING_DIM {
        return Err(Error::dims(
            format!("{EMBEDDING_DIM}-D embeddings"),
            format!("{} and {}", s.dim(), s_rev.dim()),
        ));
    }
    check_weight("alpha", alpha)?;
    check_weight("beta", beta)?;
    let values = s
        .values
        .iter()
        .zip(&s_rev.values)
        .map(|(a, b)| alpha * a + beta * b)
        .collect();
    Ok(SpeakerEmbedding {
        values,
        source_id: s.source_id.clone(),
        reversed: false,
    })
}

/// Weighted fusion plus a residual where `s` attends to `s_rev`.
pub fn fuse_cross_attention(
    s: &SpeakerEmbedding,
    s_rev: &SpeakerEmbedding,
    cfg: &FusionConfig,
) -> Result<SpeakerEmbedding> {
    let params = cfg
        .cross
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("cross-attention parameters missing".into()))?;
    let mut fused = fuse_weighted(s, s_rev, cfg.alpha, cfg.beta)?;
    let residual = params.residual(&s.values, &s_rev.values)?;
    fused.values.iter_mut().zip(residual).for_each(|(f, r)| *f += r);
    Ok(fused)
}

/// Dispatch on `cfg.mode`.
pub fn fuse(s: &SpeakerEmbedding, s_rev: &SpeakerEmbedding, cfg: &FusionConfig) -> Result<SpeakerEmbedding> {
    match cfg.mode {
        FusionMode::Weighted => fuse_weighted(s, s_rev, cfg.alpha, cfg.beta),
        FusionMode::CrossAttention => fuse_cross_attention(s, s_rev, cfg),
    }
}

/// One fused embedding per (alpha, beta) grid point, in grid order.
pub fn sweep_weights(
    s: &SpeakerEmbedding,
    s_rev: &SpeakerEmbedding,
    grid: &[(f64, f64)],
) -> Result<Vec<(f64, f64, SpeakerEmbedding)>> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty fusion grid".into()));
    }
    grid.iter()
        .map(|&(a, b)| Ok((a, b, fuse_weighted(s, s_rev, a, b)?)))
        .collect()
}

/// alpha in {0, 0.25, 0.5, 0.75, 1} with beta = 1 - alpha.
pub fn default_grid() -> Vec<(f64, f64)> {
    [0.0, 0.25, 0.5, 0.75, 1.0].iter().map(|&a| (a, 1.0 - a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, proptest, prop_assert_eq, Strategy};

    fn emb(values: Vec<f64>, reversed: bool) -> SpeakerEmbedding {
        SpeakerEmbedding::new(values, "u", reversed).unwrap()
    }

    fn basis(i: usize, reversed: bool) -> SpeakerEmbedding {
        let mut v = vec![0.0; EMBEDDING_DIM];
        v[i] = 1.0;
        emb(v, reversed)
    }

    fn ramp(offset: f64, reversed: bool) -> SpeakerEmbedding {
        emb((0..EMBEDDING_DIM).map(|i| (i as f64 * 0.37 + offset).sin()).collect(), reversed)
    }

    #[test]
    fn identity_and_hand_case() {
        let (s, r) = (ramp(0.0, false), ramp(1.0, true));
        assert_eq!(fuse_weighted(&s, &r, 1.0, 0.0).unwrap().values, s.values);

        let out = fuse_weighted(&basis(0, false), &basis(1, true), 0.5, 0.5).unwrap();
        assert_eq!(&out.values[..3], &[0.5, 0.5, 0.0]);
        assert!(out.values[2..].iter().all(|&v| v == 0.0));
        assert!(!out.reversed);
    }

    #[test]
    fn zero_weights_give_zero_vector() {
        let out = fuse_weighted(&ramp(0.0, false), &ramp(1.0, true), 0.0, 0.0).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contract_errors() {
        let (s, r) = (ramp(0.0, false), ramp(1.0, true));
        assert!(matches!(fuse_weighted(&r, &r, 0.5, 0.5), Err(Error::FlagMismatch(_))));
        assert!(matches!(fuse_weighted(&s, &s, 0.5, 0.5), Err(Error::FlagMismatch(_))));
        let short = emb(vec![1.0; 10], true);
        assert!(matches!(
            fuse_weighted(&s, &short, 0.5, 0.5),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(fuse_weighted(&s, &r, 1.5, 0.0).is_err());
        assert!(fuse_weighted(&s, &r, 0.5, -0.1).is_err());
        let cfg = FusionConfig {
            mode: FusionMode::CrossAttention,
            ..FusionConfig::default()
        };
        assert!(fuse_cross_attention(&s, &r, &cfg).is_err());
        assert!(sweep_weights(&s, &r, &[]).is_err());
    }

    #[test]
    fn zero_attention_weights_reduce_to_weighted() {
        let (s, r) = (ramp(0.0, false), ramp(1.0, true));
        let cfg = FusionConfig {
            alpha: 0.3,
            beta: 0.6,
            mode: FusionMode::CrossAttention,
            cross: Some(CrossAttentionParams::zeros(FUSION_TOKENS, FUSION_TOKEN_DIM)),
        };
        assert_eq!(
            fuse_cross_attention(&s, &r, &cfg).unwrap().values,
            fuse_weighted(&s, &r, 0.3, 0.6).unwrap().values
        );
    }

    #[test]
    fn identical_pair_with_cross_attention() {
        let s = ramp(0.2, false);
        let r = s.with_reversed(true);
        let cfg = FusionConfig {
            mode: FusionMode::CrossAttention,
            cross: Some(CrossAttentionParams::seeded(3)),
            ..FusionConfig::default()
        };
        let weighted = fuse_weighted(&s, &r, 0.5, 0.5).unwrap();
        for (w, x) in weighted.values.iter().zip(&s.values) {
            assert!((w - x).abs() < 1e-15);
        }
        let out = fuse(&s, &r, &cfg).unwrap();
        assert_eq!(out.dim(), EMBEDDING_DIM);
        assert!(out.values.iter().all(|v| v.is_finite()));
    }

    /// Central differences on a random linear functional of the residual.
    #[test]
    fn cross_attention_gradients_match_finite_differences() {
        let params = CrossAttentionParams::init(3, 4, 1.0, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut vec12 = || (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let (s, r, g) = (vec12(), vec12(), vec12());
        let objective = |p: &CrossAttentionParams| -> f64 {
            p.residual(&s, &r).unwrap().iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let analytic = params.residual_grads(&s, &r, &g).unwrap();
        let h = 1e-5;
        type Pick = fn(&mut CrossAttentionParams) -> &mut Array2<f64>;
        let picks: [(Pick, &Array2<f64>); 4] = [
            (|p| &mut p.wq, &analytic.wq),
            (|p| &mut p.wk, &analytic.wk),
            (|p| &mut p.wv, &analytic.wv),
            (|p| &mut p.wo, &analytic.wo),
        ];
        for (pick, grad) in picks {
            let mut fd = Array2::zeros(grad.raw_dim());
            for idx in 0..grad.len() {
                let (i, j) = (idx / 4, idx % 4);
                let mut plus = params.clone();
                pick(&mut plus)[[i, j]] += h;
                let mut minus = params.clone();
                pick(&mut minus)[[i, j]] -= h;
                fd[[i, j]] = (objective(&plus) - objective(&minus)) / (2.0 * h);
            }
            let err = (&fd - grad).mapv(|x| x * x).sum().sqrt();
            let scale = fd.mapv(|x| x * x).sum().sqrt().max(grad.mapv(|x| x * x).sum().sqrt());
            assert!(err / scale <= 1e-4, "relative error {}", err / scale);
        }
    }

    #[test]
    fn sweep_shapes() {
        let (s, r) = (ramp(0.0, false), ramp(1.0, true));
        let single = sweep_weights(&s, &r, &[(1.0, 0.0)]).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].2.values, s.values);

        let three = sweep_weights(&s, &r, &[(0.25, 0.75), (0.5, 0.5), (0.75, 0.25)]).unwrap();
        assert_eq!(three.len(), 3);
        assert_eq!((three[1].0, three[1].1), (0.5, 0.5));
        let d = FusionConfig::default();
        assert_eq!(three[1].2, fuse_weighted(&s, &r, d.alpha, d.beta).unwrap());
        assert!(default_grid().contains(&(0.5, 0.5)));
        assert_eq!(default_grid().len(), 5);
    }

    fn any_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, EMBEDDING_DIM)
    }

    proptest! {
        #[test]
        fn linearity_and_symmetry(a in any_vec(), b in any_vec(), alpha in 0.0f64..=1.0, beta in 0.0f64..=1.0) {
            let (s, r) = (emb(a, false), emb(b, true));
            let fused = fuse_weighted(&s, &r, alpha, beta).unwrap();
            let e1 = fuse_weighted(&s, &r, 1.0, 0.0).unwrap();
            let e2 = fuse_weighted(&s, &r, 0.0, 1.0).unwrap();
            for i in 0..EMBEDDING_DIM {
                prop_assert_eq!(fused.values[i], alpha * e1.values[i] + beta * e2.values[i]);
            }
            let swapped = fuse_weighted(&r.with_reversed(false), &s.with_reversed(true), beta, alpha).unwrap();
            prop_assert_eq!(&swapped.values, &fused.values);
        }
    }
}
