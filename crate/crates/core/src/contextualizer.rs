//! Transformer stage: convolutional position encoding, start token and a
//! normalization-free encoder stack initialized with T-Fixup.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::encoder::BendrSequence;
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContextConfig {
    /// Dimension of incoming BENDR vectors (the encoder width).
    pub bendr_dim: usize,
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub pos_kernel: usize,
    pub pos_groups: usize,
    pub start_token: f64,
    /// Applied to attention weights and to both residual branches.
    pub dropout: f64,
    pub layer_drop: f64,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            bendr_dim: 512,
            model_dim: 1536,
            layers: 8,
            heads: 8,
            ff_dim: 3076,
            pos_kernel: 25,
            pos_groups: 16,
            start_token: -5.0,
            dropout: 0.15,
            layer_drop: 0.01,
        }
    }
}

impl ContextConfig {
    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    /// T-Fixup scale for value, output and feed-forward matrices.
    pub fn t_fixup_scale(&self) -> f64 {
        0.67 * (self.layers as f64).powf(-0.25)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.heads == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return fail(format!(
                "model dim {} not divisible by {} heads",
                self.model_dim, self.heads
            ));
        }
        if self.pos_groups == 0 || !self.bendr_dim.is_multiple_of(self.pos_groups) {
            return fail(format!(
                "BENDR dim {} not divisible by {} position groups",
                self.bendr_dim, self.pos_groups
            ));
        }
        if self.pos_kernel.is_multiple_of(2) {
            return fail(format!("position kernel {} must be odd", self.pos_kernel));
        }
        if self.layers == 0 || self.ff_dim == 0 {
            return fail("transformer needs at least one layer and a feed-forward width".into());
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.layer_drop) {
            return fail("dropout probabilities must lie in [0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TransformerLayer {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl TransformerLayer {
    fn named(&self, i: usize) -> Vec<(String, Tensor)> {
        [
            ("wq", &self.wq),
            ("bq", &self.bq),
            ("wk", &self.wk),
            ("bk", &self.bk),
            ("wv", &self.wv),
            ("bv", &self.bv),
            ("wo", &self.wo),
            ("bo", &self.bo),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
        ]
        .into_iter()
        .map(|(n, t)| (format!("context.layers.{i}.{n}"), t.clone()))
        .collect()
    }
}

#[derive(Debug, Clone)]
pub struct TransformerParams {
    pub config: ContextConfig,
    /// Learned replacement for masked BENDR positions.
    pub mask_vector: Tensor,
    pub pos_weight: Tensor,
    pub pos_bias: Tensor,
    pub input_weight: Tensor,
    pub input_bias: Tensor,
    pub layers: Vec<TransformerLayer>,
    /// Maps model-dim outputs back to BENDR space for the contrastive task.
    pub output_weight: Tensor,
    pub output_bias: Tensor,
}

fn xavier<R: Rng + ?Sized>(out: usize, inp: usize, rng: &mut R) -> Tensor {
    Tensor::uniform(&[out, inp], (6.0 / (out + inp) as f64).sqrt(), rng)
}

impl TransformerParams {
    pub fn init<R: Rng + ?Sized>(config: &ContextConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (c, d, f) = (config.bendr_dim, config.model_dim, config.ff_dim);
        let mask: Vec<f64> = (0..c)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z / (c as f64).sqrt()
            })
            .collect();
        let cin_g = c / config.pos_groups;
        let pos_bound = 1.0 / ((cin_g * config.pos_kernel) as f64).sqrt();
        let layers = (0..config.layers)
            .map(|_| TransformerLayer {
                wq: xavier(d, d, rng),
                bq: Tensor::zeros(&[d]),
                wk: xavier(d, d, rng),
                bk: Tensor::zeros(&[d]),
                wv: xavier(d, d, rng),
                bv: Tensor::zeros(&[d]),
                wo: xavier(d, d, rng),
                bo: Tensor::zeros(&[d]),
                w1: xavier(f, d, rng),
                b1: Tensor::zeros(&[f]),
                w2: xavier(d, f, rng),
                b2: Tensor::zeros(&[d]),
            })
            .collect();
        let p = Self {
            config: config.clone(),
            mask_vector: Tensor::new(mask, &[c])?,
            pos_weight: Tensor::uniform(&[c, cin_g, config.pos_kernel], pos_bound, rng),
            pos_bias: Tensor::zeros(&[c]),
            input_weight: xavier(d, c, rng),
            input_bias: Tensor::zeros(&[d]),
            layers,
            output_weight: xavier(c, d, rng),
            output_bias: Tensor::zeros(&[c]),
        };
        t_fixup_init(&p);
        p.parameters()
            .iter()
            .for_each(|(_, t)| t.set_requires_grad(true));
        Ok(p)
    }

    pub fn parameters(&self) -> Vec<(String, Tensor)> {
        let mut out = vec![
            ("context.mask_vector".to_string(), self.mask_vector.clone()),
            ("context.pos.weight".to_string(), self.pos_weight.clone()),
            ("context.pos.bias".to_string(), self.pos_bias.clone()),
            (
                "context.input.weight".to_string(),
                self.input_weight.clone(),
            ),
            ("context.input.bias".to_string(), self.input_bias.clone()),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            out.extend(l.named(i));
        }
        out.push(("context.output.weight".into(), self.output_weight.clone()));
        out.push(("context.output.bias".into(), self.output_bias.clone()));
        out
    }

    /// Additive grouped-convolution position encoding of `[C × T]`, same
    /// length as the input.
    pub fn position_encode(&self, b: &Tensor) -> Result<Tensor> {
        let pad = self.config.pos_kernel / 2;
        b.pad_cols(pad, pad)?
            .conv1d(
                &self.pos_weight,
                Some(&self.pos_bias),
                1,
                self.config.pos_groups,
            )?
            .gelu()
    }

    /// Runs the transformer over `b`, replacing `masked` token positions with
    /// the mask vector first. Passing an RNG enables dropout and LayerDrop.
    pub fn contextualize(
        &self,
        b: &BendrSequence,
        masked: &[usize],
        train: Option<&mut SeededRng>,
    ) -> Result<ContextSequence> {
        let cfg = &self.config;
        let (c, t) = b.vectors.dims2()?;
        if c != cfg.bendr_dim || t == 0 {
            return Err(Error::shape(
                "contextualize",
                format!(
                    "expected [{} × T≥1], got {:?}",
                    cfg.bendr_dim,
                    b.vectors.shape()
                ),
            ));
        }
        if let Some(&bad) = masked.iter().find(|&&i| i >= t) {
            return Err(Error::InvalidInput(format!(
                "masked position {bad} outside sequence of {t} tokens"
            )));
        }
        let x = if masked.is_empty() {
            b.vectors.clone()
        } else {
            b.vectors.replace_cols(masked, &self.mask_vector)?
        };
        let x = x.add(&self.position_encode(&x)?)?;
        let x = x
            .transpose()?
            .linear(&self.input_weight, Some(&self.input_bias))?;
        let start = Tensor::full(&[1, cfg.model_dim], cfg.start_token);
        let mut h = Tensor::concat_rows(&[start, x])?;

        let mut rng = train;
        let mut skipped = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(r) = rng.as_deref_mut() {
                if cfg.layer_drop > 0.0 && r.random::<f64>() < cfg.layer_drop {
                    skipped.push(i);
                    continue;
                }
            }
            h = self.layer_forward(layer, &h, rng.as_deref_mut())?;
        }
        let outputs = h.linear(&self.output_weight, Some(&self.output_bias))?;
        Ok(ContextSequence {
            hidden: h,
            outputs,
            skipped_layers: skipped,
        })
    }

    fn layer_forward(
        &self,
        l: &TransformerLayer,
        x: &Tensor,
        mut rng: Option<&mut SeededRng>,
    ) -> Result<Tensor> {
        let cfg = &self.config;
        let p = cfg.dropout;
        let mut drop = |t: Tensor| -> Result<Tensor> {
            match rng.as_deref_mut() {
                Some(r) => t.dropout(p, r),
                None => Ok(t),
            }
        };
        let q = x.linear(&l.wq, Some(&l.bq))?;
        let k = x.linear(&l.wk, Some(&l.bk))?;
        let v = x.linear(&l.wv, Some(&l.bv))?;
        let dh = cfg.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let heads = (0..cfg.heads)
            .map(|h| {
                let qh = q.slice_cols(h * dh, dh)?;
                let kh = k.slice_cols(h * dh, dh)?;
                let vh = v.slice_cols(h * dh, dh)?;
                let a = drop(qh.matmul_nt(&kh)?.scale(scale)?.softmax_rows()?)?;
                a.matmul(&vh)
            })
            .collect::<Result<Vec<_>>>()?;
        let att = Tensor::concat_cols(&heads)?.linear(&l.wo, Some(&l.bo))?;
        let x = x.add(&drop(att)?)?;
        let ff = x
            .linear(&l.w1, Some(&l.b1))?
            .gelu()?
            .linear(&l.w2, Some(&l.b2))?;
        x.add(&drop(ff)?)
    }
}

/// Rescales value, output and feed-forward matrices by `0.67·N^(-1/4)`.
pub fn t_fixup_init(params: &TransformerParams) {
    let s = params.config.t_fixup_scale();
    for l in &params.layers {
        for w in [&l.wv, &l.wo, &l.w1, &l.w2] {
            w.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Transformer output: row 0 belongs to the start token, rows `1..=T` to the
/// BENDR positions.
#[derive(Debug, Clone)]
pub struct ContextSequence {
    /// `[(T+1) × model_dim]`.
    pub hidden: Tensor,
    /// `[(T+1) × bendr_dim]`, compared against BENDR targets.
    pub outputs: Tensor,
    pub skipped_layers: Vec<usize>,
}

impl ContextSequence {
    pub fn len(&self) -> usize {
        self.hidden.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> ContextConfig {
        ContextConfig {
            bendr_dim: 16,
            model_dim: 12,
            layers: 2,
            heads: 3,
            ff_dim: 20,
            pos_kernel: 5,
            pos_groups: 4,
            ..Default::default()
        }
    }

    fn bendr(t: usize, seed: u64) -> BendrSequence {
        BendrSequence::new(Tensor::randn(&[16, t], 1.0, &mut seeded(seed)))
    }

    #[test]
    fn paper_dimensions() {
        let c = ContextConfig::default();
        assert_eq!(c.head_dim(), 192);
        assert!((c.t_fixup_scale() - 0.67 * 8f64.powf(-0.25)).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn output_has_start_token_row() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        let ctx = p.contextualize(&bendr(7, 1), &[2, 3], None).unwrap();
        assert_eq!(ctx.hidden.shape(), &[8, 12]);
        assert_eq!(ctx.outputs.shape(), &[8, 16]);
        assert!(ctx.skipped_layers.is_empty());
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        let b = bendr(9, 3);
        let a = p.contextualize(&b, &[1], None).unwrap().outputs.to_vec();
        let c = p.contextualize(&b, &[1], None).unwrap().outputs.to_vec();
        assert_eq!(a, c);
    }

    #[test]
    fn train_mode_differs_from_eval() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        let b = bendr(9, 3);
        let eval = p.contextualize(&b, &[], None).unwrap().outputs.to_vec();
        let mut rng = seeded(5);
        let train = p
            .contextualize(&b, &[], Some(&mut rng))
            .unwrap()
            .outputs
            .to_vec();
        assert_ne!(eval, train);
    }

    #[test]
    fn mask_out_of_range() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        assert!(p.contextualize(&bendr(4, 1), &[4], None).is_err());
    }

    #[test]
    fn position_encoding_keeps_length() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        let b = bendr(11, 2);
        assert_eq!(p.position_encode(&b.vectors).unwrap().shape(), &[16, 11]);
    }

    #[test]
    fn start_token_sees_every_position() {
        let p = TransformerParams::init(&tiny(), &mut seeded(0)).unwrap();
        let b = bendr(6, 2);
        let base = p.contextualize(&b, &[], None).unwrap().hidden.to_vec();
        for t in 0..6 {
            let v = b.vectors.to_vec();
            let mut v2 = v.clone();
            v2[3 * 6 + t] += 0.5;
            let b2 = BendrSequence::new(Tensor::new(v2, &[16, 6]).unwrap());
            let out = p.contextualize(&b2, &[], None).unwrap().hidden.to_vec();
            assert!((0..12).any(|j| out[j] != base[j]), "position {t}");
        }
    }

    #[test]
    fn t_fixup_weight_statistics() {
        let cfg = ContextConfig {
            bendr_dim: 16,
            model_dim: 96,
            heads: 4,
            ff_dim: 160,
            layers: 8,
            pos_kernel: 5,
            pos_groups: 4,
            ..Default::default()
        };
        let p = TransformerParams::init(&cfg, &mut seeded(4)).unwrap();
        let std = |t: &Tensor| {
            let v = t.to_vec();
            (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
        };
        let s = cfg.t_fixup_scale();
        let l = &p.layers[3];
        let base = |a: usize, b: usize| (2.0 / (a + b) as f64).sqrt();
        for (w, expect) in [
            (&l.wv, s * base(96, 96)),
            (&l.wo, s * base(96, 96)),
            (&l.w1, s * base(96, 160)),
            (&l.w2, s * base(96, 160)),
            (&l.wq, base(96, 96)),
        ] {
            assert!(
                (std(w) / expect - 1.0).abs() < 0.03,
                "{} vs {expect}",
                std(w)
            );
        }
    }
}
