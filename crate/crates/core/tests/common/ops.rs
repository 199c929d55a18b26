//! Gradient test cases shared by the gradient suite and the acceptance
//! runner: one generator of random inputs per differentiable operation.

use bendr::contextualizer::{ContextConfig, ContextSequence, TransformerParams};
use bendr::encoder::{BendrSequence, EncoderConfig, EncoderParams};
use bendr::finetune::pool_bendr;
use bendr::pretrain::{contrastive_loss, MaskPlan};
use bendr::rng::{seeded, SeededRng};
use bendr::{Result, Tensor};
use rand::Rng;

use super::{grad_check, param, shape2};

pub type Eval = Box<dyn Fn(&[Tensor]) -> Result<Tensor>>;
type Build = Box<dyn Fn(&mut SeededRng) -> (Vec<Tensor>, Eval)>;

pub struct OpCase {
    pub name: &'static str,
    build: Build,
}

fn case<F>(
    name: &'static str,
    build: impl Fn(&mut SeededRng) -> (Vec<Tensor>, F) + 'static,
) -> OpCase
where
    F: Fn(&[Tensor]) -> Result<Tensor> + 'static,
{
    OpCase {
        name,
        build: Box::new(move |r| {
            let (inputs, f) = build(r);
            (inputs, Box::new(f) as Eval)
        }),
    }
}

impl OpCase {
    /// Worst relative error over `cases` seeded draws.
    pub fn check(&self, cases: u64) -> std::result::Result<f64, String> {
        let mut worst = 0.0f64;
        for seed in 0..cases {
            let mut rng = seeded(seed * 7919 + 13);
            let (inputs, f) = (self.build)(&mut rng);
            let err = grad_check(&inputs, &mut rng, f).map_err(|e| format!("seed {seed}: {e}"))?;
            worst = worst.max(err);
        }
        Ok(worst)
    }
}

pub fn op_cases() -> Vec<OpCase> {
    vec![
        case("add", |r| {
            let s = shape2(r, 5, 6);
            (vec![param(&s, r), param(&s, r)], |x: &[Tensor]| {
                x[0].add(&x[1])
            })
        }),
        case("sub", |r| {
            let s = shape2(r, 5, 6);
            (vec![param(&s, r), param(&s, r)], |x: &[Tensor]| {
                x[0].sub(&x[1])
            })
        }),
        case("mul", |r| {
            let s = shape2(r, 5, 6);
            (vec![param(&s, r), param(&s, r)], |x: &[Tensor]| {
                x[0].mul(&x[1])
            })
        }),
        case("scale", |r| {
            let k: f64 = r.random_range(-3.0..3.0);
            (vec![param(&shape2(r, 5, 6), r)], move |x: &[Tensor]| {
                x[0].scale(k)
            })
        }),
        case("add_scalar", |r| {
            let k: f64 = r.random_range(-3.0..3.0);
            (vec![param(&shape2(r, 5, 6), r)], move |x: &[Tensor]| {
                x[0].add_scalar(k)
            })
        }),
        case("square", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| {
                x[0].square()
            })
        }),
        case("gelu", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| x[0].gelu())
        }),
        case("sum", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| x[0].sum())
        }),
        case("mean", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| x[0].mean())
        }),
        case("mean_square", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| {
                x[0].mean_square()
            })
        }),
        case("mean_rows", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| {
                x[0].mean_rows()
            })
        }),
        case("reshape", |r| {
            let [a, b] = shape2(r, 4, 6);
            (vec![param(&[a, b], r)], move |x: &[Tensor]| {
                x[0].reshape(&[b, a])
            })
        }),
        case("transpose", |r| {
            (vec![param(&shape2(r, 5, 6), r)], |x: &[Tensor]| {
                x[0].transpose()
            })
        }),
        case("slice_cols", |r| {
            let [a, b] = shape2(r, 4, 7);
            let start = r.random_range(0..b);
            let len = r.random_range(1..=b - start);
            (vec![param(&[a, b], r)], move |x: &[Tensor]| {
                x[0].slice_cols(start, len)
            })
        }),
        case("slice_rows", |r| {
            let [a, b] = shape2(r, 7, 4);
            let start = r.random_range(0..a);
            let len = r.random_range(1..=a - start);
            (vec![param(&[a, b], r)], move |x: &[Tensor]| {
                x[0].slice_rows(start, len)
            })
        }),
        case("concat_cols", |r| {
            let rows = r.random_range(1..5);
            let ins: Vec<Tensor> = (0..r.random_range(1..4))
                .map(|_| param(&[rows, r.random_range(1..4)], r))
                .collect();
            (ins, |x: &[Tensor]| Tensor::concat_cols(x))
        }),
        case("concat_rows", |r| {
            let cols = r.random_range(1..5);
            let ins: Vec<Tensor> = (0..r.random_range(1..4))
                .map(|_| param(&[r.random_range(1..4), cols], r))
                .collect();
            (ins, |x: &[Tensor]| Tensor::concat_rows(x))
        }),
        case("index_rows", |r| {
            let [a, b] = shape2(r, 5, 4);
            let idx: Vec<usize> = (0..r.random_range(1..8))
                .map(|_| r.random_range(0..a))
                .collect();
            (vec![param(&[a, b], r)], move |x: &[Tensor]| {
                x[0].index_rows(&idx)
            })
        }),
        case("pad_cols", |r| {
            let (lp, rp) = (r.random_range(0..4), r.random_range(0..4));
            (vec![param(&shape2(r, 4, 5), r)], move |x: &[Tensor]| {
                x[0].pad_cols(lp, rp)
            })
        }),
        case("replace_cols", |r| {
            let [a, b] = shape2(r, 5, 7);
            let cols: Vec<usize> = (0..r.random_range(0..b + 1))
                .map(|_| r.random_range(0..b))
                .collect();
            (
                vec![param(&[a, b], r), param(&[a], r)],
                move |x: &[Tensor]| x[0].replace_cols(&cols, &x[1]),
            )
        }),
        case("matmul", |r| {
            let (m, k, n) = (
                r.random_range(1..5),
                r.random_range(1..5),
                r.random_range(1..5),
            );
            (
                vec![param(&[m, k], r), param(&[k, n], r)],
                |x: &[Tensor]| x[0].matmul(&x[1]),
            )
        }),
        case("matmul_nt", |r| {
            let (m, k, n) = (
                r.random_range(1..5),
                r.random_range(1..5),
                r.random_range(1..5),
            );
            (
                vec![param(&[m, k], r), param(&[n, k], r)],
                |x: &[Tensor]| x[0].matmul_nt(&x[1]),
            )
        }),
        case("add_row", |r| {
            let [a, b] = shape2(r, 5, 5);
            (vec![param(&[a, b], r), param(&[b], r)], |x: &[Tensor]| {
                x[0].add_row(&x[1])
            })
        }),
        case("add_col", |r| {
            let [a, b] = shape2(r, 5, 5);
            (vec![param(&[a, b], r), param(&[a], r)], |x: &[Tensor]| {
                x[0].add_col(&x[1])
            })
        }),
        case("linear", |r| {
            let (n, i, o) = (
                r.random_range(1..5),
                r.random_range(1..5),
                r.random_range(1..5),
            );
            (
                vec![param(&[n, i], r), param(&[o, i], r), param(&[o], r)],
                |x: &[Tensor]| x[0].linear(&x[1], Some(&x[2])),
            )
        }),
        case("softmax_rows", |r| {
            (vec![param(&shape2(r, 4, 6), r)], |x: &[Tensor]| {
                x[0].softmax_rows()
            })
        }),
        case("cross_entropy", |r| {
            let [n, k] = [r.random_range(1..5), r.random_range(2..6)];
            let t: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
            (vec![param(&[n, k], r)], move |x: &[Tensor]| {
                x[0].cross_entropy(&t)
            })
        }),
        case("cosine_similarity", |r| {
            let d = r.random_range(2..8);
            (vec![param(&[d], r), param(&[d], r)], |x: &[Tensor]| {
                x[0].cosine_similarity(&x[1])
            })
        }),
        case("cosine_similarity_rows", |r| {
            let s = [r.random_range(1..5), r.random_range(2..7)];
            (vec![param(&s, r), param(&s, r)], |x: &[Tensor]| {
                x[0].cosine_similarity_rows(&x[1])
            })
        }),
        case("conv1d", |r| {
            let groups = r.random_range(1..3);
            let cin = groups * r.random_range(1..3);
            let cout = groups * r.random_range(1..3);
            let k = r.random_range(1..4);
            let stride = r.random_range(1..4);
            let len = k + r.random_range(0..8);
            (
                vec![
                    param(&[cin, len], r),
                    param(&[cout, cin / groups, k], r),
                    param(&[cout], r),
                ],
                move |x: &[Tensor]| x[0].conv1d(&x[1], Some(&x[2]), stride, groups),
            )
        }),
        case("group_norm", |r| {
            let groups = r.random_range(1..4);
            let c = groups * r.random_range(1..3);
            let l = r.random_range(2..6);
            (
                vec![param(&[c, l], r), param(&[c], r), param(&[c], r)],
                move |x: &[Tensor]| x[0].group_norm(groups, &x[1], &x[2], 1e-5),
            )
        }),
        case("dropout", |r| {
            let p: f64 = r.random_range(0.05..0.6);
            let seed: u64 = r.random();
            // A fresh generator per evaluation keeps the mask fixed.
            (vec![param(&shape2(r, 5, 6), r)], move |x: &[Tensor]| {
                x[0].dropout(p, &mut seeded(seed))
            })
        }),
        case("pool_bendr", |r| {
            let s = [r.random_range(1..4), r.random_range(4..12)];
            (vec![param(&s, r)], |x: &[Tensor]| {
                pool_bendr(&BendrSequence::new(x[0].clone()))
            })
        }),
        case("encoder", |r| {
            let cfg = EncoderConfig {
                in_channels: 2,
                width: 4,
                kernels: vec![3, 2],
                norm_groups: 2,
                ..Default::default()
            };
            let enc = EncoderParams::init(&cfg, r).unwrap();
            let len = 6 * r.random_range(1..4) + r.random_range(0..6);
            let mut ins = vec![param(&[2, len], r)];
            ins.extend(enc.parameters().into_iter().map(|(_, t)| t));
            (ins, move |x: &[Tensor]| enc.forward(&x[0]))
        }),
        case("contextualizer", |r| {
            let cfg = ContextConfig {
                bendr_dim: 4,
                model_dim: 6,
                layers: 1,
                heads: 2,
                ff_dim: 8,
                pos_kernel: 3,
                pos_groups: 2,
                ..Default::default()
            };
            let ctx = TransformerParams::init(&cfg, r).unwrap();
            let t = r.random_range(2..6);
            let masked: Vec<usize> = (0..t).filter(|_| r.random_bool(0.3)).collect();
            let mut ins = vec![param(&[4, t], r)];
            ins.extend(ctx.parameters().into_iter().map(|(_, t)| t));
            (ins, move |x: &[Tensor]| {
                Ok(ctx
                    .contextualize(&BendrSequence::new(x[0].clone()), &masked, None)?
                    .outputs)
            })
        }),
        case("contrastive_loss", |r| {
            let (c, t) = (r.random_range(2..5), r.random_range(4..9));
            let starts = vec![r.random_range(0..t - 1)];
            let plan = MaskPlan::from_starts(t, 2, starts)
                .unwrap()
                .with_distractors(3, r)
                .unwrap();
            let temp: f64 = r.random_range(0.1..1.0);
            (
                vec![param(&[t + 1, c], r), param(&[c, t], r)],
                move |x: &[Tensor]| {
                    let ctx = ContextSequence {
                        hidden: x[0].clone(),
                        outputs: x[0].clone(),
                        skipped_layers: vec![],
                    };
                    let b = BendrSequence::new(x[1].clone());
                    Ok(contrastive_loss(&ctx, &b, &plan, temp, 0.5)?.total)
                },
            )
        }),
    ]
}
