use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;

use super::ops::gemm;
use super::Tensor;
use crate::error::{Error, Result};

/// Standard normal CDF via `erf`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Output length of a valid (unpadded) convolution.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    (len >= kernel && kernel > 0 && stride > 0).then(|| (len - kernel) / stride + 1)
}

impl Tensor {
    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|&x| x * normal_cdf(x)).collect();
        Tensor::from_op(
            "gelu",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, p| {
                let x = p[0].data();
                let gx = g
                    .iter()
                    .zip(x.iter())
                    .map(|(g, &x)| g * (normal_cdf(x) + x * normal_pdf(x)))
                    .collect();
                vec![Some(gx)]
            },
        )
    }

    /// Row-wise softmax of `[N × K]`.
    pub fn softmax_rows(&self) -> Result<Tensor> {
        let (n, k) = self.dims2()?;
        let mut out = self.to_vec();
        out.chunks_mut(k).for_each(softmax_in_place);
        let y = out.clone();
        Tensor::from_op(
            "softmax_rows",
            vec![n, k],
            out,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; n * k];
                for ((dst, gy), yy) in gx.chunks_mut(k).zip(g.chunks(k)).zip(y.chunks(k)) {
                    let dot: f64 = gy.iter().zip(yy).map(|(a, b)| a * b).sum();
                    dst.iter_mut()
                        .zip(gy.iter().zip(yy))
                        .for_each(|(d, (gy, yy))| *d = yy * (gy - dot));
                }
                vec![Some(gx)]
            },
        )
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `[N × K]` logits.
    pub fn cross_entropy(&self, targets: &[usize]) -> Result<Tensor> {
        let (n, k) = self.dims2()?;
        if targets.len() != n {
            return Err(Error::shape(
                "cross_entropy",
                format!("{} targets for {n} rows", targets.len()),
            ));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::shape(
                "cross_entropy",
                format!("target {bad} out of range for {k} classes"),
            ));
        }
        let mut probs = self.to_vec();
        probs.chunks_mut(k).for_each(softmax_in_place);
        let x = self.data();
        let loss = x
            .chunks(k)
            .zip(targets)
            .map(|(row, &t)| log_sum_exp(row) - row[t])
            .sum::<f64>()
            / n as f64;
        drop(x);
        let targets = targets.to_vec();
        Tensor::from_op(
            "cross_entropy",
            vec![],
            vec![loss],
            vec![self.clone()],
            move |g, _| {
                let scale = g[0] / n as f64;
                let mut gx = probs.clone();
                for (row, &t) in gx.chunks_mut(k).zip(&targets) {
                    row[t] -= 1.0;
                    row.iter_mut().for_each(|v| *v *= scale);
                }
                vec![Some(gx)]
            },
        )
    }

    /// Cosine similarity of two vectors, as a scalar tensor.
    pub fn cosine_similarity(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() != 1 {
            return Err(Error::shape(
                "cosine_similarity",
                format!("expected vectors, got {:?}", self.shape()),
            ));
        }
        let d = self.numel();
        let a = self.reshape(&[1, d])?;
        let b = other.reshape(&[1, other.numel()])?;
        a.cosine_similarity_rows(&b)?.reshape(&[])
    }

    /// Row-wise cosine similarity of `[N × D]` pairs, giving `[N]`.
    pub fn cosine_similarity_rows(&self, other: &Tensor) -> Result<Tensor> {
        let (n, d) = self.dims2()?;
        if other.shape() != self.shape() {
            return Err(Error::shape(
                "cosine_similarity",
                format!("{:?} vs {:?}", self.shape(), other.shape()),
            ));
        }
        let a = self.data();
        let b = other.data();
        let mut sims = Vec::with_capacity(n);
        let mut norms = Vec::with_capacity(n);
        for (ra, rb) in a.chunks(d).zip(b.chunks(d)) {
            let na = ra.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = rb.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::Degenerate {
                    op: "cosine_similarity",
                    msg: "zero-norm vector".into(),
                });
            }
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            sims.push(dot / (na * nb));
            norms.push((na, nb));
        }
        drop((a, b));
        let s = sims.clone();
        Tensor::from_op(
            "cosine_similarity",
            vec![n],
            sims,
            vec![self.clone(), other.clone()],
            move |g, p| {
                let a = p[0].data();
                let b = p[1].data();
                let mut ga = p[0].requires_grad().then(|| vec![0.0; n * d]);
                let mut gb = p[1].requires_grad().then(|| vec![0.0; n * d]);
                for i in 0..n {
                    let (na, nb) = norms[i];
                    let ra = &a[i * d..(i + 1) * d];
                    let rb = &b[i * d..(i + 1) * d];
                    if let Some(ga) = ga.as_mut() {
                        for j in 0..d {
                            ga[i * d + j] = g[i] * (rb[j] / (na * nb) - s[i] * ra[j] / (na * na));
                        }
                    }
                    if let Some(gb) = gb.as_mut() {
                        for j in 0..d {
                            gb[i * d + j] = g[i] * (ra[j] / (na * nb) - s[i] * rb[j] / (nb * nb));
                        }
                    }
                }
                vec![ga, gb]
            },
        )
    }

    /// Valid 1-D convolution of `x[C_in × L]` with `w[C_out × C_in/groups × K]`.
    pub fn conv1d(
        &self,
        weight: &Tensor,
        bias: Option<&Tensor>,
        stride: usize,
        groups: usize,
    ) -> Result<Tensor> {
        let (c_in, len) = self.dims2()?;
        let &[c_out, cin_g, k] = weight.shape() else {
            return Err(Error::shape(
                "conv1d",
                format!("weight must be 3-D, got {:?}", weight.shape()),
            ));
        };
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cin_g != c_in / groups {
            return Err(Error::shape(
                "conv1d",
                format!(
                    "input channels {c_in}, weight {:?}, groups {groups} are inconsistent",
                    weight.shape()
                ),
            ));
        }
        if let Some(b) = bias {
            if b.shape() != [c_out] {
                return Err(Error::shape(
                    "conv1d",
                    format!("bias {:?} for {c_out} filters", b.shape()),
                ));
            }
        }
        let l_out = conv_output_len(len, k, stride).ok_or_else(|| {
            Error::shape(
                "conv1d",
                format!("input length {len} shorter than kernel {k}: empty output"),
            )
        })?;
        let geom = ConvGeometry {
            c_in,
            len,
            c_out,
            k,
            stride,
            groups,
            l_out,
        };
        let mut out = vec![0.0; c_out * l_out];
        {
            let x = self.data();
            let w = weight.data();
            let mut patches = vec![0.0; l_out * cin_g * k];
            for gi in 0..groups {
                geom.im2col(&x, gi, &mut patches);
                let cout_g = c_out / groups;
                let w_g = &w[gi * cout_g * cin_g * k..(gi + 1) * cout_g * cin_g * k];
                let out_g = &mut out[gi * cout_g * l_out..(gi + 1) * cout_g * l_out];
                gemm(
                    cout_g,
                    cin_g * k,
                    l_out,
                    w_g,
                    false,
                    &patches,
                    true,
                    0.0,
                    out_g,
                );
            }
            if let Some(b) = bias {
                let b = b.data();
                out.chunks_mut(l_out)
                    .zip(b.iter())
                    .for_each(|(row, b)| row.iter_mut().for_each(|v| *v += b));
            }
        }
        let mut parents = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            parents.push(b.clone());
        }
        Tensor::from_op("conv1d", vec![c_out, l_out], out, parents, move |g, p| {
            geom.backward(g, p)
        })
    }

    /// Group normalization over `[C × L]` with per-channel affine.
    pub fn group_norm(
        &self,
        num_groups: usize,
        gamma: &Tensor,
        beta: &Tensor,
        eps: f64,
    ) -> Result<Tensor> {
        let (c, l) = self.dims2()?;
        if num_groups == 0 || c % num_groups != 0 {
            return Err(Error::shape(
                "group_norm",
                format!("{c} channels not divisible into {num_groups} groups"),
            ));
        }
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(Error::shape(
                "group_norm",
                format!(
                    "affine params {:?}/{:?} for {c} channels",
                    gamma.shape(),
                    beta.shape()
                ),
            ));
        }
        if eps <= 0.0 {
            return Err(Error::InvalidInput(
                "group_norm eps must be positive".into(),
            ));
        }
        let per_group = (c / num_groups) * l;
        let x = self.data();
        let mut xhat = vec![0.0; c * l];
        let mut inv_std = vec![0.0; num_groups];
        for gi in 0..num_groups {
            let span = gi * per_group..(gi + 1) * per_group;
            let seg = &x[span.clone()];
            let mean = seg.iter().sum::<f64>() / per_group as f64;
            let var = seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / per_group as f64;
            let istd = 1.0 / (var + eps).sqrt();
            inv_std[gi] = istd;
            xhat[span]
                .iter_mut()
                .zip(seg)
                .for_each(|(h, v)| *h = (v - mean) * istd);
        }
        drop(x);
        let mut out = xhat.clone();
        {
            let gm = gamma.data();
            let bt = beta.data();
            for ch in 0..c {
                out[ch * l..(ch + 1) * l]
                    .iter_mut()
                    .for_each(|v| *v = *v * gm[ch] + bt[ch]);
            }
        }
        Tensor::from_op(
            "group_norm",
            vec![c, l],
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            move |g, p| {
                let g_gamma = p[1].requires_grad().then(|| {
                    (0..c)
                        .map(|ch| {
                            let r = ch * l..(ch + 1) * l;
                            g[r.clone()].iter().zip(&xhat[r]).map(|(a, b)| a * b).sum()
                        })
                        .collect::<Vec<f64>>()
                });
                let g_beta = p[2].requires_grad().then(|| {
                    g.chunks(l)
                        .map(|row| row.iter().sum())
                        .collect::<Vec<f64>>()
                });
                let g_x = p[0].requires_grad().then(|| {
                    let gm = p[1].data();
                    let mut dxhat = vec![0.0; c * l];
                    for ch in 0..c {
                        let r = ch * l..(ch + 1) * l;
                        dxhat[r.clone()]
                            .iter_mut()
                            .zip(&g[r])
                            .for_each(|(d, g)| *d = g * gm[ch]);
                    }
                    let n = per_group as f64;
                    let mut gx = vec![0.0; c * l];
                    for gi in 0..num_groups {
                        let r = gi * per_group..(gi + 1) * per_group;
                        let dh = &dxhat[r.clone()];
                        let xh = &xhat[r.clone()];
                        let sum_dh: f64 = dh.iter().sum();
                        let sum_dh_xh: f64 = dh.iter().zip(xh).map(|(a, b)| a * b).sum();
                        let istd = inv_std[gi];
                        gx[r]
                            .iter_mut()
                            .zip(dh.iter().zip(xh))
                            .for_each(|(o, (d, h))| {
                                *o = istd / n * (n * d - sum_dh - h * sum_dh_xh)
                            });
                    }
                    gx
                });
                vec![g_x, g_gamma, g_beta]
            },
        )
    }

    /// Inverted dropout: zeroes entries with probability `p` and rescales the
    /// rest by `1/(1-p)`. Identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&self, p: f64, rng: &mut R) -> Result<Tensor> {
        if p <= 0.0 {
            return Ok(self.clone());
        }
        if p >= 1.0 {
            return Err(Error::InvalidInput(format!(
                "dropout probability {p} must be < 1"
            )));
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        self.mul(&Tensor::new(mask, self.shape())?)
    }
}

#[derive(Clone, Copy)]
struct ConvGeometry {
    c_in: usize,
    len: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    groups: usize,
    l_out: usize,
}

impl ConvGeometry {
    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    /// `patches[o, ci·K + k] = x[group·cin_g + ci, o·stride + k]`.
    fn im2col(&self, x: &[f64], group: usize, patches: &mut [f64]) {
        let (cin_g, k) = (self.cin_g(), self.k);
        let width = cin_g * k;
        for o in 0..self.l_out {
            let start = o * self.stride;
            let row = &mut patches[o * width..(o + 1) * width];
            for ci in 0..cin_g {
                let ch = group * cin_g + ci;
                row[ci * k..(ci + 1) * k]
                    .copy_from_slice(&x[ch * self.len + start..ch * self.len + start + k]);
            }
        }
    }

    fn col2im(&self, patches: &[f64], group: usize, gx: &mut [f64]) {
        let (cin_g, k) = (self.cin_g(), self.k);
        let width = cin_g * k;
        for o in 0..self.l_out {
            let start = o * self.stride;
            let row = &patches[o * width..(o + 1) * width];
            for ci in 0..cin_g {
                let ch = group * cin_g + ci;
                gx[ch * self.len + start..ch * self.len + start + k]
                    .iter_mut()
                    .zip(&row[ci * k..(ci + 1) * k])
                    .for_each(|(a, b)| *a += b);
            }
        }
    }

    fn backward(&self, g: &[f64], p: &[Tensor]) -> Vec<Option<Vec<f64>>> {
        let (cin_g, cout_g, k, l_out) = (self.cin_g(), self.cout_g(), self.k, self.l_out);
        let width = cin_g * k;
        let need_x = p[0].requires_grad();
        let need_w = p[1].requires_grad();
        let x = p[0].data();
        let w = p[1].data();
        let mut gx = need_x.then(|| vec![0.0; self.c_in * self.len]);
        let mut gw = need_w.then(|| vec![0.0; self.c_out * width]);
        let mut patches = vec![0.0; l_out * width];
        for gi in 0..self.groups {
            let g_out = &g[gi * cout_g * l_out..(gi + 1) * cout_g * l_out];
            if let Some(gw) = gw.as_mut() {
                self.im2col(&x, gi, &mut patches);
                let dst = &mut gw[gi * cout_g * width..(gi + 1) * cout_g * width];
                gemm(
                    cout_g, l_out, width, g_out, false, &patches, false, 0.0, dst,
                );
            }
            if let Some(gx) = gx.as_mut() {
                let w_g = &w[gi * cout_g * width..(gi + 1) * cout_g * width];
                gemm(
                    l_out,
                    cout_g,
                    width,
                    g_out,
                    true,
                    w_g,
                    false,
                    0.0,
                    &mut patches,
                );
                self.col2im(&patches, gi, gx);
            }
        }
        let mut grads = vec![gx, gw];
        if p.len() == 3 {
            let gb = p[2]
                .requires_grad()
                .then(|| g.chunks(l_out).map(|row| row.iter().sum()).collect());
            grads.push(gb);
        }
        grads
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    row.iter_mut().for_each(|v| {
        *v = (*v - m).exp();
        z += *v;
    });
    row.iter_mut().for_each(|v| *v /= z);
}
