use super::Tensor;
use crate::error::{Error, Result};

/// `c = a·b + beta·c` for row-major operands, with optional transposes.
///
/// When `a_t` is set, `a` is stored as `[k × m]`; when `b_t` is set, `b` is
/// stored as `[n × k]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if b_t {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    // SAFETY: strides describe in-bounds views of the given slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn need(parents: &[Tensor], i: usize) -> bool {
    parents[i].requires_grad()
}

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::from_op(
            "add",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, p| {
                vec![
                    need(p, 0).then(|| g.to_vec()),
                    need(p, 1).then(|| g.to_vec()),
                ]
            },
        )
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::from_op(
            "sub",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, p| {
                vec![
                    need(p, 0).then(|| g.to_vec()),
                    need(p, 1).then(|| g.iter().map(|v| -v).collect()),
                ]
            },
        )
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        let data = self
            .data()
            .iter()
            .zip(other.data().iter())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::from_op(
            "mul",
            self.shape().to_vec(),
            data,
            vec![self.clone(), other.clone()],
            |g, p| {
                let ga = need(p, 0).then(|| {
                    let b = p[1].data();
                    g.iter().zip(b.iter()).map(|(g, b)| g * b).collect()
                });
                let gb = need(p, 1).then(|| {
                    let a = p[0].data();
                    g.iter().zip(a.iter()).map(|(g, a)| g * a).collect()
                });
                vec![ga, gb]
            },
        )
    }

    pub fn scale(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * s).collect();
        Tensor::from_op(
            "scale",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            move |g, _| vec![Some(g.iter().map(|v| v * s).collect())],
        )
    }

    pub fn add_scalar(&self, s: f64) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v + s).collect();
        Tensor::from_op(
            "add_scalar",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        )
    }

    pub fn square(&self) -> Result<Tensor> {
        let data = self.data().iter().map(|v| v * v).collect();
        Tensor::from_op(
            "square",
            self.shape().to_vec(),
            data,
            vec![self.clone()],
            |g, p| {
                let x = p[0].data();
                vec![Some(
                    g.iter().zip(x.iter()).map(|(g, x)| 2.0 * g * x).collect(),
                )]
            },
        )
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s = self.data().iter().sum();
        let n = self.numel();
        Tensor::from_op("sum", vec![], vec![s], vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Result<Tensor> {
        let n = self.numel();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = self.data().iter().sum::<f64>() / n as f64;
        Tensor::from_op("mean", vec![], vec![s], vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0] / n as f64; n])]
        })
    }

    /// Mean of squared elements.
    pub fn mean_square(&self) -> Result<Tensor> {
        self.square()?.mean()
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape()),
            ));
        }
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        )
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let data = transpose_raw(&self.data(), r, c);
        Tensor::from_op(
            "transpose",
            vec![c, r],
            data,
            vec![self.clone()],
            move |g, _| vec![Some(transpose_raw(g, c, r))],
        )
    }

    /// `[m × k] · [k × n]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (k2, n) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}×{k}] · [{k2}×{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.data(),
            false,
            &other.data(),
            false,
            0.0,
            &mut out,
        );
        Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g, p| {
                let ga = need(p, 0).then(|| {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, false, &p[1].data(), true, 0.0, &mut ga);
                    ga
                });
                let gb = need(p, 1).then(|| {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, &p[0].data(), true, g, false, 0.0, &mut gb);
                    gb
                });
                vec![ga, gb]
            },
        )
    }

    /// `[m × k] · [n × k]ᵀ`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = self.dims2()?;
        let (n, k2) = other.dims2()?;
        if k != k2 {
            return Err(Error::shape(
                "matmul_nt",
                format!("[{m}×{k}] · [{n}×{k2}]ᵀ"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            &self.data(),
            false,
            &other.data(),
            true,
            0.0,
            &mut out,
        );
        Tensor::from_op(
            "matmul_nt",
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            move |g, p| {
                let ga = need(p, 0).then(|| {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, g, false, &p[1].data(), false, 0.0, &mut ga);
                    ga
                });
                let gb = need(p, 1).then(|| {
                    let mut gb = vec![0.0; n * k];
                    gemm(n, m, k, g, true, &p[0].data(), false, 0.0, &mut gb);
                    gb
                });
                vec![ga, gb]
            },
        )
    }

    /// Adds `bias[D]` to every row of `[N × D]`.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        let (n, d) = self.dims2()?;
        if bias.shape() != [d] {
            return Err(Error::shape(
                "add_row",
                format!("bias {:?} for rows of width {d}", bias.shape()),
            ));
        }
        let mut out = self.to_vec();
        {
            let b = bias.data();
            out.chunks_mut(d)
                .for_each(|row| row.iter_mut().zip(b.iter()).for_each(|(x, b)| *x += b));
        }
        Tensor::from_op(
            "add_row",
            vec![n, d],
            out,
            vec![self.clone(), bias.clone()],
            move |g, p| {
                let gb = need(p, 1).then(|| {
                    let mut gb = vec![0.0; d];
                    g.chunks(d)
                        .for_each(|row| gb.iter_mut().zip(row).for_each(|(a, b)| *a += b));
                    gb
                });
                vec![need(p, 0).then(|| g.to_vec()), gb]
            },
        )
    }

    /// Adds `bias[C]` to every column of `[C × L]`.
    pub fn add_col(&self, bias: &Tensor) -> Result<Tensor> {
        let (c, l) = self.dims2()?;
        if bias.shape() != [c] {
            return Err(Error::shape(
                "add_col",
                format!("bias {:?} for {c} rows", bias.shape()),
            ));
        }
        let mut out = self.to_vec();
        {
            let b = bias.data();
            out.chunks_mut(l)
                .zip(b.iter())
                .for_each(|(row, b)| row.iter_mut().for_each(|x| *x += b));
        }
        Tensor::from_op(
            "add_col",
            vec![c, l],
            out,
            vec![self.clone(), bias.clone()],
            move |g, p| {
                let gb = need(p, 1).then(|| g.chunks(l).map(|row| row.iter().sum()).collect());
                vec![need(p, 0).then(|| g.to_vec()), gb]
            },
        )
    }

    /// `x·Wᵀ + b` for `x[N × in]`, `W[out × in]`, `b[out]`.
    pub fn linear(&self, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
        let y = self.matmul_nt(weight)?;
        match bias {
            Some(b) => y.add_row(b),
            None => Ok(y),
        }
    }

    pub fn slice_cols(&self, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        if start + len > c {
            return Err(Error::shape(
                "slice_cols",
                format!("columns {start}..{} of {c}", start + len),
            ));
        }
        let data: Vec<f64> = self
            .data()
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Tensor::from_op(
            "slice_cols",
            vec![r, len],
            data,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; r * c];
                gx.chunks_mut(c)
                    .zip(g.chunks(len))
                    .for_each(|(dst, src)| dst[start..start + len].copy_from_slice(src));
                vec![Some(gx)]
            },
        )
    }

    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_cols", "no inputs"))?;
        let (r, _) = first.dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row count {pr} vs {r}"),
                ));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; r * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = p.data();
            for i in 0..r {
                data[i * total + offset..i * total + offset + w]
                    .copy_from_slice(&src[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        Tensor::from_op(
            "concat_cols",
            vec![r, total],
            data,
            parts.to_vec(),
            move |g, p| {
                let mut offset = 0;
                widths
                    .iter()
                    .enumerate()
                    .map(|(j, &w)| {
                        let out = need(p, j).then(|| {
                            g.chunks(total)
                                .flat_map(|row| row[offset..offset + w].iter().copied())
                                .collect()
                        });
                        offset += w;
                        out
                    })
                    .collect()
            },
        )
    }

    pub fn slice_rows(&self, start: usize, len: usize) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        if start + len > r {
            return Err(Error::shape(
                "slice_rows",
                format!("rows {start}..{} of {r}", start + len),
            ));
        }
        let data = self.data()[start * c..(start + len) * c].to_vec();
        Tensor::from_op(
            "slice_rows",
            vec![len, c],
            data,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; r * c];
                gx[start * c..(start + len) * c].copy_from_slice(g);
                vec![Some(gx)]
            },
        )
    }

    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let (_, c) = first.dims2()?;
        let mut heights = Vec::with_capacity(parts.len());
        let mut data = Vec::new();
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pc != c {
                return Err(Error::shape(
                    "concat_rows",
                    format!("column count {pc} vs {c}"),
                ));
            }
            heights.push(pr);
            data.extend_from_slice(&p.data());
        }
        let total: usize = heights.iter().sum();
        Tensor::from_op(
            "concat_rows",
            vec![total, c],
            data,
            parts.to_vec(),
            move |g, p| {
                let mut offset = 0;
                heights
                    .iter()
                    .enumerate()
                    .map(|(j, &h)| {
                        let out = need(p, j).then(|| g[offset * c..(offset + h) * c].to_vec());
                        offset += h;
                        out
                    })
                    .collect()
            },
        )
    }

    /// Gathers rows by index (indices may repeat).
    pub fn index_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        if let Some(&bad) = indices.iter().find(|&&i| i >= r) {
            return Err(Error::shape(
                "index_rows",
                format!("row {bad} out of range for {r} rows"),
            ));
        }
        let data: Vec<f64> = {
            let src = self.data();
            indices
                .iter()
                .flat_map(|&i| src[i * c..(i + 1) * c].iter().copied())
                .collect()
        };
        let indices = indices.to_vec();
        Tensor::from_op(
            "index_rows",
            vec![indices.len(), c],
            data,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; r * c];
                for (row, &i) in g.chunks(c).zip(&indices) {
                    gx[i * c..(i + 1) * c]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(a, b)| *a += b);
                }
                vec![Some(gx)]
            },
        )
    }

    /// Zero-pads the columns of `[C × L]` on both sides.
    pub fn pad_cols(&self, left: usize, right: usize) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        let w = c + left + right;
        let mut data = vec![0.0; r * w];
        {
            let src = self.data();
            for i in 0..r {
                data[i * w + left..i * w + left + c].copy_from_slice(&src[i * c..(i + 1) * c]);
            }
        }
        Tensor::from_op(
            "pad_cols",
            vec![r, w],
            data,
            vec![self.clone()],
            move |g, _| {
                let gx = g
                    .chunks(w)
                    .flat_map(|row| row[left..left + c].iter().copied())
                    .collect();
                vec![Some(gx)]
            },
        )
    }

    /// Column means of `[N × D]`, giving `[D]`.
    pub fn mean_rows(&self) -> Result<Tensor> {
        let (n, d) = self.dims2()?;
        if n == 0 {
            return Err(Error::shape("mean_rows", "no rows"));
        }
        let mut out = vec![0.0; d];
        self.data()
            .chunks(d)
            .for_each(|row| out.iter_mut().zip(row).for_each(|(a, b)| *a += b));
        out.iter_mut().for_each(|v| *v /= n as f64);
        Tensor::from_op(
            "mean_rows",
            vec![d],
            out,
            vec![self.clone()],
            move |g, _| {
                let gx = (0..n)
                    .flat_map(|_| g.iter().map(|v| v / n as f64))
                    .collect();
                vec![Some(gx)]
            },
        )
    }
}

impl Tensor {
    /// Overwrites the given columns of `[C × L]` with `vector[C]`. Gradients
    /// of replaced columns flow to `vector` instead of `self`.
    pub fn replace_cols(&self, cols: &[usize], vector: &Tensor) -> Result<Tensor> {
        let (r, c) = self.dims2()?;
        if vector.shape() != [r] {
            return Err(Error::shape(
                "replace_cols",
                format!("vector {:?} for {r} rows", vector.shape()),
            ));
        }
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::shape(
                "replace_cols",
                format!("column {bad} out of range for {c} columns"),
            ));
        }
        let mut hit = vec![false; c];
        cols.iter().for_each(|&j| hit[j] = true);
        let mut data = self.to_vec();
        {
            let v = vector.data();
            for (j, _) in hit.iter().enumerate().filter(|(_, h)| **h) {
                (0..r).for_each(|i| data[i * c + j] = v[i]);
            }
        }
        Tensor::from_op(
            "replace_cols",
            vec![r, c],
            data,
            vec![self.clone(), vector.clone()],
            move |g, p| {
                let gx = need(p, 0).then(|| {
                    let mut gx = g.to_vec();
                    for (j, _) in hit.iter().enumerate().filter(|(_, h)| **h) {
                        (0..r).for_each(|i| gx[i * c + j] = 0.0);
                    }
                    gx
                });
                let gv = need(p, 1).then(|| {
                    (0..r)
                        .map(|i| (0..c).filter(|&j| hit[j]).map(|j| g[i * c + j]).sum())
                        .collect()
                });
                vec![gx, gv]
            },
        )
    }
}

pub(crate) fn transpose_raw(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: &[f64], shape: &[usize]) -> Tensor {
        Tensor::new(data.to_vec(), shape).unwrap()
    }

    #[test]
    fn matmul_matches_hand_computation() {
        let a = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let b = t(&[7.0, 8.0, 9.0, 10.0, 11.0, 12.0], &[3, 2]);
        assert_eq!(
            a.matmul(&b).unwrap().to_vec(),
            vec![58.0, 64.0, 139.0, 154.0]
        );
        let bt = b.transpose().unwrap();
        assert_eq!(
            a.matmul_nt(&bt).unwrap().to_vec(),
            vec![58.0, 64.0, 139.0, 154.0]
        );
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = t(&[1.0, 2.0], &[1, 2]);
        let b = t(&[1.0, 2.0, 3.0], &[3, 1]);
        assert!(matches!(a.matmul(&b), Err(Error::Shape { .. })));
        assert!(matches!(a.add(&b), Err(Error::Shape { .. })));
        assert!(matches!(a.index_rows(&[1]), Err(Error::Shape { .. })));
    }

    #[test]
    fn slicing_and_concatenation_invert() {
        let x = t(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[2, 3]);
        let left = x.slice_cols(0, 1).unwrap();
        let right = x.slice_cols(1, 2).unwrap();
        assert_eq!(
            Tensor::concat_cols(&[left, right]).unwrap().to_vec(),
            x.to_vec()
        );
        let top = x.slice_rows(0, 1).unwrap();
        let bottom = x.slice_rows(1, 1).unwrap();
        assert_eq!(
            Tensor::concat_rows(&[top, bottom]).unwrap().to_vec(),
            x.to_vec()
        );
    }

    #[test]
    fn pad_cols_places_zeros() {
        let x = t(&[1.0, 2.0], &[1, 2]);
        assert_eq!(
            x.pad_cols(1, 2).unwrap().to_vec(),
            vec![0.0, 1.0, 2.0, 0.0, 0.0]
        );
    }

    #[test]
    fn index_rows_scatters_gradient() {
        let x = Tensor::param(vec![1.0, 2.0, 3.0, 4.0], &[2, 2]).unwrap();
        let y = x.index_rows(&[1, 1, 0]).unwrap().sum().unwrap();
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
    }
}
