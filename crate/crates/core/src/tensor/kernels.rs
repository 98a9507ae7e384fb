//! Forward kernels on plain tensors. The graph reuses them and adds the
//! matching backward rules.

use super::Tensor;
use crate::error::{Error, Result};

/// `out[m,n] += a[m,k] * b[k,n]`
pub(crate) fn gemm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += aik * bv;
            }
        }
    }
}

/// `out[m,n] += a[m,k] * b[n,k]^T`
pub(crate) fn gemm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let dot: f64 = a_row.iter().zip(b_row).map(|(x, y)| x * y).sum();
            out[i * n + j] += dot;
        }
    }
}

/// `out[m,n] += a[k,m]^T * b[k,n]`
pub(crate) fn gemm_tn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == 0.0 {
                continue;
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += api * bv;
            }
        }
    }
}

/// Batch layout of a matmul: `(batch_a, batch_b, m, k, n, out_shape)`.
pub(crate) struct MatmulDims {
    pub batch: usize,
    pub a_batched: bool,
    pub b_batched: bool,
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub out_shape: Vec<usize>,
}

pub(crate) fn matmul_dims(a: &[usize], b: &[usize]) -> Result<MatmulDims> {
    let mismatch = || Error::ShapeMismatch { op: "matmul", lhs: a.to_vec(), rhs: b.to_vec() };
    if a.len() < 2 || b.len() < 2 {
        return Err(mismatch());
    }
    let (a_lead, a_mat) = a.split_at(a.len() - 2);
    let (b_lead, b_mat) = b.split_at(b.len() - 2);
    let (m, k) = (a_mat[0], a_mat[1]);
    let (k2, n) = (b_mat[0], b_mat[1]);
    if k != k2 {
        return Err(mismatch());
    }
    let lead = match (a_lead.is_empty(), b_lead.is_empty()) {
        (_, true) => a_lead,
        (true, false) => b_lead,
        (false, false) if a_lead == b_lead => a_lead,
        _ => return Err(mismatch()),
    };
    let mut out_shape = lead.to_vec();
    out_shape.extend([m, n]);
    Ok(MatmulDims {
        batch: lead.iter().product(),
        a_batched: !a_lead.is_empty(),
        b_batched: !b_lead.is_empty(),
        m,
        k,
        n,
        out_shape,
    })
}

/// Matrix product over the last two axes; leading batch axes must match or
/// be absent on one side.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d = matmul_dims(a.shape(), b.shape())?;
    let mut out = vec![0.0; d.batch * d.m * d.n];
    for t in 0..d.batch {
        let ao = if d.a_batched { t * d.m * d.k } else { 0 };
        let bo = if d.b_batched { t * d.k * d.n } else { 0 };
        gemm_nn(
            &a.data()[ao..ao + d.m * d.k],
            &b.data()[bo..bo + d.k * d.n],
            &mut out[t * d.m * d.n..(t + 1) * d.m * d.n],
            d.m,
            d.k,
            d.n,
        );
    }
    Tensor::new(d.out_shape, out)
}

/// `(outer, len, inner)` strides for reducing along `axis`.
pub(crate) fn axis_layout(op: &'static str, shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::InvalidAxis { op, axis, shape: shape.to_vec() });
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    Ok((outer, shape[axis], inner))
}

pub(crate) fn softmax_raw(x: &[f64], outer: usize, len: usize, inner: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let idx = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (x[idx(j)] - max).exp();
                out[idx(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[idx(j)] /= sum;
            }
        }
    }
    out
}

/// Numerically stable softmax along `axis`.
pub fn softmax(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, len, inner) = axis_layout("softmax", x.shape(), axis)?;
    Tensor::new(x.shape().to_vec(), softmax_raw(x.data(), outer, len, inner))
}

pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}

/// Per-row statistics kept for the layer-norm backward pass.
pub(crate) struct LayerNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
}

pub(crate) fn layer_norm_raw(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<(Tensor, LayerNormCache)> {
    let d = *x.shape().last().ok_or_else(|| Error::InvalidArgument("layer_norm of a scalar".into()))?;
    if d == 0 {
        return Err(Error::InvalidArgument("layer_norm over a zero-length dimension".into()));
    }
    if gain.shape() != [d] || bias.shape() != [d] {
        return Err(Error::ShapeMismatch { op: "layer_norm", lhs: x.shape().to_vec(), rhs: gain.shape().to_vec() });
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument(format!("layer_norm eps must be positive, got {eps}")));
    }
    let rows = x.numel() / d;
    let mut normalized = vec![0.0; x.numel()];
    let mut inv_std = vec![0.0; rows];
    let mut out = vec![0.0; x.numel()];
    for r in 0..rows {
        let row = &x.data()[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        inv_std[r] = rstd;
        for j in 0..d {
            let xh = (row[j] - mean) * rstd;
            normalized[r * d + j] = xh;
            out[r * d + j] = gain.data()[j] * xh + bias.data()[j];
        }
    }
    Ok((Tensor::new(x.shape().to_vec(), out)?, LayerNormCache { normalized, inv_std }))
}

/// Normalizes over the last axis, then applies `gain * x + bias`.
pub fn layer_norm(x: &Tensor, gain: &Tensor, bias: &Tensor, eps: f64) -> Result<Tensor> {
    layer_norm_raw(x, gain, bias, eps).map(|(t, _)| t)
}

/// Gathers rows of a `[V, d]` table.
pub fn embedding_lookup(table: &Tensor, ids: &[usize]) -> Result<Tensor> {
    if table.ndim() != 2 {
        return Err(Error::InvalidArgument(format!("embedding table must be 2-D, got {:?}", table.shape())));
    }
    let (vocab, dim) = (table.shape()[0], table.shape()[1]);
    let mut out = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        if id >= vocab {
            return Err(Error::IndexOutOfRange { op: "embedding_lookup", index: id, extent: vocab });
        }
        out.extend_from_slice(table.row(id));
    }
    Tensor::new(vec![ids.len(), dim], out)
}

pub(crate) fn check_nll_inputs(shape: &[usize], targets: &[usize], mask: &[bool]) -> Result<(usize, usize)> {
    if shape.len() != 2 {
        return Err(Error::InvalidArgument(format!("nll_loss expects [n, V] logits, got {shape:?}")));
    }
    let (n, vocab) = (shape[0], shape[1]);
    if targets.len() != n || mask.len() != n {
        return Err(Error::LengthMismatch {
            op: "nll_loss",
            detail: format!("{n} logit rows, {} targets, {} mask entries", targets.len(), mask.len()),
        });
    }
    for (&t, _) in targets.iter().zip(mask).filter(|(_, &m)| m) {
        if t >= vocab {
            return Err(Error::IndexOutOfRange { op: "nll_loss", index: t, extent: vocab });
        }
    }
    Ok((n, vocab))
}

/// Row-wise softmax probabilities plus the mean negative log-likelihood.
pub(crate) fn nll_raw(
    logits: &[f64],
    n: usize,
    vocab: usize,
    targets: &[usize],
    mask: &[bool],
) -> (f64, Vec<f64>, usize) {
    let probs = softmax_raw(logits, n, vocab, 1);
    let mut total = 0.0;
    let mut count = 0;
    for i in (0..n).filter(|&i| mask[i]) {
        let row = &logits[i * vocab..(i + 1) * vocab];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[targets[i]];
        count += 1;
    }
    let loss = if count == 0 { 0.0 } else { total / count as f64 };
    (loss, probs, count)
}

/// Mean negative log-likelihood over positions where `mask` is true.
pub fn nll_loss(logits: &Tensor, targets: &[usize], mask: &[bool]) -> Result<Tensor> {
    let (n, vocab) = check_nll_inputs(logits.shape(), targets, mask)?;
    let (loss, _, _) = nll_raw(logits.data(), n, vocab, targets, mask);
    Ok(Tensor::scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn matmul_identity_and_hand_example() {
        let eye = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let a = Tensor::from_rows(&[vec![1.5, -2.0], vec![0.25, 7.0]]);
        assert_eq!(matmul(&eye, &a).unwrap().data(), a.data());

        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let ones = Tensor::from_rows(&[vec![1.0], vec![1.0]]);
        let y = matmul(&x, &ones).unwrap();
        assert_eq!(y.shape(), &[2, 1]);
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Tensor::zeros(&[2, 3]);
        let b = Tensor::new(vec![3, 4], (0..12).map(|v| v as f64 - 4.5).collect()).unwrap();
        let y = matmul(&z, &b).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_rejects_inner_mismatch_naming_shapes() {
        let err = matmul(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2, 3])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "{msg}");
    }

    #[test]
    fn batched_matmul_broadcasts_rhs() {
        let a = Tensor::new(vec![2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::from_rows(&[vec![1.0], vec![1.0]]);
        let y = matmul(&a, &b).unwrap();
        assert_eq!(y.shape(), &[2, 1, 1]);
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&Tensor::from_vec(vec![0.0; 3]), 0).unwrap();
        assert!(close(u.data(), &[1.0 / 3.0; 3], 1e-15));

        let big = softmax(&Tensor::from_vec(vec![1000.0, 0.0]), 0).unwrap();
        assert!(big.all_finite());
        assert!((big.data()[0] - 1.0).abs() < 1e-12 && big.data()[1] < 1e-300 + 1e-12);

        let logs = softmax(&Tensor::from_vec(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]), 0).unwrap();
        assert!(close(logs.data(), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0], 1e-15));

        assert!(matches!(softmax(&Tensor::zeros(&[2, 2]), 2), Err(Error::InvalidAxis { .. })));
    }

    #[test]
    fn softmax_along_leading_axis() {
        let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![0.0, 3.0]]);
        let y = softmax(&x, 0).unwrap();
        assert!((y.at(&[0, 0]) - 0.5).abs() < 1e-15);
        assert!((y.at(&[0, 1]) + y.at(&[1, 1]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn layer_norm_examples() {
        let one = Tensor::full(&[4], 1.0);
        let zero = Tensor::zeros(&[4]);
        let c = layer_norm(&Tensor::full(&[4], 3.5), &one, &zero, 1e-6).unwrap();
        assert!(c.data().iter().all(|&v| v == 0.0));

        let g = Tensor::full(&[2], 1.0);
        let b = Tensor::zeros(&[2]);
        let y = layer_norm(&Tensor::from_vec(vec![1.0, 3.0]), &g, &b, 1e-6).unwrap();
        // variance 1, so the only deviation comes from eps.
        let expect = 1.0 / (1.0f64 + 1e-6).sqrt();
        assert!(close(y.data(), &[-expect, expect], 1e-15));

        let bias = Tensor::from_vec(vec![0.5, -2.0]);
        let y = layer_norm(&Tensor::from_vec(vec![4.0, -9.0]), &Tensor::zeros(&[2]), &bias, 1e-6).unwrap();
        assert_eq!(y.data(), bias.data());

        assert!(layer_norm(&Tensor::zeros(&[3, 0]), &Tensor::zeros(&[0]), &Tensor::zeros(&[0]), 1e-6).is_err());
    }

    #[test]
    fn relu_examples() {
        let y = relu(&Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        assert!(relu(&Tensor::from_vec(vec![-3.0, -0.5])).data().iter().all(|&v| v == 0.0));
        let x = Tensor::from_vec(vec![-2.0, 0.3, 5.0, -0.1]);
        assert_eq!(relu(&relu(&x)), relu(&x));
    }

    #[test]
    fn embedding_examples() {
        let table = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(embedding_lookup(&table, &[0]).unwrap().data(), &[1.0, 2.0]);
        assert_eq!(embedding_lookup(&table, &[2, 2]).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        let empty = embedding_lookup(&table, &[]).unwrap();
        assert_eq!(empty.shape(), &[0, 2]);
        let err = embedding_lookup(&table, &[7]).unwrap_err();
        assert!(err.to_string().contains('7'));
    }

    #[test]
    fn nll_examples() {
        let v = 5;
        let uniform = Tensor::zeros(&[3, v]);
        let l = nll_loss(&uniform, &[0, 4, 2], &[true; 3]).unwrap();
        assert!((l.item() - (v as f64).ln()).abs() < 1e-12);

        let mut prev = f64::INFINITY;
        for margin in [1.0, 10.0, 40.0] {
            let logits = Tensor::from_rows(&[vec![margin, 0.0, 0.0]]);
            let l = nll_loss(&logits, &[0], &[true]).unwrap().item();
            assert!(l < prev);
            prev = l;
        }
        assert!(prev < 1e-15);

        let logits = Tensor::from_rows(&[vec![0.3, -1.0], vec![2.0, 0.5]]);
        let both = nll_loss(&logits, &[1, 0], &[false, true]).unwrap().item();
        let single = nll_loss(&Tensor::from_rows(&[vec![2.0, 0.5]]), &[0], &[true]).unwrap().item();
        assert_eq!(both, single);

        assert_eq!(nll_loss(&logits, &[0, 0], &[false, false]).unwrap().item(), 0.0);
        assert!(nll_loss(&logits, &[0], &[true, true]).is_err());
    }
}
