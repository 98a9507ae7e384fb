use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Parameter-free sine-cosine position vector:
/// `[2i] = sin(pos / 10000^(2i/d))`, `[2i+1] = cos(pos / 10000^(2i/d))`.
pub fn sincos_position(pos: usize, d: usize) -> Result<Vec<f64>> {
    if !d.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("positional dimension {d} must be even")));
    }
    let mut out = vec![0.0; d];
    for i in 0..d / 2 {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
    Ok(out)
}

/// Rows `0..n` of the positional table as an `[n, d]` tensor. Words and
/// sentences index the same table.
pub fn sincos_table(n: usize, d: usize) -> Result<Tensor> {
    let mut data = Vec::with_capacity(n * d);
    for pos in 0..n {
        data.extend(sincos_position(pos, d)?);
    }
    Tensor::new(vec![n, d], data)
}
