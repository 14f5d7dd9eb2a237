//! Straight-line numeric kernels shared by the taped and tape-free paths, so
//! both produce bit-identical values.

use super::tensor::Tensor;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log Σ exp(xᵢ)` with max subtraction.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.last_dim(), inp, "linear: input width {} vs weight {:?}", x.last_dim(), w.shape());
    assert_eq!(b.len(), out, "linear: bias {:?} vs weight {:?}", b.shape(), w.shape());
    let rows = x.rows();
    let (wd, bd, xd) = (w.data(), b.data(), x.data());
    let mut y = Vec::with_capacity(rows * out);
    for r in 0..rows {
        let xr = &xd[r * inp..(r + 1) * inp];
        for o in 0..out {
            let wr = &wd[o * inp..(o + 1) * inp];
            let mut acc = bd[o];
            for (a, c) in wr.iter().zip(xr) {
                acc += a * c;
            }
            y.push(acc);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = out;
    Tensor::new(shape, y).expect("linear output shape")
}

/// Returns `(dx, dw, db)` for `y = x wᵀ + b` given `dy`.
pub fn linear_backward(dy: &[f64], x: &Tensor, w: &Tensor) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    let rows = x.rows();
    let (wd, xd) = (w.data(), x.data());
    let mut dx = vec![0.0; rows * inp];
    let mut dw = vec![0.0; out * inp];
    let mut db = vec![0.0; out];
    for r in 0..rows {
        let xr = &xd[r * inp..(r + 1) * inp];
        let dxr = &mut dx[r * inp..(r + 1) * inp];
        for o in 0..out {
            let g = dy[r * out + o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &wd[o * inp..(o + 1) * inp];
            let dwr = &mut dw[o * inp..(o + 1) * inp];
            for i in 0..inp {
                dwr[i] += g * xr[i];
                dxr[i] += g * wr[i];
            }
        }
    }
    (dx, dw, db)
}

pub fn log_softmax(x: &Tensor) -> Tensor {
    let k = x.last_dim();
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        let row = &x.data()[r * k..(r + 1) * k];
        let lse = log_sum_exp(row);
        out.extend(row.iter().map(|v| v - lse));
    }
    Tensor::new(x.shape().to_vec(), out).expect("shape")
}

pub fn log_softmax_backward(dy: &[f64], y: &Tensor) -> Vec<f64> {
    let k = y.last_dim();
    let mut dx = vec![0.0; y.len()];
    for r in 0..y.rows() {
        let yr = &y.data()[r * k..(r + 1) * k];
        let gr = &dy[r * k..(r + 1) * k];
        let total: f64 = gr.iter().sum();
        for j in 0..k {
            dx[r * k + j] = gr[j] - yr[j].exp() * total;
        }
    }
    dx
}

/// Softmax of a single row.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(xs);
    xs.iter().map(|x| (x - lse).exp()).collect()
}
