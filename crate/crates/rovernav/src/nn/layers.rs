//! Layer primitives with exact reverse-mode gradients: dense, valid-padding
//! strided 2-D convolution, ReLU, and a single-step LSTM cell.
//!
//! Each `*_backward` returns analytically exact gradients; the test suite
//! checks every one against central finite differences.

use super::tensor::Tensor;

/// y = W x + b with W of shape (out, in).
pub fn dense_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(x.len(), in_dim);
    let wd = w.data();
    let mut y = b.data().to_vec();
    for o in 0..out_dim {
        let row = &wd[o * in_dim..(o + 1) * in_dim];
        let mut acc = 0.0;
        for (wi, xi) in row.iter().zip(x) {
            acc += wi * xi;
        }
        y[o] += acc;
    }
    y
}

/// Gradients of a dense layer: accumulates into `dw`/`db` slices (laid out
/// like the parameters) and returns dx.
pub fn dense_backward(w: &Tensor, x: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let (out_dim, in_dim) = (w.shape()[0], w.shape()[1]);
    let wd = w.data();
    let mut dx = vec![0.0; in_dim];
    for o in 0..out_dim {
        let g = dy[o];
        db[o] += g;
        let row = &wd[o * in_dim..(o + 1) * in_dim];
        let drow = &mut dw[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            drow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    dx
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// dx from dy, masked by the pre-activation sign.
pub fn relu_backward(pre: &[f64], dy: &[f64]) -> Vec<f64> {
    pre.iter().zip(dy).map(|(&p, &g)| if p > 0.0 { g } else { 0.0 }).collect()
}

pub fn conv2d_output_shape(x_shape: &[usize], w_shape: &[usize], stride: usize) -> (usize, usize, usize) {
    let (h, wd) = (x_shape[1], x_shape[2]);
    let k = w_shape[2];
    ((w_shape[0]), (h - k) / stride + 1, (wd - k) / stride + 1)
}

/// Valid-padding strided convolution. x: (ci, h, w), w: (co, ci, k, k),
/// b: (co); output (co, ho, wo).
pub fn conv2d_forward(w: &Tensor, b: &Tensor, x: &Tensor, stride: usize) -> Tensor {
    let (co, ho, wo) = conv2d_output_shape(x.shape(), w.shape(), stride);
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let k = w.shape()[2];
    let xd = x.data();
    let wv = w.data();
    let bv = b.data();
    let mut out = Tensor::zeros(vec![co, ho, wo]);
    let od = out.data_mut();
    for o in 0..co {
        let obase = o * ho * wo;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut acc = bv[o];
                for c in 0..ci {
                    let wbase = ((o * ci + c) * k) * k;
                    let xbase = c * h * wd;
                    for ky in 0..k {
                        let xrow = xbase + (oy * stride + ky) * wd + ox * stride;
                        let wrow = wbase + ky * k;
                        for kx in 0..k {
                            acc += wv[wrow + kx] * xd[xrow + kx];
                        }
                    }
                }
                od[obase + oy * wo + ox] = acc;
            }
        }
    }
    out
}

/// Backward pass of [`conv2d_forward`]; accumulates dw/db and returns dx.
pub fn conv2d_backward(
    w: &Tensor,
    x: &Tensor,
    dy: &Tensor,
    stride: usize,
    dw: &mut [f64],
    db: &mut [f64],
) -> Tensor {
    let (ci, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, ho, wo) = (dy.shape()[0], dy.shape()[1], dy.shape()[2]);
    let k = w.shape()[2];
    let xd = x.data();
    let wv = w.data();
    let dyd = dy.data();
    let mut dx = Tensor::zeros(vec![ci, h, wd]);
    let dxd = dx.data_mut();
    for o in 0..co {
        for oy in 0..ho {
            for ox in 0..wo {
                let g = dyd[(o * ho + oy) * wo + ox];
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for c in 0..ci {
                    let wbase = ((o * ci + c) * k) * k;
                    let xbase = c * h * wd;
                    for ky in 0..k {
                        let xrow = xbase + (oy * stride + ky) * wd + ox * stride;
                        let wrow = wbase + ky * k;
                        for kx in 0..k {
                            dw[wrow + kx] += g * xd[xrow + kx];
                            dxd[xrow + kx] += g * wv[wrow + kx];
                        }
                    }
                }
            }
        }
    }
    dx
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intermediates of one LSTM cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub gate_i: Vec<f64>,
    pub gate_f: Vec<f64>,
    pub gate_g: Vec<f64>,
    pub gate_o: Vec<f64>,
    pub cell: Vec<f64>,
}

/// One LSTM cell step. Weights are packed in gate order [i, f, g, o]:
/// wx (4H, D), wh (4H, H), b (4H).
pub fn lstm_forward(
    wx: &Tensor,
    wh: &Tensor,
    b: &Tensor,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (Vec<f64>, Vec<f64>, LstmCache) {
    let hidden = wh.shape()[1];
    let mut z = dense_forward_packed(wx, wh, b, x, h_prev);
    debug_assert_eq!(z.len(), 4 * hidden);
    let (zi, rest) = z.split_at_mut(hidden);
    let (zf, rest) = rest.split_at_mut(hidden);
    let (zg, zo) = rest.split_at_mut(hidden);

    let gate_i: Vec<f64> = zi.iter().map(|&v| sigmoid(v)).collect();
    let gate_f: Vec<f64> = zf.iter().map(|&v| sigmoid(v)).collect();
    let gate_g: Vec<f64> = zg.iter().map(|&v| v.tanh()).collect();
    let gate_o: Vec<f64> = zo.iter().map(|&v| sigmoid(v)).collect();

    let cell: Vec<f64> = (0..hidden)
        .map(|j| gate_f[j] * c_prev[j] + gate_i[j] * gate_g[j])
        .collect();
    let h: Vec<f64> = (0..hidden).map(|j| gate_o[j] * cell[j].tanh()).collect();
    let cache = LstmCache {
        gate_i,
        gate_f,
        gate_g,
        gate_o,
        cell: cell.clone(),
    };
    (h, cell, cache)
}

/// z = wx x + wh h_prev + b.
fn dense_forward_packed(wx: &Tensor, wh: &Tensor, b: &Tensor, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
    let rows = wx.shape()[0];
    let in_x = wx.shape()[1];
    let in_h = wh.shape()[1];
    let wxd = wx.data();
    let whd = wh.data();
    let mut z = b.data().to_vec();
    for r in 0..rows {
        let mut acc = 0.0;
        let row_x = &wxd[r * in_x..(r + 1) * in_x];
        for (w, v) in row_x.iter().zip(x) {
            acc += w * v;
        }
        let row_h = &whd[r * in_h..(r + 1) * in_h];
        for (w, v) in row_h.iter().zip(h_prev) {
            acc += w * v;
        }
        z[r] += acc;
    }
    z
}

/// Backward through one LSTM step given dL/dh and dL/dc of this step.
/// Returns (dx, dh_prev, dc_prev) and accumulates parameter gradients.
#[allow(clippy::too_many_arguments)]
pub fn lstm_backward(
    wx: &Tensor,
    wh: &Tensor,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    cache: &LstmCache,
    dh: &[f64],
    dc_in: &[f64],
    dwx: &mut [f64],
    dwh: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = wh.shape()[1];
    let in_x = wx.shape()[1];

    // Through h = o * tanh(c).
    let mut dz = vec![0.0; 4 * hidden];
    let mut dc = dc_in.to_vec();
    for j in 0..hidden {
        let tc = cache.cell[j].tanh();
        let o = cache.gate_o[j];
        dc[j] += dh[j] * o * (1.0 - tc * tc);
        dz[3 * hidden + j] = dh[j] * tc * o * (1.0 - o);
    }
    // Through c = f * c_prev + i * g.
    let mut dc_prev = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g) = (cache.gate_i[j], cache.gate_f[j], cache.gate_g[j]);
        dz[j] = dc[j] * g * i * (1.0 - i);
        dz[hidden + j] = dc[j] * c_prev[j] * f * (1.0 - f);
        dz[2 * hidden + j] = dc[j] * i * (1.0 - g * g);
        dc_prev[j] = dc[j] * f;
    }
    // Through z = wx x + wh h_prev + b.
    let wxd = wx.data();
    let whd = wh.data();
    let mut dx = vec![0.0; in_x];
    let mut dh_prev = vec![0.0; hidden];
    for r in 0..4 * hidden {
        let g = dz[r];
        if g == 0.0 {
            continue;
        }
        db[r] += g;
        let row_x = r * in_x;
        for i in 0..in_x {
            dwx[row_x + i] += g * x[i];
            dx[i] += g * wxd[row_x + i];
        }
        let row_h = r * hidden;
        for j in 0..hidden {
            dwh[row_h + j] += g * h_prev[j];
            dh_prev[j] += g * whd[row_h + j];
        }
    }
    (dx, dh_prev, dc_prev)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn dense_gradients_match_hand_formulas() {
        // Single affine layer: dW = dy x^T, db = dy, dx = W^T dy.
        let w = Tensor::from_vec(vec![2, 3], vec![1.0, -2.0, 0.5, 0.0, 3.0, -1.0]);
        let b = Tensor::from_vec(vec![2], vec![0.1, -0.2]);
        let x = [0.3, -0.7, 2.0];
        let y = dense_forward(&w, &b, &x);
        assert!((y[0] - (0.3 + 1.4 + 1.0 + 0.1)).abs() < 1e-15);
        let dy = [1.0, -1.0];
        let mut dw = vec![0.0; 6];
        let mut db = vec![0.0; 2];
        let dx = dense_backward(&w, &x, &dy, &mut dw, &mut db);
        assert_eq!(db, vec![1.0, -1.0]);
        assert_eq!(dw, vec![0.3, -0.7, 2.0, -0.3, 0.7, -2.0]);
        assert_eq!(dx, vec![1.0, -5.0, 1.5]);
    }

    #[test]
    fn dense_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (out_dim, in_dim) = (4, 6);
            let mut w = Tensor::from_vec(vec![out_dim, in_dim], randn(&mut rng, out_dim * in_dim));
            let b = Tensor::from_vec(vec![out_dim], randn(&mut rng, out_dim));
            let x = randn(&mut rng, in_dim);
            let cot = randn(&mut rng, out_dim);
            let loss = |w: &Tensor, x: &[f64]| -> f64 {
                dense_forward(w, &b, x).iter().zip(&cot).map(|(y, c)| y * c).sum()
            };
            let mut dw = vec![0.0; out_dim * in_dim];
            let mut db_acc = vec![0.0; out_dim];
            let dx = dense_backward(&w, &x, &cot, &mut dw, &mut db_acc);
            let h = 1e-5;
            for i in 0..dw.len() {
                let orig = w.data()[i];
                w.data_mut()[i] = orig + h;
                let up = loss(&w, &x);
                w.data_mut()[i] = orig - h;
                let down = loss(&w, &x);
                w.data_mut()[i] = orig;
                assert!(rel_err(dw[i], (up - down) / (2.0 * h)) < 1e-6);
            }
            let mut xp = x.clone();
            for i in 0..x.len() {
                xp[i] = x[i] + h;
                let up = loss(&w, &xp);
                xp[i] = x[i] - h;
                let down = loss(&w, &xp);
                xp[i] = x[i];
                assert!(rel_err(dx[i], (up - down) / (2.0 * h)) < 1e-6);
            }
        }
    }

    #[test]
    fn conv2d_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..20 {
            let stride = if case % 2 == 0 { 1 } else { 2 };
            let (ci, co, k, h, wd) = (2, 3, 3, 6, 7);
            let w = Tensor::from_vec(vec![co, ci, k, k], randn(&mut rng, co * ci * k * k));
            let b = Tensor::from_vec(vec![co], randn(&mut rng, co));
            let x = Tensor::from_vec(vec![ci, h, wd], randn(&mut rng, ci * h * wd));
            let y = conv2d_forward(&w, &b, &x, stride);
            let cot = randn(&mut rng, y.len());
            let dy = Tensor::from_vec(y.shape().to_vec(), cot.clone());
            let loss = |w: &Tensor, x: &Tensor| -> f64 {
                conv2d_forward(w, &b, x, stride)
                    .data()
                    .iter()
                    .zip(&cot)
                    .map(|(v, c)| v * c)
                    .sum()
            };
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; co];
            let dx = conv2d_backward(&w, &x, &dy, stride, &mut dw, &mut db);
            let hstep = 1e-5;
            // Spot-check a subset of weight and input coordinates.
            for i in (0..w.len()).step_by(7) {
                let orig = w.data()[i];
                let mut wp = w.clone();
                wp.data_mut()[i] = orig + hstep;
                let up = loss(&wp, &x);
                wp.data_mut()[i] = orig - hstep;
                let down = loss(&wp, &x);
                assert!(rel_err(dw[i], (up - down) / (2.0 * hstep)) < 1e-6);
            }
            for i in (0..x.len()).step_by(11) {
                let orig = x.data()[i];
                let mut xp = x.clone();
                xp.data_mut()[i] = orig + hstep;
                let up = loss(&w, &xp);
                xp.data_mut()[i] = orig - hstep;
                let down = loss(&w, &xp);
                assert!(rel_err(dx.data()[i], (up - down) / (2.0 * hstep)) < 1e-6);
            }
            let mut bp_check = 0;
            for o in 0..co {
                let mut bp = b.clone();
                let orig = bp.data()[o];
                bp.data_mut()[o] = orig + hstep;
                let up: f64 = conv2d_forward(&w, &bp, &x, stride).data().iter().zip(&cot).map(|(v, c)| v * c).sum();
                bp.data_mut()[o] = orig - hstep;
                let down: f64 = conv2d_forward(&w, &bp, &x, stride).data().iter().zip(&cot).map(|(v, c)| v * c).sum();
                assert!(rel_err(db[o], (up - down) / (2.0 * hstep)) < 1e-6);
                bp_check += 1;
            }
            assert_eq!(bp_check, co);
        }
    }

    #[test]
    fn lstm_gradcheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (input_dim, hidden) = (5, 4);
        for _ in 0..20 {
            let wx = Tensor::from_vec(vec![4 * hidden, input_dim], randn(&mut rng, 4 * hidden * input_dim));
            let wh = Tensor::from_vec(vec![4 * hidden, hidden], randn(&mut rng, 4 * hidden * hidden));
            let b = Tensor::from_vec(vec![4 * hidden], randn(&mut rng, 4 * hidden));
            let x = randn(&mut rng, input_dim);
            let h_prev = randn(&mut rng, hidden);
            let c_prev = randn(&mut rng, hidden);
            let dh = randn(&mut rng, hidden);
            let dc = randn(&mut rng, hidden);

            let loss = |wx: &Tensor, wh: &Tensor, b: &Tensor, x: &[f64], hp: &[f64], cp: &[f64]| -> f64 {
                let (h, c, _) = lstm_forward(wx, wh, b, x, hp, cp);
                h.iter().zip(&dh).map(|(a, b)| a * b).sum::<f64>() + c.iter().zip(&dc).map(|(a, b)| a * b).sum::<f64>()
            };

            let (_, _, cache) = lstm_forward(&wx, &wh, &b, &x, &h_prev, &c_prev);
            let mut dwx = vec![0.0; wx.len()];
            let mut dwh = vec![0.0; wh.len()];
            let mut db = vec![0.0; b.len()];
            let (dx, dh_prev, dc_prev) =
                lstm_backward(&wx, &wh, &x, &h_prev, &c_prev, &cache, &dh, &dc, &mut dwx, &mut dwh, &mut db);

            let h = 1e-5;
            for i in (0..wx.len()).step_by(5) {
                let mut p = wx.clone();
                p.data_mut()[i] = wx.data()[i] + h;
                let up = loss(&p, &wh, &b, &x, &h_prev, &c_prev);
                p.data_mut()[i] = wx.data()[i] - h;
                let down = loss(&p, &wh, &b, &x, &h_prev, &c_prev);
                assert!(rel_err(dwx[i], (up - down) / (2.0 * h)) < 1e-6);
            }
            for i in (0..wh.len()).step_by(3) {
                let mut p = wh.clone();
                p.data_mut()[i] = wh.data()[i] + h;
                let up = loss(&wx, &p, &b, &x, &h_prev, &c_prev);
                p.data_mut()[i] = wh.data()[i] - h;
                let down = loss(&wx, &p, &b, &x, &h_prev, &c_prev);
                assert!(rel_err(dwh[i], (up - down) / (2.0 * h)) < 1e-6);
            }
            for i in 0..b.len() {
                let mut p = b.clone();
                p.data_mut()[i] = b.data()[i] + h;
                let up = loss(&wx, &wh, &p, &x, &h_prev, &c_prev);
                p.data_mut()[i] = b.data()[i] - h;
                let down = loss(&wx, &wh, &p, &x, &h_prev, &c_prev);
                assert!(rel_err(db[i], (up - down) / (2.0 * h)) < 1e-6);
            }
            for i in 0..x.len() {
                let mut p = x.clone();
                p[i] = x[i] + h;
                let up = loss(&wx, &wh, &b, &p, &h_prev, &c_prev);
                p[i] = x[i] - h;
                let down = loss(&wx, &wh, &b, &p, &h_prev, &c_prev);
                assert!(rel_err(dx[i], (up - down) / (2.0 * h)) < 1e-6);
            }
            for i in 0..hidden {
                let mut p = h_prev.clone();
                p[i] = h_prev[i] + h;
                let up = loss(&wx, &wh, &b, &x, &p, &c_prev);
                p[i] = h_prev[i] - h;
                let down = loss(&wx, &wh, &b, &x, &p, &c_prev);
                assert!(rel_err(dh_prev[i], (up - down) / (2.0 * h)) < 1e-6);

                let mut q = c_prev.clone();
                q[i] = c_prev[i] + h;
                let up = loss(&wx, &wh, &b, &x, &h_prev, &q);
                q[i] = c_prev[i] - h;
                let down = loss(&wx, &wh, &b, &x, &h_prev, &q);
                assert!(rel_err(dc_prev[i], (up - down) / (2.0 * h)) < 1e-6);
            }
        }
    }

    #[test]
    fn relu_masks_by_preactivation() {
        let pre = [-1.0, 0.0, 2.0];
        assert_eq!(relu(&pre), vec![0.0, 0.0, 2.0]);
        assert_eq!(relu_backward(&pre, &[5.0, 5.0, 5.0]), vec![0.0, 0.0, 5.0]);
    }
}
