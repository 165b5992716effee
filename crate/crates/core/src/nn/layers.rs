use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use super::tensor::Tensor;
use crate::rng::Rng;

/// Square-kernel 2-D convolution with zero padding `k / 2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Conv2d {
    pub weight: usize,
    pub bias: Option<usize>,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Output indices `o` for which `o * stride + tap - pad` lands inside `[0, len)`.
#[inline]
fn valid_range(len_in: usize, len_out: usize, tap: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if pad > tap { (pad - tap).div_ceil(stride) } else { 0 };
    let hi_excl = if len_in + pad > tap {
        ((len_in - 1 + pad - tap) / stride + 1).min(len_out)
    } else {
        0
    };
    (lo, hi_excl.max(lo))
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = (c_in * kernel * kernel) as f64;
        let weight = store.alloc(
            format!("{name}.weight"),
            &[c_out, c_in, kernel, kernel],
            Init::Normal((2.0 / fan_in).sqrt()),
            rng,
        );
        let bias = bias.then(|| store.alloc(format!("{name}.bias"), &[c_out], Init::Zeros, rng));
        Conv2d {
            weight,
            bias,
            c_in,
            c_out,
            kernel,
            stride,
        }
    }

    fn pad(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_size(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        (
            (h + 2 * p - self.kernel) / self.stride + 1,
            (w + 2 * p - self.kernel) / self.stride + 1,
        )
    }

    pub fn param_count(&self) -> usize {
        self.c_out * self.c_in * self.kernel * self.kernel + if self.bias.is_some() { self.c_out } else { 0 }
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> Tensor {
        assert_eq!(x.c, self.c_in, "conv input channel mismatch");
        let (oh, ow) = self.output_size(x.h, x.w);
        let (k, s, pad) = (self.kernel, self.stride, self.pad());
        let mut out = Tensor::zeros(self.c_out, oh, ow);
        let wts = &p[self.weight..self.weight + self.c_out * self.c_in * k * k];
        for oc in 0..self.c_out {
            let dst = out.channel_mut(oc);
            if let Some(b) = self.bias {
                dst.fill(p[b + oc]);
            }
            for ic in 0..self.c_in {
                let src = x.channel(ic);
                for ky in 0..k {
                    let (y0, y1) = valid_range(x.h, oh, ky, pad, s);
                    for kx in 0..k {
                        let wv = wts[((oc * self.c_in + ic) * k + ky) * k + kx];
                        let (x0, x1) = valid_range(x.w, ow, kx, pad, s);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - pad;
                            let srow = &src[iy * x.w..(iy + 1) * x.w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            for ox in x0..x1 {
                                drow[ox] += wv * srow[ox * s + kx - pad];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `g` and returns the input gradient.
    pub fn backward(&self, p: &[f64], x: &Tensor, gy: &Tensor, g: &mut [f64]) -> Tensor {
        let (k, s, pad) = (self.kernel, self.stride, self.pad());
        let (oh, ow) = (gy.h, gy.w);
        let mut gx = Tensor::zeros(x.c, x.h, x.w);
        let n_w = self.c_out * self.c_in * k * k;
        let wts = &p[self.weight..self.weight + n_w];
        for oc in 0..self.c_out {
            let gsrc = gy.channel(oc);
            if let Some(b) = self.bias {
                g[b + oc] += gsrc.iter().sum::<f64>();
            }
            for ic in 0..self.c_in {
                let src = x.channel(ic);
                let gdst = gx.channel_mut(ic);
                for ky in 0..k {
                    let (y0, y1) = valid_range(x.h, oh, ky, pad, s);
                    for kx in 0..k {
                        let widx = ((oc * self.c_in + ic) * k + ky) * k + kx;
                        let wv = wts[widx];
                        let (x0, x1) = valid_range(x.w, ow, kx, pad, s);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - pad;
                            let grow = &gsrc[oy * ow..(oy + 1) * ow];
                            let base = iy * x.w;
                            for ox in x0..x1 {
                                let ix = base + ox * s + kx - pad;
                                acc += grow[ox] * src[ix];
                                gdst[ix] += wv * grow[ox];
                            }
                        }
                        g[self.weight + widx] += acc;
                    }
                }
            }
        }
        gx
    }
}

/// Fully connected layer `y = W x + b`, weight stored `[out, in]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Dense {
    pub weight: usize,
    pub bias: usize,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let weight = store.alloc(
            format!("{name}.weight"),
            &[n_out, n_in],
            Init::Normal((1.0 / n_in as f64).sqrt()),
            rng,
        );
        let bias = store.alloc(format!("{name}.bias"), &[n_out], Init::Zeros, rng);
        Dense {
            weight,
            bias,
            n_in,
            n_out,
        }
    }

    pub fn param_count(&self) -> usize {
        self.n_out * (self.n_in + 1)
    }

    pub fn forward(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_in, "dense input length mismatch");
        (0..self.n_out)
            .map(|o| {
                let row = &p[self.weight + o * self.n_in..self.weight + (o + 1) * self.n_in];
                p[self.bias + o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    pub fn backward(&self, p: &[f64], x: &[f64], gy: &[f64], g: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.n_in];
        for (o, &go) in gy.iter().enumerate() {
            g[self.bias + o] += go;
            let base = self.weight + o * self.n_in;
            for i in 0..self.n_in {
                g[base + i] += go * x[i];
                gx[i] += go * p[base + i];
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    /// Direct definition of the convolution, no index-range tricks.
    fn conv_reference(conv: &Conv2d, p: &[f64], x: &Tensor) -> Tensor {
        let (oh, ow) = conv.output_size(x.h, x.w);
        let k = conv.kernel;
        let pad = k as isize / 2;
        let mut out = Tensor::zeros(conv.c_out, oh, ow);
        for oc in 0..conv.c_out {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = conv.bias.map_or(0.0, |b| p[b + oc]);
                    for ic in 0..conv.c_in {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * conv.stride) as isize + ky as isize - pad;
                                let ix = (ox * conv.stride) as isize + kx as isize - pad;
                                if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                    continue;
                                }
                                acc += p[conv.weight + ((oc * conv.c_in + ic) * k + ky) * k + kx]
                                    * x.data[(ic * x.h + iy as usize) * x.w + ix as usize];
                            }
                        }
                    }
                    out.data[(oc * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_matches_reference_definition() {
        let mut rng = rng_from(1);
        for (k, s, h, w) in [(3, 1, 5, 6), (3, 2, 8, 8), (3, 2, 7, 5), (1, 1, 4, 4), (1, 2, 6, 6)] {
            let mut store = ParamStore::new();
            let conv = Conv2d::new(&mut store, "c", 2, 3, k, s, true, &mut rng);
            for (i, v) in store.values.iter_mut().enumerate() {
                *v += 0.01 * i as f64;
            }
            let x = Tensor::from_vec(2, h, w, (0..2 * h * w).map(|i| ((i * 37) % 11) as f64 - 5.0).collect());
            let a = conv.forward(&store.values, &x);
            let b = conv_reference(&conv, &store.values, &x);
            assert_eq!(a.shape(), b.shape());
            for (u, v) in a.data.iter().zip(&b.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = rng_from(2);
        let mut store = ParamStore::new();
        let conv = Conv2d::new(&mut store, "c", 2, 3, 3, 2, true, &mut rng);
        let x = Tensor::from_vec(2, 5, 5, (0..50).map(|i| (i as f64 * 0.37).sin()).collect());
        let gy_seed: Vec<f64> = (0..conv.c_out * 9).map(|i| (i as f64 * 0.91).cos()).collect();
        let loss = |p: &[f64], x: &Tensor| -> f64 {
            conv.forward(p, x).data.iter().zip(&gy_seed).map(|(a, b)| a * b).sum()
        };
        let y = conv.forward(&store.values, &x);
        let gy = Tensor::from_vec(y.c, y.h, y.w, gy_seed.clone());
        let mut g = store.zeros_like();
        let gx = conv.backward(&store.values, &x, &gy, &mut g);
        let eps = 1e-6;
        for i in 0..store.len() {
            let mut pp = store.values.clone();
            pp[i] += eps;
            let up = loss(&pp, &x);
            pp[i] -= 2.0 * eps;
            let dn = loss(&pp, &x);
            assert!(((up - dn) / (2.0 * eps) - g[i]).abs() < 1e-6);
        }
        for i in 0..x.data.len() {
            let mut xp = x.clone();
            xp.data[i] += eps;
            let up = loss(&store.values, &xp);
            xp.data[i] -= 2.0 * eps;
            let dn = loss(&store.values, &xp);
            assert!(((up - dn) / (2.0 * eps) - gx.data[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn dense_backward_matches_finite_differences() {
        let mut rng = rng_from(3);
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", 4, 3, &mut rng);
        let x = vec![0.3, -1.2, 0.5, 2.0];
        let gy = vec![1.0, -0.5, 0.25];
        let loss = |p: &[f64], x: &[f64]| -> f64 { d.forward(p, x).iter().zip(&gy).map(|(a, b)| a * b).sum() };
        let mut g = store.zeros_like();
        let gx = d.backward(&store.values, &x, &gy, &mut g);
        let eps = 1e-6;
        for i in 0..store.len() {
            let mut pp = store.values.clone();
            pp[i] += eps;
            let up = loss(&pp, &x);
            pp[i] -= 2.0 * eps;
            assert!(((up - loss(&pp, &x)) / (2.0 * eps) - g[i]).abs() < 1e-7);
        }
        for i in 0..4 {
            let mut xp = x.clone();
            xp[i] += eps;
            let up = loss(&store.values, &xp);
            xp[i] -= 2.0 * eps;
            assert!(((up - loss(&store.values, &xp)) / (2.0 * eps) - gx[i]).abs() < 1e-7);
        }
    }
}
