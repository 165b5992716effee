//! CSI-conditioned channel attention.
//!
//! The feature map is average-pooled per channel, the pooled vector is
//! concatenated with the CSI vector, and two dense layers (ReLU, then
//! sigmoid) produce one gate in `(0, 1)` per feature channel. The gates
//! rescale the incoming feature map channel by channel.

use serde::{Deserialize, Serialize};

use super::layers::Dense;
use super::params::ParamStore;
use super::tensor::{sigmoid, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Attention {
    pub fc1: Dense,
    pub fc2: Dense,
    pub channels: usize,
    pub csi_len: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor,
    extended: Vec<f64>,
    hidden: Vec<f64>,
    gates: Vec<f64>,
}

impl AttentionCache {
    pub fn gates(&self) -> &[f64] {
        &self.gates
    }
}

/// Hidden width of the gate predictor for a given feature width.
pub fn hidden_width(channels: usize) -> usize {
    (channels / 4).max(4)
}

impl Attention {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, csi_len: usize, rng: &mut Rng) -> Self {
        let hidden = hidden_width(channels);
        Attention {
            fc1: Dense::new(store, &format!("{name}.fc1"), channels + csi_len, hidden, rng),
            fc2: Dense::new(store, &format!("{name}.fc2"), hidden, channels, rng),
            channels,
            csi_len,
        }
    }

    pub fn param_count(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count()
    }

    fn check(&self, x: &Tensor, csi: &[f64]) -> Result<()> {
        if csi.len() != self.csi_len {
            return Err(Error::Config(format!(
                "attention module expects a CSI vector of length {}, got {}",
                self.csi_len,
                csi.len()
            )));
        }
        if x.c != self.channels {
            return Err(Error::Input(format!(
                "attention module expects {} feature channels, got {}",
                self.channels, x.c
            )));
        }
        Ok(())
    }

    pub fn forward(&self, p: &[f64], x: &Tensor, csi: &[f64]) -> Result<(Tensor, AttentionCache)> {
        self.check(x, csi)?;
        let plane = x.plane() as f64;
        let mut extended: Vec<f64> = (0..x.c).map(|c| x.channel(c).iter().sum::<f64>() / plane).collect();
        extended.extend_from_slice(csi);
        let mut hidden = self.fc1.forward(p, &extended);
        hidden.iter_mut().for_each(|v| *v = v.max(0.0));
        let gates: Vec<f64> = self.fc2.forward(p, &hidden).into_iter().map(sigmoid).collect();

        let mut y = x.clone();
        for (c, &a) in gates.iter().enumerate() {
            y.channel_mut(c).iter_mut().for_each(|v| *v *= a);
        }
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                extended,
                hidden,
                gates,
            },
        ))
    }

    /// The attention vector alone.
    pub fn gates(&self, p: &[f64], x: &Tensor, csi: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(p, x, csi)?.1.gates)
    }

    pub fn backward(&self, p: &[f64], cache: &AttentionCache, gy: &Tensor, g: &mut [f64]) -> Tensor {
        let x = &cache.x;
        let mut gx = gy.clone();
        let mut d_pre = vec![0.0; self.channels];
        for (c, &a) in cache.gates.iter().enumerate() {
            let da: f64 = gy.channel(c).iter().zip(x.channel(c)).map(|(g, v)| g * v).sum();
            d_pre[c] = da * a * (1.0 - a);
            gx.channel_mut(c).iter_mut().for_each(|v| *v *= a);
        }
        let mut d_hidden = self.fc2.backward(p, &cache.hidden, &d_pre, g);
        for (d, &h) in d_hidden.iter_mut().zip(&cache.hidden) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        let d_ext = self.fc1.backward(p, &cache.extended, &d_hidden, g);
        let plane = x.plane() as f64;
        for c in 0..self.channels {
            let share = d_ext[c] / plane;
            gx.channel_mut(c).iter_mut().for_each(|v| *v += share);
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from;

    fn toy(seed: u64) -> (ParamStore, Attention, Tensor) {
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let att = Attention::new(&mut store, "att", 4, 2, &mut rng);
        let x = Tensor::from_vec(4, 3, 3, (0..36).map(|i| ((i as f64) * 0.77).sin() + 0.2).collect());
        (store, att, x)
    }

    #[test]
    fn zero_fc2_gives_half_gates() {
        let (mut store, att, x) = toy(1);
        for i in att.fc2.weight..att.fc2.weight + att.fc2.n_in * att.fc2.n_out {
            store.values[i] = 0.0;
        }
        for i in att.fc2.bias..att.fc2.bias + att.fc2.n_out {
            store.values[i] = 0.0;
        }
        let (y, cache) = att.forward(&store.values, &x, &[3.0, -1.0]).unwrap();
        assert!(cache.gates().iter().all(|&a| a == 0.5));
        for (a, b) in y.data.iter().zip(&x.data) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn zero_features_stay_zero() {
        let (store, att, _) = toy(2);
        let x = Tensor::zeros(4, 3, 3);
        for csi in [[0.0, 0.0], [20.0, 5.0]] {
            let (y, _) = att.forward(&store.values, &x, &csi).unwrap();
            assert!(y.data.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn csi_length_mismatch_is_config_error() {
        let (store, att, x) = toy(3);
        assert!(matches!(att.forward(&store.values, &x, &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn exactly_two_dense_layers() {
        let (store, att, _) = toy(4);
        let names: Vec<_> = store.slots.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["att.fc1.weight", "att.fc1.bias", "att.fc2.weight", "att.fc2.bias"]);
        assert_eq!(att.param_count(), store.len());
    }

    #[test]
    fn fc1_gradient_matches_finite_differences() {
        let (store, att, x) = toy(5);
        let csi = [4.0, 9.0];
        let weights: Vec<f64> = (0..36).map(|i| ((i as f64) * 1.3).cos()).collect();
        let loss = |p: &[f64]| -> f64 {
            let (y, _) = att.forward(p, &x, &csi).unwrap();
            y.data.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>().powi(2)
        };
        let (y, cache) = att.forward(&store.values, &x, &csi).unwrap();
        let s: f64 = y.data.iter().zip(&weights).map(|(a, b)| a * b).sum();
        let gy = Tensor::from_vec(4, 3, 3, weights.iter().map(|w| 2.0 * s * w).collect());
        let mut g = store.zeros_like();
        att.backward(&store.values, &cache, &gy, &mut g);
        let step = 1e-4;
        for i in att.fc1.weight..att.fc1.weight + att.fc1.n_in * att.fc1.n_out {
            let mut p = store.values.clone();
            p[i] += step;
            let up = loss(&p);
            p[i] -= 2.0 * step;
            let fd = (up - loss(&p)) / (2.0 * step);
            let tol = 1e-4 * fd.abs().max(g[i].abs()).max(1e-6);
            assert!((fd - g[i]).abs() <= tol, "param {i}: fd {fd} vs analytic {}", g[i]);
        }
    }
}
