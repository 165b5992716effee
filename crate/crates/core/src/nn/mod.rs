//! Minimal single-sample neural-network toolkit with hand-written backward
//! passes, in `f64` so gradients can be checked against finite differences.

pub mod adam;
pub mod attention;
pub mod layers;
pub mod params;
pub mod resblock;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use attention::{Attention, AttentionCache};
pub use layers::{Conv2d, Dense};
pub use params::{Init, ParamStore, Slot};
pub use resblock::{ResBlock, ResBlockCache};
pub use tensor::Tensor;

use crate::error::Result;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Layer {
    Conv(Conv2d),
    Res(ResBlock),
    Attn(Attention),
}

#[derive(Debug, Clone)]
pub enum LayerCache {
    Conv(Tensor),
    Res(ResBlockCache),
    Attn(AttentionCache),
}

/// A feed-forward stack whose attention layers all see the same CSI vector.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn push(&mut self, layer: Layer) {
        self.layers.push(layer);
    }

    pub fn forward(&self, p: &[f64], x: &Tensor, csi: &[f64]) -> Result<(Tensor, Vec<LayerCache>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(c) => {
                    let y = c.forward(p, &cur);
                    caches.push(LayerCache::Conv(cur));
                    y
                }
                Layer::Res(r) => {
                    let (y, cache) = r.forward(p, &cur);
                    caches.push(LayerCache::Res(cache));
                    y
                }
                Layer::Attn(a) => {
                    let (y, cache) = a.forward(p, &cur, csi)?;
                    caches.push(LayerCache::Attn(cache));
                    y
                }
            };
        }
        Ok((cur, caches))
    }

    pub fn backward(&self, p: &[f64], caches: &[LayerCache], gy: &Tensor, g: &mut [f64]) -> Tensor {
        let mut grad = gy.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            grad = match (layer, cache) {
                (Layer::Conv(c), LayerCache::Conv(x)) => c.backward(p, x, &grad, g),
                (Layer::Res(r), LayerCache::Res(cache)) => r.backward(p, cache, &grad, g),
                (Layer::Attn(a), LayerCache::Attn(cache)) => a.backward(p, cache, &grad, g),
                _ => unreachable!("layer/cache mismatch"),
            };
        }
        grad
    }

    pub fn attention_modules(&self) -> impl Iterator<Item = &Attention> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Attn(a) => Some(a),
            _ => None,
        })
    }
}
