use serde::{Deserialize, Serialize};

use super::layers::Conv2d;
use super::params::ParamStore;
use super::tensor::{relu, relu_backward, upsample2, upsample2_backward, Tensor};
use crate::rng::Rng;

/// `y = relu(conv2(relu(conv1(x'))) + skip(x'))`, where `x'` is the input,
/// optionally ×2-upsampled first. `skip` is a 1×1 projection when the block
/// changes width or stride, identity otherwise. Convolutions carry no bias,
/// so an all-zero input maps to an all-zero output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResBlock {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub skip: Option<Conv2d>,
    pub upsample: bool,
}

#[derive(Debug, Clone)]
pub struct ResBlockCache {
    xin: Tensor,
    h1: Tensor,
    y: Tensor,
}

impl ResBlock {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        upsample: bool,
        rng: &mut Rng,
    ) -> Self {
        let conv1 = Conv2d::new(store, &format!("{name}.conv1"), c_in, c_out, 3, stride, false, rng);
        let conv2 = Conv2d::new(store, &format!("{name}.conv2"), c_out, c_out, 3, 1, false, rng);
        let skip = (c_in != c_out || stride != 1)
            .then(|| Conv2d::new(store, &format!("{name}.skip"), c_in, c_out, 1, stride, false, rng));
        ResBlock {
            conv1,
            conv2,
            skip,
            upsample,
        }
    }

    pub fn param_count(&self) -> usize {
        self.conv1.param_count() + self.conv2.param_count() + self.skip.as_ref().map_or(0, Conv2d::param_count)
    }

    pub fn forward(&self, p: &[f64], x: &Tensor) -> (Tensor, ResBlockCache) {
        let xin = if self.upsample { upsample2(x) } else { x.clone() };
        let mut h1 = self.conv1.forward(p, &xin);
        relu(&mut h1);
        let mut y = self.conv2.forward(p, &h1);
        match &self.skip {
            Some(s) => y.add_assign(&s.forward(p, &xin)),
            None => y.add_assign(&xin),
        }
        relu(&mut y);
        (y.clone(), ResBlockCache { xin, h1, y })
    }

    pub fn backward(&self, p: &[f64], cache: &ResBlockCache, gy: &Tensor, g: &mut [f64]) -> Tensor {
        let mut gsum = gy.clone();
        relu_backward(&cache.y, &mut gsum);
        let mut gh1 = self.conv2.backward(p, &cache.h1, &gsum, g);
        relu_backward(&cache.h1, &mut gh1);
        let mut gxin = self.conv1.backward(p, &cache.xin, &gh1, g);
        match &self.skip {
            Some(s) => gxin.add_assign(&s.backward(p, &cache.xin, &gsum, g)),
            None => gxin.add_assign(&gsum),
        }
        if self.upsample {
            upsample2_backward(&gxin)
        } else {
            gxin
        }
    }
}
