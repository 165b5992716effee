use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;

/// Location of one named parameter array inside a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Zeros,
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
}

/// Flat storage for every learnable parameter of a model.
///
/// Layers keep offsets into `values`; gradients live in a buffer of the same
/// length, which keeps the optimizer and checkpointing trivially generic.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    pub values: Vec<f64>,
    pub slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, name: impl Into<String>, shape: &[usize], init: Init, rng: &mut Rng) -> usize {
        let offset = self.values.len();
        let n: usize = shape.iter().product();
        match init {
            Init::Zeros => self.values.extend(std::iter::repeat_n(0.0, n)),
            Init::Normal(std) => {
                self.values
                    .extend((0..n).map(|_| std * rng.sample::<f64, _>(StandardNormal)));
            }
        }
        self.slots.push(Slot {
            name: name.into(),
            offset,
            shape: shape.to_vec(),
        });
        offset
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn zeros_like(&self) -> Vec<f64> {
        vec![0.0; self.values.len()]
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Total parameter count of slots whose name contains `pattern`.
    pub fn count_matching(&self, pattern: &str) -> usize {
        self.slots
            .iter()
            .filter(|s| s.name.contains(pattern))
            .map(Slot::len)
            .sum()
    }
}
