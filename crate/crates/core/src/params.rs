//! Named parameter tensors.
//!
//! Every parameterized component declares its tensors into a [`ParamLayout`]
//! and reads them back from a [`ParamReader`] using the same names. The layout
//! can be materialized into a [`WeightStore`] with seeded initial values.

use std::collections::HashMap;

use crate::error::{PixieError, Result};
use crate::rng::SplitMix64;
use crate::tensor::{Conv2dParams, PadMode, Tensor4};

/// A named tensor of arbitrary rank.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Ordered collection of uniquely named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: Vec<NamedTensor>,
    index: HashMap<String, usize>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: NamedTensor) -> Result<()> {
        if self.index.contains_key(&tensor.name) {
            return Err(PixieError::Weights(format!("duplicate tensor name '{}'", tensor.name)));
        }
        if tensor.numel() != tensor.data.len() {
            return Err(PixieError::Weights(format!(
                "tensor '{}' declares dims {:?} but holds {} values",
                tensor.name,
                tensor.dims,
                tensor.data.len()
            )));
        }
        self.index.insert(tensor.name.clone(), self.tensors.len());
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut NamedTensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamedTensor> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(NamedTensor::numel).sum()
    }

    pub fn into_tensors(self) -> Vec<NamedTensor> {
        self.tensors
    }

    /// Bitwise equality including tensor order.
    pub fn bit_eq(&self, other: &WeightStore) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.name == b.name
                    && a.dims == b.dims
                    && a.data.iter().zip(&b.data).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// How a declared tensor is filled at initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    Uniform { fan_in: usize },
    Zeros,
    Ones,
    /// Depthwise kernel whose only nonzero tap is a 1 at the center.
    CenterTap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub dims: Vec<usize>,
    pub init: Init,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.dims.iter().product()
    }

    fn materialize(&self, seed: u64) -> NamedTensor {
        let n = self.numel();
        let data = match self.init {
            Init::Uniform { fan_in } => {
                let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
                let mut rng = SplitMix64::for_name(seed, &self.name);
                (0..n).map(|_| rng.uniform(bound)).collect()
            }
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::CenterTap => {
                let k = self.dims[2];
                let mut v = vec![0.0; n];
                for c in 0..self.dims[0] {
                    v[c * k * k + (k / 2) * k + k / 2] = 1.0;
                }
                v
            }
        };
        NamedTensor {
            name: self.name.clone(),
            dims: self.dims.clone(),
            data,
        }
    }
}

/// Initialization of a convolution's weight and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvInit {
    Uniform,
    Zero,
    /// Identity depthwise kernel with zero bias.
    CenterTap,
}

/// Ordered declaration of every tensor a network needs.
#[derive(Debug, Clone, Default)]
pub struct ParamLayout {
    specs: Vec<TensorSpec>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn numel(&self) -> usize {
        self.specs.iter().map(TensorSpec::numel).sum()
    }

    pub fn tensor(&mut self, name: impl Into<String>, dims: Vec<usize>, init: Init) {
        self.specs.push(TensorSpec {
            name: name.into(),
            dims,
            init,
        });
    }

    /// Declares `{name}.weight` of dims `(c_out, c_in_per_group, k, k)` and `{name}.bias`.
    pub fn conv(&mut self, name: &str, c_out: usize, c_in_per_group: usize, k: usize, init: ConvInit) {
        let fan_in = c_in_per_group * k * k;
        let (w, b) = match init {
            ConvInit::Uniform => (Init::Uniform { fan_in }, Init::Uniform { fan_in }),
            ConvInit::Zero => (Init::Zeros, Init::Zeros),
            ConvInit::CenterTap => (Init::CenterTap, Init::Zeros),
        };
        self.tensor(format!("{name}.weight"), vec![c_out, c_in_per_group, k, k], w);
        self.tensor(format!("{name}.bias"), vec![c_out], b);
    }

    pub fn materialize(&self, seed: u64) -> WeightStore {
        let mut store = WeightStore::new();
        for spec in &self.specs {
            store
                .push(spec.materialize(seed))
                .expect("layout names are unique");
        }
        store
    }
}

/// Takes tensors out of a store by name, checking their dims.
#[derive(Debug)]
pub struct ParamReader {
    tensors: HashMap<String, NamedTensor>,
}

impl ParamReader {
    pub fn new(store: WeightStore) -> Self {
        Self {
            tensors: store
                .into_tensors()
                .into_iter()
                .map(|t| (t.name.clone(), t))
                .collect(),
        }
    }

    pub fn take(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>> {
        let t = self
            .tensors
            .remove(name)
            .ok_or_else(|| PixieError::Weights(format!("missing tensor '{name}' (expected dims {dims:?})")))?;
        if t.dims != dims {
            return Err(PixieError::Weights(format!(
                "tensor '{name}' has dims {:?} but this configuration expects {dims:?}",
                t.dims
            )));
        }
        Ok(t.data)
    }

    pub fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f32>> {
        self.take(name, &[len])
    }

    /// Reads `{name}.weight` and `{name}.bias` into a stride-1, same-padded convolution.
    pub fn conv(
        &mut self,
        name: &str,
        c_out: usize,
        c_in_per_group: usize,
        k: usize,
        groups: usize,
        pad_mode: PadMode,
    ) -> Result<Conv2dParams> {
        let w = self.take(&format!("{name}.weight"), &[c_out, c_in_per_group, k, k])?;
        let b = self.vector(&format!("{name}.bias"), c_out)?;
        let weight = Tensor4::from_vec([c_out, c_in_per_group, k, k], w)?;
        Ok(Conv2dParams::new(weight, Some(b))
            .with_groups(groups)
            .with_pad_mode(pad_mode))
    }

    /// Fails if any tensor was never read.
    pub fn finish(self) -> Result<()> {
        let mut left: Vec<_> = self.tensors.into_keys().collect();
        if left.is_empty() {
            return Ok(());
        }
        left.sort();
        Err(PixieError::Weights(format!(
            "{} tensor(s) not used by this configuration, first is '{}'",
            left.len(),
            left[0]
        )))
    }
}
