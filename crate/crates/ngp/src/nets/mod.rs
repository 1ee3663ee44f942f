//! Toy-scale network family: ResNet encoder-decoder generators, a ResNet
//! encoder for the albedo code, and patch discriminators with configurable
//! receptive-field classes. Channel widths are scaled for desk-size inputs;
//! the layer family follows the usual image-translation stacks.

mod blocks;
mod discriminators;
mod generators;

pub use discriminators::{receptive_field, Discriminator, DiscriminatorCfg, RfsClass};
pub use generators::{Encoder, EncoderCfg, Generator, GeneratorCfg, Head};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::normal_f32;
use crate::tensor::{Scalar, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    MissingParam { name: String },
    BadDescriptor { detail: String },
    Tensor(TensorError),
}

impl std::fmt::Display for NetError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::MissingParam { name } => write!(f, "missing parameter `{name}`"),
            Self::BadDescriptor { detail } => write!(f, "bad architecture descriptor: {detail}"),
            Self::Tensor(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for NetError {}

impl From<TensorError> for NetError {
    fn from(e: TensorError) -> Self {
        Self::Tensor(e)
    }
}

pub type Result<T> = std::result::Result<T, NetError>;

/// Gaussian-distributed appearance code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub values: Vec<f32>,
}

impl LatentCode {
    pub fn sample(dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            values: (0..dim).map(|_| normal_f32(rng)).collect(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![0.0; dim],
        }
    }

    /// `[dim, 1, 1]` tensor form for spatial broadcast.
    pub fn tensor(&self) -> Tensor<f32> {
        Tensor::new(vec![self.values.len(), 1, 1], self.values.clone()).expect("latent shape")
    }
}

/// Named parameter tensors of one network. Ordered map so iteration,
/// serialization and optimizer updates are deterministic.
#[derive(Debug, Clone, Default)]
pub struct Params {
    tensors: BTreeMap<String, Tensor<f32>>,
}

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    /// Conv weight with Gaussian(0, 0.02) init.
    fn init_conv(&mut self, name: &str, shape: &[usize], rng: &mut impl Rng) {
        let t = Tensor::from_fn(shape, |_| 0.02 * normal_f32(rng));
        self.tensors.insert(name.to_string(), t);
    }

    fn init_zeros(&mut self, name: &str, shape: &[usize]) {
        self.tensors.insert(name.to_string(), Tensor::zeros(shape));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<f32>> {
        self.tensors.get(name).ok_or_else(|| NetError::MissingParam {
            name: name.to_string(),
        })
    }

    pub fn set(&mut self, name: &str, t: Tensor<f32>) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<f32>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.all_finite())
    }

    /// Register every parameter on a tape. Trainable bindings become
    /// gradient leaves; frozen ones are constants (no gradient work).
    pub fn bind<T: Scalar>(&self, tape: &mut Tape<T>, trainable: bool) -> Binding {
        let mut vars = BTreeMap::new();
        for (name, t) in &self.tensors {
            let cast = t.cast::<T>();
            let var = if trainable {
                tape.leaf(cast)
            } else {
                tape.constant(cast)
            };
            vars.insert(name.clone(), var);
        }
        Binding { vars }
    }
}

/// Tape handles of one network's parameters for a single forward/backward.
pub struct Binding {
    vars: BTreeMap<String, Var>,
}

impl Binding {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NetError::MissingParam {
                name: name.to_string(),
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

/// Serializable descriptor of a whole model bundle (all networks in one
/// training setup); checkpoints pair this with the tensor files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ArchDescriptor {
    pub generators: BTreeMap<String, GeneratorCfg>,
    pub encoders: BTreeMap<String, EncoderCfg>,
    pub discriminators: BTreeMap<String, DiscriminatorCfg>,
}
