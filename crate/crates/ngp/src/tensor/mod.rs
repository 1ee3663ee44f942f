//! Dense tensors with reverse-mode automatic differentiation.
//!
//! The engine is deliberately small: a flat value type ([`Tensor`]), a
//! single-threaded recording tape ([`Tape`]) and a closed set of primitives
//! ([`Primitive`]) with hand-written vector-Jacobian products. Everything
//! downstream (networks, shading, losses) is composed from these primitives,
//! so one gradient-check suite covers the whole stack.
//!
//! Training runs in `f32`; gradient checks instantiate the same code with
//! `f64` through the [`Scalar`] trait.

mod grad_check;
mod ops;
pub mod ser;
mod tape;

pub use grad_check::{grad_check, grad_check_multi};
pub use ser::{read_tensor_f32, write_tensor_f32, TensorIoError};
pub use tape::{Gradients, Primitive, Tape, Var};

use std::fmt;
use std::sync::Arc;

/// Element type of a tensor: `f32` for training, `f64` for gradient checks.
pub trait Scalar:
    Copy
    + PartialOrd
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    /// Name recorded in serialization sidecars.
    const DTYPE: &'static str;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: Self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    fn max(self, other: Self) -> Self {
        if self > other {
            self
        } else {
            other
        }
    }
    fn min(self, other: Self) -> Self {
        if self < other {
            self
        } else {
            other
        }
    }
}

macro_rules! impl_scalar {
    ($t:ty, $name:literal) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            const DTYPE: &'static str = $name;

            fn from_f64(v: f64) -> Self {
                v as $t
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
            fn exp(self) -> Self {
                self.exp()
            }
            fn ln(self) -> Self {
                self.ln()
            }
            fn tanh(self) -> Self {
                self.tanh()
            }
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            fn powf(self, e: Self) -> Self {
                self.powf(e)
            }
            fn abs(self) -> Self {
                self.abs()
            }
            fn is_finite(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_scalar!(f32, "f32");
impl_scalar!(f64, "f64");

/// Errors raised by tensor construction, primitive application and backward.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    /// Incompatible extents for a primitive; names the primitive and shapes.
    ShapeMismatch {
        primitive: &'static str,
        detail: String,
    },
    /// Data length does not match the product of the extents.
    DataLength { shape: Vec<usize>, len: usize },
    /// `backward` was called on a tensor that is not scalar-shaped.
    NonScalarLoss { shape: Vec<usize> },
    /// A value that must be finite was not.
    NonFinite { context: String },
    /// A primitive name outside the supported set (descriptor parsing).
    UnknownPrimitive { name: String },
    /// A `Var` refers to a node outside this tape.
    InvalidVar { id: usize, tape_len: usize },
}

impl fmt::Display for TensorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ShapeMismatch { primitive, detail } => {
                write!(f, "shape mismatch in `{primitive}`: {detail}")
            }
            Self::DataLength { shape, len } => {
                write!(f, "data length {len} does not match shape {shape:?}")
            }
            Self::NonScalarLoss { shape } => {
                write!(f, "backward requires a scalar loss, got shape {shape:?}")
            }
            Self::NonFinite { context } => write!(f, "non-finite value in {context}"),
            Self::UnknownPrimitive { name } => write!(f, "unknown primitive `{name}`"),
            Self::InvalidVar { id, tape_len } => {
                write!(f, "var {id} not on this tape (len {tape_len})")
            }
        }
    }
}

impl std::error::Error for TensorError {}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Dense multi-dimensional array. Cloning is cheap (shared storage).
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor<{}>(shape={:?}", T::DTYPE, self.shape)?;
        if self.numel() <= 8 {
            write!(f, ", data={:?}", &self.data[..])?;
        }
        write!(f, ")")
    }
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::DataLength {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![T::ZERO; numel]),
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
        }
    }

    /// Scalar tensor of shape `[1]`.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: Arc::new(vec![value]),
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: Arc::new((0..numel).map(&mut f).collect()),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// The single element of a scalar-shaped tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Convert element type, e.g. `f32` maps to `f64` for gradient checks.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|v| U::from_f64(v.to_f64())).collect()),
        }
    }

    pub fn to_f32(&self) -> Tensor<f32> {
        self.cast()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64()).collect()
    }

    /// Max absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.to_f64() - b.to_f64()).abs())
            .fold(0.0, f64::max)
    }

    /// Bit-exact equality of shape and payload.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.to_f64().to_bits() == b.to_f64().to_bits())
    }
}

impl Tensor<f32> {
    /// Standard-normal fill from the given RNG (Box-Muller, deterministic).
    pub fn randn(shape: &[usize], rng: &mut impl rand::Rng) -> Self {
        Tensor::from_fn(shape, |_| crate::rng::normal_f32(rng))
    }
}
