//! Floating point element type used by the data matrix and the shared vectors.
//!
//! Training runs in single precision by default; `f64` is used for oracle
//! runs and the reference solver. Shared mutable vectors store the bit
//! pattern of each element in an atomic integer so that concurrent readers and
//! writers never need `unsafe`.

use std::fmt::{Debug, Display};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use num_traits::Float;

pub trait Scalar:
    Float + Default + Debug + Display + Send + Sync + std::iter::Sum + 'static
{
    /// Tag written into the binary matrix header.
    const DTYPE: u8;
    /// Size of one element in bytes.
    const BYTES: usize;
    const NAME: &'static str;

    type Atomic: Send + Sync + Debug;

    fn new_atomic(v: Self) -> Self::Atomic;
    fn load(a: &Self::Atomic) -> Self;
    fn store(a: &Self::Atomic, v: Self);

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: u8 = 0;
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    type Atomic = AtomicU32;

    #[inline]
    fn new_atomic(v: Self) -> AtomicU32 {
        AtomicU32::new(v.to_bits())
    }
    #[inline]
    fn load(a: &AtomicU32) -> Self {
        f32::from_bits(a.load(Ordering::Relaxed))
    }
    #[inline]
    fn store(a: &AtomicU32, v: Self) {
        a.store(v.to_bits(), Ordering::Relaxed)
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: u8 = 1;
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    type Atomic = AtomicU64;

    #[inline]
    fn new_atomic(v: Self) -> AtomicU64 {
        AtomicU64::new(v.to_bits())
    }
    #[inline]
    fn load(a: &AtomicU64) -> Self {
        f64::from_bits(a.load(Ordering::Relaxed))
    }
    #[inline]
    fn store(a: &AtomicU64, v: Self) {
        a.store(v.to_bits(), Ordering::Relaxed)
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
    }
}

/// A fixed-length vector of scalars that may be read and written from many
/// threads at once. Individual element loads and stores are atomic; anything
/// larger (read-modify-write, whole-vector snapshots) is only as consistent as
/// the caller's synchronization makes it.
#[derive(Debug)]
pub struct AtomicVec<F: Scalar> {
    data: Vec<F::Atomic>,
}

impl<F: Scalar> AtomicVec<F> {
    pub fn zeros(len: usize) -> Self {
        Self::from_slice(&vec![F::zero(); len])
    }

    pub fn from_slice(values: &[F]) -> Self {
        Self {
            data: values.iter().map(|&v| F::new_atomic(v)).collect(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> F {
        F::load(&self.data[i])
    }

    #[inline]
    pub fn set(&self, i: usize, v: F) {
        F::store(&self.data[i], v)
    }

    pub fn to_vec(&self) -> Vec<F> {
        self.data.iter().map(F::load).collect()
    }

    pub fn copy_from(&self, values: &[F]) {
        assert_eq!(values.len(), self.data.len());
        for (a, &v) in self.data.iter().zip(values) {
            F::store(a, v);
        }
    }

    #[inline]
    pub(crate) fn raw(&self) -> &[F::Atomic] {
        &self.data
    }
}

impl<F: Scalar> Clone for AtomicVec<F> {
    fn clone(&self) -> Self {
        Self::from_slice(&self.to_vec())
    }
}
