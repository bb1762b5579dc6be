//! Named parameter storage. Convolution weights are kept as a weight-norm
//! pair: a per-output-channel gain `g` and a direction `v`, with the
//! effective weight `w = g · v / ‖v‖`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{ConvSpec, Real, Tensor};

/// Added under the square root of `‖v‖²`.
pub const WEIGHT_NORM_EPS: f64 = 1e-12;

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

fn next_uid() -> u64 {
    NEXT_UID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug)]
pub struct WeightStore<T> {
    uid: u64,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
    index: HashMap<String, usize>,
}

impl<T: Real> Clone for WeightStore<T> {
    fn clone(&self) -> Self {
        Self { uid: next_uid(), names: self.names.clone(), tensors: self.tensors.clone(), index: self.index.clone() }
    }
}

impl<T: Real> Default for WeightStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> PartialEq for WeightStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.names == other.names && self.tensors == other.tensors
    }
}

impl<T: Real> WeightStore<T> {
    pub fn new() -> Self {
        Self { uid: next_uid(), names: Vec::new(), tensors: Vec::new(), index: HashMap::new() }
    }

    pub(crate) fn uid(&self) -> u64 {
        self.uid
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter {name}")));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        Ok(ParamId(id))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index.get(name).map(|&i| ParamId(i)).ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor<T> {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count over all tensors.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Real>(&self) -> WeightStore<U> {
        WeightStore {
            uid: next_uid(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Register `name.g`, `name.v`, `name.b` for a convolution:
    /// `v ~ N(0, std²)`, `g = ‖v‖` per output channel, zero bias.
    pub fn add_conv(&mut self, name: &str, spec: &ConvSpec, rng: &mut impl Rng, std: f64) -> Result<()> {
        if !spec.is_valid() {
            return Err(Error::Config(format!("invalid convolution {name}: {spec:?}")));
        }
        let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let fan = spec.in_per_group() * spec.kernel;
        let v: Vec<T> = (0..spec.weight_len()).map(|_| T::lit(normal.sample(rng))).collect();
        let g: Vec<T> = (0..spec.out_ch)
            .map(|o| v[o * fan..(o + 1) * fan].iter().map(|&x| x * x).sum::<T>().sqrt())
            .collect();
        self.insert(format!("{name}.g"), Tensor::from_vec(&[spec.out_ch], g)?)?;
        self.insert(format!("{name}.v"), Tensor::from_vec(&[spec.out_ch, spec.in_per_group(), spec.kernel], v)?)?;
        self.insert(format!("{name}.b"), Tensor::zeros(&[spec.out_ch]))?;
        Ok(())
    }

    /// `g · v / ‖v‖` for the convolution registered as `name`.
    pub fn effective_weight(&self, name: &str) -> Result<Tensor<T>> {
        let g = self.tensor(self.id(&format!("{name}.g"))?);
        let v = self.tensor(self.id(&format!("{name}.v"))?);
        let (w, _) = weight_norm(g.data(), v.data(), g.len());
        Tensor::from_vec(v.shape(), w)
    }

    /// Set every weight-norm gain to zero, which zeroes every effective weight.
    pub fn zero_gains(&mut self) {
        for (name, t) in self.names.iter().zip(self.tensors.iter_mut()) {
            if name.ends_with(".g") {
                t.data_mut().fill(T::zero());
            }
        }
    }

    /// Replace the contents of every tensor present in `other` under the same name.
    pub fn copy_from(&mut self, other: &WeightStore<T>) -> Result<()> {
        for (name, t) in other.iter() {
            let dst = self.get_mut(name).ok_or_else(|| Error::Checkpoint(format!("unexpected tensor {name}")))?;
            if dst.shape() != t.shape() {
                return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}, expected {:?}", t.shape(), dst.shape())));
            }
            *dst = t.clone();
        }
        Ok(())
    }
}

/// Returns `(w, ‖v‖ per output channel)`.
pub fn weight_norm<T: Real>(g: &[T], v: &[T], out_ch: usize) -> (Vec<T>, Vec<T>) {
    let fan = v.len() / out_ch;
    let eps = T::lit(WEIGHT_NORM_EPS);
    let mut w = vec![T::zero(); v.len()];
    let mut norms = vec![T::zero(); out_ch];
    for o in 0..out_ch {
        let row = &v[o * fan..(o + 1) * fan];
        let n = (row.iter().map(|&x| x * x).sum::<T>() + eps).sqrt();
        norms[o] = n;
        let s = g[o] / n;
        for (dst, &x) in w[o * fan..(o + 1) * fan].iter_mut().zip(row) {
            *dst = s * x;
        }
    }
    (w, norms)
}

/// Gradients aligned with a store's parameter order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub grads: Vec<Tensor<T>>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(store: &WeightStore<T>) -> Self {
        Self { grads: store.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect() }
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in &mut self.grads {
            g.scale_assign(s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.grads.iter().all(Tensor::all_finite)
    }

    pub fn max_abs(&self) -> T {
        self.grads.iter().fold(T::zero(), |m, g| m.max(g.max_abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn effective_norm_equals_gain() {
        let mut store = WeightStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = ConvSpec::new(6, 5, 3);
        store.add_conv("c", &spec, &mut rng, 0.02).unwrap();
        store.get_mut("c.g").unwrap().data_mut().copy_from_slice(&[0.5, 1.0, 2.0, 3.5, 0.1]);
        let w = store.effective_weight("c").unwrap();
        for o in 0..5 {
            let n: f64 = w.data()[o * 18..(o + 1) * 18].iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - store.get("c.g").unwrap().data()[o]).abs() < 1e-6);
        }
    }

    #[test]
    fn init_is_weight_norm_identity() {
        let mut store = WeightStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        store.add_conv("c", &ConvSpec::new(4, 4, 3), &mut rng, 0.02).unwrap();
        let w = store.effective_weight("c").unwrap();
        let v = store.get("c.v").unwrap();
        for (a, b) in w.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut store = WeightStore::<f32>::new();
        store.insert("a", Tensor::zeros(&[1])).unwrap();
        assert!(store.insert("a", Tensor::zeros(&[1])).is_err());
    }
}
