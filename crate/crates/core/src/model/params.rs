//! Named parameter storage and safetensors I/O.

use std::collections::HashMap;
use std::sync::Arc;

use safetensors::tensor::TensorView;
use safetensors::{Dtype, SafeTensors};

use crate::autograd::{Graph, Gradients, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Insertion-ordered map from parameter name to value.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Arc<Tensor<T>>>,
    index: HashMap<String, usize>,
}

/// Handle to an entry of a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Graph variables of every parameter, aligned with the store.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    #[inline]
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.names.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &*self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().map(|v| &**v))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Registers every parameter on `g`, as trainable leaves or constants.
    pub fn bind(&self, g: &mut Graph<T>, trainable: bool) -> Bound {
        let vars = self
            .values
            .iter()
            .map(|v| if trainable { g.param(v.clone()) } else { g.constant_shared(v.clone()) })
            .collect();
        Bound { vars }
    }

    /// Collects gradients for every parameter (zeros where none flowed).
    pub fn gradients(&self, bound: &Bound, grads: &mut Gradients<T>) -> Vec<Tensor<T>> {
        self.values
            .iter()
            .zip(&bound.vars)
            .map(|(v, &var)| grads.take(var).unwrap_or_else(|| Tensor::zeros(v.shape())))
            .collect()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.values.iter_mut().map(Arc::make_mut)
    }

    /// Bit-level equality of every value.
    pub fn same_values(&self, other: &Self) -> bool {
        self.names == other.names && self.values.iter().zip(&other.values).all(|(a, b)| a == b)
    }

    pub fn to_safetensors(&self, extra: &[(String, Tensor<T>)]) -> Result<Vec<u8>> {
        let bytes: Vec<(String, [usize; 4], Vec<u8>)> = self
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape(), T::to_le_bytes_vec(t.data())))
            .chain(extra.iter().map(|(n, t)| (n.clone(), t.shape(), T::to_le_bytes_vec(t.data()))))
            .collect();
        let views = bytes
            .iter()
            .map(|(n, s, b)| {
                TensorView::new(T::DTYPE, s.to_vec(), b)
                    .map(|v| (n.clone(), v))
                    .map_err(|e| Error::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        safetensors::serialize(views, &None).map_err(|e| Error::Format(e.to_string()))
    }

    /// Replaces every value from a safetensors blob, checking names and
    /// shapes. Returns tensors in the blob that are not parameters.
    pub fn load_safetensors(&mut self, bytes: &[u8]) -> Result<HashMap<String, Tensor<T>>> {
        let st = SafeTensors::deserialize(bytes).map_err(|e| Error::Format(e.to_string()))?;
        let mut loaded = HashMap::new();
        for (name, view) in st.tensors() {
            loaded.insert(name, view_to_tensor::<T>(&view)?);
        }
        for (i, name) in self.names.iter().enumerate() {
            let t = loaded
                .remove(name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if t.shape() != self.values[i].shape() {
                return Err(Error::Format(format!(
                    "parameter {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    self.values[i].shape()
                )));
            }
            self.values[i] = Arc::new(t);
        }
        Ok(loaded)
    }
}

pub(crate) fn view_to_tensor<T: Scalar>(view: &TensorView<'_>) -> Result<Tensor<T>> {
    let mut shape = [1usize; 4];
    let dims = view.shape();
    if dims.len() > 4 {
        return Err(Error::Format(format!("rank {} tensor unsupported", dims.len())));
    }
    shape[4 - dims.len()..].copy_from_slice(dims);
    let data: Vec<T> = match view.dtype() {
        Dtype::F32 => f32::from_le_bytes_slice(view.data())
            .into_iter()
            .map(|v| T::from_f64_lossy(v as f64))
            .collect(),
        Dtype::F64 => f64::from_le_bytes_slice(view.data())
            .into_iter()
            .map(T::from_f64_lossy)
            .collect(),
        other => return Err(Error::Format(format!("unsupported dtype {other:?}"))),
    };
    Tensor::from_vec(shape, data)
}
