use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor4};

/// A learned tensor and its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor4<T>,
    pub grad: Tensor4<T>,
}

/// Named parameters in insertion order. Names are hierarchical and
/// dot-separated, e.g. `mreb.3.scacb.1.compress.weight`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    entries: IndexMap<String, Param<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: IndexMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor4<T>) -> Result<usize> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let grad = Tensor4::zeros(value.dims());
        let (index, _) = self.entries.insert_full(name, Param { value, grad });
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Param<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.entries.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn by_index(&self, index: usize) -> Option<(&str, &Param<T>)> {
        self.entries.get_index(index).map(|(k, v)| (k.as_str(), v))
    }

    pub fn by_index_mut(&mut self, index: usize) -> Option<(&str, &mut Param<T>)> {
        self.entries.get_index_mut(index).map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad.fill(T::zero());
        }
    }

    /// Total number of learned scalars.
    pub fn num_elements(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, p)| (k.clone(), Param { value: p.value.cast(), grad: p.grad.cast() }))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_and_uniqueness() {
        let mut store = ParamStore::<f32>::new();
        store.insert("b.weight", Tensor4::zeros([2, 1, 1, 1])).unwrap();
        store.insert("a.weight", Tensor4::zeros([3, 1, 1, 1])).unwrap();
        assert!(store.insert("b.weight", Tensor4::zeros([1, 1, 1, 1])).is_err());
        assert_eq!(store.names().collect::<Vec<_>>(), ["b.weight", "a.weight"]);
        assert_eq!(store.num_elements(), 5);
        assert_eq!(store.get("a.weight").unwrap().grad.dims(), [3, 1, 1, 1]);
    }
}
