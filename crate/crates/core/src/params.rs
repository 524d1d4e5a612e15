use std::collections::btree_map::{self, BTreeMap};

use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Parameter handles recorded on one tape, keyed by parameter name.
pub type BoundParams = BTreeMap<String, Var>;

/// All trainable tensors of a model, addressed by unique name and iterated
/// in sorted name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Contract(format!("duplicate parameter `{name}`")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> btree_map::Iter<'_, String, Tensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> btree_map::IterMut<'_, String, Tensor> {
        self.tensors.iter_mut()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Records every parameter as a leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        self.tensors
            .iter()
            .map(|(name, t)| (name.clone(), tape.leaf(t)))
            .collect()
    }

    /// Adds the tape gradients of bound leaves into each tensor's `grad`.
    pub fn accumulate_grads(&mut self, tape: &Tape, bound: &BoundParams) {
        for (name, var) in bound {
            let (Some(t), Some(g)) = (self.tensors.get_mut(name), tape.grad(*var)) else {
                continue;
            };
            if !t.requires_grad() {
                continue;
            }
            for (d, s) in t.grad_mut().iter_mut().zip(g) {
                *d += s;
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn norms(&self) -> Vec<(String, f64)> {
        self.tensors
            .iter()
            .map(|(n, t)| (n.clone(), t.l2_norm()))
            .collect()
    }

    /// Bitwise equality of all values.
    pub fn bit_identical(&self, other: &ParamSet) -> bool {
        self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|((na, a), (nb, b))| {
                na == nb
                    && a.shape() == b.shape()
                    && a.values()
                        .iter()
                        .zip(b.values())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

impl<'a> IntoIterator for &'a ParamSet {
    type Item = (&'a String, &'a Tensor);
    type IntoIter = btree_map::Iter<'a, String, Tensor>;

    fn into_iter(self) -> Self::IntoIter {
        self.tensors.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_sorted() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::scalar(1.0)).unwrap();
        p.insert("a", Tensor::scalar(2.0)).unwrap();
        assert!(p.insert("a", Tensor::scalar(3.0)).is_err());
        assert_eq!(p.names().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn gradients_flow_back_from_tape() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().with_grad(true))
            .unwrap();
        p.insert("frozen", Tensor::new(vec![2], vec![3.0, 4.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let prod = tape.mul(bound["w"], bound["frozen"]).unwrap();
        let s = tape.sum(prod).unwrap();
        tape.backward(s).unwrap();
        p.accumulate_grads(&tape, &bound);
        p.accumulate_grads(&tape, &bound);
        assert_eq!(p.get("w").unwrap().grad(), &[6.0, 8.0]);
        assert_eq!(p.get("frozen").unwrap().grad(), &[0.0, 0.0]);
        p.zero_grads();
        assert_eq!(p.get("w").unwrap().grad(), &[0.0, 0.0]);
    }
}
