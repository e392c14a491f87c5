use std::collections::HashMap;

use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// An ordered collection of named trainable tensors.
///
/// Insertion order is preserved so that binding, serialization and optimizer
/// state all walk the tensors in the same order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor. Panics on a duplicate name.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Pushes every tensor onto `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape, requires_grad: bool) -> Bound<'_> {
        let vars = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone(), requires_grad))
            .collect();
        Bound { set: self, vars }
    }

    /// Pairs existing tape variables with this set's names, in order.
    /// Returns `None` if the count differs.
    pub fn attach(&self, vars: &[Var]) -> Option<Bound<'_>> {
        (vars.len() == self.len()).then(|| Bound {
            set: self,
            vars: vars.to_vec(),
        })
    }
}

/// A [`ParamSet`] whose tensors live on a tape.
#[derive(Debug, Clone)]
pub struct Bound<'a> {
    set: &'a ParamSet,
    vars: Vec<Var>,
}

impl Bound<'_> {
    /// The tape variable for `name`. Panics if the set has no such tensor.
    pub fn var(&self, name: &str) -> Var {
        match self.set.position(name) {
            Some(i) => self.vars[i],
            None => panic!("no parameter named {name}"),
        }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
