use std::collections::HashMap;

use diffcore::{Element, Tensor};

/// Index of a registered parameter; modules hold these instead of tensor
/// clones so the optimizer can update buffers in place between steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef(pub usize);

/// Ordered, named parameter store. Registration order is the checkpoint
/// order and the seeded-initialization order, so it must stay deterministic.
pub struct ParamSet<E: Element> {
    entries: Vec<(String, Tensor<E>)>,
    index: HashMap<String, usize>,
}

impl<E: Element> ParamSet<E> {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn register(&mut self, name: impl Into<String>, tensor: Tensor<E>) -> ParamRef {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push((name, tensor));
        ParamRef(id)
    }

    pub fn get(&self, r: ParamRef) -> &Tensor<E> {
        &self.entries[r.0].1
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<E>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<E>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn zero_grads(&self) {
        for (_, t) in &self.entries {
            t.zero_grad();
        }
    }

    /// In-place update of every trainable parameter. Must run while no tape
    /// holds references to the buffers (between steps).
    pub fn update_trainable(&mut self, mut f: impl FnMut(usize, &str, &mut [E], &[E])) {
        for (i, (name, t)) in self.entries.iter_mut().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let grad = match t.grad_vec() {
                Some(g) => g,
                None => continue,
            };
            t.update_data(|data| f(i, name, data, &grad));
        }
    }

    /// Substitute the given tensor for a named slot (gradient probes).
    pub fn set_tensor(&mut self, name: &str, t: Tensor<E>) -> Result<(), String> {
        let &i = self.index.get(name).ok_or_else(|| format!("unknown parameter {name}"))?;
        if self.entries[i].1.shape() != t.shape() {
            return Err(format!("parameter {name}: shape {:?} vs {:?}", t.shape(), self.entries[i].1.shape()));
        }
        self.entries[i].1 = t;
        Ok(())
    }

    /// Replace a buffer wholesale (checkpoint restore). Shape must match.
    pub fn load_values(&mut self, name: &str, values: Vec<E>) -> Result<(), String> {
        let &i = self.index.get(name).ok_or_else(|| format!("unknown parameter {name}"))?;
        let t = &mut self.entries[i].1;
        if t.numel() != values.len() {
            return Err(format!("parameter {name}: {} values for {} slots", values.len(), t.numel()));
        }
        let rg = t.requires_grad();
        let shape = t.shape().to_vec();
        *t = if rg {
            Tensor::param_from_vec(&shape, values).expect("checked length")
        } else {
            Tensor::from_vec(&shape, values).expect("checked length")
        };
        Ok(())
    }
}

impl<E: Element> Default for ParamSet<E> {
    fn default() -> Self {
        Self::new()
    }
}
