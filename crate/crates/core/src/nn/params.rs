use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Gradients, Graph, Mat, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameters in insertion order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arc<Mat>>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Mat) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter {name}"
        );
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(Arc::new(value));
        ParamId(self.names.len() - 1)
    }

    /// Uniform in `±1/sqrt(fan_in)`.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let value = Mat::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound));
        self.add(name, value)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Arc<Mat> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        Arc::make_mut(&mut self.values[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arc<Mat>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Replaces values by name; every parameter must be present with a
    /// matching shape.
    pub fn load_from<'a>(
        &mut self,
        tensors: impl IntoIterator<Item = (&'a str, &'a Mat)>,
        prefix: &str,
    ) -> Result<()> {
        let mut seen = vec![false; self.len()];
        for (name, value) in tensors {
            let Some(local) = name.strip_prefix(prefix) else {
                continue;
            };
            let id = self
                .find(local)
                .ok_or_else(|| Error::Format(format!("unexpected tensor {name}")))?;
            if value.dim() != self.values[id.0].dim() {
                return Err(Error::Format(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    value.dim(),
                    self.values[id.0].dim()
                )));
            }
            self.values[id.0] = Arc::new(value.clone());
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Format(format!(
                "missing tensor {prefix}{}",
                self.names[missing]
            )));
        }
        Ok(())
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, value) in self.iter() {
            feed(name.as_bytes());
            feed(&(value.nrows() as u64).to_le_bytes());
            feed(&(value.ncols() as u64).to_le_bytes());
            for v in value.iter() {
                feed(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Makes parameters available to a graph. Nodes are created lazily on
    /// first use.
    pub fn bind<'g>(&self, graph: &'g Graph, trainable: bool) -> Bound<'g> {
        Bound {
            graph,
            values: self.values.clone(),
            trainable,
            vars: RefCell::new(vec![None; self.values.len()]),
        }
    }
}

/// Parameters of one store bound to a graph.
pub struct Bound<'g> {
    graph: &'g Graph,
    values: Vec<Arc<Mat>>,
    trainable: bool,
    vars: RefCell<Vec<Option<Var<'g>>>>,
}

impl<'g> Bound<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn get(&self, id: ParamId) -> Var<'g> {
        if let Some(v) = self.vars.borrow()[id.0] {
            return v;
        }
        let value = self.values[id.0].clone();
        let v = if self.trainable {
            self.graph.variable(value)
        } else {
            self.graph.constant(value)
        };
        self.vars.borrow_mut()[id.0] = Some(v);
        v
    }

    /// Per-parameter gradients; `None` for parameters that were never used.
    pub fn gradients(&self, grads: &Gradients) -> Vec<Option<Arc<Mat>>> {
        self.vars
            .borrow()
            .iter()
            .map(|v| v.and_then(|v| grads.get(v)))
            .collect()
    }

    pub fn bound_vars(&self) -> Vec<(ParamId, Var<'g>)> {
        self.vars
            .borrow()
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
            .collect()
    }
}
