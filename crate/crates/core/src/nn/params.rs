use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Gradients, Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

/// How a slot is filled at initialization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with standard deviation `gain / sqrt(rows)`.
    FanIn(f64),
    Zeros,
    Ones,
}

/// Named views into one flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamLayout {
    slots: Vec<Slot>,
    inits: Vec<Init>,
    index: HashMap<String, usize>,
    total: usize,
}

impl ParamLayout {
    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, init: Init) {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.slots.len());
        self.slots.push(Slot { name, offset: self.total, rows, cols });
        self.inits.push(init);
        self.total += rows * cols;
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.index.get(name).map(|&i| &self.slots[i])
    }

    pub fn init<S: Scalar, R: Rng>(&self, rng: &mut R) -> Vec<S> {
        let mut out = vec![S::zero(); self.total];
        for (slot, init) in self.slots.iter().zip(&self.inits) {
            let dst = &mut out[slot.offset..slot.offset + slot.rows * slot.cols];
            match *init {
                Init::Zeros => {}
                Init::Ones => dst.iter_mut().for_each(|x| *x = S::one()),
                Init::FanIn(gain) => {
                    let std = gain / (slot.rows.max(1) as f64).sqrt();
                    for x in dst.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *x = S::of(z * std);
                    }
                }
            }
        }
        out
    }

    /// Places every slot on the graph as a leaf.
    pub fn bind<S: Scalar>(&self, g: &mut Graph<S>, values: &[S], trainable: bool) -> Bound<'_> {
        assert_eq!(values.len(), self.total, "parameter vector length");
        let vars = self
            .slots
            .iter()
            .map(|s| {
                let m = Matrix::from_vec(s.rows, s.cols, values[s.offset..s.offset + s.rows * s.cols].to_vec())
                    .expect("slot shape");
                if trainable {
                    g.variable(m)
                } else {
                    g.constant(m)
                }
            })
            .collect();
        Bound { layout: self, vars }
    }
}

pub struct Bound<'a> {
    layout: &'a ParamLayout,
    vars: Vec<Var>,
}

impl Bound<'_> {
    pub fn get(&self, name: &str) -> Var {
        let i = *self.layout.index.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.vars[i]
    }

    pub fn try_get(&self, name: &str) -> Option<Var> {
        self.layout.index.get(name).map(|&i| self.vars[i])
    }

    /// Flattens leaf gradients back into the parameter layout; untouched slots are zero.
    pub fn gather<S: Scalar>(&self, grads: &Gradients<S>) -> Vec<S> {
        let mut out = vec![S::zero(); self.layout.total];
        for (slot, &v) in self.layout.slots.iter().zip(&self.vars) {
            if let Some(g) = grads.get(v) {
                out[slot.offset..slot.offset + slot.rows * slot.cols].copy_from_slice(g.data());
            }
        }
        out
    }
}
