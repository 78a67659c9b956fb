//! Minimal reverse-mode differentiable compute.
//!
//! Every training loop in the crate is a scalar loss over dense matrices,
//! sparse graph aggregations and a distance-covariance penalty, so the
//! engine records a flat tape of matrix ops and differentiates it in
//! reverse. There is no forward mode, no broadcasting beyond row vectors,
//! and no implicit parallelism: identical seeds and inputs give
//! bit-identical outputs.

mod gradcheck;
#[cfg(test)]
mod gradtests;
mod layers;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{gcn_layer, gin_layer, init_bias, init_weight, linear_forward, sage_layer};
pub use optim::{proximal_l1_step, AdamState};
pub use tape::{Tape, Var};

use crate::error::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Architecture tags for serialized parameter sets.
pub const ARCH_TAGS: [&str; 5] = ["mlp1", "gcn1", "gcn2", "sage", "gin"];

/// An ordered, named collection of parameter matrices.
///
/// Insertion order is the canonical order for gradient extraction and
/// optimizer state, so results never depend on hash-map iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSet {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    data: Vec<Vec<f64>>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: Array2<f64>) {
        assert!(
            !self.names.iter().any(|n| n == name),
            "duplicate parameter `{name}`"
        );
        self.names.push(name.to_string());
        self.shapes.push((value.nrows(), value.ncols()));
        self.data.push(value.into_raw_vec_and_offset().0);
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Array2<f64> {
        let i = self.index_of(name);
        self.value(i)
    }

    pub fn index_of(&self, name: &str) -> usize {
        self.names
            .iter()
            .position(|n| n == name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"))
    }

    pub fn value(&self, i: usize) -> Array2<f64> {
        Array2::from_shape_vec(self.shapes[i], self.data[i].clone()).expect("param shape")
    }

    pub fn set(&mut self, i: usize, value: &Array2<f64>) {
        assert_eq!((value.nrows(), value.ncols()), self.shapes[i]);
        self.data[i] = value.iter().copied().collect();
    }

    pub fn shape(&self, i: usize) -> (usize, usize) {
        self.shapes[i]
    }

    /// All parameters are finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

/// Named parameters plus the architecture tag they were trained for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: String,
    pub params: ParamSet,
}

impl ModelParams {
    pub fn new(arch: &str, params: ParamSet) -> Result<Self> {
        if !ARCH_TAGS.contains(&arch) {
            return Err(Error::Config(format!(
                "unknown architecture tag `{arch}`; expected one of {ARCH_TAGS:?}"
            )));
        }
        if !params.all_finite() {
            return Err(Error::Validation("non-finite model parameter".into()));
        }
        Ok(Self {
            arch: arch.to_string(),
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn param_set_preserves_order_and_values() {
        let mut p = ParamSet::new();
        p.insert("w", array![[1.0, 2.0], [3.0, 4.0]]);
        p.insert("b", array![[0.5, 0.5]]);
        assert_eq!(p.names(), &["w".to_string(), "b".to_string()]);
        assert_eq!(p.get("b"), array![[0.5, 0.5]]);
        let json = serde_json::to_string(&p).unwrap();
        let back: ParamSet = serde_json::from_str(&json).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn model_params_rejects_bad_tag() {
        assert!(ModelParams::new("resnet", ParamSet::new()).is_err());
        assert!(ModelParams::new("gcn1", ParamSet::new()).is_ok());
    }
}
