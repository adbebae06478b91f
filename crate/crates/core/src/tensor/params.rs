use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensor::Tensor;

/// How a parameter is filled at construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Uniform in `(-limit, limit)`.
    Uniform(f64),
    /// Glorot-uniform over a rank-2 shape.
    Glorot,
    Zeros,
}

/// Named model weights, iterated in lexicographic name order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    tensors: BTreeMap<String, Tensor>,
    pub rng_seed: u64,
}

impl ParameterSet {
    pub fn empty(rng_seed: u64) -> Self {
        ParameterSet {
            tensors: BTreeMap::new(),
            rng_seed,
        }
    }

    /// Builds every parameter from `specs` with a single seeded stream,
    /// consumed in lexicographic name order.
    pub fn initialize(specs: &[(String, Vec<usize>, Init)], rng_seed: u64) -> Self {
        let mut sorted: Vec<_> = specs.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let mut set = Self::empty(rng_seed);
        for (name, shape, init) in sorted {
            let numel: usize = shape.iter().product();
            let data = match *init {
                Init::Zeros => vec![0.0; numel],
                Init::Uniform(limit) => (0..numel)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect(),
                Init::Glorot => {
                    let (fan_in, fan_out) = match shape.as_slice() {
                        [a, b] => (*a, *b),
                        [a] => (*a, *a),
                        _ => (numel, numel),
                    };
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    (0..numel)
                        .map(|_| rng.random_range(-limit..limit))
                        .collect()
                }
            };
            let t = Tensor::new(shape.clone(), data).expect("shape matches data");
            set.insert(name, t);
        }
        set
    }

    /// Inserts (or replaces) a parameter; it is marked as requiring grad.
    pub fn insert(&mut self, name: impl Into<String>, mut t: Tensor) {
        t.requires_grad = true;
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar weights.
    pub fn count(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// L2 norm over all gradient buffers that are present.
    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .values()
            .filter_map(|t| t.grad.as_ref())
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }
}
