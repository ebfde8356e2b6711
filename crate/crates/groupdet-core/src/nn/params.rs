//! Named parameter storage, initialization, and the SGD-momentum update.

use std::collections::HashMap;

use ndarray::{ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{Arr, Graph, NodeId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Flat store of named tensors. Names are stable identifiers used for
/// checkpoints and per-parameter deterministic initialization.
#[derive(Default, Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Arr>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, value: Arr) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.to_string(), self.values.len());
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    pub fn value(&self, id: ParamId) -> &Arr {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Arr {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Arr)> {
        self.names.iter().map(|n| n.as_str()).zip(self.values.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn snapshot(&self) -> Vec<Arr> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Arr]) {
        assert_eq!(snapshot.len(), self.values.len());
        self.values.clone_from_slice(snapshot);
    }
}

/// Binds store parameters into a graph, at most once per forward pass.
pub struct Binder<'s> {
    store: &'s ParamStore,
    bound: Vec<Option<NodeId>>,
}

impl<'s> Binder<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Binder { store, bound: vec![None; store.len()] }
    }

    pub fn bind(&mut self, g: &mut Graph, id: ParamId) -> NodeId {
        if let Some(node) = self.bound[id.0] {
            return node;
        }
        let node = g.input(self.store.value(id).clone());
        self.bound[id.0] = Some(node);
        node
    }

    /// Collect per-parameter gradients after a backward pass, aligned with
    /// the store. Unbound or unreached parameters yield `None`.
    pub fn param_grads(&self, grads: &super::Gradients) -> Vec<Option<Arr>> {
        self.bound
            .iter()
            .map(|slot| slot.and_then(|node| grads.get(node).cloned()))
            .collect()
    }

    /// Gradient of one parameter, if it was bound and reached.
    pub fn param_grad<'g>(&self, grads: &'g super::Gradients, id: ParamId) -> Option<&'g Arr> {
        self.bound[id.0].and_then(|node| grads.get(node))
    }
}

/// Accumulate `addend` gradients into `acc` elementwise.
pub fn accumulate_grads(acc: &mut [Option<Arr>], addend: Vec<Option<Arr>>) {
    assert_eq!(acc.len(), addend.len());
    for (a, b) in acc.iter_mut().zip(addend) {
        match (a.as_mut(), b) {
            (Some(a), Some(b)) => *a += &b,
            (None, Some(b)) => *a = Some(b),
            _ => {}
        }
    }
}

/// Deterministic per-parameter RNG: the stream depends only on the global
/// seed and the parameter name, so adding parameters never shifts the
/// initialization of existing ones.
pub fn param_rng(seed: u64, name: &str) -> ChaCha20Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    ChaCha20Rng::seed_from_u64(seed ^ h)
}

/// He-style normal initialization via Box-Muller.
pub fn he_normal_init(shape: &[usize], fan_in: usize, rng: &mut ChaCha20Rng) -> Arr {
    let std = (2.0 / fan_in as f64).sqrt();
    ArrayD::from_shape_fn(IxDyn(shape), |_| {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos() * std
    })
}

/// SGD with momentum and L2 weight decay folded into the gradient.
pub struct SgdMomentum {
    velocity: Vec<Arr>,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl SgdMomentum {
    pub fn new(store: &ParamStore, momentum: f64, weight_decay: f64) -> Self {
        SgdMomentum {
            velocity: store
                .snapshot()
                .into_iter()
                .map(|v| ArrayD::zeros(v.raw_dim()))
                .collect(),
            momentum,
            weight_decay,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Arr>], lr: f64) {
        assert_eq!(grads.len(), self.velocity.len());
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let id = ParamId(i);
            let w = store.value(id).clone();
            let v = &mut self.velocity[i];
            v.zip_mut_with(grad, |v, g| *v = *v * self.momentum + g);
            if self.weight_decay != 0.0 {
                v.zip_mut_with(&w, |v, w| *v += self.weight_decay * w);
            }
            store
                .value_mut(id)
                .zip_mut_with(v, |w, v| *w -= lr * v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::scalar;

    #[test]
    fn param_rng_is_name_stable() {
        let mut a = param_rng(7, "stem.conv.w");
        let mut b = param_rng(7, "stem.conv.w");
        let mut c = param_rng(7, "stem.conv.b");
        let (x, y, z): (f64, f64, f64) = (a.gen(), b.gen(), c.gen());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }

    #[test]
    fn sgd_momentum_update_matches_hand_computation() {
        let mut store = ParamStore::new();
        let id = store.register("w", scalar(1.0));
        let mut opt = SgdMomentum::new(&store, 0.9, 0.0);
        let grads = vec![Some(scalar(0.5))];
        opt.step(&mut store, &grads, 0.1);
        // v = 0.5, w = 1 - 0.05
        assert!((store.value(id).sum() - 0.95).abs() < 1e-12);
        opt.step(&mut store, &grads, 0.1);
        // v = 0.45 + 0.5 = 0.95, w = 0.95 - 0.095
        assert!((store.value(id).sum() - 0.855).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_pulls_towards_zero() {
        let mut store = ParamStore::new();
        let id = store.register("w", scalar(2.0));
        let mut opt = SgdMomentum::new(&store, 0.0, 0.1);
        opt.step(&mut store, &[Some(scalar(0.0))], 1.0);
        assert!((store.value(id).sum() - 1.8).abs() < 1e-12);
    }
}
