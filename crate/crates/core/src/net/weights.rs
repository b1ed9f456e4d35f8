//! Named parameter store and its `FDDW` file format.
//!
//! ```text
//! "FDDW" | version u16 | tensor count u32 |
//!   per tensor: name len u16 | UTF-8 name | rank u8 | dims u32[rank] | f32 payload
//! ```
//!
//! Little-endian throughout; tensors are written in name order so equal
//! stores produce identical files. Batch-norm running statistics are
//! ordinary entries named `<layer>.bn.running_mean` / `.running_var`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FddError, Result};
use crate::format::{put_f32s, write_atomic, ByteReader};
use crate::scalar::Scalar;

use super::graph::Graph;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"FDDW";
pub const WEIGHTS_VERSION: u16 = 1;

/// Half-width of the uniform distribution used by [`WeightStore::seeded`].
pub const INIT_RANGE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor<T> {
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(FddError::shape(format!(
                "parameter dims {:?} need {n} values, got {}",
                dims,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: Vec<usize>, value: T) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            data: vec![value; n],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WeightStore<T> {
    entries: BTreeMap<String, ParamTensor<T>>,
}

impl<T: Scalar> WeightStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: ParamTensor<T>) {
        self.entries.insert(name.into(), tensor);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ParamTensor<T>)> {
        self.entries.iter()
    }

    pub fn get_raw(&self, name: &str) -> Option<&ParamTensor<T>> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ParamTensor<T>> {
        self.entries.get_mut(name)
    }

    /// Data of `name`, checked against the expected dims.
    pub fn get(&self, name: &str, dims: &[usize]) -> Result<&[T]> {
        let t = self
            .entries
            .get(name)
            .ok_or_else(|| FddError::MissingWeight(name.to_string()))?;
        if t.dims != dims {
            return Err(FddError::WeightShape {
                name: name.to_string(),
                expected: dims.to_vec(),
                found: t.dims.clone(),
            });
        }
        Ok(&t.data)
    }

    /// Checks every tensor the graph needs. Extra entries are ignored.
    pub fn validate(&self, graph: &Graph) -> Result<()> {
        for (name, dims) in graph.manifest() {
            let data = self.get(&name, &dims)?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(FddError::Input(format!("weight tensor `{name}` has non-finite values")));
            }
            if name.ends_with(".running_var") && data.iter().any(|v| *v < T::zero()) {
                return Err(FddError::Input(format!("weight tensor `{name}` has negative variance")));
            }
        }
        Ok(())
    }

    /// All parameters zero, including batch-norm statistics.
    pub fn zeros(graph: &Graph) -> Self {
        let mut store = Self::new();
        for (name, dims) in graph.manifest() {
            store.insert(name, ParamTensor::filled(dims, T::zero()));
        }
        store
    }

    /// Deterministic test weights: uniform in `[−0.05, 0.05]` for kernels,
    /// biases, BN shifts and means; BN scales and variances are drawn around 1
    /// with the same spread.
    pub fn seeded(graph: &Graph, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for (name, dims) in graph.manifest() {
            let n: usize = dims.iter().product();
            let centre = if name.ends_with(".bn.weight") || name.ends_with(".running_var") {
                1.0
            } else {
                0.0
            };
            let data = (0..n)
                .map(|_| T::of(centre + rng.random_range(-INIT_RANGE..=INIT_RANGE)))
                .collect();
            store.insert(name, ParamTensor { dims, data });
        }
        store
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.dims.len() as u8);
            for d in &t.dims {
                out.extend_from_slice(&(*d as u32).to_le_bytes());
            }
            put_f32s(&mut out, &t.data);
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.expect_magic(WEIGHTS_MAGIC)?;
        let version = r.u16()?;
        if version != WEIGHTS_VERSION {
            return Err(FddError::format(format!("unsupported weight file version {version}")));
        }
        let count = r.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = r.utf8(name_len)?.to_string();
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let n = dims
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| FddError::format(format!("tensor `{name}` dims overflow")))?;
            let data = r.f32_vec(n)?;
            if store.entries.insert(name.clone(), ParamTensor { dims, data }).is_some() {
                return Err(FddError::format(format!("duplicate tensor `{name}`")));
            }
        }
        r.finish()?;
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::graph::build_graph;

    #[test]
    fn seeded_is_deterministic_and_bounded() {
        let g = build_graph(2);
        let a = WeightStore::<f32>::seeded(&g, 9);
        assert_eq!(a, WeightStore::seeded(&g, 9));
        assert_ne!(a, WeightStore::seeded(&g, 10));
        assert!(a.validate(&g).is_ok());
        let w = a.get_raw("encoder.conv1.weight").unwrap();
        assert!(w.data.iter().all(|v| v.abs() <= 0.05 + 1e-7));
        let var = a.get_raw("encoder.conv1.bn.running_var").unwrap();
        assert!(var.data.iter().all(|v| *v > 0.9));
    }

    #[test]
    fn validate_names_the_offending_tensor() {
        let g = build_graph(1);
        let mut w = WeightStore::<f32>::zeros(&g);
        w.entries.remove("mask_decoder.out.bias");
        match w.validate(&g) {
            Err(FddError::MissingWeight(name)) => assert_eq!(name, "mask_decoder.out.bias"),
            other => panic!("unexpected {other:?}"),
        }
        let mut w = WeightStore::<f32>::zeros(&g);
        w.insert("encoder.conv1.weight", ParamTensor::filled(vec![64, 1, 3, 3], 0.0));
        assert!(matches!(w.validate(&g), Err(FddError::WeightShape { .. })));
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let mut w = WeightStore::<f32>::new();
        w.insert(
            "a.weight",
            ParamTensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-7, 7.0]).unwrap(),
        );
        w.insert("b", ParamTensor::new(vec![], vec![4.0]).unwrap());
        let bytes = w.encode();
        assert_eq!(&bytes[..4], b"FDDW");
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 2);
        let back = WeightStore::<f32>::decode(&bytes).unwrap();
        assert_eq!(back, w);
        assert_eq!(back.encode(), bytes);
        for cut in [2, 9, 12, bytes.len() - 1] {
            assert!(matches!(
                WeightStore::<f32>::decode(&bytes[..cut]),
                Err(FddError::Format(_))
            ));
        }
        let mut bad = bytes.clone();
        bad[3] = b'X';
        assert!(matches!(WeightStore::<f32>::decode(&bad), Err(FddError::Format(_))));
    }
}
