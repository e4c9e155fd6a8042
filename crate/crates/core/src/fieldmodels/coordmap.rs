use std::collections::HashMap;

use crate::diffcore::{Real, Tensor};
use crate::error::{Error, Result};

const QUANT: f64 = 16384.0;
const MAX_DIMS: usize = 4;

/// Lattice key of a coordinate in `[-1, 1]^d`, `d ≤ 4`: each component
/// quantized to 16 bits. Distinct points of any grid with fewer than 2^15
/// samples per axis get distinct keys.
pub fn coord_key(coord: &[f64]) -> Result<u64> {
    if coord.len() > MAX_DIMS {
        return Err(Error::Config(format!(
            "hash-table coordinates support at most {MAX_DIMS} dimensions, got {}",
            coord.len()
        )));
    }
    let mut key = 0u64;
    for &c in coord {
        if !(-1.0..=1.0).contains(&c) {
            return Err(Error::UnknownCoordinate {
                coord: coord.to_vec(),
            });
        }
        let q = ((c + 1.0) * QUANT).round() as u64;
        key = (key << 16) | q;
    }
    Ok(key)
}

/// Injective map from grid coordinates to hash-table rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoordMap {
    index: HashMap<u64, usize>,
    keys: Vec<u64>,
}

impl CoordMap {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: u64) -> bool {
        self.index.contains_key(&key)
    }

    pub fn row_of(&self, key: u64) -> Option<usize> {
        self.index.get(&key).copied()
    }

    /// Appends keys as new rows; fails without modification on any duplicate.
    pub fn extend(&mut self, keys: &[u64]) -> Result<()> {
        let mut seen = std::collections::HashSet::with_capacity(keys.len());
        for &k in keys {
            if self.index.contains_key(&k) || !seen.insert(k) {
                return Err(Error::Config(format!(
                    "coordinate with key {k:#x} already has a hash-table row"
                )));
            }
        }
        for &k in keys {
            self.index.insert(k, self.keys.len());
            self.keys.push(k);
        }
        Ok(())
    }

    /// `(key, row)` pairs sorted by key.
    pub fn sorted_entries(&self) -> Vec<(u64, usize)> {
        let mut v: Vec<_> = self.keys.iter().enumerate().map(|(r, &k)| (k, r)).collect();
        v.sort_unstable();
        v
    }

    pub(crate) fn from_entries(entries: &[(u64, usize)]) -> Result<Self> {
        let mut keys = vec![None; entries.len()];
        for &(k, r) in entries {
            match keys.get_mut(r) {
                Some(slot @ None) => *slot = Some(k),
                _ => return Err(Error::Config(format!("invalid or repeated table row {r}"))),
            }
        }
        let keys: Vec<u64> = keys.into_iter().map(|k| k.expect("filled")).collect();
        let mut map = CoordMap::default();
        map.extend(&keys)?;
        Ok(map)
    }

    pub fn rows_for<T: Real>(&self, coords: &Tensor<T>) -> Result<Vec<usize>> {
        let mut buf = Vec::with_capacity(coords.cols());
        (0..coords.rows())
            .map(|r| {
                buf.clear();
                buf.extend(coords.row(r).iter().map(|v| v.as_f64()));
                coord_key(&buf).and_then(|k| {
                    self.row_of(k).ok_or_else(|| Error::UnknownCoordinate { coord: buf.clone() })
                })
            })
            .collect()
    }
}

pub fn keys_of<T: Real>(coords: &Tensor<T>) -> Result<Vec<u64>> {
    (0..coords.rows())
        .map(|r| {
            let c: Vec<f64> = coords.row(r).iter().map(|v| v.as_f64()).collect();
            coord_key(&c)
        })
        .collect()
}
