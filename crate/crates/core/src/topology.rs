//! Datacenters, inter-datacenter delays and user-to-entry-datacenter binding.
//!
//! Delays are one-way milliseconds. The matrix is stored in full, so
//! asymmetric measurements survive unchanged.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Dense datacenter index in `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DatacenterId(pub u16);

impl DatacenterId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for DatacenterId {
    fn from(i: usize) -> Self {
        DatacenterId(i as u16)
    }
}

impl fmt::Display for DatacenterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "dc{}", self.0)
    }
}

/// Ordered (entry, exit) datacenter pair. Entry may equal exit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntryExitPair {
    pub entry: DatacenterId,
    pub exit: DatacenterId,
}

impl EntryExitPair {
    pub fn new(entry: impl Into<DatacenterId>, exit: impl Into<DatacenterId>) -> Self {
        EntryExitPair { entry: entry.into(), exit: exit.into() }
    }

    pub fn is_local(&self) -> bool {
        self.entry == self.exit
    }

    /// All n² pairs in ascending (entry, exit) order.
    pub fn all(n: usize) -> impl Iterator<Item = EntryExitPair> {
        (0..n).flat_map(move |e| (0..n).map(move |x| EntryExitPair::new(e, x)))
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("unbound location `{0}`")]
    UnboundLocation(String),
    #[error("empty location binding table")]
    EmptyBindingTable,
    #[error("delay matrix must be square with at least one row, got {rows}x{cols}")]
    Shape { rows: usize, cols: usize },
    #[error("delay ({row},{col}) = {value} is not a finite non-negative value")]
    BadDelay { row: usize, col: usize, value: f64 },
    #[error("delay ({0},{0}) on the diagonal must be 0")]
    NonZeroDiagonal(usize),
    #[error("datacenter {0} out of range for {1} datacenters")]
    OutOfRange(DatacenterId, usize),
}

/// n×n one-way delays in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl DelayMatrix {
    pub fn zeros(n: usize) -> Self {
        DelayMatrix { n, cells: vec![0.0; n * n] }
    }

    /// Matrix where every off-diagonal cell equals `delay_ms`.
    pub fn uniform(n: usize, delay_ms: f64) -> Self {
        let mut m = Self::zeros(n);
        for a in 0..n {
            for b in 0..n {
                if a != b {
                    m.cells[a * n + b] = delay_ms;
                }
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, TopologyError> {
        let n = rows.len();
        if n == 0 {
            return Err(TopologyError::Shape { rows: 0, cols: 0 });
        }
        let mut cells = Vec::with_capacity(n * n);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(TopologyError::Shape { rows: n, cols: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(TopologyError::BadDelay { row: r, col: c, value: v });
                }
                if r == c && v != 0.0 {
                    return Err(TopologyError::NonZeroDiagonal(r));
                }
                cells.push(v);
            }
        }
        Ok(DelayMatrix { n, cells })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, from: DatacenterId, to: DatacenterId) -> f64 {
        self.cells[from.index() * self.n + to.index()]
    }

    /// Sets a single directed cell. Diagonal writes are ignored.
    pub fn set(&mut self, from: DatacenterId, to: DatacenterId, delay_ms: f64) {
        if from != to {
            self.cells[from.index() * self.n + to.index()] = delay_ms.max(0.0);
        }
    }

    pub fn set_symmetric(&mut self, a: DatacenterId, b: DatacenterId, delay_ms: f64) {
        self.set(a, b, delay_ms);
        self.set(b, a, delay_ms);
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.cells.chunks(self.n).map(|r| r.to_vec()).collect()
    }
}

/// Static location-key → entry datacenter table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BindingTable(pub BTreeMap<String, DatacenterId>);

impl BindingTable {
    pub fn insert(&mut self, location: impl Into<String>, dc: impl Into<DatacenterId>) {
        self.0.insert(location.into(), dc.into());
    }
}

/// A user bound to exactly one entry datacenter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBinding {
    pub user: String,
    pub location: String,
    pub entry: DatacenterId,
}

pub fn entry_datacenter(location: &str, table: &BindingTable) -> Result<DatacenterId, TopologyError> {
    if table.0.is_empty() {
        return Err(TopologyError::EmptyBindingTable);
    }
    table
        .0
        .get(location)
        .copied()
        .ok_or_else(|| TopologyError::UnboundLocation(location.into()))
}

/// Sum of delays between consecutive distinct hops.
pub fn path_delay(path: &[DatacenterId], delays: &DelayMatrix) -> f64 {
    path.windows(2)
        .filter(|w| w[0] != w[1])
        .map(|w| delays.get(w[0], w[1]))
        .sum()
}

/// Minimum-delay simple path from `entry` to `exit` over the full mesh
/// (Dijkstra). Ties keep the first-discovered predecessor, which favours
/// fewer hops and lower indices.
pub fn shortest_delay_path(entry: DatacenterId, exit: DatacenterId, delays: &DelayMatrix) -> Vec<DatacenterId> {
    let n = delays.len();
    if entry == exit {
        return vec![entry];
    }
    let mut dist = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    dist[entry.index()] = 0.0;
    for _ in 0..n {
        let mut u = None;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && u.is_none_or(|u: usize| dist[v] < dist[u]) {
                u = Some(v);
            }
        }
        let Some(u) = u else { break };
        done[u] = true;
        if u == exit.index() {
            break;
        }
        for v in 0..n {
            if done[v] || v == u {
                continue;
            }
            let alt = dist[u] + delays.get(u.into(), v.into());
            if alt < dist[v] {
                dist[v] = alt;
                prev[v] = Some(u);
            }
        }
    }
    let mut path = vec![exit];
    let mut cur = exit.index();
    while let Some(p) = prev[cur] {
        path.push(p.into());
        cur = p;
    }
    path.reverse();
    path
}
