//! Core model of a geo-distributed IMS deployment with service-chained
//! media processing: delay topology, workload forecasting, per-datacenter
//! instance lifecycle, control/data-plane planning, reactive overload
//! scaling, tag-based distributed routing and the controller protocol.
//!
//! Everything here is `no_std` + `alloc` and free of I/O; drivers feed
//! time and messages in explicitly.

#![no_std]

// Negated float comparisons below are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod catalog;
pub mod forecast;
pub mod orchestration;
pub mod planner;
pub mod provisioning;
pub mod reactive;
pub mod routing;
pub mod topology;

pub use catalog::{Catalog, VnfRole, VnfType};
pub use planner::{PathTable, ServiceChainPath};
pub use topology::{DatacenterId, DelayMatrix, EntryExitPair};

/// Serializes maps with composite keys as `[key, value]` lists so that
/// key-value formats such as JSON can carry them.
pub(crate) mod entries {
    use alloc::collections::BTreeMap;
    use alloc::vec::Vec;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<K: Serialize, V: Serialize, S: Serializer>(m: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(m.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        V: Deserialize<'de>,
        D: Deserializer<'de>,
    {
        Vec::<(K, V)>::deserialize(d).map(|v| v.into_iter().collect())
    }
}
