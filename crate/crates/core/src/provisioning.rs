//! Per-datacenter VNF inventory: working instances, the double-ended
//! buffer queue of idle instances, and scale-out / scale-in mechanics.
//!
//! A scaled-in instance is stamped with the interval index and pushed to
//! the tail of its queue. Scale-out pops from the tail first, so the most
//! recently idled instances are reused. Eviction scans from the head.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{VnfRole, VnfType};
use crate::topology::DatacenterId;

/// Instance index, unique within its datacenter. Values below the
/// datacenter count are reserved for next-datacenter hop codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u16);

/// Hop-code lanes are one byte wide.
pub const MAX_INSTANCE_ID: u16 = 255;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InstanceState {
    Working,
    Buffered { stamp: u64 },
    Draining,
    Destroyed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Health {
    #[default]
    Normal,
    Overload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfInstance {
    pub id: InstanceId,
    pub role: VnfRole,
    pub dc: DatacenterId,
    pub state: InstanceState,
    pub capacity: f64,
    /// Simulated time (ms) at which the instance can process traffic.
    pub ready_at_ms: u64,
    /// Sum of nominal rates of flows pinned to this instance.
    pub assigned_load: f64,
    pub active_flows: u32,
    pub health: Health,
}

impl VnfInstance {
    pub fn is_working(&self) -> bool {
        self.state == InstanceState::Working
    }

    pub fn is_ready(&self, now_ms: u64) -> bool {
        self.ready_at_ms <= now_ms
    }

    /// Still running and able to carry pinned flows.
    pub fn is_alive(&self) -> bool {
        self.state != InstanceState::Destroyed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ProvisionError {
    #[error("instance {0:?} is not working")]
    NotWorking(InstanceId),
    #[error("unknown instance {0:?}")]
    Unknown(InstanceId),
    #[error("no free instance index left in this datacenter")]
    IdSpaceExhausted,
}

/// Double-ended queue of (instance, enqueue interval), oldest at the head.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BufferQueue {
    entries: VecDeque<(InstanceId, u64)>,
}

impl BufferQueue {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn push_tail(&mut self, id: InstanceId, stamp: u64) {
        debug_assert!(self.entries.back().is_none_or(|&(_, s)| s <= stamp));
        self.entries.push_back((id, stamp));
    }

    pub fn pop_tail(&mut self) -> Option<(InstanceId, u64)> {
        self.entries.pop_back()
    }

    pub fn head(&self) -> Option<(InstanceId, u64)> {
        self.entries.front().copied()
    }

    pub fn pop_head(&mut self) -> Option<(InstanceId, u64)> {
        self.entries.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = (InstanceId, u64)> + '_ {
        self.entries.iter().copied()
    }
}

/// Result of one activation during scale-out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub id: InstanceId,
    pub reused: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleCounts {
    pub working: usize,
    pub buffered: usize,
    pub draining: usize,
    pub destroyed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    dc: DatacenterId,
    /// Lowest usable instance index (number of datacenters).
    first_id: u16,
    instances: BTreeMap<InstanceId, VnfInstance>,
    #[serde(with = "crate::entries")]
    queues: BTreeMap<VnfRole, BufferQueue>,
    #[serde(with = "crate::entries")]
    destroyed: BTreeMap<VnfRole, usize>,
    /// Instances created by scale-out, in creation order.
    created_log: Vec<(VnfRole, InstanceId, u64)>,
    bootstrapped: usize,
}

impl Inventory {
    pub fn new(dc: DatacenterId, datacenter_count: usize) -> Self {
        Inventory {
            dc,
            first_id: datacenter_count as u16,
            instances: BTreeMap::new(),
            queues: BTreeMap::new(),
            destroyed: BTreeMap::new(),
            created_log: Vec::new(),
            bootstrapped: 0,
        }
    }

    pub fn dc(&self) -> DatacenterId {
        self.dc
    }

    fn free_id(&self) -> Result<InstanceId, ProvisionError> {
        // Destroyed instances are removed from the map, so their indices recycle.
        (self.first_id..=MAX_INSTANCE_ID)
            .map(InstanceId)
            .find(|id| !self.instances.contains_key(id))
            .ok_or(ProvisionError::IdSpaceExhausted)
    }

    fn spawn(&mut self, vnf: &VnfType, ready_at_ms: u64) -> Result<InstanceId, ProvisionError> {
        let id = self.free_id()?;
        self.instances.insert(
            id,
            VnfInstance {
                id,
                role: vnf.role,
                dc: self.dc,
                state: InstanceState::Working,
                capacity: vnf.capacity,
                ready_at_ms,
                assigned_load: 0.0,
                active_flows: 0,
                health: Health::Normal,
            },
        );
        Ok(id)
    }

    /// Initial deployment; ready immediately and not counted as created.
    pub fn bootstrap(&mut self, vnf: &VnfType, count: usize) -> Result<Vec<InstanceId>, ProvisionError> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            out.push(self.spawn(vnf, 0)?);
            self.bootstrapped += 1;
        }
        Ok(out)
    }

    /// Reactivates up to `count` buffered instances from the queue tail, then
    /// creates the remainder with the type's boot delay.
    pub fn scale_out(&mut self, vnf: &VnfType, count: usize, now_ms: u64) -> Result<Vec<Activation>, ProvisionError> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let Some((id, _)) = self.queues.get_mut(&vnf.role).and_then(BufferQueue::pop_tail) else {
                break;
            };
            let inst = self.instances.get_mut(&id).expect("queued instance exists");
            inst.state = InstanceState::Working;
            out.push(Activation { id, reused: true });
        }
        while out.len() < count {
            let id = self.spawn(vnf, now_ms + vnf.boot_delay_ms)?;
            self.created_log.push((vnf.role, id, now_ms));
            out.push(Activation { id, reused: false });
        }
        Ok(out)
    }

    /// Moves working instances to the tail of their queue, stamped with
    /// `interval`. Fails without side effects if any id is not working.
    pub fn scale_in(&mut self, ids: &[InstanceId], interval: u64) -> Result<(), ProvisionError> {
        for id in ids {
            match self.instances.get(id) {
                None => return Err(ProvisionError::Unknown(*id)),
                Some(i) if !i.is_working() => return Err(ProvisionError::NotWorking(*id)),
                Some(_) => {}
            }
        }
        for id in ids {
            let inst = self.instances.get_mut(id).expect("checked above");
            inst.state = InstanceState::Buffered { stamp: interval };
            inst.health = Health::Normal;
            self.queues.entry(inst.role).or_default().push_tail(*id, interval);
        }
        Ok(())
    }

    /// Dequeues from each queue head while `new_interval − stamp ≥ tau`.
    /// Dequeued instances drain; those without flows are destroyed at once.
    pub fn evict_expired(&mut self, new_interval: u64, tau: u64) -> Vec<InstanceId> {
        let mut out = Vec::new();
        for queue in self.queues.values_mut() {
            while let Some((id, stamp)) = queue.head() {
                if new_interval.saturating_sub(stamp) < tau || new_interval < stamp {
                    break;
                }
                queue.pop_head();
                out.push(id);
            }
        }
        for id in &out {
            let inst = self.instances.get_mut(id).expect("queued instance exists");
            inst.state = InstanceState::Draining;
        }
        for id in &out {
            self.reap(*id);
        }
        out
    }

    fn reap(&mut self, id: InstanceId) -> bool {
        let Some(inst) = self.instances.get(&id) else { return false };
        if inst.state == InstanceState::Draining && inst.active_flows == 0 {
            let role = inst.role;
            self.instances.remove(&id);
            *self.destroyed.entry(role).or_default() += 1;
            true
        } else {
            false
        }
    }

    /// Sum over working instances of spare capacity.
    pub fn available_capacity(&self, role: VnfRole) -> f64 {
        self.instances
            .values()
            .filter(|i| i.role == role && i.is_working())
            .map(|i| (i.capacity - i.assigned_load).max(0.0))
            .sum()
    }

    pub fn working_count(&self, role: VnfRole) -> usize {
        self.instances.values().filter(|i| i.role == role && i.is_working()).count()
    }

    pub fn counts(&self, role: VnfRole) -> RoleCounts {
        let mut c = RoleCounts { destroyed: self.destroyed.get(&role).copied().unwrap_or(0), ..Default::default() };
        for i in self.instances.values().filter(|i| i.role == role) {
            match i.state {
                InstanceState::Working => c.working += 1,
                InstanceState::Buffered { .. } => c.buffered += 1,
                InstanceState::Draining => c.draining += 1,
                InstanceState::Destroyed => c.destroyed += 1,
            }
        }
        c
    }

    /// Moves the working count of `role` to `target`: scale-out reuses
    /// buffered instances first; scale-in idles the least-loaded instances.
    pub fn apply_target(
        &mut self,
        vnf: &VnfType,
        target: usize,
        interval: u64,
        now_ms: u64,
    ) -> Result<Vec<Activation>, ProvisionError> {
        let working = self.working_count(vnf.role);
        if target > working {
            return self.scale_out(vnf, target - working, now_ms);
        }
        if target < working {
            let mut ids: Vec<&VnfInstance> =
                self.instances.values().filter(|i| i.role == vnf.role && i.is_working()).collect();
            // Least-loaded first; among equals prefer the newest (highest id).
            ids.sort_by(|a, b| {
                a.assigned_load
                    .partial_cmp(&b.assigned_load)
                    .unwrap_or(core::cmp::Ordering::Equal)
                    .then(b.id.cmp(&a.id))
            });
            let victims: Vec<InstanceId> = ids.iter().take(working - target).map(|i| i.id).collect();
            self.scale_in(&victims, interval)?;
        }
        Ok(Vec::new())
    }

    pub fn get(&self, id: InstanceId) -> Option<&VnfInstance> {
        self.instances.get(&id)
    }

    pub fn get_mut(&mut self, id: InstanceId) -> Option<&mut VnfInstance> {
        self.instances.get_mut(&id)
    }

    pub fn instances(&self) -> impl Iterator<Item = &VnfInstance> {
        self.instances.values()
    }

    pub fn instances_mut(&mut self) -> impl Iterator<Item = &mut VnfInstance> {
        self.instances.values_mut()
    }

    pub fn working(&self, role: VnfRole) -> impl Iterator<Item = &VnfInstance> {
        self.instances.values().filter(move |i| i.role == role && i.is_working())
    }

    pub fn queue(&self, role: VnfRole) -> Option<&BufferQueue> {
        self.queues.get(&role)
    }

    /// Pins a flow of nominal `rate` to an instance.
    pub fn attach_flow(&mut self, id: InstanceId, rate: f64) {
        if let Some(i) = self.instances.get_mut(&id) {
            i.active_flows += 1;
            i.assigned_load += rate;
        }
    }

    /// Unpins a flow; destroys a draining instance whose last flow left.
    pub fn detach_flow(&mut self, id: InstanceId, rate: f64) {
        if let Some(i) = self.instances.get_mut(&id) {
            i.active_flows = i.active_flows.saturating_sub(1);
            i.assigned_load = (i.assigned_load - rate).max(0.0);
            if i.active_flows == 0 {
                i.assigned_load = 0.0;
            }
            self.reap(id);
        }
    }

    pub fn created_log(&self) -> &[(VnfRole, InstanceId, u64)] {
        &self.created_log
    }

    pub fn created_count(&self) -> usize {
        self.created_log.len()
    }

    pub fn bootstrapped_count(&self) -> usize {
        self.bootstrapped
    }
}
