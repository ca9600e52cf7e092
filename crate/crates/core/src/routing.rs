//! Distributed data-plane routing: header codecs, call-session mappings,
//! the previous/current/next path sets and per-datacenter flow routing.
//!
//! A local controller routes a flow from what the first packet carries and
//! what it holds locally. It never asks the global controller.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::VnfRole;
use crate::planner::{PathTable, ServiceChainPath};
use crate::provisioning::{Health, InstanceId, Inventory, VnfInstance};
use crate::topology::{entry_datacenter, BindingTable, DatacenterId, EntryExitPair};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RoutingError {
    #[error("datacenter index {0} does not fit in 6 bits")]
    TagRange(u16),
    #[error("stage {0} outside 1..=4")]
    StageRange(u8),
    #[error("tag interval {tag} vs local interval {local}: skew > 1")]
    SkewTooLarge { local: u64, tag: u8 },
    #[error("no path set held for the {0:?} interval")]
    MissingPathSet(PathSlot),
    #[error("no working instance")]
    NoWorkingInstance,
}

/// Entry, exit and interval-mod-4 packed into 14 bits of a 16-bit field:
/// `entry << 8 | exit << 2 | interval % 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlowTag(pub u16);

pub const TAG_INDEX_LIMIT: u16 = 64;

impl FlowTag {
    pub fn encode(entry: DatacenterId, exit: DatacenterId, interval: u64) -> Result<Self, RoutingError> {
        for d in [entry, exit] {
            if d.0 >= TAG_INDEX_LIMIT {
                return Err(RoutingError::TagRange(d.0));
            }
        }
        Ok(FlowTag(entry.0 << 8 | exit.0 << 2 | (interval % 4) as u16))
    }

    pub fn decode(self) -> (DatacenterId, DatacenterId, u8) {
        (DatacenterId(self.0 >> 8 & 0x3f), DatacenterId(self.0 >> 2 & 0x3f), (self.0 & 0b11) as u8)
    }

    pub fn pair(self) -> EntryExitPair {
        let (e, x, _) = self.decode();
        EntryExitPair { entry: e, exit: x }
    }

    pub fn interval_mod4(self) -> u8 {
        (self.0 & 0b11) as u8
    }
}

/// Four byte lanes of a 32-bit header field, lane 1 most significant.
/// Lane `i` carries the instance index for stage `i` or, once a flow
/// leaves a datacenter, the next datacenter's index. Lane 4 is the
/// virtual exit stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HopCode(pub u32);

impl HopCode {
    #[inline]
    pub fn mask(stage: u8) -> u32 {
        255u32 << (8 * (4 - stage as u32))
    }

    pub fn encode(self, stage: u8, index: u8) -> Result<Self, RoutingError> {
        if !(1..=4).contains(&stage) {
            return Err(RoutingError::StageRange(stage));
        }
        let shift = 8 * (4 - stage as u32);
        Ok(HopCode((self.0 & !Self::mask(stage)) | (index as u32) << shift))
    }

    pub fn extract(self, stage: u8) -> Result<u8, RoutingError> {
        if !(1..=4).contains(&stage) {
            return Err(RoutingError::StageRange(stage));
        }
        Ok(((self.0 & Self::mask(stage)) >> (8 * (4 - stage as u32))) as u8)
    }
}

impl fmt::Display for HopCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#010x}", self.0)
    }
}

/// Opaque IPv4-style address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Addr(pub u32);

/// Address of a datacenter's public ingress.
pub fn datacenter_addr(dc: DatacenterId) -> Addr {
    Addr(0x0a00_0000 | dc.0 as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoint {
    pub user: String,
    pub addr: Addr,
    pub send_port: u16,
    pub recv_port: u16,
    pub entry: DatacenterId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallSession {
    pub caller: Endpoint,
    pub callee: Endpoint,
}

/// Rewrite applied when a flow leaves the chain at its exit datacenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub entry_addr: Addr,
    pub dst_addr: Addr,
    pub dst_port: u16,
}

/// The session mappings a local controller holds for calls whose caller or
/// callee is bound to its datacenter.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionTable {
    /// (source address, send port) → peer address.
    #[serde(with = "crate::entries")]
    pub forward: BTreeMap<(Addr, u16), Addr>,
    /// (source address, send port) → exit rewrite.
    #[serde(with = "crate::entries")]
    pub translate: BTreeMap<(Addr, u16), Translation>,
}

impl SessionTable {
    /// Mappings 1 and 2, held by the caller's entry controller.
    pub fn install_caller_side(&mut self, s: &CallSession) {
        self.forward.insert((s.caller.addr, s.caller.send_port), s.callee.addr);
        self.translate.insert(
            (s.callee.addr, s.callee.send_port),
            Translation { entry_addr: datacenter_addr(s.caller.entry), dst_addr: s.caller.addr, dst_port: s.caller.recv_port },
        );
    }

    /// Mappings 3 and 4, held by the callee's entry controller.
    pub fn install_callee_side(&mut self, s: &CallSession) {
        self.forward.insert((s.callee.addr, s.callee.send_port), s.caller.addr);
        self.translate.insert(
            (s.caller.addr, s.caller.send_port),
            Translation { entry_addr: datacenter_addr(s.callee.entry), dst_addr: s.callee.addr, dst_port: s.callee.recv_port },
        );
    }

    pub fn remove(&mut self, s: &CallSession) {
        self.forward.remove(&(s.caller.addr, s.caller.send_port));
        self.forward.remove(&(s.callee.addr, s.callee.send_port));
        self.translate.remove(&(s.caller.addr, s.caller.send_port));
        self.translate.remove(&(s.callee.addr, s.callee.send_port));
    }

    pub fn len(&self) -> usize {
        self.forward.len() + self.translate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Installs a completed call's mappings on both entry controllers.
/// Re-registering the same session leaves the tables unchanged.
pub fn register_call(session: &CallSession, tables: &mut [SessionTable]) {
    tables[session.caller.entry.index()].install_caller_side(session);
    tables[session.callee.entry.index()].install_callee_side(session);
}

/// User address → location key, resolved through the binding table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationService {
    pub locations: BTreeMap<Addr, String>,
    pub binding: BindingTable,
}

impl LocationService {
    pub fn locate(&self, addr: Addr) -> Option<DatacenterId> {
        let key = self.locations.get(&addr)?;
        entry_datacenter(key, &self.binding).ok()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathSlot {
    Previous,
    Current,
    Next,
}

/// Which path set a flow tagged with `tag_mod4` must use.
pub fn select_path_set(local_interval: u64, tag_mod4: u8) -> Result<PathSlot, RoutingError> {
    let local = (local_interval % 4) as u8;
    match (tag_mod4 + 4 - local) % 4 {
        0 => Ok(PathSlot::Current),
        1 => Ok(PathSlot::Next),
        3 => Ok(PathSlot::Previous),
        _ => Err(RoutingError::SkewTooLarge { local: local_interval, tag: tag_mod4 }),
    }
}

/// Path tables for the previous, current and next interval.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathTriple {
    pub previous: Option<PathTable>,
    pub current: PathTable,
    pub next: Option<PathTable>,
}

impl PathTriple {
    pub fn new(initial: PathTable) -> Self {
        PathTriple { previous: None, current: initial, next: None }
    }

    pub fn get(&self, slot: PathSlot) -> Option<&PathTable> {
        match slot {
            PathSlot::Previous => self.previous.as_ref(),
            PathSlot::Current => Some(&self.current),
            PathSlot::Next => self.next.as_ref(),
        }
    }

    pub fn stash_next(&mut self, table: PathTable) {
        self.next = Some(table);
    }

    /// Interval entry: next → current → previous. Without a stashed table
    /// the current one carries over.
    pub fn promote(&mut self) {
        let next = self.next.take().unwrap_or_else(|| self.current.clone());
        self.previous = Some(core::mem::replace(&mut self.current, next));
    }
}

/// Smallest-assigned-load instance among candidates, preferring ready
/// normal instances, then ready overloaded ones, then booting ones.
/// Ties go to the lowest id.
pub fn select_instance<'a>(
    candidates: impl IntoIterator<Item = &'a VnfInstance>,
    now_ms: u64,
) -> Result<InstanceId, RoutingError> {
    candidates
        .into_iter()
        .filter(|i| i.is_working())
        .min_by(|a, b| {
            let tier = |i: &VnfInstance| {
                if !i.is_ready(now_ms) {
                    2
                } else if i.health == Health::Overload {
                    1
                } else {
                    0
                }
            };
            tier(a)
                .cmp(&tier(b))
                .then(a.assigned_load.partial_cmp(&b.assigned_load).unwrap_or(core::cmp::Ordering::Equal))
                .then(a.id.cmp(&b.id))
        })
        .map(|i| i.id)
        .ok_or(RoutingError::NoWorkingInstance)
}

/// First packet of a flow as seen by a datacenter's switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowPacket {
    pub src_addr: Addr,
    pub src_port: u16,
    pub tag: Option<FlowTag>,
    pub hop: HopCode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropReason {
    /// This datacenter is absent from the pair's path in the selected set.
    NotOnPath,
    UnknownSession,
    UnknownDestination,
    BadTag,
    /// A locally hosted stage has no working instance.
    NoInstance(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RouteDecision {
    Forward {
        next: DatacenterId,
        tag: FlowTag,
        hop: HopCode,
        stages: Vec<(u8, InstanceId)>,
        path: ServiceChainPath,
    },
    Deliver {
        translation: Translation,
        tag: FlowTag,
        hop: HopCode,
        stages: Vec<(u8, InstanceId)>,
        path: ServiceChainPath,
    },
    Drop(DropReason),
}

/// The routing view of one local controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingState {
    pub dc: DatacenterId,
    pub interval: u64,
    pub paths: PathTriple,
    pub sessions: SessionTable,
    /// When off, tags carry only entry and exit and the current set is used.
    pub tagging: bool,
}

impl RoutingState {
    pub fn new(dc: DatacenterId, initial: PathTable, tagging: bool) -> Self {
        RoutingState { dc, interval: 0, paths: PathTriple::new(initial), sessions: SessionTable::default(), tagging }
    }

    fn table_for(&self, tag: FlowTag) -> Result<&PathTable, RoutingError> {
        if !self.tagging {
            return Ok(&self.paths.current);
        }
        let slot = select_path_set(self.interval, tag.interval_mod4())?;
        self.paths.get(slot).ok_or(RoutingError::MissingPathSet(slot))
    }

    /// Routes the first packet of a flow arriving at this datacenter.
    ///
    /// Untagged packets are new flows entering the chain here; tagged ones
    /// are mid-path. Locally hosted stages get an instance each, then the
    /// next datacenter's index goes into the following lane, or the exit
    /// rewrite applies.
    pub fn route_flow(&self, pkt: &FlowPacket, inventory: &Inventory, locator: &LocationService, now_ms: u64) -> RouteDecision {
        let (tag, path) = match pkt.tag {
            None => {
                let Some(&peer) = self.sessions.forward.get(&(pkt.src_addr, pkt.src_port)) else {
                    return RouteDecision::Drop(DropReason::UnknownSession);
                };
                let Some(exit) = locator.locate(peer) else {
                    return RouteDecision::Drop(DropReason::UnknownDestination);
                };
                let Ok(tag) = FlowTag::encode(self.dc, exit, self.interval) else {
                    return RouteDecision::Drop(DropReason::BadTag);
                };
                let pair = EntryExitPair { entry: self.dc, exit };
                match self.paths.current.get(&pair) {
                    Some(p) => (tag, p.clone()),
                    None => return RouteDecision::Drop(DropReason::NotOnPath),
                }
            }
            Some(tag) => {
                let Ok(table) = self.table_for(tag) else {
                    return RouteDecision::Drop(DropReason::BadTag);
                };
                match table.get(&tag.pair()) {
                    Some(p) if p.contains(self.dc) => (tag, p.clone()),
                    _ => return RouteDecision::Drop(DropReason::NotOnPath),
                }
            }
        };

        let m = path.stage_count();
        let mut hop = pkt.hop;
        let mut stages = Vec::new();
        for j in 1..=m {
            if path.stage_dc(j) != self.dc {
                continue;
            }
            let role = VnfRole::Stage(j as u8);
            match select_instance(inventory.working(role), now_ms) {
                Ok(id) => {
                    hop = hop.encode(j as u8, id.0 as u8).unwrap_or(hop);
                    stages.push((j as u8, id));
                }
                Err(_) => return RouteDecision::Drop(DropReason::NoInstance(j as u8)),
            }
        }

        match path.next_after(self.dc) {
            Some(next) => {
                // Lane of the first stage not hosted here, or the virtual exit stage.
                let lane = stages.last().map_or_else(
                    || (1..=m).find(|&j| path.stage_dc(j) != self.dc).unwrap_or(m + 1),
                    |&(j, _)| j as usize + 1,
                );
                let hop = hop.encode(lane.min(4) as u8, next.0 as u8).unwrap_or(hop);
                RouteDecision::Forward { next, tag, hop, stages, path }
            }
            None => match self.sessions.translate.get(&(pkt.src_addr, pkt.src_port)) {
                Some(&translation) => RouteDecision::Deliver { translation, tag, hop, stages, path },
                None => RouteDecision::Drop(DropReason::UnknownSession),
            },
        }
    }
}
