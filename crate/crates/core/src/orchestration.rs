//! Global and local controller state machines and the five-step
//! proactive round.
//!
//! Both controllers are sans-IO: a driver hands them messages and the
//! current time, and sends whatever they return. Requests from the global
//! controller are retransmitted by [`GlobalController::poll`] until a
//! response arrives; locals answer duplicates from a response cache so each
//! request takes effect once.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, VnfRole};
use crate::forecast::{Ar1Config, ForecastError, MatrixForecaster};
use crate::planner::{plan_dp, size_cp, DpInputs, DpPlan, PathTable, ProvisionPlan, ProvisionSnapshot, WorkloadMatrix};
use crate::provisioning::{Activation, Health, InstanceId, Inventory, ProvisionError};
use crate::reactive::{reactive_decision, HealthBook, StatsSample, DEFAULT_PERSISTENCE};
use crate::routing::RoutingState;
use crate::topology::{DatacenterId, DelayMatrix, EntryExitPair};

/// Version stamped on every message's serial form.
pub const PROTOCOL_VERSION: u16 = 1;
pub const DEFAULT_RETRANSMIT_MS: u64 = 500;
pub const DEFAULT_TAU: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Global,
    Local(DatacenterId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MsgId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    /// Transactions per second, batched over several seconds.
    ControlPlane,
    /// Packets per second, every second.
    DataPlane,
}

/// Per-exit rates measured at the reporting (entry) datacenter, plus its
/// latest one-way delay probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub kind: ReportKind,
    pub rates: Vec<(DatacenterId, f64)>,
    pub delays: Vec<(DatacenterId, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MsgBody {
    WorkloadReport(WorkloadReport),
    ProvisionRequest,
    /// Working plus buffered instances per role; buffered ones return
    /// to service without creating anything.
    ProvisionResponse { available: Vec<(VnfRole, usize)> },
    DecisionBroadcast { targets: Vec<(VnfRole, usize)>, paths: PathTable },
    DecisionComplete,
    EnterNewInterval,
    IntervalAck,
}

impl MsgBody {
    pub fn name(&self) -> &'static str {
        match self {
            MsgBody::WorkloadReport(_) => "workload-report",
            MsgBody::ProvisionRequest => "provision-request",
            MsgBody::ProvisionResponse { .. } => "provision-response",
            MsgBody::DecisionBroadcast { .. } => "decision-broadcast",
            MsgBody::DecisionComplete => "decision-complete",
            MsgBody::EnterNewInterval => "enter-new-interval",
            MsgBody::IntervalAck => "interval-ack",
        }
    }

    pub fn is_request(&self) -> bool {
        matches!(self, MsgBody::ProvisionRequest | MsgBody::DecisionBroadcast { .. } | MsgBody::EnterNewInterval)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerMsg {
    pub version: u16,
    pub id: MsgId,
    pub from: Node,
    pub to: Node,
    /// Interval of the round a request belongs to, or the sender's interval
    /// for reports.
    pub interval: u64,
    /// Set on responses.
    pub reply_to: Option<MsgId>,
    pub body: MsgBody,
}

/// Where a proactive round stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Collecting,
    Broadcasting,
    Entering,
}

/// How the global controller picks next interval's paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathPolicy {
    Planned,
    /// Interval `t` uses `tables[t % len]`; provisioning still follows the plan.
    Scripted(Vec<PathTable>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub datacenters: usize,
    pub catalog: Catalog,
    pub scscf_home: DatacenterId,
    pub threshold_ms: f64,
    pub forecast: Ar1Config,
    pub retransmit_ms: u64,
    pub paths: PathPolicy,
    /// When false, decisions carry paths only and inventories stay as they are.
    pub provisioning: bool,
}

/// Running sums for one interval.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Accumulator {
    #[serde(with = "crate::entries")]
    sums: BTreeMap<(DatacenterId, DatacenterId), f64>,
    reports: BTreeMap<DatacenterId, u64>,
}

impl Accumulator {
    fn add(&mut self, from: DatacenterId, rates: &[(DatacenterId, f64)]) {
        *self.reports.entry(from).or_default() += 1;
        for &(x, r) in rates {
            *self.sums.entry((from, x)).or_default() += r;
        }
    }

    /// Row-major per-pair means; pairs without reports read zero.
    fn means(&self, n: usize) -> Vec<f64> {
        let mut out = alloc::vec![0.0; n * n];
        for (&(e, x), &s) in &self.sums {
            let c = self.reports.get(&e).copied().unwrap_or(0);
            if c > 0 && e.index() < n && x.index() < n {
                out[e.index() * n + x.index()] = s / c as f64;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Outstanding {
    msg: ControllerMsg,
    sent_at: u64,
    transmissions: u32,
}

/// Everything decided in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDecision {
    /// The interval these decisions take effect in.
    pub interval: u64,
    pub cp_load: WorkloadMatrix,
    pub dp_load: WorkloadMatrix,
    pub delays: DelayMatrix,
    pub provision: ProvisionPlan,
    pub dp: DpPlan,
    pub paths: PathTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalController {
    cfg: GlobalConfig,
    interval: u64,
    phase: Phase,
    next_id: u64,
    outstanding: BTreeMap<MsgId, Outstanding>,
    provision: BTreeMap<DatacenterId, Vec<(VnfRole, usize)>>,
    completes: BTreeSet<DatacenterId>,
    acks: BTreeSet<DatacenterId>,
    cp: Accumulator,
    dp: Accumulator,
    #[serde(with = "crate::entries")]
    delay_sums: BTreeMap<(DatacenterId, DatacenterId), (f64, u64)>,
    delays: DelayMatrix,
    cp_forecast: MatrixForecaster,
    dp_forecast: MatrixForecaster,
    cp_pred: Vec<f64>,
    dp_pred: Vec<f64>,
    paths: PathTable,
    last: Option<RoundDecision>,
    stale_reports: u64,
    transmissions: u64,
    rounds_completed: u64,
}

impl GlobalController {
    pub fn new(cfg: GlobalConfig, delays: DelayMatrix, initial_paths: PathTable) -> Self {
        let n = cfg.datacenters;
        GlobalController {
            interval: 0,
            phase: Phase::Idle,
            next_id: 0,
            outstanding: BTreeMap::new(),
            provision: BTreeMap::new(),
            completes: BTreeSet::new(),
            acks: BTreeSet::new(),
            cp: Accumulator::default(),
            dp: Accumulator::default(),
            delay_sums: BTreeMap::new(),
            delays,
            cp_forecast: MatrixForecaster::new(n, cfg.forecast),
            dp_forecast: MatrixForecaster::new(n, cfg.forecast),
            cp_pred: alloc::vec![0.0; n * n],
            dp_pred: alloc::vec![0.0; n * n],
            paths: initial_paths,
            last: None,
            stale_reports: 0,
            transmissions: 0,
            rounds_completed: 0,
            cfg,
        }
    }

    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &GlobalConfig {
        &self.cfg
    }

    pub fn stale_reports(&self) -> u64 {
        self.stale_reports
    }

    /// Total request transmissions, first sends and retransmissions.
    pub fn transmissions(&self) -> u64 {
        self.transmissions
    }

    pub fn rounds_completed(&self) -> u64 {
        self.rounds_completed
    }

    pub fn last_decision(&self) -> Option<&RoundDecision> {
        self.last.as_ref()
    }

    pub fn paths(&self) -> &PathTable {
        &self.paths
    }

    pub fn delays(&self) -> &DelayMatrix {
        &self.delays
    }

    fn locals(&self) -> impl Iterator<Item = DatacenterId> {
        (0..self.cfg.datacenters).map(DatacenterId::from)
    }

    fn request(&mut self, to: DatacenterId, body: MsgBody, now: u64) -> ControllerMsg {
        let msg = ControllerMsg {
            version: PROTOCOL_VERSION,
            id: MsgId(self.next_id),
            from: Node::Global,
            to: Node::Local(to),
            interval: self.interval,
            reply_to: None,
            body,
        };
        self.next_id += 1;
        self.transmissions += 1;
        self.outstanding.insert(msg.id, Outstanding { msg: msg.clone(), sent_at: now, transmissions: 1 });
        msg
    }

    /// Folds a report into the running interval. Reports more than one
    /// interval old are dropped and counted.
    pub fn ingest_report(&mut self, msg: &ControllerMsg) -> bool {
        let (Node::Local(from), MsgBody::WorkloadReport(r)) = (msg.from, &msg.body) else {
            return false;
        };
        if msg.interval + 1 < self.interval {
            self.stale_reports += 1;
            return false;
        }
        match r.kind {
            ReportKind::ControlPlane => self.cp.add(from, &r.rates),
            ReportKind::DataPlane => self.dp.add(from, &r.rates),
        }
        for &(to, d) in &r.delays {
            let e = self.delay_sums.entry((from, to)).or_default();
            e.0 += d;
            e.1 += 1;
        }
        true
    }

    /// Step 1 and 2: closes the interval's measurements, updates forecasts
    /// and asks every local for its inventory. Returns nothing if a round
    /// is already running.
    pub fn start_round(&mut self, now: u64) -> Result<Vec<ControllerMsg>, ForecastError> {
        if self.phase != Phase::Idle {
            return Ok(Vec::new());
        }
        let n = self.cfg.datacenters;
        let cp = core::mem::take(&mut self.cp).means(n);
        let dp = core::mem::take(&mut self.dp).means(n);
        self.cp_pred = self.cp_forecast.advance(&cp)?;
        self.dp_pred = self.dp_forecast.advance(&dp)?;
        for ((a, b), (s, c)) in core::mem::take(&mut self.delay_sums) {
            if c > 0 {
                self.delays.set(a, b, s / c as f64);
            }
        }
        self.phase = Phase::Collecting;
        self.provision.clear();
        self.completes.clear();
        self.acks.clear();
        let locals: Vec<_> = self.locals().collect();
        Ok(locals.into_iter().map(|d| self.request(d, MsgBody::ProvisionRequest, now)).collect())
    }

    /// Step 3 on the collected inventories.
    pub fn decide(&self) -> RoundDecision {
        let n = self.cfg.datacenters;
        let cp_load = WorkloadMatrix::from_cells(n, self.cp_pred.clone());
        let dp_load = WorkloadMatrix::from_cells(n, self.dp_pred.clone());
        let mut snapshot = ProvisionSnapshot::new();
        for (&dc, counts) in &self.provision {
            for &(role, c) in counts {
                snapshot.insert((dc, role), c);
            }
        }
        let dp = plan_dp(&DpInputs {
            load: &dp_load,
            delays: &self.delays,
            provision: &snapshot,
            current_paths: &self.paths,
            catalog: &self.cfg.catalog,
            threshold_ms: self.cfg.threshold_ms,
        });
        let mut provision = size_cp(&cp_load, &self.cfg.catalog, self.cfg.scscf_home);
        provision.merge(dp.provision.clone());
        let interval = self.interval + 1;
        let paths = match &self.cfg.paths {
            PathPolicy::Planned => dp.paths.clone(),
            PathPolicy::Scripted(tables) if !tables.is_empty() => tables[(interval % tables.len() as u64) as usize].clone(),
            PathPolicy::Scripted(_) => self.paths.clone(),
        };
        RoundDecision { interval, cp_load, dp_load, delays: self.delays.clone(), provision, dp, paths }
    }

    /// Handles a response or report; returns the messages to send next.
    pub fn handle(&mut self, msg: &ControllerMsg, now: u64) -> Vec<ControllerMsg> {
        if let MsgBody::WorkloadReport(_) = msg.body {
            self.ingest_report(msg);
            return Vec::new();
        }
        let (Node::Local(from), Some(req)) = (msg.from, msg.reply_to) else {
            return Vec::new();
        };
        // Late duplicates of answered requests fall out here.
        if self.outstanding.remove(&req).is_none() {
            return Vec::new();
        }
        match (&msg.body, self.phase) {
            (MsgBody::ProvisionResponse { available }, Phase::Collecting) => {
                self.provision.insert(from, available.clone());
                if self.provision.len() == self.cfg.datacenters {
                    let decision = self.decide();
                    self.paths = decision.paths.clone();
                    self.phase = Phase::Broadcasting;
                    let locals: Vec<_> = self.locals().collect();
                    let out = locals
                        .into_iter()
                        .map(|d| {
                            let targets = if self.cfg.provisioning {
                                decision.provision.for_dc(d).into_iter().collect()
                            } else {
                                Vec::new()
                            };
                            self.request(d, MsgBody::DecisionBroadcast { targets, paths: decision.paths.clone() }, now)
                        })
                        .collect();
                    self.last = Some(decision);
                    return out;
                }
            }
            (MsgBody::DecisionComplete, Phase::Broadcasting) => {
                self.completes.insert(from);
                if self.completes.len() == self.cfg.datacenters {
                    self.phase = Phase::Entering;
                    let locals: Vec<_> = self.locals().collect();
                    return locals.into_iter().map(|d| self.request(d, MsgBody::EnterNewInterval, now)).collect();
                }
            }
            (MsgBody::IntervalAck, Phase::Entering) => {
                self.acks.insert(from);
                if self.acks.len() == self.cfg.datacenters {
                    self.interval += 1;
                    self.phase = Phase::Idle;
                    self.rounds_completed += 1;
                }
            }
            _ => {}
        }
        Vec::new()
    }

    /// Re-sends every request unanswered for the retransmit period.
    pub fn poll(&mut self, now: u64) -> Vec<ControllerMsg> {
        let period = self.cfg.retransmit_ms;
        let mut out = Vec::new();
        for o in self.outstanding.values_mut() {
            if now >= o.sent_at + period {
                o.sent_at = now;
                o.transmissions += 1;
                out.push(o.msg.clone());
            }
        }
        self.transmissions += out.len() as u64;
        out
    }

    /// Earliest time a retransmission is due.
    pub fn next_timer(&self) -> Option<u64> {
        self.outstanding.values().map(|o| o.sent_at + self.cfg.retransmit_ms).min()
    }

    pub fn outstanding(&self) -> usize {
        self.outstanding.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalConfig {
    pub tau: u64,
    pub persistence: usize,
    /// Fewest working instances kept per data-plane stage.
    pub stage_floor: usize,
}

impl Default for LocalConfig {
    fn default() -> Self {
        LocalConfig { tau: DEFAULT_TAU, persistence: DEFAULT_PERSISTENCE, stage_floor: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalController {
    cfg: LocalConfig,
    catalog: Catalog,
    pub routing: RoutingState,
    pub inventory: Inventory,
    pub health: HealthBook,
    suspended_since: Option<u64>,
    suspended_ms: u64,
    next_id: u64,
    responses: BTreeMap<MsgId, ControllerMsg>,
}

impl LocalController {
    pub fn new(cfg: LocalConfig, catalog: Catalog, routing: RoutingState, inventory: Inventory) -> Self {
        LocalController {
            health: HealthBook::new(cfg.persistence),
            cfg,
            catalog,
            routing,
            inventory,
            suspended_since: None,
            suspended_ms: 0,
            next_id: 0,
            responses: BTreeMap::new(),
        }
    }

    pub fn dc(&self) -> DatacenterId {
        self.routing.dc
    }

    pub fn interval(&self) -> u64 {
        self.routing.interval
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn is_suspended(&self) -> bool {
        self.suspended_since.is_some()
    }

    /// Total time spent with reactive scaling suspended, up to `now`.
    pub fn suspended_ms(&self, now: u64) -> u64 {
        self.suspended_ms + self.suspended_since.map_or(0, |s| now.saturating_sub(s))
    }

    fn message(&mut self, body: MsgBody, reply_to: Option<MsgId>) -> ControllerMsg {
        let msg = ControllerMsg {
            version: PROTOCOL_VERSION,
            id: MsgId(self.next_id),
            from: Node::Local(self.dc()),
            to: Node::Global,
            interval: self.interval(),
            reply_to,
            body,
        };
        self.next_id += 1;
        msg
    }

    pub fn report(&mut self, kind: ReportKind, rates: Vec<(DatacenterId, f64)>, delays: Vec<(DatacenterId, f64)>) -> ControllerMsg {
        self.message(MsgBody::WorkloadReport(WorkloadReport { kind, rates, delays }), None)
    }

    fn available_counts(&self) -> Vec<(VnfRole, usize)> {
        self.catalog
            .roles()
            .map(|r| {
                let c = self.inventory.counts(r);
                (r, c.working + c.buffered)
            })
            .collect()
    }

    /// Handles a request from the global controller. A request seen before
    /// gets its cached response without touching state.
    pub fn handle(&mut self, msg: &ControllerMsg, now: u64) -> Result<Option<ControllerMsg>, ProvisionError> {
        if let Some(r) = self.responses.get(&msg.id) {
            return Ok(Some(r.clone()));
        }
        // Requests of a finished round whose response was pruned are inert.
        if msg.body.is_request() && msg.interval < self.routing.interval {
            return Ok(None);
        }
        let body = match &msg.body {
            MsgBody::ProvisionRequest => {
                if self.suspended_since.is_none() {
                    self.suspended_since = Some(now);
                }
                MsgBody::ProvisionResponse { available: self.available_counts() }
            }
            MsgBody::DecisionBroadcast { targets, paths } => {
                for &(role, target) in targets {
                    let Some(vnf) = self.catalog.get(role).cloned() else { continue };
                    let target = if role.stage().is_some() { target.max(self.cfg.stage_floor) } else { target };
                    let idled: Vec<InstanceId> = self.inventory.working(role).map(|i| i.id).collect();
                    self.inventory.apply_target(&vnf, target, msg.interval + 1, now)?;
                    for id in idled {
                        if !self.inventory.get(id).is_some_and(|i| i.is_working()) {
                            self.health.forget(id);
                        }
                    }
                }
                self.routing.paths.stash_next(paths.clone());
                MsgBody::DecisionComplete
            }
            MsgBody::EnterNewInterval => {
                // Only the round's own interval may advance; anything else is
                // a replay of a round this controller already finished.
                if msg.interval == self.routing.interval {
                    self.routing.interval += 1;
                    self.routing.paths.promote();
                    for id in self.inventory.evict_expired(self.routing.interval, self.cfg.tau) {
                        self.health.forget(id);
                    }
                }
                if let Some(s) = self.suspended_since.take() {
                    self.suspended_ms += now.saturating_sub(s);
                }
                MsgBody::IntervalAck
            }
            _ => return Ok(None),
        };
        let resp = self.message(body, Some(msg.id));
        self.responses.insert(msg.id, resp.clone());
        let floor = self.routing.interval.saturating_sub(2);
        self.responses.retain(|_, r| r.interval >= floor);
        Ok(Some(resp))
    }

    pub fn record_stats(&mut self, id: InstanceId, s: StatsSample) -> bool {
        self.health.record(id, s)
    }

    /// Per-second reactive pass: refreshes every working instance's health
    /// and, when `enabled` and not suspended, adds one instance to each role
    /// whose instances are mostly overloaded.
    pub fn reactive_step(&mut self, now: u64, enabled: bool) -> Result<Vec<(VnfRole, Activation)>, ProvisionError> {
        let mut out = Vec::new();
        let roles: Vec<VnfRole> = self.catalog.roles().collect();
        for role in roles {
            let th = self.catalog.vnf(role).thresholds;
            let ids: Vec<InstanceId> = self.inventory.working(role).map(|i| i.id).collect();
            let mut states = Vec::with_capacity(ids.len());
            for id in ids {
                let h = self.health.classify(id, &th, self.cfg.persistence);
                if let Some(i) = self.inventory.get_mut(id) {
                    i.health = h;
                }
                states.push(h);
            }
            if enabled && reactive_decision(&states, self.is_suspended()) == 1 {
                let vnf = self.catalog.vnf(role).clone();
                for a in self.inventory.scale_out(&vnf, 1, now)? {
                    out.push((role, a));
                }
            }
        }
        Ok(out)
    }

    /// Instance health as last classified.
    pub fn health_of(&self, id: InstanceId) -> Health {
        self.health.state(id)
    }
}

/// Pair-major iteration helper for building report payloads.
pub fn pair_rates(entry: DatacenterId, n: usize, rate: impl Fn(EntryExitPair) -> f64) -> Vec<(DatacenterId, f64)> {
    (0..n).map(DatacenterId::from).map(|x| (x, rate(EntryExitPair { entry, exit: x }))).collect()
}
