//! Deterministic discrete-event simulation of a multi-datacenter
//! deployment driven by the controllers from `chainscale-core`.
//!
//! Time is in milliseconds. Calls, routing hops and controller messages
//! are discrete events; media is a fluid model evaluated once per second.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use chainscale_core::catalog::{Catalog, VnfRole};
use chainscale_core::forecast::ForecastError;
use chainscale_core::orchestration::{
    ControllerMsg, GlobalConfig, GlobalController, LocalConfig, LocalController, MsgBody, Node, PathPolicy, Phase,
    ReportKind,
};
use chainscale_core::planner::{PathTable, ServiceChainPath};
use chainscale_core::provisioning::{InstanceId, Inventory, ProvisionError};
use chainscale_core::reactive::StatsSample;
use chainscale_core::routing::{
    select_instance, Addr, CallSession, DropReason, Endpoint, FlowPacket, FlowTag, HopCode, LocationService,
    RouteDecision, RoutingState,
};
use chainscale_core::topology::{path_delay, DatacenterId, DelayMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, PathMode, ScenarioConfig};
use crate::report::{
    mean, percentile, DecisionRecord, FlowOutcome, FlowRecord, IntervalRecord, MetricsReport, Record, Summary,
    TxnKind, TxnRecord, SCHEMA_VERSION,
};
use crate::traffic::{generate_traffic, Traffic, TrafficSchedule};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("provisioning: {0}")]
    Provision(#[from] ProvisionError),
    #[error("forecast: {0}")]
    Forecast(#[from] ForecastError),
}

const SEND_PORT: u16 = 4000;
const RECV_PORT: u16 = 4001;
const ROUND_RETRY_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    UserArrival(usize),
    CallSetup(usize),
    MediaStart(usize),
    RouteHop { flow: usize, dc: usize, tag: Option<FlowTag>, hop: HopCode },
    CallEnd(usize),
    Tick,
    IntervalEnd(u64),
    RoundRetry,
    Deliver(Box<ControllerMsg>),
    GlobalTimer(u64),
    DelayChange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FlowStatus {
    Routing,
    Active,
    Dropped(FlowOutcome),
    Ended,
}

#[derive(Debug, Clone)]
struct Flow {
    call: usize,
    entry: usize,
    exit: usize,
    src: (Addr, u16),
    created_ms: u64,
    start_ms: Option<u64>,
    end_ms: Option<u64>,
    admitted_interval: u64,
    path: Vec<usize>,
    visited: Vec<usize>,
    chain: Vec<(u8, usize, InstanceId)>,
    status: FlowStatus,
    offered: f64,
    delivered: f64,
    rtt_sum: f64,
    rtt_n: u64,
}

impl Flow {
    fn at_stage(&self, stage: u8) -> Option<(usize, InstanceId)> {
        self.chain.iter().find(|c| c.0 == stage).map(|c| (c.1, c.2))
    }
}

#[derive(Debug, Clone)]
struct CallState {
    caller: usize,
    callee: usize,
    flows: Vec<usize>,
    session: Option<CallSession>,
}

/// One scenario run.
pub struct Simulation {
    cfg: ScenarioConfig,
    catalog: Catalog,
    n: usize,
    m: usize,
    home: usize,
    global_dc: usize,
    pps: f64,
    rng: ChaCha8Rng,
    now: u64,
    seq: u64,
    heap: BinaryHeap<Reverse<(u64, u64)>>,
    events: BTreeMap<u64, Event>,
    delays: DelayMatrix,
    global: Option<GlobalController>,
    locals: Vec<LocalController>,
    locator: LocationService,
    traffic: Traffic,
    callee_of: Vec<Option<usize>>,
    reg_done: Vec<u64>,
    calls: Vec<CallState>,
    flows: Vec<Flow>,
    sending: BTreeSet<usize>,
    ended_outcome: BTreeMap<usize, FlowStatus>,
    cp_count: Vec<BTreeMap<InstanceId, f64>>,
    cp_batch: Vec<Vec<f64>>,
    dp_input: BTreeMap<(usize, InstanceId), f64>,
    timers: BTreeSet<u64>,
    pending_rounds: u64,
    messages_lost: u64,
    max_skew: u64,
    txns: Vec<TxnRecord>,
    intervals: Vec<IntervalRecord>,
    decisions: Vec<DecisionRecord>,
    last_decision: Option<u64>,
}

/// Runs `cfg` with `seed` to its horizon.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<MetricsReport, SimError> {
    let mut sim = Simulation::new(cfg.clone(), seed)?;
    sim.run()?;
    Ok(sim.finish())
}

fn queue_delay(rho: f64, service_ms: f64) -> f64 {
    // M/D/1 waiting time up to 95 % utilisation, then linear backlog growth.
    let knee = 0.95;
    if rho < knee {
        service_ms + service_ms * rho / (2.0 * (1.0 - rho))
    } else {
        service_ms + service_ms * knee / (2.0 * (1.0 - knee)) + (rho - knee) * 1000.0
    }
}

fn user_addr(user: usize) -> Addr {
    Addr(0xc000_0000 | user as u32)
}

fn indices(p: &ServiceChainPath) -> Vec<usize> {
    p.hops().iter().map(|d| d.index()).collect()
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig, seed: u64) -> Result<Self, SimError> {
        cfg.validate()?;
        let catalog = cfg.catalog();
        let n = cfg.datacenter_count();
        let m = catalog.stage_count();
        let home = cfg.dc_index(&cfg.topology.scscf_home).expect("validated");
        let global_dc = cfg.dc_index(&cfg.topology.global_dc).expect("validated");
        let delays = cfg.delays();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let traffic = generate_traffic(&TrafficSchedule::from_config(&cfg), cfg.traffic.pairing, &mut rng);

        let initial_paths = match cfg.paths.mode {
            PathMode::Scripted => cfg.scripted_tables().into_iter().next().unwrap_or_else(|| PathTable::all_at_entry(n, m)),
            PathMode::Planned => PathTable::all_at_entry(n, m),
        };
        let local_cfg = LocalConfig {
            tau: cfg.scaling.tau,
            persistence: cfg.scaling.persistence,
            stage_floor: cfg.scaling.stage_floor,
        };
        let mut locals = Vec::with_capacity(n);
        for d in 0..n {
            let mut inv = Inventory::new(d.into(), n);
            for role in catalog.roles() {
                if role != VnfRole::Scscf || d == home {
                    inv.bootstrap(catalog.vnf(role), 1)?;
                }
            }
            for extra in cfg.initial.iter().filter(|e| cfg.dc_index(&e.dc) == Some(d)) {
                if let Some(t) = catalog.types().iter().find(|t| t.name == extra.vnf) {
                    inv.bootstrap(t, extra.count)?;
                }
            }
            let routing = RoutingState::new(d.into(), initial_paths.clone(), cfg.tagging);
            locals.push(LocalController::new(local_cfg, catalog.clone(), routing, inv));
        }
        let global = cfg.strategy.runs_rounds().then(|| {
            GlobalController::new(
                GlobalConfig {
                    datacenters: n,
                    catalog: catalog.clone(),
                    scscf_home: home.into(),
                    threshold_ms: cfg.scaling.threshold_ms,
                    forecast: cfg.forecast(),
                    retransmit_ms: cfg.scaling.retransmit_ms,
                    paths: match cfg.paths.mode {
                        PathMode::Planned => PathPolicy::Planned,
                        PathMode::Scripted => PathPolicy::Scripted(cfg.scripted_tables()),
                    },
                    provisioning: cfg.paths.provisioning,
                },
                delays.clone(),
                initial_paths.clone(),
            )
        });
        let mut callee_of = vec![None; traffic.users.len()];
        for c in &traffic.calls {
            callee_of[c.callee] = Some(c.id);
        }
        let calls =
            traffic.calls.iter().map(|c| CallState { caller: c.caller, callee: c.callee, flows: Vec::new(), session: None }).collect();
        let locator = LocationService { locations: BTreeMap::new(), binding: cfg.binding() };

        let mut sim = Simulation {
            pps: cfg.media.packets_per_second(),
            catalog,
            n,
            m,
            home,
            global_dc,
            rng,
            now: 0,
            seq: 0,
            heap: BinaryHeap::new(),
            events: BTreeMap::new(),
            delays,
            global,
            locals,
            locator,
            reg_done: vec![0; traffic.users.len()],
            callee_of,
            traffic,
            calls,
            flows: Vec::new(),
            sending: BTreeSet::new(),
            ended_outcome: BTreeMap::new(),
            cp_count: vec![BTreeMap::new(); n],
            cp_batch: vec![vec![0.0; n]; n],
            dp_input: BTreeMap::new(),
            timers: BTreeSet::new(),
            pending_rounds: 0,
            messages_lost: 0,
            max_skew: 0,
            txns: Vec::new(),
            intervals: Vec::new(),
            decisions: Vec::new(),
            last_decision: None,
            cfg,
        };
        sim.seed_events();
        Ok(sim)
    }

    fn horizon_ms(&self) -> u64 {
        self.cfg.horizon_s * 1000
    }

    fn schedule(&mut self, at: u64, ev: Event) {
        if at > self.horizon_ms() {
            return;
        }
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((at, seq)));
        self.events.insert(seq, ev);
    }

    fn seed_events(&mut self) {
        let horizon = self.horizon_ms();
        let arrivals: Vec<(u64, usize)> = self.traffic.users.iter().map(|u| (u.at_ms, u.user)).collect();
        for (at, u) in arrivals {
            self.schedule(at, Event::UserArrival(u));
        }
        for (i, c) in self.cfg.delay_changes.clone().iter().enumerate() {
            self.schedule(c.at_s * 1000, Event::DelayChange(i));
        }
        let mut t = 1000;
        while t <= horizon {
            self.schedule(t, Event::Tick);
            t += 1000;
        }
        let len = self.cfg.scaling.interval_s * 1000;
        let mut k = 1;
        while k * len <= horizon {
            self.schedule(k * len, Event::IntervalEnd(k));
            k += 1;
        }
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        while let Some(Reverse((at, seq))) = self.heap.pop() {
            self.now = at;
            let ev = self.events.remove(&seq).expect("scheduled event");
            self.step(ev)?;
        }
        self.now = self.horizon_ms();
        Ok(())
    }

    fn step(&mut self, ev: Event) -> Result<(), SimError> {
        match ev {
            Event::UserArrival(u) => self.on_user(u),
            Event::CallSetup(c) => self.on_call_setup(c),
            Event::MediaStart(c) => self.on_media_start(c),
            Event::RouteHop { flow, dc, tag, hop } => self.on_route_hop(flow, dc, tag, hop),
            Event::CallEnd(c) => self.on_call_end(c),
            Event::Tick => self.on_tick()?,
            Event::IntervalEnd(k) => {
                self.record_interval(k);
                if self.global.is_some() {
                    self.pending_rounds += 1;
                    self.maybe_start_round()?;
                }
            }
            Event::RoundRetry => self.maybe_start_round()?,
            Event::Deliver(msg) => self.on_deliver(*msg)?,
            Event::GlobalTimer(t) => {
                self.timers.remove(&t);
                let out = self.global.as_mut().map(|g| g.poll(self.now)).unwrap_or_default();
                for m in out {
                    self.send(m);
                }
                self.arm_timer();
            }
            Event::DelayChange(i) => {
                let c = self.cfg.delay_changes[i].clone();
                for [a, b] in &c.pairs {
                    let (a, b) = (self.cfg.dc_index(a).expect("validated"), self.cfg.dc_index(b).expect("validated"));
                    self.delays.set_symmetric(a.into(), b.into(), c.delay_ms);
                }
            }
        }
        Ok(())
    }

    fn delay_ms(&self, a: usize, b: usize) -> f64 {
        self.delays.get(a.into(), b.into())
    }

    // --- control plane -------------------------------------------------

    /// Runs one SIP transaction through the P-CSCF of `entry`, the S-CSCF
    /// at home and, for call transactions, the P-CSCF of `exit`.
    fn cp_transaction(&mut self, kind: TxnKind, entry: usize, exit: usize) -> f64 {
        let home = self.home;
        let mut hops = vec![(entry, VnfRole::Pcscf), (home, VnfRole::Scscf)];
        let mut t = 2.0 * self.delay_ms(entry, home);
        if kind != TxnKind::Register {
            hops.push((exit, VnfRole::Pcscf));
            t += 2.0 * self.delay_ms(home, exit);
        }
        let service = self.cfg.media.cp_processing_ms;
        for (dc, role) in hops {
            let inv = &mut self.locals[dc].inventory;
            match select_instance(inv.working(role), self.now) {
                Ok(id) => {
                    let load = self.cp_count[dc].get(&id).copied().unwrap_or(0.0);
                    let inst = inv.get_mut(id).expect("selected instance");
                    let rho = inst.assigned_load / inst.capacity;
                    inst.assigned_load += 1.0;
                    t += queue_delay(rho, service);
                    if !inst.is_ready(self.now) {
                        t += (inst.ready_at_ms - self.now) as f64;
                    }
                    self.cp_count[dc].insert(id, load + 1.0);
                }
                Err(_) => t += 1000.0,
            }
        }
        let cell = if kind == TxnKind::Register { entry } else { exit };
        self.cp_batch[entry][cell] += 1.0;
        self.txns.push(TxnRecord { kind, entry, exit, start_ms: self.now, completion_ms: t });
        t
    }

    fn on_user(&mut self, u: usize) {
        let dc = self.traffic.users[u].dc;
        let key = self.cfg.topology.datacenters[dc].clone();
        self.locator.locations.insert(user_addr(u), key);
        let t = self.cp_transaction(TxnKind::Register, dc, dc);
        self.reg_done[u] = self.now + t.ceil() as u64;
        if let Some(c) = self.callee_of[u] {
            let caller = self.calls[c].caller;
            let at = self.reg_done[u].max(self.reg_done[caller]);
            self.schedule(at, Event::CallSetup(c));
        }
    }

    fn on_call_setup(&mut self, c: usize) {
        let (e, x) = (self.traffic.users[self.calls[c].caller].dc, self.traffic.users[self.calls[c].callee].dc);
        let t = self.cp_transaction(TxnKind::Invite, e, x);
        self.schedule(self.now + t.ceil() as u64, Event::MediaStart(c));
    }

    fn endpoint(&self, user: usize) -> Endpoint {
        Endpoint {
            user: format!("u{user}"),
            addr: user_addr(user),
            send_port: SEND_PORT,
            recv_port: RECV_PORT,
            entry: self.traffic.users[user].dc.into(),
        }
    }

    fn on_media_start(&mut self, c: usize) {
        let session = CallSession { caller: self.endpoint(self.calls[c].caller), callee: self.endpoint(self.calls[c].callee) };
        self.locals[session.caller.entry.index()].routing.sessions.install_caller_side(&session);
        self.locals[session.callee.entry.index()].routing.sessions.install_callee_side(&session);
        for (src, dst) in [(&session.caller, &session.callee), (&session.callee, &session.caller)] {
            let id = self.flows.len();
            self.flows.push(Flow {
                call: c,
                entry: src.entry.index(),
                exit: dst.entry.index(),
                src: (src.addr, src.send_port),
                created_ms: self.now,
                start_ms: None,
                end_ms: None,
                admitted_interval: 0,
                path: Vec::new(),
                visited: Vec::new(),
                chain: Vec::new(),
                status: FlowStatus::Routing,
                offered: 0.0,
                delivered: 0.0,
                rtt_sum: 0.0,
                rtt_n: 0,
            });
            self.calls[c].flows.push(id);
            let entry = src.entry.index();
            self.schedule(self.now, Event::RouteHop { flow: id, dc: entry, tag: None, hop: HopCode(0) });
        }
        self.calls[c].session = Some(session);
        let end = self.now + self.cfg.media.call_duration_s * 1000;
        self.schedule(end, Event::CallEnd(c));
    }

    fn on_route_hop(&mut self, f: usize, dc: usize, tag: Option<FlowTag>, hop: HopCode) {
        if self.flows[f].status != FlowStatus::Routing {
            return;
        }
        let pkt = FlowPacket { src_addr: self.flows[f].src.0, src_port: self.flows[f].src.1, tag, hop };
        let local = &self.locals[dc];
        let decision = local.routing.route_flow(&pkt, &local.inventory, &self.locator, self.now);
        if tag.is_none() {
            self.flows[f].admitted_interval = local.interval();
        }
        self.flows[f].visited.push(dc);
        let pps = self.pps;
        let attach = |sim: &mut Simulation, stages: &[(u8, InstanceId)]| {
            for &(s, id) in stages {
                sim.locals[dc].inventory.attach_flow(id, pps);
                sim.flows[f].chain.push((s, dc, id));
            }
        };
        match decision {
            RouteDecision::Forward { next, tag, hop, stages, path } => {
                attach(self, &stages);
                if self.flows[f].path.is_empty() {
                    self.flows[f].path = indices(&path);
                }
                let at = self.now + self.delay_ms(dc, next.index()).round() as u64;
                self.schedule(at, Event::RouteHop { flow: f, dc: next.index(), tag: Some(tag), hop });
            }
            RouteDecision::Deliver { stages, path, .. } => {
                attach(self, &stages);
                if self.flows[f].path.is_empty() {
                    self.flows[f].path = indices(&path);
                }
                self.flows[f].status = FlowStatus::Active;
                self.flows[f].start_ms = Some(self.now);
                self.sending.insert(f);
            }
            RouteDecision::Drop(reason) => {
                let outcome = match reason {
                    DropReason::NotOnPath => FlowOutcome::NotOnPath,
                    _ => FlowOutcome::Unroutable,
                };
                self.flows[f].status = FlowStatus::Dropped(outcome);
                self.flows[f].start_ms = Some(self.now);
                self.sending.insert(f);
            }
        }
    }

    fn end_flow(&mut self, f: usize) {
        let flow = &mut self.flows[f];
        if flow.status == FlowStatus::Ended {
            return;
        }
        if flow.status == FlowStatus::Routing {
            flow.status = FlowStatus::Dropped(FlowOutcome::Unfinished);
        }
        let outcome = flow.status;
        flow.end_ms = Some(self.now);
        for &(_, dc, id) in &flow.chain {
            self.locals[dc].inventory.detach_flow(id, self.pps);
        }
        self.sending.remove(&f);
        // Keep the outcome readable after the flow ends.
        self.flows[f].status = FlowStatus::Ended;
        self.flows[f].chain.clear();
        self.ended_outcome.insert(f, outcome);
    }

    fn on_call_end(&mut self, c: usize) {
        let (e, x) = (self.traffic.users[self.calls[c].caller].dc, self.traffic.users[self.calls[c].callee].dc);
        self.cp_transaction(TxnKind::Bye, e, x);
        for f in self.calls[c].flows.clone() {
            self.end_flow(f);
        }
        if let Some(s) = self.calls[c].session.take() {
            self.locals[e].routing.sessions.remove(&s);
            self.locals[x].routing.sessions.remove(&s);
        }
    }

    // --- fluid media and statistics -----------------------------------

    fn effective_capacity(&self, dc: usize, id: InstanceId) -> f64 {
        match self.locals[dc].inventory.get(id) {
            Some(i) if i.is_alive() && i.is_ready(self.now) => i.capacity,
            _ => 0.0,
        }
    }

    /// One second of media: every sending flow offers its rate to its chain
    /// in stage order; an instance offered more than its capacity drops the
    /// excess proportionally and passes on the rest.
    fn media_tick(&mut self) {
        let active: Vec<usize> = self.sending.iter().copied().collect();
        let mut rate = vec![self.pps; active.len()];
        let mut saturated = vec![0u32; active.len()];
        self.dp_input.clear();
        for stage in 1..=self.m as u8 {
            let mut offered: BTreeMap<(usize, InstanceId), f64> = BTreeMap::new();
            for (k, &f) in active.iter().enumerate() {
                if let Some(key) = self.flows[f].at_stage(stage) {
                    *offered.entry(key).or_default() += rate[k];
                }
            }
            let mut ratio: BTreeMap<(usize, InstanceId), f64> = BTreeMap::new();
            for (&key, &off) in &offered {
                let cap = self.effective_capacity(key.0, key.1);
                ratio.insert(key, if off > cap { cap / off } else { 1.0 });
                *self.dp_input.entry(key).or_default() += off;
            }
            for (k, &f) in active.iter().enumerate() {
                if let Some(key) = self.flows[f].at_stage(stage) {
                    let r = ratio[&key];
                    rate[k] *= r;
                    if r < 1.0 {
                        saturated[k] += 1;
                    }
                }
            }
        }
        let m = self.m as f64;
        for (k, &f) in active.iter().enumerate() {
            let flow = &self.flows[f];
            let delivering = flow.status == FlowStatus::Active;
            let rtt = delivering.then(|| {
                let hops: Vec<DatacenterId> = flow.visited.iter().map(|&d| d.into()).collect();
                2.0 * path_delay(&hops, &self.delays)
                    + self.cfg.media.hop_processing_ms * m
                    + self.cfg.media.overload_penalty_ms * saturated[k] as f64
            });
            let flow = &mut self.flows[f];
            flow.offered += self.pps;
            if let Some(rtt) = rtt {
                flow.delivered += rate[k];
                flow.rtt_sum += rtt;
                flow.rtt_n += 1;
            }
        }
    }

    fn on_tick(&mut self) -> Result<(), SimError> {
        self.media_tick();
        let secs = self.now / 1000;
        for d in 0..self.n {
            let cp = std::mem::take(&mut self.cp_count[d]);
            let ids: Vec<InstanceId> = self.locals[d].inventory.instances().filter(|i| i.is_working()).map(|i| i.id).collect();
            for id in ids {
                let inst = self.locals[d].inventory.get(id).expect("listed");
                let cap = inst.capacity;
                let ready = inst.is_ready(self.now);
                let (load, pkts) = if inst.role.is_control_plane() {
                    let l = cp.get(&id).copied().unwrap_or(0.0);
                    (l, 2.0 * l)
                } else {
                    let l = self.dp_input.get(&(d, id)).copied().unwrap_or(0.0);
                    (l, l)
                };
                if inst.role.is_control_plane() {
                    self.locals[d].inventory.get_mut(id).expect("listed").assigned_load = load;
                }
                let u = if ready { (load / cap).min(1.0) } else { 0.0 };
                let sample = StatsSample {
                    cpu_pct: 100.0 * u,
                    mem_pct: 20.0 + 25.0 * u,
                    input_pps: if ready { pkts } else { 0.0 },
                    timestamp: secs,
                };
                self.locals[d].record_stats(id, sample);
            }
            let reacts = self.cfg.strategy.reacts();
            self.locals[d].reactive_step(self.now, reacts)?;
        }

        if self.global.is_some() {
            let mut dp = vec![vec![0.0; self.n]; self.n];
            for &f in &self.sending {
                let fl = &self.flows[f];
                dp[fl.entry][fl.exit] += self.pps;
            }
            let dp_every = self.cfg.scaling.dp_report_s.max(1);
            let cp_every = self.cfg.scaling.cp_report_s.max(1);
            for (d, dp_row) in dp.iter().enumerate() {
                let delays: Vec<(DatacenterId, f64)> = (0..self.n).map(|x| (x.into(), self.delay_ms(d, x))).collect();
                if secs.is_multiple_of(dp_every) {
                    let rates = dp_row.iter().enumerate().map(|(x, &r)| (x.into(), r)).collect();
                    let msg = self.locals[d].report(ReportKind::DataPlane, rates, delays.clone());
                    self.send(msg);
                }
                if secs.is_multiple_of(cp_every) {
                    let batch = std::mem::replace(&mut self.cp_batch[d], vec![0.0; self.n]);
                    let rates = batch.iter().enumerate().map(|(x, &c)| (x.into(), c / cp_every as f64)).collect();
                    let msg = self.locals[d].report(ReportKind::ControlPlane, rates, Vec::new());
                    self.send(msg);
                }
            }
        }
        Ok(())
    }

    // --- controller transport -----------------------------------------

    fn node_dc(&self, node: Node) -> usize {
        match node {
            Node::Global => self.global_dc,
            Node::Local(d) => d.index(),
        }
    }

    fn send(&mut self, msg: ControllerMsg) {
        let t = &self.cfg.transport;
        if t.loss > 0.0 && self.rng.random::<f64>() < t.loss {
            self.messages_lost += 1;
            return;
        }
        let mut delay = (self.delay_ms(self.node_dc(msg.from), self.node_dc(msg.to)).round() as u64).max(t.min_delay_ms);
        if matches!(msg.body, MsgBody::EnterNewInterval) && t.enter_skew_ms > 0 {
            delay += self.rng.random_range(0..=t.enter_skew_ms);
        }
        self.schedule(self.now + delay, Event::Deliver(Box::new(msg)));
    }

    fn arm_timer(&mut self) {
        if let Some(t) = self.global.as_ref().and_then(GlobalController::next_timer) {
            if self.timers.insert(t) {
                self.schedule(t, Event::GlobalTimer(t));
            }
        }
    }

    fn maybe_start_round(&mut self) -> Result<(), SimError> {
        let Some(g) = self.global.as_mut() else { return Ok(()) };
        if self.pending_rounds == 0 {
            return Ok(());
        }
        if g.phase() != Phase::Idle {
            self.schedule(self.now + ROUND_RETRY_MS, Event::RoundRetry);
            return Ok(());
        }
        self.pending_rounds -= 1;
        let out = g.start_round(self.now)?;
        for m in out {
            self.send(m);
        }
        self.arm_timer();
        Ok(())
    }

    fn on_deliver(&mut self, msg: ControllerMsg) -> Result<(), SimError> {
        match msg.to {
            Node::Local(d) => {
                if let Some(resp) = self.locals[d.index()].handle(&msg, self.now)? {
                    self.send(resp);
                }
                self.check_skew();
            }
            Node::Global => {
                let Some(g) = self.global.as_mut() else { return Ok(()) };
                let out = g.handle(&msg, self.now);
                let decided = g.last_decision().map(|d| d.interval);
                if decided.is_some() && decided != self.last_decision {
                    self.last_decision = decided;
                    self.record_decision();
                }
                for m in out {
                    self.send(m);
                }
                self.arm_timer();
                if self.global.as_ref().is_some_and(|g| g.phase() == Phase::Idle) {
                    self.maybe_start_round()?;
                }
            }
        }
        Ok(())
    }

    fn check_skew(&mut self) {
        let it = self.locals.iter().map(LocalController::interval);
        let (lo, hi) = (it.clone().min().unwrap_or(0), it.max().unwrap_or(0));
        let mut skew = hi - lo;
        if let Some(g) = &self.global {
            skew = skew.max(hi.saturating_sub(g.interval())).max(g.interval().saturating_sub(lo));
        }
        self.max_skew = self.max_skew.max(skew);
    }

    // --- records -------------------------------------------------------

    fn record_decision(&mut self) {
        let Some(d) = self.global.as_ref().and_then(|g| g.last_decision()) else { return };
        let rec = DecisionRecord {
            interval: d.interval,
            decided_ms: self.now,
            paths: d.paths.iter().map(|(_, p)| indices(p)).collect(),
            fallbacks: d.dp.fallbacks.iter().map(|p| [p.entry.index(), p.exit.index()]).collect(),
            targets: d.provision.targets.iter().map(|(&(dc, role), &t)| (dc.index(), self.catalog.vnf(role).name.clone(), t)).collect(),
            predicted_dp_pps: d.dp_load.total(),
        };
        self.decisions.push(rec);
    }

    fn record_interval(&mut self, k: u64) {
        let roles: Vec<VnfRole> = self.catalog.roles().collect();
        let counts = |inv: &Inventory| roles.iter().map(|&r| inv.counts(r)).collect::<Vec<_>>();
        let per_dc: Vec<_> = self.locals.iter().map(|l| counts(&l.inventory)).collect();
        self.intervals.push(IntervalRecord {
            index: k,
            time_ms: self.now,
            global_interval: self.global.as_ref().map(GlobalController::interval),
            local_intervals: self.locals.iter().map(LocalController::interval).collect(),
            working: per_dc.iter().map(|c| c.iter().map(|c| c.working).collect()).collect(),
            buffered: per_dc.iter().map(|c| c.iter().map(|c| c.buffered).collect()).collect(),
            created_total: self.locals.iter().map(|l| l.inventory.created_count()).sum(),
            paths: self.locals[0].routing.paths.current.iter().map(|(_, p)| indices(p)).collect(),
        });
    }

    pub fn finish(mut self) -> MetricsReport {
        let active: Vec<usize> = (0..self.flows.len()).collect();
        for f in active {
            self.end_flow(f);
        }
        let interval_ms = self.cfg.scaling.interval_s * 1000;
        let buckets = (self.horizon_ms() / interval_ms + 1) as usize;
        let mut created_by_interval = vec![vec![0; buckets]; self.n];
        let mut created_by_role: BTreeMap<String, usize> = BTreeMap::new();
        for (d, l) in self.locals.iter().enumerate() {
            for &(role, _, at) in l.inventory.created_log() {
                created_by_interval[d][((at / interval_ms) as usize).min(buckets - 1)] += 1;
                *created_by_role.entry(self.catalog.vnf(role).name.clone()).or_default() += 1;
            }
        }

        let mut records = Vec::new();
        let mut losses = Vec::new();
        let mut rtts = Vec::new();
        let (mut offered, mut delivered) = (0.0, 0.0);
        let (mut full, mut zero, mut not_on_path) = (0, 0, 0);
        for (i, fl) in self.flows.iter().enumerate() {
            let outcome = match self.ended_outcome.get(&i) {
                Some(FlowStatus::Dropped(o)) => *o,
                _ => FlowOutcome::Delivered,
            };
            let loss = if fl.offered > 0.0 {
                100.0 * (1.0 - fl.delivered / fl.offered).clamp(0.0, 1.0)
            } else if outcome == FlowOutcome::Delivered {
                0.0
            } else {
                100.0
            };
            // Flows still being set up at the horizon carry no loss sample.
            if outcome != FlowOutcome::Unfinished {
                if loss >= 100.0 - 1e-9 {
                    full += 1;
                }
                if loss <= 1e-9 {
                    zero += 1;
                }
                losses.push(loss);
                offered += fl.offered;
                delivered += fl.delivered;
            }
            if outcome == FlowOutcome::NotOnPath {
                not_on_path += 1;
            }
            let rtt = (fl.rtt_n > 0).then(|| fl.rtt_sum / fl.rtt_n as f64);
            if let Some(r) = rtt {
                rtts.push(r);
            }
            records.push(Record::Flow(FlowRecord {
                flow: i,
                call: fl.call,
                entry: fl.entry,
                exit: fl.exit,
                start_ms: fl.start_ms.unwrap_or(fl.created_ms),
                end_ms: fl.end_ms.unwrap_or(self.horizon_ms()),
                admitted_interval: fl.admitted_interval,
                path: fl.path.clone(),
                visited: fl.visited.clone(),
                outcome,
                offered_pkts: fl.offered,
                delivered_pkts: fl.delivered,
                loss_pct: loss,
                rtt_ms: rtt,
            }));
        }
        let completions: Vec<f64> = self.txns.iter().map(|t| t.completion_ms).collect();
        let global = self.global.as_ref();
        let summary = Summary {
            schema: SCHEMA_VERSION,
            scenario: self.cfg.name.clone(),
            strategy: self.cfg.strategy.name().into(),
            tagging: self.cfg.tagging,
            seed: self.cfg.seed,
            horizon_s: self.cfg.horizon_s,
            users: self.traffic.users.len(),
            calls: self.calls.iter().filter(|c| !c.flows.is_empty()).count(),
            flows: self.flows.len(),
            flows_full_loss: full,
            flows_zero_loss: zero,
            flows_not_on_path: not_on_path,
            dp_loss_mean_pct: mean(&losses),
            dp_loss_packet_pct: if offered > 0.0 { 100.0 * (1.0 - delivered / offered) } else { 0.0 },
            dp_loss_p99_pct: percentile(&losses, 99.0),
            rtt_mean_ms: mean(&rtts),
            rtt_p95_ms: percentile(&rtts, 95.0),
            rtt_below_100ms_share: if rtts.is_empty() {
                0.0
            } else {
                rtts.iter().filter(|&&r| r < 100.0).count() as f64 / rtts.len() as f64
            },
            cp_transactions: self.txns.len(),
            cp_completion_mean_ms: mean(&completions),
            cp_completion_p95_ms: percentile(&completions, 95.0),
            instances_created: self.locals.iter().map(|l| l.inventory.created_count()).sum(),
            instances_bootstrapped: self.locals.iter().map(|l| l.inventory.bootstrapped_count()).sum(),
            instances_destroyed: self
                .locals
                .iter()
                .map(|l| self.catalog.roles().map(|r| l.inventory.counts(r).destroyed).sum::<usize>())
                .sum(),
            created_by_dc: self.locals.iter().map(|l| l.inventory.created_count()).collect(),
            created_by_role,
            created_by_interval,
            rounds_completed: global.map_or(0, GlobalController::rounds_completed),
            controller_transmissions: global.map_or(0, GlobalController::transmissions),
            messages_lost: self.messages_lost,
            stale_reports: global.map_or(0, GlobalController::stale_reports),
            max_interval_skew: self.max_skew,
            suspended_ms: self.locals.iter().map(|l| l.suspended_ms(self.horizon_ms())).collect(),
        };
        records.extend(self.txns.drain(..).map(Record::Txn));
        records.extend(self.intervals.drain(..).map(Record::Interval));
        records.extend(self.decisions.drain(..).map(Record::Decision));
        MetricsReport { summary, records }
    }
}
