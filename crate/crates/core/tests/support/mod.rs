//! Brute-force oracles and a lossy message harness shared by the
//! integration suites. Nothing here calls the code under test to compute
//! an expected value.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use chainscale_core::catalog::{Catalog, VnfRole};
use chainscale_core::forecast::Ar1Config;
use chainscale_core::orchestration::{
    ControllerMsg, GlobalConfig, GlobalController, LocalConfig, LocalController, Node, PathPolicy, Phase,
    ReportKind,
};
use chainscale_core::planner::PathTable;
use chainscale_core::provisioning::Inventory;
use chainscale_core::routing::RoutingState;
use chainscale_core::topology::{DatacenterId, DelayMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Instances of `unit` capacity needed to serve `demand` on top of `avail`.
pub fn need(demand: f64, avail: f64, unit: f64) -> u64 {
    if demand <= avail {
        0
    } else {
        ((demand - avail) / unit).ceil() as u64
    }
}

/// Every monotone placement of `m` stages on a `k`-datacenter path:
/// positions start at datacenter 1 or 2, step by 0 or 1, and end at
/// datacenter k−1 or k (1-based).
pub fn monotone_placements(k: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn rec(k: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            let last = *cur.last().unwrap();
            if last + 1 >= k {
                out.push(cur.clone());
            }
            return;
        }
        let options: Vec<usize> = match cur.last() {
            None => vec![1, 2],
            Some(&p) => vec![p, p + 1],
        };
        for o in options {
            if o <= k {
                cur.push(o);
                rec(k, m, cur, out);
                cur.pop();
            }
        }
    }
    rec(k, m, &mut cur, &mut out);
    out
}

/// Cheapest monotone placement cost, or `None` when no placement exists.
/// `avail[dc][stage-1]` and `unit[stage-1]`.
pub fn brute_place(path: &[usize], avail: &[Vec<f64>], unit: &[f64], demand: f64) -> Option<u64> {
    monotone_placements(path.len(), unit.len())
        .into_iter()
        .map(|pl| pl.iter().enumerate().map(|(j, &i)| need(demand, avail[path[i - 1]][j], unit[j])).sum())
        .min()
}

/// Collapse runs of equal neighbours, then require distinct entries.
pub fn collapse_distinct(hops: &[usize]) -> bool {
    let mut c: Vec<usize> = Vec::new();
    for &h in hops {
        if c.last() != Some(&h) {
            c.push(h);
        }
    }
    let mut s = c.clone();
    s.sort_unstable();
    s.dedup();
    s.len() == c.len()
}

/// Minimum delay over simple paths from `a` to `b` with at most `max_edges` links.
pub fn min_delay_simple(a: usize, b: usize, d: &[Vec<f64>], max_edges: usize) -> f64 {
    fn rec(u: usize, b: usize, d: &[Vec<f64>], left: usize, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if u == b {
            *best = best.min(acc);
            return;
        }
        if left == 0 {
            return;
        }
        for v in 0..d.len() {
            if !seen[v] {
                seen[v] = true;
                rec(v, b, d, left - 1, seen, acc + d[u][v], best);
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; d.len()];
    seen[a] = true;
    let mut best = f64::INFINITY;
    rec(a, b, d, max_edges, &mut seen, 0.0, &mut best);
    best
}

pub fn hops_delay(hops: &[usize], d: &[Vec<f64>]) -> f64 {
    hops.windows(2).map(|w| d[w[0]][w[1]]).sum()
}

/// A global controller, `n` locals and a network that loses, delays and
/// duplicates messages.
pub struct LossyNet {
    pub global: GlobalController,
    pub locals: Vec<LocalController>,
    pub rng: ChaCha8Rng,
    pub loss: f64,
    pub dup: f64,
    pub now: u64,
    seq: u64,
    queue: BinaryHeap<Reverse<(u64, u64)>>,
    msgs: BTreeMap<u64, ControllerMsg>,
    pub max_skew: u64,
    pub duplicate_checks: u64,
    pub duplicate_violations: u64,
}

impl LossyNet {
    pub fn new(n: usize, loss: f64, dup: f64, seed: u64) -> Self {
        let cat = Catalog::reference();
        let m = cat.stage_count();
        let table = PathTable::all_at_entry(n, m);
        let global = GlobalController::new(
            GlobalConfig {
                datacenters: n,
                catalog: cat.clone(),
                scscf_home: DatacenterId(0),
                threshold_ms: 100.0,
                forecast: Ar1Config::default(),
                retransmit_ms: 500,
                paths: PathPolicy::Planned,
                provisioning: true,
            },
            DelayMatrix::uniform(n, 20.0),
            table.clone(),
        );
        let locals = (0..n)
            .map(|d| {
                let mut inv = Inventory::new(d.into(), n);
                for role in cat.roles() {
                    if role != VnfRole::Scscf || d == 0 {
                        inv.bootstrap(cat.vnf(role), 1).unwrap();
                    }
                }
                LocalController::new(LocalConfig::default(), cat.clone(), RoutingState::new(d.into(), table.clone(), true), inv)
            })
            .collect();
        LossyNet {
            global,
            locals,
            rng: ChaCha8Rng::seed_from_u64(seed),
            loss,
            dup,
            now: 0,
            seq: 0,
            queue: BinaryHeap::new(),
            msgs: BTreeMap::new(),
            max_skew: 0,
            duplicate_checks: 0,
            duplicate_violations: 0,
        }
    }

    pub fn send(&mut self, msg: ControllerMsg) {
        let copies = if self.rng.random::<f64>() < self.dup { 2 } else { 1 };
        for _ in 0..copies {
            if self.rng.random::<f64>() < self.loss {
                continue;
            }
            let at = self.now + self.rng.random_range(1..=120);
            self.queue.push(Reverse((at, self.seq)));
            self.msgs.insert(self.seq, msg.clone());
            self.seq += 1;
        }
    }

    fn skew(&self) -> u64 {
        let li: Vec<u64> = self.locals.iter().map(|l| l.interval()).collect();
        let (lo, hi) = (*li.iter().min().unwrap(), *li.iter().max().unwrap());
        let g = self.global.interval();
        (hi - lo).max(hi.abs_diff(g)).max(lo.abs_diff(g))
    }

    fn deliver(&mut self, msg: ControllerMsg) {
        match msg.to {
            Node::Local(d) => {
                let l = &mut self.locals[d.index()];
                let resp = l.handle(&msg, self.now).unwrap();
                if msg.body.is_request() {
                    // A second copy must not move the state.
                    let before = serde_json::to_string(&*l).unwrap();
                    let again = l.handle(&msg, self.now).unwrap();
                    if serde_json::to_string(&*l).unwrap() != before || again != resp {
                        self.duplicate_violations += 1;
                    }
                    self.duplicate_checks += 1;
                }
                if let Some(r) = resp {
                    self.send(r);
                }
            }
            Node::Global => {
                for m in self.global.handle(&msg, self.now) {
                    self.send(m);
                }
            }
        }
        self.max_skew = self.max_skew.max(self.skew());
    }

    /// Runs one round to completion; returns false if it does not finish
    /// within `budget_ms`.
    pub fn round(&mut self, budget_ms: u64) -> bool {
        let target = self.global.rounds_completed() + 1;
        for d in 0..self.locals.len() {
            let rate = 1000.0 + 100.0 * d as f64;
            let r = self.locals[d].report(ReportKind::DataPlane, vec![(DatacenterId(0), rate)], Vec::new());
            self.send(r);
        }
        let deadline = self.now + budget_ms;
        let mut started = false;
        while self.global.rounds_completed() < target {
            if !started && self.global.phase() == Phase::Idle && self.queue.is_empty() {
                for m in self.global.start_round(self.now).unwrap() {
                    self.send(m);
                }
                started = true;
            }
            let next_msg = self.queue.peek().map(|Reverse((t, _))| *t);
            let next_timer = self.global.next_timer();
            let t = match (next_msg, next_timer) {
                (Some(a), Some(b)) => a.min(b),
                (Some(a), None) => a,
                (None, Some(b)) => b,
                (None, None) => return false,
            };
            if t > deadline {
                return false;
            }
            self.now = t;
            if next_msg == Some(t) {
                let Reverse((_, s)) = self.queue.pop().unwrap();
                let m = self.msgs.remove(&s).unwrap();
                self.deliver(m);
            } else {
                for m in self.global.poll(self.now) {
                    self.send(m);
                }
            }
        }
        // Drain stragglers so the next round starts from a quiet network.
        while let Some(Reverse((t, s))) = self.queue.pop() {
            self.now = self.now.max(t);
            let m = self.msgs.remove(&s).unwrap();
            self.deliver(m);
        }
        true
    }
}
