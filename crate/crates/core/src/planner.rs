//! Proactive decision logic: control-plane sizing, data-plane path
//! computation with loop elimination, stage placement on a fixed
//! datacenter path, and the per-interval packing of every entry-exit pair.
//!
//! Everything here is a pure function over snapshots. Capacity bookkeeping
//! happens on a [`CapacityView`] scratch copy; inventories only change when
//! a local controller applies the resulting [`ProvisionPlan`].

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, VnfRole};
use crate::topology::{path_delay, shortest_delay_path, DatacenterId, DelayMatrix, EntryExitPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("no monotone placement of {stages} stages covers a {datacenters}-datacenter path")]
    Infeasible { datacenters: usize, stages: usize },
    #[error("datacenter path must contain at least two datacenters")]
    PathTooShort,
}

/// Entry, one hosting datacenter per stage, exit: `m + 2` entries.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceChainPath(pub Vec<DatacenterId>);

impl ServiceChainPath {
    pub fn new(hops: Vec<DatacenterId>) -> Self {
        ServiceChainPath(hops)
    }

    pub fn from_indices(hops: &[usize]) -> Self {
        ServiceChainPath(hops.iter().map(|&i| i.into()).collect())
    }

    /// Every stage hosted in the entry datacenter.
    pub fn all_at_entry(pair: EntryExitPair, stages: usize) -> Self {
        let mut v = vec![pair.entry; stages + 1];
        v.push(pair.exit);
        ServiceChainPath(v)
    }

    /// Every stage hosted in the exit datacenter.
    pub fn all_at_exit(pair: EntryExitPair, stages: usize) -> Self {
        let mut v = vec![pair.exit; stages + 2];
        v[0] = pair.entry;
        ServiceChainPath(v)
    }

    pub fn entry(&self) -> DatacenterId {
        self.0[0]
    }

    pub fn exit(&self) -> DatacenterId {
        self.0[self.0.len() - 1]
    }

    pub fn pair(&self) -> EntryExitPair {
        EntryExitPair { entry: self.entry(), exit: self.exit() }
    }

    pub fn stage_count(&self) -> usize {
        self.0.len() - 2
    }

    /// Hosting datacenter of 1-based `stage`.
    pub fn stage_dc(&self, stage: usize) -> DatacenterId {
        self.0[stage]
    }

    pub fn hops(&self) -> &[DatacenterId] {
        &self.0
    }

    /// Consecutive duplicates removed.
    pub fn collapsed(&self) -> Vec<DatacenterId> {
        collapse(&self.0)
    }

    pub fn is_loopless(&self) -> bool {
        is_loopless(&self.0)
    }

    pub fn contains(&self, dc: DatacenterId) -> bool {
        self.0.contains(&dc)
    }

    /// Datacenter visited after `dc` on the collapsed path, if any.
    pub fn next_after(&self, dc: DatacenterId) -> Option<DatacenterId> {
        let c = self.collapsed();
        let pos = c.iter().position(|&d| d == dc)?;
        c.get(pos + 1).copied()
    }

    /// Whether the path crosses the directed-or-reverse link `a`–`b`.
    pub fn uses_link(&self, a: DatacenterId, b: DatacenterId) -> bool {
        self.collapsed().windows(2).any(|w| (w[0] == a && w[1] == b) || (w[0] == b && w[1] == a))
    }

    pub fn delay(&self, delays: &DelayMatrix) -> f64 {
        path_delay(&self.0, delays)
    }
}

impl fmt::Display for ServiceChainPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}", d.0)?;
        }
        f.write_str(")")
    }
}

fn collapse(hops: &[DatacenterId]) -> Vec<DatacenterId> {
    let mut out: Vec<DatacenterId> = Vec::with_capacity(hops.len());
    for &h in hops {
        if out.last() != Some(&h) {
            out.push(h);
        }
    }
    out
}

/// Collapsing consecutive duplicates yields all-distinct datacenters.
pub fn is_loopless(hops: &[DatacenterId]) -> bool {
    let c = collapse(hops);
    c.iter().enumerate().all(|(i, d)| !c[i + 1..].contains(d))
}

/// One service chain path per entry-exit pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<ServiceChainPath>", into = "Vec<ServiceChainPath>")]
pub struct PathTable(pub BTreeMap<EntryExitPair, ServiceChainPath>);

impl From<Vec<ServiceChainPath>> for PathTable {
    fn from(paths: Vec<ServiceChainPath>) -> Self {
        PathTable(paths.into_iter().map(|p| (p.pair(), p)).collect())
    }
}

impl From<PathTable> for Vec<ServiceChainPath> {
    fn from(t: PathTable) -> Self {
        t.0.into_values().collect()
    }
}

impl PathTable {
    pub fn all_at_entry(n: usize, stages: usize) -> Self {
        PathTable(EntryExitPair::all(n).map(|p| (p, ServiceChainPath::all_at_entry(p, stages))).collect())
    }

    pub fn get(&self, pair: &EntryExitPair) -> Option<&ServiceChainPath> {
        self.0.get(pair)
    }

    pub fn insert(&mut self, path: ServiceChainPath) {
        self.0.insert(path.pair(), path);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntryExitPair, &ServiceChainPath)> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of paths whose collapsed hop sequence crosses `a`–`b`.
    pub fn count_using_link(&self, a: DatacenterId, b: DatacenterId) -> usize {
        self.0.values().filter(|p| p.uses_link(a, b)).count()
    }
}

/// Row-major n×n demand per entry-exit pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl WorkloadMatrix {
    pub fn zeros(n: usize) -> Self {
        WorkloadMatrix { n, cells: vec![0.0; n * n] }
    }

    pub fn from_cells(n: usize, cells: Vec<f64>) -> Self {
        assert_eq!(cells.len(), n * n, "workload matrix must be n×n");
        WorkloadMatrix { n, cells }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, pair: EntryExitPair) -> f64 {
        self.cells[pair.entry.index() * self.n + pair.exit.index()]
    }

    pub fn set(&mut self, pair: EntryExitPair, v: f64) {
        self.cells[pair.entry.index() * self.n + pair.exit.index()] = v.max(0.0);
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }
}

/// Working-instance counts per (datacenter, role), as reported by locals.
pub type ProvisionSnapshot = BTreeMap<(DatacenterId, VnfRole), usize>;

/// Target working-instance counts. Roles absent from the map are left as is.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvisionPlan {
    #[serde(with = "crate::entries")]
    pub targets: BTreeMap<(DatacenterId, VnfRole), usize>,
}

impl ProvisionPlan {
    pub fn target(&self, dc: DatacenterId, role: VnfRole) -> Option<usize> {
        self.targets.get(&(dc, role)).copied()
    }

    pub fn for_dc(&self, dc: DatacenterId) -> BTreeMap<VnfRole, usize> {
        self.targets.iter().filter(|((d, _), _)| *d == dc).map(|((_, r), &c)| (*r, c)).collect()
    }

    pub fn merge(&mut self, other: ProvisionPlan) {
        self.targets.extend(other.targets);
    }

    /// Signed change per (dc, role) relative to `current`.
    pub fn deltas(&self, current: &ProvisionSnapshot) -> BTreeMap<(DatacenterId, VnfRole), i64> {
        self.targets
            .iter()
            .map(|(k, &t)| (*k, t as i64 - current.get(k).copied().unwrap_or(0) as i64))
            .filter(|(_, d)| *d != 0)
            .collect()
    }
}

const SLACK: f64 = 1e-6;

/// Instances of capacity `unit` needed to cover `demand` beyond `available`.
pub fn shortfall_instances(demand: f64, available: f64, unit: f64) -> u64 {
    let short = demand - available;
    if short <= SLACK * demand.max(1.0) {
        return 0;
    }
    ceil_pos(short / unit - 1e-9)
}

fn ceil_pos(x: f64) -> u64 {
    if x <= 0.0 {
        return 0;
    }
    let t = x as u64;
    if (t as f64) < x {
        t + 1
    } else {
        t
    }
}

/// Available capacity per (datacenter, stage) plus per-stage unit capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityView {
    n: usize,
    unit: Vec<f64>,
    avail: Vec<f64>,
}

impl CapacityView {
    /// `unit[j-1]` is the per-instance capacity of stage `j`.
    pub fn new(n: usize, unit: Vec<f64>) -> Self {
        let m = unit.len();
        CapacityView { n, unit, avail: vec![0.0; n * m] }
    }

    pub fn from_catalog(n: usize, catalog: &Catalog) -> Self {
        Self::new(n, catalog.stages().map(|s| catalog.stage_capacity(s)).collect())
    }

    /// Full capacity of `counts` working instances.
    pub fn from_counts(n: usize, catalog: &Catalog, counts: &ProvisionSnapshot) -> Self {
        let mut v = Self::from_catalog(n, catalog);
        for dc in 0..n {
            for s in catalog.stages() {
                let c = counts.get(&(dc.into(), VnfRole::Stage(s))).copied().unwrap_or(0);
                v.set(dc.into(), s as usize, c as f64 * v.unit(s as usize));
            }
        }
        v
    }

    pub fn datacenters(&self) -> usize {
        self.n
    }

    pub fn stages(&self) -> usize {
        self.unit.len()
    }

    pub fn unit(&self, stage: usize) -> f64 {
        self.unit[stage - 1]
    }

    #[inline]
    fn idx(&self, dc: DatacenterId, stage: usize) -> usize {
        dc.index() * self.unit.len() + (stage - 1)
    }

    pub fn get(&self, dc: DatacenterId, stage: usize) -> f64 {
        self.avail[self.idx(dc, stage)]
    }

    pub fn set(&mut self, dc: DatacenterId, stage: usize, v: f64) {
        let i = self.idx(dc, stage);
        self.avail[i] = v;
    }

    pub fn add(&mut self, dc: DatacenterId, stage: usize, v: f64) {
        let i = self.idx(dc, stage);
        self.avail[i] += v;
    }

    /// New instances of `stage` needed in `dc` to carry `demand`.
    pub fn need(&self, dc: DatacenterId, stage: usize, demand: f64) -> u64 {
        shortfall_instances(demand, self.get(dc, stage), self.unit(stage))
    }

    /// New instances needed along `hops` (full path or a prefix) for `demand`.
    pub fn new_instances(&self, hops: &[DatacenterId], demand: f64) -> u64 {
        let m = self.stages();
        (1..hops.len().min(m + 1)).map(|j| self.need(hops[j], j, demand)).sum()
    }

    pub fn fits(&self, path: &ServiceChainPath, demand: f64) -> bool {
        self.new_instances(path.hops(), demand) == 0
    }

    /// Datacenter other than `exclude` with most available `stage` capacity;
    /// lowest index wins ties.
    pub fn largest(&self, stage: usize, exclude: DatacenterId) -> Option<DatacenterId> {
        let mut best: Option<DatacenterId> = None;
        for d in 0..self.n {
            let d = DatacenterId::from(d);
            if d == exclude {
                continue;
            }
            if best.is_none_or(|b| self.get(d, stage) > self.get(b, stage)) {
                best = Some(d);
            }
        }
        best
    }
}

/// Per-datacenter control-plane sizing.
///
/// S-CSCF instances all live in `scscf_dc`: `ceil(total / C_s)`. P-CSCF in
/// each datacenter: `ceil(load_d / C_p)` with `load_d` the demand of every
/// pair entering or leaving `d` (the `(d, d)` cell once). Every datacenter
/// keeps at least one P-CSCF and the home keeps at least one S-CSCF.
pub fn size_cp(predicted: &WorkloadMatrix, catalog: &Catalog, scscf_dc: DatacenterId) -> ProvisionPlan {
    let n = predicted.len();
    let p_cap = catalog.vnf(VnfRole::Pcscf).capacity;
    let s_cap = catalog.vnf(VnfRole::Scscf).capacity;
    let mut plan = ProvisionPlan::default();
    let s = ceil_pos(predicted.total() / s_cap - 1e-9).max(1) as usize;
    for d in 0..n {
        let dc = DatacenterId::from(d);
        let load: f64 = EntryExitPair::all(n)
            .filter(|p| p.entry == dc || p.exit == dc)
            .map(|p| predicted.get(p))
            .sum();
        let p = ceil_pos(load / p_cap - 1e-9).max(1) as usize;
        plan.targets.insert((dc, VnfRole::Pcscf), p);
        plan.targets.insert((dc, VnfRole::Scscf), if dc == scscf_dc { s } else { 0 });
    }
    plan
}

/// Minimum-new-instance monotone placement of `m` stages on a datacenter path.
///
/// `N(i, j)` is the cheapest cover of stages `1..=j` with stage `j` on the
/// `i`-th datacenter; stage `j − 1` sits on datacenter `i − 1` or `i`.
/// Placements that leave more datacenters than stages are infinite. The
/// last stage may sit on the exit or the one before it. Ties resolve toward
/// the earlier datacenter.
pub fn place_stages(
    dc_path: &[DatacenterId],
    view: &CapacityView,
    demand: f64,
) -> Result<(ServiceChainPath, u64), PlanError> {
    let k = dc_path.len();
    let m = view.stages();
    if k < 2 {
        return Err(PlanError::PathTooShort);
    }
    const INF: u64 = u64::MAX;
    let num = |i: usize, j: usize| -> u64 {
        if m - j + 1 < k - i {
            INF
        } else {
            view.need(dc_path[i - 1], j, demand)
        }
    };
    let add = |a: u64, b: u64| if a == INF || b == INF { INF } else { a + b };
    // n[i][j], 1-based; row 0 / column 0 unused.
    let mut n = vec![vec![INF; m + 1]; k + 1];
    n[1][1] = num(1, 1);
    n[2][1] = num(2, 1);
    for j in 2..=m {
        n[1][j] = add(n[1][j - 1], num(1, j));
        for i in 2..=k {
            n[i][j] = add(n[i - 1][j - 1].min(n[i][j - 1]), num(i, j));
        }
    }
    let (mut i, best) = if n[k - 1][m] <= n[k][m] { (k - 1, n[k - 1][m]) } else { (k, n[k][m]) };
    if best == INF {
        return Err(PlanError::Infeasible { datacenters: k, stages: m });
    }
    let mut hops = vec![dc_path[0]; m + 2];
    hops[m + 1] = dc_path[k - 1];
    for j in (1..=m).rev() {
        hops[j] = dc_path[i - 1];
        if j > 1 && i > 1 && n[i - 1][j - 1] <= n[i][j - 1] {
            i -= 1;
        }
    }
    Ok((ServiceChainPath(hops), best))
}

/// Outcome of [`compute_path`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputedPath {
    pub path: ServiceChainPath,
    pub new_instances: u64,
    pub delay_ms: f64,
    pub meets_threshold: bool,
    /// Produced by the shortest-delay fallback.
    pub fallback: bool,
}

/// Repairs a record extension that would revisit `candidate`.
///
/// `record` holds positions `0..stage` and is loopless. Option A moves all
/// stages after the earlier visit of `candidate` onto it; option B takes
/// the highest-capacity datacenter (never the exit) that keeps the record
/// loopless. The one needing fewer new instances for stages `1..=stage`
/// wins, ties going to A.
pub fn eliminate_loop(
    record: &[DatacenterId],
    candidate: DatacenterId,
    stage: usize,
    exit: DatacenterId,
    view: &CapacityView,
    demand: f64,
) -> Vec<DatacenterId> {
    debug_assert_eq!(record.len(), stage);
    let mut extended = record.to_vec();
    extended.push(candidate);
    if is_loopless(&extended) {
        return extended;
    }
    let p = record.iter().rposition(|&d| d == candidate).expect("loop implies earlier visit");
    let mut a = record[..=p].to_vec();
    a.resize(stage + 1, candidate);

    let mut options: Vec<DatacenterId> = (0..view.datacenters())
        .map(DatacenterId::from)
        .filter(|&d| d != exit && d != candidate)
        .filter(|&d| d == record[stage - 1] || !record.contains(&d))
        .collect();
    options.sort_by(|x, y| {
        view.get(*y, stage)
            .partial_cmp(&view.get(*x, stage))
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(x.cmp(y))
    });
    let Some(&b_dc) = options.first() else { return a };
    let mut b = record.to_vec();
    b.push(b_dc);
    if view.new_instances(&b, demand) < view.new_instances(&a, demand) {
        b
    } else {
        a
    }
}

/// Greedy path search for one pair, seeded with its current path.
///
/// A candidate replaces the incumbent when it meets the delay threshold and
/// either the incumbent does not or the candidate needs strictly fewer new
/// instances. If the final choice still violates the threshold, the stage
/// placement runs on the shortest-delay datacenter path.
#[allow(clippy::too_many_arguments)]
pub fn compute_path(
    pair: EntryExitPair,
    demand: f64,
    delays: &DelayMatrix,
    view: &CapacityView,
    current: &ServiceChainPath,
    threshold_ms: f64,
) -> ComputedPath {
    let n = view.datacenters();
    let m = view.stages();
    let (entry, exit) = (pair.entry, pair.exit);

    let mut best = current.clone();
    let mut best_cost = view.new_instances(best.hops(), demand);
    let mut best_ok = best.is_loopless() && best.delay(delays) <= threshold_ms;
    let mut consider = |cand: Vec<DatacenterId>| {
        if !is_loopless(&cand) || path_delay(&cand, delays) > threshold_ms {
            return;
        }
        let cost = view.new_instances(&cand, demand);
        if !best_ok || cost < best_cost {
            best = ServiceChainPath(cand);
            best_cost = cost;
            best_ok = true;
        }
    };

    for v in (0..n).map(DatacenterId::from).filter(|&v| v != exit) {
        let mut record = vec![entry, v];
        for x in 2..=m {
            let v1 = view.largest(x, exit).expect("at least two datacenters");
            record = eliminate_loop(&record, v1, x, exit, view, demand);
            let mut path = record.clone();
            path.resize(m + 2, exit);
            consider(path);
        }
        let mut path = vec![exit; m + 2];
        path[0] = entry;
        path[1] = v;
        consider(path);
    }
    consider(ServiceChainPath::all_at_exit(pair, m).0);
    consider(ServiceChainPath::all_at_entry(pair, m).0);

    if best_ok {
        let delay_ms = best.delay(delays);
        return ComputedPath { path: best, new_instances: best_cost, delay_ms, meets_threshold: true, fallback: false };
    }

    let sp = shortest_delay_path(entry, exit, delays);
    let (path, cost) = place_stages(&sp, view, demand).unwrap_or_else(|_| {
        let sp = hop_limited_shortest_path(entry, exit, delays, m + 1);
        place_stages(&sp, view, demand).expect("hop-limited path always admits a placement")
    });
    let delay_ms = path.delay(delays);
    ComputedPath { path, new_instances: cost, delay_ms, meets_threshold: delay_ms <= threshold_ms, fallback: true }
}

/// Minimum-delay simple path using at most `max_edges` links.
pub fn hop_limited_shortest_path(
    entry: DatacenterId,
    exit: DatacenterId,
    delays: &DelayMatrix,
    max_edges: usize,
) -> Vec<DatacenterId> {
    let n = delays.len();
    // best[h][v]: (delay, path) reaching v in exactly h edges without revisits.
    let mut layer: Vec<Option<(f64, Vec<DatacenterId>)>> = vec![None; n];
    layer[entry.index()] = Some((0.0, vec![entry]));
    let mut answer: Option<(f64, Vec<DatacenterId>)> = None;
    for _ in 0..max_edges.max(1) {
        let mut next: Vec<Option<(f64, Vec<DatacenterId>)>> = vec![None; n];
        for (u, slot) in layer.iter().enumerate() {
            let Some((du, pu)) = slot else { continue };
            if u == exit.index() {
                continue;
            }
            for (v, cell) in next.iter_mut().enumerate() {
                let vd = DatacenterId::from(v);
                if pu.contains(&vd) {
                    continue;
                }
                let alt = du + delays.get(u.into(), vd);
                if cell.as_ref().is_none_or(|(d, _)| alt < *d) {
                    let mut p = pu.clone();
                    p.push(vd);
                    *cell = Some((alt, p));
                }
            }
        }
        if let Some((d, p)) = &next[exit.index()] {
            if answer.as_ref().is_none_or(|(bd, _)| d < bd) {
                answer = Some((*d, p.clone()));
            }
        }
        layer = next;
    }
    answer.map(|(_, p)| p).unwrap_or_else(|| vec![entry, exit])
}

/// Inputs of [`plan_dp`].
#[derive(Debug, Clone)]
pub struct DpInputs<'a> {
    pub load: &'a WorkloadMatrix,
    pub delays: &'a DelayMatrix,
    pub provision: &'a ProvisionSnapshot,
    pub current_paths: &'a PathTable,
    pub catalog: &'a Catalog,
    pub threshold_ms: f64,
}

/// Result of [`plan_dp`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpPlan {
    pub provision: ProvisionPlan,
    pub paths: PathTable,
    /// Pairs whose new path came from the shortest-delay fallback.
    pub fallbacks: Vec<EntryExitPair>,
    /// Demand assigned per (dc, stage) after packing.
    #[serde(with = "crate::entries")]
    pub assigned: BTreeMap<(DatacenterId, u8), f64>,
    /// Instances added by scale-out per (dc, stage).
    #[serde(with = "crate::entries")]
    pub scale_out: BTreeMap<(DatacenterId, u8), u64>,
}

/// Packs every pair's predicted demand onto paths and instances.
///
/// Pass 1 keeps each cross-datacenter pair's current path when it still
/// has the capacity and meets the delay bound. Pass 2 recomputes the rest
/// with [`compute_path`] and scales out the shortfall. Pass 3 places local
/// pairs entirely in their datacenter. Within a pass pairs go in ascending
/// (entry, exit) order. Finally every (dc, stage) is scaled in to the
/// instances its assigned demand needs.
pub fn plan_dp(inp: &DpInputs<'_>) -> DpPlan {
    let n = inp.load.len();
    let m = inp.catalog.stage_count();
    let mut view = CapacityView::from_counts(n, inp.catalog, inp.provision);
    let mut counts: BTreeMap<(DatacenterId, u8), u64> = BTreeMap::new();
    for d in 0..n {
        for s in inp.catalog.stages() {
            let c = inp.provision.get(&(d.into(), VnfRole::Stage(s))).copied().unwrap_or(0);
            counts.insert((d.into(), s), c as u64);
        }
    }
    let mut assigned: BTreeMap<(DatacenterId, u8), f64> = counts.keys().map(|k| (*k, 0.0)).collect();
    let mut scale_out: BTreeMap<(DatacenterId, u8), u64> = BTreeMap::new();
    let mut paths = PathTable::default();
    let mut fallbacks = Vec::new();

    let current_for = |pair: EntryExitPair| {
        inp.current_paths
            .get(&pair)
            .filter(|p| p.stage_count() == m && p.pair() == pair)
            .cloned()
            .unwrap_or_else(|| ServiceChainPath::all_at_entry(pair, m))
    };

    let mut commit = |path: &ServiceChainPath,
                      demand: f64,
                      view: &mut CapacityView,
                      counts: &mut BTreeMap<(DatacenterId, u8), u64>| {
        for j in 1..=m {
            let dc = path.stage_dc(j);
            let k = view.need(dc, j, demand);
            if k > 0 {
                view.add(dc, j, k as f64 * view.unit(j));
                *counts.entry((dc, j as u8)).or_default() += k;
                *scale_out.entry((dc, j as u8)).or_default() += k;
            }
            view.add(dc, j, -demand);
            *assigned.entry((dc, j as u8)).or_default() += demand;
        }
    };

    let cross: Vec<EntryExitPair> = EntryExitPair::all(n).filter(|p| !p.is_local()).collect();
    let mut pending = Vec::new();
    for &pair in &cross {
        let demand = inp.load.get(pair);
        let cur = current_for(pair);
        if cur.is_loopless() && view.fits(&cur, demand) && cur.delay(inp.delays) <= inp.threshold_ms {
            commit(&cur, demand, &mut view, &mut counts);
            paths.insert(cur);
        } else {
            pending.push(pair);
        }
    }
    for pair in pending {
        let demand = inp.load.get(pair);
        let cur = current_for(pair);
        let cp = compute_path(pair, demand, inp.delays, &view, &cur, inp.threshold_ms);
        if cp.fallback {
            fallbacks.push(pair);
        }
        commit(&cp.path, demand, &mut view, &mut counts);
        paths.insert(cp.path);
    }
    for pair in EntryExitPair::all(n).filter(|p| p.is_local()) {
        let path = ServiceChainPath::all_at_entry(pair, m);
        commit(&path, inp.load.get(pair), &mut view, &mut counts);
        paths.insert(path);
    }

    let mut provision = ProvisionPlan::default();
    for (&(dc, s), &total) in &counts {
        let demand = assigned.get(&(dc, s)).copied().unwrap_or(0.0);
        let needed = shortfall_instances(demand, 0.0, inp.catalog.stage_capacity(s)).min(total);
        provision.targets.insert((dc, VnfRole::Stage(s)), needed as usize);
    }
    DpPlan { provision, paths, fallbacks, assigned, scale_out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dc(i: usize) -> DatacenterId {
        i.into()
    }

    fn ids(v: &[usize]) -> Vec<DatacenterId> {
        v.iter().map(|&i| dc(i)).collect()
    }

    fn view(n: usize, unit: &[f64], cells: &[(usize, usize, f64)]) -> CapacityView {
        let mut v = CapacityView::new(n, unit.to_vec());
        for &(d, s, c) in cells {
            v.set(dc(d), s, c);
        }
        v
    }

    #[test]
    fn looplessness() {
        assert!(is_loopless(&ids(&[0, 0, 1, 1, 2])));
        assert!(!is_loopless(&ids(&[1, 2, 4, 2])));
        assert!(is_loopless(&ids(&[1, 2, 2, 2])));
        assert!(!is_loopless(&ids(&[0, 1, 0])));
    }

    #[test]
    fn cp_sizing() {
        let cat = Catalog::reference();
        let mut w = WorkloadMatrix::zeros(3);
        w.set(EntryExitPair::new(0usize, 1usize), 400.0);
        w.set(EntryExitPair::new(1usize, 2usize), 500.0);
        let plan = size_cp(&w, &cat, dc(2));
        assert_eq!(plan.target(dc(2), VnfRole::Scscf), Some(5));
        assert_eq!(plan.target(dc(0), VnfRole::Scscf), Some(0));

        let mut w = WorkloadMatrix::zeros(2);
        w.set(EntryExitPair::new(0usize, 1usize), 300.0);
        w.set(EntryExitPair::new(1usize, 0usize), 100.0);
        w.set(EntryExitPair::new(0usize, 0usize), 50.0);
        let plan = size_cp(&w, &cat, dc(0));
        assert_eq!(plan.target(dc(0), VnfRole::Pcscf), Some(1));

        let plan = size_cp(&WorkloadMatrix::zeros(3), &cat, dc(1));
        assert_eq!(plan.target(dc(1), VnfRole::Scscf), Some(1));
        for d in 0..3 {
            assert_eq!(plan.target(dc(d), VnfRole::Pcscf), Some(1));
        }
    }

    #[test]
    fn place_two_stage_tie_prefers_earlier() {
        // Stage 1 has 25 on dc index 1; everything else empty.
        let v = view(2, &[10.0, 10.0], &[(0, 1, 25.0)]);
        let (p, cost) = place_stages(&ids(&[0, 1]), &v, 25.0).unwrap();
        assert_eq!(cost, 3);
        assert_eq!(p, ServiceChainPath::from_indices(&[0, 0, 0, 1]));
    }

    #[test]
    fn place_full_capacity_is_free() {
        let v = view(3, &[10.0, 10.0, 10.0], &[
            (0, 1, 99.0), (0, 2, 99.0), (0, 3, 99.0),
            (1, 1, 99.0), (1, 2, 99.0), (1, 3, 99.0),
            (2, 1, 99.0), (2, 2, 99.0), (2, 3, 99.0),
        ]);
        let (p, cost) = place_stages(&ids(&[0, 1, 2]), &v, 50.0).unwrap();
        assert_eq!(cost, 0);
        assert!(p.is_loopless());
        assert!(p.contains(dc(1)));
    }

    #[test]
    fn place_infeasible_and_tight() {
        let v = view(5, &[10.0, 10.0], &[]);
        assert_eq!(
            place_stages(&ids(&[0, 1, 2, 3, 4]), &v, 5.0),
            Err(PlanError::Infeasible { datacenters: 5, stages: 2 })
        );
        // Four datacenters, two stages: only (entry, d2, d3, exit) works.
        let (p, cost) = place_stages(&ids(&[0, 1, 2, 3]), &v, 5.0).unwrap();
        assert_eq!(p, ServiceChainPath::from_indices(&[0, 1, 2, 3]));
        assert_eq!(cost, 2);
    }

    #[test]
    fn loop_elimination_options() {
        // record (1,2,4), candidate 2 for stage 3.
        let record = ids(&[1, 2, 4]);
        // Option A wins when dc2 has stage capacity for everything decided.
        let v = view(5, &[10.0, 10.0, 10.0], &[(2, 1, 50.0), (2, 2, 50.0), (2, 3, 50.0), (3, 3, 5.0)]);
        assert_eq!(eliminate_loop(&record, dc(2), 3, dc(0), &v, 20.0), ids(&[1, 2, 2, 2]));
        // Option B wins when the loop's datacenter lacks stage-2 capacity and
        // dc4/dc3 hold what is needed.
        let v = view(5, &[10.0, 10.0, 10.0], &[(2, 1, 50.0), (2, 3, 60.0), (4, 2, 50.0), (3, 3, 40.0)]);
        assert_eq!(eliminate_loop(&record, dc(2), 3, dc(0), &v, 20.0), ids(&[1, 2, 4, 3]));
        // No loop: appended unchanged.
        assert_eq!(eliminate_loop(&record, dc(3), 3, dc(0), &v, 20.0), ids(&[1, 2, 4, 3]));
    }

    #[test]
    fn compute_path_keeps_feasible_current() {
        let d = DelayMatrix::uniform(3, 10.0);
        let v = view(3, &[10.0, 10.0], &[(0, 1, 100.0), (0, 2, 100.0)]);
        let pair = EntryExitPair::new(0usize, 2usize);
        let cur = ServiceChainPath::from_indices(&[0, 0, 0, 2]);
        let cp = compute_path(pair, 50.0, &d, &v, &cur, 100.0);
        assert_eq!(cp.path, cur);
        assert_eq!(cp.new_instances, 0);
        assert!(!cp.fallback);
    }

    #[test]
    fn compute_path_follows_capacity() {
        let d = DelayMatrix::uniform(3, 10.0);
        let v = view(3, &[10.0, 10.0, 10.0], &[(1, 1, 100.0), (1, 2, 100.0), (1, 3, 100.0)]);
        let pair = EntryExitPair::new(0usize, 2usize);
        let cur = ServiceChainPath::all_at_entry(pair, 3);
        let cp = compute_path(pair, 50.0, &d, &v, &cur, 100.0);
        assert_eq!(cp.path, ServiceChainPath::from_indices(&[0, 1, 1, 1, 2]));
        assert_eq!(cp.new_instances, 0);
    }

    #[test]
    fn compute_path_falls_back_to_shortest() {
        let mut d = DelayMatrix::uniform(3, 100.0);
        d.set_symmetric(dc(0), dc(2), 10.0);
        d.set_symmetric(dc(2), dc(1), 10.0);
        let v = view(3, &[10.0, 10.0], &[]);
        let pair = EntryExitPair::new(0usize, 1usize);
        let cur = ServiceChainPath::all_at_entry(pair, 2);
        let cp = compute_path(pair, 15.0, &d, &v, &cur, 5.0);
        assert!(cp.fallback);
        let (expect, cost) = place_stages(&ids(&[0, 2, 1]), &v, 15.0).unwrap();
        assert_eq!(cp.path, expect);
        assert_eq!(cp.new_instances, cost);
        assert!(!cp.meets_threshold);
    }

    #[test]
    fn plan_fixed_point_and_scale_in() {
        let cat = Catalog::reference();
        let n = 2;
        let mut load = WorkloadMatrix::zeros(n);
        let pair = EntryExitPair::new(0usize, 1usize);
        load.set(pair, 10000.0);
        let mut prov = ProvisionSnapshot::new();
        for s in 1..=3 {
            prov.insert((dc(0), VnfRole::Stage(s)), 3);
            prov.insert((dc(1), VnfRole::Stage(s)), 1);
        }
        let paths = PathTable::all_at_entry(n, 3);
        let d = DelayMatrix::uniform(n, 10.0);
        let plan = plan_dp(&DpInputs {
            load: &load,
            delays: &d,
            provision: &prov,
            current_paths: &paths,
            catalog: &cat,
            threshold_ms: 100.0,
        });
        assert_eq!(plan.paths, paths);
        assert!(plan.scale_out.is_empty());
        for s in 1..=3 {
            assert_eq!(plan.provision.target(dc(0), VnfRole::Stage(s)), Some(1));
            assert_eq!(plan.provision.target(dc(1), VnfRole::Stage(s)), Some(0));
        }
    }

    #[test]
    fn plan_idle_collapse() {
        let cat = Catalog::reference();
        let n = 3;
        let mut prov = ProvisionSnapshot::new();
        for d in 0..n {
            for s in 1..=3 {
                prov.insert((dc(d), VnfRole::Stage(s)), 2);
            }
        }
        let paths = PathTable::all_at_entry(n, 3);
        let plan = plan_dp(&DpInputs {
            load: &WorkloadMatrix::zeros(n),
            delays: &DelayMatrix::uniform(n, 10.0),
            provision: &prov,
            current_paths: &paths,
            catalog: &cat,
            threshold_ms: 100.0,
        });
        assert_eq!(plan.paths, paths);
        assert!(plan.provision.targets.values().all(|&c| c == 0));
    }

    #[test]
    fn plan_uses_remote_idle_capacity() {
        // dc0 has one instance per stage; dc1 has spare IDS capacity.
        let cat = Catalog::reference();
        let n = 2;
        let pair = EntryExitPair::new(0usize, 1usize);
        let mut load = WorkloadMatrix::zeros(n);
        load.set(pair, 30000.0);
        let mut prov = ProvisionSnapshot::new();
        for s in 1..=3 {
            prov.insert((dc(0), VnfRole::Stage(s)), 1);
        }
        prov.insert((dc(1), VnfRole::Stage(2)), 2);
        prov.insert((dc(1), VnfRole::Stage(3)), 2);
        let plan = plan_dp(&DpInputs {
            load: &load,
            delays: &DelayMatrix::uniform(n, 10.0),
            provision: &prov,
            current_paths: &PathTable::all_at_entry(n, 3),
            catalog: &cat,
            threshold_ms: 100.0,
        });
        let p = plan.paths.get(&pair).unwrap();
        assert_eq!(p.stage_dc(2), dc(1));
        let created: u64 = plan.scale_out.values().sum();
        // Entry-only baseline: one more IDS and one more transcoder in dc0.
        assert!(created < 2, "created {created}");
    }
}
