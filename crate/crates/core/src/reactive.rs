//! Runtime statistics, persistent multi-metric overload detection and the
//! local one-instance-at-a-time scale-out rule.

use alloc::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::catalog::Thresholds;
use crate::provisioning::{Health, InstanceId};

/// Persistence window used by the reference deployment, in seconds.
pub const DEFAULT_PERSISTENCE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsSample {
    pub cpu_pct: f64,
    pub mem_pct: f64,
    pub input_pps: f64,
    /// Seconds.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceHealth {
    window: usize,
    cpu: VecDeque<f64>,
    mem: VecDeque<f64>,
    pps: VecDeque<f64>,
    last_ts: Option<u64>,
    state: Health,
    dropped: u64,
}

impl InstanceHealth {
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        InstanceHealth {
            window,
            cpu: VecDeque::with_capacity(window),
            mem: VecDeque::with_capacity(window),
            pps: VecDeque::with_capacity(window),
            last_ts: None,
            state: Health::Normal,
            dropped: 0,
        }
    }

    /// Appends a sample; out-of-order or repeated timestamps are dropped and
    /// counted. Returns whether the sample was kept.
    pub fn record_stats(&mut self, s: StatsSample) -> bool {
        if self.last_ts.is_some_and(|t| s.timestamp <= t) {
            self.dropped += 1;
            return false;
        }
        self.last_ts = Some(s.timestamp);
        for (q, v) in [(&mut self.cpu, s.cpu_pct), (&mut self.mem, s.mem_pct), (&mut self.pps, s.input_pps)] {
            if q.len() == self.window {
                q.pop_front();
            }
            q.push_back(v);
        }
        true
    }

    pub fn len(&self) -> usize {
        self.cpu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cpu.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn state(&self) -> Health {
        self.state
    }

    /// Re-evaluates the state from the last `persistence` samples.
    ///
    /// Normal → overload once at least two metrics exceeded their threshold
    /// in every one of those samples. Overload → normal once every metric
    /// stayed at or below its threshold in all of them.
    pub fn classify(&mut self, th: &Thresholds, persistence: usize) -> Health {
        let p = persistence.max(1);
        if self.len() < p {
            return self.state;
        }
        let tail = |q: &VecDeque<f64>| q.iter().skip(q.len() - p).copied().collect::<alloc::vec::Vec<_>>();
        let metrics = [(tail(&self.cpu), th.cpu_pct), (tail(&self.mem), th.mem_pct), (tail(&self.pps), th.input_pps)];
        let persistent = metrics.iter().filter(|(v, limit)| v.iter().all(|x| x > limit)).count();
        let calm = metrics.iter().all(|(v, limit)| v.iter().all(|x| x <= limit));
        self.state = match self.state {
            _ if persistent >= 2 => Health::Overload,
            Health::Overload if !calm => Health::Overload,
            _ => Health::Normal,
        };
        self.state
    }
}

/// One new instance iff strictly more than half the instances are
/// overloaded; never while a proactive round holds reactive scaling.
pub fn reactive_decision(states: &[Health], suspended: bool) -> usize {
    if suspended || states.is_empty() {
        return 0;
    }
    let over = states.iter().filter(|s| **s == Health::Overload).count();
    usize::from(over * 2 > states.len())
}

/// Health of every instance in one datacenter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HealthBook {
    window: usize,
    entries: BTreeMap<InstanceId, InstanceHealth>,
}

impl HealthBook {
    pub fn new(window: usize) -> Self {
        HealthBook { window, entries: BTreeMap::new() }
    }

    pub fn record(&mut self, id: InstanceId, s: StatsSample) -> bool {
        let w = self.window;
        self.entries.entry(id).or_insert_with(|| InstanceHealth::new(w)).record_stats(s)
    }

    pub fn classify(&mut self, id: InstanceId, th: &Thresholds, persistence: usize) -> Health {
        self.entries.get_mut(&id).map_or(Health::Normal, |h| h.classify(th, persistence))
    }

    pub fn state(&self, id: InstanceId) -> Health {
        self.entries.get(&id).map_or(Health::Normal, InstanceHealth::state)
    }

    /// Forgets an instance (scaled in or destroyed); reactivation starts fresh.
    pub fn forget(&mut self, id: InstanceId) {
        self.entries.remove(&id);
    }

    pub fn dropped(&self) -> u64 {
        self.entries.values().map(InstanceHealth::dropped).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    const FW: Thresholds = Thresholds { cpu_pct: 90.0, mem_pct: 50.0, input_pps: 35000.0 };

    fn feed(h: &mut InstanceHealth, start: u64, rows: &[(f64, f64, f64)]) {
        for (k, &(cpu, mem, pps)) in rows.iter().enumerate() {
            h.record_stats(StatsSample { cpu_pct: cpu, mem_pct: mem, input_pps: pps, timestamp: start + k as u64 });
        }
    }

    #[test]
    fn window_and_ordering() {
        let mut h = InstanceHealth::new(5);
        feed(&mut h, 0, &[(1.0, 1.0, 1.0); 5]);
        assert_eq!(h.len(), 5);
        feed(&mut h, 5, &[(2.0, 1.0, 1.0)]);
        assert_eq!(h.len(), 5);
        assert_eq!(h.cpu.front(), Some(&1.0));
        assert_eq!(h.cpu.back(), Some(&2.0));
        assert!(!h.record_stats(StatsSample { cpu_pct: 0.0, mem_pct: 0.0, input_pps: 0.0, timestamp: 3 }));
        assert_eq!(h.dropped(), 1);
    }

    #[test]
    fn two_metric_rule() {
        let mut h = InstanceHealth::new(5);
        feed(&mut h, 0, &[(95.0, 30.0, 36000.0); 5]);
        assert_eq!(h.classify(&FW, 5), Health::Overload);

        let mut h = InstanceHealth::new(5);
        feed(&mut h, 0, &[(95.0, 30.0, 1000.0); 5]);
        assert_eq!(h.classify(&FW, 5), Health::Normal);

        let mut h = InstanceHealth::new(5);
        feed(&mut h, 0, &[(50.0, 30.0, 1000.0)]);
        feed(&mut h, 1, &[(95.0, 30.0, 36000.0); 4]);
        assert_eq!(h.classify(&FW, 5), Health::Normal);
    }

    #[test]
    fn recovery_needs_full_calm_window() {
        let mut h = InstanceHealth::new(5);
        feed(&mut h, 0, &[(95.0, 30.0, 36000.0); 5]);
        assert_eq!(h.classify(&FW, 5), Health::Overload);
        feed(&mut h, 5, &[(10.0, 30.0, 100.0); 4]);
        assert_eq!(h.classify(&FW, 5), Health::Overload);
        feed(&mut h, 9, &[(10.0, 30.0, 100.0)]);
        assert_eq!(h.classify(&FW, 5), Health::Normal);
    }

    #[test]
    fn majority_rule() {
        use Health::*;
        assert_eq!(reactive_decision(&[Overload, Overload, Normal], false), 1);
        assert_eq!(reactive_decision(&[Overload, Normal], false), 0);
        assert_eq!(reactive_decision(&[Overload, Overload, Overload], true), 0);
        assert_eq!(reactive_decision(&[], false), 0);
    }

    #[test]
    fn replay_is_deterministic() {
        let rows: Vec<(f64, f64, f64)> =
            (0..40).map(|k| if (k / 7) % 2 == 0 { (95.0, 20.0, 40000.0) } else { (10.0, 20.0, 10.0) }).collect();
        let run = || {
            let mut h = InstanceHealth::new(5);
            rows.iter()
                .enumerate()
                .map(|(k, r)| {
                    feed(&mut h, k as u64, core::slice::from_ref(r));
                    h.classify(&FW, 5)
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
