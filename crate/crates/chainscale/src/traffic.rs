//! User arrivals and call pairing.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::config::{Pairing, ScenarioConfig};

/// Piecewise-constant arrival rate of one datacenter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSchedule {
    pub dc: usize,
    pub start_ms: u64,
    pub change_interval_ms: u64,
    /// Users per second in each change interval.
    pub rates: Vec<f64>,
}

impl TrafficSchedule {
    pub fn end_ms(&self) -> u64 {
        self.start_ms + self.change_interval_ms * self.rates.len() as u64
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Vec<TrafficSchedule> {
        let starts = cfg.generator_starts();
        cfg.traffic
            .generators
            .iter()
            .zip(starts)
            .filter_map(|(g, start)| {
                Some(TrafficSchedule {
                    dc: cfg.dc_index(&g.dc)?,
                    start_ms: start * 1000,
                    change_interval_ms: g.change_interval_s * 1000,
                    rates: g.schedule(),
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserArrival {
    pub user: usize,
    pub dc: usize,
    pub at_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallPlan {
    pub id: usize,
    pub caller: usize,
    pub callee: usize,
    /// Arrival time of the later of the two users.
    pub paired_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Traffic {
    pub users: Vec<UserArrival>,
    pub calls: Vec<CallPlan>,
    /// Users never matched before the schedules ended.
    pub unpaired: Vec<usize>,
}

/// Poisson arrivals per schedule, merged in time order and matched first
/// come, first matched.
pub fn generate_traffic<R: Rng + ?Sized>(schedules: &[TrafficSchedule], pairing: Pairing, rng: &mut R) -> Traffic {
    let mut arrivals: Vec<(u64, usize)> = Vec::new();
    for s in schedules {
        for (k, &rate) in s.rates.iter().enumerate() {
            if rate <= 0.0 {
                continue;
            }
            let seg_start = s.start_ms as f64 + (k as u64 * s.change_interval_ms) as f64;
            let seg_end = seg_start + s.change_interval_ms as f64;
            let gap = Exp::new(rate / 1000.0).expect("positive rate");
            let mut t = seg_start;
            loop {
                t += gap.sample(rng);
                if t >= seg_end {
                    break;
                }
                arrivals.push((t.floor() as u64, s.dc));
            }
        }
    }
    arrivals.sort();
    let users: Vec<UserArrival> =
        arrivals.into_iter().enumerate().map(|(user, (at_ms, dc))| UserArrival { user, dc, at_ms }).collect();

    let (calls, unpaired) = pair_users(&users, pairing);
    Traffic { users, calls, unpaired }
}

/// Matches users in arrival order. Returns the calls and the users left waiting.
pub fn pair_users(users: &[UserArrival], pairing: Pairing) -> (Vec<CallPlan>, Vec<usize>) {
    let mut calls = Vec::new();
    let mut waiting: VecDeque<usize> = VecDeque::new();
    for (idx, u) in users.iter().enumerate() {
        let partner = match pairing {
            Pairing::Fifo => waiting.pop_front(),
            Pairing::CrossDc => {
                let pos = waiting.iter().position(|&w| users[w].dc != u.dc);
                pos.and_then(|p| waiting.remove(p))
            }
        };
        match partner {
            Some(caller) => calls.push(CallPlan { id: calls.len(), caller, callee: idx, paired_ms: u.at_ms }),
            None => waiting.push_back(idx),
        }
    }
    (calls, waiting.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(dc: usize, rate: f64, secs: u64) -> TrafficSchedule {
        TrafficSchedule { dc, start_ms: 0, change_interval_ms: secs * 1000, rates: vec![rate] }
    }

    #[test]
    fn poisson_counts_near_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let t = generate_traffic(&[flat(0, 2.0, 1000), flat(1, 2.0, 1000)], Pairing::Fifo, &mut rng);
        for dc in 0..2 {
            let c = t.users.iter().filter(|u| u.dc == dc).count() as f64;
            // mean 2000, sd ≈ 45
            assert!((c - 2000.0).abs() < 200.0, "dc{dc}: {c}");
        }
        assert!(t.unpaired.len() <= 1);
        assert_eq!(t.calls.len() * 2 + t.unpaired.len(), t.users.len());
    }

    #[test]
    fn fifo_pairs_in_arrival_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = generate_traffic(&[flat(0, 5.0, 20)], Pairing::Fifo, &mut rng);
        for (k, c) in t.calls.iter().enumerate() {
            assert_eq!((c.caller, c.callee), (2 * k, 2 * k + 1));
        }
    }

    #[test]
    fn single_user_stays_unpaired() {
        let users = [UserArrival { user: 0, dc: 0, at_ms: 5 }];
        assert_eq!(pair_users(&users, Pairing::Fifo), (vec![], vec![0]));
    }

    #[test]
    fn cross_dc_pairing_never_matches_same_dc() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = generate_traffic(&[flat(0, 3.0, 100), flat(1, 3.0, 100)], Pairing::CrossDc, &mut rng);
        assert!(!t.calls.is_empty());
        for c in &t.calls {
            assert_ne!(t.users[c.caller].dc, t.users[c.callee].dc);
        }
    }
}
