//! Simulated broadcast channel for time-stamped robot states.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Mutex;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::RobotState;

/// Undelivered messages kept per (receiver, sender).
const PENDING_CAPACITY: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    /// Seconds between broadcasts of each robot.
    pub broadcast_period: f64,
    /// Delivery delay, seconds.
    pub latency: f64,
    /// Independent per-receiver loss probability.
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { broadcast_period: 0.05, latency: 0.01, drop_probability: 0.0, seed: 0 }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.broadcast_period.is_finite() && self.broadcast_period > 0.0) {
            return Err(Error::invalid("broadcast_period", "must be positive"));
        }
        if !(self.latency.is_finite() && self.latency >= 0.0) {
            return Err(Error::invalid("latency", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(Error::invalid("drop_probability", "must be in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug)]
struct Inner {
    rng: ChaCha8Rng,
    receivers: BTreeSet<u32>,
    /// (receiver, sender) → messages with their delivery time.
    pending: BTreeMap<(u32, u32), VecDeque<(f64, RobotState)>>,
    delivered: BTreeMap<(u32, u32), RobotState>,
}

/// All operations take one lock, so concurrent callers see a serializable
/// history.
#[derive(Debug)]
pub struct Bus {
    cfg: BusConfig,
    inner: Mutex<Inner>,
}

impl Bus {
    pub fn new(cfg: BusConfig, receivers: impl IntoIterator<Item = u32>) -> Self {
        let inner = Inner {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            receivers: receivers.into_iter().collect(),
            pending: BTreeMap::new(),
            delivered: BTreeMap::new(),
        };
        Self { cfg, inner: Mutex::new(inner) }
    }

    pub fn config(&self) -> &BusConfig {
        &self.cfg
    }

    pub fn register(&self, receiver: u32) {
        self.inner.lock().unwrap().receivers.insert(receiver);
    }

    /// Send `msg` to every registered receiver except its sender. Each copy
    /// is dropped independently and otherwise becomes visible at
    /// `send_time + latency`.
    pub fn broadcast(&self, msg: &RobotState, send_time: f64) {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        let visible_at = send_time + self.cfg.latency;
        let sender = msg.robot_id;
        for &receiver in inner.receivers.iter().filter(|&&r| r != sender) {
            let dropped = inner.rng.random::<f64>() < self.cfg.drop_probability;
            if dropped {
                continue;
            }
            let queue = inner.pending.entry((receiver, sender)).or_default();
            queue.push_back((visible_at, msg.clone()));
            while queue.len() > PENDING_CAPACITY {
                queue.pop_front();
            }
        }
    }

    /// Newest delivered state of every peer `receiver` has heard from,
    /// ordered by robot id.
    pub fn latest_states(&self, receiver: u32, now: f64) -> Vec<RobotState> {
        let mut guard = self.inner.lock().unwrap();
        let inner = &mut *guard;
        for ((r, sender), queue) in inner.pending.range_mut((receiver, 0)..=(receiver, u32::MAX)) {
            while let Some((visible_at, _)) = queue.front() {
                if *visible_at > now {
                    break;
                }
                let (_, msg) = queue.pop_front().unwrap();
                let slot = inner.delivered.entry((*r, *sender));
                match slot {
                    std::collections::btree_map::Entry::Occupied(mut e) => {
                        if msg.stamp >= e.get().stamp {
                            e.insert(msg);
                        }
                    }
                    std::collections::btree_map::Entry::Vacant(e) => {
                        e.insert(msg);
                    }
                }
            }
        }
        inner
            .delivered
            .range((receiver, 0)..=(receiver, u32::MAX))
            .filter(|(_, msg)| msg.stamp <= now)
            .map(|(_, msg)| msg.clone())
            .collect()
    }
}
