//! Demand-capped max-min fair sharing by progressive filling, computed in
//! exact rational arithmetic so conservation holds without rounding slack.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};

use crate::link_model::LinkMatrix;

/// A flow as the allocator sees it: its current path (if routed) and an
/// optional rate cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowDemand<'a> {
    pub path: Option<&'a [u32]>,
    pub demand_mbps: Option<f64>,
}

fn exact(v: f64) -> BigRational {
    BigRational::from_float(v.max(0.0)).unwrap_or_else(BigRational::zero)
}

/// Each traversed link direction is an independent resource with the
/// link's full capacity. Unrouted flows get zero.
pub fn allocate_throughput_exact(flows: &[FlowDemand], capacity: &LinkMatrix) -> Vec<BigRational> {
    let mut rate = vec![BigRational::zero(); flows.len()];
    let mut remaining: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
    let mut users: BTreeMap<(u32, u32), Vec<usize>> = BTreeMap::new();
    let mut active = vec![false; flows.len()];
    let demand: Vec<Option<BigRational>> = flows.iter().map(|f| f.demand_mbps.map(exact)).collect();

    for (i, f) in flows.iter().enumerate() {
        let Some(path) = f.path.filter(|p| p.len() >= 2) else {
            continue;
        };
        active[i] = true;
        for w in path.windows(2) {
            let key = (w[0], w[1]);
            remaining
                .entry(key)
                .or_insert_with(|| exact(capacity.get(w[0], w[1]).unwrap_or(0.0)));
            let list = users.entry(key).or_default();
            if !list.contains(&i) {
                list.push(i);
            }
        }
    }

    loop {
        let count = |link: &(u32, u32)| users[link].iter().filter(|&&i| active[i]).count();
        let mut step: Option<BigRational> = None;
        let mut consider = |v: BigRational| {
            if step.as_ref().map_or(true, |s| v < *s) {
                step = Some(v);
            }
        };
        for (link, rem) in &remaining {
            let n = count(link);
            if n > 0 {
                consider(rem / BigRational::from_integer(BigInt::from(n)));
            }
        }
        for (i, d) in demand.iter().enumerate() {
            if let (true, Some(d)) = (active[i], d) {
                consider(d - &rate[i]);
            }
        }
        let Some(step) = step else { break };

        for (link, rem) in remaining.iter_mut() {
            let n = count(link);
            if n > 0 {
                *rem -= &step * BigRational::from_integer(BigInt::from(n));
            }
        }
        for i in 0..flows.len() {
            if active[i] {
                rate[i] += &step;
            }
        }
        for (link, rem) in &remaining {
            if rem.is_zero() {
                for &i in &users[link] {
                    active[i] = false;
                }
            }
        }
        for (i, d) in demand.iter().enumerate() {
            if let Some(d) = d {
                if rate[i] >= *d {
                    active[i] = false;
                }
            }
        }
    }
    rate
}

/// Same allocation rounded to `f64`.
pub fn allocate_throughput(flows: &[FlowDemand], capacity: &LinkMatrix) -> Vec<f64> {
    allocate_throughput_exact(flows, capacity)
        .iter()
        .map(|r| r.to_f64().unwrap_or(0.0))
        .collect()
}
