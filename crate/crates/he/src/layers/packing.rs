//! Slot layout for batched encrypted inference.
//!
//! Items of width t live in power-of-two regions of size R >= 2t: the item
//! occupies the low t slots, the next t slots hold a duplicate created
//! homomorphically when a dense layer needs cyclic access, and the rest
//! stays zero. Because cyclic rotations act on all N/2 slots at once,
//! power-of-two regions plus zero-masked operands guarantee cross-region
//! reads always pull zeros.
//!
//! Two batch capacities are reported: `p_naive = slots / 2t` (the naive
//! duplicated-width bound) and `p_impl = slots / R` (what this region
//! layout actually sustains). They differ whenever 2t is not a power of
//! two -- at 8192 slots and t = 768 the bound says 5 but the layout holds 4.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::ckks::CkksParams;
use crate::{HeError, Result};

/// Packing geometry for one item width under one parameter set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PackingPlan {
    /// Item width t.
    pub item_width: usize,
    /// Region size R: smallest power of two >= 2t.
    pub region: usize,
    /// Total slot count (N/2).
    pub slots: usize,
    /// Batch capacity under the region layout: slots / R.
    pub p_impl: usize,
    /// Naive duplicated-width capacity: floor(slots / 2t).
    pub p_naive: usize,
    /// Baby-step count t1 (t = t1 * t2, t1 >= t2, t1 + t2 minimal).
    pub baby: usize,
    /// Giant-step count t2.
    pub giant: usize,
}

/// Choose the packing layout for items of width `t`.
pub fn plan_packing(params: &Arc<CkksParams>, t: usize) -> Result<PackingPlan> {
    let slots = params.slots();
    if t == 0 {
        return Err(HeError::Usage("item width must be positive".into()));
    }
    if 2 * t > slots {
        return Err(HeError::Capacity(format!(
            "duplicated item width {} exceeds {} slots",
            2 * t,
            slots
        )));
    }
    let region = (2 * t).next_power_of_two();
    let (baby, giant) = bsgs_split(t);
    Ok(PackingPlan {
        item_width: t,
        region,
        slots,
        p_impl: slots / region,
        p_naive: slots / (2 * t),
        baby,
        giant,
    })
}

/// Factor t = t1 * t2 with t1 >= t2 minimizing t1 + t2.
fn bsgs_split(t: usize) -> (usize, usize) {
    let mut d = (t as f64).sqrt() as usize;
    while d >= 1 {
        if t % d == 0 {
            return (t / d, d);
        }
        d -= 1;
    }
    (t, 1)
}

/// Every rotation step the frozen circuit requests: convolution taps,
/// baby and giant steps of both dense layers, pooling windows, and the
/// duplication step.
pub fn plan_rotations(plan: &PackingPlan, conv_filter: usize, pool_size: usize) -> BTreeSet<i32> {
    let mut steps = BTreeSet::new();
    let half = (conv_filter / 2) as i32;
    for d in 1..=half {
        steps.insert(d);
        steps.insert(-d);
    }
    for j in 1..plan.baby {
        steps.insert(j as i32);
    }
    for k in 1..plan.giant {
        steps.insert((k * plan.baby) as i32);
    }
    for i in 1..pool_size {
        steps.insert(i as i32);
    }
    steps.insert(-(plan.item_width as i32));
    steps
}

/// Lay items out into regions: item i at slots [i*R, i*R + t), zeros
/// elsewhere. Shorter items are zero-padded to t.
pub fn pack_batch(items: &[Vec<f64>], plan: &PackingPlan) -> Result<Vec<f64>> {
    if items.len() > plan.p_impl {
        return Err(HeError::Capacity(format!(
            "{} items exceed batch capacity {}",
            items.len(),
            plan.p_impl
        )));
    }
    let mut slots = vec![0.0f64; plan.slots];
    for (i, item) in items.iter().enumerate() {
        if item.len() > plan.item_width {
            return Err(HeError::Capacity(format!(
                "item {} has width {} > {}",
                i,
                item.len(),
                plan.item_width
            )));
        }
        let base = i * plan.region;
        slots[base..base + item.len()].copy_from_slice(item);
    }
    Ok(slots)
}

/// Extract `count` items of `width` values from a packed slot vector.
pub fn unpack_batch(
    slots: &[f64],
    plan: &PackingPlan,
    width: usize,
    count: usize,
) -> Vec<Vec<f64>> {
    assert!(width <= plan.region);
    assert!(count <= plan.p_impl);
    (0..count)
        .map(|i| slots[i * plan.region..i * plan.region + width].to_vec())
        .collect()
}
