//! Instrumentation for homomorphic operation counts.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

/// Shared counter threaded through the layer circuits. Cheap enough to be
/// always-on; concurrent forwards may share one.
#[derive(Default)]
pub struct OpCounter {
    plain_mults: AtomicU64,
    ct_mults: AtomicU64,
    rotations: AtomicU64,
    relinearizations: AtomicU64,
    rescales: AtomicU64,
    additions: AtomicU64,
    steps: Mutex<BTreeSet<i32>>,
}

/// A point-in-time snapshot of an [`OpCounter`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub plain_mults: u64,
    pub ct_mults: u64,
    pub rotations: u64,
    pub relinearizations: u64,
    pub rescales: u64,
    pub additions: u64,
    /// Distinct rotation steps requested so far.
    pub rotation_steps: Vec<i32>,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count_plain_mult(&self) {
        self.plain_mults.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_ct_mult(&self) {
        self.ct_mults.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_rotation(&self, step: i32) {
        self.rotations.fetch_add(1, Ordering::Relaxed);
        self.steps.lock().expect("step set lock").insert(step);
    }

    pub fn count_relinearization(&self) {
        self.relinearizations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_rescale(&self) {
        self.rescales.fetch_add(1, Ordering::Relaxed);
    }

    pub fn count_addition(&self) {
        self.additions.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> OpCounts {
        OpCounts {
            plain_mults: self.plain_mults.load(Ordering::Relaxed),
            ct_mults: self.ct_mults.load(Ordering::Relaxed),
            rotations: self.rotations.load(Ordering::Relaxed),
            relinearizations: self.relinearizations.load(Ordering::Relaxed),
            rescales: self.rescales.load(Ordering::Relaxed),
            additions: self.additions.load(Ordering::Relaxed),
            rotation_steps: self
                .steps
                .lock()
                .expect("step set lock")
                .iter()
                .copied()
                .collect(),
        }
    }
}

impl OpCounts {
    /// Difference against an earlier snapshot (counts only; the step set
    /// stays cumulative).
    pub fn since(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            plain_mults: self.plain_mults - earlier.plain_mults,
            ct_mults: self.ct_mults - earlier.ct_mults,
            rotations: self.rotations - earlier.rotations,
            relinearizations: self.relinearizations - earlier.relinearizations,
            rescales: self.rescales - earlier.rescales,
            additions: self.additions - earlier.additions,
            rotation_steps: self.rotation_steps.clone(),
        }
    }
}
