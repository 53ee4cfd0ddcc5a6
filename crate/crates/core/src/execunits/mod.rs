//! Execution units as per-cycle producers of VRF and TCDM requests.
//!
//! Every cycle a unit first *emits* its requests, remembering what it asked
//! for, then is told which of them were granted. Nothing moves between the two
//! calls, so the engine can arbitrate all units of the cluster at once.

pub mod reduction;
pub mod vfu;
pub mod vlsu;

use std::collections::BTreeMap;

use crate::config::ValidConfig;
use crate::controller::{ChainingScheme, Scoreboard};
use crate::error::SimError;
use crate::memory::{AccessKind, AddressMap};
use crate::vrf::{bank_of, Unit, VrfAddress, VrfLayout};

pub use reduction::{plan_reduction, reductions, ReductionPlan, ReductionStrategy, ReductionUnit};
pub use vfu::Vfu;
pub use vlsu::{Vlsu, VlsuMode};

/// Per-cycle view of the machine shared by all units.
pub struct Ctx<'a> {
    pub now: u64,
    pub config: &'a ValidConfig,
    pub layout: &'a dyn VrfLayout,
    pub map: &'a dyn AddressMap,
    pub scheme: &'a dyn ChainingScheme,
}

impl Ctx<'_> {
    /// Bank holding absolute VRF word `abs_word`.
    pub fn vrf_bank(&self, abs_word: usize) -> usize {
        let bpr = self.config.banks_per_reg();
        bank_of(
            VrfAddress {
                reg: abs_word / bpr,
                word: abs_word % bpr,
            },
            self.layout,
            self.config,
        )
    }

    pub fn tcdm_bank(&self, addr: u64) -> Result<usize, SimError> {
        Ok(crate::memory::bank_of_address(addr, self.map, self.config)?.0)
    }
}

/// An all-or-nothing set of VRF reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadRequest {
    pub unit: Unit,
    pub words: Vec<usize>,
    pub banks: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteRequest {
    pub unit: Unit,
    pub word: usize,
    pub bank: usize,
    pub urgent: bool,
}

/// One 64-bit TCDM port access.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortAccess {
    pub unit: Unit,
    pub port: usize,
    pub kind: AccessKind,
    pub addr: u64,
    pub bank: usize,
}

/// TCDM accesses that succeed only together (one VRF word, or a coupled pair).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TcdmGroup {
    pub accesses: Vec<PortAccess>,
}

/// Stall bookkeeping: total chaining stalls plus a per-unit, per-reason histogram.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StallLog {
    pub chain: u64,
    pub histogram: BTreeMap<String, u64>,
}

impl StallLog {
    pub fn record(&mut self, unit: Unit, reason: &str) {
        if reason == "chain" {
            self.chain += 1;
        }
        *self.histogram.entry(format!("{}.{reason}", unit.name())).or_default() += 1;
    }

    pub fn merge(&mut self, other: &StallLog) {
        self.chain += other.chain;
        for (k, v) in &other.histogram {
            *self.histogram.entry(k.clone()).or_default() += v;
        }
    }
}

/// RAW safety: every source word must hold its latest committed value.
pub(crate) fn assert_current(board: &Scoreboard, id: u64, words: &[usize], now: u64) -> Result<(), SimError> {
    match words.iter().find(|&&w| !board.word_is_current(id, w)) {
        Some(w) => Err(SimError::Internal(format!(
            "cycle {now}: instruction #{id} read VRF word {w} before its producer committed it"
        ))),
        None => Ok(()),
    }
}
