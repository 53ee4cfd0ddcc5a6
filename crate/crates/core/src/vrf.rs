//! Banked vector register file: layouts, port arbitration and shadow buffers.

use std::collections::VecDeque;
use std::fmt;
use std::sync::OnceLock;

use crate::config::ValidConfig;
use crate::registry::Registry;

/// Requesters of VRF (and TCDM) bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Unit {
    Vfu,
    Vlsu0,
    Vlsu1,
    Sldu,
}

impl Unit {
    pub fn name(self) -> &'static str {
        match self {
            Unit::Vfu => "VFU",
            Unit::Vlsu0 => "VLSU0",
            Unit::Vlsu1 => "VLSU1",
            Unit::Sldu => "SLDU",
        }
    }

    pub fn vlsu(iface: usize) -> Unit {
        if iface == 0 {
            Unit::Vlsu0
        } else {
            Unit::Vlsu1
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A word of an architectural register (or register group).
///
/// `word` may run past the end of `reg` when the register is the base of a
/// group; the next register of the group then continues the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VrfAddress {
    pub reg: usize,
    pub word: usize,
}

pub trait VrfLayout: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Bank holding word 0 of `reg`.
    fn start_bank(&self, reg: usize, banks_per_reg: usize, banks: usize) -> usize;
}

/// Registers start on bank `reg * banks_per_reg`, i.e. bank 0 or 2 for the defaults.
#[derive(Debug, Default, Clone, Copy)]
pub struct StandardLayout;

impl VrfLayout for StandardLayout {
    fn name(&self) -> &'static str {
        "standard"
    }

    fn start_bank(&self, reg: usize, banks_per_reg: usize, banks: usize) -> usize {
        (reg * banks_per_reg) % banks
    }
}

/// Like the standard layout, rotated by one more bank for each set of 8 registers.
#[derive(Debug, Default, Clone, Copy)]
pub struct BarberPoleLayout;

impl VrfLayout for BarberPoleLayout {
    fn name(&self) -> &'static str {
        "barber_pole"
    }

    fn start_bank(&self, reg: usize, banks_per_reg: usize, banks: usize) -> usize {
        (reg / 8 + reg * banks_per_reg) % banks
    }
}

pub fn layouts() -> &'static Registry<dyn VrfLayout> {
    static REG: OnceLock<Registry<dyn VrfLayout>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn VrfLayout>::new("VRF layout")
            .with("standard", || Box::new(StandardLayout))
            .with("barber_pole", || Box::new(BarberPoleLayout))
    })
}

/// Bank of a register word. Words index the whole group starting at `reg`.
pub fn bank_of(address: VrfAddress, layout: &dyn VrfLayout, config: &ValidConfig) -> usize {
    let start = layout.start_bank(address.reg, config.banks_per_reg(), config.vrf_banks);
    (start + address.word) % config.vrf_banks
}

/// Register-file contents, one contiguous byte array.
#[derive(Clone, PartialEq, Eq)]
pub struct VrfData {
    bytes: Vec<u8>,
    word_bytes: usize,
}

impl fmt::Debug for VrfData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VrfData({} bytes)", self.bytes.len())
    }
}

impl VrfData {
    pub fn new(config: &ValidConfig) -> Self {
        VrfData {
            bytes: vec![0; 32 * config.vlen_bits / 8],
            word_bytes: config.vrf_word_bytes(),
        }
    }

    /// Word `w` counted from v0 word 0; register groups are contiguous.
    pub fn word(&self, abs_word: usize) -> &[u8] {
        let s = abs_word * self.word_bytes;
        &self.bytes[s..s + self.word_bytes]
    }

    pub fn write_word(&mut self, abs_word: usize, data: &[u8]) {
        let s = abs_word * self.word_bytes;
        self.bytes[s..s + data.len()].copy_from_slice(data);
    }

    pub fn word_bytes(&self) -> usize {
        self.word_bytes
    }
}

/// Where a pending write comes from, as seen by the priority policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WriteCandidate {
    pub unit: Unit,
    pub bank: usize,
    /// The write sits in a full shadow buffer, or has been starved long enough.
    pub urgent: bool,
}

pub trait WritePriority: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Rank of a candidate within its bank; lower wins.
    fn rank(&self, candidate: &WriteCandidate) -> u8;

    /// Whether a losing VFU write may be parked instead of stalling the pipeline.
    fn deprioritizes_vfu(&self) -> bool;
}

/// Fixed order VFU > VLSU0 > VLSU1 > SLDU.
#[derive(Debug, Default, Clone, Copy)]
pub struct StaticPriority;

impl WritePriority for StaticPriority {
    fn name(&self) -> &'static str {
        "static"
    }

    fn rank(&self, c: &WriteCandidate) -> u8 {
        match c.unit {
            Unit::Vfu => 0,
            Unit::Vlsu0 => 1,
            Unit::Vlsu1 => 2,
            Unit::Sldu => 3,
        }
    }

    fn deprioritizes_vfu(&self) -> bool {
        false
    }
}

/// Memory traffic first unless a buffered write can no longer wait.
#[derive(Debug, Default, Clone, Copy)]
pub struct DynamicPriority;

impl WritePriority for DynamicPriority {
    fn name(&self) -> &'static str {
        "dynamic"
    }

    fn rank(&self, c: &WriteCandidate) -> u8 {
        if c.urgent {
            // full VFU buffer before full VLSU1 buffer
            return if c.unit == Unit::Vfu { 0 } else { 1 };
        }
        match c.unit {
            Unit::Vlsu0 => 2,
            Unit::Vlsu1 => 3,
            Unit::Vfu => 4,
            Unit::Sldu => 5,
        }
    }

    fn deprioritizes_vfu(&self) -> bool {
        true
    }
}

pub fn priorities() -> &'static Registry<dyn WritePriority> {
    static REG: OnceLock<Registry<dyn WritePriority>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn WritePriority>::new("write priority")
            .with("static", || Box::new(StaticPriority))
            .with("dynamic", || Box::new(DynamicPriority))
    })
}

/// Grant up to `ports` writes per bank by policy rank (ties: input order).
pub fn arbitrate_writes(
    candidates: &[WriteCandidate],
    policy: &dyn WritePriority,
    ports: usize,
    banks: usize,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by_key(|&i| (policy.rank(&candidates[i]), i));
    let mut used = vec![0usize; banks];
    let mut granted = vec![false; candidates.len()];
    for i in order {
        let b = candidates[i].bank;
        if used[b] < ports {
            used[b] += 1;
            granted[i] = true;
        }
    }
    granted
}

/// An all-or-nothing set of reads issued by one unit in one cycle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadGroup {
    pub unit: Unit,
    pub banks: Vec<usize>,
}

/// Grant read groups in the given (priority) order while every bank keeps a free port.
pub fn arbitrate_reads(groups: &[ReadGroup], ports: usize, banks: usize) -> Vec<bool> {
    let mut used = vec![0usize; banks];
    groups
        .iter()
        .map(|g| {
            let mut need = vec![0usize; banks];
            for &b in &g.banks {
                need[b] += 1;
            }
            let fits = (0..banks).all(|b| used[b] + need[b] <= ports);
            if fits {
                for b in 0..banks {
                    used[b] += need[b];
                }
            }
            fits
        })
        .collect()
}

/// Bounded FIFO of writes that lost arbitration.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowBuffer<T> {
    entries: VecDeque<T>,
    capacity: usize,
}

impl<T> ShadowBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        ShadowBuffer {
            entries: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn head(&self) -> Option<&T> {
        self.entries.front()
    }

    /// Returns the entry back when the buffer is full.
    pub fn push(&mut self, item: T) -> Result<(), T> {
        if self.is_full() {
            return Err(item);
        }
        self.entries.push_back(item);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        self.entries.pop_front()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.entries.iter()
    }
}

/// Commit the head of `buffer` if its bank is free this cycle; FIFO order only.
pub fn drain_shadow<T>(
    buffer: &mut ShadowBuffer<T>,
    bank_of: impl Fn(&T) -> usize,
    bank_free: &[bool],
) -> Option<T> {
    let b = bank_of(buffer.head()?);
    if bank_free[b] {
        buffer.pop()
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn at(reg: usize, word: usize) -> VrfAddress {
        VrfAddress { reg, word }
    }

    #[test]
    fn standard_layout_starts_at_zero_or_two() {
        let cfg = Preset::DoubleBwTroop.validated();
        assert_eq!(bank_of(at(0, 0), &StandardLayout, &cfg), 0);
        assert_eq!(bank_of(at(1, 0), &StandardLayout, &cfg), 2);
        assert_eq!(bank_of(at(2, 3), &StandardLayout, &cfg), 3);
    }

    #[test]
    fn barber_pole_rotates_register_sets() {
        let cfg = Preset::Baseline.validated();
        assert_eq!(bank_of(at(8, 0), &BarberPoleLayout, &cfg), 1);
        assert_eq!(bank_of(at(16, 0), &BarberPoleLayout, &cfg), 2);
        assert_eq!(bank_of(at(24, 0), &BarberPoleLayout, &cfg), 3);
        assert_eq!(bank_of(at(0, 0), &BarberPoleLayout, &cfg), 0);
    }

    fn cand(unit: Unit, bank: usize) -> WriteCandidate {
        WriteCandidate {
            unit,
            bank,
            urgent: false,
        }
    }

    #[test]
    fn static_priority_favours_vfu() {
        let c = [cand(Unit::Vlsu0, 2), cand(Unit::Vfu, 2)];
        assert_eq!(arbitrate_writes(&c, &StaticPriority, 1, 4), vec![false, true]);
    }

    #[test]
    fn dynamic_priority_favours_vlsu() {
        let c = [cand(Unit::Vlsu0, 2), cand(Unit::Vfu, 2)];
        assert_eq!(arbitrate_writes(&c, &DynamicPriority, 1, 4), vec![true, false]);
    }

    #[test]
    fn full_shadow_restores_vfu_priority() {
        let mut vfu = cand(Unit::Vfu, 1);
        vfu.urgent = true;
        let c = [cand(Unit::Vlsu0, 1), vfu];
        assert_eq!(arbitrate_writes(&c, &DynamicPriority, 1, 4), vec![false, true]);
    }

    #[test]
    fn distinct_banks_identical_under_both_modes() {
        let c = [cand(Unit::Vlsu0, 1), cand(Unit::Vfu, 2)];
        for p in [&StaticPriority as &dyn WritePriority, &DynamicPriority] {
            assert_eq!(arbitrate_writes(&c, p, 1, 4), vec![true, true]);
        }
    }

    #[test]
    fn read_ports_are_limited_per_bank() {
        let groups = [
            ReadGroup {
                unit: Unit::Vfu,
                banks: vec![0, 0, 0],
            },
            ReadGroup {
                unit: Unit::Vlsu0,
                banks: vec![0],
            },
            ReadGroup {
                unit: Unit::Vlsu1,
                banks: vec![1],
            },
        ];
        assert_eq!(arbitrate_reads(&groups, 3, 4), vec![true, false, true]);
    }

    #[test]
    fn shadow_drains_in_fifo_order() {
        let mut buf = ShadowBuffer::new(2);
        buf.push(1usize).unwrap();
        buf.push(2usize).unwrap();
        assert!(buf.push(3).is_err());
        // head targets bank 1 which is busy: nothing drains even though bank 2 is free
        let free = [true, false, true, true];
        assert_eq!(drain_shadow(&mut buf, |&b| b, &free), None);
        assert_eq!(buf.len(), 2);
        let free = [true, true, false, true];
        assert_eq!(drain_shadow(&mut buf, |&b| b, &free), Some(1));
        assert_eq!(buf.head(), Some(&2));
    }
}
