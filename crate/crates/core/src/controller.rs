//! Scoreboard and chaining. Instructions issue in order, one per cycle; the
//! scoreboard tracks per-group progress of everything in flight and answers
//! "may this consumer touch group `g` now?" through a [`ChainingScheme`].

use std::fmt;
use std::sync::OnceLock;

use crate::kernels::{Opcode, UnitClass, VectorInstruction, WordSpan};
use crate::registry::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DepKind {
    /// Consumer reads what the producer writes.
    Raw,
    /// Consumer overwrites what an older instruction still has to read.
    War,
    /// Both write the same words.
    Waw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dep {
    pub on: u64,
    pub kind: DepKind,
}

/// One in-flight instruction.
#[derive(Debug, Clone)]
pub struct Entry {
    pub id: u64,
    pub instr: VectorInstruction,
    pub unit: UnitClass,
    pub groups: usize,
    pub reads: Vec<WordSpan>,
    pub write: Option<WordSpan>,
    /// Per destination word: committed to the VRF.
    pub written: Vec<bool>,
    /// Per element group: all source words of the group read.
    pub read_done: Vec<bool>,
    /// Completion counter: groups finished (VRF commits, or memory writes for stores).
    pub completed: usize,
    pub total: usize,
    /// 1-bit credit earned by a commit; visible from the next cycle.
    pub raw_credit: bool,
    /// 1-bit credit earned by a read; visible from the next cycle.
    pub war_credit: bool,
    raw_credit_next: bool,
    war_credit_next: bool,
    pub deps: Vec<Dep>,
}

impl Entry {
    fn new(id: u64, instr: VectorInstruction, banks_per_reg: usize, word_bits: usize) -> Self {
        let groups = instr.groups(word_bits);
        let reads = instr.read_spans(banks_per_reg, word_bits);
        let write = instr.write_span(banks_per_reg, word_bits);
        let total = match instr.opcode {
            Opcode::Vfredsum => 1,
            _ => groups,
        };
        Entry {
            id,
            unit: instr.opcode.unit(),
            groups,
            written: vec![false; write.map_or(0, |w| w.len)],
            read_done: vec![false; groups],
            completed: 0,
            total,
            raw_credit: false,
            war_credit: false,
            raw_credit_next: false,
            war_credit_next: false,
            deps: Vec::new(),
            reads,
            write,
            instr,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.completed >= self.total
    }

    /// Whether source word `abs` has been read by this instruction.
    pub fn has_read(&self, abs: usize) -> bool {
        self.reads.iter().any(|s| {
            s.contains(abs) && {
                let g = abs - s.start;
                // whole-span sources (reduction) are read all at once
                g < self.read_done.len() && self.read_done[g]
                    || (self.instr.opcode == Opcode::Vfredsum && self.read_done.iter().all(|&r| r))
            }
        })
    }
}

/// Outcome of a chaining check for one producer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Permit {
    Denied,
    Granted,
    /// Granted by spending the producer's 1-bit credit.
    GrantedWithCredit,
}

pub trait ChainingScheme: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Read-after-write: may the consumer read producer word `rel` now?
    fn raw(&self, producer: &Entry, rel: usize) -> Permit;

    /// Write-after-read: may the consumer overwrite word `abs`, still to be read by `reader`?
    fn war(&self, reader: &Entry, abs: usize) -> Permit;

    /// Dependent instructions on the same unit wait for the older one to retire.
    fn serializes_same_unit(&self) -> bool;
}

/// Baseline chaining: a 1-bit credit per instruction, earned by a commit in
/// one cycle and spent by one dependent access in a later cycle.
#[derive(Debug, Default, Clone, Copy)]
pub struct CreditChaining;

impl ChainingScheme for CreditChaining {
    fn name(&self) -> &'static str {
        "credit"
    }

    fn raw(&self, p: &Entry, rel: usize) -> Permit {
        if p.written[rel] && p.raw_credit {
            Permit::GrantedWithCredit
        } else {
            Permit::Denied
        }
    }

    fn war(&self, r: &Entry, abs: usize) -> Permit {
        if r.has_read(abs) && r.war_credit {
            Permit::GrantedWithCredit
        } else {
            Permit::Denied
        }
    }

    fn serializes_same_unit(&self) -> bool {
        true
    }
}

/// Completion-counter chaining: a group may be consumed as soon as its
/// producer has committed it, in any order and at any rate.
#[derive(Debug, Default, Clone, Copy)]
pub struct CounterChaining;

impl ChainingScheme for CounterChaining {
    fn name(&self) -> &'static str {
        "counter"
    }

    fn raw(&self, p: &Entry, rel: usize) -> Permit {
        if p.written[rel] {
            Permit::Granted
        } else {
            Permit::Denied
        }
    }

    fn war(&self, r: &Entry, abs: usize) -> Permit {
        if r.has_read(abs) {
            Permit::Granted
        } else {
            Permit::Denied
        }
    }

    fn serializes_same_unit(&self) -> bool {
        false
    }
}

pub fn chaining_schemes() -> &'static Registry<dyn ChainingScheme> {
    static REG: OnceLock<Registry<dyn ChainingScheme>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn ChainingScheme>::new("chaining scheme")
            .with("credit", || Box::new(CreditChaining))
            .with("counter", || Box::new(CounterChaining))
    })
}

/// Credits that a granted access will spend.
pub type CreditUse = Vec<(u64, DepKind)>;

#[derive(Debug, Clone, Default)]
pub struct Scoreboard {
    entries: Vec<Entry>,
    banks_per_reg: usize,
    word_bits: usize,
}

impl Scoreboard {
    pub fn new(banks_per_reg: usize, word_bits: usize) -> Self {
        Scoreboard {
            entries: Vec::new(),
            banks_per_reg,
            word_bits,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn get(&self, id: u64) -> Option<&Entry> {
        // entries are sorted by id
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(|i| &self.entries[i])
    }

    fn get_mut(&mut self, id: u64) -> Option<&mut Entry> {
        self.entries
            .binary_search_by_key(&id, |e| e.id)
            .ok()
            .map(move |i| &mut self.entries[i])
    }

    /// Hazards `instr` would have against everything in flight.
    pub fn hazards(&self, instr: &VectorInstruction) -> Vec<Dep> {
        let probe = Entry::new(u64::MAX, instr.clone(), self.banks_per_reg, self.word_bits);
        let mut deps = Vec::new();
        for e in &self.entries {
            if let Some(w) = e.write {
                if probe.reads.iter().any(|r| r.overlaps(&w)) {
                    deps.push(Dep { on: e.id, kind: DepKind::Raw });
                }
                if probe.write.is_some_and(|pw| pw.overlaps(&w)) {
                    deps.push(Dep { on: e.id, kind: DepKind::Waw });
                }
            }
            if let Some(pw) = probe.write {
                if e.reads.iter().any(|r| r.overlaps(&pw)) {
                    deps.push(Dep { on: e.id, kind: DepKind::War });
                }
            }
        }
        deps
    }

    /// Would `instr` depend on an in-flight instruction of the given unit class?
    pub fn depends_on_unit(&self, instr: &VectorInstruction, units: &[UnitClass]) -> bool {
        self.hazards(instr)
            .iter()
            .any(|d| self.get(d.on).is_some_and(|e| units.contains(&e.unit)))
    }

    pub fn insert(&mut self, id: u64, instr: VectorInstruction) {
        let deps = self.hazards(&instr);
        let mut e = Entry::new(id, instr, self.banks_per_reg, self.word_bits);
        e.deps = deps;
        debug_assert!(self.entries.last().is_none_or(|l| l.id < id));
        self.entries.push(e);
    }

    /// May `id` access element group `g` (reads of group `g`, write of word `g`)?
    pub fn permit_group(&self, id: u64, g: usize, scheme: &dyn ChainingScheme) -> Option<CreditUse> {
        let e = self.get(id)?;
        let reads: Vec<usize> = e
            .reads
            .iter()
            .filter(|s| g < s.len)
            .map(|s| s.start + g)
            .collect();
        let writes: Vec<usize> = e.write.filter(|w| g < w.len).map(|w| w.start + g).into_iter().collect();
        self.permit_words(e, &reads, &writes, scheme)
    }

    /// May `id` access every word it reads and writes at once?
    pub fn permit_all(&self, id: u64, scheme: &dyn ChainingScheme) -> Option<CreditUse> {
        let e = self.get(id)?;
        let reads: Vec<usize> = e.reads.iter().flat_map(|s| s.start..s.start + s.len).collect();
        let writes: Vec<usize> = e.write.iter().flat_map(|w| w.start..w.start + w.len).collect();
        self.permit_words(e, &reads, &writes, scheme)
    }

    fn permit_words(
        &self,
        e: &Entry,
        reads: &[usize],
        writes: &[usize],
        scheme: &dyn ChainingScheme,
    ) -> Option<CreditUse> {
        let mut uses = CreditUse::new();
        for dep in &e.deps {
            let Some(p) = self.get(dep.on) else {
                continue; // retired: no constraint
            };
            let mut spend = false;
            match dep.kind {
                DepKind::Raw => {
                    let w = p.write.expect("RAW producer writes");
                    for &a in reads.iter().filter(|&&a| w.contains(a)) {
                        match scheme.raw(p, a - w.start) {
                            Permit::Denied => return None,
                            Permit::Granted => {}
                            Permit::GrantedWithCredit => spend = true,
                        }
                    }
                }
                DepKind::War => {
                    for &a in writes.iter().filter(|&&a| p.reads.iter().any(|s| s.contains(a))) {
                        match scheme.war(p, a) {
                            Permit::Denied => return None,
                            Permit::Granted => {}
                            Permit::GrantedWithCredit => spend = true,
                        }
                    }
                }
                DepKind::Waw => {
                    let w = p.write.expect("WAW producer writes");
                    if writes.iter().any(|&a| w.contains(a) && !p.written[a - w.start]) {
                        return None;
                    }
                }
            }
            if spend {
                uses.push((p.id, dep.kind));
            }
        }
        Some(uses)
    }

    /// Spend credits for a granted access.
    pub fn spend(&mut self, uses: &CreditUse) {
        for &(id, kind) in uses {
            if let Some(p) = self.get_mut(id) {
                match kind {
                    DepKind::Raw => p.raw_credit = false,
                    DepKind::War => p.war_credit = false,
                    DepKind::Waw => {}
                }
            }
        }
    }

    /// A destination word reached the VRF.
    pub fn commit_write(&mut self, id: u64, abs_word: usize) {
        let e = self.get_mut(id).expect("commit for an in-flight instruction");
        let w = e.write.expect("instruction writes the VRF");
        let rel = abs_word - w.start;
        assert!(!e.written[rel], "word {abs_word} of #{id} committed twice");
        e.written[rel] = true;
        e.raw_credit_next = true;
        if e.instr.opcode != Opcode::Vse {
            e.completed += 1;
        }
    }

    /// A store group reached memory.
    pub fn complete_store_group(&mut self, id: u64) {
        let e = self.get_mut(id).expect("store in flight");
        e.completed += 1;
    }

    pub fn mark_read(&mut self, id: u64, g: usize) {
        let e = self.get_mut(id).expect("read by an in-flight instruction");
        e.read_done[g] = true;
        e.war_credit_next = true;
    }

    pub fn mark_all_read(&mut self, id: u64) {
        let e = self.get_mut(id).expect("read by an in-flight instruction");
        e.read_done.iter_mut().for_each(|r| *r = true);
        e.war_credit_next = true;
    }

    /// True iff every older writer of `abs_word` has committed it.
    pub fn word_is_current(&self, id: u64, abs_word: usize) -> bool {
        self.entries.iter().take_while(|e| e.id < id).all(|e| {
            e.write
                .is_none_or(|w| !w.contains(abs_word) || e.written[abs_word - w.start])
        })
    }

    /// Publish this cycle's credits and retire finished instructions.
    pub fn end_cycle(&mut self) -> Vec<u64> {
        for e in &mut self.entries {
            if e.raw_credit_next {
                e.raw_credit = true;
                e.raw_credit_next = false;
            }
            if e.war_credit_next {
                e.war_credit = true;
                e.war_credit_next = false;
            }
        }
        let retired: Vec<u64> = self.entries.iter().filter(|e| e.is_complete()).map(|e| e.id).collect();
        self.entries.retain(|e| !e.is_complete());
        retired
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::VectorInstruction;

    fn ins(opcode: Opcode, vd: usize, vs1: usize, vs2: usize) -> VectorInstruction {
        let mut i = VectorInstruction::vsetvl(64, 64, 8);
        i.opcode = opcode;
        (i.vd, i.vs1, i.vs2) = (vd, vs1, vs2);
        i
    }

    fn board() -> Scoreboard {
        Scoreboard::new(2, 256)
    }

    #[test]
    fn independent_instructions_have_no_hazards() {
        let mut b = board();
        b.insert(0, ins(Opcode::Vle, 8, 0, 0));
        assert!(b.hazards(&ins(Opcode::Vfmul, 24, 16, 0)).is_empty());
    }

    #[test]
    fn counter_chains_group_by_group() {
        let mut b = board();
        b.insert(0, ins(Opcode::Vle, 8, 0, 0));
        b.insert(1, ins(Opcode::Vfmacc, 24, 8, 16));
        let s = CounterChaining;
        assert!(b.permit_group(1, 0, &s).is_none());
        b.commit_write(0, 16);
        b.end_cycle();
        assert_eq!(b.permit_group(1, 0, &s), Some(vec![]));
        assert!(b.permit_group(1, 1, &s).is_none());
    }

    #[test]
    fn credit_is_single_use() {
        let mut b = board();
        b.insert(0, ins(Opcode::Vle, 8, 0, 0));
        b.insert(1, ins(Opcode::Vfmacc, 24, 8, 16));
        let s = CreditChaining;
        b.commit_write(0, 16);
        b.commit_write(0, 17);
        // not visible in the cycle it is earned
        assert!(b.permit_group(1, 0, &s).is_none());
        b.end_cycle();
        let uses = b.permit_group(1, 0, &s).unwrap();
        assert_eq!(uses, vec![(0, DepKind::Raw)]);
        b.spend(&uses);
        // two words written, but only one credit
        assert!(b.permit_group(1, 1, &s).is_none());
    }

    #[test]
    fn retired_producer_no_longer_constrains() {
        let mut b = board();
        let mut small = ins(Opcode::Vle, 8, 0, 0);
        small.vl = 4; // one group
        b.insert(0, small);
        b.insert(1, ins(Opcode::Vfmacc, 24, 8, 16));
        b.commit_write(0, 16);
        assert_eq!(b.end_cycle(), vec![0]);
        assert_eq!(b.permit_group(1, 5, &CreditChaining), Some(vec![]));
    }

    #[test]
    fn war_waits_for_the_read() {
        let mut b = board();
        b.insert(0, ins(Opcode::Vfmacc, 24, 8, 16));
        b.insert(1, ins(Opcode::Vle, 8, 0, 0));
        let s = CounterChaining;
        assert!(b.permit_group(1, 0, &s).is_none());
        b.mark_read(0, 0);
        b.end_cycle();
        assert!(b.permit_group(1, 0, &s).is_some());
        assert!(b.permit_group(1, 1, &s).is_none());
    }

    #[test]
    fn shadowed_write_is_not_yet_visible() {
        let mut b = board();
        b.insert(0, ins(Opcode::Vfmul, 24, 8, 16));
        b.insert(1, ins(Opcode::Vse, 24, 0, 0));
        // a result parked in a shadow buffer has not called commit_write
        b.end_cycle();
        assert!(b.permit_group(1, 0, &CounterChaining).is_none());
        assert!(!b.word_is_current(1, 48));
    }
}
