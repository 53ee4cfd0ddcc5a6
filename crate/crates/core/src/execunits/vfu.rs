//! Pipelined FMA lanes. One element group (one VRF word per operand) enters
//! per cycle; its result is ready `fpu_latency + writeback_stages` cycles later
//! and leaves the pipeline in order.

use std::collections::VecDeque;

use super::{assert_current, Ctx, ReadRequest, StallLog, WriteRequest};
use crate::config::ValidConfig;
use crate::controller::{CreditUse, Scoreboard};
use crate::elem;
use crate::error::SimError;
use crate::kernels::{Opcode, VectorInstruction};
use crate::trace::{Action, Recorder};
use crate::vrf::{ShadowBuffer, Unit, VrfData};

/// A result travelling towards the VRF.
#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub id: u64,
    pub word: usize,
    pub data: Vec<u8>,
    pub ready: u64,
}

#[derive(Debug, Clone)]
struct Job {
    id: u64,
    instr: VectorInstruction,
    groups: usize,
    next: usize,
    depth: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Shadow,
    Pipe,
}

#[derive(Debug, Clone)]
pub struct Vfu {
    job: Option<Job>,
    pipe: VecDeque<Slot>,
    shadow: Option<ShadowBuffer<Slot>>,
    /// Consecutive denials after which an unbuffered result becomes urgent.
    starve_limit: u32,
    denied: u32,
    frozen: bool,
    pending_read: Option<(usize, CreditUse, ReadRequest)>,
    pending_write: Option<Source>,
    word_bits: usize,
    banks_per_reg: usize,
    latency: crate::config::FpuLatency,
    writeback: u32,
}

impl Vfu {
    pub fn new(config: &ValidConfig) -> Self {
        let f = &config.features;
        Vfu {
            job: None,
            pipe: VecDeque::new(),
            shadow: f.shadow_buffers.then(|| ShadowBuffer::new(f.shadow_depth)),
            starve_limit: f.shadow_depth.max(1) as u32,
            denied: 0,
            frozen: false,
            pending_read: None,
            pending_write: None,
            word_bits: config.vrf_bank_width_bits,
            banks_per_reg: config.banks_per_reg(),
            latency: config.fpu_latency,
            writeback: config.writeback_stages,
        }
    }

    /// The sequencer takes a new instruction once the last one has entered the pipeline.
    pub fn can_accept(&self) -> bool {
        self.job.is_none()
    }

    pub fn is_idle(&self) -> bool {
        self.job.is_none() && self.pipe.is_empty() && self.shadow.as_ref().is_none_or(|s| s.is_empty())
    }

    pub fn shadow_len(&self) -> usize {
        self.shadow.as_ref().map_or(0, |s| s.len())
    }

    pub fn dispatch(&mut self, id: u64, instr: VectorInstruction) {
        debug_assert!(self.can_accept());
        let depth = (self.latency.for_width(instr.element_width) + self.writeback) as u64;
        let groups = instr.groups(self.word_bits);
        if groups == 0 {
            return;
        }
        self.job = Some(Job {
            id,
            instr,
            groups,
            next: 0,
            depth,
        });
    }

    pub fn emit_read(&mut self, ctx: &Ctx, board: &Scoreboard, stalls: &mut StallLog) -> Option<ReadRequest> {
        if std::mem::take(&mut self.frozen) {
            if self.job.is_some() {
                stalls.record(Unit::Vfu, "writeback");
            }
            return None;
        }
        let job = self.job.as_ref()?;
        let g = job.next;
        let Some(uses) = board.permit_group(job.id, g, ctx.scheme) else {
            stalls.record(Unit::Vfu, "chain");
            return None;
        };
        let entry = board.get(job.id).expect("dispatched instruction is on the scoreboard");
        let words: Vec<usize> = entry.reads.iter().filter(|s| g < s.len).map(|s| s.start + g).collect();
        let req = ReadRequest {
            unit: Unit::Vfu,
            banks: words.iter().map(|&w| ctx.vrf_bank(w)).collect(),
            words,
        };
        self.pending_read = Some((g, uses, req.clone()));
        Some(req)
    }

    /// Returns whether an arithmetic group entered the datapath.
    pub fn on_read(
        &mut self,
        granted: bool,
        ctx: &Ctx,
        board: &mut Scoreboard,
        vrf: &VrfData,
        rec: &mut Recorder,
        stalls: &mut StallLog,
    ) -> Result<bool, SimError> {
        let Some((g, uses, req)) = self.pending_read.take() else {
            return Ok(false);
        };
        if !granted {
            stalls.record(Unit::Vfu, "read_conflict");
            for (&w, &b) in req.words.iter().zip(&req.banks) {
                rec.vrf(ctx.now, Unit::Vfu, Action::Stall, b, w);
            }
            return Ok(false);
        }
        let job = self.job.as_mut().expect("read pending for a job");
        assert_current(board, job.id, &req.words, ctx.now)?;
        board.spend(&uses);
        board.mark_read(job.id, g);
        for (&w, &b) in req.words.iter().zip(&req.banks) {
            rec.vrf(ctx.now, Unit::Vfu, Action::Read, b, w);
        }
        let data = compute_word(&job.instr, g, vrf, self.word_bits, self.banks_per_reg);
        let ready = self
            .pipe
            .back()
            .map_or(0, |s| s.ready + 1)
            .max(ctx.now + job.depth);
        self.pipe.push_back(Slot {
            id: job.id,
            word: job.instr.vd * self.banks_per_reg + g,
            data,
            ready,
        });
        let busy = job.instr.opcode.is_arithmetic();
        job.next += 1;
        if job.next == job.groups {
            self.job = None;
        }
        Ok(busy)
    }

    pub fn emit_write(&mut self, ctx: &Ctx) -> Option<WriteRequest> {
        if let Some(head) = self.shadow.as_ref().and_then(|s| s.head()) {
            self.pending_write = Some(Source::Shadow);
            return Some(WriteRequest {
                unit: Unit::Vfu,
                word: head.word,
                bank: ctx.vrf_bank(head.word),
                urgent: self.shadow.as_ref().is_some_and(|s| s.is_full()),
            });
        }
        let front = self.pipe.front().filter(|s| s.ready <= ctx.now)?;
        self.pending_write = Some(Source::Pipe);
        Some(WriteRequest {
            unit: Unit::Vfu,
            word: front.word,
            bank: ctx.vrf_bank(front.word),
            urgent: self.shadow.is_none() && self.denied >= self.starve_limit,
        })
    }

    pub fn on_write(
        &mut self,
        granted: bool,
        ctx: &Ctx,
        board: &mut Scoreboard,
        vrf: &mut VrfData,
        rec: &mut Recorder,
        stalls: &mut StallLog,
    ) {
        match self.pending_write.take() {
            Some(Source::Shadow) => {
                let shadow = self.shadow.as_mut().expect("shadow write pending");
                let head = shadow.head().expect("shadow non-empty");
                let bank = ctx.vrf_bank(head.word);
                if granted {
                    let slot = shadow.pop().unwrap();
                    rec.vrf(ctx.now, Unit::Vfu, Action::ShadowDrain, bank, slot.word);
                    commit(board, vrf, &slot);
                } else {
                    rec.vrf(ctx.now, Unit::Vfu, Action::Stall, bank, head.word);
                }
            }
            Some(Source::Pipe) => {
                let slot = self.pipe.pop_front().expect("pipe write pending");
                let bank = ctx.vrf_bank(slot.word);
                if granted {
                    self.denied = 0;
                    rec.vrf(ctx.now, Unit::Vfu, Action::Write, bank, slot.word);
                    commit(board, vrf, &slot);
                } else if let Some(shadow) = self.shadow.as_mut() {
                    rec.vrf(ctx.now, Unit::Vfu, Action::ShadowInsert, bank, slot.word);
                    shadow.push(slot).expect("shadow was empty");
                } else {
                    rec.vrf(ctx.now, Unit::Vfu, Action::Stall, bank, slot.word);
                    stalls.record(Unit::Vfu, "write_conflict");
                    self.pipe.push_front(slot);
                    self.denied += 1;
                    self.freeze();
                }
            }
            None => {}
        }
        // behind a non-empty shadow buffer, finished results queue up in order
        let waiting = self.shadow.as_ref().is_some_and(|s| !s.is_empty())
            && self.pipe.front().is_some_and(|s| s.ready <= ctx.now);
        if waiting {
            let shadow = self.shadow.as_mut().unwrap();
            if shadow.is_full() {
                stalls.record(Unit::Vfu, "shadow_full");
                self.freeze();
            } else {
                let slot = self.pipe.pop_front().unwrap();
                rec.vrf(ctx.now, Unit::Vfu, Action::ShadowInsert, ctx.vrf_bank(slot.word), slot.word);
                shadow.push(slot).expect("shadow has room");
            }
        }
    }

    /// A blocked write-back stalls the whole pipeline for a cycle.
    fn freeze(&mut self) {
        for s in &mut self.pipe {
            s.ready += 1;
        }
        self.frozen = true;
    }
}

fn commit(board: &mut Scoreboard, vrf: &mut VrfData, slot: &Slot) {
    vrf.write_word(slot.word, &slot.data);
    board.commit_write(slot.id, slot.word);
}

/// Result word `g` of an element-wise instruction, from current VRF contents.
/// Elements past `vl` keep their old value.
pub fn compute_word(instr: &VectorInstruction, g: usize, vrf: &VrfData, word_bits: usize, bpr: usize) -> Vec<u8> {
    let ew = instr.element_width;
    let epw = word_bits / ew as usize;
    let word = |reg: usize| vrf.word(reg * bpr + g);
    let mut out = word(instr.vd).to_vec();
    let count = epw.min(instr.vl.saturating_sub(g * epw));
    for e in 0..count {
        let s1 = instr.scalar_operand.unwrap_or_else(|| elem::load(ew, word(instr.vs1), e));
        let r = match instr.opcode {
            Opcode::Vfmacc => elem::fma(ew, s1, elem::load(ew, word(instr.vs2), e), elem::load(ew, &out, e)),
            Opcode::Vfmul => elem::round(ew, s1 * elem::load(ew, word(instr.vs2), e)),
            Opcode::Vfadd => elem::round(ew, s1 + elem::load(ew, word(instr.vs2), e)),
            Opcode::VmvScalar => elem::round(ew, s1),
            other => unreachable!("{other} does not execute on the VFU"),
        };
        elem::store(ew, &mut out, e, r);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::kernels::StreamBuilder;

    #[test]
    fn fma_word_with_tail() {
        let cfg = Preset::Baseline.validated();
        let mut vrf = VrfData::new(&cfg);
        let mut x = vec![0u8; 32];
        for e in 0..4 {
            elem::store(64, &mut x, e, e as f64 + 1.0);
        }
        vrf.write_word(16, &x); // v8 word 0
        let mut s = StreamBuilder::new();
        s.setvl(3, 64, 8);
        s.vfmacc_vf(24, 2.0, 8);
        let out = compute_word(&s.instrs[1], 0, &vrf, 256, 2);
        let vals: Vec<f64> = (0..4).map(|e| elem::load(64, &out, e)).collect();
        assert_eq!(vals, [2.0, 4.0, 6.0, 0.0]);
    }
}
