//! Vector reductions. Once the source register is complete the partial values
//! are combined in a series of steps, each an FPU pass plus, across lanes, an
//! exchange through the slide unit.

use std::fmt;
use std::sync::OnceLock;

use super::{assert_current, Ctx, ReadRequest, StallLog, WriteRequest};
use crate::config::ValidConfig;
use crate::controller::Scoreboard;
use crate::elem;
use crate::error::SimError;
use crate::kernels::VectorInstruction;
use crate::registry::{Registry, UnknownStrategy};
use crate::trace::{Action, Recorder};
use crate::vrf::{Unit, VrfData};

pub trait ReductionStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Cycle cost of each combine step for `partials` values spread over `lanes`.
    fn steps(&self, partials: usize, lanes: usize, step_latency: u32) -> Vec<u32>;

    /// Functional result, rounding every addition to `ew`.
    fn reduce(&self, ew: u32, values: &[f64]) -> f64;
}

/// One addition at a time: `P − 1` steps, the last `F − 1` of which cross
/// lanes and pay an extra exchange cycle.
#[derive(Debug, Default, Clone, Copy)]
pub struct SequentialReduction;

impl ReductionStrategy for SequentialReduction {
    fn name(&self) -> &'static str {
        "sequential"
    }

    fn steps(&self, partials: usize, lanes: usize, step_latency: u32) -> Vec<u32> {
        let n = partials.saturating_sub(1);
        let cross = lanes.saturating_sub(1).min(n);
        let mut v = vec![step_latency; n - cross];
        v.extend(std::iter::repeat_n(step_latency + 1, cross));
        v
    }

    fn reduce(&self, ew: u32, values: &[f64]) -> f64 {
        values.iter().fold(0.0, |acc, &v| elem::round(ew, acc + v))
    }
}

/// Pairwise tree: `⌈log2 P⌉` steps, each an FPU pass plus an exchange.
#[derive(Debug, Default, Clone, Copy)]
pub struct Log2Reduction;

impl ReductionStrategy for Log2Reduction {
    fn name(&self) -> &'static str {
        "log2"
    }

    fn steps(&self, partials: usize, _lanes: usize, step_latency: u32) -> Vec<u32> {
        let n = partials.max(1).next_power_of_two().trailing_zeros() as usize;
        vec![step_latency + 1; n]
    }

    fn reduce(&self, ew: u32, values: &[f64]) -> f64 {
        let mut v = values.to_vec();
        while v.len() > 1 {
            let half = v.len().div_ceil(2);
            for i in 0..v.len() / 2 {
                v[i] = elem::round(ew, v[i] + v[i + half]);
            }
            v.truncate(half);
        }
        v.first().copied().unwrap_or(0.0)
    }
}

pub fn reductions() -> &'static Registry<dyn ReductionStrategy> {
    static REG: OnceLock<Registry<dyn ReductionStrategy>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn ReductionStrategy>::new("reduction")
            .with("sequential", || Box::new(SequentialReduction))
            .with("log2", || Box::new(Log2Reduction))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionPlan {
    pub mode: &'static str,
    /// Cycle cost of each step, in order.
    pub steps: Vec<u32>,
}

impl ReductionPlan {
    pub fn cycles(&self) -> u64 {
        self.steps.iter().map(|&c| c as u64).sum()
    }
}

/// Steps for reducing `vl` partials; each FPU pass costs `step_latency` cycles.
pub fn plan_reduction(vl: usize, lanes: usize, mode: &str, step_latency: u32) -> Result<ReductionPlan, UnknownStrategy> {
    let s = reductions().create(mode)?;
    Ok(ReductionPlan {
        mode: s.name(),
        steps: s.steps(vl, lanes, step_latency),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Waiting,
    Read,
    Compute { write_at: u64 },
    Write,
}

#[derive(Debug, Clone)]
struct Job {
    id: u64,
    instr: VectorInstruction,
    steps: Vec<u32>,
    step: usize,
    phase: Phase,
    result: Vec<u8>,
    started: u64,
}

/// Sequencer for `VFREDSUM`; occupies the VFU issue slot while it runs.
#[derive(Debug)]
pub struct ReductionUnit {
    strategy: Box<dyn ReductionStrategy>,
    job: Option<Job>,
    pending_read: Option<ReadRequest>,
    pending_write: Option<WriteRequest>,
    lanes: usize,
    word_bits: usize,
    banks_per_reg: usize,
    latency: crate::config::FpuLatency,
    writeback: u32,
    /// Cycles spent reducing, summed over instructions.
    pub cycles: u64,
}

impl ReductionUnit {
    pub fn new(config: &ValidConfig) -> Result<Self, UnknownStrategy> {
        Ok(ReductionUnit {
            strategy: reductions().create(config.features.reduction_name())?,
            job: None,
            pending_read: None,
            pending_write: None,
            lanes: config.lanes,
            word_bits: config.vrf_bank_width_bits,
            banks_per_reg: config.banks_per_reg(),
            latency: config.fpu_latency,
            writeback: config.writeback_stages,
            cycles: 0,
        })
    }

    pub fn is_idle(&self) -> bool {
        self.job.is_none()
    }

    pub fn dispatch(&mut self, id: u64, instr: VectorInstruction) {
        let step_latency = self.latency.for_width(instr.element_width) + self.writeback;
        let mut steps = self.strategy.steps(instr.vl, self.lanes, step_latency);
        if steps.is_empty() {
            // folding in the initial value still takes one pass
            steps.push(step_latency);
        }
        self.job = Some(Job {
            id,
            instr,
            steps,
            step: 0,
            phase: Phase::Waiting,
            result: Vec::new(),
            started: 0,
        });
    }

    pub fn emit_read(
        &mut self,
        ctx: &Ctx,
        board: &mut Scoreboard,
        vrf: &VrfData,
        stalls: &mut StallLog,
    ) -> Result<Option<ReadRequest>, SimError> {
        let bpr = self.banks_per_reg;
        let Some(job) = self.job.as_mut() else {
            return Ok(None);
        };
        if job.phase == Phase::Waiting {
            let Some(uses) = board.permit_all(job.id, ctx.scheme) else {
                stalls.record(Unit::Sldu, "chain");
                return Ok(None);
            };
            let entry = board.get(job.id).unwrap();
            let words: Vec<usize> = entry.reads.iter().flat_map(|s| s.start..s.start + s.len).collect();
            assert_current(board, job.id, &words, ctx.now)?;
            board.spend(&uses);
            board.mark_all_read(job.id);
            job.result = reduce_value(&*self.strategy, &job.instr, vrf, self.word_bits, bpr);
            job.started = ctx.now;
            job.phase = Phase::Read;
        }
        if job.phase != Phase::Read {
            return Ok(None);
        }
        let groups = job.instr.groups(self.word_bits).max(1);
        let word = job.instr.vs2 * bpr + job.step % groups;
        let req = ReadRequest {
            unit: Unit::Sldu,
            words: vec![word],
            banks: vec![ctx.vrf_bank(word)],
        };
        self.pending_read = Some(req.clone());
        Ok(Some(req))
    }

    pub fn on_read(&mut self, granted: bool, ctx: &Ctx, rec: &mut Recorder, stalls: &mut StallLog) {
        let Some(req) = self.pending_read.take() else { return };
        let job = self.job.as_mut().unwrap();
        if granted {
            rec.vrf(ctx.now, Unit::Sldu, Action::Read, req.banks[0], req.words[0]);
            let cost = job.steps[job.step] as u64;
            job.phase = Phase::Compute {
                write_at: ctx.now + cost.max(2) - 1,
            };
        } else {
            rec.vrf(ctx.now, Unit::Sldu, Action::Stall, req.banks[0], req.words[0]);
            stalls.record(Unit::Sldu, "read_conflict");
        }
    }

    pub fn emit_write(&mut self, ctx: &Ctx) -> Option<WriteRequest> {
        let job = self.job.as_mut()?;
        if let Phase::Compute { write_at } = job.phase {
            if write_at <= ctx.now {
                job.phase = Phase::Write;
            }
        }
        if job.phase != Phase::Write {
            return None;
        }
        let word = job.instr.vd * self.banks_per_reg;
        let req = WriteRequest {
            unit: Unit::Sldu,
            word,
            bank: ctx.vrf_bank(word),
            urgent: false,
        };
        self.pending_write = Some(req);
        Some(req)
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
        let Some(req) = self.pending_write.take() else { return };
        if !granted {
            rec.vrf(ctx.now, Unit::Sldu, Action::Stall, req.bank, req.word);
            stalls.record(Unit::Sldu, "write_conflict");
            return;
        }
        rec.vrf(ctx.now, Unit::Sldu, Action::Write, req.bank, req.word);
        let job = self.job.as_mut().unwrap();
        job.step += 1;
        if job.step < job.steps.len() {
            job.phase = Phase::Read;
            return;
        }
        vrf.write_word(req.word, &job.result);
        board.commit_write(job.id, req.word);
        self.cycles += ctx.now + 1 - job.started;
        self.job = None;
    }
}

/// Final destination word: element 0 replaced by the reduction, the rest kept.
fn reduce_value(
    strategy: &dyn ReductionStrategy,
    instr: &VectorInstruction,
    vrf: &VrfData,
    word_bits: usize,
    bpr: usize,
) -> Vec<u8> {
    let ew = instr.element_width;
    let epw = word_bits / ew as usize;
    let values: Vec<f64> = (0..instr.vl)
        .map(|i| elem::load(ew, vrf.word(instr.vs2 * bpr + i / epw), i % epw))
        .collect();
    let init = instr
        .scalar_operand
        .unwrap_or_else(|| elem::load(ew, vrf.word(instr.vs1 * bpr), 0));
    let sum = elem::round(ew, init + strategy.reduce(ew, &values));
    let mut out = vrf.word(instr.vd * bpr).to_vec();
    elem::store(ew, &mut out, 0, sum);
    out
}
