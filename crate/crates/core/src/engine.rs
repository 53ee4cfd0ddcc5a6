//! The synchronous cycle loop.
//!
//! Each cycle runs five phases in a fixed order for every core: issue,
//! request emission, TCDM service (cluster-wide), VRF arbitration, and
//! commit/retire. Nothing depends on hash order or wall-clock time, so a run
//! is a pure function of its configuration, program and memory image.

use std::collections::BTreeMap;

use crate::config::ValidConfig;
use crate::controller::{chaining_schemes, ChainingScheme, Scoreboard};
use crate::error::SimError;
use crate::execunits::{Ctx, ReadRequest, ReductionUnit, StallLog, TcdmGroup, Vfu, Vlsu, WriteRequest};
use crate::kernels::{self, golden_check, GeneratedKernel, GoldenReport, KernelSpec, UnitClass, VectorInstruction};
use crate::memory::{address_maps, AddressMap, Crossbar, MemoryImage, TcdmRequest};
use crate::roofline;
use crate::trace::{BankEvent, Recorder};
use crate::vrf::{arbitrate_reads, arbitrate_writes, layouts, priorities, ReadGroup, VrfData, VrfLayout, WriteCandidate, WritePriority};

/// Cycles without any grant, dispatch or retirement before a run is declared deadlocked.
pub const WATCHDOG_CYCLES: u64 = 1000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CycleStats {
    /// First issue to last retirement, inclusive.
    pub cycles: u64,
    /// Busy cycles summed over cores.
    pub fpu_busy: u64,
    /// Cores that executed at least one instruction.
    pub active_cores: usize,
    pub vrf_write_conflicts: u64,
    pub vrf_read_conflicts: u64,
    /// Denied 64-bit port requests.
    pub tcdm_conflicts: u64,
    /// Unit-cycles blocked by chaining permissions.
    pub chain_stalls: u64,
    pub reduction_cycles: u64,
    pub instructions: u64,
    /// `UNIT.reason → cycles`.
    pub stall_histogram: BTreeMap<String, u64>,
}

impl CycleStats {
    /// Busy cycles over available FPU cycles; 0 for an empty run.
    pub fn utilization(&self) -> f64 {
        if self.cycles == 0 || self.active_cores == 0 {
            0.0
        } else {
            self.fpu_busy as f64 / (self.cycles as f64 * self.active_cores as f64)
        }
    }

    pub fn vrf_conflicts(&self) -> u64 {
        self.vrf_write_conflicts + self.vrf_read_conflicts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub spec: Option<KernelSpec>,
    pub stats: CycleStats,
    pub image: MemoryImage,
    /// Sorted bank events; empty unless tracing was requested.
    pub trace: Vec<BankEvent>,
    pub golden: Option<GoldenReport>,
}

impl RunResult {
    /// The trace in its text form, one event per line.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in &self.trace {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

struct Core {
    program: Vec<VectorInstruction>,
    pc: usize,
    next_id: u64,
    board: Scoreboard,
    vfu: Vfu,
    vlsu: Vlsu,
    red: ReductionUnit,
    vrf: VrfData,
    busy: u64,
    last_activity: Option<u64>,
    rec: Recorder,
    stalls: StallLog,
}

impl Core {
    fn finished(&self) -> bool {
        self.pc == self.program.len()
            && self.board.is_empty()
            && self.vfu.is_idle()
            && self.vlsu.is_idle()
            && self.red.is_idle()
    }

    /// Phase 1: dispatch the next instruction if its unit can take it.
    fn issue(&mut self, now: u64, scheme: &dyn ChainingScheme) -> bool {
        let Some(instr) = self.program.get(self.pc) else {
            return false;
        };
        let class = instr.opcode.unit();
        // dependent instructions on one unit do not overlap under credit chaining
        let serial = |units: &[UnitClass]| scheme.serializes_same_unit() && self.board.depends_on_unit(instr, units);
        let ready = match class {
            UnitClass::Config => true,
            UnitClass::Vfu | UnitClass::Reduction => {
                self.vfu.can_accept() && self.red.is_idle() && !serial(&[UnitClass::Vfu, UnitClass::Reduction])
            }
            UnitClass::Vlsu => self.vlsu.can_accept() && !serial(&[UnitClass::Vlsu]),
        };
        if !ready {
            return false;
        }
        let instr = instr.clone();
        self.pc += 1;
        self.last_activity = Some(now);
        if class == UnitClass::Config {
            return true;
        }
        let id = self.next_id;
        self.next_id += 1;
        self.board.insert(id, instr.clone());
        match class {
            UnitClass::Vfu => self.vfu.dispatch(id, instr),
            UnitClass::Reduction => self.red.dispatch(id, instr),
            UnitClass::Vlsu => self.vlsu.dispatch(id, instr, now),
            UnitClass::Config => unreachable!(),
        }
        true
    }
}

/// Requests of one core in one cycle.
#[derive(Default)]
struct Emitted {
    tcdm: Vec<TcdmGroup>,
    /// (source, request); source 0 = VFU, 1 = VLSU, 2 = SLDU.
    reads: Vec<(u8, ReadRequest)>,
    writes: Vec<(u8, WriteRequest)>,
}

pub struct Engine {
    config: ValidConfig,
    layout: Box<dyn VrfLayout>,
    map: Box<dyn AddressMap>,
    scheme: Box<dyn ChainingScheme>,
    policy: Box<dyn WritePriority>,
    cores: Vec<Core>,
    memory: MemoryImage,
    crossbar: Crossbar,
    /// Charge a cluster barrier once every core has drained.
    barrier: bool,
    now: u64,
    last_progress: u64,
    vrf_write_conflicts: u64,
    vrf_read_conflicts: u64,
    tcdm_conflicts: u64,
}

fn strategy<T: ?Sized>(r: Result<Box<T>, crate::registry::UnknownStrategy>) -> Result<Box<T>, SimError> {
    r.map_err(|e| SimError::Internal(e.to_string()))
}

impl Engine {
    pub fn new(
        config: &ValidConfig,
        streams: Vec<Vec<VectorInstruction>>,
        image: MemoryImage,
        trace: bool,
    ) -> Result<Self, SimError> {
        for s in &streams {
            kernels::validate_stream(s, config)?;
        }
        let f = &config.features;
        let mut cores = Vec::new();
        for (i, program) in streams.into_iter().enumerate() {
            cores.push(Core {
                program,
                pc: 0,
                next_id: 0,
                board: Scoreboard::new(config.banks_per_reg(), config.vrf_bank_width_bits),
                vfu: Vfu::new(config),
                vlsu: Vlsu::new(config),
                red: ReductionUnit::new(config).map_err(|e| SimError::Internal(e.to_string()))?,
                vrf: VrfData::new(config),
                busy: 0,
                last_activity: None,
                rec: Recorder::new(trace, i, config.vrf_banks, config.banks_per_reg()),
                stalls: StallLog::default(),
            });
        }
        Ok(Engine {
            layout: strategy(layouts().create(f.vrf_layout.name()))?,
            map: strategy(address_maps().create(f.address_map_name()))?,
            scheme: strategy(chaining_schemes().create(f.chaining_scheme_name()))?,
            policy: strategy(priorities().create(f.priority_policy_name()))?,
            config: config.clone(),
            cores,
            memory: image,
            crossbar: Crossbar::new(config.tcdm_banks, config.num_cores),
            barrier: false,
            now: 0,
            last_progress: 0,
            vrf_write_conflicts: 0,
            vrf_read_conflicts: 0,
            tcdm_conflicts: 0,
        })
    }

    pub fn with_cluster_barrier(mut self, on: bool) -> Self {
        self.barrier = on;
        self
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn finished(&self) -> bool {
        self.cores.iter().all(Core::finished)
    }

    /// Entries currently parked in shadow buffers, over all cores.
    pub fn shadow_occupancy(&self) -> usize {
        self.cores.iter().map(|c| c.vfu.shadow_len() + c.vlsu.shadow_len()).sum()
    }

    /// Advance one cycle.
    pub fn step(&mut self) -> Result<(), SimError> {
        let now = self.now;
        let mut progress = false;
        let ctx = Ctx {
            now,
            config: &self.config,
            layout: self.layout.as_ref(),
            map: self.map.as_ref(),
            scheme: self.scheme.as_ref(),
        };

        // 1: issue
        for core in &mut self.cores {
            progress |= core.issue(now, ctx.scheme);
        }

        // 2: emit
        let mut emitted = Vec::with_capacity(self.cores.len());
        for core in &mut self.cores {
            let mut e = Emitted::default();
            if let Some(r) = core.vfu.emit_read(&ctx, &core.board, &mut core.stalls) {
                e.reads.push((0, r));
            }
            let (tcdm, reads, writes) = core.vlsu.emit(&ctx, &core.board, &mut core.stalls)?;
            e.tcdm = tcdm;
            e.reads.extend(reads.into_iter().map(|r| (1, r)));
            if let Some(r) = core.red.emit_read(&ctx, &mut core.board, &core.vrf, &mut core.stalls)? {
                e.reads.push((2, r));
            }
            if let Some(w) = core.vfu.emit_write(&ctx) {
                e.writes.push((0, w));
            }
            e.writes.extend(writes.into_iter().map(|w| (1, w)));
            if let Some(w) = core.red.emit_write(&ctx) {
                e.writes.push((2, w));
            }
            emitted.push(e);
        }

        // 3: TCDM service across the cluster
        let mut requests = Vec::new();
        for (c, e) in emitted.iter().enumerate() {
            for g in &e.tcdm {
                requests.extend(g.accesses.iter().map(|a| TcdmRequest {
                    core: c,
                    port: a.port,
                    kind: a.kind,
                    addr: a.addr,
                    bank: a.bank,
                }));
            }
        }
        let granted = self.crossbar.service(&requests);
        self.tcdm_conflicts += granted.iter().filter(|&&g| !g).count() as u64;
        let mut flags = granted.into_iter();
        for (core, e) in self.cores.iter_mut().zip(&emitted) {
            let per_group: Vec<Vec<bool>> = e
                .tcdm
                .iter()
                .map(|g| flags.by_ref().take(g.accesses.len()).collect())
                .collect();
            progress |= per_group.iter().any(|g| g.iter().all(|&f| f));
            core.vlsu
                .on_tcdm(&per_group, &ctx, &mut core.board, &mut self.memory, &mut core.rec, &mut core.stalls)?;
        }

        // 4: VRF reads (before writes), then writes
        let banks = self.config.vrf_banks;
        for (core, e) in self.cores.iter_mut().zip(&emitted) {
            let mut order: Vec<usize> = (0..e.reads.len()).collect();
            order.sort_by_key(|&i| e.reads[i].1.unit);
            let groups: Vec<ReadGroup> = order
                .iter()
                .map(|&i| ReadGroup {
                    unit: e.reads[i].1.unit,
                    banks: e.reads[i].1.banks.clone(),
                })
                .collect();
            let sorted = arbitrate_reads(&groups, self.config.vrf_read_ports, banks);
            let mut ok = vec![false; e.reads.len()];
            for (k, &i) in order.iter().enumerate() {
                ok[i] = sorted[k];
            }
            self.vrf_read_conflicts += ok.iter().filter(|&&g| !g).count() as u64;
            progress |= ok.iter().any(|&g| g);
            let mut vlsu_ok = Vec::new();
            for (i, (src, _)) in e.reads.iter().enumerate() {
                match src {
                    0 => {
                        if core.vfu.on_read(ok[i], &ctx, &mut core.board, &core.vrf, &mut core.rec, &mut core.stalls)? {
                            core.busy += 1;
                        }
                    }
                    1 => vlsu_ok.push(ok[i]),
                    _ => core.red.on_read(ok[i], &ctx, &mut core.rec, &mut core.stalls),
                }
            }
            core.vlsu
                .on_reads(&vlsu_ok, &ctx, &mut core.board, &core.vrf, &mut core.rec, &mut core.stalls)?;

            let cands: Vec<WriteCandidate> = e
                .writes
                .iter()
                .map(|(_, w)| WriteCandidate {
                    unit: w.unit,
                    bank: w.bank,
                    urgent: w.urgent,
                })
                .collect();
            let ok = arbitrate_writes(&cands, self.policy.as_ref(), self.config.vrf_write_ports, banks);
            debug_assert!(ok.iter().filter(|&&g| g).count() <= banks * self.config.vrf_write_ports);
            self.vrf_write_conflicts += ok.iter().filter(|&&g| !g).count() as u64;
            progress |= ok.iter().any(|&g| g);
            let mut vlsu_ok = Vec::new();
            for (i, (src, _)) in e.writes.iter().enumerate() {
                match src {
                    0 => core.vfu.on_write(ok[i], &ctx, &mut core.board, &mut core.vrf, &mut core.rec, &mut core.stalls),
                    1 => vlsu_ok.push(ok[i]),
                    _ => core.red.on_write(ok[i], &ctx, &mut core.board, &mut core.vrf, &mut core.rec, &mut core.stalls),
                }
            }
            core.vlsu
                .on_writes(&vlsu_ok, &ctx, &mut core.board, &mut core.vrf, &mut core.rec, &mut core.stalls);
        }

        // 5: publish credits, retire
        for core in &mut self.cores {
            if !core.board.end_cycle().is_empty() {
                core.last_activity = Some(now);
                progress = true;
            }
        }

        if progress {
            self.last_progress = now;
        } else if now - self.last_progress >= WATCHDOG_CYCLES {
            let core = self.cores.iter().position(|c| !c.finished()).unwrap_or(0);
            return Err(SimError::Deadlock {
                core,
                at: now,
                cycles: WATCHDOG_CYCLES,
            });
        }
        self.now += 1;
        Ok(())
    }

    /// Step until every core has retired its program.
    pub fn run_to_completion(mut self) -> Result<RunResult, SimError> {
        while !self.finished() {
            self.step()?;
        }
        if self.shadow_occupancy() != 0 {
            return Err(SimError::Internal("shadow buffers not empty at drain".into()));
        }
        let mut stats = CycleStats {
            cycles: self
                .cores
                .iter()
                .filter_map(|c| c.last_activity)
                .max()
                .map_or(0, |t| t + 1),
            active_cores: self.cores.iter().filter(|c| c.last_activity.is_some()).count(),
            vrf_write_conflicts: self.vrf_write_conflicts,
            vrf_read_conflicts: self.vrf_read_conflicts,
            tcdm_conflicts: self.tcdm_conflicts,
            ..CycleStats::default()
        };
        if self.barrier && stats.active_cores > 1 {
            stats.cycles += self.config.barrier_cycles as u64;
        }
        let mut stalls = StallLog::default();
        let mut trace = Vec::new();
        for c in &mut self.cores {
            stats.fpu_busy += c.busy;
            stats.reduction_cycles += c.red.cycles;
            stats.instructions += c.next_id;
            stalls.merge(&c.stalls);
            trace.extend(c.rec.take());
        }
        stats.chain_stalls = stalls.chain;
        stats.stall_histogram = stalls.histogram;
        trace.sort();
        Ok(RunResult {
            spec: None,
            stats,
            image: self.memory,
            trace,
            golden: None,
        })
    }
}

/// Simulate a generated kernel, check its result and the roofline bound.
pub fn run_kernel(config: &ValidConfig, kernel: &GeneratedKernel, options: RunOptions) -> Result<RunResult, SimError> {
    let engine = Engine::new(config, kernel.streams.clone(), kernel.image.clone(), options.trace)?
        .with_cluster_barrier(kernel.cluster_barrier);
    let mut result = engine.run_to_completion()?;
    result.spec = Some(kernel.spec);
    let report = golden_check(&kernel.golden, &result.image);
    if !report.passed {
        return Err(SimError::Golden(report.to_string()));
    }
    result.golden = Some(report);
    if kernel.fma_elements() > 0 {
        let m = kernel.operational_intensity();
        let r = config.bandwidth_to_compute_ratio().as_f64();
        let ceiling = roofline::ceiling(m, r).map_err(|e| SimError::Internal(e.to_string()))?;
        let u = result.stats.utilization();
        if u > ceiling + roofline::SLACK {
            return Err(SimError::Internal(format!(
                "utilization {u:.4} exceeds roofline ceiling {ceiling:.4} (m={m:.4}, r={r})"
            )));
        }
    }
    Ok(result)
}

/// Generate `spec` with `seed` and run it on `config`.
pub fn run(config: &ValidConfig, spec: &KernelSpec, seed: u64, options: RunOptions) -> Result<RunResult, SimError> {
    let kernel = kernels::generate(spec, config, seed)?;
    run_kernel(config, &kernel, options)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Speedup {
    /// `cycles(A) / cycles(B)`.
    pub speedup: f64,
    /// `utilization(B) − utilization(A)`.
    pub utilization_delta: f64,
}

/// Speedup of run `b` over run `a`; both must run the same kernel and size.
pub fn compare(a: &RunResult, b: &RunResult) -> Result<Speedup, SimError> {
    let label = |r: &RunResult| {
        r.spec
            .map_or_else(|| "unknown".to_string(), |s| format!("{} {}", s.kind, s.size_label()))
    };
    let same = match (a.spec, b.spec) {
        (Some(x), Some(y)) => x.kind == y.kind && (x.n, x.m, x.k, x.element_width) == (y.n, y.m, y.k, y.element_width),
        _ => false,
    };
    if !same {
        return Err(SimError::MismatchedRuns(label(a), label(b)));
    }
    let speedup = if b.stats.cycles == 0 {
        1.0
    } else {
        a.stats.cycles as f64 / b.stats.cycles as f64
    };
    Ok(Speedup {
        speedup,
        utilization_delta: b.stats.utilization() - a.stats.utilization(),
    })
}
