//! Experiment plumbing shared by the command-line tool and the acceptance
//! tests: single runs, parameter sweeps, the published-utilization
//! comparison, and the short scenario streams behind the VRF bank diagrams.

use std::fmt::Write as _;
use std::io;

use rayon::prelude::*;

use crate::config::{ClusterConfig, Preset};
use crate::elem;
use crate::engine::{run, CycleStats, Engine, RunOptions, RunResult};
use crate::error::SimError;
use crate::kernels::{KernelKind, KernelSpec, StreamBuilder};
use crate::memory::MemoryImage;
use crate::trace::{Action, BankEvent, Loc, Space};
use crate::vrf::Unit;

pub const CSV_HEADER: [&str; 14] = [
    "preset",
    "kernel",
    "n",
    "ew",
    "lmul",
    "unroll",
    "seed",
    "cycles",
    "fpu_busy",
    "utilization",
    "vrf_conflicts",
    "tcdm_conflicts",
    "chain_stalls",
    "reduction_cycles",
];

/// One simulation request.
#[derive(Debug, Clone)]
pub struct Experiment {
    /// Preset name or config file name; goes into the `preset` column.
    pub label: String,
    pub config: ClusterConfig,
    pub spec: KernelSpec,
    pub seed: u64,
}

impl Experiment {
    pub fn preset(preset: Preset, spec: KernelSpec) -> Self {
        Experiment {
            label: preset.name().to_string(),
            config: preset.config(),
            spec,
            seed: 1,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Experiment { seed, ..self }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub spec: KernelSpec,
    pub seed: u64,
    pub stats: CycleStats,
}

impl Row {
    pub fn utilization(&self) -> f64 {
        self.stats.utilization()
    }

    pub fn record(&self) -> [String; 14] {
        let s = &self.stats;
        [
            self.label.clone(),
            self.spec.kind.name().to_string(),
            self.spec.size_label(),
            self.spec.element_width.to_string(),
            self.spec.lmul.to_string(),
            self.spec.unroll.to_string(),
            self.seed.to_string(),
            s.cycles.to_string(),
            s.fpu_busy.to_string(),
            format!("{:.6}", s.utilization()),
            s.vrf_conflicts().to_string(),
            s.tcdm_conflicts.to_string(),
            s.chain_stalls.to_string(),
            s.reduction_cycles.to_string(),
        ]
    }
}

/// Validate, generate, simulate and golden-check one experiment.
pub fn run_experiment(exp: &Experiment, options: RunOptions) -> Result<(Row, RunResult), SimError> {
    let cfg = exp.config.clone().validate()?;
    let result = run(&cfg, &exp.spec, exp.seed, options)?;
    let row = Row {
        label: exp.label.clone(),
        spec: exp.spec,
        seed: exp.seed,
        stats: result.stats.clone(),
    };
    Ok((row, result))
}

/// Header plus one record per row.
pub fn write_csv<W: io::Write>(out: W, rows: &[Row]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn csv_string(rows: &[Row]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).expect("writing to memory");
    String::from_utf8(buf).expect("CSV is UTF-8")
}

/// Kernel shape used for each preset in the published comparison: the
/// baseline clusters run the plain strip-mined loops, the optimized cluster
/// runs the unrolled, software-pipelined DOTP and AXPY.
pub fn reference_spec(preset: Preset, kind: KernelKind) -> KernelSpec {
    let unrolled = preset == Preset::DoubleBwTroop;
    match kind {
        KernelKind::Dotp | KernelKind::Axpy => {
            let spec = KernelSpec::new(kind, 4096);
            if unrolled {
                spec.with_lmul(4).with_unroll(2)
            } else {
                spec
            }
        }
        KernelKind::Gemv => KernelSpec::gemv(128, 64),
        KernelKind::Gemm => KernelSpec::gemm(64, 64, 64),
    }
}

/// `(lmul, unroll)` of [`reference_spec`].
pub fn reference_shape(preset: Preset, kind: KernelKind) -> (usize, usize) {
    let s = reference_spec(preset, kind);
    (s.lmul, s.unroll)
}

/// Grow the TCDM banks (keeping their count) until `spec`'s operands fit.
pub fn fit_tcdm(config: &mut ClusterConfig, spec: &KernelSpec) {
    let eb = elem::bytes(spec.element_width);
    let elems = match spec.kind {
        KernelKind::Axpy | KernelKind::Dotp => 2 * spec.n + 64,
        KernelKind::Gemv => spec.m * spec.n + spec.m + spec.n,
        KernelKind::Gemm => spec.m * spec.k + spec.k * spec.n + spec.m * spec.n,
    };
    // allocations are padded to whole TCDM rows; leave room for that
    let needed = (elems * eb + 8 * config.tcdm_banks * 8).div_ceil(config.tcdm_banks);
    while config.tcdm_bank_bytes < needed {
        config.tcdm_bank_bytes *= 2;
    }
}

/// Cross product of sizes, unroll factors and feature sets over one base experiment.
#[derive(Debug, Clone)]
pub struct Sweep {
    pub base: Experiment,
    pub sizes: Vec<usize>,
    pub unrolls: Vec<usize>,
    /// Each entry is one set of `name=on|off` overrides; empty means none.
    pub features: Vec<Vec<(String, bool)>>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub size: usize,
    pub unroll: usize,
    pub features: Vec<(String, bool)>,
    pub result: Result<Row, String>,
}

impl Sweep {
    pub fn new(base: Experiment) -> Self {
        Sweep {
            sizes: vec![base.spec.n],
            unrolls: vec![base.spec.unroll],
            features: vec![Vec::new()],
            base,
        }
    }

    fn label(&self, features: &[(String, bool)]) -> String {
        if features.is_empty() {
            return self.base.label.clone();
        }
        let f: Vec<String> = features
            .iter()
            .map(|(k, on)| format!("{k}={}", if *on { "on" } else { "off" }))
            .collect();
        format!("{}[{}]", self.base.label, f.join(";"))
    }

    /// Grid points in row order: feature set, then size, then unroll.
    pub fn points(&self) -> Vec<Experiment> {
        let mut out = Vec::new();
        for fs in &self.features {
            let mut sizes = self.sizes.clone();
            sizes.sort_unstable();
            sizes.dedup();
            let mut unrolls = self.unrolls.clone();
            unrolls.sort_unstable();
            unrolls.dedup();
            for &n in &sizes {
                for &u in &unrolls {
                    let mut config = self.base.config.clone();
                    let mut label = self.label(fs);
                    for (k, on) in fs {
                        if let Err(e) = config.features.set(k, *on) {
                            label = format!("{label}!{e}");
                        }
                    }
                    let spec = KernelSpec { n, unroll: u, ..self.base.spec };
                    fit_tcdm(&mut config, &spec);
                    out.push(Experiment {
                        label,
                        config,
                        spec,
                        seed: self.base.seed,
                    });
                }
            }
        }
        out
    }

    /// Run every point in parallel; failures are kept per row.
    pub fn run(&self) -> Vec<SweepPoint> {
        let mut features = Vec::new();
        for fs in &self.features {
            for _ in 0..self.sizes_len() * self.unrolls_len() {
                features.push(fs.clone());
            }
        }
        self.points()
            .into_par_iter()
            .zip(features)
            .map(|(exp, fs)| {
                let result = if exp.label.contains('!') {
                    Err(exp.label.split_once('!').map_or(String::new(), |(_, e)| e.to_string()))
                } else {
                    run_experiment(&exp, RunOptions::default())
                        .map(|(row, _)| row)
                        .map_err(|e| e.to_string())
                };
                SweepPoint {
                    size: exp.spec.n,
                    unroll: exp.spec.unroll,
                    features: fs,
                    result,
                }
            })
            .collect()
    }

    fn sizes_len(&self) -> usize {
        let mut v = self.sizes.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }

    fn unrolls_len(&self) -> usize {
        let mut v = self.unrolls.clone();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

/// DOTP sizes for the long-vector sweep.
pub const LONG_SWEEP_SIZES: [usize; 7] = [512, 1024, 2048, 4096, 8192, 16384, 32768];

/// DOTP utilization against vector length, with the TCDM enlarged to hold the operands.
pub fn long_vector_sweep(preset: Preset, sizes: &[usize]) -> Vec<SweepPoint> {
    let mut sweep = Sweep::new(Experiment::preset(preset, reference_spec(preset, KernelKind::Dotp)));
    sweep.sizes = sizes.to_vec();
    sweep.run()
}

/// One bar of the published utilization chart. `expected` is `None` for bars
/// whose value is not stated numerically; those are reported but not gated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedUtilization {
    pub preset: Preset,
    pub kernel: KernelKind,
    pub expected: Option<f64>,
}

/// Published FPU utilizations at 4096 elements, 64-bit.
pub const FIGURE5: [ExpectedUtilization; 12] = [
    // quoted for the original cluster, 1:1 bandwidth
    ExpectedUtilization { preset: Preset::Baseline, kernel: KernelKind::Dotp, expected: Some(0.33) },
    ExpectedUtilization { preset: Preset::Baseline, kernel: KernelKind::Axpy, expected: Some(0.21) },
    // unanchored
    ExpectedUtilization { preset: Preset::Baseline, kernel: KernelKind::Gemv, expected: None },
    ExpectedUtilization { preset: Preset::Baseline, kernel: KernelKind::Gemm, expected: None },
    // quoted peaks of the doubled-bandwidth cluster
    ExpectedUtilization { preset: Preset::DoubleBw, kernel: KernelKind::Dotp, expected: Some(0.59) },
    ExpectedUtilization { preset: Preset::DoubleBw, kernel: KernelKind::Axpy, expected: Some(0.44) },
    ExpectedUtilization { preset: Preset::DoubleBw, kernel: KernelKind::Gemv, expected: Some(0.92) },
    // unanchored; compute-bound neutrality is checked separately
    ExpectedUtilization { preset: Preset::DoubleBw, kernel: KernelKind::Gemm, expected: None },
    // quoted for the optimized cluster; AXPY with unroll 2
    ExpectedUtilization { preset: Preset::DoubleBwTroop, kernel: KernelKind::Dotp, expected: Some(0.76) },
    ExpectedUtilization { preset: Preset::DoubleBwTroop, kernel: KernelKind::Axpy, expected: Some(0.55) },
    ExpectedUtilization { preset: Preset::DoubleBwTroop, kernel: KernelKind::Gemv, expected: Some(0.98) },
    ExpectedUtilization { preset: Preset::DoubleBwTroop, kernel: KernelKind::Gemm, expected: None },
];

/// Published speedups `(faster, reference, kernel, expected, tolerance)`, in cycles.
pub const SPEEDUPS: [(Preset, Preset, KernelKind, f64, f64); 5] = [
    (Preset::DoubleBw, Preset::Baseline, KernelKind::Dotp, 1.8, 0.15),
    (Preset::DoubleBw, Preset::Baseline, KernelKind::Axpy, 2.1, 0.15),
    (Preset::DoubleBwTroop, Preset::Baseline, KernelKind::Gemv, 1.5, 0.15),
    (Preset::DoubleBwTroop, Preset::Baseline, KernelKind::Dotp, 2.2, 0.2),
    (Preset::DoubleBwTroop, Preset::Baseline, KernelKind::Axpy, 2.6, 0.2),
];

/// Allowed distance from a published utilization.
pub const UTILIZATION_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone)]
pub struct Figure5Row {
    pub preset: Preset,
    pub spec: KernelSpec,
    pub cycles: u64,
    pub achieved: f64,
    pub expected: Option<f64>,
}

impl Figure5Row {
    pub fn delta(&self) -> Option<f64> {
        self.expected.map(|e| (self.achieved - e).abs())
    }

    pub fn passed(&self) -> bool {
        self.delta().is_none_or(|d| d <= UTILIZATION_TOLERANCE + 1e-12)
    }
}

#[derive(Debug, Clone)]
pub struct SpeedupRow {
    pub faster: Preset,
    pub reference: Preset,
    pub kernel: KernelKind,
    pub achieved: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl SpeedupRow {
    pub fn passed(&self) -> bool {
        (self.achieved - self.expected).abs() <= self.tolerance + 1e-12
    }
}

#[derive(Debug, Clone)]
pub struct Figure5Report {
    pub rows: Vec<Figure5Row>,
    pub speedups: Vec<SpeedupRow>,
}

impl Figure5Report {
    pub fn row(&self, preset: Preset, kernel: KernelKind) -> &Figure5Row {
        self.rows
            .iter()
            .find(|r| r.preset == preset && r.spec.kind == kernel)
            .expect("every preset × kernel is simulated")
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(Figure5Row::passed) && self.speedups.iter().all(SpeedupRow::passed)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("preset      kernel shape  cycles  achieved expected  delta  status\n");
        for r in &self.rows {
            let (exp, delta, status) = match (r.expected, r.delta()) {
                (Some(e), Some(d)) => (
                    format!("{e:.3}"),
                    format!("{d:.3}"),
                    if r.passed() { "ok" } else { "FAIL" },
                ),
                _ => ("-".into(), "-".into(), "unanchored"),
            };
            let _ = writeln!(
                out,
                "{:<11} {:<6} l{}u{}  {:>7}  {:>7.3}  {:>7}  {:>5}  {}",
                r.preset.name(),
                r.spec.kind.name(),
                r.spec.lmul,
                r.spec.unroll,
                r.cycles,
                r.achieved,
                exp,
                delta,
                status
            );
        }
        out.push_str("\nspeedup                          achieved expected\n");
        for s in &self.speedups {
            let _ = writeln!(
                out,
                "{:<11} vs {:<9} {:<6} {:>7.2}x  {:.1}x±{:.2}  {}",
                s.faster.name(),
                s.reference.name(),
                s.kernel.name(),
                s.achieved,
                s.expected,
                s.tolerance,
                if s.passed() { "ok" } else { "FAIL" }
            );
        }
        out
    }
}

/// Simulate every preset × kernel in its reference shape and compare with
/// the published values.
pub fn reproduce_figure5() -> Result<Figure5Report, SimError> {
    let rows: Vec<Result<Figure5Row, SimError>> = FIGURE5
        .par_iter()
        .map(|e| {
            let spec = reference_spec(e.preset, e.kernel);
            let (row, _) = run_experiment(&Experiment::preset(e.preset, spec), RunOptions::default())?;
            Ok(Figure5Row {
                preset: e.preset,
                spec,
                cycles: row.stats.cycles,
                achieved: row.utilization(),
                expected: e.expected,
            })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut report = Figure5Report { rows, speedups: Vec::new() };
    for (faster, reference, kernel, expected, tolerance) in SPEEDUPS {
        let a = report.row(reference, kernel).cycles as f64;
        let b = report.row(faster, kernel).cycles as f64;
        report.speedups.push(SpeedupRow {
            faster,
            reference,
            kernel,
            achieved: a / b,
            expected,
            tolerance,
        });
    }
    Ok(report)
}

/// The short instruction streams behind the VRF bank diagrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Independent VLE ‖ VFMACC, two interfaces issuing in lockstep.
    CoupledInterfaces,
    /// The same stream with each interface owning half of every vector.
    DecoupledInterfaces,
    /// VLE chained into VFMACC with the VFU always winning write conflicts.
    StaticPriority,
    /// The same chain with dynamic priority and shadow buffers.
    DynamicPriority,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::CoupledInterfaces,
        Scenario::DecoupledInterfaces,
        Scenario::StaticPriority,
        Scenario::DynamicPriority,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::CoupledInterfaces => "coupled",
            Scenario::DecoupledInterfaces => "decoupled",
            Scenario::StaticPriority => "static_priority",
            Scenario::DynamicPriority => "dynamic_priority",
        }
    }

    /// One core; no VLSU start-up latency, so only bank conflicts shape the trace.
    pub fn config(self) -> ClusterConfig {
        let mut cfg = match self {
            Scenario::CoupledInterfaces => Preset::DoubleBw.config(),
            Scenario::DecoupledInterfaces => Preset::DoubleBwTroop.config(),
            Scenario::StaticPriority | Scenario::DynamicPriority => Preset::Baseline.config(),
        };
        cfg.num_cores = 1;
        cfg.vlsu_issue_latency = 0;
        if self.chained() {
            // every register group starts on the same bank, so the chained
            // VFU write lands on the bank the load is writing
            cfg.features.vrf_layout = crate::config::VrfLayoutKind::Standard;
            let dynamic = self == Scenario::DynamicPriority;
            cfg.features.dynamic_priority = dynamic;
            cfg.features.shadow_buffers = dynamic;
        }
        cfg
    }

    fn chained(self) -> bool {
        matches!(self, Scenario::StaticPriority | Scenario::DynamicPriority)
    }
}

/// Number of VLE/VFMACC pairs in a scenario stream.
pub const SCENARIO_PAIRS: usize = 12;

/// Measured steady state of a scenario.
#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub trace: Vec<BankEvent>,
    /// Inclusive cycle window: the middle VFMACCs, away from the prologue and drain.
    pub window: (u64, u64),
    /// Whether the VFU read an operand, per cycle of the window.
    pub vfu_busy: Vec<bool>,
    /// Denied VLSU VRF writes inside the window.
    pub vlsu_write_stalls: usize,
    /// Denied VFU VRF accesses inside the window.
    pub vfu_stalls: usize,
    /// Writes parked in a shadow buffer inside the window; these cost no cycle.
    pub shadow_inserts: usize,
}

impl ScenarioReport {
    pub fn utilization(&self) -> f64 {
        if self.vfu_busy.is_empty() {
            return 0.0;
        }
        self.vfu_busy.iter().filter(|&&b| b).count() as f64 / self.vfu_busy.len() as f64
    }

    /// Smallest period with which the busy pattern repeats, if any divides the window.
    pub fn period(&self) -> Option<usize> {
        let v = &self.vfu_busy;
        (1..=v.len() / 2).find(|&p| (p..v.len()).all(|i| v[i] == v[i - p]))
    }

    /// Busy pattern as `1`/`0`, one character per cycle.
    pub fn pattern(&self) -> String {
        self.vfu_busy.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Build and run a scenario stream with tracing on.
pub fn run_scenario(scenario: Scenario) -> Result<ScenarioReport, SimError> {
    let cfg = scenario.config().validate()?;
    let (ew, lmul) = (64, 8);
    let vl = cfg.vlmax(ew, lmul);
    let eb = elem::bytes(ew) as u64;
    let mut image = MemoryImage::zeroed(cfg.tcdm_capacity());
    let values: Vec<f64> = (0..vl * SCENARIO_PAIRS).map(|i| 1.0 + (i % 7) as f64).collect();
    image.write_elements(0, ew, &values)?;

    let mut s = StreamBuilder::new();
    s.setvl(vl, ew, lmul);
    // loads alternate between v0 and v8; results alternate between v16 and v24
    let buf = |i: usize| (i % 2) * lmul;
    let dst = |i: usize| (2 + i % 2) * lmul;
    for i in 0..SCENARIO_PAIRS {
        s.vle(buf(i), i as u64 * vl as u64 * eb);
        if scenario.chained() {
            s.vfmacc_vf(dst(i), 0.5, buf(i));
        } else {
            // reads last round's results, independent of the load in flight
            s.vfmacc_vf(dst(i), 0.5, dst(i + 1));
        }
    }
    let engine = Engine::new(&cfg, vec![s.instrs], image, true)?;
    let result = engine.run_to_completion()?;
    Ok(measure(scenario, result))
}

fn measure(scenario: Scenario, result: RunResult) -> ScenarioReport {
    let trace = result.trace;
    let vfu_reads: Vec<u64> = {
        let mut v: Vec<u64> = trace
            .iter()
            .filter(|e| e.space == Space::Vrf && e.unit == Unit::Vfu && e.action == Action::Read)
            .map(|e| e.cycle)
            .collect();
        v.dedup();
        v
    };
    // skip the first and last quarter of the VFU's activity
    let (lo, hi) = match (vfu_reads.first(), vfu_reads.last()) {
        (Some(&a), Some(&b)) if b > a => {
            let q = (b - a) / 4;
            (a + q, b - q)
        }
        _ => (0, 0),
    };
    let in_window = |c: u64| c >= lo && c <= hi;
    let vfu_busy = (lo..=hi).map(|c| vfu_reads.binary_search(&c).is_ok()).collect();
    let count = |action: Action, unit: fn(Unit) -> bool| {
        trace
            .iter()
            .filter(|e| {
                e.space == Space::Vrf
                    && e.action == action
                    && unit(e.unit)
                    && in_window(e.cycle)
            })
            .filter(|e| matches!(e.loc, Loc::Vrf { .. }))
            .count()
    };
    let vlsu = |u| matches!(u, Unit::Vlsu0 | Unit::Vlsu1);
    let vlsu_write_stalls = count(Action::Stall, vlsu);
    let vfu_stalls = count(Action::Stall, |u| u == Unit::Vfu);
    let shadow_inserts = count(Action::ShadowInsert, |_| true);
    ScenarioReport {
        scenario,
        trace,
        window: (lo, hi),
        vfu_busy,
        vlsu_write_stalls,
        vfu_stalls,
        shadow_inserts,
    }
}

/// TCDM conflicts of a unit-stride load stream on one core with two
/// decoupled interfaces, split per load instruction.
#[derive(Debug, Clone)]
pub struct StreamConflicts {
    pub lmul: usize,
    pub scrambling: bool,
    /// Denied TCDM accesses for each VLE, in program order.
    pub per_load: Vec<usize>,
}

impl StreamConflicts {
    /// Conflicts after the first load, which starts both interfaces cold.
    pub fn steady(&self) -> &[usize] {
        self.per_load.get(1..).unwrap_or(&[])
    }
}

/// Run `loads` back-to-back unit-stride VLEs of register group size `lmul`.
pub fn tcdm_load_stream(lmul: usize, scrambling: bool, loads: usize) -> Result<StreamConflicts, SimError> {
    let mut cfg = Preset::DoubleBwTroop.config();
    cfg.num_cores = 1;
    cfg.vlsu_issue_latency = 0;
    cfg.features.address_scrambling = scrambling;
    let cfg = cfg.validate()?;
    let ew = 64;
    let vl = cfg.vlmax(ew, lmul);
    let bytes = (vl * elem::bytes(ew)) as u64;
    let mut s = StreamBuilder::new();
    s.setvl(vl, ew, lmul);
    for i in 0..loads {
        s.vle((i % (32 / lmul)) * lmul, i as u64 * bytes);
    }
    let image = MemoryImage::zeroed(cfg.tcdm_capacity());
    let result = Engine::new(&cfg, vec![s.instrs], image, true)?.run_to_completion()?;
    let mut per_load = vec![0; loads];
    for e in &result.trace {
        if let (Space::Tcdm, Action::Stall, Loc::Tcdm(addr)) = (e.space, e.action, e.loc) {
            per_load[(addr / bytes) as usize] += 1;
        }
    }
    Ok(StreamConflicts {
        lmul,
        scrambling,
        per_load,
    })
}
