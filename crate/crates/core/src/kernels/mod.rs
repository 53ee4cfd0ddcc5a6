//! Vector instructions, kernel descriptions and their expansion into
//! per-core instruction streams with a numeric reference.

mod axpy;
mod dotp;
mod gemm;
mod gemv;
mod listing;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::ValidConfig;
use crate::elem;
use crate::error::{KernelError, ProgramError};
use crate::memory::MemoryImage;
use crate::registry::Registry;

pub use axpy::Axpy;
pub use dotp::Dotp;
pub use gemm::Gemm;
pub use gemv::Gemv;
pub use listing::{parse_listing, to_listing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Opcode {
    Vle,
    Vse,
    Vfmacc,
    Vfmul,
    Vfadd,
    Vfredsum,
    Vsetvl,
    VmvScalar,
}

impl Opcode {
    pub const ALL: [Opcode; 8] = [
        Opcode::Vle,
        Opcode::Vse,
        Opcode::Vfmacc,
        Opcode::Vfmul,
        Opcode::Vfadd,
        Opcode::Vfredsum,
        Opcode::Vsetvl,
        Opcode::VmvScalar,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Vle => "VLE",
            Opcode::Vse => "VSE",
            Opcode::Vfmacc => "VFMACC",
            Opcode::Vfmul => "VFMUL",
            Opcode::Vfadd => "VFADD",
            Opcode::Vfredsum => "VFREDSUM",
            Opcode::Vsetvl => "VSETVL",
            Opcode::VmvScalar => "VMV_SCALAR",
        }
    }

    pub fn unit(self) -> UnitClass {
        match self {
            Opcode::Vle | Opcode::Vse => UnitClass::Vlsu,
            Opcode::Vfmacc | Opcode::Vfmul | Opcode::Vfadd | Opcode::VmvScalar => UnitClass::Vfu,
            Opcode::Vfredsum => UnitClass::Reduction,
            Opcode::Vsetvl => UnitClass::Config,
        }
    }

    /// Counts toward FPU utilization when a group of it enters the datapath.
    pub fn is_arithmetic(self) -> bool {
        matches!(self, Opcode::Vfmacc | Opcode::Vfmul | Opcode::Vfadd)
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

impl FromStr for Opcode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Opcode::ALL
            .into_iter()
            .find(|o| o.mnemonic() == s)
            .ok_or_else(|| format!("unknown opcode `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnitClass {
    Vfu,
    Vlsu,
    Reduction,
    Config,
}

/// One decoded vector operation.
///
/// Operand conventions: `VLE vd ← mem`; `VSE mem ← vd` (store data sits in the
/// destination slot, as in the RVV encoding); `VFMACC vd += vs1·vs2`;
/// `VFMUL vd = vs1·vs2`; `VFADD vd = vs1 + vs2`; with `scalar_operand` set the
/// scalar replaces `vs1`. `VFREDSUM vd[0] = s + Σ vs2` where `s` is the scalar
/// operand or `vs1[0]`. `VMV_SCALAR vd[i] = scalar`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorInstruction {
    pub opcode: Opcode,
    pub vd: usize,
    pub vs1: usize,
    pub vs2: usize,
    pub base_address: u64,
    pub stride: u64,
    pub element_width: u32,
    pub vl: usize,
    pub lmul: usize,
    pub scalar_operand: Option<f64>,
}

/// A span of VRF words: `len` words starting at absolute word `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordSpan {
    pub start: usize,
    pub len: usize,
}

impl WordSpan {
    pub fn contains(&self, w: usize) -> bool {
        w >= self.start && w < self.start + self.len
    }

    pub fn overlaps(&self, other: &WordSpan) -> bool {
        self.start < other.start + other.len && other.start < self.start + self.len
    }
}

impl VectorInstruction {
    fn base(opcode: Opcode, ew: u32, vl: usize, lmul: usize) -> Self {
        VectorInstruction {
            opcode,
            vd: 0,
            vs1: 0,
            vs2: 0,
            base_address: 0,
            stride: (ew / 8) as u64,
            element_width: ew,
            vl,
            lmul,
            scalar_operand: None,
        }
    }

    pub fn vsetvl(vl: usize, ew: u32, lmul: usize) -> Self {
        Self::base(Opcode::Vsetvl, ew, vl, lmul)
    }

    /// Elements per VRF word at this instruction's width.
    pub fn elems_per_word(&self, word_bits: usize) -> usize {
        word_bits / self.element_width as usize
    }

    /// VRF words touched per vector operand (element groups).
    pub fn groups(&self, word_bits: usize) -> usize {
        (self.vl * self.element_width as usize).div_ceil(word_bits)
    }

    pub fn is_memory(&self) -> bool {
        matches!(self.opcode, Opcode::Vle | Opcode::Vse)
    }

    /// VRF words read, as spans aligned with the element groups.
    pub fn read_spans(&self, banks_per_reg: usize, word_bits: usize) -> Vec<WordSpan> {
        let g = self.groups(word_bits);
        let span = |reg: usize, len| WordSpan {
            start: reg * banks_per_reg,
            len,
        };
        match self.opcode {
            Opcode::Vse => vec![span(self.vd, g)],
            Opcode::Vfmacc => {
                let mut v = vec![span(self.vs2, g), span(self.vd, g)];
                if self.scalar_operand.is_none() {
                    v.insert(0, span(self.vs1, g));
                }
                v
            }
            Opcode::Vfmul | Opcode::Vfadd => {
                let mut v = vec![span(self.vs2, g)];
                if self.scalar_operand.is_none() {
                    v.insert(0, span(self.vs1, g));
                }
                v
            }
            Opcode::Vfredsum => {
                let mut v = vec![span(self.vs2, g)];
                if self.scalar_operand.is_none() {
                    v.push(span(self.vs1, 1));
                }
                v
            }
            Opcode::Vle | Opcode::Vsetvl | Opcode::VmvScalar => Vec::new(),
        }
    }

    /// VRF words written.
    pub fn write_span(&self, banks_per_reg: usize, word_bits: usize) -> Option<WordSpan> {
        let start = self.vd * banks_per_reg;
        match self.opcode {
            Opcode::Vse | Opcode::Vsetvl => None,
            Opcode::Vfredsum => Some(WordSpan { start, len: 1 }),
            _ => Some(WordSpan {
                start,
                len: self.groups(word_bits),
            }),
        }
    }

    /// Elements moved between VRF and memory.
    pub fn memory_elements(&self) -> usize {
        if self.is_memory() {
            self.vl
        } else {
            0
        }
    }

    /// Multiply-accumulate elements issued to the FPU.
    pub fn fma_elements(&self) -> usize {
        match self.opcode {
            Opcode::Vfmacc | Opcode::Vfmul => self.vl,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KernelKind {
    Axpy,
    Dotp,
    Gemv,
    Gemm,
}

impl KernelKind {
    pub const ALL: [KernelKind; 4] = [
        KernelKind::Axpy,
        KernelKind::Dotp,
        KernelKind::Gemv,
        KernelKind::Gemm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Axpy => "axpy",
            KernelKind::Dotp => "dotp",
            KernelKind::Gemv => "gemv",
            KernelKind::Gemm => "gemm",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelKind {
    type Err = KernelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        KernelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| KernelError::UnknownKernel(s.to_string()))
    }
}

/// Kernel identity and problem size.
///
/// `n` is the vector length for AXPY/DOTP. GEMV computes `y(m) = A(m×n)·x(n)`;
/// GEMM computes `C(m×n) = A(m×k)·B(k×n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub element_width: u32,
    pub unroll: usize,
    pub lmul: usize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, n: usize) -> Self {
        let (m, k, lmul) = match kind {
            KernelKind::Gemv => (128, 0, 8),
            KernelKind::Gemm => (n, n, 4),
            _ => (0, 0, 8),
        };
        KernelSpec {
            kind,
            n,
            m,
            k,
            element_width: 64,
            unroll: 1,
            lmul,
        }
    }

    pub fn axpy(n: usize) -> Self {
        Self::new(KernelKind::Axpy, n)
    }

    pub fn dotp(n: usize) -> Self {
        Self::new(KernelKind::Dotp, n)
    }

    pub fn gemv(m: usize, n: usize) -> Self {
        KernelSpec {
            m,
            ..Self::new(KernelKind::Gemv, n)
        }
    }

    pub fn gemm(m: usize, n: usize, k: usize) -> Self {
        KernelSpec {
            m,
            k,
            ..Self::new(KernelKind::Gemm, n)
        }
    }

    pub fn with_unroll(self, unroll: usize) -> Self {
        KernelSpec { unroll, ..self }
    }

    pub fn with_lmul(self, lmul: usize) -> Self {
        KernelSpec { lmul, ..self }
    }

    pub fn with_ew(self, element_width: u32) -> Self {
        KernelSpec {
            element_width,
            ..self
        }
    }

    /// Size label used in reports: `n`, or `m x n [x k]` for matrices.
    pub fn size_label(&self) -> String {
        match self.kind {
            KernelKind::Axpy | KernelKind::Dotp => self.n.to_string(),
            KernelKind::Gemv => format!("{}x{}", self.m, self.n),
            KernelKind::Gemm => format!("{}x{}x{}", self.m, self.n, self.k),
        }
    }

    pub fn check(&self, config: &ValidConfig) -> Result<(), KernelError> {
        let bad = |msg: String| Err(KernelError::Invalid(msg));
        if !elem::is_supported(self.element_width) {
            return bad(format!("element width {} not in {{16, 32, 64}}", self.element_width));
        }
        if ![1, 2, 4, 8].contains(&self.lmul) {
            return bad(format!("lmul {} not in {{1, 2, 4, 8}}", self.lmul));
        }
        if ![1, 2, 4].contains(&self.unroll) {
            return bad(format!("unroll factor {} not in {{1, 2, 4}}", self.unroll));
        }
        if config.vlmax(self.element_width, self.lmul) == 0 {
            return bad("register group holds no elements".into());
        }
        match self.kind {
            KernelKind::Gemv if self.m == 0 || self.n == 0 => {
                bad("GEMV dimensions must be positive".into())
            }
            KernelKind::Gemm if self.m == 0 || self.n == 0 || self.k == 0 => {
                bad("GEMM dimensions must be positive".into())
            }
            _ => Ok(()),
        }
    }
}

/// One region of memory checked after the run.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCheck {
    pub name: String,
    pub addr: u64,
    pub element_width: u32,
    pub expected: Vec<f64>,
    /// Per-element absolute tolerance; zero means bit-exact.
    pub tolerance: Vec<f64>,
}

/// A value that must equal the sum of scalars scattered in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenSum {
    pub name: String,
    pub addrs: Vec<u64>,
    pub element_width: u32,
    pub expected: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GoldenReference {
    pub checks: Vec<GoldenCheck>,
    pub sums: Vec<GoldenSum>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenReport {
    pub passed: bool,
    pub max_abs_error: f64,
    /// `(region, index, expected, got)` of the first out-of-tolerance element.
    pub first_failure: Option<(String, usize, f64, f64)>,
}

impl fmt::Display for GoldenReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.first_failure {
            None => write!(f, "pass (max abs error {:e})", self.max_abs_error),
            Some((name, i, exp, got)) => write!(
                f,
                "mismatch in {name}[{i}]: expected {exp}, got {got} (max abs error {:e})",
                self.max_abs_error
            ),
        }
    }
}

/// Compare the final memory image against the reference.
pub fn golden_check(reference: &GoldenReference, image: &MemoryImage) -> GoldenReport {
    let mut report = GoldenReport {
        passed: true,
        max_abs_error: 0.0,
        first_failure: None,
    };
    let mut record = |name: &str, i: usize, exp: f64, got: f64, tol: f64| {
        let err = (got - exp).abs();
        let ok = if tol == 0.0 {
            got.to_bits() == exp.to_bits() || (got == 0.0 && exp == 0.0)
        } else {
            err <= tol
        };
        if err.is_finite() {
            report.max_abs_error = report.max_abs_error.max(err);
        }
        if !ok && report.first_failure.is_none() {
            report.passed = false;
            report.first_failure = Some((name.to_string(), i, exp, got));
        }
    };
    for c in &reference.checks {
        match image.read_elements(c.addr, c.element_width, c.expected.len()) {
            Ok(got) => {
                for (i, (&e, &g)) in c.expected.iter().zip(&got).enumerate() {
                    record(&c.name, i, e, g, c.tolerance[i]);
                }
            }
            Err(_) => record(&c.name, 0, f64::NAN, f64::NAN, 0.0),
        }
    }
    for s in &reference.sums {
        let mut total = 0.0;
        for &a in &s.addrs {
            total += image
                .read_elements(a, s.element_width, 1)
                .map(|v| v[0])
                .unwrap_or(f64::NAN);
        }
        record(&s.name, 0, s.expected, total, s.tolerance);
    }
    report
}

/// Output of kernel expansion.
#[derive(Debug, Clone)]
pub struct GeneratedKernel {
    pub spec: KernelSpec,
    /// One instruction stream per core.
    pub streams: Vec<Vec<VectorInstruction>>,
    pub image: MemoryImage,
    pub golden: GoldenReference,
    /// Scalar operands fetched from memory inside the loops (one per use).
    pub scalar_fetches: usize,
    /// The cores' partial results are combined behind a cluster barrier.
    pub cluster_barrier: bool,
}

impl GeneratedKernel {
    pub fn memory_elements(&self) -> usize {
        self.streams.iter().flatten().map(|i| i.memory_elements()).sum()
    }

    pub fn fma_elements(&self) -> usize {
        self.streams.iter().flatten().map(|i| i.fma_elements()).sum()
    }

    pub fn instruction_count(&self) -> usize {
        self.streams.iter().map(|s| s.len()).sum()
    }

    /// Memory elements moved per FMA, counted from the generated streams.
    pub fn operational_intensity(&self) -> f64 {
        let fma = self.fma_elements();
        if fma == 0 {
            return 0.0;
        }
        (self.memory_elements() + self.scalar_fetches) as f64 / fma as f64
    }
}

pub trait Kernel: Send + Sync + fmt::Debug {
    fn kind(&self) -> KernelKind;

    fn generate(
        &self,
        spec: &KernelSpec,
        config: &ValidConfig,
        seed: u64,
    ) -> Result<GeneratedKernel, KernelError>;
}

pub fn kernels() -> &'static Registry<dyn Kernel> {
    static REG: OnceLock<Registry<dyn Kernel>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn Kernel>::new("kernel")
            .with("axpy", || Box::new(Axpy))
            .with("dotp", || Box::new(Dotp))
            .with("gemv", || Box::new(Gemv))
            .with("gemm", || Box::new(Gemm))
    })
}

/// Expand `spec` for `config` with inputs drawn from `seed`.
pub fn generate(
    spec: &KernelSpec,
    config: &ValidConfig,
    seed: u64,
) -> Result<GeneratedKernel, KernelError> {
    spec.check(config)?;
    let kernel = kernels()
        .create(spec.kind.name())
        .map_err(|e| KernelError::UnknownKernel(e.name))?;
    let out = kernel.generate(spec, config, seed)?;
    for s in &out.streams {
        validate_stream(s, config).map_err(|e| KernelError::Invalid(e.to_string()))?;
    }
    Ok(out)
}

/// Memory elements per FMA of the stream `spec` expands to.
pub fn operational_intensity(spec: &KernelSpec, config: &ValidConfig) -> Result<f64, KernelError> {
    Ok(generate(spec, config, 0)?.operational_intensity())
}

/// Reject streams the controller could not execute.
pub fn validate_stream(stream: &[VectorInstruction], config: &ValidConfig) -> Result<(), ProgramError> {
    let mut state: Option<(usize, u32, usize)> = None;
    for (index, ins) in stream.iter().enumerate() {
        let bad = |msg: String| Err(ProgramError::Malformed { index, msg });
        if ins.opcode == Opcode::Vsetvl {
            if !elem::is_supported(ins.element_width) || ![1, 2, 4, 8].contains(&ins.lmul) {
                return bad(format!("invalid vtype e{} m{}", ins.element_width, ins.lmul));
            }
            if ins.vl > config.vlmax(ins.element_width, ins.lmul) {
                return bad(format!("vl {} exceeds vlmax", ins.vl));
            }
            state = Some((ins.vl, ins.element_width, ins.lmul));
            continue;
        }
        let Some((vl, ew, lmul)) = state else {
            return Err(ProgramError::MissingVsetvl {
                index,
                opcode: ins.opcode.mnemonic(),
            });
        };
        if (ins.vl, ins.element_width, ins.lmul) != (vl, ew, lmul) {
            return bad("operands disagree with the active vsetvl state".into());
        }
        let aligned = |r: usize| r < 32 && r.is_multiple_of(lmul);
        let regs_ok = match ins.opcode {
            Opcode::Vfredsum => ins.vd < 32 && aligned(ins.vs2),
            Opcode::Vfmacc | Opcode::Vfmul | Opcode::Vfadd => {
                aligned(ins.vd) && aligned(ins.vs2) && (ins.scalar_operand.is_some() || aligned(ins.vs1))
            }
            _ => aligned(ins.vd),
        };
        if !regs_ok {
            return bad(format!("register operand not aligned to lmul {lmul}"));
        }
        if ins.is_memory() {
            let eb = (ew / 8) as u64;
            if ins.stride != eb {
                return bad(format!("only unit stride is supported, got {}", ins.stride));
            }
            if ins.base_address % eb != 0 {
                return bad(format!("base address {:#x} misaligned", ins.base_address));
            }
            let end = ins.base_address + (ins.vl as u64) * eb;
            if end > config.tcdm_capacity() as u64 {
                return bad(format!("access ends at {end:#x}, beyond the TCDM"));
            }
        }
        if ins.opcode == Opcode::VmvScalar && ins.scalar_operand.is_none() {
            return bad("VMV_SCALAR needs a scalar operand".into());
        }
    }
    Ok(())
}

/// Appends instructions while tracking `vsetvl` state.
#[derive(Debug, Clone)]
pub(crate) struct StreamBuilder {
    pub instrs: Vec<VectorInstruction>,
    state: Option<(usize, u32, usize)>,
}

impl StreamBuilder {
    pub fn new() -> Self {
        StreamBuilder {
            instrs: Vec::new(),
            state: None,
        }
    }

    fn current(&self) -> (usize, u32, usize) {
        self.state.expect("vsetvl emitted first")
    }

    pub fn setvl(&mut self, vl: usize, ew: u32, lmul: usize) {
        if self.state != Some((vl, ew, lmul)) {
            self.instrs.push(VectorInstruction::vsetvl(vl, ew, lmul));
            self.state = Some((vl, ew, lmul));
        }
    }

    fn op(&mut self, opcode: Opcode) -> &mut VectorInstruction {
        let (vl, ew, lmul) = self.current();
        self.instrs.push(VectorInstruction::base(opcode, ew, vl, lmul));
        self.instrs.last_mut().unwrap()
    }

    pub fn vle(&mut self, vd: usize, addr: u64) {
        let i = self.op(Opcode::Vle);
        i.vd = vd;
        i.base_address = addr;
    }

    pub fn vse(&mut self, vs: usize, addr: u64) {
        let i = self.op(Opcode::Vse);
        i.vd = vs;
        i.base_address = addr;
    }

    pub fn vfmacc_vv(&mut self, vd: usize, vs1: usize, vs2: usize) {
        let i = self.op(Opcode::Vfmacc);
        (i.vd, i.vs1, i.vs2) = (vd, vs1, vs2);
    }

    pub fn vfmacc_vf(&mut self, vd: usize, scalar: f64, vs2: usize) {
        let i = self.op(Opcode::Vfmacc);
        (i.vd, i.vs2, i.scalar_operand) = (vd, vs2, Some(scalar));
    }

    pub fn vfadd_vv(&mut self, vd: usize, vs1: usize, vs2: usize) {
        let i = self.op(Opcode::Vfadd);
        (i.vd, i.vs1, i.vs2) = (vd, vs1, vs2);
    }

    pub fn vfmul_vf(&mut self, vd: usize, scalar: f64, vs2: usize) {
        let i = self.op(Opcode::Vfmul);
        (i.vd, i.vs2, i.scalar_operand) = (vd, vs2, Some(scalar));
    }

    pub fn vmv(&mut self, vd: usize, scalar: f64) {
        let i = self.op(Opcode::VmvScalar);
        (i.vd, i.scalar_operand) = (vd, Some(scalar));
    }

    pub fn vfredsum(&mut self, vd: usize, vs2: usize, init: f64) {
        let i = self.op(Opcode::Vfredsum);
        (i.vd, i.vs2, i.scalar_operand) = (vd, vs2, Some(init));
    }
}

/// Bump allocator over the TCDM address space.
#[derive(Debug)]
pub(crate) struct Allocator {
    next: u64,
    capacity: u64,
}

/// Operand bases are aligned so that half-vector splits line up with the
/// scrambling pattern.
pub(crate) const REGION_ALIGN: u64 = 512;

impl Allocator {
    pub fn new(config: &ValidConfig) -> Self {
        Allocator {
            next: 0,
            capacity: config.tcdm_capacity() as u64,
        }
    }

    pub fn alloc(&mut self, bytes: u64) -> Result<u64, KernelError> {
        let base = self.next;
        let end = base + bytes.div_ceil(REGION_ALIGN) * REGION_ALIGN;
        if end > self.capacity {
            return Err(KernelError::CapacityExceeded {
                needed: end as usize,
                available: self.capacity as usize,
            });
        }
        self.next = end;
        Ok(base)
    }
}

/// Seeded standard-normal inputs, rounded to the element width.
pub(crate) struct InputSource {
    rng: ChaCha8Rng,
    dist: Normal<f64>,
    ew: u32,
}

impl InputSource {
    pub fn new(seed: u64, ew: u32) -> Self {
        InputSource {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dist: Normal::new(0.0, 1.0).expect("unit normal"),
            ew,
        }
    }

    pub fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| elem::round(self.ew, self.dist.sample(&mut self.rng)))
            .collect()
    }
}

/// Contiguous share `[lo, hi)` of `n` items for `core` out of `cores`.
pub(crate) fn core_share(n: usize, core: usize, cores: usize) -> (usize, usize) {
    (core * n / cores, (core + 1) * n / cores)
}

/// Reduction tolerance: `1e-12` of `Σ|terms|` for doubles, a worst-case
/// reassociation bound for the narrow types.
pub(crate) fn reduction_tolerance(ew: u32, terms: usize, abs_sum: f64) -> f64 {
    let rel = if ew == 64 {
        1e-12
    } else {
        terms.max(2) as f64 * elem::epsilon(ew)
    };
    rel * abs_sum
}
