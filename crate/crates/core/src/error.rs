use thiserror::Error;

/// Rejections produced while building or validating a machine description.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field} must be strictly positive")]
    NotPositive { field: &'static str },
    #[error("{field} = {value} is not a power of two")]
    NotPowerOfTwo { field: &'static str, value: usize },
    #[error("vrf_bank_width_bits = {got} must equal 64 * lanes = {expected}")]
    BankWidth { got: usize, expected: usize },
    #[error("vlen_bits = {vlen} is not a multiple of vrf_bank_width_bits = {width}")]
    VlenNotMultiple { vlen: usize, width: usize },
    #[error("vlsu_interfaces = {0} is outside {{1, 2}}")]
    Interfaces(usize),
    #[error("tcdm_banks = {banks} cannot serve {ports} concurrent ports without conflicts")]
    TooFewTcdmBanks { banks: usize, ports: usize },
    #[error("tcdm_bank_width_bits must be 64, got {0}")]
    TcdmWidth(usize),
    #[error("tcdm_bank_bytes = {0} must be a positive multiple of 8")]
    TcdmBankBytes(usize),
    #[error("decoupled_vlsu requires vlsu_interfaces = 2")]
    DecoupledNeedsTwoInterfaces,
    #[error("shadow_buffers requires dynamic_priority")]
    ShadowNeedsDynamicPriority,
    #[error("shadow_depth must be positive when shadow_buffers is enabled")]
    ShadowDepth,
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("invalid value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

/// Problems with a kernel description or its expansion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),
    #[error("invalid kernel parameters: {0}")]
    Invalid(String),
    #[error("working set of {needed} bytes per core exceeds the {available}-byte TCDM share")]
    CapacityExceeded { needed: usize, available: usize },
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

/// Malformed instruction streams, caught before simulation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("instruction {index} ({opcode}) appears before any vsetvl")]
    MissingVsetvl { index: usize, opcode: &'static str },
    #[error("instruction {index}: {msg}")]
    Malformed { index: usize, msg: String },
    #[error("listing line {line}: {msg}")]
    Listing { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MemoryError {
    #[error("address {addr:#x} is not 8-byte aligned")]
    Unaligned { addr: u64 },
    #[error("address {addr:#x} is outside the {capacity}-byte TCDM")]
    OutOfRange { addr: u64, capacity: usize },
    #[error("memory image: {0}")]
    Image(String),
}

/// Failures raised while running a simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("no forward progress for {cycles} cycles at cycle {at} (core {core})")]
    Deadlock { core: usize, at: u64, cycles: u64 },
    #[error("golden check failed: {0}")]
    Golden(String),
    #[error("internal invariant violated: {0}")]
    Internal(String),
    #[error("cannot compare runs of different kernels: {0} vs {1}")]
    MismatchedRuns(String, String),
}
