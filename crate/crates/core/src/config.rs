//! Machine description: cluster geometry, latencies and the optional
//! bandwidth-oriented micro-architectural features.
//!
//! A [`ClusterConfig`] is plain data. [`ClusterConfig::validate`] checks it and
//! returns a [`ValidConfig`], which is what every other module consumes.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use crate::error::ConfigError;

/// Register-file layout selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VrfLayoutKind {
    /// Every register starts at an even bank (bank 0 or 2 for the default geometry).
    Standard,
    /// Each set of 8 registers is rotated by one further bank.
    BarberPole,
}

impl VrfLayoutKind {
    pub fn name(self) -> &'static str {
        match self {
            VrfLayoutKind::Standard => "standard",
            VrfLayoutKind::BarberPole => "barber_pole",
        }
    }
}

impl FromStr for VrfLayoutKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(VrfLayoutKind::Standard),
            "barber_pole" | "barber-pole" => Ok(VrfLayoutKind::BarberPole),
            other => Err(ConfigError::BadValue {
                key: "vrf_layout".into(),
                value: other.into(),
            }),
        }
    }
}

/// Optional micro-architectural features.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FeatureSet {
    pub decoupled_vlsu: bool,
    pub completion_counter_chaining: bool,
    pub dynamic_priority: bool,
    pub shadow_buffers: bool,
    pub shadow_depth: usize,
    pub address_scrambling: bool,
    pub vrf_layout: VrfLayoutKind,
    pub log2_reduction: bool,
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet {
            decoupled_vlsu: false,
            completion_counter_chaining: false,
            dynamic_priority: false,
            shadow_buffers: false,
            shadow_depth: 2,
            address_scrambling: false,
            vrf_layout: VrfLayoutKind::Standard,
            log2_reduction: false,
        }
    }
}

/// Names accepted by `--feature <name>=<on|off>` and by config files.
pub const FEATURE_NAMES: &[&str] = &[
    "decoupled_vlsu",
    "completion_counter_chaining",
    "dynamic_priority",
    "shadow_buffers",
    "address_scrambling",
    "log2_reduction",
    "barber_pole",
];

impl FeatureSet {
    /// Toggle a feature by name. `barber_pole` switches the VRF layout.
    pub fn set(&mut self, name: &str, on: bool) -> Result<(), ConfigError> {
        match name {
            "decoupled_vlsu" => self.decoupled_vlsu = on,
            "completion_counter_chaining" => self.completion_counter_chaining = on,
            "dynamic_priority" => self.dynamic_priority = on,
            "shadow_buffers" => self.shadow_buffers = on,
            "address_scrambling" => self.address_scrambling = on,
            "log2_reduction" => self.log2_reduction = on,
            "barber_pole" => {
                self.vrf_layout = if on {
                    VrfLayoutKind::BarberPole
                } else {
                    VrfLayoutKind::Standard
                }
            }
            other => return Err(ConfigError::UnknownFeature(other.into())),
        }
        Ok(())
    }

    pub fn chaining_scheme_name(&self) -> &'static str {
        if self.completion_counter_chaining {
            "counter"
        } else {
            "credit"
        }
    }

    pub fn priority_policy_name(&self) -> &'static str {
        if self.dynamic_priority {
            "dynamic"
        } else {
            "static"
        }
    }

    pub fn address_map_name(&self) -> &'static str {
        if self.address_scrambling {
            "scrambled"
        } else {
            "interleaved"
        }
    }

    pub fn reduction_name(&self) -> &'static str {
        if self.log2_reduction {
            "log2"
        } else {
            "sequential"
        }
    }
}

/// FPU datapath latency per element width, in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FpuLatency {
    pub e64: u32,
    pub e32: u32,
    pub e16: u32,
}

impl Default for FpuLatency {
    fn default() -> Self {
        FpuLatency {
            e64: 2,
            e32: 2,
            e16: 0,
        }
    }
}

impl FpuLatency {
    pub fn for_width(&self, ew_bits: u32) -> u32 {
        match ew_bits {
            64 => self.e64,
            32 => self.e32,
            _ => self.e16,
        }
    }
}

/// Full machine description.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClusterConfig {
    pub num_cores: usize,
    /// FPUs per core (`F`); also the number of 64-bit TCDM ports per VLSU interface.
    pub lanes: usize,
    pub vlen_bits: usize,
    pub vrf_banks: usize,
    pub vrf_bank_width_bits: usize,
    pub vrf_read_ports: usize,
    pub vrf_write_ports: usize,
    pub vlsu_interfaces: usize,
    pub tcdm_banks: usize,
    pub tcdm_bank_width_bits: usize,
    pub tcdm_bank_bytes: usize,
    pub fpu_latency: FpuLatency,
    pub writeback_stages: u32,
    /// Cycles between a memory instruction's dispatch and its first TCDM request.
    pub vlsu_issue_latency: u32,
    /// Cycles for the cluster barrier and scalar combine that end a kernel
    /// whose cores produce partial results.
    pub barrier_cycles: u32,
    pub features: FeatureSet,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            num_cores: 2,
            lanes: 4,
            vlen_bits: 512,
            vrf_banks: 4,
            vrf_bank_width_bits: 256,
            vrf_read_ports: 3,
            vrf_write_ports: 1,
            vlsu_interfaces: 1,
            tcdm_banks: 16,
            tcdm_bank_width_bits: 64,
            tcdm_bank_bytes: 8192,
            fpu_latency: FpuLatency::default(),
            writeback_stages: 1,
            vlsu_issue_latency: 0,
            barrier_cycles: 130,
            features: FeatureSet::default(),
        }
    }
}

/// Reduced bandwidth-to-compute ratio `memory : compute`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub memory: u64,
    pub compute: u64,
}

impl Ratio {
    pub fn new(memory: u64, compute: u64) -> Ratio {
        let g = gcd(memory, compute).max(1);
        Ratio {
            memory: memory / g,
            compute: compute / g,
        }
    }

    pub fn as_f64(self) -> f64 {
        self.memory as f64 / self.compute as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.memory, self.compute)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl ClusterConfig {
    /// Check every geometric and feature invariant.
    pub fn validate(self) -> Result<ValidConfig, ConfigError> {
        let positive = [
            ("num_cores", self.num_cores),
            ("lanes", self.lanes),
            ("vlen_bits", self.vlen_bits),
            ("vrf_banks", self.vrf_banks),
            ("vrf_bank_width_bits", self.vrf_bank_width_bits),
            ("vrf_read_ports", self.vrf_read_ports),
            ("vrf_write_ports", self.vrf_write_ports),
            ("vlsu_interfaces", self.vlsu_interfaces),
            ("tcdm_banks", self.tcdm_banks),
            ("tcdm_bank_width_bits", self.tcdm_bank_width_bits),
            ("tcdm_bank_bytes", self.tcdm_bank_bytes),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ConfigError::NotPositive { field });
            }
        }
        if self.writeback_stages == 0 {
            return Err(ConfigError::NotPositive {
                field: "writeback_stages",
            });
        }
        if !self.vrf_banks.is_power_of_two() {
            return Err(ConfigError::NotPowerOfTwo {
                field: "vrf_banks",
                value: self.vrf_banks,
            });
        }
        if !self.tcdm_banks.is_power_of_two() {
            return Err(ConfigError::NotPowerOfTwo {
                field: "tcdm_banks",
                value: self.tcdm_banks,
            });
        }
        if self.vrf_bank_width_bits != 64 * self.lanes {
            return Err(ConfigError::BankWidth {
                got: self.vrf_bank_width_bits,
                expected: 64 * self.lanes,
            });
        }
        if !self.vlen_bits.is_multiple_of(self.vrf_bank_width_bits) {
            return Err(ConfigError::VlenNotMultiple {
                vlen: self.vlen_bits,
                width: self.vrf_bank_width_bits,
            });
        }
        if !(1..=2).contains(&self.vlsu_interfaces) {
            return Err(ConfigError::Interfaces(self.vlsu_interfaces));
        }
        if self.tcdm_bank_width_bits != 64 {
            return Err(ConfigError::TcdmWidth(self.tcdm_bank_width_bits));
        }
        if !self.tcdm_bank_bytes.is_multiple_of(8) {
            return Err(ConfigError::TcdmBankBytes(self.tcdm_bank_bytes));
        }
        let ports = self.num_cores * self.lanes * self.vlsu_interfaces;
        if self.tcdm_banks < ports {
            return Err(ConfigError::TooFewTcdmBanks {
                banks: self.tcdm_banks,
                ports,
            });
        }
        let f = &self.features;
        if f.decoupled_vlsu && self.vlsu_interfaces != 2 {
            return Err(ConfigError::DecoupledNeedsTwoInterfaces);
        }
        if f.shadow_buffers && !f.dynamic_priority {
            return Err(ConfigError::ShadowNeedsDynamicPriority);
        }
        if f.shadow_buffers && f.shadow_depth == 0 {
            return Err(ConfigError::ShadowDepth);
        }
        let banks_per_reg = self.vlen_bits / self.vrf_bank_width_bits;
        Ok(ValidConfig {
            inner: self,
            banks_per_reg,
        })
    }

    /// Apply a `preset = NAME` / `key = value` text on top of the defaults.
    pub fn parse(text: &str) -> Result<ClusterConfig, ConfigError> {
        let mut cfg = ClusterConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            cfg.set_key(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Set one field from its textual form. `preset` replaces the whole config.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num(key: &str, value: &str) -> Result<usize, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
            parse_switch(value).ok_or_else(|| ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
            })
        }
        match key {
            "preset" => *self = Preset::from_str(value)?.config(),
            "num_cores" => self.num_cores = num(key, value)?,
            "lanes" | "F" => {
                self.lanes = num(key, value)?;
                self.vrf_bank_width_bits = 64 * self.lanes;
            }
            "vlen_bits" => self.vlen_bits = num(key, value)?,
            "vrf_banks" => self.vrf_banks = num(key, value)?,
            "vrf_bank_width_bits" => self.vrf_bank_width_bits = num(key, value)?,
            "vrf_read_ports" => self.vrf_read_ports = num(key, value)?,
            "vrf_write_ports" => self.vrf_write_ports = num(key, value)?,
            "vlsu_interfaces" => self.vlsu_interfaces = num(key, value)?,
            "tcdm_banks" => self.tcdm_banks = num(key, value)?,
            "tcdm_bank_width_bits" => self.tcdm_bank_width_bits = num(key, value)?,
            "tcdm_bank_bytes" => self.tcdm_bank_bytes = num(key, value)?,
            "fpu_latency_e64" => self.fpu_latency.e64 = num(key, value)? as u32,
            "fpu_latency_e32" => self.fpu_latency.e32 = num(key, value)? as u32,
            "fpu_latency_e16" => self.fpu_latency.e16 = num(key, value)? as u32,
            "writeback_stages" => self.writeback_stages = num(key, value)? as u32,
            "vlsu_issue_latency" => self.vlsu_issue_latency = num(key, value)? as u32,
            "barrier_cycles" => self.barrier_cycles = num(key, value)? as u32,
            "shadow_depth" => self.features.shadow_depth = num(key, value)?,
            "vrf_layout" => self.features.vrf_layout = value.parse()?,
            "decoupled_vlsu"
            | "completion_counter_chaining"
            | "dynamic_priority"
            | "shadow_buffers"
            | "address_scrambling"
            | "log2_reduction" => self.features.set(key, flag(key, value)?)?,
            other => return Err(ConfigError::UnknownKey(other.into())),
        }
        Ok(())
    }

    /// Peak 64-bit memory elements moved per cycle by one core.
    pub fn peak_memory_elements(&self) -> u64 {
        (self.vlsu_interfaces * self.lanes) as u64
    }

    /// Peak 64-bit FMA elements per cycle of one core.
    pub fn peak_fma_elements(&self) -> u64 {
        self.lanes as u64
    }
}

/// Parse `on|off|true|false|1|0`.
pub fn parse_switch(value: &str) -> Option<bool> {
    match value {
        "on" | "true" | "1" | "yes" => Some(true),
        "off" | "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

/// A configuration that passed [`ClusterConfig::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ValidConfig {
    inner: ClusterConfig,
    banks_per_reg: usize,
}

impl Deref for ValidConfig {
    type Target = ClusterConfig;

    fn deref(&self) -> &ClusterConfig {
        &self.inner
    }
}

impl ValidConfig {
    /// Consecutive VRF banks (words) spanned by one architectural register.
    pub fn banks_per_reg(&self) -> usize {
        self.banks_per_reg
    }

    /// Bytes in one VRF word.
    pub fn vrf_word_bytes(&self) -> usize {
        self.vrf_bank_width_bits / 8
    }

    pub fn tcdm_capacity(&self) -> usize {
        self.tcdm_banks * self.tcdm_bank_bytes
    }

    /// Largest vector length for the given element width and register grouping.
    pub fn vlmax(&self, ew_bits: u32, lmul: usize) -> usize {
        lmul * self.vlen_bits / ew_bits as usize
    }

    pub fn bandwidth_to_compute_ratio(&self) -> Ratio {
        bandwidth_to_compute_ratio(self)
    }

    pub fn into_inner(self) -> ClusterConfig {
        self.inner
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.inner
    }
}

/// `(vlsu_interfaces * F * 64) : (F * 64)`, reduced.
pub fn bandwidth_to_compute_ratio(config: &ValidConfig) -> Ratio {
    let memory_bits = (config.vlsu_interfaces * config.lanes * 64) as u64;
    let compute_bits = (config.lanes * 64) as u64;
    Ratio::new(memory_bits, compute_bits)
}

/// The three reference cluster configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Preset {
    Baseline,
    DoubleBw,
    DoubleBwTroop,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Baseline, Preset::DoubleBw, Preset::DoubleBwTroop];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Baseline => "BASELINE",
            Preset::DoubleBw => "2xBW",
            Preset::DoubleBwTroop => "2xBW_TROOP",
        }
    }

    pub fn config(self) -> ClusterConfig {
        let mut cfg = ClusterConfig::default();
        match self {
            Preset::Baseline => {
                // start-up of the original single-interface load-store unit
                cfg.vlsu_issue_latency = 7;
                cfg.features.vrf_layout = VrfLayoutKind::BarberPole;
                cfg.features.log2_reduction = true;
            }
            Preset::DoubleBw => {
                cfg.vlsu_interfaces = 2;
                cfg.features.vrf_layout = VrfLayoutKind::BarberPole;
                cfg.features.log2_reduction = true;
            }
            Preset::DoubleBwTroop => {
                cfg.vlsu_interfaces = 2;
                cfg.features = FeatureSet {
                    decoupled_vlsu: true,
                    completion_counter_chaining: true,
                    dynamic_priority: true,
                    shadow_buffers: true,
                    shadow_depth: 2,
                    address_scrambling: true,
                    vrf_layout: VrfLayoutKind::Standard,
                    log2_reduction: true,
                };
            }
        }
        cfg
    }

    pub fn validated(self) -> ValidConfig {
        self.config()
            .validate()
            .expect("reference configurations are valid")
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "BASELINE" | "baseline" => Ok(Preset::Baseline),
            "2xBW" | "2xbw" => Ok(Preset::DoubleBw),
            "2xBW_TROOP" | "2xbw_troop" => Ok(Preset::DoubleBwTroop),
            other => Err(ConfigError::UnknownPreset(other.into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_defaults_are_valid() {
        let cfg = Preset::Baseline.validated();
        assert_eq!(cfg.lanes, 4);
        assert_eq!(cfg.tcdm_banks, 16);
        assert_eq!(cfg.tcdm_bank_bytes, 8192);
        assert_eq!(cfg.vlsu_interfaces, 1);
        assert_eq!(cfg.banks_per_reg(), 2);
        assert_eq!(cfg.tcdm_capacity(), 128 * 1024);
    }

    #[test]
    fn two_interfaces_without_decoupling_is_valid() {
        let cfg = Preset::DoubleBw.validated();
        assert_eq!(cfg.vlsu_interfaces, 2);
        assert!(!cfg.features.decoupled_vlsu);
    }

    #[test]
    fn three_vrf_banks_rejected() {
        let cfg = ClusterConfig {
            vrf_banks: 3,
            ..ClusterConfig::default()
        };
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::NotPowerOfTwo {
                field: "vrf_banks",
                value: 3
            })
        );
    }

    #[test]
    fn decoupling_needs_two_interfaces() {
        let mut cfg = ClusterConfig::default();
        cfg.features.decoupled_vlsu = true;
        assert_eq!(
            cfg.validate(),
            Err(ConfigError::DecoupledNeedsTwoInterfaces)
        );
    }

    #[test]
    fn shadow_needs_dynamic_priority() {
        let mut cfg = ClusterConfig::default();
        cfg.features.shadow_buffers = true;
        assert_eq!(cfg.validate(), Err(ConfigError::ShadowNeedsDynamicPriority));
    }

    #[test]
    fn three_interfaces_rejected() {
        let cfg = ClusterConfig {
            vlsu_interfaces: 3,
            ..ClusterConfig::default()
        };
        assert_eq!(cfg.validate(), Err(ConfigError::Interfaces(3)));
    }

    #[test]
    fn ratios() {
        assert_eq!(
            Preset::Baseline.validated().bandwidth_to_compute_ratio(),
            Ratio::new(1, 1)
        );
        let troop = Preset::DoubleBwTroop.validated().bandwidth_to_compute_ratio();
        assert_eq!((troop.memory, troop.compute), (2, 1));
        assert_eq!(troop.to_string(), "2:1");
    }

    #[test]
    fn presets_match_their_definitions() {
        let base = Preset::Baseline.config();
        assert_eq!(base.features.vrf_layout, VrfLayoutKind::BarberPole);
        assert!(!base.features.decoupled_vlsu && !base.features.dynamic_priority);
        let bw = Preset::DoubleBw.config();
        assert!(!bw.features.shadow_buffers && !bw.features.address_scrambling);
        let troop = Preset::DoubleBwTroop.config();
        assert_eq!(troop.features.vrf_layout, VrfLayoutKind::Standard);
        assert!(troop.features.decoupled_vlsu && troop.features.shadow_buffers);
        assert_eq!(troop.features.shadow_depth, 2);
    }

    #[test]
    fn config_text_with_preset_and_override() {
        let text = "# comment\npreset = 2xBW_TROOP\nshadow_depth = 3 # inline\nnum_cores=1\n";
        let cfg = ClusterConfig::parse(text).unwrap();
        assert_eq!(cfg.vlsu_interfaces, 2);
        assert_eq!(cfg.features.shadow_depth, 3);
        assert_eq!(cfg.num_cores, 1);
        assert!(cfg.features.decoupled_vlsu);
    }

    #[test]
    fn config_text_rejects_unknown_key() {
        assert_eq!(
            ClusterConfig::parse("bogus = 1"),
            Err(ConfigError::UnknownKey("bogus".into()))
        );
        assert!(matches!(
            ClusterConfig::parse("lanes 4"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn validate_is_idempotent() {
        for p in Preset::ALL {
            let once = p.config().validate().unwrap();
            let twice = once.clone().into_inner().validate().unwrap();
            assert_eq!(once, twice);
        }
    }
}
