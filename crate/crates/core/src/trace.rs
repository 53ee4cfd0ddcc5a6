//! Bank-level event trace, one line per access attempt.

use std::fmt;

use crate::vrf::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Space {
    Vrf,
    Tcdm,
}

impl Space {
    pub fn name(self) -> &'static str {
        match self {
            Space::Vrf => "VRF",
            Space::Tcdm => "TCDM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Read,
    Write,
    Stall,
    ShadowInsert,
    ShadowDrain,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::Read => "read",
            Action::Write => "write",
            Action::Stall => "stall",
            Action::ShadowInsert => "shadow_insert",
            Action::ShadowDrain => "shadow_drain",
        }
    }
}

/// Register/word for VRF events, byte address for TCDM events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    Vrf { reg: usize, word: usize },
    Tcdm(u64),
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Loc::Vrf { reg, word } => write!(f, "{reg}:{word}"),
            Loc::Tcdm(addr) => write!(f, "{addr:#x}"),
        }
    }
}

/// One bank access. VRF banks are numbered cluster-wide: `core · vrf_banks + bank`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BankEvent {
    pub cycle: u64,
    pub space: Space,
    pub bank: u32,
    pub unit: Unit,
    pub action: Action,
    pub loc: Loc,
}

impl fmt::Display for BankEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cycle={} space={} unit={} action={} bank={} loc={}",
            self.cycle,
            self.space.name(),
            self.unit.name(),
            self.action.name(),
            self.bank,
            self.loc
        )
    }
}

/// Collects events for one core when tracing is on.
#[derive(Debug, Default)]
pub struct Recorder {
    events: Option<Vec<BankEvent>>,
    core: usize,
    vrf_banks: usize,
    banks_per_reg: usize,
}

impl Recorder {
    pub fn new(enabled: bool, core: usize, vrf_banks: usize, banks_per_reg: usize) -> Self {
        Recorder {
            events: enabled.then(Vec::new),
            core,
            vrf_banks,
            banks_per_reg,
        }
    }

    pub fn enabled(&self) -> bool {
        self.events.is_some()
    }

    pub fn vrf(&mut self, cycle: u64, unit: Unit, action: Action, bank: usize, abs_word: usize) {
        let (core, banks, bpr) = (self.core, self.vrf_banks, self.banks_per_reg);
        if let Some(ev) = &mut self.events {
            ev.push(BankEvent {
                cycle,
                space: Space::Vrf,
                bank: (core * banks + bank) as u32,
                unit,
                action,
                loc: Loc::Vrf {
                    reg: abs_word / bpr,
                    word: abs_word % bpr,
                },
            });
        }
    }

    pub fn tcdm(&mut self, cycle: u64, unit: Unit, action: Action, bank: usize, addr: u64) {
        if let Some(ev) = &mut self.events {
            ev.push(BankEvent {
                cycle,
                space: Space::Tcdm,
                bank: bank as u32,
                unit,
                action,
                loc: Loc::Tcdm(addr),
            });
        }
    }

    pub fn take(&mut self) -> Vec<BankEvent> {
        self.events.take().unwrap_or_default()
    }
}

/// Sort into the canonical total order and render one event per line.
pub fn render(events: &mut [BankEvent]) -> String {
    events.sort();
    let mut out = String::new();
    for e in events.iter() {
        out.push_str(&e.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_format() {
        let e = BankEvent {
            cycle: 7,
            space: Space::Tcdm,
            bank: 12,
            unit: Unit::Vlsu1,
            action: Action::Stall,
            loc: Loc::Tcdm(0x1a0),
        };
        assert_eq!(e.to_string(), "cycle=7 space=TCDM unit=VLSU1 action=stall bank=12 loc=0x1a0");
    }

    #[test]
    fn vrf_banks_are_numbered_per_cluster() {
        let mut r = Recorder::new(true, 1, 4, 2);
        r.vrf(3, Unit::Vfu, Action::ShadowInsert, 2, 49);
        let e = r.take();
        assert_eq!(e[0].to_string(), "cycle=3 space=VRF unit=VFU action=shadow_insert bank=6 loc=24:1");
    }

    #[test]
    fn ordering_is_cycle_then_space_then_bank() {
        let mk = |cycle, space, bank| BankEvent {
            cycle,
            space,
            bank,
            unit: Unit::Vfu,
            action: Action::Read,
            loc: Loc::Tcdm(0),
        };
        let mut v = vec![mk(2, Space::Vrf, 0), mk(1, Space::Tcdm, 0), mk(1, Space::Vrf, 3)];
        v.sort();
        assert_eq!(v, vec![mk(1, Space::Vrf, 3), mk(1, Space::Tcdm, 0), mk(2, Space::Vrf, 0)]);
    }
}
