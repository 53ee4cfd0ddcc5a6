//! Shared L1 scratchpad (TCDM): address → bank mapping, per-bank service and
//! the flat memory image.

use std::fmt;
use std::io::{Read, Write};
use std::sync::OnceLock;

use crate::config::ValidConfig;
use crate::error::MemoryError;
use crate::registry::Registry;

/// Bytes per TCDM word (the bank width).
pub const WORD_BYTES: u64 = 8;

/// Where a 64-bit memory word lives.
pub trait AddressMap: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Map a word index (`addr / 8`) to `(bank, row)`.
    fn map_word(&self, word: u64, banks: usize) -> (usize, u64);
}

/// Plain word interleaving: consecutive words hit consecutive banks.
#[derive(Debug, Default, Clone, Copy)]
pub struct Interleaved;

impl AddressMap for Interleaved {
    fn name(&self) -> &'static str {
        "interleaved"
    }

    fn map_word(&self, word: u64, banks: usize) -> (usize, u64) {
        let b = banks as u64;
        ((word % b) as usize, word / b)
    }
}

/// Interleaving with rows 1 and 2 of every group of four shifted by half the banks.
#[derive(Debug, Default, Clone, Copy)]
pub struct Scrambled;

impl AddressMap for Scrambled {
    fn name(&self) -> &'static str {
        "scrambled"
    }

    fn map_word(&self, word: u64, banks: usize) -> (usize, u64) {
        let (bank, row) = Interleaved.map_word(word, banks);
        match row % 4 {
            1 | 2 => ((bank + banks / 2) % banks, row),
            _ => (bank, row),
        }
    }
}

pub fn address_maps() -> &'static Registry<dyn AddressMap> {
    static REG: OnceLock<Registry<dyn AddressMap>> = OnceLock::new();
    REG.get_or_init(|| {
        Registry::<dyn AddressMap>::new("address map")
            .with("interleaved", || Box::new(Interleaved))
            .with("scrambled", || Box::new(Scrambled))
    })
}

/// Bank and row of a byte address, with bounds and alignment checks.
pub fn bank_of_address(
    addr: u64,
    map: &dyn AddressMap,
    config: &ValidConfig,
) -> Result<(usize, u64), MemoryError> {
    if !addr.is_multiple_of(WORD_BYTES) {
        return Err(MemoryError::Unaligned { addr });
    }
    let capacity = config.tcdm_capacity();
    if addr >= capacity as u64 {
        return Err(MemoryError::OutOfRange { addr, capacity });
    }
    Ok(map.map_word(addr / WORD_BYTES, config.tcdm_banks))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AccessKind {
    Read,
    Write,
}

/// One 64-bit port access presented to the crossbar in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TcdmRequest {
    pub core: usize,
    pub port: usize,
    pub kind: AccessKind,
    pub addr: u64,
    pub bank: usize,
}

/// Per-bank crossbar arbitration. Each bank grants one request per cycle;
/// cores take turns round-robin (the core granted last at a bank goes to the
/// back), and within a core the lowest port wins.
///
/// A core needs all banks of a word in the same cycle, and independent
/// per-bank turns can split two overlapping words between their cores forever.
/// A core denied for [`STARVATION_LIMIT`] cycles in a row therefore takes
/// precedence at every bank until it is served in full.
#[derive(Debug, Clone)]
pub struct Crossbar {
    cores: usize,
    last: Vec<Option<usize>>,
    starved: Vec<u32>,
}

/// Consecutive partially denied cycles after which a core takes precedence.
pub const STARVATION_LIMIT: u32 = 4;

impl Crossbar {
    pub fn new(banks: usize, cores: usize) -> Self {
        Crossbar {
            cores: cores.max(1),
            last: vec![None; banks],
            starved: vec![0; cores.max(1)],
        }
    }

    /// Returns one grant flag per request, in input order.
    pub fn service(&mut self, requests: &[TcdmRequest]) -> Vec<bool> {
        let mut winner: Vec<Option<(usize, ((u32, usize), usize, usize))>> = vec![None; self.last.len()];
        for (i, r) in requests.iter().enumerate() {
            let turn = self.last[r.bank].map_or(r.core, |l| (r.core + self.cores - l - 1) % self.cores);
            let waited = self.starved[r.core];
            // starved cores first, longest wait first, ties by core index at every bank
            let urgent = if waited >= STARVATION_LIMIT {
                (u32::MAX - waited, r.core)
            } else {
                (u32::MAX, 0)
            };
            let key = (urgent, turn, r.port);
            match winner[r.bank] {
                Some((_, k)) if k <= key => {}
                _ => winner[r.bank] = Some((i, key)),
            }
        }
        let mut granted = vec![false; requests.len()];
        for (bank, w) in winner.into_iter().enumerate() {
            if let Some((i, _)) = w {
                granted[i] = true;
                self.last[bank] = Some(requests[i].core);
            }
        }
        let mut denied = vec![None; self.cores];
        for (r, &g) in requests.iter().zip(&granted) {
            let d = denied[r.core].get_or_insert(false);
            *d |= !g;
        }
        for (core, d) in denied.into_iter().enumerate() {
            match d {
                Some(true) => self.starved[core] += 1,
                Some(false) => self.starved[core] = 0,
                None => {}
            }
        }
        granted
    }
}

const MAGIC: &[u8; 8] = b"TRPMEM01";
const LITTLE: u8 = b'L';

/// Flat byte image of the TCDM contents.
#[derive(Clone, PartialEq, Eq)]
pub struct MemoryImage {
    bytes: Vec<u8>,
}

impl fmt::Debug for MemoryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MemoryImage({} bytes)", self.bytes.len())
    }
}

impl MemoryImage {
    pub fn zeroed(capacity: usize) -> Self {
        MemoryImage {
            bytes: vec![0; capacity],
        }
    }

    pub fn capacity(&self) -> usize {
        self.bytes.len()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn check(&self, addr: u64, len: usize) -> Result<usize, MemoryError> {
        let start = addr as usize;
        if start.checked_add(len).is_none_or(|end| end > self.bytes.len()) {
            return Err(MemoryError::OutOfRange {
                addr,
                capacity: self.bytes.len(),
            });
        }
        Ok(start)
    }

    pub fn read(&self, addr: u64, out: &mut [u8]) -> Result<(), MemoryError> {
        let s = self.check(addr, out.len())?;
        out.copy_from_slice(&self.bytes[s..s + out.len()]);
        Ok(())
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) -> Result<(), MemoryError> {
        let s = self.check(addr, data.len())?;
        self.bytes[s..s + data.len()].copy_from_slice(data);
        Ok(())
    }

    pub fn read_elements(&self, addr: u64, ew: u32, count: usize) -> Result<Vec<f64>, MemoryError> {
        let n = crate::elem::bytes(ew);
        let s = self.check(addr, count * n)?;
        let slice = &self.bytes[s..s + count * n];
        Ok((0..count).map(|i| crate::elem::load(ew, slice, i)).collect())
    }

    pub fn write_elements(&mut self, addr: u64, ew: u32, values: &[f64]) -> Result<(), MemoryError> {
        let n = crate::elem::bytes(ew);
        let s = self.check(addr, values.len() * n)?;
        let slice = &mut self.bytes[s..s + values.len() * n];
        for (i, &v) in values.iter().enumerate() {
            crate::elem::store(ew, slice, i, v);
        }
        Ok(())
    }

    /// Serialize as `magic | capacity (u64 LE) | endianness tag | payload`.
    pub fn save<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.bytes.len() as u64).to_le_bytes())?;
        w.write_all(&[LITTLE])?;
        w.write_all(&self.bytes)
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self, MemoryError> {
        let io = |e: std::io::Error| MemoryError::Image(e.to_string());
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(MemoryError::Image("bad magic".into()));
        }
        let mut cap = [0u8; 8];
        r.read_exact(&mut cap).map_err(io)?;
        let capacity = u64::from_le_bytes(cap) as usize;
        let mut tag = [0u8; 1];
        r.read_exact(&mut tag).map_err(io)?;
        if tag[0] != LITTLE {
            return Err(MemoryError::Image(format!("unsupported endianness tag {:#x}", tag[0])));
        }
        let mut bytes = Vec::with_capacity(capacity);
        r.take(capacity as u64).read_to_end(&mut bytes).map_err(io)?;
        if bytes.len() != capacity {
            return Err(MemoryError::Image(format!(
                "truncated payload: {} of {capacity} bytes",
                bytes.len()
            )));
        }
        Ok(MemoryImage { bytes })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    fn cfg() -> ValidConfig {
        Preset::Baseline.validated()
    }

    #[test]
    fn origin_maps_to_bank_zero() {
        for map in [&Interleaved as &dyn AddressMap, &Scrambled] {
            assert_eq!(bank_of_address(0, map, &cfg()).unwrap(), (0, 0));
        }
    }

    #[test]
    fn second_row_is_offset_by_eight() {
        assert_eq!(bank_of_address(0x80, &Scrambled, &cfg()).unwrap(), (8, 1));
        assert_eq!(bank_of_address(0x80, &Interleaved, &cfg()).unwrap(), (0, 1));
        assert_eq!(bank_of_address(0x100, &Scrambled, &cfg()).unwrap(), (8, 2));
    }

    #[test]
    fn fourth_row_is_unshifted() {
        assert_eq!(bank_of_address(0x180, &Scrambled, &cfg()).unwrap(), (0, 3));
    }

    #[test]
    fn rejects_bad_addresses() {
        assert_eq!(
            bank_of_address(4, &Interleaved, &cfg()),
            Err(MemoryError::Unaligned { addr: 4 })
        );
        assert!(matches!(
            bank_of_address(128 * 1024, &Interleaved, &cfg()),
            Err(MemoryError::OutOfRange { .. })
        ));
    }

    fn req(core: usize, port: usize, bank: usize) -> TcdmRequest {
        TcdmRequest {
            core,
            port,
            kind: AccessKind::Read,
            addr: 0,
            bank,
        }
    }

    #[test]
    fn distinct_banks_all_granted() {
        let reqs: Vec<_> = (0..8).map(|b| req(0, b, b)).collect();
        assert!(Crossbar::new(16, 2).service(&reqs).into_iter().all(|g| g));
    }

    #[test]
    fn conflicts_alternate_between_cores() {
        let mut xbar = Crossbar::new(16, 2);
        let reqs = [req(1, 0, 5), req(0, 3, 5)];
        assert_eq!(xbar.service(&reqs), vec![false, true]);
        assert_eq!(xbar.service(&reqs), vec![true, false]);
        assert_eq!(xbar.service(&reqs), vec![false, true]);
        // within a core the lower port wins
        assert_eq!(xbar.service(&[req(0, 2, 7), req(0, 1, 7)]), vec![false, true]);
    }

    #[test]
    fn overlapping_words_are_eventually_served_whole() {
        // core 0 wants banks 0..8, core 1 banks 2..10; only a full grant counts
        let mut xbar = Crossbar::new(16, 2);
        let mut reqs: Vec<_> = (0..8).map(|b| req(0, b, b)).collect();
        reqs.extend((0..8).map(|p| req(1, p, p + 2)));
        // knock the per-bank turns out of phase, as partial overlaps do
        xbar.service(&[req(1, 0, 2), req(1, 1, 3)]);
        let mut served = [0; 2];
        for _ in 0..4 * STARVATION_LIMIT {
            let g = xbar.service(&reqs);
            for core in 0..2 {
                if g[core * 8..core * 8 + 8].iter().all(|&x| x) {
                    served[core] += 1;
                }
            }
        }
        assert!(served.iter().all(|&s| s > 0), "{served:?}");
    }

    #[test]
    fn image_roundtrip() {
        let mut img = MemoryImage::zeroed(256);
        img.write_elements(16, 64, &[1.0, -2.5]).unwrap();
        let mut buf = Vec::new();
        img.save(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = MemoryImage::load(&buf[..]).unwrap();
        assert_eq!(back, img);
        assert_eq!(back.read_elements(16, 64, 2).unwrap(), vec![1.0, -2.5]);
        assert!(MemoryImage::load(&buf[..20]).is_err());
    }
}
