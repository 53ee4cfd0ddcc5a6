//! Vector load/store unit with one or two TCDM interfaces of `F` 64-bit ports.
//!
//! Each interface moves one VRF word per cycle. Coupled interfaces walk one
//! shared cursor two words at a time; decoupled interfaces each own half of
//! the vector and progress independently. A word's port accesses succeed or
//! retry together, so the VRF never sees a partial word.

use std::collections::VecDeque;

use super::{assert_current, Ctx, PortAccess, ReadRequest, StallLog, TcdmGroup, WriteRequest};
use crate::config::ValidConfig;
use crate::controller::{CreditUse, Scoreboard};
use crate::error::SimError;
use crate::kernels::{Opcode, VectorInstruction};
use crate::memory::{AccessKind, MemoryImage};
use crate::trace::{Action, Recorder};
use crate::vrf::{ShadowBuffer, Unit, VrfData};

/// Depth of the per-interface load response and store data queues.
pub const QUEUE_DEPTH: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VlsuMode {
    Single,
    Coupled,
    Decoupled,
}

#[derive(Debug, Clone)]
struct Job {
    id: u64,
    instr: VectorInstruction,
    load: bool,
    /// Element groups served by each interface, in order.
    words: [Vec<usize>; 2],
    next: [usize; 2],
    start_at: u64,
}

impl Job {
    fn issued(&self) -> bool {
        (0..2).all(|i| self.next[i] == self.words[i].len())
    }
}

#[derive(Debug, Clone)]
struct Resp {
    id: u64,
    word: usize,
    data: Vec<u8>,
    ready: u64,
}

#[derive(Debug, Clone)]
struct StoreData {
    id: u64,
    addr: u64,
    data: Vec<u8>,
    ready: u64,
}

#[derive(Debug, Clone, Default)]
struct Iface {
    resp: VecDeque<Resp>,
    shadow: Option<ShadowBuffer<Resp>>,
    stq: VecDeque<StoreData>,
}

#[derive(Debug, Clone)]
enum TcdmPending {
    StoreWrite { iface: usize },
    Load { id: u64, items: Vec<(usize, usize)>, uses: CreditUse },
}

#[derive(Debug, Clone)]
struct ReadPending {
    id: u64,
    items: Vec<(usize, usize)>,
    uses: CreditUse,
    req: ReadRequest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Source {
    Shadow,
    Direct,
}

#[derive(Debug, Clone)]
pub struct Vlsu {
    mode: VlsuMode,
    window: VecDeque<Job>,
    window_cap: usize,
    ifaces: Vec<Iface>,
    startup: u64,
    lanes: usize,
    word_bits: usize,
    banks_per_reg: usize,
    pending_tcdm: Vec<(TcdmPending, TcdmGroup)>,
    pending_reads: Vec<ReadPending>,
    pending_writes: Vec<(usize, Source)>,
}

impl Vlsu {
    pub fn new(config: &ValidConfig) -> Self {
        let mode = match (config.vlsu_interfaces, config.features.decoupled_vlsu) {
            (1, _) => VlsuMode::Single,
            (_, false) => VlsuMode::Coupled,
            (_, true) => VlsuMode::Decoupled,
        };
        let mut ifaces = vec![Iface::default(); config.vlsu_interfaces];
        // the second interface's write path gets a shadow buffer
        if config.features.shadow_buffers && ifaces.len() == 2 {
            ifaces[1].shadow = Some(ShadowBuffer::new(config.features.shadow_depth));
        }
        Vlsu {
            mode,
            window: VecDeque::new(),
            window_cap: 1,
            ifaces,
            startup: config.vlsu_issue_latency as u64,
            lanes: config.lanes,
            word_bits: config.vrf_bank_width_bits,
            banks_per_reg: config.banks_per_reg(),
            pending_tcdm: Vec::new(),
            pending_reads: Vec::new(),
            pending_writes: Vec::new(),
        }
    }

    pub fn mode(&self) -> VlsuMode {
        self.mode
    }

    pub fn can_accept(&self) -> bool {
        self.window.len() < self.window_cap
    }

    pub fn is_idle(&self) -> bool {
        self.window.is_empty()
            && self.ifaces.iter().all(|f| {
                f.resp.is_empty() && f.stq.is_empty() && f.shadow.as_ref().is_none_or(|s| s.is_empty())
            })
    }

    pub fn shadow_len(&self) -> usize {
        self.ifaces.iter().filter_map(|f| f.shadow.as_ref()).map(|s| s.len()).sum()
    }

    pub fn dispatch(&mut self, id: u64, instr: VectorInstruction, now: u64) {
        debug_assert!(self.can_accept());
        let groups = instr.groups(self.word_bits);
        let words = match self.mode {
            VlsuMode::Single => [(0..groups).collect(), Vec::new()],
            VlsuMode::Coupled => [(0..groups).step_by(2).collect(), (1..groups).step_by(2).collect()],
            VlsuMode::Decoupled => {
                let half = groups.div_ceil(2);
                [(0..half).collect(), (half..groups).collect()]
            }
        };
        let job = Job {
            id,
            load: instr.opcode == Opcode::Vle,
            instr,
            words,
            next: [0, 0],
            start_at: now + self.startup,
        };
        if !job.issued() {
            self.window.push_back(job);
        }
    }

    /// Bytes of element group `g` actually covered by `vl`.
    fn word_len(&self, instr: &VectorInstruction, g: usize) -> usize {
        let eb = instr.element_width as usize / 8;
        let epw = self.word_bits / instr.element_width as usize;
        (instr.vl - g * epw).min(epw) * eb
    }

    fn accesses(&self, ctx: &Ctx, instr: &VectorInstruction, iface: usize, g: usize, kind: AccessKind) -> Result<Vec<PortAccess>, SimError> {
        let word_bytes = (self.word_bits / 8) as u64;
        let base = instr.base_address + g as u64 * word_bytes;
        (0..self.word_len(instr, g).div_ceil(8))
            .map(|c| {
                let addr = base + c as u64 * 8;
                Ok(PortAccess {
                    unit: Unit::vlsu(iface),
                    port: iface * self.lanes + c,
                    kind,
                    addr,
                    bank: ctx.tcdm_bank(addr)?,
                })
            })
            .collect()
    }

    /// Phase 2: TCDM groups, VRF read groups (stores) and VRF writes (loads).
    pub fn emit(
        &mut self,
        ctx: &Ctx,
        board: &Scoreboard,
        stalls: &mut StallLog,
    ) -> Result<(Vec<TcdmGroup>, Vec<ReadRequest>, Vec<WriteRequest>), SimError> {
        self.pending_tcdm.clear();
        self.pending_reads.clear();
        self.pending_writes.clear();
        let n = self.ifaces.len();

        // buffered store data has the interface's ports first
        let mut port_busy = vec![false; n];
        for i in 0..n {
            if let Some(sd) = self.ifaces[i].stq.front().filter(|s| s.ready <= ctx.now) {
                let word_bytes = sd.data.len();
                let accesses = (0..word_bytes.div_ceil(8))
                    .map(|c| {
                        let addr = sd.addr + c as u64 * 8;
                        Ok(PortAccess {
                            unit: Unit::vlsu(i),
                            port: i * self.lanes + c,
                            kind: AccessKind::Write,
                            addr,
                            bank: ctx.tcdm_bank(addr)?,
                        })
                    })
                    .collect::<Result<Vec<_>, SimError>>()?;
                self.pending_tcdm.push((TcdmPending::StoreWrite { iface: i }, TcdmGroup { accesses }));
                port_busy[i] = true;
            }
        }

        // new element groups
        let mut issues: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
        match self.mode {
            VlsuMode::Single | VlsuMode::Coupled => {
                if let Some(job) = self.window.front().filter(|j| j.start_at <= ctx.now) {
                    let p = job.next[0];
                    let items: Vec<(usize, usize)> =
                        (0..n).filter(|&i| p < job.words[i].len()).map(|i| (i, job.words[i][p])).collect();
                    issues.push((0, items));
                }
            }
            VlsuMode::Decoupled => {
                for i in 0..n {
                    let found = self
                        .window
                        .iter()
                        .position(|j| j.next[i] < j.words[i].len() && j.start_at <= ctx.now);
                    if let Some(k) = found {
                        let j = &self.window[k];
                        issues.push((k, vec![(i, j.words[i][j.next[i]])]));
                    }
                }
            }
        }

        let mut reads = Vec::new();
        for (k, items) in issues {
            let job = &self.window[k];
            // store data only needs the ports once it leaves the queue
            let blocked = items.iter().find(|&&(i, _)| self.blocked(job.load, i, &port_busy));
            if let Some(&(i, _)) = blocked {
                stalls.record(Unit::vlsu(i), "queue_full");
                continue;
            }
            let mut uses = CreditUse::new();
            let mut permitted = true;
            for &(_, g) in &items {
                match board.permit_group(job.id, g, ctx.scheme) {
                    Some(u) => uses.extend(u),
                    None => permitted = false,
                }
            }
            if !permitted {
                for &(i, _) in &items {
                    stalls.record(Unit::vlsu(i), "chain");
                }
                continue;
            }
            uses.sort_by_key(|&(id, kind)| (id, kind as u8));
            uses.dedup();
            if job.load {
                let mut accesses = Vec::new();
                for &(i, g) in &items {
                    accesses.extend(self.accesses(ctx, &job.instr, i, g, AccessKind::Read)?);
                }
                let group = TcdmGroup { accesses };
                self.pending_tcdm.push((
                    TcdmPending::Load {
                        id: job.id,
                        items,
                        uses,
                    },
                    group,
                ));
            } else {
                let words: Vec<usize> = items.iter().map(|&(_, g)| job.instr.vd * self.banks_per_reg + g).collect();
                let req = ReadRequest {
                    unit: Unit::vlsu(items[0].0),
                    banks: words.iter().map(|&w| ctx.vrf_bank(w)).collect(),
                    words,
                };
                reads.push(req.clone());
                self.pending_reads.push(ReadPending {
                    id: job.id,
                    items,
                    uses,
                    req,
                });
            }
        }
        let tcdm: Vec<TcdmGroup> = self.pending_tcdm.iter().map(|(_, g)| g.clone()).collect();

        let mut writes = Vec::new();
        for (i, f) in self.ifaces.iter().enumerate() {
            if let Some(head) = f.shadow.as_ref().and_then(|s| s.head()) {
                writes.push(WriteRequest {
                    unit: Unit::vlsu(i),
                    word: head.word,
                    bank: ctx.vrf_bank(head.word),
                    urgent: f.shadow.as_ref().is_some_and(|s| s.is_full()),
                });
                self.pending_writes.push((i, Source::Shadow));
            } else if let Some(r) = f.resp.front().filter(|r| r.ready <= ctx.now) {
                writes.push(WriteRequest {
                    unit: Unit::vlsu(i),
                    word: r.word,
                    bank: ctx.vrf_bank(r.word),
                    urgent: false,
                });
                self.pending_writes.push((i, Source::Direct));
            }
        }
        Ok((tcdm, reads, writes))
    }

    fn blocked(&self, load: bool, i: usize, port_busy: &[bool]) -> bool {
        if load {
            port_busy[i] || self.ifaces[i].resp.len() >= QUEUE_DEPTH
        } else {
            self.ifaces[i].stq.len() >= QUEUE_DEPTH
        }
    }

    fn advance(&mut self, id: u64, items: &[(usize, usize)]) {
        let job = self.window.iter_mut().find(|j| j.id == id).expect("job in window");
        for &(i, _) in items {
            job.next[i] += 1;
        }
        self.window.retain(|j| !j.issued());
    }

    /// Phase 3 results: per group, per access grant flags.
    #[allow(clippy::too_many_arguments)]
    pub fn on_tcdm(
        &mut self,
        grants: &[Vec<bool>],
        ctx: &Ctx,
        board: &mut Scoreboard,
        memory: &mut MemoryImage,
        rec: &mut Recorder,
        stalls: &mut StallLog,
    ) -> Result<(), SimError> {
        let pending = std::mem::take(&mut self.pending_tcdm);
        debug_assert_eq!(pending.len(), grants.len());
        for ((p, group), flags) in pending.into_iter().zip(grants) {
            let ok = flags.iter().all(|&f| f);
            for a in &group.accesses {
                // granted ports of a failed word retry with it
                let action = match (ok, a.kind) {
                    (false, _) => Action::Stall,
                    (true, AccessKind::Read) => Action::Read,
                    (true, AccessKind::Write) => Action::Write,
                };
                rec.tcdm(ctx.now, a.unit, action, a.bank, a.addr);
            }
            if !ok {
                let mut units: Vec<Unit> = group.accesses.iter().map(|a| a.unit).collect();
                units.dedup();
                for u in units {
                    stalls.record(u, "tcdm_conflict");
                }
                continue;
            }
            match p {
                TcdmPending::StoreWrite { iface } => {
                    let sd = self.ifaces[iface].stq.pop_front().expect("store data queued");
                    memory.write(sd.addr, &sd.data)?;
                    board.complete_store_group(sd.id);
                }
                TcdmPending::Load { id, items, uses } => {
                    board.spend(&uses);
                    let job = self.window.iter().find(|j| j.id == id).expect("job in window");
                    let word_bytes = (self.word_bits / 8) as u64;
                    let mut resps = Vec::new();
                    for &(i, g) in &items {
                        let mut data = vec![0u8; self.word_len(&job.instr, g)];
                        memory.read(job.instr.base_address + g as u64 * word_bytes, &mut data)?;
                        resps.push((
                            i,
                            Resp {
                                id,
                                word: job.instr.vd * self.banks_per_reg + g,
                                data,
                                ready: ctx.now + 1,
                            },
                        ));
                    }
                    for (i, r) in resps {
                        self.ifaces[i].resp.push_back(r);
                    }
                    self.advance(id, &items);
                }
            }
        }
        Ok(())
    }

    /// Phase 4 read results (store data).
    pub fn on_reads(
        &mut self,
        grants: &[bool],
        ctx: &Ctx,
        board: &mut Scoreboard,
        vrf: &VrfData,
        rec: &mut Recorder,
        stalls: &mut StallLog,
    ) -> Result<(), SimError> {
        let pending = std::mem::take(&mut self.pending_reads);
        for (p, &ok) in pending.into_iter().zip(grants) {
            let action = if ok { Action::Read } else { Action::Stall };
            for (&w, &b) in p.req.words.iter().zip(&p.req.banks) {
                rec.vrf(ctx.now, p.req.unit, action, b, w);
            }
            if !ok {
                stalls.record(p.req.unit, "read_conflict");
                continue;
            }
            assert_current(board, p.id, &p.req.words, ctx.now)?;
            board.spend(&p.uses);
            let job = self.window.iter().find(|j| j.id == p.id).expect("job in window");
            let word_bytes = (self.word_bits / 8) as u64;
            let mut queued = Vec::new();
            for (&(i, g), &w) in p.items.iter().zip(&p.req.words) {
                let len = self.word_len(&job.instr, g);
                queued.push((
                    i,
                    g,
                    StoreData {
                        id: p.id,
                        addr: job.instr.base_address + g as u64 * word_bytes,
                        data: vrf.word(w)[..len].to_vec(),
                        ready: ctx.now + 1,
                    },
                ));
            }
            for (i, g, sd) in queued {
                board.mark_read(p.id, g);
                self.ifaces[i].stq.push_back(sd);
            }
            self.advance(p.id, &p.items);
        }
        Ok(())
    }

    /// Phase 4 write results (load data).
    pub fn on_writes(
        &mut self,
        grants: &[bool],
        ctx: &Ctx,
        board: &mut Scoreboard,
        vrf: &mut VrfData,
        rec: &mut Recorder,
        stalls: &mut StallLog,
    ) {
        let pending = std::mem::take(&mut self.pending_writes);
        let mut inserted = vec![false; self.ifaces.len()];
        for (&(i, src), &ok) in pending.iter().zip(grants) {
            let unit = Unit::vlsu(i);
            let f = &mut self.ifaces[i];
            match src {
                Source::Shadow => {
                    let shadow = f.shadow.as_mut().unwrap();
                    let head = shadow.head().unwrap();
                    let bank = ctx.vrf_bank(head.word);
                    if ok {
                        let r = shadow.pop().unwrap();
                        rec.vrf(ctx.now, unit, Action::ShadowDrain, bank, r.word);
                        vrf.write_word(r.word, &r.data);
                        board.commit_write(r.id, r.word);
                    } else {
                        rec.vrf(ctx.now, unit, Action::Stall, bank, head.word);
                    }
                }
                Source::Direct => {
                    let r = f.resp.pop_front().unwrap();
                    let bank = ctx.vrf_bank(r.word);
                    if ok {
                        rec.vrf(ctx.now, unit, Action::Write, bank, r.word);
                        vrf.write_word(r.word, &r.data);
                        board.commit_write(r.id, r.word);
                    } else if let Some(shadow) = f.shadow.as_mut() {
                        rec.vrf(ctx.now, unit, Action::ShadowInsert, bank, r.word);
                        shadow.push(r).expect("shadow was empty");
                        inserted[i] = true;
                    } else {
                        rec.vrf(ctx.now, unit, Action::Stall, bank, r.word);
                        stalls.record(unit, "write_conflict");
                        f.resp.push_front(r);
                    }
                }
            }
        }
        // behind a non-empty shadow buffer, responses queue up in order
        for (i, f) in self.ifaces.iter_mut().enumerate() {
            let Some(shadow) = f.shadow.as_mut() else { continue };
            if inserted[i] || shadow.is_empty() || shadow.is_full() {
                continue;
            }
            if f.resp.front().is_some_and(|r| r.ready <= ctx.now) {
                let r = f.resp.pop_front().unwrap();
                rec.vrf(ctx.now, Unit::vlsu(i), Action::ShadowInsert, ctx.vrf_bank(r.word), r.word);
                shadow.push(r).expect("shadow has room");
            }
        }
    }
}
