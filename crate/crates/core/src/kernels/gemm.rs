use super::{
    core_share, Allocator, GeneratedKernel, GoldenCheck, GoldenReference, InputSource, Kernel,
    KernelKind, KernelSpec, StreamBuilder,
};
use crate::config::ValidConfig;
use crate::elem;
use crate::error::KernelError;
use crate::memory::MemoryImage;

/// `C = A·B`, register-blocked: a block of rows of `C` stays in accumulator
/// groups across the whole `k` loop. Each step loads one strip of a row of
/// `B` (double-buffered, one step ahead) and issues one scalar-vector
/// multiply-add per row with `A[r, k]` as the scalar.
///
/// Consecutive row blocks alternate between two accumulator sets, so the
/// stores of one block drain while the next block computes.
#[derive(Debug, Default, Clone, Copy)]
pub struct Gemm;

impl Kernel for Gemm {
    fn kind(&self) -> KernelKind {
        KernelKind::Gemm
    }

    fn generate(
        &self,
        spec: &KernelSpec,
        config: &ValidConfig,
        seed: u64,
    ) -> Result<GeneratedKernel, KernelError> {
        let (m, n, k, ew, lmul) = (spec.m, spec.n, spec.k, spec.element_width, spec.lmul);
        let eb = elem::bytes(ew) as u64;
        let groups = 32 / lmul;
        if groups < 3 {
            return Err(KernelError::Invalid(format!("GEMM needs 3 register groups at lmul {lmul}")));
        }
        let vlmax = config.vlmax(ew, lmul);

        let mut alloc = Allocator::new(config);
        let a_base = alloc.alloc((m * k) as u64 * eb)?;
        let b_base = alloc.alloc((k * n) as u64 * eb)?;
        let c_base = alloc.alloc((m * n) as u64 * eb)?;

        let mut src = InputSource::new(seed, ew);
        let a = src.vector(m * k); // row-major
        let b = src.vector(k * n); // row-major
        let mut image = MemoryImage::zeroed(config.tcdm_capacity());
        image.write_elements(a_base, ew, &a)?;
        image.write_elements(b_base, ew, &b)?;

        let mut expected = vec![0.0; m * n];
        for r in 0..m {
            for c in 0..n {
                let mut acc = elem::round(ew, a[r * k] * b[c]);
                for kk in 1..k {
                    acc = elem::fma(ew, a[r * k + kk], b[kk * n + c], acc);
                }
                expected[r * n + c] = acc;
            }
        }

        let half = (groups - 2) / 2;
        let acc = |set: usize, r: usize| (set * half + r) * lmul;
        let bbuf = |t: usize| (groups - 2 + t % 2) * lmul;
        let b_addr = |kk: usize, c: usize| b_base + (kk * n + c) as u64 * eb;
        let c_addr = |r: usize, c: usize| c_base + (r * n + c) as u64 * eb;
        let mut streams = Vec::new();
        let mut fetches = 0;
        for core in 0..config.num_cores {
            let (lo, hi) = core_share(m, core, config.num_cores);
            // (first column, width, first row, end row), strip-major
            let mut blocks = Vec::new();
            for cs in (0..n).step_by(vlmax) {
                let w = vlmax.min(n - cs);
                blocks.extend((lo..hi).step_by(half).map(|r0| (cs, w, r0, (r0 + half).min(hi))));
            }
            let mut s = StreamBuilder::new();
            let Some(&(c0, w0, _, _)) = blocks.first() else {
                streams.push(s.instrs);
                continue;
            };
            s.setvl(w0, ew, lmul);
            s.vle(bbuf(0), b_addr(0, c0));
            let mut t = 0;
            // stores of the previous block: (register, row, first column)
            let mut pending: Vec<(usize, usize, usize)> = Vec::new();
            for (bi, &(cs, w, r0, r1)) in blocks.iter().enumerate() {
                let set = bi % 2;
                let following = blocks.get(bi + 1).filter(|b| b.1 == w);
                for kk in 0..k {
                    if kk + 1 < k {
                        s.vle(bbuf(t + 1), b_addr(kk + 1, cs));
                    } else if let Some(&(nc, ..)) = following {
                        s.vle(bbuf(t + 1), b_addr(0, nc));
                    }
                    for r in r0..r1 {
                        let scalar = a[r * k + kk];
                        if kk == 0 {
                            s.vfmul_vf(acc(set, r - r0), scalar, bbuf(t));
                        } else {
                            s.vfmacc_vf(acc(set, r - r0), scalar, bbuf(t));
                        }
                        fetches += 1;
                        // one store of the previous block every few steps, slotted in
                        // after the first multiply-add so the next prefetch is not delayed
                        if r == r0 && kk % 4 == 3 && !pending.is_empty() {
                            let (reg, row, c) = pending.remove(0);
                            s.vse(reg, c_addr(row, c));
                        }
                    }
                    t += 1;
                }
                for (reg, row, c) in pending.drain(..) {
                    s.vse(reg, c_addr(row, c));
                }
                pending = (r0..r1).map(|r| (acc(set, r - r0), r, cs)).collect();
                if let Some(&(nc, nw, ..)) = blocks.get(bi + 1).filter(|b| b.1 != w) {
                    // a narrower last strip: drain, switch length, restart the prefetch
                    for (reg, row, c) in pending.drain(..) {
                        s.vse(reg, c_addr(row, c));
                    }
                    s.setvl(nw, ew, lmul);
                    s.vle(bbuf(t), b_addr(0, nc));
                }
            }
            for (reg, row, c) in pending {
                s.vse(reg, c_addr(row, c));
            }
            streams.push(s.instrs);
        }

        Ok(GeneratedKernel {
            spec: *spec,
            streams,
            image,
            golden: GoldenReference {
                checks: vec![GoldenCheck {
                    name: "C".into(),
                    addr: c_base,
                    element_width: ew,
                    tolerance: vec![0.0; m * n],
                    expected,
                }],
                sums: Vec::new(),
            },
            scalar_fetches: fetches,
            cluster_barrier: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;
    use crate::kernels::{generate, Opcode};

    #[test]
    fn intensity_below_half() {
        let cfg = Preset::Baseline.validated();
        let g = generate(&KernelSpec::gemm(64, 64, 64), &cfg, 9).unwrap();
        // independent count per core: 32 rows in blocks of 3 (the last holds 2),
        // 2 column strips of 32 elements
        let blocks = 32usize.div_ceil(3) * 2;
        let b_loads = blocks * 64 * 32;
        let c_stores = 2 * 32 * 32;
        let scalars = 2 * 32 * 64;
        let fma = 64 * 64 * 64;
        let oracle = (2 * (b_loads + c_stores + scalars)) as f64 / fma as f64;
        let m = g.operational_intensity();
        assert!((m - oracle).abs() < 1e-12, "{m} vs {oracle}");
        assert!(m < 0.5);
        let vse = g.streams[0].iter().filter(|i| i.opcode == Opcode::Vse).count();
        assert_eq!(vse, 2 * 32);
    }
}
