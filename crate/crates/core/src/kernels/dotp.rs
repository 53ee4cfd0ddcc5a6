use super::{
    core_share, reduction_tolerance, Allocator, GeneratedKernel, GoldenCheck, GoldenReference,
    GoldenSum, InputSource, Kernel, KernelKind, KernelSpec, StreamBuilder,
};
use crate::config::ValidConfig;
use crate::elem;
use crate::error::KernelError;
use crate::memory::MemoryImage;

/// Dot product. Each core accumulates its share into a vector accumulator,
/// reduces it once and stores one scalar partial; the partials sum to the
/// result.
///
/// Registers at lmul `L` with unroll `u`: operands `a_i = (1+2i)L`,
/// `b_i = (2+2i)L`, accumulator `(1+2u)L`, scalar result in `v0`.
#[derive(Debug, Default, Clone, Copy)]
pub struct Dotp;

impl Kernel for Dotp {
    fn kind(&self) -> KernelKind {
        KernelKind::Dotp
    }

    fn generate(
        &self,
        spec: &KernelSpec,
        config: &ValidConfig,
        seed: u64,
    ) -> Result<GeneratedKernel, KernelError> {
        let (n, ew, lmul, u) = (spec.n, spec.element_width, spec.lmul, spec.unroll);
        let eb = elem::bytes(ew) as u64;
        if (2 * u + 2) * lmul > 32 {
            return Err(KernelError::Invalid(format!(
                "unroll {u} at lmul {lmul} needs {} registers",
                (2 * u + 2) * lmul
            )));
        }
        let vlmax = config.vlmax(ew, lmul);
        let cores = config.num_cores;

        let mut alloc = Allocator::new(config);
        let a_base = alloc.alloc(n as u64 * eb)?;
        let b_base = alloc.alloc(n as u64 * eb)?;
        let r_base = alloc.alloc(cores as u64 * 8)?;

        let mut src = InputSource::new(seed, ew);
        let a = src.vector(n);
        let b = src.vector(n);
        let mut image = MemoryImage::zeroed(config.tcdm_capacity());
        image.write_elements(a_base, ew, &a)?;
        image.write_elements(b_base, ew, &b)?;

        let acc = (1 + 2 * u) * lmul;
        let mut streams = Vec::new();
        let mut partials = Vec::new();
        let mut tolerances = Vec::new();
        let mut total = 0.0;
        let mut total_abs = 0.0;
        for core in 0..cores {
            let (lo, hi) = core_share(n, core, cores);
            let count = hi - lo;
            // sequential oracle in double precision
            let sum: f64 = (lo..hi).map(|i| a[i] * b[i]).sum();
            let abs: f64 = (lo..hi).map(|i| (a[i] * b[i]).abs()).sum();
            partials.push(sum);
            tolerances.push(reduction_tolerance(ew, count, abs));
            total += sum;
            total_abs += abs;

            let mut s = StreamBuilder::new();
            if count == 0 {
                streams.push(s.instrs);
                continue;
            }
            if u > 1 && count % (vlmax * u) != 0 {
                return Err(KernelError::Invalid(format!(
                    "{count} elements per core is not a multiple of {u} strips of {vlmax}"
                )));
            }
            let width = count.min(vlmax);
            s.setvl(width, ew, lmul);
            s.vmv(acc, 0.0);
            let strips: Vec<(usize, usize)> = (lo..hi)
                .step_by(vlmax)
                .map(|st| (st, (st + vlmax).min(hi)))
                .collect();
            for group in strips.chunks(u) {
                for (i, &(st, en)) in group.iter().enumerate() {
                    let (ar, br) = ((1 + 2 * i) * lmul, (2 + 2 * i) * lmul);
                    s.setvl(en - st, ew, lmul);
                    s.vle(ar, a_base + st as u64 * eb);
                    s.vle(br, b_base + st as u64 * eb);
                    s.vfmacc_vv(acc, ar, br);
                }
            }
            s.setvl(width, ew, lmul);
            s.vfredsum(0, acc, 0.0);
            s.setvl(1, ew, 1);
            s.vse(0, r_base + core as u64 * 8);
            streams.push(s.instrs);
        }

        let checks = (0..cores)
            .map(|c| GoldenCheck {
                name: format!("partial{c}"),
                addr: r_base + c as u64 * 8,
                element_width: ew,
                expected: vec![partials[c]],
                tolerance: vec![tolerances[c]],
            })
            .collect();
        let total_tol = reduction_tolerance(ew, n, total_abs);
        Ok(GeneratedKernel {
            spec: *spec,
            streams,
            image,
            golden: GoldenReference {
                checks,
                sums: vec![GoldenSum {
                    name: "total".into(),
                    addrs: (0..cores).map(|c| r_base + c as u64 * 8).collect(),
                    element_width: ew,
                    expected: total,
                    tolerance: total_tol,
                }],
            },
            scalar_fetches: 0,
            cluster_barrier: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{ClusterConfig, Preset};
    use crate::kernels::{generate, Opcode};

    /// Independent oracle: strips of `vlmax` over one core's share.
    fn expected_strips(n: usize, ew: u32, lmul: usize, vlen: usize) -> usize {
        let vlmax = lmul * vlen / ew as usize;
        n.div_ceil(vlmax)
    }

    #[test]
    fn strip_count_matches_vlmax_formula() {
        let cfg = ClusterConfig {
            num_cores: 1,
            ..Preset::Baseline.config()
        }
        .validate()
        .unwrap();
        let g = generate(&KernelSpec::dotp(4096), &cfg, 3).unwrap();
        let s = &g.streams[0];
        let count = |op| s.iter().filter(|i| i.opcode == op).count();
        let strips = expected_strips(4096, 64, 8, 512);
        assert_eq!(strips, 64);
        assert_eq!(count(Opcode::Vfmacc), strips);
        assert_eq!(count(Opcode::Vle), 2 * strips);
        assert_eq!(count(Opcode::Vfredsum), 1);
        assert!(s.iter().filter(|i| i.opcode == Opcode::Vle).all(|i| i.vl == 64));
    }

    #[test]
    fn register_assignment() {
        let cfg = Preset::Baseline.validated();
        let g = generate(&KernelSpec::dotp(128), &cfg, 3).unwrap();
        let s = &g.streams[0];
        assert_eq!(s[1].opcode, Opcode::VmvScalar);
        assert_eq!(s[1].vd, 24);
        assert_eq!((s[2].vd, s[3].vd), (8, 16));
        assert_eq!((s[4].vd, s[4].vs1, s[4].vs2), (24, 8, 16));
    }

    #[test]
    fn intensity_is_two() {
        let cfg = Preset::Baseline.validated();
        let g = generate(&KernelSpec::dotp(4096), &cfg, 3).unwrap();
        // one stored scalar per core on top of 2 loads per FMA
        let m = g.operational_intensity();
        assert!((m - 2.0).abs() < 1e-3, "{m}");
        assert_eq!(g.memory_elements(), 2 * 4096 + 2);
    }

    #[test]
    fn too_many_registers_rejected() {
        let cfg = Preset::Baseline.validated();
        let spec = KernelSpec::dotp(4096).with_unroll(2);
        assert!(matches!(generate(&spec, &cfg, 0), Err(KernelError::Invalid(_))));
        assert!(generate(&spec.with_lmul(4), &cfg, 0).is_ok());
    }
}
