use super::{
    core_share, Allocator, GeneratedKernel, GoldenCheck, GoldenReference, InputSource, Kernel,
    KernelKind, KernelSpec, StreamBuilder,
};
use crate::config::ValidConfig;
use crate::elem;
use crate::error::KernelError;
use crate::memory::MemoryImage;

/// `y = A·x` with `A` stored column-major, vectorized along rows.
///
/// Each core owns a contiguous block of rows and keeps its slice of `y` in an
/// accumulator group for the whole column loop, so every loaded element of `A`
/// feeds exactly one multiply-add and `y` is stored once. Columns rotate
/// through three load buffers with a prefetch distance of one; `x_j` travels as
/// the scalar operand (one scalar fetch per column). With unroll `u`, column `j`
/// accumulates into group `j mod u` so consecutive multiply-adds do not depend
/// on each other; the groups are added together before the store.
#[derive(Debug, Default, Clone, Copy)]
pub struct Gemv;

impl Kernel for Gemv {
    fn kind(&self) -> KernelKind {
        KernelKind::Gemv
    }

    fn generate(
        &self,
        spec: &KernelSpec,
        config: &ValidConfig,
        seed: u64,
    ) -> Result<GeneratedKernel, KernelError> {
        let (rows, cols, ew, lmul) = (spec.m, spec.n, spec.element_width, spec.lmul);
        let u = spec.unroll.min(cols).max(1);
        let eb = elem::bytes(ew) as u64;
        if (3 + u) * lmul > 32 {
            return Err(KernelError::Invalid(format!(
                "GEMV with unroll {u} needs {} register groups at lmul {lmul}",
                3 + u
            )));
        }
        let vlmax = config.vlmax(ew, lmul);

        let mut alloc = Allocator::new(config);
        let a_base = alloc.alloc((rows * cols) as u64 * eb)?;
        let x_base = alloc.alloc(cols as u64 * eb)?;
        let y_base = alloc.alloc(rows as u64 * eb)?;

        let mut src = InputSource::new(seed, ew);
        let a = src.vector(rows * cols); // column-major
        let x = src.vector(cols);
        let mut image = MemoryImage::zeroed(config.tcdm_capacity());
        image.write_elements(a_base, ew, &a)?;
        image.write_elements(x_base, ew, &x)?;

        let expected: Vec<f64> = (0..rows)
            .map(|r| {
                let mut acc: Vec<f64> = (0..u).map(|j| elem::round(ew, x[j] * a[j * rows + r])).collect();
                for j in u..cols {
                    acc[j % u] = elem::fma(ew, x[j], a[j * rows + r], acc[j % u]);
                }
                acc[1..].iter().fold(acc[0], |t, &v| elem::round(ew, t + v))
            })
            .collect();

        let buf = |j: usize| (j % 3) * lmul;
        let acc = |i: usize| (3 + i) * lmul;
        let col_addr = |j: usize, r: usize| a_base + (j * rows + r) as u64 * eb;
        let mut streams = Vec::new();
        let mut fetches = 0;
        for core in 0..config.num_cores {
            let (lo, hi) = core_share(rows, core, config.num_cores);
            let mut s = StreamBuilder::new();
            for rs in (lo..hi).step_by(vlmax) {
                let re = (rs + vlmax).min(hi);
                s.setvl(re - rs, ew, lmul);
                s.vle(buf(0), col_addr(0, rs));
                for j in 0..cols {
                    if j + 1 < cols {
                        s.vle(buf(j + 1), col_addr(j + 1, rs));
                    }
                    if j < u {
                        s.vfmul_vf(acc(j), x[j], buf(j));
                    } else {
                        s.vfmacc_vf(acc(j % u), x[j], buf(j));
                    }
                    fetches += 1;
                }
                for i in 1..u {
                    s.vfadd_vv(acc(0), acc(0), acc(i));
                }
                s.vse(acc(0), y_base + rs as u64 * eb);
            }
            streams.push(s.instrs);
        }

        Ok(GeneratedKernel {
            spec: *spec,
            streams,
            image,
            golden: GoldenReference {
                checks: vec![GoldenCheck {
                    name: "y".into(),
                    addr: y_base,
                    element_width: ew,
                    tolerance: vec![0.0; rows],
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
    fn intensity_approaches_one() {
        let cfg = Preset::DoubleBw.validated();
        let g = generate(&KernelSpec::gemv(128, 64), &cfg, 5).unwrap();
        let m = g.operational_intensity();
        // (64 loaded + 1 scalar) per 64 FMAs per column, plus the final store
        let oracle = (2.0 * (64.0 * 64.0 + 64.0 + 64.0)) / (2.0 * 64.0 * 64.0);
        assert!((m - oracle).abs() < 1e-12, "{m} vs {oracle}");
    }

    #[test]
    fn loads_run_one_column_ahead() {
        let cfg = Preset::DoubleBw.validated();
        let g = generate(&KernelSpec::gemv(128, 8), &cfg, 5).unwrap();
        let ops: Vec<_> = g.streams[0][1..6].iter().map(|i| (i.opcode, i.vd)).collect();
        assert_eq!(
            ops,
            [
                (Opcode::Vle, 0),
                (Opcode::Vle, 8),
                (Opcode::Vfmul, 24),
                (Opcode::Vle, 16),
                (Opcode::Vfmacc, 24)
            ]
        );
    }
}
