use super::{
    core_share, Allocator, GeneratedKernel, GoldenCheck, GoldenReference, InputSource, Kernel,
    KernelKind, KernelSpec, StreamBuilder,
};
use crate::config::ValidConfig;
use crate::elem;
use crate::error::KernelError;
use crate::memory::MemoryImage;

/// `y ← a·x + y`, strip-mined per core. Strip = {VLE x, VLE y, VFMACC, VSE y}.
///
/// With unrolling `u` the loads and multiply-adds of `u` strips come first and
/// the `u` stores trail, each strip on its own pair of register groups, so a
/// store never waits on the multiply-add of the following strip.
#[derive(Debug, Default, Clone, Copy)]
pub struct Axpy;

impl Kernel for Axpy {
    fn kind(&self) -> KernelKind {
        KernelKind::Axpy
    }

    fn generate(
        &self,
        spec: &KernelSpec,
        config: &ValidConfig,
        seed: u64,
    ) -> Result<GeneratedKernel, KernelError> {
        let (n, ew, lmul, u) = (spec.n, spec.element_width, spec.lmul, spec.unroll);
        let eb = elem::bytes(ew) as u64;
        if 2 * u * lmul > 32 {
            return Err(KernelError::Invalid(format!(
                "unroll {u} at lmul {lmul} needs {} registers",
                2 * u * lmul
            )));
        }
        let vlmax = config.vlmax(ew, lmul);

        let mut alloc = Allocator::new(config);
        let x_base = alloc.alloc(n as u64 * eb)?;
        let y_base = alloc.alloc(n as u64 * eb)?;

        let mut src = InputSource::new(seed, ew);
        let a = src.vector(1)[0];
        let x = src.vector(n);
        let y = src.vector(n);
        let mut image = MemoryImage::zeroed(config.tcdm_capacity());
        image.write_elements(x_base, ew, &x)?;
        image.write_elements(y_base, ew, &y)?;
        let expected: Vec<f64> = x.iter().zip(&y).map(|(&xi, &yi)| elem::fma(ew, a, xi, yi)).collect();

        let mut streams = Vec::new();
        for core in 0..config.num_cores {
            let (lo, hi) = core_share(n, core, config.num_cores);
            let mut b = StreamBuilder::new();
            if u > 1 && (hi - lo) % (vlmax * u) != 0 {
                return Err(KernelError::Invalid(format!(
                    "{} elements per core is not a multiple of {u} strips of {vlmax}",
                    hi - lo
                )));
            }
            let strips: Vec<(usize, usize)> = (lo..hi)
                .step_by(vlmax)
                .map(|s| (s, (s + vlmax).min(hi)))
                .collect();
            for group in strips.chunks(u) {
                for (i, &(s, e)) in group.iter().enumerate() {
                    let (xr, yr) = (2 * i * lmul, (2 * i + 1) * lmul);
                    b.setvl(e - s, ew, lmul);
                    b.vle(xr, x_base + s as u64 * eb);
                    b.vle(yr, y_base + s as u64 * eb);
                    b.vfmacc_vf(yr, a, xr);
                }
                for (i, &(s, e)) in group.iter().enumerate() {
                    b.setvl(e - s, ew, lmul);
                    b.vse((2 * i + 1) * lmul, y_base + s as u64 * eb);
                }
            }
            streams.push(b.instrs);
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
                    tolerance: vec![0.0; n],
                    expected,
                }],
                sums: Vec::new(),
            },
            scalar_fetches: 0,
            cluster_barrier: false,
        })
    }
}
