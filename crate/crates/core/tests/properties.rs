use proptest::prelude::*;
use troop_sim::config::{ClusterConfig, Preset, FEATURE_NAMES};
use troop_sim::engine::{run, Engine, RunOptions};
use troop_sim::harness;
use troop_sim::kernels::{self, KernelKind, KernelSpec};
use troop_sim::memory::{AccessKind, AddressMap, Crossbar, Interleaved, Scrambled, TcdmRequest};
use troop_sim::roofline::{ceiling, SLACK};

fn preset() -> impl Strategy<Value = Preset> {
    prop::sample::select(Preset::ALL.to_vec())
}

/// A preset with random feature toggles; invalid combinations are filtered out.
fn config() -> impl Strategy<Value = ClusterConfig> {
    (preset(), prop::collection::vec(prop::option::of(any::<bool>()), FEATURE_NAMES.len()))
        .prop_map(|(p, toggles)| {
            let mut cfg = p.config();
            for (name, t) in FEATURE_NAMES.iter().zip(toggles) {
                if let Some(on) = t {
                    cfg.features.set(name, on).unwrap();
                }
            }
            cfg
        })
        .prop_filter("valid", |c| c.clone().validate().is_ok())
}

/// Small kernels that fit every preset.
fn spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        (1usize..=16, prop::sample::select(vec![2usize, 4, 8]), prop::sample::select(vec![32u32, 64]))
            .prop_map(|(n, l, ew)| KernelSpec::axpy(64 * n).with_lmul(l).with_ew(ew)),
        (1usize..=16, prop::sample::select(vec![2usize, 4, 8]), prop::sample::select(vec![32u32, 64]))
            .prop_map(|(n, l, ew)| KernelSpec::dotp(64 * n).with_lmul(l).with_ew(ew)),
        (1usize..=4, 1usize..=3).prop_map(|(m, n)| KernelSpec::gemv(32 * m, 16 * n)),
        prop::sample::select(vec![8usize, 16, 24]).prop_map(|n| KernelSpec::gemm(n, n, n)),
    ]
}

fn sim_cases() -> ProptestConfig {
    ProptestConfig::with_cases(24)
}

proptest! {
    #[test]
    fn ceiling_monotone(m in 0.01f64..10.0, r in 0.01f64..10.0, dm in 0.0f64..5.0, dr in 0.0f64..5.0) {
        let c = ceiling(m, r).unwrap();
        prop_assert!(c > 0.0 && c <= 1.0);
        prop_assert!(ceiling(m, r + dr).unwrap() >= c);
        prop_assert!(ceiling(m + dm, r).unwrap() <= c);
    }

    #[test]
    fn ceiling_scale_invariant(m in 0.01f64..10.0, r in 0.01f64..10.0, k in 0.1f64..100.0) {
        let a = ceiling(m, r).unwrap();
        let b = ceiling(k * m, k * r).unwrap();
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn validate_idempotent(cfg in config()) {
        let once = cfg.clone().validate().unwrap().into_inner();
        prop_assert_eq!(&once, &cfg);
        prop_assert_eq!(once.clone().validate().unwrap().into_inner(), once);
    }

    #[test]
    fn address_maps_injective(a in 0u64..16384, b in 0u64..16384) {
        // 16 Ki words: 128 KiB over 16 banks
        for map in [&Interleaved as &dyn AddressMap, &Scrambled] {
            let (ba, ra) = map.map_word(a, 16);
            let (bb, rb) = map.map_word(b, 16);
            prop_assert!(ba < 16 && ra < 1024);
            prop_assert_eq!(a == b, (ba, ra) == (bb, rb));
        }
    }

    #[test]
    fn crossbar_one_grant_per_bank(reqs in prop::collection::vec((0usize..2, 0usize..8, 0usize..16), 0..24)) {
        let reqs: Vec<TcdmRequest> = reqs
            .into_iter()
            .map(|(core, port, bank)| TcdmRequest { core, port, kind: AccessKind::Read, addr: 0, bank })
            .collect();
        let granted = Crossbar::new(16, 2).service(&reqs);
        for bank in 0..16 {
            let asked = reqs.iter().filter(|r| r.bank == bank).count();
            let got = reqs.iter().zip(&granted).filter(|(r, &g)| g && r.bank == bank).count();
            prop_assert_eq!(got, asked.min(1));
        }
    }

    #[test]
    fn scrambling_clears_dual_interface_conflicts(lmul in prop::sample::select(vec![4usize, 8]), loads in 2usize..10) {
        let on = harness::tcdm_load_stream(lmul, true, loads).unwrap();
        prop_assert!(on.steady().iter().all(|&n| n == 0), "{:?}", on.per_load);
        let off = harness::tcdm_load_stream(lmul, false, loads).unwrap();
        prop_assert!(off.steady().iter().all(|&n| n >= 1), "{:?}", off.per_load);
    }
}

proptest! {
    #![proptest_config(sim_cases())]

    #[test]
    fn roofline_bound_and_golden(cfg in config(), spec in spec(), seed in any::<u64>()) {
        let cfg = cfg.validate().unwrap();
        // run() itself rejects both violations; check the numbers again here
        let r = run(&cfg, &spec, seed, RunOptions::default()).unwrap();
        prop_assert!(r.golden.as_ref().is_some_and(|g| g.passed));
        let m = kernels::operational_intensity(&spec, &cfg).unwrap();
        let c = ceiling(m, cfg.bandwidth_to_compute_ratio().as_f64()).unwrap();
        prop_assert!(r.stats.utilization() <= c + SLACK, "{} > {}", r.stats.utilization(), c);
        prop_assert!(r.stats.fpu_busy <= r.stats.cycles * r.stats.active_cores as u64);
    }

    #[test]
    fn runs_are_deterministic(cfg in config(), spec in spec(), seed in any::<u64>()) {
        let cfg = cfg.validate().unwrap();
        let a = run(&cfg, &spec, seed, RunOptions { trace: true }).unwrap();
        let b = run(&cfg, &spec, seed, RunOptions { trace: true }).unwrap();
        prop_assert_eq!(&a.stats, &b.stats);
        prop_assert!(a.trace_text() == b.trace_text());
        prop_assert!(a.image == b.image);
    }

    #[test]
    fn shadow_buffers_empty_at_drain(cfg in config(), spec in spec(), seed in any::<u64>()) {
        let cfg = cfg.validate().unwrap();
        let g = kernels::generate(&spec, &cfg, seed).unwrap();
        let mut e = Engine::new(&cfg, g.streams, g.image, false).unwrap();
        while !e.finished() {
            e.step().unwrap();
            prop_assert!(e.shadow_occupancy() <= 2 * 2 * cfg.features.shadow_depth * cfg.num_cores);
        }
        prop_assert_eq!(e.shadow_occupancy(), 0);
    }

    #[test]
    fn chaining_schemes_agree_on_results(cfg in config(), spec in spec(), seed in any::<u64>()) {
        let mut credit = cfg.clone();
        credit.features.completion_counter_chaining = false;
        let mut counter = cfg;
        counter.features.completion_counter_chaining = true;
        let a = run(&credit.validate().unwrap(), &spec, seed, RunOptions::default()).unwrap();
        let b = run(&counter.validate().unwrap(), &spec, seed, RunOptions::default()).unwrap();
        prop_assert!(a.image == b.image);
    }

    #[test]
    fn golden_across_seeds(p in preset(), kind in prop::sample::select(KernelKind::ALL.to_vec()), seed in any::<u64>()) {
        let spec = match kind {
            KernelKind::Gemm => KernelSpec::gemm(16, 16, 16),
            KernelKind::Gemv => KernelSpec::gemv(64, 32),
            _ => KernelSpec { n: 1024, ..harness::reference_spec(p, kind) },
        };
        let r = run(&p.validated(), &spec, seed, RunOptions::default()).unwrap();
        prop_assert!(r.golden.unwrap().passed);
    }
}
