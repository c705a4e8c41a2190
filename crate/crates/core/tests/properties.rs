use std::f64::consts::E;

use axivort_core::biot_savart::velocity_field;
use axivort_core::inequality_lab::{lemma34a_choice, symmetrization_check, CutoffFn};
use axivort_core::kernel::{Dimension, HalfPlanePoint, KernelEvaluator, KernelTable, ProfileKernel};
use axivort_core::{Checkpoint, InitialData, ParticleEnsemble, RunConfig, Sign, SimulationState};
use proptest::prelude::*;

fn ensemble(dim: Dimension, particles: &[(f64, f64, f64)]) -> ParticleEnsemble {
    let pos = particles.iter().map(|&(r, z, _)| HalfPlanePoint::new(r, z)).collect();
    let mu = particles.iter().map(|&(_, _, m)| m).collect();
    ParticleEnsemble::new(dim, pos, vec![1.0; particles.len()], mu, Some(Sign::Positive)).unwrap()
}

fn particles(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    prop::collection::vec((0.3..3.0f64, -1.5..1.5f64, 0.01..1.0f64), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn table_tracks_quadrature(d in 3u32..=8, log_s in -8.0..8.0f64) {
        let dim = Dimension::new(d).unwrap();
        let table = KernelTable::shared(dim).unwrap();
        let ev = KernelEvaluator::new(dim);
        let s = 10f64.powf(log_s);
        let a = table.profile(s).unwrap();
        let b = ev.profile(s).unwrap();
        prop_assert!((a.f - b.f).abs() <= 1e-9 * b.f.abs());
        prop_assert!((a.df - b.df).abs() <= 1e-9 * b.df.abs());
    }

    #[test]
    fn lemma34a_holds_for_every_choice(tau in 1u32..=8, log_y in 2.0..8.0f64) {
        let y = 10f64.powf(log_y);
        let ks = lemma34a_choice(tau, y);
        prop_assert!(!ks.is_empty());
        for k in ks {
            let lhs = y.powf(tau as f64 / k as f64) * k as f64;
            prop_assert!(lhs <= 2.0 * E * (tau as f64 + 1.0) * (E + y).ln());
        }
    }

    #[test]
    fn symmetrized_form_matches(d in 3u32..=6, ps in particles(2..40)) {
        let dim = Dimension::new(d).unwrap();
        let ens = ensemble(dim, &ps);
        let table = KernelTable::shared(dim).unwrap();
        let cutoff = CutoffFn::new(0.8, 2.0).unwrap();
        let (parts, _) = symmetrization_check(&ens, table.as_ref(), &cutoff, 0.05).unwrap();
        prop_assert!(parts.rel_diff <= 1e-12, "rel diff {}", parts.rel_diff);
    }

    #[test]
    fn velocity_is_invariant_under_vertical_shift(ps in particles(1..20), shift in -5.0..5.0f64) {
        let dim = Dimension::new(4).unwrap();
        let table = KernelTable::shared(dim).unwrap();
        let shifted: Vec<_> = ps.iter().map(|&(r, z, m)| (r, z + shift, m)).collect();
        let targets = [HalfPlanePoint::new(0.7, 0.2), HalfPlanePoint::new(2.5, -1.0)];
        let moved: Vec<_> = targets.iter().map(|p| HalfPlanePoint::new(p.r, p.z + shift)).collect();
        let a = velocity_field(&ensemble(dim, &ps), table.as_ref(), &targets, 0.05).unwrap();
        let b = velocity_field(&ensemble(dim, &shifted), table.as_ref(), &moved, 0.05).unwrap();
        for (u, v) in a.iter().zip(&b) {
            let scale = u.ur.abs() + u.uz.abs();
            prop_assert!((u.ur - v.ur).abs() <= 1e-9 * scale);
            prop_assert!((u.uz - v.uz).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn config_round_trips(
        d in 3u32..=8,
        n in 10usize..5000,
        dt in 1e-4..0.5f64,
        seed in 0..=i64::MAX as u64,
        jitter in 0.0..0.5f64,
        r_min in 0.1..1.0f64,
        width in 0.1..2.0f64,
    ) {
        let mut cfg = RunConfig::new(Dimension::new(d).unwrap());
        cfg.n_target = n;
        cfg.dt = dt;
        cfg.seed = seed;
        cfg.jitter = jitter;
        cfg.initial_data = InitialData::Annulus { r_min, r_max: r_min + width, z_min: -0.5, z_max: 0.5, xi0: 1.0 };
        prop_assert!(cfg.validate().is_ok());
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn checkpoint_json_is_exact(ps in particles(1..30)) {
        let dim = Dimension::new(5).unwrap();
        let cfg = RunConfig::new(dim);
        let state = SimulationState::new(ensemble(dim, &ps));
        let ckpt = Checkpoint::new(&cfg, &state);
        let back = Checkpoint::from_json(&ckpt.to_json()).unwrap();
        prop_assert_eq!(back, ckpt);
    }
}
