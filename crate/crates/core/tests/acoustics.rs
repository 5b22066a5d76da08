use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refloc::acoustics::{
    critical_distance, drr, expected_reflection_count, expected_reflection_count_at, replace_early, sabine_absorption,
    sabine_t60, schroeder_decay, synthesize_parametric_rir, RoomAcousticsParams, ScalarRir, DIRECT_WINDOW,
    EARLY_WINDOW, PARAMETRIC_DRR_TOLERANCE_DB, PARAMETRIC_T60_TOLERANCE,
};
use refloc::room_sim::{ground_truth_early, image_sources, scalar_rir, Reflection, ReflectionList};
use refloc::scene::{shipped_scenario, Direction};

/// Dimensions, T60, R_c, distance and DRR of the five rooms.
const ROOMS: [([f64; 3], f64, f64, f64, f64); 5] = [
    ([8.0, 6.0, 4.0], 0.413, 1.22, 4.03, -11.5),
    ([7.0, 5.0, 3.0], 0.186, 1.34, 3.00, -4.0),
    ([9.0, 7.0, 4.0], 0.841, 0.98, 1.28, -5.2),
    ([11.0, 7.0, 4.0], 0.876, 1.06, 1.97, -7.57),
    ([13.0, 8.0, 5.0], 1.055, 1.26, 4.90, -13.6),
];

fn volume(d: [f64; 3]) -> f64 {
    d[0] * d[1] * d[2]
}

fn surface(d: [f64; 3]) -> f64 {
    2.0 * (d[0] * d[1] + d[0] * d[2] + d[1] * d[2])
}

fn params(k: usize) -> RoomAcousticsParams {
    let (d, t60, _, dist, drr_db) = ROOMS[k];
    let mut p = RoomAcousticsParams::new(volume(d), t60, drr_db, Direction::from_degrees(80.0, 25.0).unwrap());
    p.source_distance = Some(dist);
    p
}

#[test]
fn critical_distances_match_the_room_table() {
    for (k, (d, t60, rc, _, _)) in ROOMS.iter().enumerate() {
        let got = critical_distance(volume(*d), *t60);
        assert!((got - rc).abs() <= 0.03, "room {}: {got}", k + 1);
    }
}

#[test]
fn sabine_round_trip_reproduces_the_table_pairs() {
    for (k, (d, t60, rc, _, _)) in ROOMS.iter().enumerate() {
        let a = sabine_absorption(volume(*d), surface(*d), *t60);
        let t = sabine_t60(volume(*d), surface(*d), a).unwrap();
        assert!((t - t60).abs() <= 1e-9, "room {}", k + 1);
        let r = critical_distance(volume(*d), t);
        assert!((r - rc).abs() <= 0.01 * rc, "room {}: R_c {r} vs {rc}", k + 1);
    }
}

#[test]
fn expected_count_is_near_the_image_count() {
    let (sc, _) = shipped_scenario(1).unwrap();
    let direct = sc.source_distance() / 343.0;
    let images = ground_truth_early(&image_sources(&sc, direct + 0.03).unwrap(), EARLY_WINDOW)
        .unwrap()
        .len() as f64;
    let model = expected_reflection_count(sc.room.volume(), direct + EARLY_WINDOW);
    assert!(model >= images / 2.0 && model <= images * 2.0, "{model} vs {images}");
}

#[test]
fn parametric_rir_meets_its_targets() {
    for k in 0..5 {
        let p = params(k);
        for seed in 0..3 {
            let (rir, list) = synthesize_parametric_rir(&p, 48_000.0, seed).unwrap();
            let t60 = schroeder_decay(&rir).t60().unwrap();
            assert!((t60 - p.t60).abs() <= PARAMETRIC_T60_TOLERANCE * p.t60, "room {}: {t60}", k + 1);
            let d = drr(&rir, DIRECT_WINDOW);
            assert!((d - p.drr_db).abs() <= PARAMETRIC_DRR_TOLERANCE_DB, "room {}: {d}", k + 1);
            let direct = list.as_slice()[0];
            assert!((direct.delay - p.distance() / p.speed_of_sound).abs() < 1e-12);
            assert_eq!(direct.doa, p.direct_doa);
        }
    }
    assert_eq!(PARAMETRIC_T60_TOLERANCE, 0.05);
    assert_eq!(PARAMETRIC_DRR_TOLERANCE_DB, 0.5);
}

#[test]
fn parametric_rir_is_deterministic() {
    let p = params(2);
    assert_eq!(
        synthesize_parametric_rir(&p, 48_000.0, 9).unwrap(),
        synthesize_parametric_rir(&p, 48_000.0, 9).unwrap()
    );
}

#[test]
fn early_count_follows_the_image_model() {
    let p = params(0);
    let t0 = p.distance() / p.speed_of_sound;
    let want = expected_reflection_count_at(p.volume, t0 + EARLY_WINDOW, p.speed_of_sound)
        - expected_reflection_count_at(p.volume, t0, p.speed_of_sound);
    for seed in 0..100 {
        let (_, list) = synthesize_parametric_rir(&p, 48_000.0, seed).unwrap();
        let got = list.iter().filter(|r| r.delay > t0 && r.delay <= t0 + EARLY_WINDOW).count() as f64;
        assert!((got - want).abs() <= 0.3 * want, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn unreachable_drr_is_rejected() {
    let mut p = params(1);
    p.drr_db = -80.0;
    assert!(synthesize_parametric_rir(&p, 48_000.0, 1).is_err());
}

/// Normalized copy of the synthesized early part, as an estimator would
/// report it.
fn early_estimates(list: &ReflectionList) -> ReflectionList {
    ground_truth_early(list, EARLY_WINDOW).unwrap()
}

#[test]
fn replacing_with_the_synthesized_early_set_is_a_fixed_point() {
    let p = params(3);
    let (rir, list) = synthesize_parametric_rir(&p, 48_000.0, 4).unwrap();
    let (out, out_list) = replace_early((&rir, &list), &early_estimates(&list), EARLY_WINDOW).unwrap();
    let peak = rir.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for (a, b) in out.samples.iter().zip(&rir.samples) {
        assert!((a - b).abs() <= 1e-9 * peak);
    }
    assert_eq!(out_list.len(), list.len());
    for (a, b) in out_list.iter().zip(list.iter()) {
        assert!((a.delay - b.delay).abs() < 1e-12);
        assert!((a.amplitude - b.amplitude).abs() <= 1e-9 * b.amplitude.abs());
        assert_eq!(a.doa, b.doa);
    }
}

#[test]
fn zero_window_leaves_the_rir_alone() {
    let p = params(1);
    let (rir, list) = synthesize_parametric_rir(&p, 48_000.0, 2).unwrap();
    let est = ReflectionList::new(
        vec![Reflection { delay: 0.0, doa: p.direct_doa, amplitude: 1.0 }],
        true,
    )
    .unwrap();
    assert_eq!(replace_early((&rir, &list), &est, 0.0).unwrap(), (rir, list));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replacement_keeps_the_energy(seed in any::<u64>(), count in 0usize..60) {
        let p = params(0);
        let (rir, list) = synthesize_parametric_rir(&p, 48_000.0, seed % 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut est = vec![Reflection { delay: 0.0, doa: p.direct_doa, amplitude: 1.0 }];
        for _ in 0..count {
            est.push(Reflection {
                delay: rng.random_range(1e-4..EARLY_WINDOW),
                doa: Direction::from_degrees(rng.random_range(0.0..180.0), rng.random_range(-180.0..180.0)).unwrap(),
                amplitude: 0.5,
            });
        }
        let est = ReflectionList::new(est, true).unwrap();
        let (out, _) = replace_early((&rir, &list), &est, EARLY_WINDOW).unwrap();
        prop_assert!((out.energy() - rir.energy()).abs() <= 1e-6 * rir.energy());
    }

    #[test]
    fn decay_curve_ignores_overall_scale(seed in any::<u64>(), scale in 1e-3..1e3f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..2000).map(|i| rng.random_range(-1.0..1.0) * (-(i as f64) / 300.0).exp()).collect();
        let a = schroeder_decay(&ScalarRir::new(x.clone(), 8000.0).unwrap());
        let b = schroeder_decay(&ScalarRir::new(x.iter().map(|v| v * scale).collect(), 8000.0).unwrap());
        prop_assert_eq!(a.level_db[0], 0.0);
        for (p, q) in a.level_db.iter().zip(&b.level_db) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()));
        }
        prop_assert!(a.level_db.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn room2_decay_gives_its_t60() {
    let (sc, _) = shipped_scenario(2).unwrap();
    let refl = image_sources(&sc, 2.0 * sc.rir_length).unwrap();
    let rir = scalar_rir(&refl, sc.fs, 2.0 * sc.rir_length).unwrap();
    let t60 = schroeder_decay(&rir).t60().unwrap();
    assert!((t60 - 0.186).abs() <= 0.15 * 0.186, "{t60}");
}

#[test]
fn room1_drr() {
    let (sc, _) = shipped_scenario(1).unwrap();
    let refl = image_sources(&sc, sc.rir_length).unwrap();
    let rir = scalar_rir(&refl, sc.fs, sc.rir_length).unwrap();
    let d = drr(&rir, DIRECT_WINDOW);
    assert!((d + 11.5).abs() <= 1.5, "{d}");
}
