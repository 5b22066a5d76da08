//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit when any
//! criterion fails.

mod common;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use refloc::acoustics::{
    critical_distance, drr, replace_early, schroeder_decay, synthesize_parametric_rir, RoomAcousticsParams,
    DIRECT_WINDOW, EARLY_WINDOW,
};
use refloc::array_model::special::C64;
use refloc::array_model::{build_dictionary, steering_vector};
use refloc::clustering::dbscan_min_pts;
use refloc::eval::{match_reflections, DEFAULT_TOL_OMEGA_DEG, DEFAULT_TOL_TAU};
use refloc::focusing::{apply_focusing, compute_focusing, plan_bands};
use refloc::phalcor::{svd_rank1, CorrelationSet, PhaseAligner};
use refloc::pipeline::Estimator;
use refloc::room_sim::{ground_truth_early, image_sources, scalar_rir, simulate, Reflection, ReflectionList};
use refloc::scene::{shipped_scenario, AlgoConfig, ArraySpec, Direction};
use refloc::tf::StftTensor;

/// T60 (s), R_c (m) and DRR (dB) of the five rooms.
const TABLE: [(f64, f64, f64); 5] = [
    (0.413, 1.22, -11.5),
    (0.186, 1.34, -4.0),
    (0.841, 0.98, -5.2),
    (0.876, 1.06, -7.57),
    (1.055, 1.26, -13.6),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct RoomRun {
    pd: f64,
    pfa: f64,
    elapsed: Duration,
}

fn run_room(room: usize) -> RoomRun {
    let start = Instant::now();
    let (sc, cfg) = shipped_scenario(room).unwrap();
    let sim = simulate(&sc).unwrap();
    let est = Estimator::new(&sc.array, &cfg, sc.fs).unwrap();
    let e = est.estimate(&sim.recording).unwrap();
    let r = match_reflections(&e.reflections, &sim.truth, DEFAULT_TOL_TAU, DEFAULT_TOL_OMEGA_DEG.to_radians()).unwrap();
    RoomRun {
        pd: r.pd_percent,
        pfa: r.pfa_percent,
        elapsed: start.elapsed(),
    }
}

fn table_one() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, (t60, rc, drr_db)) in TABLE.iter().enumerate() {
        let (sc, _) = shipped_scenario(k + 1).unwrap();
        let got_rc = critical_distance(sc.room.volume(), *t60);
        let refl = image_sources(&sc, sc.rir_length).unwrap();
        let got_drr = drr(&scalar_rir(&refl, sc.fs, sc.rir_length).unwrap(), DIRECT_WINDOW);
        let ok = (got_rc - rc).abs() <= 0.03 && (got_drr - drr_db).abs() <= 1.5;
        pass &= ok;
        parts.push(format!("room {} R_c {got_rc:.3} DRR {got_drr:.2}", k + 1));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(60);
    outcome(pass, format!("{}; {:.1} s", parts.join(", "), elapsed.as_secs_f64()))
}

fn table_two_easy() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for room in [3, 4] {
        let r = run_room(room);
        pass &= r.pd >= 90.0 && r.pfa <= 10.0 && r.elapsed < Duration::from_secs(300);
        parts.push(format!("room {room} PD {:.1}% PFA {:.1}% in {:.1} s", r.pd, r.pfa, r.elapsed.as_secs_f64()));
    }
    outcome(pass, parts.join(", "))
}

fn table_two_hard() -> Outcome {
    let r1 = run_room(1);
    let r5 = run_room(5);
    let r2 = run_room(2);
    let ok1 = (r1.pd - 82.0).abs() <= 10.0 && r1.pfa <= 10.0;
    let ok5 = (r5.pd - 94.0).abs() <= 10.0 && (r5.pfa - 17.0).abs() <= 10.0;
    let ok2 = (r2.pd - 52.0).abs() <= 15.0;
    let show = |room: usize, r: &RoomRun, ok: bool| {
        format!("room {room} PD {:.1}% PFA {:.1}% {}", r.pd, r.pfa, if ok { "ok" } else { "out" })
    };
    outcome(
        ok1 && ok5 && ok2,
        format!("{}, {}, {}", show(1, &r1, ok1), show(5, &r5, ok5), show(2, &r2, ok2)),
    )
}

fn oracle_scenes() -> Outcome {
    let first = common::oracle_scene(0);
    let est = Estimator::new(&first.scenario.array, &first.config, first.scenario.fs).unwrap();
    let mut failed = Vec::new();
    let mut recovered = 0;
    for seed in 0..20 {
        let scene = common::oracle_scene(seed);
        let e = est.estimate(&scene.recording).unwrap();
        let r = match_reflections(&e.reflections, &scene.truth, 2e-4, 5f64.to_radians()).unwrap();
        recovered += r.counts.true_positives.saturating_sub(1);
        if r.counts.true_positives < r.counts.truth {
            failed.push(seed);
        }
    }
    outcome(
        failed.is_empty(),
        format!("{recovered}/60 reflections within 0.2 ms and 5°; seeds with a miss: {failed:?}"),
    )
}

fn focusing() -> Outcome {
    let cfg = AlgoConfig::default();
    let array = ArraySpec::default();
    let (fs, w) = (48_000.0, 7200);
    let bin_hz = fs / w as f64;
    let bands = plan_bands(cfg.band, cfg.focus_bw, bin_hz, w).unwrap();
    let centers: Vec<f64> = bands.iter().map(|b| b.center).collect();
    let dict = build_dictionary(&centers, &array, cfg.grid_size).unwrap();
    let fset = compute_focusing(&dict, cfg.band, cfg.focus_bw, cfg.focus_lambda, bin_hz, w).unwrap();

    let worst_center = fset
        .bands
        .iter()
        .map(|b| fset.get((b.center / bin_hz).round() as usize).unwrap().residual)
        .fold(0.0, f64::max);

    // one plane wave from grid direction g with a random spectrum
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = 417;
    let bins = fset.bins();
    let src: Vec<C64> = bins.clone().map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let x = StftTensor {
        data: Array3::from_shape_fn((array.num_mics(), bins.len(), 1), |(m, k, _)| {
            dict.column_at((bins.start + k) as f64 * bin_hz, g)[m] * src[k]
        }),
        fs,
        bin_hz,
        hop: w / 4,
        window_len: w,
        first_bin: bins.start,
    };
    let y = apply_focusing(&x, &fset).unwrap();
    let mut worst_ratio: f64 = 0.0;
    for (k, bin) in bins.enumerate() {
        let center = fset.bands[fset.band_of(bin).unwrap()].center;
        let h0 = dict.column_at(center, g);
        let frob = dict.matrix_at(center).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let bound = fset.matrices[k].residual * frob / h0.norm() * (h0.norm() * src[k].norm());
        let err = (0..array.num_mics())
            .map(|m| (y.data[[m, k, 0]] - h0[m] * src[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        worst_ratio = worst_ratio.max(err / bound);
    }
    let pass = worst_center <= 1e-6 && worst_ratio <= 1.0 + 1e-9;
    outcome(
        pass,
        format!("worst self-focusing residual {worst_center:.2e}, plane-wave error / bound at most {worst_ratio:.3}"),
    )
}

fn svd_and_alignment() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut unit = |n: usize| {
        let v = DVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let norm = v.norm();
        v / C64::new(norm, 0.0)
    };
    let mut worst_ratio: f64 = 0.0;
    for i in 0..200 {
        let (a, b) = (unit(32), unit(32));
        let sigma = 10f64.powf(-3.0 + 6.0 * i as f64 / 199.0);
        let m: DMatrix<C64> = &a * b.adjoint() * C64::new(sigma, 0.0);
        worst_ratio = worst_ratio.max(svd_rank1(&m).unwrap().sigma_ratio);
    }

    // direct sound plus one echo, focused to 3.5 kHz
    let cfg = AlgoConfig::default();
    let array = ArraySpec::default();
    let (f0, bin_hz, bins) = (3500.0, 48_000.0 / 7200.0, 375..675);
    let taus = cfg.tau_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut misses = 0;
    for _ in 0..10 {
        let d0 = Direction::from_degrees(rng.random_range(20.0..160.0), rng.random_range(-180.0..180.0)).unwrap();
        let d1 = Direction::from_degrees(rng.random_range(20.0..160.0), rng.random_range(-180.0..180.0)).unwrap();
        let tau1 = rng.random_range(0.002..0.019);
        let alpha = rng.random_range(0.3..0.9);
        let (h0, h1) = (steering_vector(f0, &d0, &array), steering_vector(f0, &d1, &array));
        let matrices = bins
            .clone()
            .map(|bin| {
                let p = &h0 + &h1 * C64::from_polar(alpha, -2.0 * PI * bin as f64 * bin_hz * tau1);
                &p * p.adjoint() * C64::new(rng.random_range(0.2..2.0), 0.0)
            })
            .collect();
        let cset = CorrelationSet { matrices, first_bin: bins.start, bin_hz, frames: 100 };
        let al = PhaseAligner::new(&cset, bins.clone()).unwrap();
        // the autocorrelation terms own the region around τ = 0
        let (best, _) = taus
            .iter()
            .filter(|&&t| t >= 0.001)
            .map(|&t| (t, al.align(t).unwrap().sigma1))
            .fold((0.0, f64::NEG_INFINITY), |b, x| if x.1 > b.1 { x } else { b });
        if (best - tau1).abs() > cfg.tau_step + 1e-12 {
            misses += 1;
        }
    }
    outcome(
        worst_ratio <= 1e-12 && misses == 0,
        format!("worst σ₂/σ₁ {worst_ratio:.1e} over 200 rank-1 inputs; σ_τ peak off by more than one step in {misses}/10 scenes"),
    )
}

fn dbscan_oracle() -> Outcome {
    let (go, gt) = (8f64.to_radians(), 3e-4);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..100 {
        let c = common::random_instance(&mut rng);
        let min_pts = rng.random_range(2..=5);
        let r = dbscan_min_pts(&c, go, gt, min_pts);
        let got = r.clusters.iter().map(|k| k.members.iter().copied().collect()).collect();
        let noise = r.noise.iter().copied().collect();
        if (got, noise) != common::brute_force(&c, go, gt, min_pts) {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("{mismatches}/100 partitions differ from brute force"))
}

fn random_lists(rng: &mut ChaCha8Rng) -> (ReflectionList, ReflectionList) {
    let mk = |ms: f64, c: f64, a: f64| Reflection {
        delay: ms.max(0.0) * 1e-3,
        doa: Direction::from_degrees(c.clamp(0.0, 180.0), a).unwrap(),
        amplitude: 1.0,
    };
    let point = |rng: &mut ChaCha8Rng| (rng.random_range(0.0..20.0), rng.random_range(0.0..180.0), rng.random_range(-180.0..180.0));
    let truth: Vec<(f64, f64, f64)> = (0..rng.random_range(1..25)).map(|_| point(rng)).collect();
    let mut est = Vec::new();
    for &(ms, c, a) in &truth {
        if rng.random_bool(0.5) {
            let (dt, dc, da) = (rng.random_range(-0.8..0.8), rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
            est.push(mk(ms + dt, c + dc, a + da));
        }
    }
    for _ in 0..rng.random_range(0..8) {
        let (ms, c, a) = point(rng);
        est.push(mk(ms, c, a));
    }
    (
        ReflectionList::new(est, false).unwrap(),
        ReflectionList::new(truth.into_iter().map(|(ms, c, a)| mk(ms, c, a)).collect(), false).unwrap(),
    )
}

fn eval_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (tt, to) = (DEFAULT_TOL_TAU, DEFAULT_TOL_OMEGA_DEG.to_radians());
    let mut violations = 0;
    for _ in 0..1000 {
        let (est, truth) = random_lists(&mut rng);
        let (st, so) = (rng.random_range(0.05..1.0), rng.random_range(0.05..1.0));
        let wide = match_reflections(&est, &truth, tt, to).unwrap();
        let tight = match_reflections(&est, &truth, tt * st, to * so).unwrap();
        if tight.pd > wide.pd || tight.pfa < wide.pfa {
            violations += 1;
        }
    }
    outcome(violations == 0, format!("{violations}/1000 trials violate monotonicity"))
}

fn anchor_synthesis() -> Outcome {
    let p = RoomAcousticsParams::new(192.0, 0.424, -11.5, Direction::from_degrees(90.0, -42.2).unwrap());
    let (mut worst_t60, mut worst_drr, mut fixed) = (0.0f64, 0.0f64, true);
    for seed in 0..10 {
        let (rir, list) = synthesize_parametric_rir(&p, 48_000.0, seed).unwrap();
        let t60 = schroeder_decay(&rir).t60().unwrap();
        worst_t60 = worst_t60.max((t60 - p.t60).abs() / p.t60);
        worst_drr = worst_drr.max((drr(&rir, DIRECT_WINDOW) - p.drr_db).abs());
        let early = ground_truth_early(&list, EARLY_WINDOW).unwrap();
        let (out, out_list) = replace_early((&rir, &list), &early, EARLY_WINDOW).unwrap();
        let peak = rir.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        fixed &= out.samples.iter().zip(&rir.samples).all(|(a, b)| (a - b).abs() <= 1e-9 * peak);
        fixed &= out_list.len() == list.len();
    }
    outcome(
        worst_t60 <= 0.05 && worst_drr <= 0.5 && fixed,
        format!(
            "worst T60 error {:.2}%, worst DRR error {worst_drr:.3} dB, fixed point {}",
            100.0 * worst_t60,
            if fixed { "holds" } else { "broken" }
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("room table: critical distance and DRR", table_one),
        ("easy rooms 3 and 4: PD and PFA", table_two_easy),
        ("hard rooms 1, 5 and 2: PD and PFA", table_two_hard),
        ("noiseless 3-reflection scenes", oracle_scenes),
        ("focusing residuals", focusing),
        ("rank-1 SVD and delay peak", svd_and_alignment),
        ("DBSCAN against brute force", dbscan_oracle),
        ("eval monotonicity", eval_monotonicity),
        ("anchor RIR synthesis", anchor_synthesis),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {}: {} - {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("criterion 10: SKIP - listening test scores and their statistics need human subjects");
    if failed > 0 {
        println!("{failed} of 9 criteria failed");
        std::process::exit(1);
    }
}
