//! Scalar room-acoustics quantities and the parametric RIR synthesizer.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::room_sim::{Reflection, ReflectionList};
use crate::scene::{Direction, DEFAULT_SPEED_OF_SOUND};

pub const SABINE_CONSTANT: f64 = 0.161;
/// Critical-distance constant, `R_c = 0.057 √(V / T60)`.
pub const CRITICAL_DISTANCE_CONSTANT: f64 = 0.057;
/// Half-width of the direct-sound window used by [`drr`].
pub const DIRECT_WINDOW: f64 = 0.0025;
pub const EARLY_WINDOW: f64 = 0.020;
/// Frame length in which parametric reflection delays are drawn.
pub const DELAY_FRAME: f64 = 0.005;
/// Search span for the direct-sound peak of a scalar RIR.
pub const DIRECT_SEARCH: f64 = 0.050;
/// Half-width, in samples, of the windowed-sinc fractional delay kernel.
pub const SINC_HALF_WIDTH: usize = 16;

/// Mean absorption giving reverberation time `t60` under Sabine's formula.
pub fn sabine_absorption(volume: f64, surface: f64, t60: f64) -> f64 {
    SABINE_CONSTANT * volume / (surface * t60)
}

pub fn sabine_t60(volume: f64, surface: f64, mean_absorption: f64) -> Result<f64> {
    if !(volume > 0.0 && surface > 0.0) {
        return Err(Error::invalid("sabine", "volume and surface must be > 0"));
    }
    if mean_absorption == 0.0 {
        return Err(Error::invalid(
            "sabine",
            "zero absorption gives infinite reverberation",
        ));
    }
    if !(mean_absorption > 0.0 && mean_absorption <= 1.0) {
        return Err(Error::invalid("sabine", "mean absorption must lie in (0, 1]"));
    }
    Ok(SABINE_CONSTANT * volume / (surface * mean_absorption))
}

pub fn critical_distance(volume: f64, t60: f64) -> f64 {
    CRITICAL_DISTANCE_CONSTANT * (volume / t60).sqrt()
}

/// Number of image sources closer than `c·t` to the receiver.
pub fn expected_reflection_count(volume: f64, t: f64) -> f64 {
    expected_reflection_count_at(volume, t, DEFAULT_SPEED_OF_SOUND)
}

pub fn expected_reflection_count_at(volume: f64, t: f64, speed_of_sound: f64) -> f64 {
    let r = speed_of_sound * t.max(0.0);
    4.0 * PI / 3.0 * r * r * r / volume
}

/// Single-channel impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarRir {
    pub samples: Vec<f64>,
    pub fs: f64,
    pub direct_index: usize,
}

impl ScalarRir {
    /// Wraps samples, locating the direct sound as the largest magnitude in
    /// the first 50 ms.
    pub fn new(samples: Vec<f64>, fs: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("rir", "no samples"));
        }
        if samples.iter().any(|x| !x.is_finite()) || !(fs > 0.0) {
            return Err(Error::invalid("rir", "samples must be finite and fs > 0"));
        }
        let span = ((DIRECT_SEARCH * fs).round() as usize).clamp(1, samples.len());
        let mut direct_index = 0;
        for (i, x) in samples[..span].iter().enumerate() {
            if x.abs() > samples[direct_index].abs() {
                direct_index = i;
            }
        }
        Ok(Self {
            samples,
            fs,
            direct_index,
        })
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }
}

/// Direct-to-reverberant ratio in dB: energy within `±direct_window` of the
/// direct peak over all energy after it. Returns `+∞` when nothing follows.
pub fn drr(rir: &ScalarRir, direct_window: f64) -> f64 {
    let w = (direct_window * rir.fs).round() as usize;
    let n = rir.samples.len();
    let lo = rir.direct_index.saturating_sub(w);
    let hi = (rir.direct_index + w).min(n - 1);
    let direct: f64 = rir.samples[lo..=hi].iter().map(|x| x * x).sum();
    let late: f64 = rir.samples[hi + 1..].iter().map(|x| x * x).sum();
    if late == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (direct / late).log10()
}

/// Energy decay curve in dB, one value per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    pub fs: f64,
    pub level_db: Vec<f64>,
}

impl DecayCurve {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.fs
    }

    /// Reverberation time from a straight-line fit between the -5 and -25 dB
    /// crossings, extrapolated to 60 dB.
    pub fn t60(&self) -> Result<f64> {
        self.t60_between(-5.0, -25.0)
    }

    pub fn t60_between(&self, upper_db: f64, lower_db: f64) -> Result<f64> {
        let start = self.level_db.iter().position(|&l| l <= upper_db);
        let end = self.level_db.iter().position(|&l| l <= lower_db);
        let (start, end) = match (start, end) {
            (Some(s), Some(e)) if e > s + 1 => (s, e),
            _ => {
                return Err(Error::numerical(format!(
                    "decay curve does not span {upper_db} to {lower_db} dB"
                )))
            }
        };
        let n = (end - start + 1) as f64;
        let (mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0);
        for i in start..=end {
            let t = self.time(i);
            let l = self.level_db[i];
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
        }
        let slope = (n * stl - st * sl) / (n * stt - st * st);
        if !(slope < 0.0) {
            return Err(Error::numerical("decay curve is not decaying"));
        }
        Ok(-60.0 / slope)
    }
}

/// Schroeder backward integration of the squared response.
pub fn schroeder_decay(rir: &ScalarRir) -> DecayCurve {
    let mut acc = 0.0;
    let mut energy = vec![0.0; rir.samples.len()];
    for (e, x) in energy.iter_mut().zip(&rir.samples).rev() {
        acc += x * x;
        *e = acc;
    }
    let total = energy[0];
    let level_db = energy
        .iter()
        .map(|&e| {
            if total > 0.0 {
                10.0 * (e / total).log10()
            } else {
                0.0
            }
        })
        .collect();
    DecayCurve {
        fs: rir.fs,
        level_db,
    }
}

pub fn write_decay_csv(path: impl AsRef<Path>, curve: &DecayCurve) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["time_s", "level_db"])?;
    for (i, l) in curve.level_db.iter().enumerate() {
        w.write_record([format!("{:.6}", curve.time(i)), format!("{l:.6}")])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) const SINC_TAPS: usize = 2 * SINC_HALF_WIDTH + 1;

/// Hann-windowed sinc taps for a delay of `position` samples, starting at
/// sample index `start` (which may be negative).
pub(crate) fn sinc_kernel(position: f64) -> (isize, [f64; SINC_TAPS]) {
    let half = SINC_HALF_WIDTH as isize;
    let start = position.round() as isize - half;
    let width = (SINC_HALF_WIDTH + 1) as f64;
    let x0 = start as f64 - position;
    // sin(π(x0 + j)) alternates in sign; the window angle advances by π/width
    let whole = x0.round();
    let parity = if (whole as i64) % 2 == 0 { 1.0 } else { -1.0 };
    let s0 = parity * (PI * (x0 - whole)).sin();
    let (mut ws, mut wc) = (PI * x0 / width).sin_cos();
    let (ds, dc) = (PI / width).sin_cos();
    let mut taps = [0.0; SINC_TAPS];
    for (j, tap) in taps.iter_mut().enumerate() {
        let x = x0 + j as f64;
        let sinc = if x.abs() < 1e-9 {
            1.0
        } else {
            let s = if j % 2 == 0 { s0 } else { -s0 };
            s / (PI * x)
        };
        *tap = sinc * 0.5 * (1.0 + wc);
        let next = wc * dc - ws * ds;
        ws = ws * dc + wc * ds;
        wc = next;
    }
    (start, taps)
}

/// Adds `amplitude` delayed by `position` samples (fractional) using a
/// Hann-windowed sinc kernel.
pub(crate) fn add_sinc_impulse(buf: &mut [f64], position: f64, amplitude: f64) {
    let (start, taps) = sinc_kernel(position);
    add_kernel(buf, start, &taps, amplitude);
}

pub(crate) fn add_kernel(buf: &mut [f64], start: isize, taps: &[f64], amplitude: f64) {
    for (j, t) in taps.iter().enumerate() {
        let n = start + j as isize;
        if n >= 0 && (n as usize) < buf.len() {
            buf[n as usize] += amplitude * t;
        }
    }
}

/// Omnidirectional impulse response of a reflection list, `len` samples long.
pub fn render_scalar_rir(refl: &ReflectionList, fs: f64, len: usize) -> Vec<f64> {
    let mut buf = vec![0.0; len];
    for r in refl.iter() {
        add_sinc_impulse(&mut buf, r.delay * fs, r.amplitude);
    }
    buf
}

/// Room-acoustics description used to synthesize a parametric RIR.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomAcousticsParams {
    pub volume: f64,
    pub t60: f64,
    pub critical_distance: f64,
    pub drr_db: f64,
    pub direct_doa: Direction,
    /// Source distance; when absent it follows from the diffuse-field
    /// relation `DRR = 20 log10(R_c / d)`.
    pub source_distance: Option<f64>,
    pub speed_of_sound: f64,
}

impl RoomAcousticsParams {
    pub fn new(volume: f64, t60: f64, drr_db: f64, direct_doa: Direction) -> Self {
        Self {
            volume,
            t60,
            critical_distance: critical_distance(volume, t60),
            drr_db,
            direct_doa,
            source_distance: None,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.volume,
            self.t60,
            self.critical_distance,
            self.speed_of_sound,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid(
                "acoustics params",
                "volume, t60, critical distance and speed of sound must be > 0",
            ));
        }
        if !self.drr_db.is_finite() {
            return Err(Error::invalid("acoustics params", "drr must be finite"));
        }
        if let Some(d) = self.source_distance {
            if !(d > 0.0) {
                return Err(Error::invalid("acoustics params", "distance must be > 0"));
            }
        }
        Ok(())
    }

    pub fn distance(&self) -> f64 {
        self.source_distance
            .unwrap_or_else(|| self.critical_distance * 10f64.powf(-self.drr_db / 20.0))
    }
}

/// File form of [`RoomAcousticsParams`], angles in degrees.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ParamsFile {
    pub volume: f64,
    pub t60: f64,
    pub drr_db: f64,
    /// `[colatitude_deg, azimuth_deg]`
    pub direct_doa_deg: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub critical_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_distance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speed_of_sound: Option<f64>,
}

impl ParamsFile {
    pub fn resolve(&self) -> Result<RoomAcousticsParams> {
        let doa = Direction::from_degrees(self.direct_doa_deg[0], self.direct_doa_deg[1])?;
        let mut p = RoomAcousticsParams::new(self.volume, self.t60, self.drr_db, doa);
        if let Some(rc) = self.critical_distance {
            p.critical_distance = rc;
        }
        p.source_distance = self.source_distance;
        if let Some(c) = self.speed_of_sound {
            p.speed_of_sound = c;
        }
        p.validate()?;
        Ok(p)
    }
}

pub fn load_params(path: impl AsRef<Path>) -> Result<RoomAcousticsParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    crate::scene::parse_json::<ParamsFile>(path, &text)?.resolve()
}

/// Tolerances the parametric synthesizer guarantees on its output.
pub const PARAMETRIC_T60_TOLERANCE: f64 = 0.05;
pub const PARAMETRIC_DRR_TOLERANCE_DB: f64 = 0.5;

fn uniform_direction(rng: &mut ChaCha8Rng) -> Direction {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi: f64 = rng.random_range(-PI..PI);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Direction::from_vector([r * phi.cos(), r * phi.sin(), z])
}

/// Parametric RIR: reflection delays drawn per 5 ms frame at the
/// image-model density, an exponential energy envelope with the target
/// T60, uniform random DOAs, and a direct sound scaled to the target DRR.
///
/// Delays in the returned list are absolute (the direct sound arrives at
/// `distance / c`).
///
/// The first few reflections are sparse and strong, so a single draw can
/// miss the DRR or outshine the direct sound. Draws are repeated on
/// successive streams of the seed until one meets every constraint, up to
/// [`PARAMETRIC_DRAWS`]; the last failure is returned otherwise.
pub fn synthesize_parametric_rir(
    params: &RoomAcousticsParams,
    fs: f64,
    seed: u64,
) -> Result<(ScalarRir, ReflectionList)> {
    params.validate()?;
    if !(fs > 0.0) {
        return Err(Error::invalid("acoustics params", "fs must be > 0"));
    }
    let mut last = None;
    for stream in 0..PARAMETRIC_DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        match draw_parametric_rir(params, fs, &mut rng) {
            Ok(out) => return Ok(out),
            Err(e) => last = Some(e),
        }
    }
    Err(last.expect("at least one draw"))
}

/// Attempts per seed before the synthesizer gives up.
pub const PARAMETRIC_DRAWS: u64 = 64;

fn draw_parametric_rir(
    params: &RoomAcousticsParams,
    fs: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(ScalarRir, ReflectionList)> {
    let c = params.speed_of_sound;
    let t_direct = params.distance() / c;
    let t_end = t_direct + 1.1 * params.t60;
    let len = (t_end * fs).ceil() as usize + 2 * SINC_HALF_WIDTH;

    // energy per second decays by 60 dB per T60; per-reflection amplitudes
    // are divided by the square root of the local arrival rate
    let envelope = |t: f64| 10f64.powf(-3.0 * (t - t_direct) / params.t60);
    let rate = |t: f64| 4.0 * PI * c.powi(3) * t * t / params.volume / fs;

    let mut reflections = Vec::new();
    let mut start = t_direct;
    while start < t_end {
        let stop = (start + DELAY_FRAME).min(t_end);
        let expected = expected_reflection_count_at(params.volume, stop, c)
            - expected_reflection_count_at(params.volume, start, c);
        let mut count = expected.floor() as usize;
        if rng.random::<f64>() < expected - expected.floor() {
            count += 1;
        }
        for _ in 0..count {
            let t = rng.random_range(start..stop);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let amplitude = sign * envelope(t) / rate(t).sqrt();
            reflections.push(Reflection {
                delay: t,
                doa: uniform_direction(rng),
                amplitude,
            });
        }
        start = stop;
    }

    let late = ReflectionList::new(reflections.clone(), false)?;
    let late_samples = render_scalar_rir(&late, fs, len);
    let direct_only = ReflectionList::new(
        vec![Reflection {
            delay: t_direct,
            doa: params.direct_doa,
            amplitude: 1.0,
        }],
        false,
    )?;
    let direct_samples = render_scalar_rir(&direct_only, fs, len);
    let amplitude = solve_direct_amplitude(&direct_samples, &late_samples, t_direct, fs, params.drr_db)?;

    let samples: Vec<f64> = direct_samples
        .iter()
        .zip(&late_samples)
        .map(|(d, l)| amplitude * d + l)
        .collect();
    let rir = ScalarRir::new(samples, fs)?;
    let expected_index = (t_direct * fs).round() as usize;
    if rir.direct_index != expected_index {
        return Err(Error::numerical(
            "direct sound is not the strongest early arrival; raise the DRR",
        ));
    }
    reflections.push(Reflection {
        delay: t_direct,
        doa: params.direct_doa,
        amplitude,
    });
    let list = ReflectionList::new(reflections, false)?;

    let t60 = schroeder_decay(&rir).t60()?;
    if ((t60 - params.t60) / params.t60).abs() > PARAMETRIC_T60_TOLERANCE {
        return Err(Error::numerical(format!(
            "synthesized T60 {t60:.3} s misses target {:.3} s",
            params.t60
        )));
    }
    let achieved = drr(&rir, DIRECT_WINDOW);
    if (achieved - params.drr_db).abs() > PARAMETRIC_DRR_TOLERANCE_DB {
        return Err(Error::numerical(format!(
            "synthesized DRR {achieved:.2} dB misses target {:.2} dB",
            params.drr_db
        )));
    }
    Ok((rir, list))
}

/// Direct-sound gain `a` so that `a·direct + rest` has the requested DRR.
fn solve_direct_amplitude(direct: &[f64], rest: &[f64], t_direct: f64, fs: f64, drr_db: f64) -> Result<f64> {
    let center = (t_direct * fs).round() as usize;
    let w = (DIRECT_WINDOW * fs).round() as usize;
    let lo = center.saturating_sub(w);
    let hi = (center + w).min(direct.len() - 1);
    let sums = |range: std::ops::Range<usize>| {
        let mut dd = 0.0;
        let mut dr = 0.0;
        let mut rr = 0.0;
        for i in range {
            dd += direct[i] * direct[i];
            dr += direct[i] * rest[i];
            rr += rest[i] * rest[i];
        }
        (dd, dr, rr)
    };
    let (dw, xw, rw) = sums(lo..hi + 1);
    let (da, xa, ra) = sums(hi + 1..direct.len());
    if ra == 0.0 && da == 0.0 {
        return Err(Error::invalid(
            "acoustics params",
            "no reverberant energy, DRR target is unreachable",
        ));
    }
    let g = 10f64.powf(drr_db / 10.0);
    let a = dw - g * da;
    let b = 2.0 * (xw - g * xa);
    let c = rw - g * ra;
    let roots = if a.abs() < 1e-300 {
        vec![-c / b]
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-b + s) / (2.0 * a), (-b - s) / (2.0 * a)]
        }
    };
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r > 0.0)
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.max(r))))
        .ok_or_else(|| {
            Error::invalid(
                "acoustics params",
                format!("DRR {drr_db} dB cannot be reached"),
            )
        })
}

/// Replaces the first `window` seconds after the direct sound of a
/// synthesized RIR with estimated reflections.
///
/// Estimates are normalized (direct at delay 0). Amplitudes are taken from
/// the synthesized early set by pairing both sets in ascending delay order;
/// surplus estimates get the smallest-magnitude synthesized early amplitude.
/// The tail is untouched and the result is rescaled to the input energy.
pub fn replace_early(
    synth: (&ScalarRir, &ReflectionList),
    estimates: &ReflectionList,
    window: f64,
) -> Result<(ScalarRir, ReflectionList)> {
    let (rir, list) = synth;
    if estimates.is_empty() {
        return Err(Error::invalid("estimates", "at least the direct sound is required"));
    }
    if list.is_empty() {
        return Err(Error::invalid("synthesized reflections", "list is empty"));
    }
    if window <= 0.0 {
        return Ok((rir.clone(), list.clone()));
    }
    let t_direct = list.as_slice()[0].delay;
    let est_origin = estimates.as_slice()[0].delay;
    let (early, tail): (Vec<Reflection>, Vec<Reflection>) = list
        .iter()
        .cloned()
        .partition(|r| r.delay - t_direct <= window);
    let fallback = early
        .iter()
        .map(|r| r.amplitude)
        .fold(f64::INFINITY, |m: f64, a| if a.abs() < m.abs() { a } else { m });
    let replacement: Vec<Reflection> = estimates
        .iter()
        .filter(|e| e.delay - est_origin <= window)
        .enumerate()
        .map(|(i, e)| Reflection {
            delay: t_direct + (e.delay - est_origin),
            doa: e.doa,
            amplitude: early.get(i).map_or(fallback, |r| r.amplitude),
        })
        .collect();

    let len = rir.samples.len();
    let old = render_scalar_rir(&ReflectionList::new(early, false)?, rir.fs, len);
    let new = render_scalar_rir(&ReflectionList::new(replacement.clone(), false)?, rir.fs, len);
    let mut samples: Vec<f64> = rir
        .samples
        .iter()
        .zip(old.iter().zip(&new))
        .map(|(x, (o, n))| x - o + n)
        .collect();
    let energy: f64 = samples.iter().map(|x| x * x).sum();
    if energy == 0.0 {
        return Err(Error::numerical("hybrid RIR has no energy"));
    }
    let scale = (rir.energy() / energy).sqrt();
    for x in &mut samples {
        *x *= scale;
    }
    let mut out: Vec<Reflection> = replacement.into_iter().chain(tail).collect();
    for r in &mut out {
        r.amplitude *= scale;
    }
    Ok((
        ScalarRir {
            samples,
            fs: rir.fs,
            direct_index: rir.direct_index,
        },
        ReflectionList::new(out, false)?,
    ))
}
