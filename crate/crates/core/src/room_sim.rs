//! Image-source simulation of a shoe-box room and synthesis of rigid-sphere
//! array recordings.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::acoustics::{self, add_kernel, sinc_kernel};
use crate::array_model::special::{modal_weights, real_sh, sh_count, C64};
use crate::error::{Error, Result};
use crate::scene::{distance, Direction, Scenario};

/// One propagation path: delay, arrival direction at the array center and
/// pressure amplitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflection {
    pub delay: f64,
    pub doa: Direction,
    pub amplitude: f64,
}

/// Reflections sorted by ascending delay.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReflectionList {
    reflections: Vec<Reflection>,
    normalized: bool,
}

impl ReflectionList {
    pub fn new(mut reflections: Vec<Reflection>, normalized: bool) -> Result<Self> {
        for r in &reflections {
            if !(r.delay >= 0.0) || !r.delay.is_finite() || !r.amplitude.is_finite() {
                return Err(Error::invalid(
                    "reflection",
                    "delays must be finite and >= 0, amplitudes finite",
                ));
            }
        }
        reflections.sort_by(|a, b| a.delay.total_cmp(&b.delay));
        if normalized {
            match reflections.first() {
                Some(first) if first.delay.abs() < 1e-12 => {}
                Some(_) => {
                    return Err(Error::invalid(
                        "reflection list",
                        "a normalized list starts at delay 0",
                    ))
                }
                None => {}
            }
        }
        Ok(Self {
            reflections,
            normalized,
        })
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.reflections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflections.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Reflection> {
        self.reflections.iter()
    }

    pub fn as_slice(&self) -> &[Reflection] {
        &self.reflections
    }

    pub fn direct(&self) -> Option<&Reflection> {
        self.reflections.first()
    }

    /// Delays relative to the first entry and amplitudes relative to it.
    pub fn normalize(&self) -> Result<Self> {
        let first = match self.reflections.first() {
            Some(f) => *f,
            None => return Ok(Self { reflections: vec![], normalized: true }),
        };
        if first.amplitude == 0.0 {
            return Err(Error::numerical("direct sound has zero amplitude"));
        }
        let reflections = self
            .reflections
            .iter()
            .map(|r| Reflection {
                delay: r.delay - first.delay,
                doa: r.doa,
                amplitude: r.amplitude / first.amplitude,
            })
            .collect();
        Ok(Self {
            reflections,
            normalized: true,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["delay_ms", "colatitude_deg", "azimuth_deg", "amplitude"])?;
        for r in &self.reflections {
            let (c, a) = r.doa.to_degrees();
            w.write_record([
                format!("{:.9}", r.delay * 1e3),
                format!("{c:.9}"),
                format!("{a:.9}"),
                format!("{:.12e}", r.amplitude),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the CSV written by [`write_csv`](Self::write_csv). The list is
    /// flagged normalized when it starts at delay 0 with amplitude 1.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            delay_ms: f64,
            colatitude_deg: f64,
            azimuth_deg: f64,
            amplitude: f64,
        }
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path)?;
        let mut out = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                column: 0,
                message: e.to_string(),
            })?;
            out.push(Reflection {
                delay: row.delay_ms * 1e-3,
                doa: Direction::from_degrees(row.colatitude_deg, row.azimuth_deg)?,
                amplitude: row.amplitude,
            });
        }
        let normalized = out
            .iter()
            .min_by(|a, b| a.delay.total_cmp(&b.delay))
            .is_some_and(|r| r.delay == 0.0 && r.amplitude == 1.0);
        Self::new(out, normalized)
    }
}

/// Image sources of the scenario arriving no later than `time_limit`
/// seconds after emission. Amplitudes are `Π β / (4π d)`; paths with zero
/// amplitude are dropped.
pub fn image_sources(scenario: &Scenario, time_limit: f64) -> Result<ReflectionList> {
    let room = &scenario.room;
    let c = room.speed_of_sound;
    let src = scenario.source_position;
    let rcv = scenario.array.center;
    let direct = distance(src, rcv) / c;
    if !(time_limit >= direct) {
        return Err(Error::invalid(
            "time limit",
            format!("{time_limit} s precedes the direct sound at {direct} s"),
        ));
    }
    let reach = c * time_limit;
    let bounds: Vec<i64> = room
        .dimensions
        .iter()
        .map(|l| (reach / (2.0 * l)).ceil() as i64 + 1)
        .collect();
    let beta = &room.reflection_coefficients;
    let mut out = Vec::new();
    // per axis: image coordinate (1 - 2p)·s + 2mL, hitting the near wall
    // |m - p| times and the far wall |m| times
    for mx in -bounds[0]..=bounds[0] {
        for px in 0..2i64 {
            let x = (1 - 2 * px) as f64 * src[0] + 2.0 * mx as f64 * room.dimensions[0];
            let gx = beta[0].powi((mx - px).abs() as i32) * beta[1].powi(mx.abs() as i32);
            let dx = x - rcv[0];
            if dx.abs() > reach {
                continue;
            }
            for my in -bounds[1]..=bounds[1] {
                for py in 0..2i64 {
                    let y = (1 - 2 * py) as f64 * src[1] + 2.0 * my as f64 * room.dimensions[1];
                    let gy = beta[2].powi((my - py).abs() as i32) * beta[3].powi(my.abs() as i32);
                    let dy = y - rcv[1];
                    if dx * dx + dy * dy > reach * reach {
                        continue;
                    }
                    for mz in -bounds[2]..=bounds[2] {
                        for pz in 0..2i64 {
                            let z = (1 - 2 * pz) as f64 * src[2]
                                + 2.0 * mz as f64 * room.dimensions[2];
                            let dz = z - rcv[2];
                            let d = (dx * dx + dy * dy + dz * dz).sqrt();
                            if d > reach {
                                continue;
                            }
                            let gz = beta[4].powi((mz - pz).abs() as i32)
                                * beta[5].powi(mz.abs() as i32);
                            let gain = gx * gy * gz;
                            if gain == 0.0 {
                                continue;
                            }
                            out.push(Reflection {
                                delay: d / c,
                                doa: Direction::from_vector([dx, dy, dz]),
                                amplitude: gain / (4.0 * PI * d),
                            });
                        }
                    }
                }
            }
        }
    }
    ReflectionList::new(out, false)
}

/// Reflections within `window` seconds of the direct sound, normalized so
/// the direct sound has delay 0 and amplitude 1.
pub fn ground_truth_early(refl: &ReflectionList, window: f64) -> Result<ReflectionList> {
    let normalized = refl.normalize()?;
    let kept = normalized
        .iter()
        .filter(|r| r.delay <= window + 1e-12)
        .copied()
        .collect();
    ReflectionList::new(kept, true)
}

/// Omnidirectional RIR at the array center.
pub fn scalar_rir(refl: &ReflectionList, fs: f64, length: f64) -> Result<acoustics::ScalarRir> {
    let len = (length * fs).ceil() as usize + acoustics::SINC_HALF_WIDTH + 1;
    acoustics::ScalarRir::new(acoustics::render_scalar_rir(refl, fs, len), fs)
}

/// Q-channel recording, one row per microphone.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayRecording {
    pub samples: Array2<f64>,
    pub fs: f64,
}

impl ArrayRecording {
    pub fn num_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn len(&self) -> usize {
        self.samples.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.ncols() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Multichannel 32-bit float WAV.
    pub fn write_wav(&self, path: impl AsRef<Path>) -> Result<()> {
        let spec = hound::WavSpec {
            channels: self.num_channels() as u16,
            sample_rate: self.fs.round() as u32,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for t in 0..self.len() {
            for q in 0..self.num_channels() {
                w.write_sample(self.samples[[q, t]] as f32)?;
            }
        }
        w.finalize()?;
        Ok(())
    }

    pub fn read_wav(path: impl AsRef<Path>) -> Result<Self> {
        let (channels, fs, data) = read_wav_interleaved(path)?;
        let frames = data.len() / channels;
        let samples = Array2::from_shape_fn((channels, frames), |(q, t)| data[t * channels + q]);
        Ok(Self { samples, fs })
    }
}

fn read_wav_interleaved(path: impl AsRef<Path>) -> Result<(usize, f64, Vec<f64>)> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let data: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => r
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 2f64.powi(spec.bits_per_sample as i32 - 1);
            r.samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
    };
    Ok((spec.channels as usize, spec.sample_rate as f64, data))
}

/// Mono WAV as a signal; multichannel files use their first channel.
pub fn read_mono_wav(path: impl AsRef<Path>) -> Result<(Vec<f64>, f64)> {
    let (channels, fs, data) = read_wav_interleaved(path)?;
    Ok((data.into_iter().step_by(channels).collect(), fs))
}

pub fn write_mono_wav(path: impl AsRef<Path>, samples: &[f64], fs: f64) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: fs.round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample(s as f32)?;
    }
    w.finalize()?;
    Ok(())
}

/// Corner above which the source spectrum rolls off at -12 dB per octave.
pub const SOURCE_CORNER_HZ: f64 = 500.0;

/// Speech-like test signal: Gaussian noise shaped flat below 500 Hz and
/// -12 dB per octave above, modulated by a slow syllabic envelope and
/// scaled to unit RMS.
pub fn synth_source(duration: f64, fs: f64, seed: u64) -> Result<Vec<f64>> {
    if !(duration > 0.0 && fs > 0.0) {
        return Err(Error::invalid("source", "duration and fs must be > 0"));
    }
    let n = (duration * fs).round() as usize;
    if n == 0 {
        return Err(Error::invalid("source", "duration shorter than one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|_| Complex::new(normal.sample(&mut rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k);
        let f = bin as f64 * fs / n as f64;
        let gain = if f <= SOURCE_CORNER_HZ {
            1.0
        } else {
            (SOURCE_CORNER_HZ / f).powi(2)
        };
        *v *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);

    // syllable-rate envelope: a few random tones between 2 and 6 Hz
    let rates: Vec<(f64, f64)> = (0..3)
        .map(|_| {
            let u: f64 = rand::Rng::random(&mut rng);
            let p: f64 = rand::Rng::random(&mut rng);
            (2.0 + 4.0 * u, 2.0 * PI * p)
        })
        .collect();
    let mut out: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / fs;
            let m: f64 = rates.iter().map(|(r, p)| (2.0 * PI * r * t + p).sin()).sum::<f64>() / 3.0;
            v.re * (0.6 + 0.4 * m)
        })
        .collect();
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt();
    for x in &mut out {
        *x /= rms;
    }
    Ok(out)
}

/// The scenario's source signal: its WAV file when set, otherwise
/// [`synth_source`] seeded by the scenario.
pub fn scenario_source(scenario: &Scenario) -> Result<Vec<f64>> {
    match &scenario.source_wav {
        Some(path) => {
            let (x, fs) = read_mono_wav(path)?;
            if (fs - scenario.fs).abs() > 1e-9 {
                return Err(Error::invalid(
                    "source wav",
                    format!("sample rate {fs} Hz differs from scenario fs {}", scenario.fs),
                ));
            }
            if x.is_empty() {
                return Err(Error::invalid("source wav", "no samples"));
            }
            Ok(x)
        }
        None => synth_source(scenario.source_duration, scenario.fs, scenario.rng_seed),
    }
}

/// Arrivals up to this long after the direct sound are synthesized with
/// exact frequency-domain delays; later ones go through band-limited
/// fractional-delay interpolation.
pub const EXACT_WINDOW: f64 = 0.050;
/// Zero padding, in samples, that keeps the acausal part of the modal
/// filters from wrapping around.
const FFT_PAD: usize = 4096;
const BIN_BLOCK: usize = 2048;

/// Array recording of `source` propagating along `refl` (absolute delays).
///
/// Each path contributes `α h(f, Ω) e^{-i2πfτ} ψ(f)` per microphone, with the
/// rigid-sphere response `h` evaluated through its spherical-harmonic
/// expansion of order `N`.
pub fn synthesize_recording(
    refl: &ReflectionList,
    source: &[f64],
    scenario: &Scenario,
) -> Result<ArrayRecording> {
    if source.is_empty() || refl.is_empty() {
        return Err(Error::invalid("synthesis", "source and reflections must be non-empty"));
    }
    let fs = scenario.fs;
    let total = (scenario.duration * fs).round() as usize;
    let last = refl.as_slice().last().map_or(0.0, |r| r.delay);
    let needed = (last * fs).ceil() as usize + source.len();
    if needed > total {
        return Err(Error::invalid(
            "scenario",
            format!(
                "duration {:.3} s cannot hold the last arrival at {last:.3} s plus the {:.3} s source",
                scenario.duration,
                source.len() as f64 / fs
            ),
        ));
    }
    let array = &scenario.array;
    let q = array.num_mics();
    let order = array.sh_order;
    let channels = sh_count(order);
    let nfft = total + FFT_PAD;
    let bins = nfft / 2 + 1;

    // coupling from channel (n, m) to microphone q is 4π/(2n+1) · Y_nm(mic_q)
    let mic_sh: Vec<Vec<f64>> = array
        .mic_directions
        .iter()
        .map(|d| real_sh(order, d.colatitude(), d.azimuth()))
        .collect();
    let degree: Vec<usize> = (0..=order).flat_map(|n| std::iter::repeat(n).take(2 * n + 1)).collect();
    let modal: Vec<Vec<C64>> = (0..bins)
        .map(|b| {
            let f = b as f64 * fs / nfft as f64;
            let kr = 2.0 * PI * f / array.speed_of_sound * array.radius;
            modal_weights(order, kr)
                .into_iter()
                .enumerate()
                .map(|(n, w)| w * (4.0 * PI / (2 * n + 1) as f64))
                .collect()
        })
        .collect();

    let direct_delay = refl.as_slice()[0].delay;
    let (early, tail): (Vec<&Reflection>, Vec<&Reflection>) = refl
        .iter()
        .partition(|r| r.delay <= direct_delay + EXACT_WINDOW);

    // mic spectra, bin-major: spec[b * q + mic]
    let mut spec = vec![C64::new(0.0, 0.0); bins * q];
    let mut planner = FftPlanner::<f64>::new();

    if !tail.is_empty() {
        let tail_sh: Vec<(f64, f64, Vec<f64>)> = tail
            .iter()
            .map(|r| (r.delay * fs, r.amplitude, real_sh(order, r.doa.colatitude(), r.doa.azimuth())))
            .collect();
        let fft = planner.plan_fft_forward(nfft);
        let mut buf = vec![C64::new(0.0, 0.0); nfft];
        // channels in groups so each kernel is computed once per group
        const GROUP: usize = 9;
        let mut time = vec![vec![0.0; nfft]; GROUP];
        for first in (0..channels).step_by(GROUP) {
            let group = GROUP.min(channels - first);
            for t in time.iter_mut() {
                t.iter_mut().for_each(|v| *v = 0.0);
            }
            for (pos, amp, y) in &tail_sh {
                let (start, taps) = sinc_kernel(*pos);
                for (g, t) in time[..group].iter_mut().enumerate() {
                    add_kernel(t, start, &taps, amp * y[first + g]);
                }
            }
            for (g, t) in time[..group].iter().enumerate() {
                let c = first + g;
                for (b, v) in buf.iter_mut().zip(t) {
                    *b = C64::new(*v, 0.0);
                }
                fft.process(&mut buf);
                let n = degree[c];
                for b in 0..bins {
                    let a = buf[b] * modal[b][n];
                    let row = &mut spec[b * q..(b + 1) * q];
                    for (mic, s) in row.iter_mut().enumerate() {
                        *s += a * mic_sh[mic][c];
                    }
                }
            }
        }
    }

    let early_sh: Vec<(f64, Vec<f64>)> = early
        .iter()
        .map(|r| {
            let y = real_sh(order, r.doa.colatitude(), r.doa.azimuth());
            (r.delay, y.into_iter().map(|v| v * r.amplitude).collect())
        })
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(16);
    let per_thread = bins.div_ceil(threads).div_ceil(BIN_BLOCK) * BIN_BLOCK;
    std::thread::scope(|scope| {
        for (t, chunk) in spec.chunks_mut(per_thread * q).enumerate() {
            let early_sh = &early_sh;
            let modal = &modal;
            let mic_sh = &mic_sh;
            let degree = &degree;
            scope.spawn(move || {
                let first = t * per_thread;
                let count = chunk.len() / q;
                let mut acc = vec![C64::new(0.0, 0.0); channels * BIN_BLOCK];
                let mut phasor = vec![C64::new(0.0, 0.0); BIN_BLOCK];
                let mut start = 0;
                while start < count {
                    let width = BIN_BLOCK.min(count - start);
                    acc.iter_mut().for_each(|v| *v = C64::new(0.0, 0.0));
                    for (tau, coef) in early_sh {
                        let step = -2.0 * PI * fs / nfft as f64 * tau;
                        let rot = C64::from_polar(1.0, step);
                        let mut z = C64::from_polar(1.0, step * (first + start) as f64);
                        for p in phasor[..width].iter_mut() {
                            *p = z;
                            z *= rot;
                        }
                        for (c, k) in coef.iter().enumerate() {
                            let dst = &mut acc[c * BIN_BLOCK..c * BIN_BLOCK + width];
                            for (d, p) in dst.iter_mut().zip(&phasor[..width]) {
                                *d += p * *k;
                            }
                        }
                    }
                    for i in 0..width {
                        let b = first + start + i;
                        let row = &mut chunk[(start + i) * q..(start + i + 1) * q];
                        for c in 0..channels {
                            let a = acc[c * BIN_BLOCK + i] * modal[b][degree[c]];
                            for (mic, s) in row.iter_mut().enumerate() {
                                *s += a * mic_sh[mic][c];
                            }
                        }
                    }
                    start += width;
                }
            });
        }
    });

    // source spectrum
    let mut psi = vec![C64::new(0.0, 0.0); nfft];
    for (p, s) in psi.iter_mut().zip(source) {
        *p = C64::new(*s, 0.0);
    }
    planner.plan_fft_forward(nfft).process(&mut psi);

    let ifft = planner.plan_fft_inverse(nfft);
    let mut samples = Array2::zeros((q, total));
    let mut full = vec![C64::new(0.0, 0.0); nfft];
    let mut direct_power = 0.0;
    let direct = refl.as_slice()[0];
    let direct_y = real_sh(order, direct.doa.colatitude(), direct.doa.azimuth());
    for mic in 0..q {
        for b in 0..bins {
            full[b] = spec[b * q + mic] * psi[b];
        }
        // Hermitian completion for a real signal
        for b in bins..nfft {
            full[b] = full[nfft - b].conj();
        }
        full[0].im = 0.0;
        if nfft % 2 == 0 {
            full[nfft / 2].im = 0.0;
        }
        ifft.process(&mut full);
        for t in 0..total {
            samples[[mic, t]] = full[t].re / nfft as f64;
        }
        if scenario.snr_db.is_some() {
            // energy of the direct path alone at this microphone
            let mut e = 0.0;
            for b in 0..bins {
                let mut h = C64::new(0.0, 0.0);
                for c in 0..channels {
                    h += modal[b][degree[c]] * (direct_y[c] * mic_sh[mic][c]);
                }
                let v = (h * psi[b] * direct.amplitude).norm_sqr();
                let twice = b != 0 && !(nfft % 2 == 0 && b == nfft / 2);
                e += if twice { 2.0 * v } else { v };
            }
            direct_power += e / nfft as f64;
        }
    }

    if let Some(snr_db) = scenario.snr_db {
        let signal_power = direct_power / (q * source.len()) as f64;
        let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed ^ 0x6e6f_6973_6500_0001);
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::numerical(e.to_string()))?;
        for v in samples.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    if samples.iter().any(|v: &f64| !v.is_finite()) {
        return Err(Error::numerical("synthesized recording is not finite"));
    }
    Ok(ArrayRecording { samples, fs })
}

/// Everything `simulate` produces for one scenario.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub reflections: ReflectionList,
    pub truth: ReflectionList,
    pub recording: ArrayRecording,
}

pub fn simulate(scenario: &Scenario) -> Result<Simulation> {
    scenario.validate()?;
    let reflections = image_sources(scenario, scenario.rir_length)?;
    let source = scenario_source(scenario)?;
    let recording = synthesize_recording(&reflections, &source, scenario)?;
    let truth = ground_truth_early(&reflections, acoustics::EARLY_WINDOW)?;
    Ok(Simulation {
        reflections,
        truth,
        recording,
    })
}

/// Acoustic description of a simulated scene: the Sabine quantities of the
/// room and what the image model produces at the array center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub volume: f64,
    /// Sabine T60, absent for a lossless room.
    pub t60: Option<f64>,
    pub critical_distance: Option<f64>,
    pub distance: f64,
    /// DRR of the omnidirectional image-source RIR.
    pub drr_db: f64,
    /// Paths within the early window, direct sound included.
    pub early_reflections: usize,
}

impl SceneSummary {
    /// Summary from the full image-source list of `scenario`.
    pub fn from_reflections(scenario: &Scenario, reflections: &ReflectionList) -> Result<Self> {
        let t60 = scenario.room.sabine_t60();
        let rir = scalar_rir(reflections, scenario.fs, scenario.rir_length)?;
        let early = ground_truth_early(reflections, acoustics::EARLY_WINDOW)?;
        Ok(Self {
            volume: scenario.room.volume(),
            t60,
            critical_distance: t60.map(|t| acoustics::critical_distance(scenario.room.volume(), t)),
            distance: scenario.source_distance(),
            drr_db: acoustics::drr(&rir, acoustics::DIRECT_WINDOW),
            early_reflections: early.len(),
        })
    }

    /// Runs the image model only; no recording is synthesized.
    pub fn of(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        Self::from_reflections(scenario, &image_sources(scenario, scenario.rir_length)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_shifts_and_scales() {
        let d = Direction::from_degrees(90.0, 0.0).unwrap();
        let list = ReflectionList::new(
            vec![
                Reflection { delay: 0.02, doa: d, amplitude: 0.5 },
                Reflection { delay: 0.01, doa: d, amplitude: 2.0 },
            ],
            false,
        )
        .unwrap();
        let n = list.normalize().unwrap();
        assert_eq!(n.as_slice()[0].delay, 0.0);
        assert_eq!(n.as_slice()[0].amplitude, 1.0);
        assert!((n.as_slice()[1].delay - 0.01).abs() < 1e-15);
        assert!((n.as_slice()[1].amplitude - 0.25).abs() < 1e-15);
    }

    #[test]
    fn source_is_deterministic_and_unit_rms() {
        let a = synth_source(0.5, 16_000.0, 3).unwrap();
        let b = synth_source(0.5, 16_000.0, 3).unwrap();
        assert_eq!(a, b);
        let rms = (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt();
        assert!((rms - 1.0).abs() < 1e-9);
    }
}
