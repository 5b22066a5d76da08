//! Multichannel short-time Fourier analysis.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{s, Array3};
use rustfft::FftPlanner;

use crate::array_model::special::C64;
use crate::error::{Error, Result};
use crate::room_sim::ArrayRecording;

/// One-sided spectrogram, `data[[mic, bin, frame]]`.
///
/// `data` may hold a contiguous slice of bins starting at `first_bin`;
/// bin indices in the API are always absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct StftTensor {
    pub data: Array3<C64>,
    pub fs: f64,
    pub bin_hz: f64,
    pub hop: usize,
    pub window_len: usize,
    pub first_bin: usize,
}

impl StftTensor {
    pub fn num_mics(&self) -> usize {
        self.data.dim().0
    }

    pub fn num_bins(&self) -> usize {
        self.data.dim().1
    }

    pub fn num_frames(&self) -> usize {
        self.data.dim().2
    }

    pub fn bins(&self) -> Range<usize> {
        self.first_bin..self.first_bin + self.num_bins()
    }

    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz
    }

    /// Bins of a full one-sided spectrum.
    pub fn full_bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    /// Copy restricted to `bins`.
    pub fn slice_bins(&self, bins: Range<usize>) -> Result<Self> {
        let own = self.bins();
        if bins.start < own.start || bins.end > own.end || bins.is_empty() {
            return Err(Error::invalid(
                "bin range",
                format!("{bins:?} not within {own:?}"),
            ));
        }
        let lo = bins.start - self.first_bin;
        let hi = bins.end - self.first_bin;
        Ok(Self {
            data: self.data.slice(s![.., lo..hi, ..]).to_owned(),
            first_bin: bins.start,
            ..self.clone()
        })
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

pub fn frame_count(samples: usize, window: usize, hop: usize) -> usize {
    if samples < window {
        0
    } else {
        (samples - window) / hop + 1
    }
}

/// Full one-sided STFT with a periodic Hann window.
pub fn stft(recording: &ArrayRecording, window_len: f64, overlap: f64) -> Result<StftTensor> {
    stft_bins(recording, window_len, overlap, None)
}

/// STFT keeping only `bins` (all bins when `None`).
pub fn stft_bins(
    recording: &ArrayRecording,
    window_len: f64,
    overlap: f64,
    bins: Option<Range<usize>>,
) -> Result<StftTensor> {
    if !(window_len > 0.0) || !(0.0..1.0).contains(&overlap) {
        return Err(Error::invalid("stft", "window must be > 0 and overlap in [0, 1)"));
    }
    let fs = recording.fs;
    let w = (window_len * fs).round() as usize;
    let hop = ((w as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    if w == 0 || recording.len() < w {
        return Err(Error::invalid(
            "stft",
            format!(
                "recording of {} samples is shorter than the {w}-sample window",
                recording.len()
            ),
        ));
    }
    let full = w / 2 + 1;
    let bins = bins.unwrap_or(0..full);
    if bins.is_empty() || bins.end > full {
        return Err(Error::invalid("stft", format!("bin range {bins:?} outside 0..{full}")));
    }
    let frames = frame_count(recording.len(), w, hop);
    let q = recording.num_channels();
    let window = hann(w);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(w);
    let mut data = Array3::zeros((q, bins.len(), frames));
    let mut buf = vec![C64::new(0.0, 0.0); w];
    for mic in 0..q {
        let x = recording.samples.row(mic);
        for l in 0..frames {
            let start = l * hop;
            for (n, b) in buf.iter_mut().enumerate() {
                *b = C64::new(x[start + n] * window[n], 0.0);
            }
            fft.process(&mut buf);
            for (i, k) in bins.clone().enumerate() {
                data[[mic, i, l]] = buf[k];
            }
        }
    }
    Ok(StftTensor {
        data,
        fs,
        bin_hz: fs / w as f64,
        hop,
        window_len: w,
        first_bin: bins.start,
    })
}

/// Bins whose center frequencies lie in `[band.0, band.1]`.
pub fn band_bins(tensor: &StftTensor, band: (f64, f64)) -> Result<Range<usize>> {
    bin_range(tensor.bin_hz, tensor.window_len, band)
}

pub fn bin_range(bin_hz: f64, window_len: usize, band: (f64, f64)) -> Result<Range<usize>> {
    let nyquist = (window_len / 2) as f64 * bin_hz;
    if band.1 > nyquist + 1e-9 {
        return Err(Error::invalid(
            "band",
            format!("{} Hz is above the {nyquist} Hz Nyquist limit", band.1),
        ));
    }
    let lo = (band.0 / bin_hz - 1e-9).ceil().max(0.0) as usize;
    let hi = (band.1 / bin_hz + 1e-9).floor() as usize;
    if hi < lo || band.1 < band.0 {
        return Err(Error::invalid(
            "band",
            format!("[{}, {}] Hz contains no bins", band.0, band.1),
        ));
    }
    Ok(lo..hi + 1)
}
