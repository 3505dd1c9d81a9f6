//! Spectrogram extraction: windowed DFTs over utterance clips, log dynamic
//! range compression, and shape fitting so variable-length words all reach
//! the encoder as the same frequency x time grid.

use serde::{Deserialize, Serialize};

use crate::corpus::AudioClip;
use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 16_000;
pub const DEFAULT_N_FFT: usize = 256;
pub const DEFAULT_HOP: usize = 128;
/// Frequency bins kept after dropping the Nyquist bin; 128 so two stride-2
/// convolutions land on integer shapes.
pub const DEFAULT_FREQ_BINS: usize = 128;
/// Time frames per fitted spectrogram; 96 frames at an 8 ms hop is ~0.78 s,
/// longer than the mean word.
pub const DEFAULT_TIME_FRAMES: usize = 96;

/// STFT parameters, carried in the manifest so later stages reuse exactly
/// the ingest-time settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DspParams {
    pub sample_rate_hz: u32,
    pub n_fft: usize,
    pub hop: usize,
    pub freq_bins: usize,
    pub time_frames: usize,
}

impl Default for DspParams {
    fn default() -> Self {
        DspParams {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            n_fft: DEFAULT_N_FFT,
            hop: DEFAULT_HOP,
            freq_bins: DEFAULT_FREQ_BINS,
            time_frames: DEFAULT_TIME_FRAMES,
        }
    }
}

/// Magnitude grid, `l1` frequency bins by `l2` time frames, row-major by bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Vec<f32>,
    pub l1: usize,
    pub l2: usize,
}

impl Spectrogram {
    pub fn zeros(l1: usize, l2: usize) -> Self {
        Spectrogram { values: vec![0.0; l1 * l2], l1, l2 }
    }

    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> f32 {
        self.values[bin * self.l2 + frame]
    }

    #[inline]
    pub fn set(&mut self, bin: usize, frame: usize, v: f32) {
        self.values[bin * self.l2 + frame] = v;
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Complex {
    pub re: f64,
    pub im: f64,
}

impl Complex {
    pub const ZERO: Complex = Complex { re: 0.0, im: 0.0 };

    pub fn norm(&self) -> f64 {
        self.re.hypot(self.im)
    }

    pub fn norm_sq(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    fn mul(self, other: Complex) -> Complex {
        Complex {
            re: self.re * other.re - self.im * other.im,
            im: self.re * other.im + self.im * other.re,
        }
    }

    fn add(self, other: Complex) -> Complex {
        Complex { re: self.re + other.re, im: self.im + other.im }
    }

    fn sub(self, other: Complex) -> Complex {
        Complex { re: self.re - other.re, im: self.im - other.im }
    }
}

/// Periodic Hann window, w[k] = 0.5 (1 - cos(2 pi k / n)).
pub fn hann_window(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::WindowTooShort { n });
    }
    Ok((0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()))
        .collect())
}

/// Forward DFT, X[k] = sum_t x[t] e^{-2 pi i k t / n}, computed with an
/// iterative radix-2 transform. Length must be a power of two.
pub fn dft(frame: &[f64]) -> Result<Vec<Complex>> {
    let n = frame.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::NonPowerOfTwoLength { n });
    }
    let mut buf: Vec<Complex> = frame.iter().map(|&re| Complex { re, im: 0.0 }).collect();

    // Bit-reversal permutation.
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = (i.reverse_bits() >> (usize::BITS - bits)) & (n - 1);
        if j > i {
            buf.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let angle = -2.0 * std::f64::consts::PI / len as f64;
        let w_len = Complex { re: angle.cos(), im: angle.sin() };
        let mut start = 0;
        while start < n {
            let mut w = Complex { re: 1.0, im: 0.0 };
            for k in 0..len / 2 {
                let even = buf[start + k];
                let odd = buf[start + k + len / 2].mul(w);
                buf[start + k] = even.add(odd);
                buf[start + k + len / 2] = even.sub(odd);
                w = w.mul(w_len);
            }
            start += len;
        }
        len <<= 1;
    }
    Ok(buf)
}

/// Raw (unnormalized) magnitude spectrogram. Clips shorter than `n_fft` are
/// zero-padded to a single frame; otherwise frames start every `hop` samples
/// and the bin count is n_fft/2 + 1.
pub fn stft_magnitude(clip: &AudioClip, n_fft: usize, hop: usize) -> Result<Spectrogram> {
    if !n_fft.is_power_of_two() {
        return Err(Error::NonPowerOfTwoLength { n: n_fft });
    }
    assert!(hop >= 1, "hop must be at least 1");
    let window = hann_window(n_fft)?;
    let len = clip.samples.len();
    let n_frames = if len < n_fft { 1 } else { 1 + (len - n_fft) / hop };
    let n_bins = n_fft / 2 + 1;
    let mut spec = Spectrogram::zeros(n_bins, n_frames);
    let mut frame = vec![0.0f64; n_fft];
    for f in 0..n_frames {
        let start = f * hop;
        for t in 0..n_fft {
            let sample = clip.samples.get(start + t).copied().unwrap_or(0.0) as f64;
            frame[t] = sample * window[t];
        }
        let bins = dft(&frame)?;
        for (k, bin) in bins.iter().take(n_bins).enumerate() {
            spec.set(k, f, bin.norm() as f32);
        }
    }
    Ok(spec)
}

/// Compress dynamic range and normalize to [0, 1]:
/// v' = min(1, log(1+v) / log(1+ceiling)). The ceiling is the maximum raw
/// value over the training split, so 0 maps to 0 and the training max to 1.
pub fn log_normalize(spec: &Spectrogram, ceiling: f64) -> Result<Spectrogram> {
    if ceiling <= 0.0 || !ceiling.is_finite() {
        return Err(Error::NonPositiveCeiling { ceiling });
    }
    let denom = (1.0 + ceiling).ln();
    let values = spec
        .values
        .iter()
        .map(|&v| (((1.0 + v as f64).ln() / denom).min(1.0)) as f32)
        .collect();
    Ok(Spectrogram { values, l1: spec.l1, l2: spec.l2 })
}

/// Fit a spectrogram to a fixed l1_out x l2_out grid: truncate (or zero-pad)
/// the frequency axis, right-pad short clips with zero frames, center-crop
/// long ones.
pub fn fit_shape(spec: &Spectrogram, l1_out: usize, l2_out: usize) -> Spectrogram {
    let mut out = Spectrogram::zeros(l1_out, l2_out);
    let col_offset = spec.l2.saturating_sub(l2_out) / 2;
    for bin in 0..l1_out.min(spec.l1) {
        for frame in 0..l2_out.min(spec.l2) {
            out.set(bin, frame, spec.at(bin, frame + col_offset));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Quadratic-sum reference DFT, kept independent of the fast path.
    fn naive_dft(frame: &[f64]) -> Vec<Complex> {
        let n = frame.len();
        (0..n)
            .map(|k| {
                let mut acc = Complex::ZERO;
                for (t, &x) in frame.iter().enumerate() {
                    let angle = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                    acc.re += x * angle.cos();
                    acc.im += x * angle.sin();
                }
                acc
            })
            .collect()
    }

    #[test]
    fn hann_closed_forms() {
        let w4 = hann_window(4).unwrap();
        for (got, want) in w4.iter().zip(&[0.0, 0.5, 1.0, 0.5]) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        let w2 = hann_window(2).unwrap();
        assert!((w2[0] - 0.0).abs() < 1e-15 && (w2[1] - 1.0).abs() < 1e-15);
        let w8 = hann_window(8).unwrap();
        assert!((w8[2] - 0.5).abs() < 1e-15);
        assert!(matches!(hann_window(1), Err(Error::WindowTooShort { n: 1 })));
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let bins = dft(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for bin in bins {
            assert!((bin.re - 1.0).abs() < 1e-12);
            assert!(bin.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dft_of_constant_is_dc() {
        let bins = dft(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert!((bins[0].re - 4.0).abs() < 1e-12);
        for bin in &bins[1..] {
            assert!(bin.norm() < 1e-12);
        }
    }

    #[test]
    fn dft_of_cosine_concentrates_in_two_bins() {
        let frame: Vec<f64> = (0..8)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 8.0).cos())
            .collect();
        let bins = dft(&frame).unwrap();
        assert!((bins[1].norm() - 4.0).abs() < 1e-9);
        assert!((bins[7].norm() - 4.0).abs() < 1e-9);
        for (k, bin) in bins.iter().enumerate() {
            if k != 1 && k != 7 {
                assert!(bin.norm() < 1e-9, "bin {k} = {}", bin.norm());
            }
        }
    }

    #[test]
    fn dft_rejects_non_power_of_two() {
        assert!(matches!(dft(&[0.0; 6]), Err(Error::NonPowerOfTwoLength { n: 6 })));
    }

    #[test]
    fn dft_matches_naive_oracle() {
        let mut rng = crate::rng::Rng::new(21);
        for &n in &[2usize, 4, 8, 16, 32, 64] {
            for _ in 0..8 {
                let frame: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
                let fast = dft(&frame).unwrap();
                let slow = naive_dft(&frame);
                let scale: f64 = slow.iter().map(|c| c.norm()).fold(1e-12, f64::max);
                for (a, b) in fast.iter().zip(&slow) {
                    let err = (a.re - b.re).hypot(a.im - b.im) / scale;
                    assert!(err < 1e-9, "n={n} err={err}");
                }
            }
        }
    }

    #[test]
    fn dft_satisfies_parseval() {
        let mut rng = crate::rng::Rng::new(33);
        for &n in &[8usize, 64, 256] {
            let frame: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let bins = dft(&frame).unwrap();
            let freq_energy: f64 = bins.iter().map(Complex::norm_sq).sum();
            let time_energy: f64 = frame.iter().map(|x| x * x).sum();
            let rel = (freq_energy - n as f64 * time_energy).abs() / (n as f64 * time_energy);
            assert!(rel < 1e-6, "n={n} rel={rel}");
        }
    }

    #[test]
    fn stft_frame_count_formula() {
        let clip = AudioClip { samples: vec![0.5; 256], sample_rate_hz: 16_000 };
        let spec = stft_magnitude(&clip, 256, 128).unwrap();
        assert_eq!(spec.l2, 1);
        assert_eq!(spec.l1, 129);

        let clip = AudioClip { samples: vec![0.5; 256 + 128 * 3], sample_rate_hz: 16_000 };
        let spec = stft_magnitude(&clip, 256, 128).unwrap();
        assert_eq!(spec.l2, 4);

        // Shorter than one window: zero-padded single frame.
        let clip = AudioClip { samples: vec![0.5; 100], sample_rate_hz: 16_000 };
        let spec = stft_magnitude(&clip, 256, 128).unwrap();
        assert_eq!(spec.l2, 1);
    }

    #[test]
    fn stft_of_silence_is_zero() {
        let clip = AudioClip { samples: vec![0.0; 1024], sample_rate_hz: 16_000 };
        let spec = stft_magnitude(&clip, 256, 128).unwrap();
        assert!(spec.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stft_tone_peaks_at_predicted_bin() {
        // 1 kHz at 16 kHz with n_fft 256: bin = f * n_fft / rate = 16.
        let rate = 16_000u32;
        let samples: Vec<f32> = (0..8_192)
            .map(|t| (2.0 * std::f64::consts::PI * 1000.0 * t as f64 / rate as f64).sin() as f32)
            .collect();
        let clip = AudioClip { samples, sample_rate_hz: rate };
        let spec = stft_magnitude(&clip, 256, 128).unwrap();
        for frame in 0..spec.l2 {
            let argmax = (0..spec.l1)
                .max_by(|&a, &b| spec.at(a, frame).partial_cmp(&spec.at(b, frame)).unwrap())
                .unwrap();
            assert_eq!(argmax, 16, "frame {frame}");
        }
    }

    #[test]
    fn log_normalize_endpoints() {
        let mut spec = Spectrogram::zeros(2, 2);
        let ceiling = 7.5f64;
        spec.values = vec![0.0, ceiling as f32, ((1.0 + ceiling).sqrt() - 1.0) as f32, 20.0];
        let out = log_normalize(&spec, ceiling).unwrap();
        assert_eq!(out.values[0], 0.0);
        assert!((out.values[1] - 1.0).abs() < 1e-6);
        assert!((out.values[2] - 0.5).abs() < 1e-6);
        assert_eq!(out.values[3], 1.0); // clamped above the ceiling
        assert!(matches!(log_normalize(&spec, 0.0), Err(Error::NonPositiveCeiling { .. })));
    }

    #[test]
    fn fit_shape_truncates_frequency() {
        let mut spec = Spectrogram::zeros(129, 96);
        for bin in 0..129 {
            for frame in 0..96 {
                spec.set(bin, frame, bin as f32);
            }
        }
        let out = fit_shape(&spec, 128, 96);
        assert_eq!((out.l1, out.l2), (128, 96));
        for bin in 0..128 {
            assert_eq!(out.at(bin, 0), bin as f32);
        }
    }

    #[test]
    fn fit_shape_right_pads_short_clips() {
        let mut spec = Spectrogram::zeros(129, 10);
        for v in spec.values.iter_mut() {
            *v = 1.0;
        }
        let out = fit_shape(&spec, 128, 96);
        for frame in 0..10 {
            assert_eq!(out.at(0, frame), 1.0);
        }
        for frame in 10..96 {
            for bin in 0..128 {
                assert_eq!(out.at(bin, frame), 0.0);
            }
        }
    }

    #[test]
    fn fit_shape_center_crops_long_clips() {
        let mut spec = Spectrogram::zeros(129, 200);
        for frame in 0..200 {
            spec.set(0, frame, frame as f32);
        }
        let out = fit_shape(&spec, 128, 96);
        // Columns 52..=147 of the source survive.
        assert_eq!(out.at(0, 0), 52.0);
        assert_eq!(out.at(0, 95), 147.0);
    }

    proptest! {
        #[test]
        fn fit_shape_idempotent(l1 in 1usize..20, l2 in 1usize..20, seed in 0u64..1000) {
            let mut rng = crate::rng::Rng::new(seed);
            let mut spec = Spectrogram::zeros(l1, l2);
            for v in spec.values.iter_mut() {
                *v = rng.next_f64() as f32;
            }
            let once = fit_shape(&spec, l1, l2);
            prop_assert_eq!(&once, &spec);
            let other = fit_shape(&spec, 8, 12);
            let twice = fit_shape(&other, 8, 12);
            prop_assert_eq!(&twice, &other);
        }
    }
}
