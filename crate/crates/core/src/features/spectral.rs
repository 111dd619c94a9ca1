use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Hann-windowed magnitude spectra for fixed-length frames.
///
/// Magnitudes are scaled by the window sum so a full-scale sinusoid peaks
/// near half its amplitude independent of frame length.
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    size: usize,
    scale: f64,
}

impl SpectrumAnalyzer {
    pub fn new(frame_len: usize) -> Self {
        let size = frame_len.next_power_of_two().max(2);
        let window: Vec<f64> = (0..frame_len)
            .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame_len as f64).cos())
            .collect();
        let sum: f64 = window.iter().sum();
        Self {
            fft: FftPlanner::new().plan_fft_forward(size),
            window,
            size,
            scale: if sum > 0.0 { 1.0 / sum } else { 1.0 },
        }
    }

    pub fn bins(&self) -> usize {
        self.size / 2 + 1
    }

    pub fn magnitude(&self, frame: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = frame
            .iter()
            .zip(&self.window)
            .map(|(x, w)| Complex::new(x * w, 0.0))
            .collect();
        buf.resize(self.size, Complex::new(0.0, 0.0));
        self.fft.process(&mut buf);
        buf[..self.bins()].iter().map(|c| c.norm() * self.scale).collect()
    }
}

/// L2 norm of the positive magnitude differences, divided by the bin count.
pub fn spectral_flux(prev: &[f64], current: &[f64]) -> f64 {
    if current.is_empty() {
        return 0.0;
    }
    let sum_sq: f64 = prev
        .iter()
        .zip(current)
        .map(|(p, c)| (c - p).max(0.0).powi(2))
        .sum();
    sum_sq.sqrt() / current.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, start: usize, n: usize) -> Vec<f64> {
        (start..start + n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / 16_000.0).sin())
            .collect()
    }

    #[test]
    fn identical_frames_have_zero_flux() {
        let a = SpectrumAnalyzer::new(400);
        let m = a.magnitude(&tone(300.0, 0, 400));
        assert_eq!(spectral_flux(&m, &m), 0.0);
    }

    #[test]
    fn onset_is_positive() {
        let a = SpectrumAnalyzer::new(400);
        let silent = a.magnitude(&[0.0; 400]);
        let loud = a.magnitude(&tone(300.0, 0, 400));
        assert!(spectral_flux(&silent, &loud) > 0.0);
        assert_eq!(spectral_flux(&loud, &silent), 0.0);
    }

    #[test]
    fn steady_tone_has_negligible_flux() {
        let a = SpectrumAnalyzer::new(400);
        for freq in [200.0, 220.0, 317.0] {
            let m0 = a.magnitude(&tone(freq, 0, 400));
            let m1 = a.magnitude(&tone(freq, 160, 400));
            let flux = spectral_flux(&m0, &m1);
            assert!(flux < 1e-6, "{freq}: {flux}");
        }
    }

    #[test]
    fn sine_peak_is_half_amplitude() {
        let a = SpectrumAnalyzer::new(400);
        let m = a.magnitude(&tone(1_000.0, 0, 400));
        let peak = m.iter().cloned().fold(0.0, f64::max);
        assert!((peak - 0.25).abs() < 0.02, "{peak}");
    }
}
