//! Surface EMG conditioning and features: zero-phase band-pass, windowed
//! IEMG/RMS, Hann-periodogram MF/MPF and fatigue trends.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::scalar::{count, lit, to_f64, Real};
use crate::trace::{Placement, SensorTrace, Side, Unit};

pub const DEFAULT_BAND_HZ: (f64, f64) = (20.0, 450.0);
pub const DEFAULT_WINDOW_S: f64 = 1.0;
pub const DEFAULT_HOP_S: f64 = 0.5;
const SYMMETRY_EPS: f64 = 1e-12;
/// Relative slack on the half-power comparison so exact ties (two equal
/// tones) are not decided by rounding.
const MF_TIE_REL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SemgError {
    #[error("invalid band: need 0 < lo < hi < fs/2, got lo={lo} hi={hi} fs={fs}")]
    InvalidBand { lo: f64, hi: f64, fs: f64 },
    #[error("empty trace")]
    Empty,
    #[error("window of {samples} samples is too short (need at least {min})")]
    WindowTooShort { samples: usize, min: usize },
    #[error("hop must be positive")]
    BadHop,
    #[error("signal shorter than one window")]
    NoWindows,
    #[error("need at least 2 defined MF values, got {0}")]
    TooFewPoints(usize),
    #[error("window counts differ: left {left}, right {right}")]
    MismatchedWindows { left: usize, right: usize },
    #[error("sampling rate must be positive")]
    BadRate,
}

/// Second-order IIR section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    /// Butterworth low-pass via the bilinear transform with prewarping.
    pub fn lowpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        let b0 = k * k * norm;
        Self {
            b: [b0, 2.0 * b0, b0],
            a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    pub fn highpass(fc: f64, fs: f64) -> Self {
        let k = (PI * fc / fs).tan();
        let q = std::f64::consts::FRAC_1_SQRT_2;
        let norm = 1.0 / (1.0 + k / q + k * k);
        Self {
            b: [norm, -2.0 * norm, norm],
            a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - k / q + k * k) * norm],
        }
    }

    /// Transposed direct form II state giving a steady-state response to a
    /// unit step.
    fn step_state(&self) -> [f64; 2] {
        let gain = (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[1] + self.a[2]);
        let z2 = self.b[2] - self.a[2] * gain;
        let z1 = self.b[1] - self.a[1] * gain + z2;
        [z1, z2]
    }

    fn run(&self, x: &[f64], mut z: [f64; 2]) -> Vec<f64> {
        x.iter()
            .map(|&xi| {
                let y = self.b[0] * xi + z[0];
                z[0] = self.b[1] * xi - self.a[1] * y + z[1];
                z[1] = self.b[2] * xi - self.a[2] * y;
                y
            })
            .collect()
    }

    /// Forward-backward pass with odd-extension padding; the result has the
    /// squared magnitude response and zero phase.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let pad = 9.min(x.len().saturating_sub(1));
        let (first, last) = (x[0], x[x.len() - 1]);
        let mut ext = Vec::with_capacity(x.len() + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * first - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * last - x[x.len() - 1 - i]));
        let zi = self.step_state();
        let fwd = self.run(&ext, [zi[0] * ext[0], zi[1] * ext[0]]);
        let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
        let start = rev[0];
        rev = self.run(&rev, [zi[0] * start, zi[1] * start]);
        rev.reverse();
        rev[pad..pad + x.len()].to_vec()
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex<f64> {
        let w = 2.0 * PI * f / fs;
        let z1 = Complex::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[1] * z1 + self.a[2] * z2)
    }
}

/// 4th-order band-pass: a 2nd-order Butterworth high-pass at `lo` followed
/// by a 2nd-order low-pass at `hi`, each applied forward and backward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandpass {
    pub lo_hz: f64,
    pub hi_hz: f64,
    pub fs_hz: f64,
    pub sections: [Biquad; 2],
}

impl Bandpass {
    pub fn new(lo_hz: f64, hi_hz: f64, fs_hz: f64) -> Result<Self, SemgError> {
        if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < fs_hz / 2.0) {
            return Err(SemgError::InvalidBand {
                lo: lo_hz,
                hi: hi_hz,
                fs: fs_hz,
            });
        }
        Ok(Self {
            lo_hz,
            hi_hz,
            fs_hz,
            sections: [Biquad::highpass(lo_hz, fs_hz), Biquad::lowpass(hi_hz, fs_hz)],
        })
    }

    /// Zero-phase gain at `f`: the squared single-pass magnitude.
    pub fn gain(&self, f: f64) -> f64 {
        self.sections
            .iter()
            .map(|s| s.response(f, self.fs_hz).norm_sqr())
            .product()
    }

    pub fn apply<T: Real>(&self, x: &[T]) -> Vec<T> {
        if x.is_empty() {
            return Vec::new();
        }
        let mut y: Vec<f64> = x.iter().map(|v| to_f64(*v)).collect();
        for s in &self.sections {
            y = s.filtfilt(&y);
        }
        y.into_iter().map(lit).collect()
    }
}

/// Zero-phase band-pass of one channel.
pub fn bandpass<T: Real>(x: &[T], fs_hz: T, lo_hz: T, hi_hz: T) -> Result<Vec<T>, SemgError> {
    Ok(Bandpass::new(to_f64(lo_hz), to_f64(hi_hz), to_f64(fs_hz))?.apply(x))
}

/// Window starts (sample indices) for `[start, start + n)` windows with a
/// stride of `hop`; the trailing partial window is dropped.
fn window_starts(len: usize, n: usize, hop: usize) -> Vec<usize> {
    if len < n {
        return Vec::new();
    }
    (0..=(len - n) / hop).map(|w| w * hop).collect()
}

fn window_geometry<T: Real>(fs_hz: T, window_s: T, hop_s: T, min: usize) -> Result<(usize, usize), SemgError> {
    if !(fs_hz > T::zero()) {
        return Err(SemgError::BadRate);
    }
    let n = to_f64(window_s * fs_hz).round();
    let hop = to_f64(hop_s * fs_hz).round();
    if !(n >= min as f64) {
        return Err(SemgError::WindowTooShort {
            samples: n.max(0.0) as usize,
            min,
        });
    }
    if !(hop >= 1.0) {
        return Err(SemgError::BadHop);
    }
    Ok((n as usize, hop as usize))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TimeFeatures<T: Real> {
    pub window_start_s: T,
    pub iemg_mv_s: T,
    pub rms_mv: T,
}

/// IEMG (`Σ|x|/fs`) and RMS per window.
pub fn time_features<T: Real>(x: &[T], fs_hz: T, window_s: T, hop_s: T) -> Result<Vec<TimeFeatures<T>>, SemgError> {
    if x.is_empty() {
        return Err(SemgError::Empty);
    }
    let (n, hop) = window_geometry(fs_hz, window_s, hop_s, 2)?;
    Ok(window_starts(x.len(), n, hop)
        .into_iter()
        .map(|s| {
            let w = &x[s..s + n];
            let abs = w.iter().fold(T::zero(), |a, v| a + v.abs());
            let sq = w.iter().fold(T::zero(), |a, v| a + *v * *v);
            TimeFeatures {
                window_start_s: count::<T>(s) / fs_hz,
                iemg_mv_s: abs / fs_hz,
                rms_mv: (sq / count::<T>(n)).sqrt(),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Taper {
    Hann,
    /// No taper; exists so the spectrum can be checked against Parseval.
    Rectangular,
}

/// One-sided power spectrum of the demeaned, tapered window:
/// `P_0 = |X_0|²/N²`, `P_k = 2|X_k|²/N²` and, for even `N`, `P_{N/2} = |X_{N/2}|²/N²`.
/// Untapered, `ΣP` equals the mean square of the demeaned window.
pub fn power_spectrum<T: Real>(x: &[T], fs_hz: T, taper: Taper) -> (Vec<T>, Vec<T>) {
    let n = x.len();
    let mean = x.iter().fold(T::zero(), |a, v| a + *v) / count::<T>(n);
    let mut buf: Vec<Complex<T>> = x
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = match taper {
                Taper::Hann => lit::<T>(0.5) - lit::<T>(0.5) * (T::two_pi() * count::<T>(i) / count::<T>(n)).cos(),
                Taper::Rectangular => T::one(),
            };
            Complex::new((*v - mean) * w, T::zero())
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let nn = count::<T>(n) * count::<T>(n);
    let half = n / 2;
    let freqs = (0..=half).map(|k| count::<T>(k) * fs_hz / count::<T>(n)).collect();
    let power = (0..=half)
        .map(|k| {
            let p = buf[k].norm_sqr() / nn;
            if k == 0 || (n % 2 == 0 && k == half) {
                p
            } else {
                p * lit(2.0)
            }
        })
        .collect();
    (freqs, power)
}

/// Median and mean power frequency of a spectrum; `None` for zero power.
pub fn median_and_mean_frequency<T: Real>(freqs: &[T], power: &[T]) -> Option<(T, T)> {
    let total = power.iter().fold(T::zero(), |a, p| a + *p);
    if !(total > T::zero()) {
        return None;
    }
    let half = total / lit(2.0);
    let slack = total * lit(MF_TIE_REL);
    let mut cum = T::zero();
    let mut mf = freqs[freqs.len() - 1];
    for (f, p) in freqs.iter().zip(power) {
        cum += *p;
        if cum >= half - slack {
            mf = *f;
            break;
        }
    }
    let mpf = freqs.iter().zip(power).fold(T::zero(), |a, (f, p)| a + *f * *p) / total;
    Some((mf, mpf))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralFeatures<T: Real> {
    pub window_start_s: T,
    /// `None` when the window has no power.
    pub mf_hz: Option<T>,
    pub mpf_hz: Option<T>,
}

pub fn spectral_features<T: Real>(x: &[T], fs_hz: T, window_s: T, hop_s: T) -> Result<Vec<SpectralFeatures<T>>, SemgError> {
    spectral_features_with(x, fs_hz, window_s, hop_s, Taper::Hann)
}

pub fn spectral_features_with<T: Real>(
    x: &[T],
    fs_hz: T,
    window_s: T,
    hop_s: T,
    taper: Taper,
) -> Result<Vec<SpectralFeatures<T>>, SemgError> {
    if x.is_empty() {
        return Err(SemgError::Empty);
    }
    let (n, hop) = window_geometry(fs_hz, window_s, hop_s, 8)?;
    Ok(window_starts(x.len(), n, hop)
        .into_iter()
        .map(|s| {
            let (freqs, power) = power_spectrum(&x[s..s + n], fs_hz, taper);
            let mm = median_and_mean_frequency(&freqs, &power);
            SpectralFeatures {
                window_start_s: count::<T>(s) / fs_hz,
                mf_hz: mm.map(|m| m.0),
                mpf_hz: mm.map(|m| m.1),
            }
        })
        .collect())
}

/// Least-squares line through `(t, mf)` points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FatigueTrend<T: Real> {
    pub times_s: Vec<T>,
    pub mf_hz: Vec<T>,
    pub slope_hz_per_s: T,
    pub intercept_hz: T,
    /// Zero when the series has no variance.
    pub r_squared: T,
}

pub fn fatigue_trend<T: Real>(points: &[(T, T)]) -> Result<FatigueTrend<T>, SemgError> {
    if points.len() < 2 {
        return Err(SemgError::TooFewPoints(points.len()));
    }
    let n = count::<T>(points.len());
    let tm = points.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let ym = points.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let sxx = points.iter().fold(T::zero(), |a, p| a + (p.0 - tm) * (p.0 - tm));
    let sxy = points.iter().fold(T::zero(), |a, p| a + (p.0 - tm) * (p.1 - ym));
    let syy = points.iter().fold(T::zero(), |a, p| a + (p.1 - ym) * (p.1 - ym));
    if !(sxx > T::zero()) {
        return Err(SemgError::TooFewPoints(1));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let r2 = if syy > T::zero() {
        let ss_res = points.iter().fold(T::zero(), |a, p| {
            let r = p.1 - (intercept + slope * p.0);
            a + r * r
        });
        (T::one() - ss_res / syy).clamp(T::zero(), T::one())
    } else {
        T::zero()
    };
    Ok(FatigueTrend {
        times_s: points.iter().map(|p| p.0).collect(),
        mf_hz: points.iter().map(|p| p.1).collect(),
        slope_hz_per_s: slope,
        intercept_hz: intercept,
        r_squared: r2,
    })
}

/// Trend of the defined MF values against window centre times.
pub fn fatigue_trend_of<T: Real>(features: &[SpectralFeatures<T>], window_s: T) -> Result<FatigueTrend<T>, SemgError> {
    let half = window_s / lit(2.0);
    let pts: Vec<(T, T)> = features
        .iter()
        .filter_map(|f| f.mf_hz.map(|mf| (f.window_start_s + half, mf)))
        .collect();
    fatigue_trend(&pts)
}

/// Mean over windows of `|RMS_L − RMS_R| / max(RMS_L, RMS_R, ε)`.
pub fn channel_symmetry<T: Real>(left: &[TimeFeatures<T>], right: &[TimeFeatures<T>]) -> Result<T, SemgError> {
    if left.len() != right.len() {
        return Err(SemgError::MismatchedWindows {
            left: left.len(),
            right: right.len(),
        });
    }
    if left.is_empty() {
        return Err(SemgError::NoWindows);
    }
    let eps = lit::<T>(SYMMETRY_EPS);
    let sum = left.iter().zip(right).fold(T::zero(), |acc, (l, r)| {
        acc + (l.rms_mv - r.rms_mv).abs() / l.rms_mv.max(r.rms_mv).max(eps)
    });
    Ok(sum / count::<T>(left.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemgConfig {
    /// `None` skips filtering.
    pub band_hz: Option<(f64, f64)>,
    pub window_s: f64,
    pub hop_s: f64,
}

impl Default for SemgConfig {
    fn default() -> Self {
        Self {
            band_hz: Some(DEFAULT_BAND_HZ),
            window_s: DEFAULT_WINDOW_S,
            hop_s: DEFAULT_HOP_S,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EmgFeatures<T: Real> {
    pub window_start_s: T,
    pub window_len_s: T,
    pub iemg_mv_s: T,
    pub rms_mv: T,
    pub mf_hz: Option<T>,
    pub mpf_hz: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ChannelReport<T: Real> {
    pub channel: String,
    pub placement: Option<Placement>,
    pub features: Vec<EmgFeatures<T>>,
    /// `None` when fewer than two windows have a defined MF.
    pub trend: Option<FatigueTrend<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SymmetryReport<T: Real> {
    pub level: String,
    pub left: String,
    pub right: String,
    pub asymmetry: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SemgReport<T: Real> {
    pub config: SemgConfig,
    pub channels: Vec<ChannelReport<T>>,
    pub symmetry: Vec<SymmetryReport<T>>,
}

impl<T: Real> SemgReport<T> {
    /// Feature CSV: `channel,window_start_s,iemg_mv_s,rms_mv,mf_hz,mpf_hz`;
    /// undefined spectral values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("channel,window_start_s,iemg_mv_s,rms_mv,mf_hz,mpf_hz\n");
        let opt = |v: Option<T>| v.map(|x| to_f64(x).to_string()).unwrap_or_default();
        for c in &self.channels {
            for f in &c.features {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    c.channel,
                    to_f64(f.window_start_s),
                    to_f64(f.iemg_mv_s),
                    to_f64(f.rms_mv),
                    opt(f.mf_hz),
                    opt(f.mpf_hz)
                ));
            }
        }
        out
    }

    /// Mean fatigue slope over channels that have a trend.
    pub fn mean_fatigue_slope(&self) -> Option<T> {
        let slopes: Vec<T> = self.channels.iter().filter_map(|c| c.trend.as_ref().map(|t| t.slope_hz_per_s)).collect();
        mean(&slopes)
    }

    pub fn mean_asymmetry(&self) -> Option<T> {
        mean(&self.symmetry.iter().map(|s| s.asymmetry).collect::<Vec<_>>())
    }

    /// Mean of a per-window feature over all channels and windows.
    pub fn mean_of(&self, pick: impl Fn(&EmgFeatures<T>) -> Option<T>) -> Option<T> {
        let vals: Vec<T> = self.channels.iter().flat_map(|c| c.features.iter().filter_map(&pick)).collect();
        mean(&vals)
    }
}

fn mean<T: Real>(v: &[T]) -> Option<T> {
    (!v.is_empty()).then(|| v.iter().fold(T::zero(), |a, b| a + *b) / count::<T>(v.len()))
}

/// Full per-channel pipeline over every mV channel of a trace, plus
/// left/right asymmetry for each level that has both sides.
pub fn analyze_trace<T: Real>(trace: &SensorTrace<T>, config: &SemgConfig) -> Result<SemgReport<T>, SemgError> {
    let fs = trace.fs_hz();
    let (window, hop) = (lit::<T>(config.window_s), lit::<T>(config.hop_s));
    let band = match config.band_hz {
        Some((lo, hi)) => Some(Bandpass::new(lo, hi, to_f64(fs))?),
        None => None,
    };
    let mut channels = Vec::new();
    let mut times = Vec::new();
    for ch in trace.channels().iter().filter(|c| c.unit == Unit::Millivolt) {
        let x = match &band {
            Some(b) => b.apply(&ch.samples),
            None => ch.samples.clone(),
        };
        let tf = time_features(&x, fs, window, hop)?;
        let sf = spectral_features(&x, fs, window, hop)?;
        let offset = trace.start_s();
        let features: Vec<EmgFeatures<T>> = tf
            .iter()
            .zip(&sf)
            .map(|(t, s)| EmgFeatures {
                window_start_s: t.window_start_s + offset,
                window_len_s: window,
                iemg_mv_s: t.iemg_mv_s,
                rms_mv: t.rms_mv,
                mf_hz: s.mf_hz,
                mpf_hz: s.mpf_hz,
            })
            .collect();
        let trend = fatigue_trend_of(&sf, window).ok().map(|mut t| {
            t.times_s.iter_mut().for_each(|x| *x += offset);
            t.intercept_hz -= t.slope_hz_per_s * offset;
            t
        });
        times.push((ch.name.clone(), ch.placement.clone(), tf));
        channels.push(ChannelReport {
            channel: ch.name.clone(),
            placement: ch.placement.clone(),
            features,
            trend,
        });
    }
    let mut symmetry = Vec::new();
    for (name, placement, tf) in &times {
        let Some(p) = placement.as_ref().filter(|p| p.side == Side::Left) else {
            continue;
        };
        let partner = times.iter().find(|(_, q, _)| {
            q.as_ref().is_some_and(|q| q.level == p.level && q.side == Side::Right)
        });
        if let Some((rname, _, rtf)) = partner {
            symmetry.push(SymmetryReport {
                level: p.level.clone(),
                left: name.clone(),
                right: rname.clone(),
                asymmetry: channel_symmetry(tf, rtf)?,
            });
        }
    }
    Ok(SemgReport {
        config: *config,
        channels,
        symmetry,
    })
}
