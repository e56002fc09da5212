//! Uniformly sampled multichannel sensor recordings (sEMG, IMU).

use std::fmt;
use std::str::FromStr;

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::scalar::{lit, to_f64, Real};

/// Unit tag carried by every channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "mV")]
    Millivolt,
    /// Unit-quaternion component; four consecutive channels form `w, x, y, z`.
    #[serde(rename = "quat")]
    Quaternion,
    #[serde(rename = "m/s^2")]
    Acceleration,
    #[serde(rename = "rad/s")]
    AngularVelocity,
    #[serde(rename = "uT")]
    MagneticField,
}

impl Unit {
    pub fn tag(&self) -> &'static str {
        match self {
            Unit::Millivolt => "mV",
            Unit::Quaternion => "quat",
            Unit::Acceleration => "m/s^2",
            Unit::AngularVelocity => "rad/s",
            Unit::MagneticField => "uT",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mV" => Ok(Unit::Millivolt),
            "quat" => Ok(Unit::Quaternion),
            "m/s^2" => Ok(Unit::Acceleration),
            "rad/s" => Ok(Unit::AngularVelocity),
            "uT" => Ok(Unit::MagneticField),
            other => Err(format!("unknown unit tag {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Electrode site: vertebral level and body side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub level: String,
    pub side: Side,
}

impl Placement {
    /// Lumbar erector-spinae montage: EMG1/EMG2 at L4, EMG3/EMG4 at L2,
    /// odd channels on the left.
    pub fn lumbar_default(channel: &str) -> Option<Self> {
        let (level, side) = match channel {
            "EMG1" => ("L4", Side::Left),
            "EMG2" => ("L4", Side::Right),
            "EMG3" => ("L2", Side::Left),
            "EMG4" => ("L2", Side::Right),
            _ => return None,
        };
        Some(Self {
            level: level.to_string(),
            side,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel<T: Real> {
    pub name: String,
    pub unit: Unit,
    pub placement: Option<Placement>,
    pub samples: Vec<T>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TraceError {
    #[error("sampling rate must be positive, got {0}")]
    BadRate(f64),
    #[error("channel {name} has {got} samples, expected {expected}")]
    UnequalLength {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("quaternion channels must come in groups of four (w, x, y, z); found {0} at channel {1}")]
    QuaternionGrouping(usize, String),
    #[error("quaternion at sample {sample} of channel group starting {channel} has norm {norm}")]
    NonUnitQuaternion {
        channel: String,
        sample: usize,
        norm: f64,
    },
    #[error("duplicate channel name {0}")]
    DuplicateChannel(String),
}

/// Multichannel trace sampled at `fs_hz`, first sample at `start_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorTrace<T: Real> {
    fs_hz: T,
    start_s: T,
    channels: Vec<Channel<T>>,
}

pub fn quaternion_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * lit(16.0);
    let floor = lit::<T>(1e-6);
    if eps > floor {
        eps
    } else {
        floor
    }
}

impl<T: Real> SensorTrace<T> {
    pub fn new(fs_hz: T, start_s: T, channels: Vec<Channel<T>>) -> Result<Self, TraceError> {
        if !(fs_hz > T::zero()) || !crate::scalar::is_finite(fs_hz) {
            return Err(TraceError::BadRate(to_f64(fs_hz)));
        }
        let expected = channels.first().map_or(0, |c| c.samples.len());
        for (i, c) in channels.iter().enumerate() {
            if c.samples.len() != expected {
                return Err(TraceError::UnequalLength {
                    name: c.name.clone(),
                    expected,
                    got: c.samples.len(),
                });
            }
            if channels[..i].iter().any(|o| o.name == c.name) {
                return Err(TraceError::DuplicateChannel(c.name.clone()));
            }
        }
        let trace = Self {
            fs_hz,
            start_s,
            channels,
        };
        for group in trace.quaternion_groups()? {
            let head = &trace.channels[group];
            for s in 0..expected {
                let norm = (0..4)
                    .map(|o| trace.channels[group + o].samples[s].powi(2))
                    .fold(T::zero(), |a, b| a + b)
                    .sqrt();
                if (norm - T::one()).abs() > quaternion_tolerance::<T>() {
                    return Err(TraceError::NonUnitQuaternion {
                        channel: head.name.clone(),
                        sample: s,
                        norm: to_f64(norm),
                    });
                }
            }
        }
        Ok(trace)
    }

    pub fn fs_hz(&self) -> T {
        self.fs_hz
    }

    pub fn start_s(&self) -> T {
        self.start_s
    }

    pub fn channels(&self) -> &[Channel<T>] {
        &self.channels
    }

    pub fn channel(&self, name: &str) -> Option<&Channel<T>> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of sample `i` in seconds.
    pub fn time_of(&self, i: usize) -> T {
        self.start_s + crate::scalar::count::<T>(i) / self.fs_hz
    }

    /// Index of the first channel of each `w, x, y, z` quaternion group.
    pub fn quaternion_groups(&self) -> Result<Vec<usize>, TraceError> {
        let mut groups = Vec::new();
        let mut i = 0;
        while i < self.channels.len() {
            if self.channels[i].unit == Unit::Quaternion {
                let run = self.channels[i..]
                    .iter()
                    .take_while(|c| c.unit == Unit::Quaternion)
                    .count();
                if run % 4 != 0 {
                    return Err(TraceError::QuaternionGrouping(
                        run,
                        self.channels[i].name.clone(),
                    ));
                }
                groups.extend((0..run / 4).map(|g| i + 4 * g));
                i += run;
            } else {
                i += 1;
            }
        }
        Ok(groups)
    }

    /// Orientation series of the quaternion group starting at channel `first`.
    pub fn quaternion_series(&self, first: usize) -> Vec<UnitQuaternion<T>> {
        let ch = &self.channels[first..first + 4];
        (0..self.len())
            .map(|s| {
                UnitQuaternion::new_unchecked(Quaternion::new(
                    ch[0].samples[s],
                    ch[1].samples[s],
                    ch[2].samples[s],
                    ch[3].samples[s],
                ))
            })
            .collect()
    }
}
