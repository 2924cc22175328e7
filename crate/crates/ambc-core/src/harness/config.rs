//! Experiment configuration: one TOML document drives a run or a sweep.
//! Every stochastic outcome is fully determined by (config, seed).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bitseq::{self, BitSequence, DATA_LEN, SYNC_LEN};
use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::lte::{slots_in_duration, CrsConfig, GridConfig, TrafficModel};
use crate::receiver::ReceiverConfig;
use crate::zed::FskConfig;

/// Signal fidelity mode.
///
/// `Grid` works on resource elements directly and is fast enough for long
/// observations; `Waveform` runs full IFFT + cyclic prefix synthesis and a
/// receive-side FFT. Both feed the identical receiver and are required to
/// produce statistically equivalent results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Grid,
    Waveform,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Grid => write!(f, "grid"),
            Mode::Waveform => write!(f, "waveform"),
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Mode::Grid),
            "waveform" => Ok(Mode::Waveform),
            other => Err(Error::InvalidConfig(format!(
                "unknown mode {other:?}, expected \"grid\" or \"waveform\""
            ))),
        }
    }
}

/// Receiver knobs exposed in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReceiverSettings {
    pub threshold: f64,
    pub offset_candidates: usize,
    /// Also run the total-power contrast detector and report its bit
    /// accuracy alongside the pilot-based chain.
    pub contrast_power_detector: bool,
    /// Override the preamble; ASCII bits, 63 of them.
    pub sync_bits: Option<String>,
}

impl Default for ReceiverSettings {
    fn default() -> Self {
        Self {
            threshold: 0.8,
            offset_candidates: 8,
            contrast_power_detector: false,
            sync_bits: None,
        }
    }
}

/// Device-side knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZedSettings {
    pub enabled: bool,
    /// 57 ASCII bits; defaults to the shipped payload.
    pub payload_bits: Option<String>,
    /// Transmission start, in whole slots of the receiver clock.
    pub start_slots: usize,
    /// Device clock skew in parts per million (positive = slow clock).
    pub clock_skew_ppm: f64,
}

impl Default for ZedSettings {
    fn default() -> Self {
        Self {
            enabled: true,
            payload_bits: None,
            start_slots: 0,
            clock_skew_ppm: 0.0,
        }
    }
}

/// Sweep axes; the cartesian product of the non-empty axes is simulated,
/// `trials` times each with per-point derived seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct SweepAxes {
    pub snr_db: Vec<f64>,
    pub backscatter_ratio_db: Vec<f64>,
    pub traffic: Vec<TrafficModel>,
    pub trials: usize,
}

/// Complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub duration_s: f64,
    pub seed: u64,
    pub mode: Mode,
    pub grid: GridConfig,
    pub crs: CrsConfig,
    pub traffic: TrafficModel,
    pub fsk: FskConfig,
    pub channel: ChannelParams,
    pub receiver: ReceiverSettings,
    pub zed: ZedSettings,
    pub sweep: SweepAxes,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            duration_s: 48.0,
            seed: 1,
            mode: Mode::Grid,
            grid: GridConfig::default(),
            crs: CrsConfig::default(),
            traffic: TrafficModel::default(),
            fsk: FskConfig::default(),
            channel: ChannelParams::default(),
            receiver: ReceiverSettings::default(),
            zed: ZedSettings::default(),
            sweep: SweepAxes::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.crs.validate()?;
        self.traffic.validate()?;
        self.fsk.validate()?;
        self.channel.validate()?;
        if slots_in_duration(self.duration_s) == 0 {
            return Err(Error::InvalidConfig(format!(
                "duration {} s does not cover one slot",
                self.duration_s
            )));
        }
        let payload = self.payload()?;
        if payload.len() != DATA_LEN {
            return Err(Error::LengthMismatch {
                expected: DATA_LEN,
                got: payload.len(),
            });
        }
        let sync = self.sync_sequence()?;
        if sync.len() != SYNC_LEN {
            return Err(Error::LengthMismatch {
                expected: SYNC_LEN,
                got: sync.len(),
            });
        }
        let estimate_rate = 1.0 / crate::lte::SLOT_S;
        self.receiver_config()?
            .validate(self.fsk.f0, self.fsk.f1, estimate_rate)?;
        for &snr in &self.sweep.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig("sweep SNR must be finite".into()));
            }
        }
        for &r in &self.sweep.backscatter_ratio_db {
            if r > 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "sweep backscatter ratio {r} dB exceeds the direct path"
                )));
            }
        }
        for t in &self.sweep.traffic {
            t.validate()?;
        }
        Ok(())
    }

    pub fn payload(&self) -> Result<BitSequence> {
        match &self.zed.payload_bits {
            Some(text) => text.parse(),
            None => Ok(bitseq::default_payload()),
        }
    }

    pub fn sync_sequence(&self) -> Result<BitSequence> {
        match &self.receiver.sync_bits {
            Some(text) => text.parse(),
            None => Ok(bitseq::default_sync_sequence()),
        }
    }

    /// Receiver parameters implied by the FSK tones and the 2 kHz
    /// per-slot estimate rate.
    pub fn receiver_config(&self) -> Result<ReceiverConfig> {
        let estimate_rate = 1.0 / crate::lte::SLOT_S;
        let symbol_samples = (self.fsk.symbol_s * estimate_rate).round() as usize;
        let bin = |f: f64| (f * symbol_samples as f64 / estimate_rate).round() as usize;
        Ok(ReceiverConfig {
            sync: self.sync_sequence()?,
            threshold: self.receiver.threshold,
            symbol_samples,
            bin_f0: bin(self.fsk.f0),
            bin_f1: bin(self.fsk.f1),
            offset_candidates: self.receiver.offset_candidates,
            data_len: DATA_LEN,
        })
    }

    /// Enumerate the sweep points in deterministic axis-nested order.
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let snrs: Vec<Option<f64>> = if self.sweep.snr_db.is_empty() {
            vec![self.channel.target_snr_db]
        } else {
            self.sweep.snr_db.iter().map(|&v| Some(v)).collect()
        };
        let ratios: Vec<f64> = if self.sweep.backscatter_ratio_db.is_empty() {
            vec![self.channel.backscatter_ratio_db]
        } else {
            self.sweep.backscatter_ratio_db.clone()
        };
        let traffics: Vec<TrafficModel> = if self.sweep.traffic.is_empty() {
            vec![self.traffic.clone()]
        } else {
            self.sweep.traffic.clone()
        };
        let trials = self.sweep.trials.max(1);

        let mut points = Vec::new();
        let mut index = 0usize;
        for snr in &snrs {
            for ratio in &ratios {
                for traffic in &traffics {
                    for trial in 0..trials {
                        points.push(SweepPoint {
                            index,
                            snr_db: *snr,
                            ratio_db: *ratio,
                            traffic: traffic.clone(),
                            trial,
                        });
                        index += 1;
                    }
                }
            }
        }
        points
    }
}

/// One coordinate of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    pub snr_db: Option<f64>,
    pub ratio_db: f64,
    pub traffic: TrafficModel,
    pub trial: usize,
}

impl SweepPoint {
    pub fn label(&self) -> String {
        let snr = match self.snr_db {
            Some(v) => format!("{v}"),
            None => "off".into(),
        };
        format!(
            "snr{}_ratio{}_duty{}_trial{}",
            snr,
            self.ratio_db,
            self.traffic.stationary_duty(),
            self.trial
        )
    }
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    ExperimentConfig::from_toml(&text)
}
