//! Detection metrics and plot-ready CSV emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::harness::config::Mode;

/// Ground-truth record for one transmitted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub index: usize,
    pub truth_start_s: f64,
    pub detected: bool,
    pub detection_time_s: Option<f64>,
    pub correlation: Option<f64>,
    pub data_ber: Option<f64>,
}

/// Per-point detection and error metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub label: String,
    pub snr_db: Option<f64>,
    pub backscatter_ratio_db: f64,
    pub traffic_duty: f64,
    pub trial: usize,
    pub mode: Mode,
    pub duration_s: f64,
    /// Complete frames the device actually transmitted.
    pub transmitted_frames: usize,
    /// Frames an ideal 4.8 s cadence would have produced in the window.
    pub wallclock_expected_frames: usize,
    pub detected_frames: usize,
    /// Detections that matched no transmitted frame.
    pub false_alarms: usize,
    pub frames: Vec<FrameRecord>,
    /// Bit accuracy of the total-power contrast detector, when enabled.
    pub contrast_accuracy: Option<f64>,
}

impl DetectionReport {
    pub fn detection_ratio(&self) -> f64 {
        if self.transmitted_frames == 0 {
            0.0
        } else {
            self.detected_frames as f64 / self.transmitted_frames as f64
        }
    }

    /// Mean data BER over detected frames only.
    pub fn mean_data_ber(&self) -> Option<f64> {
        let bers: Vec<f64> = self.frames.iter().filter_map(|f| f.data_ber).collect();
        if bers.is_empty() {
            None
        } else {
            Some(bers.iter().sum::<f64>() / bers.len() as f64)
        }
    }

    /// Sorted per-frame BER values of detected frames.
    pub fn ber_cdf(&self) -> Vec<f64> {
        let mut bers: Vec<f64> = self.frames.iter().filter_map(|f| f.data_ber).collect();
        bers.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bers
    }

    /// Nearest-rank empirical quantile of the detected-frame BER.
    pub fn ber_quantile(&self, q: f64) -> Option<f64> {
        let bers = self.ber_cdf();
        if bers.is_empty() {
            return None;
        }
        let rank = ((q * bers.len() as f64).ceil() as usize).clamp(1, bers.len());
        Some(bers[rank - 1])
    }
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    match v {
        Some(v) => format!("{v:.precision$}"),
        None => String::new(),
    }
}

/// Per-frame rows: one line per transmitted frame.
pub fn per_frame_csv(reports: &[DetectionReport]) -> String {
    let mut out = String::from("point,frame_index,detected,detection_time_s,correlation,data_ber\n");
    for r in reports {
        for f in &r.frames {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.label,
                f.index,
                f.detected as u8,
                fmt_opt(f.detection_time_s, 4),
                fmt_opt(f.correlation, 6),
                fmt_opt(f.data_ber, 6),
            ));
        }
    }
    out
}

/// Summary rows: one line per sweep point. BER columns stay empty when
/// nothing was detected.
pub fn summary_csv(reports: &[DetectionReport]) -> String {
    let mut out = String::from(
        "point,mode,snr_db,backscatter_ratio_db,traffic_duty,duration_s,\
         transmitted,wallclock_expected,detected,false_alarms,detection_ratio,\
         mean_data_ber,ber_q50,ber_q95,contrast_accuracy\n",
    );
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.6},{},{},{},{}\n",
            r.label,
            r.mode,
            match r.snr_db {
                Some(v) => format!("{v}"),
                None => "off".into(),
            },
            r.backscatter_ratio_db,
            r.traffic_duty,
            r.duration_s,
            r.transmitted_frames,
            r.wallclock_expected_frames,
            r.detected_frames,
            r.false_alarms,
            r.detection_ratio(),
            fmt_opt(r.mean_data_ber(), 6),
            fmt_opt(r.ber_quantile(0.5), 6),
            fmt_opt(r.ber_quantile(0.95), 6),
            fmt_opt(r.contrast_accuracy, 6),
        ));
    }
    out
}

/// Empirical distribution rows: (sorted BER, cumulative probability).
pub fn cdf_csv(reports: &[DetectionReport]) -> String {
    let mut out = String::from("point,data_ber,probability\n");
    for r in reports {
        let bers = r.ber_cdf();
        let n = bers.len();
        for (i, ber) in bers.iter().enumerate() {
            out.push_str(&format!(
                "{},{:.6},{:.6}\n",
                r.label,
                ber,
                (i + 1) as f64 / n as f64
            ));
        }
    }
    out
}

/// Human-readable one-liners for terminal output.
pub fn summary_lines(reports: &[DetectionReport]) -> Vec<String> {
    reports
        .iter()
        .map(|r| {
            format!(
                "{}: transmitted {}, detected {} ({:.2}%), false alarms {}, mean BER {}{}",
                r.label,
                r.transmitted_frames,
                r.detected_frames,
                100.0 * r.detection_ratio(),
                r.false_alarms,
                r.mean_data_ber()
                    .map(|b| format!("{b:.4}"))
                    .unwrap_or_else(|| "-".into()),
                r.contrast_accuracy
                    .map(|a| format!(", contrast accuracy {:.3}", a))
                    .unwrap_or_default(),
            )
        })
        .collect()
}

/// Write the three CSV artifacts into `out_dir`.
pub fn emit_report(reports: &[DetectionReport], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InsufficientData("no reports to emit".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let artifacts = [
        ("per_frame.csv", per_frame_csv(reports)),
        ("summary.csv", summary_csv(reports)),
        ("cdf.csv", cdf_csv(reports)),
    ];
    let mut paths = Vec::new();
    for (name, content) in artifacts {
        let path = out_dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut w = BufWriter::new(file);
        w.write_all(content.as_bytes())
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
        paths.push(path);
    }
    Ok(paths)
}
