//! Fast property suite behind the `selftest` CLI subcommand: the core
//! invariants that must hold before any simulation output is trusted.

use num_complex::Complex64;

use crate::bitseq::{self, LfsrSpec};
use crate::harness::{run_point, ExperimentConfig};
use crate::keyrand;
use crate::lte::{self, GridConfig, ResourceGrid};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, result: Result<String, String>) -> Check {
    match result {
        Ok(detail) => Check { name, pass: true, detail },
        Err(detail) => Check { name, pass: false, detail },
    }
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("frame-arithmetic", frame_arithmetic()),
        check("m-sequence", m_sequence()),
        check("threshold-equivalence", threshold_equivalence()),
        check("traffic-duty", traffic_duty()),
        check("ofdm-parseval", ofdm_parseval()),
        check("noiseless-end-to-end", noiseless_end_to_end()),
        check("report-determinism", report_determinism()),
    ]
}

fn frame_arithmetic() -> Result<String, String> {
    let frame = bitseq::build_frame(&bitseq::default_payload()).map_err(|e| e.to_string())?;
    if frame.len() != 120 {
        return Err(format!("frame length {}", frame.len()));
    }
    let duration: f64 = 120.0 * 0.040;
    if (duration - 4.8).abs() > 1e-12 {
        return Err(format!("frame duration {duration}"));
    }
    Ok("63 + 57 = 120 bits, 4.8 s".into())
}

fn m_sequence() -> Result<String, String> {
    let seq = bitseq::generate_m_sequence(&LfsrSpec::default_sync()).map_err(|e| e.to_string())?;
    if seq.len() != 63 || seq.ones() != 32 {
        return Err(format!("period {} ones {}", seq.len(), seq.ones()));
    }
    for lag in 1..63 {
        let mut acc = 0i64;
        for i in 0..63 {
            acc += if seq.bits()[i] == seq.bits()[(i + lag) % 63] { 1 } else { -1 };
        }
        if acc != -1 {
            return Err(format!("autocorrelation {acc} at lag {lag}"));
        }
    }
    Ok("period 63, 32 ones, flat -1 sidelobes".into())
}

fn threshold_equivalence() -> Result<String, String> {
    let sync = bitseq::default_sync_sequence();
    for e in 0..=63usize {
        let flipped = sync.with_flipped(&(0..e).collect::<Vec<_>>());
        let corr = bitseq::agreement_correlation(&flipped, &sync).map_err(|x| x.to_string())?;
        if (corr >= 0.8) != (e <= 12) {
            return Err(format!("{e} errors give correlation {corr}"));
        }
    }
    Ok("corr >= 0.8 iff errors <= 12, exhaustive".into())
}

fn traffic_duty() -> Result<String, String> {
    let model = lte::TrafficModel::default();
    let occ = lte::traffic_occupancy(&model, 12345, 100_000);
    let duty = occ.iter().filter(|&&o| o).count() as f64 / occ.len() as f64;
    if (duty - 0.5).abs() > 0.01 {
        return Err(format!("empirical duty {duty}"));
    }
    Ok(format!("markov duty {duty:.4} vs stationary 0.5"))
}

fn ofdm_parseval() -> Result<String, String> {
    let cfg = GridConfig::default();
    let mut grid = ResourceGrid::empty(600, 7);
    for symbol in 0..7 {
        for sc in 0..600 {
            let k = keyrand::key4(5, symbol as u64, sc as u64, 0, 0);
            grid.set(symbol, sc, keyrand::gaussian_c(k), lte::ReKind::Data);
        }
    }
    let buf = lte::synthesize_baseband(&grid, &cfg).map_err(|e| e.to_string())?;
    let mut body = 0.0;
    let mut cursor = 0;
    for symbol in 0..7 {
        cursor += cfg.cp_len(symbol);
        body += buf.samples[cursor..cursor + cfg.fft_size]
            .iter()
            .map(Complex64::norm_sqr)
            .sum::<f64>();
        cursor += cfg.fft_size;
    }
    let rel = (body - grid.energy()).abs() / grid.energy();
    if rel > 1e-9 {
        return Err(format!("energy mismatch {rel:e}"));
    }
    Ok(format!("relative energy error {rel:.2e}"))
}

fn noiseless_end_to_end() -> Result<String, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.duration_s = 9.6;
    cfg.channel.target_snr_db = None;
    let report =
        run_point(&cfg, &cfg.sweep_points()[0]).map_err(|e| e.to_string())?;
    if report.detected_frames != 2 || report.mean_data_ber() != Some(0.0) {
        return Err(format!(
            "detected {} of {} frames, BER {:?}",
            report.detected_frames, report.transmitted_frames, report.mean_data_ber()
        ));
    }
    Ok("2/2 frames, zero errors".into())
}

fn report_determinism() -> Result<String, String> {
    let mut cfg = ExperimentConfig::default();
    cfg.duration_s = 9.6;
    cfg.channel.target_snr_db = Some(0.0);
    let point = &cfg.sweep_points()[0];
    let a = run_point(&cfg, point).map_err(|e| e.to_string())?;
    let b = run_point(&cfg, point).map_err(|e| e.to_string())?;
    let csv_a = crate::harness::summary_lines(&[a]);
    let csv_b = crate::harness::summary_lines(&[b]);
    if csv_a != csv_b {
        return Err("reports differ between identical runs".into());
    }
    Ok("identical seed, identical report".into())
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_all() {
            assert!(c.pass, "{}: {}", c.name, c.detail);
        }
    }
}
