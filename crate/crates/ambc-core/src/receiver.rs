//! Receiver chain: pilot-based channel estimation, FSK bit detection,
//! frame synchronization and bit-error computation.
//!
//! One complex channel estimate is produced per 0.5 ms slot by averaging
//! the least-squares estimates over all pilot elements of the slot, giving
//! a uniform 2 kHz series. Bits are decided from estimate magnitudes:
//! subtract the 80-sample window mean, compare DFT energies at bin 5
//! (125 Hz) and bin 20 (500 Hz). Magnitude processing makes the detector
//! indifferent to the unknown static phase of the direct path, and the
//! mean removal plus off-DC bins make it indifferent to any constant
//! offset. Frame sync slides the known 63-bit preamble over the hard
//! bits of eight sub-symbol timing hypotheses and accepts windows whose
//! agreement fraction reaches the threshold.

use num_complex::Complex64;

use crate::bitseq::{self, BitSequence};
use crate::error::{Error, Result};
use crate::lte::{CrsConfig, GridConfig, OfdmProcessor, ResourceGrid, SampleBuffer, SYMBOLS_PER_SLOT};

/// Uniformly sampled complex channel estimates, one per slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimateSeries {
    pub estimates: Vec<Complex64>,
    pub rate_hz: f64,
}

impl ChannelEstimateSeries {
    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.norm()).collect()
    }

    /// Debug CSV: `slot,re,im,magnitude`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "slot,re,im,magnitude")?;
        for (i, e) in self.estimates.iter().enumerate() {
            writeln!(w, "{},{:.9},{:.9},{:.9}", i, e.re, e.im, e.norm())?;
        }
        Ok(())
    }
}

/// Receiver parameters. The DFT bin indices must sit exactly on the FSK
/// tones: bin = f * symbol_samples / rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub sync: BitSequence,
    pub threshold: f64,
    pub symbol_samples: usize,
    pub bin_f0: usize,
    pub bin_f1: usize,
    pub offset_candidates: usize,
    pub data_len: usize,
}

impl Default for ReceiverConfig {
    fn default() -> Self {
        Self {
            sync: bitseq::default_sync_sequence(),
            threshold: 0.8,
            symbol_samples: 80,
            bin_f0: 5,
            bin_f1: 20,
            offset_candidates: 8,
            data_len: bitseq::DATA_LEN,
        }
    }
}

impl ReceiverConfig {
    pub fn validate(&self, f0: f64, f1: f64, rate_hz: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!(
                "correlation threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if rate_hz < 2.0 * f0.max(f1) {
            return Err(Error::Aliasing {
                time_base: rate_hz,
                f_max: f0.max(f1),
            });
        }
        for (f, bin) in [(f0, self.bin_f0), (f1, self.bin_f1)] {
            let exact = f * self.symbol_samples as f64 / rate_hz;
            if (exact - bin as f64).abs() > 1e-9 {
                return Err(Error::InvalidConfig(format!(
                    "bin {bin} does not sit on {f} Hz: f * N / rate = {exact}"
                )));
            }
        }
        if self.offset_candidates == 0 || self.symbol_samples % self.offset_candidates != 0 {
            return Err(Error::InvalidConfig(format!(
                "offset candidate count {} must divide the symbol length {}",
                self.offset_candidates, self.symbol_samples
            )));
        }
        if self.sync.is_empty() {
            return Err(Error::InvalidConfig("empty sync sequence".into()));
        }
        Ok(())
    }

    pub fn frame_bits(&self) -> usize {
        self.sync.len() + self.data_len
    }

    /// Estimate samples between consecutive timing hypotheses.
    pub fn offset_spacing(&self) -> usize {
        self.symbol_samples / self.offset_candidates
    }
}

/// One accepted frame detection.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    /// Bit index of the preamble start within its hypothesis stream.
    pub frame_start: usize,
    /// Which timing hypothesis produced it.
    pub offset_candidate: usize,
    /// Estimate-sample index of the preamble start on the common origin.
    pub estimate_index: usize,
    /// Agreement fraction of the preamble window.
    pub correlation: f64,
    /// The bits following the preamble.
    pub data_bits: BitSequence,
}

impl SyncResult {
    pub fn time_s(&self, rate_hz: f64) -> f64 {
        self.estimate_index as f64 / rate_hz
    }
}

/// Tone detector with precomputed DFT twiddles for the two FSK bins.
#[derive(Debug, Clone)]
pub struct FskDetector {
    n: usize,
    tw0: Vec<Complex64>,
    tw1: Vec<Complex64>,
}

impl FskDetector {
    pub fn new(cfg: &ReceiverConfig) -> Self {
        let n = cfg.symbol_samples;
        let tw = |bin: usize| -> Vec<Complex64> {
            (0..n)
                .map(|i| {
                    Complex64::from_polar(
                        1.0,
                        -std::f64::consts::TAU * bin as f64 * i as f64 / n as f64,
                    )
                })
                .collect()
        };
        Self {
            n,
            tw0: tw(cfg.bin_f0),
            tw1: tw(cfg.bin_f1),
        }
    }

    pub fn window_len(&self) -> usize {
        self.n
    }

    /// Decide one bit from a real-valued window: 0 when the low tone has
    /// at least as much energy as the high tone. Ties go to 0.
    pub fn decide(&self, window: &[f64]) -> (u8, f64) {
        debug_assert_eq!(window.len(), self.n);
        let mean = window.iter().sum::<f64>() / self.n as f64;
        let mut acc0 = Complex64::new(0.0, 0.0);
        let mut acc1 = Complex64::new(0.0, 0.0);
        for (i, &x) in window.iter().enumerate() {
            let v = x - mean;
            acc0 += self.tw0[i] * v;
            acc1 += self.tw1[i] * v;
        }
        let e0 = acc0.norm_sqr();
        let e1 = acc1.norm_sqr();
        let bit = if e0 >= e1 { 0 } else { 1 };
        let total = e0 + e1;
        let confidence = if total > 0.0 { (e0 - e1).abs() / total } else { 0.0 };
        (bit, confidence)
    }
}

/// Received signal handed to the estimator, in either fidelity mode.
pub enum ReceivedSignal {
    Grid(ResourceGrid),
    Samples(SampleBuffer),
}

/// Average least-squares pilot estimates per slot into a 2 kHz series.
pub fn estimate_channel(
    rx: &ReceivedSignal,
    crs: &CrsConfig,
    grid_cfg: &GridConfig,
) -> Result<ChannelEstimateSeries> {
    crs.validate()?;
    grid_cfg.validate()?;
    let rate_hz = 1.0 / crate::lte::SLOT_S;
    match rx {
        ReceivedSignal::Grid(grid) => {
            let n_slots = grid.n_symbols() / SYMBOLS_PER_SLOT;
            if n_slots == 0 {
                return Err(Error::InsufficientData(
                    "received grid shorter than one slot".into(),
                ));
            }
            let estimates = (0..n_slots)
                .map(|slot| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut count = 0usize;
                    for &j in &crs.symbol_positions {
                        let symbol = slot * SYMBOLS_PER_SLOT + j;
                        for sc in crs.positions(grid.n_subcarriers()) {
                            let pilot = crs.pilot_value(slot, j, sc);
                            acc += grid.cell(symbol, sc) * pilot.conj();
                            count += 1;
                        }
                    }
                    acc / count as f64
                })
                .collect();
            Ok(ChannelEstimateSeries { estimates, rate_hz })
        }
        ReceivedSignal::Samples(buf) => {
            let slot_samples = grid_cfg.samples_per_slot();
            let n_slots = buf.samples.len() / slot_samples;
            if n_slots == 0 {
                return Err(Error::InsufficientData(format!(
                    "received buffer holds {} samples, one slot needs {}",
                    buf.samples.len(),
                    slot_samples
                )));
            }
            let ofdm = OfdmProcessor::new(grid_cfg)?;
            let mut estimates = Vec::with_capacity(n_slots);
            for slot in 0..n_slots {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut count = 0usize;
                let mut offset = slot * slot_samples;
                for j in 0..SYMBOLS_PER_SLOT {
                    let len = grid_cfg.cp_len(j) + grid_cfg.fft_size;
                    if crs.is_pilot_symbol(j) {
                        let res = ofdm.demodulate_symbol(&buf.samples[offset..offset + len], j)?;
                        for sc in crs.positions(grid_cfg.active_subcarriers()) {
                            let pilot = crs.pilot_value(slot, j, sc);
                            acc += res[sc] * pilot.conj();
                            count += 1;
                        }
                    }
                    offset += len;
                }
                estimates.push(acc / count as f64);
            }
            Ok(ChannelEstimateSeries { estimates, rate_hz })
        }
    }
}

/// Detect the bit in the window starting at `window_start`.
pub fn detect_symbol(
    series: &ChannelEstimateSeries,
    window_start: usize,
    cfg: &ReceiverConfig,
) -> Result<(u8, f64)> {
    if window_start + cfg.symbol_samples > series.len() {
        return Err(Error::InsufficientData(format!(
            "window at {window_start} needs {} estimates, series has {}",
            cfg.symbol_samples,
            series.len()
        )));
    }
    let mags: Vec<f64> = series.estimates[window_start..window_start + cfg.symbol_samples]
        .iter()
        .map(|e| e.norm())
        .collect();
    Ok(FskDetector::new(cfg).decide(&mags))
}

/// Hard decisions (and their confidences) for every timing hypothesis.
///
/// Hypothesis `c` decodes windows starting at estimate sample
/// `c * spacing + n * symbol_samples`.
#[derive(Debug, Clone, Default)]
pub struct HypothesisStream {
    pub bits: Vec<u8>,
    pub confidences: Vec<f64>,
}

pub fn hypothesis_streams(
    series: &ChannelEstimateSeries,
    cfg: &ReceiverConfig,
) -> Vec<HypothesisStream> {
    let mags = series.magnitudes();
    hypothesis_streams_from_values(&mags, cfg)
}

/// Same, over any real-valued observable series.
pub fn hypothesis_streams_from_values(values: &[f64], cfg: &ReceiverConfig) -> Vec<HypothesisStream> {
    let detector = FskDetector::new(cfg);
    let spacing = cfg.offset_spacing();
    (0..cfg.offset_candidates)
        .map(|c| {
            let start = c * spacing;
            let n_bits = if values.len() >= start + cfg.symbol_samples {
                (values.len() - start) / cfg.symbol_samples
            } else {
                0
            };
            let mut stream = HypothesisStream {
                bits: Vec::with_capacity(n_bits),
                confidences: Vec::with_capacity(n_bits),
            };
            for n in 0..n_bits {
                let w = start + n * cfg.symbol_samples;
                let (bit, conf) = detector.decide(&values[w..w + cfg.symbol_samples]);
                stream.bits.push(bit);
                stream.confidences.push(conf);
            }
            stream
        })
        .collect()
}

struct Crossing {
    estimate_index: usize,
    correlation: f64,
    confidence: f64,
    candidate: usize,
    frame_start: usize,
}

/// Slide the preamble over every hypothesis stream and adjudicate.
///
/// Threshold crossings belonging to one physical frame form a tight chain
/// across neighbouring positions and hypotheses; each chain collapses to
/// its best window (correlation first, then total detection confidence,
/// which separates the aligned hypothesis from its neighbours when
/// correlations tie). A final pass suppresses re-detection for a frame
/// length after every accepted start. Emits nothing when nothing crosses
/// the threshold.
pub fn synchronize(streams: &[HypothesisStream], cfg: &ReceiverConfig) -> Vec<SyncResult> {
    let sync_bits = cfg.sync.bits();
    let sync_len = sync_bits.len();
    let frame_bits = cfg.frame_bits();
    let spacing = cfg.offset_spacing();

    let mut crossings: Vec<Crossing> = Vec::new();
    for (c, stream) in streams.iter().enumerate() {
        if stream.bits.len() < frame_bits {
            continue;
        }
        for n in 0..=stream.bits.len() - frame_bits {
            let matches = bitseq::agreement_count(&stream.bits[n..n + sync_len], sync_bits);
            let corr = matches as f64 / sync_len as f64;
            if corr >= cfg.threshold {
                let confidence = if stream.confidences.len() == stream.bits.len() {
                    stream.confidences[n..n + sync_len].iter().sum()
                } else {
                    0.0
                };
                crossings.push(Crossing {
                    estimate_index: c * spacing + n * cfg.symbol_samples,
                    correlation: corr,
                    confidence,
                    candidate: c,
                    frame_start: n,
                });
            }
        }
    }

    // chain-cluster: crossings of one frame sit within a couple of symbols
    // of each other, the next frame is a full preamble away
    crossings.sort_by(|a, b| {
        a.estimate_index
            .cmp(&b.estimate_index)
            .then(a.candidate.cmp(&b.candidate))
    });
    let chain_gap = 2 * cfg.symbol_samples;
    let mut winners: Vec<Crossing> = Vec::new();
    let mut cluster: Vec<Crossing> = Vec::new();
    let better = |a: &Crossing, b: &Crossing| {
        // true = a beats b
        match a.correlation.partial_cmp(&b.correlation).unwrap() {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => match a.confidence.partial_cmp(&b.confidence).unwrap() {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => (a.estimate_index, a.candidate) < (b.estimate_index, b.candidate),
            },
        }
    };
    for crossing in crossings {
        if let Some(last) = cluster.last() {
            if crossing.estimate_index - last.estimate_index > chain_gap {
                let best = cluster
                    .drain(..)
                    .reduce(|a, b| if better(&a, &b) { a } else { b })
                    .expect("cluster nonempty");
                winners.push(best);
            }
        }
        cluster.push(crossing);
    }
    if let Some(best) = cluster
        .drain(..)
        .reduce(|a, b| if better(&a, &b) { a } else { b })
    {
        winners.push(best);
    }

    // suppress re-detection for a frame length (less the sub-symbol
    // timing slack) after every accepted start
    let guard = (frame_bits - 2) * cfg.symbol_samples;
    winners.sort_by(|a, b| if better(a, b) { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater });
    let mut accepted: Vec<Crossing> = Vec::new();
    for w in winners {
        if accepted
            .iter()
            .all(|a| a.estimate_index.abs_diff(w.estimate_index) >= guard)
        {
            accepted.push(w);
        }
    }
    accepted.sort_by_key(|w| w.estimate_index);

    accepted
        .into_iter()
        .map(|w| {
            let stream = &streams[w.candidate];
            let data = BitSequence::new(
                stream.bits[w.frame_start + sync_len..w.frame_start + frame_bits].to_vec(),
            )
            .expect("hard decisions are bits");
            SyncResult {
                frame_start: w.frame_start,
                offset_candidate: w.candidate,
                estimate_index: w.estimate_index,
                correlation: w.correlation,
                data_bits: data,
            }
        })
        .collect()
}

/// Data BER of a detection against the known payload.
pub fn compute_ber(result: &SyncResult, truth: &BitSequence) -> Result<f64> {
    if truth.len() != result.data_bits.len() {
        return Err(Error::LengthMismatch {
            expected: result.data_bits.len(),
            got: truth.len(),
        });
    }
    let errors = bitseq::hamming_errors(&result.data_bits, truth)?;
    Ok(errors as f64 / truth.len() as f64)
}
