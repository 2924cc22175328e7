//! Ambient downlink source: a frequency/time resource grid carrying
//! deterministic reference pilots plus bursty data traffic, and the OFDM
//! synthesis that turns grid columns into baseband samples.
//!
//! The pilot cells are present in every slot whatever the traffic does;
//! that steadiness is the entire reason the receiver chain works. Pilot
//! values are unit-modulus QPSK drawn from a counter-keyed generator, so
//! any party that knows the cell id can regenerate them exactly.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyrand;

pub const SYMBOLS_PER_SLOT: usize = 7;
pub const SLOT_S: f64 = 0.0005;
pub const SLOTS_PER_SUBFRAME: usize = 2;

/// Salt separating pilot hashing from every other keyed stream.
const PILOT_SALT: u64 = 0x4352_5330;
const DATA_SALT: u64 = 0x4441_5441;
const TRAFFIC_SALT: u64 = 0x5452_4146;

/// Downlink numerology. Defaults model a 10 MHz carrier (50 resource
/// blocks, 1024-point FFT at 15.36 Msps).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub bandwidth_rb: usize,
    pub subcarrier_spacing_hz: f64,
    pub fft_size: usize,
    pub sample_rate_hz: f64,
    /// Informational center frequency; no effect on the simulation.
    pub carrier_hz: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            bandwidth_rb: 50,
            subcarrier_spacing_hz: 15_000.0,
            fft_size: 1024,
            sample_rate_hz: 15_360_000.0,
            carrier_hz: 768_000_000.0,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth_rb == 0 || self.bandwidth_rb * 12 > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "{} resource blocks ({} subcarriers) do not fit a {}-point FFT",
                self.bandwidth_rb,
                self.bandwidth_rb * 12,
                self.fft_size
            )));
        }
        let expected_rate = self.fft_size as f64 * self.subcarrier_spacing_hz;
        if (self.sample_rate_hz - expected_rate).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "sample rate {} must equal fft_size * subcarrier spacing = {}",
                self.sample_rate_hz, expected_rate
            )));
        }
        if self.fft_size % 128 != 0 {
            return Err(Error::InvalidConfig(format!(
                "fft_size {} must be a multiple of 128 for exact cyclic-prefix lengths",
                self.fft_size
            )));
        }
        Ok(())
    }

    pub fn active_subcarriers(&self) -> usize {
        self.bandwidth_rb * 12
    }

    /// Cyclic-prefix length in samples for a symbol position within a slot.
    /// Normal CP: the first symbol carries the longer prefix.
    pub fn cp_len(&self, symbol_in_slot: usize) -> usize {
        let scale = self.fft_size / 2048;
        // lengths defined at the 2048-point reference size
        let ts = if symbol_in_slot == 0 { 160 } else { 144 };
        if scale >= 1 {
            ts * scale
        } else {
            ts * self.fft_size / 2048
        }
    }

    pub fn samples_per_slot(&self) -> usize {
        (0..SYMBOLS_PER_SLOT).map(|j| self.cp_len(j) + self.fft_size).sum()
    }

    /// Midpoint of a symbol body (prefix excluded) on the receiver clock.
    pub fn symbol_mid_time(&self, slot: usize, symbol_in_slot: usize) -> f64 {
        let mut offset = 0usize;
        for j in 0..symbol_in_slot {
            offset += self.cp_len(j) + self.fft_size;
        }
        offset += self.cp_len(symbol_in_slot) + self.fft_size / 2;
        slot as f64 * SLOT_S + offset as f64 / self.sample_rate_hz
    }

    /// FFT bin for an active subcarrier index, mapped around a null DC.
    pub fn subcarrier_bin(&self, sc: usize) -> usize {
        let half = self.active_subcarriers() / 2;
        if sc < half {
            self.fft_size - half + sc
        } else {
            sc - half + 1
        }
    }
}

/// Cell-specific pilot layout and value rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrsConfig {
    pub cell_id: u32,
    /// Subcarriers between consecutive pilots.
    pub frequency_stride: usize,
    /// Symbol indices within a slot that carry pilots.
    pub symbol_positions: Vec<usize>,
}

impl Default for CrsConfig {
    fn default() -> Self {
        Self {
            cell_id: 0,
            frequency_stride: 6,
            symbol_positions: vec![0, 4],
        }
    }
}

impl CrsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frequency_stride == 0 {
            return Err(Error::InvalidConfig("pilot stride must be positive".into()));
        }
        if self.symbol_positions.is_empty()
            || self.symbol_positions.iter().any(|&p| p >= SYMBOLS_PER_SLOT)
        {
            return Err(Error::InvalidConfig(format!(
                "pilot symbol positions {:?} must lie within a {SYMBOLS_PER_SLOT}-symbol slot",
                self.symbol_positions
            )));
        }
        Ok(())
    }

    pub fn frequency_shift(&self) -> usize {
        self.cell_id as usize % self.frequency_stride
    }

    pub fn is_pilot_symbol(&self, symbol_in_slot: usize) -> bool {
        self.symbol_positions.contains(&symbol_in_slot)
    }

    /// Pilot subcarrier indices for a grid with `n_sc` active subcarriers.
    pub fn positions(&self, n_sc: usize) -> impl Iterator<Item = usize> + '_ {
        (self.frequency_shift()..n_sc).step_by(self.frequency_stride)
    }

    pub fn pilots_per_symbol(&self, n_sc: usize) -> usize {
        self.positions(n_sc).count()
    }

    /// Deterministic unit-modulus pilot value for one resource element.
    pub fn pilot_value(&self, slot: usize, symbol_in_slot: usize, sc: usize) -> Complex64 {
        keyrand::qpsk(keyrand::key4(
            PILOT_SALT,
            self.cell_id as u64,
            slot as u64,
            symbol_in_slot as u64,
            sc as u64,
        ))
    }
}

/// Pilot positions and values for one slot symbol.
pub fn generate_crs_symbols(
    crs: &CrsConfig,
    grid: &GridConfig,
    slot: usize,
    symbol_in_slot: usize,
) -> Result<Vec<(usize, Complex64)>> {
    crs.validate()?;
    if !crs.is_pilot_symbol(symbol_in_slot) {
        return Err(Error::NotAPilotSymbol { symbol: symbol_in_slot });
    }
    Ok(crs
        .positions(grid.active_subcarriers())
        .map(|sc| (sc, crs.pilot_value(slot, symbol_in_slot, sc)))
        .collect())
}

/// Data-traffic activity model, per 1 ms subframe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficModel {
    pub kind: TrafficKind,
    /// Load fraction for constant traffic.
    pub duty_target: f64,
    /// On -> off transition probability per subframe.
    pub p_on_to_off: f64,
    /// Off -> on transition probability per subframe.
    pub p_off_to_on: f64,
    /// Linear power per occupied data resource element.
    pub data_re_power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficKind {
    ConstantLoad,
    TwoStateMarkov,
}

impl Default for TrafficModel {
    fn default() -> Self {
        Self {
            kind: TrafficKind::TwoStateMarkov,
            duty_target: 0.5,
            p_on_to_off: 0.1,
            p_off_to_on: 0.1,
            data_re_power: 1.0,
        }
    }
}

impl TrafficModel {
    pub fn constant(duty: f64) -> Self {
        Self {
            kind: TrafficKind::ConstantLoad,
            duty_target: duty,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("duty_target", self.duty_target),
            ("p_on_to_off", self.p_on_to_off),
            ("p_off_to_on", self.p_off_to_on),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.data_re_power < 0.0 {
            return Err(Error::InvalidConfig("data_re_power must be >= 0".into()));
        }
        if self.kind == TrafficKind::TwoStateMarkov && self.p_on_to_off + self.p_off_to_on == 0.0 {
            return Err(Error::InvalidConfig(
                "markov traffic needs a nonzero transition probability".into(),
            ));
        }
        Ok(())
    }

    /// Long-run on fraction.
    pub fn stationary_duty(&self) -> f64 {
        match self.kind {
            TrafficKind::ConstantLoad => self.duty_target,
            TrafficKind::TwoStateMarkov => {
                self.p_off_to_on / (self.p_on_to_off + self.p_off_to_on)
            }
        }
    }
}

/// Markov occupancy state between subframes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrafficState {
    pub on: bool,
}

impl TrafficState {
    /// Stationary initial state drawn from the traffic seed.
    pub fn initial(model: &TrafficModel, seed: u64) -> Self {
        let u = keyrand::u01(keyrand::derive(seed, TRAFFIC_SALT));
        Self {
            on: u < model.stationary_duty(),
        }
    }
}

/// Advance one subframe; returns the occupancy flag for that subframe.
pub fn step_traffic(
    model: &TrafficModel,
    state: &mut TrafficState,
    seed: u64,
    subframe: usize,
) -> bool {
    match model.kind {
        TrafficKind::ConstantLoad => {
            // deterministic cyclic pattern hitting the duty target per 100
            let phase = subframe % 100;
            state.on = (phase as f64) < model.duty_target * 100.0 - 1e-9;
            state.on
        }
        TrafficKind::TwoStateMarkov => {
            let u = keyrand::u01(keyrand::key4(seed, TRAFFIC_SALT, subframe as u64, 0, 1));
            if state.on {
                if u < model.p_on_to_off {
                    state.on = false;
                }
            } else if u < model.p_off_to_on {
                state.on = true;
            }
            state.on
        }
    }
}

/// Occupancy flags for `n_subframes` consecutive subframes.
pub fn traffic_occupancy(model: &TrafficModel, seed: u64, n_subframes: usize) -> Vec<bool> {
    let mut state = TrafficState::initial(model, seed);
    (0..n_subframes)
        .map(|k| step_traffic(model, &mut state, seed, k))
        .collect()
}

/// What a resource element carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReKind {
    Empty,
    Crs,
    Data,
}

/// Frequency x time map of complex resource-element amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceGrid {
    n_subcarriers: usize,
    n_symbols: usize,
    cells: Vec<Complex64>,
    kinds: Vec<ReKind>,
}

impl ResourceGrid {
    pub fn empty(n_subcarriers: usize, n_symbols: usize) -> Self {
        Self {
            n_subcarriers,
            n_symbols,
            cells: vec![Complex64::new(0.0, 0.0); n_subcarriers * n_symbols],
            kinds: vec![ReKind::Empty; n_subcarriers * n_symbols],
        }
    }

    pub fn n_subcarriers(&self) -> usize {
        self.n_subcarriers
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_slots(&self) -> usize {
        self.n_symbols / SYMBOLS_PER_SLOT
    }

    #[inline]
    fn idx(&self, symbol: usize, sc: usize) -> usize {
        debug_assert!(sc < self.n_subcarriers && symbol < self.n_symbols);
        symbol * self.n_subcarriers + sc
    }

    pub fn cell(&self, symbol: usize, sc: usize) -> Complex64 {
        self.cells[self.idx(symbol, sc)]
    }

    pub fn kind(&self, symbol: usize, sc: usize) -> ReKind {
        self.kinds[self.idx(symbol, sc)]
    }

    pub fn set(&mut self, symbol: usize, sc: usize, value: Complex64, kind: ReKind) {
        let i = self.idx(symbol, sc);
        self.cells[i] = value;
        self.kinds[i] = kind;
    }

    pub fn symbol_cells(&self, symbol: usize) -> &[Complex64] {
        &self.cells[symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers]
    }

    pub fn symbol_cells_mut(&mut self, symbol: usize) -> &mut [Complex64] {
        &mut self.cells[symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers]
    }

    pub fn energy(&self) -> f64 {
        self.cells.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn count_kind(&self, kind: ReKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }
}

/// Whole slots covered by a duration; sub-slot remainders are dropped.
pub fn slots_in_duration(duration_s: f64) -> usize {
    ((duration_s / SLOT_S) + 1e-9).floor() as usize
}

/// Deterministic QPSK payload value for an occupied data element.
pub fn data_re_value(
    data_seed: u64,
    slot: usize,
    symbol_in_slot: usize,
    sc: usize,
    re_power: f64,
) -> Complex64 {
    let key = keyrand::key4(
        keyrand::derive(data_seed, DATA_SALT),
        slot as u64,
        symbol_in_slot as u64,
        sc as u64,
        0,
    );
    keyrand::qpsk(key) * re_power.sqrt()
}

/// Fill the cells of one OFDM symbol.
///
/// Pilots are placed on every configured pilot symbol regardless of
/// traffic; data elements are unit-power QPSK (scaled by the configured
/// data power) whenever the subframe is occupied.
pub fn fill_symbol(
    grid_cfg: &GridConfig,
    crs: &CrsConfig,
    traffic: &TrafficModel,
    data_seed: u64,
    slot: usize,
    symbol_in_slot: usize,
    occupied: bool,
    cells: &mut [Complex64],
    mut kinds: Option<&mut [ReKind]>,
) {
    let n_sc = grid_cfg.active_subcarriers();
    let is_pilot_symbol = crs.is_pilot_symbol(symbol_in_slot);
    let shift = crs.frequency_shift();
    let stride = crs.frequency_stride;
    for sc in 0..n_sc {
        let is_pilot = is_pilot_symbol && sc % stride == shift;
        let (value, kind) = if is_pilot {
            (crs.pilot_value(slot, symbol_in_slot, sc), ReKind::Crs)
        } else if occupied {
            (
                data_re_value(data_seed, slot, symbol_in_slot, sc, traffic.data_re_power),
                ReKind::Data,
            )
        } else {
            (Complex64::new(0.0, 0.0), ReKind::Empty)
        };
        cells[sc] = value;
        if let Some(kinds) = kinds.as_deref_mut() {
            kinds[sc] = kind;
        }
    }
}

/// Build a resource grid covering `duration_s` of downlink.
pub fn build_grid(
    grid_cfg: &GridConfig,
    crs: &CrsConfig,
    traffic: &TrafficModel,
    duration_s: f64,
    seed: u64,
) -> Result<ResourceGrid> {
    grid_cfg.validate()?;
    crs.validate()?;
    traffic.validate()?;
    let n_slots = slots_in_duration(duration_s);
    if n_slots == 0 {
        return Err(Error::InsufficientData(format!(
            "duration {duration_s} s is shorter than one {SLOT_S} s slot"
        )));
    }
    let n_sc = grid_cfg.active_subcarriers();
    let n_symbols = n_slots * SYMBOLS_PER_SLOT;
    let occupancy = traffic_occupancy(traffic, seed, n_slots.div_ceil(SLOTS_PER_SUBFRAME));
    let mut grid = ResourceGrid::empty(n_sc, n_symbols);
    for slot in 0..n_slots {
        let occupied = occupancy[slot / SLOTS_PER_SUBFRAME];
        for j in 0..SYMBOLS_PER_SLOT {
            let symbol = slot * SYMBOLS_PER_SLOT + j;
            let (cells, kinds) = grid.symbol_split_mut(symbol);
            fill_symbol(grid_cfg, crs, traffic, seed, slot, j, occupied, cells, Some(kinds));
        }
    }
    Ok(grid)
}

impl ResourceGrid {
    fn symbol_split_mut(&mut self, symbol: usize) -> (&mut [Complex64], &mut [ReKind]) {
        let range = symbol * self.n_subcarriers..(symbol + 1) * self.n_subcarriers;
        (&mut self.cells[range.clone()], &mut self.kinds[range])
    }
}

/// Complex baseband samples at a declared rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBuffer {
    pub samples: Vec<Complex64>,
    pub sample_rate_hz: f64,
}

impl SampleBuffer {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }
}

/// OFDM modulator/demodulator pair with a cached FFT plan.
pub struct OfdmProcessor {
    cfg: GridConfig,
    ifft: std::sync::Arc<dyn rustfft::Fft<f64>>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl OfdmProcessor {
    pub fn new(cfg: &GridConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            ifft: planner.plan_fft_inverse(cfg.fft_size),
            fft: planner.plan_fft_forward(cfg.fft_size),
        })
    }

    /// Inverse transform of one grid column plus cyclic prefix.
    /// Unitary scaling, so symbol-body energy equals the column energy.
    pub fn modulate_symbol(&self, cells: &[Complex64], symbol_in_slot: usize) -> Vec<Complex64> {
        let n = self.cfg.fft_size;
        let cp = self.cfg.cp_len(symbol_in_slot);
        let mut body = vec![Complex64::new(0.0, 0.0); n];
        for (sc, &v) in cells.iter().enumerate() {
            body[self.cfg.subcarrier_bin(sc)] = v;
        }
        self.ifft.process(&mut body);
        let scale = 1.0 / (n as f64).sqrt();
        for v in body.iter_mut() {
            *v *= scale;
        }
        let mut out = Vec::with_capacity(cp + n);
        out.extend_from_slice(&body[n - cp..]);
        out.extend_from_slice(&body);
        out
    }

    /// Forward transform of one received symbol (prefix included) back to
    /// active resource elements.
    pub fn demodulate_symbol(
        &self,
        samples: &[Complex64],
        symbol_in_slot: usize,
    ) -> Result<Vec<Complex64>> {
        let n = self.cfg.fft_size;
        let cp = self.cfg.cp_len(symbol_in_slot);
        if samples.len() != cp + n {
            return Err(Error::DimensionMismatch(format!(
                "expected {} samples for symbol position {symbol_in_slot}, got {}",
                cp + n,
                samples.len()
            )));
        }
        let mut work = samples[cp..].to_vec();
        self.fft.process(&mut work);
        let scale = 1.0 / (n as f64).sqrt();
        let n_sc = self.cfg.active_subcarriers();
        Ok((0..n_sc)
            .map(|sc| work[self.cfg.subcarrier_bin(sc)] * scale)
            .collect())
    }
}

/// Full IFFT + cyclic-prefix synthesis of a grid.
pub fn synthesize_baseband(grid: &ResourceGrid, cfg: &GridConfig) -> Result<SampleBuffer> {
    if grid.n_subcarriers() != cfg.active_subcarriers() {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} subcarriers, config expects {}",
            grid.n_subcarriers(),
            cfg.active_subcarriers()
        )));
    }
    let ofdm = OfdmProcessor::new(cfg)?;
    let mut samples = Vec::with_capacity(
        grid.n_symbols() / SYMBOLS_PER_SLOT * cfg.samples_per_slot()
            + grid.n_symbols() % SYMBOLS_PER_SLOT * (cfg.fft_size + cfg.cp_len(1)),
    );
    for symbol in 0..grid.n_symbols() {
        let j = symbol % SYMBOLS_PER_SLOT;
        samples.extend(ofdm.modulate_symbol(grid.symbol_cells(symbol), j));
    }
    Ok(SampleBuffer {
        samples,
        sample_rate_hz: cfg.sample_rate_hz,
    })
}

/// Binary snapshot layout: magic, version, dimensions and key config
/// fields as little-endian u32/f64, then interleaved f32 re/im pairs in
/// subcarrier-major order (all symbols of subcarrier 0, then 1, ...).
pub const GRID_SNAPSHOT_MAGIC: &[u8; 8] = b"AMBCGRID";

pub fn write_grid_snapshot<W: std::io::Write>(
    grid: &ResourceGrid,
    cfg: &GridConfig,
    crs: &CrsConfig,
    mut w: W,
) -> std::io::Result<()> {
    w.write_all(GRID_SNAPSHOT_MAGIC)?;
    w.write_all(&1u32.to_le_bytes())?;
    w.write_all(&(grid.n_subcarriers() as u32).to_le_bytes())?;
    w.write_all(&(grid.n_symbols() as u32).to_le_bytes())?;
    w.write_all(&(cfg.bandwidth_rb as u32).to_le_bytes())?;
    w.write_all(&(cfg.fft_size as u32).to_le_bytes())?;
    w.write_all(&cfg.sample_rate_hz.to_le_bytes())?;
    w.write_all(&crs.cell_id.to_le_bytes())?;
    for sc in 0..grid.n_subcarriers() {
        for symbol in 0..grid.n_symbols() {
            let c = grid.cell(symbol, sc);
            w.write_all(&(c.re as f32).to_le_bytes())?;
            w.write_all(&(c.im as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_grid_snapshot<R: std::io::Read>(mut r: R) -> Result<ResourceGrid> {
    let bad = |m: &str| Error::InvalidConfig(format!("grid snapshot: {m}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::io("<snapshot>", e))?;
    if &magic != GRID_SNAPSHOT_MAGIC {
        return Err(bad("bad magic"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut u32buf).map_err(|e| Error::io("<snapshot>", e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != 1 {
        return Err(bad("unsupported version"));
    }
    let n_sc = read_u32(&mut r)? as usize;
    let n_symbols = read_u32(&mut r)? as usize;
    let _bw_rb = read_u32(&mut r)?;
    let _fft = read_u32(&mut r)?;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf).map_err(|e| Error::io("<snapshot>", e))?;
    let mut cellbuf = [0u8; 4];
    let mut read_u32b = |r: &mut R| -> Result<u32> {
        r.read_exact(&mut cellbuf).map_err(|e| Error::io("<snapshot>", e))?;
        Ok(u32::from_le_bytes(cellbuf))
    };
    let _cell_id = read_u32b(&mut r)?;
    let mut grid = ResourceGrid::empty(n_sc, n_symbols);
    let mut pair = [0u8; 8];
    for sc in 0..n_sc {
        for symbol in 0..n_symbols {
            r.read_exact(&mut pair).map_err(|e| Error::io("<snapshot>", e))?;
            let re = f32::from_le_bytes(pair[0..4].try_into().unwrap()) as f64;
            let im = f32::from_le_bytes(pair[4..8].try_into().unwrap()) as f64;
            grid.set(symbol, sc, Complex64::new(re, im), ReKind::Empty);
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_consistent() {
        let cfg = GridConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.active_subcarriers(), 600);
        assert_eq!(cfg.cp_len(0), 80);
        assert_eq!(cfg.cp_len(1), 72);
        // one slot must be exactly 0.5 ms of samples
        assert_eq!(cfg.samples_per_slot(), 7680);
        assert_eq!(cfg.samples_per_slot(), (cfg.sample_rate_hz * SLOT_S) as usize);
    }

    #[test]
    fn crs_positions_cell0() {
        let crs = CrsConfig::default();
        let pos: Vec<usize> = crs.positions(600).collect();
        assert_eq!(pos.len(), 100);
        assert_eq!(pos[0], 0);
        assert_eq!(pos[1], 6);
        assert_eq!(*pos.last().unwrap(), 594);
    }

    #[test]
    fn crs_positions_shift_with_cell_id() {
        let c0 = CrsConfig::default();
        let c1 = CrsConfig { cell_id: 1, ..CrsConfig::default() };
        let p0: Vec<usize> = c0.positions(600).collect();
        let p1: Vec<usize> = c1.positions(600).collect();
        assert_eq!(p1.len(), 100);
        for (a, b) in p0.iter().zip(&p1) {
            assert_eq!(b - a, 1);
        }
        // six cells of shifts, then it wraps
        let c6 = CrsConfig { cell_id: 6, ..CrsConfig::default() };
        assert_eq!(c6.frequency_shift(), 0);
    }

    #[test]
    fn crs_values_deterministic_and_unit_modulus() {
        let crs = CrsConfig::default();
        let grid = GridConfig::default();
        let a = generate_crs_symbols(&crs, &grid, 17, 4).unwrap();
        let b = generate_crs_symbols(&crs, &grid, 17, 4).unwrap();
        assert_eq!(a, b);
        for (_, v) in &a {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        // different slot gives different values somewhere
        let c = generate_crs_symbols(&crs, &grid, 18, 4).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.1 != y.1));
    }

    #[test]
    fn crs_wrong_symbol_rejected() {
        let crs = CrsConfig::default();
        let grid = GridConfig::default();
        let err = generate_crs_symbols(&crs, &grid, 0, 3).unwrap_err();
        assert!(matches!(err, Error::NotAPilotSymbol { symbol: 3 }));
    }

    #[test]
    fn constant_traffic_extremes() {
        let n = 1000;
        let off = traffic_occupancy(&TrafficModel::constant(0.0), 1, n);
        assert!(off.iter().all(|&o| !o));
        let on = traffic_occupancy(&TrafficModel::constant(1.0), 1, n);
        assert!(on.iter().all(|&o| o));
    }

    #[test]
    fn markov_duty_converges_to_stationary() {
        let model = TrafficModel::default(); // 0.1 / 0.1 -> duty 0.5
        assert!((model.stationary_duty() - 0.5).abs() < 1e-12);
        let occ = traffic_occupancy(&model, 0, 100_000);
        let duty = occ.iter().filter(|&&o| o).count() as f64 / occ.len() as f64;
        assert!((duty - 0.5).abs() < 0.01, "empirical duty {duty}");

        let skewed = TrafficModel {
            p_on_to_off: 0.3,
            p_off_to_on: 0.1,
            ..TrafficModel::default()
        };
        let occ = traffic_occupancy(&skewed, 7, 100_000);
        let duty = occ.iter().filter(|&&o| o).count() as f64 / occ.len() as f64;
        assert!((duty - 0.25).abs() < 0.01, "empirical duty {duty}");
    }

    #[test]
    fn grid_one_slot_traffic_off() {
        let grid = build_grid(
            &GridConfig::default(),
            &CrsConfig::default(),
            &TrafficModel::constant(0.0),
            0.0005,
            5,
        )
        .unwrap();
        assert_eq!(grid.n_slots(), 1);
        for symbol in 0..7 {
            for sc in 0..600 {
                let c = grid.cell(symbol, sc);
                if (symbol == 0 || symbol == 4) && sc % 6 == 0 {
                    assert_eq!(grid.kind(symbol, sc), ReKind::Crs);
                    assert!((c.norm() - 1.0).abs() < 1e-12);
                } else {
                    assert_eq!(grid.kind(symbol, sc), ReKind::Empty);
                    assert_eq!(c, Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn one_second_grid_has_2000_slots_4000_pilot_symbols() {
        let grid = build_grid(
            &GridConfig::default(),
            &CrsConfig::default(),
            &TrafficModel::constant(0.0),
            1.0,
            5,
        )
        .unwrap();
        assert_eq!(grid.n_slots(), 2000);
        let pilot_symbols = (0..grid.n_symbols())
            .filter(|&s| (0..600).any(|sc| grid.kind(s, sc) == ReKind::Crs))
            .count();
        assert_eq!(pilot_symbols, 4000);
        assert_eq!(grid.count_kind(ReKind::Crs), 4000 * 100);
    }

    #[test]
    fn full_duty_fills_every_data_cell() {
        let grid = build_grid(
            &GridConfig::default(),
            &CrsConfig::default(),
            &TrafficModel::constant(1.0),
            0.001,
            5,
        )
        .unwrap();
        for symbol in 0..grid.n_symbols() {
            for sc in 0..600 {
                match grid.kind(symbol, sc) {
                    ReKind::Data => assert!(grid.cell(symbol, sc).norm() > 0.0),
                    ReKind::Crs => {}
                    ReKind::Empty => panic!("empty cell at duty 1.0"),
                }
            }
        }
    }

    #[test]
    fn crs_persists_under_any_traffic() {
        // pilots appear in every slot even when nothing else does
        for traffic in [
            TrafficModel::constant(0.0),
            TrafficModel::constant(1.0),
            TrafficModel::default(),
        ] {
            let grid = build_grid(
                &GridConfig::default(),
                &CrsConfig::default(),
                &traffic,
                0.01,
                123,
            )
            .unwrap();
            for slot in 0..grid.n_slots() {
                for &j in &[0usize, 4] {
                    let symbol = slot * 7 + j;
                    let pilots = (0..600)
                        .filter(|&sc| grid.kind(symbol, sc) == ReKind::Crs)
                        .count();
                    assert_eq!(pilots, 100, "slot {slot} symbol {j} traffic {traffic:?}");
                }
            }
        }
    }

    #[test]
    fn grid_determinism() {
        let make = || {
            build_grid(
                &GridConfig::default(),
                &CrsConfig::default(),
                &TrafficModel::default(),
                0.02,
                42,
            )
            .unwrap()
        };
        assert_eq!(make(), make());
    }

    #[test]
    fn sub_slot_duration_rejected() {
        let err = build_grid(
            &GridConfig::default(),
            &CrsConfig::default(),
            &TrafficModel::default(),
            0.0004,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn zero_grid_synthesizes_to_zero() {
        let cfg = GridConfig::default();
        let grid = ResourceGrid::empty(600, 7);
        let buf = synthesize_baseband(&grid, &cfg).unwrap();
        assert_eq!(buf.samples.len(), 7680);
        assert!(buf.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn single_subcarrier_is_constant_modulus_exponential() {
        let cfg = GridConfig::default();
        let mut grid = ResourceGrid::empty(600, 1);
        grid.set(0, 137, Complex64::new(1.0, 0.0), ReKind::Data);
        let buf = synthesize_baseband(&grid, &cfg).unwrap();
        let body = &buf.samples[80..]; // past the cyclic prefix
        assert_eq!(body.len(), 1024);
        let expect = 1.0 / (1024.0f64).sqrt();
        for (i, s) in body.iter().enumerate() {
            assert!((s.norm() - expect).abs() < 1e-12, "sample {i}: {}", s.norm());
        }
    }

    #[test]
    fn parseval_energy_match() {
        // random grid: body energy equals grid energy under unitary scaling
        let cfg = GridConfig::default();
        let mut grid = ResourceGrid::empty(600, 14);
        for symbol in 0..14 {
            for sc in 0..600 {
                let k = keyrand::key4(77, symbol as u64, sc as u64, 0, 0);
                grid.set(symbol, sc, keyrand::gaussian_c(k), ReKind::Data);
            }
        }
        let buf = synthesize_baseband(&grid, &cfg).unwrap();
        // strip prefixes before summing
        let mut body_energy = 0.0;
        let mut cursor = 0;
        for symbol in 0..14 {
            let cp = cfg.cp_len(symbol % 7);
            cursor += cp;
            body_energy += buf.samples[cursor..cursor + 1024]
                .iter()
                .map(|s| s.norm_sqr())
                .sum::<f64>();
            cursor += 1024;
        }
        let grid_energy = grid.energy();
        assert!(
            (body_energy - grid_energy).abs() / grid_energy < 1e-9,
            "time {body_energy} vs grid {grid_energy}"
        );
    }

    #[test]
    fn ofdm_round_trip_recovers_cells() {
        let cfg = GridConfig::default();
        let ofdm = OfdmProcessor::new(&cfg).unwrap();
        let cells: Vec<Complex64> = (0..600)
            .map(|sc| keyrand::gaussian_c(keyrand::key4(3, sc as u64, 0, 0, 0)))
            .collect();
        let samples = ofdm.modulate_symbol(&cells, 0);
        assert_eq!(samples.len(), 80 + 1024);
        // prefix is a copy of the tail
        for i in 0..80 {
            assert_eq!(samples[i], samples[1024 + i]);
        }
        let back = ofdm.demodulate_symbol(&samples, 0).unwrap();
        for (a, b) in cells.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn synthesize_dimension_mismatch() {
        let cfg = GridConfig::default();
        let grid = ResourceGrid::empty(300, 7);
        assert!(matches!(
            synthesize_baseband(&grid, &cfg),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn snapshot_round_trip() {
        let cfg = GridConfig::default();
        let crs = CrsConfig::default();
        let grid = build_grid(&cfg, &crs, &TrafficModel::constant(1.0), 0.001, 9).unwrap();
        let mut buf = Vec::new();
        write_grid_snapshot(&grid, &cfg, &crs, &mut buf).unwrap();
        let back = read_grid_snapshot(buf.as_slice()).unwrap();
        assert_eq!(back.n_subcarriers(), grid.n_subcarriers());
        assert_eq!(back.n_symbols(), grid.n_symbols());
        for symbol in 0..grid.n_symbols() {
            for sc in 0..grid.n_subcarriers() {
                let a = grid.cell(symbol, sc);
                let b = back.cell(symbol, sc);
                assert!((a.re - b.re).abs() < 1e-6 && (a.im - b.im).abs() < 1e-6);
            }
        }
    }
}
