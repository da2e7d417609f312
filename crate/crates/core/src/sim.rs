//! Analytic cost model of an output-stationary systolic array.
//!
//! Each conv/dense layer is lowered to a GEMM `(M, K, N)`: `M` output
//! channels/features map onto array rows, `N` output pixels (times batch) onto
//! columns, and `K` is the reduction each PE accumulates in place. A tile of
//! `rows x cols` outputs takes `K + rows + cols - 2` cycles (fill, `K`
//! accumulation steps, drain), so
//!
//! ```text
//! cycles = ceil(M / rows) * ceil(N / cols) * (K + rows + cols - 2)
//! ```
//!
//! DRAM transfers are double-buffered against compute: the first layer's
//! transfer is exposed, after which layer `l` computes while layer `l + 1`
//! streams in.

use alloc::vec::Vec;

use crate::formats::FormatKind;
use crate::nn::{LayerKind, QuantizedModel};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("layer {layer}: one tile needs {needed} bytes of SRAM, only {available} available")]
    TileOverflow { layer: usize, needed: u64, available: u64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

/// PE grid. The dataflow is always output-stationary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { rows: 16, cols: 16 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MemoryConfig {
    pub sram_bytes: u64,
    pub dram_bytes_per_cycle: f64,
    pub dram_latency_cycles: u64,
}

impl Default for MemoryConfig {
    /// Three 108 kB scratchpads; bandwidth and latency are illustrative.
    fn default() -> Self {
        MemoryConfig {
            sram_bytes: 3 * 108 * 1024,
            dram_bytes_per_cycle: 8.0,
            dram_latency_cycles: 100,
        }
    }
}

/// Energy coefficients in joules.
///
/// The defaults are ILLUSTRATIVE magnitudes for a 45 nm-class process, not
/// measured values. MAC energy scales as `(n / 8)^mac_width_exponent` from the
/// 8-bit fixed-point figure, and tapered fixed-point MACs cost
/// `tfx_mac_ratio` times the fixed-point MAC at the same width.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CostTable {
    pub fxp_mac_8bit_j: f64,
    pub mac_width_exponent: f64,
    pub tfx_mac_ratio: f64,
    pub sram_byte_j: f64,
    pub dram_byte_j: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        CostTable {
            fxp_mac_8bit_j: 0.23e-12,
            mac_width_exponent: 2.0,
            tfx_mac_ratio: 1.25,
            sram_byte_j: 1.25e-12,
            dram_byte_j: 160e-12,
        }
    }
}

impl CostTable {
    pub fn mac_energy(&self, kind: FormatKind, bits: u32) -> f64 {
        let fxp = self.fxp_mac_8bit_j * libm::pow(bits as f64 / 8.0, self.mac_width_exponent);
        match kind {
            FormatKind::Fxp => fxp,
            FormatKind::Tfx => fxp * self.tfx_mac_ratio,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let all = [
            self.fxp_mac_8bit_j,
            self.mac_width_exponent,
            self.tfx_mac_ratio,
            self.sram_byte_j,
            self.dram_byte_j,
        ];
        if all.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(SimError::InvalidConfig("cost coefficients must be finite and non-negative"))
        }
    }
}

/// Per-inference totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimReport {
    /// End-to-end cycles including exposed DRAM time.
    pub cycles: u64,
    /// Sum of per-layer array cycles.
    pub compute_cycles: u64,
    pub macs: u64,
    pub utilization: f64,
    pub dram_bytes: u64,
    pub sram_bytes: u64,
    pub mac_energy_j: f64,
    pub energy_j: f64,
    /// `energy_j * cycles / clock_hz`.
    pub edp: f64,
}

/// Cycles and utilization of one GEMM on the array.
pub fn schedule_layer(m: usize, k: usize, n: usize, array: ArrayConfig) -> (u64, f64) {
    let tiles = m.div_ceil(array.rows) as u64 * n.div_ceil(array.cols) as u64;
    let cycles = tiles * (k + array.rows + array.cols - 2) as u64;
    let utilization = (m as f64 * n as f64 * k as f64) / (cycles as f64 * (array.rows * array.cols) as f64);
    (cycles, utilization)
}

/// `(M, K, N)` of a layer, or `None` for layers with no MACs.
pub fn lower_to_gemm(kind: &LayerKind, input_shape: &[usize], batch: usize) -> Option<(usize, usize, usize)> {
    kind.gemm_dims(input_shape, batch)
}

/// Cost of one weighted layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerCost {
    pub layer: usize,
    pub gemm: (usize, usize, usize),
    pub compute_cycles: u64,
    pub transfer_cycles: u64,
    pub dram_bytes: u64,
    pub sram_bytes: u64,
    pub macs: u64,
    pub mac_energy_j: f64,
}

fn bytes_for(elements: u64, bits: u32) -> u64 {
    (elements * bits as u64).div_ceil(8)
}

/// Per-layer costs of a quantized model for a batch of one.
pub fn layer_costs(
    model: &QuantizedModel,
    array: ArrayConfig,
    mem: MemoryConfig,
    costs: &CostTable,
) -> Result<Vec<LayerCost>, SimError> {
    if array.rows == 0 || array.cols == 0 {
        return Err(SimError::InvalidConfig("array dimensions must be positive"));
    }
    if mem.dram_bytes_per_cycle.is_nan() || mem.dram_bytes_per_cycle <= 0.0 || mem.sram_bytes == 0 {
        return Err(SimError::InvalidConfig("memory parameters must be positive"));
    }
    costs.validate()?;
    let shapes = model.shapes();
    let mut out = Vec::new();
    for (i, layer) in model.layers().iter().enumerate() {
        let kind = layer.op.kind();
        let Some((m, k, n)) = lower_to_gemm(&kind, &shapes[i], 1) else {
            continue;
        };
        let wf = layer.op.weight_format().expect("weighted layer");
        let (w_bits, a_bits, o_bits) = (wf.bits(), model.slot_format(i).bits(), layer.output_format.bits());
        let tile_bytes = bytes_for((array.rows * k) as u64, w_bits)
            + bytes_for((k * array.cols) as u64, a_bits)
            + bytes_for((array.rows * array.cols) as u64, o_bits);
        if tile_bytes > mem.sram_bytes {
            return Err(SimError::TileOverflow {
                layer: i,
                needed: tile_bytes,
                available: mem.sram_bytes,
            });
        }
        let in_elems: usize = shapes[i].iter().product();
        let out_elems: usize = shapes[i + 1].iter().product();
        let dram_bytes = bytes_for((m * k) as u64, w_bits)
            + bytes_for(in_elems as u64, a_bits)
            + bytes_for(out_elems as u64, o_bits);
        // Weights are re-read for every column tile, inputs for every row tile.
        let (row_tiles, col_tiles) = (m.div_ceil(array.rows) as u64, n.div_ceil(array.cols) as u64);
        let sram_bytes = bytes_for((m * k) as u64 * col_tiles, w_bits)
            + bytes_for((k * n) as u64 * row_tiles, a_bits)
            + bytes_for((m * n) as u64, o_bits);
        let (compute_cycles, _) = schedule_layer(m, k, n, array);
        let transfer_cycles =
            libm::ceil(dram_bytes as f64 / mem.dram_bytes_per_cycle) as u64 + mem.dram_latency_cycles;
        let macs = (m * k * n) as u64;
        out.push(LayerCost {
            layer: i,
            gemm: (m, k, n),
            compute_cycles,
            transfer_cycles,
            dram_bytes,
            sram_bytes,
            macs,
            mac_energy_j: macs as f64 * costs.mac_energy(wf.kind(), wf.bits()),
        });
    }
    Ok(out)
}

pub fn simulate_model(
    model: &QuantizedModel,
    array: ArrayConfig,
    mem: MemoryConfig,
    costs: &CostTable,
    clock_hz: f64,
) -> Result<SimReport, SimError> {
    if clock_hz.is_nan() || clock_hz <= 0.0 {
        return Err(SimError::InvalidConfig("clock must be positive"));
    }
    let layers = layer_costs(model, array, mem, costs)?;
    if layers.is_empty() {
        return Ok(SimReport::default());
    }
    let compute_cycles: u64 = layers.iter().map(|l| l.compute_cycles).sum();
    let mut cycles = layers[0].transfer_cycles;
    for (i, l) in layers.iter().enumerate() {
        let next = layers.get(i + 1).map_or(0, |n| n.transfer_cycles);
        cycles += l.compute_cycles.max(next);
    }
    let macs: u64 = layers.iter().map(|l| l.macs).sum();
    let dram_bytes: u64 = layers.iter().map(|l| l.dram_bytes).sum();
    let sram_bytes: u64 = layers.iter().map(|l| l.sram_bytes).sum();
    let mac_energy_j: f64 = layers.iter().map(|l| l.mac_energy_j).sum();
    let energy_j = mac_energy_j + sram_bytes as f64 * costs.sram_byte_j + dram_bytes as f64 * costs.dram_byte_j;
    Ok(SimReport {
        cycles,
        compute_cycles,
        macs,
        utilization: macs as f64 / (compute_cycles as f64 * (array.rows * array.cols) as f64),
        dram_bytes,
        sram_bytes,
        mac_energy_j,
        energy_j,
        edp: energy_j * (cycles as f64 / clock_hz),
    })
}

/// One simulated point of a format/bit-width sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub kind: FormatKind,
    pub bits: u32,
    pub report: SimReport,
}

/// Simulates every model of a sweep with the same hardware configuration.
pub fn edp_sweep<'a, I>(
    models: I,
    array: ArrayConfig,
    mem: MemoryConfig,
    costs: &CostTable,
    clock_hz: f64,
) -> Result<Vec<SweepPoint>, SimError>
where
    I: IntoIterator<Item = &'a QuantizedModel>,
{
    models
        .into_iter()
        .map(|m| {
            Ok(SweepPoint {
                kind: m.policy().kind(),
                bits: m.bits(),
                report: simulate_model(m, array, mem, costs, clock_hz)?,
            })
        })
        .collect()
}
