//! Tapered fixed-point (TFX) arithmetic and per-layer post-training quantization.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. It provides:
//!
//! * [`formats`]: bit-exact encode/decode/rounding for tapered fixed-point and
//!   two's-complement fixed-point, plus exhaustive value enumeration.
//! * [`select`]: per-layer format selection from weight/activation statistics.
//! * [`dot`]: a wide exact accumulator (quire) with a single final rounding.
//! * [`nn`]: a small float/quantized inference engine over a layer list.
//! * [`sim`]: an analytic output-stationary systolic-array cost model.
//!
//! File formats, datasets and the command-line front end live in the `tent`
//! crate.
#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod dot;
pub mod dyadic;
pub mod formats;
pub mod nn;
pub mod select;
pub mod sim;

pub use dot::{dot, quire_width, DecodedOperand, DotError, Quire};
pub use dyadic::Dyadic;
pub use formats::{
    Code, DynamicRange, Format, FormatError, FormatExtremes, FormatKind, FxpCode, FxpConfig,
    RoundingTable, TfxCode, TfxConfig, UnpackedTfx,
};
pub use select::{select_fxp_params, select_params, tensor_stats, FormatAssignment, LayerStats};
