//! Per-layer format selection from max-abs statistics.
//!
//! Tapered fixed-point: the unary run limit `IS` is `floor(amax) + 1`, clamped
//! to the bit width, for both weights and activations. Weights below 0.5 in
//! magnitude additionally get a negative power-of-two scale
//! `SC = floor(log2(amax)) + 1`. Activations are never scaled.
//!
//! Fixed-point baseline: the largest fraction width whose positive maximum
//! still covers `amax`.

use crate::formats::{FormatError, FxpConfig, TfxConfig, MAX_BITS, MAX_SCALE, MIN_BITS, MIN_SCALE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SelectError {
    #[error("empty tensor")]
    EmptyTensor,
    #[error("non-finite value in tensor")]
    NonFinite,
    #[error("invalid statistic {0} (must be finite and non-negative)")]
    InvalidStat(f64),
    #[error(transparent)]
    Format(#[from] FormatError),
}

/// Max-abs statistics of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerStats {
    pub w_amax: f64,
    pub a_amax: f64,
}

/// Selected tapered fixed-point parameters for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FormatAssignment {
    pub is_w: u32,
    pub is_a: u32,
    pub sc_w: i32,
    pub n: u32,
}

impl FormatAssignment {
    pub fn weight_format(&self) -> TfxConfig {
        TfxConfig::new(self.n, self.is_w, self.sc_w).expect("assignment invariants")
    }

    pub fn activation_format(&self) -> TfxConfig {
        TfxConfig::new(self.n, self.is_a, 0).expect("assignment invariants")
    }
}

/// Maximum absolute value of a non-empty finite sequence.
pub fn tensor_stats<I>(values: I) -> Result<f64, SelectError>
where
    I: IntoIterator,
    I::Item: Into<f64>,
{
    let mut it = values.into_iter().peekable();
    if it.peek().is_none() {
        return Err(SelectError::EmptyTensor);
    }
    let mut amax = 0.0f64;
    for v in it {
        let v: f64 = v.into();
        if !v.is_finite() {
            return Err(SelectError::NonFinite);
        }
        amax = amax.max(libm::fabs(v));
    }
    Ok(amax)
}

fn check_stat(v: f64) -> Result<(), SelectError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(SelectError::InvalidStat(v))
    }
}

fn check_width(n: u32) -> Result<(), SelectError> {
    if (MIN_BITS..=MAX_BITS).contains(&n) {
        Ok(())
    } else {
        Err(FormatError::UnsupportedWidth(n).into())
    }
}

/// `min(floor(amax) + 1, n)`.
pub fn select_run_limit(amax: f64, n: u32) -> u32 {
    let whole = libm::floor(amax);
    if whole + 1.0 <= n as f64 {
        whole as u32 + 1
    } else {
        n
    }
}

/// Weight scale: 0 unless `amax < 0.5`, then `floor(log2(amax)) + 1` clamped
/// to the representable scale range. An all-zero tensor gets 0.
pub fn select_scale(amax: f64) -> i32 {
    if amax >= 0.5 || amax == 0.0 {
        return 0;
    }
    // frexp gives amax = mant * 2^e with mant in [0.5, 1): floor(log2) = e - 1.
    let (_, e) = libm::frexp(amax);
    e.clamp(MIN_SCALE, MAX_SCALE)
}

pub fn select_params(stats: LayerStats, n: u32) -> Result<FormatAssignment, SelectError> {
    check_stat(stats.w_amax)?;
    check_stat(stats.a_amax)?;
    check_width(n)?;
    Ok(FormatAssignment {
        is_w: select_run_limit(stats.w_amax, n),
        is_a: select_run_limit(stats.a_amax, n),
        sc_w: select_scale(stats.w_amax),
        n,
    })
}

/// Largest `frac_bits` in `1..n` with `amax <= max_pos`; 1 when none covers it.
pub fn select_fxp_params(amax: f64, n: u32) -> Result<FxpConfig, SelectError> {
    check_stat(amax)?;
    check_width(n)?;
    let top = ((1u64 << (n - 1)) - 1) as f64;
    let frac = (1..n)
        .rev()
        .find(|&fb| amax <= top / (1u64 << fb) as f64)
        .unwrap_or(1);
    Ok(FxpConfig::new(n, frac)?)
}

/// Fixed-point baseline assignment: one format for weights, one for outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FxpAssignment {
    pub weight: FxpConfig,
    pub activation: FxpConfig,
}

pub fn select_fxp_assignment(stats: LayerStats, n: u32) -> Result<FxpAssignment, SelectError> {
    Ok(FxpAssignment {
        weight: select_fxp_params(stats.w_amax, n)?,
        activation: select_fxp_params(stats.a_amax, n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::Format;

    fn stats(w: f64, a: f64) -> LayerStats {
        LayerStats { w_amax: w, a_amax: a }
    }

    #[test]
    fn tensor_stats_examples() {
        assert_eq!(tensor_stats([-2.12f64, 0.3, 1.17]).unwrap(), 2.12);
        assert_eq!(tensor_stats([0.0f32; 4]).unwrap(), 0.0);
        assert_eq!(tensor_stats([-0.74f64, 0.45]).unwrap(), 0.74);
        assert!(matches!(tensor_stats(core::iter::empty::<f64>()), Err(SelectError::EmptyTensor)));
        assert!(matches!(tensor_stats([f64::NAN]), Err(SelectError::NonFinite)));
    }

    #[test]
    fn run_limit_and_scale_examples() {
        let a = select_params(stats(2.12, 10.21), 8).unwrap();
        assert_eq!((a.is_w, a.sc_w, a.is_a), (3, 0, 8));
        assert_eq!(select_params(stats(0.3, 0.0), 8).unwrap().sc_w, -1);
        assert_eq!(select_params(stats(0.25, 0.0), 8).unwrap().sc_w, -1);
        assert_eq!(select_params(stats(0.49, 0.0), 8).unwrap().sc_w, -1);
        assert_eq!(select_params(stats(0.5, 0.0), 8).unwrap().sc_w, 0);
        assert_eq!(select_params(stats(0.001, 0.0), 8).unwrap().sc_w, -4);
        assert_eq!(select_params(stats(7.0, 0.0), 8).unwrap().is_w, 8);
        assert_eq!(select_params(stats(6.99, 0.0), 8).unwrap().is_w, 7);
    }

    #[test]
    fn zero_tensor_is_degenerate() {
        let a = select_params(stats(0.0, 0.0), 6).unwrap();
        assert_eq!((a.is_w, a.sc_w, a.is_a), (1, 0, 1));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(select_params(stats(-1.0, 0.0), 8).is_err());
        assert!(select_params(stats(f64::INFINITY, 0.0), 8).is_err());
        assert!(select_params(stats(1.0, 1.0), 1).is_err());
        assert!(select_params(stats(1.0, 1.0), 17).is_err());
    }

    #[test]
    fn fxp_examples_match_scan_over_extremes() {
        // Independent route: scan every frac width against enumerated extremes.
        let scan = |amax: f64, n: u32| {
            (1..n)
                .filter(|&fb| Format::Fxp(FxpConfig::new(n, fb).unwrap()).extremes().max_pos >= amax)
                .max()
                .unwrap_or(1)
        };
        for (amax, want) in [(2.12, 5), (0.4, 7), (200.0, 1)] {
            assert_eq!(scan(amax, 8), want);
            assert_eq!(select_fxp_params(amax, 8).unwrap().frac_bits(), want);
        }
        for i in 0..400 {
            let amax = i as f64 * 0.173;
            for n in 2..=10 {
                assert_eq!(select_fxp_params(amax, n).unwrap().frac_bits(), scan(amax, n));
            }
        }
    }

    #[test]
    fn coverage_of_weights() {
        // |min_neg| >= w_amax whenever w_amax <= n.
        for n in 2..=12u32 {
            for i in 0..=(n * 100) {
                let w = i as f64 / 100.0;
                let a = select_params(stats(w, 0.0), n).unwrap();
                let e = Format::Tfx(a.weight_format()).extremes();
                assert!(-e.min_neg >= w, "n={n} w={w} {a:?}");
                assert_eq!(a.sc_w < 0, w < 0.5 && w > 0.0);
            }
        }
    }
}
