//! Scalar quantizer design, Bussgang gains, the covariance transform through
//! quantization and the resulting quantization-error covariance.

mod corrmap;
mod design;
mod transform;

pub use corrmap::{build_correlation_map, CorrelationMap, MapCache};
pub use design::{design_quantizer, QuantizerSpec};
pub use transform::{bussgang_gains, quant_error_cov, transform_cov, QuantizerBank};

use crate::linalg::C64;

/// Quantizes real samples with automatic gain control: each sample is divided
/// by `agc_std`, mapped to its bin representative and scaled back.
pub fn quantize_samples(spec: &QuantizerSpec, samples: &[f64], agc_std: f64) -> Vec<f64> {
    samples.iter().map(|&x| agc_std * spec.quantize(x / agc_std)).collect()
}

/// Quantizes real and imaginary parts independently; `agc_std` is the
/// standard deviation of each component.
pub fn quantize_complex(spec: &QuantizerSpec, samples: &[C64], agc_std: f64) -> Vec<C64> {
    samples
        .iter()
        .map(|z| C64::new(agc_std * spec.quantize(z.re / agc_std), agc_std * spec.quantize(z.im / agc_std)))
        .collect()
}
