//! Spectral tools for Hessian-based quantization analysis: matrix-free
//! Lanczos, stochastic Lanczos quadrature for `Tr(H^{1/2})`, Hutchinson
//! trace estimation, incoherence transforms and LDLQ rounding.

pub mod budget;
pub mod hutchinson;
pub mod incoherence;
pub mod lanczos;
pub mod ldlq;
pub mod operator;
pub mod random;
pub mod slq;
pub mod tridiag;

pub use budget::{precision_noise_width, required_bits, FP16_UNIT_ROUNDOFF, QUOTED_HALF_PRECISION_EPS};
pub use hutchinson::{hutchinson_trace, hutchinson_variance_bound, HutchinsonEstimate};
pub use incoherence::{eigenvector_incoherence, incoherence_mu, incoherence_threshold, IncoherenceTransform, TransformKind};
pub use lanczos::{lanczos_batch, lanczos_tridiag, LanczosResult};
pub use ldlq::{ldl_factor, ldlq_quantize, LdlFactors, LdlqPlan, LdlqResult, Quantizer};
pub use operator::{symmetry_defect, DenseOperator, FnOperator, SymmetricOperator};
pub use slq::{
    shift_to_psd, slq_param_sizing, slq_quadrature, slq_trace_sqrt, ProbeKind, ProbeQuadrature, SlqConfig,
    SlqSizing, SpectralEstimate,
};
pub use tridiag::{gauss_rule, GaussRule};
