//! Numerical building blocks shared by the pricing and asymptotic modules.

pub mod hermite;
pub mod minimize;
pub mod quad;
pub mod special;

pub use hermite::GaussHermite;
pub use quad::{integrate, log_integrate_half_line, log_integrate_scaled};
pub use special::{erfcx, log_norm_cdf, log_norm_pdf, mills_ratio, norm_cdf, norm_inv, norm_pdf};
