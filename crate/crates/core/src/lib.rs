pub mod channel;
pub mod error;
pub mod linalg;
pub mod nonlinear;
pub mod os_mode;
pub mod profiles;
pub mod spectrum;
pub mod spectral;

pub use error::{Error, Result};
pub use profiles::{AdmissibilityReport, Profile};
pub use spectral::{GridFunction, SpectralGrid};
