use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use cpflow::channel::SymmetryClass;
use cpflow::Profile;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    Poiseuille,
    Couette,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Csv,
}

/// Every tunable of every command. The same record is read from the config
/// file (keys spelled like the flags) and from the command line; flags win.
/// After defaults are applied it is the resolved configuration written into
/// each result file.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Settings {
    /// Flat key-value config file (`key = value` per line).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Named base flow, used when A, B, C are not given.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileKind>,
    /// Flux of the named profile.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flux: Option<f64>,
    #[arg(long = "A", global = true, allow_negative_numbers = true)]
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[arg(long = "B", global = true, allow_negative_numbers = true)]
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[arg(long = "C", global = true, allow_negative_numbers = true)]
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,

    /// Chebyshev degree in y.
    #[arg(long = "N", global = true)]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Fourier cutoff in x.
    #[arg(long = "K", global = true)]
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Base wavenumber of the periodic cell.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi0: Option<f64>,
    /// Wavenumber of a single mode.
    #[arg(long, global = true, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    /// Wavenumber of the eigenvalue problem.
    #[arg(long = "T", global = true)]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,

    /// Mode forcing h(y), real part.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<String>,
    /// Mode forcing h(y), imaginary part.
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_im: Option<String>,
    /// Streamwise body force f(x, y).
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    /// Wall-normal body force g(x, y).
    #[arg(long, global = true, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,

    /// Radius of the Picard ball; defaults to the measured contraction radius.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub symmetry: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Random samples per measured constant.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Starting points of the uniqueness probe.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub starts: Option<usize>,

    #[arg(long = "reA-min", global = true)]
    #[serde(rename = "reA-min", skip_serializing_if = "Option::is_none")]
    pub re_min: Option<f64>,
    #[arg(long = "reA-max", global = true)]
    #[serde(rename = "reA-max", skip_serializing_if = "Option::is_none")]
    pub re_max: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_min: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,

    /// Result file; defaults to `$CPFLOW_OUTPUT_DIR/<command>.<format>`,
    /// or standard output when that is unset.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

macro_rules! overlay {
    ($top:expr, $base:expr; $($field:ident),*) => {
        Settings { config: $top.config.or($base.config), $($field: $top.$field.or($base.$field)),* }
    };
}

impl Settings {
    /// Entries of `self`, falling back to `base`.
    pub fn over(self, base: Settings) -> Settings {
        overlay!(self, base; profile, flux, a, b, c, n, k, xi0, xi, t, tol, max_iter, h, h_im, f, g, delta,
            symmetry, seed, samples, starts, re_min, re_max, t_min, t_max, output, format, threads)
    }

    pub fn from_file(path: &Path) -> Result<Settings, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let parsed: Settings =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {}", path.display(), e.message())))?;
        Ok(parsed)
    }

    /// Resolves `A, B, C` and records them. Explicit coefficients take
    /// precedence; otherwise the named profile is used (Poiseuille with
    /// flux 4 when nothing is given).
    pub fn resolve_profile(&mut self) -> Result<Profile, CliError> {
        let explicit = self.a.is_some() || self.b.is_some() || self.c.is_some();
        if explicit && (self.profile.is_some() || self.flux.is_some()) {
            return Err(CliError::Config("give either A/B/C or profile/flux, not both".into()));
        }
        let p = if explicit {
            Profile::new(self.a.unwrap_or(0.0), self.b.unwrap_or(0.0), self.c.unwrap_or(0.0))
        } else {
            let kind = *self.profile.get_or_insert(ProfileKind::Poiseuille);
            let flux = *self.flux.get_or_insert(4.0);
            match kind {
                ProfileKind::Poiseuille => Profile::poiseuille_for_flux(flux),
                // F = B(1 + y) carries flux 2B
                ProfileKind::Couette => Profile::couette(flux / 2.0),
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        self.a = Some(p.a());
        self.b = Some(p.b());
        self.c = Some(p.c());
        Ok(p)
    }

    pub fn symmetry_class(&self) -> Result<Option<SymmetryClass>, CliError> {
        self.symmetry
            .as_deref()
            .map(SymmetryClass::from_str)
            .transpose()
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn check(&self) -> Result<(), CliError> {
        let positive = [
            ("N", self.n.map(|v| v as f64)),
            ("K", self.k.map(|v| v as f64)),
            ("xi0", self.xi0),
            ("T", self.t),
            ("tol", self.tol),
            ("max-iter", self.max_iter.map(|v| v as f64)),
            ("delta", self.delta),
            ("samples", self.samples.map(|v| v as f64)),
            ("starts", self.starts.map(|v| v as f64)),
            ("threads", self.threads.map(|v| v as f64)),
            ("flux", self.flux),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(CliError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (self.re_min, self.re_max) {
            if !(0.0 < lo && lo < hi) {
                return Err(CliError::Config(format!("need 0 < reA-min < reA-max, got {lo}, {hi}")));
            }
        }
        if let (Some(lo), Some(hi)) = (self.t_min, self.t_max) {
            if !(0.0 < lo && lo < hi) {
                return Err(CliError::Config(format!("need 0 < t-min < t-max, got {lo}, {hi}")));
            }
        }
        if let Some(n) = self.n {
            if n < 8 {
                return Err(CliError::Config(format!("N must be at least 8, got {n}")));
            }
        }
        self.symmetry_class()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str("N = 40\nxi = 2.0\nh = \"y\"").unwrap();
        let flags = Settings { n: Some(64), ..Settings::default() };
        let s = flags.over(file);
        assert_eq!((s.n, s.xi, s.h.as_deref()), (Some(64), Some(2.0), Some("y")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<Settings>("Nx = 4").is_err());
        assert!(toml::from_str::<Settings>("N = -4").is_err());
    }

    #[test]
    fn profile_resolution() {
        let mut s = Settings::default();
        assert_eq!(s.resolve_profile().unwrap(), Profile::new(-1.0, 0.0, 3.0).unwrap());
        let mut s = Settings { profile: Some(ProfileKind::Couette), flux: Some(2.0), ..Settings::default() };
        assert_eq!(s.resolve_profile().unwrap(), Profile::new(0.0, 1.0, 1.0).unwrap());
        let mut s = Settings { a: Some(-1.0), flux: Some(2.0), ..Settings::default() };
        assert!(s.resolve_profile().is_err());
    }
}
