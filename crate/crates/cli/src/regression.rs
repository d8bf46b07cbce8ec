//! Measured constants compared against a stored baseline.

use std::path::Path;

use cpflow::channel::ChannelSolver;
use cpflow::spectrum::neutral_search;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::{channel_constants, estimate_sweep, grid, neutral_config};
use crate::config::Settings;
use crate::output::{Report, Resolution, SCHEMA_VERSION};
use crate::CliError;

/// Resolution of the channel constants; the neutral point follows `--N`.
const CHANNEL_N: usize = 32;
const CHANNEL_K: usize = 8;
const SWEEP_N: usize = 64;

/// Deterministic quantities are held to roundoff; the neutral point to the
/// agreement expected between neighbouring resolutions.
const EXACT_TOL: f64 = 1e-9;
const NEUTRAL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub value: f64,
    pub rel_tol: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baseline {
    pub schema_version: u32,
    pub version: String,
    pub entries: Vec<Entry>,
}

fn entry(name: &str, value: f64, rel_tol: f64, n: usize, k: Option<usize>) -> Entry {
    Entry { name: name.into(), value, rel_tol, n, k }
}

pub fn measure(s: &mut Settings) -> Result<Vec<Entry>, CliError> {
    let p = s.resolve_profile()?;
    let xi0 = s.xi0.unwrap_or(1.0);
    let seed = s.seed.unwrap_or(0);
    let sample = cpflow::nonlinear::SampleConfig {
        samples: s.samples.unwrap_or(20),
        seed,
        ..Default::default()
    };
    let solver = ChannelSolver::new(p, xi0, CHANNEL_K, grid(CHANNEL_N)?)?;
    let (kappa0, c1) = channel_constants(&solver, &sample)?;
    let sweep = estimate_sweep(&p, SWEEP_N, seed)?;
    let cfg = neutral_config(s);
    let (point, _) = neutral_search(&cfg)?;
    let k = Some(CHANNEL_K);
    Ok(vec![
        entry("kappa0", kappa0, EXACT_TOL, CHANNEL_N, k),
        entry("c1", c1, EXACT_TOL, CHANNEL_N, k),
        entry("estimate_ratio_max", sweep.max_ratio, EXACT_TOL, SWEEP_N, None),
        entry("estimate_ratio_spread", sweep.spread, EXACT_TOL, SWEEP_N, None),
        entry("neutral_reA1", -3.0 * point.a1, NEUTRAL_TOL, cfg.n, None),
        entry("neutral_T0", point.t0, NEUTRAL_TOL, cfg.n, None),
    ])
}

/// Records or compares; returns the report and whether everything held.
pub fn run(s: &mut Settings, baseline: &Path, record: bool) -> Result<(Report, bool), CliError> {
    let stored = if record {
        None
    } else {
        let text = std::fs::read_to_string(baseline).map_err(|e| {
            CliError::Config(format!("baseline {}: {e} (use --record to create it)", baseline.display()))
        })?;
        let b: Baseline = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("baseline {}: {e}", baseline.display())))?;
        Some(b)
    };
    let measured = measure(s)?;
    let n = Some(neutral_config(s).n);
    let Some(stored) = stored else {
        let b = Baseline {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").into(),
            entries: measured.clone(),
        };
        let text = serde_json::to_string_pretty(&b).expect("baseline serializes");
        std::fs::write(baseline, text + "\n")
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", baseline.display())))?;
        let report = Report {
            result: json!({ "recorded": baseline, "entries": measured }),
            resolution: Resolution { n, k: Some(CHANNEL_K) },
            csv: None,
        };
        return Ok((report, true));
    };
    let mut all = true;
    let rows: Vec<_> = stored
        .entries
        .iter()
        .map(|b| {
            let m = measured.iter().find(|m| m.name == b.name);
            let rel = m.map(|m| (m.value - b.value).abs() / b.value.abs().max(f64::MIN_POSITIVE));
            let pass = rel.is_some_and(|r| r <= b.rel_tol);
            all &= pass;
            json!({
                "name": b.name,
                "baseline": b.value,
                "measured": m.map(|m| m.value),
                "rel_diff": rel,
                "rel_tol": b.rel_tol,
                "baseline_N": b.n,
                "measured_N": m.map(|m| m.n),
                "pass": pass,
            })
        })
        .collect();
    let report = Report {
        result: json!({ "baseline": baseline, "entries": rows, "pass": all }),
        resolution: Resolution { n, k: Some(CHANNEL_K) },
        csv: None,
    };
    Ok((report, all))
}
