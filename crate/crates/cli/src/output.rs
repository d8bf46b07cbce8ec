use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::config::{Format, Settings};
use crate::CliError;

/// Bumped on any breaking change to the JSON layout or CSV columns.
pub const SCHEMA_VERSION: u32 = 1;

pub const OUTPUT_DIR_VAR: &str = "CPFLOW_OUTPUT_DIR";

/// Discretization the reported numbers were computed at.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct Resolution {
    #[serde(rename = "N")]
    pub n: Option<usize>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
}

pub struct Report {
    pub result: Value,
    pub resolution: Resolution,
    pub csv: Option<Vec<u8>>,
}

#[derive(Serialize)]
struct Toolkit {
    name: &'static str,
    version: &'static str,
}

/// Everything that identifies a run; a pure function of the configuration.
#[derive(Serialize)]
struct Header<'a> {
    schema_version: u32,
    toolkit: Toolkit,
    command: &'a str,
    config: &'a Settings,
    resolution: Resolution,
}

/// Wall-clock facts, kept apart so the rest of the file is reproducible.
#[derive(Serialize)]
struct Metadata {
    timestamp_unix: u64,
    elapsed_seconds: f64,
    threads: usize,
}

#[derive(Serialize)]
struct Envelope<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    result: &'a Value,
    metadata: Metadata,
}

pub enum Sink {
    Stdout,
    File(PathBuf),
}

impl Sink {
    pub fn resolve(settings: &Settings, command: &str, format: Format) -> Sink {
        if let Some(p) = &settings.output {
            return Sink::File(p.clone());
        }
        match std::env::var_os(OUTPUT_DIR_VAR) {
            Some(dir) if !dir.is_empty() => {
                let ext = match format {
                    Format::Json => "json",
                    Format::Csv => "csv",
                };
                Sink::File(PathBuf::from(dir).join(format!("{command}.{ext}")))
            }
            _ => Sink::Stdout,
        }
    }

    /// Fails early, before any computation, if the target cannot be written.
    pub fn check(&self) -> Result<(), CliError> {
        if let Sink::File(p) = self {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display())))?;
        }
        Ok(())
    }

    fn put(&self, bytes: &[u8]) -> Result<(), CliError> {
        let io = |e: std::io::Error| CliError::Config(format!("writing output: {e}"));
        match self {
            Sink::Stdout => std::io::stdout().lock().write_all(bytes).map_err(io),
            Sink::File(p) => std::fs::write(p, bytes).map_err(io),
        }
    }
}

pub fn emit(
    sink: &Sink,
    format: Format,
    command: &str,
    config: &Settings,
    report: &Report,
    started: Instant,
) -> Result<(), CliError> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        toolkit: Toolkit {
            name: "cpflow",
            version: env!("CARGO_PKG_VERSION"),
        },
        command,
        config,
        resolution: report.resolution,
    };
    let bytes = match (format, &report.csv) {
        (Format::Csv, Some(body)) => {
            // provenance rides along as a comment line ahead of the columns
            let mut out = b"# ".to_vec();
            serde_json::to_writer(&mut out, &header).expect("header serializes");
            out.push(b'\n');
            out.extend_from_slice(body);
            out
        }
        (Format::Csv, None) => return Err(CliError::Config(format!("{command} has no CSV output"))),
        (Format::Json, _) => {
            let envelope = Envelope {
                header,
                result: &report.result,
                metadata: Metadata {
                    timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
                    elapsed_seconds: started.elapsed().as_secs_f64(),
                    threads: rayon::current_num_threads(),
                },
            };
            let mut out = serde_json::to_vec_pretty(&envelope).expect("result serializes");
            out.push(b'\n');
            out
        }
    };
    sink.put(&bytes)?;
    if let Sink::File(p) = sink {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
