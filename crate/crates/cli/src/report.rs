//! Machine-readable run reports. Field order is fixed by the struct
//! declarations and every float is printed with 17 significant digits,
//! so identical configurations produce byte-identical output.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::Serialize;

#[derive(Serialize)]
pub struct Report {
    pub config: ConfigEcho,
    pub branches: Vec<BranchRecord>,
    pub summary: Summary,
}

/// The resolved configuration, echoed back so a report is self-contained.
/// Keys that do not apply to the command are null.
#[derive(Serialize)]
pub struct ConfigEcho {
    pub command: String,
    pub topology: Option<String>,
    pub graph_file: Option<String>,
    pub d: Option<usize>,
    pub length: Option<usize>,
    pub wires: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub n: Option<usize>,
    pub policy: Option<String>,
    pub trials: Option<usize>,
    pub seed: u64,
    pub input: Option<String>,
    pub register_cap: usize,
}

impl ConfigEcho {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            topology: None,
            graph_file: None,
            d: None,
            length: None,
            wires: None,
            rows: None,
            cols: None,
            n: None,
            policy: None,
            trials: None,
            seed,
            input: None,
            register_cap: clusterport::register_cap(),
        }
    }
}

#[derive(Serialize)]
pub struct BranchRecord {
    /// Measured digit per site, keyed by site index.
    pub outcomes: BTreeMap<usize, usize>,
    pub probability: f64,
    pub correction: String,
    pub fidelity: f64,
}

#[derive(Serialize)]
pub struct Summary {
    pub branch_count: usize,
    pub min_fidelity: Option<f64>,
    pub mean_fidelity: Option<f64>,
    pub probability_sum: Option<f64>,
    pub stabilizer_residual: Option<f64>,
    pub derived_relation_residual: Option<f64>,
    pub classical_bits: Option<f64>,
    pub ebits: Option<f64>,
    pub notes: Vec<String>,
}

impl Summary {
    pub fn empty() -> Self {
        Self {
            branch_count: 0,
            min_fidelity: None,
            mean_fidelity: None,
            probability_sum: None,
            stabilizer_residual: None,
            derived_relation_residual: None,
            classical_bits: None,
            ebits: None,
            notes: Vec::new(),
        }
    }
}

/// Compact JSON except that every f64 is written as `{:.16e}`, which
/// round-trips exactly and never depends on shortest-representation
/// heuristics.
struct SciFormatter;

impl serde_json::ser::Formatter for SciFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + Write,
    {
        write!(writer, "{value:.16e}")
    }
}

pub fn print_report(report: &Report) -> io::Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    let mut ser = serde_json::Serializer::with_formatter(&mut lock, SciFormatter);
    report
        .serialize(&mut ser)
        .map_err(|e| io::Error::new(io::ErrorKind::Other, e))?;
    lock.write_all(b"\n")
}
