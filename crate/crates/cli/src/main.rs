//! Command-line front end for the clusterport library: run teleport
//! experiments, verify cluster correlations, audit resources, and compare
//! pair-basis measurement statistics, all as deterministic JSON reports.
//!
//! Exit codes: 0 when the run's claim holds, 2 for invalid configuration,
//! 3 when the protocol fails its own guarantee.

mod report;

use std::fmt;
use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clusterport::state::random_unit_vector;
use clusterport::teleport::{
    bell_probabilities, carve_to_wire, classical_cost, ebit_resource_check, grid_wire_layout,
    run_teleport, run_teleport_prepared, two_step_bell_measure, BellLabel, BellPolicy,
    CarvePolicy, RunPolicy, PERFECT_FIDELITY,
};
use clusterport::{
    build_cluster, coupled_pair_derived_relations, teleport_unit_derived_relations,
    verify_derived_relations, verify_stabilizers, BuildSpec, ClusterGraph, StateVector,
};

use report::{print_report, BranchRecord, ConfigEcho, Report, Summary};

/// Residual bound for the verify command.
const STABILIZER_LIMIT: f64 = 1e-12;
/// Probabilities enumerated over all branches must sum to 1 this tightly.
const PROBABILITY_SUM_TOL: f64 = 1e-10;
/// Entropy must match the pair count this tightly.
const ENTROPY_TOL: f64 = 1e-9;
/// Empirical frequencies may drift this many standard errors.
const SE_LIMIT: f64 = 5.0;

#[derive(Parser)]
#[command(
    name = "clusterport",
    version,
    about = "Cluster-state teleportation simulator for qubits and qudits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the teleport protocol and report per-branch fidelities
    Teleport(TeleportArgs),
    /// Check the correlation relations of a pure cluster state
    Verify(VerifyArgs),
    /// Report the entanglement and classical-bit budget for n wires
    Resources(ResourcesArgs),
    /// Compare sampled pair-basis frequencies against exact probabilities
    Bell(BellArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Topology {
    /// Three sites, one wire
    Unit,
    /// One wire of --length sites (odd)
    Chain,
    /// Six sites, two wires sharing a body site (qubits teleport in closed form)
    CoupledPair,
    /// --wires disjoint three-site wires
    Stack,
    /// A --rows x --cols grid carved down to one corner-to-corner wire
    GridCarved,
}

impl Topology {
    fn name(self) -> &'static str {
        match self {
            Topology::Unit => "unit",
            Topology::Chain => "chain",
            Topology::CoupledPair => "coupled-pair",
            Topology::Stack => "stack",
            Topology::GridCarved => "grid-carved",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    /// Visit every outcome tuple with its exact probability
    Enumerate,
    /// Sample --trials runs from the seeded generator
    Random,
}

#[derive(Args)]
struct TeleportArgs {
    /// Built-in layout to run
    #[arg(long, value_enum, required_unless_present = "graph_file", conflicts_with = "graph_file")]
    topology: Option<Topology>,
    /// Graph in the text line format instead of a built-in layout
    #[arg(long)]
    graph_file: Option<PathBuf>,
    /// Levels per site (defaults to 2; comes from the file with --graph-file)
    #[arg(long)]
    d: Option<usize>,
    /// Chain topology: number of sites (odd, default 5)
    #[arg(long)]
    length: Option<usize>,
    /// Stack topology: number of wires (default 2)
    #[arg(long)]
    wires: Option<usize>,
    /// Grid topology: rows (default 2)
    #[arg(long)]
    rows: Option<usize>,
    /// Grid topology: columns (default 4)
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value = "enumerate")]
    policy: Policy,
    /// Sample count for the random policy (default 1000)
    #[arg(long)]
    trials: Option<usize>,
    /// Seed for every random choice in the run
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// "random", or per-wire amplitudes "re,im,re,im,..." joined by ';'
    #[arg(long, default_value = "random")]
    input: String,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, required_unless_present = "graph_file", conflicts_with = "graph_file")]
    topology: Option<Topology>,
    #[arg(long)]
    graph_file: Option<PathBuf>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    wires: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
}

#[derive(Args)]
struct ResourcesArgs {
    /// Number of teleported states (pairs in the entanglement audit)
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
}

#[derive(Args)]
struct BellArgs {
    /// "random" or four amplitudes "re,im,re,im,re,im,re,im"
    #[arg(long, default_value = "random")]
    input: String,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum CliError {
    Lib(clusterport::Error),
    Config(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<clusterport::Error> for CliError {
    fn from(e: clusterport::Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(clusterport::Error::ProtocolBroken(_)) => 3,
            _ => 2,
        }
    }
}

fn main() {
    if let Ok(raw) = std::env::var("CLUSTERPORT_MAX_AMPS") {
        match raw.trim().parse::<usize>() {
            Ok(cap) if cap > 0 => clusterport::set_register_cap(cap),
            _ => {
                eprintln!("error: CLUSTERPORT_MAX_AMPS must be a positive integer, got {raw:?}");
                exit(2);
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Teleport(args) => cmd_teleport(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Resources(args) => cmd_resources(args),
        Command::Bell(args) => cmd_bell(args),
    };
    match outcome {
        Ok((report, holds)) => {
            if let Err(e) = print_report(&report) {
                eprintln!("error: failed to write the report: {e}");
                exit(2);
            }
            exit(if holds { 0 } else { 3 });
        }
        Err(err) => {
            eprintln!("error: {err}");
            exit(err.exit_code());
        }
    }
}

fn reject_flag(value: Option<usize>, flag: &str, topology: &str) -> Result<(), CliError> {
    if value.is_some() {
        return Err(CliError::Config(format!(
            "--{flag} does not apply to topology {topology}"
        )));
    }
    Ok(())
}

struct ResolvedGraph {
    graph: ClusterGraph,
    carve_path: Option<Vec<usize>>,
    topology: Option<&'static str>,
    graph_file: Option<String>,
    length: Option<usize>,
    wires: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
}

fn resolve_graph(
    topology: Option<Topology>,
    graph_file: Option<&PathBuf>,
    d: Option<usize>,
    length: Option<usize>,
    wires: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
) -> Result<ResolvedGraph, CliError> {
    if let Some(path) = graph_file {
        if d.is_some() {
            return Err(CliError::Config(
                "--d does not apply with --graph-file; the file carries its own level count"
                    .into(),
            ));
        }
        for (value, flag) in [(length, "length"), (wires, "wires"), (rows, "rows"), (cols, "cols")]
        {
            reject_flag(value, flag, "a graph file")?;
        }
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read graph file {}: {e}", path.display()))
        })?;
        let graph = ClusterGraph::from_text(&text)?;
        return Ok(ResolvedGraph {
            graph,
            carve_path: None,
            topology: None,
            graph_file: Some(path.display().to_string()),
            length: None,
            wires: None,
            rows: None,
            cols: None,
        });
    }
    let topology = topology.expect("clap requires a topology without --graph-file");
    let d = d.unwrap_or(2);
    let name = topology.name();
    let mut resolved = ResolvedGraph {
        graph: ClusterGraph::teleport_unit(2).map_err(CliError::Lib)?,
        carve_path: None,
        topology: Some(name),
        graph_file: None,
        length: None,
        wires: None,
        rows: None,
        cols: None,
    };
    match topology {
        Topology::Unit | Topology::CoupledPair => {
            for (value, flag) in
                [(length, "length"), (wires, "wires"), (rows, "rows"), (cols, "cols")]
            {
                reject_flag(value, flag, name)?;
            }
            resolved.graph = if topology == Topology::Unit {
                ClusterGraph::teleport_unit(d)?
            } else {
                ClusterGraph::coupled_pair(d)?
            };
        }
        Topology::Chain => {
            for (value, flag) in [(wires, "wires"), (rows, "rows"), (cols, "cols")] {
                reject_flag(value, flag, name)?;
            }
            let m = length.unwrap_or(5);
            resolved.length = Some(m);
            resolved.graph = ClusterGraph::chain(d, m)?;
        }
        Topology::Stack => {
            for (value, flag) in [(length, "length"), (rows, "rows"), (cols, "cols")] {
                reject_flag(value, flag, name)?;
            }
            let w = wires.unwrap_or(2);
            resolved.wires = Some(w);
            resolved.graph = ClusterGraph::parallel_stack(d, w)?;
        }
        Topology::GridCarved => {
            for (value, flag) in [(length, "length"), (wires, "wires")] {
                reject_flag(value, flag, name)?;
            }
            let r = rows.unwrap_or(2);
            let c = cols.unwrap_or(4);
            resolved.rows = Some(r);
            resolved.cols = Some(c);
            let (graph, path) = grid_wire_layout(d, r, c)?;
            resolved.graph = graph;
            resolved.carve_path = Some(path);
        }
    }
    Ok(resolved)
}

fn parse_amplitude_list(text: &str) -> Result<Vec<Complex64>, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() % 2 != 0 {
        return Err(CliError::Config(format!(
            "amplitude list needs an even number of reals (re,im pairs), got {}",
            parts.len()
        )));
    }
    let mut values = Vec::with_capacity(parts.len());
    for part in parts {
        let v: f64 = part
            .parse()
            .map_err(|_| CliError::Config(format!("cannot parse {part:?} as a number")))?;
        if !v.is_finite() {
            return Err(CliError::Config(format!("amplitude component {part:?} is not finite")));
        }
        values.push(v);
    }
    Ok(values.chunks(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

fn parse_inputs(
    text: &str,
    d: usize,
    wire_count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<Complex64>>, CliError> {
    if text == "random" {
        return (0..wire_count)
            .map(|_| random_unit_vector(d, rng).map_err(CliError::Lib))
            .collect();
    }
    let groups: Vec<&str> = text.split(';').collect();
    if groups.len() != wire_count {
        return Err(CliError::Config(format!(
            "--input lists {} states but the graph has {} wires",
            groups.len(),
            wire_count
        )));
    }
    groups.iter().map(|g| parse_amplitude_list(g)).collect()
}

fn cmd_teleport(args: TeleportArgs) -> Result<(Report, bool), CliError> {
    let resolved = resolve_graph(
        args.topology,
        args.graph_file.as_ref(),
        args.d,
        args.length,
        args.wires,
        args.rows,
        args.cols,
    )?;
    let graph = &resolved.graph;
    let d = graph.d();
    let enumerate = matches!(args.policy, Policy::Enumerate);
    if enumerate && args.trials.is_some() {
        return Err(CliError::Config("--trials applies to the random policy only".into()));
    }
    let trials = args.trials.unwrap_or(1000);
    if !enumerate && trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let inputs = parse_inputs(&args.input, d, graph.wire_count(), &mut rng)?;

    let mut notes = vec![
        "digits index the Fourier basis: digit s marks shift eigenvalue exp(2*pi*i*s/d)".into(),
        "corrections negate digits first, then apply the phase-tracked Z/X word".into(),
    ];

    // Carve the grid down to its wire before running, logging each deletion.
    let (run_graph, prepared) = match &resolved.carve_path {
        Some(path) => {
            let cluster = build_cluster(&BuildSpec::with_inputs(graph, &inputs))?;
            let carved = carve_to_wire(graph, &cluster, path, CarvePolicy::Random(&mut rng))?;
            for record in &carved.deletions {
                notes.push(format!(
                    "carved site {}: outcome {} (probability {:.6})",
                    record.site, record.outcome, record.probability
                ));
            }
            (carved.graph.clone(), Some(carved))
        }
        None => (graph.clone(), None),
    };

    let policy = if enumerate {
        RunPolicy::EnumerateAll
    } else {
        RunPolicy::Random { seed: rng.next_u64(), trials }
    };
    let branches = match &prepared {
        Some(carved) => run_teleport_prepared(&run_graph, &carved.state, &inputs, &policy)?,
        None => run_teleport(&run_graph, &inputs, &policy)?,
    };

    // Sanity of the built resource: the pure cluster of the configured
    // graph satisfies its correlation relations.
    let pure = build_cluster(&BuildSpec::pure(graph))?;
    let residual = verify_stabilizers(&pure, graph)?;

    let records: Vec<BranchRecord> = branches
        .iter()
        .map(|b| BranchRecord {
            outcomes: b.outcomes.iter().map(|(site, o)| (*site, o.value)).collect(),
            probability: b.probability,
            correction: b.correction.to_string(),
            fidelity: b.fidelity,
        })
        .collect();
    let min_fidelity = branches.iter().map(|b| b.fidelity).fold(f64::INFINITY, f64::min);
    let mean_fidelity =
        branches.iter().map(|b| b.fidelity).sum::<f64>() / branches.len().max(1) as f64;
    let probability_sum = enumerate.then(|| branches.iter().map(|b| b.probability).sum::<f64>());
    let cost = classical_cost(&run_graph);

    let mut holds = !branches.is_empty() && min_fidelity > PERFECT_FIDELITY;
    if let Some(sum) = probability_sum {
        holds &= (sum - 1.0).abs() < PROBABILITY_SUM_TOL;
    }

    let mut config = ConfigEcho::new("teleport", args.seed);
    config.topology = resolved.topology.map(str::to_string);
    config.graph_file = resolved.graph_file;
    config.d = Some(d);
    config.length = resolved.length;
    config.wires = resolved.wires;
    config.rows = resolved.rows;
    config.cols = resolved.cols;
    config.policy = Some(if enumerate { "enumerate" } else { "random" }.to_string());
    config.trials = (!enumerate).then_some(trials);
    config.input = Some(args.input.clone());

    let report = Report {
        config,
        branches: records,
        summary: Summary {
            branch_count: branches.len(),
            min_fidelity: (!branches.is_empty()).then_some(min_fidelity),
            mean_fidelity: (!branches.is_empty()).then_some(mean_fidelity),
            probability_sum,
            stabilizer_residual: Some(residual),
            derived_relation_residual: None,
            classical_bits: Some(cost.compressed_bits),
            ebits: None,
            notes,
        },
    };
    Ok((report, holds))
}

fn cmd_verify(args: VerifyArgs) -> Result<(Report, bool), CliError> {
    let resolved = resolve_graph(
        args.topology,
        args.graph_file.as_ref(),
        args.d,
        args.length,
        args.wires,
        args.rows,
        args.cols,
    )?;
    let graph = &resolved.graph;
    let d = graph.d();
    let pure = build_cluster(&BuildSpec::pure(graph))?;
    let stabilizer_residual = verify_stabilizers(&pure, graph)?;
    let mut notes = vec![format!(
        "checked {} correlation relations on {} sites at d = {d}",
        graph.site_count(),
        graph.site_count()
    )];
    let derived = match args.topology {
        Some(Topology::Unit) => {
            let words = teleport_unit_derived_relations(d)?;
            notes.push(format!("checked {} derived wire relations", words.len()));
            Some(verify_derived_relations(&pure, graph, &words)?)
        }
        Some(Topology::CoupledPair) if d == 2 => {
            let words = coupled_pair_derived_relations()?;
            notes.push(format!("checked {} derived wire relations", words.len()));
            Some(verify_derived_relations(&pure, graph, &words)?)
        }
        _ => {
            notes.push("no derived relation list for this layout".into());
            None
        }
    };
    let holds = stabilizer_residual < STABILIZER_LIMIT
        && derived.map_or(true, |r| r < STABILIZER_LIMIT);

    let mut config = ConfigEcho::new("verify", 0);
    config.topology = resolved.topology.map(str::to_string);
    config.graph_file = resolved.graph_file;
    config.d = Some(d);
    config.length = resolved.length;
    config.wires = resolved.wires;
    config.rows = resolved.rows;
    config.cols = resolved.cols;

    let mut summary = Summary::empty();
    summary.stabilizer_residual = Some(stabilizer_residual);
    summary.derived_relation_residual = derived;
    summary.notes = notes;
    Ok((Report { config, branches: Vec::new(), summary }, holds))
}

fn cmd_resources(args: ResourcesArgs) -> Result<(Report, bool), CliError> {
    let check = ebit_resource_check(args.d, args.n)?;
    let bits = 2.0 * args.n as f64 * (args.d as f64).log2();
    let holds = (check.entropy_bits - check.expected_bits).abs() < ENTROPY_TOL;

    let mut config = ConfigEcho::new("resources", 0);
    config.d = Some(args.d);
    config.n = Some(args.n);

    let mut summary = Summary::empty();
    summary.ebits = Some(check.entropy_bits);
    summary.classical_bits = Some(bits);
    summary.notes = vec![
        format!(
            "a row of {} sites split into alternating halves carries {:.12} ebits, expected {:.12}",
            check.sites, check.entropy_bits, check.expected_bits
        ),
        format!("two digits travel per teleported state: {bits} bits for {} wires", args.n),
    ];
    Ok((Report { config, branches: Vec::new(), summary }, holds))
}

fn cmd_bell(args: BellArgs) -> Result<(Report, bool), CliError> {
    if args.trials == 0 {
        return Err(CliError::Config("--trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let amps = if args.input == "random" {
        random_unit_vector(4, &mut rng)?
    } else {
        parse_amplitude_list(&args.input)?
    };
    let state = StateVector::from_amplitudes(2, amps)?;
    let exact = bell_probabilities(&state, 0, 1)?;
    let mut counts = [0usize; 4];
    for _ in 0..args.trials {
        let m = two_step_bell_measure(&state, 0, 1, BellPolicy::Random(&mut rng))?;
        counts[m.label.index()] += 1;
    }
    let mut holds = (exact.iter().sum::<f64>() - 1.0).abs() < PROBABILITY_SUM_TOL;
    let mut notes = Vec::new();
    for label in BellLabel::all() {
        let p = exact[label.index()];
        let freq = counts[label.index()] as f64 / args.trials as f64;
        let se = (p * (1.0 - p) / args.trials as f64).sqrt();
        if se == 0.0 {
            holds &= (freq - p).abs() < PROBABILITY_SUM_TOL;
            notes.push(format!("{label}: exact {p:.12}, empirical {freq:.12}, deterministic"));
        } else {
            let drift = (freq - p).abs() / se;
            holds &= drift < SE_LIMIT;
            notes.push(format!(
                "{label}: exact {p:.12}, empirical {freq:.12}, drift {drift:.2} standard errors"
            ));
        }
    }

    let mut config = ConfigEcho::new("bell", args.seed);
    config.trials = Some(args.trials);
    config.input = Some(args.input.clone());

    let mut summary = Summary::empty();
    summary.probability_sum = Some(exact.iter().sum());
    summary.notes = notes;
    Ok((Report { config, branches: Vec::new(), summary }, holds))
}
