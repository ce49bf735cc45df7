//! Command-line driver. Every subcommand prints one JSON object whose
//! top-level `meta` field records the tool version, the seed and a SHA-256
//! digest of each input file.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bourgain::{bourgain_embed, BourgainParams};
use crate::composition::bounds::{expansion_bound, expansion_bound_exact, BoundError, BoundQuery, PairCase};
use crate::composition::{
    bourgain_inputs, classify_pair, compose_deterministic, estimate_expected_expansion, CompositionError,
};
use crate::gadgets::{l1_gadget, lp_gadget};
use crate::geometry::GeometryError;
use crate::metric::{distortion_stats, Graph, MetricError, MetricSpace, DEFAULT_TRIANGLE_TOL};
use crate::oracle::{
    dw_edge_classes, hypercube_embeddable, min_outlier_isometric_l2, min_vertex_cover, optimal_distortion_l2,
    OracleBudget, OracleError,
};
use crate::random::rng_from_seed;
use crate::sdp::{search_min_outliers, GMode, SdpError, SearchOptions, SolverOptions};

#[derive(Debug, Parser)]
#[command(name = "outlier-embed", version, about = "Outlier embeddings of finite metrics into l_p")]
pub struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Print a plain-text summary instead of JSON.
    #[arg(long, global = true)]
    pub human: bool,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Metric files.
    #[command(subcommand)]
    Metric(MetricCmd),
    /// Embeddings of a whole metric.
    #[command(subcommand)]
    Embed(EmbedCmd),
    /// Nested composition.
    #[command(subcommand)]
    Compose(ComposeCmd),
    /// SDP-based outlier embeddings.
    #[command(subcommand)]
    Outliers(OutliersCmd),
    /// Exhaustive ground truth on small inputs.
    #[command(subcommand)]
    Oracle(OracleCmd),
    /// Hardness gadget graphs.
    #[command(subcommand)]
    Gadget(GadgetCmd),
}

#[derive(Debug, Args)]
pub struct MetricArg {
    /// Metric text file: `n`, then n rows.
    #[arg(long)]
    pub metric: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArg {
    /// Graph text file: `n m`, then m edges `u v`.
    #[arg(long)]
    pub graph: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum MetricCmd {
    /// Check a metric file.
    Validate(MetricArg),
    /// Shortest-path metric of a graph, written in metric text format.
    FromGraph(GraphArg),
}

#[derive(Debug, Subcommand)]
pub enum EmbedCmd {
    /// Expanding Bourgain embedding.
    Bourgain {
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long, default_value_t = 2.0)]
        p: f64,
        /// Sets per scale (default `ceil(24 ln n)`).
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct SubsetArgs {
    #[command(flatten)]
    pub metric: MetricArg,
    /// Points of S, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub s: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 2.0)]
    pub tau: f64,
}

#[derive(Debug, Subcommand)]
pub enum ComposeCmd {
    /// Compose a Bourgain embedding of S with one of X.
    Run {
        #[command(flatten)]
        subset: SubsetArgs,
        /// Independent draws concatenated into the output.
        #[arg(long, default_value_t = 1)]
        samples: usize,
    },
    /// Monte Carlo expected distance of one pair.
    Estimate {
        #[command(flatten)]
        subset: SubsetArgs,
        #[arg(long)]
        x: usize,
        #[arg(long)]
        y: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
    },
    /// Per-case expansion multiplier.
    Bound {
        #[arg(long, value_parser = parse_case)]
        case: PairCase,
        #[arg(long)]
        c_s: f64,
        #[arg(long)]
        c_x: f64,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        /// Also report exact coefficients for integer tau and kappa.
        #[arg(long)]
        exact: bool,
    },
}

fn parse_case(s: &str) -> Result<PairCase, String> {
    PairCase::parse(s).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Weak,
    Strong,
}

#[derive(Debug, Subcommand)]
pub enum OutliersCmd {
    /// Search for the smallest k and round.
    Solve {
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, value_enum, default_value = "weak")]
        mode: ModeArg,
        /// Known distortion bound; measured with Bourgain when absent.
        #[arg(long)]
        zeta: Option<f64>,
        #[arg(long, default_value_t = 50_000)]
        max_iters: usize,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCmd {
    /// Minimum vertex cover.
    Vc(GraphArg),
    /// Fewest removals leaving an l_2-isometric metric.
    Outliers(MetricArg),
    /// Optimal l_2 distortion by bisection.
    Distortion {
        #[command(flatten)]
        metric: MetricArg,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Scale-s hypercube embeddability.
    Hypercube {
        #[command(flatten)]
        graph: GraphArg,
        #[arg(long, default_value_t = 1)]
        scale: usize,
        #[arg(long)]
        max_columns: Option<usize>,
    },
    /// Djokovic-Winkler edge classes.
    Dwclasses(GraphArg),
}

#[derive(Debug, Subcommand)]
pub enum GadgetCmd {
    /// Two nodes per source node.
    Lp(GadgetArgs),
    /// Four nodes per source node.
    L1(GadgetArgs),
}

#[derive(Debug, Args)]
pub struct GadgetArgs {
    #[command(flatten)]
    pub graph: GraphArg,
    /// Also write the gadget in graph text format here.
    #[arg(long)]
    pub graph_out: Option<PathBuf>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Composition(#[from] CompositionError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Metric(_) => "metric",
            CliError::Geometry(_) => "geometry",
            CliError::Composition(_) => "composition",
            CliError::Bound(_) => "bound",
            CliError::Sdp(_) => "sdp",
            CliError::Oracle(_) => "oracle",
            CliError::Invalid(_) => "invalid_argument",
        }
    }

    fn to_json(&self) -> Value {
        let mut err = json!({ "kind": self.kind(), "message": self.to_string() });
        if let CliError::Metric(MetricError::TriangleViolation { i, j, k }) = self {
            err["triple"] = json!([i, j, k]);
        }
        json!({ "error": err })
    }
}

/// What a subcommand produced.
enum Output {
    Json(Value),
    /// Plain file content, e.g. a metric in text format.
    Text(String),
}

struct Session {
    seed: u64,
    command: String,
    inputs: Vec<Value>,
}

impl Session {
    fn read(&mut self, path: &Path) -> Result<String, CliError> {
        let bytes = fs::read(path).map_err(|e| CliError::Io { path: path.into(), message: e.to_string() })?;
        self.inputs.push(json!({
            "path": path.display().to_string(),
            "sha256": hex::encode(Sha256::digest(&bytes)),
        }));
        String::from_utf8(bytes).map_err(|e| CliError::Io { path: path.into(), message: e.to_string() })
    }

    fn metric(&mut self, arg: &MetricArg) -> Result<MetricSpace, CliError> {
        let text = self.read(&arg.metric)?;
        Ok(MetricSpace::parse_text(&text, DEFAULT_TRIANGLE_TOL)?)
    }

    fn graph(&mut self, arg: &GraphArg) -> Result<Graph, CliError> {
        let text = self.read(&arg.graph)?;
        Ok(Graph::parse_text(&text)?)
    }

    fn meta(&self) -> Value {
        json!({
            "tool": "outlier-embed",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "seed": self.seed,
            "inputs": self.inputs,
        })
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Metric(MetricCmd::Validate(_)) => "metric validate",
        Command::Metric(MetricCmd::FromGraph(_)) => "metric from-graph",
        Command::Embed(EmbedCmd::Bourgain { .. }) => "embed bourgain",
        Command::Compose(ComposeCmd::Run { .. }) => "compose run",
        Command::Compose(ComposeCmd::Estimate { .. }) => "compose estimate",
        Command::Compose(ComposeCmd::Bound { .. }) => "compose bound",
        Command::Outliers(OutliersCmd::Solve { .. }) => "outliers solve",
        Command::Oracle(OracleCmd::Vc(_)) => "oracle vc",
        Command::Oracle(OracleCmd::Outliers(_)) => "oracle outliers",
        Command::Oracle(OracleCmd::Distortion { .. }) => "oracle distortion",
        Command::Oracle(OracleCmd::Hypercube { .. }) => "oracle hypercube",
        Command::Oracle(OracleCmd::Dwclasses(_)) => "oracle dwclasses",
        Command::Gadget(GadgetCmd::Lp(_)) => "gadget lp",
        Command::Gadget(GadgetCmd::L1(_)) => "gadget l1",
    }
}

fn execute(cli: &Cli, sess: &mut Session) -> Result<Output, CliError> {
    let seed = cli.seed;
    let out = match &cli.command {
        Command::Metric(MetricCmd::Validate(arg)) => {
            let m = sess.metric(arg)?;
            json!({ "valid": true, "n": m.len(), "diameter": m.diameter() })
        }
        Command::Metric(MetricCmd::FromGraph(arg)) => {
            let g = sess.graph(arg)?;
            return Ok(Output::Text(MetricSpace::from_graph(&g)?.to_text()));
        }
        Command::Embed(EmbedCmd::Bourgain { metric, p, reps }) => {
            let m = sess.metric(metric)?;
            let mut params = BourgainParams::default_for(m.len(), seed, *p);
            if let Some(r) = reps {
                params.repetitions_per_scale = *r;
            }
            let (e, stats) = bourgain_embed(&m, &params)?;
            json!({
                "repetitions_per_scale": params.repetitions_per_scale,
                "dims": e.dims(),
                "distortion": to_value(&stats),
                "embedding": to_value(&e),
            })
        }
        Command::Compose(ComposeCmd::Run { subset, samples }) => {
            let m = sess.metric(&subset.metric)?;
            let inputs = bourgain_inputs(&m, &subset.s, subset.p, subset.tau, seed)?;
            let mut rng = rng_from_seed(seed);
            let det = compose_deterministic(&inputs, *samples, &mut rng)?;
            let stats = distortion_stats(&m, &det.embedding.points)?;
            json!({
                "S": inputs.s(),
                "c_S": inputs.c_s(),
                "c_X": inputs.c_x(),
                "distortion": to_value(&stats),
                "embedding": to_value(&det.embedding.points),
                "blocks": to_value(&det.embedding.blocks),
                "transcripts": to_value(&det.transcripts),
            })
        }
        Command::Compose(ComposeCmd::Estimate { subset, x, y, trials, kappa }) => {
            let m = sess.metric(&subset.metric)?;
            let inputs = bourgain_inputs(&m, &subset.s, subset.p, subset.tau, seed)?;
            let mut rng = rng_from_seed(seed);
            let (mean, stderr) = estimate_expected_expansion(&inputs, (*x, *y), *trials, &mut rng)?;
            let probe = inputs.sample_transcript(&mut rng);
            json!({
                "pair": [x, y],
                "d": m.d(*x, *y),
                "mean": mean,
                "stderr": stderr,
                "trials": trials,
                "c_S": inputs.c_s(),
                "c_X": inputs.c_x(),
                "case_in_sample_transcript": to_value(&classify_pair(&inputs, &probe, *x, *y, *kappa)),
                "split_probability_bound": inputs.split_probability_bound(*x, *y),
            })
        }
        Command::Compose(ComposeCmd::Bound { case, c_s, c_x, k, tau, kappa, exact }) => {
            let q = BoundQuery { case: *case, c_s: *c_s, c_x: *c_x, k: *k, tau: *tau, kappa: *kappa };
            let mut v = json!({ "case": to_value(case), "multiplier": expansion_bound(&q)? });
            if *exact {
                let as_int = |x: f64, what: &str| {
                    if x.fract() == 0.0 && x.abs() < 1e12 {
                        Ok(Ratio::from_integer(x as i128))
                    } else {
                        Err(CliError::Invalid(format!("--exact needs an integer {what}, got {x}")))
                    }
                };
                let co = expansion_bound_exact(*case, *k, as_int(*tau, "tau")?, as_int(*kappa, "kappa")?)?;
                v["exact"] = json!({ "c_S_coefficient": co.s.to_string(), "c_X_coefficient": co.x.to_string() });
            }
            v
        }
        Command::Outliers(OutliersCmd::Solve { metric, c, gamma, mode, zeta, max_iters }) => {
            let m = sess.metric(metric)?;
            let mode = match mode {
                ModeArg::Weak => GMode::Weak,
                ModeArg::Strong => GMode::Strong,
            };
            let opts = SearchOptions {
                solver: SolverOptions { max_iters: *max_iters, ..SolverOptions::default() },
                zeta: *zeta,
                seed,
                ..SearchOptions::default()
            };
            to_value(&search_min_outliers(&m, *c, *gamma, mode, &opts)?)
        }
        Command::Oracle(OracleCmd::Vc(arg)) => {
            let g = sess.graph(arg)?;
            let (size, cover) = min_vertex_cover(&g, &OracleBudget::default())?;
            json!({ "size": size, "witness": cover })
        }
        Command::Oracle(OracleCmd::Outliers(arg)) => {
            let m = sess.metric(arg)?;
            let (size, removed) = min_outlier_isometric_l2(&m, &OracleBudget::default())?;
            json!({ "size": size, "witness": removed })
        }
        Command::Oracle(OracleCmd::Distortion { metric, tol }) => {
            let m = sess.metric(metric)?;
            json!({ "distortion": optimal_distortion_l2(&m, *tol, &SolverOptions::default())?, "tol": tol })
        }
        Command::Oracle(OracleCmd::Hypercube { graph, scale, max_columns }) => {
            let g = sess.graph(graph)?;
            let budget = OracleBudget { max_columns: *max_columns, ..OracleBudget::default() };
            to_value(&hypercube_embeddable(&g, *scale, &budget)?)
        }
        Command::Oracle(OracleCmd::Dwclasses(arg)) => {
            let g = sess.graph(arg)?;
            let classes = dw_edge_classes(&g)?;
            json!({ "count": classes.len(), "classes": classes })
        }
        Command::Gadget(GadgetCmd::Lp(args)) | Command::Gadget(GadgetCmd::L1(args)) => {
            let g = sess.graph(&args.graph)?;
            let gm = match &cli.command {
                Command::Gadget(GadgetCmd::Lp(_)) => lp_gadget(&g),
                _ => l1_gadget(&g),
            };
            if let Some(path) = &args.graph_out {
                fs::write(path, gm.gadget.to_text())
                    .map_err(|e| CliError::Io { path: path.clone(), message: e.to_string() })?;
            }
            json!({
                "nodes": gm.gadget.node_count(),
                "edges": gm.gadget.edges(),
                "provenance": to_value(&gm.provenance),
            })
        }
    };
    Ok(Output::Json(out))
}

fn human_summary(v: &Map<String, Value>) -> String {
    let mut s = String::new();
    for (key, val) in v {
        if key == "meta" {
            continue;
        }
        let shown = match val {
            Value::Array(a) if a.len() > 12 => format!("[{} items]", a.len()),
            Value::Object(_) => "{...}".to_string(),
            other => other.to_string(),
        };
        s.push_str(&format!("{key}: {shown}\n"));
    }
    s
}

/// Parses `args` (program name first) and runs the command, writing to the
/// given streams. Returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(t) = cli.threads {
        // Fails only if a pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let mut sess = Session { seed: cli.seed, command: command_name(&cli.command).into(), inputs: Vec::new() };
    let result = execute(&cli, &mut sess);
    let text = match result {
        Ok(Output::Text(t)) => t,
        Ok(Output::Json(v)) => {
            let mut obj = match v {
                Value::Object(o) => o,
                other => Map::from_iter([("result".to_string(), other)]),
            };
            if cli.human {
                human_summary(&obj)
            } else {
                obj.insert("meta".into(), sess.meta());
                let mut t = serde_json::to_string_pretty(&Value::Object(obj)).expect("json");
                t.push('\n');
                t
            }
        }
        Err(e) => {
            let mut v = e.to_json();
            v["meta"] = sess.meta();
            let _ = writeln!(stderr, "{}", serde_json::to_string(&v).expect("json"));
            return 1;
        }
    };
    let written = match &cli.output {
        Some(path) => fs::write(path, &text).map_err(|e| (path.clone(), e)),
        None => stdout.write_all(text.as_bytes()).map_err(|e| (PathBuf::from("<stdout>"), e)),
    };
    if let Err((path, e)) = written {
        let err = CliError::Io { path, message: e.to_string() };
        let _ = writeln!(stderr, "{}", err.to_json());
        return 1;
    }
    0
}

/// Runs with the process arguments and standard streams.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}
