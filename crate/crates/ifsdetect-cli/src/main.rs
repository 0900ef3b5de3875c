//! Command-line driver for the ifsdetect pipeline.
//!
//! Each subcommand reads CSV inputs, runs one pipeline stage, and writes its
//! artifacts plus a `manifest.txt` echoing every effective parameter — the
//! manifest doubles as a config file (`--config`) for re-running the stage.
//!
//! Exit codes: 0 success, 1 input error, 2 the data shows no switching
//! structure, 3 internal integrity violation.

mod io;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use ifsdetect::detection::{
    component_count_histogram, estimate_regime_count, find_gap, nn_diameters, GapReport,
    Histogram,
};
use ifsdetect::embedding::{delay_embed, EmbeddingConfig};
use ifsdetect::geometry::PointCloud;
use ifsdetect::ghost::{adjust, determinism_check, ghost_report};
use ifsdetect::separation::{
    evaluate_separation, separate, SeparationResult, DEFAULT_LINK_BUDGET,
};
use ifsdetect::sim::{generate, IfsModel, RegimeRule};
use io::{
    fmt17, parse_cloud_csv, parse_config, parse_labels_csv, parse_series_csv,
    parse_truth_csv, CliError, CliResult, RunWriter,
};

/// Epsilon grid over which the regime count must persist.
const EPSILON_GRID: [f64; 4] = [0.02, 0.03, 0.04, 0.05];

#[derive(Parser)]
#[command(
    name = "ifsdetect",
    version,
    about = "Detect, count, and separate switching-map regimes in time series"
)]
struct Cli {
    /// key=value defaults for any flag of the subcommand; explicit flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory receiving artifacts and manifest.txt (default ".").
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,
    /// Cap on worker threads; outputs never depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a switching trajectory with its ground-truth regimes.
    Simulate {
        /// Trajectory length.
        #[arg(long = "T")]
        t: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Steps discarded before recording starts.
        #[arg(long)]
        burn_in: Option<usize>,
        /// Number of maps switching (1, 2, or 3).
        #[arg(long)]
        regimes: Option<usize>,
    },
    /// Delay-embed a scalar series into a point cloud.
    Embed {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Embedding dimension.
        #[arg(long)]
        m: Option<usize>,
        /// Delay between coordinates.
        #[arg(long)]
        tau: Option<usize>,
    },
    /// Decide whether maps are switching and estimate how many.
    Detect {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Neighborhood size for image diameters and component counts.
        #[arg(long)]
        k: Option<usize>,
        /// Bin count of the exported diameter histogram.
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Label every step with the regime that produced it.
    Separate {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Chaining threshold, or "auto" to take the detected gap midpoint.
        #[arg(long)]
        epsilon: Option<String>,
        /// Regime count, or "auto" to use the persistent estimate.
        #[arg(long)]
        regimes: Option<String>,
        /// Cover neighborhood size.
        #[arg(long = "K")]
        cover_k: Option<usize>,
        /// Number of cover neighborhoods.
        #[arg(long = "J")]
        nexus: Option<usize>,
        /// Index of the first farthest-point sample.
        #[arg(long)]
        start: Option<usize>,
    },
    /// Find periodic recording artifacts in a scalar series and repair them.
    Ghost {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        /// Chaining threshold in observable units.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Embedding dimension used for the search.
        #[arg(long)]
        m: Option<usize>,
        /// Delay between embedding coordinates.
        #[arg(long)]
        tau: Option<usize>,
    },
    /// Score a labeling against a ground-truth regime sequence.
    Evaluate {
        /// Labels CSV (`t,label`, -1 for unidentified).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Truth CSV (`t,regime`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
}

/// Flag-over-config-over-default resolution.
struct Settings {
    cfg: BTreeMap<String, String>,
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let cfg = match path {
            Some(p) => parse_config(p)?,
            None => BTreeMap::new(),
        };
        Ok(Settings { cfg })
    }

    fn get<T: FromStr + Copy>(&self, flag: Option<T>, key: &str, default: T) -> CliResult<T> {
        match (flag, self.cfg.get(key)) {
            (Some(v), _) => Ok(v),
            (None, Some(raw)) => raw.parse().map_err(|_| {
                CliError::Input(format!("config key {key}: cannot parse {raw:?}"))
            }),
            (None, None) => Ok(default),
        }
    }

    /// Like `get` but with no default: the value must come from a flag or
    /// the config file.
    fn require_path(&self, flag: Option<PathBuf>, key: &str) -> CliResult<PathBuf> {
        match (flag, self.cfg.get(key)) {
            (Some(p), _) => Ok(p),
            (None, Some(raw)) => Ok(PathBuf::from(raw)),
            (None, None) => Err(CliError::Input(format!("missing required --{key}"))),
        }
    }

    /// A value that may be the literal string "auto".
    fn get_auto<T: FromStr>(&self, flag: Option<&str>, key: &str) -> CliResult<Option<T>> {
        let raw = match (flag, self.cfg.get(key)) {
            (Some(v), _) => v,
            (None, Some(raw)) => raw.as_str(),
            (None, None) => return Ok(None),
        };
        if raw == "auto" {
            return Ok(None);
        }
        raw.parse()
            .map(Some)
            .map_err(|_| CliError::Input(format!("--{key}: expected a value or \"auto\", got {raw:?}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        // Never fails fatally: a pool may already exist in tests.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
    let stage = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Embed { .. } => "embed",
        Command::Detect { .. } => "detect",
        Command::Separate { .. } => "separate",
        Command::Ghost { .. } => "ghost",
        Command::Evaluate { .. } => "evaluate",
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{stage}: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    let out_dir = match (cli.output_dir, settings.cfg.get("output_dir")) {
        (Some(d), _) => d,
        (None, Some(raw)) => PathBuf::from(raw),
        (None, None) => PathBuf::from("."),
    };
    match cli.command {
        Command::Simulate { t, seed, burn_in, regimes } => {
            run_simulate(&settings, &out_dir, t, seed, burn_in, regimes)
        }
        Command::Embed { input, m, tau } => run_embed(&settings, &out_dir, input, m, tau),
        Command::Detect { input, k, bins } => run_detect(&settings, &out_dir, input, k, bins),
        Command::Separate { input, epsilon, regimes, cover_k, nexus, start } => {
            run_separate(&settings, &out_dir, input, epsilon, regimes, cover_k, nexus, start)
        }
        Command::Ghost { input, k, epsilon, m, tau } => {
            run_ghost(&settings, &out_dir, input, k, epsilon, m, tau)
        }
        Command::Evaluate { input, truth } => run_evaluate(&settings, &out_dir, input, truth),
    }
}

fn run_simulate(
    settings: &Settings,
    out_dir: &Path,
    t: Option<usize>,
    seed: Option<u64>,
    burn_in: Option<usize>,
    regimes: Option<usize>,
) -> CliResult<()> {
    let t = settings.get(t, "T", 30_000)?;
    let seed = settings.get(seed, "seed", 1u64)?;
    let burn_in = settings.get(burn_in, "burn_in", 1000usize)?;
    let regimes = settings.get(regimes, "regimes", 2usize)?;
    let model = match regimes {
        1 => IfsModel::single(),
        2 => IfsModel::pair(),
        3 => IfsModel::triple(),
        n => {
            return Err(CliError::Input(format!(
                "--regimes {n}: only 1, 2, or 3 maps are built in"
            )))
        }
    };
    let rule = RegimeRule::Bernoulli { probs: vec![1.0 / regimes as f64; regimes], seed };
    let traj = generate(&model, &rule, t, [0.0, 0.0], burn_in)?;

    let mut writer = RunWriter::new(out_dir, "simulate")?;
    writer.param("T", t);
    writer.param("seed", seed);
    writer.param("burn_in", burn_in);
    writer.param("regimes", regimes);
    writer.param("x0", "0,0");

    let trajectory: String = (0..traj.points.len())
        .map(|i| {
            let p = traj.points.point(i);
            format!("{i},{},{}\n", fmt17(p[0]), fmt17(p[1]))
        })
        .collect();
    writer.artifact("trajectory.csv", &trajectory)?;
    let truth: String =
        traj.regimes.iter().enumerate().map(|(i, n)| format!("{i},{n}\n")).collect();
    writer.artifact("truth.csv", &truth)?;
    writer.finish()
}

fn run_embed(
    settings: &Settings,
    out_dir: &Path,
    input: Option<PathBuf>,
    m: Option<usize>,
    tau: Option<usize>,
) -> CliResult<()> {
    let input = settings.require_path(input, "input")?;
    let m = settings.get(m, "m", 3usize)?;
    let tau = settings.get(tau, "tau", 1usize)?;
    let series = parse_series_csv(&input)?;
    let cloud = delay_embed(&series, &EmbeddingConfig::new(m, tau)?)?;

    let mut writer = RunWriter::new(out_dir, "embed")?;
    writer.param("input", input.display());
    writer.param("m", m);
    writer.param("tau", tau);
    writer.artifact("embedded.csv", &cloud_csv(&cloud))?;
    writer.finish()
}

fn cloud_csv(cloud: &PointCloud) -> String {
    (0..cloud.len())
        .map(|i| {
            let coords: Vec<String> = cloud.point(i).iter().map(|&c| fmt17(c)).collect();
            format!("{i},{}\n", coords.join(","))
        })
        .collect()
}

fn gap_lines(gap: &GapReport) -> String {
    format!(
        "bimodal={}\ngap_low={}\ngap_high={}\nepsilon={}\nwidth={}\n",
        gap.bimodal,
        fmt17(gap.gap_low),
        fmt17(gap.gap_high),
        fmt17(gap.epsilon),
        fmt17(gap.width())
    )
}

fn run_detect(
    settings: &Settings,
    out_dir: &Path,
    input: Option<PathBuf>,
    k: Option<usize>,
    bins: Option<usize>,
) -> CliResult<()> {
    let input = settings.require_path(input, "input")?;
    let k = settings.get(k, "k", 5usize)?;
    let bins = settings.get(bins, "bins", 64usize)?;
    let cloud = parse_cloud_csv(&input)?;

    let diameters = nn_diameters(&cloud)?;
    let gap = find_gap(&diameters.image)?;
    let hist = Histogram::from_values(&diameters.image, bins)?;
    let estimate = estimate_regime_count(&cloud, k, &EPSILON_GRID)?;

    let mut writer = RunWriter::new(out_dir, "detect")?;
    writer.param("input", input.display());
    writer.param("k", k);
    writer.param("bins", bins);
    writer.param(
        "epsilon_grid",
        EPSILON_GRID.map(fmt17).join(","),
    );

    let mut gap_report = gap_lines(&gap);
    match estimate.regime_count() {
        Some(n) => gap_report.push_str(&format!("regime_count={n}\n")),
        None => gap_report.push_str("regime_count=none\n"),
    }
    gap_report.push_str(&format!("persistent={}\n", estimate.persistent));
    writer.artifact("gap.txt", &gap_report)?;

    let hist_csv: String = hist
        .counts
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{},{},{c}\n", fmt17(hist.edges[i]), fmt17(hist.edges[i + 1])))
        .collect();
    writer.artifact("diameter_histogram.csv", &hist_csv)?;

    let mut census = String::new();
    for eps in EPSILON_GRID {
        let counts = component_count_histogram(&cloud, k, eps)?;
        for (components, steps) in counts.counts() {
            census.push_str(&format!("{},{components},{steps}\n", fmt17(eps)));
        }
    }
    writer.artifact("component_counts.csv", &census)?;
    writer.finish()?;

    if !gap.bimodal {
        return Err(CliError::NoStructure(
            "image diameters are unimodal — no switching structure detected".into(),
        ));
    }
    if !estimate.persistent {
        return Err(CliError::NoStructure(
            "component counts do not persist across the epsilon grid".into(),
        ));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_separate(
    settings: &Settings,
    out_dir: &Path,
    input: Option<PathBuf>,
    epsilon: Option<String>,
    regimes: Option<String>,
    cover_k: Option<usize>,
    nexus: Option<usize>,
    start: Option<usize>,
) -> CliResult<()> {
    let input = settings.require_path(input, "input")?;
    let cover_k = settings.get(cover_k, "K", 40usize)?;
    let nexus = settings.get(nexus, "J", 10_000usize)?;
    let start = settings.get(start, "start", 0usize)?;
    let cloud = parse_cloud_csv(&input)?;

    let epsilon = match settings.get_auto::<f64>(epsilon.as_deref(), "epsilon")? {
        Some(e) => e,
        None => {
            let gap = find_gap(&nn_diameters(&cloud)?.image)?;
            if !gap.bimodal {
                return Err(CliError::NoStructure(
                    "epsilon=auto: image diameters are unimodal — nothing to separate".into(),
                ));
            }
            gap.epsilon
        }
    };
    let regime_count = match settings.get_auto::<usize>(regimes.as_deref(), "regimes")? {
        Some(n) => n,
        None => estimate_regime_count(&cloud, 5, &EPSILON_GRID)?
            .regime_count()
            .ok_or_else(|| {
                CliError::NoStructure(
                    "regimes=auto: component counts do not persist across the epsilon grid"
                        .into(),
                )
            })?,
    };

    let result = separate(&cloud, cover_k, nexus, start, epsilon, regime_count)?;

    let mut writer = RunWriter::new(out_dir, "separate")?;
    writer.param("input", input.display());
    writer.param_f64("epsilon", epsilon);
    writer.param("regimes", regime_count);
    writer.param("K", cover_k);
    writer.param("J", nexus);
    writer.param("start", start);
    writer.param_f64("link_budget", DEFAULT_LINK_BUDGET);

    let labels: String = result
        .labels
        .iter()
        .enumerate()
        .map(|(t, label)| match label {
            Some(l) => format!("{t},{l}\n"),
            None => format!("{t},-1\n"),
        })
        .collect();
    writer.artifact("labels.csv", &labels)?;
    let census: String = result
        .component_sizes
        .iter()
        .enumerate()
        .map(|(label, points)| format!("{label},{points}\n"))
        .collect();
    writer.artifact("census.csv", &census)?;
    writer.finish()
}

fn run_ghost(
    settings: &Settings,
    out_dir: &Path,
    input: Option<PathBuf>,
    k: Option<usize>,
    epsilon: Option<f64>,
    m: Option<usize>,
    tau: Option<usize>,
) -> CliResult<()> {
    let input = settings.require_path(input, "input")?;
    let k = settings.get(k, "k", 10usize)?;
    let epsilon = settings.get(epsilon, "epsilon", 50.0f64)?;
    let m = settings.get(m, "m", 3usize)?;
    let tau = settings.get(tau, "tau", 1usize)?;

    let series = parse_series_csv(&input)?;
    let cfg = EmbeddingConfig::new(m, tau)?;
    let cloud = delay_embed(&series, &cfg)?;
    let report = ghost_report(&cloud, k, epsilon, tau)?;
    let genuine = report.genuine();

    let (adjusted, determinism) = match report.shift {
        Some(shift) => {
            let repaired = adjust(&series, &genuine, shift)?;
            let recloud = delay_embed(&repaired, &cfg)?;
            let check = determinism_check(&recloud, &genuine, k, epsilon)?;
            (repaired, Some(check))
        }
        None => (series.clone(), None),
    };

    let mut writer = RunWriter::new(out_dir, "ghost")?;
    writer.param("input", input.display());
    writer.param("k", k);
    writer.param_f64("epsilon", epsilon);
    writer.param("m", m);
    writer.param("tau", tau);

    let mut lines = format!("ghost_count={}\n", report.ghost_indices.len());
    match report.period {
        Some(p) => lines.push_str(&format!("period={p}\n")),
        None => lines.push_str("period=none\n"),
    }
    lines.push_str(&format!("spurious_count={}\n", report.spurious.len()));
    match report.shift {
        Some(s) => lines.push_str(&format!("shift={}\n", fmt17(s))),
        None => lines.push_str("shift=none\n"),
    }
    match &determinism {
        Some(check) => {
            lines.push_str(&format!(
                "determinism_checked={}\ndeterminism_failures={}\n",
                check.checked, check.failures
            ));
        }
        None => lines.push_str("determinism_checked=0\ndeterminism_failures=0\n"),
    }
    writer.artifact("ghost.txt", &lines)?;

    let spurious: std::collections::BTreeSet<usize> = report.spurious.iter().copied().collect();
    let ghosts_csv: String = report
        .ghost_indices
        .iter()
        .enumerate()
        .map(|(pos, idx)| format!("{pos},{idx},{}\n", u8::from(spurious.contains(&pos))))
        .collect();
    writer.artifact("ghosts.csv", &ghosts_csv)?;

    let adjusted_csv: String =
        adjusted.values().iter().map(|&v| format!("{}\n", fmt17(v))).collect();
    writer.artifact("adjusted.csv", &adjusted_csv)?;
    writer.finish()
}

fn run_evaluate(
    settings: &Settings,
    out_dir: &Path,
    input: Option<PathBuf>,
    truth: Option<PathBuf>,
) -> CliResult<()> {
    let input = settings.require_path(input, "input")?;
    let truth_path = settings.require_path(truth, "truth")?;
    let labels = parse_labels_csv(&input)?;
    let regimes = parse_truth_csv(&truth_path)?;

    let label_count = labels.iter().flatten().max().map_or(0, |&l| l + 1);
    let mut component_sizes = vec![0usize; label_count];
    for l in labels.iter().flatten() {
        component_sizes[*l] += 1;
    }
    let labeled = labels.iter().flatten().count();
    let result = SeparationResult { labels, component_sizes, labeled };
    let report = evaluate_separation(&result, &regimes)?;

    let mut writer = RunWriter::new(out_dir, "evaluate")?;
    writer.param("input", input.display());
    writer.param("truth", truth_path.display());

    let mut lines = format!(
        "purity={}\ncoverage={}\nlabeled={}\nsteps={}\n",
        fmt17(report.purity),
        fmt17(report.coverage),
        result.labeled,
        result.steps()
    );
    let assignment: Vec<String> = report.assignment.iter().map(usize::to_string).collect();
    lines.push_str(&format!("assignment={}\n", assignment.join(",")));
    for (label, purity) in report.purity_per_label.iter().enumerate() {
        lines.push_str(&format!("purity_label_{label}={}\n", fmt17(*purity)));
    }
    writer.artifact("evaluation.txt", &lines)?;
    writer.finish()
}
