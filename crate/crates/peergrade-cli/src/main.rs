//! Batch front end over the peergrade library.
//!
//! Four subcommands (`aggregate`, `validate`, `peerrank`, `simulate`) read
//! the CSV schemas from the ingest module, write their results plus a run
//! manifest into `--out-dir`, and never touch their inputs. Exit codes:
//! 0 success (diagnostics included), 2 input or schema error, 1 internal
//! error.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use peergrade::aggregate::AggregationMethod;
use peergrade::ingest::{
    build_dataset, parse_engagement, parse_essays, parse_instructor, parse_quizzes,
    parse_reviews, ReviewDataset, RowError,
};
use peergrade::peerrank::{matrix_from_dataset, peerrank, peerrank_to_grades, PeerRankConfig};
use peergrade::simulate::{generate_cohort, parse_config, CohortConfig, RNG_ALGORITHM};
use peergrade::validity::{
    aggregate_essays, build_validity_report, pearson, FiveNumberSummary, HistogramBin,
    PairedScores, ValidityReport, HIST_BIN_WIDTH,
};
use peergrade::weight::{PerformanceDenominator, WeightScheme};

#[derive(Parser)]
#[command(name = "peergrade", version, about = "Peer-grading aggregation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate peer reviews into per-essay grades.
    Aggregate(AggregateArgs),
    /// Build the method x scheme validity grid against instructor grades.
    Validate(ValidateArgs),
    /// Run PeerRank over the review graph.
    Peerrank(PeerrankArgs),
    /// Generate synthetic cohorts and their validity grids.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Peer reviews CSV.
    #[arg(long)]
    reviews: PathBuf,
    /// Essay-to-author map CSV.
    #[arg(long)]
    essays: PathBuf,
    /// Instructor grades CSV.
    #[arg(long)]
    instructor: Option<PathBuf>,
    /// Lesson-completion log CSV.
    #[arg(long)]
    engagement: Option<PathBuf>,
    /// Quiz score log CSV.
    #[arg(long)]
    quizzes: Option<PathBuf>,
    /// Minimum reviews an essay needs to be retained.
    #[arg(long, default_value_t = 3)]
    min_reviews: usize,
}

#[derive(Args)]
struct GridArgs {
    /// Comma list of aggregation methods (default: all four).
    #[arg(long, value_delimiter = ',')]
    methods: Vec<String>,
    /// Comma list of weight schemes (default: all three).
    #[arg(long, value_delimiter = ',')]
    schemes: Vec<String>,
    /// Divide performance weights by attempted quizzes instead of all
    /// course quizzes.
    #[arg(long)]
    attempted_only: bool,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PeerrankArgs {
    #[arg(long)]
    reviews: PathBuf,
    #[arg(long)]
    essays: PathBuf,
    #[arg(long)]
    instructor: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    min_reviews: usize,
    /// Weight on the grader-weighted mean term.
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Weight on the grading-accuracy term (0 gives plain PeerRank).
    #[arg(long, default_value_t = 0.0)]
    beta: f64,
    /// Convergence threshold on the max per-essay change.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    replications: usize,
    /// Also write each cohort in the ingest CSV schemas.
    #[arg(long)]
    export_csv: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_students: Option<usize>,
    #[arg(long)]
    reviews_per_student: Option<usize>,
    #[arg(long)]
    quality_mean: Option<f64>,
    #[arg(long)]
    quality_sd: Option<f64>,
    #[arg(long)]
    sd_max: Option<f64>,
    #[arg(long)]
    sd_min: Option<f64>,
    #[arg(long)]
    bias_sd: Option<f64>,
    #[arg(long)]
    engagement_coupling: Option<f64>,
    #[arg(long)]
    total_lessons: Option<u32>,
    #[arg(long)]
    quiz_noise_sd: Option<f64>,
    #[arg(long)]
    out_dir: PathBuf,
}

enum CliError {
    /// Bad inputs, schemas, or flag values: exit 2.
    Input(String),
    /// Failures on our side of the contract (output IO): exit 1.
    Internal(String),
}

impl From<peergrade::Error> for CliError {
    fn from(e: peergrade::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Aggregate(args) => cmd_aggregate(args),
        Command::Validate(args) => cmd_validate(args),
        Command::Peerrank(args) => cmd_peerrank(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}

// ---------------------------------------------------------------------------
// shared plumbing

struct Manifest {
    lines: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        let mut m = Manifest { lines: Vec::new() };
        m.push("command", command);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m
    }

    fn push(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    fn input(&mut self, name: &str, bytes: &[u8]) {
        let digest = Sha256::digest(bytes);
        let hex: String = digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        });
        self.push(&format!("input.{name}.sha256"), hex);
    }

    /// Everything above the timestamp line is part of the run identity;
    /// the timestamp itself is not.
    fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.lines {
            let _ = writeln!(out, "{k}={v}");
        }
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let _ = writeln!(out, "timestamp_unix={now}");
        out
    }
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(&path, contents)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

fn parse_methods(raw: &[String]) -> Result<Vec<AggregationMethod>, CliError> {
    if raw.is_empty() {
        return Ok(AggregationMethod::ALL.to_vec());
    }
    raw.iter()
        .map(|s| s.parse::<AggregationMethod>().map_err(CliError::from))
        .collect()
}

fn parse_schemes(raw: &[String]) -> Result<Vec<WeightScheme>, CliError> {
    if raw.is_empty() {
        return Ok(WeightScheme::ALL.to_vec());
    }
    raw.iter()
        .map(|s| s.parse::<WeightScheme>().map_err(CliError::from))
        .collect()
}

fn denominator(attempted_only: bool) -> PerformanceDenominator {
    if attempted_only {
        PerformanceDenominator::AttemptedOnly
    } else {
        PerformanceDenominator::AllQuizzes
    }
}

struct LoadedData {
    dataset: ReviewDataset,
    row_errors: Vec<(&'static str, RowError)>,
    has_instructor: bool,
}

/// Parses every supplied input and joins the dataset. Header and flag
/// problems error out before anything is written; row-level problems are
/// carried as diagnostics.
fn load_dataset(
    args: &DataArgs,
    require_instructor: bool,
    manifest: &mut Manifest,
) -> Result<LoadedData, CliError> {
    let mut row_errors = Vec::new();

    let bytes = read_input(&args.reviews)?;
    manifest.input("reviews", &bytes);
    let reviews = parse_reviews(&bytes)?;
    row_errors.extend(reviews.row_errors.into_iter().map(|e| ("reviews", e)));

    let bytes = read_input(&args.essays)?;
    manifest.input("essays", &bytes);
    let essays = parse_essays(&bytes)?;
    row_errors.extend(essays.row_errors.into_iter().map(|e| ("essays", e)));

    let instructor = match &args.instructor {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.input("instructor", &bytes);
            let parsed = parse_instructor(&bytes)?;
            row_errors.extend(parsed.row_errors.into_iter().map(|e| ("instructor", e)));
            Some(parsed.value)
        }
        None if require_instructor => {
            return Err(CliError::Input(
                "--instructor is required for this command".to_string(),
            ))
        }
        None => None,
    };

    let engagement = match &args.engagement {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.input("engagement", &bytes);
            let parsed = parse_engagement(&bytes)?;
            row_errors.extend(parsed.row_errors.into_iter().map(|e| ("engagement", e)));
            parsed.value
        }
        None => Default::default(),
    };

    let performance = match &args.quizzes {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.input("quizzes", &bytes);
            let parsed = parse_quizzes(&bytes)?;
            row_errors.extend(parsed.row_errors.into_iter().map(|e| ("quizzes", e)));
            parsed.value
        }
        None => Default::default(),
    };

    let has_instructor = instructor.is_some();
    let dataset = build_dataset(
        reviews.value,
        &essays.value,
        instructor.as_ref(),
        engagement,
        performance,
        args.min_reviews,
    );
    manifest.push("param.min_reviews", args.min_reviews);
    Ok(LoadedData {
        dataset,
        row_errors,
        has_instructor,
    })
}

/// `kind,context,detail` rows covering row-level parse problems, dropped
/// self-reviews, and raters missing from the active weight records.
fn diagnostics_csv(
    data: &LoadedData,
    missing: &BTreeSet<(WeightScheme, String, String)>,
) -> String {
    let mut out = String::from("kind,context,detail\n");
    for (file, err) in &data.row_errors {
        let _ = writeln!(
            out,
            "{},{}:{},{}",
            err.kind.name(),
            file,
            err.line,
            err.detail.replace(',', ";")
        );
    }
    for diag in &data.dataset.diagnostics {
        let peergrade::ingest::DatasetDiagnostic::SelfReview { essay_id, rater_id } = diag;
        let _ = writeln!(out, "{},{essay_id},{rater_id}", diag.kind());
    }
    for (scheme, essay_id, rater_id) in missing {
        let _ = writeln!(out, "MISSING_RECORD,{}:{essay_id},{rater_id}", scheme.name());
    }
    out
}

fn exclusions_csv(dataset: &ReviewDataset) -> String {
    let mut out = String::from("essay_id,reason\n");
    for (essay_id, reason) in &dataset.exclusions {
        let _ = writeln!(out, "{essay_id},{}", reason.name());
    }
    out
}

fn hist_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("bin_start,bin_end,count\n");
    for bin in bins {
        let _ = writeln!(out, "{},{},{}", bin.lower, bin.lower + HIST_BIN_WIDTH, bin.count);
    }
    out
}

fn box_csv(summary: &FiveNumberSummary) -> String {
    format!(
        "min,q1,median,q3,max\n{},{},{},{},{}\n",
        summary.min, summary.q1, summary.median, summary.q3, summary.max
    )
}

fn grid_csv(
    report: &ValidityReport,
    methods: &[AggregationMethod],
    schemes: &[WeightScheme],
) -> String {
    let mut out = String::from("method,scheme,r,t,p,m\n");
    for &m in methods {
        for &s in schemes {
            let cell = report.cell(m, s).expect("report covers requested grid");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                m.name(),
                s.name(),
                cell.stats.r,
                cell.stats.t_statistic,
                cell.stats.p_value,
                cell.stats.m
            );
        }
    }
    out
}

fn report_txt(
    report: &ValidityReport,
    methods: &[AggregationMethod],
    schemes: &[WeightScheme],
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "m={}", report.m);
    let _ = writeln!(out, "instructor.mean={}", report.instructor.mean);
    let _ = writeln!(out, "instructor.sd={}", report.instructor.sd);
    let _ = writeln!(out, "instructor.min={}", report.instructor.min);
    let _ = writeln!(out, "instructor.q1={}", report.instructor_summary.q1);
    let _ = writeln!(out, "instructor.median={}", report.instructor_summary.median);
    let _ = writeln!(out, "instructor.q3={}", report.instructor_summary.q3);
    let _ = writeln!(out, "instructor.max={}", report.instructor.max);
    for &m in methods {
        for &s in schemes {
            let cell = report.cell(m, s).expect("report covers requested grid");
            let key = format!("cell.{}.{}", m.name(), s.name());
            let _ = writeln!(out, "{key}.r={}", cell.stats.r);
            let _ = writeln!(out, "{key}.t={}", cell.stats.t_statistic);
            let _ = writeln!(out, "{key}.p={}", cell.stats.p_value);
            let _ = writeln!(out, "{key}.m={}", cell.stats.m);
            let _ = writeln!(out, "{key}.degenerate={}", cell.stats.degenerate);
            let _ = writeln!(out, "{key}.constant={}", cell.stats.constant);
            let _ = writeln!(out, "{key}.mean={}", cell.descriptive.mean);
            let _ = writeln!(out, "{key}.sd={}", cell.descriptive.sd);
            let _ = writeln!(out, "{key}.min={}", cell.descriptive.min);
            let _ = writeln!(out, "{key}.max={}", cell.descriptive.max);
        }
    }
    out
}

/// Writes the per-cell and instructor plot data next to a grid.
fn write_plot_data(
    dir: &Path,
    report: &ValidityReport,
    methods: &[AggregationMethod],
    schemes: &[WeightScheme],
) -> Result<(), CliError> {
    for &m in methods {
        for &s in schemes {
            let cell = report.cell(m, s).expect("report covers requested grid");
            let stem = format!("{}_{}", m.name(), s.name());
            write_output(dir, &format!("hist_{stem}.csv"), &hist_csv(&cell.histogram))?;
            write_output(dir, &format!("box_{stem}.csv"), &box_csv(&cell.summary))?;
        }
    }
    write_output(dir, "hist_instructor.csv", &hist_csv(&report.instructor_histogram))?;
    write_output(dir, "box_instructor.csv", &box_csv(&report.instructor_summary))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// aggregate

fn cmd_aggregate(args: AggregateArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("aggregate");
    let methods = parse_methods(&args.grid.methods)?;
    let schemes = parse_schemes(&args.grid.schemes)?;
    let denom = denominator(args.grid.attempted_only);
    let data = load_dataset(&args.data, false, &mut manifest)?;
    manifest.push(
        "param.methods",
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
    );
    manifest.push(
        "param.schemes",
        schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
    );
    manifest.push("param.attempted_only", args.grid.attempted_only);

    let mut grades = String::from("essay_id,aggregated_grade,method,scheme,diagnostics\n");
    let mut missing = BTreeSet::new();
    for &m in &methods {
        for &s in &schemes {
            let rows = aggregate_essays(&data.dataset, m, s, denom)?;
            for row in rows {
                let codes: Vec<&str> = row.diagnostics.iter().map(|d| d.name()).collect();
                let _ = writeln!(
                    grades,
                    "{},{},{},{},{}",
                    row.essay_id,
                    row.value,
                    m.name(),
                    s.name(),
                    codes.join(";")
                );
                for rater in row.missing_raters {
                    missing.insert((s, row.essay_id.clone(), rater));
                }
            }
        }
    }

    write_output(&args.out_dir, "grades.csv", &grades)?;
    write_output(&args.out_dir, "exclusions.csv", &exclusions_csv(&data.dataset))?;
    write_output(&args.out_dir, "diagnostics.csv", &diagnostics_csv(&data, &missing))?;
    write_output(&args.out_dir, "manifest.txt", &manifest.render())
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(args: ValidateArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("validate");
    let methods = parse_methods(&args.grid.methods)?;
    let schemes = parse_schemes(&args.grid.schemes)?;
    let denom = denominator(args.grid.attempted_only);
    let data = load_dataset(&args.data, true, &mut manifest)?;
    manifest.push(
        "param.methods",
        methods.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
    );
    manifest.push(
        "param.schemes",
        schemes.iter().map(|s| s.name()).collect::<Vec<_>>().join(","),
    );
    manifest.push("param.attempted_only", args.grid.attempted_only);

    let report = build_validity_report(&data.dataset, &methods, &schemes, denom)?;

    let mut missing = BTreeSet::new();
    for diag in &report.diagnostics {
        if diag.diagnostic == peergrade::aggregate::Diagnostic::MissingRecord {
            missing.insert((diag.scheme, diag.essay_id.clone(), diag.detail.clone()));
        }
    }

    write_output(&args.out_dir, "grid.csv", &grid_csv(&report, &methods, &schemes))?;
    write_output(&args.out_dir, "report.txt", &report_txt(&report, &methods, &schemes))?;
    write_plot_data(&args.out_dir, &report, &methods, &schemes)?;
    write_output(&args.out_dir, "exclusions.csv", &exclusions_csv(&data.dataset))?;
    write_output(&args.out_dir, "diagnostics.csv", &diagnostics_csv(&data, &missing))?;
    write_output(&args.out_dir, "manifest.txt", &manifest.render())
}

// ---------------------------------------------------------------------------
// peerrank

fn cmd_peerrank(args: PeerrankArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("peerrank");
    let config = PeerRankConfig::new(args.alpha, args.beta, args.tolerance, args.max_iter)?;
    let data_args = DataArgs {
        reviews: args.reviews,
        essays: args.essays,
        instructor: args.instructor,
        engagement: None,
        quizzes: None,
        min_reviews: args.min_reviews,
    };
    let data = load_dataset(&data_args, false, &mut manifest)?;
    manifest.push("param.alpha", args.alpha);
    manifest.push("param.beta", args.beta);
    manifest.push("param.tolerance", args.tolerance);
    manifest.push("param.max_iter", args.max_iter);

    let build = matrix_from_dataset(&data.dataset)?;
    let result = peerrank(&build.matrix, &config);
    let grades = peerrank_to_grades(&result);

    let mut csv = String::from("essay_id,peerrank_grade\n");
    for (essay_id, grade) in build.essay_ids.iter().zip(&grades) {
        let _ = writeln!(csv, "{essay_id},{}", grade.value());
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "alpha={}", args.alpha);
    let _ = writeln!(summary, "beta={}", args.beta);
    let _ = writeln!(summary, "tolerance={}", args.tolerance);
    let _ = writeln!(summary, "max_iterations={}", args.max_iter);
    let _ = writeln!(summary, "iterations_used={}", result.iterations_used);
    let _ = writeln!(summary, "converged={}", result.converged);
    let _ = writeln!(summary, "max_delta={}", result.trajectory_max_delta);
    let _ = writeln!(summary, "dropped_reviews={}", build.dropped_reviews.len());
    if data.has_instructor {
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for (essay_id, grade) in build.essay_ids.iter().zip(&grades) {
            if let Some(instructor) =
                data.dataset.essay(essay_id).and_then(|e| e.instructor_grade)
            {
                pairs.push((grade.value(), instructor.value()));
            }
        }
        if pairs.len() >= 3 {
            let (xs, ys) = pairs.into_iter().unzip();
            let r = PairedScores::new(xs, ys)
                .and_then(|p| pearson(&p))
                .unwrap_or(f64::NAN);
            let _ = writeln!(summary, "r_vs_instructor={r}");
        }
    }

    write_output(&args.out_dir, "peerrank.csv", &csv)?;
    write_output(&args.out_dir, "summary.txt", &summary)?;
    write_output(&args.out_dir, "manifest.txt", &manifest.render())
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut manifest = Manifest::new("simulate");
    let mut config = match &args.config {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.input("config", &bytes);
            let text = String::from_utf8(bytes)
                .map_err(|e| CliError::Input(format!("config is not UTF-8: {e}")))?;
            parse_config(&text)?
        }
        None => CohortConfig::default(),
    };
    if let Some(v) = args.n_students {
        config.n_students = v;
    }
    if let Some(v) = args.reviews_per_student {
        config.reviews_per_student = v;
    }
    if let Some(v) = args.quality_mean {
        config.quality_mean = v;
    }
    if let Some(v) = args.quality_sd {
        config.quality_sd = v;
    }
    if let Some(v) = args.sd_max {
        config.sd_max = v;
    }
    if let Some(v) = args.sd_min {
        config.sd_min = v;
    }
    if let Some(v) = args.bias_sd {
        config.bias_sd = v;
    }
    if let Some(v) = args.engagement_coupling {
        config.engagement_coupling = v;
    }
    if let Some(v) = args.total_lessons {
        config.total_lessons = v;
    }
    if let Some(v) = args.quiz_noise_sd {
        config.quiz_noise_sd = v;
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    config.validate()?;
    if args.replications == 0 {
        return Err(CliError::Input("--replications must be at least 1".to_string()));
    }

    manifest.push("param.replications", args.replications);
    manifest.push("param.export_csv", args.export_csv);
    manifest.push("param.rng_algorithm", RNG_ALGORITHM);
    for (key, value) in [
        ("n_students", config.n_students.to_string()),
        ("reviews_per_student", config.reviews_per_student.to_string()),
        ("quality_mean", config.quality_mean.to_string()),
        ("quality_sd", config.quality_sd.to_string()),
        ("sd_max", config.sd_max.to_string()),
        ("sd_min", config.sd_min.to_string()),
        ("bias_sd", config.bias_sd.to_string()),
        ("engagement_coupling", config.engagement_coupling.to_string()),
        ("total_lessons", config.total_lessons.to_string()),
        ("quiz_noise_sd", config.quiz_noise_sd.to_string()),
        ("seed", config.seed.to_string()),
    ] {
        manifest.push(&format!("param.{key}"), value);
    }

    let methods = AggregationMethod::ALL;
    let schemes = WeightScheme::ALL;
    let mut reports = Vec::with_capacity(args.replications);
    let rep_width = (args.replications - 1).max(1).to_string().len().max(3);
    for rep in 0..args.replications {
        let rep_config = CohortConfig {
            seed: config.seed.wrapping_add(rep as u64),
            ..config
        };
        let cohort = generate_cohort(&rep_config)?;
        let report = build_validity_report(
            &cohort.dataset,
            &methods,
            &schemes,
            PerformanceDenominator::AllQuizzes,
        )?;
        let rep_dir = format!("rep_{rep:0rep_width$}");
        write_output(
            &args.out_dir.join(&rep_dir),
            "grid.csv",
            &grid_csv(&report, &methods, &schemes),
        )?;
        write_output(
            &args.out_dir.join(&rep_dir),
            "report.txt",
            &report_txt(&report, &methods, &schemes),
        )?;
        if args.export_csv {
            let csv = cohort.export_csv();
            let cohort_dir = args.out_dir.join(&rep_dir).join("cohort");
            write_output(&cohort_dir, "reviews.csv", &csv.reviews)?;
            write_output(&cohort_dir, "essays.csv", &csv.essays)?;
            write_output(&cohort_dir, "instructor.csv", &csv.instructor)?;
            write_output(&cohort_dir, "engagement.csv", &csv.engagement)?;
            write_output(&cohort_dir, "quizzes.csv", &csv.quizzes)?;
        }
        reports.push(report);
    }

    let mut summary = String::from("method,scheme,mean_r,min_r,max_r\n");
    for &m in &methods {
        for &s in &schemes {
            let rs: Vec<f64> = reports
                .iter()
                .map(|rep| rep.cell(m, s).expect("full grid").stats.r)
                .collect();
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            let min = rs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = rs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let _ = writeln!(summary, "{},{},{mean},{min},{max}", m.name(), s.name());
        }
    }
    write_output(&args.out_dir, "summary.csv", &summary)?;
    write_output(&args.out_dir, "manifest.txt", &manifest.render())
}
