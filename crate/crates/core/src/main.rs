use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use transit_equity::equity::Normalization;
use transit_equity::gtfs::parse_gtfs_time;
use transit_equity::population::PopFormat;
use transit_equity::report::{
    compare, compare_outputs, compute_equity, equity_outputs, read_gini_json, read_scores_csv, run_score,
    score_outputs, write_outputs, ReportError, Result, RunConfig,
};
use transit_equity::router::WalkParams;
use transit_equity::scores::{Averaging, DEFAULT_BUDGETS_MIN};

#[derive(Parser)]
#[command(name = "transit-equity", version, about = "Transit accessibility scores and equity metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every hexagon of a city; writes scores.csv and scores.geojson.
    Score(ScoreArgs),
    /// Lorenz curves, Gini indices and top-share ratios from a scores.csv.
    Equity(EquityArgs),
    /// Normalize and rank the Gini indices of several cities.
    Compare(CompareArgs),
}

#[derive(Args)]
struct ScoreArgs {
    /// Key-value TOML file; keys are the long flag names. Flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// GTFS directory or zip archive.
    #[arg(long)]
    feed: Option<PathBuf>,
    #[arg(long)]
    population: Option<PathBuf>,
    /// csv (lon,lat,count) or ascii_grid.
    #[arg(long)]
    pop_format: Option<String>,
    /// GeoJSON Polygon/MultiPolygon; defaults to the buffered hull of the stops.
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[arg(long)]
    city: Option<String>,
    /// Service date, YYYY-MM-DD.
    #[arg(long)]
    date: Option<String>,
    /// Departure window HH:MM-HH:MM [default: 06:00-20:00].
    #[arg(long)]
    window: Option<String>,
    /// Minutes between sampled departures [default: 20].
    #[arg(long)]
    step_min: Option<u32>,
    /// [default: 5]
    #[arg(long)]
    walk_kmh: Option<f64>,
    /// [default: 1500]
    #[arg(long)]
    max_walk_m: Option<f64>,
    /// Hexagon side in meters [default: 500].
    #[arg(long)]
    side_m: Option<f64>,
    /// Comma-separated time budgets [default: 15,30,45,60].
    #[arg(long)]
    budgets_min: Option<String>,
    /// times: average travel times, then score; scores: score each departure, then average.
    #[arg(long)]
    average: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EquityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// scores.csv written by `score`.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// City name in gini.json [default: name of the directory holding scores.csv].
    #[arg(long)]
    city: Option<String>,
    /// Share of stakeholders in the top-share ratios [default: 0.01].
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// gini.json files, one per city.
    #[arg(required = true)]
    gini: Vec<PathBuf>,
    /// table4 (mean-centered) or minmax [default: table4].
    #[arg(long)]
    normalize: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    feed: Option<PathBuf>,
    population: Option<PathBuf>,
    pop_format: Option<String>,
    boundary: Option<PathBuf>,
    city: Option<String>,
    date: Option<String>,
    window: Option<String>,
    step_min: Option<u32>,
    walk_kmh: Option<f64>,
    max_walk_m: Option<f64>,
    side_m: Option<f64>,
    budgets_min: Option<Budgets>,
    average: Option<String>,
    normalize: Option<String>,
    fraction: Option<f64>,
    out: Option<PathBuf>,
    scores: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Budgets {
    List(Vec<f64>),
    Text(String),
}

impl FileConfig {
    /// Loads the file and resolves its relative paths against its directory.
    fn load(path: Option<&Path>) -> Result<FileConfig> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: FileConfig = toml::from_str(&text).map_err(|e| ReportError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.feed,
            &mut cfg.population,
            &mut cfg.boundary,
            &mut cfg.out,
            &mut cfg.scores,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

fn usage(msg: impl Into<String>) -> ReportError {
    ReportError::Usage(msg.into())
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("--{flag} is required")))
}

fn parse_window(text: &str) -> Result<(u32, u32)> {
    let bad = || usage(format!("invalid window `{text}`, expected HH:MM-HH:MM"));
    let (a, b) = text.split_once('-').ok_or_else(bad)?;
    let t = |s: &str| parse_gtfs_time(&format!("{}:00", s.trim())).map_err(|_| bad());
    Ok((t(a)?, t(b)?))
}

fn parse_budgets(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("invalid budget `{s}` in `{text}`")))
        })
        .collect()
}

fn parse_averaging(text: &str) -> Result<Averaging> {
    match text {
        "times" => Ok(Averaging::Times),
        "scores" => Ok(Averaging::Scores),
        other => Err(usage(format!("--average must be `times` or `scores`, got `{other}`"))),
    }
}

fn parse_normalization(text: &str) -> Result<Normalization> {
    match text {
        "table4" => Ok(Normalization::MeanCentered),
        "minmax" => Ok(Normalization::MinMax),
        other => Err(usage(format!("--normalize must be `table4` or `minmax`, got `{other}`"))),
    }
}

fn score_config(args: ScoreArgs, file: FileConfig) -> Result<(RunConfig, PathBuf)> {
    let date_text = required(args.date.or(file.date), "date")?;
    let date = NaiveDate::parse_from_str(&date_text, "%Y-%m-%d")
        .map_err(|_| usage(format!("invalid date `{date_text}`, expected YYYY-MM-DD")))?;
    let pop_format = match args.pop_format.or(file.pop_format) {
        Some(f) => f.parse::<PopFormat>()?,
        None => PopFormat::Csv,
    };
    let budgets_min = match (args.budgets_min, file.budgets_min) {
        (Some(text), _) | (None, Some(Budgets::Text(text))) => parse_budgets(&text)?,
        (None, Some(Budgets::List(list))) => list,
        (None, None) => DEFAULT_BUDGETS_MIN.to_vec(),
    };
    let cfg = RunConfig {
        feed: required(args.feed.or(file.feed), "feed")?,
        population: required(args.population.or(file.population), "population")?,
        pop_format,
        boundary: args.boundary.or(file.boundary),
        city: args.city.or(file.city),
        date,
        window: parse_window(args.window.or(file.window).as_deref().unwrap_or("06:00-20:00"))?,
        step_s: args.step_min.or(file.step_min).unwrap_or(20) * 60,
        walk: WalkParams {
            speed_kmh: args.walk_kmh.or(file.walk_kmh).unwrap_or(5.0),
            max_walk_m: args.max_walk_m.or(file.max_walk_m).unwrap_or(1500.0),
        },
        side_m: args.side_m.or(file.side_m).unwrap_or(500.0),
        budgets_min,
        averaging: parse_averaging(args.average.or(file.average).as_deref().unwrap_or("times"))?,
    };
    cfg.validate()?;
    let out = required(args.out.or(file.out), "out")?;
    Ok((cfg, out))
}

fn cmd_score(args: ScoreArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let (cfg, out) = score_config(args, file)?;
    let run = run_score(&cfg)?;
    log::info!("scored {} hexagons of {}", run.grid.len(), run.area.name);
    write_outputs(&out, &score_outputs(&run))
}

fn cmd_equity(args: EquityArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let scores = required(args.scores.or(file.scores), "scores")?;
    let out = required(args.out.or(file.out), "out")?;
    let fraction = args.fraction.or(file.fraction).unwrap_or(0.01);
    let city = args.city.or(file.city).unwrap_or_else(|| {
        std::fs::canonicalize(&scores)
            .ok()
            .and_then(|p| p.parent()?.file_name()?.to_str().map(str::to_string))
            .unwrap_or_else(|| "city".to_string())
    });
    let rows = read_scores_csv(&scores)?;
    let report = compute_equity(&rows, &city, fraction)?;
    write_outputs(&out, &equity_outputs(&report))
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let out = required(args.out.or(file.out), "out")?;
    let mode = parse_normalization(args.normalize.or(file.normalize).as_deref().unwrap_or("table4"))?;
    let entries = args.gini.iter().map(|p| read_gini_json(p)).collect::<Result<Vec<_>>>()?;
    let comparison = compare(&entries, mode)?;
    write_outputs(&out, &compare_outputs(&comparison))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(a) => cmd_score(a),
        Command::Equity(a) => cmd_equity(a),
        Command::Compare(a) => cmd_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
