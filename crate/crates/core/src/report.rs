//! Pipeline drivers and file formats behind the `score`, `equity` and
//! `compare` commands.
//!
//! Every command computes its full output in memory first and only then
//! touches the output directory, so a failed run leaves no partial files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Map, Value};

use crate::equity::{
    gini, lorenz_hexagon, lorenz_population, normalize_across_cities, rank_cities, top_share_ratio,
    CurveKind, EquityError, GiniTable, LorenzCurve, Metric, NormalizedTable, Normalization,
};
use crate::geo::{build_grid, GeoError, GeoPoint, HexGrid, StudyArea};
use crate::gtfs::{parse_feed, GtfsError};
use crate::population::{assign_population, load_population, PopFormat, PopulationError};
use crate::router::{build_timetable, RoutingError, WalkParams};
use crate::scores::{score_city, AccessibilityField, Averaging, ScoreError, ScoreParams};

/// Buffer around the stop hull when no boundary file is given.
pub const HULL_BUFFER_M: f64 = 2000.0;

pub const SCORES_HEADER: &str = "hex_q,hex_r,center_lon,center_lat,population,velocity_kmh,sociality";

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Gtfs(#[from] GtfsError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Population(#[from] PopulationError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("{metric}: {source}")]
    Equity { metric: String, source: EquityError },
    #[error(transparent)]
    Compare(EquityError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("{0}")]
    Usage(String),
}

impl ReportError {
    /// 1 for degenerate data, 2 for usage and I/O problems.
    pub fn exit_code(&self) -> u8 {
        match self {
            ReportError::Geo(GeoError::Degenerate(_)) => 1,
            ReportError::Equity {
                source: EquityError::Degenerate(_) | EquityError::Empty,
                ..
            } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, ReportError>;

/// Rounds to 6 significant digits and prints the shortest form.
pub fn fmt_num(x: f64) -> String {
    let r = round_sig(x);
    if r == 0.0 {
        "0".to_string()
    } else {
        format!("{r}")
    }
}

fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

// Coordinates get a fixed number of decimals instead: six significant digits
// of a longitude like 151.209 would be off by tens of meters.
fn round_coord(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn fmt_coord(x: f64) -> String {
    format!("{}", round_coord(x))
}

fn json_num(x: f64) -> Value {
    json!(round_sig(x))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub feed: PathBuf,
    pub population: PathBuf,
    pub pop_format: PopFormat,
    pub boundary: Option<PathBuf>,
    pub city: Option<String>,
    pub date: NaiveDate,
    pub window: (u32, u32),
    pub step_s: u32,
    pub walk: WalkParams,
    pub side_m: f64,
    pub budgets_min: Vec<f64>,
    pub averaging: Averaging,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window.0 >= self.window.1 {
            return Err(ReportError::Usage("window start must precede its end".into()));
        }
        if self.step_s == 0 {
            return Err(ReportError::Usage("departure step must be positive".into()));
        }
        if !(self.side_m > 0.0 && self.side_m.is_finite()) {
            return Err(ReportError::Usage(format!("hexagon side must be positive, got {}", self.side_m)));
        }
        if !(self.walk.speed_kmh > 0.0 && self.walk.max_walk_m > 0.0) {
            return Err(ReportError::Usage("walk speed and maximum walk must be positive".into()));
        }
        if self.budgets_min.is_empty() || self.budgets_min.iter().any(|b| !(*b > 0.0)) {
            return Err(ReportError::Usage("time budgets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub area: StudyArea,
    pub grid: HexGrid,
    pub field: AccessibilityField,
    pub population_outside: f64,
}

fn default_city(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .filter(|s| !s.is_empty())
        .unwrap_or("city")
        .to_string()
}

/// Ingest, tessellate, route and score.
pub fn run_score(cfg: &RunConfig) -> Result<ScoreRun> {
    cfg.validate()?;
    let feed = parse_feed(&cfg.feed, cfg.date)?;
    let cells = load_population(&cfg.population, cfg.pop_format)?;
    let area = match &cfg.boundary {
        Some(path) => {
            let mut area = StudyArea::from_geojson_file(path)?;
            if let Some(city) = &cfg.city {
                area.name = city.clone();
            }
            area
        }
        None => {
            let name = cfg.city.clone().unwrap_or_else(|| default_city(&cfg.feed));
            let stops: Vec<GeoPoint> = feed.stops.iter().map(|s| GeoPoint::new(s.lon, s.lat)).collect();
            log::info!("no boundary given; using the stop hull buffered by {HULL_BUFFER_M} m");
            StudyArea::buffered_hull(&name, &stops, HULL_BUFFER_M)?
        }
    };
    let grid = build_grid(&area, cfg.side_m)?;
    let pop = assign_population(&cells, &grid);
    if pop.outside > 0.0 {
        log::warn!("{} residents fall outside the study area", pop.outside);
    }
    let tt = build_timetable(&feed, &grid, cfg.walk)?;
    let params = ScoreParams {
        budgets_min: cfg.budgets_min.clone(),
        window: cfg.window,
        step_s: cfg.step_s,
        averaging: cfg.averaging,
    };
    let field = score_city(&grid, &tt, &pop, &params)?;
    Ok(ScoreRun {
        area,
        grid,
        field,
        population_outside: pop.outside,
    })
}

pub fn scores_csv(run: &ScoreRun) -> String {
    let mut out = String::with_capacity(64 * (run.grid.len() + 1));
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for id in run.grid.ids() {
        let h = run.grid.hexagon(id);
        let i = id.index();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            h.q,
            h.r,
            fmt_coord(h.center.lon),
            fmt_coord(h.center.lat),
            fmt_num(run.field.population[i]),
            fmt_num(run.field.velocity_kmh[i]),
            fmt_num(run.field.sociality[i]),
        );
    }
    out
}

pub fn scores_geojson(run: &ScoreRun) -> String {
    let features: Vec<Value> = run
        .grid
        .ids()
        .map(|id| {
            let h = run.grid.hexagon(id);
            let i = id.index();
            let ring: Vec<Value> = run
                .grid
                .boundary_lonlat(id)
                .iter()
                .map(|p| json!([round_coord(p.lon), round_coord(p.lat)]))
                .collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "Polygon", "coordinates": [ring] },
                "properties": {
                    "hex_q": h.q,
                    "hex_r": h.r,
                    "center_lon": round_coord(h.center.lon),
                    "center_lat": round_coord(h.center.lat),
                    "population": json_num(run.field.population[i]),
                    "velocity_kmh": json_num(run.field.velocity_kmh[i]),
                    "sociality": json_num(run.field.sociality[i]),
                }
            })
        })
        .collect();
    let doc = json!({
        "type": "FeatureCollection",
        "name": run.area.name,
        "features": features,
    });
    let mut s = serde_json::to_string(&doc).expect("serializable");
    s.push('\n');
    s
}

/// Output files of a command, as (file name, contents).
pub type Outputs = Vec<(String, String)>;

pub fn score_outputs(run: &ScoreRun) -> Outputs {
    vec![
        ("scores.csv".into(), scores_csv(run)),
        ("scores.geojson".into(), scores_geojson(run)),
    ]
}

pub fn write_outputs(dir: &Path, files: &Outputs) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for (name, contents) in files {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|source| ReportError::Io { path, source })?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ScoreRow {
    pub hex_q: i32,
    pub hex_r: i32,
    pub center_lon: f64,
    pub center_lat: f64,
    pub population: f64,
    pub velocity_kmh: f64,
    pub sociality: f64,
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<ScoreRow>> {
    let bytes = fs::read(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scores_csv(path, &bytes)
}

pub fn parse_scores_csv(path: &Path, bytes: &[u8]) -> Result<Vec<ScoreRow>> {
    let bad = |message: String| ReportError::Input {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().map_err(|e| bad(e.to_string()))?.iter().collect::<Vec<_>>().join(",");
    if header != SCORES_HEADER {
        return Err(bad(format!("expected header `{SCORES_HEADER}`, found `{header}`")));
    }
    let mut rows = Vec::new();
    for (k, rec) in reader.deserialize::<ScoreRow>().enumerate() {
        let row = rec.map_err(|e| bad(format!("row {}: {e}", k + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone)]
pub struct EquityReport {
    pub city: String,
    pub fraction: f64,
    pub hexagons: usize,
    pub population: f64,
    /// Indexed like [`Metric::ALL`].
    pub curves: Vec<LorenzCurve>,
    pub gini: [f64; 4],
    pub top_share: [f64; 4],
}

fn metric_err(metric: Metric) -> impl Fn(EquityError) -> ReportError {
    move |source| ReportError::Equity {
        metric: metric.key().to_string(),
        source,
    }
}

/// Lorenz curves, Gini indices and top-share ratios of a scored city.
/// Rows are put in (q, r) order first, so input order does not matter.
pub fn compute_equity(rows: &[ScoreRow], city: &str, fraction: f64) -> Result<EquityReport> {
    let mut rows = rows.to_vec();
    rows.sort_by_key(|r| (r.hex_q, r.hex_r));
    let velocity: Vec<f64> = rows.iter().map(|r| r.velocity_kmh).collect();
    let sociality: Vec<f64> = rows.iter().map(|r| r.sociality).collect();
    let pop: Vec<f64> = rows.iter().map(|r| r.population).collect();
    let ones = vec![1.0; rows.len()];
    let mut curves = Vec::with_capacity(4);
    let mut g = [0.0; 4];
    let mut top = [0.0; 4];
    for metric in Metric::ALL {
        let scores = match metric.score() {
            crate::equity::ScoreKind::Velocity => &velocity,
            crate::equity::ScoreKind::Sociality => &sociality,
        };
        let (curve, weights) = match metric.kind() {
            CurveKind::Hexagon => (lorenz_hexagon(scores, metric.score()), &ones),
            CurveKind::Population => (lorenz_population(scores, &pop, metric.score()), &pop),
        };
        let curve = curve.map_err(metric_err(metric))?;
        g[metric.index()] = gini(&curve);
        top[metric.index()] = top_share_ratio(scores, weights, fraction).map_err(metric_err(metric))?;
        curves.push(curve);
    }
    Ok(EquityReport {
        city: city.to_string(),
        fraction,
        hexagons: rows.len(),
        population: pop.iter().sum(),
        curves,
        gini: g,
        top_share: top,
    })
}

pub fn curve_file_stem(metric: Metric) -> &'static str {
    match metric {
        Metric::VelocityHex => "lorenz_v_hex",
        Metric::SocialityHex => "lorenz_s_hex",
        Metric::VelocityInd => "lorenz_v_ind",
        Metric::SocialityInd => "lorenz_s_ind",
    }
}

pub fn top_share_key(metric: Metric) -> String {
    format!("top_share_{}", &metric.key()[2..])
}

pub fn curve_csv(curve: &LorenzCurve) -> String {
    let mut out = String::from("x,y\n");
    for &(x, y) in &curve.points {
        let _ = writeln!(out, "{},{}", fmt_num(x), fmt_num(y));
    }
    out
}

const SVG_SIZE: f64 = 420.0;
const SVG_MARGIN: f64 = 50.0;

fn esc(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Unit-square plot with axes, the equality diagonal, the curve and its Gini.
pub fn curve_svg(curve: &LorenzCurve, title: &str, g: f64) -> String {
    let span = SVG_SIZE - 2.0 * SVG_MARGIN;
    let px = |x: f64| SVG_MARGIN + x * span;
    let py = |y: f64| SVG_SIZE - SVG_MARGIN - y * span;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{0}" viewBox="0 0 {0} {0}">"#,
        SVG_SIZE
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        SVG_SIZE / 2.0,
        esc(title)
    );
    // axes
    let _ = writeln!(
        s,
        r#"<path d="M{:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2}" fill="none" stroke="black"/>"#,
        px(0.0),
        py(1.0),
        px(0.0),
        py(0.0),
        px(1.0),
        py(0.0)
    );
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            px(t),
            py(0.0) + 16.0,
            t
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="10" text-anchor="end">{}</text>"#,
            px(0.0) - 6.0,
            py(t) + 3.0,
            t
        );
    }
    let xlabel = match curve.kind {
        CurveKind::Hexagon => "cumulative share of hexagons",
        CurveKind::Population => "cumulative share of population",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle">{}</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE - 12.0,
        xlabel
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-family="sans-serif" font-size="11" text-anchor="middle" transform="rotate(-90 14 {:.2})">cumulative share of accessibility</text>"#,
        SVG_SIZE / 2.0,
        SVG_SIZE / 2.0
    );
    let _ = writeln!(
        s,
        r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="4 4"/>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    let mut pts = String::new();
    for (k, &(x, y)) in curve.points.iter().enumerate() {
        if k > 0 {
            pts.push(' ');
        }
        let _ = write!(pts, "{:.2},{:.2}", px(x), py(y));
    }
    let _ = writeln!(s, r#"<polyline points="{pts}" fill="none" stroke="steelblue" stroke-width="2"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">Gini = {}</text>"#,
        px(0.05),
        py(0.9),
        fmt_num(g)
    );
    s.push_str("</svg>\n");
    s
}

pub fn gini_json(report: &EquityReport) -> String {
    let mut obj = Map::new();
    obj.insert("city".into(), json!(report.city));
    obj.insert("fraction".into(), json_num(report.fraction));
    obj.insert("hexagons".into(), json!(report.hexagons));
    obj.insert("population".into(), json_num(report.population));
    for metric in Metric::ALL {
        obj.insert(metric.key().into(), json_num(report.gini[metric.index()]));
        obj.insert(top_share_key(metric), json_num(report.top_share[metric.index()]));
    }
    let mut s = serde_json::to_string_pretty(&Value::Object(obj)).expect("serializable");
    s.push('\n');
    s
}

pub fn equity_outputs(report: &EquityReport) -> Outputs {
    let mut files = Vec::new();
    for metric in Metric::ALL {
        let curve = &report.curves[metric.index()];
        let stem = curve_file_stem(metric);
        let title = format!("{} {}", report.city, metric.key());
        files.push((format!("{stem}.csv"), curve_csv(curve)));
        files.push((format!("{stem}.svg"), curve_svg(curve, &title, report.gini[metric.index()])));
    }
    files.push(("gini.json".into(), gini_json(report)));
    files
}

/// City name and the four Gini values from a `gini.json`.
pub fn read_gini_json(path: &Path) -> Result<(String, [f64; 4])> {
    let bad = |message: String| ReportError::Input {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let city = value
        .get("city")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("missing string `city`".into()))?
        .to_string();
    let mut g = [0.0; 4];
    for metric in Metric::ALL {
        let v = value
            .get(metric.key())
            .and_then(Value::as_f64)
            .ok_or_else(|| bad(format!("missing number `{}`", metric.key())))?;
        if !(0.0..1.0).contains(&v) {
            return Err(bad(format!("`{}` = {v} is outside [0, 1)", metric.key())));
        }
        g[metric.index()] = v;
    }
    Ok((city, g))
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub raw: GiniTable,
    pub normalized: NormalizedTable,
    pub mode: Normalization,
    pub rankings: Vec<(Metric, Vec<String>)>,
}

pub fn compare(entries: &[(String, [f64; 4])], mode: Normalization) -> Result<Comparison> {
    let mut raw = GiniTable::new();
    for (city, g) in entries {
        raw.insert(city.clone(), *g).map_err(ReportError::Compare)?;
    }
    let normalized = normalize_across_cities(&raw, mode).map_err(ReportError::Compare)?;
    for m in &normalized.constant_columns {
        log::warn!("{m} is identical for every city; its normalized values are 0");
    }
    let rankings = Metric::ALL.into_iter().map(|m| (m, rank_cities(&raw, m))).collect();
    Ok(Comparison {
        raw,
        normalized,
        mode,
        rankings,
    })
}

fn table_json(table: &GiniTable) -> Value {
    let rows: BTreeMap<&str, Value> = table
        .rows()
        .iter()
        .map(|(city, g)| {
            let cols: Map<String, Value> =
                Metric::ALL.into_iter().map(|m| (m.key().to_string(), json_num(g[m.index()]))).collect();
            (city.as_str(), Value::Object(cols))
        })
        .collect();
    json!(rows)
}

pub fn comparison_json(c: &Comparison) -> String {
    let cities: Vec<&str> = c.raw.rows().iter().map(|(city, _)| city.as_str()).collect();
    let rankings: Map<String, Value> = c.rankings.iter().map(|(m, r)| (m.key().to_string(), json!(r))).collect();
    let doc = json!({
        "cities": cities,
        "normalization": match c.mode {
            Normalization::MeanCentered => "table4",
            Normalization::MinMax => "minmax",
        },
        "raw": table_json(&c.raw),
        "normalized": table_json(&c.normalized.table),
        "constant_columns": c.normalized.constant_columns.iter().map(|m| m.key()).collect::<Vec<_>>(),
        "rankings": rankings,
    });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
    s.push('\n');
    s
}

pub fn ranking_csv(c: &Comparison) -> String {
    let n = c.raw.len();
    let mut out = String::from("metric");
    for k in 1..=n {
        let _ = write!(out, ",rank{k}");
    }
    out.push('\n');
    for (m, cities) in &c.rankings {
        out.push_str(m.key());
        for city in cities {
            out.push(',');
            out.push_str(&csv_field(city));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn compare_outputs(c: &Comparison) -> Outputs {
    vec![
        ("comparison.json".into(), comparison_json(c)),
        ("ranking.csv".into(), ranking_csv(c)),
    ]
}
