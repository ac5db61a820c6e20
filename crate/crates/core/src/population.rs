//! Gridded population input (CSV points or ESRI ASCII grids) and its
//! aggregation onto hexagons by cell-center point assignment.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::geo::{HexGrid, HexId};

#[derive(Debug, thiserror::Error)]
pub enum PopulationError {
    #[error("cannot read population file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed header: {message}")]
    Header { path: String, message: String },
    #[error("{path} row {row}: {message}")]
    Row {
        path: String,
        row: u64,
        message: String,
    },
    #[error("unknown population format `{0}` (expected csv or ascii_grid)")]
    UnknownFormat(String),
}

pub type Result<T> = std::result::Result<T, PopulationError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationCell {
    pub lon: f64,
    pub lat: f64,
    pub count: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PopFormat {
    Csv,
    AsciiGrid,
}

impl FromStr for PopFormat {
    type Err = PopulationError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(PopFormat::Csv),
            "ascii_grid" | "asc" => Ok(PopFormat::AsciiGrid),
            other => Err(PopulationError::UnknownFormat(other.to_string())),
        }
    }
}

/// Loads population cells. Zero-count cells are dropped.
pub fn load_population(path: impl AsRef<Path>, format: PopFormat) -> Result<Vec<PopulationCell>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PopulationError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path.display().to_string();
    match format {
        PopFormat::Csv => parse_csv(&name, &bytes),
        PopFormat::AsciiGrid => parse_ascii_grid(&name, &String::from_utf8_lossy(&bytes)),
    }
}

fn check_count(path: &str, row: u64, count: f64) -> Result<()> {
    if !count.is_finite() || count < 0.0 {
        return Err(PopulationError::Row {
            path: path.to_string(),
            row,
            message: format!("count must be finite and non-negative, got {count}"),
        });
    }
    Ok(())
}

pub fn parse_csv(path: &str, bytes: &[u8]) -> Result<Vec<PopulationCell>> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(bytes);
    let header_err = |message: String| PopulationError::Header {
        path: path.to_string(),
        message,
    };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?;
    if headers.iter().collect::<Vec<_>>() != ["lon", "lat", "count"] {
        return Err(header_err(format!(
            "expected `lon,lat,count`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| PopulationError::Row {
            path: path.to_string(),
            row: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let row = record.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().map_err(|_| PopulationError::Row {
                path: path.to_string(),
                row,
                message: format!("invalid {name} `{raw}`"),
            })
        };
        let (lon, lat, count) = (field(0, "lon")?, field(1, "lat")?, field(2, "count")?);
        check_count(path, row, count)?;
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(PopulationError::Row {
                path: path.to_string(),
                row,
                message: format!("coordinate ({lon}, {lat}) outside WGS84 range"),
            });
        }
        if count > 0.0 {
            cells.push(PopulationCell { lon, lat, count });
        }
    }
    Ok(cells)
}

/// Parses an ESRI ASCII grid in WGS84 degrees. Rows run north to south.
pub fn parse_ascii_grid(path: &str, text: &str) -> Result<Vec<PopulationCell>> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let header_err = |message: String| PopulationError::Header {
        path: path.to_string(),
        message,
    };
    let mut lines = text.lines().enumerate().peekable();
    let (mut ncols, mut nrows, mut cellsize) = (None, None, None);
    let (mut xll, mut yll, mut centered) = (None, None, false);
    let mut nodata: Option<f64> = None;
    while let Some((_, line)) = lines.peek() {
        let mut parts = line.split_whitespace();
        let Some(key) = parts.next() else {
            lines.next();
            continue;
        };
        if !key.starts_with(|c: char| c.is_ascii_alphabetic()) {
            break;
        }
        let value = parts
            .next()
            .ok_or_else(|| header_err(format!("`{key}` has no value")))?;
        let num: f64 = value
            .parse()
            .map_err(|_| header_err(format!("`{key}` value `{value}` is not a number")))?;
        match key.to_ascii_lowercase().as_str() {
            "ncols" => ncols = Some(num),
            "nrows" => nrows = Some(num),
            "cellsize" => cellsize = Some(num),
            "xllcorner" => xll = Some(num),
            "yllcorner" => yll = Some(num),
            "xllcenter" => {
                xll = Some(num);
                centered = true;
            }
            "yllcenter" => {
                yll = Some(num);
                centered = true;
            }
            "nodata_value" => nodata = Some(num),
            other => return Err(header_err(format!("unknown header key `{other}`"))),
        }
        lines.next();
    }
    let as_count = |v: Option<f64>, key: &str| -> Result<usize> {
        match v {
            Some(n) if n >= 1.0 && n.fract() == 0.0 => Ok(n as usize),
            Some(n) => Err(header_err(format!("`{key}` must be a positive integer, got {n}"))),
            None => Err(header_err(format!("missing `{key}`"))),
        }
    };
    let ncols = as_count(ncols, "ncols")?;
    let nrows = as_count(nrows, "nrows")?;
    let cellsize = cellsize.ok_or_else(|| header_err("missing `cellsize`".into()))?;
    if !(cellsize > 0.0) {
        return Err(header_err(format!("cellsize must be positive, got {cellsize}")));
    }
    let xll = xll.ok_or_else(|| header_err("missing `xllcorner`".into()))?;
    let yll = yll.ok_or_else(|| header_err("missing `yllcorner`".into()))?;
    // corner-registered grids put the first center half a cell in
    let offset = if centered { 0.0 } else { 0.5 };

    let mut cells = Vec::new();
    let mut index = 0usize;
    for (line_no, line) in lines {
        let row_no = line_no as u64 + 1;
        for token in line.split_whitespace() {
            if index >= ncols * nrows {
                return Err(PopulationError::Row {
                    path: path.to_string(),
                    row: row_no,
                    message: format!("more than {} values", ncols * nrows),
                });
            }
            let value: f64 = token.parse().map_err(|_| PopulationError::Row {
                path: path.to_string(),
                row: row_no,
                message: format!("invalid value `{token}`"),
            })?;
            let (row, col) = (index / ncols, index % ncols);
            index += 1;
            if nodata == Some(value) {
                continue;
            }
            check_count(path, row_no, value)?;
            if value == 0.0 {
                continue;
            }
            cells.push(PopulationCell {
                lon: xll + (col as f64 + offset) * cellsize,
                lat: yll + ((nrows - 1 - row) as f64 + offset) * cellsize,
                count: value,
            });
        }
    }
    if index != ncols * nrows {
        return Err(PopulationError::Row {
            path: path.to_string(),
            row: text.lines().count() as u64,
            message: format!("expected {} values, found {index}", ncols * nrows),
        });
    }
    Ok(cells)
}

/// Population per hexagon plus the total of cells that fall outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationAssignment {
    pub per_hex: Vec<f64>,
    pub outside: f64,
}

impl PopulationAssignment {
    pub fn get(&self, id: HexId) -> f64 {
        self.per_hex[id.index()]
    }

    pub fn total(&self) -> f64 {
        self.per_hex.iter().sum::<f64>() + self.outside
    }
}

/// Adds each cell's count to the hexagon containing its center.
///
/// Counts are summed in sorted order per hexagon so the result does not
/// depend on the order of `cells`.
pub fn assign_population(cells: &[PopulationCell], grid: &HexGrid) -> PopulationAssignment {
    let mut located: Vec<(Option<HexId>, f64)> = cells
        .iter()
        .map(|c| (grid.locate(c.lon, c.lat), c.count))
        .collect();
    located.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut per_hex = vec![0.0; grid.len()];
    let mut outside = 0.0;
    for (hex, count) in located {
        match hex {
            Some(id) => per_hex[id.index()] += count,
            None => outside += count,
        }
    }
    PopulationAssignment { per_hex, outside }
}
