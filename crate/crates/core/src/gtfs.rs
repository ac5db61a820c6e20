//! GTFS static feed ingestion, restricted to the trips running on one service date.
//!
//! Only the files needed for schedule-based routing are read: `stops.txt`,
//! `routes.txt`, `trips.txt`, `stop_times.txt`, `calendar.txt`,
//! `calendar_dates.txt`, `frequencies.txt` and `transfers.txt`. Shapes, fares
//! and everything else are ignored, as are unknown columns.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};

const MAX_REPORTED: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum GtfsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read zip archive {path}: {source}")]
    Zip {
        path: PathBuf,
        source: zip::result::ZipError,
    },
    #[error("feed {path} is missing required file(s): {}", .files.join(", "))]
    MissingFiles { path: PathBuf, files: Vec<String> },
    #[error("{file}: missing required column `{column}`")]
    MissingColumn { file: String, column: String },
    #[error("{file}: malformed CSV: {message}")]
    Csv { file: String, message: String },
    #[error("{file} row {row}: invalid `{field}`: {message}")]
    InvalidField {
        file: String,
        row: u64,
        field: String,
        message: String,
    },
    #[error("{file} row {row}: duplicate id `{id}`")]
    DuplicateId { file: String, row: u64, id: String },
    #[error("dangling references:\n{}", .0.join("\n"))]
    DanglingReferences(Vec<String>),
    #[error("trip `{trip_id}`: {message}")]
    InvalidTrip { trip_id: String, message: String },
    #[error("frequencies for trip `{trip_id}`: {message}")]
    InvalidFrequency { trip_id: String, message: String },
}

pub type Result<T> = std::result::Result<T, GtfsError>;

/// Error from [`parse_gtfs_time`]; the caller attaches file and row context.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("`{text}` is not a valid H:MM:SS time ({reason})")]
pub struct TimeFormatError {
    pub text: String,
    pub reason: &'static str,
}

/// Parses a GTFS `H:MM:SS` / `HH:MM:SS` time into seconds after midnight.
///
/// Hours above 23 are accepted for service running past midnight.
pub fn parse_gtfs_time(text: &str) -> std::result::Result<u32, TimeFormatError> {
    let err = |reason| TimeFormatError {
        text: text.to_string(),
        reason,
    };
    let trimmed = text.trim();
    let mut parts = trimmed.split(':');
    let (h, m, s) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some(h), Some(m), Some(s), None) => (h, m, s),
        _ => return Err(err("expected three colon-separated fields")),
    };
    let digits = |f: &str| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit());
    if !digits(h) || h.len() > 2 {
        return Err(err("hours must be one or two digits"));
    }
    if !digits(m) || m.len() != 2 {
        return Err(err("minutes must be two digits"));
    }
    if !digits(s) || s.len() != 2 {
        return Err(err("seconds must be two digits"));
    }
    let (h, m, s): (u32, u32, u32) = (h.parse().unwrap(), m.parse().unwrap(), s.parse().unwrap());
    if m > 59 {
        return Err(err("minutes out of range"));
    }
    if s > 59 {
        return Err(err("seconds out of range"));
    }
    Ok(3600 * h + 60 * m + s)
}

/// Formats seconds after midnight as `HH:MM:SS` (hours may exceed 23).
pub fn format_gtfs_time(seconds: u32) -> String {
    format!(
        "{:02}:{:02}:{:02}",
        seconds / 3600,
        (seconds / 60) % 60,
        seconds % 60
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stop {
    pub id: String,
    pub name: String,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Route {
    pub id: String,
    pub short_name: String,
    pub route_type: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trip {
    pub id: String,
    pub route_id: String,
    pub service_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopTime {
    pub trip_id: String,
    pub stop_id: String,
    pub arrival_s: u32,
    pub departure_s: u32,
    pub stop_sequence: u32,
}

/// Weekly service pattern from `calendar.txt`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calendar {
    pub service_id: String,
    /// Monday first.
    pub weekdays: [bool; 7],
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl Calendar {
    pub fn covers(&self, date: NaiveDate) -> bool {
        date >= self.start_date
            && date <= self.end_date
            && self.weekdays[date.weekday().num_days_from_monday() as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServiceException {
    Added,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frequency {
    pub trip_id: String,
    pub start_s: u32,
    pub end_s: u32,
    pub headway_s: i64,
    pub exact_times: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transfer {
    pub from_stop_id: String,
    pub to_stop_id: String,
    pub transfer_type: u8,
    pub min_transfer_s: Option<u32>,
}

/// In-memory timetable for a single service date.
///
/// `trips` holds only trips active on `service_date`; trips listed in
/// `frequencies.txt` are replaced by their concrete expansions. `stop_times`
/// is keyed by trip id, each list sorted by `stop_sequence`.
#[derive(Debug, Clone, PartialEq)]
pub struct Feed {
    pub stops: Vec<Stop>,
    pub routes: Vec<Route>,
    pub trips: Vec<Trip>,
    pub stop_times: BTreeMap<String, Vec<StopTime>>,
    pub calendars: BTreeMap<String, Calendar>,
    pub calendar_overrides: BTreeMap<(String, NaiveDate), ServiceException>,
    pub frequencies: Vec<Frequency>,
    pub transfers: Vec<Transfer>,
    pub service_date: NaiveDate,
}

impl Feed {
    pub fn stop_index(&self) -> HashMap<&str, usize> {
        self.stops
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect()
    }

    pub fn stop_times_of(&self, trip_id: &str) -> &[StopTime] {
        self.stop_times
            .get(trip_id)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Service ids running on `date`: weekly calendar matches plus `calendar_dates`
/// additions, minus `calendar_dates` removals.
pub fn active_service_ids(
    calendars: &BTreeMap<String, Calendar>,
    calendar_overrides: &BTreeMap<(String, NaiveDate), ServiceException>,
    date: NaiveDate,
) -> BTreeSet<String> {
    let mut active: BTreeSet<String> = calendars
        .values()
        .filter(|c| c.covers(date))
        .map(|c| c.service_id.clone())
        .collect();
    for ((service_id, d), exception) in calendar_overrides {
        if *d != date {
            continue;
        }
        match exception {
            ServiceException::Added => {
                active.insert(service_id.clone());
            }
            ServiceException::Removed => {
                active.remove(service_id);
            }
        }
    }
    active
}

/// Expands a frequency-based template trip into concrete trips.
///
/// For each row, departures are `start, start + headway, ...` strictly before
/// `end`. Every concrete trip copies the template's stop times shifted by the
/// offset between its departure and the template's first departure.
/// Concrete trips are named `<template id>#<n>`, numbered from 0 in departure order.
pub fn expand_frequencies(
    trip: &Trip,
    template: &[StopTime],
    rows: &[Frequency],
) -> Result<Vec<(Trip, Vec<StopTime>)>> {
    let invalid = |message: String| GtfsError::InvalidFrequency {
        trip_id: trip.id.clone(),
        message,
    };
    let first = template
        .first()
        .ok_or_else(|| invalid("template trip has no stop times".into()))?;
    let first_departure = i64::from(first.departure_s);

    let mut departures = Vec::new();
    for row in rows {
        if row.headway_s <= 0 {
            return Err(invalid(format!("headway_secs must be positive, got {}", row.headway_s)));
        }
        if row.start_s >= row.end_s {
            return Err(invalid(format!(
                "start_time {} must precede end_time {}",
                format_gtfs_time(row.start_s),
                format_gtfs_time(row.end_s)
            )));
        }
        let mut t = i64::from(row.start_s);
        while t < i64::from(row.end_s) {
            departures.push(t);
            t += row.headway_s;
        }
    }
    departures.sort_unstable();

    departures
        .into_iter()
        .enumerate()
        .map(|(n, departure)| {
            let offset = departure - first_departure;
            let id = format!("{}#{}", trip.id, n);
            let shift = |s: u32| -> Result<u32> {
                u32::try_from(i64::from(s) + offset)
                    .map_err(|_| invalid(format!("departure {departure} shifts a stop time before midnight")))
            };
            let times = template
                .iter()
                .map(|st| {
                    Ok(StopTime {
                        trip_id: id.clone(),
                        stop_id: st.stop_id.clone(),
                        arrival_s: shift(st.arrival_s)?,
                        departure_s: shift(st.departure_s)?,
                        stop_sequence: st.stop_sequence,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((
                Trip {
                    id,
                    route_id: trip.route_id.clone(),
                    service_id: trip.service_id.clone(),
                },
                times,
            ))
        })
        .collect()
}

enum Source {
    Dir(PathBuf),
    Zip(HashMap<String, Vec<u8>>),
}

const NEEDED_FILES: [&str; 8] = [
    "stops.txt",
    "routes.txt",
    "trips.txt",
    "stop_times.txt",
    "calendar.txt",
    "calendar_dates.txt",
    "frequencies.txt",
    "transfers.txt",
];

impl Source {
    fn open(path: &Path) -> Result<Self> {
        let io_err = |source| GtfsError::Io {
            path: path.to_path_buf(),
            source,
        };
        let meta = fs::metadata(path).map_err(io_err)?;
        if meta.is_dir() {
            return Ok(Source::Dir(path.to_path_buf()));
        }
        let zip_err = |source| GtfsError::Zip {
            path: path.to_path_buf(),
            source,
        };
        let file = fs::File::open(path).map_err(io_err)?;
        let mut archive = zip::ZipArchive::new(file).map_err(zip_err)?;
        // Entries are matched by base name; nested folders are common in published feeds.
        let mut names: Vec<(String, usize)> = Vec::new();
        for i in 0..archive.len() {
            let entry = archive.by_index(i).map_err(zip_err)?;
            if entry.is_dir() {
                continue;
            }
            names.push((entry.name().to_string(), i));
        }
        names.sort();
        let mut files = HashMap::new();
        for (name, i) in names {
            let base = name.rsplit('/').next().unwrap_or(&name).to_string();
            if !NEEDED_FILES.contains(&base.as_str()) || files.contains_key(&base) {
                continue;
            }
            let mut entry = archive.by_index(i).map_err(zip_err)?;
            let mut buf = Vec::with_capacity(entry.size() as usize);
            entry.read_to_end(&mut buf).map_err(io_err)?;
            files.insert(base, buf);
        }
        Ok(Source::Zip(files))
    }

    fn read(&self, name: &str) -> Result<Option<Vec<u8>>> {
        match self {
            Source::Dir(dir) => {
                let path = dir.join(name);
                match fs::read(&path) {
                    Ok(bytes) => Ok(Some(bytes)),
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(source) => Err(GtfsError::Io { path, source }),
                }
            }
            Source::Zip(files) => Ok(files.get(name).cloned()),
        }
    }

    fn has(&self, name: &str) -> bool {
        match self {
            Source::Dir(dir) => dir.join(name).is_file(),
            Source::Zip(files) => files.contains_key(name),
        }
    }
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<(u64, csv::StringRecord)>,
}

struct Row<'a> {
    table: &'a Table,
    line: u64,
    record: &'a csv::StringRecord,
}

impl Table {
    fn parse(file: &str, bytes: &[u8]) -> Result<Self> {
        let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
        let csv_err = |e: csv::Error| GtfsError::Csv {
            file: file.to_string(),
            message: e.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(bytes);
        let columns = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            if record.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            let line = record.position().map_or(0, |p| p.line());
            rows.push((line, record));
        }
        Ok(Table {
            file: file.to_string(),
            columns,
            rows,
        })
    }

    fn require_columns(&self, names: &[&str]) -> Result<()> {
        for name in names {
            if !self.columns.contains_key(*name) {
                return Err(GtfsError::MissingColumn {
                    file: self.file.clone(),
                    column: name.to_string(),
                });
            }
        }
        Ok(())
    }

    fn rows(&self) -> impl Iterator<Item = Row<'_>> {
        self.rows.iter().map(move |(line, record)| Row {
            table: self,
            line: *line,
            record,
        })
    }
}

impl<'a> Row<'a> {
    fn get(&self, column: &str) -> Option<&'a str> {
        let idx = *self.table.columns.get(column)?;
        self.record
            .get(idx)
            .map(str::trim)
            .filter(|v| !v.is_empty())
    }

    fn required(&self, column: &str) -> Result<&'a str> {
        self.get(column)
            .ok_or_else(|| self.invalid(column, "value is required".into()))
    }

    fn invalid(&self, field: &str, message: String) -> GtfsError {
        GtfsError::InvalidField {
            file: self.table.file.clone(),
            row: self.line,
            field: field.to_string(),
            message,
        }
    }

    fn parse<T: std::str::FromStr>(&self, column: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(column)
            .map(|v| v.parse::<T>().map_err(|e| self.invalid(column, format!("`{v}`: {e}"))))
            .transpose()
    }

    fn time(&self, column: &str) -> Result<Option<u32>> {
        self.get(column)
            .map(|v| parse_gtfs_time(v).map_err(|e| self.invalid(column, e.to_string())))
            .transpose()
    }

    fn date(&self, column: &str) -> Result<NaiveDate> {
        let v = self.required(column)?;
        NaiveDate::parse_from_str(v, "%Y%m%d")
            .map_err(|e| self.invalid(column, format!("`{v}`: {e}")))
    }

    fn location(&self) -> String {
        format!("{} row {}", self.table.file, self.line)
    }
}

struct Dangling(Vec<String>);

impl Dangling {
    fn push(&mut self, row: &Row<'_>, what: &str, id: &str) {
        self.0.push(format!("{}: unknown {what} `{id}`", row.location()));
    }

    fn finish(self) -> Result<()> {
        if self.0.is_empty() {
            return Ok(());
        }
        let total = self.0.len();
        let mut shown: Vec<String> = self.0.into_iter().take(MAX_REPORTED).collect();
        if total > MAX_REPORTED {
            shown.push(format!("... and {} more", total - MAX_REPORTED));
        }
        Err(GtfsError::DanglingReferences(shown))
    }
}

/// Parses the GTFS feed at `path` (a directory or a `.zip`) into a [`Feed`]
/// holding exactly the trips active on `service_date`.
pub fn parse_feed(path: impl AsRef<Path>, service_date: NaiveDate) -> Result<Feed> {
    let path = path.as_ref();
    let source = Source::open(path)?;

    let mut missing: Vec<String> = ["stops.txt", "routes.txt", "trips.txt", "stop_times.txt"]
        .iter()
        .filter(|f| !source.has(f))
        .map(|f| f.to_string())
        .collect();
    if !source.has("calendar.txt") && !source.has("calendar_dates.txt") {
        missing.push("calendar.txt and/or calendar_dates.txt".into());
    }
    if !missing.is_empty() {
        return Err(GtfsError::MissingFiles {
            path: path.to_path_buf(),
            files: missing,
        });
    }
    let load = |name: &str| -> Result<Option<Table>> {
        source
            .read(name)?
            .map(|bytes| Table::parse(name, &bytes))
            .transpose()
    };
    let load_required = |name: &str| -> Result<Table> {
        load(name)?.ok_or_else(|| GtfsError::MissingFiles {
            path: path.to_path_buf(),
            files: vec![name.to_string()],
        })
    };

    let stops = read_stops(&load_required("stops.txt")?)?;
    let routes = read_routes(&load_required("routes.txt")?)?;
    let calendars = match load("calendar.txt")? {
        Some(t) => read_calendars(&t)?,
        None => BTreeMap::new(),
    };
    let calendar_overrides = match load("calendar_dates.txt")? {
        Some(t) => read_calendar_dates(&t)?,
        None => BTreeMap::new(),
    };
    let active = active_service_ids(&calendars, &calendar_overrides, service_date);
    let known_services: HashSet<&str> = calendars
        .keys()
        .map(String::as_str)
        .chain(calendar_overrides.keys().map(|(s, _)| s.as_str()))
        .collect();

    let stop_ids: HashSet<&str> = stops.iter().map(|s| s.id.as_str()).collect();
    let route_ids: HashSet<&str> = routes.iter().map(|r| r.id.as_str()).collect();

    let mut dangling = Dangling(Vec::new());
    let trips_table = load_required("trips.txt")?;
    trips_table.require_columns(&["route_id", "service_id", "trip_id"])?;
    let mut all_trip_ids: HashSet<String> = HashSet::new();
    let mut active_trips: Vec<Trip> = Vec::new();
    for row in trips_table.rows() {
        let trip = Trip {
            id: row.required("trip_id")?.to_string(),
            route_id: row.required("route_id")?.to_string(),
            service_id: row.required("service_id")?.to_string(),
        };
        if !all_trip_ids.insert(trip.id.clone()) {
            return Err(GtfsError::DuplicateId {
                file: "trips.txt".into(),
                row: row.line,
                id: trip.id,
            });
        }
        if !route_ids.contains(trip.route_id.as_str()) {
            dangling.push(&row, "route_id", &trip.route_id);
        }
        if !known_services.contains(trip.service_id.as_str()) {
            dangling.push(&row, "service_id", &trip.service_id);
        }
        if active.contains(&trip.service_id) {
            active_trips.push(trip);
        }
    }
    let active_ids: HashSet<&str> = active_trips.iter().map(|t| t.id.as_str()).collect();

    let st_table = load_required("stop_times.txt")?;
    st_table.require_columns(&["trip_id", "stop_id", "stop_sequence"])?;
    let mut raw_times: HashMap<String, Vec<RawStopTime>> = HashMap::new();
    for row in st_table.rows() {
        let trip_id = row.required("trip_id")?;
        let stop_id = row.required("stop_id")?;
        if !all_trip_ids.contains(trip_id) {
            dangling.push(&row, "trip_id", trip_id);
            continue;
        }
        if !stop_ids.contains(stop_id) {
            dangling.push(&row, "stop_id", stop_id);
            continue;
        }
        if !active_ids.contains(trip_id) {
            continue;
        }
        let stop_sequence: u32 = row.parse("stop_sequence")?.unwrap();
        let mut arrival = row.time("arrival_time")?;
        let mut departure = row.time("departure_time")?;
        if arrival.is_none() {
            arrival = departure;
        }
        if departure.is_none() {
            departure = arrival;
        }
        raw_times.entry(trip_id.to_string()).or_default().push(RawStopTime {
            line: row.line,
            stop_id: stop_id.to_string(),
            stop_sequence,
            arrival,
            departure,
        });
    }

    let mut frequencies = Vec::new();
    if let Some(table) = load("frequencies.txt")? {
        table.require_columns(&["trip_id", "start_time", "end_time", "headway_secs"])?;
        for row in table.rows() {
            let trip_id = row.required("trip_id")?;
            if !all_trip_ids.contains(trip_id) {
                dangling.push(&row, "trip_id", trip_id);
                continue;
            }
            frequencies.push(Frequency {
                trip_id: trip_id.to_string(),
                start_s: row.time("start_time")?.unwrap(),
                end_s: row.time("end_time")?.unwrap(),
                headway_s: row.parse("headway_secs")?.unwrap(),
                exact_times: row.get("exact_times") == Some("1"),
            });
        }
    }

    let mut transfers = Vec::new();
    if let Some(table) = load("transfers.txt")? {
        table.require_columns(&["from_stop_id", "to_stop_id"])?;
        for row in table.rows() {
            let (Some(from), Some(to)) = (row.get("from_stop_id"), row.get("to_stop_id")) else {
                // Trip- or route-to-route transfers without stops are not used for routing.
                continue;
            };
            let mut ok = true;
            for id in [from, to] {
                if !stop_ids.contains(id) {
                    dangling.push(&row, "stop_id", id);
                    ok = false;
                }
            }
            if ok {
                transfers.push(Transfer {
                    from_stop_id: from.to_string(),
                    to_stop_id: to.to_string(),
                    transfer_type: row.parse("transfer_type")?.unwrap_or(0),
                    min_transfer_s: row.parse("min_transfer_time")?,
                });
            }
        }
    }
    dangling.finish()?;

    let mut stop_times = BTreeMap::new();
    let mut trips = Vec::with_capacity(active_trips.len());
    let mut by_trip: HashMap<&str, Vec<Frequency>> = HashMap::new();
    for f in &frequencies {
        by_trip.entry(f.trip_id.as_str()).or_default().push(f.clone());
    }
    for trip in active_trips {
        let raw = raw_times.remove(&trip.id).unwrap_or_default();
        let times = finalize_trip_times(&trip.id, raw)?;
        if times.is_empty() {
            continue;
        }
        match by_trip.get(trip.id.as_str()) {
            Some(rows) => {
                for (concrete, concrete_times) in expand_frequencies(&trip, &times, rows)? {
                    stop_times.insert(concrete.id.clone(), concrete_times);
                    trips.push(concrete);
                }
            }
            None => {
                stop_times.insert(trip.id.clone(), times);
                trips.push(trip);
            }
        }
    }
    trips.sort_by(|a, b| a.id.cmp(&b.id));

    Ok(Feed {
        stops,
        routes,
        trips,
        stop_times,
        calendars,
        calendar_overrides,
        frequencies,
        transfers,
        service_date,
    })
}

struct RawStopTime {
    line: u64,
    stop_id: String,
    stop_sequence: u32,
    arrival: Option<u32>,
    departure: Option<u32>,
}

/// Sorts by stop_sequence, interpolates untimed intermediate stops and checks
/// ordering invariants.
fn finalize_trip_times(trip_id: &str, mut raw: Vec<RawStopTime>) -> Result<Vec<StopTime>> {
    let invalid = |message: String| GtfsError::InvalidTrip {
        trip_id: trip_id.to_string(),
        message,
    };
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.sort_by_key(|r| r.stop_sequence);
    for pair in raw.windows(2) {
        if pair[0].stop_sequence == pair[1].stop_sequence {
            return Err(invalid(format!(
                "duplicate stop_sequence {} (stop_times.txt rows {} and {})",
                pair[1].stop_sequence, pair[0].line, pair[1].line
            )));
        }
    }
    let last = raw.len() - 1;
    for idx in [0, last] {
        if raw[idx].arrival.is_none() {
            return Err(invalid(format!(
                "first and last stops must be timed (stop_times.txt row {})",
                raw[idx].line
            )));
        }
    }

    // Untimed stops get times linearly interpolated by position between the
    // nearest timed stops.
    let mut prev_timed = 0;
    for i in 1..raw.len() {
        if raw[i].arrival.is_none() {
            continue;
        }
        if i - prev_timed > 1 {
            let t0 = f64::from(raw[prev_timed].departure.unwrap());
            let t1 = f64::from(raw[i].arrival.unwrap());
            let span = (i - prev_timed) as f64;
            for j in prev_timed + 1..i {
                let t = (t0 + (t1 - t0) * (j - prev_timed) as f64 / span).floor() as u32;
                raw[j].arrival = Some(t);
                raw[j].departure = Some(t);
            }
        }
        prev_timed = i;
    }

    let mut out = Vec::with_capacity(raw.len());
    let mut clock = 0u32;
    for r in raw {
        let (arrival_s, departure_s) = (r.arrival.unwrap(), r.departure.unwrap());
        if departure_s < arrival_s {
            return Err(invalid(format!(
                "departure before arrival at stop_times.txt row {}",
                r.line
            )));
        }
        if arrival_s < clock {
            return Err(invalid(format!(
                "times decrease at stop_times.txt row {}",
                r.line
            )));
        }
        clock = departure_s;
        out.push(StopTime {
            trip_id: trip_id.to_string(),
            stop_id: r.stop_id,
            arrival_s,
            departure_s,
            stop_sequence: r.stop_sequence,
        });
    }
    Ok(out)
}

fn read_stops(table: &Table) -> Result<Vec<Stop>> {
    table.require_columns(&["stop_id"])?;
    let mut seen = HashSet::new();
    let mut stops = Vec::new();
    for row in table.rows() {
        let id = row.required("stop_id")?;
        if !seen.insert(id.to_string()) {
            return Err(GtfsError::DuplicateId {
                file: table.file.clone(),
                row: row.line,
                id: id.to_string(),
            });
        }
        let location_type: u8 = row.parse("location_type")?.unwrap_or(0);
        let lat: Option<f64> = row.parse("stop_lat")?;
        let lon: Option<f64> = row.parse("stop_lon")?;
        let (lat, lon) = match (lat, lon) {
            (Some(lat), Some(lon)) => (lat, lon),
            // Generic nodes and boarding areas may omit coordinates.
            _ if location_type >= 3 => continue,
            (None, _) => return Err(row.invalid("stop_lat", "value is required".into())),
            (_, None) => return Err(row.invalid("stop_lon", "value is required".into())),
        };
        if !(-90.0..=90.0).contains(&lat) {
            return Err(row.invalid("stop_lat", format!("{lat} outside [-90, 90]")));
        }
        if !(-180.0..=180.0).contains(&lon) {
            return Err(row.invalid("stop_lon", format!("{lon} outside [-180, 180]")));
        }
        stops.push(Stop {
            id: id.to_string(),
            name: row.get("stop_name").unwrap_or("").to_string(),
            lon,
            lat,
        });
    }
    Ok(stops)
}

fn read_routes(table: &Table) -> Result<Vec<Route>> {
    table.require_columns(&["route_id"])?;
    let mut seen = HashSet::new();
    let mut routes = Vec::new();
    for row in table.rows() {
        let id = row.required("route_id")?;
        if !seen.insert(id.to_string()) {
            return Err(GtfsError::DuplicateId {
                file: table.file.clone(),
                row: row.line,
                id: id.to_string(),
            });
        }
        routes.push(Route {
            id: id.to_string(),
            short_name: row.get("route_short_name").unwrap_or("").to_string(),
            route_type: row.parse("route_type")?.unwrap_or(3),
        });
    }
    Ok(routes)
}

const WEEKDAY_COLUMNS: [&str; 7] = [
    "monday",
    "tuesday",
    "wednesday",
    "thursday",
    "friday",
    "saturday",
    "sunday",
];

fn read_calendars(table: &Table) -> Result<BTreeMap<String, Calendar>> {
    table.require_columns(&["service_id", "start_date", "end_date"])?;
    table.require_columns(&WEEKDAY_COLUMNS)?;
    let mut calendars = BTreeMap::new();
    for row in table.rows() {
        let service_id = row.required("service_id")?.to_string();
        let mut weekdays = [false; 7];
        for (slot, column) in weekdays.iter_mut().zip(WEEKDAY_COLUMNS) {
            *slot = match row.required(column)? {
                "1" => true,
                "0" => false,
                other => return Err(row.invalid(column, format!("expected 0 or 1, got `{other}`"))),
            };
        }
        let calendar = Calendar {
            service_id: service_id.clone(),
            weekdays,
            start_date: row.date("start_date")?,
            end_date: row.date("end_date")?,
        };
        if calendars.insert(service_id.clone(), calendar).is_some() {
            return Err(GtfsError::DuplicateId {
                file: table.file.clone(),
                row: row.line,
                id: service_id,
            });
        }
    }
    Ok(calendars)
}

fn read_calendar_dates(
    table: &Table,
) -> Result<BTreeMap<(String, NaiveDate), ServiceException>> {
    table.require_columns(&["service_id", "date", "exception_type"])?;
    let mut overrides = BTreeMap::new();
    for row in table.rows() {
        let service_id = row.required("service_id")?.to_string();
        let date = row.date("date")?;
        let exception = match row.required("exception_type")? {
            "1" => ServiceException::Added,
            "2" => ServiceException::Removed,
            other => {
                return Err(row.invalid("exception_type", format!("expected 1 or 2, got `{other}`")))
            }
        };
        overrides.insert((service_id, date), exception);
    }
    Ok(overrides)
}

/// Writes `feed` back out as GTFS CSV files in `dir`.
///
/// Trips are written in their concrete (already expanded) form, so
/// `frequencies.txt` is not emitted.
pub fn write_feed(feed: &Feed, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let to_io = |e: csv::Error| std::io::Error::other(e);
    let open = |name: &str| -> std::io::Result<csv::Writer<fs::File>> {
        Ok(csv::Writer::from_writer(fs::File::create(dir.join(name))?))
    };

    let mut w = open("stops.txt")?;
    w.write_record(["stop_id", "stop_name", "stop_lat", "stop_lon"]).map_err(to_io)?;
    for s in &feed.stops {
        w.write_record([&s.id, &s.name, &s.lat.to_string(), &s.lon.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;

    let mut w = open("routes.txt")?;
    w.write_record(["route_id", "route_short_name", "route_type"]).map_err(to_io)?;
    for r in &feed.routes {
        w.write_record([&r.id, &r.short_name, &r.route_type.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;

    let mut w = open("trips.txt")?;
    w.write_record(["route_id", "service_id", "trip_id"]).map_err(to_io)?;
    for t in &feed.trips {
        w.write_record([&t.route_id, &t.service_id, &t.id]).map_err(to_io)?;
    }
    w.flush()?;

    let mut w = open("stop_times.txt")?;
    w.write_record(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])
        .map_err(to_io)?;
    for t in &feed.trips {
        for st in feed.stop_times_of(&t.id) {
            w.write_record([
                &st.trip_id,
                &format_gtfs_time(st.arrival_s),
                &format_gtfs_time(st.departure_s),
                &st.stop_id,
                &st.stop_sequence.to_string(),
            ])
            .map_err(to_io)?;
        }
    }
    w.flush()?;

    let mut w = open("calendar.txt")?;
    let mut header = vec!["service_id"];
    header.extend(WEEKDAY_COLUMNS);
    header.extend(["start_date", "end_date"]);
    w.write_record(&header).map_err(to_io)?;
    for c in feed.calendars.values() {
        let mut rec = vec![c.service_id.clone()];
        rec.extend(c.weekdays.iter().map(|&b| if b { "1" } else { "0" }.to_string()));
        rec.push(c.start_date.format("%Y%m%d").to_string());
        rec.push(c.end_date.format("%Y%m%d").to_string());
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;

    let mut w = open("calendar_dates.txt")?;
    w.write_record(["service_id", "date", "exception_type"]).map_err(to_io)?;
    for ((service_id, date), exception) in &feed.calendar_overrides {
        let kind = match exception {
            ServiceException::Added => "1",
            ServiceException::Removed => "2",
        };
        w.write_record([service_id.as_str(), &date.format("%Y%m%d").to_string(), kind])
            .map_err(to_io)?;
    }
    w.flush()?;

    if !feed.transfers.is_empty() {
        let mut w = open("transfers.txt")?;
        w.write_record(["from_stop_id", "to_stop_id", "transfer_type", "min_transfer_time"])
            .map_err(to_io)?;
        for t in &feed.transfers {
            w.write_record([
                t.from_stop_id.clone(),
                t.to_stop_id.clone(),
                t.transfer_type.to_string(),
                t.min_transfer_s.map(|m| m.to_string()).unwrap_or_default(),
            ])
            .map_err(to_io)?;
        }
        w.flush()?;
    }
    Ok(())
}
