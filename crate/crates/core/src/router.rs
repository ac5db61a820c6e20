//! Earliest-arrival routing from hexagon centers with a connection scan over
//! the service day's timetable, plus walking access, transfers and egress.
//!
//! Model: leave the origin center at the departure time, walk to a stop within
//! the walking radius, ride connections (boarding when already at the stop by
//! the departure time, or staying seated on the same trip), change vehicles
//! through a single footpath, and finally walk from the last alighting stop to
//! a hexagon center. Walking straight from the origin center to nearby
//! hexagon centers is also allowed. Each walking leg is one straight
//! great-circle segment no longer than `max_walk_m`.

use std::collections::HashMap;

use crate::geo::{haversine_m, GeoPoint, HexGrid, HexId};
use crate::gtfs::Feed;

/// Departures must fall within two service days.
pub const MAX_DEPARTURE_S: u32 = 48 * 3600;

const UNREACHED: u32 = u32::MAX;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RoutingError {
    #[error("departure time {0} s is outside [0, 48h)")]
    DepartureOutOfRange(u32),
    #[error("origin hexagon {0} is not in the grid")]
    UnknownOrigin(u32),
    #[error("invalid departure window: {0}")]
    InvalidWindow(String),
    #[error("invalid routing parameter: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, RoutingError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkParams {
    pub speed_kmh: f64,
    pub max_walk_m: f64,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            speed_kmh: 5.0,
            max_walk_m: 1500.0,
        }
    }
}

impl WalkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_kmh > 0.0 && self.speed_kmh.is_finite()) {
            return Err(RoutingError::InvalidParams(format!(
                "walk speed must be positive, got {}",
                self.speed_kmh
            )));
        }
        if !(self.max_walk_m >= 0.0 && self.max_walk_m.is_finite()) {
            return Err(RoutingError::InvalidParams(format!(
                "max walk must be non-negative, got {}",
                self.max_walk_m
            )));
        }
        Ok(())
    }

    /// Walking time in whole seconds for a distance in meters.
    pub fn walk_seconds(&self, meters: f64) -> u32 {
        (meters * 3.6 / self.speed_kmh).round() as u32
    }
}

/// One vehicle hop between consecutive stops of a trip.
///
/// Stops and trips are indices into [`Timetable::stop_ids`] and
/// [`Timetable::trip_ids`]; `position` is the hop's index within its trip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Connection {
    pub dep_stop: u32,
    pub arr_stop: u32,
    pub dep_s: u32,
    pub arr_s: u32,
    pub trip: u32,
    pub position: u32,
}

#[derive(Debug, Clone)]
pub struct Timetable {
    stop_ids: Vec<String>,
    trip_ids: Vec<String>,
    connections: Vec<Connection>,
    /// Ranges of connections sharing one departure time, flagged when the
    /// range holds a zero-duration hop and must be scanned to a fixpoint.
    groups: Vec<(u32, u32, bool)>,
    footpaths: Vec<Vec<(u32, u32)>>,
    stop_hex: Vec<Option<HexId>>,
    hex_stops: Vec<Vec<(u32, u32)>>,
    stop_hexes: Vec<Vec<(HexId, u32)>>,
    hex_walks: Vec<Vec<(HexId, u32)>>,
    walk: WalkParams,
}

/// Uniform bucketing of projected points for radius queries.
struct Buckets {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl Buckets {
    fn new(cell: f64, points: &[(f64, f64)]) -> Self {
        let cell = cell.max(1.0);
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, &(x, y)) in points.iter().enumerate() {
            map.entry(((x / cell).floor() as i64, (y / cell).floor() as i64))
                .or_default()
                .push(i);
        }
        Buckets { cell, map }
    }

    /// Candidate indices in the 3×3 block of buckets around `(x, y)`, ascending.
    fn near(&self, x: f64, y: f64) -> Vec<usize> {
        let (bx, by) = ((x / self.cell).floor() as i64, (y / self.cell).floor() as i64);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = self.map.get(&(bx + dx, by + dy)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Builds the routing structures for one service date on `grid`.
pub fn build_timetable(feed: &Feed, grid: &HexGrid, walk: WalkParams) -> Result<Timetable> {
    walk.validate()?;
    let proj = grid.projection();
    let stop_points: Vec<GeoPoint> = feed.stops.iter().map(|s| GeoPoint::new(s.lon, s.lat)).collect();
    let stop_xy: Vec<(f64, f64)> = stop_points.iter().map(|&p| proj.project(p)).collect();
    let stop_index = feed.stop_index();
    // Bucket size leaves slack for projection distortion away from the center.
    let buckets = Buckets::new(walk.max_walk_m * 1.1, &stop_xy);

    // Operator minimum transfer times apply in both directions; type 3 forbids.
    let mut transfer_min: HashMap<(u32, u32), Option<u32>> = HashMap::new();
    for t in &feed.transfers {
        let (a, b) = (stop_index[t.from_stop_id.as_str()] as u32, stop_index[t.to_stop_id.as_str()] as u32);
        if a == b {
            continue;
        }
        let key = (a.min(b), a.max(b));
        let entry = transfer_min.entry(key).or_insert(Some(0));
        *entry = match (t.transfer_type, *entry) {
            (3, _) | (_, None) => None,
            (2, Some(m)) => Some(m.max(t.min_transfer_s.unwrap_or(0))),
            (_, Some(m)) => Some(m),
        };
    }

    let mut footpaths: Vec<Vec<(u32, u32)>> = vec![Vec::new(); stop_points.len()];
    for a in 0..stop_points.len() {
        for b in buckets.near(stop_xy[a].0, stop_xy[a].1) {
            if b <= a {
                continue;
            }
            let d = haversine_m(stop_points[a], stop_points[b]);
            if d > walk.max_walk_m {
                continue;
            }
            let mut secs = walk.walk_seconds(d);
            match transfer_min.get(&(a as u32, b as u32)) {
                Some(None) => continue,
                Some(Some(min)) => secs = secs.max(*min),
                None => {}
            }
            footpaths[a].push((b as u32, secs));
            footpaths[b].push((a as u32, secs));
        }
    }
    for list in &mut footpaths {
        list.sort_unstable();
    }

    let stop_hex: Vec<Option<HexId>> = stop_points.iter().map(|p| grid.locate(p.lon, p.lat)).collect();

    let mut hex_stops: Vec<Vec<(u32, u32)>> = vec![Vec::new(); grid.len()];
    let mut stop_hexes: Vec<Vec<(HexId, u32)>> = vec![Vec::new(); stop_points.len()];
    for id in grid.ids() {
        let h = grid.hexagon(id);
        for s in buckets.near(h.x, h.y) {
            let d = haversine_m(h.center, stop_points[s]);
            if d <= walk.max_walk_m {
                let secs = walk.walk_seconds(d);
                hex_stops[id.index()].push((s as u32, secs));
                stop_hexes[s].push((id, secs));
            }
        }
    }

    let hex_xy: Vec<(f64, f64)> = grid.hexagons().iter().map(|h| (h.x, h.y)).collect();
    let hex_buckets = Buckets::new(walk.max_walk_m * 1.1, &hex_xy);
    let mut hex_walks: Vec<Vec<(HexId, u32)>> = vec![Vec::new(); grid.len()];
    for id in grid.ids() {
        let h = grid.hexagon(id);
        for other in hex_buckets.near(h.x, h.y) {
            if other == id.index() {
                continue;
            }
            let d = haversine_m(h.center, grid.hexagons()[other].center);
            if d <= walk.max_walk_m {
                hex_walks[id.index()].push((HexId(other as u32), walk.walk_seconds(d)));
            }
        }
    }

    let mut connections = Vec::new();
    let mut trip_ids = Vec::with_capacity(feed.trips.len());
    for trip in &feed.trips {
        let times = feed.stop_times_of(&trip.id);
        let trip_idx = trip_ids.len() as u32;
        trip_ids.push(trip.id.clone());
        for (position, pair) in times.windows(2).enumerate() {
            connections.push(Connection {
                dep_stop: stop_index[pair[0].stop_id.as_str()] as u32,
                arr_stop: stop_index[pair[1].stop_id.as_str()] as u32,
                dep_s: pair[0].departure_s,
                arr_s: pair[1].arrival_s,
                trip: trip_idx,
                position: position as u32,
            });
        }
    }
    connections.sort_by_key(|c| (c.dep_s, c.arr_s, c.trip, c.position));

    let mut groups = Vec::new();
    let mut start = 0;
    while start < connections.len() {
        let dep = connections[start].dep_s;
        let mut end = start;
        let mut zero = false;
        while end < connections.len() && connections[end].dep_s == dep {
            zero |= connections[end].arr_s == dep;
            end += 1;
        }
        groups.push((start as u32, end as u32, zero && end - start > 1));
        start = end;
    }

    Ok(Timetable {
        stop_ids: feed.stops.iter().map(|s| s.id.clone()).collect(),
        trip_ids,
        connections,
        groups,
        footpaths,
        stop_hex,
        hex_stops,
        stop_hexes,
        hex_walks,
        walk,
    })
}

/// Per-query working memory, reusable across queries on the same timetable.
#[derive(Debug, Clone)]
pub struct Scratch {
    board: Vec<u32>,
    vehicle: Vec<u32>,
    boarded_at: Vec<u32>,
    reached: Vec<u32>,
}

impl Scratch {
    pub fn new(tt: &Timetable) -> Self {
        Scratch {
            board: vec![UNREACHED; tt.stop_ids.len()],
            vehicle: vec![UNREACHED; tt.stop_ids.len()],
            boarded_at: vec![UNREACHED; tt.trip_ids.len()],
            reached: Vec::new(),
        }
    }
}

impl Timetable {
    pub fn stop_ids(&self) -> &[String] {
        &self.stop_ids
    }

    pub fn trip_ids(&self) -> &[String] {
        &self.trip_ids
    }

    pub fn connections(&self) -> &[Connection] {
        &self.connections
    }

    /// Footpaths leaving `stop` as `(to, seconds)`.
    pub fn footpaths(&self, stop: u32) -> &[(u32, u32)] {
        &self.footpaths[stop as usize]
    }

    pub fn footpath_seconds(&self, from: u32, to: u32) -> Option<u32> {
        self.footpaths(from)
            .iter()
            .find(|(t, _)| *t == to)
            .map(|&(_, s)| s)
    }

    pub fn stop_hexagon(&self, stop: u32) -> Option<HexId> {
        self.stop_hex[stop as usize]
    }

    /// Stops within walking range of a hexagon center, as `(stop, seconds)`.
    pub fn access_stops(&self, hex: HexId) -> &[(u32, u32)] {
        &self.hex_stops[hex.index()]
    }

    pub fn hex_count(&self) -> usize {
        self.hex_stops.len()
    }

    pub fn walk_params(&self) -> WalkParams {
        self.walk
    }

    /// Earliest arrival at every hexagon center, `None` where unreachable.
    pub fn earliest_arrivals(
        &self,
        origin: HexId,
        depart_s: u32,
        scratch: &mut Scratch,
    ) -> Result<Vec<Option<u32>>> {
        if depart_s >= MAX_DEPARTURE_S {
            return Err(RoutingError::DepartureOutOfRange(depart_s));
        }
        if origin.index() >= self.hex_count() {
            return Err(RoutingError::UnknownOrigin(origin.0));
        }
        let Scratch {
            board,
            vehicle,
            boarded_at,
            reached,
        } = scratch;
        board.fill(UNREACHED);
        vehicle.fill(UNREACHED);
        boarded_at.fill(UNREACHED);
        reached.clear();

        for &(s, w) in &self.hex_stops[origin.index()] {
            let t = depart_s + w;
            if t < board[s as usize] {
                board[s as usize] = t;
            }
        }

        let first_group = self
            .groups
            .partition_point(|&(start, _, _)| self.connections[start as usize].dep_s < depart_s);
        for &(start, end, needs_fixpoint) in &self.groups[first_group..] {
            loop {
                let mut changed = false;
                for c in &self.connections[start as usize..end as usize] {
                    let trip = c.trip as usize;
                    if boarded_at[trip] > c.position {
                        if board[c.dep_stop as usize] > c.dep_s {
                            continue;
                        }
                        boarded_at[trip] = c.position;
                        changed = true;
                    }
                    let arr = c.arr_stop as usize;
                    if c.arr_s < vehicle[arr] {
                        if vehicle[arr] == UNREACHED {
                            reached.push(c.arr_stop);
                        }
                        vehicle[arr] = c.arr_s;
                        changed = true;
                        board[arr] = board[arr].min(c.arr_s);
                        for &(to, secs) in &self.footpaths[arr] {
                            let t = c.arr_s.saturating_add(secs);
                            if t < board[to as usize] {
                                board[to as usize] = t;
                            }
                        }
                    }
                }
                if !(needs_fixpoint && changed) {
                    break;
                }
            }
        }

        let mut arrivals: Vec<Option<u32>> = vec![None; self.hex_count()];
        let mut improve = |hex: HexId, t: u32| {
            let slot = &mut arrivals[hex.index()];
            if slot.is_none_or(|cur| t < cur) {
                *slot = Some(t);
            }
        };
        improve(origin, depart_s);
        for &(hex, w) in &self.hex_walks[origin.index()] {
            improve(hex, depart_s + w);
        }
        for &s in reached.iter() {
            let t = vehicle[s as usize];
            for &(hex, w) in &self.stop_hexes[s as usize] {
                improve(hex, t.saturating_add(w));
            }
        }
        Ok(arrivals)
    }
}

/// One-off query; allocates its own scratch space.
pub fn earliest_arrivals(tt: &Timetable, origin: HexId, depart_s: u32) -> Result<Vec<Option<u32>>> {
    tt.earliest_arrivals(origin, depart_s, &mut Scratch::new(tt))
}

/// Sampled departure times `start, start + step, ...` up to and including `end`.
pub fn departure_samples(start_s: u32, end_s: u32, step_s: u32) -> Result<Vec<u32>> {
    if step_s == 0 {
        return Err(RoutingError::InvalidWindow("step must be positive".into()));
    }
    if start_s > end_s {
        return Err(RoutingError::InvalidWindow(format!(
            "start {start_s} s is after end {end_s} s"
        )));
    }
    Ok((start_s..=end_s).step_by(step_s as usize).collect())
}

/// Travel times from one origin over a window of sampled departures.
#[derive(Debug, Clone, PartialEq)]
pub struct TravelTimeField {
    pub origin: HexId,
    pub departures: Vec<u32>,
    /// `arrivals[k][hex]` for departure `k`.
    pub arrivals: Vec<Vec<Option<u32>>>,
    /// Mean travel minutes over the departures that reach each hexagon.
    pub avg_minutes: Vec<Option<f64>>,
}

impl TravelTimeField {
    /// Travel minutes for a single sampled departure.
    pub fn minutes_at(&self, k: usize) -> Vec<Option<f64>> {
        let dep = self.departures[k];
        self.arrivals[k]
            .iter()
            .map(|a| a.map(|t| f64::from(t - dep) / 60.0))
            .collect()
    }
}

pub fn average_travel_times(
    tt: &Timetable,
    origin: HexId,
    window: (u32, u32),
    step_s: u32,
    scratch: &mut Scratch,
) -> Result<TravelTimeField> {
    let departures = departure_samples(window.0, window.1, step_s)?;
    let arrivals = departures
        .iter()
        .map(|&d| tt.earliest_arrivals(origin, d, scratch))
        .collect::<Result<Vec<_>>>()?;
    let n = tt.hex_count();
    let mut sums = vec![0u64; n];
    let mut counts = vec![0u32; n];
    for (dep, row) in departures.iter().zip(&arrivals) {
        for (h, a) in row.iter().enumerate() {
            if let Some(t) = a {
                sums[h] += u64::from(t - dep);
                counts[h] += 1;
            }
        }
    }
    let avg_minutes = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s as f64 / f64::from(c) / 60.0))
        .collect();
    Ok(TravelTimeField {
        origin,
        departures,
        arrivals,
        avg_minutes,
    })
}
