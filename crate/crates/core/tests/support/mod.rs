//! Shared fixtures and the brute-force routing oracle.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use rand::Rng;

use transit_equity::geo::{build_grid, GeoPoint, HexGrid, HexId, Polygon, Projection, StudyArea};
use transit_equity::gtfs::{Feed, Route, Stop, StopTime, Transfer, Trip};
use transit_equity::router::WalkParams;

pub const CENTER: GeoPoint = GeoPoint::new(13.4, 52.52);

/// Shared with the acceptance crate, which sits next to this one.
pub fn fixture_dir() -> PathBuf {
    let crates = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("..");
    crates.join("core/tests/fixtures/ring_radial")
}

pub fn fixture_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2024, 3, 6).unwrap()
}

pub fn square(half_m: f64) -> StudyArea {
    let proj = Projection::new(CENTER);
    let ring = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(x, y)| proj.unproject(x * half_m, y * half_m))
        .collect();
    StudyArea::new("square", vec![Polygon::new(ring, vec![])]).unwrap()
}

pub fn square_grid(half_m: f64, side_m: f64) -> HexGrid {
    build_grid(&square(half_m), side_m).unwrap()
}

pub fn empty_feed() -> Feed {
    Feed {
        stops: vec![],
        routes: vec![Route {
            id: "R".into(),
            short_name: "R".into(),
            route_type: 3,
        }],
        trips: vec![],
        stop_times: BTreeMap::new(),
        calendars: BTreeMap::new(),
        calendar_overrides: BTreeMap::new(),
        frequencies: vec![],
        transfers: vec![],
        service_date: fixture_date(),
    }
}

pub fn add_stop(feed: &mut Feed, id: &str, p: GeoPoint) {
    feed.stops.push(Stop {
        id: id.into(),
        name: id.into(),
        lon: p.lon,
        lat: p.lat,
    });
}

/// `calls` are (stop, arrival, departure).
pub fn add_trip(feed: &mut Feed, id: &str, calls: &[(&str, u32, u32)]) {
    feed.trips.push(Trip {
        id: id.into(),
        route_id: "R".into(),
        service_id: "S".into(),
    });
    feed.trips.sort_by(|a, b| a.id.cmp(&b.id));
    let times = calls
        .iter()
        .enumerate()
        .map(|(i, &(s, a, d))| StopTime {
            trip_id: id.into(),
            stop_id: s.into(),
            arrival_s: a,
            departure_s: d,
            stop_sequence: i as u32 + 1,
        })
        .collect();
    feed.stop_times.insert(id.into(), times);
}

/// Random feed inside `grid`: at most `max_stops` stops and `max_hops`
/// vehicle hops in total, zero-duration hops and transfers included.
pub fn random_feed<R: Rng>(rng: &mut R, grid: &HexGrid, max_stops: usize, max_hops: usize) -> Feed {
    let mut feed = empty_feed();
    let proj = grid.projection();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for h in grid.hexagons() {
        xmin = xmin.min(h.x);
        xmax = xmax.max(h.x);
        ymin = ymin.min(h.y);
        ymax = ymax.max(h.y);
    }
    let n_stops = rng.gen_range(2..=max_stops);
    for s in 0..n_stops {
        let p = proj.unproject(rng.gen_range(xmin..=xmax), rng.gen_range(ymin..=ymax));
        add_stop(&mut feed, &format!("S{s}"), p);
    }
    let mut hops = 0;
    let mut t = 0;
    while hops < max_hops {
        let len = rng.gen_range(2..=6usize).min(max_hops - hops + 1);
        let mut calls: Vec<(String, u32, u32)> = Vec::new();
        let mut clock = rng.gen_range(6 * 3600..9 * 3600);
        let mut prev: Option<usize> = None;
        for _ in 0..len {
            let mut s = rng.gen_range(0..n_stops);
            while Some(s) == prev {
                s = rng.gen_range(0..n_stops);
            }
            prev = Some(s);
            let arrival = clock;
            let dwell = if rng.gen_bool(0.5) { 0 } else { rng.gen_range(0..60) };
            calls.push((format!("S{s}"), arrival, arrival + dwell));
            let ride = if rng.gen_bool(0.15) { 0 } else { rng.gen_range(30..900) };
            clock = arrival + dwell + ride;
        }
        hops += len - 1;
        let refs: Vec<(&str, u32, u32)> = calls.iter().map(|(s, a, d)| (s.as_str(), *a, *d)).collect();
        add_trip(&mut feed, &format!("T{t:02}"), &refs);
        t += 1;
    }
    for _ in 0..rng.gen_range(0..3) {
        let a = rng.gen_range(0..n_stops);
        let b = rng.gen_range(0..n_stops);
        let forbid = rng.gen_bool(0.3);
        feed.transfers.push(Transfer {
            from_stop_id: format!("S{a}"),
            to_stop_id: format!("S{b}"),
            transfer_type: if forbid { 3 } else { 2 },
            min_transfer_s: (!forbid).then(|| rng.gen_range(0..900)),
        });
    }
    feed
}

pub fn great_circle_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let r = 6_371_008.8_f64;
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * r * h.sqrt().min(1.0).asin()
}

fn walk_time(walk: WalkParams, d: f64) -> Option<u32> {
    (d <= walk.max_walk_m).then(|| (d * 3.6 / walk.speed_kmh).round() as u32)
}

/// Label-correcting search over the unordered set of vehicle hops, iterated
/// to a fixpoint. Model: walk from the origin center to a stop, ride, walk at
/// most once between vehicles, walk from the last alighting stop to a
/// hexagon center; or walk directly between centers.
pub fn oracle_arrivals(feed: &Feed, grid: &HexGrid, walk: WalkParams, origin: HexId, depart: u32) -> Vec<Option<u32>> {
    const INF: u32 = u32::MAX;
    let pos: BTreeMap<&str, usize> = feed.stops.iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
    let pts: Vec<GeoPoint> = feed.stops.iter().map(|s| GeoPoint::new(s.lon, s.lat)).collect();
    let n = pts.len();

    // transfer rules: key is the unordered pair
    let mut rules: BTreeMap<(usize, usize), Option<u32>> = BTreeMap::new();
    for t in &feed.transfers {
        let (a, b) = (pos[t.from_stop_id.as_str()], pos[t.to_stop_id.as_str()]);
        if a == b {
            continue;
        }
        let e = rules.entry((a.min(b), a.max(b))).or_insert(Some(0));
        if t.transfer_type == 3 {
            *e = None;
        } else if let (2, Some(m)) = (t.transfer_type, *e) {
            *e = Some(m.max(t.min_transfer_s.unwrap_or(0)));
        }
    }
    let footpath = |a: usize, b: usize| -> Option<u32> {
        if a == b {
            return None;
        }
        let w = walk_time(walk, great_circle_m(pts[a], pts[b]))?;
        match rules.get(&(a.min(b), a.max(b))) {
            Some(None) => None,
            Some(Some(m)) => Some(w.max(*m)),
            None => Some(w),
        }
    };

    // hops as (trip, position, from, to, dep, arr)
    let mut hops = Vec::new();
    for (ti, trip) in feed.trips.iter().enumerate() {
        for (p, w) in feed.stop_times[&trip.id].windows(2).enumerate() {
            hops.push((ti, p, pos[w[0].stop_id.as_str()], pos[w[1].stop_id.as_str()], w[0].departure_s, w[1].arrival_s));
        }
    }
    let center = grid.hexagon(origin).center;
    let access: Vec<u32> = pts
        .iter()
        .map(|&p| walk_time(walk, great_circle_m(center, p)).map_or(INF, |w| depart + w))
        .collect();

    let mut board = access.clone();
    let mut vehicle = vec![INF; n];
    let mut taken = vec![false; hops.len()];
    loop {
        let mut changed = false;
        for (k, &(trip, p, from, to, dep, arr)) in hops.iter().enumerate() {
            let via_trip = p > 0
                && hops
                    .iter()
                    .zip(&taken)
                    .any(|(h, &tk)| tk && h.0 == trip && h.1 + 1 == p);
            if !taken[k] && (board[from] <= dep || via_trip) {
                taken[k] = true;
                changed = true;
            }
            if taken[k] && arr < vehicle[to] {
                vehicle[to] = arr;
                changed = true;
            }
        }
        for s in 0..n {
            let mut best = access[s].min(vehicle[s]);
            for t in 0..n {
                if vehicle[t] != INF {
                    if let Some(w) = footpath(t, s) {
                        best = best.min(vehicle[t] + w);
                    }
                }
            }
            if best < board[s] {
                board[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    grid.ids()
        .map(|h| {
            let c = grid.hexagon(h).center;
            let mut best = if h == origin { Some(depart) } else { None };
            let mut offer = |t: u32| {
                if best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            };
            if let Some(w) = walk_time(walk, great_circle_m(center, c)) {
                offer(depart + w);
            }
            for s in 0..n {
                if vehicle[s] != INF {
                    if let Some(w) = walk_time(walk, great_circle_m(pts[s], c)) {
                        offer(vehicle[s] + w);
                    }
                }
            }
            best
        })
        .collect()
}
