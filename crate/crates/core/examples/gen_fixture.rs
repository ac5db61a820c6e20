//! Writes the synthetic ring-radial city used by the integration tests.
//!
//!     cargo run --example gen_fixture -- crates/core/tests/fixtures/ring_radial
//!
//! Six radial lines meet at a central hub; an inner ring line crosses them
//! halfway out and an outer ring links their ends. Population density
//! decays with distance from the hub.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

const LON0: f64 = 2.0;
const LAT0: f64 = 45.0;
const R_EARTH: f64 = 6_371_008.8;
const BOUNDARY_RADIUS_M: f64 = 5000.0;
const STOP_SPACING_M: f64 = 750.0;
const RADIAL_STOPS: usize = 7;
// (route id, radial stop index, extra stops between neighbouring lines)
const RINGS: [(&str, usize, usize); 2] = [("RI", 3, 1), ("RO", 6, 2)];
const SPEED_MS: f64 = 25.0 / 3.6;
const LINES: usize = 6;

// (band start, band end, headway minutes)
const BANDS: [(u32, u32, u32); 3] = [(6 * 3600, 10 * 3600, 10), (10 * 3600, 16 * 3600, 15), (16 * 3600, 21 * 3600, 10)];
const RING_BANDS: [(u32, u32, u32); 1] = [(6 * 3600, 21 * 3600, 20)];

fn lonlat(dx: f64, dy: f64) -> (f64, f64) {
    let lat = LAT0 + (dy / R_EARTH).to_degrees();
    let lon = LON0 + (dx / (R_EARTH * LAT0.to_radians().cos())).to_degrees();
    (lon, lat)
}

fn polar(r: f64, theta: f64) -> (f64, f64) {
    (r * theta.cos(), r * theta.sin())
}

fn hms(s: u32) -> String {
    format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)
}

struct Stop {
    id: String,
    x: f64,
    y: f64,
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tests/fixtures/ring_radial".into()));
    let gtfs = dir.join("gtfs");
    fs::create_dir_all(&gtfs).unwrap();

    let mut stops = vec![Stop {
        id: "HUB".into(),
        x: 0.0,
        y: 0.0,
    }];
    let radial_id = |line: usize, k: usize| if k == 0 { "HUB".to_string() } else { format!("L{line}S{k}") };
    for line in 0..LINES {
        let theta = line as f64 * 2.0 * PI / LINES as f64;
        for k in 1..RADIAL_STOPS {
            let (x, y) = polar(k as f64 * STOP_SPACING_M, theta);
            stops.push(Stop { id: radial_id(line, k), x, y });
        }
    }
    // rings: the radial stops at one index plus evenly spaced stops between them
    let mut rings = Vec::new();
    for (name, k, between) in RINGS {
        let r = k as f64 * STOP_SPACING_M;
        let mut ring = Vec::new();
        for line in 0..LINES {
            ring.push(radial_id(line, k));
            for m in 1..=between {
                let theta = (line as f64 + m as f64 / (between + 1) as f64) * 2.0 * PI / LINES as f64;
                let (x, y) = polar(r, theta);
                let id = format!("{name}{line}_{m}");
                stops.push(Stop { id: id.clone(), x, y });
                ring.push(id);
            }
        }
        rings.push((name, ring));
    }

    let pos = |id: &str| {
        let s = stops.iter().find(|s| s.id == id).unwrap();
        (s.x, s.y)
    };

    let mut stops_txt = String::from("stop_id,stop_name,stop_lat,stop_lon\n");
    for s in &stops {
        let (lon, lat) = lonlat(s.x, s.y);
        let _ = writeln!(stops_txt, "{},{},{:.7},{:.7}", s.id, s.id, lat, lon);
    }

    let mut routes = String::from("route_id,route_short_name,route_type\n");
    let mut trips = String::from("route_id,service_id,trip_id\n");
    let mut stop_times = String::from("trip_id,arrival_time,departure_time,stop_id,stop_sequence\n");
    let mut freqs = String::from("trip_id,start_time,end_time,headway_secs\n");

    let mut add_pattern = |route: &str, trip: &str, seq: &[String], bands: &[(u32, u32, u32)]| {
        for (b, &(start, end, headway)) in bands.iter().enumerate() {
            let trip_id = format!("{trip}_B{b}");
            let _ = writeln!(trips, "{route},WK,{trip_id}");
            let _ = writeln!(freqs, "{trip_id},{},{},{}", hms(start), hms(end), headway * 60);
            let mut t = start as f64;
            let mut prev = pos(&seq[0]);
            for (i, id) in seq.iter().enumerate() {
                let p = pos(id);
                t += ((p.0 - prev.0).powi(2) + (p.1 - prev.1).powi(2)).sqrt() / SPEED_MS;
                prev = p;
                let s = hms(t.round() as u32);
                let _ = writeln!(stop_times, "{trip_id},{s},{s},{id},{}", i + 1);
            }
        }
    };

    for line in 0..LINES {
        let route = format!("L{line}");
        let _ = writeln!(routes, "{route},{},3", line + 1);
        let outbound: Vec<String> = (0..RADIAL_STOPS).map(|k| radial_id(line, k)).collect();
        let inbound: Vec<String> = outbound.iter().rev().cloned().collect();
        add_pattern(&route, &format!("{route}_OUT"), &outbound, &BANDS);
        add_pattern(&route, &format!("{route}_IN"), &inbound, &BANDS);
    }
    for (name, ring) in &rings {
        let _ = writeln!(routes, "{name},{name},3");
        let mut cw = ring.clone();
        cw.push(ring[0].clone());
        let mut ccw: Vec<String> = ring.iter().rev().cloned().collect();
        ccw.push(ccw[0].clone());
        add_pattern(name, &format!("{name}_CW"), &cw, &RING_BANDS);
        add_pattern(name, &format!("{name}_CCW"), &ccw, &RING_BANDS);
    }

    let calendar = "service_id,monday,tuesday,wednesday,thursday,friday,saturday,sunday,start_date,end_date\n\
                    WK,1,1,1,1,1,0,0,20240101,20241231\n";

    for (name, body) in [
        ("stops.txt", stops_txt.as_str()),
        ("routes.txt", &routes),
        ("trips.txt", &trips),
        ("stop_times.txt", &stop_times),
        ("frequencies.txt", &freqs),
        ("calendar.txt", calendar),
    ] {
        fs::write(gtfs.join(name), body).unwrap();
    }

    // population on a 250 m lattice, density decaying with radius
    let mut pop = String::from("lon,lat,count\n");
    let step = 250.0;
    let n = (BOUNDARY_RADIUS_M * 1.3 / step) as i32;
    for i in -n..=n {
        for j in -n..=n {
            let (x, y) = (i as f64 * step + step / 2.0, j as f64 * step + step / 2.0);
            let r = (x * x + y * y).sqrt();
            if r > BOUNDARY_RADIUS_M * 1.2 {
                continue;
            }
            let count = (400.0 * (-r / 1500.0).exp()).round();
            if count > 0.0 {
                let (lon, lat) = lonlat(x, y);
                let _ = writeln!(pop, "{lon:.7},{lat:.7},{count}");
            }
        }
    }
    fs::write(dir.join("population.csv"), pop).unwrap();

    let mut ring_coords = Vec::new();
    for k in 0..=64 {
        let (x, y) = polar(BOUNDARY_RADIUS_M, (k % 64) as f64 * 2.0 * PI / 64.0);
        let (lon, lat) = lonlat(x, y);
        ring_coords.push(format!("[{lon:.7},{lat:.7}]"));
    }
    let boundary = format!(
        "{{\"type\":\"FeatureCollection\",\"features\":[{{\"type\":\"Feature\",\"properties\":{{\"name\":\"ring_radial\"}},\
         \"geometry\":{{\"type\":\"Polygon\",\"coordinates\":[[{}]]}}}}]}}\n",
        ring_coords.join(",")
    );
    fs::write(dir.join("boundary.geojson"), boundary).unwrap();
}
