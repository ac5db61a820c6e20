mod support;

use std::f64::consts::PI;

use support::*;
use transit_equity::geo::{build_grid, hex_area_km2, HexGrid, HexId, Polygon, Projection, StudyArea};
use transit_equity::gtfs::parse_feed;
use transit_equity::population::{assign_population, load_population, parse_ascii_grid, PopFormat, PopulationAssignment};
use transit_equity::router::{build_timetable, WalkParams};
use transit_equity::scores::{score_city, Averaging, ScoreParams};

fn disc(radius_m: f64) -> StudyArea {
    let proj = Projection::new(CENTER);
    let ring = (0..48)
        .map(|k| {
            let a = k as f64 * 2.0 * PI / 48.0;
            proj.unproject(radius_m * a.cos(), radius_m * a.sin())
        })
        .collect();
    StudyArea::new("disc", vec![Polygon::new(ring, vec![])]).unwrap()
}

fn uniform_pop(grid: &HexGrid, each: f64) -> PopulationAssignment {
    PopulationAssignment {
        per_hex: vec![each; grid.len()],
        outside: 0.0,
    }
}

#[test]
fn one_hexagon_city() {
    let grid = square_grid(200.0, 500.0);
    assert_eq!(grid.len(), 1);
    let tt = build_timetable(&empty_feed(), &grid, WalkParams::default()).unwrap();
    let f = score_city(&grid, &tt, &uniform_pop(&grid, 1234.0), &ScoreParams::default()).unwrap();
    let r0 = (hex_area_km2(500.0) / PI).sqrt();
    let expected = r0 * (60.0 / 15.0 + 60.0 / 30.0 + 60.0 / 45.0 + 1.0) / 4.0;
    assert!((f.velocity_kmh[0] - expected).abs() < 1e-12);
    assert_eq!(f.sociality[0], 1234.0);
}

#[test]
fn walking_rosette_is_symmetric() {
    let grid = build_grid(&disc(700.0), 500.0).unwrap();
    assert_eq!(grid.len(), 7);
    let center = grid.id_of(0, 0).unwrap();
    // ring cells two apart are 1500 m from each other; keep them out of walking range
    let walk = WalkParams {
        speed_kmh: 5.0,
        max_walk_m: 1200.0,
    };
    let tt = build_timetable(&empty_feed(), &grid, walk).unwrap();
    for averaging in [Averaging::Times, Averaging::Scores] {
        let params = ScoreParams {
            averaging,
            ..ScoreParams::default()
        };
        let f = score_city(&grid, &tt, &uniform_pop(&grid, 100.0), &params).unwrap();
        let ring: Vec<usize> = grid.ids().filter(|&h| h != center).map(HexId::index).collect();
        let c = center.index();
        for &i in &ring {
            assert!((f.velocity_kmh[i] - f.velocity_kmh[ring[0]]).abs() < 1e-9);
            assert_eq!(f.sociality[i], f.sociality[ring[0]]);
            assert!(f.velocity_kmh[c] > f.velocity_kmh[i]);
            assert!(f.sociality[c] > f.sociality[i]);
        }
        // 866 m walk is 624 s: the centre sees all 7 cells from the 15 min budget on
        assert_eq!(f.sociality[c], 700.0);
        // a ring cell sees itself, the centre and its two ring neighbours
        assert_eq!(f.sociality[ring[0]], 400.0);
    }
}

fn ring_radial() -> (HexGrid, transit_equity::scores::AccessibilityField, f64, PopulationAssignment) {
    let dir = fixture_dir();
    let feed = parse_feed(dir.join("gtfs"), fixture_date()).unwrap();
    let area = StudyArea::from_geojson_file(dir.join("boundary.geojson")).unwrap();
    let grid = build_grid(&area, 500.0).unwrap();
    let cells = load_population(dir.join("population.csv"), PopFormat::Csv).unwrap();
    let input: f64 = cells.iter().map(|c| c.count).sum();
    let pop = assign_population(&cells, &grid);
    let tt = build_timetable(&feed, &grid, WalkParams::default()).unwrap();
    let field = score_city(&grid, &tt, &pop, &ScoreParams::default()).unwrap();
    (grid, field, input, pop)
}

fn rim(grid: &HexGrid) -> Vec<HexId> {
    const DIRS: [(i32, i32); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
    grid.ids()
        .filter(|&h| {
            let x = grid.hexagon(h);
            DIRS.iter().any(|(dq, dr)| grid.id_of(x.q + dq, x.r + dr).is_none())
        })
        .collect()
}

#[test]
fn ring_radial_center_beats_rim() {
    let (grid, f, input, pop) = ring_radial();
    assert!((140..=170).contains(&grid.len()), "{}", grid.len());
    let center = grid.locate(2.0, 45.0).unwrap();
    let rim = rim(&grid);
    assert!(rim.len() > 20);
    for h in rim {
        assert!(f.velocity_kmh[center.index()] > f.velocity_kmh[h.index()]);
        assert!(f.sociality[center.index()] > f.sociality[h.index()]);
    }
    assert!((pop.total() - input).abs() <= 1e-9 * input);
}

#[test]
fn ascii_grid_population_is_conserved() {
    let grid = square_grid(2000.0, 500.0);
    let proj = grid.projection();
    let sw = proj.unproject(-2600.0, -2600.0);
    let mut text = format!(
        "ncols 12\nnrows 10\nxllcorner {}\nyllcorner {}\ncellsize 0.005\nNODATA_value -9999\n",
        sw.lon, sw.lat
    );
    for r in 0..10 {
        let row: Vec<String> = (0..12)
            .map(|c| if (r + c) % 7 == 0 { "-9999".into() } else { format!("{}.25", r * 12 + c) })
            .collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    let cells = parse_ascii_grid("pop.asc", &text).unwrap();
    let input: f64 = cells.iter().map(|c| c.count).sum();
    let pop = assign_population(&cells, &grid);
    assert!(pop.outside > 0.0 && pop.per_hex.iter().sum::<f64>() > 0.0);
    assert!((pop.total() - input).abs() <= 1e-9 * input);
}
