mod support;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use support::*;
use transit_equity::geo::HexId;
use transit_equity::router::{build_timetable, Scratch, WalkParams};

#[test]
fn matches_brute_force_on_random_feeds() {
    let grid = square_grid(1500.0, 400.0);
    let walk = WalkParams {
        speed_kmh: 5.0,
        max_walk_m: 700.0,
    };
    for seed in 0..25u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feed = random_feed(&mut rng, &grid, 20, 50);
        let tt = build_timetable(&feed, &grid, walk).unwrap();
        assert!(tt.connections().len() <= 50);
        let mut scratch = Scratch::new(&tt);
        for _ in 0..100 {
            let depart = rng.gen_range(5 * 3600 + 1800..10 * 3600);
            let origin = HexId(rng.gen_range(0..grid.len() as u32));
            let got = tt.earliest_arrivals(origin, depart, &mut scratch).unwrap();
            let want = oracle_arrivals(&feed, &grid, walk, origin, depart);
            assert_eq!(got, want, "seed {seed}, origin {origin:?}, depart {depart}");
        }
    }
}

#[test]
fn later_departure_never_arrives_earlier() {
    let grid = square_grid(1500.0, 400.0);
    let walk = WalkParams::default();
    for seed in 100..110u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let feed = random_feed(&mut rng, &grid, 15, 40);
        let tt = build_timetable(&feed, &grid, walk).unwrap();
        let mut scratch = Scratch::new(&tt);
        let origin = HexId(rng.gen_range(0..grid.len() as u32));
        let mut prev: Option<Vec<Option<u32>>> = None;
        for depart in (6 * 3600..9 * 3600).step_by(137) {
            let cur = tt.earliest_arrivals(origin, depart, &mut scratch).unwrap();
            if let Some(p) = &prev {
                for (a, b) in p.iter().zip(&cur) {
                    if let (Some(a), Some(b)) = (a, b) {
                        assert!(b >= a, "seed {seed} depart {depart}");
                    }
                }
            }
            prev = Some(cur);
        }
    }
}

#[test]
fn transit_never_slower_than_walking() {
    let grid = square_grid(2000.0, 500.0);
    let walk = WalkParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let feed = random_feed(&mut rng, &grid, 20, 50);
    let tt = build_timetable(&feed, &grid, walk).unwrap();
    let mut scratch = Scratch::new(&tt);
    for origin in grid.ids() {
        let from = grid.hexagon(origin).center;
        let arr = tt.earliest_arrivals(origin, 7 * 3600, &mut scratch).unwrap();
        for h in grid.ids() {
            let d = great_circle_m(from, grid.hexagon(h).center);
            if d <= walk.max_walk_m {
                let bound = 7 * 3600 + walk.walk_seconds(d);
                let got = arr[h.index()].expect("within walking range");
                assert!(got <= bound);
            }
        }
    }
}

#[test]
fn ring_radial_hub_reaches_everything() {
    let dir = fixture_dir();
    let feed = transit_equity::gtfs::parse_feed(dir.join("gtfs"), fixture_date()).unwrap();
    let area = transit_equity::geo::StudyArea::from_geojson_file(dir.join("boundary.geojson")).unwrap();
    let grid = transit_equity::geo::build_grid(&area, 500.0).unwrap();
    let tt = build_timetable(&feed, &grid, WalkParams::default()).unwrap();
    let hub = grid.locate(2.0, 45.0).unwrap();
    let arr = transit_equity::router::earliest_arrivals(&tt, hub, 8 * 3600).unwrap();
    let reached = arr.iter().filter(|a| a.is_some()).count();
    assert!(reached * 10 >= grid.len() * 9, "{reached} of {}", grid.len());
    // the oracle agrees on a real feed too
    assert_eq!(arr, oracle_arrivals(&feed, &grid, WalkParams::default(), hub, 8 * 3600));
}
