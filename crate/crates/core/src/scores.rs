//! Velocity and sociality scores per hexagon from isochrones over a set of
//! travel-time budgets.
//!
//! For an origin and a budget `t` (minutes), the isochrone is the set of
//! hexagons whose travel time is at most `t`. The velocity score is the mean
//! over budgets of the isochrone's equivalent-disc radius divided by `t`
//! (km/h); the sociality score is the mean over budgets of the population
//! living inside the isochrone.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::geo::{HexGrid, HexId};
use crate::population::PopulationAssignment;
use crate::router::{average_travel_times, RoutingError, Scratch, Timetable, TravelTimeField};

pub const DEFAULT_BUDGETS_MIN: [f64; 4] = [15.0, 30.0, 45.0, 60.0];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScoreError {
    #[error("time budgets must be non-empty and positive")]
    InvalidBudgets,
    #[error("hexagon area must be positive, got {0}")]
    InvalidArea(f64),
    #[error("population map has {got} entries for {expected} hexagons")]
    PopulationMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

pub type Result<T> = std::result::Result<T, ScoreError>;

/// How the departure window is collapsed into one score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Averaging {
    /// Average travel times over departures, then score once.
    #[default]
    Times,
    /// Score every departure separately, then average the scores.
    Scores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreParams {
    pub budgets_min: Vec<f64>,
    pub window: (u32, u32),
    pub step_s: u32,
    pub averaging: Averaging,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams {
            budgets_min: DEFAULT_BUDGETS_MIN.to_vec(),
            window: (6 * 3600, 20 * 3600),
            step_s: 20 * 60,
            averaging: Averaging::Times,
        }
    }
}

fn check_budgets(budgets_min: &[f64]) -> Result<()> {
    if budgets_min.is_empty() || budgets_min.iter().any(|&b| !(b > 0.0)) {
        return Err(ScoreError::InvalidBudgets);
    }
    Ok(())
}

/// Hexagons reachable within `budget_min`, ascending; the origin is always in.
pub fn reachable_set(field: &TravelTimeField, budget_min: f64) -> Result<Vec<HexId>> {
    check_budgets(&[budget_min])?;
    Ok(reachable(&field.avg_minutes, field.origin, budget_min).collect())
}

fn reachable(
    minutes: &[Option<f64>],
    origin: HexId,
    budget_min: f64,
) -> impl Iterator<Item = HexId> + '_ {
    minutes.iter().enumerate().filter_map(move |(i, m)| {
        let id = HexId(i as u32);
        (id == origin || m.is_some_and(|m| m <= budget_min)).then_some(id)
    })
}

fn velocity_of(minutes: &[Option<f64>], origin: HexId, budgets_min: &[f64], hex_area_km2: f64) -> f64 {
    let total: f64 = budgets_min
        .iter()
        .map(|&t| {
            let area = reachable(minutes, origin, t).count() as f64 * hex_area_km2;
            (area / PI).sqrt() / (t / 60.0)
        })
        .sum();
    total / budgets_min.len() as f64
}

fn sociality_of(minutes: &[Option<f64>], origin: HexId, budgets_min: &[f64], pop: &[f64]) -> f64 {
    let total: f64 = budgets_min
        .iter()
        .map(|&t| reachable(minutes, origin, t).map(|h| pop[h.index()]).sum::<f64>())
        .sum();
    total / budgets_min.len() as f64
}

/// Mean equivalent-radius speed over the budgets, in km/h.
pub fn velocity_score(field: &TravelTimeField, budgets_min: &[f64], hex_area_km2: f64) -> Result<f64> {
    check_budgets(budgets_min)?;
    if !(hex_area_km2 > 0.0) {
        return Err(ScoreError::InvalidArea(hex_area_km2));
    }
    Ok(velocity_of(&field.avg_minutes, field.origin, budgets_min, hex_area_km2))
}

/// Mean reachable population over the budgets.
pub fn sociality_score(field: &TravelTimeField, budgets_min: &[f64], pop: &[f64]) -> Result<f64> {
    check_budgets(budgets_min)?;
    if pop.len() != field.avg_minutes.len() {
        return Err(ScoreError::PopulationMismatch {
            expected: field.avg_minutes.len(),
            got: pop.len(),
        });
    }
    Ok(sociality_of(&field.avg_minutes, field.origin, budgets_min, pop))
}

/// Scores of every hexagon of a city, indexed by [`HexId`].
#[derive(Debug, Clone, PartialEq)]
pub struct AccessibilityField {
    pub velocity_kmh: Vec<f64>,
    pub sociality: Vec<f64>,
    pub population: Vec<f64>,
}

impl AccessibilityField {
    pub fn len(&self) -> usize {
        self.velocity_kmh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.velocity_kmh.is_empty()
    }
}

/// Scores one origin according to `params`.
pub fn score_origin(
    grid: &HexGrid,
    tt: &Timetable,
    pop: &[f64],
    params: &ScoreParams,
    origin: HexId,
    scratch: &mut Scratch,
) -> Result<(f64, f64)> {
    let field = average_travel_times(tt, origin, params.window, params.step_s, scratch)?;
    let area = grid.hex_area_km2();
    match params.averaging {
        Averaging::Times => Ok((
            velocity_score(&field, &params.budgets_min, area)?,
            sociality_score(&field, &params.budgets_min, pop)?,
        )),
        Averaging::Scores => {
            let n = field.departures.len() as f64;
            let (mut v, mut s) = (0.0, 0.0);
            for k in 0..field.departures.len() {
                let minutes = field.minutes_at(k);
                v += velocity_of(&minutes, origin, &params.budgets_min, area);
                s += sociality_of(&minutes, origin, &params.budgets_min, pop);
            }
            Ok((v / n, s / n))
        }
    }
}

/// Runs the averaged routing and both scores with every hexagon as origin.
/// Origins are processed in parallel; the result does not depend on scheduling.
pub fn score_city(
    grid: &HexGrid,
    tt: &Timetable,
    pop: &PopulationAssignment,
    params: &ScoreParams,
) -> Result<AccessibilityField> {
    check_budgets(&params.budgets_min)?;
    if pop.per_hex.len() != grid.len() {
        return Err(ScoreError::PopulationMismatch {
            expected: grid.len(),
            got: pop.per_hex.len(),
        });
    }
    let scores = grid
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map_init(
            || Scratch::new(tt),
            |scratch, origin| score_origin(grid, tt, &pop.per_hex, params, origin, scratch),
        )
        .collect::<Result<Vec<_>>>()?;
    let (velocity_kmh, sociality) = scores.into_iter().unzip();
    Ok(AccessibilityField {
        velocity_kmh,
        sociality,
        population: pop.per_hex.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::hex_area_km2;

    fn field(origin: u32, minutes: Vec<Option<f64>>) -> TravelTimeField {
        TravelTimeField {
            origin: HexId(origin),
            departures: vec![0],
            arrivals: vec![minutes.iter().map(|m| m.map(|m| (m * 60.0) as u32)).collect()],
            avg_minutes: minutes,
        }
    }

    #[test]
    fn reachable_examples() {
        let f = field(0, vec![Some(0.0), Some(10.0), Some(20.0), Some(40.0), None]);
        assert_eq!(reachable_set(&f, 25.0).unwrap(), vec![HexId(0), HexId(1), HexId(2)]);
        assert_eq!(reachable_set(&f, 1e9).unwrap().len(), 4);
        assert_eq!(reachable_set(&f, 5.0).unwrap(), vec![HexId(0)]);
        assert!(reachable_set(&f, 0.0).is_err());
        // origin is always included, even if its own entry were missing
        let g = field(2, vec![Some(30.0), None, None]);
        assert_eq!(reachable_set(&g, 5.0).unwrap(), vec![HexId(2)]);
    }

    #[test]
    fn only_origin_velocity_closed_form() {
        let a = hex_area_km2(500.0);
        let r0 = (a / PI).sqrt();
        assert!((r0 - 0.4547).abs() < 1e-4);
        let expected = r0 * (4.0 + 2.0 + 4.0 / 3.0 + 1.0) / 4.0;
        let f = field(0, vec![Some(0.0), None, Some(90.0)]);
        let v = velocity_score(&f, &DEFAULT_BUDGETS_MIN, a).unwrap();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 0.947).abs() < 1e-3);
    }

    #[test]
    fn constant_speed_fixture_recovers_speed() {
        // Hexagon k becomes reachable at the time a 10 km/h disc covers k+1 cells.
        let a = hex_area_km2(500.0);
        let n = 3000;
        let minutes: Vec<Option<f64>> = (0..n)
            .map(|k| Some(((k as f64 + 0.5) * a / PI).sqrt() / 10.0 * 60.0))
            .collect();
        let mut minutes = minutes;
        minutes[0] = Some(0.0);
        let v = velocity_score(&field(0, minutes), &DEFAULT_BUDGETS_MIN, a).unwrap();
        assert!((v - 10.0).abs() / 10.0 < 0.02, "{v}");
    }

    #[test]
    fn doubling_counts_scales_velocity_by_sqrt2() {
        let a = hex_area_km2(500.0);
        let f1 = field(0, vec![Some(0.0), Some(10.0), Some(25.0), Some(50.0)]);
        let f2 = field(
            0,
            vec![Some(0.0), Some(1.0), Some(10.0), Some(10.0), Some(25.0), Some(25.0), Some(50.0), Some(50.0)],
        );
        let v1 = velocity_score(&f1, &DEFAULT_BUDGETS_MIN, a).unwrap();
        let v2 = velocity_score(&f2, &DEFAULT_BUDGETS_MIN, a).unwrap();
        assert!((v2 / v1 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sociality_examples() {
        let f = field(0, vec![Some(0.0), Some(40.0), Some(70.0)]);
        assert_eq!(sociality_score(&f, &DEFAULT_BUDGETS_MIN, &[0.0, 0.0, 0.0]).unwrap(), 0.0);
        let g = field(0, vec![Some(0.0), Some(12.0), None]);
        assert_eq!(sociality_score(&g, &DEFAULT_BUDGETS_MIN, &[2000.0, 3000.0, 9.0]).unwrap(), 5000.0);
        assert_eq!(sociality_score(&f, &DEFAULT_BUDGETS_MIN, &[100.0, 300.0, 50.0]).unwrap(), 250.0);
        assert!(sociality_score(&f, &DEFAULT_BUDGETS_MIN, &[1.0]).is_err());
        assert!(sociality_score(&f, &[], &[1.0, 1.0, 1.0]).is_err());
    }
}
