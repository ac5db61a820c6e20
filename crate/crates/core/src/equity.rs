//! Lorenz curves, Gini indices, top-share ratios and cross-city comparison.
//!
//! Two kinds of curve are built from per-hexagon accessibility scores:
//! hexagon-based (every hexagon is one stakeholder) and population-based
//! (every resident is a stakeholder carrying the score of their hexagon).
//! Residents are never enumerated; each hexagon contributes one segment
//! weighted by its population, which traces the same curve.

use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EquityError {
    #[error("no stakeholders")]
    Empty,
    #[error("scores and weights differ in length ({scores} vs {weights})")]
    LengthMismatch { scores: usize, weights: usize },
    #[error("invalid value {value} at index {index}: scores and weights must be finite and non-negative")]
    InvalidValue { index: usize, value: f64 },
    #[error("degenerate distribution: {0}")]
    Degenerate(&'static str),
    #[error("fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("at least two cities are required, got {0}")]
    TooFewCities(usize),
    #[error("duplicate city `{0}`")]
    DuplicateCity(String),
}

pub type Result<T> = std::result::Result<T, EquityError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Hexagon,
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    Velocity,
    Sociality,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorenzCurve {
    /// `(x, y)` from `(0, 0)` to `(1, 1)`.
    pub points: Vec<(f64, f64)>,
    pub kind: CurveKind,
    pub score_kind: ScoreKind,
}

fn validate(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        Some(index) => Err(EquityError::InvalidValue {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}

/// Indices sorted by ascending score, ties by index.
fn ascending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Builds a curve from `(weight, score)` groups in ascending score order.
/// When every group shares one score the curve is the diagonal exactly.
fn cumulative(groups: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let total_w: f64 = groups.iter().map(|g| g.0).sum();
    let total_ws: f64 = groups.iter().map(|g| g.0 * g.1).sum();
    let uniform = groups.windows(2).all(|w| w[0].1 == w[1].1);
    let mut points = Vec::with_capacity(groups.len() + 1);
    points.push((0.0, 0.0));
    let (mut cw, mut cws) = (0.0, 0.0);
    for (i, &(w, s)) in groups.iter().enumerate() {
        cw += w;
        cws += w * s;
        if i + 1 == groups.len() {
            points.push((1.0, 1.0));
        } else {
            let x = cw / total_w;
            points.push((x, if uniform { x } else { (cws / total_ws).min(x) }));
        }
    }
    points
}

/// Hexagon-based Lorenz curve: point `i` at `x = i/n`, `y` = share of the
/// total score held by the `i` worst hexagons.
pub fn lorenz_hexagon(scores: &[f64], score: ScoreKind) -> Result<LorenzCurve> {
    if scores.is_empty() {
        return Err(EquityError::Empty);
    }
    validate(scores)?;
    if !(scores.iter().sum::<f64>() > 0.0) {
        return Err(EquityError::Degenerate("all scores are zero"));
    }
    let n = scores.len() as f64;
    let order = ascending_order(scores);
    let uniform = order.windows(2).all(|w| scores[w[0]] == scores[w[1]]);
    let total: f64 = order.iter().map(|&i| scores[i]).sum();
    let mut points = Vec::with_capacity(scores.len() + 1);
    points.push((0.0, 0.0));
    let mut acc = 0.0;
    for (k, &i) in order.iter().enumerate() {
        acc += scores[i];
        let x = (k + 1) as f64 / n;
        let y = if k + 1 == order.len() {
            1.0
        } else if uniform {
            x
        } else {
            (acc / total).min(x)
        };
        points.push((x, y));
    }
    Ok(LorenzCurve {
        points,
        kind: CurveKind::Hexagon,
        score_kind: score,
    })
}

/// Population-based Lorenz curve with each hexagon weighted by its residents.
/// Zero-population hexagons contribute nothing and are skipped.
pub fn lorenz_population(scores: &[f64], weights: &[f64], score: ScoreKind) -> Result<LorenzCurve> {
    if scores.len() != weights.len() {
        return Err(EquityError::LengthMismatch {
            scores: scores.len(),
            weights: weights.len(),
        });
    }
    validate(scores)?;
    validate(weights)?;
    let order = ascending_order(scores);
    let groups: Vec<(f64, f64)> = order
        .iter()
        .filter(|&&i| weights[i] > 0.0)
        .map(|&i| (weights[i], scores[i]))
        .collect();
    if groups.is_empty() {
        return Err(EquityError::Degenerate("total population is zero"));
    }
    if !(groups.iter().map(|g| g.0 * g.1).sum::<f64>() > 0.0) {
        return Err(EquityError::Degenerate("population-weighted score is zero"));
    }
    Ok(LorenzCurve {
        points: cumulative(&groups),
        kind: CurveKind::Population,
        score_kind: score,
    })
}

/// Twice the area between the diagonal and the curve (trapezoidal rule).
pub fn gini(curve: &LorenzCurve) -> f64 {
    let gap: f64 = curve
        .points
        .windows(2)
        .map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            (x1 - x0) * ((x0 - y0) + (x1 - y1))
        })
        .sum();
    gap.max(0.0)
}

/// Weighted mean score of the best `fraction` of total weight divided by the
/// overall weighted mean. The stakeholder straddling the cut is included
/// fractionally.
pub fn top_share_ratio(scores: &[f64], weights: &[f64], fraction: f64) -> Result<f64> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EquityError::InvalidFraction(fraction));
    }
    if scores.len() != weights.len() {
        return Err(EquityError::LengthMismatch {
            scores: scores.len(),
            weights: weights.len(),
        });
    }
    validate(scores)?;
    validate(weights)?;
    let mut order = ascending_order(scores);
    order.reverse();
    let total_w: f64 = order.iter().map(|&i| weights[i]).sum();
    let total_ws: f64 = order.iter().map(|&i| weights[i] * scores[i]).sum();
    if !(total_w > 0.0) {
        return Err(EquityError::Degenerate("total weight is zero"));
    }
    if !(total_ws > 0.0) {
        return Err(EquityError::Degenerate("weighted score is zero"));
    }
    let budget = fraction * total_w;
    let (mut cum_w, mut top_ws) = (0.0, 0.0);
    for &i in &order {
        let w = weights[i];
        if cum_w + w <= budget {
            cum_w += w;
            top_ws += w * scores[i];
        } else {
            top_ws += (budget - cum_w) * scores[i];
            break;
        }
    }
    Ok((top_ws / budget) / (total_ws / total_w))
}

/// The four Gini columns, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    VelocityHex,
    SocialityHex,
    VelocityInd,
    SocialityInd,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::VelocityHex,
        Metric::SocialityHex,
        Metric::VelocityInd,
        Metric::SocialityInd,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::VelocityHex => "G_v_hex",
            Metric::SocialityHex => "G_s_hex",
            Metric::VelocityInd => "G_v_ind",
            Metric::SocialityInd => "G_s_ind",
        }
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.key() == key)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn score(self) -> ScoreKind {
        match self {
            Metric::VelocityHex | Metric::VelocityInd => ScoreKind::Velocity,
            Metric::SocialityHex | Metric::SocialityInd => ScoreKind::Sociality,
        }
    }

    pub fn kind(self) -> CurveKind {
        match self {
            Metric::VelocityHex | Metric::SocialityHex => CurveKind::Hexagon,
            Metric::VelocityInd | Metric::SocialityInd => CurveKind::Population,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// City × metric table, rows kept in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GiniTable {
    rows: Vec<(String, [f64; 4])>,
}

impl GiniTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, city: impl Into<String>, values: [f64; 4]) -> Result<()> {
        let city = city.into();
        if self.rows.iter().any(|(c, _)| *c == city) {
            return Err(EquityError::DuplicateCity(city));
        }
        self.rows.push((city, values));
        Ok(())
    }

    pub fn rows(&self) -> &[(String, [f64; 4])] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, city: &str, metric: Metric) -> Option<f64> {
        self.rows
            .iter()
            .find(|(c, _)| c == city)
            .map(|(_, v)| v[metric.index()])
    }

    fn column(&self, metric: Metric) -> Vec<f64> {
        self.rows.iter().map(|(_, v)| v[metric.index()]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `(x − mean) / (max − min)`, which is what the published normalized
    /// table contains.
    #[default]
    MeanCentered,
    /// Textbook `(x − min) / (max − min)`.
    MinMax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTable {
    pub table: GiniTable,
    /// Columns whose max equals min; their entries are set to 0.
    pub constant_columns: Vec<Metric>,
}

/// Scales every column of `table` by its range.
pub fn normalize_across_cities(table: &GiniTable, mode: Normalization) -> Result<NormalizedTable> {
    if table.len() < 2 {
        return Err(EquityError::TooFewCities(table.len()));
    }
    let mut out: Vec<(String, [f64; 4])> = table.rows.iter().map(|(c, _)| (c.clone(), [0.0; 4])).collect();
    let mut constant_columns = Vec::new();
    for metric in Metric::ALL {
        let col = table.column(metric);
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = col.iter().copied().fold(f64::INFINITY, f64::min);
        let range = max - min;
        if range == 0.0 {
            log::warn!("column {metric} is constant across cities; normalized to 0");
            constant_columns.push(metric);
            continue;
        }
        let anchor = match mode {
            Normalization::MeanCentered => col.iter().sum::<f64>() / col.len() as f64,
            Normalization::MinMax => min,
        };
        for (row, x) in out.iter_mut().zip(&col) {
            row.1[metric.index()] = (x - anchor) / range;
        }
    }
    Ok(NormalizedTable {
        table: GiniTable { rows: out },
        constant_columns,
    })
}

/// Cities from the highest Gini (worst) to the lowest; ties by name.
pub fn rank_cities(table: &GiniTable, metric: Metric) -> Vec<String> {
    let mut rows: Vec<(&str, f64)> = table
        .rows
        .iter()
        .map(|(c, v)| (c.as_str(), v[metric.index()]))
        .collect();
    rows.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => a.0.cmp(b.0),
        other => other,
    });
    rows.into_iter().map(|(c, _)| c.to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn uniform_is_diagonal() {
        for n in [1, 2, 7, 100] {
            let c = lorenz_hexagon(&vec![3.3; n], ScoreKind::Velocity).unwrap();
            assert!(c.points.iter().all(|&(x, y)| x == y));
            assert_eq!(gini(&c), 0.0);
        }
        let c = lorenz_population(&[2.0, 2.0, 2.0], &[1.0, 17.0, 3.5], ScoreKind::Sociality).unwrap();
        assert!(c.points.iter().all(|&(x, y)| x == y));
        assert_eq!(gini(&c), 0.0);
    }

    #[test]
    fn two_hexagons() {
        let c = lorenz_hexagon(&[3.0, 1.0], ScoreKind::Velocity).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]);
        assert_eq!(gini(&c), 0.25);
    }

    #[test]
    fn zero_scores_are_degenerate() {
        assert!(matches!(lorenz_hexagon(&[0.0, 0.0], ScoreKind::Velocity), Err(EquityError::Degenerate(_))));
        assert_eq!(lorenz_hexagon(&[], ScoreKind::Velocity), Err(EquityError::Empty));
        assert!(lorenz_hexagon(&[1.0, -1.0], ScoreKind::Velocity).is_err());
        assert!(lorenz_population(&[1.0, 2.0], &[0.0, 0.0], ScoreKind::Velocity).is_err());
        assert!(lorenz_population(&[0.0, 2.0], &[5.0, 0.0], ScoreKind::Velocity).is_err());
    }

    #[test]
    fn population_weighted_example() {
        let c = lorenz_population(&[2.0, 1.0], &[100.0, 300.0], ScoreKind::Velocity).unwrap();
        assert_eq!(c.points.len(), 3);
        assert!(close(c.points[1].0, 0.75) && close(c.points[1].1, 0.6));
        assert_eq!(c.points[2], (1.0, 1.0));
    }

    #[test]
    fn unit_weights_reduce_to_hexagon_curve() {
        let s = [4.0, 1.0, 9.0, 2.5, 2.5];
        let a = lorenz_hexagon(&s, ScoreKind::Velocity).unwrap();
        let b = lorenz_population(&s, &[1.0; 5], ScoreKind::Velocity).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!(close(p.0, q.0) && close(p.1, q.1));
        }
    }

    #[test]
    fn zero_population_hexagon_is_skipped() {
        let c = lorenz_population(&[1.0, 5.0, 3.0], &[10.0, 0.0, 10.0], ScoreKind::Velocity).unwrap();
        assert_eq!(c.points.len(), 3);
        assert_eq!(gini(&c), 0.25);
    }

    #[test]
    fn single_stakeholder() {
        let c = lorenz_hexagon(&[5.0], ScoreKind::Velocity).unwrap();
        assert_eq!(c.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(gini(&c), 0.0);
    }

    #[test]
    fn top_share_examples() {
        let mut s = vec![1.0; 99];
        s.push(101.0);
        let w = vec![1.0; 100];
        assert!(close(top_share_ratio(&s, &w, 0.01).unwrap(), 50.5));
        assert_eq!(top_share_ratio(&s, &w, 1.0).unwrap(), 1.0);
        assert!(close(top_share_ratio(&[2.0; 10], &[3.0; 10], 0.05).unwrap(), 1.0));
        // boundary stakeholder straddles the cut: best two of four (scores 4, 3) at fraction 0.375
        // takes 1 unit of 4 and 0.5 unit of 3 → mean 5.5/1.5, overall mean 2.5
        let r = top_share_ratio(&[1.0, 2.0, 3.0, 4.0], &[1.0; 4], 0.375).unwrap();
        assert!(close(r, (5.5 / 1.5) / 2.5));
        assert!(top_share_ratio(&s, &w, 0.0).is_err());
        assert!(top_share_ratio(&s, &w, 1.5).is_err());
        assert!(top_share_ratio(&[1.0], &[0.0], 0.5).is_err());
    }

    #[test]
    fn two_city_normalization() {
        let mut t = GiniTable::new();
        t.insert("A", [0.0, 0.2, 0.3, 0.4]).unwrap();
        t.insert("B", [1.0, 0.2, 0.5, 0.1]).unwrap();
        let n = normalize_across_cities(&t, Normalization::MeanCentered).unwrap();
        assert_eq!(n.table.get("A", Metric::VelocityHex), Some(-0.5));
        assert_eq!(n.table.get("B", Metric::VelocityHex), Some(0.5));
        assert_eq!(n.constant_columns, vec![Metric::SocialityHex]);
        assert_eq!(n.table.get("B", Metric::SocialityHex), Some(0.0));
        let m = normalize_across_cities(&t, Normalization::MinMax).unwrap();
        assert_eq!(m.table.get("A", Metric::VelocityHex), Some(0.0));
        assert_eq!(m.table.get("B", Metric::VelocityHex), Some(1.0));

        let mut one = GiniTable::new();
        one.insert("A", [0.1; 4]).unwrap();
        assert_eq!(normalize_across_cities(&one, Normalization::MinMax), Err(EquityError::TooFewCities(1)));
        assert_eq!(one.insert("A", [0.2; 4]), Err(EquityError::DuplicateCity("A".into())));
    }

    #[test]
    fn ranking_ties_and_single_city() {
        let mut t = GiniTable::new();
        t.insert("Zeta", [0.3; 4]).unwrap();
        t.insert("Alpha", [0.3; 4]).unwrap();
        t.insert("Mid", [0.4, 0.1, 0.1, 0.1]).unwrap();
        assert_eq!(rank_cities(&t, Metric::VelocityHex), vec!["Mid", "Alpha", "Zeta"]);
        assert_eq!(rank_cities(&t, Metric::SocialityInd), vec!["Alpha", "Zeta", "Mid"]);
        let mut one = GiniTable::new();
        one.insert("Solo", [0.2; 4]).unwrap();
        assert_eq!(rank_cities(&one, Metric::VelocityInd), vec!["Solo"]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn scores() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..1000.0, 1..60)
                .prop_filter("positive total", |v| v.iter().sum::<f64>() > 0.0)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(500))]

            #[test]
            fn curve_shape(s in scores()) {
                let c = lorenz_hexagon(&s, ScoreKind::Velocity).unwrap();
                prop_assert_eq!(c.points[0], (0.0, 0.0));
                prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
                for w in c.points.windows(2) {
                    prop_assert!(w[1].0 > w[0].0);
                    prop_assert!(w[1].1 >= w[0].1);
                }
                prop_assert!(c.points.iter().all(|&(x, y)| y <= x));
                let g = gini(&c);
                prop_assert!((0.0..1.0).contains(&g));
            }

            #[test]
            fn scale_invariance(s in scores(), c in 1e-3f64..1e3) {
                let scaled: Vec<f64> = s.iter().map(|v| v * c).collect();
                let a = lorenz_hexagon(&s, ScoreKind::Velocity).unwrap();
                let b = lorenz_hexagon(&scaled, ScoreKind::Velocity).unwrap();
                for (p, q) in a.points.iter().zip(&b.points) {
                    prop_assert!((p.1 - q.1).abs() < 1e-12);
                }
                prop_assert!((gini(&a) - gini(&b)).abs() < 1e-12);
            }

            #[test]
            fn grouped_matches_enumerated(
                pairs in prop::collection::vec((0.0f64..100.0, 0u32..=50), 1..=10)
            ) {
                let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let w: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
                let Ok(grouped) = lorenz_population(&s, &w, ScoreKind::Sociality) else {
                    return Ok(());
                };
                let expanded: Vec<f64> = pairs
                    .iter()
                    .flat_map(|&(v, n)| std::iter::repeat(v).take(n as usize))
                    .collect();
                let total = expanded.len();
                let flat = lorenz_hexagon(&expanded, ScoreKind::Sociality).unwrap();
                for &(x, y) in &grouped.points {
                    let k = (x * total as f64).round() as usize;
                    prop_assert!((flat.points[k].0 - x).abs() < 1e-12);
                    prop_assert!((flat.points[k].1 - y).abs() < 1e-12);
                }
            }

            #[test]
            fn pigou_dalton(s in prop::collection::vec(1.0f64..100.0, 2..40), t in 0.0f64..1.0, i in any::<prop::sample::Index>(), j in any::<prop::sample::Index>()) {
                let mut sorted = s.clone();
                sorted.sort_by(f64::total_cmp);
                let (a, b) = (i.index(sorted.len()), j.index(sorted.len()));
                let (lo, hi) = (a.min(b), a.max(b));
                prop_assume!(lo != hi && sorted[hi] > sorted[lo]);
                // keep the order: lo may rise at most to its upper neighbour, hi fall to its lower one
                let room_lo = sorted.get(lo + 1).map_or(f64::INFINITY, |n| n - sorted[lo]);
                let room_hi = sorted[hi] - sorted[hi - 1];
                let d = t * room_lo.min(room_hi).min((sorted[hi] - sorted[lo]) / 2.0);
                let before = gini(&lorenz_hexagon(&sorted, ScoreKind::Velocity).unwrap());
                let mut moved = sorted.clone();
                moved[lo] += d;
                moved[hi] -= d;
                let after = gini(&lorenz_hexagon(&moved, ScoreKind::Velocity).unwrap());
                prop_assert!(after <= before + 1e-12, "{before} -> {after}");
            }

            #[test]
            fn top_share_at_least_one(s in scores(), f in 0.001f64..=1.0) {
                let w = vec![1.0; s.len()];
                prop_assert!(top_share_ratio(&s, &w, f).unwrap() >= 1.0 - 1e-12);
            }

            #[test]
            fn ranking_is_permutation(vals in prop::collection::vec(0.0f64..1.0, 1..12)) {
                let mut t = GiniTable::new();
                for (k, v) in vals.iter().enumerate() {
                    t.insert(format!("c{k}"), [*v; 4]).unwrap();
                }
                let mut r = rank_cities(&t, Metric::VelocityHex);
                prop_assert_eq!(r.clone(), rank_cities(&t, Metric::VelocityHex));
                r.sort();
                let mut names: Vec<String> = t.rows().iter().map(|x| x.0.clone()).collect();
                names.sort();
                prop_assert_eq!(r, names);
            }
        }
    }
}
