//! Hexagonal tessellation of a study area, point location and the planar
//! projection used for all metric computations.
//!
//! Geometry is done on a sphere of radius [`EARTH_RADIUS_M`] projected with an
//! azimuthal-equidistant projection centered on the study area. The lattice is
//! pointy-top with axial coordinates `(q, r)`: the center of `(q, r)` sits at
//! `x = side·√3·(q + r/2)`, `y = side·1.5·r`.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde_json::Value;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

pub const DEFAULT_SIDE_M: f64 = 500.0;

const SQRT3: f64 = 1.732_050_807_568_877_2;

#[derive(Debug, thiserror::Error)]
pub enum GeoError {
    #[error("degenerate study area: {0}")]
    Degenerate(String),
    #[error("invalid study area: {0}")]
    InvalidBoundary(String),
    #[error("hexagon side must be positive, got {0}")]
    InvalidSide(f64),
    #[error("cannot read boundary {path}: {message}")]
    Read { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, GeoError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub const fn new(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }

    pub fn is_valid(&self) -> bool {
        self.lon.is_finite()
            && self.lat.is_finite()
            && (-180.0..=180.0).contains(&self.lon)
            && (-90.0..=90.0).contains(&self.lat)
    }
}

/// Great-circle distance in meters (haversine).
pub fn haversine_m(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Spherical azimuthal-equidistant projection centered on `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub center: GeoPoint,
}

impl Projection {
    pub fn new(center: GeoPoint) -> Self {
        Projection { center }
    }

    /// Planar meters east (`x`) and north (`y`) of the center.
    pub fn project(&self, p: GeoPoint) -> (f64, f64) {
        let phi1 = self.center.lat.to_radians();
        let phi = p.lat.to_radians();
        let dlambda = (p.lon - self.center.lon).to_radians();
        let c = haversine_m(self.center, p) / EARTH_RADIUS_M;
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let k = c / c.sin();
        let x = EARTH_RADIUS_M * k * phi.cos() * dlambda.sin();
        let y = EARTH_RADIUS_M * k * (phi1.cos() * phi.sin() - phi1.sin() * phi.cos() * dlambda.cos());
        (x, y)
    }

    pub fn unproject(&self, x: f64, y: f64) -> GeoPoint {
        let rho = x.hypot(y);
        if rho == 0.0 {
            return self.center;
        }
        let phi1 = self.center.lat.to_radians();
        let c = rho / EARTH_RADIUS_M;
        let (sin_c, cos_c) = c.sin_cos();
        let phi = (cos_c * phi1.sin() + y * sin_c * phi1.cos() / rho).clamp(-1.0, 1.0).asin();
        let lambda = self.center.lon.to_radians()
            + (x * sin_c).atan2(rho * phi1.cos() * cos_c - y * phi1.sin() * sin_c);
        let mut lon = lambda.to_degrees();
        if lon > 180.0 {
            lon -= 360.0;
        } else if lon < -180.0 {
            lon += 360.0;
        }
        GeoPoint::new(lon, phi.to_degrees())
    }
}

/// One polygon of a study area. Rings are stored open (no repeated closing vertex).
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub exterior: Vec<GeoPoint>,
    pub holes: Vec<Vec<GeoPoint>>,
}

impl Polygon {
    pub fn new(exterior: Vec<GeoPoint>, holes: Vec<Vec<GeoPoint>>) -> Self {
        Polygon {
            exterior: open_ring(exterior),
            holes: holes.into_iter().map(open_ring).collect(),
        }
    }

    fn rings(&self) -> impl Iterator<Item = &Vec<GeoPoint>> {
        std::iter::once(&self.exterior).chain(self.holes.iter())
    }
}

fn open_ring(mut ring: Vec<GeoPoint>) -> Vec<GeoPoint> {
    if ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    ring
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyArea {
    pub name: String,
    pub polygons: Vec<Polygon>,
}

impl StudyArea {
    /// Validates rings (at least three distinct vertices, valid coordinates, no
    /// self-intersection) and a positive total area.
    pub fn new(name: impl Into<String>, polygons: Vec<Polygon>) -> Result<Self> {
        let area = StudyArea {
            name: name.into(),
            polygons,
        };
        if area.polygons.is_empty() {
            return Err(GeoError::InvalidBoundary("no polygons".into()));
        }
        for ring in area.polygons.iter().flat_map(Polygon::rings) {
            if let Some(p) = ring.iter().find(|p| !p.is_valid()) {
                return Err(GeoError::InvalidBoundary(format!(
                    "vertex ({}, {}) is not a valid WGS84 coordinate",
                    p.lon, p.lat
                )));
            }
            let distinct: BTreeSet<(u64, u64)> =
                ring.iter().map(|p| (p.lon.to_bits(), p.lat.to_bits())).collect();
            if distinct.len() < 3 || ring_moments(ring).0 == 0.0 {
                return Err(GeoError::Degenerate(
                    "ring has fewer than three distinct vertices or zero area".into(),
                ));
            }
            if ring_self_intersects(ring) {
                return Err(GeoError::InvalidBoundary("ring self-intersects".into()));
            }
        }
        let (signed, _, _) = area.planar_moments();
        if !(signed > 0.0) {
            return Err(GeoError::Degenerate("boundary encloses zero area".into()));
        }
        Ok(area)
    }

    /// Reads the first Polygon or MultiPolygon from a GeoJSON document
    /// (FeatureCollection, Feature or bare geometry).
    pub fn from_geojson_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let read_err = |message: String| GeoError::Read {
            path: path.display().to_string(),
            message,
        };
        let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let default_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_default();
        Self::from_geojson(&value, &default_name)
    }

    pub fn from_geojson(value: &Value, default_name: &str) -> Result<Self> {
        let invalid = |m: &str| GeoError::InvalidBoundary(m.to_string());
        let features: Vec<&Value> = match value.get("type").and_then(Value::as_str) {
            Some("FeatureCollection") => value
                .get("features")
                .and_then(Value::as_array)
                .ok_or_else(|| invalid("FeatureCollection without features"))?
                .iter()
                .collect(),
            Some("Feature") => vec![value],
            Some("Polygon") | Some("MultiPolygon") => {
                return Self::new(default_name, geometry_polygons(value)?);
            }
            _ => return Err(invalid("not a GeoJSON object")),
        };
        for feature in features {
            let Some(geometry) = feature.get("geometry") else {
                continue;
            };
            if !matches!(
                geometry.get("type").and_then(Value::as_str),
                Some("Polygon") | Some("MultiPolygon")
            ) {
                continue;
            }
            let name = feature
                .get("properties")
                .and_then(|p| p.get("name"))
                .and_then(Value::as_str)
                .unwrap_or(default_name);
            return Self::new(name, geometry_polygons(geometry)?);
        }
        Err(invalid("no Polygon or MultiPolygon feature"))
    }

    /// Convex hull of `points` grown outward by `buffer_m`, used when no
    /// boundary file is supplied.
    pub fn buffered_hull(name: &str, points: &[GeoPoint], buffer_m: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(GeoError::Degenerate("no points to build a hull from".into()));
        }
        let n = points.len() as f64;
        let mean = GeoPoint::new(
            points.iter().map(|p| p.lon).sum::<f64>() / n,
            points.iter().map(|p| p.lat).sum::<f64>() / n,
        );
        let proj = Projection::new(mean);
        let planar: Vec<(f64, f64)> = points.iter().map(|&p| proj.project(p)).collect();
        let hull = convex_hull(&planar);
        const STEPS: usize = 32;
        let mut grown = Vec::with_capacity(hull.len() * STEPS);
        for &(x, y) in &hull {
            for k in 0..STEPS {
                let a = 2.0 * PI * k as f64 / STEPS as f64;
                // circumscribed polygon so the buffer is never thinner than buffer_m
                let r = buffer_m / (PI / STEPS as f64).cos();
                grown.push((x + r * a.cos(), y + r * a.sin()));
            }
        }
        let ring = convex_hull(&grown)
            .into_iter()
            .map(|(x, y)| proj.unproject(x, y))
            .collect();
        Self::new(name, vec![Polygon::new(ring, Vec::new())])
    }

    /// Signed area and first moments over all rings in lon/lat degrees,
    /// with every ring rotated to start at its smallest vertex so the result
    /// does not depend on where the ring starts.
    fn planar_moments(&self) -> (f64, f64, f64) {
        let (mut area, mut mx, mut my) = (0.0, 0.0, 0.0);
        for poly in &self.polygons {
            for (i, ring) in poly.rings().enumerate() {
                let ring = canonical_rotation(ring);
                let (a, cx, cy) = ring_moments(&ring);
                // exterior counts positive, holes negative, whatever the winding
                let sign = if (i == 0) == (a >= 0.0) { 1.0 } else { -1.0 };
                area += sign * a;
                mx += sign * cx;
                my += sign * cy;
            }
        }
        (area, mx, my)
    }

    /// Area-weighted centroid in lon/lat.
    pub fn centroid(&self) -> GeoPoint {
        let (area, mx, my) = self.planar_moments();
        GeoPoint::new(mx / area, my / area)
    }
}

fn geometry_polygons(geometry: &Value) -> Result<Vec<Polygon>> {
    let invalid = |m: &str| GeoError::InvalidBoundary(m.to_string());
    let coords = geometry
        .get("coordinates")
        .ok_or_else(|| invalid("geometry without coordinates"))?;
    let parse_ring = |ring: &Value| -> Result<Vec<GeoPoint>> {
        ring.as_array()
            .ok_or_else(|| invalid("ring is not an array"))?
            .iter()
            .map(|pos| {
                let pos = pos.as_array().ok_or_else(|| invalid("position is not an array"))?;
                match (pos.first().and_then(Value::as_f64), pos.get(1).and_then(Value::as_f64)) {
                    (Some(lon), Some(lat)) => Ok(GeoPoint::new(lon, lat)),
                    _ => Err(invalid("position needs two numbers")),
                }
            })
            .collect()
    };
    let parse_polygon = |poly: &Value| -> Result<Polygon> {
        let rings = poly.as_array().ok_or_else(|| invalid("polygon is not an array"))?;
        let mut rings = rings.iter().map(parse_ring);
        let exterior = rings.next().ok_or_else(|| invalid("polygon without rings"))??;
        let holes = rings.collect::<Result<Vec<_>>>()?;
        Ok(Polygon::new(exterior, holes))
    };
    match geometry.get("type").and_then(Value::as_str) {
        Some("Polygon") => Ok(vec![parse_polygon(coords)?]),
        Some("MultiPolygon") => coords
            .as_array()
            .ok_or_else(|| invalid("MultiPolygon coordinates are not an array"))?
            .iter()
            .map(parse_polygon)
            .collect(),
        _ => Err(invalid("geometry is not a Polygon or MultiPolygon")),
    }
}

fn canonical_rotation(ring: &[GeoPoint]) -> Vec<GeoPoint> {
    let start = (0..ring.len())
        .min_by(|&a, &b| {
            ring[a]
                .lon
                .total_cmp(&ring[b].lon)
                .then(ring[a].lat.total_cmp(&ring[b].lat))
        })
        .unwrap_or(0);
    ring[start..].iter().chain(&ring[..start]).copied().collect()
}

/// Shoelace signed area and unnormalized centroid moments of one ring.
fn ring_moments(ring: &[GeoPoint]) -> (f64, f64, f64) {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..ring.len() {
        let p = ring[i];
        let q = ring[(i + 1) % ring.len()];
        let cross = p.lon * q.lat - q.lon * p.lat;
        a += cross;
        cx += (p.lon + q.lon) * cross;
        cy += (p.lat + q.lat) * cross;
    }
    (a / 2.0, cx / 6.0, cy / 6.0)
}

fn ring_self_intersects(ring: &[GeoPoint]) -> bool {
    let n = ring.len();
    let pts: Vec<(f64, f64)> = ring.iter().map(|p| (p.lon, p.lat)).collect();
    let mut segs: Vec<usize> = (0..n).collect();
    let min_x = |i: usize| pts[i].0.min(pts[(i + 1) % n].0);
    let max_x = |i: usize| pts[i].0.max(pts[(i + 1) % n].0);
    segs.sort_by(|&a, &b| min_x(a).total_cmp(&min_x(b)));
    for (k, &i) in segs.iter().enumerate() {
        let reach = max_x(i);
        for &j in &segs[k + 1..] {
            if min_x(j) > reach {
                break;
            }
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            let (a1, a2) = (pts[i], pts[(i + 1) % n]);
            let (b1, b2) = (pts[j], pts[(j + 1) % n]);
            if adjacent {
                // adjacent edges share one vertex; only a collinear overlap is a defect
                let shared = if (i + 1) % n == j { a2 } else { a1 };
                let (other_a, other_b) = if (i + 1) % n == j { (a1, b2) } else { (a2, b1) };
                if cross(shared, other_a, other_b) == 0.0
                    && dot(shared, other_a, other_b) > 0.0
                {
                    return true;
                }
                continue;
            }
            if segments_intersect(a1, a2, b1, b2) {
                return true;
            }
        }
    }
    false
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn dot(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.0 - o.0) + (a.1 - o.1) * (b.1 - o.1)
}

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

/// Closed-segment intersection test (touching counts).
pub(crate) fn segments_intersect(
    a1: (f64, f64),
    a2: (f64, f64),
    b1: (f64, f64),
    b2: (f64, f64),
) -> bool {
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(a1, b1, b2))
        || (d2 == 0.0 && on_segment(a2, b1, b2))
        || (d3 == 0.0 && on_segment(b1, a1, a2))
        || (d4 == 0.0 && on_segment(b2, a1, a2))
}

/// Even-odd point-in-polygon over any number of rings.
#[cfg(test)]
pub(crate) fn point_in_rings(p: (f64, f64), rings: &[Vec<(f64, f64)>]) -> bool {
    let mut inside = false;
    for ring in rings {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.1 > p.1) != (b.1 > p.1) {
                let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
                if p.0 < x {
                    inside = !inside;
                }
            }
        }
    }
    inside
}

fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Area of a regular hexagon with side `side_m` meters, in km².
pub fn hex_area_km2(side_m: f64) -> f64 {
    let s = side_m / 1000.0;
    1.5 * SQRT3 * s * s
}

/// Index of a hexagon in its [`HexGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HexId(pub u32);

impl HexId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hexagon {
    pub q: i32,
    pub r: i32,
    pub center: GeoPoint,
    /// Center in projected meters.
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct HexGrid {
    side_m: f64,
    projection: Projection,
    hexagons: Vec<Hexagon>,
    index: HashMap<(i32, i32), HexId>,
}

fn axial_center(side_m: f64, q: i32, r: i32) -> (f64, f64) {
    (
        side_m * SQRT3 * (f64::from(q) + f64::from(r) / 2.0),
        side_m * 1.5 * f64::from(r),
    )
}

/// Projected vertices of the pointy-top hexagon centered at `(cx, cy)`.
fn hex_vertices(side_m: f64, cx: f64, cy: f64) -> [(f64, f64); 6] {
    let mut v = [(0.0, 0.0); 6];
    for (k, slot) in v.iter_mut().enumerate() {
        let angle = (60.0 * k as f64 - 30.0).to_radians();
        *slot = (cx + side_m * angle.cos(), cy + side_m * angle.sin());
    }
    v
}

fn point_in_convex(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= 0.0)
}

fn segment_touches_hexagon(a: (f64, f64), b: (f64, f64), hex: &[(f64, f64); 6]) -> bool {
    if point_in_convex(a, hex) || point_in_convex(b, hex) {
        return true;
    }
    (0..6).any(|i| segments_intersect(a, b, hex[i], hex[(i + 1) % 6]))
}

/// Fractional axial coordinates rounded to the containing hexagon.
fn axial_round(side_m: f64, x: f64, y: f64) -> (i32, i32) {
    let qf = (SQRT3 / 3.0 * x - y / 3.0) / side_m;
    let rf = (2.0 / 3.0 * y) / side_m;
    let sf = -qf - rf;
    let (mut q, mut r, s) = (qf.round(), rf.round(), sf.round());
    let (dq, dr, ds) = ((q - qf).abs(), (r - rf).abs(), (s - sf).abs());
    if dq > dr && dq > ds {
        q = -r - s;
    } else if dr > ds {
        r = -q - s;
    }
    (q as i32, r as i32)
}

/// Builds the tessellation of `area`: every lattice hexagon whose polygon
/// intersects the boundary, on a lattice anchored at the area centroid.
pub fn build_grid(area: &StudyArea, side_m: f64) -> Result<HexGrid> {
    if !(side_m > 0.0 && side_m.is_finite()) {
        return Err(GeoError::InvalidSide(side_m));
    }
    let projection = Projection::new(area.centroid());
    let rings: Vec<Vec<(f64, f64)>> = area
        .polygons
        .iter()
        .flat_map(Polygon::rings)
        .map(|ring| canonical_rotation(ring).iter().map(|&p| projection.project(p)).collect())
        .collect();

    let (mut xmin, mut ymin, mut xmax, mut ymax) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(x, y) in rings.iter().flatten() {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }

    let mut selected: BTreeSet<(i32, i32)> = BTreeSet::new();
    // Hexagons crossed by (or containing) a boundary edge.
    for ring in &rings {
        for i in 0..ring.len() {
            let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
            for (q, r) in lattice_candidates(
                side_m,
                a.0.min(b.0),
                a.1.min(b.1),
                a.0.max(b.0),
                a.1.max(b.1),
            ) {
                if selected.contains(&(q, r)) {
                    continue;
                }
                let (cx, cy) = axial_center(side_m, q, r);
                if segment_touches_hexagon(a, b, &hex_vertices(side_m, cx, cy)) {
                    selected.insert((q, r));
                }
            }
        }
    }
    // Hexagons not touching any edge are entirely inside or outside; their
    // center decides. One scanline per lattice row.
    let row_step = 1.5 * side_m;
    let r_lo = ((ymin - side_m) / row_step).floor() as i32;
    let r_hi = ((ymax + side_m) / row_step).ceil() as i32;
    for r in r_lo..=r_hi {
        let y = row_step * f64::from(r);
        let mut crossings: Vec<f64> = Vec::new();
        for ring in &rings {
            for i in 0..ring.len() {
                let (a, b) = (ring[i], ring[(i + 1) % ring.len()]);
                if (a.1 > y) != (b.1 > y) {
                    crossings.push(a.0 + (y - a.1) * (b.0 - a.0) / (b.1 - a.1));
                }
            }
        }
        if crossings.is_empty() {
            continue;
        }
        crossings.sort_by(f64::total_cmp);
        let q_lo = ((xmin - side_m) / (side_m * SQRT3) - f64::from(r) / 2.0).floor() as i32;
        let q_hi = ((xmax + side_m) / (side_m * SQRT3) - f64::from(r) / 2.0).ceil() as i32;
        for q in q_lo..=q_hi {
            let (cx, _) = axial_center(side_m, q, r);
            // crossings strictly right of the center, matching point_in_rings
            let right = crossings.len() - crossings.partition_point(|&x| x <= cx);
            if right % 2 == 1 {
                selected.insert((q, r));
            }
        }
    }

    if selected.is_empty() {
        return Err(GeoError::Degenerate("no hexagon intersects the boundary".into()));
    }
    let hexagons: Vec<Hexagon> = selected
        .into_iter()
        .map(|(q, r)| {
            let (x, y) = axial_center(side_m, q, r);
            Hexagon {
                q,
                r,
                center: projection.unproject(x, y),
                x,
                y,
            }
        })
        .collect();
    let index = hexagons
        .iter()
        .enumerate()
        .map(|(i, h)| ((h.q, h.r), HexId(i as u32)))
        .collect();
    Ok(HexGrid {
        side_m,
        projection,
        hexagons,
        index,
    })
}

/// Lattice cells whose center lies within `side` of the given box.
fn lattice_candidates(
    side_m: f64,
    xmin: f64,
    ymin: f64,
    xmax: f64,
    ymax: f64,
) -> impl Iterator<Item = (i32, i32)> {
    let row_step = 1.5 * side_m;
    let r_lo = ((ymin - side_m) / row_step).floor() as i32;
    let r_hi = ((ymax + side_m) / row_step).ceil() as i32;
    (r_lo..=r_hi).flat_map(move |r| {
        let q_lo = ((xmin - side_m) / (side_m * SQRT3) - f64::from(r) / 2.0).floor() as i32;
        let q_hi = ((xmax + side_m) / (side_m * SQRT3) - f64::from(r) / 2.0).ceil() as i32;
        (q_lo..=q_hi).map(move |q| (q, r))
    })
}

impl HexGrid {
    pub fn side_m(&self) -> f64 {
        self.side_m
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn len(&self) -> usize {
        self.hexagons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hexagons.is_empty()
    }

    pub fn hexagons(&self) -> &[Hexagon] {
        &self.hexagons
    }

    pub fn hexagon(&self, id: HexId) -> &Hexagon {
        &self.hexagons[id.index()]
    }

    pub fn ids(&self) -> impl Iterator<Item = HexId> {
        (0..self.hexagons.len() as u32).map(HexId)
    }

    pub fn id_of(&self, q: i32, r: i32) -> Option<HexId> {
        self.index.get(&(q, r)).copied()
    }

    pub fn hex_area_km2(&self) -> f64 {
        hex_area_km2(self.side_m)
    }

    /// Hexagon containing the point, if it is one of the retained hexagons.
    /// Points on a shared edge go to the nearest center (ties resolved by
    /// axial rounding).
    pub fn locate(&self, lon: f64, lat: f64) -> Option<HexId> {
        let (x, y) = self.projection.project(GeoPoint::new(lon, lat));
        self.locate_xy(x, y)
    }

    pub fn locate_xy(&self, x: f64, y: f64) -> Option<HexId> {
        self.id_of_rounded(axial_round(self.side_m, x, y))
    }

    fn id_of_rounded(&self, qr: (i32, i32)) -> Option<HexId> {
        self.index.get(&qr).copied()
    }

    /// Projected vertices of a hexagon.
    pub fn vertices_xy(&self, id: HexId) -> [(f64, f64); 6] {
        let h = self.hexagon(id);
        hex_vertices(self.side_m, h.x, h.y)
    }

    /// Closed WGS84 ring (first vertex repeated) for export.
    pub fn boundary_lonlat(&self, id: HexId) -> Vec<GeoPoint> {
        let mut ring: Vec<GeoPoint> = self
            .vertices_xy(id)
            .iter()
            .map(|&(x, y)| self.projection.unproject(x, y))
            .collect();
        ring.push(ring[0]);
        ring
    }
}
