//! Great-circle distances and point/polyline proximity on WGS84 coordinates.
//!
//! Distances are in metres. Point-to-segment distances use a local
//! equirectangular projection centred on the query point, which is accurate
//! for segments up to a few tens of kilometres long.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Mean Earth radius in metres.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// A WGS84 coordinate in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon<S = f64> {
    pub lat: S,
    pub lon: S,
}

impl<S: Scalar> LatLon<S> {
    pub fn new(lat: S, lon: S) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        let (lat, lon) = (self.lat.as_f64(), self.lon.as_f64());
        lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon)
    }

    pub fn cast<T: Scalar>(self) -> LatLon<T> {
        LatLon {
            lat: T::of(self.lat.as_f64()),
            lon: T::of(self.lon.as_f64()),
        }
    }
}

/// Haversine distance in metres.
pub fn haversine_m<S: Scalar>(a: LatLon<S>, b: LatLon<S>) -> S {
    let r = S::of(EARTH_RADIUS_M);
    let two = S::of(2.0);
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / two).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / two).sin().powi(2);
    // clamp guards asin against rounding just above 1
    two * r * h.sqrt().min(S::one()).asin()
}

/// Sum of haversine distances between consecutive vertices.
pub fn polyline_length_m<S: Scalar>(line: &[LatLon<S>]) -> S {
    line.windows(2)
        .map(|w| haversine_m(w[0], w[1]))
        .fold(S::zero(), |acc, d| acc + d)
}

#[derive(Debug, Clone, Copy)]
struct Planar<S> {
    x: S,
    y: S,
}

fn project<S: Scalar>(origin: LatLon<S>, p: LatLon<S>) -> Planar<S> {
    let r = S::of(EARTH_RADIUS_M);
    let mut dlon = p.lon - origin.lon;
    let half_turn = S::of(180.0);
    if dlon > half_turn {
        dlon = dlon - S::of(360.0);
    } else if dlon < -half_turn {
        dlon = dlon + S::of(360.0);
    }
    Planar {
        x: dlon.to_radians() * origin.lat.to_radians().cos() * r,
        y: (p.lat - origin.lat).to_radians() * r,
    }
}

fn planar_point_segment<S: Scalar>(p: Planar<S>, a: Planar<S>, b: Planar<S>) -> S {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > S::zero() {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2)
            .max(S::zero())
            .min(S::one())
    } else {
        S::zero()
    };
    let (cx, cy) = (a.x + t * dx - p.x, a.y + t * dy - p.y);
    (cx * cx + cy * cy).sqrt()
}

/// Distance in metres from `p` to the segment `a`-`b`.
pub fn point_segment_distance_m<S: Scalar>(p: LatLon<S>, a: LatLon<S>, b: LatLon<S>) -> S {
    let origin = Planar {
        x: S::zero(),
        y: S::zero(),
    };
    planar_point_segment(origin, project(p, a), project(p, b))
}

/// Minimum distance in metres from `p` to any vertex or segment of `line`.
///
/// Returns infinity for an empty line.
pub fn point_polyline_distance_m<S: Scalar>(p: LatLon<S>, line: &[LatLon<S>]) -> S {
    let vertex = line
        .iter()
        .map(|v| haversine_m(p, *v))
        .fold(S::infinity(), S::min);
    line.windows(2)
        .map(|w| point_segment_distance_m(p, w[0], w[1]))
        .fold(vertex, S::min)
}

fn orientation<S: Scalar>(a: Planar<S>, b: Planar<S>, c: Planar<S>) -> S {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross<S: Scalar>(a: Planar<S>, b: Planar<S>, c: Planar<S>, d: Planar<S>) -> bool {
    let o1 = orientation(a, b, c);
    let o2 = orientation(a, b, d);
    let o3 = orientation(c, d, a);
    let o4 = orientation(c, d, b);
    let zero = S::zero();
    (o1 > zero && o2 < zero || o1 < zero && o2 > zero)
        && (o3 > zero && o4 < zero || o3 < zero && o4 > zero)
}

/// Minimum distance in metres between two polylines; zero when they cross.
pub fn polyline_distance_m<S: Scalar>(a: &[LatLon<S>], b: &[LatLon<S>]) -> S {
    if a.is_empty() || b.is_empty() {
        return S::infinity();
    }
    let origin = a[0];
    let pa: Vec<_> = a.iter().map(|p| project(origin, *p)).collect();
    let pb: Vec<_> = b.iter().map(|p| project(origin, *p)).collect();
    for sa in pa.windows(2) {
        for sb in pb.windows(2) {
            if segments_cross(sa[0], sa[1], sb[0], sb[1]) {
                return S::zero();
            }
        }
    }
    let ab = a
        .iter()
        .map(|p| point_polyline_distance_m(*p, b))
        .fold(S::infinity(), S::min);
    b.iter()
        .map(|p| point_polyline_distance_m(*p, a))
        .fold(ab, S::min)
}

/// Axis-aligned bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn of<S: Scalar>(points: &[LatLon<S>]) -> Option<Self> {
        let mut it = points.iter();
        let first = it.next()?;
        let (lat, lon) = (first.lat.as_f64(), first.lon.as_f64());
        let mut bb = BBox {
            min_lat: lat,
            min_lon: lon,
            max_lat: lat,
            max_lon: lon,
        };
        for p in it {
            let (lat, lon) = (p.lat.as_f64(), p.lon.as_f64());
            bb.min_lat = bb.min_lat.min(lat);
            bb.max_lat = bb.max_lat.max(lat);
            bb.min_lon = bb.min_lon.min(lon);
            bb.max_lon = bb.max_lon.max(lon);
        }
        Some(bb)
    }

    /// Grows the box by at least `metres` in every direction.
    pub fn expand_m(&self, metres: f64) -> Self {
        let dlat = (metres / EARTH_RADIUS_M).to_degrees();
        let widest = self.min_lat.abs().max(self.max_lat.abs()).min(89.9);
        let dlon = dlat / widest.to_radians().cos();
        BBox {
            min_lat: self.min_lat - dlat,
            min_lon: self.min_lon - dlon,
            max_lat: self.max_lat + dlat,
            max_lon: self.max_lon + dlon,
        }
    }

    pub fn intersects(&self, other: &BBox) -> bool {
        self.min_lat <= other.max_lat
            && other.min_lat <= self.max_lat
            && self.min_lon <= other.max_lon
            && other.min_lon <= self.max_lon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TORONTO: LatLon = LatLon {
        lat: 43.6532,
        lon: -79.3832,
    };
    const OTTAWA: LatLon = LatLon {
        lat: 45.4215,
        lon: -75.6972,
    };

    #[test]
    fn toronto_ottawa_is_about_352_km() {
        let d = haversine_m(TORONTO, OTTAWA);
        assert!((d - 352_000.0).abs() < 3_520.0, "{d}");
    }

    #[test]
    fn one_degree_of_latitude() {
        // arc length of one degree on the mean sphere
        let expected = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let d = haversine_m(LatLon::new(10.0, 20.0), LatLon::new(11.0, 20.0));
        assert!((d - expected).abs() < 1e-6);
    }

    #[test]
    fn point_on_segment_interior() {
        let a: LatLon = LatLon::new(45.0, -75.0);
        let b = LatLon::new(45.0, -74.99);
        let mid: LatLon = LatLon::new(45.0, -74.995);
        assert!(point_segment_distance_m(mid, a, b) < 1e-6);
        // 0.0001 deg north is ~11.1 m
        let off: LatLon = LatLon::new(45.0001, -74.995);
        let d = point_segment_distance_m(off, a, b);
        assert!((d - 11.119).abs() < 0.01, "{d}");
    }

    #[test]
    fn crossing_polylines_have_zero_distance() {
        let a = [LatLon::new(45.0, -75.01), LatLon::new(45.0, -74.99)];
        let b = [LatLon::new(44.99, -75.0), LatLon::new(45.01, -75.0)];
        assert_eq!(polyline_distance_m(&a, &b), 0.0);
    }

    #[test]
    fn f32_haversine_close_to_f64() {
        let d64 = haversine_m(TORONTO, OTTAWA);
        let d32 = haversine_m(TORONTO.cast::<f32>(), OTTAWA.cast::<f32>());
        assert!((d64 - d32 as f64).abs() / d64 < 1e-4);
    }

    fn coord() -> impl Strategy<Value = LatLon> {
        (-80.0f64..80.0, -179.0f64..179.0).prop_map(|(lat, lon)| LatLon::new(lat, lon))
    }

    proptest! {
        #[test]
        fn haversine_symmetric_and_reflexive(a in coord(), b in coord()) {
            prop_assert_eq!(haversine_m(a, a), 0.0);
            let (ab, ba) = (haversine_m(a, b), haversine_m(b, a));
            prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        }
    }
}
