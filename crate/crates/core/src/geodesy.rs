//! Great-circle distance on a spherical Earth.
//!
//! Distances are computed with the haversine formula and scaled to statute
//! miles by a configurable Earth radius.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in statute miles.
pub const EARTH_RADIUS_MILES: f64 = 3959.0;

/// A validated latitude/longitude pair in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat_deg: f64,
    lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::invalid("lat", format!("{lat_deg} is outside [-90, 90]")));
        }
        if !lon_deg.is_finite() || !(-180.0..=180.0).contains(&lon_deg) {
            return Err(Error::invalid("lon", format!("{lon_deg} is outside [-180, 180]")));
        }
        Ok(Self { lat_deg, lon_deg })
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_deg
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_deg
    }
}

/// Central angle between two points, in radians, in `[0, π]`.
pub fn great_circle_radians(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let lat_a = a.lat_deg.to_radians();
    let lat_b = b.lat_deg.to_radians();
    let half_dlat = ((a.lat_deg - b.lat_deg).to_radians() / 2.0).sin();
    let half_dlon = ((a.lon_deg - b.lon_deg).to_radians() / 2.0).sin();
    let h = half_dlat * half_dlat + lat_a.cos() * lat_b.cos() * half_dlon * half_dlon;
    2.0 * h.sqrt().clamp(0.0, 1.0).asin()
}

/// Sphere used to turn angular distances into lengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    radius_miles: f64,
}

impl Default for Sphere {
    fn default() -> Self {
        Self { radius_miles: EARTH_RADIUS_MILES }
    }
}

impl Sphere {
    pub fn with_radius(radius_miles: f64) -> Result<Self> {
        if !radius_miles.is_finite() || radius_miles <= 0.0 {
            return Err(Error::invalid(
                "earth_radius_miles",
                format!("{radius_miles} must be a positive finite number"),
            ));
        }
        Ok(Self { radius_miles })
    }

    pub fn radius_miles(&self) -> f64 {
        self.radius_miles
    }

    pub fn radians_to_miles(&self, radians: f64) -> Result<f64> {
        if !radians.is_finite() || radians < 0.0 {
            return Err(Error::invalid("distance", format!("{radians} radians is not a nonnegative distance")));
        }
        Ok(radians * self.radius_miles)
    }

    /// Great-circle distance in miles; always valid for validated points.
    pub fn miles_between(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        great_circle_radians(a, b) * self.radius_miles
    }
}

/// Converts radians to miles on the default 3959-mile sphere.
pub fn radians_to_miles(radians: f64) -> Result<f64> {
    Sphere::default().radians_to_miles(radians)
}
