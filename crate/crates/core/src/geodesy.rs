//! Great-circle distances between territory reference points.
//!
//! Distances are computed on a sphere with the IUGG mean Earth radius. The
//! spherical approximation differs from ellipsoidal geodesics by well under
//! half a percent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Gazetteer;
use crate::model::TerritoryId;

/// IUGG mean Earth radius in kilometres.
pub const EARTH_MEAN_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside (-180, 180]")]
    Longitude(f64),
    #[error("territory {0} is not in the gazetteer")]
    UnknownTerritory(TerritoryId),
}

/// A point in decimal degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(-90.0..=90.0).contains(&lat) {
            return Err(GeoError::Latitude(lat));
        }
        if !(lon > -180.0 && lon <= 180.0) {
            return Err(GeoError::Longitude(lon));
        }
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Non-negative distance in kilometres.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct DistanceKm(f64);

impl DistanceKm {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Haversine distance. Symmetric in its arguments bit for bit: the formula
/// only uses squared sines of differences and a product of cosines.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> DistanceKm {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = (b.lat - a.lat).to_radians();
    let dlon = (b.lon - a.lon).to_radians();
    let s_lat = (dlat / 2.0).sin();
    let s_lon = (dlon / 2.0).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    let central = 2.0 * h.sqrt().min(1.0).asin();
    DistanceKm(EARTH_MEAN_RADIUS_KM * central)
}

/// Distance from a cited territory to a citing one: municipality centroids,
/// or the capital when the citing side is a country.
pub fn dyad_distance(i: &TerritoryId, j: &TerritoryId, gazetteer: &Gazetteer) -> Result<DistanceKm, GeoError> {
    let a = gazetteer
        .point(i)
        .ok_or_else(|| GeoError::UnknownTerritory(i.clone()))?;
    let b = gazetteer
        .point(j)
        .ok_or_else(|| GeoError::UnknownTerritory(j.clone()))?;
    Ok(haversine_km(a, b))
}
