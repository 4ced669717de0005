use std::collections::BTreeSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use super::source::{decompressed, open_path};
use crate::error::{Error, Result};
use crate::geodesy::GeoPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilityKind {
    FireStation,
    EmergencyRoom,
}

impl fmt::Display for FacilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FacilityKind::FireStation => "fire station",
            FacilityKind::EmergencyRoom => "emergency room",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Facility {
    pub id: String,
    pub kind: FacilityKind,
    pub location: GeoPoint,
    pub name: String,
}

/// Reads `id,name,lat,lon` rows. Any bad row or duplicate id is fatal.
pub fn load_facilities<R: Read>(reader: R, kind: FacilityKind) -> Result<Vec<Facility>> {
    let input = decompressed(reader).map_err(|e| Error::io("<facilities>", e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("facility file lacks column '{name}'")))
    };
    let (id_c, name_c, lat_c, lon_c) = (col("id")?, col("name")?, col("lat")?, col("lon")?);

    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| rec.get(i).unwrap_or("").trim();
        let id = field(id_c).to_string();
        if id.is_empty() {
            return Err(Error::invalid(format!("row {line}: id"), "empty facility id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::invalid(format!("row {line}: id"), format!("duplicate facility id '{id}'")));
        }
        let coord = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("row {line}: {name}"), format!("'{}' is not a number", field(i))))
        };
        let (lat, lon) = (coord(lat_c, "lat")?, coord(lon_c, "lon")?);
        let location = GeoPoint::new(lat, lon).map_err(|e| match e {
            Error::InvalidInput { field, message } => Error::invalid(format!("row {line}: {field}"), message),
            other => other,
        })?;
        out.push(Facility { id, kind, location, name: field(name_c).to_string() });
    }
    Ok(out)
}

pub fn load_facilities_path(path: &Path, kind: FacilityKind) -> Result<Vec<Facility>> {
    load_facilities(open_path(path)?, kind).map_err(|e| match e {
        Error::InvalidInput { field, message } => {
            Error::InvalidInput { field: format!("{}: {field}", path.display()), message }
        }
        other => other,
    })
}
