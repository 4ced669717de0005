use std::io::Read;

use chrono::{Datelike, NaiveDateTime};
use serde::Serialize;

use super::category::Category;
use super::report::FilterReport;
use super::source::decompressed;
use crate::error::{Error, Result};
use crate::geodesy::GeoPoint;

pub const DEFAULT_TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

/// One emergency call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Incident {
    pub id: String,
    pub alarm: NaiveDateTime,
    pub arrival: Option<NaiveDateTime>,
    pub zip: String,
    pub location: GeoPoint,
    pub category: Category,
    pub action_codes: Vec<String>,
    pub property_loss: f64,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LocationColumns {
    LatLon {
        lat: String,
        lon: String,
    },
    /// A single WKT column of the form `POINT (lon lat)`.
    Point(String),
}

/// Maps source columns onto incident fields.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IncidentColumns {
    pub id: String,
    pub alarm: String,
    pub arrival: String,
    pub zip: String,
    pub location: LocationColumns,
    pub category: String,
    pub actions: Option<String>,
    pub property_loss: Option<String>,
    pub delimiter: u8,
    pub timestamp_format: String,
    pub action_separator: char,
}

impl Default for IncidentColumns {
    fn default() -> Self {
        Self {
            id: "id".into(),
            alarm: "alarm_dttm".into(),
            arrival: "arrival_dttm".into(),
            zip: "zip".into(),
            location: LocationColumns::LatLon { lat: "lat".into(), lon: "lon".into() },
            category: "category".into(),
            actions: Some("actions".into()),
            property_loss: Some("property_loss".into()),
            delimiter: b',',
            timestamp_format: DEFAULT_TIMESTAMP_FORMAT.into(),
            action_separator: ';',
        }
    }
}

enum Loc {
    LatLon(usize, usize),
    Point(usize),
}

struct ColumnIndex {
    id: usize,
    alarm: usize,
    arrival: usize,
    zip: usize,
    location: Loc,
    category: usize,
    actions: Option<usize>,
    property_loss: Option<usize>,
}

impl IncidentColumns {
    /// Names of every mapped column, in field order.
    pub fn mapped_names(&self) -> Vec<(&'static str, &str)> {
        let mut out = vec![
            ("id", self.id.as_str()),
            ("alarm", self.alarm.as_str()),
            ("arrival", self.arrival.as_str()),
            ("zip", self.zip.as_str()),
        ];
        match &self.location {
            LocationColumns::LatLon { lat, lon } => {
                out.push(("lat", lat));
                out.push(("lon", lon));
            }
            LocationColumns::Point(p) => out.push(("point", p)),
        }
        out.push(("category", &self.category));
        if let Some(a) = &self.actions {
            out.push(("actions", a));
        }
        if let Some(p) = &self.property_loss {
            out.push(("property_loss", p));
        }
        out
    }

    /// Mapped columns absent from `header`, as `(field, column)` pairs.
    pub fn missing_columns(&self, header: &csv::StringRecord) -> Vec<(String, String)> {
        self.mapped_names()
            .into_iter()
            .filter(|(_, col)| !header.iter().any(|h| h.trim() == *col))
            .map(|(f, c)| (f.to_string(), c.to_string()))
            .collect()
    }

    fn resolve(&self, header: &csv::StringRecord) -> Result<ColumnIndex> {
        let missing = self.missing_columns(header);
        if !missing.is_empty() {
            let list: Vec<String> = missing.iter().map(|(f, c)| format!("incidents.col.{f} = '{c}'")).collect();
            return Err(Error::Config(format!("incident header lacks mapped column(s): {}", list.join(", "))));
        }
        let idx = |name: &str| header.iter().position(|h| h.trim() == name).unwrap();
        Ok(ColumnIndex {
            id: idx(&self.id),
            alarm: idx(&self.alarm),
            arrival: idx(&self.arrival),
            zip: idx(&self.zip),
            location: match &self.location {
                LocationColumns::LatLon { lat, lon } => Loc::LatLon(idx(lat), idx(lon)),
                LocationColumns::Point(p) => Loc::Point(idx(p)),
            },
            category: idx(&self.category),
            actions: self.actions.as_deref().map(idx),
            property_loss: self.property_loss.as_deref().map(idx),
        })
    }
}

pub(crate) fn is_zip(s: &str) -> bool {
    s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit())
}

fn parse_point(raw: &str) -> Option<(f64, f64)> {
    let inner = raw
        .trim()
        .strip_prefix("POINT")
        .or_else(|| raw.trim().strip_prefix("point"))?
        .trim()
        .strip_prefix('(')?
        .strip_suffix(')')?;
    let mut parts = inner.split_whitespace();
    let lon = parts.next()?.parse().ok()?;
    let lat = parts.next()?.parse().ok()?;
    if parts.next().is_some() {
        return None;
    }
    Some((lat, lon))
}

fn parse_money(raw: &str) -> Option<f64> {
    let cleaned: String = raw.trim().chars().filter(|c| *c != '$' && *c != ',').collect();
    if cleaned.is_empty() {
        return Some(0.0);
    }
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite() && *v >= 0.0)
}

fn parse_row(
    rec: &csv::StringRecord,
    ix: &ColumnIndex,
    cols: &IncidentColumns,
) -> std::result::Result<Incident, &'static str> {
    let get = |i: usize| rec.get(i).unwrap_or("").trim();

    let alarm = NaiveDateTime::parse_from_str(get(ix.alarm), &cols.timestamp_format)
        .map_err(|_| "unparseable alarm timestamp")?;
    let arrival_raw = get(ix.arrival);
    let arrival = if arrival_raw.is_empty() {
        None
    } else {
        Some(
            NaiveDateTime::parse_from_str(arrival_raw, &cols.timestamp_format)
                .map_err(|_| "unparseable arrival timestamp")?,
        )
    };
    if let Some(arr) = arrival {
        if arr < alarm {
            return Err("arrival precedes alarm");
        }
    }

    let zip = get(ix.zip);
    if !is_zip(zip) {
        return Err("invalid zip");
    }

    let (lat, lon) = match ix.location {
        Loc::LatLon(la, lo) => {
            let (la, lo) = (get(la), get(lo));
            if la.is_empty() || lo.is_empty() {
                return Err("missing coordinates");
            }
            match (la.parse::<f64>(), lo.parse::<f64>()) {
                (Ok(a), Ok(b)) => (a, b),
                _ => return Err("unparseable coordinates"),
            }
        }
        Loc::Point(p) => {
            let raw = get(p);
            if raw.is_empty() {
                return Err("missing coordinates");
            }
            parse_point(raw).ok_or("unparseable coordinates")?
        }
    };
    let location = GeoPoint::new(lat, lon).map_err(|_| "coordinates out of range")?;

    let category = Category::parse(get(ix.category)).ok_or("unknown category")?;

    let action_codes = match ix.actions {
        Some(i) => {
            get(i).split(cols.action_separator).map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
        }
        None => Vec::new(),
    };

    let property_loss = match ix.property_loss {
        Some(i) => parse_money(get(i)).ok_or("invalid property loss")?,
        None => 0.0,
    };

    Ok(Incident {
        id: get(ix.id).to_string(),
        year: alarm.year(),
        alarm,
        arrival,
        zip: zip.to_string(),
        location,
        category,
        action_codes,
        property_loss,
    })
}

/// Streams incidents out of delimiter-separated text with a header row.
///
/// A header missing any mapped column is fatal. Every other problem
/// quarantines the row and parsing continues.
pub fn parse_incidents<R: Read>(reader: R, cols: &IncidentColumns) -> Result<(Vec<Incident>, FilterReport)> {
    let input = decompressed(reader).map_err(|e| Error::io("<incidents>", e))?;
    let mut rdr =
        csv::ReaderBuilder::new().delimiter(cols.delimiter).has_headers(true).flexible(false).from_reader(input);
    let header = rdr.headers()?.clone();
    let ix = cols.resolve(&header)?;

    let mut report = FilterReport::default();
    let mut incidents = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                report.input_count += 1;
                match parse_row(&record, &ix, cols) {
                    Ok(inc) => incidents.push(inc),
                    Err(reason) => report.quarantine(line, reason),
                }
            }
            Err(e) => match e.kind() {
                csv::ErrorKind::UnequalLengths { .. } | csv::ErrorKind::Utf8 { .. } => {
                    report.input_count += 1;
                    report.quarantine(line, "malformed row");
                }
                _ => return Err(e.into()),
            },
        }
    }
    report.retained_count = incidents.len();
    Ok((incidents, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,alarm_dttm,arrival_dttm,zip,lat,lon,category,actions,property_loss\n";

    fn parse(body: &str) -> (Vec<Incident>, FilterReport) {
        let text = format!("{HEADER}{body}");
        parse_incidents(text.as_bytes(), &IncidentColumns::default()).unwrap()
    }

    #[test]
    fn header_only() {
        let (inc, rep) = parse("");
        assert!(inc.is_empty());
        assert_eq!(rep.input_count, 0);
        assert!(rep.is_conserved());
    }

    #[test]
    fn one_well_formed_row() {
        let (inc, rep) = parse(
            "C1,2018-03-04T10:00:00,2018-03-04T10:04:30,94124,37.73,-122.39,Fire,86 - Investigate;11 - Extinguish,\"$1,250\"\n",
        );
        assert_eq!(rep.input_count, 1);
        assert_eq!(inc.len(), 1);
        let i = &inc[0];
        assert_eq!(i.id, "C1");
        assert_eq!(i.zip, "94124");
        assert_eq!(i.year, 2018);
        assert_eq!(i.category, Category::Fire);
        assert_eq!(i.action_codes, vec!["86 - Investigate", "11 - Extinguish"]);
        assert_eq!(i.property_loss, 1250.0);
        assert_eq!(i.location, GeoPoint::new(37.73, -122.39).unwrap());
        assert_eq!((i.arrival.unwrap() - i.alarm).num_seconds(), 270);
    }

    #[test]
    fn arrival_before_alarm_is_quarantined() {
        let (inc, rep) = parse("C1,2018-03-04T10:00:00,2018-03-04T09:59:59,94124,37.73,-122.39,Fire,,0\n");
        assert!(inc.is_empty());
        assert_eq!(rep.quarantined, 1);
        assert_eq!(rep.quarantine_samples[0].reason, "arrival precedes alarm");
        assert_eq!(rep.quarantine_samples[0].line, 2);
        assert!(rep.is_conserved());
    }

    #[test]
    fn bad_rows_quarantined_and_parse_continues() {
        let (inc, rep) = parse(concat!(
            "A,not-a-time,,94124,37.7,-122.4,Fire,,\n",
            "B,2018-01-01T00:00:00,,9412,37.7,-122.4,Fire,,\n",
            "C,2018-01-01T00:00:00,,94124,,-122.4,Fire,,\n",
            "D,2018-01-01T00:00:00,,94124,97.7,-122.4,Fire,,\n",
            "E,2018-01-01T00:00:00,,94124,37.7,-122.4,Arson,,\n",
            "F,2018-01-01T00:00:00,,94124,37.7,-122.4,Fire,,-5\n",
            "G,2018-01-01T00:00:00,,94124\n",
            "H,2018-01-01T00:00:00.000,,94124,37.7,-122.4,fire,,\n",
        ));
        assert_eq!(inc.len(), 1);
        assert_eq!(inc[0].id, "H");
        assert!(inc[0].arrival.is_none());
        assert_eq!(rep.input_count, 8);
        assert_eq!(rep.quarantined, 7);
        assert!(rep.is_conserved());
        let reasons: Vec<_> = rep.quarantine_samples.iter().map(|q| q.reason.as_str()).collect();
        assert_eq!(
            reasons,
            vec![
                "unparseable alarm timestamp",
                "invalid zip",
                "missing coordinates",
                "coordinates out of range",
                "unknown category",
                "invalid property loss",
                "malformed row",
            ]
        );
    }

    #[test]
    fn missing_mapped_column_is_fatal() {
        let text = "id,alarm_dttm,zip\n";
        let err = parse_incidents(text.as_bytes(), &IncidentColumns::default()).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config(_)));
        assert!(msg.contains("incidents.col.arrival"), "{msg}");
    }

    #[test]
    fn wkt_point_and_custom_delimiter() {
        let cols = IncidentColumns {
            id: "Incident Number".into(),
            alarm: "Alarm DtTm".into(),
            arrival: "Arrival DtTm".into(),
            zip: "zipcode".into(),
            location: LocationColumns::Point("point".into()),
            category: "Primary Situation".into(),
            actions: Some("Action Taken Primary".into()),
            property_loss: None,
            delimiter: b'\t',
            timestamp_format: "%Y/%m/%d %I:%M:%S %p".into(),
            action_separator: ';',
        };
        let text = "Incident Number\tAlarm DtTm\tArrival DtTm\tzipcode\tpoint\tPrimary Situation\tAction Taken Primary\n\
                    180001\t2018/01/01 01:02:03 PM\t2018/01/01 01:07:03 PM\t94102\tPOINT (-122.41 37.78)\t321 EMS call\t32 - Provide basic life support\n";
        let (inc, rep) = parse_incidents(text.as_bytes(), &cols).unwrap();
        assert_eq!(rep.quarantined, 0);
        assert_eq!(inc[0].category, Category::RescueEms);
        assert_eq!(inc[0].location.lat_deg(), 37.78);
        assert_eq!(inc[0].location.lon_deg(), -122.41);
        assert_eq!((inc[0].arrival.unwrap() - inc[0].alarm).num_seconds(), 300);
    }

    #[test]
    fn point_parsing() {
        assert_eq!(parse_point("POINT (-122.4 37.7)"), Some((37.7, -122.4)));
        assert_eq!(parse_point("POINT(1 2 3)"), None);
        assert_eq!(parse_point("LINESTRING (1 2)"), None);
    }
}
