//! Per-incident response metrics, nearest-facility distances, summary
//! statistics, thresholds and binary outcomes.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use chrono::NaiveDateTime;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesy::{GeoPoint, Sphere};
use crate::ingest::{Facility, FacilityKind, Incident, IncomeBracket, ZipProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ResponseTime,
    StationDistance,
    ErDistance,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::ResponseTime, Metric::StationDistance, Metric::ErDistance];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ResponseTime => "response_time",
            Metric::StationDistance => "station_distance",
            Metric::ErDistance => "er_distance",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Metric::ResponseTime => "Response Time from Station",
            Metric::StationDistance => "Distance from Station to Call",
            Metric::ErDistance => "Distance from Calls to Emergency Room",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Metric::ResponseTime => "seconds",
            _ => "miles",
        }
    }

    /// The metric's value for `r`; `None` when the call has no arrival time.
    pub fn value(self, r: &ResponseRecord) -> Option<f64> {
        match self {
            Metric::ResponseTime => r.response_seconds.map(|s| s as f64),
            Metric::StationDistance => Some(r.station_miles),
            Metric::ErDistance => Some(r.er_miles),
        }
    }

    pub fn threshold(self, t: &Thresholds) -> f64 {
        match self {
            Metric::ResponseTime => t.response_seconds,
            Metric::StationDistance => t.station_miles,
            Metric::ErDistance => t.er_miles,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown metric '{s}' (response_time|station_distance|er_distance)")))
    }
}

/// Derived metrics for one incident.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseRecord {
    pub incident_id: String,
    /// `None` when the source row had no arrival time.
    pub response_seconds: Option<i64>,
    pub nearest_station_id: String,
    pub station_miles: f64,
    pub nearest_er_id: String,
    pub er_miles: f64,
    pub zip: String,
    pub bracket: Option<IncomeBracket>,
    pub year: i32,
}

/// Whole seconds from alarm to arrival.
pub fn response_time(alarm: NaiveDateTime, arrival: NaiveDateTime) -> Result<i64> {
    if arrival < alarm {
        return Err(Error::Domain(format!("arrival {arrival} precedes alarm {alarm}")));
    }
    Ok((arrival - alarm).num_seconds())
}

/// Closest facility to `call` and its distance in miles. Exact ties go to the
/// lexicographically smallest id.
pub fn nearest_facility<'a>(
    call: &GeoPoint,
    facilities: &'a [Facility],
    sphere: &Sphere,
) -> Result<(&'a Facility, f64)> {
    let first = facilities
        .first()
        .ok_or_else(|| Error::Config("nearest-facility search over an empty facility list".into()))?;
    if let Some(f) = facilities.iter().find(|f| f.kind != first.kind) {
        return Err(Error::Config(format!(
            "facility list mixes kinds ({} '{}' and {} '{}')",
            first.kind, first.id, f.kind, f.id
        )));
    }
    let mut best = (first, sphere.miles_between(call, &first.location));
    for f in &facilities[1..] {
        let d = sphere.miles_between(call, &f.location);
        if d < best.1 || (d == best.1 && f.id < best.0.id) {
            best = (f, d);
        }
    }
    Ok(best)
}

/// Computes a record for every incident, in input order.
pub fn compute_records(
    incidents: &[Incident],
    stations: &[Facility],
    ers: &[Facility],
    profiles: &BTreeMap<String, ZipProfile>,
    sphere: &Sphere,
) -> Result<Vec<ResponseRecord>> {
    for (list, kind) in [(stations, FacilityKind::FireStation), (ers, FacilityKind::EmergencyRoom)] {
        if list.is_empty() {
            return Err(Error::Config(format!("no {kind} facilities loaded")));
        }
        if let Some(f) = list.iter().find(|f| f.kind != kind) {
            return Err(Error::Config(format!("facility '{}' is not a {kind}", f.id)));
        }
    }
    incidents
        .par_iter()
        .map(|inc| {
            let (station, station_miles) = nearest_facility(&inc.location, stations, sphere)?;
            let (er, er_miles) = nearest_facility(&inc.location, ers, sphere)?;
            let response_seconds = inc.arrival.map(|arr| response_time(inc.alarm, arr)).transpose()?;
            Ok(ResponseRecord {
                incident_id: inc.id.clone(),
                response_seconds,
                nearest_station_id: station.id.clone(),
                station_miles,
                nearest_er_id: er.id.clone(),
                er_miles,
                zip: inc.zip.clone(),
                bracket: profiles.get(&inc.zip).and_then(|p| p.median_bracket),
                year: inc.year,
            })
        })
        .collect()
}

/// Writes records as CSV for audit.
pub fn write_records_csv<W: Write>(records: &[ResponseRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record([
        "incident_id",
        "response_seconds",
        "nearest_station_id",
        "station_miles",
        "nearest_er_id",
        "er_miles",
        "zip",
        "bracket",
        "year",
    ])?;
    for r in records {
        w.write_record([
            r.incident_id.clone(),
            r.response_seconds.map(|s| s.to_string()).unwrap_or_default(),
            r.nearest_station_id.clone(),
            format!("{:.6}", r.station_miles),
            r.nearest_er_id.clone(),
            format!("{:.6}", r.er_miles),
            r.zip.clone(),
            r.bracket.map(|b| b.code().to_string()).unwrap_or_default(),
            r.year.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<records>", e))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation over √n.
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
}

pub fn summarize(values: &[f64]) -> Result<SummaryStats> {
    if values.is_empty() {
        return Err(Error::Domain("summary of an empty list".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite value {v} in summary input")));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_error = if n == 1 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding in the sum can push the mean a hair outside [min, max].
    Ok(SummaryStats { n, mean: mean.clamp(min, max), std_error, min, max })
}

/// Cutoffs at or below which a call counts as meeting the standard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds {
    pub response_seconds: f64,
    pub station_miles: f64,
    pub er_miles: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { response_seconds: 300.0, station_miles: 0.4, er_miles: 1.0 }
    }
}

impl Thresholds {
    pub fn new(response_seconds: f64, station_miles: f64, er_miles: f64) -> Result<Self> {
        for (name, v) in [
            ("threshold.response_time", response_seconds),
            ("threshold.station_distance", station_miles),
            ("threshold.er_distance", er_miles),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::invalid(name, format!("{v} must be strictly positive")));
            }
        }
        Ok(Self { response_seconds, station_miles, er_miles })
    }
}

/// Explicit values that replace derived thresholds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThresholdOverrides {
    pub response_seconds: Option<f64>,
    pub station_miles: Option<f64>,
    pub er_miles: Option<f64>,
}

impl ThresholdOverrides {
    pub fn set(&mut self, metric: Metric, value: f64) {
        match metric {
            Metric::ResponseTime => self.response_seconds = Some(value),
            Metric::StationDistance => self.station_miles = Some(value),
            Metric::ErDistance => self.er_miles = Some(value),
        }
    }
}

pub fn round_to_minute(seconds: f64) -> f64 {
    (seconds / 60.0).round() * 60.0
}

pub fn round_to_tenth(miles: f64) -> f64 {
    (miles * 10.0).round() / 10.0
}

/// Thresholds from metric means: time to the nearest whole minute, distances
/// to the nearest 0.1 mile. Overrides win over derived values.
pub fn derive_thresholds(
    time: &SummaryStats,
    station: &SummaryStats,
    er: &SummaryStats,
    overrides: &ThresholdOverrides,
) -> Result<Thresholds> {
    Thresholds::new(
        overrides.response_seconds.unwrap_or_else(|| round_to_minute(time.mean)),
        overrides.station_miles.unwrap_or_else(|| round_to_tenth(station.mean)),
        overrides.er_miles.unwrap_or_else(|| round_to_tenth(er.mean)),
    )
}

/// One `(bracket, met_threshold)` pair per record with a value for `metric`.
/// Records without an arrival time are skipped for the response-time metric.
pub fn binarize(
    records: &[ResponseRecord],
    thresholds: &Thresholds,
    metric: Metric,
) -> Result<Vec<(IncomeBracket, bool)>> {
    let cutoff = metric.threshold(thresholds);
    records
        .iter()
        .filter_map(|r| metric.value(r).map(|v| (r, v)))
        .map(|(r, v)| {
            let bracket = r.bracket.ok_or_else(|| {
                Error::Domain(format!("record '{}' (ZIP {}) has no income bracket", r.incident_id, r.zip))
            })?;
            Ok((bracket, v <= cutoff))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn ts(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2018, 1, 1).unwrap().and_hms_opt(h, m, s).unwrap()
    }

    fn fac(id: &str, lat: f64, lon: f64) -> Facility {
        Facility {
            id: id.into(),
            kind: FacilityKind::FireStation,
            location: GeoPoint::new(lat, lon).unwrap(),
            name: id.into(),
        }
    }

    fn record(resp: Option<i64>, station: f64, er: f64, bracket: Option<IncomeBracket>) -> ResponseRecord {
        ResponseRecord {
            incident_id: "r".into(),
            response_seconds: resp,
            nearest_station_id: "S".into(),
            station_miles: station,
            nearest_er_id: "E".into(),
            er_miles: er,
            zip: "94110".into(),
            bracket,
            year: 2018,
        }
    }

    #[test]
    fn response_time_examples() {
        assert_eq!(response_time(ts(1, 0, 0), ts(1, 0, 0)).unwrap(), 0);
        assert_eq!(response_time(ts(1, 0, 0), ts(1, 5, 0)).unwrap(), 300);
        assert!(matches!(response_time(ts(1, 0, 0), ts(0, 59, 59)), Err(Error::Domain(_))));
    }

    #[test]
    fn nearest_single_and_coincident() {
        let s = Sphere::default();
        let call = GeoPoint::new(37.75, -122.42).unwrap();
        let one = [fac("A", 37.76, -122.40)];
        let (f, d) = nearest_facility(&call, &one, &s).unwrap();
        assert_eq!(f.id, "A");
        assert_eq!(d, s.miles_between(&call, &one[0].location));

        let many = [fac("A", 37.70, -122.40), fac("B", 37.75, -122.42), fac("C", 37.80, -122.45)];
        let (f, d) = nearest_facility(&call, &many, &s).unwrap();
        assert_eq!((f.id.as_str(), d), ("B", 0.0));
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let s = Sphere::default();
        let call = GeoPoint::new(0.0, 0.0).unwrap();
        let list = [fac("Z", 0.0, 1.0), fac("M", 0.0, -1.0), fac("Q", 0.0, 1.0)];
        assert_eq!(nearest_facility(&call, &list, &s).unwrap().0.id, "M");
    }

    #[test]
    fn empty_or_mixed_lists_rejected() {
        let s = Sphere::default();
        let call = GeoPoint::new(0.0, 0.0).unwrap();
        assert!(matches!(nearest_facility(&call, &[], &s), Err(Error::Config(_))));
        let mut er = fac("E", 0.0, 0.0);
        er.kind = FacilityKind::EmergencyRoom;
        assert!(nearest_facility(&call, &[fac("S", 1.0, 1.0), er], &s).is_err());
    }

    #[test]
    fn summarize_examples() {
        let one = summarize(&[5.0]).unwrap();
        assert_eq!((one.n, one.mean, one.std_error, one.min, one.max), (1, 5.0, 0.0, 5.0, 5.0));

        // s = 1, so s/√3
        let three = summarize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(three.mean, 2.0);
        assert!((three.std_error - 1.0 / 3f64.sqrt()).abs() < 1e-15);

        assert_eq!(summarize(&[4.0; 4]).unwrap().std_error, 0.0);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn thresholds_from_published_means() {
        let stat = |mean| SummaryStats { n: 10, mean, std_error: 0.0, min: 0.0, max: 100_000.0 };
        let t = derive_thresholds(&stat(327.0), &stat(0.38), &stat(0.97), &ThresholdOverrides::default()).unwrap();
        assert_eq!(t, Thresholds::default());

        let mut o = ThresholdOverrides::default();
        o.set(Metric::ErDistance, 1.14);
        let t = derive_thresholds(&stat(327.0), &stat(0.38), &stat(0.97), &o).unwrap();
        assert_eq!(t.er_miles, 1.14);

        // A mean under 30 s rounds to a zero threshold, which is rejected.
        assert!(derive_thresholds(&stat(20.0), &stat(0.38), &stat(0.97), &ThresholdOverrides::default()).is_err());
    }

    #[test]
    fn binarize_boundaries() {
        let t = Thresholds::default();
        let b = Some(IncomeBracket::B3);
        assert_eq!(
            binarize(&[record(Some(10), 0.4, 2.0, b)], &t, Metric::StationDistance).unwrap(),
            vec![(IncomeBracket::B3, true)]
        );
        assert_eq!(
            binarize(&[record(Some(301), 0.1, 2.0, b)], &t, Metric::ResponseTime).unwrap(),
            vec![(IncomeBracket::B3, false)]
        );
        assert_eq!(
            binarize(&[record(Some(1), 0.1, 0.99, b)], &t, Metric::ErDistance).unwrap(),
            vec![(IncomeBracket::B3, true)]
        );
        assert!(binarize(&[record(None, 0.1, 0.99, b)], &t, Metric::ResponseTime).unwrap().is_empty());
        assert!(binarize(&[record(Some(1), 0.1, 0.99, None)], &t, Metric::ErDistance).is_err());
    }

    #[test]
    fn metric_names() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!(matches!("eta".parse::<Metric>(), Err(Error::Config(_))));
    }

    fn arb_point() -> impl Strategy<Value = GeoPoint> {
        (37.6f64..37.9, -122.6f64..-122.3).prop_map(|(a, b)| GeoPoint::new(a, b).unwrap())
    }

    proptest! {
        #[test]
        fn nearest_matches_exhaustive_scan(call in arb_point(), pts in prop::collection::vec(arb_point(), 1..8), extra in arb_point()) {
            let s = Sphere::default();
            let list: Vec<Facility> = pts.iter().enumerate().map(|(i, p)| fac(&format!("F{i}"), p.lat_deg(), p.lon_deg())).collect();
            let (f, d) = nearest_facility(&call, &list, &s).unwrap();
            // Reference: scan with independent sort on (distance, id).
            let mut all: Vec<(f64, &str)> = list.iter().map(|f| (s.miles_between(&call, &f.location), f.id.as_str())).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(b.1)));
            prop_assert_eq!((d, f.id.as_str()), all[0]);
            prop_assert!(all.iter().all(|(x, _)| d <= *x));

            let mut more = list.clone();
            more.push(fac("X", extra.lat_deg(), extra.lon_deg()));
            prop_assert!(nearest_facility(&call, &more, &s).unwrap().1 <= d);
        }

        #[test]
        fn summarize_is_permutation_invariant(mut v in prop::collection::vec(-1e3f64..1e3, 1..50), seed in any::<u64>()) {
            let a = summarize(&v).unwrap();
            // deterministic shuffle
            let mut x = seed | 1;
            for i in (1..v.len()).rev() {
                x ^= x << 13; x ^= x >> 7; x ^= x << 17;
                v.swap(i, (x % (i as u64 + 1)) as usize);
            }
            let b = summarize(&v).unwrap();
            prop_assert_eq!(a.n, b.n);
            prop_assert_eq!(a.min, b.min);
            prop_assert_eq!(a.max, b.max);
            prop_assert!((a.mean - b.mean).abs() <= 1e-9 * (1.0 + a.mean.abs()));
            prop_assert!((a.std_error - b.std_error).abs() <= 1e-9 * (1.0 + a.std_error));
            prop_assert!(a.min <= a.mean && a.mean <= a.max);
        }

        #[test]
        fn binarized_counts_match_brute_force(vals in prop::collection::vec((0usize..4, 0.0f64..1.0), 0..200), cut in 0.01f64..1.0) {
            let brackets = [IncomeBracket::B2, IncomeBracket::B3, IncomeBracket::B4, IncomeBracket::B5];
            let recs: Vec<ResponseRecord> = vals.iter().map(|(b, v)| record(Some(0), *v, 0.0, Some(brackets[*b]))).collect();
            let t = Thresholds::new(300.0, cut, 1.0).unwrap();
            let out = binarize(&recs, &t, Metric::StationDistance).unwrap();
            for b in brackets {
                let got = out.iter().filter(|(bb, y)| *bb == b && *y).count();
                let want = vals.iter().filter(|(i, v)| brackets[*i] == b && *v <= cut).count();
                prop_assert_eq!(got, want);
            }
        }
    }
}
