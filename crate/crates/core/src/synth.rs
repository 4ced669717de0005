//! Deterministic synthetic datasets in the same file formats the readers
//! accept.
//!
//! Success or failure of every metric is placed, not sampled: for a bracket
//! with `n` incidents and target proportion `p`, exactly `round(n·p)` incidents
//! are put inside the threshold and the rest outside it, with a margin of 10%
//! of the threshold on either side. Which incidents succeed, where they sit and
//! when they happen come from the generator below, so one seed always yields
//! the same bytes.
//!
//! # Generator
//!
//! xorshift64* (Vigna, 2016) with 64-bit state:
//!
//! ```text
//! state ^= state >> 12; state ^= state << 25; state ^= state >> 27;
//! output = state * 0x2545F4914F6CDD1D   (wrapping)
//! ```
//!
//! The state is seeded with the configured seed, or `0x9E3779B97F4A7C15` when
//! the seed is zero. Uniform floats take the top 53 bits of an output times
//! 2⁻⁵³. Uniform integers below `m` take the high 64 bits of the 128-bit
//! product `output · m`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesy::{GeoPoint, Sphere};
use crate::ingest::{Category, Facility, FacilityKind, IncomeBracket};
use crate::metrics::Thresholds;

const SEED_FOR_ZERO: u64 = 0x9E37_79B9_7F4A_7C15;
const MAX_TRIES: usize = 20_000;
/// Successes land within 90% of a threshold; failures beyond 110%.
const INNER: f64 = 0.9;
const OUTER: f64 = 1.1;

/// xorshift64* generator.
#[derive(Debug, Clone)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        Self { state: if seed == 0 { SEED_FOR_ZERO } else { seed } }
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [0, m); `m` must be positive.
    pub fn below(&mut self, m: u64) -> u64 {
        ((u128::from(self.next_u64()) * u128::from(m)) >> 64) as u64
    }

    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        lo + self.below(hi - lo + 1)
    }

    pub fn shuffle<T>(&mut self, v: &mut [T]) {
        for i in (1..v.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            v.swap(i, j);
        }
    }
}

/// Incident count and success proportions for one bracket and year.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketSpec {
    pub bracket: IncomeBracket,
    pub year: i32,
    pub n_incidents: usize,
    pub p_response: f64,
    pub p_station: f64,
    pub p_er: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZipSpec {
    pub zip: String,
    pub centroid: GeoPoint,
    /// `None` writes no income rows for the ZIP.
    pub bracket: Option<IncomeBracket>,
    pub population: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub per_bracket: Vec<BracketSpec>,
    pub facilities: Vec<Facility>,
    pub zips: Vec<ZipSpec>,
    pub thresholds: Thresholds,
    /// Extra calls per bracket spec that the standard filter removes:
    /// alternating false alarms and investigate-only fire calls.
    pub filtered_per_bracket: usize,
    pub sphere: Sphere,
}

/// ZIP, bracket and population per ZIP of the built-in layout.
const LAYOUT_ZIPS: [(&str, u8, u64); 39] = [
    ("94014", 2, 43810),
    ("94112", 2, 77090),
    ("94124", 2, 35550),
    ("94130", 2, 1690),
    ("94134", 2, 40590),
    ("94601", 2, 46310),
    ("94102", 3, 23120),
    ("94103", 3, 24670),
    ("94108", 3, 10240),
    ("94110", 3, 60330),
    ("94116", 3, 40680),
    ("94121", 3, 37230),
    ("94122", 3, 50980),
    ("94132", 3, 21800),
    ("94133", 3, 21190),
    ("94501", 3, 57830),
    ("94901", 3, 37280),
    ("94005", 4, 4640),
    ("94109", 4, 44290),
    ("94115", 4, 28090),
    ("94117", 4, 31340),
    ("94118", 4, 32970),
    ("94129", 4, 3080),
    ("94611", 4, 36730),
    ("94104", 5, 1860),
    ("94105", 5, 10830),
    ("94107", 5, 26410),
    ("94111", 5, 4210),
    ("94114", 5, 29310),
    ("94123", 5, 20650),
    ("94127", 5, 19430),
    ("94131", 5, 25720),
    ("94158", 5, 4800),
    ("94128", 0, 0),
    ("94143", 0, 0),
    ("94119", 0, 0),
    ("94120", 0, 0),
    ("94125", 0, 0),
    ("94126", 0, 0),
];

fn offset(origin: &GeoPoint, north_miles: f64, east_miles: f64, sphere: &Sphere) -> Result<GeoPoint> {
    let r = sphere.radius_miles();
    let lat = origin.lat_deg() + (north_miles / r).to_degrees();
    let lon = origin.lon_deg() + (east_miles / (r * lat.to_radians().cos())).to_degrees();
    GeoPoint::new(lat, lon)
}

impl SynthConfig {
    /// A compact grid city: 48 stations 0.9 mi apart in 6 rows of 8, with the
    /// 14 emergency rooms beside the stations of the two northern rows. The
    /// southern rows are far from any emergency room, so every combination
    /// of station and ER outcomes is reachable with the default thresholds.
    pub fn grid_city(seed: u64, per_bracket: Vec<BracketSpec>) -> Result<Self> {
        let sphere = Sphere::default();
        let origin = GeoPoint::new(37.80, -122.50)?;
        let spacing = 0.9;
        let mut facilities = Vec::new();
        for row in 0..6 {
            for col in 0..8 {
                let loc = offset(&origin, -(row as f64) * spacing, col as f64 * spacing, &sphere)?;
                facilities.push(Facility {
                    id: format!("S{:02}", row * 8 + col + 1),
                    kind: FacilityKind::FireStation,
                    location: loc,
                    name: format!("Station {}", row * 8 + col + 1),
                });
            }
        }
        for i in 0..14 {
            let (row, col) = (i / 7, i % 7);
            let loc = offset(&origin, -(row as f64) * spacing - 0.07, col as f64 * spacing + 0.07, &sphere)?;
            facilities.push(Facility {
                id: format!("ER{:02}", i + 1),
                kind: FacilityKind::EmergencyRoom,
                location: loc,
                name: format!("Hospital {}", i + 1),
            });
        }
        let zips = LAYOUT_ZIPS
            .iter()
            .enumerate()
            .map(|(i, &(zip, b, pop))| {
                let (row, col) = (i / 7, i % 7);
                Ok(ZipSpec {
                    zip: zip.to_string(),
                    centroid: offset(
                        &origin,
                        -(row as f64 + 0.5) * spacing * 5.0 / 5.5,
                        (col as f64 + 0.5) * spacing,
                        &sphere,
                    )?,
                    bracket: IncomeBracket::from_index(b),
                    population: pop,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            seed,
            per_bracket,
            facilities,
            zips,
            thresholds: Thresholds::default(),
            filtered_per_bracket: 0,
            sphere,
        })
    }

    fn validate(&self) -> Result<()> {
        for spec in &self.per_bracket {
            for (name, p) in [("p_response", spec.p_response), ("p_station", spec.p_station), ("p_er", spec.p_er)] {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Config(format!("{} {name} = {p} is not a proportion", spec.bracket)));
                }
            }
            if (spec.n_incidents > 0 || self.filtered_per_bracket > 0)
                && !self.zips.iter().any(|z| z.bracket == Some(spec.bracket))
            {
                return Err(Error::Config(format!("layout has no ZIP in bracket {}", spec.bracket)));
            }
        }
        for kind in [FacilityKind::FireStation, FacilityKind::EmergencyRoom] {
            if !self.facilities.iter().any(|f| f.kind == kind) {
                return Err(Error::Config(format!("layout has no {kind} facilities")));
            }
        }
        Ok(())
    }
}

/// Generated files, as text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthDataset {
    pub incidents_csv: String,
    pub stations_csv: String,
    pub ers_csv: String,
    pub income_csv: String,
    pub population_csv: String,
    pub summary: SynthSummary,
}

/// Exact counts the dataset was built to contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SynthSummary {
    pub seed: u64,
    pub incident_rows: usize,
    pub filtered_rows: usize,
    pub groups: Vec<GroupSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupSummary {
    pub bracket: IncomeBracket,
    pub year: i32,
    pub n: usize,
    pub response_successes: usize,
    pub station_successes: usize,
    pub er_successes: usize,
}

pub const INCIDENT_HEADER: &str = "id,alarm_dttm,arrival_dttm,zip,lat,lon,category,actions,property_loss";

struct Placer<'a> {
    sphere: Sphere,
    stations: Vec<&'a Facility>,
    ers: Vec<&'a Facility>,
    station_cut: f64,
    er_cut: f64,
    /// Stations whose whole success disc lies within / beyond the ER cut.
    near_er_stations: Vec<&'a Facility>,
    far_er_stations: Vec<&'a Facility>,
}

fn nearest(sphere: &Sphere, p: &GeoPoint, list: &[&Facility]) -> f64 {
    list.iter().map(|f| sphere.miles_between(p, &f.location)).fold(f64::INFINITY, f64::min)
}

fn format_coord(v: f64) -> String {
    format!("{v:.7}")
}

impl<'a> Placer<'a> {
    fn new(cfg: &'a SynthConfig) -> Self {
        let sphere = cfg.sphere;
        let stations: Vec<&Facility> = cfg.facilities.iter().filter(|f| f.kind == FacilityKind::FireStation).collect();
        let ers: Vec<&Facility> = cfg.facilities.iter().filter(|f| f.kind == FacilityKind::EmergencyRoom).collect();
        let (station_cut, er_cut) = (cfg.thresholds.station_miles, cfg.thresholds.er_miles);
        let reach = INNER * station_cut;
        let near_er_stations = stations
            .iter()
            .copied()
            .filter(|s| nearest(&sphere, &s.location, &ers) + reach <= INNER * er_cut)
            .collect();
        let far_er_stations = stations
            .iter()
            .copied()
            .filter(|s| nearest(&sphere, &s.location, &ers) - reach >= OUTER * er_cut)
            .collect();
        Self { sphere, stations, ers, station_cut, er_cut, near_er_stations, far_er_stations }
    }

    fn around(&self, rng: &mut XorShift64Star, centre: &GeoPoint, radius: f64) -> Option<GeoPoint> {
        let r = radius * rng.next_f64().sqrt();
        let theta = rng.next_f64() * std::f64::consts::TAU;
        let p = offset(centre, r * theta.cos(), r * theta.sin(), &self.sphere).ok()?;
        // Round-trip through the written text so checks see what readers see.
        let lat: f64 = format_coord(p.lat_deg()).parse().ok()?;
        let lon: f64 = format_coord(p.lon_deg()).parse().ok()?;
        GeoPoint::new(lat, lon).ok()
    }

    fn satisfies(&self, p: &GeoPoint, station_ok: bool, er_ok: bool) -> bool {
        let ds = nearest(&self.sphere, p, &self.stations);
        let de = nearest(&self.sphere, p, &self.ers);
        let s = if station_ok { ds <= INNER * self.station_cut } else { ds >= OUTER * self.station_cut };
        let e = if er_ok { de <= INNER * self.er_cut } else { de >= OUTER * self.er_cut };
        s && e
    }

    fn place(&self, rng: &mut XorShift64Star, centroid: &GeoPoint, station_ok: bool, er_ok: bool) -> Result<GeoPoint> {
        let pick = |rng: &mut XorShift64Star, preferred: &[&'a Facility], all: &[&'a Facility]| -> GeoPoint {
            let pool = if preferred.is_empty() { all } else { preferred };
            pool[rng.below(pool.len() as u64) as usize].location
        };
        for attempt in 0..MAX_TRIES {
            let (centre, radius) = match (station_ok, er_ok) {
                (true, true) => (pick(rng, &self.near_er_stations, &self.stations), INNER * self.station_cut),
                (true, false) => (pick(rng, &self.far_er_stations, &self.stations), INNER * self.station_cut),
                (false, true) => (pick(rng, &[], &self.ers), INNER * self.er_cut),
                (false, false) => {
                    let spread = if attempt < MAX_TRIES / 2 { 3.0 } else { 10.0 };
                    (*centroid, spread)
                }
            };
            if let Some(p) = self.around(rng, &centre, radius) {
                if self.satisfies(&p, station_ok, er_ok) {
                    return Ok(p);
                }
            }
        }
        Err(Error::Config(format!(
            "layout cannot place a call with station {} and emergency room {} the thresholds",
            if station_ok { "within" } else { "beyond" },
            if er_ok { "within" } else { "beyond" },
        )))
    }
}

fn successes(n: usize, p: f64) -> usize {
    ((n as f64 * p).round() as usize).min(n)
}

/// `n` flags with exactly `k` set, in shuffled order.
fn flags(rng: &mut XorShift64Star, n: usize, k: usize) -> Vec<bool> {
    let mut v: Vec<bool> = (0..n).map(|i| i < k).collect();
    rng.shuffle(&mut v);
    v
}

fn facility_csv(list: &[&Facility]) -> String {
    let mut s = String::from("id,name,lat,lon\n");
    for f in list {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            f.id,
            f.name,
            format_coord(f.location.lat_deg()),
            format_coord(f.location.lon_deg())
        );
    }
    s
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset> {
    cfg.validate()?;
    let mut rng = XorShift64Star::new(cfg.seed);
    let placer = Placer::new(cfg);
    let response_cut = cfg.thresholds.response_seconds.floor() as u64;
    if response_cut < 1 {
        return Err(Error::Config("response threshold must be at least one second".into()));
    }

    let mut zips_by_bracket: BTreeMap<IncomeBracket, Vec<&ZipSpec>> = BTreeMap::new();
    for z in &cfg.zips {
        if let Some(b) = z.bracket {
            zips_by_bracket.entry(b).or_default().push(z);
        }
    }

    let mut incidents = String::from(INCIDENT_HEADER);
    incidents.push('\n');
    let mut seq = 0usize;
    let mut filtered_rows = 0usize;
    let mut groups = Vec::new();

    for spec in &cfg.per_bracket {
        let zips = zips_by_bracket.get(&spec.bracket).map(Vec::as_slice).unwrap_or(&[]);
        let n = spec.n_incidents;
        let (kr, ks, ke) = (successes(n, spec.p_response), successes(n, spec.p_station), successes(n, spec.p_er));
        let resp_ok = flags(&mut rng, n, kr);
        let station_ok = flags(&mut rng, n, ks);
        let er_ok = flags(&mut rng, n, ke);
        let year_start = NaiveDate::from_ymd_opt(spec.year, 1, 1)
            .ok_or_else(|| Error::Config(format!("year {} out of range", spec.year)))?
            .and_hms_opt(0, 0, 0)
            .unwrap();

        let total = n + cfg.filtered_per_bracket;
        for i in 0..total {
            seq += 1;
            let zip = zips[i % zips.len()];
            let alarm = year_start + Duration::seconds(rng.below(364 * 86_400) as i64);
            let loss = if rng.below(10) == 0 { rng.below(100_000) } else { 0 };
            if i < n {
                let secs = if resp_ok[i] {
                    rng.range_inclusive(response_cut / 5, response_cut)
                } else {
                    rng.range_inclusive(response_cut + 1, 3 * response_cut + 1)
                };
                let arrival = alarm + Duration::seconds(secs as i64);
                let p = placer.place(&mut rng, &zip.centroid, station_ok[i], er_ok[i])?;
                let _ = writeln!(
                    incidents,
                    "I{seq:07},{},{},{},{},{},{},32 - Provide basic life support,{loss}",
                    alarm.format("%Y-%m-%dT%H:%M:%S"),
                    arrival.format("%Y-%m-%dT%H:%M:%S"),
                    zip.zip,
                    format_coord(p.lat_deg()),
                    format_coord(p.lon_deg()),
                    Category::RescueEms.name(),
                );
            } else {
                filtered_rows += 1;
                let (category, action) = if (i - n) % 2 == 0 {
                    (Category::FalseAlarms, "71 - Assistance not needed")
                } else {
                    (Category::Fire, "86 - Investigate")
                };
                let arrival = alarm + Duration::seconds(rng.range_inclusive(30, 900) as i64);
                let _ = writeln!(
                    incidents,
                    "I{seq:07},{},{},{},{},{},{},{action},0",
                    alarm.format("%Y-%m-%dT%H:%M:%S"),
                    arrival.format("%Y-%m-%dT%H:%M:%S"),
                    zip.zip,
                    format_coord(zip.centroid.lat_deg()),
                    format_coord(zip.centroid.lon_deg()),
                    category.name(),
                );
            }
        }
        groups.push(GroupSummary {
            bracket: spec.bracket,
            year: spec.year,
            n,
            response_successes: kr,
            station_successes: ks,
            er_successes: ke,
        });
    }

    let mut income = String::from("zip,bracket_index,filer_count\n");
    let mut population = String::from("zip,population\n");
    for z in &cfg.zips {
        if let Some(b) = z.bracket {
            // A dominant median bracket with a thin spread on either side.
            let lo = rng.range_inclusive(0, 200);
            let hi = rng.range_inclusive(0, 200);
            let mid = lo + hi + 1000;
            let _ = writeln!(income, "{},{},{}", z.zip, 1, lo);
            let _ = writeln!(income, "{},{},{}", z.zip, b.index(), mid);
            let _ = writeln!(income, "{},{},{}", z.zip, 6, hi);
        }
        let _ = writeln!(population, "{},{}", z.zip, z.population);
    }

    let stations: Vec<&Facility> = cfg.facilities.iter().filter(|f| f.kind == FacilityKind::FireStation).collect();
    let ers: Vec<&Facility> = cfg.facilities.iter().filter(|f| f.kind == FacilityKind::EmergencyRoom).collect();
    Ok(SynthDataset {
        incidents_csv: incidents,
        stations_csv: facility_csv(&stations),
        ers_csv: facility_csv(&ers),
        income_csv: income,
        population_csv: population,
        summary: SynthSummary { seed: cfg.seed, incident_rows: seq, filtered_rows, groups },
    })
}

impl SynthDataset {
    pub const FILES: [&'static str; 5] = ["incidents.csv", "stations.csv", "ers.csv", "income.csv", "population.csv"];

    /// `(file name, contents)` pairs in a fixed order.
    pub fn files(&self) -> [(&'static str, &str); 5] {
        [
            (Self::FILES[0], self.incidents_csv.as_str()),
            (Self::FILES[1], self.stations_csv.as_str()),
            (Self::FILES[2], self.ers_csv.as_str()),
            (Self::FILES[3], self.income_csv.as_str()),
            (Self::FILES[4], self.population_csv.as_str()),
        ]
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in self.files() {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
