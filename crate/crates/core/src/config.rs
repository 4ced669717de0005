//! Flat `section.key = value` configuration files.
//!
//! One setting per line; `#` starts a comment; blank lines are ignored.
//! Keys are case-sensitive and may appear once. Relative paths resolve
//! against the directory holding the file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::geodesy::Sphere;
use crate::gof::Grouping;
use crate::ingest::{Category, FilterRules, IncidentColumns, IncomeBracket, LocationColumns, MedianTie};
use crate::logit::FitSettings;
use crate::metrics::{Metric, ThresholdOverrides, Thresholds};
use crate::report::{default_bin_width, ExportFormat};
use crate::synth::{BracketSpec, SynthConfig};

/// Parsed key-value pairs with the line each came from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    base_dir: PathBuf,
}

impl KeyValues {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected 'key = value', got '{line}'")))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {line_no}: invalid key '{k}'")));
            }
            if let Some((prev, _)) = entries.insert(k.to_string(), (line_no, v.trim().to_string())) {
                return Err(Error::Config(format!("line {line_no}: key '{k}' already set on line {prev}")));
            }
        }
        Ok(Self { entries, base_dir: base_dir.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Entries as `key = value` lines, sorted by key.
    pub fn echo(&self) -> BTreeMap<String, String> {
        self.entries.iter().map(|(k, (_, v))| (k.clone(), v.clone())).collect()
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), (0, value.to_string()));
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| Error::invalid(key, format!("'{v}': {e}")))).transpose()
    }

    fn path(&self, key: &str) -> Result<PathBuf> {
        let v = self.get(key).ok_or_else(|| Error::Config(format!("missing required key '{key}'")))?;
        let p = PathBuf::from(v);
        Ok(if p.is_absolute() { p } else { self.base_dir.join(p) })
    }

    fn reject_unknown(&self, known: &[KeyDoc], patterns: &[&str]) -> Result<()> {
        for k in self.keys() {
            let ok = known.iter().any(|d| d.key == k) || patterns.iter().any(|p| matches_pattern(p, k));
            if !ok {
                return Err(Error::Config(format!("unknown key '{k}' on line {}", self.entries[k].0)));
            }
        }
        Ok(())
    }
}

fn matches_pattern(pattern: &str, key: &str) -> bool {
    match pattern.split_once('*') {
        Some((pre, post)) => key.len() > pre.len() + post.len() && key.starts_with(pre) && key.ends_with(post),
        None => pattern == key,
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

/// A documented key.
#[derive(Debug, Clone, Copy)]
pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn doc(key: &'static str, default: &'static str, help: &'static str) -> KeyDoc {
    KeyDoc { key, default, help }
}

pub const ANALYZE_KEYS: &[KeyDoc] = &[
    doc("input.incidents", "(required)", "Incident file, plain or gzip."),
    doc("input.stations", "(required)", "Fire stations: id,name,lat,lon."),
    doc("input.ers", "(required)", "Emergency rooms: id,name,lat,lon."),
    doc("input.income", "(required)", "Filer counts: zip,bracket_index,filer_count."),
    doc("input.population", "(required)", "Population: zip,population."),
    doc("incidents.col.id", "id", "Incident id column."),
    doc("incidents.col.alarm", "alarm_dttm", "Alarm timestamp column."),
    doc("incidents.col.arrival", "arrival_dttm", "Arrival timestamp column; empty cells mean no arrival."),
    doc("incidents.col.zip", "zip", "ZIP code column."),
    doc("incidents.col.lat", "lat", "Latitude column."),
    doc("incidents.col.lon", "lon", "Longitude column."),
    doc("incidents.col.point", "(unset)", "Single `POINT (lon lat)` column; replaces lat/lon when set."),
    doc("incidents.col.category", "category", "Call category column."),
    doc("incidents.col.actions", "actions", "Actions column, or `none`."),
    doc("incidents.col.property_loss", "property_loss", "Property loss column, or `none`."),
    doc("incidents.delimiter", ",", "Field delimiter: one character, or `tab`."),
    doc("incidents.timestamp_format", "%Y-%m-%dT%H:%M:%S%.f", "chrono format string for timestamps."),
    doc("incidents.action_separator", ";", "Separator between actions in one cell."),
    doc("filter.exclude_categories", "False Alarms", "Comma list of categories to drop."),
    doc(
        "filter.exclude_actions",
        "investigate, inform, standby, canceled enroute, 83, 86, 92, 93",
        "Comma list; a call is dropped when all its actions are listed.",
    ),
    doc("filter.year", "(unset)", "Keep only calls whose alarm falls in this year."),
    doc("thresholds.response_time", "derive", "Seconds, or `derive` (mean rounded to the minute)."),
    doc("thresholds.station_distance", "derive", "Miles, or `derive` (mean rounded to 0.1 mi)."),
    doc("thresholds.er_distance", "derive", "Miles, or `derive` (mean rounded to 0.1 mi)."),
    doc("logit.reference", "lowest", "Reference bracket (B1..B6) or `lowest` present."),
    doc("logit.reference.response_time", "(logit.reference)", "Reference bracket for the response-time model."),
    doc("logit.reference.station_distance", "(logit.reference)", "Reference bracket for the station-distance model."),
    doc("logit.reference.er_distance", "(logit.reference)", "Reference bracket for the ER-distance model."),
    doc("logit.tolerance", "1e-10", "Largest coefficient change accepted as converged."),
    doc("logit.max_iterations", "50", "Newton iteration cap."),
    doc("gof.grouping", "covariate_pattern", "`covariate_pattern`, `deciles` or `deciles:<g>`."),
    doc("analysis.metrics", "response_time, station_distance, er_distance", "Comma list of metrics to model."),
    doc("report.format", "csv, json, markdown", "Comma list of table formats."),
    doc("report.bins.response_time", "30", "Histogram bin width, seconds."),
    doc("report.bins.station_distance", "0.1", "Histogram bin width, miles."),
    doc("report.bins.er_distance", "0.1", "Histogram bin width, miles."),
    doc("geodesy.earth_radius_miles", "3959", "Sphere radius for distances."),
    doc("income.tie", "lower", "Median bracket tie rule: `lower` or `upper`."),
    doc("output.dir", "(required unless --out)", "Output directory."),
];

pub const SYNTH_KEYS: &[KeyDoc] = &[
    doc("synth.seed", "0", "Generator seed."),
    doc("synth.year", "2018", "Year for bracket entries without `@year`."),
    doc("synth.bracket.<B>[@<year>]", "(at least one)", "`n p_response p_station p_er` for bracket B in that year."),
    doc("synth.filtered_per_bracket", "0", "Extra calls per bracket entry that the standard filter removes."),
    doc("synth.threshold.response_time", "300", "Seconds used for placement."),
    doc("synth.threshold.station_distance", "0.4", "Miles used for placement."),
    doc("synth.threshold.er_distance", "1.0", "Miles used for placement."),
];

/// Markdown reference of every key.
pub fn reference_markdown() -> String {
    let mut s = String::from("# Configuration keys\n\nFiles hold one `key = value` per line. `#` starts a comment. Relative paths resolve against the configuration file's directory.\n");
    for (title, keys) in [("analyze / validate", ANALYZE_KEYS), ("synth", SYNTH_KEYS)] {
        let _ = write!(s, "\n## {title}\n\n| key | default | meaning |\n|---|---|---|\n");
        for k in keys {
            let _ = writeln!(s, "| `{}` | {} | {} |", k.key, k.default, k.help);
        }
    }
    s
}

/// Plain-text key list for `--help`.
pub fn reference_text() -> String {
    let mut s = String::new();
    for (title, keys) in [("Analyze/validate keys", ANALYZE_KEYS), ("Synth keys", SYNTH_KEYS)] {
        let _ = writeln!(s, "{title}:");
        for k in keys {
            let _ = writeln!(s, "  {:<34} {} [default: {}]", k.key, k.help, k.default);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputPaths {
    pub incidents: PathBuf,
    pub stations: PathBuf,
    pub ers: PathBuf,
    pub income: PathBuf,
    pub population: PathBuf,
}

impl InputPaths {
    pub fn all(&self) -> [(&'static str, &Path); 5] {
        [
            ("input.incidents", &self.incidents),
            ("input.stations", &self.stations),
            ("input.ers", &self.ers),
            ("input.income", &self.income),
            ("input.population", &self.population),
        ]
    }
}

/// How a model's reference bracket is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Lowest,
    Fixed(IncomeBracket),
}

impl std::str::FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().eq_ignore_ascii_case("lowest") {
            Ok(Reference::Lowest)
        } else {
            s.parse().map(Reference::Fixed)
        }
    }
}

/// Everything `analyze` and `validate` need.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: InputPaths,
    pub columns: IncidentColumns,
    pub filter: FilterRules,
    pub threshold_overrides: ThresholdOverrides,
    pub references: BTreeMap<Metric, Reference>,
    pub fit: FitSettings,
    pub grouping: Grouping,
    pub metrics: Vec<Metric>,
    pub formats: Vec<ExportFormat>,
    pub bins: BTreeMap<Metric, f64>,
    pub sphere: Sphere,
    pub tie: MedianTie,
    pub out_dir: Option<PathBuf>,
    /// Key-value echo for the manifest.
    pub echo: BTreeMap<String, String>,
}

fn threshold_value(kv: &KeyValues, key: &str) -> Result<Option<f64>> {
    match kv.get(key) {
        None => Ok(None),
        Some(v) if v.eq_ignore_ascii_case("derive") => Ok(None),
        Some(v) => {
            let x: f64 = v.parse().map_err(|_| Error::invalid(key, format!("'{v}' is not a number or 'derive'")))?;
            if !(x.is_finite() && x > 0.0) {
                return Err(Error::invalid(key, format!("{v} must be strictly positive")));
            }
            Ok(Some(x))
        }
    }
}

fn optional_column(kv: &KeyValues, key: &str, default: Option<String>) -> Option<String> {
    match kv.get(key) {
        Some(v) if v.eq_ignore_ascii_case("none") || v.is_empty() => None,
        Some(v) => Some(v.to_string()),
        None => default,
    }
}

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        kv.reject_unknown(ANALYZE_KEYS, &[])?;
        let inputs = InputPaths {
            incidents: kv.path("input.incidents")?,
            stations: kv.path("input.stations")?,
            ers: kv.path("input.ers")?,
            income: kv.path("input.income")?,
            population: kv.path("input.population")?,
        };

        let d = IncidentColumns::default();
        let col = |field: &str, default: &str| kv.get(&format!("incidents.col.{field}")).unwrap_or(default).to_string();
        let location = match kv.get("incidents.col.point") {
            Some(p) => LocationColumns::Point(p.to_string()),
            None => LocationColumns::LatLon { lat: col("lat", "lat"), lon: col("lon", "lon") },
        };
        let delimiter = match kv.get("incidents.delimiter") {
            None => d.delimiter,
            Some(v) if v.eq_ignore_ascii_case("tab") => b'\t',
            Some(v) if v.len() == 1 && v.is_ascii() => v.as_bytes()[0],
            Some(v) => return Err(Error::invalid("incidents.delimiter", format!("'{v}' is not one ASCII character"))),
        };
        let action_separator = match kv.get("incidents.action_separator") {
            None => d.action_separator,
            Some(v) if v.chars().count() == 1 => v.chars().next().unwrap(),
            Some(v) => return Err(Error::invalid("incidents.action_separator", format!("'{v}' is not one character"))),
        };
        let columns = IncidentColumns {
            id: col("id", &d.id),
            alarm: col("alarm", &d.alarm),
            arrival: col("arrival", &d.arrival),
            zip: col("zip", &d.zip),
            location,
            category: col("category", &d.category),
            actions: optional_column(kv, "incidents.col.actions", d.actions.clone()),
            property_loss: optional_column(kv, "incidents.col.property_loss", d.property_loss.clone()),
            delimiter,
            timestamp_format: kv.get("incidents.timestamp_format").unwrap_or(&d.timestamp_format).to_string(),
            action_separator,
        };

        let standard = FilterRules::standard();
        let year: Option<i32> = kv.parsed("filter.year")?;
        let actions: Vec<String> = match kv.get("filter.exclude_actions") {
            Some(v) => list(v),
            None => standard.exclude_actions.iter().cloned().collect(),
        };
        let categories: Vec<String> = match kv.get("filter.exclude_categories") {
            Some(v) => list(v),
            None => standard.exclude_categories.iter().map(|c| c.name().to_string()).collect(),
        };
        let filter = FilterRules::from_names(&actions, &categories, None, year)
            .map_err(|e| Error::invalid("filter.exclude_categories", e.to_string()))?;

        let mut threshold_overrides = ThresholdOverrides::default();
        for m in Metric::ALL {
            if let Some(v) = threshold_value(kv, &format!("thresholds.{}", m.name()))? {
                threshold_overrides.set(m, v);
            }
        }

        let default_ref: Reference = kv.parsed("logit.reference")?.unwrap_or(Reference::Lowest);
        let mut references = BTreeMap::new();
        for m in Metric::ALL {
            let r = kv.parsed(&format!("logit.reference.{}", m.name()))?.unwrap_or(default_ref);
            references.insert(m, r);
        }
        let mut fit = FitSettings::default();
        if let Some(t) = kv.parsed::<f64>("logit.tolerance")? {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid("logit.tolerance", "must be strictly positive"));
            }
            fit.tolerance = t;
        }
        if let Some(n) = kv.parsed::<usize>("logit.max_iterations")? {
            fit.max_iterations = n;
        }

        let metrics = match kv.get("analysis.metrics") {
            Some(v) => list(v).iter().map(|m| m.parse()).collect::<Result<Vec<Metric>>>()?,
            None => Metric::ALL.to_vec(),
        };
        if metrics.is_empty() {
            return Err(Error::invalid("analysis.metrics", "no metrics selected"));
        }
        let formats = match kv.get("report.format") {
            Some(v) => list(v).iter().map(|f| f.parse()).collect::<Result<Vec<ExportFormat>>>()?,
            None => ExportFormat::ALL.to_vec(),
        };
        let mut bins = BTreeMap::new();
        for m in Metric::ALL {
            let key = format!("report.bins.{}", m.name());
            let w = kv.parsed::<f64>(&key)?.unwrap_or_else(|| default_bin_width(m));
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::Config(format!("{key}: bin width {w} must be positive")));
            }
            bins.insert(m, w);
        }
        let sphere = match kv.parsed::<f64>("geodesy.earth_radius_miles")? {
            Some(r) => Sphere::with_radius(r)?,
            None => Sphere::default(),
        };
        Ok(Self {
            inputs,
            columns,
            filter,
            threshold_overrides,
            references,
            fit,
            grouping: kv.parsed("gof.grouping")?.unwrap_or_default(),
            metrics,
            formats,
            bins,
            sphere,
            tie: kv.parsed("income.tie")?.unwrap_or_default(),
            out_dir: kv.get("output.dir").map(|_| kv.path("output.dir")).transpose()?,
            echo: kv.echo(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    /// Thresholds 300 s, 0.4 mi, 1.0 mi and the published reference brackets.
    pub fn apply_reproduction_preset(&mut self) {
        self.threshold_overrides =
            ThresholdOverrides { response_seconds: Some(300.0), station_miles: Some(0.4), er_miles: Some(1.0) };
        self.references = [
            (Metric::ResponseTime, Reference::Fixed(IncomeBracket::B5)),
            (Metric::StationDistance, Reference::Fixed(IncomeBracket::B2)),
            (Metric::ErDistance, Reference::Fixed(IncomeBracket::B3)),
        ]
        .into_iter()
        .collect();
    }

    /// Rules for the EMS-only ER-distance model.
    pub fn ems_filter(&self) -> FilterRules {
        self.filter.clone().ems_only()
    }
}

fn bracket_spec(key: &str, value: &str, default_year: i32) -> Result<BracketSpec> {
    let target = &key["synth.bracket.".len()..];
    let (b, year) = match target.split_once('@') {
        Some((b, y)) => (b, y.parse::<i32>().map_err(|_| Error::invalid(key, format!("bad year '{y}'")))?),
        None => (target, default_year),
    };
    let bracket: IncomeBracket = b.parse().map_err(|e: Error| Error::invalid(key, e.to_string()))?;
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != 4 {
        return Err(Error::invalid(key, "expected 'n p_response p_station p_er'"));
    }
    let n: usize = parts[0].parse().map_err(|_| Error::invalid(key, format!("bad count '{}'", parts[0])))?;
    let p = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .ok()
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| Error::invalid(key, format!("'{s}' is not a proportion")))
    };
    Ok(BracketSpec {
        bracket,
        year,
        n_incidents: n,
        p_response: p(parts[1])?,
        p_station: p(parts[2])?,
        p_er: p(parts[3])?,
    })
}

/// Builds a generator configuration on the built-in grid layout.
pub fn synth_config(kv: &KeyValues) -> Result<SynthConfig> {
    kv.reject_unknown(SYNTH_KEYS, &["synth.bracket.*"])?;
    let default_year: i32 = kv.parsed("synth.year")?.unwrap_or(2018);
    let mut specs = Vec::new();
    for k in kv.keys().filter(|k| k.starts_with("synth.bracket.")) {
        specs.push(bracket_spec(k, kv.get(k).unwrap_or_default(), default_year)?);
    }
    if specs.is_empty() {
        return Err(Error::Config("no synth.bracket.<B> entries".into()));
    }
    specs.sort_by_key(|s| (s.year, s.bracket));
    let mut cfg = SynthConfig::grid_city(kv.parsed("synth.seed")?.unwrap_or(0), specs)?;
    cfg.filtered_per_bracket = kv.parsed("synth.filtered_per_bracket")?.unwrap_or(0);
    let t = Thresholds::default();
    cfg.thresholds = Thresholds::new(
        kv.parsed("synth.threshold.response_time")?.unwrap_or(t.response_seconds),
        kv.parsed("synth.threshold.station_distance")?.unwrap_or(t.station_miles),
        kv.parsed("synth.threshold.er_distance")?.unwrap_or(t.er_miles),
    )?;
    Ok(cfg)
}

/// An `analyze` configuration pointing at the files `synth` writes, with the
/// generator's thresholds pinned.
pub fn analyze_config_for_synth(cfg: &SynthConfig) -> String {
    let t = cfg.thresholds;
    format!(
        "# Written by synth. Paths are relative to this file.\n\
         input.incidents = incidents.csv\n\
         input.stations = stations.csv\n\
         input.ers = ers.csv\n\
         input.income = income.csv\n\
         input.population = population.csv\n\
         thresholds.response_time = {}\n\
         thresholds.station_distance = {}\n\
         thresholds.er_distance = {}\n",
        t.response_seconds, t.station_miles, t.er_miles
    )
}

/// Category names accepted in `filter.exclude_categories`.
pub fn category_names() -> Vec<&'static str> {
    Category::ALL.iter().map(|c| c.name()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "input.incidents = data/inc.csv.gz\ninput.stations = /abs/st.csv\ninput.ers = e.csv\ninput.income = i.csv\ninput.population = p.csv\n";

    #[test]
    fn parses_comments_and_resolves_paths() {
        let kv =
            KeyValues::parse(&format!("# header\n\n{MINIMAL}logit.reference = B3  # trailing\n"), Path::new("/cfg"))
                .unwrap();
        let rc = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(rc.inputs.incidents, PathBuf::from("/cfg/data/inc.csv.gz"));
        assert_eq!(rc.inputs.stations, PathBuf::from("/abs/st.csv"));
        assert_eq!(rc.references[&Metric::ErDistance], Reference::Fixed(IncomeBracket::B3));
        assert_eq!(rc.filter, FilterRules::standard());
        assert_eq!(rc.metrics, Metric::ALL);
        assert_eq!(rc.threshold_overrides, ThresholdOverrides::default());
    }

    #[test]
    fn malformed_lines_duplicates_and_unknown_keys() {
        let e = KeyValues::parse("a.b = 1\nnot a pair\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        let e = KeyValues::parse("a.b = 1\na.b = 2\n", Path::new(".")).unwrap_err();
        assert!(e.to_string().contains("already set on line 1"), "{e}");
        let kv = KeyValues::parse(&format!("{MINIMAL}thresholds.bogus = 3\n"), Path::new(".")).unwrap();
        let e = RunConfig::from_kv(&kv).unwrap_err();
        assert!(e.to_string().contains("thresholds.bogus"), "{e}");
    }

    #[test]
    fn missing_input_is_named() {
        let kv = KeyValues::parse("input.incidents = x\n", Path::new(".")).unwrap();
        let e = RunConfig::from_kv(&kv).unwrap_err();
        assert!(e.to_string().contains("input.stations"), "{e}");
    }

    #[test]
    fn thresholds_and_overrides() {
        let kv = KeyValues::parse(
            &format!("{MINIMAL}thresholds.er_distance = 1.14\nthresholds.response_time = derive\n"),
            Path::new("."),
        )
        .unwrap();
        let rc = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(rc.threshold_overrides.er_miles, Some(1.14));
        assert_eq!(rc.threshold_overrides.response_seconds, None);
        let kv = KeyValues::parse(&format!("{MINIMAL}thresholds.er_distance = -1\n"), Path::new(".")).unwrap();
        assert!(RunConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn reproduction_preset() {
        let kv = KeyValues::parse(MINIMAL, Path::new(".")).unwrap();
        let mut rc = RunConfig::from_kv(&kv).unwrap();
        rc.apply_reproduction_preset();
        assert_eq!(rc.references[&Metric::ResponseTime], Reference::Fixed(IncomeBracket::B5));
        assert_eq!(rc.references[&Metric::StationDistance], Reference::Fixed(IncomeBracket::B2));
        assert_eq!(rc.references[&Metric::ErDistance], Reference::Fixed(IncomeBracket::B3));
        assert_eq!(rc.threshold_overrides.station_miles, Some(0.4));
    }

    #[test]
    fn column_mapping_and_delimiter() {
        let kv = KeyValues::parse(
            &format!(
                "{MINIMAL}incidents.col.point = Location\nincidents.col.actions = none\nincidents.delimiter = tab\n"
            ),
            Path::new("."),
        )
        .unwrap();
        let rc = RunConfig::from_kv(&kv).unwrap();
        assert_eq!(rc.columns.location, LocationColumns::Point("Location".into()));
        assert_eq!(rc.columns.actions, None);
        assert_eq!(rc.columns.delimiter, b'\t');
    }

    #[test]
    fn synth_entries() {
        let kv = KeyValues::parse(
            "synth.seed = 5\nsynth.bracket.B3 = 10 0.5 0.5 0.5\nsynth.bracket.B2@2017 = 4 0.25 0 1\n",
            Path::new("."),
        )
        .unwrap();
        let cfg = synth_config(&kv).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.per_bracket.len(), 2);
        assert_eq!((cfg.per_bracket[0].bracket, cfg.per_bracket[0].year), (IncomeBracket::B2, 2017));
        assert_eq!(cfg.per_bracket[1].n_incidents, 10);

        let empty = KeyValues::parse("", Path::new(".")).unwrap();
        assert!(synth_config(&empty).is_err());
        let bad = KeyValues::parse("synth.bracket.B3 = 10 1.5 0 0\n", Path::new(".")).unwrap();
        assert!(synth_config(&bad).is_err());
    }

    #[test]
    fn synth_analyze_config_parses() {
        let kv = KeyValues::parse("synth.bracket.B3 = 1 1 1 1\n", Path::new(".")).unwrap();
        let text = analyze_config_for_synth(&synth_config(&kv).unwrap());
        let rc = RunConfig::from_kv(&KeyValues::parse(&text, Path::new("/d")).unwrap()).unwrap();
        assert_eq!(rc.threshold_overrides.response_seconds, Some(300.0));
        assert_eq!(rc.inputs.ers, PathBuf::from("/d/ers.csv"));
    }

    #[test]
    fn committed_reference_page_is_current() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/configuration.md");
        if std::env::var_os("EMS_EQUITY_BLESS").is_some() {
            std::fs::write(&path, reference_markdown()).unwrap();
        }
        let on_disk = std::fs::read_to_string(&path).unwrap_or_default();
        assert_eq!(on_disk, reference_markdown(), "rerun with EMS_EQUITY_BLESS=1 to refresh {}", path.display());
    }
}
