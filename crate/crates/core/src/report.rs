//! Output tables, histograms and their text renderings.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::gof::HLResult;
use crate::ingest::{Category, Incident, IncomeBracket, ZipProfile};
use crate::logit::LogitModel;
use crate::metrics::{Metric, ResponseRecord, SummaryStats};

/// One rendered value. The variant decides the display precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    /// Three decimals: probabilities, miles, generic statistics.
    Fixed3(f64),
    /// Two decimals: percentages and currency totals.
    Fixed2(f64),
    /// Whole seconds as `HH:MM:SS`.
    Hms(f64),
    /// Scientific notation, for statistics that can be vanishingly small.
    Sci(f64),
    Missing,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(v) => v.to_string(),
            Cell::Fixed3(v) => format!("{v:.3}"),
            Cell::Fixed2(v) => format!("{v:.2}"),
            Cell::Hms(v) => format_hms(*v),
            Cell::Sci(v) => format!("{v:.3e}"),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(_) | Cell::Hms(_) => Value::String(self.render()),
            Cell::Int(v) => json!(v),
            Cell::Fixed3(_) | Cell::Fixed2(_) | Cell::Sci(_) => self
                .render()
                .parse::<f64>()
                .ok()
                .and_then(serde_json::Number::from_f64)
                .map_or(Value::Null, Value::Number),
            Cell::Missing => Value::Null,
        }
    }
}

/// `HH:MM:SS`, hours unbounded, rounded to the nearest second.
pub fn format_hms(seconds: f64) -> String {
    let s = seconds.round().max(0.0) as u64;
    format!("{:02}:{:02}:{:02}", s / 3600, (s / 60) % 60, s % 60)
}

/// A row type that can be exported.
pub trait ExportRow {
    const SCHEMA: &'static str;
    fn headers() -> Vec<&'static str>;
    fn cells(&self) -> Vec<Cell>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
    Markdown,
}

impl ExportFormat {
    pub const ALL: [ExportFormat; 3] = [ExportFormat::Csv, ExportFormat::Json, ExportFormat::Markdown];

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
            ExportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            "markdown" | "md" => Ok(ExportFormat::Markdown),
            other => Err(Error::Config(format!("unknown format '{other}' (expected csv, json or markdown)"))),
        }
    }
}

pub fn export_tables<R: ExportRow>(rows: &[R], format: ExportFormat) -> Result<String> {
    let headers: Vec<String> = R::headers().into_iter().map(String::from).collect();
    let cells: Vec<Vec<Cell>> = rows.iter().map(ExportRow::cells).collect();
    render_table(R::SCHEMA, &headers, &cells, format)
}

/// Renders a table given explicit headers, for tables whose columns vary.
pub fn render_table(schema: &str, headers: &[String], rows: &[Vec<Cell>], format: ExportFormat) -> Result<String> {
    match format {
        ExportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(headers)?;
            for r in rows {
                w.write_record(r.iter().map(Cell::render))?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Domain(e.to_string()))?;
            String::from_utf8(bytes).map_err(|e| Error::Domain(e.to_string()))
        }
        ExportFormat::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .map(|r| {
                    let obj: Map<String, Value> = headers.iter().zip(r).map(|(h, c)| (h.clone(), c.json())).collect();
                    Value::Object(obj)
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&json!({ "schema": schema, "rows": rows }))?;
            s.push('\n');
            Ok(s)
        }
        ExportFormat::Markdown => {
            let mut s = format!("| {} |\n", headers.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(headers.len()));
            for r in rows {
                let cells: Vec<String> = r
                    .iter()
                    .map(|c| match c {
                        Cell::Missing => "n/a".to_string(),
                        c => c.render().replace('|', "\\|"),
                    })
                    .collect();
                let _ = writeln!(s, "| {} |", cells.join(" | "));
            }
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRow {
    pub category: Category,
    pub count: usize,
    pub percent: f64,
}

impl ExportRow for CategoryRow {
    const SCHEMA: &'static str = "category_table";
    fn headers() -> Vec<&'static str> {
        vec!["category", "incidents", "percent"]
    }
    fn cells(&self) -> Vec<Cell> {
        vec![Cell::Text(self.category.name().into()), Cell::Int(self.count as u64), Cell::Fixed2(self.percent)]
    }
}

/// Frequency of each category present, most frequent first.
pub fn category_table(incidents: &[Incident]) -> Vec<CategoryRow> {
    let mut counts: BTreeMap<Category, usize> = BTreeMap::new();
    for inc in incidents {
        *counts.entry(inc.category).or_default() += 1;
    }
    let total = incidents.len() as f64;
    let mut rows: Vec<CategoryRow> = counts
        .into_iter()
        .map(|(category, count)| CategoryRow { category, count, percent: 100.0 * count as f64 / total })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then(a.category.cmp(&b.category)));
    rows
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: Metric,
    pub stats: SummaryStats,
    pub threshold: f64,
}

impl ExportRow for SummaryRow {
    const SCHEMA: &'static str = "summary_table";
    fn headers() -> Vec<&'static str> {
        vec!["metric", "unit", "n", "mean", "std_error", "min", "max", "threshold"]
    }
    fn cells(&self) -> Vec<Cell> {
        let s = &self.stats;
        vec![
            Cell::Text(self.metric.name().into()),
            Cell::Text(self.metric.unit().into()),
            Cell::Int(s.n as u64),
            Cell::Fixed3(s.mean),
            Cell::Fixed3(s.std_error),
            Cell::Fixed3(s.min),
            Cell::Fixed3(s.max),
            Cell::Fixed3(self.threshold),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BracketRow {
    pub bracket: IncomeBracket,
    pub n_zips: usize,
    pub incidents: usize,
    pub probabilities: BTreeMap<Metric, f64>,
    pub population: u64,
}

/// Bracket rows over a fixed metric column set.
#[derive(Debug, Clone, PartialEq)]
pub struct BracketTable {
    pub metrics: Vec<Metric>,
    pub rows: Vec<BracketRow>,
}

/// One row per bracket among the records, with a probability column per model.
pub fn bracket_table(
    models: &BTreeMap<Metric, LogitModel>,
    records: &[ResponseRecord],
    profiles: &BTreeMap<String, ZipProfile>,
) -> Result<BracketTable> {
    let mut per: BTreeMap<IncomeBracket, (BTreeSet<&str>, usize)> = BTreeMap::new();
    for r in records {
        if let Some(b) = r.bracket {
            let e = per.entry(b).or_default();
            e.0.insert(&r.zip);
            e.1 += 1;
        }
    }
    let rows = per
        .into_iter()
        .map(|(bracket, (zips, incidents))| {
            let mut probabilities = BTreeMap::new();
            for (m, model) in models {
                if model.encoding.brackets_present().contains(&bracket) {
                    probabilities.insert(*m, model.predict_prob(bracket)?);
                }
            }
            Ok(BracketRow {
                bracket,
                n_zips: zips.len(),
                incidents,
                probabilities,
                population: zips.iter().filter_map(|z| profiles.get(*z).and_then(|p| p.population)).sum(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BracketTable { metrics: models.keys().copied().collect(), rows })
}

impl BracketTable {
    pub fn headers(&self) -> Vec<String> {
        let mut h: Vec<String> = ["bracket", "median_income", "n_zips", "incidents"].map(String::from).to_vec();
        h.extend(self.metrics.iter().map(|m| format!("p_{}", m.name())));
        h.push("population".into());
        h
    }

    fn cells(&self, row: &BracketRow) -> Vec<Cell> {
        let mut c = vec![
            Cell::Text(row.bracket.code().into()),
            Cell::Text(row.bracket.label().into()),
            Cell::Int(row.n_zips as u64),
            Cell::Int(row.incidents as u64),
        ];
        c.extend(self.metrics.iter().map(|m| row.probabilities.get(m).map_or(Cell::Missing, |p| Cell::Fixed3(*p))));
        c.push(Cell::Int(row.population));
        c
    }

    /// Same renderings as [`export_tables`], with metric-dependent columns.
    pub fn export(&self, format: ExportFormat) -> Result<String> {
        let rows: Vec<Vec<Cell>> = self.rows.iter().map(|r| self.cells(r)).collect();
        render_table("bracket_table", &self.headers(), &rows, format)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZipRow {
    pub zip: String,
    pub avg_response_seconds: Option<f64>,
    pub avg_station_miles: f64,
    pub avg_er_miles: f64,
    pub bracket: Option<IncomeBracket>,
    pub incidents: usize,
    pub population: Option<u64>,
    pub total_property_loss: f64,
    /// `None` when the population is unknown or zero.
    pub per_capita_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ZipTable {
    pub rows: Vec<ZipRow>,
    /// ZIPs known from the profiles that had no incidents.
    pub excluded: Vec<String>,
}

pub fn per_capita(total_loss: f64, population: u64) -> Option<f64> {
    (population > 0).then(|| total_loss / population as f64)
}

/// Per-ZIP means and losses. Losses are looked up by incident id.
pub fn zip_table(
    records: &[ResponseRecord],
    profiles: &BTreeMap<String, ZipProfile>,
    incidents: &[Incident],
) -> ZipTable {
    let loss: HashMap<&str, f64> = incidents.iter().map(|i| (i.id.as_str(), i.property_loss)).collect();
    #[derive(Default)]
    struct Acc {
        n: usize,
        resp_sum: f64,
        resp_n: usize,
        station: f64,
        er: f64,
        loss: f64,
    }
    let mut acc: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in records {
        let a = acc.entry(&r.zip).or_default();
        a.n += 1;
        if let Some(s) = r.response_seconds {
            a.resp_sum += s as f64;
            a.resp_n += 1;
        }
        a.station += r.station_miles;
        a.er += r.er_miles;
        a.loss += loss.get(r.incident_id.as_str()).copied().unwrap_or(0.0);
    }
    let mut rows: Vec<ZipRow> = acc
        .iter()
        .map(|(zip, a)| {
            let profile = profiles.get(*zip);
            let population = profile.and_then(|p| p.population);
            ZipRow {
                zip: zip.to_string(),
                avg_response_seconds: (a.resp_n > 0).then(|| a.resp_sum / a.resp_n as f64),
                avg_station_miles: a.station / a.n as f64,
                avg_er_miles: a.er / a.n as f64,
                bracket: profile.and_then(|p| p.median_bracket),
                incidents: a.n,
                population,
                total_property_loss: a.loss,
                per_capita_loss: population.and_then(|p| per_capita(a.loss, p)),
            }
        })
        .collect();
    // Bracketed ZIPs first in bracket order, then those without a bracket.
    rows.sort_by(|a, b| (a.bracket.is_none(), a.bracket, &a.zip).cmp(&(b.bracket.is_none(), b.bracket, &b.zip)));
    let excluded = profiles.keys().filter(|z| !acc.contains_key(z.as_str())).cloned().collect();
    ZipTable { rows, excluded }
}

impl ExportRow for ZipRow {
    const SCHEMA: &'static str = "zip_table";
    fn headers() -> Vec<&'static str> {
        vec![
            "zip",
            "avg_response_hms",
            "avg_response_seconds",
            "avg_station_miles",
            "avg_er_miles",
            "bracket",
            "incidents",
            "population",
            "total_property_loss",
            "per_capita_loss",
        ]
    }
    fn cells(&self) -> Vec<Cell> {
        vec![
            Cell::Text(self.zip.clone()),
            self.avg_response_seconds.map_or(Cell::Missing, Cell::Hms),
            self.avg_response_seconds.map_or(Cell::Missing, Cell::Fixed3),
            Cell::Fixed3(self.avg_station_miles),
            Cell::Fixed3(self.avg_er_miles),
            Cell::Text(self.bracket.map_or("no bracket", |b| b.label()).into()),
            Cell::Int(self.incidents as u64),
            self.population.map_or(Cell::Missing, Cell::Int),
            Cell::Fixed2(self.total_property_loss),
            self.per_capita_loss.map_or(Cell::Missing, Cell::Fixed3),
        ]
    }
}

/// Fitted coefficients and fit diagnostics, one row per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRow {
    pub metric: Metric,
    pub model: LogitModel,
    pub hl: HLResult,
}

impl ExportRow for FitRow {
    const SCHEMA: &'static str = "fit_table";
    fn headers() -> Vec<&'static str> {
        vec![
            "metric",
            "reference",
            "n",
            "beta0",
            "beta_B1",
            "beta_B2",
            "beta_B3",
            "beta_B4",
            "beta_B5",
            "beta_B6",
            "iterations",
            "converged",
            "hl_chi2",
            "hl_df",
            "hl_p",
        ]
    }
    fn cells(&self) -> Vec<Cell> {
        let m = &self.model;
        let mut c = vec![
            Cell::Text(self.metric.name().into()),
            Cell::Text(m.encoding.reference().code().into()),
            Cell::Int(m.n_observations as u64),
            Cell::Sci(m.beta[0]),
        ];
        c.extend(IncomeBracket::ALL.iter().map(|b| {
            if m.encoding.brackets_present().contains(b) {
                m.coefficient(*b).map_or(Cell::Missing, Cell::Sci)
            } else {
                Cell::Missing
            }
        }));
        c.extend([
            Cell::Int(m.iterations as u64),
            Cell::Text(m.converged.to_string()),
            Cell::Sci(self.hl.chi2),
            Cell::Int(u64::from(self.hl.df)),
            Cell::Sci(self.hl.p_value),
        ]);
        c
    }
}

/// Equal-width bin counts starting at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub origin: f64,
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn bin_start(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.bin_width
    }

    /// Indices of bins higher than both neighbours (plateaus count once).
    pub fn local_maxima(&self) -> Vec<usize> {
        let c = &self.counts;
        let mut out = Vec::new();
        let mut i = 0;
        while i < c.len() {
            let mut j = i;
            while j + 1 < c.len() && c[j + 1] == c[i] {
                j += 1;
            }
            let left = i == 0 || c[i - 1] < c[i];
            let right = j + 1 == c.len() || c[j + 1] < c[i];
            if left && right && c[i] > 0 {
                out.push(i);
            }
            i = j + 1;
        }
        out
    }
}

pub fn histogram_bins(values: &[f64], bin_width: f64) -> Result<Histogram> {
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::Config(format!("bin width {bin_width} must be positive")));
    }
    if values.is_empty() {
        return Err(Error::Domain("histogram of no values".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("histogram value {v} is not finite")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let origin = (min / bin_width).floor() * bin_width;
    let index = |v: f64| ((v - origin) / bin_width).floor().max(0.0) as usize;
    let mut counts = vec![0usize; index(max) + 1];
    for &v in values {
        counts[index(v)] += 1;
    }
    Ok(Histogram { origin, bin_width, counts })
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick label with the fewest decimals that keeps the bin width visible.
fn tick(v: f64, width: f64) -> String {
    let decimals = if width >= 1.0 { 0 } else { (-width.log10()).ceil().min(6.0) as usize };
    format!("{v:.decimals$}")
}

pub fn histogram_svg(values: &[f64], bin_width: f64, x_label: &str, y_label: &str) -> Result<String> {
    let h = histogram_bins(values, bin_width)?;
    let (w_px, h_px) = (720.0, 420.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 60.0);
    let plot_w = w_px - left - right;
    let plot_h = h_px - top - bottom;
    let n = h.counts.len();
    let peak = h.counts.iter().copied().max().unwrap_or(1).max(1);
    let bar_w = plot_w / n as f64;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w_px}" height="{h_px}" viewBox="0 0 {w_px} {h_px}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w_px}" height="{h_px}" fill="#ffffff"/>"##);
    for (i, &c) in h.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let bh = plot_h * c as f64 / peak as f64;
        let _ = writeln!(
            s,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#4a78a8" stroke="#2b4a6b" stroke-width="0.5"><title>{}: {c}</title></rect>"##,
            left + i as f64 * bar_w,
            top + plot_h - bh,
            bar_w,
            bh,
            xml_escape(&tick(h.bin_start(i), bin_width)),
        );
    }
    let (x0, y0) = (left, top + plot_h);
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{y0}" x2="{:.2}" y2="{y0}" stroke="#000000"/>"##, left + plot_w);
    let _ = writeln!(s, r##"<line x1="{x0}" y1="{top}" x2="{x0}" y2="{y0}" stroke="#000000"/>"##);

    let x_ticks = n.min(8);
    for k in 0..=x_ticks {
        let bin = k * n / x_ticks;
        let x = left + bin as f64 * bar_w;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="#000000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            y0 + 5.0,
            y0 + 18.0,
            tick(h.bin_start(bin), bin_width),
        );
    }
    let y_ticks = peak.min(5);
    for k in 0..=y_ticks {
        let v = peak * k / y_ticks;
        let y = y0 - plot_h * v as f64 / peak as f64;
        let _ = writeln!(
            s,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="#000000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v}</text>"##,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        left + plot_w / 2.0,
        h_px - 15.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        top + plot_h / 2.0,
        top + plot_h / 2.0,
        xml_escape(y_label)
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Default bin width per metric: 30 s for time, 0.1 mi for distances.
pub fn default_bin_width(metric: Metric) -> f64 {
    match metric {
        Metric::ResponseTime => 30.0,
        Metric::StationDistance | Metric::ErDistance => 0.1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::GeoPoint;
    use crate::logit::{fit_outcomes, Encoding, FitSettings};
    use chrono::NaiveDate;
    use IncomeBracket::*;

    fn incident(id: &str, category: Category, zip: &str, loss: f64) -> Incident {
        let t = NaiveDate::from_ymd_opt(2018, 3, 1).unwrap().and_hms_opt(12, 0, 0).unwrap();
        Incident {
            id: id.into(),
            alarm: t,
            arrival: Some(t),
            zip: zip.into(),
            location: GeoPoint::new(37.7, -122.4).unwrap(),
            category,
            action_codes: vec![],
            property_loss: loss,
            year: 2018,
        }
    }

    fn record(id: &str, zip: &str, bracket: Option<IncomeBracket>, secs: i64, miles: f64) -> ResponseRecord {
        ResponseRecord {
            incident_id: id.into(),
            response_seconds: Some(secs),
            nearest_station_id: "S1".into(),
            station_miles: miles,
            nearest_er_id: "E1".into(),
            er_miles: 2.0 * miles,
            zip: zip.into(),
            bracket,
            year: 2018,
        }
    }

    fn profile(zip: &str, b: Option<IncomeBracket>, pop: Option<u64>) -> (String, ZipProfile) {
        (zip.into(), ZipProfile { zip: zip.into(), filer_counts: [0; 6], median_bracket: b, population: pop })
    }

    #[test]
    fn categories_single_and_three_to_one() {
        let one = vec![incident("a", Category::Fire, "94110", 0.0)];
        let t = category_table(&one);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].percent, 100.0);

        let mut v: Vec<Incident> = (0..3).map(|i| incident(&i.to_string(), Category::RescueEms, "z", 0.0)).collect();
        v.push(incident("x", Category::Fire, "z", 0.0));
        let t = category_table(&v);
        assert_eq!((t[0].category, t[0].percent), (Category::RescueEms, 75.0));
        assert_eq!((t[1].category, t[1].percent), (Category::Fire, 25.0));
    }

    #[test]
    fn published_category_shares() {
        let counts = [
            (Category::FalseAlarms, 251_445usize),
            (Category::RescueEms, 84_209),
            (Category::ServiceCalls, 79_138),
            (Category::Fire, 67_550),
            (Category::GoodIntentCalls, 33_470),
            (Category::HazardousCondition, 31_773),
            (Category::SpecialIncident, 6_170),
            (Category::Rupture, 2_113),
            (Category::SevereWeather, 355),
        ];
        let total: usize = counts.iter().map(|c| c.1).sum();
        let pct = |n: usize| 100.0 * n as f64 / total as f64;
        assert!((pct(67_550) - 12.14).abs() < 0.005);
        assert!((pct(84_209) - 15.14).abs() < 0.005);
    }

    #[test]
    fn published_per_capita() {
        assert!((per_capita(51_467_239.0, 35_550).unwrap() - 1447.742).abs() < 1e-3);
        assert!((per_capita(33_639_417.0, 77_090).unwrap() - 436.366).abs() < 1e-3);
        assert_eq!(per_capita(10.0, 0), None);
    }

    #[test]
    fn zip_table_means_order_and_exclusions() {
        let recs = vec![
            record("1", "94124", Some(B2), 300, 0.2),
            record("2", "94124", Some(B2), 400, 0.4),
            record("3", "94105", Some(B5), 200, 0.1),
            record("4", "99999", None, 100, 1.0),
        ];
        let incs = vec![
            incident("1", Category::Fire, "94124", 1000.0),
            incident("2", Category::Fire, "94124", 500.0),
            incident("3", Category::Fire, "94105", 0.0),
            incident("4", Category::Fire, "99999", 0.0),
        ];
        let profiles: BTreeMap<_, _> = [
            profile("94124", Some(B2), Some(100)),
            profile("94105", Some(B5), Some(0)),
            profile("94000", Some(B3), Some(5)),
        ]
        .into_iter()
        .collect();
        let t = zip_table(&recs, &profiles, &incs);
        let zips: Vec<&str> = t.rows.iter().map(|r| r.zip.as_str()).collect();
        assert_eq!(zips, ["94124", "94105", "99999"]);
        assert_eq!(t.rows[0].avg_response_seconds, Some(350.0));
        assert!((t.rows[0].avg_station_miles - 0.3).abs() < 1e-12);
        assert_eq!(t.rows[0].per_capita_loss, Some(15.0));
        assert_eq!(t.rows[1].per_capita_loss, None);
        assert_eq!(t.rows[2].population, None);
        assert_eq!(t.excluded, ["94000"]);
    }

    #[test]
    fn bracket_table_counts_and_saturated_probabilities() {
        let targets = [(B2, 0.494), (B3, 0.559), (B4, 0.624), (B5, 0.553)];
        let mut recs = Vec::new();
        let mut outcomes = Vec::new();
        for (k, (b, p)) in targets.iter().enumerate() {
            let hits = (p * 1000.0_f64).round() as usize;
            for i in 0..1000 {
                let zip = format!("9410{k}{}", i % 2);
                recs.push(record(&format!("{k}-{i}"), &zip, Some(*b), 1, 0.1));
                outcomes.push((*b, i < hits));
            }
        }
        recs.push(record("nb", "00000", None, 1, 0.1));
        let enc = Encoding::lowest_reference(targets.iter().map(|t| t.0)).unwrap();
        let model = fit_outcomes(&outcomes, &enc, &FitSettings::default()).unwrap();
        let models: BTreeMap<_, _> = [(Metric::ResponseTime, model)].into_iter().collect();
        let profiles: BTreeMap<_, _> =
            [profile("941000", Some(B2), Some(10)), profile("941001", Some(B2), Some(5))].into_iter().collect();
        let t = bracket_table(&models, &recs, &profiles).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows.iter().map(|r| r.incidents).sum::<usize>(), 4000);
        assert_eq!(t.rows[0].n_zips, 2);
        assert_eq!(t.rows[0].population, 15);
        for (row, (_, p)) in t.rows.iter().zip(targets) {
            assert!((row.probabilities[&Metric::ResponseTime] - p).abs() < 1e-6);
        }
        let md = t.export(ExportFormat::Markdown).unwrap();
        assert!(md.contains("| B2 | $25,000 - $50,000 | 2 | 1000 | 0.494 | 15 |"), "{md}");
        let js = t.export(ExportFormat::Json).unwrap();
        assert!(js.contains("\"schema\": \"bracket_table\""));
    }

    #[test]
    fn export_empty_and_round_trip() {
        let rows: Vec<CategoryRow> = vec![];
        assert_eq!(export_tables(&rows, ExportFormat::Csv).unwrap(), "category,incidents,percent\n");
        let rows = vec![
            CategoryRow { category: Category::GoodIntentCalls, count: 3, percent: 75.0 },
            CategoryRow { category: Category::SevereWeather, count: 1, percent: 25.0 },
        ];
        let text = export_tables(&rows, ExportFormat::Csv).unwrap();
        assert!(!text.contains('\r'));
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let parsed: Vec<Vec<String>> = rdr.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
        let rendered: Vec<Vec<String>> = rows.iter().map(|r| r.cells().iter().map(Cell::render).collect()).collect();
        assert_eq!(parsed, rendered);
        assert!(text.contains("Severe Weather/Natural Disaster,1,25.00"));

        let js: Value = serde_json::from_str(&export_tables(&rows, ExportFormat::Json).unwrap()).unwrap();
        assert_eq!(js["schema"], "category_table");
        assert_eq!(js["rows"][0]["incidents"], 3);
    }

    #[test]
    fn hms_rendering() {
        assert_eq!(format_hms(355.0), "00:05:55");
        assert_eq!(format_hms(83_515.0), "23:11:55");
        assert_eq!(format_hms(359.6), "00:06:00");
    }

    #[test]
    fn histogram_examples() {
        let h = histogram_bins(&[0.1, 0.1, 0.9], 0.5).unwrap();
        assert_eq!(h.counts, [2, 1]);
        let one = histogram_bins(&[42.0], 30.0).unwrap();
        assert_eq!(one.counts, [1]);
        assert!(matches!(histogram_bins(&[1.0], 0.0), Err(Error::Config(_))));
        assert!(matches!(histogram_svg(&[1.0], -1.0, "x", "y"), Err(Error::Config(_))));
        let bi = Histogram { origin: 0.0, bin_width: 1.0, counts: vec![1, 5, 2, 2, 7, 7, 3] };
        assert_eq!(bi.local_maxima(), [1, 4]);
    }

    #[test]
    fn svg_is_deterministic_and_standalone() {
        let v: Vec<f64> = (0..500).map(|i| (i as f64 * 0.37).sin().abs() * 3.0).collect();
        let a = histogram_svg(&v, 0.1, "Miles <to> ER", "Calls").unwrap();
        assert_eq!(a, histogram_svg(&v, 0.1, "Miles <to> ER", "Calls").unwrap());
        assert!(a.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
        assert!(a.contains("Miles &lt;to&gt; ER"));
        assert!(!a.contains("href"));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn percentages_sum_to_hundred(cats in prop::collection::vec(0usize..9, 1..400)) {
                let incs: Vec<Incident> = cats
                    .iter()
                    .enumerate()
                    .map(|(i, c)| incident(&i.to_string(), Category::ALL[*c], "z", 0.0))
                    .collect();
                let t = category_table(&incs);
                let total: f64 = t.iter().map(|r| r.percent).sum();
                prop_assert!((total - 100.0).abs() <= 0.05);
                prop_assert_eq!(t.iter().map(|r| r.count).sum::<usize>(), incs.len());
                prop_assert!(t.windows(2).all(|w| w[0].count >= w[1].count));
            }

            #[test]
            fn bracket_incidents_conserved(picks in prop::collection::vec(0u8..7, 0..300)) {
                let recs: Vec<ResponseRecord> = picks
                    .iter()
                    .enumerate()
                    .map(|(i, b)| record(&i.to_string(), &format!("z{}", i % 5), IncomeBracket::from_index(*b), 1, 0.1))
                    .collect();
                let t = bracket_table(&BTreeMap::new(), &recs, &BTreeMap::new()).unwrap();
                let bracketed = recs.iter().filter(|r| r.bracket.is_some()).count();
                prop_assert_eq!(t.rows.iter().map(|r| r.incidents).sum::<usize>(), bracketed);
                prop_assert!(t.rows.windows(2).all(|w| w[0].bracket < w[1].bracket));
            }
        }
    }
}
