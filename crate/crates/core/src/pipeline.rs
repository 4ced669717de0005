//! End-to-end runs: `analyze`, `validate` and `synth`.
//!
//! Outputs are assembled in memory first and written in one pass, so a run
//! that fails never leaves a partial output directory behind.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{analyze_config_for_synth, InputPaths, Reference, RunConfig};
use crate::error::{Error, Result};
use crate::gof::{hosmer_lemeshow, HLResult};
use crate::ingest::{
    build_profiles, filter_incidents, load_facilities_path, load_income, load_population, open_path, parse_incidents,
    Facility, FacilityKind, FilterReport, Incident, IncomeBracket, ZipProfile,
};
use crate::logit::{fit_outcomes, Encoding, LogitModel};
use crate::metrics::{
    binarize, compute_records, derive_thresholds, summarize, write_records_csv, Metric, ResponseRecord, SummaryStats,
    Thresholds,
};
use crate::report::{
    bracket_table, category_table, export_tables, histogram_svg, zip_table, ExportFormat, FitRow, SummaryRow,
};
use crate::synth::{generate, SynthConfig};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a file, read in chunks.
pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        total += n as u64;
        h.update(&buf[..n]);
    }
    Ok((hex::encode(h.finalize()), total))
}

/// Files to write, keyed by path relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutputSet {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl OutputSet {
    pub fn insert(&mut self, name: impl Into<String>, body: impl Into<Vec<u8>>) {
        self.files.insert(name.into(), body.into());
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.get(name).map(Vec::as_slice)
    }

    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files.iter().map(|(k, v)| (k.clone(), sha256_hex(v))).collect()
    }

    /// Writes every file under `dir`. On failure, files already written are
    /// removed, along with any directories this call created.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let mut created_dirs: Vec<PathBuf> = Vec::new();
        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> Result<()> {
            for (name, body) in &self.files {
                let path = dir.join(name);
                if let Some(parent) = path.parent() {
                    let mut missing = Vec::new();
                    let mut p = Some(parent);
                    while let Some(d) = p {
                        if d.as_os_str().is_empty() || d.exists() {
                            break;
                        }
                        missing.push(d.to_path_buf());
                        p = d.parent();
                    }
                    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                    created_dirs.extend(missing.into_iter().rev());
                }
                std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
                written.push(path);
            }
            Ok(())
        })();
        if result.is_err() {
            for f in &written {
                let _ = std::fs::remove_file(f);
            }
            for d in created_dirs.iter().rev() {
                let _ = std::fs::remove_dir(d);
            }
        }
        result
    }
}

/// Fitted model and goodness of fit for one metric.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricFit {
    pub metric: Metric,
    pub threshold: f64,
    /// Calls entering the regression.
    pub observations: usize,
    /// Calls left out because their ZIP has no income bracket.
    pub unbracketed_excluded: usize,
    pub model: LogitModel,
    pub hosmer_lemeshow: HLResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCounts {
    pub parse: FilterReport,
    pub all_calls: FilterReport,
    pub ems_calls: FilterReport,
    pub records_all_calls: usize,
    pub records_ems_calls: usize,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub outputs: OutputSet,
    pub counts: StageCounts,
    pub thresholds: Thresholds,
    pub stats: BTreeMap<Metric, SummaryStats>,
    pub fits: BTreeMap<Metric, MetricFit>,
    pub profiles: BTreeMap<String, ZipProfile>,
}

struct Inputs {
    incidents: Vec<Incident>,
    parse: FilterReport,
    stations: Vec<Facility>,
    ers: Vec<Facility>,
    profiles: BTreeMap<String, ZipProfile>,
}

fn read_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let (incidents, parse) = parse_incidents(open_path(&cfg.inputs.incidents)?, &cfg.columns)?;
    let stations = load_facilities_path(&cfg.inputs.stations, FacilityKind::FireStation)?;
    let ers = load_facilities_path(&cfg.inputs.ers, FacilityKind::EmergencyRoom)?;
    let income = load_income(open_path(&cfg.inputs.income)?)
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.inputs.income.display())))?;
    let population = load_population(open_path(&cfg.inputs.population)?)
        .map_err(|e| Error::Config(format!("{}: {e}", cfg.inputs.population.display())))?;
    Ok(Inputs { incidents, parse, stations, ers, profiles: build_profiles(&income, &population, cfg.tie) })
}

/// The regression population for a metric: EMS-only calls for ER distance,
/// all filtered calls otherwise.
pub fn uses_ems_calls(metric: Metric) -> bool {
    metric == Metric::ErDistance
}

fn values(records: &[ResponseRecord], metric: Metric) -> Vec<f64> {
    records.iter().filter_map(|r| metric.value(r)).collect()
}

fn encoding_for(present: Vec<IncomeBracket>, reference: Reference, metric: Metric) -> Result<Encoding> {
    match reference {
        Reference::Lowest => Encoding::lowest_reference(present),
        Reference::Fixed(b) => {
            Encoding::new(present, b).map_err(|e| Error::Config(format!("logit.reference.{}: {e}", metric.name())))
        }
    }
}

fn fit_metric(
    cfg: &RunConfig,
    metric: Metric,
    records: &[ResponseRecord],
    thresholds: &Thresholds,
) -> Result<MetricFit> {
    let bracketed: Vec<ResponseRecord> = records.iter().filter(|r| r.bracket.is_some()).cloned().collect();
    let with_value = |rs: &[ResponseRecord]| rs.iter().filter(|r| metric.value(r).is_some()).count();
    let unbracketed_excluded = with_value(records) - with_value(&bracketed);
    let outcomes = binarize(&bracketed, thresholds, metric)?;
    if outcomes.is_empty() {
        return Err(Error::Domain(format!("no bracketed calls available for {metric}")));
    }
    let mut present: Vec<IncomeBracket> = outcomes.iter().map(|o| o.0).collect();
    present.sort();
    present.dedup();
    let encoding = encoding_for(present, cfg.references[&metric], metric)?;
    let model = fit_outcomes(&outcomes, &encoding, &cfg.fit)?;
    let hl = hosmer_lemeshow(&model, &outcomes, cfg.grouping)?;
    Ok(MetricFit {
        metric,
        threshold: metric.threshold(thresholds),
        observations: outcomes.len(),
        unbracketed_excluded,
        model,
        hosmer_lemeshow: hl,
    })
}

fn export_all<R: crate::report::ExportRow>(
    out: &mut OutputSet,
    stem: &str,
    rows: &[R],
    formats: &[ExportFormat],
) -> Result<()> {
    for f in formats {
        out.insert(format!("tables/{stem}.{}", f.extension()), export_tables(rows, *f)?);
    }
    Ok(())
}

fn input_digests(inputs: &InputPaths, echo: &BTreeMap<String, String>) -> Result<Vec<serde_json::Value>> {
    inputs
        .all()
        .iter()
        .map(|(key, path)| {
            let (sha256, bytes) = sha256_file(path)?;
            Ok(json!({ "key": key, "path": echo.get(*key), "sha256": sha256, "bytes": bytes }))
        })
        .collect()
}

pub fn analyze(cfg: &RunConfig) -> Result<Analysis> {
    let inputs = read_inputs(cfg)?;
    let (all_calls, all_report) = filter_incidents(&inputs.incidents, &cfg.filter);
    let (ems_calls, ems_report) = filter_incidents(&inputs.incidents, &cfg.ems_filter());
    let records_all = compute_records(&all_calls, &inputs.stations, &inputs.ers, &inputs.profiles, &cfg.sphere)?;
    let records_ems = compute_records(&ems_calls, &inputs.stations, &inputs.ers, &inputs.profiles, &cfg.sphere)?;
    let population = |m: Metric| if uses_ems_calls(m) { &records_ems } else { &records_all };

    let mut stats = BTreeMap::new();
    for m in Metric::ALL {
        let v = values(population(m), m);
        stats.insert(m, summarize(&v).map_err(|e| Error::Domain(format!("{m} summary: {e}")))?);
    }
    let thresholds = derive_thresholds(
        &stats[&Metric::ResponseTime],
        &stats[&Metric::StationDistance],
        &stats[&Metric::ErDistance],
        &cfg.threshold_overrides,
    )?;

    let mut fits = BTreeMap::new();
    for &m in &cfg.metrics {
        fits.insert(m, fit_metric(cfg, m, population(m), &thresholds)?);
    }

    let mut out = OutputSet::default();
    let formats = &cfg.formats;
    export_all(&mut out, "categories", &category_table(&inputs.incidents), formats)?;
    let summary: Vec<SummaryRow> = Metric::ALL
        .iter()
        .map(|m| SummaryRow { metric: *m, stats: stats[m], threshold: m.threshold(&thresholds) })
        .collect();
    export_all(&mut out, "summary", &summary, formats)?;
    let fit_rows: Vec<FitRow> = fits
        .values()
        .map(|f| FitRow { metric: f.metric, model: f.model.clone(), hl: f.hosmer_lemeshow.clone() })
        .collect();
    export_all(&mut out, "fits", &fit_rows, formats)?;

    for (stem, ems) in [("brackets_all_calls", false), ("brackets_ems_calls", true)] {
        let models: BTreeMap<Metric, LogitModel> =
            fits.iter().filter(|(m, _)| uses_ems_calls(**m) == ems).map(|(m, f)| (*m, f.model.clone())).collect();
        if models.is_empty() {
            continue;
        }
        let records = if ems { &records_ems } else { &records_all };
        let table = bracket_table(&models, records, &inputs.profiles)?;
        for f in formats {
            out.insert(format!("tables/{stem}.{}", f.extension()), table.export(*f)?);
        }
    }
    let zips = zip_table(&records_all, &inputs.profiles, &all_calls);
    export_all(&mut out, "zips", &zips.rows, formats)?;

    for m in Metric::ALL {
        let v = values(population(m), m);
        let label = format!("{} ({})", m.description(), m.unit());
        out.insert(format!("figures/{}.svg", m.name()), histogram_svg(&v, cfg.bins[&m], &label, "Calls")?);
    }
    for f in fits.values() {
        let mut s = serde_json::to_string_pretty(f)?;
        s.push('\n');
        out.insert(format!("models/{}.json", f.metric.name()), s);
    }
    let mut records_csv = Vec::new();
    write_records_csv(&records_all, &mut records_csv)?;
    out.insert("records.csv", records_csv);

    let counts = StageCounts {
        parse: inputs.parse,
        all_calls: all_report,
        ems_calls: ems_report,
        records_all_calls: records_all.len(),
        records_ems_calls: records_ems.len(),
    };
    let conserved = counts.parse.is_conserved() && counts.all_calls.is_conserved() && counts.ems_calls.is_conserved();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": input_digests(&cfg.inputs, &cfg.echo)?,
        "config": cfg.echo,
        "effective": {
            "year": cfg.filter.year,
            "metrics": cfg.metrics,
            "references": cfg.references.iter().map(|(m, r)| (m.name(), match r {
                Reference::Lowest => "lowest".to_string(),
                Reference::Fixed(b) => b.code().to_string(),
            })).collect::<BTreeMap<_, _>>(),
            "thresholds": thresholds,
            "grouping": cfg.grouping.to_string(),
            "earth_radius_miles": cfg.sphere.radius_miles(),
        },
        "counts": {
            "stages": counts,
            "conserved": conserved,
            "regression": fits.values().map(|f| (f.metric.name(), json!({
                "observations": f.observations,
                "unbracketed_excluded": f.unbracketed_excluded,
            }))).collect::<BTreeMap<_, _>>(),
        },
        "zips_without_incidents": zips.excluded,
        "outputs": out.digests(),
    });
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    out.insert("manifest.json", m);

    Ok(Analysis { outputs: out, counts, thresholds, stats, fits, profiles: inputs.profiles })
}

/// Problems block a run; warnings do not.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub problems: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks inputs without writing anything. Incident rows that would be
/// quarantined are warnings; unreadable files, missing columns and bad
/// facility or income files are problems.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut r = ValidationReport::default();
    for (key, path) in cfg.inputs.all() {
        if let Err(e) = std::fs::File::open(path) {
            r.problems.push(format!("{key}: cannot read {}: {e}", path.display()));
        }
    }
    if !r.problems.is_empty() {
        return r;
    }

    let header = open_path(&cfg.inputs.incidents).and_then(|src| {
        let mut rdr = csv::ReaderBuilder::new().delimiter(cfg.columns.delimiter).from_reader(src);
        Ok(rdr.headers()?.clone())
    });
    let mut incident_zips = Vec::new();
    match header {
        Err(e) => r.problems.push(format!("input.incidents: {e}")),
        Ok(h) => {
            let missing = cfg.columns.missing_columns(&h);
            for (field, col) in &missing {
                r.problems.push(format!(
                    "incidents.col.{field}: column '{col}' not found in {}",
                    cfg.inputs.incidents.display()
                ));
            }
            if missing.is_empty() {
                match open_path(&cfg.inputs.incidents).and_then(|src| parse_incidents(src, &cfg.columns)) {
                    Err(e) => r.problems.push(format!("input.incidents: {e}")),
                    Ok((incidents, report)) => {
                        if incidents.is_empty() {
                            r.problems.push("input.incidents: no usable incident rows".into());
                        }
                        for (reason, n) in &report.quarantine_by_reason {
                            let lines: Vec<String> = report
                                .quarantine_samples
                                .iter()
                                .filter(|s| &s.reason == reason)
                                .take(5)
                                .map(|s| s.line.to_string())
                                .collect();
                            r.warnings.push(format!(
                                "input.incidents: {n} row(s) quarantined: {reason} (e.g. line {})",
                                lines.join(", ")
                            ));
                        }
                        incident_zips = incidents.into_iter().map(|i| i.zip).collect();
                    }
                }
            }
        }
    }

    for (key, path, kind) in [
        ("input.stations", &cfg.inputs.stations, FacilityKind::FireStation),
        ("input.ers", &cfg.inputs.ers, FacilityKind::EmergencyRoom),
    ] {
        match load_facilities_path(path, kind) {
            Ok(f) if f.is_empty() => r.problems.push(format!("{key}: {} lists no facilities", path.display())),
            Ok(_) => {}
            Err(e) => r.problems.push(format!("{key}: {e}")),
        }
    }
    let income = open_path(&cfg.inputs.income).and_then(load_income);
    let population = open_path(&cfg.inputs.population).and_then(load_population);
    match (&income, &population) {
        (Ok(inc), Ok(pop)) => {
            let profiles = build_profiles(inc, pop, cfg.tie);
            incident_zips.sort();
            incident_zips.dedup();
            let unbracketed: Vec<&str> = incident_zips
                .iter()
                .filter(|z| profiles.get(*z).and_then(|p| p.median_bracket).is_none())
                .map(String::as_str)
                .collect();
            if !unbracketed.is_empty() {
                r.warnings.push(format!(
                    "{} incident ZIP(s) have no income bracket and will be left out of regressions: {}",
                    unbracketed.len(),
                    unbracketed.join(", ")
                ));
            }
        }
        _ => {
            if let Err(e) = income {
                r.problems.push(format!("input.income: {e}"));
            }
            if let Err(e) = population {
                r.problems.push(format!("input.population: {e}"));
            }
        }
    }
    r
}

/// Generator output plus an `analyze.conf` and a manifest.
pub fn synth_outputs(cfg: &SynthConfig) -> Result<OutputSet> {
    let data = generate(cfg)?;
    let mut out = OutputSet::default();
    for (name, body) in data.files() {
        out.insert(name, body);
    }
    out.insert("analyze.conf", analyze_config_for_synth(cfg));
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "generator": "xorshift64*",
        "thresholds": cfg.thresholds,
        "summary": data.summary,
        "files": out.digests(),
    });
    let mut m = serde_json::to_string_pretty(&manifest)?;
    m.push('\n');
    out.insert("manifest.json", m);
    Ok(out)
}
