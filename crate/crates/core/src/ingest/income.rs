use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use super::incidents::is_zip;
use super::source::decompressed;
use crate::error::{Error, Result};

/// IRS adjusted-gross-income bracket of a tax filing, in increasing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum IncomeBracket {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

impl IncomeBracket {
    pub const ALL: [IncomeBracket; 6] = [
        IncomeBracket::B1,
        IncomeBracket::B2,
        IncomeBracket::B3,
        IncomeBracket::B4,
        IncomeBracket::B5,
        IncomeBracket::B6,
    ];

    /// 1-based position, as used in the income file.
    pub fn index(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            1..=6 => Some(Self::ALL[usize::from(i - 1)]),
            _ => None,
        }
    }

    pub fn code(self) -> &'static str {
        ["B1", "B2", "B3", "B4", "B5", "B6"][self as usize]
    }

    pub fn label(self) -> &'static str {
        match self {
            IncomeBracket::B1 => "under $25,000",
            IncomeBracket::B2 => "$25,000 - $50,000",
            IncomeBracket::B3 => "$50,000 - $75,000",
            IncomeBracket::B4 => "$75,000 - $100,000",
            IncomeBracket::B5 => "$100,000 - $200,000",
            IncomeBracket::B6 => "$200,000 or more",
        }
    }
}

impl fmt::Display for IncomeBracket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for IncomeBracket {
    type Err = Error;

    /// Accepts `B1`..`B6` or `1`..`6`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let digits = t.strip_prefix(['B', 'b']).unwrap_or(t);
        digits
            .parse::<u8>()
            .ok()
            .and_then(IncomeBracket::from_index)
            .ok_or_else(|| Error::Config(format!("unknown income bracket '{s}'")))
    }
}

impl Serialize for IncomeBracket {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

/// Which bracket wins when the cumulative count lands exactly on half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MedianTie {
    /// First bracket whose cumulative count reaches ⌈total/2⌉.
    #[default]
    Lower,
    /// First bracket whose cumulative count exceeds total/2.
    Upper,
}

impl FromStr for MedianTie {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lower" => Ok(MedianTie::Lower),
            "upper" => Ok(MedianTie::Upper),
            _ => Err(Error::Config(format!("unknown tie rule '{s}' (lower|upper)"))),
        }
    }
}

/// Bracket holding the median filer, ties to the lower bracket.
pub fn assign_bracket(filer_counts: &[u64; 6]) -> Result<IncomeBracket> {
    assign_bracket_with(filer_counts, MedianTie::Lower)
}

pub fn assign_bracket_with(filer_counts: &[u64; 6], tie: MedianTie) -> Result<IncomeBracket> {
    let total: u64 = filer_counts.iter().sum();
    if total == 0 {
        return Err(Error::UndefinedMedian);
    }
    let target = match tie {
        MedianTie::Lower => total.div_ceil(2),
        MedianTie::Upper => total / 2 + 1,
    };
    let mut cumulative = 0;
    for (b, &n) in IncomeBracket::ALL.iter().zip(filer_counts) {
        cumulative += n;
        if cumulative >= target {
            return Ok(*b);
        }
    }
    unreachable!("cumulative count reaches the total")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ZipProfile {
    pub zip: String,
    pub filer_counts: [u64; 6],
    /// `None` for ZIPs with no income data.
    pub median_bracket: Option<IncomeBracket>,
    pub population: Option<u64>,
}

fn header_index(header: &csv::StringRecord, name: &str, file: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("{file} file lacks column '{name}'")))
}

fn parse_count(raw: &str, line: u64, field: &str) -> Result<u64> {
    let cleaned: String = raw.trim().chars().filter(|c| *c != ',').collect();
    cleaned.parse::<u64>().map_err(|_| {
        Error::invalid(format!("row {line}: {field}"), format!("'{}' is not a nonnegative integer", raw.trim()))
    })
}

fn checked_zip(raw: &str, line: u64) -> Result<String> {
    let z = raw.trim();
    if is_zip(z) {
        Ok(z.to_string())
    } else {
        Err(Error::invalid(format!("row {line}: zip"), format!("'{z}' is not a 5-digit ZIP")))
    }
}

/// Reads long-format `zip,bracket_index,filer_count` rows, summing repeats.
pub fn load_income<R: Read>(reader: R) -> Result<BTreeMap<String, [u64; 6]>> {
    let input = decompressed(reader).map_err(|e| Error::io("<income>", e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let zc = header_index(&header, "zip", "income")?;
    let bc = header_index(&header, "bracket_index", "income")?;
    let nc = header_index(&header, "filer_count", "income")?;

    let mut out: BTreeMap<String, [u64; 6]> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let zip = checked_zip(rec.get(zc).unwrap_or(""), line)?;
        let raw_b = rec.get(bc).unwrap_or("").trim();
        let bracket =
            raw_b.parse::<u8>().ok().and_then(IncomeBracket::from_index).ok_or_else(|| {
                Error::invalid(format!("row {line}: bracket_index"), format!("'{raw_b}' is not in 1..6"))
            })?;
        let n = parse_count(rec.get(nc).unwrap_or(""), line, "filer_count")?;
        out.entry(zip).or_insert([0; 6])[bracket as usize] += n;
    }
    Ok(out)
}

/// Reads `zip,population` rows. Duplicate ZIPs are fatal.
pub fn load_population<R: Read>(reader: R) -> Result<BTreeMap<String, u64>> {
    let input = decompressed(reader).map_err(|e| Error::io("<population>", e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let zc = header_index(&header, "zip", "population")?;
    let pc = header_index(&header, "population", "population")?;

    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let zip = checked_zip(rec.get(zc).unwrap_or(""), line)?;
        let pop = parse_count(rec.get(pc).unwrap_or(""), line, "population")?;
        if out.insert(zip.clone(), pop).is_some() {
            return Err(Error::invalid(format!("row {line}: zip"), format!("duplicate ZIP '{zip}'")));
        }
    }
    Ok(out)
}

/// Joins income and population data into one profile per ZIP seen in either.
pub fn build_profiles(
    income: &BTreeMap<String, [u64; 6]>,
    population: &BTreeMap<String, u64>,
    tie: MedianTie,
) -> BTreeMap<String, ZipProfile> {
    let mut zips: Vec<&String> = income.keys().chain(population.keys()).collect();
    zips.sort();
    zips.dedup();
    zips.into_iter()
        .map(|z| {
            let counts = income.get(z).copied().unwrap_or([0; 6]);
            let profile = ZipProfile {
                zip: z.clone(),
                filer_counts: counts,
                median_bracket: assign_bracket_with(&counts, tie).ok(),
                population: population.get(z).copied(),
            };
            (z.clone(), profile)
        })
        .collect()
}
