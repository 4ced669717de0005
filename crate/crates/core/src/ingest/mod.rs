//! Readers for the incident, facility, income and population files, plus the
//! incident filter rules.
//!
//! Incident rows are parsed in a single streaming pass. Malformed rows are
//! quarantined with a reason and counted; they never abort the parse. The
//! facility, income and population files are small and authoritative, so any
//! problem in them is fatal.

mod category;
mod facilities;
mod filter;
mod incidents;
mod income;
mod report;
mod source;

pub use category::Category;
pub use facilities::{load_facilities, load_facilities_path, Facility, FacilityKind};
pub use filter::{filter_incidents, normalize_action, FilterRules};
pub use incidents::{parse_incidents, Incident, IncidentColumns, LocationColumns};
pub use income::{
    assign_bracket, assign_bracket_with, build_profiles, load_income, load_population, IncomeBracket, MedianTie,
    ZipProfile,
};
pub use report::{FilterReport, QuarantineEntry};
pub use source::{decompressed, open_path};
