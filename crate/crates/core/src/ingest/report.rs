use std::collections::BTreeMap;

use serde::Serialize;

/// Number of quarantined rows kept verbatim as examples.
pub(crate) const QUARANTINE_SAMPLE_LIMIT: usize = 25;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuarantineEntry {
    /// 1-based line number in the source, header included.
    pub line: u64,
    pub reason: String,
}

/// Accounting for one parse or filter pass.
///
/// `input_count = retained_count + Σ removed_by_rule + quarantined` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub retained_count: usize,
    pub removed_by_rule: BTreeMap<String, usize>,
    pub quarantined: usize,
    pub quarantine_by_reason: BTreeMap<String, usize>,
    pub quarantine_samples: Vec<QuarantineEntry>,
}

impl FilterReport {
    pub fn removed(&self) -> usize {
        self.removed_by_rule.values().sum()
    }

    pub fn is_conserved(&self) -> bool {
        self.input_count == self.retained_count + self.removed() + self.quarantined
    }

    pub(crate) fn quarantine(&mut self, line: u64, reason: &str) {
        self.quarantined += 1;
        *self.quarantine_by_reason.entry(reason.to_string()).or_default() += 1;
        if self.quarantine_samples.len() < QUARANTINE_SAMPLE_LIMIT {
            self.quarantine_samples.push(QuarantineEntry { line, reason: reason.to_string() });
        }
    }

    pub(crate) fn remove(&mut self, rule: &str) {
        *self.removed_by_rule.entry(rule.to_string()).or_default() += 1;
    }
}
