use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::Error;

/// Incident call category.
///
/// The nine categories follow the NFIRS incident-type series, so a source
/// value may be either the category name or a three-digit incident-type code
/// such as `"321 - EMS call"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Fire,
    Rupture,
    RescueEms,
    HazardousCondition,
    ServiceCalls,
    GoodIntentCalls,
    FalseAlarms,
    SevereWeather,
    SpecialIncident,
}

impl Category {
    pub const ALL: [Category; 9] = [
        Category::Fire,
        Category::Rupture,
        Category::RescueEms,
        Category::HazardousCondition,
        Category::ServiceCalls,
        Category::GoodIntentCalls,
        Category::FalseAlarms,
        Category::SevereWeather,
        Category::SpecialIncident,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Fire => "Fire",
            Category::Rupture => "Rupture",
            Category::RescueEms => "Rescue/EMS",
            Category::HazardousCondition => "Hazardous Condition",
            Category::ServiceCalls => "Service Calls",
            Category::GoodIntentCalls => "Good Intent Calls",
            Category::FalseAlarms => "False Alarms",
            Category::SevereWeather => "Severe Weather/Natural Disaster",
            Category::SpecialIncident => "Special Incident",
        }
    }

    /// Short identifier used for filter-report keys and config values.
    pub fn slug(self) -> &'static str {
        match self {
            Category::Fire => "fire",
            Category::Rupture => "rupture",
            Category::RescueEms => "rescue_ems",
            Category::HazardousCondition => "hazardous_condition",
            Category::ServiceCalls => "service_call",
            Category::GoodIntentCalls => "good_intent",
            Category::FalseAlarms => "false_alarm",
            Category::SevereWeather => "severe_weather",
            Category::SpecialIncident => "special_incident",
        }
    }

    fn from_series_digit(d: u8) -> Option<Category> {
        Some(match d {
            b'1' => Category::Fire,
            b'2' => Category::Rupture,
            b'3' => Category::RescueEms,
            b'4' => Category::HazardousCondition,
            b'5' => Category::ServiceCalls,
            b'6' => Category::GoodIntentCalls,
            b'7' => Category::FalseAlarms,
            b'8' => Category::SevereWeather,
            b'9' => Category::SpecialIncident,
            _ => return None,
        })
    }

    /// Case-insensitive, whitespace-tolerant lookup.
    pub fn parse(raw: &str) -> Option<Category> {
        let key = normalize(raw);
        if key.is_empty() {
            return None;
        }
        let bytes = key.as_bytes();
        if bytes.len() >= 3 && bytes[..3].iter().all(u8::is_ascii_digit) {
            let rest = &bytes[3..];
            if rest.is_empty() || !rest[0].is_ascii_digit() {
                return Category::from_series_digit(bytes[0]);
            }
        }
        Category::ALL.into_iter().find(|c| normalize(c.name()) == key || c.slug() == key)
    }
}

fn normalize(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Category::parse(s).ok_or_else(|| Error::Config(format!("unknown call category '{s}'")))
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}
