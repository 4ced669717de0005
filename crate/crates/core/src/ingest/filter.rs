use std::collections::BTreeSet;

use super::category::Category;
use super::incidents::Incident;
use super::report::FilterReport;
use crate::error::Result;

/// Actions that, when they are the only actions taken on a call, remove it.
/// Named actions plus their NFIRS action-taken codes (83 inform, 86
/// investigate, 92 standby, 93 canceled en route).
const DEFAULT_EXCLUDED_ACTIONS: [&str; 8] =
    ["investigate", "inform", "standby", "canceled enroute", "83", "86", "92", "93"];

/// Lookup keys for an action code: its leading numeric code, if any, and its
/// normalized text. `"93 - Cancelled en route"` yields `["93", "canceled enroute"]`.
pub fn normalize_action(raw: &str) -> Vec<String> {
    let trimmed = raw.trim();
    let digits: String = trimmed.chars().take_while(char::is_ascii_digit).collect();
    let text =
        trimmed[digits.len()..].trim_start_matches(|c: char| c.is_whitespace() || c == '-' || c == ':' || c == '.');
    let text = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
        .replace("cancelled", "canceled")
        .replace("en route", "enroute")
        .replace("en-route", "enroute");
    let mut keys = Vec::with_capacity(2);
    if !digits.is_empty() {
        keys.push(digits);
    }
    if !text.is_empty() {
        keys.push(text);
    }
    keys
}

/// Incident filter. An incident is retained only if it passes every active
/// rule, so the retained set does not depend on rule order. Removals are
/// attributed to the first failing rule in the fixed order year, excluded
/// category, allow-list, excluded action.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterRules {
    pub exclude_actions: BTreeSet<String>,
    pub exclude_categories: BTreeSet<Category>,
    pub allow_categories: Option<BTreeSet<Category>>,
    pub year: Option<i32>,
}

impl FilterRules {
    /// No active rules; filtering is the identity.
    pub fn none() -> Self {
        Self::default()
    }

    /// Drops false alarms and calls whose only actions were investigate,
    /// inform, standby or canceled en route.
    pub fn standard() -> Self {
        Self {
            exclude_actions: DEFAULT_EXCLUDED_ACTIONS.iter().map(|s| s.to_string()).collect(),
            exclude_categories: [Category::FalseAlarms].into_iter().collect(),
            allow_categories: None,
            year: None,
        }
    }

    /// Builds rules from category names as they appear in configuration.
    /// Unknown names are a configuration error.
    pub fn from_names<S: AsRef<str>>(
        exclude_actions: &[S],
        exclude_categories: &[S],
        allow_categories: Option<&[S]>,
        year: Option<i32>,
    ) -> Result<Self> {
        let cats = |names: &[S]| -> Result<BTreeSet<Category>> { names.iter().map(|n| n.as_ref().parse()).collect() };
        Ok(Self {
            exclude_actions: exclude_actions.iter().flat_map(|a| normalize_action(a.as_ref())).collect(),
            exclude_categories: cats(exclude_categories)?,
            allow_categories: allow_categories.map(cats).transpose()?,
            year,
        })
    }

    /// Same rules restricted to Rescue/EMS calls.
    pub fn ems_only(mut self) -> Self {
        self.allow_categories = Some([Category::RescueEms].into_iter().collect());
        self
    }

    pub fn with_year(mut self, year: Option<i32>) -> Self {
        self.year = year;
        self
    }

    fn action_excluded(&self, codes: &[String]) -> bool {
        !self.exclude_actions.is_empty()
            && !codes.is_empty()
            && codes.iter().all(|c| normalize_action(c).iter().any(|k| self.exclude_actions.contains(k)))
    }

    /// The rule that removes `inc`, or `None` if it is retained.
    pub fn rejection(&self, inc: &Incident) -> Option<&'static str> {
        if let Some(y) = self.year {
            if inc.year != y {
                return Some("year");
            }
        }
        if self.exclude_categories.contains(&inc.category) {
            return Some(inc.category.slug());
        }
        if let Some(allow) = &self.allow_categories {
            if !allow.contains(&inc.category) {
                return Some("category_not_allowed");
            }
        }
        if self.action_excluded(&inc.action_codes) {
            return Some("excluded_action");
        }
        None
    }
}

pub fn filter_incidents(incidents: &[Incident], rules: &FilterRules) -> (Vec<Incident>, FilterReport) {
    let mut report = FilterReport { input_count: incidents.len(), ..FilterReport::default() };
    let mut kept = Vec::with_capacity(incidents.len());
    for inc in incidents {
        match rules.rejection(inc) {
            None => kept.push(inc.clone()),
            Some(rule) => report.remove(rule),
        }
    }
    report.retained_count = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::GeoPoint;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn incident(id: &str, category: Category, actions: &[&str], year: i32) -> Incident {
        let alarm = NaiveDate::from_ymd_opt(year, 6, 1).unwrap().and_hms_opt(12, 0, 0).unwrap();
        Incident {
            id: id.into(),
            alarm,
            arrival: Some(alarm),
            zip: "94110".into(),
            location: GeoPoint::new(37.75, -122.41).unwrap(),
            category,
            action_codes: actions.iter().map(|s| s.to_string()).collect(),
            property_loss: 0.0,
            year,
        }
    }

    fn three() -> Vec<Incident> {
        vec![
            incident("1", Category::Fire, &[], 2018),
            incident("2", Category::FalseAlarms, &[], 2018),
            incident("3", Category::RescueEms, &[], 2018),
        ]
    }

    #[test]
    fn empty_rules_are_identity() {
        let input = three();
        let (out, rep) = filter_incidents(&input, &FilterRules::none());
        assert_eq!(out, input);
        assert_eq!(rep.retained_count, 3);
        assert!(rep.removed_by_rule.is_empty());
    }

    #[test]
    fn standard_rules_drop_false_alarms() {
        let (out, rep) = filter_incidents(&three(), &FilterRules::standard());
        assert_eq!(out.len(), 2);
        assert_eq!(rep.removed_by_rule.get("false_alarm"), Some(&1));
        assert!(rep.is_conserved());
    }

    #[test]
    fn ems_only_mode() {
        let (out, rep) = filter_incidents(&three(), &FilterRules::standard().ems_only());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].category, Category::RescueEms);
        assert!(rep.is_conserved());
    }

    #[test]
    fn action_only_rule() {
        let input = vec![
            incident("a", Category::Fire, &["86 - Investigate"], 2018),
            incident("b", Category::Fire, &["86 - Investigate", "11 - Extinguish"], 2018),
            incident("c", Category::ServiceCalls, &["93 - Cancelled en route"], 2018),
            incident("d", Category::ServiceCalls, &["Standby"], 2018),
            incident("e", Category::ServiceCalls, &["83 - Provide information to public or media"], 2018),
            incident("f", Category::RescueEms, &["32 - Provide basic life support"], 2018),
        ];
        let (out, rep) = filter_incidents(&input, &FilterRules::standard());
        let ids: Vec<_> = out.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["b", "f"]);
        assert_eq!(rep.removed_by_rule.get("excluded_action"), Some(&4));
    }

    #[test]
    fn year_filter() {
        let input = vec![incident("a", Category::Fire, &[], 2017), incident("b", Category::Fire, &[], 2018)];
        let (out, rep) = filter_incidents(&input, &FilterRules::none().with_year(Some(2018)));
        assert_eq!(out.len(), 1);
        assert_eq!(rep.removed_by_rule.get("year"), Some(&1));
    }

    #[test]
    fn unknown_category_in_config() {
        let err = FilterRules::from_names(&[], &["Flood"], None, None).unwrap_err();
        assert!(err.to_string().contains("Flood"));
        let ok = FilterRules::from_names(&["Investigate"], &[" false alarms "], Some(&["Rescue/EMS"]), None).unwrap();
        assert!(ok.exclude_categories.contains(&Category::FalseAlarms));
        assert!(ok.exclude_actions.contains("investigate"));
    }

    #[test]
    fn normalized_action_keys() {
        assert_eq!(normalize_action("93 - Cancelled en route"), vec!["93", "canceled enroute"]);
        assert_eq!(normalize_action("  Investigate "), vec!["investigate"]);
        assert_eq!(normalize_action("86"), vec!["86"]);
    }

    fn arb_incident() -> impl Strategy<Value = Incident> {
        (0usize..9, 2016i32..2020, prop::collection::vec(0usize..4, 0..3)).prop_map(|(c, y, acts)| {
            let pool = ["86 - Investigate", "11 - Extinguish", "92 - Standby", "32 - Provide basic life support"];
            let a: Vec<&str> = acts.iter().map(|i| pool[*i]).collect();
            incident("x", Category::ALL[c], &a, y)
        })
    }

    proptest! {
        #[test]
        fn conservation_and_order_insensitivity(incs in prop::collection::vec(arb_incident(), 0..60), year in prop::option::of(2016i32..2020)) {
            let rules = FilterRules::standard().with_year(year);
            let (out, rep) = filter_incidents(&incs, &rules);
            prop_assert!(rep.is_conserved());

            // Applying each rule as its own pass, in either order, keeps the same set.
            let year_only = FilterRules::none().with_year(year);
            let mut rest = rules.clone();
            rest.year = None;
            let (a, _) = filter_incidents(&incs, &year_only);
            let (a, _) = filter_incidents(&a, &rest);
            let (b, _) = filter_incidents(&incs, &rest);
            let (b, _) = filter_incidents(&b, &year_only);
            prop_assert_eq!(&out, &a);
            prop_assert_eq!(&out, &b);
        }
    }
}
