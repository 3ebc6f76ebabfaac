//! The four-vector classification model (element, vulnerability, method,
//! damage) and the evaluator that turns an executed session into an
//! observed damage level.
//!
//! Element and vulnerability are declared per attack; damage and method
//! are inferred from the outcome and checked against the ground-truth
//! table, which ships as a data file.

use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::adversary::ActionKind;
use crate::error::SimError;
use crate::outcome::{NegotiatedMode, SessionOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Element {
    Algorithm,
    Version,
    Layer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vulnerability {
    Implementation,
    Design,
    TrustModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Modification,
    Dropping,
    Injection,
}

impl Method {
    pub fn matches_action(self, action: ActionKind) -> bool {
        matches!(
            (self, action),
            (Method::Modification, ActionKind::Modify)
                | (Method::Dropping, ActionKind::Drop)
                | (Method::Injection, ActionKind::Inject)
        )
    }
}

/// Damage as classified in the ground-truth table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DamageClass {
    Weakened,
    Broken,
}

/// Observed damage adds a `None` level for benign and defeated runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedDamage {
    None,
    Weakened,
    Broken,
}

impl ObservedDamage {
    pub fn matches(self, declared: DamageClass) -> bool {
        matches!(
            (self, declared),
            (ObservedDamage::Weakened, DamageClass::Weakened)
                | (ObservedDamage::Broken, DamageClass::Broken)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaxonomyVector {
    pub element: Element,
    pub vulnerability: Vulnerability,
    pub method: Method,
    pub damage: DamageClass,
}

/// One ground-truth row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub id: u32,
    pub name: String,
    #[serde(flatten)]
    pub vector: TaxonomyVector,
    /// Attacks without an implementation, classified under worst-case
    /// assumptions (marked * in the source table).
    #[serde(default)]
    pub assumption_based: bool,
}

static TABLE1: LazyLock<Vec<TableRow>> = LazyLock::new(|| {
    serde_json::from_str(include_str!("../data/table1.json"))
        .expect("embedded ground-truth table parses")
});

pub fn ground_truth_table() -> &'static [TableRow] {
    &TABLE1
}

pub fn table1_row(id: u32) -> Result<&'static TableRow, SimError> {
    TABLE1
        .iter()
        .find(|r| r.id == id)
        .ok_or(SimError::NotFound(id))
}

pub fn table1_vector(id: u32) -> Result<TaxonomyVector, SimError> {
    table1_row(id).map(|r| r.vector)
}

// ---------------------------------------------------------------------------
// Damage evaluation
// ---------------------------------------------------------------------------

fn pref_rank<T: PartialEq>(prefs: &[T], item: &T) -> usize {
    prefs.iter().position(|p| p == item).unwrap_or(prefs.len())
}

fn strictly_less_preferred(outcome: &SessionOutcome) -> Option<String> {
    let negotiated = outcome.negotiated.as_ref()?;
    let honest = outcome.honest_baseline.as_ref()?;

    if let (Some(nv), Some(hv)) = (negotiated.version, honest.version) {
        if nv < hv {
            return Some(format!(
                "version downgraded: {} honest vs {} negotiated",
                hv.as_str(),
                nv.as_str()
            ));
        }
    }
    if honest.layer_present && !negotiated.layer_present {
        return Some("secure layer absent though honestly negotiable".into());
    }
    if let (Some(ns), Some(hs)) = (negotiated.suite, honest.suite) {
        if ns != hs {
            let worse_for_client = pref_rank(&outcome.client_prefs.suites, &ns)
                > pref_rank(&outcome.client_prefs.suites, &hs);
            let worse_for_server = pref_rank(&outcome.server_prefs.suites, &ns)
                > pref_rank(&outcome.server_prefs.suites, &hs);
            if worse_for_client && worse_for_server {
                return Some(format!(
                    "suite downgraded: {} honest vs {} negotiated",
                    hs.as_str(),
                    ns.as_str()
                ));
            }
        }
    }
    if let (Some(ng), Some(hg)) = (negotiated.group, honest.group) {
        if ng != hg {
            let worse_for_client = pref_rank(&outcome.client_prefs.groups, &ng)
                > pref_rank(&outcome.client_prefs.groups, &hg);
            let worse_for_server = pref_rank(&outcome.server_prefs.groups, &ng)
                > pref_rank(&outcome.server_prefs.groups, &hg);
            if worse_for_client && worse_for_server {
                return Some(format!(
                    "group downgraded: {} honest vs {} negotiated",
                    hg.as_str(),
                    ng.as_str()
                ));
            }
        }
    }
    None
}

/// Broken if any security goal carries a witness; Weakened if the session
/// completed in a mode strictly less preferred than the honest agreement;
/// None otherwise.
pub fn evaluate_damage(outcome: &SessionOutcome) -> ObservedDamage {
    if outcome.goals.any_broken() {
        return ObservedDamage::Broken;
    }
    if outcome.completed && strictly_less_preferred(outcome).is_some() {
        return ObservedDamage::Weakened;
    }
    ObservedDamage::None
}

/// Why a damage level was assigned, for reports.
pub fn damage_note(outcome: &SessionOutcome) -> String {
    if let Some(w) = &outcome.goals.secrecy_broken {
        return format!("secrecy: {w}");
    }
    if let Some(w) = &outcome.goals.authentication_broken {
        return format!("authentication: {w}");
    }
    if let Some(w) = &outcome.goals.integrity_broken {
        return format!("integrity: {w}");
    }
    if outcome.completed {
        strictly_less_preferred(outcome).unwrap_or_else(|| "completed at honest mode".into())
    } else {
        match outcome.abort_reason() {
            Some(r) => format!("aborted: {r:?}"),
            None => "did not complete".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub id: u32,
    pub observed_damage: ObservedDamage,
    pub damage_match: bool,
    pub observed_methods: Vec<ActionKind>,
    pub method_match: bool,
    /// Element (and vulnerability) are declared by analysis, not inferred.
    pub element_note: String,
}

/// Compare an executed outcome with the ground-truth row: damage and
/// method are checked mechanically, element is carried declaratively.
pub fn verify_classification(
    id: u32,
    outcome: &SessionOutcome,
) -> Result<ClassificationReport, SimError> {
    let row = table1_row(id)?;
    let observed_damage = evaluate_damage(outcome);
    let observed_methods = outcome.trace.action_kinds_used();
    let method_match = observed_methods.len() == 1
        && row.vector.method.matches_action(observed_methods[0]);
    Ok(ClassificationReport {
        id,
        observed_damage,
        damage_match: observed_damage.matches(row.vector.damage),
        observed_methods,
        method_match,
        element_note: format!(
            "element {:?} and vulnerability {:?} declared by analysis{}",
            row.vector.element,
            row.vector.vulnerability,
            if row.assumption_based {
                "; classified under worst-case assumptions"
            } else {
                ""
            }
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::KnowledgeSet;
    use crate::catalog::{GroupId, SuiteId, VersionId};
    use crate::outcome::{EndpointPrefs, SecurityGoalsRecord, Trace};

    fn outcome_with(
        completed: bool,
        negotiated: Option<NegotiatedMode>,
        honest: Option<NegotiatedMode>,
        goals: SecurityGoalsRecord,
    ) -> SessionOutcome {
        SessionOutcome {
            completed,
            negotiated,
            honest_baseline: honest,
            client_prefs: EndpointPrefs {
                suites: vec![SuiteId::EcdheAead, SuiteId::DheAead, SuiteId::RsaAead],
                groups: vec![GroupId::EcToyA, GroupId::EcToyB],
            },
            server_prefs: EndpointPrefs {
                suites: vec![SuiteId::EcdheAead, SuiteId::DheAead, SuiteId::RsaAead],
                groups: vec![GroupId::EcToyA, GroupId::EcToyB],
            },
            aborted: None,
            goals,
            knowledge: KnowledgeSet::default(),
            trace: Trace::default(),
            client_secrets: None,
            server_secrets: None,
        }
    }

    fn mode(version: VersionId, suite: SuiteId) -> NegotiatedMode {
        NegotiatedMode {
            version: Some(version),
            suite: Some(suite),
            group: None,
            layer_present: true,
        }
    }

    #[test]
    fn table_has_fifteen_rows() {
        assert_eq!(ground_truth_table().len(), 15);
        let broken = ground_truth_table()
            .iter()
            .filter(|r| r.vector.damage == DamageClass::Broken)
            .count();
        assert_eq!(broken, 13);
        for id in [9u32, 15] {
            assert_eq!(table1_vector(id).unwrap().damage, DamageClass::Weakened);
        }
        assert!(matches!(table1_vector(99), Err(SimError::NotFound(99))));
    }

    #[test]
    fn ground_truth_spot_checks() {
        let v10 = table1_vector(10).unwrap();
        assert_eq!(
            (v10.element, v10.vulnerability, v10.method, v10.damage),
            (Element::Algorithm, Vulnerability::Design, Method::Modification, DamageClass::Broken)
        );
        let v09 = table1_vector(9).unwrap();
        assert_eq!(
            (v09.element, v09.vulnerability, v09.method, v09.damage),
            (
                Element::Algorithm,
                Vulnerability::Implementation,
                Method::Dropping,
                DamageClass::Weakened
            )
        );
        let v12 = table1_vector(12).unwrap();
        assert_eq!(
            (v12.element, v12.vulnerability, v12.method, v12.damage),
            (Element::Layer, Vulnerability::TrustModel, Method::Injection, DamageClass::Broken)
        );
        let v06 = table1_vector(6).unwrap();
        assert_eq!(
            (v06.element, v06.vulnerability, v06.method, v06.damage),
            (Element::Version, Vulnerability::Implementation, Method::Dropping, DamageClass::Broken)
        );
        let v15 = table1_vector(15).unwrap();
        assert_eq!(
            (v15.element, v15.vulnerability, v15.method, v15.damage),
            (Element::Algorithm, Vulnerability::Design, Method::Injection, DamageClass::Weakened)
        );
        let v08 = table1_vector(8).unwrap();
        assert_eq!(v08.vulnerability, Vulnerability::TrustModel);
    }

    #[test]
    fn benign_outcome_evaluates_none() {
        let m = mode(VersionId::Tls12, SuiteId::EcdheAead);
        let o = outcome_with(true, Some(m.clone()), Some(m), SecurityGoalsRecord::default());
        assert_eq!(evaluate_damage(&o), ObservedDamage::None);
    }

    #[test]
    fn goal_breakage_dominates() {
        let m = mode(VersionId::Tls12, SuiteId::EcdheAead);
        let o = outcome_with(
            true,
            Some(m.clone()),
            Some(m),
            SecurityGoalsRecord {
                secrecy_broken: Some("plaintext recovered".into()),
                ..Default::default()
            },
        );
        assert_eq!(evaluate_damage(&o), ObservedDamage::Broken);
    }

    #[test]
    fn less_preferred_suite_is_weakened() {
        let o = outcome_with(
            true,
            Some(mode(VersionId::Tls12, SuiteId::RsaAead)),
            Some(mode(VersionId::Tls12, SuiteId::EcdheAead)),
            SecurityGoalsRecord::default(),
        );
        assert_eq!(evaluate_damage(&o), ObservedDamage::Weakened);
    }

    #[test]
    fn aborted_run_is_none() {
        let o = outcome_with(
            false,
            None,
            Some(mode(VersionId::Tls12, SuiteId::EcdheAead)),
            SecurityGoalsRecord::default(),
        );
        assert_eq!(evaluate_damage(&o), ObservedDamage::None);
    }
}
