//! Registry of the fifteen surveyed downgrade attacks. Each entry is a
//! checked-in JSON file bundling the adversary script, the vulnerable and
//! patched endpoint configurations, the declared taxonomy vector, and
//! assumption notes for the attacks that were never implemented in the
//! wild. The matrix runner executes the registry from this data, not from
//! code constants.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::adversary::ActionKind;
use crate::engine::Scenario;
use crate::error::SimError;
use crate::taxonomy::{table1_row, TaxonomyVector};

pub const ATTACK_SCHEMA: &str = "dgsim.attack.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub schema: String,
    pub id: u32,
    pub name: String,
    pub vector: TaxonomyVector,
    /// Worst-case assumptions for attacks without a published exploit.
    #[serde(default)]
    pub assumption_notes: Vec<String>,
    /// What the patched scenario changes, in words.
    pub patch_note: String,
    /// JSON-pointer paths (into the scenario) the patch is allowed to touch.
    #[serde(default)]
    pub patch_fields: Vec<String>,
    pub vulnerable: Scenario,
    pub patched: Scenario,
}

impl AttackSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.schema != ATTACK_SCHEMA {
            return Err(format!("attack {}: bad schema {}", self.id, self.schema));
        }
        let row = table1_row(self.id).map_err(|e| e.to_string())?;
        if row.vector != self.vector {
            return Err(format!(
                "attack {}: declared vector deviates from the ground-truth table",
                self.id
            ));
        }
        if row.assumption_based && self.assumption_notes.is_empty() {
            return Err(format!(
                "attack {}: assumption-based rows need assumption notes",
                self.id
            ));
        }
        self.vulnerable.validate().map_err(|e| e.to_string())?;
        self.patched.validate().map_err(|e| e.to_string())?;

        // the script may only use the interception method the row declares
        if let Some(script) = &self.vulnerable.script {
            let kinds = script.action_kinds();
            for k in &kinds {
                if !self.vector.method.matches_action(*k) {
                    return Err(format!(
                        "attack {}: script uses {:?} but declares {:?}",
                        self.id, k, self.vector.method
                    ));
                }
            }
            if kinds.is_empty() {
                return Err(format!("attack {}: script never intervenes", self.id));
            }
        }

        // patch minimality: the two scenarios differ exactly in the
        // documented fields
        let v = serde_json::to_value(&self.vulnerable).map_err(|e| e.to_string())?;
        let p = serde_json::to_value(&self.patched).map_err(|e| e.to_string())?;
        let mut diff = Vec::new();
        json_diff_paths(&v, &p, String::new(), &mut diff);
        let mut declared = self.patch_fields.clone();
        declared.sort();
        diff.sort();
        if diff != declared {
            return Err(format!(
                "attack {}: patch touches {:?} but documents {:?}",
                self.id, diff, declared
            ));
        }
        Ok(())
    }

    pub fn expected_action(&self) -> ActionKind {
        match self.vector.method {
            crate::taxonomy::Method::Modification => ActionKind::Modify,
            crate::taxonomy::Method::Dropping => ActionKind::Drop,
            crate::taxonomy::Method::Injection => ActionKind::Inject,
        }
    }
}

/// Paths where two JSON documents differ. Objects recurse; arrays and
/// scalars report the whole path.
fn json_diff_paths(a: &Value, b: &Value, path: String, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(ma), Value::Object(mb)) => {
            let mut keys: Vec<&String> = ma.keys().chain(mb.keys()).collect();
            keys.sort();
            keys.dedup();
            for k in keys {
                let pa = ma.get(k).unwrap_or(&Value::Null);
                let pb = mb.get(k).unwrap_or(&Value::Null);
                json_diff_paths(pa, pb, format!("{path}/{k}"), out);
            }
        }
        _ => {
            if a != b {
                out.push(path);
            }
        }
    }
}

static REGISTRY: LazyLock<Vec<AttackSpec>> = LazyLock::new(|| {
    let files: [&str; 15] = [
        include_str!("../data/attacks/attack_01.json"),
        include_str!("../data/attacks/attack_02.json"),
        include_str!("../data/attacks/attack_03.json"),
        include_str!("../data/attacks/attack_04.json"),
        include_str!("../data/attacks/attack_05.json"),
        include_str!("../data/attacks/attack_06.json"),
        include_str!("../data/attacks/attack_07.json"),
        include_str!("../data/attacks/attack_08.json"),
        include_str!("../data/attacks/attack_09.json"),
        include_str!("../data/attacks/attack_10.json"),
        include_str!("../data/attacks/attack_11.json"),
        include_str!("../data/attacks/attack_12.json"),
        include_str!("../data/attacks/attack_13.json"),
        include_str!("../data/attacks/attack_14.json"),
        include_str!("../data/attacks/attack_15.json"),
    ];
    let mut specs: Vec<AttackSpec> = files
        .iter()
        .map(|f| serde_json::from_str(f).expect("attack file parses"))
        .collect();
    specs.sort_by_key(|s| s.id);
    specs
});

pub fn all_attacks() -> &'static [AttackSpec] {
    &REGISTRY
}

pub fn get_attack(id: u32) -> Result<&'static AttackSpec, SimError> {
    REGISTRY
        .iter()
        .find(|a| a.id == id)
        .ok_or(SimError::NotFound(id))
}

pub fn vulnerable_scenario(id: u32) -> Result<Scenario, SimError> {
    Ok(get_attack(id)?.vulnerable.clone())
}

pub fn patched_scenario(id: u32) -> Result<Scenario, SimError> {
    Ok(get_attack(id)?.patched.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::handshake::BugFlag;
    use crate::taxonomy::{DamageClass, Element, Method, Vulnerability};

    #[test]
    fn registry_has_fifteen_valid_entries() {
        let attacks = all_attacks();
        assert_eq!(attacks.len(), 15);
        for (i, a) in attacks.iter().enumerate() {
            assert_eq!(a.id as usize, i + 1);
            a.validate().unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn unknown_id_is_not_found() {
        assert!(matches!(get_attack(0), Err(SimError::NotFound(0))));
        assert!(matches!(get_attack(16), Err(SimError::NotFound(16))));
    }

    #[test]
    fn declared_vectors_match_spot_checks() {
        let a10 = get_attack(10).unwrap();
        assert_eq!(a10.vector.element, Element::Algorithm);
        assert_eq!(a10.vector.vulnerability, Vulnerability::Design);
        assert_eq!(a10.vector.method, Method::Modification);
        assert_eq!(a10.vector.damage, DamageClass::Broken);

        let a09 = get_attack(9).unwrap();
        assert_eq!(a09.vector.method, Method::Dropping);
        assert_eq!(a09.vector.damage, DamageClass::Weakened);

        let a12 = get_attack(12).unwrap();
        assert_eq!(a12.vector.element, Element::Layer);
        assert_eq!(a12.vector.vulnerability, Vulnerability::TrustModel);
        assert_eq!(a12.vector.method, Method::Injection);
    }

    #[test]
    fn scenario_flags_match_attack_requirements() {
        assert!(get_attack(7)
            .unwrap()
            .vulnerable
            .client
            .has_bug(BugFlag::AcceptsSkeInRsa));
        assert!(!get_attack(7)
            .unwrap()
            .patched
            .client
            .has_bug(BugFlag::AcceptsSkeInRsa));
        for id in [6, 14] {
            assert!(get_attack(id)
                .unwrap()
                .vulnerable
                .client
                .has_bug(BugFlag::DowngradeDance));
        }
        let drown = get_attack(8).unwrap();
        assert!(drown.vulnerable.server.rsa_key.as_ref().unwrap().shared_with_sslv2);
        assert!(!drown.patched.server.rsa_key.as_ref().unwrap().shared_with_sslv2);
        assert!(get_attack(10)
            .unwrap()
            .vulnerable
            .client
            .has_bug(BugFlag::AcceptsArbitraryGroups));
        // 13: both ends draft-10, no sentinel
        let a13 = get_attack(13).unwrap();
        assert_eq!(a13.vulnerable.server.version_max, crate::VersionId::Tls13Draft10);
        assert_eq!(a13.patched.server.version_max, crate::VersionId::Tls13Final);
    }
}
