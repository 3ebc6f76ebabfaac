//! Session outcomes and traces: everything an executed session leaves
//! behind for classification and reporting.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{ActionKind, KnowledgeSet, OracleEvent};
use crate::catalog::{GroupId, SuiteId, VersionId};
use crate::crypto::SecretBundle;
use crate::handshake::{AbortReason, Role};
use crate::msgs::Direction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u32,
    pub attempt: u32,
    pub direction: Direction,
    pub action: ActionKind,
    /// Summary of what was delivered (or of the dropped original).
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edits: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleEvent>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn push(&mut self, event: TraceEvent) {
        self.events.push(event);
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for e in &self.events {
            out.extend_from_slice(&e.seq.to_be_bytes());
            out.extend_from_slice(&e.attempt.to_be_bytes());
            out.push(match e.direction {
                Direction::ClientToServer => 0,
                Direction::ServerToClient => 1,
            });
            out.push(match e.action {
                ActionKind::Forward => 0,
                ActionKind::Drop => 1,
                ActionKind::Modify => 2,
                ActionKind::Inject => 3,
            });
            out.extend_from_slice(e.message.as_bytes());
            for edit in &e.edits {
                out.push(0xfe);
                out.extend_from_slice(edit.as_bytes());
            }
            if let Some(o) = &e.oracle {
                out.push(0xff);
                out.extend_from_slice(format!("{:?}:{}:{}", o.oracle, o.cost_debited, o.success).as_bytes());
            }
        }
        out
    }

    pub fn digest_hex(&self) -> String {
        let d = Sha256::digest(self.canonical_bytes());
        d.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The interception methods actually used (Forward is neutral).
    pub fn action_kinds_used(&self) -> Vec<ActionKind> {
        let mut kinds = Vec::new();
        for e in &self.events {
            if e.action != ActionKind::Forward && !kinds.contains(&e.action) {
                kinds.push(e.action);
            }
        }
        kinds
    }

    pub fn oracle_events(&self) -> impl Iterator<Item = &OracleEvent> {
        self.events.iter().filter_map(|e| e.oracle.as_ref())
    }
}

/// The agreed mode of a completed (or partially agreed) session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegotiatedMode {
    pub version: Option<VersionId>,
    pub suite: Option<SuiteId>,
    pub group: Option<GroupId>,
    /// Whether application data travelled inside the TLS layer end to end.
    pub layer_present: bool,
}

impl NegotiatedMode {
    pub fn empty() -> Self {
        Self {
            version: None,
            suite: None,
            group: None,
            layer_present: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortRecord {
    pub by: Role,
    pub reason: AbortReason,
}

/// Per-goal breakage with a human-readable witness; a goal without a
/// witness is not considered broken.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SecurityGoalsRecord {
    pub secrecy_broken: Option<String>,
    pub integrity_broken: Option<String>,
    pub authentication_broken: Option<String>,
}

impl SecurityGoalsRecord {
    pub fn any_broken(&self) -> bool {
        self.secrecy_broken.is_some()
            || self.integrity_broken.is_some()
            || self.authentication_broken.is_some()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EndpointPrefs {
    pub suites: Vec<SuiteId>,
    pub groups: Vec<GroupId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionOutcome {
    pub completed: bool,
    pub negotiated: Option<NegotiatedMode>,
    /// What the same endpoints agree on with no adversary present.
    pub honest_baseline: Option<NegotiatedMode>,
    pub client_prefs: EndpointPrefs,
    pub server_prefs: EndpointPrefs,
    pub aborted: Option<AbortRecord>,
    pub goals: SecurityGoalsRecord,
    pub knowledge: KnowledgeSet,
    pub trace: Trace,
    #[serde(skip)]
    pub client_secrets: Option<SecretBundle>,
    #[serde(skip)]
    pub server_secrets: Option<SecretBundle>,
}

impl SessionOutcome {
    pub fn abort_reason(&self) -> Option<&AbortReason> {
        self.aborted.as_ref().map(|a| &a.reason)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_digest_is_stable_and_sensitive() {
        let mut t = Trace::default();
        t.push(TraceEvent {
            seq: 1,
            attempt: 0,
            direction: Direction::ClientToServer,
            action: ActionKind::Forward,
            message: "CH".into(),
            edits: vec![],
            oracle: None,
        });
        let d1 = t.digest_hex();
        assert_eq!(d1, t.digest_hex());
        t.push(TraceEvent {
            seq: 2,
            attempt: 0,
            direction: Direction::ServerToClient,
            action: ActionKind::Drop,
            message: "SH".into(),
            edits: vec![],
            oracle: None,
        });
        assert_ne!(d1, t.digest_hex());
        assert_eq!(t.action_kinds_used(), vec![ActionKind::Drop]);
    }
}
