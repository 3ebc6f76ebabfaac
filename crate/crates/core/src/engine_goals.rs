//! Turns an executed run plus the adversary's knowledge into the per-goal
//! breakage record. Every broken goal carries a witness string naming the
//! evidence; no witness, no breakage.

use crate::adversary::KnowledgeSet;
use crate::engine::TlsRun;
use crate::outcome::SecurityGoalsRecord;

pub(crate) fn evaluate_goals(
    completed: bool,
    run: &TlsRun,
    knowledge: &KnowledgeSet,
    payload: &[u8],
    response: &[u8],
    app_secret: Option<&[u8]>,
    adversary_is_endpoint: bool,
) -> SecurityGoalsRecord {
    let mut goals = SecurityGoalsRecord::default();

    // Secrecy: the adversary holds plaintext of transmitted application
    // data (or the configured secret substring of it).
    let mut secrecy_hit = None;
    for p in &knowledge.plaintexts {
        let hits_payload = !payload.is_empty()
            && p.value.windows(payload.len()).any(|w| w == payload);
        let hits_response = !response.is_empty()
            && p.value.windows(response.len()).any(|w| w == response);
        let hits_secret = app_secret
            .map(|s| !s.is_empty() && p.value.windows(s.len()).any(|w| w == s) || s == p.value.as_slice())
            .unwrap_or(false);
        let contained_in_payload = !p.value.is_empty()
            && payload.windows(p.value.len().min(payload.len())).any(|w| w == p.value.as_slice());
        if hits_payload || hits_response || hits_secret || contained_in_payload {
            secrecy_hit = Some(format!(
                "application plaintext known to the adversary via {:?}",
                p.derivation
            ));
            break;
        }
    }
    goals.secrecy_broken = secrecy_hit;

    if completed {
        // Integrity: both ends finished while holding different transcripts,
        // or a receiver accepted application data its peer never sent.
        if run.client.transcript != run.server.transcript {
            goals.integrity_broken =
                Some("session completed over diverging handshake transcripts".into());
        } else if run
            .server
            .app_received
            .iter()
            .any(|m| !run.client.app_sent.contains(m))
            || run
                .client
                .app_received
                .iter()
                .any(|m| !run.server.app_sent.contains(m))
        {
            goals.integrity_broken = Some("altered application data accepted".into());
        }

        // Authentication: an accepted Finished the peer never produced, or
        // the adversary completed the handshake as an endpoint.
        if knowledge.forged.iter().any(|f| f.contains("finished")) {
            goals.authentication_broken =
                Some("endpoint accepted an adversary-forged finished MAC".into());
        } else if adversary_is_endpoint {
            goals.authentication_broken =
                Some("adversary completed the handshake impersonating the server".into());
        }
    }

    goals
}
