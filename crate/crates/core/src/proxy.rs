//! Proxied-HTTPS trust scenario: the adversary owns a certificate the
//! client may or may not trust, terminates the client's TLS session, and
//! either forwards the data in cleartext or re-encrypts it toward the
//! origin over the weakest suite available. The proxy is the MITM itself;
//! there is no third endpoint process.

use crate::adversary::{Adversary, AdversaryScript, ActionKind};
use crate::app::ProxyBehavior;
use crate::catalog::{SuiteId, VersionId};
use crate::crypto::CollisionTable;
use crate::engine::{proxy_plaintext, run_tls_connection, PersonaMode, Scenario};
use crate::engine_goals::evaluate_goals;
use crate::error::SimError;
use crate::handshake::{CertIdentity, EndpointConfig, Role};
use crate::msgs::Direction;
use crate::outcome::{EndpointPrefs, NegotiatedMode, SessionOutcome, Trace, TraceEvent};

fn persona_server_config(scenario: &Scenario, proxy_issuer: &str) -> EndpointConfig {
    EndpointConfig {
        role: Role::Server,
        version_min: scenario.client.version_min,
        version_max: scenario.client.version_max,
        // mirror the client's preferences: the client-side leg negotiates
        // whatever the client likes best
        suites_by_preference: scenario.client.suites_by_preference.clone(),
        groups_by_preference: scenario.client.groups_by_preference.clone(),
        bug_flags: Default::default(),
        rsa_key: Some(crate::catalog::RsaKeySpec::strong_server(false)),
        identity: Some(CertIdentity {
            subject: "proxy.local".into(),
            issuer: proxy_issuer.to_string(),
        }),
        trust_store: Default::default(),
        policy: Default::default(),
    }
}

/// The weakest suite the origin server accepts, preferring export and
/// null ciphers.
fn weakest_suite(server: &EndpointConfig) -> SuiteId {
    for weak in [
        SuiteId::NullNull,
        SuiteId::RsaExportWeak,
        SuiteId::DheExportCipher,
        SuiteId::RsaExportCipher,
    ] {
        if server.suites_by_preference.contains(&weak) {
            return weak;
        }
    }
    *server
        .suites_by_preference
        .last()
        .expect("validated config has suites")
}

pub(crate) fn run_proxy_session(
    scenario: &Scenario,
    behavior: ProxyBehavior,
    proxy_issuer: &str,
) -> Result<SessionOutcome, SimError> {
    let payload = scenario.app_payload.as_bytes().to_vec();
    let persona = persona_server_config(scenario, proxy_issuer);
    let mut observer = Some(Adversary::new(AdversaryScript::passive(0), None));
    let mut collisions = CollisionTable::default();
    let mut trace = Trace::default();

    let client_leg = run_tls_connection(
        &scenario.client,
        &persona,
        scenario.seed,
        &mut observer,
        &mut collisions,
        &mut trace,
        &payload,
        scenario.app_response.as_bytes(),
        PersonaMode::ServerIsAdversary,
    )?;
    let client_leg_completed =
        client_leg.client.is_established() && client_leg.server.is_established();

    let mut knowledge = observer
        .as_ref()
        .map(|a| a.knowledge.clone())
        .unwrap_or_default();

    let prefs = (
        EndpointPrefs {
            suites: scenario.client.suites_by_preference.clone(),
            groups: scenario.client.groups_by_preference.clone(),
        },
        EndpointPrefs {
            suites: scenario.server.suites_by_preference.clone(),
            groups: scenario.server.groups_by_preference.clone(),
        },
    );

    if !client_leg_completed {
        // certificate rejected (or other failure): no interception happened
        let goals = evaluate_goals(
            false,
            &client_leg,
            &knowledge,
            &payload,
            scenario.app_response.as_bytes(),
            None,
            false,
        );
        return Ok(SessionOutcome {
            completed: false,
            negotiated: None,
            honest_baseline: None,
            client_prefs: prefs.0,
            server_prefs: prefs.1,
            aborted: client_leg.abort.clone(),
            goals,
            knowledge,
            trace,
            client_secrets: client_leg.client.secrets.clone(),
            server_secrets: None,
        });
    }

    // The proxy terminated TLS: it holds the session keys and the payload.
    knowledge
        .plaintexts
        .push(proxy_plaintext(&payload, "terminating proxy held the session keys"));

    let client_mode = client_leg
        .server
        .negotiated
        .or(client_leg.client.negotiated);

    let (negotiated, completed, upstream_abort) = match behavior {
        ProxyBehavior::ForwardPlaintext => {
            trace.push(TraceEvent {
                seq: trace.events.len() as u32 + 1,
                attempt: 0,
                direction: Direction::ClientToServer,
                action: ActionKind::Inject,
                message: format!(
                    "cleartext payload ({} B) injected toward the origin server",
                    payload.len()
                ),
                edits: vec![],
                oracle: None,
            });
            (
                client_mode.map(|n| NegotiatedMode {
                    version: Some(n.version),
                    suite: Some(n.suite),
                    group: n.group,
                    layer_present: false,
                }),
                true,
                None,
            )
        }
        ProxyBehavior::ReencryptWeak => {
            let upstream_client = EndpointConfig {
                role: Role::Client,
                version_min: scenario.server.version_min,
                version_max: scenario.server.version_max.min(VersionId::Tls12),
                suites_by_preference: vec![weakest_suite(&scenario.server)],
                groups_by_preference: scenario.server.groups_by_preference.clone(),
                bug_flags: Default::default(),
                rsa_key: None,
                identity: None,
                trust_store: scenario
                    .server
                    .identity
                    .iter()
                    .map(|i| i.issuer.clone())
                    .collect(),
                policy: Default::default(),
            };
            let upstream = run_tls_connection(
                &upstream_client,
                &scenario.server,
                scenario.seed.wrapping_add(1),
                &mut observer,
                &mut collisions,
                &mut trace,
                &payload,
                scenario.app_response.as_bytes(),
                PersonaMode::ClientIsAdversary,
            )?;
            let up_completed =
                upstream.client.is_established() && upstream.server.is_established();
            let mode = upstream.server.negotiated.or(upstream.client.negotiated).map(|n| {
                NegotiatedMode {
                    version: Some(n.version),
                    suite: Some(n.suite),
                    group: n.group,
                    layer_present: true,
                }
            });
            (mode, up_completed, upstream.abort.clone())
        }
    };

    let mut goals = evaluate_goals(
        completed,
        &client_leg,
        &knowledge,
        &payload,
        scenario.app_response.as_bytes(),
        None,
        true,
    );
    if goals.authentication_broken.is_none() && completed {
        goals.authentication_broken =
            Some("adversary completed the handshake impersonating the server".into());
    }

    Ok(SessionOutcome {
        completed,
        negotiated,
        honest_baseline: None,
        client_prefs: prefs.0,
        server_prefs: prefs.1,
        aborted: upstream_abort.or(client_leg.abort.clone()),
        goals,
        knowledge,
        trace,
        client_secrets: client_leg.client.secrets.clone(),
        server_secrets: client_leg.server.secrets.clone(),
    })
}
