//! The session engine: an in-order simulated network driving both state
//! machines and the adversary to completion or abort.
//!
//! A scenario fixes the endpoint configs, the session kind (plain TLS,
//! SMTP with STARTTLS, or proxied HTTPS), an optional adversary script,
//! and one seed; a run is then fully deterministic. When a script is
//! present the engine first replays the scenario without it to obtain the
//! honest baseline used by the damage evaluator.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::adversary::{
    ActionKind, Adversary, AdversaryScript, Derivation, InterceptOutcome, KnownPlaintext,
};
use crate::app::{ProxyBehavior, SmtpClient, SmtpClientPhase, SmtpServer, SmtpServerPhase};
use crate::catalog::{version_supports_suite, SuiteId};
use crate::crypto::CollisionTable;
use crate::engine_goals::evaluate_goals;
use crate::error::SimError;
use crate::handshake::{
    client_step, recv_app, send_app, server_step, AbortReason, CertIdentity, ClientInput,
    EndpointConfig, EndpointState, HandshakeCtx, OfferConstraints, RetrySpec, Role,
};
use crate::msgs::{Direction, Message};
use crate::outcome::{
    AbortRecord, EndpointPrefs, NegotiatedMode, SecurityGoalsRecord, SessionOutcome, Trace,
    TraceEvent,
};

pub const SCENARIO_SCHEMA: &str = "dgsim.scenario.v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionKind {
    Tls,
    SmtpStartTls {
        server_offers_starttls: bool,
    },
    HttpsProxy {
        behavior: ProxyBehavior,
        proxy_issuer: String,
    },
}

fn default_schema() -> String {
    SCENARIO_SCHEMA.to_string()
}

fn default_response() -> String {
    "250 ok".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub kind: SessionKind,
    pub client: EndpointConfig,
    pub server: EndpointConfig,
    pub seed: u64,
    pub app_payload: String,
    #[serde(default = "default_response")]
    pub app_response: String,
    #[serde(default)]
    pub app_secret: Option<String>,
    #[serde(default)]
    pub script: Option<AdversaryScript>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(SimError::Config(format!(
                "unsupported scenario schema {:?}",
                self.schema
            )));
        }
        self.client.validate().map_err(SimError::Config)?;
        self.server.validate().map_err(SimError::Config)?;
        if self.client.role != Role::Client || self.server.role != Role::Server {
            return Err(SimError::Config("scenario roles are swapped".into()));
        }
        if let Some(secret) = &self.app_secret {
            if !self.app_payload.contains(secret) {
                return Err(SimError::Config(
                    "app_secret must be a substring of app_payload".into(),
                ));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Core delivery loop
// ---------------------------------------------------------------------------

/// Which traffic direction, if any, is adversary-originated impersonation
/// (the proxy personas). Events in that direction are traced as Inject.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum PersonaMode {
    None,
    ServerIsAdversary,
    ClientIsAdversary,
}

impl PersonaMode {
    fn inject_direction(self) -> Option<Direction> {
        match self {
            PersonaMode::None => None,
            PersonaMode::ServerIsAdversary => Some(Direction::ServerToClient),
            PersonaMode::ClientIsAdversary => Some(Direction::ClientToServer),
        }
    }
}

pub(crate) struct TlsRun {
    pub client: EndpointState,
    pub server: EndpointState,
    pub abort: Option<AbortRecord>,
}

enum AppPhase {
    NotStarted,
    ClientSent,
    ServerSent,
}

const MAX_STEPS: u32 = 10_000;
const MAX_ATTEMPTS: u32 = 8;

fn forward_outcome(msg: &Message, direction: Direction) -> InterceptOutcome {
    InterceptOutcome {
        deliveries: vec![(direction, msg.clone())],
        action: ActionKind::Forward,
        edits: vec![],
        oracle: None,
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_tls_connection(
    client_cfg: &EndpointConfig,
    server_cfg: &EndpointConfig,
    seed: u64,
    adversary: &mut Option<Adversary>,
    collisions: &mut CollisionTable,
    trace: &mut Trace,
    payload: &[u8],
    response: &[u8],
    persona: PersonaMode,
) -> Result<TlsRun, SimError> {
    let mut attempt = 0u32;
    let mut constraints = OfferConstraints::default();

    'attempts: loop {
        let mut client = EndpointState::new(Role::Client, seed, attempt);
        let mut server = EndpointState::new(Role::Server, seed, attempt);
        if let Some(adv) = adversary.as_mut() {
            adv.reset_views();
        }
        let mut wire: VecDeque<(Direction, Message)> = VecDeque::new();
        let mut app = AppPhase::NotStarted;

        {
            let ctx = HandshakeCtx { collisions };
            let outs = client_step(&mut client, client_cfg, ClientInput::Start(constraints), &ctx);
            for m in outs {
                wire.push_back((Direction::ClientToServer, m));
            }
        }
        if client.is_failed() {
            return Ok(TlsRun {
                abort: client.aborted.clone().map(|reason| AbortRecord {
                    by: Role::Client,
                    reason,
                }),
                client,
                server,
            });
        }

        let mut steps = 0u32;
        loop {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(SimError::Config("session did not terminate".into()));
            }

            if let Some((direction, msg)) = wire.pop_front() {
                let intercepted = match adversary.as_mut() {
                    Some(adv) => adv.intercept(&msg, direction, collisions)?,
                    None => forward_outcome(&msg, direction),
                };
                let action = if intercepted.action == ActionKind::Forward
                    && persona.inject_direction() == Some(direction)
                {
                    ActionKind::Inject
                } else {
                    intercepted.action
                };
                let message = if intercepted.deliveries.is_empty() {
                    format!("dropped {}", msg.summary())
                } else {
                    intercepted
                        .deliveries
                        .iter()
                        .map(|(_, m)| m.summary())
                        .collect::<Vec<_>>()
                        .join(" | ")
                };
                trace.push(TraceEvent {
                    seq: trace.events.len() as u32 + 1,
                    attempt,
                    direction,
                    action,
                    message,
                    edits: intercepted.edits.clone(),
                    oracle: intercepted.oracle.clone(),
                });

                for (ddir, dmsg) in intercepted.deliveries {
                    let outs = {
                        let ctx = HandshakeCtx { collisions };
                        match ddir {
                            Direction::ClientToServer => {
                                if server.is_established() {
                                    if let Message::AppData(a) = &dmsg {
                                        let _ = recv_app(&mut server, a);
                                        Vec::new()
                                    } else {
                                        server_step(&mut server, server_cfg, &dmsg, &ctx)
                                    }
                                } else {
                                    server_step(&mut server, server_cfg, &dmsg, &ctx)
                                }
                            }
                            Direction::ServerToClient => {
                                if client.is_established() {
                                    if let Message::AppData(a) = &dmsg {
                                        let _ = recv_app(&mut client, a);
                                        Vec::new()
                                    } else {
                                        client_step(
                                            &mut client,
                                            client_cfg,
                                            ClientInput::Incoming(&dmsg),
                                            &ctx,
                                        )
                                    }
                                } else {
                                    client_step(
                                        &mut client,
                                        client_cfg,
                                        ClientInput::Incoming(&dmsg),
                                        &ctx,
                                    )
                                }
                            }
                        }
                    };
                    let out_dir = match ddir {
                        Direction::ClientToServer => Direction::ServerToClient,
                        Direction::ServerToClient => Direction::ClientToServer,
                    };
                    for m in outs {
                        wire.push_back((out_dir, m));
                    }

                    if server.is_failed() {
                        return Ok(TlsRun {
                            abort: server.aborted.clone().map(|reason| AbortRecord {
                                by: Role::Server,
                                reason,
                            }),
                            client,
                            server,
                        });
                    }
                    if client.is_failed() {
                        if let Some(retry) = client.retry {
                            if attempt + 1 < MAX_ATTEMPTS {
                                apply_retry(&mut constraints, retry);
                                attempt += 1;
                                continue 'attempts;
                            }
                        }
                        return Ok(TlsRun {
                            abort: client.aborted.clone().map(|reason| AbortRecord {
                                by: Role::Client,
                                reason,
                            }),
                            client,
                            server,
                        });
                    }
                }
            } else {
                // quiescent network
                if client.is_established() && server.is_established() {
                    match app {
                        AppPhase::NotStarted => {
                            let m = send_app(&mut client, payload);
                            wire.push_back((Direction::ClientToServer, m));
                            app = AppPhase::ClientSent;
                        }
                        AppPhase::ClientSent => {
                            if server.app_received.is_empty() {
                                // payload never arrived; nothing to answer
                                return Ok(TlsRun { client, server, abort: None });
                            }
                            let m = send_app(&mut server, response);
                            wire.push_back((Direction::ServerToClient, m));
                            app = AppPhase::ServerSent;
                        }
                        AppPhase::ServerSent => {
                            return Ok(TlsRun { client, server, abort: None });
                        }
                    }
                } else if client.in_flight() {
                    let retry_and_abort = {
                        let ctx = HandshakeCtx { collisions };
                        client_step(&mut client, client_cfg, ClientInput::Timeout, &ctx);
                        (client.retry, client.aborted.clone())
                    };
                    match retry_and_abort {
                        (Some(retry), _) if attempt + 1 < MAX_ATTEMPTS => {
                            apply_retry(&mut constraints, retry);
                            attempt += 1;
                            continue 'attempts;
                        }
                        (_, reason) => {
                            return Ok(TlsRun {
                                abort: reason.map(|reason| AbortRecord {
                                    by: Role::Client,
                                    reason,
                                }),
                                client,
                                server,
                            });
                        }
                    }
                } else if server.in_flight() {
                    // client done or failed while the server still waits
                    return Ok(TlsRun {
                        abort: Some(AbortRecord {
                            by: Role::Server,
                            reason: AbortReason::HandshakeTimeout,
                        }),
                        client,
                        server,
                    });
                } else {
                    let abort = client
                        .aborted
                        .clone()
                        .map(|reason| AbortRecord { by: Role::Client, reason })
                        .or_else(|| {
                            server.aborted.clone().map(|reason| AbortRecord {
                                by: Role::Server,
                                reason,
                            })
                        });
                    return Ok(TlsRun { client, server, abort });
                }
            }
        }
    }
}

fn apply_retry(constraints: &mut OfferConstraints, retry: RetrySpec) {
    match retry {
        RetrySpec::LowerVersion(v) => constraints.vmax_cap = Some(v),
        RetrySpec::DropForwardSecrecy => constraints.exclude_forward_secret = true,
    }
}

// ---------------------------------------------------------------------------
// Session assembly
// ---------------------------------------------------------------------------

fn prefs_of(cfg: &EndpointConfig) -> EndpointPrefs {
    EndpointPrefs {
        suites: cfg.suites_by_preference.clone(),
        groups: cfg.groups_by_preference.clone(),
    }
}

fn negotiated_mode(run: &TlsRun, layer_present: bool) -> Option<NegotiatedMode> {
    let n = run.server.negotiated.or(run.client.negotiated)?;
    Some(NegotiatedMode {
        version: Some(n.version),
        suite: Some(n.suite),
        group: n.group,
        layer_present,
    })
}

pub fn run_session(scenario: &Scenario) -> Result<SessionOutcome, SimError> {
    scenario.validate()?;
    let honest_baseline = if scenario.script.is_some() {
        let honest = Scenario {
            script: None,
            ..scenario.clone()
        };
        run_session(&honest)?.negotiated
    } else {
        None
    };

    let mut outcome = match &scenario.kind {
        SessionKind::Tls => run_tls_session(scenario)?,
        SessionKind::SmtpStartTls { server_offers_starttls } => {
            run_smtp_session(scenario, *server_offers_starttls)?
        }
        SessionKind::HttpsProxy { behavior, proxy_issuer } => {
            crate::proxy::run_proxy_session(scenario, *behavior, proxy_issuer)?
        }
    };
    outcome.honest_baseline = honest_baseline.or_else(|| outcome.negotiated.clone());
    Ok(outcome)
}

fn run_tls_session(scenario: &Scenario) -> Result<SessionOutcome, SimError> {
    let mut adversary = scenario
        .script
        .clone()
        .map(|s| Adversary::new(s, scenario.app_secret.clone().map(|s| s.into_bytes())));
    let mut collisions = CollisionTable::default();
    let mut trace = Trace::default();

    let run = run_tls_connection(
        &scenario.client,
        &scenario.server,
        scenario.seed,
        &mut adversary,
        &mut collisions,
        &mut trace,
        scenario.app_payload.as_bytes(),
        scenario.app_response.as_bytes(),
        PersonaMode::None,
    )?;

    let completed = run.client.is_established() && run.server.is_established();
    let negotiated = negotiated_mode(&run, completed);
    let knowledge = adversary
        .as_ref()
        .map(|a| a.knowledge.clone())
        .unwrap_or_default();
    let goals = evaluate_goals(
        completed,
        &run,
        &knowledge,
        scenario.app_payload.as_bytes(),
        scenario.app_response.as_bytes(),
        scenario.app_secret.as_deref().map(str::as_bytes),
        false,
    );

    Ok(SessionOutcome {
        completed,
        negotiated,
        honest_baseline: None,
        client_prefs: prefs_of(&scenario.client),
        server_prefs: prefs_of(&scenario.server),
        aborted: run.abort.clone(),
        goals,
        knowledge,
        trace,
        client_secrets: run.client.secrets.clone(),
        server_secrets: run.server.secrets.clone(),
    })
}

// ---------------------------------------------------------------------------
// SMTP with STARTTLS
// ---------------------------------------------------------------------------

fn run_smtp_session(scenario: &Scenario, server_offers: bool) -> Result<SessionOutcome, SimError> {
    let mut adversary = scenario
        .script
        .clone()
        .map(|s| Adversary::new(s, scenario.app_secret.clone().map(|s| s.into_bytes())));
    let mut collisions = CollisionTable::default();
    let mut trace = Trace::default();
    let payload = scenario.app_payload.as_bytes().to_vec();

    let (mut sc, ehlo) = SmtpClient::start();
    let mut ss = SmtpServer::new(server_offers);
    let mut wire: VecDeque<(Direction, Message)> = VecDeque::new();
    wire.push_back((Direction::ClientToServer, ehlo));

    let mut abort: Option<AbortRecord> = None;
    let mut steps = 0u32;

    while let Some((direction, msg)) = wire.pop_front() {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(SimError::Config("smtp session did not terminate".into()));
        }
        let intercepted = match adversary.as_mut() {
            Some(adv) => adv.intercept(&msg, direction, &mut collisions)?,
            None => forward_outcome(&msg, direction),
        };
        let message = if intercepted.deliveries.is_empty() {
            format!("dropped {}", msg.summary())
        } else {
            intercepted
                .deliveries
                .iter()
                .map(|(_, m)| m.summary())
                .collect::<Vec<_>>()
                .join(" | ")
        };
        trace.push(TraceEvent {
            seq: trace.events.len() as u32 + 1,
            attempt: 0,
            direction,
            action: intercepted.action,
            message,
            edits: intercepted.edits.clone(),
            oracle: intercepted.oracle.clone(),
        });

        for (ddir, dmsg) in intercepted.deliveries {
            let smtp = match &dmsg {
                Message::Smtp(s) => s.clone(),
                other => {
                    return Err(SimError::Config(format!(
                        "non-smtp message {:?} before the tls upgrade",
                        other.kind()
                    )))
                }
            };
            let outs = match ddir {
                Direction::ClientToServer => ss.step(&smtp),
                Direction::ServerToClient => sc.step(&smtp, scenario.client.policy, &payload),
            };
            let out_dir = ddir.flip();
            for m in outs {
                wire.push_back((out_dir, m));
            }
        }

        if let Some(reason) = sc.aborted.clone() {
            abort = Some(AbortRecord { by: Role::Client, reason });
            break;
        }
        if let Some(reason) = ss.aborted.clone() {
            abort = Some(AbortRecord { by: Role::Server, reason });
            break;
        }
        if sc.phase == SmtpClientPhase::UpgradeTls && ss.phase == SmtpServerPhase::UpgradeTls {
            break;
        }
    }

    // Upgrade negotiated: the TLS handshake takes over on the same wire.
    if sc.phase == SmtpClientPhase::UpgradeTls && ss.phase == SmtpServerPhase::UpgradeTls {
        let run = run_tls_connection(
            &scenario.client,
            &scenario.server,
            scenario.seed,
            &mut adversary,
            &mut collisions,
            &mut trace,
            &payload,
            scenario.app_response.as_bytes(),
            PersonaMode::None,
        )?;
        let completed = run.client.is_established() && run.server.is_established();
        let negotiated = negotiated_mode(&run, completed);
        let knowledge = adversary
            .as_ref()
            .map(|a| a.knowledge.clone())
            .unwrap_or_default();
        let goals = evaluate_goals(
            completed,
            &run,
            &knowledge,
            &payload,
            scenario.app_response.as_bytes(),
            scenario.app_secret.as_deref().map(str::as_bytes),
            false,
        );
        return Ok(SessionOutcome {
            completed,
            negotiated,
            honest_baseline: None,
            client_prefs: prefs_of(&scenario.client),
            server_prefs: prefs_of(&scenario.server),
            aborted: run.abort.clone(),
            goals,
            knowledge,
            trace,
            client_secrets: run.client.secrets.clone(),
            server_secrets: run.server.secrets.clone(),
        });
    }

    // No tunnel: either plaintext mail went through (fail open) or the
    // session aborted (fail closed / protocol error).
    let plain_delivered = ss.phase == SmtpServerPhase::ReceivedPlain;
    let completed = plain_delivered && abort.is_none();
    let knowledge = adversary
        .as_ref()
        .map(|a| a.knowledge.clone())
        .unwrap_or_default();
    let mut goals = SecurityGoalsRecord::default();
    if knowledge.has_plaintext_containing(&payload) {
        goals.secrecy_broken = Some(
            "mail payload observed in cleartext after the secure layer was stripped".into(),
        );
    }
    Ok(SessionOutcome {
        completed,
        negotiated: completed.then(|| NegotiatedMode {
            version: None,
            suite: None,
            group: None,
            layer_present: false,
        }),
        honest_baseline: None,
        client_prefs: prefs_of(&scenario.client),
        server_prefs: prefs_of(&scenario.server),
        aborted: abort,
        goals,
        knowledge,
        trace,
        client_secrets: None,
        server_secrets: None,
    })
}

// ---------------------------------------------------------------------------
// Scenario builders used by tests and the attack registry
// ---------------------------------------------------------------------------

/// A benign TLS scenario pinned to exactly one (version, suite) pair.
pub fn benign_pair_scenario(
    version: crate::catalog::VersionId,
    suite: SuiteId,
    seed: u64,
) -> Scenario {
    use crate::catalog::{GroupId, RsaKeySpec, VersionId};
    debug_assert!(version_supports_suite(version, suite));
    let groups = vec![GroupId::EcToyA, GroupId::EcToyB, GroupId::DhStrong, GroupId::DhExport];
    let client = EndpointConfig {
        role: Role::Client,
        version_min: version,
        version_max: version,
        suites_by_preference: vec![suite],
        groups_by_preference: groups.clone(),
        bug_flags: Default::default(),
        rsa_key: None,
        identity: None,
        trust_store: [String::from("sim-ca")].into(),
        policy: Default::default(),
    };
    let server = EndpointConfig {
        role: Role::Server,
        version_min: version.min(VersionId::Ssl20).max(version),
        version_max: version,
        suites_by_preference: vec![suite],
        groups_by_preference: groups,
        bug_flags: Default::default(),
        rsa_key: Some(RsaKeySpec::strong_server(false)),
        identity: Some(CertIdentity {
            subject: "server.sim".into(),
            issuer: "sim-ca".into(),
        }),
        trust_store: Default::default(),
        policy: Default::default(),
    };
    Scenario {
        schema: SCENARIO_SCHEMA.into(),
        kind: SessionKind::Tls,
        client,
        server,
        seed,
        app_payload: "GET /inbox token=tok_4412".into(),
        app_response: default_response(),
        app_secret: None,
        script: None,
    }
}

/// Proxy-owned plaintext knowledge entry, attached by the proxy runner.
pub(crate) fn proxy_plaintext(payload: &[u8], detail: &str) -> KnownPlaintext {
    KnownPlaintext {
        value: payload.to_vec(),
        derivation: Derivation::ProxyTermination {
            detail: detail.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::VersionId;
    use crate::taxonomy::{evaluate_damage, ObservedDamage};

    #[test]
    fn benign_tls12_completes_with_equal_bundles() {
        let scenario = benign_pair_scenario(VersionId::Tls12, SuiteId::EcdheAead, 7);
        let out = run_session(&scenario).unwrap();
        assert!(out.completed, "abort: {:?}", out.aborted);
        assert_eq!(out.client_secrets, out.server_secrets);
        assert_eq!(evaluate_damage(&out), ObservedDamage::None);
        let n = out.negotiated.unwrap();
        assert_eq!(n.version, Some(VersionId::Tls12));
        assert_eq!(n.suite, Some(SuiteId::EcdheAead));
    }

    #[test]
    fn benign_ssl2_completes_without_finished() {
        let scenario = benign_pair_scenario(VersionId::Ssl20, SuiteId::NullNull, 7);
        let out = run_session(&scenario).unwrap();
        assert!(out.completed, "abort: {:?}", out.aborted);
        assert_eq!(out.client_secrets, out.server_secrets);
    }

    #[test]
    fn passive_adversary_preserves_outcome() {
        let mut scenario = benign_pair_scenario(VersionId::Tls12, SuiteId::EcdheAead, 9);
        let baseline = run_session(&scenario).unwrap();
        scenario.script = Some(AdversaryScript::passive(0));
        let observed = run_session(&scenario).unwrap();
        assert_eq!(baseline.completed, observed.completed);
        assert_eq!(baseline.negotiated, observed.negotiated);
        assert_eq!(baseline.client_secrets, observed.client_secrets);
        assert_eq!(baseline.goals, observed.goals);
        assert!(!observed.knowledge.observed.is_empty());
        assert!(observed.knowledge.secrets.is_empty());
    }

    #[test]
    fn deterministic_same_seed_same_trace() {
        let scenario = benign_pair_scenario(VersionId::Tls13Final, SuiteId::Tls13Aead, 11);
        let a = run_session(&scenario).unwrap();
        let b = run_session(&scenario).unwrap();
        assert_eq!(a.trace.digest_hex(), b.trace.digest_hex());
        assert_eq!(a.client_secrets, b.client_secrets);
    }

    #[test]
    fn different_seeds_differ() {
        let a = run_session(&benign_pair_scenario(VersionId::Tls12, SuiteId::DheAead, 1)).unwrap();
        let b = run_session(&benign_pair_scenario(VersionId::Tls12, SuiteId::DheAead, 2)).unwrap();
        assert_ne!(a.client_secrets, b.client_secrets);
    }
}
