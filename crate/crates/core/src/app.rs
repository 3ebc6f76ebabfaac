//! Application layer: minimal SMTP/STARTTLS negotiation and the proxied
//! HTTPS trust scenario.
//!
//! SMTP is just enough protocol to express the upgrade negotiation: EHLO,
//! a capability list, the STARTTLS command, and either a TLS tunnel or a
//! plaintext mail depending on the client's fail-open/fail-closed policy.

use serde::{Deserialize, Serialize};

use crate::handshake::{AbortReason, PolicyMode};
use crate::msgs::{Message, SmtpMessage, STARTTLS_VERB};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyBehavior {
    /// The proxy terminates TLS and sends the client's data onward in
    /// cleartext.
    ForwardPlaintext,
    /// The proxy re-encrypts toward the origin, offering only the weakest
    /// suite it knows.
    ReencryptWeak,
}

// ---------------------------------------------------------------------------
// SMTP client
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmtpClientPhase {
    Idle,
    AwaitCapabilities,
    AwaitReady,
    /// STARTTLS accepted; the TLS handshake takes over.
    UpgradeTls,
    /// Fail-open path: mail already sent in the clear.
    SentPlain,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SmtpClient {
    pub phase: SmtpClientPhase,
    pub aborted: Option<AbortReason>,
}

impl SmtpClient {
    pub fn start() -> (Self, Message) {
        (
            Self {
                phase: SmtpClientPhase::AwaitCapabilities,
                aborted: None,
            },
            Message::Smtp(SmtpMessage::Ehlo),
        )
    }

    fn fail(&mut self, reason: AbortReason) -> Vec<Message> {
        self.aborted = Some(reason);
        self.phase = SmtpClientPhase::Failed;
        Vec::new()
    }

    /// Fail-open clients fall back to plaintext mail when the upgrade is
    /// unavailable; fail-closed clients abort.
    fn upgrade_unavailable(&mut self, policy: PolicyMode, payload: &[u8]) -> Vec<Message> {
        match policy {
            PolicyMode::FailOpen => {
                self.phase = SmtpClientPhase::SentPlain;
                vec![Message::Smtp(SmtpMessage::PlainMail {
                    payload: payload.to_vec(),
                })]
            }
            PolicyMode::FailClosed => self.fail(AbortReason::UpgradeUnavailable),
        }
    }

    pub fn step(&mut self, msg: &SmtpMessage, policy: PolicyMode, payload: &[u8]) -> Vec<Message> {
        match (self.phase, msg) {
            (SmtpClientPhase::AwaitCapabilities, SmtpMessage::Capabilities { starttls, .. }) => {
                if *starttls {
                    self.phase = SmtpClientPhase::AwaitReady;
                    vec![Message::Smtp(SmtpMessage::StartTls {
                        verb: STARTTLS_VERB.to_string(),
                    })]
                } else {
                    self.upgrade_unavailable(policy, payload)
                }
            }
            (SmtpClientPhase::AwaitReady, SmtpMessage::ReadyForTls) => {
                self.phase = SmtpClientPhase::UpgradeTls;
                Vec::new()
            }
            (SmtpClientPhase::AwaitReady, SmtpMessage::Rejected) => {
                self.upgrade_unavailable(policy, payload)
            }
            (_, other) => self.fail(AbortReason::ProtocolError(format!(
                "unexpected smtp message {other:?}"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// SMTP server
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmtpServerPhase {
    AwaitEhlo,
    AwaitCommand,
    /// Sent ReadyForTls; the TLS handshake takes over.
    UpgradeTls,
    ReceivedPlain,
    Failed,
}

#[derive(Debug, Clone)]
pub struct SmtpServer {
    pub phase: SmtpServerPhase,
    pub offers_starttls: bool,
    pub plain_mail: Vec<Vec<u8>>,
    pub aborted: Option<AbortReason>,
}

impl SmtpServer {
    pub fn new(offers_starttls: bool) -> Self {
        Self {
            phase: SmtpServerPhase::AwaitEhlo,
            offers_starttls,
            plain_mail: Vec::new(),
            aborted: None,
        }
    }

    fn fail(&mut self, reason: AbortReason) -> Vec<Message> {
        self.aborted = Some(reason);
        self.phase = SmtpServerPhase::Failed;
        Vec::new()
    }

    pub fn step(&mut self, msg: &SmtpMessage) -> Vec<Message> {
        match (self.phase, msg) {
            (SmtpServerPhase::AwaitEhlo, SmtpMessage::Ehlo) => {
                self.phase = SmtpServerPhase::AwaitCommand;
                vec![Message::Smtp(SmtpMessage::Capabilities {
                    starttls: self.offers_starttls,
                    others: vec!["SIZE".into(), "8BITMIME".into()],
                })]
            }
            (SmtpServerPhase::AwaitCommand, SmtpMessage::StartTls { verb }) => {
                if verb == STARTTLS_VERB && self.offers_starttls {
                    self.phase = SmtpServerPhase::UpgradeTls;
                    vec![Message::Smtp(SmtpMessage::ReadyForTls)]
                } else {
                    // unknown verb or unsupported upgrade
                    vec![Message::Smtp(SmtpMessage::Rejected)]
                }
            }
            (SmtpServerPhase::AwaitCommand, SmtpMessage::PlainMail { payload }) => {
                self.plain_mail.push(payload.clone());
                self.phase = SmtpServerPhase::ReceivedPlain;
                Vec::new()
            }
            (_, other) => self.fail(AbortReason::ProtocolError(format!(
                "unexpected smtp message {other:?}"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msgs::MsgKind;

    fn as_smtp(m: &Message) -> &SmtpMessage {
        match m {
            Message::Smtp(s) => s,
            other => panic!("expected smtp message, got {other:?}"),
        }
    }

    #[test]
    fn honest_flow_reaches_upgrade() {
        let (mut client, ehlo) = SmtpClient::start();
        let mut server = SmtpServer::new(true);
        let caps = server.step(as_smtp(&ehlo));
        let cmd = client.step(as_smtp(&caps[0]), PolicyMode::FailClosed, b"mail");
        assert_eq!(cmd[0].kind(), MsgKind::SmtpStartTls);
        let ready = server.step(as_smtp(&cmd[0]));
        assert_eq!(ready[0].kind(), MsgKind::SmtpReadyForTls);
        let out = client.step(as_smtp(&ready[0]), PolicyMode::FailClosed, b"mail");
        assert!(out.is_empty());
        assert_eq!(client.phase, SmtpClientPhase::UpgradeTls);
        assert_eq!(server.phase, SmtpServerPhase::UpgradeTls);
    }

    #[test]
    fn stripped_capability_fail_open_sends_plain() {
        let (mut client, _) = SmtpClient::start();
        let stripped = SmtpMessage::Capabilities {
            starttls: false,
            others: vec![],
        };
        let out = client.step(&stripped, PolicyMode::FailOpen, b"secret mail");
        assert_eq!(out[0].kind(), MsgKind::SmtpPlainMail);
        assert_eq!(client.phase, SmtpClientPhase::SentPlain);
    }

    #[test]
    fn stripped_capability_fail_closed_aborts() {
        let (mut client, _) = SmtpClient::start();
        let stripped = SmtpMessage::Capabilities {
            starttls: false,
            others: vec![],
        };
        let out = client.step(&stripped, PolicyMode::FailClosed, b"secret mail");
        assert!(out.is_empty());
        assert_eq!(client.aborted, Some(AbortReason::UpgradeUnavailable));
    }

    #[test]
    fn corrupted_verb_is_rejected_then_policy_applies() {
        let mut server = SmtpServer::new(true);
        server.step(&SmtpMessage::Ehlo);
        let rejected = server.step(&SmtpMessage::StartTls {
            verb: "XTARTTLS".into(),
        });
        assert_eq!(rejected[0].kind(), MsgKind::SmtpRejected);

        let (mut client, _) = SmtpClient::start();
        client.step(
            &SmtpMessage::Capabilities { starttls: true, others: vec![] },
            PolicyMode::FailOpen,
            b"m",
        );
        let out = client.step(&SmtpMessage::Rejected, PolicyMode::FailOpen, b"m");
        assert_eq!(out[0].kind(), MsgKind::SmtpPlainMail);
    }

    #[test]
    fn phase_violation_aborts() {
        let (mut client, _) = SmtpClient::start();
        client.step(&SmtpMessage::ReadyForTls, PolicyMode::FailClosed, b"m");
        assert!(matches!(client.aborted, Some(AbortReason::ProtocolError(_))));
    }
}
