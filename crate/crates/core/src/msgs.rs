//! Handshake and application messages with a canonical byte encoding.
//!
//! Transcript hashing operates over these bytes, so the encoding must be
//! stable: every field is written in a fixed order, integers big-endian,
//! variable-length data length-prefixed with a u32. ChangeCipherSpec is a
//! real message but is excluded from transcripts by the state machines.

use serde::{Deserialize, Serialize};

use crate::catalog::{GroupId, SuiteId, VersionId};
use crate::crypto::RsaPublicKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    ClientToServer,
    ServerToClient,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::ClientToServer => Direction::ServerToClient,
            Direction::ServerToClient => Direction::ClientToServer,
        }
    }
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

#[derive(Default)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(&(v.len() as u32).to_be_bytes());
        self.buf.extend_from_slice(v);
        self
    }

    pub fn list<T>(&mut self, items: &[T], mut f: impl FnMut(&mut Self, &T)) -> &mut Self {
        self.buf.extend_from_slice(&(items.len() as u32).to_be_bytes());
        for it in items {
            f(self, it);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

// ---------------------------------------------------------------------------
// Message payloads
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyShareEntry {
    pub group: GroupId,
    pub public_value: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extensions {
    #[serde(default)]
    pub supported_versions: Vec<VersionId>,
    #[serde(default)]
    pub key_share: Vec<KeyShareEntry>,
    #[serde(default)]
    pub supported_groups: Vec<GroupId>,
}

impl Extensions {
    pub fn is_empty(&self) -> bool {
        self.supported_versions.is_empty()
            && self.key_share.is_empty()
            && self.supported_groups.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientHello {
    pub vmax: VersionId,
    pub nonce: [u8; 16],
    /// Legacy field, carried but never interpreted.
    pub legacy_session_id: Vec<u8>,
    pub suites: Vec<SuiteId>,
    pub compressions: Vec<u8>,
    pub extensions: Extensions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerHello {
    pub version: VersionId,
    pub nonce: [u8; 16],
    pub suite: SuiteId,
    pub key_share: Option<KeyShareEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloRetryRequest {
    pub version: VersionId,
    pub suite: SuiteId,
    pub group: GroupId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Certificate {
    pub subject: String,
    pub issuer: String,
    pub public_key: RsaPublicKey,
}

/// How the numbers in a key-exchange parameter blob are meant to be read.
/// This is the algorithm label of the sender; a receiver with a different
/// view reinterprets the same numbers under its own label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamFamily {
    /// [prime, generator, public_value]
    Dh,
    /// [prime, generator, public_value] over the EC-labelled group family
    Ec,
    /// [modulus, public_exponent]
    RsaExport,
    /// RSA-wrapped pre-master secret blocks
    RsaWrapped,
}

impl ParamFamily {
    pub fn wire_byte(self) -> u8 {
        match self {
            ParamFamily::Dh => 0,
            ParamFamily::Ec => 1,
            ParamFamily::RsaExport => 2,
            ParamFamily::RsaWrapped => 3,
        }
    }
}

/// Tagged key-exchange parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyParams {
    pub family: ParamFamily,
    pub numbers: Vec<u64>,
}

impl KeyParams {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::default();
        e.u8(self.family.wire_byte());
        e.list(&self.numbers, |e, n| {
            e.u64(*n);
        });
        e.finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerKeyExchange {
    pub params: KeyParams,
    /// Toy signature by the server's long-term key over
    /// hash(n_I | n_R | params); it does not cover the selected suite.
    pub signature: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientKeyExchange {
    pub params: KeyParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientFinished {
    pub mac: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerFinished {
    pub mac: Vec<u8>,
    /// TLS 1.3 only: signature over the transcript digest by the server's
    /// long-term key, standing in for CertificateVerify.
    pub transcript_sig: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppData {
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmtpMessage {
    Ehlo,
    Capabilities {
        starttls: bool,
        others: Vec<String>,
    },
    StartTls {
        verb: String,
    },
    ReadyForTls,
    Rejected,
    PlainMail {
        payload: Vec<u8>,
    },
}

pub const STARTTLS_VERB: &str = "STARTTLS";

// ---------------------------------------------------------------------------
// The message sum type
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Message {
    ClientHello(ClientHello),
    ServerHello(ServerHello),
    HelloRetryRequest(HelloRetryRequest),
    ServerCertificate(Certificate),
    ServerKeyExchange(ServerKeyExchange),
    ServerHelloDone,
    ClientKeyExchange(ClientKeyExchange),
    ChangeCipherSpec,
    ClientFinished(ClientFinished),
    ServerFinished(ServerFinished),
    AppData(AppData),
    Smtp(SmtpMessage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MsgKind {
    ClientHello,
    ServerHello,
    HelloRetryRequest,
    ServerCertificate,
    ServerKeyExchange,
    ServerHelloDone,
    ClientKeyExchange,
    ChangeCipherSpec,
    ClientFinished,
    ServerFinished,
    AppData,
    SmtpEhlo,
    SmtpCapabilities,
    SmtpStartTls,
    SmtpReadyForTls,
    SmtpRejected,
    SmtpPlainMail,
}

impl Message {
    pub fn kind(&self) -> MsgKind {
        match self {
            Message::ClientHello(_) => MsgKind::ClientHello,
            Message::ServerHello(_) => MsgKind::ServerHello,
            Message::HelloRetryRequest(_) => MsgKind::HelloRetryRequest,
            Message::ServerCertificate(_) => MsgKind::ServerCertificate,
            Message::ServerKeyExchange(_) => MsgKind::ServerKeyExchange,
            Message::ServerHelloDone => MsgKind::ServerHelloDone,
            Message::ClientKeyExchange(_) => MsgKind::ClientKeyExchange,
            Message::ChangeCipherSpec => MsgKind::ChangeCipherSpec,
            Message::ClientFinished(_) => MsgKind::ClientFinished,
            Message::ServerFinished(_) => MsgKind::ServerFinished,
            Message::AppData(_) => MsgKind::AppData,
            Message::Smtp(s) => match s {
                SmtpMessage::Ehlo => MsgKind::SmtpEhlo,
                SmtpMessage::Capabilities { .. } => MsgKind::SmtpCapabilities,
                SmtpMessage::StartTls { .. } => MsgKind::SmtpStartTls,
                SmtpMessage::ReadyForTls => MsgKind::SmtpReadyForTls,
                SmtpMessage::Rejected => MsgKind::SmtpRejected,
                SmtpMessage::PlainMail { .. } => MsgKind::SmtpPlainMail,
            },
        }
    }

    /// Whether the message enters the handshake transcript.
    pub fn in_transcript(&self) -> bool {
        !matches!(
            self,
            Message::ChangeCipherSpec | Message::AppData(_) | Message::Smtp(_)
        )
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::default();
        match self {
            Message::ClientHello(ch) => {
                e.u8(1);
                e.u8(ch.vmax.wire_byte());
                e.bytes(&ch.nonce);
                e.bytes(&ch.legacy_session_id);
                e.list(&ch.suites, |e, s| {
                    e.u8(s.wire_byte());
                });
                e.bytes(&ch.compressions);
                e.list(&ch.extensions.supported_versions, |e, v| {
                    e.u8(v.wire_byte());
                });
                e.list(&ch.extensions.key_share, |e, ks| {
                    e.u8(ks.group.wire_byte()).u64(ks.public_value);
                });
                e.list(&ch.extensions.supported_groups, |e, g| {
                    e.u8(g.wire_byte());
                });
            }
            Message::ServerHello(sh) => {
                e.u8(2);
                e.u8(sh.version.wire_byte());
                e.bytes(&sh.nonce);
                e.u8(sh.suite.wire_byte());
                match &sh.key_share {
                    Some(ks) => {
                        e.u8(1).u8(ks.group.wire_byte()).u64(ks.public_value);
                    }
                    None => {
                        e.u8(0);
                    }
                }
            }
            Message::HelloRetryRequest(hrr) => {
                e.u8(3);
                e.u8(hrr.version.wire_byte());
                e.u8(hrr.suite.wire_byte());
                e.u8(hrr.group.wire_byte());
            }
            Message::ServerCertificate(c) => {
                e.u8(4);
                e.bytes(c.subject.as_bytes());
                e.bytes(c.issuer.as_bytes());
                e.u64(c.public_key.modulus_n);
                e.u64(c.public_key.public_exp);
            }
            Message::ServerKeyExchange(ske) => {
                e.u8(5);
                e.bytes(&ske.params.canonical_bytes());
                e.u64(ske.signature);
            }
            Message::ServerHelloDone => {
                e.u8(6);
            }
            Message::ClientKeyExchange(cke) => {
                e.u8(7);
                e.bytes(&cke.params.canonical_bytes());
            }
            Message::ChangeCipherSpec => {
                e.u8(8);
            }
            Message::ClientFinished(f) => {
                e.u8(9);
                e.bytes(&f.mac);
            }
            Message::ServerFinished(f) => {
                e.u8(10);
                e.bytes(&f.mac);
                match f.transcript_sig {
                    Some(s) => {
                        e.u8(1).u64(s);
                    }
                    None => {
                        e.u8(0);
                    }
                }
            }
            Message::AppData(a) => {
                e.u8(11);
                e.bytes(&a.ciphertext);
            }
            Message::Smtp(s) => {
                e.u8(12);
                match s {
                    SmtpMessage::Ehlo => {
                        e.u8(0);
                    }
                    SmtpMessage::Capabilities { starttls, others } => {
                        e.u8(1);
                        e.u8(u8::from(*starttls));
                        e.list(others, |e, o| {
                            e.bytes(o.as_bytes());
                        });
                    }
                    SmtpMessage::StartTls { verb } => {
                        e.u8(2);
                        e.bytes(verb.as_bytes());
                    }
                    SmtpMessage::ReadyForTls => {
                        e.u8(3);
                    }
                    SmtpMessage::Rejected => {
                        e.u8(4);
                    }
                    SmtpMessage::PlainMail { payload } => {
                        e.u8(5);
                        e.bytes(payload);
                    }
                }
            }
        }
        e.finish()
    }

    /// One-line rendering for traces.
    pub fn summary(&self) -> String {
        match self {
            Message::ClientHello(ch) => format!(
                "CH(vmax={}, suites=[{}], sv=[{}])",
                ch.vmax.as_str(),
                ch.suites.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
                ch.extensions
                    .supported_versions
                    .iter()
                    .map(|v| v.as_str())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            Message::ServerHello(sh) => {
                format!("SH(v={}, suite={})", sh.version.as_str(), sh.suite.as_str())
            }
            Message::HelloRetryRequest(h) => format!("HRR(group={})", h.group.as_str()),
            Message::ServerCertificate(c) => format!("SC(subject={}, issuer={})", c.subject, c.issuer),
            Message::ServerKeyExchange(ske) => format!("SKE(family={:?})", ske.params.family),
            Message::ServerHelloDone => "SHD".into(),
            Message::ClientKeyExchange(cke) => format!("CKE(family={:?})", cke.params.family),
            Message::ChangeCipherSpec => "CCS".into(),
            Message::ClientFinished(_) => "CF".into(),
            Message::ServerFinished(_) => "SF".into(),
            Message::AppData(a) => format!("AppData({}B)", a.ciphertext.len()),
            Message::Smtp(s) => match s {
                SmtpMessage::Ehlo => "SMTP EHLO".into(),
                SmtpMessage::Capabilities { starttls, .. } => {
                    format!("SMTP CAPS(starttls={starttls})")
                }
                SmtpMessage::StartTls { verb } => format!("SMTP {verb}"),
                SmtpMessage::ReadyForTls => "SMTP READY-TLS".into(),
                SmtpMessage::Rejected => "SMTP REJECTED".into(),
                SmtpMessage::PlainMail { payload } => format!("SMTP MAIL({}B plain)", payload.len()),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_ch() -> Message {
        Message::ClientHello(ClientHello {
            vmax: VersionId::Tls12,
            nonce: [7u8; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::EcdheAead, SuiteId::DheAead],
            compressions: vec![0],
            extensions: Extensions::default(),
        })
    }

    #[test]
    fn canonical_bytes_are_stable_and_distinct() {
        let a = sample_ch();
        assert_eq!(a.canonical_bytes(), a.canonical_bytes());

        let mut other = match a.clone() {
            Message::ClientHello(ch) => ch,
            _ => unreachable!(),
        };
        other.nonce[0] ^= 1;
        let b = Message::ClientHello(other);
        assert_ne!(a.canonical_bytes(), b.canonical_bytes());
    }

    #[test]
    fn suite_order_changes_bytes() {
        let a = sample_ch().canonical_bytes();
        let b = Message::ClientHello(ClientHello {
            vmax: VersionId::Tls12,
            nonce: [7u8; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::DheAead, SuiteId::EcdheAead],
            compressions: vec![0],
            extensions: Extensions::default(),
        })
        .canonical_bytes();
        assert_ne!(a, b);
    }

    #[test]
    fn ccs_and_appdata_excluded_from_transcript() {
        assert!(!Message::ChangeCipherSpec.in_transcript());
        assert!(!Message::AppData(AppData { ciphertext: vec![] }).in_transcript());
        assert!(sample_ch().in_transcript());
        assert!(Message::ServerHelloDone.in_transcript());
    }

    #[test]
    fn serde_round_trip() {
        let m = sample_ch();
        let json = serde_json::to_string(&m).unwrap();
        let back: Message = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
