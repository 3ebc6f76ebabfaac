//! Client and server handshake state machines for SSL 2.0 through TLS 1.3.
//!
//! Both machines are pure step functions over an [`EndpointState`]: the
//! engine feeds one incoming message (or `Start`/`Timeout`) at a time and
//! collects outgoing messages. Negotiation, key exchange, transcript
//! maintenance, Finished verification, and the version-specific downgrade
//! defences (sentinel nonce, HelloRetry transcript policy) all live here.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::catalog::{
    export_ephemeral_rsa, finished_hash, group, group_by_prime, version_supports_suite, GroupId,
    HelloRetryPolicy, KxAlgo, RsaKeySpec, SuiteId, VersionId, SENTINEL_TAG,
};
use crate::crypto::{
    self, dh_keygen_with_rng, dh_shared_secret, sign_digest, strength_of, verify_signature,
    CollisionTable, CryptoError, DhGroup, DhKeyPair, EffectiveKey, EncAlgo, GroupFamily,
    HashAlgoId, PublicKeyView, RsaCiphertext, RsaPublicKey, RsaToyKey, SecretBundle, Strength,
};
use crate::msgs::{
    AppData, Certificate, ClientFinished, ClientHello, ClientKeyExchange, Extensions,
    HelloRetryRequest, KeyParams, KeyShareEntry, Message, ParamFamily, ServerFinished,
    ServerHello, ServerKeyExchange,
};
use crate::rng::SplitMix64;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Client,
    Server,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BugFlag {
    /// Retry a failed handshake with the version cap lowered by one.
    DowngradeDance,
    /// Accept a ServerKeyExchange in a plain-RSA handshake and use its
    /// ephemeral parameters (the FREAK client bug).
    AcceptsSkeInRsa,
    /// Accept export-strength key parameters inside a non-export suite.
    AcceptsArbitraryGroups,
    /// On a missing ServerKeyExchange, retry the connection offering only
    /// non-forward-secret suites.
    FsFallbackOnMissingSke,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    FailOpen,
    FailClosed,
}

impl Default for PolicyMode {
    fn default() -> Self {
        PolicyMode::FailClosed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertIdentity {
    pub subject: String,
    pub issuer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub role: Role,
    pub version_min: VersionId,
    pub version_max: VersionId,
    pub suites_by_preference: Vec<SuiteId>,
    #[serde(default)]
    pub groups_by_preference: Vec<GroupId>,
    #[serde(default)]
    pub bug_flags: BTreeSet<BugFlag>,
    #[serde(default)]
    pub rsa_key: Option<RsaKeySpec>,
    #[serde(default)]
    pub identity: Option<CertIdentity>,
    #[serde(default)]
    pub trust_store: BTreeSet<String>,
    #[serde(default)]
    pub policy: PolicyMode,
}

impl EndpointConfig {
    pub fn has_bug(&self, flag: BugFlag) -> bool {
        self.bug_flags.contains(&flag)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.suites_by_preference.is_empty() {
            return Err("suite preference list is empty".into());
        }
        if self.version_min > self.version_max {
            return Err("version_min exceeds version_max".into());
        }
        if self.role == Role::Server {
            if self.rsa_key.is_none() {
                return Err("server config needs an rsa_key".into());
            }
            if self.identity.is_none() {
                return Err("server config needs a certificate identity".into());
            }
        }
        if let Some(key) = &self.rsa_key {
            key.build().map_err(|e| e.to_string())?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Endpoint state
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    ProtocolError(String),
    NoCommonVersion,
    NoCommonSuite,
    NoCommonGroup,
    CertRejected,
    SignatureInvalid,
    UnexpectedSke,
    KeyParam(String),
    FinishedMismatch,
    DowngradeDetected,
    HandshakeTimeout,
    AppDataAuthFailure,
    UpgradeUnavailable,
}

/// What the client wants the engine to do after a failed attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrySpec {
    LowerVersion(VersionId),
    DropForwardSecrecy,
}

/// Caps applied to a retried offer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OfferConstraints {
    pub vmax_cap: Option<VersionId>,
    pub exclude_forward_secret: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Negotiated {
    pub version: VersionId,
    pub suite: SuiteId,
    pub group: Option<GroupId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    // client
    AwaitServerHello,
    AwaitCertificate,
    AwaitServerKxOrDone,
    AwaitServerCcs,
    AwaitServerFinished,
    // server
    AwaitClientHello,
    AwaitClientKx,
    AwaitClientCcs,
    AwaitClientFinished,
    // terminal
    Established,
    Failed,
}

#[derive(Debug, Clone)]
pub struct EndpointState {
    pub role: Role,
    pub phase: Phase,
    pub attempt: u32,
    pub transcript: Vec<u8>,
    pub own_nonce: Option<[u8; 16]>,
    pub peer_nonce: Option<[u8; 16]>,
    /// Client: the hello exactly as sent. Server: the hello as received.
    pub hello: Option<ClientHello>,
    pub negotiated: Option<Negotiated>,
    pub secrets: Option<SecretBundle>,
    pub aborted: Option<AbortReason>,
    pub retry: Option<RetrySpec>,
    pub app_sent: Vec<Vec<u8>>,
    pub app_received: Vec<Vec<u8>>,
    rng: SplitMix64,
    dh_own: Option<DhKeyPair>,
    key_share_pairs: Vec<(GroupId, DhKeyPair)>,
    server_cert: Option<Certificate>,
    ske_key: Option<EffectiveKey>,
    ske_seen: bool,
    hrr_seen: bool,
    export_rsa: Option<RsaToyKey>,
}

impl EndpointState {
    pub fn new(role: Role, seed: u64, attempt: u32) -> Self {
        let label = match role {
            Role::Client => "client",
            Role::Server => "server",
        };
        Self {
            role,
            phase: match role {
                Role::Client => Phase::Idle,
                Role::Server => Phase::AwaitClientHello,
            },
            attempt,
            transcript: Vec::new(),
            own_nonce: None,
            peer_nonce: None,
            hello: None,
            negotiated: None,
            secrets: None,
            aborted: None,
            retry: None,
            app_sent: Vec::new(),
            app_received: Vec::new(),
            rng: SplitMix64::fork(seed.wrapping_add(attempt as u64), label),
            dh_own: None,
            key_share_pairs: Vec::new(),
            server_cert: None,
            ske_key: None,
            ske_seen: false,
            hrr_seen: false,
            export_rsa: None,
        }
    }

    pub fn is_established(&self) -> bool {
        self.phase == Phase::Established
    }

    pub fn is_failed(&self) -> bool {
        self.phase == Phase::Failed
    }

    pub fn in_flight(&self) -> bool {
        !self.is_established() && !self.is_failed() && self.phase != Phase::Idle
    }

    fn append_transcript(&mut self, msg: &Message) {
        if msg.in_transcript() {
            self.transcript.extend_from_slice(&msg.canonical_bytes());
        }
    }

    fn fail(&mut self, reason: AbortReason) -> Vec<Message> {
        self.aborted = Some(reason);
        self.phase = Phase::Failed;
        Vec::new()
    }

    fn fail_with_retry(&mut self, reason: AbortReason, retry: RetrySpec) -> Vec<Message> {
        self.retry = Some(retry);
        self.fail(reason)
    }
}

/// Session-wide context shared by both endpoints: the collision table is
/// consulted by Finished verification when the hash is weak.
pub struct HandshakeCtx<'a> {
    pub collisions: &'a CollisionTable,
}

#[derive(Debug)]
pub enum ClientInput<'a> {
    Start(OfferConstraints),
    Timeout,
    Incoming(&'a Message),
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Checks the last eight bytes of a 1.3-final server nonce against the
/// version the client actually offered.
pub fn check_sentinel(nonce_r: &[u8; 16], client_offered_max: VersionId) -> Result<(), AbortReason> {
    let tail = &nonce_r[8..16];
    if tail[..7] != SENTINEL_TAG {
        return Ok(());
    }
    match VersionId::from_wire_byte(tail[7]) {
        Some(seen) if seen == client_offered_max => Ok(()),
        _ => Err(AbortReason::DowngradeDetected),
    }
}

fn sentinel_nonce(mut nonce: [u8; 16], received_max: VersionId) -> [u8; 16] {
    nonce[8..15].copy_from_slice(&SENTINEL_TAG);
    nonce[15] = received_max.wire_byte();
    nonce
}

/// Reads key-exchange parameter bytes under the receiver's expected
/// algorithm label. Matching labels yield the genuine key with its true
/// strength; mismatched labels yield a key whose effective strength is
/// export grade.
pub fn interpret_key_params(
    params: &KeyParams,
    expected: ParamFamily,
) -> Result<EffectiveKey, CryptoError> {
    let mismatched = params.family != expected;
    match expected {
        ParamFamily::Dh | ParamFamily::Ec => {
            if params.numbers.len() < 3 {
                return Err(CryptoError::KeyParam(
                    "too few values for a group key".into(),
                ));
            }
            let (p, g, public) = (params.numbers[0], params.numbers[1], params.numbers[2]);
            let family = if expected == ParamFamily::Ec {
                GroupFamily::EcToy
            } else {
                GroupFamily::FiniteField
            };
            let label = group_by_prime(p)
                .map(|id| id.as_str().to_string())
                .unwrap_or_else(|| format!("wire-{p}"));
            let group = DhGroup::new(p, g, &label, family)?;
            if public >= p {
                return Err(CryptoError::KeyParam("public value outside group".into()));
            }
            let strength = if mismatched { Strength::Export } else { group.strength };
            Ok(EffectiveKey {
                view: PublicKeyView::Dh { group, public_value: public },
                strength,
                mismatched,
            })
        }
        ParamFamily::RsaExport => {
            if params.numbers.len() < 2 {
                return Err(CryptoError::KeyParam(
                    "too few values for an RSA key".into(),
                ));
            }
            let (n, e) = (params.numbers[0], params.numbers[1]);
            if n < 4 || e < 2 {
                return Err(CryptoError::KeyParam("degenerate RSA values".into()));
            }
            let strength = if mismatched { Strength::Export } else { strength_of(n) };
            Ok(EffectiveKey {
                view: PublicKeyView::Rsa {
                    public: RsaPublicKey {
                        modulus_n: n,
                        public_exp: e,
                        strength,
                        shared_with_sslv2: false,
                    },
                },
                strength,
                mismatched,
            })
        }
        ParamFamily::RsaWrapped => Err(CryptoError::KeyParam(
            "wrapped secrets are not a public key".into(),
        )),
    }
}

/// Finished check: accept iff the tag matches a MAC over the local
/// transcript digest.
pub fn verify_finished(
    local_transcript: &[u8],
    received_tag: &[u8],
    ms: &[u8],
    hash_algo: HashAlgoId,
    collisions: &CollisionTable,
) -> bool {
    let digest = crypto::transcript_hash(local_transcript, hash_algo, collisions);
    crypto::verify_finished_mac(received_tag, ms, &digest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupDecision {
    Accept(GroupId),
    Retry(GroupId),
    NoCommonGroup,
}

/// Server-side 1.3 group negotiation: take the first offered key_share the
/// server supports; otherwise request a retry for the best mutually
/// supported group.
pub fn negotiate_group(ch: &ClientHello, server_groups: &[GroupId]) -> GroupDecision {
    for ks in &ch.extensions.key_share {
        if server_groups.contains(&ks.group) {
            return GroupDecision::Accept(ks.group);
        }
    }
    for g in server_groups {
        if ch.extensions.supported_groups.contains(g) {
            return GroupDecision::Retry(*g);
        }
    }
    GroupDecision::NoCommonGroup
}

fn ske_signature_digest(n_i: &[u8], n_r: &[u8], params: &KeyParams) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(n_i);
    h.update(n_r);
    h.update(params.canonical_bytes());
    h.finalize().to_vec()
}

fn expected_ske_family(kx: KxAlgo) -> Option<ParamFamily> {
    match kx {
        KxAlgo::Rsa => None,
        KxAlgo::RsaExport => Some(ParamFamily::RsaExport),
        KxAlgo::Dhe | KxAlgo::DheExport => Some(ParamFamily::Dh),
        KxAlgo::Ecdhe => Some(ParamFamily::Ec),
    }
}

fn expected_cke_family(kx: KxAlgo) -> ParamFamily {
    match kx {
        KxAlgo::Rsa | KxAlgo::RsaExport => ParamFamily::RsaWrapped,
        KxAlgo::Dhe | KxAlgo::DheExport => ParamFamily::Dh,
        KxAlgo::Ecdhe => ParamFamily::Ec,
    }
}

fn client_offered_max(ch: &ClientHello) -> VersionId {
    ch.extensions
        .supported_versions
        .iter()
        .copied()
        .max()
        .map_or(ch.vmax, |sv| sv.max(ch.vmax))
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

pub fn client_step(
    state: &mut EndpointState,
    config: &EndpointConfig,
    input: ClientInput,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    debug_assert_eq!(state.role, Role::Client);
    match input {
        ClientInput::Start(constraints) => client_start(state, config, constraints),
        ClientInput::Timeout => client_timeout(state, config),
        ClientInput::Incoming(msg) => client_incoming(state, config, msg, ctx),
    }
}

fn client_start(
    state: &mut EndpointState,
    config: &EndpointConfig,
    constraints: OfferConstraints,
) -> Vec<Message> {
    if state.phase != Phase::Idle {
        return state.fail(AbortReason::ProtocolError("client already started".into()));
    }
    let vmax = constraints
        .vmax_cap
        .map_or(config.version_max, |cap| cap.min(config.version_max));
    if vmax < config.version_min {
        return state.fail(AbortReason::NoCommonVersion);
    }
    let versions: Vec<VersionId> = VersionId::ALL
        .iter()
        .copied()
        .filter(|v| *v >= config.version_min && *v <= vmax)
        .collect();
    let suites: Vec<SuiteId> = config
        .suites_by_preference
        .iter()
        .copied()
        .filter(|s| versions.iter().any(|v| version_supports_suite(*v, *s)))
        .filter(|s| !constraints.exclude_forward_secret || !s.suite().forward_secret())
        .collect();
    if suites.is_empty() {
        return state.fail(AbortReason::NoCommonSuite);
    }

    let mut nonce = [0u8; 16];
    nonce.copy_from_slice(&state.rng.bytes(16));
    state.own_nonce = Some(nonce);

    let mut extensions = Extensions::default();
    if vmax.is_tls13() {
        let mut sv: Vec<VersionId> = versions.clone();
        sv.reverse(); // most preferred first
        extensions.supported_versions = sv;
        extensions.supported_groups = config.groups_by_preference.clone();
        if let Some(first) = config.groups_by_preference.first() {
            match dh_keygen_with_rng(group(*first), &mut state.rng) {
                Ok(pair) => {
                    extensions.key_share = vec![KeyShareEntry {
                        group: *first,
                        public_value: pair.public_value,
                    }];
                    state.key_share_pairs = vec![(*first, pair)];
                }
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            }
        }
    }

    let ch = ClientHello {
        vmax,
        nonce,
        legacy_session_id: Vec::new(),
        suites,
        compressions: vec![0],
        extensions,
    };
    let msg = Message::ClientHello(ch.clone());
    state.hello = Some(ch);
    state.append_transcript(&msg);
    state.phase = Phase::AwaitServerHello;
    vec![msg]
}

fn client_timeout(state: &mut EndpointState, config: &EndpointConfig) -> Vec<Message> {
    if !state.in_flight() {
        return Vec::new();
    }
    if config.has_bug(BugFlag::DowngradeDance) {
        let current = state.hello.as_ref().map_or(config.version_max, |h| h.vmax);
        if let Some(lower) = current.dance_fallback() {
            if lower >= config.version_min {
                return state
                    .fail_with_retry(AbortReason::HandshakeTimeout, RetrySpec::LowerVersion(lower));
            }
        }
    }
    state.fail(AbortReason::HandshakeTimeout)
}

fn client_incoming(
    state: &mut EndpointState,
    config: &EndpointConfig,
    msg: &Message,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    match (state.phase, msg) {
        (Phase::AwaitServerHello, Message::ServerHello(sh)) => client_on_sh(state, config, sh, msg),
        (Phase::AwaitServerHello, Message::HelloRetryRequest(hrr)) => {
            client_on_hrr(state, config, hrr, msg)
        }
        (Phase::AwaitCertificate, Message::ServerCertificate(cert)) => {
            client_on_cert(state, config, cert, msg)
        }
        (Phase::AwaitServerKxOrDone, Message::ServerKeyExchange(ske)) => {
            client_on_ske(state, config, ske, msg)
        }
        (Phase::AwaitServerKxOrDone, Message::ServerHelloDone) => {
            client_on_shd(state, config, msg, ctx)
        }
        (Phase::AwaitServerCcs, Message::ChangeCipherSpec) => {
            state.phase = Phase::AwaitServerFinished;
            Vec::new()
        }
        (Phase::AwaitServerFinished, Message::ServerFinished(sf)) => {
            client_on_sf(state, config, sf, msg, ctx)
        }
        (phase, other) => state.fail(AbortReason::ProtocolError(format!(
            "unexpected {:?} in {:?}",
            other.kind(),
            phase
        ))),
    }
}

fn client_on_sh(
    state: &mut EndpointState,
    config: &EndpointConfig,
    sh: &ServerHello,
    msg: &Message,
) -> Vec<Message> {
    let offered = state.hello.clone().expect("client sent a hello");
    let offered_max = client_offered_max(&offered);

    if config.version_max == VersionId::Tls13Final {
        if let Err(reason) = check_sentinel(&sh.nonce, offered_max) {
            return state.fail(reason);
        }
    }
    if sh.version > offered_max || sh.version < config.version_min {
        return state.fail(AbortReason::NoCommonVersion);
    }
    if !offered.suites.contains(&sh.suite) {
        return state.fail(AbortReason::ProtocolError("suite was not offered".into()));
    }
    if !version_supports_suite(sh.version, sh.suite) {
        return state.fail(AbortReason::ProtocolError(
            "suite invalid at negotiated version".into(),
        ));
    }

    state.append_transcript(msg);
    state.peer_nonce = Some(sh.nonce);
    let mut negotiated = Negotiated {
        version: sh.version,
        suite: sh.suite,
        group: None,
    };

    if sh.version.is_tls13() {
        let ks = match &sh.key_share {
            Some(ks) => ks,
            None => {
                return state.fail(AbortReason::ProtocolError(
                    "missing key_share in 1.3 hello".into(),
                ))
            }
        };
        let own = state
            .key_share_pairs
            .iter()
            .find(|(g, _)| *g == ks.group)
            .map(|(_, p)| p.clone());
        let own = match own {
            Some(p) => p,
            None => {
                return state.fail(AbortReason::ProtocolError(
                    "server key_share group was not offered".into(),
                ))
            }
        };
        let pms = match dh_shared_secret(&own, ks.public_value) {
            Ok(p) => p,
            Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
        };
        negotiated.group = Some(ks.group);
        state.secrets = Some(crypto::derive_secrets(
            &pms,
            &offered.nonce,
            &sh.nonce,
        ));
    }

    state.negotiated = Some(negotiated);
    state.phase = Phase::AwaitCertificate;
    Vec::new()
}

fn client_on_hrr(
    state: &mut EndpointState,
    config: &EndpointConfig,
    hrr: &HelloRetryRequest,
    msg: &Message,
) -> Vec<Message> {
    if state.hrr_seen {
        return state.fail(AbortReason::ProtocolError("second HelloRetryRequest".into()));
    }
    if !hrr.version.is_tls13() {
        return state.fail(AbortReason::ProtocolError(
            "retry request outside 1.3".into(),
        ));
    }
    if !config.groups_by_preference.contains(&hrr.group) {
        return state.fail(AbortReason::NoCommonGroup);
    }
    state.hrr_seen = true;

    let policy = HelloRetryPolicy::for_version(hrr.version);
    if policy.restart_transcript_on_hrr {
        state.transcript.clear();
    } else {
        state.append_transcript(msg);
    }

    let pair = match dh_keygen_with_rng(group(hrr.group), &mut state.rng) {
        Ok(p) => p,
        Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
    };
    let mut ch = state.hello.clone().expect("client sent a hello");
    ch.extensions.key_share = vec![KeyShareEntry {
        group: hrr.group,
        public_value: pair.public_value,
    }];
    state.key_share_pairs = vec![(hrr.group, pair)];
    let msg2 = Message::ClientHello(ch.clone());
    state.hello = Some(ch);
    state.append_transcript(&msg2);
    vec![msg2]
}

fn client_on_cert(
    state: &mut EndpointState,
    config: &EndpointConfig,
    cert: &Certificate,
    msg: &Message,
) -> Vec<Message> {
    if !config.trust_store.contains(&cert.issuer) {
        return state.fail(AbortReason::CertRejected);
    }
    state.append_transcript(msg);
    state.server_cert = Some(cert.clone());
    let negotiated = state.negotiated.expect("negotiated at hello");

    if negotiated.version == VersionId::Ssl20 {
        // SSL 2.0: straight to the key exchange, no SKE/SHD/Finished.
        return client_send_rsa_cke(state, cert.public_key.clone());
    }
    if negotiated.version.is_tls13() {
        state.phase = Phase::AwaitServerFinished;
    } else {
        state.phase = Phase::AwaitServerKxOrDone;
    }
    Vec::new()
}

fn client_send_rsa_cke(state: &mut EndpointState, wrap_key: RsaPublicKey) -> Vec<Message> {
    let pms = state.rng.bytes(8);
    let ct = match crypto::rsa_wrap_pms(&pms, &wrap_key) {
        Ok(ct) => ct,
        Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
    };
    let cke = Message::ClientKeyExchange(ClientKeyExchange {
        params: KeyParams {
            family: ParamFamily::RsaWrapped,
            numbers: ct.0.clone(),
        },
    });
    state.append_transcript(&cke);
    let n_i = state.hello.as_ref().expect("hello sent").nonce;
    let n_r = state.peer_nonce.expect("server nonce seen");
    state.secrets = Some(crypto::derive_secrets(&pms, &n_i, &n_r));
    state.phase = Phase::Established;
    vec![cke]
}

fn client_on_ske(
    state: &mut EndpointState,
    config: &EndpointConfig,
    ske: &ServerKeyExchange,
    msg: &Message,
) -> Vec<Message> {
    let negotiated = state.negotiated.expect("negotiated at hello");
    let kx = negotiated.suite.suite().kx;

    let expected = match expected_ske_family(kx) {
        Some(f) => f,
        None => {
            // Plain RSA never carries an SKE. SSL 3.0-era designs read one
            // as export-RSA parameters; later versions need the client bug.
            if negotiated.version == VersionId::Ssl30 || config.has_bug(BugFlag::AcceptsSkeInRsa) {
                ParamFamily::RsaExport
            } else {
                return state.fail(AbortReason::UnexpectedSke);
            }
        }
    };

    let cert = state.server_cert.clone().expect("certificate before SKE");
    let n_i = state.hello.as_ref().expect("hello sent").nonce;
    let n_r = state.peer_nonce.expect("server nonce seen");
    let digest = ske_signature_digest(&n_i, &n_r, &ske.params);
    if !verify_signature(&cert.public_key, &digest, ske.signature) {
        return state.fail(AbortReason::SignatureInvalid);
    }

    let effective = match interpret_key_params(&ske.params, expected) {
        Ok(k) => k,
        Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
    };
    // Export-strength parameters inside a non-export suite only pass if
    // the client accepts arbitrary key parameters. Mismatched labels are
    // invisible to the client by design at 1.2 and below; export suites
    // legitimately carry export parameters; the SKE-in-RSA paths above
    // are themselves the acceptance bug.
    if !effective.mismatched
        && effective.strength == Strength::Export
        && !kx.is_export()
        && matches!(expected, ParamFamily::Dh | ParamFamily::Ec)
        && !config.has_bug(BugFlag::AcceptsArbitraryGroups)
    {
        return state.fail(AbortReason::KeyParam(
            "export-strength parameters in a non-export suite".into(),
        ));
    }

    state.append_transcript(msg);
    state.ske_key = Some(effective);
    state.ske_seen = true;
    Vec::new()
}

fn client_on_shd(
    state: &mut EndpointState,
    config: &EndpointConfig,
    msg: &Message,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    let negotiated = state.negotiated.expect("negotiated at hello");
    let kx = negotiated.suite.suite().kx;

    if kx.sends_server_kx() && !state.ske_seen {
        if kx.forward_secret() && config.has_bug(BugFlag::FsFallbackOnMissingSke) {
            return state.fail_with_retry(
                AbortReason::ProtocolError("ServerKeyExchange missing".into()),
                RetrySpec::DropForwardSecrecy,
            );
        }
        return state.fail(AbortReason::ProtocolError(
            "ServerKeyExchange missing".into(),
        ));
    }

    state.append_transcript(msg);

    let (pms, cke_params) = match state.ske_key.clone() {
        Some(EffectiveKey {
            view: PublicKeyView::Dh { group: g, public_value },
            ..
        }) => {
            let own = match dh_keygen_with_rng(&g, &mut state.rng) {
                Ok(p) => p,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            };
            let pms = match dh_shared_secret(&own, public_value) {
                Ok(p) => p,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            };
            let family = if g.family == GroupFamily::EcToy {
                ParamFamily::Ec
            } else {
                ParamFamily::Dh
            };
            let params = KeyParams {
                family,
                numbers: vec![own.public_value],
            };
            state.dh_own = Some(own);
            (pms, params)
        }
        Some(EffectiveKey {
            view: PublicKeyView::Rsa { public },
            ..
        }) => {
            let pms = state.rng.bytes(8);
            let ct = match crypto::rsa_wrap_pms(&pms, &public) {
                Ok(ct) => ct,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            };
            (
                pms,
                KeyParams {
                    family: ParamFamily::RsaWrapped,
                    numbers: ct.0,
                },
            )
        }
        None => {
            // plain RSA: wrap under the certificate key
            let cert = state.server_cert.clone().expect("certificate seen");
            let pms = state.rng.bytes(8);
            let ct = match crypto::rsa_wrap_pms(&pms, &cert.public_key) {
                Ok(ct) => ct,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            };
            (
                pms,
                KeyParams {
                    family: ParamFamily::RsaWrapped,
                    numbers: ct.0,
                },
            )
        }
    };

    let n_i = state.hello.as_ref().expect("hello sent").nonce;
    let n_r = state.peer_nonce.expect("server nonce seen");
    let secrets = crypto::derive_secrets(&pms, &n_i, &n_r);

    let cke = Message::ClientKeyExchange(ClientKeyExchange { params: cke_params });
    state.append_transcript(&cke);

    let hash = finished_hash(negotiated.version, negotiated.suite).expect("mac above ssl2");
    let digest = crypto::transcript_hash(&state.transcript, hash, ctx.collisions);
    let cf = Message::ClientFinished(ClientFinished {
        mac: crypto::finished_mac(&secrets.ms, &digest),
    });
    state.append_transcript(&cf);
    state.secrets = Some(secrets);
    state.phase = Phase::AwaitServerCcs;
    vec![cke, Message::ChangeCipherSpec, cf]
}

fn client_on_sf(
    state: &mut EndpointState,
    config: &EndpointConfig,
    sf: &ServerFinished,
    msg: &Message,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    let negotiated = state.negotiated.expect("negotiated at hello");
    let secrets = state.secrets.clone().expect("secrets derived");
    let hash = finished_hash(negotiated.version, negotiated.suite).expect("mac above ssl2");

    if !verify_finished(&state.transcript, &sf.mac, &secrets.ms, hash, ctx.collisions) {
        return state.fail(AbortReason::FinishedMismatch);
    }

    if negotiated.version.is_tls13() {
        let cert = state.server_cert.clone().expect("certificate seen");
        let digest = crypto::transcript_hash(&state.transcript, HashAlgoId::Strong, ctx.collisions);
        match sf.transcript_sig {
            Some(sig) if verify_signature(&cert.public_key, &digest, sig) => {}
            _ => return state.fail(AbortReason::SignatureInvalid),
        }
        state.append_transcript(msg);
        let digest =
            crypto::transcript_hash(&state.transcript, hash, ctx.collisions);
        let cf = Message::ClientFinished(ClientFinished {
            mac: crypto::finished_mac(&secrets.ms, &digest),
        });
        state.append_transcript(&cf);
        state.phase = Phase::Established;
        return vec![cf];
    }

    let _ = config;
    state.append_transcript(msg);
    state.phase = Phase::Established;
    Vec::new()
}

// ---------------------------------------------------------------------------
// Server
// ---------------------------------------------------------------------------

pub fn server_step(
    state: &mut EndpointState,
    config: &EndpointConfig,
    msg: &Message,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    debug_assert_eq!(state.role, Role::Server);
    match (state.phase, msg) {
        (Phase::AwaitClientHello, Message::ClientHello(ch)) => server_on_ch(state, config, ch, msg),
        (Phase::AwaitClientKx, Message::ClientKeyExchange(cke)) => {
            server_on_cke(state, config, cke, msg)
        }
        (Phase::AwaitClientCcs, Message::ChangeCipherSpec) => {
            state.phase = Phase::AwaitClientFinished;
            Vec::new()
        }
        (Phase::AwaitClientFinished, Message::ClientFinished(cf)) => {
            server_on_cf(state, config, cf, msg, ctx)
        }
        (phase, other) => state.fail(AbortReason::ProtocolError(format!(
            "unexpected {:?} in {:?}",
            other.kind(),
            phase
        ))),
    }
}

fn negotiate_version(config: &EndpointConfig, ch: &ClientHello) -> Option<VersionId> {
    if config.version_max.is_tls13() && !ch.extensions.supported_versions.is_empty() {
        if let Some(v) = ch
            .extensions
            .supported_versions
            .iter()
            .copied()
            .filter(|v| *v >= config.version_min && *v <= config.version_max)
            .max()
        {
            return Some(v);
        }
    }
    let v = ch.vmax.min(config.version_max);
    if v < config.version_min {
        None
    } else {
        Some(v)
    }
}

fn negotiate_suite(config: &EndpointConfig, ch: &ClientHello, version: VersionId) -> Option<SuiteId> {
    config
        .suites_by_preference
        .iter()
        .copied()
        .find(|s| version_supports_suite(version, *s) && ch.suites.contains(s))
}

fn server_group_for_suite(config: &EndpointConfig, kx: KxAlgo) -> Option<GroupId> {
    match kx {
        KxAlgo::Dhe => config
            .groups_by_preference
            .iter()
            .copied()
            .find(|g| g.family() == GroupFamily::FiniteField),
        KxAlgo::DheExport => config
            .groups_by_preference
            .iter()
            .copied()
            .find(|g| {
                g.family() == GroupFamily::FiniteField && group(*g).strength == Strength::Export
            }),
        KxAlgo::Ecdhe => config
            .groups_by_preference
            .iter()
            .copied()
            .find(|g| g.family() == GroupFamily::EcToy),
        KxAlgo::Rsa | KxAlgo::RsaExport => None,
    }
}

fn server_certificate(config: &EndpointConfig) -> Certificate {
    let identity = config.identity.clone().expect("validated server identity");
    let key = config
        .rsa_key
        .as_ref()
        .expect("validated server key")
        .build()
        .expect("validated server key");
    Certificate {
        subject: identity.subject,
        issuer: identity.issuer,
        public_key: key.public_part(),
    }
}

fn server_long_term_key(config: &EndpointConfig) -> RsaToyKey {
    config
        .rsa_key
        .as_ref()
        .expect("validated server key")
        .build()
        .expect("validated server key")
}

fn server_on_ch(
    state: &mut EndpointState,
    config: &EndpointConfig,
    ch: &ClientHello,
    msg: &Message,
) -> Vec<Message> {
    let version = match negotiate_version(config, ch) {
        Some(v) => v,
        None => return state.fail(AbortReason::NoCommonVersion),
    };
    let suite = match negotiate_suite(config, ch, version) {
        Some(s) => s,
        None => return state.fail(AbortReason::NoCommonSuite),
    };

    if version.is_tls13() {
        match negotiate_group(ch, &config.groups_by_preference) {
            GroupDecision::Accept(group_id) => {
                state.append_transcript(msg);
                state.hello = Some(ch.clone());
                state.peer_nonce = Some(ch.nonce);
                server_accept_tls13(state, config, ch, version, suite, group_id)
            }
            GroupDecision::Retry(group_id) => {
                if state.hrr_seen {
                    return state.fail(AbortReason::NoCommonGroup);
                }
                state.hrr_seen = true;
                let policy = HelloRetryPolicy::for_version(version);
                let hrr = Message::HelloRetryRequest(HelloRetryRequest {
                    version,
                    suite,
                    group: group_id,
                });
                if policy.restart_transcript_on_hrr {
                    state.transcript.clear();
                } else {
                    state.append_transcript(msg);
                    state.append_transcript(&hrr);
                }
                // stay in AwaitClientHello for the retried hello
                vec![hrr]
            }
            GroupDecision::NoCommonGroup => state.fail(AbortReason::NoCommonGroup),
        }
    } else {
        state.append_transcript(msg);
        state.hello = Some(ch.clone());
        state.peer_nonce = Some(ch.nonce);
        server_accept_classic(state, config, ch, version, suite)
    }
}

fn server_nonce(state: &mut EndpointState, config: &EndpointConfig, ch: &ClientHello, version: VersionId) -> [u8; 16] {
    let mut nonce = [0u8; 16];
    nonce.copy_from_slice(&state.rng.bytes(16));
    if config.version_max == VersionId::Tls13Final && version < VersionId::Tls13Final {
        nonce = sentinel_nonce(nonce, client_offered_max(ch));
    }
    nonce
}

fn server_accept_tls13(
    state: &mut EndpointState,
    config: &EndpointConfig,
    ch: &ClientHello,
    version: VersionId,
    suite: SuiteId,
    group_id: GroupId,
) -> Vec<Message> {
    let ks = ch
        .extensions
        .key_share
        .iter()
        .find(|k| k.group == group_id)
        .expect("accept implies offered share");
    let own = match dh_keygen_with_rng(group(group_id), &mut state.rng) {
        Ok(p) => p,
        Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
    };
    let pms = match dh_shared_secret(&own, ks.public_value) {
        Ok(p) => p,
        Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
    };
    let nonce = server_nonce(state, config, ch, version);
    state.own_nonce = Some(nonce);
    state.dh_own = Some(own.clone());
    state.negotiated = Some(Negotiated {
        version,
        suite,
        group: Some(group_id),
    });
    let secrets = crypto::derive_secrets(&pms, &ch.nonce, &nonce);

    let sh = Message::ServerHello(ServerHello {
        version,
        nonce,
        suite,
        key_share: Some(KeyShareEntry {
            group: group_id,
            public_value: own.public_value,
        }),
    });
    state.append_transcript(&sh);
    let sc = Message::ServerCertificate(server_certificate(config));
    state.append_transcript(&sc);

    let hash = finished_hash(version, suite).expect("1.3 has a finished mac");
    let digest =
        crypto::transcript_hash(&state.transcript, hash, &CollisionTable::default());
    let strong_digest =
        crypto::transcript_hash(&state.transcript, HashAlgoId::Strong, &CollisionTable::default());
    let sf = Message::ServerFinished(ServerFinished {
        mac: crypto::finished_mac(&secrets.ms, &digest),
        transcript_sig: Some(sign_digest(&server_long_term_key(config), &strong_digest)),
    });
    state.append_transcript(&sf);
    state.secrets = Some(secrets);
    state.phase = Phase::AwaitClientFinished;
    vec![sh, sc, sf]
}

fn server_accept_classic(
    state: &mut EndpointState,
    config: &EndpointConfig,
    ch: &ClientHello,
    version: VersionId,
    suite: SuiteId,
) -> Vec<Message> {
    let nonce = server_nonce(state, config, ch, version);
    state.own_nonce = Some(nonce);
    state.negotiated = Some(Negotiated {
        version,
        suite,
        group: None,
    });

    let sh = Message::ServerHello(ServerHello {
        version,
        nonce,
        suite,
        key_share: None,
    });
    state.append_transcript(&sh);
    let sc = Message::ServerCertificate(server_certificate(config));
    state.append_transcript(&sc);
    let mut out = vec![sh, sc];

    if version == VersionId::Ssl20 {
        state.phase = Phase::AwaitClientKx;
        return out;
    }

    let kx = suite.suite().kx;
    if kx.sends_server_kx() {
        let params = match kx {
            KxAlgo::RsaExport => {
                let key = export_ephemeral_rsa();
                let params = KeyParams {
                    family: ParamFamily::RsaExport,
                    numbers: vec![key.modulus_n, key.public_exp],
                };
                state.export_rsa = Some(key);
                params
            }
            _ => {
                let group_id = match server_group_for_suite(config, kx) {
                    Some(g) => g,
                    None => {
                        return state.fail(AbortReason::ProtocolError(
                            "no configured group for suite".into(),
                        ))
                    }
                };
                let g = group(group_id);
                let own = match dh_keygen_with_rng(g, &mut state.rng) {
                    Ok(p) => p,
                    Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
                };
                let family = if g.family == GroupFamily::EcToy {
                    ParamFamily::Ec
                } else {
                    ParamFamily::Dh
                };
                let params = KeyParams {
                    family,
                    numbers: vec![g.prime_p, g.generator_g, own.public_value],
                };
                state.dh_own = Some(own);
                state.negotiated = Some(Negotiated {
                    version,
                    suite,
                    group: Some(group_id),
                });
                params
            }
        };
        let digest = ske_signature_digest(&ch.nonce, &nonce, &params);
        let ske = Message::ServerKeyExchange(ServerKeyExchange {
            signature: sign_digest(&server_long_term_key(config), &digest),
            params,
        });
        state.append_transcript(&ske);
        out.push(ske);
    }

    let shd = Message::ServerHelloDone;
    state.append_transcript(&shd);
    out.push(shd);
    state.phase = Phase::AwaitClientKx;
    out
}

fn server_on_cke(
    state: &mut EndpointState,
    config: &EndpointConfig,
    cke: &ClientKeyExchange,
    msg: &Message,
) -> Vec<Message> {
    let negotiated = state.negotiated.expect("negotiated at hello");
    let kx = negotiated.suite.suite().kx;
    let expected = expected_cke_family(kx);

    // A family tag that differs from the server's view is reinterpreted
    // under the server's own algorithm: suite choice is unauthenticated at
    // 1.2 and below, so the views can legitimately diverge here.
    let pms = match expected {
        ParamFamily::RsaWrapped => {
            let key = if kx == KxAlgo::RsaExport {
                match state.export_rsa.clone() {
                    Some(k) => k,
                    None => {
                        return state.fail(AbortReason::ProtocolError(
                            "no ephemeral export key in play".into(),
                        ))
                    }
                }
            } else {
                server_long_term_key(config)
            };
            match crypto::rsa_unwrap_pms(&RsaCiphertext(cke.params.numbers.clone()), &key) {
                Ok(p) => p,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            }
        }
        ParamFamily::Dh | ParamFamily::Ec => {
            let public = match cke.params.numbers.first() {
                Some(v) => *v,
                None => return state.fail(AbortReason::KeyParam("empty key exchange".into())),
            };
            let own = match state.dh_own.clone() {
                Some(p) => p,
                None => {
                    return state.fail(AbortReason::ProtocolError(
                        "no server group in play".into(),
                    ))
                }
            };
            match dh_shared_secret(&own, public) {
                Ok(p) => p,
                Err(e) => return state.fail(AbortReason::KeyParam(e.to_string())),
            }
        }
        ParamFamily::RsaExport => {
            return state.fail(AbortReason::KeyParam("unexpected key family".into()))
        }
    };

    state.append_transcript(msg);
    let n_i = state.peer_nonce.expect("client nonce seen");
    let n_r = state.own_nonce.expect("server nonce sent");
    state.secrets = Some(crypto::derive_secrets(&pms, &n_i, &n_r));

    if negotiated.version == VersionId::Ssl20 {
        state.phase = Phase::Established;
    } else {
        state.phase = Phase::AwaitClientCcs;
    }
    Vec::new()
}

fn server_on_cf(
    state: &mut EndpointState,
    config: &EndpointConfig,
    cf: &ClientFinished,
    msg: &Message,
    ctx: &HandshakeCtx,
) -> Vec<Message> {
    let negotiated = state.negotiated.expect("negotiated at hello");
    let secrets = state.secrets.clone().expect("secrets derived");
    let hash = finished_hash(negotiated.version, negotiated.suite).expect("mac above ssl2");

    if !verify_finished(&state.transcript, &cf.mac, &secrets.ms, hash, ctx.collisions) {
        return state.fail(AbortReason::FinishedMismatch);
    }
    state.append_transcript(msg);

    if negotiated.version.is_tls13() {
        state.phase = Phase::Established;
        return Vec::new();
    }

    let digest = crypto::transcript_hash(&state.transcript, hash, ctx.collisions);
    let sf = Message::ServerFinished(ServerFinished {
        mac: crypto::finished_mac(&secrets.ms, &digest),
        transcript_sig: None,
    });
    state.append_transcript(&sf);
    state.phase = Phase::Established;
    vec![Message::ChangeCipherSpec, sf]
}

// ---------------------------------------------------------------------------
// Application data
// ---------------------------------------------------------------------------

fn send_key(state: &EndpointState) -> &[u8] {
    let secrets = state.secrets.as_ref().expect("established");
    match state.role {
        Role::Client => &secrets.k_i,
        Role::Server => &secrets.k_r,
    }
}

fn recv_key(state: &EndpointState) -> &[u8] {
    let secrets = state.secrets.as_ref().expect("established");
    match state.role {
        Role::Client => &secrets.k_r,
        Role::Server => &secrets.k_i,
    }
}

pub fn send_app(state: &mut EndpointState, payload: &[u8]) -> Message {
    let enc = state.negotiated.expect("established").suite.suite().enc;
    let ciphertext = crypto::seal(send_key(state), enc, payload);
    state.app_sent.push(payload.to_vec());
    Message::AppData(AppData { ciphertext })
}

pub fn recv_app(state: &mut EndpointState, data: &AppData) -> Result<Vec<u8>, AbortReason> {
    let enc = state.negotiated.expect("established").suite.suite().enc;
    match crypto::open(recv_key(state), enc, &data.ciphertext) {
        Ok(pt) => {
            state.app_received.push(pt.clone());
            Ok(pt)
        }
        Err(_) => {
            state.aborted = Some(AbortReason::AppDataAuthFailure);
            state.phase = Phase::Failed;
            Err(AbortReason::AppDataAuthFailure)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::GroupId;

    fn client_config(max: VersionId, suites: Vec<SuiteId>) -> EndpointConfig {
        EndpointConfig {
            role: Role::Client,
            version_min: VersionId::Ssl30,
            version_max: max,
            suites_by_preference: suites,
            groups_by_preference: vec![GroupId::EcToyA, GroupId::DhStrong],
            bug_flags: BTreeSet::new(),
            rsa_key: None,
            identity: None,
            trust_store: [String::from("test-ca")].into(),
            policy: PolicyMode::FailClosed,
        }
    }

    fn server_config(max: VersionId, suites: Vec<SuiteId>) -> EndpointConfig {
        EndpointConfig {
            role: Role::Server,
            version_min: VersionId::Ssl20,
            version_max: max,
            suites_by_preference: suites,
            groups_by_preference: vec![GroupId::EcToyA, GroupId::DhStrong, GroupId::DhExport],
            bug_flags: BTreeSet::new(),
            rsa_key: Some(RsaKeySpec::strong_server(false)),
            identity: Some(CertIdentity {
                subject: "server.test".into(),
                issuer: "test-ca".into(),
            }),
            trust_store: BTreeSet::new(),
            policy: PolicyMode::FailClosed,
        }
    }

    fn start_client(config: &EndpointConfig) -> (EndpointState, Vec<Message>) {
        let mut st = EndpointState::new(Role::Client, 7, 0);
        let ctx_table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &ctx_table };
        let out = client_step(&mut st, config, ClientInput::Start(OfferConstraints::default()), &ctx);
        (st, out)
    }

    #[test]
    fn start_emits_hello_in_preference_order() {
        let cfg = client_config(VersionId::Tls12, vec![SuiteId::EcdheAead, SuiteId::DheAead]);
        let (st, out) = start_client(&cfg);
        assert_eq!(out.len(), 1);
        match &out[0] {
            Message::ClientHello(ch) => {
                assert_eq!(ch.suites, vec![SuiteId::EcdheAead, SuiteId::DheAead]);
                assert_eq!(ch.vmax, VersionId::Tls12);
                assert!(ch.extensions.supported_versions.is_empty());
            }
            other => panic!("expected CH, got {other:?}"),
        }
        assert_eq!(st.phase, Phase::AwaitServerHello);
    }

    #[test]
    fn tls13_hello_carries_extensions() {
        let cfg = client_config(VersionId::Tls13Final, vec![SuiteId::Tls13Aead, SuiteId::EcdheAead]);
        let (_, out) = start_client(&cfg);
        match &out[0] {
            Message::ClientHello(ch) => {
                assert_eq!(
                    ch.extensions.supported_versions.first(),
                    Some(&VersionId::Tls13Final)
                );
                assert_eq!(ch.extensions.key_share.len(), 1);
                assert_eq!(ch.extensions.key_share[0].group, GroupId::EcToyA);
            }
            other => panic!("expected CH, got {other:?}"),
        }
    }

    #[test]
    fn timeout_with_dance_lowers_version() {
        let mut cfg = client_config(VersionId::Tls12, vec![SuiteId::EcdheAead, SuiteId::RsaCbc]);
        cfg.bug_flags.insert(BugFlag::DowngradeDance);
        let (mut st, _) = start_client(&cfg);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        let out = client_step(&mut st, &cfg, ClientInput::Timeout, &ctx);
        assert!(out.is_empty());
        assert_eq!(st.aborted, Some(AbortReason::HandshakeTimeout));
        assert_eq!(st.retry, Some(RetrySpec::LowerVersion(VersionId::Tls11)));
    }

    #[test]
    fn timeout_without_dance_aborts() {
        let cfg = client_config(VersionId::Tls12, vec![SuiteId::EcdheAead]);
        let (mut st, _) = start_client(&cfg);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        client_step(&mut st, &cfg, ClientInput::Timeout, &ctx);
        assert_eq!(st.aborted, Some(AbortReason::HandshakeTimeout));
        assert_eq!(st.retry, None);
    }

    #[test]
    fn server_selects_by_its_own_preference() {
        let cfg = server_config(VersionId::Tls12, vec![SuiteId::DheExportCipher, SuiteId::DheAead]);
        let mut st = EndpointState::new(Role::Server, 9, 0);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        let ch = Message::ClientHello(ClientHello {
            vmax: VersionId::Tls12,
            nonce: [1; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::DheExportCipher],
            compressions: vec![0],
            extensions: Extensions::default(),
        });
        let out = server_step(&mut st, &cfg, &ch, &ctx);
        match &out[0] {
            Message::ServerHello(sh) => assert_eq!(sh.suite, SuiteId::DheExportCipher),
            other => panic!("expected SH, got {other:?}"),
        }
        // SKE present for an export suite
        assert!(out.iter().any(|m| matches!(m, Message::ServerKeyExchange(_))));
    }

    #[test]
    fn server_aborts_without_common_suite() {
        let cfg = server_config(VersionId::Tls12, vec![SuiteId::EcdheAead]);
        let mut st = EndpointState::new(Role::Server, 9, 0);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        let ch = Message::ClientHello(ClientHello {
            vmax: VersionId::Tls12,
            nonce: [1; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::NullNull],
            compressions: vec![0],
            extensions: Extensions::default(),
        });
        server_step(&mut st, &cfg, &ch, &ctx);
        assert_eq!(st.aborted, Some(AbortReason::NoCommonSuite));
    }

    #[test]
    fn sentinel_embedded_when_final_server_negotiates_lower() {
        let cfg = server_config(VersionId::Tls13Final, vec![SuiteId::Tls13Aead, SuiteId::EcdheAead]);
        let mut st = EndpointState::new(Role::Server, 9, 0);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        let ch = Message::ClientHello(ClientHello {
            vmax: VersionId::Tls12,
            nonce: [1; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::EcdheAead],
            compressions: vec![0],
            extensions: Extensions {
                supported_versions: vec![VersionId::Tls12],
                ..Extensions::default()
            },
        });
        let out = server_step(&mut st, &cfg, &ch, &ctx);
        match &out[0] {
            Message::ServerHello(sh) => {
                assert_eq!(sh.version, VersionId::Tls12);
                assert_eq!(sh.nonce[8..15], SENTINEL_TAG);
                assert_eq!(sh.nonce[15], VersionId::Tls12.wire_byte());
            }
            other => panic!("expected SH, got {other:?}"),
        }
    }

    #[test]
    fn check_sentinel_cases() {
        // honest 1.3 run: random nonce, no tag
        assert!(check_sentinel(&[0x11; 16], VersionId::Tls13Final).is_ok());
        // sentinel says TLS12 while the client offered 1.3
        let n = sentinel_nonce([0x11; 16], VersionId::Tls12);
        assert_eq!(
            check_sentinel(&n, VersionId::Tls13Final),
            Err(AbortReason::DowngradeDetected)
        );
        // sentinel matches what the client actually offered
        let n = sentinel_nonce([0x11; 16], VersionId::Tls12);
        assert!(check_sentinel(&n, VersionId::Tls12).is_ok());
    }

    #[test]
    fn interpret_key_params_matrix() {
        let dh = group(GroupId::DhStrong);
        let params = KeyParams {
            family: ParamFamily::Dh,
            numbers: vec![dh.prime_p, dh.generator_g, 12345],
        };
        let genuine = interpret_key_params(&params, ParamFamily::Dh).unwrap();
        assert!(!genuine.mismatched);
        assert_eq!(genuine.strength, Strength::Strong);

        let ec = group(GroupId::EcToyA);
        let ec_params = KeyParams {
            family: ParamFamily::Ec,
            numbers: vec![ec.prime_p, ec.generator_g, 98765],
        };
        let as_dh = interpret_key_params(&ec_params, ParamFamily::Dh).unwrap();
        assert!(as_dh.mismatched);
        assert_eq!(as_dh.strength, Strength::Export);

        let as_rsa = interpret_key_params(&params, ParamFamily::RsaExport).unwrap();
        assert!(as_rsa.mismatched);
        assert_eq!(as_rsa.strength, Strength::Export);
        match as_rsa.view {
            PublicKeyView::Rsa { public } => {
                assert_eq!(public.modulus_n, dh.prime_p);
                assert_eq!(public.public_exp, dh.generator_g);
            }
            other => panic!("expected RSA view, got {other:?}"),
        }
    }

    #[test]
    fn negotiate_group_cases() {
        let mk = |share: Vec<GroupId>, supported: Vec<GroupId>| ClientHello {
            vmax: VersionId::Tls13Final,
            nonce: [0; 16],
            legacy_session_id: vec![],
            suites: vec![SuiteId::Tls13Aead],
            compressions: vec![0],
            extensions: Extensions {
                supported_versions: vec![VersionId::Tls13Final],
                key_share: share
                    .into_iter()
                    .map(|g| KeyShareEntry { group: g, public_value: 4 })
                    .collect(),
                supported_groups: supported,
            },
        };
        // already acceptable: no retry
        let ch = mk(vec![GroupId::EcToyA], vec![GroupId::EcToyA, GroupId::EcToyB]);
        assert_eq!(
            negotiate_group(&ch, &[GroupId::EcToyA, GroupId::EcToyB]),
            GroupDecision::Accept(GroupId::EcToyA)
        );
        // share unsupported but supported_groups overlap: retry
        let ch = mk(vec![GroupId::EcToyA], vec![GroupId::EcToyA, GroupId::EcToyB]);
        assert_eq!(
            negotiate_group(&ch, &[GroupId::EcToyB]),
            GroupDecision::Retry(GroupId::EcToyB)
        );
        // nothing in common
        let ch = mk(vec![GroupId::EcToyA], vec![GroupId::EcToyA]);
        assert_eq!(negotiate_group(&ch, &[GroupId::DhStrong]), GroupDecision::NoCommonGroup);
    }

    #[test]
    fn unexpected_message_aborts() {
        let cfg = client_config(VersionId::Tls12, vec![SuiteId::EcdheAead]);
        let (mut st, _) = start_client(&cfg);
        let table = CollisionTable::default();
        let ctx = HandshakeCtx { collisions: &table };
        client_step(
            &mut st,
            &cfg,
            ClientInput::Incoming(&Message::ServerHelloDone),
            &ctx,
        );
        assert!(matches!(st.aborted, Some(AbortReason::ProtocolError(_))));
    }
}
