//! The man-in-the-middle: scripted interception of every message in both
//! directions, knowledge accumulation, and oracle use under a work budget.
//!
//! Scripts are data. Each rule pairs a message matcher with one action;
//! exactly one action applies per intercepted message (default Forward).
//! Modifications are declarative field edits so the trace records exactly
//! what changed; injection delivers an adversary-built message in place of
//! the intercepted one and grants no key material.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::catalog::{finished_hash, GroupId, HelloRetryPolicy, KxAlgo, SuiteId, VersionId};
use crate::crypto::{
    self, CollisionTable, CostModel, CryptoError, EffectiveKey, EncAlgo, HashAlgoId,
    OracleOutcome, PublicKeyView, RecoveredSecret, RsaCiphertext, RsaPublicKey, SecretBundle,
    WorkBudget,
};
use crate::error::SimError;
use crate::handshake::interpret_key_params;
use crate::msgs::{
    Direction, HelloRetryRequest, KeyParams, Message, MsgKind, ParamFamily, SmtpMessage,
    STARTTLS_VERB,
};

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub budget: u64,
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
}

impl AdversaryScript {
    pub fn passive(budget: u64) -> Self {
        Self { budget, rules: Vec::new() }
    }

    /// The interception methods this script can produce, for consistency
    /// checks against a declared taxonomy method.
    pub fn action_kinds(&self) -> Vec<ActionKind> {
        let mut kinds: Vec<ActionKind> = Vec::new();
        for r in &self.rules {
            let k = match r.action {
                ScriptAction::Drop => Some(ActionKind::Drop),
                ScriptAction::Modify { .. } => Some(ActionKind::Modify),
                ScriptAction::Inject { .. } => Some(ActionKind::Inject),
                _ => None,
            };
            if let Some(k) = k {
                if !kinds.contains(&k) {
                    kinds.push(k);
                }
            }
        }
        kinds
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matcher {
    pub kind: MsgKind,
    #[serde(default)]
    pub direction: Option<Direction>,
    /// 1-based occurrence of (kind, direction); absent means any.
    #[serde(default)]
    pub nth: Option<u32>,
    /// Matches occurrences 1..=first_n.
    #[serde(default)]
    pub first_n: Option<u32>,
}

impl Matcher {
    fn matches(&self, kind: MsgKind, direction: Direction, occurrence: u32) -> bool {
        if self.kind != kind {
            return false;
        }
        if let Some(d) = self.direction {
            if d != direction {
                return false;
            }
        }
        if let Some(n) = self.nth {
            if occurrence != n {
                return false;
            }
        }
        if let Some(n) = self.first_n {
            if occurrence > n {
                return false;
            }
        }
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptAction {
    Forward,
    Drop,
    Modify { edits: Vec<FieldEdit> },
    Inject { message: InjectSpec, direction: Direction },
    RecoverKey,
    Bleichenbacher,
    RegisterCollision,
    CbcRecover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldEdit {
    ChVmax(VersionId),
    ChSuites(Vec<SuiteId>),
    ChSupportedVersions(Vec<VersionId>),
    ShVersion(VersionId),
    ShSuite(SuiteId),
    SmtpStripStarttls,
    SmtpCorruptVerb(String),
    /// Replace a Finished MAC with one forged for the receiver's view.
    ForgeFinishedMac,
    /// Re-encrypt application data from the sender's keys to the
    /// receiver's keys (session-splitting attacks).
    RewrapAppData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectSpec {
    HelloRetry {
        version: VersionId,
        suite: SuiteId,
        group: GroupId,
    },
}

// ---------------------------------------------------------------------------
// Trace-level action record
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Forward,
    Drop,
    Modify,
    Inject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    RecoverKey,
    Bleichenbacher,
    RegisterCollision,
    CbcRecover,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleEvent {
    pub oracle: OracleKind,
    pub cost_debited: u64,
    pub success: bool,
    pub detail: String,
}

/// What the interceptor did with one in-flight message.
#[derive(Debug, Clone)]
pub struct InterceptOutcome {
    pub deliveries: Vec<(Direction, Message)>,
    pub action: ActionKind,
    pub edits: Vec<String>,
    pub oracle: Option<OracleEvent>,
}

// ---------------------------------------------------------------------------
// Knowledge
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Derivation {
    Observation { seq: u32 },
    DlogOracle { prime: u64, generator: u64, public_value: u64 },
    FactoringOracle { modulus: u64, public_exp: u64 },
    MismatchInverse { modulus: u64, public_exp: u64 },
    BleichenbacherOracle { modulus: u64, public_exp: u64, blocks: Vec<u64> },
    RsaUnwrap { private_exp: u64, modulus: u64, blocks: Vec<u64> },
    DhCompute { peer_public: u64, exponent: u64, prime: u64 },
    Kdf { pms: Vec<u8>, nonce_i: Vec<u8>, nonce_r: Vec<u8>, part: KdfPart },
    NullCipher { seq: u32 },
    SessionKeyDecrypt { key: Vec<u8>, enc: EncAlgo, ciphertext: Vec<u8> },
    CbcOracle { seq: u32 },
    ProxyTermination { detail: String },
    CollisionOracle,
    PlaintextObservation { seq: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdfPart {
    Ms,
    KI,
    KR,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownSecret {
    pub label: String,
    pub value: Vec<u8>,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownPlaintext {
    pub value: Vec<u8>,
    pub derivation: Derivation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeSet {
    pub observed: Vec<ObservedMessage>,
    pub secrets: Vec<KnownSecret>,
    pub plaintexts: Vec<KnownPlaintext>,
    pub forged: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedMessage {
    pub seq: u32,
    pub direction: Direction,
    pub kind: MsgKind,
    pub bytes: Vec<u8>,
}

impl KnowledgeSet {
    pub fn has_plaintext_containing(&self, needle: &[u8]) -> bool {
        self.plaintexts
            .iter()
            .any(|p| p.value.windows(needle.len().max(1)).any(|w| w == needle))
    }

    /// Every non-observational entry must be recomputable from its
    /// recorded derivation; no spontaneous knowledge.
    pub fn replay_check(&self) -> Result<(), String> {
        for s in &self.secrets {
            replay_derivation(&s.derivation, &s.value, &self.observed)
                .map_err(|e| format!("secret {}: {e}", s.label))?;
        }
        for p in &self.plaintexts {
            replay_derivation(&p.derivation, &p.value, &self.observed)
                .map_err(|e| format!("plaintext: {e}"))?;
        }
        Ok(())
    }
}

fn replay_derivation(
    derivation: &Derivation,
    value: &[u8],
    observed: &[ObservedMessage],
) -> Result<(), String> {
    let check = |recomputed: Vec<u8>| {
        if recomputed == value {
            Ok(())
        } else {
            Err("replay produced a different value".to_string())
        }
    };
    match derivation {
        Derivation::Observation { seq } | Derivation::PlaintextObservation { seq } => {
            let found = observed.iter().find(|o| o.seq == *seq).ok_or("seq not observed")?;
            if found.bytes.is_empty() {
                return Err("empty observation".into());
            }
            Ok(())
        }
        Derivation::DlogOracle { prime, generator, public_value } => {
            let order = crate::arith::element_order(*generator, *prime);
            let x = crate::arith::baby_step_giant_step(*generator, *public_value, *prime, order)
                .ok_or("dlog replay failed")?;
            check(x.to_be_bytes().to_vec())
        }
        Derivation::FactoringOracle { modulus, public_exp } => {
            let p = crate::arith::smallest_prime_factor(*modulus).ok_or("no factor")?;
            let q = modulus / p;
            let d = crate::arith::mod_inverse(*public_exp, (p - 1) * (q - 1))
                .ok_or("no inverse")?;
            check(d.to_be_bytes().to_vec())
        }
        Derivation::MismatchInverse { modulus, public_exp } => {
            let d = crate::arith::mod_inverse(*public_exp, modulus - 1).ok_or("no inverse")?;
            check(d.to_be_bytes().to_vec())
        }
        Derivation::BleichenbacherOracle { modulus, public_exp, blocks } => {
            let key = RsaPublicKey {
                modulus_n: *modulus,
                public_exp: *public_exp,
                strength: crypto::strength_of(*modulus),
                shared_with_sslv2: true,
            };
            let mut replay_budget = WorkBudget::new(u64::MAX);
            match crypto::bleichenbacher_decrypt(
                &RsaCiphertext(blocks.clone()),
                &key,
                &mut replay_budget,
                &CostModel::default(),
            ) {
                Ok(OracleOutcome::Recovered(pms)) => check(pms),
                _ => Err("bleichenbacher replay failed".into()),
            }
        }
        Derivation::RsaUnwrap { private_exp, modulus, blocks } => {
            let pms =
                crypto::rsa_unwrap_with_recovered(&RsaCiphertext(blocks.clone()), *private_exp, *modulus)
                    .map_err(|e| e.to_string())?;
            check(pms)
        }
        Derivation::DhCompute { peer_public, exponent, prime } => {
            check(crypto::encode_shared(crate::arith::mod_exp(
                *peer_public,
                *exponent,
                *prime,
            )))
        }
        Derivation::Kdf { pms, nonce_i, nonce_r, part } => {
            let bundle = crypto::derive_secrets(pms, nonce_i, nonce_r);
            check(match part {
                KdfPart::Ms => bundle.ms,
                KdfPart::KI => bundle.k_i,
                KdfPart::KR => bundle.k_r,
            })
        }
        Derivation::NullCipher { seq } => {
            let found = observed.iter().find(|o| o.seq == *seq).ok_or("seq not observed")?;
            if found.kind == MsgKind::AppData || found.kind == MsgKind::SmtpPlainMail {
                Ok(())
            } else {
                Err("null-cipher derivation does not point at app data".into())
            }
        }
        Derivation::SessionKeyDecrypt { key, enc, ciphertext } => {
            let pt = crypto::open(key, *enc, ciphertext).map_err(|e| e.to_string())?;
            check(pt)
        }
        Derivation::CbcOracle { seq } => {
            observed.iter().find(|o| o.seq == *seq).ok_or("seq not observed")?;
            Ok(())
        }
        Derivation::ProxyTermination { .. } => Ok(()),
        Derivation::CollisionOracle => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Per-side protocol views
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewSide {
    Client,
    Server,
}

/// What one endpoint believes about the session, reconstructed by the
/// adversary from the bytes that endpoint sent and was delivered.
#[derive(Debug, Clone, Default)]
pub struct SideView {
    pub transcript: Vec<u8>,
    pub nonce_i: Option<[u8; 16]>,
    pub nonce_r: Option<[u8; 16]>,
    pub version: Option<VersionId>,
    pub suite: Option<SuiteId>,
    pub ske: Option<KeyParams>,
    pub cke: Option<KeyParams>,
    pub cert_key: Option<RsaPublicKey>,
    pub bundle: Option<SecretBundle>,
}

impl SideView {
    fn finished_hash(&self) -> Option<HashAlgoId> {
        match (self.version, self.suite) {
            (Some(v), Some(s)) => finished_hash(v, s),
            _ => None,
        }
    }

    fn enc(&self) -> Option<EncAlgo> {
        self.suite.map(|s| s.suite().enc)
    }

    /// The key-exchange key as this side would interpret the ServerKeyExchange.
    fn effective_ske_key(&self) -> Option<EffectiveKey> {
        let suite = self.suite?.suite();
        let expected = match suite.kx {
            KxAlgo::Rsa => {
                if self.ske.is_some() {
                    ParamFamily::RsaExport
                } else {
                    return None;
                }
            }
            KxAlgo::RsaExport => ParamFamily::RsaExport,
            KxAlgo::Dhe | KxAlgo::DheExport => ParamFamily::Dh,
            KxAlgo::Ecdhe => ParamFamily::Ec,
        };
        interpret_key_params(self.ske.as_ref()?, expected).ok()
    }
}

// ---------------------------------------------------------------------------
// The adversary engine
// ---------------------------------------------------------------------------

pub struct Adversary {
    script: AdversaryScript,
    pub budget: WorkBudget,
    pub costs: CostModel,
    pub knowledge: KnowledgeSet,
    pub client_view: SideView,
    pub server_view: SideView,
    counters: HashMap<(MsgKind, Direction), u32>,
    seq: u32,
    /// POODLE target: the secret substring the CBC oracle can recover.
    app_secret: Option<Vec<u8>>,
    pub initial_budget: u64,
    pub total_debited: u64,
}

impl Adversary {
    pub fn new(script: AdversaryScript, app_secret: Option<Vec<u8>>) -> Self {
        let budget = WorkBudget::new(script.budget);
        Self {
            initial_budget: script.budget,
            budget,
            costs: CostModel::default(),
            knowledge: KnowledgeSet::default(),
            client_view: SideView::default(),
            server_view: SideView::default(),
            counters: HashMap::new(),
            seq: 0,
            app_secret,
            script,
        }
    }

    fn view_mut(&mut self, side: ViewSide) -> &mut SideView {
        match side {
            ViewSide::Client => &mut self.client_view,
            ViewSide::Server => &mut self.server_view,
        }
    }

    pub fn view(&self, side: ViewSide) -> &SideView {
        match side {
            ViewSide::Client => &self.client_view,
            ViewSide::Server => &self.server_view,
        }
    }

    fn sender_side(direction: Direction) -> ViewSide {
        match direction {
            Direction::ClientToServer => ViewSide::Client,
            Direction::ServerToClient => ViewSide::Server,
        }
    }

    fn receiver_side(direction: Direction) -> ViewSide {
        Self::sender_side(direction.flip())
    }

    fn observe(&mut self, msg: &Message, direction: Direction) -> u32 {
        self.seq += 1;
        let seq = self.seq;
        self.knowledge.observed.push(ObservedMessage {
            seq,
            direction,
            kind: msg.kind(),
            bytes: msg.canonical_bytes(),
        });
        seq
    }

    /// Mirror of the endpoints' transcript/view bookkeeping, applied to the
    /// message a side sent (original) or was delivered (possibly modified).
    fn update_view(&mut self, side: ViewSide, msg: &Message, seq: u32) {
        // HelloRetryRequest transcript policy mirrors the endpoints.
        if let Message::HelloRetryRequest(hrr) = msg {
            let restart = HelloRetryPolicy::for_version(hrr.version).restart_transcript_on_hrr;
            let v = self.view_mut(side);
            if restart {
                v.transcript.clear();
            } else {
                v.transcript.extend_from_slice(&msg.canonical_bytes());
            }
            return;
        }
        if msg.in_transcript() {
            let bytes = msg.canonical_bytes();
            self.view_mut(side).transcript.extend_from_slice(&bytes);
        }
        match msg {
            Message::ClientHello(ch) => {
                let v = self.view_mut(side);
                v.nonce_i = Some(ch.nonce);
            }
            Message::ServerHello(sh) => {
                let v = self.view_mut(side);
                v.nonce_r = Some(sh.nonce);
                v.version = Some(sh.version);
                v.suite = Some(sh.suite);
            }
            Message::ServerCertificate(c) => {
                self.view_mut(side).cert_key = Some(c.public_key.clone());
            }
            Message::ServerKeyExchange(ske) => {
                self.view_mut(side).ske = Some(ske.params.clone());
            }
            Message::ClientKeyExchange(cke) => {
                self.view_mut(side).cke = Some(cke.params.clone());
            }
            Message::AppData(data) => {
                self.try_read_app_data(side, &data.ciphertext, seq);
            }
            Message::Smtp(SmtpMessage::PlainMail { payload }) => {
                self.knowledge.plaintexts.push(KnownPlaintext {
                    value: payload.clone(),
                    derivation: Derivation::PlaintextObservation { seq },
                });
            }
            _ => {}
        }
    }

    fn try_read_app_data(&mut self, sender: ViewSide, ciphertext: &[u8], seq: u32) {
        let view = self.view(sender);
        match view.enc() {
            Some(EncAlgo::Null) => {
                self.knowledge.plaintexts.push(KnownPlaintext {
                    value: ciphertext.to_vec(),
                    derivation: Derivation::NullCipher { seq },
                });
            }
            Some(enc) => {
                if let Some(bundle) = &view.bundle {
                    let key = match sender {
                        ViewSide::Client => bundle.k_i.clone(),
                        ViewSide::Server => bundle.k_r.clone(),
                    };
                    if let Ok(pt) = crypto::open(&key, enc, ciphertext) {
                        self.knowledge.plaintexts.push(KnownPlaintext {
                            value: pt,
                            derivation: Derivation::SessionKeyDecrypt {
                                key,
                                enc,
                                ciphertext: ciphertext.to_vec(),
                            },
                        });
                    }
                }
            }
            None => {}
        }
    }

    fn action_for(&mut self, kind: MsgKind, direction: Direction) -> ScriptAction {
        let counter = self.counters.entry((kind, direction)).or_insert(0);
        *counter += 1;
        let occurrence = *counter;
        for rule in &self.script.rules {
            if rule.matcher.matches(kind, direction, occurrence) {
                return rule.action.clone();
            }
        }
        ScriptAction::Forward
    }

    /// Intercept one in-flight message and decide what the network delivers.
    pub fn intercept(
        &mut self,
        msg: &Message,
        direction: Direction,
        collisions: &mut CollisionTable,
    ) -> Result<InterceptOutcome, SimError> {
        let seq = self.observe(msg, direction);
        self.update_view(Self::sender_side(direction), msg, seq);

        let action = self.action_for(msg.kind(), direction);
        let outcome = match action {
            ScriptAction::Forward => {
                self.deliver(msg.clone(), direction, ActionKind::Forward, vec![], None)
            }
            ScriptAction::Drop => InterceptOutcome {
                deliveries: vec![],
                action: ActionKind::Drop,
                edits: vec![],
                oracle: None,
            },
            ScriptAction::Modify { edits } => {
                let (modified, descriptions) = self.apply_edits(msg, direction, &edits)?;
                self.deliver(modified, direction, ActionKind::Modify, descriptions, None)
            }
            ScriptAction::Inject { message, direction: inject_dir } => {
                let injected = self.build_injection(&message);
                self.knowledge.forged.push(format!("injected {}", injected.summary()));
                self.deliver(injected, inject_dir, ActionKind::Inject, vec![], None)
            }
            ScriptAction::RecoverKey => {
                let ev = self.run_key_recovery();
                self.deliver(msg.clone(), direction, ActionKind::Forward, vec![], Some(ev))
            }
            ScriptAction::Bleichenbacher => {
                let ev = self.run_bleichenbacher();
                self.deliver(msg.clone(), direction, ActionKind::Forward, vec![], Some(ev))
            }
            ScriptAction::RegisterCollision => {
                let ev = self.run_register_collision(collisions);
                self.deliver(msg.clone(), direction, ActionKind::Forward, vec![], Some(ev))
            }
            ScriptAction::CbcRecover => {
                let ev = self.run_cbc_recover(direction, seq);
                self.deliver(msg.clone(), direction, ActionKind::Forward, vec![], Some(ev))
            }
        };
        Ok(outcome)
    }

    fn deliver(
        &mut self,
        msg: Message,
        direction: Direction,
        action: ActionKind,
        edits: Vec<String>,
        oracle: Option<OracleEvent>,
    ) -> InterceptOutcome {
        let seq = self.seq;
        self.update_view(Self::receiver_side(direction), &msg, seq);
        InterceptOutcome {
            deliveries: vec![(direction, msg)],
            action,
            edits,
            oracle,
        }
    }

    fn build_injection(&self, spec: &InjectSpec) -> Message {
        match spec {
            InjectSpec::HelloRetry { version, suite, group } => {
                Message::HelloRetryRequest(HelloRetryRequest {
                    version: *version,
                    suite: *suite,
                    group: *group,
                })
            }
        }
    }

    fn apply_edits(
        &mut self,
        msg: &Message,
        direction: Direction,
        edits: &[FieldEdit],
    ) -> Result<(Message, Vec<String>), SimError> {
        let mut m = msg.clone();
        let mut descriptions = Vec::new();
        for edit in edits {
            match (edit, &mut m) {
                (FieldEdit::ChVmax(v), Message::ClientHello(ch)) => {
                    descriptions.push(format!("ch.vmax: {} -> {}", ch.vmax.as_str(), v.as_str()));
                    ch.vmax = *v;
                }
                (FieldEdit::ChSuites(suites), Message::ClientHello(ch)) => {
                    descriptions.push(format!(
                        "ch.suites: [{}] -> [{}]",
                        ch.suites.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
                        suites.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(","),
                    ));
                    ch.suites = suites.clone();
                }
                (FieldEdit::ChSupportedVersions(vs), Message::ClientHello(ch)) => {
                    descriptions.push(format!(
                        "ch.supported_versions -> [{}]",
                        vs.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(",")
                    ));
                    ch.extensions.supported_versions = vs.clone();
                }
                (FieldEdit::ShVersion(v), Message::ServerHello(sh)) => {
                    descriptions.push(format!(
                        "sh.version: {} -> {}",
                        sh.version.as_str(),
                        v.as_str()
                    ));
                    sh.version = *v;
                }
                (FieldEdit::ShSuite(s), Message::ServerHello(sh)) => {
                    descriptions.push(format!(
                        "sh.suite: {} -> {}",
                        sh.suite.as_str(),
                        s.as_str()
                    ));
                    sh.suite = *s;
                }
                (FieldEdit::SmtpStripStarttls, Message::Smtp(SmtpMessage::Capabilities { starttls, .. })) => {
                    descriptions.push("smtp.capabilities: starttls stripped".into());
                    *starttls = false;
                }
                (FieldEdit::SmtpCorruptVerb(verb), Message::Smtp(SmtpMessage::StartTls { verb: v })) => {
                    descriptions.push(format!("smtp.starttls verb: {v} -> {verb}"));
                    *v = verb.clone();
                }
                (FieldEdit::ForgeFinishedMac, Message::ClientFinished(cf)) => {
                    let receiver = Self::receiver_side(direction);
                    match self.forge_for_receiver(receiver) {
                        Some(tag) => {
                            descriptions.push("cf.mac: forged for receiver view".into());
                            self.knowledge.forged.push("forged client finished".into());
                            cf.mac = tag;
                        }
                        None => descriptions.push("cf.mac: forge unavailable, left intact".into()),
                    }
                }
                (FieldEdit::ForgeFinishedMac, Message::ServerFinished(sf)) => {
                    let receiver = Self::receiver_side(direction);
                    match self.forge_for_receiver(receiver) {
                        Some(tag) => {
                            descriptions.push("sf.mac: forged for receiver view".into());
                            self.knowledge.forged.push("forged server finished".into());
                            sf.mac = tag;
                        }
                        None => descriptions.push("sf.mac: forge unavailable, left intact".into()),
                    }
                }
                (FieldEdit::RewrapAppData, Message::AppData(data)) => {
                    let sender = Self::sender_side(direction);
                    let receiver = Self::receiver_side(direction);
                    match self.rewrap(sender, receiver, &data.ciphertext) {
                        Some(ct) => {
                            descriptions.push("appdata: re-encrypted for receiver keys".into());
                            data.ciphertext = ct;
                        }
                        None => descriptions.push("appdata: rewrap unavailable, left intact".into()),
                    }
                }
                (edit, m) => {
                    return Err(SimError::Script(format!(
                        "edit {edit:?} does not apply to {:?}",
                        m.kind()
                    )));
                }
            }
        }
        Ok((m, descriptions))
    }

    /// Tag accepted by `receiver` over its own expected transcript, using
    /// the bundle recovered for that side. The receiver's transcript at
    /// Finished-verification time is exactly the adversary's view of it.
    fn forge_for_receiver(&self, receiver: ViewSide) -> Option<Vec<u8>> {
        let view = self.view(receiver);
        let bundle = view.bundle.as_ref()?;
        let hash = view.finished_hash()?;
        let digest = crypto::transcript_hash(&view.transcript, hash, &CollisionTable::default());
        Some(crypto::finished_mac(&bundle.ms, &digest))
    }

    fn rewrap(&self, sender: ViewSide, receiver: ViewSide, ciphertext: &[u8]) -> Option<Vec<u8>> {
        let sv = self.view(sender);
        let rv = self.view(receiver);
        let (s_enc, r_enc) = (sv.enc()?, rv.enc()?);
        let s_key = match sender {
            ViewSide::Client => sv.bundle.as_ref()?.k_i.clone(),
            ViewSide::Server => sv.bundle.as_ref()?.k_r.clone(),
        };
        // the receiver opens with the key it holds for the *sender's* role
        let r_key = match sender {
            ViewSide::Client => rv.bundle.as_ref()?.k_i.clone(),
            ViewSide::Server => rv.bundle.as_ref()?.k_r.clone(),
        };
        let pt = crypto::open(&s_key, s_enc, ciphertext).ok()?;
        Some(crypto::seal(&r_key, r_enc, &pt))
    }

    // -- oracles ------------------------------------------------------------

    fn record_kdf(&mut self, side: ViewSide, pms: &[u8], detail_derivation: Derivation) {
        let (n_i, n_r) = {
            let v = self.view(side);
            match (v.nonce_i, v.nonce_r) {
                (Some(a), Some(b)) => (a.to_vec(), b.to_vec()),
                _ => return,
            }
        };
        let bundle = crypto::derive_secrets(pms, &n_i, &n_r);
        let side_label = match side {
            ViewSide::Client => "client",
            ViewSide::Server => "server",
        };
        self.knowledge.secrets.push(KnownSecret {
            label: format!("{side_label}.pms"),
            value: pms.to_vec(),
            derivation: detail_derivation,
        });
        for (part, label, value) in [
            (KdfPart::Ms, "ms", bundle.ms.clone()),
            (KdfPart::KI, "k_i", bundle.k_i.clone()),
            (KdfPart::KR, "k_r", bundle.k_r.clone()),
        ] {
            self.knowledge.secrets.push(KnownSecret {
                label: format!("{side_label}.{label}"),
                value,
                derivation: Derivation::Kdf {
                    pms: pms.to_vec(),
                    nonce_i: n_i.clone(),
                    nonce_r: n_r.clone(),
                    part,
                },
            });
        }
        self.view_mut(side).bundle = Some(bundle);
    }

    /// Attempt key recovery for each side's view of the exchange. A side
    /// whose view is strong (or whose recovery the budget cannot cover)
    /// is left unchanged.
    fn run_key_recovery(&mut self) -> OracleEvent {
        let before = self.budget.remaining();
        let mut notes = Vec::new();
        for side in [ViewSide::Client, ViewSide::Server] {
            if self.view(side).bundle.is_some() {
                continue;
            }
            match self.recover_side(side) {
                Ok(Some(note)) => notes.push(note),
                Ok(None) => {}
                Err(e) => notes.push(format!("{side:?}: {e}")),
            }
        }
        let debited = before - self.budget.remaining();
        self.total_debited += debited;
        OracleEvent {
            oracle: OracleKind::RecoverKey,
            cost_debited: debited,
            success: notes.iter().any(|n| n.contains("recovered")),
            detail: if notes.is_empty() { "no recoverable view".into() } else { notes.join("; ") },
        }
    }

    fn recover_side(&mut self, side: ViewSide) -> Result<Option<String>, CryptoError> {
        let view = self.view(side).clone();
        let effective = match view.effective_ske_key() {
            Some(k) => k,
            None => return Ok(None),
        };
        let cke = match &view.cke {
            Some(c) => c.clone(),
            None => return Ok(None),
        };
        let side_label = match side {
            ViewSide::Client => "client",
            ViewSide::Server => "server",
        };
        match &effective.view {
            PublicKeyView::Dh { group, public_value } => {
                match crypto::recover_private(&effective, &mut self.budget, &self.costs)? {
                    OracleOutcome::Recovered(RecoveredSecret::DhExponent(b)) => {
                        self.knowledge.secrets.push(KnownSecret {
                            label: format!("{side_label}.server_dh_exponent"),
                            value: b.to_be_bytes().to_vec(),
                            derivation: Derivation::DlogOracle {
                                prime: group.prime_p,
                                generator: group.generator_g,
                                public_value: *public_value,
                            },
                        });
                        // pms as this side computed it: peer_public ^ b
                        let peer = match cke.numbers.first() {
                            Some(v) => *v,
                            None => return Ok(Some(format!("{side_label}: empty key exchange"))),
                        };
                        let pms =
                            crypto::encode_shared(crate::arith::mod_exp(peer, b, group.prime_p));
                        self.record_kdf(
                            side,
                            &pms,
                            Derivation::DhCompute {
                                peer_public: peer,
                                exponent: b,
                                prime: group.prime_p,
                            },
                        );
                        Ok(Some(format!("{side_label}: dh exponent recovered")))
                    }
                    OracleOutcome::Recovered(_) => Ok(Some(format!("{side_label}: unexpected secret kind"))),
                    OracleOutcome::Infeasible => Ok(Some(format!("{side_label}: infeasible"))),
                }
            }
            PublicKeyView::Rsa { public } => {
                match crypto::recover_private(&effective, &mut self.budget, &self.costs)? {
                    OracleOutcome::Recovered(RecoveredSecret::RsaPrivateExponent(d)) => {
                        let derivation = if effective.mismatched && crate::arith::is_prime(public.modulus_n)
                        {
                            Derivation::MismatchInverse {
                                modulus: public.modulus_n,
                                public_exp: public.public_exp,
                            }
                        } else {
                            Derivation::FactoringOracle {
                                modulus: public.modulus_n,
                                public_exp: public.public_exp,
                            }
                        };
                        self.knowledge.secrets.push(KnownSecret {
                            label: format!("{side_label}.rsa_private_exponent"),
                            value: d.to_be_bytes().to_vec(),
                            derivation,
                        });
                        let pms = crypto::rsa_unwrap_with_recovered(
                            &RsaCiphertext(cke.numbers.clone()),
                            d,
                            public.modulus_n,
                        )?;
                        self.record_kdf(
                            side,
                            &pms,
                            Derivation::RsaUnwrap {
                                private_exp: d,
                                modulus: public.modulus_n,
                                blocks: cke.numbers.clone(),
                            },
                        );
                        Ok(Some(format!("{side_label}: rsa private exponent recovered")))
                    }
                    OracleOutcome::Recovered(_) => Ok(Some(format!("{side_label}: unexpected secret kind"))),
                    OracleOutcome::Infeasible => Ok(Some(format!("{side_label}: infeasible"))),
                }
            }
        }
    }

    fn run_bleichenbacher(&mut self) -> OracleEvent {
        let before = self.budget.remaining();
        let detail;
        let mut success = false;
        let cert = self.server_view.cert_key.clone().or_else(|| self.client_view.cert_key.clone());
        let cke = self
            .server_view
            .cke
            .clone()
            .or_else(|| self.client_view.cke.clone());
        match (cert, cke) {
            (Some(key), Some(cke)) => {
                let ct = RsaCiphertext(cke.numbers.clone());
                match crypto::bleichenbacher_decrypt(&ct, &key, &mut self.budget, &self.costs) {
                    Ok(OracleOutcome::Recovered(pms)) => {
                        success = true;
                        detail = "pre-master secret decrypted via shared-key oracle".to_string();
                        let derivation = Derivation::BleichenbacherOracle {
                            modulus: key.modulus_n,
                            public_exp: key.public_exp,
                            blocks: cke.numbers.clone(),
                        };
                        self.record_kdf(ViewSide::Client, &pms, derivation.clone());
                        self.record_kdf(ViewSide::Server, &pms, derivation);
                    }
                    Ok(OracleOutcome::Infeasible) => detail = "oracle infeasible".to_string(),
                    Err(e) => detail = e.to_string(),
                }
            }
            _ => detail = "no observed certificate or key exchange".to_string(),
        }
        let debited = before - self.budget.remaining();
        self.total_debited += debited;
        OracleEvent {
            oracle: OracleKind::Bleichenbacher,
            cost_debited: debited,
            success,
            detail,
        }
    }

    fn run_register_collision(&mut self, collisions: &mut CollisionTable) -> OracleEvent {
        let before = self.budget.remaining();
        let hash = self
            .client_view
            .finished_hash()
            .or_else(|| self.server_view.finished_hash());
        let (success, detail) = match hash {
            Some(h) => {
                match crypto::register_collision(
                    collisions,
                    &self.client_view.transcript,
                    &self.server_view.transcript,
                    h,
                    &mut self.budget,
                    &self.costs,
                ) {
                    Ok(OracleOutcome::Recovered(())) => {
                        self.knowledge.secrets.push(KnownSecret {
                            label: "transcript_collision".into(),
                            value: Vec::new(),
                            derivation: Derivation::CollisionOracle,
                        });
                        self.knowledge.forged.push("transcript collision registered".into());
                        (true, "collision registered between endpoint views".to_string())
                    }
                    Ok(OracleOutcome::Infeasible) => (false, "budget exhausted".to_string()),
                    Err(e) => (false, e.to_string()),
                }
            }
            None => (false, "no finished mac in this session".to_string()),
        };
        let debited = before - self.budget.remaining();
        self.total_debited += debited;
        OracleEvent {
            oracle: OracleKind::RegisterCollision,
            cost_debited: debited,
            success,
            detail,
        }
    }

    fn run_cbc_recover(&mut self, direction: Direction, seq: u32) -> OracleEvent {
        let before = self.budget.remaining();
        let sender = Self::sender_side(direction);
        let view = self.view(sender);
        let conditions = view.version == Some(VersionId::Ssl30)
            && view.enc() == Some(EncAlgo::CbcBlock)
            && self.app_secret.is_some();
        let (success, detail) = if !conditions {
            (false, "cbc oracle conditions not met".to_string())
        } else if !self.budget.try_debit(self.costs.cbc_recover) {
            (false, "budget exhausted".to_string())
        } else {
            let secret = self.app_secret.clone().expect("checked above");
            self.knowledge.plaintexts.push(KnownPlaintext {
                value: secret,
                derivation: Derivation::CbcOracle { seq },
            });
            (true, "secret bytes recovered from ssl3 cbc traffic".to_string())
        };
        let debited = before - self.budget.remaining();
        self.total_debited += debited;
        OracleEvent {
            oracle: OracleKind::CbcRecover,
            cost_debited: debited,
            success,
            detail,
        }
    }
}

/// Forge a Finished tag for an arbitrary transcript: possible with the
/// master secret, or by reusing an observed honest tag when the weak hash
/// carries a registered collision for the target transcript.
pub fn forge_finished(
    ms: Option<&[u8]>,
    observed_honest: Option<(&[u8], &[u8])>, // (tag, transcript it authenticated)
    target_transcript: &[u8],
    hash_algo: HashAlgoId,
    collisions: &CollisionTable,
) -> Option<Vec<u8>> {
    if let Some(ms) = ms {
        let digest = crypto::transcript_hash(target_transcript, hash_algo, collisions);
        return Some(crypto::finished_mac(ms, &digest));
    }
    if !hash_algo.collision_resistant() {
        if let Some((tag, original)) = observed_honest {
            let a = crypto::transcript_hash(original, hash_algo, collisions);
            let b = crypto::transcript_hash(target_transcript, hash_algo, collisions);
            if a == b {
                return Some(tag.to_vec());
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::WorkBudget;

    #[test]
    fn matcher_occurrence_semantics() {
        let m = Matcher {
            kind: MsgKind::ClientHello,
            direction: Some(Direction::ClientToServer),
            nth: None,
            first_n: Some(3),
        };
        assert!(m.matches(MsgKind::ClientHello, Direction::ClientToServer, 1));
        assert!(m.matches(MsgKind::ClientHello, Direction::ClientToServer, 3));
        assert!(!m.matches(MsgKind::ClientHello, Direction::ClientToServer, 4));
        assert!(!m.matches(MsgKind::ServerHello, Direction::ClientToServer, 1));
        assert!(!m.matches(MsgKind::ClientHello, Direction::ServerToClient, 1));
    }

    #[test]
    fn default_action_is_forward() {
        let mut adv = Adversary::new(AdversaryScript::passive(0), None);
        let mut table = CollisionTable::default();
        let msg = Message::ServerHelloDone;
        let out = adv
            .intercept(&msg, Direction::ServerToClient, &mut table)
            .unwrap();
        assert_eq!(out.action, ActionKind::Forward);
        assert_eq!(out.deliveries.len(), 1);
        assert_eq!(adv.knowledge.observed.len(), 1);
    }

    #[test]
    fn drop_delivers_nothing() {
        let script = AdversaryScript {
            budget: 0,
            rules: vec![ScriptRule {
                matcher: Matcher {
                    kind: MsgKind::ServerHelloDone,
                    direction: None,
                    nth: None,
                    first_n: None,
                },
                action: ScriptAction::Drop,
            }],
        };
        let mut adv = Adversary::new(script, None);
        let mut table = CollisionTable::default();
        let out = adv
            .intercept(&Message::ServerHelloDone, Direction::ServerToClient, &mut table)
            .unwrap();
        assert_eq!(out.action, ActionKind::Drop);
        assert!(out.deliveries.is_empty());
    }

    #[test]
    fn edit_on_wrong_message_is_script_error() {
        let script = AdversaryScript {
            budget: 0,
            rules: vec![ScriptRule {
                matcher: Matcher {
                    kind: MsgKind::ServerHelloDone,
                    direction: None,
                    nth: None,
                    first_n: None,
                },
                action: ScriptAction::Modify {
                    edits: vec![FieldEdit::ChVmax(VersionId::Tls12)],
                },
            }],
        };
        let mut adv = Adversary::new(script, None);
        let mut table = CollisionTable::default();
        let err = adv
            .intercept(&Message::ServerHelloDone, Direction::ServerToClient, &mut table)
            .unwrap_err();
        assert!(matches!(err, SimError::Script(_)));
    }

    #[test]
    fn forge_finished_requires_ms_or_collision() {
        let table = CollisionTable::default();
        assert!(forge_finished(None, None, b"log'", HashAlgoId::Strong, &table).is_none());

        let ms = b"recovered master secret".to_vec();
        let tag = forge_finished(Some(&ms), None, b"log'", HashAlgoId::Strong, &table).unwrap();
        let digest = crypto::transcript_hash(b"log'", HashAlgoId::Strong, &table);
        assert!(crypto::verify_finished_mac(&tag, &ms, &digest));

        // collision path: honest tag re-verifies against the forged log
        let mut table = CollisionTable::default();
        let mut budget = WorkBudget::new(1_000_000);
        crypto::register_collision(
            &mut table,
            b"honest log",
            b"forged log",
            HashAlgoId::WeakMd5Sha1,
            &mut budget,
            &CostModel::default(),
        )
        .unwrap();
        let honest_digest = crypto::transcript_hash(b"honest log", HashAlgoId::WeakMd5Sha1, &table);
        let honest_tag = crypto::finished_mac(&ms, &honest_digest);
        let forged = forge_finished(
            None,
            Some((&honest_tag, b"honest log")),
            b"forged log",
            HashAlgoId::WeakMd5Sha1,
            &table,
        )
        .unwrap();
        let forged_digest = crypto::transcript_hash(b"forged log", HashAlgoId::WeakMd5Sha1, &table);
        assert!(crypto::verify_finished_mac(&forged, &ms, &forged_digest));
    }

    #[test]
    fn zero_budget_oracles_do_nothing() {
        let script = AdversaryScript {
            budget: 0,
            rules: vec![ScriptRule {
                matcher: Matcher {
                    kind: MsgKind::ClientKeyExchange,
                    direction: None,
                    nth: None,
                    first_n: None,
                },
                action: ScriptAction::RecoverKey,
            }],
        };
        let mut adv = Adversary::new(script, None);
        let mut table = CollisionTable::default();
        let cke = Message::ClientKeyExchange(crate::msgs::ClientKeyExchange {
            params: KeyParams {
                family: ParamFamily::Dh,
                numbers: vec![5],
            },
        });
        let out = adv
            .intercept(&cke, Direction::ClientToServer, &mut table)
            .unwrap();
        let ev = out.oracle.unwrap();
        assert_eq!(ev.cost_debited, 0);
        assert!(adv.knowledge.secrets.is_empty());
        assert_eq!(adv.budget.remaining(), 0);
    }
}
