//! Toy cryptography with explicit strength levels and bounded-work
//! breaking oracles.
//!
//! Keys are small enough that "export grade" is an actually attackable
//! class on a desk machine: anything with a modulus or prime below
//! [`BREAKABILITY_THRESHOLD`] is `Export` and can be broken by the
//! oracles below at a cost debited from a [`WorkBudget`]; anything above
//! is `Strong` and the oracles refuse it regardless of budget. Work is
//! counted in abstract units: a discrete log costs `ceil(sqrt(order))`,
//! factoring costs the smallest prime factor, and the fixed-price oracles
//! (Bleichenbacher, hash collisions, CBC recovery) take their price from
//! a [`CostModel`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arith;
use crate::rng::SplitMix64;

/// Keys below this modulus/prime bound are export grade and attackable.
pub const BREAKABILITY_THRESHOLD: u64 = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("invalid group: {0}")]
    Group(String),
    #[error("invalid key parameter: {0}")]
    KeyParam(String),
    #[error("encoding error: {0}")]
    Encoding(String),
    #[error("oracle unavailable: {0}")]
    OracleUnavailable(String),
    #[error("authentication failure: {0}")]
    Auth(String),
}

/// Outcome of a breaking oracle. `Infeasible` is a normal result, not an
/// error: it means the key was strong or the budget did not cover the cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleOutcome<T> {
    Recovered(T),
    Infeasible,
}

impl<T> OracleOutcome<T> {
    pub fn recovered(self) -> Option<T> {
        match self {
            OracleOutcome::Recovered(v) => Some(v),
            OracleOutcome::Infeasible => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, OracleOutcome::Infeasible)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Export,
    Strong,
}

pub fn strength_of(modulus_or_prime: u64) -> Strength {
    if modulus_or_prime < BREAKABILITY_THRESHOLD {
        Strength::Export
    } else {
        Strength::Strong
    }
}

/// The two modeled group families. "EC" groups use the same modular
/// arithmetic as finite-field groups; the distinct label exists so that
/// negotiation and misinterpretation of the key-exchange algorithm are
/// observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupFamily {
    FiniteField,
    EcToy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DhGroup {
    pub prime_p: u64,
    pub generator_g: u64,
    /// Multiplicative order of `generator_g` mod `prime_p`.
    pub order: u64,
    pub label: String,
    pub family: GroupFamily,
    pub strength: Strength,
}

impl DhGroup {
    pub fn new(
        prime_p: u64,
        generator_g: u64,
        label: &str,
        family: GroupFamily,
    ) -> Result<Self, CryptoError> {
        if !arith::is_prime(prime_p) {
            return Err(CryptoError::Group(format!("{prime_p} is not prime")));
        }
        if generator_g < 2 || generator_g > prime_p - 1 {
            return Err(CryptoError::Group(format!(
                "generator {generator_g} outside [2, p-1]"
            )));
        }
        let order = arith::element_order(generator_g, prime_p);
        if order <= 2 {
            return Err(CryptoError::Group(format!(
                "generator {generator_g} has order {order} <= 2"
            )));
        }
        Ok(Self {
            prime_p,
            generator_g,
            order,
            label: label.to_string(),
            family,
            strength: strength_of(prime_p),
        })
    }

    /// Revalidates the structural invariants (used on deserialized groups).
    pub fn validate(&self) -> Result<(), CryptoError> {
        let fresh = DhGroup::new(self.prime_p, self.generator_g, &self.label, self.family)?;
        if fresh.order != self.order || fresh.strength != self.strength {
            return Err(CryptoError::Group(format!(
                "group {} carries inconsistent derived fields",
                self.label
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DhKeyPair {
    pub group: DhGroup,
    pub secret_exponent: u64,
    pub public_value: u64,
}

impl DhKeyPair {
    pub fn from_secret(group: &DhGroup, secret: u64) -> Result<Self, CryptoError> {
        if secret == 0 || secret >= group.order {
            return Err(CryptoError::KeyParam(format!(
                "secret exponent {secret} outside [1, order-1]"
            )));
        }
        Ok(Self {
            group: group.clone(),
            secret_exponent: secret,
            public_value: arith::mod_exp(group.generator_g, secret, group.prime_p),
        })
    }
}

/// Deterministic ephemeral keygen: a fixed seed always yields the same pair.
pub fn dh_keygen(group: &DhGroup, rng_seed: u64) -> Result<DhKeyPair, CryptoError> {
    group.validate()?;
    let mut rng = SplitMix64::fork(rng_seed, "dh-keygen");
    dh_keygen_with_rng(group, &mut rng)
}

pub fn dh_keygen_with_rng(group: &DhGroup, rng: &mut SplitMix64) -> Result<DhKeyPair, CryptoError> {
    let secret = rng.range(1, group.order - 1);
    DhKeyPair::from_secret(group, secret)
}

/// Shared-secret computation; the peer's public value must be a nontrivial
/// group element.
pub fn dh_shared_secret(own: &DhKeyPair, peer_public: u64) -> Result<Vec<u8>, CryptoError> {
    let p = own.group.prime_p;
    if peer_public < 2 || peer_public > p - 2 {
        return Err(CryptoError::KeyParam(format!(
            "peer public value {peer_public} outside [2, p-2]"
        )));
    }
    let shared = arith::mod_exp(peer_public, own.secret_exponent, p);
    Ok(encode_shared(shared))
}

pub fn encode_shared(value: u64) -> Vec<u8> {
    value.to_be_bytes().to_vec()
}

// ---------------------------------------------------------------------------
// Toy RSA
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaPublicKey {
    pub modulus_n: u64,
    pub public_exp: u64,
    pub strength: Strength,
    /// DROWN precondition: the key is also deployed on an SSLv2-style
    /// endpoint usable as a decryption oracle.
    pub shared_with_sslv2: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaToyKey {
    pub modulus_n: u64,
    pub public_exp: u64,
    pub private_exp: u64,
    pub strength: Strength,
    pub shared_with_sslv2: bool,
}

impl RsaToyKey {
    pub fn from_primes(p: u64, q: u64, e: u64, shared_with_sslv2: bool) -> Result<Self, CryptoError> {
        if !arith::is_prime(p) || !arith::is_prime(q) || p == q {
            return Err(CryptoError::KeyParam("p, q must be distinct primes".into()));
        }
        let n = p
            .checked_mul(q)
            .ok_or_else(|| CryptoError::KeyParam("modulus overflows u64".into()))?;
        let phi = (p - 1) * (q - 1);
        let d = arith::mod_inverse(e, phi)
            .ok_or_else(|| CryptoError::KeyParam("e not invertible mod phi(n)".into()))?;
        Ok(Self {
            modulus_n: n,
            public_exp: e,
            private_exp: d,
            strength: strength_of(n),
            shared_with_sslv2,
        })
    }

    pub fn public_part(&self) -> RsaPublicKey {
        RsaPublicKey {
            modulus_n: self.modulus_n,
            public_exp: self.public_exp,
            strength: self.strength,
            shared_with_sslv2: self.shared_with_sslv2,
        }
    }
}

/// RSA ciphertext: one residue per two-byte plaintext block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaCiphertext(pub Vec<u64>);

const RSA_BLOCK_SPACE: u64 = 1 << 16;

/// Deterministic textbook wrap of a pre-master secret in two-byte blocks.
pub fn rsa_wrap_pms(pms: &[u8], key: &RsaPublicKey) -> Result<RsaCiphertext, CryptoError> {
    if key.modulus_n <= RSA_BLOCK_SPACE {
        return Err(CryptoError::Encoding(format!(
            "modulus {} smaller than the message block space",
            key.modulus_n
        )));
    }
    if pms.is_empty() || pms.len() % 2 != 0 {
        return Err(CryptoError::Encoding(
            "pms must be a non-empty even number of bytes".into(),
        ));
    }
    let blocks = pms
        .chunks(2)
        .map(|c| {
            let m = u64::from(c[0]) << 8 | u64::from(c[1]);
            arith::mod_exp(m, key.public_exp, key.modulus_n)
        })
        .collect();
    Ok(RsaCiphertext(blocks))
}

pub fn rsa_unwrap_pms(ct: &RsaCiphertext, key: &RsaToyKey) -> Result<Vec<u8>, CryptoError> {
    rsa_unwrap_with(ct, key.private_exp, key.modulus_n)
}

fn rsa_unwrap_with(ct: &RsaCiphertext, d: u64, n: u64) -> Result<Vec<u8>, CryptoError> {
    let mut out = Vec::with_capacity(ct.0.len() * 2);
    for &c in &ct.0 {
        let m = arith::mod_exp(c, d, n);
        if m >= RSA_BLOCK_SPACE {
            return Err(CryptoError::Encoding(
                "decrypted block outside the message space".into(),
            ));
        }
        out.push((m >> 8) as u8);
        out.push((m & 0xff) as u8);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Work budgets and oracle costs
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkBudget {
    remaining_units: u64,
}

impl WorkBudget {
    pub fn new(units: u64) -> Self {
        Self { remaining_units: units }
    }

    pub fn remaining(&self) -> u64 {
        self.remaining_units
    }

    /// Debits `cost` if covered; an uncovered cost debits nothing.
    pub fn try_debit(&mut self, cost: u64) -> bool {
        if cost <= self.remaining_units {
            self.remaining_units -= cost;
            true
        } else {
            false
        }
    }
}

/// Fixed prices for the oracles whose real-world work does not map onto a
/// key size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub bleichenbacher: u64,
    pub collision: u64,
    pub cbc_recover: u64,
    /// Recovering secrets produced under mismatched key-exchange views.
    pub mismatch_recovery: u64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            bleichenbacher: 50_000,
            collision: 10_000,
            cbc_recover: 10_000,
            mismatch_recovery: 4_096,
        }
    }
}

pub fn dlog_cost(order: u64) -> u64 {
    let s = order.isqrt();
    if s * s < order {
        s + 1
    } else {
        s
    }
}

// ---------------------------------------------------------------------------
// Key recovery oracles
// ---------------------------------------------------------------------------

/// A public key as the attacker understands it. `mismatched` marks keys
/// whose bytes were interpreted under a different algorithm label than the
/// sender used; such keys are breakable regardless of their nominal size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EffectiveKey {
    pub view: PublicKeyView,
    pub strength: Strength,
    pub mismatched: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PublicKeyView {
    Dh { group: DhGroup, public_value: u64 },
    Rsa { public: RsaPublicKey },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecoveredSecret {
    DhExponent(u64),
    RsaPrivateExponent(u64),
}

/// Recover the private half of an observed public key, spending budget.
///
/// Strong keys are refused outright; export keys cost `ceil(sqrt(order))`
/// for a discrete log or the smallest prime factor for factoring; keys
/// weakened by mismatched interpretation cost the flat mismatch price.
/// Never returns a wrong secret: recovered values are checked against the
/// public key before they are reported.
pub fn recover_private(
    key: &EffectiveKey,
    budget: &mut WorkBudget,
    costs: &CostModel,
) -> Result<OracleOutcome<RecoveredSecret>, CryptoError> {
    if key.strength == Strength::Strong {
        return Ok(OracleOutcome::Infeasible);
    }
    match &key.view {
        PublicKeyView::Dh { group, public_value } => {
            group.validate()?;
            if *public_value >= group.prime_p {
                return Err(CryptoError::KeyParam(
                    "public value outside the group".into(),
                ));
            }
            let cost = if key.mismatched {
                costs.mismatch_recovery
            } else {
                dlog_cost(group.order)
            };
            if !budget.try_debit(cost) {
                return Ok(OracleOutcome::Infeasible);
            }
            match arith::baby_step_giant_step(
                group.generator_g,
                *public_value,
                group.prime_p,
                group.order,
            ) {
                Some(x)
                    if arith::mod_exp(group.generator_g, x, group.prime_p) == *public_value =>
                {
                    Ok(OracleOutcome::Recovered(RecoveredSecret::DhExponent(x)))
                }
                _ => Ok(OracleOutcome::Infeasible),
            }
        }
        PublicKeyView::Rsa { public } => {
            let n = public.modulus_n;
            if n < 4 {
                return Err(CryptoError::KeyParam("modulus too small".into()));
            }
            if key.mismatched && arith::is_prime(n) {
                // Bytes of some other algorithm read as an RSA key: the
                // "modulus" is prime, so the private exponent is a plain
                // modular inverse.
                if !budget.try_debit(costs.mismatch_recovery) {
                    return Ok(OracleOutcome::Infeasible);
                }
                return match arith::mod_inverse(public.public_exp, n - 1) {
                    Some(d) => Ok(OracleOutcome::Recovered(
                        RecoveredSecret::RsaPrivateExponent(d),
                    )),
                    None => Ok(OracleOutcome::Infeasible),
                };
            }
            let spf = arith::smallest_prime_factor(n)
                .ok_or_else(|| CryptoError::KeyParam("modulus too small".into()))?;
            let cost = if key.mismatched { costs.mismatch_recovery } else { spf };
            if !budget.try_debit(cost) {
                return Ok(OracleOutcome::Infeasible);
            }
            let p = spf;
            let q = n / p;
            if p * q != n || !arith::is_prime(q) || p == q {
                return Ok(OracleOutcome::Infeasible);
            }
            let phi = (p - 1) * (q - 1);
            match arith::mod_inverse(public.public_exp, phi) {
                Some(d) => Ok(OracleOutcome::Recovered(
                    RecoveredSecret::RsaPrivateExponent(d),
                )),
                None => Ok(OracleOutcome::Infeasible),
            }
        }
    }
}

/// DROWN-style decryption oracle. Succeeds exactly when the key is shared
/// with an SSLv2 endpoint and the budget covers the oracle price; the
/// strength of the modulus is irrelevant. Internally this factors the toy
/// modulus, standing in for the SSLv2 server that performs the decryption
/// in the real attack.
pub fn bleichenbacher_decrypt(
    ct: &RsaCiphertext,
    key: &RsaPublicKey,
    budget: &mut WorkBudget,
    costs: &CostModel,
) -> Result<OracleOutcome<Vec<u8>>, CryptoError> {
    if !key.shared_with_sslv2 {
        return Ok(OracleOutcome::Infeasible);
    }
    if !budget.try_debit(costs.bleichenbacher) {
        return Ok(OracleOutcome::Infeasible);
    }
    let n = key.modulus_n;
    let p = match arith::pollard_rho(n) {
        Some(p) if p != n => p,
        _ => return Ok(OracleOutcome::Infeasible),
    };
    let q = n / p;
    let phi = (p - 1) * (q - 1);
    let d = match arith::mod_inverse(key.public_exp, phi) {
        Some(d) => d,
        None => return Ok(OracleOutcome::Infeasible),
    };
    match rsa_unwrap_with(ct, d, n) {
        Ok(pms) => Ok(OracleOutcome::Recovered(pms)),
        Err(_) => Ok(OracleOutcome::Infeasible),
    }
}

/// Decrypt an RSA-wrapped pms with a recovered private exponent.
pub fn rsa_unwrap_with_recovered(
    ct: &RsaCiphertext,
    recovered_d: u64,
    modulus_n: u64,
) -> Result<Vec<u8>, CryptoError> {
    rsa_unwrap_with(ct, recovered_d, modulus_n)
}

// ---------------------------------------------------------------------------
// Hashing, KDF, MACs
// ---------------------------------------------------------------------------

fn prf(label: &[u8], key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut h = Sha256::new();
    h.update(b"dgsim-prf.v1");
    h.update((label.len() as u32).to_be_bytes());
    h.update(label);
    h.update((key.len() as u32).to_be_bytes());
    h.update(key);
    h.update(data);
    h.finalize().to_vec()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashAlgoId {
    /// Stands for the MD5/SHA-1 era: collisions can be registered.
    WeakMd5Sha1,
    Strong,
}

impl HashAlgoId {
    pub fn collision_resistant(self) -> bool {
        self == HashAlgoId::Strong
    }
}

/// Pairs of transcript byte strings the adversary has paid to make collide
/// under the weak hash. Empty in every benign run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CollisionTable {
    entries: Vec<(Vec<u8>, Vec<u8>)>,
}

impl CollisionTable {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    fn canonical_for<'a>(&'a self, log: &'a [u8]) -> &'a [u8] {
        for (original, forged) in &self.entries {
            if log == original.as_slice() || log == forged.as_slice() {
                return original;
            }
        }
        log
    }
}

/// Register a colliding transcript pair. Only meaningful against the weak
/// hash; the strong hash has no collision oracle at any price.
pub fn register_collision(
    table: &mut CollisionTable,
    original: &[u8],
    forged: &[u8],
    algo: HashAlgoId,
    budget: &mut WorkBudget,
    costs: &CostModel,
) -> Result<OracleOutcome<()>, CryptoError> {
    if algo.collision_resistant() {
        return Err(CryptoError::OracleUnavailable(
            "no collision oracle against a collision-resistant hash".into(),
        ));
    }
    if !budget.try_debit(costs.collision) {
        return Ok(OracleOutcome::Infeasible);
    }
    table.entries.push((original.to_vec(), forged.to_vec()));
    Ok(OracleOutcome::Recovered(()))
}

/// Transcript digest. The strong algorithm digests the exact bytes; the
/// weak one additionally maps any registered (original, forged) pair to
/// one digest.
pub fn transcript_hash(log: &[u8], algo: HashAlgoId, collisions: &CollisionTable) -> Vec<u8> {
    match algo {
        HashAlgoId::Strong => Sha256::digest(log).to_vec(),
        HashAlgoId::WeakMd5Sha1 => {
            let canonical = collisions.canonical_for(log);
            prf(b"weak-transcript", b"", canonical)[..16].to_vec()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretBundle {
    pub pms: Vec<u8>,
    pub ms: Vec<u8>,
    pub k_i: Vec<u8>,
    pub k_r: Vec<u8>,
}

/// ms from (pms, n_I|n_R); session keys from (ms, n_R|n_I) with distinct
/// labels, so k_I != k_R for all inputs.
pub fn derive_secrets(pms: &[u8], nonce_i: &[u8], nonce_r: &[u8]) -> SecretBundle {
    let mut ir = nonce_i.to_vec();
    ir.extend_from_slice(nonce_r);
    let mut ri = nonce_r.to_vec();
    ri.extend_from_slice(nonce_i);
    let ms = prf(b"ms", pms, &ir);
    let k_i = prf(b"kI", &ms, &ri);
    let k_r = prf(b"kR", &ms, &ri);
    SecretBundle {
        pms: pms.to_vec(),
        ms,
        k_i,
        k_r,
    }
}

pub fn finished_mac(ms: &[u8], digest: &[u8]) -> Vec<u8> {
    prf(b"fin", ms, digest)
}

pub fn verify_finished_mac(tag: &[u8], ms: &[u8], digest: &[u8]) -> bool {
    finished_mac(ms, digest) == tag
}

// ---------------------------------------------------------------------------
// Toy signatures (textbook RSA over a folded digest)
// ---------------------------------------------------------------------------

fn fold_digest(digest: &[u8], n: u64) -> u64 {
    let mut buf = [0u8; 8];
    for (i, b) in digest.iter().take(8).enumerate() {
        buf[i] = *b;
    }
    u64::from_be_bytes(buf) % n
}

pub fn sign_digest(key: &RsaToyKey, digest: &[u8]) -> u64 {
    let m = fold_digest(digest, key.modulus_n);
    arith::mod_exp(m, key.private_exp, key.modulus_n)
}

pub fn verify_signature(pk: &RsaPublicKey, digest: &[u8], signature: u64) -> bool {
    arith::mod_exp(signature, pk.public_exp, pk.modulus_n) == fold_digest(digest, pk.modulus_n)
}

// ---------------------------------------------------------------------------
// Toy record encryption
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncAlgo {
    StrongAead,
    CbcBlock,
    ExportCipher,
    Null,
}

const AEAD_TAG_LEN: usize = 16;

fn xor_stream(key: &[u8], data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (i, chunk) in data.chunks(32).enumerate() {
        let ks = prf(b"stream", key, &(i as u64).to_be_bytes());
        out.extend(chunk.iter().zip(ks.iter()).map(|(a, b)| a ^ b));
    }
    out
}

pub fn seal(key: &[u8], enc: EncAlgo, plaintext: &[u8]) -> Vec<u8> {
    match enc {
        EncAlgo::Null => plaintext.to_vec(),
        EncAlgo::CbcBlock | EncAlgo::ExportCipher => xor_stream(key, plaintext),
        EncAlgo::StrongAead => {
            let mut ct = xor_stream(key, plaintext);
            let tag = prf(b"aead-tag", key, &ct);
            ct.extend_from_slice(&tag[..AEAD_TAG_LEN]);
            ct
        }
    }
}

pub fn open(key: &[u8], enc: EncAlgo, ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    match enc {
        EncAlgo::Null => Ok(ciphertext.to_vec()),
        EncAlgo::CbcBlock | EncAlgo::ExportCipher => Ok(xor_stream(key, ciphertext)),
        EncAlgo::StrongAead => {
            if ciphertext.len() < AEAD_TAG_LEN {
                return Err(CryptoError::Encoding("ciphertext shorter than tag".into()));
            }
            let (body, tag) = ciphertext.split_at(ciphertext.len() - AEAD_TAG_LEN);
            if prf(b"aead-tag", key, body)[..AEAD_TAG_LEN] != *tag {
                return Err(CryptoError::Auth("AEAD tag mismatch".into()));
            }
            Ok(xor_stream(key, body))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn group_23_5() -> DhGroup {
        DhGroup::new(23, 5, "test-23", GroupFamily::FiniteField).unwrap()
    }

    fn strong_group() -> DhGroup {
        DhGroup::new(2_147_483_647, 13, "test-strong", GroupFamily::FiniteField).unwrap()
    }

    fn effective(group: &DhGroup, public: u64) -> EffectiveKey {
        EffectiveKey {
            view: PublicKeyView::Dh {
                group: group.clone(),
                public_value: public,
            },
            strength: group.strength,
            mismatched: false,
        }
    }

    /// Independent modular exponentiation oracle (repeated multiplication).
    fn slow_modexp(g: u64, e: u64, p: u64) -> u64 {
        let mut acc = 1u64;
        for _ in 0..e {
            acc = (acc as u128 * g as u128 % p as u128) as u64;
        }
        acc
    }

    #[test]
    fn keygen_public_values_match_oracle() {
        let g = group_23_5();
        // frozen expectations computed with slow_modexp
        assert_eq!(slow_modexp(5, 6, 23), 8);
        assert_eq!(slow_modexp(5, 15, 23), 19);
        assert_eq!(DhKeyPair::from_secret(&g, 6).unwrap().public_value, 8);
        assert_eq!(DhKeyPair::from_secret(&g, 1).unwrap().public_value, 5);
        assert_eq!(DhKeyPair::from_secret(&g, 15).unwrap().public_value, 19);
    }

    #[test]
    fn keygen_is_deterministic_per_seed() {
        let g = group_23_5();
        let a = dh_keygen(&g, 42).unwrap();
        let b = dh_keygen(&g, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.secret_exponent >= 1 && a.secret_exponent < g.order);
    }

    #[test]
    fn keygen_rejects_invalid_group() {
        assert!(matches!(
            DhGroup::new(24, 5, "bad", GroupFamily::FiniteField),
            Err(CryptoError::Group(_))
        ));
    }

    #[test]
    fn shared_secret_examples() {
        let g = group_23_5();
        // brute-force oracle: g^(6*15) mod 23 by repeated multiplication
        assert_eq!(slow_modexp(5, 6 * 15, 23), 2);
        let a = DhKeyPair::from_secret(&g, 6).unwrap();
        assert_eq!(dh_shared_secret(&a, 19).unwrap(), encode_shared(2));
        let one = DhKeyPair::from_secret(&g, 1).unwrap();
        assert_eq!(slow_modexp(5, 1, 23), 5);
        assert_eq!(dh_shared_secret(&one, 5).unwrap(), encode_shared(5));
    }

    #[test]
    fn shared_secret_symmetric_over_random_seeds() {
        let g = group_23_5();
        for seed in 0..100u64 {
            let a = dh_keygen(&g, seed).unwrap();
            let b = dh_keygen(&g, seed + 1000).unwrap();
            assert_eq!(
                dh_shared_secret(&a, b.public_value).unwrap(),
                dh_shared_secret(&b, a.public_value).unwrap()
            );
        }
    }

    #[test]
    fn shared_secret_rejects_out_of_range_peer() {
        let g = group_23_5();
        let a = DhKeyPair::from_secret(&g, 6).unwrap();
        for bad in [0u64, 1, 22, 23, 100] {
            assert!(matches!(
                dh_shared_secret(&a, bad),
                Err(CryptoError::KeyParam(_))
            ));
        }
    }

    #[test]
    fn recover_private_examples() {
        let g = group_23_5();
        // exhaustive dlog oracle
        let brute = (0..g.order).find(|&x| slow_modexp(5, x, 23) == 8).unwrap();
        assert_eq!(brute, 6);

        let mut budget = WorkBudget::new(1000);
        let out = recover_private(&effective(&g, 8), &mut budget, &CostModel::default()).unwrap();
        assert_eq!(out, OracleOutcome::Recovered(RecoveredSecret::DhExponent(6)));
        assert_eq!(budget.remaining(), 1000 - dlog_cost(g.order));

        let mut zero = WorkBudget::new(0);
        let out = recover_private(&effective(&g, 8), &mut zero, &CostModel::default()).unwrap();
        assert!(out.is_infeasible());
        assert_eq!(zero.remaining(), 0);

        let s = strong_group();
        let pk = DhKeyPair::from_secret(&s, 123_456).unwrap().public_value;
        let mut huge = WorkBudget::new(u64::MAX);
        let out = recover_private(&effective(&s, pk), &mut huge, &CostModel::default()).unwrap();
        assert!(out.is_infeasible());
        assert_eq!(huge.remaining(), u64::MAX);
    }

    #[test]
    fn rsa_wrap_round_trip() {
        let key = RsaToyKey::from_primes(65537, 65539, 17, false).unwrap();
        assert_eq!(key.strength, Strength::Strong);
        let pms = [1u8, 2, 3, 4, 5, 6, 7, 8];
        let ct = rsa_wrap_pms(&pms, &key.public_part()).unwrap();
        assert_eq!(rsa_unwrap_pms(&ct, &key).unwrap(), pms);
    }

    #[test]
    fn export_rsa_recoverable_strong_not() {
        let export = RsaToyKey::from_primes(251, 65521, 17, false).unwrap();
        assert_eq!(export.strength, Strength::Export);
        let pms = [9u8, 9, 2, 2, 7, 7, 1, 1];
        let ct = rsa_wrap_pms(&pms, &export.public_part()).unwrap();

        let mut budget = WorkBudget::new(1_000_000);
        let eff = EffectiveKey {
            view: PublicKeyView::Rsa {
                public: export.public_part(),
            },
            strength: export.strength,
            mismatched: false,
        };
        let d = match recover_private(&eff, &mut budget, &CostModel::default()).unwrap() {
            OracleOutcome::Recovered(RecoveredSecret::RsaPrivateExponent(d)) => d,
            other => panic!("expected recovery, got {other:?}"),
        };
        assert_eq!(d, export.private_exp);
        assert_eq!(budget.remaining(), 1_000_000 - 251);
        assert_eq!(
            rsa_unwrap_with_recovered(&ct, d, export.modulus_n).unwrap(),
            pms
        );

        let strong = RsaToyKey::from_primes(65537, 65539, 17, false).unwrap();
        let eff = EffectiveKey {
            view: PublicKeyView::Rsa {
                public: strong.public_part(),
            },
            strength: strong.strength,
            mismatched: false,
        };
        let mut budget = WorkBudget::new(u64::MAX);
        assert!(recover_private(&eff, &mut budget, &CostModel::default())
            .unwrap()
            .is_infeasible());
    }

    #[test]
    fn bleichenbacher_oracle_conditions() {
        let shared = RsaToyKey::from_primes(65537, 65539, 17, true).unwrap();
        let pms = [3u8, 1, 4, 1, 5, 9, 2, 6];
        let ct = rsa_wrap_pms(&pms, &shared.public_part()).unwrap();
        let costs = CostModel::default();

        let mut budget = WorkBudget::new(1_000_000);
        let out = bleichenbacher_decrypt(&ct, &shared.public_part(), &mut budget, &costs).unwrap();
        assert_eq!(out, OracleOutcome::Recovered(pms.to_vec()));
        assert_eq!(budget.remaining(), 1_000_000 - costs.bleichenbacher);

        let unshared = RsaToyKey::from_primes(65537, 65539, 17, false).unwrap();
        let ct2 = rsa_wrap_pms(&pms, &unshared.public_part()).unwrap();
        let mut budget = WorkBudget::new(u64::MAX);
        assert!(
            bleichenbacher_decrypt(&ct2, &unshared.public_part(), &mut budget, &costs)
                .unwrap()
                .is_infeasible()
        );

        let mut zero = WorkBudget::new(0);
        assert!(
            bleichenbacher_decrypt(&ct, &shared.public_part(), &mut zero, &costs)
                .unwrap()
                .is_infeasible()
        );
    }

    #[test]
    fn derive_secrets_deterministic_and_sensitive() {
        let pms = encode_shared(2);
        let a = derive_secrets(&pms, b"nonce-i", b"nonce-r");
        let b = derive_secrets(&pms, b"nonce-i", b"nonce-r");
        assert_eq!(a, b);
        assert_ne!(a.k_i, a.k_r);

        let mut rng = SplitMix64::new(5);
        for _ in 0..100 {
            let n1 = rng.bytes(16);
            let n2 = rng.bytes(16);
            if n1 == n2 {
                continue;
            }
            let x = derive_secrets(&pms, &n1, b"r");
            let y = derive_secrets(&pms, &n2, b"r");
            assert_ne!(x.ms, y.ms);
        }
    }

    #[test]
    fn adversary_with_pms_and_nonces_rebuilds_bundle() {
        let pms = encode_shared(1234);
        let endpoint = derive_secrets(&pms, b"ni", b"nr");
        let adversary = derive_secrets(&pms, b"ni", b"nr");
        assert_eq!(endpoint, adversary);
    }

    #[test]
    fn transcript_hash_collision_semantics() {
        let mut table = CollisionTable::default();
        let costs = CostModel::default();
        let log_a = b"original transcript".to_vec();
        let log_b = b"forged transcript".to_vec();

        assert_eq!(
            transcript_hash(&log_a, HashAlgoId::Strong, &table),
            transcript_hash(&log_a, HashAlgoId::Strong, &table)
        );

        let mut budget = WorkBudget::new(1_000_000);
        register_collision(
            &mut table,
            &log_a,
            &log_b,
            HashAlgoId::WeakMd5Sha1,
            &mut budget,
            &costs,
        )
        .unwrap()
        .recovered()
        .unwrap();
        assert_eq!(
            transcript_hash(&log_a, HashAlgoId::WeakMd5Sha1, &table),
            transcript_hash(&log_b, HashAlgoId::WeakMd5Sha1, &table)
        );
        assert_ne!(
            transcript_hash(&log_a, HashAlgoId::Strong, &table),
            transcript_hash(&log_b, HashAlgoId::Strong, &table)
        );
    }

    #[test]
    fn register_collision_gates() {
        let mut table = CollisionTable::default();
        let costs = CostModel::default();
        let mut budget = WorkBudget::new(1_000_000);
        assert!(matches!(
            register_collision(
                &mut table,
                b"a",
                b"b",
                HashAlgoId::Strong,
                &mut budget,
                &costs
            ),
            Err(CryptoError::OracleUnavailable(_))
        ));
        let mut zero = WorkBudget::new(0);
        assert!(register_collision(
            &mut table,
            b"a",
            b"b",
            HashAlgoId::WeakMd5Sha1,
            &mut zero,
            &costs
        )
        .unwrap()
        .is_infeasible());
        assert!(table.is_empty());
    }

    #[test]
    fn finished_mac_contract() {
        let ms = b"master secret".to_vec();
        let digest = Sha256::digest(b"log").to_vec();
        let tag = finished_mac(&ms, &digest);
        assert!(verify_finished_mac(&tag, &ms, &digest));

        let mut rng = SplitMix64::new(11);
        for _ in 0..100 {
            let wrong = rng.bytes(32);
            if wrong == ms {
                continue;
            }
            assert!(!verify_finished_mac(&tag, &wrong, &digest));
        }

        // an adversary holding the recovered ms forges over a modified log
        let modified = Sha256::digest(b"log'").to_vec();
        let forged = finished_mac(&ms, &modified);
        assert!(verify_finished_mac(&forged, &ms, &modified));
    }

    #[test]
    fn signatures_verify_and_reject() {
        let key = RsaToyKey::from_primes(65537, 65539, 17, false).unwrap();
        let digest = Sha256::digest(b"params").to_vec();
        let sig = sign_digest(&key, &digest);
        assert!(verify_signature(&key.public_part(), &digest, sig));
        let other = Sha256::digest(b"tampered").to_vec();
        assert!(!verify_signature(&key.public_part(), &other, sig));
        assert!(!verify_signature(&key.public_part(), &digest, sig ^ 1));
    }

    #[test]
    fn seal_open_modes() {
        let key = b"0123456789abcdef0123456789abcdef".to_vec();
        let pt = b"hello application data".to_vec();
        for enc in [EncAlgo::Null, EncAlgo::CbcBlock, EncAlgo::ExportCipher] {
            let ct = seal(&key, enc, &pt);
            assert_eq!(open(&key, enc, &ct).unwrap(), pt);
        }
        assert_eq!(seal(&key, EncAlgo::Null, &pt), pt);

        let ct = seal(&key, EncAlgo::StrongAead, &pt);
        assert_eq!(open(&key, EncAlgo::StrongAead, &ct).unwrap(), pt);
        let mut tampered = ct.clone();
        tampered[0] ^= 1;
        assert!(matches!(
            open(&key, EncAlgo::StrongAead, &tampered),
            Err(CryptoError::Auth(_))
        ));
        // wrong key fails the tag
        let other = b"ffffffffffffffffffffffffffffffff".to_vec();
        assert!(open(&other, EncAlgo::StrongAead, &ct).is_err());
    }

    #[test]
    fn strength_threshold_boundary() {
        assert_eq!(strength_of(BREAKABILITY_THRESHOLD - 1), Strength::Export);
        assert_eq!(strength_of(BREAKABILITY_THRESHOLD), Strength::Strong);
    }
}
