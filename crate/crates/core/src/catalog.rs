//! Protocol parameter catalog: versions, ciphersuites, named groups, and
//! the long-term toy keys, plus the per-version feature table that the
//! state machines consult.

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::crypto::{DhGroup, EncAlgo, GroupFamily, HashAlgoId, RsaToyKey};

// ---------------------------------------------------------------------------
// Versions
// ---------------------------------------------------------------------------

/// Protocol versions in ascending strength order. The two 1.3 entries are
/// the same wire version with different downgrade defences; no scenario
/// mixes them on one connection.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum VersionId {
    Ssl20,
    Ssl30,
    Tls10,
    Tls11,
    Tls12,
    Tls13Draft10,
    Tls13Final,
}

impl VersionId {
    pub const ALL: [VersionId; 7] = [
        VersionId::Ssl20,
        VersionId::Ssl30,
        VersionId::Tls10,
        VersionId::Tls11,
        VersionId::Tls12,
        VersionId::Tls13Draft10,
        VersionId::Tls13Final,
    ];

    pub fn wire_byte(self) -> u8 {
        match self {
            VersionId::Ssl20 => 2,
            VersionId::Ssl30 => 3,
            VersionId::Tls10 => 4,
            VersionId::Tls11 => 5,
            VersionId::Tls12 => 6,
            VersionId::Tls13Draft10 => 7,
            VersionId::Tls13Final => 8,
        }
    }

    pub fn from_wire_byte(b: u8) -> Option<Self> {
        Self::ALL.iter().copied().find(|v| v.wire_byte() == b)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VersionId::Ssl20 => "ssl20",
            VersionId::Ssl30 => "ssl30",
            VersionId::Tls10 => "tls10",
            VersionId::Tls11 => "tls11",
            VersionId::Tls12 => "tls12",
            VersionId::Tls13Draft10 => "tls13_draft10",
            VersionId::Tls13Final => "tls13_final",
        }
    }

    pub fn is_tls13(self) -> bool {
        matches!(self, VersionId::Tls13Draft10 | VersionId::Tls13Final)
    }

    /// SSL 2.0 has no Finished MAC at all.
    pub fn has_finished_mac(self) -> bool {
        self != VersionId::Ssl20
    }

    /// SSL 3.0 through TLS 1.1 compute the Finished MAC over a
    /// non-collision-resistant hash regardless of the suite.
    pub fn forces_weak_finished_hash(self) -> bool {
        matches!(self, VersionId::Ssl30 | VersionId::Tls10 | VersionId::Tls11)
    }

    /// draft-10 restarts the transcript hash on HelloRetryRequest; the
    /// final revision continues it across retries.
    pub fn restarts_transcript_on_hrr(self) -> bool {
        self == VersionId::Tls13Draft10
    }

    /// Only the final 1.3 revision embeds the version sentinel in the
    /// server nonce when negotiating below 1.3.
    pub fn supports_version_sentinel(self) -> bool {
        self == VersionId::Tls13Final
    }

    /// The next version down for downgrade-dance retries. Both 1.3
    /// flavours fall back to TLS 1.2.
    pub fn dance_fallback(self) -> Option<VersionId> {
        match self {
            VersionId::Ssl20 => None,
            VersionId::Ssl30 => Some(VersionId::Ssl20),
            VersionId::Tls10 => Some(VersionId::Ssl30),
            VersionId::Tls11 => Some(VersionId::Tls10),
            VersionId::Tls12 => Some(VersionId::Tls11),
            VersionId::Tls13Draft10 | VersionId::Tls13Final => Some(VersionId::Tls12),
        }
    }
}

/// Transcript-restart policy, fixed per version.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HelloRetryPolicy {
    pub restart_transcript_on_hrr: bool,
}

impl HelloRetryPolicy {
    pub fn for_version(version: VersionId) -> Self {
        Self {
            restart_transcript_on_hrr: version.restarts_transcript_on_hrr(),
        }
    }
}

// ---------------------------------------------------------------------------
// Ciphersuites
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KxAlgo {
    Rsa,
    RsaExport,
    Dhe,
    DheExport,
    Ecdhe,
}

impl KxAlgo {
    pub fn forward_secret(self) -> bool {
        matches!(self, KxAlgo::Dhe | KxAlgo::DheExport | KxAlgo::Ecdhe)
    }

    pub fn is_export(self) -> bool {
        matches!(self, KxAlgo::RsaExport | KxAlgo::DheExport)
    }

    /// Whether a ServerKeyExchange is part of the handshake. It must not
    /// be sent when the key exchange is plain RSA.
    pub fn sends_server_kx(self) -> bool {
        self != KxAlgo::Rsa
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum SuiteId {
    NullNull,
    RsaExportWeak,
    RsaExportCipher,
    DheExportCipher,
    RsaCbc,
    DheCbc,
    RsaAead,
    DheAead,
    EcdheAead,
    Tls13Aead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CipherSuite {
    pub id: SuiteId,
    pub kx: KxAlgo,
    pub enc: EncAlgo,
    pub hash: HashAlgoId,
}

impl CipherSuite {
    pub fn forward_secret(&self) -> bool {
        self.kx.forward_secret()
    }
}

impl SuiteId {
    pub const ALL: [SuiteId; 10] = [
        SuiteId::NullNull,
        SuiteId::RsaExportWeak,
        SuiteId::RsaExportCipher,
        SuiteId::DheExportCipher,
        SuiteId::RsaCbc,
        SuiteId::DheCbc,
        SuiteId::RsaAead,
        SuiteId::DheAead,
        SuiteId::EcdheAead,
        SuiteId::Tls13Aead,
    ];

    pub fn suite(self) -> CipherSuite {
        use EncAlgo::*;
        use HashAlgoId::*;
        use KxAlgo::*;
        match self {
            SuiteId::NullNull => CipherSuite { id: self, kx: Rsa, enc: Null, hash: WeakMd5Sha1 },
            SuiteId::RsaExportWeak => {
                CipherSuite { id: self, kx: RsaExport, enc: ExportCipher, hash: WeakMd5Sha1 }
            }
            SuiteId::RsaExportCipher => {
                CipherSuite { id: self, kx: RsaExport, enc: ExportCipher, hash: Strong }
            }
            SuiteId::DheExportCipher => {
                CipherSuite { id: self, kx: DheExport, enc: ExportCipher, hash: Strong }
            }
            SuiteId::RsaCbc => CipherSuite { id: self, kx: Rsa, enc: CbcBlock, hash: Strong },
            SuiteId::DheCbc => CipherSuite { id: self, kx: Dhe, enc: CbcBlock, hash: Strong },
            SuiteId::RsaAead => CipherSuite { id: self, kx: Rsa, enc: StrongAead, hash: Strong },
            SuiteId::DheAead => CipherSuite { id: self, kx: Dhe, enc: StrongAead, hash: Strong },
            SuiteId::EcdheAead => {
                CipherSuite { id: self, kx: Ecdhe, enc: StrongAead, hash: Strong }
            }
            SuiteId::Tls13Aead => {
                CipherSuite { id: self, kx: Ecdhe, enc: StrongAead, hash: Strong }
            }
        }
    }

    pub fn wire_byte(self) -> u8 {
        match self {
            SuiteId::NullNull => 0,
            SuiteId::RsaExportWeak => 1,
            SuiteId::RsaExportCipher => 2,
            SuiteId::DheExportCipher => 3,
            SuiteId::RsaCbc => 4,
            SuiteId::DheCbc => 5,
            SuiteId::RsaAead => 6,
            SuiteId::DheAead => 7,
            SuiteId::EcdheAead => 8,
            SuiteId::Tls13Aead => 9,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteId::NullNull => "null_null",
            SuiteId::RsaExportWeak => "rsa_export_weak",
            SuiteId::RsaExportCipher => "rsa_export_cipher",
            SuiteId::DheExportCipher => "dhe_export_cipher",
            SuiteId::RsaCbc => "rsa_cbc",
            SuiteId::DheCbc => "dhe_cbc",
            SuiteId::RsaAead => "rsa_aead",
            SuiteId::DheAead => "dhe_aead",
            SuiteId::EcdheAead => "ecdhe_aead",
            SuiteId::Tls13Aead => "tls13_aead",
        }
    }
}

/// Which suites are usable at which version.
pub fn version_supports_suite(version: VersionId, suite: SuiteId) -> bool {
    use SuiteId::*;
    match version {
        VersionId::Ssl20 => matches!(suite, NullNull | RsaExportWeak | RsaCbc),
        VersionId::Ssl30 | VersionId::Tls10 | VersionId::Tls11 => {
            matches!(suite, RsaCbc | DheCbc | RsaExportCipher | DheExportCipher)
        }
        VersionId::Tls12 => matches!(
            suite,
            RsaCbc | DheCbc | RsaAead | DheAead | EcdheAead | RsaExportCipher | DheExportCipher
        ),
        VersionId::Tls13Draft10 | VersionId::Tls13Final => matches!(suite, Tls13Aead),
    }
}

/// Every (version, suite) pair the simulator supports; the benign suite
/// must complete on each of them.
pub fn feature_pairs() -> Vec<(VersionId, SuiteId)> {
    let mut out = Vec::new();
    for v in VersionId::ALL {
        for s in SuiteId::ALL {
            if version_supports_suite(v, s) {
                out.push((v, s));
            }
        }
    }
    out
}

/// The hash that goes into the Finished MAC for a negotiated session.
/// `None` means the version has no Finished MAC at all (SSL 2.0).
pub fn finished_hash(version: VersionId, suite: SuiteId) -> Option<HashAlgoId> {
    if !version.has_finished_mac() {
        return None;
    }
    if version.forces_weak_finished_hash() {
        return Some(HashAlgoId::WeakMd5Sha1);
    }
    Some(suite.suite().hash)
}

// ---------------------------------------------------------------------------
// Named groups
// ---------------------------------------------------------------------------

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum GroupId {
    DhExport,
    DhStrong,
    EcToyA,
    EcToyB,
}

impl GroupId {
    pub const ALL: [GroupId; 4] = [
        GroupId::DhExport,
        GroupId::DhStrong,
        GroupId::EcToyA,
        GroupId::EcToyB,
    ];

    pub fn wire_byte(self) -> u8 {
        match self {
            GroupId::DhExport => 0,
            GroupId::DhStrong => 1,
            GroupId::EcToyA => 2,
            GroupId::EcToyB => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GroupId::DhExport => "dh_export_22",
            GroupId::DhStrong => "dh_strong_31",
            GroupId::EcToyA => "ec_toy_a",
            GroupId::EcToyB => "ec_toy_b",
        }
    }

    pub fn family(self) -> GroupFamily {
        match self {
            GroupId::DhExport | GroupId::DhStrong => GroupFamily::FiniteField,
            GroupId::EcToyA | GroupId::EcToyB => GroupFamily::EcToy,
        }
    }
}

static GROUPS: LazyLock<Vec<(GroupId, DhGroup)>> = LazyLock::new(|| {
    vec![
        (
            GroupId::DhExport,
            DhGroup::new(4_194_301, 7, GroupId::DhExport.as_str(), GroupFamily::FiniteField)
                .expect("export group constants"),
        ),
        (
            GroupId::DhStrong,
            DhGroup::new(
                2_147_483_647,
                13,
                GroupId::DhStrong.as_str(),
                GroupFamily::FiniteField,
            )
            .expect("strong group constants"),
        ),
        (
            GroupId::EcToyA,
            DhGroup::new(1_073_741_789, 6, GroupId::EcToyA.as_str(), GroupFamily::EcToy)
                .expect("ec group a constants"),
        ),
        (
            GroupId::EcToyB,
            DhGroup::new(536_870_909, 17, GroupId::EcToyB.as_str(), GroupFamily::EcToy)
                .expect("ec group b constants"),
        ),
    ]
});

pub fn group(id: GroupId) -> &'static DhGroup {
    &GROUPS.iter().find(|(g, _)| *g == id).expect("catalog group").1
}

pub fn group_by_prime(prime: u64) -> Option<GroupId> {
    GROUPS.iter().find(|(_, g)| g.prime_p == prime).map(|(id, _)| *id)
}

// ---------------------------------------------------------------------------
// Long-term toy keys
// ---------------------------------------------------------------------------

/// Config-level description of an RSA key; derived fields are computed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsaKeySpec {
    pub prime_p: u64,
    pub prime_q: u64,
    pub public_exp: u64,
    #[serde(default)]
    pub shared_with_sslv2: bool,
}

impl RsaKeySpec {
    pub fn build(&self) -> Result<RsaToyKey, crate::crypto::CryptoError> {
        RsaToyKey::from_primes(
            self.prime_p,
            self.prime_q,
            self.public_exp,
            self.shared_with_sslv2,
        )
    }

    pub fn strong_server(shared_with_sslv2: bool) -> Self {
        Self {
            prime_p: 65_537,
            prime_q: 65_539,
            public_exp: 17,
            shared_with_sslv2,
        }
    }
}

/// The fixed ephemeral export-grade RSA key a server uses for export RSA
/// key exchange.
pub fn export_ephemeral_rsa() -> RsaToyKey {
    RsaToyKey::from_primes(251, 65_521, 17, false).expect("export rsa constants")
}

/// Last eight bytes of the server nonce when a sentinel-capable server
/// negotiates below TLS 1.3: a fixed 7-byte tag then the wire byte of the
/// highest version the server saw in the ClientHello.
pub const SENTINEL_TAG: [u8; 7] = *b"DGVSENT";

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{Strength, BREAKABILITY_THRESHOLD};

    #[test]
    fn version_order_is_total_and_ascending() {
        for w in VersionId::ALL.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert!(VersionId::Ssl20 < VersionId::Ssl30);
        assert!(VersionId::Tls12 < VersionId::Tls13Draft10);
    }

    #[test]
    fn suite_invariants() {
        for id in SuiteId::ALL {
            let s = id.suite();
            assert_eq!(s.forward_secret(), s.kx.forward_secret());
            if s.kx.is_export() {
                assert!(
                    matches!(s.enc, EncAlgo::ExportCipher | EncAlgo::Null),
                    "export kx must pair with export or null encryption: {id:?}"
                );
            }
        }
        assert!(!KxAlgo::Rsa.sends_server_kx());
        assert!(KxAlgo::RsaExport.sends_server_kx());
        assert!(KxAlgo::Ecdhe.sends_server_kx());
    }

    #[test]
    fn feature_table_has_at_least_twenty_pairs() {
        let pairs = feature_pairs();
        assert!(pairs.len() >= 20, "only {} pairs", pairs.len());
        assert!(pairs.contains(&(VersionId::Ssl20, SuiteId::NullNull)));
        assert!(pairs.contains(&(VersionId::Tls13Final, SuiteId::Tls13Aead)));
        assert!(!version_supports_suite(VersionId::Tls13Final, SuiteId::RsaAead));
        assert!(!version_supports_suite(VersionId::Ssl20, SuiteId::Tls13Aead));
    }

    #[test]
    fn finished_hash_feature_table() {
        assert_eq!(finished_hash(VersionId::Ssl20, SuiteId::RsaCbc), None);
        assert_eq!(
            finished_hash(VersionId::Tls10, SuiteId::RsaCbc),
            Some(HashAlgoId::WeakMd5Sha1)
        );
        assert_eq!(
            finished_hash(VersionId::Tls11, SuiteId::DheCbc),
            Some(HashAlgoId::WeakMd5Sha1)
        );
        assert_eq!(
            finished_hash(VersionId::Tls12, SuiteId::DheAead),
            Some(HashAlgoId::Strong)
        );
        assert_eq!(
            finished_hash(VersionId::Tls13Final, SuiteId::Tls13Aead),
            Some(HashAlgoId::Strong)
        );
    }

    #[test]
    fn group_catalog_strengths() {
        assert_eq!(group(GroupId::DhExport).strength, Strength::Export);
        assert!(group(GroupId::DhExport).prime_p < BREAKABILITY_THRESHOLD);
        for id in [GroupId::DhStrong, GroupId::EcToyA, GroupId::EcToyB] {
            assert_eq!(group(id).strength, Strength::Strong);
        }
        for id in GroupId::ALL {
            group(id).validate().unwrap();
            assert_eq!(group(id).family, id.family());
        }
    }

    #[test]
    fn hrr_policy_follows_version() {
        assert!(HelloRetryPolicy::for_version(VersionId::Tls13Draft10).restart_transcript_on_hrr);
        assert!(!HelloRetryPolicy::for_version(VersionId::Tls13Final).restart_transcript_on_hrr);
    }

    #[test]
    fn long_term_keys_build() {
        let strong = RsaKeySpec::strong_server(false).build().unwrap();
        assert_eq!(strong.strength, Strength::Strong);
        let export = export_ephemeral_rsa();
        assert_eq!(export.strength, Strength::Export);
        assert!(export.modulus_n > 1 << 16);
    }

    #[test]
    fn dance_fallback_chain() {
        assert_eq!(VersionId::Tls13Final.dance_fallback(), Some(VersionId::Tls12));
        assert_eq!(VersionId::Tls13Draft10.dance_fallback(), Some(VersionId::Tls12));
        assert_eq!(VersionId::Tls12.dance_fallback(), Some(VersionId::Tls11));
        assert_eq!(VersionId::Ssl20.dance_fallback(), None);
    }
}
