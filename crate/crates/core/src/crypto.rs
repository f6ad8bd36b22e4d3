//! Key generation, hybrid record encryption, transaction signing, and
//! content hashing.
//!
//! Key pairs are derived deterministically from a seed so simulation
//! runs are reproducible. Each pair carries two halves: an Ed25519
//! signing key and an X25519 key-agreement key. Encryption is a hybrid
//! envelope — a fresh symmetric data key encrypts the payload, and the
//! data key is wrapped to the recipient's agreement key via an
//! ephemeral Diffie-Hellman exchange. Tampering with any envelope field
//! fails authenticated decryption.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use ed25519_dalek::{Signer as _, Verifier as _};
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PUBLIC_KEY_LEN: usize = 64;
pub const SIGNATURE_LEN: usize = 64;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const DATA_KEY_LEN: usize = 32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    /// Ciphertext failed authentication: tampered bytes or wrong key.
    #[error("authenticated decryption failed")]
    AuthFailure,
    #[error("malformed ciphertext: {0}")]
    Malformed(&'static str),
}

/// Public half of a key pair: Ed25519 verify key + X25519 agreement key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey {
    verify: [u8; 32],
    agree: [u8; 32],
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out[..32].copy_from_slice(&self.verify);
        out[32..].copy_from_slice(&self.agree);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_KEY_LEN {
            return Err(CryptoError::Malformed("public key length"));
        }
        let mut verify = [0u8; 32];
        let mut agree = [0u8; 32];
        verify.copy_from_slice(&bytes[..32]);
        agree.copy_from_slice(&bytes[32..]);
        Ok(Self { verify, agree })
    }

    pub fn hex(&self) -> String {
        hex::encode(self.to_bytes())
    }
}

/// A deterministic key pair derived from a seed.
#[derive(Clone)]
pub struct KeyPair {
    signing: ed25519_dalek::SigningKey,
    agreement: x25519_dalek::StaticSecret,
    public: PublicKey,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public.hex())
            .finish_non_exhaustive()
    }
}

/// Derive a key pair from an arbitrary seed byte string.
///
/// The same seed always yields the same pair; distinct seeds yield
/// distinct keys with overwhelming probability.
pub fn generate_keypair(seed: &[u8]) -> KeyPair {
    let sign_seed = derive(seed, b"sign");
    let agree_seed = derive(seed, b"agree");
    let signing = ed25519_dalek::SigningKey::from_bytes(&sign_seed);
    let agreement = x25519_dalek::StaticSecret::from(agree_seed);
    let public = PublicKey {
        verify: signing.verifying_key().to_bytes(),
        agree: x25519_dalek::PublicKey::from(&agreement).to_bytes(),
    };
    KeyPair {
        signing,
        agreement,
        public,
    }
}

fn derive(seed: &[u8], label: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update((seed.len() as u64).to_be_bytes());
    hasher.update(seed);
    hasher.update(label);
    hasher.finalize().into()
}

impl KeyPair {
    pub fn public(&self) -> PublicKey {
        self.public
    }
}

/// Hybrid envelope: wrapped data key, body nonce, body, and auth tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ciphertext {
    /// Ephemeral agreement key + wrap nonce + encrypted data key.
    pub wrapped_key: Vec<u8>,
    /// Nonce for the body encryption.
    pub nonce: [u8; NONCE_LEN],
    /// Symmetric ciphertext of the payload, tag detached.
    pub body: Vec<u8>,
    /// Authentication tag over the body.
    pub auth_tag: [u8; TAG_LEN],
}

const WRAPPED_KEY_LEN: usize = 32 + NONCE_LEN + DATA_KEY_LEN + TAG_LEN;

impl Ciphertext {
    /// Canonical byte serialization; hashed for content addressing.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.wire_len());
        out.extend_from_slice(&(self.wrapped_key.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.wrapped_key);
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&(self.body.len() as u64).to_be_bytes());
        out.extend_from_slice(&self.body);
        out.extend_from_slice(&self.auth_tag);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], CryptoError> {
            if bytes.len() < *pos + n {
                return Err(CryptoError::Malformed("truncated"));
            }
            let s = &bytes[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let mut len8 = [0u8; 8];
        len8.copy_from_slice(take(&mut pos, 8)?);
        let wk_len = u64::from_be_bytes(len8) as usize;
        if wk_len > bytes.len() {
            return Err(CryptoError::Malformed("wrapped key length"));
        }
        let wrapped_key = take(&mut pos, wk_len)?.to_vec();
        let mut nonce = [0u8; NONCE_LEN];
        nonce.copy_from_slice(take(&mut pos, NONCE_LEN)?);
        len8.copy_from_slice(take(&mut pos, 8)?);
        let body_len = u64::from_be_bytes(len8) as usize;
        if body_len > bytes.len() {
            return Err(CryptoError::Malformed("body length"));
        }
        let body = take(&mut pos, body_len)?.to_vec();
        let mut auth_tag = [0u8; TAG_LEN];
        auth_tag.copy_from_slice(take(&mut pos, TAG_LEN)?);
        if pos != bytes.len() {
            return Err(CryptoError::Malformed("trailing bytes"));
        }
        Ok(Self {
            wrapped_key,
            nonce,
            body,
            auth_tag,
        })
    }

    /// Total serialized length in bytes; used for link latency modeling.
    pub fn wire_len(&self) -> usize {
        8 + self.wrapped_key.len() + NONCE_LEN + 8 + self.body.len() + TAG_LEN
    }
}

/// Encrypt `plaintext` to `recipient`, drawing envelope randomness from `rng`.
pub fn encrypt<R: RngCore>(plaintext: &[u8], recipient: &PublicKey, rng: &mut R) -> Ciphertext {
    let mut eph_seed = [0u8; 32];
    rng.fill_bytes(&mut eph_seed);
    let eph_secret = x25519_dalek::StaticSecret::from(eph_seed);
    let eph_public = x25519_dalek::PublicKey::from(&eph_secret);
    let shared = eph_secret.diffie_hellman(&x25519_dalek::PublicKey::from(recipient.agree));
    let kek = wrap_key_for(shared.as_bytes(), &eph_public.to_bytes(), recipient);

    let mut data_key = [0u8; DATA_KEY_LEN];
    rng.fill_bytes(&mut data_key);
    let mut wrap_nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut wrap_nonce);
    let wrapped = ChaCha20Poly1305::new(Key::from_slice(&kek))
        .encrypt(
            Nonce::from_slice(&wrap_nonce),
            Payload {
                msg: &data_key,
                aad: &[],
            },
        )
        .expect("key wrap cannot fail");

    let mut wrapped_key = Vec::with_capacity(WRAPPED_KEY_LEN);
    wrapped_key.extend_from_slice(&eph_public.to_bytes());
    wrapped_key.extend_from_slice(&wrap_nonce);
    wrapped_key.extend_from_slice(&wrapped);
    debug_assert_eq!(wrapped_key.len(), WRAPPED_KEY_LEN);

    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let mut sealed = ChaCha20Poly1305::new(Key::from_slice(&data_key))
        .encrypt(
            Nonce::from_slice(&nonce),
            Payload {
                msg: plaintext,
                aad: &[],
            },
        )
        .expect("body encryption cannot fail");
    let auth_tag_vec = sealed.split_off(sealed.len() - TAG_LEN);
    let mut auth_tag = [0u8; TAG_LEN];
    auth_tag.copy_from_slice(&auth_tag_vec);

    Ciphertext {
        wrapped_key,
        nonce,
        body: sealed,
        auth_tag,
    }
}

/// Decrypt an envelope with the recipient's key pair.
pub fn decrypt(ct: &Ciphertext, keys: &KeyPair) -> Result<Vec<u8>, CryptoError> {
    if ct.wrapped_key.len() != WRAPPED_KEY_LEN {
        return Err(CryptoError::Malformed("wrapped key length"));
    }
    let mut eph = [0u8; 32];
    eph.copy_from_slice(&ct.wrapped_key[..32]);
    let wrap_nonce = &ct.wrapped_key[32..32 + NONCE_LEN];
    let wrapped = &ct.wrapped_key[32 + NONCE_LEN..];

    let shared = keys
        .agreement
        .diffie_hellman(&x25519_dalek::PublicKey::from(eph));
    let kek = wrap_key_for(shared.as_bytes(), &eph, &keys.public);
    let data_key = ChaCha20Poly1305::new(Key::from_slice(&kek))
        .decrypt(
            Nonce::from_slice(wrap_nonce),
            Payload {
                msg: wrapped,
                aad: &[],
            },
        )
        .map_err(|_| CryptoError::AuthFailure)?;

    let mut sealed = ct.body.clone();
    sealed.extend_from_slice(&ct.auth_tag);
    ChaCha20Poly1305::new(Key::from_slice(&data_key))
        .decrypt(
            Nonce::from_slice(&ct.nonce),
            Payload {
                msg: &sealed,
                aad: &[],
            },
        )
        .map_err(|_| CryptoError::AuthFailure)
}

fn wrap_key_for(shared: &[u8], eph_public: &[u8; 32], recipient: &PublicKey) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"envelope-kek");
    hasher.update(shared);
    hasher.update(eph_public);
    hasher.update(recipient.to_bytes());
    hasher.finalize().into()
}

/// Detached signature over a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl Signature {
    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; SIGNATURE_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::Malformed("signature length"))?;
        Ok(Self(arr))
    }
}

/// Sign `message` with the pair's signing half.
pub fn sign(message: &[u8], keys: &KeyPair) -> Signature {
    Signature(keys.signing.sign(message).to_bytes())
}

/// Verify a signature; returns false on any mismatch, never errors.
pub fn verify(sig: &Signature, message: &[u8], public: &PublicKey) -> bool {
    let Ok(vk) = ed25519_dalek::VerifyingKey::from_bytes(&public.verify) else {
        return false;
    };
    vk.verify(message, &ed25519_dalek::Signature::from_bytes(&sig.0))
        .is_ok()
}

/// 32-byte content digest, rendered as lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ContentHash(pub [u8; 32]);

impl ContentHash {
    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Self(arr))
    }
}

impl std::fmt::Display for ContentHash {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.hex())
    }
}

/// SHA-256 over the canonical concatenation `BE64(timestamp) || data`.
pub fn content_hash(data: &[u8], timestamp: u64) -> ContentHash {
    let mut hasher = Sha256::new();
    hasher.update(timestamp.to_be_bytes());
    hasher.update(data);
    ContentHash(hasher.finalize().into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fill(rng: &mut ChaCha8Rng, buf: &mut [u8]) {
        rand::RngCore::fill_bytes(rng, buf);
    }

    #[test]
    fn keypair_is_deterministic_per_seed() {
        let a = generate_keypair(b"mec-1");
        let b = generate_keypair(b"mec-1");
        let c = generate_keypair(b"mec-2");
        assert_eq!(a.public(), b.public());
        assert_ne!(a.public(), c.public());
    }

    #[test]
    fn one_kilobyte_round_trip() {
        let keys = generate_keypair(b"mec-1");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let payload = vec![0xabu8; 1024];
        let ct = encrypt(&payload, &keys.public(), &mut rng);
        assert_eq!(decrypt(&ct, &keys).unwrap(), payload);
    }

    #[test]
    fn empty_plaintext_round_trips() {
        let keys = generate_keypair(b"k");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ct = encrypt(&[], &keys.public(), &mut rng);
        assert_eq!(decrypt(&ct, &keys).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn five_megabyte_round_trip() {
        let keys = generate_keypair(b"big");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut payload = vec![0u8; 5 * 1024 * 1024];
        fill(&mut rng, &mut payload);
        let ct = encrypt(&payload, &keys.public(), &mut rng);
        assert_eq!(decrypt(&ct, &keys).unwrap(), payload);
    }

    #[test]
    fn body_bit_flip_fails_auth() {
        let keys = generate_keypair(b"k");
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut ct = encrypt(b"record", &keys.public(), &mut rng);
        ct.body[0] ^= 1;
        assert_eq!(decrypt(&ct, &keys), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn wrong_recipient_fails_auth() {
        let alice = generate_keypair(b"alice");
        let bob = generate_keypair(b"bob");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ct = encrypt(b"secret", &alice.public(), &mut rng);
        assert_eq!(decrypt(&ct, &bob), Err(CryptoError::AuthFailure));
    }

    #[test]
    fn sign_verify_round_trip() {
        let keys = generate_keypair(b"signer");
        let other = generate_keypair(b"other");
        let sig = sign(b"message", &keys);
        assert!(verify(&sig, b"message", &keys.public()));
        assert!(!verify(&sig, b"message", &other.public()));
        assert!(!verify(&sig, b"message!", &keys.public()));
    }

    #[test]
    fn content_hash_of_empty_data_at_zero() {
        // SHA-256 over eight zero bytes (the BE64 timestamp prefix alone).
        assert_eq!(
            content_hash(&[], 0).hex(),
            "af5570f5a1810b7af78caf4bc70a660f0df51e42baf91d4de5b2328de0e83dfc"
        );
    }

    #[test]
    fn content_hash_hex_is_64_lowercase_chars() {
        let h = content_hash(b"data", 7).hex();
        assert_eq!(h.len(), 64);
        assert!(h
            .chars()
            .all(|c| c.is_ascii_hexdigit() && !c.is_ascii_uppercase()));
    }

    #[test]
    fn timestamp_changes_digest() {
        assert_ne!(content_hash(b"data", 1), content_hash(b"data", 2));
        assert_eq!(content_hash(b"data", 1), content_hash(b"data", 1));
    }

    #[test]
    fn thousand_mutated_signatures_all_fail() {
        let keys = generate_keypair(b"forgery-scale");
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut rejected = 0;
        for i in 0..1000u32 {
            let msg = i.to_be_bytes();
            let sig = sign(&msg, &keys);
            let mut bytes = sig.0;
            let bit = (rand::Rng::gen_range(&mut rng, 0..SIGNATURE_LEN * 8)) as usize;
            bytes[bit / 8] ^= 1 << (bit % 8);
            if !verify(&Signature(bytes), &msg, &keys.public()) {
                rejected += 1;
            }
        }
        assert_eq!(rejected, 1000);
    }

    #[test]
    fn ciphertext_serialization_round_trips() {
        let keys = generate_keypair(b"ser");
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ct = encrypt(b"wire format", &keys.public(), &mut rng);
        let bytes = ct.to_bytes();
        assert_eq!(bytes.len(), ct.wire_len());
        assert_eq!(Ciphertext::from_bytes(&bytes).unwrap(), ct);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn hybrid_round_trip_and_tamper(seed in any::<u64>(), len in 0usize..512, flip in any::<u16>()) {
            let keys = generate_keypair(&seed.to_be_bytes());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut payload = vec![0u8; len];
            fill(&mut rng, &mut payload);
            let ct = encrypt(&payload, &keys.public(), &mut rng);
            prop_assert_eq!(decrypt(&ct, &keys).unwrap(), payload);

            // Flip one bit anywhere in the serialized envelope.
            let mut bytes = ct.to_bytes();
            let bit = (flip as usize) % (bytes.len() * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            match Ciphertext::from_bytes(&bytes) {
                Ok(tampered) => prop_assert!(decrypt(&tampered, &keys).is_err()),
                Err(_) => {} // structural damage also counts as rejection
            }
        }

        #[test]
        fn mutated_signatures_never_verify(seed in any::<u64>(), flip in any::<u16>()) {
            let keys = generate_keypair(&seed.to_be_bytes());
            let msg = seed.to_le_bytes();
            let sig = sign(&msg, &keys);
            let mut bytes = sig.0;
            let bit = (flip as usize) % (SIGNATURE_LEN * 8);
            bytes[bit / 8] ^= 1 << (bit % 8);
            prop_assert!(!verify(&Signature(bytes), &msg, &keys.public()));
        }
    }
}
