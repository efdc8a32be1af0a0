//! Long-term keys: X25519 for sealing, Ed25519 for signatures.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::ChaCha20Poly1305;
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

use super::ChannelError;

pub const SEAL_OVERHEAD: usize = 32 + 16;
const PKE_INFO: &[u8] = b"hesplit-pke-v1";

/// Public halves a party hands to its peer during setup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PublicKeys {
    pub pke: [u8; 32],
    pub ver: [u8; 32],
}

impl PublicKeys {
    pub fn to_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.pke);
        out[32..].copy_from_slice(&self.ver);
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ChannelError> {
        if b.len() != 64 {
            return Err(ChannelError::Key(format!("public key bundle must be 64 bytes, got {}", b.len())));
        }
        let pk = Self { pke: b[..32].try_into().unwrap(), ver: b[32..].try_into().unwrap() };
        pk.verifying_key()?;
        Ok(pk)
    }

    pub fn verifying_key(&self) -> Result<VerifyingKey, ChannelError> {
        VerifyingKey::from_bytes(&self.ver).map_err(|e| ChannelError::Key(e.to_string()))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.to_bytes())
    }

    pub fn from_hex(s: &str) -> Result<Self, ChannelError> {
        let b = hex::decode(s.trim()).map_err(|e| ChannelError::Key(e.to_string()))?;
        Self::from_bytes(&b)
    }
}

/// A party's own key pairs.
#[derive(Clone)]
pub struct KeyRing {
    pke_sk: StaticSecret,
    sign: SigningKey,
}

impl std::fmt::Debug for KeyRing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyRing").field("public", &self.public()).finish_non_exhaustive()
    }
}

impl KeyRing {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self { pke_sk: StaticSecret::random_from_rng(&mut *rng), sign: SigningKey::generate(rng) }
    }

    pub fn public(&self) -> PublicKeys {
        PublicKeys { pke: PublicKey::from(&self.pke_sk).to_bytes(), ver: self.sign.verifying_key().to_bytes() }
    }

    pub fn sign(&self, digest: &[u8]) -> [u8; 64] {
        self.sign.sign(digest).to_bytes()
    }

    /// Secret material for storage on the owner's disk only.
    pub fn to_secret_hex(&self) -> String {
        format!("{}{}", hex::encode(self.pke_sk.to_bytes()), hex::encode(self.sign.to_bytes()))
    }

    pub fn from_secret_hex(s: &str) -> Result<Self, ChannelError> {
        let b = hex::decode(s.trim()).map_err(|e| ChannelError::Key(e.to_string()))?;
        if b.len() != 64 {
            return Err(ChannelError::Key("secret key file must hold 64 bytes".into()));
        }
        let pke: [u8; 32] = b[..32].try_into().unwrap();
        let sig: [u8; 32] = b[32..].try_into().unwrap();
        Ok(Self { pke_sk: StaticSecret::from(pke), sign: SigningKey::from_bytes(&sig) })
    }

    /// Opens a blob produced by [`seal`] for this key ring.
    pub fn open(&self, sealed: &[u8], aad: &[u8]) -> Result<Vec<u8>, ChannelError> {
        if sealed.len() < SEAL_OVERHEAD {
            return Err(ChannelError::Decrypt);
        }
        let eph: [u8; 32] = sealed[..32].try_into().unwrap();
        let shared = self.pke_sk.diffie_hellman(&PublicKey::from(eph));
        let own = PublicKey::from(&self.pke_sk).to_bytes();
        let cipher = derive_cipher(shared.as_bytes(), &eph, &own);
        cipher.decrypt(&Default::default(), Payload { msg: &sealed[32..], aad }).map_err(|_| ChannelError::Decrypt)
    }
}

fn derive_cipher(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> ChaCha20Poly1305 {
    let hk = Hkdf::<Sha256>::new(None, shared);
    let mut info = Vec::with_capacity(PKE_INFO.len() + 64);
    info.extend_from_slice(PKE_INFO);
    info.extend_from_slice(eph);
    info.extend_from_slice(recipient);
    let mut key = [0u8; 32];
    hk.expand(&info, &mut key).expect("hkdf length");
    ChaCha20Poly1305::new(&key.into())
}

/// Hybrid sealing: ephemeral X25519, HKDF-SHA256, ChaCha20-Poly1305.
/// Every call uses a fresh ephemeral key, so the all-zero nonce is never reused.
pub fn seal<R: RngCore + CryptoRng>(
    recipient: &PublicKeys,
    plaintext: &[u8],
    aad: &[u8],
    rng: &mut R,
) -> Result<Vec<u8>, ChannelError> {
    let eph_sk = StaticSecret::random_from_rng(rng);
    let eph = PublicKey::from(&eph_sk).to_bytes();
    let shared = eph_sk.diffie_hellman(&PublicKey::from(recipient.pke));
    if !shared.was_contributory() {
        return Err(ChannelError::Key("peer PKE key is a low-order point".into()));
    }
    let cipher = derive_cipher(shared.as_bytes(), &eph, &recipient.pke);
    let ct = cipher.encrypt(&Default::default(), Payload { msg: plaintext, aad }).map_err(|_| ChannelError::Decrypt)?;
    let mut out = Vec::with_capacity(32 + ct.len());
    out.extend_from_slice(&eph);
    out.extend_from_slice(&ct);
    Ok(out)
}

pub fn verify(peer: &PublicKeys, digest: &[u8], sig: &[u8; 64]) -> Result<(), ChannelError> {
    let vk = peer.verifying_key()?;
    vk.verify(digest, &Signature::from_bytes(sig)).map_err(|_| ChannelError::BadSignature)
}
