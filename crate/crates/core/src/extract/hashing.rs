//! Signed feature hashing over FNV-1a 64.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Width of every hashed token group.
pub const HASH_WIDTH: usize = 50;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Hashing trick: slot `h mod width`, sign from bit 63 (set means negative).
pub fn hash_tokens_into<S: AsRef<str>>(tokens: &[S], out: &mut [f32]) {
    let width = out.len() as u64;
    for tok in tokens {
        let h = fnv1a64(tok.as_ref().as_bytes());
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        out[(h % width) as usize] += sign;
    }
}

pub fn hash_tokens<S: AsRef<str>>(tokens: &[S], width: usize) -> Vec<f32> {
    let mut out = vec![0.0; width];
    hash_tokens_into(tokens, &mut out);
    out
}
