//! Statistics over a function's string literals.

use super::histogram::entropy_bits;

/// 95 printable ASCII bins (0x20..=0x7E) plus one bucket for everything else.
pub const CHAR_BINS: usize = 96;

const REGISTRY_KEYS: [&str; 4] = ["/shared_prefs/", "Settings.Secure", "Settings.System", "Settings.Global"];
const IN_MEMORY_KEYS: [&str; 6] = ["ClassLoader", "DexFile", "loadDex", "loadClass", "defineClass", "loadLibrary"];

#[derive(Clone, Debug, PartialEq)]
pub struct StringStats {
    pub num_strings: f32,
    pub avg_length: f32,
    pub char_histogram: [f32; CHAR_BINS],
    pub char_entropy: f32,
    pub has_invalid_chars: f32,
    pub external_paths: f32,
    pub urls: f32,
    pub ips: f32,
    pub registry_mods: f32,
    pub in_memory_exec: f32,
}

fn char_bin(b: u8) -> usize {
    if (0x20..=0x7e).contains(&b) {
        (b - 0x20) as usize
    } else {
        CHAR_BINS - 1
    }
}

fn is_valid_byte(b: u8) -> bool {
    (0x20..=0x7e).contains(&b) || matches!(b, b'\t' | b'\n' | b'\r')
}

/// True if `s` contains four dot-separated groups of 1 to 3 digits, each at most 255.
/// Plain substring semantics: no boundary is required around the quad.
pub fn contains_ipv4(s: &str) -> bool {
    let b = s.as_bytes();
    fn group(b: &[u8], at: usize, len: usize) -> bool {
        at + len <= b.len()
            && b[at..at + len].iter().all(u8::is_ascii_digit)
            && b[at..at + len].iter().fold(0u32, |v, &d| v * 10 + (d - b'0') as u32) <= 255
    }
    fn quad_from(b: &[u8], at: usize, remaining: usize) -> bool {
        (1..=3).any(|len| {
            group(b, at, len)
                && if remaining == 1 {
                    true
                } else {
                    b.get(at + len) == Some(&b'.') && quad_from(b, at + len + 1, remaining - 1)
                }
        })
    }
    (0..b.len()).any(|start| b[start].is_ascii_digit() && quad_from(b, start, 4))
}

pub fn string_stats<S: AsRef<str>>(strings: &[S]) -> StringStats {
    let mut counts = [0u64; CHAR_BINS];
    let mut total_len = 0u64;
    let mut invalid = false;
    let (mut paths, mut urls, mut ips, mut registry, mut in_memory) = (0u32, 0u32, 0u32, 0u32, 0u32);
    for s in strings {
        let s = s.as_ref();
        total_len += s.len() as u64;
        for &b in s.as_bytes() {
            counts[char_bin(b)] += 1;
            invalid |= !is_valid_byte(b);
        }
        paths += s.starts_with('/') as u32;
        urls += (s.contains("http://") || s.contains("https://")) as u32;
        ips += contains_ipv4(s) as u32;
        registry += REGISTRY_KEYS.iter().any(|k| s.contains(k)) as u32;
        in_memory += IN_MEMORY_KEYS.iter().any(|k| s.contains(k)) as u32;
    }
    let mut char_histogram = [0.0f32; CHAR_BINS];
    if total_len > 0 {
        for (h, c) in char_histogram.iter_mut().zip(counts) {
            *h = (c as f64 / total_len as f64) as f32;
        }
    }
    let avg_length = if strings.is_empty() { 0.0 } else { total_len as f64 / strings.len() as f64 };
    StringStats {
        num_strings: strings.len() as f32,
        avg_length: avg_length as f32,
        char_histogram,
        char_entropy: entropy_bits(&counts, total_len) as f32,
        has_invalid_chars: invalid as u8 as f32,
        external_paths: paths as f32,
        urls: urls as f32,
        ips: ips as f32,
        registry_mods: registry as f32,
        in_memory_exec: in_memory as f32,
    }
}
