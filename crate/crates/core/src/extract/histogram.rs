//! Byte-level distributions over function code.

/// Sliding window length for the byte-entropy histogram.
pub const ENTROPY_WINDOW: usize = 2048;
pub const ENTROPY_STEP: usize = 1024;

/// Shannon entropy in bits of a count vector with the given total.
pub(crate) fn entropy_bits(counts: &[u64], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / t;
            -p * p.log2()
        })
        .sum()
}

/// Normalized byte-value histogram; zeros for empty input.
pub fn byte_histogram(bytes: &[u8]) -> [f32; 256] {
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let mut out = [0.0f32; 256];
    if bytes.is_empty() {
        return out;
    }
    let total = bytes.len() as f64;
    for (o, c) in out.iter_mut().zip(counts) {
        *o = (c as f64 / total) as f32;
    }
    out
}

/// Joint (window entropy, high nibble) histogram, 16×16 flattened entropy-major.
pub fn byte_entropy_histogram(bytes: &[u8]) -> [f32; 256] {
    let mut bins = [0u64; 256];
    let mut add_window = |w: &[u8]| {
        let mut counts = [0u64; 256];
        for &b in w {
            counts[b as usize] += 1;
        }
        let h = entropy_bits(&counts, w.len() as u64);
        let ebin = ((h * 2.0).floor() as usize).min(15);
        for &b in w {
            bins[ebin * 16 + (b >> 4) as usize] += 1;
        }
    };
    if bytes.len() < ENTROPY_WINDOW {
        if !bytes.is_empty() {
            add_window(bytes);
        }
    } else {
        let mut start = 0;
        while start + ENTROPY_WINDOW <= bytes.len() {
            add_window(&bytes[start..start + ENTROPY_WINDOW]);
            start += ENTROPY_STEP;
        }
    }
    let total: u64 = bins.iter().sum();
    let mut out = [0.0f32; 256];
    if total > 0 {
        for (o, c) in out.iter_mut().zip(bins) {
            *o = (c as f64 / total as f64) as f32;
        }
    }
    out
}
