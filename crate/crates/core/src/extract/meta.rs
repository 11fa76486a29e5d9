//! Aggregated per-function metadata features.

use crate::types::{FunctionRecord, ACCESS_FLAGS};

use super::hashing::{hash_tokens_into, HASH_WIDTH};
use super::histogram::{byte_entropy_histogram, byte_histogram};
use super::strings::{string_stats, CHAR_BINS};

/// `(name, width)` for the 24 metadata groups, in column order.
pub const META_GROUPS: [(&str, usize); 24] = [
    ("class_name", HASH_WIDTH),
    ("method_name", HASH_WIDTH),
    ("num_params", 1),
    ("param_types", HASH_WIDTH),
    ("return_type", HASH_WIDTH),
    ("access_flags", ACCESS_FLAGS.len()),
    ("num_registers", 1),
    ("code_length", 1),
    ("byte_histogram", 256),
    ("byte_entropy_histogram", 256),
    ("instr_count", 1),
    ("opcode_names", HASH_WIDTH),
    ("has_invalid_chars", 1),
    ("string_literals", HASH_WIDTH),
    ("num_strings", 1),
    ("avg_string_length", 1),
    ("char_histogram", CHAR_BINS),
    ("char_entropy", 1),
    ("external_paths", 1),
    ("urls", 1),
    ("ips", 1),
    ("registry_mods", 1),
    ("in_memory_exec", 1),
    ("instructions_cached", 1),
];

/// Groups available for every function, external or not.
pub const UNIVERSAL_META_GROUPS: usize = 5;

pub const META_DIM: usize = 936;

/// Offsets of each group within the metadata block.
pub(crate) const fn meta_offsets() -> [usize; 24] {
    let mut out = [0; 24];
    let mut i = 1;
    while i < 24 {
        out[i] = out[i - 1] + META_GROUPS[i - 1].1;
        i += 1;
    }
    out
}

const OFFSETS: [usize; 24] = meta_offsets();

/// Metadata block for one function plus per-group presence.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaVector {
    pub values: Vec<f32>,
    pub present: [bool; 24],
}

impl MetaVector {
    pub fn group(&self, g: usize) -> &[f32] {
        &self.values[OFFSETS[g]..OFFSETS[g] + META_GROUPS[g].1]
    }
}

struct Writer {
    values: Vec<f32>,
    present: [bool; 24],
}

impl Writer {
    fn slot(&mut self, g: usize) -> &mut [f32] {
        self.present[g] = true;
        &mut self.values[OFFSETS[g]..OFFSETS[g] + META_GROUPS[g].1]
    }

    fn scalar(&mut self, g: usize, v: f32) {
        self.slot(g)[0] = v;
    }
}

pub fn meta_features(r: &FunctionRecord) -> MetaVector {
    let mut w = Writer { values: vec![0.0; META_DIM], present: [false; 24] };
    hash_tokens_into(&r.class_name, w.slot(0));
    hash_tokens_into(&[&r.method_name], w.slot(1));
    w.scalar(2, r.num_params as f32);
    hash_tokens_into(&r.param_types, w.slot(3));
    hash_tokens_into(&[&r.return_type], w.slot(4));
    if r.external {
        return MetaVector { values: w.values, present: w.present };
    }

    let flags = w.slot(5);
    for f in &r.access_flags {
        if let Some(i) = ACCESS_FLAGS.iter().position(|a| a == f) {
            flags[i] = 1.0;
        }
    }
    if let Some(n) = r.num_registers {
        w.scalar(6, n as f32);
    }
    if let Some(code) = &r.code {
        w.scalar(7, code.length as f32);
        w.slot(8).copy_from_slice(&byte_histogram(&code.bytes));
        w.slot(9).copy_from_slice(&byte_entropy_histogram(&code.bytes));
    }
    if let Some(ins) = &r.instructions {
        w.scalar(10, ins.count as f32);
        hash_tokens_into(&ins.opcodes, w.slot(11));
        w.scalar(23, ins.cached as u8 as f32);
    }
    if let Some(strings) = &r.strings {
        let st = string_stats(strings);
        w.scalar(12, st.has_invalid_chars);
        hash_tokens_into(strings, w.slot(13));
        w.scalar(14, st.num_strings);
        w.scalar(15, st.avg_length);
        w.slot(16).copy_from_slice(&st.char_histogram);
        w.scalar(17, st.char_entropy);
        w.scalar(18, st.external_paths);
        w.scalar(19, st.urls);
        w.scalar(20, st.ips);
        w.scalar(21, st.registry_mods);
        w.scalar(22, st.in_memory_exec);
    }
    MetaVector { values: w.values, present: w.present }
}
