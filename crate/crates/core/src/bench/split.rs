use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CorpusIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Tiny,
    Common,
    Distinct,
}

/// One label-table row: a class drawing from `family` restricted to `types`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRow {
    pub class_id: usize,
    pub family: String,
    pub types: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub variant: Variant,
    pub label_table: Vec<LabelRow>,
    #[serde(default = "default_per_class")]
    pub per_class: usize,
    #[serde(default = "default_max_nodes")]
    pub max_nodes: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_per_class() -> usize {
    1000
}
fn default_max_nodes() -> usize {
    5000
}

impl SplitSpec {
    pub fn new(variant: Variant, label_table: Vec<LabelRow>) -> Self {
        SplitSpec { variant, label_table, per_class: default_per_class(), max_nodes: default_max_nodes(), seed: 0 }
    }

    pub fn class_ids(&self) -> BTreeSet<usize> {
        self.label_table.iter().map(|r| r.class_id).collect()
    }

    /// Families feeding each class, joined with `+`.
    pub fn class_name(&self, class_id: usize) -> String {
        let fams: BTreeSet<&str> =
            self.label_table.iter().filter(|r| r.class_id == class_id).map(|r| r.family.as_str()).collect();
        fams.into_iter().collect::<Vec<_>>().join("+")
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.class_ids().len() < 2 {
            v.push("split spec needs at least 2 classes".to_string());
        }
        if self.per_class < 1 {
            v.push("per_class must be >= 1".to_string());
        }
        let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for r in &self.label_table {
            if r.types.is_empty() {
                v.push(format!("class {} family {}: no allowed types", r.class_id, r.family));
            }
            for t in &r.types {
                if let Some(prev) = seen.insert((r.family.as_str(), t.as_str()), r.class_id) {
                    v.push(format!("label rows overlap on ({}, {t}) for classes {prev} and {}", r.family, r.class_id));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    /// Class owning a `(family, type)` pair, if any.
    pub fn class_of(&self, family: &str, type_name: &str) -> Option<usize> {
        self.label_table
            .iter()
            .find(|r| r.family == family && r.types.iter().any(|t| t == type_name))
            .map(|r| r.class_id)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitClass {
    pub class_id: usize,
    pub name: String,
    pub sample_ids: Vec<String>,
}

/// Selected sample ids per class, ordered by class id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub variant: Variant,
    pub classes: Vec<SplitClass>,
}

impl Split {
    pub fn ids(&self) -> BTreeSet<&str> {
        self.classes.iter().flat_map(|c| c.sample_ids.iter().map(String::as_str)).collect()
    }

    pub fn class_of_sample(&self) -> BTreeMap<&str, usize> {
        self.classes.iter().enumerate().flat_map(|(k, c)| c.sample_ids.iter().map(move |s| (s.as_str(), k))).collect()
    }
}

/// Fisher–Yates over `items` driven by `rng`, `j = next_u64() mod (i + 1)`.
pub fn fisher_yates<T>(items: &mut [T], rng: &mut SplitMix64) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

/// Seeded per-class sampling. Classes are visited in id order with one
/// SplitMix64 stream; each class's candidates are sorted, shuffled and cut
/// to `per_class`, and the selection is returned sorted.
pub fn build_split(index: &CorpusIndex, spec: &SplitSpec, exclude: &BTreeSet<String>) -> Result<Split> {
    spec.validate()?;
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let mut classes = Vec::new();
    for class_id in spec.class_ids() {
        let mut candidates: Vec<&str> = index
            .entries
            .iter()
            .filter(|e| e.node_count < spec.max_nodes)
            .filter(|e| spec.class_of(&e.family, &e.type_name) == Some(class_id))
            .filter(|e| !exclude.contains(&e.sample_id))
            .map(|e| e.sample_id.as_str())
            .collect();
        let name = spec.class_name(class_id);
        if candidates.len() < spec.per_class {
            return Err(Error::InsufficientCandidates { class: name, need: spec.per_class, found: candidates.len() });
        }
        candidates.sort_unstable();
        fisher_yates(&mut candidates, &mut rng);
        let mut chosen: Vec<String> = candidates[..spec.per_class].iter().map(|s| s.to_string()).collect();
        chosen.sort_unstable();
        classes.push(SplitClass { class_id, name, sample_ids: chosen });
    }
    Ok(Split { variant: spec.variant, classes })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairAudit {
    pub a: String,
    pub b: String,
    pub shared_ids: Vec<String>,
    pub shared_labels: Vec<(String, String)>,
    pub shared_families: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub pairs: Vec<PairAudit>,
    /// True iff no two splits share a sample id.
    pub pass: bool,
}

/// Pairwise id and label overlaps between named splits. Labels come from
/// `index`; ids absent from it contribute no label.
pub fn verify_disjoint(index: &CorpusIndex, splits: &[(&str, &Split)]) -> AuditReport {
    let lookup: BTreeMap<&str, (&str, &str)> =
        index.entries.iter().map(|e| (e.sample_id.as_str(), (e.family.as_str(), e.type_name.as_str()))).collect();
    let labels = |s: &Split| -> BTreeSet<(String, String)> {
        s.ids().iter().filter_map(|id| lookup.get(id)).map(|(f, t)| (f.to_string(), t.to_string())).collect()
    };
    let mut pairs = Vec::new();
    for i in 0..splits.len() {
        for j in i + 1..splits.len() {
            let (na, a) = splits[i];
            let (nb, b) = splits[j];
            let shared_ids = a.ids().intersection(&b.ids()).map(|s| s.to_string()).collect();
            let (la, lb) = (labels(a), labels(b));
            let shared_labels: Vec<(String, String)> = la.intersection(&lb).cloned().collect();
            let fa: BTreeSet<&String> = la.iter().map(|(f, _)| f).collect();
            let fb: BTreeSet<&String> = lb.iter().map(|(f, _)| f).collect();
            let shared_families = fa.intersection(&fb).map(|f| f.to_string()).collect();
            pairs.push(PairAudit { a: na.into(), b: nb.into(), shared_ids, shared_labels, shared_families });
        }
    }
    let pass = pairs.iter().all(|p| p.shared_ids.is_empty());
    AuditReport { pairs, pass }
}
