//! Fixed output vocabularies for each pipeline position and the 0/1 vectors
//! defined over them. Label order is fixed at construction and recorded in
//! the run manifest; saved weights are only loadable against a matching
//! manifest hash.

use crate::acts::{DialogueAct, Intent, GENERAL, NO_SLOT};
use crate::world::Ontology;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VocabSide {
    User,
    System,
    Belief,
}

/// One vocabulary entry: an (intent, domain, slot) triple for DA
/// vocabularies, or a (domain, slot) pair for the belief vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Label {
    pub intent: Option<Intent>,
    pub domain: String,
    pub slot: String,
}

impl Label {
    pub fn triple(intent: Intent, domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Label {
            intent: Some(intent),
            domain: domain.into(),
            slot: slot.into(),
        }
    }

    pub fn pair(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Label {
            intent: None,
            domain: domain.into(),
            slot: slot.into(),
        }
    }

    pub fn key(&self) -> String {
        match self.intent {
            Some(i) => format!("{}/{}/{}", i, self.domain, self.slot),
            None => format!("{}/{}", self.domain, self.slot),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    pub side: VocabSide,
    pub labels: Vec<Label>,
    #[serde(skip)]
    index: HashMap<Label, usize>,
}

impl Vocabulary {
    fn new(side: VocabSide, labels: Vec<Label>) -> Self {
        let index = labels
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        Vocabulary { side, labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        if self.index.is_empty() && !self.labels.is_empty() {
            // Deserialized vocabulary; fall back to a linear scan.
            return self.labels.iter().position(|l| l == label);
        }
        self.index.get(label).copied()
    }

    pub fn index_of_act(&self, act: &DialogueAct) -> Option<usize> {
        self.index_of(&Label::triple(act.intent, act.domain.clone(), act.slot.clone()))
    }

    /// Rebuild the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .labels
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
    }
}

/// Fixed-length vector over a vocabulary; entries are 0 or 1 only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiBinaryVector {
    bits: Vec<u8>,
}

impl MultiBinaryVector {
    pub fn zeros(len: usize) -> Self {
        MultiBinaryVector { bits: vec![0; len] }
    }

    pub fn from_bits(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|b| *b <= 1));
        MultiBinaryVector { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i] == 1
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.bits[i] = on as u8;
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == 1)
            .map(|(i, _)| i)
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|b| *b as f64).collect()
    }
}

/// Ordered user-side DA vocabulary.
pub fn user_vocabulary(ontology: &Ontology) -> Vocabulary {
    let mut labels = Vec::new();
    for spec in &ontology.domains {
        for (slot, _) in spec.informable.iter().chain(spec.bookable.iter()) {
            labels.push(Label::triple(Intent::Inform, &spec.name, slot.clone()));
        }
        for slot in &spec.requestable {
            labels.push(Label::triple(Intent::Request, &spec.name, slot.clone()));
        }
    }
    labels.push(Label::triple(Intent::Bye, GENERAL, NO_SLOT));
    labels.push(Label::triple(Intent::Greet, GENERAL, NO_SLOT));
    Vocabulary::new(VocabSide::User, labels)
}

/// Ordered system-side DA vocabulary.
pub fn system_vocabulary(ontology: &Ontology) -> Vocabulary {
    let mut labels = Vec::new();
    for spec in &ontology.domains {
        for slot in &spec.requestable {
            labels.push(Label::triple(Intent::Inform, &spec.name, slot.clone()));
        }
        for (slot, _) in spec.informable.iter().chain(spec.bookable.iter()) {
            labels.push(Label::triple(Intent::Request, &spec.name, slot.clone()));
        }
        labels.push(Label::triple(Intent::Offer, &spec.name, "name"));
        labels.push(Label::triple(Intent::Nooffer, &spec.name, NO_SLOT));
        if !spec.bookable.is_empty() {
            labels.push(Label::triple(Intent::Book, &spec.name, "ref"));
        }
    }
    labels.push(Label::triple(Intent::Reqmore, GENERAL, NO_SLOT));
    labels.push(Label::triple(Intent::Bye, GENERAL, NO_SLOT));
    labels.push(Label::triple(Intent::Greet, GENERAL, NO_SLOT));
    Vocabulary::new(VocabSide::System, labels)
}

/// Ordered belief-slot vocabulary: one (domain, slot) pair per informable or
/// bookable slot.
pub fn belief_vocabulary(ontology: &Ontology) -> Vocabulary {
    let mut labels = Vec::new();
    for spec in &ontology.domains {
        for (slot, _) in spec.informable.iter().chain(spec.bookable.iter()) {
            labels.push(Label::pair(&spec.name, slot.clone()));
        }
    }
    Vocabulary::new(VocabSide::Belief, labels)
}

/// Dimension table for the whole run: every vocabulary, every module state
/// length, and the derived PPN input sizes, hash-stamped.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub user_vocab: Vocabulary,
    pub system_vocab: Vocabulary,
    pub belief_vocab: Vocabulary,
    /// state length per module in pipeline order (NLU, DST, Policy, NLG).
    pub state_dims: [usize; 4],
    pub s_all_dim: usize,
    pub hash: String,
}

impl Manifest {
    pub fn build(ontology: &Ontology) -> Self {
        let user_vocab = user_vocabulary(ontology);
        let system_vocab = system_vocabulary(ontology);
        let belief_vocab = belief_vocabulary(ontology);
        // NLU state: per-entry confidence over the user vocabulary.
        // DST state: belief occupancy + per-domain db count + last user DA
        //            indicators + previous system DA indicators.
        // Policy state: per-entry confidence over the system vocabulary.
        let s_nlu = user_vocab.len();
        let s_dst =
            belief_vocab.len() + ontology.domains.len() + user_vocab.len() + system_vocab.len();
        let s_policy = system_vocab.len();
        let state_dims = [s_nlu, s_dst, s_policy, 0];
        let s_all_dim = state_dims.iter().sum();
        let mut m = Manifest {
            user_vocab,
            system_vocab,
            belief_vocab,
            state_dims,
            s_all_dim,
            hash: String::new(),
        };
        m.hash = m.compute_hash();
        m
    }

    pub fn compute_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in [&self.user_vocab, &self.system_vocab, &self.belief_vocab] {
            for l in &v.labels {
                hasher.update(l.key());
                hasher.update([0u8]);
            }
            hasher.update([1u8]);
        }
        for d in self.state_dims {
            hasher.update(d.to_le_bytes());
        }
        format!("{:x}", hasher.finalize())
    }

    /// Vocabulary at a PPN position.
    pub fn vocab_for(&self, position: PpnPosition) -> &Vocabulary {
        match position {
            PpnPosition::Nlu => &self.user_vocab,
            PpnPosition::Dst => &self.belief_vocab,
            PpnPosition::Policy => &self.system_vocab,
        }
    }

    /// MLP input size at a PPN position: |v| + |s_All|.
    pub fn input_dim(&self, position: PpnPosition) -> usize {
        self.vocab_for(position).len() + self.s_all_dim
    }
}

/// Where a PPN sits in the pipeline (NLG is never post-processed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PpnPosition {
    Nlu,
    Dst,
    Policy,
}

impl PpnPosition {
    pub const ALL: [PpnPosition; 3] = [PpnPosition::Nlu, PpnPosition::Dst, PpnPosition::Policy];

    /// Index in pipeline module order (NLU=0, DST=1, Policy=2).
    pub fn module_index(self) -> usize {
        match self {
            PpnPosition::Nlu => 0,
            PpnPosition::Dst => 1,
            PpnPosition::Policy => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PpnPosition::Nlu => "nlu",
            PpnPosition::Dst => "dst",
            PpnPosition::Policy => "policy",
        }
    }
}

impl std::fmt::Display for PpnPosition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}
