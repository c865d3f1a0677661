//! Rule-based converters between module outputs and their fixed-vocabulary
//! multi-binary vectors, plus the concatenated all-module state the MLPs
//! consume. Values cannot be encoded in the bit vector, so the out-adapter
//! copies them from the original output and otherwise resolves them from the
//! dialogue context (or leaves them empty in strict mode).

use crate::acts::{DialogueAct, Intent};
use crate::error::{PpnError, Result};
use crate::pipeline::Payload;
use crate::state::DialogueStateRecord;
use crate::vocab::{Label, Manifest, MultiBinaryVector, PpnPosition, VocabSide, Vocabulary};
use crate::world::{Database, Ontology};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Behavior toggles for the out-adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// When false, values for PPN-added acts are always left empty instead of
    /// resolved from context.
    pub resolve_values: bool,
    /// Whether a 0-bit may clear a previously-filled belief slot.
    pub dst_clear: bool,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        AdapterConfig {
            resolve_values: true,
            dst_clear: true,
        }
    }
}

/// Convert a module output into its multi-binary vector (set semantics).
pub fn in_adapter(payload: &Payload, vocab: &Vocabulary) -> Result<MultiBinaryVector> {
    let mut v = MultiBinaryVector::zeros(vocab.len());
    match (payload, vocab.side) {
        (Payload::Das(das), VocabSide::User | VocabSide::System) => {
            for act in das {
                let i = vocab
                    .index_of_act(act)
                    .ok_or_else(|| PpnError::OutOfVocabulary(act.to_string()))?;
                v.set(i, true);
            }
        }
        (Payload::Belief(belief), VocabSide::Belief) => {
            for (domain, slot) in belief.keys() {
                let label = Label::pair(domain.clone(), slot.clone());
                let i = vocab
                    .index_of(&label)
                    .ok_or_else(|| PpnError::OutOfVocabulary(label.key()))?;
                v.set(i, true);
            }
        }
        _ => {
            return Err(PpnError::Dimension(
                "payload kind does not match vocabulary side".into(),
            ))
        }
    }
    Ok(v)
}

/// Restore a post-processed vector into the module's label representation.
/// `utterance` is the raw user turn the module just consumed, if any; it lets
/// a restored user-side inform recover its value from the words actually
/// said instead of guessing.
pub fn out_adapter(
    v_prime: &MultiBinaryVector,
    original: &Payload,
    utterance: Option<&str>,
    record: &DialogueStateRecord,
    vocab: &Vocabulary,
    ontology: &Ontology,
    database: &Database,
    config: &AdapterConfig,
) -> Result<Payload> {
    if v_prime.len() != vocab.len() {
        return Err(PpnError::Dimension(format!(
            "vector length {} vs vocabulary {}",
            v_prime.len(),
            vocab.len()
        )));
    }
    match vocab.side {
        VocabSide::User | VocabSide::System => {
            let orig = original.das();
            let mut out = Vec::new();
            for i in v_prime.ones() {
                let label = &vocab.labels[i];
                let intent = label.intent.expect("DA vocabulary label");
                if let Some(act) = orig
                    .iter()
                    .find(|a| a.intent == intent && a.domain == label.domain && a.slot == label.slot)
                {
                    out.push(act.clone());
                    continue;
                }
                let value = if intent.carries_value() && config.resolve_values {
                    resolve_value(label, intent, vocab.side, utterance, record, ontology, database)
                } else {
                    String::new()
                };
                out.push(DialogueAct::new(intent, &label.domain, &label.slot, value));
            }
            Ok(Payload::Das(out))
        }
        VocabSide::Belief => {
            let orig = match original {
                Payload::Belief(b) => b,
                _ => {
                    return Err(PpnError::Dimension(
                        "belief vocabulary requires a belief payload".into(),
                    ))
                }
            };
            let mut out: BTreeMap<(String, String), String> = BTreeMap::new();
            for (i, label) in vocab.labels.iter().enumerate() {
                let key = (label.domain.clone(), label.slot.clone());
                if v_prime.get(i) {
                    if let Some(v) = orig.get(&key) {
                        out.insert(key, v.clone());
                    } else if config.resolve_values {
                        let v = resolve_value(
                            label,
                            Intent::Inform,
                            vocab.side,
                            utterance,
                            record,
                            ontology,
                            database,
                        );
                        if !v.is_empty() {
                            out.insert(key, v);
                        }
                    }
                } else if !config.dst_clear {
                    if let Some(v) = orig.get(&key) {
                        out.insert(key, v.clone());
                    }
                }
            }
            Ok(Payload::Belief(out))
        }
    }
}

/// Value synthesis for acts the PPN added: the words of the current user
/// utterance first (user side), then the current belief value, then (for
/// system-side acts only) the reference entity's attribute, then empty.
/// User-side acts may only re-assert values the dialogue already knows; a
/// database attribute would be a fabricated user statement.
fn resolve_value(
    label: &Label,
    intent: Intent,
    side: VocabSide,
    utterance: Option<&str>,
    record: &DialogueStateRecord,
    ontology: &Ontology,
    database: &Database,
) -> String {
    if side == VocabSide::User && intent == Intent::Inform {
        // The utterance the NLU just read still contains the value; re-read
        // it rather than trusting stale dialogue state.
        if let Some(u) = utterance {
            if let Some(act) = crate::templates::parse_user_utterance(u, ontology)
                .into_iter()
                .find(|a| {
                    a.intent == Intent::Inform && a.domain == label.domain && a.slot == label.slot
                })
            {
                return act.value;
            }
        }
    }
    if intent == Intent::Book && side == VocabSide::System {
        // No entity attribute backs a booking reference; synthesize the same
        // deterministic reference the rule policy would.
        return format!("{}-booking-{:02}", label.domain, record.turn);
    }
    if intent == Intent::Offer && side == VocabSide::System {
        // The rule policy only offers when it wants a fresh first match under
        // the current constraints; a standing (possibly stale) offer name
        // must not be re-announced here.
        let constraints = record.constraints(ontology, &label.domain);
        if let Ok(matches) = crate::world::query_db(database, ontology, &label.domain, &constraints)
        {
            if let Some(first) = matches.first() {
                return first.name().to_string();
            }
        }
    }
    let key = (label.domain.clone(), label.slot.clone());
    if let Some(v) = record.belief.get(&key) {
        return v.clone();
    }
    if side == VocabSide::System {
        if let Some(entity) = record.reference_entity(ontology, database, &label.domain) {
            let attr = entity.attribute(&label.slot);
            if !attr.is_empty() {
                return attr.to_string();
            }
        }
    }
    String::new()
}

/// One module's slice inside the concatenated state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSlice {
    pub module: String,
    pub offset: usize,
    pub len: usize,
    /// Turn the slice was produced in; None before the module's first run.
    pub turn_of_origin: Option<usize>,
}

/// The concatenation of the latest states of all modules.
#[derive(Debug, Clone, PartialEq)]
pub struct StateConcat {
    pub slices: Vec<StateSlice>,
    pub data: Vec<f64>,
}

pub const MODULE_NAMES: [&str; 4] = ["nlu", "dst", "policy", "nlg"];

/// Holds each module's latest state vector with its turn of origin.
#[derive(Debug, Clone)]
pub struct StateTracker {
    dims: [usize; 4],
    states: [Vec<f64>; 4],
    turns: [Option<usize>; 4],
}

impl StateTracker {
    pub fn new(manifest: &Manifest) -> Self {
        let dims = manifest.state_dims;
        StateTracker {
            dims,
            states: [
                vec![0.0; dims[0]],
                vec![0.0; dims[1]],
                vec![0.0; dims[2]],
                vec![0.0; dims[3]],
            ],
            turns: [None; 4],
        }
    }

    pub fn record(&mut self, module_index: usize, turn: usize, state: Vec<f64>) -> Result<()> {
        if state.len() != self.dims[module_index] {
            return Err(PpnError::StateLengthMismatch {
                module: MODULE_NAMES[module_index].to_string(),
                got: state.len(),
                expected: self.dims[module_index],
            });
        }
        self.states[module_index] = state;
        self.turns[module_index] = Some(turn);
        Ok(())
    }

    /// Build s_All as seen by the PPN at `position` during turn `turn`:
    /// modules up to and including the position contribute their turn-t
    /// state, later modules their turn-(t-1) state, never-run modules zeros.
    pub fn concat(&self, position: PpnPosition, turn: usize) -> Result<StateConcat> {
        let i = position.module_index();
        let mut slices = Vec::with_capacity(4);
        let mut data = Vec::with_capacity(self.dims.iter().sum());
        for (j, state) in self.states.iter().enumerate() {
            let expected_turn = if j <= i { Some(turn) } else { turn.checked_sub(1) };
            let ok = match (self.turns[j], expected_turn) {
                (None, _) => true,
                (Some(got), Some(want)) => got == want,
                (Some(_), None) => false,
            };
            if !ok {
                return Err(PpnError::Dimension(format!(
                    "stale state for module {} at turn {} (have turn {:?})",
                    MODULE_NAMES[j], turn, self.turns[j]
                )));
            }
            slices.push(StateSlice {
                module: MODULE_NAMES[j].to_string(),
                offset: data.len(),
                len: state.len(),
                turn_of_origin: self.turns[j],
            });
            data.extend_from_slice(state);
        }
        Ok(StateConcat { slices, data })
    }

    /// Concatenate whatever states are currently held, without freshness
    /// validation. Used for value bootstrapping after the last turn, when no
    /// module has run in the would-be next turn yet.
    pub fn latest_concat(&self) -> StateConcat {
        let mut slices = Vec::with_capacity(4);
        let mut data = Vec::with_capacity(self.dims.iter().sum());
        for (j, state) in self.states.iter().enumerate() {
            slices.push(StateSlice {
                module: MODULE_NAMES[j].to_string(),
                offset: data.len(),
                len: state.len(),
                turn_of_origin: self.turns[j],
            });
            data.extend_from_slice(state);
        }
        StateConcat { slices, data }
    }

    /// Zero out the slices of all modules except `position`'s own, keeping
    /// the overall length (the "without s_All" ablation input).
    pub fn mask_to_own(concat: &StateConcat, position: PpnPosition) -> Vec<f64> {
        let mut data = vec![0.0; concat.data.len()];
        let own = &concat.slices[position.module_index()];
        data[own.offset..own.offset + own.len]
            .copy_from_slice(&concat.data[own.offset..own.offset + own.len]);
        data
    }
}
