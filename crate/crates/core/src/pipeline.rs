//! The four pipeline modules as deterministic rule systems with configurable
//! DA-level noise channels. Each module returns its payload together with a
//! fixed-length state vector (values in [0, 1]).

use crate::acts::{DialogueAct, Intent, GENERAL, NO_SLOT};
use crate::state::DialogueStateRecord;
use crate::templates;
use crate::vocab::Manifest;
use crate::world::{query_db, Database, Ontology};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// DA-level corruption applied inside NLU and Policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Per-DA deletion probability.
    pub p_drop: f64,
    /// Per-DA probability of substituting a same-domain slot.
    pub p_confuse: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            p_drop: 0.0,
            p_confuse: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Das(Vec<DialogueAct>),
    Belief(BTreeMap<(String, String), String>),
    Utterance(String),
}

impl Payload {
    pub fn das(&self) -> &[DialogueAct] {
        match self {
            Payload::Das(v) => v,
            _ => &[],
        }
    }
}

/// A module's output `o` and its state vector `s`.
#[derive(Debug, Clone)]
pub struct ModuleOutput {
    pub payload: Payload,
    pub state_vec: Vec<f64>,
}

/// How many db matches still count as "too many", prompting the policy to
/// request another constraint.
pub const REQUEST_THRESHOLD: usize = 18;

/// Parse a user utterance into DAs, apply the noise channel, and report
/// per-vocabulary-entry confidences as the module state.
pub fn nlu_process(
    utterance: &str,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
    ontology: &Ontology,
    manifest: &Manifest,
) -> ModuleOutput {
    let true_das = templates::parse_user_utterance(utterance, ontology);
    // The state reports the module's internal recognition scores, which
    // precede the emission noise: every recognized act appears here even if
    // it gets dropped from the output.
    let mut state = vec![0.0; manifest.user_vocab.len()];
    for act in &true_das {
        if let Some(i) = manifest.user_vocab.index_of_act(act) {
            state[i] = 1.0 - noise.p_drop;
        }
    }
    let mut das = Vec::new();
    for act in true_das {
        if noise.p_drop > 0.0 && rng.gen::<f64>() < noise.p_drop {
            continue;
        }
        if noise.p_confuse > 0.0 && rng.gen::<f64>() < noise.p_confuse {
            if let Some(act2) = confuse_slot(&act, ontology, rng) {
                if let Some(i) = manifest.user_vocab.index_of_act(&act2) {
                    state[i] = 0.5;
                }
                das.push(act2);
                continue;
            }
        }
        das.push(act);
    }
    ModuleOutput {
        payload: Payload::Das(das),
        state_vec: state,
    }
}

/// Replace the act's slot with a different slot of the same domain and side.
fn confuse_slot(
    act: &DialogueAct,
    ontology: &Ontology,
    rng: &mut ChaCha8Rng,
) -> Option<DialogueAct> {
    let spec = ontology.domain(&act.domain)?;
    let slots: Vec<&String> = match act.intent {
        Intent::Inform => spec
            .informable
            .iter()
            .chain(spec.bookable.iter())
            .map(|(s, _)| s)
            .filter(|s| **s != act.slot)
            .collect(),
        Intent::Request => spec
            .requestable
            .iter()
            .filter(|s| **s != act.slot)
            .collect(),
        _ => return None,
    };
    if slots.is_empty() {
        return None;
    }
    let slot = slots[rng.gen_range(0..slots.len())].clone();
    Some(DialogueAct::new(act.intent, &act.domain, slot, &act.value))
}

/// Rule DST: overwrite belief with informed values (last-write-wins), refresh
/// db counts, and expose the vectorized dialogue state.
pub fn dst_update(
    record: &mut DialogueStateRecord,
    user_das: &[DialogueAct],
    ontology: &Ontology,
    database: &Database,
    manifest: &Manifest,
    entities_per_domain: usize,
) -> ModuleOutput {
    for act in user_das {
        if act.intent != Intent::Inform || act.domain == GENERAL || act.value.is_empty() {
            continue;
        }
        let known = ontology
            .domain(&act.domain)
            .map(|spec| spec.is_informable(&act.slot) || spec.is_bookable(&act.slot))
            .unwrap_or(false);
        if known {
            record
                .belief
                .insert((act.domain.clone(), act.slot.clone()), act.value.clone());
        } else {
            record.ignored_da_count += 1;
        }
    }
    if let Some(d) = DialogueStateRecord::domain_of(user_das) {
        record.active_domain = Some(d);
    }
    record.last_user_das = user_das.to_vec();
    refresh_db_counts(record, ontology, database);
    ModuleOutput {
        payload: Payload::Belief(record.belief.clone()),
        state_vec: record.to_state_vec(manifest, entities_per_domain),
    }
}

/// Re-run the database query for every domain against the current belief.
pub fn refresh_db_counts(
    record: &mut DialogueStateRecord,
    ontology: &Ontology,
    database: &Database,
) {
    for spec in &ontology.domains {
        let constraints = record.constraints(ontology, &spec.name);
        let count = query_db(database, ontology, &spec.name, &constraints)
            .map(|v| v.len())
            .unwrap_or(0);
        record.db_result_count.insert(spec.name.clone(), count);
    }
}

/// Rule policy: answer pending requests, offer / nooffer, drive bookings,
/// request missing constraints; then apply the noise channel.
pub fn policy_decide(
    record: &DialogueStateRecord,
    noise: &NoiseConfig,
    rng: &mut ChaCha8Rng,
    ontology: &Ontology,
    database: &Database,
    manifest: &Manifest,
) -> ModuleOutput {
    let mut das = decide_rules(record, ontology, database);
    // State reflects the decision before the emission noise channel.
    let mut state = vec![0.0; manifest.system_vocab.len()];
    for act in &das {
        if let Some(i) = manifest.system_vocab.index_of_act(act) {
            state[i] = 1.0 - noise.p_drop;
        }
    }
    if noise.p_drop > 0.0 {
        das.retain(|_| rng.gen::<f64>() >= noise.p_drop);
    }
    ModuleOutput {
        payload: Payload::Das(das),
        state_vec: state,
    }
}

fn decide_rules(
    record: &DialogueStateRecord,
    ontology: &Ontology,
    database: &Database,
) -> Vec<DialogueAct> {
    let last = &record.last_user_das;
    if last.iter().any(|a| a.intent == Intent::Bye) {
        return vec![DialogueAct::valueless(Intent::Bye, GENERAL, NO_SLOT)];
    }
    if !last.is_empty() && last.iter().all(|a| a.intent == Intent::Greet) {
        return vec![DialogueAct::valueless(Intent::Greet, GENERAL, NO_SLOT)];
    }
    let Some(domain) = record.active_domain.clone() else {
        return vec![DialogueAct::valueless(Intent::Reqmore, GENERAL, NO_SLOT)];
    };
    let Some(spec) = ontology.domain(&domain) else {
        return vec![DialogueAct::valueless(Intent::Reqmore, GENERAL, NO_SLOT)];
    };

    let mut das = Vec::new();
    let constraints = record.constraints(ontology, &domain);
    let count = *record.db_result_count.get(&domain).unwrap_or(&0);
    let reference = record.reference_entity(ontology, database, &domain);

    if !constraints.is_empty() && count == 0 {
        das.push(DialogueAct::valueless(Intent::Nooffer, &domain, NO_SLOT));
        return das;
    }

    // Answer this turn's requests from the reference entity.
    for act in last {
        if act.intent == Intent::Request && act.domain == domain {
            if let Some(entity) = reference {
                das.push(DialogueAct::new(
                    Intent::Inform,
                    &domain,
                    act.slot.clone(),
                    entity.attribute(&act.slot),
                ));
            }
        }
    }

    // Offer the first match unless a still-valid offer stands. New
    // constraints this turn always get the offer restated so the user knows
    // which entity they now apply to.
    if !constraints.is_empty() && count >= 1 {
        let constraints_updated = last.iter().any(|a| {
            a.intent == Intent::Inform
                && a.domain == domain
                && !a.value.is_empty()
                && spec.is_informable(&a.slot)
        });
        let offer_valid = !constraints_updated
            && record
                .offered_name
                .get(&domain)
            .and_then(|name| database.of_domain(&domain).find(|e| e.name() == name))
            .map(|e| {
                constraints.iter().all(|(slot, value)| {
                    value == crate::world::DONTCARE || e.attribute(slot) == value
                })
            })
            .unwrap_or(false);
        if !offer_valid {
            if let Ok(matches) = query_db(database, ontology, &domain, &constraints) {
                if let Some(first) = matches.first() {
                    das.push(DialogueAct::new(
                        Intent::Offer,
                        &domain,
                        "name",
                        first.name(),
                    ));
                }
            }
        }
    }

    // Booking: confirm when complete, otherwise chase missing book slots.
    if !spec.bookable.is_empty() && !record.booked.contains(&domain) {
        let (filled, missing) = record.book_state(ontology, &domain);
        if !filled.is_empty() {
            if missing.is_empty() {
                das.push(DialogueAct::new(
                    Intent::Book,
                    &domain,
                    "ref",
                    format!("{}-booking-{:02}", domain, record.turn),
                ));
            } else {
                das.push(DialogueAct::valueless(Intent::Request, &domain, missing[0].clone()));
            }
        }
    }

    // Too many matches: ask for one more constraint.
    if count > REQUEST_THRESHOLD {
        if let Some((slot, _)) = spec
            .informable
            .iter()
            .find(|(slot, _)| !record.belief.contains_key(&(domain.clone(), slot.clone())))
        {
            das.push(DialogueAct::valueless(Intent::Request, &domain, slot.clone()));
        }
    }

    if das.is_empty() {
        das.push(DialogueAct::valueless(Intent::Reqmore, GENERAL, NO_SLOT));
    }
    das
}

/// Template NLG. The state vector is empty by construction.
pub fn nlg_realize(system_das: &[DialogueAct]) -> ModuleOutput {
    ModuleOutput {
        payload: Payload::Utterance(templates::render_system_turn(system_das)),
        state_vec: Vec::new(),
    }
}
