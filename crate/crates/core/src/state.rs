//! Session-local dialogue state maintained by the rule DST: belief state,
//! database search results, the DAs most recently exchanged, and the
//! bookkeeping the rule policy needs (offers made, bookings completed).

use crate::acts::{DialogueAct, Intent, GENERAL};
use crate::vocab::Manifest;
use crate::world::{query_db, Database, Entity, Ontology};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DialogueStateRecord {
    /// (domain, slot) -> value for every informable/bookable slot; a missing
    /// key means the slot is unfilled.
    pub belief: BTreeMap<(String, String), String>,
    pub db_result_count: BTreeMap<String, usize>,
    pub last_user_das: Vec<DialogueAct>,
    pub prev_system_das: Vec<DialogueAct>,
    /// Set for a domain once the system has answered it with nooffer.
    pub fallback_triggered: BTreeSet<String>,
    pub turn: usize,
    /// Domain the user talked about most recently.
    pub active_domain: Option<String>,
    /// Name of the entity actually offered (post-noise, post-PPN) per domain.
    pub offered_name: BTreeMap<String, String>,
    /// Domains with a completed booking.
    pub booked: BTreeSet<String>,
    /// User DAs with an unknown (domain, slot), ignored by the DST.
    pub ignored_da_count: usize,
}

impl DialogueStateRecord {
    pub fn new(ontology: &Ontology) -> Self {
        let db_result_count = ontology
            .domains
            .iter()
            .map(|d| (d.name.clone(), 0))
            .collect();
        DialogueStateRecord {
            belief: BTreeMap::new(),
            db_result_count,
            last_user_das: Vec::new(),
            prev_system_das: Vec::new(),
            fallback_triggered: BTreeSet::new(),
            turn: 0,
            active_domain: None,
            offered_name: BTreeMap::new(),
            booked: BTreeSet::new(),
            ignored_da_count: 0,
        }
    }

    /// Informable search constraints currently held for `domain`.
    pub fn constraints(&self, ontology: &Ontology, domain: &str) -> Vec<(String, String)> {
        let Some(spec) = ontology.domain(domain) else {
            return Vec::new();
        };
        spec.informable
            .iter()
            .filter_map(|(slot, _)| {
                self.belief
                    .get(&(domain.to_string(), slot.clone()))
                    .map(|v| (slot.clone(), v.clone()))
            })
            .collect()
    }

    /// Book-slot values currently held for `domain`, plus missing book slots.
    pub fn book_state(&self, ontology: &Ontology, domain: &str) -> (Vec<(String, String)>, Vec<String>) {
        let Some(spec) = ontology.domain(domain) else {
            return (Vec::new(), Vec::new());
        };
        let mut filled = Vec::new();
        let mut missing = Vec::new();
        for (slot, _) in &spec.bookable {
            match self.belief.get(&(domain.to_string(), slot.clone())) {
                Some(v) => filled.push((slot.clone(), v.clone())),
                None => missing.push(slot.clone()),
            }
        }
        (filled, missing)
    }

    /// The entity the system should describe for `domain`: the recorded offer
    /// if it still exists, otherwise the first match of the current
    /// constraints.
    pub fn reference_entity<'a>(
        &self,
        ontology: &Ontology,
        database: &'a Database,
        domain: &str,
    ) -> Option<&'a Entity> {
        if let Some(name) = self.offered_name.get(domain) {
            if let Some(e) = database.of_domain(domain).find(|e| e.name() == name) {
                return Some(e);
            }
        }
        let constraints = self.constraints(ontology, domain);
        query_db(database, ontology, domain, &constraints)
            .ok()
            .and_then(|v| v.into_iter().next())
    }

    /// Record the system DAs that were actually uttered, closing the turn.
    pub fn observe_system(&mut self, das: &[DialogueAct]) {
        for act in das {
            match act.intent {
                Intent::Offer => {
                    self.offered_name
                        .insert(act.domain.clone(), act.value.clone());
                }
                Intent::Book => {
                    self.booked.insert(act.domain.clone());
                }
                Intent::Nooffer => {
                    self.fallback_triggered.insert(act.domain.clone());
                }
                _ => {}
            }
        }
        self.prev_system_das = das.to_vec();
        self.turn += 1;
    }

    /// Vectorize the full dialogue state: belief occupancy, normalized db
    /// counts, last user DA indicators, previous system DA indicators.
    pub fn to_state_vec(&self, manifest: &Manifest, entities_per_domain: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(manifest.state_dims[1]);
        for label in &manifest.belief_vocab.labels {
            let key = (label.domain.clone(), label.slot.clone());
            v.push(if self.belief.contains_key(&key) { 1.0 } else { 0.0 });
        }
        for (_, count) in &self.db_result_count {
            let norm = *count as f64 / entities_per_domain.max(1) as f64;
            v.push(norm.min(1.0));
        }
        let mut user_bits = vec![0.0; manifest.user_vocab.len()];
        for act in &self.last_user_das {
            if let Some(i) = manifest.user_vocab.index_of_act(act) {
                user_bits[i] = 1.0;
            }
        }
        v.extend(user_bits);
        let mut sys_bits = vec![0.0; manifest.system_vocab.len()];
        for act in &self.prev_system_das {
            if let Some(i) = manifest.system_vocab.index_of_act(act) {
                sys_bits[i] = 1.0;
            }
        }
        v.extend(sys_bits);
        debug_assert_eq!(v.len(), manifest.state_dims[1]);
        v
    }

    /// Domain of the first non-general act, if any.
    pub fn domain_of(das: &[DialogueAct]) -> Option<String> {
        das.iter()
            .find(|a| a.domain != GENERAL)
            .map(|a| a.domain.clone())
    }
}
