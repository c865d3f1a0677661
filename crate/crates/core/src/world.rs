//! Toy multi-domain ontology, entity database, and random user-goal
//! generation. Stands in for a full task-oriented dialogue corpus at desk
//! scale: three domains with hand-authored slot/value lexicons and a
//! seeded random database behind them.

use crate::error::{PpnError, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sentinel value meaning "no preference"; ignored when filtering the database.
pub const DONTCARE: &str = "dontcare";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    /// Ordered (slot, value list) pairs usable as search constraints.
    pub informable: Vec<(String, Vec<String>)>,
    /// Slots whose values the user may request from an offered entity.
    pub requestable: Vec<String>,
    /// Ordered (slot, value list) pairs a booking needs.
    pub bookable: Vec<(String, Vec<String>)>,
    /// Probability mass this domain receives during goal sampling.
    pub weight: f64,
}

impl DomainSpec {
    pub fn informable_values(&self, slot: &str) -> Option<&[String]> {
        self.informable
            .iter()
            .find(|(s, _)| s == slot)
            .map(|(_, v)| v.as_slice())
    }

    pub fn bookable_values(&self, slot: &str) -> Option<&[String]> {
        self.bookable
            .iter()
            .find(|(s, _)| s == slot)
            .map(|(_, v)| v.as_slice())
    }

    pub fn is_informable(&self, slot: &str) -> bool {
        self.informable.iter().any(|(s, _)| s == slot)
    }

    pub fn is_bookable(&self, slot: &str) -> bool {
        self.bookable.iter().any(|(s, _)| s == slot)
    }
}

/// Immutable after construction; shared read-only by every other module.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ontology {
    pub domains: Vec<DomainSpec>,
}

impl Ontology {
    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> Vec<&str> {
        self.domains.iter().map(|d| d.name.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub domain: String,
    /// Covers every informable and requestable slot, plus `name`.
    pub attributes: BTreeMap<String, String>,
}

impl Entity {
    pub fn attribute(&self, slot: &str) -> &str {
        self.attributes.get(slot).map(String::as_str).unwrap_or("")
    }

    pub fn name(&self) -> &str {
        self.attribute("name")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Database {
    pub entities: Vec<Entity>,
}

impl Database {
    pub fn of_domain(&self, domain: &str) -> impl Iterator<Item = &Entity> {
        let domain = domain.to_string();
        self.entities.iter().filter(move |e| e.domain == domain)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldConfig {
    pub entities_per_domain: usize,
    /// One positive weight per domain; normalized at build time.
    pub domain_weights: Vec<f64>,
    /// Probability that a goal domain carries fallback (fail-info) constraints.
    pub fail_info_prob: f64,
    /// Per-slot inclusion probability for info constraints and requests.
    pub slot_inclusion_prob: f64,
    /// Probability a bookable domain's goal includes a booking.
    pub book_prob: f64,
    /// Upper bound on info constraints per goal domain.
    pub max_info_slots: usize,
    /// Upper bound on requested slots per goal domain.
    pub max_requests: usize,
    /// Bounds on the number of goal domains per session.
    pub min_domains: usize,
    pub max_domains: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            entities_per_domain: 25,
            domain_weights: vec![0.45, 0.35, 0.20],
            fail_info_prob: 0.2,
            slot_inclusion_prob: 0.6,
            book_prob: 0.5,
            max_info_slots: 3,
            max_requests: 2,
            min_domains: 1,
            max_domains: 3,
        }
    }
}

/// Per-domain part of a user goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainGoal {
    pub domain: String,
    /// Primary search constraints, tried first.
    pub info: Vec<(String, String)>,
    /// Fallback constraints; non-empty iff the primary ones match nothing.
    pub fail_info: Vec<(String, String)>,
    pub requests: Vec<String>,
    pub book: Vec<(String, String)>,
}

impl DomainGoal {
    /// Constraints the user is currently pursuing.
    pub fn active_constraints(&self, fallback_triggered: bool) -> &[(String, String)] {
        if fallback_triggered && !self.fail_info.is_empty() {
            &self.fail_info
        } else {
            &self.info
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserGoal {
    pub domains: Vec<DomainGoal>,
}

impl UserGoal {
    pub fn domain_goal(&self, domain: &str) -> Option<&DomainGoal> {
        self.domains.iter().find(|g| g.domain == domain)
    }
}

const NAME_WORDS: &[&str] = &[
    "golden", "silver", "crimson", "ivory", "amber", "cobalt", "jade", "ruby", "topaz", "onyx",
    "willow", "cedar", "maple", "aspen", "birch", "rowan", "hazel", "alder", "laurel", "juniper",
    "harbor", "meadow", "summit", "valley", "garden", "corner", "bridge", "lantern", "anchor",
    "compass",
];

const STREET_WORDS: &[&str] = &[
    "mill", "king", "queen", "bridge", "station", "market", "church", "castle", "river", "park",
];

/// The fixed three-domain ontology skeleton; only the frequency weights come
/// from the config.
fn base_domains() -> Vec<DomainSpec> {
    let days = ["monday", "tuesday", "wednesday", "thursday", "friday"];
    let people = ["one person", "two people", "three people", "four people"];
    vec![
        DomainSpec {
            name: "hotel".into(),
            informable: vec![
                (
                    "pricerange".into(),
                    vec!["cheap".into(), "moderate".into(), "expensive".into()],
                ),
                (
                    "area".into(),
                    vec!["north".into(), "south".into(), "east".into(), "west".into()],
                ),
                (
                    "stars".into(),
                    vec!["two stars".into(), "three stars".into(), "four stars".into()],
                ),
                (
                    "parking".into(),
                    vec!["free parking".into(), "no parking".into()],
                ),
            ],
            requestable: vec!["phone".into(), "address".into(), "postcode".into()],
            bookable: vec![
                ("day".into(), days.iter().map(|s| s.to_string()).collect()),
                (
                    "people".into(),
                    people.iter().map(|s| s.to_string()).collect(),
                ),
            ],
            weight: 0.0,
        },
        DomainSpec {
            name: "restaurant".into(),
            informable: vec![
                (
                    "food".into(),
                    vec![
                        "italian".into(),
                        "chinese".into(),
                        "indian".into(),
                        "british".into(),
                    ],
                ),
                (
                    "pricerange".into(),
                    vec!["cheap".into(), "moderate".into(), "expensive".into()],
                ),
                (
                    "area".into(),
                    vec!["north".into(), "south".into(), "east".into(), "west".into()],
                ),
            ],
            requestable: vec!["phone".into(), "address".into(), "postcode".into()],
            bookable: vec![
                ("day".into(), days.iter().map(|s| s.to_string()).collect()),
                (
                    "people".into(),
                    people.iter().map(|s| s.to_string()).collect(),
                ),
                (
                    "time".into(),
                    vec!["lunch time".into(), "dinner time".into()],
                ),
            ],
            weight: 0.0,
        },
        DomainSpec {
            name: "attraction".into(),
            informable: vec![
                (
                    "type".into(),
                    vec![
                        "museum".into(),
                        "park".into(),
                        "theatre".into(),
                        "cinema".into(),
                    ],
                ),
                (
                    "area".into(),
                    vec!["north".into(), "south".into(), "east".into(), "west".into()],
                ),
                (
                    "pricerange".into(),
                    vec!["cheap".into(), "moderate".into(), "expensive".into()],
                ),
            ],
            requestable: vec!["phone".into(), "address".into(), "fee".into()],
            bookable: vec![],
            weight: 0.0,
        },
    ]
}

/// Build the deterministic ontology and database for a seed.
pub fn build_world(seed: u64, config: &WorldConfig) -> Result<(Ontology, Database)> {
    if config.entities_per_domain == 0 {
        return Err(PpnError::Config("entities_per_domain must be > 0".into()));
    }
    let mut domains = base_domains();
    if config.domain_weights.len() != domains.len() {
        return Err(PpnError::Config(format!(
            "expected {} domain weights, got {}",
            domains.len(),
            config.domain_weights.len()
        )));
    }
    let total: f64 = config.domain_weights.iter().sum();
    if !(total > 0.0) || config.domain_weights.iter().any(|w| *w <= 0.0) {
        return Err(PpnError::Config("domain weights must be positive".into()));
    }
    for (d, w) in domains.iter_mut().zip(&config.domain_weights) {
        d.weight = w / total;
    }
    for d in &domains {
        if d.informable.iter().any(|(_, vs)| vs.is_empty()) {
            return Err(PpnError::Config(format!(
                "domain `{}` has an empty value list",
                d.name
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entities = Vec::new();
    for spec in &domains {
        for k in 0..config.entities_per_domain {
            let word = NAME_WORDS[k % NAME_WORDS.len()];
            let name = if k < NAME_WORDS.len() {
                format!("the {} {}", word, spec.name)
            } else {
                format!("the {}{} {}", word, k, spec.name)
            };
            let mut attributes = BTreeMap::new();
            attributes.insert("name".to_string(), name);
            for (slot, values) in &spec.informable {
                let v = &values[rng.gen_range(0..values.len())];
                attributes.insert(slot.clone(), v.clone());
            }
            for slot in &spec.requestable {
                let v = match slot.as_str() {
                    "phone" => format!("01223 {:06}", rng.gen_range(0..1_000_000u32)),
                    "address" => format!(
                        "{} {} street",
                        rng.gen_range(1..99u32),
                        STREET_WORDS[rng.gen_range(0..STREET_WORDS.len())]
                    ),
                    "postcode" => format!(
                        "cb{}{} {}{}{}",
                        rng.gen_range(1..5u32),
                        rng.gen_range(0..10u32),
                        rng.gen_range(0..10u32),
                        (b'a' + rng.gen_range(0..26u8)) as char,
                        (b'a' + rng.gen_range(0..26u8)) as char,
                    ),
                    "fee" => format!("{} pounds", rng.gen_range(1..15u32)),
                    other => format!("{}-{}", other, rng.gen_range(0..1000u32)),
                };
                attributes.insert(slot.clone(), v);
            }
            entities.push(Entity {
                id: format!("{}-{:03}", spec.name, k),
                domain: spec.name.clone(),
                attributes,
            });
        }
        // Make sure every informable value occurs at least once per domain.
        for (si, (slot, values)) in spec.informable.iter().enumerate() {
            for (vi, value) in values.iter().enumerate() {
                let present = entities
                    .iter()
                    .any(|e| e.domain == spec.name && e.attribute(slot) == value);
                if !present {
                    let idx = (si * 7 + vi) % config.entities_per_domain;
                    let id = format!("{}-{:03}", spec.name, idx);
                    let e = entities.iter_mut().find(|e| e.id == id).unwrap();
                    e.attributes.insert(slot.clone(), value.clone());
                }
            }
        }
    }

    Ok((Ontology { domains }, Database { entities }))
}

/// All entities of `domain` matching every constraint, ordered by id.
/// `dontcare` values do not filter.
pub fn query_db<'a>(
    database: &'a Database,
    ontology: &Ontology,
    domain: &str,
    constraints: &[(String, String)],
) -> Result<Vec<&'a Entity>> {
    let spec = ontology.domain(domain).ok_or_else(|| PpnError::UnknownSlot {
        domain: domain.to_string(),
        slot: "<domain>".to_string(),
    })?;
    for (slot, _) in constraints {
        if !spec.is_informable(slot) {
            return Err(PpnError::UnknownSlot {
                domain: domain.to_string(),
                slot: slot.clone(),
            });
        }
    }
    let mut out: Vec<&Entity> = database
        .of_domain(domain)
        .filter(|e| {
            constraints
                .iter()
                .all(|(slot, value)| value == DONTCARE || e.attribute(slot) == value)
        })
        .collect();
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Whether `entity` meets the goal's active constraints for `domain`.
pub fn goal_satisfied(
    entity: &Entity,
    goal: &UserGoal,
    domain: &str,
    fallback_triggered: bool,
) -> bool {
    let Some(dg) = goal.domain_goal(domain) else {
        return false;
    };
    dg.active_constraints(fallback_triggered)
        .iter()
        .all(|(slot, value)| value == DONTCARE || entity.attribute(slot) == value)
}

/// Sample a user goal over 1-3 domains, verified against the database.
pub fn generate_goal(
    rng: &mut ChaCha8Rng,
    ontology: &Ontology,
    database: &Database,
    config: &WorldConfig,
) -> Result<UserGoal> {
    let lo = config.min_domains.clamp(1, ontology.domains.len());
    let hi = config.max_domains.clamp(lo, ontology.domains.len());
    let n_domains = rng.gen_range(lo..=hi);
    let mut chosen: Vec<usize> = Vec::new();
    while chosen.len() < n_domains {
        let r: f64 = rng.gen();
        let mut acc = 0.0;
        let mut pick = ontology.domains.len() - 1;
        for (i, d) in ontology.domains.iter().enumerate() {
            acc += d.weight;
            if r < acc {
                pick = i;
                break;
            }
        }
        if !chosen.contains(&pick) {
            chosen.push(pick);
        }
    }

    let mut domains = Vec::new();
    for &di in &chosen {
        let spec = &ontology.domains[di];
        let dg = sample_domain_goal(rng, spec, ontology, database, config)?;
        domains.push(dg);
    }
    Ok(UserGoal { domains })
}

fn sample_domain_goal(
    rng: &mut ChaCha8Rng,
    spec: &DomainSpec,
    ontology: &Ontology,
    database: &Database,
    config: &WorldConfig,
) -> Result<DomainGoal> {
    let want_fail_info = rng.gen::<f64>() < config.fail_info_prob;

    let mut info = Vec::new();
    let mut fail_info = Vec::new();
    let mut ok = false;
    for _ in 0..100 {
        info = sample_constraints(rng, spec, config);
        let matches = query_db(database, ontology, &spec.name, &info)?.len();
        if want_fail_info && info.len() >= 2 {
            if matches == 0 {
                // Fallback: relax one constrained slot to a value with hits.
                if let Some(fb) = find_fallback(rng, spec, ontology, database, &info)? {
                    fail_info = fb;
                    ok = true;
                    break;
                }
            }
        } else if matches >= 1 {
            ok = true;
            break;
        }
    }
    if !ok {
        // Fail-info combinations may not exist for this domain; settle for a
        // satisfiable primary goal.
        for _ in 0..100 {
            info = sample_constraints(rng, spec, config);
            if !query_db(database, ontology, &spec.name, &info)?.is_empty() {
                fail_info.clear();
                ok = true;
                break;
            }
        }
    }
    if !ok {
        return Err(PpnError::GoalGeneration { attempts: 200 });
    }

    let mut requests: Vec<String> = spec
        .requestable
        .iter()
        .filter(|_| rng.gen::<f64>() < config.slot_inclusion_prob)
        .cloned()
        .collect();
    requests.truncate(config.max_requests);

    let mut book = Vec::new();
    if !spec.bookable.is_empty() && rng.gen::<f64>() < config.book_prob {
        for (slot, values) in &spec.bookable {
            book.push((slot.clone(), values[rng.gen_range(0..values.len())].clone()));
        }
    }

    Ok(DomainGoal {
        domain: spec.name.clone(),
        info,
        fail_info,
        requests,
        book,
    })
}

fn sample_constraints(
    rng: &mut ChaCha8Rng,
    spec: &DomainSpec,
    config: &WorldConfig,
) -> Vec<(String, String)> {
    let mut picked: Vec<(String, String)> = Vec::new();
    for (slot, values) in &spec.informable {
        if rng.gen::<f64>() < config.slot_inclusion_prob {
            picked.push((slot.clone(), values[rng.gen_range(0..values.len())].clone()));
        }
    }
    if picked.is_empty() {
        let (slot, values) = &spec.informable[rng.gen_range(0..spec.informable.len())];
        picked.push((slot.clone(), values[rng.gen_range(0..values.len())].clone()));
    }
    while picked.len() > config.max_info_slots {
        let drop = rng.gen_range(0..picked.len());
        picked.remove(drop);
    }
    picked
}

fn find_fallback(
    rng: &mut ChaCha8Rng,
    spec: &DomainSpec,
    ontology: &Ontology,
    database: &Database,
    info: &[(String, String)],
) -> Result<Option<Vec<(String, String)>>> {
    let mut order: Vec<usize> = (0..info.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    for &ci in &order {
        let (slot, current) = &info[ci];
        let values = spec.informable_values(slot).unwrap_or(&[]);
        for value in values {
            if value == current {
                continue;
            }
            let mut candidate = info.to_vec();
            candidate[ci].1 = value.clone();
            if !query_db(database, ontology, &spec.name, &candidate)?.is_empty() {
                return Ok(Some(candidate));
            }
        }
    }
    Ok(None)
}
