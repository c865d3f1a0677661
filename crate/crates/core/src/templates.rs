//! Template-based surface realization for both sides of the conversation,
//! together with exact inverse parsers.
//!
//! User turns are rendered as space-joined fragments whose value lexicon is
//! unambiguous within a domain, so parsing is a domain-scoped lexicon scan.
//! System turns are rendered one sentence per act, joined by " . ", so
//! parsing is per-sentence template matching.

use crate::acts::{DialogueAct, Intent, GENERAL, NO_SLOT};
use crate::world::{Ontology, DONTCARE};

pub const USER_BYE: &str = "thank you goodbye";
pub const USER_GREET: &str = "hello";
pub const SYSTEM_FALLBACK: &str = "can i help with anything else";

/// Human-readable slot word used inside templates.
pub fn slot_word(slot: &str) -> &str {
    match slot {
        "pricerange" => "price range",
        "area" => "area",
        "stars" => "star rating",
        "parking" => "parking",
        "food" => "food type",
        "type" => "attraction type",
        "day" => "day",
        "people" => "group size",
        "time" => "time",
        "phone" => "phone number",
        "address" => "address",
        "postcode" => "postcode",
        "fee" => "entrance fee",
        other => other,
    }
}

fn inform_fragment(slot: &str, value: &str) -> String {
    match slot {
        "area" => format!("in the {}", value),
        "stars" | "parking" => format!("with {}", value),
        "pricerange" => format!("at a {} price", value),
        "food" => format!("serving {} food", value),
        "type" => format!("of type {}", value),
        "day" | "people" => format!("for {}", value),
        "time" => format!("at {}", value),
        other => format!("with {} {}", slot_word(other), value),
    }
}

/// Render one user turn. All acts must share a domain (or be general acts).
pub fn render_user_turn(das: &[DialogueAct]) -> String {
    if das.iter().any(|a| a.intent == Intent::Bye) {
        return USER_BYE.to_string();
    }
    if das.is_empty() {
        return String::new();
    }
    if das.iter().all(|a| a.intent == Intent::Greet) {
        return USER_GREET.to_string();
    }
    let Some(domain) = das.iter().find(|a| a.domain != GENERAL).map(|a| &a.domain) else {
        return USER_GREET.to_string();
    };

    let informs: Vec<&DialogueAct> = das.iter().filter(|a| a.intent == Intent::Inform).collect();
    let requests: Vec<&DialogueAct> = das.iter().filter(|a| a.intent == Intent::Request).collect();

    let mut fragments: Vec<String> = Vec::new();
    let book_slots = ["day", "people", "time"];
    let all_book = !informs.is_empty()
        && informs
            .iter()
            .all(|a| book_slots.contains(&a.slot.as_str()));

    if all_book {
        let mut lead = format!("i would like to book the {}", domain);
        for act in &informs {
            lead.push(' ');
            lead.push_str(&inform_fragment(&act.slot, &act.value));
        }
        fragments.push(lead);
    } else if !informs.is_empty() {
        let mut rest = informs.clone();
        let first = rest.remove(0);
        if first.value == DONTCARE {
            fragments.push(format!(
                "any {} is fine for the {}",
                slot_word(&first.slot),
                domain
            ));
        } else if first.slot == "pricerange" {
            fragments.push(format!("i want a {} {}", first.value, domain));
        } else {
            fragments.push(format!(
                "i want a {} {}",
                domain,
                inform_fragment(&first.slot, &first.value)
            ));
        }
        for act in rest {
            if act.value == DONTCARE {
                fragments.push(format!(
                    "any {} is fine for the {}",
                    slot_word(&act.slot),
                    domain
                ));
            } else {
                fragments.push(inform_fragment(&act.slot, &act.value));
            }
        }
    }

    for act in &requests {
        fragments.push(format!(
            "what is the {} of the {}",
            slot_word(&act.slot),
            domain
        ));
    }

    if fragments.is_empty() {
        // Only reqmore-like acts; realize as a generic continuation.
        fragments.push(format!("tell me more about the {}", domain));
    }
    fragments.join(" ")
}

/// Exact inverse of `render_user_turn` (up to act order).
/// Unknown text parses to an empty list.
pub fn parse_user_utterance(utterance: &str, ontology: &Ontology) -> Vec<DialogueAct> {
    let u = utterance.trim();
    if u.contains(USER_BYE) {
        return vec![DialogueAct::valueless(Intent::Bye, GENERAL, NO_SLOT)];
    }
    if u == USER_GREET {
        return vec![DialogueAct::valueless(Intent::Greet, GENERAL, NO_SLOT)];
    }
    let Some(spec) = ontology
        .domains
        .iter()
        .filter_map(|d| u.find(&d.name).map(|pos| (pos, d)))
        .min_by_key(|(pos, _)| *pos)
        .map(|(_, d)| d)
    else {
        return Vec::new();
    };

    let mut das = Vec::new();
    let slots = spec.informable.iter().chain(spec.bookable.iter());
    for (slot, values) in slots {
        if u.contains(&format!("any {} is fine", slot_word(slot))) {
            das.push(DialogueAct::new(
                Intent::Inform,
                &spec.name,
                slot.clone(),
                DONTCARE,
            ));
            continue;
        }
        for value in values {
            if u.contains(value.as_str()) {
                das.push(DialogueAct::new(
                    Intent::Inform,
                    &spec.name,
                    slot.clone(),
                    value.clone(),
                ));
                break;
            }
        }
    }
    for slot in &spec.requestable {
        if u.contains(&format!("what is the {} of the {}", slot_word(slot), spec.name)) {
            das.push(DialogueAct::valueless(Intent::Request, &spec.name, slot.clone()));
        }
    }
    das
}

/// The sentence template for one system act; `{}` marks the value hole.
fn system_template(intent: Intent, domain: &str, slot: &str) -> Option<(String, String)> {
    // Returned as (prefix, suffix) around the value; valueless acts have the
    // whole sentence in the prefix and an empty suffix.
    let t = match intent {
        Intent::Inform => (
            format!("the {} of the {} is ", slot_word(slot), domain),
            String::new(),
        ),
        Intent::Request => {
            if domain == "hotel" && slot == "area" {
                (
                    "what area of town would you like the hotel in ?".to_string(),
                    String::new(),
                )
            } else {
                (
                    format!("what {} would you like for the {} ?", slot_word(slot), domain),
                    String::new(),
                )
            }
        }
        Intent::Offer => ("how about ".to_string(), format!(" for your {} ?", domain)),
        Intent::Nooffer => (
            format!("i am sorry there is no such {} in the database", domain),
            String::new(),
        ),
        Intent::Book => (
            format!("your {} booking is complete , reference ", domain),
            String::new(),
        ),
        Intent::Reqmore => ("is there anything else i can help with ?".to_string(), String::new()),
        Intent::Bye => (
            "thank you for using our service goodbye".to_string(),
            String::new(),
        ),
        Intent::Greet => ("hello how can i help you ?".to_string(), String::new()),
    };
    Some(t)
}

/// Render a system turn; one sentence per act, joined by " . ".
pub fn render_system_turn(das: &[DialogueAct]) -> String {
    if das.is_empty() {
        return SYSTEM_FALLBACK.to_string();
    }
    let mut sentences = Vec::new();
    for act in das {
        let Some((prefix, suffix)) = system_template(act.intent, &act.domain, &act.slot) else {
            continue;
        };
        if act.intent.carries_value() {
            sentences.push(format!("{}{}{}", prefix, act.value, suffix));
        } else {
            sentences.push(prefix);
        }
    }
    sentences.join(" . ")
}

/// Exact inverse of `render_system_turn` (the fallback parses to an empty
/// list; unknown sentences are skipped).
pub fn parse_system_utterance(utterance: &str, ontology: &Ontology) -> Vec<DialogueAct> {
    let u = utterance.trim();
    if u == SYSTEM_FALLBACK || u.is_empty() {
        return Vec::new();
    }
    let mut das = Vec::new();
    'sentence: for sentence in u.split(" . ") {
        // General valueless acts first.
        for intent in [Intent::Reqmore, Intent::Bye, Intent::Greet] {
            let (prefix, _) = system_template(intent, GENERAL, NO_SLOT).unwrap();
            if sentence == prefix {
                das.push(DialogueAct::valueless(intent, GENERAL, NO_SLOT));
                continue 'sentence;
            }
        }
        for spec in &ontology.domains {
            let d = &spec.name;
            // nooffer
            let (p, _) = system_template(Intent::Nooffer, d, NO_SLOT).unwrap();
            if sentence == p {
                das.push(DialogueAct::valueless(Intent::Nooffer, d, NO_SLOT));
                continue 'sentence;
            }
            // requests over informable + bookable slots
            for slot in spec
                .informable
                .iter()
                .map(|(s, _)| s)
                .chain(spec.bookable.iter().map(|(s, _)| s))
            {
                let (p, _) = system_template(Intent::Request, d, slot).unwrap();
                if sentence == p {
                    das.push(DialogueAct::valueless(Intent::Request, d, slot.clone()));
                    continue 'sentence;
                }
            }
            // informs of requestable slots
            for slot in &spec.requestable {
                let (p, s) = system_template(Intent::Inform, d, slot).unwrap();
                if sentence.starts_with(&p) && sentence.ends_with(&s) {
                    let value = &sentence[p.len()..sentence.len() - s.len()];
                    das.push(DialogueAct::new(Intent::Inform, d, slot.clone(), value));
                    continue 'sentence;
                }
            }
            // offer
            let (p, s) = system_template(Intent::Offer, d, "name").unwrap();
            if sentence.starts_with(&p) && sentence.ends_with(&s) {
                let value = &sentence[p.len()..sentence.len() - s.len()];
                das.push(DialogueAct::new(Intent::Offer, d, "name", value));
                continue 'sentence;
            }
            // book
            let (p, s) = system_template(Intent::Book, d, "ref").unwrap();
            if sentence.starts_with(&p) && sentence.ends_with(&s) {
                let value = &sentence[p.len()..sentence.len() - s.len()];
                das.push(DialogueAct::new(Intent::Book, d, "ref", value));
                continue 'sentence;
            }
        }
    }
    das
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{build_world, WorldConfig};
    use std::collections::BTreeSet;

    fn ontology() -> Ontology {
        build_world(7, &WorldConfig::default()).unwrap().0
    }

    fn set(das: &[DialogueAct]) -> BTreeSet<String> {
        das.iter().map(|a| a.to_string()).collect()
    }

    #[test]
    fn spec_example_cheap_hotel_north() {
        let ont = ontology();
        let das = parse_user_utterance("i want a cheap hotel in the north", &ont);
        assert_eq!(
            das,
            vec![
                DialogueAct::new(Intent::Inform, "hotel", "pricerange", "cheap"),
                DialogueAct::new(Intent::Inform, "hotel", "area", "north"),
            ]
        );
    }

    #[test]
    fn user_roundtrip_informs_and_requests() {
        let ont = ontology();
        let das = vec![
            DialogueAct::new(Intent::Inform, "restaurant", "food", "italian"),
            DialogueAct::new(Intent::Inform, "restaurant", "area", "west"),
            DialogueAct::valueless(Intent::Request, "restaurant", "phone"),
        ];
        let u = render_user_turn(&das);
        assert_eq!(set(&parse_user_utterance(&u, &ont)), set(&das));
    }

    #[test]
    fn user_roundtrip_booking() {
        let ont = ontology();
        let das = vec![
            DialogueAct::new(Intent::Inform, "hotel", "day", "monday"),
            DialogueAct::new(Intent::Inform, "hotel", "people", "two people"),
        ];
        let u = render_user_turn(&das);
        assert!(u.starts_with("i would like to book the hotel"));
        assert_eq!(set(&parse_user_utterance(&u, &ont)), set(&das));
    }

    #[test]
    fn user_roundtrip_dontcare() {
        let ont = ontology();
        let das = vec![DialogueAct::new(Intent::Inform, "hotel", "parking", DONTCARE)];
        let u = render_user_turn(&das);
        assert_eq!(set(&parse_user_utterance(&u, &ont)), set(&das));
    }

    #[test]
    fn bye_and_greet() {
        let ont = ontology();
        assert_eq!(
            parse_user_utterance(USER_BYE, &ont),
            vec![DialogueAct::valueless(Intent::Bye, GENERAL, NO_SLOT)]
        );
        assert_eq!(
            parse_user_utterance(USER_GREET, &ont),
            vec![DialogueAct::valueless(Intent::Greet, GENERAL, NO_SLOT)]
        );
    }

    #[test]
    fn unparseable_is_empty() {
        let ont = ontology();
        assert!(parse_user_utterance("what a lovely day", &ont).is_empty());
    }

    #[test]
    fn system_request_hotel_area_pinned_form() {
        let das = vec![DialogueAct::valueless(Intent::Request, "hotel", "area")];
        assert_eq!(
            render_system_turn(&das),
            "what area of town would you like the hotel in ?"
        );
    }

    #[test]
    fn system_fallback_on_empty() {
        assert_eq!(render_system_turn(&[]), SYSTEM_FALLBACK);
        let ont = ontology();
        assert!(parse_system_utterance(SYSTEM_FALLBACK, &ont).is_empty());
    }

    #[test]
    fn system_inform_contains_value() {
        let das = vec![DialogueAct::new(Intent::Inform, "hotel", "phone", "01223")];
        assert!(render_system_turn(&das).contains("01223"));
    }

    #[test]
    fn system_roundtrip_mixed_turn() {
        let ont = ontology();
        let das = vec![
            DialogueAct::new(Intent::Inform, "hotel", "phone", "01223 000111"),
            DialogueAct::new(Intent::Offer, "hotel", "name", "the golden hotel"),
            DialogueAct::valueless(Intent::Request, "hotel", "day"),
            DialogueAct::new(Intent::Book, "restaurant", "ref", "ab12cd"),
            DialogueAct::valueless(Intent::Nooffer, "attraction", NO_SLOT),
            DialogueAct::valueless(Intent::Reqmore, GENERAL, NO_SLOT),
        ];
        let u = render_system_turn(&das);
        assert_eq!(set(&parse_system_utterance(&u, &ont)), set(&das));
    }
}
