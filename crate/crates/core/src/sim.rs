//! Agenda-driven user simulator. The simulator pursues a sampled goal domain
//! by domain: send constraints, wait for an offer, request attributes, then
//! book. Unanswered items stay on the agenda and are re-sent, so dropped
//! system acts cost turns instead of deadlocking the session.

use crate::acts::{DialogueAct, Intent, GENERAL, NO_SLOT};
use crate::world::{UserGoal, DONTCARE};
use std::collections::{BTreeMap, BTreeSet};

/// How many agenda items the user utters per turn.
const ITEMS_PER_TURN: usize = 2;

#[derive(Debug, Clone, Default)]
struct DomainProgress {
    /// Constraints already uttered (index into the active constraint list).
    info_sent: usize,
    /// Entity name the system offered, if any.
    offer: Option<String>,
    requests_remaining: Vec<String>,
    requests_answered: BTreeMap<String, String>,
    book_sent: BTreeSet<String>,
    booked: bool,
    fallback: bool,
    /// Constraint changes queued by a fallback switch, sent before anything
    /// else so the system's stale belief gets corrected first.
    pending_informs: Vec<(String, String)>,
    /// Set when a nooffer arrives with no fallback constraints left.
    gave_up: bool,
    /// Cycles through constraints when re-sending after a missed offer.
    resend_cursor: usize,
}

/// Everything the scorer needs once the session ends.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    /// Every (domain, slot) the user asked for.
    pub requested: Vec<(String, String)>,
    /// Answered requests with the value the system gave.
    pub answered: BTreeMap<(String, String), String>,
    /// Entity name offered per domain (last offer wins).
    pub offered: BTreeMap<String, String>,
    /// Domains where the user fell back to their alternative constraints.
    pub fallback: BTreeSet<String>,
    pub turns: usize,
    pub user_bye: bool,
}

#[derive(Debug, Clone)]
pub struct UserSimulator {
    pub goal: UserGoal,
    progress: Vec<DomainProgress>,
    current: usize,
    turns: usize,
    said_bye: bool,
}

impl UserSimulator {
    pub fn new(goal: UserGoal) -> Self {
        let progress = goal
            .domains
            .iter()
            .map(|dg| DomainProgress {
                requests_remaining: dg.requests.clone(),
                ..DomainProgress::default()
            })
            .collect();
        UserSimulator {
            goal,
            progress,
            current: 0,
            turns: 0,
            said_bye: false,
        }
    }

    fn domain_index(&self, domain: &str) -> Option<usize> {
        self.goal.domains.iter().position(|g| g.domain == domain)
    }

    fn domain_done(&self, i: usize) -> bool {
        let dg = &self.goal.domains[i];
        let p = &self.progress[i];
        if p.gave_up {
            return true;
        }
        p.offer.is_some()
            && p.requests_remaining.is_empty()
            && (dg.book.is_empty() || p.booked)
    }

    pub fn is_done(&self) -> bool {
        self.said_bye
    }

    /// Consume the system's acts and produce the user's next acts.
    pub fn respond(&mut self, system_das: &[DialogueAct]) -> Vec<DialogueAct> {
        self.turns += 1;
        let mut reply = Vec::new();

        // React to what the system just said. Acts about a goal domain the
        // user has not brought up yet are ignored: a real user does not
        // abandon, accept, or book a venue they never asked about, so
        // hallucination-driven system acts must not pre-complete (or kill)
        // future domains.
        for act in system_das {
            let Some(i) = self.domain_index(&act.domain) else {
                continue;
            };
            if i > self.current {
                continue;
            }
            match act.intent {
                Intent::Inform => {
                    let p = &mut self.progress[i];
                    if let Some(k) = p.requests_remaining.iter().position(|s| *s == act.slot) {
                        p.requests_remaining.remove(k);
                        p.requests_answered
                            .insert(act.slot.clone(), act.value.clone());
                    }
                }
                Intent::Offer => {
                    self.progress[i].offer = Some(act.value.clone());
                }
                Intent::Book => {
                    self.progress[i].booked = true;
                }
                Intent::Nooffer => {
                    let dg = &self.goal.domains[i];
                    let p = &mut self.progress[i];
                    if !dg.fail_info.is_empty() && !p.fallback {
                        // Switch to the alternative constraints. Slots whose
                        // value changed go out first; unchanged ones are
                        // already in the system's belief.
                        p.fallback = true;
                        p.offer = None;
                        p.resend_cursor = 0;
                        p.info_sent = dg.fail_info.len();
                        p.pending_informs = dg
                            .fail_info
                            .iter()
                            .filter(|(slot, value)| {
                                dg.info
                                    .iter()
                                    .find(|(s, _)| s == slot)
                                    .map(|(_, v)| v != value)
                                    .unwrap_or(true)
                            })
                            .cloned()
                            .collect();
                    } else if p.pending_informs.is_empty() {
                        p.gave_up = true;
                    }
                    // A nooffer while corrections are still queued is the
                    // system acting on a stale belief; keep going.
                }
                _ => {}
            }
        }

        // Answer the system's questions from the goal.
        for act in system_das {
            if act.intent != Intent::Request {
                continue;
            }
            let Some(i) = self.domain_index(&act.domain) else {
                continue;
            };
            if i > self.current {
                continue;
            }
            let dg = &self.goal.domains[i];
            let value = dg
                .book
                .iter()
                .find(|(s, _)| *s == act.slot)
                .or_else(|| {
                    dg.active_constraints(self.progress[i].fallback)
                        .iter()
                        .find(|(s, _)| *s == act.slot)
                })
                .map(|(_, v)| v.clone())
                .unwrap_or_else(|| DONTCARE.to_string());
            if dg.book.iter().any(|(s, _)| *s == act.slot) {
                self.progress[i].book_sent.insert(act.slot.clone());
            }
            reply.push(DialogueAct::new(
                Intent::Inform,
                &act.domain,
                &act.slot,
                value,
            ));
        }

        // Advance past finished domains.
        while self.current < self.goal.domains.len() && self.domain_done(self.current) {
            self.current += 1;
        }
        if self.current >= self.goal.domains.len() {
            self.said_bye = true;
            reply.clear();
            reply.push(DialogueAct::valueless(Intent::Bye, GENERAL, NO_SLOT));
            return reply;
        }

        // Push agenda items for the current domain.
        let i = self.current;
        let dg = self.goal.domains[i].clone();
        let fallback = self.progress[i].fallback;
        let active = dg.active_constraints(fallback).to_vec();
        let mut budget = ITEMS_PER_TURN.saturating_sub(reply.len());
        if budget == 0 {
            budget = 1;
        }

        let p = &mut self.progress[i];
        if !p.pending_informs.is_empty() {
            let take = budget.max(1).min(p.pending_informs.len());
            for (slot, value) in p.pending_informs.drain(..take) {
                reply.push(DialogueAct::new(Intent::Inform, &dg.domain, slot, value));
            }
        } else if p.info_sent < active.len() {
            while p.info_sent < active.len() && budget > 0 {
                let (slot, value) = &active[p.info_sent];
                reply.push(DialogueAct::new(Intent::Inform, &dg.domain, slot, value));
                p.info_sent += 1;
                budget -= 1;
            }
        } else if p.offer.is_none() {
            // The offer never arrived; repeat a constraint to prompt one.
            if !active.is_empty() {
                let (slot, value) = &active[p.resend_cursor % active.len()];
                reply.push(DialogueAct::new(Intent::Inform, &dg.domain, slot, value));
                p.resend_cursor += 1;
            }
        } else if !p.requests_remaining.is_empty() {
            for slot in p.requests_remaining.iter().take(budget) {
                reply.push(DialogueAct::valueless(Intent::Request, &dg.domain, slot));
            }
        } else if !dg.book.is_empty() && !p.booked {
            let unsent: Vec<&(String, String)> = dg
                .book
                .iter()
                .filter(|(s, _)| !p.book_sent.contains(s))
                .collect();
            if unsent.is_empty() {
                // Booking stalled; repeat one book detail.
                let (slot, value) = &dg.book[p.resend_cursor % dg.book.len()];
                p.resend_cursor += 1;
                reply.push(DialogueAct::new(Intent::Inform, &dg.domain, slot, value));
            } else {
                for (slot, value) in unsent.into_iter().take(budget.max(1)) {
                    p.book_sent.insert(slot.clone());
                    reply.push(DialogueAct::new(Intent::Inform, &dg.domain, slot, value));
                }
            }
        }

        if reply.is_empty() {
            reply.push(DialogueAct::valueless(Intent::Greet, GENERAL, NO_SLOT));
        }
        reply
    }

    pub fn outcome(&self) -> SessionOutcome {
        let mut requested = Vec::new();
        let mut answered = BTreeMap::new();
        let mut offered = BTreeMap::new();
        let mut fallback = BTreeSet::new();
        for (dg, p) in self.goal.domains.iter().zip(&self.progress) {
            for slot in &dg.requests {
                requested.push((dg.domain.clone(), slot.clone()));
            }
            for (slot, value) in &p.requests_answered {
                answered.insert((dg.domain.clone(), slot.clone()), value.clone());
            }
            if let Some(name) = &p.offer {
                offered.insert(dg.domain.clone(), name.clone());
            }
            if p.fallback {
                fallback.insert(dg.domain.clone());
            }
        }
        SessionOutcome {
            requested,
            answered,
            offered,
            fallback,
            turns: self.turns,
            user_bye: self.said_bye,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::DomainGoal;

    fn goal_one_domain() -> UserGoal {
        UserGoal {
            domains: vec![DomainGoal {
                domain: "hotel".into(),
                info: vec![
                    ("pricerange".into(), "cheap".into()),
                    ("area".into(), "north".into()),
                ],
                fail_info: vec![],
                requests: vec!["phone".into(), "address".into()],
                book: vec![("day".into(), "monday".into())],
            }],
        }
    }

    fn offer(name: &str) -> DialogueAct {
        DialogueAct::new(Intent::Offer, "hotel", "name", name)
    }

    #[test]
    fn informs_then_requests_then_books_then_bye() {
        let mut sim = UserSimulator::new(goal_one_domain());
        let t1 = sim.respond(&[]);
        assert_eq!(t1.len(), 2);
        assert!(t1.iter().all(|a| a.intent == Intent::Inform));

        let t2 = sim.respond(&[offer("the golden hotel")]);
        assert!(t2.iter().all(|a| a.intent == Intent::Request));
        assert_eq!(t2.len(), 2);

        let answers = vec![
            DialogueAct::new(Intent::Inform, "hotel", "phone", "123"),
            DialogueAct::new(Intent::Inform, "hotel", "address", "5 york way"),
        ];
        let t3 = sim.respond(&answers);
        assert!(t3
            .iter()
            .any(|a| a.intent == Intent::Inform && a.slot == "day"));

        let t4 = sim.respond(&[DialogueAct::new(Intent::Book, "hotel", "ref", "x-01")]);
        assert_eq!(t4[0].intent, Intent::Bye);
        assert!(sim.is_done());

        let out = sim.outcome();
        assert_eq!(out.answered.len(), 2);
        assert_eq!(out.offered["hotel"], "the golden hotel");
        assert!(out.user_bye);
    }

    #[test]
    fn resends_constraint_when_offer_is_missed() {
        let mut sim = UserSimulator::new(goal_one_domain());
        sim.respond(&[]);
        // System says nothing useful; the user repeats a constraint.
        let t2 = sim.respond(&[DialogueAct::valueless(Intent::Reqmore, GENERAL, NO_SLOT)]);
        assert_eq!(t2.len(), 1);
        assert_eq!(t2[0].intent, Intent::Inform);
        let t3 = sim.respond(&[]);
        assert_eq!(t3[0].intent, Intent::Inform);
        assert_ne!(t2[0].slot, t3[0].slot, "resend cycles through constraints");
    }

    #[test]
    fn unanswered_requests_are_repeated() {
        let mut sim = UserSimulator::new(goal_one_domain());
        sim.respond(&[]);
        let t2 = sim.respond(&[offer("the golden hotel")]);
        assert_eq!(t2.len(), 2);
        // Only one request gets answered.
        let t3 = sim.respond(&[DialogueAct::new(Intent::Inform, "hotel", "phone", "123")]);
        assert!(t3
            .iter()
            .any(|a| a.intent == Intent::Request && a.slot == "address"));
        assert!(!t3.iter().any(|a| a.slot == "phone"));
    }

    #[test]
    fn answers_system_request_from_goal_or_dontcare() {
        let mut sim = UserSimulator::new(goal_one_domain());
        sim.respond(&[]);
        let reply = sim.respond(&[
            DialogueAct::valueless(Intent::Request, "hotel", "stars"),
            DialogueAct::valueless(Intent::Request, "hotel", "day"),
        ]);
        let stars = reply.iter().find(|a| a.slot == "stars").unwrap();
        assert_eq!(stars.value, DONTCARE);
        let day = reply.iter().find(|a| a.slot == "day").unwrap();
        assert_eq!(day.value, "monday");
    }

    #[test]
    fn nooffer_switches_to_fallback_once_then_gives_up() {
        let mut goal = goal_one_domain();
        goal.domains[0].fail_info = vec![("pricerange".into(), "expensive".into())];
        let mut sim = UserSimulator::new(goal);
        sim.respond(&[]);
        let nooffer = DialogueAct::valueless(Intent::Nooffer, "hotel", NO_SLOT);
        let t2 = sim.respond(&[nooffer.clone()]);
        assert!(t2
            .iter()
            .any(|a| a.intent == Intent::Inform && a.value == "expensive"));
        let out = sim.outcome();
        assert!(out.fallback.contains("hotel"));
        // A second nooffer exhausts the goal for this domain.
        let t3 = sim.respond(&[nooffer]);
        assert_eq!(t3[0].intent, Intent::Bye);
    }

    #[test]
    fn multi_domain_goals_are_pursued_in_order() {
        let mut goal = goal_one_domain();
        goal.domains.push(DomainGoal {
            domain: "attraction".into(),
            info: vec![("type".into(), "museum".into())],
            fail_info: vec![],
            requests: vec!["fee".into()],
            book: vec![],
        });
        goal.domains[0].book.clear();
        let mut sim = UserSimulator::new(goal);
        sim.respond(&[]);
        sim.respond(&[offer("the golden hotel")]);
        // Answer both hotel requests: the hotel domain completes and the
        // attraction informs begin.
        let t = sim.respond(&[
            DialogueAct::new(Intent::Inform, "hotel", "phone", "123"),
            DialogueAct::new(Intent::Inform, "hotel", "address", "5 york way"),
        ]);
        assert!(t
            .iter()
            .any(|a| a.domain == "attraction" && a.intent == Intent::Inform));
        assert!(!sim.is_done());
    }
}
