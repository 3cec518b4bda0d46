//! Seeded synthetic dialogue generator for desk-scale experiments.
//!
//! Two domains (restaurant, movie), four intents, six slot types, four
//! user acts. People and time share one numeral value set, so a bare
//! answer like "5" after a system question is resolvable only from the
//! preceding system act — the context-ambiguous turns the context
//! ablation measures. Everything derives from one ChaCha substream, so
//! equal seeds give byte-identical corpora.

use super::{Corpus, Dialogue, SemanticFrame, SlotSpan, Speaker, SystemAct, Turn};
use crate::rng::substream;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const CUISINES: [&str; 5] = ["indian", "thai", "italian", "sushi", "mexican"];
const AREAS: [&str; 4] = ["downtown", "uptown", "riverside", "midtown"];
const MOVIES: [&str; 5] = ["inception", "avatar", "dune", "frozen", "heat"];
const THEATRES: [&str; 3] = ["regal", "amc", "cineplex"];
/// Shared by people and time; any bare numeral is slot-ambiguous.
const NUMERALS: [&str; 5] = ["2", "3", "4", "5", "6"];

const INTENTS: [&str; 4] = ["book_table", "find_restaurant", "buy_tickets", "find_movie"];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticConfig {
    pub num_dialogues: usize,
    /// Probability that a people/time answer is a bare numeral.
    pub ambiguous_answer_prob: f64,
    /// Probability of a trailing thank-you turn.
    pub thank_turn_prob: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig { num_dialogues: 100, ambiguous_answer_prob: 0.6, thank_turn_prob: 0.2 }
    }
}

fn frame(intent: &str, acts: &[&str], slots: Vec<SlotSpan>) -> SemanticFrame {
    SemanticFrame {
        intent: intent.to_string(),
        user_acts: acts.iter().map(|a| a.to_string()).collect(),
        slots,
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options[rng.gen_range(0..options.len())]
}

struct FlowState {
    intent: &'static str,
    turns: Vec<Turn>,
}

impl FlowState {
    fn ask_and_answer(&mut self, rng: &mut ChaCha8Rng, slot: &str, amb_prob: f64) {
        let (question, answer, span) = match slot {
            "people" => {
                let n = pick(rng, &NUMERALS);
                if rng.gen_bool(amb_prob) {
                    ("for how many people", n.to_string(), SlotSpan::new("people", 0, 1))
                } else {
                    ("for how many people", format!("for {n} people"), SlotSpan::new("people", 1, 2))
                }
            }
            "time" => {
                let n = pick(rng, &NUMERALS);
                if rng.gen_bool(amb_prob) {
                    ("what time should i book", n.to_string(), SlotSpan::new("time", 0, 1))
                } else {
                    ("what time should i book", format!("at {n}"), SlotSpan::new("time", 1, 2))
                }
            }
            "cuisine" => {
                let c = pick(rng, &CUISINES);
                ("what kind of food", format!("{c} food"), SlotSpan::new("cuisine", 0, 1))
            }
            "area" => {
                let a = pick(rng, &AREAS);
                ("which area do you prefer", format!("in {a}"), SlotSpan::new("area", 1, 2))
            }
            "movie" => {
                let m = pick(rng, &MOVIES);
                ("which movie", m.to_string(), SlotSpan::new("movie", 0, 1))
            }
            "theatre" => {
                let t = pick(rng, &THEATRES);
                ("which theatre", format!("at {t}"), SlotSpan::new("theatre", 1, 2))
            }
            other => unreachable!("no ask template for slot {other}"),
        };
        self.turns.push(Turn::system(question, vec![SystemAct::new("request", Some(slot))]));
        self.turns.push(Turn::user(answer, Some(frame(self.intent, &["inform"], vec![span]))));
    }

    fn close(&mut self, rng: &mut ChaCha8Rng, confirm_slot: &str) {
        let question = match confirm_slot {
            "booking" => "should i confirm the booking",
            _ => "should i search now",
        };
        self.turns
            .push(Turn::system(question, vec![SystemAct::new("confirm", Some(confirm_slot))]));
        let roll = rng.gen_range(0.0..1.0);
        let (text, f) = if roll < 0.5 {
            ("yes please".to_string(), frame(self.intent, &["affirm"], vec![]))
        } else if roll < 0.7 {
            ("no thanks".to_string(), frame(self.intent, &["negate"], vec![]))
        } else if roll < 0.9 {
            ("yes thank you".to_string(), frame(self.intent, &["affirm", "thank"], vec![]))
        } else {
            let n = pick(rng, &NUMERALS);
            (
                format!("no make it {n} people"),
                frame(self.intent, &["negate", "inform"], vec![SlotSpan::new("people", 3, 4)]),
            )
        };
        self.turns.push(Turn::user(text, Some(f)));
    }
}

fn generate_dialogue(rng: &mut ChaCha8Rng, id: String, config: &SyntheticConfig) -> Dialogue {
    let intent = INTENTS[rng.gen_range(0..INTENTS.len())];
    let amb = config.ambiguous_answer_prob;
    let mut flow = FlowState { intent, turns: Vec::new() };
    // opening turn announces the intent, with 0–2 slot values
    let mut missing_domain_slot = None;
    match intent {
        "book_table" => {
            let c = pick(rng, &CUISINES);
            let a = pick(rng, &AREAS);
            let (text, slots) = match rng.gen_range(0..3) {
                0 => (
                    format!("book a table for {c} food in {a}"),
                    vec![SlotSpan::new("cuisine", 4, 5), SlotSpan::new("area", 7, 8)],
                ),
                1 => (format!("book a table for {c} food"), vec![SlotSpan::new("cuisine", 4, 5)]),
                _ => {
                    missing_domain_slot = Some("cuisine");
                    ("i want to book a table".to_string(), vec![])
                }
            };
            flow.turns.push(Turn::user(text, Some(frame(intent, &["inform"], slots))));
        }
        "find_restaurant" => {
            let c = pick(rng, &CUISINES);
            let a = pick(rng, &AREAS);
            let (text, slots) = match rng.gen_range(0..3) {
                0 => (
                    format!("find a {c} restaurant in {a}"),
                    vec![SlotSpan::new("cuisine", 2, 3), SlotSpan::new("area", 5, 6)],
                ),
                1 => (format!("find me a {c} place"), vec![SlotSpan::new("cuisine", 3, 4)]),
                _ => {
                    missing_domain_slot = Some("area");
                    ("find a restaurant nearby".to_string(), vec![])
                }
            };
            flow.turns.push(Turn::user(text, Some(frame(intent, &["inform"], slots))));
        }
        "buy_tickets" => {
            let m = pick(rng, &MOVIES);
            let t = pick(rng, &THEATRES);
            let (text, slots) = match rng.gen_range(0..3) {
                0 => (
                    format!("book tickets for {m} at {t}"),
                    vec![SlotSpan::new("movie", 3, 4), SlotSpan::new("theatre", 5, 6)],
                ),
                1 => (format!("get tickets for {m}"), vec![SlotSpan::new("movie", 3, 4)]),
                _ => {
                    missing_domain_slot = Some("movie");
                    ("i want to buy tickets".to_string(), vec![])
                }
            };
            flow.turns.push(Turn::user(text, Some(frame(intent, &["inform"], slots))));
        }
        "find_movie" => {
            let t = pick(rng, &THEATRES);
            let (text, slots) = match rng.gen_range(0..2) {
                0 => (format!("find a movie at {t}"), vec![SlotSpan::new("theatre", 4, 5)]),
                _ => {
                    missing_domain_slot = Some("theatre");
                    ("what movies are playing".to_string(), vec![])
                }
            };
            flow.turns.push(Turn::user(text, Some(frame(intent, &["inform"], slots))));
        }
        other => unreachable!("unknown intent {other}"),
    }

    if let Some(slot) = missing_domain_slot {
        flow.ask_and_answer(rng, slot, amb);
    }
    flow.ask_and_answer(rng, "people", amb);
    flow.ask_and_answer(rng, "time", amb);
    let confirm_slot =
        if matches!(intent, "book_table" | "buy_tickets") { "booking" } else { "search" };
    flow.close(rng, confirm_slot);
    if rng.gen_bool(config.thank_turn_prob) {
        flow.turns
            .push(Turn::user("thank you so much", Some(frame(intent, &["thank"], vec![]))));
    }
    Dialogue { id, turns: flow.turns }
}

/// Deterministic-by-seed multi-turn corpus from the template grammar.
pub fn generate_synthetic_corpus(seed: u64, config: &SyntheticConfig) -> Corpus {
    let mut rng = substream(seed, "data-gen", 0);
    let dialogues: Vec<Dialogue> = (0..config.num_dialogues)
        .map(|i| generate_dialogue(&mut rng, format!("dlg-{i:05}"), config))
        .collect();
    Corpus::from_dialogues(dialogues).expect("generated dialogues always validate")
}

/// Removes every frame annotation: the unlabeled form used by the
/// masked-language-model and next-turn pretraining stages.
pub fn strip_labels(corpus: &Corpus) -> Corpus {
    let dialogues = corpus
        .dialogues
        .iter()
        .map(|d| Dialogue {
            id: d.id.clone(),
            turns: d.turns.iter().map(|t| Turn { labels: None, ..t.clone() }).collect(),
        })
        .collect();
    Corpus::from_dialogues(dialogues).expect("stripping labels preserves validity")
}

/// (context-ambiguous user turns, total user turns): a turn counts as
/// ambiguous when its utterance is a single bare numeral, whose slot
/// type only the preceding system act determines.
pub fn ambiguous_turn_stats(corpus: &Corpus) -> (usize, usize) {
    let mut ambiguous = 0;
    let mut total = 0;
    for d in &corpus.dialogues {
        for t in &d.turns {
            if t.speaker == Speaker::User {
                total += 1;
                if NUMERALS.contains(&t.utterance.as_str()) {
                    ambiguous += 1;
                }
            }
        }
    }
    (ambiguous, total)
}
