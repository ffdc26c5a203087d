//! Prior assumption generation from a trigger-word pool.
//!
//! A statement's prior over reasoning types starts from a fixed offset vector
//! e0 (the "none" slot gets the largest offset), accumulates each matched
//! trigger's weight into the bias vector delta, and normalizes:
//! a_P = softmax(e0 + delta).

use serde::{Deserialize, Serialize};

use crate::data::ReasoningType;
use crate::error::{Error, Result};
use crate::preprocess::tokenize;
use crate::tensor::softmax;

/// Comparative cue words: "-er" forms matched alone, plus more/less/fewer
/// when immediately followed by "than".
const COMPARATIVE_WORDS: [&str; 16] = [
    "larger", "smaller", "bigger", "higher", "lower", "longer", "shorter", "greater", "faster",
    "slower", "older", "younger", "earlier", "later", "better", "worse",
];
const COMPARATIVE_THAN_WORDS: [&str; 3] = ["more", "less", "fewer"];

/// Superlative cue words.
const SUPERLATIVE_WORDS: [&str; 16] = [
    "highest", "lowest", "longest", "shortest", "largest", "smallest", "biggest", "greatest",
    "fastest", "slowest", "oldest", "youngest", "earliest", "latest", "most", "least",
];

#[derive(Clone, Debug, PartialEq)]
enum Pattern {
    /// Contiguous token sequence, e.g. "never" or "didn't".
    Literal(Vec<String>),
    /// Literal tokens immediately followed by a number token ("only+[number]").
    WordThenNumber(Vec<String>),
    /// A number token immediately followed by literal tokens ("[number]+times").
    NumberThenWord(Vec<String>),
    /// Curated comparative word list.
    LexiconComparative,
    /// Curated superlative word list.
    LexiconSuperlative,
}

/// One trigger: a pattern that adds `weight` to its reasoning type's bias.
#[derive(Clone, Debug)]
pub struct Trigger {
    pub rtype: ReasoningType,
    pub pattern_text: String,
    pub weight: f64,
    pattern: Pattern,
}

impl Trigger {
    pub fn parse(rtype: ReasoningType, pattern_text: &str, weight: f64) -> Result<Trigger> {
        if rtype == ReasoningType::None {
            return Err(Error::Config(
                "triggers may not target the 'none' type".into(),
            ));
        }
        if weight <= 0.0 {
            return Err(Error::Config(format!(
                "trigger '{pattern_text}' has non-positive weight {weight}"
            )));
        }
        let pattern = match pattern_text {
            "[lexicon:comparative]" => Pattern::LexiconComparative,
            "[lexicon:superlative]" => Pattern::LexiconSuperlative,
            _ => {
                if let Some(prefix) = pattern_text.strip_suffix("+[number]") {
                    Pattern::WordThenNumber(tokenize(prefix))
                } else if let Some(suffix) = pattern_text.strip_prefix("[number]+") {
                    Pattern::NumberThenWord(tokenize(suffix))
                } else {
                    Pattern::Literal(tokenize(pattern_text))
                }
            }
        };
        match &pattern {
            Pattern::Literal(t) | Pattern::WordThenNumber(t) | Pattern::NumberThenWord(t)
                if t.is_empty() =>
            {
                return Err(Error::Config(format!("empty trigger pattern '{pattern_text}'")));
            }
            _ => {}
        }
        Ok(Trigger {
            rtype,
            pattern_text: pattern_text.to_string(),
            weight,
            pattern,
        })
    }

    /// Number of occurrences in the token stream.
    fn occurrences(&self, tokens: &[String]) -> usize {
        match &self.pattern {
            Pattern::Literal(seq) => count_subsequences(tokens, seq, None),
            Pattern::WordThenNumber(seq) => count_subsequences(tokens, seq, Some(NumberSide::After)),
            Pattern::NumberThenWord(seq) => {
                count_subsequences(tokens, seq, Some(NumberSide::Before))
            }
            Pattern::LexiconComparative => tokens
                .iter()
                .enumerate()
                .filter(|(i, t)| {
                    COMPARATIVE_WORDS.contains(&t.as_str())
                        || (COMPARATIVE_THAN_WORDS.contains(&t.as_str())
                            && tokens.get(i + 1).map(String::as_str) == Some("than"))
                })
                .count(),
            Pattern::LexiconSuperlative => tokens
                .iter()
                .filter(|t| SUPERLATIVE_WORDS.contains(&t.as_str()))
                .count(),
        }
    }
}

enum NumberSide {
    Before,
    After,
}

fn is_number_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_ascii_digit())
}

fn count_subsequences(tokens: &[String], seq: &[String], number: Option<NumberSide>) -> usize {
    let mut hits = 0;
    for start in 0..tokens.len() {
        let lit_start = match number {
            Some(NumberSide::Before) => {
                if !is_number_token(&tokens[start]) {
                    continue;
                }
                start + 1
            }
            _ => start,
        };
        if lit_start + seq.len() > tokens.len() {
            continue;
        }
        if tokens[lit_start..lit_start + seq.len()] != *seq {
            continue;
        }
        if let Some(NumberSide::After) = number {
            match tokens.get(lit_start + seq.len()) {
                Some(next) if is_number_token(next) => {}
                _ => continue,
            }
        }
        hits += 1;
    }
    hits
}

/// Immutable trigger set used for prior assumption generation.
#[derive(Clone, Debug, Default)]
pub struct TriggerPool {
    triggers: Vec<Trigger>,
}

#[derive(Serialize, Deserialize)]
struct TriggerRecord {
    #[serde(rename = "type")]
    rtype: ReasoningType,
    pattern: String,
    weight: f64,
}

impl TriggerPool {
    pub fn empty() -> Self {
        TriggerPool::default()
    }

    pub fn len(&self) -> usize {
        self.triggers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triggers.is_empty()
    }

    pub fn triggers(&self) -> &[Trigger] {
        &self.triggers
    }

    /// The built-in pool: the published trigger table verbatim, with the
    /// comparative/superlative rows mapped to lexicon rules instead of an
    /// external part-of-speech tagger.
    pub fn builtin() -> Self {
        let mut triggers = Vec::new();
        let spec: [(ReasoningType, &str, f64); 10] = [
            (ReasoningType::Count, "only+[number]", 1.6),
            (ReasoningType::Count, "[number]+times", 2.0),
            (ReasoningType::Count, "[number]+of", 1.6),
            (ReasoningType::Count, "there be+[number]", 1.6),
            (ReasoningType::Negation, "no", 1.5),
            (ReasoningType::Negation, "not", 1.5),
            (ReasoningType::Negation, "never", 1.5),
            (ReasoningType::Negation, "didn't", 1.5),
            (ReasoningType::Comparative, "[lexicon:comparative]", 1.5),
            (ReasoningType::Superlative, "[lexicon:superlative]", 1.5),
        ];
        for (rtype, pattern, weight) in spec {
            triggers.push(Trigger::parse(rtype, pattern, weight).expect("builtin trigger"));
        }
        TriggerPool { triggers }
    }

    /// Parse a JSON array of {type, pattern, weight}.
    pub fn from_json(json: &str) -> Result<Self> {
        let records: Vec<TriggerRecord> = serde_json::from_str(json)?;
        let mut triggers = Vec::with_capacity(records.len());
        for r in records {
            triggers.push(Trigger::parse(r.rtype, &r.pattern, r.weight)?);
        }
        Ok(TriggerPool { triggers })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let records: Vec<TriggerRecord> = self
            .triggers
            .iter()
            .map(|t| TriggerRecord {
                rtype: t.rtype,
                pattern: t.pattern_text.clone(),
                weight: t.weight,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }
}

/// Trigger mass per reasoning type in canonical order (count, comparative,
/// superlative, negation); the length-4 compact form of delta.
pub fn trigger_mass(statement: &str, pool: &TriggerPool) -> [f64; 4] {
    let tokens = tokenize(statement);
    let mut mass = [0.0; 4];
    for trigger in &pool.triggers {
        let hits = trigger.occurrences(&tokens);
        if hits > 0 {
            mass[trigger.rtype.index()] += trigger.weight * hits as f64;
        }
    }
    mass
}

/// Expand the compact trigger mass to a delta vector of length `n_e`.
/// Types beyond the first n_e - 1 slots are dropped; the final ("none")
/// component is always 0.
pub fn expand_delta(mass: &[f64; 4], n_e: usize) -> Vec<f64> {
    let mut delta = vec![0.0; n_e];
    for (i, &m) in mass.iter().enumerate() {
        if i + 1 < n_e {
            delta[i] += m;
        }
    }
    delta
}

/// Per the generation algorithm: accumulate matched triggers' weights into
/// the bias vector. The last component stays 0.
pub fn match_triggers(statement: &str, pool: &TriggerPool, n_e: usize) -> Vec<f64> {
    expand_delta(&trigger_mass(statement, pool), n_e)
}

/// The fixed offset vector: 0.1 everywhere, 0.6 for the trailing "none" slot.
pub fn e0(n_e: usize) -> Vec<f64> {
    let mut v = vec![0.1; n_e];
    if let Some(last) = v.last_mut() {
        *last = 0.6;
    }
    v
}

/// a_P = softmax(e0 + delta).
pub fn prior_assumption(delta: &[f64], e0: &[f64]) -> Result<Vec<f64>> {
    if delta.len() != e0.len() {
        return Err(Error::ShapeMismatch {
            op: "prior_assumption",
            lhs: vec![delta.len()],
            rhs: vec![e0.len()],
        });
    }
    let logits: Vec<f64> = delta.iter().zip(e0).map(|(d, e)| d + e).collect();
    Ok(softmax(&logits))
}

/// Full prior record for one statement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PriorAssumption {
    pub e0: Vec<f64>,
    pub delta: Vec<f64>,
    pub a_p: Vec<f64>,
}

pub fn compute_prior(statement: &str, pool: &TriggerPool, n_e: usize) -> PriorAssumption {
    let e0 = e0(n_e);
    let delta = match_triggers(statement, pool, n_e);
    let a_p = prior_assumption(&delta, &e0).expect("lengths agree");
    PriorAssumption { e0, delta, a_p }
}

/// A documented extension pool: the built-in triggers plus additional common
/// English cues. These extras are this crate's own, not reconstructed from
/// any published table.
pub fn extended_pool_json() -> &'static str {
    include_str!("../assets/triggers_extended.json")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_pattern_from_table() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("x be listed a total of 3 times", &pool, 5);
        assert_eq!(delta, vec![2.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn negation_word() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("x never score 0 points", &pool, 5);
        assert_eq!(delta, vec![0.0, 0.0, 0.0, 1.5, 0.0]);
    }

    #[test]
    fn plain_lookup_matches_nothing() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("x 's y be z", &pool, 5);
        assert_eq!(delta, vec![0.0; 5]);
    }

    #[test]
    fn lexicon_rules_fire() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("alice has a larger score than bob", &pool, 5);
        assert_eq!(delta, vec![0.0, 1.5, 0.0, 0.0, 0.0]);
        let delta = match_triggers("the highest score be 5", &pool, 5);
        assert_eq!(delta, vec![0.0, 0.0, 1.5, 0.0, 0.0]);
        // more/less/fewer need "than" right after.
        let delta = match_triggers("more than 1 game", &pool, 5);
        assert_eq!(delta[1], 1.5);
        let delta = match_triggers("score more points", &pool, 5);
        assert_eq!(delta[1], 0.0);
    }

    #[test]
    fn didnt_matches_through_tokenizer() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("bob didn't win", &pool, 5);
        assert_eq!(delta[3], 1.5);
    }

    #[test]
    fn there_be_number() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("there be 4 teams", &pool, 5);
        assert_eq!(delta[0], 1.6);
    }

    #[test]
    fn multiple_matches_accumulate() {
        let pool = TriggerPool::builtin();
        let delta = match_triggers("x never win and y never lose , not once", &pool, 5);
        assert!((delta[3] - 4.5).abs() < 1e-12, "delta: {delta:?}");
    }

    #[test]
    fn prior_default_e0() {
        // softmax(0.1, 0.1, 0.1, 0.1, 0.6)
        let a_p = prior_assumption(&[0.0; 5], &e0(5)).unwrap();
        let expected = [0.1770, 0.1770, 0.1770, 0.1770, 0.2919];
        for (a, e) in a_p.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-4, "{a} vs {e}");
        }
        assert!((a_p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prior_with_count_mass() {
        // softmax(2.1, 0.1, 0.1, 0.1, 0.6)
        let a_p = prior_assumption(&[2.0, 0.0, 0.0, 0.0, 0.0], &e0(5)).unwrap();
        let expected = [0.6138, 0.0831, 0.0831, 0.0831, 0.1370];
        for (a, e) in a_p.iter().zip(&expected) {
            assert!((a - e).abs() < 1e-4, "{a} vs {e}");
        }
    }

    #[test]
    fn increasing_delta_increases_component() {
        let base = prior_assumption(&[0.5, 0.0, 0.0, 0.0, 0.0], &e0(5)).unwrap();
        let more = prior_assumption(&[0.9, 0.0, 0.0, 0.0, 0.0], &e0(5)).unwrap();
        assert!(more[0] > base[0]);
    }

    #[test]
    fn empty_pool_yields_softmax_e0() {
        let prior = compute_prior("anything at all", &TriggerPool::empty(), 5);
        let expected = softmax(&e0(5));
        assert_eq!(prior.a_p, expected);
        assert_eq!(prior.delta, vec![0.0; 5]);
    }

    #[test]
    fn accumulation_is_order_free() {
        let pool = TriggerPool::builtin();
        let mut reversed: Vec<Trigger> = pool.triggers().to_vec();
        reversed.reverse();
        let reversed_pool = TriggerPool { triggers: reversed };
        let s = "only 3 of the players never score 2 times";
        assert_eq!(
            match_triggers(s, &pool, 5),
            match_triggers(s, &reversed_pool, 5)
        );
    }

    #[test]
    fn argmax_none_iff_max_delta_below_half() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let mut delta = vec![0.0; 5];
            for d in delta.iter_mut().take(4) {
                *d = if rng.gen::<bool>() {
                    0.0
                } else {
                    rng.gen_range(0.0..3.0)
                };
            }
            let max_delta = delta[..4].iter().cloned().fold(0.0, f64::max);
            if (max_delta - 0.5).abs() < 1e-9 {
                continue;
            }
            let a_p = prior_assumption(&delta, &e0(5)).unwrap();
            let argmax_is_none = crate::tensor::argmax(&a_p) == 4;
            assert_eq!(argmax_is_none, max_delta < 0.5, "delta {delta:?}");
            assert!(a_p.iter().all(|&p| p > 0.0));
            assert!((a_p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pool_json_round_trip() {
        let pool = TriggerPool::builtin();
        let json = pool.to_json().unwrap();
        let back = TriggerPool::from_json(&json).unwrap();
        assert_eq!(back.len(), pool.len());
        let s = "x be listed a total of 3 times";
        assert_eq!(match_triggers(s, &back, 5), match_triggers(s, &pool, 5));
    }

    #[test]
    fn extended_pool_parses() {
        let pool = TriggerPool::from_json(extended_pool_json()).unwrap();
        assert!(pool.len() > TriggerPool::builtin().len());
    }

    #[test]
    fn small_n_e_drops_unmapped_types() {
        let pool = TriggerPool::builtin();
        // superlative is slot 2 == n_e - 1 for n_e = 3, so it is dropped.
        let delta = match_triggers("the highest score be 5", &pool, 3);
        assert_eq!(delta, vec![0.0, 0.0, 0.0]);
        let delta = match_triggers("never", &pool, 3);
        assert_eq!(delta, vec![0.0, 0.0, 0.0]);
        let delta = match_triggers("3 times", &pool, 3);
        assert_eq!(delta, vec![2.0, 0.0, 0.0]);
    }
}
