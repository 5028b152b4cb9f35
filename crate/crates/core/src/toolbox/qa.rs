//! Pseudo-rules for multiple-choice QA answers and the risk scale derived
//! from the number of violated rules.

use std::collections::{BTreeSet, HashSet};

use crate::types::{Choice, RiskLevel};

use super::PolicyError;

const QA_DESCRIPTIONS: [&str; 4] = [
    "Do not select an answer choice that shares a word (or word root) with another choice.",
    "If the question has 15 or more words, do not pick A, B, or C.",
    "If the question mentions an animal, the answer should be B.",
    "If the question contains a number from one to five, do not pick the matching letter (1 = A, 2 = B, 3 = C, 4 = D, 5 = E).",
];

pub fn qa_rule_description(id: u32) -> Option<&'static str> {
    QA_DESCRIPTIONS.get((id as usize).checked_sub(1)?).copied()
}

/// Animal words recognized by rule 3 (singular roots; plurals are stemmed).
pub const ANIMALS: &[&str] = &[
    "animal", "ant", "bat", "bear", "bee", "beaver", "bird", "buffalo", "bull", "butterfly",
    "camel", "cat", "cattle", "chicken", "cow", "crab", "crow", "deer", "dog", "dolphin",
    "donkey", "duck", "eagle", "elephant", "ferret", "fish", "fly", "fox", "frog", "giraffe",
    "goat", "goose", "gorilla", "hamster", "hawk", "hen", "horse", "insect", "kangaroo",
    "kitten", "koala", "lamb", "lion", "lizard", "llama", "monkey", "mosquito", "mouse", "mice",
    "owl", "ox", "parrot", "penguin", "pet", "pig", "pigeon", "puppy", "rabbit", "rat", "seal",
    "shark", "sheep", "snake", "spider", "squirrel", "swan", "tiger", "turkey", "turtle",
    "whale", "wolf", "worm", "zebra",
];

const NUMBER_WORDS: [(&str, &str); 5] = [
    ("one", "A"),
    ("two", "B"),
    ("three", "C"),
    ("four", "D"),
    ("five", "E"),
];

/// Minimal suffix stripper: removes the first of `ing`, `es`, `ly`, `ed`, `s`
/// whose removal leaves at least three characters.
pub fn word_root(word: &str) -> String {
    let lower = word.to_lowercase();
    for suffix in ["ing", "es", "ly", "ed", "s"] {
        if let Some(stem) = lower.strip_suffix(suffix) {
            if stem.chars().count() >= 3 {
                return stem.to_string();
            }
        }
    }
    lower
}

fn words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

fn roots(text: &str) -> HashSet<String> {
    words(text).map(word_root).collect()
}

/// Evaluates the four QA pseudo-rules independently and returns the ids of
/// the violated ones.
pub fn evaluate_qa_rules(
    question: &str,
    choices: &[Choice],
    answer: &str,
) -> Result<BTreeSet<u32>, PolicyError> {
    let mut letters = HashSet::new();
    for c in choices {
        let letter = c.letter.trim().to_uppercase();
        if !matches!(letter.as_str(), "A" | "B" | "C" | "D" | "E") || !letters.insert(letter) {
            return Err(PolicyError::Invalid(format!(
                "choice letters must be distinct letters A..E, got {:?}",
                c.letter
            )));
        }
    }
    let answer = answer.trim().to_uppercase();
    let mut violated = BTreeSet::new();

    // rule 1: the chosen option shares a word root with another option
    if let Some(chosen) = choices.iter().find(|c| c.letter.trim().eq_ignore_ascii_case(&answer)) {
        let chosen_roots = roots(&chosen.text);
        let shared = choices
            .iter()
            .filter(|c| !c.letter.trim().eq_ignore_ascii_case(&answer))
            .any(|c| !roots(&c.text).is_disjoint(&chosen_roots));
        if shared {
            violated.insert(1);
        }
    }

    // rule 2
    if question.split_whitespace().count() >= 15 && matches!(answer.as_str(), "A" | "B" | "C") {
        violated.insert(2);
    }

    // rule 3
    let question_roots = roots(question);
    let animals: HashSet<String> = ANIMALS.iter().map(|a| word_root(a)).collect();
    let mentions_animal = question_roots.iter().any(|r| animals.contains(r))
        || words(question).any(|w| ANIMALS.contains(&w.to_lowercase().as_str()));
    if mentions_animal && answer != "B" {
        violated.insert(3);
    }

    // rule 4
    let barred: HashSet<&str> = words(question)
        .filter_map(|w| {
            let w = w.to_lowercase();
            NUMBER_WORDS
                .iter()
                .enumerate()
                .find(|(i, (name, _))| *name == w || (i + 1).to_string() == w)
                .map(|(_, (_, letter))| *letter)
        })
        .collect();
    if barred.contains(answer.as_str()) {
        violated.insert(4);
    }

    Ok(violated)
}

pub fn risk_level(violation_count: u32) -> Result<RiskLevel, PolicyError> {
    match violation_count {
        0 => Ok(RiskLevel::No),
        1 => Ok(RiskLevel::Low),
        2 => Ok(RiskLevel::Medium),
        3 => Ok(RiskLevel::High),
        4 => Ok(RiskLevel::VeryHigh),
        n => Err(PolicyError::Invalid(format!("violation count {n} is outside 0..=4"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn choices(texts: [&str; 5]) -> Vec<Choice> {
        ["A", "B", "C", "D", "E"]
            .iter()
            .zip(texts)
            .map(|(l, t)| Choice { letter: l.to_string(), text: t.to_string() })
            .collect()
    }

    #[test]
    fn stemmer_behavior() {
        assert_eq!(word_root("eyes"), "eye");
        assert_eq!(word_root("eye"), "eye");
        assert_eq!(word_root("slowly"), "slow");
        assert_eq!(word_root("running"), "runn");
        assert_eq!(word_root("walked"), "walk");
        assert_eq!(word_root("classes"), "class");
        assert_eq!(word_root("has"), "has");
        assert_eq!(word_root("is"), "is");
        assert_eq!(word_root("Dogs"), "dog");
    }

    #[test]
    fn shared_word_have_flags_rule_one() {
        let c = choices(["fly", "swim", "have fun", "have a party", "sleep"]);
        let v = evaluate_qa_rules("What do people do at a celebration?", &c, "C").unwrap();
        assert!(v.contains(&1));
        let v = evaluate_qa_rules("What do people do at a celebration?", &c, "E").unwrap();
        assert!(!v.contains(&1));
    }

    #[test]
    fn root_sharing_counts() {
        let c = choices(["eye", "eyes", "nose", "ear", "mouth"]);
        assert!(evaluate_qa_rules("Where are tears?", &c, "A").unwrap().contains(&1));
    }

    #[test]
    fn fourteen_words_is_below_threshold() {
        let c = choices(["x1", "y2", "z3", "w4", "v5"]);
        let q = "a b c d e f g h i j k l m n";
        assert_eq!(q.split_whitespace().count(), 14);
        assert!(!evaluate_qa_rules(q, &c, "A").unwrap().contains(&2));
        let q15 = "a b c d e f g h i j k l m n o";
        assert!(evaluate_qa_rules(q15, &c, "A").unwrap().contains(&2));
        assert!(!evaluate_qa_rules(q15, &c, "D").unwrap().contains(&2));
    }

    #[test]
    fn animal_requires_b() {
        let c = choices(["x1", "y2", "z3", "w4", "v5"]);
        assert!(evaluate_qa_rules("Where do dogs sleep?", &c, "A").unwrap().contains(&3));
        assert!(!evaluate_qa_rules("Where do dogs sleep?", &c, "B").unwrap().contains(&3));
        assert!(!evaluate_qa_rules("Where do people sleep?", &c, "A").unwrap().contains(&3));
    }

    #[test]
    fn number_word_bars_letter() {
        let c = choices(["x1", "y2", "z3", "w4", "v5"]);
        assert!(evaluate_qa_rules("Which two things are red?", &c, "B").unwrap().contains(&4));
        assert!(!evaluate_qa_rules("Which two things are red?", &c, "C").unwrap().contains(&4));
        assert!(evaluate_qa_rules("Pick 3 options", &c, "C").unwrap().contains(&4));
    }

    #[test]
    fn duplicate_letters_rejected() {
        let mut c = choices(["a", "b", "c", "d", "e"]);
        c[1].letter = "A".into();
        assert!(evaluate_qa_rules("q", &c, "A").is_err());
    }

    #[test]
    fn risk_mapping() {
        assert_eq!(risk_level(0).unwrap(), RiskLevel::No);
        assert_eq!(risk_level(1).unwrap(), RiskLevel::Low);
        assert_eq!(risk_level(2).unwrap(), RiskLevel::Medium);
        assert_eq!(risk_level(3).unwrap(), RiskLevel::High);
        assert_eq!(risk_level(4).unwrap(), RiskLevel::VeryHigh);
        assert!(risk_level(5).is_err());
    }
}
