use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::GenError;
use crate::retriever::split_sentences;

/// Where haystack text comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum DistractorSource {
    /// Seeded template sentences over a neutral vocabulary.
    Builtin,
    /// Plain-text corpus, consumed sentence by sentence.
    File(PathBuf),
}

impl FromStr for DistractorSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(if s == "builtin" {
            DistractorSource::Builtin
        } else {
            DistractorSource::File(PathBuf::from(s))
        })
    }
}

impl From<String> for DistractorSource {
    fn from(s: String) -> Self {
        match s.parse() {
            Ok(d) => d,
            Err(e) => match e {},
        }
    }
}

impl From<DistractorSource> for String {
    fn from(d: DistractorSource) -> String {
        d.to_string()
    }
}

impl fmt::Display for DistractorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DistractorSource::Builtin => f.write_str("builtin"),
            DistractorSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

const SUBJECTS: &[&str] = &[
    "The old sailor",
    "A tired merchant",
    "The young painter",
    "The village baker",
    "A quiet stranger",
    "The captain",
    "An elderly farmer",
    "The night watchman",
    "A travelling musician",
    "The blacksmith",
    "The miller's daughter",
    "The innkeeper",
    "A shepherd",
    "The parson",
];

const VERBS: &[&str] = &[
    "walked slowly along",
    "stared for a while at",
    "spoke at length about",
    "thought often of",
    "wrote a long letter about",
    "sang softly near",
    "waited patiently beside",
    "argued quietly about",
    "remembered little of",
    "painted a picture of",
    "rested for an hour under",
    "listened to stories of",
];

const SCENES: &[&str] = &[
    "the frozen river",
    "the distant hills",
    "the harvest moon",
    "the narrow bridge",
    "the empty harbor",
    "the winter storm",
    "the ancient oak",
    "the silent mill",
    "the stone chapel",
    "the muddy road",
    "the market square",
    "the grey cliffs",
    "the northern sea",
    "the old cathedral",
];

const TAILS: &[&str] = &[
    "",
    " before dawn",
    " during the long winter",
    " after the rains",
    " on a cold evening",
    " as the bells rang",
    " while the fire burned low",
    " without a word",
];

const WEATHER: &[&str] = &[
    "grey and still",
    "bright but bitter",
    "heavy with fog",
    "soft and warm",
    "loud with wind",
    "thick with snow",
];

const TIMES: &[&str] = &[
    "that morning",
    "for most of the week",
    "through the night",
    "by the time the carts returned",
    "long after supper",
];

/// Every fragment the builtin generator can emit.
pub const DISTRACTOR_VOCABULARY: &[&[&str]] = &[SUBJECTS, VERBS, SCENES, TAILS, WEATHER, TIMES];

/// One builtin distractor sentence.
pub fn builtin_sentence<R: Rng + ?Sized>(rng: &mut R) -> String {
    let pick = |rng: &mut R, list: &[&'static str]| *list.choose(rng).expect("non-empty list");
    match rng.random_range(0..4u8) {
        0 | 1 => format!(
            "{} {} {}{}.",
            pick(rng, SUBJECTS),
            pick(rng, VERBS),
            pick(rng, SCENES),
            pick(rng, TAILS)
        ),
        2 => {
            let scene = pick(rng, SCENES);
            let mut chars = scene.chars();
            let first = chars.next().map(|c| c.to_ascii_uppercase()).unwrap_or('T');
            format!(
                "{first}{} was {} {}.",
                chars.as_str(),
                pick(rng, WEATHER),
                pick(rng, TIMES)
            )
        }
        _ => format!(
            "{} {} {}, and nobody spoke of it again.",
            pick(rng, SUBJECTS),
            pick(rng, VERBS),
            pick(rng, SCENES)
        ),
    }
}

/// An endless stream of distractor sentences.
pub(crate) enum Distractors {
    Builtin,
    Corpus { sentences: Vec<String>, next: usize },
}

impl Distractors {
    pub(crate) fn open<R: Rng + ?Sized>(
        source: &DistractorSource,
        rng: &mut R,
    ) -> Result<Self, GenError> {
        match source {
            DistractorSource::Builtin => Ok(Distractors::Builtin),
            DistractorSource::File(path) => {
                let unreadable = |reason: String| GenError::DistractorUnreadable {
                    path: path.display().to_string(),
                    reason,
                };
                let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
                let sentences: Vec<String> = split_sentences(&text)
                    .into_iter()
                    .map(|s| s.text.split_whitespace().collect::<Vec<_>>().join(" "))
                    .filter(|s| !s.is_empty())
                    .collect();
                if sentences.is_empty() {
                    return Err(unreadable("no sentences found".into()));
                }
                let next = rng.random_range(0..sentences.len());
                Ok(Distractors::Corpus { sentences, next })
            }
        }
    }

    pub(crate) fn next_sentence<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        match self {
            Distractors::Builtin => builtin_sentence(rng),
            Distractors::Corpus { sentences, next } => {
                let s = sentences[*next].clone();
                *next = (*next + 1) % sentences.len();
                s
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{LOCATIONS, OBJECTS, PERSONS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split(|c: char| !c.is_alphanumeric())
            .filter(|w| !w.is_empty())
            .map(str::to_lowercase)
            .collect()
    }

    #[test]
    fn vocabulary_never_names_task_entities() {
        let forbidden: Vec<String> = PERSONS
            .iter()
            .chain(OBJECTS)
            .chain(LOCATIONS)
            .map(|w| w.to_lowercase())
            .chain(["objects", "carrying", "answer"].map(String::from))
            .collect();
        for list in DISTRACTOR_VOCABULARY {
            for fragment in *list {
                for w in words(fragment) {
                    assert!(!forbidden.contains(&w), "{w} in {fragment}");
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let s = builtin_sentence(&mut rng);
            assert!(s.ends_with('.'));
            assert!(words(&s).iter().all(|w| !forbidden.contains(w)), "{s}");
        }
    }

    #[test]
    fn corpus_cycles() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        std::fs::write(&path, "One here.\nTwo\nthere! Three?").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut d = Distractors::open(&DistractorSource::File(path), &mut rng).unwrap();
        let got: Vec<String> = (0..6).map(|_| d.next_sentence(&mut rng)).collect();
        assert!(got.contains(&"Two there!".to_string()));
        assert_eq!(got[0], got[3]);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = Distractors::open(&DistractorSource::File("/nonexistent/x.txt".into()), &mut rng);
        assert!(matches!(err, Err(GenError::DistractorUnreadable { .. })));
    }
}
