use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distractor::{DistractorSource, Distractors};
use super::oracle::recompute_target;
use super::state::{Certainty, WorldState};
use super::tokens::{CharRatio, TokenCounter};
use super::{
    sequence, Fact, GenError, Needle, Query, TaskId, TaskSample, LOCATIONS, OBJECTS, PERSONS,
};

/// Parameters for one generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub task: TaskId,
    pub target_tokens: usize,
    pub token_tolerance: f64,
    pub n_needle_events: usize,
    pub distractors: DistractorSource,
    pub seed: u64,
}

impl GenSpec {
    pub fn new(task: TaskId, target_tokens: usize, seed: u64) -> Self {
        Self {
            task,
            target_tokens,
            token_tolerance: 0.02,
            n_needle_events: default_events(task),
            distractors: DistractorSource::Builtin,
            seed,
        }
    }

    fn validate(&self) -> Result<(), GenError> {
        if self.target_tokens == 0 {
            return Err(GenError::InvalidSpec("target_tokens must be positive".into()));
        }
        if !(self.token_tolerance > 0.0 && self.token_tolerance <= 0.1) {
            return Err(GenError::InvalidSpec(format!(
                "token_tolerance {} outside (0, 0.1]",
                self.token_tolerance
            )));
        }
        if self.n_needle_events < self.task.min_events() {
            return Err(GenError::InvalidSpec(format!(
                "{} needs at least {} needle events",
                self.task,
                self.task.min_events()
            )));
        }
        Ok(())
    }
}

fn default_events(task: TaskId) -> usize {
    match task {
        TaskId::Qa2 => 6,
        TaskId::Qa7 => 6,
        TaskId::Qa10 => 4,
    }
}

/// Mixes a base seed with an index into an independent per-sample seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates a sample using the default `ceil(chars / 4)` token estimator.
pub fn generate_sample(spec: &GenSpec) -> Result<TaskSample, GenError> {
    generate_sample_with(spec, &CharRatio::default())
}

pub fn generate_sample_with(
    spec: &GenSpec,
    counter: &dyn TokenCounter,
) -> Result<TaskSample, GenError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_needle_events;
    let (facts, query) = match spec.task {
        TaskId::Qa2 => build_qa2(&mut rng, n),
        TaskId::Qa7 => build_qa7(&mut rng, n),
        TaskId::Qa10 => build_qa10(&mut rng, n),
    };
    let events = sequence(facts);
    let needle_texts: Vec<String> = events.iter().map(|e| render(&e.fact, &mut rng)).collect();

    let needed = counter.count_tokens(&needle_texts.join(" "));
    if needed > spec.target_tokens {
        return Err(GenError::BudgetTooSmall {
            target: spec.target_tokens,
            needed,
        });
    }

    let mut distractors = Distractors::open(&spec.distractors, &mut rng)?;
    let pool = fill_budget(spec, counter, &needle_texts, &mut distractors, &mut rng)?;

    let mut slots: Vec<usize> = (0..n).map(|_| rng.random_range(0..=pool.len())).collect();
    slots.sort_unstable();

    let mut input = String::new();
    let mut offsets = Vec::with_capacity(n);
    let push = |input: &mut String, piece: &str| {
        if !input.is_empty() {
            input.push(' ');
        }
        let at = input.len();
        input.push_str(piece);
        at
    };
    let mut next_needle = 0;
    for boundary in 0..=pool.len() {
        while next_needle < n && slots[next_needle] == boundary {
            offsets.push(push(&mut input, &needle_texts[next_needle]));
            next_needle += 1;
        }
        if let Some(sentence) = pool.get(boundary) {
            push(&mut input, sentence);
        }
    }

    let len = input.len() as f64;
    let needles = needle_texts
        .into_iter()
        .zip(offsets)
        .map(|(text, offset)| Needle {
            text,
            offset,
            percent: 100.0 * offset as f64 / len,
        })
        .collect();

    let mut sample = TaskSample {
        task: spec.task,
        input,
        question: query.question(),
        target: String::new(),
        needles,
        events: Some(events),
        query: Some(query),
        seed: Some(spec.seed),
    };
    sample.target = recompute_target(&sample)?;
    Ok(sample)
}

fn joined_tokens(counter: &dyn TokenCounter, needles: &[String], pool: &[String]) -> usize {
    let text = needles
        .iter()
        .chain(pool)
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join(" ");
    counter.count_tokens(&text)
}

/// Draws distractor sentences until needles plus distractors land within
/// tolerance of the token target.
fn fill_budget(
    spec: &GenSpec,
    counter: &dyn TokenCounter,
    needles: &[String],
    distractors: &mut Distractors,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<String>, GenError> {
    let target = spec.target_tokens;
    let slack = spec.token_tolerance * target as f64;
    let measure = |pool: &[String]| joined_tokens(counter, needles, pool);

    let mut pool: Vec<String> = Vec::new();
    let mut hi = 64usize;
    loop {
        while pool.len() < hi {
            pool.push(distractors.next_sentence(rng));
        }
        if measure(&pool) >= target {
            break;
        }
        hi *= 2;
    }
    // largest m with measure(pool[..m]) <= target
    let (mut lo, mut up) = (0usize, hi);
    while lo < up {
        let mid = (lo + up).div_ceil(2);
        if measure(&pool[..mid]) <= target {
            lo = mid;
        } else {
            up = mid - 1;
        }
    }
    let m = lo;
    if m == pool.len() {
        pool.push(distractors.next_sentence(rng));
    }
    let dev = |tokens: usize| (tokens as f64 - target as f64).abs();
    let under = measure(&pool[..m]);
    let over = measure(&pool[..m + 1]);
    if dev(under) <= dev(over) && dev(under) <= slack {
        pool.truncate(m);
        return Ok(pool);
    }
    if dev(over) <= slack {
        pool.truncate(m + 1);
        return Ok(pool);
    }

    // Sentences are too coarse for the tolerance: pad with a cut-down copy
    // of the next sentence.
    let words: Vec<String> = pool[m]
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .map(str::to_string)
        .collect();
    pool.truncate(m + 1);
    for w in 1..=words.len() {
        pool[m] = format!("{}.", words[..w].join(" "));
        if dev(measure(&pool)) <= slack {
            return Ok(pool);
        }
    }
    Err(GenError::BudgetUnattainable {
        target,
        tolerance: spec.token_tolerance,
    })
}

struct Cast {
    persons: Vec<&'static str>,
    objects: Vec<&'static str>,
    locations: Vec<&'static str>,
}

impl Cast {
    fn draw(rng: &mut ChaCha8Rng, persons: usize, objects: usize, locations: usize) -> Self {
        let mut take = |pool: &[&'static str], k: usize| {
            let mut v = pool.to_vec();
            v.shuffle(rng);
            v.truncate(k);
            v
        };
        Cast {
            persons: take(PERSONS, persons),
            objects: take(OBJECTS, objects),
            locations: take(LOCATIONS, locations),
        }
    }
}

/// Accumulates facts, keeping only those valid in the running state.
struct Story {
    state: WorldState,
    facts: Vec<Fact>,
}

impl Story {
    fn new() -> Self {
        Self {
            state: WorldState::new(),
            facts: Vec::new(),
        }
    }

    fn push(&mut self, fact: Fact) {
        self.state
            .apply(&fact)
            .expect("generator emitted an invalid event");
        self.facts.push(fact);
    }

    fn try_push(&mut self, fact: Fact) -> bool {
        let mut next = self.state.clone();
        if next.apply(&fact).is_ok() {
            self.state = next;
            self.facts.push(fact);
            true
        } else {
            false
        }
    }

    fn move_somewhere(&mut self, rng: &mut ChaCha8Rng, actor: &str, locations: &[&str]) {
        let current = self.state.definite_location(actor).map(str::to_string);
        let choices: Vec<&&str> = locations
            .iter()
            .filter(|l| Some(**l) != current.as_deref())
            .collect();
        let location = choices.choose(rng).map(|l| **l).unwrap_or(locations[0]);
        self.push(Fact::Move {
            actor: actor.into(),
            location: location.into(),
        });
    }

    /// Grab, drop or give among `objects`; falls back to a move.
    fn object_filler(
        &mut self,
        rng: &mut ChaCha8Rng,
        actor: &str,
        cast: &Cast,
        objects: &[&str],
        allow_give: bool,
    ) {
        let free: Vec<&str> = objects
            .iter()
            .copied()
            .filter(|o| self.state.object_place(o).is_none_or(|p| !matches!(p, super::ObjectPlace::HeldBy(_))))
            .collect();
        let held: Vec<String> = self
            .state
            .holdings(actor)
            .iter()
            .filter(|o| objects.contains(&o.as_str()))
            .cloned()
            .collect();
        let pushed = match rng.random_range(0..if allow_give { 3u8 } else { 2 }) {
            0 => free.choose(rng).is_some_and(|o| {
                let fact = Fact::Grab {
                    actor: actor.into(),
                    object: (*o).into(),
                };
                self.try_push(fact)
            }),
            1 => {
                self.state.definite_location(actor).is_some()
                    && held.choose(rng).is_some_and(|o| {
                        let fact = Fact::Drop {
                            actor: actor.into(),
                            object: o.clone(),
                        };
                        self.try_push(fact)
                    })
            }
            _ => {
                let others: Vec<&&str> = cast.persons.iter().filter(|p| **p != actor).collect();
                match (held.choose(rng).cloned(), others.choose(rng)) {
                    (Some(o), Some(r)) => self.try_push(Fact::Give {
                        actor: actor.into(),
                        object: o,
                        recipient: (**r).into(),
                    }),
                    _ => false,
                }
            }
        };
        if !pushed {
            self.move_somewhere(rng, actor, &cast.locations);
        }
    }
}

fn build_qa2(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Fact>, Query) {
    let cast = Cast::draw(rng, 3, 3, 5);
    let (holder, object) = (cast.persons[0], cast.objects[0]);
    let grab_at = rng.random_range(0..n - 1);
    let move_at = rng.random_range(grab_at + 1..n);
    let others: Vec<&str> = cast.objects[1..].to_vec();
    let mut story = Story::new();
    for i in 0..n {
        if i == grab_at {
            story.push(Fact::Grab {
                actor: holder.into(),
                object: object.into(),
            });
        } else if i == move_at {
            story.move_somewhere(rng, holder, &cast.locations);
        } else {
            let eligible: Vec<&str> = if i > move_at {
                cast.persons[1..].to_vec()
            } else {
                cast.persons.clone()
            };
            let actor = *eligible.choose(rng).expect("cast has persons");
            if rng.random_bool(0.6) {
                story.move_somewhere(rng, actor, &cast.locations);
            } else {
                story.object_filler(rng, actor, &cast, &others, false);
            }
        }
    }
    (
        story.facts,
        Query::ObjectLocation {
            object: object.into(),
        },
    )
}

fn build_qa7(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Fact>, Query) {
    let cast = Cast::draw(rng, 3, 4, 4);
    let person = cast.persons[0];
    let reserved = (cast.objects[0], cast.objects[1]);
    let shared: Vec<&str> = cast.objects[2..].to_vec();
    let first = rng.random_range(0..n - 1);
    let second = rng.random_range(first + 1..n);
    let mut story = Story::new();
    for i in 0..n {
        if i == first {
            story.push(Fact::Grab {
                actor: person.into(),
                object: reserved.0.into(),
            });
        } else if i == second {
            let recipient = *cast.persons[1..].choose(rng).expect("cast has persons");
            if rng.random_bool(0.5) {
                story.push(Fact::Grab {
                    actor: person.into(),
                    object: reserved.1.into(),
                });
            } else {
                story.push(Fact::Give {
                    actor: person.into(),
                    object: reserved.0.into(),
                    recipient: recipient.into(),
                });
            }
        } else {
            let actor = if rng.random_bool(0.5) {
                person
            } else {
                *cast.persons[1..].choose(rng).expect("cast has persons")
            };
            if rng.random_bool(0.3) {
                story.move_somewhere(rng, actor, &cast.locations);
            } else {
                story.object_filler(rng, actor, &cast, &shared, true);
            }
        }
    }
    (
        story.facts,
        Query::HeldCount {
            person: person.into(),
        },
    )
}

fn build_qa10(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Fact>, Query) {
    let cast = Cast::draw(rng, 3, 0, 6);
    let person = cast.persons[0];
    let anchor = rng.random_range(0..n);
    let mut story = Story::new();
    let pair = |rng: &mut ChaCha8Rng| {
        let two: Vec<&&str> = cast.locations.choose_multiple(rng, 2).collect();
        [two[0].to_string(), two[1].to_string()]
    };
    for i in 0..n {
        let actor = if i == anchor {
            person
        } else {
            *cast.persons.choose(rng).expect("cast has persons")
        };
        let kind = if i == anchor {
            rng.random_range(0..2u8)
        } else {
            rng.random_range(0..3u8)
        };
        match kind {
            0 => story.move_somewhere(rng, actor, &cast.locations),
            1 => story.push(Fact::EitherAt {
                actor: actor.into(),
                locations: pair(rng),
            }),
            _ => {
                let location = *cast.locations.choose(rng).expect("cast has locations");
                if !story.try_push(Fact::NotAt {
                    actor: actor.into(),
                    location: location.into(),
                }) {
                    story.move_somewhere(rng, actor, &cast.locations);
                }
            }
        }
    }

    let candidates = story.state.candidates(person).expect("anchor mentions person");
    let inside: Vec<&str> = cast
        .locations
        .iter()
        .copied()
        .filter(|l| candidates.contains(*l))
        .collect();
    let outside: Vec<&str> = cast
        .locations
        .iter()
        .copied()
        .filter(|l| !candidates.contains(*l))
        .collect();
    let mut classes = Vec::new();
    if !inside.is_empty() {
        classes.push(if candidates.len() == 1 {
            Certainty::Yes
        } else {
            Certainty::Maybe
        });
    }
    if !outside.is_empty() {
        classes.push(Certainty::No);
    }
    let class = *classes.choose(rng).expect("some answer class is reachable");
    let location = match class {
        Certainty::No => *outside.choose(rng).expect("non-empty"),
        _ => *inside.choose(rng).expect("non-empty"),
    };
    (
        story.facts,
        Query::PersonAt {
            person: person.into(),
            location: location.into(),
        },
    )
}

fn render(fact: &Fact, rng: &mut ChaCha8Rng) -> String {
    let pick = |rng: &mut ChaCha8Rng, v: &[&'static str]| *v.choose(rng).expect("templates");
    match fact {
        Fact::Move { actor, location } => {
            let verb = pick(
                rng,
                &["went to", "moved to", "travelled to", "journeyed to", "went back to"],
            );
            format!("{actor} {verb} the {location}.")
        }
        Fact::Grab { actor, object } => {
            let verb = pick(rng, &["got", "grabbed", "picked up", "took"]);
            format!("{actor} {verb} the {object}.")
        }
        Fact::Drop { actor, object } => {
            let verb = pick(rng, &["dropped", "put down", "discarded", "left"]);
            format!("{actor} {verb} the {object}.")
        }
        Fact::Give {
            actor,
            object,
            recipient,
        } => {
            let verb = pick(rng, &["gave", "handed", "passed"]);
            format!("{actor} {verb} the {object} to {recipient}.")
        }
        Fact::EitherAt { actor, locations } => {
            format!("{actor} is either in the {} or the {}.", locations[0], locations[1])
        }
        Fact::NotAt { actor, location } => format!("{actor} is not in the {location}."),
    }
}
