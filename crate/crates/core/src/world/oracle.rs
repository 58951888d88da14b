use std::collections::HashMap;

use super::state::WorldState;
use super::{Fact, FactEvent, Query, TaskSample, WorldError};

/// Replays events in order over the default universe.
pub fn replay(events: &[FactEvent]) -> Result<WorldState, WorldError> {
    replay_from(WorldState::new(), events)
}

pub fn replay_from(mut state: WorldState, events: &[FactEvent]) -> Result<WorldState, WorldError> {
    for event in events {
        state.apply(&event.fact)?;
    }
    Ok(state)
}

/// Final location of `object` (QA2).
pub fn oracle_qa2(events: &[FactEvent], object: &str) -> Result<String, WorldError> {
    let state = replay(events)?;
    state
        .object_location(object)
        .map(str::to_string)
        .ok_or_else(|| WorldError::Unresolvable(object.to_string()))
}

/// Number of objects `person` carries (QA7), rendered as a count word.
pub fn oracle_qa7(events: &[FactEvent], person: &str) -> Result<String, WorldError> {
    let state = replay(events)?;
    if !state.knows_person(person) {
        return Err(WorldError::UnknownPerson(person.to_string()));
    }
    Ok(count_word(state.holdings(person).len()))
}

/// Whether `person` is at `location` (QA10): "yes", "no" or "maybe".
pub fn oracle_qa10(events: &[FactEvent], person: &str, location: &str) -> Result<String, WorldError> {
    let state = replay(events)?;
    Ok(state.certainty(person, location)?.as_str().to_string())
}

const COUNT_WORDS: [&str; 11] = [
    "none", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

/// bAbI-style count answer: "none", "one", ... "ten", digits beyond.
pub fn count_word(n: usize) -> String {
    COUNT_WORDS
        .get(n)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

/// Inverse of [`count_word`] for 0..=10, also accepting "zero".
pub fn count_value(word: &str) -> Option<usize> {
    if word == "zero" {
        return Some(0);
    }
    COUNT_WORDS.iter().position(|w| *w == word)
}

/// Recomputes a generated sample's target from its events and query.
pub fn recompute_target(sample: &TaskSample) -> Result<String, WorldError> {
    let events = sample.events.as_deref().ok_or(WorldError::MissingEvents)?;
    match sample.query.as_ref().ok_or(WorldError::MissingEvents)? {
        Query::ObjectLocation { object } => oracle_qa2(events, object),
        Query::HeldCount { person } => oracle_qa7(events, person),
        Query::PersonAt { person, location } => oracle_qa10(events, person, location),
    }
}

/// Indices (into `sample.needles`) of the events the answer depends on.
///
/// QA2: the event that put the object in its final holder's hands and the
/// holder's last move afterwards (or, for a dropped object, the drop and the
/// dropper's last move before it). QA7: every transfer touching the person.
/// QA10: the person's statements from the last definite or disjunctive one on.
pub fn supporting_needles(sample: &TaskSample) -> Result<Vec<usize>, WorldError> {
    let events = sample.events.as_deref().ok_or(WorldError::MissingEvents)?;
    let query = sample.query.as_ref().ok_or(WorldError::MissingEvents)?;
    let mut out = match query {
        Query::ObjectLocation { object } => qa2_support(events, object)?,
        Query::HeldCount { person } => events
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                e.fact.object().is_some() && e.fact.mentions_person(person)
            })
            .map(|(i, _)| i)
            .collect(),
        Query::PersonAt { person, .. } => {
            let own: Vec<usize> = events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.fact.actor() == person)
                .map(|(i, _)| i)
                .collect();
            let reset = own.iter().rposition(|&i| {
                matches!(events[i].fact, Fact::Move { .. } | Fact::EitherAt { .. })
            });
            match reset {
                Some(r) => own[r..].to_vec(),
                None => own,
            }
        }
    };
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn qa2_support(events: &[FactEvent], object: &str) -> Result<Vec<usize>, WorldError> {
    let mut state = WorldState::new();
    let mut last_move: HashMap<&str, usize> = HashMap::new();
    let mut placed_by: Option<usize> = None;
    let mut move_after: Option<usize> = None;
    for (i, event) in events.iter().enumerate() {
        state.apply(&event.fact)?;
        match &event.fact {
            Fact::Move { actor, .. } => {
                last_move.insert(actor, i);
                if state.holder_of(object) == Some(actor.as_str()) {
                    move_after = Some(i);
                }
            }
            Fact::Grab { object: o, .. } | Fact::Give { object: o, .. } if o == object => {
                placed_by = Some(i);
                move_after = None;
            }
            Fact::Drop { actor, object: o } if o == object => {
                placed_by = Some(i);
                move_after = last_move.get(actor.as_str()).copied();
            }
            _ => {}
        }
    }
    let placed = placed_by.ok_or_else(|| WorldError::Unresolvable(object.to_string()))?;
    Ok(std::iter::once(placed).chain(move_after).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::sequence;

    fn mv(a: &str, l: &str) -> Fact {
        Fact::Move {
            actor: a.into(),
            location: l.into(),
        }
    }
    fn grab(a: &str, o: &str) -> Fact {
        Fact::Grab {
            actor: a.into(),
            object: o.into(),
        }
    }
    fn drop(a: &str, o: &str) -> Fact {
        Fact::Drop {
            actor: a.into(),
            object: o.into(),
        }
    }
    fn give(a: &str, o: &str, r: &str) -> Fact {
        Fact::Give {
            actor: a.into(),
            object: o.into(),
            recipient: r.into(),
        }
    }

    #[test]
    fn qa2_bottle_on_balcony() {
        let ev = sequence([
            mv("Charlie", "kitchen"),
            grab("Charlie", "bottle"),
            mv("Charlie", "balcony"),
        ]);
        assert_eq!(oracle_qa2(&ev, "bottle").unwrap(), "balcony");
    }

    #[test]
    fn qa2_apple_in_kitchen() {
        let ev = sequence([mv("Daniel", "garden"), grab("Daniel", "apple"), mv("Daniel", "kitchen")]);
        assert_eq!(oracle_qa2(&ev, "apple").unwrap(), "kitchen");
    }

    #[test]
    fn qa2_dropped_object_stays() {
        let ev = sequence([mv("A", "hall"), grab("A", "ball"), drop("A", "ball"), mv("A", "garden")]);
        assert_eq!(oracle_qa2(&ev, "ball").unwrap(), "hall");
    }

    #[test]
    fn qa2_unresolvable() {
        let ev = sequence([grab("A", "ball")]);
        assert!(matches!(oracle_qa2(&ev, "ball"), Err(WorldError::Unresolvable(_))));
        assert!(matches!(oracle_qa2(&ev, "milk"), Err(WorldError::Unresolvable(_))));
    }

    #[test]
    fn qa7_counts() {
        let ev = sequence([grab("Mary", "milk"), grab("Mary", "ball"), give("Mary", "ball", "John")]);
        assert_eq!(oracle_qa7(&ev, "Mary").unwrap(), "one");
        assert_eq!(oracle_qa7(&ev, "John").unwrap(), "one");

        let ev = sequence([mv("Mary", "office"), mv("Mary", "garden")]);
        assert_eq!(oracle_qa7(&ev, "Mary").unwrap(), "none");

        let ev = sequence([
            mv("M", "office"),
            grab("M", "a"),
            grab("M", "b"),
            drop("M", "a"),
            grab("M", "c"),
        ]);
        assert_eq!(oracle_qa7(&ev, "M").unwrap(), "two");
        assert!(matches!(oracle_qa7(&ev, "Zed"), Err(WorldError::UnknownPerson(_))));
    }

    #[test]
    fn qa10_answers() {
        let ev = sequence([Fact::EitherAt {
            actor: "John".into(),
            locations: ["classroom".into(), "playground".into()],
        }]);
        assert_eq!(oracle_qa10(&ev, "John", "classroom").unwrap(), "maybe");
        assert_eq!(oracle_qa10(&ev, "John", "office").unwrap(), "no");
        let ev = sequence([mv("John", "office")]);
        assert_eq!(oracle_qa10(&ev, "John", "office").unwrap(), "yes");
        assert_eq!(oracle_qa10(&ev, "John", "kitchen").unwrap(), "no");
        assert!(oracle_qa10(&ev, "Mary", "kitchen").is_err());
    }

    #[test]
    fn count_words_round_trip() {
        for n in 0..=10 {
            assert_eq!(count_value(&count_word(n)), Some(n));
        }
        assert_eq!(count_word(12), "12");
    }
}
