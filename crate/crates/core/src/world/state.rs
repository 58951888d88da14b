use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Fact, FactEvent, WorldError, LOCATIONS};

/// Where a person may be.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Whereabouts {
    /// Mentioned, but no location statement yet: any location of the universe.
    Unknown,
    OneOf(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectPlace {
    HeldBy(String),
    At(String),
    /// Dropped while the holder's location was indefinite.
    Indefinite(BTreeSet<String>),
}

/// Answer to "is P at L?" over all worlds consistent with what was said.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Certainty {
    Yes,
    No,
    Maybe,
}

impl Certainty {
    pub fn as_str(self) -> &'static str {
        match self {
            Certainty::Yes => "yes",
            Certainty::No => "no",
            Certainty::Maybe => "maybe",
        }
    }
}

/// Incrementally maintained world state.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WorldState {
    universe: BTreeSet<String>,
    person_location: BTreeMap<String, Whereabouts>,
    holdings: BTreeMap<String, Vec<String>>,
    object_place: BTreeMap<String, ObjectPlace>,
}

impl WorldState {
    /// Empty world whose location universe is the built-in vocabulary.
    pub fn new() -> Self {
        Self::with_universe(LOCATIONS.iter().copied())
    }

    pub fn with_universe<I, S>(locations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            universe: locations.into_iter().map(Into::into).collect(),
            ..Self::default()
        }
    }

    pub fn universe(&self) -> &BTreeSet<String> {
        &self.universe
    }

    pub fn knows_person(&self, person: &str) -> bool {
        self.person_location.contains_key(person)
    }

    pub fn whereabouts(&self, person: &str) -> Option<&Whereabouts> {
        self.person_location.get(person)
    }

    /// Candidate locations of a mentioned person, with `Unknown` expanded to
    /// the universe.
    pub fn candidates(&self, person: &str) -> Option<BTreeSet<String>> {
        self.person_location.get(person).map(|w| match w {
            Whereabouts::Unknown => self.universe.clone(),
            Whereabouts::OneOf(set) => set.clone(),
        })
    }

    /// The person's location when it is pinned to a single place.
    pub fn definite_location(&self, person: &str) -> Option<&str> {
        match self.person_location.get(person)? {
            Whereabouts::OneOf(set) if set.len() == 1 => set.iter().next().map(String::as_str),
            Whereabouts::OneOf(_) | Whereabouts::Unknown => None,
        }
    }

    pub fn holdings(&self, person: &str) -> &[String] {
        self.holdings.get(person).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn holder_of(&self, object: &str) -> Option<&str> {
        match self.object_place.get(object)? {
            ObjectPlace::HeldBy(p) => Some(p),
            _ => None,
        }
    }

    pub fn object_place(&self, object: &str) -> Option<&ObjectPlace> {
        self.object_place.get(object)
    }

    /// Resolved location of an object: its own place, or its holder's
    /// location when that is definite.
    pub fn object_location(&self, object: &str) -> Option<&str> {
        match self.object_place.get(object)? {
            ObjectPlace::At(loc) => Some(loc),
            ObjectPlace::HeldBy(p) => self.definite_location(p),
            ObjectPlace::Indefinite(_) => None,
        }
    }

    /// "Is `person` at `location`?" partitioned over consistent worlds.
    pub fn certainty(&self, person: &str, location: &str) -> Result<Certainty, WorldError> {
        let candidates = self
            .candidates(person)
            .ok_or_else(|| WorldError::UnknownPerson(person.to_string()))?;
        Ok(if !candidates.contains(location) {
            Certainty::No
        } else if candidates.len() == 1 {
            Certainty::Yes
        } else {
            Certainty::Maybe
        })
    }

    fn mention(&mut self, person: &str) {
        self.person_location
            .entry(person.to_string())
            .or_insert(Whereabouts::Unknown);
    }

    /// Applies one fact in place. On error the state is left untouched.
    pub fn apply(&mut self, fact: &Fact) -> Result<(), WorldError> {
        match fact {
            Fact::Move { actor, location } => {
                self.universe.insert(location.clone());
                self.person_location.insert(
                    actor.clone(),
                    Whereabouts::OneOf(BTreeSet::from([location.clone()])),
                );
            }
            Fact::Grab { actor, object } => {
                if let Some(holder) = self.holder_of(object) {
                    if holder != actor {
                        return Err(WorldError::GrabConflict {
                            object: object.clone(),
                            holder: holder.to_string(),
                        });
                    }
                    return Ok(());
                }
                self.mention(actor);
                self.holdings
                    .entry(actor.clone())
                    .or_default()
                    .push(object.clone());
                self.object_place
                    .insert(object.clone(), ObjectPlace::HeldBy(actor.clone()));
            }
            Fact::Drop { actor, object } => {
                if self.holder_of(object) != Some(actor.as_str()) {
                    return Err(WorldError::DropNotHeld {
                        actor: actor.clone(),
                        object: object.clone(),
                    });
                }
                let place = match self.definite_location(actor) {
                    Some(loc) => ObjectPlace::At(loc.to_string()),
                    None => ObjectPlace::Indefinite(self.candidates(actor).unwrap_or_default()),
                };
                self.release(actor, object);
                self.object_place.insert(object.clone(), place);
            }
            Fact::Give {
                actor,
                object,
                recipient,
            } => {
                if self.holder_of(object) != Some(actor.as_str()) {
                    return Err(WorldError::GiveNotHeld {
                        actor: actor.clone(),
                        object: object.clone(),
                    });
                }
                self.mention(recipient);
                self.release(actor, object);
                self.holdings
                    .entry(recipient.clone())
                    .or_default()
                    .push(object.clone());
                self.object_place
                    .insert(object.clone(), ObjectPlace::HeldBy(recipient.clone()));
            }
            Fact::EitherAt { actor, locations } => {
                let [a, b] = locations;
                if a == b {
                    return Err(WorldError::InvalidEvent(format!(
                        "{actor} is either in {a} or {b}: locations must differ"
                    )));
                }
                self.universe.insert(a.clone());
                self.universe.insert(b.clone());
                self.person_location.insert(
                    actor.clone(),
                    Whereabouts::OneOf(BTreeSet::from([a.clone(), b.clone()])),
                );
            }
            Fact::NotAt { actor, location } => {
                self.universe.insert(location.clone());
                let mut set = self.candidates(actor).unwrap_or_else(|| self.universe.clone());
                set.remove(location);
                if set.is_empty() {
                    return Err(WorldError::EmptyCandidateSet {
                        actor: actor.clone(),
                        location: location.clone(),
                    });
                }
                self.person_location
                    .insert(actor.clone(), Whereabouts::OneOf(set));
            }
        }
        Ok(())
    }

    fn release(&mut self, actor: &str, object: &str) {
        if let Some(held) = self.holdings.get_mut(actor) {
            held.retain(|o| o != object);
        }
    }
}

/// Functional form of [`WorldState::apply`].
pub fn apply_event(state: &WorldState, event: &FactEvent) -> Result<WorldState, WorldError> {
    let mut next = state.clone();
    next.apply(&event.fact)?;
    Ok(next)
}
