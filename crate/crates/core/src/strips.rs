//! STRIPS action semantics: state templates, initial/final state generation
//! for an action sequence, and stepwise replay validation.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::kb::{Catalog, ClassId, StatePredicate};

#[derive(Debug, Error, PartialEq)]
pub enum StripsError {
    #[error("the action sequence is empty")]
    EmptySequence,
    #[error("action class {0} has no schema in the catalog")]
    UndefinedSchema(ClassId),
    #[error("unknown state template `{0}`")]
    UnknownTemplate(String),
    #[error("template `{name}` takes {expected} argument(s), got {found}")]
    ArityMismatch { name: String, expected: usize, found: usize },
    #[error("cannot parse predicate `{0}`")]
    Syntax(String),
}

/// Name and arity of a state template such as `IsOpen(x)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateTemplate {
    pub name: String,
    pub arity: usize,
}

/// The state template list. Predicates refer to templates by position.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateTemplateCatalog {
    templates: Vec<StateTemplate>,
}

// Object templates take `x`, person templates take `P`; `At` and the
// two-place templates take both.
const SHIPPED_TEMPLATES: [(&str, usize); 32] = [
    ("Container", 1),
    ("CapacityIncreased", 1),
    ("CapacityDecreased", 1),
    ("IsOpen", 1),
    ("IsClosed", 1),
    ("IsOn", 1),
    ("IsOff", 1),
    ("IsEaten", 1),
    ("IsAwake", 1),
    ("IsSleeping", 1),
    ("Food", 1),
    ("Watched", 2),
    ("Talked", 1),
    ("IsFixed", 1),
    ("IsBroken", 1),
    ("Clothes", 1),
    ("Wearing", 2),
    ("At", 2),
    ("Played", 2),
    ("IsWet", 1),
    ("InHand", 2),
    ("Reachable", 2),
    ("IsWarmed", 1),
    ("IsTidy", 1),
    ("IsMessy", 1),
    ("IsClean", 1),
    ("IsDirty", 1),
    ("IsSitting", 1),
    ("IsStanding", 1),
    ("GetInfoFrom", 2),
    ("Worked", 2),
    ("IsHappy", 1),
];

impl StateTemplateCatalog {
    /// The 32 shipped templates.
    pub fn shipped() -> Self {
        Self::new(SHIPPED_TEMPLATES.iter().map(|&(name, arity)| StateTemplate { name: name.into(), arity }))
            .expect("shipped templates are valid")
    }

    pub fn new(templates: impl IntoIterator<Item = StateTemplate>) -> Result<Self, StripsError> {
        let templates: Vec<_> = templates.into_iter().collect();
        let mut seen = BTreeSet::new();
        for t in &templates {
            if !seen.insert(t.name.to_ascii_lowercase()) {
                return Err(StripsError::Syntax(format!("duplicate template {}", t.name)));
            }
            if !(1..=2).contains(&t.arity) {
                return Err(StripsError::ArityMismatch { name: t.name.clone(), expected: 2, found: t.arity });
            }
        }
        Ok(Self { templates })
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn templates(&self) -> &[StateTemplate] {
        &self.templates
    }

    pub fn id_of(&self, name: &str) -> Option<u16> {
        self.templates
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
            .map(|i| i as u16)
    }

    /// Grounds a template by name, checking the arity.
    pub fn predicate(&self, name: &str, args: &[&str]) -> Result<StatePredicate, StripsError> {
        let id = self.id_of(name).ok_or_else(|| StripsError::UnknownTemplate(name.into()))?;
        let expected = self.templates[id as usize].arity;
        if args.len() != expected {
            return Err(StripsError::ArityMismatch { name: name.into(), expected, found: args.len() });
        }
        Ok(StatePredicate::new(id, args.iter().copied()))
    }

    /// Parses `Name(arg, ...)`; template names match case-insensitively.
    pub fn parse(&self, text: &str) -> Result<StatePredicate, StripsError> {
        let text = text.trim();
        let open = text.find('(').ok_or_else(|| StripsError::Syntax(text.into()))?;
        if !text.ends_with(')') {
            return Err(StripsError::Syntax(text.into()));
        }
        let name = text[..open].trim();
        let args: Vec<&str> = text[open + 1..text.len() - 1]
            .split(',')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .collect();
        self.predicate(name, &args)
    }

    pub fn display<'a>(&'a self, predicate: &'a StatePredicate) -> PredicateDisplay<'a> {
        PredicateDisplay { catalog: self, predicate }
    }
}

pub struct PredicateDisplay<'a> {
    catalog: &'a StateTemplateCatalog,
    predicate: &'a StatePredicate,
}

impl fmt::Display for PredicateDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.catalog.templates.get(self.predicate.template as usize) {
            Some(t) => write!(f, "{}({})", t.name, self.predicate.args.join(", ")),
            None => write!(f, "#{}({})", self.predicate.template, self.predicate.args.join(", ")),
        }
    }
}

pub type StateSet = BTreeSet<StatePredicate>;

/// Initial and final states of an action sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedStates {
    pub init: StateSet,
    pub final_state: StateSet,
}

/// Infers the states that must hold before `seq` starts and the states left
/// after executing it.
///
/// A later action's precondition joins the initial state unless it is
/// already there or was produced by an earlier action's add effects. The
/// final state is obtained by replaying every action from the initial state.
pub fn state_generator(seq: &[ClassId], catalog: &Catalog) -> Result<GeneratedStates, StripsError> {
    let (first, rest) = seq.split_first().ok_or(StripsError::EmptySequence)?;
    let lookup = |id: ClassId| catalog.get(id).ok_or(StripsError::UndefinedSchema(id));

    let first = lookup(*first)?;
    let mut init = first.pre.clone();
    let mut produced = first.add.clone();
    for &id in rest {
        let class = lookup(id)?;
        for s in &class.pre {
            if !init.contains(s) && !produced.contains(s) {
                init.insert(s.clone());
            }
        }
        produced.extend(class.add.iter().cloned());
    }

    let mut current = init.clone();
    for &id in seq {
        let class = lookup(id)?;
        for s in &class.del {
            current.remove(s);
        }
        current.extend(class.add.iter().cloned());
    }
    Ok(GeneratedStates { init, final_state: current })
}

/// Result of simulating STRIPS execution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Replay {
    /// Index of the first action whose preconditions did not hold.
    pub first_violation: Option<usize>,
    /// State after the last executed action.
    pub final_state: StateSet,
}

impl Replay {
    pub fn ok(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Executes `seq` from `init`, stopping at the first action whose
/// preconditions are not all satisfied.
pub fn replay_validate(seq: &[ClassId], init: &StateSet, catalog: &Catalog) -> Result<Replay, StripsError> {
    let mut state = init.clone();
    for (step, &id) in seq.iter().enumerate() {
        let class = catalog.get(id).ok_or(StripsError::UndefinedSchema(id))?;
        if !class.pre.is_subset(&state) {
            return Ok(Replay { first_violation: Some(step), final_state: state });
        }
        state = &(&state - &class.del) | &class.add;
    }
    Ok(Replay { first_violation: None, final_state: state })
}
