//! Name-keyed strategy registries for planners and link models.

use crate::comms::{CommsConfig, DropoutLink, HorizonLink, LinkModel};
use crate::coordinator::{CoordinatorConfig, GreedyPlanner, NoPlanner, SortiePlanner};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unknown {kind} `{name}` (known: {})", known.join(", "))]
pub struct UnknownStrategy {
    pub kind: &'static str,
    pub name: String,
    pub known: Vec<String>,
}

type Factory<T, P> = Box<dyn Fn(&P) -> Box<T> + Send + Sync>;

/// Maps names to constructors of a strategy trait object.
pub struct Registry<T: ?Sized, P> {
    kind: &'static str,
    factories: BTreeMap<String, Factory<T, P>>,
}

impl<T: ?Sized, P> Registry<T, P> {
    pub fn new(kind: &'static str) -> Self {
        Self {
            kind,
            factories: BTreeMap::new(),
        }
    }

    pub fn register(
        &mut self,
        name: &str,
        factory: impl Fn(&P) -> Box<T> + Send + Sync + 'static,
    ) -> &mut Self {
        self.factories.insert(name.to_owned(), Box::new(factory));
        self
    }

    pub fn contains(&self, name: &str) -> bool {
        self.factories.contains_key(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.factories.keys().cloned().collect()
    }

    pub fn build(&self, name: &str, params: &P) -> Result<Box<T>, UnknownStrategy> {
        self.factories
            .get(name)
            .map(|f| f(params))
            .ok_or_else(|| UnknownStrategy {
                kind: self.kind,
                name: name.to_owned(),
                known: self.names(),
            })
    }
}

pub type PlannerRegistry = Registry<dyn SortiePlanner, CoordinatorConfig>;
pub type LinkRegistry = Registry<dyn LinkModel, CommsConfig>;

/// Built-in planners. "disabled" is an alias of "unchecked".
pub fn planners() -> PlannerRegistry {
    let mut r: PlannerRegistry = Registry::new("planner");
    r.register("greedy", |_| Box::new(GreedyPlanner::checked()) as Box<dyn SortiePlanner>)
        .register("unchecked", |_| Box::new(GreedyPlanner::unchecked()) as Box<dyn SortiePlanner>)
        .register("disabled", |_| Box::new(GreedyPlanner::unchecked()) as Box<dyn SortiePlanner>)
        .register("none", |_| Box::new(NoPlanner) as Box<dyn SortiePlanner>);
    r
}

pub fn link_models() -> LinkRegistry {
    let mut r: LinkRegistry = Registry::new("link model");
    r.register("horizon", |_| Box::new(HorizonLink) as Box<dyn LinkModel>).register(
        "horizon-dropout",
        |c: &CommsConfig| Box::new(DropoutLink { probability: c.dropout_probability }) as Box<dyn LinkModel>,
    );
    r
}
