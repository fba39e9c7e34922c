//! Multi-fidelity hyperparameter optimization with increasing input sizes.
//!
//! A campaign optimizes on cheap low-fidelity evaluations first, narrows the
//! search space to the value ranges that worked, and continues on higher
//! fidelities with optimizers warm-started from the best configurations found
//! so far. The crate bundles four optimizers (random search, tree-of-Parzen
//! estimators, random-forest SMBO and a genetic algorithm), synthetic
//! multi-fidelity benchmarks, a line-protocol client for external trainers,
//! and a functional-ANOVA importance analyzer.
//!
//! ```
//! use iisopt::evaluators::QuadraticMf;
//! use iisopt::fidelity::{Campaign, CampaignSettings, Schedule};
//! use iisopt::optimizers::StrategyConfig;
//! use iisopt::searchspace::defaults::quadratic_space;
//!
//! let schedule = Schedule::new(vec![(32, 30), (64, 20)]).unwrap();
//! let settings = CampaignSettings::new(schedule, StrategyConfig::Random, 7);
//! let evaluator = QuadraticMf::new(64);
//! let result = Campaign::new(quadratic_space(), settings)
//!     .unwrap()
//!     .run(&evaluator)
//!     .unwrap();
//! assert_eq!(result.trials.len(), 50);
//! ```

pub mod config;
pub mod evaluators;
pub mod fanova;
pub mod fidelity;
pub mod optimizers;
pub mod persistence;
pub mod searchspace;
pub mod seed;
pub mod trial;

pub use searchspace::{Configuration, SearchSpace, Value};
pub use trial::{Status, Trial, TrialId, TrialRequest, TrialResult};
