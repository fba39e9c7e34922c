//! Property suites. Each returns the first counterexample as an error.

use crate::{build_space, factorial_corpus, ParamRecipe};
use iisopt::fanova::{variance_contributions, FactorialTable, ForestParams, RegressionForest};
use iisopt::optimizers::{
    expected_improvement, tpe_split, GaConfig, Observation, Optimizer, SmboConfig, StrategyConfig, TpeConfig,
};
use iisopt::persistence::{best_so_far, Axis, TrialRecord};
use iisopt::searchspace::{select_elites, Domain, SearchSpace, Value};
use iisopt::seed::rng_from;
use iisopt::trial::{Status, Trial};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::Rng;
use rand_distr::StandardNormal;

pub type Suite = (&'static str, fn() -> Result<(), String>);

pub const SUITES: &[Suite] = &[
    ("space round trip", space_round_trip),
    ("suggestions stay valid", suggestions_stay_valid),
    ("refinement nests", refinement_nests),
    ("expected improvement", ei_laws),
    ("tpe split", tpe_split_laws),
    ("best so far is monotone", best_so_far_monotone),
    ("fanova affine invariance", fanova_affine_invariance),
];

pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    SUITES.iter().map(|&(name, f)| (name, f())).collect()
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn recipe() -> impl Strategy<Value = Vec<ParamRecipe>> {
    prop::collection::vec(
        (
            0u8..5,
            0.0..1.0f64,
            0.0..1.0f64,
            1usize..6,
            prop::option::weighted(0.4, (0.0..1.0f64, 0.0..1.0f64)),
        ),
        1..8,
    )
}

fn same_value(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1e-300),
        _ => a.same(b),
    }
}

pub fn space_round_trip() -> Result<(), String> {
    runner(1000)
        .run(&(recipe(), any::<u64>()), |(recipe, seed)| {
            let space = build_space(&recipe);
            let mut rng = rng_from(seed);
            let config = space.sample(&mut rng);
            prop_assert!(space.validate(&config).is_ok(), "{:?}", space.validate(&config));
            let unit = space.encode(&config).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert!(unit.iter().all(|u| (0.0..=1.0).contains(u)));
            let back = space.decode(&unit);
            prop_assert_eq!(back.len(), config.len());
            for (name, v) in config.iter() {
                let w = back.get(name).unwrap();
                prop_assert!(same_value(v, w), "{name}: {v:?} became {w:?}");
            }
            prop_assert!(space.is_valid(&back));
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn quick_strategies() -> Vec<StrategyConfig> {
    vec![
        StrategyConfig::Random,
        StrategyConfig::Tpe(TpeConfig {
            n_startup: 4,
            ..TpeConfig::default()
        }),
        StrategyConfig::Smbo(SmboConfig {
            n_startup: 4,
            n_prior_candidates: 30,
            ..SmboConfig::default()
        }),
        StrategyConfig::Ga(GaConfig {
            population: 5,
            ..GaConfig::default()
        }),
    ]
}

pub fn suggestions_stay_valid() -> Result<(), String> {
    runner(60)
        .run(&(recipe(), any::<u64>()), |(recipe, seed)| {
            let space = build_space(&recipe);
            for strategy in quick_strategies() {
                let mut opt = Optimizer::new(space.clone(), &strategy, seed).unwrap();
                let mut rng = rng_from(seed ^ 1);
                for id in 1..=14 {
                    let c = opt.suggest(id).map_err(|e| TestCaseError::fail(e.to_string()))?;
                    prop_assert!(space.is_valid(&c), "{}: {:?}", strategy.name(), space.validate(&c));
                    opt.report(id, c, rng.random::<f64>()).map_err(|e| TestCaseError::fail(e.to_string()))?;
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn trials_for(space: &SearchSpace, n: usize, seed: u64) -> Vec<Trial> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|i| {
            let failed = rng.random::<f64>() < 0.1;
            Trial {
                id: i as u64 + 1,
                stage: 0,
                fidelity: 32,
                config: space.sample(&mut rng),
                objective: (!failed).then(|| rng.random()),
                cost_minutes: 1.0,
                status: if failed { Status::Failed } else { Status::Ok },
                seed: 0,
            }
        })
        .collect()
}

pub fn refinement_nests() -> Result<(), String> {
    runner(300)
        .run(
            &(recipe(), any::<u64>(), 10usize..80, 0.05..0.6f64, 0.0..0.5f64),
            |(recipe, seed, n, q, margin)| {
                let space = build_space(&recipe);
                let trials = trials_for(&space, n, seed);
                let Ok(elites) = select_elites(&trials, q) else {
                    return Ok(());
                };
                let refined = space.refine(&trials, q, margin).map_err(|e| TestCaseError::fail(e.to_string()))?;
                for e in &elites {
                    prop_assert!(refined.is_valid(&e.config), "elite {} left out: {:?}", e.id, refined.validate(&e.config));
                }
                for (p, r) in space.params().iter().zip(refined.params()) {
                    match (&p.domain, &r.domain) {
                        (Domain::Categorical { choices: outer }, Domain::Categorical { choices: inner }) => {
                            prop_assert!(!inner.is_empty());
                            prop_assert!(inner.iter().all(|c| outer.iter().any(|o| o.same(c))));
                        }
                        _ => {
                            let (lo, hi) = p.bounds().unwrap();
                            let (rlo, rhi) = r.bounds().unwrap();
                            prop_assert!(lo <= rlo && rlo <= rhi && rhi <= hi, "{}: [{rlo}, {rhi}] not in [{lo}, {hi}]", p.name);
                        }
                    }
                }
                // refining a second time stays inside the first refinement
                let again = refined.refine(&trials_for(&refined, n, seed ^ 9), q, margin);
                if let Ok(again) = again {
                    for (p, r) in refined.params().iter().zip(again.params()) {
                        if let (Some((lo, hi)), Some((rlo, rhi))) = (p.bounds(), r.bounds()) {
                            prop_assert!(lo <= rlo && rhi <= hi);
                        }
                    }
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

pub fn ei_laws() -> Result<(), String> {
    runner(1000)
        .run(
            &(-5.0..5.0f64, 0.0..3.0f64, -5.0..5.0f64, 0.001..1.0f64),
            |(mean, std, best, step)| {
                let ei = expected_improvement(mean, std, best);
                prop_assert!(ei >= 0.0 && ei.is_finite());
                prop_assert!(expected_improvement(mean + step, std, best) <= ei + 1e-12);
                prop_assert!(expected_improvement(mean, std + step, best) >= ei - 1e-12);
                prop_assert!(ei >= (best - mean).max(0.0) - 1e-12);
                Ok(())
            },
        )
        .map_err(|e| e.to_string())?;
    // Monte Carlo check of E[max(best - Y, 0)] for Y ~ N(best, 1)
    let mut rng = rng_from(5);
    let n = 2_000_000;
    let mc: f64 = (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (-z).max(0.0)
        })
        .sum::<f64>()
        / n as f64;
    let exact = expected_improvement(0.0, 1.0, 0.0);
    if (exact - 0.398942).abs() > 1e-6 || (mc - exact).abs() > 1e-3 {
        return Err(format!("EI(0, 1, 0) = {exact}, Monte Carlo {mc}"));
    }
    Ok(())
}

fn observations(values: &[f64]) -> Vec<Observation> {
    values
        .iter()
        .enumerate()
        .map(|(i, &y)| Observation {
            id: i as u64 + 1,
            config: [("x", y)].into_iter().collect(),
            objective: y,
        })
        .collect()
}

pub fn tpe_split_laws() -> Result<(), String> {
    runner(1000)
        .run(
            &(prop::collection::vec(0u8..20, 0..120), 0.01..1.0f64),
            |(raw, gamma)| {
                let values: Vec<f64> = raw.iter().map(|&v| v as f64 / 4.0).collect();
                let history = observations(&values);
                let (good, bad) = tpe_split(&history, gamma);
                let n = history.len();
                prop_assert_eq!(good.len() + bad.len(), n);
                prop_assert_eq!(good.len(), ((gamma * n as f64) - 1e-9).ceil().max(0.0) as usize);
                if let (Some(g), Some(b)) = (good.iter().map(|o| o.objective).reduce(f64::max), bad.first()) {
                    prop_assert!(g <= b.objective);
                }
                for w in good.windows(2).chain(bad.windows(2)) {
                    prop_assert!((w[0].objective, w[0].id) < (w[1].objective, w[1].id));
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

pub fn best_so_far_monotone() -> Result<(), String> {
    runner(500)
        .run(
            &prop::collection::vec((prop::option::weighted(0.8, 0.0..1.0f64), 0.0..50.0f64), 1..60),
            |rows| {
                let mut cum = 0.0;
                let records: Vec<TrialRecord> = rows
                    .iter()
                    .enumerate()
                    .map(|(i, &(objective, cost))| {
                        cum += cost;
                        TrialRecord {
                            trial_id: i as u64 + 1,
                            stage: 0,
                            fidelity: 32,
                            config: Default::default(),
                            objective,
                            cost_minutes: cost,
                            cum_cost_minutes: cum,
                            status: if objective.is_some() { Status::Ok } else { Status::Failed },
                            seed: 0,
                            ts: cum,
                            message: None,
                        }
                    })
                    .collect();
                let any_ok = rows.iter().any(|r| r.0.is_some());
                for axis in [Axis::Evaluations, Axis::Cost] {
                    match best_so_far(&records, axis) {
                        Ok(curve) => {
                            prop_assert!(any_ok);
                            for w in curve.windows(2) {
                                prop_assert!(w[1].best <= w[0].best);
                                prop_assert!(w[1].x >= w[0].x);
                            }
                            let min = rows.iter().filter_map(|r| r.0).fold(f64::INFINITY, f64::min);
                            prop_assert_eq!(curve.last().unwrap().best, min);
                        }
                        Err(_) => prop_assert!(!any_ok),
                    }
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

fn tree_fractions(table: &FactorialTable, scale: f64, shift: f64) -> Vec<f64> {
    let levels = table.levels();
    let (x, y): (Vec<Vec<f64>>, Vec<f64>) = table
        .cells()
        .map(|(idx, v)| {
            let point = idx.iter().zip(levels).map(|(&i, &l)| (i as f64 + 0.5) / l as f64).collect();
            (point, scale * v + shift)
        })
        .unzip();
    let forest = RegressionForest::fit(&x, &y, &ForestParams::exact(), &mut rng_from(0)).unwrap();
    let names = table.names().to_vec();
    variance_contributions(&forest, &names, names.len())
        .entries
        .iter()
        .map(|e| e.fraction)
        .collect()
}

pub fn fanova_affine_invariance() -> Result<(), String> {
    let corpus = factorial_corpus();
    runner(200)
        .run(
            &(0..corpus.len(), 0.01..100.0f64, any::<bool>(), -50.0..50.0f64),
            |(i, scale, flip, shift)| {
                let table = &corpus[i];
                let base = tree_fractions(table, 1.0, 0.0);
                let moved = tree_fractions(table, if flip { -scale } else { scale }, shift);
                prop_assert_eq!(base.len(), moved.len());
                for (a, b) in base.iter().zip(&moved) {
                    prop_assert!((a - b).abs() <= 1e-6, "{base:?} vs {moved:?}");
                }
                Ok(())
            },
        )
        .map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    fn check(r: Result<(), String>) {
        if let Err(e) = r {
            panic!("{e}");
        }
    }

    #[test]
    fn space_round_trip() {
        check(super::space_round_trip());
    }

    #[test]
    fn suggestions_stay_valid() {
        check(super::suggestions_stay_valid());
    }

    #[test]
    fn refinement_nests() {
        check(super::refinement_nests());
    }

    #[test]
    fn ei_laws() {
        check(super::ei_laws());
    }

    #[test]
    fn tpe_split_laws() {
        check(super::tpe_split_laws());
    }

    #[test]
    fn best_so_far_monotone() {
        check(super::best_so_far_monotone());
    }

    #[test]
    fn fanova_affine_invariance() {
        check(super::fanova_affine_invariance());
    }
}
