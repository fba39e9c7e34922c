//! Oracles and generators behind the acceptance suite: a corpus of
//! full-factorial objectives, a random search-space builder and the
//! property suites run both as unit tests and as one acceptance criterion.

pub mod properties;

use iisopt::fanova::FactorialTable;
use iisopt::searchspace::{Condition, ParamSpec, Predicate, SearchSpace, Value};
use iisopt::seed::rng_from;
use rand::Rng;

fn names(d: usize) -> Vec<String> {
    ["a", "b", "c"][..d].iter().map(|s| s.to_string()).collect()
}

type Named = (usize, Vec<usize>, fn(&[usize]) -> f64);

/// Full-factorial objectives over at most 3 factors with at most 4 levels
/// each: named closed forms plus seeded random tables of every shape.
pub fn factorial_corpus() -> Vec<FactorialTable> {
    let mut corpus = Vec::new();
    let named: Vec<Named> = vec![
        (1, vec![2], |i| i[0] as f64),
        (2, vec![2, 2], |i| (i[0] + i[1]) as f64),
        (2, vec![2, 2], |i| (i[0] * i[1]) as f64),
        (2, vec![2, 2], |i| (i[0] ^ i[1]) as f64),
        (3, vec![2, 2, 2], |i| (i[0] ^ i[1] ^ i[2]) as f64),
        (3, vec![2, 2, 2], |i| (i[0] * i[1] * i[2]) as f64),
        (2, vec![4, 3], |i| (i[0] as f64).powi(2) - 2.0 * i[1] as f64),
        (3, vec![4, 4, 4], |i| (i[0] as f64).sin() + (i[1] * i[2]) as f64),
        (3, vec![3, 2, 4], |_| 1.5),
    ];
    for (d, levels, f) in named {
        corpus.push(FactorialTable::from_fn(names(d), levels, f).unwrap());
    }
    let mut rng = rng_from(77);
    for d in 1..=3usize {
        for shape in 0..(4usize.pow(d as u32)) {
            let levels: Vec<usize> = (0..d).map(|k| 1 + (shape / 4usize.pow(k as u32)) % 4).collect();
            if levels.iter().all(|&l| l == 1) {
                continue;
            }
            for _ in 0..3 {
                let values: Vec<f64> = (0..levels.iter().product::<usize>())
                    .map(|_| rng.random_range(-1.0..1.0))
                    .collect();
                let mut it = values.into_iter();
                corpus.push(FactorialTable::from_fn(names(d), levels.clone(), |_| it.next().unwrap()).unwrap());
            }
        }
    }
    corpus
}

/// Recipe for one generated parameter: kind selector, two shape numbers in
/// `[0, 1)`, a choice count and an optional condition `(parent, threshold)`.
pub type ParamRecipe = (u8, f64, f64, usize, Option<(f64, f64)>);

pub fn build_space(recipe: &[ParamRecipe]) -> SearchSpace {
    let mut params: Vec<ParamSpec> = Vec::new();
    let mut conditions = Vec::new();
    for (i, &(kind, a, b, k, cond)) in recipe.iter().enumerate() {
        let name = format!("p{i}");
        let p = match kind % 5 {
            0 => {
                let low = -10.0 + 20.0 * a;
                ParamSpec::continuous(&name, low, low + 0.01 + 10.0 * b)
            }
            1 => {
                let low = 10f64.powf(-6.0 + 4.0 * a);
                ParamSpec::continuous(&name, low, low * 10f64.powf(0.1 + 4.0 * b)).log10()
            }
            2 => {
                let low = (-5.0 + 10.0 * a).floor() as i64;
                ParamSpec::integer(&name, low, low + 1 + (20.0 * b).floor() as i64)
            }
            3 => {
                let low = 1 + (10.0 * a).floor() as i64;
                ParamSpec::integer(&name, low, low + 1 + (500.0 * b).floor() as i64).log10()
            }
            _ => ParamSpec::categorical(
                &name,
                (0..k.max(1))
                    .map(|j| if j % 2 == 0 { Value::Str(format!("c{j}")) } else { Value::Int(j as i64) })
                    .collect(),
            ),
        };
        if let (Some((pa, t)), true) = (cond, i > 0) {
            let parent = &params[((pa * i as f64) as usize).min(i - 1)];
            let pred = match parent.choices() {
                Some(choices) => Predicate::In(vec![choices[((t * choices.len() as f64) as usize).min(choices.len() - 1)].clone()]),
                None => {
                    let (lo, hi) = parent.bounds().unwrap();
                    Predicate::AtLeast(lo + t * (hi - lo))
                }
            };
            conditions.push(Condition::new(&name, parent.name.clone(), pred));
        }
        params.push(p);
    }
    SearchSpace::new(params, conditions).expect("generated space is valid")
}
