#![allow(dead_code)]

use std::collections::BTreeSet;

use ddarr::arrgen::{is_allowed_load, is_arr, SearchConfig};
use ddarr::timeseries::{chrono_split, Dataset, FeatureRef, SplitSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn dataset(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
    Dataset::new(
        cols.iter().map(|(n, _)| n.to_string()).collect(),
        cols.into_iter().map(|(_, c)| c).collect(),
        1.0,
        0.0,
    )
    .unwrap()
}

pub fn gaussian(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let d = Normal::new(0.0, sd).unwrap();
    (0..n).map(|_| d.sample(rng)).collect()
}

pub fn std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
}

/// Four independent bases, three planted linear relations and one distractor.
pub fn planted(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 1500;
    let bases: Vec<Vec<f64>> = (0..4).map(|_| gaussian(&mut rng, n, 1.0)).collect();
    let mut cols: Vec<(String, Vec<f64>)> =
        bases.iter().enumerate().map(|(i, b)| (format!("b{i}"), b.clone())).collect();
    for k in 0..3 {
        let i = rng.random_range(0..4);
        let j = (i + rng.random_range(1..4)) % 4;
        let (ci, cj) = (rng.random_range(1..4) as f64, -(rng.random_range(1..4) as f64));
        let clean: Vec<f64> = (0..n).map(|t| ci * bases[i][t] + cj * bases[j][t]).collect();
        let e = gaussian(&mut rng, n, 0.01 * std(&clean));
        cols.push((format!("d{k}"), clean.iter().zip(&e).map(|(a, b)| a + b).collect()));
    }
    cols.push(("noise".into(), gaussian(&mut rng, n, 1.0)));
    Dataset::new(cols.iter().map(|c| c.0.clone()).collect(), cols.into_iter().map(|c| c.1).collect(), 1.0, 0.0)
        .unwrap()
}

/// Every subset-minimal ARR of `target` by full enumeration over lag-0 features.
pub fn brute_force(ds: &Dataset, target: &str, config: &SearchConfig) -> BTreeSet<BTreeSet<String>> {
    let (train, valid) = chrono_split(ds, &SplitSpec { train_fraction: config.train_fraction }, 0).unwrap();
    let vars: Vec<String> =
        ds.names().iter().filter(|v| is_allowed_load(target, v)).cloned().collect();
    let mut arrs: Vec<BTreeSet<String>> = Vec::new();
    for mask in 1u32..(1 << vars.len()) {
        let set: Vec<FeatureRef> =
            (0..vars.len()).filter(|i| mask & (1 << i) != 0).map(|i| FeatureRef::new(vars[i].clone(), 0)).collect();
        if is_arr(&train, &valid, target, &set, config).unwrap().0 {
            arrs.push(set.iter().map(|f| f.variable.clone()).collect());
        }
    }
    arrs.iter()
        .filter(|s| !arrs.iter().any(|o| o.len() < s.len() && o.is_subset(s)))
        .cloned()
        .collect()
}
