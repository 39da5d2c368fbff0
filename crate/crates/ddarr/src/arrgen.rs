//! Residual generation: exhaustive minimal-ARR search and greedy forward
//! selection with delays, followed by backward pruning.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regress::{fit_least_squares, predict, r2_score, LinearModel};
use crate::timeseries::{
    build_design_matrix, chrono_split, integral_name, max_lag, Dataset, FeatureRef, SplitSpec,
    INTEGRAL_PREFIX,
};

/// Scores closer than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

/// Search parameters shared by both strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Validation R² an ARR must reach.
    pub r2_min: f64,
    /// Gain a greedy step must add over the current score.
    pub improvement_margin: f64,
    pub max_loads: usize,
    /// Candidate lags in samples.
    pub delays: Vec<usize>,
    /// Restricts targets and loads; `None` means every non-constant column.
    pub candidate_variables: Option<Vec<String>>,
    pub train_fraction: f64,
    /// Maximum number of subset fits per target in exhaustive mode.
    pub subset_budget: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            r2_min: 0.99,
            improvement_margin: 0.005,
            max_loads: 5,
            delays: vec![0, 1, 2, 3],
            candidate_variables: None,
            train_fraction: 0.7,
            subset_budget: 20_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r2_min > 0.0 && self.r2_min <= 1.0) {
            return Err(Error::Validation(format!("r2_min must be in (0,1], got {}", self.r2_min)));
        }
        if !(self.improvement_margin >= 0.0 && self.improvement_margin.is_finite()) {
            return Err(Error::Validation("improvement_margin must be ≥ 0".into()));
        }
        if self.max_loads == 0 {
            return Err(Error::Validation("max_loads must be ≥ 1".into()));
        }
        if self.delays.is_empty() {
            return Err(Error::Validation("delays must not be empty".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Validation("train_fraction must be in (0,1)".into()));
        }
        if self.subset_budget == 0 {
            return Err(Error::Validation("subset_budget must be ≥ 1".into()));
        }
        Ok(())
    }

    fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }

    fn sorted_delays(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.delays.iter().copied().collect();
        set.into_iter().collect()
    }
}

/// Search strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    #[default]
    Forward,
    Exhaustive,
}

impl std::str::FromStr for SearchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(Self::Forward),
            "exhaustive" => Ok(Self::Exhaustive),
            other => Err(Error::Validation(format!("unknown search mode `{other}`"))),
        }
    }
}

/// A learned ARR: `r = target − model(loads)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub target: String,
    pub loads: Vec<FeatureRef>,
    pub model: LinearModel,
    pub valid_score: f64,
    pub minimal: bool,
    pub config: SearchConfig,
}

impl ResidualSpec {
    /// Display name, e.g. `r_int_u1`.
    pub fn name(&self) -> String {
        format!("r_{}", self.target)
    }

    /// Samples lost at the start of a residual signal.
    pub fn max_lag(&self) -> usize {
        max_lag(&self.loads)
    }

    /// Distinct load columns, sorted.
    pub fn support(&self) -> BTreeSet<String> {
        self.loads.iter().map(FeatureRef::column_name).collect()
    }
}

/// Whether `variable` may be a load for `target`: never the target itself (at
/// any lag), and never the integral of a raw target.
pub fn is_allowed_load(target: &str, variable: &str) -> bool {
    if variable == target {
        return false;
    }
    !(!target.starts_with(INTEGRAL_PREFIX) && variable == integral_name(target))
}

fn check_loads(target: &str, features: &[FeatureRef]) -> Result<()> {
    if features.is_empty() {
        return Err(Error::Validation("feature list must not be empty".into()));
    }
    if let Some(f) = features.iter().find(|f| !is_allowed_load(target, &f.column_name())) {
        return Err(Error::Validation(format!("`{f}` references target `{target}`")));
    }
    Ok(())
}

/// Fits `target` from `features` on the training rows and scores R² on the
/// validation rows. Returns whether the score reaches `r2_min` along with the
/// fitted model.
pub fn is_arr(
    train: &Dataset,
    valid: &Dataset,
    target: &str,
    features: &[FeatureRef],
    config: &SearchConfig,
) -> Result<(bool, LinearModel)> {
    check_loads(target, features)?;
    let model = fit_scored(train, valid, target, features)?;
    let ok = model.valid_score.is_some_and(|s| s >= config.r2_min);
    Ok((ok, model))
}

fn fit_scored(train: &Dataset, valid: &Dataset, target: &str, features: &[FeatureRef]) -> Result<LinearModel> {
    let (x, y) = build_design_matrix(train, features, target)?;
    let mut model = fit_least_squares(&x, &y)?;
    if model.train_score.is_none() {
        return Err(Error::UndefinedScore);
    }
    model.feature_schema = features.to_vec();
    let (xv, yv) = build_design_matrix(valid, features, target)?;
    let yhat = predict(&model, &xv)?;
    model.valid_score = Some(r2_score(yv.as_slice(), yhat.as_slice())?);
    Ok(model)
}

/// Split datasets and candidate lists for one search.
struct Context<'a> {
    train: Dataset,
    valid: Dataset,
    config: &'a SearchConfig,
}

impl<'a> Context<'a> {
    fn new(ds: &Dataset, config: &'a SearchConfig) -> Result<Self> {
        config.validate()?;
        let (train, valid) =
            chrono_split(ds, &SplitSpec { train_fraction: config.train_fraction }, config.max_delay())?;
        Ok(Self { train, valid, config })
    }

    /// Validation R², or `None` when the fit cannot be scored.
    fn score(&self, target: &str, features: &[FeatureRef]) -> Option<LinearModel> {
        fit_scored(&self.train, &self.valid, target, features).ok()
    }

    fn candidates(&self, ds: &Dataset, target: &str) -> Result<Vec<FeatureRef>> {
        let vars = candidate_variables(ds, self.config)?;
        let delays = self.config.sorted_delays();
        Ok(vars
            .iter()
            .filter(|v| is_allowed_load(target, v))
            .flat_map(|v| delays.iter().map(move |d| FeatureRef::new(v.clone(), *d)))
            .collect())
    }

    fn spec(&self, target: &str, model: LinearModel, minimal: bool) -> ResidualSpec {
        ResidualSpec {
            target: target.to_string(),
            loads: model.feature_schema.clone(),
            valid_score: model.valid_score.unwrap_or(f64::NAN),
            model,
            minimal,
            config: self.config.clone(),
        }
    }
}

/// Non-constant candidate columns in dataset order.
fn candidate_variables(ds: &Dataset, config: &SearchConfig) -> Result<Vec<String>> {
    let names: Vec<String> = match &config.candidate_variables {
        Some(list) => {
            for n in list {
                ds.column(n)?;
            }
            ds.names().iter().filter(|n| list.contains(n)).cloned().collect()
        }
        None => ds.names().to_vec(),
    };
    let mut out = Vec::with_capacity(names.len());
    for n in names {
        if !ds.is_constant(&n)? {
            out.push(n);
        }
    }
    Ok(out)
}

fn check_target(ds: &Dataset, target: &str) -> Result<bool> {
    Ok(!ds.is_constant(target)?)
}

/// True when `a` should be preferred over `b` at equal score.
fn tie_prefers(a: &FeatureRef, b: &FeatureRef) -> bool {
    (a.lag, a.column_name()) < (b.lag, b.column_name())
}

/// Greedy forward selection over (variable, delay) pairs.
///
/// Each step adopts the candidate with the best validation R² if it beats the
/// current score by `improvement_margin`; the loop stops once `r2_min` is met
/// or `max_loads` is reached. Accepted results are pruned before returning.
pub fn forward_select_with_delays(
    ds: &Dataset,
    target: &str,
    config: &SearchConfig,
) -> Result<Option<ResidualSpec>> {
    let ctx = Context::new(ds, config)?;
    if !check_target(ds, target)? {
        return Ok(None);
    }
    let candidates = ctx.candidates(ds, target)?;
    if candidates.is_empty() {
        return Err(Error::Validation(format!("no candidate loads for `{target}`")));
    }
    let mut loads: Vec<FeatureRef> = Vec::new();
    let mut current: Option<LinearModel> = None;
    let mut score = 0.0;
    for _ in 0..config.max_loads {
        let mut best: Option<(f64, &FeatureRef, LinearModel)> = None;
        for cand in candidates.iter().filter(|c| !loads.contains(c)) {
            let mut trial = loads.clone();
            trial.push(cand.clone());
            let Some(model) = ctx.score(target, &trial) else { continue };
            let s = model.valid_score.unwrap_or(f64::NEG_INFINITY);
            let better = match &best {
                None => true,
                Some((bs, bf, _)) => s > bs + TIE_EPS || ((s - bs).abs() <= TIE_EPS && tie_prefers(cand, bf)),
            };
            if better {
                best = Some((s, cand, model));
            }
        }
        let Some((s, cand, model)) = best else { break };
        if s <= score + config.improvement_margin {
            break;
        }
        loads.push(cand.clone());
        score = s;
        current = Some(model);
        if score >= config.r2_min {
            break;
        }
    }
    match current {
        Some(model) if score >= config.r2_min => {
            let spec = ctx.spec(target, model, false);
            Ok(Some(prune_with(&ctx, spec)))
        }
        _ => Ok(None),
    }
}

/// Backward pass over the loads in reverse order of addition, dropping any
/// load whose removal keeps validation R² at or above `r2_min`. `minimal` is
/// set when no single remaining load can be removed.
pub fn prune_loads(ds: &Dataset, spec: &ResidualSpec, config: &SearchConfig) -> Result<ResidualSpec> {
    let ctx = Context::new(ds, config)?;
    Ok(prune_with(&ctx, spec.clone()))
}

fn prune_with(ctx: &Context<'_>, mut spec: ResidualSpec) -> ResidualSpec {
    let r2_min = ctx.config.r2_min;
    let mut i = spec.loads.len();
    while i > 0 {
        i -= 1;
        if spec.loads.len() == 1 {
            break;
        }
        let mut trial = spec.loads.clone();
        trial.remove(i);
        if let Some(model) = ctx.score(&spec.target, &trial) {
            if model.valid_score.is_some_and(|s| s >= r2_min) {
                spec = ctx.spec(&spec.target, model, false);
            }
        }
    }
    spec.minimal = spec.loads.len() == 1
        || (0..spec.loads.len()).all(|j| {
            let mut trial = spec.loads.clone();
            trial.remove(j);
            ctx.score(&spec.target, &trial).and_then(|m| m.valid_score).is_none_or(|s| s < r2_min)
        });
    spec
}

/// Top-down search for every minimal ARR of `target` over the candidate
/// (variable, delay) features.
///
/// Starting from the full candidate set, each ARR is expanded by dropping one
/// feature at a time; a set none of whose single-deletion subsets is an ARR
/// is minimal. Subset scores are memoized and count against
/// `subset_budget`.
pub fn exhaustive_minimal_arrs(ds: &Dataset, target: &str, config: &SearchConfig) -> Result<Vec<ResidualSpec>> {
    let ctx = Context::new(ds, config)?;
    if !check_target(ds, target)? {
        return Ok(Vec::new());
    }
    let features = ctx.candidates(ds, target)?;
    if features.len() < 2 {
        return Err(Error::Validation(format!("`{target}` needs at least 2 candidate features")));
    }
    let mut search = Exhaustive { ctx: &ctx, target, features: &features, memo: HashMap::new(), fits: 0 };
    let full: Vec<usize> = (0..features.len()).collect();
    let mut minimal = BTreeSet::new();
    if search.accepts(&full)? {
        let mut visited = BTreeSet::new();
        let mut stack = vec![full];
        while let Some(set) = stack.pop() {
            if !visited.insert(set.clone()) {
                continue;
            }
            let mut is_min = true;
            if set.len() > 1 {
                for k in 0..set.len() {
                    let mut sub = set.clone();
                    sub.remove(k);
                    if search.accepts(&sub)? {
                        is_min = false;
                        if !visited.contains(&sub) {
                            stack.push(sub);
                        }
                    }
                }
            }
            if is_min {
                minimal.insert(set);
            }
        }
    }
    let mut sets: Vec<Vec<usize>> = minimal.into_iter().collect();
    sets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    let mut out = Vec::with_capacity(sets.len());
    for set in sets {
        let model = search.memo.get(&set).cloned().flatten().expect("accepted sets are memoized");
        out.push(ctx.spec(target, model, true));
    }
    Ok(out)
}

struct Exhaustive<'c, 'a> {
    ctx: &'c Context<'a>,
    target: &'c str,
    features: &'c [FeatureRef],
    memo: HashMap<Vec<usize>, Option<LinearModel>>,
    fits: usize,
}

impl Exhaustive<'_, '_> {
    fn accepts(&mut self, set: &[usize]) -> Result<bool> {
        if let Some(entry) = self.memo.get(set) {
            return Ok(entry.is_some());
        }
        if self.fits >= self.ctx.config.subset_budget {
            return Err(Error::BudgetExceeded { budget: self.ctx.config.subset_budget });
        }
        self.fits += 1;
        let feats: Vec<FeatureRef> = set.iter().map(|i| self.features[*i].clone()).collect();
        let model = self
            .ctx
            .score(self.target, &feats)
            .filter(|m| m.valid_score.is_some_and(|s| s >= self.ctx.config.r2_min));
        let ok = model.is_some();
        self.memo.insert(set.to_vec(), model);
        Ok(ok)
    }
}

/// Runs the chosen search for every candidate target and collects the
/// accepted residuals in dataset column order.
pub fn generate_residual_bank(ds: &Dataset, config: &SearchConfig, mode: SearchMode) -> Result<Vec<ResidualSpec>> {
    config.validate()?;
    let targets = candidate_variables(ds, config)?;
    let run = |target: &String| -> Result<Vec<ResidualSpec>> {
        match mode {
            SearchMode::Forward => Ok(forward_select_with_delays(ds, target, config)?.into_iter().collect()),
            SearchMode::Exhaustive => exhaustive_minimal_arrs(ds, target, config),
        }
    };
    #[cfg(feature = "parallel")]
    let per_target: Vec<Result<Vec<ResidualSpec>>> = {
        use rayon::prelude::*;
        targets.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_target: Vec<Result<Vec<ResidualSpec>>> = targets.iter().map(run).collect();
    let mut bank = Vec::new();
    for r in per_target {
        bank.extend(r?);
    }
    Ok(bank)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn noise(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(rng)).collect()
    }

    fn dataset(cols: Vec<(&str, Vec<f64>)>) -> Dataset {
        Dataset::new(
            cols.iter().map(|(n, _)| n.to_string()).collect(),
            cols.into_iter().map(|(_, c)| c).collect(),
            1.0,
            0.0,
        )
        .unwrap()
    }

    fn zero_delay() -> SearchConfig {
        SearchConfig { delays: vec![0], ..SearchConfig::default() }
    }

    #[test]
    fn allowed_loads() {
        assert!(!is_allowed_load("u1", "u1"));
        assert!(!is_allowed_load("u1", "int_u1"));
        assert!(is_allowed_load("int_u1", "u1"));
        assert!(!is_allowed_load("int_u1", "int_u1"));
        assert!(is_allowed_load("y1", "y2"));
    }

    #[test]
    fn is_arr_on_planted_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 2000;
        let x = noise(&mut rng, n, 1.0);
        let y = noise(&mut rng, n, 1.0);
        let sd = (10.0f64).sqrt();
        let e = noise(&mut rng, n, 0.001 * sd);
        let z: Vec<f64> = (0..n).map(|i| 3.0 * x[i] - y[i] + e[i]).collect();
        let ds = dataset(vec![("x", x), ("y", y), ("z", z)]);
        let cfg = zero_delay();
        let (tr, va) = chrono_split(&ds, &SplitSpec::default(), 0).unwrap();
        let (ok, m) = is_arr(&tr, &va, "z", &[FeatureRef::new("x", 0), FeatureRef::new("y", 0)], &cfg).unwrap();
        assert!(ok);
        assert!((m.coefficients[0] - 3.0).abs() < 1e-2);
        let (ok, _) = is_arr(&tr, &va, "z", &[FeatureRef::new("x", 0)], &cfg).unwrap();
        assert!(!ok);
        assert!(is_arr(&tr, &va, "z", &[FeatureRef::new("z", 1)], &cfg).is_err());
    }

    #[test]
    fn exact_copy_prunes_to_single_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = noise(&mut rng, 500, 1.0);
        let y = noise(&mut rng, 500, 1.0);
        let ds = dataset(vec![("x", x.clone()), ("y", y), ("z", x)]);
        let cfg = zero_delay();
        let over = {
            let ctx = Context::new(&ds, &cfg).unwrap();
            let m = ctx.score("z", &[FeatureRef::new("x", 0), FeatureRef::new("y", 0)]).unwrap();
            ctx.spec("z", m, false)
        };
        let pruned = prune_loads(&ds, &over, &cfg).unwrap();
        assert_eq!(pruned.loads, vec![FeatureRef::new("x", 0)]);
        assert!(pruned.minimal);
        let mins = exhaustive_minimal_arrs(&ds, "z", &cfg).unwrap();
        assert_eq!(mins.len(), 1);
        assert_eq!(mins[0].loads, vec![FeatureRef::new("x", 0)]);
    }

    #[test]
    fn independent_noise_has_no_residuals() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ds = dataset(vec![
            ("a", noise(&mut rng, 800, 1.0)),
            ("b", noise(&mut rng, 800, 1.0)),
            ("c", noise(&mut rng, 800, 1.0)),
        ]);
        let cfg = SearchConfig::default();
        assert!(generate_residual_bank(&ds, &cfg, SearchMode::Forward).unwrap().is_empty());
        assert!(generate_residual_bank(&ds, &zero_delay(), SearchMode::Exhaustive).unwrap().is_empty());
    }

    #[test]
    fn budget_is_enforced() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = noise(&mut rng, 400, 1.0);
        let ds = dataset(vec![("x", x.clone()), ("y", noise(&mut rng, 400, 1.0)), ("z", x)]);
        let cfg = SearchConfig { subset_budget: 2, ..SearchConfig::default() };
        assert!(matches!(exhaustive_minimal_arrs(&ds, "z", &cfg), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn constant_columns_are_skipped() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = noise(&mut rng, 300, 1.0);
        let ds = dataset(vec![("k", vec![1.0; 300]), ("x", x.clone()), ("z", x)]);
        assert!(forward_select_with_delays(&ds, "k", &SearchConfig::default()).unwrap().is_none());
        let bank = generate_residual_bank(&ds, &SearchConfig::default(), SearchMode::Forward).unwrap();
        assert!(bank.iter().all(|s| s.target != "k" && s.loads.iter().all(|l| l.variable != "k")));
    }

    #[test]
    fn config_validation() {
        assert!(SearchConfig { r2_min: 0.0, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig { max_loads: 0, ..SearchConfig::default() }.validate().is_err());
        assert!(SearchConfig { delays: vec![], ..SearchConfig::default() }.validate().is_err());
        assert!("sideways".parse::<SearchMode>().is_err());
        assert_eq!("exhaustive".parse::<SearchMode>().unwrap(), SearchMode::Exhaustive);
    }
}
