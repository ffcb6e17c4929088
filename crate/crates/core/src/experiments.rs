//! Deterministic Monte Carlo harness: sweep random perturbations, run the
//! requested verifiers per trial, and aggregate empirical failure frequencies.
//!
//! Every trial's perturbation and every verifier's random stream are keyed by
//! `(seed, trial, property)`, so trials are independent of execution order and
//! of each other: removing a property or changing the worker count leaves all
//! other verdicts bit-identical, and the JSON report is byte-stable across
//! re-runs. Wall time is returned out-of-band to keep the report deterministic.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use crate::calculus::SmoothMap;
use crate::geometry::{builtin, f_builtin, CatalogEntry};
use crate::perturbation::{perturb, sample_perturbation, LinearPerturbation};
use crate::rng::{subseed, tag};
use crate::verifiers::{
    verify_corank_bound, verify_embedding, verify_immersion, verify_injective, verify_morse,
    verify_normal_crossings, Property, Tolerances, Verdict,
};
use crate::{Error, Result};

/// Full experiment description. Everything that affects results is here;
/// worker count and report shape knobs are execution options instead.
#[derive(Clone, Debug, Serialize)]
pub struct ExperimentConfig {
    pub catalog: String,
    pub f_name: String,
    /// Codomain dimension `l` of `F`.
    pub codomain: usize,
    pub properties: Vec<Property>,
    pub trials: u64,
    pub perturb_scale: f64,
    pub seed: u64,
    /// Default per-verifier budget; see the verifier docs for its meaning.
    pub budget: usize,
    pub budget_overrides: BTreeMap<Property, usize>,
    /// Spanning order for the normal-crossings check; defaults to the
    /// catalog's known value.
    pub sf: Option<usize>,
    /// Append a forced `alpha = 0` control trial.
    pub zero_control: bool,
    pub tolerances: Tolerances,
}

impl ExperimentConfig {
    pub fn new(catalog: &str, f_name: &str, codomain: usize, properties: Vec<Property>) -> Self {
        ExperimentConfig {
            catalog: catalog.to_string(),
            f_name: f_name.to_string(),
            codomain,
            properties,
            trials: 10,
            perturb_scale: 1.0,
            seed: 0,
            budget: 32,
            budget_overrides: BTreeMap::new(),
            sf: None,
            zero_control: false,
            tolerances: Tolerances::default(),
        }
    }

    /// Parses the flat `key = value` config format. Unknown or duplicate keys
    /// are errors; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    lineno + 1
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if seen.insert(key.clone(), value).is_some() {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
        }

        let take = |seen: &mut BTreeMap<String, String>, key: &str| seen.remove(key);
        let parse_num = |key: &str, v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not a number")))
        };
        let parse_int = |key: &str, v: &str| -> Result<u64> {
            v.parse::<u64>()
                .map_err(|_| Error::Config(format!("key `{key}`: `{v}` is not an integer")))
        };

        let catalog = take(&mut seen, "catalog")
            .ok_or_else(|| Error::Config("missing required key `catalog`".into()))?;
        let f_name = take(&mut seen, "F")
            .ok_or_else(|| Error::Config("missing required key `F`".into()))?;
        let properties_raw = take(&mut seen, "properties")
            .ok_or_else(|| Error::Config("missing required key `properties`".into()))?;
        let properties = properties_raw
            .split(',')
            .map(|s| Property::parse(s.trim()))
            .collect::<Result<Vec<_>>>()?;
        if properties.is_empty() {
            return Err(Error::Config("`properties` must name at least one property".into()));
        }
        let trials = match take(&mut seen, "trials") {
            Some(v) => parse_int("trials", &v)?,
            None => return Err(Error::Config("missing required key `trials`".into())),
        };
        if trials == 0 {
            return Err(Error::Config("`trials` must be at least 1".into()));
        }

        let codomain = match take(&mut seen, "l") {
            Some(v) => parse_int("l", &v)? as usize,
            None => infer_codomain(&f_name).ok_or_else(|| {
                Error::Config(format!("key `l` is required for F = `{f_name}`"))
            })?,
        };

        let mut cfg = ExperimentConfig::new(&catalog, &f_name, codomain, properties);
        cfg.trials = trials;
        if let Some(v) = take(&mut seen, "perturb_scale") {
            cfg.perturb_scale = parse_num("perturb_scale", &v)?;
        }
        if let Some(v) = take(&mut seen, "seed") {
            cfg.seed = parse_int("seed", &v)?;
        }
        if let Some(v) = take(&mut seen, "budget") {
            cfg.budget = parse_int("budget", &v)? as usize;
        }
        if let Some(v) = take(&mut seen, "sf") {
            cfg.sf = Some(parse_int("sf", &v)? as usize);
        }
        if let Some(v) = take(&mut seen, "zero_control") {
            cfg.zero_control = match v.as_str() {
                "true" | "1" => true,
                "false" | "0" => false,
                other => {
                    return Err(Error::Config(format!(
                        "key `zero_control`: expected true/false, got `{other}`"
                    )))
                }
            };
        }
        for p in Property::ALL {
            if let Some(v) = take(&mut seen, &format!("budget_{}", p.token())) {
                cfg.budget_overrides.insert(p, parse_int("budget_*", &v)? as usize);
            }
        }
        let t = &mut cfg.tolerances;
        for (key, slot) in [
            ("newton_tol", &mut t.newton_tol),
            ("hess_tol_scale", &mut t.hess_tol_scale),
            ("dedup_radius", &mut t.dedup_radius),
            ("sigma_floor", &mut t.sigma_floor),
            ("collision_tol", &mut t.collision_tol),
            ("pair_floor", &mut t.pair_floor),
            ("rank_tol_scale", &mut t.rank_tol_scale),
        ] {
            if let Some(v) = seen.remove(key) {
                *slot = parse_num(key, &v)?;
            }
        }
        if let Some(v) = seen.remove("newton_max_iter") {
            cfg.tolerances.newton_max_iter = parse_int("newton_max_iter", &v)? as usize;
        }

        if let Some(key) = seen.keys().next() {
            return Err(Error::Config(format!("unknown key `{key}`")));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn infer_codomain(f_name: &str) -> Option<usize> {
    match f_name {
        "height" | "height_cubed" => Some(1),
        _ => f_name.strip_prefix("proj_").and_then(|s| s.parse().ok()),
    }
}

/// Execution knobs that do not affect verdicts.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub workers: usize,
    /// Include full perturbation matrices in the report.
    pub dump_alpha: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1, dump_alpha: false }
    }
}

/// Pass, fail, or error (hypothesis violations and numerical breakdowns are a
/// third state, never coerced).
#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyOutcome {
    pub property: Property,
    pub outcome: OutcomeKind,
    pub key_metric: Option<f64>,
    pub counterexamples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub alpha_digest: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<Vec<f64>>>,
    pub outcomes: Vec<PropertyOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyAggregate {
    pub property: Property,
    pub pass: u64,
    pub fail: u64,
    pub error: u64,
    /// `fail / trials`; the zero control is excluded.
    pub failure_frequency: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Environment {
    pub version: &'static str,
    pub tolerances: Tolerances,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<TrialRecord>,
    pub aggregate: Vec<PropertyAggregate>,
    pub environment: Environment,
}

/// Stable per-property stream ids (independent of list position).
fn property_stream_id(p: Property) -> u64 {
    match p {
        Property::Morse => 1,
        Property::Immersion => 2,
        Property::CorankBound => 3,
        Property::Injective => 4,
        Property::NormalCrossings => 5,
        Property::Embedding => 6,
    }
}

/// Runs one verifier on an already-perturbed map.
pub fn run_property(
    property: Property,
    f_pi: &SmoothMap,
    entry: &CatalogEntry,
    sf: Option<usize>,
    budget: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Verdict> {
    let man = &entry.manifold;
    match property {
        Property::Morse => verify_morse(f_pi, man, budget, seed, tol),
        Property::Immersion => verify_immersion(f_pi, man, budget, seed, tol),
        Property::CorankBound => verify_corank_bound(f_pi, man, budget, seed, tol),
        Property::Injective => verify_injective(f_pi, man, budget, seed, tol),
        Property::NormalCrossings => {
            let sf = sf.ok_or_else(|| {
                Error::Config(
                    "normal-crossings verification needs `sf` (none known for this catalog entry)"
                        .into(),
                )
            })?;
            verify_normal_crossings(f_pi, man, sf, budget, seed, tol)
        }
        Property::Embedding => verify_embedding(f_pi, man, budget, seed, tol),
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    entry: &CatalogEntry,
    f_base: &SmoothMap,
    sf: Option<usize>,
    trial: u64,
    alpha: &LinearPerturbation,
    dump_alpha: bool,
) -> Result<TrialRecord> {
    let f_pi = perturb(f_base, alpha)?;
    let mut outcomes = Vec::with_capacity(cfg.properties.len());
    for &property in &cfg.properties {
        let budget = cfg.budget_overrides.get(&property).copied().unwrap_or(cfg.budget);
        let verifier_seed = subseed(cfg.seed, &[tag::TRIAL, trial, property_stream_id(property)]);
        let outcome = match run_property(
            property,
            &f_pi,
            entry,
            sf,
            budget,
            verifier_seed,
            &cfg.tolerances,
        ) {
            Ok(verdict) => PropertyOutcome {
                property,
                outcome: if verdict.pass { OutcomeKind::Pass } else { OutcomeKind::Fail },
                key_metric: verdict.key_metric,
                counterexamples: verdict.counterexamples(),
                message: None,
            },
            Err(e) if recoverable(&e) => PropertyOutcome {
                property,
                outcome: OutcomeKind::Error,
                key_metric: None,
                counterexamples: 0,
                message: Some(e.to_string()),
            },
            Err(e) => return Err(e),
        };
        outcomes.push(outcome);
    }
    Ok(TrialRecord {
        trial,
        alpha_digest: alpha.digest(),
        alpha: dump_alpha.then(|| alpha.rows()),
        outcomes,
    })
}

/// Errors that abort a single property but not the experiment.
fn recoverable(e: &Error) -> bool {
    matches!(
        e,
        Error::Predicate(_)
            | Error::Regularity { .. }
            | Error::Domain(_)
            | Error::Conditioning { .. }
            | Error::NonFinite(_)
            | Error::NotInjective(_)
    )
}

/// Runs the experiment. The report is a pure function of `cfg` (same bytes at
/// any worker count); the wall time is returned separately.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: RunOptions,
) -> Result<(ExperimentReport, Duration)> {
    let started = Instant::now();
    let entry = builtin(&cfg.catalog)?;
    let m = entry.manifold.ambient_dim();
    let f_base = f_builtin(&cfg.f_name, m, cfg.codomain)?;
    let sf = cfg.sf.or(entry.known_sf);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Argument(format!("worker pool: {e}")))?;
    let trials: Vec<TrialRecord> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let alpha =
                    sample_perturbation(m, cfg.codomain, cfg.perturb_scale, cfg.seed, trial)?;
                run_trial(cfg, &entry, &f_base, sf, trial, &alpha, opts.dump_alpha)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let control = if cfg.zero_control {
        let alpha = LinearPerturbation::zero(cfg.codomain, m);
        Some(run_trial(cfg, &entry, &f_base, sf, cfg.trials, &alpha, opts.dump_alpha)?)
    } else {
        None
    };

    let mut aggregate = Vec::with_capacity(cfg.properties.len());
    for &property in &cfg.properties {
        let (mut pass, mut fail, mut error) = (0u64, 0u64, 0u64);
        for t in &trials {
            for o in &t.outcomes {
                if o.property == property {
                    match o.outcome {
                        OutcomeKind::Pass => pass += 1,
                        OutcomeKind::Fail => fail += 1,
                        OutcomeKind::Error => error += 1,
                    }
                }
            }
        }
        aggregate.push(PropertyAggregate {
            property,
            pass,
            fail,
            error,
            failure_frequency: fail as f64 / cfg.trials as f64,
        });
    }

    let report = ExperimentReport {
        config: cfg.clone(),
        trials,
        control,
        aggregate,
        environment: Environment {
            version: env!("CARGO_PKG_VERSION"),
            tolerances: cfg.tolerances.clone(),
        },
    };
    Ok((report, started.elapsed()))
}

/// One row per decision floor: the experiment re-run with `sigma_floor` and
/// `collision_tol` set to that floor.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub floor: f64,
    pub aggregate: Vec<PropertyAggregate>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyMonotone {
    pub property: Property,
    /// Whether the failure frequency was nonincreasing as floors shrank.
    pub nonincreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepTable {
    pub floors: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Observed, not enforced.
    pub monotone: Vec<PropertyMonotone>,
}

/// Re-runs the experiment at each floor (strictly decreasing, positive) and
/// tabulates failure frequency against the floor.
pub fn tolerance_sweep(
    cfg: &ExperimentConfig,
    floors: &[f64],
    opts: RunOptions,
) -> Result<SweepTable> {
    if floors.is_empty() {
        return Err(Error::Argument("need at least one floor".into()));
    }
    if floors.iter().any(|&f| !(f > 0.0)) {
        return Err(Error::Argument("floors must be positive".into()));
    }
    if floors.windows(2).any(|w| w[0] <= w[1]) {
        return Err(Error::Argument("floors must be strictly decreasing".into()));
    }
    let mut rows = Vec::with_capacity(floors.len());
    for &floor in floors {
        let mut sub = cfg.clone();
        sub.tolerances.sigma_floor = floor;
        sub.tolerances.collision_tol = floor;
        let (report, _) = run_experiment(&sub, opts)?;
        rows.push(SweepRow { floor, aggregate: report.aggregate });
    }
    let monotone = cfg
        .properties
        .iter()
        .map(|&p| {
            let freqs: Vec<f64> = rows
                .iter()
                .filter_map(|r| {
                    r.aggregate.iter().find(|a| a.property == p).map(|a| a.failure_frequency)
                })
                .collect();
            PropertyMonotone {
                property: p,
                nonincreasing: freqs.windows(2).all(|w| w[0] >= w[1]),
            }
        })
        .collect();
    Ok(SweepTable { floors: floors.to_vec(), rows, monotone })
}

/// CSV rendering: one row per trial-property, columns
/// `trial,property,pass,key_metric,alpha_digest`. The `pass` column holds the
/// outcome token (pass, fail, error); the control trial, when present, uses
/// the index after the last trial.
pub fn report_to_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("trial,property,pass,key_metric,alpha_digest\n");
    let rows = report.trials.iter().chain(report.control.iter());
    for t in rows {
        for o in &t.outcomes {
            let outcome = match o.outcome {
                OutcomeKind::Pass => "pass",
                OutcomeKind::Fail => "fail",
                OutcomeKind::Error => "error",
            };
            let metric = o.key_metric.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.trial,
                o.property.token(),
                outcome,
                metric,
                t.alpha_digest
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(
            "circle_in_R2",
            "height_cubed",
            1,
            vec![Property::Morse],
        );
        cfg.trials = 3;
        cfg.budget = 12;
        cfg.seed = 5;
        cfg
    }

    #[test]
    fn reports_are_byte_identical_across_worker_counts() {
        let cfg = small_config();
        let (a, _) = run_experiment(&cfg, RunOptions { workers: 1, dump_alpha: false }).unwrap();
        let (b, _) = run_experiment(&cfg, RunOptions { workers: 4, dump_alpha: false }).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn zero_control_fails_where_random_trials_pass() {
        let mut cfg = small_config();
        cfg.zero_control = true;
        let (report, _) = run_experiment(&cfg, RunOptions::default()).unwrap();
        let control = report.control.expect("control requested");
        assert_eq!(control.outcomes[0].outcome, OutcomeKind::Fail);
        let agg = &report.aggregate[0];
        assert_eq!(agg.pass, cfg.trials);
        assert_eq!(agg.fail, 0);
    }

    #[test]
    fn removing_a_property_leaves_others_bit_identical() {
        let mut both = small_config();
        both.properties = vec![Property::Morse, Property::CorankBound];
        let (with_both, _) = run_experiment(&both, RunOptions::default()).unwrap();

        let only_morse = small_config();
        let (alone, _) = run_experiment(&only_morse, RunOptions::default()).unwrap();

        for (a, b) in with_both.trials.iter().zip(&alone.trials) {
            let morse_a = a.outcomes.iter().find(|o| o.property == Property::Morse).unwrap();
            let morse_b = &b.outcomes[0];
            assert_eq!(
                serde_json::to_string(morse_a).unwrap(),
                serde_json::to_string(morse_b).unwrap()
            );
        }
    }

    #[test]
    fn config_parser_round_trips_and_rejects_unknown_keys() {
        let cfg = ExperimentConfig::parse(
            "catalog = circle_in_R2\nF = height\nproperties = morse\ntrials = 7\nseed = 3\n",
        )
        .unwrap();
        assert_eq!(cfg.codomain, 1);
        assert_eq!(cfg.trials, 7);

        let err = ExperimentConfig::parse(
            "catalog = circle_in_R2\nF = height\nproperties = morse\ntrials = 1\nbogus = 1\n",
        );
        match err {
            Err(Error::Config(msg)) => assert!(msg.contains("bogus")),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn csv_has_one_row_per_trial_property() {
        let mut cfg = small_config();
        cfg.properties = vec![Property::Morse, Property::CorankBound];
        let (report, _) = run_experiment(&cfg, RunOptions::default()).unwrap();
        let csv = report_to_csv(&report);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "trial,property,pass,key_metric,alpha_digest");
        assert_eq!(lines.len(), 1 + 3 * 2);
    }

    #[test]
    fn sweep_validates_floors() {
        let cfg = small_config();
        assert!(tolerance_sweep(&cfg, &[], RunOptions::default()).is_err());
        assert!(tolerance_sweep(&cfg, &[1e-6, 1e-4], RunOptions::default()).is_err());
        let table = tolerance_sweep(&cfg, &[1e-6], RunOptions::default()).unwrap();
        assert_eq!(table.rows.len(), 1);
    }
}
