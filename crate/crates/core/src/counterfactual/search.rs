//! Deterministic counterfactual search.
//!
//! Each actionable feature contributes one search axis: an evenly spaced grid
//! of [`GRID_POINTS`] values over its bounds (continuous) or its other
//! templated categories (categorical). Because the model is linear in the
//! encoded space, each option shifts the log-odds by a fixed amount, so
//! combinations are scored by adding deltas. Every emitted recommendation is
//! re-scored with a full prediction on the modified record.
//!
//! Candidates come from two passes:
//! 1. single changes: per axis, the option closest to the current value that
//!    reaches the target level;
//! 2. greedy composition, only when pass 1 yields fewer than `k`: starting
//!    from each axis in turn, keep adding the most risk-reducing option of
//!    another axis until the target is reached, drop changes that are not
//!    needed, then pull each remaining change back toward the current value
//!    as far as the target allows. Axes that succeed alone are left out of
//!    this pass unless it still leaves fewer than `k` results.
//!
//! Results are ranked by number of changes, then larger risk reduction, then
//! Easy before Difficult. Remaining ties are broken by a seeded permutation.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    apply_changes, feasibility_of, render_recommendation, search_bounds, CounterfactualError,
    CounterfactualRecommendation, Feasibility, FeatureChange,
};
use crate::ingest::{FeatureKind, FeatureSpec, FeatureValue, PatientRecord, Schema};
use crate::math::{dot, sigmoid};
use crate::model::{bucket_risk, RiskLevel, TrainedModel};

pub const GRID_POINTS: usize = 21;

struct Axis<'a> {
    spec: &'a FeatureSpec,
    current: FeatureValue,
    /// Options ordered by distance from the current value.
    options: Vec<FeatureValue>,
    /// Log-odds shift of each option.
    deltas: Vec<f64>,
}

impl Axis<'_> {
    /// Index of the option with the most negative delta.
    fn strongest(&self) -> Option<usize> {
        (0..self.deltas.len()).min_by(|&a, &b| self.deltas[a].total_cmp(&self.deltas[b]))
    }
}

/// Up to `k` recommendations that bring `record` to `target` or better by
/// changing actionable features only.
pub fn generate(
    model: &TrainedModel,
    record: &PatientRecord,
    schema: &Schema,
    target: RiskLevel,
    k: usize,
    seed: u64,
) -> Result<Vec<CounterfactualRecommendation>, CounterfactualError> {
    model.check_schema(schema)?;
    if k == 0 {
        return Err(CounterfactualError::ZeroK);
    }
    let base_x = model.encode(record)?;
    let base_logit = model.logit_encoded(&base_x);
    let prob_before = sigmoid(base_logit);
    if bucket_risk(prob_before)? <= target {
        return Err(CounterfactualError::AlreadyAtTarget);
    }
    let reaches = |logit: f64| bucket_risk(sigmoid(logit)).is_ok_and(|l| l <= target);

    let axes = build_axes(model, record, schema, &base_x)?;

    // (axis, option) pairs, sorted by axis
    let mut found: Vec<Vec<(usize, usize)>> = Vec::new();
    // Axis sets already used; two results never change the same features.
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();

    let mut solo = alloc::vec![false; axes.len()];
    for (a, axis) in axes.iter().enumerate() {
        if let Some(o) = (0..axis.options.len()).find(|&o| reaches(base_logit + axis.deltas[o])) {
            seen.insert(alloc::vec![a]);
            found.push(alloc::vec![(a, o)]);
            solo[a] = true;
        }
    }

    // Composites first avoid axes that already succeed alone, which would
    // otherwise absorb every greedy path; the second pass lifts that.
    let no_exclusions = alloc::vec![false; axes.len()];
    for excluded in [&solo, &no_exclusions] {
        if found.len() >= k {
            break;
        }
        let mut starts: Vec<usize> = (0..axes.len())
            .filter(|&a| axes[a].strongest().is_some_and(|o| axes[a].deltas[o] < 0.0))
            .collect();
        starts.sort_by(|&a, &b| {
            let da = axes[a].deltas[axes[a].strongest().unwrap()];
            let db = axes[b].deltas[axes[b].strongest().unwrap()];
            da.total_cmp(&db)
        });
        for start in starts.into_iter().filter(|&a| !excluded[a]) {
            if let Some(set) = compose(&axes, start, base_logit, &reaches, excluded) {
                if set.len() > 1 && seen.insert(set.iter().map(|&(a, _)| a).collect()) {
                    found.push(set);
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranked = Vec::with_capacity(found.len());
    for set in found {
        let tiebreak = rng.next_u64();
        let rec = materialize(model, record, &axes, &set, prob_before)?;
        if bucket_risk(rec.prob_after)? <= target {
            ranked.push((rec, tiebreak));
        }
    }
    if ranked.is_empty() {
        return Err(CounterfactualError::NoCounterfactualFound);
    }
    ranked.sort_by(|(a, ta), (b, tb)| {
        a.changes
            .len()
            .cmp(&b.changes.len())
            .then(b.risk_reduction.total_cmp(&a.risk_reduction))
            .then(a.feasibility.cmp(&b.feasibility))
            .then(ta.cmp(tb))
    });
    ranked.truncate(k);
    Ok(ranked.into_iter().map(|(r, _)| r).collect())
}

fn build_axes<'a>(
    model: &TrainedModel,
    record: &PatientRecord,
    schema: &'a Schema,
    base_x: &[f64],
) -> Result<Vec<Axis<'a>>, CounterfactualError> {
    let base_logit = model.logit_encoded(base_x);
    let mut axes = Vec::new();
    for spec in schema.actionable() {
        let current = record
            .value(&spec.name)
            .cloned()
            .ok_or_else(|| CounterfactualError::UnknownFeature(spec.name.clone()))?;
        let mut options: Vec<(f64, FeatureValue)> = match (spec.kind, &current) {
            (FeatureKind::Continuous, FeatureValue::Number(x)) => {
                let Some([lo, hi]) = search_bounds(spec, model) else {
                    continue;
                };
                (0..GRID_POINTS)
                    .map(|i| {
                        if i == GRID_POINTS - 1 {
                            hi
                        } else {
                            lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64
                        }
                    })
                    .filter(|v| v != x)
                    .map(|v| ((v - x).abs(), FeatureValue::Number(v)))
                    .collect()
            }
            (FeatureKind::Categorical, FeatureValue::Label(l)) => {
                let Some(rank) = spec.rank(l) else { continue };
                spec.categories
                    .iter()
                    .filter(|c| *c != l && spec.template(c).is_some())
                    .filter_map(|c| {
                        let r = spec.rank(c)?;
                        Some((f64::from(r.abs_diff(rank)), FeatureValue::Label(c.clone())))
                    })
                    .collect()
            }
            _ => continue,
        };
        // Stable: equal distances keep grid or category order.
        options.sort_by(|a, b| a.0.total_cmp(&b.0));
        let options: Vec<FeatureValue> = options.into_iter().map(|(_, v)| v).collect();
        let deltas = options
            .iter()
            .map(|v| {
                let mut changed = record.clone();
                changed.values.insert(spec.name.clone(), v.clone());
                let x = model.encode(&changed)?;
                Ok(dot(model.weights(), &x) + model.intercept() - base_logit)
            })
            .collect::<Result<Vec<f64>, CounterfactualError>>()?;
        if !options.is_empty() {
            axes.push(Axis {
                spec,
                current,
                options,
                deltas,
            });
        }
    }
    Ok(axes)
}

fn compose(
    axes: &[Axis<'_>],
    start: usize,
    base_logit: f64,
    reaches: &dyn Fn(f64) -> bool,
    excluded: &[bool],
) -> Option<Vec<(usize, usize)>> {
    let mut chosen: Vec<(usize, usize)> = alloc::vec![(start, axes[start].strongest()?)];
    let total = |set: &[(usize, usize)]| -> f64 {
        base_logit + set.iter().map(|&(a, o)| axes[a].deltas[o]).sum::<f64>()
    };
    while !reaches(total(&chosen)) {
        let next = (0..axes.len())
            .filter(|&a| !excluded[a] && chosen.iter().all(|&(c, _)| c != a))
            .filter_map(|a| axes[a].strongest().map(|o| (a, o)))
            .filter(|&(a, o)| axes[a].deltas[o] < 0.0)
            .min_by(|&(a, o), &(b, p)| axes[a].deltas[o].total_cmp(&axes[b].deltas[p]))?;
        chosen.push(next);
    }

    // Drop changes that are not needed, weakest first.
    let mut order: Vec<usize> = (0..chosen.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, o) = chosen[i];
        let (b, p) = chosen[j];
        axes[b].deltas[p].total_cmp(&axes[a].deltas[o])
    });
    let mut keep: Vec<bool> = alloc::vec![true; chosen.len()];
    for i in order {
        keep[i] = false;
        let trial: Vec<_> = chosen
            .iter()
            .zip(&keep)
            .filter(|(_, k)| **k)
            .map(|(c, _)| *c)
            .collect();
        if trial.is_empty() || !reaches(total(&trial)) {
            keep[i] = true;
        }
    }
    let mut chosen: Vec<_> = chosen
        .into_iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(c, _)| c)
        .collect();

    // Pull each change back toward the current value.
    for i in 0..chosen.len() {
        let (a, _) = chosen[i];
        for o in 0..axes[a].options.len() {
            chosen[i].1 = o;
            if reaches(total(&chosen)) {
                break;
            }
        }
    }
    debug_assert!(reaches(total(&chosen)));
    chosen.sort_unstable();
    Some(chosen)
}

fn materialize(
    model: &TrainedModel,
    record: &PatientRecord,
    axes: &[Axis<'_>],
    set: &[(usize, usize)],
    prob_before: f64,
) -> Result<CounterfactualRecommendation, CounterfactualError> {
    let changes: Vec<FeatureChange> = set
        .iter()
        .map(|&(a, o)| FeatureChange {
            feature: axes[a].spec.name.clone(),
            from: axes[a].current.clone(),
            to: axes[a].options[o].clone(),
        })
        .collect();
    let mut feasibility = Feasibility::Easy;
    let mut sentences: Vec<String> = Vec::with_capacity(changes.len());
    for (change, &(a, _)) in changes.iter().zip(set) {
        if feasibility_of(change, axes[a].spec)? == Feasibility::Difficult {
            feasibility = Feasibility::Difficult;
        }
        sentences.push(render_recommendation(change, axes[a].spec)?);
    }
    let prob_after = model.predict_proba(&apply_changes(record, &changes))?;
    Ok(CounterfactualRecommendation {
        changes,
        prob_after,
        risk_reduction: prob_before - prob_after,
        feasibility,
        text: sentences.join("; "),
    })
}
