//! Independent oracles and random instance generators shared by the
//! integration tests. Nothing here calls the forward/backward or Viterbi code
//! under test.

#![allow(dead_code)]

use legal_sbd::crf::{CrfModel, LabeledSequence};
use legal_sbd::features::{FeatureValue, FeatureVector};
use legal_sbd::spans::{Label, LabelSequence};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const L: usize = 5;

/// A model over `n_real` real-valued and `n_bool` indicator attributes with
/// weights drawn uniformly from `[-scale, scale]`.
pub fn random_model(rng: &mut ChaCha8Rng, n_real: usize, n_bool: usize, scale: f64) -> CrfModel {
    let mut attrs: Vec<String> = (0..n_real).map(|i| format!("r{i}")).collect();
    attrs.extend((0..n_bool).map(|i| format!("b{i}=true")));
    let mut model = CrfModel::new(attrs.clone());
    for a in &attrs {
        for &label in &Label::ALL {
            model.set_state_weight(a, label, rng.gen_range(-scale..scale));
        }
    }
    let pot = model.potentials_mut();
    for p in 0..L {
        for n in 0..L {
            pot.transitions[p][n] = rng.gen_range(-scale..scale);
        }
        pot.start[p] = rng.gen_range(-scale..scale);
        pot.end[p] = rng.gen_range(-scale..scale);
    }
    model
}

/// Random feature vectors using (a subset of) the attributes of
/// [`random_model`], plus an occasional attribute the model does not know.
pub fn random_features(
    rng: &mut ChaCha8Rng,
    len: usize,
    n_real: usize,
    n_bool: usize,
) -> Vec<FeatureVector> {
    (0..len)
        .map(|_| {
            let mut fv = FeatureVector::default();
            for i in 0..n_real {
                if rng.gen_bool(0.7) {
                    fv.insert(format!("r{i}"), rng.gen_range(-2.0..2.0));
                }
            }
            for i in 0..n_bool {
                if rng.gen_bool(0.5) {
                    fv.insert(format!("b{i}"), true);
                }
            }
            if rng.gen_bool(0.3) {
                fv.insert("unknown", "x");
            }
            fv
        })
        .collect()
}

pub fn random_labels(rng: &mut ChaCha8Rng, len: usize) -> LabelSequence {
    LabelSequence((0..len).map(|_| Label::ALL[rng.gen_range(0..L)]).collect())
}

/// Attribute name and value, written out independently of the crate's binarization.
fn indicator(key: &str, value: &FeatureValue) -> (String, f64) {
    match value {
        FeatureValue::Bool(b) => (format!("{key}={b}"), 1.0),
        FeatureValue::Text(s) => (format!("{key}={s}"), 1.0),
        FeatureValue::Int(i) => (key.to_string(), *i as f64),
        FeatureValue::Real(r) => (key.to_string(), *r),
    }
}

/// Per-position, per-label state score, summed weight by weight.
pub fn state_table(model: &CrfModel, features: &[FeatureVector]) -> Vec<[f64; L]> {
    features
        .iter()
        .map(|fv| {
            let mut row = [0.0; L];
            for (k, v) in fv.iter() {
                let (name, x) = indicator(k, v);
                for (y, slot) in row.iter_mut().enumerate() {
                    *slot += model.state_weight(&name, Label::ALL[y]) * x;
                }
            }
            row
        })
        .collect()
}

/// Sum of every potential term along one path.
pub fn path_total(model: &CrfModel, table: &[[f64; L]], path: &[usize]) -> f64 {
    let pot = model.potentials();
    let mut s = pot.start[path[0]] + pot.end[path[path.len() - 1]];
    for (t, row) in table.iter().enumerate() {
        s += row[path[t]];
        if t > 0 {
            s += pot.transitions[path[t - 1]][path[t]];
        }
    }
    s
}

pub fn term_score(model: &CrfModel, features: &[FeatureVector], path: &[usize]) -> f64 {
    path_total(model, &state_table(model, features), path)
}

/// Every label path of length `len`, in lexicographic order.
pub fn all_paths(len: usize) -> Vec<Vec<usize>> {
    let total = L.pow(len as u32);
    (0..total)
        .map(|mut code| {
            let mut p = vec![0; len];
            for slot in p.iter_mut().rev() {
                *slot = code % L;
                code /= L;
            }
            p
        })
        .collect()
}

pub fn brute_log_partition(model: &CrfModel, features: &[FeatureVector]) -> f64 {
    let table = state_table(model, features);
    let scores: Vec<f64> = all_paths(features.len())
        .iter()
        .map(|p| path_total(model, &table, p))
        .collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln()
}

/// Highest-scoring path; the first one in lexicographic order wins ties.
pub fn brute_argmax(model: &CrfModel, features: &[FeatureVector]) -> Vec<usize> {
    let table = state_table(model, features);
    let mut best: Option<(f64, Vec<usize>)> = None;
    for p in all_paths(features.len()) {
        let s = path_total(model, &table, &p);
        if best.as_ref().is_none_or(|(b, _)| s > *b) {
            best = Some((s, p));
        }
    }
    best.unwrap().1
}

/// Brute-force penalized NLL: `sum (log Z - score(gold)) + c2 |w|^2`.
pub fn brute_objective(model: &CrfModel, batch: &[LabeledSequence], c2: f64) -> f64 {
    let mut f = 0.0;
    for seq in batch {
        let gold: Vec<usize> = seq.labels.iter().map(|l| l.index()).collect();
        f += brute_log_partition(model, &seq.features) - term_score(model, &seq.features, &gold);
    }
    let w = model.weights.to_flat();
    f + c2 * w.iter().map(|x| x * x).sum::<f64>()
}

pub fn labeled(
    rng: &mut ChaCha8Rng,
    id: usize,
    len: usize,
    n_real: usize,
    n_bool: usize,
) -> LabeledSequence {
    LabeledSequence::new(
        format!("s{id}"),
        random_features(rng, len, n_real, n_bool),
        random_labels(rng, len),
    )
    .unwrap()
}
