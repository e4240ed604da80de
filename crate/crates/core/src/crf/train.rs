//! Maximum-likelihood training: compiled datasets, the penalized negative
//! log-likelihood with its exact gradient, and the OWL-QN driver.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::lattice::{self, Row, NUM_LABELS};
use super::optim::{self, IterationReport, OwlqnParams, StopReason};
use super::{binarize_entry, CrfModel, LabeledSequence, ModelMetadata, TrainingConfig, Weights};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::spans::{Label, LabelSequence};

/// Sequences per work unit. Fixed so the reduction order never depends on
/// the number of threads.
const CHUNK: usize = 8;
/// Work units evaluated concurrently before their gradients are folded in.
const WAVE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledSequence {
    pub id: String,
    pub positions: Vec<Vec<(u32, f64)>>,
    pub labels: Vec<usize>,
}

/// Training sequences with attributes interned to dense ids, sorted by name.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub attributes: Vec<String>,
    pub sequences: Vec<CompiledSequence>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sequences.iter().map(|s| s.labels.len()).sum()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for s in &self.sequences {
            h.update(s.id.as_bytes());
            h.update([0]);
            for &l in &s.labels {
                h.update([l as u8]);
            }
            h.update([0xff]);
        }
        hex::encode(h.finalize())
    }
}

/// Interns attributes while sequences stream in, so feature maps can be
/// dropped right after compilation.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    index: HashMap<String, u32>,
    names: Vec<String>,
    sequences: Vec<CompiledSequence>,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, seq: &LabeledSequence) -> Result<()> {
        self.push_parts(&seq.id, &seq.features, &seq.labels)
    }

    pub fn push_parts(
        &mut self,
        id: &str,
        features: &[FeatureVector],
        labels: &LabelSequence,
    ) -> Result<()> {
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        if features.is_empty() {
            return Ok(());
        }
        let positions = features
            .iter()
            .map(|fv| {
                fv.iter()
                    .map(|(k, v)| {
                        let (name, value) = binarize_entry(k, v);
                        let next = self.names.len() as u32;
                        let id = *self.index.entry(name).or_insert_with_key(|name| {
                            self.names.push(name.clone());
                            next
                        });
                        (id, value)
                    })
                    .collect()
            })
            .collect();
        self.sequences.push(CompiledSequence {
            id: id.to_string(),
            positions,
            labels: labels.iter().map(|l| l.index()).collect(),
        });
        Ok(())
    }

    pub fn finish(self) -> Dataset {
        let mut order: Vec<u32> = (0..self.names.len() as u32).collect();
        order.sort_by(|&a, &b| self.names[a as usize].cmp(&self.names[b as usize]));
        let mut remap = vec![0u32; order.len()];
        for (new, &old) in order.iter().enumerate() {
            remap[old as usize] = new as u32;
        }
        let mut names = self.names;
        let attributes = order
            .iter()
            .map(|&old| std::mem::take(&mut names[old as usize]))
            .collect();
        let sequences = self
            .sequences
            .into_iter()
            .map(|mut s| {
                for pos in &mut s.positions {
                    for (a, _) in pos.iter_mut() {
                        *a = remap[*a as usize];
                    }
                }
                s
            })
            .collect();
        Dataset {
            attributes,
            sequences,
        }
    }
}

fn emissions(state: &[f64], positions: &[Vec<(u32, f64)>]) -> Vec<Row> {
    positions
        .iter()
        .map(|attrs| {
            let mut row = [0.0; NUM_LABELS];
            for &(a, v) in attrs {
                let w = &state[a as usize * NUM_LABELS..(a as usize + 1) * NUM_LABELS];
                for y in 0..NUM_LABELS {
                    row[y] += w[y] * v;
                }
            }
            row
        })
        .collect()
}

fn potentials_from_flat(w: &[f64], offset: usize) -> lattice::Potentials {
    let mut pot = lattice::Potentials::default();
    for p in 0..NUM_LABELS {
        for n in 0..NUM_LABELS {
            pot.transitions[p][n] = w[offset + p * NUM_LABELS + n];
        }
    }
    let s = offset + NUM_LABELS * NUM_LABELS;
    pot.start.copy_from_slice(&w[s..s + NUM_LABELS]);
    pot.end
        .copy_from_slice(&w[s + NUM_LABELS..s + 2 * NUM_LABELS]);
    pot
}

/// Adds one sequence's negative log-likelihood gradient into `grad` and
/// returns `log Z - score(gold)`.
fn sequence_nll(
    seq: &CompiledSequence,
    w: &[f64],
    offset: usize,
    pot: &lattice::Potentials,
    grad: &mut [f64],
) -> f64 {
    let em = emissions(&w[..offset], &seq.positions);
    let m = lattice::marginals(&em, pot);
    let gold = lattice::path_score(&em, pot, &seq.labels);

    for (t, attrs) in seq.positions.iter().enumerate() {
        let node = &m.node[t];
        let y_gold = seq.labels[t];
        for &(a, v) in attrs {
            let g = &mut grad[a as usize * NUM_LABELS..(a as usize + 1) * NUM_LABELS];
            for y in 0..NUM_LABELS {
                g[y] += v * node[y];
            }
            g[y_gold] -= v;
        }
    }
    for p in 0..NUM_LABELS {
        for n in 0..NUM_LABELS {
            grad[offset + p * NUM_LABELS + n] += m.edge[p][n];
        }
    }
    for t in 1..seq.labels.len() {
        grad[offset + seq.labels[t - 1] * NUM_LABELS + seq.labels[t]] -= 1.0;
    }
    let s = offset + NUM_LABELS * NUM_LABELS;
    let e = s + NUM_LABELS;
    let last = seq.labels.len() - 1;
    for y in 0..NUM_LABELS {
        grad[s + y] += m.node[0][y];
        grad[e + y] += m.node[last][y];
    }
    grad[s + seq.labels[0]] -= 1.0;
    grad[e + seq.labels[last]] -= 1.0;

    m.log_z - gold
}

/// Smooth objective `sum NLL + c2 |w|^2` and its gradient over a flat
/// weight vector laid out as in [`Weights::to_flat`].
pub(crate) fn objective(dataset: &Dataset, w: &[f64], c2: f64, grad: &mut [f64]) -> Result<f64> {
    let offset = dataset.attributes.len() * NUM_LABELS;
    debug_assert_eq!(w.len(), offset + NUM_LABELS * NUM_LABELS + 2 * NUM_LABELS);
    let pot = potentials_from_flat(w, offset);
    let chunks: Vec<&[CompiledSequence]> = dataset.sequences.chunks(CHUNK).collect();

    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut total = 0.0;
    for wave in chunks.chunks(WAVE) {
        let partials: Vec<Result<(f64, Vec<f64>)>> = wave
            .par_iter()
            .map(|chunk| {
                let mut g = vec![0.0; w.len()];
                let mut f = 0.0;
                for seq in chunk.iter() {
                    let nll = sequence_nll(seq, w, offset, &pot, &mut g);
                    if !nll.is_finite() {
                        return Err(Error::NonFinite {
                            objective: nll,
                            weight_norm: w.iter().map(|v| v * v).sum::<f64>().sqrt(),
                            sequence: seq.id.clone(),
                        });
                    }
                    f += nll;
                }
                Ok((f, g))
            })
            .collect();
        for partial in partials {
            let (f, g) = partial?;
            total += f;
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
    }
    if c2 > 0.0 {
        for (g, &wi) in grad.iter_mut().zip(w) {
            total += c2 * wi * wi;
            *g += 2.0 * c2 * wi;
        }
    }
    Ok(total)
}

/// Penalized negative log-likelihood (L2 part only) and its gradient at the
/// model's current weights. Attributes unknown to the model are ignored.
pub fn nll_and_gradient(
    model: &CrfModel,
    batch: &[LabeledSequence],
    config: &TrainingConfig,
) -> Result<(f64, Weights)> {
    if batch.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let sequences = batch
        .iter()
        .map(|s| {
            if s.features.len() != s.labels.len() || s.features.is_empty() {
                return Err(Error::LengthMismatch {
                    left: s.features.len(),
                    right: s.labels.len(),
                });
            }
            Ok(CompiledSequence {
                id: s.id.clone(),
                positions: model
                    .compile(&s.features)
                    .into_iter()
                    .map(|p| p.into_iter().map(|(a, v)| (a as u32, v)).collect())
                    .collect(),
                labels: s.labels.iter().map(|l| l.index()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        attributes: model.attributes().to_vec(),
        sequences,
    };
    let w = model.weights.to_flat();
    let mut grad = vec![0.0; w.len()];
    let f = objective(&dataset, &w, config.c2, &mut grad)?;
    Ok((f, Weights::from_flat(dataset.attributes.len(), &grad)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    pub iterations: Vec<IterationReport>,
    pub reason: StopReason,
    pub objective: f64,
}

pub fn train(sequences: &[LabeledSequence], config: &TrainingConfig) -> Result<CrfModel> {
    let mut builder = DatasetBuilder::new();
    for s in sequences {
        builder.push(s)?;
    }
    train_dataset(&builder.finish(), config, |_| {}).map(|(m, _)| m)
}

/// Trains on a compiled dataset; `on_iteration` sees every optimizer step.
pub fn train_dataset<C>(
    dataset: &Dataset,
    config: &TrainingConfig,
    mut on_iteration: C,
) -> Result<(CrfModel, TrainingReport)>
where
    C: FnMut(&IterationReport),
{
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if dataset.attributes.is_empty() {
        return Err(Error::EmptyFeatureSpace);
    }
    let params = OwlqnParams {
        c1: config.c1,
        memory: config.lbfgs_memory,
        max_iterations: config.max_iterations,
        tolerance: config.convergence_tol,
        ..Default::default()
    };
    let n_params = Weights::zeros(dataset.attributes.len()).num_parameters();
    let mut f = |w: &[f64], g: &mut [f64]| objective(dataset, w, config.c2, g);
    let mut reports = Vec::new();
    let result = optim::minimize(&mut f, vec![0.0; n_params], &params, |r| {
        log::info!(
            "iteration {:>4}  objective {:.6}  step {:.3e}  active {}",
            r.iteration,
            r.objective,
            r.step,
            r.active
        );
        reports.push(*r);
        on_iteration(r);
    })?;

    let weights = Weights::from_flat(dataset.attributes.len(), &result.x)?;
    if !weights.is_finite() {
        return Err(Error::Diverged(
            "non-finite weights after optimization".into(),
        ));
    }
    let metadata = ModelMetadata {
        c1: config.c1,
        c2: config.c2,
        max_iterations: config.max_iterations,
        iterations_run: result.iterations,
        seed: config.seed,
        corpus_fingerprint: dataset.fingerprint(),
        stop_reason: format!("{:?}", result.reason),
        ..Default::default()
    };
    let mut model = CrfModel::from_parts(dataset.attributes.clone(), weights, metadata);
    model.prune();
    Ok((
        model,
        TrainingReport {
            iterations: reports,
            reason: result.reason,
            objective: result.objective,
        },
    ))
}

/// Cuts a long sequence into pieces of roughly `max_len` tokens. Cuts happen
/// only right after a whitespace token labeled `O`, so no sentence is split;
/// a piece may exceed `max_len` when no such token is available.
pub fn chunk_ranges(labels: &[Label], is_space: &[bool], max_len: usize) -> Vec<Range<usize>> {
    let n = labels.len();
    let max_len = max_len.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        if n - start <= max_len {
            out.push(start..n);
            break;
        }
        let cut_ok = |i: usize| labels[i] == Label::O && is_space[i];
        let window_end = start + max_len;
        let cut = (start..window_end)
            .rev()
            .find(|&i| cut_ok(i))
            .or_else(|| (window_end..n).find(|&i| cut_ok(i)));
        match cut {
            Some(c) if c + 1 < n => {
                out.push(start..c + 1);
                start = c + 1;
            }
            _ => {
                out.push(start..n);
                break;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::*;

    #[test]
    fn chunking_cuts_only_at_outside_whitespace() {
        let labels = [B, I, L, O, B, L, O, U, O, B, L];
        let space = [
            false, true, false, true, false, false, true, false, true, false, false,
        ];
        let ranges = chunk_ranges(&labels, &space, 4);
        assert_eq!(ranges, vec![0..4, 4..7, 7..11]);
        assert_eq!(
            chunk_ranges(&labels, &space, 2),
            vec![0..4, 4..7, 7..9, 9..11]
        );
        let covered: usize = ranges.iter().map(|r| r.len()).sum();
        assert_eq!(covered, labels.len());
    }

    #[test]
    fn chunking_without_cut_points() {
        let labels = [B, I, I, I, L];
        let ranges = chunk_ranges(&labels, &[false; 5], 2);
        assert_eq!(ranges, vec![0..5]);
    }

    #[test]
    fn builder_sorts_attributes() {
        let mut b = DatasetBuilder::new();
        let mut fv = FeatureVector::default();
        fv.insert("z", true);
        fv.insert("a", "x");
        fv.insert("bias", 1.0);
        b.push_parts("s", &[fv], &LabelSequence(vec![U])).unwrap();
        let d = b.finish();
        assert_eq!(d.attributes, ["a=x", "bias", "z=true"]);
        let ids: Vec<u32> = d.sequences[0].positions[0].iter().map(|p| p.0).collect();
        assert_eq!(ids, [0, 1, 2]);
    }
}
