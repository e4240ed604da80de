//! Dense linear-chain computations over a per-position emission matrix.
//!
//! All recursions run in log space. With `α` and `β` the forward and
//! backward tables, `logsumexp_y(α_t(y) + β_t(y))` equals the log-partition
//! at every position `t`.

use crate::spans::Label;

pub const NUM_LABELS: usize = Label::COUNT;

pub type Row = [f64; NUM_LABELS];

/// Label-pair and boundary weights shared by every position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potentials {
    /// `transitions[prev][next]`
    pub transitions: [Row; NUM_LABELS],
    pub start: Row,
    pub end: Row,
}

impl Default for Potentials {
    fn default() -> Self {
        Potentials {
            transitions: [[0.0; NUM_LABELS]; NUM_LABELS],
            start: [0.0; NUM_LABELS],
            end: [0.0; NUM_LABELS],
        }
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    if max.is_infinite() || max.is_nan() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Score of one label path.
pub fn path_score(emissions: &[Row], pot: &Potentials, labels: &[usize]) -> f64 {
    debug_assert_eq!(emissions.len(), labels.len());
    let Some((&first, _)) = labels.split_first() else {
        return 0.0;
    };
    let mut s = pot.start[first];
    for (t, &y) in labels.iter().enumerate() {
        s += emissions[t][y];
        if t > 0 {
            s += pot.transitions[labels[t - 1]][y];
        }
    }
    s + pot.end[labels[labels.len() - 1]]
}

/// Forward table; `alpha[t][y]` is the log-sum of all prefixes ending in `y` at `t`.
pub fn forward(emissions: &[Row], pot: &Potentials) -> Vec<Row> {
    let mut alpha: Vec<Row> = Vec::with_capacity(emissions.len());
    let mut buf = [0.0; NUM_LABELS];
    for (t, e) in emissions.iter().enumerate() {
        let mut row = [0.0; NUM_LABELS];
        if t == 0 {
            for y in 0..NUM_LABELS {
                row[y] = pot.start[y] + e[y];
            }
        } else {
            let prev = &alpha[t - 1];
            for y in 0..NUM_LABELS {
                for p in 0..NUM_LABELS {
                    buf[p] = prev[p] + pot.transitions[p][y];
                }
                row[y] = e[y] + logsumexp(&buf);
            }
        }
        alpha.push(row);
    }
    alpha
}

/// Backward table; `beta[t][y]` is the log-sum of all suffixes after `y` at `t`,
/// including the end weight.
pub fn backward(emissions: &[Row], pot: &Potentials) -> Vec<Row> {
    let n = emissions.len();
    let mut beta = vec![[0.0; NUM_LABELS]; n];
    if n == 0 {
        return beta;
    }
    beta[n - 1] = pot.end;
    let mut buf = [0.0; NUM_LABELS];
    for t in (0..n - 1).rev() {
        for y in 0..NUM_LABELS {
            for nx in 0..NUM_LABELS {
                buf[nx] = pot.transitions[y][nx] + emissions[t + 1][nx] + beta[t + 1][nx];
            }
            beta[t][y] = logsumexp(&buf);
        }
    }
    beta
}

pub fn log_partition_from_alpha(alpha: &[Row], pot: &Potentials) -> f64 {
    let last = alpha.last().expect("non-empty sequence");
    let mut buf = [0.0; NUM_LABELS];
    for y in 0..NUM_LABELS {
        buf[y] = last[y] + pot.end[y];
    }
    logsumexp(&buf)
}

pub fn log_partition(emissions: &[Row], pot: &Potentials) -> f64 {
    log_partition_from_alpha(&forward(emissions, pot), pot)
}

/// Forward-backward results for one sequence.
#[derive(Debug, Clone)]
pub struct Marginals {
    pub log_z: f64,
    /// `node[t][y] = P(y_t = y)`
    pub node: Vec<Row>,
    /// Expected transition counts summed over positions: `edge[prev][next]`.
    pub edge: [Row; NUM_LABELS],
}

pub fn marginals(emissions: &[Row], pot: &Potentials) -> Marginals {
    let alpha = forward(emissions, pot);
    let beta = backward(emissions, pot);
    let log_z = log_partition_from_alpha(&alpha, pot);
    let node = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let mut row = [0.0; NUM_LABELS];
            for y in 0..NUM_LABELS {
                row[y] = (a[y] + b[y] - log_z).exp();
            }
            row
        })
        .collect();
    let mut edge = [[0.0; NUM_LABELS]; NUM_LABELS];
    for t in 1..emissions.len() {
        for p in 0..NUM_LABELS {
            for y in 0..NUM_LABELS {
                edge[p][y] +=
                    (alpha[t - 1][p] + pot.transitions[p][y] + emissions[t][y] + beta[t][y]
                        - log_z)
                        .exp();
            }
        }
    }
    Marginals { log_z, node, edge }
}

/// Highest-scoring path. Ties go to the lowest label index, both for the
/// final label and at every backtrack step.
pub fn viterbi(emissions: &[Row], pot: &Potentials) -> Vec<usize> {
    let n = emissions.len();
    if n == 0 {
        return Vec::new();
    }
    let mut delta = [0.0; NUM_LABELS];
    for y in 0..NUM_LABELS {
        delta[y] = pot.start[y] + emissions[0][y];
    }
    let mut back = vec![[0usize; NUM_LABELS]; n];
    for t in 1..n {
        let mut next = [0.0; NUM_LABELS];
        for y in 0..NUM_LABELS {
            let mut best = 0;
            let mut best_score = delta[0] + pot.transitions[0][y];
            for (p, d) in delta.iter().enumerate().skip(1) {
                let s = d + pot.transitions[p][y];
                if s > best_score {
                    best = p;
                    best_score = s;
                }
            }
            back[t][y] = best;
            next[y] = best_score + emissions[t][y];
        }
        delta = next;
    }
    let mut last = 0;
    let mut last_score = delta[0] + pot.end[0];
    for (y, d) in delta.iter().enumerate().skip(1) {
        let s = d + pot.end[y];
        if s > last_score {
            last = y;
            last_score = s;
        }
    }
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_model() {
        let e = vec![[0.0; NUM_LABELS]; 4];
        let pot = Potentials::default();
        let z = log_partition(&e, &pot);
        assert!((z - 4.0 * (5f64).ln()).abs() < 1e-12);
        assert_eq!(viterbi(&e, &pot), vec![0; 4]);
    }

    #[test]
    fn single_position_closed_form() {
        let e = vec![[0.5, -1.0, 2.0, 0.0, 0.3]];
        let pot = Potentials {
            start: [0.1, 0.2, 0.3, 0.4, 0.5],
            end: [-0.1, 0.0, 0.1, 0.0, 1.0],
            ..Default::default()
        };
        let expected: f64 = (0..5)
            .map(|y| (pot.start[y] + e[0][y] + pot.end[y]).exp())
            .sum::<f64>()
            .ln();
        assert!((log_partition(&e, &pot) - expected).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_handles_neg_infinity() {
        assert_eq!(logsumexp(&[f64::NEG_INFINITY; 3]), f64::NEG_INFINITY);
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn long_sequence_is_finite() {
        let e: Vec<Row> = (0..5000)
            .map(|t| {
                let mut r = [0.0; NUM_LABELS];
                r[t % NUM_LABELS] = 30.0;
                r
            })
            .collect();
        let m = marginals(&e, &Potentials::default());
        assert!(m.log_z.is_finite());
        for row in &m.node {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
