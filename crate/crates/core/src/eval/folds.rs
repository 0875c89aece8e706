use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::EvalError;

/// Fold id of every example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: Vec<usize>,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// `(train indices, test indices)` for `fold`, both ascending.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.len()).partition(|&i| self.assignment[i] != fold)
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (i, f) in self.assignment.iter().enumerate() {
            writeln!(w, "{i}\t{f}")?;
        }
        Ok(())
    }

    /// Reads `example_index<TAB>fold_id` lines; indices must cover `0..n` exactly.
    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, EvalError> {
        let mut pairs = Vec::new();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || EvalError::BadFolds(format!("line {}: {line:?}", n + 1));
            let (i, f) = line.split_once('\t').ok_or_else(bad)?;
            pairs.push((i.trim().parse::<usize>().map_err(|_| bad())?, f.trim().parse::<usize>().map_err(|_| bad())?));
        }
        pairs.sort_unstable();
        if pairs.iter().enumerate().any(|(pos, &(i, _))| pos != i) {
            return Err(EvalError::BadFolds("example indices are not 0..n without gaps".into()));
        }
        let assignment: Vec<usize> = pairs.into_iter().map(|(_, f)| f).collect();
        let k = assignment.iter().max().map_or(0, |m| m + 1);
        Ok(Self { k, seed: 0, assignment })
    }
}

/// Stratified assignment: each class is shuffled with the seed, claims are
/// laid out before non-claims, and position `i` goes to fold `i mod k`.
pub fn make_folds(labels: &[usize], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::BadFolds(format!("k must be at least 2, got {k}")));
    }
    if labels.len() < k {
        return Err(EvalError::TooFewExamples { n: labels.len(), k });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(EvalError::BadLabel(bad));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = Vec::with_capacity(labels.len());
    for class in [1, 0] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        order.extend(members);
    }
    let mut assignment = vec![0; labels.len()];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldAssignment { k, seed, assignment })
}
