use ndarray::Array2;

use super::TextError;

/// One window of next-token prediction data, `batch_size × len`.
///
/// `targets[[b, t]]` is the stream successor of `inputs[[b, t]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmBatch {
    pub inputs: Array2<usize>,
    pub targets: Array2<usize>,
}

impl LmBatch {
    pub fn batch_size(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Lays the stream out as `batch_size` contiguous strips and cuts them into
/// windows of `bptt_len`. The last window may be shorter; ids past the final
/// full strip are dropped.
pub fn make_lm_batches(ids: &[usize], batch_size: usize, bptt_len: usize) -> Result<Vec<LmBatch>, TextError> {
    if batch_size == 0 || bptt_len == 0 {
        return Err(TextError::ZeroBatchDimension);
    }
    if ids.len() < batch_size * 2 {
        return Err(TextError::StreamTooShort {
            len: ids.len(),
            batch_size,
        });
    }
    let strip = ids.len() / batch_size;
    let mut batches = Vec::new();
    let mut start = 0;
    while start + 1 < strip {
        let len = bptt_len.min(strip - 1 - start);
        let inputs = Array2::from_shape_fn((batch_size, len), |(b, t)| ids[b * strip + start + t]);
        let targets = Array2::from_shape_fn((batch_size, len), |(b, t)| ids[b * strip + start + t + 1]);
        batches.push(LmBatch { inputs, targets });
        start += bptt_len;
    }
    Ok(batches)
}

/// A padded classification batch. Rows are sorted by descending length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierBatch {
    /// `batch × max_len`, right-padded with the pad id.
    pub ids: Array2<usize>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
    /// Position of each row in the input dataset.
    pub indices: Vec<usize>,
}

impl ClassifierBatch {
    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }
}

/// Buckets sequences by descending length (stable for equal lengths) and pads
/// each batch to its own longest member.
pub fn make_classifier_batches(
    examples: &[(Vec<usize>, usize)],
    batch_size: usize,
    pad_id: usize,
) -> Result<Vec<ClassifierBatch>, TextError> {
    if examples.is_empty() {
        return Err(TextError::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(TextError::ZeroBatchDimension);
    }
    if let Some(i) = examples.iter().position(|(s, _)| s.is_empty()) {
        return Err(TextError::EmptySequence(i));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| examples[b].0.len().cmp(&examples[a].0.len()));

    Ok(order
        .chunks(batch_size)
        .map(|chunk| {
            let max_len = examples[chunk[0]].0.len();
            let mut ids = Array2::from_elem((chunk.len(), max_len), pad_id);
            for (row, &i) in chunk.iter().enumerate() {
                for (t, &id) in examples[i].0.iter().enumerate() {
                    ids[[row, t]] = id;
                }
            }
            ClassifierBatch {
                ids,
                lengths: chunk.iter().map(|&i| examples[i].0.len()).collect(),
                labels: chunk.iter().map(|&i| examples[i].1).collect(),
                indices: chunk.to_vec(),
            }
        })
        .collect())
}
