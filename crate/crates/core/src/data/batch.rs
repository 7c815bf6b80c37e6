use super::{NormalizationSpec, PouringSequence, INPUT_WIDTH};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Time-major, post-padded batch of normalized sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedBatch {
    /// One `[batch × INPUT_WIDTH]` matrix per timestep.
    pub inputs: Vec<Matrix>,
    /// `[time × batch]` normalized targets; padded cells are zero.
    pub targets: Matrix,
    /// `[time × batch]`, 1 on real steps and 0 on padding.
    pub mask: Matrix,
    pub lengths: Vec<usize>,
}

impl PaddedBatch {
    pub fn time_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn real_count(&self) -> usize {
        self.lengths.iter().sum()
    }
}

/// Pads to the longest sequence in `seqs`.
pub fn pad_and_batch(seqs: &[&PouringSequence], spec: &NormalizationSpec) -> Result<PaddedBatch> {
    let t_max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    pad_and_batch_to(seqs, spec, t_max)
}

/// Pads every sequence with trailing zeros up to `time_len` steps.
pub fn pad_and_batch_to(
    seqs: &[&PouringSequence],
    spec: &NormalizationSpec,
    time_len: usize,
) -> Result<PaddedBatch> {
    if seqs.is_empty() {
        return Err(Error::invalid("cannot batch zero sequences"));
    }
    if let Some(s) = seqs.iter().find(|s| s.is_empty()) {
        return Err(Error::invalid(format!("sequence `{}` has no steps", s.id)));
    }
    let longest = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    if time_len < longest {
        return Err(Error::invalid(format!(
            "padded length {time_len} is shorter than the longest sequence ({longest})"
        )));
    }

    let batch = seqs.len();
    let mut inputs = vec![Matrix::zeros(batch, INPUT_WIDTH); time_len];
    let mut targets = Matrix::zeros(time_len, batch);
    let mut mask = Matrix::zeros(time_len, batch);
    for (b, seq) in seqs.iter().enumerate() {
        for t in 0..seq.len() {
            let z = spec.normalize_inputs(&seq.input_row(t));
            inputs[t].row_mut(b).copy_from_slice(&z);
            targets.set(t, b, spec.normalize_target(seq.steps[t].f_lbf));
            mask.set(t, b, 1.0);
        }
    }
    Ok(PaddedBatch { inputs, targets, mask, lengths: seqs.iter().map(|s| s.len()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;
    use crate::data::{fit_normalization, StaticFeatures, TimeStep};

    fn seq(id: &str, len: usize) -> PouringSequence {
        PouringSequence {
            id: id.into(),
            steps: (0..len)
                .map(|t| TimeStep { theta_deg: 5.0 * t as f64, f_lbf: 1.0 - 0.05 * t as f64 })
                .collect(),
            statics: StaticFeatures {
                f_init: 1.0,
                f_empty: 0.2,
                f_final: 0.6,
                d_cup: 80.0 + len as f64,
                h_cup: 100.0,
                d_cta: 70.0,
                h_cta: 90.0,
                rho: 1.0,
            },
        }
    }

    fn spec_for(seqs: &[PouringSequence]) -> NormalizationSpec {
        fit_normalization(seqs, Activation::Tanh).unwrap()
    }

    fn column_sum(m: &Matrix, b: usize) -> f64 {
        (0..m.rows()).map(|t| m.get(t, b)).sum()
    }

    #[test]
    fn ragged_lengths_pad_to_longest() {
        let data = vec![seq("a", 3), seq("b", 5)];
        let refs: Vec<_> = data.iter().collect();
        let batch = pad_and_batch(&refs, &spec_for(&data)).unwrap();
        assert_eq!(batch.time_len(), 5);
        assert_eq!((column_sum(&batch.mask, 0), column_sum(&batch.mask, 1)), (3.0, 5.0));
        for t in 3..5 {
            assert_eq!(batch.targets.get(t, 0), 0.0);
            assert!(batch.inputs[t].row(0).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn no_padding_when_lengths_agree() {
        let single = vec![seq("a", 4)];
        let refs: Vec<_> = single.iter().collect();
        let batch = pad_and_batch(&refs, &spec_for(&single)).unwrap();
        assert_eq!(batch.time_len(), 4);
        assert!(batch.mask.as_slice().iter().all(|&m| m == 1.0));

        let three = vec![seq("a", 2), seq("b", 2), seq("c", 2)];
        let refs: Vec<_> = three.iter().collect();
        let batch = pad_and_batch(&refs, &spec_for(&three)).unwrap();
        assert_eq!(batch.time_len(), 2);
        assert!(batch.mask.as_slice().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn statics_are_broadcast_on_real_steps() {
        let data = vec![seq("a", 3), seq("b", 6)];
        let spec = spec_for(&data);
        let refs: Vec<_> = data.iter().collect();
        let batch = pad_and_batch(&refs, &spec).unwrap();
        for t in 0..3 {
            assert_eq!(&batch.inputs[t].row(0)[1..], &batch.inputs[0].row(0)[1..]);
        }
        assert_ne!(batch.inputs[0].row(0)[4], batch.inputs[0].row(1)[4]);
    }

    #[test]
    fn explicit_length_must_cover_longest() {
        let data = vec![seq("a", 3), seq("b", 5)];
        let refs: Vec<_> = data.iter().collect();
        let spec = spec_for(&data);
        assert!(pad_and_batch_to(&refs, &spec, 4).is_err());
        let wide = pad_and_batch_to(&refs, &spec, 10).unwrap();
        assert_eq!(wide.time_len(), 10);
        assert_eq!(wide.lengths, vec![3, 5]);
        assert!(pad_and_batch(&[], &spec).is_err());
    }
}
