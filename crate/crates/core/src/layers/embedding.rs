use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::Tensor;

/// Embedding rows are drawn uniformly from `±EMBED_INIT_RANGE`.
pub const EMBED_INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub table: Tensor,
}

impl Embedding {
    pub fn new(vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            table: super::uniform(&[vocab_size, dim], EMBED_INIT_RANGE, rng),
        }
    }

    pub fn zeros(vocab_size: usize, dim: usize) -> Self {
        Embedding {
            table: Tensor::zeros(&[vocab_size, dim]),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn lookup(&self, ids: &[u32]) -> Result<Tensor> {
        let (v, e) = (self.vocab_size(), self.dim());
        let mut out = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            let id = id as usize;
            if id >= v {
                return Err(Error::Vocabulary { id, size: v });
            }
            out.extend_from_slice(self.table.row(id));
        }
        Tensor::from_vec(&[ids.len(), e], out)
    }

    /// Scatters `grad_out` (L × e) into `grads.table`, accumulating rows for
    /// repeated ids.
    pub fn backward_into(&self, ids: &[u32], grad_out: &Tensor, grads: &mut Embedding) {
        for (t, &id) in ids.iter().enumerate() {
            let src = grad_out.row(t);
            for (g, s) in grads.table.row_mut(id as usize).iter_mut().zip(src) {
                *g += s;
            }
        }
    }
}

impl DiffOp for Embedding {
    type Input = [u32];
    type Cache = Vec<u32>;

    fn forward(&self, ids: &[u32], _mode: Mode, _rng: &mut OpRng) -> Result<(Tensor, Vec<u32>)> {
        Ok((self.lookup(ids)?, ids.to_vec()))
    }

    fn backward(&self, ids: &Vec<u32>, grad_out: &Tensor) -> Result<OpGrads> {
        let mut g = Embedding::zeros(self.vocab_size(), self.dim());
        self.backward_into(ids, grad_out, &mut g);
        Ok(OpGrads {
            input: None,
            params: vec![g.table],
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.table]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.table]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_op;
    use rand::SeedableRng;

    fn table() -> Embedding {
        Embedding {
            table: Tensor::from_vec(&[4, 2], (0..8).map(f64::from).collect()).unwrap(),
        }
    }

    #[test]
    fn repeated_lookup() {
        let x = table().lookup(&[0, 0]).unwrap();
        assert_eq!(x.row(0), x.row(1));
        assert_eq!(x.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn identity_lookup() {
        let x = table().lookup(&[1, 2]).unwrap();
        assert_eq!(x.data(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn backward_accumulates_repeated_ids() {
        let emb = table();
        let mut g = Embedding::zeros(4, 2);
        emb.backward_into(&[3, 3], &Tensor::filled(&[2, 2], 1.0), &mut g);
        assert_eq!(g.table.row(3), &[2.0, 2.0]);
        for r in 0..3 {
            assert_eq!(g.table.row(r), &[0.0, 0.0]);
        }
    }

    #[test]
    fn out_of_vocabulary_id() {
        assert!(matches!(
            table().lookup(&[4]),
            Err(Error::Vocabulary { id: 4, size: 4 })
        ));
    }

    #[test]
    fn gradcheck() {
        let mut emb = Embedding::new(5, 3, &mut OpRng::seed_from_u64(1));
        let err = check_op(&mut emb, &[1, 4, 1, 0][..], Mode::Train, 3).unwrap();
        assert!(err <= 1e-6, "{err}");
    }
}
