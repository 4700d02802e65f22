use crate::corpus::{TrainingExample, BOS, EOS, PAD};
use crate::error::{Error, Result};

/// Right-padded id matrix `[batch × len]` with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Padded {
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
    pub len: usize,
}

impl Padded {
    pub fn new<S: AsRef<[usize]>>(seqs: &[S]) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        let lengths: Vec<usize> = seqs.iter().map(|s| s.as_ref().len()).collect();
        if lengths.contains(&0) {
            return Err(Error::Contract("empty sequence in batch".into()));
        }
        let len = *lengths.iter().max().unwrap();
        let mut ids = vec![PAD; seqs.len() * len];
        let mut mask = vec![false; seqs.len() * len];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.as_ref().iter().enumerate() {
                ids[b * len + t] = id;
                mask[b * len + t] = true;
            }
        }
        Ok(Padded {
            ids,
            mask,
            lengths,
            len,
        })
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn row(&self, b: usize) -> &[usize] {
        &self.ids[b * self.len..b * self.len + self.lengths[b]]
    }

    /// Ids at time step `t` for every batch row (PAD past the end).
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.batch()).map(|b| self.ids[b * self.len + t]).collect()
    }

    pub fn column_mask(&self, t: usize) -> Vec<bool> {
        (0..self.batch()).map(|b| self.mask[b * self.len + t]).collect()
    }

    /// Row-wise token concatenation `[self_b ; other_b]`.
    pub fn concat_rows(&self, other: &Padded) -> Result<Padded> {
        if self.batch() != other.batch() {
            return Err(Error::Contract("concatenating batches of different sizes".into()));
        }
        let rows: Vec<Vec<usize>> = (0..self.batch())
            .map(|b| [self.row(b), other.row(b)].concat())
            .collect();
        Padded::new(&rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sources {
    pub post: Padded,
    pub conv: Padded,
}

impl Sources {
    pub fn new<S: AsRef<[usize]>>(posts: &[S], convs: &[S]) -> Result<Self> {
        Ok(Sources {
            post: Padded::new(posts)?,
            conv: Padded::new(convs)?,
        })
    }

    pub fn single(post: &[usize], conv: &[usize]) -> Result<Self> {
        Self::new(&[post], &[conv])
    }

    pub fn batch(&self) -> usize {
        self.post.batch()
    }
}

/// Sources plus teacher-forcing targets (`BOS … EOS`, PAD-filled).
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub sources: Sources,
    pub target: Padded,
}

impl Batch {
    pub fn from_examples(examples: &[&TrainingExample]) -> Result<Self> {
        for ex in examples {
            let t = &ex.target_ids;
            if t.len() < 2 || t[0] != BOS || *t.last().unwrap() != EOS {
                return Err(Error::Contract(format!(
                    "target must be BOS … EOS with length >= 2, got {t:?}"
                )));
            }
        }
        let posts: Vec<&[usize]> = examples.iter().map(|e| e.post_ids.as_slice()).collect();
        let convs: Vec<&[usize]> = examples.iter().map(|e| e.conv_ids.as_slice()).collect();
        let targets: Vec<&[usize]> = examples.iter().map(|e| e.target_ids.as_slice()).collect();
        Ok(Batch {
            sources: Sources::new(&posts, &convs)?,
            target: Padded::new(&targets)?,
        })
    }

    /// Predicted target tokens (everything after BOS).
    pub fn target_tokens(&self) -> usize {
        self.target.lengths.iter().map(|l| l - 1).sum()
    }
}
