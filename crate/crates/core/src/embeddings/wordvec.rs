use std::collections::HashMap;

use rand::RngExt;
use rand_distr::StandardNormal;

use super::EmbedError;
use crate::numkit::rng::keyed_rng;
use crate::scenegraph::Node;

/// Token → fixed-dimension vector, loaded from whitespace-separated text.
#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl WordVectorTable {
    pub fn from_entries(entries: Vec<(String, Vec<f64>)>) -> Result<Self, EmbedError> {
        let dim = entries.first().map_or(0, |(_, v)| v.len());
        let mut table = Self {
            dim,
            tokens: Vec::with_capacity(entries.len()),
            index: HashMap::with_capacity(entries.len()),
            vectors: Vec::with_capacity(entries.len() * dim),
        };
        for (i, (token, v)) in entries.into_iter().enumerate() {
            table.push(token, v, i + 1)?;
        }
        Ok(table)
    }

    fn push(&mut self, token: String, v: Vec<f64>, line: usize) -> Result<(), EmbedError> {
        if v.len() != self.dim {
            return Err(EmbedError::Format {
                line,
                message: format!("expected {} values, found {}", self.dim, v.len()),
            });
        }
        let token = token.to_lowercase();
        if self.index.contains_key(&token) {
            return Err(EmbedError::Format {
                line,
                message: format!("duplicate token {token:?}"),
            });
        }
        self.index.insert(token.clone(), self.tokens.len());
        self.tokens.push(token);
        self.vectors.extend(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }
}

/// One entry per line: a token followed by `d` decimal floats, all
/// separated by spaces. Blank lines are ignored.
pub fn load_word_vectors(bytes: &[u8]) -> Result<WordVectorTable, EmbedError> {
    let text = std::str::from_utf8(bytes).map_err(|e| EmbedError::Format {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    let mut table: Option<WordVectorTable> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values = parts
            .map(|p| {
                p.parse::<f64>().map_err(|e| EmbedError::Format {
                    line: lineno,
                    message: format!("bad number {p:?}: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(EmbedError::Format {
                line: lineno,
                message: "token without a vector".into(),
            });
        }
        let t = table.get_or_insert_with(|| WordVectorTable {
            dim: values.len(),
            tokens: Vec::new(),
            index: HashMap::new(),
            vectors: Vec::new(),
        });
        t.push(token.to_string(), values, lineno)?;
    }
    table.ok_or_else(|| EmbedError::Format {
        line: 0,
        message: "no vectors found".into(),
    })
}

/// Node featurizer over a word-vector table.
///
/// Labels are split on whitespace and the per-word vectors averaged.
/// Out-of-vocabulary words get a pseudo-random unit vector keyed by
/// `(word, seed)`, so the result never has zero norm by construction.
#[derive(Clone, Copy, Debug)]
pub struct Featurizer<'a> {
    table: &'a WordVectorTable,
    seed: u64,
}

impl<'a> Featurizer<'a> {
    pub fn new(table: &'a WordVectorTable, seed: u64) -> Self {
        Self { table, seed }
    }

    pub fn dim(&self) -> usize {
        self.table.dim()
    }

    pub fn featurize(&self, node: &Node) -> Vec<f64> {
        self.featurize_label(&node.label)
    }

    pub fn featurize_label(&self, label: &str) -> Vec<f64> {
        let d = self.table.dim();
        let mut acc = vec![0.0; d];
        let mut count = 0usize;
        for word in label.split_whitespace() {
            count += 1;
            match self.table.get(word) {
                Some(v) => acc.iter_mut().zip(v).for_each(|(a, b)| *a += b),
                None => acc
                    .iter_mut()
                    .zip(self.oov_vector(word))
                    .for_each(|(a, b)| *a += b),
            }
        }
        if count > 1 {
            acc.iter_mut().for_each(|a| *a /= count as f64);
        }
        acc
    }

    pub fn oov_vector(&self, word: &str) -> Vec<f64> {
        let d = self.table.dim();
        let mut rng = keyed_rng(self.seed, word, 0);
        loop {
            let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }
}

pub fn featurize_node(node: &Node, table: &WordVectorTable, seed: u64) -> Vec<f64> {
    Featurizer::new(table, seed).featurize(node)
}
