//! The trainable dense encoder: one embedding row per vocabulary entry,
//! inverted dropout on token vectors, mean pooling, and cosine similarity.
//! Gradients are computed analytically; training stays in 64-bit.
//!
//! The encoder is deliberately shallow so every training mechanism built on
//! top of it stays architecture-agnostic; a deeper encoder can replace it
//! behind the same encode/grad surface.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::binio;
use crate::corpus::{TokenSeq, Vocabulary};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"LPEN";
const VERSION: u32 = 1;

/// A pooled representation.
pub type Embedding = Vec<f64>;

/// The full trainable state: a `vocab_size x dim` embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    data: Vec<f64>,
    vocab_size: usize,
    dim: usize,
}

impl EncoderParams {
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: u32) -> &[f64] {
        let start = index as usize * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn row_mut(&mut self, index: u32) -> &mut [f64] {
        let start = index as usize * self.dim;
        &mut self.data[start..start + self.dim]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_entries(vocab_size: usize, dim: usize, data: Vec<f64>) -> Result<EncoderParams> {
        if data.len() != vocab_size * dim {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for {vocab_size}x{dim}, got {}",
                vocab_size * dim,
                data.len()
            )));
        }
        Ok(EncoderParams {
            data,
            vocab_size,
            dim,
        })
    }
}

/// Initialize entries i.i.d. uniform in `[-0.5/dim, 0.5/dim)` from the
/// seeded source.
pub fn init_params(vocab_size: usize, dim: usize, seed: u64) -> Result<EncoderParams> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!(
            "embedding dim must be at least 2, got {dim}"
        )));
    }
    if vocab_size == 0 {
        return Err(Error::EmptyInput("vocabulary"));
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let half = 0.5 / dim as f64;
    let data = (0..vocab_size * dim)
        .map(|_| (rng.gen::<f64>() - 0.5) * 2.0 * half)
        .collect();
    EncoderParams::from_entries(vocab_size, dim, data)
}

/// Per-(position, dimension) keep flags for inverted dropout.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    keep: Vec<bool>,
    positions: usize,
    dim: usize,
    rate: f64,
}

impl DropoutMask {
    /// Draw a mask for `positions x dim` entries at the given rate.
    pub fn generate<R: Rng>(rng: &mut R, positions: usize, dim: usize, rate: f64) -> DropoutMask {
        debug_assert!((0.0..1.0).contains(&rate));
        let keep = (0..positions * dim).map(|_| rng.gen::<f64>() >= rate).collect();
        DropoutMask {
            keep,
            positions,
            dim,
            rate,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Multiplier for a kept entry: dropped entries are zeroed and kept
    /// entries scaled by `1/(1-rate)` so inference stays mask-free.
    fn scale(&self) -> f64 {
        1.0 / (1.0 - self.rate)
    }

    fn factor(&self, position: usize, j: usize) -> f64 {
        if self.keep[position * self.dim + j] {
            self.scale()
        } else {
            0.0
        }
    }

    fn check_shape(&self, positions: usize, dim: usize) -> Result<()> {
        if self.positions != positions || self.dim != dim {
            return Err(Error::ShapeMismatch(format!(
                "dropout mask is {}x{}, input is {positions}x{dim}",
                self.positions, self.dim
            )));
        }
        Ok(())
    }
}

/// Mean-pool the (optionally dropout-masked) embedding rows of a token
/// sequence. Empty sequences are an error.
pub fn encode(
    params: &EncoderParams,
    tokens: &TokenSeq,
    mask: Option<&DropoutMask>,
) -> Result<Embedding> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if let Some(m) = mask {
        m.check_shape(tokens.len(), params.dim)?;
    }
    let inv_len = 1.0 / tokens.len() as f64;
    let mut out = vec![0.0f64; params.dim];
    for (pos, &token) in tokens.tokens.iter().enumerate() {
        let row = params.row(token);
        match mask {
            Some(m) => {
                for (j, &v) in row.iter().enumerate() {
                    out[j] += m.factor(pos, j) * v;
                }
            }
            None => {
                for (j, &v) in row.iter().enumerate() {
                    out[j] += v;
                }
            }
        }
    }
    for v in &mut out {
        *v *= inv_len;
    }
    Ok(out)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Scaled cosine similarity. `scale` is 1 for retrieval-time ranking and
/// the configured rescale (default 20) inside training losses.
pub fn similarity(a: &[f64], b: &[f64], scale: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "similarity operands have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument(
            "cosine similarity of a zero vector".into(),
        ));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sim = scale * dot / (na * nb);
    if !sim.is_finite() {
        return Err(Error::NonFinite("similarity"));
    }
    Ok(sim)
}

/// Gradient of `scale * cos(a, b)` with respect to `a`, with `b` held
/// constant.
pub(crate) fn similarity_grad_wrt_a(a: &[f64], b: &[f64], scale: f64) -> Embedding {
    let na = norm(a);
    let nb = norm(b);
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c1 = scale / (na * nb);
    let c2 = scale * dot / (na * na * na * nb);
    a.iter().zip(b).map(|(&x, &y)| c1 * y - c2 * x).collect()
}

/// Parameter gradient sparse over the embedding rows that were touched.
#[derive(Debug, Clone)]
pub struct RowGrads {
    dim: usize,
    rows: HashMap<u32, Vec<f64>>,
}

impl RowGrads {
    pub fn new(dim: usize) -> RowGrads {
        RowGrads {
            dim,
            rows: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, index: u32) -> Option<&[f64]> {
        self.rows.get(&index).map(Vec::as_slice)
    }

    pub fn touched_rows(&self) -> impl Iterator<Item = u32> + '_ {
        self.rows.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn add(&mut self, index: u32, values: &[f64]) {
        debug_assert_eq!(values.len(), self.dim);
        let row = self
            .rows
            .entry(index)
            .or_insert_with(|| vec![0.0; self.dim]);
        for (r, v) in row.iter_mut().zip(values) {
            *r += v;
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        for row in self.rows.values() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("gradient"));
            }
        }
        Ok(())
    }
}

/// Backpropagate an upstream gradient on the pooled embedding into the
/// touched embedding rows: each position contributes `upstream / len`,
/// routed through the same mask scaling as the forward pass.
pub fn grad_encode(
    params: &EncoderParams,
    tokens: &TokenSeq,
    mask: Option<&DropoutMask>,
    upstream: &[f64],
    grads: &mut RowGrads,
) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("token sequence"));
    }
    if upstream.len() != params.dim {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient has length {}, dim is {}",
            upstream.len(),
            params.dim
        )));
    }
    if let Some(m) = mask {
        m.check_shape(tokens.len(), params.dim)?;
    }
    let inv_len = 1.0 / tokens.len() as f64;
    let mut contribution = vec![0.0f64; params.dim];
    for (pos, &token) in tokens.tokens.iter().enumerate() {
        match mask {
            Some(m) => {
                for (j, c) in contribution.iter_mut().enumerate() {
                    *c = m.factor(pos, j) * upstream[j] * inv_len;
                }
            }
            None => {
                for (j, c) in contribution.iter_mut().enumerate() {
                    *c = upstream[j] * inv_len;
                }
            }
        }
        grads.add(token, &contribution);
    }
    Ok(())
}

/// A trained (or initialized) encoder together with the vocabulary that
/// indexes its rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub params: EncoderParams,
}

impl Checkpoint {
    pub fn new(vocab: Vocabulary, params: EncoderParams) -> Result<Checkpoint> {
        if vocab.len() != params.vocab_size() {
            return Err(Error::ShapeMismatch(format!(
                "vocabulary has {} terms, parameters have {} rows",
                vocab.len(),
                params.vocab_size()
            )));
        }
        Ok(Checkpoint { vocab, params })
    }

    /// Write to disk. Layout: magic `LPEN`, version u32 LE, vocab size
    /// u64 LE, dim u32 LE, vocabulary terms (u32-length-prefixed UTF-8),
    /// embedding matrix row-major as f64 LE.
    pub fn save(&self, path: &Path) -> Result<()> {
        let display = path.display().to_string();
        let file = File::create(path).map_err(|e| Error::io(&display, e))?;
        let mut w = BufWriter::new(file);
        let io_err = |e| Error::io(&display, e);

        w.write_all(&MAGIC).map_err(io_err)?;
        binio::write_u32(&mut w, VERSION).map_err(io_err)?;
        binio::write_u64(&mut w, self.vocab.len() as u64).map_err(io_err)?;
        binio::write_u32(&mut w, self.params.dim() as u32).map_err(io_err)?;
        for term in self.vocab.terms() {
            binio::write_string(&mut w, term).map_err(io_err)?;
        }
        for &v in self.params.entries() {
            binio::write_f64(&mut w, v).map_err(io_err)?;
        }
        w.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let display = path.display().to_string();
        let file = File::open(path).map_err(|e| Error::io(&display, e))?;
        let mut r = BufReader::new(file);

        binio::read_header(&mut r, MAGIC, VERSION)?;
        let vocab_size = binio::read_u64(&mut r, "vocab size")? as usize;
        let dim = binio::read_u32(&mut r, "dim")? as usize;
        if dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "checkpoint dim must be at least 2, got {dim}"
            )));
        }
        let mut terms = Vec::with_capacity(vocab_size);
        for _ in 0..vocab_size {
            terms.push(binio::read_string(&mut r, "vocabulary term")?);
        }
        let vocab = Vocabulary::from_terms(terms)?;
        let mut data = Vec::with_capacity(vocab_size * dim);
        for _ in 0..vocab_size * dim {
            data.push(binio::read_f64(&mut r, "embedding matrix")?);
        }
        binio::expect_eof(&mut r, &display)?;
        let params = EncoderParams::from_entries(vocab_size, dim, data)?;
        Checkpoint::new(vocab, params)
    }
}
