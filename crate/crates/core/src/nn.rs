//! Layers built on the tape: embedding lookup, bidirectional LSTM,
//! dot-product attention over a story, dropout and the position-shared
//! dense classifier.
//!
//! Layers are light descriptors (names and sizes). Their weights live in a
//! [`ParamSet`] and are looked up through the handles returned by
//! [`ParamSet::bind`]. Sequence batches are stored example-major: row
//! `b * steps + t` holds step `t` of example `b`.

use rand::{Rng, RngCore};

use crate::params::{BoundParams, ParamSet};
use crate::tensor::{Tape, Tensor, Var};
use crate::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;

/// Uniform Glorot initialisation over a `rows × cols` matrix.
pub fn glorot(rng: &mut dyn RngCore, rows: usize, cols: usize) -> Result<Tensor> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.gen_range(-limit..=limit)).collect();
    Ok(Tensor::new(vec![rows, cols], values)?.with_grad(true))
}

fn lookup(bound: &BoundParams, name: &str) -> Result<Var> {
    bound
        .get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("parameter `{name}` not bound on tape")))
}

/// Word vectors stored one row per vocabulary entry (`V × d_e`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub weight: Tensor,
    pub trainable: bool,
}

impl EmbeddingTable {
    /// Random table with a zero PAD row.
    pub fn random(vocab_size: usize, dim: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let limit = (3.0 / dim as f64).sqrt();
        let mut values: Vec<f64> = (0..vocab_size * dim)
            .map(|_| rng.gen_range(-limit..=limit))
            .collect();
        values[PAD * dim..(PAD + 1) * dim].iter_mut().for_each(|v| *v = 0.0);
        Ok(EmbeddingTable {
            weight: Tensor::new(vec![vocab_size, dim], values)?.with_grad(true),
            trainable: true,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn row(&self, index: usize) -> &[f64] {
        let d = self.dim();
        &self.weight.values()[index * d..(index + 1) * d]
    }
}

#[derive(Debug, Clone)]
pub struct Embedding {
    pub name: String,
    pub vocab_size: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    /// Rows of the table for `tokens`; out-of-range indices are rejected.
    pub fn embed(&self, tape: &mut Tape, bound: &BoundParams, tokens: &[usize]) -> Result<Var> {
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.vocab_size) {
            return Err(Error::Contract(format!(
                "token index {bad} outside vocabulary of size {}",
                self.vocab_size
            )));
        }
        let table = lookup(bound, &self.weight_name())?;
        Ok(tape.gather_rows(table, tokens)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn tag(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Backward => "bwd",
        }
    }
}

/// Bidirectional LSTM whose output concatenates both directions.
#[derive(Debug, Clone)]
pub struct Blstm {
    pub name: String,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Blstm {
    pub fn new(name: impl Into<String>, input_dim: usize, output_dim: usize) -> Result<Self> {
        if output_dim == 0 || output_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "BLSTM output width {output_dim} must be positive and even"
            )));
        }
        Ok(Blstm {
            name: name.into(),
            input_dim,
            output_dim,
        })
    }

    pub fn hidden(&self) -> usize {
        self.output_dim / 2
    }

    fn pname(&self, dir: Direction, part: &str) -> String {
        format!("{}.{}.{}", self.name, dir.tag(), part)
    }

    /// Glorot weights, zero biases, forget-gate bias 1.
    pub fn init(&self, params: &mut ParamSet, rng: &mut dyn RngCore) -> Result<()> {
        let h = self.hidden();
        for dir in [Direction::Forward, Direction::Backward] {
            params.insert(self.pname(dir, "w_input"), glorot(rng, self.input_dim, 4 * h)?)?;
            params.insert(self.pname(dir, "w_hidden"), glorot(rng, h, 4 * h)?)?;
            let mut bias = vec![0.0; 4 * h];
            bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
            params.insert(
                self.pname(dir, "bias"),
                Tensor::new(vec![4 * h], bias)?.with_grad(true),
            )?;
        }
        Ok(())
    }

    fn run(&self, tape: &mut Tape, bound: &BoundParams, x: Var, batch: usize, dir: Direction) -> Result<Var> {
        let w_in = lookup(bound, &self.pname(dir, "w_input"))?;
        let w_h = lookup(bound, &self.pname(dir, "w_hidden"))?;
        let bias = lookup(bound, &self.pname(dir, "bias"))?;
        let proj = tape.matmul(x, w_in)?;
        let proj = tape.add_bias(proj, bias)?;
        Ok(tape.lstm_recurrence(proj, w_h, batch, dir == Direction::Backward)?)
    }

    fn both(&self, tape: &mut Tape, bound: &BoundParams, x: Var, batch: usize) -> Result<(Var, Var, usize)> {
        let rows = tape.shape(x)[0];
        if batch == 0 || rows % batch != 0 || tape.shape(x).get(1) != Some(&self.input_dim) {
            return Err(Error::Contract(format!(
                "{}: input shape {:?} does not fit batch {batch} × input width {}",
                self.name,
                tape.shape(x),
                self.input_dim
            )));
        }
        let fwd = self.run(tape, bound, x, batch, Direction::Forward)?;
        let bwd = self.run(tape, bound, x, batch, Direction::Backward)?;
        Ok((fwd, bwd, rows / batch))
    }

    /// Many-to-many: row `t` is `[forward_t ⊕ backward_t]`.
    pub fn seq(&self, tape: &mut Tape, bound: &BoundParams, x: Var, batch: usize) -> Result<Var> {
        let (fwd, bwd, _) = self.both(tape, bound, x, batch)?;
        Ok(tape.concat(&[fwd, bwd], 1)?)
    }

    /// Many-to-one: the forward state after the last step joined with the
    /// backward state after its last step (position 0). One row per example.
    pub fn pool(&self, tape: &mut Tape, bound: &BoundParams, x: Var, batch: usize) -> Result<Var> {
        let (fwd, bwd, steps) = self.both(tape, bound, x, batch)?;
        let last: Vec<usize> = (0..batch).map(|b| b * steps + steps - 1).collect();
        let first: Vec<usize> = (0..batch).map(|b| b * steps).collect();
        let f = tape.gather_rows(fwd, &last)?;
        let b = tape.gather_rows(bwd, &first)?;
        Ok(tape.concat(&[f, b], 1)?)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionResult {
    /// `T_src × T_story`, rows on the probability simplex.
    pub weights: Var,
    /// `T_src × d`, each row a convex combination of story rows.
    pub context: Var,
}

/// Dot-product attention of every `src` row over the `story` rows.
///
/// Story positions whose mask entry is `false` get zero weight. A mask with
/// no `true` entry is ignored.
pub fn attend(tape: &mut Tape, src: Var, story: Var, story_mask: Option<&[bool]>) -> Result<AttentionResult> {
    let (s_shape, st_shape) = (tape.shape(src).to_vec(), tape.shape(story).to_vec());
    if s_shape.len() != 2 || st_shape.len() != 2 || s_shape[1] != st_shape[1] {
        return Err(crate::tensor::TensorError::Dimension {
            op: "attend",
            lhs: s_shape,
            rhs: st_shape,
        }
        .into());
    }
    let story_t = tape.transpose(story)?;
    let mut logits = tape.matmul(src, story_t)?;
    if let Some(mask) = story_mask {
        if mask.len() != st_shape[0] {
            return Err(Error::Contract(format!(
                "attention mask length {} != story length {}",
                mask.len(),
                st_shape[0]
            )));
        }
        if mask.iter().any(|m| *m) && !mask.iter().all(|m| *m) {
            let row: Vec<f64> = mask
                .iter()
                .map(|&m| if m { 0.0 } else { f64::NEG_INFINITY })
                .collect();
            let offset = row.repeat(s_shape[0]);
            logits = tape.add_const(logits, &offset)?;
        }
    }
    let weights = tape.softmax_rows(logits)?;
    let context = tape.matmul(weights, story)?;
    Ok(AttentionResult { weights, context })
}

/// Inverted dropout. `rng = None` means inference, which is the identity.
pub fn dropout(tape: &mut Tape, x: Var, rate: f64, rng: Option<&mut dyn RngCore>) -> Result<Var> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    let Some(rng) = rng else {
        return Ok(x);
    };
    if rate == 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - rate);
    let mask = (0..tape.value(x).len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect();
    Ok(tape.mul_const(x, mask)?)
}

/// `s_t = W h_t + b` with one `(W, b)` shared by every position.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub input_dim: usize,
    pub output_dim: usize,
}

impl Dense {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }

    pub fn init(&self, params: &mut ParamSet, rng: &mut dyn RngCore) -> Result<()> {
        params.insert(self.weight_name(), glorot(rng, self.output_dim, self.input_dim)?)?;
        params.insert(
            self.bias_name(),
            Tensor::zeros(vec![self.output_dim])?.with_grad(true),
        )?;
        Ok(())
    }

    pub fn forward(&self, tape: &mut Tape, bound: &BoundParams, h: Var) -> Result<Var> {
        let w = lookup(bound, &self.weight_name())?;
        let b = lookup(bound, &self.bias_name())?;
        let wt = tape.transpose(w)?;
        let s = tape.matmul(h, wt)?;
        Ok(tape.add_bias(s, b)?)
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
        let v = (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        Tensor::new(vec![rows, cols], v).unwrap().with_grad(true)
    }

    fn embedding_fixture() -> (Embedding, ParamSet) {
        let table = EmbeddingTable::random(5, 3, &mut rng(1)).unwrap();
        let mut p = ParamSet::new();
        p.insert("embedding.weight", table.weight).unwrap();
        let layer = Embedding {
            name: "embedding".into(),
            vocab_size: 5,
            dim: 3,
        };
        (layer, p)
    }

    #[test]
    fn embed_lookups() {
        let (layer, params) = embedding_fixture();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let pads = layer.embed(&mut tape, &bound, &[PAD, PAD]).unwrap();
        assert_eq!(tape.shape(pads), &[2, 3]);
        assert!(tape.value(pads).iter().all(|v| *v == 0.0));

        let one = layer.embed(&mut tape, &bound, &[2]).unwrap();
        assert_eq!(tape.value(one), &params.get("embedding.weight").unwrap().values()[6..9]);

        assert!(layer.embed(&mut tape, &bound, &[5]).is_err());
    }

    #[test]
    fn embed_gradient_accumulates_on_repeated_token() {
        let (layer, params) = embedding_fixture();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let e = layer.embed(&mut tape, &bound, &[3, 3]).unwrap();
        let s = tape.sum(e).unwrap();
        tape.backward(s).unwrap();
        let g = tape.grad(bound["embedding.weight"]).unwrap();
        for (row, chunk) in g.chunks(3).enumerate() {
            let expect = if row == 3 { 2.0 } else { 0.0 };
            assert!(chunk.iter().all(|v| *v == expect));
        }
    }

    fn blstm_fixture(seed: u64, input: usize, output: usize) -> (Blstm, ParamSet) {
        let layer = Blstm::new("ctx", input, output).unwrap();
        let mut p = ParamSet::new();
        let mut r = rng(seed);
        layer.init(&mut p, &mut r).unwrap();
        // Perturb biases so the symmetry checks are not trivially satisfied.
        for (name, t) in p.iter_mut() {
            if name.ends_with("bias") {
                t.values_mut().iter_mut().for_each(|v| *v += r.gen_range(-0.5..0.5));
            }
        }
        (layer, p)
    }

    #[test]
    fn blstm_zero_weights_give_zero_output() {
        let (layer, mut p) = blstm_fixture(1, 3, 4);
        for (_, t) in p.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = random_matrix(&mut rng(2), 6, 3);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xv = tape.leaf(&x);
        let out = layer.seq(&mut tape, &bound, xv, 2).unwrap();
        assert_eq!(tape.shape(out), &[6, 4]);
        assert!(tape.value(out).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn blstm_single_step_and_pool() {
        let (layer, p) = blstm_fixture(3, 3, 4);
        let x = random_matrix(&mut rng(4), 1, 3);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xv = tape.leaf(&x);
        let seq = layer.seq(&mut tape, &bound, xv, 1).unwrap();
        let pooled = layer.pool(&mut tape, &bound, xv, 1).unwrap();
        assert_eq!(tape.value(seq), tape.value(pooled));
        assert_eq!(tape.shape(pooled), &[1, 4]);
    }

    #[test]
    fn blstm_pool_selects_last_forward_and_first_backward() {
        let (layer, p) = blstm_fixture(5, 3, 6);
        let (batch, steps, h) = (2, 4, 3);
        let x = random_matrix(&mut rng(6), batch * steps, 3);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xv = tape.leaf(&x);
        let seq = layer.seq(&mut tape, &bound, xv, batch).unwrap();
        let seq = tape.value(seq).to_vec();
        let pooled = layer.pool(&mut tape, &bound, xv, batch).unwrap();
        let pooled = tape.value(pooled);
        for b in 0..batch {
            let last = &seq[(b * steps + steps - 1) * 2 * h..][..h];
            let first = &seq[(b * steps) * 2 * h + h..][..h];
            assert_eq!(&pooled[b * 2 * h..b * 2 * h + h], last);
            assert_eq!(&pooled[b * 2 * h + h..(b + 1) * 2 * h], first);
        }
    }

    #[test]
    fn blstm_reversal_symmetry() {
        let (layer, p) = blstm_fixture(7, 3, 4);
        let h = 2;
        let steps = 5;
        let x = random_matrix(&mut rng(8), steps, 3);
        let mut reversed = Vec::new();
        for t in (0..steps).rev() {
            reversed.extend_from_slice(&x.values()[t * 3..(t + 1) * 3]);
        }
        let xr = Tensor::new(vec![steps, 3], reversed).unwrap();
        let mut swapped = ParamSet::new();
        for (name, t) in p.iter() {
            let other = if name.contains(".fwd.") {
                name.replace(".fwd.", ".bwd.")
            } else {
                name.replace(".bwd.", ".fwd.")
            };
            swapped.insert(other, t.clone()).unwrap();
        }
        let run = |params: &ParamSet, input: &Tensor| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let xv = tape.leaf(input);
            let out = layer.seq(&mut tape, &bound, xv, 1).unwrap();
            tape.value(out).to_vec()
        };
        let base = run(&p, &x);
        let mirrored = run(&swapped, &xr);
        for t in 0..steps {
            let row = &base[t * 2 * h..(t + 1) * 2 * h];
            let mrow = &mirrored[(steps - 1 - t) * 2 * h..(steps - t) * 2 * h];
            for j in 0..h {
                assert!((row[j] - mrow[h + j]).abs() < 1e-14);
                assert!((row[h + j] - mrow[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blstm_outputs_are_bounded() {
        let (layer, mut p) = blstm_fixture(9, 3, 8);
        for (_, t) in p.iter_mut() {
            t.values_mut().iter_mut().for_each(|v| *v *= 20.0);
        }
        let x = random_matrix(&mut rng(10), 12, 3);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let xv = tape.leaf(&x);
        let out = layer.seq(&mut tape, &bound, xv, 3).unwrap();
        assert!(tape.value(out).iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn attention_uniform_story_and_single_position() {
        let mut tape = Tape::new();
        let src = tape.constant(vec![2, 3], vec![0.3, -1.0, 2.0, 0.0, 0.5, 0.5]).unwrap();
        let row = [0.2, 0.4, -0.7];
        let story = tape.constant(vec![4, 3], row.repeat(4)).unwrap();
        let r = attend(&mut tape, src, story, None).unwrap();
        assert!(tape.value(r.weights).iter().all(|w| (w - 0.25).abs() < 1e-15));
        for c in tape.value(r.context).chunks(3) {
            for (a, b) in c.iter().zip(&row) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let single = tape.constant(vec![1, 3], row.to_vec()).unwrap();
        let r = attend(&mut tape, src, single, None).unwrap();
        assert_eq!(tape.value(r.weights), &[1.0, 1.0]);
        assert_eq!(tape.value(r.context), &row.repeat(2)[..]);

        let narrow = tape.constant(vec![1, 2], vec![0.0, 0.0]).unwrap();
        assert!(attend(&mut tape, src, narrow, None).is_err());
    }

    #[test]
    fn attention_concentrates_on_dominant_logit() {
        // Story rows are orthogonal unit vectors; the source aligns with one
        // of them at scale 3, so that position's logit leads by 3:
        // weight = e^3 / (e^3 + 3) ≈ 0.870 for four positions,
        // and with a gap of 4 across two positions e^4/(e^4+1) ≈ 0.982.
        let mut tape = Tape::new();
        let eye: Vec<f64> = (0..16).map(|i| if i % 5 == 0 { 1.0 } else { 0.0 }).collect();
        let story = tape.constant(vec![4, 4], eye).unwrap();
        let src = tape.constant(vec![1, 4], vec![0.0, 3.0, 0.0, 0.0]).unwrap();
        let r = attend(&mut tape, src, story, None).unwrap();
        let expect = 3f64.exp() / (3f64.exp() + 3.0);
        assert!((tape.value(r.weights)[1] - expect).abs() < 1e-12);

        let two = tape.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let src = tape.constant(vec![1, 2], vec![3.0, 0.0]).unwrap();
        let r = attend(&mut tape, src, two, None).unwrap();
        assert!(tape.value(r.weights)[0] > 0.95);
    }

    #[test]
    fn attention_mask_removes_padding_mass() {
        let mut tape = Tape::new();
        let src = tape.constant(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let story = tape.constant(vec![3, 2], vec![5.0, 5.0, 0.1, 0.2, -0.3, 0.4]).unwrap();
        let r = attend(&mut tape, src, story, Some(&[false, true, true])).unwrap();
        let w = tape.value(r.weights);
        assert_eq!(w[0], 0.0);
        assert!((w[1] + w[2] - 1.0).abs() < 1e-15);
        let r = attend(&mut tape, src, story, Some(&[false, false, false])).unwrap();
        assert!(tape.value(r.weights)[0] > 0.99);
    }

    #[test]
    fn dropout_behaviour() {
        let mut tape = Tape::new();
        let n = 100_000;
        let x = tape.constant(vec![n], vec![1.0; n]).unwrap();
        assert_eq!(dropout(&mut tape, x, 0.0, Some(&mut rng(0))).unwrap(), x);
        assert_eq!(dropout(&mut tape, x, 0.5, None).unwrap(), x);
        assert!(dropout(&mut tape, x, 1.0, None).is_err());
        assert!(dropout(&mut tape, x, -0.1, None).is_err());

        let y = dropout(&mut tape, x, 0.1, Some(&mut rng(11))).unwrap();
        let vals = tape.value(y);
        let zeros = vals.iter().filter(|v| **v == 0.0).count() as f64 / n as f64;
        assert!((zeros - 0.1).abs() < 0.01, "zero fraction {zeros}");
        let mean = vals.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn dense_is_shared_across_positions() {
        let layer = Dense {
            name: "dense".into(),
            input_dim: 3,
            output_dim: 2,
        };
        let mut p = ParamSet::new();
        layer.init(&mut p, &mut rng(12)).unwrap();
        p.get_mut("dense.weight").unwrap().values_mut().iter_mut().for_each(|v| *v = 0.0);
        p.get_mut("dense.bias").unwrap().values_mut().copy_from_slice(&[0.5, -1.5]);
        let h = random_matrix(&mut rng(13), 4, 3);
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let hv = tape.leaf(&h);
        let s = layer.forward(&mut tape, &bound, hv).unwrap();
        assert_eq!(tape.value(s), &[0.5, -1.5].repeat(4)[..]);

        let mut p = ParamSet::new();
        layer.init(&mut p, &mut rng(14)).unwrap();
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape);
        let hv = tape.leaf(&h);
        let s = layer.forward(&mut tape, &bound, hv).unwrap();
        let base = tape.value(s).to_vec();
        let perm = [2, 0, 3, 1];
        let permuted = tape.gather_rows(hv, &perm).unwrap();
        let s2 = layer.forward(&mut tape, &bound, permuted).unwrap();
        for (i, &src) in perm.iter().enumerate() {
            assert_eq!(&tape.value(s2)[i * 2..i * 2 + 2], &base[src * 2..src * 2 + 2]);
        }
    }

    #[test]
    fn dense_weight_gradient_sums_over_positions() {
        let layer = Dense {
            name: "dense".into(),
            input_dim: 3,
            output_dim: 2,
        };
        let mut p = ParamSet::new();
        layer.init(&mut p, &mut rng(15)).unwrap();
        let h = random_matrix(&mut rng(16), 5, 3);
        let build = |params: &ParamSet| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let hv = tape.leaf(&h);
            let s = layer.forward(&mut tape, &bound, hv).unwrap();
            let t = tape.tanh(s).unwrap();
            let loss = tape.sum(t).unwrap();
            (tape, bound, loss)
        };
        let loss_of = |params: &ParamSet| {
            let (tape, _, loss) = build(params);
            tape.value(loss)[0]
        };
        let (mut tape, bound, loss) = build(&p);
        tape.backward(loss).unwrap();
        let analytic = tape.grad(bound["dense.weight"]).unwrap().to_vec();
        for (i, a) in analytic.iter().enumerate() {
            let mut plus = p.clone();
            plus.get_mut("dense.weight").unwrap().values_mut()[i] += 1e-5;
            let mut minus = p.clone();
            minus.get_mut("dense.weight").unwrap().values_mut()[i] -= 1e-5;
            let num = (loss_of(&plus) - loss_of(&minus)) / 2e-5;
            assert!((a - num).abs() / a.abs().max(1e-8) < 1e-6);
        }
    }
}
