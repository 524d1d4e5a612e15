//! Central finite-difference checks of every tape op and of every model
//! parameter on a small configuration.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::model::{build_model, ForwardOptions, LabelSpace, Model, ModelConfig, Task, Variant};
use crate::tensor::{OpKind, Tape, Tensor, TensorError, Var};
use crate::Result;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so that entries whose true
/// gradient is essentially zero are judged on absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;
pub const MICRO_VOCAB: usize = 20;
pub const OP_SEEDS: usize = 20;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    pub eps: f64,
    pub op_seeds: usize,
    pub variants: Vec<Variant>,
    pub task: Task,
    /// Corrupts the backward rule of one op (negative control).
    pub fault: Option<OpKind>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            seed: 0,
            eps: DEFAULT_EPS,
            op_seeds: OP_SEEDS,
            variants: Variant::ALL.to_vec(),
            task: Task::Satisf,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCheck {
    pub op: String,
    pub seeds: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub variant: String,
    pub layer: String,
    pub param: String,
    pub entries: usize,
    pub max_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub eps: f64,
    pub tolerance: f64,
    pub ops: Vec<OpCheck>,
    pub params: Vec<ParamCheck>,
    pub passed: bool,
}

impl GradcheckReport {
    /// One line per failing op or parameter.
    pub fn failures(&self) -> Vec<String> {
        let ops = self
            .ops
            .iter()
            .filter(|o| !o.passed)
            .map(|o| format!("op `{}`: max rel err {:.3e}", o.op, o.max_rel_err));
        let params = self.params.iter().filter(|p| !p.passed).map(|p| {
            format!("{} parameter `{}`: max rel err {:.3e}", p.variant, p.param, p.max_rel_err)
        });
        ops.chain(params).collect()
    }

    /// Largest relative error per (variant, layer).
    pub fn layer_summary(&self) -> Vec<(String, String, f64)> {
        let mut worst: BTreeMap<(String, String), f64> = BTreeMap::new();
        for p in &self.params {
            let e = worst.entry((p.variant.clone(), p.layer.clone())).or_insert(0.0);
            *e = e.max(p.max_rel_err);
        }
        worst.into_iter().map(|((v, l), e)| (v, l, e)).collect()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.ops
            .iter()
            .map(|o| o.max_rel_err)
            .chain(self.params.iter().map(|p| p.max_rel_err))
            .fold(0.0, f64::max)
    }
}

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> std::result::Result<Var, TensorError>>;

/// Input shapes, input value range and graph for one op.
fn op_case(kind: OpKind, rng: &mut ChaCha8Rng) -> (Vec<Vec<usize>>, (f64, f64), Build) {
    let wide = (-1.5, 1.5);
    match kind {
        OpKind::MatMul => (vec![vec![3, 4], vec![4, 2]], wide, Box::new(|t, v| t.matmul(v[0], v[1]))),
        OpKind::Transpose => (vec![vec![3, 4]], wide, Box::new(|t, v| t.transpose(v[0]))),
        OpKind::Add => (vec![vec![3, 4], vec![3, 4]], wide, Box::new(|t, v| t.add(v[0], v[1]))),
        OpKind::Mul => (vec![vec![3, 4], vec![3, 4]], wide, Box::new(|t, v| t.mul(v[0], v[1]))),
        OpKind::AddBias => (vec![vec![4, 3], vec![3]], wide, Box::new(|t, v| t.add_bias(v[0], v[1]))),
        OpKind::Sigmoid => (vec![vec![3, 4]], wide, Box::new(|t, v| t.sigmoid(v[0]))),
        OpKind::Tanh => (vec![vec![3, 4]], wide, Box::new(|t, v| t.tanh(v[0]))),
        OpKind::MulConst => {
            let f: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            (vec![vec![3, 4]], wide, Box::new(move |t, v| t.mul_const(v[0], f.clone())))
        }
        OpKind::AddConst => {
            let c: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
            (vec![vec![3, 4]], wide, Box::new(move |t, v| t.add_const(v[0], &c)))
        }
        OpKind::Concat => {
            let axis = rng.gen_range(0..2);
            let shapes = if axis == 0 {
                vec![vec![2, 3], vec![1, 3], vec![3, 3]]
            } else {
                vec![vec![3, 2], vec![3, 1], vec![3, 3]]
            };
            (shapes, wide, Box::new(move |t, v| t.concat(v, axis)))
        }
        OpKind::Slice => {
            let axis = rng.gen_range(0..2);
            (vec![vec![4, 5]], wide, Box::new(move |t, v| t.slice(v[0], axis, 1, 3)))
        }
        OpKind::GatherRows => {
            let rows: Vec<usize> = (0..6).map(|_| rng.gen_range(0..4)).collect();
            (vec![vec![4, 3]], wide, Box::new(move |t, v| t.gather_rows(v[0], &rows)))
        }
        OpKind::SoftmaxRows => (vec![vec![3, 5]], wide, Box::new(|t, v| t.softmax_rows(v[0]))),
        OpKind::CrossEntropy => {
            let (m, n) = (4, 3);
            let mut target = vec![0.0; m * n];
            for i in 0..m {
                target[i * n + rng.gen_range(0..n)] = 1.0;
            }
            let mask: Vec<f64> = (0..m).map(|i| if i == 2 { 0.0 } else { 1.0 }).collect();
            (
                vec![vec![m, n]],
                (0.05, 1.0),
                Box::new(move |t, v| t.cross_entropy(v[0], &target, &mask)),
            )
        }
        OpKind::Sum => (vec![vec![3, 4]], wide, Box::new(|t, v| t.sum(v[0]))),
        OpKind::LstmRecurrence => {
            let reverse = rng.gen_bool(0.5);
            let (batch, steps, hidden) = (2, 3, 2);
            (
                vec![vec![batch * steps, 4 * hidden], vec![hidden, 4 * hidden]],
                wide,
                Box::new(move |t, v| t.lstm_recurrence(v[0], v[1], batch, reverse)),
            )
        }
        OpKind::Leaf => unreachable!("leaves have no backward rule"),
    }
}

/// Largest relative error of one op's vector-Jacobian product on one seed.
fn check_op_once(kind: OpKind, seed: u64, eps: f64, fault: Option<OpKind>) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (shapes, (lo, hi), build) = op_case(kind, &mut rng);
    let inputs: Vec<Tensor> = shapes
        .iter()
        .map(|s| {
            let values = (0..s.iter().product()).map(|_| rng.gen_range(lo..hi)).collect();
            Tensor::new(s.clone(), values).map(|t| t.with_grad(true))
        })
        .collect::<std::result::Result<_, _>>()?;

    let mut tape = fault.map_or_else(Tape::new, Tape::with_fault);
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t)).collect();
    let out = build(&mut tape, &vars)?;
    let seed_grad: Vec<f64> = (0..tape.value(out).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    tape.backward_from(out, seed_grad.clone())?;

    let project = |ts: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = ts.iter().map(|x| t.leaf(x)).collect();
        let y = build(&mut t, &vs)?;
        Ok(t.value(y).iter().zip(&seed_grad).map(|(a, b)| a * b).sum())
    };
    let mut worst: f64 = 0.0;
    let mut probe = inputs.clone();
    for (i, v) in vars.iter().enumerate() {
        let analytic = tape.grad(*v).map_or_else(|| vec![0.0; inputs[i].numel()], <[f64]>::to_vec);
        for (j, a) in analytic.iter().enumerate() {
            let x = inputs[i].values()[j];
            probe[i].values_mut()[j] = x + eps;
            let plus = project(&probe)?;
            probe[i].values_mut()[j] = x - eps;
            let minus = project(&probe)?;
            probe[i].values_mut()[j] = x;
            worst = worst.max(rel_err(*a, (plus - minus) / (2.0 * eps)));
        }
    }
    Ok(worst)
}

/// Checks every differentiable op over `opts.op_seeds` random seeds.
pub fn check_ops(opts: &GradcheckOptions) -> Result<Vec<OpCheck>> {
    OpKind::DIFFERENTIABLE
        .iter()
        .map(|&kind| {
            let mut worst: f64 = 0.0;
            for s in 0..opts.op_seeds as u64 {
                worst = worst.max(check_op_once(kind, opts.seed.wrapping_mul(1000) + s, opts.eps, opts.fault)?);
            }
            Ok(OpCheck {
                op: kind.name().to_string(),
                seeds: opts.op_seeds,
                max_rel_err: worst,
                passed: worst <= TOLERANCE,
            })
        })
        .collect()
}

/// The configuration used for parameter checks: vocabulary 20, embedding and
/// BLSTM width 8, six tokens per side, no dropout.
pub fn micro_config(variant: Variant, task: Task, seed: u64) -> ModelConfig {
    ModelConfig {
        variant,
        task,
        embed_dim: 8,
        blstm_dim: 8,
        question_len: 6,
        answer_len: 6,
        dropout: 0.0,
        seed,
    }
}

/// Two random examples with partly padded questions and answers.
pub fn micro_batch(cfg: &ModelConfig, seed: u64) -> Vec<EncodedExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let labels = LabelSpace::for_task(cfg.task).len();
    [(cfg.question_len, cfg.answer_len - 2), (cfg.question_len - 2, cfg.answer_len)]
        .iter()
        .enumerate()
        .map(|(i, &(q_real, a_real))| {
            let mut side = |len: usize, real: usize| -> (Vec<usize>, Vec<bool>) {
                let ids = (0..len).map(|t| if t < real { rng.gen_range(2..MICRO_VOCAB) } else { 0 }).collect();
                (ids, (0..len).map(|t| t < real).collect())
            };
            let (question, question_mask) = side(cfg.question_len, q_real);
            let (answer, answer_mask) = side(cfg.answer_len, a_real);
            let gold = (0..cfg.question_len)
                .map(|t| if t < q_real { rng.gen_range(0..labels) } else { 0 })
                .collect();
            EncodedExample {
                id: format!("gradcheck-{i}"),
                product_id: String::new(),
                question_tokens: (0..q_real).map(|t| format!("w{t}")).collect(),
                question,
                answer,
                question_mask,
                answer_mask,
                labels: Some(gold),
            }
        })
        .collect()
}

fn model_loss(model: &Model, batch: &[&EncodedExample], tape: &mut Tape) -> Result<(Var, crate::params::BoundParams)> {
    let bound = model.params.bind(tape);
    let trace = model.forward(tape, &bound, batch, None, ForwardOptions::default())?;
    let loss = model.loss(tape, &trace, batch)?;
    Ok((loss, bound))
}

/// Compares backpropagated gradients of the batch loss with central finite
/// differences for every entry of every parameter of `variant`.
pub fn check_model(variant: Variant, opts: &GradcheckOptions) -> Result<Vec<ParamCheck>> {
    let cfg = micro_config(variant, opts.task, opts.seed);
    let mut model = build_model(&cfg, MICRO_VOCAB)?;
    let examples = micro_batch(&cfg, opts.seed);
    let batch: Vec<&EncodedExample> = examples.iter().collect();

    let mut tape = opts.fault.map_or_else(Tape::new, Tape::with_fault);
    let (loss, bound) = model_loss(&model, &batch, &mut tape)?;
    tape.backward(loss)?;
    model.params.zero_grads();
    model.params.accumulate_grads(&tape, &bound);

    let names: Vec<String> = model.params.names().map(str::to_string).collect();
    let mut out = Vec::with_capacity(names.len());
    for name in names {
        let analytic = model.params.require(&name)?.grad().to_vec();
        let mut worst: f64 = 0.0;
        for (j, a) in analytic.iter().enumerate() {
            let x = model.params.require(&name)?.values()[j];
            let mut eval = |value: f64| -> Result<f64> {
                model.params.get_mut(&name).expect("parameter exists").values_mut()[j] = value;
                let mut t = Tape::new();
                let (l, _) = model_loss(&model, &batch, &mut t)?;
                Ok(t.value(l)[0])
            };
            let numeric = (eval(x + opts.eps)? - eval(x - opts.eps)?) / (2.0 * opts.eps);
            eval(x)?;
            worst = worst.max(rel_err(*a, numeric));
        }
        out.push(ParamCheck {
            variant: variant.as_str().to_string(),
            layer: name.split('.').next().unwrap_or(&name).to_string(),
            entries: analytic.len(),
            param: name,
            max_rel_err: worst,
            passed: worst <= TOLERANCE,
        });
    }
    Ok(out)
}

/// Runs the op suite and the parameter suite for every requested variant.
pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let ops = check_ops(opts)?;
    let mut params = Vec::new();
    for &v in &opts.variants {
        params.extend(check_model(v, opts)?);
    }
    let passed = ops.iter().all(|o| o.passed) && params.iter().all(|p| p.passed);
    Ok(GradcheckReport {
        seed: opts.seed,
        eps: opts.eps,
        tolerance: TOLERANCE,
        ops,
        params,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_op_passes_and_faults_are_localised() {
        let clean = check_ops(&GradcheckOptions::default()).unwrap();
        assert_eq!(clean.len(), OpKind::DIFFERENTIABLE.len());
        for c in &clean {
            assert!(c.passed, "{c:?}");
        }
        for kind in [OpKind::Sum, OpKind::SoftmaxRows, OpKind::LstmRecurrence] {
            let opts = GradcheckOptions {
                op_seeds: 2,
                fault: Some(kind),
                ..GradcheckOptions::default()
            };
            let failed: Vec<String> = check_ops(&opts).unwrap().into_iter().filter(|c| !c.passed).map(|c| c.op).collect();
            assert_eq!(failed, vec![kind.name().to_string()]);
        }
    }

    #[test]
    fn rel_err_uses_the_floor() {
        assert_eq!(rel_err(1.0, 1.0), 0.0);
        assert!((rel_err(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((rel_err(1e-9, 0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn micro_batch_has_padding_on_both_sides() {
        let cfg = micro_config(Variant::Dan, Task::Compat, 3);
        let b = micro_batch(&cfg, 3);
        assert_eq!(b.len(), 2);
        assert!(b[0].answer_mask.contains(&false));
        assert!(b[1].question_mask.contains(&false));
        assert!(b.iter().all(|e| e.question.iter().all(|&t| t < MICRO_VOCAB)));
    }
}
