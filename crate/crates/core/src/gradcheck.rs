//! Central finite-difference verification of every differentiable op and of
//! the full network.
//!
//! Each check reduces the op output to a scalar through a fixed random
//! projection, so that ops with constant sums (softmax) still produce
//! informative gradients. The numeric side rebuilds the graph from constants
//! and never calls `backward`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::vocab::{BOS, PAD};
use crate::corpus::{EncodedSample, StatementMatrix};
use crate::error::{Error, Result};
use crate::model::memory::{gate, memory_hops};
use crate::model::network::{build_forward_with, init_params, DecoderInput, FaultInjection};
use crate::model::{GateQuery, GateSquash, ModelConfig, StatementEncoding};
use crate::tensor::{gru_cell, Graph, GruVars, ParameterSet, Tensor, Var};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor in the relative error, so that gradients that are
/// numerically zero compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub trials: usize,
    pub max_rel_err: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err < TOLERANCE
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub results: Vec<CheckResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(CheckResult::passed)
    }

    /// One line per check: `name<TAB>trials<TAB>max_rel_err<TAB>PASS|FAIL`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("check\ttrials\tmax_rel_err\tstatus\n");
        for r in &self.results {
            out.push_str(&format!(
                "{}\t{}\t{:.3e}\t{}\n",
                r.name,
                r.trials,
                r.max_rel_err,
                if r.passed() { "PASS" } else { "FAIL" }
            ));
        }
        out
    }
}

type Builder<'a> = dyn Fn(&mut Graph, &[Var]) -> Result<Var> + 'a;

fn projected(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn random_like(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape")
}

/// Values in `[-1, 1]` kept at least `margin` away from zero.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], margin: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let mag = rng.random_range(margin..1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

/// Max relative error between backward gradients and central differences
/// for a scalar function of `inputs`.
pub fn check_function(inputs: &[Tensor], build: &Builder) -> Result<f64> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).item())
    };
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; inputs[i].numel()]);
        for k in 0..inputs[i].numel() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + STEP;
            let up = eval(&work)?;
            work[i].data_mut()[k] = orig - STEP;
            let down = eval(&work)?;
            work[i].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[k], numeric));
        }
    }
    Ok(worst)
}

fn run_trials(
    name: &str,
    trials: usize,
    seed: u64,
    mut make: impl FnMut(&mut ChaCha8Rng) -> Result<f64>,
) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        worst = worst.max(make(&mut rng)?);
    }
    Ok(CheckResult {
        name: name.to_string(),
        trials,
        max_rel_err: worst,
    })
}

fn unary_check(
    name: &str,
    trials: usize,
    seed: u64,
    margin: f64,
    op: fn(&mut Graph, Var) -> Var,
) -> Result<CheckResult> {
    run_trials(name, trials, seed, |rng| {
        let shape = [rng.random_range(1..4), rng.random_range(1..5)];
        let x = away_from_zero(rng, &shape, margin);
        let w = random_like(rng, &shape);
        check_function(&[x], &|g, v| {
            let y = op(g, v[0]);
            projected(g, y, &w)
        })
    })
}

fn binary_check(
    name: &str,
    trials: usize,
    seed: u64,
    op: fn(&mut Graph, Var, Var) -> Result<Var>,
) -> Result<CheckResult> {
    run_trials(name, trials, seed, |rng| {
        let shape = [rng.random_range(1..4), rng.random_range(1..5)];
        let a = random_like(rng, &shape);
        let b = random_like(rng, &shape);
        let w = random_like(rng, &shape);
        check_function(&[a, b], &|g, v| {
            let y = op(g, v[0], v[1])?;
            projected(g, y, &w)
        })
    })
}

/// Every primitive op plus the composite cells, `trials` random instances
/// each.
pub fn op_suite(trials: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        run_trials("matmul", trials, seed, |rng| {
            let (r, k, c) = (rng.random_range(1..4), rng.random_range(1..4), rng.random_range(1..4));
            let a = random_like(rng, &[r, k]);
            let b = random_like(rng, &[k, c]);
            let w = random_like(rng, &[r, c]);
            check_function(&[a, b], &|g, v| {
                let y = g.matmul(v[0], v[1])?;
                projected(g, y, &w)
            })
        })?,
        run_trials("batch_matmul", trials, seed + 1, |rng| {
            let (bt, m, k, n) = (
                rng.random_range(1..3),
                rng.random_range(1..4),
                rng.random_range(1..4),
                rng.random_range(1..4),
            );
            let transpose = rng.random_bool(0.5);
            let a = random_like(rng, &[bt, m, k]);
            let b = if transpose {
                random_like(rng, &[bt, n, k])
            } else {
                random_like(rng, &[bt, k, n])
            };
            let w = random_like(rng, &[bt, m, n]);
            check_function(&[a, b], &|g, v| {
                let y = g.batch_matmul(v[0], v[1], transpose)?;
                projected(g, y, &w)
            })
        })?,
        binary_check("add", trials, seed + 2, Graph::add)?,
        binary_check("sub", trials, seed + 3, Graph::sub)?,
        binary_check("mul", trials, seed + 4, Graph::mul)?,
        unary_check("abs", trials, seed + 5, 0.01, Graph::abs)?,
        unary_check("tanh", trials, seed + 6, 0.0, Graph::tanh)?,
        unary_check("sigmoid", trials, seed + 7, 0.0, Graph::sigmoid)?,
        unary_check("relu", trials, seed + 8, 0.01, Graph::relu)?,
        unary_check("one_minus", trials, seed + 9, 0.0, Graph::one_minus)?,
        unary_check("scale", trials, seed + 10, 0.0, |g, x| g.scale(x, -1.7))?,
        run_trials("softmax", trials, seed + 11, |rng| {
            let shape = [rng.random_range(1..4), rng.random_range(1..6)];
            let x = random_like(rng, &shape);
            let w = random_like(rng, &shape);
            check_function(&[x], &|g, v| {
                let y = g.softmax(v[0])?;
                projected(g, y, &w)
            })
        })?,
        run_trials("concat", trials, seed + 12, |rng| {
            let axis = rng.random_range(0..2);
            let base = [rng.random_range(1..4), rng.random_range(1..4)];
            let mut other = base;
            other[axis] = rng.random_range(1..4);
            let mut out_shape = base;
            out_shape[axis] += other[axis];
            let a = random_like(rng, &base);
            let b = random_like(rng, &other);
            let w = random_like(rng, &out_shape);
            check_function(&[a, b], &|g, v| {
                let y = g.concat(v, axis)?;
                projected(g, y, &w)
            })
        })?,
        run_trials("embedding", trials, seed + 13, |rng| {
            let (vocab, e) = (rng.random_range(1..6), rng.random_range(1..4));
            let ids: Vec<usize> = (0..rng.random_range(0..6))
                .map(|_| rng.random_range(0..vocab))
                .collect();
            let table = random_like(rng, &[vocab, e]);
            let w = random_like(rng, &[ids.len(), e]);
            check_function(&[table], &|g, v| {
                let y = g.embedding(v[0], &ids)?;
                projected(g, y, &w)
            })
        })?,
        run_trials("cross_entropy", trials, seed + 14, |rng| {
            let (rows, v) = (rng.random_range(1..4), rng.random_range(2..6));
            let logits = random_like(rng, &[rows, v]);
            let targets: Vec<usize> = (0..rows).map(|_| rng.random_range(0..v)).collect();
            check_function(&[logits], &|g, x| {
                let p = g.softmax(x[0])?;
                g.cross_entropy(p, &targets)
            })
        })?,
        run_trials("add_bias", trials, seed + 15, |rng| {
            let shape = [rng.random_range(1..4), rng.random_range(1..4)];
            let x = random_like(rng, &shape);
            let b = random_like(rng, &shape[1..]);
            let w = random_like(rng, &shape);
            check_function(&[x, b], &|g, v| {
                let y = g.add_bias(v[0], v[1])?;
                projected(g, y, &w)
            })
        })?,
        run_trials("scale_rows", trials, seed + 16, |rng| {
            let shape = [rng.random_range(1..4), rng.random_range(1..4)];
            let x = random_like(rng, &shape);
            let s = random_like(rng, &shape[..1]);
            let w = random_like(rng, &shape);
            check_function(&[x, s], &|g, v| {
                let y = g.scale_rows(v[0], v[1])?;
                projected(g, y, &w)
            })
        })?,
        run_trials("sum_axis", trials, seed + 17, |rng| {
            let shape = [rng.random_range(1..3), rng.random_range(1..4), rng.random_range(1..4)];
            let axis = rng.random_range(0..3);
            let mut out_shape = shape.to_vec();
            out_shape.remove(axis);
            let x = random_like(rng, &shape);
            let w = random_like(rng, &out_shape);
            check_function(&[x], &|g, v| {
                let y = g.sum_axis(v[0], axis)?;
                projected(g, y, &w)
            })
        })?,
        run_trials("reshape", trials, seed + 18, |rng| {
            let (a, b) = (rng.random_range(1..4), rng.random_range(1..4));
            let x = random_like(rng, &[a, b]);
            let w = random_like(rng, &[b, a]);
            check_function(&[x], &|g, v| {
                let y = g.reshape(v[0], &[b, a])?;
                projected(g, y, &w)
            })
        })?,
        run_trials("select_rows", trials, seed + 19, |rng| {
            let shape = [rng.random_range(1..5), rng.random_range(1..4)];
            let mask: Vec<bool> = (0..shape[0]).map(|_| rng.random_bool(0.5)).collect();
            let a = random_like(rng, &shape);
            let b = random_like(rng, &shape);
            let w = random_like(rng, &shape);
            check_function(&[a, b], &|g, v| {
                let y = g.select_rows(&mask, v[0], v[1])?;
                projected(g, y, &w)
            })
        })?,
    ];
    out.push(run_trials("gru_cell", trials, seed + 20, |rng| {
        let (b, e, h) = (rng.random_range(1..3), 3, 4);
        let mut inputs = vec![random_like(rng, &[b, e]), random_like(rng, &[b, h])];
        for (_, shape, _) in GruVars::param_specs("c", e, h) {
            inputs.push(random_like(rng, &shape));
        }
        let w = random_like(rng, &[b, h]);
        check_function(&inputs, &|g, v| {
            let cell = gru_vars_from(&v[2..]);
            let y = gru_cell(g, v[0], v[1], &cell)?;
            projected(g, y, &w)
        })
    })?);
    out.push(run_trials("gate", trials, seed + 21, |rng| {
        let (b, d) = (rng.random_range(1..3), rng.random_range(1..4));
        let inputs = vec![
            random_like(rng, &[b, d]),
            random_like(rng, &[b, d]),
            random_like(rng, &[b, d]),
        ];
        let w = random_like(rng, &[b]);
        check_function(&inputs, &|g, v| {
            let y = gate(g, v[0], v[1], v[2], GateSquash::None)?;
            projected(g, y, &w)
        })
    })?);
    out.push(run_trials("memory_hops", trials.div_ceil(4), seed + 22, |rng| {
        let (b, d, n, hops) = (2, 2, 3, 2);
        let mut inputs: Vec<Tensor> = (0..n).map(|_| random_like(rng, &[b, d])).collect();
        inputs.push(random_like(rng, &[b, d]));
        for (_, shape, _) in GruVars::param_specs("m", d, d) {
            inputs.push(random_like(rng, &shape));
        }
        let active: Vec<Vec<bool>> = vec![vec![true, true], vec![true, true], vec![true, false]];
        let w = random_like(rng, &[b, d]);
        check_function(&inputs, &|g, v| {
            let cell = gru_vars_from(&v[n + 1..]);
            let hv = memory_hops(g, &v[..n], &active, v[n], hops, &cell, GateSquash::None)?;
            projected(g, *hv.memories.last().expect("hops"), &w)
        })
    })?);
    Ok(out)
}

fn gru_vars_from(v: &[Var]) -> GruVars {
    // param_specs order: w, u, b for z, r, h
    GruVars {
        w_z: v[0],
        u_z: v[1],
        b_z: v[2],
        w_r: v[3],
        u_r: v[4],
        b_r: v[5],
        w_h: v[6],
        u_h: v[7],
        b_h: v[8],
    }
}

/// Random inputs shaped for `config`: varying statement counts (so some
/// slots are padding) and varying prefix lengths.
pub fn random_batch(config: &ModelConfig, rows: usize, seed: u64) -> (Vec<EncodedSample>, Vec<Vec<usize>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(rows);
    let mut prefixes = Vec::with_capacity(rows);
    let mut targets = Vec::with_capacity(rows);
    for r in 0..rows {
        let code_ids = (0..config.tdatlen)
            .map(|_| rng.random_range(0..config.code_vocab_size))
            .collect();
        let count = if r == 0 { config.n } else { rng.random_range(0..=config.n) };
        let mut ids = vec![vec![PAD; config.y]; config.n];
        let mut lengths = vec![0; config.n];
        for t in 0..count {
            lengths[t] = rng.random_range(1..=config.y);
            for slot in ids[t].iter_mut().take(lengths[t]) {
                *slot = rng.random_range(4..config.code_vocab_size);
            }
        }
        let mut summary = vec![BOS];
        summary.extend((1..config.comlen).map(|_| rng.random_range(4..config.summary_vocab_size)));
        let plen = rng.random_range(1..config.comlen);
        let mut prefix = summary[..plen].to_vec();
        prefix.resize(config.comlen, PAD);
        samples.push(EncodedSample {
            sample_id: format!("g{r}"),
            code_ids,
            statements: StatementMatrix {
                ids,
                statement_count: count,
                lengths,
            },
            summary_ids: summary,
        });
        prefixes.push(prefix);
        targets.push(rng.random_range(0..config.summary_vocab_size));
    }
    (samples, prefixes, targets)
}

fn model_loss(
    g: &mut Graph,
    params: &ParameterSet,
    config: &ModelConfig,
    batch: &[DecoderInput],
    targets: &[usize],
    faults: FaultInjection,
) -> Result<Var> {
    let fv = build_forward_with(g, params, config, batch, faults)?;
    g.cross_entropy(fv.probs, targets)
}

/// Redraws allowed when searching for weights that reach every parameter.
const LIVE_DRAWS: u64 = 32;

/// Finite differences against backward over every weight of a randomly
/// initialized model on a random batch.
pub fn check_model(config: &ModelConfig, seed: u64, faults: FaultInjection) -> Result<f64> {
    config.validate()?;
    let mut params = init_params(&ModelConfig {
        rng_seed: seed,
        ..config.clone()
    })?;
    let (samples, prefixes, targets) = random_batch(config, 3, seed);
    let batch: Vec<DecoderInput> = samples
        .iter()
        .zip(prefixes)
        .map(|(sample, prefix)| DecoderInput { sample, prefix })
        .collect();

    // Wider weights than the default init so every nonlinearity is exercised.
    // A draw that leaves some tensor without gradient (e.g. every unit of the
    // ReLU layer dead) would make the check vacuous, so it is redrawn.
    let mut live = false;
    for attempt in 0..LIVE_DRAWS {
        let mut rng = ChaCha8Rng::seed_from_u64((seed ^ 0x5eed).wrapping_add(attempt));
        for (_, t) in params.iter_mut() {
            for v in t.data_mut() {
                *v = rng.random_range(-0.5..0.5);
            }
        }
        let mut g = Graph::new();
        let loss = model_loss(&mut g, &params, config, &batch, &targets, faults)?;
        params.zero_grad();
        g.backward(loss)?.accumulate_into(&mut params);
        live = params
            .iter()
            .all(|(_, t)| t.grad.as_ref().is_some_and(|gr| gr.iter().any(|v| v.abs() > 1e-9)));
        if live {
            break;
        }
    }
    if !live {
        return Err(Error::usage(format!(
            "no weight draw in {LIVE_DRAWS} attempts gives every parameter a gradient"
        )));
    }

    let names: Vec<String> = params.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    for name in names {
        let analytic = params
            .get(&name)
            .and_then(|t| t.grad.clone())
            .ok_or_else(|| Error::usage(format!("no gradient for `{name}`")))?;
        for k in 0..analytic.len() {
            let orig = params.get(&name).expect("exists").data()[k];
            let mut eval = |value: f64| -> Result<f64> {
                params.get_mut(&name).expect("exists").data_mut()[k] = value;
                let mut g = Graph::new();
                let l = model_loss(&mut g, &params, config, &batch, &targets, faults)?;
                Ok(g.value(l).item())
            };
            let up = eval(orig + STEP)?;
            let down = eval(orig - STEP)?;
            eval(orig)?;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(analytic[k], numeric));
        }
    }
    Ok(worst)
}

/// The network variants covered by [`model_suite`].
pub fn model_variants(base: &ModelConfig) -> Vec<(&'static str, ModelConfig)> {
    use crate::model::EncoderKind;
    vec![
        ("model/smn_positional", base.clone()),
        (
            "model/smn_eos",
            ModelConfig {
                statement_encoding: StatementEncoding::Eos,
                ..base.clone()
            },
        ),
        (
            "model/smn_summary_vector",
            ModelConfig {
                gate_query: GateQuery::SummaryVector,
                ..base.clone()
            },
        ),
        (
            "model/attendgru_only",
            ModelConfig {
                encoder_kind: EncoderKind::AttendgruOnly,
                ..base.clone()
            },
        ),
    ]
}

pub fn model_suite(base: &ModelConfig, seed: u64, faults: FaultInjection) -> Result<Vec<CheckResult>> {
    model_variants(base)
        .into_iter()
        .map(|(name, cfg)| {
            Ok(CheckResult {
                name: name.to_string(),
                trials: 1,
                max_rel_err: check_model(&cfg, seed, faults)?,
            })
        })
        .collect()
}

/// Limit on the product of all dimensions for a finite-difference run.
pub const MAX_DIM_PRODUCT: u128 = 100_000;

/// The op suite plus the model suite on `config`.
pub fn run_all(config: &ModelConfig, trials: usize, seed: u64, faults: FaultInjection) -> Result<GradcheckReport> {
    if config.dim_product() >= MAX_DIM_PRODUCT {
        return Err(Error::usage(format!(
            "gradient check needs toy dimensions (product of dims {} >= {MAX_DIM_PRODUCT})",
            config.dim_product()
        )));
    }
    let mut results = op_suite(trials, seed)?;
    results.extend(model_suite(config, seed, faults)?);
    Ok(GradcheckReport { results })
}
