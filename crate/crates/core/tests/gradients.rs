//! Central finite-difference checks of the reverse-mode tape: every op and
//! layer type, plus the full encoder->decoder and encoder->actor losses.

use dwl_core::dwl::loss::{l1_row_mean, ppo_objective_graph, residual_norm_mean};
use dwl_core::dwl::{Agent, Dims, NetworkConfig, Variant};
use dwl_core::nn::{Affine, Gradients, Graph, GruCell, InitScheme, Mlp, ParamStore, Tensor, Var};
use dwl_core::rng::RngStream;
use dwl_core::Result;

const SEEDS: u64 = 20;
const EPS: f64 = 1e-5;
const TOL: f64 = 1e-4;
/// Relative errors are measured against `max(|analytic|, |numeric|, FLOOR)`.
const FLOOR: f64 = 1e-6;

/// Largest relative error over every scalar in `store`.
fn max_rel_error(store: &ParamStore, build: &dyn Fn(&mut Graph<'_>) -> Result<Var>) -> f64 {
    let mut g = Graph::new(store);
    let loss = build(&mut g).unwrap();
    let mut grads = Gradients::zeros_like(store);
    g.backward(loss, &mut grads).unwrap();
    drop(g);
    let eval = |s: &ParamStore| {
        let mut g = Graph::new(s);
        let l = build(&mut g).unwrap();
        g.value(l).item()
    };
    let mut worst: f64 = 0.0;
    let mut probe = store.clone();
    let ids: Vec<_> = store.iter().map(|(id, _, _)| id).collect();
    for id in ids {
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + EPS;
            let up = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig - EPS;
            let down = eval(&probe);
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * EPS);
            let analytic = grads.get(id).data()[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Uniform values in `[-1, 1]` kept at least `gap` away from every point in `avoid`.
fn values(rng: &mut RngStream, n: usize, avoid: &[f64], gap: f64) -> Vec<f64> {
    (0..n)
        .map(|_| loop {
            let x = rng.uniform(-1.0, 1.0);
            if avoid.iter().all(|a| (x - a).abs() > gap) {
                break x;
            }
        })
        .collect()
}

fn tensor(rng: &mut RngStream, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, values(rng, rows * cols, &[], 0.0)).unwrap()
}

/// Reduces any output to a scalar with fixed random weights, so that no
/// gradient entry vanishes by symmetry.
fn weighted_sum(g: &mut Graph<'_>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = g.value(out).shape();
    let w = tensor(&mut RngStream::new(seed, 77), r, c);
    let w = g.constant(w);
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn check_all_seeds(name: &str, setup: impl Fn(u64) -> (ParamStore, Box<dyn Fn(&mut Graph<'_>) -> Result<Var>>)) {
    for seed in 0..SEEDS {
        let (store, build) = setup(seed);
        let err = max_rel_error(&store, build.as_ref());
        assert!(err <= TOL, "{name}: seed {seed} relative error {err:e}");
    }
}

type Unary = fn(&mut Graph<'_>, Var) -> Var;

#[test]
fn elementwise_unary_ops() {
    let ops: [(&str, Unary, &[f64]); 9] = [
        ("scale", |g, a| g.scale(a, -1.7), &[]),
        ("add_scalar", |g, a| g.add_scalar(a, 0.3), &[]),
        ("elu", |g, a| g.elu(a, 1.0), &[]),
        ("sigmoid", |g, a| g.sigmoid(a), &[]),
        ("tanh", |g, a| g.tanh(a), &[]),
        ("exp", |g, a| g.exp(a), &[]),
        ("abs", |g, a| g.abs(a), &[0.0]),
        ("square", |g, a| g.square(a), &[]),
        ("clamp", |g, a| g.clamp(a, -0.4, 0.5), &[-0.4, 0.5]),
    ];
    for (name, op, kinks) in ops {
        check_all_seeds(name, |seed| {
            let mut rng = RngStream::new(seed, 1);
            let mut store = ParamStore::new();
            let x = store.add("x", Tensor::from_vec(3, 4, values(&mut rng, 12, kinks, 1e-3)).unwrap());
            let build = move |g: &mut Graph<'_>| {
                let a = g.param(x);
                let y = op(g, a);
                weighted_sum(g, y, seed)
            };
            (store, Box::new(build))
        });
    }
}

#[test]
fn binary_and_broadcast_ops() {
    type Binary = fn(&mut Graph<'_>, Var, Var) -> Result<Var>;
    let ops: [(&str, Binary, (usize, usize)); 7] = [
        ("add", |g, a, b| g.add(a, b), (3, 4)),
        ("sub", |g, a, b| g.sub(a, b), (3, 4)),
        ("mul", |g, a, b| g.mul(a, b), (3, 4)),
        ("min", |g, a, b| g.min(a, b), (3, 4)),
        ("matmul", |g, a, b| g.matmul(a, b), (4, 2)),
        ("add_row", |g, a, b| g.add_row(a, b), (1, 4)),
        ("mul_col", |g, a, b| g.mul_col(a, b), (3, 1)),
    ];
    for (name, op, (br, bc)) in ops {
        check_all_seeds(name, |seed| {
            let mut rng = RngStream::new(seed, 2);
            let mut store = ParamStore::new();
            let av = tensor(&mut rng, 3, 4);
            let mut bv = tensor(&mut rng, br, bc);
            if name == "min" {
                // Keep the operands apart so the FD step never crosses the tie.
                for (b, a) in bv.data_mut().iter_mut().zip(av.data()) {
                    if (*b - a).abs() < 1e-3 {
                        *b = a + 0.1;
                    }
                }
            }
            let a = store.add("a", av);
            let b = store.add("b", bv);
            let build = move |g: &mut Graph<'_>| {
                let (a, b) = (g.param(a), g.param(b));
                let y = op(g, a, b)?;
                weighted_sum(g, y, seed)
            };
            (store, Box::new(build))
        });
    }
}

#[test]
fn reductions_and_concat() {
    check_all_seeds("row_norm/sum_cols/mean/concat", |seed| {
        let mut rng = RngStream::new(seed, 3);
        let mut store = ParamStore::new();
        let a = store.add("a", tensor(&mut rng, 3, 4));
        let b = store.add("b", tensor(&mut rng, 2, 4));
        let build = move |g: &mut Graph<'_>| {
            let (a, b) = (g.param(a), g.param(b));
            let cat = g.concat_rows(&[a, b])?;
            let norms = g.row_norm(cat);
            let sums = g.sum_cols(cat);
            let both = g.mul(norms, sums)?;
            let m = g.mean(both);
            let s = weighted_sum(g, cat, seed)?;
            g.add(m, s)
        };
        (store, Box::new(build))
    });
}

#[test]
fn gaussian_terms() {
    check_all_seeds("gaussian_log_prob/entropy", |seed| {
        let mut rng = RngStream::new(seed, 4);
        let mut store = ParamStore::new();
        let mean = store.add("mean", tensor(&mut rng, 5, 3));
        let log_std = store.add("log_std", tensor(&mut rng, 1, 3).map(|x| 0.5 * x));
        let actions = tensor(&mut rng, 5, 3).map(|x| 2.0 * x);
        let build = move |g: &mut Graph<'_>| {
            let (m, ls) = (g.param(mean), g.param(log_std));
            let lp = g.gaussian_log_prob(m, ls, actions.clone())?;
            let lp = weighted_sum(g, lp, seed)?;
            let h = g.gaussian_entropy(ls);
            let h = g.scale(h, 0.3);
            g.add(lp, h)
        };
        (store, Box::new(build))
    });
}

#[test]
fn layer_types() {
    check_all_seeds("affine", |seed| {
        let mut rng = RngStream::new(seed, 5);
        let mut store = ParamStore::new();
        let layer = Affine::new(&mut store, &mut rng, "fc", 4, 3, InitScheme::FanIn);
        let x = store.add("x", tensor(&mut rng, 2, 4));
        let build = move |g: &mut Graph<'_>| {
            let xv = g.param(x);
            let y = layer.forward(g, xv)?;
            weighted_sum(g, y, seed)
        };
        (store, Box::new(build))
    });
    check_all_seeds("mlp", |seed| {
        let mut rng = RngStream::new(seed, 6);
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, &mut rng, "mlp", &[4, 6, 5, 2], InitScheme::FanIn);
        let x = store.add("x", tensor(&mut rng, 3, 4));
        let build = move |g: &mut Graph<'_>| {
            let xv = g.param(x);
            let y = mlp.forward(g, xv)?;
            weighted_sum(g, y, seed)
        };
        (store, Box::new(build))
    });
    check_all_seeds("gru", |seed| {
        let mut rng = RngStream::new(seed, 7);
        let mut store = ParamStore::new();
        let gru = GruCell::new(&mut store, &mut rng, "gru", 3, 4, InitScheme::FanIn);
        let x0 = store.add("x0", tensor(&mut rng, 2, 3));
        let x1 = store.add("x1", tensor(&mut rng, 2, 3));
        let h = store.add("h", tensor(&mut rng, 2, 4));
        let build = move |g: &mut Graph<'_>| {
            let (x0, x1, h) = (g.param(x0), g.param(x1), g.param(h));
            let h1 = gru.step(g, x0, h)?;
            let h2 = gru.step(g, x1, h1)?;
            weighted_sum(g, h2, seed)
        };
        (store, Box::new(build))
    });
}

fn small_agent(seed: u64) -> Agent {
    let net = NetworkConfig {
        variant: Variant::Dwl,
        gru_hidden: 6,
        encoder_hidden: vec![5],
        latent: 3,
        decoder_hidden: vec![5],
        actor_hidden: vec![4],
        critic_hidden: vec![4],
        baseline_hidden: vec![4],
        init_std: 0.8,
        actor_output_scale: 1.0,
    };
    let dims = Dims { obs: 4, state: 7, action: 2 };
    Agent::new(&net, dims, false, &mut RngStream::new(seed, 8)).unwrap()
}

/// Unrolls the encoder over `steps` with an episode boundary after step 1.
fn unroll(agent: &Agent, g: &mut Graph<'_>, obs: &[Tensor], batch: usize) -> Result<Var> {
    let mut h = g.constant(agent.zero_hidden(batch));
    let mut zs = Vec::new();
    for (t, o) in obs.iter().enumerate() {
        let x = g.constant(o.clone());
        let (h2, z) = agent.encode(g, x, h)?;
        zs.push(z);
        let keep: Vec<f64> = (0..batch).map(|r| if t == 1 && r == 0 { 0.0 } else { 1.0 }).collect();
        let mask = g.constant(Tensor::column(&keep));
        h = g.mul_col(h2, mask)?;
    }
    g.concat_rows(&zs)
}

#[test]
fn encoder_decoder_loss_path() {
    for seed in 0..SEEDS {
        let agent = small_agent(seed);
        let mut rng = RngStream::new(seed, 9);
        let (batch, steps) = (2, 3);
        let obs: Vec<Tensor> = (0..steps).map(|_| tensor(&mut rng, batch, 4)).collect();
        let states = tensor(&mut rng, batch * steps, 7);
        let build = |g: &mut Graph<'_>| {
            let z = unroll(&agent, g, &obs, batch)?;
            let rec = agent.decode(g, z)?;
            let target = g.constant(states.clone());
            let err = residual_norm_mean(g, rec, target, false)?;
            let l1 = l1_row_mean(g, z);
            let l1 = g.scale(l1, 0.002);
            g.add(err, l1)
        };
        let err = max_rel_error(agent.params(), &build);
        assert!(err <= TOL, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn encoder_actor_loss_path() {
    for seed in 0..SEEDS {
        let agent = small_agent(seed);
        let mut rng = RngStream::new(seed, 10);
        let (batch, steps) = (2, 3);
        let rows = batch * steps;
        let obs: Vec<Tensor> = (0..steps).map(|_| tensor(&mut rng, batch, 4)).collect();
        let actions = tensor(&mut rng, rows, 2);
        let adv = tensor(&mut rng, rows, 1);
        // Behaviour log-probs near the current ones, away from the clip edges.
        let logp_now = {
            let mut g = Graph::new(agent.params());
            let z = unroll(&agent, &mut g, &obs, batch).unwrap();
            let m = agent.policy_mean(&mut g, z).unwrap();
            let ls = agent.log_std(&mut g);
            let lp = g.gaussian_log_prob(m, ls, actions.clone()).unwrap();
            g.value(lp).clone()
        };
        let shifts = values(&mut rng, rows, &[-0.2231 / 0.4, 0.1823 / 0.4], 1e-2);
        let logp_old = logp_now.zip_map(&Tensor::column(&shifts), |l, s| l - 0.4 * s);
        let build = |g: &mut Graph<'_>| {
            let z = unroll(&agent, g, &obs, batch)?;
            let m = agent.policy_mean(g, z)?;
            let ls = agent.log_std(g);
            let lp = g.gaussian_log_prob(m, ls, actions.clone())?;
            let surr = ppo_objective_graph(g, lp, &logp_old, &adv, 0.8, 1.2)?;
            let h = g.gaussian_entropy(ls);
            let h = g.scale(h, 0.005);
            let obj = g.add(surr, h)?;
            Ok(g.scale(obj, -5.0))
        };
        let err = max_rel_error(agent.params(), &build);
        assert!(err <= TOL, "seed {seed}: relative error {err:e}");
    }
}
