mod support;

use std::collections::{BTreeSet, HashMap};

use psn_core::numerics::dist::{logit, softmax};
use psn_core::numerics::{AdamConfig, CounterRng, Distribution, Value};
use psn_core::ppl::{generate_traces, Context, Observations, PriorController, Program, Trace};
use psn_core::sims::loopy::iterations;
use psn_core::sims::{Branch2, Branch2Config, Loopy, LoopyConfig};
use psn_core::surrogate::{psn_sample, psn_train, run_surrogate, Cursor, MissingObservation, Next, PsnConfig, SurrogateModel};
use psn_core::{Result, TrainConfig};

fn config(hidden: usize) -> PsnConfig {
    PsnConfig {
        hidden,
        addr_emb: 8,
        value_emb: 8,
        t_max: 512,
        seed: 1,
    }
}

fn train_cfg(epochs: u32, lr: f64) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 32,
        adam: AdamConfig {
            lr,
            ..Default::default()
        },
        holdout_every: 10,
        seed: 2,
        lr_decay: 1.0,
    }
}

fn branch2_model(n: u64, epochs: u32) -> (SurrogateModel, Vec<Trace>) {
    let p = Branch2::new(Branch2Config::default()).unwrap();
    let traces = generate_traces(&p, 11, 0..n, 64).unwrap();
    let mut m = SurrogateModel::new("branch2", config(16)).unwrap();
    psn_train(&mut m, &traces, &train_cfg(epochs, 1e-2), |_| {}).unwrap();
    (m, traces)
}

struct OneNormal;

impl Program for OneNormal {
    fn name(&self) -> &str {
        "one"
    }
    fn run(&self, ctx: &mut Context<'_>) -> Result<()> {
        ctx.sample("x", Distribution::normal(3.0, 0.5))?;
        Ok(())
    }
}

#[test]
fn single_normal_site_recovers_its_parameters() {
    let traces = generate_traces(&OneNormal, 4, 0..10_000, 8).unwrap();
    let mut m = SurrogateModel::new("one", config(8)).unwrap();
    let cfg = TrainConfig {
        batch_size: 500,
        ..train_cfg(30, 5e-3)
    };
    psn_train(&mut m, &traces, &cfg, |_| {}).unwrap();
    match Cursor::new(&m).site_distribution(0) {
        Distribution::Normal { mean, std } => {
            assert!((mean - 3.0).abs() < 0.02, "mean {mean}");
            assert!((std - 0.5).abs() < 0.02, "std {std}");
        }
        d => panic!("{d}"),
    }
}

#[test]
fn deterministic_path_transitions_saturate() {
    let p = Loopy::new(LoopyConfig {
        p_continue: 0.0,
        ..Default::default()
    })
    .unwrap();
    let one = psn_core::ppl::run_prior(&p, &mut CounterRng::new(0, 0), 0, 64).unwrap();
    let traces = vec![one; 50];
    let mut m = SurrogateModel::new("loopy", config(8)).unwrap();
    psn_train(&mut m, &traces, &train_cfg(2, 1e-2), |_| {}).unwrap();
    let mut c = Cursor::new(&m);
    for e in &traces[0].entries {
        let probs = softmax(&c.transition_logits());
        assert!(probs.iter().cloned().fold(0.0, f64::max) >= 0.999);
        c.consume(m.registry().lookup(&e.address).unwrap(), e.value).unwrap();
    }
    assert!(softmax(&c.transition_logits())[0] >= 0.999);
}

#[test]
fn branch2_training_structure_and_fit() {
    let (m, traces) = branch2_model(4000, 4);
    let h = &m.meta.history;
    assert!(h.last().unwrap().heldout_nll < h[0].heldout_nll);

    // Successor sets equal the transitions present in the data.
    let reg = m.registry();
    let mut seen: HashMap<String, BTreeSet<String>> = HashMap::new();
    for t in &traces {
        let mut prev = "START".to_string();
        for e in &t.entries {
            seen.entry(prev).or_default().insert(e.address.to_string());
            prev = e.address.to_string();
        }
        seen.entry(prev).or_default().insert("END".into());
    }
    let mut from_reg: HashMap<String, BTreeSet<String>> = HashMap::new();
    from_reg.insert("START".into(), reg.successors(None).iter().map(|n| reg.name_of(*n)).collect());
    for (i, s) in reg.sites().iter().enumerate() {
        from_reg.insert(s.address.to_string(), reg.successors(Some(i)).iter().map(|n| reg.name_of(*n)).collect());
    }
    assert_eq!(seen, from_reg);

    // Sampled paths stay on the two legal routes.
    let mut upper = 0;
    for i in 0..2000u64 {
        let t = psn_sample(&m, &mut CounterRng::new(9, i), i).unwrap();
        let path: Vec<&str> = t.entries.iter().map(|e| e.address.label.as_str()).collect();
        assert!(path == ["a1", "a2", "a4"] || path == ["a1", "a3", "a4"], "{path:?}");
        upper += usize::from(path[1] == "a2");
        assert_eq!(psn_core::ppl::trace_logjoint(&t).unwrap(), t.log_joint);
    }
    let f = upper as f64 / 2000.0;
    assert!((f - 0.5).abs() < 0.04, "{f}");
}

#[test]
fn transition_chain_is_normalized() {
    let (m, _) = branch2_model(1000, 1);
    let reg = m.registry();
    let site = |l: &str| reg.lookup(&l.parse().unwrap()).unwrap();
    for (x1, x2, x3, x4) in [(0.3, 2.1, -1.5, 0.0), (-0.7, 1.0, -2.9, 3.0)] {
        let mut total = 0.0;
        for (mid, v) in [("a2__0", x2), ("a3__0", x3)] {
            let path = [("a1__0", x1), (mid, v), ("a4__0", x4)];
            let mut c = Cursor::new(&m);
            let mut lp = 0.0;
            for (a, v) in path {
                let i = site(a);
                let pos = reg.successor_position(c.prev, Next::Site(i)).unwrap();
                let logits = c.transition_logits();
                lp += psn_core::numerics::dist::log_softmax_at(&logits, pos);
                c.consume(i, Value::Real(v)).unwrap();
            }
            let pos = reg.successor_position(c.prev, Next::End).unwrap();
            lp += psn_core::numerics::dist::log_softmax_at(&c.transition_logits(), pos);
            total += lp.exp();
        }
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

/// Explicit product of factors in probability space.
fn factor_product(m: &SurrogateModel, t: &Trace) -> f64 {
    let reg = m.registry();
    let mut c = Cursor::new(m);
    let mut p = 1.0;
    let pdf = |x: f64, mu: f64, s: f64| (-0.5 * ((x - mu) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    for e in &t.entries {
        let i = reg.lookup(&e.address).unwrap();
        let pos = reg.successor_position(c.prev, Next::Site(i)).unwrap();
        p *= softmax(&c.transition_logits())[pos];
        p *= match c.site_distribution(i) {
            Distribution::Normal { mean, std } => pdf(e.value.as_f64(), mean, std),
            Distribution::SquashedNormal { loc, scale, low, high } => {
                let u = (e.value.as_f64() - low) / (high - low);
                pdf(logit(u), loc, scale) / ((high - low) * u * (1.0 - u))
            }
            Distribution::Categorical { probs } => probs[e.value.as_index().unwrap()],
            d => panic!("unexpected head {d}"),
        };
        c.consume(i, e.value).unwrap();
    }
    let pos = reg.successor_position(c.prev, Next::End).unwrap();
    p * softmax(&c.transition_logits())[pos]
}

#[test]
fn log_prob_matches_factor_product() {
    let (m, traces) = branch2_model(500, 1);
    for t in traces.iter().take(50) {
        let lp = m.log_prob(t).unwrap();
        let oracle = factor_product(&m, t).ln();
        assert!((lp - oracle).abs() < 1e-12 * lp.abs().max(1.0), "{lp} vs {oracle}");
    }
}

#[test]
fn self_proposal_weight_is_exactly_one() {
    let (m, _) = branch2_model(500, 1);
    for k in 0..200u64 {
        let rng = CounterRng::new(3, k);
        let mut ctl = PriorController::new(rng.split(1));
        let run = run_surrogate(
            &m,
            &mut ctl,
            &Observations::new(),
            MissingObservation::Sample,
            &mut rng.split(0),
            k,
        )
        .unwrap();
        assert_eq!(run.log_s - run.log_q, 0.0);
    }
}

#[test]
fn unknown_observation_address_is_rejected() {
    let (m, _) = branch2_model(200, 1);
    let mut obs = Observations::new();
    obs.insert("zz__0".into(), Value::Real(1.0));
    let mut ctl = PriorController::new(CounterRng::new(0, 1));
    let err = run_surrogate(&m, &mut ctl, &obs, MissingObservation::Fail, &mut CounterRng::new(0, 0), 0).unwrap_err();
    assert!(err.to_string().contains("zz__0"));
}

#[test]
fn loopy_surrogate_reproduces_iteration_count() {
    let p = Loopy::new(LoopyConfig::default()).unwrap();
    let traces = generate_traces(&p, 21, 0..3000, 4096).unwrap();
    let mut m = SurrogateModel::new("loopy", config(16)).unwrap();
    psn_train(&mut m, &traces, &train_cfg(4, 1e-2), |_| {}).unwrap();
    let n = 4000u64;
    let mean = (0..n)
        .map(|i| iterations(&psn_sample(&m, &mut CounterRng::new(5, i), i).unwrap()))
        .sum::<usize>() as f64
        / n as f64;
    assert!((mean - 5.0).abs() < 0.3, "{mean}");
}

#[test]
fn resumed_training_is_bit_identical() {
    let p = Branch2::new(Branch2Config::default()).unwrap();
    let traces = generate_traces(&p, 5, 0..300, 64).unwrap();
    let cfg = |e| train_cfg(e, 1e-2);
    let mut full = SurrogateModel::new("branch2", config(8)).unwrap();
    psn_train(&mut full, &traces, &cfg(5), |_| {}).unwrap();

    let mut first = SurrogateModel::new("branch2", config(8)).unwrap();
    psn_train(&mut first, &traces, &cfg(2), |_| {}).unwrap();
    let text = first.to_checkpoint_string().unwrap();
    let mut resumed = SurrogateModel::from_checkpoint_str(&text).unwrap();
    psn_train(&mut resumed, &traces, &cfg(3), |_| {}).unwrap();

    assert_eq!(full.store().snapshot(), resumed.store().snapshot());
    assert_eq!(full.meta, resumed.meta);
    assert_eq!(full.to_checkpoint_string().unwrap(), resumed.to_checkpoint_string().unwrap());
}

#[test]
fn rescaled_site_learns_the_same_branching() {
    let (a, traces) = branch2_model(3000, 3);
    let rescale = |v: f64| 10.0 * v + 5.0;
    let scaled: Vec<Trace> = traces
        .iter()
        .map(|t| {
            let mut entries = t.entries.clone();
            let e = &mut entries[0];
            e.value = Value::Real(rescale(e.value.as_f64()));
            e.dist = Distribution::normal(5.0, 10.0);
            e.lp = e.dist.log_prob(e.value).unwrap();
            Trace::new(t.id, entries, t.end_lp)
        })
        .collect();
    let mut b = SurrogateModel::new("branch2", config(16)).unwrap();
    psn_train(&mut b, &scaled, &train_cfg(3, 1e-2), |_| {}).unwrap();
    let upper = |m: &SurrogateModel, x: f64| {
        let mut c = Cursor::new(m);
        c.consume(0, Value::Real(x)).unwrap();
        let l = c.transition_logits();
        let best = if l[0] >= l[1] { 0 } else { 1 };
        m.registry().name_of(m.registry().successors(Some(0))[best]) == "a2__0"
    };
    let mut rng = CounterRng::new(8, 8);
    let n = 2000;
    let (mut fa, mut fb) = (0, 0);
    for _ in 0..n {
        let z = Distribution::normal(0.0, 1.0).sample(&mut rng).as_f64();
        fa += usize::from(upper(&a, z));
        fb += usize::from(upper(&b, rescale(z)));
    }
    let d = (fa as f64 - fb as f64).abs() / n as f64;
    assert!(d <= 0.02, "{fa} vs {fb}");
}
