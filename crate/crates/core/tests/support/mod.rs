//! Independent numerical oracles shared by integration tests.
#![allow(dead_code)]

use psn_core::sims::Branch2Config;

fn normal_pdf(x: f64, m: f64, s: f64) -> f64 {
    let z = (x - m) / s;
    (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule on `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[derive(Clone, Copy, Debug)]
pub struct Branch2Posterior {
    /// P(the a2 branch is taken | a4 = y).
    pub p_upper: f64,
    /// E[a1 | a4 = y].
    pub mean_a1: f64,
}

/// Posterior of branch2 given the observation, by quadrature over `a1`
/// with the branch value integrated out by a nested rule.
pub fn branch2_posterior(c: &Branch2Config, y: f64, grid: usize) -> Branch2Posterior {
    let lik_upper = simpson(
        |x2| normal_pdf(x2, c.a2_mean, c.a2_std) * normal_pdf(y, x2, c.noise),
        c.a2_mean - 12.0 * c.a2_std,
        c.a2_mean + 12.0 * c.a2_std,
        4000,
    );
    let lik_lower = simpson(
        |x3| normal_pdf(y, x3, c.noise) / (c.a3_high - c.a3_low),
        c.a3_low,
        c.a3_high,
        4000,
    );
    // Split at the threshold so the step in the likelihood is integrated exactly.
    let (lo, hi) = (-12.0, 12.0);
    let t = c.threshold;
    let half = grid / 2;
    let zl = simpson(|x| normal_pdf(x, 0.0, 1.0) * lik_lower, lo, t, half);
    let zu = simpson(|x| normal_pdf(x, 0.0, 1.0) * lik_upper, t, hi, half);
    let z = zl + zu;
    let m = simpson(|x| x * normal_pdf(x, 0.0, 1.0) * lik_lower, lo, t, half)
        + simpson(|x| x * normal_pdf(x, 0.0, 1.0) * lik_upper, t, hi, half);
    Branch2Posterior {
        p_upper: zu / z,
        mean_a1: m / z,
    }
}

use psn_core::ic::{IcConfig, ProposalModel};
use psn_core::numerics::{CounterRng, Graph, ParamStore};
use psn_core::ppl::Trace;
use psn_core::surrogate::{PsnConfig, SurrogateModel};

/// Worst relative disagreement between an analytic gradient and central
/// differences of `loss` over every parameter scalar. Components where both
/// are below `floor` in magnitude are compared absolutely against it.
pub fn worst_gradient_error(
    store: &mut ParamStore,
    mut loss: impl FnMut(&ParamStore) -> f64,
    grad: &[f64],
    step: f64,
    floor: f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut k = 0;
    for i in 0..store.len() {
        let id = psn_core::numerics::ParamId(i);
        for j in 0..store.value(id).len() {
            let x = store.value(id)[j];
            store.value_mut(id)[j] = x + step;
            let up = loss(store);
            store.value_mut(id)[j] = x - step;
            let down = loss(store);
            store.value_mut(id)[j] = x;
            let fd = (up - down) / (2.0 * step);
            let g = grad[k];
            let scale = g.abs().max(fd.abs());
            let err = if scale < floor { (g - fd).abs() / floor } else { (g - fd).abs() / scale };
            worst = worst.max(err);
            k += 1;
        }
    }
    worst
}

/// Perturb every parameter so that zero-initialized heads are exercised.
pub fn jitter(store: &mut ParamStore, seed: u64, amp: f64) {
    let mut rng = CounterRng::new(seed, 0);
    for i in 0..store.len() {
        let id = psn_core::numerics::ParamId(i);
        for v in store.value_mut(id) {
            *v += amp * (2.0 * rng.next_f64() - 1.0);
        }
    }
}

pub fn tiny_psn() -> PsnConfig {
    PsnConfig {
        hidden: 8,
        addr_emb: 5,
        value_emb: 3,
        t_max: 256,
        seed: 5,
    }
}

pub fn tiny_ic() -> IcConfig {
    IcConfig {
        hidden: 8,
        addr_emb: 4,
        value_emb: 3,
        obs_hidden: 6,
        obs_emb: 4,
        seed: 6,
    }
}

/// Finite-difference check of the mean surrogate NLL over `traces`.
pub fn psn_gradient_error(program: &str, traces: &[Trace]) -> (usize, f64) {
    let mut m = SurrogateModel::new(program, tiny_psn()).unwrap();
    m.register_traces(traces).unwrap();
    jitter(m.store_mut(), 1, 0.3);
    let n = traces.len() as f64;
    let loss = |m: &SurrogateModel| -> f64 { -traces.iter().map(|t| m.log_prob(t).unwrap()).sum::<f64>() / n };
    let mut grads = m.store().new_gradients();
    for t in traces {
        let mut g = Graph::new();
        let node = m.log_prob_graph(&mut g, t).unwrap();
        g.backward(node, -1.0 / n, m.store(), &mut grads);
    }
    let flat: Vec<f64> = grads.iter().flatten().copied().collect();
    let params = m.num_parameters();
    let mut store = m.store().clone();
    let program = m.program().to_string();
    let err = worst_gradient_error(
        &mut store,
        |s| {
            let mut probe = SurrogateModel::new(&program, tiny_psn()).unwrap();
            probe.register_traces(traces).unwrap();
            *probe.store_mut() = s.clone();
            loss(&probe)
        },
        &flat,
        1e-4,
        1e-6,
    );
    (params, err)
}

/// Finite-difference check of the mean proposal NLL over `traces`.
pub fn ic_gradient_error(program: &str, traces: &[Trace], summaries: &[Vec<f64>]) -> (usize, f64) {
    let build = || {
        let mut m = ProposalModel::new(program, tiny_ic()).unwrap();
        m.set_observation_stats(summaries).unwrap();
        m.register_traces(traces).unwrap();
        m
    };
    let mut m = build();
    jitter(m.store_mut(), 2, 0.3);
    let n = traces.len() as f64;
    let mut grads = m.store().new_gradients();
    for (t, s) in traces.iter().zip(summaries) {
        let mut g = Graph::new();
        if let Some(node) = m.log_q_graph(&mut g, t, s).unwrap() {
            g.backward(node, -1.0 / n, m.store(), &mut grads);
        }
    }
    let flat: Vec<f64> = grads.iter().flatten().copied().collect();
    let params = m.num_parameters();
    let mut store = m.store().clone();
    let mut probe = build();
    let err = worst_gradient_error(
        &mut store,
        |s| {
            *probe.store_mut() = s.clone();
            -traces
                .iter()
                .zip(summaries)
                .filter_map(|(t, s)| probe.log_q(t, s).unwrap())
                .sum::<f64>()
                / n
        },
        &flat,
        1e-4,
        1e-6,
    );
    (params, err)
}
