mod support;

use psn_core::ic::summarize_traces;
use psn_core::ppl::{generate_traces, Program, Trace};
use psn_core::sims::{Branch2, Branch2Config, Heat1d, Heat1dConfig, Loopy, LoopyConfig};
use support::{ic_gradient_error, psn_gradient_error};

fn short_heat() -> Heat1d {
    let mut c = Heat1dConfig::small();
    c.steps = 3;
    c.window = [1, 3];
    Heat1d::new(c).unwrap()
}

fn sets() -> Vec<(Box<dyn Program>, Vec<Trace>)> {
    let b: Box<dyn Program> = Box::new(Branch2::new(Branch2Config::default()).unwrap());
    let l: Box<dyn Program> = Box::new(Loopy::new(LoopyConfig::default()).unwrap());
    let h: Box<dyn Program> = Box::new(short_heat());
    let bt = generate_traces(b.as_ref(), 3, 0..6, 64).unwrap();
    let lt = generate_traces(l.as_ref(), 4, 0..4, 256).unwrap();
    let ht = generate_traces(h.as_ref(), 5, 0..3, 64).unwrap();
    vec![(b, bt), (l, lt), (h, ht)]
}

#[test]
fn surrogate_loss_gradient_matches_finite_differences() {
    for (p, traces) in sets() {
        let (n, err) = psn_gradient_error(p.name(), &traces);
        assert!(n <= 5000, "{n} parameters");
        assert!(err < 1e-4, "{}: worst relative error {err}", p.name());
    }
}

#[test]
fn proposal_loss_gradient_matches_finite_differences() {
    for (p, traces) in sets() {
        let sums = summarize_traces(p.as_ref(), &traces).unwrap();
        let (n, err) = ic_gradient_error(p.name(), &traces, &sums);
        assert!(n <= 5000, "{n} parameters");
        assert!(err < 1e-4, "{}: worst relative error {err}", p.name());
    }
}
