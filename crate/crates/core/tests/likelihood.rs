use mechlearn::distributions::sample;
use mechlearn::likelihood::{convolve_m, convolve_pair, Engine, GridSpec};
use mechlearn::rng::{run_chunks, Moments};
use mechlearn::{BeliefDistribution, State};
use rand::Rng;

fn engine(d: BeliefDistribution) -> Engine {
    Engine::new(d, GridSpec::default()).unwrap()
}

/// Direct Monte Carlo of `2^m E[Π s_k · 1{Π LR ≥ τ}]` (or with `1 − s_k`)
/// under the unconditional product law; each signal is a fair mixture of
/// the two conditional laws.
fn direct(d: &BeliefDistribution, m: usize, tau: f64, state: State, draws: usize) -> Moments {
    run_chunks(5 + m as u64, draws, 8, |_, rng, count| {
        let mut acc = Moments::default();
        for _ in 0..count {
            let (mut w, mut log_lr) = (1.0, 0.0);
            for _ in 0..m {
                let omega = if rng.gen::<bool>() { State::Plus } else { State::Minus };
                let s: f64 = sample(d, omega, rng);
                w *= state.tilt(s);
                log_lr += (s / (1.0 - s)).ln();
            }
            acc.push(if log_lr >= tau.ln() { w } else { 0.0 });
        }
        acc
    })
    .iter()
    .fold(Moments::default(), |a, b| a.merge(b))
}

#[test]
fn reduction_identity_against_monte_carlo() {
    let d = BeliefDistribution::beta_symmetric(2.0).unwrap();
    let e = engine(d.clone());
    for m in 1..=3 {
        let agg = e.aggregate(m).unwrap();
        for tau in [0.5, 1.0, 2.5] {
            for state in [State::Plus, State::Minus] {
                let mc = direct(&d, m, tau, state, 1_000_000);
                let exact = agg.get(state).tail_prob(tau);
                let z = (mc.mean() - exact).abs() / mc.std_error();
                assert!(z <= 3.0, "m={m} tau={tau} {state:?}: mc {} exact {exact} z {z}", mc.mean());
            }
        }
    }
}

#[test]
fn tails_are_monotone_and_ordered() {
    for d in [BeliefDistribution::uniform(), BeliefDistribution::truncated_normal(0.2).unwrap()] {
        let e = engine(d);
        for m in [1, 2, 4, 9] {
            let agg = e.aggregate(m).unwrap();
            let mut prev = (1.0, 1.0);
            for j in 0..=400 {
                let tau = (-8.0 + 16.0 * j as f64 / 400.0f64).exp();
                let (p, q) = agg.tails(tau);
                assert!(p <= prev.0 + 1e-12 && q <= prev.1 + 1e-12);
                assert!(p >= q - 1e-12, "m={m} tau={tau}: {p} < {q}");
                prev = (p, q);
            }
        }
    }
}

#[test]
fn aggregate_masses_sum_to_one() {
    let e = engine(BeliefDistribution::beta_symmetric(3.0).unwrap());
    for m in [1, 2, 7, 19] {
        let agg = e.aggregate(m).unwrap();
        for state in [State::Plus, State::Minus] {
            assert!((agg.get(state).total_mass() - 1.0).abs() <= 1e-10);
        }
    }
}

#[test]
fn convolution_is_associative() {
    let e = engine(BeliefDistribution::uniform());
    let base = &e.aggregate(1).unwrap().plus;
    for (a, b) in [(1, 1), (2, 3), (4, 4)] {
        let whole = convolve_m(base, a + b).unwrap();
        let split = convolve_pair(&convolve_m(base, a).unwrap(), &convolve_m(base, b).unwrap()).unwrap();
        let sup = (0..=200)
            .map(|j| -20.0 + 40.0 * j as f64 / 200.0)
            .map(|t| (whole.tail_prob_log(t) - split.tail_prob_log(t)).abs())
            .fold(0.0, f64::max);
        assert!(sup <= 1e-9, "{a}+{b}: {sup}");
    }
}

#[test]
fn bad_grid_is_rejected() {
    let spec = GridSpec { points: 1000, half_range: 40.0 };
    assert!(Engine::new(BeliefDistribution::uniform(), spec).is_err());
}
