use proptest::prelude::*;

use stldp_core::ldp::tail::Sequential;
use stldp_core::ldp::{energy, skeleton_solve, threshold_curve_with, ControlPath, Statistic, TailExperiment};
use stldp_core::models::{make_default, make_linear, ModelId, NoiseSpec};
use stldp_core::noise::sample_stream;
use stldp_core::oracles::{gaussian_sup_tail, linear_rate};
use stldp_core::path::{simulate, Mode};
use stldp_core::solver::StepperConfig;

fn refine(c: &ControlPath, factor: usize) -> ControlPath {
    let mut times = vec![0.0];
    let mut hdot = Vec::new();
    for k in 0..c.n_intervals() {
        let (a, b) = (c.times[k], c.times[k + 1]);
        for j in 1..=factor {
            times.push(a + (b - a) * j as f64 / factor as f64);
            hdot.extend_from_slice(c.hdot(k));
        }
    }
    ControlPath::new(times, c.m, hdot).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_invariant_under_grid_refinement(
        u in prop::collection::vec(-3.0f64..3.0, 2 * 7),
        factor in 2usize..5,
    ) {
        let times: Vec<f64> = (0..=7).map(|k| (k as f64 / 7.0).powf(1.3)).collect();
        let c = ControlPath::new(times, 2, u).unwrap();
        let (a, b) = (energy(&c), energy(&refine(&c, factor)));
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
    }

    #[test]
    fn additive_skeleton_is_odd_in_the_control(
        u in prop::collection::vec(-2.0f64..2.0, 3 * 5),
    ) {
        let model = make_linear(3, 1.0, &NoiseSpec::Additive { amplitudes: vec![1.0, 0.5, 2.0] }).unwrap();
        let x0 = [0.3, -0.2, 0.1];
        let times: Vec<f64> = (0..=5).map(|k| k as f64 / 5.0).collect();
        let plus = ControlPath::new(times.clone(), 3, u.clone()).unwrap();
        let minus = ControlPath::new(times, 3, u.iter().map(|x| -x).collect()).unwrap();
        let cfg = StepperConfig::with_dt(0.05);
        let gp = skeleton_solve(&model, &x0, &plus, &cfg).unwrap();
        let gm = skeleton_solve(&model, &x0, &minus, &cfg).unwrap();
        for ((a, b), x) in gp.last().iter().zip(gm.last()).zip(x0) {
            prop_assert!(((a - x) + (b - x)).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_rate_scales_inversely_with_horizon(
        x in prop::collection::vec(-2.0f64..2.0, 4),
        y in prop::collection::vec(-2.0f64..2.0, 4),
        b in prop::collection::vec(0.2f64..3.0, 4),
        t in 0.1f64..10.0,
    ) {
        let one = linear_rate(&b, &x, &y, 1.0).unwrap();
        let scaled = linear_rate(&b, &x, &y, t).unwrap();
        prop_assert!((scaled * t - one).abs() <= 1e-12 * (1.0 + one));
    }

    #[test]
    fn gaussian_sup_tail_depends_on_one_ratio(
        b in 0.1f64..5.0,
        t in 0.05f64..5.0,
        a in 0.05f64..5.0,
    ) {
        let p = gaussian_sup_tail(b, t, a).unwrap();
        let q = gaussian_sup_tail(1.0, 1.0, a / (b * t.sqrt())).unwrap();
        prop_assert!((p - q).abs() < 1e-13);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert_eq!(p, gaussian_sup_tail(-b, t, a).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn exceedance_counts_are_nested(seed in 0u64..1000, lo in 0.0f64..0.05, step in 0.001f64..0.05) {
        let model = make_default(ModelId::Burgers, 8, &NoiseSpec::default()).unwrap();
        let x0 = model.space().interpolate(|s| (std::f64::consts::PI * s).sin());
        let exp = TailExperiment {
            statistic: Statistic::EquivSupDistance { delta: lo },
            epsilon: 0.5,
            n_paths: 40,
            x0,
            horizon: 0.5,
            cfg: StepperConfig::with_dt(0.05),
        };
        let thresholds: Vec<f64> = (0..6).map(|k| lo + step * k as f64).collect();
        let curve = threshold_curve_with(&Sequential, &model, &exp, &thresholds, seed).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].n_hits <= w[0].n_hits);
            prop_assert!(w[1].p_hat <= w[0].p_hat);
        }
    }

    #[test]
    fn zero_drift_path_ignores_the_drift(seed in 0u64..1000, eps in 0.05f64..1.0) {
        let noise = NoiseSpec::default();
        let heat = make_default(ModelId::Heat, 10, &noise).unwrap();
        let burgers = make_default(ModelId::Burgers, 10, &noise).unwrap();
        let x0 = heat.space().interpolate(|s| s * (1.0 - s));
        let stream = sample_stream(heat.diffusion.m, 0.05, 10, seed).unwrap();
        let cfg = StepperConfig::with_dt(0.05);
        let a = simulate(&heat, &x0, eps, 0.5, &cfg, &stream, Mode::ZeroDrift).unwrap();
        let b = simulate(&burgers, &x0, eps, 0.5, &cfg, &stream, Mode::ZeroDrift).unwrap();
        prop_assert_eq!(a.raw_states(), b.raw_states());
    }
}
