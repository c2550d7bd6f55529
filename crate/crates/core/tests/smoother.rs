//! Backward-simulation smoother against closed-form and enumerated references.

use nalgebra::{dvector, DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trajsmooth::assignment::murty_kbest;
use trajsmooth::gaussian::{gate_threshold, logpdf};
use trajsmooth::multitarget::{Bernoulli, GaussianDensity, GaussianMixture, MotionModel, MultiBernoulli};
use trajsmooth::smoother::{
    backward_simulate, build_cost_matrix, extend_backward, sample_log_categorical, smoother_estimate,
    survivor_log_birth, truncate_and_sample_hypothesis, BirthSchedule, HypothesisKind, Particle, SmootherConfig,
    LN_BIRTH_FLOOR,
};
use trajsmooth::trajectory::{Trajectory, TrajectorySet};

fn example1() -> (MultiBernoulli, MotionModel, Particle) {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
    let model = MotionModel::new(f, DMatrix::identity(2, 2), 1.0, GaussianMixture::empty()).unwrap();
    let mb = MultiBernoulli::new(vec![
        Bernoulli::new(1.0, GaussianDensity::point_mass(dvector![2.0, -1.0])).unwrap(),
        Bernoulli::new(1.0, GaussianDensity::point_mass(dvector![1.0, 1.0])).unwrap(),
    ]);
    let survivors = TrajectorySet::new(vec![
        Trajectory::new(2, vec![dvector![1.0, 0.0]]).unwrap(),
        Trajectory::new(2, vec![dvector![2.0, 0.0]]).unwrap(),
    ])
    .unwrap();
    (mb, model, Particle::new(2, survivors, 0.0))
}

#[test]
fn empty_problem_has_one_empty_hypothesis() {
    let model = MotionModel::constant_velocity(1, 1.0, 0.1, 0.9, GaussianMixture::empty()).unwrap();
    let c = build_cost_matrix(&MultiBernoulli::default(), &[], &model, &model.birth, 10.0).unwrap();
    assert_eq!((c.rows(), c.cols()), (0, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let h = truncate_and_sample_hypothesis(&c, &[], 5, &mut rng).unwrap();
    assert!(h.hypothesis.hypotheses.is_empty());
    assert_eq!(h.log_probability, 0.0);
}

#[test]
fn example1_linking_entry() {
    let (mb, model, _) = example1();
    let birth = GaussianMixture::single(
        0.1,
        GaussianDensity::new(dvector![0.0, 0.0], DMatrix::from_diagonal(&dvector![3600.0, 4.0])).unwrap(),
    )
    .unwrap();
    let x = dvector![1.0, 0.0];
    let mb1 = MultiBernoulli::new(vec![mb.components[0].clone()]);
    let c = build_cost_matrix(&mb1, &[x.clone()], &model, &birth, f64::INFINITY).unwrap();
    assert_eq!((c.rows(), c.cols()), (1, 3));
    let want = -(logpdf(&dvector![1.0, -1.0], &DMatrix::identity(2, 2), &x).unwrap() - birth.log_intensity(&x).unwrap());
    assert!(want.is_finite());
    assert!((c.get(0, 0) - want).abs() < 1e-12);
    // r = 1 and p_S = 1 rule out dying and not existing.
    assert_eq!(c.get(0, 1), f64::INFINITY);
    assert_eq!(c.get(0, 2), f64::INFINITY);
}

#[test]
fn gated_survivor_is_forbidden() {
    let model = MotionModel::constant_velocity(2, 1.0, 0.1, 0.97, GaussianMixture::empty()).unwrap();
    let mb = MultiBernoulli::new(vec![Bernoulli::new(
        0.8,
        GaussianDensity::new(DVector::zeros(4), DMatrix::identity(4, 4)).unwrap(),
    )
    .unwrap()]);
    let gate = gate_threshold(0.999, 4).unwrap();
    let near = dvector![0.5, 0.0, 0.0, 0.0];
    let far = dvector![30.0, 0.0, 0.0, 0.0];
    let c = build_cost_matrix(&mb, &[near, far], &model, &model.birth, gate).unwrap();
    assert!(c.get(0, 0).is_finite());
    assert_eq!(c.get(0, 1), f64::INFINITY);
    assert!((c.get(0, 2) + (0.8f64 * 0.03).ln()).abs() < 1e-12);
    assert!((c.get(0, 3) + 0.2f64.ln()).abs() < 1e-12);
}

#[test]
fn example1_weights_and_frequencies() {
    let (mb, model, particle) = example1();
    let xs: Vec<DVector<f64>> = particle.trajectories.iter().map(|t| t.states[0].clone()).collect();
    let c = build_cost_matrix(&mb, &xs, &model, &model.birth, f64::INFINITY).unwrap();
    let hyps = murty_kbest(&c, 100);
    assert_eq!(hyps.len(), 2);
    let p = 1.0 / (1.0 + (hyps[0].cost - hyps[1].cost).exp());
    assert!((p - std::f64::consts::E / (1.0 + std::f64::consts::E)).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trials = 20_000;
    let mut straight = 0;
    for _ in 0..trials {
        let out = extend_backward(&particle, &mb, 1, &model, &model.birth, 30, f64::INFINITY, &mut rng).unwrap();
        let t = out.trajectories.iter().find(|t| t.states[1] == dvector![1.0, 0.0]).unwrap();
        if t.states[0] == dvector![2.0, -1.0] {
            straight += 1;
        }
    }
    let freq = straight as f64 / trials as f64;
    assert!((freq - 0.731_058_6).abs() < 0.015, "{freq}");
}

#[test]
fn hypothesis_log_weights_are_consistent() {
    let (mb, model, particle) = example1();
    let xs: Vec<DVector<f64>> = particle.trajectories.iter().map(|t| t.states[0].clone()).collect();
    let c = build_cost_matrix(&mb, &xs, &model, &model.birth, f64::INFINITY).unwrap();
    let ln_b = survivor_log_birth(&model.birth, &xs).unwrap();
    assert_eq!(ln_b, vec![LN_BIRTH_FLOOR; 2]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let h = truncate_and_sample_hypothesis(&c, &ln_b, 1, &mut rng).unwrap();
    assert_eq!(h.log_probability, 0.0);
    let kinds: Vec<_> = h.hypothesis.hypotheses.iter().map(|s| s.kind).collect();
    assert_eq!(
        kinds,
        vec![
            HypothesisKind::Survive { component: 0, survivor: 0 },
            HypothesisKind::Survive { component: 1, survivor: 1 }
        ]
    );
    let sum: f64 = h.hypothesis.hypotheses.iter().map(|s| s.log_weight).sum();
    assert!((sum - h.hypothesis.log_weight).abs() < 1e-12);
    // Straight pairing: two unit-variance 2-D Gaussians each half a unit away squared.
    let want = 2.0 * (-(2.0 * std::f64::consts::PI).ln() - 0.5);
    assert!((h.hypothesis.log_weight - want).abs() < 1e-12);
}

#[test]
fn survive_sample_moments() {
    let model = MotionModel::new(DMatrix::identity(1, 1), DMatrix::identity(1, 1), 1.0, GaussianMixture::empty()).unwrap();
    let mb = MultiBernoulli::new(vec![Bernoulli::new(1.0, GaussianDensity::new(dvector![0.0], DMatrix::identity(1, 1)).unwrap()).unwrap()]);
    let particle = Particle::new(2, TrajectorySet::new(vec![Trajectory::new(2, vec![dvector![2.0]]).unwrap()]).unwrap(), 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let xs: Vec<f64> = (0..n)
        .map(|_| {
            let p = extend_backward(&particle, &mb, 1, &model, &model.birth, 30, f64::INFINITY, &mut rng).unwrap();
            assert_eq!(p.trajectories.len(), 1);
            let t = &p.trajectories.as_slice()[0];
            assert_eq!(t.birth_time, 1);
            assert_eq!(t.states[1], dvector![2.0]);
            t.states[0][0]
        })
        .collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    assert!((mean - 1.0).abs() < 0.02, "{mean}");
    assert!((var - 0.5).abs() < 0.02, "{var}");
}

#[test]
fn point_mass_survivor_is_exact_and_newborn_is_copied() {
    let (mb, model, particle) = example1();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let out = extend_backward(&particle, &mb, 1, &model, &model.birth, 30, f64::INFINITY, &mut rng).unwrap();
    for t in out.trajectories.iter() {
        assert!(t.states[0] == dvector![2.0, -1.0] || t.states[0] == dvector![1.0, 1.0]);
    }
    // With no filter components every survivor must be newborn.
    let lone = extend_backward(&particle, &MultiBernoulli::default(), 1, &model, &model.birth, 30, 10.0, &mut rng).unwrap();
    assert!(lone.trajectories.set_eq(&particle.trajectories));
    assert_eq!(lone.start, 1);
    assert_eq!(lone.log_weight, 0.0);
}

#[test]
fn single_step_returns_terminal_samples() {
    let model = MotionModel::constant_velocity(1, 1.0, 0.1, 0.9, GaussianMixture::empty()).unwrap();
    let mb = MultiBernoulli::new(vec![
        Bernoulli::new(1.0, GaussianDensity::new(dvector![0.0, 1.0], DMatrix::identity(2, 2)).unwrap()).unwrap(),
        Bernoulli::new(0.0, GaussianDensity::new(dvector![5.0, 1.0], DMatrix::identity(2, 2)).unwrap()).unwrap(),
    ]);
    let cfg = SmootherConfig { particles: 20, ..SmootherConfig::default() };
    let out = backward_simulate(&[mb], &model, BirthSchedule::Model, &cfg, 9).unwrap();
    assert_eq!(out.particles.len(), 20);
    for p in &out.particles {
        assert_eq!(p.trajectories.len(), 1);
        assert_eq!(p.trajectories.as_slice()[0].birth_time, 1);
        assert_eq!(p.trajectories.as_slice()[0].len(), 1);
    }
}

#[test]
fn estimate_prefers_heaviest_then_first() {
    let mk = |w: f64| Particle::new(1, TrajectorySet::default(), w);
    let ps = vec![mk(2f64.ln()), mk(0.0)];
    assert_eq!(smoother_estimate(&ps).unwrap().log_weight, 2f64.ln());
    let tied = vec![
        Particle::new(1, TrajectorySet::default(), 0.0),
        Particle::new(2, TrajectorySet::default(), 0.0),
    ];
    assert_eq!(smoother_estimate(&tied).unwrap().start, 1);
    assert!(smoother_estimate(&[]).is_none());
}

/// Number of ways to link, kill or drop each of `n` components against `s` survivors.
fn hypothesis_count(n: usize, s: usize) -> usize {
    let choose = |a: usize, b: usize| (0..b).fold(1usize, |acc, i| acc * (a - i) / (i + 1));
    let fact = |a: usize| (1..=a).product::<usize>();
    (0..=n.min(s)).map(|t| choose(n, t) * choose(s, t) * fact(t) * (1 << (n - t))).sum()
}

#[test]
fn murty_counts_every_global_hypothesis() {
    let model = MotionModel::constant_velocity(1, 1.0, 1.0, 0.9, GaussianMixture::empty()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 0..=3 {
        for s in 0..=3 {
            let mb = MultiBernoulli::new(
                (0..n)
                    .map(|_| {
                        let g = GaussianDensity::new(dvector![rng.random_range(-1.0..1.0), 0.0], DMatrix::identity(2, 2)).unwrap();
                        Bernoulli::new(rng.random_range(0.1..0.9), g).unwrap()
                    })
                    .collect(),
            );
            let xs: Vec<DVector<f64>> = (0..s).map(|_| dvector![rng.random_range(-1.0..1.0), 0.0]).collect();
            let c = build_cost_matrix(&mb, &xs, &model, &model.birth, f64::INFINITY).unwrap();
            assert_eq!(murty_kbest(&c, usize::MAX).len(), hypothesis_count(n, s), "n={n} s={s}");
        }
    }
}

#[test]
fn sampling_matches_truncated_weights() {
    let log_w = [0.3f64, -1.2, 0.0, -0.4, -2.5];
    let norm: f64 = log_w.iter().map(|l| l.exp()).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let draws = 200_000;
    let mut counts = [0usize; 5];
    for _ in 0..draws {
        let (i, lp) = sample_log_categorical(&log_w, &mut rng).unwrap();
        assert!((lp - (log_w[i] - norm.ln())).abs() < 1e-12);
        counts[i] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&log_w)
        .map(|(&c, l)| {
            let e = draws as f64 * l.exp() / norm;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // Upper 0.001 quantile of chi-square with 4 degrees of freedom.
    assert!(chi2 < 18.467, "chi2 {chi2}");
}

fn random_mb(rng: &mut ChaCha8Rng, n: usize) -> MultiBernoulli {
    MultiBernoulli::new(
        (0..n)
            .map(|_| {
                let m = dvector![rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)];
                Bernoulli::new(rng.random_range(0.05..1.0), GaussianDensity::new(m, DMatrix::identity(2, 2) * 0.5).unwrap()).unwrap()
            })
            .collect(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn support_of_the_future_is_preserved(seed in 0u64..5_000, horizon in 1usize..6, n in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let birth = GaussianMixture::single(0.1, GaussianDensity::new(DVector::zeros(2), DMatrix::identity(2, 2) * 50.0).unwrap()).unwrap();
        let model = MotionModel::constant_velocity(1, 1.0, 0.5, 0.9, birth).unwrap();
        let filters: Vec<MultiBernoulli> = (0..horizon).map(|_| random_mb(&mut rng, n)).collect();
        let cfg = SmootherConfig { particles: 4, murty_m: 10, ..SmootherConfig::default() };
        let out = backward_simulate(&filters, &model, BirthSchedule::Model, &cfg, seed).unwrap();
        prop_assert_eq!(out.particles.len(), 4);
        for p in &out.particles {
            prop_assert_eq!(p.start, 1);
            for t in p.trajectories.iter() {
                prop_assert!(t.end_time() <= horizon);
            }
        }
        // Extending one step keeps every later state exactly.
        let mut particle = trajsmooth::smoother::sample_terminal(&filters[horizon - 1], horizon, &mut rng);
        for k in (1..horizon).rev() {
            let next = extend_backward(&particle, &filters[k - 1], k, &model, &model.birth, 10, 10.0, &mut rng).unwrap();
            for kappa in k + 1..=horizon {
                let mut a = particle.trajectories.states_at(kappa);
                let mut b = next.trajectories.states_at(kappa);
                a.sort_by(|x, y| x.as_slice().partial_cmp(y.as_slice()).unwrap());
                b.sort_by(|x, y| x.as_slice().partial_cmp(y.as_slice()).unwrap());
                prop_assert_eq!(a, b);
            }
            prop_assert!(next.log_weight <= particle.log_weight + 1e-12);
            particle = next;
        }
    }
}
