use std::sync::Arc;

use fkc_core::engine::{
    bdc_clocks_step, jump_resample_step, normalized_weights, systematic_resample_with_offset,
};
use fkc_core::rules::QuadraticReward;
use fkc_core::{
    build_annealed, build_reward_tilted, simulate, AnnealSpec, BetaSchedule,
    DiffusedGaussianMixture, FkcSde, NoiseSchedule, ParticleEnsemble, ResamplingPolicy, Scheme,
    ScoreModel, SimulationConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vp() -> NoiseSchedule {
    NoiseSchedule::vp_linear(0.1, 20.0, 1).unwrap()
}

fn std_normal(s: NoiseSchedule) -> Arc<dyn ScoreModel> {
    Arc::new(DiffusedGaussianMixture::gaussian(vec![0.0], 1.0, s).unwrap())
}

fn tilt() -> FkcSde {
    let s = vp();
    build_reward_tilted(
        std_normal(s.clone()),
        &s,
        Arc::new(QuadraticReward {
            center: vec![0.0],
            scale: 1.0,
        }),
        BetaSchedule::Linear { at0: 0.0, at1: 1.0 },
    )
    .unwrap()
}

fn moments(e: &ParticleEnsemble) -> (f64, f64) {
    (
        e.snis_expectation(|x| x[0]).unwrap(),
        e.snis_expectation(|x| x[0] * x[0]).unwrap(),
    )
}

#[test]
fn identical_across_thread_counts() {
    let sde = tilt();
    for scheme in [
        Scheme::Systematic,
        Scheme::Jump,
        Scheme::BdcClocks,
        Scheme::SnisFinal,
    ] {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                simulate(
                    &sde,
                    &SimulationConfig::new(500, 100, 3),
                    &ResamplingPolicy::new(scheme),
                )
                .unwrap()
            })
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.ensemble.positions, b.ensemble.positions, "{scheme:?}");
        assert_eq!(a.ensemble.log_weights, b.ensemble.log_weights);
        assert_eq!(a.log_z.to_bits(), b.log_z.to_bits());
    }
}

#[test]
fn centered_increments_have_zero_mean() {
    let sde = tilt();
    for t_start in [0.1, 0.4, 0.75, 0.95] {
        let mut cfg = SimulationConfig::new(2000, 1, 9);
        cfg.t_start = t_start;
        cfg.initial_weights = false;
        let out = simulate(&sde, &cfg, &ResamplingPolicy::new(Scheme::SnisFinal)).unwrap();
        let lw = &out.ensemble.log_weights;
        assert!(lw.iter().any(|w| *w != 0.0));
        let mean = lw.iter().sum::<f64>() / lw.len() as f64;
        assert!(mean.abs() <= 1e-12, "t_start {t_start}: {mean}");
    }
    // the plain SDE reports equal weights
    let out = simulate(
        &sde,
        &SimulationConfig::new(200, 50, 1),
        &ResamplingPolicy::new(Scheme::None),
    )
    .unwrap();
    assert!(out.ensemble.is_uniform());
}

#[test]
fn base_sde_reproduces_the_data_law() {
    let k = 10_000;
    for s in [vp(), NoiseSchedule::ve_geometric(0.01, 50.0, 1).unwrap()] {
        let sde = build_annealed(std_normal(s.clone()), &s, AnnealSpec::target_score(1.0)).unwrap();
        let out = simulate(
            &sde,
            &SimulationConfig::new(k, 1000, 2),
            &ResamplingPolicy::new(Scheme::None),
        )
        .unwrap();
        let (m1, m2) = moments(&out.ensemble);
        let tol = 4.0 / (k as f64).sqrt();
        assert!(m1.abs() < tol, "mean {m1}");
        assert!(
            (m2 - m1 * m1 - 1.0).abs() < tol,
            "variance {}",
            m2 - m1 * m1
        );
        assert!(out.ensemble.log_weights.iter().all(|w| *w == 0.0));
    }
}

#[test]
fn annealed_gaussian_moment_and_normalizer() {
    let beta: f64 = 0.5;
    let s = vp();
    let sde = build_annealed(std_normal(s.clone()), &s, AnnealSpec::target_score(beta)).unwrap();
    // integral of N(0,1)^beta
    let log_z = 0.5 * (1.0 - beta) * std::f64::consts::TAU.ln() - 0.5 * beta.ln();
    let out = simulate(
        &sde,
        &SimulationConfig::new(10_000, 1000, 4),
        &ResamplingPolicy::new(Scheme::Systematic),
    )
    .unwrap();
    let (_, m2) = moments(&out.ensemble);
    assert!((m2 - 1.0 / beta).abs() < 0.15, "second moment {m2}");
    assert!(
        (out.log_z - log_z).abs() < 0.05,
        "log Z {} vs {log_z}",
        out.log_z
    );
}

#[test]
fn snis_error_shrinks_at_monte_carlo_rate() {
    let sde = tilt();
    // P(|x| < 1/2) under N(0, 1/2)
    let exact = 0.520_499_877_813_046_5;
    let seeds = 12;
    let rmse: Vec<f64> = [100, 1000, 10_000]
        .iter()
        .map(|&k| {
            let se: f64 = (0..seeds)
                .map(|seed| {
                    let out = simulate(
                        &sde,
                        &SimulationConfig::new(k, 400, 100 + seed),
                        &ResamplingPolicy::new(Scheme::SnisFinal),
                    )
                    .unwrap();
                    let p = out
                        .ensemble
                        .snis_expectation(|x| if x[0].abs() < 0.5 { 1.0 } else { 0.0 })
                        .unwrap();
                    (p - exact).powi(2)
                })
                .sum();
            (se / seeds as f64).sqrt()
        })
        .collect();
    for w in rmse.windows(2) {
        let ratio = w[0] / w[1];
        let ideal = 10f64.sqrt();
        assert!(ratio > ideal / 3.0 && ratio < ideal * 3.0, "rmse {rmse:?}");
    }
}

#[test]
fn snis_trivial_cases() {
    let ens = ParticleEnsemble::new(vec![1.0, 2.0, 6.0], 1, 0).unwrap();
    assert!((ens.snis_expectation(|x| x[0]).unwrap() - 3.0).abs() < 1e-15);
    let ens = ens.with_log_weights(vec![0.3, -2.0, 5.0]).unwrap();
    assert!((ens.snis_expectation(|_| 1.0).unwrap() - 1.0).abs() < 1e-15);
    let ens = ens
        .with_log_weights(vec![f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY])
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!((0..100).all(|_| ens.snis_select(&mut rng).unwrap() == 1));
}

#[test]
fn systematic_counts_are_bounded_and_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let grid = 10_000;
    for _ in 0..50 {
        let k = rng.random_range(2..40);
        let lw: Vec<f64> = (0..k).map(|_| rng.random_range(-4.0..2.0)).collect();
        let w = normalized_weights(&lw).unwrap();
        let mut mean = vec![0.0; k];
        for i in 0..grid {
            let u = (i as f64 + 0.5) / grid as f64;
            let mut counts = vec![0usize; k];
            for j in systematic_resample_with_offset(&lw, u).unwrap() {
                counts[j] += 1;
            }
            for j in 0..k {
                let expected = k as f64 * w[j];
                assert!(
                    (counts[j] as f64 - expected).abs() < 1.0,
                    "u {u}: {counts:?}"
                );
                mean[j] += counts[j] as f64 / grid as f64;
            }
        }
        // each count is a step function of u with at most two jumps
        for j in 0..k {
            assert!((mean[j] - k as f64 * w[j]).abs() <= 2.0 / grid as f64 + 1e-9);
        }
    }
}

#[test]
fn jump_step_with_uniform_rates_is_a_no_op() {
    let mut ens = ParticleEnsemble::new(vec![0.0, 1.0, 2.0, 3.0], 1, 5).unwrap();
    let before = ens.positions.clone();
    let mut g = vec![0.7; 4];
    assert_eq!(jump_resample_step(&mut ens, &mut g, 0.9).unwrap(), 0);
    assert_eq!(ens.positions, before);
    assert!(bdc_clocks_step(&mut ens, &mut g, 10.0).unwrap().is_empty());
}

#[test]
fn only_the_lowest_rate_particle_jumps_to_the_highest() {
    let dt = 0.5;
    let reps = 4000;
    let mut jumped = 0;
    for seed in 0..reps {
        let mut ens = ParticleEnsemble::new(vec![0.0, 1.0, 2.0], 1, seed).unwrap();
        let mut g = vec![-1.0, 0.0, 1.0];
        let n = jump_resample_step(&mut ens, &mut g, dt).unwrap();
        assert_eq!(&ens.positions[1..], &[1.0, 2.0]);
        if n == 1 {
            assert_eq!(ens.positions[0], 2.0);
            assert_eq!(g[0], 1.0);
            jumped += 1;
        } else {
            assert_eq!((n, ens.positions[0]), (0, 0.0));
        }
    }
    let p = jumped as f64 / reps as f64;
    let se = (dt * (1.0 - dt) / reps as f64).sqrt();
    assert!((p - dt).abs() < 4.0 * se, "jump fraction {p}");
}

#[test]
fn bdc_firing_times_are_exponential() {
    let c = 5.0;
    let dt = 1e-4;
    let mut ens = ParticleEnsemble::new(vec![0.0, 1.0], 1, 8).unwrap();
    let mut times = Vec::new();
    let mut last = 0.0;
    let mut t = 0.0;
    while times.len() < 2000 {
        // particle 0 leaves at rate c; particle 1 never does
        let mut g = vec![0.0, 2.0 * c];
        t += dt;
        if bdc_clocks_step(&mut ens, &mut g, dt).unwrap().contains(&0) {
            times.push(t - last);
            last = t;
        }
    }
    let n = times.len() as f64;
    let mean = times.iter().sum::<f64>() / n;
    let se = (1.0 / c) / n.sqrt();
    assert!((mean - 1.0 / c).abs() < 3.0 * se, "mean firing time {mean}");
}

/// Three particles on states {0, 1, 2} with state rates g = (-1, 0, 1),
/// simulated for `steps` steps; returns the occupancy fractions of each state.
fn occupancy(bdc: bool, steps: usize, dt: f64, reps: u64) -> [f64; 3] {
    let rate = [-1.0, 0.0, 1.0];
    let mut occ = [0.0; 3];
    for seed in 0..reps {
        let mut ens = ParticleEnsemble::new(vec![0.0, 1.0, 2.0], 1, seed).unwrap();
        for _ in 0..steps {
            let mut g: Vec<f64> = ens.positions.iter().map(|&x| rate[x as usize]).collect();
            if bdc {
                bdc_clocks_step(&mut ens, &mut g, dt).unwrap();
            } else {
                jump_resample_step(&mut ens, &mut g, dt).unwrap();
            }
        }
        for &x in &ens.positions {
            occ[x as usize] += 1.0 / (3.0 * reps as f64);
        }
    }
    occ
}

#[test]
fn jump_and_clock_simulators_agree() {
    let (steps, dt, reps) = (100, 1e-3, 100_000);
    let jump = occupancy(false, steps, dt, reps);
    let bdc = occupancy(true, steps, dt, reps);
    // mean-field reweighting ODE: p_i(T) proportional to exp(g_i T)
    let t = steps as f64 * dt;
    let z: f64 = [-1.0f64, 0.0, 1.0].iter().map(|g| (g * t).exp()).sum();
    for i in 0..3 {
        let ode = ((i as f64 - 1.0) * t).exp() / z;
        assert!((jump[i] - bdc[i]).abs() <= 2e-2, "{jump:?} vs {bdc:?}");
        assert!((jump[i] - ode).abs() <= 2e-2 && (bdc[i] - ode).abs() <= 2e-2);
    }
    // occupancy moves in the direction of g - g_bar
    assert!(jump[0] < 1.0 / 3.0 && jump[2] > 1.0 / 3.0);
    assert!(bdc[0] < 1.0 / 3.0 && bdc[2] > 1.0 / 3.0);
}
