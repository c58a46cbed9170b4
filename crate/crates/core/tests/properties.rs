use std::f64::consts::PI;

use angelesco::energy::{difference_energy, weighted_energy};
use angelesco::ensemble::{
    convergence_experiment, delta_q, gibbs_sample, johansson_probability, log_density_unnormalized,
    z_fekete_bounds, EnsembleSpec, IntegrationMode, QuadratureRule, SamplerOptions,
};
use angelesco::equilibrium::{kkt_residual, solve_equilibrium, SolverOptions};
use angelesco::fekete::{fekete_asymptotics, fekete_points, log_a, FeketeOptions};
use angelesco::field::{ExternalField, FieldComponent};
use angelesco::ldp::{rate_function, w_functional_quantile_probe};
use angelesco::measure::{
    counting_measure, weak_star_distance, Discretization, GridMeasure, Normalization, VectorMeasure,
};
use angelesco::system::{Configuration, IntervalSystem, MultiIndex, MultiIndexSequence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn two_intervals() -> IntervalSystem {
    IntervalSystem::new(vec![(-2.0, -1.0), (1.0, 2.0)], vec![0.5, 0.5]).unwrap()
}

fn random_measure(disc: &Discretization, rng: &mut ChaCha8Rng) -> VectorMeasure {
    let comps = disc
        .grids()
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let raw: Vec<f64> = (0..g.cells()).map(|_| rng.random::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mass = disc.system().mass(i);
            GridMeasure::new(g.clone(), raw.iter().map(|w| w * mass / total).collect()).unwrap()
        })
        .collect();
    VectorMeasure::new(comps).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn weak_star_distance_is_a_metric(seed in any::<u64>()) {
        let disc = Discretization::new(&two_intervals(), 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (random_measure(&disc, &mut rng), random_measure(&disc, &mut rng), random_measure(&disc, &mut rng));
        let ab = weak_star_distance(&a, &b).unwrap();
        prop_assert_eq!(weak_star_distance(&a, &a).unwrap(), 0.0);
        prop_assert!((ab - weak_star_distance(&b, &a).unwrap()).abs() < 1e-15);
        prop_assert!(ab > 0.0);
        let ac = weak_star_distance(&a, &c).unwrap();
        let bc = weak_star_distance(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-15);
    }

    #[test]
    fn log_a_shift_identity(seed in any::<u64>()) {
        let sys = two_intervals();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..2)
            .map(|i| {
                let iv = sys.interval(i);
                (0..rng.random_range(1..5)).map(|_| iv.a + iv.len() * rng.random::<f64>()).collect()
            })
            .collect();
        let x = Configuration::new(blocks, &sys).unwrap();
        let q = ExternalField::new(vec![FieldComponent::Quadratic { center: 0.0, scale: 0.5 }; 2]);
        let n = x.total() as f64;
        let sum: f64 = x.flatten().iter().map(|t| 0.5 * t * t).sum();
        prop_assert!((log_a(&x, &q) - (log_a(&x, &ExternalField::zero(2)) - 2.0 * n * sum)).abs() < 1e-10);
    }
}

#[test]
fn difference_energy_is_conditionally_positive() {
    let disc = Discretization::new(&two_intervals(), 200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..50 {
        let (nu, mu) = (
            random_measure(&disc, &mut rng),
            random_measure(&disc, &mut rng),
        );
        assert!(difference_energy(&nu, &mu).unwrap() > 0.0);
    }
}

#[test]
fn solver_objective_trace_is_monotone_and_kkt_holds() {
    let sys = two_intervals();
    let field = ExternalField::new(vec![
        FieldComponent::Quadratic {
            center: 0.0,
            scale: 0.5,
        },
        FieldComponent::Constant(0.2),
    ]);
    let sol = solve_equilibrium(&sys, &field, &SolverOptions::default()).unwrap();
    for w in sol.objective_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
    }
    let (res, _) = kkt_residual(&sol.measure, &field).unwrap();
    assert!((res - sol.kkt_residual).abs() < 1e-12);
    assert!(res <= 1e-4);
    sol.measure.check_membership(&sys).unwrap();
}

#[test]
fn equilibrium_is_the_unique_minimizer() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let sol = solve_equilibrium(&sys, &zero, &SolverOptions::default()).unwrap();
    let disc = Discretization::new(&sys, 400).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for k in 0..20 {
        // Mix with a random measure; the mixing weight sets the perturbation size.
        let t = 0.05 + 0.05 * k as f64;
        let r = random_measure(&disc, &mut rng);
        let mixed: Vec<f64> = sol
            .measure
            .flat_weights()
            .iter()
            .zip(r.flat_weights())
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect();
        let nu = sol.measure.with_flat_weights(&mixed).unwrap();
        let rate = rate_function(&nu, &zero, &sol).unwrap().rate;
        if weak_star_distance(&nu, &sol.measure).unwrap() > 0.01 {
            assert!(rate > 0.0, "t={t} rate={rate}");
        }
        assert!(rate >= -1e-3);
    }
    assert!(rate_function(&sol.measure, &zero, &sol).unwrap().rate.abs() <= 1e-3);
}

#[test]
fn rate_is_invariant_under_constant_field_shifts() {
    let sys = two_intervals();
    let field = ExternalField::new(vec![
        FieldComponent::Quadratic {
            center: 0.0,
            scale: 0.3
        };
        2
    ]);
    let shifted = field.shifted(&[0.7, -0.4]);
    let a = solve_equilibrium(&sys, &field, &SolverOptions::default()).unwrap();
    let b = solve_equilibrium(&sys, &shifted, &SolverOptions::default()).unwrap();
    let mu = Discretization::new(&sys, 400).unwrap().uniform_measure();
    let ra = rate_function(&mu, &field, &a).unwrap().rate;
    let rb = rate_function(&mu, &shifted, &b).unwrap().rate;
    assert!((ra - rb).abs() < 1e-6, "{ra} vs {rb}");
}

#[test]
fn uniform_rate_matches_fine_grid_oracle() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let sol = solve_equilibrium(&sys, &zero, &SolverOptions::default()).unwrap();
    let uniform = Discretization::new(&sys, 400).unwrap().uniform_measure();
    let rate = rate_function(&uniform, &zero, &sol).unwrap().rate;
    let fine_sol = solve_equilibrium(&sys, &zero, &SolverOptions::with_cells(1600)).unwrap();
    let fine_uniform = Discretization::new(&sys, 1600).unwrap().uniform_measure();
    let oracle = weighted_energy(&fine_uniform, &zero).unwrap().total - fine_sol.energy.total;
    assert!(rate > 0.0);
    assert!((rate - oracle).abs() < 1e-3, "{rate} vs {oracle}");
}

#[test]
fn two_interval_equilibrium_is_mirror_symmetric() {
    let sys = two_intervals();
    let sol = solve_equilibrium(&sys, &ExternalField::zero(2), &SolverOptions::default()).unwrap();
    let (left, right) = (
        sol.measure.component(0).weights(),
        sol.measure.component(1).weights(),
    );
    for (a, b) in left.iter().zip(right.iter().rev()) {
        assert!((a - b).abs() < 1e-5);
    }
    assert!((sol.modified_robin_constants[0] - sol.modified_robin_constants[1]).abs() < 1e-4);
}

/// Interior Fekete points of [-1, 1] are the roots of `P'_{n-1}`.
fn lobatto_points(n: usize) -> Vec<f64> {
    let m = n - 1;
    let legendre = |x: f64| {
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=m {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        (p1, p0)
    };
    let mut pts = vec![-1.0, 1.0];
    for k in 1..m {
        let mut x = -(PI * k as f64 / m as f64).cos();
        for _ in 0..100 {
            let (pm, pm1) = legendre(x);
            let d1 = m as f64 * (pm1 - x * pm) / (1.0 - x * x);
            let d2 = (2.0 * x * d1 - (m * (m + 1)) as f64 * pm) / (1.0 - x * x);
            let step = d1 / d2;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        pts.push(x);
    }
    pts.sort_by(f64::total_cmp);
    pts
}

#[test]
fn fekete_points_match_lobatto_nodes() {
    let sys = IntervalSystem::new(vec![(-1.0, 1.0)], vec![1.0]).unwrap();
    for n in [4, 7, 12] {
        let res = fekete_points(
            &sys,
            &ExternalField::zero(1),
            &MultiIndex::new(vec![n]).unwrap(),
            &FeketeOptions::default(),
        )
        .unwrap();
        assert!(res.coordinatewise_optimal);
        for (got, want) in res.config.block(0).iter().zip(lobatto_points(n)) {
            assert!((got - want).abs() < 1e-5, "n={n}: {got} vs {want}");
        }
    }
}

#[test]
fn fekete_beats_random_configurations() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let m = MultiIndex::new(vec![3, 2]).unwrap();
    let f = fekete_points(&sys, &zero, &m, &FeketeOptions::default()).unwrap();
    assert!((f.normalized - f.log_a / 25.0).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let blocks = (0..2)
            .map(|i| {
                let iv = sys.interval(i);
                (0..m.count(i))
                    .map(|_| iv.a + iv.len() * rng.random::<f64>())
                    .collect()
            })
            .collect();
        let x = Configuration::new(blocks, &sys).unwrap();
        assert!(f.log_a >= log_a(&x, &zero));
    }
}

#[test]
fn fekete_sequence_decreases_to_the_energy() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let eq = solve_equilibrium(&sys, &zero, &SolverOptions::default()).unwrap();
    let seq = MultiIndexSequence::proportional(&[0.5, 0.5], 4);
    let rows = fekete_asymptotics(&sys, &zero, &seq, 8, &FeketeOptions::default(), &eq).unwrap();
    let target = -eq.energy.total;
    let mut violations = 0;
    for w in rows.windows(2) {
        assert!(w[1].normalized < w[0].normalized);
        assert!(w[1].normalized - target < w[0].normalized - target);
        if w[1].distance >= w[0].distance {
            violations += 1;
        }
    }
    assert!(violations <= 1);
    assert!(rows.iter().all(|r| r.normalized > target));
}

#[test]
fn fekete_bounds_tighten_with_n() {
    let sys = two_intervals();
    let spec = EnsembleSpec::lebesgue(
        sys.clone(),
        ExternalField::zero(2),
        MultiIndexSequence::proportional(&[0.5, 0.5], 2),
    )
    .unwrap();
    let mut last = f64::INFINITY;
    for d in 1..=6 {
        let m = spec.multi_index(d).unwrap();
        let f = fekete_points(&sys, spec.field(), &m, &FeketeOptions::default()).unwrap();
        let b = z_fekete_bounds(&spec, d, &f, 0.05).unwrap();
        let n = m.total() as f64;
        let width = (b.upper - b.lower) / (n * n);
        assert!(width < last, "d={d}: {width} >= {last}");
        assert!(width > 2.0 * 1.05f64.ln());
        last = width;
    }
}

#[test]
fn gibbs_histogram_matches_exact_density() {
    // (1,1) on ([-2,-1],[1,2]) with density (x2 - x1)/3; bins are 20 x 20.
    let spec = EnsembleSpec::lebesgue(
        two_intervals(),
        ExternalField::zero(2),
        MultiIndexSequence::explicit(vec![vec![1, 1]]),
    )
    .unwrap();
    let bins = 20;
    let expected: Vec<f64> = (0..bins * bins)
        .map(|k| {
            let (a, b) = (k / bins, k % bins);
            let c1 = -2.0 + (a as f64 + 0.5) / bins as f64;
            let c2 = 1.0 + (b as f64 + 0.5) / bins as f64;
            (c2 - c1) / 3.0 / (bins * bins) as f64
        })
        .collect();
    let chi2 = |pairs: &[(f64, f64)]| {
        let mut counts = vec![0.0; bins * bins];
        for &(x1, x2) in pairs {
            let a = (((x1 + 2.0) * bins as f64) as usize).min(bins - 1);
            let b = (((x2 - 1.0) * bins as f64) as usize).min(bins - 1);
            counts[a * bins + b] += 1.0;
        }
        let total = pairs.len() as f64;
        counts
            .iter()
            .zip(&expected)
            .map(|(o, p)| (o - total * p).powi(2) / (total * p))
            .sum::<f64>()
    };
    let samples = 20_000;
    let opts = SamplerOptions {
        n_samples: samples,
        burn_in: 10,
        thin: 2,
        ..SamplerOptions::new(1, 21)
    };
    let batch = gibbs_sample(&spec, 1, &opts).unwrap();
    let gibbs: Vec<(f64, f64)> = batch
        .configs
        .iter()
        .map(|c| (c.block(0)[0], c.block(1)[0]))
        .collect();

    // Exact sampler: x1 by inverse CDF of (3/2 - x)/3, then x2 | x1 ∝ (x2 - x1).
    let exact = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| {
                let u: f64 = rng.random();
                // F(x) = (1.5x - x^2/2 + 5)/3 on [-2, -1].
                let x1 = 1.5 - (12.25 - 6.0 * u).sqrt();
                let (lo, hi) = (1.0 - x1, 2.0 - x1);
                let v: f64 = rng.random();
                let t = (lo * lo + v * (hi * hi - lo * lo)).sqrt();
                (x1, x1 + t)
            })
            .collect::<Vec<_>>()
    };
    let reference = chi2(&exact(100)).max(chi2(&exact(101)));
    let got = chi2(&gibbs);
    assert!(
        got <= 1.5 * reference,
        "gibbs chi2 {got}, exact runs up to {reference}"
    );
}

#[test]
fn independent_seeds_agree_statistically() {
    let sys = two_intervals();
    let spec = EnsembleSpec::lebesgue(
        sys.clone(),
        ExternalField::zero(2),
        MultiIndexSequence::explicit(vec![vec![20, 20]]),
    )
    .unwrap();
    let disc = Discretization::new(&sys, 400).unwrap();
    let mean_measure = |seed: u64| {
        let batch = gibbs_sample(
            &spec,
            1,
            &SamplerOptions {
                chains: 5,
                ..SamplerOptions::new(50, seed)
            },
        )
        .unwrap();
        let mut acc = vec![0.0; 800];
        for x in &batch.configs {
            let mu = counting_measure(x, &disc, Normalization::PerBlock).unwrap();
            for (a, w) in acc.iter_mut().zip(mu.flat_weights()) {
                *a += w / 50.0;
            }
        }
        disc.uniform_measure().with_flat_weights(&acc).unwrap()
    };
    let d = weak_star_distance(&mean_measure(1), &mean_measure(2)).unwrap();
    assert!(d <= 0.02, "{d}");
}

#[test]
fn one_point_per_block_distance_is_bounded() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let eq = solve_equilibrium(&sys, &zero, &SolverOptions::default()).unwrap();
    let spec =
        EnsembleSpec::lebesgue(sys, zero, MultiIndexSequence::explicit(vec![vec![1, 1]])).unwrap();
    let rows = convergence_experiment(&spec, &[1], 10, 5, &eq).unwrap();
    assert!(rows[0].mean_distance <= 1.0 && rows[0].mean_distance > 0.0);
}

#[test]
fn johansson_extreme_thresholds() {
    // eta >= delta leaves only A = 0 in B.
    let spec = EnsembleSpec::lebesgue(
        two_intervals(),
        ExternalField::zero(2),
        MultiIndexSequence::explicit(vec![vec![1, 1]]),
    )
    .unwrap();
    let mode = IntegrationMode::Quadrature {
        rule: QuadratureRule::Midpoint(40),
    };
    let r = johansson_probability(&spec, 1, 1.0, 0.5, mode).unwrap();
    assert_eq!(r.probability, 0.0);
    // Scaled system: A^{1/4} <= 40^{1/4} < δ - η, so B is everything.
    let wide = IntervalSystem::new(vec![(-20.0, -10.0), (10.0, 20.0)], vec![0.5, 0.5]).unwrap();
    let eq = solve_equilibrium(&wide, &ExternalField::zero(2), &SolverOptions::default()).unwrap();
    let delta = delta_q(&eq);
    let spec = EnsembleSpec::lebesgue(
        wide,
        ExternalField::zero(2),
        MultiIndexSequence::explicit(vec![vec![1, 1]]),
    )
    .unwrap();
    let r = johansson_probability(&spec, 1, 0.1 * delta, delta, mode).unwrap();
    assert!(delta - 0.1 * delta > 40f64.powf(0.25));
    assert!((r.probability - 1.0).abs() < 1e-12);
}

#[test]
fn johansson_probability_decreases_with_n() {
    let sys = two_intervals();
    let zero = ExternalField::zero(2);
    let eq = solve_equilibrium(&sys, &zero, &SolverOptions::default()).unwrap();
    let delta = delta_q(&eq);
    let seq = MultiIndexSequence::explicit(vec![
        vec![1, 1],
        vec![2, 1],
        vec![2, 2],
        vec![3, 3],
        vec![4, 4],
    ]);
    let spec = EnsembleSpec::lebesgue(sys, zero, seq).unwrap();
    let mode = IntegrationMode::Quadrature {
        rule: QuadratureRule::Midpoint(40),
    };
    let quad: Vec<f64> = (1..=3)
        .map(|d| {
            johansson_probability(&spec, d, 0.1 * delta, delta, mode)
                .unwrap()
                .probability
        })
        .collect();
    assert!(quad[2] < quad[1]);
    for d in 4..=5 {
        let mc = IntegrationMode::MonteCarlo {
            samples: 2000,
            seed: d as u64,
        };
        let r = johansson_probability(&spec, d, 0.1 * delta, delta, mc).unwrap();
        assert!(r.probability <= quad[2] + 3.0 * r.std_error.unwrap() + 1e-12);
        assert!(r.bound_holds);
    }
}

#[test]
fn quantile_probe_is_cauchy_like() {
    let sys = IntervalSystem::new(vec![(-1.0, 1.0)], vec![1.0]).unwrap();
    let arc = Discretization::new(&sys, 400)
        .unwrap()
        .measure_from_cdfs(&[&|x: f64| x.clamp(-1.0, 1.0).asin() / PI])
        .unwrap();
    let rows =
        w_functional_quantile_probe(&arc, &ExternalField::zero(1), &[50, 100, 200, 400]).unwrap();
    let steps: Vec<f64> = rows
        .windows(2)
        .map(|w| (w[1].normalized - w[0].normalized).abs())
        .collect();
    assert!(steps[1] < steps[0] && steps[2] < steps[1]);
    assert!(rows.iter().all(|r| r.normalized > -2f64.ln()));
    assert!(rows[3].normalized + 2f64.ln() <= 0.05);
}

#[test]
fn equilibrium_probe_approaches_log_delta() {
    let sys = two_intervals();
    let field = ExternalField::new(vec![
        FieldComponent::Quadratic {
            center: 0.0,
            scale: 0.25
        };
        2
    ]);
    let eq = solve_equilibrium(&sys, &field, &SolverOptions::default()).unwrap();
    let rows = w_functional_quantile_probe(&eq.measure, &field, &[50, 100, 200]).unwrap();
    let target = delta_q(&eq).ln();
    let gaps: Vec<f64> = rows.iter().map(|r| (r.normalized - target).abs()).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1]);
    assert!(gaps[2] <= 0.05);
}

#[test]
fn density_doubling_shifts_log_density() {
    let sys = two_intervals();
    let spec = EnsembleSpec::lebesgue(
        sys.clone(),
        ExternalField::zero(2),
        MultiIndexSequence::explicit(vec![vec![2, 1]]),
    )
    .unwrap();
    let doubled = EnsembleSpec::new(
        sys.clone(),
        ExternalField::zero(2),
        vec![spec.base(0).scaled(2.0).unwrap(), spec.base(1).clone()],
        spec.sequence().clone(),
    )
    .unwrap();
    let x = Configuration::new(vec![vec![-1.8, -1.1], vec![1.7]], &sys).unwrap();
    let diff = log_density_unnormalized(&doubled, 1, &x).unwrap()
        - log_density_unnormalized(&spec, 1, &x).unwrap();
    assert!((diff - 2.0 * 2f64.ln()).abs() < 1e-12);
}

#[test]
fn bm_kernel_matches_hankel_cholesky_oracle() {
    use angelesco::ensemble::BaseMeasure;
    use angelesco::ldp::bm_constant;
    use angelesco::measure::Grid;
    use angelesco::mop::moments;
    use angelesco::system::Interval;
    use nalgebra::{DMatrix, DVector};
    use std::sync::Arc;

    let grid = Arc::new(Grid::midpoint(0, Interval::new(0.0, 2.0).unwrap(), 200).unwrap());
    let tau = BaseMeasure::power(grid.clone(), 2.0).unwrap();
    for n in [0, 3, 6] {
        let mom = moments(&tau, 2 * n);
        let h = DMatrix::from_fn(n + 1, n + 1, |i, j| mom[i + j] / mom[0]);
        let chol = h.cholesky().unwrap();
        let mut points = vec![0.0, 2.0];
        points.extend_from_slice(grid.refined(4).nodes());
        let oracle = points
            .iter()
            .map(|&x| {
                let v = DVector::from_fn(n + 1, |k, _| x.powi(k as i32));
                v.dot(&chol.solve(&v))
            })
            .fold(0.0, f64::max);
        let got = bm_constant(&tau, n, None).unwrap().beta;
        assert!(
            (got - oracle).abs() <= 1e-6 * oracle,
            "n={n}: {got} vs {oracle}"
        );
        assert!(got >= 1.0 - 1e-9);
    }
}
