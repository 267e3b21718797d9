#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use orens::consts::STATE_TOL;
use orens::dynamics::{
    default_dt, excitation_mapping_populations, lindblad_evolve, Drive, Envelope, JointState, PulseSegment,
};
use orens::estimator::{
    frobenius_distance, linear_inversion_values, mle_project, reconstruct_values, uhlmann_fidelity, BayesConfig,
};
use orens::fockspace::{
    displacement_op, make_state, qn_at, quasiprob_grid, CatPhase, QuasiKind,
};
use orens::linalg::{hermitian_eigenvalues, hermiticity_error, random_ginibre_state, random_orthogonal};
use orens::measurement::{
    affine_transform, born_probabilities, build_measurement_matrix, condition_number, expectations,
    plan_condition_number, vec_col,
};
use orens::noise::{
    ens_response, parity_coefficients, parity_dephased, parity_fock, parity_xi, pn_dephased, readout_distort,
    thermal_correct, thermal_distort, Channel,
};
use orens::optimizer::{optimize_displacements, rotated_cn, KindFamily, OptimizerConfig};
use orens::{Complex64, ComplexMatrix, DensityMatrix, MeasurementPlan, NoiseModel, ObservableKind, OrensError, PhaseSpaceGrid, StateSpec};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = std::result::Result<(), String>;
type Case = std::result::Result<(), TestCaseError>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre_state(rng: &mut ChaCha8Rng, dim: usize) -> DensityMatrix {
    DensityMatrix::new(random_ginibre_state(rng, dim)).expect("Ginibre states are physical")
}

/// Random Hermitian unit-trace matrix, not necessarily positive.
pub fn hermitian_unit_trace(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    let g = orens::linalg::ginibre(rng, dim, dim);
    let h = (&g + g.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = orens::linalg::trace(&h).re;
    let shift = (1.0 - tr) / dim as f64;
    h + DMatrix::identity(dim, dim) * Complex64::new(shift, 0.0)
}

/// Random distinct displacements inside `|α| ≤ radius`.
pub fn random_alphas(rng: &mut ChaCha8Rng, count: usize, radius: f64) -> Vec<Complex64> {
    (0..count)
        .map(|_| Complex64::from_polar(radius * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..2.0 * PI)))
        .collect()
}

pub fn random_plan(rng: &mut ChaCha8Rng, dim: usize, kind: ObservableKind) -> MeasurementPlan {
    MeasurementPlan::new(dim, kind, random_alphas(rng, dim * dim - 1, 2.0), "random").expect("distinct draws")
}

fn random_kind(rng: &mut ChaCha8Rng, dim: usize) -> ObservableKind {
    match rng.gen_range(0..3) {
        0 => ObservableKind::Parity,
        _ => ObservableKind::Fock(rng.gen_range(0..dim)),
    }
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Case) -> Outcome {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail(msg: String) -> TestCaseError {
    TestCaseError::fail(msg)
}

fn lift<T>(r: orens::Result<T>) -> std::result::Result<T, TestCaseError> {
    r.map_err(|e| fail(e.to_string()))
}

// ---------------------------------------------------------------- fockspace

fn spec_strategy() -> impl Strategy<Value = StateSpec> {
    let phase = prop_oneof![
        Just(CatPhase::Plus),
        Just(CatPhase::Minus),
        Just(CatPhase::PlusI),
        Just(CatPhase::MinusI)
    ];
    prop_oneof![
        (0usize..16).prop_map(|k| StateSpec::Fock { k }),
        (0usize..16, 0usize..16, -PI..PI)
            .prop_filter("distinct levels", |(j, k, _)| j != k)
            .prop_map(|(j, k, phi)| StateSpec::Superposition { j, k, phi }),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| StateSpec::coherent(Complex64::new(re, im))),
        (-2.0..2.0f64, -2.0..2.0f64, phase)
            .prop_filter("non-vanishing cat", |(re, im, _)| re.hypot(*im) > 0.1)
            .prop_map(|(re, im, p)| StateSpec::cat(Complex64::new(re, im), p)),
    ]
}

pub fn state_invariants() -> Outcome {
    check(400, (spec_strategy(), 1usize..=16), |(spec, dim)| {
        let rho = match make_state(&spec, dim) {
            Ok(r) => r,
            Err(OrensError::Truncation { .. } | OrensError::IndexOutOfRange { .. }) => {
                return Err(TestCaseError::reject("not representable at this dimension"))
            }
            Err(e) => return Err(fail(format!("{spec} at D={dim}: {e}"))),
        };
        let m = rho.matrix();
        prop_assert!(hermiticity_error(m) <= STATE_TOL, "{spec}: not Hermitian");
        prop_assert!((orens::linalg::trace(m) - Complex64::new(1.0, 0.0)).norm() <= STATE_TOL, "{spec}: trace");
        prop_assert!(hermitian_eigenvalues(m).min() >= -STATE_TOL, "{spec}: negative eigenvalue");
        Ok(())
    })
}

pub fn displacement_adjoint() -> Outcome {
    check(200, (-2.0..2.0f64, -2.0..2.0f64, 1usize..=16), |(re, im, dim)| {
        let a = Complex64::new(re, im);
        let plus = lift(displacement_op(a, dim))?;
        let minus = lift(displacement_op(-a, dim))?;
        let worst = (minus - plus.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-10, "α = {a}, D = {dim}: {worst:.2e}");
        Ok(())
    })
}

/// Riemann sum over `[−5, 5]²`; the Wigner function of a D = 4 state is
/// smooth and Gaussian-decaying, so a 0.1 spacing is far below 1e−3.
pub fn wigner_normalization() -> Outcome {
    check(24, any::<u64>(), |seed| {
        let rho = ginibre_state(&mut rng(seed), 4);
        let grid = PhaseSpaceGrid::square(5.0, 101);
        let w = lift(quasiprob_grid(&rho, QuasiKind::Wigner, &grid))?;
        let total = w.sum() * grid.cell_area();
        prop_assert!((total - 1.0).abs() <= 1e-3, "integral {total}");
        Ok(())
    })
}

pub fn qn_bounds() -> Outcome {
    check(300, (any::<u64>(), 1usize..=8, -3.0..3.0f64, -3.0..3.0f64), |(seed, dim, re, im)| {
        let mut r = rng(seed);
        let rho = ginibre_state(&mut r, dim);
        let n = r.gen_range(0..dim);
        let q = qn_at(&rho, n, Complex64::new(re, im));
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&q), "q_{n} = {q}");
        Ok(())
    })
}

// -------------------------------------------------------------- measurement

pub fn measurement_rows_hermitian() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6), |(seed, dim)| {
        let mut r = rng(seed);
        let kind = random_kind(&mut r, dim);
        let plan = random_plan(&mut r, dim, kind);
        let rho = random_ginibre_state(&mut r, dim);
        let p = build_measurement_matrix(&plan) * vec_col(&rho);
        let worst = p.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        prop_assert!(worst <= 1e-12, "imaginary part {worst:.2e}");
        let exact = lift(expectations(&DensityMatrix::new(rho).unwrap(), &plan))?;
        let diff = p.iter().zip(exact.iter()).map(|(a, b)| (a.re - b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-12, "row product differs from Tr(ρE) by {diff:.2e}");
        Ok(())
    })
}

pub fn cn_orthogonal_invariance() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6), |(seed, dim)| {
        let mut r = rng(seed);
        let kind = random_kind(&mut r, dim);
        let plan = random_plan(&mut r, dim, kind);
        let m = affine_transform(&plan).m;
        let q = random_orthogonal(&mut r, m.nrows());
        let a = lift(condition_number(&m))?;
        let b = lift(condition_number(&(q * &m)))?;
        if !a.is_finite() || a > 1e6 {
            return Err(TestCaseError::reject("ill-conditioned draw"));
        }
        prop_assert!(((a - b) / a).abs() <= 1e-9, "CN {a} vs rotated {b}");
        Ok(())
    })
}

pub fn born_linearity() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6, 0.0..=1.0f64), |(seed, dim, lambda)| {
        let mut r = rng(seed);
        let kind = random_kind(&mut r, dim);
        let plan = random_plan(&mut r, dim, kind);
        let a = ginibre_state(&mut r, dim);
        let b = ginibre_state(&mut r, dim);
        let mix = DensityMatrix::from_approx(
            a.matrix() * Complex64::from(lambda) + b.matrix() * Complex64::from(1.0 - lambda),
        )
        .map_err(|e| fail(e.to_string()))?;
        let lhs = lift(born_probabilities(&mix, &plan))?;
        let rhs = lift(born_probabilities(&a, &plan))? * lambda + lift(born_probabilities(&b, &plan))? * (1.0 - lambda);
        let diff = (lhs - rhs).amax();
        prop_assert!(diff <= 1e-12, "nonlinearity {diff:.2e}");
        Ok(())
    })
}

pub fn permutation_covariance() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6), |(seed, dim)| {
        let mut r = rng(seed);
        let kind = random_kind(&mut r, dim);
        let plan = random_plan(&mut r, dim, kind);
        let mut order: Vec<usize> = (0..plan.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, r.gen_range(0..=i));
        }
        let permuted = MeasurementPlan::new(dim, kind, order.iter().map(|&i| plan.alphas()[i]).collect(), "perm").unwrap();
        let rho = ginibre_state(&mut r, dim);
        let p = lift(born_probabilities(&rho, &plan))?;
        let q = lift(born_probabilities(&rho, &permuted))?;
        for (k, &i) in order.iter().enumerate() {
            prop_assert_eq!(q[k], p[i]);
        }
        Ok(())
    })
}

// ---------------------------------------------------------------- optimizer

/// Short schedule so a full run stays in the millisecond range.
pub fn small_config(dim: usize, family: KindFamily, seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        restarts: 2,
        max_iters: 60,
        seed,
        smoothing: vec![(1, 30), (4, 30)],
        ..OptimizerConfig::new(dim, family)
    }
}

pub fn optimizer_properties() -> Outcome {
    check(200, (any::<u64>(), 2usize..=3, 0.5..2.5f64, 0usize..4), |(seed, dim, max_alpha, fam)| {
        let family = match fam {
            0 => KindFamily::Parity,
            1 => KindFamily::Husimi,
            _ => KindFamily::FockFixed(dim - 1),
        };
        let config = OptimizerConfig {
            max_alpha,
            ..small_config(dim, family, seed)
        };
        let kind = config.kinds()[0];
        let out = lift(optimize_displacements(&config, kind))?;
        for w in out.trace.windows(2) {
            prop_assert!(w[1].1 <= w[0].1, "trace increased: {:?} -> {:?}", w[0], w[1]);
        }
        for a in out.plan.alphas() {
            prop_assert!(a.norm() <= max_alpha + 1e-12, "|α| = {} above {max_alpha}", a.norm());
        }
        let cn = lift(plan_condition_number(&out.plan))?;
        prop_assert!((cn - out.cn).abs() <= 1e-9 * cn.max(1.0), "reported {} vs {cn}", out.cn);
        let again = lift(optimize_displacements(&config, kind))?;
        prop_assert_eq!(serde_json::to_string(&out).unwrap(), serde_json::to_string(&again).unwrap());
        Ok(())
    })
}

pub fn phase_covariance() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6, -PI..PI), |(seed, dim, theta)| {
        let mut r = rng(seed);
        let n = r.gen_range(0..dim);
        let plan = random_plan(&mut r, dim, ObservableKind::Fock(n));
        let cn = lift(plan_condition_number(&plan))?;
        if !cn.is_finite() || cn > 1e4 {
            return Err(TestCaseError::reject("ill-conditioned draw"));
        }
        let rot = lift(rotated_cn(&plan, theta))?;
        prop_assert!((rot - cn).abs() < 1e-6, "CN {cn} rotated by {theta}: {rot}");
        Ok(())
    })
}

// -------------------------------------------------------------------- noise

fn model_strategy() -> impl Strategy<Value = NoiseModel> {
    (
        (0.05..100.0f64, 0.0..0.5f64, 0.0..0.2f64, 0.0..0.2f64),
        (0.0..0.1f64, 0.1..1.0f64, 0.2..3.0f64, 0.5..3.0f64),
    )
        .prop_map(|((t_phi, lambda, peg, pge), (t_pi2, t_wait, t_pi, chi_mhz))| NoiseModel {
            chi: 2.0 * PI * chi_mhz,
            t_pi,
            t_pi2,
            t_wait,
            t_phi,
            lambda_thermal: lambda,
            p_e_given_g: peg,
            p_g_given_e: pge,
            ..NoiseModel::device()
        })
}

pub fn noise_ranges() -> Outcome {
    check(300, (model_strategy(), 0.0..=1.0f64, -1.0..=1.0f64, 0usize..12, any::<u64>()), |(m, p, par, n, seed)| {
        let unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        let sym = |v: f64| (-1.0 - 1e-12..=1.0 + 1e-12).contains(&v);
        prop_assert!(unit(pn_dephased(p, &m)));
        prop_assert!(sym(parity_dephased(par, &m)));
        prop_assert!(unit(thermal_distort(p, Channel::Excitation, m.lambda_thermal)));
        prop_assert!(sym(thermal_distort(par, Channel::Parity, m.lambda_thermal)));
        prop_assert!(unit(readout_distort(p, m.p_e_given_g, m.p_g_given_e)));
        prop_assert!(sym(parity_fock(n, &m, false)) && sym(parity_fock(n, &m, true)));
        let pops = ginibre_state(&mut rng(seed), 8).populations();
        let delta = m.shift(n);
        prop_assert!(unit(lift(ens_response(&pops, delta, &m))?));
        Ok(())
    })
}

pub fn noise_monotone_in_t_phi() -> Outcome {
    check(300, (model_strategy(), 0.01..50.0f64, 0.0..50.0f64, 0.0..=1.0f64), |(m, t, dt, v)| {
        let (lo, hi) = (m.with_t_phi(t), m.with_t_phi(t + dt));
        prop_assert!(pn_dephased(v, &lo) <= pn_dephased(v, &hi) + 1e-15);
        prop_assert!(parity_dephased(v, &lo) <= parity_dephased(v, &hi) + 1e-15);
        Ok(())
    })
}

pub fn thermal_roundtrip() -> Outcome {
    check(300, (0.0..=0.49f64, -1.0..=1.0f64), |(lambda, v)| {
        for ch in [Channel::Excitation, Channel::Parity] {
            let a = lift(thermal_correct(thermal_distort(v, ch, lambda), ch, lambda))?;
            let b = thermal_distort(lift(thermal_correct(v, ch, lambda))?, ch, lambda);
            prop_assert!((a - v).abs() <= 1e-12 && (b - v).abs() <= 1e-12, "{ch:?} λ={lambda}: {a} {b} vs {v}");
        }
        Ok(())
    })
}

pub fn ens_response_scaling() -> Outcome {
    check(300, (model_strategy(), 1.0..20.0f64, -30.0..30.0f64, any::<u64>()), |(m, k, delta, seed)| {
        let pops = ginibre_state(&mut rng(seed), 8).populations();
        let scaled = NoiseModel {
            chi: m.chi / k,
            chi2: m.chi2 / k,
            t_pi: m.t_pi * k,
            ..m
        };
        let a = lift(ens_response(&pops, delta, &m))?;
        let b = lift(ens_response(&pops, delta / k, &scaled))?;
        prop_assert!((a - b).abs() <= 1e-12, "k={k}: {a} vs {b}");
        Ok(())
    })
}

pub fn parity_offset_identity() -> Outcome {
    check(300, (model_strategy(), 0usize..16), |(m, n)| {
        let f3 = parity_coefficients(parity_xi(n, &m)).f3;
        let sum = parity_fock(n, &m, false) + parity_fock(n, &m, true);
        prop_assert!((sum + 2.0 * f3).abs() <= 1e-9, "n={n}: {sum} vs {}", -2.0 * f3);
        Ok(())
    })
}

// ----------------------------------------------------------------- dynamics

fn random_qubit(r: &mut ChaCha8Rng) -> nalgebra::Matrix2<Complex64> {
    let q = random_ginibre_state(r, 2);
    nalgebra::Matrix2::from_fn(|i, j| q[(i, j)])
}

fn random_segments(r: &mut ChaCha8Rng, m: &NoiseModel) -> Vec<PulseSegment> {
    let mut segs = vec![
        PulseSegment::half_pi(&NoiseModel { t_pi2: r.gen_range(0.01..0.08), ..*m }, r.gen_bool(0.5)),
        PulseSegment {
            detuning: r.gen_range(-5.0..5.0),
            phase: r.gen_range(0.0..2.0 * PI),
            ..PulseSegment::selective_pi(m, 0.0, Envelope::Gaussian)
        },
    ];
    // a wait split into chunks
    let total = r.gen_range(0.05..0.4);
    segs.extend((0..3).map(|_| PulseSegment::wait(total / 3.0)));
    segs.push(PulseSegment {
        duration: r.gen_range(0.05..0.3),
        drive: Drive::Square { omega: r.gen_range(1.0..10.0) },
        detuning: r.gen_range(-5.0..5.0),
        phase: r.gen_range(0.0..2.0 * PI),
        dispersive: true,
        second_order: true,
    });
    segs
}

fn dynamics_model(r: &mut ChaCha8Rng) -> NoiseModel {
    NoiseModel {
        chi2: r.gen_range(-0.05..0.05),
        t_pi: r.gen_range(0.3..1.0),
        t_phi: if r.gen_bool(0.3) { f64::INFINITY } else { r.gen_range(0.2..50.0) },
        t1: if r.gen_bool(0.3) { f64::INFINITY } else { r.gen_range(1.0..100.0) },
        ..NoiseModel::device()
    }
}

pub fn dynamics_state_invariants() -> Outcome {
    check(200, (any::<u64>(), 2usize..=4), |(seed, dim)| {
        let mut r = rng(seed);
        let m = dynamics_model(&mut r);
        let q = random_qubit(&mut r);
        let mut state = lift(JointState::product(&q, &ginibre_state(&mut r, dim), dim + 2))?;
        for seg in random_segments(&mut r, &m) {
            state = lift(lindblad_evolve(&state, &seg, &m, default_dt(&seg, &m, state.d_sim())))?;
            let h = hermiticity_error(state.matrix());
            let min = hermitian_eigenvalues(state.matrix()).min();
            prop_assert!(h <= 1e-8, "hermiticity {h:.2e}");
            prop_assert!((state.trace() - 1.0).abs() <= 1e-8, "trace {}", state.trace());
            prop_assert!(min >= -1e-8, "min eigenvalue {min:.2e}");
        }
        Ok(())
    })
}

pub fn dynamics_step_halving() -> Outcome {
    check(200, (any::<u64>(), 2usize..=4), |(seed, dim)| {
        let mut r = rng(seed);
        let m = dynamics_model(&mut r);
        let q = random_qubit(&mut r);
        let state = lift(JointState::product(&q, &ginibre_state(&mut r, dim), dim + 2))?;
        let segs = random_segments(&mut r, &m);
        let seg = segs[r.gen_range(0..segs.len())];
        let dt = default_dt(&seg, &m, state.d_sim());
        let a = lift(lindblad_evolve(&state, &seg, &m, dt))?.excited_prob();
        let b = lift(lindblad_evolve(&state, &seg, &m, 0.5 * dt))?.excited_prob();
        prop_assert!((a - b).abs() < 1e-6, "p_e {a} vs {b}");
        Ok(())
    })
}

pub fn dynamics_unitary_purity() -> Outcome {
    check(200, (any::<u64>(), 2usize..=4), |(seed, dim)| {
        let mut r = rng(seed);
        let m = NoiseModel {
            t_phi: f64::INFINITY,
            t1: f64::INFINITY,
            ..dynamics_model(&mut r)
        };
        let psi_q = orens::linalg::ginibre(&mut r, 2, 1);
        let psi_q = &psi_q / Complex64::from(psi_q.norm());
        let q = nalgebra::Matrix2::from_fn(|i, j| psi_q[i] * psi_q[j].conj());
        let psi_c = orens::linalg::ginibre(&mut r, dim, 1);
        let cav = DensityMatrix::from_pure(&psi_c.column(0).unscale(psi_c.norm())).unwrap();
        let mut state = lift(JointState::product(&q, &cav, dim + 2))?;
        for seg in random_segments(&mut r, &m) {
            state = lift(lindblad_evolve(&state, &seg, &m, default_dt(&seg, &m, state.d_sim())))?;
            prop_assert!((state.purity() - 1.0).abs() <= 1e-9, "purity {}", state.purity());
        }
        Ok(())
    })
}

pub fn dynamics_scaling() -> Outcome {
    check(200, (any::<u64>(), 2usize..=6, 1.0..10.0f64), |(seed, dim, k)| {
        let mut r = rng(seed);
        let m = dynamics_model(&mut r);
        let scaled = NoiseModel {
            chi: m.chi / k,
            chi2: m.chi2 / k,
            t_pi: m.t_pi * k,
            t_phi: m.t_phi * k,
            t1: m.t1 * k,
            ..m
        };
        let pops = ginibre_state(&mut r, dim).populations();
        let n = r.gen_range(0..dim);
        let a = lift(excitation_mapping_populations(&pops, n, &m, Envelope::Square))?;
        let b = lift(excitation_mapping_populations(&pops, n, &scaled, Envelope::Square))?;
        prop_assert!((a - b).abs() <= 1e-6, "k={k}: {a} vs {b}");
        Ok(())
    })
}

// ---------------------------------------------------------------- estimator

static PLANS: OnceLock<Vec<MeasurementPlan>> = OnceLock::new();

/// Installs externally optimized plans for [`inversion_roundtrip`]; later
/// calls are ignored.
pub fn set_plans(plans: Vec<MeasurementPlan>) {
    let _ = PLANS.set(plans);
}

/// One optimized `n = D−1` plan per `D ∈ 2..=6`.
pub fn optimized_plans() -> &'static [MeasurementPlan] {
    PLANS.get_or_init(|| {
        (2..=6)
            .map(|dim| {
                let config = OptimizerConfig {
                    restarts: 4,
                    seed: 3,
                    ..OptimizerConfig::new(dim, KindFamily::FockFixed(dim - 1))
                };
                optimize_displacements(&config, ObservableKind::Fock(dim - 1)).unwrap().plan
            })
            .collect()
    })
}

pub fn inversion_roundtrip() -> Outcome {
    let plans = optimized_plans();
    check(200, (any::<u64>(), 0..plans.len()), |(seed, i)| {
        let plan = &plans[i];
        let rho = ginibre_state(&mut rng(seed), plan.dim());
        let x = lift(expectations(&rho, plan))?;
        let back = lift(linear_inversion_values(plan, &x))?;
        let err = frobenius_distance(&back, rho.matrix());
        prop_assert!(err <= 1e-10, "D={}: error {err:.2e}", plan.dim());
        Ok(())
    })
}

pub fn mle_projection() -> Outcome {
    check(300, (any::<u64>(), 2usize..=8), |(seed, dim)| {
        let h = hermitian_unit_trace(&mut rng(seed), dim);
        let p = lift(mle_project(&h))?;
        let eig = hermitian_eigenvalues(p.matrix());
        prop_assert!((eig.sum() - 1.0).abs() <= 1e-12, "eigenvalue sum {}", eig.sum());
        prop_assert!(eig.min() >= 0.0 || eig.min() > -1e-12, "eigenvalue {}", eig.min());
        prop_assert!((orens::linalg::trace(p.matrix()).re - 1.0).abs() <= 1e-12);
        let again = lift(mle_project(p.matrix()))?;
        let d = frobenius_distance(again.matrix(), p.matrix());
        prop_assert!(d <= 1e-12, "not idempotent: {d:.2e}");
        Ok(())
    })
}

fn bloch(x: f64, y: f64, z: f64) -> ComplexMatrix {
    let c = |re: f64, im: f64| Complex64::new(re, im);
    DMatrix::from_row_slice(2, 2, &[c(0.5 * (1.0 + z), 0.0), c(0.5 * x, -0.5 * y), c(0.5 * x, 0.5 * y), c(0.5 * (1.0 - z), 0.0)])
}

/// Closest Bloch-ball state on a cubic grid of spacing `h` around `centre`.
fn grid_search(target: &ComplexMatrix, centre: [f64; 3], half: f64, h: f64) -> ([f64; 3], f64) {
    let steps = (half / h).round() as i64;
    let mut best = (centre, f64::INFINITY);
    for i in -steps..=steps {
        for j in -steps..=steps {
            for k in -steps..=steps {
                let p = [centre[0] + i as f64 * h, centre[1] + j as f64 * h, centre[2] + k as f64 * h];
                if p[0] * p[0] + p[1] * p[1] + p[2] * p[2] > 1.0 {
                    continue;
                }
                let d = frobenius_distance(&bloch(p[0], p[1], p[2]), target);
                if d < best.1 {
                    best = (p, d);
                }
            }
        }
    }
    best
}

pub fn mle_nearest_qubit() -> Outcome {
    check(50, any::<u64>(), |seed| {
        let h = hermitian_unit_trace(&mut rng(seed), 2) * Complex64::from(1.0);
        let p = lift(mle_project(&h))?;
        let d_mle = frobenius_distance(p.matrix(), &h);
        let (coarse, _) = grid_search(&h, [0.0; 3], 1.0, 0.05);
        let (_, d_grid) = grid_search(&h, coarse, 0.06, 0.002);
        prop_assert!(d_mle <= d_grid + 1e-12, "grid found a closer state: {d_grid} < {d_mle}");
        prop_assert!(d_grid - d_mle <= 1e-3, "MLE {d_mle} vs grid {d_grid}");
        Ok(())
    })
}

fn quick_bayes(seed: u64) -> BayesConfig {
    BayesConfig {
        samples: 64,
        thinning: 4,
        seed,
        ..BayesConfig::default()
    }
}

pub fn bme_deterministic() -> Outcome {
    let plans = optimized_plans();
    check(200, (any::<u64>(), 0usize..2), |(seed, i)| {
        let plan = &plans[i];
        let rho = ginibre_state(&mut rng(seed), plan.dim());
        let x = lift(expectations(&rho, plan))?;
        let a = lift(reconstruct_values(plan, &x, &quick_bayes(seed)))?;
        let b = lift(reconstruct_values(plan, &x, &quick_bayes(seed)))?;
        prop_assert_eq!(a, b);
        Ok(())
    })
}

/// Mean Frobenius error of `ρ_BME` over ten seeds at `N` and `100·N`
/// shots; the larger sample must win on a majority.
pub fn bme_shot_scaling() -> Outcome {
    let plan = &optimized_plans()[1];
    let mut wins = 0;
    for seed in 0..10u64 {
        let rho = ginibre_state(&mut rng(1000 + seed), plan.dim());
        let probs = born_probabilities(&rho, plan).map_err(|e| e.to_string())?;
        let err = |shots: u64| -> Result<f64, String> {
            let rec = orens::measurement::sample_record(plan, &probs, shots, seed, orens::measurement::Mapping::Normal)
                .map_err(|e| e.to_string())?;
            let cfg = BayesConfig {
                samples: 256,
                thinning: 32,
                seed,
                ..BayesConfig::default()
            };
            let res = orens::estimator::reconstruct(plan, &rec, &cfg).map_err(|e| e.to_string())?;
            Ok(frobenius_distance(res.rho_bme.matrix(), rho.matrix()))
        };
        if err(10_000)? < err(100)? {
            wins += 1;
        }
    }
    if wins > 5 {
        Ok(())
    } else {
        Err(format!("100x shots reduced the error on only {wins}/10 seeds"))
    }
}

pub fn fidelity_symmetry() -> Outcome {
    check(300, (any::<u64>(), 1usize..=8), |(seed, dim)| {
        let mut r = rng(seed);
        let a = ginibre_state(&mut r, dim);
        let b = ginibre_state(&mut r, dim);
        let f = lift(uhlmann_fidelity(&a, &b))?;
        let g = lift(uhlmann_fidelity(&b, &a))?;
        prop_assert!((f - g).abs() <= 1e-9, "{f} vs {g}");
        prop_assert!((0.0..=1.0).contains(&f));
        Ok(())
    })
}

pub type Property = (&'static str, fn() -> Outcome);

/// Every property, in module order.
pub const ALL: &[Property] = &[
    ("fockspace: descriptor states are physical", state_invariants),
    ("fockspace: D(-a) = D(a)^dagger", displacement_adjoint),
    ("fockspace: Wigner integrates to one", wigner_normalization),
    ("fockspace: q_n within [0, 1]", qn_bounds),
    ("measurement: rows are Hermitian observables", measurement_rows_hermitian),
    ("measurement: CN orthogonally invariant", cn_orthogonal_invariance),
    ("measurement: Born rule linear", born_linearity),
    ("measurement: permutation covariance", permutation_covariance),
    ("optimizer: monotone, feasible, reproducible", optimizer_properties),
    ("optimizer: global phase covariance", phase_covariance),
    ("noise: output ranges", noise_ranges),
    ("noise: monotone in T_phi", noise_monotone_in_t_phi),
    ("noise: thermal roundtrip", thermal_roundtrip),
    ("noise: ens_response scaling", ens_response_scaling),
    ("noise: parity offset identity", parity_offset_identity),
    ("dynamics: state invariants", dynamics_state_invariants),
    ("dynamics: step halving", dynamics_step_halving),
    ("dynamics: unitary purity", dynamics_unitary_purity),
    ("dynamics: scaling law", dynamics_scaling),
    ("estimator: inversion roundtrip", inversion_roundtrip),
    ("estimator: MLE projection", mle_projection),
    ("estimator: MLE nearest for qubits", mle_nearest_qubit),
    ("estimator: BME deterministic", bme_deterministic),
    ("estimator: BME improves with shots", bme_shot_scaling),
    ("estimator: fidelity symmetric", fidelity_symmetry),
];
