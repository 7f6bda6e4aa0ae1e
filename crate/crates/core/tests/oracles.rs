//! Independent reference computations and property checks.

mod common;

use common::{naive_sinkhorn, random_dataset, random_mask, random_points, rel_err};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scis::csvio::{read_csv_from, write_dataset_to, CsvSchema};
use scis::matrix::{denormalize, fuse_imputation, normalize, DenseMatrix, MaskMatrix, MaskedDataset};
use scis::neural::{
    backward, forward, init_params, per_sample_jacobian, predict, Activation, MlpSpec, OutputActivation, ParamVector,
};
use scis::sinkhorn::{
    barycentric_grad, masked_cost, ms_divergence, ms_loss, regularized_ot, sinkhorn_solve, CostKind, MaskedCostMatrix,
    SinkhornSettings,
};
use scis::sse::{
    eta, gauss_newton_hessian, hoeffding_threshold, min_satisfying, model_distance, sample_params, HessianApprox,
    HoeffdingVariant, PreparedValidation, SseConfig,
};

fn tight(lambda: f64) -> SinkhornSettings {
    SinkhornSettings {
        lambda,
        max_iters: 100_000,
        tolerance: 1e-13,
        log_domain: true,
    }
}

#[test]
fn sinkhorn_matches_scaling_oracle_8x8() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let x = random_points(&mut rng, 8, 3);
        let y = random_points(&mut rng, 8, 3);
        let mx = random_mask(&mut rng, 8, 3, 0.7);
        let my = random_mask(&mut rng, 8, 3, 0.7);
        let cost = masked_cost(&x, &mx, &y, &my, CostKind::SquaredL2).unwrap();
        let res = sinkhorn_solve(&cost, &SinkhornSettings::with_lambda(1.0)).unwrap();
        for s in res.row_sums().iter().chain(res.col_sums().iter()) {
            assert!((s - 0.125).abs() <= 1e-6, "{s}");
        }
        let (_, value) = naive_sinkhorn(&cost.costs, 8, 8, 1.0, 5000);
        assert!((res.value - value).abs() <= 1e-8, "{} vs {}", res.value, value);
    }
}

#[test]
fn plain_and_log_domain_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = random_points(&mut rng, 6, 2);
    let y = random_points(&mut rng, 5, 2);
    let cost = MaskedCostMatrix::between(&x, &y, CostKind::SquaredL2).unwrap();
    let log = sinkhorn_solve(&cost, &tight(0.5)).unwrap();
    let plain = sinkhorn_solve(&cost, &SinkhornSettings { log_domain: false, ..tight(0.5) }).unwrap();
    assert!((log.value - plain.value).abs() < 1e-10);
    for (a, b) in log.plan.iter().zip(&plain.plan) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn two_point_self_transport_matches_oracle() {
    let x = DenseMatrix::from_rows(&[vec![0.1, 0.4], vec![0.7, 0.2]]).unwrap();
    let m = MaskMatrix::full(2, 2);
    let settings = tight(1.0);
    let v = regularized_ot(&x, &m, &x, &m, &settings).unwrap();
    let cost = masked_cost(&x, &m, &x, &m, CostKind::SquaredL2).unwrap();
    let (_, oracle) = naive_sinkhorn(&cost.costs, 2, 2, 1.0, 10_000);
    assert!(v <= 0.0);
    assert!((v - oracle).abs() < 1e-10, "{v} vs {oracle}");
}

#[test]
fn ot_gradient_matches_finite_differences() {
    // the derivative of the OT value in x̄ is twice the barycentric displacement
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_points(&mut rng, 4, 3);
    let y = random_points(&mut rng, 4, 3);
    let mx = random_mask(&mut rng, 4, 3, 0.7);
    let my = random_mask(&mut rng, 4, 3, 0.7);
    let settings = tight(0.3);
    let cost = masked_cost(&x, &mx, &y, &my, CostKind::SquaredL2).unwrap();
    let plan = sinkhorn_solve(&cost, &settings).unwrap();
    let g = barycentric_grad(&plan, &x, &mx, &y, &my).unwrap();
    let h = 1e-5;
    for r in 0..4 {
        for c in 0..3 {
            let mut up = x.clone();
            up.set(r, c, x.get(r, c) + h);
            let mut dn = x.clone();
            dn.set(r, c, x.get(r, c) - h);
            let fd = (regularized_ot(&up, &mx, &y, &my, &settings).unwrap()
                - regularized_ot(&dn, &mx, &y, &my, &settings).unwrap())
                / (2.0 * h);
            assert!((fd - 2.0 * g.get(r, c)).abs() < 1e-5, "({r},{c}) fd {fd} grad {}", 2.0 * g.get(r, c));
            if !mx.is_observed(r, c) {
                assert_eq!(g.get(r, c), 0.0);
            }
        }
    }
}

#[test]
fn ms_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = random_points(&mut rng, 6, 3);
    let mask = random_mask(&mut rng, 6, 3, 0.7);
    let recon = random_points(&mut rng, 6, 3);
    let settings = tight(0.5);
    let loss = ms_loss(&data, &mask, &recon, &settings).unwrap();
    let h = 1e-6;
    for r in 0..6 {
        for c in 0..3 {
            let mut up = recon.clone();
            up.set(r, c, recon.get(r, c) + h);
            let mut dn = recon.clone();
            dn.set(r, c, recon.get(r, c) - h);
            let fd = (ms_loss(&data, &mask, &up, &settings).unwrap().value
                - ms_loss(&data, &mask, &dn, &settings).unwrap().value)
                / (2.0 * h);
            let g = loss.grad.get(r, c);
            assert!(rel_err(fd, g) < 1e-4 || (fd - g).abs() < 1e-9, "({r},{c}) fd {fd} grad {g}");
        }
    }
}

fn small_spec(act: Activation, out: OutputActivation, seed: u64) -> MlpSpec {
    MlpSpec::new(vec![3, 4, 2], act, out, seed)
}

fn inner(params: &ParamVector, spec: &MlpSpec, x: &DenseMatrix, g: &DenseMatrix) -> f64 {
    let y = predict(params, spec, x).unwrap();
    y.as_slice().iter().zip(g.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn backward_matches_finite_differences() {
    for (act, out) in [
        (Activation::Tanh, OutputActivation::Identity),
        (Activation::Relu, OutputActivation::Sigmoid),
    ] {
        let spec = small_spec(act, out, 5);
        let params = init_params(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_points(&mut rng, 5, 3);
        let g = random_points(&mut rng, 5, 2);
        let (_, trace) = forward(&params, &spec, &x).unwrap();
        let grad = backward(&params, &spec, &trace, &g).unwrap();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut up = params.clone();
            up.values[i] += h;
            let mut dn = params.clone();
            dn.values[i] -= h;
            let fd = (inner(&up, &spec, &x, &g) - inner(&dn, &spec, &x, &g)) / (2.0 * h);
            assert!(
                rel_err(fd, grad.values[i]) < 1e-5 || (fd - grad.values[i]).abs() < 1e-10,
                "{act:?} param {i}: fd {fd} vs {}",
                grad.values[i]
            );
        }
    }
}

#[test]
fn jacobian_matches_finite_differences() {
    let spec = small_spec(Activation::Tanh, OutputActivation::Sigmoid, 7);
    let params = init_params(&spec).unwrap();
    let row = [0.3, -0.2, 0.9];
    let jac = per_sample_jacobian(&params, &spec, &row).unwrap();
    let x = DenseMatrix::from_vec(1, 3, row.to_vec()).unwrap();
    let h = 1e-6;
    for i in 0..params.len() {
        let mut up = params.clone();
        up.values[i] += h;
        let mut dn = params.clone();
        dn.values[i] -= h;
        let yu = predict(&up, &spec, &x).unwrap();
        let yd = predict(&dn, &spec, &x).unwrap();
        for k in 0..2 {
            let fd = (yu.get(0, k) - yd.get(0, k)) / (2.0 * h);
            assert!((fd - jac.get(k, i)).abs() < 1e-5, "param {i} out {k}");
        }
    }
}

#[test]
fn hessian_hand_computed_scalar_net() {
    let spec = MlpSpec::new(vec![1, 1], Activation::Relu, OutputActivation::Identity, 0);
    let params = ParamVector::from_values(&spec, vec![0.7, -0.1]).unwrap();
    let inputs = DenseMatrix::from_rows(&[vec![2.0]]).unwrap();
    let mask = MaskMatrix::full(1, 1);
    let cost = MaskedCostMatrix::between(&inputs, &inputs, CostKind::SquaredL2).unwrap();
    let plan = sinkhorn_solve(&cost, &SinkhornSettings::default()).unwrap();
    let h = gauss_newton_hessian(&spec, &params, &inputs, &mask, &plan).unwrap();
    assert_eq!(h, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]));

    let none = MaskMatrix::empty(1, 1);
    let h0 = gauss_newton_hessian(&spec, &params, &inputs, &none, &plan).unwrap();
    assert!(h0.iter().all(|&v| v == 0.0));
    assert!(HessianApprox::from_matrix(h0, None, 1).is_ok());
}

#[test]
fn hessian_matches_finite_difference_jacobians() {
    // uniform plan rows: H = (1/n) Σ_i Σ_{k observed} ∇out_ik ∇out_ikᵀ
    let spec = small_spec(Activation::Tanh, OutputActivation::Sigmoid, 8);
    let params = init_params(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 5;
    let inputs = random_points(&mut rng, n, 3);
    let mask = random_mask(&mut rng, n, 2, 0.6);
    let out = predict(&params, &spec, &inputs).unwrap();
    let cost = masked_cost(&out, &mask, &out, &mask, CostKind::SquaredL2).unwrap();
    let plan = sinkhorn_solve(&cost, &SinkhornSettings::with_lambda(1.0)).unwrap();
    let h = gauss_newton_hessian(&spec, &params, &inputs, &mask, &plan).unwrap();

    let p = params.len();
    let step = 1e-6;
    let mut grads = vec![vec![vec![0.0; p]; 2]; n];
    for j in 0..p {
        let mut up = params.clone();
        up.values[j] += step;
        let mut dn = params.clone();
        dn.values[j] -= step;
        let yu = predict(&up, &spec, &inputs).unwrap();
        let yd = predict(&dn, &spec, &inputs).unwrap();
        for i in 0..n {
            for k in 0..2 {
                grads[i][k][j] = (yu.get(i, k) - yd.get(i, k)) / (2.0 * step);
            }
        }
    }
    let mut expect = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        for k in 0..2 {
            if mask.is_observed(i, k) {
                for a in 0..p {
                    for b in 0..p {
                        expect[(a, b)] += grads[i][k][a] * grads[i][k][b] / n as f64;
                    }
                }
            }
        }
    }
    assert!((&h - &expect).abs().max() < 1e-7);
}

#[test]
fn sample_covariance_matches_inverse_hessian() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let a = DMatrix::<f64>::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
    let h = &a * a.transpose() + DMatrix::identity(4, 4);
    let target = h.clone().try_inverse().unwrap() * 0.5;
    let approx = HessianApprox::from_matrix(h, Some(0.0), 1).unwrap();
    let spec = MlpSpec::new(vec![1, 2], Activation::Relu, OutputActivation::Identity, 0);
    let theta0 = ParamVector::from_values(&spec, vec![1.0, -1.0, 0.5, 2.0]).unwrap();
    let draws = sample_params(&theta0, &approx, 0.5, 11, 20_000).unwrap();
    let mut cov = DMatrix::<f64>::zeros(4, 4);
    for d in &draws {
        for r in 0..4 {
            for c in 0..4 {
                cov[(r, c)] += (d.values[r] - theta0.values[r]) * (d.values[c] - theta0.values[c]);
            }
        }
    }
    cov /= draws.len() as f64;
    let rel = (&cov - &target).norm() / target.norm();
    assert!(rel < 0.1, "relative Frobenius error {rel}");
}

#[test]
fn eta_values() {
    assert_eq!(eta(130.0, 8, 500, 500).unwrap(), 0.0);
    let v = eta(130.0, 9, 500, 1000).unwrap();
    assert!((v / 1.0472e-3 - 1.0).abs() < 1e-4, "{v}");
    let mut prev = -1.0;
    for n in (500..=20_000).step_by(500) {
        let e = eta(130.0, 8, 500, n).unwrap();
        assert!(e > prev);
        prev = e;
    }
    assert!(eta(130.0, 8, 500, 499).is_err());
}

#[test]
fn hoeffding_defaults() {
    let def = SseConfig::default();
    assert_eq!((def.alpha, def.beta, def.k, def.epsilon, def.lambda), (0.05, 0.01, 20, 0.001, 130.0));
    assert_eq!(def.variant, HoeffdingVariant::PaperAppendix);
    let t = hoeffding_threshold(0.05, 0.01, 20, HoeffdingVariant::PaperAppendix).unwrap();
    assert!((t - 0.975447).abs() < 1e-6);
    let t = hoeffding_threshold(0.05, 0.01, 2000, HoeffdingVariant::Strict).unwrap();
    assert!((t - 0.993526).abs() < 1e-6);
    assert!(hoeffding_threshold(0.05, 0.05, 1_000_000, HoeffdingVariant::Strict).unwrap() > 1.0);
}

#[test]
fn planted_threshold_is_found() {
    let (n, _) = min_satisfying(500, 1000, |n| Ok::<_, ()>((n >= 700, ()))).unwrap();
    assert_eq!(n, 700);
}

#[test]
fn constant_models_are_a_tenth_apart() {
    let spec = MlpSpec::new(vec![2, 1], Activation::Relu, OutputActivation::Identity, 0);
    let a = ParamVector::from_values(&spec, vec![0.0, 0.0, 0.3]).unwrap();
    let b = ParamVector::from_values(&spec, vec![0.0, 0.0, 0.4]).unwrap();
    let ds = MaskedDataset::fully_observed(DenseMatrix::from_rows(&[vec![0.2], vec![0.9]]).unwrap(), "v");
    let v = PreparedValidation::new(&ds, 0).unwrap();
    assert!((model_distance(&a, &b, &spec, &v).unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(model_distance(&a, &a, &spec, &v).unwrap(), 0.0);
}

fn arb_dataset(max_rows: usize, max_cols: usize) -> impl Strategy<Value = MaskedDataset> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        (
            prop::collection::vec(-1e6f64..1e6, r * c),
            prop::collection::vec(any::<bool>(), r * c),
        )
            .prop_map(move |(v, m)| {
                MaskedDataset::new(
                    DenseMatrix::from_vec(r, c, v).unwrap(),
                    MaskMatrix::from_bits(r, c, m).unwrap(),
                    "p",
                )
                .unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn csv_round_trip(ds in arb_dataset(12, 5)) {
        let mut buf = Vec::new();
        write_dataset_to(&mut buf, &ds, None, &CsvSchema::default()).unwrap();
        let schema = CsvSchema { has_header: Some(false), ..CsvSchema::default() };
        let back = read_csv_from(buf.as_slice(), &schema, "p").unwrap();
        prop_assert_eq!(back.dataset.data, ds.data);
        prop_assert_eq!(back.dataset.mask, ds.mask);
    }

    #[test]
    fn normalize_round_trip(ds in arb_dataset(12, 5)) {
        prop_assume!((0..ds.cols()).all(|c| (0..ds.rows()).any(|r| ds.mask.is_observed(r, c))));
        let norm = normalize(&ds).unwrap();
        for (v, &m) in norm.data.as_slice().iter().zip(norm.mask.as_slice()) {
            prop_assert!(!m || (0.0..=1.0).contains(v));
        }
        let back = denormalize(&norm).unwrap();
        for ((a, b), &m) in back.data.as_slice().iter().zip(ds.data.as_slice()).zip(ds.mask.as_slice()) {
            prop_assert!(!m || (a - b).abs() <= 1e-12 * b.abs().max(1.0) * 4.0);
        }
    }

    #[test]
    fn fusion_keeps_observed_cells(ds in arb_dataset(10, 4), fill in -5.0f64..5.0) {
        let recon = DenseMatrix::filled(ds.rows(), ds.cols(), fill);
        let out = fuse_imputation(&ds, &recon).unwrap();
        for r in 0..ds.rows() {
            for c in 0..ds.cols() {
                let expect = if ds.mask.is_observed(r, c) { ds.data.get(r, c) } else { fill };
                prop_assert_eq!(out.get(r, c).to_bits(), expect.to_bits());
            }
        }
    }

    #[test]
    fn divergence_symmetric_and_nonnegative(seed in any::<u64>(), n in 2usize..8, d in 1usize..4) {
        let a = random_dataset(seed, n, d, 0.7);
        let b = random_dataset(seed ^ 0x9e37, n, d, 0.7);
        let s = tight(0.5);
        let ab = ms_divergence(&a.data, &a.mask, &b.data, &b.mask, &s).unwrap();
        let ba = ms_divergence(&b.data, &b.mask, &a.data, &a.mask, &s).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab > -1e-6);
        prop_assert_eq!(ms_divergence(&a.data, &a.mask, &a.data, &a.mask, &s).unwrap(), 0.0);
    }

    #[test]
    fn model_distance_triangle(seed in any::<u64>()) {
        let spec = MlpSpec::new(vec![4, 3, 2], Activation::Tanh, OutputActivation::Sigmoid, seed);
        let base = init_params(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perturbed = || {
            let mut p = base.clone();
            p.values.iter_mut().for_each(|v| *v += rng.random_range(-0.5..0.5));
            p
        };
        let (a, b, c) = (perturbed(), perturbed(), perturbed());
        let v = PreparedValidation::new(&random_dataset(seed, 20, 2, 0.8), seed).unwrap();
        let ab = model_distance(&a, &b, &spec, &v).unwrap();
        let bc = model_distance(&b, &c, &spec, &v).unwrap();
        let ac = model_distance(&a, &c, &spec, &v).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
        prop_assert!((ab - model_distance(&b, &a, &spec, &v).unwrap()).abs() < 1e-15);
    }
}
