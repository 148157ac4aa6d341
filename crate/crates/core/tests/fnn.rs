use rand::Rng as _;
use rescover_core::domain::{DomainSpec, EvalGrid, NormDegree};
use rescover_core::dynsys::estimate_lipschitz;
use rescover_core::fnn::{
    family_membership, internal_error_bound, Activation, Flavor, FnnFamily, ScalarFnn, SigmoidSpec, VectorFnn,
};
use rescover_core::rng::rng_from_seed;

fn direct_sum(f: &ScalarFnn, s: &[f64], u: &[f64], act: impl Fn(f64) -> f64) -> f64 {
    let (d, e) = (s.len(), u.len());
    let mut out = f.e;
    for n in 0..f.a.len() {
        let mut z = f.d[n];
        for j in 0..d {
            z += f.b[n * d + j] * s[j];
        }
        for j in 0..e {
            z += f.c[n * e + j] * u[j];
        }
        out += f.a[n] * act(z);
    }
    out
}

#[test]
fn hand_examples() {
    let f = ScalarFnn::new(vec![1.0], vec![1.0], vec![0.0], vec![0.0], 0.0, 1, 1, Activation::Relu).unwrap();
    assert_eq!(f.eval_unchecked(&[-1.0], &[0.3]), 0.0);
    assert_eq!(f.eval_unchecked(&[2.0], &[0.3]), 2.0);
    let z =
        ScalarFnn::new(vec![0.0; 3], vec![0.5; 3], vec![-0.2; 3], vec![0.1; 3], 0.7, 1, 1, Activation::Relu).unwrap();
    assert_eq!(z.eval_unchecked(&[0.4], &[-0.9]), 0.7);
    assert!(f.eval(&[1.0, 2.0], &[0.0]).is_err());
    assert!(ScalarFnn::new(vec![1.0], vec![1.0, 2.0], vec![0.0], vec![0.0], 0.0, 1, 1, Activation::Relu).is_err());
    assert!(ScalarFnn::new(vec![f64::INFINITY], vec![1.0], vec![0.0], vec![0.0], 0.0, 1, 1, Activation::Relu).is_err());
}

#[test]
fn matches_direct_summation() {
    let mut rng = rng_from_seed(8);
    for act in [Activation::Relu, Activation::Sigmoid(SigmoidSpec::logistic())] {
        for _ in 0..50 {
            let k = rng.random_range(1..7);
            let (d, e) = (2, 3);
            let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>();
            let f = ScalarFnn::new(draw(k), draw(k * d), draw(k * e), draw(k), draw(1)[0], d, e, act.clone()).unwrap();
            let s = draw(d);
            let u = draw(e);
            let oracle = match act {
                Activation::Relu => direct_sum(&f, &s, &u, |z| z.max(0.0)),
                _ => direct_sum(&f, &s, &u, |z| 1.0 / (1.0 + (-z).exp())),
            };
            assert!((f.eval_unchecked(&s, &u) - oracle).abs() < 1e-12);
            let back = ScalarFnn::from_flat(&f.to_flat(), k, d, e, act.clone()).unwrap();
            assert_eq!(back, f);
        }
    }
}

#[test]
fn membership_boundaries() {
    let dom = DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 1, 1).unwrap();
    let m: f64 = 2.0;
    let n = 2;
    let zero = ScalarFnn::zeros(4 * n, 1, 1, Activation::Relu);
    assert!(family_membership(&zero, &dom, m, n));
    let mut f = zero.clone();
    f.a[3] = 2.0 * m.sqrt();
    assert!(family_membership(&f, &dom, m, n));
    f.a[3] = 2.0 * m.sqrt() + 0.001;
    assert!(!family_membership(&f, &dom, m, n));
    let mut f = zero.clone();
    f.e = m + 0.001;
    assert!(!family_membership(&f, &dom, m, n));
    assert!(!family_membership(&ScalarFnn::zeros(4 * n + 1, 1, 1, Activation::Relu), &dom, m, n));
    // b measured as S‖b‖_q
    let wide = DomainSpec::new(NormDegree::Inf, 2.0, 1.0, 1, 1).unwrap();
    let mut f = zero;
    f.b[0] = 0.8 * m.sqrt();
    assert!(family_membership(&f, &dom, m, n));
    assert!(!family_membership(&f, &wide, m, n));
}

#[test]
fn perturbation_examples() {
    let dom = DomainSpec::new(NormDegree::Two, 1.0, 1.0, 2, 1).unwrap();
    let fam = FnnFamily::relu(dom, 1.0, 1).unwrap();
    let mut rng = rng_from_seed(3);
    let f = fam.sample_member(&mut rng);
    assert_eq!(fam.param_perturbation_bound(&f, &f).unwrap().total(), 0.0);
    let mut g = f.clone();
    g.e = if f.e > 0.0 { f.e - 0.3 } else { f.e + 0.3 };
    assert!((fam.param_perturbation_bound(&f, &g).unwrap().total() - 0.3).abs() < 1e-15);
}

#[test]
fn perturbation_bound_dominates_gap() {
    for (p, flavor) in [
        (NormDegree::Inf, Flavor::Relu),
        (NormDegree::One, Flavor::Relu),
        (NormDegree::Two, Flavor::Sigmoid { lambda: 3.0, sigma: SigmoidSpec::logistic() }),
    ] {
        let dom = DomainSpec::new(p, 1.2, 0.6, 2, 1).unwrap();
        let fam = FnnFamily::new(dom, 1.5, 2, flavor).unwrap();
        let grid = EvalGrid::build(&dom, 1500, 300, 2);
        let mut rng = rng_from_seed(21);
        for _ in 0..100 {
            let f = fam.sample_member(&mut rng);
            let g = fam.sample_member(&mut rng);
            let gap = grid.sup_scalar(|x, u| f.eval_unchecked(x, u) - g.eval_unchecked(x, u));
            assert!(gap <= fam.param_perturbation_bound(&f, &g).unwrap().total());
        }
    }
}

#[test]
fn internal_bound_examples() {
    assert_eq!(internal_error_bound(0.3, 0.7, 1).unwrap(), 0.3);
    assert!((internal_error_bound(0.1, 0.5, 3).unwrap() - 0.175).abs() < 1e-15);
    assert!((internal_error_bound(0.2, 1.0, 5).unwrap() - 1.0).abs() < 1e-15);
    let direct: f64 = (0..40).map(|i| 0.05 * 0.93f64.powi(i)).sum();
    assert!((internal_error_bound(0.05, 0.93, 40).unwrap() - direct).abs() < 1e-13);
    assert!(internal_error_bound(-0.1, 0.5, 3).is_err());
    assert!(internal_error_bound(0.1, 0.5, 0).is_err());
}

#[test]
fn sigmoid_network_lipschitz_bound() {
    let dom = DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 1, 1).unwrap();
    let fam = FnnFamily::new(dom, 1.0, 3, Flavor::Sigmoid { lambda: 4.0, sigma: SigmoidSpec::logistic() }).unwrap();
    let mut rng = rng_from_seed(6);
    for _ in 0..10 {
        let f = VectorFnn::new(vec![fam.sample_member(&mut rng)]).unwrap();
        let est = estimate_lipschitz(&f, &dom, 500, 9).unwrap();
        assert!(est <= f.components()[0].state_lipschitz_bound(NormDegree::Inf) * (1.0 + 1e-9));
    }
}

#[test]
fn vector_shape_checks() {
    let a = ScalarFnn::zeros(2, 2, 1, Activation::Relu);
    let b = ScalarFnn::zeros(3, 2, 1, Activation::Relu);
    assert!(VectorFnn::new(vec![a.clone(), b]).is_err());
    assert!(VectorFnn::new(vec![a.clone()]).is_err());
    let v = VectorFnn::new(vec![a.clone(), a]).unwrap();
    assert_eq!(v.eval(&[0.1, 0.2], &[0.3]).unwrap(), vec![0.0, 0.0]);
}
