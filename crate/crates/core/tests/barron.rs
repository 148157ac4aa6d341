use proptest::prelude::*;
use rescover_core::barron::{approximate_relu, approximate_sigmoid, BarronTarget, FourierAtom};
use rescover_core::domain::{DomainSpec, EvalGrid, NormDegree};
use rescover_core::dynsys::{approximate_system, TargetSystem};
use rescover_core::fnn::{delta_sigmoid, logistic, Flavor, FnnFamily, SigmoidSpec};
use rescover_core::Error;

fn dom11() -> DomainSpec {
    DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 1, 1).unwrap()
}

/// `S Σ|ω_x| + I Σ|ω_u|` for `p = ∞`.
fn omega_b_inf(omega: &[f64], d: usize, s: f64, i: f64) -> f64 {
    s * omega[..d].iter().map(|w| w.abs()).sum::<f64>() + i * omega[d..].iter().map(|w| w.abs()).sum::<f64>()
}

fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h)).sum();
    h * (0.5 * f(a) + inner + 0.5 * f(b))
}

#[test]
fn constant_target_has_no_fourier_mass() {
    let g = BarronTarget::fourier_mixture(vec![], 0.3, dom11()).unwrap();
    assert_eq!(g.barron_m(), 0.3);
    assert_eq!(g.v(), 0.0);
    assert_eq!(g.eval(&[0.4, -0.2]).unwrap(), 0.3);
}

#[test]
fn single_atom_norm_and_constant() {
    let g = BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![1.0, 0.0], 1.0, 0.0)], 0.2, dom11()).unwrap();
    assert_eq!(g.signed_atoms()[0].norm_b, 1.0);
    assert_eq!(g.barron_m(), 1.0);
    let g = BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![1.0, 0.0], 1.0, 0.0)], -3.0, dom11()).unwrap();
    assert_eq!(g.barron_m(), 3.0);
}

#[test]
fn invalid_atoms_rejected() {
    assert!(BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![0.0, 0.0], 1.0, 0.0)], 0.0, dom11()).is_err());
    assert!(BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![1.0, 0.0], -1.0, 0.0)], 0.0, dom11()).is_err());
    assert!(BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![f64::NAN, 0.0], 1.0, 0.0)], 0.0, dom11()).is_err());
    assert!(BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![1.0], 1.0, 0.0)], 0.0, dom11()).is_err());
}

#[test]
fn sign_masses_match_trapezoid_oracle() {
    let dom = DomainSpec::new(NormDegree::Inf, 1.5, 0.8, 1, 1).unwrap();
    let atoms = vec![FourierAtom::new(vec![1.3, -0.4], 0.5, 0.9), FourierAtom::new(vec![-0.6, 2.2], 0.5, -0.9)];
    let g = BarronTarget::fourier_mixture(atoms.clone(), 0.0, dom).unwrap();
    let (mut plus, mut minus) = (0.0, 0.0);
    for a in &atoms {
        let y = omega_b_inf(&a.omega, 1, 1.5, 0.8);
        for theta in [a.phi, -a.phi] {
            let w = 0.5 * a.alpha * y;
            plus += w * trapezoid(|t| (y * t + theta).sin().max(0.0), 0.0, 1.0, 100_000);
            minus += w * trapezoid(|t| (-(y * t + theta).sin()).max(0.0), 0.0, 1.0, 100_000);
        }
    }
    let v = plus + minus;
    assert!((g.v() - v).abs() < 1e-8);
    assert!((g.v_plus() - plus / v).abs() < 1e-8);
    assert!((g.v_minus() - minus / v).abs() < 1e-8);
    assert!((g.v_plus() + g.v_minus() - 1.0).abs() < 1e-15);
    assert!(g.v() <= g.barron_m());
}

#[test]
fn evaluation_identities() {
    let a = FourierAtom::new(vec![1.0, 0.0], 1.0, 0.0);
    let g =
        BarronTarget::fourier_mixture(vec![a.clone()], 0.25, DomainSpec::new(NormDegree::Inf, 4.0, 1.0, 1, 1).unwrap())
            .unwrap();
    assert_eq!(g.eval(&[0.0, 0.0]).unwrap(), 0.25);
    assert!((g.eval(&[std::f64::consts::PI, 0.3]).unwrap() - (0.25 - 2.0)).abs() < 1e-15);
    assert!(matches!(g.eval(&[4.5, 0.0]), Err(Error::OutsideDomain { .. })));

    let b = FourierAtom::new(vec![-0.5, 2.0], 0.4, 1.2);
    let dom = *g.domain();
    let g1 = BarronTarget::fourier_mixture(vec![a.clone()], 0.25, dom).unwrap();
    let g2 = BarronTarget::fourier_mixture(vec![b.clone()], 0.25, dom).unwrap();
    let g12 = BarronTarget::fourier_mixture(vec![a, b], 0.25, dom).unwrap();
    for x in [[0.3, -0.2], [-1.0, 0.9], [3.9, 1.0]] {
        let lhs = g12.eval(&x).unwrap();
        let rhs = g1.eval(&x).unwrap() + g2.eval(&x).unwrap() - 0.25;
        assert!((lhs - rhs).abs() < 1e-14);
    }
}

#[test]
fn integral_representation_on_boundary() {
    let g = BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![2.5, -1.0], 0.7, 0.4)], 0.0, dom11()).unwrap();
    assert_eq!(g.integral_rep_residual(&[0.0, 0.0]).unwrap(), 0.0);
    for x in [[1.0, -1.0], [1.0, 1.0], [-1.0, 0.3], [0.2, 1.0]] {
        assert!(g.integral_rep_residual(&x).unwrap() <= 1e-6, "{x:?}");
    }
    let c = BarronTarget::fourier_mixture(vec![], 1.0, dom11()).unwrap();
    assert!(matches!(c.integral_rep_residual(&[0.0, 0.0]), Err(Error::Precondition(_))));
}

#[test]
fn sampling_edge_cases() {
    let g = BarronTarget::fourier_mixture(vec![FourierAtom::new(vec![1.0, 0.0], 1.0, 0.0)], 0.0, dom11()).unwrap();
    assert!(g.sample_mu(1, 0, 3).unwrap().is_empty());
    // θ = 0 and ‖ω‖_B = 1 ≤ π: the sine is positive on the whole range
    let s = g.sample_mu(1, 500, 3).unwrap();
    assert!(s.iter().all(|m| m.sign == 1));
    for m in &s {
        let a = &g.signed_atoms()[m.atom_index];
        assert!((a.norm_b * m.t + a.theta).sin() >= 0.0);
    }
    assert!(matches!(g.sample_mu(-1, 5, 3), Err(Error::EmptyComponent { sign: -1 })));
    assert_eq!(g.sample_mu(1, 50, 11).unwrap(), g.sample_mu(1, 50, 11).unwrap());
    assert_ne!(g.sample_mu(1, 50, 11).unwrap(), g.sample_mu(1, 50, 12).unwrap());
}

/// Upper 1% point of χ² with `k` degrees of freedom (Wilson–Hilferty).
fn chi2_99(k: f64) -> f64 {
    let z = 2.326_347_874;
    let c = 2.0 / (9.0 * k);
    k * (1.0 - c + z * c.sqrt()).powi(3)
}

#[test]
fn sample_histogram_matches_density() {
    let g = BarronTarget::fourier_mixture(
        vec![FourierAtom::new(vec![3.0, 1.5], 0.8, 0.7), FourierAtom::new(vec![-1.0, 0.5], 0.5, 2.5)],
        0.0,
        dom11(),
    )
    .unwrap();
    let bins = 20;
    for sign in [1i8, -1] {
        let n = 100_000;
        let samples = g.sample_mu(sign, n, 99).unwrap();
        let atoms = g.signed_atoms().len();
        let mut counts = vec![0usize; atoms * bins];
        for s in &samples {
            let b = ((s.t * bins as f64) as usize).min(bins - 1);
            counts[s.atom_index * bins + b] += 1;
        }
        let mut stat = 0.0;
        let mut dof = 0usize;
        for j in 0..atoms {
            for b in 0..bins {
                let lo = b as f64 / bins as f64;
                let hi = (b + 1) as f64 / bins as f64;
                let p = trapezoid(|t| g.mu_density(sign, j, t), lo, hi, 2000);
                let expected = p * n as f64;
                if expected < 5.0 {
                    assert!(counts[j * bins + b] < 40, "unexpected mass in an empty bin");
                    continue;
                }
                stat += (counts[j * bins + b] as f64 - expected).powi(2) / expected;
                dof += 1;
            }
        }
        assert!(stat < chi2_99((dof - 1) as f64), "sign {sign}: χ² = {stat} with {dof} bins");
    }
}

#[test]
fn constant_target_networks() {
    let g = BarronTarget::fourier_mixture(vec![], -0.4, dom11()).unwrap();
    let f = approximate_relu(&g, 3, 1).unwrap();
    assert!(f.a.iter().all(|a| *a == 0.0));
    assert_eq!(f.e, -0.4);
    assert_eq!(f.hidden_count(), 12);
    let f = approximate_sigmoid(&g, 3, 2.0, &SigmoidSpec::logistic(), 1).unwrap();
    assert!(f.a.iter().all(|a| *a == 0.0));
    assert_eq!(f.e, -0.4);
    assert_eq!(f.eval(&[0.5], &[0.5]).unwrap(), -0.4);
}

fn logistic_delta_oracle(lambda: f64) -> f64 {
    // Simpson on each side of the jump
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let n = 200_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    simpson(&|x| logistic(lambda * x), -1.0, 0.0) + simpson(&|x| 1.0 - logistic(lambda * x), 0.0, 1.0)
}

#[test]
fn delta_values() {
    let s = SigmoidSpec::logistic();
    let d1 = delta_sigmoid(&s, 1.0).unwrap();
    assert!((d1 - logistic_delta_oracle(1.0)).abs() < 1e-10);
    assert!((d1 - 0.759_770_986_083_444_8).abs() < 1e-12);
    let d10 = delta_sigmoid(&s, 10.0).unwrap();
    assert!((d10 - 0.138_620_356_332_145_7).abs() < 1e-12);
    assert!((d10 - logistic_delta_oracle(10.0)).abs() < 1e-10);
    let seq: Vec<f64> = [1.0, 10.0, 100.0, 1000.0].iter().map(|l| delta_sigmoid(&s, *l).unwrap()).collect();
    assert!(seq.windows(2).all(|w| w[1] < w[0]));
    assert!(seq[3] < 2e-3);
    assert!(delta_sigmoid(&s, 0.0).is_err());
}

#[test]
fn system_bundling() {
    let comp = BarronTarget::fourier_mixture(
        vec![FourierAtom::new(vec![0.5, -0.3, 0.8], 0.3, 0.2)],
        0.0,
        DomainSpec::new(NormDegree::Two, 1.0, 1.0, 2, 1).unwrap(),
    )
    .unwrap();
    let sys = TargetSystem::from_components(vec![comp.clone(), comp.clone()], 0.5, 0.5).unwrap();
    let seeds = [17u64, 17];
    let f = rescover_core::dynsys::approximate_system_with_seeds(&sys, 8, &Flavor::Relu, &seeds).unwrap();
    assert_eq!(f.components()[0], f.components()[1]);

    // vector error against the coordinatewise maximum
    let f = approximate_system(&sys, 8, &Flavor::Relu, 5).unwrap();
    let grid = EvalGrid::build(sys.domain(), 2000, 200, 1);
    let p = NormDegree::Two;
    let vec_err = grid.sup_vector(p, |x, u| {
        let joint: Vec<f64> = x.iter().chain(u).copied().collect();
        let t = comp.eval_unchecked(&joint);
        f.components().iter().map(|c| t - c.eval_unchecked(x, u)).collect()
    });
    let scalar_max = f
        .components()
        .iter()
        .map(|c| grid.sup_scalar(|x, u| comp.eval_split(x, u) - c.eval_unchecked(x, u)))
        .fold(0.0, f64::max);
    assert!(vec_err <= p.root(2) * scalar_max * (1.0 + 1e-12));
}

#[test]
fn error_decreases_from_4_to_256() {
    let g = BarronTarget::fourier_mixture(
        vec![FourierAtom::new(vec![1.7, -0.9], 0.5, 0.1), FourierAtom::new(vec![0.4, 1.1], 0.3, 2.9)],
        0.2,
        dom11(),
    )
    .unwrap();
    let grid = EvalGrid::build(&dom11(), 2500, 200, 4);
    let mean = |n: usize| {
        (0..10)
            .map(|s| {
                let f = approximate_relu(&g, n, s).unwrap();
                grid.sup_scalar(|x, u| g.eval_split(x, u) - f.eval_unchecked(x, u))
            })
            .sum::<f64>()
            / 10.0
    };
    assert!(mean(256) < mean(4));
}

fn atom_strategy(q: usize) -> impl Strategy<Value = FourierAtom> {
    (prop::collection::vec(-3.0f64..3.0, q), 0.05f64..1.0, 0.0f64..std::f64::consts::TAU)
        .prop_filter("non-zero frequency", |(w, _, _)| w.iter().any(|x| x.abs() > 1e-3))
        .prop_map(|(w, a, p)| FourierAtom::new(w, a, p))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constructed_networks_respect_bounds(
        atoms in prop::collection::vec(atom_strategy(3), 1..5),
        g0 in -1.0f64..1.0,
        n in 1usize..20,
        seed in any::<u64>(),
        p_idx in 0usize..3,
    ) {
        let p = [NormDegree::One, NormDegree::Two, NormDegree::Inf][p_idx];
        let dom = DomainSpec::new(p, 1.3, 0.7, 2, 1).unwrap();
        let g = BarronTarget::fourier_mixture(atoms, g0, dom).unwrap();
        let m = g.barron_m();
        let f = approximate_relu(&g, n, seed).unwrap();
        let fam = FnnFamily::relu(dom, m, n).unwrap();
        prop_assert!(fam.contains(&f), "{:?}", fam.check_membership(&f));

        let lambda = (n as f64).sqrt();
        let s = approximate_sigmoid(&g, n, lambda, &SigmoidSpec::logistic(), seed).unwrap();
        let slack = 1.0 + 1e-12;
        prop_assert_eq!(s.hidden_count(), 2 * n);
        for k in 0..s.hidden_count() {
            prop_assert!(s.a[k].abs() <= 2.0 * m / n as f64 * slack);
            let bn = dom.state_weight_norm(s.b_row(k)) + dom.input_weight_norm(s.c_row(k));
            prop_assert!(bn <= lambda * slack);
            prop_assert!(dom.input_weight_norm(s.c_row(k)) <= lambda * slack);
        }
        prop_assert!(s.e.abs() <= m * slack);
    }

    #[test]
    fn integral_representation_residual(
        atoms in prop::collection::vec(atom_strategy(2), 1..9),
        x in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let g = BarronTarget::fourier_mixture(atoms, 0.0, dom11()).unwrap();
        prop_assert!(g.integral_rep_residual(&x).unwrap() <= 1e-6);
    }
}
