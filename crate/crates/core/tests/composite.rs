use nalgebra::{DMatrix, DVector};
use num_bigint::BigUint;
use rescover_core::barron::{BarronTarget, FourierAtom};
use rescover_core::composite::{
    cascade_error_bound, cascade_reduction_check, finite_memory_gap, forgetting_time, scale_report, select_readout,
    worst_error, CascadeReservoir, ConcatenatedReservoir, ScaleParams,
};
use rescover_core::covering::CoveringSpec;
use rescover_core::domain::{DomainSpec, EvalGrid, NormDegree};
use rescover_core::dynsys::{make_strictly_contracting, FnMap, InputSampler, StateMap, TargetSystem};
use rescover_core::fnn::{Flavor, FnnFamily, SigmoidSpec, VectorFnn};
use rescover_core::rng::{derived_rng, rng_from_seed};

fn dom2() -> DomainSpec {
    DomainSpec::new(NormDegree::Inf, 1.0, 1.0, 2, 1).unwrap()
}

fn member_spec() -> (FnnFamily, CoveringSpec) {
    let fam = FnnFamily::relu(dom2(), 1.0, 1).unwrap();
    let spec = CoveringSpec::new(fam.clone(), 0.5).unwrap();
    (fam, spec)
}

fn inputs(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = derived_rng(seed, &[1]);
    (0..n).map(|_| dom2().sample_input(&mut rng)).collect()
}

// reference block-diagonal system assembled entry by entry from the scalar weights
fn oracle_run(nets: &[&VectorFnn], x_init: &[f64], us: &[Vec<f64>]) -> Vec<DVector<f64>> {
    let dd = 2;
    let m = nets.len();
    let mut state = vec![0.0; m * dd];
    for blk in 0..m {
        state[blk * dd..(blk + 1) * dd].copy_from_slice(x_init);
    }
    let mut out = Vec::new();
    for u in us {
        let mut next = vec![0.0; m * dd];
        for (blk, f) in nets.iter().enumerate() {
            let s = &state[blk * dd..(blk + 1) * dd];
            for (j, c) in f.components().iter().enumerate() {
                let mut v = c.e;
                for n in 0..c.a.len() {
                    let z = c.b[2 * n] * s[0] + c.b[2 * n + 1] * s[1] + c.c[n] * u[0] + c.d[n];
                    v += c.a[n] * z.max(0.0);
                }
                next[blk * dd + j] = v;
            }
        }
        state = next;
        out.push(DVector::from_vec(state.clone()));
    }
    out
}

#[test]
fn dense_concatenation_matches_block_oracle() {
    let (fam, spec) = member_spec();
    let mut res = ConcatenatedReservoir::new(spec.clone(), vec![0.0, 0.0]).unwrap();
    let mut rng = rng_from_seed(11);
    let mut idx = Vec::new();
    for _ in 0..3 {
        let f = VectorFnn::new(vec![fam.sample_member(&mut rng), fam.sample_member(&mut rng)]).unwrap();
        let (i, _) = spec.snap_vector(&f).unwrap();
        res.activate(i.clone()).unwrap();
        res.activate(i.clone()).unwrap();
        idx.push(i);
    }
    assert_eq!(res.len(), 3);
    let us = inputs(12, 1);
    let dense = res.dense(&idx).unwrap();
    let got = dense.run(res.x_init(), &us);
    let nets: Vec<&VectorFnn> = idx.iter().map(|i| res.component(i).unwrap()).collect();
    let want = oracle_run(&nets, &[0.0, 0.0], &us);
    let per_block = res.concat_run(&idx, &us).unwrap();
    for t in 0..us.len() {
        assert!((&got[t] - &want[t]).amax() < 1e-12);
        for (blk, run) in per_block.iter().enumerate() {
            let read = dense.readout(blk) * &got[t];
            assert!((read[0] - run[t][0]).abs() < 1e-12 && (read[1] - run[t][1]).abs() < 1e-12);
        }
    }
    // reordering the blocks permutes the state
    let perm = [idx[2].clone(), idx[0].clone(), idx[1].clone()];
    let p = res.dense(&perm).unwrap().run(res.x_init(), &us);
    let last = us.len() - 1;
    assert_eq!(p[last].rows(0, 2), got[last].rows(4, 2));
    assert_eq!(p[last].rows(2, 2), got[last].rows(0, 2));
    assert!(res.concat_run(&[spec.zero_index()], &us).is_err());
}

fn contracting_targets(n: usize, seed: u64) -> Vec<TargetSystem> {
    (0..n).map(|i| make_strictly_contracting(dom2(), 0.5, 3, seed + i as u64).unwrap()).collect()
}

fn covering_for(targets: &[TargetSystem], n: usize, gamma: f64, flavor: Flavor) -> CoveringSpec {
    let m = targets.iter().map(|g| g.barron_m()).fold(0.0, f64::max);
    CoveringSpec::new(FnnFamily::new(dom2(), m, n, flavor).unwrap(), gamma).unwrap()
}

#[test]
fn readout_selection() {
    let targets = contracting_targets(2, 40);
    let spec = covering_for(&targets, 16, 0.05, Flavor::Relu);
    let grid = EvalGrid::build(&dom2(), 2000, 300, 1);
    let a = select_readout(&targets[0], &spec, &Flavor::Relu, 5).unwrap();
    let b = select_readout(&targets[0], &spec, &Flavor::Relu, 5).unwrap();
    assert_eq!(a.index, b.index);
    assert_eq!(spec.materialize(&a.index).unwrap(), a.snapped);
    let sig = Flavor::Sigmoid { lambda: 2.0, sigma: SigmoidSpec::logistic() };
    assert!(select_readout(&targets[0], &spec, &sig, 5).is_err());
    let p = dom2().p;
    let gap = |f: &dyn StateMap, h: &dyn StateMap| grid.sup_scalar(|x, u| p.dist(&f.apply(x, u), &h.apply(x, u)));
    let eps = gap(&targets[0], &a.approx);
    let snap = gap(&a.approx, &a.snapped);
    assert!(snap <= spec.gamma());
    assert!(gap(&targets[0], &a.snapped) <= eps + snap + 1e-15);
}

#[test]
fn worst_error_edge_cases() {
    let (_, spec) = member_spec();
    let grid = EvalGrid::build(&dom2(), 200, 20, 1);
    let sampler = InputSampler::new(8, 1);
    let empty = worst_error(&spec, &[], &sampler, &grid, 4, 0).unwrap();
    assert_eq!((empty.werr_hat, empty.bound), (0.0, 0.0));
    let comps =
        (0..2).map(|_| BarronTarget::fourier_mixture(Vec::<FourierAtom>::new(), 0.2, dom2()).unwrap()).collect();
    let constant = TargetSystem::from_components(comps, 0.2, 0.0).unwrap();
    let spec = CoveringSpec::new(FnnFamily::relu(dom2(), 1.0, 2).unwrap(), 0.1).unwrap();
    let w = worst_error(&spec, &[constant], &sampler, &grid, 4, 0).unwrap();
    assert!(w.pass(), "{w:?}");
    assert!(w.werr_hat <= w.bound);
}

#[test]
fn worst_error_on_contracting_batch() {
    let targets = contracting_targets(3, 60);
    let spec = covering_for(&targets, 16, 0.05, Flavor::Relu);
    let grid = EvalGrid::build(&dom2(), 3000, 500, 2);
    let w = worst_error(&spec, &targets, &InputSampler::new(32, 3), &grid, 5, 7).unwrap();
    assert!(w.pass(), "{w:?}");
    for t in &w.targets {
        assert!(t.cover_gap <= t.eps_hat + spec.gamma() + 1e-12);
    }
}

#[test]
fn cascade_forgets_initial_blocks() {
    let g = make_strictly_contracting(dom2(), 0.5, 3, 3).unwrap();
    let order = 4;
    let cas = CascadeReservoir::new(&g, order, vec![0.0, 0.0]).unwrap();
    let us = inputs(10, 2);
    let a = cas.cascade_run(&us, None).unwrap();
    let init = vec![vec![0.9, -0.9], vec![-0.5, 0.7], vec![1.0, 1.0], vec![-1.0, 0.2]];
    let b = cas.cascade_run(&us, Some(&init)).unwrap();
    for t in order - 1..us.len() {
        assert_eq!(a[t], b[t]);
        assert_eq!(a[t], cas.final_output(&us[..=t]));
    }
    assert_ne!(a[0], b[0]);
    assert!(cas.cascade_run(&[], None).is_err());
    assert!(CascadeReservoir::new(&g, 0, vec![0.0, 0.0]).is_err());
}

#[test]
fn finite_memory_behaviour() {
    let comps =
        (0..2).map(|_| BarronTarget::fourier_mixture(Vec::<FourierAtom>::new(), 0.3, dom2()).unwrap()).collect();
    let constant = TargetSystem::from_components(comps, 0.3, 0.5).unwrap();
    assert_eq!(finite_memory_gap(&constant, 1, None, 8, 0).unwrap().gap, 0.0);
    let g = make_strictly_contracting(dom2(), 0.5, 3, 21).unwrap();
    let mut gaps = Vec::new();
    for order in [1, 2, 4, 8] {
        let fm = finite_memory_gap(&g, order, None, 32, 5).unwrap();
        assert!(fm.gap <= 2.0 * 0.5f64.powi(order as i32));
        gaps.push(fm.gap);
    }
    assert!(gaps[3] < gaps[0]);
    let expanding = TargetSystem::custom(dom2(), |x: &[f64], _: &[f64]| x.to_vec(), 0.5, 1.0, 0.0).unwrap();
    assert!(finite_memory_gap(&expanding, 2, None, 4, 0).is_err());
}

#[test]
fn forgetting_times() {
    assert_eq!(forgetting_time(0.5, 1.0, 0.5), 2);
    assert_eq!(forgetting_time(0.5, 1.0, 4.0), 1);
    assert_eq!(forgetting_time(0.0, 1.0, 1e-9), 1);
    assert!((cascade_error_bound(0.1, 0.1, 0.5, 3).unwrap() - 0.275).abs() < 1e-15);
    assert!(cascade_error_bound(-0.1, 0.1, 0.5, 3).is_err());
}

fn scalar_linear(a: f64, c: f64) -> impl StateMap {
    FnMap::new(1, 1, move |x: &[f64], u: &[f64]| vec![a * x[0] + c * u[0]])
}

#[test]
fn reduction_identical_and_exhaustive_linear() {
    let g = scalar_linear(0.5, 0.4);
    let seqs: Vec<Vec<Vec<f64>>> = (0..16u32)
        .map(|code| (0..6).map(|s| vec![if code >> (s % 4) & 1 == 1 { 1.0 } else { -1.0 }]).collect())
        .collect();
    let same = cascade_reduction_check(&g, &g, None, None, &[0.0], 3, &seqs, NormDegree::Inf).unwrap();
    assert_eq!(same.cascade_gap, 0.0);
    let h = scalar_linear(0.3, 0.6);
    let chk = cascade_reduction_check(&g, &h, None, None, &[0.0], 3, &seqs, NormDegree::Inf).unwrap();
    assert!(chk.holds(), "{chk:?}");
    // all 8 sign sequences of length 3 appear as suffixes, so the filter gap is
    // the exhaustive maximum
    let mut oracle = 0.0f64;
    for code in 0..8u32 {
        let (mut x, mut y) = (0.0f64, 0.0f64);
        for s in 0..3 {
            let u = if code >> s & 1 == 1 { 1.0 } else { -1.0 };
            x = 0.5 * x + 0.4 * u;
            y = 0.3 * y + 0.6 * u;
            oracle = oracle.max((x - y).abs());
        }
    }
    assert!((chk.filter_gap - oracle).abs() < 1e-15);
}

#[test]
fn reduction_on_random_networks() {
    let (fam, _) = member_spec();
    let mut rng = rng_from_seed(77);
    let f1 = VectorFnn::new(vec![fam.sample_member(&mut rng), fam.sample_member(&mut rng)]).unwrap();
    let f2 = VectorFnn::new(vec![fam.sample_member(&mut rng), fam.sample_member(&mut rng)]).unwrap();
    let seqs: Vec<Vec<Vec<f64>>> = (0..100).map(|k| inputs(9, 100 + k)).collect();
    for order in [1, 2, 4] {
        let chk = cascade_reduction_check(&f1, &f2, None, None, &[0.0, 0.0], order, &seqs, NormDegree::Inf).unwrap();
        assert!(chk.holds(), "T={order}: {chk:?}");
        let w1 = DMatrix::from_row_slice(1, 2, &[0.7, -0.2]);
        let w2 = DMatrix::from_row_slice(1, 2, &[0.1, 0.5]);
        let chk = cascade_reduction_check(&f1, &f2, Some(&w1), Some(&w2), &[0.0, 0.0], order, &seqs, NormDegree::Two)
            .unwrap();
        assert!(chk.holds(), "T={order} readouts: {chk:?}");
    }
    let bad = DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]);
    assert!(cascade_reduction_check(&f1, &f2, Some(&bad), None, &[0.0, 0.0], 2, &seqs, NormDegree::Inf).is_err());
}

#[test]
fn scale_node_counts() {
    let params = ScaleParams {
        state_dim: 1,
        input_dim: 1,
        m: 1.0,
        l_sc: 0.5,
        p: NormDegree::Inf,
        state_radius: 1.0,
        gamma0: 1.0,
        kappa: 1.0,
    };
    for (n, order) in [(1usize, 1usize), (4, 1), (16, 2), (64, 3)] {
        let r = scale_report(n, &params).unwrap();
        assert_eq!(r.order, order);
        // base 160 N √N + 1 is an integer at perfect squares
        let base = 160 * n * (n as f64).sqrt() as usize + 1;
        let exp = 16 * n + 1;
        let mut count = BigUint::from(1u32);
        for _ in 0..exp {
            count *= base;
        }
        assert_eq!(r.covering_count, count);
        assert_eq!(r.node_count, count * (order * 4 * n));
        let geo: f64 = (0..order).map(|i| 0.5f64.powi(i as i32)).sum();
        let pv = 2f64.sqrt() / (n as f64).sqrt() + 1.0 / (n as f64).sqrt();
        assert!((r.error_bound - (2.0 * 0.5f64.powi(order as i32) + pv * geo)).abs() < 1e-12);
    }
    assert!(scale_report(0, &params).is_err());
}
