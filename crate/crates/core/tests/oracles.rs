use ndarray::{array, Array2};

use ntf_core::constraints::project;
use ntf_core::experiment::generate;
use ntf_core::solver::{fit, kkt_residuals};
use ntf_core::tensor::{mttkrp, KruskalModel};
use ntf_core::{ConstraintSpec, DenseTensor, SolverConfig};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Simplex projection by enumerating every support set.
fn brute_simplex(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let shift = (support.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let mut x = vec![0.0; n];
        for &i in &support {
            x[i] = v[i] - shift;
        }
        if x.iter().any(|&xi| xi < -1e-15) {
            continue;
        }
        let d = sq_dist(&x, v);
        if best.as_ref().map_or(true, |(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.unwrap().1
}

/// Non-negative projection with at most `c` nonzeros, by enumerating supports.
fn brute_cardinality(v: &[f64], c: usize) -> f64 {
    let n = v.len();
    (0u32..(1 << n))
        .filter(|m| m.count_ones() as usize <= c)
        .map(|mask| {
            let x: Vec<f64> = (0..n).map(|i| if mask & (1 << i) != 0 { v[i].max(0.0) } else { 0.0 }).collect();
            sq_dist(&x, v)
        })
        .fold(f64::INFINITY, f64::min)
}

fn grid_3x3(seed: u64) -> Array2<f64> {
    let mut s = seed;
    Array2::from_shape_simple_fn((3, 3), || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0
    })
}

#[test]
fn projections_match_brute_force_on_3x3() {
    for seed in 0..300 {
        let m = grid_3x3(seed);
        let flat: Vec<f64> = m.iter().copied().collect();
        let p = project(&m, ConstraintSpec::NonNegative);
        assert!(p.iter().zip(&flat).all(|(&x, &v)| x == v.max(0.0)));
        let p = project(&m, ConstraintSpec::RowStochastic);
        for (r, row) in m.rows().into_iter().enumerate() {
            let oracle = brute_simplex(row.as_slice().unwrap());
            assert!(sq_dist(p.row(r).as_slice().unwrap(), &oracle) <= 1e-24, "seed {seed} row {r}");
        }
        for c in 0..=9 {
            let p = project(&m, ConstraintSpec::NonNegativeCardinality(c.max(1)));
            let c = c.max(1);
            assert!(p.iter().filter(|&&x| x != 0.0).count() <= c);
            let got = sq_dist(p.as_slice().unwrap(), &flat);
            assert!((got - brute_cardinality(&flat, c)).abs() <= 1e-12, "seed {seed} c {c}");
        }
    }
}

#[test]
fn simplex_projection_examples() {
    let p = project(&array![[0.5, 0.5, 0.5], [2.0, 0.0, 0.0], [-1.0, 0.3, 0.4]], ConstraintSpec::RowStochastic);
    let third = 1.0 / 3.0;
    assert!(sq_dist(p.row(0).as_slice().unwrap(), &[third; 3]) < 1e-30);
    assert_eq!(p.row(1).to_vec(), [1.0, 0.0, 0.0]);
    assert!(sq_dist(p.row(2).as_slice().unwrap(), &[0.0, 0.45, 0.55]) < 1e-30);
}

#[test]
fn mttkrp_hand_computed() {
    // X(i,j,k) = i + 2j + 4k on 2x2x2, all-ones rank-1 factors:
    // row i of the mode-0 MTTKRP is Σ_{j,k} X(i,j,k) = 4i + 12.
    let t = DenseTensor::from_fn(vec![2, 2, 2], |i| (i[0] + 2 * i[1] + 4 * i[2]) as f64).unwrap();
    let ones = KruskalModel::new(vec![Array2::ones((2, 1)); 3]).unwrap();
    assert_eq!(mttkrp(&t, &ones, 0).unwrap(), array![[12.0], [16.0]]);
    assert_eq!(mttkrp(&t, &ones, 1).unwrap(), array![[10.0], [18.0]]);
    assert_eq!(mttkrp(&t, &ones, 2).unwrap(), array![[6.0], [22.0]]);
}

#[test]
fn fixed_penalty_fit_reaches_kkt_point() {
    let (t, _) = generate(&[12, 11, 10], 3, 0.0, 21).unwrap();
    let specs = [ConstraintSpec::NonNegative; 3];
    let cfg = SolverConfig {
        seed: 2,
        eps_abs: 1e-10,
        eps_rel: 1e-10,
        n_max: 5000,
        adapt_penalties: false,
        ..Default::default()
    };
    let r = fit(&t, 3, &specs, &cfg).unwrap();
    assert!(r.converged);
    let k = kkt_residuals(&r.state, &t, &specs).unwrap();
    assert!(k.max() <= 1e-4 * t.norm(), "{:?}", k.named());
    assert_eq!(k.max_positive_dual, 0.0);
}

#[test]
fn constrained_fits_are_feasible() {
    let (t, _) = generate(&[10, 9, 8], 3, 1e-3, 4).unwrap();
    let specs = [ConstraintSpec::NonNegativeCardinality(12), ConstraintSpec::RowStochastic, ConstraintSpec::NonNegative];
    let r = fit(&t, 3, &specs, &SolverConfig { seed: 5, ..Default::default() }).unwrap();
    assert!(r.model.factor(0).iter().filter(|&&v| v != 0.0).count() <= 12);
    for row in r.model.factor(1).rows() {
        assert!((row.sum() - 1.0).abs() <= 1e-9);
        assert!(row.iter().all(|&v| v >= 0.0));
    }
}
