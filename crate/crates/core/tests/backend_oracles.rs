use mimicry_core::backend::{eer_from_scores, train_plda, PldaModel, PldaVariant};
use mimicry_core::linalg::LN_2PI;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Gauss-Hermite nodes and weights (weight function exp(-x^2)) by Golub-Welsch.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = jacobi.symmetric_eigen();
    let nodes = eig.eigenvalues.iter().copied().collect();
    let weights = (0..n).map(|k| std::f64::consts::PI.sqrt() * eig.eigenvectors[(0, k)].powi(2)).collect();
    (nodes, weights)
}

fn log_normal(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> f64 {
    let d = x - mean;
    let inv = cov.clone().try_inverse().unwrap();
    -0.5 * (x.len() as f64 * LN_2PI + cov.determinant().ln() + d.dot(&(inv * &d)))
}

/// Same- versus different-speaker LLR by integrating the speaker variable
/// over its prior with tensor Gauss-Hermite quadrature.
fn quadrature_llr(mean: &DVector<f64>, b: &DMatrix<f64>, w: &DMatrix<f64>, e: &DVector<f64>, t: &DVector<f64>, n: usize) -> f64 {
    let dim = mean.len();
    let (nodes, weights) = gauss_hermite(n);
    let l = b.clone().cholesky().unwrap().l();
    let norm = std::f64::consts::PI.powf(-(dim as f64) / 2.0);
    let (mut same, mut pe, mut pt) = (0.0, 0.0, 0.0);
    let mut idx = vec![0usize; dim];
    loop {
        let z = DVector::from_fn(dim, |i, _| nodes[idx[i]] * 2f64.sqrt());
        let wt: f64 = idx.iter().map(|&k| weights[k]).product::<f64>() * norm;
        let y = mean + &l * z;
        let le = log_normal(e, &y, w).exp();
        let lt = log_normal(t, &y, w).exp();
        same += wt * le * lt;
        pe += wt * le;
        pt += wt * lt;
        let mut k = 0;
        loop {
            if k == dim {
                return same.ln() - pe.ln() - pt.ln();
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn one_dimensional_llr_matches_quadrature() {
    let m = PldaModel::two_cov(DVector::zeros(1), DMatrix::identity(1, 1), DMatrix::identity(1, 1)).unwrap();
    for (x, y) in [(0.3, -0.7), (1.5, 1.2), (-2.0, 0.4), (0.0, 0.0)] {
        let e = DVector::from_vec(vec![x]);
        let t = DVector::from_vec(vec![y]);
        let oracle = quadrature_llr(&DVector::zeros(1), &DMatrix::identity(1, 1), &DMatrix::identity(1, 1), &e, &t, 80);
        let got = m.llr(&e, &t).unwrap();
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
}

#[test]
fn three_dimensional_llr_matches_quadrature() {
    let mean = DVector::from_vec(vec![0.1, -0.2, 0.05]);
    let b = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 0.8, -0.1, 0.1, -0.1, 0.6]);
    let w = DMatrix::from_row_slice(3, 3, &[0.7, 0.1, 0.0, 0.1, 0.9, 0.2, 0.0, 0.2, 1.1]);
    let m = PldaModel::two_cov(mean.clone(), b.clone(), w.clone()).unwrap();
    let pairs = [
        (vec![0.5, -0.3, 0.2], vec![0.4, -0.1, 0.3]),
        (vec![-0.8, 0.6, 0.1], vec![0.9, -0.2, -0.5]),
    ];
    for (e, t) in pairs {
        let e = DVector::from_vec(e);
        let t = DVector::from_vec(t);
        let oracle = quadrature_llr(&mean, &b, &w, &e, &t, 30);
        let got = m.llr(&e, &t).unwrap();
        assert!((got - oracle).abs() < 1e-6, "{got} vs {oracle}");
    }
}

#[test]
fn simplified_model_llr_matches_quadrature() {
    let mean = DVector::zeros(2);
    let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, -0.4, 0.8]);
    let sigma = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.4]);
    let m = PldaModel::simplified(mean.clone(), v.clone(), sigma.clone()).unwrap();
    let e = DVector::from_vec(vec![0.7, -0.2]);
    let t = DVector::from_vec(vec![0.5, 0.1]);
    let oracle = quadrature_llr(&mean, &(&v * v.transpose()), &sigma, &e, &t, 60);
    assert!((m.llr(&e, &t).unwrap() - oracle).abs() < 1e-6);
}

#[test]
fn target_scores_exceed_nontarget_on_simulated_data() {
    let dim = 5;
    let b = DMatrix::identity(dim, dim) * 1.5;
    let w = DMatrix::identity(dim, dim) * 0.5;
    let m = PldaModel::two_cov(DVector::zeros(dim), b.clone(), w.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut draw = |scale: f64| DVector::from_fn(dim, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
    let (mut tar, mut non) = (0.0, 0.0);
    for _ in 0..500 {
        let s1 = draw(1.5f64.sqrt());
        let s2 = draw(1.5f64.sqrt());
        let a = &s1 + draw(0.5f64.sqrt());
        let b = &s1 + draw(0.5f64.sqrt());
        let c = &s2 + draw(0.5f64.sqrt());
        tar += m.llr(&a, &b).unwrap();
        non += m.llr(&a, &c).unwrap();
    }
    assert!(tar / 500.0 > non / 500.0);
}

#[test]
fn em_objective_non_decreasing_on_unbalanced_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in 0..60 {
        let centre = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
        for _ in 0..rng.gen_range(2..9) {
            x.push(&centre + DVector::from_fn(3, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal)));
            y.push(s);
        }
    }
    for variant in [PldaVariant::TwoCov, PldaVariant::Simplified { speaker_dim: 2 }] {
        let (_, report) = train_plda(&x, &y, variant, 15).unwrap();
        assert!(report.worst_decrease() <= 1e-4, "{variant:?}: {:?}", report.objective);
    }
}

/// Enumerates every cut point and interpolates at the first sign change of FAR - FRR.
fn brute_force_eer(tar: &[f64], non: &[f64]) -> f64 {
    let mut cuts: Vec<f64> = tar.iter().chain(non).copied().collect();
    cuts.push(f64::INFINITY);
    cuts.sort_by(|a, b| b.total_cmp(a));
    cuts.dedup();
    let rates = |thr: f64| {
        let far = non.iter().filter(|&&s| s >= thr).count() as f64 / non.len() as f64;
        let frr = tar.iter().filter(|&&s| s < thr).count() as f64 / tar.len() as f64;
        (far, frr)
    };
    for pair in cuts.windows(2) {
        let (a0, r0) = rates(pair[0]);
        let (a1, r1) = rates(pair[1]);
        if a1 >= r1 {
            let alpha = if (r0 - a0) - (r1 - a1) > 0.0 { (r0 - a0) / ((r0 - a0) - (r1 - a1)) } else { 1.0 };
            return a0 + alpha * (a1 - a0);
        }
    }
    unreachable!()
}

#[test]
fn eer_matches_exhaustive_sweep() {
    let tar = [3.0, 2.0, 1.0, 0.0];
    let non = [2.5, 1.5, 0.5, -0.5];
    assert_eq!(eer_from_scores(&tar, &non).unwrap().eer, brute_force_eer(&tar, &non));
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let nt = rng.gen_range(1..30);
        let nn = rng.gen_range(1..30);
        // Coarse values force ties.
        let tar: Vec<f64> = (0..nt).map(|_| (rng.gen_range(0.0..5.0) * 2.0f64).round() / 2.0 + 0.5).collect();
        let non: Vec<f64> = (0..nn).map(|_| (rng.gen_range(0.0..5.0) * 2.0f64).round() / 2.0).collect();
        let got = eer_from_scores(&tar, &non).unwrap().eer;
        assert!((got - brute_force_eer(&tar, &non)).abs() < 1e-12);
    }
}
