//! Moment-matched merging against sample moments of the mixture it replaces.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use mrm_tracker::reduce::merge_components;
use mrm_tracker::rng::stream_rng;
use mrm_tracker::sampling::mvnormal;
use mrm_tracker::stats::InverseWishartParams;
use mrm_tracker::{GammaParams, GgiwComponent, SpdMatrix, StateLayout};

fn random_component(layout: &StateLayout, rng: &mut impl Rng, weight: f64) -> GgiwComponent {
    let n = layout.state_dim();
    let mut mean = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
    mean[layout.kinematics_start() + 1] = rng.random_range(-0.5..0.5);
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    let rates = (0..layout.n_subobjects)
        .map(|_| GammaParams::new(rng.random_range(5.0..60.0), rng.random_range(0.5..4.0)).unwrap())
        .collect();
    let extents = (0..layout.n_subobjects)
        .map(|_| {
            let b = DMatrix::from_fn(2, 2, |_, _| rng.random_range(-2.0..2.0));
            let x = &b * b.transpose() + DMatrix::identity(2, 2);
            let dof = rng.random_range(8.0..40.0);
            InverseWishartParams::new(dof, SpdMatrix::from_symmetrized(x * (dof - 6.0)).unwrap()).unwrap()
        })
        .collect();
    GgiwComponent {
        weight,
        mode: 0,
        rates,
        kin_mean: mean,
        kin_cov: SpdMatrix::from_symmetrized(cov).unwrap(),
        extents,
    }
}

#[test]
fn merged_gaussian_and_gamma_match_mixture_samples() {
    let layout = StateLayout::planar(2).unwrap();
    let mut rng = stream_rng(31, &[]);
    let weights = [0.5, 0.3, 0.2];
    let comps: Vec<GgiwComponent> = weights.iter().map(|&w| random_component(&layout, &mut rng, w)).collect();
    let refs: Vec<&GgiwComponent> = comps.iter().collect();
    let merged = merge_components(&refs, &layout).unwrap();
    assert!((merged.weight - 1.0).abs() < 1e-12);

    let n = layout.state_dim();
    let draws = 200_000;
    let mut sx = DVector::zeros(n);
    let mut sxx = DMatrix::zeros(n, n);
    let mut sg = 0.0;
    let mut sgg = 0.0;
    for _ in 0..draws {
        let u: f64 = rng.random();
        let c = if u < 0.5 { &comps[0] } else if u < 0.8 { &comps[1] } else { &comps[2] };
        let x = mvnormal(&c.kin_mean, &c.kin_cov, &mut rng);
        sxx += &x * x.transpose();
        sx += x;
        let g = Gamma::new(c.rates[1].alpha, 1.0 / c.rates[1].beta).unwrap().sample(&mut rng);
        sg += g;
        sgg += g * g;
    }
    let mean = &sx / draws as f64;
    let cov = &sxx / draws as f64 - &mean * mean.transpose();
    for i in 0..n {
        let se = (merged.kin_cov.matrix()[(i, i)] / draws as f64).sqrt();
        assert!((mean[i] - merged.kin_mean[i]).abs() < 5.0 * se, "mean {i}");
        for j in 0..n {
            let scale = (merged.kin_cov.matrix()[(i, i)] * merged.kin_cov.matrix()[(j, j)]).sqrt();
            assert!((cov[(i, j)] - merged.kin_cov.matrix()[(i, j)]).abs() < 0.02 * scale, "cov ({i},{j})");
        }
    }
    let g_mean = sg / draws as f64;
    let g_var = sgg / draws as f64 - g_mean * g_mean;
    assert!((g_mean / merged.rates[1].mean() - 1.0).abs() < 0.01);
    assert!((g_var / merged.rates[1].variance() - 1.0).abs() < 0.03);
}

#[test]
fn merged_extent_keeps_the_weighted_mean() {
    let layout = StateLayout::planar(3).unwrap();
    let mut rng = stream_rng(32, &[]);
    for _ in 0..50 {
        let w: Vec<f64> = (0..4).map(|_| rng.random_range(0.05..1.0)).collect();
        let comps: Vec<GgiwComponent> = w.iter().map(|&wi| random_component(&layout, &mut rng, wi)).collect();
        let refs: Vec<&GgiwComponent> = comps.iter().collect();
        let merged = merge_components(&refs, &layout).unwrap();
        let total: f64 = w.iter().sum();
        for i in 0..3 {
            let expect = comps
                .iter()
                .fold(DMatrix::zeros(2, 2), |a, c| a + c.extents[i].mean() * (c.weight / total));
            assert!((merged.extents[i].mean() - &expect).norm() < 1e-10 * expect.norm());
            assert!(merged.extents[i].dof > 6.0);
        }
    }
}
