mod common;

use common::Poly;
use faer::linalg::solvers::SolveLstsq;
use faer::Mat;
use jetedmd_core::c64;
use jetedmd_core::estimator::{self, EstimatorConfig};
use jetedmd_core::multiindex::{dimension, factorial_f64};
use jetedmd_core::numerics;
use jetedmd_core::rkhs::KernelSpec;
use jetedmd_core::spectral::{self, AssemblyOptions, SpectrumMode};
use jetedmd_core::systems::{self, stream};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn one_dimensional_discrete_spectrum_is_exact(c in -2.0f64..2.0, m in 0usize..=10) {
        let got = spectral::theoretical_spectrum(faer::mat![[c]].as_ref(), m, SpectrumMode::Discrete).unwrap();
        let mut want: Vec<f64> = (0..=m).map(|j| c.powi(j as i32)).collect();
        want.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(got.len(), m + 1);
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(*g, c64::new(*w, 0.0));
        }
    }

    #[test]
    fn spectrum_size_is_dimension(d in 1usize..=3, m in 0usize..=6, e in prop::collection::vec(-1.0f64..1.0, 9)) {
        let j = Mat::from_fn(d, d, |r, c| e[r * 3 + c]);
        for mode in [SpectrumMode::Discrete, SpectrumMode::Generator] {
            prop_assert_eq!(spectral::theoretical_spectrum(j.as_ref(), m, mode).unwrap().len(), dimension(d, m).unwrap());
        }
    }

    #[test]
    fn duffing_spectra_agree_at_mirrored_equilibria(seed in 0u64..500) {
        let sys = systems::builtin("duffing", &Default::default()).unwrap();
        let mut spectra = vec![];
        for p in [[1.0, 0.0], [-1.0, 0.0]] {
            let xs = systems::sample_box(seed, stream::SAMPLES, &[p[0] - 1.0, -1.0], &[p[0] + 1.0, 1.0], 66).unwrap();
            let data = systems::velocity_pairs(&sys, &xs).unwrap();
            let cfg = EstimatorConfig::new(KernelSpec::exponential(1.0, vec![0.0, 0.0]).unwrap(), p.to_vec(), 5, 10).unwrap();
            let est = estimator::jet_edmd_generator(&cfg, &data).unwrap();
            spectra.push(numerics::eigenvalues(est.matrix.as_ref()).unwrap());
        }
        let h = common::hausdorff(&spectra[0], &spectra[1]);
        prop_assert!(h < 1e-6, "hausdorff {h}");
    }
}

/// Least-squares monomial coefficients from evaluations at `pts`.
fn fit(exps: &[Vec<u32>], pts: &[Vec<f64>], vals: &[c64]) -> Vec<c64> {
    let a = Mat::from_fn(pts.len(), exps.len(), |i, j| {
        exps[j].iter().zip(&pts[i]).map(|(&e, x)| x.powi(e as i32)).product::<f64>()
    });
    let qr = a.qr();
    let solve = |rhs: Vec<f64>| {
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = qr.solve_lstsq(&b);
        (0..exps.len()).map(|i| x[(i, 0)]).collect::<Vec<f64>>()
    };
    let re = solve(vals.iter().map(|v| v.re).collect());
    let im = solve(vals.iter().map(|v| v.im).collect());
    re.into_iter().zip(im).map(|(a, b)| c64::new(a, b)).collect()
}

#[test]
fn koopman_eigenfunctions_have_small_weak_residual() {
    let m = 3u32;
    let sys = systems::builtin("quadratic_map", &Default::default()).unwrap();
    let xs = systems::sample_box(21, stream::SAMPLES, &[-1.0, -1.0], &[1.0, 1.0], 100).unwrap();
    let data = systems::map_pairs(&sys, &xs).unwrap();
    let cfg = EstimatorConfig::new(KernelSpec::exponential(1.0, vec![0.0, 0.0]).unwrap(), vec![0.0, 0.0], m as usize, 6).unwrap();
    let est = estimator::jet_edmd_discrete(&cfg, &data).unwrap();
    let fields = spectral::assemble_eigenfunctions(&[est], AssemblyOptions::default()).unwrap();

    let z1 = Poly::var(2, 0, 1.0);
    let z2 = Poly::var(2, 1, 1.0);
    let f = [
        z1.mul(&z1).add(&z2.mul(&z2).scale(-1.0)).add(&z1).add(&z2.scale(-1.0)),
        z1.mul(&z2).scale(2.0).add(&z1).add(&z2),
    ];
    let exps = common::graded(2, m);
    let pts = systems::sample_box(22, stream::TEST_POINTS, &[-1.0, -1.0], &[1.0, 1.0], 40).unwrap();
    assert_eq!(fields.len(), exps.len());
    for field in &fields {
        let vals: Vec<c64> = pts.iter().map(|x| field.eval_left(x).unwrap()).collect();
        let coef = fit(&exps, &pts, &vals);
        // u o f - lambda u on monomials, projected onto degree <= m
        let lam = field.koopman_eigenvalue();
        let (mut re, mut im) = (Poly::zero(2), Poly::zero(2));
        for (e, c) in exps.iter().zip(&coef) {
            let comp = f[0].pow(e[0]).mul(&f[1].pow(e[1]));
            re = re.add(&comp.scale(c.re));
            im = im.add(&comp.scale(c.im));
        }
        let weight = |e: &[u32]| e.iter().map(|&k| factorial_f64(k)).product::<f64>();
        let (mut resid, mut norm) = (0.0, 0.0);
        for (e, c) in exps.iter().zip(&coef) {
            let r = c64::new(re.coeff(e), im.coeff(e)) - lam * c;
            resid += r.norm_sqr() * weight(e);
            norm += c.norm_sqr() * weight(e);
        }
        let rel = (resid / norm).sqrt();
        assert!(rel <= 1e-6, "eigenvalue {lam}: relative weak residual {rel}");
    }
}
