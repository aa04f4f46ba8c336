use scramble::correlators::*;
use scramble::ensembles::{sample_gue, sample_haar_unitary, sample_random_hermitian, RngStream};
use scramble::linalg::*;
use scramble::models::{build_bipartite, build_syk, jordan_wigner};

/// `exp(i s M)` by scaling and squaring of a truncated Taylor series.
fn expm_i(m: &ComplexMatrix, s: f64) -> ComplexMatrix {
    let d = m.nrows();
    let norm = m.frobenius_norm() * s.abs();
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let x = m.scale(c64::new(0.0, s / 2f64.powi(squarings)));
    let mut term = ComplexMatrix::identity(d);
    let mut acc = ComplexMatrix::identity(d);
    for k in 1..30 {
        term = term.matmul(&x).unwrap().scale_real(1.0 / k as f64);
        acc = acc.add(&term).unwrap();
    }
    for _ in 0..squarings {
        acc = acc.matmul(&acc).unwrap();
    }
    acc
}

/// `exp(-βH)/Z` raised to `power`, through the same Taylor machinery on `-iβ power H`.
fn thermal_power(h: &ComplexMatrix, beta: f64, power: f64) -> ComplexMatrix {
    let d = h.nrows();
    let mut x = ComplexMatrix::identity(d);
    let steps = 64;
    let step = h.scale_real(-beta / steps as f64);
    // exp(A) via (I + A/k + ...) with repeated products; A small per step.
    let mut small = ComplexMatrix::identity(d);
    let mut term = ComplexMatrix::identity(d);
    for k in 1..20 {
        term = term.matmul(&step).unwrap().scale_real(1.0 / k as f64);
        small = small.add(&term).unwrap();
    }
    for _ in 0..steps {
        x = x.matmul(&small).unwrap();
    }
    let z = x.trace().unwrap().re;
    let rho = x.scale_real(1.0 / z);
    if power == 1.0 {
        return rho;
    }
    let dec = HermitianOperator::new(rho).unwrap().eig().unwrap();
    let diag: Vec<c64> = dec.eigenvalues().iter().map(|&e| c64::new(e.max(0.0).powf(power), 0.0)).collect();
    dec.apply_function(&diag)
}

fn brute_otoc(h: &ComplexMatrix, a: &ComplexMatrix, b: &ComplexMatrix, beta: f64, t: f64) -> c64 {
    let u = expm_i(h, -t);
    let at = u.adjoint().matmul(a).unwrap().matmul(&u).unwrap();
    let y = thermal_power(h, beta, 0.25);
    let seq = [&y, &at.adjoint(), &y, &b.adjoint(), &y, &at, &y, b];
    let mut acc = ComplexMatrix::identity(h.nrows());
    for m in seq {
        acc = acc.matmul(m).unwrap();
    }
    acc.trace().unwrap()
}

#[test]
fn regularized_otoc_matches_brute_force() {
    let mut rng = RngStream::new(11, 0);
    let h = sample_gue(6, &mut rng).unwrap();
    let a = sample_random_hermitian(6, &mut rng).unwrap();
    let b = sample_haar_unitary(6, &mut rng).unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.3, 1.1]).unwrap();
    for beta in [0.0, 0.7] {
        let dec = h.eig().unwrap();
        let c = otoc_regularized(&dec, a.matrix(), &b, beta, &grid, false);
        // B is unitary but not Hermitian, so the correlator is complex in general.
        match c {
            Ok(c) => {
                for (i, &t) in grid.times().iter().enumerate() {
                    let f = brute_otoc(h.matrix(), a.matrix(), &b, beta, t);
                    assert!((c.mean[i] - f.re).abs() < 1e-9, "beta {beta} t {t}: {} vs {}", c.mean[i], f.re);
                }
            }
            Err(scramble::Error::ImaginaryResidue { .. }) => {
                let bh = sample_random_hermitian(6, &mut rng).unwrap();
                let c = otoc_regularized(&dec, a.matrix(), bh.matrix(), beta, &grid, false).unwrap();
                for (i, &t) in grid.times().iter().enumerate() {
                    let f = brute_otoc(h.matrix(), a.matrix(), bh.matrix(), beta, t);
                    assert!((c.mean[i] - f.re).abs() < 1e-9);
                }
            }
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn hermitian_probes_give_real_normalized_curve() {
    let mut rng = RngStream::new(12, 0);
    let model = build_bipartite(8, 0.2, &mut rng).unwrap();
    let part = model.part;
    let a = part.embed_a(sample_random_hermitian(2, &mut rng).unwrap().matrix()).unwrap();
    let b = part.embed_b(sample_random_hermitian(8, &mut rng).unwrap().matrix()).unwrap();
    let grid = TimeGrid::uniform(2.0, 9).unwrap();
    let dec = model.h_total.eig().unwrap();
    let c = otoc_regularized(&dec, &a, &b, 0.3, &grid, true).unwrap();
    assert!((c.mean[0] - 1.0).abs() < 1e-12);
    for i in 0..grid.len() {
        let f = brute_otoc(model.h_total.matrix(), &a, &b, 0.3, grid.times()[i]).re;
        assert!((c.mean[i] * c.scale - f).abs() < 1e-9);
    }
}

#[test]
fn haar_exact_matches_monte_carlo() {
    let mut rng = RngStream::new(13, 0);
    let part = BipartitePartition::new(2, 3).unwrap();
    let h = sample_gue(6, &mut rng).unwrap();
    let dec = h.eig().unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.5]).unwrap();
    let beta = 0.4;
    let exact = otoc_haar_exact(&dec, part, beta, &grid).unwrap();
    let mc = otoc_haar_mc(&dec, part, beta, &grid, 4000, &mut rng, &Regularization::ThermalCircle).unwrap();
    for i in 0..grid.len() {
        let tol = 4.0 * mc.stderr[i] + 1e-12;
        assert!((mc.mean[i] - exact.mean[i]).abs() < tol, "t={} {} vs {} ± {}", grid.times()[i], mc.mean[i], exact.mean[i], mc.stderr[i]);
    }
}

#[test]
fn haar_exact_is_one_at_origin_for_infinite_temperature() {
    let mut rng = RngStream::new(14, 0);
    let part = BipartitePartition::new(2, 4).unwrap();
    let dec = sample_gue(8, &mut rng).unwrap().eig().unwrap();
    let f = otoc_haar_exact_complex(&dec, part, 0.0, c64::new(0.0, 0.0)).unwrap();
    assert!((f - c64::new(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn haar_average_over_a_only_matches_monte_carlo() {
    let mut rng = RngStream::new(15, 0);
    let part = BipartitePartition::new(2, 3).unwrap();
    let h = sample_gue(6, &mut rng).unwrap();
    let dec = h.eig().unwrap();
    let b = sample_random_hermitian(3, &mut rng).unwrap();
    let grid = TimeGrid::new(vec![0.0, 0.8]).unwrap();
    let exact = otoc_haar_exact_a(&dec, b.matrix(), part, 0.2, &grid).unwrap();
    let bb = part.embed_b(b.matrix()).unwrap();
    let n = 3000;
    let mut samples = Vec::new();
    for _ in 0..n {
        let a = part.embed_a(&sample_haar_unitary(2, &mut rng).unwrap()).unwrap();
        samples.push(otoc_regularized(&dec, &a, &bb, 0.2, &grid, false).unwrap().mean);
    }
    let mc = DecayCurve::from_realizations("mc", &grid, &samples).unwrap();
    for i in 0..grid.len() {
        assert!((mc.mean[i] - exact.mean[i]).abs() < 4.0 * mc.stderr[i] + 1e-12);
    }
}

#[test]
fn echo_matches_brute_force_two_level() {
    let mut rng = RngStream::new(16, 0);
    let h = sample_gue(2, &mut rng).unwrap();
    let v1 = sample_gue(2, &mut rng).unwrap().scaled(0.3);
    let v2 = sample_gue(2, &mut rng).unwrap().scaled(0.3);
    let grid = TimeGrid::new(vec![0.0, 0.4, 2.5]).unwrap();
    for beta in [0.0, 1.3] {
        let c = loschmidt_echo(&h, &v1, &v2, beta, &grid).unwrap();
        let rho = thermal_power(h.matrix(), beta, 1.0);
        for (i, &t) in grid.times().iter().enumerate() {
            let fwd = expm_i(h.add(&v1).unwrap().matrix(), t);
            let back = expm_i(h.add(&v2).unwrap().matrix(), -t);
            let m = rho.matmul(&fwd).unwrap().matmul(&back).unwrap().trace().unwrap().norm_sqr();
            assert!((c.mean[i] - m).abs() < 1e-10);
            assert!((0.0..=1.0 + 1e-12).contains(&c.mean[i]));
        }
    }
}

#[test]
fn exhaustive_noise_average_counts_every_pair() {
    let mut rng = RngStream::new(17, 0);
    let h = sample_gue(4, &mut rng).unwrap();
    let couplings: Vec<HermitianOperator> = (0..2).map(|_| sample_gue(4, &mut rng).unwrap()).collect();
    let grid = TimeGrid::new(vec![0.0, 0.7, 1.9]).unwrap();
    let delta = 0.15;
    let beta = 0.6;
    let c = noise_averaged_le_with(&h, &couplings, delta, beta, &grid, NoiseSampling::Exhaustive, &LeOptions::default()).unwrap();
    let signs: Vec<[f64; 2]> = vec![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
    let pert = |s: [f64; 2]| couplings[0].scaled(delta * s[0]).add(&couplings[1].scaled(delta * s[1])).unwrap();
    for (i, &t) in grid.times().iter().enumerate() {
        let mut acc = 0.0;
        for s1 in &signs {
            for s2 in &signs {
                acc += loschmidt_echo(&h, &pert(*s1), &pert(*s2), beta / 2.0, &TimeGrid::new(vec![t]).unwrap()).unwrap().mean[0];
            }
        }
        assert!((c.mean[i] - acc / 16.0).abs() < 1e-10);
    }
    let z = |b: f64| h.eig().unwrap().log_partition(b) - 4f64.ln();
    let expected = (2.0 * z(beta / 2.0) - z(beta)).exp();
    assert!((c.thermal_prefactor.unwrap() - expected).abs() < 1e-12);
    assert!(c.thermal_prefactor.unwrap() <= 1.0 + 1e-12);
}

#[test]
fn coarse_grained_echo_uses_distinct_signs() {
    let mut rng = RngStream::new(18, 0);
    let h = sample_gue(4, &mut rng).unwrap();
    let couplings = vec![sample_gue(4, &mut rng).unwrap()];
    let grid = TimeGrid::uniform(3.0, 7).unwrap();
    // With one channel the only distinct pair is (+, -).
    let c = coarse_grained_le(&h, &couplings, 0.2, 0.0, &grid, &mut rng).unwrap();
    let e = loschmidt_echo(&h, &couplings[0].scaled(0.2), &couplings[0].scaled(-0.2), 0.0, &grid).unwrap();
    let e2 = loschmidt_echo(&h, &couplings[0].scaled(-0.2), &couplings[0].scaled(0.2), 0.0, &grid).unwrap();
    for i in 0..grid.len() {
        assert!((c.mean[i] - e.mean[i]).abs() < 1e-12 || (c.mean[i] - e2.mean[i]).abs() < 1e-12);
    }
    let opts = LeOptions { fixed_channels: vec![0], ..LeOptions::default() };
    assert!(coarse_grained_le_with(&h, &couplings, 0.2, 0.0, &grid, &mut rng, SignPairing::Distinct, &opts).is_err());
}

#[test]
fn resampled_echo_is_bounded_and_trivial_without_noise() {
    let mut rng = RngStream::new(19, 0);
    let h = sample_gue(6, &mut rng).unwrap();
    let couplings: Vec<_> = (0..3).map(|_| sample_gue(6, &mut rng).unwrap()).collect();
    let grid = TimeGrid::uniform(2.0, 9).unwrap();
    let opts = LeOptions::default();
    let c = coarse_grained_le_with(&h, &couplings, 0.3, 0.0, &grid, &mut rng, SignPairing::Resampled, &opts).unwrap();
    assert!((c.mean[0] - 1.0).abs() < 1e-10);
    assert!(c.mean.iter().all(|&v| (-1e-12..=1.0 + 1e-12).contains(&v)));
    assert!(c.mean[8] < 0.99);
    let flat = coarse_grained_le_with(&h, &couplings, 0.0, 0.0, &grid, &mut rng, SignPairing::Resampled, &opts).unwrap();
    assert!(flat.mean.iter().all(|&v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn pure_state_monte_carlo_equals_reduced_purity() {
    let mut rng = RngStream::new(19, 0);
    let part = BipartitePartition::new(2, 4).unwrap();
    let h = sample_gue(8, &mut rng).unwrap();
    let dec = h.eig().unwrap();
    let norm = |v: Vec<c64>| {
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect::<Vec<_>>()
    };
    let pa = norm((0..2).map(|_| rng.complex_normal()).collect());
    let pb = norm((0..4).map(|_| rng.complex_normal()).collect());
    let psi: Vec<c64> = (0..8).map(|i| pa[i / 4] * pb[i % 4]).collect();
    let grid = TimeGrid::uniform(3.0, 6).unwrap();
    let mc = otoc_haar_mc(&dec, part, 0.0, &grid, 3000, &mut rng, &Regularization::PureState(psi.clone())).unwrap();
    for (i, &t) in grid.times().iter().enumerate() {
        let p = purity_reduced(&evolve_state(&dec, &psi, t).unwrap(), part).unwrap();
        assert!((mc.mean[i] - p).abs() < 4.0 * mc.stderr[i] + 1e-12, "t {t}: {} vs {p}", mc.mean[i]);
    }
}

#[test]
fn pure_state_otoc_is_product_of_expectations() {
    let mut rng = RngStream::new(20, 0);
    let h = sample_gue(4, &mut rng).unwrap();
    let dec = h.eig().unwrap();
    let a = sample_random_hermitian(4, &mut rng).unwrap();
    let b = sample_random_hermitian(4, &mut rng).unwrap();
    let mut psi: Vec<c64> = (0..4).map(|_| rng.complex_normal()).collect();
    let n = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    psi.iter_mut().for_each(|z| *z /= n);
    let grid = TimeGrid::new(vec![0.0, 1.0]).unwrap();
    let c = otoc_with(&dec, a.matrix(), b.matrix(), 0.0, &grid, &Regularization::PureState(psi.clone()), false).unwrap();
    for (i, &t) in grid.times().iter().enumerate() {
        let u = expm_i(h.matrix(), -t);
        let at = u.adjoint().matmul(a.matrix()).unwrap().matmul(&u).unwrap();
        let ex = |m: &ComplexMatrix| {
            let mv = m.apply(&psi).unwrap();
            psi.iter().zip(&mv).map(|(p, q)| p.conj() * q).sum::<c64>()
        };
        let expected = ex(&at).norm_sqr() * ex(b.matrix()).norm_sqr();
        assert!((c.mean[i] - expected).abs() < 1e-10);
    }
}

fn dense_syk_oracle(model: &scramble::models::SykModel) -> ComplexMatrix {
    let n = model.n_fermions();
    let ops: Vec<(ComplexMatrix, ComplexMatrix)> = (0..n).map(|s| jordan_wigner(n, s).unwrap()).collect();
    let dim = 1 << n;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in (i + 1)..n {
            let cc = ops[i].1.matmul(&ops[j].1).unwrap();
            for k in 0..n {
                for l in (k + 1)..n {
                    let aa = ops[k].0.matmul(&ops[l].0).unwrap();
                    let term = cc.matmul(&aa).unwrap().scale(model.coupling(i, j, k, l) * model.prefactor());
                    h = h.add(&term).unwrap();
                }
            }
        }
    }
    h
}

#[test]
fn syk_sector_blocks_match_dense_oracle() {
    let mut rng = RngStream::new(21, 0);
    let model = build_syk(6, 1.0, 0.4, (1, 4), &mut rng).unwrap();
    let dense = model.dense_hamiltonian().unwrap();
    let oracle = dense_syk_oracle(&model);
    assert!(dense.matrix().max_abs_diff(&oracle).unwrap() < 1e-12);
    let without = model.dense_hamiltonian_without_deformed().unwrap();
    // Couplings touching a probe site never appear in the reduced Hamiltonian.
    let (c1, _) = jordan_wigner(6, 1).unwrap();
    let n1 = c1.adjoint().matmul(&c1).unwrap();
    let comm = without.matrix().matmul(&n1).unwrap().sub(&n1.matmul(without.matrix()).unwrap()).unwrap();
    assert!(comm.max_abs() < 1e-12);
}

#[test]
fn syk_sector_otoc_matches_dense_otoc() {
    let mut rng = RngStream::new(22, 0);
    let model = build_syk(7, 1.0, 1.0, (0, 5), &mut rng).unwrap();
    let grid = TimeGrid::uniform(4.0, 9).unwrap();
    let dec = model.dense_hamiltonian().unwrap().eig().unwrap();
    let x = |s: usize| {
        let (c, cd) = jordan_wigner(7, s).unwrap();
        c.add(&cd).unwrap()
    };
    for beta in [0.0, 0.5] {
        let dense = otoc_regularized(&dec, &x(0), &x(5), beta, &grid, true).unwrap();
        let sector = syk_otoc(&model, beta, &grid, true).unwrap();
        for i in 0..grid.len() {
            assert!((dense.mean[i] - sector.mean[i]).abs() < 1e-8, "beta {beta} i {i}");
        }
        assert!((dense.scale - sector.scale).abs() < 1e-8);
    }
    let spec = SykSpectrum::new(&model).unwrap();
    let all = spec.eigenvalues();
    for (a, b) in all.iter().zip(dec.eigenvalues()) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn infinite_temperature_syk_starts_at_minus_one() {
    let mut rng = RngStream::new(23, 0);
    let model = build_syk(6, 1.0, 1.0, (0, 1), &mut rng).unwrap();
    let grid = TimeGrid::new(vec![0.0]).unwrap();
    let raw = syk_otoc(&model, 0.0, &grid, false).unwrap();
    assert!((raw.mean[0] + 1.0).abs() < 1e-12);
}
