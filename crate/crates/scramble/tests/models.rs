use scramble::ensembles::RngStream;
use scramble::linalg::*;
use scramble::models::*;

#[test]
fn bipartite_hamiltonian_matches_elementwise_sum() {
    let m = build_bipartite(3, 0.3, &mut RngStream::new(5, 0)).unwrap();
    let (da, db) = (m.part.d_a, m.part.d_b);
    let h = m.h_total.matrix();
    for a in 0..da {
        for b in 0..db {
            for c in 0..da {
                for d in 0..db {
                    let mut want = c64::new(0.0, 0.0);
                    if b == d {
                        want += m.h_a.matrix().get(a, c);
                    }
                    if a == c {
                        want += m.h_b.matrix().get(b, d);
                    }
                    for (va, vb) in m.couplings_a.iter().zip(&m.couplings_b) {
                        want += va.matrix().get(a, c) * vb.matrix().get(b, d) * m.delta;
                    }
                    assert!((h.get(a * db + b, c * db + d) - want).norm() < 1e-13);
                }
            }
        }
    }
}

#[test]
fn bath_couplings_share_the_bath_norm() {
    let m = build_bipartite(16, 0.1, &mut RngStream::new(8, 2)).unwrap();
    for v in &m.couplings_b {
        assert!((v.hs_norm() - m.h_b.hs_norm()).abs() < 1e-10);
    }
    assert_eq!(m.couplings_a.len(), 4);
}

#[test]
fn zero_local_term_keeps_the_remaining_draws() {
    let a = build_bipartite_with(8, 0.1, LocalA::Gue, &mut RngStream::new(3, 1)).unwrap();
    let b = build_bipartite_with(8, 0.1, LocalA::Zero, &mut RngStream::new(3, 1)).unwrap();
    assert_eq!(b.h_a.matrix().max_abs(), 0.0);
    assert_eq!(a.h_b, b.h_b);
    assert_eq!(a.couplings_b, b.couplings_b);
}

#[test]
fn syk_sectors_reproduce_the_dense_spectrum() {
    let model = build_syk(6, 1.0, 0.4, (0, 3), &mut RngStream::new(2, 0)).unwrap();
    let mut sector_eigs = Vec::new();
    for block in model.sector_blocks().unwrap() {
        sector_eigs.extend_from_slice(block.h.eig().unwrap().eigenvalues());
    }
    sector_eigs.sort_by(f64::total_cmp);
    let dense = model.dense_hamiltonian().unwrap().eig().unwrap();
    for (x, y) in sector_eigs.iter().zip(dense.eigenvalues()) {
        assert!((x - y).abs() < 1e-10);
    }
    assert_eq!(sector_eigs.len(), 64);
}

#[test]
fn deformation_scales_only_touching_couplings() {
    let model = build_syk(6, 1.0, 1.0, (0, 1), &mut RngStream::new(4, 0)).unwrap();
    let g = 0.25;
    let d = deform_syk(&model, g).unwrap();
    let n = 6;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    let touches = [i, j, k, l].iter().any(|s| *s == 0 || *s == 1);
                    let f = if touches { g } else { 1.0 };
                    assert!((d.coupling(i, j, k, l) - model.coupling(i, j, k, l) * f).norm() < 1e-15);
                }
            }
        }
    }
    let back = deform_syk(&d, 1.0).unwrap();
    assert_eq!(back.dense_hamiltonian().unwrap(), model.dense_hamiltonian().unwrap());
}

#[test]
fn syk_conserves_particle_number() {
    let model = build_syk(5, 1.0, 1.0, (0, 1), &mut RngStream::new(9, 0)).unwrap();
    let h = model.dense_hamiltonian().unwrap();
    let mut number = ComplexMatrix::zeros(32, 32);
    for s in 0..5 {
        let (c, cd) = jordan_wigner(5, s).unwrap();
        number = number.add(&cd.matmul(&c).unwrap()).unwrap();
    }
    let comm = h.matrix().matmul(&number).unwrap().sub(&number.matmul(h.matrix()).unwrap()).unwrap();
    assert!(comm.max_abs() < 1e-12);
}
