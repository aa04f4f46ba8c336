//! Model Hamiltonians: the bipartite random-matrix model and complex-fermion SYK.

use crate::ensembles::{sample_gue, RngStream};
use crate::error::{Error, Result};
use crate::linalg::{c64, hs_inner, kron, BipartitePartition, ComplexMatrix, HermitianOperator};

/// `H = I_A ⊗ H_B + H_A ⊗ I_B + delta * sum_k V_A^k ⊗ V_B^k`.
#[derive(Clone, Debug)]
pub struct BipartiteModel {
    pub part: BipartitePartition,
    pub h_a: HermitianOperator,
    pub h_b: HermitianOperator,
    pub couplings_a: Vec<HermitianOperator>,
    pub couplings_b: Vec<HermitianOperator>,
    pub delta: f64,
    pub h_total: HermitianOperator,
}

impl BipartiteModel {
    pub fn from_parts(
        h_a: HermitianOperator,
        h_b: HermitianOperator,
        couplings_a: Vec<HermitianOperator>,
        couplings_b: Vec<HermitianOperator>,
        delta: f64,
    ) -> Result<Self> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta must be finite and >= 0, got {delta}")));
        }
        if couplings_a.len() != couplings_b.len() {
            return Err(Error::DimensionMismatch("coupling lists differ in length".into()));
        }
        let part = BipartitePartition::new(h_a.dim(), h_b.dim())?;
        if couplings_a.iter().any(|v| v.dim() != part.d_a) || couplings_b.iter().any(|v| v.dim() != part.d_b) {
            return Err(Error::DimensionMismatch("coupling operator dimensions".into()));
        }
        let mut model = Self {
            part,
            h_a,
            h_b,
            couplings_a,
            couplings_b,
            delta,
            h_total: HermitianOperator::zeros(part.dim()),
        };
        model.h_total = HermitianOperator::new(model.assemble()?)?;
        Ok(model)
    }

    /// Rebuilds the total Hamiltonian from its parts.
    pub fn assemble(&self) -> Result<ComplexMatrix> {
        let mut h = self.part.embed_b(self.h_b.matrix())?.add(&self.part.embed_a(self.h_a.matrix())?)?;
        for (va, vb) in self.couplings_a.iter().zip(&self.couplings_b) {
            h = h.add(&kron(va.matrix(), vb.matrix())?.scale_real(self.delta))?;
        }
        Ok(h)
    }
}

/// `{I, σx, σy, σz}`.
pub fn pauli_basis() -> [HermitianOperator; 4] {
    let z = c64::new(0.0, 0.0);
    let one = c64::new(1.0, 0.0);
    let i = c64::new(0.0, 1.0);
    let mk = |e: [c64; 4]| HermitianOperator::new(ComplexMatrix::from_row_major(2, 2, &e).unwrap()).unwrap();
    [mk([one, z, z, one]), mk([z, one, one, z]), mk([z, -i, i, z]), mk([one, z, z, -one])]
}

/// How the local Hamiltonian of the small subsystem is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LocalA {
    #[default]
    Gue,
    /// `H_A = 0`; the GUE draw is still consumed so that the remaining draws are unchanged.
    Zero,
}

/// Qubit coupled to a `d_b`-dimensional GUE bath through the four Pauli channels.
pub fn build_bipartite(d_b: usize, delta: f64, rng: &mut RngStream) -> Result<BipartiteModel> {
    build_bipartite_with(d_b, delta, LocalA::Gue, rng)
}

pub fn build_bipartite_with(d_b: usize, delta: f64, local_a: LocalA, rng: &mut RngStream) -> Result<BipartiteModel> {
    if d_b < 2 {
        return Err(Error::InvalidArgument(format!("d_B must be at least 2, got {d_b}")));
    }
    let h_a = sample_gue(2, rng)?;
    let h_a = match local_a {
        LocalA::Gue => h_a,
        LocalA::Zero => HermitianOperator::zeros(2),
    };
    let h_b = sample_gue(d_b, rng)?;
    let target = h_b.hs_norm();
    let mut couplings_b = Vec::with_capacity(4);
    for _ in 0..4 {
        let v = sample_gue(d_b, rng)?;
        let n = v.hs_norm();
        couplings_b.push(v.scaled(target / n));
    }
    BipartiteModel::from_parts(h_a, h_b, pauli_basis().to_vec(), couplings_b, delta)
}

/// Largest fermion count for which dense `2^N`-dimensional operators are formed.
pub const MAX_DENSE_FERMIONS: usize = 12;
/// Largest fermion count accepted by the sector-resolved SYK builder.
pub const MAX_SYK_FERMIONS: usize = 14;

fn occupied(state: u32, site: usize, n: usize) -> bool {
    state & (1u32 << (n - 1 - site)) != 0
}

/// Sign `(-1)^(number of occupied sites before site)`.
fn string_sign(state: u32, site: usize, n: usize) -> f64 {
    let bit = 1u32 << (n - 1 - site);
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let before = full & !((bit << 1).wrapping_sub(1));
    if (state & before).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub(crate) fn annihilate(state: u32, site: usize, n: usize) -> Option<(u32, f64)> {
    if !occupied(state, site, n) {
        return None;
    }
    Some((state ^ (1u32 << (n - 1 - site)), string_sign(state, site, n)))
}

pub(crate) fn create(state: u32, site: usize, n: usize) -> Option<(u32, f64)> {
    if occupied(state, site, n) {
        return None;
    }
    Some((state ^ (1u32 << (n - 1 - site)), string_sign(state, site, n)))
}

/// Dense Jordan–Wigner annihilator and creator for `site` among `n` modes;
/// site 0 is the leftmost tensor factor.
pub fn jordan_wigner(n: usize, site: usize) -> Result<(ComplexMatrix, ComplexMatrix)> {
    if n == 0 || n > MAX_DENSE_FERMIONS {
        return Err(Error::InvalidArgument(format!(
            "dense Jordan-Wigner operators support 1 <= N <= {MAX_DENSE_FERMIONS}, got {n}"
        )));
    }
    if site >= n {
        return Err(Error::InvalidArgument(format!("site {site} out of range for N = {n}")));
    }
    let dim = 1usize << n;
    let mut c = ComplexMatrix::zeros(dim, dim);
    for s in 0..dim as u32 {
        if let Some((t, sign)) = annihilate(s, site, n) {
            c.set(t as usize, s as usize, c64::new(sign, 0.0));
        }
    }
    let cd = c.adjoint();
    Ok((c, cd))
}

/// Basis states with a fixed particle number, in ascending bit order.
#[derive(Clone, Debug)]
pub struct Sector {
    pub n_particles: usize,
    pub states: Vec<u32>,
}

/// Hermitian block of the SYK Hamiltonian restricted to one particle-number sector.
#[derive(Clone, Debug)]
pub struct SectorBlock {
    pub sector: Sector,
    pub h: HermitianOperator,
}

pub(crate) fn sectors(n: usize) -> (Vec<Sector>, Vec<usize>) {
    let dim = 1usize << n;
    let mut out: Vec<Sector> = (0..=n).map(|k| Sector { n_particles: k, states: Vec::new() }).collect();
    let mut position = vec![0usize; dim];
    for s in 0..dim as u32 {
        let k = s.count_ones() as usize;
        position[s as usize] = out[k].states.len();
        out[k].states.push(s);
    }
    (out, position)
}

/// Which sites make a coupling count as deformed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeformedSites {
    /// Both probe sites (the default).
    Probes,
    /// Only the first probe site.
    FirstProbe,
    Custom(Vec<usize>),
}

/// Complex-fermion SYK model with quartic couplings `J_{ij;kl}`.
///
/// Independent couplings live on the Hermitian matrix `M` indexed by ordered
/// pairs `p = (i<j)`, `q = (k<l)`, with `J_{ij;kl} = M_pq` and the remaining
/// index orders fixed by antisymmetry. The undeformed draws are kept so that
/// the deformation factor can be reapplied at any `g`.
#[derive(Clone, Debug)]
pub struct SykModel {
    n_fermions: usize,
    variance_scale: f64,
    g: f64,
    probe_sites: (usize, usize),
    deformed: DeformedSites,
    pairs: Vec<(usize, usize)>,
    pair_index: Vec<usize>,
    pristine: Vec<c64>,
}

pub fn build_syk(
    n_fermions: usize,
    variance_scale: f64,
    g: f64,
    probe_sites: (usize, usize),
    rng: &mut RngStream,
) -> Result<SykModel> {
    if !(4..=MAX_SYK_FERMIONS).contains(&n_fermions) {
        return Err(Error::InvalidArgument(format!(
            "SYK requires 4 <= N <= {MAX_SYK_FERMIONS}, got {n_fermions}"
        )));
    }
    if !(variance_scale > 0.0) || !variance_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("variance scale must be positive, got {variance_scale}")));
    }
    check_g(g)?;
    let (a, b) = probe_sites;
    if a == b || a >= n_fermions || b >= n_fermions {
        return Err(Error::InvalidArgument(format!("invalid probe sites ({a}, {b}) for N = {n_fermions}")));
    }
    let n = n_fermions;
    let mut pairs = Vec::new();
    let mut pair_index = vec![usize::MAX; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            pair_index[i * n + j] = pairs.len();
            pairs.push((i, j));
        }
    }
    let np = pairs.len();
    let mut m = vec![c64::new(0.0, 0.0); np * np];
    let sd_diag = variance_scale.sqrt();
    let sd_off = (variance_scale / 2.0).sqrt();
    for p in 0..np {
        m[p * np + p] = c64::new(sd_diag * rng.normal(), 0.0);
        for q in (p + 1)..np {
            let re = rng.normal();
            let im = rng.normal();
            let v = c64::new(re, im) * sd_off;
            m[p * np + q] = v;
            m[q * np + p] = v.conj();
        }
    }
    Ok(SykModel {
        n_fermions,
        variance_scale,
        g,
        probe_sites,
        deformed: DeformedSites::Probes,
        pairs,
        pair_index,
        pristine: m,
    })
}

fn check_g(g: f64) -> Result<()> {
    if !(g > 0.0 && g <= 1.0) {
        return Err(Error::InvalidArgument(format!("g must lie in (0, 1], got {g}")));
    }
    Ok(())
}

/// Same draws, deformation factor reapplied at `g`.
pub fn deform_syk(model: &SykModel, g: f64) -> Result<SykModel> {
    check_g(g)?;
    let mut out = model.clone();
    out.g = g;
    Ok(out)
}

impl SykModel {
    pub fn n_fermions(&self) -> usize {
        self.n_fermions
    }

    pub fn variance_scale(&self) -> f64 {
        self.variance_scale
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn probe_sites(&self) -> (usize, usize) {
        self.probe_sites
    }

    pub fn deformed_sites(&self) -> Vec<usize> {
        match &self.deformed {
            DeformedSites::Probes => vec![self.probe_sites.0, self.probe_sites.1],
            DeformedSites::FirstProbe => vec![self.probe_sites.0],
            DeformedSites::Custom(v) => v.clone(),
        }
    }

    pub fn with_deformed_sites(mut self, deformed: DeformedSites) -> Result<Self> {
        if let DeformedSites::Custom(v) = &deformed {
            if v.iter().any(|&s| s >= self.n_fermions) {
                return Err(Error::InvalidArgument("deformed site out of range".into()));
            }
        }
        self.deformed = deformed;
        Ok(self)
    }

    /// Overall prefactor `4 / (2N)^{3/2}` of the restricted pair sum.
    pub fn prefactor(&self) -> f64 {
        4.0 / (2.0 * self.n_fermions as f64).powf(1.5)
    }

    fn pair_sign(&self, i: usize, j: usize) -> Option<(usize, f64)> {
        let n = self.n_fermions;
        if i == j || i >= n || j >= n {
            return None;
        }
        if i < j {
            Some((self.pair_index[i * n + j], 1.0))
        } else {
            Some((self.pair_index[j * n + i], -1.0))
        }
    }

    fn factor(&self, i: usize, j: usize, k: usize, l: usize, g: f64) -> f64 {
        if g == 1.0 {
            return 1.0;
        }
        let sites = self.deformed_sites();
        if [i, j, k, l].iter().any(|s| sites.contains(s)) {
            g
        } else {
            1.0
        }
    }

    /// Undeformed `J_{ij;kl}`.
    pub fn pristine_coupling(&self, i: usize, j: usize, k: usize, l: usize) -> c64 {
        match (self.pair_sign(i, j), self.pair_sign(k, l)) {
            (Some((p, s1)), Some((q, s2))) => self.pristine[p * self.pairs.len() + q] * (s1 * s2),
            _ => c64::new(0.0, 0.0),
        }
    }

    /// `J_{ij;kl}` including the deformation factor.
    pub fn coupling(&self, i: usize, j: usize, k: usize, l: usize) -> c64 {
        self.pristine_coupling(i, j, k, l) * self.factor(i, j, k, l, self.g)
    }

    /// Hamiltonian blocks for each particle-number sector, optionally keeping
    /// only the couplings selected by `keep(i, j, k, l)`.
    fn blocks_filtered(&self, keep: impl Fn(usize, usize, usize, usize) -> bool) -> Result<Vec<SectorBlock>> {
        let n = self.n_fermions;
        let (secs, position) = sectors(n);
        let pref = self.prefactor();
        let np = self.pairs.len();
        let mut out = Vec::with_capacity(secs.len());
        for sec in secs {
            let d = sec.states.len();
            let mut h = ComplexMatrix::zeros(d, d);
            for (col, &s) in sec.states.iter().enumerate() {
                for (q, &(k, l)) in self.pairs.iter().enumerate() {
                    let Some((s1, g1)) = annihilate(s, l, n) else { continue };
                    let Some((s2, g2)) = annihilate(s1, k, n) else { continue };
                    for (p, &(i, j)) in self.pairs.iter().enumerate() {
                        let Some((s3, g3)) = create(s2, j, n) else { continue };
                        let Some((s4, g4)) = create(s3, i, n) else { continue };
                        if !keep(i, j, k, l) {
                            continue;
                        }
                        let amp = self.pristine[p * np + q] * (pref * g1 * g2 * g3 * g4 * self.factor(i, j, k, l, self.g));
                        let row = position[s4 as usize];
                        h.set(row, col, h.get(row, col) + amp);
                    }
                }
            }
            out.push(SectorBlock { sector: sec, h: HermitianOperator::new(h)? });
        }
        Ok(out)
    }

    pub fn sector_blocks(&self) -> Result<Vec<SectorBlock>> {
        self.blocks_filtered(|_, _, _, _| true)
    }

    fn assemble_dense(&self, blocks: &[SectorBlock]) -> Result<HermitianOperator> {
        let n = self.n_fermions;
        if n > MAX_DENSE_FERMIONS {
            return Err(Error::InvalidArgument(format!(
                "dense SYK Hamiltonian supports N <= {MAX_DENSE_FERMIONS}, got {n}"
            )));
        }
        let dim = 1usize << n;
        let mut h = ComplexMatrix::zeros(dim, dim);
        for b in blocks {
            for (r, &sr) in b.sector.states.iter().enumerate() {
                for (c, &sc) in b.sector.states.iter().enumerate() {
                    h.set(sr as usize, sc as usize, b.h.matrix().get(r, c));
                }
            }
        }
        HermitianOperator::new(h)
    }

    /// Full `2^N`-dimensional Hamiltonian (N <= [`MAX_DENSE_FERMIONS`]).
    pub fn dense_hamiltonian(&self) -> Result<HermitianOperator> {
        self.assemble_dense(&self.sector_blocks()?)
    }

    /// Dense Hamiltonian built only from couplings that avoid the deformed sites.
    pub fn dense_hamiltonian_without_deformed(&self) -> Result<HermitianOperator> {
        let sites = self.deformed_sites();
        let blocks = self.blocks_filtered(|i, j, k, l| ![i, j, k, l].iter().any(|s| sites.contains(s)))?;
        self.assemble_dense(&blocks)
    }

    /// Blocks of `c_site^†` mapping sector `k` to sector `k + 1`; entry `k` has
    /// shape `dim(k + 1) x dim(k)`.
    pub fn creation_blocks(&self, site: usize) -> Result<Vec<ComplexMatrix>> {
        let n = self.n_fermions;
        if site >= n {
            return Err(Error::InvalidArgument(format!("site {site} out of range")));
        }
        let (secs, position) = sectors(n);
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let (lo, hi) = (&secs[k], &secs[k + 1]);
            let mut m = ComplexMatrix::zeros(hi.states.len(), lo.states.len());
            for (col, &s) in lo.states.iter().enumerate() {
                if let Some((t, sign)) = create(s, site, n) {
                    m.set(position[t as usize], col, c64::new(sign, 0.0));
                }
            }
            out.push(m);
        }
        Ok(out)
    }
}

/// Checks `Tr(V_A^i V_A^j) = d_A δ_ij` for a list of couplings.
pub fn coupling_orthonormality_defect(couplings: &[HermitianOperator]) -> Result<f64> {
    let mut worst = 0.0f64;
    for (i, a) in couplings.iter().enumerate() {
        for (j, b) in couplings.iter().enumerate() {
            let expected = if i == j { a.dim() as f64 } else { 0.0 };
            let v = hs_inner(a.matrix(), b.matrix())?;
            worst = worst.max((v - c64::new(expected, 0.0)).norm());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pauli_orthonormality() {
        assert_eq!(coupling_orthonormality_defect(&pauli_basis()).unwrap(), 0.0);
    }

    #[test]
    fn single_mode_annihilator() {
        let (c, cd) = jordan_wigner(1, 0).unwrap();
        let expected = ComplexMatrix::from_real_row_major(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(c, expected);
        assert_eq!(cd, expected.transpose());
    }

    #[test]
    fn jordan_wigner_bounds() {
        assert!(jordan_wigner(MAX_DENSE_FERMIONS + 1, 0).is_err());
        assert!(jordan_wigner(3, 3).is_err());
    }

    #[test]
    fn build_syk_validates() {
        let mut rng = RngStream::new(1, 0);
        assert!(build_syk(3, 1.0, 1.0, (0, 1), &mut rng).is_err());
        assert!(build_syk(6, 1.0, 0.0, (0, 1), &mut rng).is_err());
        assert!(build_syk(6, 1.0, 1.0, (2, 2), &mut rng).is_err());
        assert!(build_syk(6, 1.0, 1.0, (0, 6), &mut rng).is_err());
        assert!(build_syk(6, -1.0, 1.0, (0, 1), &mut rng).is_err());
    }

    #[test]
    fn coupling_antisymmetry_and_hermiticity() {
        let mut rng = RngStream::new(5, 0);
        let m = build_syk(5, 1.0, 0.5, (0, 3), &mut rng).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    for l in 0..5 {
                        let v = m.coupling(i, j, k, l);
                        assert_eq!(v, -m.coupling(j, i, k, l));
                        assert_eq!(v, -m.coupling(i, j, l, k));
                        assert!((v - m.coupling(l, k, j, i).conj()).norm() < 1e-15);
                    }
                }
            }
        }
    }
}
