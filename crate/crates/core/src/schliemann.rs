//! Concurrence of two fermions in four modes through the dualisation map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{Sector, SectorBasis, SectorOperator};
use crate::linalg::{self, CMat, CVec, HermitianEigen, C64};
use crate::states::DensityState;

/// Real signed permutation `U_D` on the `(4, 2)` sector; the antilinear dual
/// of a vector is `U_D · conj(v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualisationMap {
    matrix: CMat,
}

impl DualisationMap {
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn dual_vector(&self, v: &CVec) -> CVec {
        &self.matrix * v.map(|z| z.conj())
    }
}

fn permutation_sign(p: &[usize]) -> f64 {
    let mut s = 1.0;
    for i in 0..p.len() {
        for j in i + 1..p.len() {
            if p[i] > p[j] {
                s = -s;
            }
        }
    }
    s
}

/// Pair `{i, j}` goes to `ε(i, j, k, l) · {k, l}` with `{k, l}` the complement.
pub fn dualisation_matrix() -> DualisationMap {
    let basis = SectorBasis::new(Sector { modes: 4, particles: 2 });
    let mut m = CMat::zeros(6, 6);
    for (col, &mask) in basis.states().iter().enumerate() {
        let comp = !mask & 0b1111;
        let mut order = basis.occupied(col);
        order.extend((0..4).filter(|b| comp & (1 << b) != 0));
        let row = basis.index_of(comp).expect("complement lies in the sector");
        m[(row, col)] = C64::new(permutation_sign(&order), 0.0);
    }
    DualisationMap { matrix: m }
}

fn check_sector(rho: &DensityState) -> Result<()> {
    let s = rho.sector();
    if s.modes != 4 || s.particles != 2 {
        return Err(Error::WrongSector {
            expected_modes: 4,
            expected_particles: 2,
            modes: s.modes,
            particles: s.particles,
        });
    }
    Ok(())
}

/// `ρ̃ = U_D conj(ρ) U_D†`.
pub fn dual_state(rho: &DensityState) -> Result<SectorOperator> {
    check_sector(rho)?;
    let u = dualisation_matrix();
    let conj = rho.matrix().map(|z| z.conj());
    let m = linalg::mul_adj_b(&linalg::mul(u.matrix(), &conj), u.matrix());
    SectorOperator::hermitian(rho.sector(), m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConcurrenceMode {
    /// `λ_i` are square roots of the eigenvalues of `ρ ρ̃`.
    #[default]
    Eigenvalues,
    /// `λ_i` are the singular values of `ρ ρ̃`.
    SingularValues,
}

impl std::str::FromStr for ConcurrenceMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "eigen" | "eigenvalues" => Ok(Self::Eigenvalues),
            "singular" | "singular-values" => Ok(Self::SingularValues),
            o => Err(format!("unknown concurrence mode '{o}' (expected eigen or singular)")),
        }
    }
}

pub fn concurrence(rho: &DensityState) -> Result<f64> {
    concurrence_with(rho, ConcurrenceMode::Eigenvalues)
}

/// `max(0, λ_max − Σ_rest λ)`, clamped to `[0, 1]`.
pub fn concurrence_with(rho: &DensityState, mode: ConcurrenceMode) -> Result<f64> {
    let tilde = dual_state(rho)?;
    let mut lambdas: Vec<f64> = match mode {
        ConcurrenceMode::Eigenvalues => {
            // √ρ ρ̃ √ρ is Hermitian and shares its spectrum with ρ ρ̃
            let root = HermitianEigen::new(rho.matrix()).map(|v| v.max(0.0).sqrt());
            let r = linalg::mul(&linalg::mul(&root, tilde.matrix()), &root);
            let ev = HermitianEigen::new(&r).values;
            if let Some(&min) = ev.first() {
                if min < -1e-8 {
                    return Err(Error::Numerical(format!("negative eigenvalue {min:e} of ρρ̃")));
                }
            }
            ev.into_iter().map(|v| v.max(0.0).sqrt()).collect()
        }
        ConcurrenceMode::SingularValues => {
            let r = linalg::mul(rho.matrix(), tilde.matrix());
            r.singular_values().iter().copied().collect()
        }
    };
    lambdas.sort_by(|a, b| b.total_cmp(a));
    let c = lambdas[0] - lambdas[1..].iter().sum::<f64>();
    Ok(c.clamp(0.0, 1.0))
}

/// `|<ψ̃|ψ>|` for a normalized pure state in the `(4, 2)` sector.
pub fn pure_concurrence(psi: &CVec) -> Result<f64> {
    if psi.len() != 6 {
        return Err(Error::InvalidInput(format!("expected a 6-component vector, got {}", psi.len())));
    }
    let n = psi.norm();
    let psi = psi / C64::new(n, 0.0);
    Ok(dualisation_matrix().dual_vector(&psi).dotc(&psi).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::SlaterSpec;
    use crate::states::{max_entangled, maximally_mixed, random_mixed, slater_projector};

    #[test]
    fn sign_convention() {
        let u = dualisation_matrix();
        let b = SectorBasis::new(Sector { modes: 4, particles: 2 });
        let at = |from: u32, to: u32| u.matrix()[(b.index_of(to).unwrap(), b.index_of(from).unwrap())].re;
        assert_eq!(at(0b0011, 0b1100), 1.0);
        assert_eq!(at(0b0101, 0b1010), -1.0);
        let sq = u.matrix() * u.matrix();
        assert!(linalg::max_abs_diff(&sq, &CMat::identity(6, 6)) == 0.0);
    }

    #[test]
    fn singlet_is_self_dual_with_unit_concurrence() {
        let rho = max_entangled(2).unwrap();
        let t = dual_state(&rho).unwrap();
        assert!(linalg::max_abs_diff(t.matrix(), rho.matrix()) < 1e-15);
        assert!((concurrence(&rho).unwrap() - 1.0).abs() < 1e-12);
        assert!((concurrence_with(&rho, ConcurrenceMode::SingularValues).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slater_has_zero_concurrence_and_complement_dual() {
        let rho = slater_projector(&SlaterSpec::from_modes(4, &[0, 1]).unwrap()).unwrap();
        let t = dual_state(&rho).unwrap();
        assert!((t.matrix()[(5, 5)].re - 1.0).abs() < 1e-15);
        assert_eq!(concurrence(&rho).unwrap(), 0.0);
        let mixed = maximally_mixed(Sector { modes: 4, particles: 2 });
        assert!(linalg::max_abs_diff(dual_state(&mixed).unwrap().matrix(), mixed.matrix()) < 1e-15);
        assert_eq!(concurrence(&mixed).unwrap(), 0.0);
    }

    #[test]
    fn wrong_sector_is_reported() {
        let rho = random_mixed(5, 2, 3, 0).unwrap();
        assert!(matches!(concurrence(&rho), Err(Error::WrongSector { .. })));
    }
}
