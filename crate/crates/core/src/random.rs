//! Seeded random test objects.
//!
//! States are drawn as Gaussian Hermitian matrices, projected onto the PSD
//! cone and normalized to unit trace. No particular measure is implied.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{c, cr, project_psd, CMatrix, CVector, MultipartyOperator, PartyLayout};

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Hermitian matrix with i.i.d. Gaussian entries (GUE-like).
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(n, n, |_, _| c(gauss(rng), gauss(rng)));
    (&g + g.adjoint()) * cr(0.5)
}

pub fn random_state_matrix<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    loop {
        let psd = project_psd(&random_hermitian(n, rng)).expect("Hermitian by construction");
        let tr = psd.trace().re;
        if tr > 1e-8 {
            return psd * cr(1.0 / tr);
        }
    }
}

pub fn random_state<R: Rng + ?Sized>(layout: &PartyLayout, rng: &mut R) -> MultipartyOperator {
    let m = random_state_matrix(layout.total_dim(), rng);
    MultipartyOperator::new(layout.clone(), m).expect("dimension matches layout")
}

/// Tensor product of independent random states, one per party.
pub fn random_product_state<R: Rng + ?Sized>(layout: &PartyLayout, rng: &mut R) -> MultipartyOperator {
    let m = (0..layout.n_parties()).fold(CMatrix::identity(1, 1), |acc, p| {
        acc.kronecker(&random_state_matrix(layout.party_dim(p), rng))
    });
    MultipartyOperator::new(layout.clone(), m).expect("dimension matches layout")
}

pub fn random_ket<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CVector {
    let v = CVector::from_fn(n, |_, _| c(gauss(rng), gauss(rng)));
    let norm = v.norm();
    v / cr(norm)
}

pub fn random_unit_vector3<R: Rng + ?Sized>(rng: &mut R) -> [f64; 3] {
    loop {
        let v = [gauss(rng), gauss(rng), gauss(rng)];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-6 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}
