//! Seeded random matrices in the three symmetry classes. Used by the
//! verification suite and tests; everything is deterministic given the RNG.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::matrices::{c, from_real, identity, symmetrize, zeros, C64, CMatrix, DualityForm, RMatrix};
use crate::symplectic::{CanonicalForms, FieldTag};

pub type Seeded = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Seeded {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_real(l: usize, rng: &mut Seeded) -> RMatrix {
    RMatrix::from_fn(l, l, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn random_complex(l: usize, rng: &mut Seeded) -> CMatrix {
    CMatrix::from_fn(l, l, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
}

/// Random selfadjoint matrix carrying the class symmetry
/// (real symmetric / hermitian / hermitian self-dual).
pub fn random_selfadjoint(l: usize, class: FieldTag, rng: &mut Seeded) -> CMatrix {
    match class {
        FieldTag::Real => {
            let a = random_real(l, rng);
            from_real(&((&a + a.transpose()).scale(0.5)))
        }
        FieldTag::Complex => symmetrize(&random_complex(l, rng)),
        FieldTag::Quaternion => {
            let form = DualityForm::new(l).expect("quaternion class needs even L");
            form.project(&symmetrize(&random_complex(l, rng)))
        }
    }
}

/// Random positive definite matrix of the class, eigenvalues >= floor.
pub fn random_positive_definite(l: usize, class: FieldTag, floor: f64, rng: &mut Seeded) -> CMatrix {
    let a = match class {
        FieldTag::Real => from_real(&random_real(l, rng)),
        FieldTag::Complex => random_complex(l, rng),
        FieldTag::Quaternion => random_complex(l, rng),
    };
    let mut p = &a * a.adjoint() + identity(l).scale(floor);
    if matches!(class, FieldTag::Quaternion) {
        let form = DualityForm::new(l).expect("even L");
        p = form.project(&p);
    }
    p.scale(1.0 / l as f64) + identity(l).scale(floor)
}

/// Haar-ish random unitary via QR of a complex Gaussian-like matrix.
pub fn random_unitary(l: usize, rng: &mut Seeded) -> CMatrix {
    let a = random_complex(l, rng);
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    // normalize column phases so the distribution has no R-diagonal bias
    for k in 0..l {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let phase = d / c(d.norm());
            let col = q.column(k) * phase;
            q.set_column(k, &col);
        }
    }
    q
}

/// Random symmetric unitary (the real-class Pruefer state space): W W^t.
pub fn random_symmetric_unitary(l: usize, rng: &mut Seeded) -> CMatrix {
    let w = random_unitary(l, rng);
    &w * w.transpose()
}

/// Random self-dual unitary: W (I* W^t I).
pub fn random_selfdual_unitary(l: usize, rng: &mut Seeded) -> CMatrix {
    let form = DualityForm::new(l).expect("even L");
    let w = random_unitary(l, rng);
    &w * form.dual(&w)
}

pub fn random_class_unitary(l: usize, class: FieldTag, rng: &mut Seeded) -> CMatrix {
    match class {
        FieldTag::Complex => random_unitary(l, rng),
        FieldTag::Real => random_symmetric_unitary(l, rng),
        FieldTag::Quaternion => random_selfdual_unitary(l, rng),
    }
}

/// The L-doubled duality form diag(I, I) entering the quaternionic
/// symplectic Lie-algebra symmetry.
fn doubled_duality(l: usize) -> CMatrix {
    let form = DualityForm::new(l).expect("even L");
    let mut m = zeros(2 * l, 2 * l);
    m.view_mut((0, 0), (l, l)).copy_from(form.matrix());
    m.view_mut((l, l), (l, l)).copy_from(form.matrix());
    m
}

/// Random symplectic matrix exp(J H) with H selfadjoint carrying the class
/// symmetry; `scale` controls distance from the identity.
pub fn random_symplectic(l: usize, class: FieldTag, scale: f64, rng: &mut Seeded) -> CMatrix {
    let forms = CanonicalForms::new(l);
    let mut h = match class {
        FieldTag::Real => {
            let a = random_real(2 * l, rng);
            from_real(&((&a + a.transpose()).scale(0.5)))
        }
        _ => symmetrize(&random_complex(2 * l, rng)),
    };
    if matches!(class, FieldTag::Quaternion) {
        let ii = doubled_duality(l);
        // project onto {H : H = I2* H^t I2}; preserves hermiticity
        h = (&h + ii.adjoint() * h.transpose() * &ii).scale(0.5);
    }
    (forms.j() * h.scale(scale)).exp()
}

/// Random generalized Lorentz matrix C T C* from a random symplectic T.
pub fn random_lorentz(l: usize, class: FieldTag, scale: f64, rng: &mut Seeded) -> CMatrix {
    let forms = CanonicalForms::new(l);
    let t = random_symplectic(l, class, scale, rng);
    forms.cayley() * t * forms.cayley().adjoint()
}
