//! Symplectic machinery: the fixed forms J, G, C, script-I, group membership
//! tests, the Moebius action, Lagrangian frames with the stereographic
//! projection onto unitaries, Wronskian intersection tests and the winding
//! bookkeeping behind the intersection (Bott) index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrices::{
    c, ci, identity, kernel_dim, max_norm, singular_values, smallest_singular_value, try_inverse,
    zeros, CMatrix, DualityForm,
};

/// Symmetry class of a model or frame: plain complex, real (odd-spin time
/// reversal) or quaternion self-dual (even-spin time reversal).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldTag {
    Complex,
    Real,
    Quaternion,
}

impl FieldTag {
    pub fn requires_even(self) -> bool {
        matches!(self, FieldTag::Quaternion)
    }
}

impl std::fmt::Display for FieldTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldTag::Complex => write!(f, "complex"),
            FieldTag::Real => write!(f, "real"),
            FieldTag::Quaternion => write!(f, "quaternion"),
        }
    }
}

/// The fixed 2L x 2L matrices: symplectic form J, Lorentz form G, Cayley
/// transform C and (even L) the self-duality transform script-I.
#[derive(Debug, Clone)]
pub struct CanonicalForms {
    l: usize,
    j: CMatrix,
    g: CMatrix,
    cayley: CMatrix,
    script_i: Option<CMatrix>,
    duality: Option<DualityForm>,
}

impl CanonicalForms {
    pub fn new(l: usize) -> Self {
        Self::build(l, false)
    }

    /// Negative control for the verification suite: one sign of J flipped.
    pub fn poisoned(l: usize) -> Self {
        Self::build(l, true)
    }

    fn build(l: usize, poison: bool) -> Self {
        let mut j = zeros(2 * l, 2 * l);
        let mut g = zeros(2 * l, 2 * l);
        let mut cayley = zeros(2 * l, 2 * l);
        let s = 1.0 / 2.0f64.sqrt();
        for k in 0..l {
            j[(k, l + k)] = c(-1.0);
            j[(l + k, k)] = c(1.0);
            g[(k, k)] = c(1.0);
            g[(l + k, l + k)] = c(-1.0);
            cayley[(k, k)] = c(s);
            cayley[(k, l + k)] = ci(-s);
            cayley[(l + k, k)] = c(s);
            cayley[(l + k, l + k)] = ci(s);
        }
        if poison {
            j[(0, l)] = c(1.0);
        }
        let (script_i, duality) = if l % 2 == 0 && l > 0 {
            let d = DualityForm::new(l).expect("even L");
            let mut si = zeros(2 * l, 2 * l);
            si.view_mut((0, l), (l, l)).copy_from(&(-d.matrix()));
            si.view_mut((l, 0), (l, l)).copy_from(d.matrix());
            (Some(si), Some(d))
        } else {
            (None, None)
        };
        Self { l, j, g, cayley, script_i, duality }
    }

    pub fn block_size(&self) -> usize {
        self.l
    }

    pub fn j(&self) -> &CMatrix {
        &self.j
    }

    pub fn g(&self) -> &CMatrix {
        &self.g
    }

    pub fn cayley(&self) -> &CMatrix {
        &self.cayley
    }

    pub fn script_i(&self) -> Result<&CMatrix> {
        self.script_i.as_ref().ok_or(Error::OddDimension(self.l))
    }

    pub fn duality(&self) -> Result<&DualityForm> {
        self.duality.as_ref().ok_or(Error::OddDimension(self.l))
    }
}

fn ensure_doubled(t: &CMatrix) -> Result<usize> {
    if t.nrows() != t.ncols() || t.nrows() % 2 != 0 || t.nrows() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "expected 2Lx2L matrix, got {}x{}",
            t.nrows(),
            t.ncols()
        )));
    }
    Ok(t.nrows() / 2)
}

pub fn blocks(t: &CMatrix) -> (CMatrix, CMatrix, CMatrix, CMatrix) {
    let l = t.nrows() / 2;
    (
        t.view((0, 0), (l, l)).into_owned(),
        t.view((0, l), (l, l)).into_owned(),
        t.view((l, 0), (l, l)).into_owned(),
        t.view((l, l), (l, l)).into_owned(),
    )
}

pub fn from_blocks(a: &CMatrix, b: &CMatrix, cc: &CMatrix, d: &CMatrix) -> CMatrix {
    let l = a.nrows();
    let mut t = zeros(2 * l, 2 * l);
    t.view_mut((0, 0), (l, l)).copy_from(a);
    t.view_mut((0, l), (l, l)).copy_from(b);
    t.view_mut((l, 0), (l, l)).copy_from(cc);
    t.view_mut((l, l), (l, l)).copy_from(d);
    t
}

pub fn is_symplectic_with(forms: &CanonicalForms, t: &CMatrix, class: FieldTag, tol: f64) -> Result<bool> {
    let l = ensure_doubled(t)?;
    if l != forms.block_size() {
        return Err(Error::DimensionMismatch("forms dimension mismatch".into()));
    }
    let j = forms.j();
    if max_norm(&(t.adjoint() * j * t - j)) > tol {
        return Ok(false);
    }
    match class {
        FieldTag::Complex => Ok(true),
        FieldTag::Real => Ok(max_norm(&(t.transpose() * j * t - j)) <= tol),
        FieldTag::Quaternion => {
            let si = forms.script_i()?;
            Ok(max_norm(&(t.transpose() * si * t - si)) <= tol)
        }
    }
}

/// Membership in SP(2L, K): T* J T = J plus the class symmetry.
pub fn is_symplectic(t: &CMatrix, class: FieldTag, tol: f64) -> Result<bool> {
    let l = ensure_doubled(t)?;
    is_symplectic_with(&CanonicalForms::new(l), t, class, tol)
}

pub fn is_lorentz_with(forms: &CanonicalForms, t: &CMatrix, class: FieldTag, tol: f64) -> Result<bool> {
    let l = ensure_doubled(t)?;
    if l != forms.block_size() {
        return Err(Error::DimensionMismatch("forms dimension mismatch".into()));
    }
    let g = forms.g();
    if max_norm(&(t.adjoint() * g * t - g)) > tol {
        return Ok(false);
    }
    let (a, b, cc, d) = blocks(t);
    match class {
        FieldTag::Complex => Ok(true),
        FieldTag::Real => {
            Ok(max_norm(&(&cc - b.conjugate())) <= tol && max_norm(&(&d - a.conjugate())) <= tol)
        }
        FieldTag::Quaternion => {
            let dual = forms.duality()?;
            Ok(max_norm(&(&cc - dual.conj_dual(&b))) <= tol
                && max_norm(&(&d - dual.conj_dual(&a))) <= tol)
        }
    }
}

/// Membership in U(L, L, K) = C SP(2L, K) C*.
pub fn is_lorentz(t: &CMatrix, class: FieldTag, tol: f64) -> Result<bool> {
    let l = ensure_doubled(t)?;
    is_lorentz_with(&CanonicalForms::new(l), t, class, tol)
}

const MOEBIUS_REL_TOL: f64 = 1e-12;

/// Moebius action T . Z = (AZ + B)(CZ + D)^-1.
pub fn moebius(t: &CMatrix, z: &CMatrix) -> Result<CMatrix> {
    let l = ensure_doubled(t)?;
    if z.nrows() != l || z.ncols() != l {
        return Err(Error::DimensionMismatch(format!(
            "Z must be {l}x{l}, got {}x{}",
            z.nrows(),
            z.ncols()
        )));
    }
    let (a, b, cc, d) = blocks(t);
    let den = &cc * z + &d;
    let sv = singular_values(&den);
    let smax = sv.first().copied().unwrap_or(0.0);
    let smin = sv.last().copied().unwrap_or(0.0);
    if smax == 0.0 || smin <= MOEBIUS_REL_TOL * smax {
        return Err(Error::MoebiusSingular { sigma_min: smin });
    }
    let num = &a * z + &b;
    Ok(num * try_inverse(&den)?)
}

/// A Lagrangian plane represented by a 2L x L full-rank frame.
#[derive(Debug, Clone)]
pub struct LagrangianFrame {
    phi: CMatrix,
    class: FieldTag,
}

impl LagrangianFrame {
    /// Validates rank and isotropy (plus the class symmetry) before wrapping.
    pub fn new(phi: CMatrix, class: FieldTag, tol: f64) -> Result<Self> {
        if phi.nrows() != 2 * phi.ncols() || phi.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "frame must be 2LxL, got {}x{}",
                phi.nrows(),
                phi.ncols()
            )));
        }
        let l = phi.ncols();
        let sv = singular_values(&phi);
        let smax = sv[0];
        if sv[l - 1] <= 1e-12 * smax {
            return Err(Error::InvalidInput(format!(
                "frame rank-deficient: sigma_min/sigma_max = {:.3e}",
                sv[l - 1] / smax
            )));
        }
        let forms = CanonicalForms::new(l);
        let scale = smax * smax;
        if max_norm(&(phi.adjoint() * forms.j() * &phi)) > tol * scale.max(1.0) {
            return Err(Error::InvalidInput("frame is not Lagrangian".into()));
        }
        match class {
            FieldTag::Complex => {}
            FieldTag::Real => {
                if max_norm(&(phi.transpose() * forms.j() * &phi)) > tol * scale.max(1.0) {
                    return Err(Error::InvalidInput("frame is not real-Lagrangian".into()));
                }
            }
            FieldTag::Quaternion => {
                let si = forms.script_i()?;
                if max_norm(&(phi.transpose() * si * &phi)) > tol * scale.max(1.0) {
                    return Err(Error::InvalidInput("frame is not quaternion-Lagrangian".into()));
                }
            }
        }
        Ok(Self { phi, class })
    }

    /// No validation; for internal flows that preserve the invariants.
    pub fn new_unchecked(phi: CMatrix, class: FieldTag) -> Self {
        Self { phi, class }
    }

    /// The frame (xi; 1) of a right boundary condition.
    pub fn psi_xi(xi: &CMatrix, class: FieldTag) -> Self {
        let l = xi.nrows();
        let mut phi = zeros(2 * l, l);
        phi.view_mut((0, 0), (l, l)).copy_from(xi);
        phi.view_mut((l, 0), (l, l)).copy_from(&identity(l));
        Self { phi, class }
    }

    /// The frame (1; zeta) of a left boundary condition.
    pub fn phi_zeta(zeta: &CMatrix, class: FieldTag) -> Self {
        let l = zeta.nrows();
        let mut phi = zeros(2 * l, l);
        phi.view_mut((0, 0), (l, l)).copy_from(&identity(l));
        phi.view_mut((l, 0), (l, l)).copy_from(zeta);
        Self { phi, class }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.phi
    }

    pub fn class(&self) -> FieldTag {
        self.class
    }

    pub fn block_size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn upper(&self) -> CMatrix {
        let l = self.block_size();
        self.phi.view((0, 0), (l, l)).into_owned()
    }

    pub fn lower(&self) -> CMatrix {
        let l = self.block_size();
        self.phi.view((l, 0), (l, l)).into_owned()
    }

    /// Legal representative change: orthonormal columns via thin QR.
    pub fn orthonormalize(&self) -> Self {
        let qr = self.phi.clone().qr();
        Self { phi: qr.q(), class: self.class }
    }

    /// Apply a 2L x 2L matrix to the frame (no re-normalization).
    pub fn transform(&self, t: &CMatrix) -> Self {
        Self { phi: t * &self.phi, class: self.class }
    }
}

/// Stereographic projection to the affine chart: pi(Phi) = a b^-1 for
/// Phi = (a; b); selfadjoint for Lagrangian frames in the chart.
pub fn stereo_project(frame: &LagrangianFrame) -> Result<CMatrix> {
    let b = frame.lower();
    let sv = singular_values(&b);
    let smax_frame = singular_values(frame.matrix())[0];
    let smin = sv.last().copied().unwrap_or(0.0);
    if smin <= 1e-13 * smax_frame {
        return Err(Error::ChartSingular { sigma_min: smin });
    }
    Ok(frame.upper() * try_inverse(&b)?)
}

/// Global stereographic projection Pi(Phi) = pi(C Phi): unitary for every
/// Lagrangian frame, symmetric in the real class, self-dual in the
/// quaternion class.
pub fn stereo_unitary(frame: &LagrangianFrame) -> Result<CMatrix> {
    let forms = CanonicalForms::new(frame.block_size());
    stereo_unitary_with(&forms, frame)
}

pub fn stereo_unitary_with(forms: &CanonicalForms, frame: &LagrangianFrame) -> Result<CMatrix> {
    let transformed = frame.transform(forms.cayley());
    stereo_project(&transformed)
}

/// Inverse of the stereographic projection: the frame ((U+1)/2; i(U-1)/2).
pub fn unitary_to_frame(u: &CMatrix, class: FieldTag, tol: f64) -> Result<LagrangianFrame> {
    let l = u.nrows();
    let defect = max_norm(&(u.adjoint() * u - identity(l)));
    if defect > tol {
        return Err(Error::NotUnitary { defect });
    }
    let upper = (u + identity(l)).scale(0.5);
    let lower = (u - identity(l)).scale(0.5) * ci(1.0);
    let mut phi = zeros(2 * l, l);
    phi.view_mut((0, 0), (l, l)).copy_from(&upper);
    phi.view_mut((l, 0), (l, l)).copy_from(&lower);
    Ok(LagrangianFrame::new_unchecked(phi, class))
}

/// Wronskian W(Phi, Psi) = Phi* J Psi.
pub fn wronskian(phi: &LagrangianFrame, psi: &LagrangianFrame) -> Result<CMatrix> {
    if phi.block_size() != psi.block_size() {
        return Err(Error::DimensionMismatch("frame sizes differ".into()));
    }
    let forms = CanonicalForms::new(phi.block_size());
    Ok(phi.matrix().adjoint() * forms.j() * psi.matrix())
}

pub const KERNEL_REL_TOL: f64 = 1e-8;

/// Dimension of the intersection of two Lagrangian planes
/// = dim ker W(Phi, Psi). Frames are orthonormalized first, which puts the
/// Wronskian on the unit scale, so singular values are thresholded against
/// max(sigma_max, 1) (a bare sigma_max test cannot see a full kernel).
pub fn wronskian_intersection(phi: &LagrangianFrame, psi: &LagrangianFrame, tol: f64) -> Result<usize> {
    let w = wronskian(&phi.orthonormalize(), &psi.orthonormalize())?;
    let s = singular_values(&w);
    let scale = s.first().copied().unwrap_or(0.0).max(1.0);
    Ok(s.iter().filter(|&&x| x <= tol * scale).count())
}

/// Volume distortion det((T Phi)*(T Phi)) / det(Phi* Phi); the closed form
/// in terms of the Moebius action is evaluated as a cross-check.
pub fn rn_cocycle_ratio(t: &CMatrix, frame: &LagrangianFrame) -> Result<f64> {
    let (lhs, rhs) = rn_cocycle_both(t, frame)?;
    let denom = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    if (lhs - rhs).abs() / denom > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "cocycle identity violated: lhs {lhs:.15e} rhs {rhs:.15e}"
        )));
    }
    Ok(lhs)
}

/// Both sides of the cocycle identity: the frame-volume ratio and the
/// Moebius-side product.
pub fn rn_cocycle_both(t: &CMatrix, frame: &LagrangianFrame) -> Result<(f64, f64)> {
    let l = frame.block_size();
    ensure_doubled(t)?;
    let z = stereo_project(frame)?;
    let timg = frame.transform(t);
    // both lower blocks must be invertible (domain of the chart)
    let _ = stereo_project(&timg)?;
    let lhs_num = (timg.matrix().adjoint() * timg.matrix()).determinant().re;
    let lhs_den = (frame.matrix().adjoint() * frame.matrix()).determinant().re;
    let lhs = lhs_num / lhs_den;

    let (_, _, cc, d) = blocks(t);
    let tz = moebius(t, &z)?;
    let rhs_num = (tz.adjoint() * &tz + identity(l)).determinant().re;
    let rhs_den = (z.adjoint() * &z + identity(l)).determinant().re;
    let det_cd = (&cc * &z + &d).determinant();
    let rhs = rhs_num / rhs_den * det_cd.norm_sqr();
    Ok((lhs, rhs))
}

pub const WINDING_MARGIN: f64 = std::f64::consts::PI / 8.0;

/// Principal branch of arg det(U_next U_prev*), the winding contribution of
/// one path step; errors out when the step is too coarse for branch safety.
pub fn winding_increment(u_prev: &CMatrix, u_next: &CMatrix, margin: f64) -> Result<f64> {
    let d = (u_next * u_prev.adjoint()).determinant();
    let val = d.arg();
    if val.abs() >= std::f64::consts::PI - margin {
        return Err(Error::StepTooCoarse { increment: val });
    }
    Ok(val)
}

/// d/dE of the accumulated phase: 2 Tr((Phi*Phi)^-1 Phi* J dPhi); equals
/// Im d/dE log det Pi(Phi^E) along Lagrangian paths.
pub fn phase_velocity(frame: &LagrangianFrame, derivative: &CMatrix) -> Result<f64> {
    let phi = frame.matrix();
    if derivative.shape() != phi.shape() {
        return Err(Error::DimensionMismatch("derivative shape".into()));
    }
    let forms = CanonicalForms::new(frame.block_size());
    let gram = phi.adjoint() * phi;
    let rhs = phi.adjoint() * forms.j() * derivative;
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("singular Gram matrix".into()))?;
    Ok(2.0 * sol.trace().re)
}

/// The rotation family R_eta = [[cos eta, sin eta], [-sin eta, cos eta]]
/// (blocks scalar multiples of the identity); symplectic for every eta.
pub fn r_eta(l: usize, eta: f64) -> CMatrix {
    let mut t = zeros(2 * l, 2 * l);
    for k in 0..l {
        t[(k, k)] = c(eta.cos());
        t[(k, l + k)] = c(eta.sin());
        t[(l + k, k)] = c(-eta.sin());
        t[(l + k, l + k)] = c(eta.cos());
    }
    t
}

/// sigma_min(C Z + D) for diagnostics.
pub fn moebius_margin(t: &CMatrix, z: &CMatrix) -> f64 {
    let (_, _, cc, d) = blocks(t);
    smallest_singular_value(&(&cc * z + &d))
}
