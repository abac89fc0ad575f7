//! Matrix Pruefer flow and everything built on it: continuously matched
//! eigenphase tracks over an energy sweep, the total rotation number,
//! eigenvalue counting and localization with multiplicities, the phase
//! velocity matrix and intersection indices of unitary paths.

use crate::error::{Error, Result};
use crate::jacobi::JacobiModel;
use crate::matrices::{
    c, hermitian_eigen, identity, max_norm, symmetrize, unitary_eigenphases, zeros, C64, CMatrix,
};
use crate::symplectic::{
    is_symplectic, stereo_unitary, wronskian_intersection, CanonicalForms, FieldTag,
    LagrangianFrame, KERNEL_REL_TOL,
};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const PI: f64 = std::f64::consts::PI;

/// Principal value in (-pi, pi].
fn principal(x: f64) -> f64 {
    let mut y = x.rem_euclid(TWO_PI);
    if y > PI {
        y -= TWO_PI;
    }
    y
}

/// Precomputed per-site propagation factors for one model and basis change.
///
/// The transfer matrix is linear in the energy, so each site stores the two
/// conjugated coefficient matrices and a factor at energy E is one scale-add.
pub struct Propagator {
    l: usize,
    n: usize,
    class: FieldTag,
    /// symplectic-side factors M T_n M^-1 = e k_sym + w_sym
    k_sym: Vec<CMatrix>,
    w_sym: Vec<CMatrix>,
    /// Cayley side C M T_n M^-1 C* = e k_cay + w_cay
    k_cay: Vec<CMatrix>,
    w_cay: Vec<CMatrix>,
    u0: CMatrix,
    frame0: LagrangianFrame,
    branch: Option<BranchData>,
}

/// Per-site data for the branch-safe total rotation: the A- and D-block
/// determinants are polynomials in E with roots strictly off the real axis,
/// and the two principal matrix-log terms are continuous because the
/// contraction norms stay below one. Summed over sites this evaluates the
/// accumulated rotation at a single energy with no path tracking at all,
/// which also makes it immune to whole-turn aliasing.
struct BranchData {
    /// roots of det(A^e) per site, all in the upper half-plane
    z_a: Vec<Vec<C64>>,
    /// roots of det(D^e) per site, all in the lower half-plane
    z_d: Vec<Vec<C64>>,
    /// E -> -infinity limits of the two per-site matrix-log terms
    offset_ab: Vec<f64>,
    offset_dc: Vec<f64>,
}

/// Im Tr log of a matrix with spectrum in the right half-plane, principal
/// per eigenvalue.
fn im_tr_log(m: &CMatrix) -> Result<f64> {
    let vals = crate::matrices::complex_eigenvalues(m)?;
    let mut s = 0.0;
    for v in vals {
        if v.re <= 0.0 && v.im.abs() < 1e-14 {
            return Err(Error::BranchAnchor(format!("eigenvalue {v} on the branch cut")));
        }
        s += v.arg();
    }
    Ok(s)
}

const REUNITARIZE_EVERY: usize = 512;

impl Propagator {
    pub fn new(model: &JacobiModel, basis: Option<&CMatrix>) -> Result<Self> {
        let l = model.block_size();
        let forms = CanonicalForms::new(l);
        let m = match basis {
            None => identity(2 * l),
            Some(b) => {
                let scale = max_norm(b).powi(2).max(1.0);
                if !is_symplectic(b, FieldTag::Complex, 1e-8 * scale)? {
                    return Err(Error::InvalidInput("basis change must be symplectic".into()));
                }
                b.clone()
            }
        };
        let minv = crate::matrices::try_inverse(&m)?;
        let cay = forms.cayley();

        let mut k_sym = Vec::with_capacity(model.sites());
        let mut w_sym = Vec::with_capacity(model.sites());
        let mut k_cay = Vec::with_capacity(model.sites());
        let mut w_cay = Vec::with_capacity(model.sites());
        for site in 1..=model.sites() {
            let t = model.t_block(site);
            let tinv = crate::matrices::try_inverse(&t)?;
            let mut k = zeros(2 * l, 2 * l);
            k.view_mut((0, 0), (l, l)).copy_from(&tinv);
            let mut w = zeros(2 * l, 2 * l);
            w.view_mut((0, 0), (l, l)).copy_from(&(-(model.v_block(site) * &tinv)));
            w.view_mut((0, l), (l, l)).copy_from(&(-&t));
            w.view_mut((l, 0), (l, l)).copy_from(&tinv);
            let ks = &m * k * &minv;
            let ws = &m * w * &minv;
            k_cay.push(cay * &ks * cay.adjoint());
            w_cay.push(cay * &ws * cay.adjoint());
            k_sym.push(ks);
            w_sym.push(ws);
        }

        // left boundary enters through the initial frame (1; -zeta), the
        // sign matching the assembled block V_1 - zeta
        let frame0 = LagrangianFrame::phi_zeta(&(-model.zeta().clone()), model.class())
            .transform(&m)
            .orthonormalize();
        let u0 = stereo_unitary(&frame0)?;
        let mut prop = Self {
            l,
            n: model.sites(),
            class: model.class(),
            k_sym,
            w_sym,
            k_cay,
            w_cay,
            u0,
            frame0,
            branch: None,
        };
        // asymptotic flow limit: Pi of the basis image of (1; 0)
        let u_inf = stereo_unitary(
            &LagrangianFrame::phi_zeta(&zeros(l, l), model.class()).transform(&m).orthonormalize(),
        )?;
        prop.branch = prop.build_branch(&u_inf).ok();
        Ok(prop)
    }

    fn build_branch(&self, u_inf: &CMatrix) -> Result<BranchData> {
        let l = self.l;
        let mut z_a = Vec::with_capacity(self.n);
        let mut z_d = Vec::with_capacity(self.n);
        let mut offset = Vec::with_capacity(self.n);
        for site in 1..=self.n {
            let k = &self.k_cay[site - 1];
            let w = &self.w_cay[site - 1];
            let xa = k.view((0, 0), (l, l)).into_owned();
            let ya = w.view((0, 0), (l, l)).into_owned();
            let xb = k.view((0, l), (l, l)).into_owned();
            let yc = w.view((l, 0), (l, l)).into_owned();
            let xc = k.view((l, 0), (l, l)).into_owned();
            let xd = k.view((l, l), (l, l)).into_owned();
            let yd = w.view((l, l), (l, l)).into_owned();
            let _ = yc;
            let xa_inv = crate::matrices::try_inverse(&xa)?;
            let xd_inv = crate::matrices::try_inverse(&xd)?;
            let roots_a = crate::matrices::complex_eigenvalues(&(-(&xa_inv * &ya)))?;
            let roots_d = crate::matrices::complex_eigenvalues(&(-(&xd_inv * &yd)))?;
            if roots_a.iter().any(|z| z.im < 1e-12) || roots_d.iter().any(|z| z.im > -1e-12) {
                return Err(Error::BranchAnchor("determinant roots touch the real axis".into()));
            }
            // limits of A^-1 B and D^-1 C as |E| -> infinity
            let kab_inf = &xa_inv * &xb;
            let kdc_inf = &xd_inv * &xc;
            let u_prev_inf = if site == 1 { &self.u0 } else { u_inf };
            let off = im_tr_log(&(identity(l) + &kab_inf * u_prev_inf.adjoint()))?
                - im_tr_log(&(identity(l) + &kdc_inf * u_prev_inf))?;
            z_a.push(roots_a);
            z_d.push(roots_d);
            offset.push(off);
        }
        Ok(BranchData { z_a, z_d, offset })
    }

    /// Branch-safe total rotation at a single real energy, accumulated
    /// site by site per the telescoped decomposition; exact up to roundoff
    /// and independent of any grid.
    pub fn theta_exact(&self, e: f64) -> Result<f64> {
        let branch = self
            .branch
            .as_ref()
            .ok_or_else(|| Error::BranchAnchor("per-site branch data unavailable".into()))?;
        let l = self.l;
        let mut total = 0.0;
        let mut u = self.u0.clone();
        for site in 1..=self.n {
            let f = self.cayley_factor(site, c(e));
            for z in &branch.z_a[site - 1] {
                total += (C64::new(e, 0.0) - z).arg() + PI;
            }
            for z in &branch.z_d[site - 1] {
                total -= (C64::new(e, 0.0) - z).arg() - PI;
            }
            let (a, b, cc, d) = crate::symplectic::blocks(&f);
            let kab = crate::matrices::try_inverse(&a)? * b;
            let kdc = crate::matrices::try_inverse(&d)? * cc;
            total += im_tr_log(&(identity(l) + &kab * u.adjoint()))?;
            total -= im_tr_log(&(identity(l) + &kdc * &u))?;
            total -= branch.offset[site - 1];
            u = crate::symplectic::moebius(&f, &u)?;
        }
        Ok(total)
    }

    /// Per-site branch-safe increments together with the real parts
    /// log|det(A + B U*)|; the building block of the disorder estimators.
    pub fn site_log_terms(&self, e: C64) -> Result<Vec<C64>> {
        let l = self.l;
        let real_e = e.im == 0.0;
        let branch = if real_e { self.branch.as_ref() } else { None };
        let mut out = Vec::with_capacity(self.n);
        let mut u = self.u0.clone();
        for site in 1..=self.n {
            let f = self.cayley_factor(site, e);
            let (a, b, _cc, _d) = crate::symplectic::blocks(&f);
            let re_part = crate::matrices::log_determinant(&(&a * identity(l) + &b * u.adjoint())).re;
            let im_part = if let Some(br) = branch {
                let mut w = 0.0;
                for z in &br.z_a[site - 1] {
                    w += (C64::new(e.re, 0.0) - z).arg() + PI;
                }
                let kab = crate::matrices::try_inverse(&a)? * &b;
                w += im_tr_log(&(identity(l) + &kab * u.adjoint()))?;
                // half of the site offset belongs to the A-side
                w - 0.5 * br.offset[site - 1]
            } else {
                f64::NAN
            };
            out.push(C64::new(re_part, im_part));
            u = crate::symplectic::moebius(&f, &u)?;
        }
        Ok(out)
    }

    pub fn block_size(&self) -> usize {
        self.l
    }

    pub fn sites(&self) -> usize {
        self.n
    }

    pub fn class(&self) -> FieldTag {
        self.class
    }

    pub fn u0(&self) -> &CMatrix {
        &self.u0
    }

    /// C M T_site^E M^-1 C* (the Lorentz factor of one site).
    pub fn cayley_factor(&self, site: usize, e: C64) -> CMatrix {
        self.k_cay[site - 1].map(|x| x * e) + &self.w_cay[site - 1]
    }

    /// M T_site^E M^-1.
    pub fn symplectic_factor(&self, site: usize, e: C64) -> CMatrix {
        self.k_sym[site - 1].map(|x| x * e) + &self.w_sym[site - 1]
    }

    /// Moebius flow U_0..U_N.
    pub fn flow(&self, e: C64) -> Result<Vec<CMatrix>> {
        let mut out = Vec::with_capacity(self.n + 1);
        out.push(self.u0.clone());
        let mut u = self.u0.clone();
        for site in 1..=self.n {
            let f = self.cayley_factor(site, e);
            u = crate::symplectic::moebius(&f, &u)?;
            if site % REUNITARIZE_EVERY == 0 && e.im == 0.0 {
                u = crate::matrices::polar_unitary(&u);
            }
            out.push(u.clone());
        }
        Ok(out)
    }

    /// Final Pruefer unitary U_N without storing the intermediate states.
    pub fn final_u(&self, e: C64) -> Result<CMatrix> {
        let mut u = self.u0.clone();
        for site in 1..=self.n {
            let f = self.cayley_factor(site, e);
            u = crate::symplectic::moebius(&f, &u)?;
            if site % REUNITARIZE_EVERY == 0 && e.im == 0.0 {
                u = crate::matrices::polar_unitary(&u);
            }
        }
        Ok(u)
    }

    /// Direct frame propagation with per-step orthonormalization; the
    /// independent cross-check path for the Moebius flow.
    pub fn frames(&self, e: C64) -> Vec<LagrangianFrame> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut fr = self.frame0.clone();
        out.push(fr.clone());
        for site in 1..=self.n {
            fr = fr.transform(&self.symplectic_factor(site, e)).orthonormalize();
            out.push(fr.clone());
        }
        out
    }
}

/// Pruefer flow U_0..U_N of the model at real or complex energy.
pub fn pruefer_flow(model: &JacobiModel, e: C64, basis: Option<&CMatrix>) -> Result<Vec<CMatrix>> {
    Propagator::new(model, basis)?.flow(e)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingEvent {
    pub energy: f64,
    pub track: usize,
    /// +1 for an upward passage, -1 downward (monotone flows only go up).
    pub direction: i32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub energy: f64,
    pub multiplicity: usize,
    pub direction: i32,
}

/// Continuously matched eigenphase tracks of a unitary path.
#[derive(Debug, Clone)]
pub struct PhaseTracks {
    pub grid: Vec<f64>,
    /// unwrapped phases, grid.len() rows of L entries
    pub theta: Vec<Vec<f64>>,
    /// accumulated total rotation relative to the anchor offsets
    pub total: Vec<f64>,
    pub anchor: Vec<f64>,
    pub events: Vec<CrossingEvent>,
    pub crossings: Vec<Crossing>,
    pub flagged: Vec<(f64, f64)>,
    pub min_displacement: f64,
    pub target_phase: f64,
    pub u_first: CMatrix,
    pub u_last: CMatrix,
}

impl PhaseTracks {
    pub fn tracks(&self) -> usize {
        self.anchor.len()
    }

    /// Total rotation at the last grid point.
    pub fn total_rotation(&self) -> f64 {
        *self.total.last().unwrap()
    }

    /// Orientation-reversed copy (grid mirrored, phases unchanged).
    pub fn reversed(&self) -> Self {
        let mut r = self.clone();
        r.grid = self.grid.iter().rev().map(|&e| -e).collect();
        r.theta = self.theta.iter().rev().cloned().collect();
        r.total = self.total.iter().rev().cloned().collect();
        r.events = self
            .events
            .iter()
            .rev()
            .map(|ev| CrossingEvent { energy: -ev.energy, track: ev.track, direction: -ev.direction })
            .collect();
        r.crossings = self
            .crossings
            .iter()
            .rev()
            .map(|cr| Crossing { energy: -cr.energy, multiplicity: cr.multiplicity, direction: -cr.direction })
            .collect();
        r.u_first = self.u_last.clone();
        r.u_last = self.u_first.clone();
        r
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepControls {
    /// refinement threshold on the per-step matched displacement
    pub max_displacement: f64,
    /// refinement threshold on the per-step det-phase increment
    pub max_det_step: f64,
    /// matched displacements below this trigger refinement: monotone paths
    /// only move backwards when a step aliased a full turn
    pub backward_tol: f64,
    /// absolute energy tolerance for crossing localization; None picks
    /// 1e-11 x span
    pub energy_tol: Option<f64>,
    /// give up refining below this fraction of the span and flag
    pub min_step_frac: f64,
    /// initial uniform grid size; None picks 4NL + 64
    pub initial_grid: Option<usize>,
}

impl Default for SweepControls {
    fn default() -> Self {
        Self {
            max_displacement: PI / 4.0,
            max_det_step: PI / 2.0,
            backward_tol: -1e-7,
            energy_tol: None,
            min_step_frac: 1e-13,
            initial_grid: None,
        }
    }
}

struct PathState {
    t: f64,
    raw: Vec<f64>,
    unwrapped: Vec<f64>,
    u: CMatrix,
}

fn phases_of(u: &CMatrix) -> Result<Vec<f64>> {
    let (ph, _) = unitary_eigenphases(u, 1e-6)?;
    Ok(ph)
}

/// Minimal-circular-cost assignment between current track positions and a
/// freshly sorted phase vector. The optimum over non-crossing matchings on
/// the circle is a cyclic shift of the sorted order, so all L shifts are
/// tried exactly.
fn cyclic_match(prev_unwrapped: &[f64], next_sorted: &[f64]) -> Vec<f64> {
    let l = prev_unwrapped.len();
    let prev_mod: Vec<f64> = prev_unwrapped.iter().map(|&x| x.rem_euclid(TWO_PI)).collect();
    let mut order: Vec<usize> = (0..l).collect();
    order.sort_by(|&i, &j| prev_mod[i].partial_cmp(&prev_mod[j]).unwrap());
    let mut best_shift = 0usize;
    let mut best_cost = f64::INFINITY;
    for s in 0..l {
        let mut cost = 0.0;
        for (r, &trk) in order.iter().enumerate() {
            cost += principal(next_sorted[(r + s) % l] - prev_mod[trk]).abs();
        }
        if cost < best_cost {
            best_cost = cost;
            best_shift = s;
        }
    }
    let mut disp = vec![0.0; l];
    for (r, &trk) in order.iter().enumerate() {
        disp[trk] = principal(next_sorted[(r + best_shift) % l] - prev_mod[trk]);
    }
    disp
}

fn advance(prev: &PathState, t: f64, u: CMatrix) -> Result<PathState> {
    let raw = phases_of(&u)?;
    let disp = cyclic_match(&prev.unwrapped, &raw);
    let unwrapped: Vec<f64> =
        prev.unwrapped.iter().zip(disp.iter()).map(|(a, d)| a + d).collect();
    Ok(PathState { t, raw, unwrapped, u })
}

/// Adaptive eigenphase tracker for an arbitrary unitary path over an
/// explicit ascending grid (first entry = path start).
///
/// `anchor_targets`, when given, are the asymptotic phases the starting
/// point is matched against (the tracks of an energy sweep start near the
/// phases of the basis-change unitary).
pub fn track_unitary_path<F>(
    eval: F,
    grid: &[f64],
    level: f64,
    anchor_targets: Option<&[f64]>,
    controls: &SweepControls,
) -> Result<PhaseTracks>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    if grid.len() < 2 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be ascending with >= 2 points".into()));
    }
    let t_lo = grid[0];
    let t_hi = grid[grid.len() - 1];
    let span = t_hi - t_lo;
    let tol = controls.energy_tol.unwrap_or(1e-11 * span);
    let min_step = controls.min_step_frac * span;

    let u_start = eval(t_lo)?;
    let l = u_start.nrows();
    let raw_start = phases_of(&u_start)?;
    let anchor: Vec<f64> = match anchor_targets {
        None => vec![0.0; l],
        Some(a) => {
            if a.len() != l {
                return Err(Error::InvalidInput("anchor target length".into()));
            }
            let mut s = a.to_vec();
            s.sort_by(|x, y| x.partial_cmp(y).unwrap());
            s
        }
    };
    // representative at the start: raw phase shifted by 2 pi to sit nearest
    // its anchor target (cyclic assignment between the two sorted lists)
    let start_unwrapped: Vec<f64> = {
        let disp = cyclic_match(&anchor, &raw_start);
        anchor.iter().zip(disp.iter()).map(|(a, d)| a + d).collect()
    };
    let mut state = PathState { t: t_lo, raw: raw_start, unwrapped: start_unwrapped, u: u_start };

    let mut targets: Vec<f64> = grid[1..].to_vec();
    targets.reverse(); // used as a stack

    let mut tracks = PhaseTracks {
        grid: vec![state.t],
        theta: vec![state.unwrapped.clone()],
        total: vec![state.unwrapped.iter().sum::<f64>() - anchor.iter().sum::<f64>()],
        anchor,
        events: Vec::new(),
        crossings: Vec::new(),
        flagged: Vec::new(),
        min_displacement: f64::INFINITY,
        target_phase: level,
        u_first: state.u.clone(),
        u_last: state.u.clone(),
    };

    while let Some(t_next) = targets.pop() {
        let candidate = advance(&state, t_next, eval(t_next)?)?;
        let mut max_disp = 0.0f64;
        let mut min_disp = f64::INFINITY;
        for (b, a) in candidate.unwrapped.iter().zip(state.unwrapped.iter()) {
            max_disp = max_disp.max((b - a).abs());
            min_disp = min_disp.min(b - a);
        }
        let det_step: f64 =
            candidate.unwrapped.iter().sum::<f64>() - state.unwrapped.iter().sum::<f64>();
        let too_coarse = max_disp > controls.max_displacement
            || det_step.abs() > controls.max_det_step
            || min_disp < controls.backward_tol;
        if std::env::var_os("ROTNUM_TRACE").is_some() {
            eprintln!(
                "step [{:.6}, {:.6}] max_disp={:.4} min_disp={:.4} det={:.4} coarse={}",
                state.t, t_next, max_disp, min_disp, det_step, too_coarse
            );
        }
        if too_coarse && (t_next - state.t) > min_step {
            targets.push(t_next);
            targets.push(0.5 * (state.t + t_next));
            continue;
        }
        if too_coarse {
            tracks.flagged.push((state.t, t_next));
        }

        // level crossings inside the accepted step, localized by bisection
        for trk in 0..candidate.unwrapped.len() {
            let a = state.unwrapped[trk];
            let b = candidate.unwrapped[trk];
            let m_lo = ((a - level) / TWO_PI).floor() as i64 + 1;
            let m_hi = ((b - level) / TWO_PI).floor() as i64;
            for m in m_lo..=m_hi {
                let lv = level + TWO_PI * m as f64;
                let energy = localize(&eval, &state, &candidate, trk, lv, tol)?;
                tracks.events.push(CrossingEvent { energy, track: trk, direction: 1 });
            }
            // downward passages (not expected for monotone flows)
            let m_lo_d = ((b - level) / TWO_PI).floor() as i64 + 1;
            let m_hi_d = ((a - level) / TWO_PI).floor() as i64;
            for m in m_lo_d..=m_hi_d {
                let lv = level + TWO_PI * m as f64;
                let energy = localize(&eval, &state, &candidate, trk, lv, tol)?;
                tracks.events.push(CrossingEvent { energy, track: trk, direction: -1 });
            }
            tracks.min_displacement = tracks.min_displacement.min(b - a);
        }

        tracks.grid.push(candidate.t);
        tracks.theta.push(candidate.unwrapped.clone());
        tracks
            .total
            .push(candidate.unwrapped.iter().sum::<f64>() - tracks.anchor.iter().sum::<f64>());
        state = candidate;
    }
    tracks.u_last = state.u;
    tracks.events.sort_by(|x, y| x.energy.partial_cmp(&y.energy).unwrap());
    tracks.crossings = cluster_events(&tracks.events, (50.0 * tol).max(1e-12 * span));
    Ok(tracks)
}

fn localize<F>(
    eval: &F,
    lo_in: &PathState,
    hi_in: &PathState,
    track: usize,
    level: f64,
    tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<CMatrix>,
{
    // monotone bisection on the matched track value
    let mut lo_t = lo_in.t;
    let mut lo_unwrapped = lo_in.unwrapped.clone();
    let mut hi_t = hi_in.t;
    // upward events have value < level at lo; downward the other way round
    let upward = lo_in.unwrapped[track] < level;
    while hi_t - lo_t > tol {
        let mid_t = 0.5 * (lo_t + hi_t);
        let u = eval(mid_t)?;
        let raw = phases_of(&u)?;
        let disp = cyclic_match(&lo_unwrapped, &raw);
        let mid: Vec<f64> = lo_unwrapped.iter().zip(disp.iter()).map(|(a, d)| a + d).collect();
        let passed = if upward { mid[track] >= level } else { mid[track] <= level };
        if passed {
            hi_t = mid_t;
        } else {
            lo_t = mid_t;
            lo_unwrapped = mid;
        }
    }
    Ok(0.5 * (lo_t + hi_t))
}

fn cluster_events(events: &[CrossingEvent], width: f64) -> Vec<Crossing> {
    let mut out = Vec::new();
    let mut iter = events.iter().peekable();
    while let Some(first) = iter.next() {
        let mut energies = vec![first.energy];
        let mut direction = first.direction;
        while let Some(next) = iter.peek() {
            if next.energy - energies[energies.len() - 1] <= width {
                let ev = iter.next().unwrap();
                energies.push(ev.energy);
                direction = direction.min(ev.direction);
            } else {
                break;
            }
        }
        let mean = energies.iter().sum::<f64>() / energies.len() as f64;
        out.push(Crossing { energy: mean, multiplicity: energies.len(), direction });
    }
    out
}

/// Eigenphase sweep of the Pruefer unitary over [e_lo, e_hi], recording
/// upward passages of the target phase. The model's xi is folded into the
/// last diagonal block first, so phase pi detects exactly the eigenvalues
/// of the assembled matrix.
pub fn sweep(
    model: &JacobiModel,
    e_lo: f64,
    e_hi: f64,
    phi: f64,
    basis: Option<&CMatrix>,
    controls: &SweepControls,
) -> Result<PhaseTracks> {
    let absorbed = model.absorb_xi();
    let prop = Propagator::new(&absorbed, basis)?;
    let anchor = phases_of(prop.u0())?;
    // anchor at theta^M: the E -> -infinity limit of the flow is the
    // basis-change unitary itself
    let anchor_targets = match basis {
        None => vec![0.0; absorbed.block_size()],
        Some(_) => anchor,
    };
    let core_n = controls
        .initial_grid
        .unwrap_or(4 * absorbed.block_size() * absorbed.sites() + 64);
    let (g_lo, g_hi) = absorbed.gershgorin_bounds();
    let grid = sweep_grid(e_lo, e_hi, g_lo, g_hi, core_n);
    track_unitary_path(|e| prop.final_u(c(e)), &grid, phi, Some(&anchor_targets), controls)
}

/// Uniform grid over the spectral core plus geometric tails out to the
/// requested range; all rotation happens inside the Gershgorin enclosure,
/// so the tails only need a handful of points.
fn sweep_grid(e_lo: f64, e_hi: f64, g_lo: f64, g_hi: f64, core_n: usize) -> Vec<f64> {
    let core_lo = e_lo.max(g_lo);
    let core_hi = e_hi.min(g_hi);
    let mut grid = Vec::new();
    grid.push(e_lo);
    if core_hi > core_lo {
        // left tail, geometric approach to the core
        let mut tail = Vec::new();
        let mut d = core_lo - e_lo;
        while d > 1e-3 * (core_hi - core_lo) {
            tail.push(core_lo - d);
            d /= 2.0;
        }
        grid.extend(tail);
        let n = core_n.max(2);
        for k in 0..=n {
            grid.push(core_lo + (core_hi - core_lo) * k as f64 / n as f64);
        }
        // right tail
        let mut d = 1e-3 * (core_hi - core_lo);
        while core_hi + d < e_hi {
            grid.push(core_hi + d);
            d *= 2.0;
        }
    } else {
        // range entirely outside the core: a short uniform grid suffices
        for k in 1..=16 {
            grid.push(e_lo + (e_hi - e_lo) * k as f64 / 16.0);
        }
    }
    grid.push(e_hi);
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * (e_hi - e_lo).abs().max(1.0));
    grid
}

/// Number of eigenvalues of the assembled matrix in (-inf, e], counted as
/// upward passages of the target phase (default pi).
pub fn count_below(model: &JacobiModel, e: f64, phi: f64, controls: &SweepControls) -> Result<usize> {
    let (lo, _) = model.gershgorin_bounds();
    if e <= lo {
        return Ok(0);
    }
    let tracks = sweep(model, lo, e, phi, None, controls)?;
    let span = e - lo;
    let tol = controls.energy_tol.unwrap_or(1e-11 * span);
    let guard = 10.0 * tol;
    let below = tracks.events.iter().filter(|ev| ev.energy <= e - guard).count();
    let with_boundary = tracks.events.len();
    if with_boundary != below {
        return Err(Error::BoundaryAmbiguity { below, with_boundary, tol: guard });
    }
    Ok(below)
}

#[derive(Debug, Clone)]
pub struct SpectralLine {
    pub energy: f64,
    pub multiplicity: usize,
    /// L - rank of the boundary Wronskian at the located energy; None when
    /// the cluster was too tight to validate independently.
    pub wronskian_multiplicity: Option<usize>,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct RotationSpectrum {
    pub lines: Vec<SpectralLine>,
    pub tracks: PhaseTracks,
}

impl RotationSpectrum {
    /// All eigenvalues expanded with multiplicity, sorted.
    pub fn expanded(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for line in &self.lines {
            for _ in 0..line.multiplicity {
                out.push(line.energy);
            }
        }
        out
    }
}

/// Full spectrum of the assembled matrix by rotation counting: sweep the
/// Gershgorin enclosure at phase pi, localize every upward crossing, and
/// cross-validate multiplicities with the boundary Wronskian kernel.
pub fn spectrum_by_rotation(model: &JacobiModel, controls: &SweepControls) -> Result<RotationSpectrum> {
    let absorbed = model.absorb_xi();
    let (lo, hi) = absorbed.gershgorin_bounds();
    let tracks = sweep(model, lo, hi, PI, None, controls)?;
    let span = hi - lo;
    let tol = controls.energy_tol.unwrap_or(1e-11 * span);

    let prop = Propagator::new(&absorbed, None)?;
    let psi = LagrangianFrame::psi_xi(&zeros(absorbed.block_size(), absorbed.block_size()), absorbed.class());
    let mut lines = Vec::new();
    for cr in &tracks.crossings {
        // isolated-cluster check before trusting the rank test
        let isolated = tracks
            .crossings
            .iter()
            .filter(|o| (o.energy - cr.energy).abs() > 0.0)
            .all(|o| (o.energy - cr.energy).abs() > 200.0 * tol);
        let wronskian_multiplicity = if isolated {
            let frames = prop.frames(c(cr.energy));
            let phi_n = &frames[frames.len() - 1];
            Some(wronskian_intersection(&psi, phi_n, KERNEL_REL_TOL)?)
        } else {
            None
        };
        let flagged = matches!(wronskian_multiplicity, Some(w) if w != cr.multiplicity);
        lines.push(SpectralLine {
            energy: cr.energy,
            multiplicity: cr.multiplicity,
            wronskian_multiplicity,
            flagged,
        });
    }
    Ok(RotationSpectrum { lines, tracks })
}

/// Finite-difference phase velocity matrix S = (1/i) U* dU/dE, symmetrized;
/// positive definite for N >= 2.
pub fn velocity_matrix(model: &JacobiModel, e: f64, h: f64, basis: Option<&CMatrix>) -> Result<CMatrix> {
    if model.sites() < 2 {
        return Err(Error::InvalidInput("velocity matrix needs N >= 2".into()));
    }
    if h < 1e-12 * model.scale() {
        return Err(Error::InvalidInput(format!("step {h} below precision floor")));
    }
    let prop = Propagator::new(&model.absorb_xi(), basis)?;
    let u = prop.final_u(c(e))?;
    let up = prop.final_u(c(e + h))?;
    let dn = prop.final_u(c(e - h))?;
    let du = (up - dn).unscale(2.0 * h);
    let s = (u.adjoint() * du).map(|x| x * C64::new(0.0, -1.0));
    Ok(symmetrize(&s))
}

/// Signed count of passages of the phase levels `phi + 2 pi k` summed over
/// tracks; for a closed path this is the intersection (Bott) index.
pub fn intersection_index(tracks: &PhaseTracks, phi: f64) -> i64 {
    let first = &tracks.theta[0];
    let last = &tracks.theta[tracks.theta.len() - 1];
    let mut index = 0i64;
    for trk in 0..tracks.tracks() {
        let a = first[trk];
        let b = last[trk];
        index += ((b - phi) / TWO_PI).floor() as i64 - ((a - phi) / TWO_PI).floor() as i64;
    }
    index
}

/// Index of a nearly closed path: the remaining wrap from the last to the
/// first unitary is added and integer-rounded; the residual reported.
pub fn closed_index(tracks: &PhaseTracks) -> Result<(i64, f64)> {
    let wrap = crate::symplectic::winding_increment(
        &tracks.u_last,
        &tracks.u_first,
        crate::symplectic::WINDING_MARGIN,
    )?;
    let total = tracks.total_rotation() - tracks.total[0] + wrap;
    let rounded = (total / TWO_PI).round();
    Ok((rounded as i64, (total / TWO_PI - rounded).abs()))
}

/// Velocity-matrix eigenvalues, ascending (positive for N >= 2).
pub fn velocity_eigenvalues(model: &JacobiModel, e: f64, h: f64) -> Result<Vec<f64>> {
    let s = velocity_matrix(model, e, h, None)?;
    Ok(hermitian_eigen(&s).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{ci, imag_norm, is_unitary, DualityForm};
    use crate::sampling::rng_from_seed;

    fn free_spectrum(n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (1..=n)
            .map(|k| 2.0 * (k as f64 * PI / (n as f64 + 1.0)).cos())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn u0_is_identity_for_dirichlet() {
        let m = JacobiModel::free(2, 3);
        let prop = Propagator::new(&m, None).unwrap();
        assert!(max_norm(&(prop.u0() - identity(2))) < 1e-14);
    }

    #[test]
    fn one_site_free_model_has_phase_pi_at_zero() {
        // frame T(1;0) = (0;1) projects to U_1 = -1
        let m = JacobiModel::free(1, 1);
        let flow = pruefer_flow(&m, c(0.0), None).unwrap();
        assert!(max_norm(&(flow[1].clone() + identity(1))) < 1e-12);
    }

    #[test]
    fn moebius_flow_matches_frame_projection() {
        let mut rng = rng_from_seed(53);
        for class in [FieldTag::Complex, FieldTag::Real, FieldTag::Quaternion] {
            let l = if class.requires_even() { 2 } else { 3 };
            let m = JacobiModel::random(l, 9, class, &mut rng, true);
            let prop = Propagator::new(&m, None).unwrap();
            for e in [-1.1, 0.0, 0.7, 2.3] {
                let flow = prop.flow(c(e)).unwrap();
                let frames = prop.frames(c(e));
                for (u, fr) in flow.iter().zip(frames.iter()) {
                    let via_frame = stereo_unitary(fr).unwrap();
                    assert!(max_norm(&(u - via_frame)) < 1e-9);
                    assert!(is_unitary(u, 1e-9).unwrap());
                }
            }
        }
    }

    #[test]
    fn real_flow_stays_symmetric_quaternion_selfdual() {
        let mut rng = rng_from_seed(59);
        let m = JacobiModel::random(3, 600, FieldTag::Real, &mut rng, true);
        let flow = pruefer_flow(&m, c(0.4), None).unwrap();
        for u in &flow {
            assert!(max_norm(&(u - u.transpose())) < 1e-10);
        }

        let mq = JacobiModel::random(2, 600, FieldTag::Quaternion, &mut rng, true);
        let dual = DualityForm::new(2).unwrap();
        let flow = pruefer_flow(&mq, c(-0.2), None).unwrap();
        for u in &flow {
            assert!(max_norm(&(dual.dual(u) - u)) < 1e-10);
        }
    }

    #[test]
    fn sweep_locates_free_chain_spectrum() {
        let m = JacobiModel::free(1, 3);
        let (lo, hi) = m.gershgorin_bounds();
        let tracks = sweep(&m, lo, hi, PI, None, &SweepControls::default()).unwrap();
        let expect = free_spectrum(3);
        assert_eq!(tracks.events.len(), 3);
        for (ev, ex) in tracks.events.iter().zip(expect.iter()) {
            assert!((ev.energy - ex).abs() < 1e-9, "{} vs {}", ev.energy, ex);
            assert_eq!(ev.direction, 1);
        }
        // tracks nondecreasing
        assert!(tracks.min_displacement > -1e-6);
    }

    #[test]
    fn sweep_total_rotation_approaches_2pi_nl() {
        let m = JacobiModel::free(1, 4);
        let big = 1e7;
        let tracks = sweep(&m, -big, big, PI, None, &SweepControls::default()).unwrap();
        let expect = TWO_PI * 4.0;
        // absolute anchor: total[0] is the small tail at -big
        assert!(tracks.total[0].abs() < 1e-3, "tail {}", tracks.total[0]);
        assert!(
            (tracks.total_rotation() - expect).abs() < 1e-2,
            "Theta(inf) = {} vs {}",
            tracks.total_rotation(),
            expect
        );
    }

    #[test]
    fn count_below_bounds_and_oracle() {
        let mut rng = rng_from_seed(61);
        let m = JacobiModel::random(2, 8, FieldTag::Real, &mut rng, true);
        let spec = m.direct_spectrum();
        let (lo, hi) = m.gershgorin_bounds();
        assert_eq!(count_below(&m, lo - 1.0, PI, &SweepControls::default()).unwrap(), 0);
        assert_eq!(
            count_below(&m, hi + 1.0, PI, &SweepControls::default()).unwrap(),
            spec.len()
        );
        // median gap
        let e = 0.5 * (spec[7] + spec[8]);
        let oracle = spec.iter().filter(|&&x| x <= e).count();
        assert_eq!(count_below(&m, e, PI, &SweepControls::default()).unwrap(), oracle);
    }

    #[test]
    fn spectrum_by_rotation_free_and_random() {
        let m = JacobiModel::free(1, 3);
        let spec = spectrum_by_rotation(&m, &SweepControls::default()).unwrap();
        assert_eq!(spec.lines.len(), 3);
        for (line, ex) in spec.lines.iter().zip(free_spectrum(3).iter()) {
            assert!((line.energy - ex).abs() < 1e-9);
            assert_eq!(line.multiplicity, 1);
            assert_eq!(line.wronskian_multiplicity, Some(1));
        }

        let mut rng = rng_from_seed(67);
        for class in [FieldTag::Complex, FieldTag::Real, FieldTag::Quaternion] {
            let l = if class.requires_even() { 2 } else { 2 };
            let m = JacobiModel::random(l, 6, class, &mut rng, true);
            let spec = spectrum_by_rotation(&m, &SweepControls::default()).unwrap();
            let direct = m.direct_spectrum();
            let found = spec.expanded();
            assert_eq!(found.len(), direct.len());
            let scale = m.scale();
            for (a, b) in found.iter().zip(direct.iter()) {
                assert!((a - b).abs() < 1e-8 * scale, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn doubled_chain_gives_multiplicity_two() {
        // two identical decoupled chains: every eigenvalue doubles
        let mut rng = rng_from_seed(71);
        let base = JacobiModel::random(1, 5, FieldTag::Real, &mut rng, false);
        let v: Vec<CMatrix> = (1..=5)
            .map(|s| identity(2).map(|x| x * base.v_block(s)[(0, 0)]))
            .collect();
        let t: Vec<CMatrix> = (2..=5)
            .map(|s| identity(2).map(|x| x * base.t_block(s)[(0, 0)]))
            .collect();
        let m = JacobiModel::new(v, t, zeros(2, 2), zeros(2, 2), FieldTag::Real).unwrap();
        let spec = spectrum_by_rotation(&m, &SweepControls::default()).unwrap();
        assert_eq!(spec.lines.len(), 5);
        for line in &spec.lines {
            assert_eq!(line.multiplicity, 2);
            assert_eq!(line.wronskian_multiplicity, Some(2));
        }

        // small coupling splits the doublets
        let eps = 1e-3;
        let v2: Vec<CMatrix> = (1..=5)
            .map(|s| {
                let mut b = identity(2).map(|x| x * base.v_block(s)[(0, 0)]);
                b[(0, 1)] = c(eps);
                b[(1, 0)] = c(eps);
                b
            })
            .collect();
        let t2: Vec<CMatrix> = (2..=5)
            .map(|s| identity(2).map(|x| x * base.t_block(s)[(0, 0)]))
            .collect();
        let m2 = JacobiModel::new(v2, t2, zeros(2, 2), zeros(2, 2), FieldTag::Real).unwrap();
        let spec2 = spectrum_by_rotation(&m2, &SweepControls::default()).unwrap();
        let direct = m2.direct_spectrum();
        let found = spec2.expanded();
        for (a, b) in found.iter().zip(direct.iter()) {
            assert!((a - b).abs() < 1e-8 * m2.scale());
        }
        assert!(spec2.lines.iter().all(|l| l.multiplicity == 1));
    }

    #[test]
    fn velocity_matrix_positive_and_class_symmetric() {
        let m = JacobiModel::free(1, 2);
        for e in [-1.0, 0.3, 1.7] {
            let vals = velocity_eigenvalues(&m, e, 1e-6).unwrap();
            assert!(vals[0] > 0.0);
        }
        assert!(velocity_matrix(&JacobiModel::free(1, 1), 0.0, 1e-6, None).is_err());

        let mut rng = rng_from_seed(73);
        let mr = JacobiModel::random(2, 6, FieldTag::Real, &mut rng, false);
        let s = velocity_matrix(&mr, 0.21, 1e-6, None).unwrap();
        assert!(imag_norm(&s) < 1e-7);
        let (vals, _) = hermitian_eigen(&s);
        assert!(vals[0] > 0.0);

        let mq = JacobiModel::random(2, 6, FieldTag::Quaternion, &mut rng, false);
        let s = velocity_matrix(&mq, -0.4, 1e-6, None).unwrap();
        let dual = DualityForm::new(2).unwrap();
        assert!(max_norm(&(dual.dual(&s) - &s)) < 1e-7);
    }

    #[test]
    fn velocity_matches_track_slopes() {
        let mut rng = rng_from_seed(79);
        let m = JacobiModel::random(2, 5, FieldTag::Complex, &mut rng, false);
        let e = 0.37;
        let h = 1e-5;
        let s = velocity_matrix(&m, e, h, None).unwrap();
        let (svals, _) = hermitian_eigen(&s);
        // finite-difference slopes of the matched tracks
        let prop = Propagator::new(&m.absorb_xi(), None).unwrap();
        let up = phases_of(&prop.final_u(c(e + h)).unwrap()).unwrap();
        let dn = phases_of(&prop.final_u(c(e - h)).unwrap()).unwrap();
        let disp = cyclic_match(&dn, &up);
        let mut slopes: Vec<f64> = disp.iter().map(|d| d / (2.0 * h)).collect();
        slopes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in svals.iter().zip(slopes.iter()) {
            assert!((a - b).abs() / b.abs() < 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn intersection_index_full_sweep_and_reversal() {
        let m = JacobiModel::free(1, 3);
        let big = 1e6;
        let tracks = sweep(&m, -big, big, PI, None, &SweepControls::default()).unwrap();
        assert_eq!(intersection_index(&tracks, PI), 3);
        assert_eq!(intersection_index(&tracks.reversed(), PI), -3);
        let (idx, resid) = closed_index(&tracks).unwrap();
        assert_eq!(idx, 3);
        assert!(resid < 1e-6);
    }

    #[test]
    fn single_transfer_path_winds_l_times() {
        // Gamma(E) = M T^E Phi over the compactified line; index = L
        let mut rng = rng_from_seed(83);
        let l = 2;
        let m = JacobiModel::random(l, 1, FieldTag::Real, &mut rng, false);
        let basis = crate::sampling::random_symplectic(l, FieldTag::Real, 0.4, &mut rng);
        let base = LagrangianFrame::phi_zeta(&zeros(l, l), FieldTag::Real);
        let eval = |w: f64| -> Result<CMatrix> {
            // parametrize E = tan(w) over (-pi/2, pi/2)
            let e = w.tan();
            let t = m.transfer_matrix(1, c(e));
            stereo_unitary(&base.transform(&(&basis * t)).orthonormalize())
        };
        let eps = 1e-8;
        let ctl = SweepControls::default();
        let n = 256;
        let grid: Vec<f64> = (0..=n)
            .map(|k| -PI / 2.0 + eps + (PI - 2.0 * eps) * k as f64 / n as f64)
            .collect();
        let tracks = track_unitary_path(eval, &grid, PI, None, &ctl).unwrap();
        let (idx, resid) = closed_index(&tracks).unwrap();
        assert_eq!(idx, l as i64);
        assert!(resid < 1e-5, "residual {resid}");
    }

    #[test]
    fn boundary_replacement_shifts_count_by_at_most_2l() {
        let mut rng = rng_from_seed(89);
        for _ in 0..5 {
            let l = 2;
            let m = JacobiModel::random(l, 6, FieldTag::Complex, &mut rng, true);
            let spec = m.direct_spectrum();
            let e = 0.5 * (spec[5] + spec[6]);
            let xi2 = crate::sampling::random_selfadjoint(l, FieldTag::Complex, &mut rng);
            let m2 = m.with_xi(xi2).unwrap();
            let c1 = count_below(&m, e, PI, &SweepControls::default());
            let c2 = count_below(&m2, e, PI, &SweepControls::default());
            if let (Ok(c1), Ok(c2)) = (c1, c2) {
                assert!((c1 as i64 - c2 as i64).unsigned_abs() as usize <= 2 * l);
            }
        }
    }

    #[test]
    fn sweep_with_basis_change_anchors_at_basis_phases() {
        let mut rng = rng_from_seed(97);
        let m = JacobiModel::random(2, 4, FieldTag::Real, &mut rng, false);
        let basis = crate::sampling::random_symplectic(2, FieldTag::Real, 0.3, &mut rng);
        let (lo, hi) = m.gershgorin_bounds();
        let tracks = sweep(&m, 10.0 * lo, 10.0 * hi, PI, Some(&basis), &SweepControls::default()).unwrap();
        // Theta still rises by ~2 pi N L; anchor absorbs the basis offset
        let expect = TWO_PI * 8.0;
        assert!(
            (tracks.total_rotation() - tracks.total[0] - expect).abs() < 0.8,
            "Theta span {}",
            tracks.total_rotation() - tracks.total[0]
        );
        // crossing count must be unchanged by the basis change: the phase-pi
        // family with M != 1 detects a different boundary, but total count
        // over the whole line is still NL
        assert_eq!(tracks.events.len(), 8);
    }

    #[test]
    fn pruefer_flow_at_complex_energy_is_contraction() {
        let m = JacobiModel::free(2, 5);
        let flow = pruefer_flow(&m, C64::new(0.3, 0.8), None).unwrap();
        for u in flow.iter().skip(1) {
            let s = crate::matrices::singular_values(u);
            assert!(s[0] < 1.0, "not a strict contraction: {}", s[0]);
        }
        // consistency with the Riccati flow through the Cayley transform
        let st = crate::jacobi::riccati_flow(&m, C64::new(0.3, 0.8)).unwrap();
        let last_u = &flow[5];
        let z = &st[4].z;
        let cay = (z - identity(2).map(|x| x * ci(1.0)))
            * crate::matrices::try_inverse(&(z + identity(2).map(|x| x * ci(1.0)))).unwrap();
        assert!(max_norm(&(last_u - cay)) < 1e-10);
    }
}
