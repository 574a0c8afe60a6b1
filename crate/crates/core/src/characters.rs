//! N=3 character and supercharacter computation for the modules labelled by
//! (m, m2), by two independent routes, plus exact q-expansion output.
//!
//! Route A (definition): ch^{(+-)}(tau, z) is q^{-m/16} times
//! Phi^{[m/2,(m2+1)/2]} at the arguments
//! ```text
//! (2 tau, z + tau/2 - 1/2, z - tau/2 + 1/2, 0)   (character,      +)
//! (2 tau, z + tau/2,       z - tau/2,       0)   (supercharacter, -)
//! ```
//! divided by the denominators
//! ```text
//! R^(+) = eta(tau/2) eta(2 tau) vartheta_11 / vartheta_00
//! R^(-) = eta(tau)^3 / eta(tau/2) * vartheta_11 / vartheta_01
//! ```
//! with Phi evaluated by the defining sum.
//!
//! Route B (closed): the m2 = 0 and m2 = 1 closed forms built from
//! theta/eta quotients and finite triple sums, extended to all m2 by the
//! finite theta-difference corrections; no defining sum is evaluated. Two
//! readings were settled against route A and are used here (see the registry
//! catalogue): the m2 = 1 character's leading coefficient is
//! -i e^{-pi i m/2} rather than -i, and the m2 = 1 supercharacter carries
//! vartheta_01, not vartheta_00.

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::appell::{
    phi_direct, phi_eval_plan, phi_formal_at, phi_resolve, EvalPoint, PhiComponent, PhiSpec,
};
use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::series::{
    e2pi, rat, rat_int, ArgImage, Monomial, PuiseuxSeries, Region, Substitution, TruncationBox,
};
use crate::thetas::{
    check_domain, dedekind_eta, eta_formal, eta_inv_formal, theta_diff, theta_km, vartheta,
    vartheta0b_inv_formal, vartheta11_inv_formal, vartheta_formal, MumfordLabel, ThetaImage,
};

/// Character (+) vs supercharacter (-).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CharKind {
    Plus,
    Minus,
}

impl CharKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "+" | "plus" => Ok(CharKind::Plus),
            "-" | "minus" => Ok(CharKind::Minus),
            _ => Err(Error::Usage(format!("unknown character sign `{s}`"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            CharKind::Plus => "plus",
            CharKind::Minus => "minus",
        }
    }
}

/// Module label (m, m2) with 1 <= m and 0 <= m2 <= m; the level is -(m+2)/4.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModuleLabel {
    pub m: i64,
    pub m2: i64,
}

impl ModuleLabel {
    pub fn new(m: i64, m2: i64) -> Result<Self> {
        if m < 1 {
            return Err(Error::Scope(format!("m = {m} must be a positive integer")));
        }
        if m2 < 0 || m2 > m {
            return Err(Error::Scope(format!("m2 = {m2} must satisfy 0 <= m2 <= {m}")));
        }
        Ok(ModuleLabel { m, m2 })
    }

    /// The level K(m) = -(m+2)/4.
    pub fn level(&self) -> BigRational {
        rat(-(self.m + 2), 4)
    }
}

const DENOM_GUARD: f64 = 1e-8;

/// The N=3 denominator R^{(kind)}(tau, z); errors where it vanishes
/// (vartheta_11(tau, 0) = 0 makes z = 0 a zero for both kinds).
pub fn r_denominator(kind: CharKind, tau: Complex64, z: Complex64) -> Result<Complex64> {
    check_domain(tau)?;
    let v11 = vartheta(1, 1, tau, z)?;
    let r = match kind {
        CharKind::Plus => {
            let v00 = vartheta(0, 0, tau, z)?;
            dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)? * v11 / v00
        }
        CharKind::Minus => {
            let v01 = vartheta(0, 1, tau, z)?;
            dedekind_eta(tau)?.powi(3) / dedekind_eta(tau / 2.0)? * v11 / v01
        }
    };
    if r.norm() < DENOM_GUARD {
        return Err(Error::PrefactorZero { name: format!("R^({})", kind.label()), magnitude: r.norm() });
    }
    Ok(r)
}

/// The (tau, z1, z2) arguments Phi is specialized to for each kind.
pub fn phi_arguments(kind: CharKind, tau: Complex64, z: Complex64) -> (Complex64, Complex64, Complex64) {
    match kind {
        CharKind::Plus => (2.0 * tau, z + tau * 0.5 - 0.5, z - tau * 0.5 + 0.5),
        CharKind::Minus => (2.0 * tau, z + tau * 0.5, z - tau * 0.5),
    }
}

/// Route A: q^{-m/16} Phi^{[m/2,(m2+1)/2]}(args) / R^{(kind)}, with Phi by
/// the defining sum.
pub fn char_via_definition(
    label: ModuleLabel,
    kind: CharKind,
    tau: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    check_domain(tau)?;
    let (t2, a1, a2) = phi_arguments(kind, tau, z);
    let spec = PhiSpec::diff(HalfInt::from_twice(label.m), HalfInt::from_twice(label.m2 + 1))?;
    let phi = phi_direct(&spec, &EvalPoint::new(t2, a1, a2, Complex64::new(0.0, 0.0))?)?;
    let r = r_denominator(kind, tau, z)?;
    Ok(e2pi(-tau * (label.m as f64 / 16.0)) * phi / r)
}

// ---------------------------------------------------------------------------
// Route B internals: the finite triple sums of the closed forms
// ---------------------------------------------------------------------------

/// The two (j, r, k odd) sums of the m2 = 0 closed form, with the corrected
/// q-exponent j^2 - (2mr -+ k)^2/4m and, for the character, the root-of-unity
/// weights. Returns sum1 - sum2.
pub(crate) fn m20_sums(m: i64, with_phases: bool, tau: Complex64, z: Complex64) -> Result<Complex64> {
    let mf = m as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut peak: f64 = 1.0;
    let mut quiet = 0;
    let mut j: i64 = 1;
    loop {
        let mut shell = Complex64::new(0.0, 0.0);
        let mut shell_peak: f64 = 0.0;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let jf = j as f64;
        for (second, r_range) in [(false, 1..=j), (true, 0..=(j - 1))] {
            for r in r_range {
                let rf = r as f64;
                for k in (1..m).step_by(2) {
                    let kf = k as f64;
                    let u = if second { 2.0 * mf * rf + kf } else { 2.0 * mf * rf - kf };
                    let base = jf * jf - u * u / (4.0 * mf) - mf / 16.0;
                    let (w_plus, w_minus) = if with_phases {
                        // e^{pi i (2mr+k)/2} with the q^{(j+1/4)u} piece and
                        // e^{pi i u/2} with the q^{(j-1/4)u} piece
                        let other = if second { 2.0 * mf * rf - kf } else { 2.0 * mf * rf + kf };
                        (
                            e2pi(Complex64::new(other / 4.0, 0.0)),
                            e2pi(Complex64::new(u / 4.0, 0.0)),
                        )
                    } else {
                        (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
                    };
                    let t = sign
                        * e2pi(tau * base)
                        * (e2pi(tau * ((jf + 0.25) * u)) * w_plus
                            + e2pi(tau * ((jf - 0.25) * u)) * w_minus)
                        * theta_diff(kf, mf, false, tau, z)?;
                    let signed = if second { -t } else { t };
                    shell += signed;
                    shell_peak = shell_peak.max(t.norm());
                }
            }
        }
        acc += shell;
        peak = peak.max(shell_peak);
        if shell_peak < 1e-18 * peak {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        j += 1;
        if j > 400 {
            break;
        }
    }
    Ok(acc)
}

/// The two (j, r, k even) sums of the m2 = 1 closed form (exponents in the
/// (2m(j-r) -+ (m-k)) presentation); `with_phases` adds the character's
/// e^{-+ pi i u/2} weights. Returns sum1 - sum2 in the orientation in which
/// the closed form subtracts the first block.
pub(crate) fn m21_sums(m: i64, with_phases: bool, tau: Complex64, z: Complex64) -> Result<Complex64> {
    let mf = m as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut peak: f64 = 1.0;
    let mut quiet = 0;
    let mut j: i64 = 1;
    loop {
        let mut shell = Complex64::new(0.0, 0.0);
        let mut shell_peak: f64 = 0.0;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        let jf = j as f64;
        for (second, r_range) in [(false, 1..=j), (true, 0..=(j - 1))] {
            for r in r_range {
                let rf = r as f64;
                for k in (0..m).step_by(2) {
                    let kf = k as f64;
                    let (inner, u) = if second {
                        (2.0 * mf * (jf - rf) - mf + kf, 2.0 * mf * rf + mf - kf)
                    } else {
                        (2.0 * mf * (jf - rf) + mf - kf, 2.0 * mf * rf - mf + kf)
                    };
                    let base = (mf + 1.0) * jf * jf - inner * inner / (4.0 * mf);
                    let (w_minus, w_plus) = if with_phases {
                        (
                            e2pi(Complex64::new(-u / 4.0, 0.0)),
                            e2pi(Complex64::new(u / 4.0, 0.0)),
                        )
                    } else {
                        (Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0))
                    };
                    let t = sign
                        * e2pi(tau * base)
                        * (w_minus * e2pi(tau * (-u / 4.0)) + w_plus * e2pi(tau * (u / 4.0)))
                        * theta_diff(kf, mf, false, tau, z)?;
                    let signed = if second { -t } else { t };
                    shell += signed;
                    shell_peak = shell_peak.max(t.norm());
                }
            }
        }
        acc += shell;
        peak = peak.max(shell_peak);
        if shell_peak < 1e-18 * peak {
            quiet += 1;
            if quiet >= 2 {
                break;
            }
        } else {
            quiet = 0;
        }
        j += 1;
        if j > 400 {
            break;
        }
    }
    Ok(acc)
}

/// Final finite correction of the m2 = 1 closed form:
/// sum_{k=1}^{(m-1)/2} (+-(-1)^k) q^{-(4k-m)^2/16m} [theta_{k,m/2} - theta_{-k,m/2}](2 tau, 2z).
pub(crate) fn m21_tail(m: i64, with_signs: bool, tau: Complex64, z: Complex64) -> Result<Complex64> {
    let mf = m as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 1..=((m - 1) / 2) {
        let kf = k as f64;
        let sgn = if with_signs && k % 2 == 1 { -1.0 } else { 1.0 };
        acc += sgn
            * e2pi(tau * (-(4.0 * kf - mf).powi(2) / (16.0 * mf)))
            * theta_diff(kf, mf / 2.0, false, 2.0 * tau, 2.0 * z)?;
    }
    Ok(acc)
}

/// Route B for m2 in {0, 1}: the closed forms. m2 = 1 requires odd m.
pub fn char_closed(
    label: ModuleLabel,
    kind: CharKind,
    tau: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    check_domain(tau)?;
    let m = label.m;
    let mf = m as f64;
    let i = Complex64::new(0.0, 1.0);
    let v11 = vartheta(1, 1, tau, z)?;
    if v11.norm() < DENOM_GUARD {
        return Err(Error::PrefactorZero { name: "vartheta11".into(), magnitude: v11.norm() });
    }
    match (label.m2, kind) {
        (0, CharKind::Plus) => {
            let v00 = vartheta(0, 0, tau, z)?;
            let den = theta_km(-mf / 2.0, mf + 1.0, false, tau, Complex64::new(0.5, 0.0))?;
            guard("theta_{-m/2,m+1}(tau,1/2)", den)?;
            let quot = theta_km(0.5, mf + 1.0, false, tau, z)? / nz(theta_km(-0.5, 1.0, false, tau, z)?)?
                - theta_km(-0.5, mf + 1.0, false, tau, z)? / nz(theta_km(0.5, 1.0, false, tau, z)?)?;
            let p1 = -i * e2pi(Complex64::new(-mf / 8.0, 0.0))
                * dedekind_eta(2.0 * tau)?.powi(2) / dedekind_eta(tau / 2.0)?
                * v00 / v11 / den
                * quot;
            let p2 = e2pi(tau * (mf * mf / (16.0 * (mf + 1.0))))
                * e2pi(Complex64::new(-mf / 8.0, 0.0))
                / (dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?)
                * v00 / v11 / den
                * m20_sums(m, true, tau, z)?;
            Ok(p1 + p2)
        }
        (0, CharKind::Minus) => {
            let v01 = vartheta(0, 1, tau, z)?;
            let den = theta_km(mf / 2.0, mf + 1.0, true, tau, Complex64::new(0.0, 0.0))?;
            guard("theta^-_{m/2,m+1}(tau,0)", den)?;
            let quot = theta_km(0.5, mf + 1.0, true, tau, z)? / nz(theta_km(-0.5, 1.0, true, tau, z)?)?
                - theta_km(-0.5, mf + 1.0, true, tau, z)? / nz(theta_km(0.5, 1.0, true, tau, z)?)?;
            let p1 = dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?.powi(3)
                / dedekind_eta(tau)?.powi(3)
                * v01 / v11 / den
                * quot;
            let p2 = e2pi(tau * (mf * mf / (16.0 * (mf + 1.0))))
                * dedekind_eta(tau / 2.0)? / dedekind_eta(tau)?.powi(3)
                * v01 / v11 / den
                * m20_sums(m, false, tau, z)?;
            Ok(p1 + p2)
        }
        (1, kind) => {
            if m % 2 == 0 {
                return Err(Error::Scope(format!(
                    "the m2 = 1 closed form requires m odd (got m = {m})"
                )));
            }
            match kind {
                CharKind::Plus => {
                    let v00 = vartheta(0, 0, tau, z)?;
                    let den = theta_km(mf / 2.0, mf + 1.0, false, tau, Complex64::new(0.0, 0.0))?;
                    guard("theta_{m/2,m+1}(tau,0)", den)?;
                    let quot = theta_km(mf + 0.5, mf + 1.0, false, tau, z)?
                        / nz(theta_km(-0.5, 1.0, false, tau, z)?)?
                        - theta_km(-mf - 0.5, mf + 1.0, false, tau, z)?
                            / nz(theta_km(0.5, 1.0, false, tau, z)?)?;
                    // verified leading coefficient: -i e^{-pi i m/2}
                    let coef = -i * e2pi(Complex64::new(-mf / 4.0, 0.0));
                    let p1 = coef * dedekind_eta(2.0 * tau)?.powi(2) / dedekind_eta(tau / 2.0)?
                        * v00 / v11 / den
                        * quot;
                    let p2 = -e2pi(tau * (-mf / (16.0 * (mf + 1.0))))
                        * e2pi(Complex64::new(-mf / 4.0, 0.0))
                        / (dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?)
                        * v00 / v11 / den
                        * m21_sums(m, true, tau, z)?;
                    let p3 = 1.0 / (dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?)
                        * v00 / v11
                        * m21_tail(m, true, tau, z)?;
                    Ok(p1 + p2 + p3)
                }
                CharKind::Minus => {
                    // verified reading: vartheta_01 (not vartheta_00)
                    let v01 = vartheta(0, 1, tau, z)?;
                    let den = theta_km(mf / 2.0, mf + 1.0, true, tau, Complex64::new(0.0, 0.0))?;
                    guard("theta^-_{m/2,m+1}(tau,0)", den)?;
                    let quot = theta_km(mf + 0.5, mf + 1.0, true, tau, z)?
                        / nz(theta_km(-0.5, 1.0, true, tau, z)?)?
                        - theta_km(-mf - 0.5, mf + 1.0, true, tau, z)?
                            / nz(theta_km(0.5, 1.0, true, tau, z)?)?;
                    let p1 = dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?.powi(3)
                        / dedekind_eta(tau)?.powi(3)
                        * v01 / v11 / den
                        * quot;
                    let p2 = -e2pi(tau * (-mf / (16.0 * (mf + 1.0))))
                        * dedekind_eta(tau / 2.0)? / dedekind_eta(tau)?.powi(3)
                        * v01 / v11 / den
                        * m21_sums(m, false, tau, z)?;
                    let p3 = dedekind_eta(tau / 2.0)? / dedekind_eta(tau)?.powi(3)
                        * v01 / v11
                        * m21_tail(m, false, tau, z)?;
                    Ok(p1 + p2 + p3)
                }
            }
        }
        (m2, _) => Err(Error::Scope(format!(
            "char_closed handles m2 in {{0,1}} (got m2 = {m2}); use char_general"
        ))),
    }
}

fn guard(name: &str, v: Complex64) -> Result<()> {
    if v.norm() < DENOM_GUARD {
        return Err(Error::PrefactorZero { name: name.into(), magnitude: v.norm() });
    }
    Ok(())
}

fn nz(v: Complex64) -> Result<Complex64> {
    guard("theta quotient denominator", v)?;
    Ok(v)
}

/// The finite theta-difference correction ch_{m2} - ch_{m2 mod 2}, in the
/// verified reading (prefactors +i / -1 / -1 / -1 for even+, even-, odd+,
/// odd- respectively).
pub fn p43_correction(
    label: ModuleLabel,
    kind: CharKind,
    tau: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    check_domain(tau)?;
    let m = label.m;
    let m2 = label.m2;
    let mf = m as f64;
    let v11 = vartheta(1, 1, tau, z)?;
    guard("vartheta11", v11)?;
    let even = m2 % 2 == 0;
    let mut tot = Complex64::new(0.0, 0.0);
    if even {
        for k in 0..(m2 / 2) {
            let kf = k as f64 + 0.5;
            let sgn = match kind {
                CharKind::Plus => {
                    if k % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                CharKind::Minus => 1.0,
            };
            tot += sgn
                * e2pi(tau * (-kf * kf / mf + kf / 2.0))
                * theta_diff(kf, mf / 2.0, false, 2.0 * tau, 2.0 * z)?;
        }
    } else {
        for k in 0..=((m2 - 1) / 2) {
            let kf = k as f64;
            let sgn = match kind {
                CharKind::Plus => {
                    if k % 2 == 1 {
                        -1.0
                    } else {
                        1.0
                    }
                }
                CharKind::Minus => 1.0,
            };
            tot += sgn
                * e2pi(tau * (-kf * kf / mf + kf / 2.0))
                * theta_diff(kf, mf / 2.0, false, 2.0 * tau, 2.0 * z)?;
        }
    }
    let coef = match (even, kind) {
        (true, CharKind::Plus) => Complex64::new(0.0, 1.0),
        _ => Complex64::new(-1.0, 0.0),
    };
    let pref = match kind {
        CharKind::Plus => {
            let v00 = vartheta(0, 0, tau, z)?;
            e2pi(tau * (-mf / 16.0)) / (dedekind_eta(tau / 2.0)? * dedekind_eta(2.0 * tau)?)
                * v00 / v11
        }
        CharKind::Minus => {
            let v01 = vartheta(0, 1, tau, z)?;
            e2pi(tau * (-mf / 16.0)) * dedekind_eta(tau / 2.0)? / dedekind_eta(tau)?.powi(3)
                * v01 / v11
        }
    };
    Ok(coef * pref * tot)
}

/// Route B for arbitrary 0 <= m2 <= m: the base-case closed form plus the
/// finite theta-difference correction. For even m with odd m2, where the
/// m2 = 1 closed form is out of scope, the base character is evaluated
/// through the Phi resolution plan (still free of defining sums).
pub fn char_general(
    label: ModuleLabel,
    kind: CharKind,
    tau: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    check_domain(tau)?;
    let base_m2 = label.m2 % 2;
    let base_label = ModuleLabel::new(label.m, base_m2)?;
    let base = if base_m2 == 0 || label.m % 2 == 1 {
        char_closed(base_label, kind, tau, z)?
    } else {
        char_base_via_plan(base_label, kind, tau, z)?
    };
    if label.m2 == base_m2 {
        return Ok(base);
    }
    Ok(base + p43_correction(label, kind, tau, z)?)
}

/// Base character q^{-m/16} Phi^{[m/2,(m2+1)/2]}(args)/R evaluated through the
/// closed-form plan instead of the defining sum.
fn char_base_via_plan(
    label: ModuleLabel,
    kind: CharKind,
    tau: Complex64,
    z: Complex64,
) -> Result<Complex64> {
    let (t2, a1, a2) = phi_arguments(kind, tau, z);
    let resolved = phi_resolve(
        HalfInt::from_twice(label.m),
        HalfInt::from_twice(label.m2 + 1),
    )?;
    let phi = phi_eval_plan(&resolved, &EvalPoint::new(t2, a1, a2, Complex64::new(0.0, 0.0))?)?;
    let r = r_denominator(kind, tau, z)?;
    Ok(e2pi(-tau * (label.m as f64 / 16.0)) * phi / r)
}

// ---------------------------------------------------------------------------
// Formal q-expansion (in q and y = e^{2 pi i z})
// ---------------------------------------------------------------------------

/// The y-variable image: formal expansions use the x1 slot for y.
fn y_monomial() -> Monomial {
    Monomial::new(BigRational::zero(), BigRational::one(), BigRational::zero())
}

/// Formal R^{(kind)}(tau, z) as a series in (q, y).
pub fn r_denominator_formal(
    kind: CharKind,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    let img = ThetaImage::new(BigRational::one(), y_monomial());
    let work = bbox.inflate_x(8);
    let v11 = vartheta_formal(MumfordLabel::new(1, 1)?, &img, &work, region)?;
    let out = match kind {
        CharKind::Plus => {
            let e1 = eta_formal(&rat(1, 2), &work, region)?;
            let e2 = eta_formal(&rat_int(2), &work, region)?;
            let v00i = vartheta0b_inv_formal(0, &img, &work, region)?;
            e1.mul(&e2)?.mul(&v11)?.mul(&v00i)?
        }
        CharKind::Minus => {
            let e1 = eta_formal(&BigRational::one(), &work, region)?;
            let e3 = e1.mul(&e1)?.mul(&e1)?;
            let e_half_inv = eta_inv_formal(&rat(1, 2), &work, region)?;
            let v01i = vartheta0b_inv_formal(1, &img, &work, region)?;
            e3.mul(&e_half_inv)?.mul(&v11)?.mul(&v01i)?
        }
    };
    Ok(out.into_box(bbox.clone()))
}

/// Formal expansion of the route-A defining expression: q^{-m/16} times the
/// Phi expansion at the substituted arguments, times the factored inverse of
/// R^{(kind)}; exact within the box.
pub fn char_expand(
    label: ModuleLabel,
    kind: CharKind,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    let m = label.m;
    // inner working box: q-slack for the negative leading exponents on both
    // factors, x-slack for the y-window compensation inside products
    let q_slack = rat_int(2 + m / 16 + 1);
    let q_int: i64 = num_traits::ToPrimitive::to_i64(&bbox.q_max.ceil().to_integer()).unwrap_or(10);
    let work_n = TruncationBox {
        q_max: &bbox.q_max + &q_slack,
        ..bbox.inflate_x(2 * q_int.max(1) + 16)
    };
    // Phi^{[m/2,(m2+1)/2]}(2 tau, z + tau/2 [- 1/2], z - tau/2 [+ 1/2], 0)
    let (d1, d2) = match kind {
        CharKind::Plus => (rat(-1, 2), rat(1, 2)),
        CharKind::Minus => (BigRational::zero(), BigRational::zero()),
    };
    let sub = Substitution {
        q: ArgImage::of_monomial(Monomial::q_pow(rat_int(2))),
        x1: ArgImage::with_twist(
            Monomial::new(rat(1, 2), BigRational::one(), BigRational::zero()),
            d1,
        ),
        x2: ArgImage::with_twist(
            Monomial::new(rat(-1, 2), BigRational::one(), BigRational::zero()),
            d2,
        ),
    };
    let spec = PhiSpec::new(
        HalfInt::from_twice(m),
        HalfInt::from_twice(label.m2 + 1),
        PhiComponent::Diff,
    )?;
    let numerator = phi_formal_at(&spec, &sub, &work_n, region)?
        .mul_monomial(&Monomial::q_pow(rat(-m, 16)), &crate::cyclo::CycloNum::one(1));
    let min_n = numerator
        .leading()
        .map(|(mo, _)| mo.e_q.clone())
        .unwrap_or_else(|| BigRational::zero());
    let inv_q_max = if min_n < BigRational::zero() {
        &bbox.q_max - &min_n + rat_int(1)
    } else {
        &bbox.q_max + rat_int(1)
    };
    let work_r = TruncationBox { q_max: inv_q_max, ..work_n.clone() };
    let img = ThetaImage::new(BigRational::one(), y_monomial());
    let inv_r = match kind {
        CharKind::Plus => {
            let v00 = vartheta_formal(MumfordLabel::new(0, 0)?, &img, &work_r, region)?;
            let e1i = eta_inv_formal(&rat(1, 2), &work_r, region)?;
            let e2i = eta_inv_formal(&rat_int(2), &work_r, region)?;
            let v11i = vartheta11_inv_formal(&img, &work_r, region)?;
            v00.mul(&e1i)?.mul(&e2i)?.mul(&v11i)?
        }
        CharKind::Minus => {
            let v01 = vartheta_formal(MumfordLabel::new(0, 1)?, &img, &work_r, region)?;
            let e_half = eta_formal(&rat(1, 2), &work_r, region)?;
            let e1i = eta_inv_formal(&BigRational::one(), &work_r, region)?;
            let e3i = e1i.mul(&e1i)?.mul(&e1i)?;
            let v11i = vartheta11_inv_formal(&img, &work_r, region)?;
            v01.mul(&e_half)?.mul(&e3i)?.mul(&v11i)?
        }
    };
    let numerator = numerator.into_box(work_r.clone());
    Ok(numerator.mul(&inv_r)?.into_box(bbox.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tau0() -> Complex64 {
        Complex64::new(0.08, 0.9)
    }

    fn z0() -> Complex64 {
        Complex64::new(0.23, 0.015)
    }

    fn resid(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / 1f64.max(a.norm()).max(b.norm())
    }

    #[test]
    fn r_denominator_recomposition() {
        // R^(+) is the stated product of building blocks
        let r = r_denominator(CharKind::Plus, tau0(), z0()).unwrap();
        let manual = dedekind_eta(tau0() / 2.0).unwrap()
            * dedekind_eta(2.0 * tau0()).unwrap()
            * vartheta(1, 1, tau0(), z0()).unwrap()
            / vartheta(0, 0, tau0(), z0()).unwrap();
        assert!(resid(r, manual) < 1e-14);
        // R^(-) * vartheta_01 = eta^3 vartheta_11 / eta(tau/2)
        let rm = r_denominator(CharKind::Minus, tau0(), z0()).unwrap();
        let lhs = rm * vartheta(0, 1, tau0(), z0()).unwrap();
        let rhs = dedekind_eta(tau0()).unwrap().powi(3) * vartheta(1, 1, tau0(), z0()).unwrap()
            / dedekind_eta(tau0() / 2.0).unwrap();
        assert!(resid(lhs, rhs) < 1e-12);
        // z = 0: zero-denominator error for both kinds
        for kind in [CharKind::Plus, CharKind::Minus] {
            assert!(matches!(
                r_denominator(kind, tau0(), Complex64::new(0.0, 0.0)),
                Err(Error::PrefactorZero { .. })
            ));
        }
    }

    #[test]
    fn label_validation() {
        assert!(ModuleLabel::new(2, 5).is_err());
        assert!(ModuleLabel::new(0, 0).is_err());
        assert_eq!(ModuleLabel::new(2, 2).unwrap().level(), rat(-1, 1));
    }

    #[test]
    fn definition_route_is_finite() {
        let v = char_via_definition(ModuleLabel::new(1, 0).unwrap(), CharKind::Plus, tau0(), z0()).unwrap();
        assert!(v.norm().is_finite() && v.norm() > 0.0);
        let v = char_via_definition(ModuleLabel::new(2, 2).unwrap(), CharKind::Minus, tau0(), z0()).unwrap();
        assert!(v.norm().is_finite() && v.norm() > 0.0);
    }

    #[test]
    fn closed_matches_definition_m2_0() {
        for m in 1..=4 {
            for kind in [CharKind::Plus, CharKind::Minus] {
                let label = ModuleLabel::new(m, 0).unwrap();
                let a = char_via_definition(label, kind, tau0(), z0()).unwrap();
                let b = char_closed(label, kind, tau0(), z0()).unwrap();
                assert!(
                    resid(a, b) < 1e-8,
                    "m={m} {:?}: residual {}",
                    kind,
                    resid(a, b)
                );
            }
        }
    }

    #[test]
    fn closed_matches_definition_m2_1_odd_m() {
        for m in [1i64, 3] {
            for kind in [CharKind::Plus, CharKind::Minus] {
                let label = ModuleLabel::new(m, 1).unwrap();
                let a = char_via_definition(label, kind, tau0(), z0()).unwrap();
                let b = char_closed(label, kind, tau0(), z0()).unwrap();
                assert!(
                    resid(a, b) < 1e-8,
                    "m={m} {:?}: residual {}",
                    kind,
                    resid(a, b)
                );
            }
        }
    }

    #[test]
    fn closed_scope_errors() {
        // m = 2, m2 = 1: requires odd m
        let e = char_closed(ModuleLabel::new(2, 1).unwrap(), CharKind::Plus, tau0(), z0());
        assert!(matches!(e, Err(Error::Scope(_))));
        let e = char_closed(ModuleLabel::new(3, 2).unwrap(), CharKind::Plus, tau0(), z0());
        assert!(matches!(e, Err(Error::Scope(_))));
    }

    #[test]
    fn general_route_all_m2() {
        for m in 1..=4i64 {
            for m2 in 0..=m {
                for kind in [CharKind::Plus, CharKind::Minus] {
                    let label = ModuleLabel::new(m, m2).unwrap();
                    let a = char_via_definition(label, kind, tau0(), z0()).unwrap();
                    let b = char_general(label, kind, tau0(), z0()).unwrap();
                    assert!(
                        resid(a, b) < 1e-8,
                        "m={m} m2={m2} {:?}: residual {}",
                        kind,
                        resid(a, b)
                    );
                }
            }
        }
    }

    #[test]
    fn p43_standalone() {
        for (m, m2) in [(3i64, 2i64), (4, 3), (4, 4)] {
            for kind in [CharKind::Plus, CharKind::Minus] {
                let label = ModuleLabel::new(m, m2).unwrap();
                let base = ModuleLabel::new(m, m2 % 2).unwrap();
                let lhs = char_via_definition(label, kind, tau0(), z0()).unwrap()
                    - char_via_definition(base, kind, tau0(), z0()).unwrap();
                let rhs = p43_correction(label, kind, tau0(), z0()).unwrap();
                assert!(
                    resid(lhs, rhs) < 1e-9,
                    "m={m} m2={m2} {:?}: residual {}",
                    kind,
                    resid(lhs, rhs)
                );
            }
        }
    }

    #[test]
    fn expand_embeds_to_definition() {
        // deep tau keeps every truncation tail below the tolerance
        let tau = Complex64::new(0.015, 1.05);
        let z = Complex64::new(0.04, 0.3);
        let bbox = TruncationBox::new(
            rat_int(6),
            (rat_int(-14), rat_int(14)),
            (rat_int(-14), rat_int(14)),
        );
        for kind in [CharKind::Plus, CharKind::Minus] {
            let label = ModuleLabel::new(1, 0).unwrap();
            let series = char_expand(label, kind, &bbox, Region::Standard).unwrap();
            let emb = series.embed_at(tau, z, Complex64::new(0.0, 0.0));
            let direct = char_via_definition(label, kind, tau, z).unwrap();
            assert!(
                (emb - direct).norm() < 1e-6,
                "{:?}: diff {}",
                kind,
                (emb - direct).norm()
            );
        }
    }

    #[test]
    fn expand_deterministic() {
        let bbox = TruncationBox::new(
            rat_int(4),
            (rat_int(-10), rat_int(10)),
            (rat_int(-10), rat_int(10)),
        );
        let label = ModuleLabel::new(2, 1).unwrap();
        let a = char_expand(label, CharKind::Minus, &bbox, Region::Standard).unwrap();
        let b = char_expand(label, CharKind::Minus, &bbox, Region::Standard).unwrap();
        assert_eq!(
            serde_json::to_string(&a.to_json()).unwrap(),
            serde_json::to_string(&b.to_json()).unwrap()
        );
        // leading q-exponent is finite and reported
        let (lead, _) = a.leading().expect("nonempty expansion");
        assert!(lead.e_q.denom() <= &num_bigint::BigInt::from(96));
    }
}
