//! Classical building blocks: Jacobi theta_{k,m} and its alternating variant,
//! Mumford vartheta_{ab}, and the Dedekind eta function. Each comes as a
//! numeric evaluator and a formal expander, plus the registry of
//! specialization/shift formulas the character formulas rely on.
//!
//! Conventions:
//! ```text
//! theta_{k,m}(tau, z)      = sum_j e^{2 pi i m (j + k/2m) z} q^{m (j + k/2m)^2}
//! theta^-_{k,m}(tau, z)    = same with an extra (-1)^j
//! vartheta_{ab}(tau, z)    = sum_n e^{pi i (n + a/2)^2 tau + 2 pi i (n + a/2)(z + b/2)}
//! eta(tau)                 = q^{1/24} prod_{n>=1} (1 - q^n)
//! ```
//! The vartheta convention is pinned by the identities it must reproduce:
//! vartheta_11(tau, z + 1/2) = -vartheta_10(tau, z),
//! vartheta_11(tau, -1/2) = 2 eta(2 tau)^2 / eta(tau), and
//! vartheta_11 vartheta_10 = (eta^2/eta(2 tau)) vartheta_11(2 tau, 2z).

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::cyclo::CycloNum;
use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::series::{e2pi, rat, rat_int, to_f64, Monomial, PuiseuxSeries, Region, TruncationBox};

/// Relative tail target for numeric truncations.
const TAIL_EPS: f64 = 1e-19;
/// Consecutive negligible terms required before a bilateral sum stops.
const STOP_RUN: usize = 5;
const J_CAP: i64 = 40_000;

pub fn check_domain(tau: Complex64) -> Result<()> {
    if tau.im <= 0.0 {
        return Err(Error::Domain(tau.im));
    }
    Ok(())
}

/// Bilateral adaptive sum: expands outward from `center` until `STOP_RUN`
/// consecutive terms on a side fall below TAIL_EPS times the running peak.
pub(crate) fn bilateral_sum<F: Fn(i64) -> Complex64>(center: i64, term: F) -> Complex64 {
    let mut acc = term(center);
    let mut peak = acc.norm().max(1e-300);
    for dir in [1i64, -1] {
        let mut run = 0;
        let mut j = center;
        loop {
            j += dir;
            if (j - center).abs() > J_CAP {
                break;
            }
            let t = term(j);
            acc += t;
            let n = t.norm();
            if n > peak {
                peak = n;
            }
            if n < TAIL_EPS * peak {
                run += 1;
                if run >= STOP_RUN {
                    break;
                }
            } else {
                run = 0;
            }
        }
    }
    acc
}

/// Index of theta_{k,m} / theta^-_{k,m}.
#[derive(Clone, Debug, PartialEq)]
pub struct ThetaIndex {
    pub k: BigRational,
    pub m: BigRational,
    pub alternating: bool,
}

impl ThetaIndex {
    pub fn new(k: BigRational, m: BigRational, alternating: bool) -> Result<Self> {
        if !m.is_positive() {
            return Err(Error::Scope(format!("theta index m = {m} must be positive")));
        }
        Ok(ThetaIndex { k, m, alternating })
    }
}

/// Numeric theta_{k,m}(tau, z), alternating when `alt`.
pub fn theta_km(k: f64, m: f64, alt: bool, tau: Complex64, z: Complex64) -> Result<Complex64> {
    check_domain(tau)?;
    let kappa = k / (2.0 * m);
    // peak of |q|^{m nu^2} |e^{2 pi i m nu z}| at nu = -Im z / (2 Im tau)
    let nu_star = -z.im / (2.0 * tau.im);
    let center = (nu_star - kappa).round() as i64;
    Ok(bilateral_sum(center, |j| {
        let nu = j as f64 + kappa;
        let w = tau * (m * nu * nu) + z * (m * nu);
        let t = e2pi(w);
        if alt && j.rem_euclid(2) == 1 {
            -t
        } else {
            t
        }
    }))
}

pub fn theta_km_rational(idx: &ThetaIndex, tau: Complex64, z: Complex64) -> Result<Complex64> {
    theta_km(to_f64(&idx.k), to_f64(&idx.m), idx.alternating, tau, z)
}

/// Convenience: [theta_{k,m} - theta_{-k,m}](tau, z) (alternating optional).
pub fn theta_diff(k: f64, m: f64, alt: bool, tau: Complex64, z: Complex64) -> Result<Complex64> {
    Ok(theta_km(k, m, alt, tau, z)? - theta_km(-k, m, alt, tau, z)?)
}

/// Mumford label (a, b) with a, b in {0, 1}.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MumfordLabel {
    pub a: u8,
    pub b: u8,
}

impl MumfordLabel {
    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a > 1 || b > 1 {
            return Err(Error::Usage(format!("vartheta label ({a},{b}) must use a,b in {{0,1}}")));
        }
        Ok(MumfordLabel { a, b })
    }
}

/// Numeric vartheta_{ab}(tau, z).
pub fn vartheta(a: u8, b: u8, tau: Complex64, z: Complex64) -> Result<Complex64> {
    check_domain(tau)?;
    let ah = a as f64 / 2.0;
    let bh = b as f64 / 2.0;
    let nu_star = -z.im / tau.im;
    let center = (nu_star - ah).round() as i64;
    Ok(bilateral_sum(center, |n| {
        let nu = n as f64 + ah;
        e2pi(tau * (nu * nu / 2.0) + (z + bh) * nu)
    }))
}

/// Numeric Dedekind eta(tau) = q^{1/24} prod (1 - q^n).
pub fn dedekind_eta(tau: Complex64) -> Result<Complex64> {
    check_domain(tau)?;
    let q = e2pi(tau);
    let qn_abs = q.norm();
    let n_max = ((TAIL_EPS.ln()) / qn_abs.ln()).ceil() as i64 + 2;
    let mut prod = e2pi(tau / 24.0);
    let mut qn = Complex64::new(1.0, 0.0);
    for _ in 1..=n_max {
        qn *= q;
        prod *= Complex64::new(1.0, 0.0) - qn;
    }
    Ok(prod)
}

// ---------------------------------------------------------------------------
// Formal expanders
// ---------------------------------------------------------------------------

/// Image of a theta argument pair (tau', z') inside the (q, x1, x2) substrate:
/// tau' = q_scale * tau and e^{2 pi i z'} = e^{2 pi i w_twist} * w.
#[derive(Clone, Debug)]
pub struct ThetaImage {
    pub q_scale: BigRational,
    pub w: Monomial,
    pub w_twist: BigRational,
}

impl ThetaImage {
    pub fn new(q_scale: BigRational, w: Monomial) -> Self {
        ThetaImage { q_scale, w, w_twist: BigRational::zero() }
    }

    pub fn with_twist(q_scale: BigRational, w: Monomial, w_twist: BigRational) -> Self {
        ThetaImage { q_scale, w, w_twist }
    }

    /// z' = z1 + z2 at unscaled tau.
    pub fn z1_plus_z2() -> Self {
        ThetaImage::new(
            BigRational::one(),
            Monomial::new(BigRational::zero(), BigRational::one(), BigRational::one()),
        )
    }
}

/// Formal theta_{k,m} with a folded-in monomial prefactor, exact within box.
pub fn theta_formal(
    idx: &ThetaIndex,
    img: &ThetaImage,
    pre_m: &Monomial,
    pre_c: &CycloNum,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    if !idx.m.is_positive() {
        return Err(Error::Scope("theta index m must be positive".into()));
    }
    if !img.q_scale.is_positive() {
        return Err(Error::UnsupportedSubstitution("theta q-scale must be positive".into()));
    }
    let mut out = PuiseuxSeries::zero(bbox.clone(), region);
    let kappa = &idx.k / (rat_int(2) * &idx.m);
    // E(j) = pre.e_q + alpha m (j+kappa)^2 + m (j+kappa) w.e_q, quadratic in j
    // with positive leading coefficient: scanning outward from the vertex and
    // stopping at the first excluded j on each side is exact.
    let e_of = |j: i64| -> BigRational {
        let nu = rat_int(j) + &kappa;
        let mnu = &idx.m * &nu;
        &pre_m.e_q + &img.q_scale * &mnu * &nu + &mnu * &img.w.e_q
    };
    let alpha_m = &img.q_scale * &idx.m;
    let lin = &idx.m * &img.w.e_q + rat_int(2) * &alpha_m * &kappa;
    let vertex = -&lin / (rat_int(2) * &alpha_m);
    let j0 = to_f64(&vertex).round() as i64;
    if e_of(j0) <= bbox.q_max {
        push_theta_term(&mut out, idx, img, pre_m, pre_c, j0, &kappa);
    }
    for dir in [1i64, -1] {
        let mut j = j0 + dir;
        while e_of(j) <= bbox.q_max {
            push_theta_term(&mut out, idx, img, pre_m, pre_c, j, &kappa);
            j += dir;
            if (j - j0).abs() > 100_000 {
                return Err(Error::UnsupportedSubstitution("theta j-range blew up".into()));
            }
        }
    }
    Ok(out)
}

fn push_theta_term(
    out: &mut PuiseuxSeries,
    idx: &ThetaIndex,
    img: &ThetaImage,
    pre_m: &Monomial,
    pre_c: &CycloNum,
    j: i64,
    kappa: &BigRational,
) {
    let nu = rat_int(j) + kappa;
    let mnu = &idx.m * &nu;
    let e_q = &pre_m.e_q + &img.q_scale * &mnu * &nu + &mnu * &img.w.e_q;
    let mono = Monomial::new(
        e_q,
        &pre_m.e_x1 + &mnu * &img.w.e_x1,
        &pre_m.e_x2 + &mnu * &img.w.e_x2,
    );
    let mut c = pre_c.mul_promoted(&CycloNum::root_of_unity(&(&mnu * &img.w_twist)));
    if idx.alternating && j.rem_euclid(2) == 1 {
        c = c.neg();
    }
    out.push(mono, c);
}

/// Formal eta(alpha tau) = q^{alpha/24} prod (1 - q^{alpha n}), exact within box.
pub fn eta_formal(alpha: &BigRational, bbox: &TruncationBox, region: Region) -> Result<PuiseuxSeries> {
    if !alpha.is_positive() {
        return Err(Error::UnsupportedSubstitution("eta scale must be positive".into()));
    }
    let lead = alpha / rat_int(24);
    let mut acc = PuiseuxSeries::monomial(bbox.clone(), region, Monomial::q_pow(lead.clone()), CycloNum::one(1));
    let span = &bbox.q_max - &lead;
    let mut n: i64 = 1;
    while rat_int(n) * alpha <= span {
        let mut factor = PuiseuxSeries::one(bbox.clone(), region);
        factor.push(Monomial::q_pow(rat_int(n) * alpha), CycloNum::from_i64(1, -1));
        acc = acc.mul(&factor)?;
        n += 1;
    }
    Ok(acc)
}

/// Formal 1/eta(alpha tau) = q^{-alpha/24} prod geom(q^{alpha n}).
pub fn eta_inv_formal(alpha: &BigRational, bbox: &TruncationBox, region: Region) -> Result<PuiseuxSeries> {
    if !alpha.is_positive() {
        return Err(Error::UnsupportedSubstitution("eta scale must be positive".into()));
    }
    let lead = -(alpha / rat_int(24));
    let mut acc =
        PuiseuxSeries::monomial(bbox.clone(), region, Monomial::q_pow(lead.clone()), CycloNum::one(1));
    let span = &bbox.q_max - &lead;
    let mut n: i64 = 1;
    while rat_int(n) * alpha <= span {
        let g = PuiseuxSeries::geom(
            bbox,
            region,
            &Monomial::one(),
            &CycloNum::one(1),
            &Monomial::q_pow(rat_int(n) * alpha),
            &CycloNum::one(1),
        )?;
        acc = acc.mul(&g)?;
        n += 1;
    }
    Ok(acc)
}

/// Formal vartheta_{ab}(alpha tau, z-image) by its defining sum.
pub fn vartheta_formal(
    label: MumfordLabel,
    img: &ThetaImage,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    // vartheta_{ab} = theta-like sum over nu = n + a/2 with q-exponent
    // alpha nu^2 / 2 and z-coefficient nu, twisted by e^{pi i nu b}.
    let mut out = PuiseuxSeries::zero(bbox.clone(), region);
    let a2 = rat(label.a as i64, 2);
    let half = rat(1, 2);
    let e_of = |n: i64| -> BigRational {
        let nu = rat_int(n) + &a2;
        &img.q_scale * &half * &nu * &nu + &nu * &img.w.e_q
    };
    let push_term = |out: &mut PuiseuxSeries, n: i64| {
        let nu = rat_int(n) + &a2;
        let mono = Monomial::new(
            e_of(n),
            &nu * &img.w.e_x1,
            &nu * &img.w.e_x2,
        );
        let twist = &nu * &img.w_twist + rat(label.b as i64, 2) * &nu;
        out.push(mono, CycloNum::root_of_unity(&twist));
    };
    // vertex at nu = -w.e_q / alpha
    let vertex = -(&img.w.e_q / &img.q_scale) - &a2;
    let n0 = to_f64(&vertex).round() as i64;
    if e_of(n0) <= bbox.q_max {
        push_term(&mut out, n0);
    }
    for dir in [1i64, -1] {
        let mut n = n0 + dir;
        while e_of(n) <= bbox.q_max {
            push_term(&mut out, n);
            n += dir;
            if (n - n0).abs() > 100_000 {
                return Err(Error::UnsupportedSubstitution("vartheta n-range blew up".into()));
            }
        }
    }
    Ok(out)
}

/// Formal 1/vartheta_{11}(alpha tau, z-image) by inverting the triple product
/// vartheta_11 = -i q^{alpha/8} w^{-1/2} (1-w) prod (1-q^{an})(1-w q^{an})(1-q^{an}/w).
pub fn vartheta11_inv_formal(
    img: &ThetaImage,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    if !img.w_twist.is_zero() {
        return Err(Error::UnsupportedSubstitution(
            "vartheta11 inversion implemented for untwisted z-images".into(),
        ));
    }
    let alpha = &img.q_scale;
    let w = &img.w;
    // prefactor inverse: (-i)^{-1} q^{-alpha/8} w^{1/2}
    let pre_mono = Monomial::q_pow(-(alpha / rat_int(8))).mul(&half_power(w));
    let pre_c = CycloNum::root_of_unity(&rat(1, 4)); // i = e^{2 pi i / 4}
    let mut acc = PuiseuxSeries::monomial(bbox.clone(), region, pre_mono, pre_c);
    // 1/(1-w)
    let g = PuiseuxSeries::geom(bbox, region, &Monomial::one(), &CycloNum::one(1), w, &CycloNum::one(1))?;
    acc = acc.mul(&g)?;
    // bound factors by the available q-span below q_max
    let min_e = acc.leading().map(|(m, _)| m.e_q.clone()).unwrap_or_else(BigRational::zero);
    let span = &bbox.q_max - &min_e;
    let mut n: i64 = 1;
    while rat_int(n) * alpha <= span {
        let qa = Monomial::q_pow(rat_int(n) * alpha);
        for u in [qa.clone(), qa.mul(w), qa.mul(&w.inv())] {
            let g = PuiseuxSeries::geom(bbox, region, &Monomial::one(), &CycloNum::one(1), &u, &CycloNum::one(1))?;
            acc = acc.mul(&g)?;
        }
        n += 1;
    }
    Ok(acc)
}

/// Formal 1/vartheta_{00} or 1/vartheta_{01} via the triple product
/// vartheta = prod (1-q^{an}) (1 -+ w q^{a(n-1/2)}) (1 -+ q^{a(n-1/2)}/w).
pub fn vartheta0b_inv_formal(
    b: u8,
    img: &ThetaImage,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    if !img.w_twist.is_zero() {
        return Err(Error::UnsupportedSubstitution(
            "vartheta0b inversion implemented for untwisted z-images".into(),
        ));
    }
    let alpha = &img.q_scale;
    let w = &img.w;
    let sign = if b == 0 { CycloNum::from_i64(1, -1) } else { CycloNum::from_i64(1, 1) };
    let mut acc = PuiseuxSeries::one(bbox.clone(), region);
    let span = bbox.q_max.clone();
    let mut n: i64 = 1;
    loop {
        let e_full = rat_int(n) * alpha;
        let e_half = (rat_int(2 * n - 1) / rat_int(2)) * alpha;
        if e_half > span && e_full > span {
            break;
        }
        if e_full <= span {
            let g = PuiseuxSeries::geom(
                bbox, region, &Monomial::one(), &CycloNum::one(1),
                &Monomial::q_pow(e_full), &CycloNum::one(1),
            )?;
            acc = acc.mul(&g)?;
        }
        if e_half <= span {
            let qh = Monomial::q_pow(e_half);
            for u in [qh.mul(w), qh.mul(&w.inv())] {
                let g = PuiseuxSeries::geom(bbox, region, &Monomial::one(), &CycloNum::one(1), &u, &sign)?;
                acc = acc.mul(&g)?;
            }
        }
        n += 1;
    }
    Ok(acc)
}

fn half_power(w: &Monomial) -> Monomial {
    let half = rat(1, 2);
    Monomial::new(&w.e_q * &half, &w.e_x1 * &half, &w.e_x2 * &half)
}

// ---------------------------------------------------------------------------
// Specialization / shift formulas
// ---------------------------------------------------------------------------

/// The individually addressable theta specialization & shift formulas used by
/// the character derivations. `TminusShiftC` and nothing else deviates from
/// the source display (its q-power must be -(m+1)^2/(2m+1); see the registry
/// catalogue note).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SpecialForm {
    /// vartheta_10(2t, z +- t/2) = q^{-1/16} e^{-+ pi i z/2} theta_{-+1/2,1}(t,z)
    B1Vartheta10,
    /// vartheta_11(2t, z +- t/2) = -+ i q^{-1/16} e^{-+ pi i z/2} theta^-_{-+1/2,1}(t,z)
    B1Vartheta11,
    /// theta_{0,m+1}(t, -1/2 + mt/(2(m+1))) = q^{-m^2/16(m+1)} e^{pi i m/4} theta_{-m/2,m+1}(t,1/2)
    B2Plus,
    /// theta_{0,m+1}(t, -(t+1)/(2(m+1)) + t/2) = q^{-m^2/16(m+1)} theta^-_{m/2,m+1}(t,0)
    B2Minus,
    /// theta_{0,m+1}(t, t/(2(m+1)) +- z) = q^{-1/16(m+1)} e^{-+ pi i z/2} theta_{+-1/2,m+1}(t,z)
    B3Plain,
    /// theta_{0,m+1}(t, (t+1)/(2(m+1)) +- z) = q^{-1/16(m+1)} e^{-+ pi i z/2} theta^-_{+-1/2,m+1}(t,z)
    B3Minus,
    /// theta^-_{0,2m+1}(t, 2m(w-t)/(2m+1)) = q^{-m^2/(2m+1)} e^{4 pi i m^2 w/(2m+1)} theta^-_{-2m,2m+1}(t, 2mw/(2m+1))
    TminusShiftA,
    /// theta^-_{0,2m+1}(t, (w-t)/(2m+1) + w' + t) = q^{-m^2/(2m+1)} e^{-2 pi i m(w/(2m+1)+w')} theta^-_{2m,2m+1}(t, w/(2m+1)+w')
    TminusShiftB,
    /// theta^-_{0,2m+1}(t, (w-t)/(2m+1) - w' - t) = -q^{-(m+1)^2/(2m+1)} e^{2 pi i (m+1)(w/(2m+1)-w')} theta^-_{2m,2m+1}(t, w/(2m+1)-w')
    TminusShiftC,
    /// theta^-_{-m,m+1}(t, m(t-1)/(2(m+1))) = q^{-m^2/16(m+1)} e^{pi i m^2/2(m+1)} theta_{m/2,m+1}(t,0)   [m odd]
    Tminus42MTau1,
    /// theta^-_{-m,m+1}(t, mt/(2(m+1))) = q^{-m^2/16(m+1)} theta^-_{m/2,m+1}(t,0)
    Tminus42MTau,
    /// theta^-_{m,m+1}(t, (t-1)/(2(m+1)) +- z) = q^{-1/16(m+1)} e^{-pi i m/2(m+1)} e^{-+ pi i z/2} theta_{+-(m+1/2),m+1}(t,z)
    Tminus42KTau1,
    /// theta^-_{m,m+1}(t, t/(2(m+1)) +- z) = q^{-1/16(m+1)} e^{-+ pi i z/2} theta^-_{+-(m+1/2),m+1}(t,z)
    Tminus42KTau,
}

impl SpecialForm {
    pub const ALL: [SpecialForm; 13] = [
        SpecialForm::B1Vartheta10,
        SpecialForm::B1Vartheta11,
        SpecialForm::B2Plus,
        SpecialForm::B2Minus,
        SpecialForm::B3Plain,
        SpecialForm::B3Minus,
        SpecialForm::TminusShiftA,
        SpecialForm::TminusShiftB,
        SpecialForm::TminusShiftC,
        SpecialForm::Tminus42MTau1,
        SpecialForm::Tminus42MTau,
        SpecialForm::Tminus42KTau1,
        SpecialForm::Tminus42KTau,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            SpecialForm::B1Vartheta10 => "b1-v10",
            SpecialForm::B1Vartheta11 => "b1-v11",
            SpecialForm::B2Plus => "b2-plus",
            SpecialForm::B2Minus => "b2-minus",
            SpecialForm::B3Plain => "b3-plain",
            SpecialForm::B3Minus => "b3-minus",
            SpecialForm::TminusShiftA => "tminus-shift-a",
            SpecialForm::TminusShiftB => "tminus-shift-b",
            SpecialForm::TminusShiftC => "tminus-shift-c",
            SpecialForm::Tminus42MTau1 => "tminus42-m-tau1",
            SpecialForm::Tminus42MTau => "tminus42-m-tau",
            SpecialForm::Tminus42KTau1 => "tminus42-k-tau1",
            SpecialForm::Tminus42KTau => "tminus42-k-tau",
        }
    }

    pub fn from_id(s: &str) -> Option<SpecialForm> {
        SpecialForm::ALL.iter().copied().find(|f| f.id() == s)
    }

    /// Whether the form takes an index parameter m and its required domain.
    pub fn scope(&self) -> &'static str {
        match self {
            SpecialForm::B1Vartheta10 | SpecialForm::B1Vartheta11 => "no m; sign in {+1,-1}",
            SpecialForm::B2Plus | SpecialForm::B2Minus => "m in N",
            SpecialForm::B3Plain | SpecialForm::B3Minus => "m in N; sign in {+1,-1}",
            SpecialForm::TminusShiftA | SpecialForm::TminusShiftB | SpecialForm::TminusShiftC => {
                "m in (1/2)N"
            }
            SpecialForm::Tminus42MTau1 => "m in N_odd",
            SpecialForm::Tminus42MTau => "m in N",
            SpecialForm::Tminus42KTau1 | SpecialForm::Tminus42KTau => "m in N; sign in {+1,-1}",
        }
    }

    fn check_scope(&self, m: HalfInt) -> Result<()> {
        let ok = match self {
            SpecialForm::B1Vartheta10 | SpecialForm::B1Vartheta11 => true,
            SpecialForm::B2Plus
            | SpecialForm::B2Minus
            | SpecialForm::B3Plain
            | SpecialForm::B3Minus
            | SpecialForm::Tminus42MTau
            | SpecialForm::Tminus42KTau1
            | SpecialForm::Tminus42KTau => m.in_nat(),
            SpecialForm::TminusShiftA | SpecialForm::TminusShiftB | SpecialForm::TminusShiftC => {
                m.in_half_nat()
            }
            SpecialForm::Tminus42MTau1 => m.in_nat_odd(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Scope(format!(
                "form {} requires {} (got m = {m})",
                self.id(),
                self.scope()
            )))
        }
    }

    /// |LHS - RHS| / max(1, |LHS|, |RHS|) of the formula at the point.
    ///
    /// `z2` supplies the auxiliary w' of the shift laws (ignored elsewhere);
    /// `sign` selects the branch of the +- forms (ignored elsewhere).
    pub fn residual(
        &self,
        m: HalfInt,
        sign: i32,
        tau: Complex64,
        z: Complex64,
        z2: Complex64,
    ) -> Result<f64> {
        self.check_scope(m)?;
        check_domain(tau)?;
        if !(sign == 1 || sign == -1) {
            return Err(Error::Usage("sign must be +1 or -1".into()));
        }
        let s = sign as f64;
        let mf = m.to_f64();
        let i = Complex64::new(0.0, 1.0);
        let qp = |e: f64| e2pi(tau * e);
        // e^{pi i w / 2}
        let eph = |w: Complex64| e2pi(w / 4.0);
        let (lhs, rhs) = match self {
            SpecialForm::B1Vartheta10 => (
                vartheta(1, 0, 2.0 * tau, z + tau * (s * 0.5))?,
                qp(-1.0 / 16.0) * eph(-z * s) * theta_km(-s * 0.5, 1.0, false, tau, z)?,
            ),
            SpecialForm::B1Vartheta11 => (
                vartheta(1, 1, 2.0 * tau, z + tau * (s * 0.5))?,
                -s * i * qp(-1.0 / 16.0) * eph(-z * s) * theta_km(-s * 0.5, 1.0, true, tau, z)?,
            ),
            SpecialForm::B2Plus => (
                theta_km(0.0, mf + 1.0, false, tau, tau * (mf / (2.0 * (mf + 1.0))) - 0.5)?,
                qp(-mf * mf / (16.0 * (mf + 1.0)))
                    * e2pi(Complex64::new(mf / 8.0, 0.0))
                    * theta_km(-mf / 2.0, mf + 1.0, false, tau, Complex64::new(0.5, 0.0))?,
            ),
            SpecialForm::B2Minus => (
                theta_km(0.0, mf + 1.0, false, tau, -(tau + 1.0) / (2.0 * (mf + 1.0)) + tau * 0.5)?,
                qp(-mf * mf / (16.0 * (mf + 1.0)))
                    * theta_km(mf / 2.0, mf + 1.0, true, tau, Complex64::new(0.0, 0.0))?,
            ),
            SpecialForm::B3Plain => (
                theta_km(0.0, mf + 1.0, false, tau, tau / (2.0 * (mf + 1.0)) + z * s)?,
                qp(-1.0 / (16.0 * (mf + 1.0))) * eph(-z * s)
                    * theta_km(s * 0.5, mf + 1.0, false, tau, z)?,
            ),
            SpecialForm::B3Minus => (
                theta_km(0.0, mf + 1.0, false, tau, (tau + 1.0) / (2.0 * (mf + 1.0)) + z * s)?,
                qp(-1.0 / (16.0 * (mf + 1.0))) * eph(-z * s)
                    * theta_km(s * 0.5, mf + 1.0, true, tau, z)?,
            ),
            SpecialForm::TminusShiftA => {
                let mm = 2.0 * mf + 1.0;
                (
                    theta_km(0.0, mm, true, tau, (z - tau) * (2.0 * mf / mm))?,
                    qp(-mf * mf / mm) * e2pi(z * (2.0 * mf * mf / mm))
                        * theta_km(-2.0 * mf, mm, true, tau, z * (2.0 * mf / mm))?,
                )
            }
            SpecialForm::TminusShiftB => {
                let mm = 2.0 * mf + 1.0;
                (
                    theta_km(0.0, mm, true, tau, (z - tau) / mm + z2 + tau)?,
                    qp(-mf * mf / mm) * e2pi(-(z / mm + z2) * mf)
                        * theta_km(2.0 * mf, mm, true, tau, z / mm + z2)?,
                )
            }
            SpecialForm::TminusShiftC => {
                let mm = 2.0 * mf + 1.0;
                (
                    theta_km(0.0, mm, true, tau, (z - tau) / mm - z2 - tau)?,
                    -qp(-(mf + 1.0) * (mf + 1.0) / mm) * e2pi((z / mm - z2) * (mf + 1.0))
                        * theta_km(2.0 * mf, mm, true, tau, z / mm - z2)?,
                )
            }
            SpecialForm::Tminus42MTau1 => (
                theta_km(-mf, mf + 1.0, true, tau, (tau - 1.0) * (mf / (2.0 * (mf + 1.0))))?,
                qp(-mf * mf / (16.0 * (mf + 1.0)))
                    * e2pi(Complex64::new(mf * mf / (4.0 * (mf + 1.0)), 0.0))
                    * theta_km(mf / 2.0, mf + 1.0, false, tau, Complex64::new(0.0, 0.0))?,
            ),
            SpecialForm::Tminus42MTau => (
                theta_km(-mf, mf + 1.0, true, tau, tau * (mf / (2.0 * (mf + 1.0))))?,
                qp(-mf * mf / (16.0 * (mf + 1.0)))
                    * theta_km(mf / 2.0, mf + 1.0, true, tau, Complex64::new(0.0, 0.0))?,
            ),
            SpecialForm::Tminus42KTau1 => (
                theta_km(mf, mf + 1.0, true, tau, (tau - 1.0) / (2.0 * (mf + 1.0)) + z * s)?,
                qp(-1.0 / (16.0 * (mf + 1.0)))
                    * e2pi(Complex64::new(-mf / (4.0 * (mf + 1.0)), 0.0))
                    * eph(-z * s)
                    * theta_km(s * (mf + 0.5), mf + 1.0, false, tau, z)?,
            ),
            SpecialForm::Tminus42KTau => (
                theta_km(mf, mf + 1.0, true, tau, tau / (2.0 * (mf + 1.0)) + z * s)?,
                qp(-1.0 / (16.0 * (mf + 1.0))) * eph(-z * s)
                    * theta_km(s * (mf + 0.5), mf + 1.0, true, tau, z)?,
            ),
        };
        Ok((lhs - rhs).norm() / 1f64.max(lhs.norm()).max(rhs.norm()))
    }
}
