//! The mock theta (Appell-Lerch) functions and their closed-form machinery.
//!
//! Defining bilateral sums (q = e^{2 pi i tau}, Im tau > 0):
//! ```text
//! Phi^{[m,s]}_1(tau,z1,z2,t) = e^{-2 pi i m t} sum_j e^{2 pi i (m j (z1+z2) + s z1)} q^{m j^2 + s j} / (1 - e^{2 pi i z1} q^j)
//! Phi^{[m,s]}_2(tau,z1,z2,t) = e^{-2 pi i m t} sum_j e^{-2 pi i (m j (z1+z2) + s z2)} q^{m j^2 + s j} / (1 - e^{-2 pi i z2} q^j)
//! Phi^{[m,s]}              = Phi_1 - Phi_2
//! ```
//! with m in (1/2)N and s in (1/2)Z.
//!
//! Besides the direct evaluator and the exact formal expander, this module
//! carries the closed forms (the Phi^{[1,0]} eta/vartheta quotient, the
//! s = 1/2 form with its s-shift corrections, and the half-odd-m s = 0 form)
//! and `phi_resolve`, which combines them with s-shifts and index doubling
//! into an evaluation plan for arbitrary (m, s).

use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::cyclo::CycloNum;
use crate::error::{Error, Result};
use crate::halfint::HalfInt;
use crate::series::{e2pi, rat, rat_int, Monomial, PuiseuxSeries, Region, Substitution, TruncationBox};
use crate::thetas::{check_domain, dedekind_eta, theta_diff, theta_km, theta_formal, vartheta, ThetaImage, ThetaIndex};

/// Minimum admissible distance of any summed denominator from zero.
pub const POLE_GUARD: f64 = 1e-6;
/// Relative threshold under which a closed form's theta prefactor counts as zero.
pub const PREFACTOR_GUARD: f64 = 1e-8;

const TAIL_EPS: f64 = 1e-17;
const STOP_RUN: usize = 5;
const J_CAP: i64 = 20_000;

/// Which of the three functions is requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhiComponent {
    One,
    Two,
    Diff,
}

impl PhiComponent {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "1" | "one" => Ok(PhiComponent::One),
            "2" | "two" => Ok(PhiComponent::Two),
            "diff" | "phi" => Ok(PhiComponent::Diff),
            _ => Err(Error::Usage(format!("unknown phi component `{s}`"))),
        }
    }
}

/// The triple (m, s, component) indexing Phi^{[m,s]}_1, Phi^{[m,s]}_2, Phi^{[m,s]}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhiSpec {
    pub m: HalfInt,
    pub s: HalfInt,
    pub component: PhiComponent,
}

impl PhiSpec {
    pub fn new(m: HalfInt, s: HalfInt, component: PhiComponent) -> Result<Self> {
        if !m.in_half_nat() {
            return Err(Error::Scope(format!("m = {m} must lie in (1/2)N")));
        }
        Ok(PhiSpec { m, s, component })
    }

    pub fn diff(m: HalfInt, s: HalfInt) -> Result<Self> {
        PhiSpec::new(m, s, PhiComponent::Diff)
    }
}

/// Numeric argument (tau, z1, z2, t) with Im tau > 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPoint {
    pub tau: Complex64,
    pub z1: Complex64,
    pub z2: Complex64,
    pub t: Complex64,
}

impl EvalPoint {
    pub fn new(tau: Complex64, z1: Complex64, z2: Complex64, t: Complex64) -> Result<Self> {
        check_domain(tau)?;
        Ok(EvalPoint { tau, z1, z2, t })
    }

    pub fn scale2(&self) -> EvalPoint {
        EvalPoint {
            tau: 2.0 * self.tau,
            z1: 2.0 * self.z1,
            z2: 2.0 * self.z2,
            t: 2.0 * self.t,
        }
    }
}

struct BilateralOutcome {
    value: Complex64,
    min_denom: f64,
}

/// Bilateral sum with denominators: expands outward from `center`, tracking
/// the smallest denominator distance met among the summed terms.
fn bilateral_guarded<F: Fn(i64) -> (Complex64, f64)>(center: i64, term: F) -> BilateralOutcome {
    let (v0, d0) = term(center);
    let mut acc = v0;
    let mut min_denom = d0;
    let mut peak = acc.norm().max(1e-300);
    for dir in [1i64, -1] {
        let mut run = 0;
        let mut j = center;
        loop {
            j += dir;
            if (j - center).abs() > J_CAP {
                break;
            }
            let (t, d) = term(j);
            acc += t;
            if d < min_denom {
                min_denom = d;
            }
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
    BilateralOutcome { value: acc, min_denom }
}

fn phi1_sum(m: f64, s: f64, tau: Complex64, z1: Complex64, z2: Complex64) -> BilateralOutcome {
    let zsum = z1 + z2;
    // |term_j| peaks near the vertex of m j^2 Im tau + j (m Im zsum + s Im tau)
    let center = (-(m * zsum.im / tau.im + s) / (2.0 * m)).round() as i64;
    bilateral_guarded(center, |j| {
        let jf = j as f64;
        let num = e2pi(zsum * (m * jf) + z1 * s + tau * (m * jf * jf + s * jf));
        let den = Complex64::new(1.0, 0.0) - e2pi(z1 + tau * jf);
        (num / den, den.norm())
    })
}

fn phi2_sum(m: f64, s: f64, tau: Complex64, z1: Complex64, z2: Complex64) -> BilateralOutcome {
    let zsum = z1 + z2;
    let center = ((m * zsum.im / tau.im - s) / (2.0 * m)).round() as i64;
    bilateral_guarded(center, |j| {
        let jf = j as f64;
        let num = e2pi(-zsum * (m * jf) - z2 * s + tau * (m * jf * jf + s * jf));
        let den = Complex64::new(1.0, 0.0) - e2pi(-z2 + tau * jf);
        (num / den, den.norm())
    })
}

/// Truncated defining sum; errors on Im tau <= 0 and on pole proximity.
///
/// Summed naively, the series is ill-conditioned wherever its value is far
/// smaller than its largest term: large |s| puts |q|^{-s^2/4m}-sized terms in
/// the sum (at m = 1/2 every theta bracket of the s-recurrence vanishes
/// identically, so Phi^{[1/2,s]} stays O(1) for every s), and tau-multiples
/// hidden in z1 or z2 de-center the denominators the same way. The evaluator
/// therefore first strips integer tau-multiples from z1 and z2 by the exact
/// re-indexing laws
/// ```text
/// Phi_i(tau, z1' + p tau, z2, t) = e^{-2 pi i m p (z1' + z2)} Phi_i(tau, z1', z2 - p tau, t)
/// Phi_i(tau, z1, z2' + p tau, t) = e^{-2 pi i m p z1} Phi_i at s + m p
/// ```
/// and then reduces s to its fractional part sigma in {0, 1/2} by the
/// s-recurrence, summing the defining series at sigma where the q-exponents
/// are bounded below by -1/(16 m). The finite theta corrections are products
/// of well-scaled factors, with analytically-zero brackets skipped exactly.
pub fn phi_direct(spec: &PhiSpec, point: &EvalPoint) -> Result<Complex64> {
    check_domain(point.tau)?;
    let m = spec.m.to_f64();
    let tau = point.tau;
    // strip tau-multiples from z1, then from z2 (an s-index shift by m p2)
    let p1 = (point.z1.im / tau.im).round();
    let z1 = point.z1 - p1 * tau;
    let z2a = point.z2 - p1 * tau;
    let p2 = (z2a.im / tau.im).round();
    let z2 = z2a - p2 * tau;
    let s_shifted = spec.s + spec.m * (p2 as i64);
    let mut pref = e2pi(-point.t * m);
    if p1 != 0.0 {
        pref *= e2pi(-(z1 + point.z2) * (m * p1));
    }
    if p2 != 0.0 {
        pref *= e2pi(-z1 * (m * p2));
    }
    // reduce s to sigma in {0, 1/2}
    let sigma = HalfInt::from_twice(s_shifted.twice().rem_euclid(2));
    let steps = (s_shifted - sigma).as_integer().unwrap();
    let s = sigma.to_f64();
    let mut min_denom = f64::INFINITY;
    let mut val = Complex64::new(0.0, 0.0);
    if spec.component != PhiComponent::Two {
        let o = phi1_sum(m, s, tau, z1, z2);
        min_denom = min_denom.min(o.min_denom);
        val += o.value;
    }
    if spec.component != PhiComponent::One {
        let o = phi2_sum(m, s, tau, z1, z2);
        min_denom = min_denom.min(o.min_denom);
        if spec.component == PhiComponent::Diff {
            val -= o.value;
        } else {
            val += o.value;
        }
    }
    if min_denom < POLE_GUARD {
        return Err(Error::PoleProximity { dist: min_denom, guard: POLE_GUARD });
    }
    if steps != 0 {
        val += s_shift_correction(spec.m, sigma, steps, spec.component, tau, z1, z2)?;
    }
    Ok(pref * val)
}

// ---------------------------------------------------------------------------
// Formal expansion
// ---------------------------------------------------------------------------

/// Formal expansion of Phi^{[m,s]} (component per spec) at t = 0, with the
/// arguments transformed by `sub`; exact within the box under the region.
pub fn phi_formal_at(
    spec: &PhiSpec,
    sub: &Substitution,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    let mut out = PuiseuxSeries::zero(bbox.clone(), region);
    if spec.component != PhiComponent::Two {
        out = out.add(&phi_component_formal(spec, sub, bbox, region, true)?)?;
    }
    if spec.component != PhiComponent::One {
        let part2 = phi_component_formal(spec, sub, bbox, region, false)?;
        out = match spec.component {
            PhiComponent::Diff => out.sub(&part2)?,
            _ => out.add(&part2)?,
        };
    }
    Ok(out)
}

/// Formal expansion with untransformed arguments.
pub fn phi_formal(spec: &PhiSpec, bbox: &TruncationBox, region: Region) -> Result<PuiseuxSeries> {
    phi_formal_at(spec, &Substitution::identity(), bbox, region)
}

fn phi_component_formal(
    spec: &PhiSpec,
    sub: &Substitution,
    bbox: &TruncationBox,
    region: Region,
    first: bool,
) -> Result<PuiseuxSeries> {
    let m = spec.m.to_rational();
    let s = spec.s.to_rational();
    let mut out = PuiseuxSeries::zero(bbox.clone(), region);
    // base monomial and denominator of the j-th term, in source coordinates
    let base_of = |j: i64| -> (Monomial, Monomial) {
        let jr = rat_int(j);
        let qe = &m * &jr * &jr + &s * &jr;
        if first {
            // x1^{m j + s} x2^{m j} q^{...}; denominator 1 - x1 q^j
            (
                Monomial::new(qe, &m * &jr + &s, &m * &jr),
                Monomial::new(jr, BigRational::one(), BigRational::zero()),
            )
        } else {
            // x1^{-m j} x2^{-m j - s} q^{...}; denominator 1 - x2^{-1} q^j
            (
                Monomial::new(qe, -(&m * &jr), -(&m * &jr) - &s),
                Monomial::new(jr, BigRational::zero(), -BigRational::one()),
            )
        }
    };
    let e_q_of = |j: i64| -> BigRational {
        let (b, _) = base_of(j);
        sub.apply(&b).0.e_q
    };
    // quadratic in j with positive leading coefficient (m times the q-scale);
    // scan outward from the vertex, stopping at the first excluded j per side
    let j0 = {
        let e_m1 = e_q_of(-1);
        let e_0 = e_q_of(0);
        let e_p1 = e_q_of(1);
        let two_a = &e_p1 + &e_m1 - rat_int(2) * &e_0;
        let b = (&e_p1 - &e_m1) / rat_int(2);
        if two_a.is_zero() {
            0
        } else {
            crate::series::to_f64(&(-&b / &two_a)).round() as i64
        }
    };
    let do_j = |out: &mut PuiseuxSeries, j: i64| -> Result<()> {
        let (base, den) = base_of(j);
        let (bm, btw) = sub.apply(&base);
        let (um, utw) = sub.apply(&den);
        let term = PuiseuxSeries::geom(bbox, region, &bm, &btw, &um, &utw)?;
        *out = out.add(&term)?;
        Ok(())
    };
    if e_q_of(j0) <= bbox.q_max {
        do_j(&mut out, j0)?;
    }
    for dir in [1i64, -1] {
        let mut j = j0 + dir;
        while e_q_of(j) <= bbox.q_max {
            do_j(&mut out, j)?;
            j += dir;
            if (j - j0).abs() > 10_000 {
                return Err(Error::UnsupportedSubstitution("phi j-range blew up".into()));
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// s-shift corrections (the recurrence in s)
// ---------------------------------------------------------------------------

/// Numeric correction such that
/// `Phi^{[m, s_base + steps]} = Phi^{[m, s_base]} + correction` at t = 0.
///
/// For steps >= 0 this is minus the sum over k = 0..steps-1, for steps < 0
/// plus the sum over k = steps..-1, of
/// e^{pi i (s+k)(z1-z2)} q^{-(s+k)^2/4m} Theta_k, with Theta_k the component's
/// theta bracket (theta_{s+k,m}, theta_{-(s+k),m}, or their difference).
pub fn s_shift_correction(
    m: HalfInt,
    s_base: HalfInt,
    steps: i64,
    component: PhiComponent,
    tau: Complex64,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    let mf = m.to_f64();
    let mut acc = Complex64::new(0.0, 0.0);
    let (range, sign) = if steps >= 0 {
        (0..steps, -1.0)
    } else {
        (steps..0, 1.0)
    };
    for k in range {
        let sk_half = s_base + HalfInt::from_int(k);
        // [theta_{K,m} - theta_{-K,m}] vanishes identically when K = -K
        // modulo the index period 2m, i.e. K/m is an integer; skipping it
        // exactly keeps the evaluation stable where the terms would be huge.
        if component == PhiComponent::Diff {
            let ratio_num = sk_half.twice(); // 2K
            let ratio_den = m.twice(); // 2m
            if ratio_num.rem_euclid(ratio_den) == 0 {
                continue;
            }
        }
        let sk = sk_half.to_f64();
        let bracket = match component {
            PhiComponent::One => theta_km(sk, mf, false, tau, z1 + z2)?,
            PhiComponent::Two => theta_km(-sk, mf, false, tau, z1 + z2)?,
            PhiComponent::Diff => theta_diff(sk, mf, false, tau, z1 + z2)?,
        };
        acc += e2pi((z1 - z2) * (sk / 2.0)) * e2pi(tau * (-sk * sk / (4.0 * mf))) * bracket;
    }
    Ok(acc * sign)
}

/// Formal counterpart of [`s_shift_correction`] at plain arguments.
pub fn s_shift_correction_formal(
    m: HalfInt,
    s_base: HalfInt,
    steps: i64,
    component: PhiComponent,
    bbox: &TruncationBox,
    region: Region,
) -> Result<PuiseuxSeries> {
    let mr = m.to_rational();
    let mut acc = PuiseuxSeries::zero(bbox.clone(), region);
    let (range, negate) = if steps >= 0 { (0..steps, true) } else { (steps..0, false) };
    for k in range {
        let sk = s_base.to_rational() + rat_int(k);
        // e^{pi i sk (z1 - z2)} q^{-sk^2/4m} = x1^{sk/2} x2^{-sk/2} q^{-sk^2/4m}
        let half = rat(1, 2);
        let pre = Monomial::new(
            -(&sk * &sk) / (rat_int(4) * &mr),
            &sk * &half,
            -(&sk * &half),
        );
        let img = ThetaImage::z1_plus_z2();
        let mut term = match component {
            PhiComponent::One => theta_formal(
                &ThetaIndex::new(sk.clone(), mr.clone(), false)?,
                &img, &pre, &CycloNum::one(1), bbox, region,
            )?,
            PhiComponent::Two => theta_formal(
                &ThetaIndex::new(-sk.clone(), mr.clone(), false)?,
                &img, &pre, &CycloNum::one(1), bbox, region,
            )?,
            PhiComponent::Diff => {
                let a = theta_formal(
                    &ThetaIndex::new(sk.clone(), mr.clone(), false)?,
                    &img, &pre, &CycloNum::one(1), bbox, region,
                )?;
                let b = theta_formal(
                    &ThetaIndex::new(-sk.clone(), mr.clone(), false)?,
                    &img, &pre, &CycloNum::one(1), bbox, region,
                )?;
                a.sub(&b)?
            }
        };
        if negate {
            term = term.neg();
        }
        acc = acc.add(&term)?;
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

/// Phi^{[1,0]}(tau, z1, z2, 0) = -i eta^3 vartheta_11(z1+z2) / (vartheta_11(z1) vartheta_11(z2)).
pub fn phi10_closed(tau: Complex64, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    let eta3 = dedekind_eta(tau)?.powi(3);
    let num = vartheta(1, 1, tau, z1 + z2)?;
    let d1 = vartheta(1, 1, tau, z1)?;
    let d2 = vartheta(1, 1, tau, z2)?;
    for (name, d) in [("vartheta11(z1)", d1), ("vartheta11(z2)", d2)] {
        if d.norm() < PREFACTOR_GUARD {
            return Err(Error::PrefactorZero { name: name.into(), magnitude: d.norm() });
        }
    }
    Ok(-Complex64::new(0.0, 1.0) * eta3 * num / (d1 * d2))
}

/// The two (j, r, k odd) sums shared by the s = 1/2 closed form and its
/// theta^- rewriting; adaptively truncated in j (the q-exponent grows
/// quadratically, so two consecutive negligible j-shells certify the tail).
pub(crate) fn cor34_sums(m: HalfInt, tau: Complex64, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    let two_m = m.twice(); // the value 2m as an integer
    let mf = m.to_f64();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut peak: f64 = 1.0;
    let mut quiet = 0;
    let mut j: i64 = 1;
    loop {
        let mut shell = Complex64::new(0.0, 0.0);
        let mut shell_peak: f64 = 0.0;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        for r in 1..=j {
            for k in (1..two_m).step_by(2) {
                let kf = k as f64;
                let e = (2.0 * mf + 1.0) * (j * j) as f64
                    - (4.0 * mf * (j - r) as f64 + kf).powi(2) / (8.0 * mf);
                let u = 4.0 * mf * r as f64 - kf;
                let t = sign
                    * e2pi(tau * e)
                    * (e2pi((z1 - z2) * (u / 2.0)) + e2pi(-(z1 - z2) * (u / 2.0)))
                    * theta_diff(kf, 2.0 * mf, false, tau, z1 + z2)?;
                shell += t;
                shell_peak = shell_peak.max(t.norm());
            }
        }
        for r in 0..j {
            for k in (1..two_m).step_by(2) {
                let kf = k as f64;
                let e = (2.0 * mf + 1.0) * (j * j) as f64
                    - (4.0 * mf * (j - r) as f64 - kf).powi(2) / (8.0 * mf);
                let u = 4.0 * mf * r as f64 + kf;
                let t = sign
                    * e2pi(tau * e)
                    * (e2pi((z1 - z2) * (u / 2.0)) + e2pi(-(z1 - z2) * (u / 2.0)))
                    * theta_diff(kf, 2.0 * mf, false, tau, z1 + z2)?;
                shell -= t;
                shell_peak = shell_peak.max(t.norm());
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

/// Number of correction terms in the s-shift of the s = 1/2 closed form.
pub fn half_odd_correction_terms(s: HalfInt) -> i64 {
    ((s.twice() - 1) / 2).max(0)
}

/// Closed form for Phi^{[m,s]}(2 tau, 2 z1, 2 z2, 0) with s in (1/2)N_odd:
/// the eta/vartheta quotient part plus the (j,r,k) sums, minus the prefactor
/// times the s-shift correction, all divided by the theta prefactor
/// theta_{0,2m+1}(tau, (-1/2 + 2m(z1-z2))/(2m+1)).
pub fn phi_closed_half_odd(
    m: HalfInt,
    s: HalfInt,
    tau: Complex64,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    if !m.in_half_nat() {
        return Err(Error::Scope(format!("m = {m} must lie in (1/2)N")));
    }
    if !s.in_half_nat_odd() {
        return Err(Error::Scope(format!("s = {s} must lie in (1/2)N_odd")));
    }
    check_domain(tau)?;
    let mf = m.to_f64();
    let mm = 2.0 * mf + 1.0;
    let pref = theta_km(0.0, mm, false, tau, ((z1 - z2) * (2.0 * mf) - 0.5) / mm)?;
    let eta2t3 = dedekind_eta(2.0 * tau)?.powi(3);
    let d1 = vartheta(1, 1, 2.0 * tau, 2.0 * z1)?;
    let d2 = vartheta(1, 1, 2.0 * tau, 2.0 * z2)?;
    let scale = eta2t3.norm().max(1.0);
    for (name, d) in [("vartheta11(2tau,2z1)", d1), ("vartheta11(2tau,2z2)", d2)] {
        if d.norm() < PREFACTOR_GUARD * scale {
            return Err(Error::PrefactorZero { name: name.into(), magnitude: d.norm() });
        }
    }
    let theta_part = -Complex64::new(0.0, 1.0)
        * eta2t3
        * (theta_km(0.0, mm, false, tau, (z1 - z2 + 0.5) / mm + z1 + z2)? / d1
            + theta_km(0.0, mm, false, tau, (z1 - z2 + 0.5) / mm - z1 - z2)? / d2);
    let sums = cor34_sums(m, tau, z1, z2)?;
    // built-in Lemma-2.1-style shift from s = 1/2 up to s
    let mut corr = Complex64::new(0.0, 0.0);
    for k in 0..half_odd_correction_terms(s) {
        let kf = k as f64;
        corr += e2pi((z1 - z2) * ((1.0 + 2.0 * kf) / 2.0))
            * e2pi(tau * (-(1.0 + 2.0 * kf).powi(2) / (8.0 * mf)))
            * theta_diff(0.5 + kf, mf, false, 2.0 * tau, 2.0 * (z1 + z2))?;
    }
    if pref.norm() < PREFACTOR_GUARD * scale.max(theta_part.norm()) {
        return Err(Error::PrefactorZero {
            name: "theta_{0,2m+1}".into(),
            magnitude: pref.norm(),
        });
    }
    Ok((theta_part + sums) / pref - corr)
}

/// The two (j, r, k even) sums of the half-odd-m closed form, including the
/// q^{-+u/2} bracket weights.
pub(crate) fn prop36_sums(m: HalfInt, tau: Complex64, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    let two_m = m.twice();
    let mf = m.to_f64();
    let mm = 2.0 * mf + 1.0;
    let mut acc = Complex64::new(0.0, 0.0);
    let mut peak: f64 = 1.0;
    let mut quiet = 0;
    let mut j: i64 = 1;
    loop {
        let mut shell = Complex64::new(0.0, 0.0);
        let mut shell_peak: f64 = 0.0;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        for r in 1..=j {
            for k in (0..two_m).step_by(2) {
                let kf = k as f64;
                let e = mm * (j * j) as f64
                    - (4.0 * mf * (j - r) as f64 + 2.0 * mf - kf).powi(2) / (8.0 * mf);
                let u = 4.0 * mf * r as f64 - 2.0 * mf + kf;
                let t = sign
                    * e2pi(tau * e)
                    * (e2pi((z1 - z2) * (u / 2.0) - tau * (u / 2.0))
                        + e2pi(-(z1 - z2) * (u / 2.0) + tau * (u / 2.0)))
                    * theta_diff(kf, 2.0 * mf, false, tau, z1 + z2)?;
                shell -= t;
                shell_peak = shell_peak.max(t.norm());
            }
        }
        for r in 0..j {
            for k in (0..two_m).step_by(2) {
                let kf = k as f64;
                let e = mm * (j * j) as f64
                    - (4.0 * mf * (j - r) as f64 - 2.0 * mf + kf).powi(2) / (8.0 * mf);
                let u = 4.0 * mf * r as f64 + 2.0 * mf - kf;
                let t = sign
                    * e2pi(tau * e)
                    * (e2pi((z1 - z2) * (u / 2.0) - tau * (u / 2.0))
                        + e2pi(-(z1 - z2) * (u / 2.0) + tau * (u / 2.0)))
                    * theta_diff(kf, 2.0 * mf, false, tau, z1 + z2)?;
                shell += t;
                shell_peak = shell_peak.max(t.norm());
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

/// Closed form for Phi^{[m,0]}(2 tau, 2 z1, 2 z2, 0) with m in (1/2)N_odd,
/// built on the alternating theta prefactor theta^-_{-2m,2m+1}.
pub fn phi_closed_odd_zero(
    m: HalfInt,
    tau: Complex64,
    z1: Complex64,
    z2: Complex64,
) -> Result<Complex64> {
    if !m.in_half_nat_odd() {
        return Err(Error::Scope(format!("m = {m} must lie in (1/2)N_odd")));
    }
    check_domain(tau)?;
    let mf = m.to_f64();
    let mm = 2.0 * mf + 1.0;
    let pref = theta_km(-2.0 * mf, mm, true, tau, (z1 - z2) * (2.0 * mf / mm))?;
    let eta2t3 = dedekind_eta(2.0 * tau)?.powi(3);
    let d1 = vartheta(1, 1, 2.0 * tau, 2.0 * z1)?;
    let d2 = vartheta(1, 1, 2.0 * tau, 2.0 * z2)?;
    let scale = eta2t3.norm().max(1.0);
    for (name, d) in [("vartheta11(2tau,2z1)", d1), ("vartheta11(2tau,2z2)", d2)] {
        if d.norm() < PREFACTOR_GUARD * scale {
            return Err(Error::PrefactorZero { name: name.into(), magnitude: d.norm() });
        }
    }
    let theta_part = -Complex64::new(0.0, 1.0)
        * eta2t3
        * (theta_km(2.0 * mf, mm, true, tau, (z1 - z2) / mm + z1 + z2)? / d1
            + theta_km(2.0 * mf, mm, true, tau, (z1 - z2) / mm - z1 - z2)? / d2);
    let pre = e2pi(tau * (-mf / (2.0 * mm)) + (z1 - z2) * (mf / mm));
    let sums = prop36_sums(m, tau, z1, z2)?;
    // final correction sum: k = 1 .. m - 1/2
    let mut corr = Complex64::new(0.0, 0.0);
    for k in 1..=((m.twice() - 1) / 2) {
        let kf = k as f64;
        corr += e2pi((z1 - z2) * kf) * e2pi(tau * (-kf * kf / (2.0 * mf)))
            * theta_diff(kf, mf, false, 2.0 * tau, 2.0 * (z1 + z2))?;
    }
    if pref.norm() < PREFACTOR_GUARD * scale.max(theta_part.norm()) {
        return Err(Error::PrefactorZero {
            name: "theta^-_{-2m,2m+1}".into(),
            magnitude: pref.norm(),
        });
    }
    Ok((theta_part + pre * sums) / pref + corr)
}

// ---------------------------------------------------------------------------
// Resolution algorithm
// ---------------------------------------------------------------------------

/// Closed-form-evaluable leaves of an evaluation plan.
#[derive(Clone, Debug, PartialEq)]
pub enum PlanLeaf {
    /// Phi^{[1,0]} via the eta/vartheta quotient.
    Phi10,
    /// Phi^{[m,1/2]} via the s = 1/2 closed form evaluated at (tau/2, z/2).
    HalfOdd { m: HalfInt },
    /// Phi^{[m,0]}, 2m odd, via the theta^- closed form at (tau/2, z/2).
    OddZero { m: HalfInt },
}

/// Expression tree over closed forms, s-shift corrections, and index doubling.
#[derive(Clone, Debug, PartialEq)]
pub enum PhiPlan {
    Leaf(PlanLeaf),
    /// value = child + correction(m, s_to -> s_from)
    SShift {
        m: HalfInt,
        s_from: HalfInt,
        s_to: HalfInt,
        child: Box<PhiPlan>,
    },
    /// Phi^{[2m',0]}(tau,..) = Phi^{[m',0]}(2tau,..) + Phi^{[m',1/2]}(2tau,..)
    Double {
        m: HalfInt,
        zero: Box<PhiPlan>,
        half: Box<PhiPlan>,
    },
}

impl PhiPlan {
    /// Nesting depth of doubling steps.
    pub fn doubling_depth(&self) -> u32 {
        match self {
            PhiPlan::Leaf(_) => 0,
            PhiPlan::SShift { child, .. } => child.doubling_depth(),
            PhiPlan::Double { zero, half, .. } => 1 + zero.doubling_depth().max(half.doubling_depth()),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out, 0);
        out
    }

    fn render_into(&self, out: &mut String, indent: usize) {
        let pad = "  ".repeat(indent);
        match self {
            PhiPlan::Leaf(PlanLeaf::Phi10) => out.push_str(&format!("{pad}phi[1,0] closed form\n")),
            PhiPlan::Leaf(PlanLeaf::HalfOdd { m }) => {
                out.push_str(&format!("{pad}phi[{m},1/2] closed form (s=1/2 route)\n"))
            }
            PhiPlan::Leaf(PlanLeaf::OddZero { m }) => {
                out.push_str(&format!("{pad}phi[{m},0] closed form (half-odd-m route)\n"))
            }
            PhiPlan::SShift { m, s_from, s_to, child } => {
                out.push_str(&format!("{pad}s-shift phi[{m},{s_to}] -> phi[{m},{s_from}]\n"));
                child.render_into(out, indent + 1);
            }
            PhiPlan::Double { m, zero, half } => {
                out.push_str(&format!(
                    "{pad}doubling phi[{m},0](tau) = phi[{h},0](2tau) + phi[{h},1/2](2tau)\n",
                    h = HalfInt::from_twice(m.twice() / 2)
                ));
                zero.render_into(out, indent + 1);
                half.render_into(out, indent + 1);
            }
        }
    }
}

/// A resolved evaluation plan for Phi^{[m,s]}.
#[derive(Clone, Debug, PartialEq)]
pub struct ResolvedPhi {
    pub m: HalfInt,
    pub s: HalfInt,
    pub plan: PhiPlan,
}

/// Build the plan: normalize s into {0, 1/2} by the s-recurrence, dispatch
/// s = 1/2 to the half-odd-s closed form, dispatch half-odd m (or m = 1) at
/// s = 0 to its closed form, and otherwise split off one doubling step.
pub fn phi_resolve(m: HalfInt, s: HalfInt) -> Result<ResolvedPhi> {
    if !m.in_half_nat() {
        return Err(Error::Usage(format!("m = {m} must lie in (1/2)N")));
    }
    let plan = if s.is_half_odd() {
        let steps = (s - HalfInt::HALF).as_integer().unwrap();
        let leaf = PhiPlan::Leaf(PlanLeaf::HalfOdd { m });
        if steps == 0 {
            leaf
        } else {
            PhiPlan::SShift { m, s_from: s, s_to: HalfInt::HALF, child: Box::new(leaf) }
        }
    } else {
        let steps = s.as_integer().unwrap();
        let core = zero_plan(m);
        if steps == 0 {
            core
        } else {
            PhiPlan::SShift { m, s_from: s, s_to: HalfInt::ZERO, child: Box::new(core) }
        }
    };
    Ok(ResolvedPhi { m, s, plan })
}

fn zero_plan(m: HalfInt) -> PhiPlan {
    if m == HalfInt::ONE {
        return PhiPlan::Leaf(PlanLeaf::Phi10);
    }
    if m.in_half_nat_odd() {
        return PhiPlan::Leaf(PlanLeaf::OddZero { m });
    }
    let half_m = HalfInt::from_twice(m.twice() / 2);
    PhiPlan::Double {
        m,
        zero: Box::new(zero_plan(half_m)),
        half: Box::new(PhiPlan::Leaf(PlanLeaf::HalfOdd { m: half_m })),
    }
}

/// Evaluate a plan at a point; agrees with `phi_direct` on the Diff component.
pub fn phi_eval_plan(resolved: &ResolvedPhi, point: &EvalPoint) -> Result<Complex64> {
    check_domain(point.tau)?;
    let pref = e2pi(-point.t * resolved.m.to_f64());
    Ok(pref * eval_plan_node(&resolved.plan, point.tau, point.z1, point.z2)?)
}

fn eval_plan_node(plan: &PhiPlan, tau: Complex64, z1: Complex64, z2: Complex64) -> Result<Complex64> {
    match plan {
        PhiPlan::Leaf(PlanLeaf::Phi10) => phi10_closed(tau, z1, z2),
        PhiPlan::Leaf(PlanLeaf::HalfOdd { m }) => {
            phi_closed_half_odd(*m, HalfInt::HALF, tau / 2.0, z1 / 2.0, z2 / 2.0)
        }
        PhiPlan::Leaf(PlanLeaf::OddZero { m }) => {
            phi_closed_odd_zero(*m, tau / 2.0, z1 / 2.0, z2 / 2.0)
        }
        PhiPlan::SShift { m, s_from, s_to, child } => {
            let base = eval_plan_node(child, tau, z1, z2)?;
            let steps = (*s_from - *s_to).as_integer().unwrap();
            Ok(base + s_shift_correction(*m, *s_to, steps, PhiComponent::Diff, tau, z1, z2)?)
        }
        PhiPlan::Double { zero, half, .. } => {
            let t2 = 2.0 * tau;
            Ok(eval_plan_node(zero, t2, 2.0 * z1, 2.0 * z2)?
                + eval_plan_node(half, t2, 2.0 * z1, 2.0 * z2)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt() -> EvalPoint {
        EvalPoint::new(
            Complex64::new(0.11, 0.92),
            Complex64::new(0.21, 0.03),
            Complex64::new(0.13, -0.045),
            Complex64::new(0.0, 0.0),
        )
        .unwrap()
    }

    fn resid(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / 1f64.max(a.norm()).max(b.norm())
    }

    #[test]
    fn t_prefactor() {
        let spec = PhiSpec::diff(HalfInt::from_twice(3), HalfInt::HALF).unwrap();
        let mut p = pt();
        p.t = Complex64::new(0.07, 0.01);
        let with_t = phi_direct(&spec, &p).unwrap();
        let p0 = EvalPoint { t: Complex64::new(0.0, 0.0), ..p };
        let at0 = phi_direct(&spec, &p0).unwrap();
        let expect = e2pi(-p.t * spec.m.to_f64()) * at0;
        assert!(resid(with_t, expect) < 1e-14);
    }

    #[test]
    fn s0_equals_s1_for_difference_only() {
        let p = pt();
        let m = HalfInt::from_twice(3);
        let d0 = phi_direct(&PhiSpec::diff(m, HalfInt::ZERO).unwrap(), &p).unwrap();
        let d1 = phi_direct(&PhiSpec::diff(m, HalfInt::ONE).unwrap(), &p).unwrap();
        assert!(resid(d0, d1) < 1e-10);
        // the components differ by exactly theta_{0,m}(tau, z1+z2)
        let c0 = phi_direct(&PhiSpec::new(m, HalfInt::ZERO, PhiComponent::One).unwrap(), &p).unwrap();
        let c1 = phi_direct(&PhiSpec::new(m, HalfInt::ONE, PhiComponent::One).unwrap(), &p).unwrap();
        let th = theta_km(0.0, m.to_f64(), false, p.tau, p.z1 + p.z2).unwrap();
        assert!(resid(c1, c0 - th) < 1e-12);
        assert!((c0 - c1).norm() > 1e-2, "components must actually differ");
    }

    #[test]
    fn swap_symmetry() {
        // Phi_1(tau, z1, z2, t) = Phi_2(tau, -z2, -z1, t)
        let p = pt();
        let m = HalfInt::from_twice(3);
        let s = HalfInt::HALF;
        let a = phi_direct(&PhiSpec::new(m, s, PhiComponent::One).unwrap(), &p).unwrap();
        let swapped = EvalPoint::new(p.tau, -p.z2, -p.z1, p.t).unwrap();
        let b = phi_direct(&PhiSpec::new(m, s, PhiComponent::Two).unwrap(), &swapped).unwrap();
        assert!(resid(a, b) < 1e-12);
    }

    #[test]
    fn phi10_closed_matches_direct() {
        let tau = Complex64::new(0.0, 0.85);
        let z1 = Complex64::new(0.21, 0.03);
        let z2 = Complex64::new(0.11, -0.04);
        let spec = PhiSpec::diff(HalfInt::ONE, HalfInt::ZERO).unwrap();
        let p = EvalPoint::new(tau, z1, z2, Complex64::new(0.0, 0.0)).unwrap();
        let direct = phi_direct(&spec, &p).unwrap();
        let closed = phi10_closed(tau, z1, z2).unwrap();
        assert!(resid(direct, closed) < 1e-10, "residual {}", resid(direct, closed));
    }

    #[test]
    fn closed_half_odd_vs_direct() {
        // m = 1, s = 1/2 at tau = 0.9i, z1 = 0.23, z2 = 0.07
        let tau = Complex64::new(0.0, 0.9);
        let z1 = Complex64::new(0.23, 0.0);
        let z2 = Complex64::new(0.07, 0.0);
        let closed = phi_closed_half_odd(HalfInt::ONE, HalfInt::HALF, tau, z1, z2).unwrap();
        let spec = PhiSpec::diff(HalfInt::ONE, HalfInt::HALF).unwrap();
        let p = EvalPoint::new(2.0 * tau, 2.0 * z1, 2.0 * z2, Complex64::new(0.0, 0.0)).unwrap();
        let direct = phi_direct(&spec, &p).unwrap();
        assert!(resid(closed, direct) < 1e-9, "residual {}", resid(closed, direct));
    }

    #[test]
    fn closed_half_odd_correction_count_and_scope() {
        assert_eq!(half_odd_correction_terms(HalfInt::from_twice(3)), 1);
        assert_eq!(half_odd_correction_terms(HalfInt::HALF), 0);
        let tau = Complex64::new(0.05, 0.9);
        let e = phi_closed_half_odd(
            HalfInt::ONE, HalfInt::ONE, tau,
            Complex64::new(0.2, 0.0), Complex64::new(0.07, 0.0),
        );
        assert!(matches!(e, Err(Error::Scope(_))));
    }

    #[test]
    fn closed_odd_zero_vs_direct() {
        let tau = Complex64::new(0.04, 0.88);
        let z1 = Complex64::new(0.21, 0.02);
        let z2 = Complex64::new(0.08, -0.03);
        for m in [HalfInt::HALF, HalfInt::from_twice(3)] {
            let closed = phi_closed_odd_zero(m, tau, z1, z2).unwrap();
            let spec = PhiSpec::diff(m, HalfInt::ZERO).unwrap();
            let p = EvalPoint::new(2.0 * tau, 2.0 * z1, 2.0 * z2, Complex64::new(0.0, 0.0)).unwrap();
            let direct = phi_direct(&spec, &p).unwrap();
            assert!(resid(closed, direct) < 1e-9, "m={m}: residual {}", resid(closed, direct));
        }
        assert!(matches!(
            phi_closed_odd_zero(HalfInt::ONE, tau, z1, z2),
            Err(Error::Scope(_))
        ));
    }

    #[test]
    fn resolve_shapes() {
        // (2, 0): one doubling step onto phi[1,0] and phi[1,1/2]
        let r = phi_resolve(HalfInt::from_int(2), HalfInt::ZERO).unwrap();
        match &r.plan {
            PhiPlan::Double { zero, half, .. } => {
                assert_eq!(**zero, PhiPlan::Leaf(PlanLeaf::Phi10));
                assert_eq!(**half, PhiPlan::Leaf(PlanLeaf::HalfOdd { m: HalfInt::ONE }));
            }
            other => panic!("expected doubling, got {other:?}"),
        }
        assert_eq!(r.plan.doubling_depth(), 1);
        // (3/2, 1/2): a single closed-form leaf
        let r = phi_resolve(HalfInt::from_twice(3), HalfInt::HALF).unwrap();
        assert_eq!(r.plan, PhiPlan::Leaf(PlanLeaf::HalfOdd { m: HalfInt::from_twice(3) }));
        // (4, 0): doubling depth 2
        let r = phi_resolve(HalfInt::from_int(4), HalfInt::ZERO).unwrap();
        assert_eq!(r.plan.doubling_depth(), 2);
        assert!(phi_resolve(HalfInt::ZERO, HalfInt::ZERO).is_err());
    }

    #[test]
    fn plan_matches_direct_spot_checks() {
        let p = EvalPoint::new(
            Complex64::new(0.0, 0.8),
            Complex64::new(0.19, 0.02),
            Complex64::new(0.05, -0.01),
            Complex64::new(0.0, 0.0),
        )
        .unwrap();
        for (m, s) in [
            (HalfInt::from_int(2), HalfInt::ZERO),
            (HalfInt::ONE, HalfInt::from_twice(7)),
            (HalfInt::from_twice(5), HalfInt::from_twice(-3)),
            (HalfInt::from_int(4), HalfInt::ZERO),
        ] {
            let r = phi_resolve(m, s).unwrap();
            let plan_val = phi_eval_plan(&r, &p).unwrap();
            let direct = phi_direct(&PhiSpec::diff(m, s).unwrap(), &p).unwrap();
            assert!(
                resid(plan_val, direct) < 1e-8,
                "(m,s) = ({m},{s}): residual {}",
                resid(plan_val, direct)
            );
        }
    }

    #[test]
    fn plan_leaf_transparency() {
        // an in-scope leaf plan evaluates exactly the same closed form
        let p = pt();
        let m = HalfInt::from_twice(3);
        let r = phi_resolve(m, HalfInt::HALF).unwrap();
        let via_plan = phi_eval_plan(&r, &p).unwrap();
        let directly = phi_closed_half_odd(m, HalfInt::HALF, p.tau / 2.0, p.z1 / 2.0, p.z2 / 2.0).unwrap();
        assert_eq!(via_plan, directly);
    }

    #[test]
    fn pole_proximity_detected() {
        // z1 = 0 makes the j = 0 denominator of Phi_1 vanish
        let p = EvalPoint::new(
            Complex64::new(0.0, 0.9),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.13, -0.05),
            Complex64::new(0.0, 0.0),
        )
        .unwrap();
        let spec = PhiSpec::diff(HalfInt::ONE, HalfInt::ZERO).unwrap();
        assert!(matches!(phi_direct(&spec, &p), Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn formal_j_window() {
        // only j with m j^2 + s j <= q_max contribute to the expansion
        let bbox = TruncationBox::with_q_order(4);
        let spec = PhiSpec::new(HalfInt::from_int(2), HalfInt::ZERO, PhiComponent::One).unwrap();
        let s = phi_formal(&spec, &bbox, Region::Standard).unwrap();
        // m = 2, s = 0: j in {-1, 0, 1} (2 j^2 <= 4); x2-exponent is exactly m*j
        let mut seen = std::collections::BTreeSet::new();
        for (mono, _) in s.terms() {
            seen.insert(mono.e_x2.clone());
        }
        for e in &seen {
            let v = crate::series::to_f64(e);
            assert!((-2.0..=2.0).contains(&v), "unexpected x2 exponent {v}");
        }
    }

    #[test]
    fn formal_embedding_matches_direct() {
        // region-interior point: |q| < |x2| <= |x1| < 1; the truncation tails
        // scale like (|q|/|x1|)^{q_max} (reciprocal branches), |x|^{W+1}
        // (x-windows) and |q|^{q_max}, so |q| must sit well below |x2|
        let tau = Complex64::new(0.02, 0.62);
        let z1 = Complex64::new(0.1, 0.22);
        let z2 = Complex64::new(-0.07, 0.25);
        let bbox = TruncationBox::new(
            rat_int(10),
            (rat_int(-18), rat_int(18)),
            (rat_int(-18), rat_int(18)),
        );
        for (m, s) in [
            (HalfInt::ONE, HalfInt::ZERO),
            (HalfInt::from_twice(3), HalfInt::HALF),
            (HalfInt::HALF, HalfInt::from_twice(-1)),
        ] {
            let spec = PhiSpec::diff(m, s).unwrap();
            let series = phi_formal(&spec, &bbox, Region::Standard).unwrap();
            let emb = series.embed_at(tau, z1, z2);
            let p = EvalPoint::new(tau, z1, z2, Complex64::new(0.0, 0.0)).unwrap();
            let direct = phi_direct(&spec, &p).unwrap();
            assert!(
                (emb - direct).norm() < 1e-8,
                "(m,s)=({m},{s}) diff {}",
                (emb - direct).norm()
            );
        }
    }

    #[test]
    fn formal_s0_minus_s1_is_exact_zero() {
        let bbox = TruncationBox::with_q_order(6);
        let m = HalfInt::from_twice(3);
        let a = phi_formal(&PhiSpec::diff(m, HalfInt::ZERO).unwrap(), &bbox, Region::Standard).unwrap();
        let b = phi_formal(&PhiSpec::diff(m, HalfInt::ONE).unwrap(), &bbox, Region::Standard).unwrap();
        let (eq, at) = a.equal_up_to(&b).unwrap();
        assert!(eq, "difference at {at:?}");
    }

    #[test]
    fn shift_correction_consistency() {
        // Phi^{[m, s+j]} = Phi^{[m, s]} + correction, numerically
        let p = pt();
        let m = HalfInt::from_twice(3);
        let s = HalfInt::HALF;
        for steps in [2i64, -2] {
            for comp in [PhiComponent::One, PhiComponent::Two, PhiComponent::Diff] {
                let shifted = phi_direct(
                    &PhiSpec::new(m, s + HalfInt::from_int(steps), comp).unwrap(),
                    &p,
                )
                .unwrap();
                let base = phi_direct(&PhiSpec::new(m, s, comp).unwrap(), &p).unwrap();
                let corr = s_shift_correction(m, s, steps, comp, p.tau, p.z1, p.z2).unwrap();
                assert!(resid(shifted, base + corr) < 1e-11, "steps={steps} comp={comp:?}");
            }
        }
    }
}
