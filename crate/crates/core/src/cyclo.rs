//! Exact cyclotomic numbers: finite Q-linear combinations of roots of unity
//! e^{2 pi i a/L}, canonicalized modulo the L-th cyclotomic polynomial.
//!
//! `CycloNum` is the coefficient domain for all formal expansions. Canonical
//! form means the representing polynomial is the remainder modulo Phi_L, so a
//! value is zero exactly when its term map is empty; this is what makes
//! exact equality checking of truncated series possible.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use num_bigint::BigInt;
use num_complex::Complex64;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Exact division of integer polynomials (panics if not exact); used only to
/// build cyclotomic polynomials where divisibility is guaranteed.
fn poly_div_exact(num: &[BigInt], den: &[BigInt]) -> Vec<BigInt> {
    let mut rem: Vec<BigInt> = num.to_vec();
    let dd = den.len() - 1;
    let lead = den[dd].clone();
    assert!(!lead.is_zero());
    if rem.len() < den.len() {
        assert!(rem.iter().all(|c| c.is_zero()));
        return vec![BigInt::zero()];
    }
    let mut quot = vec![BigInt::zero(); rem.len() - dd];
    for i in (dd..rem.len()).rev() {
        let c = rem[i].clone();
        if c.is_zero() {
            continue;
        }
        let (q, r) = c.div_rem(&lead);
        assert!(r.is_zero(), "inexact polynomial division");
        quot[i - dd] = q.clone();
        for (k, dk) in den.iter().enumerate() {
            let idx = i - dd + k;
            let sub = &q * dk;
            rem[idx] -= sub;
        }
    }
    assert!(rem.iter().all(|c| c.is_zero()), "inexact polynomial division");
    quot
}

/// x^n - 1.
fn xn_minus_1(n: u64) -> Vec<BigInt> {
    let mut v = vec![BigInt::zero(); n as usize + 1];
    v[0] = BigInt::from(-1);
    v[n as usize] = BigInt::one();
    v
}

fn divisors(n: u64) -> Vec<u64> {
    let mut d = Vec::new();
    let mut i = 1;
    while i * i <= n {
        if n % i == 0 {
            d.push(i);
            if i != n / i {
                d.push(n / i);
            }
        }
        i += 1;
    }
    d.sort_unstable();
    d
}

/// Phi_L as a monic integer polynomial, via Phi_L = prod_{d | L} Phi_d
/// inverted: Phi_L(x) = (x^L - 1) / prod_{d | L, d < L} Phi_d(x).
fn cyclotomic_poly_uncached(l: u64) -> Vec<BigInt> {
    if l == 1 {
        return vec![BigInt::from(-1), BigInt::one()];
    }
    let mut num = xn_minus_1(l);
    for d in divisors(l) {
        if d < l {
            let phi_d = cyclotomic_poly(d);
            num = poly_div_exact(&num, &phi_d);
        }
    }
    num
}

fn cyclotomic_poly(l: u64) -> Vec<BigInt> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Vec<BigInt>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(p) = cache.lock().unwrap().get(&l) {
        return p.clone();
    }
    let p = cyclotomic_poly_uncached(l);
    cache.lock().unwrap().insert(l, p.clone());
    p
}

/// An exact element of Q(zeta_L), zeta_L = e^{2 pi i / L}.
///
/// Terms map residues a mod L to rational coefficients; the stored map is the
/// canonical remainder modulo Phi_L, so `is_zero` is exact.
#[derive(Clone, PartialEq, Eq)]
pub struct CycloNum {
    order: u64,
    terms: BTreeMap<u64, BigRational>,
}

impl CycloNum {
    /// Canonicalize a raw exponent->coefficient map at order L: exponents are
    /// reduced mod L, then the polynomial is reduced modulo Phi_L.
    pub fn new(order: u64, raw: BTreeMap<u64, BigRational>) -> Self {
        assert!(order >= 1, "cyclotomic order must be >= 1");
        let mut folded: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (e, c) in raw {
            if c.is_zero() {
                continue;
            }
            let e = e % order;
            let entry = folded.entry(e).or_insert_with(BigRational::zero);
            *entry += c;
        }
        let mut out = CycloNum { order, terms: folded };
        out.reduce();
        out
    }

    /// Raw map constructor over signed exponents.
    pub fn from_signed(order: u64, raw: impl IntoIterator<Item = (i64, BigRational)>) -> Self {
        let l = order as i64;
        let mut map: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (e, c) in raw {
            let e = e.rem_euclid(l) as u64;
            let entry = map.entry(e).or_insert_with(BigRational::zero);
            *entry += c;
        }
        CycloNum::new(order, map)
    }

    pub fn zero(order: u64) -> Self {
        CycloNum { order, terms: BTreeMap::new() }
    }

    pub fn one(order: u64) -> Self {
        CycloNum::from_rational(order, BigRational::one())
    }

    pub fn from_rational(order: u64, r: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(0, r);
        }
        CycloNum { order, terms }
    }

    pub fn from_i64(order: u64, n: i64) -> Self {
        CycloNum::from_rational(order, BigRational::from(BigInt::from(n)))
    }

    /// e^{2 pi i r} for rational r, represented at order = denominator of r
    /// (after reduction).
    pub fn root_of_unity(r: &BigRational) -> Self {
        let den = r.denom().clone();
        let den_u: u64 = (&den).try_into().expect("root-of-unity order fits u64");
        let num = r.numer().mod_floor(&den);
        let num_u: u64 = (&num).try_into().unwrap();
        let mut terms = BTreeMap::new();
        terms.insert(num_u, BigRational::one());
        CycloNum::new(den_u.max(1), terms)
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1
            && self.terms.get(&0).map(|c| c.is_one()).unwrap_or(false)
    }

    /// The rational part if the value is purely rational.
    pub fn as_rational(&self) -> Option<BigRational> {
        if self.terms.is_empty() {
            return Some(BigRational::zero());
        }
        if self.terms.len() == 1 {
            if let Some(c) = self.terms.get(&0) {
                return Some(c.clone());
            }
        }
        None
    }

    pub fn terms(&self) -> impl Iterator<Item = (&u64, &BigRational)> {
        self.terms.iter()
    }

    /// Reduce the representing polynomial modulo Phi_L (in place).
    fn reduce(&mut self) {
        let l = self.order;
        if l == 1 {
            return;
        }
        let phi = cyclotomic_poly(l);
        let deg = phi.len() - 1;
        let needs = self.terms.keys().any(|&e| e as usize >= deg);
        if !needs {
            return;
        }
        // Remainder modulo the monic Phi_L, exact over Q.
        let mut coeffs: Vec<BigRational> = vec![BigRational::zero(); l as usize];
        for (&e, c) in &self.terms {
            coeffs[e as usize] += c.clone();
        }
        for i in (deg..coeffs.len()).rev() {
            if coeffs[i].is_zero() {
                continue;
            }
            let q = coeffs[i].clone();
            coeffs[i] = BigRational::zero();
            for (k, pk) in phi.iter().enumerate().take(deg) {
                if !pk.is_zero() {
                    let sub = &q * BigRational::from(pk.clone());
                    coeffs[i - deg + k] -= sub;
                }
            }
        }
        self.terms = coeffs
            .into_iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(e, c)| (e as u64, c))
            .collect();
    }

    /// Represent the same value at order `new_order` (a multiple of the
    /// current order): exponents scale by new/old.
    pub fn lift_to(&self, new_order: u64) -> Result<CycloNum> {
        if new_order == self.order {
            return Ok(self.clone());
        }
        if new_order % self.order != 0 {
            return Err(Error::MismatchedOrders(self.order, new_order));
        }
        let k = new_order / self.order;
        let terms = self
            .terms
            .iter()
            .map(|(&e, c)| (e * k, c.clone()))
            .collect();
        Ok(CycloNum::new(new_order, terms))
    }

    /// Lift both operands to lcm of their orders.
    pub fn promote(a: &CycloNum, b: &CycloNum) -> (CycloNum, CycloNum) {
        let l = a.order.lcm(&b.order);
        (a.lift_to(l).unwrap(), b.lift_to(l).unwrap())
    }

    pub fn add(&self, other: &CycloNum) -> Result<CycloNum> {
        if self.order != other.order {
            return Err(Error::MismatchedOrders(self.order, other.order));
        }
        let mut terms = self.terms.clone();
        for (&e, c) in &other.terms {
            let entry = terms.entry(e).or_insert_with(BigRational::zero);
            *entry += c;
        }
        terms.retain(|_, c| !c.is_zero());
        // Both inputs are reduced; the sum of reduced polynomials is reduced.
        Ok(CycloNum { order: self.order, terms })
    }

    pub fn neg(&self) -> CycloNum {
        CycloNum {
            order: self.order,
            terms: self.terms.iter().map(|(&e, c)| (e, -c.clone())).collect(),
        }
    }

    pub fn sub(&self, other: &CycloNum) -> Result<CycloNum> {
        self.add(&other.neg())
    }

    /// Exact product; both operands must share the declared order.
    pub fn mul(&self, other: &CycloNum) -> Result<CycloNum> {
        if self.order != other.order {
            return Err(Error::MismatchedOrders(self.order, other.order));
        }
        if self.is_zero() || other.is_zero() {
            return Ok(CycloNum::zero(self.order));
        }
        let l = self.order;
        let mut raw: BTreeMap<u64, BigRational> = BTreeMap::new();
        for (&e1, c1) in &self.terms {
            for (&e2, c2) in &other.terms {
                let e = (e1 + e2) % l;
                let entry = raw.entry(e).or_insert_with(BigRational::zero);
                *entry += c1 * c2;
            }
        }
        Ok(CycloNum::new(l, raw))
    }

    /// Product after lifting to a common order (series-layer convenience).
    pub fn mul_promoted(&self, other: &CycloNum) -> CycloNum {
        let (a, b) = CycloNum::promote(self, other);
        a.mul(&b).unwrap()
    }

    pub fn add_promoted(&self, other: &CycloNum) -> CycloNum {
        let (a, b) = CycloNum::promote(self, other);
        a.add(&b).unwrap()
    }

    pub fn scale(&self, r: &BigRational) -> CycloNum {
        if r.is_zero() {
            return CycloNum::zero(self.order);
        }
        CycloNum {
            order: self.order,
            terms: self.terms.iter().map(|(&e, c)| (e, c * r)).collect(),
        }
    }

    /// Multiplicative inverse in Q(zeta_L), by the extended Euclidean
    /// algorithm against Phi_L in Q[x].
    pub fn inv(&self) -> Result<CycloNum> {
        if self.is_zero() {
            return Err(Error::DivisionByZero(self.order));
        }
        if let Some(r) = self.as_rational() {
            return Ok(CycloNum::from_rational(self.order, r.recip()));
        }
        let l = self.order;
        let phi: Vec<BigRational> = cyclotomic_poly(l)
            .into_iter()
            .map(BigRational::from)
            .collect();
        let deg = phi.len() - 1;
        let mut a: Vec<BigRational> = vec![BigRational::zero(); deg];
        for (&e, c) in &self.terms {
            a[e as usize] = c.clone();
        }
        // Extended gcd: r0 = phi, r1 = a; maintain t-coefficients so that
        // t * a = r (mod phi). gcd is a nonzero constant since Phi_L is
        // irreducible over Q and a != 0 with deg a < deg Phi_L.
        let trim = |v: &mut Vec<BigRational>| {
            while v.len() > 1 && v.last().map(|c| c.is_zero()).unwrap_or(false) {
                v.pop();
            }
        };
        let mut r0 = phi;
        let mut r1 = a;
        trim(&mut r1);
        let mut t0: Vec<BigRational> = vec![BigRational::zero()];
        let mut t1: Vec<BigRational> = vec![BigRational::one()];
        while !(r1.len() == 1 && r1[0].is_zero()) {
            // quotient, remainder of r0 / r1
            let mut rem = r0.clone();
            let d1 = r1.len() - 1;
            let lead = r1[d1].clone();
            let mut quot = vec![BigRational::zero(); rem.len().saturating_sub(d1)];
            if rem.len() > d1 {
                for i in (d1..rem.len()).rev() {
                    if rem[i].is_zero() {
                        continue;
                    }
                    let q = &rem[i] / &lead;
                    quot[i - d1] = q.clone();
                    for (k, ck) in r1.iter().enumerate() {
                        let sub = &q * ck;
                        rem[i - d1 + k] -= sub;
                    }
                }
            }
            trim(&mut rem);
            // t2 = t0 - quot * t1
            let mut qt = vec![BigRational::zero(); quot.len() + t1.len() - 1];
            for (i, qi) in quot.iter().enumerate() {
                if qi.is_zero() {
                    continue;
                }
                for (j, tj) in t1.iter().enumerate() {
                    let add = qi * tj;
                    qt[i + j] += add;
                }
            }
            let mut t2 = vec![BigRational::zero(); t0.len().max(qt.len())];
            for (i, c) in t0.iter().enumerate() {
                t2[i] += c;
            }
            for (i, c) in qt.iter().enumerate() {
                t2[i] -= c;
            }
            trim(&mut t2);
            r0 = r1;
            r1 = rem;
            t0 = t1;
            t1 = t2;
            if r0.len() == 1 {
                break;
            }
        }
        // r0 is a nonzero constant c with t0 * a = c (mod phi).
        debug_assert_eq!(r0.len(), 1);
        let c = r0[0].clone();
        let inv_terms = t0
            .into_iter()
            .enumerate()
            .map(|(e, coef)| (e as u64, coef / c.clone()))
            .collect();
        Ok(CycloNum::new(l, inv_terms))
    }

    /// Floating embedding sum c_a e^{2 pi i a / L}.
    pub fn embed(&self) -> Complex64 {
        let mut z = Complex64::new(0.0, 0.0);
        let l = self.order as f64;
        for (&e, c) in &self.terms {
            let num: f64 = num_traits::ToPrimitive::to_f64(c.numer()).unwrap_or(f64::NAN);
            let den: f64 = num_traits::ToPrimitive::to_f64(c.denom()).unwrap_or(f64::NAN);
            let ang = 2.0 * std::f64::consts::PI * (e as f64) / l;
            z += (num / den) * Complex64::new(ang.cos(), ang.sin());
        }
        z
    }

    /// Report serialization: list of {exponent: "a/L", coeff: "p/q"}.
    pub fn to_entries(&self) -> Vec<(String, String)> {
        self.terms
            .iter()
            .map(|(&e, c)| (format!("{}/{}", e, self.order), format!("{}", c)))
            .collect()
    }
}

impl fmt::Debug for CycloNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|(&e, c)| {
                if e == 0 {
                    format!("{c}")
                } else {
                    format!("{c}*z{}^{e}", self.order)
                }
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl fmt::Display for CycloNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}
