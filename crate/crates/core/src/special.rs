//! Special functions: modified Bessel functions of the second kind, the
//! Matérn family built on them, and the CDFs / quantiles of the normal,
//! Student-t and chi-square laws.

use core::f64::consts::{PI, SQRT_2};

use crate::error::{invalid, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 20_000;

/// Taylor coefficients of `1/Γ(1+z)` around zero.
const RECIP_GAMMA_1P: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_86,
    -0.655_878_071_520_253_88,
    -0.042_002_635_034_095_236,
    0.166_538_611_382_291_49,
    -0.042_197_734_555_544_337,
    -0.009_621_971_527_876_973_6,
    0.007_218_943_246_663_099_5,
    -0.001_165_167_591_859_065_1,
    -0.000_215_241_674_114_950_97,
    0.000_128_050_282_388_116_19,
    -2.013_485_478_078_823_9e-5,
    -1.250_493_482_142_670_7e-6,
    1.133_027_231_981_695_9e-6,
    -2.056_338_416_977_607_1e-7,
    6.116_095_104_481_415_8e-9,
    5.002_007_644_469_222_9e-9,
    -1.181_274_570_487_020_1e-9,
    1.043_426_711_691_100_5e-10,
    7.782_263_439_905_071_3e-12,
    -3.696_805_618_642_205_7e-12,
    5.100_370_287_454_476e-13,
    -2.058_326_053_566_506_8e-14,
    -5.348_122_539_423_018e-15,
    1.226_778_628_238_260_8e-15,
    -1.181_259_301_697_458_8e-16,
];

/// `(gam1, gam2, 1/Γ(1+mu), 1/Γ(1-mu))` for Temme's series, `|mu| <= 1/2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mut plus = 0.0;
    let mut minus = 0.0;
    let mut even = 0.0;
    let mut odd = 0.0;
    let mut pow = 1.0;
    for (m, &b) in RECIP_GAMMA_1P.iter().enumerate() {
        let term = b * pow;
        plus += term;
        if m % 2 == 0 {
            minus += term;
            even += term;
        } else {
            minus -= term;
        }
        pow *= mu;
    }
    // odd-power part divided by mu, accumulated separately to stay exact at mu = 0
    let mut pow = 1.0;
    for (m, &b) in RECIP_GAMMA_1P.iter().enumerate() {
        if m % 2 == 1 {
            odd += b * pow;
            pow *= mu * mu;
        }
    }
    (-odd, even, plus, minus)
}

/// `(K_mu(x), K_{mu+1}(x))` by Temme's series, valid for `x < 2`.
fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let half_x = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / libm::sin(pimu)
    };
    let d = -libm::log(half_x);
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { libm::sinh(e) / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * libm::cosh(e) + gam2 * fact2 * d);
    let mut sum = ff;
    let e = libm::exp(e);
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = half_x * half_x;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

/// `(K_mu(x), K_{mu+1}(x))` by Steed's continued fraction, for `x >= 2`.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let mu2 = mu * mu;
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu2;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    let h = a1 * h;
    let k_mu = libm::sqrt(PI / (2.0 * x)) * libm::exp(-x) / s;
    (k_mu, k_mu * (mu + x + 0.5 - h) / x)
}

/// Modified Bessel function of the second kind `K_nu(x)` for real `nu >= 0`
/// and `x > 0`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x > 0.0);
    let nl = libm::floor(nu + 0.5) as usize;
    let mu = nu - nl as f64;
    let (mut k_mu, mut k_next) = if x < 2.0 {
        temme_series(mu, x)
    } else {
        steed_cf2(mu, x)
    };
    for i in 1..=nl {
        let up = (mu + i as f64) * 2.0 / x * k_next + k_mu;
        k_mu = k_next;
        k_next = up;
    }
    k_mu
}

/// `K_1(x)`: ascending series below `x = 2`, continued fraction above.
pub fn bessel_k1(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x >= 2.0 {
        return steed_cf2(0.0, x).1;
    }
    let y = 0.25 * x * x;
    let mut term = 1.0; // (x²/4)^k / (k! (k+1)!)
    let mut psi_k1 = -EULER_GAMMA; // ψ(k+1)
    let mut psi_k2 = 1.0 - EULER_GAMMA; // ψ(k+2)
    let mut i1_sum = 0.0;
    let mut psi_sum = 0.0;
    for k in 0..200 {
        i1_sum += term;
        psi_sum += (psi_k1 + psi_k2) * term;
        let kf = k as f64;
        psi_k1 += 1.0 / (kf + 1.0);
        psi_k2 += 1.0 / (kf + 2.0);
        term *= y / ((kf + 1.0) * (kf + 2.0));
        if term < EPS * i1_sum.abs() * 1e-2 {
            break;
        }
    }
    let i1 = 0.5 * x * i1_sum;
    1.0 / x + libm::log(0.5 * x) * i1 - 0.25 * x * psi_sum
}

/// `M_1(x) = x K_1(x)`, extended continuously by `M_1(0) = 1`.
pub fn whittle_m1(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x > 740.0 {
        0.0
    } else {
        x * bessel_k1(x)
    }
}

/// Unit-variance Matérn correlation at distance `h` with smoothness `eta`
/// and absolute range `range`.
pub fn matern_correlation(h: f64, eta: f64, range: f64) -> f64 {
    let x = h / range;
    if x <= 0.0 {
        return 1.0;
    }
    if eta == 0.5 {
        return libm::exp(-x);
    }
    if eta == 1.0 {
        return whittle_m1(x);
    }
    if x > 740.0 {
        return 0.0;
    }
    let log_pref = (1.0 - eta) * core::f64::consts::LN_2 - ln_gamma(eta) + eta * libm::log(x);
    if log_pref < -700.0 {
        // x^eta underflows while K_eta(x) is still finite: the small-x limit
        return 1.0;
    }
    libm::exp(log_pref) * bessel_k(eta, x)
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta function (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-15 {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = a * libm::log(x) + b * libm::log1p(-x) - ln_beta(a, b);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_front = a * libm::log(x) - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..MAX_ITER {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * EPS {
                break;
            }
        }
        sum * libm::exp(ln_front)
    } else {
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        1.0 - libm::exp(ln_front) * h
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn student_t_pdf(t: f64, nu: f64) -> f64 {
    libm::exp(
        ln_gamma(0.5 * (nu + 1.0))
            - ln_gamma(0.5 * nu)
            - 0.5 * libm::log(nu * PI)
            - 0.5 * (nu + 1.0) * libm::log1p(t * t / nu),
    )
}

pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    let tail = 0.5 * reg_inc_beta(0.5 * nu, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

pub fn chi_square_cdf(x: f64, k: f64) -> f64 {
    reg_lower_gamma(0.5 * k, 0.5 * x)
}

/// Safeguarded Newton inversion of a continuous, strictly increasing CDF.
fn invert_cdf(cdf: impl Fn(f64) -> f64, pdf: impl Fn(f64) -> f64, target: f64, x0: f64) -> f64 {
    let mut lo = x0 - 1.0;
    let mut width = 1.0;
    while cdf(lo) > target {
        width *= 2.0;
        lo = x0 - width;
    }
    let mut hi = x0 + 1.0;
    width = 1.0;
    while cdf(hi) < target {
        width *= 2.0;
        hi = x0 + width;
    }
    let mut x = x0.clamp(lo, hi);
    for _ in 0..200 {
        let f = cdf(x) - target;
        if f == 0.0 {
            return x;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = pdf(x);
        let newton = x - f / d;
        let next = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
            return next;
        }
        x = next;
    }
    x
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return normal_quantile(1.0 - p).map(|x| -x);
    }
    // rational starting value, |error| < 4.5e-4
    let t = libm::sqrt(-2.0 * libm::log(p));
    let x0 = -(t
        - (2.515_517 + 0.802_853 * t + 0.010_328 * t * t)
            / (1.0 + 1.432_788 * t + 0.189_269 * t * t + 0.001_308 * t * t * t));
    Ok(invert_cdf(normal_cdf, normal_pdf, p, x0))
}

/// Student-t quantile with `nu` degrees of freedom.
pub fn student_t_quantile(p: f64, nu: f64) -> Result<f64> {
    check_probability(p)?;
    if !(nu > 0.0) {
        return Err(invalid("nu", "degrees of freedom must be positive"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return student_t_quantile(1.0 - p, nu).map(|x| -x);
    }
    if nu == 1.0 {
        return Ok(libm::tan(PI * (p - 0.5)));
    }
    if nu == 2.0 {
        return Ok((2.0 * p - 1.0) / libm::sqrt(2.0 * p * (1.0 - p)));
    }
    let z = normal_quantile(p)?;
    let x0 = z + (z * z * z + z) / (4.0 * nu);
    Ok(invert_cdf(
        |t| student_t_cdf(t, nu),
        |t| student_t_pdf(t, nu),
        p,
        x0,
    ))
}

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid("p", alloc::format!("probability {p} outside (0, 1)")))
    }
}
