//! Reference computations that share no code with the library: adaptive
//! Gauss–Kronrod quadrature of the mixture likelihood ratio, and direct
//! log-likelihood-ratio formulas.

#![allow(dead_code)]

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, (kronrod - gauss).abs() * h)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= abs_tol.max(1e-14 * value.abs()) || depth == 0 {
        return value;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * abs_tol, depth - 1) + adapt(f, m, b, 0.5 * abs_tol, depth - 1)
}

/// ∫ₐᵇ f, bisecting adaptively until each piece meets its share of `abs_tol`
/// or 1e−14 relative.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    adapt(f, a, b, abs_tol, 40)
}

/// `c1·ln(1 + x) + c2·ln(1 − x)` for x in [0, 1]. The shared part is taken as
/// `min(c1, c2)·ln(1 − x²)`, which avoids cancelling two large logarithms
/// when both coefficients are big.
fn log_kernel(x: f64, c1: f64, c2: f64) -> f64 {
    if x >= 1.0 {
        return if c2 > 0.0 {
            f64::NEG_INFINITY
        } else {
            c1 * std::f64::consts::LN_2
        };
    }
    let m = c1.min(c2);
    let term = |c: f64, v: f64| if c == 0.0 { 0.0 } else { c * v.ln_1p() };
    term(m, -x * x) + term(c1 - m, x) + term(c2 - m, -x)
}

/// Breakpoints around the bulk of a Beta(a, b) kernel restricted to [1/2, 1].
fn cuts_for(a: f64, b: f64, cuts: &mut Vec<f64>) -> f64 {
    let mode = if a + b > 2.0 {
        (a - 1.0) / (a + b - 2.0)
    } else {
        1.0
    };
    let mode = mode.clamp(0.5, 1.0);
    let sd = (0.25 / (a + b + 1.0)).sqrt();
    for k in [0.0, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0] {
        for x in [mode - k * sd, mode + k * sd] {
            if x > 0.5 && x < 1.0 {
                cuts.push(x);
            }
        }
    }
    sd
}

/// ln of the mixture likelihood ratio
/// `∫_{1/2}^{1} p^{n1} (1−p)^{n2} π(p) dp / (1/2)^{n1+n2}` where π is the
/// Beta(a0, b0) density renormalized on (1/2, 1].
///
/// Written as ln(1 + E_π[h − 1]) with h the integrand ratio, so that values
/// near zero keep their relative accuracy.
pub fn msprt_log_lr_quadrature(n1: u64, n2: u64, a0: f64, b0: f64) -> f64 {
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    // With x = 2p − 1, p^{a−1}(1−p)^{b−1} is proportional to (1+x)^{a−1}(1−x)^{b−1}.
    let log_prior = |p: f64| log_kernel(2.0 * p - 1.0, a0 - 1.0, b0 - 1.0);
    let log_h = |p: f64| log_kernel(2.0 * p - 1.0, n1f, n2f);

    let mut cuts = vec![0.5, 1.0];
    let sd0 = cuts_for(a0, b0, &mut cuts);
    let sd1 = cuts_for(a0 + n1f, b0 + n2f, &mut cuts);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let tol = 1e-17 * sd0.min(sd1).min(0.5);
    let quad = |f: &dyn Fn(f64) -> f64| -> f64 {
        cuts.windows(2).map(|w| integrate(f, w[0], w[1], tol)).sum()
    };

    let ends = [0.5, 1.0, 0.5 + sd0.min(0.25), (1.0 - sd1).max(0.5)];
    let shift = ends
        .iter()
        .map(|&p| log_prior(p))
        .fold(f64::NEG_INFINITY, f64::max);
    let mass = quad(&|p| (log_prior(p) - shift).exp());
    let h_max = ends.iter().map(|&p| log_h(p)).fold(0.0, f64::max);
    if h_max < 30.0 {
        let excess = quad(&|p| (log_prior(p) - shift).exp() * log_h(p).exp_m1());
        return (excess / mass).ln_1p();
    }
    let shift1 = ends
        .iter()
        .map(|&p| log_prior(p) + log_h(p))
        .fold(f64::NEG_INFINITY, f64::max);
    let weighted = quad(&|p| (log_prior(p) + log_h(p) - shift1).exp());
    shift1 - shift + (weighted / mass).ln()
}

/// Wald log-likelihood ratio of p' = p1 against p' = 1/2, term by term.
pub fn sprt_log_lr_direct(n1: u64, n2: u64, p1: f64) -> f64 {
    let up = (2.0 * p1).ln();
    let down = (2.0 * (1.0 - p1)).ln();
    n1 as f64 * up + n2 as f64 * down
}

/// Relative difference with an absolute floor for values near zero.
pub fn rel_diff(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1e-12)
}
