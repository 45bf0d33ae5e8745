//! Lane-batched Hodgkin-Huxley RK4 kernel.
//!
//! Everything here is written as straight-line arithmetic over fixed-size
//! arrays so the compiler can vectorise it. Only IEEE add, mul, div, min, max
//! and bit casts are used (no fused multiply-add, no libm), so every lane
//! width and every instruction set produces bit-identical results.

use crate::hh::HhParams;

/// Neurons integrated together by the network. Wide batches keep several
/// independent dependency chains in flight.
pub(crate) const LANES: usize = 32;

const LOG2E: f64 = std::f64::consts::LOG2_E;
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-01;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
/// 1.5 * 2^52: adding it rounds to the nearest integer.
const ROUND_SHIFT: f64 = 6_755_399_441_055_744.0;

/// [`LANES`] doubles processed as one value. Every operation is a
/// plain elementwise loop, which the compiler turns into vector instructions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct F(pub [f64; LANES]);

impl F {
    #[inline(always)]
    pub fn splat(x: f64) -> Self {
        F([x; LANES])
    }

    #[inline(always)]
    fn zip(self, o: F, f: impl Fn(f64, f64) -> f64) -> F {
        let mut out = [0.0; LANES];
        for l in 0..LANES {
            out[l] = f(self.0[l], o.0[l]);
        }
        F(out)
    }

    #[inline(always)]
    fn map(self, f: impl Fn(f64) -> f64) -> F {
        let mut out = [0.0; LANES];
        for l in 0..LANES {
            out[l] = f(self.0[l]);
        }
        F(out)
    }

    #[inline(always)]
    fn max(self, lo: f64) -> F {
        self.map(|x| if x > lo { x } else { lo })
    }

    #[inline(always)]
    fn min(self, hi: f64) -> F {
        self.map(|x| if x < hi { x } else { hi })
    }
}

macro_rules! lane_op {
    ($tr:ident, $f:ident, $op:tt) => {
        impl std::ops::$tr for F {
            type Output = F;
            #[inline(always)]
            fn $f(self, o: F) -> F {
                self.zip(o, |a, b| a $op b)
            }
        }
        impl std::ops::$tr<f64> for F {
            type Output = F;
            #[inline(always)]
            fn $f(self, o: f64) -> F {
                self.map(|a| a $op o)
            }
        }
        impl std::ops::$tr<F> for f64 {
            type Output = F;
            #[inline(always)]
            fn $f(self, o: F) -> F {
                o.map(|b| self $op b)
            }
        }
    };
}
lane_op!(Add, add, +);
lane_op!(Sub, sub, -);
lane_op!(Mul, mul, *);
lane_op!(Div, div, /);

/// `exp(x)` to within a few ulp, branch-free.
///
/// Range reduction `x = k ln2 + r`, `|r| <= ln2 / 2`, then a degree-13 Taylor
/// polynomial for `exp(r)` (truncation error below 1e-17) and an exponent
/// bit-shift for `2^k`. Inputs are clamped to `[-708, 709]`.
#[inline(always)]
fn exp_lanes(x: F) -> F {
    let x = x.max(-708.0).min(709.0);
    let shifted = x * LOG2E + ROUND_SHIFT;
    let k = shifted - ROUND_SHIFT;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = F::splat(1.0 / 6_227_020_800.0);
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    let mut scale = [0.0; LANES];
    for l in 0..LANES {
        let k_int = (shifted.0[l].to_bits() as i64).wrapping_sub(ROUND_SHIFT.to_bits() as i64);
        scale[l] = f64::from_bits(((k_int + 1023) as u64) << 52);
    }
    p * F(scale)
}

/// Scalar form of the lane exponential (same bits).
pub(crate) fn exp(x: f64) -> f64 {
    exp_lanes(F::splat(x)).0[0]
}

// exp(25/10), exp(10/10), exp(30/10): offsets of the /10 exponentials
// relative to the shared exp(-(V + 65)/10).
const EXP_2_5: f64 = 12.182_493_960_703_473;
const EXP_1: f64 = std::f64::consts::E;
const EXP_3: f64 = 20.085_536_923_187_668;

/// `u / (1 - e)` where `e = exp(-u / 10)`, with the removable singularity at u = 0.
#[inline(always)]
fn vtrap(u: F, e: F) -> F {
    let regular = u / (1.0 - e);
    let mut out = [0.0; LANES];
    for l in 0..LANES {
        out[l] = if u.0[l].abs() < 1e-6 { 10.0 + 0.5 * u.0[l] } else { regular.0[l] };
    }
    F(out)
}

/// Opening and closing rates of the three gates, lane-wise.
#[derive(Clone, Copy, Debug)]
struct RatesF {
    alpha_m: F,
    beta_m: F,
    alpha_h: F,
    beta_h: F,
    alpha_n: F,
    beta_n: F,
}

impl RatesF {
    /// Classic squid-axon rate functions. The /10, /20 and /80 exponentials
    /// all derive from one `exp`, so a full evaluation costs two.
    #[inline(always)]
    fn at(v: F) -> Self {
        let x80 = exp_lanes((v + 65.0) * (-1.0 / 80.0));
        let x40 = x80 * x80;
        let x20 = x40 * x40;
        let x10 = x20 * x20;
        let x18 = exp_lanes((v + 65.0) * (-1.0 / 18.0));
        Self {
            alpha_m: 0.1 * vtrap(v + 40.0, x10 * EXP_2_5),
            beta_m: 4.0 * x18,
            alpha_h: 0.07 * x20,
            beta_h: 1.0 / (1.0 + x10 * EXP_3),
            alpha_n: 0.01 * vtrap(v + 55.0, x10 * EXP_1),
            beta_n: 0.125 * x80,
        }
    }
}

/// Opening and closing rates of the three gates at one potential.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Rates {
    pub alpha_m: f64,
    pub beta_m: f64,
    pub alpha_h: f64,
    pub beta_h: f64,
    pub alpha_n: f64,
    pub beta_n: f64,
}

impl Rates {
    pub fn at(v: f64) -> Self {
        let r = RatesF::at(F::splat(v));
        Self {
            alpha_m: r.alpha_m.0[0],
            beta_m: r.beta_m.0[0],
            alpha_h: r.alpha_h.0[0],
            beta_h: r.beta_h.0[0],
            alpha_n: r.alpha_n.0[0],
            beta_n: r.beta_n.0[0],
        }
    }
}

/// Per-step constants shared by every lane.
#[derive(Clone, Copy, Debug)]
pub(crate) struct StepConstants {
    pub c_m: f64,
    pub g_na: f64,
    pub g_k: f64,
    pub g_l: f64,
    pub e_na: f64,
    pub e_k: f64,
    pub e_l: f64,
    pub e_syn: f64,
    pub dt: f64,
    /// Conductance decay over half and a full step.
    pub decay_half: f64,
    pub decay_full: f64,
}

impl StepConstants {
    pub fn new(p: &HhParams, dt: f64, e_syn: f64, tau_syn: f64) -> Self {
        let (decay_half, decay_full) = if tau_syn.is_finite() {
            (exp(-0.5 * dt / tau_syn), exp(-dt / tau_syn))
        } else {
            (1.0, 1.0)
        };
        Self {
            c_m: p.c_m,
            g_na: p.g_na,
            g_k: p.g_k,
            g_l: p.g_l,
            e_na: p.e_na,
            e_k: p.e_k,
            e_l: p.e_l,
            e_syn,
            dt,
            decay_half,
            decay_full,
        }
    }
}

#[derive(Clone, Copy)]
struct State {
    v: F,
    m: F,
    h: F,
    n: F,
}

impl State {
    #[inline(always)]
    fn plus(self, k: &State, dt: f64) -> State {
        State {
            v: self.v + k.v * dt,
            m: self.m + k.m * dt,
            h: self.h + k.h * dt,
            n: self.n + k.n * dt,
        }
    }
}

#[inline(always)]
fn derivative(s: State, g: F, i_ext: F, c: &StepConstants) -> State {
    let State { v, m, h, n } = s;
    let r = RatesF::at(v);
    let m3 = m * m * m;
    let n2 = n * n;
    let i_ion = c.g_na * m3 * h * (v - c.e_na) + c.g_k * (n2 * n2) * (v - c.e_k) + c.g_l * (v - c.e_l);
    let i_in = i_ext + g * (c.e_syn - v);
    State {
        v: (i_in - i_ion) / c.c_m,
        m: r.alpha_m * (1.0 - m) - r.beta_m * m,
        h: r.alpha_h * (1.0 - h) - r.beta_h * h,
        n: r.alpha_n * (1.0 - n) - r.beta_n * n,
    }
}

#[inline(always)]
fn unit(x: F) -> F {
    x.max(0.0).min(1.0)
}

/// One RK4 step for a batch of neurons. The synaptic conductance `g` decays
/// exponentially within the step; `i_ext` is constant.
#[inline(always)]
fn rk4_lanes(s: State, g: F, i_ext: F, c: &StepConstants) -> State {
    let half = 0.5 * c.dt;
    let g_mid = g * c.decay_half;
    let g_end = g * c.decay_full;
    let k1 = derivative(s, g, i_ext, c);
    let k2 = derivative(s.plus(&k1, half), g_mid, i_ext, c);
    let k3 = derivative(s.plus(&k2, half), g_mid, i_ext, c);
    let k4 = derivative(s.plus(&k3, c.dt), g_end, i_ext, c);
    let sixth = c.dt / 6.0;
    let comb = |x: F, a: F, b: F, cc: F, d: F| x + sixth * (a + 2.0 * b + 2.0 * cc + d);
    State {
        v: comb(s.v, k1.v, k2.v, k3.v, k4.v),
        m: unit(comb(s.m, k1.m, k2.m, k3.m, k4.m)),
        h: unit(comb(s.h, k1.h, k2.h, k3.h, k4.h)),
        n: unit(comb(s.n, k1.n, k2.n, k3.n, k4.n)),
    }
}

/// One RK4 step for a single neuron (same bits as the batched path).
pub(crate) fn rk4_one(s: [f64; 4], g: f64, i_ext: f64, c: &StepConstants) -> [f64; 4] {
    let st = State {
        v: F::splat(s[0]),
        m: F::splat(s[1]),
        h: F::splat(s[2]),
        n: F::splat(s[3]),
    };
    let out = rk4_lanes(st, F::splat(g), F::splat(i_ext), c);
    [out.v.0[0], out.m.0[0], out.h.0[0], out.n.0[0]]
}

/// Structure-of-arrays membrane state, length a multiple of [`LANES`].
pub(crate) struct Lanes<'a> {
    pub v: &'a mut [f64],
    pub m: &'a mut [f64],
    pub h: &'a mut [f64],
    pub n: &'a mut [f64],
    pub g: &'a mut [f64],
    pub i_ext: &'a [f64],
}

#[inline(always)]
fn load(x: &[f64]) -> F {
    F(x.try_into().expect("lane-sized chunk"))
}

#[inline(always)]
fn advance_generic(s: Lanes<'_>, c: &StepConstants) {
    let chunks = s.v.len() / LANES;
    for k in 0..chunks {
        let r = k * LANES..(k + 1) * LANES;
        let st = State {
            v: load(&s.v[r.clone()]),
            m: load(&s.m[r.clone()]),
            h: load(&s.h[r.clone()]),
            n: load(&s.n[r.clone()]),
        };
        let g = load(&s.g[r.clone()]);
        let next = rk4_lanes(st, g, load(&s.i_ext[r.clone()]), c);
        s.v[r.clone()].copy_from_slice(&next.v.0);
        s.m[r.clone()].copy_from_slice(&next.m.0);
        s.h[r.clone()].copy_from_slice(&next.h.0);
        s.n[r.clone()].copy_from_slice(&next.n.0);
        s.g[r].copy_from_slice(&(g * c.decay_full).0);
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn advance_avx512(s: Lanes<'_>, c: &StepConstants) {
    advance_generic(s, c)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn advance_avx2(s: Lanes<'_>, c: &StepConstants) {
    advance_generic(s, c)
}

/// Which code path [`advance`] takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Isa {
    Generic,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

pub(crate) fn best_isa() -> Isa {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            return Isa::Avx512;
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            return Isa::Avx2;
        }
    }
    Isa::Generic
}

/// Advances every lane by one step and decays its conductance.
pub(crate) fn advance(isa: Isa, s: Lanes<'_>, c: &StepConstants) {
    debug_assert!(s.v.len() % LANES == 0);
    match isa {
        Isa::Generic => advance_generic(s, c),
        // SAFETY: `best_isa` only reports features the running CPU has.
        #[cfg(target_arch = "x86_64")]
        Isa::Avx2 => unsafe { advance_avx2(s, c) },
        #[cfg(target_arch = "x86_64")]
        Isa::Avx512 => unsafe { advance_avx512(s, c) },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_matches_libm() {
        let mut x = -40.0;
        while x < 40.0 {
            let (a, b) = (exp(x), x.exp());
            assert!(((a - b) / b).abs() < 4e-16, "x={x}: {a} vs {b}");
            x += 0.0137;
        }
        assert_eq!(exp(0.0), 1.0);
        assert!(exp(-1000.0) >= 0.0 && exp(-1000.0) < 1e-300);
        assert!(exp(1000.0).is_finite());
    }

    #[test]
    fn every_isa_gives_identical_bits() {
        let c = StepConstants::new(&HhParams::default(), 0.025, 0.0, 2.0);
        let n = 3 * LANES;
        let init = |seed: f64| -> Vec<f64> { (0..n).map(|k| seed + 0.37 * k as f64).collect() };
        let run = |isa: Isa| {
            let mut v: Vec<f64> = init(-80.0);
            let mut m = vec![0.05; n];
            let mut h = vec![0.6; n];
            let mut nn = vec![0.32; n];
            let mut g: Vec<f64> = (0..n).map(|k| 0.01 * k as f64).collect();
            let i_ext: Vec<f64> = (0..n).map(|k| if k % 3 == 0 { 40.0 } else { 0.0 }).collect();
            for _ in 0..400 {
                advance(
                    isa,
                    Lanes { v: &mut v, m: &mut m, h: &mut h, n: &mut nn, g: &mut g, i_ext: &i_ext },
                    &c,
                );
            }
            (v, m, h, nn)
        };
        let reference = run(Isa::Generic);
        let best = run(best_isa());
        assert_eq!(reference.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), best.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(reference, best);
        // and the batched path agrees with the single-neuron step
        let mut s = [-80.0 + 0.37, 0.05, 0.6, 0.32];
        let mut g = 0.01;
        for _ in 0..400 {
            s = rk4_one(s, g, 0.0, &c);
            g *= c.decay_full;
        }
        assert_eq!(s[0].to_bits(), reference.0[1].to_bits());
    }
}
