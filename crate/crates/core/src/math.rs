// Scalar math shims and elementwise activation kernels. `exp` is a
// branch-free polynomial; on x86-64 with std the slice kernels also have an
// AVX2 build chosen at runtime that rounds identically to the portable one.

#[cfg(feature = "std")]
mod imp {
    pub(crate) fn ln(x: f64) -> f64 {
        x.ln()
    }
    pub(crate) fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    pub(crate) use libm::{log as ln, sqrt};
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    imp::ln(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    imp::sqrt(x)
}

/// 1.5·2⁵²: adding it rounds to an integer held in the low mantissa bits.
const ROUND: f64 = 6_755_399_441_055_744.0;
const LN2_HI: f64 = 0.693_147_180_369_123_8;
const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;

/// Taylor coefficients 1/13! down to 1/0!.
const EXP_POLY: [f64; 14] = [
    1.0 / 6_227_020_800.0,
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
];

/// `eˣ` within about one ulp on [-708, 709]; inputs outside are clamped,
/// NaN stays NaN.
#[inline(always)]
pub(crate) fn exp(x: f64) -> f64 {
    let x = x.clamp(-708.0, 709.0);
    let t = x * core::f64::consts::LOG2_E + ROUND;
    let k = t - ROUND;
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = EXP_POLY[0];
    for c in &EXP_POLY[1..] {
        p = p * r + c;
    }
    let bias = t.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(1023);
    p * f64::from_bits(bias << 52)
}

#[inline(always)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

/// Absolute error stays within an ulp of 1; relative error grows as |x|
/// shrinks.
#[inline(always)]
pub(crate) fn tanh(x: f64) -> f64 {
    let e = exp(2.0 * x.abs());
    (1.0 - 2.0 / (e + 1.0)).copysign(x)
}

#[inline(always)]
fn map_into(src: &[f64], dst: &mut [f64], f: impl Fn(f64) -> f64) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = f(s);
    }
}

#[cfg(all(feature = "std", target_arch = "x86_64"))]
mod avx2 {
    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn sigmoid_into(src: &[f64], dst: &mut [f64]) {
        super::map_into(src, dst, super::sigmoid)
    }

    #[target_feature(enable = "avx2")]
    pub(super) unsafe fn tanh_into(src: &[f64], dst: &mut [f64]) {
        super::map_into(src, dst, super::tanh)
    }

    pub(super) fn available() -> bool {
        std::is_x86_feature_detected!("avx2")
    }
}

/// `dst[i] = σ(src[i])` over the shorter of the two slices.
pub(crate) fn sigmoid_into(src: &[f64], dst: &mut [f64]) {
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if avx2::available() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::sigmoid_into(src, dst) };
    }
    map_into(src, dst, sigmoid)
}

/// `dst[i] = tanh(src[i])` over the shorter of the two slices.
pub(crate) fn tanh_into(src: &[f64], dst: &mut [f64]) {
    #[cfg(all(feature = "std", target_arch = "x86_64"))]
    if avx2::available() {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::tanh_into(src, dst) };
    }
    map_into(src, dst, tanh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn grid() -> Vec<f64> {
        (-40_000..=40_000).map(|i| i as f64 * 5e-4).collect()
    }

    #[test]
    fn exp_tracks_reference() {
        for i in -70_000..=70_000 {
            let x = i as f64 * 1e-2;
            let want = libm::exp(x);
            assert!(((exp(x) - want) / want).abs() <= 4.5e-16, "{x}");
        }
        assert_eq!(exp(0.0), 1.0);
        assert!(exp(f64::NAN).is_nan());
        assert!(exp(1e6).is_finite() && exp(-1e6) > 0.0);
    }

    #[test]
    fn activations_track_reference() {
        for x in grid() {
            assert!((tanh(x) - libm::tanh(x)).abs() <= 4.5e-16, "{x}");
            assert!((sigmoid(x) - 1.0 / (1.0 + libm::exp(-x))).abs() <= 4.5e-16, "{x}");
        }
        assert_eq!(tanh(1e6), 1.0);
        assert_eq!(tanh(-1e6), -1.0);
        assert_eq!(tanh(0.0), 0.0);
        assert!(sigmoid(-1e6) < 1e-300);
        assert_eq!(sigmoid(1e6), 1.0);
        assert!(tanh(f64::NAN).is_nan() && sigmoid(f64::NAN).is_nan());
    }

    #[test]
    fn slice_kernels_match_scalar_bits() {
        let src = grid();
        let mut dst = vec![0.0; src.len()];
        sigmoid_into(&src, &mut dst);
        assert!(src.iter().zip(&dst).all(|(x, y)| sigmoid(*x).to_bits() == y.to_bits()));
        tanh_into(&src, &mut dst);
        assert!(src.iter().zip(&dst).all(|(x, y)| tanh(*x).to_bits() == y.to_bits()));
    }
}
