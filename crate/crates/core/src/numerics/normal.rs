//! Univariate and bivariate standard normal distribution functions.

use crate::error::{Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, PI};

const TWO_PI: f64 = 2.0 * PI;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn std_normal_ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal cdf, Φ(x) = erfc(−x/√2)/2. Saturates at 0 and 1.
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Inverse of [`std_normal_cdf`] (Wichura's AS 241, followed by one Newton step).
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs p in (0,1), got {p}"
        )));
    }
    Ok(quantile_unchecked(p))
}

/// Quantile with saturation: p ≤ 0 maps to −∞, p ≥ 1 to +∞.
pub fn std_normal_quantile_sat(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        quantile_unchecked(p)
    }
}

fn quantile_unchecked(p: f64) -> f64 {
    let x = as241(p);
    // A single Newton step against the erfc-based cdf tightens the round trip.
    let e = if p > 0.5 {
        (1.0 - p) - std_normal_cdf(-x)
    } else {
        std_normal_cdf(x) - p
    };
    let d = std_normal_pdf(x);
    if d > 1e-300 && e.abs() > 0.0 {
        let step = e / d;
        if step.abs() < 1e-6 * (1.0 + x.abs()) {
            return x - step;
        }
    }
    x
}

#[allow(clippy::excessive_precision)]
fn as241(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r
            + 67265.770_927_008_700_853)
            * r
            + 45921.953_931_549_871_457)
            * r
            + 13731.693_765_509_461_125)
            * r
            + 1971.590_950_306_551_442_7)
            * r
            + 133.141_667_891_784_377_45)
            * r
            + 3.387_132_872_796_366_608;
        let den = ((((((r * 5226.495_278_852_545_925 + 28729.085_735_721_942_674) * r
            + 39307.895_800_092_710_61)
            * r
            + 21213.794_301_586_595_867)
            * r
            + 5394.196_021_424_751_107_7)
            * r
            + 687.187_007_492_057_908_3)
            * r
            + 42.313_330_701_600_911_252)
            * r
            + 1.0;
        return q * num / den;
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((r * 7.745_450_142_783_414_076_4e-4 + 0.022_723_844_989_269_184_583_3)
            * r
            + 0.241_780_725_177_450_611_77)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((r * 1.050_750_071_644_416_843_24e-9 + 5.475_938_084_995_344_946e-4)
            * r
            + 0.015_198_666_563_616_457_196_6)
            * r
            + 0.148_103_976_427_480_074_59)
            * r
            + 0.689_767_334_985_100_004_55)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((r * 2.010_334_399_292_288_132_65e-7 + 2.711_555_568_743_487_578_15e-5)
            * r
            + 0.001_242_660_947_388_078_438_6)
            * r
            + 0.026_532_189_526_576_123_093)
            * r
            + 0.296_560_571_828_504_891_23)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((r * 2.044_263_103_389_939_785_64e-15 + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 0.014_875_361_290_850_614_852_5)
            * r
            + 0.136_929_880_922_735_805_31)
            * r
            + 0.599_832_206_555_887_937_69)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

// Gauss-Legendre half-rules (weight, node) on [-1, 1], negative nodes only.
#[allow(clippy::excessive_precision)]
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_691, -0.238_619_186_083_197),
];
#[allow(clippy::excessive_precision)]
const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];
#[allow(clippy::excessive_precision)]
const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Upper bivariate normal probability P(X > h, Y > k) for standard margins and
/// correlation `r` (Drezner–Wesolowsky with Genz's refinements for |r| near 1).
pub fn bvn_upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return std_normal_cdf(-k);
    }
    if k == f64::NEG_INFINITY {
        return std_normal_cdf(-h);
    }
    let r = r.clamp(-1.0, 1.0);
    let ar = r.abs();
    let rule: &[(f64, f64)] = if ar < 0.3 {
        &GL6
    } else if ar < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if ar < 0.925 {
        if ar > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for &(w, x) in rule {
                for sgn in [1.0, -1.0] {
                    let sn = (asr * (sgn * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn *= asr / (2.0 * TWO_PI);
        }
        bvn += std_normal_cdf(-h) * std_normal_cdf(-k);
        return bvn;
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    if ar < 1.0 {
        let a_s = (1.0 - r) * (1.0 + r);
        let mut a = a_s.sqrt();
        let b_s = (h - k) * (h - k);
        let c = (4.0 - hk) / 8.0;
        let d = (12.0 - hk) / 16.0;
        bvn = a
            * (-(b_s / a_s + hk) / 2.0).exp()
            * (1.0 - c * (b_s - a_s) * (1.0 - d * b_s / 5.0) / 3.0 + c * d * a_s * a_s / 5.0);
        if hk > -160.0 {
            let b = b_s.sqrt();
            bvn -= (-hk / 2.0).exp()
                * TWO_PI.sqrt()
                * std_normal_cdf(-b / a)
                * b
                * (1.0 - c * b_s * (1.0 - d * b_s / 5.0) / 3.0);
        }
        a /= 2.0;
        for &(w, x) in rule {
            for sgn in [1.0, -1.0] {
                let xs = (a * (sgn * x + 1.0)).powi(2);
                let rs = (1.0 - xs).sqrt();
                let asr = -(b_s / xs + hk) / 2.0;
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
        }
        bvn = -bvn / TWO_PI;
    }
    if r > 0.0 {
        bvn += std_normal_cdf(-h.max(k));
    } else {
        bvn = -bvn;
        if k > h {
            if h < 0.0 {
                bvn += std_normal_cdf(k) - std_normal_cdf(h);
            } else {
                bvn += std_normal_cdf(-h) - std_normal_cdf(-k);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Bivariate normal cdf Φ₂(x, y; r) = P(X ≤ x, Y ≤ y).
pub fn bvn_cdf(x: f64, y: f64, r: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return std_normal_cdf(y);
    }
    if y == f64::INFINITY {
        return std_normal_cdf(x);
    }
    bvn_upper(-x, -y, r)
}

/// P(a1 < X ≤ b1, a2 < Y ≤ b2) for a standard bivariate normal with correlation `r`.
pub fn bvn_rectangle(a1: f64, b1: f64, a2: f64, b2: f64, r: f64) -> f64 {
    if !(a1 < b1) || !(a2 < b2) {
        return 0.0;
    }
    let p = bvn_cdf(b1, b2, r) - bvn_cdf(a1, b2, r) - bvn_cdf(b1, a2, r) + bvn_cdf(a1, a2, r);
    p.max(0.0)
}

/// Density of the standard bivariate normal.
pub fn bvn_pdf(x: f64, y: f64, r: f64) -> f64 {
    let s = 1.0 - r * r;
    (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * s)).exp() / (TWO_PI * s.sqrt())
}
