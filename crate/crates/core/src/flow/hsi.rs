//! Flow ↔ color-image codec.
//!
//! A flow vector maps to the hue/intensity of an HSI-style color cone with
//! saturation fixed at 1: hue is the flow angle (`atan2(v, u)` folded into
//! `[0°, 360°)`), intensity is the magnitude divided by a reference
//! magnitude `m_ref` and clipped at 1. The hue→RGB conversion is the
//! standard piecewise-linear hexcone map, fixed here so encodings are
//! bit-stable:
//!
//! ```text
//! c = intensity, x = c * (1 - |(hue/60°) mod 2 - 1|)
//! sextant 0: (c, x, 0)   1: (x, c, 0)   2: (0, c, x)
//! sextant 3: (0, x, c)   4: (x, 0, c)   5: (c, 0, x)
//! ```
//!
//! Decoding inverts the map exactly (up to float rounding) for magnitudes
//! below `m_ref`; larger magnitudes saturate and decode to `m_ref`.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::flow::{FlowField, FlowImage};
use crate::scalar::Scalar;

/// Per-pixel (hue in degrees, intensity in `[0, 1]`) pair, before RGB
/// conversion. Exposed so angle/magnitude properties can be checked without
/// going through the hexcone map.
pub fn flow_to_hsi_components<F: Scalar>(
    flow: &FlowField<F>,
    m_ref: F,
) -> Result<(Array2<F>, Array2<F>)> {
    if m_ref <= F::zero() {
        return Err(Error::Config("m_ref must be positive".into()));
    }
    let (h, w) = flow.u.dim();
    let mut hue = Array2::zeros((h, w));
    let mut intensity = Array2::zeros((h, w));
    let full_turn = F::of(360.0);
    for y in 0..h {
        for x in 0..w {
            let u = flow.u[[y, x]];
            let v = flow.v[[y, x]];
            let mut angle = v.atan2(u).to_degrees();
            if angle < F::zero() {
                angle += full_turn;
            }
            // atan2(0, 0) is 0 in IEEE; hue of a zero vector is irrelevant
            // because intensity is 0.
            if angle >= full_turn {
                angle -= full_turn;
            }
            hue[[y, x]] = angle;
            let mag = (u * u + v * v).sqrt();
            intensity[[y, x]] = (mag / m_ref).min(F::one());
        }
    }
    Ok((hue, intensity))
}

fn hue_to_rgb<F: Scalar>(hue_deg: F, intensity: F) -> [F; 3] {
    let sixty = F::of(60.0);
    let two = F::of(2.0);
    let c = intensity; // saturation = 1
    let hp = hue_deg / sixty;
    let m = hp - two * (hp / two).floor(); // hp mod 2
    let x = c * (F::one() - (m - F::one()).abs());
    let z = F::zero();
    match hp.floor().as_f64() as i64 {
        0 => [c, x, z],
        1 => [x, c, z],
        2 => [z, c, x],
        3 => [z, x, c],
        4 => [x, z, c],
        _ => [c, z, x],
    }
}

/// Encodes a flow field as a 3-channel image in `[0, 1]`.
pub fn encode_flow_hsi<F: Scalar>(flow: &FlowField<F>, m_ref: F) -> Result<FlowImage<F>> {
    let (hue, intensity) = flow_to_hsi_components(flow, m_ref)?;
    let (h, w) = hue.dim();
    let mut pixels = Array3::zeros((3, h, w));
    for y in 0..h {
        for x in 0..w {
            let rgb = hue_to_rgb(hue[[y, x]], intensity[[y, x]]);
            for (c, &v) in rgb.iter().enumerate() {
                pixels[[c, y, x]] = v;
            }
        }
    }
    Ok(FlowImage {
        pixels,
        m_ref,
        t: flow.t,
    })
}

/// Recovers (u, v) from a saturation-1 encoding: magnitude is
/// `intensity * m_ref`, angle is the hue.
pub fn decode_flow_hsi<F: Scalar>(img: &FlowImage<F>) -> FlowField<F> {
    let (_, h, w) = img.pixels.dim();
    let mut u = Array2::zeros((h, w));
    let mut v = Array2::zeros((h, w));
    let sixty = F::of(60.0);
    for y in 0..h {
        for x in 0..w {
            let r = img.pixels[[0, y, x]];
            let g = img.pixels[[1, y, x]];
            let b = img.pixels[[2, y, x]];
            let max = r.max(g).max(b);
            if max <= F::zero() {
                continue;
            }
            let min = r.min(g).min(b);
            let delta = max - min;
            if delta <= F::zero() {
                continue;
            }
            let hue = if max == r {
                let mut hp = (g - b) / delta;
                let six = F::of(6.0);
                hp = hp - six * (hp / six).floor();
                sixty * hp
            } else if max == g {
                sixty * ((b - r) / delta + F::of(2.0))
            } else {
                sixty * ((r - g) / delta + F::of(4.0))
            };
            let mag = max * img.m_ref; // saturation 1 ⇒ value = intensity
            let rad = hue.to_radians();
            u[[y, x]] = mag * rad.cos();
            v[[y, x]] = mag * rad.sin();
        }
    }
    FlowField { u, v, t: img.t }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single_pixel(u: f64, v: f64) -> FlowField<f64> {
        FlowField {
            u: Array2::from_elem((1, 1), u),
            v: Array2::from_elem((1, 1), v),
            t: 0,
        }
    }

    #[test]
    fn zero_flow_encodes_black() {
        let img = encode_flow_hsi(&single_pixel(0.0, 0.0), 2.0).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn rightward_at_mref_is_pure_red() {
        let img = encode_flow_hsi(&single_pixel(2.0, 0.0), 2.0).unwrap();
        assert!((img.pixels[[0, 0, 0]] - 1.0).abs() < 1e-12);
        assert!(img.pixels[[1, 0, 0]].abs() < 1e-12);
        assert!(img.pixels[[2, 0, 0]].abs() < 1e-12);
    }

    #[test]
    fn pure_red_decodes_to_rightward_mref() {
        let img = FlowImage {
            pixels: Array3::from_shape_fn((3, 1, 1), |(c, _, _)| if c == 0 { 1.0f64 } else { 0.0 }),
            m_ref: 3.0,
            t: 0,
        };
        let flow = decode_flow_hsi(&img);
        assert!((flow.u[[0, 0]] - 3.0).abs() < 1e-9);
        assert!(flow.v[[0, 0]].abs() < 1e-9);
    }

    #[test]
    fn black_decodes_to_zero() {
        let img = FlowImage {
            pixels: Array3::zeros((3, 2, 2)),
            m_ref: 1.0,
            t: 0,
        };
        let flow = decode_flow_hsi(&img);
        assert!(flow.u.iter().all(|&x| x == 0.0));
        assert!(flow.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nonpositive_mref_rejected() {
        assert!(encode_flow_hsi(&single_pixel(1.0, 0.0), 0.0).is_err());
        assert!(encode_flow_hsi(&single_pixel(1.0, 0.0), -1.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_within_two_percent(
            u in -0.9f64..0.9,
            v in -0.9f64..0.9,
            m_ref in 0.5f64..4.0,
        ) {
            // Keep magnitude under 0.98 * m_ref.
            let scale = 0.98 * m_ref / (u.hypot(v).max(1e-9)).max(1.0);
            let (u, v) = (u * scale.min(1.0), v * scale.min(1.0));
            let field = single_pixel(u, v);
            let decoded = decode_flow_hsi(&encode_flow_hsi(&field, m_ref).unwrap());
            let tol = 0.02 * m_ref;
            prop_assert!((decoded.u[[0,0]] - u).abs() <= tol);
            prop_assert!((decoded.v[[0,0]] - v).abs() <= tol);
        }

        #[test]
        fn rotation_rotates_hue_and_fixes_intensity(
            u in -1.0f64..1.0,
            v in -1.0f64..1.0,
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            prop_assume!(u.hypot(v) > 1e-3);
            let m_ref = 2.0;
            let (h0, i0) = flow_to_hsi_components(&single_pixel(u, v), m_ref).unwrap();
            let (ur, vr) = (
                u * theta.cos() - v * theta.sin(),
                u * theta.sin() + v * theta.cos(),
            );
            let (h1, i1) = flow_to_hsi_components(&single_pixel(ur, vr), m_ref).unwrap();
            let expected = (h0[[0,0]] + theta.to_degrees()).rem_euclid(360.0);
            let diff = (h1[[0,0]] - expected).rem_euclid(360.0);
            let wrapped = diff.min(360.0 - diff);
            prop_assert!(wrapped < 1e-6, "hue diff {wrapped}");
            prop_assert!((i1[[0,0]] - i0[[0,0]]).abs() < 1e-9);
        }

        #[test]
        fn intensity_monotone_in_magnitude(
            angle in 0.0f64..std::f64::consts::TAU,
            m1 in 0.0f64..3.0,
            m2 in 0.0f64..3.0,
        ) {
            let m_ref = 1.5;
            let f = |m: f64| {
                let field = single_pixel(m * angle.cos(), m * angle.sin());
                flow_to_hsi_components(&field, m_ref).unwrap().1[[0, 0]]
            };
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(f(lo) <= f(hi) + 1e-12);
            prop_assert!(f(3.0) <= 1.0 + 1e-12);
        }
    }
}
