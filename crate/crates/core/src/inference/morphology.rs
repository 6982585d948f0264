//! Binary morphology with an all-ones k×k structuring element, stride 1.
//!
//! Erosion is a min filter, dilation a max filter; both are separable for
//! a square window. Out-of-bounds reads default to 0 for dilation and 1
//! for erosion so image borders are not spuriously eroded; other border
//! constants are available through [`BorderPolicy`].

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary mask; entries are 0 or 1.
pub type Mask = Array2<u8>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BorderPolicy {
    /// Dilation reads out-of-bounds as 0, erosion as 1.
    #[default]
    NonSpurious,
    /// Both read 0.
    Zero,
    /// Both read 1.
    One,
}

impl BorderPolicy {
    fn outside(self, dilating: bool) -> u8 {
        match self {
            BorderPolicy::NonSpurious => {
                if dilating {
                    0
                } else {
                    1
                }
            }
            BorderPolicy::Zero => 0,
            BorderPolicy::One => 1,
        }
    }
}

fn check_kernel(k: usize) -> Result<()> {
    if k.is_multiple_of(2) || k == 0 {
        return Err(Error::Config(format!(
            "structuring element must be odd, got {k}x{k}"
        )));
    }
    Ok(())
}

/// Separable window min/max; `dilating` picks max, otherwise min.
fn window_filter(mask: &Mask, k: usize, dilating: bool, border: BorderPolicy) -> Mask {
    let (h, w) = mask.dim();
    let r = (k / 2) as i64;
    let outside = border.outside(dilating);
    let pick = |a: u8, b: u8| if dilating { a.max(b) } else { a.min(b) };
    let mut rows = Array2::zeros((h, w));
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = outside;
            for d in -r..=r {
                let xx = x + d;
                let v = if xx < 0 || xx >= w as i64 {
                    outside
                } else {
                    mask[[y, xx as usize]]
                };
                acc = pick(acc, v);
            }
            rows[[y, x as usize]] = acc;
        }
    }
    let mut out = Array2::zeros((h, w));
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = outside;
            for d in -r..=r {
                let yy = y + d;
                let v = if yy < 0 || yy >= h as i64 {
                    outside
                } else {
                    rows[[yy as usize, x]]
                };
                acc = pick(acc, v);
            }
            out[[y as usize, x]] = acc;
        }
    }
    out
}

pub fn dilate(mask: &Mask, k: usize, border: BorderPolicy) -> Result<Mask> {
    check_kernel(k)?;
    Ok(window_filter(mask, k, true, border))
}

pub fn erode(mask: &Mask, k: usize, border: BorderPolicy) -> Result<Mask> {
    check_kernel(k)?;
    Ok(window_filter(mask, k, false, border))
}

/// Dilation then erosion; fills small holes in large segments.
pub fn closing(mask: &Mask, k: usize, border: BorderPolicy) -> Result<Mask> {
    erode(&dilate(mask, k, border)?, k, border)
}

/// Erosion then dilation; removes small segments.
pub fn opening(mask: &Mask, k: usize, border: BorderPolicy) -> Result<Mask> {
    dilate(&erode(mask, k, border)?, k, border)
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&[u8]]) -> Mask {
        let h = rows.len();
        let w = rows[0].len();
        Array2::from_shape_fn((h, w), |(y, x)| rows[y][x])
    }

    #[test]
    fn opening_removes_isolated_speck() {
        let mut mask = Array2::zeros((9, 9));
        mask[[4, 4]] = 1;
        let opened = opening(&mask, 3, BorderPolicy::default()).unwrap();
        assert!(opened.iter().all(|&v| v == 0));
    }

    #[test]
    fn closing_fills_interior_hole() {
        let mut mask = Array2::from_elem((9, 9), 1u8);
        mask[[4, 4]] = 0;
        let closed = closing(&mask, 3, BorderPolicy::default()).unwrap();
        assert!(closed.iter().all(|&v| v == 1));
    }

    #[test]
    fn even_kernel_rejected() {
        let mask = Array2::zeros((4, 4));
        assert!(opening(&mask, 4, BorderPolicy::default()).is_err());
        assert!(erode(&mask, 0, BorderPolicy::default()).is_err());
    }

    #[test]
    fn border_blob_survives_opening() {
        // A 3-wide solid band along the top edge; with erosion reading
        // out-of-bounds as 1, the band's border rows are not eaten away.
        let mask = mask_from(&[
            &[1, 1, 1, 1, 1, 1],
            &[1, 1, 1, 1, 1, 1],
            &[1, 1, 1, 1, 1, 1],
            &[0, 0, 0, 0, 0, 0],
            &[0, 0, 0, 0, 0, 0],
        ]);
        let opened = opening(&mask, 3, BorderPolicy::NonSpurious).unwrap();
        assert_eq!(opened, mask);
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
            proptest::collection::vec(0u8..=1, h * w)
                .prop_map(move |v| Array2::from_shape_vec((h, w), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_brute_force_oracle(mask in arb_mask(), k in prop::sample::select(vec![3usize, 5, 7])) {
            for border in [BorderPolicy::NonSpurious, BorderPolicy::Zero, BorderPolicy::One] {
                prop_assert_eq!(dilate(&mask, k, border).unwrap(), oracle::dilate(&mask, k, border));
                prop_assert_eq!(erode(&mask, k, border).unwrap(), oracle::erode(&mask, k, border));
            }
        }

        #[test]
        fn idempotence_and_extensivity(mask in arb_mask(), k in prop::sample::select(vec![3usize, 5])) {
            let border = BorderPolicy::default();
            let open = opening(&mask, k, border).unwrap();
            let close = closing(&mask, k, border).unwrap();
            prop_assert_eq!(&opening(&open, k, border).unwrap(), &open);
            prop_assert_eq!(&closing(&close, k, border).unwrap(), &close);
            for ((o, m), c) in open.iter().zip(mask.iter()).zip(close.iter()) {
                prop_assert!(o <= m, "opening must be anti-extensive");
                prop_assert!(c >= m, "closing must be extensive");
            }
        }

        #[test]
        fn monotone_in_the_mask(a in arb_mask(), k in prop::sample::select(vec![3usize, 5])) {
            // b = a with extra foreground; X ⊆ Y ⇒ op(X) ⊆ op(Y).
            let mut b = a.clone();
            for (i, v) in b.iter_mut().enumerate() {
                if i % 3 == 0 {
                    *v = 1;
                }
            }
            let border = BorderPolicy::default();
            let (oa, ob) = (opening(&a, k, border).unwrap(), opening(&b, k, border).unwrap());
            for (x, y) in oa.iter().zip(ob.iter()) {
                prop_assert!(x <= y);
            }
            let (ca, cb) = (closing(&a, k, border).unwrap(), closing(&b, k, border).unwrap());
            for (x, y) in ca.iter().zip(cb.iter()) {
                prop_assert!(x <= y);
            }
        }
    }
}
