mod common;

use common::{max_abs_diff, naive_ssf};
use proptest::prelude::*;
use ssf::ssf::extract_ssf_multipass;
use ssf::{extract_ssf, SegmentationMask};

/// Masks up to 64×64 with L ≤ 40 and void (value 0) density ≤ 0.3.
fn arb_mask() -> impl Strategy<Value = SegmentationMask> {
    (1usize..=64, 1usize..=64, 1usize..=40, 0.0f64..=0.3).prop_flat_map(|(h, w, l, void)| {
        proptest::collection::vec((0.0f64..1.0, 1..=l as u16), h * w).prop_map(move |px| {
            let data = px.into_iter().map(|(u, c)| if u < void { 0 } else { c }).collect();
            SegmentationMask::new(h, w, l, Some(0), data).unwrap()
        })
    })
}

/// A single rectangle of category 1 on a void background.
fn arb_rect() -> impl Strategy<Value = (usize, usize, usize, usize, usize, usize)> {
    (2usize..=40, 2usize..=40).prop_flat_map(|(h, w)| {
        (Just(h), Just(w), 0..h, 0..w).prop_flat_map(|(h, w, r0, c0)| (Just(h), Just(w), Just(r0), Just(c0), 1..=h - r0, 1..=w - c0))
    })
}

fn rect_mask(h: usize, w: usize, r0: usize, c0: usize, rh: usize, rw: usize) -> SegmentationMask {
    let mut data = vec![0u16; h * w];
    for r in r0..r0 + rh {
        for c in c0..c0 + rw {
            data[r * w + c] = 1;
        }
    }
    SegmentationMask::new(h, w, 2, Some(0), data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn matches_naive_oracle(mask in arb_mask()) {
        let got = extract_ssf(&mask).to_flat();
        prop_assert!(max_abs_diff(&got, &naive_ssf(&mask)) <= 1e-9);
    }

    #[test]
    fn single_and_multi_pass_agree(mask in arb_mask()) {
        let a = extract_ssf(&mask).to_flat();
        let b = extract_ssf_multipass(&mask).to_flat();
        prop_assert!(max_abs_diff(&a, &b) <= 1e-12);
    }

    #[test]
    fn entries_are_bounded(mask in arb_mask()) {
        let m = extract_ssf(&mask);
        let mut pc_sum = 0.0;
        for (n, row) in m.rows().iter().enumerate() {
            pc_sum += row.pc;
            prop_assert!((0.0..=1.0).contains(&row.pc));
            if m.raw_counts()[n] == 0 {
                prop_assert_eq!(row.as_array(), [0.0; 5]);
            } else {
                prop_assert!(row.mu_x > 0.0 && row.mu_x <= 1.0);
                prop_assert!(row.mu_y > 0.0 && row.mu_y <= 1.0);
                prop_assert!(row.sigma_x >= 0.0 && row.sigma_x <= 0.5);
                prop_assert!(row.sigma_y >= 0.0 && row.sigma_y <= 0.5);
            }
        }
        let void_frac = mask.void_count() as f64 / mask.area() as f64;
        prop_assert!((pc_sum + void_frac - 1.0).abs() < 1e-12);
    }

    #[test]
    fn extraction_is_deterministic(mask in arb_mask()) {
        prop_assert_eq!(extract_ssf(&mask), extract_ssf(&mask.clone()));
    }

    /// Mirroring columns maps mu_x to (w + 1)/w − mu_x and leaves the rest alone.
    #[test]
    fn horizontal_mirror(mask in arb_mask()) {
        let a = extract_ssf(&mask);
        let b = extract_ssf(&mask.flip_horizontal());
        let w = mask.width() as f64;
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            prop_assert_eq!(ra.pc, rb.pc);
            if ra.pc > 0.0 {
                prop_assert!((rb.mu_x - ((w + 1.0) / w - ra.mu_x)).abs() < 1e-12);
            }
            prop_assert_eq!(ra.mu_y, rb.mu_y);
            prop_assert!((ra.sigma_x - rb.sigma_x).abs() < 1e-12);
            prop_assert_eq!(ra.sigma_y, rb.sigma_y);
        }
    }

    /// Nearest-neighbour upsampling by f keeps pc, shifts the means by
    /// (f − 1)/(2f·side) and adds (f² − 1)/(12 f² side²) to the variances.
    #[test]
    fn upsampling(mask in arb_mask(), f in 1usize..=3) {
        let a = extract_ssf(&mask);
        let b = extract_ssf(&mask.upsample(f).unwrap());
        let (h, w, ff) = (mask.height() as f64, mask.width() as f64, f as f64);
        for (ra, rb) in a.rows().iter().zip(b.rows()) {
            prop_assert!((ra.pc - rb.pc).abs() < 1e-12);
            if ra.pc == 0.0 {
                continue;
            }
            prop_assert!((rb.mu_x - (ra.mu_x - (ff - 1.0) / (2.0 * ff * w))).abs() < 1e-12);
            prop_assert!((rb.mu_y - (ra.mu_y - (ff - 1.0) / (2.0 * ff * h))).abs() < 1e-12);
            let vx = ra.sigma_x.powi(2) + (ff * ff - 1.0) / (12.0 * ff * ff * w * w);
            let vy = ra.sigma_y.powi(2) + (ff * ff - 1.0) / (12.0 * ff * ff * h * h);
            prop_assert!((rb.sigma_x.powi(2) - vx).abs() < 1e-12);
            prop_assert!((rb.sigma_y.powi(2) - vy).abs() < 1e-12);
        }
    }

    /// Moving a region without clipping shifts its means by the offset over
    /// the side length and leaves pc and spread unchanged.
    #[test]
    fn translation((h, w, r0, c0, rh, rw) in arb_rect()) {
        let a = extract_ssf(&rect_mask(h, w, r0, c0, rh, rw));
        let (dr, dc) = (h - r0 - rh, w - c0 - rw);
        let b = extract_ssf(&rect_mask(h, w, r0 + dr, c0 + dc, rh, rw));
        let (ra, rb) = (a.category(1), b.category(1));
        prop_assert_eq!(ra.pc, rb.pc);
        prop_assert!((rb.mu_x - ra.mu_x - dc as f64 / w as f64).abs() < 1e-12);
        prop_assert!((rb.mu_y - ra.mu_y - dr as f64 / h as f64).abs() < 1e-12);
        prop_assert!((rb.sigma_x - ra.sigma_x).abs() < 1e-12);
        prop_assert!((rb.sigma_y - ra.sigma_y).abs() < 1e-12);
        // a full rw-wide block has the discrete-uniform spread
        let sx = (((rw * rw) as f64 - 1.0) / 12.0).sqrt() / w as f64;
        prop_assert!((ra.sigma_x - sx).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip(mask in arb_mask()) {
        let m = extract_ssf(&mask);
        prop_assert_eq!(ssf::SsfMatrix::from_csv(&m.to_csv()).unwrap().to_flat(), m.to_flat());
    }
}

#[test]
fn worked_two_by_two_example() {
    let mask = SegmentationMask::from_rows(&[&[1, 1], &[2, 1]], 2, Some(0)).unwrap();
    let m = extract_ssf(&mask).to_flat();
    let s = 2f64.sqrt() / 6.0; // std of {1, 2, 2} is √2/3, over w = 2
    let expect = [0.75, 5.0 / 6.0, 2.0 / 3.0, s, s, 0.25, 0.5, 1.0, 0.0, 0.0];
    assert!(max_abs_diff(&m, &expect) < 1e-15, "{m:?}");
    assert_eq!(m, naive_ssf(&mask));
}

#[test]
fn void_pixels_still_count_towards_area() {
    let mask = SegmentationMask::from_rows(&[&[0, 1], &[0, 0]], 1, Some(0)).unwrap();
    let r = *extract_ssf(&mask).category(1);
    assert_eq!(r.pc, 0.25);
    assert_eq!((r.mu_x, r.mu_y, r.sigma_x, r.sigma_y), (1.0, 0.5, 0.0, 0.0));
}

#[test]
fn out_of_range_pixel_is_rejected() {
    assert!(SegmentationMask::from_rows(&[&[1, 3]], 2, Some(0)).is_err());
    assert!(SegmentationMask::from_rows(&[&[0, 1]], 2, None).is_err());
    assert!(SegmentationMask::from_rows(&[&[255, 1]], 2, Some(255)).is_ok());
}
