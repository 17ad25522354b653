//! Properties of fitting, filtering, the decision rule and scoring.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcmd::metrics::score;
use vcmd::patchmatch::{Offset, OffsetField};
use vcmd::postproc::{
    consistency_filter, decide, dlf_error, dlf_error_values, DlfConfig, RegionLabeling,
};
use vcmd::{Dims, MaskVolume};

fn field(d: Dims, offsets: Vec<Offset>) -> OffsetField {
    OffsetField::from_offsets(0, 1, d, d, offsets).unwrap()
}

fn affine(d: Dims, a: [[i32; 3]; 3]) -> OffsetField {
    let offs = (0..d.len())
        .map(|i| {
            let (_, r, c) = d.coords(i);
            let (r, c) = (r as i32, c as i32);
            Offset::new(
                a[0][0] + a[0][1] * r + a[0][2] * c,
                a[1][0] + a[1][1] * r + a[1][2] * c,
                a[2][0],
            )
        })
        .collect();
    field(d, offs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn affine_integer_fields_fit_exactly(
        a in prop::array::uniform3(prop::array::uniform3(-40i32..40)),
        rows in 3usize..24, cols in 3usize..24, w in 1usize..6,
    ) {
        let d = Dims::new(2, rows, cols);
        let e = dlf_error(&affine(d, a), w);
        for v in e {
            prop_assert!(v.abs() <= 1e-9, "{v}");
        }
    }

    #[test]
    fn affine_real_fields_fit_to_rounding(
        coef in prop::array::uniform9(-3.0f64..3.0), rows in 3usize..20, cols in 3usize..20,
    ) {
        let d = Dims::new(1, rows, cols);
        let vals: Vec<[f64; 3]> = (0..d.len()).map(|i| {
            let (_, r, c) = d.coords(i);
            let (r, c) = (r as f64, c as f64);
            [coef[0] + coef[1] * r + coef[2] * c, coef[3] + coef[4] * r + coef[5] * c, coef[6] + coef[7] * r + coef[8] * c]
        }).collect();
        for v in dlf_error_values(d, &vals, &vec![true; d.len()], 5) {
            prop_assert!(v.abs() <= 1e-9, "{v}");
        }
    }

    #[test]
    fn integral_and_direct_fits_agree(seed in 0u64..1000, w in 1usize..5) {
        let d = Dims::new(2, 14, 17);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offs: Vec<Offset> = (0..d.len()).map(|_| {
            if rng.gen_bool(0.1) { Offset::NONE } else {
                Offset::new(rng.gen_range(-50..50), rng.gen_range(-50..50), rng.gen_range(-3..3))
            }
        }).collect();
        let vals: Vec<[f64; 3]> = offs.iter().map(|o| [o.dr as f64, o.dc as f64, o.dt as f64]).collect();
        let present: Vec<bool> = offs.iter().map(|o| !o.is_none()).collect();
        let a = dlf_error(&field(d, offs), w);
        let b = dlf_error_values(d, &vals, &present, w);
        for (x, y) in a.iter().zip(&b) {
            if x.is_finite() || y.is_finite() {
                prop_assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn consistency_filter_is_a_shrinking_fixpoint(seed in 0u64..10_000) {
        let d = Dims::new(3, 16, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Blocky random map so regions have some size.
        let block: Vec<bool> = (0..3 * 4 * 4).map(|_| rng.gen_bool(0.4)).collect();
        let bits = (0..d.len()).map(|i| { let (t, r, c) = d.coords(i); block[(t * 4 + r / 4) * 4 + c / 4] }).collect();
        let map = MaskVolume::from_bits(d, bits).unwrap();
        let offs = (0..d.len()).map(|_| Offset::new(rng.gen_range(-16..16), rng.gen_range(-16..16), rng.gen_range(-2..3))).collect();
        let f = field(d, offs);
        let cfg = DlfConfig::default();
        let out = consistency_filter(&map, &f, &cfg).unwrap();
        for (o, m) in out.bits().iter().zip(map.bits()) {
            prop_assert!(!o | m);
        }
        prop_assert_eq!(consistency_filter(&out, &f, &cfg).unwrap(), out.clone());
        // Every surviving region has a majority of its matches in the map.
        let lab = RegionLabeling::new(&out);
        let mut hits = vec![0usize; lab.len()];
        for i in 0..d.len() {
            let l = lab.label(i);
            if l == 0 { continue; }
            if let Some((t, r, c)) = f.target(i) {
                if let Some(j) = d.checked_index(t, r, c) {
                    hits[l as usize - 1] += out.bits()[j] as usize;
                }
            }
        }
        for (reg, h) in lab.regions().iter().zip(hits) {
            prop_assert!(2 * h >= reg.size);
        }
    }

    #[test]
    fn score_counts_partition_the_volume(seed in 0u64..10_000, extra in 0usize..4) {
        let d = Dims::new(2, 9, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mk = |rng: &mut ChaCha8Rng| MaskVolume::from_bits(d, (0..d.len()).map(|_| rng.gen_bool(0.3)).collect()).unwrap();
        let (m, g) = (mk(&mut rng), mk(&mut rng));
        let s = score(&m, &g).unwrap();
        prop_assert_eq!(s.tp + s.fp + s.tn + s.fn_, d.len());
        prop_assert!((s.f_measure - 2.0 * s.tp as f64 / (2 * s.tp + s.fp + s.fn_) as f64).abs() < 1e-15);
        // Appending empty frames adds only true negatives.
        let d2 = Dims::new(2 + extra, 9, 11);
        let pad = |v: &MaskVolume| { let mut b = v.bits().to_vec(); b.resize(d2.len(), false); MaskVolume::from_bits(d2, b).unwrap() };
        let s2 = score(&pad(&m), &pad(&g)).unwrap();
        prop_assert_eq!(s2.f_measure, s.f_measure);
        prop_assert_eq!(s2.tn, s.tn + extra * d.frame_len());
    }
}

#[test]
fn random_offsets_fit_badly() {
    let d = Dims::new(4, 40, 40);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let offs = (0..d.len())
        .map(|_| {
            Offset::new(
                rng.gen_range(-50..50),
                rng.gen_range(-50..50),
                rng.gen_range(-50..50),
            )
        })
        .collect();
    let mut e = dlf_error(&field(d, offs), 5);
    e.sort_by(f64::total_cmp);
    let median = e[e.len() / 2];
    assert!(median > 1e3, "median {median}");
}

#[test]
fn linear_real_field_fits_exactly() {
    let d = Dims::new(1, 30, 30);
    let vals: Vec<[f64; 3]> = (0..d.len())
        .map(|i| {
            let (_, r, c) = d.coords(i);
            [0.1 * r as f64, -0.2 * c as f64, 0.0]
        })
        .collect();
    let e = dlf_error_values(d, &vals, &vec![true; d.len()], 5);
    assert!(e.iter().all(|v| v.abs() <= 1e-9));
}

#[test]
fn decision_threshold_is_strict() {
    let d = Dims::new(1, 100, 300);
    let cfg = DlfConfig::default();
    let mut m = MaskVolume::empty(d);
    m.bits_mut()[..cfg.detection_threshold]
        .iter_mut()
        .for_each(|b| *b = true);
    assert!(!decide(&m, &cfg).detected);
    m.bits_mut()[cfg.detection_threshold] = true;
    assert!(decide(&m, &cfg).detected);
}
