mod common;

use common::{esc_table, line_table};
use proptest::prelude::*;
use satsynth::evaluation::{
    ci_overlap, coefficient_overlaps, frontier_point, raab_variance, trimmed_mean_pct_diff,
    within_p_percent, Interval, VarianceRule, ZeroPairRule,
};
use satsynth::loglin::{fit_loglinear, MarginSpec, DEFAULT_CAP};
use satsynth::models::{CountModelSpec, Family};
use satsynth::synthesis::{synthesize, SynthesisJob};
use satsynth::table::{CategoricalSchema, CellIndex, SparseContingencyTable, Variable};

fn iv(l: f64, u: f64) -> Interval {
    Interval::new(l, u).unwrap()
}

#[test]
fn evaluation_constants() {
    for n in [1.0, 100.0, 8_190_870.0] {
        assert_eq!(raab_variance(2.5, n, n, 1).unwrap(), 5.0);
    }
    assert!((raab_variance(1.0, 7.0, 7.0, 100).unwrap() - 1.01).abs() < 1e-15);
    assert_eq!(raab_variance(3.0, 10.0, 20.0, 1).unwrap(), 9.0);
    assert_eq!(ci_overlap(&iv(0.0, 2.0), &iv(1.0, 3.0)), 0.5);
    assert_eq!(
        ci_overlap(&iv(-1.0, 4.0), &iv(f64::NEG_INFINITY, f64::INFINITY)),
        0.5
    );
    let t = line_table(&[1, 0, 3, 1]);
    let p = frontier_point(&t, &[&t], &[1.0; 5], "orig").unwrap();
    assert_eq!((p.utility, p.privacy), (1.0, 0.0));
}

#[test]
fn trimmed_mean_examples() {
    let t = trimmed_mean_pct_diff(&[2.0, 4.0, 5.0, 10.0], &[2.0, 5.0, 5.0, 9.0], 0.25).unwrap();
    // Differences -10, 0, 0, 25; one dropped at each end.
    assert_eq!((t.mean, t.used), (0.0, 2));
    assert!(trimmed_mean_pct_diff(&[1.0], &[1.0, 2.0], 0.1).is_err());
    assert!(trimmed_mean_pct_diff(&[1.0], &[1.0], 0.5).is_err());
}

#[test]
fn esc_poisson_within_half_percent() {
    let t = esc_table();
    let m = CountModelSpec::poisson(0.0).unwrap();
    let syn = synthesize(&t, &SynthesisJob::new(m, 1, 42).unwrap());
    let r = within_p_percent(
        &t,
        syn[0].table(),
        &[0.5, 1.0, 5.0, 10.0, 50.0],
        false,
        ZeroPairRule::OutsideAll,
    )
    .unwrap();
    assert!(
        (r.proportions[0] - 0.927).abs() < 0.01,
        "within 0.5%: {}",
        r.proportions[0]
    );
    assert!(r.proportions.windows(2).all(|w| w[0] <= w[1]));
    let f = frontier_point(&t, &syn, &[1.0], "poisson").unwrap();
    assert!((f.privacy - 0.311).abs() < 0.01, "privacy {}", f.privacy);
}

#[test]
fn overlaps_of_a_copy_are_one() {
    let schema =
        CategoricalSchema::new(vec![Variable::numbered("A", 3), Variable::numbered("B", 4)])
            .unwrap();
    let entries: Vec<_> = (0..12).map(|c| (CellIndex(c), 5 + (c * 7) % 11)).collect();
    let t = SparseContingencyTable::new(schema, entries, []).unwrap();
    let spec = MarginSpec::all_interactions(t.schema(), 1);
    let fit = fit_loglinear(&t, &spec, DEFAULT_CAP).unwrap();
    let n = t.total() as f64;
    let naive = coefficient_overlaps(
        &fit,
        std::slice::from_ref(&fit),
        n,
        n,
        VarianceRule::Naive,
        1.96,
        false,
    )
    .unwrap();
    assert!(naive.iter().all(|o| (o.overlap - 1.0).abs() < 1e-12));
    // Raab doubles the variance at m = 1 and n_syn = n, so the synthetic
    // interval is √2 times wider and contains the original.
    let raab = coefficient_overlaps(
        &fit,
        std::slice::from_ref(&fit),
        n,
        n,
        VarianceRule::Raab,
        1.96,
        false,
    )
    .unwrap();
    let want = 0.5 * (1.0 + 1.0 / 2f64.sqrt());
    assert!(raab.iter().all(|o| (o.overlap - want).abs() < 1e-12));
}

#[test]
fn capped_coefficients_are_skipped_or_infinite() {
    let schema =
        CategoricalSchema::new(vec![Variable::numbered("A", 3), Variable::numbered("B", 2)])
            .unwrap();
    let entries = [(0, 5), (1, 7), (2, 4), (3, 9)].map(|(c, n)| (CellIndex(c), n));
    let t = SparseContingencyTable::new(schema, entries, []).unwrap();
    let fit = fit_loglinear(
        &t,
        &MarginSpec::all_interactions(t.schema(), 1),
        DEFAULT_CAP,
    )
    .unwrap();
    let n = t.total() as f64;
    let skipped = coefficient_overlaps(
        &fit,
        std::slice::from_ref(&fit),
        n,
        n,
        VarianceRule::Naive,
        1.96,
        false,
    )
    .unwrap();
    assert!(skipped.iter().all(|o| o.parameter != "A[3]"));
    let kept = coefficient_overlaps(
        &fit,
        std::slice::from_ref(&fit),
        n,
        n,
        VarianceRule::Naive,
        1.96,
        true,
    )
    .unwrap();
    let a3 = kept.iter().find(|o| o.parameter == "A[3]").unwrap();
    assert!(a3.capped && a3.original.length().is_infinite());
    assert_eq!(a3.overlap, 1.0);
}

fn interval() -> impl Strategy<Value = Interval> {
    (-50.0f64..50.0, 0.01f64..30.0).prop_map(|(l, w)| iv(l, l + w))
}

proptest! {
    #[test]
    fn overlap_is_symmetric_and_bounded(a in interval(), b in interval()) {
        let x = ci_overlap(&a, &b);
        prop_assert!((x - ci_overlap(&b, &a)).abs() < 1e-12);
        prop_assert!(x <= 1.0 + 1e-12);
        prop_assert!(ci_overlap(&a, &a) == 1.0);
    }

    #[test]
    fn overlap_is_affine_invariant(a in interval(), b in interval(), shift in -100.0f64..100.0, scale in 0.1f64..10.0) {
        let map = |i: &Interval| iv(i.lower * scale + shift, i.upper * scale + shift);
        prop_assert!((ci_overlap(&a, &b) - ci_overlap(&map(&a), &map(&b))).abs() < 1e-9);
    }

    #[test]
    fn within_is_monotone_in_p(counts in proptest::collection::vec(0u64..30, 2..60), seed in any::<u64>()) {
        let t = line_table(&counts);
        let m = CountModelSpec::new(Family::Nbi, 0.5, 0.1).unwrap();
        let syn = synthesize(&t, &SynthesisJob::new(m, 1, seed).unwrap());
        for rule in [ZeroPairRule::OutsideAll, ZeroPairRule::BeyondFifty] {
            let r = within_p_percent(&t, syn[0].table(), &[0.5, 1.0, 5.0, 10.0, 50.0, 100.0, 500.0], false, rule).unwrap();
            prop_assert!(r.proportions.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn raab_is_linear_and_falls_with_m(v in 0.01f64..10.0, n in 1.0f64..1e6, ratio in 0.5f64..2.0, m in 1u32..50) {
        let n_syn = n * ratio;
        let one = raab_variance(v, n, n_syn, m).unwrap();
        prop_assert!((raab_variance(3.0 * v, n, n_syn, m).unwrap() - 3.0 * one).abs() <= 1e-12 * one);
        prop_assert!(raab_variance(v, n, n_syn, m + 1).unwrap() < one);
    }

    #[test]
    fn untrimmed_mean_is_plain_mean(pairs in proptest::collection::vec((0.1f64..100.0, 0.0f64..100.0), 1..40)) {
        let (o, s): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let plain = o.iter().zip(&s).map(|(q, r)| 100.0 * (r - q) / q).sum::<f64>() / o.len() as f64;
        let t = trimmed_mean_pct_diff(&o, &s, 0.0).unwrap();
        prop_assert!((t.mean - plain).abs() <= 1e-9 * plain.abs().max(1.0));
    }
}
