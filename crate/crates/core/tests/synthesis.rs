mod common;

use common::{esc_table_scaled, line_table};
use proptest::prelude::*;
use satsynth::models::{moments, CountModelSpec, Family};
use satsynth::synthesis::{
    expected_grand_total, provenance_path, read_provenance, synthesize, write_provenance,
    SynthesisJob,
};
use satsynth::table::{CategoricalSchema, CellIndex, SparseContingencyTable, Variable};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn with_structural(counts: &[u64], structural: &[u64]) -> SparseContingencyTable {
    let schema = CategoricalSchema::new(vec![Variable::numbered("A", counts.len())]).unwrap();
    let entries = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (CellIndex(i as u64), c));
    SparseContingencyTable::new(schema, entries, structural.iter().map(|&c| CellIndex(c))).unwrap()
}

fn job(family: Family, sigma: f64, alpha: f64, m: u32, seed: u64) -> SynthesisJob {
    SynthesisJob::new(CountModelSpec::new(family, sigma, alpha).unwrap(), m, seed).unwrap()
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_and_sequential_agree() {
    use satsynth::synthesis::{synthesize_with, Execution};

    let table = esc_table_scaled(30, 3);
    for family in Family::ALL {
        let j = job(family, 0.7, 0.02, 2, 99);
        let a = synthesize_with(&table, &j, Execution::Sequential);
        let b = synthesize_with(&table, &j, Execution::Parallel);
        assert_eq!(a, b, "{family}");
    }
}

#[test]
fn same_seed_same_output() {
    let table = esc_table_scaled(5, 1);
    let j = job(Family::Pig, 2.0, 0.05, 3, 7);
    assert_eq!(synthesize(&table, &j), synthesize(&table, &j));
    let other = synthesize(&table, &job(Family::Pig, 2.0, 0.05, 3, 8));
    assert_ne!(synthesize(&table, &j)[0].table(), other[0].table());
}

#[test]
fn replicates_differ_and_carry_provenance() {
    let table = esc_table_scaled(5, 1);
    let reps = synthesize(&table, &job(Family::Nbi, 1.0, 0.0, 3, 11));
    assert_eq!(reps.len(), 3);
    assert_ne!(reps[0].table(), reps[1].table());
    for (i, r) in reps.iter().enumerate() {
        let p = r.provenance();
        assert_eq!(p.replicate, i as u32 + 1);
        assert_eq!((p.m, p.seed, p.n), (3, 11, table.total()));
        assert_eq!(p.n_syn, r.n_syn());
    }
}

#[test]
fn structural_zeros_stay_zero_and_alpha_zero_keeps_zeros() {
    let table = with_structural(&[0, 3, 0, 0, 8, 1, 0, 0], &[2, 6]);
    for family in Family::ALL {
        for r in synthesize(&table, &job(family, 1.5, 0.0, 200, 5)) {
            for cell in [0u64, 2, 3, 6, 7] {
                assert_eq!(r.table().count(CellIndex(cell)), 0);
            }
            assert_eq!(r.table().structural_zeros(), table.structural_zeros());
        }
        let reps = synthesize(&table, &job(family, 1.5, 3.0, 200, 5));
        assert!(reps.iter().all(|r| [2u64, 6]
            .iter()
            .all(|&c| r.table().count(CellIndex(c)) == 0)));
        assert!(reps.iter().any(|r| r.table().count(CellIndex(0)) > 0));
    }
}

#[test]
fn per_cell_means_are_unbiased() {
    let counts = [0u64, 1, 3, 10, 40];
    let table = line_table(&counts);
    let replicates = 10_000;
    for family in Family::ALL {
        let (sigma, alpha) = (0.8, 0.5);
        let reps = synthesize(&table, &job(family, sigma, alpha, replicates, 21));
        for (cell, &f) in counts.iter().enumerate() {
            let mu = if f == 0 { alpha } else { f as f64 };
            let (_, var) = moments(family, mu, sigma).unwrap();
            let mean = reps
                .iter()
                .map(|r| r.table().count(CellIndex(cell as u64)) as f64)
                .sum::<f64>()
                / replicates as f64;
            let se = (var / replicates as f64).sqrt();
            assert!(
                (mean - mu).abs() < 4.0 * se,
                "{family} cell {cell}: {mean} vs {mu}"
            );
        }
    }
}

#[test]
fn distinct_cells_are_uncorrelated() {
    let table = line_table(&[5, 5]);
    let replicates = 10_000;
    for family in Family::ALL {
        let reps = synthesize(&table, &job(family, 1.0, 0.0, replicates, 4));
        let xs: Vec<(f64, f64)> = reps
            .iter()
            .map(|r| {
                (
                    r.table().count(CellIndex(0)) as f64,
                    r.table().count(CellIndex(1)) as f64,
                )
            })
            .collect();
        let n = replicates as f64;
        let (ma, mb) = xs
            .iter()
            .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / n, b + y / n));
        let cov: f64 = xs.iter().map(|&(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = xs.iter().map(|&(x, _)| (x - ma).powi(2)).sum::<f64>() / n;
        let vb: f64 = xs.iter().map(|&(_, y)| (y - mb).powi(2)).sum::<f64>() / n;
        let r = cov / (va * vb).sqrt();
        assert!(r.abs() < 4.0 / n.sqrt(), "{family}: r = {r}");
    }
}

#[test]
fn poisson_grand_totals_are_poisson_dispersed() {
    let table = line_table(&[2, 0, 7, 1, 1, 4]);
    let replicates = 5000;
    let reps = synthesize(&table, &job(Family::Poisson, 0.0, 0.0, replicates, 8));
    let totals: Vec<f64> = reps.iter().map(|r| r.n_syn() as f64).collect();
    let mean = totals.iter().sum::<f64>() / replicates as f64;
    let d: f64 = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / mean;
    let chi = ChiSquared::new(replicates as f64 - 1.0).unwrap();
    let p = chi.cdf(d);
    assert!(p > 0.0005 && p < 0.9995, "dispersion index p = {p}");
    assert!((mean - 15.0).abs() < 4.0 * (15.0 / replicates as f64).sqrt());
}

#[test]
fn single_unique_cell_survives_with_probability_exp_minus_one() {
    let table = line_table(&[1]);
    let replicates = 20_000;
    let reps = synthesize(&table, &job(Family::Poisson, 0.0, 0.0, replicates, 12));
    let hit = reps
        .iter()
        .filter(|r| r.table().count(CellIndex(0)) == 1)
        .count() as f64
        / replicates as f64;
    let p = (-1f64).exp();
    assert!((hit - p).abs() < 4.0 * (p * (1.0 - p) / replicates as f64).sqrt());
}

#[test]
fn expected_grand_total_examples() {
    let t = line_table(&[7]);
    assert_eq!(
        expected_grand_total(&t, &job(Family::Poisson, 0.0, 0.0, 1, 0)),
        7.0
    );
    let t = line_table(&[0, 0, 3, 0, 2]);
    assert_eq!(
        expected_grand_total(&t, &job(Family::Nbi, 1.0, 0.0, 1, 0)),
        5.0
    );
    assert!((expected_grand_total(&t, &job(Family::Nbi, 1.0, 0.5, 1, 0)) - 6.5).abs() < 1e-12);
    let spec_total = 8_190_870.0 + 0.02 * 3_134_980.0;
    assert!((spec_total - 8_253_569.6f64).abs() < 1e-6);
}

#[test]
fn provenance_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let table = line_table(&[1, 2, 3]);
    let rep = &synthesize(&table, &job(Family::Pig, 0.5, 0.1, 1, 3))[0];
    let path = provenance_path(dir.path().join("syn.csv"));
    assert!(path.to_string_lossy().ends_with("syn.provenance.json"));
    write_provenance(rep.provenance(), &path).unwrap();
    assert_eq!(&read_provenance(&path).unwrap(), rep.provenance());
}

#[test]
fn invalid_jobs_are_rejected() {
    let model = CountModelSpec::poisson(0.0).unwrap();
    assert!(SynthesisJob::new(model, 0, 1).is_err());
    assert!(CountModelSpec::new(Family::Nbi, -1.0, 0.0).is_err());
    assert!(CountModelSpec::new(Family::Nbi, 1.0, -0.1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn zeros_and_structure_survive_any_model(
        counts in proptest::collection::vec(0u64..6, 1..40),
        sigma in 0.0f64..5.0,
        f in 0usize..3,
        seed in any::<u64>(),
    ) {
        let table = line_table(&counts);
        let family = Family::ALL[f];
        let rep = &synthesize(&table, &job(family, sigma, 0.0, 1, seed))[0];
        for (i, &c) in counts.iter().enumerate() {
            if c == 0 {
                prop_assert_eq!(rep.table().count(CellIndex(i as u64)), 0);
            }
        }
        prop_assert_eq!(rep.table().schema(), table.schema());
    }
}
