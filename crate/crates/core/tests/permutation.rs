use mobds::fluctuation::{ReferenceStore, Trim};
use mobds::glm::{fit, FitOptions};
use mobds::instability::NodeTests;
use mobds::permutation::{
    apply_permutation, null_distribution, null_from_assignments, perm_pvalue, permutation, permute_once, NullStrategy,
    PermutationPlan,
};
use mobds::simulation::{shape_to_gamma, Scenario, Shape};
use mobds::survival::augment;
use mobds::{rng, Dataset, Link, ModelSpec, SubjectRecord, ZVariable};
use proptest::prelude::*;
use rand::Rng;

fn null_data(seed: u64, n: usize, q: usize, k: u32) -> Dataset {
    let mut r = rng::stream(seed, &[]);
    let subjects = (0..n)
        .map(|i| {
            let z = (0..q).map(|_| r.random_range(-1.0..1.0)).collect();
            SubjectRecord::new(
                i as i64,
                r.random_range(1..=k) as i64,
                r.random_bool(0.7) as i64,
                vec![],
                z,
            )
        })
        .collect();
    let vars = (0..q).map(|l| ZVariable::numeric(format!("z{l}"))).collect();
    Dataset::new(subjects, vec![], vars, Some(k)).unwrap()
}

fn setup(ds: &Dataset) -> (mobds::FittedHazardModel, NodeTests) {
    let aug = augment(ds);
    let model = fit(&aug, &ModelSpec::intercept_only(Link::Logit), &FitOptions::default()).unwrap();
    let tests = NodeTests::new(&model, &aug, ds, Trim::default()).unwrap();
    (model, tests)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn permuted_augmentation_moves_whole_blocks(seed in any::<u64>(), n in 2usize..30) {
        let ds = null_data(seed, n, 2, 6);
        let assign = permutation(n, seed ^ 1);
        let mut sorted = assign.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        let permuted = apply_permutation(&ds, &assign);
        let aug = augment(&permuted);
        let src = ds.subjects();
        let mut r = 0;
        for (i, &b) in assign.iter().enumerate() {
            let t = src[b].obs_time;
            for s in 1..=t {
                let row = aug.row(r);
                prop_assert_eq!(row.subject_id, src[i].id);
                prop_assert_eq!(row.t_star as i64, s);
                prop_assert_eq!(row.y, (s == t && src[b].status == 1) as u8);
                prop_assert_eq!(&row.z_star, &src[i].z);
                r += 1;
            }
        }
        prop_assert_eq!(r, aug.n());
        // Permutation preserves the marginal outcome distribution.
        prop_assert_eq!(permuted.events(), ds.events());
        prop_assert_eq!(permuted.augmented_len(), ds.augmented_len());
    }
}

#[test]
fn permute_once_needs_two_subjects() {
    let ds = null_data(1, 1, 1, 3);
    assert!(permute_once(&ds, 0).is_err());
    let ds = null_data(1, 10, 1, 3);
    assert_eq!(permute_once(&ds, 4).unwrap(), permute_once(&ds, 4).unwrap());
}

#[test]
fn identity_assignment_reproduces_observed() {
    let ds = null_data(3, 120, 3, 5);
    let (_, tests) = setup(&ds);
    let id: Vec<usize> = (0..ds.len()).collect();
    assert_eq!(tests.statistics(&id).unwrap(), tests.observed().unwrap());
}

#[test]
fn refit_equals_reuse_for_intercept_only_models() {
    // Permuting outcomes leaves the life table, hence the fit, unchanged, so
    // the literal refit route and the block route must agree.
    let ds = null_data(4, 150, 3, 5);
    let (model, tests) = setup(&ds);
    let assignments: Vec<Vec<usize>> = (0..25).map(|b| permutation(ds.len(), b)).collect();
    let opts = FitOptions::default();
    let reuse = null_from_assignments(&ds, &model, &tests, &assignments, NullStrategy::Reuse, &opts).unwrap();
    let refit = null_from_assignments(&ds, &model, &tests, &assignments, NullStrategy::Refit, &opts).unwrap();
    for (a, b) in reuse.statistics.iter().zip(&refit.statistics) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-6 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn null_is_deterministic_per_seed_and_node() {
    let ds = null_data(5, 100, 2, 4);
    let (model, tests) = setup(&ds);
    let opts = FitOptions::default();
    let plan = PermutationPlan::new(50, 9);
    let a = null_distribution(&ds, &model, &tests, &plan, &opts).unwrap();
    let b = null_distribution(&ds, &model, &tests, &plan, &opts).unwrap();
    assert_eq!(a, b);
    let other = PermutationPlan { node_id: 3, ..plan };
    assert_ne!(a, null_distribution(&ds, &model, &tests, &other, &opts).unwrap());
    assert_eq!(a.n_perms(), 50);
    assert!(a.statistics.iter().all(|v| v.windows(2).all(|w| w[0] <= w[1])));
}

#[test]
fn add_one_pvalue_bounds() {
    let null: Vec<f64> = (1..=99).map(f64::from).collect();
    assert_eq!(perm_pvalue(1000.0, &null), 0.01);
    assert_eq!(perm_pvalue(0.0, &null), 1.0);
    assert_eq!(perm_pvalue(50.0, &null), 51.0 / 100.0);
}

#[test]
fn permutation_null_exceeds_the_limiting_law_on_augmented_rows() {
    // Few events spread over many rows: the row-level limiting law
    // understates the spread of the subject-level permutation null.
    let k = 8;
    let scenario = Scenario {
        k,
        shape: Shape::C,
        event_rate: 0.2,
        censoring: 0.0,
        q: 3,
        ..Scenario::default()
    };
    let sched = shape_to_gamma(k, 0.2, Shape::C).unwrap();
    let reference = ReferenceStore::global().get(k as usize - 1, Trim::default()).unwrap();
    let q95 = reference.quantile(0.95);
    let mut above = 0usize;
    let mut total = 0usize;
    for r in 0..8u64 {
        let ds = scenario.generate(&sched, 0.0, r).unwrap();
        let (model, tests) = setup(&ds);
        let null = null_distribution(
            &ds,
            &model,
            &tests,
            &PermutationPlan::new(200, r),
            &FitOptions::default(),
        )
        .unwrap();
        for v in &null.statistics {
            above += v.iter().filter(|&&s| s > q95).count();
            total += v.len();
        }
    }
    let frac = above as f64 / total as f64;
    assert!(frac > 0.05, "tail fraction {frac}");
}
