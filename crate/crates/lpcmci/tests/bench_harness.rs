use lpcmci::bench::{
    aggregate, count_graphs, parse_experiments, run_experiment, run_replication, ClassCounts, GraphCounts, LinkClass, Replication, RepError,
    Report,
};
use lpcmci::graph::{Edge, EndMark, MiddleMark, NodeRef, WindowGraph};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(rng: &mut ChaCha8Rng, n: usize, tau_max: usize, density: f64) -> WindowGraph {
    let mut g = WindowGraph::empty(n, tau_max);
    let marks = [EndMark::Tail, EndMark::Head, EndMark::Circle, EndMark::Conflict];
    for (i, tau, j) in g.all_keys() {
        if !rng.random_bool(density) {
            continue;
        }
        let at_i = marks[rng.random_range(0..4)];
        let at_j = marks[rng.random_range(if tau > 0 { 1 } else { 0 }..4)];
        g.set_edge(Edge::new(NodeRef::new(i, tau), NodeRef::new(j, 0), at_i, MiddleMark::Empty, at_j)).unwrap();
    }
    g
}

fn class(c: &GraphCounts, l: LinkClass) -> ClassCounts {
    match l {
        LinkClass::LaggedCross => c.lagged_cross,
        LinkClass::Contemporaneous => c.contemporaneous,
        LinkClass::Auto => c.auto,
    }
}

const ORACLE_CELL: &str = r#"[
  {"method": "lpcmci", "k": 1, "ci": "oracle", "alpha": 0.05, "tau_max": 1,
   "model": {"n_total": 4, "autocorr": 0.5}, "T": 0, "reps": 4, "seed_base": 11},
  {"method": "svarfci", "ci": "parcorr", "alpha": 0.05, "tau_max": 1,
   "model": {"n_total": 3, "autocorr": 0.5}, "T": 200, "reps": 3, "seed_base": 5}
]"#;

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn rates_lie_in_unit_interval_and_fpr_excludes_true_links(seed in any::<u64>(), n in 1usize..5, tau_max in 0usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = random_graph(&mut rng, n, tau_max, 0.3);
        let est = random_graph(&mut rng, n, tau_max, 0.5);
        let counts = count_graphs(&est, &truth).unwrap();
        for l in LinkClass::ALL {
            let c = class(&counts, l);
            let (mut adj, mut nonadj, mut false_adj) = (0, 0, 0);
            for (i, tau, j) in truth.all_keys() {
                if LinkClass::of(i, tau, j) != l {
                    continue;
                }
                match (truth.slot_marks(i, tau, j), est.slot_marks(i, tau, j)) {
                    (Some(_), _) => adj += 1,
                    (None, e) => {
                        nonadj += 1;
                        false_adj += e.is_some() as u64;
                    }
                }
            }
            prop_assert_eq!(c.true_adj, adj);
            prop_assert_eq!(c.true_nonadj, nonadj);
            prop_assert_eq!(c.false_adj, false_adj);
            let m = c.metrics();
            for r in [m.adj_tpr, m.adj_fpr, m.edgemark_recall, m.edgemark_precision] {
                prop_assert!((0.0..=1.0).contains(&r.value));
                prop_assert_eq!(r.zero_count, r.den == 0);
                prop_assert!(r.num <= r.den);
            }
        }
    }

    #[test]
    fn aggregation_ignores_replication_order(seed in any::<u64>(), reps in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = parse_experiments(ORACLE_CELL).unwrap().remove(0);
        let truth = random_graph(&mut rng, 3, 1, 0.4);
        let mut runs: Vec<Result<Replication, RepError>> = (0..reps as u64)
            .map(|s| {
                if rng.random_bool(0.15) {
                    return Err(RepError { seed: s, message: "boom".into() });
                }
                let est = random_graph(&mut rng, 3, 1, 0.5);
                Ok(Replication {
                    seed: s,
                    counts: count_graphs(&est, &truth).unwrap(),
                    min_abs_statistic: rng.random_bool(0.8).then(|| rng.random()),
                    max_cond: rng.random_range(0..5),
                    wall_time_s: rng.random(),
                })
            })
            .collect();
        let a = aggregate(&cfg, runs.clone());
        runs.shuffle(&mut rng);
        prop_assert_eq!(a, aggregate(&cfg, runs));
    }
}

#[test]
fn identical_graphs_give_perfect_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = random_graph(&mut rng, 4, 2, 0.5);
    let c = count_graphs(&g, &g).unwrap();
    for l in LinkClass::ALL {
        let m = class(&c, l).metrics();
        assert_eq!(m.adj_tpr.value, 1.0);
        assert_eq!(m.adj_fpr.value, 0.0);
        assert_eq!(m.edgemark_recall.value, 1.0);
    }
}

#[test]
fn report_round_trips_and_is_deterministic() {
    let cells = parse_experiments(ORACLE_CELL).unwrap();
    let r1 = run_experiment(&cells, 1).unwrap();
    let js = r1.to_json_string().unwrap();
    assert_eq!(Report::from_json_str(&js).unwrap(), r1);
    let r2 = run_experiment(&cells, 3).unwrap();
    assert_eq!(r1.without_timing().to_json_string().unwrap(), r2.without_timing().to_json_string().unwrap());
    assert_eq!(r1.cells[0].n_ok, 4);
    // oracle runs recover the true PAG
    let m = &r1.cells[0].metrics;
    for l in LinkClass::ALL {
        assert_eq!(m.class(l).adj_tpr.value, 1.0);
        assert_eq!(m.class(l).adj_fpr.value, 0.0);
    }
    let csv = r1.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * LinkClass::ALL.len());
}

#[test]
fn replications_depend_only_on_seed() {
    let cfg = parse_experiments(ORACLE_CELL).unwrap().remove(1);
    let a = run_replication(&cfg, 17).unwrap();
    let b = run_replication(&cfg, 17).unwrap();
    assert_eq!(a.counts, b.counts);
    assert_eq!(a.min_abs_statistic, b.min_abs_statistic);
}
