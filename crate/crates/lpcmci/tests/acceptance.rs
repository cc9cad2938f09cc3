//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. `ACCEPTANCE_ONLY=3,5` restricts the run.

use lpcmci::bench::{oracle_check, oracle_suite_config, replication_seeds, run_experiment, CiKind, ExperimentConfig, Method};
use lpcmci::ci::{population_parcorr, stationary_covariance, CiTest, OracleCi, ParCorr};
use lpcmci::data::DataFrame;
use lpcmci::discovery::{apds_t, napds_t, plain_majority_vote, run_lpcmci, run_lpcmci_observed, LpcmciConfig, Stage};
use lpcmci::fci::reset_to_skeleton;
use lpcmci::graph::{EndMark, NodeRef, WindowGraph};
use lpcmci::model::{GroundTruthGraph, GroundTruthModel};
use lpcmci::oracle::{d_sep_set, latent_project_with, true_pag_with, validate_lpcmci_pag, Oracle};
use lpcmci::simulate::{random_model, sample, ModelConfig};
use lpcmci::svarfci::{orient_plain_majority, run_svarfci, BaselineConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeSet;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
    notes: Vec<String>,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into(), notes: Vec::new() }
}

fn all_perfect(g: &WindowGraph, truth: &WindowGraph) -> bool {
    g.diff(truth).is_empty()
}

// 1
fn oracle_soundness_completeness() -> Outcome {
    let mut passed = 0;
    let mut total = 0;
    let mut notes = Vec::new();
    for index in 0..200 {
        let cfg = oracle_suite_config(index);
        let model = match random_model(&cfg, index as u64) {
            Ok(m) => m,
            Err(e) => return outcome(false, format!("model {index}: {e}")),
        };
        for k in [0, 2] {
            total += 1;
            match oracle_check(&model, 2, k, None) {
                Ok(r) if r.passed() => passed += 1,
                Ok(r) => {
                    let same_adj = r.estimated.canonical_edges().iter().map(|e| (e.0, e.1, e.2)).collect::<Vec<_>>()
                        == r.expected.canonical_edges().iter().map(|e| (e.0, e.1, e.2)).collect::<Vec<_>>();
                    notes.push(format!(
                        "model {index} (a={}, N~={}) k={k}: {} differing edges, adjacencies {}, {} unsound marks: {}",
                        cfg.autocorr,
                        cfg.n_total,
                        r.diff.len(),
                        if same_adj { "identical" } else { "differ" },
                        r.violations.len(),
                        r.diff.join("; ")
                    ));
                }
                Err(e) => notes.push(format!("model {index} k={k}: error {e}")),
            }
        }
    }
    Outcome { pass: passed == total, detail: format!("{passed}/{total} runs equal the true PAG"), notes }
}

fn permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

// 2
fn order_independence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut checked, mut failed) = (0, 0);
    let mut notes = Vec::new();
    for m in 0..20 {
        let mut cfg = oracle_suite_config(m);
        cfg.n_total = 3 + m % 4;
        let model = random_model(&cfg, 1000 + m as u64).expect("model");
        let n = model.observed.len();
        let cfg_l = LpcmciConfig::new(2, 0.05, 2);
        let oracle = Oracle::new(&model.graph(), 2).expect("oracle");
        let base_oracle = run_lpcmci(&mut OracleCi::new(&oracle), &cfg_l).expect("run").graph;
        let data = sample(&model, 500, replication_seeds(m as u64).1).expect("sample");
        let base_data = run_lpcmci(&mut ParCorr::new(&data), &cfg_l).expect("run").graph;
        for _ in 0..50 {
            let perm = permutation(&mut rng, n);
            let pm = model.with_permuted_observed(&perm);
            let po = Oracle::new(&pm.graph(), 2).expect("oracle");
            let go = run_lpcmci(&mut OracleCi::new(&po), &cfg_l).expect("run").graph;
            let gd = run_lpcmci(&mut ParCorr::new(&data.permuted(&perm)), &cfg_l).expect("run").graph;
            for (kind, got, base) in [("oracle", &go, &base_oracle), ("parcorr", &gd, &base_data)] {
                checked += 1;
                let want = base.permuted(&perm);
                if got != &want {
                    failed += 1;
                    if notes.len() < 10 {
                        notes.push(format!("model {m} {kind} perm {perm:?}: {}", got.diff(&want).join("; ")));
                    }
                }
            }
        }
    }
    Outcome { pass: failed == 0, detail: format!("{}/{checked} permuted runs equal the permuted output", checked - failed), notes }
}

/// Detection rates of X(t)-Y(t), Y(t-1)-Z(t) and the false Y(t-2)-Z(t).
fn fig1_runs<F>(reps: u64, mut run: F) -> [f64; 3]
where
    F: FnMut(&mut dyn CiTest) -> WindowGraph,
{
    let model = GroundTruthModel::latent_confounder_example();
    let mut hits = [0usize; 3];
    for r in 0..reps {
        let data = sample(&model, 500, replication_seeds(r).1).expect("sample");
        let g = run(&mut ParCorr::new(&data));
        for (h, (i, tau, j)) in hits.iter_mut().zip([(0, 0, 1), (1, 1, 2), (1, 2, 2)]) {
            if g.slot_marks(i, tau, j).is_some() {
                *h += 1;
            }
        }
    }
    hits.map(|h| h as f64 / reps as f64)
}

// 3
fn motivational_example() -> Outcome {
    let reps = 200;
    let [l_xy, l_yz1, l_yz] = fig1_runs(reps, |ci| run_lpcmci(ci, &LpcmciConfig::new(2, 0.01, 4)).expect("lpcmci").graph);
    let [f_xy, f_yz1, f_yz] = fig1_runs(reps, |ci| run_svarfci(ci, &BaselineConfig::new(2, 0.01)).expect("svarfci").graph);
    let pass = l_xy >= 0.6 && f_xy <= 0.4 && f_yz > l_yz;
    let mut o = outcome(
        pass,
        format!(
            "X(t)-Y(t) detected: LPCMCI(k=4) {l_xy:.3}, SVAR-FCI {f_xy:.3}; false Y(t-2)-Z(t): LPCMCI {l_yz:.3}, SVAR-FCI {f_yz:.3}"
        ),
    );
    o.notes.push(format!("true Y(t-1)-Z(t) detected: LPCMCI {l_yz1:.3}, SVAR-FCI {f_yz1:.3}"));
    if f_yz1 < 0.5 && f_yz <= l_yz {
        // Y(t-2) o-> Z(t) <-o Z(t-1) is an unshielded collider, so Z(t-1) is in
        // the possible-d-sep set of Y(t-2) and {Y(t-1), Z(t-1)} separates.
        o.notes.push("SVAR-FCI loses Y(t-1)-Z(t) but its possible-d-sep phase then removes Y(t-2)-Z(t)".into());
    }
    o
}

// 4
fn autocorrelation_trend() -> Outcome {
    let mut model = ModelConfig::new(7, 0.95);
    model.latent_frac = 0.3;
    let cell = |method, k| ExperimentConfig {
        method,
        k,
        ci: CiKind::Parcorr,
        alpha: 0.01,
        tau_max: 3,
        model: model.clone(),
        t: 500,
        reps: 100,
        seed_base: 40_000,
        max_cond: None,
    };
    let report = match run_experiment(&[cell(Method::Lpcmci, 4), cell(Method::Svarfci, 0)], 1) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let (l, f) = (&report.cells[0], &report.cells[1]);
    let lr = l.metrics.contemporaneous.edgemark_recall.value;
    let fr = f.metrics.contemporaneous.edgemark_recall.value;
    let fpr = l.metrics.lagged_cross.adj_fpr.value;
    let pass = !l.failed && !f.failed && lr - fr >= 0.25 && fpr <= 2.5 * 0.01;
    let mut o = outcome(
        pass,
        format!(
            "contemporaneous edgemark recall LPCMCI(k=4) {lr:.3} vs SVAR-FCI {fr:.3} (gap {:.3}); LPCMCI lagged FPR {fpr:.4}",
            lr - fr
        ),
    );
    o.notes.push(format!(
        "runs ok: {}/{} and {}/{}; mean runtime {:.2}s and {:.2}s",
        l.n_ok, l.config.reps, f.n_ok, f.config.reps, l.runtime.mean_s, f.runtime.mean_s
    ));
    o
}

fn subsets(items: &[NodeRef]) -> Vec<Vec<NodeRef>> {
    (0..1usize << items.len())
        .map(|mask| items.iter().enumerate().filter(|(k, _)| mask >> k & 1 == 1).map(|(_, &v)| v).collect())
        .collect()
}

// 5
fn effect_size() -> Outcome {
    let model = GroundTruthModel::latent_confounder_example();
    let cov = match stationary_covariance(&model, 4) {
        Ok(c) => c,
        Err(e) => return outcome(false, e.to_string()),
    };
    let rho = |a: NodeRef, b: NodeRef, s: &[NodeRef]| population_parcorr(&cov, a, b, s).expect("parcorr").abs();
    let window: Vec<NodeRef> = (0..=2).flat_map(|lag| (0..3).map(move |v| NodeRef::new(v, lag))).collect();
    let n = |v, lag| NodeRef::new(v, lag);
    // (A, B, parents of A and B in the MAG other than A and B)
    let cases = [("X(t)-Y(t)", n(0, 0), n(1, 0), vec![n(0, 1), n(1, 1)]), ("Y(t-1)-Z(t)", n(1, 1), n(2, 0), vec![n(1, 2), n(2, 1)])];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, a, b, def) in cases {
        let rest: Vec<NodeRef> = window.iter().copied().filter(|&v| v != a && v != b).collect();
        let without = subsets(&rest).iter().map(|s| rho(a, b, s)).fold(f64::INFINITY, f64::min);
        let free: Vec<NodeRef> = rest.iter().copied().filter(|v| !def.contains(v)).collect();
        let with = subsets(&free)
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.extend_from_slice(&def);
                rho(a, b, &s)
            })
            .fold(f64::INFINITY, f64::min);
        pass &= with > without + 1e-8;
        parts.push(format!("{name}: min with defaults {with:.6} vs without {without:.6}"));
    }
    let xy0 = rho(n(0, 0), n(1, 0), &[]);
    let xy1 = rho(n(0, 0), n(1, 0), &[n(0, 1), n(1, 1)]);
    let yz0 = rho(n(1, 1), n(2, 0), &[n(1, 2)]);
    let yz1 = rho(n(1, 1), n(2, 0), &[n(1, 2), n(2, 1)]);
    pass &= yz1 > yz0 + 1e-8;
    parts.push(format!("rho(Y-1;Z|Y-2)={yz0:.6} < rho(Y-1;Z|Y-2,Z-1)={yz1:.6}"));
    let mut o = outcome(pass, parts.join("; "));
    // X and Y share identical AR(1) dynamics around a white-noise confounder,
    // so these two agree exactly; the gain for this link is in the minimum.
    o.notes.push(format!("pairwise rho(X;Y)={xy0:.6}, rho(X;Y|X-1,Y-1)={xy1:.6}"));
    o
}

/// MAG over A..F: A->B, A->C, B->E, C->D, B<->D, C<->E, D->F<-E. The only
/// separating set of D and E is {A, B, C}, and neither D nor E is adjacent to A.
/// A, B, C, D, E, F observed; D and E are separated only by sets containing A.
/// Plain FCI gets the heads at F here through R1 from the invariant heads at
/// D and E, not through the collider rule, so panel C cannot be matched.
/// An exhaustive search over all MAGs on six observed nodes of this shape
/// turned up no graph where it can.
pub fn majority_counterexample() -> GroundTruthGraph {
    let (a, b, c, d, e, f, l1, l2) = (0, 1, 2, 3, 4, 5, 6, 7);
    let links = vec![(a, 0, b), (a, 0, c), (b, 0, e), (c, 0, d), (l1, 0, b), (l1, 0, d), (l2, 0, c), (l2, 0, e), (d, 0, f), (e, 0, f)];
    GroundTruthGraph::new(8, links, vec![a, b, c, d, e, f])
}

// 6
fn majority_rule_regression() -> Outcome {
    let g = majority_counterexample();
    let oracle = Oracle::new(&g, 0).expect("oracle");
    let panel_b = true_pag_with(&oracle).expect("pag");
    let (d, e, f) = (NodeRef::new(3, 0), NodeRef::new(4, 0), NodeRef::new(5, 0));
    let heads_at_f = panel_b.mark_at(f, d) == Some(EndMark::Head) && panel_b.mark_at(f, e) == Some(EndMark::Head);
    let lpcmci = run_lpcmci(&mut OracleCi::new(&oracle), &LpcmciConfig::new(0, 0.05, 0)).expect("lpcmci").graph;
    let plain = orient_plain_majority(&mut OracleCi::new(&oracle), &panel_b, 0.05).expect("fci");
    let mut panel_c = panel_b.clone();
    panel_c.set_mark(f, d, EndMark::Circle).unwrap();
    panel_c.set_mark(f, e, EndMark::Circle).unwrap();
    let mut skel = panel_b.clone();
    reset_to_skeleton(&mut skel);
    let vote = plain_majority_vote(&skel, &mut OracleCi::new(&oracle), 0.05, None, d, f, e).expect("vote");
    let pass = heads_at_f && all_perfect(&lpcmci, &panel_b) && all_perfect(&plain, &panel_c);
    let mut o = outcome(
        pass,
        format!(
            "true PAG has both heads at F: {heads_at_f}; plain vote on D-F-E: {vote:?}; LPCMCI vs panel B differences: {}; plain majority FCI vs panel C differences: {}",
            lpcmci.diff(&panel_b).len(),
            plain.diff(&panel_c).len()
        ),
    );
    o.notes.extend(lpcmci.diff(&panel_b).into_iter().map(|s| format!("LPCMCI: {s}")));
    o.notes.extend(plain.diff(&panel_c).into_iter().map(|s| format!("plain FCI: {s}")));
    o
}

/// Kolmogorov-Smirnov distance of a sample from U(0, 1).
fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(k, &x)| ((k as f64 + 1.0) / n - x).max(x - k as f64 / n))
        .fold(0.0, f64::max)
}

// 7
fn property_suites() -> Outcome {
    let mut notes = Vec::new();
    let (mut stage_checks, mut stage_bad) = (0usize, 0usize);
    let (mut sep_checks, mut sep_bad) = (0usize, 0usize);
    let (mut pds_checks, mut pds_bad) = (0usize, 0usize);
    for m in 0..40 {
        let cfg = oracle_suite_config(m);
        let model = random_model(&cfg, 5000 + m as u64).expect("model");
        let oracle = Oracle::new(&model.graph(), 2).expect("oracle");
        let mag = latent_project_with(&oracle).expect("mag");
        let k = m % 3;
        let check_apds = |g: &WindowGraph, checks: &mut usize, bad: &mut Vec<String>, final_graph: bool| {
            for (i, tau, j) in mag.all_keys() {
                if mag.slot_marks(i, tau, j).is_some() {
                    continue;
                }
                let (a, b) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
                let (ab, ba) = (oracle.is_ancestor(a, b), oracle.is_ancestor(b, a));
                let mut pairs = Vec::new();
                if ab {
                    pairs.push((b, a, apds_t(g, b, a)));
                }
                if ba {
                    pairs.push((a, b, apds_t(g, a, b)));
                }
                if !ab && !ba && final_graph {
                    pairs.push((b, a, napds_t(g, b, a)));
                    pairs.push((a, b, napds_t(g, a, b)));
                }
                for (x, y, cand) in pairs {
                    *checks += 1;
                    let dsep = d_sep_set(&mag, x, y);
                    if !dsep.is_subset(&cand) {
                        bad.push(format!("D-Sep({x}, {y}) = {dsep:?} not in {cand:?}"));
                    }
                }
            }
        };
        let mut stage_errs = Vec::new();
        let mut pds_errs = Vec::new();
        let cfg_l = LpcmciConfig::new(2, 0.05, k);
        let mut obs = |stage: Stage, st: &lpcmci::discovery::DiscoveryState| {
            stage_checks += 1;
            let v = validate_lpcmci_pag(&st.graph, &oracle).expect("validate");
            if !v.is_empty() {
                stage_errs.push(format!("model {m} after {stage:?}: {}", v.join("; ")));
            }
            check_apds(&st.graph, &mut pds_checks, &mut pds_errs, false);
        };
        let st = run_lpcmci_observed(&mut OracleCi::new(&oracle), &cfg_l, &mut obs).expect("run");
        check_apds(&st.graph, &mut pds_checks, &mut pds_errs, true);
        stage_bad += stage_errs.len();
        pds_bad += pds_errs.len();
        notes.extend(stage_errs.into_iter().take(3));
        notes.extend(pds_errs.into_iter().take(3).map(|s| format!("model {m}: {s}")));

        for (&(i, tau, j), sets) in st.sepsets.iter() {
            let (x, y) = (NodeRef::new(i, tau), NodeRef::new(j, 0));
            let anc = oracle.observed_ancestors(&[x, y]).expect("ancestors");
            for s in sets {
                sep_checks += 1;
                let separates = oracle.d_separated(x, y, s).expect("dsep");
                let minimal = s.iter().filter(|v| !anc.contains(v)).all(|v| {
                    let rest: Vec<NodeRef> = s.iter().copied().filter(|w| w != v).collect();
                    !oracle.d_separated(x, y, &rest).expect("dsep")
                });
                if !(separates && minimal) {
                    sep_bad += 1;
                    notes.push(format!("model {m}: sepset of {x}, {y} = {s:?} separates {separates}, weakly minimal {minimal}"));
                }
            }
        }
    }

    // null calibration of the partial correlation test
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut pvals = Vec::with_capacity(2000);
    for _ in 0..2000 {
        let cols: Vec<Vec<f64>> = (0..4).map(|_| (0..200).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let df = DataFrame::from_columns(&cols).expect("frame");
        let mut pc = ParCorr::new(&df);
        let x = NodeRef::new(rng.random_range(0..4), rng.random_range(0..3));
        let y = loop {
            let y = NodeRef::new(rng.random_range(0..4), 0);
            if y != x {
                break y;
            }
        };
        let mut cond = BTreeSet::new();
        let size = rng.random_range(0..=3);
        while cond.len() < size {
            let v = NodeRef::new(rng.random_range(0..4), rng.random_range(0..3));
            if v != x && v != y {
                cond.insert(v);
            }
        }
        let cond: Vec<NodeRef> = cond.into_iter().collect();
        pvals.push(pc.test(x, y, &cond).expect("parcorr").p_value);
    }
    let ks = ks_uniform(pvals);

    // d-separation answers are stable under further window doubling
    let (mut dsep_checks, mut dsep_bad) = (0usize, 0usize);
    for m in 0..20 {
        let model = random_model(&oracle_suite_config(m), 7000 + m as u64).expect("model");
        let truth = model.graph();
        let oracle = Oracle::new(&truth, 2).expect("oracle");
        let far = oracle.level(3);
        let nodes: Vec<NodeRef> = (0..=2).flat_map(|lag| (0..oracle.n_observed()).map(move |v| NodeRef::new(v, lag))).collect();
        for _ in 0..100 {
            let a = nodes[rng.random_range(0..nodes.len())];
            let b = nodes[rng.random_range(0..nodes.len())];
            if a == b {
                continue;
            }
            let s: Vec<NodeRef> = nodes.iter().copied().filter(|&v| v != a && v != b && rng.random_bool(0.3)).collect();
            dsep_checks += 1;
            let got = oracle.d_separated(a, b, &s).expect("converges");
            let to_model = |v: NodeRef| oracle.to_model(v).unwrap();
            let ms: Vec<NodeRef> = s.iter().map(|&v| to_model(v)).collect();
            if got != far.d_separated(to_model(a), to_model(b), &ms) {
                dsep_bad += 1;
            }
        }
    }

    let pass = stage_bad == 0 && sep_bad == 0 && pds_bad == 0 && ks < 0.05 && dsep_bad == 0;
    Outcome {
        pass,
        detail: format!(
            "PAG validity {}/{stage_checks} stages; weak minimality {}/{sep_checks} sepsets; D-Sep inclusion {}/{pds_checks}; \
             ParCorr null KS {ks:.4} (< 0.05); d-separation window doubling {}/{dsep_checks}",
            stage_checks - stage_bad,
            sep_checks - sep_bad,
            pds_checks - pds_bad,
            dsep_checks - dsep_bad
        ),
        notes,
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; they are ignored here.
    let only: Option<BTreeSet<usize>> =
        std::env::var("ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let criteria: [(usize, &str, fn() -> Outcome); 7] = [
        (1, "oracle soundness and completeness", oracle_soundness_completeness),
        (2, "order independence", order_independence),
        (3, "motivational example detection rates", motivational_example),
        (4, "contemporaneous orientation recall at high autocorrelation", autocorrelation_trend),
        (5, "effect size with parent defaults", effect_size),
        (6, "plain majority rule non-completeness", majority_rule_regression),
        (7, "property suites", property_suites),
    ];
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!("criterion {id} ({name}): {} - {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, start.elapsed().as_secs_f64());
        for n in o.notes.iter().take(20) {
            println!("    {n}");
        }
        if !o.pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
