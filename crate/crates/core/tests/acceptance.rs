//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Run a subset by naming criteria: `cargo test --test acceptance -- c4 c5`.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, SymmetricEigen};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tog_core::bench::*;
use tog_core::geometry::*;
use tog_core::grasp::*;
use tog_core::ontology::*;
use tog_core::recognition::*;
use tog_core::registration::*;
use tog_core::template_db::*;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, u64, Check); 11] = [
        ("c1", "metric identities and invariances", 10, c1_metric_identities),
        ("c2", "cluster size oracle", 1, c2_cluster_size),
        (
            "c3",
            "recognition equals exhaustive re-enumeration",
            30,
            c3_exhaustive_recognition,
        ),
        ("c4", "self-match recognition", 120, c4_self_match),
        ("c5", "unseen-variant recognition", 300, c5_unseen_variants),
        ("c6", "registration recovery", 180, c6_registration_recovery),
        ("c7", "ablation direction", 300, c7_ablation),
        ("c8", "grasp transfer exactness", 10, c8_transfer),
        ("c9", "robustness trend", 600, c9_robustness),
        ("c10", "ontology fixtures", 5, c10_ontology),
        ("c11", "runtime trade-off", 120, c11_runtime),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, limit, check) in criteria {
        if !filters.is_empty() && !filters.iter().any(|f| f == id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = outcome.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {id:<3} {name}: {} [{:.1}s of {limit}s{}]",
            if pass { "PASS" } else { "FAIL" },
            outcome.detail,
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", over time" }
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Random rigid motion with a rotation built from a unit quaternion.
fn rigid() -> impl Strategy<Value = RigidTransform> {
    (prop::array::uniform4(-1.0f64..1.0), prop::array::uniform3(-2.0f64..2.0))
        .prop_filter("quaternion too short", |(q, _)| {
            q.iter().map(|v| v * v).sum::<f64>() > 0.05
        })
        .prop_map(|(q, t)| {
            let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
            RigidTransform::from_rotation(q.to_rotation_matrix())
                * RigidTransform::from_translation(Vector3::new(t[0], t[1], t[2]))
        })
}

/// Anisotropic random cloud: a part blob offset from the rest of the object.
fn part_and_whole(seed: u64) -> (PointCloud, PointCloud) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blob = |n: usize, scale: [f64; 3], offset: [f64; 3], rng: &mut ChaCha8Rng| -> Vec<Point3> {
        (0..n)
            .map(|_| {
                Point3::new(
                    offset[0] + scale[0] * rng.random_range(-1.0..1.0),
                    offset[1] + scale[1] * rng.random_range(-1.0..1.0),
                    offset[2] + scale[2] * rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    };
    let part = blob(
        rng.random_range(20..60),
        [0.05, 0.025, 0.01],
        [0.12, 0.03, 0.0],
        &mut rng,
    );
    let mut whole = blob(rng.random_range(100..200), [0.1, 0.06, 0.03], [0.0, 0.0, 0.0], &mut rng);
    whole.extend_from_slice(&part);
    (PointCloud::new(part).unwrap(), PointCloud::new(whole).unwrap())
}

/// Reference point of a part computed from scratch: nearest point to the
/// center of the box along the eigenvectors of the covariance.
fn oracle_reference(points: &[Point3]) -> usize {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    let cov = points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p.coords - mean;
        a + d * d.transpose()
    }) / n;
    let axes = SymmetricEigen::new(cov).eigenvectors;
    let local: Vec<Vector3> = points.iter().map(|p| axes.transpose() * (p.coords - mean)).collect();
    let lo = local.iter().fold(Vector3::repeat(f64::INFINITY), |a, v| a.inf(v));
    let hi = local.iter().fold(Vector3::repeat(f64::NEG_INFINITY), |a, v| a.sup(v));
    let center = axes * ((lo + hi) / 2.0) + mean;
    (0..points.len())
        .min_by(|&a, &b| {
            (points[a].coords - center)
                .norm()
                .total_cmp(&(points[b].coords - center).norm())
                .then(a.cmp(&b))
        })
        .unwrap()
}

fn c1_metric_identities() -> Outcome {
    const CASES: u32 = 1000;
    let worst = std::cell::Cell::new(0.0f64);
    let strategy = (any::<u64>(), rigid(), 0.2f64..5.0, 0usize..1000);
    let result = runner(CASES).run(&strategy, |(seed, t, scale, pick)| {
        let (m_part, m_all) = part_and_whole(seed);
        let moved = |c: &PointCloud| c.map_points(|p| Point3::from(t.apply(p).coords * scale));
        let (o_part, o_all) = (moved(&m_part), moved(&m_all));
        let r = oracle_reference(m_part.points());
        let o_ref = o_part.points()[r];

        // congruent pairs
        let ident = [
            d_pca(&o_part, &m_part).unwrap(),
            d_ppd(&o_part, &o_ref, &m_part).unwrap(),
            d_ccd(&o_all, &o_part, &m_all, &m_part).unwrap(),
        ];
        // invariance of each metric against a fixed, unrelated template
        let (q_part, q_all) = part_and_whole(seed ^ 0x5EED);
        let s = pick % m_part.len();
        let before = [
            d_pca(&m_part, &q_part).unwrap(),
            d_ppd(&m_part, &m_part.points()[s], &q_part).unwrap(),
            d_ccd(&m_all, &m_part, &q_all, &q_part).unwrap(),
        ];
        let after = [
            d_pca(&o_part, &q_part).unwrap(),
            d_ppd(&o_part, &o_part.points()[s], &q_part).unwrap(),
            d_ccd(&o_all, &o_part, &q_all, &q_part).unwrap(),
        ];
        let err = ident
            .iter()
            .map(|v| v.abs())
            .chain(before.iter().zip(&after).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        worst.set(worst.get().max(err));
        prop_assert!(err <= 1e-6, "deviation {err:e}");
        Ok(())
    });
    let detail = format!(
        "{CASES} random congruent/transformed cases, worst deviation {:.1e}",
        worst.get()
    );
    match result {
        Ok(()) => Outcome::new(true, detail),
        Err(e) => Outcome::new(false, format!("{detail}; {e}")),
    }
}

fn c2_cluster_size() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = Vec::new();
    let (mut low, mut high) = (0, 0);
    for i in 0..100 {
        let (n_o, n_part, n_all) = match i % 3 {
            // formula below 3
            0 => {
                let n_all = rng.random_range(200..5000usize);
                (rng.random_range(3..60usize), rng.random_range(1..10usize), n_all)
            }
            // part covers the whole template: k reaches n_o
            1 => {
                let n = rng.random_range(10..3000usize);
                (rng.random_range(3..2000usize), n, n)
            }
            _ => {
                let n_all = rng.random_range(50..5000usize);
                (rng.random_range(3..3000usize), rng.random_range(1..=n_all), n_all)
            }
        };
        let raw = (n_o as f64 * n_part as f64 / n_all as f64 + 0.5).floor() as usize;
        if raw < 3 {
            low += 1;
        }
        if raw >= n_o {
            high += 1;
        }
        let expected = raw.clamp(3, n_o);
        let got = cluster_size_from_counts(n_o, n_part, n_all).unwrap();
        // same count through the cloud-level entry point on a subset
        let via_clouds = if i % 10 == 0 {
            let cloud = |n: usize| PointCloud::new((0..n).map(|j| Point3::new(j as f64, 0.0, 0.0)).collect()).unwrap();
            let template = Template {
                id: "t".into(),
                object_class: "mug".into(),
                full_cloud: cloud(n_all),
                parts: [("handle".to_string(), cloud(n_part))].into_iter().collect(),
                grasps: Default::default(),
            };
            cluster_size(&cloud(n_o), &template, "handle").unwrap()
        } else {
            got
        };
        if got != expected || via_clouds != expected {
            mismatches.push((n_o, n_part, n_all, expected, got));
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!("100 triples ({low} below 3, {high} at or above N_o), mismatches {mismatches:?}"),
    )
}

/// Per-seed mean `d` by brute force: sorted distances for the neighborhood
/// and the standalone metric functions for the scores.
fn brute_force_means(o_all: &PointCloud, templates: &[Template], part: &str) -> Vec<Option<f64>> {
    let pts = o_all.points();
    (0..pts.len())
        .map(|seed| {
            let mut order: Vec<usize> = (0..pts.len()).collect();
            order.sort_by(|&a, &b| {
                (pts[a] - pts[seed])
                    .norm()
                    .total_cmp(&(pts[b] - pts[seed]).norm())
                    .then(a.cmp(&b))
            });
            let mut total = 0.0;
            for t in templates {
                let m_part = t.part_cloud(part).unwrap();
                let k = ((o_all.len() * m_part.len()) as f64 / t.full_cloud.len() as f64 + 0.5).floor() as usize;
                let k = k.clamp(3, o_all.len());
                let cluster = o_all.select(&order[..k]);
                let d = d_pca(&cluster, &m_part).ok()?
                    + d_ppd(&cluster, &pts[seed], &m_part).ok()?
                    + d_ccd(o_all, &cluster, &t.full_cloud, &m_part).ok()?;
                total += d;
            }
            Some(total / templates.len() as f64)
        })
        .collect()
}

fn c3_exhaustive_recognition() -> Outcome {
    let leaf = 0.01;
    let gripper = GripperConfig::default();
    let shapes = [ShapeSpec::mug(), ShapeSpec::bottle(), ShapeSpec::scissor()];
    let mut agree = 0;
    let mut ties = 0;
    let mut notes = Vec::new();
    for i in 0..20u64 {
        let setup = ClassSetup::new(shapes[i as usize % 3].clone());
        let class = setup.class().unwrap();
        let part = setup.part().unwrap();
        let count = 1 + (i as usize % 3);
        let templates = build_class_templates(&setup, count, 0.1, leaf, 50_000.0, &gripper, i).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i);
        let shape = setup.shape.perturbed(0.2, &mut rng).unwrap();
        let object = generate_object(&shape, 50_000.0, &mut rng).unwrap();
        let object = apply_transform(&object, &random_rotation(&mut rng));
        let mut cloud = voxel_downsample(&object, leaf).unwrap().without_labels();
        if cloud.len() > 300 {
            let mut idx: Vec<usize> = (0..cloud.len()).collect();
            rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
            idx.truncate(300);
            idx.sort_unstable();
            cloud = cloud.select(&idx);
        }
        let got = recognize(&cloud, &templates, &part).unwrap();
        let means = brute_force_means(&cloud, &templates, &part);
        let (best, best_mean) = means
            .iter()
            .enumerate()
            .filter_map(|(s, m)| m.map(|m| (s, m)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .unwrap();
        if got.seed_index == best {
            agree += 1;
        } else if means[got.seed_index].is_some_and(|m| (m - best_mean).abs() <= 1e-9) {
            // floating-point tie between two seeds
            ties += 1;
        } else {
            notes.push(format!("{class} #{i}: seed {} vs {best}", got.seed_index));
        }
    }
    Outcome::new(
        agree + ties == 20,
        format!("{agree}/20 identical winning seeds, {ties} exact ties {notes:?}"),
    )
}

fn pra_line(r: &SuiteReport) -> String {
    let mut per_class = std::collections::BTreeMap::<&str, (usize, usize)>::new();
    for t in &r.trials {
        let e = per_class.entry(t.class.as_str()).or_default();
        e.1 += 1;
        if t.recognized {
            e.0 += 1;
        }
    }
    let classes: Vec<String> = per_class.iter().map(|(c, (a, b))| format!("{c} {a}/{b}")).collect();
    format!(
        "IoU >= 0.5 in {}/{} ({:.1}%; {})",
        r.counts.recognized,
        r.counts.trials,
        100.0 * r.metrics.pra,
        classes.join(", ")
    )
}

fn c4_self_match() -> Outcome {
    let config = SuiteConfig {
        name: "self-match".into(),
        trials: 40,
        source: ObjectSource::Template,
        partial_view: false,
        upright: false,
        recognition_only: true,
        ..SuiteConfig::default()
    };
    let r = run_suite(&config).unwrap();
    Outcome::new(
        r.counts.recognized as f64 >= 0.95 * 40.0,
        format!("{}, need 95%", pra_line(&r)),
    )
}

fn c5_unseen_variants() -> Outcome {
    let config = SuiteConfig {
        name: "unseen-variants".into(),
        trials: 60,
        variation: 0.2,
        recognition_only: true,
        ..SuiteConfig::default()
    };
    let r = run_suite(&config).unwrap();
    Outcome::new(
        r.counts.recognized as f64 >= 0.75 * 60.0,
        format!("{}, need 75%", pra_line(&r)),
    )
}

fn c6_registration_recovery() -> Outcome {
    let config = SuiteConfig {
        name: "registration".into(),
        trials: 20,
        source: ObjectSource::Template,
        ..SuiteConfig::default()
    };
    let sets = build_template_sets(&config).unwrap();
    let mut residuals = Vec::new();
    let mut grid_ok = true;
    for i in 0..config.trials {
        let scene = build_scene(&config, &sets, i).unwrap();
        let o_all = scene.observed.without_labels();
        let Ok(rec) = recognize(&o_all, &scene.templates, &scene.part) else {
            residuals.push(f64::INFINITY);
            continue;
        };
        let reg_config = RegistrationConfig::new(config.leaf, derive_seed(7, i as u64));
        if i == 0 {
            let m = &scene.templates[0];
            let local = register_local(&rec.part_cloud, &m.part_cloud(&scene.part).unwrap(), &reg_config);
            if let Ok(local) = local {
                let search = optimize_rotation(&o_all, &rec.seed, &m.full_cloud, &local.transform).unwrap();
                grid_ok = search.candidates == 512 && rotation_grid_angles().len().pow(3) == 512;
            }
        }
        let results: Vec<RegistrationResult> = register_all(&o_all, &rec, &scene.templates, &scene.part, &reg_config)
            .into_iter()
            .filter_map(|(_, r)| r.ok())
            .collect();
        let residual = match best_registration(&results) {
            Some(best) => {
                let t = scene.templates.iter().find(|t| t.id == best.template_id).unwrap();
                registration_residual(&o_all, &best.t_total, t)
            }
            None => f64::INFINITY,
        };
        residuals.push(residual);
    }
    let good = residuals.iter().filter(|&&r| r < config.leaf).count();
    let mut sorted = residuals.clone();
    sorted.sort_by(f64::total_cmp);
    Outcome::new(
        grid_ok && good as f64 >= 0.8 * 20.0,
        format!(
            "median residual < 5 mm in {good}/20 (need 16; median of medians {:.2} mm), rotation grid 512: {grid_ok}",
            1e3 * sorted[10]
        ),
    )
}

fn offset_handle_setup() -> ClassSetup {
    let base = MugParams::default();
    let scene = ShapeSpec::MugLike(MugParams {
        handle_height: base.handle_height - 0.012,
        ..base
    });
    ClassSetup {
        scene: Some(scene),
        ..ClassSetup::new(ShapeSpec::mug())
    }
}

fn c7_ablation() -> Outcome {
    let full = SuiteConfig {
        name: "ablation-full".into(),
        classes: vec![offset_handle_setup()],
        trials: 20,
        variation: 0.1,
        ..SuiteConfig::default()
    };
    let sets = build_template_sets(&full).unwrap();
    let run = |c: SuiteConfig| run_suite_with(&c, &sets).unwrap();
    let direct = run(SuiteConfig {
        name: "ablation-direct".into(),
        registration: RegistrationMode::Direct,
        ..full.clone()
    });
    let no_adjust = run(SuiteConfig {
        name: "ablation-no-adjust".into(),
        adjust: false,
        ..full.clone()
    });
    let full = run(full);
    let planned_ok = |r: &SuiteReport| r.trials.iter().filter(|t| t.planned && t.selection_ok).count();
    let (pf, pd) = (planned_ok(&full), planned_ok(&direct));
    let (sf, sn) = (full.counts.stable, no_adjust.counts.stable);
    Outcome::new(
        pf > pd && sf > sn,
        format!(
            "on-part plans: full {pf}/20 vs direct {pd}/20; stick passes: adjusted {sf} vs unadjusted {sn} (recognized {})",
            full.counts.recognized
        ),
    )
}

fn c8_transfer() -> Outcome {
    let gripper = GripperConfig::default();
    let setup = ClassSetup::new(ShapeSpec::mug());
    let template = build_class_templates(&setup, 1, 0.0, DEFAULT_LEAF, DEFAULT_DENSITY, &gripper, 8)
        .unwrap()
        .remove(0);
    let grasps = template.part_grasps("handle");

    // identity registration: world grasp = t0 * g
    let worst = std::cell::Cell::new(0.0f64);
    let exact = runner(200).run(&rigid(), |t0| {
        let reg = RegistrationResult {
            template_id: template.id.clone(),
            t_loc: RigidTransform::identity(),
            t_opt: RigidTransform::identity(),
            t_icp: RigidTransform::identity(),
            t_total: RigidTransform::identity(),
            fitness: 1.0,
            rmse: 0.0,
            correspondence_count: 0,
            local_attempts: 1,
            rotation_objective: 0.0,
        };
        let out = transfer_grasps(&template, "handle", &reg, &t0).unwrap();
        prop_assert_eq!(out.len(), grasps.len());
        for (c, g) in out.iter().zip(&grasps) {
            let expect = t0.to_matrix() * g.pose.to_matrix();
            let err = (c.pose_world.to_matrix() - expect).abs().max();
            worst.set(worst.get().max(err));
            prop_assert!(err <= 1e-9, "deviation {err:e}");
            prop_assert_eq!(c.width, g.width);
        }
        Ok(())
    });

    // localized box size
    let k_ok = (1..2000usize).all(|n| lbb_neighbor_count(n) == n / 2 + n % 2);

    // every planned grasp passes both probes on the observed part
    let config = SuiteConfig {
        trials: 12,
        ..SuiteConfig::default()
    };
    let sets = build_template_sets(&config).unwrap();
    let mut checked = 0usize;
    let mut scenes = 0usize;
    let mut probe_failures = 0usize;
    for i in 0..config.trials {
        let scene = build_scene(&config, &sets, i).unwrap();
        let o_all = scene.observed.without_labels();
        let Ok(rec) = recognize(&o_all, &scene.templates, &scene.part) else {
            continue;
        };
        let reg_config = RegistrationConfig::new(config.leaf, i as u64);
        let regs: Vec<_> = register_all(&o_all, &rec, &scene.templates, &scene.part, &reg_config)
            .into_iter()
            .filter_map(|(_, r)| r.ok())
            .collect();
        let req = PlanRequest {
            o_all: &o_all,
            recognition: &rec,
            registrations: &regs,
            templates: &scene.templates,
            part_path: &scene.part,
            t0: &scene.camera,
            gripper: &config.gripper,
        };
        let Ok(out) = plan(&req, &AlwaysFeasible, &PlanOptions::default()) else {
            continue;
        };
        scenes += 1;
        let (part, _) = split_world(&o_all, &rec, &scene.camera);
        for g in &out {
            checked += 1;
            if !(check_placement(g, &part, &config.gripper) && check_stick(g, &part, &config.gripper)) {
                probe_failures += 1;
            }
        }
    }
    let pass = exact.is_ok() && k_ok && probe_failures == 0 && checked > 0;
    Outcome::new(
        pass,
        format!(
            "200 random camera poses, worst deviation {:.1e}{}; k = ceil(N/2) for N < 2000: {k_ok}; \
             {checked} planned grasps over {scenes} scenes, {probe_failures} failing a probe",
            worst.get(),
            exact.err().map(|e| format!(" ({e})")).unwrap_or_default()
        ),
    )
}

fn c9_robustness() -> Outcome {
    let base = SuiteConfig {
        name: "original".into(),
        trials: 45,
        ..SuiteConfig::default()
    };
    let sets = build_template_sets(&base).unwrap();
    let conditions = [
        ("original", Condition::default()),
        (
            "occlusion",
            Condition {
                occlusion: Some(0.3),
                ..Condition::default()
            },
        ),
        (
            "noise",
            Condition {
                noise_sigma: 0.001,
                smoothing: Some(0.006),
                ..Condition::default()
            },
        ),
        (
            "scaling",
            Condition {
                template_scales: vec![0.85, 1.15],
                ..Condition::default()
            },
        ),
    ];
    let reports: Vec<(&str, SuiteReport)> = conditions
        .into_iter()
        .map(|(name, condition)| {
            let c = SuiteConfig {
                name: name.into(),
                condition,
                ..base.clone()
            };
            (name, run_suite_with(&c, &sets).unwrap())
        })
        .collect();
    let original = reports[0].1.metrics.pgsr;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, r) in &reports {
        let p = r.metrics.pgsr;
        if *name != "original" {
            pass &= original >= p && original - p <= 0.15;
        }
        let occ = if *name == "occlusion" {
            format!(", occluded {:.0}%", 100.0 * r.mean_occlusion_fraction)
        } else {
            String::new()
        };
        parts.push(format!(
            "{name} {}/45 ({:.1}%{occ})",
            r.counts.plan_and_grasp_ok,
            100.0 * p
        ));
    }
    Outcome::new(pass, format!("PGSR {}", parts.join(", ")))
}

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ontology")
}

fn c10_ontology() -> Outcome {
    let graph = OntologyGraph::household();
    let client = FixtureClient::from_dir(fixture_dir());
    let cases: [(&str, bool, &str, &str); 7] = [
        ("Pour the water out of the mug.", false, "mug", "handle"),
        ("Hold the coffee-filled mug steady.", false, "mug", "body.outside"),
        ("Shake the bottle before I drink it.", false, "bottle", "body"),
        ("Open the bottle for me.", false, "bottle", "cap"),
        ("Cut the paper with the scissors.", false, "scissor", "handle"),
        ("Hand the scissors to me.", false, "scissor", "blade"),
        ("Empty the bowl into the sink.", true, "mug", "body.outside"),
    ];
    let mut runs: Vec<Vec<String>> = Vec::new();
    let mut correct = [0usize; 2];
    for _ in 0..3 {
        let mut outputs = Vec::new();
        correct = [0, 0];
        for (i, (text, novel, class, part)) in cases.iter().enumerate() {
            let instruction = Instruction::new(*text).unwrap();
            let r = resolve(&graph, &instruction, &client, *novel);
            let ok = matches!(&r, Ok(r) if r.object_class == *class && r.part_path == *part
                && (r.mapped_from.is_some() == *novel));
            correct[usize::from(i == 6)] += usize::from(ok);
            outputs.push(serde_json::to_string(&r.map_err(|e| e.to_string())).unwrap());
        }
        runs.push(outputs);
    }
    let deterministic = runs.windows(2).all(|w| w[0] == w[1]);
    Outcome::new(
        correct == [6, 1] && deterministic,
        format!(
            "{}/6 instructions, bowl case {}/1, identical across 3 runs: {deterministic}",
            correct[0], correct[1]
        ),
    )
}

fn c11_runtime() -> Outcome {
    let gripper = GripperConfig::default();
    let setup = ClassSetup::new(ShapeSpec::mug());
    let templates = build_class_templates(&setup, 10, 0.1, DEFAULT_LEAF, DEFAULT_DENSITY, &gripper, 11).unwrap();
    // observed scenes: partial views of mug variants, thinned to 1500 points
    let mut scenes = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    while scenes.len() < 3 {
        let shape = setup.shape.perturbed(0.2, &mut rng).unwrap();
        let object = generate_object(&shape, DEFAULT_DENSITY, &mut rng).unwrap();
        let object = apply_transform(&object, &random_rotation(&mut rng));
        let cloud = voxel_downsample(&object, DEFAULT_LEAF).unwrap().without_labels();
        if cloud.len() < 1500 {
            continue;
        }
        let mut idx: Vec<usize> = (0..cloud.len()).collect();
        rand::seq::SliceRandom::shuffle(&mut idx[..], &mut rng);
        idx.truncate(1500);
        idx.sort_unstable();
        scenes.push(cloud.select(&idx));
    }
    let counts = [1usize, 3, 5, 10];
    let mut medians = Vec::new();
    for &n in &counts {
        let mut times: Vec<f64> = Vec::new();
        for _ in 0..3 {
            for s in &scenes {
                let t = Instant::now();
                recognize(s, &templates[..n], "handle").unwrap();
                times.push(t.elapsed().as_secs_f64());
            }
        }
        times.sort_by(f64::total_cmp);
        medians.push(times[times.len() / 2]);
    }
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    let three = medians[1];
    let line: Vec<String> = counts
        .iter()
        .zip(&medians)
        .map(|(n, t)| format!("{n}: {:.3}s", t))
        .collect();
    Outcome::new(
        increasing && three <= 2.0,
        format!(
            "median recognition time per 1500-point scene {}; strictly increasing: {increasing}; 3 templates within 2 s: {}",
            line.join(", "),
            three <= 2.0
        ),
    )
}
