use plateau_core::complex::{whitney_decompose, Complex};
use plateau_core::driver::graph::{clean_graph, extract_graph};
use plateau_core::driver::{minimize, ProblemConfig};
use plateau_core::dyadic::{euclid, DyadicScalar, OpenBox};
use plateau_core::ff::{ff_project, prune_low_mass_dcells, skeleton_distance, FfParams};
use plateau_core::measure::generators::{polyline, segment};
use plateau_core::measure::{hausdorff_estimate, SampledSet};
use plateau_core::rng::stream;
use plateau_core::Error;

fn unit_grid(level: u32) -> Complex {
    Complex::grid(&[DyadicScalar::ZERO; 2], &[DyadicScalar::ONE; 2], level, false).unwrap()
}

#[test]
fn whitney_json_round_trip() {
    let bx = OpenBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
    let k = whitney_decompose(&bx, 4).unwrap();
    let back = Complex::from_json(&k.to_json().unwrap()).unwrap();
    assert_eq!(back.len(), k.len());
    assert!(k.cells().iter().all(|c| back.contains(c)));
    assert!(back.validate().valid);
}

#[test]
fn project_prune_extract() {
    let k = unit_grid(3);
    let wiggle: Vec<Vec<f64>> = (0..=40)
        .map(|i| {
            let t = i as f64 / 40.0;
            vec![0.05 + 0.9 * t, 0.5 + 0.05 * (12.0 * t).sin()]
        })
        .collect();
    let e = polyline(&wiggle, 0.002).unwrap();
    let mut rng = stream(9, "pipeline", 0);
    let r = ff_project(&k, 1, &e, &FfParams::default(), &mut rng).unwrap();
    assert_eq!(r.preserved, e.len());
    assert!(r.mapped.points.iter().all(|p| skeleton_distance(&k, 1, p) <= 1e-9));
    let pruned = prune_low_mass_dcells(&k, 1, &r.mapped, 0.25, &mut rng).unwrap();
    assert!(pruned.points.iter().all(|p| skeleton_distance(&k, 1, p) <= 1e-9));
    let anchors = vec![wiggle[0].clone(), wiggle[40].clone()];
    let g = clean_graph(extract_graph(&k, &pruned, &anchors));
    assert_eq!(g.components().len(), 1);
    let ends: Vec<usize> = (0..g.nodes.len()).filter(|&i| g.fixed[i]).collect();
    assert_eq!(ends.len(), 2);
    // the cleaned skeleton is no longer than the projected set
    let projected = hausdorff_estimate(&pruned, 0.01).unwrap();
    assert!(g.length() <= projected * 1.1, "{} vs {projected}", g.length());
}

#[test]
fn minimize_from_csv_file() {
    let dir = std::env::temp_dir().join(format!("plateau-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bent = polyline(&[vec![0.0, 0.0], vec![0.4, 0.3], vec![1.0, 0.0]], 0.002).unwrap();
    let with_ends = bent.union(&SampledSet::uniform(1, vec![vec![0.0, 0.0], vec![1.0, 0.0]], 0.002).unwrap()).unwrap();
    with_ends.write_csv(std::fs::File::create(dir.join("init.csv")).unwrap()).unwrap();
    let cfg = r#"{
        "schema": 1, "n": 2, "d": 1,
        "domain": {"lo": [-0.5, -0.5], "hi": [1.5, 1.5]},
        "boundary": {"anchors": [[0.0, 0.0], [1.0, 0.0]]},
        "initial_set": {"file": "init.csv"},
        "schedule": {"mode": "uniform", "iterations": 3, "start_level": 3}
    }"#;
    std::fs::write(dir.join("cfg.json"), cfg).unwrap();
    let c = ProblemConfig::load(&dir.join("cfg.json")).unwrap();
    let out = minimize(&c).unwrap();
    assert!((out.summary.final_energy - 1.0).abs() < 0.01, "{:?}", out.summary);
    assert!(out.summary.anchors_conserved);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn minimize_rejects_far_anchor() {
    let cfg = r#"{
        "schema": 1, "n": 2, "d": 1,
        "domain": {"lo": [-0.5, -0.5], "hi": [1.5, 1.5]},
        "boundary": {"anchors": [[0.0, 0.0], [1.0, 1.0]]},
        "initial_set": {"polyline": {"points": [[0.0, 0.0], [1.0, 0.0]]}},
        "schedule": {"mode": "uniform", "iterations": 1}
    }"#;
    let c = ProblemConfig::from_json(cfg).unwrap();
    assert!(matches!(minimize(&c), Err(Error::Precondition(_))));
}

#[test]
fn segment_projection_is_idempotent_on_skeleton() {
    let k = unit_grid(2);
    let s = segment(&[0.0, 0.25], &[1.0, 0.25], 0.005).unwrap();
    let r = ff_project(&k, 1, &s, &FfParams::default(), &mut stream(1, "idem", 0)).unwrap();
    for (a, b) in r.mapped.points.iter().zip(&s.points) {
        assert!(euclid(a, b) == 0.0);
    }
}
