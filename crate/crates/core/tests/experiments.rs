mod common;

use skysim::experiments::{
    fluctuation_bounds, realisation_screen, run, run_calibration, run_ensemble, run_static, GridConfig, RunConfig,
    RunMode,
};
use skysim::state::{ensemble_average, DensityMatrix4};
use skysim::store::{self, load_results, write_results, Manifest, MANIFEST};
use skysim::witness::{concurrence, discord, fidelity, purity};
use skysim::Density;

fn small(mode: RunMode) -> RunConfig {
    RunConfig {
        mode,
        states: vec!["l0_1".into()],
        omegas: vec![0.0, 1.0, 2.0],
        realisations: 3,
        grid: GridConfig { n: 128, extent: 0.012 },
        topology_grid: GridConfig { n: 128, extent: 0.012 },
        coverage_per_side: 4,
        ..RunConfig::default()
    }
}

fn manifest(dir: &std::path::Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST)).unwrap()).unwrap()
}

#[test]
fn single_member_ensemble_is_the_static_result() {
    let s = run_static(&RunConfig { realisations: 1, ..small(RunMode::Static) }).unwrap();
    let e = run_ensemble(&RunConfig { realisations: 1, ..small(RunMode::Ensemble) }).unwrap();
    for (cs, ce) in s.cells.iter().zip(&e.cells) {
        let r = &cs.realisations[0];
        let ens = ce.ensemble.as_ref().unwrap();
        assert_eq!(ce.realisations[0].reconstruction, r.reconstruction);
        assert!(ens.rho.trace_distance(&r.reconstruction.rho) < 1e-15);
        assert!((ens.witness.purity - r.witness.purity).abs() < 1e-12);
        assert!((ens.witness.discord - r.witness.discord).abs() < 1e-9);
        let (nt, nr) = (ens.topology.as_ref().unwrap(), r.topology.as_ref().unwrap());
        assert!((nt.skyrmion_number - nr.skyrmion_number).abs() < 1e-12);
        assert!(ens.bounds.is_none());
        assert!(cs.stats.purity.as_ref().unwrap().std.is_none());
    }
}

#[test]
fn zero_strength_is_the_ideal_state() {
    let r = run_static(&small(RunMode::Static)).unwrap();
    let cell = r.cell("l0_1", 0).unwrap();
    assert!(cell.is_complete());
    for real in &cell.realisations {
        assert!(real.screen_hash.is_none());
        assert!(real.witness.fidelity_to_reference.unwrap() > 0.999);
        assert!((real.topology.as_ref().unwrap().skyrmion_number - 1.0).abs() < 0.02);
    }
}

#[test]
fn ensemble_purity_decays_with_strength() {
    let cfg = RunConfig { realisations: 6, ..small(RunMode::Ensemble) };
    let r = run(&cfg).unwrap();
    let p: Vec<f64> = (0..3).map(|i| r.cell("l0_1", i).unwrap().ensemble.as_ref().unwrap().witness.purity).collect();
    // Past Ω ≈ 1 a small ensemble sits near its floor, so only the drop from
    // the ideal state is checked.
    assert!(p[0] > 0.99 && p[1] < 0.9 && p[2] < 0.9 && p.iter().all(|&x| x >= 0.25), "{p:?}");
    for cell in &r.cells {
        let ens = cell.ensemble.as_ref().unwrap();
        let rhos: Vec<Density> = cell.realisations.iter().map(|x| x.reconstruction.rho).collect();
        assert!(ens.rho.trace_distance(&ensemble_average(&rhos).unwrap()) < 1e-15);
        let b = ens.bounds.as_ref().unwrap();
        assert!(b.discord.lo >= 0.0 && b.discord.lo <= b.discord.hi);
        assert!(b.purity.lo <= b.purity.hi);
    }
}

#[test]
fn screens_are_shared_between_states() {
    let two = RunConfig { states: vec!["l0_1".into(), "l0_2".into()], ..small(RunMode::Static) };
    let r2 = run_static(&two).unwrap();
    let r1 = run_static(&small(RunMode::Static)).unwrap();
    for i in 1..3 {
        let (a, b) = (r2.cell("l0_1", i).unwrap(), r2.cell("l0_2", i).unwrap());
        for (x, y) in a.realisations.iter().zip(&b.realisations) {
            assert_eq!(x.screen_hash, y.screen_hash);
            assert!(x.screen_hash.is_some());
        }
        let alone = r1.cell("l0_1", i).unwrap();
        assert_eq!(alone.realisations[0].reconstruction, a.realisations[0].reconstruction);
    }
    let s = realisation_screen(&two, 1, 0).unwrap().unwrap();
    assert_eq!(Some(s.hash()), r2.cell("l0_2", 1).unwrap().realisations[0].screen_hash);
}

#[test]
fn repeated_runs_write_identical_trees() {
    let cfg = small(RunMode::Ensemble);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let da = write_results(a.path(), &run(&cfg).unwrap()).unwrap();
    let db = write_results(b.path(), &run(&cfg).unwrap()).unwrap();
    assert_eq!(da.file_name(), db.file_name());
    let (ma, mb) = (manifest(&da), manifest(&db));
    assert_eq!(ma, mb);
    assert_eq!(ma.config_hash.as_deref(), Some(cfg.hash().as_str()));
    assert!(ma.artifacts.iter().any(|x| x.path == "summary.csv"));
    assert!(ma.artifacts.iter().any(|x| x.path == "l0_1/1/ensemble.json"));
    assert!(ma.artifacts.iter().any(|x| x.path.starts_with("coverage/")));
    let other = RunConfig { seed: 2, ..cfg };
    let dc = write_results(a.path(), &run(&other).unwrap()).unwrap();
    assert_ne!(manifest(&dc).artifacts, ma.artifacts);
}

#[test]
fn stored_tree_reloads() {
    let r = run(&small(RunMode::Ensemble)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_results(tmp.path(), &r).unwrap();
    let loaded = load_results(&dir).unwrap();
    assert!(loaded.missing.is_empty());
    assert_eq!(loaded.result.config, r.config);
    assert_eq!(loaded.result.config_hash, r.config_hash);
    let stored = std::fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(store::summary_table(&loaded.result.cells).to_csv(), stored);
    let report = store::report(&loaded);
    let names: Vec<&str> = report.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["summary", "n_vs_omega", "purity_vs_omega", "discord_vs_omega", "qc_vs_omega"]);
}

#[test]
fn missing_records_become_gaps() {
    let cfg = RunConfig { realisations: 2, ..small(RunMode::Ensemble) };
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_results(tmp.path(), &run(&cfg).unwrap()).unwrap();
    std::fs::remove_file(dir.join("l0_1/2/realisation-1.json")).unwrap();
    std::fs::remove_file(dir.join("l0_1/2/ensemble.json")).unwrap();
    let loaded = load_results(&dir).unwrap();
    assert_eq!(loaded.missing, ["l0_1/2/realisation-1.json", "l0_1/2/ensemble.json"]);
    let report = store::report(&loaded);
    let sky = &report.tables[1];
    let row = sky.rows.iter().find(|r| r[1] == "2").unwrap();
    // One realisation left: count 1, empty spread, no ensemble value.
    assert_eq!(row[3], "1");
    assert_eq!(row[5], "");
    assert_eq!(row[6], store::GAP);
    assert!(load_results(&tmp.path().join("absent")).is_err());
    assert!(load_results(tmp.path()).is_err());
}

#[test]
fn calibration_spreads_with_strength() {
    let cfg = RunConfig {
        mode: RunMode::Calibration,
        omegas: vec![0.0, 0.5, 1.0, 2.0],
        realisations: 6,
        ..RunConfig::default()
    };
    let r = run_calibration(&cfg).unwrap();
    let zero = &r.calibration[0];
    assert!(zero.screen_hashes.is_empty());
    assert!(zero.p0.mean > 0.99 && zero.p0.std.unwrap() < 1e-12);
    let w = cfg.calibration_window as usize;
    for (l, p) in zero.spectrum_mean.iter().enumerate() {
        if l != w {
            assert!(*p < 1e-3, "ell {} carries {p}", l as i64 - w as i64);
        }
    }
    assert!((zero.analytic - 1.0).abs() < 1e-12);
    let spread: Vec<f64> = r.calibration.iter().map(|c| c.ell_variance.mean).collect();
    assert!(spread.windows(2).all(|w| w[0] < w[1]), "{spread:?}");
    assert!(r.calibration[1..].iter().all(|c| c.screen_hashes.len() == 6));
    let tmp = tempfile::tempdir().unwrap();
    let dir = write_results(tmp.path(), &r).unwrap();
    assert!(dir.join("calibration.csv").is_file() && dir.join("spectra.csv").is_file());
    let loaded = load_results(&dir).unwrap();
    assert_eq!(loaded.result.calibration, r.calibration);
}

/// Members scattered about a full-rank state by small convex admixtures.
fn noisy_ensemble(seed: u64) -> (Density, Vec<Density>) {
    let mut rng = common::rng(seed);
    let centre = common::random_density(&mut rng, 4);
    let members = (0..10)
        .map(|_| {
            let noise = common::random_density(&mut rng, 4);
            let m = centre.matrix().scale_real(0.97) + noise.matrix().scale_real(0.03);
            DensityMatrix4::new(m).unwrap()
        })
        .collect();
    (centre, members)
}

#[test]
fn fluctuation_bounds_bracket_full_rank_ensembles() {
    // Fidelity to the centre is left out: its envelope values need not
    // bracket the ensemble value even for full-rank members.
    let mut bracketed = [0usize; 2];
    for seed in 0..50 {
        let (centre, members) = noisy_ensemble(seed);
        let f = fluctuation_bounds(&members, |r| Ok(fidelity(r, &centre))).unwrap();
        assert!(f.lo <= f.hi && f.hi <= 1.0);
        let avg = ensemble_average(&members).unwrap();
        let quantities: [&dyn Fn(&Density) -> f64; 2] = [&|r| purity(r), &|r| concurrence(r)];
        for (q, count) in quantities.iter().zip(bracketed.iter_mut()) {
            let b = fluctuation_bounds(&members, |r| Ok(q(r))).unwrap();
            let v = q(&avg);
            *count += usize::from(b.lo - 1e-12 <= v && v <= b.hi + 1e-12);
        }
        let d = fluctuation_bounds(&members, |r| Ok(discord(r).value)).unwrap();
        assert!(d.lo >= 0.0 && d.lo <= d.hi);
    }
    assert_eq!(bracketed, [50, 50]);
    assert!(fluctuation_bounds(&[common::bell()], |r| Ok(purity(r))).is_err());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = small(RunMode::Ensemble);
    let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    assert_ne!(RunConfig { seed: 7, ..cfg.clone() }.hash(), cfg.hash());
    assert!(RunConfig::from_toml_str("seed = 1\nbogus = 2\n").is_err());
    assert!(RunConfig::from_toml_str("omegas = [-1.0]\n").is_err());
    assert!(RunConfig::from_toml_str("states = [\"nope\"]\n").is_err());
}

#[test]
fn readme_config_sample_parses() {
    let readme = include_str!("../../../README.md");
    let start = readme.find("```toml\n").unwrap() + 8;
    let len = readme[start..].find("```").unwrap();
    let cfg = RunConfig::from_toml_str(&readme[start..start + len]).unwrap();
    assert_eq!(cfg.mode, RunMode::Ensemble);
    assert_eq!(cfg.counts, Some(skysim::channel::CountModel::default()));
}
