//! Monte Carlo estimators against exact and deterministic references.

use ssep_core::diagnostics::{
    block_average_deviation, boundary_current_counter, boundary_current_snapshot, bulk_current_counting, collect_ensemble,
    crossing_continuity_defect, theta_mc, theta_profile, v_statistic_with_reference, Estimate,
};
use ssep_core::evolution::evolve_discrete;
use ssep_core::kmc::RecordSpec;
use ssep_core::macroscopic::stationary_profile;
use ssep_core::oracle::{evolve_law, marginal_expectations, v_function_exact, GeneratorMatrix, LawVector};
use ssep_core::{DensityProfile, InitialProfile, ModelParams};

fn within(e: &Estimate, target: f64, z: f64) -> bool {
    (e.value - target).abs() <= z * e.stderr.max(1e-12)
}

#[test]
fn small_lattice_means_and_correlations_match_the_oracle() {
    let p = ModelParams::new(2, 2, 1.5).unwrap();
    let rho0 = DensityProfile::from_fn(&p, |r| 0.5 + 0.4 * r).unwrap();
    let t = 0.15;
    let spec = RecordSpec { times: vec![t], tracked_bonds: vec![] };
    let ens = collect_ensemble(&p, &rho0, &spec, 20_000, 11).unwrap();
    let law = evolve_law(&GeneratorMatrix::build(&p).unwrap(), &LawVector::product(&p, &rho0), t);
    let exact = marginal_expectations(&law);
    for (i, (&m, &e)) in ens.site_means(0).iter().zip(exact.values()).enumerate() {
        let se = (e * (1.0 - e) / ens.replicas() as f64).sqrt();
        assert!((m - e).abs() <= 4.0 * se, "site {}: {m} vs {e}", p.site(i));
    }
    for sites in [[-1i64, 0], [0, 1], [-2, 2]] {
        let v = v_statistic_with_reference(&ens, exact.values(), &sites, t).unwrap();
        let reference = v_function_exact(&law, &exact, &sites).unwrap();
        assert!((v.estimate - reference).abs() <= 4.0 * v.stderr, "{sites:?}: {} ± {} vs {reference}", v.estimate, v.stderr);
    }
}

#[test]
fn stationary_current_is_uniform_and_matches_the_slope() {
    // after relaxation all current estimators agree, and with the macroscopic -b/2
    let (n, j, k) = (20, 1.0, 1);
    let p = ModelParams::new(n, k, j).unwrap();
    let (b, _) = stationary_profile(j, k as u32).unwrap();
    let rho0 = DensityProfile::from_fn(&p, |r| 0.5 + b * r).unwrap();
    let (t, w) = (2.0, 2.0);
    let spec = RecordSpec { times: vec![t, t + w], tracked_bonds: vec![-10, 0, 10] };
    let ens = collect_ensemble(&p, &rho0, &spec, 2_000, 5).unwrap();
    assert_eq!(crossing_continuity_defect(&ens), 0);
    let mut currents = Vec::new();
    for x in [-10, 0, 10] {
        currents.push(bulk_current_counting(&ens, x, t, w).unwrap());
    }
    let (plus, minus) = boundary_current_counter(&ens, t, w).unwrap();
    currents.push(plus);
    currents.push(minus);
    let (snap_plus, _) = boundary_current_snapshot(&ens, t).unwrap();
    currents.push(snap_plus);
    for c in &currents {
        // finite-N stationary current differs from -b/2 by O(ε)
        assert!((c.value + 0.5 * b).abs() <= 4.0 * c.stderr + 0.1 * b, "{c:?} vs {}", -0.5 * b);
    }
}

#[test]
fn theta_estimates_agree_with_discrete_evolution() {
    let p = ModelParams::new(30, 2, 1.0).unwrap();
    let rho0 = DensityProfile::from_fn(&p, |r| InitialProfile::Step { left: 0.8, right: 0.2, at: 0.0 }.eval(r)).unwrap();
    let t = 0.1;
    let ens = collect_ensemble(&p, &rho0, &RecordSpec { times: vec![t], tracked_bonds: vec![] }, 4_000, 3).unwrap();
    let traj = evolve_discrete(&p, &rho0, t, &[t]).unwrap();
    let (mp, mm) = theta_mc(&ens, t).unwrap();
    let (tp, tm) = theta_profile(&traj, t).unwrap();
    assert!(within(&mp, tp, 4.0), "{mp:?} vs {tp}");
    assert!(within(&mm, tm, 4.0), "{mm:?} vs {tm}");
}

#[test]
fn block_deviation_frequency_falls_with_n() {
    let (t, a, delta) = (0.1, 0.6, 0.3);
    let freq: Vec<Estimate> = [25, 100]
        .iter()
        .map(|&n| {
            let p = ModelParams::new(n, 1, 1.0).unwrap();
            let rho0 = DensityProfile::constant(&p, 0.5).unwrap();
            let ens = collect_ensemble(&p, &rho0, &RecordSpec { times: vec![t], tracked_bonds: vec![] }, 400, 9).unwrap();
            let traj = evolve_discrete(&p, &rho0, t, &[t]).unwrap();
            block_average_deviation(&ens, &traj, t, a, delta).unwrap()
        })
        .collect();
    assert!(freq[1].value + 2.0 * freq[1].stderr < freq[0].value, "{freq:?}");
}
