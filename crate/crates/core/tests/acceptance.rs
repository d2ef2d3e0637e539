//! Acceptance suite: one test per numbered criterion, each printing a single
//! pass/fail line with the measured values (visible under `--nocapture`).
//! Criteria with a stated runtime budget also assert it; run with
//! `--test-threads=1` when timing matters.
//!
//! The two trend criteria share one replica experiment, built once and
//! reused through a `OnceLock`.

use std::sync::OnceLock;
use std::time::Instant;

use fracpme::verify::{self, CheckReport, HydroExperiment};

fn check(index: u32, report: CheckReport, cap_seconds: Option<f64>) {
    println!(
        "criterion {index:02} [{}] {} ({:.1}s): {}",
        if report.pass { "PASS" } else { "FAIL" },
        report.name,
        report.seconds,
        report.detail
    );
    if let Some(cap) = cap_seconds {
        assert!(
            report.seconds < cap,
            "criterion {index:02} runtime {:.1}s exceeds the {cap:.0}s budget",
            report.seconds
        );
    }
    assert!(report.pass, "criterion {index:02} failed: {}", report.detail);
}

/// The shared step-profile experiment: built on first use, taking the
/// measured wall time along so the runtime budget can be asserted.
fn hydro() -> &'static (HydroExperiment, f64) {
    static HYDRO: OnceLock<(HydroExperiment, f64)> = OnceLock::new();
    HYDRO.get_or_init(|| {
        let started = Instant::now();
        let settings = verify::default_hydro_settings().expect("pinned settings are valid");
        let exp = verify::hydro_experiment(&settings).expect("experiment runs");
        (exp, started.elapsed().as_secs_f64())
    })
}

#[test]
fn criterion_01_reversibility() {
    check(1, verify::reversibility(false).unwrap(), Some(10.0));
}

#[test]
fn criterion_02_small_system_law() {
    check(2, verify::small_system_law().unwrap(), Some(120.0));
}

#[test]
fn criterion_03_nn_identity() {
    check(3, verify::nn_identity().unwrap(), None);
}

#[test]
fn criterion_04_operator_convergence() {
    check(4, verify::operator_convergence().unwrap(), Some(60.0));
}

#[test]
fn criterion_05_remainder_slope() {
    let report = verify::remainder_slope().unwrap();
    if !report.pass {
        // Observed behaviour: the remainder decays strictly faster than the
        // stated reference rate for the two smaller jump exponents (measured
        // slopes near -1 and -0.86 against -0.5), while staying under its
        // calibrated envelope at every size; only the largest exponent
        // saturates the rate.  The two-sided slope window is asserted as
        // written, so this criterion records the mismatch rather than
        // papering over it.
        println!(
            "criterion 05 note: remainder decay is faster than the asserted rate; \
             the envelope inequality itself holds at every size"
        );
    }
    check(5, report, None);
}

#[test]
fn criterion_06_envelope() {
    check(6, verify::envelope().unwrap(), None);
}

#[test]
fn criterion_07_dynkin_martingale() {
    check(7, verify::dynkin_martingale().unwrap(), None);
}

#[test]
fn criterion_08_moving_particle_paths() {
    check(8, verify::moving_particle_paths().unwrap(), Some(30.0));
}

#[test]
fn criterion_09_pde_linear_oracle() {
    check(9, verify::pde_linear_oracle().unwrap(), Some(60.0));
}

#[test]
fn criterion_10_weak_residual() {
    check(10, verify::weak_residual_panel().unwrap(), None);
}

#[test]
fn criterion_11_hydro_trend() {
    let (exp, seconds) = hydro();
    assert!(
        *seconds < 1800.0,
        "replica experiment took {seconds:.0}s, over the 30-minute budget"
    );
    check(11, verify::hydro_trend(exp), None);
}

#[test]
fn criterion_12_replacement_trend() {
    let (exp, _) = hydro();
    check(12, verify::replacement_trend(exp), None);
}
