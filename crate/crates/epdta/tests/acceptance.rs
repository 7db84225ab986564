//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values. Run with `cargo test --test acceptance -- --nocapture`
//! to see them.

use std::sync::OnceLock;
use std::time::Instant;

use epdta::automaton::{self, Epdta, ValidationError};
use epdta::semantics::{
    enumerate, mc_reach_probability, reach_probability, DEFAULT_STATE_CAP,
};
use epdta::sim::{self, conservation_holds, RunOptions, SimConfig, SimStats};
use epdta::solemodel::{
    self, build_sole_epdta, monthly_prob_from_annual_index, vbgf_length, InitialIndividual,
    SpeciesConfig,
};

fn model_path(name: &str) -> String {
    format!("{}/models/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn load_model(name: &str) -> Epdta {
    automaton::load_file(model_path(name)).unwrap()
}

fn sole_config() -> SpeciesConfig {
    solemodel::load_species_config(model_path("sole.cfg")).unwrap()
}

fn sole2_automaton(max_time: u64) -> Epdta {
    let species = solemodel::load_species_config(model_path("sole2.cfg")).unwrap();
    build_sole_epdta(
        &species,
        &species.fishing_for(None),
        max_time,
        &InitialIndividual {
            age_months: 13,
            last_breed_months: 12,
        },
    )
    .unwrap()
}

/// Every shipped small model with a reachability query for the oracle
/// cross-check.
fn shipped_models() -> Vec<(String, Epdta, &'static str, u64)> {
    vec![
        ("fig1".into(), load_model("fig1.epdta"), "l2", 3),
        ("chain03".into(), load_model("chain03.epdta"), "dead", 3),
        ("single".into(), load_model("single.epdta"), "only", 3),
        ("urgent2".into(), load_model("urgent2.epdta"), "s2", 4),
        ("table1".into(), load_model("table1.epdta"), "hit", 5),
        ("sole2".into(), sole2_automaton(6), "dead", 6),
    ]
}

// ---------------------------------------------------------------------------
// Shared scenario runs (criteria 5, 6, 10)
// ---------------------------------------------------------------------------

const SCENARIO_SEEDS: u64 = 20;
const SCENARIO_MONTHS: u64 = 72;

struct Scenarios {
    /// Per fishing index: one statistics series per seed.
    by_f: Vec<(f64, Vec<Vec<SimStats>>)>,
    elapsed_secs: f64,
}

fn scenarios() -> &'static Scenarios {
    static DATA: OnceLock<Scenarios> = OnceLock::new();
    DATA.get_or_init(|| {
        let species = sole_config();
        let started = Instant::now();
        let by_f = [0.0, 0.2, 1.2]
            .into_iter()
            .map(|f| {
                let runs = (0..SCENARIO_SEEDS)
                    .map(|seed| {
                        let cfg = SimConfig {
                            species: species.clone(),
                            fishing_index: Some(f),
                            months: SCENARIO_MONTHS,
                            seed,
                        };
                        sim::run(&cfg).unwrap()
                    })
                    .collect();
                (f, runs)
            })
            .collect();
        Scenarios {
            by_f,
            elapsed_secs: started.elapsed().as_secs_f64(),
        }
    })
}

fn mean_final_biomass(runs: &[Vec<SimStats>]) -> f64 {
    runs.iter()
        .map(|s| s.last().unwrap().biomass_kg)
        .sum::<f64>()
        / runs.len() as f64
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_monte_carlo_matches_exact_oracle() {
    let started = Instant::now();
    let runs = 100_000u64;
    for (name, a, target, horizon) in shipped_models() {
        let exact = reach_probability(&a, target, horizon, DEFAULT_STATE_CAP).unwrap();
        let est = mc_reach_probability(&a, target, horizon, runs, 2024).unwrap();
        assert!(
            est.within_3_sigma(exact),
            "{name}: exact {exact}, monte carlo {} over {runs} runs",
            est.p()
        );
        println!(
            "ACCEPTANCE 1 [{name}] exact {exact:.6} vs mc {:.6} (3 sigma = {:.6})",
            est.p(),
            3.0 * est.sigma(exact)
        );
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "monte carlo took {elapsed:.1}s (budget 60s)");
    println!("ACCEPTANCE 1 PASS: mc within 3 sigma on 6 models in {elapsed:.1}s");
}

#[test]
fn acceptance_02_closed_form_chain() {
    let a = load_model("chain03.epdta");
    let p = reach_probability(&a, "dead", 2, DEFAULT_STATE_CAP).unwrap();
    assert!(
        (p - 0.51).abs() < 1e-12,
        "expected 0.51 within 1e-12, got {p}"
    );
    println!("ACCEPTANCE 2 PASS: reach(dead, 2) = {p} (|err| < 1e-12)");
}

#[test]
fn acceptance_03_growth_lands_in_paper_classes() {
    let species = sole_config();
    for (age, expected_class) in [(12u64, 1usize), (24, 2), (36, 3), (48, 4)] {
        let l = vbgf_length(age, 0, &species.growth);
        let class = species.classes.class_of(l).unwrap();
        assert_eq!(
            class, expected_class,
            "age {age} months gives {l:.2} cm in class {class}"
        );
        println!("ACCEPTANCE 3 [{age} months] {l:.2} cm -> class {class}");
    }
    println!("ACCEPTANCE 3 PASS: ages 12/24/36/48 land in classes 1/2/3/4");
}

#[test]
fn acceptance_04_monthly_probability_from_annual_index() {
    let p = monthly_prob_from_annual_index(0.2);
    assert!(
        (p - 0.01653).abs() <= 0.0001,
        "expected 0.01653 +- 0.0001, got {p}"
    );
    println!("ACCEPTANCE 4 PASS: 1 - exp(-0.2/12) = {p:.6} (table reads 1.65%)");
}

#[test]
fn acceptance_05a_no_fishing_final_biomass() {
    let data = scenarios();
    assert!(
        data.elapsed_secs < 300.0,
        "scenario runs took {:.1}s (budget 300s)",
        data.elapsed_secs
    );
    let runs = &data.by_f.iter().find(|(f, _)| *f == 0.0).unwrap().1;
    let mean = mean_final_biomass(runs);
    assert!(
        (18.0..=38.0).contains(&mean),
        "F=0 mean final biomass {mean:.2} kg outside [18, 38]"
    );
    println!(
        "ACCEPTANCE 5a PASS: F=0 mean final biomass {mean:.2} kg in [18, 38] \
         ({} seeds, {:.1}s total scenario time)",
        SCENARIO_SEEDS, data.elapsed_secs
    );
}

#[test]
fn acceptance_05b_light_fishing_final_biomass() {
    let data = scenarios();
    let runs = &data.by_f.iter().find(|(f, _)| *f == 0.2).unwrap().1;
    let mean = mean_final_biomass(runs);
    assert!(
        (8.0..=19.0).contains(&mean),
        "F=0.2 mean final biomass {mean:.2} kg outside [8, 19]"
    );
    println!("ACCEPTANCE 5b PASS: F=0.2 mean final biomass {mean:.2} kg in [8, 19]");
}

#[test]
fn acceptance_05c_overfishing_population_gone() {
    let data = scenarios();
    let runs = &data.by_f.iter().find(|(f, _)| *f == 1.2).unwrap().1;
    // mean count across classes 1..4+ at month 30, averaged over seeds
    let per_seed: Vec<f64> = runs
        .iter()
        .map(|s| {
            let row = &s[30];
            row.population[1..].iter().sum::<u64>() as f64 / (row.population.len() - 1) as f64
        })
        .collect();
    let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
    assert!(
        mean <= 3.0,
        "F=1.2 mean class 1..4+ count at month 30 is {mean:.2}, above 3"
    );
    println!(
        "ACCEPTANCE 5c PASS: F=1.2 mean count of classes 1-4+ at month 30 = {mean:.2} <= 3"
    );
}

#[test]
fn acceptance_06_biomass_ordering_across_scenarios() {
    let data = scenarios();
    let means: Vec<(f64, f64)> = data
        .by_f
        .iter()
        .map(|(f, runs)| (*f, mean_final_biomass(runs)))
        .collect();
    let b0 = means.iter().find(|(f, _)| *f == 0.0).unwrap().1;
    let b02 = means.iter().find(|(f, _)| *f == 0.2).unwrap().1;
    let b12 = means.iter().find(|(f, _)| *f == 1.2).unwrap().1;
    assert!(
        b0 > b02 && b02 > b12,
        "expected strict ordering, got {b0:.2} / {b02:.2} / {b12:.2}"
    );
    println!(
        "ACCEPTANCE 6 PASS: mean final biomass {b0:.2} (F=0) > {b02:.2} (F=0.2) > {b12:.2} (F=1.2)"
    );
}

#[test]
fn acceptance_07_determinism_and_order_independence() {
    // byte-identical CSV from two separate process invocations
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("a.csv");
    let out2 = dir.path().join("b.csv");
    for out in [&out1, &out2] {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_epdta"))
            .args([
                "simulate",
                "--species",
                &model_path("sole.cfg"),
                "--f",
                "0.2",
                "--months",
                "24",
                "--seed",
                "7",
                "--out",
            ])
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    let csv1 = std::fs::read(&out1).unwrap();
    let csv2 = std::fs::read(&out2).unwrap();
    assert_eq!(csv1, csv2, "two invocations differ");

    // shuffled agent processing order leaves the series unchanged
    let cfg = SimConfig {
        species: sole_config(),
        fishing_index: Some(0.2),
        months: 24,
        seed: 7,
    };
    let plain = sim::run(&cfg).unwrap();
    let shuffled = sim::run_with_options(
        &cfg,
        RunOptions {
            sequential: false,
            shuffle_agents: Some(0xFEED),
        },
    )
    .unwrap();
    let sequential = sim::run_sequential(&cfg).unwrap();
    assert_eq!(plain, shuffled, "shuffled order changed the series");
    assert_eq!(plain, sequential, "sequential run changed the series");
    println!("ACCEPTANCE 7 PASS: byte-identical CSV; shuffled and sequential runs identical");
}

#[test]
fn acceptance_08_prism_round_trip_isomorphic() {
    for (name, a, _, _) in shipped_models() {
        let states = enumerate(&a, a.max_time, DEFAULT_STATE_CAP).unwrap().len();
        epdta::prism::round_trip_isomorphic(&a, DEFAULT_STATE_CAP, 1e-9)
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        println!("ACCEPTANCE 8 [{name}] {states} states isomorphic (tol 1e-9)");
    }
    println!("ACCEPTANCE 8 PASS: import_mini(export(a)) isomorphic to enumerate(a) on all models");
}

#[test]
fn acceptance_09_validation_rejections() {
    // past-closed: a lower bound invariant must be rejected
    let lower_bound = "\
clocks x
location l0 invariant x >= 3
init l0
max_time 2
";
    let err = automaton::load(lower_bound).unwrap_err();
    let text = err.to_string();
    assert!(
        text.contains("past-closed"),
        "expected past-closed rejection, got: {text}"
    );

    // distribution sum off by more than 1e-9
    let bad_sum = "\
clocks x
location l0
location l1
init l0
max_time 2
edge l0 guard x >= 1
  0.7: a, {}, reset {}, -> l1
  0.2: b, {}, reset {}, -> l1
";
    let err = automaton::load(bad_sum).unwrap_err();
    let text = err.to_string();
    assert!(
        text.contains("probabilities sum to 0.8999999"),
        "expected distribution sum rejection, got: {text}"
    );

    // duplicate assignment of one variable in a single assignment list
    let dup_assign = "\
clocks x
ints v in [0, 5] = 0
location l0
init l0
max_time 2
edge l0 guard x >= 1
  1: a, {v <- 1, v <- 2}, reset {}, -> l0
";
    let err = automaton::load(dup_assign).unwrap_err();
    let text = err.to_string();
    assert!(
        text.contains("assigned more than once"),
        "expected duplicate-assignment rejection, got: {text}"
    );
    println!(
        "ACCEPTANCE 9 PASS: rejects lower-bound invariants, bad distribution sums, \
         duplicate assignments"
    );
}

#[test]
fn acceptance_10_conservation_every_month_every_run() {
    let data = scenarios();
    let mut months = 0usize;
    for (f, runs) in &data.by_f {
        for (seed, stats) in runs.iter().enumerate() {
            assert!(
                conservation_holds(stats),
                "conservation violated: F={f}, seed {seed}"
            );
            months += stats.len() - 1;
        }
    }
    println!(
        "ACCEPTANCE 10 PASS: living(m) = living(m-1) - deaths - fished + newborns \
         across {months} simulated months"
    );
}

#[test]
fn validation_accepts_eta_built_sole_models() {
    // the builder's output always passes validation, full and reduced
    let species = sole_config();
    let a = build_sole_epdta(
        &species,
        &species.fishing_for(Some(1.2)),
        72,
        &InitialIndividual {
            age_months: 0,
            last_breed_months: 0,
        },
    )
    .unwrap();
    assert!(a.validate().is_empty());
    assert!(sole2_automaton(6).validate().is_empty());
}

#[test]
fn save_load_round_trip_on_shipped_models() {
    for (name, a, _, _) in shipped_models() {
        let text = automaton::save(&a);
        let again = automaton::load(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(a, again, "{name}: save/load changed the automaton");
    }
    // a validation report never appears for a loadable model
    let report: Vec<ValidationError> = load_model("fig1.epdta").validate();
    assert!(report.is_empty());
}
