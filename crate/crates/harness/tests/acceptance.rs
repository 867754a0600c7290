//! Runs every checked-in acceptance config and prints one PASS/FAIL line per
//! criterion. Thresholds are pinned here as well as in the configs, so a
//! config that loosens one fails its criterion.

use std::path::PathBuf;
use std::process::ExitCode;
use std::rc::Rc;
use std::time::Instant;

use crf_harness::{run_experiment, ExperimentConfig, Lab, Outcome};

struct Runner {
    lab: Lab,
    dir: PathBuf,
    done: Vec<(String, Rc<Outcome>)>,
}

impl Runner {
    fn outcome(&mut self, name: &str) -> Result<Rc<Outcome>, String> {
        if let Some((_, o)) = self.done.iter().find(|(n, _)| n == name) {
            return Ok(Rc::clone(o));
        }
        let path = self.dir.join(format!("{name}.toml"));
        let cfg = ExperimentConfig::load(&path).map_err(|e| format!("{name}: {e}"))?;
        let o = Rc::new(run_experiment(&self.lab, &cfg).map_err(|e| format!("{name}: {e}"))?);
        self.done.push((name.to_string(), Rc::clone(&o)));
        Ok(o)
    }
}

/// One judged quantity: which config, which invariant, and the threshold
/// the invariant must have been judged against.
struct Check {
    config: &'static str,
    invariant: &'static str,
    threshold: f64,
}

const fn check(config: &'static str, invariant: &'static str, threshold: f64) -> Check {
    Check {
        config,
        invariant,
        threshold,
    }
}

struct Criterion {
    number: usize,
    title: &'static str,
    checks: &'static [Check],
}

const FLOW_16: &str = "c1_mass_conservation";

const CRITERIA: &[Criterion] = &[
    Criterion {
        number: 1,
        title: "mass conservation",
        checks: &[
            check(FLOW_16, "mass_drift", 1e-5),
            check("c1_mass_refinement", "doubling:mass_drift:8->16", 8.0),
        ],
    },
    Criterion {
        number: 2,
        title: "E rate and monotonicity",
        checks: &[
            check("c2_entropy_e", "de_rel_error", 0.05),
            check("c2_entropy_e", "de_analytic_min", -1e-8),
            check("c2_entropy_e_refinement", "order:de_rel_error", 2.0),
        ],
    },
    Criterion {
        number: 3,
        title: "W rate and monotonicity",
        checks: &[
            check("c3_entropy_w", "dw_rel_error", 0.05),
            check("c3_entropy_w", "w_term_min", -1e-8),
            check("c3_entropy_w", "w_decrease", 0.0),
        ],
    },
    Criterion {
        number: 4,
        title: "pressure",
        checks: &[
            check("c4_pressure", "pressure_residual", 1e-10),
            check("c4_pressure", "min_p", -1e-8),
            check("c4_pressure", "dense_pressure", 1e-8),
            check(FLOW_16, "pressure_residual", 1e-10),
            check(FLOW_16, "min_p", -1e-8),
        ],
    },
    Criterion {
        number: 5,
        title: "constraint preservation",
        checks: &[
            check("c5_constraint", "normalization", 1e-6),
            check("c5_constraint", "constraint_drift", 1e-3),
            check("c5_constraint_refinement", "order:constraint_drift", 3.5),
        ],
    },
    Criterion {
        number: 6,
        title: "Einstein rigidity",
        checks: &[
            check("c6_space_form_rigidity", "stationary", 1e-10),
            check("c6_space_form_rigidity", "einstein_pressure_zero", 1.0),
            check("c6_space_form_perturbed", "dw_fd_positive", 0.0),
        ],
    },
    Criterion {
        number: 7,
        title: "pointwise identities",
        checks: &[
            check("c7_identities", "order:box_v", 2.0),
            check("c7_identities", "order:bochner", 2.0),
            check("c7_identities", "order:laplacian", 2.0),
        ],
    },
    Criterion {
        number: 8,
        title: "nu",
        checks: &[
            check("c8_nu", "nu_samples", 5.0),
            check("c8_nu", "nu_decrease", 1e-4),
            check("c8_nu", "nu_constraint", 1e-8),
            check("c8_nu", "nu_gradient", 1e-4),
        ],
    },
    Criterion {
        number: 9,
        title: "geometry kernels",
        checks: &[
            check("c9_geometry", "order:ricci", 3.5),
            check("c9_geometry", "order:scalar_curvature", 3.5),
            check("c9_geometry", "divergence_theorem", 1e-10),
            check("c9_geometry", "integration_by_parts", 1e-10),
        ],
    },
];

fn judge(runner: &mut Runner, c: &Check) -> (bool, String) {
    let outcome = match runner.outcome(c.config) {
        Ok(o) => o,
        Err(e) => return (false, format!("error {e}")),
    };
    match outcome.invariant(c.invariant) {
        None => (false, format!("{}: no invariant `{}`", c.config, c.invariant)),
        Some(inv) if inv.threshold != c.threshold => (
            false,
            format!("{} judged against {:e}, expected {:e}", inv.name, inv.threshold, c.threshold),
        ),
        Some(inv) => (
            inv.passed,
            format!("{} = {:.3e} ({} {:e})", inv.name, inv.value, inv.relation, inv.threshold),
        ),
    }
}

fn main() -> ExitCode {
    let mut runner = Runner {
        lab: Lab::new(true),
        dir: PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs"),
        done: Vec::new(),
    };
    let mut failed = 0;
    for crit in CRITERIA {
        let start = Instant::now();
        let mut ok = true;
        let mut details = Vec::new();
        for c in crit.checks {
            let (passed, detail) = judge(&mut runner, c);
            ok &= passed;
            details.push(if passed { detail } else { format!("[failed] {detail}") });
        }
        if !ok {
            failed += 1;
        }
        println!(
            "{} criterion {}: {}; {} [{:.1} s]",
            if ok { "PASS" } else { "FAIL" },
            crit.number,
            crit.title,
            details.join("; "),
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", CRITERIA.len() - failed, CRITERIA.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
