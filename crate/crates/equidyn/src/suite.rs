//! The theory check suites run by `equidyn check`.

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::Result;
use clap::ValueEnum;
use equidyn_core::data::Dataset;
use equidyn_core::experiment::{Architecture, ExperimentKind, Scale};
use equidyn_core::group::seeded_rng;
use equidyn_core::risk::{gaussian_like, Model};
use equidyn_core::theory::{self, RiskFamily, DENSE_HESSIAN_CAP};
use equidyn_core::{
    CheckReport, CheckStatus, FiniteGroup, HaarStrategy, InducedRep, LayerStack, Matrix,
    Representation, Tolerances,
};
use rand::Rng;

use crate::config::Config;
use crate::parallel_map;
use crate::runner::load_data;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    All,
    Grad,
    Hessian,
    Counterexample,
    Decoupling,
    Fa,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

/// Samples kept from a configured dataset for the checks.
pub const CHECK_SAMPLES: usize = 8;
/// Random equivariant points per family in the gradient suite.
pub const GRAD_POINTS: usize = 3;
pub const E_INVARIANCE_STEPS: usize = 100;
pub const E_INVARIANCE_TAU: f64 = 1e-3;
pub const COUNTEREXAMPLE_SIZES: [usize; 3] = [3, 5, 8];
pub const DECOUPLING_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// A network risk to check: a model with batch normalization removed and
/// the data it is evaluated on.
#[derive(Debug, Clone)]
pub struct NetworkCase {
    pub label: String,
    pub kind: ExperimentKind,
    pub model: Model,
    pub data: Arc<Dataset>,
}

impl NetworkCase {
    pub fn toy(kind: ExperimentKind, seed: u64) -> Result<Self> {
        let arch = Architecture::new(kind, Scale::Toy);
        Ok(Self {
            label: format!("{kind} toy"),
            kind,
            model: arch.model(None)?.without_batch_norm(),
            data: Arc::new(arch.synthetic_data(seed)?),
        })
    }

    /// The configured architecture on the first [`CHECK_SAMPLES`] samples of
    /// its data.
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let exp = cfg.experiment()?;
        let data = load_data(cfg, &exp)?.take(CHECK_SAMPLES);
        Ok(Self {
            label: format!("{} {}", exp.arch.kind, cfg.architecture.scale),
            kind: exp.arch.kind,
            model: exp.arch.model(exp.method)?.without_batch_norm(),
            data: Arc::new(data),
        })
    }

    pub fn family(&self, seed: u64) -> RiskFamily {
        RiskFamily::from_model(
            &self.label,
            &self.model,
            self.data.clone(),
            HaarStrategy::Exact,
            seed,
        )
    }

    fn fits_dense(&self) -> bool {
        self.model.ind.num_params() <= DENSE_HESSIAN_CAP
    }
}

/// `S_3` acting on `ℝ³ → ℝ³ → ℝ`, the layer space of the quadratic checks.
pub fn quadratic_ind() -> InducedRep {
    InducedRep::new(vec![
        Representation::perm_vector(3),
        Representation::perm_vector(3),
        Representation::trivial(FiniteGroup::Symmetric(3), 1),
    ])
    .expect("permutation representations share a group")
}

/// A quadratic risk with uniform random coefficients in `[−1, 1)`.
pub fn random_quadratic(seed: u64) -> Result<RiskFamily> {
    let ind = quadratic_ind();
    let n = ind.num_params();
    let mut rng = seeded_rng(seed);
    let m = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let q = equidyn_core::grad::QuadraticRisk::new(&ind.dims(), m, c)?;
    Ok(RiskFamily::quadratic(
        "random quadratic",
        ind,
        q,
        HaarStrategy::Exact,
        seed,
    )?)
}

/// A Fail report standing for a check that could not run.
pub fn error_report(name: &str, label: &str, err: &anyhow::Error) -> CheckReport {
    let mut fp = BTreeMap::new();
    fp.insert("family".into(), label.to_string());
    fp.insert("error".into(), format!("{err:#}"));
    let mut r = CheckReport::new(name, fp);
    r.status = CheckStatus::Fail;
    r
}

type Job = Box<dyn Fn() -> Result<Vec<CheckReport>> + Send + Sync>;

struct NamedJob {
    name: &'static str,
    label: String,
    run: Job,
}

fn job(
    name: &'static str,
    label: &str,
    run: impl Fn() -> Result<Vec<CheckReport>> + Send + Sync + 'static,
) -> NamedJob {
    NamedJob {
        name,
        label: label.to_string(),
        run: Box::new(run),
    }
}

/// Network cases of a suite run: the configured architecture, or the three
/// toy architectures.
pub fn network_cases(cfg: Option<&Config>, seed: u64) -> Result<Vec<NetworkCase>> {
    match cfg {
        Some(cfg) => Ok(vec![NetworkCase::from_config(cfg)?]),
        None => ExperimentKind::ALL
            .into_iter()
            .map(|k| NetworkCase::toy(k, seed))
            .collect(),
    }
}

fn grad_jobs(cases: &[Arc<NetworkCase>], tol: Tolerances, seed: u64) -> Vec<NamedJob> {
    let mut jobs = Vec::new();
    for case in cases {
        let c = case.clone();
        jobs.push(job("gradient_identity", &case.label, move || {
            let fam = c.family(seed);
            let mut rng = seeded_rng(seed);
            (0..GRAD_POINTS)
                .map(|_| {
                    Ok(theory::check_grad_identity(
                        &fam,
                        &c.model.random_equivariant(&mut rng)?,
                        &tol,
                    )?)
                })
                .collect()
        }));
        let c = case.clone();
        jobs.push(job("e_invariance", &case.label, move || {
            let fam = c.family(seed);
            let a = c.model.random_equivariant(&mut seeded_rng(seed ^ 1))?;
            Ok(vec![theory::check_e_invariance(
                &fam,
                &a,
                E_INVARIANCE_STEPS,
                E_INVARIANCE_TAU,
                &tol,
            )?])
        }));
    }
    jobs.push(job("gradient_identity", "random quadratic", move || {
        let fam = random_quadratic(seed)?;
        let a = fam.projector.project(&LayerStack::random_gaussian(
            &fam.dims(),
            false,
            &mut seeded_rng(seed),
        ))?;
        Ok(vec![theory::check_grad_identity(&fam, &a, &tol)?])
    }));
    jobs
}

fn hessian_jobs(cases: &[Arc<NetworkCase>], tol: Tolerances, seed: u64) -> Result<Vec<NamedJob>> {
    let mut jobs = Vec::new();
    for case in cases {
        let case = if case.fits_dense() {
            case.clone()
        } else {
            log::info!(
                "{} has {} parameters, over the dense Hessian cap {DENSE_HESSIAN_CAP}; checking its toy version",
                case.label,
                case.model.ind.num_params()
            );
            Arc::new(NetworkCase::toy(case.kind, seed)?)
        };
        jobs.push(job("hessian_identities", &case.label.clone(), move || {
            let fam = case.family(seed);
            let a = case.model.random_equivariant(&mut seeded_rng(seed))?;
            Ok(vec![theory::check_hessian_identities(
                &fam,
                &a,
                tol.hessian_identity,
                &tol,
            )?])
        }));
    }
    jobs.push(job("hessian_identities", "random quadratic", move || {
        let fam = random_quadratic(seed)?;
        let a = fam.projector.project(&LayerStack::random_gaussian(
            &fam.dims(),
            false,
            &mut seeded_rng(seed),
        ))?;
        Ok(vec![theory::check_hessian_identities(
            &fam,
            &a,
            tol.quadratic_hessian,
            &tol,
        )?])
    }));
    jobs.push(job("planted_minimum", "planted quadratic", move || {
        let ind = quadratic_ind();
        let proj = equidyn_core::Projector::orbits(&ind)?;
        let a_star = proj.project(&LayerStack::random_gaussian(
            &ind.dims(),
            false,
            &mut seeded_rng(seed),
        ))?;
        let (fam, planted) = theory::planted_quadratic(ind, &a_star, 0.1, seed)?;
        Ok(vec![theory::check_planted_minimum(
            &fam, &a_star, planted, &tol,
        )?])
    }));
    Ok(jobs)
}

/// A unit vector of `E⊥` drawn from a Gaussian.
pub fn unit_perp(model: &Model, seed: u64) -> Result<LayerStack> {
    let g = gaussian_like(&LayerStack::zeros(model.dims()), &mut seeded_rng(seed));
    let y = model.project_e_perp(&g)?;
    Ok(y.scaled(1.0 / y.norm()))
}

fn decoupling_job(case: Arc<NetworkCase>, tol: Tolerances, seed: u64) -> NamedJob {
    job("decoupling", &case.label.clone(), move || {
        let fam = case.family(seed);
        let x = case.model.random_equivariant(&mut seeded_rng(seed))?;
        let y = unit_perp(&case.model, seed ^ 2)?;
        Ok(vec![theory::check_decoupling(
            &fam,
            &x,
            &y,
            &DECOUPLING_EPS,
            &tol,
        )?])
    })
}

fn fa_jobs(cases: &[Arc<NetworkCase>], seed: u64) -> Vec<NamedJob> {
    cases
        .iter()
        .map(|case| {
            let c = case.clone();
            job("feature_average_identity", &case.label, move || {
                let a = LayerStack::random_gaussian(c.model.dims(), true, &mut seeded_rng(seed));
                Ok(vec![theory::check_feature_average_identity(
                    &c.model, &c.data, &a, seed,
                )?])
            })
        })
        .collect()
}

/// Runs the selected suite on up to `jobs` threads. Checks that cannot run
/// are reported as failures carrying the error.
pub fn run_suite(
    suite: Suite,
    cfg: Option<&Config>,
    seed: u64,
    jobs: usize,
) -> Result<Vec<CheckReport>> {
    let tol = cfg.map(|c| c.tolerances).unwrap_or_default();
    let cases: Vec<Arc<NetworkCase>> = network_cases(cfg, seed)?
        .into_iter()
        .map(Arc::new)
        .collect();
    let mut all = Vec::new();
    if suite.includes(Suite::Grad) {
        all.extend(grad_jobs(&cases, tol, seed));
    }
    if suite.includes(Suite::Hessian) {
        all.extend(hessian_jobs(&cases, tol, seed)?);
    }
    if suite.includes(Suite::Counterexample) {
        for n in COUNTEREXAMPLE_SIZES {
            all.push(job("counterexample", &format!("S_{n}"), move || {
                Ok(vec![theory::counterexample(n, &tol)?])
            }));
        }
    }
    if suite.includes(Suite::Decoupling) {
        let case = match cfg {
            Some(_) => cases[0].clone(),
            None => Arc::new(NetworkCase::toy(ExperimentKind::ShapeSegmentation, seed)?),
        };
        all.push(decoupling_job(case, tol, seed));
    }
    if suite.includes(Suite::Fa) {
        all.extend(fa_jobs(&cases, seed));
    }
    let results = parallel_map(&all, jobs, |_, j| {
        (j.run)().unwrap_or_else(|e| {
            log::error!("{} on {}: {e:#}", j.name, j.label);
            vec![error_report(j.name, &j.label, &e)]
        })
    });
    Ok(results.into_iter().flatten().collect())
}
