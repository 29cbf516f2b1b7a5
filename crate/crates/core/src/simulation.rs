//! Scenario generators and a seeded Monte Carlo harness.
//!
//! Replication `i` of a run with master seed `s` draws its data from a
//! ChaCha20 stream `(s, i)` and seeds its restarts with a hash of `(s, i)`,
//! so results do not depend on the order or thread in which replications run.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // needed only when std is not linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DiseaseClass, SubjectRecord};
use crate::error::{Error, Result};
use crate::estimators::{vus_estimate, Method};
use crate::fit::{fit, lrt_from_fits, FitOptions, LrtResult};
use crate::model::subject_probs;
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    I,
    II,
}

/// Distribution of the marker `T` and the scalar covariate `A`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkerDist {
    BivariateNormal { mean: [f64; 2], cov: [[f64; 2]; 2] },
    Independent { t_mean: f64, t_sd: f64, a_mean: f64, a_sd: f64 },
}

impl MarkerDist {
    fn check(&self) -> Result<()> {
        match *self {
            MarkerDist::BivariateNormal { cov, .. } => {
                let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
                if cov[0][1] != cov[1][0] || !(cov[0][0] > 0.0) || !(det > 0.0) {
                    return Err(Error::InsufficientData("marker covariance is not symmetric positive definite".into()));
                }
            }
            MarkerDist::Independent { t_sd, a_sd, .. } => {
                if !(t_sd > 0.0 && a_sd > 0.0) {
                    return Err(Error::InsufficientData("marker standard deviations must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        match *self {
            MarkerDist::BivariateNormal { mean, cov } => {
                let l11 = cov[0][0].sqrt();
                let l21 = cov[1][0] / l11;
                let l22 = (cov[1][1] - l21 * l21).sqrt();
                (mean[0] + l11 * z1, mean[1] + l21 * z1 + l22 * z2)
            }
            MarkerDist::Independent { t_mean, t_sd, a_mean, a_sd } => (t_mean + t_sd * z1, a_mean + a_sd * z2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub marker: MarkerDist,
    pub xi_true: ParamVector,
    pub mu_true: f64,
    pub theta_true: [f64; 3],
    pub verif_rate: f64,
}

impl ScenarioSpec {
    /// Same scenario with a different `λ` (the disease model, and hence
    /// `μ` and `θ`, are unchanged).
    pub fn with_lambda(&self, lambda: [f64; 2]) -> ScenarioSpec {
        let mut s = self.clone();
        s.xi_true.set_lambda(lambda);
        s.name = alloc::format!("{} (lambda = [{}, {}])", self.name, lambda[0], lambda[1]);
        s
    }
}

pub fn builtin_scenario(which: Scenario) -> ScenarioSpec {
    match which {
        Scenario::I => ScenarioSpec {
            name: "Scenario I".into(),
            marker: MarkerDist::BivariateNormal { mean: [3.7, 1.85], cov: [[3.71, 1.36], [1.36, 3.13]] },
            xi_true: ParamVector::from_blocks([-2.0, -1.0], &[2.0, 0.5, -1.2], &[15.0, -3.3, -0.7], &[9.5, -1.7, -0.3])
                .expect("valid blocks"),
            mu_true: 0.791,
            theta_true: [0.4, 0.35, 0.25],
            verif_rate: 0.57,
        },
        Scenario::II => ScenarioSpec {
            name: "Scenario II".into(),
            // A has variance 0.64
            marker: MarkerDist::Independent { t_mean: 0.65, t_sd: 1.0, a_mean: -0.3, a_sd: 0.8 },
            xi_true: ParamVector::from_blocks([-2.5, -1.0], &[1.0, 1.2, -1.5], &[4.6, -3.3, -6.4], &[4.0, -1.7, -3.2])
                .expect("valid blocks"),
            mu_true: 0.387,
            theta_true: [0.55, 0.32, 0.13],
            verif_rate: 0.58,
        },
    }
}

/// Generated data with the disease classes of unverified subjects kept aside.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub data: Dataset,
    pub true_class: Vec<DiseaseClass>,
}

impl SimulatedData {
    /// The same subjects with every class revealed.
    pub fn fully_labeled(&self) -> Dataset {
        let recs = self
            .data
            .records()
            .iter()
            .zip(&self.true_class)
            .map(|(r, &c)| SubjectRecord::verified(r.t, r.a.clone(), c))
            .collect();
        Dataset::new(recs, self.data.p()).expect("generated data is valid")
    }
}

pub fn generate(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<SimulatedData> {
    generate_with_rng(spec, n, &mut ChaCha20Rng::seed_from_u64(seed))
}

pub fn generate_with_rng<R: Rng + ?Sized>(spec: &ScenarioSpec, n: usize, rng: &mut R) -> Result<SimulatedData> {
    spec.marker.check()?;
    spec.xi_true.check_p(1)?;
    let mut records = Vec::with_capacity(n);
    let mut true_class = Vec::with_capacity(n);
    for _ in 0..n {
        let (t, a) = spec.marker.draw(rng);
        let pr = subject_probs(&spec.xi_true, t, &[a])?;
        let u: f64 = rng.random();
        let k = if u < pr.rho[0] {
            0
        } else if u < pr.rho[0] + pr.rho[1] {
            1
        } else {
            2
        };
        let class = DiseaseClass::from_index(k);
        let verified = rng.random::<f64>() < pr.pi_class[k];
        records.push(if verified { SubjectRecord::verified(t, vec![a], class) } else { SubjectRecord::unverified(t, vec![a]) });
        true_class.push(class);
    }
    Ok(SimulatedData { data: Dataset::new(records, 1)?, true_class })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n: usize,
    pub reps: usize,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub level: f64,
    pub fit: FitOptions,
    /// Also fit the MAR model and record the ignorability test.
    pub with_lrt: bool,
}

impl McConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        McConfig {
            n,
            reps,
            methods: Method::CORRECTED.to_vec(),
            seed,
            level: 0.95,
            fit: FitOptions { restarts: 3, ..FitOptions::default() },
            with_lrt: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub method: Method,
    pub mu_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub covered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    /// `None` when the fit succeeded; excluded from the summaries otherwise.
    pub error: Option<String>,
    pub xi_hat: Option<Vec<f64>>,
    pub estimates: Vec<EstimateRecord>,
    /// Methods whose estimate failed on an otherwise good replication.
    pub method_errors: Vec<(Method, String)>,
    pub lrt: Option<LrtResult>,
}

impl ReplicationRecord {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed used for the restarts of replication `index`.
pub fn replication_fit_seed(master: u64, index: usize) -> u64 {
    splitmix64(master ^ splitmix64(index as u64))
}

/// Data for replication `index`.
pub fn replication_data(spec: &ScenarioSpec, n: usize, master: u64, index: usize) -> Result<SimulatedData> {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index as u64);
    generate_with_rng(spec, n, &mut rng)
}

/// Generate, fit, estimate and (optionally) test one replication.
pub fn run_replication(spec: &ScenarioSpec, cfg: &McConfig, index: usize) -> ReplicationRecord {
    let mut rec = ReplicationRecord {
        index,
        error: None,
        xi_hat: None,
        estimates: Vec::new(),
        method_errors: Vec::new(),
        lrt: None,
    };
    let sim = match replication_data(spec, cfg.n, cfg.seed, index) {
        Ok(s) => s,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    let opts = FitOptions { seed: replication_fit_seed(cfg.seed, index), ..cfg.fit };
    let ni = match fit(&sim.data, &opts) {
        Ok(f) => f,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.xi_hat = Some(ni.xi_hat.as_slice().to_vec());
    for &m in &cfg.methods {
        match vus_estimate(m, &sim.data, &ni, cfg.level) {
            Ok(e) => rec.estimates.push(EstimateRecord {
                method: m,
                mu_hat: e.mu_hat,
                se: e.se,
                ci: e.ci,
                covered: e.ci.0 <= spec.mu_true && spec.mu_true <= e.ci.1,
            }),
            Err(e) => rec.method_errors.push((m, e.to_string())),
        }
    }
    if cfg.with_lrt {
        match fit(&sim.data, &FitOptions { constrain_mar: true, ..opts }) {
            Ok(mar) => rec.lrt = Some(lrt_from_fits(&ni, &mar)),
            Err(e) => rec.error = Some(alloc::format!("MAR fit: {e}")),
        }
    }
    rec
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    /// Replications contributing to this row.
    pub count: usize,
    pub mc_mean: f64,
    pub bias_pct: f64,
    pub mc_sd: f64,
    /// Mean estimated standard error.
    pub esd: f64,
    pub coverage_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub true_value: f64,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtSummary {
    pub count: usize,
    pub mean_stat: f64,
    /// Fraction of replications with p-value below 0.05.
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: String,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub mu_true: f64,
    pub failures: usize,
    pub summaries: Vec<MethodSummary>,
    pub params: Vec<ParamSummary>,
    pub lrt: Option<LrtSummary>,
    pub records: Vec<ReplicationRecord>,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let sd = if xs.len() > 1 { (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (m, sd)
}

impl McReport {
    /// Summaries recomputed from replication records; `records` may arrive in
    /// any order and are sorted by index.
    pub fn from_records(spec: &ScenarioSpec, cfg: &McConfig, mut records: Vec<ReplicationRecord>) -> McReport {
        records.sort_by_key(|r| r.index);
        let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.succeeded()).collect();
        let summaries = cfg
            .methods
            .iter()
            .map(|&m| {
                let est: Vec<&EstimateRecord> = ok.iter().flat_map(|r| r.estimates.iter().filter(move |e| e.method == m)).collect();
                let mus: Vec<f64> = est.iter().map(|e| e.mu_hat).collect();
                let (mc_mean, mc_sd) = mean_sd(&mus);
                let (esd, _) = mean_sd(&est.iter().map(|e| e.se).collect::<Vec<_>>());
                let covered = est.iter().filter(|e| e.covered).count();
                MethodSummary {
                    method: m,
                    count: est.len(),
                    mc_mean,
                    bias_pct: 100.0 * (mc_mean - spec.mu_true) / spec.mu_true,
                    mc_sd,
                    esd,
                    coverage_pct: 100.0 * covered as f64 / est.len() as f64,
                }
            })
            .collect();
        let names = spec.xi_true.coordinate_names();
        let params = names
            .into_iter()
            .enumerate()
            .map(|(j, name)| {
                let xs: Vec<f64> = ok.iter().filter_map(|r| r.xi_hat.as_ref().map(|x| x[j])).collect();
                let (mean, sd) = mean_sd(&xs);
                ParamSummary { name, true_value: spec.xi_true.as_slice()[j], mean, sd }
            })
            .collect();
        let lrt = cfg.with_lrt.then(|| {
            let stats: Vec<&LrtResult> = ok.iter().filter_map(|r| r.lrt.as_ref()).collect();
            let count = stats.len();
            LrtSummary {
                count,
                mean_stat: stats.iter().map(|l| l.stat).sum::<f64>() / count as f64,
                rejection_rate: stats.iter().filter(|l| l.p_value < 0.05).count() as f64 / count as f64,
            }
        });
        McReport {
            scenario: spec.name.clone(),
            n: cfg.n,
            reps: cfg.reps,
            seed: cfg.seed,
            mu_true: spec.mu_true,
            failures: records.len() - ok.len(),
            summaries,
            params,
            lrt,
            records,
        }
    }

    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Errors when more than a fifth of the replications failed.
    pub fn check_failures(&self) -> Result<()> {
        if self.failures * 5 > self.reps {
            return Err(Error::TooManyFailures { failed: self.failures, total: self.reps });
        }
        Ok(())
    }

    /// Per-replication values of coordinate `j` of `ξ̂` (successful fits only).
    pub fn param_stream(&self, j: usize) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.xi_hat.as_ref().map(|x| x[j])).collect()
    }
}

/// Sequential Monte Carlo run.
pub fn run_mc(spec: &ScenarioSpec, cfg: &McConfig) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(Error::InsufficientData("at least one replication is required".into()));
    }
    let records = (0..cfg.reps).map(|i| run_replication(spec, cfg, i)).collect();
    let report = McReport::from_records(spec, cfg, records);
    report.check_failures()?;
    Ok(report)
}
