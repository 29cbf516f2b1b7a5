mod common;

use common::{draw_data, naive_probs, random_xi, rel_err_vec, rng};
use nalgebra::{DMatrix, DVector};
use vusni_core::data::{Dataset, SubjectRecord};
use vusni_core::fit::{fit, FitOptions};
use vusni_core::model::{
    disease_probs, log_likelihood, observed_information, score, subject_probs, subject_scores,
};
use vusni_core::params::ParamVector;
use vusni_core::simulation::{builtin_scenario, generate, Scenario};

/// Each subject's observed-cell probability from the six joint cells
/// `Pr(D = k, V = v | T, A)`.
fn cell_loglik(xi: &ParamVector, data: &Dataset) -> f64 {
    data.records()
        .iter()
        .map(|r| {
            let (rho, pi) = naive_probs(xi.as_slice(), xi.p(), r.t, &r.a);
            let cells: Vec<[f64; 2]> = (0..3).map(|k| [rho[k] * (1.0 - pi[k]), rho[k] * pi[k]]).collect();
            match r.d {
                Some(c) => cells[c.index()][1].ln(),
                None => cells.iter().map(|c| c[0]).sum::<f64>().ln(),
            }
        })
        .sum()
}

#[test]
fn log_likelihood_matches_joint_cell_enumeration() {
    let mut g = rng(1);
    for _ in 0..30 {
        let xi = random_xi(&mut g, 1);
        let data = draw_data(&mut g, &xi, 20, 0.0);
        let a = log_likelihood(&xi, &data).unwrap();
        let b = cell_loglik(&xi, &data);
        assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn conditional_class_probabilities_follow_bayes_rule() {
    let mut g = rng(2);
    for _ in 0..100 {
        let xi = random_xi(&mut g, 2);
        let (t, a) = (g_normal(&mut g), vec![g_normal(&mut g), g_normal(&mut g)]);
        let sp = subject_probs(&xi, t, &a).unwrap();
        let (rho, pi) = naive_probs(xi.as_slice(), 2, t, &a);
        let joint: Vec<[f64; 2]> = (0..3).map(|k| [rho[k] * (1.0 - pi[k]), rho[k] * pi[k]]).collect();
        let pv: [f64; 2] = [joint.iter().map(|c| c[0]).sum(), joint.iter().map(|c| c[1]).sum()];
        for k in 0..3 {
            assert!((sp.rho0[k] - joint[k][0] / pv[0]).abs() < 1e-12);
            assert!((sp.rho1v[k] - joint[k][1] / pv[1]).abs() < 1e-12);
            assert!((sp.rho[k] - rho[k]).abs() < 1e-12);
        }
        assert!((sp.pi - pv[1]).abs() < 1e-12);
        let total: f64 = sp.rho.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sp.pi > 0.0 && sp.pi < 1.0);
    }
}

fn g_normal(g: &mut rand_chacha::ChaCha20Rng) -> f64 {
    use rand::Rng;
    g.sample(rand_distr::StandardNormal)
}

#[test]
fn lambda_is_a_log_odds_ratio() {
    let mut g = rng(3);
    for _ in 0..100 {
        let xi = random_xi(&mut g, 1);
        let sp = subject_probs(&xi, g_normal(&mut g), &[g_normal(&mut g)]).unwrap();
        for k in 0..2 {
            let ratio = (sp.rho1v[k] / sp.rho0[k]) / (sp.rho1v[2] / sp.rho0[2]);
            assert!((ratio.ln() - xi.lambda()[k]).abs() < 1e-9);
        }
    }
}

#[test]
fn mar_likelihood_separates() {
    let mut g = rng(4);
    for _ in 0..20 {
        let mut xi = random_xi(&mut g, 1);
        xi.set_lambda([0.0, 0.0]);
        let data = draw_data(&mut g, &xi, 25, 0.0);
        let mut logistic = 0.0;
        let mut multinomial = 0.0;
        for r in data.records() {
            let (rho, pi) = naive_probs(xi.as_slice(), 1, r.t, &r.a);
            let pi = pi[2];
            logistic += if r.is_verified() { pi.ln() } else { (1.0 - pi).ln() };
            if let Some(c) = r.d {
                multinomial += rho[c.index()].ln();
            }
        }
        let ll = log_likelihood(&xi, &data).unwrap();
        assert!((ll - (logistic + multinomial)).abs() < 1e-9);
    }
}

#[test]
fn score_matches_finite_differences() {
    let mut g = rng(5);
    for draw in 0..50 {
        let xi = random_xi(&mut g, 1 + draw % 2);
        let data = draw_data(&mut g, &xi, 20, 0.0);
        let s = score(&xi, &data).unwrap();
        let fd: Vec<f64> = (0..xi.dim())
            .map(|j| {
                let h = 1e-6;
                let mut p = xi.clone();
                p.as_mut_slice()[j] += h;
                let mut m = xi.clone();
                m.as_mut_slice()[j] -= h;
                (log_likelihood(&p, &data).unwrap() - log_likelihood(&m, &data).unwrap()) / (2.0 * h)
            })
            .collect();
        let err = rel_err_vec(&s, &fd, 1e-3);
        assert!(err < 1e-5, "draw {draw}: relative error {err}");
        let per_subject = subject_scores(&xi, &data).unwrap();
        for j in 0..xi.dim() {
            let total: f64 = per_subject.iter().map(|r| r[j]).sum();
            assert!((total - s[j]).abs() < 1e-10 * (1.0 + s[j].abs()));
        }
    }
}

#[test]
fn information_matches_second_differences_of_the_likelihood() {
    let mut g = rng(6);
    for _ in 0..5 {
        let xi = random_xi(&mut g, 1);
        let data = draw_data(&mut g, &xi, 30, 0.0);
        let info = observed_information(&xi, &data).unwrap();
        assert_eq!(info, info.transpose());
        let d = xi.dim();
        let h = 1e-4;
        let ll = |dx: &[(usize, f64)]| {
            let mut x = xi.clone();
            for &(j, v) in dx {
                x.as_mut_slice()[j] += v;
            }
            log_likelihood(&x, &data).unwrap()
        };
        let mut fd = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let v = (ll(&[(i, h), (j, h)]) - ll(&[(i, h), (j, -h)]) - ll(&[(i, -h), (j, h)]) + ll(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h);
                fd[i * d + j] = -v;
            }
        }
        let ours: Vec<f64> = info.iter().copied().collect();
        let err = rel_err_vec(&ours, &fd, 1e-2);
        assert!(err < 1e-4, "relative error {err}");
    }
}

fn design(r: &SubjectRecord) -> Vec<f64> {
    let mut u = vec![1.0, r.t];
    u.extend_from_slice(&r.a);
    u
}

/// Information of a multinomial logit (class 3 reference), coded directly.
fn multinomial_information(beta: &[f64], data: &Dataset) -> DMatrix<f64> {
    let b = 2 + data.p();
    let mut m = DMatrix::zeros(2 * b, 2 * b);
    for r in data.records() {
        let u = design(r);
        let f: Vec<f64> = (0..2).map(|k| (0..b).map(|j| beta[k * b + j] * u[j]).sum()).collect();
        let z = 1.0 + f[0].exp() + f[1].exp();
        let rho = [f[0].exp() / z, f[1].exp() / z];
        for a in 0..2 {
            for c in 0..2 {
                let w = rho[a] * (if a == c { 1.0 } else { 0.0 } - rho[c]);
                for i in 0..b {
                    for j in 0..b {
                        m[(a * b + i, c * b + j)] += w * u[i] * u[j];
                    }
                }
            }
        }
    }
    m
}

fn fully_verified(seed: u64, n: usize) -> (ParamVector, Dataset) {
    let mut g = rng(seed);
    let xi = random_xi(&mut g, 1);
    let data = draw_data(&mut g, &xi, n, 0.0);
    let all = data
        .map_records(|r| match r.d {
            Some(_) => r.clone(),
            None => SubjectRecord::verified(r.t, r.a.clone(), vusni_core::DiseaseClass::Three),
        })
        .unwrap();
    (xi, all)
}

#[test]
fn fully_verified_disease_blocks_are_the_multinomial_score_and_information() {
    let (xi, data) = fully_verified(7, 40);
    let s = score(&xi, &data).unwrap();
    let info = observed_information(&xi, &data).unwrap();
    let b = xi.block_len();
    let beta: Vec<f64> = [xi.tau_rho(1), xi.tau_rho(2)].concat();
    for k in 0..2 {
        for j in 0..b {
            let direct: f64 = data
                .records()
                .iter()
                .map(|r| {
                    let rho = disease_probs(&xi, r.t, &r.a).unwrap();
                    design(r)[j] * (r.one_hot()[k] - rho[k])
                })
                .sum();
            assert!((direct - s[xi.tau_rho_range(k + 1).start + j]).abs() < 1e-10);
        }
    }
    let oracle = multinomial_information(&beta, &data);
    let start = xi.tau_rho_range(1).start;
    for i in 0..2 * b {
        for j in 0..2 * b {
            let a = info[(start + i, start + j)];
            assert!((a - oracle[(i, j)]).abs() < 1e-6 * (1.0 + oracle[(i, j)].abs()), "({i},{j}) {a} vs {}", oracle[(i, j)]);
        }
    }
}

/// Newton–Raphson multinomial logit fit, coded independently of the library.
fn multinomial_mle(data: &Dataset) -> Vec<f64> {
    let b = 2 + data.p();
    let mut beta = vec![0.0; 2 * b];
    for _ in 0..100 {
        let mut grad = DVector::zeros(2 * b);
        for r in data.records() {
            let u = design(r);
            let f: Vec<f64> = (0..2).map(|k| (0..b).map(|j| beta[k * b + j] * u[j]).sum()).collect();
            let z = 1.0 + f[0].exp() + f[1].exp();
            for k in 0..2 {
                let resid = r.one_hot()[k] - f[k].exp() / z;
                for j in 0..b {
                    grad[k * b + j] += resid * u[j];
                }
            }
        }
        let info = multinomial_information(&beta, data);
        let step = info.cholesky().unwrap().solve(&grad);
        for (x, s) in beta.iter_mut().zip(step.iter()) {
            *x += s;
        }
        if step.amax() < 1e-13 {
            break;
        }
    }
    beta
}

#[test]
fn mar_fit_on_fully_verified_data_is_the_multinomial_logit() {
    let (_, data) = fully_verified(8, 200);
    let f = fit(&data, &FitOptions { constrain_mar: true, ..FitOptions::default() }).unwrap();
    assert_eq!(f.xi_hat.lambda(), [0.0, 0.0]);
    assert_eq!(&f.std_errors[..2], &[0.0, 0.0]);
    let oracle = multinomial_mle(&data);
    let ours = [f.xi_hat.tau_rho(1), f.xi_hat.tau_rho(2)].concat();
    for (a, b) in ours.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn scenario_two_fit_recovers_the_true_parameters() {
    let spec = builtin_scenario(Scenario::II);
    let sim = generate(&spec, 1500, 2024).unwrap();
    let f = fit(&sim.data, &FitOptions { seed: 3, ..FitOptions::default() }).unwrap();
    assert!(f.converged && f.grad_norm <= 1e-6);
    for ((name, est), (truth, se)) in
        f.xi_hat.coordinate_names().iter().zip(f.xi_hat.as_slice()).zip(spec.xi_true.as_slice().iter().zip(&f.std_errors))
    {
        assert!((est - truth).abs() <= 3.0 * se, "{name}: {est} vs {truth} (se {se})");
    }
}

#[test]
fn hand_evaluated_disease_probabilities() {
    let spec = builtin_scenario(Scenario::II);
    let (t, a) = (0.65, -0.3);
    let f1: f64 = 4.6 - 3.3 * 0.65 + 6.4 * 0.3;
    let f2: f64 = 4.0 - 1.7 * 0.65 + 3.2 * 0.3;
    let z = 1.0 + f1.exp() + f2.exp();
    let rho = disease_probs(&spec.xi_true, t, &[a]).unwrap();
    assert!((rho[0] - f1.exp() / z).abs() < 1e-12);
    assert!((rho[1] - f2.exp() / z).abs() < 1e-12);
    assert!((rho[2] - 1.0 / z).abs() < 1e-12);
}
