//! Inequality and identity check suites. Every check is deterministic for
//! a fixed seed; the report timestamp is the only nondeterministic field
//! and lives in a dedicated metadata block.

use std::time::{SystemTime, UNIX_EPOCH};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adjoint::{adjoint_j, adjoint_l, adjoint_p, diagonal_identity, theta_decomposition};
use crate::error::{Error, Result};
use crate::integrate::{op_j, op_l, op_p, Integral};
use crate::kernel::{clark_kernel, reconstruct};
use crate::mc::{convergence_order, mc_diagonal_deviation, mc_poisson_gap, mc_wiener_isometry};
use crate::process::{
    norm_lp, norm_lp_pi, norm_np, pair_l2, pair_l2_pi, MarkedProcess, Process,
};
use crate::space::{MarkSet, Model, RandomVariable, ScenarioTree};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckEntry {
    pub id: String,
    pub passed: bool,
    /// The measured quantity (worst-case defect, ratio, sigma distance,
    /// or fitted order, depending on the check).
    pub observed: f64,
    /// The threshold `observed` was compared against.
    pub bound: f64,
    /// Report-only entries record their value but never fail the run;
    /// empirical ratios without a pinned constant default to this.
    #[serde(default)]
    pub report_only: bool,
    pub detail: String,
}

impl CheckEntry {
    fn at_most(id: &str, observed: f64, bound: f64, detail: impl Into<String>) -> Self {
        CheckEntry {
            id: id.into(),
            passed: observed <= bound,
            observed,
            bound,
            report_only: false,
            detail: detail.into(),
        }
    }
}

/// Everything nondeterministic or environment-specific lives here; the
/// `checks` list is reproducible byte for byte given the same config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub generated_at_unix: u64,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub metadata: ReportMetadata,
    pub checks: Vec<CheckEntry>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.report_only || c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// RFC 4180: CRLF line endings, fields quoted when they contain a
    /// comma, quote, or newline.
    pub fn to_csv(&self) -> String {
        fn field(s: &str) -> String {
            if s.contains([',', '"', '\n', '\r']) {
                format!("\"{}\"", s.replace('"', "\"\""))
            } else {
                s.to_string()
            }
        }
        let mut out = String::from("id,passed,report_only,observed,bound,detail\r\n");
        for c in &self.checks {
            out.push_str(&format!(
                "{},{},{},{},{},{}\r\n",
                field(&c.id),
                c.passed,
                c.report_only,
                c.observed,
                c.bound,
                field(&c.detail)
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub model: Model,
    pub n_steps: usize,
    pub marks: MarkSet,
    pub seed: u64,
    pub mc_paths: usize,
    pub p_values: Vec<f64>,
    /// Absolute/relative tolerance for identities that hold exactly on
    /// the tree (only floating-point roundoff is tolerated).
    pub tol_exact: f64,
    pub mc_sigmas: f64,
    /// Empty = every check applicable to the model.
    pub checks: Vec<String>,
    /// Check-id prefixes downgraded to report-only (recorded, never
    /// failing). Empirical BDG ratios are report-only regardless.
    pub report_only: Vec<String>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            model: Model::Joint,
            n_steps: 3,
            marks: MarkSet::single("a", 0.5),
            seed: 1,
            mc_paths: 100_000,
            p_values: vec![2.0, 4.0],
            tol_exact: 1e-10,
            mc_sigmas: 4.0,
            checks: Vec::new(),
            report_only: Vec::new(),
        }
    }
}

pub const ALL_CHECKS: &[&str] = &[
    "doob",
    "bound-l",
    "bound-j",
    "bound-p",
    "ito-isometry",
    "bdg-ratio",
    "moment-w4",
    "poisson-isometry",
    "polarization",
    "adjoint-pairing",
    "clark",
    "decomposition",
    "diagonal-order",
    "mc-poisson",
    "mc-diagonal",
    "mc-wiener",
];

fn fnv(id: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in id.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn rng_for(seed: u64, id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ fnv(id))
}

fn random_process(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> Process {
    Process::from_fn(tree, |_, _| rng.gen_range(-1.0..1.0))
}

fn random_marked(tree: &ScenarioTree, rng: &mut ChaCha8Rng) -> MarkedProcess {
    MarkedProcess::from_fn(tree, |_, _, _| rng.gen_range(-1.0..1.0))
}

/// Pathwise max of |value| over all grid times and the terminal value,
/// one entry per terminal atom.
fn path_sup(tree: &ScenarioTree, integral: &Integral) -> Vec<f64> {
    let term = tree.terminal_level();
    tree.atoms(term)
        .iter()
        .enumerate()
        .map(|(i, _)| {
            let path = tree.path_of(i);
            let mut m = integral.terminal.values[i].abs();
            for (k, &a) in path.iter().enumerate().take(tree.n_steps()) {
                m = m.max(integral.process.values[k][a].abs());
            }
            m
        })
        .collect()
}

fn terminal_moment(tree: &ScenarioTree, values: &[f64], p: f64) -> f64 {
    tree.atoms(tree.terminal_level())
        .iter()
        .zip(values)
        .map(|(a, v)| a.prob * v.abs().powf(p))
        .sum()
}

/// Doob maximal inequality for conditional-expectation martingales:
/// E[sup_k |μ_k|^p] ≤ (p/(p−1))^p · E[|μ(1)|^p].
pub fn check_doob(tree: &ScenarioTree, p: f64, n_inputs: usize, seed: u64) -> Result<CheckEntry> {
    if !(p > 1.0) {
        return Err(Error::Parameter(format!("doob requires p > 1, got {p}")));
    }
    let id = format!("doob-p{p}");
    let mut rng = rng_for(seed, &id);
    let term = tree.terminal_level();
    let const_doob = (p / (p - 1.0)).powf(p);
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let xi: Vec<f64> = (0..tree.atoms(term).len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rv = RandomVariable::new(term, xi.clone());
        // path sup of the martingale E[ξ|F_·], terminal included
        let mut sup: Vec<f64> = xi.iter().map(|v| v.abs()).collect();
        for k in (0..=tree.n_steps() - 1).rev() {
            let mu_k = tree.conditional_expectation(&rv, k)?;
            for (i, s) in sup.iter_mut().enumerate() {
                let path = tree.path_of(i);
                *s = s.max(mu_k.values[path[k]].abs());
            }
        }
        let lhs: f64 =
            tree.atoms(term).iter().zip(&sup).map(|(a, s)| a.prob * s.powf(p)).sum();
        let rhs = const_doob * terminal_moment(tree, &xi, p);
        worst = worst.max(lhs / rhs);
    }
    Ok(CheckEntry::at_most(
        &id,
        worst,
        1.0,
        format!("worst E[sup^p] / ((p')^p E[|end|^p]) over {n_inputs} martingales"),
    ))
}

/// ‖Lf‖ with the running max is dominated by ‖f‖_{L_p} with constant 1.
pub fn check_bound_l(tree: &ScenarioTree, p: f64, n_inputs: usize, seed: u64) -> Result<CheckEntry> {
    let id = format!("bound-l-p{p}");
    let mut rng = rng_for(seed, &id);
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let f = random_process(tree, &mut rng);
        let integral = op_l(tree, &f)?;
        let sup = path_sup(tree, &integral);
        let lhs = terminal_moment(tree, &sup, p).powf(1.0 / p);
        let rhs = norm_lp(tree, &f, p)?;
        worst = worst.max(lhs / rhs);
    }
    Ok(CheckEntry::at_most(&id, worst, 1.0, format!("worst sup-norm ratio over {n_inputs} inputs")))
}

/// Doob chain at p = 2: E[sup(Jφ)²] ≤ 4·E[(Jφ)(1)²] = 4‖φ‖²_{N₂}.
pub fn check_bound_j(tree: &ScenarioTree, n_inputs: usize, seed: u64) -> Result<CheckEntry> {
    let id = "bound-j-p2";
    let mut rng = rng_for(seed, id);
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let phi = random_process(tree, &mut rng);
        let integral = op_j(tree, &phi)?;
        let sup = path_sup(tree, &integral);
        let lhs = terminal_moment(tree, &sup, 2.0).sqrt();
        let rhs = 2.0 * norm_np(tree, &phi, 2.0)?;
        worst = worst.max(lhs / rhs);
    }
    Ok(CheckEntry::at_most(id, worst, 1.0, format!("worst ‖sup Jφ‖₂ / 2‖φ‖_N2 over {n_inputs} inputs")))
}

/// Doob chain at p = 2 for the jump integral: E[(Pa)(1)²] ≤ ‖a‖²_{L₂(Π)}
/// (per-step variance q(1−q) ≤ q), hence E[sup(Pa)²] ≤ 4‖a‖²_{L₂(Π)}.
pub fn check_bound_p(tree: &ScenarioTree, n_inputs: usize, seed: u64) -> Result<CheckEntry> {
    let id = "bound-p-p2";
    let mut rng = rng_for(seed, id);
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let a = random_marked(tree, &mut rng);
        let integral = op_p(tree, &a)?;
        let sup = path_sup(tree, &integral);
        let lhs = terminal_moment(tree, &sup, 2.0).sqrt();
        let rhs = 2.0 * norm_lp_pi(tree, &a, 2.0)?;
        worst = worst.max(lhs / rhs);
    }
    Ok(CheckEntry::at_most(id, worst, 1.0, format!("worst ‖sup Pa‖₂ / 2‖a‖_L2Π over {n_inputs} inputs")))
}

/// Itô isometry, exact on the tree: E[(Jφ)(1)²] = ‖φ‖²_{N₂}.
pub fn check_ito_isometry(
    tree: &ScenarioTree,
    n_inputs: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckEntry> {
    let id = "ito-isometry";
    let mut rng = rng_for(seed, id);
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let phi = random_process(tree, &mut rng);
        let lhs = terminal_moment(tree, &op_j(tree, &phi)?.terminal.values, 2.0);
        let rhs = norm_np(tree, &phi, 2.0)?.powi(2);
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs));
    }
    Ok(CheckEntry::at_most(id, worst, tol, format!("worst relative isometry defect over {n_inputs} inputs")))
}

/// Two-sided moment comparison ‖Jφ(1)‖_p vs ‖φ‖_{N_p}. On the tree the
/// quadratic variation Σφ²Δw² equals Σφ²dt exactly, so the discrete
/// martingale constants √(p−1) (p ≥ 2) resp. their duals apply; the
/// conservative two-sided bound max(p, p′) − 1 is used.
pub fn check_bdg_ratio(tree: &ScenarioTree, p: f64, n_inputs: usize, seed: u64) -> Result<CheckEntry> {
    let id = format!("bdg-ratio-p{p}");
    let mut rng = rng_for(seed, &id);
    let p_star = p.max(p / (p - 1.0));
    let bound = p_star - 1.0;
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let phi = random_process(tree, &mut rng);
        let lhs = terminal_moment(tree, &op_j(tree, &phi)?.terminal.values, p).powf(1.0 / p);
        let rhs = norm_np(tree, &phi, p)?;
        if rhs > 0.0 && lhs > 0.0 {
            let ratio = lhs / rhs;
            worst = worst.max(ratio.max(1.0 / ratio));
        }
    }
    let mut entry = CheckEntry::at_most(
        &id,
        worst,
        bound,
        format!("worst two-sided ‖Jφ(1)‖_p / ‖φ‖_Np over {n_inputs} inputs"),
    );
    entry.report_only = true; // no pinned constant away from p = 2
    Ok(entry)
}

/// E[w(1)⁴] = 3 − 2·dt exactly for the binary increment.
pub fn check_moment_w4(tree: &ScenarioTree, tol: f64) -> Result<CheckEntry> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    let w = tree.terminal_wiener();
    let lhs = terminal_moment(tree, &w.values, 4.0);
    let exact = 3.0 - 2.0 * tree.dt();
    Ok(CheckEntry::at_most(
        "moment-w4",
        (lhs - exact).abs(),
        tol,
        format!("E[w(1)^4] = {lhs} vs exact {exact}"),
    ))
}

/// Two entries: the exact discrete jump isometry
/// E[(Pa)(1)²] = Σ_k Σ_i q_i(1−q_i)·E[a²], and the O(dt) gap to the
/// compensator norm ‖a‖²_{L₂(Π)}.
pub fn check_poisson_isometry(
    tree: &ScenarioTree,
    n_inputs: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<CheckEntry>> {
    if !tree.model.has_marks() {
        return Err(Error::Model { required: "poisson", actual: tree.model.name() });
    }
    let mut rng = rng_for(seed, "poisson-isometry");
    let max_q = (0..tree.marks.len()).map(|i| tree.q(i)).fold(0.0f64, f64::max);
    let mut worst_identity: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for _ in 0..n_inputs {
        let a = random_marked(tree, &mut rng);
        let lhs = terminal_moment(tree, &op_p(tree, &a)?.terminal.values, 2.0);
        let mut exact = 0.0;
        for (k, level) in a.values.iter().enumerate() {
            for (atom, row) in tree.atoms(k).iter().zip(level) {
                for (i, v) in row.iter().enumerate() {
                    let q = tree.q(i);
                    exact += atom.prob * q * (1.0 - q) * v * v;
                }
            }
        }
        worst_identity = worst_identity.max((lhs - exact).abs() / (1.0 + exact));
        let comp = pair_l2_pi(tree, &a, &a)?;
        // gap = Σ q²·E[a²] ≤ max_i(q_i)·‖a‖²_{L₂(Π)}
        worst_gap = worst_gap.max((comp - lhs) / (max_q * comp));
    }
    Ok(vec![
        CheckEntry::at_most(
            "poisson-isometry",
            worst_identity,
            tol,
            format!("worst relative defect of the q(1−q) identity over {n_inputs} inputs"),
        ),
        CheckEntry::at_most(
            "poisson-gap",
            worst_gap,
            1.0 + tol,
            format!("worst gap / (max_q · compensator norm²) over {n_inputs} inputs"),
        ),
    ])
}

/// E[(Jφ)(t_k)(Jψ)(t_k)] = Σ_{j<k} E[φψ]·dt at every grid time and the
/// terminal time; exact on the tree.
pub fn check_polarization(
    tree: &ScenarioTree,
    n_inputs: usize,
    seed: u64,
    tol: f64,
) -> Result<CheckEntry> {
    let id = "polarization";
    let mut rng = rng_for(seed, id);
    let dt = tree.dt();
    let mut worst: f64 = 0.0;
    for _ in 0..n_inputs {
        let phi = random_process(tree, &mut rng);
        let psi = random_process(tree, &mut rng);
        let jp = op_j(tree, &phi)?;
        let jq = op_j(tree, &psi)?;
        let mut running = 0.0;
        for k in 1..=tree.n_steps() {
            let contrib: f64 = tree
                .atoms(k - 1)
                .iter()
                .zip(&phi.values[k - 1])
                .zip(&psi.values[k - 1])
                .map(|((a, f), g)| a.prob * f * g)
                .sum();
            running += contrib * dt;
            let pair = if k == tree.n_steps() {
                tree.atoms(k)
                    .iter()
                    .zip(&jp.terminal.values)
                    .zip(&jq.terminal.values)
                    .map(|((a, f), g)| a.prob * f * g)
                    .sum::<f64>()
            } else {
                tree.atoms(k)
                    .iter()
                    .zip(&jp.process.values[k])
                    .zip(&jq.process.values[k])
                    .map(|((a, f), g)| a.prob * f * g)
                    .sum::<f64>()
            };
            worst = worst.max((pair - running).abs() / (1.0 + running.abs()));
        }
    }
    Ok(CheckEntry::at_most(id, worst, tol, format!("worst relative defect over {n_inputs} pairs, all times")))
}

/// ⟨χ, Aφ⟩ = ⟨A*χ, φ⟩ for the three operators, from the closed-form
/// adjoints (not the matrix transpose).
pub fn check_adjoint_pairing(
    tree: &ScenarioTree,
    n_inputs: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<CheckEntry>> {
    let mut rng = rng_for(seed, "adjoint-pairing");
    let mut entries = Vec::new();
    let mut worst_l: f64 = 0.0;
    let mut worst_j: f64 = 0.0;
    let mut worst_p: f64 = 0.0;
    for _ in 0..n_inputs {
        let chi = random_process(tree, &mut rng);
        let phi = random_process(tree, &mut rng);
        // L* conjugates the right-closed quadrature Lφ + φ·dt
        let lhs = pair_l2(tree, &chi, &op_l(tree, &phi)?.process)?
            + tree.dt() * pair_l2(tree, &chi, &phi)?;
        let rhs = pair_l2(tree, &adjoint_l(tree, &chi)?, &phi)?;
        worst_l = worst_l.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        if tree.model.has_wiener() {
            let lhs = pair_l2(tree, &chi, &op_j(tree, &phi)?.process)?;
            let rhs = pair_l2(tree, &adjoint_j(tree, &chi)?, &phi)?;
            worst_j = worst_j.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
        if tree.model.has_marks() {
            let a = random_marked(tree, &mut rng);
            let lhs = pair_l2(tree, &chi, &op_p(tree, &a)?.process)?;
            let rhs = pair_l2_pi(tree, &adjoint_p(tree, &chi)?, &a)?;
            worst_p = worst_p.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
        }
    }
    entries.push(CheckEntry::at_most("adjoint-pairing-l", worst_l, tol, format!("{n_inputs} random pairs")));
    if tree.model.has_wiener() {
        entries.push(CheckEntry::at_most("adjoint-pairing-j", worst_j, tol, format!("{n_inputs} random pairs")));
    }
    if tree.model.has_marks() {
        entries.push(CheckEntry::at_most("adjoint-pairing-p", worst_p, tol, format!("{n_inputs} random pairs")));
    }
    Ok(entries)
}

/// Clark reconstruction ξ = Mξ + Σλ·Δw and the kernel norm identity
/// ‖λ‖_{N₂} = ‖ξ − Mξ‖₂, on a Wiener-only tree.
pub fn check_clark(tree: &ScenarioTree, n_inputs: usize, seed: u64, tol: f64) -> Result<Vec<CheckEntry>> {
    let mut rng = rng_for(seed, "clark");
    let term = tree.terminal_level();
    let mut worst_recon: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..n_inputs {
        let xi = RandomVariable::new(
            term,
            (0..tree.atoms(term).len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let clark = clark_kernel(tree, &xi)?;
        let rebuilt = reconstruct(tree, &clark)?;
        for (a, b) in rebuilt.terminal.values.iter().zip(&xi.values) {
            worst_recon = worst_recon.max((a - b).abs());
        }
        let lhs = norm_np(tree, &clark.kernel, 2.0)?;
        let centered: f64 = tree
            .atoms(term)
            .iter()
            .zip(&xi.values)
            .map(|(a, v)| a.prob * (v - clark.mean) * (v - clark.mean))
            .sum();
        worst_norm = worst_norm.max((lhs - centered.sqrt()).abs());
    }
    Ok(vec![
        CheckEntry::at_most("clark-reconstruction", worst_recon, tol, format!("{n_inputs} terminal variables")),
        CheckEntry::at_most("clark-norm-identity", worst_norm, tol, format!("{n_inputs} terminal variables")),
    ])
}

/// Structure decomposition θ = −Lχ + Jϰ + Pα + h: exact pointwise
/// identity and exact three-way Pythagoras at the terminal time.
pub fn check_decomposition(
    tree: &ScenarioTree,
    n_inputs: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<CheckEntry>> {
    let mut rng = rng_for(seed, "decomposition");
    let mut worst_identity: f64 = 0.0;
    let mut worst_pyth: f64 = 0.0;
    for _ in 0..n_inputs {
        let chi = random_process(tree, &mut rng);
        let d = theta_decomposition(tree, &chi)?;
        let lchi = op_l(tree, &chi)?;
        let mut rhs = lchi.process.scale(-1.0).add(&d.h);
        let mut mu_sq = 0.0;
        let mut parts_sq = terminal_moment(tree, &d.h_terminal.values, 2.0);
        let mut mu_terminal = d.h_terminal.values.clone();
        if tree.model.has_wiener() {
            let jk = op_j(tree, &d.kappa)?;
            rhs = rhs.add(&jk.process);
            parts_sq += terminal_moment(tree, &jk.terminal.values, 2.0);
            for (m, v) in mu_terminal.iter_mut().zip(&jk.terminal.values) {
                *m += v;
            }
        }
        if tree.model.has_marks() {
            let pa = op_p(tree, &d.alpha)?;
            rhs = rhs.add(&pa.process);
            parts_sq += terminal_moment(tree, &pa.terminal.values, 2.0);
            for (m, v) in mu_terminal.iter_mut().zip(&pa.terminal.values) {
                *m += v;
            }
        }
        for (tl, rl) in d.theta.values.iter().zip(&rhs.values) {
            for (a, b) in tl.iter().zip(rl) {
                worst_identity = worst_identity.max((a - b).abs());
            }
        }
        mu_sq += terminal_moment(tree, &mu_terminal, 2.0);
        worst_pyth = worst_pyth.max((mu_sq - parts_sq).abs() / (1.0 + mu_sq));
    }
    Ok(vec![
        CheckEntry::at_most("decomposition-identity", worst_identity, tol, format!("{n_inputs} inputs, all grid times")),
        CheckEntry::at_most("decomposition-pythagoras", worst_pyth, tol, format!("{n_inputs} inputs, terminal time")),
    ])
}

/// First-order decay of the near-diagonal kernel gap on exact trees
/// n ∈ {4, 8, 16} with χ = w; the fitted order must sit in [0.8, 1.2].
pub fn check_diagonal_order() -> Result<CheckEntry> {
    let mut dts = Vec::new();
    let mut devs = Vec::new();
    for n in [4usize, 8, 16] {
        let tree = ScenarioTree::wiener(n)?;
        let dev = diagonal_identity(&tree, &Process::wiener(&tree))?;
        dts.push(tree.dt());
        devs.push(dev.mean_deviation);
    }
    let order = convergence_order(&dts, &devs)?;
    let passed = (0.8..=1.2).contains(&order);
    Ok(CheckEntry {
        id: "diagonal-order".into(),
        passed,
        observed: order,
        bound: 1.2,
        report_only: false,
        detail: "fitted order of the near-diagonal kernel gap, exact trees n=4,8,16".into(),
    })
}

fn mc_sigma_and_order(
    id_prefix: &str,
    estimates: &[(f64, crate::mc::McEstimate)],
    sigmas: f64,
    detail: &str,
) -> Result<Vec<CheckEntry>> {
    let worst_sigma = estimates.iter().map(|(_, e)| e.sigma_distance()).fold(0.0f64, f64::max);
    let dts: Vec<f64> = estimates.iter().map(|(dt, _)| *dt).collect();
    let vals: Vec<f64> = estimates.iter().map(|(_, e)| e.value).collect();
    let order = convergence_order(&dts, &vals)?;
    Ok(vec![
        CheckEntry::at_most(&format!("{id_prefix}-sigma"), worst_sigma, sigmas, detail.to_string()),
        CheckEntry {
            id: format!("{id_prefix}-order"),
            passed: (0.8..=1.2).contains(&order),
            observed: order,
            bound: 1.2,
            report_only: false,
            detail: format!("fitted order from MC values; {detail}"),
        },
    ])
}

/// Monte Carlo jump-isometry gap at n ∈ {8, 16, 32}: each estimate within
/// `sigmas` standard errors of the exact π²·dt, fitted order in [0.8, 1.2].
pub fn check_mc_poisson(intensity: f64, n_paths: usize, seed: u64, sigmas: f64) -> Result<Vec<CheckEntry>> {
    let mut estimates = Vec::new();
    for n in [8usize, 16, 32] {
        estimates.push((1.0 / n as f64, mc_poisson_gap(n, intensity, n_paths, seed ^ fnv("mc-poisson") ^ n as u64)?));
    }
    mc_sigma_and_order("mc-poisson", &estimates, sigmas, &format!("n=8,16,32, {n_paths} paths, intensity {intensity}"))
}

/// Monte Carlo near-diagonal gap at n ∈ {8, 16, 32} with χ = w.
pub fn check_mc_diagonal(n_paths: usize, seed: u64, sigmas: f64) -> Result<Vec<CheckEntry>> {
    let mut estimates = Vec::new();
    for n in [8usize, 16, 32] {
        estimates.push((1.0 / n as f64, mc_diagonal_deviation(n, n_paths, seed ^ fnv("mc-diagonal") ^ n as u64)?));
    }
    mc_sigma_and_order("mc-diagonal", &estimates, sigmas, &format!("n=8,16,32, {n_paths} paths"))
}

/// Monte Carlo Itô-isometry agreement at n = 16.
pub fn check_mc_wiener(n_paths: usize, seed: u64, sigmas: f64) -> Result<CheckEntry> {
    let est = mc_wiener_isometry(16, n_paths, seed ^ fnv("mc-wiener"))?;
    Ok(CheckEntry::at_most(
        "mc-wiener-sigma",
        est.sigma_distance(),
        sigmas,
        format!("E[(Jw)(1)²] estimate {} vs exact {}, n=16, {n_paths} paths", est.value, est.exact),
    ))
}

fn applicable(check: &str, model: Model) -> bool {
    match check {
        "bound-j" | "ito-isometry" | "bdg-ratio" | "moment-w4" | "polarization" => {
            model.has_wiener()
        }
        "clark" => model == Model::Wiener,
        "bound-p" | "poisson-isometry" | "mc-poisson" => model.has_marks(),
        _ => true,
    }
}

/// Run the configured checks on one tree. Unknown check names are a
/// configuration error; checks not applicable to the model are skipped
/// when the list is empty, and an error when requested explicitly.
pub fn run_suite(config: &SuiteConfig) -> Result<CheckReport> {
    let names: Vec<String> = if config.checks.is_empty() {
        ALL_CHECKS
            .iter()
            .filter(|c| applicable(c, config.model))
            .map(|c| c.to_string())
            .collect()
    } else {
        for c in &config.checks {
            if !ALL_CHECKS.contains(&c.as_str()) {
                return Err(Error::Config {
                    field: "checks".into(),
                    message: format!("unknown check {c:?}; known: {}", ALL_CHECKS.join(", ")),
                });
            }
            if !applicable(c, config.model) {
                return Err(Error::Config {
                    field: "checks".into(),
                    message: format!("check {c:?} does not apply to model {}", config.model.name()),
                });
            }
        }
        config.checks.clone()
    };

    let tree = ScenarioTree::build(config.model, config.n_steps, config.marks.clone(), crate::space::DEFAULT_ATOM_CAP)?;
    let n_inputs = 20;
    // exact-mode checks draw their random inputs from a fixed stream so
    // their reported values are comparable across configs; the config
    // seed drives only Monte Carlo sampling
    let seed = 0x0DDB_A11u64;
    let mc_seed = config.seed;
    let tol = config.tol_exact;

    let mut checks = Vec::new();
    for name in &names {
        match name.as_str() {
            "doob" => {
                for &p in &config.p_values {
                    checks.push(check_doob(&tree, p, n_inputs, seed)?);
                }
            }
            "bound-l" => {
                for &p in &config.p_values {
                    checks.push(check_bound_l(&tree, p, n_inputs, seed)?);
                }
            }
            "bound-j" => checks.push(check_bound_j(&tree, n_inputs, seed)?),
            "bound-p" => checks.push(check_bound_p(&tree, n_inputs, seed)?),
            "ito-isometry" => checks.push(check_ito_isometry(&tree, n_inputs, seed, tol)?),
            "bdg-ratio" => {
                for &p in &config.p_values {
                    if p > 1.0 && (p - 2.0).abs() > 1e-12 {
                        checks.push(check_bdg_ratio(&tree, p, n_inputs, seed)?);
                    }
                }
            }
            "moment-w4" => checks.push(check_moment_w4(&tree, tol)?),
            "poisson-isometry" => checks.extend(check_poisson_isometry(&tree, n_inputs, seed, tol)?),
            "polarization" => checks.push(check_polarization(&tree, n_inputs, seed, tol)?),
            "adjoint-pairing" => checks.extend(check_adjoint_pairing(&tree, n_inputs, seed, tol)?),
            "clark" => checks.extend(check_clark(&tree, n_inputs, seed, tol)?),
            "decomposition" => checks.extend(check_decomposition(&tree, n_inputs, seed, tol)?),
            "diagonal-order" => checks.push(check_diagonal_order()?),
            // fixed intensity 2 so the O(dt) gap clears the MC noise floor;
            // the estimator is tree-free, so the config marks don't apply
            "mc-poisson" => {
                checks.extend(check_mc_poisson(2.0, config.mc_paths, mc_seed, config.mc_sigmas)?)
            }
            "mc-diagonal" => checks.extend(check_mc_diagonal(config.mc_paths, mc_seed, config.mc_sigmas)?),
            "mc-wiener" => checks.push(check_mc_wiener(config.mc_paths, mc_seed, config.mc_sigmas)?),
            other => {
                return Err(Error::Config {
                    field: "checks".into(),
                    message: format!("unknown check {other:?}"),
                })
            }
        }
    }

    for c in &mut checks {
        if config.report_only.iter().any(|p| c.id.starts_with(p.as_str())) {
            c.report_only = true;
        }
    }
    checks.sort_by(|a, b| a.id.cmp(&b.id));

    Ok(CheckReport {
        metadata: ReportMetadata {
            generated_at_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            seed: config.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        checks,
    })
}
