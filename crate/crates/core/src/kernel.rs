//! Two-parameter predictable kernels, the lifted integrators J̃ and P̃,
//! Clark kernel extraction, the per-time representation operator K, and
//! the orthogonal projections onto the stochastic-integral subspaces.
//!
//! On the finite tree the basis functions 1_{atom}·Δw_j (and
//! 1_{atom}·(flag_i − q_i)) are mutually orthogonal under E[·], so every
//! projection reduces to diagonal normal equations: one conditional
//! expectation per coefficient, no linear solve.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::Process;
use crate::space::{RandomVariable, ScenarioTree};

/// Two-parameter kernel λ(t_k, s_j, ω): values[k][j][atom at level j],
/// defined for j < k only (strict lower triangle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel2 {
    pub values: Vec<Vec<Vec<f64>>>,
}

/// Mark-indexed kernel μ(t_k, s_j, ω, y): values[k][j][atom][mark].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedKernel2 {
    pub values: Vec<Vec<Vec<Vec<f64>>>>,
}

impl Kernel2 {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Self {
            values: (0..tree.n_steps())
                .map(|k| (0..k).map(|j| vec![0.0; tree.atoms(j).len()]).collect())
                .collect(),
        }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        Self {
            values: (0..tree.n_steps())
                .map(|k| {
                    (0..k)
                        .map(|j| (0..tree.atoms(j).len()).map(|b| f(k, j, b)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self::from_fn(tree, |_, _, _| c)
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|k| k.iter().map(|j| j.iter().map(|v| c * v).collect()).collect())
                .collect(),
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.values.len() != tree.n_steps() {
            return Err(Error::Shape("kernel first index must run over 0..n_steps".into()));
        }
        for (k, cols) in self.values.iter().enumerate() {
            if cols.len() != k {
                return Err(Error::Shape(format!(
                    "kernel at t index {k} must have {k} second-argument slots"
                )));
            }
            for (j, col) in cols.iter().enumerate() {
                if col.len() != tree.atoms(j).len() {
                    return Err(Error::Shape(format!("kernel ({k},{j}) atom count mismatch")));
                }
            }
        }
        Ok(())
    }
}

impl MarkedKernel2 {
    pub fn zero(tree: &ScenarioTree) -> Self {
        let m = tree.marks.len();
        Self {
            values: (0..tree.n_steps())
                .map(|k| (0..k).map(|j| vec![vec![0.0; m]; tree.atoms(j).len()]).collect())
                .collect(),
        }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let m = tree.marks.len();
        Self {
            values: (0..tree.n_steps())
                .map(|k| {
                    (0..k)
                        .map(|j| {
                            (0..tree.atoms(j).len())
                                .map(|b| (0..m).map(|i| f(k, j, b, i)).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self::from_fn(tree, |_, _, _, _| c)
    }
}

/// Clark decomposition of a random variable: ξ = mean + Σ_j λ(t_j)·Δw_j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClarkDecomposition {
    pub mean: f64,
    /// Kernel λ as a process; entries at indices ≥ the source level are zero.
    pub kernel: Process,
}

/// One backward step of kernel extraction: given E[ξ | F_{level}] on the
/// level's atoms, return the Wiener coefficient per parent atom and the
/// conditional expectation one level down.
fn wiener_step(tree: &ScenarioTree, level: usize, vals: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dt = tree.dt();
    let parents = tree.atoms(level - 1);
    let mut lam = vec![0.0; parents.len()];
    let mut cond = vec![0.0; parents.len()];
    for (atom, v) in tree.atoms(level).iter().zip(vals) {
        lam[atom.parent] += atom.prob * v * atom.dw;
        cond[atom.parent] += atom.prob * v;
    }
    for ((l, c), p) in lam.iter_mut().zip(cond.iter_mut()).zip(parents) {
        *l /= p.prob * dt;
        *c /= p.prob;
    }
    (lam, cond)
}

/// Normalization of the Poisson coefficient extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoissonWeight {
    /// π_i·dt — the compensator mass; makes the adjoint pairing-exact.
    Compensator,
    /// q_i(1−q_i) — the exact discrete variance; gives the orthogonal
    /// projection onto the P̃ image. Differs from `Compensator` by a
    /// factor (1−q_i), an O(dt) discrepancy.
    Variance,
}

fn poisson_step(
    tree: &ScenarioTree,
    level: usize,
    vals: &[f64],
    weight: PoissonWeight,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let dt = tree.dt();
    let m = tree.marks.len();
    let parents = tree.atoms(level - 1);
    let mut mu = vec![vec![0.0; m]; parents.len()];
    let mut cond = vec![0.0; parents.len()];
    for (ai, (atom, v)) in tree.atoms(level).iter().zip(vals).enumerate() {
        for i in 0..m {
            mu[atom.parent][i] += atom.prob * v * tree.jump_increment(level, ai, i);
        }
        cond[atom.parent] += atom.prob * v;
    }
    for ((row, c), p) in mu.iter_mut().zip(cond.iter_mut()).zip(parents) {
        for (i, e) in row.iter_mut().enumerate() {
            let q = tree.q(i);
            let w = match weight {
                PoissonWeight::Compensator => tree.marks.marks[i].intensity * dt,
                PoissonWeight::Variance => q * (1.0 - q),
            };
            *e /= p.prob * w;
        }
        *c /= p.prob;
    }
    (mu, cond)
}

/// Full backward column for one random variable: coefficients for every
/// j < level(x) plus the mean. Works on any tree with a Wiener driver.
pub(crate) fn wiener_column(tree: &ScenarioTree, x: &RandomVariable) -> (f64, Vec<Vec<f64>>) {
    let mut vals = x.values.clone();
    let mut col: Vec<Vec<f64>> = vec![Vec::new(); x.level];
    for j in (0..x.level).rev() {
        let (lam, cond) = wiener_step(tree, j + 1, &vals);
        col[j] = lam;
        vals = cond;
    }
    (vals[0], col)
}

pub(crate) fn poisson_column(
    tree: &ScenarioTree,
    x: &RandomVariable,
    weight: PoissonWeight,
) -> (f64, Vec<Vec<Vec<f64>>>) {
    let mut vals = x.values.clone();
    let mut col: Vec<Vec<Vec<f64>>> = vec![Vec::new(); x.level];
    for j in (0..x.level).rev() {
        let (mu, cond) = poisson_step(tree, j + 1, &vals, weight);
        col[j] = mu;
        vals = cond;
    }
    (vals[0], col)
}

fn require_wiener_only(tree: &ScenarioTree) -> Result<()> {
    if tree.model != crate::space::Model::Wiener {
        return Err(Error::Model { required: "wiener-only", actual: tree.model.name() });
    }
    Ok(())
}

/// Clark–Itô kernel of a terminal variable on a Wiener-only tree:
/// ξ = Mξ + Σ_j λ(t_j)·Δw_j with λ(t_j) = E[μ(t_{j+1})·Δw_j | F_{t_j}]/dt,
/// μ the martingale E[ξ | F_·]. Exact on the binary tree.
pub fn clark_kernel(tree: &ScenarioTree, xi: &RandomVariable) -> Result<ClarkDecomposition> {
    require_wiener_only(tree)?;
    if xi.level != tree.terminal_level() {
        return Err(Error::Shape(format!(
            "clark_kernel expects a terminal-level variable, got level {}",
            xi.level
        )));
    }
    if xi.values.len() != tree.atoms(xi.level).len() {
        return Err(Error::Shape("variable atom count mismatch".into()));
    }
    let (mean, col) = wiener_column(tree, xi);
    let mut kernel = Process::zero(tree);
    for (j, lam) in col.into_iter().enumerate() {
        kernel.values[j] = lam;
    }
    Ok(ClarkDecomposition { mean, kernel })
}

/// Representation of a martingale process: μ(t_k) = Mμ + Σ_{j<k} λ·Δw_j.
pub fn martingale_representation(
    tree: &ScenarioTree,
    mu: &Process,
    tol: f64,
) -> Result<ClarkDecomposition> {
    require_wiener_only(tree)?;
    let (ok, defect) = crate::integrate::is_martingale(tree, mu, tol)?;
    if !ok {
        return Err(Error::MartingaleDefect { defect });
    }
    let last = tree.n_steps() - 1;
    let (mean, col) = wiener_column(tree, &mu.at(last));
    let mut kernel = Process::zero(tree);
    for (j, lam) in col.into_iter().enumerate() {
        kernel.values[j] = lam;
    }
    Ok(ClarkDecomposition { mean, kernel })
}

/// Rebuild the partial sums mean + Σ_{j<k} λ·Δw_j as an `Integral`.
pub fn reconstruct(tree: &ScenarioTree, clark: &ClarkDecomposition) -> Result<crate::integrate::Integral> {
    let mut out = crate::integrate::op_j(tree, &clark.kernel)?;
    for level in out.process.values.iter_mut() {
        for v in level.iter_mut() {
            *v += clark.mean;
        }
    }
    for v in out.terminal.values.iter_mut() {
        *v += clark.mean;
    }
    Ok(out)
}

/// (J̃ λ)(t_k) = Σ_{j<k} λ(t_k, s_j)·Δw_j — an Itô integral per frozen
/// first argument.
pub fn op_jtilde(tree: &ScenarioTree, lambda: &Kernel2) -> Result<Process> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    lambda.validate(tree)?;
    let mut out = Process::zero(tree);
    for k in 0..tree.n_steps() {
        // forward accumulation of the integrand λ(t_k, ·) up to level k
        let mut vals = vec![0.0; 1];
        for j in 0..k {
            let integrand = &lambda.values[k][j];
            vals = tree
                .atoms(j + 1)
                .iter()
                .map(|atom| vals[atom.parent] + integrand[atom.parent] * atom.dw)
                .collect();
        }
        out.values[k] = vals;
    }
    Ok(out)
}

/// (P̃ μ)(t_k) = Σ_{j<k} Σ_i μ(t_k, s_j, y_i)·(flag − q_i).
pub fn op_ptilde(tree: &ScenarioTree, mu: &MarkedKernel2) -> Result<Process> {
    if !tree.model.has_marks() {
        return Err(Error::Model { required: "poisson", actual: tree.model.name() });
    }
    let m = tree.marks.len();
    let mut out = Process::zero(tree);
    for k in 0..tree.n_steps() {
        let mut vals = vec![0.0; 1];
        for j in 0..k {
            let integrand = &mu.values[k][j];
            vals = tree
                .atoms(j + 1)
                .iter()
                .enumerate()
                .map(|(c, atom)| {
                    let jump: f64 = (0..m)
                        .map(|i| integrand[atom.parent][i] * tree.jump_increment(j + 1, c, i))
                        .sum();
                    vals[atom.parent] + jump
                })
                .collect();
        }
        out.values[k] = vals;
    }
    Ok(out)
}

/// Per-time Clark extraction: χ(t_k) = Mχ(t_k) + (J̃ λ)(t_k) with each
/// time column extracted independently. Exact on Wiener-only trees.
pub fn extract_k(tree: &ScenarioTree, chi: &Process) -> Result<(Vec<f64>, Kernel2)> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let mut means = Vec::with_capacity(tree.n_steps());
    let mut kernel = Kernel2::zero(tree);
    for k in 0..tree.n_steps() {
        let (mean, col) = wiener_column(tree, &chi.at(k));
        means.push(mean);
        kernel.values[k] = col;
    }
    Ok((means, kernel))
}

/// |||λ|||_r = ( M ( Σ_k Σ_{j<k} λ² dt² )^{r/2} )^{1/r}, the pathwise
/// double-integral norm over the strict lower triangle.
pub fn kernel_norm(tree: &ScenarioTree, lambda: &Kernel2, r: f64) -> Result<f64> {
    if !(r > 1.0 && r.is_finite()) {
        return Err(Error::Parameter(format!("r must be in (1, inf), got {r}")));
    }
    lambda.validate(tree)?;
    let dt2 = tree.dt() * tree.dt();
    let term = tree.terminal_level();
    let mut acc = 0.0;
    for (i, atom) in tree.atoms(term).iter().enumerate() {
        let path = tree.path_of(i);
        let mut quad = 0.0;
        for cols in &lambda.values {
            for (j, col) in cols.iter().enumerate() {
                let v = col[path[j]];
                quad += v * v * dt2;
            }
        }
        acc += atom.prob * quad.powf(r / 2.0);
    }
    Ok(acc.powf(1.0 / r))
}

/// Orthogonal projection of χ onto the image of J̃ (the span of
/// mean-zero Itô integrals), with the residual.
pub fn project_l2w(tree: &ScenarioTree, chi: &Process) -> Result<(Process, Process)> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let (_, kernel) = extract_k(tree, chi)?;
    let proj = op_jtilde(tree, &kernel)?;
    Ok((proj.clone(), chi.sub(&proj)))
}

/// Orthogonal projection of χ onto the image of P̃, with the residual.
pub fn project_l2nu(tree: &ScenarioTree, chi: &Process) -> Result<(Process, Process)> {
    if !tree.model.has_marks() {
        return Err(Error::Model { required: "poisson", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let mut kernel = MarkedKernel2::zero(tree);
    for k in 0..tree.n_steps() {
        let (_, col) = poisson_column(tree, &chi.at(k), PoissonWeight::Variance);
        kernel.values[k] = col;
    }
    let proj = op_ptilde(tree, &kernel)?;
    Ok((proj.clone(), chi.sub(&proj)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{norm_lp, norm_np, pair_l2, MarkedProcess};
    use crate::space::MarkSet;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_rv(tree: &ScenarioTree, level: usize, seed: u64) -> RandomVariable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        RandomVariable::new(
            level,
            (0..tree.atoms(level).len()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    fn random_process(tree: &ScenarioTree, seed: u64) -> Process {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Process::from_fn(tree, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn clark_of_terminal_wiener_is_one() {
        let t = ScenarioTree::wiener(4).unwrap();
        let d = clark_kernel(&t, &t.terminal_wiener()).unwrap();
        assert!(close(d.mean, 0.0, 1e-13));
        for level in &d.kernel.values {
            for v in level {
                assert!(close(*v, 1.0, 1e-12));
            }
        }
    }

    #[test]
    fn clark_of_constant_is_zero_kernel() {
        let t = ScenarioTree::wiener(3).unwrap();
        let c = RandomVariable::new(3, vec![2.5; t.atoms(3).len()]);
        let d = clark_kernel(&t, &c).unwrap();
        assert!(close(d.mean, 2.5, 1e-13));
        for level in &d.kernel.values {
            for v in level {
                assert!(close(*v, 0.0, 1e-13));
            }
        }
    }

    #[test]
    fn clark_of_w_squared_is_two_w() {
        let t = ScenarioTree::wiener(6).unwrap();
        let w1 = t.terminal_wiener();
        let xi = RandomVariable::new(6, w1.values.iter().map(|v| v * v).collect());
        let d = clark_kernel(&t, &xi).unwrap();
        assert!(close(d.mean, 1.0, 1e-12));
        for (j, level) in d.kernel.values.iter().enumerate() {
            for (v, atom) in level.iter().zip(t.atoms(j)) {
                assert!(close(*v, 2.0 * atom.w, 1e-12), "{v} vs {}", 2.0 * atom.w);
            }
        }
    }

    #[test]
    fn clark_reconstruction_and_isometry() {
        let t = ScenarioTree::wiener(6).unwrap();
        for seed in 0..10 {
            let xi = random_rv(&t, 6, 900 + seed);
            let d = clark_kernel(&t, &xi).unwrap();
            let rec = reconstruct(&t, &d).unwrap();
            for (a, b) in rec.terminal.values.iter().zip(&xi.values) {
                assert!(close(*a, *b, 1e-12));
            }
            // ‖λ‖_{N₂} = ‖ξ − Mξ‖₂
            let n2 = norm_np(&t, &d.kernel, 2.0).unwrap();
            let var: f64 = xi
                .values
                .iter()
                .zip(t.atoms(6))
                .map(|(v, a)| a.prob * (v - d.mean).powi(2))
                .sum();
            assert!(close(n2, var.sqrt(), 1e-12));
        }
    }

    #[test]
    fn clark_rejects_non_wiener_trees() {
        let t = ScenarioTree::joint(2, MarkSet::single("a", 0.5)).unwrap();
        let xi = random_rv(&t, 2, 1);
        assert!(matches!(clark_kernel(&t, &xi), Err(Error::Model { .. })));
    }

    #[test]
    fn representation_of_w_and_of_conditional_square() {
        let t = ScenarioTree::wiener(5).unwrap();
        let w = Process::wiener(&t);
        let d = martingale_representation(&t, &w, 1e-12).unwrap();
        assert!(close(d.mean, 0.0, 1e-13));
        for j in 0..4 {
            for v in &d.kernel.values[j] {
                assert!(close(*v, 1.0, 1e-12));
            }
        }

        // μ(t_k) = E[w(1)²|F_k] = w(t_k)² + (1 − t_k) → λ = 2w
        let mu = Process::from_fn(&t, |k, a| {
            let w = t.atoms(k)[a].w;
            w * w + (1.0 - t.grid.t(k))
        });
        let d2 = martingale_representation(&t, &mu, 1e-12).unwrap();
        assert!(close(d2.mean, 1.0, 1e-12));
        for j in 0..4 {
            for (v, atom) in d2.kernel.values[j].iter().zip(t.atoms(j)) {
                assert!(close(*v, 2.0 * atom.w, 1e-12));
            }
        }
        // reconstruction at every index
        let rec = reconstruct(&t, &d2).unwrap();
        for k in 0..5 {
            for (a, b) in rec.process.values[k].iter().zip(&mu.values[k]) {
                assert!(close(*a, *b, 1e-12));
            }
        }
    }

    #[test]
    fn representation_rejects_non_martingale() {
        let t = ScenarioTree::wiener(3).unwrap();
        let drift = Process::deterministic(&t, |time| time);
        let err = martingale_representation(&t, &drift, 1e-12).unwrap_err();
        assert!(matches!(err, Error::MartingaleDefect { .. }));
    }

    #[test]
    fn jtilde_constant_kernel_gives_w() {
        let t = ScenarioTree::wiener(5).unwrap();
        let lam = Kernel2::constant(&t, 1.0);
        let out = op_jtilde(&t, &lam).unwrap();
        for k in 0..5 {
            for (v, atom) in out.values[k].iter().zip(t.atoms(k)) {
                assert!(close(*v, atom.w, 1e-12));
            }
        }
        let zero = op_jtilde(&t, &Kernel2::zero(&t)).unwrap();
        assert!(zero.values.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn jtilde_time_weighted_kernel() {
        // λ(t,s) = t → (J̃λ)(t_k) = t_k·w(t_k)
        let t = ScenarioTree::wiener(4).unwrap();
        let lam = Kernel2::from_fn(&t, |k, _, _| t.grid.t(k));
        let out = op_jtilde(&t, &lam).unwrap();
        for k in 0..4 {
            for (v, atom) in out.values[k].iter().zip(t.atoms(k)) {
                assert!(close(*v, t.grid.t(k) * atom.w, 1e-12));
            }
        }
    }

    #[test]
    fn ptilde_constant_kernel_is_compensated_count() {
        let t = ScenarioTree::poisson(4, MarkSet::single("a", 0.5)).unwrap();
        let mu = MarkedKernel2::constant(&t, 1.0);
        let out = op_ptilde(&t, &mu).unwrap();
        let one = MarkedProcess::constant(&t, 1.0);
        let direct = crate::integrate::op_p(&t, &one).unwrap().process;
        for k in 0..4 {
            for (a, b) in out.values[k].iter().zip(&direct.values[k]) {
                assert!(close(*a, *b, 1e-13));
            }
        }
    }

    #[test]
    fn ptilde_discrete_isometry() {
        let t = ScenarioTree::poisson(4, MarkSet::single("a", 0.6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mu = MarkedKernel2::from_fn(&t, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let out = op_ptilde(&t, &mu).unwrap();
        let lhs = norm_lp(&t, &out, 2.0).unwrap().powi(2);
        // Σ prob·dt·Σ_j Σ_i μ²·q(1−q), expectation over the level-j atom
        let q = t.q(0);
        let dt = t.dt();
        let mut rhs = 0.0;
        for (k, cols) in mu.values.iter().enumerate() {
            let _ = k;
            for (j, col) in cols.iter().enumerate() {
                for (row, atom) in col.iter().zip(t.atoms(j)) {
                    rhs += dt * atom.prob * row[0] * row[0] * q * (1.0 - q);
                }
            }
        }
        assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn extract_k_on_known_processes() {
        let t = ScenarioTree::wiener(5).unwrap();
        // deterministic process → zero kernel, mean = g(t)
        let g = Process::deterministic(&t, |time| 3.0 * time - 1.0);
        let (means, kernel) = extract_k(&t, &g).unwrap();
        for (k, m) in means.iter().enumerate() {
            assert!(close(*m, 3.0 * t.grid.t(k) - 1.0, 1e-13));
        }
        assert!(kernel.values.iter().flatten().flatten().all(|v| v.abs() < 1e-13));

        // χ = w → λ ≡ 1
        let w = Process::wiener(&t);
        let (means_w, kernel_w) = extract_k(&t, &w).unwrap();
        for m in &means_w {
            assert!(close(*m, 0.0, 1e-13));
        }
        for cols in &kernel_w.values {
            for col in cols {
                for v in col {
                    assert!(close(*v, 1.0, 1e-12));
                }
            }
        }

        // χ(t) = w(t)² → λ(t,s) = 2w(s), mean(t) = t
        let wsq = Process::from_fn(&t, |k, a| t.atoms(k)[a].w.powi(2));
        let (means_sq, kernel_sq) = extract_k(&t, &wsq).unwrap();
        for (k, m) in means_sq.iter().enumerate() {
            assert!(close(*m, t.grid.t(k), 1e-12));
        }
        for cols in &kernel_sq.values {
            for (j, col) in cols.iter().enumerate() {
                for (v, atom) in col.iter().zip(t.atoms(j)) {
                    assert!(close(*v, 2.0 * atom.w, 1e-12));
                }
            }
        }
    }

    #[test]
    fn extract_k_reconstruction_exact() {
        let t = ScenarioTree::wiener(5).unwrap();
        let chi = random_process(&t, 301);
        let (means, kernel) = extract_k(&t, &chi).unwrap();
        let jt = op_jtilde(&t, &kernel).unwrap();
        for k in 0..5 {
            for (a, b) in chi.values[k].iter().zip(&jt.values[k]) {
                assert!(close(*a, means[k] + b, 1e-12));
            }
        }
    }

    #[test]
    fn kernel_norm_counts_lower_triangle() {
        let t = ScenarioTree::wiener(5).unwrap();
        let lam = Kernel2::constant(&t, 1.0);
        let n = 5.0;
        let expected = (t.dt() * t.dt() * n * (n - 1.0) / 2.0).sqrt();
        assert!(close(kernel_norm(&t, &lam, 2.0).unwrap(), expected, 1e-12));
        assert_eq!(kernel_norm(&t, &Kernel2::zero(&t), 2.0).unwrap(), 0.0);
        // homogeneity
        let f = kernel_norm(&t, &lam.scale(-3.0), 3.0).unwrap();
        assert!(close(f, 3.0 * kernel_norm(&t, &lam, 3.0).unwrap(), 1e-12));
        assert!(kernel_norm(&t, &lam, 1.0).is_err());
    }

    #[test]
    fn jtilde_isometry_at_r2() {
        let t = ScenarioTree::wiener(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let lam = Kernel2::from_fn(&t, |_, _, _| rng.gen_range(-1.0..1.0));
        let lhs = norm_lp(&t, &op_jtilde(&t, &lam).unwrap(), 2.0).unwrap();
        let rhs = kernel_norm(&t, &lam, 2.0).unwrap();
        assert!(close(lhs, rhs, 1e-12));
    }

    #[test]
    fn projection_w_splits_orthogonally() {
        let t = ScenarioTree::wiener(4).unwrap();
        let chi = random_process(&t, 401);
        let (proj, resid) = project_l2w(&t, &chi).unwrap();
        let cross = pair_l2(&t, &proj, &resid).unwrap();
        assert!(close(cross, 0.0, 1e-12));
        let total = norm_lp(&t, &chi, 2.0).unwrap().powi(2);
        let parts = norm_lp(&t, &proj, 2.0).unwrap().powi(2)
            + norm_lp(&t, &resid, 2.0).unwrap().powi(2);
        assert!(close(total, parts, 1e-10));

        // deterministic χ is orthogonal to all mean-zero Itô images
        let det = Process::deterministic(&t, |time| 1.0 + time);
        let (pd, rd) = project_l2w(&t, &det).unwrap();
        assert!(pd.values.iter().flatten().all(|v| v.abs() < 1e-13));
        for k in 0..4 {
            for (a, b) in rd.values[k].iter().zip(&det.values[k]) {
                assert!(close(*a, *b, 1e-13));
            }
        }

        // χ already in the image → zero residual
        let mut rng = ChaCha8Rng::seed_from_u64(66);
        let lam = Kernel2::from_fn(&t, |_, _, _| rng.gen_range(-1.0..1.0));
        let inside = op_jtilde(&t, &lam).unwrap();
        let (_, r2) = project_l2w(&t, &inside).unwrap();
        assert!(r2.values.iter().flatten().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn projection_nu_on_joint_tree() {
        let t = ScenarioTree::joint(3, MarkSet::single("a", 0.5)).unwrap();
        let chi = random_process(&t, 402);
        let (proj, resid) = project_l2nu(&t, &chi).unwrap();
        let cross = pair_l2(&t, &proj, &resid).unwrap();
        assert!(close(cross, 0.0, 1e-12));

        // images of J̃ and P̃ are orthogonal: project a P̃ image onto w and back
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let mu = MarkedKernel2::from_fn(&t, |_, _, _, _| rng.gen_range(-1.0..1.0));
        let in_nu = op_ptilde(&t, &mu).unwrap();
        let (pw, _) = project_l2w(&t, &in_nu).unwrap();
        assert!(pw.values.iter().flatten().all(|v| v.abs() < 1e-12));
        let (_, rnu) = project_l2nu(&t, &in_nu).unwrap();
        assert!(rnu.values.iter().flatten().all(|v| v.abs() < 1e-12));
    }
}
