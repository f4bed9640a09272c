//! Closed-form conjugate operators L*, J*, P*, the Gram-weighted matrix
//! transpose oracle, and the structure decompositions relating them.
//!
//! Each adjoint is computed from its explicit representation (tail
//! conditional expectation for L*, tail kernel sums for J* and P*), never
//! from the matrix transpose; the transpose is kept as an independent
//! oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{op_j, op_l, op_p, LinearMap};
use crate::kernel::{extract_k, poisson_column, wiener_column, PoissonWeight};
use crate::process::{MarkedProcess, Process};
use crate::space::{RandomVariable, ScenarioTree};

/// (L*χ)(t_k) = E[ Σ_{j≥k} χ(t_j)·dt | F_{t_k} ], by exact backward
/// recursion.
///
/// The tail includes the current step (j ≥ k), so the output is the exact
/// conjugate of the right-closed quadrature: pair_l2(L*χ, φ) equals
/// pair_l2(χ, Lφ) + dt·pair_l2(χ, φ), exactly. See [`closed_l_matrix`]
/// for the matrix realization of that quadrature.
pub fn adjoint_l(tree: &ScenarioTree, chi: &Process) -> Result<Process> {
    chi.validate(tree)?;
    let n = tree.n_steps();
    let dt = tree.dt();
    let mut out = Process::zero(tree);
    let mut tail: Vec<f64> = chi.values[n - 1].iter().map(|v| v * dt).collect();
    out.values[n - 1] = tail.clone();
    for k in (0..n - 1).rev() {
        let down = tree.cond_one(k + 1, &tail);
        tail = chi.values[k].iter().zip(&down).map(|(v, d)| v * dt + d).collect();
        out.values[k] = tail.clone();
    }
    Ok(out)
}

/// The martingale/anti-derivative split L*χ = μ − Lχ with
/// μ(t_k) = E[ ∫₀¹ χ ds | F_{t_k} ].
pub fn adjoint_l_decomposition(tree: &ScenarioTree, chi: &Process) -> Result<(Process, Process)> {
    chi.validate(tree)?;
    let total = op_l(tree, chi)?;
    let mut mu = Process::zero(tree);
    let mut vals = total.terminal.values.clone();
    for k in (0..tree.n_steps()).rev() {
        vals = tree.cond_one(k + 1, &vals);
        mu.values[k] = vals.clone();
    }
    let minus_l = total.process.scale(-1.0);
    Ok((mu, minus_l))
}

/// (J*χ)(t_j) = Σ_{k>j} λ(t_k, s_j)·dt with λ the Clark column of each
/// χ(t_k) (the L₂(w)-part kernel of the representation theorem).
pub fn adjoint_j(tree: &ScenarioTree, chi: &Process) -> Result<Process> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let dt = tree.dt();
    let mut out = Process::zero(tree);
    for k in 1..tree.n_steps() {
        let (_, col) = wiener_column(tree, &chi.at(k));
        for (j, lam) in col.iter().enumerate() {
            for (o, v) in out.values[j].iter_mut().zip(lam) {
                *o += v * dt;
            }
        }
    }
    Ok(out)
}

/// (P*χ)(t_j, y_i) = Σ_{k>j} μ(t_k, s_j, y_i)·dt with μ extracted against
/// the compensator weight π_i·dt, which makes the duality pairing
/// ⟨χ, P a⟩ = ⟨P*χ, a⟩_Π exact on the tree.
pub fn adjoint_p(tree: &ScenarioTree, chi: &Process) -> Result<MarkedProcess> {
    if !tree.model.has_marks() {
        return Err(Error::Model { required: "poisson", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let dt = tree.dt();
    let mut out = MarkedProcess::zero(tree);
    for k in 1..tree.n_steps() {
        let (_, col) = poisson_column(tree, &chi.at(k), PoissonWeight::Compensator);
        for (j, mu) in col.iter().enumerate() {
            for (orow, vrow) in out.values[j].iter_mut().zip(mu) {
                for (o, v) in orow.iter_mut().zip(vrow) {
                    *o += v * dt;
                }
            }
        }
    }
    Ok(out)
}

/// Matrix of the right-closed running integral f ↦ Lf + f·dt (the
/// quadrature of ∫₀^t that includes the step ending at t). Its
/// Gram-transpose conjugate is exactly [`adjoint_l`].
pub fn closed_l_matrix(tree: &ScenarioTree) -> Result<LinearMap> {
    let mut m = crate::integrate::assemble_matrix(tree, crate::integrate::OpTag::L)?;
    let dt = tree.dt();
    for i in 0..m.rows {
        m.data[i * m.cols + i] += dt;
    }
    Ok(m)
}

/// Exact conjugate with respect to the weighted pairings:
/// A* = G_dom⁻¹ · Aᵀ · G_cod. Involutive by construction.
pub fn adjoint_oracle(map: &LinearMap) -> LinearMap {
    let mut data = vec![0.0; map.rows * map.cols];
    for r in 0..map.cols {
        for c in 0..map.rows {
            data[r * map.rows + c] = map.data[c * map.cols + r] * map.cod_gram[c] / map.dom_gram[r];
        }
    }
    LinearMap {
        rows: map.cols,
        cols: map.rows,
        data,
        dom_gram: map.cod_gram.clone(),
        cod_gram: map.dom_gram.clone(),
    }
}

/// The structure decomposition θ = −Lχ + Jϰ + Pα + h with θ = L*χ,
/// ϰ = J*χ, h a martingale orthogonal to both integral images.
///
/// The Poisson coefficient α is extracted against the exact per-step
/// variance q(1−q) rather than the compensator π·dt: that is the
/// orthogonal projection on the tree, so the residual h is exactly
/// orthogonal to the integral images; the two weights agree as dt → 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaDecomposition {
    pub theta: Process,
    pub kappa: Process,
    pub alpha: MarkedProcess,
    pub h: Process,
    pub h_terminal: RandomVariable,
}

pub fn theta_decomposition(tree: &ScenarioTree, chi: &Process) -> Result<ThetaDecomposition> {
    chi.validate(tree)?;
    let theta = adjoint_l(tree, chi)?;
    let (mu, _) = adjoint_l_decomposition(tree, chi)?;
    let mu_terminal = op_l(tree, chi)?.terminal;

    let kappa = if tree.model.has_wiener() {
        adjoint_j(tree, chi)?
    } else {
        Process::zero(tree)
    };

    let dt = tree.dt();
    let alpha = if tree.model.has_marks() {
        let mut out = MarkedProcess::zero(tree);
        for k in 1..tree.n_steps() {
            let (_, col) = poisson_column(tree, &chi.at(k), PoissonWeight::Variance);
            for (j, mucol) in col.iter().enumerate() {
                for (orow, vrow) in out.values[j].iter_mut().zip(mucol) {
                    for (o, v) in orow.iter_mut().zip(vrow) {
                        *o += v * dt;
                    }
                }
            }
        }
        out
    } else {
        MarkedProcess::zero(tree)
    };

    let mut h = mu;
    let mut h_terminal = mu_terminal;
    if tree.model.has_wiener() {
        let jk = op_j(tree, &kappa)?;
        h = h.sub(&jk.process);
        for (a, b) in h_terminal.values.iter_mut().zip(&jk.terminal.values) {
            *a -= b;
        }
    }
    if tree.model.has_marks() {
        let pa = op_p(tree, &alpha)?;
        h = h.sub(&pa.process);
        for (a, b) in h_terminal.values.iter_mut().zip(&pa.terminal.values) {
            *a -= b;
        }
    }

    Ok(ThetaDecomposition { theta, kappa, alpha, h, h_terminal })
}

/// Near-diagonal comparison for the kernel of θ = L*χ: its value at
/// (t_{j+1}, s_j) against E[J*χ(t_{j+1}) | F_{t_j}].
/// In the continuous limit the kernel's diagonal coincides with J*χ; one
/// grid step off the diagonal the discrete gap is O(dt).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagonalDeviation {
    pub max_deviation: f64,
    pub mean_deviation: f64,
}

pub fn diagonal_identity(tree: &ScenarioTree, chi: &Process) -> Result<DiagonalDeviation> {
    if !tree.model.has_wiener() {
        return Err(Error::Model { required: "wiener", actual: tree.model.name() });
    }
    chi.validate(tree)?;
    let theta = adjoint_l(tree, chi)?;
    let (_, lam_theta) = extract_k(tree, &theta)?;
    let kappa = adjoint_j(tree, chi)?;
    let mut max_dev: f64 = 0.0;
    let mut sum = 0.0;
    for j in 0..tree.n_steps() - 1 {
        let near_diag = &lam_theta.values[j + 1][j];
        let reference = tree.cond_one(j + 1, &kappa.values[j + 1]);
        for ((nd, r), atom) in near_diag.iter().zip(&reference).zip(tree.atoms(j)) {
            let dev = (nd - r).abs();
            max_dev = max_dev.max(dev);
            sum += atom.prob * dev;
        }
    }
    let mean_deviation = sum / (tree.n_steps() - 1).max(1) as f64;
    Ok(DiagonalDeviation { max_deviation: max_dev, mean_deviation })
}
