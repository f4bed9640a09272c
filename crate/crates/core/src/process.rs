//! Progressively measurable processes on a scenario tree and the norms
//! and duality pairings of the process spaces.
//!
//! A process holds one value per (time index k, level-k atom) for
//! k = 0..n_steps−1; the value is constant on [t_k, t_{k+1}) and
//! F_{t_k}-measurable by construction. Pairings are weighted by the
//! diagonal Gram form prob·dt (and ·π_i for marked processes).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{RandomVariable, ScenarioTree};

/// Scalar progressively measurable process: values[k][atom].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Process {
    pub values: Vec<Vec<f64>>,
}

/// Mark-indexed process: values[k][atom][mark].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkedProcess {
    pub values: Vec<Vec<Vec<f64>>>,
}

impl Process {
    pub fn zero(tree: &ScenarioTree) -> Self {
        Self {
            values: (0..tree.n_steps()).map(|k| vec![0.0; tree.atoms(k).len()]).collect(),
        }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        Self {
            values: (0..tree.n_steps()).map(|k| vec![c; tree.atoms(k).len()]).collect(),
        }
    }

    /// Build from a function of (level, atom index).
    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            values: (0..tree.n_steps())
                .map(|k| (0..tree.atoms(k).len()).map(|a| f(k, a)).collect())
                .collect(),
        }
    }

    /// The Wiener path w(t_k) restricted to process indices.
    pub fn wiener(tree: &ScenarioTree) -> Self {
        Self::from_fn(tree, |k, a| tree.atoms(k)[a].w)
    }

    /// Deterministic process g(t_k).
    pub fn deterministic(tree: &ScenarioTree, g: impl Fn(f64) -> f64) -> Self {
        Self::from_fn(tree, |k, _| g(tree.grid.t(k)))
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.values.len() != tree.n_steps() {
            return Err(Error::Shape(format!(
                "process has {} levels, tree has {} steps",
                self.values.len(),
                tree.n_steps()
            )));
        }
        for (k, level) in self.values.iter().enumerate() {
            if level.len() != tree.atoms(k).len() {
                return Err(Error::Shape(format!(
                    "process level {k} has {} values, tree level has {} atoms",
                    level.len(),
                    tree.atoms(k).len()
                )));
            }
            if level.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("non-finite value at level {k}")));
            }
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> RandomVariable {
        RandomVariable::new(k, self.values[k].clone())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|l| l.iter().map(|v| c * v).collect()).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }
}

impl MarkedProcess {
    pub fn zero(tree: &ScenarioTree) -> Self {
        let m = tree.marks.len();
        Self {
            values: (0..tree.n_steps())
                .map(|k| vec![vec![0.0; m]; tree.atoms(k).len()])
                .collect(),
        }
    }

    pub fn constant(tree: &ScenarioTree, c: f64) -> Self {
        let m = tree.marks.len();
        Self {
            values: (0..tree.n_steps())
                .map(|k| vec![vec![c; m]; tree.atoms(k).len()])
                .collect(),
        }
    }

    pub fn from_fn(tree: &ScenarioTree, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let m = tree.marks.len();
        Self {
            values: (0..tree.n_steps())
                .map(|k| {
                    (0..tree.atoms(k).len())
                        .map(|a| (0..m).map(|i| f(k, a, i)).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn validate(&self, tree: &ScenarioTree) -> Result<()> {
        if self.values.len() != tree.n_steps() {
            return Err(Error::Shape(format!(
                "marked process has {} levels, tree has {} steps",
                self.values.len(),
                tree.n_steps()
            )));
        }
        let m = tree.marks.len();
        for (k, level) in self.values.iter().enumerate() {
            if level.len() != tree.atoms(k).len() {
                return Err(Error::Shape(format!("marked process level {k} atom count mismatch")));
            }
            for row in level {
                if row.len() != m {
                    return Err(Error::Shape(format!("marked process level {k} mark count mismatch")));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Shape(format!("non-finite value at level {k}")));
                }
            }
        }
        Ok(())
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            values: self
                .values
                .iter()
                .map(|l| l.iter().map(|r| r.iter().map(|v| c * v).collect()).collect())
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(la, lb)| {
                    la.iter()
                        .zip(lb)
                        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
                        .collect()
                })
                .collect(),
        }
    }
}

fn require_p(p: f64, min: f64) -> Result<()> {
    if !(p >= min && p.is_finite()) {
        return Err(Error::Parameter(format!("p must be in [{min}, inf), got {p}")));
    }
    Ok(())
}

/// ‖f‖_p = ( M ∫ |f|^p dt )^{1/p}.
pub fn norm_lp(tree: &ScenarioTree, f: &Process, p: f64) -> Result<f64> {
    require_p(p, 1.0)?;
    f.validate(tree)?;
    let dt = tree.dt();
    let mut acc = 0.0;
    for (k, level) in f.values.iter().enumerate() {
        for (v, atom) in level.iter().zip(tree.atoms(k)) {
            acc += atom.prob * dt * v.abs().powf(p);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// ‖f‖_{N_p} = ( M ( ∫ |f|² dt )^{p/2} )^{1/p}, evaluated pathwise.
pub fn norm_np(tree: &ScenarioTree, f: &Process, p: f64) -> Result<f64> {
    require_p(p, 1.0)?;
    f.validate(tree)?;
    let dt = tree.dt();
    let term = tree.terminal_level();
    let mut acc = 0.0;
    for (i, atom) in tree.atoms(term).iter().enumerate() {
        let path = tree.path_of(i);
        let quad: f64 = (0..tree.n_steps()).map(|k| f.values[k][path[k]].powi(2) * dt).sum();
        acc += atom.prob * quad.powf(p / 2.0);
    }
    Ok(acc.powf(1.0 / p))
}

/// |f|_p = sup_k ( M |f(t_k)|^p )^{1/p}.
pub fn norm_hp(tree: &ScenarioTree, f: &Process, p: f64) -> Result<f64> {
    require_p(p, 1.0)?;
    f.validate(tree)?;
    let mut best: f64 = 0.0;
    for (k, level) in f.values.iter().enumerate() {
        let m: f64 = level
            .iter()
            .zip(tree.atoms(k))
            .map(|(v, atom)| atom.prob * v.abs().powf(p))
            .sum();
        best = best.max(m);
    }
    Ok(best.powf(1.0 / p))
}

/// |f|_p^{(d)} = ( M sup_k |f(t_k)|^p )^{1/p}.
pub fn norm_dhp(tree: &ScenarioTree, f: &Process, p: f64) -> Result<f64> {
    require_p(p, 1.0)?;
    f.validate(tree)?;
    let term = tree.terminal_level();
    let mut acc = 0.0;
    for (i, atom) in tree.atoms(term).iter().enumerate() {
        let path = tree.path_of(i);
        let sup = (0..tree.n_steps())
            .map(|k| f.values[k][path[k]].abs())
            .fold(0.0f64, f64::max);
        acc += atom.prob * sup.powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// Literal transcription of the L_p(Π) norm:
/// ( M ∫ [ Σπ|a|^p + (Σπ a²)^{p/2} ] dt )^{1/p}.
/// For p > 2 the bracket mixes homogeneity degrees and the functional is
/// not absolutely homogeneous; callers should assert the triangle
/// inequality only.
pub fn norm_lp_pi(tree: &ScenarioTree, a: &MarkedProcess, p: f64) -> Result<f64> {
    require_p(p, 2.0)?;
    a.validate(tree)?;
    let dt = tree.dt();
    let mut acc = 0.0;
    for (k, level) in a.values.iter().enumerate() {
        for (row, atom) in level.iter().zip(tree.atoms(k)) {
            let mut pth = 0.0;
            let mut quad = 0.0;
            for (v, mark) in row.iter().zip(&tree.marks.marks) {
                pth += mark.intensity * v.abs().powf(p);
                quad += mark.intensity * v * v;
            }
            acc += atom.prob * dt * (pth + quad.powf(p / 2.0));
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// ⟨f, g⟩ = M ∫ f g dt, the L₂ duality pairing.
pub fn pair_l2(tree: &ScenarioTree, f: &Process, g: &Process) -> Result<f64> {
    f.validate(tree)?;
    g.validate(tree)?;
    let dt = tree.dt();
    let mut acc = 0.0;
    for (k, (lf, lg)) in f.values.iter().zip(&g.values).enumerate() {
        for ((vf, vg), atom) in lf.iter().zip(lg).zip(tree.atoms(k)) {
            acc += atom.prob * dt * vf * vg;
        }
    }
    Ok(acc)
}

/// ⟨a, b⟩ = M ∫ Σ_i π_i a b dt, the L₂(Π) pairing.
pub fn pair_l2_pi(tree: &ScenarioTree, a: &MarkedProcess, b: &MarkedProcess) -> Result<f64> {
    a.validate(tree)?;
    b.validate(tree)?;
    let dt = tree.dt();
    let mut acc = 0.0;
    for (k, (la, lb)) in a.values.iter().zip(&b.values).enumerate() {
        for ((ra, rb), atom) in la.iter().zip(lb).zip(tree.atoms(k)) {
            for ((va, vb), mark) in ra.iter().zip(rb).zip(&tree.marks.marks) {
                acc += atom.prob * dt * mark.intensity * va * vb;
            }
        }
    }
    Ok(acc)
}

/// Diagonal Gram weights prob·dt in (k, atom) basis order.
pub fn process_weights(tree: &ScenarioTree) -> Vec<f64> {
    let dt = tree.dt();
    (0..tree.n_steps())
        .flat_map(|k| tree.atoms(k).iter().map(move |a| a.prob * dt))
        .collect()
}

/// Diagonal Gram weights prob·dt·π_i in (k, atom, mark) basis order.
pub fn marked_weights(tree: &ScenarioTree) -> Vec<f64> {
    let dt = tree.dt();
    let pis: Vec<f64> = tree.marks.marks.iter().map(|m| m.intensity).collect();
    (0..tree.n_steps())
        .flat_map(|k| {
            let pis = pis.clone();
            tree.atoms(k)
                .iter()
                .flat_map(move |a| pis.clone().into_iter().map(move |pi| a.prob * dt * pi))
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Flatten a process into the (k, atom) basis order used by `LinearMap`.
pub fn flatten(f: &Process) -> Vec<f64> {
    f.values.iter().flatten().copied().collect()
}

pub fn unflatten(tree: &ScenarioTree, flat: &[f64]) -> Process {
    let mut values = Vec::with_capacity(tree.n_steps());
    let mut i = 0;
    for k in 0..tree.n_steps() {
        let n = tree.atoms(k).len();
        values.push(flat[i..i + n].to_vec());
        i += n;
    }
    Process { values }
}

pub fn flatten_marked(a: &MarkedProcess) -> Vec<f64> {
    a.values.iter().flatten().flatten().copied().collect()
}

pub fn unflatten_marked(tree: &ScenarioTree, flat: &[f64]) -> MarkedProcess {
    let m = tree.marks.len();
    let mut values = Vec::with_capacity(tree.n_steps());
    let mut i = 0;
    for k in 0..tree.n_steps() {
        let mut level = Vec::with_capacity(tree.atoms(k).len());
        for _ in 0..tree.atoms(k).len() {
            level.push(flat[i..i + m].to_vec());
            i += m;
        }
        values.push(level);
    }
    MarkedProcess { values }
}
