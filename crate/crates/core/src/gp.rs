//! Geometric programs in posynomial form, solved in the log domain with a
//! log-barrier interior-point method and a phase-1 feasibility search.
//!
//! A problem is `min p_0(x)` subject to `p_i(x) <= 1`, `x > 0`, with every
//! `p_i` a posynomial. With `y = log x` each `log p_i(e^y)` is a convex
//! log-sum-exp of affine functions, which is what the solver works on.

use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// `coef * prod_j x_j^{a_j}` with sparse exponents.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coef: f64,
    pub exponents: Vec<(usize, f64)>,
}

impl Monomial {
    pub fn new(coef: f64, exponents: &[(usize, f64)]) -> Self {
        Monomial {
            coef,
            exponents: exponents.to_vec(),
        }
    }

    pub fn constant(coef: f64) -> Self {
        Monomial {
            coef,
            exponents: Vec::new(),
        }
    }

    /// `x_j`.
    pub fn var(j: usize) -> Self {
        Monomial::new(1.0, &[(j, 1.0)])
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.exponents.iter().fold(self.coef, |acc, &(j, a)| acc * x[j].powf(a))
    }

    /// Product of two monomials.
    pub fn times(&self, o: &Monomial) -> Monomial {
        let mut exponents = self.exponents.clone();
        exponents.extend_from_slice(&o.exponents);
        Monomial {
            coef: self.coef * o.coef,
            exponents,
        }
    }

    /// Reciprocal.
    pub fn inv(&self) -> Monomial {
        Monomial {
            coef: 1.0 / self.coef,
            exponents: self.exponents.iter().map(|&(j, a)| (j, -a)).collect(),
        }
    }
}

/// Sum of monomials.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Posynomial {
    pub terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        Posynomial { terms }
    }

    pub fn push(&mut self, m: Monomial) {
        self.terms.push(m);
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(x)).sum()
    }

    /// Every term multiplied by `m`.
    pub fn times(&self, m: &Monomial) -> Posynomial {
        Posynomial {
            terms: self.terms.iter().map(|t| t.times(m)).collect(),
        }
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

/// `min objective(x)` s.t. `constraints[i](x) <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpProblem {
    pub n_vars: usize,
    pub objective: Posynomial,
    pub constraints: Vec<Posynomial>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpSettings {
    /// Target duality gap and dual residual in the log domain.
    pub tol: f64,
    /// Newton iterations allowed per phase.
    pub max_iter: usize,
}

impl Default for GpSettings {
    fn default() -> Self {
        GpSettings {
            tol: 1e-8,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the log-domain constraints that best satisfy the
    /// optimality conditions at `x`.
    pub duals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
}

/// `log sum_k exp(A_k z + b_k)`.
#[derive(Debug, Clone)]
struct Lse {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

impl Lse {
    fn from_posynomial(p: &Posynomial, n: usize) -> Result<Lse> {
        if p.terms.is_empty() {
            return Err(Error::InvalidConfig("empty posynomial".into()));
        }
        let mut a = DMatrix::zeros(p.terms.len(), n);
        let mut b = DVector::zeros(p.terms.len());
        for (k, t) in p.terms.iter().enumerate() {
            if !(t.coef.is_finite() && t.coef > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "posynomial coefficients must be positive, got {}",
                    t.coef
                )));
            }
            b[k] = t.coef.ln();
            for &(j, e) in &t.exponents {
                if j >= n {
                    return Err(Error::InvalidConfig(format!("variable {j} out of range")));
                }
                a[(k, j)] += e;
            }
        }
        Ok(Lse { a, b })
    }

    /// Appends a column of `c` for an extra variable.
    fn with_extra_var(&self, c: f64) -> Lse {
        let (t, n) = self.a.shape();
        let mut a = self.a.clone().resize(t, n + 1, 0.0);
        a.column_mut(n).fill(c);
        Lse { a, b: self.b.clone() }
    }

    fn weights(&self, z: &DVector<f64>) -> (f64, DVector<f64>) {
        let mut u = &self.a * z + &self.b;
        let m = u.max();
        u.apply(|v| *v = (*v - m).exp());
        let s = u.sum();
        (m + s.ln(), u / s)
    }

    fn value(&self, z: &DVector<f64>) -> f64 {
        self.weights(z).0
    }

    fn value_grad(&self, z: &DVector<f64>) -> (f64, DVector<f64>) {
        let (v, w) = self.weights(z);
        (v, self.a.tr_mul(&w))
    }

    fn value_grad_hess(&self, z: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (v, w) = self.weights(z);
        let g = self.a.tr_mul(&w);
        let mut wa = self.a.clone();
        for (k, mut row) in wa.row_iter_mut().enumerate() {
            row *= w[k];
        }
        let h = self.a.tr_mul(&wa) - &g * g.transpose();
        (v, g, h)
    }
}

/// Log-domain convex program `min f_0(z)` s.t. `f_i(z) <= 0`.
struct ConvexForm {
    objective: Lse,
    constraints: Vec<Lse>,
}

struct IpmOutcome {
    z: DVector<f64>,
    iterations: usize,
    converged: bool,
}

const MU: f64 = 20.0;
/// Relative Newton decrement at which a centering step is considered converged.
const NEWTON_TOL: f64 = 1e-14;
const ALPHA: f64 = 0.01;
const BETA: f64 = 0.5;
/// Log-domain magnitude beyond which the iterate is treated as escaping to
/// zero or infinity.
const DIVERGED: f64 = 300.0;

impl ConvexForm {
    fn constraint_values(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.constraints.len(), self.constraints.iter().map(|c| c.value(z)))
    }

    /// `t f_0(z) - sum_i log(-f_i(z))`, infinite outside the domain.
    fn barrier(&self, z: &DVector<f64>, t: f64) -> f64 {
        let mut v = t * self.objective.value(z);
        for c in &self.constraints {
            let f = c.value(z);
            if f >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-f).ln();
        }
        v
    }

    /// Log-barrier path following from a strictly feasible `z`. `stop` may
    /// end the run early (used by phase 1).
    fn solve(
        &self,
        mut z: DVector<f64>,
        tol: f64,
        max_iter: usize,
        stop: impl Fn(&DVector<f64>) -> bool,
    ) -> Result<IpmOutcome> {
        let m = self.constraints.len();
        let mut t = 1.0;
        let mut iterations = 0;
        loop {
            // Centering by damped Newton steps.
            loop {
                if stop(&z) {
                    return Ok(IpmOutcome {
                        z,
                        iterations,
                        converged: true,
                    });
                }
                let (_, g0, h0) = self.objective.value_grad_hess(&z);
                let mut g = g0 * t;
                let mut h = h0 * t;
                for c in &self.constraints {
                    let (f, gi, hi) = c.value_grad_hess(&z);
                    g -= &gi / f;
                    h += hi / -f + &gi * gi.transpose() / (f * f);
                }
                let dz = solve_spd(h, &(-&g))?;
                let slope = g.dot(&dz);
                let phi = self.barrier(&z, t);
                if -slope <= NEWTON_TOL * (1.0 + phi.abs()) {
                    break;
                }
                let mut s = 1.0;
                let mut moved = false;
                while s > 1e-12 {
                    let zn = &z + &dz * s;
                    if self.barrier(&zn, t) <= phi + ALPHA * s * slope {
                        moved = zn != z;
                        z = zn;
                        break;
                    }
                    s *= BETA;
                }
                iterations += 1;
                if z.amax() > DIVERGED {
                    return Err(Error::Unbounded);
                }
                if !moved {
                    break;
                }
                if iterations >= max_iter {
                    return Ok(IpmOutcome {
                        z,
                        iterations,
                        converged: false,
                    });
                }
            }
            if m == 0 || (m as f64) / t < tol {
                return Ok(IpmOutcome {
                    z,
                    iterations,
                    converged: true,
                });
            }
            t *= MU;
        }
    }
}

fn solve_spd(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = h.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    let n = h.nrows();
    let scale = h.diagonal().amax().max(1.0);
    let reg = h + DMatrix::identity(n, n) * (1e-10 * scale);
    if let Some(ch) = reg.clone().cholesky() {
        return Ok(ch.solve(rhs));
    }
    reg.lu()
        .solve(rhs)
        .ok_or_else(|| Error::Solver("singular Newton system".into()))
}

impl GpProblem {
    pub fn new(n_vars: usize, objective: Posynomial, constraints: Vec<Posynomial>) -> Self {
        GpProblem {
            n_vars,
            objective,
            constraints,
        }
    }

    fn convex_form(&self) -> Result<ConvexForm> {
        Ok(ConvexForm {
            objective: Lse::from_posynomial(&self.objective, self.n_vars)?,
            constraints: self
                .constraints
                .iter()
                .map(|c| Lse::from_posynomial(c, self.n_vars))
                .collect::<Result<_>>()?,
        })
    }

    /// Solves from `hint` (all ones when absent), running a phase-1 problem
    /// first if the hint is not strictly feasible.
    pub fn solve(&self, hint: Option<&[f64]>, settings: &GpSettings) -> Result<GpSolution> {
        let form = self.convex_form()?;
        let n = self.n_vars;
        let z0 = match hint {
            Some(h) if h.len() == n && h.iter().all(|v| v.is_finite() && *v > 0.0) => {
                DVector::from_iterator(n, h.iter().map(|v| v.ln()))
            }
            Some(_) => {
                return Err(Error::InvalidConfig(
                    "hint must be positive with one entry per variable".into(),
                ))
            }
            None => DVector::zeros(n),
        };
        let inner_tol = (settings.tol * 1e-5).max(1e-14);
        let (z, phase1_iters) = if form.constraint_values(&z0).iter().all(|&v| v < 0.0) {
            (z0, 0)
        } else {
            phase_one(&form, z0, inner_tol, settings.max_iter)?
        };
        let out = form.solve(z, inner_tol, settings.max_iter, |_| false)?;
        let x: Vec<f64> = out.z.iter().map(|v| v.exp()).collect();
        let objective = self.objective.eval(&x);
        let (kkt, duals) = kkt_multipliers(self, &x)?;
        Ok(GpSolution {
            x,
            objective,
            duals,
            iterations: phase1_iters + out.iterations,
            converged: out.converged,
            kkt_residual: kkt,
        })
    }
}

/// `min s` s.t. `f_i(z) <= s`, `s >= -1`, stopped once `s < 0`.
fn phase_one(form: &ConvexForm, z0: DVector<f64>, tol: f64, max_iter: usize) -> Result<(DVector<f64>, usize)> {
    let n = z0.len();
    let worst = form.constraint_values(&z0).max();
    let mut constraints: Vec<Lse> = form.constraints.iter().map(|c| c.with_extra_var(-1.0)).collect();
    let mut floor = DMatrix::zeros(1, n + 1);
    floor[(0, n)] = -1.0;
    constraints.push(Lse {
        a: floor,
        b: DVector::from_element(1, -1.0),
    });
    let mut obj = DMatrix::zeros(1, n + 1);
    obj[(0, n)] = 1.0;
    let aux = ConvexForm {
        objective: Lse {
            a: obj,
            b: DVector::zeros(1),
        },
        constraints,
    };
    let mut w = z0.resize_vertically(n + 1, 0.0);
    w[n] = worst + 1.0;
    let out = aux.solve(w, tol, max_iter, |w| {
        w[n] < 0.0
            && form
                .constraint_values(&w.rows(0, n).into_owned())
                .iter()
                .all(|&v| v < 0.0)
    })?;
    let z = out.z.rows(0, n).into_owned();
    if form.constraint_values(&z).iter().all(|&v| v < 0.0) {
        Ok((z, out.iterations))
    } else {
        Err(Error::Infeasible)
    }
}

/// First-order optimality residual of `x` in the log domain: the smallest
/// `||grad f_0 + sum lambda_i grad f_i|| + ||lambda_i f_i||` over
/// `lambda >= 0`, plus any constraint violation. Zero exactly at optima and
/// unaffected by scaling the objective.
pub fn kkt_residual(problem: &GpProblem, x: &[f64]) -> Result<f64> {
    kkt_multipliers(problem, x).map(|(r, _)| r)
}

/// Residual of [`kkt_residual`] together with the minimizing multipliers.
pub fn kkt_multipliers(problem: &GpProblem, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if x.len() != problem.n_vars || x.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidConfig(
            "point must be positive with one entry per variable".into(),
        ));
    }
    let form = problem.convex_form()?;
    let z = DVector::from_iterator(x.len(), x.iter().map(|v| v.ln()));
    let (_, g0) = form.objective.value_grad(&z);
    let n = x.len();
    let m = form.constraints.len();
    let mut mat = DMatrix::zeros(n + m, m);
    let mut violation = 0.0;
    for (i, c) in form.constraints.iter().enumerate() {
        let (f, g) = c.value_grad(&z);
        mat.view_mut((0, i), (n, 1)).copy_from(&g);
        mat[(n + i, i)] = f;
        violation += f.max(0.0).powi(2);
    }
    let mut target = DVector::zeros(n + m);
    target.rows_mut(0, n).copy_from(&(-g0));
    let lambda = nnls(&mat, &target);
    let r = (&mat * &lambda - target).norm() + violation.sqrt();
    Ok((r, lambda.iter().copied().collect()))
}

/// Lawson-Hanson non-negative least squares `min ||A x - b||`, `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-13 * (a.norm() * b.norm()).max(1e-300);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = a.select_columns(&idx);
        let s = SVD::new(sub, true, true)
            .solve(b, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(idx.len()));
        let mut full = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            full[j] = s[k];
        }
        full
    };
    for _ in 0..3 * n + 10 {
        let w = a.tr_mul(&(b - a * &x));
        let pick = (0..n).filter(|&j| !passive[j]).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = pick.filter(|&j| w[j] > tol) else { break };
        passive[j] = true;
        loop {
            let s = solve_passive(&passive);
            if (0..n).all(|i| !passive[i] || s[i] > 0.0) {
                x = s;
                break;
            }
            let mut step = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && s[i] <= 0.0) {
                step = step.min(x[i] / (x[i] - s[i]));
            }
            x += (s - &x) * step;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
        }
    }
    x
}
