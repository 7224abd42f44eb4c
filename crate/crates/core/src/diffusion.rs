//! 1D slab diffusion with a unit source on the left boundary.
//!
//! The slab `[0, 1]` is discretized with `round(1/dx)` cells (both boundary
//! nodes included). The left node is held at 1 from the first step, the right
//! node at 0. Interior nodes advance with backward Euler and the centered
//! second difference, one constant tridiagonal system per step.

use std::collections::BTreeMap;

use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::sequence::SimulationSequence;

pub const PARAM_D: &str = "D";
pub const PARAM_DX: &str = "dx";

#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionConfig {
    pub diffusivity: f64,
    pub dx: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub record_profile: bool,
    pub profile_points: usize,
}

impl DiffusionConfig {
    pub fn new(diffusivity: f64, dx: f64, dt: f64, n_steps: usize) -> Self {
        Self {
            diffusivity,
            dx,
            dt,
            n_steps,
            record_profile: false,
            profile_points: 100,
        }
    }

    pub fn cells(&self) -> usize {
        (1.0 / self.dx).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.diffusivity > 0.0 && self.diffusivity.is_finite()) {
            return bad(format!("diffusivity must be positive, got {}", self.diffusivity));
        }
        if !(self.dx > 0.0 && self.dx < 1.0) {
            return bad(format!("dx must lie in (0, 1), got {}", self.dx));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be at least 1".into());
        }
        if self.cells() < 3 {
            return bad(format!("dx = {} gives fewer than 3 cells", self.dx));
        }
        if self.record_profile && self.profile_points < 2 {
            return bad("profile_points must be at least 2".into());
        }
        Ok(())
    }
}

/// Spatially integrated concentration of the unit slab at time `t`:
/// `2 sqrt(Dt/pi) (1 - exp(-1/(4Dt))) + erfc(1/(2 sqrt(Dt)))`, the closed
/// form of `int_0^1 erfc(x / (2 sqrt(Dt))) dx`.
pub fn analytic_concentration(diffusivity: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let dt = diffusivity * t;
    let s = dt.sqrt();
    2.0 * (dt / std::f64::consts::PI).sqrt() * (1.0 - (-1.0 / (4.0 * dt)).exp()) + erfc(1.0 / (2.0 * s))
}

/// LU factors of a tridiagonal matrix, reusable across right-hand sides.
#[derive(Clone, Debug)]
pub struct TridiagonalFactor {
    lower: Vec<f64>,
    inv_pivot: Vec<f64>,
    upper_mod: Vec<f64>,
}

impl TridiagonalFactor {
    pub fn new(lower: &[f64], diag: &[f64], upper: &[f64]) -> Result<Self> {
        let n = diag.len();
        if n == 0 {
            return Err(Error::Empty("tridiagonal diagonal"));
        }
        if lower.len() != n - 1 || upper.len() != n - 1 {
            return Err(Error::dim(
                "solve_tridiagonal",
                format!(
                    "diag has {n} entries but lower/upper have {}/{}",
                    lower.len(),
                    upper.len()
                ),
            ));
        }
        let mut inv_pivot = vec![0.0; n];
        let mut upper_mod = vec![0.0; n.saturating_sub(1)];
        let mut prev = 0.0;
        for i in 0..n {
            let pivot = if i == 0 { diag[0] } else { diag[i] - lower[i - 1] * prev };
            if pivot.abs() <= f64::MIN_POSITIVE || !pivot.is_finite() {
                return Err(Error::Singular { index: i });
            }
            inv_pivot[i] = 1.0 / pivot;
            if i + 1 < n {
                prev = upper[i] * inv_pivot[i];
                upper_mod[i] = prev;
            }
        }
        Ok(Self {
            lower: lower.to_vec(),
            inv_pivot,
            upper_mod,
        })
    }

    pub fn len(&self) -> usize {
        self.inv_pivot.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inv_pivot.is_empty()
    }

    /// Overwrites `rhs` with the solution.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.inv_pivot.len();
        debug_assert_eq!(rhs.len(), n);
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.lower[i - 1] * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}

/// Thomas algorithm for `A x = rhs` with `A` given by its three diagonals.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    if rhs.len() != diag.len() {
        return Err(Error::dim(
            "solve_tridiagonal",
            format!("rhs has {} entries, diag has {}", rhs.len(), diag.len()),
        ));
    }
    let factor = TridiagonalFactor::new(lower, diag, upper)?;
    let mut x = rhs.to_vec();
    factor.solve_in_place(&mut x);
    Ok(x)
}

/// Step-by-step solver state. `simulate` drives it to completion; the early
/// termination monitor consumes it one step at a time.
#[derive(Clone, Debug)]
pub struct DiffusionRun {
    config: DiffusionConfig,
    h: f64,
    factor: TridiagonalFactor,
    coupling: f64,
    /// All nodes, boundaries included. Boundaries are 0 until the first step.
    field: Vec<f64>,
    step: usize,
}

impl DiffusionRun {
    pub fn new(config: DiffusionConfig) -> Result<Self> {
        config.validate()?;
        let cells = config.cells();
        let h = 1.0 / cells as f64;
        let r = config.diffusivity * config.dt / (h * h);
        let interior = cells - 1;
        let off = vec![-r; interior - 1];
        let diag = vec![1.0 + 2.0 * r; interior];
        let factor = TridiagonalFactor::new(&off, &diag, &off)?;
        Ok(Self {
            config,
            h,
            factor,
            coupling: r,
            field: vec![0.0; cells + 1],
            step: 0,
        })
    }

    pub fn config(&self) -> &DiffusionConfig {
        &self.config
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.config.dt
    }

    pub fn field(&self) -> &[f64] {
        &self.field
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.n_steps
    }

    /// Advances one backward-Euler step.
    pub fn advance(&mut self) -> Result<()> {
        let last = self.field.len() - 1;
        self.field[0] = 1.0;
        self.field[last] = 0.0;
        let r = self.coupling;
        let interior = &mut self.field[1..last];
        interior[0] += r * 1.0;
        // right boundary contributes r * 0
        self.factor.solve_in_place(interior);
        self.step += 1;
        let q = self.integral();
        if !q.is_finite() {
            return Err(Error::non_finite(format!("diffusion field at step {}", self.step)));
        }
        Ok(())
    }

    /// Trapezoid integral over all nodes.
    pub fn integral(&self) -> f64 {
        let n = self.field.len();
        let inner: f64 = self.field[1..n - 1].iter().sum();
        self.h * (0.5 * self.field[0] + inner + 0.5 * self.field[n - 1])
    }

    /// Field linearly interpolated onto `points` equally spaced locations
    /// spanning `[0, 1]`.
    pub fn profile(&self, points: usize) -> Vec<f64> {
        let cells = self.field.len() - 1;
        (0..points)
            .map(|k| {
                let x = k as f64 / (points - 1) as f64;
                let pos = x * cells as f64;
                let i = (pos.floor() as usize).min(cells - 1);
                let w = pos - i as f64;
                (1.0 - w) * self.field[i] + w * self.field[i + 1]
            })
            .collect()
    }

    /// The QOI vector for the current state.
    pub fn qoi(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.qoi_dim());
        q.push(self.integral());
        if self.config.record_profile {
            q.extend(self.profile(self.config.profile_points));
        }
        q
    }

    pub fn qoi_dim(&self) -> usize {
        if self.config.record_profile {
            1 + self.config.profile_points
        } else {
            1
        }
    }
}

pub fn sequence_params(diffusivity: f64, dx: f64) -> BTreeMap<String, f64> {
    BTreeMap::from([(PARAM_D.to_string(), diffusivity), (PARAM_DX.to_string(), dx)])
}

/// Runs the solver for `n_steps` and records one QOI entry per step
/// (plus the all-zero initial state).
pub fn simulate(config: &DiffusionConfig) -> Result<SimulationSequence> {
    simulate_with_id(config, 0)
}

pub fn simulate_with_id(config: &DiffusionConfig, id: u64) -> Result<SimulationSequence> {
    let mut run = DiffusionRun::new(config.clone())?;
    let mut qoi = Vec::with_capacity(config.n_steps + 1);
    qoi.push(run.qoi());
    while !run.is_finished() {
        run.advance()?;
        qoi.push(run.qoi());
    }
    Ok(SimulationSequence {
        id,
        params: sequence_params(config.diffusivity, config.dx),
        dt: config.dt,
        qoi_dim: run.qoi_dim(),
        qoi,
    })
}

/// Least-squares slope of `log(error)` against `log(dx)`. `None` when fewer
/// than two points, any error is zero, or the dx values coincide.
pub fn fit_order(dx: &[f64], errors: &[f64]) -> Option<f64> {
    if dx.len() < 2 || dx.len() != errors.len() {
        return None;
    }
    if errors.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return None;
    }
    let xs: Vec<f64> = dx.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceStudy {
    pub dx: Vec<f64>,
    pub errors: Vec<f64>,
    pub order: Option<f64>,
}

fn steps_for(t_eval: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && t_eval > 0.0) {
        return Err(Error::InvalidConfig("t_eval and dt must be positive".into()));
    }
    let n = (t_eval / dt).round();
    if n < 1.0 || (n * dt - t_eval).abs() > 1e-9 * t_eval {
        return Err(Error::InvalidConfig(format!(
            "t_eval = {t_eval} is not a multiple of dt = {dt}"
        )));
    }
    Ok(n as usize)
}

fn final_qoi(diffusivity: f64, dx: f64, dt: f64, n_steps: usize) -> Result<f64> {
    let mut run = DiffusionRun::new(DiffusionConfig::new(diffusivity, dx, dt, n_steps))?;
    while !run.is_finished() {
        run.advance()?;
    }
    Ok(run.integral())
}

/// Error of the final QOI against the analytic solution for each `dx`, and
/// the fitted log-log slope.
pub fn convergence_study(diffusivity: f64, dx_list: &[f64], dt: f64, t_eval: f64) -> Result<ConvergenceStudy> {
    if dx_list.is_empty() {
        return Err(Error::Empty("dx list"));
    }
    let n_steps = steps_for(t_eval, dt)?;
    let exact = analytic_concentration(diffusivity, n_steps as f64 * dt);
    let errors = dx_list
        .iter()
        .map(|&dx| final_qoi(diffusivity, dx, dt, n_steps).map(|q| (q - exact).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        dx: dx_list.to_vec(),
        order: fit_order(dx_list, &errors),
        errors,
    })
}

/// Like [`convergence_study`], but measures each error against a solution
/// computed with the same `dt` on a grid `refine` times finer than the
/// smallest `dx`. This removes the time-discretization error and exposes the
/// spatial order on its own.
pub fn spatial_convergence_study(
    diffusivity: f64,
    dx_list: &[f64],
    dt: f64,
    t_eval: f64,
    refine: usize,
) -> Result<ConvergenceStudy> {
    if dx_list.is_empty() {
        return Err(Error::Empty("dx list"));
    }
    let n_steps = steps_for(t_eval, dt)?;
    let finest = dx_list.iter().copied().fold(f64::INFINITY, f64::min);
    let reference = final_qoi(diffusivity, finest / refine.max(2) as f64, dt, n_steps)?;
    let errors = dx_list
        .iter()
        .map(|&dx| final_qoi(diffusivity, dx, dt, n_steps).map(|q| (q - reference).abs()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceStudy {
        dx: dx_list.to_vec(),
        order: fit_order(dx_list, &errors),
        errors,
    })
}
