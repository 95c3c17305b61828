//! Convex-splitting time stepping for the mixed Cahn-Hilliard scheme.
//!
//! Each step solves the nonlinear system in the zero-mean parts of (phi, mu)
//! by Newton's method, starting from the previous step's solution. A step
//! stops as soon as either the max-norm of the phi-correction drops below
//! `newton_linf_tol` or the Euclidean norm of the stacked residual loads
//! drops below `newton_residual_tol`. The constant part of mu is recovered
//! afterwards from the scheme tested against constants.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::{InitialCondition, RunConfig};
use crate::error::{Error, Result};
use crate::fem::{
    newton_residual_loads, project_zero_sum, ritz_projection, FemSpace, MeanVector, NodalField,
};
use crate::jacobian::{build_scaled_rhs, build_scaled_system, solve_newton_system, BlockPreconditioner};
use crate::linalg::{minres, Identity, RankOneAugmented};
use crate::mesh::MeshHierarchy;
use crate::sparse::SparseMatrix;

/// Solution state after `step_index` steps. `phi` and `mu` are the full
/// fields; their constant parts are `mean_phi0` (conserved) and `mean_mu`.
#[derive(Debug, Clone)]
pub struct ChState {
    pub step_index: usize,
    pub time: f64,
    pub phi: NodalField,
    pub mu: NodalField,
    pub mean_phi0: f64,
    pub mean_mu: f64,
}

/// Per-step diagnostics.
#[derive(Debug, Clone)]
pub struct StepStats {
    pub step_index: usize,
    pub time: f64,
    pub newton_iterations: usize,
    pub minres_per_newton: Vec<usize>,
    pub minres_total: usize,
    pub wall_seconds: f64,
    pub energy_after: f64,
    pub mass_after: f64,
    pub newton_converged: bool,
    /// Euclidean norm of the stacked residual loads at acceptance.
    pub final_residual: f64,
}

/// Aggregates of a completed run, the quantities reported in iteration
/// tables.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub steps: usize,
    pub max_minres: usize,
    pub median_minres: f64,
    pub avg_minres: f64,
    pub avg_newton: f64,
    pub avg_wall_seconds: f64,
    pub single_newton_fraction: f64,
}

pub fn summarize(stats: &[StepStats]) -> RunSummary {
    let steps = stats.len();
    let mut counts: Vec<usize> = stats.iter().map(|s| s.minres_total).collect();
    counts.sort_unstable();
    let median = if steps == 0 {
        0.0
    } else if steps % 2 == 1 {
        counts[steps / 2] as f64
    } else {
        (counts[steps / 2 - 1] + counts[steps / 2]) as f64 / 2.0
    };
    let total: usize = counts.iter().sum();
    let newton_total: usize = stats.iter().map(|s| s.newton_iterations).sum();
    let wall_total: f64 = stats.iter().map(|s| s.wall_seconds).sum();
    let single: usize = stats.iter().filter(|s| s.newton_iterations == 1).count();
    RunSummary {
        steps,
        max_minres: counts.last().copied().unwrap_or(0),
        median_minres: median,
        avg_minres: if steps > 0 { total as f64 / steps as f64 } else { 0.0 },
        avg_newton: if steps > 0 {
            newton_total as f64 / steps as f64
        } else {
            0.0
        },
        avg_wall_seconds: if steps > 0 { wall_total / steps as f64 } else { 0.0 },
        single_newton_fraction: if steps > 0 {
            single as f64 / steps as f64
        } else {
            0.0
        },
    }
}

/// The cosine initial profile of the reference experiments, extended to 3D
/// with the amplitude-preserving prefactor (1/2)^(d-1).
pub fn cosine_initial(dimension: usize) -> impl Fn(&[f64; 3]) -> f64 {
    move |x: &[f64; 3]| {
        let pi = std::f64::consts::PI;
        let mut product = 1.0;
        for axis in 0..dimension {
            product *= 1.0 - (2.0 * pi * x[axis]).cos();
        }
        product * 0.5f64.powi(dimension as i32 - 1) - 1.0
    }
}

/// Discretization and solver state for one run.
pub struct Simulation {
    pub config: RunConfig,
    pub hierarchy: MeshHierarchy,
    pub space: FemSpace,
    pub stiffness: SparseMatrix,
    pub mass: SparseMatrix,
    pub mean: MeanVector,
    pub preconditioner: BlockPreconditioner,
    pub state: ChState,
}

impl Simulation {
    /// Builds the hierarchy and preconditioner and sets the initial state
    /// from the configured initial data.
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        match &config.initial_condition {
            InitialCondition::Cosine => {
                let f = cosine_initial(config.dimension);
                Self::with_initial_function(config.clone(), &f)
            }
            InitialCondition::Random { seed, amplitude, mean } => {
                let (seed, amplitude, mean) = (*seed, *amplitude, *mean);
                let mut sim = Self::with_initial_function(config, &|_| 0.0)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let values: Vec<f64> = (0..sim.space.num_vertices())
                    .map(|_| mean + rng.gen_range(-amplitude..amplitude))
                    .collect();
                sim.set_initial_values(values);
                Ok(sim)
            }
        }
    }

    /// Builds the run with initial data given as a coordinate function,
    /// interpolated nodally or projected depending on the configuration.
    pub fn with_initial_function(
        config: RunConfig,
        phi0: &dyn Fn(&[f64; 3]) -> f64,
    ) -> Result<Self> {
        config.validate()?;
        let hierarchy = MeshHierarchy::build(config.dimension, config.levels)?;
        let space = FemSpace::new(hierarchy.finest())?;
        let stiffness = space.assemble_stiffness();
        let mass = space.assemble_mass();
        let mean = space.assemble_mean_vector();
        let preconditioner = BlockPreconditioner::build(
            &hierarchy,
            config.tau,
            config.eps,
            config.nu_pre,
            config.nu_post,
        )?;
        let initial = if config.use_ritz_projection {
            ritz_projection(&space, &stiffness, &mean, phi0)?
        } else {
            space.interpolate(phi0)?
        };
        let n = space.num_vertices();
        let mean_phi0 = mean.dot(&initial.values) / mean.sum();
        let state = ChState {
            step_index: 0,
            time: 0.0,
            phi: initial,
            mu: NodalField::constant(space.level, n, 0.0),
            mean_phi0,
            mean_mu: 0.0,
        };
        Ok(Simulation {
            config,
            hierarchy,
            space,
            stiffness,
            mass,
            mean,
            preconditioner,
            state,
        })
    }

    /// Replaces the initial nodal values (step 0 only).
    pub fn set_initial_values(&mut self, values: Vec<f64>) {
        assert_eq!(self.state.step_index, 0, "initial data fixed after step 0");
        assert_eq!(values.len(), self.space.num_vertices());
        self.state.phi = NodalField {
            level: self.space.level,
            values,
        };
        self.state.mean_phi0 = self.mean.dot(&self.state.phi.values) / self.mean.sum();
    }

    pub fn energy(&self) -> f64 {
        self.space.energy(&self.state.phi.values, self.config.eps)
    }

    pub fn mass_integral(&self) -> f64 {
        self.mean.dot(&self.state.phi.values)
    }

    fn ring_of(&self, field: &NodalField, mean_value: f64) -> NodalField {
        let mut values: Vec<f64> = field.values.iter().map(|&v| v - mean_value).collect();
        project_zero_sum_vector(&mut values, &self.mean);
        NodalField {
            level: field.level,
            values,
        }
    }

    /// The Newton iteration for one time step, acting on the zero-mean parts.
    /// Returns the accepted iterates and diagnostics.
    pub(crate) fn newton_solve(
        &self,
        phi_prev_ring: &NodalField,
        mut phi_ring: NodalField,
        mut mu_ring: NodalField,
    ) -> Result<NewtonOutcome> {
        let config = &self.config;
        let (tau, eps) = (config.tau, config.eps);
        let mut minres_counts = Vec::new();
        let mut iterations = 0usize;

        let (mut f, mut g) = newton_residual_loads(
            &self.space,
            &self.stiffness,
            &self.mass,
            &self.mean,
            &phi_ring,
            &mu_ring,
            phi_prev_ring,
            self.state.mean_phi0,
            tau,
            eps,
        )?;
        let mut residual = stacked_norm(&f, &g);
        let mut converged = residual <= config.newton_residual_tol;

        while !converged && iterations < config.max_newton {
            let phi_full = NodalField {
                level: phi_ring.level,
                values: phi_ring
                    .values
                    .iter()
                    .map(|&v| v + self.state.mean_phi0)
                    .collect(),
            };
            let weighted = self.space.assemble_weighted_mass(&phi_full)?;
            let op = build_scaled_system(
                &self.stiffness,
                &self.mass,
                &self.mean,
                &weighted,
                tau,
                eps,
            )?;
            let rhs = build_scaled_rhs(&f, &g, tau, eps);
            let (delta_mu, delta_phi, report) = solve_newton_system(
                &op,
                &self.preconditioner,
                &rhs,
                config.minres_rtol,
                config.minres_maxit,
            )?;
            minres_counts.push(report.iterations);
            iterations += 1;

            let mut delta_linf = 0.0f64;
            for (v, d) in mu_ring.values.iter_mut().zip(&delta_mu) {
                *v -= d;
            }
            for (v, d) in phi_ring.values.iter_mut().zip(&delta_phi) {
                *v -= d;
                delta_linf = delta_linf.max(d.abs());
            }
            project_zero_sum_vector(&mut phi_ring.values, &self.mean);
            project_zero_sum_vector(&mut mu_ring.values, &self.mean);

            if delta_linf <= config.newton_linf_tol {
                converged = true;
                // refresh the residual for reporting
                let (fr, gr) = newton_residual_loads(
                    &self.space,
                    &self.stiffness,
                    &self.mass,
                    &self.mean,
                    &phi_ring,
                    &mu_ring,
                    phi_prev_ring,
                    self.state.mean_phi0,
                    tau,
                    eps,
                )?;
                residual = stacked_norm(&fr, &gr);
                break;
            }
            let (fr, gr) = newton_residual_loads(
                &self.space,
                &self.stiffness,
                &self.mass,
                &self.mean,
                &phi_ring,
                &mu_ring,
                phi_prev_ring,
                self.state.mean_phi0,
                tau,
                eps,
            )?;
            f = fr;
            g = gr;
            residual = stacked_norm(&f, &g);
            converged = residual <= config.newton_residual_tol;
        }

        Ok(NewtonOutcome {
            phi_ring,
            mu_ring,
            iterations,
            minres_counts,
            residual,
            converged,
        })
    }

    /// One full time step: Newton solve, constant-mu recovery, diagnostics.
    pub fn advance(&mut self) -> Result<StepStats> {
        let started = Instant::now();
        let phi_prev_full = self.state.phi.clone();
        let phi_prev_ring = self.ring_of(&phi_prev_full, self.state.mean_phi0);
        let phi_init = phi_prev_ring.clone();
        let mu_init = self.ring_of(&self.state.mu, self.state.mean_mu);

        let outcome = self.newton_solve(&phi_prev_ring, phi_init, mu_init)?;
        if !outcome.converged {
            return Err(Error::NewtonFailure {
                step: self.state.step_index + 1,
                detail: format!(
                    "residual {:.3e} after {} iterations (tolerance {:.1e})",
                    outcome.residual, outcome.iterations, self.config.newton_residual_tol
                ),
            });
        }

        let phi_full = NodalField {
            level: outcome.phi_ring.level,
            values: outcome
                .phi_ring
                .values
                .iter()
                .map(|&v| v + self.state.mean_phi0)
                .collect(),
        };
        let mean_mu = recover_mean_mu(
            &self.space,
            &self.mean,
            &phi_full,
            &phi_prev_full,
            self.config.eps,
        )?;
        let mu_full = NodalField {
            level: outcome.mu_ring.level,
            values: outcome.mu_ring.values.iter().map(|&v| v + mean_mu).collect(),
        };
        let wall_seconds = started.elapsed().as_secs_f64();

        self.state.step_index += 1;
        self.state.time = self.state.step_index as f64 * self.config.tau;
        self.state.phi = phi_full;
        self.state.mu = mu_full;
        self.state.mean_mu = mean_mu;

        Ok(StepStats {
            step_index: self.state.step_index,
            time: self.state.time,
            newton_iterations: outcome.iterations,
            minres_total: outcome.minres_counts.iter().sum(),
            minres_per_newton: outcome.minres_counts,
            wall_seconds,
            energy_after: self.energy(),
            mass_after: self.mass_integral(),
            newton_converged: outcome.converged,
            final_residual: outcome.residual,
        })
    }
}

pub(crate) struct NewtonOutcome {
    pub phi_ring: NodalField,
    pub mu_ring: NodalField,
    pub iterations: usize,
    pub minres_counts: Vec<usize>,
    pub residual: f64,
    pub converged: bool,
}

fn stacked_norm(f: &[f64], g: &[f64]) -> f64 {
    let sum: f64 = f.iter().chain(g).map(|&v| v * v).sum();
    sum.sqrt()
}

fn project_zero_sum_vector(values: &mut [f64], mean: &MeanVector) {
    let shift = mean.dot(values) / mean.sum();
    for v in values.iter_mut() {
        *v -= shift;
    }
}

/// Constant part of mu recovered from the scheme tested with constants:
/// mean(mu) = eps^{-1} ((phi_new)^3 - phi_prev, 1) / |Omega|.
pub fn recover_mean_mu(
    space: &FemSpace,
    mean: &MeanVector,
    phi_new: &NodalField,
    phi_prev: &NodalField,
    eps: f64,
) -> Result<f64> {
    if phi_new.level != phi_prev.level || phi_new.len() != phi_prev.len() {
        return Err(Error::Assembly("fields on different levels".into()));
    }
    let cubic = space.integrate_cubed(&phi_new.values);
    let prev = mean.dot(&phi_prev.values);
    Ok((cubic - prev) / (eps * mean.sum()))
}

/// Result of a completed (or truncated) simulation.
pub struct RunOutput {
    pub stats: Vec<StepStats>,
    pub final_state: ChState,
    pub initial_energy: f64,
    pub initial_mass: f64,
    /// Set when a step failed; the stats collected so far are preserved.
    pub failure: Option<String>,
}

/// Runs M = T/tau steps, emitting VTK snapshots when an output directory is
/// configured. A step failure terminates the run with partial statistics.
pub fn run_simulation(config: RunConfig) -> Result<RunOutput> {
    let schedule = config.snapshot_schedule()?;
    let steps = config.num_steps()?;
    let mut sim = Simulation::new(config)?;
    let initial_energy = sim.energy();
    let initial_mass = sim.mass_integral();

    let snapshot = |sim: &Simulation, step: usize| -> Result<()> {
        if let Some(dir) = &sim.config.output.dir {
            if schedule.contains(&step) {
                std::fs::create_dir_all(dir)?;
                let path = dir.join(format!("snapshot_{step:06}.vtk"));
                crate::io::write_snapshot(
                    sim.hierarchy.finest(),
                    &sim.state.phi,
                    &sim.state.mu,
                    &path,
                )?;
            }
        }
        Ok(())
    };

    snapshot(&sim, 0)?;
    let mut stats = Vec::with_capacity(steps);
    let mut failure = None;
    for step in 1..=steps {
        match sim.advance() {
            Ok(step_stats) => {
                stats.push(step_stats);
                snapshot(&sim, step)?;
            }
            Err(err) => {
                failure = Some(err.to_string());
                break;
            }
        }
    }
    Ok(RunOutput {
        stats,
        final_state: sim.state,
        initial_energy,
        initial_mass,
        failure,
    })
}

/// Value of the convex functional whose first-order optimality condition is
/// the scheme's nonlinear system: for zero-mean varphi,
/// Phi(varphi) = (eps/2 tau) a(rho, rho) + (1/4 eps) ||varphi + mean_phi0||_L4^4
///             - (1/eps) (phi_prev_ring, varphi) + (eps/2) a(varphi, varphi),
/// where rho solves eps a(rho, v) + (varphi - phi_prev_ring, v) = 0 on the
/// zero-mean space.
#[allow(clippy::too_many_arguments)]
pub fn convex_functional_value(
    space: &FemSpace,
    stiffness: &SparseMatrix,
    mass: &SparseMatrix,
    mean: &MeanVector,
    varphi: &NodalField,
    phi_prev_ring: &NodalField,
    mean_phi0: f64,
    tau: f64,
    eps: f64,
) -> Result<f64> {
    let norm = varphi.values.iter().map(|&v| v * v).sum::<f64>().sqrt();
    if mean.dot(&varphi.values).abs() > 1e-8 * (1.0 + norm) {
        return Err(Error::Input("varphi is not zero-mean".into()));
    }
    let rho = solve_auxiliary_potential(stiffness, mass, mean, varphi, phi_prev_ring, eps)?;
    let n = varphi.len();
    let mut krho = vec![0.0; n];
    stiffness.matvec(&rho, &mut krho);
    let rho_energy: f64 = rho.iter().zip(&krho).map(|(&a, &b)| a * b).sum();

    let l4 = space.integrate_quartic(&varphi.values, mean_phi0);

    let mut m_prev = vec![0.0; n];
    mass.matvec(&phi_prev_ring.values, &mut m_prev);
    let cross: f64 = varphi.values.iter().zip(&m_prev).map(|(&a, &b)| a * b).sum();

    let mut kv = vec![0.0; n];
    stiffness.matvec(&varphi.values, &mut kv);
    let grad: f64 = varphi.values.iter().zip(&kv).map(|(&a, &b)| a * b).sum();

    Ok(eps / (2.0 * tau) * rho_energy + l4 / (4.0 * eps) - cross / eps + eps / 2.0 * grad)
}

/// Gradient of the convex functional against zero-mean directions:
/// dPhi[w] = w^T (-(1/tau) M rho + (1/eps) (varphi+mean)^3-load
///                - (1/eps) M phi_prev_ring + eps K varphi).
#[allow(clippy::too_many_arguments)]
pub fn convex_functional_gradient(
    space: &FemSpace,
    stiffness: &SparseMatrix,
    mass: &SparseMatrix,
    mean: &MeanVector,
    varphi: &NodalField,
    phi_prev_ring: &NodalField,
    mean_phi0: f64,
    tau: f64,
    eps: f64,
) -> Result<Vec<f64>> {
    let rho = solve_auxiliary_potential(stiffness, mass, mean, varphi, phi_prev_ring, eps)?;
    let n = varphi.len();
    let mut grad = vec![0.0; n];
    mass.matvec(&rho, &mut grad);
    for v in grad.iter_mut() {
        *v = -*v / tau;
    }
    let shifted: Vec<f64> = varphi.values.iter().map(|&v| v + mean_phi0).collect();
    let cubic = space.cubic_load(&shifted);
    let mut m_prev = vec![0.0; n];
    mass.matvec(&phi_prev_ring.values, &mut m_prev);
    let mut kv = vec![0.0; n];
    stiffness.matvec(&varphi.values, &mut kv);
    for i in 0..n {
        grad[i] += (cubic[i] - m_prev[i]) / eps + eps * kv[i];
    }
    Ok(grad)
}

/// rho in the zero-mean space with eps a(rho, v) = -(varphi - phi_prev, v),
/// through the rank-one augmented operator eps K + c c^T.
fn solve_auxiliary_potential(
    stiffness: &SparseMatrix,
    mass: &SparseMatrix,
    mean: &MeanVector,
    varphi: &NodalField,
    phi_prev_ring: &NodalField,
    eps: f64,
) -> Result<Vec<f64>> {
    let n = varphi.len();
    let diff: Vec<f64> = varphi
        .values
        .iter()
        .zip(&phi_prev_ring.values)
        .map(|(&a, &b)| a - b)
        .collect();
    let mut rhs = vec![0.0; n];
    mass.matvec(&diff, &mut rhs);
    for v in rhs.iter_mut() {
        *v = -*v;
    }
    project_zero_sum(&mut rhs, mean);
    let op = RankOneAugmented {
        base: stiffness,
        vector: &mean.values,
        sigma: 1.0 / eps,
    };
    // solve (K + c c^T / eps) rho' with rho = rho' scaled: fold eps into rhs
    let scaled_rhs: Vec<f64> = rhs.iter().map(|&v| v / eps).collect();
    let (rho, report) = minres(&op, &Identity(n), &scaled_rhs, 1e-12, 200 * n.max(50))?;
    if !report.converged && report.true_relative_residual > 1e-9 {
        return Err(Error::Solver(format!(
            "auxiliary potential solve stalled at {:.3e}",
            report.true_relative_residual
        )));
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{InitialCondition, OutputConfig};

    fn quick_config(levels: usize, steps: usize) -> RunConfig {
        let tau = 0.002 / 64.0;
        RunConfig {
            levels,
            tau,
            t_final: tau * steps as f64,
            ..RunConfig::default()
        }
    }

    #[test]
    fn cosine_initialization() {
        let sim = Simulation::new(quick_config(2, 1)).unwrap();
        // corners interpolate to -1
        for corner in 0..4 {
            assert!((sim.state.phi.values[corner] + 1.0).abs() < 1e-14);
        }
        assert_eq!(sim.state.mu.values.iter().filter(|&&v| v != 0.0).count(), 0);
        assert_eq!(sim.state.step_index, 0);

        // conserved mean against the analytic oracle for the interpolant
        let oracle = crate::test_oracle::dense_mean_vector(sim.hierarchy.finest());
        let mean_oracle: f64 = oracle
            .iter()
            .zip(&sim.state.phi.values)
            .map(|(&c, &v)| c * v)
            .sum();
        assert!((sim.state.mean_phi0 - mean_oracle).abs() < 1e-13);
    }

    #[test]
    fn random_initialization_is_deterministic() {
        let mut config = quick_config(2, 1);
        config.initial_condition = InitialCondition::Random {
            seed: 11,
            amplitude: 0.05,
            mean: 0.0,
        };
        let a = Simulation::new(config.clone()).unwrap();
        let b = Simulation::new(config).unwrap();
        assert_eq!(a.state.phi.values, b.state.phi.values);
        assert!(a
            .state
            .phi
            .values
            .iter()
            .all(|&v| v.abs() < 0.05 + 1e-15));
    }

    #[test]
    fn equilibrium_state_needs_no_newton_work() {
        let mut sim =
            Simulation::with_initial_function(quick_config(2, 1), &|_| 1.0).unwrap();
        let stats = sim.advance().unwrap();
        assert_eq!(stats.newton_iterations, 0);
        assert!(stats.minres_total == 0);
        for &v in &sim.state.phi.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(stats.energy_after.abs() < 1e-12);
    }

    #[test]
    fn recover_mean_mu_constant_states() {
        let sim = Simulation::new(quick_config(1, 1)).unwrap();
        let n = sim.space.num_vertices();
        let eps = sim.config.eps;
        for c in [1.0, 0.0, 0.5, -1.0] {
            let field = NodalField::constant(1, n, c);
            let mu = recover_mean_mu(&sim.space, &sim.mean, &field, &field, eps).unwrap();
            let expected = (c * c * c - c) / eps;
            assert!(
                (mu - expected).abs() < 1e-12 * (1.0 + expected.abs()),
                "c = {c}: {mu} vs {expected}"
            );
        }
        let wrong = NodalField::constant(0, 5, 1.0);
        let good = NodalField::constant(1, n, 1.0);
        assert!(recover_mean_mu(&sim.space, &sim.mean, &wrong, &good, eps).is_err());
    }

    #[test]
    fn short_run_conserves_mass_and_decays_energy() {
        let output = run_simulation(quick_config(2, 12)).unwrap();
        assert!(output.failure.is_none());
        assert_eq!(output.stats.len(), 12);
        let e0 = output.initial_energy;
        let mut prev_energy = e0;
        for stats in &output.stats {
            assert!(
                (stats.mass_after - output.initial_mass).abs() <= 1e-9,
                "mass drift {} at step {}",
                stats.mass_after - output.initial_mass,
                stats.step_index
            );
            assert!(
                stats.energy_after <= prev_energy + 1e-8 * (1.0 + e0),
                "energy grew at step {}",
                stats.step_index
            );
            prev_energy = stats.energy_after;
            assert!(stats.final_residual <= 1e-6);
        }
    }

    #[test]
    fn newton_restarted_from_solution_stops_immediately() {
        let mut sim = Simulation::new(quick_config(2, 2)).unwrap();
        let phi_prev_full = sim.state.phi.clone();
        sim.advance().unwrap();
        // the accepted iterates solve the step that advanced from phi_prev
        let prev_ring = sim.ring_of(&phi_prev_full, sim.state.mean_phi0);
        let phi_ring = sim.ring_of(&sim.state.phi, sim.state.mean_phi0);
        let mu_ring = sim.ring_of(&sim.state.mu, sim.state.mean_mu);
        let outcome = sim.newton_solve(&prev_ring, phi_ring, mu_ring).unwrap();
        assert!(outcome.converged);
        assert_eq!(outcome.iterations, 0);
    }

    #[test]
    fn far_initial_guess_converges_with_decreasing_residual() {
        let sim = Simulation::new(quick_config(1, 1)).unwrap();
        let prev_ring = sim.ring_of(&sim.state.phi, sim.state.mean_phi0);
        let mut far = prev_ring.clone();
        for v in far.values.iter_mut() {
            *v *= 10.0;
        }
        let mu0 = NodalField::constant(1, sim.space.num_vertices(), 0.0);
        let outcome = sim.newton_solve(&prev_ring, far, mu0).unwrap();
        assert!(outcome.converged);
        assert!(outcome.iterations > 1, "took {}", outcome.iterations);
    }

    #[test]
    fn single_newton_iteration_in_steady_stepping() {
        let output = run_simulation(quick_config(2, 10)).unwrap();
        for stats in &output.stats {
            assert_eq!(stats.newton_iterations, 1, "step {}", stats.step_index);
        }
    }

    #[test]
    fn determinism_of_stats_stream() {
        let mut config = quick_config(2, 5);
        config.initial_condition = InitialCondition::Random {
            seed: 3,
            amplitude: 0.05,
            mean: 0.0,
        };
        config.output = OutputConfig {
            no_timing: true,
            ..OutputConfig::default()
        };
        let a = run_simulation(config.clone()).unwrap();
        let b = run_simulation(config).unwrap();
        for (sa, sb) in a.stats.iter().zip(&b.stats) {
            assert_eq!(sa.minres_total, sb.minres_total);
            assert_eq!(sa.newton_iterations, sb.newton_iterations);
            assert_eq!(sa.energy_after.to_bits(), sb.energy_after.to_bits());
            assert_eq!(sa.mass_after.to_bits(), sb.mass_after.to_bits());
        }
    }

    #[test]
    fn convex_functional_closed_forms() {
        let sim = Simulation::new(quick_config(1, 1)).unwrap();
        let n = sim.space.num_vertices();
        let (tau, eps) = (sim.config.tau, sim.config.eps);
        let zero = NodalField::constant(1, n, 0.0);

        // all fields zero with zero history: every term vanishes
        let value = convex_functional_value(
            &sim.space,
            &sim.stiffness,
            &sim.mass,
            &sim.mean,
            &zero,
            &zero,
            0.0,
            tau,
            eps,
        )
        .unwrap();
        assert!(value.abs() < 1e-14);

        // varphi = 0 with mean 1: only the quartic term (phi + 1)^4 -> 1/(4 eps)
        let value = convex_functional_value(
            &sim.space,
            &sim.stiffness,
            &sim.mass,
            &sim.mean,
            &zero,
            &zero,
            1.0,
            tau,
            eps,
        )
        .unwrap();
        assert!((value - 1.0 / (4.0 * eps)).abs() < 1e-12);

        // non-zero-mean varphi rejected
        let bad = NodalField::constant(1, n, 0.5);
        assert!(convex_functional_value(
            &sim.space,
            &sim.stiffness,
            &sim.mass,
            &sim.mean,
            &bad,
            &zero,
            0.0,
            tau,
            eps
        )
        .is_err());
    }

    #[test]
    fn computed_step_minimizes_convex_functional() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;

        let mut sim = Simulation::new(quick_config(2, 3)).unwrap();
        let mut phi_prev_ring = sim.ring_of(&sim.state.phi, sim.state.mean_phi0);
        for _ in 0..3 {
            phi_prev_ring = sim.ring_of(&sim.state.phi, sim.state.mean_phi0);
            sim.advance().unwrap();
        }
        let minimizer = sim.ring_of(&sim.state.phi, sim.state.mean_phi0);
        let (tau, eps) = (sim.config.tau, sim.config.eps);
        let base = convex_functional_value(
            &sim.space,
            &sim.stiffness,
            &sim.mass,
            &sim.mean,
            &minimizer,
            &phi_prev_ring,
            sim.state.mean_phi0,
            tau,
            eps,
        )
        .unwrap();
        let scale = 1.0 + base.abs();

        // random zero-mean perturbations never go below the computed minimum
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = sim.space.num_vertices();
        for trial in 0..20 {
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            crate::fem::project_zero_sum(&mut dir, &sim.mean);
            let step = 10.0f64.powi(-(trial % 4) - 2);
            let perturbed = NodalField {
                level: minimizer.level,
                values: minimizer
                    .values
                    .iter()
                    .zip(&dir)
                    .map(|(&v, &d)| v + step * d)
                    .collect(),
            };
            let mut ring = perturbed;
            project_zero_sum_vector(&mut ring.values, &sim.mean);
            let value = convex_functional_value(
                &sim.space,
                &sim.stiffness,
                &sim.mass,
                &sim.mean,
                &ring,
                &phi_prev_ring,
                sim.state.mean_phi0,
                tau,
                eps,
            )
            .unwrap();
            assert!(
                value >= base - 1e-8 * scale,
                "minimality violated: {value} < {base}"
            );
        }

        // first-order optimality along random zero-mean directions
        let grad = convex_functional_gradient(
            &sim.space,
            &sim.stiffness,
            &sim.mass,
            &sim.mean,
            &minimizer,
            &phi_prev_ring,
            sim.state.mean_phi0,
            tau,
            eps,
        )
        .unwrap();
        for _ in 0..10 {
            let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            crate::fem::project_zero_sum(&mut dir, &sim.mean);
            let norm = dir.iter().map(|&v| v * v).sum::<f64>().sqrt();
            let slope: f64 = grad.iter().zip(&dir).map(|(&a, &b)| a * b).sum();
            assert!(
                slope.abs() <= 1e-6 * scale * norm,
                "directional derivative {slope}"
            );
        }
    }
}
