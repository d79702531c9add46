//! Command-line front end: validation, dispatch, experiment orchestration
//! and report emission. Exit codes: 0 success, 2 validation error,
//! 3 numerical failure.

use crate::error::ModelError;
use crate::evolution::{
    dipole_experiment, evolve, fit_slope, invariants, DipoleConfig, EvolutionConfig,
};
use crate::grid::Grid;
use crate::ground_state::{
    gagliardo_nirenberg_check, solve_ground_state, GroundState, PetviashviliConfig,
};
use crate::io::{
    read_csv_columns, read_fdf1, write_fdf1, write_field_csv, CsvTable, Provenance, Report,
};
use crate::linearized::{
    build_tail_function_speed, coercivity_constant, localized_form_min_eigenvalue,
    spectral_diagnostics, LinearizedOperator,
};
use crate::modulation::{
    fit_modulation, integrate_reduced, symmetric_initial_state, ModulationState,
    ReducedOdeConfig, VAssembler,
};
use crate::profiles::{
    assemble_approximation, build_profile_set, construction_gamma_dot, residual_decompose,
    ProfileSet, WaveFamily, WaveProfiles,
};
use crate::weights::{check_estimate, default_battery, LemmaId};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "fdipole", version, about = "Two-wave interaction laboratory for fractional dispersive equations")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Domain length
    #[arg(long, default_value_t = 512.0)]
    l: f64,
    /// Number of grid points (power of two)
    #[arg(long, default_value_t = 8192)]
    n: usize,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| "not a number".to_string())?;
    if v > 1.0 && v <= 2.0 {
        Ok(v)
    } else {
        Err(format!("alpha = {v} outside the supported range (1, 2]"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the ground state and report its derived constants
    GroundState {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1e-11)]
        tol: f64,
        #[arg(long, default_value_t = 600)]
        max_iter: usize,
        /// Output field (FDF1)
        #[arg(long)]
        out: PathBuf,
        /// Constants report (key=value); defaults next to --out
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also export the profile as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Checks on the linearized operator
    Linearized {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long, value_parser = ["spectrum", "kernel", "coercivity"])]
        check: String,
        /// Separation for the localized coercivity check
        #[arg(long)]
        z: Option<f64>,
        /// Weight scale for the localized coercivity check
        #[arg(long, default_value_t = 50.0)]
        a_weight: f64,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Export the tail function as FDF1
        #[arg(long)]
        out_s0: Option<PathBuf>,
    },
    /// Build the approximation and residual decomposition at one or more separations
    Construct {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long)]
        z: Option<f64>,
        /// Symmetric scale offset mu = mu1 - mu2 (self-similar value when omitted)
        #[arg(long)]
        mu: Option<f64>,
        /// Comma-separated list of separations for a scaling scan
        #[arg(long, value_delimiter = ',')]
        scan: Option<Vec<f64>>,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Integrate the reduced parameter system
    Ode {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long)]
        z0: f64,
        #[arg(long)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        /// Include the beta/delta drift corrections from the profile build
        #[arg(long)]
        full_coeffs: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit modulation parameters from a field snapshot
    Fit {
        #[arg(long)]
        field: PathBuf,
        /// Initial guess "z,mu"
        #[arg(long)]
        guess: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve a field snapshot in time
    Evolve {
        #[arg(long, name = "in")]
        input: PathBuf,
        #[arg(long)]
        dt: f64,
        #[arg(long)]
        t0: f64,
        #[arg(long)]
        t1: f64,
        #[arg(long, default_value_t = 100)]
        snap_every: usize,
        #[arg(long)]
        track_modulation: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Final-data dipole experiment with modulation tracking
    Dipole {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        #[arg(long)]
        z_in: f64,
        #[arg(long)]
        s_final: Option<f64>,
        #[arg(long)]
        z_stop: Option<f64>,
        #[arg(long, default_value_t = 1024.0)]
        l: f64,
        #[arg(long, default_value_t = 8192)]
        n: usize,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 128)]
        fit_every: usize,
        #[arg(long)]
        track_functional: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the weighted commutator estimate battery
    Commutators {
        #[arg(long, value_parser = parse_alpha)]
        alpha: f64,
        /// Comma-separated lemma names (default: all nine)
        #[arg(long, value_delimiter = ',')]
        lemmas: Option<Vec<String>>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![4.0, 8.0, 16.0, 32.0, 64.0])]
        a_list: Vec<f64>,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value_t = 1024.0)]
        l: f64,
        #[arg(long, default_value_t = 4096)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the separation exponent from a modulation CSV
    Report {
        #[arg(long)]
        modulation: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Exit status conventions.
const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 2;
const EXIT_NUMERICAL: i32 = 3;

enum CliError {
    Validation(String),
    Numerical(String),
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::error::SolverError> for CliError {
    fn from(e: crate::error::SolverError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<crate::error::FieldError> for CliError {
    fn from(e: crate::error::FieldError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<crate::io::IoError> for CliError {
    fn from(e: crate::io::IoError) -> Self {
        CliError::Validation(e.to_string())
    }
}

pub fn run(cli: Cli) -> i32 {
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            EXIT_VALIDATION
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            EXIT_NUMERICAL
        }
    }
}

fn make_grid(args: &GridArgs) -> Result<Arc<Grid>, CliError> {
    Grid::new(args.n, args.l).map_err(|e| CliError::Validation(e.to_string()))
}

fn solve_gs(alpha: f64, c: f64, grid: &Arc<Grid>, tol: f64, max_iter: usize) -> Result<Arc<GroundState>, CliError> {
    let cfg = PetviashviliConfig { tol, max_iter };
    Ok(Arc::new(
        solve_ground_state(alpha, c, grid, cfg).map_err(|e| CliError::Numerical(e.to_string()))?,
    ))
}

fn build_machinery(
    alpha: f64,
    grid: &Arc<Grid>,
) -> Result<(Arc<GroundState>, ProfileSet), CliError> {
    let gs = solve_gs(alpha, 1.0, grid, 1e-11, 600)?;
    let op = LinearizedOperator::new(gs.clone());
    let tail = build_tail_function_speed(&op);
    let ps = build_profile_set(&op, tail)?;
    Ok((gs, ps))
}

struct Assembler<'a> {
    ps: &'a ProfileSet,
    family: &'a WaveFamily,
}

impl VAssembler for Assembler<'_> {
    fn assemble(
        &self,
        gamma: &ModulationState,
    ) -> Result<crate::profiles::ApproximateSolution, ModelError> {
        assemble_approximation(self.ps, self.family, gamma)
    }
}

fn dispatch(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GroundState {
            alpha,
            c,
            grid,
            tol,
            max_iter,
            out,
            report,
            csv,
        } => {
            if c <= 0.0 {
                return Err(CliError::Validation(format!("speed c = {c} must be positive")));
            }
            let g = make_grid(&grid)?;
            let gs = solve_gs(alpha, c, &g, tol, max_iter)?;
            write_fdf1(&out, &gs.q, alpha, 0.0)?;
            if let Some(p) = csv {
                write_field_csv(&p, &gs.q)?;
            }
            let mut r = Report::default();
            r.push("alpha", alpha, Provenance::Measured);
            r.push("c", c, Provenance::Measured);
            r.push("l2_norm_sq", gs.l2_norm_sq, Provenance::Measured);
            r.push("l3_norm_cubed", gs.l3_norm_cubed, Provenance::Measured);
            r.push("k1", gs.constants.k1, Provenance::Formula);
            r.push("k2", gs.constants.k2, Provenance::Formula);
            r.push("gamma_integral", gs.constants.gamma_integral, Provenance::Measured);
            r.push("r_gamma_integral", gs.constants.r_gamma_integral, Provenance::Measured);
            r.push("a1", gs.a1, Provenance::Formula);
            r.push("a2", gs.a2, Provenance::Formula);
            r.push("a2_fitted", gs.a2_fitted, Provenance::Fitted);
            r.push("a3_fitted", gs.a3_fitted, Provenance::Fitted);
            r.push("residual", gs.residual, Provenance::Measured);
            let gn = gagliardo_nirenberg_check(&gs, 20, 2024);
            r.push("gn_max_ratio", gn.max_ratio, Provenance::Measured);
            r.push("gn_scaling_defect", gn.scaling_invariance_defect, Provenance::Measured);
            let report_path = report.unwrap_or_else(|| out.with_extension("txt"));
            r.write(&report_path)?;
            println!("ground state written to {} (report {})", out.display(), report_path.display());
            Ok(())
        }
        Command::Linearized {
            alpha,
            check,
            z,
            a_weight,
            grid,
            out,
            out_s0,
        } => {
            let g = make_grid(&grid)?;
            let gs = solve_gs(alpha, 1.0, &g, 1e-11, 600)?;
            let op = LinearizedOperator::new(gs.clone());
            let mut r = Report::default();
            r.push("alpha", alpha, Provenance::Measured);
            match check.as_str() {
                "spectrum" => {
                    let d = spectral_diagnostics(&op)?;
                    r.push("mu0", d.mu0, Provenance::Measured);
                    r.push("second_eigenvalue", d.second_eigenvalue, Provenance::Measured);
                    r.push("negative_count", d.negative_count as f64, Provenance::Measured);
                    r.push("kernel_defect", d.kernel_defect, Provenance::Measured);
                }
                "kernel" => {
                    let defect = op.apply(&gs.q_prime).l2_norm() / gs.q_prime.l2_norm();
                    r.push("kernel_defect", defect, Provenance::Measured);
                }
                "coercivity" => match z {
                    None => {
                        let kappa = coercivity_constant(&op)?;
                        r.push("kappa", kappa, Provenance::Measured);
                    }
                    Some(zv) => {
                        let kappa = localized_coercivity_at(&op, zv, a_weight)?;
                        r.push("z", zv, Provenance::Measured);
                        r.push("a_weight", a_weight, Provenance::Measured);
                        r.push("kappa", kappa, Provenance::Measured);
                    }
                },
                _ => unreachable!("clap validates the check name"),
            }
            if let Some(p) = out_s0 {
                let tail = build_tail_function_speed(&op);
                write_fdf1(&p, &tail.s0.sample(), alpha, 0.0)?;
            }
            match out {
                Some(p) => {
                    r.write(&p)?;
                    println!("report written to {}", p.display());
                }
                None => println!("{}", r.to_string()),
            }
            Ok(())
        }
        Command::Construct {
            alpha,
            z,
            mu,
            scan,
            grid,
            out_dir,
        } => {
            let g = make_grid(&grid)?;
            let zs: Vec<f64> = match (&scan, z) {
                (Some(list), _) => list.clone(),
                (None, Some(zv)) => vec![zv],
                (None, None) => {
                    return Err(CliError::Validation("provide --z or --scan".into()))
                }
            };
            let (gs, ps) = build_machinery(alpha, &g)?;
            std::fs::create_dir_all(&out_dir).map_err(crate::io::IoError::Io)?;
            let mut table = CsvTable::new(&["z", "norm_S_H1", "norm_T_H1", "norm_EV_L2", "recon_defect"]);
            let mut pairs = Vec::new();
            let family = WaveFamily::new(gs.clone(), WaveProfiles::DirectSolve);
            for &zv in &zs {
                let gamma = match mu {
                    Some(m) => ModulationState {
                        z1: zv / 2.0,
                        z2: -zv / 2.0,
                        mu1: m / 2.0,
                        mu2: -m / 2.0,
                    },
                    None => symmetric_initial_state(alpha, ps.b1, zv),
                };
                let approx = assemble_approximation(&ps, &family, &gamma)?;
                let dot = construction_gamma_dot(&ps, &gamma)?;
                let dec = residual_decompose(&ps, &approx, &dot)?;
                let tag = format!("z{:05.0}", zv);
                write_fdf1(&out_dir.join(format!("{tag}_V.fdf")), &approx.v, alpha, 0.0)?;
                write_fdf1(&out_dir.join(format!("{tag}_EV.fdf")), &dec.e_v, alpha, 0.0)?;
                write_fdf1(&out_dir.join(format!("{tag}_S.fdf")), &dec.s_total, alpha, 0.0)?;
                write_fdf1(&out_dir.join(format!("{tag}_T.fdf")), &dec.t_field, alpha, 0.0)?;
                let s_h1 = dec.s_total.hs_norm(1.0);
                let t_h1 = dec.t_field.hs_norm(1.0);
                let ev = dec.e_v.l2_norm();
                let recon = dec.e_v.sub(&dec.reconstructed).l2_norm();
                table.push_row(&[zv, s_h1, t_h1, ev, recon]);
                pairs.push((zv.ln(), ev.ln()));
            }
            table.write(&out_dir.join("scaling.csv"))?;
            let mut r = Report::default();
            if pairs.len() >= 2 {
                r.push("ev_l2_slope", fit_slope(&pairs), Provenance::Fitted);
                r.push(
                    "predicted_slope",
                    -(5.0 + 3.0 * alpha) / 2.0,
                    Provenance::Formula,
                );
            }
            r.push("b1", ps.b1, Provenance::Measured);
            r.write(&out_dir.join("slopes.txt"))?;
            println!("construction written to {}", out_dir.display());
            Ok(())
        }
        Command::Ode {
            alpha,
            z0,
            t0,
            t1,
            full_coeffs,
            out,
        } => {
            if z0 <= 10.0 {
                return Err(CliError::Validation(format!(
                    "z0 = {z0} at or below the collision floor"
                )));
            }
            let cfg = if full_coeffs {
                let g = Grid::new(8192, 512.0).map_err(|e| CliError::Validation(e.to_string()))?;
                let (_, ps) = build_machinery(alpha, &g)?;
                let mut c = ReducedOdeConfig::leading_order(alpha, ps.b1);
                c.betas = Some(ps.betas);
                c.deltas = Some(ps.deltas);
                c
            } else {
                // closed form b1 needs only the base ground state
                let g = Grid::new(4096, 512.0).map_err(|e| CliError::Validation(e.to_string()))?;
                let gs = solve_gs(alpha, 1.0, &g, 1e-11, 600)?;
                let b1 = -2.0 * alpha * (alpha + 1.0) * gs.a1 * gs.l3_norm_cubed
                    / ((alpha - 1.0) * gs.l2_norm_sq);
                ReducedOdeConfig::leading_order(alpha, b1)
            };
            let g0 = symmetric_initial_state(alpha, cfg.b1, z0);
            let traj = match integrate_reduced(g0, t0, t1, &cfg) {
                Ok(t) => t,
                Err((e, partial)) => {
                    eprintln!("warning: integration stopped early: {e}");
                    partial
                }
            };
            let mut table =
                CsvTable::new(&["t", "z1", "z2", "mu1", "mu2", "conserved_defect"]);
            for p in &traj.points {
                table.push_row(&[
                    p.t,
                    p.state.z1,
                    p.state.z2,
                    p.state.mu1,
                    p.state.mu2,
                    p.conserved_defect,
                ]);
            }
            table.write(&out)?;
            println!("trajectory ({} points) written to {}", traj.points.len(), out.display());
            Ok(())
        }
        Command::Fit { field, guess, out } => {
            let snap = read_fdf1(&field)?;
            let parts: Vec<f64> = guess
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| CliError::Validation("guess must be \"z,mu\"".into()))?;
            if parts.len() != 2 {
                return Err(CliError::Validation("guess must be \"z,mu\"".into()));
            }
            let alpha = snap.alpha;
            if !(alpha > 1.0 && alpha <= 2.0) {
                return Err(CliError::Validation(format!(
                    "field header alpha = {alpha} outside (1, 2]"
                )));
            }
            let grid = snap.field.grid().clone();
            let (gs, ps) = build_machinery(alpha, &grid)?;
            let family = WaveFamily::new(gs.clone(), WaveProfiles::Dilated);
            let assembler = Assembler { ps: &ps, family: &family };
            let g0 = ModulationState {
                z1: parts[0] / 2.0,
                z2: -parts[0] / 2.0,
                mu1: parts[1] / 2.0,
                mu2: -parts[1] / 2.0,
            };
            let fit = fit_modulation(&snap.field, &assembler, g0, gs.l2_norm_sq)?;
            let mut r = Report::default();
            r.push("z1", fit.gamma.z1, Provenance::Fitted);
            r.push("z2", fit.gamma.z2, Provenance::Fitted);
            r.push("mu1", fit.gamma.mu1, Provenance::Fitted);
            r.push("mu2", fit.gamma.mu2, Provenance::Fitted);
            r.push("eps_l2", fit.epsilon.l2_norm(), Provenance::Measured);
            r.push(
                "eps_h_alpha2",
                fit.epsilon.hs_norm(alpha / 2.0),
                Provenance::Measured,
            );
            for (i, d) in fit.defects.iter().enumerate() {
                r.push(&format!("defect_{i}"), *d, Provenance::Measured);
            }
            r.write(&out)?;
            println!("fit written to {}", out.display());
            Ok(())
        }
        Command::Evolve {
            input,
            dt,
            t0,
            t1,
            snap_every,
            track_modulation,
            out_dir,
        } => {
            let snap = read_fdf1(&input)?;
            let alpha = snap.alpha;
            if !(alpha > 1.0 && alpha <= 2.0) {
                return Err(CliError::Validation(format!(
                    "field header alpha = {alpha} outside (1, 2]"
                )));
            }
            std::fs::create_dir_all(&out_dir).map_err(crate::io::IoError::Io)?;
            let cfg = EvolutionConfig {
                alpha,
                dt,
                t_start: t0,
                t_end: t1,
                output_stride: snap_every,
                dealias: true,
                invariant_check_stride: snap_every.max(1),
            };
            let machinery = if track_modulation {
                let grid = snap.field.grid().clone();
                Some(build_machinery(alpha, &grid)?)
            } else {
                None
            };
            let mut mod_table =
                CsvTable::new(&["t", "z1", "z2", "mu1", "mu2", "eps_h_alpha2", "F"]);
            let mut inv_table = CsvTable::new(&["t", "mass", "l2_half", "hamiltonian"]);
            let mut guess: Option<ModulationState> = None;
            let out_dir2 = out_dir.clone();
            let result = evolve(&snap.field, &cfg, |step, t, v| {
                write_fdf1(
                    &out_dir2.join(format!("v_{step:08}.fdf")),
                    v,
                    alpha,
                    t,
                )
                .map_err(|e| ModelError::Solver(crate::error::SolverError::Eigensolver(e.to_string())))?;
                let inv = invariants(v, alpha);
                inv_table.push_row(&[t, inv.mass, inv.l2_half, inv.hamiltonian]);
                if let Some((gs, ps)) = &machinery {
                    let family = WaveFamily::new(gs.clone(), WaveProfiles::Dilated);
                    let assembler = Assembler { ps, family: &family };
                    let g0 = guess.unwrap_or_else(|| {
                        symmetric_initial_state(gs.alpha, ps.b1, ps.gs.grid().length() / 8.0)
                    });
                    if let Ok(fit) = fit_modulation(v, &assembler, g0, gs.l2_norm_sq) {
                        guess = Some(fit.gamma);
                        mod_table.push_row(&[
                            t,
                            fit.gamma.z1,
                            fit.gamma.z2,
                            fit.gamma.mu1,
                            fit.gamma.mu2,
                            fit.epsilon.hs_norm(alpha / 2.0),
                            0.0,
                        ]);
                    }
                }
                Ok(())
            })
            .map_err(|e| CliError::Numerical(e.to_string()))?;
            inv_table.write(&out_dir.join("invariants.csv"))?;
            if track_modulation {
                mod_table.write(&out_dir.join("modulation.csv"))?;
            }
            write_fdf1(&out_dir.join("v_final.fdf"), &result.v, alpha, t1)?;
            let mut r = Report::default();
            r.push("steps", result.steps as f64, Provenance::Measured);
            r.push("mass_drift", result.invariants.max_mass_drift, Provenance::Measured);
            r.push("l2_drift", result.invariants.max_l2_drift, Provenance::Measured);
            r.push(
                "hamiltonian_drift",
                result.invariants.max_hamiltonian_drift,
                Provenance::Measured,
            );
            r.write(&out_dir.join("run.txt"))?;
            println!("evolution finished after {} steps", result.steps);
            Ok(())
        }
        Command::Dipole {
            alpha,
            z_in,
            s_final,
            z_stop,
            l,
            n,
            dt,
            fit_every,
            track_functional,
            out_dir,
        } => {
            let grid = Grid::new(n, l).map_err(|e| CliError::Validation(e.to_string()))?;
            let (gs, ps) = build_machinery(alpha, &grid)?;
            let kmax = grid.k_max();
            let dt = dt.unwrap_or(45.0 / kmax.powf(1.0 + alpha));
            let cfg = DipoleConfig {
                z_in,
                s_final,
                z_stop: z_stop.unwrap_or(z_in / 2.0),
                dt,
                fit_stride: fit_every,
                track_functional,
                weight_a: 50.0,
            };
            let report = dipole_experiment(gs, &ps, &cfg)?;
            std::fs::create_dir_all(&out_dir).map_err(crate::io::IoError::Io)?;
            let mut mod_table =
                CsvTable::new(&["t", "z1", "z2", "mu1", "mu2", "eps_h_alpha2", "F"]);
            for p in &report.points {
                mod_table.push_row(&[
                    p.t,
                    p.state.z1,
                    p.state.z2,
                    p.state.mu1,
                    p.state.mu2,
                    p.eps_h_alpha2,
                    p.lyapunov,
                ]);
            }
            mod_table.write(&out_dir.join("modulation.csv"))?;
            let mut ode_table = CsvTable::new(&["t", "z1", "z2", "mu1", "mu2", "conserved_defect"]);
            for p in &report.ode.points {
                ode_table.push_row(&[
                    p.t,
                    p.state.z1,
                    p.state.z2,
                    p.state.mu1,
                    p.state.mu2,
                    p.conserved_defect,
                ]);
            }
            ode_table.write(&out_dir.join("ode.csv"))?;
            let mut r = Report::default();
            r.push("fitted_exponent", report.fitted_exponent, Provenance::Fitted);
            r.push(
                "predicted_exponent",
                2.0 / (alpha + 3.0),
                Provenance::Formula,
            );
            r.push("max_rel_z_gap", report.max_rel_z_gap, Provenance::Measured);
            r.push("a_constant", report.a_constant, Provenance::Formula);
            r.push("s_final", report.s_final, Provenance::Formula);
            r.push("l2_drift", report.invariants.max_l2_drift, Provenance::Measured);
            r.write(&out_dir.join("exponent_fit.txt"))?;
            println!(
                "dipole run: exponent {:.4}, max |z_PDE - z_ODE|/z = {:.3e}",
                report.fitted_exponent, report.max_rel_z_gap
            );
            Ok(())
        }
        Command::Commutators {
            alpha,
            lemmas,
            a_list,
            seed,
            l,
            n,
            out,
        } => {
            let grid = Grid::new(n, l).map_err(|e| CliError::Validation(e.to_string()))?;
            let lemma_ids: Vec<LemmaId> = match lemmas {
                None => LemmaId::ALL.to_vec(),
                Some(names) => names
                    .iter()
                    .map(|s| {
                        LemmaId::parse(s)
                            .ok_or_else(|| CliError::Validation(format!("unknown lemma '{s}'")))
                    })
                    .collect::<Result<_, _>>()?,
            };
            let gs = solve_gs(alpha, 1.0, &grid, 1e-11, 600)?;
            let battery = default_battery(&grid, 20, seed, Some(&gs));
            let mut table = CsvTable::new(&[
                "lemma_index",
                "a_scale",
                "max_ratio",
                "fitted_slope",
                "expected_slope",
                "max_c",
                "pass",
            ]);
            let mut all_pass = true;
            for (li, lemma) in lemma_ids.iter().enumerate() {
                let rep = check_estimate(*lemma, alpha, &a_list, &battery, &grid, (0.05, -0.05))?;
                all_pass &= rep.pass;
                for (ai, a) in rep.a_values.iter().enumerate() {
                    let max_ratio = rep.ratios[ai].iter().cloned().fold(0.0f64, f64::max);
                    table.push_row(&[
                        li as f64,
                        *a,
                        max_ratio,
                        rep.fitted_slope,
                        rep.expected_slope,
                        rep.max_c,
                        if rep.pass { 1.0 } else { 0.0 },
                    ]);
                }
                println!(
                    "{}: slope {:+.3} (expected <= {:+.3} + 0.4), C = {:.3e}, {}",
                    lemma.name(),
                    rep.fitted_slope,
                    rep.expected_slope,
                    rep.max_c,
                    if rep.pass { "pass" } else { "FAIL" }
                );
            }
            table.write(&out)?;
            if all_pass {
                Ok(())
            } else {
                Err(CliError::Numerical("an estimate check failed".into()))
            }
        }
        Command::Report { modulation, out } => {
            let cols = read_csv_columns(&modulation, &["t", "z1", "z2"])?;
            let pairs: Vec<(f64, f64)> = cols[0]
                .iter()
                .zip(cols[1].iter().zip(&cols[2]))
                .filter(|(t, (z1, z2))| **t > 0.0 && *z1 - **z2 > 0.0)
                .map(|(t, (z1, z2))| (t.ln(), (z1 - z2).ln()))
                .collect();
            if pairs.len() < 2 {
                return Err(CliError::Validation(
                    "modulation CSV has fewer than two usable rows".into(),
                ));
            }
            let mut r = Report::default();
            r.push("fitted_exponent", fit_slope(&pairs), Provenance::Fitted);
            r.push("points", pairs.len() as f64, Provenance::Measured);
            r.write(&out)?;
            println!("exponent fit written to {}", out.display());
            Ok(())
        }
    }
}

/// Localized coercivity at the standard symmetric configuration.
pub fn localized_coercivity_at(
    op: &LinearizedOperator,
    z: f64,
    a_weight: f64,
) -> Result<f64, ModelError> {
    let gs = &op.gs;
    let gamma = ModulationState {
        z1: z / 2.0,
        z2: -z / 2.0,
        mu1: -0.05,
        mu2: 0.05,
    };
    if gamma.z() < 8.0 * a_weight {
        return Err(ModelError::SeparationTooSmall {
            z,
            min: 8.0 * a_weight,
        });
    }
    let wf =
        crate::weights::WeightFamily::build(gs.alpha, a_weight, gamma.mu1, gamma.mu2, gs.grid())?;
    let phi_a = wf.phi_a_field();
    let psi1 = phi_a.map(|p| (1.0 - p) / (1.0 + gamma.mu1).powi(2));
    let psi2 = phi_a.map(|p| p / (1.0 + gamma.mu2).powi(2));
    let r1t = gs.q.shift(gamma.z1);
    let r2t = gs.q.shift(gamma.z2);
    let family = WaveFamily::new(gs.clone(), WaveProfiles::Dilated);
    let s1 = family.state(1.0 + gamma.mu1)?;
    let s2 = family.state(1.0 + gamma.mu2)?;
    let constraints = [
        s1.q.shift(gamma.z1),
        s1.q_prime.shift(gamma.z1),
        s2.q.shift(gamma.z2),
        s2.q_prime.shift(gamma.z2),
    ];
    let kappa = localized_form_min_eigenvalue(op, &[psi1, psi2], &[r1t, r2t], &constraints)
        .map_err(ModelError::Solver)?;
    Ok(kappa)
}

/// Entry point used by the binary.
pub fn main() -> i32 {
    let cli = Cli::parse();
    run(cli)
}
