use fdipole::grid::Grid;
use fdipole::ground_state::*;
use fdipole::weights::*;

fn main() {
    let alpha = 1.5f64;
    let grid = Grid::new(4096, 1024.0).unwrap();
    let gs = solve_ground_state(alpha, 1.0, &grid, PetviashviliConfig::default()).unwrap();
    let u = gs.lambda_speed.clone();
    let du = u.fractional_derivative(alpha).unwrap();
    let a = 64.0;
    let wf = WeightFamily::build(alpha, a, 0.05, -0.05, &grid).unwrap();
    let phi1 = wf.small_phi_field(1);
    let bphi = wf.big_phi_field(1);
    let w = u.mul(&bphi).fractional_derivative(alpha / 2.0).unwrap();
    let dens = du.mul(&u.derivative()).mul(&phi1).add(&w.mul(&w).scale((alpha - 1.0) / 2.0));
    let h = grid.spacing();
    // cumulative contribution by |y| octave
    let edges = [0.0, 2.0, 8.0, 32.0, 128.0, 256.0, 384.0, 409.6, 512.0];
    for k in 0..edges.len() - 1 {
        let s: f64 = grid.points().iter().zip(dens.values())
            .filter(|(&y, _)| y.abs() >= edges[k] && y.abs() < edges[k + 1])
            .map(|(_, &v)| v * h).sum();
        println!("band |y| in [{:6.1},{:6.1}): {:+.4e}", edges[k], edges[k + 1], s);
    }
    let full: f64 = dens.values().iter().map(|&v| v * h).sum();
    let int: f64 = grid.points().iter().zip(dens.values()).filter(|(&y, _)| y.abs() <= 0.4 * 1024.0).map(|(_, &v)| v * h).sum();
    println!("full-grid sum = {full:+.4e}; interior = {int:+.4e}");
}
