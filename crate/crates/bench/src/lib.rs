//! Fixtures shared by the criterion benches in `benches/`.

use routhlab_core::homogenize::{jacobi_finsler, FinslerModel};
use routhlab_core::verify::{builtin_lagrangian, rescale_to_energy};
use routhlab_core::LagrangianModel;

/// A built-in model with an energy level and a start state on it.
pub struct Fixture {
    pub lagrangian: LagrangianModel,
    pub finsler: FinslerModel,
    pub energy: f64,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
}

pub fn fixture(family: &str) -> Fixture {
    let (lagrangian, floor) = builtin_lagrangian(family).expect("known family");
    let energy = if family == "poincare_magnetic" { 1.0 } else { floor + 1.0 };
    let x0 = vec![0.2, -0.1];
    let v0 = rescale_to_energy(&lagrangian, &x0, &[0.6, 0.8], energy).expect("reachable energy");
    let finsler = jacobi_finsler(&lagrangian, energy).expect("Finsler function");
    Fixture {
        lagrangian,
        finsler,
        energy,
        x0,
        v0,
    }
}
