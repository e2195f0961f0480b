//! Physical constants (CODATA 2018, SI units).

/// Speed of light in vacuum (m/s).
pub const C: f64 = 299_792_458.0;
/// Planck constant (J s).
pub const H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Vacuum permittivity (F/m).
pub const EPS0: f64 = 8.854_187_8128e-12;
/// Impedance of free space (Ohm).
pub const ETA0: f64 = 376.730_313_668;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;

pub const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
