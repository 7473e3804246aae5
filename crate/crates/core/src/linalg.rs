//! Small dense helpers for 4×4 real matrices: exponential, principal
//! logarithm, and a Pauli basis for one qubit.

use nalgebra::{Complex, Matrix2, Matrix4};

pub type C64 = Complex<f64>;

/// The four Pauli matrices in the order (I, X, Y, Z).
pub fn paulis() -> [Matrix2<C64>; 4] {
    let z = C64::new(0.0, 0.0);
    let o = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    [
        Matrix2::new(o, z, z, o),
        Matrix2::new(z, o, o, z),
        Matrix2::new(z, -i, i, z),
        Matrix2::new(o, z, z, -o),
    ]
}

/// Matrix exponential (nalgebra's Padé scaling-and-squaring).
pub fn expm(m: &Matrix4<f64>) -> Matrix4<f64> {
    m.exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogmFailure {
    /// An eigenvalue sits on the closed negative real axis.
    NegativeRealEigenvalue,
    /// Square-root iteration did not settle.
    NoConvergence,
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Repeated Denman–Beavers square roots bring the matrix close to the
/// identity, where a truncated Gregory series `log(A) = 2 atanh((A-I)(A+I)^-1)`
/// converges fast; the result is scaled back by `2^k`.
pub fn logm(a: &Matrix4<f64>) -> Result<Matrix4<f64>, LogmFailure> {
    let eig = a.complex_eigenvalues();
    let scale = a.norm().max(1.0);
    for ev in eig.iter() {
        if ev.re <= 1e-14 * scale && ev.im.abs() <= 1e-12 * scale {
            return Err(LogmFailure::NegativeRealEigenvalue);
        }
    }

    let id = Matrix4::<f64>::identity();
    let mut x = *a;
    let mut k = 0u32;
    while (x - id).norm() > 0.25 {
        x = sqrtm_db(&x)?;
        k += 1;
        if k > 64 {
            return Err(LogmFailure::NoConvergence);
        }
    }

    // atanh series in z = (X - I)(X + I)^-1, ||z|| <= ~0.15 here.
    let denom = (x + id).try_inverse().ok_or(LogmFailure::NoConvergence)?;
    let z = (x - id) * denom;
    let z2 = z * z;
    let mut term = z;
    let mut sum = z;
    for n in 1..40 {
        term *= z2;
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.norm() < 1e-18 {
            break;
        }
    }
    Ok(sum * 2.0 * f64::powi(2.0, k as i32))
}

/// Principal square root via the Denman–Beavers iteration.
fn sqrtm_db(a: &Matrix4<f64>) -> Result<Matrix4<f64>, LogmFailure> {
    let mut y = *a;
    let mut z = Matrix4::<f64>::identity();
    for _ in 0..100 {
        let yi = y.try_inverse().ok_or(LogmFailure::NoConvergence)?;
        let zi = z.try_inverse().ok_or(LogmFailure::NoConvergence)?;
        let y_next = (y + zi) * 0.5;
        let z_next = (z + yi) * 0.5;
        let delta = (y_next - y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            return Ok(y);
        }
    }
    Err(LogmFailure::NoConvergence)
}
