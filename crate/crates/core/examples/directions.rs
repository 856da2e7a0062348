// Compare the three search directions on one indefinite approximation.

use flecs::direction::{direction_fedsonia, direction_regularized, direction_truncated_inverse, truncated_inverse_operator};
use flecs::{Matrix, Vector};

fn main() -> flecs::Result<()> {
    // Eigenvalues 4, 1, 1e-6 and -2 along the coordinate axes.
    let b = Matrix::from_diagonal(&Vector::from_vec(vec![4.0, 1.0, 1e-6, -2.0]));
    let grad = Vector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
    let (omega, big_omega) = (1e-2, 1e3);

    let op = truncated_inverse_operator(&b, omega, big_omega)?;
    println!("truncated inverse diagonal: {:?}", op.diagonal().as_slice());
    let ti = direction_truncated_inverse(&b, &grad, omega, big_omega)?;
    println!("truncated inverse p = {:?}, floored {}, bounds {:?}", ti.p.as_slice(), ti.floored, ti.bounds);
    assert!(ti.p.dot(&grad) < 0.0);

    // Subspace information as the server would see it: Y~ = B S, M = S^T Y.
    let s = Matrix::from_columns(&[Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]), Vector::from_vec(vec![0.0, 1.0, 0.0, 0.0])]);
    let y = &b * &s;
    let m = s.transpose() * &y;
    for rho in [1e-4, 0.5, 10.0] {
        let fs = direction_fedsonia(&y, &m, &grad, omega, big_omega, rho)?;
        println!("fedsonia rho {rho:>7}: used {:?}, p = {:?}", fs.rho, fs.p.as_slice());
    }

    let reg = direction_regularized(&(b.abs() + Matrix::identity(4, 4) * 1e-3), &grad, 0.5)?;
    println!("regularized shift {:?}, p = {:?}", reg.shift, reg.p.as_slice());
    Ok(())
}
