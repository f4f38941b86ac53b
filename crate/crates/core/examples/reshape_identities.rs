//! The F/G reshapes and the symmetry maps on a small example.

use mals::{kron, reshape_f, reshape_g, symmetry_maps, vec, ReshapeSig};
use nalgebra::DMatrix;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
    let y = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.0]);
    let sig = ReshapeSig::square(2);

    // F turns a Kronecker product into an outer product of vecs.
    let k = kron(&x, &y);
    let f = reshape_f(&k, sig)?;
    let outer = vec(&x) * vec(&y).transpose();
    assert!((&f - &outer).amax() < 1e-14);
    assert_eq!(reshape_g(&f, sig)?, k);

    let maps = symmetry_maps(3);
    let s = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 4.0]);
    let h = maps.half_vec(&s);
    assert_eq!(maps.from_half_vec(&h), s);

    println!("F(X ⊗ Y) = vec X vec Yᵀ:\n{f}");
    println!("half-vec of a 3x3 symmetric matrix: {}", h.transpose());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
