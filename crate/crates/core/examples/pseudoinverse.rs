//! Thin SVD and the Moore-Penrose pseudoinverse on a rank-deficient matrix.
//!
//! ```bash
//! cargo run --example pseudoinverse
//! ```

use iv4rec::numerics::{pinv, svd, Matrix};

fn main() -> iv4rec::Result<()> {
    // rank 2: the third column is the sum of the first two
    let a = Matrix::from_rows(&[
        vec![1.0, 0.0, 1.0],
        vec![0.0, 2.0, 2.0],
        vec![1.0, 1.0, 2.0],
        vec![3.0, 0.0, 3.0],
    ])?;
    let dec = svd(&a)?;
    println!("singular values: {:?}", dec.singular_values);
    println!("reconstruction error: {:.2e}", dec.reconstruct().sub(&a)?.frobenius_norm());

    let p = pinv(&a, None)?;
    println!("pinv is {}x{}", p.rows(), p.cols());
    let apa = a.matmul(&p)?.matmul(&a)?;
    let pap = p.matmul(&a)?.matmul(&p)?;
    let ap = a.matmul(&p)?;
    let pa = p.matmul(&a)?;
    println!("|A A+ A - A|      = {:.2e}", apa.sub(&a)?.frobenius_norm());
    println!("|A+ A A+ - A+|    = {:.2e}", pap.sub(&p)?.frobenius_norm());
    println!("|(A A+)' - A A+|  = {:.2e}", ap.transpose().sub(&ap)?.frobenius_norm());
    println!("|(A+ A)' - A+ A|  = {:.2e}", pa.transpose().sub(&pa)?.frobenius_norm());

    // a looser cutoff drops the smallest direction as well
    let coarse = pinv(&a, Some(0.5))?;
    println!("rcond 0.5 pinv norm {:.4} vs default {:.4}", coarse.frobenius_norm(), p.frobenius_norm());
    Ok(())
}
