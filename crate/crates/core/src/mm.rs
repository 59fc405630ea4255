//! Plain-text coordinate export of dense matrices (matrix-market style).

use std::io::Write;

use nalgebra::DMatrix;

/// Writes the nonzero entries of `m` in coordinate format with 1-based
/// indices:
///
/// ```text
/// %%MatrixMarket matrix coordinate real general
/// <rows> <cols> <nnz>
/// <i> <j> <value>
/// ```
pub fn write_coordinate<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    let nnz = m.iter().filter(|v| **v != 0.0).count();
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), nnz)?;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                writeln!(w, "{} {} {v:.16e}", i + 1, j + 1)?;
            }
        }
    }
    Ok(())
}
