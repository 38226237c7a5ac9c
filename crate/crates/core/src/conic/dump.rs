use std::io::{self, Write};

use super::ConicProblem;

/// Writes a problem as plain text, one nonzero per line, for debugging.
///
/// ```text
/// block <kind> <index> <size>
/// <block> <row> <col> <constraint|obj> <value>
/// rhs <constraint> <value>
/// ```
pub fn write_sparse_text<W: Write>(problem: &ConicProblem, mut out: W) -> io::Result<()> {
    for (i, kind) in problem.blocks().iter().enumerate() {
        let name = match kind {
            super::BlockKind::Free(_) => "free",
            super::BlockKind::Nonneg(_) => "nonneg",
            super::BlockKind::PsdMatrix(_) => "psd",
        };
        writeln!(out, "block {name} {i} {}", kind.side())?;
    }
    for t in problem.objective() {
        writeln!(out, "{} {} {} obj {:e}", t.block.0, t.row, t.col, t.coef)?;
    }
    for (k, c) in problem.constraints().iter().enumerate() {
        for t in &c.terms {
            writeln!(out, "{} {} {} {k} {:e}", t.block.0, t.row, t.col, t.coef)?;
        }
        writeln!(out, "rhs {k} {:e}", c.rhs)?;
    }
    Ok(())
}
