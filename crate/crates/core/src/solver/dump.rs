use std::fmt::Write;

use super::{SecondOrderConeProgram, lower};

/// Plain-text rendering of the lowered standard form, for cross-checking a
/// problem with an external solver.
///
/// Sections: `c`, `A`/`b` (equalities), `G`/`h` (conic inequalities
/// `G x + s = h`), then the cone layout as `nonneg <l>` and `soc <q1> <q2> ...`.
/// Matrices are written one row per line, entries separated by spaces.
pub fn dump_standard_form(socp: &SecondOrderConeProgram) -> String {
    let (form, _) = lower(socp);
    let mut out = String::new();
    let vec_line = |out: &mut String, name: &str, v: &[f64]| {
        let cells: Vec<String> = v.iter().map(|x| format!("{x:e}")).collect();
        if name.is_empty() {
            let _ = writeln!(out, "{}", cells.join(" "));
        } else {
            let _ = writeln!(out, "{name} {}", cells.join(" "));
        }
    };
    vec_line(&mut out, "c", form.c.as_slice());
    for (name, mat, rhs, rhs_name) in [("A", &form.a, &form.b, "b"), ("G", &form.g, &form.h, "h")] {
        let _ = writeln!(out, "{name} {} {}", mat.nrows(), mat.ncols());
        for i in 0..mat.nrows() {
            let row: Vec<f64> = mat.row(i).iter().copied().collect();
            vec_line(&mut out, "", &row);
        }
        vec_line(&mut out, rhs_name, rhs.as_slice());
    }
    let _ = writeln!(out, "nonneg {}", form.layout.nonneg);
    let _ = write!(out, "soc");
    for q in &form.layout.soc {
        let _ = write!(out, " {q}");
    }
    out.push('\n');
    out
}
