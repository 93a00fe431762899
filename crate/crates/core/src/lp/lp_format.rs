use std::io::{self, Write};

use super::LpProblem;

fn term(out: &mut impl Write, coef: f64, name: &str, first: bool) -> io::Result<()> {
    match (first, coef < 0.0) {
        (true, false) => write!(out, "{coef:e} {name}"),
        (true, true) => write!(out, "- {:e} {name}", -coef),
        (false, false) => write!(out, " + {coef:e} {name}"),
        (false, true) => write!(out, " - {:e} {name}", -coef),
    }
}

/// Writes `problem` in CPLEX LP format, readable by HiGHS, CBC and GLPK.
/// Row names encode family and period, e.g. `branch_flow_t3_r17`.
pub fn write_lp_format(problem: &LpProblem, out: &mut impl Write) -> io::Result<()> {
    let names: Vec<String> = problem.registry().tags().iter().map(|t| t.to_string()).collect();
    writeln!(out, "\\ objective offset {:e}", problem.objective_offset)?;
    writeln!(out, "Minimize")?;
    write!(out, " obj: ")?;
    let mut first = true;
    for (j, &c) in problem.cost().iter().enumerate() {
        if c != 0.0 {
            term(out, c, &names[j], first)?;
            first = false;
        }
    }
    if first {
        write!(out, "0 {}", names.first().map(String::as_str).unwrap_or("x"))?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (block, sense) in [(&problem.ineq, "<="), (&problem.eq, "=")] {
        for r in 0..block.rows() {
            let (family, period) = block.family(r);
            let family = family.to_string().replace([' ', '-'], "_");
            match period {
                Some(k) => write!(out, " {family}_t{k}_r{r}: ")?,
                None => write!(out, " {family}_r{r}: ")?,
            }
            let mut first = true;
            for (j, a) in block.row(r) {
                term(out, a, &names[j], first)?;
                first = false;
            }
            if first {
                write!(out, "0 {}", names[0])?;
            }
            writeln!(out, " {sense} {:e}", block.rhs()[r])?;
        }
    }
    writeln!(out, "Bounds")?;
    for (j, name) in names.iter().enumerate() {
        let (lo, up) = (problem.lower()[j], problem.upper()[j]);
        match (lo.is_finite(), up.is_finite()) {
            (true, true) => writeln!(out, " {lo:e} <= {name} <= {up:e}")?,
            (true, false) => writeln!(out, " {name} >= {lo:e}")?,
            (false, true) => writeln!(out, " -inf <= {name} <= {up:e}")?,
            (false, false) => writeln!(out, " {name} free")?,
        }
    }
    writeln!(out, "End")
}
