//! Text format for constraint sets over covariance entries.
//!
//! ```text
//! # one constraint per line
//! <label> <op> : <expr>
//! ```
//!
//! `op` is `eq` (`expr = 0`) or `le` (`expr <= 0`). `expr` is a sum of
//! products; each factor is a number, `t<i>` (coordinate `i` of the
//! column-major lower-triangular half-vectorization of `Σ`, zero based) or
//! `s(u,v)` (the covariance of data columns `u` and `v`, one based). Example:
//!
//! ```text
//! tet1 eq : s(1,2)*s(3,4) - s(1,4)*s(2,3)
//! pos  le : -1*t1*t2*t5
//! ```

use crate::error::{Error, Result};
use crate::kernel::{vech_index, vech_len, vech_pair, Constraint, ConstraintKind, PolynomialSpec};

/// Parses a constraint file for data with `l` columns.
pub fn parse_constraint_file(text: &str, l: usize) -> Result<Vec<Constraint>> {
    if l == 0 {
        return Err(Error::Input("data must have at least one column".into()));
    }
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| Error::Input(format!("constraints line {}: {msg}", lineno + 1));
        let (head, expr) = line
            .split_once(':')
            .ok_or_else(|| at("expected `<label> <op> : <expr>`".into()))?;
        let head: Vec<&str> = head.split_whitespace().collect();
        let [label, op] = head[..] else {
            return Err(at(format!("expected `<label> <op>` before `:`, found `{}`", head.join(" "))));
        };
        let kind = match op {
            "eq" => ConstraintKind::Equality,
            "le" => ConstraintKind::Inequality,
            other => return Err(at(format!("unknown operator `{other}` (expected eq or le)"))),
        };
        let (constant, terms) = parse_expr(expr, l).map_err(at)?;
        let poly = PolynomialSpec::new(constant, terms, vech_len(l)).map_err(|e| at(e.to_string()))?;
        out.push(Constraint {
            label: label.to_string(),
            kind,
            poly,
        });
    }
    Ok(out)
}

type Terms = Vec<(f64, Vec<usize>)>;

fn parse_expr(expr: &str, l: usize) -> std::result::Result<(f64, Terms), String> {
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty expression".into());
    }
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut rest = compact.as_str();
    let mut first = true;
    while !rest.is_empty() {
        let mut sign = 1.0;
        match rest.as_bytes()[0] {
            b'+' => rest = &rest[1..],
            b'-' => {
                sign = -1.0;
                rest = &rest[1..];
            }
            _ if !first => return Err(format!("expected `+` or `-` before `{rest}`")),
            _ => {}
        }
        first = false;
        let end = term_end(rest);
        let (term, tail) = rest.split_at(end);
        rest = tail;
        if term.is_empty() {
            return Err("dangling sign".into());
        }
        let mut coef = sign;
        let mut indices = Vec::new();
        for factor in term.split('*') {
            if let Some(i) = factor.strip_prefix('t') {
                let i: usize = i.parse().map_err(|_| format!("bad coordinate `{factor}`"))?;
                if i >= vech_len(l) {
                    return Err(format!("coordinate t{i} out of range (dimension {})", vech_len(l)));
                }
                indices.push(i);
            } else if let Some(inner) = factor.strip_prefix("s(").and_then(|f| f.strip_suffix(')')) {
                let (u, v) = inner.split_once(',').ok_or_else(|| format!("bad symbol `{factor}`"))?;
                let parse = |s: &str| -> std::result::Result<usize, String> {
                    match s.parse::<usize>() {
                        Ok(k) if (1..=l).contains(&k) => Ok(k - 1),
                        _ => Err(format!("column `{s}` in `{factor}` is not in 1..={l}")),
                    }
                };
                indices.push(vech_index(l, parse(u)?, parse(v)?));
            } else {
                let c: f64 = factor.parse().map_err(|_| format!("cannot parse factor `{factor}`"))?;
                coef *= c;
            }
        }
        if indices.is_empty() {
            constant += coef;
        } else {
            terms.push((coef, indices));
        }
    }
    Ok((constant, terms))
}

// A term ends at the next `+`/`-` that is not part of a number exponent.
fn term_end(s: &str) -> usize {
    let b = s.as_bytes();
    for i in 0..b.len() {
        if (b[i] == b'+' || b[i] == b'-') && !(i > 0 && (b[i - 1] == b'e' || b[i - 1] == b'E') && i > 1 && b[i - 2].is_ascii_digit()) {
            return i;
        }
    }
    b.len()
}

/// Writes constraints in the same format using `t<i>` coordinates.
pub fn write_constraint_file(constraints: &[Constraint]) -> String {
    let mut out = String::new();
    for c in constraints {
        let op = match c.kind {
            ConstraintKind::Equality => "eq",
            ConstraintKind::Inequality => "le",
        };
        let mut expr = String::new();
        for t in c.poly.terms() {
            let factors: Vec<String> = t.indices.iter().map(|i| format!("t{i}")).collect();
            let sign = if t.coef < 0.0 { "-" } else { "+" };
            expr.push_str(&format!(" {sign} {}*{}", t.coef.abs(), factors.join("*")));
        }
        if c.poly.constant() != 0.0 || expr.is_empty() {
            let k = c.poly.constant();
            expr.push_str(&format!(" {} {}", if k < 0.0 { "-" } else { "+" }, k.abs()));
        }
        out.push_str(&format!("{} {op} :{}\n", c.label, expr));
    }
    out
}

/// Renders coordinate `t<i>` as `s(u,v)` with one-based columns.
pub fn coordinate_symbol(l: usize, i: usize) -> String {
    let (r, c) = vech_pair(l, i);
    format!("s({},{})", c + 1, r + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tetrad_both_notations() {
        let l = 4;
        let a = parse_constraint_file("t1 eq : s(1,2)*s(3,4) - s(1,4)*s(2,3)\n", l).unwrap();
        let text = format!(
            "t1 eq : t{}*t{} - 1*t{}*t{}",
            vech_index(l, 0, 1),
            vech_index(l, 2, 3),
            vech_index(l, 0, 3),
            vech_index(l, 1, 2)
        );
        let b = parse_constraint_file(&text, l).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].kind, ConstraintKind::Equality);
        assert_eq!(a[0].poly.total_degree(), 2);
    }

    #[test]
    fn coefficients_constants_and_exponents() {
        let c = parse_constraint_file("x le : -2.5*t0*t0 + 1e-3 + 3*2*t2 # tail comment\n\n", 2).unwrap();
        let p = &c[0].poly;
        assert_eq!(p.constant(), 1e-3);
        assert_eq!(p.terms().len(), 2);
        assert!((p.evaluate(&[2.0, 0.0, 1.0]) - (-4.0 + 1e-3)).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_constraint_file("ok eq : t0\nbad ge : t1\n", 2).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        assert!(parse_constraint_file("a eq : t9", 2).is_err());
        assert!(parse_constraint_file("a eq : s(0,1)", 2).is_err());
        assert!(parse_constraint_file("a eq t0", 2).is_err());
        assert!(parse_constraint_file("a eq : t0 t1", 2).is_err());
        assert!(parse_constraint_file("a eq : t0 +", 2).is_err());
        assert!(parse_constraint_file("# nothing\n", 2).unwrap().is_empty());
    }

    #[test]
    fn written_file_parses_back() {
        let src = "a eq : s(1,2)*s(3,4) - s(1,4)*s(2,3)\nb le : -1*s(1,2)*s(1,3)*s(2,3) + 0.5\n";
        let parsed = parse_constraint_file(src, 4).unwrap();
        let again = parse_constraint_file(&write_constraint_file(&parsed), 4).unwrap();
        assert_eq!(parsed, again);
        assert_eq!(coordinate_symbol(4, vech_index(4, 2, 0)), "s(1,3)");
    }
}
