use std::io::{BufRead, BufReader, Read, Write};

use ndarray::Array2;

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::solver::{FitResult, SolverState};

fn write_matrix<W: Write>(w: &mut W, tag: &str, mode: usize, m: &Array2<f64>) -> Result<()> {
    writeln!(w, "{tag} {mode} {} {}", m.nrows(), m.ncols())?;
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    Ok(())
}

/// Writes a solver state and its constraints as text. Values use the
/// shortest exact decimal form, so reading back is lossless.
pub fn write_state<W: Write>(mut w: W, state: &SolverState, specs: &[ConstraintSpec]) -> Result<()> {
    writeln!(w, "# ntf solver state")?;
    writeln!(w, "order {}", state.order())?;
    writeln!(w, "iter {}", state.iter)?;
    let specs: Vec<String> = specs.iter().map(ToString::to_string).collect();
    writeln!(w, "constraints {}", specs.join(" "))?;
    let rhos: Vec<String> = state.penalties.iter().map(|v| format!("{v:e}")).collect();
    writeln!(w, "penalties {}", rhos.join(" "))?;
    for (tag, ms) in [("factor", &state.factors), ("aux", &state.aux), ("dual", &state.duals)] {
        for (m, u) in ms.iter().enumerate() {
            write_matrix(&mut w, tag, m, u)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn bad(line: usize, what: impl std::fmt::Display) -> Error {
    Error::Format(format!("state line {line}: {what}"))
}

fn numbers<T: std::str::FromStr>(line: usize, fields: &[&str]) -> Result<Vec<T>> {
    fields
        .iter()
        .map(|f| f.parse().map_err(|_| bad(line, format!("invalid number `{f}`"))))
        .collect()
}

type Lines = std::vec::IntoIter<(usize, String)>;

fn header(it: &mut Lines, key: &str) -> Result<(usize, Vec<String>)> {
    let (n, l) = it.next().ok_or_else(|| Error::Format(format!("state file ends before `{key}`")))?;
    let mut f = l.split_whitespace();
    if f.next() != Some(key) {
        return Err(bad(n, format!("expected `{key}`")));
    }
    Ok((n, f.map(String::from).collect()))
}

fn single<T: std::str::FromStr>(it: &mut Lines, key: &str) -> Result<T> {
    let (n, fields) = header(it, key)?;
    match fields.as_slice() {
        [v] => v.parse().map_err(|_| bad(n, format!("invalid {key}"))),
        _ => Err(bad(n, "expected one value")),
    }
}

fn read_group(it: &mut Lines, tag: &str, order: usize) -> Result<Vec<Array2<f64>>> {
    (0..order)
        .map(|mode| {
            let (n, fields) = header(it, tag)?;
            let fields: Vec<&str> = fields.iter().map(String::as_str).collect();
            let shape = numbers::<usize>(n, &fields)?;
            let [m, rows, cols] = shape[..] else {
                return Err(bad(n, "expected mode, rows and columns"));
            };
            if m != mode {
                return Err(bad(n, format!("expected mode {mode}")));
            }
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, l) = it.next().ok_or_else(|| Error::Format("state file ends inside a matrix".into()))?;
                let row = numbers::<f64>(n, &l.split_whitespace().collect::<Vec<_>>())?;
                if row.len() != cols {
                    return Err(bad(n, format!("expected {cols} values")));
                }
                values.extend(row);
            }
            Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked"))
        })
        .collect()
}

/// Reads what [`write_state`] wrote.
pub fn read_state<R: Read>(r: R) -> Result<(SolverState, Vec<ConstraintSpec>)> {
    let mut lines = Vec::new();
    for (n, l) in BufReader::new(r).lines().enumerate() {
        let l = l?;
        let t = l.trim();
        if !t.is_empty() && !t.starts_with('#') {
            lines.push((n + 1, t.to_string()));
        }
    }
    let mut it = lines.into_iter();
    let order: usize = single(&mut it, "order")?;
    let iter: usize = single(&mut it, "iter")?;
    let (n, specs) = header(&mut it, "constraints")?;
    let specs = specs.iter().map(|s| s.parse()).collect::<Result<Vec<ConstraintSpec>>>()?;
    let (m, rhos) = header(&mut it, "penalties")?;
    let rhos: Vec<&str> = rhos.iter().map(String::as_str).collect();
    let penalties = numbers::<f64>(m, &rhos)?;
    if specs.len() != order || penalties.len() != order {
        return Err(bad(n, format!("expected {order} constraints and penalties")));
    }
    let factors = read_group(&mut it, "factor", order)?;
    let aux = read_group(&mut it, "aux", order)?;
    let duals = read_group(&mut it, "dual", order)?;
    if let Some((n, _)) = it.next() {
        return Err(bad(n, "trailing content"));
    }
    let state = SolverState { factors, aux, duals, penalties, iter };
    crate::tensor::check_dims(&state.dims())?;
    state.check_shapes()?;
    Ok((state, specs))
}

/// Per-iteration residual history, plus RFE when it was recorded.
pub fn write_history<W: Write>(out: W, result: &FitResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let order = result.state.order();
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=order).map(|m| format!("primal_mode{m}")));
    header.extend((1..=order).map(|m| format!("dual_mode{m}")));
    header.push("rfe".into());
    w.write_record(&header)?;
    for (k, res) in result.residual_history.iter().enumerate() {
        let mut rec = vec![(k + 1).to_string()];
        rec.extend(res.primal.iter().chain(&res.dual).map(|v| v.to_string()));
        rec.push(result.rfe_history.get(k).map_or(String::new(), |v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
