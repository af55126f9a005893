//! CSV output. Numbers use 17 significant digits in scientific notation so
//! that doubles round-trip exactly; absent values are empty fields.

use std::io::Write;

use crate::dynamics::Trajectory;
use crate::geometry::TreeGraph;
use crate::model::Generator;
use crate::perturbation::GapScanTable;
use crate::spectral::Spectrum;

/// `{:.16e}`, with `nan`/`inf`/`-inf` for non-finite values.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// Header plus rows of already formatted fields.
pub fn write_table<W: Write>(w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> std::io::Result<()> {
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(header)?;
    for row in rows {
        csv.write_record(&row)?;
    }
    csv.flush()
}

/// `index,re_lambda,im_lambda,residual`, one row per eigenvalue in the given
/// order; `index` is the row position and `residual` is empty without
/// eigenvectors.
pub fn write_spectrum_csv<W: Write>(w: W, spec: &Spectrum, order: &[usize]) -> std::io::Result<()> {
    write_table(
        w,
        &["index", "re_lambda", "im_lambda", "residual"],
        order.iter().enumerate().map(|(row, &k)| {
            let z = spec.eigenvalues[k];
            let residual = spec.residuals.get(k).map(|&r| fmt_f64(r)).unwrap_or_default();
            vec![row.to_string(), fmt_f64(z.re), fmt_f64(z.im), residual]
        }),
    )
}

/// `tau,site_1..site_N`.
pub fn write_trajectory_csv<W: Write>(w: W, traj: &Trajectory) -> std::io::Result<()> {
    let n = traj.states.first().map(|s| s.values.len()).unwrap_or(0);
    let names: Vec<String> = std::iter::once("tau".to_string())
        .chain((1..=n).map(|i| format!("site_{i}")))
        .collect();
    let header: Vec<&str> = names.iter().map(String::as_str).collect();
    write_table(
        w,
        &header,
        traj.states
            .iter()
            .map(|s| std::iter::once(fmt_f64(s.tau)).chain(s.values.iter().map(|&v| fmt_f64(v))).collect()),
    )
}

/// `L,mu,dE_pred_mantissa,dE_pred_exp10,dE_exact,rel_err,validity_flag`.
pub fn write_scan_csv<W: Write>(w: W, table: &GapScanTable) -> std::io::Result<()> {
    write_table(
        w,
        &["L", "mu", "dE_pred_mantissa", "dE_pred_exp10", "dE_exact", "rel_err", "validity_flag"],
        table.rows.iter().map(|r| {
            let (m, e) = r.de_pred.mantissa_exp10();
            let (m, e) = if r.error.is_some() {
                (String::new(), String::new())
            } else {
                (fmt_f64(m), e.to_string())
            };
            vec![
                r.l.to_string(),
                fmt_f64(r.mu),
                m,
                e,
                fmt_opt(r.de_exact),
                fmt_opt(r.rel_err),
                r.flag(),
            ]
        }),
    )
}

/// `parent_id,child_id` with breadth-first node ids (root 0).
pub fn write_edge_list_csv<W: Write>(w: W, tree: &TreeGraph) -> std::io::Result<()> {
    write_table(
        w,
        &["parent_id", "child_id"],
        tree.edges().into_iter().map(|(p, c)| vec![p.to_string(), c.to_string()]),
    )
}

/// Nonzero entries `row,col,value` (0-based) in row-major order.
pub fn write_generator_csv<W: Write>(w: W, g: &Generator) -> std::io::Result<()> {
    let m = g.matrix();
    let n = g.size();
    let mut rows = Vec::new();
    for i in 0..n {
        for &off in g.offsets() {
            let j = i as isize + off;
            if j < 0 || j >= n as isize {
                continue;
            }
            let v = m[(i, j as usize)];
            if v != 0.0 {
                rows.push(vec![i.to_string(), j.to_string(), fmt_f64(v)]);
            }
        }
    }
    write_table(w, &["row", "col", "value"], rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_tree;
    use crate::model::{build_generator_hn, HNParams};

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 6.02214076e23, 5e-324, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_f64(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_opt(None), "");
    }

    #[test]
    fn edge_list_and_generator() {
        let mut buf = Vec::new();
        write_edge_list_csv(&mut buf, &build_tree(2, 2).unwrap()).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "parent_id,child_id\n0,1\n0,2\n");
        let mut buf = Vec::new();
        write_generator_csv(&mut buf, &build_generator_hn(&HNParams::new(2.0, 1.0, 2))).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "row,col,value\n0,1,-2.0000000000000000e0\n1,0,-1.0000000000000000e0\n"
        );
    }
}
