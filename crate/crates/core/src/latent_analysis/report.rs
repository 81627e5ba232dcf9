use std::fmt::Write as _;

use ndarray::ArrayView2;

use super::grid::GridResult;
use super::svr::KernelKind;
use crate::data::VolumeRecord;
use crate::error::{Error, Result};
use crate::metrics::format_metric;

/// Plot-ready projection coordinates with the record labels.
pub fn projection_csv(records: &[VolumeRecord], coords: ArrayView2<f64>) -> Result<String> {
    if coords.nrows() != records.len() || coords.ncols() != 2 {
        return Err(Error::shape("projection_csv", &[records.len(), 2], &[coords.nrows(), coords.ncols()]));
    }
    let mut out = String::from("record_id,comp1,comp2,age,sdmt,sex\n");
    for (r, row) in records.iter().zip(coords.rows()) {
        let sdmt = r.sdmt.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", r.id(), row[0], row[1], r.age, sdmt, r.sex);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionRow {
    pub task: String,
    pub mae: f64,
    pub r2: f64,
    pub rmse: f64,
    pub c: f64,
    pub kernel: KernelKind,
}

pub fn regression_csv(rows: &[RegressionRow]) -> String {
    let mut out = String::from("task,mae,r2,rmse,c,kernel\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.task,
            format_metric(r.mae),
            format_metric(r.r2),
            format_metric(r.rmse),
            r.c,
            r.kernel.name()
        );
    }
    out
}

/// Cross-validation table: one row per configuration with per-fold MAE.
pub fn grid_csv(result: &GridResult) -> String {
    let folds = result.rows.first().map_or(0, |r| r.fold_mae.len());
    let mut out = String::from("kernel,c,mean_mae");
    for f in 0..folds {
        let _ = write!(out, ",fold{}", f + 1);
    }
    out.push('\n');
    for r in &result.rows {
        let _ = write!(out, "{},{},{}", r.params.kernel.name(), r.params.c, r.mean_mae);
        for m in &r.fold_mae {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
    }
    out
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape("spearman", &[a.len()], &[b.len()]));
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::invalid("spearman: constant input"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::path::PathBuf;

    #[test]
    fn spearman_cases() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 25.0, 100.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn projection_rows() {
        let recs = vec![
            VolumeRecord {
                subject_id: "s1".into(),
                session_id: "1".into(),
                path: PathBuf::from("a.mvol"),
                age: 30.0,
                sdmt: Some(50.0),
                sex: 0,
            },
            VolumeRecord {
                subject_id: "s2".into(),
                session_id: "1".into(),
                path: PathBuf::from("b.mvol"),
                age: 60.5,
                sdmt: None,
                sex: 1,
            },
        ];
        let text = projection_csv(&recs, array![[0.5, -1.0], [2.0, 0.25]].view()).unwrap();
        assert_eq!(text, "record_id,comp1,comp2,age,sdmt,sex\ns1:1,0.5,-1,30,50,0\ns2:1,2,0.25,60.5,,1\n");
        assert!(projection_csv(&recs, array![[0.5, -1.0]].view()).is_err());
    }
}
