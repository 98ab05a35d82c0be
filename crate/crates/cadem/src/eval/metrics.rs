//! Clustering agreement (ARI, NMI) and classification (macro/micro F1)
//! metrics.

use std::collections::BTreeMap;

use crate::error::{CademError, Result};

fn contingency(a: &[usize], b: &[usize]) -> (BTreeMap<(usize, usize), usize>, BTreeMap<usize, usize>, BTreeMap<usize, usize>) {
    let mut table = BTreeMap::new();
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_insert(0) += 1;
        *rows.entry(x).or_insert(0) += 1;
        *cols.entry(y).or_insert(0) += 1;
    }
    (table, rows, cols)
}

fn choose2(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

fn check_pair(a: &[usize], b: &[usize]) -> Result<()> {
    if a.len() != b.len() {
        return Err(CademError::InvalidArgument(format!(
            "labelings of different length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(CademError::InvalidArgument(
            "agreement metrics need at least 2 samples".into(),
        ));
    }
    Ok(())
}

/// Adjusted Rand Index via the pair-counting contingency formula.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let (table, rows, cols) = contingency(a, b);
    let index: f64 = table.values().map(|&n| choose2(n)).sum();
    let sum_rows: f64 = rows.values().map(|&n| choose2(n)).sum();
    let sum_cols: f64 = cols.values().map(|&n| choose2(n)).sum();
    let total = choose2(a.len());
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    let denom = max_index - expected;
    if denom.abs() < 1e-12 {
        // Both partitions degenerate (all-singletons or all-one-cluster):
        // identical partitions score 1, anything else 0.
        let identical = rows.len() == cols.len() && table.len() == rows.len();
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok((index - expected) / denom)
}

/// Normalized mutual information with geometric-mean normalization;
/// 0 by convention when either labeling has zero entropy.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64> {
    check_pair(a, b)?;
    let (table, rows, cols) = contingency(a, b);
    let n = a.len() as f64;
    let h = |counts: &BTreeMap<usize, usize>| -> f64 {
        counts
            .values()
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let ha = h(&rows);
    let hb = h(&cols);
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for (&(x, y), &c) in &table {
        let pxy = c as f64 / n;
        let px = rows[&x] as f64 / n;
        let py = cols[&y] as f64 / n;
        mi += pxy * (pxy / (px * py)).ln();
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

/// Macro- and micro-averaged F1 over `n_classes` classes. A class with no
/// support and no predictions contributes 0 to the macro average; micro-F1
/// equals accuracy for single-label multiclass data.
pub fn f1_scores(y_true: &[usize], y_pred: &[usize], n_classes: usize) -> Result<(f64, f64)> {
    if y_true.len() != y_pred.len() {
        return Err(CademError::InvalidArgument(format!(
            "label vectors of different length: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if n_classes < 2 {
        return Err(CademError::InvalidArgument("need at least 2 classes".into()));
    }
    if let Some(&bad) = y_true.iter().chain(y_pred).find(|&&y| y >= n_classes) {
        return Err(CademError::InvalidArgument(format!(
            "label {bad} outside [0, {n_classes})"
        )));
    }
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut fnn = vec![0usize; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fnn[t] += 1;
        }
    }
    let mut macro_sum = 0.0;
    for c in 0..n_classes {
        let denom = 2 * tp[c] + fp[c] + fnn[c];
        if denom > 0 {
            macro_sum += 2.0 * tp[c] as f64 / denom as f64;
        }
    }
    let macro_f1 = macro_sum / n_classes as f64;
    let tp_total: usize = tp.iter().sum();
    let fp_total: usize = fp.iter().sum();
    let fn_total: usize = fnn.iter().sum();
    let micro_f1 = tp_total as f64 / (tp_total as f64 + 0.5 * (fp_total + fn_total) as f64);
    Ok((macro_f1, micro_f1))
}

#[cfg(test)]
pub(crate) mod oracles {
    //! Brute-force reference implementations, independent of the
    //! contingency-table code above.

    /// Rand-index quantities by enumerating every sample pair.
    pub fn ari_pair_counting(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len();
        let mut together_both = 0.0;
        let mut together_a = 0.0;
        let mut together_b = 0.0;
        let total = (n * (n - 1) / 2) as f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let sa = a[i] == a[j];
                let sb = b[i] == b[j];
                if sa {
                    together_a += 1.0;
                }
                if sb {
                    together_b += 1.0;
                }
                if sa && sb {
                    together_both += 1.0;
                }
            }
        }
        let expected = together_a * together_b / total;
        let max_index = 0.5 * (together_a + together_b);
        if (max_index - expected).abs() < 1e-12 {
            let identical = (0..n).all(|i| {
                (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j]))
            });
            return if identical { 1.0 } else { 0.0 };
        }
        (together_both - expected) / (max_index - expected)
    }

    /// NMI by direct summation over an explicit joint histogram.
    pub fn nmi_direct(a: &[usize], b: &[usize]) -> f64 {
        let n = a.len() as f64;
        let ka = a.iter().max().unwrap() + 1;
        let kb = b.iter().max().unwrap() + 1;
        let mut counts = vec![vec![0usize; kb]; ka];
        for (&x, &y) in a.iter().zip(b) {
            counts[x][y] += 1;
        }
        let joint: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| row.iter().map(|&c| c as f64 / n).collect())
            .collect();
        let pa: Vec<f64> = (0..ka)
            .map(|x| counts[x].iter().sum::<usize>() as f64 / n)
            .collect();
        let pb: Vec<f64> = (0..kb)
            .map(|y| (0..ka).map(|x| counts[x][y]).sum::<usize>() as f64 / n)
            .collect();
        let ent = |p: &[f64]| -> f64 {
            p.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
        };
        let (ha, hb) = (ent(&pa), ent(&pb));
        if ha == 0.0 || hb == 0.0 {
            return 0.0;
        }
        let mut mi = 0.0;
        for x in 0..ka {
            for y in 0..kb {
                if joint[x][y] > 0.0 {
                    mi += joint[x][y] * (joint[x][y] / (pa[x] * pb[y])).ln();
                }
            }
        }
        (mi / (ha * hb).sqrt()).clamp(0.0, 1.0)
    }

    /// Macro/micro F1 from an explicit confusion matrix.
    pub fn f1_confusion(y_true: &[usize], y_pred: &[usize], k: usize) -> (f64, f64) {
        let mut conf = vec![vec![0usize; k]; k];
        for (&t, &p) in y_true.iter().zip(y_pred) {
            conf[t][p] += 1;
        }
        let mut macro_sum = 0.0;
        let mut correct = 0usize;
        for c in 0..k {
            let tp = conf[c][c];
            correct += tp;
            let pred_c: usize = (0..k).map(|t| conf[t][c]).sum();
            let true_c: usize = conf[c].iter().sum();
            let precision = if pred_c > 0 { tp as f64 / pred_c as f64 } else { 0.0 };
            let recall = if true_c > 0 { tp as f64 / true_c as f64 } else { 0.0 };
            if precision + recall > 0.0 {
                macro_sum += 2.0 * precision * recall / (precision + recall);
            }
        }
        (macro_sum / k as f64, correct as f64 / y_true.len() as f64)
    }
}
