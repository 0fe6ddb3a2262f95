//! Plot-ready tab-separated tables and the human-readable metrics report.

use std::fmt::Write;

use crate::train::{EpochRecord, Metrics, ShiftReport};

/// Long-form table: `metric, true_class, predicted_class, value`, with `-`
/// for columns that do not apply.
pub fn metrics_tsv(m: &Metrics) -> String {
    let mut s = String::from("metric\ttrue_class\tpredicted_class\tvalue\n");
    for (c, acc) in m.per_class_accuracy.iter().enumerate() {
        let _ = writeln!(s, "class_accuracy\t{c}\t-\t{acc:.6}");
    }
    let _ = writeln!(s, "overall_accuracy\t-\t-\t{:.6}", m.overall_accuracy);
    for (t, row) in m.confusion.iter().enumerate() {
        for (p, n) in row.iter().enumerate() {
            let _ = writeln!(s, "confusion\t{t}\t{p}\t{n}");
        }
    }
    s
}

pub fn metrics_report(m: &Metrics) -> String {
    let n = m.confusion.len();
    let total: u64 = m.confusion.iter().flatten().sum();
    let mut s = String::new();
    let _ = writeln!(s, "samples: {total}");
    let _ = writeln!(s, "OA: {:.4}", m.overall_accuracy);
    let _ = writeln!(s, "\nper-class accuracy:");
    for (c, acc) in m.per_class_accuracy.iter().enumerate() {
        let support: u64 = m.confusion[c].iter().sum();
        let _ = writeln!(s, "  class {c}: {acc:.4} ({support} samples)");
    }
    let _ = writeln!(s, "\nconfusion (rows true, columns predicted):");
    let _ = write!(s, "{:>8}", "");
    for p in 0..n {
        let _ = write!(s, "{p:>8}");
    }
    s.push('\n');
    for (t, row) in m.confusion.iter().enumerate() {
        let _ = write!(s, "{t:>8}");
        for v in row {
            let _ = write!(s, "{v:>8}");
        }
        s.push('\n');
    }
    s
}

pub fn history_tsv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch\ttrain_loss\tval_oa\n");
    for r in history {
        let _ = writeln!(s, "{}\t{:.9}\t{:.6}", r.epoch, r.train_loss, r.val_oa);
    }
    s
}

/// One row per `(stream, offset)` plus a pooled `all` row per stream set.
pub fn shift_tsv(reports: &[(String, ShiftReport)]) -> String {
    let mut s = String::from("stream\toffset\tagree\ttotal\tagreement\n");
    let (mut agree, mut total) = (0usize, 0usize);
    for (name, r) in reports {
        for &(off, a, t) in &r.per_offset {
            let frac = if t == 0 { 0.0 } else { a as f64 / t as f64 };
            let _ = writeln!(s, "{name}\t{off}\t{a}\t{t}\t{frac:.6}");
            agree += a;
            total += t;
        }
    }
    let frac = if total == 0 { 0.0 } else { agree as f64 / total as f64 };
    let _ = writeln!(s, "all\t-\t{agree}\t{total}\t{frac:.6}");
    s
}
