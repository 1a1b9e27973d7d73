//! Text rendering for reports: aligned tables, change-marked adversarial
//! strings, and small numeric helpers.

/// Monospace table with left-aligned columns.
pub fn text_table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate().take(cols) {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: Vec<&str>, widths: &[usize]| -> String {
        let mut line = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{cell:<width$}", width = widths[i]));
        }
        line.trim_end().to_string()
    };
    out.push_str(&fmt_row(headers.to_vec(), &widths));
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (cols - 1)));
    out.push('\n');
    for row in rows {
        out.push_str(&fmt_row(row.iter().map(|s| s.as_str()).collect(), &widths));
        out.push('\n');
    }
    out
}

/// Render the adversarial string with every span that is not part of a
/// longest common subsequence with the original wrapped in brackets.
pub fn diff_markup(original: &[u8], adversarial: &[u8]) -> String {
    let kept = lcs_kept_positions(original, adversarial);
    let mut out = String::new();
    let mut in_change = false;
    for (i, &b) in adversarial.iter().enumerate() {
        if kept[i] && in_change {
            out.push(']');
            in_change = false;
        } else if !kept[i] && !in_change {
            out.push('[');
            in_change = true;
        }
        out.push_str(&printable_byte(b));
    }
    if in_change {
        out.push(']');
    }
    out
}

/// For each adversarial position, whether it belongs to an LCS with the
/// original string.
fn lcs_kept_positions(a: &[u8], b: &[u8]) -> Vec<bool> {
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![0u32; (n + 1) * (m + 1)];
    let idx = |i: usize, j: usize| i * (m + 1) + j;
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[idx(i, j)] = if a[i] == b[j] {
                dp[idx(i + 1, j + 1)] + 1
            } else {
                dp[idx(i + 1, j)].max(dp[idx(i, j + 1)])
            };
        }
    }
    let mut kept = vec![false; m];
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        if a[i] == b[j] {
            kept[j] = true;
            i += 1;
            j += 1;
        } else if dp[idx(i + 1, j)] >= dp[idx(i, j + 1)] {
            i += 1;
        } else {
            j += 1;
        }
    }
    kept
}

pub fn printable(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| printable_byte(b)).collect()
}

fn printable_byte(b: u8) -> String {
    if (0x20..0x7f).contains(&b) {
        (b as char).to_string()
    } else {
        format!("\\x{b:02x}")
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty(), "mean_std: empty");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_aligns_columns() {
        let t = text_table(&["a", "method"], &[vec!["xx".into(), "y".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a   method");
        assert_eq!(lines[2], "xx  y");
    }

    #[test]
    fn diff_markup_brackets_changed_spans() {
        assert_eq!(diff_markup(b"abcdef", b"abcdef"), "abcdef");
        assert_eq!(diff_markup(b"abcdef", b"abXdef"), "ab[X]def");
        assert_eq!(diff_markup(b"goopdateres_uk.dll", b"goopdateres_rk.dll"), "goopdateres_[r]k.dll");
        // Pure insertion at the end.
        assert_eq!(diff_markup(b"name", b"name.exe"), "name[.exe]");
        // Deletion leaves no marker in the adversarial string.
        assert_eq!(diff_markup(b"name.exe", b"name"), "name");
    }

    #[test]
    fn mean_std_basics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - std::f64::consts::SQRT_2).abs() < 1e-12);
        let (m1, s1) = mean_std(&[5.0]);
        assert_eq!((m1, s1), (5.0, 0.0));
    }
}
