use super::MetricsError;

/// Welch's unequal-variance t statistic, `(mean_a - mean_b) / sqrt(va/na + vb/nb)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    for g in [a, b] {
        if g.len() < 2 {
            return Err(MetricsError::TooFewItems { needed: 2, got: g.len() });
        }
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let se2 = va / a.len() as f64 + vb / b.len() as f64;
    if se2 <= 0.0 {
        if ma == mb {
            return Ok(0.0);
        }
        return Err(MetricsError::Degenerate);
    }
    Ok((ma - mb) / se2.sqrt())
}

/// Mean and unbiased variance, two-pass.
fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Symmetric matrix of `|t|` between classes, zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct TMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl TMatrix {
    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let mut best = 0.0f64;
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    best = best.max(*v);
                }
            }
        }
        best
    }

    /// Header `class,<labels...>`, one row per class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (l, row) in self.labels.iter().zip(&self.values) {
            out.push_str(l);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn pairwise_ttest_matrix(classes: &[(String, Vec<f64>)]) -> Result<TMatrix, MetricsError> {
    if classes.len() < 2 {
        return Err(MetricsError::TooFewItems { needed: 2, got: classes.len() });
    }
    let k = classes.len();
    let mut values = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let t = welch_t(&classes[i].1, &classes[j].1)?.abs();
            values[i][j] = t;
            values[j][i] = t;
        }
    }
    Ok(TMatrix { labels: classes.iter().map(|c| c.0.clone()).collect(), values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_groups() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(welch_t(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn separated_tight_groups() {
        let a = [1e-6, -1e-6, 1e-6, -1e-6];
        let b = [1.0 + 1e-6, 1.0 - 1e-6, 1.0 + 1e-6, 1.0 - 1e-6];
        assert!(welch_t(&a, &b).unwrap().abs() > 1e5);
    }

    #[test]
    fn errors() {
        assert!(matches!(welch_t(&[1.0], &[1.0, 2.0]), Err(MetricsError::TooFewItems { .. })));
        assert!(matches!(welch_t(&[0.0, 0.0], &[1.0, 1.0]), Err(MetricsError::Degenerate)));
        assert_eq!(welch_t(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn matrix_shape_and_monotone() {
        let jitter = |m: f64| (0..20).map(|i| m + if i % 2 == 0 { 0.01 } else { -0.01 }).collect::<Vec<_>>();
        let classes = vec![("a".into(), jitter(0.0)), ("b".into(), jitter(10.0)), ("c".into(), jitter(20.0))];
        let m = pairwise_ttest_matrix(&classes).unwrap();
        assert_eq!(m.values[0][0], 0.0);
        assert_eq!(m.values[0][1], m.values[1][0]);
        assert!(m.values[0][2] > m.values[0][1]);
        assert!(m.to_csv().starts_with("class,a,b,c\n"));
        let same = vec![("x".into(), jitter(1.0)), ("y".into(), jitter(1.0))];
        assert_eq!(pairwise_ttest_matrix(&same).unwrap().values, vec![vec![0.0, 0.0], vec![0.0, 0.0]]);
    }
}
