use super::MetricsError;

/// Pearson correlation, computed in one pass with running co-moments.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch { left: x.len(), right: y.len() });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewItems { needed: 2, got: x.len() });
    }
    let mut acc = CoMoments::default();
    for (a, b) in x.iter().zip(y) {
        acc.push(*a, *b);
    }
    acc.correlation().ok_or(MetricsError::Degenerate)
}

/// Running means and second co-moments of a pair of series.
#[derive(Debug, Clone, Copy, Default)]
pub struct CoMoments {
    n: f64,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
    c_xy: f64,
}

impl CoMoments {
    #[inline]
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        let dx = x - self.mean_x;
        self.mean_x += dx / self.n;
        let dy = y - self.mean_y;
        self.mean_y += dy / self.n;
        self.m2_x += dx * (x - self.mean_x);
        self.m2_y += dy * (y - self.mean_y);
        self.c_xy += dx * (y - self.mean_y);
    }

    /// `None` when either series has zero variance.
    pub fn correlation(&self) -> Option<f64> {
        if self.m2_x <= 0.0 || self.m2_y <= 0.0 {
            return None;
        }
        Some((self.c_xy / (self.m2_x.sqrt() * self.m2_y.sqrt())).clamp(-1.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_negative() {
        let x = [1.0, 2.0, 4.0, 8.0, 3.0];
        assert!((pearson(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 7.0).collect();
        assert!((pearson(&x, &y).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_shape_errors() {
        assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(MetricsError::Degenerate)));
        assert!(matches!(pearson(&[1.0], &[1.0]), Err(MetricsError::TooFewItems { .. })));
        assert!(matches!(pearson(&[1.0, 2.0], &[1.0]), Err(MetricsError::LengthMismatch { .. })));
    }
}
