/// Mean with a normal-approximation 95% half-width (`1.96 * se`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// `None` for fewer than two samples.
    pub half_width: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                half_width: None,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let half_width = (n >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        });
        Self { mean, half_width, n }
    }

    pub fn half_width_field(&self) -> String {
        fmt_opt(self.half_width)
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x:.6}")
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "na".into(), fmt_f)
}
