use std::fmt;
use std::str::FromStr;

/// Inclusive uniform grid written `min:max:steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| {
                if k + 1 == self.steps {
                    self.max
                } else {
                    self.min + k as f64 * h
                }
            })
            .collect()
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [min, max, steps] = parts.as_slice() else {
            return Err(format!("expected min:max:steps, got `{s}`"));
        };
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("`{x}` is not a number"));
        let (min, max) = (num(min)?, num(max)?);
        let steps: usize = steps
            .trim()
            .parse()
            .map_err(|_| format!("`{steps}` is not a step count"))?;
        if steps == 0 {
            return Err("steps must be at least 1".into());
        }
        if !min.is_finite() || !max.is_finite() || max < min {
            return Err(format!("need finite min <= max, got {min}:{max}"));
        }
        if steps == 1 && max != min {
            return Err("a single-step grid needs min == max".into());
        }
        if steps > 1 && max == min {
            return Err("a multi-step grid needs min < max".into());
        }
        Ok(GridSpec { min, max, steps })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.min, self.max, self.steps)
    }
}
