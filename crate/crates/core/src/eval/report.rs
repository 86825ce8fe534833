use std::fmt::Write as _;
use std::io::Write;

pub const EVAL_HEADER: &str = "metric,value,n,seed";

#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    pub seed: u64,
}

/// Ordered list of named measurements.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
}

impl EvalReport {
    pub fn push(&mut self, metric: &str, value: f64, n: usize, seed: u64) {
        self.metrics.push(Metric {
            metric: metric.to_string(),
            value,
            n,
            seed,
        });
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.metric == metric)
            .map(|m| m.value)
    }

    pub fn write(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "{EVAL_HEADER}")?;
        for m in &self.metrics {
            writeln!(out, "{},{:.6},{},{}", m.metric, m.value, m.n, m.seed)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Option<Self> {
        let mut metrics = Vec::new();
        for line in text.lines().skip(1).filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let [metric, value, n, seed] = f[..] else {
                return None;
            };
            metrics.push(Metric {
                metric: metric.to_string(),
                value: value.parse().ok()?,
                n: n.parse().ok()?,
                seed: seed.parse().ok()?,
            });
        }
        Some(Self { metrics })
    }

    /// Aligned two-column table for terminals.
    pub fn summary(&self) -> String {
        let width = self
            .metrics
            .iter()
            .map(|m| m.metric.len())
            .max()
            .unwrap_or(0);
        let mut s = String::new();
        for m in &self.metrics {
            let _ = writeln!(s, "{:<width$}  {:>10.4}  (n={})", m.metric, m.value, m.n);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut r = EvalReport::default();
        r.push("fr_rate_ip", 0.82, 100, 7);
        r.push("disent_fixed_z", 0.125, 200, 7);
        let mut buf = Vec::new();
        r.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,value,n,seed\nfr_rate_ip,0.820000,100,7\n"));
        assert_eq!(EvalReport::parse(&text).unwrap(), r);
        assert!(r.summary().contains("fr_rate_ip"));
    }
}
