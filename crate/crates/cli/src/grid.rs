//! Lambda grids: `default`, `log:<lo>:<hi>:<n>`, or a comma list such as
//! `0,0.1,1,inf`.

use fairot_core::Lambda;

use crate::error::{CliError, Result};

pub const DEFAULT_GRID_POINTS: usize = 15;
pub const DEFAULT_GRID_LOW: f64 = 1e-3;
pub const DEFAULT_GRID_HIGH: f64 = 1e3;

/// `n` points log-spaced over `[lo, hi]`, endpoints included.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || n == 0 {
        return Err(CliError::config(format!(
            "log grid needs 0 < lo <= hi and n >= 1, got lo={lo} hi={hi} n={n}"
        )));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.log10(), hi.log10());
    let mut out: Vec<f64> = (0..n)
        .map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64))
        .collect();
    out[0] = lo;
    out[n - 1] = hi;
    Ok(out)
}

/// Zero, the default log-spaced points and the exact-fairness limit.
pub fn default_grid() -> Vec<Lambda> {
    let mut grid = vec![Lambda::Finite(0.0)];
    grid.extend(
        log_spaced(DEFAULT_GRID_LOW, DEFAULT_GRID_HIGH, DEFAULT_GRID_POINTS)
            .expect("valid default grid")
            .into_iter()
            .map(Lambda::Finite),
    );
    grid.push(Lambda::Infinite);
    grid
}

pub fn parse_grid(spec: &str) -> Result<Vec<Lambda>> {
    let spec = spec.trim();
    if spec.eq_ignore_ascii_case("default") {
        return Ok(default_grid());
    }
    if let Some(rest) = spec.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::config(format!("log grid {spec:?} must be log:<lo>:<hi>:<n>")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::config(format!("cannot parse {s:?} in grid {spec:?}")))
        };
        let n = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::config(format!("cannot parse point count in grid {spec:?}")))?;
        return Ok(log_spaced(num(parts[0])?, num(parts[1])?, n)?
            .into_iter()
            .map(Lambda::Finite)
            .collect());
    }
    let grid = spec
        .split(',')
        .map(|t| {
            t.parse::<Lambda>()
                .map_err(|e| CliError::config(format!("lambda grid {spec:?}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if grid.is_empty() {
        return Err(CliError::config("empty lambda grid"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 17);
        assert_eq!(g[0], Lambda::Finite(0.0));
        assert_eq!(g[1], Lambda::Finite(1e-3));
        assert_eq!(g[15], Lambda::Finite(1e3));
        assert_eq!(g[16], Lambda::Infinite);
        assert!(g[1..16].windows(2).all(|w| w[0].as_f64() < w[1].as_f64()));
        // Midpoint of a symmetric log range is exactly one decade apart.
        assert!((g[8].as_f64() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parses_lists_and_log_specs() {
        assert_eq!(
            parse_grid("0, 0.5,inf").unwrap(),
            vec![Lambda::Finite(0.0), Lambda::Finite(0.5), Lambda::Infinite]
        );
        let g = parse_grid("log:1:100:3").unwrap();
        assert_eq!(g.len(), 3);
        assert!((g[1].as_f64() - 10.0).abs() < 1e-12);
        assert!(parse_grid("log:0:1:3").is_err());
        assert!(parse_grid("1,-2").is_err());
        assert!(parse_grid("x").is_err());
    }
}
