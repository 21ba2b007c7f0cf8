//! Finite packet-loss schedules and their duration bound
//! `Θ(k) ≤ Ξ + νk`, with `Θ(k)` the number of losses before step `k`.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Slack allowed when comparing a loss count with `Ξ + νk`.
pub const BOUND_SLACK: f64 = 1e-9;

/// A loss sequence `θ(0..K)` with its claimed duration bound `(Ξ, ν)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossSchedule {
    theta: Vec<bool>,
    xi: f64,
    nu: f64,
    generator: String,
    seed: Option<u64>,
}

/// Outcome of checking a schedule against its bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundCheck {
    pub ok: bool,
    /// Smallest `k` (or window end) at which the bound fails.
    pub first_violation: Option<usize>,
}

fn check_params(xi: f64, nu: f64) -> Result<()> {
    if !(xi >= 0.0 && xi.is_finite()) {
        return Err(Error::Domain {
            what: "Xi",
            domain: "[0, inf)",
            value: xi,
        });
    }
    if !(0.0..=1.0).contains(&nu) {
        return Err(Error::Domain {
            what: "nu",
            domain: "[0, 1]",
            value: nu,
        });
    }
    Ok(())
}

impl LossSchedule {
    pub fn new(theta: Vec<bool>, xi: f64, nu: f64) -> Result<Self> {
        check_params(xi, nu)?;
        Ok(LossSchedule {
            theta,
            xi,
            nu,
            generator: "explicit".into(),
            seed: None,
        })
    }

    /// Schedule without losses.
    pub fn lossless(horizon: usize) -> Self {
        LossSchedule {
            theta: vec![false; horizon],
            xi: 0.0,
            nu: 0.0,
            generator: "lossless".into(),
            seed: None,
        }
    }

    fn generated(theta: Vec<bool>, xi: f64, nu: f64, generator: &str, seed: Option<u64>) -> Self {
        LossSchedule {
            theta,
            xi,
            nu,
            generator: generator.into(),
            seed,
        }
    }

    pub fn theta(&self) -> &[bool] {
        &self.theta
    }

    /// `θ(k)`; steps past the horizon count as received.
    pub fn lost(&self, k: usize) -> bool {
        self.theta.get(k).copied().unwrap_or(false)
    }

    pub fn horizon(&self) -> usize {
        self.theta.len()
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn generator(&self) -> &str {
        &self.generator
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Same sequence with a different claimed bound.
    pub fn with_claim(mut self, xi: f64, nu: f64) -> Result<Self> {
        check_params(xi, nu)?;
        self.xi = xi;
        self.nu = nu;
        Ok(self)
    }

    /// `Θ(k)` for `k = 0..=K`.
    pub fn cumulative(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.theta.len() + 1);
        let mut total = 0;
        out.push(0);
        for &t in &self.theta {
            total += t as usize;
            out.push(total);
        }
        out
    }

    pub fn losses(&self) -> usize {
        self.theta.iter().filter(|&&t| t).count()
    }

    /// Checks `Θ(k) ≤ Ξ + νk` for `1 ≤ k ≤ K`.
    pub fn verify_bound(&self) -> BoundCheck {
        let first_violation = self
            .cumulative()
            .iter()
            .enumerate()
            .skip(1)
            .find(|&(k, &count)| count as f64 > self.xi + self.nu * k as f64 + BOUND_SLACK)
            .map(|(k, _)| k);
        BoundCheck {
            ok: first_violation.is_none(),
            first_violation,
        }
    }

    /// Checks the stronger windowed bound `Θ(k₁, k₂) ≤ Ξ + ν(k₂ − k₁)` for
    /// all `0 ≤ k₁ < k₂ ≤ K`; reports the first failing `k₂`.
    pub fn verify_windowed(&self) -> BoundCheck {
        let cum = self.cumulative();
        let mut min_offset = 0.0f64;
        for (k, &count) in cum.iter().enumerate().skip(1) {
            let offset = count as f64 - self.nu * k as f64;
            if offset - min_offset > self.xi + BOUND_SLACK {
                return BoundCheck {
                    ok: false,
                    first_violation: Some(k),
                };
            }
            min_offset = min_offset.min(offset);
        }
        BoundCheck {
            ok: true,
            first_violation: None,
        }
    }

    /// Text form: a `#` header with the claim and generator, then
    /// `k,theta` rows.
    pub fn to_text(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        let mut out = format!(
            "# xi={:?} nu={:?} seed={seed} generator={}\nk,theta\n",
            self.xi, self.nu, self.generator
        );
        for (k, &t) in self.theta.iter().enumerate() {
            let _ = writeln!(out, "{k},{}", t as u8);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |message: String| Error::Validation(format!("loss schedule: {message}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty input".into()))?;
        let header = header
            .strip_prefix('#')
            .ok_or_else(|| bad("missing '#' header".into()))?;
        let (mut xi, mut nu, mut seed, mut generator) = (None, None, None, "explicit".to_string());
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| bad(format!("malformed header field '{field}'")))?;
            let number = |v: &str| {
                v.parse::<f64>()
                    .map_err(|_| bad(format!("bad number '{v}'")))
            };
            match key {
                "xi" => xi = Some(number(value)?),
                "nu" => nu = Some(number(value)?),
                "seed" if value == "none" => seed = None,
                "seed" => {
                    seed = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad seed '{value}'")))?,
                    )
                }
                "generator" => generator = value.to_string(),
                _ => return Err(bad(format!("unknown header key '{key}'"))),
            }
        }
        match lines.next() {
            Some(l) if l.trim() == "k,theta" => {}
            _ => return Err(bad("missing 'k,theta' column header".into())),
        }
        let mut theta = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let (k, t) = line
                .split_once(',')
                .ok_or_else(|| bad(format!("malformed row '{line}'")))?;
            if k.trim().parse::<usize>().ok() != Some(theta.len()) {
                return Err(bad(format!("row '{line}' out of sequence")));
            }
            theta.push(match t.trim() {
                "0" => false,
                "1" => true,
                other => return Err(bad(format!("theta must be 0 or 1, got '{other}'"))),
            });
        }
        let xi = xi.ok_or_else(|| bad("header lacks xi".into()))?;
        let nu = nu.ok_or_else(|| bad("header lacks nu".into()))?;
        check_params(xi, nu)?;
        Ok(LossSchedule::generated(theta, xi, nu, &generator, seed))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_text(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

fn clipped(xi: f64, nu: f64, horizon: usize, mut want: impl FnMut() -> bool) -> Vec<bool> {
    let mut count = 0usize;
    (0..horizon)
        .map(|k| {
            let allowed = (count + 1) as f64 <= xi + nu * (k + 1) as f64 + BOUND_SLACK;
            let lost = want() && allowed;
            count += lost as usize;
            lost
        })
        .collect()
}

/// Loses every packet the bound allows:
/// `θ(k) = 1` iff `Θ(k) + 1 ≤ Ξ + ν(k+1)`.
pub fn greedy_worst(xi: f64, nu: f64, horizon: usize) -> Result<LossSchedule> {
    check_params(xi, nu)?;
    let theta = clipped(xi, nu, horizon, || true);
    Ok(LossSchedule::generated(theta, xi, nu, "greedy_worst", None))
}

/// Independent losses with probability `p`, dropped whenever they would
/// break the bound. Deterministic in `seed`.
pub fn bernoulli_clipped(
    p: f64,
    xi: f64,
    nu: f64,
    horizon: usize,
    seed: u64,
) -> Result<LossSchedule> {
    check_params(xi, nu)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain {
            what: "loss probability",
            domain: "[0, 1]",
            value: p,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = clipped(xi, nu, horizon, || rng.gen_bool(p));
    Ok(LossSchedule::generated(
        theta,
        xi,
        nu,
        "bernoulli_clipped",
        Some(seed),
    ))
}

/// Bursts of `burst` losses at the start of every period. The claim uses
/// `ν = burst/period` and the smallest `Ξ` valid over the horizon.
pub fn periodic(period: usize, burst: usize, horizon: usize) -> Result<LossSchedule> {
    if period == 0 || burst >= period {
        return Err(Error::Validation(format!(
            "periodic schedule needs 0 <= burst < period, got burst {burst}, period {period}"
        )));
    }
    let theta: Vec<bool> = (0..horizon).map(|k| k % period < burst).collect();
    let nu = burst as f64 / period as f64;
    let mut count = 0usize;
    let mut xi = 0.0f64;
    for (k, &t) in theta.iter().enumerate() {
        count += t as usize;
        xi = xi.max(count as f64 - nu * (k + 1) as f64);
    }
    Ok(LossSchedule::generated(theta, xi, nu, "periodic", None))
}
