//! Scalar control signals on a finite horizon `[0, T]`.

use crate::error::{Error, Result};

/// Representation class of a [`ControlFunction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControlKind {
    PiecewiseConstant,
    PiecewiseLinear,
    /// C¹ cubic Hermite interpolant of exact samples of value and rate.
    Smooth,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Constant(Vec<f64>),
    Linear { start: Vec<f64>, slope: Vec<f64> },
    Sampled { times: Vec<f64>, values: Vec<f64>, rates: Vec<f64> },
}

/// A control on `[0, T]`, right-continuous at its breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlFunction {
    breakpoints: Vec<f64>,
    shape: Shape,
    rate_bound: Option<f64>,
}

fn check_grid(points: &[f64], what: &str) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::schema(what, "at least two breakpoints required"));
    }
    if points[0] != 0.0 {
        return Err(Error::schema(what, "first breakpoint must be 0"));
    }
    for (i, w) in points.windows(2).enumerate() {
        if !(w[1] > w[0]) || !w[1].is_finite() {
            return Err(Error::schema(format!("{what}[{}]", i + 1), "breakpoints must be strictly increasing"));
        }
    }
    Ok(())
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::schema(format!("{what}[{i}]"), "value must be finite")),
        None => Ok(()),
    }
}

impl ControlFunction {
    /// `values[j]` holds on `[t_j, t_{j+1})`.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        check_grid(&breakpoints, "breakpoints")?;
        check_finite(&values, "values")?;
        if values.len() + 1 != breakpoints.len() {
            return Err(Error::schema("values", "one value per piece expected"));
        }
        Ok(Self { breakpoints, shape: Shape::Constant(values), rate_bound: None })
    }

    /// On piece `j`, `u(t) = start[j] + slope[j] (t - t_j)`. Jumps between pieces are allowed.
    pub fn piecewise_linear(breakpoints: Vec<f64>, start: Vec<f64>, slope: Vec<f64>) -> Result<Self> {
        check_grid(&breakpoints, "breakpoints")?;
        check_finite(&start, "start")?;
        check_finite(&slope, "slope")?;
        if start.len() + 1 != breakpoints.len() || slope.len() != start.len() {
            return Err(Error::schema("start", "one start value and slope per piece expected"));
        }
        Ok(Self { breakpoints, shape: Shape::Linear { start, slope }, rate_bound: None })
    }

    /// Continuous piecewise-linear interpolant through `(times[k], values[k])`.
    pub fn linear_interpolant(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::schema("values", "length must match times"));
        }
        check_grid(&times, "times")?;
        let slope = times.windows(2).zip(values.windows(2)).map(|(t, v)| (v[1] - v[0]) / (t[1] - t[0])).collect();
        let start = values[..values.len() - 1].to_vec();
        Self::piecewise_linear(times, start, slope)
    }

    /// Smooth control given by samples of `u` and `u'` on an increasing grid starting at 0.
    pub fn sampled(times: Vec<f64>, values: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        check_grid(&times, "times")?;
        check_finite(&values, "values")?;
        check_finite(&rates, "rates")?;
        if values.len() != times.len() || rates.len() != times.len() {
            return Err(Error::schema("values", "one value and rate per sample expected"));
        }
        let horizon = *times.last().unwrap();
        Ok(Self { breakpoints: vec![0.0, horizon], shape: Shape::Sampled { times, values, rates }, rate_bound: None })
    }

    /// Attaches the bound `|u'| ≤ r`, failing if the control violates it.
    pub fn with_rate_bound(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::schema("r", "rate bound must be positive"));
        }
        let worst = self.max_rate();
        if worst > r * (1.0 + 1e-12) {
            return Err(Error::schema("r", format!("control rate {worst} exceeds bound {r}")));
        }
        self.rate_bound = Some(r);
        Ok(self)
    }

    pub fn rate_bound(&self) -> Option<f64> {
        self.rate_bound
    }

    pub fn kind(&self) -> ControlKind {
        match self.shape {
            Shape::Constant(_) => ControlKind::PiecewiseConstant,
            Shape::Linear { .. } => ControlKind::PiecewiseLinear,
            Shape::Sampled { .. } => ControlKind::Smooth,
        }
    }

    pub fn horizon(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Piece boundaries `0 = t_0 < … < t_m = T`; a smooth control has a single piece.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> usize {
        self.breakpoints.len() - 1
    }

    /// Piece values of a piecewise-constant control.
    pub fn constant_values(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Constant(v) => Some(v),
            _ => None,
        }
    }

    /// Sample grid of a smooth control.
    pub fn sample_times(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Sampled { times, .. } => Some(times),
            _ => None,
        }
    }

    fn clamp(&self, t: f64) -> Result<f64> {
        let horizon = self.horizon();
        let slack = 1e-12 * horizon.max(1.0);
        if !(t >= -slack && t <= horizon + slack) {
            return Err(Error::OutOfHorizon { t, horizon });
        }
        Ok(t.clamp(0.0, horizon))
    }

    /// Index `j` with `t_j ≤ t < t_{j+1}`, the last piece at `t = T`.
    pub fn piece_at(&self, t: f64) -> usize {
        let j = self.breakpoints.partition_point(|&b| b <= t);
        j.saturating_sub(1).min(self.pieces() - 1)
    }

    /// Value and right derivative at `t`.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        let t = self.clamp(t)?;
        Ok(self.eval_unchecked(t))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        self.eval(t).map(|(u, _)| u)
    }

    /// Second derivative; zero for piecewise-constant and piecewise-linear controls.
    pub fn second_rate(&self, t: f64) -> Result<f64> {
        let t = self.clamp(t)?;
        match &self.shape {
            Shape::Sampled { times, values, rates } => Ok(hermite(times, values, rates, t).2),
            _ => Ok(0.0),
        }
    }

    fn eval_unchecked(&self, t: f64) -> (f64, f64) {
        match &self.shape {
            Shape::Constant(values) => (values[self.piece_at(t)], 0.0),
            Shape::Linear { start, slope } => {
                let j = self.piece_at(t);
                (start[j] + slope[j] * (t - self.breakpoints[j]), slope[j])
            }
            Shape::Sampled { times, values, rates } => {
                let (u, du, _) = hermite(times, values, rates, t);
                (u, du)
            }
        }
    }

    /// Left limit at the horizon.
    pub fn end_value(&self) -> f64 {
        match &self.shape {
            Shape::Constant(values) => *values.last().unwrap(),
            Shape::Linear { start, slope } => {
                let j = self.pieces() - 1;
                start[j] + slope[j] * (self.breakpoints[j + 1] - self.breakpoints[j])
            }
            Shape::Sampled { values, .. } => *values.last().unwrap(),
        }
    }

    pub fn start_value(&self) -> f64 {
        self.eval_unchecked(0.0).0
    }

    /// `sup |u'|` (exact for constant and linear pieces, on a fine grid for smooth controls).
    pub fn max_rate(&self) -> f64 {
        match &self.shape {
            Shape::Constant(_) => 0.0,
            Shape::Linear { slope, .. } => slope.iter().fold(0.0, |m, s| m.max(s.abs())),
            Shape::Sampled { times, values, rates } => {
                let mut worst = rates.iter().fold(0.0f64, |m, s| m.max(s.abs()));
                for w in times.windows(2) {
                    for k in 1..8 {
                        let t = w[0] + (w[1] - w[0]) * k as f64 / 8.0;
                        worst = worst.max(hermite(times, values, rates, t).1.abs());
                    }
                }
                worst
            }
        }
    }

    /// Largest jump of the value across a breakpoint.
    pub fn max_jump(&self) -> f64 {
        match &self.shape {
            Shape::Constant(values) => values.windows(2).fold(0.0, |m, w| m.max((w[1] - w[0]).abs())),
            Shape::Linear { start, slope } => (1..self.pieces()).fold(0.0, |m, j| {
                let left = start[j - 1] + slope[j - 1] * (self.breakpoints[j] - self.breakpoints[j - 1]);
                m.max((start[j] - left).abs())
            }),
            Shape::Sampled { .. } => 0.0,
        }
    }

    /// Interior points where `u` or `u'` is discontinuous.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Sampled { .. } => Vec::new(),
            Shape::Constant(values) => (1..self.pieces())
                .filter(|&j| values[j] != values[j - 1])
                .map(|j| self.breakpoints[j])
                .collect(),
            Shape::Linear { slope, .. } => (1..self.pieces())
                .filter(|&j| slope[j] != slope[j - 1] || self.jump_at(j) != 0.0)
                .map(|j| self.breakpoints[j])
                .collect(),
        }
    }

    fn jump_at(&self, j: usize) -> f64 {
        match &self.shape {
            Shape::Linear { start, slope } => {
                start[j] - (start[j - 1] + slope[j - 1] * (self.breakpoints[j] - self.breakpoints[j - 1]))
            }
            Shape::Constant(values) => values[j] - values[j - 1],
            Shape::Sampled { .. } => 0.0,
        }
    }

    /// Restriction to `[0, t]`.
    pub fn truncated(&self, t: f64) -> Result<Self> {
        let t = self.clamp(t)?;
        if t <= 0.0 {
            return Err(Error::schema("horizon", "truncation time must be positive"));
        }
        let j = self.piece_at(t);
        let keep = if self.breakpoints[j] == t { j } else { j + 1 };
        let mut bps: Vec<f64> = self.breakpoints[..keep].to_vec();
        bps.push(t);
        let mut out = match &self.shape {
            Shape::Constant(v) => Self::piecewise_constant(bps, v[..keep].to_vec())?,
            Shape::Linear { start, slope } => {
                Self::piecewise_linear(bps, start[..keep].to_vec(), slope[..keep].to_vec())?
            }
            Shape::Sampled { times, values, rates } => {
                let k = times.partition_point(|&s| s < t);
                let mut ts = times[..k].to_vec();
                let mut vs = values[..k].to_vec();
                let mut rs = rates[..k].to_vec();
                let (u, du, _) = hermite(times, values, rates, t);
                ts.push(t);
                vs.push(u);
                rs.push(du);
                Self::sampled(ts, vs, rs)?
            }
        };
        out.rate_bound = self.rate_bound;
        Ok(out)
    }

    /// Appends a piece of duration `duration` holding the value `hold` with zero rate.
    ///
    /// Smooth controls must end with zero rate for the result to stay C¹.
    pub fn append_constant(&self, duration: f64, hold: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Ok(self.clone());
        }
        let end = self.horizon() + duration;
        let mut out = match &self.shape {
            Shape::Constant(v) => {
                let mut bps = self.breakpoints.clone();
                bps.push(end);
                let mut vals = v.clone();
                vals.push(hold);
                Self::piecewise_constant(bps, vals)?
            }
            Shape::Linear { start, slope } => {
                let mut bps = self.breakpoints.clone();
                bps.push(end);
                let mut s = start.clone();
                s.push(hold);
                let mut k = slope.clone();
                k.push(0.0);
                Self::piecewise_linear(bps, s, k)?
            }
            Shape::Sampled { times, values, rates } => {
                let step = times.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let count = (duration / step).ceil().max(1.0) as usize;
                let mut ts = times.clone();
                let mut vs = values.clone();
                let mut rs = rates.clone();
                *vs.last_mut().unwrap() = hold;
                *rs.last_mut().unwrap() = 0.0;
                for k in 1..=count {
                    ts.push(self.horizon() + duration * k as f64 / count as f64);
                    vs.push(hold);
                    rs.push(0.0);
                }
                Self::sampled(ts, vs, rs)?
            }
        };
        out.rate_bound = self.rate_bound;
        Ok(out)
    }
}

/// Cubic Hermite interpolation: value, first and second derivative.
fn hermite(times: &[f64], values: &[f64], rates: &[f64], t: f64) -> (f64, f64, f64) {
    let k = times.partition_point(|&s| s <= t).saturating_sub(1).min(times.len() - 2);
    let h = times[k + 1] - times[k];
    let s = (t - times[k]) / h;
    let (y0, y1, m0, m1) = (values[k], values[k + 1], rates[k] * h, rates[k + 1] * h);
    let s2 = s * s;
    let s3 = s2 * s;
    let u = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
    let du = ((6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1) / h;
    let ddu = ((12.0 * s - 6.0) * y0 + (6.0 * s - 4.0) * m0 + (6.0 - 12.0 * s) * y1 + (6.0 * s - 2.0) * m1) / (h * h);
    (u, du, ddu)
}
