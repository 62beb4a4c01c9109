//! Central finite differences used as verification oracles.

use crate::error::{Error, Result};

/// Default step for first derivatives: `1e-5·(1 + |x0|)`.
pub fn first_step(x0: f64) -> f64 {
    1e-5 * (1.0 + x0.abs())
}

/// Default step for second derivatives: `1e-4·(1 + |x0|)`.
pub fn second_step(x0: f64) -> f64 {
    1e-4 * (1.0 + x0.abs())
}

fn eval<F: FnMut(f64) -> f64>(f: &mut F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite("finite-difference evaluation"))
    }
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { name: "finite-difference step", value: h })
    }
}

/// `(f(x0+h) − f(x0−h)) / 2h`
pub fn central_diff<F: FnMut(f64) -> f64>(mut f: F, x0: f64, h: f64) -> Result<f64> {
    check_step(h)?;
    Ok((eval(&mut f, x0 + h)? - eval(&mut f, x0 - h)?) / (2.0 * h))
}

/// `(f(x0+h) − 2f(x0) + f(x0−h)) / h²`
pub fn central_second_diff<F: FnMut(f64) -> f64>(mut f: F, x0: f64, h: f64) -> Result<f64> {
    check_step(h)?;
    let up = eval(&mut f, x0 + h)?;
    let mid = eval(&mut f, x0)?;
    let down = eval(&mut f, x0 - h)?;
    Ok((up - 2.0 * mid + down) / (h * h))
}

/// One Richardson step on [`central_diff`]: `(4·D(h/2) − D(h)) / 3`,
/// fourth-order accurate.
pub fn richardson_diff<F: FnMut(f64) -> f64>(mut f: F, x0: f64, h: f64) -> Result<f64> {
    let coarse = central_diff(&mut f, x0, h)?;
    let fine = central_diff(&mut f, x0, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// One Richardson step on [`central_second_diff`].
pub fn richardson_second_diff<F: FnMut(f64) -> f64>(mut f: F, x0: f64, h: f64) -> Result<f64> {
    let coarse = central_second_diff(&mut f, x0, h)?;
    let fine = central_second_diff(&mut f, x0, 0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Relative discrepancy `|a − b| / max(|a|, |b|, 1)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
