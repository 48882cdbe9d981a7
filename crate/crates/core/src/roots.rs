//! Scalar root bracketing and refinement.

/// Brent's method on a bracket `[a, b]` with `f(a)·f(b) <= 0`.
///
/// Returns `None` when the bracket is invalid.
pub(crate) fn brent<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Option<f64>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < tol {
            return Some(b);
        }
        let mut s = if fa != fc && fb != fc {
            // inverse quadratic interpolation
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let outside = !((s > lo.min(b)) && (s < lo.max(b)));
        let slow = if bisected {
            (s - b).abs() >= (b - c).abs() / 2.0 || (b - c).abs() < tol
        } else {
            (s - b).abs() >= (c - d).abs() / 2.0 || (c - d).abs() < tol
        };
        if outside || slow {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        if !fs.is_finite() {
            return None;
        }
        d = c;
        c = b;
        fc = fb;
        if fa.signum() * fs.signum() < 0.0 {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Some(b)
}

/// Scan `f` at the sample points `xs` and return every bracket over which it
/// changes sign.
///
/// Where `f` stops (or starts) being defined between two samples, the edge is
/// located by bisection and the last defined point stands in for the missing
/// sample, so roots squeezed against the edge of the domain are not lost.
pub(crate) fn sign_changes_at<F>(mut f: F, xs: &[f64]) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    let mut eval = |x: f64| f(x).filter(|v| v.is_finite());
    let mut out = Vec::new();
    let mut prev: Option<(f64, Option<f64>)> = None;
    for &x in xs {
        let fx = eval(x);
        if let Some((x0, f0)) = prev {
            match (f0, fx) {
                (Some(f0), Some(f1)) => {
                    if f0 == 0.0 || f0.signum() != f1.signum() {
                        out.push((x0, x));
                    }
                }
                (Some(f0), None) => {
                    if let Some((xe, fe)) = defined_edge(&mut eval, x0, x) {
                        if f0.signum() != fe.signum() {
                            out.push((x0, xe));
                        }
                    }
                }
                (None, Some(f1)) => {
                    if let Some((xe, fe)) = defined_edge(&mut eval, x, x0) {
                        if f1.signum() != fe.signum() {
                            out.push((xe, x));
                        }
                    }
                }
                (None, None) => {}
            }
        }
        prev = Some((x, fx));
    }
    out
}

/// Last point from `inside` towards `outside` where `f` is still defined.
fn defined_edge<F>(f: &mut F, inside: f64, outside: f64) -> Option<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    let (mut a, mut b) = (inside, outside);
    let mut best = None;
    for _ in 0..40 {
        let m = 0.5 * (a + b);
        match f(m) {
            Some(v) => {
                best = Some((m, v));
                a = m;
            }
            None => b = m,
        }
    }
    best
}

/// [`sign_changes_at`] on `n + 1` evenly spaced points of `[a, b]`.
pub(crate) fn sign_changes<F>(f: F, a: f64, b: f64, n: usize) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> Option<f64>,
{
    let xs: Vec<f64> = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    sign_changes_at(f, &xs)
}

/// Golden-section minimum of a unimodal function on `[a, b]`.
pub(crate) fn golden_min<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (b - a).abs() > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        }
    }
    if f1 < f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| x * x * x - 2.0 * x - 5.0, 2.0, 3.0, 1e-12, 100).unwrap();
        assert!((r - 2.094_551_481_542_327).abs() < 1e-10);
    }

    #[test]
    fn brent_rejects_bad_bracket() {
        assert!(brent(|x| x * x + 1.0, -1.0, 1.0, 1e-9, 50).is_none());
    }

    #[test]
    fn scan_finds_both_roots() {
        let b = sign_changes(|x| Some(x * x - 1.0), -2.0, 2.0, 7);
        assert_eq!(b.len(), 2);
    }

    #[test]
    fn scan_finds_root_at_domain_edge() {
        // Defined only below 1.005, with a root at 1.0 that no sample straddles.
        let f = |x: f64| (x < 1.005).then_some(x - 1.0);
        let b = sign_changes(f, 0.0, 2.0, 10);
        assert_eq!(b.len(), 1);
        let r = brent(|x| f(x).unwrap_or(f64::NAN), b[0].0, b[0].1, 1e-12, 100).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn golden_section() {
        let (x, fx) = golden_min(|x| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-9);
        assert!((x - 0.3).abs() < 1e-6);
        assert!((fx - 1.0).abs() < 1e-12);
    }
}
