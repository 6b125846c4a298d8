use crate::forms::{pow_abs, PlIntervalForm};
use crate::pl::{merge_knots, PlError, PlFunction, ScalarMap, TriangleWave, MAX_FOLD_LEVEL};

/// Most fold knots a single ramp segment may enumerate.
pub const RAMP_FOLD_LIMIT: f64 = 1e7;

/// `f_n^{g,a} = T_n∘f ∧ S_n^a∘g`, materialized.
pub fn cell_function(f: &PlFunction, g: &PlFunction, a: f64, n: u32) -> Result<PlFunction, PlError> {
    let folded = f.triangle_fold(n)?;
    let plateau = g.shifted_cut(a, n)?;
    folded.min(&plateau)
}

/// `E(f_n^{g,a})` without materializing the cell function.
///
/// On every cell of the common refinement of `f`, `g` and the weight, the
/// domain splits into `{g ≤ a}` where the cell function is `T_n∘f` and has
/// slope `±f'`, `{g ≥ a + 2^{-n}}` where it vanishes, and a ramp in between.
/// On the ramp the fold knots are enumerated and the minimum of two lines is
/// resolved exactly on each fold segment; when `g` is constant there the
/// contribution is a closed-form level-set measure of the triangle wave.
pub fn cell_energy(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    n: u32,
) -> Result<f64, PlError> {
    cell_energy_parts(form, f, g, a, n).map(|c| c.below + c.ramp)
}

/// `E(f_n^{g,a})` split by region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellEnergy {
    /// Energy on `{g ≤ a}`; the same for every `n`.
    pub below: f64,
    /// Energy on `{a < g < a + 2^{-n}}`.
    pub ramp: f64,
}

pub fn cell_energy_parts(
    form: &PlIntervalForm,
    f: &PlFunction,
    g: &PlFunction,
    a: f64,
    n: u32,
) -> Result<CellEnergy, PlError> {
    if n == 0 || n > MAX_FOLD_LEVEL {
        return Err(PlError::FoldLevel {
            level: n,
            cap: MAX_FOLD_LEVEL,
        });
    }
    let p = form.p();
    let wave = TriangleWave::new(n);
    let h = wave.height();
    let top = a + h;
    let knots = merge_knots(&[f.breakpoints(), g.breakpoints(), form.weight().cuts()]);
    let mut below = 0.0;
    let mut ramp = 0.0;
    let mut folds = Vec::new();
    for k in knots.windows(2) {
        let (x0, x1) = (k[0], k[1]);
        let mid = 0.5 * (x0 + x1);
        let w = form.weight().at(mid);
        if w == 0.0 {
            continue;
        }
        let (sf, sg) = (f.slope_at(mid), g.slope_at(mid));
        let (f0, g0) = (f.eval(x0), g.eval(x0));
        let (ef, eg) = (pow_abs(sf, p), pow_abs(sg, p));
        let fx = |x: f64| f0 + sf * (x - x0);
        let gx = |x: f64| g0 + sg * (x - x0);

        let mut cuts = [x0, x1, x1, x1];
        let mut m = 2;
        if sg != 0.0 {
            for level in [a, top] {
                let xc = x0 + (level - g0) / sg;
                if xc > x0 && xc < x1 {
                    cuts[m] = xc;
                    m += 1;
                }
            }
        }
        let cuts = &mut cuts[..m];
        cuts.sort_by(f64::total_cmp);

        for c in cuts.windows(2) {
            let (u0, u1) = (c[0], c[1]);
            if u1 <= u0 {
                continue;
            }
            let gm = gx(0.5 * (u0 + u1));
            if gm <= a {
                below += w * ef * (u1 - u0);
            } else if gm >= top {
                continue;
            } else if sg == 0.0 {
                if sf != 0.0 {
                    let (fa, fb) = (fx(u0), fx(u1));
                    let s = top - g0;
                    ramp += w * sf.abs().powf(p - 1.0) * wave.measure_below(fa.min(fb), fa.max(fb), s);
                }
            } else {
                let (fa, fb) = (fx(u0), fx(u1));
                let (lo, hi) = (fa.min(fb), fa.max(fb));
                let count = wave.knot_count_hint(lo, hi);
                if count > RAMP_FOLD_LIMIT {
                    return Err(PlError::PieceCap {
                        pieces: count as usize,
                        cap: RAMP_FOLD_LIMIT as usize,
                    });
                }
                folds.clear();
                folds.push(u0);
                if sf != 0.0 {
                    let start = folds.len();
                    wave.knots_between(lo, hi, &mut folds);
                    for t in &mut folds[start..] {
                        *t = x0 + (*t - f0) / sf;
                    }
                    if sf < 0.0 {
                        folds[start..].reverse();
                    }
                }
                folds.push(u1);
                for s in folds.windows(2) {
                    let (xa, xb) = (s[0], s[1]);
                    let len = xb - xa;
                    if len <= 0.0 {
                        continue;
                    }
                    let da = wave.apply(fx(xa)) - (top - gx(xa));
                    let db = wave.apply(fx(xb)) - (top - gx(xb));
                    ramp += w * if da <= 0.0 && db <= 0.0 {
                        ef * len
                    } else if da >= 0.0 && db >= 0.0 {
                        eg * len
                    } else {
                        let theta = da / (da - db);
                        if da < 0.0 {
                            (ef * theta + eg * (1.0 - theta)) * len
                        } else {
                            (eg * theta + ef * (1.0 - theta)) * len
                        }
                    };
                }
            }
        }
    }
    Ok(CellEnergy { below, ramp })
}
