//! Derivative-free Nelder-Mead simplex minimizer.
//!
//! Uses the dimension-adaptive reflection/expansion/contraction/shrink
//! coefficients of Gao and Han (2012), which behave noticeably better than
//! the classic (1, 2, 1/2, 1/2) set once the dimension goes past about five.
//! Non-finite objective values are treated as `+inf`, so an infeasible
//! region can be expressed simply by returning `f64::INFINITY`.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Offset of each initial simplex vertex from the start point, per axis.
    pub initial_step: f64,
    /// Stop once every vertex lies within this sup-norm distance of the best.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { initial_step: 0.05, tolerance: 1e-8, max_iterations: 5000 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Coefficients {
    reflect: f64,
    expand: f64,
    contract: f64,
    shrink: f64,
}

impl Coefficients {
    fn for_dimension(n: usize) -> Self {
        if n < 2 {
            return Self { reflect: 1.0, expand: 2.0, contract: 0.5, shrink: 0.5 };
        }
        let n = n as f64;
        Self {
            reflect: 1.0,
            expand: 1.0 + 2.0 / n,
            contract: 0.75 - 1.0 / (2.0 * n),
            shrink: 1.0 - 1.0 / n,
        }
    }
}

pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: &NelderMeadOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let c = Coefficients::for_dimension(n);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += opts.initial_step;
        let mut fx = eval(&x, &mut evaluations);
        if !fx.is_finite() {
            x[i] = x0[i] - opts.initial_step;
            fx = eval(&x, &mut evaluations);
        }
        simplex.push((x, fx));
    }

    let mut iterations = 0usize;
    let mut converged = false;
    let mut centroid = vec![0.0; n];
    let point = |from: &[f64], to: &[f64], t: f64| -> Vec<f64> {
        from.iter().zip(to).map(|(a, b)| a + t * (b - a)).collect()
    };

    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(best).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if diameter < opts.tolerance {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|v| *v = 0.0);
        for (x, _) in &simplex[..n] {
            for (cv, xv) in centroid.iter_mut().zip(x) {
                *cv += xv / n as f64;
            }
        }
        let (worst, f_worst) = simplex[n].clone();
        let f_best = simplex[0].1;
        let f_second = simplex[n - 1].1;

        // Points are parameterized along the ray centroid -> worst.
        let xr = point(&centroid, &worst, -c.reflect);
        let fr = eval(&xr, &mut evaluations);
        if fr < f_best {
            let xe = point(&centroid, &worst, -c.reflect * c.expand);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < f_second {
            simplex[n] = (xr, fr);
            continue;
        }
        if fr < f_worst {
            let xoc = point(&centroid, &worst, -c.reflect * c.contract);
            let foc = eval(&xoc, &mut evaluations);
            if foc <= fr {
                simplex[n] = (xoc, foc);
                continue;
            }
        } else {
            let xic = point(&centroid, &worst, c.contract);
            let fic = eval(&xic, &mut evaluations);
            if fic < f_worst {
                simplex[n] = (xic, fic);
                continue;
            }
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x = point(&anchor, &vertex.0, c.shrink);
            let fx = eval(&x, &mut evaluations);
            *vertex = (x, fx);
        }
    }

    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    Minimum { x, fx, iterations, evaluations, converged }
}
