use rto_core::benchmarks::ProblemSpec;
use rto_core::design::InterpolationParams;
use rto_core::perturbation::analyze;
use rto_core::problem::Problem;

fn beam() -> Problem {
    let mut spec = ProblemSpec::verification_beam(4.0).unwrap();
    spec.newton.rtol = 1e-13;
    spec.build().unwrap()
}

fn f_at(p: &Problem, rho: &[f64], ip: &InterpolationParams, xi: &[f64]) -> f64 {
    p.compliance_at(rho, xi, ip, None).unwrap()
}

#[test]
fn compliance_derivatives_match_differences_over_xi() {
    let p = beam();
    let ip = InterpolationParams::new(3.0, 4.0, 2.0);
    let x: Vec<f64> = (0..p.n_ele()).map(|e| 0.3 + 0.4 * ((e * 7 % 11) as f64 / 10.0)).collect();
    let rho = p.filter.apply(&x);
    let an = analyze(&p, &rho, &ip).unwrap();
    let ip = an.ip;
    let m = p.dim();
    let h = 1e-4;
    for k in 0..m {
        let mut xp = vec![0.0; m];
        let mut xm = vec![0.0; m];
        xp[k] = h;
        xm[k] = -h;
        let fd = (f_at(&p, &rho, &ip, &xp) - f_at(&p, &rho, &ip, &xm)) / (2.0 * h);
        let err = (an.f1[k] - fd).abs() / fd.abs().max(1e-8 * an.f0);
        println!("f_{k}: {:.10e} fd {:.10e} rel {:.2e}", an.f1[k], fd, err);
        assert!(err < 1e-4);
    }
    let h = 1e-3;
    for k in 0..m {
        for l in k..m {
            let mut v = [0.0; 4];
            for (i, (sk, sl)) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)].iter().enumerate() {
                let mut xi = vec![0.0; m];
                xi[k] += sk * h;
                xi[l] += sl * h;
                v[i] = f_at(&p, &rho, &ip, &xi);
            }
            let fd = (v[0] - v[1] - v[2] + v[3]) / (4.0 * h * h);
            let an_kl = *an.f2.get(k, l);
            let err = (an_kl - fd).abs() / fd.abs().max(1e-6 * an.f0);
            println!("f_{k}{l}: {:.10e} fd {:.10e} rel {:.2e}", an_kl, fd, err);
            assert!(err < 1e-3);
        }
    }
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    use rto_core::adjoint::{cdm_gradient, objective_value, robust_gradient};
    let p = beam();
    let ip = InterpolationParams::new(3.0, 4.0, 2.0);
    let x: Vec<f64> = (0..p.n_ele()).map(|e| 0.3 + 0.4 * ((e * 7 % 11) as f64 / 10.0)).collect();
    for alpha in [0.0, 1.0] {
        let an = analyze(&p, &p.filter.apply(&x), &ip).unwrap();
        let g = robust_gradient(&p, &an, alpha).unwrap();
        let obj = |x: &[f64]| -> rto_core::Result<f64> {
            let an = analyze(&p, &p.filter.apply(x), &ip)?;
            Ok(objective_value(&an, alpha))
        };
        let idx: Vec<usize> = (0..p.n_ele()).step_by(7).collect();
        let fd = cdm_gradient(obj, &x, 1e-6, &idx);
        let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let mut worst = 0.0f64;
        for (i, e) in idx.iter().enumerate() {
            let f = fd[i].unwrap();
            let err = (g[*e] - f).abs() / f.abs().max(1e-3 * gmax);
            worst = worst.max(err);
            if err > 1e-4 {
                println!("alpha {alpha} e {e}: adj {:.8e} cdm {:.8e} rel {:.2e}", g[*e], f, err);
            }
        }
        println!("alpha {alpha}: worst {worst:.2e}");
        assert!(worst < 1e-3);
    }
}
