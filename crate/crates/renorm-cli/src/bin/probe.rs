use anyhow::Result;
use renorm::genfun::{drenorm_c, drenorm_star, psi_ekw_vector, psi_vector, renorm_ekw, DerivMode, RenormWorkspace};
use renorm::taylor2::{GenFunction, Poly2, Var};

fn rel(a: &Poly2, b: &Poly2) -> f64 {
    a.sub(b).unwrap().norm_rho() / b.norm_rho()
}

fn main() -> Result<()> {
    let text = std::fs::read_to_string("data/s0.txt")?;
    let s = GenFunction::new(Poly2::from_text(&text)?)?;
    let ws = RenormWorkspace::new_plain(&s)?;
    let lambda = ws.lambda();
    let mu = ws.mu();
    let c0 = ws.shifted_prerenorm().get(0, 3);
    println!("lambda {lambda:.17e}  mu {mu:.17e}  c0 {c0:.17e}");

    let psi = psi_vector(&s)?;
    let psi_ekw = psi_ekw_vector(&s)?;
    let psi_u = s.poly().clone();
    let x = Poly2::monomial(s.poly().deg(), s.poly().rho(), 1, 0, 1.0)?;
    let y = Poly2::monomial(s.poly().deg(), s.poly().rho(), 0, 1, 1.0)?;
    let psi_x = s.poly().partial(Var::X).mul(&x)?.add(&s.poly().partial(Var::Y).mul(&y)?)?;

    // frozen-scaling eigen-identities
    let d_psi = drenorm_star(&s, &psi, lambda, mu)?;
    println!("star psi   : rel resid {:.3e}", rel(&d_psi, &psi.scale(lambda)));
    let d_pu = drenorm_star(&s, &psi_u, lambda, mu)?;
    println!("star psi_u : rel resid {:.3e}", rel(&d_pu, &psi_u));
    let d_px = drenorm_star(&s, &psi_x, lambda, mu)?;
    println!("star psi_x : rel resid {:.3e}", rel(&d_px, &psi_x));

    // scalar sensitivities along psi_ekw under the plain operator
    let full = ws.derivative_full(&psi_ekw)?;
    println!(
        "d_lambda {:.17e}  want {:.17e}",
        full.d_lambda,
        lambda * (1.0 - lambda)
    );
    println!(
        "d_mu     {:.17e}  want {:.17e}",
        full.d_mu,
        mu * (1.0 - lambda)
    );
    println!(
        "plain psi_ekw rel resid {:.3e}",
        rel(&full.d_out, &psi_ekw.scale(lambda))
    );

    // finite-difference oracle for the plain operator along psi_ekw
    let scale = 1.0 / psi_ekw.norm_rho();
    let dir = psi_ekw.scale(scale);
    for h in [1e-5, 1e-6, 1e-7] {
        let sp = GenFunction::new(s.poly().add(&dir.scale(h))?)?;
        let sm = GenFunction::new(s.poly().sub(&dir.scale(h))?)?;
        let rp = renorm_ekw(&sp)?.s_out;
        let rm = renorm_ekw(&sm)?.s_out;
        let fd = rp.poly().sub(rm.poly())?.scale(0.5 / h);
        let exact = full.d_out.scale(scale);
        println!(
            "h {h:.0e}: |fd-exact|/|fd| {:.3e}   |fd-lambda*dir|/|fd| {:.3e}",
            rel(&fd, &exact),
            fd.sub(&dir.scale(lambda))?.norm_rho() / fd.norm_rho()
        );
    }

    // shifted operator: psi_ekw should be annihilated
    let d_c = drenorm_c(&s, &psi_ekw, c0, DerivMode::Exact)?;
    println!(
        "shifted psi_ekw |D| / |psi_ekw| = {:.3e}",
        d_c.norm_rho() / psi_ekw.norm_rho()
    );
    Ok(())
}
