//! Parse, print, differentiate and evaluate the expression language used for
//! vector fields, Lyapunov functions and gains.
//!
//! Run with `cargo run --example expressions`.

use switched_iss::expr::Expr;

fn main() {
    let vars = ["x1", "x2", "v1"];
    let f = Expr::parse("-x1 + sin(x1 - x2) + 0.5*v1", &vars).unwrap();
    println!("f        = {f}");

    let df = f.differentiate("x1");
    println!("df/dx1   = {df}");

    let at = [("x1", 0.3), ("x2", -0.4), ("v1", 1.0)];
    println!("f(0.3, -0.4, 1)      = {}", f.evaluate(&at).unwrap());
    println!("df/dx1(0.3, -0.4, 1) = {}", df.evaluate(&at).unwrap());

    // printing is fully parenthesized and parses back to the same tree
    let back = Expr::parse(&f.to_string(), &vars).unwrap();
    assert_eq!(back.to_string(), f.to_string());

    // compiled form for hot loops; slots follow the given variable order
    let compiled = f.compile(&vars).unwrap();
    println!("compiled at the same point = {}", compiled.eval(&[0.3, -0.4, 1.0]).unwrap());

    match Expr::parse("x1 + y", &vars) {
        Ok(_) => unreachable!(),
        Err(e) => println!("rejected: {e}"),
    }
    match Expr::parse("ln(x1)", &vars).unwrap().evaluate(&[("x1", -1.0)]) {
        Ok(_) => unreachable!(),
        Err(e) => println!("domain error: {e}"),
    }
}
