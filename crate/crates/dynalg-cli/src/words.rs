//! Word expressions such as `W(f) W(g)^-1 S(F) D(phi) e(0.25)`.
//!
//! `S(name)` is the generator of a functional (a field name means φ(f)),
//! `W(name)` the Weyl operator of a field, `D(name)` the generator of the
//! relative action δL(φ₀) and `e(θ)` the scalar e^{iθ}. A trailing `^-1`
//! inverts a factor.

use dynalg::algebra::{AlgebraWord, GeneratorTable, Phase};
use dynalg::free_theory::weyl;

use crate::error::CliError;
use crate::scenario::World;

#[derive(Debug, Clone, PartialEq)]
enum Factor {
    S(String),
    W(String),
    D(String),
    Phase(f64),
}

fn parse(expr: &str) -> Result<Vec<(Factor, bool)>, CliError> {
    let bad = |m: String| CliError::Expression(format!("{m} in '{expr}'"));
    let mut out = Vec::new();
    let mut rest = expr.trim();
    while !rest.is_empty() {
        let open = rest.find('(').ok_or_else(|| bad(format!("expected '(' after '{rest}'")))?;
        let close = rest[open..]
            .find(')')
            .map(|c| c + open)
            .ok_or_else(|| bad("unclosed '('".into()))?;
        let head = rest[..open].trim();
        let arg = rest[open + 1..close].trim();
        if arg.is_empty() {
            return Err(bad(format!("empty argument to {head}")));
        }
        let factor = match head {
            "S" => Factor::S(arg.to_string()),
            "W" => Factor::W(arg.to_string()),
            "D" => Factor::D(arg.to_string()),
            "e" => Factor::Phase(arg.parse().map_err(|_| bad(format!("'{arg}' is not a number")))?),
            other => return Err(bad(format!("unknown factor '{other}'"))),
        };
        rest = rest[close + 1..].trim_start();
        let inverse = if let Some(r) = rest.strip_prefix("^-1") {
            rest = r.trim_start();
            true
        } else {
            false
        };
        out.push((factor, inverse));
    }
    if out.is_empty() {
        return Err(bad("empty expression".into()));
    }
    Ok(out)
}

pub fn build_word(world: &World, table: &GeneratorTable, expr: &str) -> Result<AlgebraWord, CliError> {
    let mut w = AlgebraWord::identity();
    for (factor, inverse) in parse(expr)? {
        let ctx = |e| CliError::runtime(format!("factor of '{expr}'"), e);
        let piece = match &factor {
            Factor::S(n) => table.gen(&world.functional(n)?).map_err(ctx)?,
            Factor::W(n) => weyl(table, &world.field(n)?).map_err(ctx)?,
            Factor::D(n) => table.gen_dynamical(&world.field(n)?).map_err(ctx)?,
            Factor::Phase(theta) => AlgebraWord::scalar(Phase::from_angle(*theta)),
        };
        let piece = if inverse { piece.inverse() } else { piece };
        w = w.multiply(&piece);
    }
    Ok(w)
}
