//! Closed-form expressions in two named variables, compiled once and shared
//! across threads.

use std::fmt;
use std::sync::Arc;

use fasteval::{Compiler, Evaler};

use crate::error::{Error, Result};

struct Compiled {
    slab: fasteval::Slab,
    instruction: fasteval::Instruction,
}

/// A compiled expression `g(a, b)` such as `1 + 0.5*s1^2`.
#[derive(Clone)]
pub struct Expr2 {
    source: String,
    vars: [&'static str; 2],
    compiled: Arc<Compiled>,
}

impl Expr2 {
    pub fn parse(source: &str, vars: [&'static str; 2]) -> Result<Self> {
        let mut slab = fasteval::Slab::new();
        let parser = fasteval::Parser::new();
        let instruction = parser
            .parse(source, &mut slab.ps)
            .map_err(|e| Error::Config(format!("cannot parse expression `{source}`: {e}")))?
            .from(&slab.ps)
            .compile(&slab.ps, &mut slab.cs);
        let expr = Expr2 {
            source: source.to_string(),
            vars,
            compiled: Arc::new(Compiled { slab, instruction }),
        };
        // Unknown identifiers only surface at evaluation time.
        expr.try_eval(0.5, 0.5)?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    fn try_eval(&self, a: f64, b: f64) -> Result<f64> {
        let [va, vb] = self.vars;
        let mut ns = |name: &str, _args: Vec<f64>| -> Option<f64> {
            if name == va {
                Some(a)
            } else if name == vb {
                Some(b)
            } else {
                None
            }
        };
        self.compiled
            .instruction
            .eval(&self.compiled.slab, &mut ns)
            .map_err(|e| Error::Config(format!("cannot evaluate `{}`: {e}", self.source)))
    }

    /// Evaluates the expression; evaluation failures yield NaN.
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.try_eval(a, b).unwrap_or(f64::NAN)
    }
}

impl fmt::Debug for Expr2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Expr2").field(&self.source).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_named_variables() {
        let e = Expr2::parse("1 + 0.5*s1^2*abs(s2)", ["s1", "s2"]).unwrap();
        assert_eq!(e.eval(2.0, -3.0), 7.0);
    }

    #[test]
    fn rejects_unknown_variable() {
        assert!(Expr2::parse("x + s1", ["s1", "s2"]).is_err());
        assert!(Expr2::parse("1 +", ["s1", "s2"]).is_err());
    }
}
