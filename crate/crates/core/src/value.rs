//! Ground values appearing in instances.
//!
//! A value is a constant, a labelled null, or a compound term built from a
//! function symbol and child values. Compounds only appear in the result of
//! the skolem chase; the first-order chase produces constants and nulls.
//!
//! The derived order (constants before nulls before compounds, integers
//! before strings) is the canonical order used everywhere facts are sorted,
//! so changing it silently changes every serialized artifact.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constant {
    Int(i64),
    Str(String),
}

impl Constant {
    pub fn str(s: impl Into<String>) -> Self {
        Constant::Str(s.into())
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constant::Int(n) => write!(f, "{n}"),
            Constant::Str(s) => write!(f, "\"{}\"", escape(s)),
        }
    }
}

fn escape(s: &str) -> String {
    s.chars()
        .flat_map(|c| match c {
            '"' => vec!['\\', '"'],
            '\\' => vec!['\\', '\\'],
            c => vec![c],
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Const(Constant),
    /// Labelled null, rendered `_N<id>`.
    Null(u64),
    /// Ground functional term, produced by the skolem chase.
    Compound(String, Vec<Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Const(Constant::str(s))
    }

    pub fn int(n: i64) -> Self {
        Value::Const(Constant::Int(n))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Value::Const(_))
    }

    pub fn contains_null(&self) -> bool {
        match self {
            Value::Const(_) => false,
            Value::Null(_) => true,
            Value::Compound(_, args) => args.iter().any(Value::contains_null),
        }
    }

    /// Nesting depth of function applications: constants and nulls have
    /// depth 0, `f(a)` has depth 1.
    pub fn depth(&self) -> usize {
        match self {
            Value::Const(_) | Value::Null(_) => 0,
            Value::Compound(_, args) => 1 + args.iter().map(Value::depth).max().unwrap_or(0),
        }
    }

    pub fn max_null_id(&self) -> Option<u64> {
        match self {
            Value::Const(_) => None,
            Value::Null(id) => Some(*id),
            Value::Compound(_, args) => args.iter().filter_map(Value::max_null_id).max(),
        }
    }

    /// Replaces every occurrence of `from` (including inside compounds)
    /// with `to`.
    pub fn substitute(&self, from: &Value, to: &Value) -> Value {
        if self == from {
            return to.clone();
        }
        match self {
            Value::Compound(f, args) => Value::Compound(
                f.clone(),
                args.iter().map(|a| a.substitute(from, to)).collect(),
            ),
            other => other.clone(),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Const(c) => write!(f, "{c}"),
            Value::Null(id) => write!(f, "_N{id}"),
            Value::Compound(name, args) => {
                write!(f, "{name}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Allocator for fresh labelled nulls. Seeding it above every null already
/// present keeps chase output independent of how the input was produced.
#[derive(Debug, Clone)]
pub struct NullSource {
    next: u64,
}

impl NullSource {
    pub fn new() -> Self {
        NullSource { next: 1 }
    }

    /// Starts numbering strictly above every null id mentioned in `values`.
    pub fn starting_above<'a>(values: impl IntoIterator<Item = &'a Value>) -> Self {
        let max = values
            .into_iter()
            .filter_map(Value::max_null_id)
            .max()
            .unwrap_or(0);
        NullSource { next: max + 1 }
    }

    pub fn fresh(&mut self) -> Value {
        let v = Value::Null(self.next);
        self.next += 1;
        v
    }
}

impl Default for NullSource {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_constants_before_nulls_before_compounds() {
        let mut vals = vec![
            Value::Compound("f".into(), vec![Value::int(1)]),
            Value::Null(2),
            Value::str("a"),
            Value::int(5),
        ];
        vals.sort();
        assert_eq!(
            vals,
            vec![
                Value::int(5),
                Value::str("a"),
                Value::Null(2),
                Value::Compound("f".into(), vec![Value::int(1)]),
            ]
        );
    }

    #[test]
    fn depth_counts_nesting() {
        let v = Value::Compound(
            "f".into(),
            vec![Value::Compound("g".into(), vec![Value::Null(1)]), Value::int(0)],
        );
        assert_eq!(v.depth(), 2);
        assert_eq!(Value::Null(1).depth(), 0);
    }

    #[test]
    fn null_source_starts_above_existing() {
        let vals = [Value::Null(7), Value::Compound("f".into(), vec![Value::Null(9)])];
        let mut src = NullSource::starting_above(vals.iter());
        assert_eq!(src.fresh(), Value::Null(10));
        assert_eq!(src.fresh(), Value::Null(11));
    }

    #[test]
    fn display_escapes_strings() {
        assert_eq!(Value::str("a\"b\\c").to_string(), "\"a\\\"b\\\\c\"");
        assert_eq!(Value::Null(3).to_string(), "_N3");
        let v = Value::Compound("f".into(), vec![Value::str("x"), Value::int(2)]);
        assert_eq!(v.to_string(), "f(\"x\", 2)");
    }
}
