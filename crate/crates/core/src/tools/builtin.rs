use std::str::FromStr;
use std::sync::Arc;

use super::{finish_spec, Args, ParamSpec, Partition, Registry, RegistryError, ToolSpec, TypeTag};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Math,
    Data,
    String,
    Logic,
}

pub const CATEGORIES: [Category; 4] = [Category::Math, Category::Data, Category::String, Category::Logic];

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Math => "math",
            Category::Data => "data",
            Category::String => "string",
            Category::Logic => "logic",
        }
    }
}

impl FromStr for Category {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "math" => Ok(Category::Math),
            "data" => Ok(Category::Data),
            "string" => Ok(Category::String),
            "logic" => Ok(Category::Logic),
            other => Err(RegistryError::UnknownCategory(other.to_string())),
        }
    }
}

fn num(args: &Args, k: &str) -> f64 {
    args[k].as_number().expect("checked by spec")
}

fn text<'a>(args: &'a Args, k: &str) -> &'a str {
    args[k].as_text().expect("checked by spec")
}

fn boolean(args: &Args, k: &str) -> bool {
    args[k].as_bool().expect("checked by spec")
}

fn numbers(args: &Args, k: &str) -> Result<Vec<f64>, String> {
    args[k]
        .as_list()
        .expect("checked by spec")
        .iter()
        .map(|v| v.as_number().ok_or_else(|| format!("`{k}` must contain only numbers, found {}", v.tag())))
        .collect()
}

fn booleans(args: &Args, k: &str) -> Result<Vec<bool>, String> {
    args[k]
        .as_list()
        .expect("checked by spec")
        .iter()
        .map(|v| v.as_bool().ok_or_else(|| format!("`{k}` must contain only booleans, found {}", v.tag())))
        .collect()
}

fn integer(args: &Args, k: &str) -> Result<i64, String> {
    let n = num(args, k);
    if n.fract() != 0.0 || n.abs() > 1e15 {
        return Err(format!("`{k}` must be an integer, got {n}"));
    }
    Ok(n as i64)
}

fn list_of(xs: Vec<f64>) -> Value {
    Value::List(xs.into_iter().map(Value::Number).collect())
}

/// Rounds to `digits` decimal places, ties to even.
pub(crate) fn round_half_even(x: f64, digits: i64) -> f64 {
    let scale = 10f64.powi(digits as i32);
    (x * scale).round_ties_even() / scale
}

struct Builder {
    reg: Registry,
}

impl Builder {
    fn tool(
        &mut self,
        name: &str,
        description: &str,
        params: &[(&str, TypeTag, &str)],
        returns: &str,
        f: impl Fn(&Args) -> Result<Value, String> + Send + Sync + 'static,
    ) {
        let spec = ToolSpec {
            name: name.into(),
            description: description.into(),
            params: params.iter().map(|(n, t, d)| ParamSpec::new(n, *t, d)).collect(),
            returns: returns.into(),
            partition: Partition::Business,
        };
        self.reg.register(spec, Arc::new(f)).expect("builtin names are unique");
    }
}

use TypeTag::{Boolean as B, List as L, Number as N, Text as T};

fn math(b: &mut Builder) {
    b.tool("add", "Add two numbers together", &[("a", N, "First number to add"), ("b", N, "Second number to add")], "The sum a + b", |a| {
        Ok(Value::Number(num(a, "a") + num(a, "b")))
    });
    b.tool("sub", "Subtract the second number from the first", &[("a", N, "Number to subtract from"), ("b", N, "Number to subtract")], "The difference a - b", |a| {
        Ok(Value::Number(num(a, "a") - num(a, "b")))
    });
    b.tool("mul", "Multiply two numbers", &[("a", N, "First factor"), ("b", N, "Second factor")], "The product a * b", |a| {
        Ok(Value::Number(num(a, "a") * num(a, "b")))
    });
    b.tool("div", "Divide the first number by the second", &[("a", N, "Dividend"), ("b", N, "Divisor")], "The quotient a / b", |a| {
        let d = num(a, "b");
        if d == 0.0 {
            return Err("division by zero".into());
        }
        Ok(Value::Number(num(a, "a") / d))
    });
    b.tool("sqrt", "Square root of a non-negative number", &[("x", N, "Number to take the square root of")], "The square root of x", |a| {
        let x = num(a, "x");
        if x < 0.0 {
            return Err(format!("square root of negative number {x}"));
        }
        Ok(Value::Number(x.sqrt()))
    });
    b.tool(
        "round_to",
        "Round a number to a given count of decimal places (ties to even)",
        &[("x", N, "Number to round"), ("digits", N, "Decimal places, an integer from 0 to 12")],
        "The rounded number",
        |a| {
            let d = integer(a, "digits")?;
            if !(0..=12).contains(&d) {
                return Err(format!("digits must be between 0 and 12, got {d}"));
            }
            Ok(Value::Number(round_half_even(num(a, "x"), d)))
        },
    );
    b.tool("abs_diff", "Absolute difference between two numbers", &[("a", N, "First number"), ("b", N, "Second number")], "The value |a - b|", |a| {
        Ok(Value::Number((num(a, "a") - num(a, "b")).abs()))
    });
    b.tool("pow", "Raise a number to a power", &[("base", N, "The base"), ("exp", N, "The exponent")], "base raised to exp", |a| {
        let v = num(a, "base").powf(num(a, "exp"));
        if v.is_finite() {
            Ok(Value::Number(v))
        } else {
            Err("result is not a finite number".into())
        }
    });
}

fn data(b: &mut Builder) {
    b.tool("sum_list", "Sum a list of numbers", &[("xs", L, "List of numbers")], "The sum of all elements", |a| {
        Ok(Value::Number(numbers(a, "xs")?.iter().sum()))
    });
    b.tool("sort_list", "Sort a list of numbers in ascending order", &[("xs", L, "List of numbers")], "The sorted list", |a| {
        let mut xs = numbers(a, "xs")?;
        xs.sort_by(f64::total_cmp);
        Ok(list_of(xs))
    });
    b.tool(
        "filter_gt",
        "Keep the elements strictly greater than a threshold",
        &[("xs", L, "List of numbers"), ("threshold", N, "Lower bound (exclusive)")],
        "The filtered list, order preserved",
        |a| {
            let t = num(a, "threshold");
            Ok(list_of(numbers(a, "xs")?.into_iter().filter(|x| *x > t).collect()))
        },
    );
    b.tool(
        "map_scale",
        "Multiply every element of a list by a factor",
        &[("xs", L, "List of numbers"), ("factor", N, "Scale factor")],
        "The scaled list",
        |a| {
            let f = num(a, "factor");
            Ok(list_of(numbers(a, "xs")?.into_iter().map(|x| x * f).collect()))
        },
    );
    b.tool("max_of", "Largest element of a non-empty list of numbers", &[("xs", L, "List of numbers")], "The maximum", |a| {
        numbers(a, "xs")?
            .into_iter()
            .reduce(f64::max)
            .map(Value::Number)
            .ok_or_else(|| "max_of of an empty list".into())
    });
    b.tool("min_of", "Smallest element of a non-empty list of numbers", &[("xs", L, "List of numbers")], "The minimum", |a| {
        numbers(a, "xs")?
            .into_iter()
            .reduce(f64::min)
            .map(Value::Number)
            .ok_or_else(|| "min_of of an empty list".into())
    });
    b.tool("count", "Number of elements in a list", &[("xs", L, "Any list")], "The element count", |a| {
        Ok(Value::Number(a["xs"].as_list().expect("checked").len() as f64))
    });
    b.tool("unique", "Remove repeated elements, keeping first occurrences", &[("xs", L, "Any list")], "The de-duplicated list", |a| {
        let mut out: Vec<Value> = Vec::new();
        for v in a["xs"].as_list().expect("checked") {
            if !out.contains(v) {
                out.push(v.clone());
            }
        }
        Ok(Value::List(out))
    });
}

fn string(b: &mut Builder) {
    b.tool("concat", "Concatenate two strings", &[("a", T, "First string"), ("b", T, "Second string")], "a followed by b", |a| {
        Ok(Value::Text(format!("{}{}", text(a, "a"), text(a, "b"))))
    });
    b.tool("split", "Split a string on a separator", &[("text", T, "String to split"), ("sep", T, "Non-empty separator")], "List of parts", |a| {
        let sep = text(a, "sep");
        if sep.is_empty() {
            return Err("separator must not be empty".into());
        }
        Ok(Value::List(text(a, "text").split(sep).map(Value::from).collect()))
    });
    b.tool("upper", "Convert a string to upper case", &[("text", T, "Input string")], "The upper-cased string", |a| {
        Ok(Value::Text(text(a, "text").to_uppercase()))
    });
    b.tool("lower", "Convert a string to lower case", &[("text", T, "Input string")], "The lower-cased string", |a| {
        Ok(Value::Text(text(a, "text").to_lowercase()))
    });
    b.tool("reverse", "Reverse the characters of a string", &[("text", T, "Input string")], "The reversed string", |a| {
        Ok(Value::Text(text(a, "text").chars().rev().collect()))
    });
    b.tool(
        "substring",
        "Characters from start (inclusive) to end (exclusive)",
        &[("text", T, "Input string"), ("start", N, "Start index"), ("end", N, "End index")],
        "The substring",
        |a| {
            let chars: Vec<char> = text(a, "text").chars().collect();
            let (s, e) = (integer(a, "start")?, integer(a, "end")?);
            if s < 0 || e < s || e as usize > chars.len() {
                return Err(format!("indices {s}..{e} out of range for length {}", chars.len()));
            }
            Ok(Value::Text(chars[s as usize..e as usize].iter().collect()))
        },
    );
    b.tool("length", "Number of characters in a string", &[("text", T, "Input string")], "The character count", |a| {
        Ok(Value::Number(text(a, "text").chars().count() as f64))
    });
    b.tool(
        "replace",
        "Replace every occurrence of a substring",
        &[("text", T, "Input string"), ("old", T, "Non-empty substring to replace"), ("new", T, "Replacement")],
        "The rewritten string",
        |a| {
            let old = text(a, "old");
            if old.is_empty() {
                return Err("`old` must not be empty".into());
            }
            Ok(Value::Text(text(a, "text").replace(old, text(a, "new"))))
        },
    );
}

fn logic(b: &mut Builder) {
    b.tool("and_all", "True when every element is true", &[("xs", L, "List of booleans")], "Conjunction of the list", |a| {
        Ok(Value::Boolean(booleans(a, "xs")?.into_iter().all(|x| x)))
    });
    b.tool("or_any", "True when some element is true", &[("xs", L, "List of booleans")], "Disjunction of the list", |a| {
        Ok(Value::Boolean(booleans(a, "xs")?.into_iter().any(|x| x)))
    });
    b.tool("not_val", "Logical negation", &[("x", B, "A boolean")], "not x", |a| Ok(Value::Boolean(!boolean(a, "x"))));
    b.tool("xor", "Exclusive or", &[("a", B, "First boolean"), ("b", B, "Second boolean")], "a xor b", |a| {
        Ok(Value::Boolean(boolean(a, "a") ^ boolean(a, "b")))
    });
    b.tool("implies", "Material implication", &[("a", B, "Premise"), ("b", B, "Conclusion")], "a implies b", |a| {
        Ok(Value::Boolean(!boolean(a, "a") || boolean(a, "b")))
    });
    b.tool("equals", "Numeric equality", &[("a", N, "First number"), ("b", N, "Second number")], "a == b", |a| {
        Ok(Value::Boolean(num(a, "a") == num(a, "b")))
    });
    b.tool("greater", "Strict numeric comparison", &[("a", N, "First number"), ("b", N, "Second number")], "a > b", |a| {
        Ok(Value::Boolean(num(a, "a") > num(a, "b")))
    });
    b.tool(
        "select_if",
        "Choose one of two strings by a boolean",
        &[("cond", B, "Selector"), ("if_true", T, "Result when cond is true"), ("if_false", T, "Result when cond is false")],
        "if_true or if_false",
        |a| {
            let key = if boolean(a, "cond") { "if_true" } else { "if_false" };
            Ok(Value::Text(text(a, key).to_string()))
        },
    );
}

/// The eight deterministic business tools of one category.
pub fn builtin_suite(category: Category) -> Registry {
    let mut b = Builder { reg: Registry::new() };
    match category {
        Category::Math => math(&mut b),
        Category::Data => data(&mut b),
        Category::String => string(&mut b),
        Category::Logic => logic(&mut b),
    }
    b.reg
}

/// Every builtin business tool, the graph-construction tools and `finish`.
pub fn full_registry() -> Registry {
    let mut reg = Registry::new();
    for c in CATEGORIES {
        reg.merge(&builtin_suite(c));
    }
    for spec in crate::graph::graph_tool_specs() {
        reg.register_spec(spec).expect("graph tool names are unique");
    }
    reg.register_spec(finish_spec()).expect("finish is unique");
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn call(reg: &Registry, name: &str, pairs: &[(&str, Value)]) -> Result<Value, super::super::ToolError> {
        let args: Args = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        reg.execute(name, &args)
    }

    #[test]
    fn suites_have_eight_tools() {
        for c in CATEGORIES {
            assert_eq!(builtin_suite(c).len(), 8, "{c:?}");
        }
        assert_eq!(full_registry().len(), 32 + 5 + 1);
        assert_eq!("poetry".parse::<Category>(), Err(RegistryError::UnknownCategory("poetry".into())));
    }

    #[test]
    fn examples() {
        let m = builtin_suite(Category::Math);
        assert_eq!(call(&m, "round_to", &[("x", 1.23456.into()), ("digits", 3.0.into())]), Ok(Value::Number(1.235)));
        assert_eq!(call(&m, "round_to", &[("x", 2.5.into()), ("digits", 0.0.into())]), Ok(Value::Number(2.0)));
        let r = call(&m, "sqrt", &[("x", 2.0.into())]).unwrap().as_number().unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        assert!(call(&m, "div", &[("a", 1.0.into()), ("b", 0.0.into())]).is_err());
        assert!(call(&m, "sqrt", &[("x", (-1.0).into())]).is_err());
        let s = builtin_suite(Category::String);
        assert_eq!(call(&s, "concat", &[("a", "ab".into()), ("b", "cd".into())]), Ok(Value::from("abcd")));
        let d = builtin_suite(Category::Data);
        assert_eq!(call(&d, "sum_list", &[("xs", vec![1.0, 2.0, 3.0].into())]), Ok(Value::Number(6.0)));
        assert_eq!(
            call(&d, "unique", &[("xs", vec![2.0, 1.0, 2.0].into())]),
            Ok(Value::from(vec![2.0, 1.0]))
        );
        let l = builtin_suite(Category::Logic);
        assert_eq!(
            call(&l, "select_if", &[("cond", false.into()), ("if_true", "y".into()), ("if_false", "n".into())]),
            Ok(Value::from("n"))
        );
    }

    #[test]
    fn list_element_types_are_checked() {
        let d = builtin_suite(Category::Data);
        let err = call(&d, "sum_list", &[("xs", Value::from(vec!["a"]))]).unwrap_err();
        assert_eq!(err.kind, super::super::ToolErrorKind::Domain);
    }
}
