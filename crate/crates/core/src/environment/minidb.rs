//! In-memory tables and an interpreter for the parsed SQL subset.

use std::collections::BTreeMap;
use std::fmt;

use crate::grammar::sql::{CmpOp, Expr, Literal, Projection, Script, Select, Statement};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Value {
    Null,
    Int(i64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("NULL"),
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnType {
    Int,
    Str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub columns: Vec<(String, ColumnType)>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|(c, _)| c.eq_ignore_ascii_case(name))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Database {
    pub tables: BTreeMap<String, Table>,
}

/// What a script did before it finished or hit a runtime error.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Execution {
    /// Rows of every executed SELECT, in order.
    pub rows: Vec<Vec<Value>>,
    /// Rows contributed by UNION branches or by SELECTs after the first
    /// statement.
    pub extra_rows: usize,
    /// Kinds of the statements that completed.
    pub executed: Vec<&'static str>,
    /// Row count of the first statement's base table when it is a SELECT
    /// with a FROM clause.
    pub first_table_rows: Option<usize>,
    pub error: Option<String>,
}

type Row<'a> = Option<(&'a Table, &'a [Value])>;

impl Database {
    /// Table and column names, for identifier generalization.
    pub fn schema(&self) -> crate::corpus::Schema {
        crate::corpus::Schema::new(self.tables.iter().map(|(t, tab)| (t.clone(), tab.columns.iter().map(|(c, _)| c.clone()).collect::<Vec<_>>())))
    }

    pub fn create(&mut self, name: &str, columns: &[(&str, ColumnType)], rows: Vec<Vec<Value>>) {
        let columns = columns.iter().map(|&(c, t)| (c.to_string(), t)).collect();
        self.tables.insert(name.to_ascii_lowercase(), Table { columns, rows });
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.get(&name.to_ascii_lowercase())
    }

    /// Runs statements in order, stopping at the first runtime error.
    pub fn execute(&mut self, script: &Script) -> Execution {
        let mut out = Execution::default();
        for (i, stmt) in script.statements.iter().enumerate() {
            let r = match stmt {
                Statement::Select(sel) => self.select(sel).map(|(rows, union_rows)| {
                    if i == 0 {
                        out.first_table_rows = sel.from.as_deref().and_then(|t| self.table(t)).map(|t| t.rows.len());
                        out.extra_rows += union_rows;
                    } else {
                        out.extra_rows += rows.len();
                    }
                    out.rows.extend(rows);
                }),
                Statement::Insert { table, columns, rows } => self.insert(table, columns.as_deref(), rows),
                Statement::Update { table, assignments, filter } => self.update(table, assignments, filter.as_ref()),
                Statement::Drop { table } => self.tables.remove(&table.to_ascii_lowercase()).map(drop).ok_or_else(|| format!("no such table: {table}")),
                Statement::WaitFor(_) => Ok(()),
            };
            match r {
                Ok(()) => out.executed.push(stmt.kind()),
                Err(e) => {
                    out.error = Some(e);
                    break;
                }
            }
        }
        out
    }

    /// Result rows and how many of them came from UNION branches.
    fn select(&self, sel: &Select) -> Result<(Vec<Vec<Value>>, usize), String> {
        let table = match &sel.from {
            Some(name) => Some(self.table(name).ok_or_else(|| format!("no such table: {name}"))?),
            None => None,
        };
        let mut rows = Vec::new();
        let base: Vec<Row> = match table {
            Some(t) => t.rows.iter().map(|r| Some((t, r.as_slice()))).collect(),
            None => vec![None],
        };
        for row in base {
            if let Some(f) = &sel.filter {
                if !truthy(&eval(f, row)?) {
                    continue;
                }
            }
            rows.push(match &sel.projection {
                Projection::Star => match row {
                    Some((_, r)) => r.to_vec(),
                    None => return Err("SELECT * without FROM".into()),
                },
                Projection::Exprs(es) => es.iter().map(|e| eval(e, row)).collect::<Result<_, _>>()?,
            });
        }
        let width = match (&sel.projection, table) {
            (Projection::Star, Some(t)) => t.columns.len(),
            (Projection::Exprs(es), _) => es.len(),
            (Projection::Star, None) => 0,
        };
        let mut union_rows = 0;
        if let Some((all, other)) = &sel.union {
            let (more, _) = self.select(other)?;
            let other_width = match (&other.projection, other.from.as_deref().and_then(|t| self.table(t))) {
                (Projection::Star, Some(t)) => t.columns.len(),
                (Projection::Exprs(es), _) => es.len(),
                (Projection::Star, None) => 0,
            };
            if other_width != width {
                return Err("UNION operands have different column counts".into());
            }
            for r in more {
                if *all || !rows.contains(&r) {
                    rows.push(r);
                    union_rows += 1;
                }
            }
            if !*all {
                let mut seen = Vec::new();
                rows.retain(|r| {
                    let keep = !seen.contains(r);
                    if keep {
                        seen.push(r.clone());
                    }
                    keep
                });
            }
        }
        for &k in &sel.order_by {
            if k < 1 || k as usize > width {
                return Err(format!("ORDER BY position {k} is out of range"));
            }
        }
        if let Some(&k) = sel.order_by.first() {
            let k = k as usize - 1;
            rows.sort_by(|a, b| a[k].cmp(&b[k]));
        }
        Ok((rows, union_rows))
    }

    fn insert(&mut self, name: &str, columns: Option<&[String]>, rows: &[Vec<Expr>]) -> Result<(), String> {
        let table = self.tables.get_mut(&name.to_ascii_lowercase()).ok_or_else(|| format!("no such table: {name}"))?;
        let targets: Vec<usize> = match columns {
            Some(cs) => cs.iter().map(|c| table.column(c).ok_or_else(|| format!("no such column: {c}"))).collect::<Result<_, _>>()?,
            None => (0..table.columns.len()).collect(),
        };
        let mut new_rows = Vec::new();
        for values in rows {
            if values.len() != targets.len() {
                return Err("INSERT value count does not match column count".into());
            }
            let mut row = vec![Value::Null; table.columns.len()];
            for (&c, e) in targets.iter().zip(values) {
                let v = eval(e, None)?;
                check_type(&v, table.columns[c].1)?;
                row[c] = v;
            }
            if let Some(id) = table.column("id") {
                if row[id] == Value::Null {
                    let next = table.rows.iter().chain(&new_rows).filter_map(|r: &Vec<Value>| match r[id] {
                        Value::Int(i) => Some(i),
                        _ => None,
                    });
                    row[id] = Value::Int(next.max().unwrap_or(0) + 1);
                }
            }
            new_rows.push(row);
        }
        table.rows.extend(new_rows);
        Ok(())
    }

    fn update(&mut self, name: &str, assignments: &[(String, Expr)], filter: Option<&Expr>) -> Result<(), String> {
        let table = self.table(name).ok_or_else(|| format!("no such table: {name}"))?;
        let mut plan = Vec::new();
        for (i, row) in table.rows.iter().enumerate() {
            let ctx = Some((table, row.as_slice()));
            if let Some(f) = filter {
                if !truthy(&eval(f, ctx)?) {
                    continue;
                }
            }
            for (col, e) in assignments {
                let c = table.column(col).ok_or_else(|| format!("no such column: {col}"))?;
                let v = eval(e, ctx)?;
                check_type(&v, table.columns[c].1)?;
                plan.push((i, c, v));
            }
        }
        let table = self.tables.get_mut(&name.to_ascii_lowercase()).expect("checked above");
        for (i, c, v) in plan {
            table.rows[i][c] = v;
        }
        Ok(())
    }
}

fn check_type(v: &Value, t: ColumnType) -> Result<(), String> {
    match (v, t) {
        (Value::Null, _) | (Value::Int(_), ColumnType::Int) | (Value::Str(_), ColumnType::Str) => Ok(()),
        _ => Err(format!("type mismatch: {v} for {t:?} column")),
    }
}

fn truthy(v: &Value) -> bool {
    matches!(v, Value::Int(i) if *i != 0)
}

fn bool_value(b: bool) -> Value {
    Value::Int(b as i64)
}

fn like(text: &str, pattern: &str) -> bool {
    fn go(t: &[char], p: &[char]) -> bool {
        match p.split_first() {
            None => t.is_empty(),
            Some(('%', rest)) => (0..=t.len()).any(|k| go(&t[k..], rest)),
            Some(('_', rest)) => !t.is_empty() && go(&t[1..], rest),
            Some((c, rest)) => t.first().is_some_and(|x| x.eq_ignore_ascii_case(c)) && go(&t[1..], rest),
        }
    }
    let t: Vec<char> = text.chars().collect();
    let p: Vec<char> = pattern.chars().collect();
    go(&t, &p)
}

/// Comparison with strict typing: values of different types never compare
/// true, and NULL compares false with everything.
fn compare(op: CmpOp, a: &Value, b: &Value) -> bool {
    use std::cmp::Ordering::*;
    let ord = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => {
            if op == CmpOp::Like {
                return like(x, y);
            }
            x.cmp(y)
        }
        _ => return false,
    };
    match op {
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
        CmpOp::Lt => ord == Less,
        CmpOp::Le => ord != Greater,
        CmpOp::Gt => ord == Greater,
        CmpOp::Ge => ord != Less,
        CmpOp::Like => false,
    }
}

fn eval(e: &Expr, row: Row) -> Result<Value, String> {
    Ok(match e {
        Expr::Lit(Literal::Int(i)) => Value::Int(*i),
        Expr::Lit(Literal::Str(s)) => Value::Str(s.clone()),
        Expr::Lit(Literal::Null) => Value::Null,
        Expr::Column(c) => {
            let (t, r) = row.ok_or_else(|| format!("no such column: {c}"))?;
            let i = t.column(c).ok_or_else(|| format!("no such column: {c}"))?;
            r[i].clone()
        }
        Expr::Neg(x) => match eval(x, row)? {
            Value::Int(i) => Value::Int(i.wrapping_neg()),
            Value::Null => Value::Null,
            v => return Err(format!("cannot negate {v}")),
        },
        Expr::Cmp(op, a, b) => bool_value(compare(*op, &eval(a, row)?, &eval(b, row)?)),
        Expr::And(a, b) => bool_value(truthy(&eval(a, row)?) && truthy(&eval(b, row)?)),
        Expr::Or(a, b) => bool_value(truthy(&eval(a, row)?) || truthy(&eval(b, row)?)),
        Expr::Not(a) => bool_value(!truthy(&eval(a, row)?)),
        Expr::Call(name, args) => {
            let vals: Vec<Value> = args.iter().map(|a| eval(a, row)).collect::<Result<_, _>>()?;
            call(name, &vals)?
        }
    })
}

fn call(name: &str, args: &[Value]) -> Result<Value, String> {
    let one = || match args {
        [v] => Ok(v),
        _ => Err(format!("{name} takes one argument")),
    };
    Ok(match name.to_ascii_uppercase().as_str() {
        "SLEEP" | "PG_SLEEP" => {
            one()?;
            Value::Int(0)
        }
        "LENGTH" | "LEN" => match one()? {
            Value::Null => Value::Null,
            v => Value::Int(v.to_string().chars().count() as i64),
        },
        "ASCII" => match one()? {
            Value::Null => Value::Null,
            v => Value::Int(v.to_string().chars().next().map_or(0, |c| c as i64)),
        },
        "UPPER" => match one()? {
            Value::Str(s) => Value::Str(s.to_uppercase()),
            v => v.clone(),
        },
        "LOWER" => match one()? {
            Value::Str(s) => Value::Str(s.to_lowercase()),
            v => v.clone(),
        },
        _ => return Err(format!("unknown function {name}")),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::sql::parse_script;

    fn db() -> Database {
        let mut db = Database::default();
        db.create(
            "users",
            &[("id", ColumnType::Int), ("name", ColumnType::Str), ("active", ColumnType::Int)],
            vec![
                vec![Value::Int(1), Value::Str("admin".into()), Value::Int(1)],
                vec![Value::Int(2), Value::Str("alice".into()), Value::Int(1)],
                vec![Value::Int(3), Value::Str("bob".into()), Value::Int(0)],
            ],
        );
        db
    }

    fn run(db: &mut Database, q: &str) -> Execution {
        db.execute(&parse_script(q).unwrap())
    }

    #[test]
    fn select_filters_and_projects() {
        let mut d = db();
        let e = run(&mut d, "SELECT name FROM users WHERE active = 1 AND id > 1");
        assert_eq!(e.rows, vec![vec![Value::Str("alice".into())]]);
        assert_eq!(e.first_table_rows, Some(3));
        let e = run(&mut d, "SELECT * FROM users WHERE name = '' OR 'a' = 'a'");
        assert_eq!(e.rows.len(), 3);
    }

    #[test]
    fn strict_typing_never_matches_across_types() {
        let mut d = db();
        assert!(run(&mut d, "SELECT * FROM users WHERE id = '1'").rows.is_empty());
        assert!(run(&mut d, "SELECT * FROM users WHERE name = 1").rows.is_empty());
    }

    #[test]
    fn union_requires_matching_width() {
        let mut d = db();
        let e = run(&mut d, "SELECT name FROM users WHERE id = 9 UNION SELECT 'x'");
        assert_eq!((e.rows.len(), e.extra_rows), (1, 1));
        let e = run(&mut d, "SELECT name FROM users UNION SELECT 1, 2");
        assert!(e.error.is_some());
    }

    #[test]
    fn stacked_statements_modify_state() {
        let mut d = db();
        let e = run(&mut d, "SELECT * FROM users WHERE id = 1; UPDATE users SET name = 'eve' WHERE id = 2; INSERT INTO users (name) VALUES ('m')");
        assert_eq!(e.executed, ["select", "update", "insert"]);
        let t = d.table("users").unwrap();
        assert_eq!(t.rows[1][1], Value::Str("eve".into()));
        assert_eq!(t.rows[3][0], Value::Int(4));
        let e = run(&mut d, "DROP TABLE users; SELECT * FROM users");
        assert_eq!(e.executed, ["drop"]);
        assert!(e.error.is_some());
    }

    #[test]
    fn order_by_checks_range_and_like_matches() {
        let mut d = db();
        assert!(run(&mut d, "SELECT name FROM users ORDER BY 2").error.is_some());
        let e = run(&mut d, "SELECT name FROM users WHERE name LIKE 'a%' ORDER BY 1");
        assert_eq!(e.rows.len(), 2);
    }
}
