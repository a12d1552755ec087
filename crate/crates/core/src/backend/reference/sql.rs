//! Lexer and recursive-descent parser for the SQL subset the reference
//! engine understands.
//!
//! Operator precedence follows SQLite: `<< >> & |` share one level above
//! comparisons, then `+ -`, then `* / %`. `^` is bitwise XOR at the same
//! level as `|`.

use std::fmt;

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Ident(String),
    Int(i64),
    Real(f64),
    Symbol(&'static str),
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Ident(s) => write!(f, "`{s}`"),
            Token::Int(v) => write!(f, "{v}"),
            Token::Real(v) => write!(f, "{v}"),
            Token::Symbol(s) => write!(f, "`{s}`"),
        }
    }
}

const SYMBOLS: [&str; 19] = [
    "<<", ">>", "<=", ">=", "<>", "!=", "(", ")", ",", ".", ";", "*", "+", "-", "/", "%", "&", "|",
    "^",
];

fn tokenize(sql: &str) -> Result<Vec<Token>, String> {
    let bytes = sql.as_bytes();
    let mut tokens = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let c = bytes[pos];
        if c.is_ascii_whitespace() {
            pos += 1;
        } else if c == b'-' && bytes.get(pos + 1) == Some(&b'-') {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = pos;
            while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == b'_') {
                pos += 1;
            }
            tokens.push(Token::Ident(sql[start..pos].to_string()));
        } else if c.is_ascii_digit() || (c == b'.' && bytes.get(pos + 1).is_some_and(u8::is_ascii_digit)) {
            let start = pos;
            let mut real = false;
            while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'.' {
                real = true;
                pos += 1;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
            }
            if pos < bytes.len() && (bytes[pos] == b'e' || bytes[pos] == b'E') {
                real = true;
                pos += 1;
                if pos < bytes.len() && (bytes[pos] == b'+' || bytes[pos] == b'-') {
                    pos += 1;
                }
                let digits = pos;
                while pos < bytes.len() && bytes[pos].is_ascii_digit() {
                    pos += 1;
                }
                if digits == pos {
                    return Err(format!("malformed number at byte {start}"));
                }
            }
            let text = &sql[start..pos];
            let token = if real {
                Token::Real(text.parse().map_err(|_| format!("bad number `{text}`"))?)
            } else {
                match text.parse::<i64>() {
                    Ok(v) => Token::Int(v),
                    Err(_) => Token::Real(text.parse().map_err(|_| format!("bad number `{text}`"))?),
                }
            };
            tokens.push(token);
        } else {
            let rest = &sql[pos..];
            let sym = SYMBOLS
                .iter()
                .chain(["=", "<", ">"].iter())
                .find(|s| rest.starts_with(**s))
                .ok_or_else(|| format!("unexpected character `{}` at byte {pos}", c as char))?;
            tokens.push(Token::Symbol(sym));
            pos += sym.len();
        }
    }
    Ok(tokens)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Affinity {
    Integer,
    Real,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    BitAnd,
    BitOr,
    BitXor,
    Shl,
    Shr,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Real(f64),
    Column { table: Option<String>, name: String },
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Sum(Box<Expr>),
    CountStar,
}

impl Expr {
    pub fn is_aggregate(&self) -> bool {
        match self {
            Expr::Sum(_) | Expr::CountStar => true,
            Expr::Neg(e) => e.is_aggregate(),
            Expr::Binary(_, a, b) => a.is_aggregate() || b.is_aggregate(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableRef {
    pub name: String,
    pub alias: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectItem {
    pub expr: Expr,
    pub alias: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Select {
    pub items: Vec<SelectItem>,
    pub from: TableRef,
    pub join: Option<(TableRef, Expr)>,
    pub filter: Option<Expr>,
    pub group_by: Vec<Expr>,
    pub having: Option<Expr>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InsertSource {
    Values(Vec<Vec<Expr>>),
    Select(Box<Select>),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Statement {
    CreateTable {
        name: String,
        columns: Vec<(String, Affinity)>,
    },
    CreateTableAs {
        name: String,
        select: Select,
    },
    Insert {
        table: String,
        columns: Option<Vec<String>>,
        source: InsertSource,
    },
    DropTable {
        name: String,
        if_exists: bool,
    },
    Select(Select),
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

const RESERVED: [&str; 17] = [
    "SELECT", "FROM", "JOIN", "INNER", "ON", "WHERE", "GROUP", "BY", "HAVING", "AS", "CREATE",
    "TABLE", "INSERT", "INTO", "VALUES", "DROP", "ORDER",
];

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn error<T>(&self, expected: &str) -> Result<T, String> {
        match self.peek() {
            Some(t) => Err(format!("expected {expected}, found {t}")),
            None => Err(format!("expected {expected}, found end of statement")),
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token::Ident(s)) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        let hit = self.at_keyword(kw);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn keyword(&mut self, kw: &str) -> Result<(), String> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            self.error(kw)
        }
    }

    fn at_symbol(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Token::Symbol(s)) if *s == sym)
    }

    fn eat_symbol(&mut self, sym: &str) -> bool {
        let hit = self.at_symbol(sym);
        if hit {
            self.pos += 1;
        }
        hit
    }

    fn symbol(&mut self, sym: &str) -> Result<(), String> {
        if self.eat_symbol(sym) {
            Ok(())
        } else {
            self.error(&format!("`{sym}`"))
        }
    }

    fn ident(&mut self) -> Result<String, String> {
        match self.peek() {
            Some(Token::Ident(s)) if !RESERVED.iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                let s = s.to_ascii_lowercase();
                self.pos += 1;
                Ok(s)
            }
            _ => self.error("identifier"),
        }
    }

    fn statement(&mut self) -> Result<Statement, String> {
        let stmt = if self.eat_keyword("CREATE") {
            self.keyword("TABLE")?;
            let name = self.ident()?;
            if self.eat_keyword("AS") {
                Statement::CreateTableAs {
                    name,
                    select: self.select()?,
                }
            } else {
                self.symbol("(")?;
                let mut columns = Vec::new();
                loop {
                    let col = self.ident()?;
                    let affinity = match self.peek() {
                        Some(Token::Ident(t)) => {
                            let t = t.to_ascii_uppercase();
                            self.pos += 1;
                            if t.contains("INT") {
                                Affinity::Integer
                            } else if ["REAL", "DOUBLE", "FLOAT"].iter().any(|k| t.contains(k)) {
                                Affinity::Real
                            } else {
                                Affinity::None
                            }
                        }
                        _ => Affinity::None,
                    };
                    columns.push((col, affinity));
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                self.symbol(")")?;
                Statement::CreateTable { name, columns }
            }
        } else if self.eat_keyword("INSERT") {
            self.keyword("INTO")?;
            let table = self.ident()?;
            let columns = if self.eat_symbol("(") {
                let mut cols = vec![self.ident()?];
                while self.eat_symbol(",") {
                    cols.push(self.ident()?);
                }
                self.symbol(")")?;
                Some(cols)
            } else {
                None
            };
            let source = if self.eat_keyword("VALUES") {
                let mut rows = Vec::new();
                loop {
                    self.symbol("(")?;
                    let mut row = vec![self.expr()?];
                    while self.eat_symbol(",") {
                        row.push(self.expr()?);
                    }
                    self.symbol(")")?;
                    rows.push(row);
                    if !self.eat_symbol(",") {
                        break;
                    }
                }
                InsertSource::Values(rows)
            } else if self.at_keyword("SELECT") {
                InsertSource::Select(Box::new(self.select()?))
            } else {
                return self.error("VALUES or SELECT");
            };
            Statement::Insert {
                table,
                columns,
                source,
            }
        } else if self.eat_keyword("DROP") {
            self.keyword("TABLE")?;
            let if_exists = if self.eat_keyword("IF") {
                self.keyword("EXISTS")?;
                true
            } else {
                false
            };
            Statement::DropTable {
                name: self.ident()?,
                if_exists,
            }
        } else if self.at_keyword("SELECT") {
            Statement::Select(self.select()?)
        } else {
            return self.error("CREATE, INSERT, DROP or SELECT");
        };
        self.eat_symbol(";");
        if self.peek().is_some() {
            return self.error("end of statement");
        }
        Ok(stmt)
    }

    fn table_ref(&mut self) -> Result<TableRef, String> {
        let name = self.ident()?;
        let alias = if self.eat_keyword("AS") {
            self.ident()?
        } else {
            self.ident().unwrap_or_else(|_| name.clone())
        };
        Ok(TableRef { name, alias })
    }

    fn select(&mut self) -> Result<Select, String> {
        self.keyword("SELECT")?;
        let mut items = Vec::new();
        loop {
            let expr = self.expr()?;
            let alias = if self.eat_keyword("AS") {
                Some(self.ident()?)
            } else {
                None
            };
            items.push(SelectItem { expr, alias });
            if !self.eat_symbol(",") {
                break;
            }
        }
        self.keyword("FROM")?;
        let from = self.table_ref()?;
        let join = if self.eat_keyword("INNER") || self.at_keyword("JOIN") {
            self.keyword("JOIN")?;
            let right = self.table_ref()?;
            self.keyword("ON")?;
            Some((right, self.expr()?))
        } else {
            None
        };
        let filter = if self.eat_keyword("WHERE") {
            Some(self.expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.eat_keyword("GROUP") {
            self.keyword("BY")?;
            group_by.push(self.expr()?);
            while self.eat_symbol(",") {
                group_by.push(self.expr()?);
            }
        }
        let having = if self.eat_keyword("HAVING") {
            Some(self.expr()?)
        } else {
            None
        };
        Ok(Select {
            items,
            from,
            join,
            filter,
            group_by,
            having,
        })
    }

    fn expr(&mut self) -> Result<Expr, String> {
        let lhs = self.bitwise()?;
        let op = match self.peek() {
            Some(Token::Symbol("=")) => BinOp::Eq,
            Some(Token::Symbol("!=")) | Some(Token::Symbol("<>")) => BinOp::Ne,
            Some(Token::Symbol("<")) => BinOp::Lt,
            Some(Token::Symbol("<=")) => BinOp::Le,
            Some(Token::Symbol(">")) => BinOp::Gt,
            Some(Token::Symbol(">=")) => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.bitwise()?;
        Ok(Expr::Binary(op, Box::new(lhs), Box::new(rhs)))
    }

    fn bitwise(&mut self) -> Result<Expr, String> {
        let mut lhs = self.additive()?;
        loop {
            let op = match self.peek() {
                Some(Token::Symbol("&")) => BinOp::BitAnd,
                Some(Token::Symbol("|")) => BinOp::BitOr,
                Some(Token::Symbol("^")) => BinOp::BitXor,
                Some(Token::Symbol("<<")) => BinOp::Shl,
                Some(Token::Symbol(">>")) => BinOp::Shr,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.additive()?));
        }
    }

    fn additive(&mut self) -> Result<Expr, String> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Token::Symbol("+")) => BinOp::Add,
                Some(Token::Symbol("-")) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.multiplicative()?));
        }
    }

    fn multiplicative(&mut self) -> Result<Expr, String> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Token::Symbol("*")) => BinOp::Mul,
                Some(Token::Symbol("/")) => BinOp::Div,
                Some(Token::Symbol("%")) => BinOp::Rem,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat_symbol("-") {
            return Ok(match self.unary()? {
                Expr::Int(v) => Expr::Int(v.wrapping_neg()),
                Expr::Real(v) => Expr::Real(-v),
                e => Expr::Neg(Box::new(e)),
            });
        }
        if self.eat_symbol("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, String> {
        match self.next() {
            Some(Token::Int(v)) => Ok(Expr::Int(v)),
            Some(Token::Real(v)) => Ok(Expr::Real(v)),
            Some(Token::Symbol("(")) => {
                let e = self.expr()?;
                self.symbol(")")?;
                Ok(e)
            }
            Some(Token::Ident(name)) if name.eq_ignore_ascii_case("SUM") && self.at_symbol("(") => {
                self.pos += 1;
                let arg = self.expr()?;
                self.symbol(")")?;
                if arg.is_aggregate() {
                    return Err("nested aggregate".into());
                }
                Ok(Expr::Sum(Box::new(arg)))
            }
            Some(Token::Ident(name)) if name.eq_ignore_ascii_case("COUNT") && self.at_symbol("(") => {
                self.pos += 1;
                self.symbol("*")?;
                self.symbol(")")?;
                Ok(Expr::CountStar)
            }
            Some(Token::Ident(_)) => {
                self.pos -= 1;
                let first = self.ident()?;
                if self.eat_symbol(".") {
                    Ok(Expr::Column {
                        table: Some(first),
                        name: self.ident()?,
                    })
                } else {
                    Ok(Expr::Column {
                        table: None,
                        name: first,
                    })
                }
            }
            _ => {
                self.pos -= 1;
                self.error("expression")
            }
        }
    }
}

pub fn parse(sql: &str) -> Result<Statement, String> {
    let tokens = tokenize(sql)?;
    let mut parser = Parser { tokens, pos: 0 };
    parser.statement()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(t: &str, n: &str) -> Expr {
        Expr::Column {
            table: Some(t.into()),
            name: n.into(),
        }
    }

    #[test]
    fn tokenizes_numbers() {
        assert_eq!(
            tokenize("1 2.5 7.071067811865476e-1 1e0 -3").unwrap(),
            vec![
                Token::Int(1),
                Token::Real(2.5),
                Token::Real(std::f64::consts::FRAC_1_SQRT_2),
                Token::Real(1.0),
                Token::Symbol("-"),
                Token::Int(3)
            ]
        );
    }

    #[test]
    fn bitwise_operators_share_precedence() {
        // SQLite reads `a | b << 1` as `(a | b) << 1`.
        let Statement::Select(sel) = parse("SELECT a | b << 1 FROM t").unwrap() else {
            panic!()
        };
        let Expr::Binary(BinOp::Shl, lhs, _) = &sel.items[0].expr else {
            panic!("{:?}", sel.items[0].expr)
        };
        assert!(matches!(**lhs, Expr::Binary(BinOp::BitOr, _, _)));
    }

    #[test]
    fn parses_apply_step() {
        let sql = "CREATE TABLE state_1 AS\nSELECT ((t.s & 6) | (((g.out_s >> 0) & 1) << 0)) AS s,\n SUM(t.r * g.r - t.i * g.i) AS r, SUM(t.r * g.i + t.i * g.r) AS i\nFROM state_0 AS t\nJOIN gate_ab AS g ON g.in_s = ((t.s >> 0) & 1)\nGROUP BY ((t.s & 6) | (((g.out_s >> 0) & 1) << 0))\nHAVING SUM(t.r) * SUM(t.r) > 1e-24";
        let Statement::CreateTableAs { name, select } = parse(sql).unwrap() else {
            panic!()
        };
        assert_eq!(name, "state_1");
        assert_eq!(select.items.len(), 3);
        assert_eq!(select.items[2].alias.as_deref(), Some("i"));
        let (right, on) = select.join.unwrap();
        assert_eq!(right.alias, "g");
        let Expr::Binary(BinOp::Eq, lhs, _) = on else { panic!() };
        assert_eq!(*lhs, col("g", "in_s"));
        assert_eq!(select.group_by.len(), 1);
        assert!(select.having.unwrap().is_aggregate());
    }

    #[test]
    fn parses_create_insert_drop() {
        assert_eq!(
            parse("CREATE TABLE state_0 (s BIGINT, r DOUBLE, i DOUBLE)").unwrap(),
            Statement::CreateTable {
                name: "state_0".into(),
                columns: vec![
                    ("s".into(), Affinity::Integer),
                    ("r".into(), Affinity::Real),
                    ("i".into(), Affinity::Real)
                ]
            }
        );
        let Statement::Insert { source: InsertSource::Values(rows), .. } =
            parse("INSERT INTO g (in_s, out_s, r, i) VALUES (0, 1, 1e0, -0e0), (1, 0, -1e0, 0e0);").unwrap()
        else {
            panic!()
        };
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1][2], Expr::Real(-1.0));
        assert_eq!(
            parse("DROP TABLE IF EXISTS state_3").unwrap(),
            Statement::DropTable {
                name: "state_3".into(),
                if_exists: true
            }
        );
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("SELEC 1").is_err());
        assert!(parse("CREATE TABLE t (a INT) extra").is_err());
        assert!(parse("SELECT SUM(SUM(a)) FROM t").is_err());
        assert!(parse("SELECT a FROM t WHERE a = 'x'").is_err());
    }
}
