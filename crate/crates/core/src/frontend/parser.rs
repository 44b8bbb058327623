//! Recursive-descent parser for program text.
//!
//! ```text
//! prog  ::= cmd (';' cmd)* ';'?
//! cmd   ::= 'skip' | ID ':=' 'declass' '(' expr ')' | ID ':=' expr
//!         | 'if' expr 'then' prog 'else' prog 'fi'
//!         | 'while' expr 'do' prog 'od'
//!         | 'input' '(' ID ',' ID ')' | 'output' '(' expr ',' ID ')'
//! expr  ::= binary expression over | & == != < <= + - * with the usual precedence
//! ```

use super::ast::{BinOp, Command, Expr, Program, SiteId};
use crate::error::{Error, Result};

const KEYWORDS: &[&str] = &[
    "skip", "if", "then", "else", "fi", "while", "do", "od", "declass", "input", "output",
];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Keyword(&'static str),
    Num(u64),
    Assign,
    Semi,
    Comma,
    LParen,
    RParen,
    Op(BinOp),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    let err = |line, col, message: String| Error::Syntax { line, col, message };
    while i < chars.len() {
        let c = chars[i];
        let (tline, tcol) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let mut push = |tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                tok,
                line: tline,
                col: tcol,
            });
            *i += len;
            *col += len;
        };
        let next = chars.get(i + 1).copied();
        match c {
            ':' if next == Some('=') => push(Tok::Assign, 2, &mut i, &mut col),
            ';' => push(Tok::Semi, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            '+' => push(Tok::Op(BinOp::Add), 1, &mut i, &mut col),
            '-' => push(Tok::Op(BinOp::Sub), 1, &mut i, &mut col),
            '*' => push(Tok::Op(BinOp::Mul), 1, &mut i, &mut col),
            '&' => push(Tok::Op(BinOp::And), 1, &mut i, &mut col),
            '|' => push(Tok::Op(BinOp::Or), 1, &mut i, &mut col),
            '=' if next == Some('=') => push(Tok::Op(BinOp::Eq), 2, &mut i, &mut col),
            '!' if next == Some('=') => push(Tok::Op(BinOp::Ne), 2, &mut i, &mut col),
            '<' if next == Some('=') => push(Tok::Op(BinOp::Le), 2, &mut i, &mut col),
            '<' => push(Tok::Op(BinOp::Lt), 1, &mut i, &mut col),
            _ if c.is_ascii_digit() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                let lexeme: String = chars[start..i].iter().collect();
                col += i - start;
                let value = lexeme
                    .parse::<u64>()
                    .map_err(|_| err(tline, tcol, format!("malformed number or identifier `{lexeme}`")))?;
                out.push(Token {
                    tok: Tok::Num(value),
                    line: tline,
                    col: tcol,
                });
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                col += i - start;
                let tok = match KEYWORDS.iter().find(|k| **k == word) {
                    Some(k) => Tok::Keyword(k),
                    None => Tok::Ident(word),
                };
                out.push(Token {
                    tok,
                    line: tline,
                    col: tcol,
                });
            }
            _ => return Err(err(tline, tcol, format!("unexpected character `{c}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        let t = self.peek();
        Err(Error::Syntax {
            line: t.line,
            col: t.col,
            message: message.into(),
        })
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Keyword(k) => format!("keyword `{k}`"),
            Tok::Num(n) => format!("number `{n}`"),
            Tok::Assign => "`:=`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Op(op) => format!("`{}`", op.symbol()),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        if self.peek().tok == want {
            self.bump();
            Ok(())
        } else {
            let found = Self::describe(&self.peek().tok);
            self.error(format!("expected {}, found {found}", Self::describe(&want)))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) => {
                let s = s.clone();
                self.bump();
                Ok(s)
            }
            other => {
                let found = Self::describe(other);
                self.error(format!("expected identifier, found {found}"))
            }
        }
    }

    /// Sequences are right-nested: `a; b; c` is `Seq(a, Seq(b, c))`.
    fn prog(&mut self, terminators: &[&str]) -> Result<Command> {
        let first = self.cmd()?;
        let mut cmds = vec![first];
        while self.peek().tok == Tok::Semi {
            self.bump();
            let at_end = match &self.peek().tok {
                Tok::Eof => true,
                Tok::Keyword(k) => terminators.contains(k),
                _ => false,
            };
            if at_end {
                break;
            }
            cmds.push(self.cmd()?);
        }
        let mut it = cmds.into_iter().rev();
        let mut acc = it.next().expect("at least one command");
        for c in it {
            acc = Command::Seq(Box::new(c), Box::new(acc));
        }
        Ok(acc)
    }

    fn cmd(&mut self) -> Result<Command> {
        let placeholder = SiteId(0);
        match self.peek().tok.clone() {
            Tok::Keyword("skip") => {
                self.bump();
                Ok(Command::Skip { site: placeholder })
            }
            Tok::Keyword("if") => {
                self.bump();
                let cond = self.expr()?;
                self.expect(Tok::Keyword("then"))?;
                let then_branch = self.prog(&["else"])?;
                self.expect(Tok::Keyword("else"))?;
                let else_branch = self.prog(&["fi"])?;
                self.expect(Tok::Keyword("fi"))?;
                Ok(Command::If {
                    site: placeholder,
                    cond,
                    then_branch: Box::new(then_branch),
                    else_branch: Box::new(else_branch),
                })
            }
            Tok::Keyword("while") => {
                self.bump();
                let cond = self.expr()?;
                self.expect(Tok::Keyword("do"))?;
                let body = self.prog(&["od"])?;
                self.expect(Tok::Keyword("od"))?;
                Ok(Command::While {
                    site: placeholder,
                    cond,
                    body: Box::new(body),
                })
            }
            Tok::Keyword("input") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let target = self.ident()?;
                self.expect(Tok::Comma)?;
                let channel = self.ident()?;
                self.expect(Tok::RParen)?;
                Ok(Command::Input {
                    site: placeholder,
                    target,
                    channel,
                })
            }
            Tok::Keyword("output") => {
                self.bump();
                self.expect(Tok::LParen)?;
                let expr = self.expr()?;
                self.expect(Tok::Comma)?;
                let channel = self.ident()?;
                self.expect(Tok::RParen)?;
                Ok(Command::Output {
                    site: placeholder,
                    expr,
                    channel,
                })
            }
            Tok::Ident(target) => {
                self.bump();
                self.expect(Tok::Assign)?;
                if self.peek().tok == Tok::Keyword("declass") {
                    self.bump();
                    self.expect(Tok::LParen)?;
                    let expr = self.expr()?;
                    self.expect(Tok::RParen)?;
                    Ok(Command::Declass {
                        site: placeholder,
                        target,
                        expr,
                    })
                } else {
                    let expr = self.expr()?;
                    Ok(Command::Assign {
                        site: placeholder,
                        target,
                        expr,
                    })
                }
            }
            other => {
                let found = Self::describe(&other);
                self.error(format!("expected a command, found {found}"))
            }
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.atom()?;
        loop {
            let op = match self.peek().tok {
                Tok::Op(op) if op.precedence() >= min_prec => op,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek().tok.clone() {
            Tok::Num(n) => {
                self.bump();
                Ok(Expr::Const(n))
            }
            Tok::Ident(name) => {
                self.bump();
                Ok(Expr::Var(name))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            other => {
                let found = Self::describe(&other);
                self.error(format!("expected an expression, found {found}"))
            }
        }
    }
}

/// Parses program text; site labels are assigned in source order.
pub fn parse_program(text: &str) -> Result<Program> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let root = p.prog(&[])?;
    if p.peek().tok != Tok::Eof {
        let found = Parser::describe(&p.peek().tok);
        return p.error(format!("expected `;` or end of input, found {found}"));
    }
    Ok(Program::new(root))
}

/// Parses a standalone expression.
pub fn parse_expr(text: &str) -> Result<Expr> {
    let mut p = Parser {
        toks: lex(text)?,
        pos: 0,
    };
    let e = p.expr()?;
    if p.peek().tok != Tok::Eof {
        return p.error("trailing input after expression");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::ast::SiteKind;

    #[test]
    fn parses_p1_with_source_order_sites() {
        let p = parse_program("l:=declass(h);l:=h").unwrap();
        let kinds: Vec<_> = p.sites.iter().map(|s| (s.id.0, s.kind)).collect();
        assert_eq!(kinds, vec![(0, SiteKind::Declass), (1, SiteKind::Plain)]);
    }

    #[test]
    fn parses_skip() {
        let p = parse_program("skip").unwrap();
        assert_eq!(p.sites.len(), 1);
        assert_eq!(p.root, Command::Skip { site: SiteId(0) });
    }

    #[test]
    fn parses_if_with_declass_branch() {
        let p = parse_program("if h then l:=declass(h1) else skip fi").unwrap();
        match &p.root {
            Command::If {
                then_branch,
                else_branch,
                ..
            } => {
                assert!(matches!(**then_branch, Command::Declass { .. }));
                assert!(matches!(**else_branch, Command::Skip { .. }));
            }
            other => panic!("expected if, got {other:?}"),
        }
        assert_eq!(p.sites.len(), 3);
    }

    #[test]
    fn trailing_semicolon_is_accepted() {
        let a = parse_program("l:=h;l:=declass(h);").unwrap();
        let b = parse_program("l:=h;l:=declass(h)").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = parse_expr("a + b * c == d - e - f").unwrap();
        let want = Expr::binary(
            BinOp::Eq,
            Expr::binary(
                BinOp::Add,
                Expr::var("a"),
                Expr::binary(BinOp::Mul, Expr::var("b"), Expr::var("c")),
            ),
            Expr::binary(
                BinOp::Sub,
                Expr::binary(BinOp::Sub, Expr::var("d"), Expr::var("e")),
                Expr::var("f"),
            ),
        );
        assert_eq!(e, want);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        match parse_program("skip;\n  l := ") {
            Err(Error::Syntax { line, col, .. }) => assert_eq!((line, col), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_program("if h then skip fi"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_program("1x := 2"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_program("x $ 2"), Err(Error::Syntax { .. })));
        assert!(matches!(parse_program("skip skip"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn loop_sites_are_static() {
        let p = parse_program("while l do l := l - 1; output(l, o) od").unwrap();
        assert_eq!(p.sites.len(), 3);
        assert_eq!(p.sites[2].channel.as_deref(), Some("o"));
    }
}
