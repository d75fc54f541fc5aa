use thiserror::Error;

use super::{BinaryOp, Constant, Expr, UnaryOp};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty input")]
    Empty,
    #[error("unknown token `{token}` at position {pos}")]
    UnknownToken { pos: usize, token: String },
    /// The word ended after token `pos` while an operator still lacked an operand.
    #[error("word ends after position {pos} with an operand missing")]
    MissingOperand { pos: usize },
    #[error("unexpected trailing input at position {pos}")]
    Trailing { pos: usize },
    #[error("syntax error at position {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("non-finite constant `{token}` at position {pos}")]
    NonFinite { pos: usize, token: String },
}

impl ParseError {
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::Empty => None,
            ParseError::UnknownToken { pos, .. }
            | ParseError::MissingOperand { pos }
            | ParseError::Trailing { pos }
            | ParseError::Syntax { pos, .. }
            | ParseError::NonFinite { pos, .. } => Some(*pos),
        }
    }
}

/// A literal without `.` or exponent is an integer.
pub(crate) fn parse_number(text: &str, pos: usize) -> Result<Constant, ParseError> {
    let value: f64 = text.parse().map_err(|_| ParseError::UnknownToken {
        pos,
        token: text.to_string(),
    })?;
    if !value.is_finite() {
        return Err(ParseError::NonFinite {
            pos,
            token: text.to_string(),
        });
    }
    let integer = !text.contains(['.', 'e', 'E']);
    Ok(Constant { value, integer })
}

fn looks_numeric(token: &str) -> bool {
    let body = token.strip_prefix(['-', '+']).unwrap_or(token);
    body.starts_with(|c: char| c.is_ascii_digit() || c == '.')
}

/// Parses a pre-order token word such as `["mul", "0.1", "y"]`.
pub fn parse_prefix<S: AsRef<str>>(tokens: &[S]) -> Result<Expr, ParseError> {
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut cursor = 0;
    let expr = prefix_node(tokens, &mut cursor)?;
    if cursor != tokens.len() {
        return Err(ParseError::Trailing { pos: cursor });
    }
    Ok(expr)
}

fn prefix_node<S: AsRef<str>>(tokens: &[S], cursor: &mut usize) -> Result<Expr, ParseError> {
    let pos = *cursor;
    let Some(token) = tokens.get(pos).map(AsRef::as_ref) else {
        return Err(ParseError::MissingOperand {
            pos: tokens.len().saturating_sub(1),
        });
    };
    *cursor += 1;
    if token == "y" {
        return Ok(Expr::Var);
    }
    if let Some(op) = BinaryOp::from_name(token) {
        let a = prefix_node(tokens, cursor)?;
        let b = prefix_node(tokens, cursor)?;
        return Ok(Expr::binary(op, a, b));
    }
    if let Some(op) = UnaryOp::from_name(token) {
        let a = prefix_node(tokens, cursor)?;
        return Ok(Expr::unary(op, a));
    }
    if looks_numeric(token) {
        return Ok(Expr::Const(parse_number(token, pos)?));
    }
    Err(ParseError::UnknownToken {
        pos,
        token: token.to_string(),
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Lexeme {
    Number(String),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    DoubleStar,
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Lexeme)>, ParseError> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' => {
                out.push((pos, Lexeme::Plus));
                i += 1;
            }
            '-' => {
                out.push((pos, Lexeme::Minus));
                i += 1;
            }
            '*' => {
                if chars.get(i + 1).map(|x| x.1) == Some('*') {
                    out.push((pos, Lexeme::DoubleStar));
                    i += 2;
                } else {
                    out.push((pos, Lexeme::Star));
                    i += 1;
                }
            }
            '/' => {
                out.push((pos, Lexeme::Slash));
                i += 1;
            }
            '(' => {
                out.push((pos, Lexeme::LParen));
                i += 1;
            }
            ')' => {
                out.push((pos, Lexeme::RParen));
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = chars[start..i].iter().map(|x| x.1).collect();
                out.push((pos, Lexeme::Number(s)));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let s: String = chars[start..i].iter().map(|x| x.1).collect();
                out.push((pos, Lexeme::Ident(s)));
            }
            other => {
                return Err(ParseError::UnknownToken {
                    pos,
                    token: other.to_string(),
                })
            }
        }
    }
    Ok(out)
}

struct InfixParser {
    lexemes: Vec<(usize, Lexeme)>,
    cursor: usize,
    end: usize,
}

impl InfixParser {
    fn peek(&self) -> Option<&Lexeme> {
        self.lexemes.get(self.cursor).map(|l| &l.1)
    }

    fn peek_at(&self, offset: usize) -> Option<&Lexeme> {
        self.lexemes.get(self.cursor + offset).map(|l| &l.1)
    }

    fn pos(&self) -> usize {
        self.lexemes.get(self.cursor).map_or(self.end, |l| l.0)
    }

    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            pos: self.pos(),
            message: message.to_string(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.product()?;
        loop {
            let op = match self.peek() {
                Some(Lexeme::Plus) => BinaryOp::Add,
                Some(Lexeme::Minus) => BinaryOp::Sub,
                _ => return Ok(acc),
            };
            self.cursor += 1;
            let rhs = self.product()?;
            acc = Expr::binary(op, acc, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut acc = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Lexeme::Star) => BinaryOp::Mul,
                Some(Lexeme::Slash) => BinaryOp::Div,
                _ => return Ok(acc),
            };
            self.cursor += 1;
            let rhs = self.unary()?;
            acc = Expr::binary(op, acc, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Lexeme::Minus) => {
                // `-2` is a negative literal unless it is the base of `**`
                if let Some(Lexeme::Number(text)) = self.peek_at(1) {
                    if self.peek_at(2) != Some(&Lexeme::DoubleStar) {
                        let text = text.clone();
                        let pos = self.lexemes[self.cursor + 1].0;
                        self.cursor += 2;
                        let c = parse_number(&text, pos)?;
                        return Ok(Expr::Const(Constant {
                            value: -c.value,
                            integer: c.integer,
                        }));
                    }
                }
                self.cursor += 1;
                Ok(Expr::neg(self.unary()?))
            }
            Some(Lexeme::Plus) => {
                self.cursor += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some(&Lexeme::DoubleStar) {
            self.cursor += 1;
            let exponent = self.unary()?;
            return Ok(Expr::pow(base, exponent));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        let Some(lexeme) = self.peek().cloned() else {
            return Err(self.syntax("expected an operand"));
        };
        self.cursor += 1;
        match lexeme {
            Lexeme::Number(text) => Ok(Expr::Const(parse_number(&text, pos)?)),
            Lexeme::Ident(name) if name == "y" => Ok(Expr::Var),
            Lexeme::Ident(name) => {
                let op = UnaryOp::from_name(&name).ok_or(ParseError::UnknownToken {
                    pos,
                    token: name.clone(),
                })?;
                if self.peek() != Some(&Lexeme::LParen) {
                    return Err(self.syntax("expected `(` after function name"));
                }
                self.cursor += 1;
                let arg = self.sum()?;
                self.expect_rparen()?;
                Ok(Expr::unary(op, arg))
            }
            Lexeme::LParen => {
                let inner = self.sum()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            _ => {
                self.cursor -= 1;
                Err(self.syntax("expected an operand"))
            }
        }
    }

    fn expect_rparen(&mut self) -> Result<(), ParseError> {
        if self.peek() == Some(&Lexeme::RParen) {
            self.cursor += 1;
            Ok(())
        } else {
            Err(self.syntax("expected `)`"))
        }
    }
}

/// Parses infix text with `+ - * / **`, unary minus, parentheses and
/// function-call syntax for the unary operators. Binary operators are
/// left-associative except `**`.
pub fn parse_infix(text: &str) -> Result<Expr, ParseError> {
    let lexemes = lex(text)?;
    if lexemes.is_empty() {
        return Err(ParseError::Empty);
    }
    let mut parser = InfixParser {
        lexemes,
        cursor: 0,
        end: text.len(),
    };
    let expr = parser.sum()?;
    if parser.cursor != parser.lexemes.len() {
        return Err(ParseError::Trailing { pos: parser.pos() });
    }
    Ok(expr)
}
