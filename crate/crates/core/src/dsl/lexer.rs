use super::ast::Span;
use super::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(f64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Semi,
    Colon,
    Comma,
    Dot,
    Pipe,
    OrOr,
    AndAnd,
    EqEq,
    NotEq,
    Lt,
    Le,
    Gt,
    Ge,
    Minus,
    /// Anything else; only legal inside opaque text.
    Other(char),
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Number(n) => format!("number `{n}`"),
            Tok::Str(s) => format!("string \"{s}\""),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Semi => "`;`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Dot => "`.`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::NotEq => "`!=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Other(c) => format!("`{c}`"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// Byte offsets into the source.
    pub start: usize,
    pub end: usize,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1u32;
    let mut col = 1u32;

    // advance over chars[i], tracking line/col
    macro_rules! bump {
        () => {{
            if chars[i].1 == '\n' {
                line += 1;
                col = 1;
            } else {
                col += 1;
            }
            i += 1;
        }};
    }

    let offset = |i: usize| chars.get(i).map_or(src.len(), |c| c.0);

    while i < chars.len() {
        let c = chars[i].1;
        let next = chars.get(i + 1).map(|c| c.1);
        if c.is_whitespace() {
            bump!();
            continue;
        }
        if c == '/' && next == Some('/') {
            while i < chars.len() && chars[i].1 != '\n' {
                bump!();
            }
            continue;
        }
        if c == '/' && next == Some('*') {
            let span = Span::new(line, col);
            bump!();
            bump!();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(span, "unterminated block comment"));
                }
                if chars[i].1 == '*' && chars.get(i + 1).map(|c| c.1) == Some('/') {
                    bump!();
                    bump!();
                    break;
                }
                bump!();
            }
            continue;
        }

        let span = Span::new(line, col);
        let start = offset(i);

        if c.is_ascii_alphabetic() || c == '_' || c == '$' {
            let mut s = String::new();
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_' || chars[i].1 == '$') {
                s.push(chars[i].1);
                bump!();
            }
            out.push(Token {
                tok: Tok::Ident(s),
                span,
                start,
                end: offset(i),
            });
            continue;
        }

        if c.is_ascii_digit() || (c == '.' && next.is_some_and(|n| n.is_ascii_digit())) {
            let mut s = String::new();
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                s.push(chars[i].1);
                bump!();
            }
            if i < chars.len() && chars[i].1 == '.' && chars.get(i + 1).is_some_and(|c| c.1.is_ascii_digit()) {
                s.push('.');
                bump!();
                while i < chars.len() && chars[i].1.is_ascii_digit() {
                    s.push(chars[i].1);
                    bump!();
                }
            }
            let value: f64 = s.parse().map_err(|_| ParseError::syntax(span, format!("malformed number `{s}`")))?;
            out.push(Token {
                tok: Tok::Number(value),
                span,
                start,
                end: offset(i),
            });
            continue;
        }

        if c == '"' || c == '\'' || c == '`' {
            let quote = c;
            bump!();
            let mut s = String::new();
            loop {
                if i >= chars.len() {
                    return Err(ParseError::syntax(span, "unterminated string literal"));
                }
                let ch = chars[i].1;
                if ch == quote {
                    bump!();
                    break;
                }
                if ch == '\n' && quote != '`' {
                    return Err(ParseError::syntax(span, "unterminated string literal"));
                }
                if ch == '\\' && i + 1 < chars.len() {
                    // escapes are kept raw; they only occur inside opaque bodies
                    s.push(ch);
                    bump!();
                }
                s.push(chars[i].1);
                bump!();
            }
            let tok = if quote == '"' { Tok::Str(s) } else { Tok::Other(quote) };
            out.push(Token {
                tok,
                span,
                start,
                end: offset(i),
            });
            continue;
        }

        let two = |a: char, b: char| c == a && next == Some(b);
        let (tok, width) = if two('|', '|') {
            (Tok::OrOr, 2)
        } else if two('&', '&') {
            (Tok::AndAnd, 2)
        } else if two('=', '=') {
            (Tok::EqEq, 2)
        } else if two('!', '=') {
            (Tok::NotEq, 2)
        } else if two('<', '=') {
            (Tok::Le, 2)
        } else if two('>', '=') {
            (Tok::Ge, 2)
        } else {
            let t = match c {
                '{' => Tok::LBrace,
                '}' => Tok::RBrace,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ';' => Tok::Semi,
                ':' => Tok::Colon,
                ',' => Tok::Comma,
                '.' => Tok::Dot,
                '|' => Tok::Pipe,
                '<' => Tok::Lt,
                '>' => Tok::Gt,
                '-' => Tok::Minus,
                other => Tok::Other(other),
            };
            (t, 1)
        };
        for _ in 0..width {
            bump!();
        }
        out.push(Token {
            tok,
            span,
            start,
            end: offset(i),
        });
    }
    Ok(out)
}
