use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    /// `$name`
    System(String),
    /// `` `name ``
    Directive(String),
    Str(String),
    Int(i64),
    Real(f64),
    Punct(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

const PUNCTS: [&str; 24] = [
    "<+", "<=", ">=", "==", "!=", "&&", "||", "(", ")", "[", "]", ",", ";", ":", "@", "=", "+",
    "-", "*", "/", "<", ">", "!", "?",
];

pub fn lex(src: &str) -> Result<Vec<Token>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let (mut i, mut line, mut line_start) = (0usize, 1usize, 0usize);
    let err = |line: usize, col: usize, msg: String| Error::parse(format!("line {line}:{col}"), msg);
    while i < bytes.len() {
        let c = bytes[i];
        let col = i - line_start + 1;
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if src[i..].starts_with("//") {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if src[i..].starts_with("/*") {
            let end = src[i + 2..]
                .find("*/")
                .ok_or_else(|| err(line, col, "unterminated block comment".into()))?;
            for &b in &bytes[i..i + 2 + end + 2] {
                if b == b'\n' {
                    line += 1;
                }
            }
            i += 2 + end + 2;
            if let Some(nl) = src[..i].rfind('\n') {
                line_start = nl + 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == b'_' || c == b'$' || c == b'`' {
            i += 1;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            let word = &src[start + 1..i];
            match c {
                b'$' => Tok::System(word.to_string()),
                b'`' => Tok::Directive(word.to_string()),
                _ => Tok::Ident(src[start..i].to_string()),
            }
        } else if c.is_ascii_digit() {
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let mut real = false;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                real = true;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    real = true;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_' || bytes[i] == b'.') {
                return Err(err(line, col, format!("malformed number near {:?}", &src[start..=i])));
            }
            let text = &src[start..i];
            if real {
                Tok::Real(text.parse().map_err(|_| err(line, col, format!("bad real {text}")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| err(line, col, format!("bad integer {text}")))?)
            }
        } else if c == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' && bytes[i] != b'\n' {
                i += 1;
            }
            if i >= bytes.len() || bytes[i] != b'"' {
                return Err(err(line, col, "unterminated string".into()));
            }
            i += 1;
            Tok::Str(src[start + 1..i - 1].to_string())
        } else if let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            i += p.len();
            Tok::Punct(p)
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(err(line, col, format!("unexpected character {ch:?}")));
        };
        out.push(Token { tok, line, col });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_and_operators() {
        let toks: Vec<Tok> = lex("a1 = (-1.5e-3) * x <+ 60; // c\n$rdist_uniform `include \"d.vams\"")
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect();
        assert_eq!(
            toks,
            vec![
                Tok::Ident("a1".into()),
                Tok::Punct("="),
                Tok::Punct("("),
                Tok::Punct("-"),
                Tok::Real(1.5e-3),
                Tok::Punct(")"),
                Tok::Punct("*"),
                Tok::Ident("x".into()),
                Tok::Punct("<+"),
                Tok::Int(60),
                Tok::Punct(";"),
                Tok::System("rdist_uniform".into()),
                Tok::Directive("include".into()),
                Tok::Str("d.vams".into()),
            ]
        );
    }

    #[test]
    fn round_trip_literals_are_exact() {
        for x in [0.1f64, 1e-5, 2.220446049250313e-16, 123456789.125, 1e300, 5e-324] {
            let src = format!("{x:?}");
            match &lex(&src).unwrap()[0].tok {
                Tok::Real(v) => assert_eq!(v.to_bits(), x.to_bits()),
                t => panic!("{t:?}"),
            }
        }
    }

    #[test]
    fn positions_reported() {
        let e = lex("a = 1;\n  b = #;").unwrap_err();
        match e {
            Error::Parse { location, .. } => assert_eq!(location, "line 2:7"),
            other => panic!("{other:?}"),
        }
        assert!(lex("x = 1.5.2;").is_err());
    }
}
