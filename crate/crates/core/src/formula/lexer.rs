use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub(crate) enum Tok {
    Number(f64),
    Text(String),
    /// Error literal such as `#NA`, without validation.
    Error(String),
    /// An identifier or cell reference; may contain `$`.
    Word(String),
    /// A quoted sheet name, `'My sheet'`.
    Sheet(String),
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Semi,
    Colon,
    Bang,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Amp,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Clone, Debug)]
pub(crate) struct Token {
    pub tok: Tok,
    pub offset: usize,
}

pub(crate) fn tokenize(full: &str, base: usize) -> Result<Vec<Token>, ParseError> {
    let src = &full[base..];
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        let simple = match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'{' => Some(Tok::LBrace),
            b'}' => Some(Tok::RBrace),
            b',' => Some(Tok::Comma),
            b';' => Some(Tok::Semi),
            b':' => Some(Tok::Colon),
            b'!' => Some(Tok::Bang),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'&' => Some(Tok::Amp),
            b'=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = simple {
            out.push(Token { tok, offset: base + start });
            i += 1;
            continue;
        }
        let tok = match c {
            b'<' => {
                i += 1;
                match bytes.get(i) {
                    Some(b'>') => {
                        i += 1;
                        Tok::Ne
                    }
                    Some(b'=') => {
                        i += 1;
                        Tok::Le
                    }
                    _ => Tok::Lt,
                }
            }
            b'>' => {
                i += 1;
                if bytes.get(i) == Some(&b'=') {
                    i += 1;
                    Tok::Ge
                } else {
                    Tok::Gt
                }
            }
            b'"' => {
                let (s, next) = quoted(src, i, b'"')
                    .ok_or_else(|| ParseError::at(full, base, start, "unterminated string"))?;
                i = next;
                Tok::Text(s)
            }
            b'\'' => {
                let (s, next) = quoted(src, i, b'\'')
                    .ok_or_else(|| ParseError::at(full, base, start, "unterminated sheet name"))?;
                i = next;
                Tok::Sheet(s)
            }
            b'#' => {
                i += 1;
                // `!` or `?` ends the literal, so `#VALUE!/2` is a division.
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || b"/!?_".contains(&bytes[i])) {
                    i += 1;
                    if matches!(bytes[i - 1], b'!' | b'?') {
                        break;
                    }
                }
                Tok::Error(src[start..i].to_string())
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let d: f64 = text
                    .parse()
                    .map_err(|_| ParseError::at(full, base, start, &format!("bad number '{text}'")))?;
                Tok::Number(d)
            }
            c if c.is_ascii_alphabetic() || c == b'_' || c == b'$' => {
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || b"_.$".contains(&bytes[i]))
                {
                    i += 1;
                }
                Tok::Word(src[start..i].to_string())
            }
            _ => {
                let ch = src[start..].chars().next().unwrap();
                return Err(ParseError::at(
                    full,
                    base,
                    start,
                    &format!("unexpected character '{ch}'"),
                ));
            }
        };
        out.push(Token { tok, offset: base + start });
    }
    Ok(out)
}

// Reads a literal delimited by `quote`, where a doubled quote stands for
// one quote character. Returns the contents and the index after the
// closing quote.
fn quoted(src: &str, start: usize, quote: u8) -> Option<(String, usize)> {
    let bytes = src.as_bytes();
    let mut i = start + 1;
    let mut out = String::new();
    let mut run = i;
    loop {
        if i >= bytes.len() {
            return None;
        }
        if bytes[i] == quote {
            out.push_str(&src[run..i]);
            if bytes.get(i + 1) == Some(&quote) {
                out.push(quote as char);
                i += 2;
                run = i;
            } else {
                return Some((out, i + 1));
            }
        } else {
            i += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s, 0).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_and_literals() {
        assert_eq!(
            toks("A1<=2.5e1&\"a\"\"b\""),
            vec![
                Tok::Word("A1".into()),
                Tok::Le,
                Tok::Number(25.0),
                Tok::Amp,
                Tok::Text("a\"b".into()),
            ]
        );
        assert_eq!(toks("#DIV/0! <> #N/A"), vec![
            Tok::Error("#DIV/0!".into()),
            Tok::Ne,
            Tok::Error("#N/A".into()),
        ]);
        assert_eq!(toks("#VALUE!/2"), vec![Tok::Error("#VALUE!".into()), Tok::Slash, Tok::Number(2.0)]);
        assert_eq!(toks("'My ''s'!$B$2"), vec![
            Tok::Sheet("My 's".into()),
            Tok::Bang,
            Tok::Word("$B$2".into()),
        ]);
    }

    #[test]
    fn errors_have_positions() {
        let e = tokenize("1 + \"abc", 0).unwrap_err();
        assert_eq!(e.column, 5);
        assert!(tokenize("1 @ 2", 0).is_err());
    }
}
