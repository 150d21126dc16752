use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{ParseError, ParseErrorKind};
use crate::topology::NodeLevel;

pub fn parse_program(src: &str) -> Result<ProgramDecl, ParseError> {
    parse_program_named("main", src)
}

pub fn parse_program_named(app_name: &str, src: &str) -> Result<ProgramDecl, ParseError> {
    let tokens = tokenize(src)?;
    let mut p = Parser { src, toks: tokens, pos: 0 };
    p.program(app_name)
}

struct Parser<'a> {
    src: &'a str,
    toks: Vec<Token>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, k: usize) -> Option<&Tok> {
        self.toks.get(self.pos + k).map(|t| &t.tok)
    }

    fn span(&self) -> Span {
        match self.toks.get(self.pos) {
            Some(t) => t.span,
            None => self.eof_span(),
        }
    }

    fn eof_span(&self) -> Span {
        let line = self.src.lines().count().max(1) as u32;
        let col = self.src.lines().last().map_or(0, |l| l.chars().count()) as u32 + 1;
        if self.src.ends_with('\n') {
            Span::new(line + 1, 1)
        } else {
            Span::new(line, col)
        }
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let found = self.peek().map_or("end of input".to_string(), Tok::describe);
        ParseError::syntax(self.span(), format!("expected {expected}, found {found}"))
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<Token, ParseError> {
        if self.peek() == Some(&tok) {
            Ok(self.bump().unwrap())
        } else {
            Err(self.unexpected(what))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Span), ParseError> {
        match self.peek() {
            Some(Tok::Ident(_)) => {
                let t = self.bump().unwrap();
                match t.tok {
                    Tok::Ident(s) => Ok((s, t.span)),
                    _ => unreachable!(),
                }
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
    }

    fn program(&mut self, app_name: &str) -> Result<ProgramDecl, ParseError> {
        let mut prog = ProgramDecl::empty(app_name);
        while let Some(tok) = self.peek() {
            match tok {
                Tok::Ident(w) if w == "jdata" && self.peek_at(1) == Some(&Tok::LBrace) => {
                    self.bump();
                    self.jdata_block(&mut prog)?;
                }
                Tok::Ident(w) if (w == "jcond" || w == "jcondition") && self.peek_at(1) == Some(&Tok::LBrace) => {
                    self.bump();
                    self.jcond_block(&mut prog)?;
                }
                Tok::Ident(w) if w == "jsync" || w == "jasync" => {
                    let f = self.func_decl()?;
                    prog.func_decls.push(f);
                }
                Tok::Semi => {
                    self.bump();
                }
                Tok::RBrace => return Err(ParseError::syntax(self.span(), "unmatched `}`")),
                _ => {
                    let item = self.opaque_item()?;
                    prog.opaque.push(item);
                }
            }
        }
        Ok(prog)
    }

    fn jdata_block(&mut self, prog: &mut ProgramDecl) -> Result<(), ParseError> {
        self.expect(Tok::LBrace, "`{` after jdata")?;
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.bump();
                    return Ok(());
                }
                None => return Err(self.unexpected("`}` closing jdata")),
                _ => {}
            }
            let span = self.span();
            let (ty, ty_span) = self.ident("a type name")?;
            let scalar_type = ScalarType::parse(&ty).ok_or_else(|| {
                ParseError::new(
                    ParseErrorKind::UnknownType(ty.clone()),
                    ty_span,
                    format!("unknown data type `{ty}`"),
                )
            })?;
            let (name, _) = self.ident("a variable name")?;
            if !self.is_ident("as") {
                return Err(self.unexpected("`as`"));
            }
            self.bump();
            let (kind_word, kind_span) = self.ident("`logger` or `broadcaster`")?;
            let kind = match kind_word.as_str() {
                "logger" => {
                    if self.peek() == Some(&Tok::LParen) {
                        self.bump();
                        let (lvl, lvl_span) = self.ident("a level")?;
                        let level = match lvl.as_str() {
                            "cloud" => NodeLevel::Cloud,
                            "fog" => NodeLevel::Fog,
                            "device" => NodeLevel::Device,
                            _ => {
                                return Err(ParseError::new(
                                    ParseErrorKind::UnknownLevel(lvl.clone()),
                                    lvl_span,
                                    format!("unknown logger level `{lvl}` (expected cloud, fog or device)"),
                                ))
                            }
                        };
                        self.expect(Tok::RParen, "`)`")?;
                        DataKind::Logger {
                            level,
                            explicit_level: true,
                        }
                    } else {
                        DataKind::Logger {
                            level: NodeLevel::Fog,
                            explicit_level: false,
                        }
                    }
                }
                "broadcaster" => DataKind::Broadcaster,
                _ => {
                    return Err(ParseError::new(
                        ParseErrorKind::UnknownKind(kind_word.clone()),
                        kind_span,
                        format!("unknown jdata kind `{kind_word}` (expected logger or broadcaster)"),
                    ))
                }
            };
            self.expect(Tok::Semi, "`;`")?;
            prog.data_decls.push(DataDecl {
                name,
                scalar_type,
                kind,
                span,
            });
        }
    }

    fn jcond_block(&mut self, prog: &mut ProgramDecl) -> Result<(), ParseError> {
        self.expect(Tok::LBrace, "`{` after jcond")?;
        loop {
            match self.peek() {
                Some(Tok::RBrace) => {
                    self.bump();
                    return Ok(());
                }
                None => return Err(self.unexpected("`}` closing jcond")),
                _ => {}
            }
            let (name, span) = self.ident("a condition name")?;
            self.expect(Tok::Colon, "`:`")?;
            let expr = self.or_expr()?;
            self.expect(Tok::Semi, "`;`")?;
            prog.cond_decls.push(CondDecl { name, expr, span });
        }
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while self.peek() == Some(&Tok::OrOr) {
            let span = self.bump().unwrap().span;
            let rhs = self.and_expr()?;
            lhs = Expr::Or {
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        while self.peek() == Some(&Tok::AndAnd) {
            let span = self.bump().unwrap().span;
            let rhs = self.cmp_expr()?;
            lhs = Expr::And {
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
                span,
            };
        }
        Ok(lhs)
    }

    fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let e = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(e);
        }
        let lhs = self.operand()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => CmpOp::Eq,
            Some(Tok::NotEq) => CmpOp::Ne,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            _ => return Ok(Expr::Bare { operand: lhs }),
        };
        let span = self.bump().unwrap().span;
        let rhs = self.operand()?;
        Ok(Expr::Compare { op, lhs, rhs, span })
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        let span = self.span();
        match self.peek().cloned() {
            Some(Tok::Number(value)) => {
                self.bump();
                Ok(Operand::Number { value, span })
            }
            Some(Tok::Minus) => {
                self.bump();
                match self.peek().cloned() {
                    Some(Tok::Number(value)) => {
                        self.bump();
                        Ok(Operand::Number { value: -value, span })
                    }
                    _ => Err(self.unexpected("a number after `-`")),
                }
            }
            Some(Tok::Str(value)) => {
                self.bump();
                Ok(Operand::Str { value, span })
            }
            Some(Tok::Ident(name)) => {
                self.bump();
                if name == "sys" && self.peek() == Some(&Tok::Dot) {
                    self.bump();
                    let (attr, attr_span) = self.ident("a system attribute")?;
                    return match attr.as_str() {
                        "type" => Ok(Operand::SysType { span }),
                        "rank" => Ok(Operand::SysRank { span }),
                        _ => Err(ParseError::syntax(
                            attr_span,
                            format!("unknown system attribute `sys.{attr}` (expected sys.type or sys.rank)"),
                        )),
                    };
                }
                Ok(Operand::Var { name, span })
            }
            _ => Err(self.unexpected("an operand")),
        }
    }

    fn gate(&mut self) -> Result<GateExpr, ParseError> {
        self.expect(Tok::LBrace, "`{`")?;
        let g = self.gate_or()?;
        self.expect(Tok::RBrace, "`}` closing the condition gate")?;
        Ok(g)
    }

    fn gate_or(&mut self) -> Result<GateExpr, ParseError> {
        let mut lhs = self.gate_and()?;
        while self.peek() == Some(&Tok::OrOr) {
            self.bump();
            let rhs = self.gate_and()?;
            lhs = GateExpr::Or {
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn gate_and(&mut self) -> Result<GateExpr, ParseError> {
        let mut lhs = self.gate_atom()?;
        while self.peek() == Some(&Tok::AndAnd) {
            self.bump();
            let rhs = self.gate_atom()?;
            lhs = GateExpr::And {
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn gate_atom(&mut self) -> Result<GateExpr, ParseError> {
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            let g = self.gate_or()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(g);
        }
        let (name, span) = self.ident("a condition name")?;
        Ok(GateExpr::Cond { name, span })
    }

    fn func_decl(&mut self) -> Result<FuncDecl, ParseError> {
        let (kw, span) = self.ident("jsync or jasync")?;
        let call_kind = if kw == "jsync" { CallKind::Jsync } else { CallKind::Jasync };

        let mut gate = None;
        let mut gate_placement = GatePlacement::BeforeFunction;
        if self.peek() == Some(&Tok::LBrace) {
            gate = Some(self.gate()?);
        }
        let (head, _) = self.ident("`function` or a return type")?;
        let return_type = if head == "function" { None } else { Some(head) };
        if self.peek() == Some(&Tok::LBrace) {
            if gate.is_some() {
                return Err(ParseError::syntax(self.span(), "function has two condition gates"));
            }
            gate = Some(self.gate()?);
            gate_placement = GatePlacement::AfterFunction;
        }
        let (name, _) = self.ident("a function name")?;

        let mut params = Vec::new();
        let mut has_param_list = false;
        if self.peek() == Some(&Tok::LParen) {
            self.bump();
            has_param_list = true;
            while self.peek() != Some(&Tok::RParen) {
                let (first, pspan) = self.ident("a parameter")?;
                let param = if let Some(Tok::Ident(_)) = self.peek() {
                    let (second, _) = self.ident("a parameter name")?;
                    Param {
                        name: second,
                        ty: Some(first),
                        span: pspan,
                    }
                } else {
                    Param {
                        name: first,
                        ty: None,
                        span: pspan,
                    }
                };
                params.push(param);
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.bump();
                    }
                    Some(Tok::RParen) => {}
                    _ => return Err(self.unexpected("`,` or `)`")),
                }
            }
            self.bump();
        }

        let body = self.block_text()?;
        Ok(FuncDecl {
            name,
            call_kind,
            gate,
            gate_placement,
            return_type,
            params,
            has_param_list,
            body,
            span,
        })
    }

    /// Consumes a balanced `{ ... }` and returns the trimmed inner text.
    fn block_text(&mut self) -> Result<String, ParseError> {
        let open = self.expect(Tok::LBrace, "`{` starting the function body")?;
        let mut depth = 1usize;
        loop {
            let Some(t) = self.bump() else {
                return Err(ParseError::syntax(open.span, "unclosed `{`"));
            };
            match t.tok {
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(self.src[open.end..t.start].trim().to_string());
                    }
                }
                _ => {}
            }
        }
    }

    /// A top-level statement or function in the host language, kept verbatim.
    fn opaque_item(&mut self) -> Result<OpaqueItem, ParseError> {
        let first = self.toks[self.pos].clone();
        let mut depth = 0usize;
        let mut last_end = first.end;
        while let Some(t) = self.bump() {
            last_end = t.end;
            match t.tok {
                Tok::LBrace => depth += 1,
                Tok::RBrace => {
                    if depth == 0 {
                        return Err(ParseError::syntax(t.span, "unmatched `}`"));
                    }
                    depth -= 1;
                    if depth == 0 {
                        if self.peek() == Some(&Tok::Semi) {
                            last_end = self.bump().unwrap().end;
                        }
                        break;
                    }
                }
                Tok::Semi if depth == 0 => break,
                _ => {}
            }
        }
        if depth > 0 {
            return Err(ParseError::syntax(first.span, "unclosed `{`"));
        }
        Ok(OpaqueItem {
            text: self.src[first.start..last_end].to_string(),
            span: first.span,
        })
    }
}
