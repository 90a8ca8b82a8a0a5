//! Test-side expression trees, a minimal printer and a reference evaluator.
#![allow(dead_code)]

/// Test-side expression tree, independent of the library's AST.
#[derive(Debug, Clone)]
pub enum T {
    Num(f64),
    X,
    Y,
    Pi,
    Neg(Box<T>),
    Bin(char, Box<T>, Box<T>),
    Call(&'static str, Vec<T>),
}

pub const UNARY: [&str; 5] = ["sin", "cos", "exp", "sqrt", "abs"];
pub const BINARY: [&str; 2] = ["min", "max"];

fn level(t: &T) -> u8 {
    match t {
        T::Bin('+' | '-', ..) => 1,
        T::Bin('*' | '/', ..) => 2,
        T::Neg(_) => 3,
        T::Bin('^', ..) => 4,
        _ => 5,
    }
}

/// Prints with the fewest parentheses the grammar allows.
pub fn minimal(t: &T) -> String {
    let wrap = |c: &T, need: bool| {
        if need {
            format!("({})", minimal(c))
        } else {
            minimal(c)
        }
    };
    match t {
        T::Num(v) => format!("{v:?}"),
        T::X => "x".into(),
        T::Y => "y".into(),
        T::Pi => "pi".into(),
        T::Neg(c) => format!("-{}", wrap(c, level(c) < 3)),
        T::Bin('^', l, r) => format!("{}^{}", wrap(l, level(l) < 5), wrap(r, level(r) < 3)),
        T::Bin(op, l, r) => {
            let p = level(t);
            format!("{} {op} {}", wrap(l, level(l) < p), wrap(r, level(r) <= p))
        }
        T::Call(name, args) => {
            let a: Vec<String> = args.iter().map(minimal).collect();
            format!("{name}({})", a.join(","))
        }
    }
}

/// Evaluates straight from the source text while parsing it.
struct RefEval<'a> {
    s: &'a [u8],
    pos: usize,
    x: f64,
    y: f64,
}

pub type R = Result<f64, ()>;

impl RefEval<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos] == b' ' {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> u8 {
        self.ws();
        self.s.get(self.pos).copied().unwrap_or(0)
    }

    fn ok(v: f64) -> R {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(())
        }
    }

    fn expr(&mut self) -> R {
        let mut v = self.term()?;
        loop {
            match self.peek() {
                b'+' => {
                    self.pos += 1;
                    let r = self.term()?;
                    v = Self::ok(v + r)?;
                }
                b'-' => {
                    self.pos += 1;
                    let r = self.term()?;
                    v = Self::ok(v - r)?;
                }
                _ => return Ok(v),
            }
        }
    }

    fn term(&mut self) -> R {
        let mut v = self.unary()?;
        loop {
            match self.peek() {
                b'*' => {
                    self.pos += 1;
                    let r = self.unary()?;
                    v = Self::ok(v * r)?;
                }
                b'/' => {
                    self.pos += 1;
                    let r = self.unary()?;
                    if r == 0.0 {
                        return Err(());
                    }
                    v = Self::ok(v / r)?;
                }
                _ => return Ok(v),
            }
        }
    }

    fn unary(&mut self) -> R {
        if self.peek() == b'-' {
            self.pos += 1;
            let v = self.unary()?;
            return Self::ok(-v);
        }
        let base = self.atom()?;
        if self.peek() == b'^' {
            self.pos += 1;
            let e = self.unary()?;
            return Self::ok(base.powf(e));
        }
        Ok(base)
    }

    fn atom(&mut self) -> R {
        let c = self.peek();
        if c == b'(' {
            self.pos += 1;
            let v = self.expr()?;
            assert_eq!(self.peek(), b')');
            self.pos += 1;
            return Ok(v);
        }
        let start = self.pos;
        if c.is_ascii_digit() {
            while self.pos < self.s.len()
                && (self.s[self.pos].is_ascii_digit()
                    || matches!(self.s[self.pos], b'.' | b'e')
                    || (self.s[self.pos] == b'-' && self.s[self.pos - 1] == b'e'))
            {
                self.pos += 1;
            }
            let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
            return Self::ok(text.parse().unwrap());
        }
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap();
        match name {
            "x" => return Ok(self.x),
            "y" => return Ok(self.y),
            "pi" => return Ok(std::f64::consts::PI),
            _ => {}
        }
        assert_eq!(self.peek(), b'(');
        self.pos += 1;
        let a = self.expr()?;
        let b = if self.peek() == b',' {
            self.pos += 1;
            Some(self.expr()?)
        } else {
            None
        };
        assert_eq!(self.peek(), b')');
        self.pos += 1;
        let v = match (name, b) {
            ("sin", None) => a.sin(),
            ("cos", None) => a.cos(),
            ("exp", None) => a.exp(),
            ("abs", None) => a.abs(),
            ("sqrt", None) => {
                if a < 0.0 {
                    return Err(());
                }
                a.sqrt()
            }
            ("min", Some(b)) => a.min(b),
            ("max", Some(b)) => a.max(b),
            _ => panic!("bad call {name}"),
        };
        Self::ok(v)
    }
}

pub fn reference(src: &str, x: f64, y: f64) -> R {
    let mut e = RefEval {
        s: src.as_bytes(),
        pos: 0,
        x,
        y,
    };
    let v = e.expr();
    if v.is_ok() {
        assert_eq!(e.peek(), 0, "reference evaluator left input in {src}");
    }
    v
}

/// Random tree with at most `depth` levels of operators.
pub fn random_tree(rng: &mut impl rand::Rng, depth: u32) -> T {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..5) {
            0 => T::Num(rng.random_range(0u32..1000) as f64 / 8.0),
            1 => T::Num(rng.random_range(1e-3..1e3)),
            2 => T::X,
            3 => T::Y,
            _ => T::Pi,
        };
    }
    let d = depth - 1;
    match rng.random_range(0..4) {
        0 => T::Neg(Box::new(random_tree(rng, d))),
        1 => {
            let op = ['+', '-', '*', '/', '^'][rng.random_range(0..5)];
            T::Bin(op, Box::new(random_tree(rng, d)), Box::new(random_tree(rng, d)))
        }
        2 => {
            let f = UNARY[rng.random_range(0..UNARY.len())];
            T::Call(f, vec![random_tree(rng, d)])
        }
        _ => {
            let f = BINARY[rng.random_range(0..BINARY.len())];
            T::Call(f, vec![random_tree(rng, d), random_tree(rng, d)])
        }
    }
}
