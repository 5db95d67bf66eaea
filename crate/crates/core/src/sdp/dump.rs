//! Plain-text dump of an LMI problem for reproduction in other solvers.
//!
//! ```text
//! sdp <n_vars> <n_blocks>
//! objective <c_1> ... <c_n>
//! block <k> <dim> <n_terms>
//! F <i> followed by <dim> rows of <dim> entries (row-major), i = 0 is the constant
//! ```
//!
//! Congruence blocks are expanded into dense coefficient matrices; only
//! nonzero coefficients are written. Numbers use 17 significant digits.

use std::io::{BufRead, Write};

use super::{Block, RMat, SdpProblem};
use crate::error::{Error, Result};

/// Dense `(F_k0, [(i, F_ki)])` for every block.
pub fn dense_blocks(p: &SdpProblem) -> Vec<(RMat, Vec<(usize, RMat)>)> {
    p.blocks
        .iter()
        .map(|b| match b {
            Block::Dense { constant, coeffs } => (constant.clone(), coeffs.clone()),
            Block::Congruence { map, factor, sign, constant } => {
                let m = &p.maps[*map];
                let ft = factor.transpose();
                let c0 = &ft * &m.constant * factor * *sign + constant;
                let coeffs = m
                    .basis
                    .iter()
                    .enumerate()
                    .filter(|(_, g)| !g.entries.is_empty())
                    .map(|(i, g)| (i, &ft * g.to_dense(m.dim) * factor * *sign))
                    .filter(|(_, f)| f.amax() > 0.0)
                    .collect();
                (c0, coeffs)
            }
        })
        .collect()
}

fn write_matrix(w: &mut impl Write, m: &RMat) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        writeln!(w, "{}", row.join(" "))?;
    }
    Ok(())
}

pub fn write_dump(p: &SdpProblem, w: &mut impl Write) -> Result<()> {
    writeln!(w, "sdp {} {}", p.n_vars, p.blocks.len())?;
    let obj: Vec<String> = p.objective.iter().map(|v| format!("{v:.16e}")).collect();
    writeln!(w, "objective {}", obj.join(" "))?;
    for (k, (c0, coeffs)) in dense_blocks(p).iter().enumerate() {
        writeln!(w, "block {k} {} {}", c0.nrows(), coeffs.len() + 1)?;
        writeln!(w, "F 0")?;
        write_matrix(w, c0)?;
        for (i, f) in coeffs {
            writeln!(w, "F {}", i + 1)?;
            write_matrix(w, f)?;
        }
    }
    Ok(())
}

pub fn dump_to_string(p: &SdpProblem) -> Result<String> {
    let mut buf = Vec::new();
    write_dump(p, &mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Parse(e.to_string()))
}

/// Reads a dump back as a problem with dense blocks only.
pub fn read_dump(r: impl BufRead) -> Result<SdpProblem> {
    let mut tokens: Vec<String> = Vec::new();
    for line in r.lines() {
        tokens.extend(line?.split_whitespace().map(str::to_owned));
    }
    let mut it = tokens.into_iter();
    let mut next = |what: &str| it.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
    fn num<T: std::str::FromStr>(s: String) -> Result<T> {
        s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
    }
    let expect = |got: String, want: &str| {
        if got == want {
            Ok(())
        } else {
            Err(Error::Parse(format!("expected '{want}', found '{got}'")))
        }
    };
    expect(next("header")?, "sdp")?;
    let n: usize = num(next("n_vars")?)?;
    let nb: usize = num(next("n_blocks")?)?;
    expect(next("objective")?, "objective")?;
    let mut objective = Vec::with_capacity(n);
    for _ in 0..n {
        objective.push(num(next("objective entry")?)?);
    }
    let mut p = SdpProblem::new(objective);
    for _ in 0..nb {
        expect(next("block")?, "block")?;
        let _k: usize = num(next("block index")?)?;
        let dim: usize = num(next("block dim")?)?;
        let terms: usize = num(next("term count")?)?;
        let mut constant = RMat::zeros(dim, dim);
        let mut coeffs = Vec::new();
        for _ in 0..terms {
            expect(next("F")?, "F")?;
            let i: usize = num(next("term index")?)?;
            let mut m = RMat::zeros(dim, dim);
            for r in 0..dim {
                for c in 0..dim {
                    m[(r, c)] = num(next("entry")?)?;
                }
            }
            if i == 0 {
                constant = m;
            } else if i <= n {
                coeffs.push((i - 1, m));
            } else {
                return Err(Error::Parse(format!("term index {i} exceeds {n} variables")));
            }
        }
        p.blocks.push(Block::Dense { constant, coeffs });
    }
    p.validate().map_err(Error::Parse)?;
    Ok(p)
}
