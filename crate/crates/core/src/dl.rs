//! Double-level CRS-based code.
//!
//! Cloud `x` owns a Cauchy matrix `T_x` of shape `(k_x + delta_x) x (r_x - delta_x + delta)`
//! partitioned as
//!
//! ```text
//! T_x = [ A_xx | B_x1 .. B_xp ]   (k_x rows; B_xx omitted)
//!       [ U_x  | Z_x          ]   (delta_x rows)
//! ```
//!
//! and the cross blocks of the generator are `A_xy = B_xy U_y`. The codeword
//! of cloud `x` is `[m_x, m_x A_xx + y_x U_x]` with the cross parity
//! `y_x = sum_{y != x} m_y B_yx`.

use serde::{Deserialize, Serialize};

use crate::code::{
    add_into, check_budget, check_len, solver_error, AccessLevel, CloudParams, CloudPoints,
    CodeError, DecodeTrace, Decoded, DistanceMatrix,
};
use crate::gf::{Field, Gf};
use crate::linalg::{solve_erasures, stack_parity, CauchyMatrix, GfMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlParams {
    field: Field,
    clouds: Vec<CloudParams>,
}

impl DlParams {
    pub fn new(field: Field, clouds: Vec<CloudParams>) -> Result<Self, CodeError> {
        if clouds.is_empty() {
            return Err(CodeError::InvalidParams("at least one cloud is required".into()));
        }
        for (x, c) in clouds.iter().enumerate() {
            if c.k == 0 {
                return Err(CodeError::InvalidParams(format!(
                    "cloud {}: k must be positive",
                    x + 1
                )));
            }
            if c.n <= c.k {
                return Err(CodeError::InvalidParams(format!(
                    "cloud {}: n = {} must exceed k = {}",
                    x + 1,
                    c.n,
                    c.k
                )));
            }
            if c.delta >= c.r() {
                return Err(CodeError::InvalidParams(format!(
                    "cloud {}: delta = {} must be below r = {}",
                    x + 1,
                    c.delta,
                    c.r()
                )));
            }
        }
        let params = DlParams { field, clouds };
        if params.delta() == 0 {
            return Err(CodeError::InvalidParams("total delta must be positive".into()));
        }
        let required = params.required_field_size();
        if params.field.order() < required {
            return Err(CodeError::FieldTooSmall { required, available: params.field.order() });
        }
        Ok(params)
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn clouds(&self) -> &[CloudParams] {
        &self.clouds
    }

    pub fn cloud(&self, x: usize) -> &CloudParams {
        &self.clouds[x]
    }

    pub fn p(&self) -> usize {
        self.clouds.len()
    }

    /// Total cross-parity budget `delta = sum delta_x`.
    pub fn delta(&self) -> usize {
        self.clouds.iter().map(|c| c.delta).sum()
    }

    /// `max n_x + delta`.
    pub fn required_field_size(&self) -> usize {
        self.clouds.iter().map(|c| c.n).max().unwrap_or(0) + self.delta()
    }

    /// Shape of `T_x`.
    pub fn t_shape(&self, x: usize) -> (usize, usize) {
        let c = &self.clouds[x];
        (c.k + c.delta, c.r() - c.delta + self.delta())
    }

    /// Local distance `r_x - delta_x + 1`.
    pub fn d1(&self, x: usize) -> usize {
        let c = &self.clouds[x];
        c.r() - c.delta + 1
    }

    /// Global distance `r_x - delta_x + delta + 1`.
    pub fn d2(&self, x: usize) -> usize {
        self.d1(x) + self.delta()
    }

    pub fn distance_matrix(&self) -> DistanceMatrix {
        let p = self.p();
        DistanceMatrix {
            rows: vec![(0..p).map(|x| self.d1(x)).collect(), (0..p).map(|x| self.d2(x)).collect()],
            group_sizes: vec![1; p],
        }
    }

    pub fn total_n(&self) -> usize {
        self.clouds.iter().map(|c| c.n).sum()
    }

    pub fn total_k(&self) -> usize {
        self.clouds.iter().map(|c| c.k).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct DlCloud {
    t: CauchyMatrix,
    a: GfMatrix,
    // b[y] = B_xy; b[x] is an empty k_x x 0 block.
    b: Vec<GfMatrix>,
    u: GfMatrix,
    z: GfMatrix,
    h_local: GfMatrix,
    h_global: GfMatrix,
}

/// Codeword split into per-cloud segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DlCodeword {
    pub segments: Vec<Vec<Gf>>,
}

impl DlCodeword {
    pub fn flatten(&self) -> Vec<Gf> {
        self.segments.concat()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DlCode {
    params: DlParams,
    points: Vec<CloudPoints>,
    clouds: Vec<DlCloud>,
}

impl DlCode {
    /// Builds the code. Without explicit points each cloud takes the first
    /// `u + v` entries of the default point sequence.
    pub fn build(params: DlParams, points: Option<Vec<CloudPoints>>) -> Result<Self, CodeError> {
        let field = params.field().clone();
        let points = match points {
            Some(pts) => {
                check_len("point sets", params.p(), pts.len())?;
                pts
            }
            None => (0..params.p())
                .map(|x| {
                    let (u, v) = params.t_shape(x);
                    CloudPoints::consecutive(&field, u, v)
                })
                .collect(),
        };
        let mut ts = Vec::with_capacity(params.p());
        for (x, pts) in points.iter().enumerate() {
            let (u, v) = params.t_shape(x);
            check_len(&format!("cloud {} row points", x + 1), u, pts.a.len())?;
            check_len(&format!("cloud {} column points", x + 1), v, pts.b.len())?;
            ts.push(CauchyMatrix::new(&field, &pts.a, &pts.b)?);
        }
        Self::from_cauchy(params, ts, points)
    }

    fn from_cauchy(
        params: DlParams,
        ts: Vec<CauchyMatrix>,
        points: Vec<CloudPoints>,
    ) -> Result<Self, CodeError> {
        let p = params.p();
        let field = params.field().clone();
        let mut clouds = Vec::with_capacity(p);
        for (x, t) in ts.into_iter().enumerate() {
            let c = params.cloud(x);
            let (k, r, dx) = (c.k, c.r(), c.delta);
            let m = t.matrix();
            let a = m.block(0, 0, k, r);
            let u = m.block(k, 0, dx, r);
            let mut b = Vec::with_capacity(p);
            let mut col = r;
            for y in 0..p {
                if y == x {
                    b.push(GfMatrix::zeros(&field, k, 0));
                } else {
                    let w = params.cloud(y).delta;
                    b.push(m.block(0, col, k, w));
                    col += w;
                }
            }
            let z = m.block(k, r, dx, m.cols() - r);
            let h_local = GfMatrix::vstack(&[&a, &GfMatrix::identity(&field, r), &u])?.transpose();
            let h_global = stack_parity(&m.block(0, 0, k, m.cols()), r);
            clouds.push(DlCloud { t, a, b, u, z, h_local, h_global });
        }
        Ok(DlCode { params, points, clouds })
    }

    pub fn params(&self) -> &DlParams {
        &self.params
    }

    pub fn field(&self) -> &Field {
        self.params.field()
    }

    pub fn p(&self) -> usize {
        self.params.p()
    }

    pub fn points(&self) -> &[CloudPoints] {
        &self.points
    }

    pub fn t(&self, x: usize) -> &CauchyMatrix {
        &self.clouds[x].t
    }

    /// `A_xx`.
    pub fn a(&self, x: usize) -> &GfMatrix {
        &self.clouds[x].a
    }

    /// `B_xy` for `x != y`.
    pub fn b(&self, x: usize, y: usize) -> &GfMatrix {
        &self.clouds[x].b[y]
    }

    pub fn u(&self, x: usize) -> &GfMatrix {
        &self.clouds[x].u
    }

    pub fn z(&self, x: usize) -> &GfMatrix {
        &self.clouds[x].z
    }

    /// Generator block `A_xy`: `A_xx` on the diagonal, `B_xy U_y` elsewhere.
    pub fn cross_block(&self, x: usize, y: usize) -> GfMatrix {
        if x == y {
            self.a(x).clone()
        } else {
            self.b(x, y).mul_mat(self.u(y)).expect("B_xy has delta_y columns")
        }
    }

    /// `H^L_x = [A_xx ; -I ; U_x]^T`, acting on `[c_x, y_x]`.
    pub fn h_local(&self, x: usize) -> &GfMatrix {
        &self.clouds[x].h_local
    }

    /// `H^G_x = [A_xx | B_x* ; -I 0]^T`.
    pub fn h_global(&self, x: usize) -> &GfMatrix {
        &self.clouds[x].h_global
    }

    /// The full systematic generator matrix.
    pub fn generator(&self) -> GfMatrix {
        let p = self.p();
        let field = self.field();
        let mut g = GfMatrix::zeros(field, self.params.total_k(), self.params.total_n());
        let mut r0 = 0;
        for x in 0..p {
            let kx = self.params.cloud(x).k;
            let mut c0 = 0;
            for y in 0..p {
                let cy = self.params.cloud(y);
                if x == y {
                    g.paste(r0, c0, &GfMatrix::identity(field, kx));
                }
                g.paste(r0, c0 + cy.k, &self.cross_block(x, y));
                c0 += cy.n;
            }
            r0 += kx;
        }
        g
    }

    fn check_cloud(&self, x: usize) -> Result<(), CodeError> {
        if x < self.p() {
            Ok(())
        } else {
            Err(CodeError::UnknownCloud(x))
        }
    }

    /// `y_x = sum_{y != x} m_y B_yx`.
    pub fn cross_parity(&self, x: usize, messages: &[&[Gf]]) -> Result<Vec<Gf>, CodeError> {
        let mut y = vec![Gf::ZERO; self.params.cloud(x).delta];
        for (j, m) in messages.iter().enumerate() {
            if j != x {
                add_into(&mut y, &self.b(j, x).left_mul(m)?);
            }
        }
        Ok(y)
    }

    fn local_parity(&self, x: usize, m: &[Gf], y: &[Gf]) -> Result<Vec<Gf>, CodeError> {
        let mut w = self.a(x).left_mul(m)?;
        add_into(&mut w, &self.u(x).left_mul(y)?);
        Ok(w)
    }

    pub fn encode(&self, messages: &[Vec<Gf>]) -> Result<DlCodeword, CodeError> {
        check_len("message count", self.p(), messages.len())?;
        for (x, m) in messages.iter().enumerate() {
            check_len(&format!("message {}", x + 1), self.params.cloud(x).k, m.len())?;
            if let Some(bad) = m.iter().find(|v| !self.field().contains(**v)) {
                return Err(CodeError::InvalidParams(format!("symbol {bad:?} outside the field")));
            }
        }
        let refs: Vec<&[Gf]> = messages.iter().map(Vec::as_slice).collect();
        let mut segments = Vec::with_capacity(self.p());
        for (x, m) in messages.iter().enumerate() {
            let y = self.cross_parity(x, &refs)?;
            let mut c = m.clone();
            c.extend(self.local_parity(x, m, &y)?);
            segments.push(c);
        }
        Ok(DlCodeword { segments })
    }

    /// Decodes cloud `x` from its own symbols, correcting up to `d1 - 1` erasures.
    pub fn decode_local(&self, x: usize, received: &[Option<Gf>]) -> Result<Decoded, CodeError> {
        self.check_cloud(x)?;
        let c = *self.params.cloud(x);
        check_len(&format!("received word of cloud {}", x + 1), c.n, received.len())?;
        check_budget(AccessLevel::Local, received, self.params.d1(x) - 1)?;
        let mut extended = received.to_vec();
        extended.extend(std::iter::repeat_n(None, c.delta));
        let filled = solve_erasures(self.h_local(x), &extended, &vec![Gf::ZERO; c.r()])
            .map_err(|e| solver_error(AccessLevel::Local, e))?;
        let mut trace = DecodeTrace::new(AccessLevel::Local, format!("H^L_{}", x + 1));
        let solved: Vec<Gf> =
            (0..extended.len()).filter(|&j| extended[j].is_none()).map(|j| filled[j]).collect();
        trace.push("solved", &solved);
        trace.push(format!("y{}", x + 1), &filled[c.n..]);
        let codeword = filled[..c.n].to_vec();
        trace.push("filled", &erased_values(received, &codeword));
        Ok(Decoded { message: codeword[..c.k].to_vec(), codeword, trace })
    }

    /// Recovers `m_x B_xy` for every `y != x` from the decoded codewords of
    /// the other clouds: first `y_y` from `y_y U_y = parity(c_y) - m_y A_yy`,
    /// then the contributions of all other known messages are removed.
    fn outgoing_syndrome(
        &self,
        x: usize,
        others: &[Option<Vec<Gf>>],
        trace: &mut DecodeTrace,
    ) -> Result<Vec<Gf>, CodeError> {
        let p = self.p();
        let msg = |j: usize| -> Result<&[Gf], CodeError> {
            let c = others[j].as_deref().ok_or(CodeError::SiblingsUndecoded(j))?;
            Ok(&c[..self.params.cloud(j).k])
        };
        let mut syndrome = Vec::new();
        for y in (0..p).filter(|&y| y != x) {
            let cy = *self.params.cloud(y);
            let word = others[y].as_deref().ok_or(CodeError::SiblingsUndecoded(y))?;
            let mut rest = word[cy.k..].to_vec();
            add_into(&mut rest, &self.a(y).left_mul(&word[..cy.k])?);
            let y_y = self.u(y).solve_left(&rest).map_err(|e| {
                CodeError::Inconsistent(format!("cross parity of cloud {}: {e}", y + 1))
            })?;
            let mut part = y_y;
            for j in (0..p).filter(|&j| j != x && j != y) {
                add_into(&mut part, &self.b(j, y).left_mul(msg(j)?)?);
            }
            trace.push(format!("m{}B{},{}", x + 1, x + 1, y + 1), &part);
            syndrome.extend(part);
        }
        Ok(syndrome)
    }

    /// Decodes cloud `x` with help from every other cloud's decoded codeword,
    /// correcting up to `d2 - 1` erasures. `others[x]` is ignored.
    pub fn decode_global(
        &self,
        x: usize,
        received: &[Option<Gf>],
        others: &[Option<Vec<Gf>>],
    ) -> Result<Decoded, CodeError> {
        self.check_cloud(x)?;
        let c = *self.params.cloud(x);
        check_len(&format!("received word of cloud {}", x + 1), c.n, received.len())?;
        check_len("decoded cloud list", self.p(), others.len())?;
        let budget = (self.params.d2(x) - 1).min(c.n);
        check_budget(AccessLevel::Global, received, budget)?;
        for (j, o) in others.iter().enumerate() {
            if j == x {
                continue;
            }
            let o = o.as_ref().ok_or(CodeError::SiblingsUndecoded(j))?;
            check_len(&format!("decoded cloud {}", j + 1), self.params.cloud(j).n, o.len())?;
        }
        let mut trace = DecodeTrace::new(AccessLevel::Global, format!("H^G_{}", x + 1));
        let messages: Vec<&[Gf]> = (0..self.p())
            .map(|j| match &others[j] {
                Some(w) if j != x => &w[..self.params.cloud(j).k],
                _ => &[][..],
            })
            .collect();
        let mut y_x = vec![Gf::ZERO; c.delta];
        for (j, m) in messages.iter().enumerate() {
            if j != x {
                add_into(&mut y_x, &self.b(j, x).left_mul(m)?);
            }
        }
        let correction = self.u(x).left_mul(&y_x)?;
        trace.push(format!("y{}U{}", x + 1, x + 1), &correction);
        let syndrome = self.outgoing_syndrome(x, others, &mut trace)?;

        let mut reduced = received.to_vec();
        for (j, s) in reduced[c.k..].iter_mut().enumerate() {
            if let Some(v) = s {
                *v += correction[j];
            }
        }
        let mut target = vec![Gf::ZERO; c.r()];
        target.extend(&syndrome);
        let solved = solve_erasures(self.h_global(x), &reduced, &target)
            .map_err(|e| solver_error(AccessLevel::Global, e))?;
        trace.push("solved", &erased_values(received, &solved));
        let mut codeword = solved;
        for (j, v) in codeword[c.k..].iter_mut().enumerate() {
            *v += correction[j];
        }
        trace.push("filled", &erased_values(received, &codeword));
        Ok(Decoded { message: codeword[..c.k].to_vec(), codeword, trace })
    }
}

pub(crate) fn erased_values(received: &[Option<Gf>], filled: &[Gf]) -> Vec<Gf> {
    received.iter().zip(filled).filter(|(r, _)| r.is_none()).map(|(_, &v)| v).collect()
}
